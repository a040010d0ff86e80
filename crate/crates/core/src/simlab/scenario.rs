use std::fmt;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::mlwe::BandwidthMatrix;
use crate::truth::{ScenarioTruth, TruthModel};
use crate::types::{FitConfig, ScaleMatrix};

/// Dependence structure of a generated lattice field.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldLaw {
    #[default]
    #[serde(alias = "iid_uniform", alias = "iid_gaussian")]
    Iid,
    /// Moving average of iid innovations over the infinite-norm ball of
    /// radius ⌊m/2⌋.
    MaSmoothed,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    Gwle,
    Mlwe,
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EstimatorKind::Gwle => "gwle",
            EstimatorKind::Mlwe => "mlwe",
        })
    }
}

/// Bandwidth rate regimes for the GWLE/MLWE comparison:
/// `h_gwle = h0 (Ñ/n0)^{-gwle_rate}`, `h_mlwe,s = (h0/a_s)(Ñ/n0)^{-mlwe_rate}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareSettings {
    pub h0: f64,
    pub n0: usize,
    /// Defaults to 1/(d+2).
    #[serde(default)]
    pub gwle_rate: Option<f64>,
    /// Defaults to 1/(d+4).
    #[serde(default)]
    pub mlwe_rate: Option<f64>,
}

impl CompareSettings {
    pub fn rates(&self, d: usize) -> (f64, f64) {
        let d = d as f64;
        (
            self.gwle_rate.unwrap_or(1.0 / (d + 2.0)),
            self.mlwe_rate.unwrap_or(1.0 / (d + 4.0)),
        )
    }
}

fn default_estimators() -> Vec<EstimatorKind> {
    vec![EstimatorKind::Gwle]
}

/// A complete Monte Carlo experiment description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationScenario {
    #[serde(default)]
    pub name: String,
    pub truth: ScenarioTruth,
    /// Lattice shapes of the Ñ sweep.
    pub n_list: Vec<Vec<usize>>,
    #[serde(default)]
    pub dependence_range: usize,
    #[serde(default)]
    pub location_field: FieldLaw,
    #[serde(default)]
    pub covariate_field: FieldLaw,
    pub seed: u64,
    pub replicas: usize,
    pub h_list: Vec<f64>,
    #[serde(default = "default_estimators")]
    pub estimators: Vec<EstimatorKind>,
    /// Λ for the GWLE fit.
    pub scales: Vec<f64>,
    /// MLWE uses `h_s = h / mlwe_scales_s`; defaults to `scales`.
    #[serde(default)]
    pub mlwe_scales: Option<Vec<f64>>,
    #[serde(default)]
    pub kernel: KernelSpec,
    pub eval_points: Vec<Vec<f64>>,
    #[serde(default)]
    pub ridge_fallback: f64,
    #[serde(default)]
    pub compare: Option<CompareSettings>,
}

impl SimulationScenario {
    pub fn from_json(text: &str) -> Result<Self> {
        let s: Self = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn d(&self) -> usize {
        self.truth.d()
    }

    pub fn p(&self) -> usize {
        self.truth.p()
    }

    pub fn n_total(&self, which_n: usize) -> usize {
        self.n_list[which_n].iter().product()
    }

    pub fn scale_matrix(&self) -> ScaleMatrix {
        ScaleMatrix::new(self.scales.clone()).expect("validated")
    }

    pub fn gwle_config(&self, h: f64) -> Result<FitConfig> {
        FitConfig::new(self.kernel, self.scale_matrix(), h)?.with_ridge(self.ridge_fallback)
    }

    /// `H = diag(h / a_s)` with the MLWE scales.
    pub fn mlwe_bandwidths(&self, h: f64) -> Result<BandwidthMatrix> {
        let a = self.mlwe_scales.as_ref().unwrap_or(&self.scales);
        BandwidthMatrix::new(a.iter().map(|a| h / a).collect())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidScenario(m));
        self.truth.validate()?;
        let d = self.d();
        if self.n_list.is_empty() {
            return bad("n_list is empty".into());
        }
        let m_dims = self.n_list[0].len();
        if m_dims == 0 || self.n_list.iter().any(|n| n.len() != m_dims || n.contains(&0)) {
            return bad("every lattice in n_list needs the same M >= 1 and positive sizes".into());
        }
        let k = self.p() * (d + 1);
        if let Some(n) = self.n_list.iter().find(|n| n.iter().product::<usize>() < k) {
            return bad(format!("lattice {n:?} has fewer sites than the {k} local parameters"));
        }
        if self.replicas == 0 {
            return bad("replicas must be >= 1".into());
        }
        if self.h_list.is_empty() || self.h_list.iter().any(|h| !(*h > 0.0 && h.is_finite())) {
            return bad("h_list must be nonempty with finite positive entries".into());
        }
        if self.estimators.is_empty() {
            return bad("no estimators selected".into());
        }
        if self.scales.len() != d || ScaleMatrix::new(self.scales.clone()).is_err() {
            return bad(format!("scales must hold {d} positive values"));
        }
        if let Some(a) = &self.mlwe_scales {
            if a.len() != d || a.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                return bad(format!("mlwe_scales must hold {d} positive values"));
            }
        }
        if !(self.ridge_fallback >= 0.0 && self.ridge_fallback.is_finite()) {
            return bad("ridge_fallback must be >= 0".into());
        }
        if self.eval_points.is_empty() || self.eval_points.iter().any(|u| u.len() != d) {
            return bad(format!("eval_points must be nonempty, each of length {d}"));
        }
        if let Some(c) = &self.compare {
            if !(c.h0 > 0.0) || c.n0 == 0 {
                return bad("compare needs h0 > 0 and n0 >= 1".into());
            }
        }
        self.check_interior()
    }

    /// Every eval point keeps a margin of `max_s h/a_s` (largest h) to the
    /// location support boundary.
    fn check_interior(&self) -> Result<()> {
        let h_max = self.h_list.iter().copied().fold(0.0, f64::max);
        let a_min = self.scales.iter().copied().fold(f64::INFINITY, f64::min);
        let margin = h_max / a_min;
        let (lo, hi) = self.truth.location.bounds();
        for u in &self.eval_points {
            for s in 0..u.len() {
                if u[s] - lo[s] < margin || hi[s] - u[s] < margin {
                    return Err(Error::InvalidScenario(format!(
                        "eval point {u:?} is within {margin} of the support boundary"
                    )));
                }
            }
        }
        Ok(())
    }
}

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent RNG stream for a tag path under the master seed.
pub(crate) fn stream(seed: u64, tags: &[u64]) -> ChaCha8Rng {
    let mut state = splitmix(seed);
    for &t in tags {
        state = splitmix(state ^ splitmix(t.wrapping_add(GOLDEN)));
    }
    ChaCha8Rng::seed_from_u64(state)
}

pub(crate) const DESIGN_STREAM: u64 = 1;
pub(crate) const NOISE_STREAM: u64 = 2;
pub(crate) const IMSE_STREAM: u64 = 3;
