//! Multidimensional-kernel locally weighted linear estimation (MLWE).
//!
//! Same augmented design and solver as the GWLE fit; the weight is the
//! product kernel `∏_s K((u_s - u0_s)/h_s)/h_s` with a diagonal bandwidth
//! matrix.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::estimator::{accumulate, solve_local, SolveSettings};
use crate::kernel::KernelSpec;
use crate::types::{Dataset, LocalFit};

/// Diagonal bandwidth matrix `H = diag(h_1..h_d)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct BandwidthMatrix(Vec<f64>);

impl BandwidthMatrix {
    pub fn new(h: Vec<f64>) -> Result<Self> {
        if h.is_empty() {
            return Err(Error::InvalidParameter("bandwidth matrix needs d >= 1 entries".into()));
        }
        if let Some(bad) = h.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidParameter(format!(
                "bandwidths must be finite and > 0, got {bad}"
            )));
        }
        Ok(Self(h))
    }

    pub fn uniform(h: f64, d: usize) -> Result<Self> {
        Self::new(vec![h; d])
    }

    pub fn bandwidths(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// `|H| = ∏ h_s`.
    pub fn det(&self) -> f64 {
        self.0.iter().product()
    }

    /// Geometric mean of the bandwidths.
    pub fn geometric_mean(&self) -> f64 {
        self.det().powf(1.0 / self.0.len() as f64)
    }
}

impl TryFrom<Vec<f64>> for BandwidthMatrix {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<BandwidthMatrix> for Vec<f64> {
    fn from(h: BandwidthMatrix) -> Self {
        h.0
    }
}

/// Settings for [`mlwe_fit_local`] beyond the bandwidth matrix.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlweOptions {
    pub ridge_fallback: f64,
    pub min_effective_neighbors: usize,
}

impl Default for MlweOptions {
    fn default() -> Self {
        Self {
            ridge_fallback: 0.0,
            min_effective_neighbors: 0,
        }
    }
}

/// Product-kernel weight at `u`.
pub fn product_weight(u: &[f64], u0: &[f64], h: &BandwidthMatrix, kernel: KernelSpec) -> Result<f64> {
    check_dim("location", h.dim(), u.len())?;
    check_dim("target location", h.dim(), u0.len())?;
    Ok(product_weight_unchecked(u, u0, h.bandwidths(), kernel))
}

#[inline]
fn product_weight_unchecked(u: &[f64], u0: &[f64], h: &[f64], kernel: KernelSpec) -> f64 {
    u.iter()
        .zip(u0)
        .zip(h)
        .map(|((a, b), hs)| kernel.eval((a - b) / hs) / hs)
        .product()
}

pub fn mlwe_fit_local(dataset: &Dataset, u0: &[f64], h: &BandwidthMatrix, kernel: KernelSpec) -> Result<LocalFit> {
    mlwe_fit_local_with(dataset, &dataset.responses(), u0, h, kernel, MlweOptions::default())
}

/// [`mlwe_fit_local`] with explicit responses and degenerate-design options.
pub fn mlwe_fit_local_with(
    dataset: &Dataset,
    y: &[f64],
    u0: &[f64],
    h: &BandwidthMatrix,
    kernel: KernelSpec,
    options: MlweOptions,
) -> Result<LocalFit> {
    check_dim("target location", dataset.d(), u0.len())?;
    check_dim("bandwidth matrix", dataset.d(), h.dim())?;
    check_dim("responses", dataset.len(), y.len())?;
    if !(options.ridge_fallback >= 0.0 && options.ridge_fallback.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "ridge_fallback must be finite and >= 0, got {}",
            options.ridge_fallback
        )));
    }
    let hs = h.bandwidths();
    let sys = accumulate(
        dataset.records(),
        y,
        u0,
        dataset.p(),
        |u: &[f64]| product_weight_unchecked(u, u0, hs, kernel),
        None,
    )?;
    solve_local(
        sys,
        u0,
        dataset.p(),
        SolveSettings {
            g_bandwidth: h.geometric_mean(),
            ridge: options.ridge_fallback,
            min_neighbors: options.min_effective_neighbors,
            n_total: dataset.len(),
        },
    )
}
