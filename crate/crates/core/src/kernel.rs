//! Scaled distance, kernel families and kernel moment constants.
//!
//! Scale convention: `Λ = diag(a_1..a_d)` holds *linear* scales, so
//! `d(u1, u2) = sqrt(Σ_s (a_s Δu_s)²)`. Under this convention the change of
//! variables `v_r = a_r (u_r - u0_r) / h` maps the weight of a neighbour onto
//! the product `∏ K(v_r)` (exactly for the gaussian radial kernel), which is
//! what the leading-term formulas in [`crate::asymptotics`] assume. Replacing
//! `(Λ, h)` by `(cΛ, ch)` leaves every normalized weight unchanged.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::quadrature::adaptive_simpson;
use crate::types::ScaleMatrix;

/// Half-width of the integration range used for the gaussian; tail mass beyond it is < 1e-18.
const GAUSSIAN_RANGE: f64 = 9.0;
const MOMENT_TOL: f64 = 1e-13;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelFamily {
    #[default]
    Gaussian,
    Epanechnikov,
    Quartic,
}

impl KernelFamily {
    pub const ALL: [KernelFamily; 3] = [
        KernelFamily::Gaussian,
        KernelFamily::Epanechnikov,
        KernelFamily::Quartic,
    ];

    fn slot(self) -> usize {
        match self {
            KernelFamily::Gaussian => 0,
            KernelFamily::Epanechnikov => 1,
            KernelFamily::Quartic => 2,
        }
    }
}

impl fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KernelFamily::Gaussian => "gaussian",
            KernelFamily::Epanechnikov => "epanechnikov",
            KernelFamily::Quartic => "quartic",
        })
    }
}

impl FromStr for KernelFamily {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gaussian" | "normal" => Ok(KernelFamily::Gaussian),
            "epanechnikov" => Ok(KernelFamily::Epanechnikov),
            "quartic" | "biweight" => Ok(KernelFamily::Quartic),
            other => Err(Error::Parse(format!(
                "unknown kernel '{other}' (expected gaussian, epanechnikov or quartic)"
            ))),
        }
    }
}

/// A one-dimensional kernel `K`, symmetric and normalized so that `∫K = 1`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct KernelSpec {
    pub family: KernelFamily,
}

impl KernelSpec {
    pub const fn new(family: KernelFamily) -> Self {
        KernelSpec { family }
    }

    pub const fn gaussian() -> Self {
        KernelSpec::new(KernelFamily::Gaussian)
    }

    pub const fn epanechnikov() -> Self {
        KernelSpec::new(KernelFamily::Epanechnikov)
    }

    pub const fn quartic() -> Self {
        KernelSpec::new(KernelFamily::Quartic)
    }

    /// K(z).
    #[inline]
    pub fn eval(&self, z: f64) -> f64 {
        match self.family {
            KernelFamily::Gaussian => (-0.5 * z * z).exp() / (2.0 * PI).sqrt(),
            KernelFamily::Epanechnikov => {
                if z.abs() <= 1.0 {
                    0.75 * (1.0 - z * z)
                } else {
                    0.0
                }
            }
            KernelFamily::Quartic => {
                if z.abs() <= 1.0 {
                    let t = 1.0 - z * z;
                    15.0 / 16.0 * t * t
                } else {
                    0.0
                }
            }
        }
    }

    /// Half-width of the support, `None` when unbounded.
    pub fn support(&self) -> Option<f64> {
        match self.family {
            KernelFamily::Gaussian => None,
            KernelFamily::Epanechnikov | KernelFamily::Quartic => Some(1.0),
        }
    }

    /// Interval on which the quadrature oracle integrates.
    pub fn integration_radius(&self) -> f64 {
        self.support().unwrap_or(GAUSSIAN_RANGE)
    }
}

impl FromStr for KernelSpec {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(KernelSpec::new(s.parse()?))
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.family.fmt(f)
    }
}

/// Scaled distance `sqrt(Σ_s (a_s (u1_s - u2_s))²)`.
pub fn distance(u1: &[f64], u2: &[f64], scales: &ScaleMatrix) -> Result<f64> {
    check_dim("distance: second location", u1.len(), u2.len())?;
    check_dim("distance: scale matrix", u1.len(), scales.dim())?;
    Ok(scaled_distance_unchecked(u1, u2, scales.scales()))
}

#[inline]
pub(crate) fn scaled_distance_unchecked(u1: &[f64], u2: &[f64], scales: &[f64]) -> f64 {
    u1.iter()
        .zip(u2)
        .zip(scales)
        .map(|((a, b), s)| {
            let t = s * (a - b);
            t * t
        })
        .sum::<f64>()
        .sqrt()
}

/// `K(dist / h) / h`.
pub fn kernel_weight(dist: f64, h: f64, kernel: KernelSpec) -> Result<f64> {
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "bandwidth must be finite and > 0, got {h}"
        )));
    }
    if !(dist >= 0.0) {
        return Err(Error::InvalidParameter(format!("distance must be >= 0, got {dist}")));
    }
    Ok(kernel.eval(dist / h) / h)
}

/// Moment constants of a one-dimensional kernel, all obtained by quadrature.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelMoments {
    /// κ_λ = ∫ z^λ K(z) dz for λ = 0..4.
    pub kappa: [f64; 5],
    /// ∫ K²(z) dz.
    pub kappa_sq_1d: f64,
    /// ∫ z^λ K²(z) dz for λ = 0..2.
    pub kappa_sq_lambda: [f64; 3],
}

impl KernelMoments {
    /// κ_λ.
    pub fn kappa(&self, lambda: usize) -> f64 {
        self.kappa[lambda]
    }

    pub fn kappa2(&self) -> f64 {
        self.kappa[2]
    }

    /// κ = ∫ ∏_r K²(v_r) dv = (∫K²)^d.
    pub fn kappa_d(&self, d: usize) -> f64 {
        self.kappa_sq_1d.powi(d as i32)
    }

    /// ∫ v_s^λ ∏_r K²(v_r) dv.
    pub fn kappa_sq_product(&self, lambda: usize, d: usize) -> f64 {
        self.kappa_sq_lambda[lambda] * self.kappa_sq_1d.powi(d as i32 - 1)
    }
}

/// Computes κ_0..κ_4, ∫K² and ∫z^λK² by adaptive Simpson quadrature.
pub fn kernel_moments(kernel: KernelSpec) -> Result<KernelMoments> {
    let r = kernel.integration_radius();
    let integrate = |g: &dyn Fn(f64) -> f64| -> Result<f64> {
        // Split at 0 so both halves see a smooth integrand for the compact families.
        Ok(adaptive_simpson(g, -r, 0.0, MOMENT_TOL)? + adaptive_simpson(g, 0.0, r, MOMENT_TOL)?)
    };
    let mut kappa = [0.0; 5];
    for (lambda, slot) in kappa.iter_mut().enumerate() {
        *slot = integrate(&|z: f64| z.powi(lambda as i32) * kernel.eval(z))?;
    }
    let kappa_sq_1d = integrate(&|z: f64| kernel.eval(z).powi(2))?;
    let mut kappa_sq_lambda = [0.0; 3];
    for (lambda, slot) in kappa_sq_lambda.iter_mut().enumerate() {
        *slot = integrate(&|z: f64| z.powi(lambda as i32) * kernel.eval(z).powi(2))?;
    }
    Ok(KernelMoments {
        kappa,
        kappa_sq_1d,
        kappa_sq_lambda,
    })
}

static MOMENT_CACHE: [OnceLock<KernelMoments>; 3] = [OnceLock::new(), OnceLock::new(), OnceLock::new()];

/// [`kernel_moments`] memoized per family.
pub fn cached_moments(kernel: KernelSpec) -> Result<KernelMoments> {
    let cell = &MOMENT_CACHE[kernel.family.slot()];
    if let Some(m) = cell.get() {
        return Ok(*m);
    }
    let m = kernel_moments(kernel)?;
    Ok(*cell.get_or_init(|| m))
}

/// Γ(n/2) for a positive integer n.
fn gamma_half(n: usize) -> f64 {
    let (mut x, mut g) = if n.is_multiple_of(2) {
        (1.0, 1.0)
    } else {
        (0.5, PI.sqrt())
    };
    while 2.0 * x < n as f64 {
        g *= x;
        x += 1.0;
    }
    g
}

/// Surface area of the unit sphere in R^d.
fn unit_sphere_area(d: usize) -> f64 {
    2.0 * PI.powf(d as f64 / 2.0) / gamma_half(d)
}

/// The d-dimensional radial kernel `K_d(t) = K(t) / c_d`, with `c_d`
/// chosen by radial quadrature so that `∫_{R^d} K_d(|v|) dv = 1`.
///
/// For the gaussian family `K_d(|v|) = ∏_r K(v_r)` exactly.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RadialKernel {
    kernel: KernelSpec,
    dim: usize,
    norm: f64,
    axis2: f64,
    cross22: f64,
    sq0: f64,
    sq2: f64,
}

impl RadialKernel {
    pub fn new(kernel: KernelSpec, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("radial kernel needs d >= 1".into()));
        }
        let r = kernel.integration_radius();
        let area = unit_sphere_area(dim);
        let radial = |power: i32, squared: bool| {
            adaptive_simpson(
                |t| {
                    let k = kernel.eval(t);
                    (if squared { k * k } else { k }) * t.powi(dim as i32 - 1 + power)
                },
                0.0,
                r,
                MOMENT_TOL,
            )
            .map(|v| area * v)
        };
        let norm = radial(0, false)?;
        let df = dim as f64;
        Ok(RadialKernel {
            kernel,
            dim,
            norm,
            axis2: radial(2, false)? / (norm * df),
            cross22: radial(4, false)? / (norm * df * (df + 2.0)),
            sq0: radial(0, true)? / (norm * norm),
            sq2: radial(2, true)? / (norm * norm * df),
        })
    }

    /// `∫ v_s^λ K_d(|v|) dv` for λ = 0..4.
    pub fn axis_moment(&self, lambda: usize) -> f64 {
        match lambda {
            0 => 1.0,
            2 => self.axis2,
            4 => 3.0 * self.cross22,
            _ => 0.0,
        }
    }

    /// `∫ v_s² v_t² K_d(|v|) dv` for s ≠ t.
    pub fn cross_moment22(&self) -> f64 {
        self.cross22
    }

    /// `∫ v_s v_t v_q v_r K_d(|v|) dv` for arbitrary axis indices.
    pub fn fourth_moment(&self, s: usize, t: usize, q: usize, r: usize) -> f64 {
        let mut idx = [s, t, q, r];
        idx.sort_unstable();
        if idx[0] == idx[3] {
            3.0 * self.cross22
        } else if idx[0] == idx[1] && idx[2] == idx[3] {
            self.cross22
        } else {
            0.0
        }
    }

    /// `∫ v_s^λ K_d²(|v|) dv` for λ = 0..2.
    pub fn squared_axis_moment(&self, lambda: usize) -> f64 {
        match lambda {
            0 => self.sq0,
            2 => self.sq2,
            _ => 0.0,
        }
    }

    pub fn kernel(&self) -> KernelSpec {
        self.kernel
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// c_d = ∫_{R^d} K(|v|) dv.
    pub fn normalization(&self) -> f64 {
        self.norm
    }

    #[inline]
    pub fn eval(&self, t: f64) -> f64 {
        self.kernel.eval(t) / self.norm
    }

    /// `K_d(dist / h) / h`.
    #[inline]
    pub fn weight(&self, dist: f64, h: f64) -> f64 {
        self.eval(dist / h) / h
    }
}
