//! Known data-generating functions: coefficient surfaces, noise variance,
//! location density and covariate moments.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, Continuous, ContinuousCDF};

use crate::error::{Error, Result};

/// Oracle for the theoretical formulas. Evaluators must be safe to call
/// concurrently.
pub trait TruthModel: Send + Sync {
    fn p(&self) -> usize;
    fn d(&self) -> usize;
    /// β(u), length p.
    fn beta(&self, u: &[f64]) -> Vec<f64>;
    /// `out[s][k] = ∂β_k/∂u_s`.
    fn beta_gradient(&self, u: &[f64]) -> Vec<Vec<f64>>;
    /// d×d Hessian of β_k.
    fn beta_hessian(&self, u: &[f64], k: usize) -> DMatrix<f64>;
    fn sigma(&self, u: &[f64]) -> f64;
    fn density(&self, u: &[f64]) -> f64;
    fn density_gradient(&self, u: &[f64]) -> Vec<f64>;
    /// E(X | U = u), length p.
    fn gamma(&self, u: &[f64]) -> Vec<f64>;
    /// E(XᵀX | U = u), p×p.
    fn omega(&self, u: &[f64]) -> DMatrix<f64>;
    /// ∂Ω/∂u_s.
    fn omega_gradient(&self, u: &[f64], s: usize) -> DMatrix<f64>;

    /// `β_ss⁽²⁾(u)`: p-vector of second derivatives in direction s.
    fn beta_second(&self, u: &[f64], s: usize) -> Vec<f64> {
        (0..self.p()).map(|k| self.beta_hessian(u, k)[(s, s)]).collect()
    }
}

/// `coef · ∏ u_s^{powers_s}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub coef: f64,
    pub powers: Vec<u32>,
}

impl Monomial {
    fn eval(&self, u: &[f64]) -> f64 {
        self.coef
            * u.iter()
                .zip(&self.powers)
                .map(|(x, &e)| x.powi(e as i32))
                .product::<f64>()
    }

    /// Applies ∂/∂u_s to the monomial.
    fn derivative(&self, s: usize) -> Option<Monomial> {
        let e = self.powers[s];
        if e == 0 {
            return None;
        }
        let mut powers = self.powers.clone();
        powers[s] -= 1;
        Some(Monomial {
            coef: self.coef * e as f64,
            powers,
        })
    }
}

/// Sum of monomials in u.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Polynomial(pub Vec<Monomial>);

impl Polynomial {
    pub fn constant(c: f64, d: usize) -> Self {
        Self(vec![Monomial {
            coef: c,
            powers: vec![0; d],
        }])
    }

    pub fn eval(&self, u: &[f64]) -> f64 {
        self.0.iter().map(|m| m.eval(u)).sum()
    }

    pub fn derivative(&self, s: usize) -> Polynomial {
        Polynomial(self.0.iter().filter_map(|m| m.derivative(s)).collect())
    }

    pub fn degree(&self) -> u32 {
        self.0
            .iter()
            .filter(|m| m.coef != 0.0)
            .map(|m| m.powers.iter().sum())
            .max()
            .unwrap_or(0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SigmaLaw {
    Constant {
        value: f64,
    },
    /// `base + curvature · Σ (u_s - center_s)²`.
    Quadratic {
        base: f64,
        curvature: f64,
        center: Vec<f64>,
    },
}

impl SigmaLaw {
    pub fn eval(&self, u: &[f64]) -> f64 {
        match self {
            SigmaLaw::Constant { value } => *value,
            SigmaLaw::Quadratic {
                base,
                curvature,
                center,
            } => base + curvature * u.iter().zip(center).map(|(a, c)| (a - c) * (a - c)).sum::<f64>(),
        }
    }

    /// Returns a copy with σ multiplied by `c`.
    pub fn scaled(&self, c: f64) -> SigmaLaw {
        match self {
            SigmaLaw::Constant { value } => SigmaLaw::Constant { value: value * c },
            SigmaLaw::Quadratic {
                base,
                curvature,
                center,
            } => SigmaLaw::Quadratic {
                base: base * c,
                curvature: curvature * c,
                center: center.clone(),
            },
        }
    }
}

/// Marginal law of the location vector; coordinates are independent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LocationLaw {
    Uniform {
        lo: Vec<f64>,
        hi: Vec<f64>,
    },
    /// Coordinate s is `lo_s + (hi_s - lo_s)·Beta(alpha_s, beta_s)`.
    ProductBeta {
        alpha: Vec<f64>,
        beta: Vec<f64>,
        lo: Vec<f64>,
        hi: Vec<f64>,
    },
}

impl LocationLaw {
    pub fn unit_uniform(d: usize) -> Self {
        LocationLaw::Uniform {
            lo: vec![0.0; d],
            hi: vec![1.0; d],
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            LocationLaw::Uniform { lo, .. } | LocationLaw::ProductBeta { lo, .. } => lo.len(),
        }
    }

    pub fn bounds(&self) -> (&[f64], &[f64]) {
        match self {
            LocationLaw::Uniform { lo, hi } | LocationLaw::ProductBeta { lo, hi, .. } => (lo, hi),
        }
    }

    fn validate(&self) -> Result<()> {
        let (lo, hi) = self.bounds();
        if lo.is_empty() || lo.len() != hi.len() {
            return Err(Error::InvalidScenario(
                "location law needs equal-length nonempty lo/hi".into(),
            ));
        }
        if lo
            .iter()
            .zip(hi)
            .any(|(a, b)| !(a.is_finite() && b.is_finite() && a < b))
        {
            return Err(Error::InvalidScenario("location law needs lo < hi, finite".into()));
        }
        if let LocationLaw::ProductBeta { alpha, beta, .. } = self {
            if alpha.len() != lo.len() || beta.len() != lo.len() {
                return Err(Error::InvalidScenario(
                    "product beta law needs one (alpha, beta) pair per dimension".into(),
                ));
            }
            if alpha.iter().chain(beta).any(|v| !(*v > 0.0 && v.is_finite())) {
                return Err(Error::InvalidScenario("beta shape parameters must be > 0".into()));
            }
        }
        Ok(())
    }

    fn beta_marginal(alpha: f64, beta: f64) -> Beta {
        Beta::new(alpha, beta).expect("shape parameters validated")
    }

    /// Quantile of coordinate s at probability q ∈ (0, 1).
    pub fn quantile(&self, s: usize, q: f64) -> f64 {
        match self {
            LocationLaw::Uniform { lo, hi } => lo[s] + (hi[s] - lo[s]) * q,
            LocationLaw::ProductBeta { alpha, beta, lo, hi } => {
                let z = Self::beta_marginal(alpha[s], beta[s]).inverse_cdf(q);
                lo[s] + (hi[s] - lo[s]) * z
            }
        }
    }

    fn marginal(&self, s: usize, x: f64) -> (f64, f64) {
        let (lo, hi) = self.bounds();
        let width = hi[s] - lo[s];
        if x < lo[s] || x > hi[s] {
            return (0.0, 0.0);
        }
        match self {
            LocationLaw::Uniform { .. } => (1.0 / width, 0.0),
            LocationLaw::ProductBeta { alpha, beta, .. } => {
                let z = (x - lo[s]) / width;
                let pdf = Self::beta_marginal(alpha[s], beta[s]).pdf(z) / width;
                let dlog = (alpha[s] - 1.0) / z - (beta[s] - 1.0) / (1.0 - z);
                (pdf, if pdf > 0.0 { pdf * dlog / width } else { 0.0 })
            }
        }
    }

    pub fn density(&self, u: &[f64]) -> f64 {
        (0..u.len()).map(|s| self.marginal(s, u[s]).0).product()
    }

    pub fn density_gradient(&self, u: &[f64]) -> Vec<f64> {
        let parts: Vec<(f64, f64)> = (0..u.len()).map(|s| self.marginal(s, u[s])).collect();
        (0..u.len())
            .map(|s| {
                parts
                    .iter()
                    .enumerate()
                    .map(|(t, (f, df))| if t == s { *df } else { *f })
                    .product()
            })
            .collect()
    }
}

/// Covariates independent of U: optional intercept column, then gaussian
/// columns with the given means and standard deviations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovariateLaw {
    pub intercept: bool,
    #[serde(default)]
    pub means: Vec<f64>,
    #[serde(default)]
    pub sds: Vec<f64>,
}

impl CovariateLaw {
    pub fn intercept_only() -> Self {
        Self {
            intercept: true,
            means: vec![],
            sds: vec![],
        }
    }

    pub fn p(&self) -> usize {
        usize::from(self.intercept) + self.means.len()
    }

    fn validate(&self) -> Result<()> {
        if self.means.len() != self.sds.len() {
            return Err(Error::InvalidScenario(
                "covariate means and sds differ in length".into(),
            ));
        }
        if self.p() == 0 {
            return Err(Error::InvalidScenario("at least one covariate is required".into()));
        }
        if self.sds.iter().any(|v| !(*v >= 0.0 && v.is_finite())) || self.means.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidScenario(
                "covariate moments must be finite, sds >= 0".into(),
            ));
        }
        Ok(())
    }

    pub fn gamma(&self) -> Vec<f64> {
        let mut g = Vec::with_capacity(self.p());
        if self.intercept {
            g.push(1.0);
        }
        g.extend_from_slice(&self.means);
        g
    }

    pub fn omega(&self) -> DMatrix<f64> {
        let g = self.gamma();
        let p = g.len();
        let off = usize::from(self.intercept);
        DMatrix::from_fn(p, p, |a, b| {
            let mut v = g[a] * g[b];
            if a == b && a >= off {
                v += self.sds[a - off].powi(2);
            }
            v
        })
    }
}

/// Truth configured from a scenario file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioTruth {
    /// One polynomial per covariate.
    pub beta: Vec<Polynomial>,
    pub sigma: SigmaLaw,
    pub location: LocationLaw,
    pub covariates: CovariateLaw,
}

impl ScenarioTruth {
    pub fn new(
        beta: Vec<Polynomial>,
        sigma: SigmaLaw,
        location: LocationLaw,
        covariates: CovariateLaw,
    ) -> Result<Self> {
        let t = Self {
            beta,
            sigma,
            location,
            covariates,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        self.location.validate()?;
        self.covariates.validate()?;
        let d = self.location.dim();
        if self.beta.len() != self.covariates.p() {
            return Err(Error::InvalidScenario(format!(
                "{} coefficient functions for {} covariates",
                self.beta.len(),
                self.covariates.p()
            )));
        }
        for poly in &self.beta {
            if poly.0.iter().any(|m| m.powers.len() != d || !m.coef.is_finite()) {
                return Err(Error::InvalidScenario(format!(
                    "every monomial needs {d} powers and a finite coefficient"
                )));
            }
        }
        match &self.sigma {
            SigmaLaw::Constant { value } if !(*value >= 0.0 && value.is_finite()) => {
                return Err(Error::InvalidScenario("sigma must be finite and >= 0".into()))
            }
            SigmaLaw::Quadratic {
                base,
                curvature,
                center,
            } if center.len() != d || !(*base >= 0.0) || !(*curvature >= 0.0) => {
                return Err(Error::InvalidScenario(
                    "quadratic sigma needs base, curvature >= 0 and a d-dimensional center".into(),
                ));
            }
            _ => {}
        }
        Ok(())
    }

    /// Returns a copy with σ multiplied by `c`.
    pub fn with_sigma_scaled(&self, c: f64) -> Self {
        Self {
            sigma: self.sigma.scaled(c),
            ..self.clone()
        }
    }
}

impl TruthModel for ScenarioTruth {
    fn p(&self) -> usize {
        self.beta.len()
    }

    fn d(&self) -> usize {
        self.location.dim()
    }

    fn beta(&self, u: &[f64]) -> Vec<f64> {
        self.beta.iter().map(|b| b.eval(u)).collect()
    }

    fn beta_gradient(&self, u: &[f64]) -> Vec<Vec<f64>> {
        (0..self.d())
            .map(|s| self.beta.iter().map(|b| b.derivative(s).eval(u)).collect())
            .collect()
    }

    fn beta_hessian(&self, u: &[f64], k: usize) -> DMatrix<f64> {
        let d = self.d();
        let b = &self.beta[k];
        DMatrix::from_fn(d, d, |s, t| b.derivative(s).derivative(t).eval(u))
    }

    fn sigma(&self, u: &[f64]) -> f64 {
        self.sigma.eval(u)
    }

    fn density(&self, u: &[f64]) -> f64 {
        self.location.density(u)
    }

    fn density_gradient(&self, u: &[f64]) -> Vec<f64> {
        self.location.density_gradient(u)
    }

    fn gamma(&self, _u: &[f64]) -> Vec<f64> {
        self.covariates.gamma()
    }

    fn omega(&self, _u: &[f64]) -> DMatrix<f64> {
        self.covariates.omega()
    }

    fn omega_gradient(&self, _u: &[f64], _s: usize) -> DMatrix<f64> {
        let p = self.p();
        DMatrix::zeros(p, p)
    }
}
