//! Leading-order bias and variance of the GWLE fit, the block moment
//! matrices behind them, and finite-sample moment statistics whose limits
//! those blocks are.
//!
//! Block convention: every `A` block below is the matrix inside the common
//! `det(Λ)⁻¹` factor, i.e. `A¹ = det(Λ)⁻¹ [[A11, A12], [A21, A22]]` with
//! `A21` stored as a `dp×p` matrix.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::kernel::{cached_moments, scaled_distance_unchecked, KernelSpec, RadialKernel};
use crate::truth::TruthModel;
use crate::types::{Dataset, ScaleMatrix};

fn invert(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    m.clone()
        .try_inverse()
        .filter(|inv| inv.iter().all(|v| v.is_finite()))
        .ok_or_else(|| Error::SingularMatrix(what.to_string()))
}

fn check_inputs(truth: &dyn TruthModel, u0: &[f64], h: f64, scales: &ScaleMatrix) -> Result<()> {
    check_dim("target location", truth.d(), u0.len())?;
    check_dim("scale matrix", truth.d(), scales.dim())?;
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "bandwidth must be finite and > 0, got {h}"
        )));
    }
    Ok(())
}

/// Limits of the four blocks of `Ñ⁻¹ Σ K_h G X̃ᵢᵀX̃ᵢ` at `u0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockMoments {
    pub det_lambda: f64,
    /// `Ω f`, p×p.
    pub a11: DMatrix<f64>,
    /// `h² κ₂ [a_s⁻² (Ω′_s f + Ω f′_s)]_s`, p×dp.
    pub a12: DMatrix<f64>,
    /// `κ₂ [a_s⁻² (Ω′_s f + Ω f′_s)]_s` stacked, dp×p.
    pub a21: DMatrix<f64>,
    /// `blockdiag(a_s⁻² κ₂ Ω f)`, dp×dp.
    pub a22: DMatrix<f64>,
}

impl BlockMoments {
    pub fn p(&self) -> usize {
        self.a11.nrows()
    }

    /// `det(Λ)⁻¹ [[A11, A12], [A21, A22]]`.
    pub fn assembled(&self) -> DMatrix<f64> {
        let p = self.p();
        let k = self.a11.nrows() + self.a22.nrows();
        let mut m = DMatrix::zeros(k, k);
        m.view_mut((0, 0), (p, p)).copy_from(&self.a11);
        m.view_mut((0, p), (p, k - p)).copy_from(&self.a12);
        m.view_mut((p, 0), (k - p, p)).copy_from(&self.a21);
        m.view_mut((p, p), (k - p, k - p)).copy_from(&self.a22);
        m / self.det_lambda
    }

    /// Inverse of [`Self::assembled`] by the partitioned formula with
    /// `Ξ = (A22 - A21 A11⁻¹ A12)⁻¹`.
    pub fn block_inverse(&self) -> Result<DMatrix<f64>> {
        self.partitioned_inverse(&self.a12)
    }

    /// Leading-order inverse: the O(h²) block `A12` is dropped.
    pub fn leading_inverse(&self) -> Result<DMatrix<f64>> {
        self.partitioned_inverse(&DMatrix::zeros(self.a12.nrows(), self.a12.ncols()))
    }

    fn partitioned_inverse(&self, a12: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let p = self.p();
        let dp = self.a22.nrows();
        let a11_inv = invert(&self.a11, "A11 = Ω f")?;
        let xi = invert(&(&self.a22 - &self.a21 * &a11_inv * a12), "Schur complement of A11")?;
        let top_left = &a11_inv * (DMatrix::identity(p, p) + a12 * &xi * &self.a21 * &a11_inv);
        let top_right = -(&a11_inv * a12 * &xi);
        let bottom_left = -(&xi * &self.a21 * &a11_inv);
        let mut q = DMatrix::zeros(p + dp, p + dp);
        q.view_mut((0, 0), (p, p)).copy_from(&top_left);
        q.view_mut((0, p), (p, dp)).copy_from(&top_right);
        q.view_mut((p, 0), (dp, p)).copy_from(&bottom_left);
        q.view_mut((p, p), (dp, dp)).copy_from(&xi);
        Ok(q * self.det_lambda)
    }
}

pub fn block_moments(
    truth: &dyn TruthModel,
    u0: &[f64],
    h: f64,
    scales: &ScaleMatrix,
    kernel: KernelSpec,
) -> Result<BlockMoments> {
    check_inputs(truth, u0, h, scales)?;
    let kappa2 = cached_moments(kernel)?.kappa2();
    let (d, p) = (truth.d(), truth.p());
    let f = truth.density(u0);
    let df = truth.density_gradient(u0);
    let omega = truth.omega(u0);
    let a = scales.scales();
    let a11 = &omega * f;
    let mut a12 = DMatrix::zeros(p, d * p);
    let mut a21 = DMatrix::zeros(d * p, p);
    let mut a22 = DMatrix::zeros(d * p, d * p);
    for s in 0..d {
        let inv_a2 = a[s].powi(-2);
        let drift = (truth.omega_gradient(u0, s) * f + &omega * df[s]) * (kappa2 * inv_a2);
        a12.view_mut((0, s * p), (p, p)).copy_from(&(&drift * (h * h)));
        a21.view_mut((s * p, 0), (p, p)).copy_from(&drift);
        a22.view_mut((s * p, s * p), (p, p))
            .copy_from(&(&a11 * (kappa2 * inv_a2)));
    }
    Ok(BlockMoments {
        det_lambda: scales.det(),
        a11,
        a12,
        a21,
        a22,
    })
}

/// Block matrices, their inverse and `φ(u0)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoreticalMoments {
    pub blocks: BlockMoments,
    /// Partitioned inverse including `A12`.
    pub q: DMatrix<f64>,
    /// Leading-order inverse (`A12` dropped).
    pub q_lead: DMatrix<f64>,
    /// `φ = Q̄11 Q̄11ᵀ` with `Q̄ = Q_lead / det(Λ)`; depends on u0 only.
    pub phi: DMatrix<f64>,
}

pub fn theoretical_moments(
    truth: &dyn TruthModel,
    u0: &[f64],
    h: f64,
    scales: &ScaleMatrix,
    kernel: KernelSpec,
) -> Result<TheoreticalMoments> {
    let blocks = block_moments(truth, u0, h, scales, kernel)?;
    let q = blocks.block_inverse()?;
    let q_lead = blocks.leading_inverse()?;
    let p = blocks.p();
    let q11 = q_lead.view((0, 0), (p, p)) / blocks.det_lambda;
    let phi = &q11 * q11.transpose();
    Ok(TheoreticalMoments { blocks, q, q_lead, phi })
}

/// `½ κ₂ h² f Ω Σ_s a_s⁻² β_ss⁽²⁾` (inside `det(Λ)⁻¹`), length p.
fn bias_driver(truth: &dyn TruthModel, u0: &[f64], h: f64, scales: &ScaleMatrix, kappa2: f64) -> Vec<f64> {
    let curvature = curvature_sum(truth, u0, scales);
    let v = truth.omega(u0) * nalgebra::DVector::from_vec(curvature) * (0.5 * kappa2 * h * h * truth.density(u0));
    v.iter().copied().collect()
}

/// `Σ_s a_s⁻² β_ss⁽²⁾(u0)`.
fn curvature_sum(truth: &dyn TruthModel, u0: &[f64], scales: &ScaleMatrix) -> Vec<f64> {
    let mut out = vec![0.0; truth.p()];
    for (s, a) in scales.scales().iter().enumerate() {
        let inv_a2 = a.powi(-2);
        for (o, b) in out.iter_mut().zip(truth.beta_second(u0, s)) {
            *o += inv_a2 * b;
        }
    }
    out
}

/// Leading conditional bias by assembly: first p rows of `Q · A²`, where
/// `A²` has top block `det(Λ)⁻¹ · ½κ₂h² f Ω Σ a_s⁻² β_ss⁽²⁾` and zero slope block.
pub fn theoretical_bias(
    truth: &dyn TruthModel,
    u0: &[f64],
    h: f64,
    scales: &ScaleMatrix,
    kernel: KernelSpec,
) -> Result<Vec<f64>> {
    let tm = theoretical_moments(truth, u0, h, scales, kernel)?;
    let kappa2 = cached_moments(kernel)?.kappa2();
    let p = truth.p();
    let top = bias_driver(truth, u0, h, scales, kappa2);
    let q11 = tm.q_lead.view((0, 0), (p, p));
    Ok((0..p)
        .map(|r| (0..p).map(|c| q11[(r, c)] * top[c]).sum::<f64>() / tm.blocks.det_lambda)
        .collect())
}

/// Leading conditional bias in the closed form
/// `(κ₂h²/2) Ω⁻¹(u0) Σ_s a_s⁻² β_ss⁽²⁾(u0)`.
pub fn theoretical_bias_closed_form(
    truth: &dyn TruthModel,
    u0: &[f64],
    h: f64,
    scales: &ScaleMatrix,
    kernel: KernelSpec,
) -> Result<Vec<f64>> {
    check_inputs(truth, u0, h, scales)?;
    let kappa2 = cached_moments(kernel)?.kappa2();
    let omega_inv = invert(&truth.omega(u0), "Ω(u0)")?;
    let c = nalgebra::DVector::from_vec(curvature_sum(truth, u0, scales));
    Ok((omega_inv * c * (0.5 * kappa2 * h * h)).iter().copied().collect())
}

/// Leading conditional variance
/// `(det(Λ) Ñ h^{d-1})⁻¹ φ κ σ f Ω`, p×p and symmetric.
pub fn theoretical_variance(
    truth: &dyn TruthModel,
    u0: &[f64],
    h: f64,
    scales: &ScaleMatrix,
    kernel: KernelSpec,
    n_total: usize,
) -> Result<DMatrix<f64>> {
    if n_total == 0 {
        return Err(Error::InvalidParameter("Ñ must be >= 1".into()));
    }
    let tm = theoretical_moments(truth, u0, h, scales, kernel)?;
    let d = truth.d();
    let kappa = cached_moments(kernel)?.kappa_d(d);
    let inner = variance_kernel(truth, u0, &tm, kappa);
    let factor = 1.0 / (scales.det() * n_total as f64 * h.powi(d as i32 - 1));
    Ok(inner * factor)
}

/// `φ κ σ f Ω` evaluated as `Q̄11 (κσfΩ) Q̄11ᵀ`, which equals the product
/// because `Q̄11 = (Ωf)⁻¹` commutes with Ω; symmetrized against rounding.
fn variance_kernel(truth: &dyn TruthModel, u0: &[f64], tm: &TheoreticalMoments, kappa: f64) -> DMatrix<f64> {
    let p = truth.p();
    let q11 = tm.q_lead.view((0, 0), (p, p)) / tm.blocks.det_lambda;
    let middle = truth.omega(u0) * (kappa * truth.sigma(u0) * truth.density(u0));
    let v = &q11 * middle * q11.transpose();
    (&v + v.transpose()) * 0.5
}

/// `diag(φ κ σ f Ω)` at u0; used by the plug-in bandwidth.
pub(crate) fn variance_diagonal(truth: &dyn TruthModel, u0: &[f64], kernel: KernelSpec) -> Result<Vec<f64>> {
    let d = truth.d();
    let unit = ScaleMatrix::identity(d);
    let tm = theoretical_moments(truth, u0, 1.0, &unit, kernel)?;
    let kappa = cached_moments(kernel)?.kappa_d(d);
    let v = variance_kernel(truth, u0, &tm, kappa);
    Ok((0..truth.p()).map(|k| v[(k, k)]).collect())
}

/// `Ω⁻¹(u0) β_ss⁽²⁾(u0)`.
pub(crate) fn curvature_direction(truth: &dyn TruthModel, u0: &[f64], s: usize) -> Result<Vec<f64>> {
    let omega_inv = invert(&truth.omega(u0), "Ω(u0)")?;
    let b = nalgebra::DVector::from_vec(truth.beta_second(u0, s));
    Ok((omega_inv * b).iter().copied().collect())
}

/// Which finite-sample moment statistic to compute.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Lemma {
    /// `Ñ⁻¹ Σ K_h h^{-l} (U_is - u0_s)^λ XᵢᵀXᵢ`.
    L1,
    /// `Ñ⁻¹ Σ K_h h^{-l} (U_is - u0_s)^λ XᵢᵀXᵢ Π(Uᵢ, u0)`, a p-vector.
    L2,
    /// `(Ñ h^{2l})⁻¹ Σ K_h² (U_is - u0_s)^λ σ(Uᵢ) XᵢᵀXᵢ`.
    L3,
}

/// Lemma selector plus its indices; `s` is zero-based.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LemmaQuery {
    pub lemma: Lemma,
    pub lambda: u32,
    pub s: usize,
    pub l: i32,
}

impl LemmaQuery {
    pub fn new(lemma: Lemma, lambda: u32, s: usize, l: i32) -> Self {
        Self { lemma, lambda, s, l }
    }

    fn validate(&self, d: usize) -> Result<()> {
        let di = d as i32;
        let (lambdas, ls): (&[u32], &[i32]) = match self.lemma {
            Lemma::L1 => (&[0, 1, 2], &[di - 1, di + 1]),
            Lemma::L2 => (&[0, 1], &[di - 1, di + 1]),
            Lemma::L3 => (&[0, 1, 2], &[di - 1, di, di + 1]),
        };
        if self.s >= d || !lambdas.contains(&self.lambda) || !ls.contains(&self.l) {
            return Err(Error::InvalidParameter(format!(
                "invalid {:?} query: lambda = {}, s = {}, l = {} (d = {d}; allowed lambda {lambdas:?}, l {ls:?})",
                self.lemma, self.lambda, self.s, self.l
            )));
        }
        Ok(())
    }
}

/// `Π(U, u0)`: p-vector of Hessian quadratic forms.
fn pi_vector(truth: &dyn TruthModel, du: &[f64], u0: &[f64]) -> Vec<f64> {
    (0..truth.p())
        .map(|k| {
            let hk = truth.beta_hessian(u0, k);
            let mut q = 0.0;
            for (s, a) in du.iter().enumerate() {
                for (t, b) in du.iter().enumerate() {
                    q += a * hk[(s, t)] * b;
                }
            }
            q
        })
        .collect()
}

/// The empirical moment statistic of `query` on `dataset`. `truth` supplies
/// σ and the Hessians for L2 and L3. Weights use the d-dimensional radial
/// kernel normalized to integrate to one.
pub fn lemma_moment_stat(
    dataset: &Dataset,
    truth: Option<&dyn TruthModel>,
    u0: &[f64],
    h: f64,
    scales: &ScaleMatrix,
    kernel: KernelSpec,
    query: LemmaQuery,
) -> Result<DMatrix<f64>> {
    let d = dataset.d();
    let p = dataset.p();
    check_dim("target location", d, u0.len())?;
    check_dim("scale matrix", d, scales.dim())?;
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "bandwidth must be finite and > 0, got {h}"
        )));
    }
    query.validate(d)?;
    let truth = match (query.lemma, truth) {
        (Lemma::L1, t) => t,
        (_, Some(t)) => {
            check_dim("truth covariates", p, t.p())?;
            Some(t)
        }
        (_, None) => {
            return Err(Error::InvalidParameter(format!(
                "{:?} needs a truth model",
                query.lemma
            )))
        }
    };
    let radial = RadialKernel::new(kernel, d)?;
    let cols = if query.lemma == Lemma::L2 { 1 } else { p };
    let mut acc = DMatrix::zeros(p, cols);
    let mut du = vec![0.0; d];
    for rec in dataset.records() {
        let obs = &rec.obs;
        let w = radial.weight(scaled_distance_unchecked(&obs.u, u0, scales.scales()), h);
        if w == 0.0 {
            continue;
        }
        for (slot, (a, b)) in du.iter_mut().zip(obs.u.iter().zip(u0)) {
            *slot = a - b;
        }
        let lead = du[query.s].powi(query.lambda as i32);
        match query.lemma {
            Lemma::L1 => add_outer(&mut acc, &obs.x, w * lead),
            Lemma::L3 => {
                let sigma = truth.expect("checked").sigma(&obs.u);
                add_outer(&mut acc, &obs.x, w * w * lead * sigma)
            }
            Lemma::L2 => {
                let pi = pi_vector(truth.expect("checked"), &du, u0);
                let xpi: f64 = obs.x.iter().zip(&pi).map(|(a, b)| a * b).sum();
                for (r, xr) in obs.x.iter().enumerate() {
                    acc[(r, 0)] += w * lead * xr * xpi;
                }
            }
        }
    }
    let scale_pow = match query.lemma {
        Lemma::L3 => -2 * query.l,
        _ => -query.l,
    };
    Ok(acc * (h.powi(scale_pow) / dataset.len() as f64))
}

fn add_outer(acc: &mut DMatrix<f64>, x: &[f64], c: f64) {
    for (r, xr) in x.iter().enumerate() {
        let cx = c * xr;
        for (col, xc) in x.iter().enumerate() {
            acc[(r, col)] += cx * xc;
        }
    }
}

/// Theoretical leading term of [`lemma_moment_stat`].
///
/// * L1: `(det a_s^λ)⁻¹ h^{λ+d-l-1} m_λ Ωf + (det a_s^{λ+1})⁻¹ h^{λ+d-l} m_{λ+1} (Ω′_s f + Ω f′_s)`.
/// * L2, λ = 0: `det⁻¹ h^{d+1-l} m₂ f Ω Σ_t a_t⁻² β_tt⁽²⁾`.
/// * L2, λ = 1: the fourth-moment term `det⁻¹ h^{d+3-l} a_s⁻¹ Σ_r π_r ∘ (Ω′_r f + Ω f′_r)`,
///   the λ = 1 term of order `h^{d+2-l}` being zero by symmetry.
/// * L3: `(det a_s^λ)⁻¹ h^{λ+d-2l-2} ∫ v_s^λ K_d² · σ f Ω`.
///
/// `m_λ` are the axis moments of the radial kernel; they coincide with the
/// one-dimensional κ_λ for the gaussian.
pub fn lemma_moment_limit(
    truth: &dyn TruthModel,
    u0: &[f64],
    h: f64,
    scales: &ScaleMatrix,
    kernel: KernelSpec,
    query: LemmaQuery,
) -> Result<DMatrix<f64>> {
    check_inputs(truth, u0, h, scales)?;
    let d = truth.d();
    query.validate(d)?;
    let radial = RadialKernel::new(kernel, d)?;
    let a = scales.scales();
    let det = scales.det();
    let (s, lambda, l) = (query.s, query.lambda as i32, query.l);
    let di = d as i32;
    let f = truth.density(u0);
    let df = truth.density_gradient(u0);
    let omega = truth.omega(u0);
    let drift = |r: usize| truth.omega_gradient(u0, r) * f + &omega * df[r];
    match query.lemma {
        Lemma::L1 => {
            let first = &omega
                * (f * radial.axis_moment(lambda as usize) * h.powi(lambda + di - l - 1) / (det * a[s].powi(lambda)));
            let second = drift(s)
                * (radial.axis_moment(lambda as usize + 1) * h.powi(lambda + di - l) / (det * a[s].powi(lambda + 1)));
            Ok(first + second)
        }
        Lemma::L2 if lambda == 0 => {
            let c = nalgebra::DVector::from_vec(curvature_sum(truth, u0, scales));
            let v = &omega * c * (f * radial.axis_moment(2) * h.powi(di + 1 - l) / det);
            Ok(DMatrix::from_column_slice(truth.p(), 1, v.as_slice()))
        }
        Lemma::L2 => {
            let p = truth.p();
            let mut out = DMatrix::zeros(p, 1);
            for r in 0..d {
                let pi_r: Vec<f64> = (0..p)
                    .map(|k| {
                        let hk = truth.beta_hessian(u0, k);
                        let mut acc = 0.0;
                        for t in 0..d {
                            for q in 0..d {
                                let m = radial.fourth_moment(s, t, q, r);
                                if m != 0.0 {
                                    acc += m * hk[(t, q)] / (a[t] * a[q] * a[r]);
                                }
                            }
                        }
                        acc
                    })
                    .collect();
                out += drift(r) * nalgebra::DVector::from_vec(pi_r);
            }
            Ok(out * (h.powi(di + 3 - l) / (det * a[s])))
        }
        Lemma::L3 => Ok(&omega
            * (truth.sigma(u0) * f * radial.squared_axis_moment(lambda as usize) * h.powi(lambda + di - 2 * l - 2)
                / (det * a[s].powi(lambda)))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::truth::{CovariateLaw, LocationLaw, Monomial, Polynomial, ScenarioTruth, SigmaLaw};

    fn quadratic_truth() -> ScenarioTruth {
        ScenarioTruth::new(
            vec![Polynomial(vec![
                Monomial {
                    coef: 1.0,
                    powers: vec![2, 0],
                },
                Monomial {
                    coef: 1.0,
                    powers: vec![0, 2],
                },
            ])],
            SigmaLaw::Constant { value: 1.0 },
            LocationLaw::unit_uniform(2),
            CovariateLaw::intercept_only(),
        )
        .unwrap()
    }

    #[test]
    fn intercept_only_bias_is_two_h_squared() {
        let t = quadratic_truth();
        let k = KernelSpec::gaussian();
        let a = ScaleMatrix::identity(2);
        for h in [0.1, 0.3] {
            let b = theoretical_bias(&t, &[0.5, 0.5], h, &a, k).unwrap();
            assert!((b[0] - 2.0 * h * h).abs() < 1e-12);
            let c = theoretical_bias_closed_form(&t, &[0.5, 0.5], h, &a, k).unwrap();
            assert!((c[0] - b[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn unit_square_variance_constant() {
        let t = quadratic_truth();
        let k = KernelSpec::gaussian();
        let v = theoretical_variance(&t, &[0.5, 0.5], 0.2, &ScaleMatrix::identity(2), k, 400).unwrap();
        let kappa = 1.0 / (4.0 * std::f64::consts::PI);
        assert!((v[(0, 0)] - kappa / (400.0 * 0.2)).abs() < 1e-14);
    }

    #[test]
    fn lemma_query_ranges() {
        assert!(LemmaQuery::new(Lemma::L1, 3, 0, 1).validate(2).is_err());
        assert!(LemmaQuery::new(Lemma::L1, 2, 0, 2).validate(2).is_err());
        assert!(LemmaQuery::new(Lemma::L2, 2, 0, 1).validate(2).is_err());
        assert!(LemmaQuery::new(Lemma::L3, 1, 1, 2).validate(2).is_ok());
        assert!(LemmaQuery::new(Lemma::L1, 0, 2, 1).validate(2).is_err());
    }
}
