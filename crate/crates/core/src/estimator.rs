//! Geographically weighted locally linear estimation (GWLE).
//!
//! At a target `u0` the estimator minimizes
//! `Σ_i w_i (y_i - X_i β - ((U_i - u0) ⊗ X_i) b)²` with distance-kernel
//! weights `w_i = K(d(U_i, u0)/h)/h`, and returns the first `p` coordinates
//! of the solution together with the slope block.
//!
//! The weighted normal equations are normalized by `Ñ` and row-equilibrated
//! by `G = diag(h^{-(d-1)} I_p, h^{-(d+1)} I_{dp})` before a column-pivoted
//! QR solve. Row scaling does not change the solution of a nonsingular
//! system, so the result is the plain `(X̃ᵀWX̃)⁻¹X̃ᵀWy` whenever that is well
//! posed.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{check_dim, Error, Result};
use crate::kernel::scaled_distance_unchecked;
use crate::types::{ConditionFlag, Dataset, FitConfig, LocalFit, Record};

/// Weights below this are treated as exactly zero.
pub const WEIGHT_FLOOR: f64 = 1e-300;
/// Condition estimate above which the local system counts as degenerate.
pub const CONDITION_LIMIT: f64 = 1e12;

/// `(x, (u - u0) ⊗ x)`, length `(d+1)p`.
#[derive(Clone, Debug, PartialEq)]
pub struct AugmentedRow(Vec<f64>);

impl AugmentedRow {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

pub fn build_augmented_row(x: &[f64], u: &[f64], u0: &[f64]) -> Result<AugmentedRow> {
    check_dim("augmented row: target location", u.len(), u0.len())?;
    let p = x.len();
    let mut row = vec![0.0; (u.len() + 1) * p];
    fill_augmented(&mut row, x, u, u0);
    Ok(AugmentedRow(row))
}

#[inline]
fn fill_augmented(buf: &mut [f64], x: &[f64], u: &[f64], u0: &[f64]) {
    let p = x.len();
    buf[..p].copy_from_slice(x);
    for (s, (us, u0s)) in u.iter().zip(u0).enumerate() {
        let du = us - u0s;
        for (slot, xk) in buf[(s + 1) * p..(s + 2) * p].iter_mut().zip(x) {
            *slot = du * xk;
        }
    }
}

/// Accumulated weighted normal equations around one target.
#[derive(Clone, Debug)]
pub(crate) struct LocalSystem {
    pub gram: DMatrix<f64>,
    pub rhs: DVector<f64>,
    pub sum_w: f64,
    pub sum_w2: f64,
    pub positive: usize,
}

impl LocalSystem {
    fn effective_n(&self) -> f64 {
        if self.sum_w2 > 0.0 {
            self.sum_w * self.sum_w / self.sum_w2
        } else {
            0.0
        }
    }
}

/// Builds `X̃ᵀWX̃` and `X̃ᵀWy`. `skip` leaves one record out.
pub(crate) fn accumulate<W>(
    records: &[Record],
    y: &[f64],
    u0: &[f64],
    p: usize,
    weight: W,
    skip: Option<usize>,
) -> Result<LocalSystem>
where
    W: Fn(&[f64]) -> f64,
{
    let d = u0.len();
    let k = (d + 1) * p;
    let mut gram = vec![0.0; k * k];
    let mut rhs = vec![0.0; k];
    let mut row = vec![0.0; k];
    let (mut sum_w, mut sum_w2, mut positive) = (0.0, 0.0, 0usize);
    for (i, (rec, &yi)) in records.iter().zip(y).enumerate() {
        let obs = &rec.obs;
        check_dim("covariate row", p, obs.x.len())?;
        check_dim("location", d, obs.u.len())?;
        if skip == Some(i) {
            continue;
        }
        let w = weight(&obs.u);
        if !(w >= WEIGHT_FLOOR) {
            if w.is_nan() {
                return Err(Error::InvalidParameter(format!("non-finite weight for record {i}")));
            }
            continue;
        }
        positive += 1;
        sum_w += w;
        sum_w2 += w * w;
        fill_augmented(&mut row, &obs.x, &obs.u, u0);
        for a in 0..k {
            let wa = w * row[a];
            if wa == 0.0 {
                continue;
            }
            rhs[a] += wa * yi;
            let line = &mut gram[a * k..(a + 1) * k];
            for b in a..k {
                line[b] += wa * row[b];
            }
        }
    }
    let mut gram = DMatrix::from_row_slice(k, k, &gram);
    for a in 0..k {
        for b in 0..a {
            gram[(a, b)] = gram[(b, a)];
        }
    }
    Ok(LocalSystem {
        gram,
        rhs: DVector::from_vec(rhs),
        sum_w,
        sum_w2,
        positive,
    })
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct SolveSettings {
    /// Bandwidth used for the G equilibration.
    pub g_bandwidth: f64,
    pub ridge: f64,
    pub min_neighbors: usize,
    /// Ñ used for the `Ñ⁻¹` normalization.
    pub n_total: usize,
}

/// 2-norm condition number of the Jacobi-equilibrated matrix.
pub(crate) fn equilibrated_condition(m: &DMatrix<f64>) -> f64 {
    let k = m.nrows();
    let mut scale = Vec::with_capacity(k);
    for a in 0..k {
        let v = m[(a, a)];
        if !(v > 0.0 && v.is_finite()) {
            return f64::INFINITY;
        }
        scale.push(1.0 / v.sqrt());
    }
    let e = DMatrix::from_fn(k, k, |a, b| m[(a, b)] * scale[a] * scale[b]);
    let sv = e.singular_values();
    let max = sv.max();
    let min = sv.min();
    if !(min > 0.0) || !max.is_finite() {
        f64::INFINITY
    } else {
        max / min
    }
}

pub(crate) fn solve_local(sys: LocalSystem, u0: &[f64], p: usize, settings: SolveSettings) -> Result<LocalFit> {
    let d = u0.len();
    let k = (d + 1) * p;
    let required = k.max(settings.min_neighbors);
    let effective_n = sys.effective_n();
    if sys.positive == 0 {
        return Err(Error::InsufficientSupport {
            location: u0.to_vec(),
            effective_n,
            positive: 0,
            required,
        });
    }

    let inv_n = 1.0 / settings.n_total.max(1) as f64;
    let mut gram = sys.gram * inv_n;
    let mut rhs = sys.rhs * inv_n;

    let short = sys.positive < required;
    let mut flag = ConditionFlag::WellPosed;
    if short || equilibrated_condition(&gram) > CONDITION_LIMIT {
        if settings.ridge <= 0.0 {
            return Err(if short {
                Error::InsufficientSupport {
                    location: u0.to_vec(),
                    effective_n,
                    positive: sys.positive,
                    required,
                }
            } else {
                Error::SingularFit { location: u0.to_vec() }
            });
        }
        let slope_mean = (p..k).map(|a| gram[(a, a)]).sum::<f64>() / (k - p) as f64;
        let base = if slope_mean > 0.0 {
            slope_mean
        } else {
            (0..k).map(|a| gram[(a, a)]).sum::<f64>() / k as f64
        };
        let lambda = settings.ridge * base;
        for a in p..k {
            gram[(a, a)] += lambda;
        }
        flag = ConditionFlag::RidgeApplied;
        if equilibrated_condition(&gram) > CONDITION_LIMIT {
            return Err(Error::SingularFit { location: u0.to_vec() });
        }
    }

    let h = settings.g_bandwidth;
    let top = h.powi(-(d as i32 - 1));
    let bottom = h.powi(-(d as i32 + 1));
    for a in 0..k {
        let g = if a < p { top } else { bottom };
        gram.row_mut(a).scale_mut(g);
        rhs[a] *= g;
    }
    let solution = gram
        .col_piv_qr()
        .solve(&rhs)
        .filter(|z| z.iter().all(|v| v.is_finite()))
        .ok_or_else(|| Error::SingularFit { location: u0.to_vec() })?;

    let beta_hat = solution.rows(0, p).iter().copied().collect();
    let gradient_hat = (0..d)
        .map(|s| solution.rows((s + 1) * p, p).iter().copied().collect())
        .collect();
    Ok(LocalFit {
        location: u0.to_vec(),
        beta_hat,
        gradient_hat,
        effective_n,
        condition_flag: flag,
    })
}

pub(crate) fn gwle_weight<'a>(config: &'a FitConfig, u0: &'a [f64]) -> impl Fn(&[f64]) -> f64 + 'a {
    let h = config.bandwidth;
    let scales = config.scales.scales();
    let kernel = config.kernel;
    move |u: &[f64]| kernel.eval(scaled_distance_unchecked(u, u0, scales) / h) / h
}

fn check_target(dataset: &Dataset, u0: &[f64], config: &FitConfig) -> Result<()> {
    config.validate()?;
    check_dim("target location", dataset.d(), u0.len())?;
    check_dim("scale matrix", dataset.d(), config.scales.dim())?;
    if u0.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "target location must be finite, got {u0:?}"
        )));
    }
    Ok(())
}

fn settings(dataset: &Dataset, config: &FitConfig) -> SolveSettings {
    SolveSettings {
        g_bandwidth: config.bandwidth,
        ridge: config.ridge_fallback,
        min_neighbors: config.min_effective_neighbors,
        n_total: dataset.len(),
    }
}

/// β̂(u0) and the slope block at one target.
pub fn fit_local(dataset: &Dataset, u0: &[f64], config: &FitConfig) -> Result<LocalFit> {
    let y = dataset.responses();
    fit_local_with_response(dataset, &y, u0, config)
}

/// [`fit_local`] on the design of `dataset` with responses `y`.
pub fn fit_local_with_response(dataset: &Dataset, y: &[f64], u0: &[f64], config: &FitConfig) -> Result<LocalFit> {
    fit_with_skip(dataset, y, u0, config, None)
}

pub(crate) fn fit_with_skip(
    dataset: &Dataset,
    y: &[f64],
    u0: &[f64],
    config: &FitConfig,
    skip: Option<usize>,
) -> Result<LocalFit> {
    check_target(dataset, u0, config)?;
    check_dim("responses", dataset.len(), y.len())?;
    let sys = accumulate(dataset.records(), y, u0, dataset.p(), gwle_weight(config, u0), skip)?;
    solve_local(sys, u0, dataset.p(), settings(dataset, config))
}

/// Outcome of one target in [`fit_surface`].
#[derive(Debug)]
pub struct SurfacePoint {
    pub target: usize,
    pub result: Result<LocalFit>,
}

/// Fits every target; a failing target does not stop the others.
/// Output order follows `targets`.
pub fn fit_surface(dataset: &Dataset, targets: &[Vec<f64>], config: &FitConfig) -> Result<Vec<SurfacePoint>> {
    if targets.is_empty() {
        return Err(Error::InvalidParameter("no target locations".into()));
    }
    config.validate()?;
    let y = dataset.responses();
    Ok(targets
        .par_iter()
        .enumerate()
        .map(|(target, u0)| SurfacePoint {
            target,
            result: fit_local_with_response(dataset, &y, u0, config),
        })
        .collect())
}

/// Fitted mean `x · β̂` at the fit's own location.
pub fn predict(fit: &LocalFit, x: &[f64]) -> Result<f64> {
    check_dim("prediction covariates", fit.beta_hat.len(), x.len())?;
    Ok(x.iter().zip(&fit.beta_hat).map(|(a, b)| a * b).sum())
}
