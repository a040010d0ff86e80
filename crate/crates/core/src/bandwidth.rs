//! Bandwidth selection: the asymptotic plug-in rule and leave-one-out
//! cross-validation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asymptotics::{curvature_direction, variance_diagonal};
use crate::error::{check_dim, Error, Result};
use crate::estimator::{fit_with_skip, predict};
use crate::kernel::KernelSpec;
use crate::truth::TruthModel;
use crate::types::{lattice_positions, Dataset, FitConfig, ScaleMatrix};

/// Quadrature nodes with weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegrationGrid {
    pub nodes: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl IntegrationGrid {
    pub fn new(nodes: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::DegenerateGrid("integration grid has no nodes".into()));
        }
        check_dim("integration weights", nodes.len(), weights.len())?;
        let d = nodes[0].len();
        if d == 0 || nodes.iter().any(|n| n.len() != d) {
            return Err(Error::DegenerateGrid(
                "integration nodes must share one dimension d >= 1".into(),
            ));
        }
        if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(Error::DegenerateGrid(
                "integration weights must be finite and >= 0".into(),
            ));
        }
        Ok(Self { nodes, weights })
    }

    /// Midpoint rule on the box `[lo, hi]` with `n[s]` cells along axis s.
    pub fn midpoint(lo: &[f64], hi: &[f64], n: &[usize]) -> Result<Self> {
        check_dim("grid upper corner", lo.len(), hi.len())?;
        check_dim("grid cell counts", lo.len(), n.len())?;
        if lo.iter().zip(hi).any(|(a, b)| !(a < b)) || n.contains(&0) {
            return Err(Error::DegenerateGrid(
                "midpoint grid needs lo < hi and >= 1 cell per axis".into(),
            ));
        }
        let widths: Vec<f64> = lo
            .iter()
            .zip(hi)
            .zip(n)
            .map(|((a, b), &k)| (b - a) / k as f64)
            .collect();
        let cell: f64 = widths.iter().product();
        let nodes: Vec<Vec<f64>> = lattice_positions(n)
            .map(|idx| {
                idx.iter()
                    .enumerate()
                    .map(|(s, &i)| lo[s] + (i as f64 - 0.5) * widths[s])
                    .collect()
            })
            .collect();
        let weights = vec![cell; nodes.len()];
        Self::new(nodes, weights)
    }

    pub fn dim(&self) -> usize {
        self.nodes[0].len()
    }
}

/// Scalar curvature-to-noise ratio at u: the mean over (s, k) of
/// `|(Ω⁻¹ β_ss⁽²⁾)_k / diag(φκσfΩ)_k|`.
pub fn plugin_integrand(truth: &dyn TruthModel, u: &[f64], kernel: KernelSpec) -> Result<f64> {
    let noise = variance_diagonal(truth, u, kernel)?;
    let d = truth.d();
    let mut total = 0.0;
    for s in 0..d {
        let curv = curvature_direction(truth, u, s)?;
        for (c, v) in curv.iter().zip(&noise) {
            total += (c / v).abs();
        }
    }
    Ok(total / (d * truth.p()) as f64)
}

/// Asymptotic optimal bandwidth
/// `(2Ñ det(Λ)/d · Σ_s a_s⁻⁴)^{-1/(d+2)} · ∫ C(u)^{-1/(d+2)} du`,
/// with the integral taken over `grid`.
pub fn optimal_bandwidth_plugin(
    truth: &dyn TruthModel,
    scales: &ScaleMatrix,
    kernel: KernelSpec,
    n_total: usize,
    grid: &IntegrationGrid,
) -> Result<f64> {
    let d = truth.d();
    check_dim("scale matrix", d, scales.dim())?;
    check_dim("integration grid", d, grid.dim())?;
    if n_total == 0 {
        return Err(Error::InvalidParameter("Ñ must be >= 1".into()));
    }
    let expo = -1.0 / (d as f64 + 2.0);
    let mut integral = 0.0;
    for (u, w) in grid.nodes.iter().zip(&grid.weights) {
        let c = plugin_integrand(truth, u, kernel)?;
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::NoFiniteOptimum(format!(
                "bias/variance ratio at {u:?} is {c} (zero curvature or zero noise)"
            )));
        }
        integral += w * c.powf(expo);
    }
    let scale_sum: f64 = scales.scales().iter().map(|a| a.powi(-4)).sum();
    let lead = 2.0 * n_total as f64 * scales.det() / d as f64 * scale_sum;
    let h = lead.powf(expo) * integral;
    if h > 0.0 && h.is_finite() {
        Ok(h)
    } else {
        Err(Error::NoFiniteOptimum(format!("plug-in value {h}")))
    }
}

/// Outcome of [`cv_bandwidth`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub h: f64,
    pub grid: Vec<f64>,
    /// Mean leave-one-out squared error per grid point; `None` where some
    /// leave-one-out fit failed.
    pub scores: Vec<Option<f64>>,
}

/// Mean leave-one-out squared prediction error at one bandwidth.
pub fn loo_score(dataset: &Dataset, config: &FitConfig) -> Result<f64> {
    config.validate()?;
    let y = dataset.responses();
    let errors: Result<Vec<f64>> = (0..dataset.len())
        .into_par_iter()
        .map(|i| {
            let obs = &dataset.records()[i].obs;
            let fit = fit_with_skip(dataset, &y, &obs.u, config, Some(i))?;
            let r = obs.y - predict(&fit, &obs.x)?;
            Ok(r * r)
        })
        .collect();
    let errors = errors?;
    Ok(errors.iter().sum::<f64>() / errors.len() as f64)
}

/// Leave-one-out CV over an ascending grid. Near-ties go to the smaller h.
pub fn cv_bandwidth(dataset: &Dataset, template: &FitConfig, h_grid: &[f64]) -> Result<CvResult> {
    if h_grid.is_empty() {
        return Err(Error::DegenerateGrid("empty bandwidth grid".into()));
    }
    if h_grid.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err(Error::DegenerateGrid("bandwidth grid must be sorted ascending".into()));
    }
    let mut scores = Vec::with_capacity(h_grid.len());
    let mut reasons = Vec::new();
    for &h in h_grid {
        match loo_score(dataset, &template.with_bandwidth(h)?) {
            Ok(s) => scores.push(Some(s)),
            Err(e) if e.is_numerical() => {
                reasons.push(format!("h = {h}: {e}"));
                scores.push(None);
            }
            Err(e) => return Err(e),
        }
    }
    let best = scores.iter().flatten().copied().fold(f64::INFINITY, f64::min);
    if !best.is_finite() {
        return Err(Error::AllCandidatesFailed(reasons.join("; ")));
    }
    let y = dataset.responses();
    let mean_sq = y.iter().map(|v| v * v).sum::<f64>() / y.len() as f64;
    let tol = 1e-10 * (best + mean_sq);
    let pick = scores
        .iter()
        .position(|s| matches!(s, Some(v) if *v <= best + tol))
        .expect("minimum is attained");
    Ok(CvResult {
        h: h_grid[pick],
        grid: h_grid.to_vec(),
        scores,
    })
}

/// Parses `lo:hi:n` into n linearly spaced values, endpoints included.
pub fn parse_h_grid(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let bad = || Error::Parse(format!("bandwidth grid must look like lo:hi:n, got {spec:?}"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let lo: f64 = parts[0].trim().parse().map_err(|_| bad())?;
    let hi: f64 = parts[1].trim().parse().map_err(|_| bad())?;
    let n: usize = parts[2].trim().parse().map_err(|_| bad())?;
    if n == 0 || !(lo > 0.0) || !(hi >= lo) || !hi.is_finite() {
        return Err(Error::DegenerateGrid(format!(
            "bandwidth grid needs 0 < lo <= hi and n >= 1, got {spec:?}"
        )));
    }
    if n == 1 {
        return if hi == lo {
            Ok(vec![lo])
        } else {
            Err(Error::DegenerateGrid(format!(
                "a one-point grid needs lo == hi, got {spec:?}"
            )))
        };
    }
    let step = (hi - lo) / (n - 1) as f64;
    Ok((0..n)
        .map(|i| if i + 1 == n { hi } else { lo + step * i as f64 })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn h_grid_parsing() {
        assert_eq!(parse_h_grid("0.1:0.5:5").unwrap().len(), 5);
        let g = parse_h_grid("0.1:0.3:3").unwrap();
        assert!((g[1] - 0.2).abs() < 1e-15 && g[2] == 0.3);
        assert_eq!(parse_h_grid("0.2:0.2:1").unwrap(), vec![0.2]);
        assert!(parse_h_grid("0.5:0.1:3").is_err());
        assert!(parse_h_grid("0:1:3").is_err());
        assert!(parse_h_grid("a:b").is_err());
    }

    #[test]
    fn midpoint_grid_layout() {
        let g = IntegrationGrid::midpoint(&[0.0, 0.0], &[1.0, 2.0], &[2, 2]).unwrap();
        assert_eq!(
            g.nodes,
            vec![vec![0.25, 0.5], vec![0.25, 1.5], vec![0.75, 0.5], vec![0.75, 1.5]]
        );
        assert!(g.weights.iter().all(|w| (w - 0.5).abs() < 1e-15));
        assert!(IntegrationGrid::midpoint(&[0.0], &[0.0], &[2]).is_err());
    }
}
