//! Conditional (fixed-design) Monte Carlo.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::field::{generate_design, generate_design_with, replica_noise, FrozenDesign};
use super::scenario::{stream, EstimatorKind, SimulationScenario, IMSE_STREAM};
use super::stats::{fit_scaling_exponents, spearman, ExponentFit};
use crate::asymptotics::{theoretical_bias, theoretical_variance};
use crate::bandwidth::IntegrationGrid;
use crate::error::{Error, Result};
use crate::estimator::fit_local_with_response;
use crate::mlwe::{mlwe_fit_local_with, BandwidthMatrix, MlweOptions};
use crate::truth::TruthModel;
use crate::types::{Dataset, LocalFit};

/// Bandwidth handed to one estimator in one cell.
#[derive(Clone, Debug, PartialEq)]
pub enum CellBandwidth {
    Gwle(f64),
    Mlwe(BandwidthMatrix),
}

impl CellBandwidth {
    pub fn kind(&self) -> EstimatorKind {
        match self {
            CellBandwidth::Gwle(_) => EstimatorKind::Gwle,
            CellBandwidth::Mlwe(_) => EstimatorKind::Mlwe,
        }
    }
}

fn fit_once(
    scenario: &SimulationScenario,
    ds: &Dataset,
    y: &[f64],
    u0: &[f64],
    bw: &CellBandwidth,
) -> Result<LocalFit> {
    match bw {
        CellBandwidth::Gwle(h) => fit_local_with_response(ds, y, u0, &scenario.gwle_config(*h)?),
        CellBandwidth::Mlwe(hm) => mlwe_fit_local_with(
            ds,
            y,
            u0,
            hm,
            scenario.kernel,
            MlweOptions {
                ridge_fallback: scenario.ridge_fallback,
                min_effective_neighbors: 0,
            },
        ),
    }
}

/// Summary of one eval point in one cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointReport {
    pub u0: Vec<f64>,
    pub beta_true: Vec<f64>,
    /// `None` when every replica succeeded.
    pub failure: Option<String>,
    pub empirical_bias: Option<Vec<f64>>,
    pub empirical_variance: Option<Vec<Vec<f64>>>,
    pub mse: Option<f64>,
    pub theoretical_bias: Option<Vec<f64>>,
    pub theoretical_variance: Option<Vec<Vec<f64>>>,
}

impl PointReport {
    pub fn bias_norm(&self) -> Option<f64> {
        self.empirical_bias
            .as_ref()
            .map(|b| b.iter().map(|v| v * v).sum::<f64>().sqrt())
    }

    pub fn variance_trace(&self) -> Option<f64> {
        self.empirical_variance
            .as_ref()
            .map(|v| (0..v.len()).map(|k| v[k][k]).sum())
    }
}

/// One (estimator, h, Ñ) cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub estimator: EstimatorKind,
    pub h: f64,
    /// Per-dimension MLWE bandwidths.
    pub bandwidths: Option<Vec<f64>>,
    pub n_index: usize,
    pub n_total: usize,
    pub lattice_sizes: Vec<usize>,
    pub replicas: usize,
    pub design_checksum: u64,
    pub points: Vec<PointReport>,
}

impl CellReport {
    /// Mean ‖bias‖ over points without failures.
    pub fn mean_bias_norm(&self) -> Option<f64> {
        mean(self.points.iter().filter_map(PointReport::bias_norm))
    }

    /// Mean tr(Var) over points without failures.
    pub fn mean_variance_trace(&self) -> Option<f64> {
        mean(self.points.iter().filter_map(PointReport::variance_trace))
    }
}

fn mean(it: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = it.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| s / n as f64)
}

/// Runs R noise replicas on a frozen design and summarizes each eval point.
pub fn run_cell(scenario: &SimulationScenario, design: &FrozenDesign, bw: &CellBandwidth) -> Result<CellReport> {
    let r = scenario.replicas;
    let p = scenario.p();
    let base = design.dataset(&design.mean)?;
    let points = &scenario.eval_points;

    // replicas[r][point] = estimate or error message
    let replicas: Vec<Vec<std::result::Result<Vec<f64>, String>>> = (0..r)
        .into_par_iter()
        .map(|rep| {
            let eps = replica_noise(scenario, design.which_n, rep, design.len());
            let y = design.responses(&eps);
            points
                .iter()
                .map(|u0| {
                    fit_once(scenario, &base, &y, u0, bw)
                        .map(|f| f.beta_hat)
                        .map_err(|e| format!("replica {rep}: {e}"))
                })
                .collect()
        })
        .collect();

    let truth = &scenario.truth;
    let scales = scenario.scale_matrix();
    let mut reports = Vec::with_capacity(points.len());
    for (j, u0) in points.iter().enumerate() {
        let beta_true = truth.beta(u0);
        let (theoretical_bias, theoretical_variance) = match bw {
            CellBandwidth::Gwle(h) => (
                theoretical_bias(truth, u0, *h, &scales, scenario.kernel).ok(),
                theoretical_variance(truth, u0, *h, &scales, scenario.kernel, design.len())
                    .ok()
                    .map(|m| rows(&m)),
            ),
            CellBandwidth::Mlwe(_) => (None, None),
        };
        let mut report = PointReport {
            u0: u0.clone(),
            beta_true: beta_true.clone(),
            failure: None,
            empirical_bias: None,
            empirical_variance: None,
            mse: None,
            theoretical_bias,
            theoretical_variance,
        };
        if let Some(msg) = replicas.iter().find_map(|rep| rep[j].as_ref().err()) {
            report.failure = Some(msg.clone());
            reports.push(report);
            continue;
        }
        let est: Vec<&Vec<f64>> = replicas.iter().map(|rep| rep[j].as_ref().expect("checked")).collect();
        // Shifted moments: exact zero variance when every replica agrees.
        let first = est[0];
        let shifts: Vec<Vec<f64>> = est
            .iter()
            .map(|b| b.iter().zip(first).map(|(a, c)| a - c).collect())
            .collect();
        let mut shift_mean = vec![0.0; p];
        for s in &shifts {
            for (m, v) in shift_mean.iter_mut().zip(s) {
                *m += v;
            }
        }
        shift_mean.iter_mut().for_each(|m| *m /= r as f64);
        let bias: Vec<f64> = (0..p).map(|k| first[k] + shift_mean[k] - beta_true[k]).collect();
        let variance = (r >= 2).then(|| {
            let mut v = vec![vec![0.0; p]; p];
            for s in &shifts {
                for a in 0..p {
                    let da = s[a] - shift_mean[a];
                    for b in 0..p {
                        v[a][b] += da * (s[b] - shift_mean[b]);
                    }
                }
            }
            for row in v.iter_mut() {
                row.iter_mut().for_each(|x| *x /= (r - 1) as f64);
            }
            v
        });
        let bias_sq: f64 = bias.iter().map(|b| b * b).sum();
        report.mse = Some(bias_sq + variance.as_ref().map_or(0.0, |v| (0..p).map(|k| v[k][k]).sum()));
        report.empirical_bias = Some(bias);
        report.empirical_variance = variance;
        reports.push(report);
    }

    Ok(CellReport {
        estimator: bw.kind(),
        h: match bw {
            CellBandwidth::Gwle(h) => *h,
            CellBandwidth::Mlwe(hm) => hm.geometric_mean(),
        },
        bandwidths: match bw {
            CellBandwidth::Gwle(_) => None,
            CellBandwidth::Mlwe(hm) => Some(hm.bandwidths().to_vec()),
        },
        n_index: design.which_n,
        n_total: design.len(),
        lattice_sizes: design.lattice_sizes.clone(),
        replicas: r,
        design_checksum: design.checksum,
        points: reports,
    })
}

fn rows(m: &nalgebra::DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|r| m.row(r).iter().copied().collect()).collect()
}

/// One cell of the scenario: frozen design of sweep entry `which_n`,
/// bandwidth `h` (MLWE uses `h_s = h / a_s`).
pub fn run_conditional_mc(
    scenario: &SimulationScenario,
    h: f64,
    which_n: usize,
    estimator: EstimatorKind,
) -> Result<CellReport> {
    scenario.validate()?;
    let design = generate_design(scenario, which_n)?;
    let bw = match estimator {
        EstimatorKind::Gwle => CellBandwidth::Gwle(h),
        EstimatorKind::Mlwe => CellBandwidth::Mlwe(scenario.mlwe_bandwidths(h)?),
    };
    run_cell(scenario, &design, &bw)
}

/// A fitted power law over one sweep axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentRecord {
    pub estimator: EstimatorKind,
    /// `bias_vs_h`, `variance_vs_h` or `variance_vs_n`.
    pub quantity: String,
    /// The value held fixed: Ñ for the h sweeps, h for the Ñ sweep.
    pub fixed: f64,
    pub fit: Option<ExponentFit>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloReport {
    pub scenario: String,
    pub seed: u64,
    pub replicas: usize,
    pub cells: Vec<CellReport>,
    pub exponents: Vec<ExponentRecord>,
}

/// Every (Ñ, h, estimator) cell plus the scaling fits across the sweeps.
pub fn run_simulation(scenario: &SimulationScenario) -> Result<MonteCarloReport> {
    scenario.validate()?;
    let mut cells = Vec::new();
    for which_n in 0..scenario.n_list.len() {
        let design = generate_design(scenario, which_n)?;
        for &h in &scenario.h_list {
            for &est in &scenario.estimators {
                let bw = match est {
                    EstimatorKind::Gwle => CellBandwidth::Gwle(h),
                    EstimatorKind::Mlwe => CellBandwidth::Mlwe(scenario.mlwe_bandwidths(h)?),
                };
                cells.push(run_cell(scenario, &design, &bw)?);
            }
        }
    }
    let exponents = sweep_exponents(scenario, &cells);
    Ok(MonteCarloReport {
        scenario: scenario.name.clone(),
        seed: scenario.seed,
        replicas: scenario.replicas,
        cells,
        exponents,
    })
}

fn record(estimator: EstimatorKind, quantity: &str, fixed: f64, xs: &[f64], ys: &[Option<f64>]) -> ExponentRecord {
    let result = if ys.iter().any(Option::is_none) {
        Err(Error::DegenerateGrid(
            "a cell on this sweep has no usable points".into(),
        ))
    } else {
        let ys: Vec<f64> = ys.iter().flatten().copied().collect();
        fit_scaling_exponents(xs, &ys)
    };
    ExponentRecord {
        estimator,
        quantity: quantity.to_string(),
        fixed,
        error: result.as_ref().err().map(|e| e.to_string()),
        fit: result.ok(),
    }
}

fn sweep_exponents(scenario: &SimulationScenario, cells: &[CellReport]) -> Vec<ExponentRecord> {
    let mut out = Vec::new();
    let find = |est, n, h: f64| {
        cells
            .iter()
            .find(|c| c.estimator == est && c.n_index == n && c.h.to_bits() == h.to_bits())
    };
    for &est in &scenario.estimators {
        if scenario.h_list.len() >= 2 {
            for n in 0..scenario.n_list.len() {
                let n_total = scenario.n_total(n) as f64;
                let sweep: Vec<&CellReport> = scenario
                    .h_list
                    .iter()
                    .filter_map(|&h| find(est, n, geometric_h(scenario, est, h)))
                    .collect();
                let xs: Vec<f64> = sweep.iter().map(|c| c.h).collect();
                let bias: Vec<Option<f64>> = sweep.iter().map(|c| c.mean_bias_norm()).collect();
                let var: Vec<Option<f64>> = sweep.iter().map(|c| c.mean_variance_trace()).collect();
                out.push(record(est, "bias_vs_h", n_total, &xs, &bias));
                out.push(record(est, "variance_vs_h", n_total, &xs, &var));
            }
        }
        if scenario.n_list.len() >= 2 {
            for &h in &scenario.h_list {
                let hh = geometric_h(scenario, est, h);
                let sweep: Vec<&CellReport> = (0..scenario.n_list.len()).filter_map(|n| find(est, n, hh)).collect();
                let xs: Vec<f64> = sweep.iter().map(|c| c.n_total as f64).collect();
                let var: Vec<Option<f64>> = sweep.iter().map(|c| c.mean_variance_trace()).collect();
                out.push(record(est, "variance_vs_n", h, &xs, &var));
            }
        }
    }
    out
}

/// The `h` value a cell records for nominal bandwidth `h`.
fn geometric_h(scenario: &SimulationScenario, est: EstimatorKind, h: f64) -> f64 {
    match est {
        EstimatorKind::Gwle => h,
        EstimatorKind::Mlwe => scenario.mlwe_bandwidths(h).map(|b| b.geometric_mean()).unwrap_or(h),
    }
}

/// One Ñ of the GWLE/MLWE comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareEntry {
    pub n_total: usize,
    pub h_gwle: f64,
    pub h_mlwe: Vec<f64>,
    pub trace_var_gwle: Option<f64>,
    pub trace_var_mlwe: Option<f64>,
    /// `tr Var_gwle / tr Var_mlwe`; `None` when undefined.
    pub ratio: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub scenario: String,
    pub seed: u64,
    pub replicas: usize,
    pub gwle_rate: f64,
    pub mlwe_rate: f64,
    pub entries: Vec<CompareEntry>,
    /// Spearman correlation of the defined ratios against Ñ.
    pub spearman: Option<f64>,
    pub cells: Vec<CellReport>,
}

/// Variance ratio series under the rate regimes of `scenario.compare`.
pub fn compare_estimators(scenario: &SimulationScenario) -> Result<CompareReport> {
    scenario.validate()?;
    let settings = scenario
        .compare
        .clone()
        .ok_or_else(|| Error::InvalidScenario("compare settings missing".into()))?;
    if scenario.n_list.len() < 3 {
        return Err(Error::DegenerateGrid(
            "comparison needs at least 3 lattice sizes".into(),
        ));
    }
    let (gr, mr) = settings.rates(scenario.d());
    let mut entries = Vec::new();
    let mut cells = Vec::new();
    for which_n in 0..scenario.n_list.len() {
        let n_total = scenario.n_total(which_n);
        let growth = n_total as f64 / settings.n0 as f64;
        let h_gwle = settings.h0 * growth.powf(-gr);
        let h_mlwe = scenario.mlwe_bandwidths(settings.h0 * growth.powf(-mr))?;
        let design = generate_design(scenario, which_n)?;
        let g = run_cell(scenario, &design, &CellBandwidth::Gwle(h_gwle))?;
        let m = run_cell(scenario, &design, &CellBandwidth::Mlwe(h_mlwe.clone()))?;
        let (tg, tm) = (g.mean_variance_trace(), m.mean_variance_trace());
        let ratio = match (tg, tm) {
            (Some(a), Some(b)) if b > 0.0 && a.is_finite() => Some(a / b),
            _ => None,
        };
        entries.push(CompareEntry {
            n_total,
            h_gwle,
            h_mlwe: h_mlwe.bandwidths().to_vec(),
            trace_var_gwle: tg,
            trace_var_mlwe: tm,
            ratio,
        });
        cells.push(g);
        cells.push(m);
    }
    let defined: Vec<(f64, f64)> = entries
        .iter()
        .filter_map(|e| e.ratio.map(|r| (e.n_total as f64, r)))
        .collect();
    let spearman = (defined.len() >= 3).then(|| {
        let (xs, ys): (Vec<f64>, Vec<f64>) = defined.into_iter().unzip();
        spearman(&xs, &ys)
    });
    Ok(CompareReport {
        scenario: scenario.name.clone(),
        seed: scenario.seed,
        replicas: scenario.replicas,
        gwle_rate: gr,
        mlwe_rate: mr,
        entries,
        spearman: spearman.flatten(),
        cells,
    })
}

/// Unconditional Monte Carlo IMSE of the GWLE fit over `grid`, one value per
/// bandwidth (`None` where any fit failed). Each repetition draws a new
/// design and new noise.
pub fn monte_carlo_imse(
    scenario: &SimulationScenario,
    which_n: usize,
    h_grid: &[f64],
    grid: &IntegrationGrid,
    repetitions: usize,
) -> Result<Vec<Option<f64>>> {
    scenario.validate()?;
    if repetitions == 0 || h_grid.is_empty() {
        return Err(Error::DegenerateGrid(
            "IMSE needs repetitions >= 1 and a nonempty h grid".into(),
        ));
    }
    let configs = h_grid
        .iter()
        .map(|&h| scenario.gwle_config(h))
        .collect::<Result<Vec<_>>>()?;
    let per_rep: Vec<Result<Vec<Option<f64>>>> = (0..repetitions)
        .into_par_iter()
        .map(|rep| {
            let mut rng = stream(scenario.seed, &[IMSE_STREAM, which_n as u64, rep as u64]);
            let design = generate_design_with(scenario, which_n, &mut rng)?;
            let eps: Vec<f64> = (0..design.len())
                .map(|_| rand::Rng::sample(&mut rng, rand_distr::StandardNormal))
                .collect();
            let y = design.responses(&eps);
            let ds = design.dataset(&y)?;
            Ok(configs
                .iter()
                .map(|cfg| {
                    let mut acc = 0.0;
                    for (u, w) in grid.nodes.iter().zip(&grid.weights) {
                        let fit = fit_local_with_response(&ds, &y, u, cfg).ok()?;
                        let err: f64 = fit
                            .beta_hat
                            .iter()
                            .zip(scenario.truth.beta(u))
                            .map(|(a, b)| (a - b) * (a - b))
                            .sum();
                        acc += w * err;
                    }
                    Some(acc)
                })
                .collect())
        })
        .collect();
    let mut totals = vec![Some(0.0); h_grid.len()];
    for rep in per_rep {
        for (t, v) in totals.iter_mut().zip(rep?) {
            *t = match (*t, v) {
                (Some(a), Some(b)) => Some(a + b),
                _ => None,
            };
        }
    }
    Ok(totals.into_iter().map(|t| t.map(|v| v / repetitions as f64)).collect())
}
