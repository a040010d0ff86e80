//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.

mod common;

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use common::{dense_oracle, lattice_dataset, max_rel_diff};
use gwle::simlab::{
    compare_estimators, generate_design, generate_field, monte_carlo_imse, run_simulation, shell_autocorrelation,
    EstimatorKind, MonteCarloReport, SimulationScenario,
};
use gwle::{
    fit_local, fit_surface, kernel_moments, lemma_moment_limit, lemma_moment_stat, mlwe_fit_local,
    optimal_bandwidth_plugin, theoretical_bias, theoretical_variance, BandwidthMatrix, FitConfig, IntegrationGrid,
    KernelSpec, Lemma, LemmaQuery, LocalFit, ScaleMatrix,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn scenario_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)
}

fn load(name: &str) -> SimulationScenario {
    SimulationScenario::from_path(&scenario_path(name)).expect("scenario loads")
}

fn flat(fit: &LocalFit) -> Vec<f64> {
    let mut v = fit.beta_hat.clone();
    v.extend(fit.gradient_hat.iter().flatten());
    v
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn exponent(report: &MonteCarloReport, quantity: &str) -> Result<f64, String> {
    let rec = report
        .exponents
        .iter()
        .find(|e| e.estimator == EstimatorKind::Gwle && e.quantity == quantity)
        .ok_or_else(|| format!("no {quantity} fit in report"))?;
    rec.fit
        .as_ref()
        .map(|f| f.slope)
        .ok_or_else(|| rec.error.clone().unwrap_or_default())
}

fn affine_exactness() -> Outcome {
    let sc = SimulationScenario::from_json(
        r#"{
        "truth": {
            "beta": [[{"coef": 1.0, "powers": [0, 0]}, {"coef": 2.0, "powers": [1, 0]}, {"coef": -1.0, "powers": [0, 1]}],
                     [{"coef": 0.5, "powers": [0, 0]}, {"coef": -1.0, "powers": [1, 0]}, {"coef": 3.0, "powers": [0, 1]}]],
            "sigma": {"type": "constant", "value": 0.0},
            "location": {"type": "uniform", "lo": [0, 0], "hi": [1, 1]},
            "covariates": {"intercept": true, "means": [1.0], "sds": [0.7]}
        },
        "n_list": [[20, 20]], "seed": 11, "replicas": 1, "h_list": [0.15], "scales": [1, 1],
        "eval_points": [[0.3, 0.3], [0.3, 0.5], [0.3, 0.7], [0.5, 0.3], [0.5, 0.5], [0.5, 0.7],
                        [0.7, 0.3], [0.7, 0.5], [0.7, 0.7]]
    }"#,
    )
    .map_err(|e| e.to_string())?;
    let (ds, _) = generate_field(&sc, 0).map_err(|e| e.to_string())?;
    let cfg = sc.gwle_config(0.15).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for pt in fit_surface(&ds, &sc.eval_points, &cfg).map_err(|e| e.to_string())? {
        let fit = pt.result.map_err(|e| e.to_string())?;
        let u = &sc.eval_points[pt.target];
        let truth = [1.0 + 2.0 * u[0] - u[1], 0.5 - u[0] + 3.0 * u[1]];
        for (b, t) in fit.beta_hat.iter().zip(truth) {
            worst = worst.max((b - t).abs());
        }
    }
    check(worst <= 1e-8, format!("max |β̂ - β| = {worst:.3e} (limit 1e-8)"))
}

fn rescaled_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for case in 0..50u64 {
        let p = 1 + (case % 3) as usize;
        let ds = lattice_dataset(12, 12, p, 1.0, 1000 + case, |u, x| {
            x.iter()
                .enumerate()
                .map(|(k, v)| v * ((k as f64 + 1.5) * u[0] * u[1]).cos())
                .sum()
        });
        let scales = vec![rng.random_range(0.5..2.0), rng.random_range(0.5..2.0)];
        let h = rng.random_range(0.15..0.6);
        let u0 = [rng.random_range(0.25..0.75), rng.random_range(0.25..0.75)];
        let cfg = FitConfig::new(KernelSpec::gaussian(), ScaleMatrix::new(scales.clone()).unwrap(), h).unwrap();
        let fit = fit_local(&ds, &u0, &cfg).map_err(|e| e.to_string())?;
        worst = worst.max(max_rel_diff(&flat(&fit), dense_oracle(&ds, &u0, &scales, h).as_slice()));
    }
    check(
        worst <= 1e-10,
        format!("50 systems, max rel diff {worst:.3e} (limit 1e-10)"),
    )
}

fn joint_invariance() -> Outcome {
    let mut worst = 0.0f64;
    for seed in 0..10u64 {
        let ds = lattice_dataset(15, 15, 2, 1.0, 500 + seed, |u, x| {
            (u[0] - u[1]).exp() * x[0] + u[0].sin() * x[1]
        });
        let base = ScaleMatrix::new(vec![1.3, 0.6]).unwrap();
        let h = 0.25;
        let u0 = [0.45, 0.55];
        let fit = fit_local(
            &ds,
            &u0,
            &FitConfig::new(KernelSpec::gaussian(), base.clone(), h).unwrap(),
        )
        .map_err(|e| e.to_string())?;
        for c in [0.1, 3.0, 10.0] {
            let cfg = FitConfig::new(KernelSpec::gaussian(), base.scaled(c).unwrap(), c * h).unwrap();
            let other = fit_local(&ds, &u0, &cfg).map_err(|e| e.to_string())?;
            worst = worst.max(max_rel_diff(&flat(&fit), &flat(&other)));
        }
    }
    check(
        worst <= 1e-12,
        format!("max rel diff {worst:.3e} over c in {{0.1, 3, 10}} (limit 1e-12)"),
    )
}

fn bias_scaling() -> Outcome {
    let report = run_simulation(&load("benchmark.json")).map_err(|e| e.to_string())?;
    let slope = exponent(&report, "bias_vs_h")?;
    check(
        (1.6..=2.4).contains(&slope),
        format!("log bias vs log h slope {slope:.3} (band [1.6, 2.4])"),
    )
}

fn variance_scaling() -> Outcome {
    let report = run_simulation(&load("benchmark_variance.json")).map_err(|e| e.to_string())?;
    let slope = exponent(&report, "variance_vs_n")?;
    check(
        (-1.25..=-0.75).contains(&slope),
        format!("log tr Var vs log Ñ slope {slope:.3} (band [-1.25, -0.75])"),
    )
}

fn scale_laws() -> Outcome {
    let sc = load("benchmark.json");
    let t = &sc.truth;
    let k = KernelSpec::gaussian();
    let base = ScaleMatrix::new(vec![1.2, 0.8]).unwrap();
    let d = 2;
    let mut worst = 0.0f64;
    for c in [0.25, 2.0, 7.0] {
        let scaled = base.scaled(c).unwrap();
        for u0 in &sc.eval_points {
            let b = theoretical_bias(t, u0, 0.2, &base, k).map_err(|e| e.to_string())?;
            let bc = theoretical_bias(t, u0, 0.2, &scaled, k).map_err(|e| e.to_string())?;
            let expected: Vec<f64> = b.iter().map(|v| v * c.powi(-2)).collect();
            worst = worst.max(max_rel_diff(&bc, &expected));
            let v = theoretical_variance(t, u0, 0.2, &base, k, 3600).map_err(|e| e.to_string())?;
            let vc = theoretical_variance(t, u0, 0.2, &scaled, k, 3600).map_err(|e| e.to_string())?;
            let expected = v * c.powi(-d);
            worst = worst.max(max_rel_diff(vc.as_slice(), expected.as_slice()));
        }
    }
    check(
        worst <= 1e-12,
        format!("max rel deviation from c^-2 / c^-d laws {worst:.3e} (limit 1e-12)"),
    )
}

/// 5×5 midpoint rule over the box spanned by the benchmark eval points.
fn benchmark_grid() -> IntegrationGrid {
    IntegrationGrid::midpoint(&[1.5, 1.5], &[3.5, 3.5], &[5, 5]).unwrap()
}

fn optimal_bandwidth() -> Outcome {
    let sc = load("benchmark.json");
    let s = sc.scale_matrix();
    let grid = benchmark_grid();
    let n = sc.n_total(0);
    let h1 = optimal_bandwidth_plugin(&sc.truth, &s, sc.kernel, n, &grid).map_err(|e| e.to_string())?;
    let h16 = optimal_bandwidth_plugin(&sc.truth, &s, sc.kernel, 16 * n, &grid).map_err(|e| e.to_string())?;
    let power = (h16 - h1 / 2.0).abs() / (h1 / 2.0);

    let h_grid: Vec<f64> = (0..16).map(|i| 0.08 + 0.04 * i as f64).collect();
    let imse = monte_carlo_imse(&sc, 0, &h_grid, &grid, 200).map_err(|e| e.to_string())?;
    let (h_star, _) = h_grid
        .iter()
        .zip(&imse)
        .filter_map(|(h, v)| v.map(|v| (*h, v)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .ok_or("every IMSE grid point failed")?;
    let rel = (h1 - h_star).abs() / h_star;
    check(
        power <= 1e-12 && rel <= 0.25,
        format!(
            "h(16Ñ)/h(Ñ) deviation from 1/2: {power:.3e} (limit 1e-12); plug-in h {h1:.4} vs IMSE-grid minimizer {h_star:.4}, rel {rel:.3} (limit 0.25)"
        ),
    )
}

fn kernel_constants() -> Outcome {
    let mut worst = 0.0f64;
    let mut lines = Vec::new();
    for k in [
        KernelSpec::gaussian(),
        KernelSpec::epanechnikov(),
        KernelSpec::quartic(),
    ] {
        let m = kernel_moments(k).map_err(|e| e.to_string())?;
        for (got, want) in [(m.kappa(0), 1.0), (m.kappa(1), 0.0), (m.kappa(3), 0.0)] {
            worst = worst.max((got - want).abs());
        }
        lines.push(format!("{k} κ₂ = {:.12}", m.kappa2()));
    }
    let g = kernel_moments(KernelSpec::gaussian()).unwrap().kappa2();
    let e = kernel_moments(KernelSpec::epanechnikov()).unwrap().kappa2();
    worst = worst.max((g - 1.0).abs()).max((e - 0.2).abs());
    check(
        worst <= 1e-10,
        format!("{}; max error {worst:.2e} (limit 1e-10)", lines.join(", ")),
    )
}

fn mlwe_equivalence_and_efficiency() -> Outcome {
    let mut worst = 0.0f64;
    for seed in 0..5u64 {
        let ds = lattice_dataset(14, 14, 2, 1.0, 70 + seed, |u, x| {
            (2.0 * u[0]).sin() * x[0] + u[1].powi(3) * x[1]
        });
        let scales = [1.6, 0.7];
        let h = 0.3;
        let cfg = FitConfig::new(KernelSpec::gaussian(), ScaleMatrix::new(scales.to_vec()).unwrap(), h).unwrap();
        let hm = BandwidthMatrix::new(scales.iter().map(|a| h / a).collect()).unwrap();
        for u0 in [[0.35, 0.4], [0.6, 0.55]] {
            let g = fit_local(&ds, &u0, &cfg).map_err(|e| e.to_string())?;
            let m = mlwe_fit_local(&ds, &u0, &hm, KernelSpec::gaussian()).map_err(|e| e.to_string())?;
            worst = worst.max(max_rel_diff(&flat(&g), &flat(&m)));
        }
    }
    let rep = compare_estimators(&load("compare.json")).map_err(|e| e.to_string())?;
    let ratios: Vec<String> = rep
        .entries
        .iter()
        .map(|e| {
            format!(
                "Ñ={}: {}",
                e.n_total,
                e.ratio.map_or("n/a".into(), |r| format!("{r:.4}"))
            )
        })
        .collect();
    let rho = rep.spearman;
    check(
        worst <= 1e-10 && rho.is_some_and(|r| r <= 0.0),
        format!(
            "fit rel diff {worst:.3e} (limit 1e-10); variance ratios [{}], Spearman {} (need <= 0)",
            ratios.join(", "),
            rho.map_or("undefined".into(), |r| format!("{r:.2}"))
        ),
    )
}

fn lemma_limits() -> Outcome {
    let sweep = [(20usize, 0.4), (28, 0.28), (40, 0.2)];
    let q = LemmaQuery::new(Lemma::L1, 0, 0, 1);
    let u0 = [0.5, 0.5];
    let s = ScaleMatrix::identity(2);
    let k = KernelSpec::gaussian();
    let mut errs = Vec::new();
    for (n, h) in sweep {
        let sc = SimulationScenario::from_json(&format!(
            r#"{{
            "truth": {{
                "beta": [[{{"coef": 1.0, "powers": [2, 0]}}], [{{"coef": 1.0, "powers": [0, 1]}}]],
                "sigma": {{"type": "constant", "value": 0.3}},
                "location": {{"type": "uniform", "lo": [0, 0], "hi": [1, 1]}},
                "covariates": {{"intercept": true, "means": [0.5], "sds": [1.0]}}
            }},
            "n_list": [[{n}, {n}]], "seed": 123, "replicas": 1, "h_list": [0.2],
            "scales": [1, 1], "eval_points": [[0.5, 0.5]]
        }}"#
        ))
        .map_err(|e| e.to_string())?;
        let (ds, _) = generate_field(&sc, 0).map_err(|e| e.to_string())?;
        let stat = lemma_moment_stat(&ds, None, &u0, h, &s, k, q).map_err(|e| e.to_string())?;
        let lim = lemma_moment_limit(&sc.truth, &u0, h, &s, k, q).map_err(|e| e.to_string())?;
        errs.push((&stat - &lim).norm() / lim.norm());
    }
    let decreasing = errs.windows(2).all(|w| w[1] < w[0]);
    let last = errs[errs.len() - 1];
    check(
        last <= 0.15 && decreasing,
        format!(
            "rel errors {} over (Ñ, h) sweep; last {last:.3} (limit 0.15), decreasing: {decreasing}",
            errs.iter().map(|e| format!("{e:.3}")).collect::<Vec<_>>().join(" -> ")
        ),
    )
}

fn m_dependence() -> Outcome {
    let sc = SimulationScenario::from_json(
        r#"{
        "truth": {
            "beta": [[{"coef": 1.0, "powers": [1, 0]}]],
            "sigma": {"type": "constant", "value": 1.0},
            "location": {"type": "uniform", "lo": [0, 0], "hi": [1, 1]},
            "covariates": {"intercept": true}
        },
        "n_list": [[30, 30]], "seed": 314, "replicas": 1, "h_list": [0.1], "scales": [1, 1],
        "eval_points": [[0.5, 0.5]], "dependence_range": 2, "location_field": "ma_smoothed"
    }"#,
    )
    .map_err(|e| e.to_string())?;
    let design = generate_design(&sc, 0).map_err(|e| e.to_string())?;
    let sizes = [30usize, 30];
    let band = 3.0 / (900f64).sqrt();
    let mut rows = Vec::new();
    let mut ok = true;
    for s in 0..2 {
        let field: Vec<f64> = design.u.iter().map(|u| u[s]).collect();
        let near = shell_autocorrelation(&field, &sizes, 1).map_err(|e| e.to_string())?;
        rows.push(format!("u{} lag1 {near:.3}", s + 1));
        for lag in 3..=5 {
            let r = shell_autocorrelation(&field, &sizes, lag).map_err(|e| e.to_string())?;
            ok &= r.abs() <= band;
            rows.push(format!("u{} lag{lag} {r:+.4}", s + 1));
        }
    }
    check(ok, format!("{} (band ±{band:.3})", rows.join(", ")))
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let sc = scenario_path("quick.json");
    let mut outputs = Vec::new();
    for name in ["a.json", "b.json"] {
        let out = dir.path().join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_gwle"))
            .args(["--no-timestamp", "simulate", "--scenario"])
            .arg(&sc)
            .arg("--out")
            .arg(&out)
            .status()
            .map_err(|e| e.to_string())?;
        if !status.success() {
            return Err(format!("simulate exited with {status}"));
        }
        outputs.push(std::fs::read(&out).map_err(|e| e.to_string())?);
    }
    check(
        outputs[0] == outputs[1],
        format!(
            "two runs, {} bytes each, identical: {}",
            outputs[0].len(),
            outputs[0] == outputs[1]
        ),
    )
}

struct Criterion {
    id: &'static str,
    name: &'static str,
    limit: Option<Duration>,
    run: fn() -> Outcome,
}

fn main() {
    let criteria = [
        Criterion {
            id: "1",
            name: "affine truth reproduced exactly",
            limit: Some(Duration::from_secs(5)),
            run: affine_exactness,
        },
        Criterion {
            id: "2",
            name: "rescaled solve equals direct weighted least squares",
            limit: None,
            run: rescaled_equivalence,
        },
        Criterion {
            id: "3",
            name: "joint (Λ, h) scaling invariance",
            limit: None,
            run: joint_invariance,
        },
        Criterion {
            id: "4",
            name: "bias scales as h^2",
            limit: Some(Duration::from_secs(180)),
            run: bias_scaling,
        },
        Criterion {
            id: "5",
            name: "variance scales as 1/Ñ",
            limit: Some(Duration::from_secs(180)),
            run: variance_scaling,
        },
        Criterion {
            id: "6",
            name: "scale-parameter laws of the formulas",
            limit: None,
            run: scale_laws,
        },
        Criterion {
            id: "7",
            name: "plug-in bandwidth power law and IMSE agreement",
            limit: None,
            run: optimal_bandwidth,
        },
        Criterion {
            id: "8",
            name: "kernel moment constants",
            limit: None,
            run: kernel_constants,
        },
        Criterion {
            id: "9",
            name: "GWLE/MLWE equivalence and variance-ratio trend",
            limit: Some(Duration::from_secs(600)),
            run: mlwe_equivalence_and_efficiency,
        },
        Criterion {
            id: "10",
            name: "L1 moment statistic converges to its limit",
            limit: None,
            run: lemma_limits,
        },
        Criterion {
            id: "11",
            name: "generated fields are m-dependent",
            limit: None,
            run: m_dependence,
        },
        Criterion {
            id: "12",
            name: "simulate is byte-for-byte reproducible",
            limit: None,
            run: determinism,
        },
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for c in &criteria {
        if !filter.is_empty() && !filter.iter().any(|f| f == c.id) {
            continue;
        }
        let start = Instant::now();
        let mut outcome = (c.run)();
        let elapsed = start.elapsed();
        if let Some(limit) = c.limit {
            if elapsed > limit {
                let detail = match outcome {
                    Ok(d) | Err(d) => d,
                };
                outcome = Err(format!("{detail}; runtime {elapsed:.1?} exceeds {limit:?}"));
            }
        }
        let (tag, detail) = match &outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("{tag} criterion {:>2}: {} [{elapsed:.1?}] {detail}", c.id, c.name);
    }
    println!("acceptance: {} criteria failed", failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
