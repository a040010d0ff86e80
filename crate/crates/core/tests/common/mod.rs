#![allow(dead_code)]

use gwle::{Dataset, LatticeIndex, Observation, Record};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// n1×n2 lattice with jittered locations in [0, span]², covariates
/// (1, z2, ..., zp) with z ~ U(-1, 1), responses from `f(u, x)`.
pub fn lattice_dataset(
    n1: usize,
    n2: usize,
    p: usize,
    span: f64,
    seed: u64,
    f: impl Fn(&[f64], &[f64]) -> f64,
) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::with_capacity(n1 * n2);
    for i in 1..=n1 {
        for j in 1..=n2 {
            let u = vec![
                span * ((i as f64 - 0.5) + rng.random_range(-0.4..0.4)) / n1 as f64,
                span * ((j as f64 - 0.5) + rng.random_range(-0.4..0.4)) / n2 as f64,
            ];
            let mut x = vec![1.0];
            x.extend((1..p).map(|_| rng.random_range(-1.0..1.0)));
            let y = f(&u, &x);
            records.push(Record {
                index: LatticeIndex::new(vec![i, j]),
                obs: Observation { x, u, y },
            });
        }
    }
    Dataset::new(vec![n1, n2], p, 2, true, records).unwrap()
}

/// Direct weighted least squares on the unscaled local design
/// `(x, (u - u0) ⊗ x)` with gaussian weights `exp(-|Λ(u-u0)|²/(2h²))`,
/// solved through the normal equations in plain f64 arithmetic.
pub fn dense_oracle(ds: &Dataset, u0: &[f64], scales: &[f64], h: f64) -> DVector<f64> {
    let (p, d) = (ds.p(), ds.d());
    let k = p * (d + 1);
    let mut xtwx = DMatrix::<f64>::zeros(k, k);
    let mut xtwy = DVector::<f64>::zeros(k);
    for r in ds.records() {
        let du: Vec<f64> = r.obs.u.iter().zip(u0).map(|(a, b)| a - b).collect();
        let dist2: f64 = du.iter().zip(scales).map(|(v, a)| (v * a).powi(2)).sum();
        let w = (-dist2 / (2.0 * h * h)).exp();
        let mut row = r.obs.x.clone();
        for v in &du {
            row.extend(r.obs.x.iter().map(|x| x * v));
        }
        let row = DVector::from_vec(row);
        xtwx += &row * row.transpose() * w;
        xtwy += &row * (w * r.obs.y);
    }
    xtwx.lu().solve(&xtwy).expect("oracle system is singular")
}

pub fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

pub fn max_rel_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let scale = a.iter().chain(b).fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) / scale
}
