//! Stationary lattice fields and frozen designs.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{ContinuousCDF, Normal};

use super::scenario::{stream, FieldLaw, SimulationScenario, DESIGN_STREAM, NOISE_STREAM};
use crate::error::{Error, Result};
use crate::truth::TruthModel;
use crate::types::{lattice_positions, Dataset, LatticeIndex, Observation, Record};

/// Standard normal field on the lattice, row-major. With `MaSmoothed`, each
/// value is the normalized sum of iid innovations over the infinite-norm box
/// of radius ⌊m/2⌋, so values further than m apart share no innovation.
pub fn gaussian_field(rng: &mut ChaCha8Rng, sizes: &[usize], law: FieldLaw, m: usize) -> Vec<f64> {
    let total: usize = sizes.iter().product();
    let r = match law {
        FieldLaw::Iid => 0,
        FieldLaw::MaSmoothed => m / 2,
    };
    if r == 0 {
        return (0..total).map(|_| rng.sample(StandardNormal)).collect();
    }
    let mut dims: Vec<usize> = sizes.iter().map(|n| n + 2 * r).collect();
    let padded: usize = dims.iter().product();
    let mut field: Vec<f64> = (0..padded).map(|_| rng.sample(StandardNormal)).collect();
    // Separable box sum: along each axis, window 2r+1 shrinks that axis by 2r.
    for axis in 0..dims.len() {
        let outer: usize = dims[..axis].iter().product();
        let len = dims[axis];
        let inner: usize = dims[axis + 1..].iter().product();
        let out_len = len - 2 * r;
        let mut next = vec![0.0; outer * out_len * inner];
        for o in 0..outer {
            for i in 0..inner {
                for t in 0..out_len {
                    let mut acc = 0.0;
                    for w in 0..=2 * r {
                        acc += field[(o * len + t + w) * inner + i];
                    }
                    next[(o * out_len + t) * inner + i] = acc;
                }
            }
        }
        field = next;
        dims[axis] = out_len;
    }
    let norm = ((2 * r + 1) as f64).powi(sizes.len() as i32).sqrt();
    field.iter().map(|v| v / norm).collect()
}

/// A generated (X, U) design together with the response mean and noise sd.
#[derive(Clone, Debug)]
pub struct FrozenDesign {
    pub which_n: usize,
    pub lattice_sizes: Vec<usize>,
    pub intercept: bool,
    pub indices: Vec<LatticeIndex>,
    pub x: Vec<Vec<f64>>,
    pub u: Vec<Vec<f64>>,
    /// `x · β(u)` per record.
    pub mean: Vec<f64>,
    /// `√σ(u)` per record.
    pub noise_sd: Vec<f64>,
    pub checksum: u64,
}

/// FNV-1a over the bit patterns of the design.
pub fn design_checksum(x: &[Vec<f64>], u: &[Vec<f64>]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for v in x.iter().chain(u).flatten() {
        for b in v.to_bits().to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}

impl FrozenDesign {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Responses `mean + sd·ε` for the given standard normal draws.
    pub fn responses(&self, eps: &[f64]) -> Vec<f64> {
        self.mean
            .iter()
            .zip(&self.noise_sd)
            .zip(eps)
            .map(|((m, s), e)| m + s * e)
            .collect()
    }

    pub fn dataset(&self, y: &[f64]) -> Result<Dataset> {
        let p = self.x.first().map_or(0, Vec::len);
        let d = self.u.first().map_or(0, Vec::len);
        let records = self
            .indices
            .iter()
            .zip(&self.x)
            .zip(&self.u)
            .zip(y)
            .map(|(((i, x), u), &y)| Record {
                index: i.clone(),
                obs: Observation {
                    x: x.clone(),
                    u: u.clone(),
                    y,
                },
            })
            .collect();
        Dataset::new(self.lattice_sizes.clone(), p, d, self.intercept, records)
    }

    pub fn recompute_checksum(&self) -> u64 {
        design_checksum(&self.x, &self.u)
    }
}

/// Builds the design for sweep entry `which_n` from an explicit RNG.
pub fn generate_design_with(
    scenario: &SimulationScenario,
    which_n: usize,
    rng: &mut ChaCha8Rng,
) -> Result<FrozenDesign> {
    let sizes = scenario
        .n_list
        .get(which_n)
        .ok_or_else(|| Error::InvalidParameter(format!("no lattice at n index {which_n}")))?
        .clone();
    let truth = &scenario.truth;
    let (d, m) = (scenario.d(), scenario.dependence_range);
    let std_normal = Normal::standard();
    let loc_fields: Vec<Vec<f64>> = (0..d)
        .map(|_| gaussian_field(rng, &sizes, scenario.location_field, m))
        .collect();
    let cov = &truth.covariates;
    let cov_fields: Vec<Vec<f64>> = (0..cov.means.len())
        .map(|_| gaussian_field(rng, &sizes, scenario.covariate_field, m))
        .collect();

    let total: usize = sizes.iter().product();
    let mut x = Vec::with_capacity(total);
    let mut u = Vec::with_capacity(total);
    for i in 0..total {
        let ui: Vec<f64> = (0..d)
            .map(|s| {
                let q = std_normal.cdf(loc_fields[s][i]).clamp(1e-16, 1.0 - 1e-16);
                truth.location.quantile(s, q)
            })
            .collect();
        let mut xi = Vec::with_capacity(cov.p());
        if cov.intercept {
            xi.push(1.0);
        }
        for (j, f) in cov_fields.iter().enumerate() {
            xi.push(cov.means[j] + cov.sds[j] * f[i]);
        }
        u.push(ui);
        x.push(xi);
    }
    let mean = x
        .iter()
        .zip(&u)
        .map(|(xi, ui): (&Vec<f64>, &Vec<f64>)| xi.iter().zip(truth.beta(ui)).map(|(a, b)| a * b).sum())
        .collect();
    let noise_sd = u.iter().map(|ui| truth.sigma(ui).max(0.0).sqrt()).collect();
    let checksum = design_checksum(&x, &u);
    Ok(FrozenDesign {
        which_n,
        indices: lattice_positions(&sizes).map(LatticeIndex::new).collect(),
        lattice_sizes: sizes,
        intercept: cov.intercept,
        x,
        u,
        mean,
        noise_sd,
        checksum,
    })
}

/// The frozen design of sweep entry `which_n` (keyed by seed and index only).
pub fn generate_design(scenario: &SimulationScenario, which_n: usize) -> Result<FrozenDesign> {
    let mut rng = stream(scenario.seed, &[DESIGN_STREAM, which_n as u64]);
    generate_design_with(scenario, which_n, &mut rng)
}

/// Standard normal noise for one replica; shared by every h and estimator.
pub fn replica_noise(scenario: &SimulationScenario, which_n: usize, replica: usize, n: usize) -> Vec<f64> {
    let mut rng = stream(scenario.seed, &[NOISE_STREAM, which_n as u64, replica as u64]);
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// Dataset for sweep entry `which_n` with the responses of replica 0.
pub fn generate_field(scenario: &SimulationScenario, which_n: usize) -> Result<(Dataset, FrozenDesign)> {
    scenario.validate()?;
    let design = generate_design(scenario, which_n)?;
    let eps = replica_noise(scenario, which_n, 0, design.len());
    let ds = design.dataset(&design.responses(&eps))?;
    Ok((ds, design))
}

/// Sample autocorrelation of a lattice field at a fixed offset.
pub fn lag_autocorrelation(values: &[f64], sizes: &[usize], offset: &[isize]) -> Result<f64> {
    let total: usize = sizes.iter().product();
    if values.len() != total || offset.len() != sizes.len() {
        return Err(Error::DimensionMismatch {
            what: "lattice field",
            expected: total,
            found: values.len(),
        });
    }
    let n = total as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let (cov, pairs) = lagged_products(values, sizes, offset, mean);
    if pairs == 0 || var == 0.0 {
        return Err(Error::DegenerateGrid("no lagged pairs or zero variance".into()));
    }
    Ok(cov / pairs as f64 / var)
}

/// Autocorrelation pooled over every offset with infinite norm exactly `k`.
pub fn shell_autocorrelation(values: &[f64], sizes: &[usize], k: usize) -> Result<f64> {
    let total: usize = sizes.iter().product();
    if values.len() != total {
        return Err(Error::DimensionMismatch {
            what: "lattice field",
            expected: total,
            found: values.len(),
        });
    }
    if k == 0 {
        return Ok(1.0);
    }
    let n = total as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let side = vec![2 * k + 1; sizes.len()];
    let (mut cov, mut pairs) = (0.0, 0usize);
    for o in lattice_positions(&side) {
        let offset: Vec<isize> = o.iter().map(|&c| c as isize - 1 - k as isize).collect();
        if offset.iter().map(|c| c.unsigned_abs()).max() != Some(k) {
            continue;
        }
        let (c, n) = lagged_products(values, sizes, &offset, mean);
        cov += c;
        pairs += n;
    }
    if pairs == 0 || var == 0.0 {
        return Err(Error::DegenerateGrid("no lagged pairs or zero variance".into()));
    }
    Ok(cov / pairs as f64 / var)
}

fn lagged_products(values: &[f64], sizes: &[usize], offset: &[isize], mean: f64) -> (f64, usize) {
    let mut strides = vec![1usize; sizes.len()];
    for k in (0..sizes.len().saturating_sub(1)).rev() {
        strides[k] = strides[k + 1] * sizes[k + 1];
    }
    let (mut acc, mut pairs) = (0.0, 0usize);
    'outer: for pos in lattice_positions(sizes) {
        let mut flat_a = 0;
        let mut flat_b = 0;
        for k in 0..sizes.len() {
            let a = pos[k] as isize - 1;
            let b = a + offset[k];
            if b < 0 || b >= sizes[k] as isize {
                continue 'outer;
            }
            flat_a += a as usize * strides[k];
            flat_b += b as usize * strides[k];
        }
        acc += (values[flat_a] - mean) * (values[flat_b] - mean);
        pairs += 1;
    }
    (acc, pairs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn ma_field_has_unit_variance_and_local_correlation() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let sizes = [60, 60];
        let f = gaussian_field(&mut rng, &sizes, FieldLaw::MaSmoothed, 2);
        assert_eq!(f.len(), 3600);
        let var = f.iter().map(|v| v * v).sum::<f64>() / 3600.0;
        assert!((var - 1.0).abs() < 0.15, "{var}");
        // 3×3 box shifted by one along an axis overlaps in 6 of 9 cells
        let c1 = lag_autocorrelation(&f, &sizes, &[1, 0]).unwrap();
        assert!((c1 - 2.0 / 3.0).abs() < 0.1, "{c1}");
        let c3 = lag_autocorrelation(&f, &sizes, &[3, 0]).unwrap();
        assert!(c3.abs() < 0.1, "{c3}");
    }

    #[test]
    fn iid_field_when_m_is_small() {
        let mut a = ChaCha8Rng::seed_from_u64(9);
        let mut b = ChaCha8Rng::seed_from_u64(9);
        // radius ⌊1/2⌋ = 0 means no smoothing
        assert_eq!(
            gaussian_field(&mut a, &[4, 5], FieldLaw::MaSmoothed, 1),
            gaussian_field(&mut b, &[4, 5], FieldLaw::Iid, 0)
        );
    }

    #[test]
    fn lag_offsets_count_pairs() {
        let v: Vec<f64> = (0..12).map(|i| i as f64).collect();
        let (_, pairs) = lagged_products(&v, &[3, 4], &[1, -1], 0.0);
        assert_eq!(pairs, 2 * 3);
    }
}
