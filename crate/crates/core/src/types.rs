//! Lattice-indexed samples, fit configuration and result containers.
//!
//! A [`Dataset`] is a sample `(X_i, U_i, y_i)` observed on a rectangular
//! `M`-dimensional lattice. The lattice index carries the dependence
//! structure; the location `U_i` is stored per record and is not derived
//! from the index.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::KernelSpec;

/// 1-based position on the sampling lattice.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LatticeIndex(Vec<usize>);

impl LatticeIndex {
    pub fn new(coords: Vec<usize>) -> Self {
        LatticeIndex(coords)
    }

    pub fn coords(&self) -> &[usize] {
        &self.0
    }

    pub fn dims(&self) -> usize {
        self.0.len()
    }

    /// Infinite-norm distance between two indices of equal length.
    pub fn inf_distance(&self, other: &LatticeIndex) -> usize {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| a.abs_diff(*b))
            .max()
            .unwrap_or(0)
    }
}

impl fmt::Display for LatticeIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (k, c) in self.0.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

/// One observation: covariate row `x` (length p), location `u` (length d), response `y`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub y: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub index: LatticeIndex,
    pub obs: Observation,
}

/// A lattice-indexed sample. Immutable once built.
///
/// Construction only checks the declared shape; record-level problems
/// (missing indices, non-finite values, ...) are reported by
/// [`validate_dataset`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    lattice_sizes: Vec<usize>,
    p: usize,
    d: usize,
    intercept: bool,
    records: Vec<Record>,
}

impl Dataset {
    pub fn new(lattice_sizes: Vec<usize>, p: usize, d: usize, intercept: bool, records: Vec<Record>) -> Result<Self> {
        if lattice_sizes.is_empty() {
            return Err(Error::InvalidDataset("lattice must have M >= 1 axes".into()));
        }
        if lattice_sizes.contains(&0) {
            return Err(Error::InvalidDataset(format!(
                "lattice sizes must be positive, got {lattice_sizes:?}"
            )));
        }
        if p == 0 || d == 0 {
            return Err(Error::InvalidDataset(format!(
                "need p >= 1 and d >= 1, got p = {p}, d = {d}"
            )));
        }
        Ok(Dataset {
            lattice_sizes,
            p,
            d,
            intercept,
            records,
        })
    }

    pub fn m_dims(&self) -> usize {
        self.lattice_sizes.len()
    }

    pub fn lattice_sizes(&self) -> &[usize] {
        &self.lattice_sizes
    }

    /// Ñ = ∏ N_k.
    pub fn n_total(&self) -> usize {
        self.lattice_sizes.iter().product()
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn intercept(&self) -> bool {
        self.intercept
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn responses(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.obs.y).collect()
    }

    pub fn locations(&self) -> Vec<Vec<f64>> {
        self.records.iter().map(|r| r.obs.u.clone()).collect()
    }

    /// Same design, new responses.
    pub fn with_responses(&self, y: &[f64]) -> Result<Dataset> {
        crate::error::check_dim("responses", self.records.len(), y.len())?;
        let records = self
            .records
            .iter()
            .zip(y)
            .map(|(r, &y)| Record {
                index: r.index.clone(),
                obs: Observation {
                    x: r.obs.x.clone(),
                    u: r.obs.u.clone(),
                    y,
                },
            })
            .collect();
        Ok(Dataset {
            records,
            ..self.clone_shape()
        })
    }

    /// Records in a different order, same everything else.
    pub fn permuted(&self, order: &[usize]) -> Result<Dataset> {
        crate::error::check_dim("permutation", self.records.len(), order.len())?;
        let mut seen = vec![false; order.len()];
        for &i in order {
            if i >= order.len() || seen[i] {
                return Err(Error::InvalidParameter("not a permutation".into()));
            }
            seen[i] = true;
        }
        let records = order.iter().map(|&i| self.records[i].clone()).collect();
        Ok(Dataset {
            records,
            ..self.clone_shape()
        })
    }

    fn clone_shape(&self) -> Dataset {
        Dataset {
            lattice_sizes: self.lattice_sizes.clone(),
            p: self.p,
            d: self.d,
            intercept: self.intercept,
            records: Vec::new(),
        }
    }
}

/// A single problem found by [`validate_dataset`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    RecordCount {
        expected: usize,
        found: usize,
    },
    IndexDimension {
        record: usize,
        expected: usize,
        found: usize,
    },
    IndexOutOfRange {
        record: usize,
        index: LatticeIndex,
    },
    DuplicateIndex {
        record: usize,
        first: usize,
        index: LatticeIndex,
    },
    MissingIndices {
        count: usize,
        example: LatticeIndex,
    },
    DimensionMismatch {
        record: usize,
        field: String,
        expected: usize,
        found: usize,
    },
    NonFinite {
        record: usize,
        field: String,
    },
    InterceptViolation {
        record: usize,
        value: f64,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::RecordCount { expected, found } => {
                write!(f, "record count {found} differs from lattice size {expected}")
            }
            Violation::IndexDimension {
                record,
                expected,
                found,
            } => write!(
                f,
                "record {record}: lattice index has {found} coordinates, expected {expected}"
            ),
            Violation::IndexOutOfRange { record, index } => {
                write!(f, "record {record}: lattice index {index} outside the lattice")
            }
            Violation::DuplicateIndex { record, first, index } => write!(
                f,
                "record {record}: lattice index {index} already used by record {first}"
            ),
            Violation::MissingIndices { count, example } => {
                write!(f, "{count} lattice positions have no record (e.g. {example})")
            }
            Violation::DimensionMismatch {
                record,
                field,
                expected,
                found,
            } => write!(f, "record {record}: {field} has length {found}, expected {expected}"),
            Violation::NonFinite { record, field } => {
                write!(f, "record {record}: non-finite value in {field}")
            }
            Violation::InterceptViolation { record, value } => {
                write!(f, "record {record}: intercept column is {value}, expected 1")
            }
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    pub warnings: Vec<String>,
}

impl ValidationReport {
    pub fn is_pass(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Lattice side ratio above which an imbalance warning is emitted.
const IMBALANCE_RATIO: f64 = 10.0;

/// Checks lattice completeness, record dimensions, finiteness and the
/// intercept column. Never fails; problems are collected in the report.
pub fn validate_dataset(dataset: &Dataset) -> ValidationReport {
    let mut report = ValidationReport::default();
    let sizes = dataset.lattice_sizes();
    let m = sizes.len();
    let expected = dataset.n_total();

    if dataset.len() != expected {
        report.violations.push(Violation::RecordCount {
            expected,
            found: dataset.len(),
        });
    }

    let mut first_seen: HashMap<&LatticeIndex, usize> = HashMap::with_capacity(dataset.len());
    for (i, rec) in dataset.records().iter().enumerate() {
        let idx = &rec.index;
        if idx.dims() != m {
            report.violations.push(Violation::IndexDimension {
                record: i,
                expected: m,
                found: idx.dims(),
            });
        } else if idx.coords().iter().zip(sizes).any(|(&c, &n)| c < 1 || c > n) {
            report.violations.push(Violation::IndexOutOfRange {
                record: i,
                index: idx.clone(),
            });
        } else if let Some(&first) = first_seen.get(idx) {
            report.violations.push(Violation::DuplicateIndex {
                record: i,
                first,
                index: idx.clone(),
            });
        } else {
            first_seen.insert(idx, i);
        }

        let obs = &rec.obs;
        if obs.x.len() != dataset.p() {
            report.violations.push(Violation::DimensionMismatch {
                record: i,
                field: "x".into(),
                expected: dataset.p(),
                found: obs.x.len(),
            });
        }
        if obs.u.len() != dataset.d() {
            report.violations.push(Violation::DimensionMismatch {
                record: i,
                field: "u".into(),
                expected: dataset.d(),
                found: obs.u.len(),
            });
        }
        for (field, bad) in [
            ("x", obs.x.iter().any(|v| !v.is_finite())),
            ("u", obs.u.iter().any(|v| !v.is_finite())),
            ("y", !obs.y.is_finite()),
        ] {
            if bad {
                report.violations.push(Violation::NonFinite {
                    record: i,
                    field: field.into(),
                });
            }
        }
        if dataset.intercept() {
            if let Some(&x1) = obs.x.first() {
                if x1 != 1.0 {
                    report
                        .violations
                        .push(Violation::InterceptViolation { record: i, value: x1 });
                }
            }
        }
    }

    let valid_distinct = first_seen.len();
    if valid_distinct < expected {
        let example = first_missing(sizes, &first_seen);
        report.violations.push(Violation::MissingIndices {
            count: expected - valid_distinct,
            example,
        });
    }

    let min = *sizes.iter().min().unwrap_or(&1) as f64;
    let max = *sizes.iter().max().unwrap_or(&1) as f64;
    if max / min > IMBALANCE_RATIO {
        report.warnings.push(format!(
            "lattice sides are unbalanced (max/min = {:.1}); asymptotics assume comparable N_k",
            max / min
        ));
    }
    report
}

fn first_missing(sizes: &[usize], present: &HashMap<&LatticeIndex, usize>) -> LatticeIndex {
    for coords in lattice_positions(sizes) {
        let idx = LatticeIndex(coords);
        if !present.contains_key(&idx) {
            return idx;
        }
    }
    LatticeIndex(vec![1; sizes.len()])
}

/// All lattice positions in row-major order (last coordinate fastest), 1-based.
pub fn lattice_positions(sizes: &[usize]) -> impl Iterator<Item = Vec<usize>> + '_ {
    let total: usize = sizes.iter().product();
    (0..total).map(move |mut flat| {
        let mut coords = vec![0; sizes.len()];
        for k in (0..sizes.len()).rev() {
            coords[k] = flat % sizes[k] + 1;
            flat /= sizes[k];
        }
        coords
    })
}

/// Λ = diag(a_1, ..., a_d) with all a_s > 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ScaleMatrix(Vec<f64>);

impl ScaleMatrix {
    pub fn new(scales: Vec<f64>) -> Result<Self> {
        if scales.is_empty() {
            return Err(Error::InvalidParameter("scale vector is empty".into()));
        }
        if let Some(bad) = scales.iter().find(|a| !(a.is_finite() && **a > 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "scale parameters must be finite and > 0, got {bad}"
            )));
        }
        Ok(ScaleMatrix(scales))
    }

    /// Λ = I_d.
    pub fn identity(d: usize) -> Self {
        ScaleMatrix(vec![1.0; d])
    }

    pub fn scales(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn det(&self) -> f64 {
        self.0.iter().product()
    }

    /// cΛ.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        ScaleMatrix::new(self.0.iter().map(|a| a * c).collect())
    }
}

impl TryFrom<Vec<f64>> for ScaleMatrix {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        ScaleMatrix::new(v)
    }
}

impl From<ScaleMatrix> for Vec<f64> {
    fn from(s: ScaleMatrix) -> Vec<f64> {
        s.0
    }
}

/// Settings for one GWLE fit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub kernel: KernelSpec,
    pub scales: ScaleMatrix,
    pub bandwidth: f64,
    /// Multiplier for the slope-block ridge used on degenerate local designs; 0 disables it.
    pub ridge_fallback: f64,
    /// Minimum count of positively weighted observations; the effective floor is max(this, (d+1)p).
    pub min_effective_neighbors: usize,
}

impl FitConfig {
    pub fn new(kernel: KernelSpec, scales: ScaleMatrix, bandwidth: f64) -> Result<Self> {
        let cfg = FitConfig {
            kernel,
            scales,
            bandwidth,
            ridge_fallback: 0.0,
            min_effective_neighbors: 0,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_ridge(mut self, ridge: f64) -> Result<Self> {
        self.ridge_fallback = ridge;
        self.validate()?;
        Ok(self)
    }

    pub fn with_min_neighbors(mut self, n: usize) -> Self {
        self.min_effective_neighbors = n;
        self
    }

    pub fn with_bandwidth(&self, h: f64) -> Result<Self> {
        let mut cfg = self.clone();
        cfg.bandwidth = h;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth.is_finite() && self.bandwidth > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "bandwidth must be finite and > 0, got {}",
                self.bandwidth
            )));
        }
        if !(self.ridge_fallback.is_finite() && self.ridge_fallback >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "ridge_fallback must be finite and >= 0, got {}",
                self.ridge_fallback
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionFlag {
    WellPosed,
    RidgeApplied,
}

impl fmt::Display for ConditionFlag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ConditionFlag::WellPosed => "well_posed",
            ConditionFlag::RidgeApplied => "ridge_applied",
        })
    }
}

/// Result of a local fit at one target location.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalFit {
    pub location: Vec<f64>,
    /// β̂(u0), length p.
    pub beta_hat: Vec<f64>,
    /// Slope block: `gradient_hat[s][k]` estimates ∂β_k/∂u_s.
    pub gradient_hat: Vec<Vec<f64>>,
    /// Kish effective sample size (Σw)²/Σw².
    pub effective_n: f64,
    pub condition_flag: ConditionFlag,
}
