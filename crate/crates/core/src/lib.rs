//! Geographically weighted locally linear estimation (GWLE) for spatially
//! varying coefficient models on lattice data, with a product-kernel
//! baseline (MLWE), leading-order bias/variance formulas, bandwidth
//! selection and a Monte Carlo laboratory.
//!
//! ```
//! use gwle::{fit_local, Dataset, FitConfig, KernelSpec, LatticeIndex, Observation, Record, ScaleMatrix};
//!
//! let records = (0..25)
//!     .map(|i| {
//!         let u = vec![(i / 5) as f64 / 4.0, (i % 5) as f64 / 4.0];
//!         let y = 1.0 + 2.0 * u[0] - u[1];
//!         Record { index: LatticeIndex::new(vec![i / 5 + 1, i % 5 + 1]), obs: Observation { x: vec![1.0], u, y } }
//!     })
//!     .collect();
//! let ds = Dataset::new(vec![5, 5], 1, 2, true, records).unwrap();
//! let cfg = FitConfig::new(KernelSpec::gaussian(), ScaleMatrix::identity(2), 0.3).unwrap();
//! let fit = fit_local(&ds, &[0.5, 0.5], &cfg).unwrap();
//! assert!((fit.beta_hat[0] - 1.5).abs() < 1e-10);
//! ```

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod asymptotics;
pub mod bandwidth;
pub mod cli;
pub mod error;
pub mod estimator;
pub mod io;
pub mod kernel;
pub mod mlwe;
pub mod quadrature;
pub mod simlab;
pub mod truth;
pub mod types;

pub use asymptotics::{
    block_moments, lemma_moment_limit, lemma_moment_stat, theoretical_bias, theoretical_bias_closed_form,
    theoretical_moments, theoretical_variance, BlockMoments, Lemma, LemmaQuery, TheoreticalMoments,
};
pub use bandwidth::{cv_bandwidth, optimal_bandwidth_plugin, parse_h_grid, CvResult, IntegrationGrid};
pub use error::{Error, Result};
pub use estimator::{
    build_augmented_row, fit_local, fit_local_with_response, fit_surface, predict, AugmentedRow, SurfacePoint,
};
pub use kernel::{distance, kernel_moments, kernel_weight, KernelFamily, KernelMoments, KernelSpec, RadialKernel};
pub use mlwe::{mlwe_fit_local, mlwe_fit_local_with, BandwidthMatrix, MlweOptions};
pub use truth::{CovariateLaw, LocationLaw, Monomial, Polynomial, ScenarioTruth, SigmaLaw, TruthModel};
pub use types::{
    validate_dataset, ConditionFlag, Dataset, FitConfig, LatticeIndex, LocalFit, Observation, Record, ScaleMatrix,
    ValidationReport, Violation,
};
