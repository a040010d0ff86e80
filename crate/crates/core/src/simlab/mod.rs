//! Monte Carlo laboratory: m-dependent lattice fields, conditional
//! bias/variance under a frozen design, scaling fits and the GWLE/MLWE
//! variance comparison.

mod field;
mod mc;
mod report;
mod scenario;
mod stats;

pub use field::{
    design_checksum, gaussian_field, generate_design, generate_field, lag_autocorrelation, replica_noise,
    shell_autocorrelation, FrozenDesign,
};
pub use mc::{
    compare_estimators, monte_carlo_imse, run_cell, run_conditional_mc, run_simulation, CellBandwidth, CellReport,
    CompareEntry, CompareReport, ExponentRecord, MonteCarloReport, PointReport,
};
pub use report::{cells_csv, write_csv_cells};
pub use scenario::{CompareSettings, EstimatorKind, FieldLaw, SimulationScenario};
pub use stats::{fit_scaling_exponents, spearman, ExponentFit};
