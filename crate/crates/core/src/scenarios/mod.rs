//! End-to-end studies: the two-parameter decay equation under a sweep of
//! correlations, its order convergence, the enzymatic reaction under three
//! correlation assumptions, and a Monte Carlo reference runner.

mod config;
mod decay;
mod enzyme;
mod mc;
mod setup;

pub use config::{CorrelationSetting, ModelKind, ScenarioConfig, ScenarioKind};
pub use decay::{
    convergence_study, decay_covariance, decay_model, decay_setup, decay_setup_hermite, rho_dir,
    run_convergence, run_decay, ConvergenceRow, DecayCaseSummary, DecaySummary, CONVERGENCE_TOL,
    DECAY_MEAN, DECAY_STD,
};
pub use enzyme::{
    correlation_matrix, enzyme_model, enzyme_setup, full_correlation_signs, run_enzyme,
    uniform_collapse, EnzymeSummary, ENZYME_IC, ENZYME_MEAN, ENZYME_STATES, ENZYME_STD,
};
pub use mc::{checkpoints, mc_reference, run_mc_reference, McReference, MAX_SKIPPED_FRACTION};
pub use setup::{table_order, write_standard_outputs, FinalStats, PceSetup, RunHeader};
