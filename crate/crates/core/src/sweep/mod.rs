//! Parameter sweeps, perturbation studies, multi-spin scaling and the
//! nested grid/σ convergence protocol.

mod multi;
mod pipeline;
mod plan;

pub use crate::lattice::kpoint_grid;
pub use multi::{multi_spin_scaling, multi_spin_system};
pub use pipeline::{Pipeline, PointParams, PointResult, SweepContext};
pub use plan::{
    converge, perturbation_study, run_sweep, ConvergenceReport, ConvergenceStep, Diagnostics, PerturbationKind,
    SweepAxis, SweepMetadata, SweepPlan, SweepResult, SweepRow, CODE_VERSION, DEFAULT_CONVERGENCE_THRESHOLD,
};
