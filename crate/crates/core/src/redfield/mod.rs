//! Redfield relaxation: phonon correlation functions, the (non-)secular
//! Redfield superoperator, density-matrix propagation and relaxation times.

mod correlation;
mod density;
mod propagate;
mod relaxation;
mod tensor;

pub use correlation::{phonon_correlation_value, Kernel, PhononCorrelation};
pub use density::{Basis, DensityMatrix};
pub use propagate::{
    equilibrium_state, propagate, unitary_evolution, Eigenmode, Propagator, MAX_CONDITION, MAX_FULL_BLOCK,
};
pub use relaxation::{
    extract_relaxation_time, field_inverted_state, Observable, Relaxation, RelaxationFlags, RelaxationOptions,
};
pub use tensor::{assemble_redfield, AssemblyStats, RedfieldBuilder, RedfieldOptions, RedfieldTensor, DEGENERACY_TOL};

#[cfg(test)]
pub(crate) mod test_support;
