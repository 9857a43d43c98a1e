//! Spin centres, spin systems and their operator representations.

mod operators;
mod system;

pub use operators::{build_spin_operators, spin_matrices, SpinOperators};
pub use system::{
    CouplingTag, Magneton, PairCoupling, SpinCenter, SpinKind, SpinSite, SpinSystem,
    DEFAULT_DIMENSION_CAP,
};
