//! Spin-phonon coupling: Cartesian derivatives of the spin-Hamiltonian
//! tensors, their fitting from displacement scans, analytic point-dipole
//! derivatives, and projection onto phonon normal modes.

mod derivatives;
mod dipolar;
mod fit;
mod norms;
pub(crate) mod project;

pub use derivatives::{CouplingDerivativeSet, DerivativeRecord, Provenance, TensorTarget};
pub use dipolar::{dipolar_derivative_set, dipolar_derivatives};
pub use fit::{fit_derivative_scan, ComponentFit, DerivativeScan, ScanFit, DEFAULT_REJECTION};
pub use norms::{coupling_norm_distribution, BranchNorm, NormBin, NormDistribution};
pub use project::{
    mode_tensors, project_to_mode, ModeCoupling, ModeTensors, OperatorBasis, ProjectionOptions, StandingWave,
    DEFAULT_OMEGA_MIN,
};

use serde::{Deserialize, Serialize};

/// Interaction channel of a coupling operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Zeeman,
    Hyperfine,
    Dipolar,
}

impl Channel {
    pub const ALL: [Channel; 3] = [Channel::Zeeman, Channel::Hyperfine, Channel::Dipolar];

    pub fn index(self) -> usize {
        match self {
            Channel::Zeeman => 0,
            Channel::Hyperfine => 1,
            Channel::Dipolar => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Channel::Zeeman => "zeeman",
            Channel::Hyperfine => "hyperfine",
            Channel::Dipolar => "dipolar",
        }
    }
}

impl std::str::FromStr for Channel {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "zeeman" | "g" => Ok(Channel::Zeeman),
            "hyperfine" | "a" => Ok(Channel::Hyperfine),
            "dipolar" | "dip" => Ok(Channel::Dipolar),
            other => Err(crate::error::invalid(format!("unknown channel '{other}'"))),
        }
    }
}

/// Subset of channels, stored as flags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChannelSet {
    flags: [bool; 3],
}

impl ChannelSet {
    pub fn all() -> Self {
        Self { flags: [true; 3] }
    }

    pub fn none() -> Self {
        Self { flags: [false; 3] }
    }

    pub fn only(ch: Channel) -> Self {
        Self::none().with(ch)
    }

    pub fn with(mut self, ch: Channel) -> Self {
        self.flags[ch.index()] = true;
        self
    }

    pub fn contains(&self, ch: Channel) -> bool {
        self.flags[ch.index()]
    }

    pub fn iter(&self) -> impl Iterator<Item = Channel> + '_ {
        Channel::ALL.into_iter().filter(|c| self.contains(*c))
    }

    pub fn is_empty(&self) -> bool {
        !self.flags.iter().any(|f| *f)
    }

    /// Parses "zeeman,hyperfine" or "all".
    pub fn parse(s: &str) -> crate::Result<Self> {
        if s.trim().eq_ignore_ascii_case("all") {
            return Ok(Self::all());
        }
        let mut set = Self::none();
        for part in s.split(',').filter(|p| !p.trim().is_empty()) {
            set = set.with(part.parse()?);
        }
        if set.is_empty() {
            return Err(crate::error::invalid("empty channel list"));
        }
        Ok(set)
    }
}

impl Default for ChannelSet {
    fn default() -> Self {
        Self::all()
    }
}
