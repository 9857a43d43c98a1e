use serde::{Deserialize, Serialize};

use crate::error::invalid;
use crate::spin::SpinSystem;
use crate::{Error, Result, Tensor3};

use super::Channel;

/// Which spin-Hamiltonian tensor a derivative belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TensorTarget {
    /// g tensor of a centre.
    G(usize),
    /// Hyperfine tensor of an (electron, nucleus) pair.
    Hyperfine(usize, usize),
    /// Point-dipole tensor of a pair of centres.
    Dipolar(usize, usize),
}

impl TensorTarget {
    pub fn channel(self) -> Channel {
        match self {
            TensorTarget::G(_) => Channel::Zeeman,
            TensorTarget::Hyperfine(..) => Channel::Hyperfine,
            TensorTarget::Dipolar(..) => Channel::Dipolar,
        }
    }

    /// Text label used by the derivative file format: g0, A0-1, D0-1.
    pub fn label(self) -> String {
        match self {
            TensorTarget::G(i) => format!("g{i}"),
            TensorTarget::Hyperfine(i, j) => format!("A{i}-{j}"),
            TensorTarget::Dipolar(i, j) => format!("D{i}-{j}"),
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        let bad = || invalid(format!("bad tensor id '{s}' (expected g<i>, A<i>-<j> or D<i>-<j>)"));
        let (head, rest) = s.split_at(1.min(s.len()));
        match head {
            "g" => rest.parse().map(TensorTarget::G).map_err(|_| bad()),
            "A" | "D" => {
                let (i, j) = rest.split_once('-').ok_or_else(bad)?;
                let i: usize = i.parse().map_err(|_| bad())?;
                let j: usize = j.parse().map_err(|_| bad())?;
                Ok(if head == "A" { TensorTarget::Hyperfine(i, j) } else { TensorTarget::Dipolar(i, j) })
            }
            _ => Err(bad()),
        }
    }

    fn centers(self) -> Vec<usize> {
        match self {
            TensorTarget::G(i) => vec![i],
            TensorTarget::Hyperfine(i, j) | TensorTarget::Dipolar(i, j) => vec![i, j],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Fitted,
    Analytic,
    Synthetic,
}

/// ∂T/∂X for atom `atom` of cell `cell` displaced along `s`, per Å.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivativeRecord {
    pub target: TensorTarget,
    pub atom: usize,
    pub s: usize,
    pub cell: [i32; 3],
    pub tensor: Tensor3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CouplingDerivativeSet {
    pub records: Vec<DerivativeRecord>,
    pub provenance: Provenance,
}

impl CouplingDerivativeSet {
    pub fn new(records: Vec<DerivativeRecord>, provenance: Provenance) -> Self {
        Self { records, provenance }
    }

    pub fn empty(provenance: Provenance) -> Self {
        Self { records: Vec::new(), provenance }
    }

    pub fn validate(&self, n_atoms: usize, system: Option<&SpinSystem>) -> Result<()> {
        for (k, r) in self.records.iter().enumerate() {
            if r.atom >= n_atoms || r.s > 2 {
                return Err(invalid(format!(
                    "derivative record {k} refers to atom {} direction {} (crystal has {n_atoms} atoms)",
                    r.atom, r.s
                )));
            }
            if r.tensor.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite(format!("derivative record {k}")));
            }
            if let Some(sys) = system {
                if r.target.centers().iter().any(|&c| c >= sys.centers.len()) {
                    return Err(invalid(format!(
                        "derivative record {k} targets {} but the spin system has {} centres",
                        r.target.label(),
                        sys.centers.len()
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn merged(&self, other: &Self) -> Self {
        let mut records = self.records.clone();
        records.extend(other.records.iter().copied());
        let provenance = if self.records.is_empty() { other.provenance } else { self.provenance };
        Self { records, provenance }
    }

    /// Multiplies every tensor of `channel` by `factor`.
    pub fn scaled_channel(&self, channel: Channel, factor: f64) -> Self {
        let records = self
            .records
            .iter()
            .map(|r| if r.target.channel() == channel { DerivativeRecord { tensor: r.tensor * factor, ..*r } } else { *r })
            .collect();
        Self { records, provenance: self.provenance }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let records = self.records.iter().map(|r| DerivativeRecord { tensor: r.tensor * factor, ..*r }).collect();
        Self { records, provenance: self.provenance }
    }

    pub fn targets(&self) -> Vec<TensorTarget> {
        let mut t: Vec<_> = self.records.iter().map(|r| r.target).collect();
        t.sort();
        t.dedup();
        t
    }

    /// max over (target, s) of |Σ_{atom, cell} ∂T/∂X|, the translational
    /// sum-rule violation.
    pub fn translation_residual(&self) -> f64 {
        let mut sums = std::collections::BTreeMap::<(TensorTarget, usize), Tensor3>::new();
        for r in &self.records {
            *sums.entry((r.target, r.s)).or_insert_with(Tensor3::zeros) += r.tensor;
        }
        sums.values().map(|t| t.abs().max()).fold(0.0, f64::max)
    }
}
