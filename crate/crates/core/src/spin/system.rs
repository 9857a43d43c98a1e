use crate::error::invalid;
use crate::units::{BOHR_MAGNETON_CM1_PER_T, NUCLEAR_MAGNETON_CM1_PER_T};
use crate::{Error, Result, Tensor3, Vec3};

/// Default cap on the product Hilbert-space dimension.
pub const DEFAULT_DIMENSION_CAP: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpinKind {
    Electronic,
    Nuclear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Magneton {
    Bohr,
    Nuclear,
}

impl Magneton {
    /// Magneton in cm⁻¹/T.
    pub fn value(self) -> f64 {
        match self {
            Magneton::Bohr => BOHR_MAGNETON_CM1_PER_T,
            Magneton::Nuclear => NUCLEAR_MAGNETON_CM1_PER_T,
        }
    }
}

/// The atom (and lattice cell) carrying a spin centre.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpinSite {
    pub atom: usize,
    pub cell: [i32; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpinCenter {
    pub id: usize,
    pub kind: SpinKind,
    /// 2s, so that half-integer spins stay exact.
    pub twice_s: u32,
    pub g: Tensor3,
    /// Cartesian position in Å.
    pub position: Vec3,
    pub magneton: Magneton,
    pub site: Option<SpinSite>,
}

impl SpinCenter {
    pub fn new(id: usize, kind: SpinKind, s: f64, g: Tensor3) -> Result<Self> {
        let twice = 2.0 * s;
        if !(twice >= 1.0) || (twice - twice.round()).abs() > 1e-9 {
            return Err(invalid(format!("spin quantum number {s} is not a positive half-integer")));
        }
        let magneton = match kind {
            SpinKind::Electronic => Magneton::Bohr,
            SpinKind::Nuclear => Magneton::Nuclear,
        };
        let c = Self {
            id,
            kind,
            twice_s: twice.round() as u32,
            g,
            position: Vec3::zeros(),
            magneton,
            site: None,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn electronic(id: usize, g: Tensor3) -> Self {
        Self::new(id, SpinKind::Electronic, 0.5, g).expect("s = 1/2 is valid")
    }

    pub fn with_position(mut self, position: Vec3) -> Self {
        self.position = position;
        self
    }

    pub fn with_site(mut self, atom: usize, cell: [i32; 3]) -> Self {
        self.site = Some(SpinSite { atom, cell });
        self
    }

    pub fn s(&self) -> f64 {
        self.twice_s as f64 / 2.0
    }

    pub fn multiplicity(&self) -> usize {
        self.twice_s as usize + 1
    }

    /// β of the Zeeman term in cm⁻¹/T.
    pub fn beta(&self) -> f64 {
        self.magneton.value()
    }

    pub fn validate(&self) -> Result<()> {
        if self.twice_s == 0 {
            return Err(invalid(format!("centre {}: 2s+1 must be at least 2", self.id)));
        }
        if self.g.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("g tensor of centre {}", self.id)));
        }
        if self.position.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("position of centre {}", self.id)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CouplingTag {
    Hyperfine,
    Dipolar,
    Custom,
}

/// Bilinear coupling S(i)·D·S(j), stored once per unordered pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PairCoupling {
    pub i: usize,
    pub j: usize,
    /// cm⁻¹.
    pub tensor: Tensor3,
    pub tag: CouplingTag,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpinSystem {
    pub centers: Vec<SpinCenter>,
    pub couplings: Vec<PairCoupling>,
    /// Tesla.
    pub field: Vec3,
    /// Include β_N B·g·I for nuclear centres.
    pub nuclear_zeeman: bool,
    pub dimension_cap: usize,
}

impl SpinSystem {
    pub fn new(centers: Vec<SpinCenter>, field: Vec3) -> Self {
        Self {
            centers,
            couplings: Vec::new(),
            field,
            nuclear_zeeman: true,
            dimension_cap: DEFAULT_DIMENSION_CAP,
        }
    }

    pub fn with_coupling(mut self, i: usize, j: usize, tensor: Tensor3, tag: CouplingTag) -> Self {
        self.couplings.push(PairCoupling { i, j, tensor, tag });
        self
    }

    pub fn dimension(&self) -> usize {
        self.centers.iter().map(|c| c.multiplicity()).product()
    }

    pub fn with_field(&self, field: Vec3) -> Self {
        let mut s = self.clone();
        s.field = field;
        s
    }

    pub fn coupling(&self, i: usize, j: usize, tag: CouplingTag) -> Option<&PairCoupling> {
        self.couplings
            .iter()
            .find(|c| c.tag == tag && ((c.i == i && c.j == j) || (c.i == j && c.j == i)))
    }

    pub fn electronic_centers(&self) -> impl Iterator<Item = &SpinCenter> {
        self.centers.iter().filter(|c| c.kind == SpinKind::Electronic)
    }

    pub fn validate(&self) -> Result<()> {
        if self.centers.is_empty() {
            return Err(invalid("spin system has no centres"));
        }
        for (k, c) in self.centers.iter().enumerate() {
            if c.id != k {
                return Err(invalid(format!("centre ids must be 0..n in order; found id {} at {k}", c.id)));
            }
            c.validate()?;
        }
        let n = self.centers.len();
        let mut seen = std::collections::HashSet::new();
        for c in &self.couplings {
            if c.i >= n || c.j >= n {
                return Err(invalid(format!("coupling ({}, {}) references a missing centre", c.i, c.j)));
            }
            if c.i == c.j {
                return Err(invalid(format!("coupling ({}, {}) couples a centre to itself", c.i, c.j)));
            }
            if c.tensor.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite(format!("coupling tensor ({}, {})", c.i, c.j)));
            }
            let key = (c.i.min(c.j), c.i.max(c.j), c.tag);
            if !seen.insert(key) {
                return Err(invalid(format!("pair ({}, {}) stored twice with tag {:?}", c.i, c.j, c.tag)));
            }
        }
        if self.field.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("external field".into()));
        }
        let dim = self.dimension();
        if dim > self.dimension_cap {
            return Err(Error::Capacity { dim, cap: self.dimension_cap });
        }
        Ok(())
    }
}
