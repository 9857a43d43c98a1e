use std::collections::BTreeMap;

use crate::error::invalid;
use crate::Result;

use super::ModeTensors;

/// q-averaged squared norm of one branch, per channel (zeeman, hyperfine, dipolar).
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BranchNorm {
    pub branch: usize,
    /// Mean frequency over the q-points that contributed (cm⁻¹).
    pub omega: f64,
    pub v2: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NormBin {
    pub omega: f64,
    pub v2: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NormDistribution {
    pub branches: Vec<BranchNorm>,
    pub bins: Vec<NormBin>,
    pub bin_width: f64,
    pub n_q: usize,
}

/// V²_sph(ω_α) = (1/N_q) Σ_q Σ_uv (∂T_uv/∂Q_αq)², per channel. The input
/// tensors carry the 1/√N_q of the projection amplitude, so the average
/// reduces to a plain sum of their squared norms. Bins accumulate the same
/// quantity per frequency window.
pub fn coupling_norm_distribution(modes: &[ModeTensors], bin_width: f64) -> Result<NormDistribution> {
    if modes.is_empty() {
        return Err(invalid("no couplings to summarize"));
    }
    if !(bin_width > 0.0) {
        return Err(invalid(format!("bin width must be positive, got {bin_width}")));
    }
    let n_q = modes[0].n_q;
    let mut branches: BTreeMap<usize, (f64, usize, [f64; 3])> = BTreeMap::new();
    let mut bins: BTreeMap<i64, [f64; 3]> = BTreeMap::new();
    for m in modes {
        let mut v2 = [0.0; 3];
        for (t, re, im) in &m.tensors {
            v2[t.channel().index()] += re.norm_squared() + im.norm_squared();
        }
        let e = branches.entry(m.branch).or_insert((0.0, 0, [0.0; 3]));
        e.0 += m.omega;
        e.1 += 1;
        let b = bins.entry((m.omega / bin_width).floor() as i64).or_insert([0.0; 3]);
        for c in 0..3 {
            e.2[c] += v2[c];
            b[c] += v2[c];
        }
    }
    Ok(NormDistribution {
        branches: branches
            .into_iter()
            .map(|(branch, (sum, count, v2))| BranchNorm { branch, omega: sum / count as f64, v2 })
            .collect(),
        bins: bins
            .into_iter()
            .map(|(k, v2)| NormBin { omega: (k as f64 + 0.5) * bin_width, v2 })
            .collect(),
        bin_width,
        n_q,
    })
}
