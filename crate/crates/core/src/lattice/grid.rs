use crate::error::invalid;
use crate::{Result, Vec3};

/// Γ-centred n₁×n₂×n₃ mesh in fractional reciprocal coordinates, each
/// component folded into (-½, ½]. The set is closed under q → -q.
pub fn kpoint_grid(mesh: [usize; 3]) -> Result<Vec<Vec3>> {
    if mesh.iter().any(|&n| n == 0) {
        return Err(invalid(format!("grid dimensions must be ≥ 1, got {mesh:?}")));
    }
    let fold = |k: usize, n: usize| {
        let x = k as f64 / n as f64;
        if x > 0.5 {
            x - 1.0
        } else {
            x
        }
    };
    let mut out = Vec::with_capacity(mesh[0] * mesh[1] * mesh[2]);
    for i in 0..mesh[0] {
        for j in 0..mesh[1] {
            for k in 0..mesh[2] {
                out.push(Vec3::new(fold(i, mesh[0]), fold(j, mesh[1]), fold(k, mesh[2])));
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
/// Index of the grid point equal to -q (modulo reciprocal lattice vectors).
pub(crate) fn partner_index(mesh: [usize; 3], index: usize) -> usize {
    let k = index % mesh[2];
    let j = (index / mesh[2]) % mesh[1];
    let i = index / (mesh[1] * mesh[2]);
    let neg = |x: usize, n: usize| (n - x) % n;
    (neg(i, mesh[0]) * mesh[1] + neg(j, mesh[1])) * mesh[2] + neg(k, mesh[2])
}
