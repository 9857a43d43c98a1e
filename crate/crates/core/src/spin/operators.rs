use crate::linalg::{identity, kron};
use crate::{CMat, Error, Result, C64};

use super::SpinSystem;

/// Sx, Sy, Sz for one centre and their embeddings in the product space.
#[derive(Debug, Clone)]
pub struct SpinOperators {
    pub dims: Vec<usize>,
    pub total_dim: usize,
    pub local: Vec<[CMat; 3]>,
    pub embedded: Vec<[CMat; 3]>,
}

impl SpinOperators {
    pub fn dim(&self) -> usize {
        self.total_dim
    }

    pub fn n_centers(&self) -> usize {
        self.dims.len()
    }

    /// Embedded S_u of centre `i`.
    pub fn component(&self, i: usize, u: usize) -> &CMat {
        &self.embedded[i][u]
    }
}

/// Spin matrices in the |s, m⟩ basis ordered m = s, s-1, …, -s.
pub fn spin_matrices(twice_s: u32) -> [CMat; 3] {
    let n = twice_s as usize + 1;
    let s = twice_s as f64 / 2.0;
    let m = |k: usize| s - k as f64;
    let zero = C64::new(0.0, 0.0);
    // S+ |m⟩ = sqrt(s(s+1) - m(m+1)) |m+1⟩; row k-1 holds m+1.
    let plus = CMat::from_fn(n, n, |r, c| {
        if c >= 1 && r == c - 1 {
            let mc = m(c);
            C64::new((s * (s + 1.0) - mc * (mc + 1.0)).sqrt(), 0.0)
        } else {
            zero
        }
    });
    let sx = CMat::from_fn(n, n, |r, c| (plus[(r, c)] + plus[(c, r)].conj()) * 0.5);
    let sy = CMat::from_fn(n, n, |r, c| (plus[(r, c)] - plus[(c, r)].conj()) * C64::new(0.0, -0.5));
    let sz = CMat::from_fn(n, n, |r, c| if r == c { C64::new(m(r), 0.0) } else { zero });
    [sx, sy, sz]
}

pub fn build_spin_operators(system: &SpinSystem) -> Result<SpinOperators> {
    let dims: Vec<usize> = system.centers.iter().map(|c| c.multiplicity()).collect();
    let total_dim: usize = dims.iter().product();
    if total_dim > system.dimension_cap {
        return Err(Error::Capacity { dim: total_dim, cap: system.dimension_cap });
    }
    let local: Vec<[CMat; 3]> = system.centers.iter().map(|c| spin_matrices(c.twice_s)).collect();
    let embedded = (0..dims.len())
        .map(|i| {
            let before: usize = dims[..i].iter().product();
            let after: usize = dims[i + 1..].iter().product();
            let left = identity(before);
            let right = identity(after);
            let embed = |op: &CMat| kron(&kron(&left, op), &right);
            [embed(&local[i][0]), embed(&local[i][1]), embed(&local[i][2])]
        })
        .collect();
    Ok(SpinOperators { dims, total_dim, local, embedded })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{hermitian_eigen, max_abs, max_abs_diff};
    use crate::spin::{SpinCenter, SpinKind};
    use crate::{Tensor3, Vec3};

    fn commutator(a: &CMat, b: &CMat) -> CMat {
        a * b - b * a
    }

    #[test]
    fn spin_half_sz() {
        let [_, _, sz] = spin_matrices(1);
        assert_eq!(sz[(0, 0)], C64::new(0.5, 0.0));
        assert_eq!(sz[(1, 1)], C64::new(-0.5, 0.0));
    }

    #[test]
    fn commutation_relations_up_to_seven_halves() {
        for twice in 1..=7 {
            let [sx, sy, sz] = spin_matrices(twice);
            let i = C64::new(0.0, 1.0);
            let r1 = commutator(&sx, &sy) - crate::linalg::scale(&sz, i);
            let r2 = commutator(&sy, &sz) - crate::linalg::scale(&sx, i);
            let r3 = commutator(&sz, &sx) - crate::linalg::scale(&sy, i);
            assert!(max_abs(&r1) < 1e-12 && max_abs(&r2) < 1e-12 && max_abs(&r3) < 1e-12);
            let s = twice as f64 / 2.0;
            let casimir = &sx * &sx + &sy * &sy + &sz * &sz;
            let expect = crate::linalg::scale(&identity(twice as usize + 1), C64::new(s * (s + 1.0), 0.0));
            assert!(max_abs_diff(&casimir, &expect) < 1e-12);
            for k in 0..=twice as usize {
                assert!((sz[(k, k)].re - (s - k as f64)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn nuclear_seven_halves_dimension() {
        let c = SpinCenter::new(0, SpinKind::Nuclear, 3.5, Tensor3::identity()).unwrap();
        let sys = SpinSystem::new(vec![c], Vec3::zeros());
        let ops = build_spin_operators(&sys).unwrap();
        assert_eq!(ops.dim(), 8);
        let (e, _) = hermitian_eigen(ops.component(0, 2), "sz").unwrap();
        assert!((e[7] - 3.5).abs() < 1e-14);
    }

    #[test]
    fn two_halves_total_sz() {
        let sys = SpinSystem::new(
            vec![SpinCenter::electronic(0, Tensor3::identity()), SpinCenter::electronic(1, Tensor3::identity())],
            Vec3::zeros(),
        );
        let ops = build_spin_operators(&sys).unwrap();
        let tot = ops.component(0, 2) + ops.component(1, 2);
        let (e, _) = hermitian_eigen(&tot, "sz").unwrap();
        let expect = [-1.0, 0.0, 0.0, 1.0];
        for (a, b) in e.iter().zip(expect) {
            assert!((a - b).abs() < 1e-14);
        }
        for u in 0..3 {
            for v in 0..3 {
                let c = commutator(ops.component(0, u), ops.component(1, v));
                assert_eq!(max_abs(&c), 0.0);
            }
        }
    }

    #[test]
    fn capacity_is_enforced() {
        let centers = (0..9).map(|i| SpinCenter::electronic(i, Tensor3::identity())).collect();
        let sys = SpinSystem::new(centers, Vec3::zeros());
        match build_spin_operators(&sys) {
            Err(Error::Capacity { dim: 512, cap: 256 }) => {}
            other => panic!("expected capacity error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_integer_and_zero_spin() {
        assert!(SpinCenter::new(0, SpinKind::Electronic, 0.0, Tensor3::identity()).is_err());
        assert!(SpinCenter::new(0, SpinKind::Electronic, 0.75, Tensor3::identity()).is_err());
        assert!(SpinCenter::new(0, SpinKind::Electronic, 1.0, Tensor3::identity()).is_ok());
    }
}
