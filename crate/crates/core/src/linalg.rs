//! Thin helpers over faer for the dense complex algebra used everywhere.

use faer::linalg::solvers::{DenseSolveCore, Solve};
use faer::Side;

use crate::{CMat, Error, Result, C64};

pub fn zeros(n: usize, m: usize) -> CMat {
    CMat::zeros(n, m)
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

pub fn adjoint(a: &CMat) -> CMat {
    a.adjoint().to_owned()
}

pub fn trace(a: &CMat) -> C64 {
    (0..a.nrows().min(a.ncols())).map(|i| a[(i, i)]).sum()
}

pub fn max_abs(a: &CMat) -> f64 {
    let mut m = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            m = m.max(a[(i, j)].norm());
        }
    }
    m
}

pub fn max_abs_diff(a: &CMat, b: &CMat) -> f64 {
    assert_eq!(a.shape(), b.shape());
    let mut m = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            m = m.max((a[(i, j)] - b[(i, j)]).norm());
        }
    }
    m
}

/// max |A - A†|.
pub fn hermiticity_residual(a: &CMat) -> f64 {
    let n = a.nrows();
    let mut m = 0.0f64;
    for i in 0..n {
        for j in i..n {
            m = m.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    m
}

/// (A + A†)/2.
pub fn hermitian_part(a: &CMat) -> CMat {
    let n = a.nrows();
    CMat::from_fn(n, n, |i, j| (a[(i, j)] + a[(j, i)].conj()) * 0.5)
}

pub fn kron(a: &CMat, b: &CMat) -> CMat {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    CMat::from_fn(ar * br, ac * bc, |i, j| a[(i / br, j / bc)] * b[(i % br, j % bc)])
}

pub fn scale(a: &CMat, s: C64) -> CMat {
    CMat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] * s)
}

/// A ← A + s·B.
pub fn axpy(a: &mut CMat, s: C64, b: &CMat) {
    assert_eq!(a.shape(), b.shape());
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            a[(i, j)] += s * b[(i, j)];
        }
    }
}

/// U† A U.
pub fn rotate_into(a: &CMat, u: &CMat) -> CMat {
    u.adjoint() * (a * u)
}

/// U A U†.
pub fn rotate_out_of(a: &CMat, u: &CMat) -> CMat {
    u * (a * u.adjoint())
}

/// Makes the largest-magnitude component of every column real and
/// positive. Ties within a relative 1e-10 go to the lowest index.
pub fn fix_column_phases(u: &mut CMat) {
    for j in 0..u.ncols() {
        let mut best = 0usize;
        let mut best_mag = -1.0f64;
        for i in 0..u.nrows() {
            let m = u[(i, j)].norm();
            if m > best_mag * (1.0 + 1e-10) {
                best = i;
                best_mag = m;
            }
        }
        if best_mag <= 0.0 {
            continue;
        }
        let phase = u[(best, j)].conj() / best_mag;
        for i in 0..u.nrows() {
            u[(i, j)] *= phase;
        }
        u[(best, j)] = C64::new(u[(best, j)].re, 0.0);
    }
}

/// Hermitian eigendecomposition with ascending eigenvalues and the phase
/// convention of [`fix_column_phases`].
pub fn hermitian_eigen(a: &CMat, context: &str) -> Result<(Vec<f64>, CMat)> {
    let n = a.nrows();
    if n == 0 {
        return Ok((Vec::new(), CMat::zeros(0, 0)));
    }
    let eig = a
        .self_adjoint_eigen(Side::Lower)
        .map_err(|_| Error::Eigen { context: context.to_string() })?;
    let values: Vec<f64> = eig.S().column_vector().iter().map(|z| z.re).collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Eigen { context: context.to_string() });
    }
    let mut u = eig.U().to_owned();
    fix_column_phases(&mut u);
    Ok((values, u))
}

/// General (non-Hermitian) eigendecomposition: eigenvalues and right
/// eigenvectors as columns.
pub fn general_eigen(a: &CMat, context: &str) -> Result<(Vec<C64>, CMat)> {
    if a.nrows() == 0 {
        return Ok((Vec::new(), CMat::zeros(0, 0)));
    }
    let eig = a.eigen().map_err(|_| Error::Eigen { context: context.to_string() })?;
    let values: Vec<C64> = eig.S().column_vector().iter().cloned().collect();
    if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(Error::Eigen { context: context.to_string() });
    }
    Ok((values, eig.U().to_owned()))
}

/// Solves A X = B with partial-pivot LU.
pub fn solve(a: &CMat, b: &CMat) -> CMat {
    a.partial_piv_lu().solve(b)
}

pub fn inverse(a: &CMat) -> CMat {
    a.partial_piv_lu().inverse()
}

/// 1-norm condition estimate ‖A‖₁‖A⁻¹‖₁ computed with an explicit inverse.
pub fn condition_number(a: &CMat) -> f64 {
    let inv = inverse(a);
    let n1 = |m: &CMat| {
        (0..m.ncols())
            .map(|j| (0..m.nrows()).map(|i| m[(i, j)].norm()).sum::<f64>())
            .fold(0.0, f64::max)
    };
    let c = n1(a) * n1(&inv);
    if c.is_finite() {
        c
    } else {
        f64::INFINITY
    }
}

pub fn to_nalgebra(a: &CMat) -> nalgebra::DMatrix<C64> {
    nalgebra::DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)])
}

pub fn from_nalgebra(a: &nalgebra::DMatrix<C64>) -> CMat {
    CMat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)])
}

/// exp(A) by Padé scaling and squaring.
pub fn expm(a: &CMat) -> CMat {
    from_nalgebra(&to_nalgebra(a).exp())
}

/// Matrix-vector product for a column stored as a slice.
pub fn matvec(a: &CMat, x: &[C64]) -> Vec<C64> {
    let mut y = vec![C64::new(0.0, 0.0); a.nrows()];
    for (j, xj) in x.iter().enumerate() {
        if *xj == C64::new(0.0, 0.0) {
            continue;
        }
        for (i, yi) in y.iter_mut().enumerate() {
            *yi += a[(i, j)] * xj;
        }
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_hermitian(n: usize, seed: u64) -> CMat {
        let mut s = seed;
        let mut next = || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let a = CMat::from_fn(n, n, |_, _| C64::new(next(), next()));
        hermitian_part(&a)
    }

    #[test]
    fn hermitian_eigen_reconstructs() {
        let a = random_hermitian(7, 3);
        let (e, u) = hermitian_eigen(&a, "test").unwrap();
        let d = CMat::from_fn(7, 7, |i, j| if i == j { C64::new(e[i], 0.0) } else { C64::new(0.0, 0.0) });
        let back = rotate_out_of(&d, &u);
        assert!(max_abs_diff(&back, &a) < 1e-12);
        assert!(e.windows(2).all(|w| w[0] <= w[1]));
        let uu = u.adjoint() * &u;
        assert!(max_abs_diff(&uu, &identity(7)) < 1e-12);
        for j in 0..7 {
            let big = (0..7).max_by(|&x, &y| u[(x, j)].norm().partial_cmp(&u[(y, j)].norm()).unwrap()).unwrap();
            assert!(u[(big, j)].im == 0.0 && u[(big, j)].re > 0.0);
        }
    }

    #[test]
    fn kron_dimensions_and_values() {
        let a = CMat::from_fn(2, 2, |i, j| C64::new((i * 2 + j) as f64, 0.0));
        let b = identity(3);
        let k = kron(&a, &b);
        assert_eq!(k.shape(), (6, 6));
        assert_eq!(k[(3, 0)], C64::new(2.0, 0.0));
        assert_eq!(k[(4, 4)], C64::new(3.0, 0.0));
        assert_eq!(k[(4, 3)], C64::new(0.0, 0.0));
    }

    #[test]
    fn expm_of_diagonal() {
        let a = CMat::from_fn(2, 2, |i, j| if i == j { C64::new(-(i as f64 + 1.0), 0.3) } else { C64::new(0.0, 0.0) });
        let e = expm(&a);
        let expect = C64::new(-2.0, 0.3).exp();
        assert!((e[(1, 1)] - expect).norm() < 1e-14);
    }
}
