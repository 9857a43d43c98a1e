use nalgebra::{DMatrix, DVector};

use crate::error::invalid;
use crate::{Error, Result, Tensor3};

use super::TensorTarget;

pub const DEFAULT_REJECTION: f64 = 0.07;

/// Tensors computed at a series of displacements of one atom along one axis.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeScan {
    pub target: TensorTarget,
    pub atom: usize,
    pub s: usize,
    pub cell: [i32; 3],
    /// (displacement Å, tensor).
    pub points: Vec<(f64, Tensor3)>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComponentFit {
    pub p1: f64,
    /// Standard error of p1; NaN when the fit has no residual degrees of freedom.
    pub std_error: f64,
    pub rejected: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanFit {
    /// p1 per component, zeroed where rejected.
    pub tensor: Tensor3,
    pub components: [[ComponentFit; 3]; 3],
}

impl ScanFit {
    pub fn rejected_count(&self) -> usize {
        self.components.iter().flatten().filter(|c| c.rejected).count()
    }
}

impl DerivativeScan {
    pub fn validate(&self) -> Result<()> {
        let mut xs: Vec<f64> = self.points.iter().map(|p| p.0).collect();
        if xs.iter().any(|x| !x.is_finite()) || self.points.iter().any(|p| p.1.iter().any(|v| !v.is_finite())) {
            return Err(Error::NonFinite(format!("scan of atom {} direction {}", self.atom, self.s)));
        }
        xs.sort_by(f64::total_cmp);
        xs.dedup();
        if xs.len() < 5 {
            return Err(Error::RankDeficient(format!(
                "scan of atom {} direction {} has {} distinct displacements; at least 5 are needed",
                self.atom,
                self.s,
                xs.len()
            )));
        }
        if !(xs[0] < 0.0 && xs[xs.len() - 1] > 0.0) {
            return Err(invalid(format!(
                "scan of atom {} direction {} does not span zero displacement",
                self.atom, self.s
            )));
        }
        Ok(())
    }
}

/// Quartic least-squares fit of every tensor component against displacement.
/// The linear coefficient is kept unless its standard error exceeds
/// `rejection`·|p1|.
pub fn fit_derivative_scan(scan: &DerivativeScan, rejection: f64) -> Result<ScanFit> {
    scan.validate()?;
    let n = scan.points.len();
    let xmax = scan.points.iter().map(|p| p.0.abs()).fold(0.0, f64::max);
    let x = DMatrix::from_fn(n, 5, |r, c| (scan.points[r].0 / xmax).powi(c as i32));
    let qr = x.clone().qr();
    let rmat = qr.r();
    let diag_max = (0..5).map(|k| rmat[(k, k)].abs()).fold(0.0, f64::max);
    if (0..5).any(|k| rmat[(k, k)].abs() <= 1e-10 * diag_max) {
        return Err(Error::RankDeficient(format!(
            "quartic design for atom {} direction {} is singular",
            scan.atom, scan.s
        )));
    }
    let rinv = rmat.clone().try_inverse().ok_or_else(|| Error::RankDeficient("quartic design".into()))?;
    let qt = qr.q().transpose();
    // (XᵀX)⁻¹ = R⁻¹R⁻ᵀ; only the (1,1) entry is needed.
    let cov11: f64 = (0..5).map(|k| rinv[(1, k)] * rinv[(1, k)]).sum();
    let dof = n as isize - 5;

    let mut tensor = Tensor3::zeros();
    let mut components = [[ComponentFit { p1: 0.0, std_error: f64::NAN, rejected: false }; 3]; 3];
    for u in 0..3 {
        for v in 0..3 {
            let y = DVector::from_fn(n, |r, _| scan.points[r].1[(u, v)]);
            let coef = &rinv * (&qt * &y);
            let p1 = coef[1] / xmax;
            let std_error = if dof > 0 {
                let resid = &y - &x * &coef;
                let s2 = resid.norm_squared() / dof as f64;
                (s2 * cov11).sqrt() / xmax
            } else {
                f64::NAN
            };
            let rejected = std_error > rejection * p1.abs();
            if rejected {
                log::debug!(
                    "{} atom {} dir {} component ({u},{v}): p1 = {p1:.4e}, se = {std_error:.4e} -> zeroed",
                    scan.target.label(),
                    scan.atom,
                    scan.s
                );
            }
            tensor[(u, v)] = if rejected { 0.0 } else { p1 };
            components[u][v] = ComponentFit { p1, std_error, rejected };
        }
    }
    Ok(ScanFit { tensor, components })
}
