//! Least squares through a Householder QR of the design.
//!
//! The normal equations are never formed. When the caller permits it, a
//! rank-deficient design is rescued with a small ridge penalty
//! `λ = 1e-8 · σ_max²`, solved as the augmented system `[X; √λ I] b ≈ [y; 0]`.

use nalgebra::{DMatrix, DVector};

use super::Matrix;
use crate::error::{Error, Result};

/// Smallest-to-largest singular value ratio below which a design is rank deficient.
pub const RANK_TOLERANCE: f64 = 1e-10;
/// Ridge penalty relative to the largest squared singular value.
pub const RIDGE_SCALE: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum RankPolicy {
    /// Rank deficiency is an error.
    #[default]
    Strict,
    /// Rank deficiency falls back to a ridge solve; the penalty is reported.
    RidgeFallback,
}

/// A solved least-squares problem.
#[derive(Clone, Debug)]
pub struct LeastSquares {
    pub coefficients: Vec<f64>,
    pub residuals: Vec<f64>,
    /// `(XᵀX)⁻¹`, or `(XᵀX + λI)⁻¹` after a ridge fallback.
    pub xtx_inverse: Matrix,
    /// Set when the ridge fallback was used.
    pub ridge_lambda: Option<f64>,
}

impl LeastSquares {
    pub fn n(&self) -> usize {
        self.residuals.len()
    }

    pub fn d(&self) -> usize {
        self.coefficients.len()
    }

    pub fn rss(&self) -> f64 {
        self.residuals.iter().map(|r| r * r).sum()
    }

    /// Residual variance with `n - d` degrees of freedom.
    pub fn sigma2(&self) -> f64 {
        let dof = self.n().saturating_sub(self.d()).max(1);
        self.rss() / dof as f64
    }

    /// Homoscedastic standard error of coefficient `j`.
    pub fn std_error(&self, j: usize) -> f64 {
        (self.sigma2() * self.xtx_inverse.get(j, j)).max(0.0).sqrt()
    }
}

/// Least-squares coefficients; a rank-deficient design is an error.
pub fn solve_least_squares(design: &Matrix, response: &[f64]) -> Result<Vec<f64>> {
    Ok(fit_least_squares(design, response, RankPolicy::Strict)?.coefficients)
}

pub fn fit_least_squares(
    design: &Matrix,
    response: &[f64],
    policy: RankPolicy,
) -> Result<LeastSquares> {
    check_inputs(design, response)?;
    let x = design.to_nalgebra();
    let y = DVector::from_column_slice(response);
    let d = design.cols();

    let (coef, r) = qr_solve(x.clone(), y.clone());
    let (smallest, largest) = singular_range(&r, d);
    let deficient = design.rows() < d || smallest < RANK_TOLERANCE * largest;

    let (coef, r, ridge_lambda) = if !deficient {
        (coef, r, None)
    } else {
        match policy {
            RankPolicy::Strict => return Err(Error::RankDeficient { smallest, largest }),
            RankPolicy::RidgeFallback => {
                let lambda = RIDGE_SCALE * largest * largest;
                if !(lambda > 0.0) {
                    return Err(Error::RankDeficient { smallest, largest });
                }
                let (c, r) = ridge_system(x.clone(), y.clone(), lambda);
                (c, r, Some(lambda))
            }
        }
    };

    finish(&x, &y, coef, &r, ridge_lambda)
}

/// Ridge regression `argmin |Xb − y|² + λ|b|²`, solved by QR of the augmented design.
pub fn ridge_solve(design: &Matrix, response: &[f64], lambda: f64) -> Result<Vec<f64>> {
    check_inputs(design, response)?;
    if !(lambda >= 0.0) {
        return Err(Error::InvalidConfig(format!("ridge penalty {lambda} must be non-negative")));
    }
    let (coef, _) = ridge_system(design.to_nalgebra(), DVector::from_column_slice(response), lambda);
    let out: Vec<f64> = coef.iter().copied().collect();
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("ridge coefficients".into()));
    }
    Ok(out)
}

fn check_inputs(design: &Matrix, response: &[f64]) -> Result<()> {
    if design.rows() != response.len() {
        return Err(Error::DimensionMismatch(format!(
            "design has {} rows, response has {}",
            design.rows(),
            response.len()
        )));
    }
    if design.cols() == 0 {
        return Err(Error::DimensionMismatch("design has no columns".into()));
    }
    if response.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("response".into()));
    }
    Ok(())
}

/// Returns the coefficients and the square `d x d` triangular factor.
fn qr_solve(x: DMatrix<f64>, mut y: DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let d = x.ncols();
    let n = x.nrows();
    let qr = x.qr();
    let mut r = DMatrix::zeros(d, d);
    let r_thin = qr.r();
    r.view_mut((0, 0), (n.min(d), d)).copy_from(&r_thin);
    qr.q_tr_mul(&mut y);
    let mut rhs = DVector::zeros(d);
    for i in 0..n.min(d) {
        rhs[i] = y[i];
    }
    let coef = r
        .solve_upper_triangular(&rhs)
        .unwrap_or_else(|| DVector::from_element(d, f64::NAN));
    (coef, r)
}

fn ridge_system(x: DMatrix<f64>, y: DVector<f64>, lambda: f64) -> (DVector<f64>, DMatrix<f64>) {
    let (n, d) = x.shape();
    let mut aug = DMatrix::zeros(n + d, d);
    aug.view_mut((0, 0), (n, d)).copy_from(&x);
    let root = lambda.sqrt();
    for j in 0..d {
        aug[(n + j, j)] = root;
    }
    let mut yy = DVector::zeros(n + d);
    yy.rows_mut(0, n).copy_from(&y);
    qr_solve(aug, yy)
}

fn singular_range(r: &DMatrix<f64>, d: usize) -> (f64, f64) {
    let sv = r.clone().singular_values();
    let largest = sv.iter().copied().fold(0.0, f64::max);
    let smallest = if sv.len() < d { 0.0 } else { sv.iter().copied().fold(f64::INFINITY, f64::min) };
    (smallest, largest)
}

fn finish(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    coef: DVector<f64>,
    r: &DMatrix<f64>,
    ridge_lambda: Option<f64>,
) -> Result<LeastSquares> {
    let d = coef.len();
    if coef.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("least-squares coefficients".into()));
    }
    let r_inv = r
        .clone()
        .solve_upper_triangular(&DMatrix::identity(d, d))
        .ok_or(Error::RankDeficient { smallest: 0.0, largest: 0.0 })?;
    let xtx_inv = &r_inv * r_inv.transpose();
    let residuals = y - x * &coef;
    Ok(LeastSquares {
        coefficients: coef.iter().copied().collect(),
        residuals: residuals.iter().copied().collect(),
        xtx_inverse: Matrix::from_vec(d, d, xtx_inv.transpose().iter().copied().collect())?,
        ridge_lambda,
    })
}
