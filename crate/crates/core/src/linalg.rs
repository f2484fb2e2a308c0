//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

/// Singular values of `x`, largest first.
pub fn singular_values(x: &DMatrix<f64>) -> Vec<f64> {
    if x.ncols() == 0 {
        return Vec::new();
    }
    let mut sv: Vec<f64> = x.clone().svd(false, false).singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

/// Ratio of extreme singular values; infinite when rank deficient.
pub fn condition_number(x: &DMatrix<f64>) -> f64 {
    let sv = singular_values(x);
    match (sv.first(), sv.last()) {
        (Some(&hi), Some(&lo)) if lo > hi * 1e-12 && hi > 0.0 => hi / lo,
        (None, None) => 1.0,
        _ => f64::INFINITY,
    }
}

/// Numerical rank with a relative tolerance on singular values.
pub fn rank(x: &DMatrix<f64>, rel_tol: f64) -> usize {
    let sv = singular_values(x);
    let Some(&hi) = sv.first() else { return 0 };
    sv.iter().filter(|&&s| s > hi * rel_tol).count()
}

/// Ordinary least squares through a thin QR; `None` when `x` is rank deficient.
pub fn ols(x: &DMatrix<f64>, y: &DVector<f64>) -> Option<DVector<f64>> {
    if x.nrows() < x.ncols() || rank(x, 1e-10) < x.ncols() {
        return None;
    }
    let qr = x.clone().qr();
    let qty = qr.q().transpose() * y;
    qr.r().solve_upper_triangular(&qty)
}
