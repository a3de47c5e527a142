//! Dense numerics shared by every other module: a row-major matrix, QR least
//! squares with an opt-in ridge fallback, a small GEMM wrapper for the
//! recurrent model, and seeded random streams.

mod gemm;
mod lstsq;
mod matrix;
mod rng;

pub use gemm::gemm;
pub use lstsq::{
    fit_least_squares, ridge_solve, solve_least_squares, LeastSquares, RankPolicy, RANK_TOLERANCE,
    RIDGE_SCALE,
};
pub use matrix::Matrix;
pub use rng::{gaussian, RngStream};

pub fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample standard deviation (n − 1 denominator); zero for fewer than two values.
pub fn std_dev(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (mean(a), mean(b));
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa * sbb).sqrt()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
