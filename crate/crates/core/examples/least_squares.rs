//! QR least squares, standard errors, and the opt-in ridge fallback for a
//! rank-deficient design.

use tifm::numkit::{fit_least_squares, solve_least_squares, Matrix, RankPolicy};

fn main() -> tifm::Result<()> {
    let design = Matrix::from_rows(&[vec![1.0, 0.0], vec![1.0, 1.0], vec![1.0, 2.0], vec![1.0, 3.0]])?;
    let y = [1.0, 3.0, 5.0, 7.0];
    println!("exact line: {:?}", solve_least_squares(&design, &y)?);

    let noisy = [1.1, 2.9, 5.2, 6.8];
    let fit = fit_least_squares(&design, &noisy, RankPolicy::Strict)?;
    println!(
        "noisy line: intercept {:.3} (se {:.3}), slope {:.3} (se {:.3})",
        fit.coefficients[0],
        fit.std_error(0),
        fit.coefficients[1],
        fit.std_error(1)
    );

    // Two identical columns: strict solving refuses, the fallback reports its penalty.
    let twins = Matrix::from_columns(&[&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]])?;
    match solve_least_squares(&twins, &[2.0, 4.0, 6.0]) {
        Err(e) => println!("strict: {e}"),
        Ok(b) => println!("strict: unexpectedly solved {b:?}"),
    }
    let ridge = fit_least_squares(&twins, &[2.0, 4.0, 6.0], RankPolicy::RidgeFallback)?;
    println!("ridge fallback: {:?} with lambda {:?}", ridge.coefficients, ridge.ridge_lambda);
    Ok(())
}
