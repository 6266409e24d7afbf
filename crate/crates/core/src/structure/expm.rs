//! Matrix exponential and the trace-exponential acyclicity function.

use nalgebra::DMatrix;

fn norm_1(a: &DMatrix<f64>) -> f64 {
    a.column_iter().map(|c| c.iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max)
}

/// `exp(a)` by scaling and squaring with a truncated Taylor series.
///
/// The matrix is scaled so its 1-norm is at most 1/2, where the series
/// converges to machine precision in under 20 terms.
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    assert!(a.is_square(), "expm needs a square matrix");
    let n = a.nrows();
    let norm = norm_1(a);
    let squarings = if norm > 0.5 { (norm / 0.5).log2().ceil() as i32 } else { 0 };
    let scaled = a / 2f64.powi(squarings);
    let mut result = DMatrix::<f64>::identity(n, n);
    let mut term = DMatrix::<f64>::identity(n, n);
    for k in 1..=40 {
        term = &term * &scaled / k as f64;
        result += &term;
        if norm_1(&term) <= f64::EPSILON * 1e-3 * norm_1(&result) {
            break;
        }
    }
    for _ in 0..squarings {
        result = &result * &result;
    }
    result
}

/// `h(W) = tr(exp(W∘W)) − d` and its gradient `exp(W∘W)ᵀ ∘ 2W`.
///
/// `h` is zero exactly when the weighted graph of `W` has no directed cycle.
pub fn acyclicity(w: &DMatrix<f64>) -> (f64, DMatrix<f64>) {
    let e = expm(&w.component_mul(w));
    let h = e.trace() - w.nrows() as f64;
    let grad = e.transpose().component_mul(w) * 2.0;
    (h.max(0.0), grad)
}
