//! Central finite-difference gradient checking.
//!
//! Used by the test suites to validate every analytic gradient routine
//! against an independent numerical estimate at 64-bit precision.

/// Central-difference gradient of `loss` at `theta` with perturbation `eps`.
pub fn numeric_gradient(
    theta: &[f64],
    eps: f64,
    mut loss: impl FnMut(&[f64]) -> f64,
) -> Vec<f64> {
    let mut work = theta.to_vec();
    let mut grad = vec![0.0; theta.len()];
    for i in 0..theta.len() {
        let orig = work[i];
        work[i] = orig + eps;
        let up = loss(&work);
        work[i] = orig - eps;
        let down = loss(&work);
        work[i] = orig;
        grad[i] = (up - down) / (2.0 * eps);
    }
    grad
}

/// Largest elementwise relative error between two gradients. Components
/// smaller than `floor` in both vectors are compared absolutely.
pub fn max_rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    const FLOOR: f64 = 1e-6;
    assert_eq!(analytic.len(), numeric.len());
    let mut worst = 0.0f64;
    for (&a, &n) in analytic.iter().zip(numeric) {
        let scale = a.abs().max(n.abs()).max(FLOOR);
        worst = worst.max((a - n).abs() / scale);
    }
    worst
}
