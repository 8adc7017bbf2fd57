//! Finite-difference utilities for validating analytic gradients.

/// Central-difference gradient of a scalar function at `x`.
///
/// Each coordinate is perturbed by `±step` in turn; the estimate is
/// `(f(x + step·e_i) − f(x − step·e_i)) / (2·step)`.
pub fn central_difference<F>(mut f: F, x: &[f64], step: f64) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    assert!(step > 0.0, "step must be positive");
    let mut buf = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = buf[i];
        buf[i] = orig + step;
        let f_plus = f(&buf);
        buf[i] = orig - step;
        let f_minus = f(&buf);
        buf[i] = orig;
        grad.push((f_plus - f_minus) / (2.0 * step));
    }
    grad
}

/// Relative error |a − b| / max(|a|, |b|, 1e−6).
///
/// The denominator floor makes near-zero pairs compare at an absolute
/// scale of 1e−6, which absorbs the cancellation noise of central
/// differences (≈1e−11 at step 1e−5) without masking real mismatches.
pub fn relative_error(a: f64, b: f64) -> f64 {
    let denom = a.abs().max(b.abs()).max(1e-6);
    (a - b).abs() / denom
}
