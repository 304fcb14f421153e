//! Least-squares fitting helpers: decay-rate (tail) fits in log-log
//! coordinates and small linear models used for extrapolation.

use nalgebra::{DMatrix, DVector};

use crate::error::{CoreError, Result};

/// Decay model for [`fit_decay_tail`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DecayModel {
    /// `y = c · r^(−p)`
    Power,
    /// `y = c · r^(−p) · ln r`
    PowerLog,
}

/// Result of a tail fit.
#[derive(Clone, Copy, Debug)]
pub struct TailFit {
    pub c: f64,
    pub p: f64,
    /// Maximum relative residual `|y_fit/y − 1|` over the fitted samples.
    pub residual: f64,
}

/// Generic linear least squares: minimize `‖X β − y‖²`, returning `β`.
pub fn linear_least_squares(x: &DMatrix<f64>, y: &DVector<f64>) -> Vec<f64> {
    let xt = x.transpose();
    let normal = &xt * x;
    let rhs = &xt * y;
    let sol = normal
        .lu()
        .solve(&rhs)
        .expect("normal equations are nonsingular for independent model columns");
    sol.iter().copied().collect()
}

/// Fit `y(r) = c·r^(−p)` (or `c·r^(−p)·ln r`) in log-log coordinates.
///
/// Requires at least 10 samples spanning a decade of `r`, all of one sign and
/// nonzero; callers fit the absolute deviation when the sign oscillates.
pub fn fit_decay_tail(r: &[f64], y: &[f64], model: DecayModel) -> Result<TailFit> {
    assert_eq!(r.len(), y.len(), "sample count mismatch");
    if r.len() < 10 {
        return Err(CoreError::Precondition(format!(
            "tail fit needs >= 10 samples, got {}",
            r.len()
        )));
    }
    let span = r.last().unwrap() / r.first().unwrap();
    if span < 10.0 * (1.0 - 1e-12) {
        return Err(CoreError::Precondition(format!(
            "tail fit needs samples spanning a decade, got ratio {span:.3}"
        )));
    }
    let sign = y[0].signum();
    if y.iter().any(|&v| v == 0.0 || v.signum() != sign) {
        return Err(CoreError::SignError);
    }

    let n = r.len();
    let mut xm = DMatrix::zeros(n, 2);
    let mut yv = DVector::zeros(n);
    for i in 0..n {
        let extra = match model {
            DecayModel::Power => 0.0,
            DecayModel::PowerLog => r[i].ln().ln(), // subsumed below
        };
        // ln|y| = ln c − p ln r (+ ln ln r for the PowerLog model)
        xm[(i, 0)] = 1.0;
        xm[(i, 1)] = -r[i].ln();
        let corr = match model {
            DecayModel::Power => 0.0,
            DecayModel::PowerLog => {
                debug_assert!(r[i] > 1.0, "PowerLog model needs r > 1");
                let _ = extra;
                r[i].ln().ln()
            }
        };
        yv[i] = (y[i] * sign).ln() - corr;
    }
    let beta = linear_least_squares(&xm, &yv);
    let c = sign * beta[0].exp();
    let p = beta[1];

    let mut residual = 0.0_f64;
    for i in 0..n {
        let fit = match model {
            DecayModel::Power => c * r[i].powf(-p),
            DecayModel::PowerLog => c * r[i].powf(-p) * r[i].ln(),
        };
        residual = residual.max((fit / y[i] - 1.0).abs());
    }
    Ok(TailFit { c, p, residual })
}

/// Coefficient of `y(r) = c·r^(−p)` for a *known* exponent `p`: the
/// geometric mean of `|y|·r^p`, signed. Unlike the two-parameter log-log
/// fit this does not extrapolate the intercept to `r = 1`, so subleading
/// contamination at the window edge perturbs `c` only by its log-average
/// over the window.
pub fn fit_fixed_power_coefficient(r: &[f64], y: &[f64], p: f64) -> Result<f64> {
    assert_eq!(r.len(), y.len(), "sample count mismatch");
    if r.is_empty() {
        return Err(CoreError::Precondition("empty sample set".into()));
    }
    let sign = y[0].signum();
    if y.iter().any(|&v| v == 0.0 || v.signum() != sign) {
        return Err(CoreError::SignError);
    }
    let mean = r
        .iter()
        .zip(y)
        .map(|(&ri, &yi)| (yi * sign).ln() + p * ri.ln())
        .sum::<f64>()
        / r.len() as f64;
    Ok(sign * mean.exp())
}

/// Fit `y(r) = a + b·r^(−p)` with a fixed rate `p`; returns `(a, b, max
/// absolute residual)`. This is the extrapolation model used for surface
/// integrals whose truncation error decays like `r^(−p)`.
pub fn fit_constant_plus_power(r: &[f64], y: &[f64], p: f64) -> (f64, f64, f64) {
    assert_eq!(r.len(), y.len(), "sample count mismatch");
    let n = r.len();
    let mut xm = DMatrix::zeros(n, 2);
    let mut yv = DVector::zeros(n);
    for i in 0..n {
        xm[(i, 0)] = 1.0;
        xm[(i, 1)] = r[i].powf(-p);
        yv[i] = y[i];
    }
    let beta = linear_least_squares(&xm, &yv);
    let mut res = 0.0_f64;
    for i in 0..n {
        res = res.max((beta[0] + beta[1] * r[i].powf(-p) - y[i]).abs());
    }
    (beta[0], beta[1], res)
}

/// Fit `y(r) = a + b·ln r`; returns `(a, b, max absolute residual)`.
pub fn fit_constant_plus_log(r: &[f64], y: &[f64]) -> (f64, f64, f64) {
    assert_eq!(r.len(), y.len(), "sample count mismatch");
    let n = r.len();
    let mut xm = DMatrix::zeros(n, 2);
    let mut yv = DVector::zeros(n);
    for i in 0..n {
        xm[(i, 0)] = 1.0;
        xm[(i, 1)] = r[i].ln();
        yv[i] = y[i];
    }
    let beta = linear_least_squares(&xm, &yv);
    let mut res = 0.0_f64;
    for i in 0..n {
        res = res.max((beta[0] + beta[1] * r[i].ln() - y[i]).abs());
    }
    (beta[0], beta[1], res)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn geo(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        let step = (hi / lo).ln() / (n - 1) as f64;
        (0..n).map(|i| lo * (step * i as f64).exp()).collect()
    }

    #[test]
    fn recovers_pure_power_law_exactly() {
        let r = geo(10.0, 1000.0, 40);
        let y: Vec<f64> = r.iter().map(|&x| 3.0 * x.powi(-2)).collect();
        let fit = fit_decay_tail(&r, &y, DecayModel::Power).unwrap();
        assert_abs_diff_eq!(fit.c, 3.0, epsilon = 1e-10);
        assert_abs_diff_eq!(fit.p, 2.0, epsilon = 1e-10);
        assert!(fit.residual < 1e-10);
    }

    #[test]
    fn mixed_power_law_reports_dominant_exponent() {
        let r = geo(100.0, 10000.0, 60);
        let y: Vec<f64> = r.iter().map(|&x| x.powi(-3) + x.powi(-5)).collect();
        let fit = fit_decay_tail(&r, &y, DecayModel::Power).unwrap();
        assert!(fit.p > 2.99 && fit.p < 3.01, "p = {}", fit.p);
    }

    #[test]
    fn constant_samples_give_zero_exponent() {
        let r = geo(1.0, 100.0, 20);
        let y = vec![7.5; 20];
        let fit = fit_decay_tail(&r, &y, DecayModel::Power).unwrap();
        assert_abs_diff_eq!(fit.p, 0.0, epsilon = 1e-10);
        assert_abs_diff_eq!(fit.c, 7.5, epsilon = 1e-9);
    }

    #[test]
    fn rejects_mixed_sign_samples() {
        let r = geo(1.0, 100.0, 20);
        let y: Vec<f64> = (0..20).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        assert!(matches!(
            fit_decay_tail(&r, &y, DecayModel::Power),
            Err(CoreError::SignError)
        ));
    }

    #[test]
    fn rejects_narrow_span() {
        let r = geo(10.0, 20.0, 15);
        let y: Vec<f64> = r.iter().map(|&x| x.powi(-1)).collect();
        assert!(fit_decay_tail(&r, &y, DecayModel::Power).is_err());
    }

    #[test]
    fn power_log_model_recovers_coefficient() {
        let r = geo(100.0, 10000.0, 30);
        let y: Vec<f64> = r.iter().map(|&x| -0.6 * x.powi(-3) * x.ln()).collect();
        let fit = fit_decay_tail(&r, &y, DecayModel::PowerLog).unwrap();
        assert_abs_diff_eq!(fit.c, -0.6, epsilon = 1e-9);
        assert_abs_diff_eq!(fit.p, 3.0, epsilon = 1e-9);
    }

    #[test]
    fn fixed_power_coefficient_is_robust_to_edge_contamination() {
        let r = geo(100.0, 10000.0, 40);
        // 1% contamination at the left edge, decaying one power faster
        let y: Vec<f64> = r.iter().map(|&x| 0.8 * x.powi(-3) * (1.0 - 1.0 / x)).collect();
        let c = fit_fixed_power_coefficient(&r, &y, 3.0).unwrap();
        assert!((c / 0.8 - 1.0).abs() < 3e-3, "c = {c}");
        // and exact recovery for a pure power law, including negative sign
        let y2: Vec<f64> = r.iter().map(|&x| -2.5 * x.powi(-3)).collect();
        let c2 = fit_fixed_power_coefficient(&r, &y2, 3.0).unwrap();
        assert_abs_diff_eq!(c2, -2.5, epsilon = 1e-10);
    }

    #[test]
    fn constant_plus_power_extrapolates() {
        let r = geo(100.0, 10000.0, 25);
        let y: Vec<f64> = r.iter().map(|&x| 0.5 + 2.0 / x).collect();
        let (a, b, res) = fit_constant_plus_power(&r, &y, 1.0);
        assert_abs_diff_eq!(a, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(b, 2.0, epsilon = 1e-9);
        assert!(res < 1e-12);
    }

    #[test]
    fn constant_plus_log_fit() {
        let r = geo(10.0, 1000.0, 25);
        let y: Vec<f64> = r.iter().map(|&x| -0.1 + 0.25 * x.ln()).collect();
        let (a, b, _) = fit_constant_plus_log(&r, &y);
        assert_abs_diff_eq!(a, -0.1, epsilon = 1e-12);
        assert_abs_diff_eq!(b, 0.25, epsilon = 1e-12);
    }
}
