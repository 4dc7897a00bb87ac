//! Heston model parameters, regime classification and closed-form moments.
//!
//! The model is
//!
//! ```text
//! dY = (a - b Y) dt + sigma1 sqrt(Y) dW
//! dX = (alpha - beta Y) dt + sigma2 sqrt(Y) (rho dW + sqrt(1 - rho^2) dB)
//! ```
//!
//! with `Y` a CIR volatility factor and `X` the log-price.

use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Drift, diffusion and initial-state parameters of the Heston system.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    pub a: f64,
    pub b: f64,
    pub alpha: f64,
    pub beta: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    pub rho: f64,
    pub y0: f64,
    pub x0: f64,
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            ("a", self.a),
            ("b", self.b),
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("sigma1", self.sigma1),
            ("sigma2", self.sigma2),
            ("rho", self.rho),
            ("y0", self.y0),
            ("x0", self.x0),
        ];
        for (name, v) in finite {
            if !v.is_finite() {
                return Err(Error::param(name, format!("must be finite, got {v}")));
            }
        }
        if self.a <= 0.0 {
            return Err(Error::param("a", format!("must be positive, got {}", self.a)));
        }
        if self.sigma1 <= 0.0 {
            return Err(Error::param("sigma1", "must be positive"));
        }
        if self.sigma2 <= 0.0 {
            return Err(Error::param("sigma2", "must be positive"));
        }
        if !(self.rho > -1.0 && self.rho < 1.0) {
            return Err(Error::param(
                "rho",
                format!("must lie in (-1, 1), got {}", self.rho),
            ));
        }
        if self.y0 <= 0.0 {
            return Err(Error::param("y0", "must be positive"));
        }
        Ok(())
    }

    /// `a >= sigma1^2 / 2`: the measures for different drifts are equivalent
    /// and the likelihood is well defined.
    pub fn feller_strict(&self) -> bool {
        self.a >= 0.5 * self.sigma1 * self.sigma1
    }

    pub fn criticality(&self) -> Criticality {
        classify(self)
    }

    pub fn diffusion(&self) -> DiffusionMatrix {
        DiffusionMatrix::from_params(self)
    }

    /// The parameter vector `(a, b, alpha, beta)` in estimator order.
    pub fn drift(&self) -> [f64; 4] {
        [self.a, self.b, self.alpha, self.beta]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criticality {
    Subcritical,
    Critical,
    Supercritical,
}

impl Criticality {
    pub fn name(self) -> &'static str {
        match self {
            Criticality::Subcritical => "subcritical",
            Criticality::Critical => "critical",
            Criticality::Supercritical => "supercritical",
        }
    }
}

pub fn classify(params: &ModelParams) -> Criticality {
    if params.b > 0.0 {
        Criticality::Subcritical
    } else if params.b < 0.0 {
        Criticality::Supercritical
    } else {
        Criticality::Critical
    }
}

pub(crate) fn require_regime(params: &ModelParams, expected: Criticality) -> Result<()> {
    let actual = classify(params);
    if actual == expected {
        Ok(())
    } else {
        Err(Error::Regime {
            expected: expected.name(),
            actual,
        })
    }
}

/// Symmetric diffusion matrix `S = [[s1^2, rho s1 s2], [rho s1 s2, s2^2]]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiffusionMatrix {
    pub s11: f64,
    pub s12: f64,
    pub s22: f64,
}

impl DiffusionMatrix {
    /// Validated constructor; rejects matrices that are not positive definite.
    pub fn new(s11: f64, s12: f64, s22: f64) -> Result<Self> {
        let m = DiffusionMatrix { s11, s12, s22 };
        if !(s11 > 0.0 && s22 > 0.0 && m.det() > 0.0) {
            return Err(Error::Domain(format!(
                "diffusion matrix [[{s11}, {s12}], [{s12}, {s22}]] is not positive definite"
            )));
        }
        Ok(m)
    }

    pub fn from_sigmas(sigma1: f64, sigma2: f64, rho: f64) -> Result<Self> {
        Self::new(sigma1 * sigma1, rho * sigma1 * sigma2, sigma2 * sigma2)
    }

    pub fn from_params(params: &ModelParams) -> Self {
        let (s1, s2) = (params.sigma1, params.sigma2);
        DiffusionMatrix {
            s11: s1 * s1,
            s12: params.rho * s1 * s2,
            s22: s2 * s2,
        }
    }

    pub fn det(&self) -> f64 {
        self.s11 * self.s22 - self.s12 * self.s12
    }

    pub fn sigma1(&self) -> f64 {
        self.s11.sqrt()
    }

    pub fn sigma2(&self) -> f64 {
        self.s22.sqrt()
    }

    pub fn rho(&self) -> f64 {
        self.s12 / (self.sigma1() * self.sigma2())
    }

    pub fn matrix(&self) -> Matrix2<f64> {
        Matrix2::new(self.s11, self.s12, self.s12, self.s22)
    }

    /// `S^{-1} = [[1/s1^2, -rho/(s1 s2)], [-rho/(s1 s2), 1/s2^2]] / (1 - rho^2)`.
    pub fn inverse(&self) -> Matrix2<f64> {
        let d = self.det();
        Matrix2::new(self.s22 / d, -self.s12 / d, -self.s12 / d, self.s11 / d)
    }

    /// The precision factor of the information matrix,
    /// `[[1/s1^2, -rho/(s1 s2)], [-rho/(s1 s2), 1/s2^2]]` (that is `(1 - rho^2) S^{-1}`).
    pub fn precision_factor(&self) -> Matrix2<f64> {
        let (s1, s2) = (self.sigma1(), self.sigma2());
        let r = self.rho();
        let off = -r / (s1 * s2);
        Matrix2::new(1.0 / self.s11, off, off, 1.0 / self.s22)
    }

    /// Symmetric positive definite square root, `(S + sqrt(det) I) / sqrt(tr + 2 sqrt(det))`.
    pub fn sqrt(&self) -> Matrix2<f64> {
        let s = self.det().max(0.0).sqrt();
        let t = (self.s11 + self.s22 + 2.0 * s).sqrt();
        Matrix2::new((self.s11 + s) / t, self.s12 / t, self.s12 / t, (self.s22 + s) / t)
    }
}

/// `(1 - exp(-b t)) / b`, equal to `t` at `b = 0`.
pub(crate) fn decay_integral(b: f64, t: f64) -> f64 {
    let x = b * t;
    if x.abs() < 1e-8 {
        t * (1.0 - 0.5 * x + x * x / 6.0)
    } else {
        -(-x).exp_m1() / b
    }
}

/// `int_0^t (1 - exp(-b u)) / b du`, equal to `t^2 / 2` at `b = 0`.
fn double_decay_integral(b: f64, t: f64) -> f64 {
    let x = b * t;
    if x.abs() < 0.5 {
        // sum_k (-x)^k t^2 / (k + 2)!
        let mut term = 0.5 * t * t;
        let mut sum = term;
        for k in 1..40 {
            term *= -x / (k as f64 + 2.0);
            sum += term;
            if term.abs() <= 1e-17 * sum.abs() {
                break;
            }
        }
        sum
    } else {
        (t - decay_integral(b, t)) / b
    }
}

/// Closed-form `(E Y_t, E X_t)` from a deterministic initial state.
pub fn mean_vector(params: &ModelParams, t: f64) -> (f64, f64) {
    let p = params;
    let i1 = decay_integral(p.b, t);
    let i2 = double_decay_integral(p.b, t);
    let ey = (-p.b * t).exp() * p.y0 + p.a * i1;
    let ex = p.x0 - p.beta * i1 * p.y0 + p.alpha * t - p.beta * i2 * p.a;
    (ey, ex)
}

/// `E(Y_inf^kappa)` under the Gamma(2a/s1^2, 2b/s1^2) stationary law.
pub fn stationary_moment(params: &ModelParams, kappa: f64) -> Result<f64> {
    require_regime(params, Criticality::Subcritical)?;
    let s2 = params.sigma1 * params.sigma1;
    let shape = 2.0 * params.a / s2;
    let rate = 2.0 * params.b / s2;
    if !(kappa > -shape) {
        return Err(Error::Domain(format!(
            "stationary moment of order {kappa} requires kappa > -2a/sigma1^2 = {}",
            -shape
        )));
    }
    Ok((libm::lgamma(shape + kappa) - libm::lgamma(shape) - kappa * rate.ln()).exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn params(a: f64, b: f64, sigma1: f64) -> ModelParams {
        ModelParams {
            a,
            b,
            alpha: 0.0,
            beta: 0.0,
            sigma1,
            sigma2: 1.0,
            rho: 0.0,
            y0: 1.0,
            x0: 0.0,
        }
    }

    #[test]
    fn classify_by_sign_of_b() {
        assert_eq!(classify(&params(1.0, 1.0, 1.0)), Criticality::Subcritical);
        assert_eq!(classify(&params(1.0, 0.0, 1.0)), Criticality::Critical);
        assert_eq!(classify(&params(1.0, -0.5, 1.0)), Criticality::Supercritical);
        assert_eq!(classify(&params(1.0, -0.0, 1.0)), Criticality::Critical);
    }

    #[test]
    fn validation_rejects_bad_params() {
        let mut p = params(1.0, 1.0, 1.0);
        assert!(p.validate().is_ok());
        p.rho = 1.0;
        assert!(p.validate().is_err());
        p.rho = 0.0;
        p.y0 = 0.0;
        assert!(p.validate().is_err());
        p.y0 = 1.0;
        p.a = 0.0;
        assert!(p.validate().is_err());
        p.a = 0.3;
        assert!(p.validate().is_ok());
        assert!(!p.feller_strict());
    }

    #[test]
    fn mean_vector_examples() {
        let (ey, _) = mean_vector(&params(2.0, 1.0, 1.0), 1.0);
        assert!((ey - (2.0 - (-1.0f64).exp())).abs() < 1e-14);
        assert!((ey - 1.63212).abs() < 1e-5);

        let mut p = params(1.0, 0.0, 1.0);
        p.beta = 1.0;
        p.y0 = 0.0;
        let (ey, ex) = mean_vector(&p, 2.0);
        assert!((ey - 2.0).abs() < 1e-15);
        assert!((ex + 2.0).abs() < 1e-15);

        let mut p = params(1.3, -0.7, 0.4);
        p.x0 = -3.0;
        p.y0 = 0.25;
        assert_eq!(mean_vector(&p, 0.0), (0.25, -3.0));
    }

    #[test]
    fn mean_vector_is_continuous_at_zero_b() {
        for &t in &[0.1, 1.0, 3.7, 10.0] {
            let mut p = params(1.5, 0.0, 1.0);
            p.alpha = 0.4;
            p.beta = -1.2;
            p.y0 = 0.8;
            let at_zero = mean_vector(&p, t);
            for eps in [1e-8, -1e-8] {
                p.b = eps;
                let near = mean_vector(&p, t);
                // First-order change in b is O(|b| t^3).
                let bound = 1e-8 * (1.0 + t * t * t);
                assert!((near.0 - at_zero.0).abs() <= bound);
                assert!((near.1 - at_zero.1).abs() <= bound);
            }
        }
    }

    #[test]
    fn mean_vector_matches_quadrature_of_ey() {
        // E X_t = x0 + alpha t - beta int_0^t E Y_u du, by Simpson's rule on E Y.
        let p = ModelParams {
            a: 1.7,
            b: 0.9,
            alpha: 0.3,
            beta: 0.6,
            sigma1: 1.0,
            sigma2: 1.0,
            rho: 0.0,
            y0: 0.4,
            x0: 1.0,
        };
        let t = 2.5;
        let n = 2000;
        let h = t / n as f64;
        let mut s = 0.0;
        for k in 0..=n {
            let w = if k == 0 || k == n {
                1.0
            } else if k % 2 == 1 {
                4.0
            } else {
                2.0
            };
            s += w * mean_vector(&p, k as f64 * h).0;
        }
        let int_ey = s * h / 3.0;
        let (_, ex) = mean_vector(&p, t);
        assert!((ex - (p.x0 + p.alpha * t - p.beta * int_ey)).abs() < 1e-10);
    }

    #[test]
    fn stationary_moment_examples() {
        assert!((stationary_moment(&params(2.0, 4.0, 1.0), 1.0).unwrap() - 0.5).abs() < 1e-12);
        assert!((stationary_moment(&params(1.0, 1.0, 1.0), -1.0).unwrap() - 2.0).abs() < 1e-12);
        assert!((stationary_moment(&params(1.0, 1.0, 1.0), 2.0).unwrap() - 1.5).abs() < 1e-12);
    }

    #[test]
    fn stationary_moment_errors() {
        assert!(matches!(
            stationary_moment(&params(1.0, 0.0, 1.0), 1.0),
            Err(Error::Regime { .. })
        ));
        assert!(matches!(
            stationary_moment(&params(1.0, 1.0, 1.0), -2.0),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn first_and_inverse_moment_product() {
        for &(a, s1) in &[(1.0, 1.0), (2.0, 1.0), (0.8, 0.9), (5.0, 2.0)] {
            let p = params(a, 1.7, s1);
            let m1 = stationary_moment(&p, 1.0).unwrap();
            let mm1 = stationary_moment(&p, -1.0).unwrap();
            let excess = s1 * s1 / (2.0 * a - s1 * s1);
            assert!((m1 * mm1 - 1.0 - excess).abs() < 1e-12);
            assert!(excess > 0.0);
        }
    }

    #[test]
    fn sqrt_squares_back() {
        let s = DiffusionMatrix::from_sigmas(1.3, 0.7, -0.6).unwrap();
        let r = s.sqrt();
        let back = r * r;
        assert!((back - s.matrix()).abs().max() < 1e-14);
        assert!(r[(0, 0)] > 0.0 && r.determinant() > 0.0);
        assert!((s.inverse() * s.matrix() - Matrix2::identity()).abs().max() < 1e-14);
        assert!((s.precision_factor() - s.inverse() * (1.0 - 0.36)).abs().max() < 1e-14);
    }

    #[test]
    fn diffusion_matrix_rejects_singular() {
        assert!(DiffusionMatrix::new(1.0, 1.0, 1.0).is_err());
        assert!(DiffusionMatrix::new(-1.0, 0.0, 1.0).is_err());
    }
}
