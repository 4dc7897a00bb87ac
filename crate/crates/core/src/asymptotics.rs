//! Limit laws of the drift MLE in the three regimes.
//!
//! Subcritical limits are Gaussian with a closed-form covariance. The critical
//! and supercritical limits involve functionals of a companion process and are
//! sampled: [`LimitSample`] vectors are always ordered `(a, alpha, b, beta)`,
//! matching the scaled errors returned by [`critical_scaled_error`] and
//! [`supercritical_scaled_error`]. Subcritical objects keep the estimator
//! order `(a, b, alpha, beta)`.

use nalgebra::{Matrix2, Matrix4, Vector2, Vector4};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{checked_det, kron2};
use crate::functionals::SufficientStats;
use crate::model::{require_regime, Criticality, ModelParams};
use crate::sim::{simulate_critical_companion, simulate_supercritical_companion};

/// Exact-transition steps used for companion paths on their horizon.
pub const DEFAULT_COMPANION_STEPS: usize = 1000;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scaling {
    #[default]
    Deterministic,
    Random,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LimitSample {
    pub v: Vector4<f64>,
    pub regime: Criticality,
    pub scaling: Scaling,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CovarianceMatrix4(pub Matrix4<f64>);

impl CovarianceMatrix4 {
    pub fn is_symmetric(&self) -> bool {
        (self.0 - self.0.transpose()).abs().max() <= 1e-14 * self.0.abs().max()
    }

    pub fn cholesky(&self) -> Option<Matrix4<f64>> {
        self.0.cholesky().map(|c| c.l())
    }
}

/// `S (x) [[2b/(2a - s1^2), -1], [-1, a/b]]^{-1}`, the covariance of the
/// Gaussian limit of `sqrt(T) (theta_hat - theta)`.
pub fn subcritical_covariance(params: &ModelParams) -> Result<CovarianceMatrix4> {
    params.validate()?;
    require_regime(params, Criticality::Subcritical)?;
    let s2 = params.sigma1 * params.sigma1;
    if params.a <= 0.5 * s2 {
        return Err(Error::Domain(format!(
            "subcritical limit requires a > sigma1^2 / 2, got a = {}",
            params.a
        )));
    }
    let (a, b) = (params.a, params.b);
    let inv_y = 2.0 * b / (2.0 * a - s2);
    let mean_y = a / b;
    // det = 2a / (2a - s1^2) - 1 = s1^2 / (2a - s1^2)
    let det = s2 / (2.0 * a - s2);
    let inner_inv = Matrix2::new(mean_y, 1.0, 1.0, inv_y) / det;
    Ok(CovarianceMatrix4(kron2(&params.diffusion().matrix(), &inner_inv)))
}

/// `sqrt(T) (theta_hat - theta)`.
pub fn subcritical_scaled_error(err: &Vector4<f64>, horizon: f64) -> Vector4<f64> {
    err * horizon.sqrt()
}

/// Random normalization of the subcritical error:
/// `(int 1/Y)^{-1/2} (I_2 (x) [[int 1/Y, -T], [0, sqrt(det)]]) err`, whose
/// limit is `N(0, S (x) I_2)`. Input and output are in estimator order.
pub fn random_scaling_transform(stats: &SufficientStats, err: &Vector4<f64>) -> Result<Vector4<f64>> {
    let det = checked_det(stats)?;
    let (inv, t) = (stats.int_inv_y, stats.horizon);
    let root_det = det.sqrt();
    let norm = 1.0 / inv.sqrt();
    let block = |e0: f64, e1: f64| ((inv * e0 - t * e1) * norm, root_det * e1 * norm);
    let (v0, v1) = block(err[0], err[1]);
    let (v2, v3) = block(err[2], err[3]);
    Ok(Vector4::new(v0, v1, v2, v3))
}

/// Scaled critical error in `(a, alpha, b, beta)` order:
/// `(sqrt(log T) ea, sqrt(log T) e_alpha, T eb, T e_beta)` or, with random
/// scaling, `(sqrt(int 1/Y) ea, sqrt(int 1/Y) e_alpha, sqrt(int Y) eb, sqrt(int Y) e_beta)`.
pub fn critical_scaled_error(stats: &SufficientStats, err: &Vector4<f64>, scaling: Scaling) -> Vector4<f64> {
    let (slow, fast) = match scaling {
        Scaling::Deterministic => (stats.horizon.ln().sqrt(), stats.horizon),
        Scaling::Random => (stats.int_inv_y.sqrt(), stats.int_y.sqrt()),
    };
    Vector4::new(slow * err[0], slow * err[2], fast * err[1], fast * err[3])
}

/// Scaled supercritical error in `(a, alpha, b, beta)` order:
/// `(ea, e_alpha, e^{-bT/2} eb, e^{-bT/2} e_beta)`, or `sqrt(int Y)` in place of
/// `e^{-bT/2}` with random scaling.
pub fn supercritical_scaled_error(
    params: &ModelParams,
    stats: &SufficientStats,
    err: &Vector4<f64>,
    scaling: Scaling,
) -> Vector4<f64> {
    let fast = match scaling {
        Scaling::Deterministic => (-0.5 * params.b * stats.horizon).exp(),
        Scaling::Random => stats.int_y.sqrt(),
    };
    Vector4::new(err[0], err[2], fast * err[1], fast * err[3])
}

fn standard_normal_pair<R: Rng + ?Sized>(rng: &mut R) -> Vector2<f64> {
    Vector2::new(StandardNormal.sample(rng), StandardNormal.sample(rng))
}

/// One draw from the critical (`b = 0`) limit law:
///
/// ```text
/// ( sqrt(a - s1^2/2) S^{1/2} Z2 ; (a - Y1) / int_0^1 Y ; (alpha - X1) / int_0^1 Y )
/// ```
///
/// with `(Y, X)` the companion started at `(0, 0)` and `Z2` independent of it.
/// With random scaling the `sqrt(a - s1^2/2)` factor is dropped and the
/// denominators become `(int_0^1 Y)^{1/2}`.
pub fn critical_limit_sample<R: Rng + ?Sized>(
    params: &ModelParams,
    scaling: Scaling,
    companion_steps: usize,
    rng: &mut R,
) -> Result<LimitSample> {
    require_regime(params, Criticality::Critical)?;
    let c = simulate_critical_companion(params, companion_steps, rng)?;
    let z2 = standard_normal_pair(rng);
    let root_s = params.diffusion().sqrt();
    let (head_scale, denom) = match scaling {
        Scaling::Deterministic => ((params.a - 0.5 * params.sigma1 * params.sigma1).sqrt(), c.int_y),
        Scaling::Random => (1.0, c.int_y.sqrt()),
    };
    let head = root_s * z2 * head_scale;
    Ok(LimitSample {
        v: Vector4::new(
            head[0],
            head[1],
            (params.a - c.y1) / denom,
            (params.alpha - c.x1) / denom,
        ),
        regime: Criticality::Critical,
        scaling,
    })
}

/// One draw from the supercritical (`b < 0`) limit law:
///
/// ```text
/// ( V ; rho (s2/s1) V + s2 sqrt(1 - rho^2) (int Y~)^{-1/2} Z1 ; (-Y~_{-1/b} / b)^{-1/2} S^{1/2} Z2 )
/// V = (log Y~_{-1/b} - log y0) / int_0^{-1/b} Y~ + s1^2/2 - a
/// ```
///
/// where `Y~` solves `dY~ = a dt + s1 sqrt(Y~) dW` from `y0`, and the companion,
/// `Z1` and `Z2` are independent. Random scaling drops the
/// `(-Y~_{-1/b} / b)^{-1/2}` factor.
pub fn supercritical_limit_sample<R: Rng + ?Sized>(
    params: &ModelParams,
    scaling: Scaling,
    companion_steps: usize,
    rng: &mut R,
) -> Result<LimitSample> {
    let c = simulate_supercritical_companion(params, companion_steps, rng)?;
    let z1: f64 = StandardNormal.sample(rng);
    let z2 = standard_normal_pair(rng);
    let p = params;
    let v = (c.y_end.ln() - p.y0.ln()) / c.int_y + 0.5 * p.sigma1 * p.sigma1 - p.a;
    let alpha_coord =
        p.rho * p.sigma2 / p.sigma1 * v + p.sigma2 * (1.0 - p.rho * p.rho).sqrt() * z1 / c.int_y.sqrt();
    let tail_scale = match scaling {
        Scaling::Deterministic => 1.0 / (-c.y_end / p.b).sqrt(),
        Scaling::Random => 1.0,
    };
    let tail = p.diffusion().sqrt() * z2 * tail_scale;
    Ok(LimitSample {
        v: Vector4::new(v, alpha_coord, tail[0], tail[1]),
        regime: Criticality::Supercritical,
        scaling,
    })
}

/// First passage time of a standard Brownian motion to `m = b / s1`,
/// drawn as `m^2 / Z^2`.
pub fn boundary_hitting_time_sample<R: Rng + ?Sized>(params: &ModelParams, rng: &mut R) -> Result<f64> {
    require_regime(params, Criticality::Subcritical)?;
    let m = params.b / params.sigma1;
    loop {
        let z: f64 = StandardNormal.sample(rng);
        if z != 0.0 {
            return Ok(m * m / (z * z));
        }
    }
}
