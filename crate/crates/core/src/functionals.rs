//! Path functionals: the sufficient statistics of the drift likelihood,
//! the realized diffusion matrix and volatility recovery from `X`.
//!
//! Stochastic integrals are always left-point (Ito) sums. The time
//! integrals `int Y ds` and `int ds / Y` default to left-point sums as well
//! and can be switched to the trapezoid rule.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::DiffusionMatrix;
use crate::path::PathGrid;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quadrature {
    #[default]
    LeftPoint,
    Trapezoid,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SufficientStats {
    pub horizon: f64,
    pub int_y: f64,
    pub int_inv_y: f64,
    /// `Y_T - y0`
    pub dy: f64,
    /// `X_T - x0`
    pub dx: f64,
    pub int_dy_over_y: f64,
    pub int_dx_over_y: f64,
    pub y0: f64,
    pub y_end: f64,
}

impl SufficientStats {
    /// `int_y * int_inv_y - T^2`, nonnegative by Cauchy-Schwarz and zero only
    /// for constant paths.
    pub fn det_condition(&self) -> f64 {
        self.int_y * self.int_inv_y - self.horizon * self.horizon
    }

    /// Value of `int dY / Y` implied by Ito's formula for `log Y`:
    /// `log Y_T - log y0 + (s1^2 / 2) int ds / Y`.
    pub fn log_identity_value(&self, sigma1: f64) -> f64 {
        self.y_end.ln() - self.y0.ln() + 0.5 * sigma1 * sigma1 * self.int_inv_y
    }

    /// Statistics of `[0, T1 + T2]` from those of `[0, T1]` and `[T1, T1 + T2]`.
    pub fn concat(&self, next: &SufficientStats) -> SufficientStats {
        SufficientStats {
            horizon: self.horizon + next.horizon,
            int_y: self.int_y + next.int_y,
            int_inv_y: self.int_inv_y + next.int_inv_y,
            dy: self.dy + next.dy,
            dx: self.dx + next.dx,
            int_dy_over_y: self.int_dy_over_y + next.int_dy_over_y,
            int_dx_over_y: self.int_dx_over_y + next.int_dx_over_y,
            y0: self.y0,
            y_end: next.y_end,
        }
    }
}

pub fn sufficient_stats(path: &PathGrid) -> SufficientStats {
    sufficient_stats_with(path, Quadrature::LeftPoint)
}

pub fn sufficient_stats_with(path: &PathGrid, quadrature: Quadrature) -> SufficientStats {
    let dt = path.dt();
    let (y, x) = (path.y(), path.x());
    let n = path.steps();

    let mut sum_y = 0.0;
    let mut sum_inv_y = 0.0;
    let mut int_dy_over_y = 0.0;
    let mut int_dx_over_y = 0.0;
    for k in 0..n {
        let inv = 1.0 / y[k];
        sum_y += y[k];
        sum_inv_y += inv;
        int_dy_over_y += (y[k + 1] - y[k]) * inv;
        int_dx_over_y += (x[k + 1] - x[k]) * inv;
    }
    let (int_y, int_inv_y) = match quadrature {
        Quadrature::LeftPoint => (sum_y * dt, sum_inv_y * dt),
        Quadrature::Trapezoid => (
            (sum_y + 0.5 * (y[n] - y[0])) * dt,
            (sum_inv_y + 0.5 * (1.0 / y[n] - 1.0 / y[0])) * dt,
        ),
    };
    SufficientStats {
        horizon: path.t_end(),
        int_y,
        int_inv_y,
        dy: y[n] - y[0],
        dx: x[n] - x[0],
        int_dy_over_y,
        int_dx_over_y,
        y0: y[0],
        y_end: y[n],
    }
}

pub fn log_identity_value(path: &PathGrid, sigma1: f64) -> f64 {
    sufficient_stats(path).log_identity_value(sigma1)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DiffusionEstimate {
    pub s_hat: DiffusionMatrix,
    pub sigma1_hat: f64,
    pub sigma2_hat: f64,
    pub rho_hat: f64,
    /// The increments are (numerically) collinear and `s_hat` is singular.
    pub rank_deficient: bool,
}

/// Realized diffusion matrix `sum dZ dZ^T / sum Y_k dt` with `dZ = (dY, dX)`.
pub fn diffusion_matrix_estimate(path: &PathGrid) -> Result<DiffusionEstimate> {
    let (y, x) = (path.y(), path.x());
    let (mut qyy, mut qyx, mut qxx) = (0.0, 0.0, 0.0);
    for (wy, wx) in y.windows(2).zip(x.windows(2)) {
        let (dy, dx) = (wy[1] - wy[0], wx[1] - wx[0]);
        qyy += dy * dy;
        qyx += dy * dx;
        qxx += dx * dx;
    }
    let int_y = y[..path.steps()].iter().sum::<f64>() * path.dt();
    if !(int_y > 0.0) {
        return Err(Error::DegeneratePath("int Y ds vanishes".into()));
    }
    let s_hat = DiffusionMatrix {
        s11: qyy / int_y,
        s12: qyx / int_y,
        s22: qxx / int_y,
    };
    let (sigma1_hat, sigma2_hat) = (s_hat.s11.sqrt(), s_hat.s22.sqrt());
    let rho_hat = if sigma1_hat > 0.0 && sigma2_hat > 0.0 {
        (s_hat.s12 / (sigma1_hat * sigma2_hat)).clamp(-1.0, 1.0)
    } else {
        0.0
    };
    let rank_deficient = s_hat.det() <= 1e-12 * s_hat.s11 * s_hat.s22;
    Ok(DiffusionEstimate {
        s_hat,
        sigma1_hat,
        sigma2_hat,
        rho_hat,
        rank_deficient,
    })
}

/// Sliding-window realized variance of `X` divided by `s2^2 h`, `h = window * dt`.
///
/// Entry `k` estimates `Y` on `[t_k, t_{k + window}]`; the output has
/// `x.len() - window` entries.
pub fn recover_volatility(x: &[f64], dt: f64, sigma2: f64, window: usize) -> Result<Vec<f64>> {
    if window == 0 {
        return Err(Error::Domain("window must be at least 1".into()));
    }
    if window >= x.len() {
        return Err(Error::Domain(format!(
            "window {window} needs more than {} path points",
            x.len()
        )));
    }
    if !(sigma2 > 0.0 && dt > 0.0) {
        return Err(Error::Domain("sigma2 and dt must be positive".into()));
    }
    let sq: Vec<f64> = x.windows(2).map(|w| (w[1] - w[0]).powi(2)).collect();
    let norm = 1.0 / (sigma2 * sigma2 * window as f64 * dt);
    let mut out = Vec::with_capacity(x.len() - window);
    // Rolling sum, re-summed every 1024 windows.
    let mut acc: f64 = sq[..window].iter().sum();
    out.push(acc * norm);
    for k in 1..=(sq.len() - window) {
        acc += sq[k + window - 1] - sq[k - 1];
        if k % 1024 == 0 {
            acc = sq[k..k + window].iter().sum();
        }
        out.push(acc.max(0.0) * norm);
    }
    Ok(out)
}
