//! Likelihood objects for the drift parameters `theta = (a, b, alpha, beta)`
//! and the closed-form maximum likelihood estimator.
//!
//! Up to `theta`-free terms the log-likelihood is
//! `l(theta) = theta^T d - theta^T A theta / 2`, where the information matrix
//! factors as
//!
//! ```text
//! A = [[1/s1^2, -rho/(s1 s2)], [-rho/(s1 s2), 1/s2^2]] (x) [[int 1/Y, -T], [-T, int Y]]
//! ```
//!
//! so `A^{-1} d` has a closed form in which `(s1, s2, rho)` cancel.

use nalgebra::{Matrix2, Matrix4, Vector2, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functionals::{sufficient_stats_with, Quadrature, SufficientStats};
use crate::model::{DiffusionMatrix, ModelParams};
use crate::path::PathGrid;

/// Relative size below which `int_y * int_inv_y - T^2` counts as zero.
pub const DET_RELATIVE_FLOOR: f64 = 1e-12;

/// Kronecker product of two 2x2 matrices.
pub fn kron2(left: &Matrix2<f64>, right: &Matrix2<f64>) -> Matrix4<f64> {
    Matrix4::from_fn(|r, c| left[(r / 2, c / 2)] * right[(r % 2, c % 2)])
}

fn kron2_vec(left: &Vector2<f64>, right: &Vector2<f64>) -> Vector4<f64> {
    Vector4::new(
        left[0] * right[0],
        left[0] * right[1],
        left[1] * right[0],
        left[1] * right[1],
    )
}

/// The path factor `[[int 1/Y, -T], [-T, int Y]]`.
pub fn path_factor(stats: &SufficientStats) -> Matrix2<f64> {
    let t = stats.horizon;
    Matrix2::new(stats.int_inv_y, -t, -t, stats.int_y)
}

#[derive(Clone, Debug, PartialEq)]
pub struct InformationMatrix {
    pub matrix: Matrix4<f64>,
    pub precision: Matrix2<f64>,
    pub path_factor: Matrix2<f64>,
}

impl InformationMatrix {
    /// Positive definite exactly when the path factor is, i.e. when
    /// `int Y * int 1/Y > T^2`.
    pub fn is_positive_definite(&self) -> bool {
        self.path_factor[(0, 0)] > 0.0 && self.path_factor.determinant() > 0.0
    }

    /// `A^{-1} = precision^{-1} (x) path_factor^{-1}`.
    pub fn inverse(&self) -> Option<Matrix4<f64>> {
        let p = self.precision.try_inverse()?;
        let q = self.path_factor.try_inverse()?;
        Some(kron2(&p, &q))
    }
}

pub fn information_matrix(stats: &SufficientStats, diff: &DiffusionMatrix) -> InformationMatrix {
    let precision = diff.precision_factor();
    let path_factor = path_factor(stats);
    InformationMatrix {
        matrix: kron2(&precision, &path_factor),
        precision,
        path_factor,
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScoreVector(pub Vector4<f64>);

pub fn score_vector(stats: &SufficientStats, diff: &DiffusionMatrix) -> ScoreVector {
    let (s1, s2) = (diff.sigma1(), diff.sigma2());
    let inv11 = 1.0 / diff.s11;
    let inv22 = 1.0 / diff.s22;
    let cross = diff.rho() / (s1 * s2);
    let (iy, ix) = (stats.int_dy_over_y, stats.int_dx_over_y);
    ScoreVector(Vector4::new(
        inv11 * iy - cross * ix,
        -inv11 * stats.dy + cross * stats.dx,
        -cross * iy + inv22 * ix,
        cross * stats.dy - inv22 * stats.dx,
    ))
}

/// The same score, assembled from its Kronecker form
/// `col1(precision) (x) (int dY/Y, -dY) + col2(precision) (x) (int dX/Y, -dX)`.
pub fn score_vector_kronecker(stats: &SufficientStats, diff: &DiffusionMatrix) -> ScoreVector {
    let p = diff.precision_factor();
    let y_part = Vector2::new(stats.int_dy_over_y, -stats.dy);
    let x_part = Vector2::new(stats.int_dx_over_y, -stats.dx);
    ScoreVector(kron2_vec(&p.column(0).into_owned(), &y_part) + kron2_vec(&p.column(1).into_owned(), &x_part))
}

/// `theta^T d - theta^T A theta / 2`, the `theta`-dependent part of the log-likelihood.
pub fn log_likelihood(theta: &Vector4<f64>, stats: &SufficientStats, diff: &DiffusionMatrix) -> f64 {
    let d = score_vector(stats, diff).0;
    let a = information_matrix(stats, diff).matrix;
    theta.dot(&d) - 0.5 * theta.dot(&(a * theta))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MleEstimate {
    pub a_hat: f64,
    pub b_hat: f64,
    pub alpha_hat: f64,
    pub beta_hat: f64,
    pub det_condition: f64,
    pub used_log_identity: bool,
}

impl MleEstimate {
    /// `(a_hat, b_hat, alpha_hat, beta_hat)`.
    pub fn theta(&self) -> Vector4<f64> {
        Vector4::new(self.a_hat, self.b_hat, self.alpha_hat, self.beta_hat)
    }

    /// `theta_hat - theta` in estimator order.
    pub fn error(&self, params: &ModelParams) -> Vector4<f64> {
        self.theta() - Vector4::from(params.drift())
    }
}

pub(crate) fn checked_det(stats: &SufficientStats) -> Result<f64> {
    let det = stats.det_condition();
    let floor = DET_RELATIVE_FLOOR * stats.int_y * stats.int_inv_y;
    if !(det > floor) || !det.is_finite() {
        return Err(Error::DeterminantNonpositive { det });
    }
    Ok(det)
}

/// Closed-form MLE. The diffusion parameters cancel, so only the path
/// statistics are needed.
pub fn mle(stats: &SufficientStats) -> Result<MleEstimate> {
    let det = checked_det(stats)?;
    let t = stats.horizon;
    let (iy, ix) = (stats.int_dy_over_y, stats.int_dx_over_y);
    Ok(MleEstimate {
        a_hat: (stats.int_y * iy - t * stats.dy) / det,
        b_hat: (t * iy - stats.dy * stats.int_inv_y) / det,
        alpha_hat: (stats.int_y * ix - t * stats.dx) / det,
        beta_hat: (t * ix - stats.dx * stats.int_inv_y) / det,
        det_condition: det,
        used_log_identity: false,
    })
}

/// How `int dY / Y` enters the estimator.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum DyOverYMode {
    /// Left-point Ito sum of `dY / Y`.
    #[default]
    RawSum,
    /// `log Y_T - log y0 + (s1^2 / 2) int ds / Y` with a known `sigma1`.
    LogIdentity { sigma1: f64 },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EstimateOptions {
    #[serde(default)]
    pub dy_over_y: DyOverYMode,
    #[serde(default)]
    pub quadrature: Quadrature,
}

/// Sufficient statistics with `options` applied: the quadrature rule for the
/// time integrals and, in log-identity mode, `int dY / Y` replaced by its
/// Ito-formula value.
pub fn prepare_stats(path: &PathGrid, options: &EstimateOptions) -> Result<SufficientStats> {
    let mut stats = sufficient_stats_with(path, options.quadrature);
    if let DyOverYMode::LogIdentity { sigma1 } = options.dy_over_y {
        if !(sigma1 > 0.0) {
            return Err(Error::param("sigma1", "must be positive"));
        }
        stats.int_dy_over_y = stats.log_identity_value(sigma1);
    }
    Ok(stats)
}

pub fn estimate_from_path(path: &PathGrid, options: &EstimateOptions) -> Result<MleEstimate> {
    let stats = prepare_stats(path, options)?;
    let mut est = mle(&stats)?;
    est.used_log_identity = matches!(options.dy_over_y, DyOverYMode::LogIdentity { .. });
    Ok(est)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stats(int_y: f64, int_inv_y: f64, t: f64) -> SufficientStats {
        SufficientStats {
            horizon: t,
            int_y,
            int_inv_y,
            dy: 0.0,
            dx: 0.0,
            int_dy_over_y: 0.0,
            int_dx_over_y: 0.0,
            y0: 1.0,
            y_end: 1.0,
        }
    }

    fn unit_diff() -> DiffusionMatrix {
        DiffusionMatrix::from_sigmas(1.0, 1.0, 0.0).unwrap()
    }

    #[test]
    fn kron2_layout() {
        let l = Matrix2::new(1.0, 2.0, 3.0, 4.0);
        let r = Matrix2::new(5.0, 6.0, 7.0, 8.0);
        let k = kron2(&l, &r);
        assert_eq!(k, l.kronecker(&r));
        assert_eq!(k[(0, 3)], 2.0 * 6.0);
        assert_eq!(k[(3, 0)], 3.0 * 7.0);
    }

    #[test]
    fn identity_precision_example() {
        let a = information_matrix(&stats(2.0, 2.0, 1.0), &unit_diff());
        let block = Matrix2::new(2.0, -1.0, -1.0, 2.0);
        assert_eq!(a.matrix, kron2(&Matrix2::identity(), &block));
        assert!(a.is_positive_definite());
    }

    #[test]
    fn entry_one_three() {
        let diff = DiffusionMatrix::from_sigmas(0.7, 1.9, -0.35).unwrap();
        let s = stats(3.1, 0.9, 1.2);
        let a = information_matrix(&s, &diff).matrix;
        let expected = 0.35 / (0.7 * 1.9) * 0.9;
        assert!((a[(0, 2)] - expected).abs() < 1e-15);
        assert_eq!(a, a.transpose());
    }

    #[test]
    fn score_reductions() {
        let zero = stats(2.0, 2.0, 1.0);
        assert_eq!(score_vector(&zero, &unit_diff()).0, Vector4::zeros());

        let s = SufficientStats {
            dy: 0.4,
            dx: -1.2,
            int_dy_over_y: 0.9,
            int_dx_over_y: 2.2,
            ..zero
        };
        assert_eq!(
            score_vector(&s, &unit_diff()).0,
            Vector4::new(0.9, -0.4, 2.2, 1.2)
        );

        let diff = DiffusionMatrix::from_sigmas(1.3, 0.6, 0.45).unwrap();
        let direct = score_vector(&s, &diff).0;
        let kron = score_vector_kronecker(&s, &diff).0;
        assert!((direct - kron).abs().max() < 1e-12);
    }

    #[test]
    fn log_likelihood_basics() {
        let s = stats(2.0, 2.0, 1.0);
        let diff = DiffusionMatrix::from_sigmas(1.1, 0.9, 0.2).unwrap();
        assert_eq!(log_likelihood(&Vector4::zeros(), &s, &diff), 0.0);
    }

    #[test]
    fn zero_numerators_give_zero_estimate() {
        let t = 3.0;
        let est = mle(&stats(2.0 * t, t, t)).unwrap();
        assert_eq!(est.theta(), Vector4::zeros());
        assert_eq!(est.det_condition, 2.0 * t * t - t * t);
    }

    #[test]
    fn constant_path_stats_are_rejected() {
        for &c in &[0.5, 1.0, 3.0] {
            let t = 2.0;
            let err = mle(&stats(c * t, t / c, t)).unwrap_err();
            assert!(matches!(err, Error::DeterminantNonpositive { .. }));
        }
        // Tiny but positive determinant is treated as zero.
        let err = mle(&stats(1.0 + 1e-14, 1.0, 1.0)).unwrap_err();
        assert!(matches!(err, Error::DeterminantNonpositive { .. }));
    }

    #[test]
    fn shift_of_x_leaves_estimate_unchanged() {
        let y = vec![1.0, 1.4, 0.8, 1.1, 1.9];
        let x = vec![0.0, 0.3, -0.2, 0.5, 0.1];
        let p = PathGrid::new(0.2, y.clone(), x.clone()).unwrap();
        let q = PathGrid::new(0.2, y, x.iter().map(|v| v + 17.25).collect()).unwrap();
        let opts = EstimateOptions::default();
        let (e1, e2) = (
            estimate_from_path(&p, &opts).unwrap(),
            estimate_from_path(&q, &opts).unwrap(),
        );
        // Increments of a shifted path are not bitwise identical, so compare to rounding.
        assert!((e1.theta() - e2.theta()).abs().max() < 1e-12);
    }

    #[test]
    fn two_point_path() {
        // One left-point step makes int_y * int_inv_y = T^2: no unique MLE.
        let p = PathGrid::new(0.1, vec![1.0, 2.0], vec![0.0, 0.5]).unwrap();
        let err = estimate_from_path(&p, &EstimateOptions::default()).unwrap_err();
        assert!(matches!(err, Error::DeterminantNonpositive { .. }));
        // The trapezoid rule sees both endpoints and gives a finite estimate.
        let opts = EstimateOptions {
            quadrature: Quadrature::Trapezoid,
            ..Default::default()
        };
        let est = estimate_from_path(&p, &opts).unwrap();
        assert!(est.theta().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn log_identity_mode_is_recorded() {
        let p = PathGrid::new(0.1, vec![1.0, 2.0, 1.5, 1.2], vec![0.0, 0.5, 0.2, 0.1]).unwrap();
        let opts = EstimateOptions {
            dy_over_y: DyOverYMode::LogIdentity { sigma1: 0.8 },
            ..Default::default()
        };
        assert!(estimate_from_path(&p, &opts).unwrap().used_log_identity);
        assert!(
            !estimate_from_path(&p, &EstimateOptions::default())
                .unwrap()
                .used_log_identity
        );
        let bad = EstimateOptions {
            dy_over_y: DyOverYMode::LogIdentity { sigma1: 0.0 },
            ..Default::default()
        };
        assert!(estimate_from_path(&p, &bad).is_err());
    }
}
