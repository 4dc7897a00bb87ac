//! Path simulation for the Heston system and for the companion processes
//! that appear inside its limit laws.
//!
//! `Y` is always advanced with the exact CIR transition: given `Y_t = y`,
//! `Y_{t+dt} = c * chi'^2(d, lambda)` with
//! `d = 4a / s1^2`, `c = s1^2 (1 - e^{-b dt}) / (4b)` and
//! `lambda = e^{-b dt} y / c`. The noncentral chi-square is drawn as a
//! Poisson mixture of central chi-squares, `chi'^2(d, lambda) = 2 Gamma(d/2 + N)`
//! with `N ~ Poisson(lambda / 2)`, so every draw is strictly positive.
//!
//! `X` is advanced with an Euler step that reuses the realized `Y` innovation
//! in place of `s1 * sqrt(Y) dW`.

use rand::Rng;
use rand_distr::{Distribution, Gamma, Poisson, StandardNormal};

use crate::error::{Error, Result};
use crate::model::{decay_integral, require_regime, Criticality, ModelParams};
use crate::path::PathGrid;

/// Exact one-step CIR transition kernel for a fixed `(a, b, sigma1, dt)`.
#[derive(Clone, Copy, Debug)]
pub struct CirTransition {
    half_df: f64,
    scale: f64,
    decay_over_scale: f64,
}

impl CirTransition {
    pub fn new(a: f64, b: f64, sigma1: f64, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Domain(format!("time step must be positive, got {dt}")));
        }
        if !(a > 0.0 && sigma1 > 0.0) {
            return Err(Error::Domain("CIR transition needs a > 0 and sigma1 > 0".into()));
        }
        let s2 = sigma1 * sigma1;
        let scale = 0.25 * s2 * decay_integral(b, dt);
        Ok(CirTransition {
            half_df: 2.0 * a / s2,
            scale,
            decay_over_scale: (-b * dt).exp() / scale,
        })
    }

    pub fn degrees_of_freedom(&self) -> f64 {
        2.0 * self.half_df
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn noncentrality(&self, y_from: f64) -> f64 {
        self.decay_over_scale * y_from
    }

    /// One draw of `Y_{t+dt}` given `Y_t = y_from`. `y_from = 0` is allowed
    /// (the process then leaves the origin with a central chi-square).
    pub fn sample<R: Rng + ?Sized>(&self, y_from: f64, rng: &mut R) -> Result<f64> {
        let half_lambda = 0.5 * self.noncentrality(y_from);
        let mixing = if half_lambda > 0.0 {
            Poisson::new(half_lambda)
                .map_err(|e| Error::Domain(format!("noncentrality {}: {e}", 2.0 * half_lambda)))?
                .sample(rng)
        } else {
            0.0
        };
        let gamma =
            Gamma::new(self.half_df + mixing, 1.0).map_err(|e| Error::Domain(format!("gamma shape: {e}")))?;
        let y = 2.0 * self.scale * gamma.sample(rng);
        // Gamma draws with shape below one can underflow to zero.
        Ok(y.max(f64::MIN_POSITIVE))
    }
}

pub fn cir_transition_sample<R: Rng + ?Sized>(
    params: &ModelParams,
    y_from: f64,
    dt: f64,
    rng: &mut R,
) -> Result<f64> {
    if !(y_from > 0.0 && y_from.is_finite()) {
        return Err(Error::Domain(format!("y_from must be positive, got {y_from}")));
    }
    CirTransition::new(params.a, params.b, params.sigma1, dt)?.sample(y_from, rng)
}

/// Coefficients of the `X` step that do not depend on the state.
struct XStep {
    alpha: f64,
    beta: f64,
    a: f64,
    b: f64,
    dt: f64,
    coupling: f64,
    orthogonal: f64,
}

impl XStep {
    fn new(params: &ModelParams, a: f64, b: f64, beta: f64, dt: f64) -> Self {
        XStep {
            alpha: params.alpha,
            beta,
            a,
            b,
            dt,
            coupling: params.sigma2 * params.rho / params.sigma1,
            orthogonal: params.sigma2 * (1.0 - params.rho * params.rho).sqrt(),
        }
    }

    fn advance<R: Rng + ?Sized>(&self, x: f64, y: f64, y_next: f64, rng: &mut R) -> f64 {
        let drift = (self.alpha - self.beta * y) * self.dt;
        let w_innovation = y_next - y - (self.a - self.b * y) * self.dt;
        let xi: f64 = StandardNormal.sample(rng);
        x + drift + self.coupling * w_innovation + self.orthogonal * (y * self.dt).sqrt() * xi
    }
}

pub fn simulate_heston_path<R: Rng + ?Sized>(
    params: &ModelParams,
    n_steps: usize,
    dt: f64,
    rng: &mut R,
) -> Result<PathGrid> {
    params.validate()?;
    if n_steps == 0 {
        return Err(Error::Domain("n_steps must be at least 1".into()));
    }
    let kernel = CirTransition::new(params.a, params.b, params.sigma1, dt)?;
    let x_step = XStep::new(params, params.a, params.b, params.beta, dt);

    let mut y = Vec::with_capacity(n_steps + 1);
    let mut x = Vec::with_capacity(n_steps + 1);
    let (mut yk, mut xk) = (params.y0, params.x0);
    y.push(yk);
    x.push(xk);
    for _ in 0..n_steps {
        let y_next = kernel.sample(yk, rng)?;
        xk = x_step.advance(xk, yk, y_next, rng);
        yk = y_next;
        y.push(yk);
        x.push(xk);
    }
    Ok(PathGrid::from_parts_unchecked(dt, y, x))
}

/// Terminal functionals of the critical companion `(Y, X)` on `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CriticalCompanion {
    pub y1: f64,
    pub int_y: f64,
    pub x1: f64,
}

/// Simulates `dY = a dt + s1 sqrt(Y) dW`, `dX = alpha dt + s2 sqrt(Y) dW~`
/// from `(0, 0)` on `[0, 1]`; `int_y` is a left-point sum.
pub fn simulate_critical_companion<R: Rng + ?Sized>(
    params: &ModelParams,
    n_steps: usize,
    rng: &mut R,
) -> Result<CriticalCompanion> {
    params.validate()?;
    if params.a <= 0.5 * params.sigma1 * params.sigma1 {
        return Err(Error::Domain(format!(
            "critical companion requires a > sigma1^2 / 2, got a = {}, sigma1 = {}",
            params.a, params.sigma1
        )));
    }
    if n_steps == 0 {
        return Err(Error::Domain("n_steps must be at least 1".into()));
    }
    let dt = 1.0 / n_steps as f64;
    let kernel = CirTransition::new(params.a, 0.0, params.sigma1, dt)?;
    let x_step = XStep::new(params, params.a, 0.0, 0.0, dt);

    let (mut y, mut x, mut int_y) = (0.0, 0.0, 0.0);
    for _ in 0..n_steps {
        int_y += y * dt;
        let y_next = kernel.sample(y, rng)?;
        x = x_step.advance(x, y, y_next, rng);
        y = y_next;
    }
    Ok(CriticalCompanion { y1: y, int_y, x1: x })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SupercriticalCompanion {
    /// The companion CIR at horizon `-1/b`.
    pub y_end: f64,
    /// Left-point sum of the companion over `[0, -1/b]`.
    pub int_y: f64,
}

/// Simulates `dY = a dt + s1 sqrt(Y) dW` from `y0` up to the horizon `-1/b`.
pub fn simulate_supercritical_companion<R: Rng + ?Sized>(
    params: &ModelParams,
    n_steps: usize,
    rng: &mut R,
) -> Result<SupercriticalCompanion> {
    params.validate()?;
    require_regime(params, Criticality::Supercritical)?;
    if !params.feller_strict() {
        return Err(Error::Domain(
            "supercritical companion requires a >= sigma1^2 / 2".into(),
        ));
    }
    if n_steps == 0 {
        return Err(Error::Domain("n_steps must be at least 1".into()));
    }
    let horizon = -1.0 / params.b;
    let dt = horizon / n_steps as f64;
    let kernel = CirTransition::new(params.a, 0.0, params.sigma1, dt)?;
    let (mut y, mut int_y) = (params.y0, 0.0);
    for _ in 0..n_steps {
        int_y += y * dt;
        y = kernel.sample(y, rng)?;
    }
    Ok(SupercriticalCompanion { y_end: y, int_y })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::mean_vector;
    use crate::rng::derive_stream;

    fn params() -> ModelParams {
        ModelParams {
            a: 2.0,
            b: 1.0,
            alpha: 0.5,
            beta: 1.0,
            sigma1: 1.0,
            sigma2: 1.0,
            rho: -0.5,
            y0: 1.0,
            x0: 0.0,
        }
    }

    fn mean_and_se(xs: &[f64]) -> (f64, f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        (m, (v / n).sqrt(), v)
    }

    #[test]
    fn kernel_constants() {
        let k = CirTransition::new(2.0, 1.0, 1.0, 1.0).unwrap();
        let e = (-1.0f64).exp();
        assert!((k.degrees_of_freedom() - 8.0).abs() < 1e-15);
        assert!((k.scale() - (1.0 - e) / 4.0).abs() < 1e-15);
        assert!((k.noncentrality(1.0) - 4.0 * e / (1.0 - e)).abs() < 1e-12);

        let k0 = CirTransition::new(2.0, 0.0, 1.0, 0.5).unwrap();
        assert!((k0.scale() - 0.125).abs() < 1e-15);
        assert!((k0.noncentrality(1.0) - 8.0).abs() < 1e-12);
    }

    #[test]
    fn transition_mean_matches_closed_form() {
        let p = params();
        let mut rng = derive_stream(11, 0, 0);
        let draws: Vec<f64> = (0..100_000)
            .map(|_| cir_transition_sample(&p, 1.0, 1.0, &mut rng).unwrap())
            .collect();
        let (m, se, _) = mean_and_se(&draws);
        let expected = 2.0 - (-1.0f64).exp();
        assert!(
            (m - expected).abs() < 3.0 * se,
            "mean {m} vs {expected} (se {se})"
        );
    }

    // Frozen by `euler_variance_oracle` below: 10^5 Euler paths at dt = 1e-4.
    const EULER_VAR_Y1: f64 = 0.6310;
    const EULER_VAR_SE: f64 = 0.0036;

    #[test]
    fn transition_variance_matches_euler_oracle() {
        let p = params();
        let mut rng = derive_stream(12, 0, 0);
        let draws: Vec<f64> = (0..100_000)
            .map(|_| cir_transition_sample(&p, 1.0, 1.0, &mut rng).unwrap())
            .collect();
        let (_, _, v) = mean_and_se(&draws);
        // SE of a sample variance, with the fourth moment estimated from the draws.
        let m = draws.iter().sum::<f64>() / draws.len() as f64;
        let m4 = draws.iter().map(|x| (x - m).powi(4)).sum::<f64>() / draws.len() as f64;
        let se = ((m4 - v * v) / draws.len() as f64).sqrt();
        let combined = (se * se + EULER_VAR_SE * EULER_VAR_SE).sqrt();
        assert!((v - EULER_VAR_Y1).abs() < 3.0 * combined, "var {v} (se {se})");
    }

    /// Recomputes the frozen Euler constants. Slow: run with `--ignored`.
    #[test]
    #[ignore]
    fn euler_variance_oracle() {
        let (a, b, s1) = (2.0, 1.0, 1.0);
        let dt = 1e-4;
        let steps = 10_000;
        let mut rng = derive_stream(99, 0, 0);
        let mut finals = Vec::with_capacity(100_000);
        for _ in 0..100_000 {
            let mut y: f64 = 1.0;
            for _ in 0..steps {
                let z: f64 = StandardNormal.sample(&mut rng);
                y += (a - b * y) * dt + s1 * (y.max(0.0) * dt).sqrt() * z;
            }
            finals.push(y);
        }
        let (_, _, v) = mean_and_se(&finals);
        let m = finals.iter().sum::<f64>() / finals.len() as f64;
        let m4 = finals.iter().map(|x| (x - m).powi(4)).sum::<f64>() / finals.len() as f64;
        let se = ((m4 - v * v) / finals.len() as f64).sqrt();
        println!("euler Var(Y_1) = {v:.5} +- {se:.5}");
    }

    #[test]
    fn tiny_step_stays_put() {
        let p = params();
        let mut rng = derive_stream(13, 0, 0);
        for &y in &[0.05, 1.0, 30.0] {
            let s = cir_transition_sample(&p, y, 1e-8, &mut rng).unwrap();
            assert!((s - y).abs() < 1e-3 * (1.0 + y), "{y} -> {s}");
        }
    }

    #[test]
    fn transition_rejects_bad_input() {
        let p = params();
        let mut rng = derive_stream(0, 0, 0);
        assert!(cir_transition_sample(&p, 0.0, 1.0, &mut rng).is_err());
        assert!(cir_transition_sample(&p, 1.0, 0.0, &mut rng).is_err());
        assert!(cir_transition_sample(&p, 1.0, -1.0, &mut rng).is_err());
        assert!(simulate_heston_path(&p, 0, 0.1, &mut rng).is_err());
        assert!(simulate_heston_path(&p, 10, 0.0, &mut rng).is_err());
    }

    #[test]
    fn paths_stay_positive_below_feller() {
        let mut p = params();
        p.a = 0.2;
        p.b = 2.0;
        for seed in 0..20 {
            let mut rng = derive_stream(seed, 1, 0);
            let path = simulate_heston_path(&p, 2000, 0.01, &mut rng).unwrap();
            assert!(path.y().iter().all(|&y| y > 0.0));
        }
    }

    #[test]
    fn terminal_x_mean_matches_closed_form() {
        let p = params();
        let n = 10_000;
        let xs: Vec<f64> = (0..n)
            .map(|i| {
                let mut rng = derive_stream(21, 2, i);
                let path = simulate_heston_path(&p, 500, 0.01, &mut rng).unwrap();
                *path.x().last().unwrap()
            })
            .collect();
        let (m, se, _) = mean_and_se(&xs);
        let (_, ex) = mean_vector(&p, 5.0);
        assert!((m - ex).abs() < 3.0 * se, "mean {m} vs {ex} (se {se})");
    }

    #[test]
    fn x_increment_is_gaussian_given_y_when_uncorrelated() {
        // rho = 0: X_{k+1} - X_k - (alpha - beta Y_k) dt = s2 sqrt(Y_k dt) xi exactly.
        let mut p = params();
        p.rho = 0.0;
        p.sigma2 = 1.7;
        let dt = 0.3;
        let mut zs = Vec::new();
        for i in 0..20_000 {
            let mut rng = derive_stream(31, 3, i);
            let path = simulate_heston_path(&p, 1, dt, &mut rng).unwrap();
            let (y, x) = (path.y(), path.x());
            let resid = x[1] - x[0] - (p.alpha - p.beta * y[0]) * dt;
            zs.push(resid / (p.sigma2 * (y[0] * dt).sqrt()));
        }
        let (m, se, v) = mean_and_se(&zs);
        assert!(m.abs() < 3.0 * se);
        let var_se = (2.0 / zs.len() as f64).sqrt();
        assert!((v - 1.0).abs() < 3.0 * var_se, "standardized variance {v}");
    }

    #[test]
    fn realized_variance_of_x_recovers_sigma2() {
        let mut p = params();
        p.sigma2 = 1.5;
        let mut rng = derive_stream(41, 4, 0);
        let path = simulate_heston_path(&p, 10_000, 1e-3, &mut rng).unwrap();
        let qv: f64 = path.x().windows(2).map(|w| (w[1] - w[0]).powi(2)).sum();
        let int_y: f64 = path.y()[..path.steps()].iter().sum::<f64>() * path.dt();
        let ratio = qv / int_y;
        assert!((ratio / (p.sigma2 * p.sigma2) - 1.0).abs() < 0.05, "{ratio}");
    }

    #[test]
    fn critical_companion_moments() {
        let p = ModelParams {
            a: 1.0,
            b: 0.0,
            alpha: 0.7,
            beta: 1.0,
            sigma1: 1.0,
            sigma2: 1.0,
            rho: 0.3,
            y0: 1.0,
            x0: 0.0,
        };
        let n = 100_000;
        let mut y1 = Vec::with_capacity(n);
        let mut iy = Vec::with_capacity(n);
        let mut x1 = Vec::with_capacity(n);
        for i in 0..n as u64 {
            let mut rng = derive_stream(51, 5, i);
            let c = simulate_critical_companion(&p, 100, &mut rng).unwrap();
            y1.push(c.y1);
            iy.push(c.int_y);
            x1.push(c.x1);
        }
        let (m, se, _) = mean_and_se(&y1);
        assert!((m - 1.0).abs() < 3.0 * se, "E Y1 = {m}");
        // Left-point sum on 100 steps: E = a (1 - 1/n) / 2.
        let (m, se, _) = mean_and_se(&iy);
        assert!((m - 0.5 * (1.0 - 0.01)).abs() < 3.0 * se, "E int Y = {m}");
        let (m, se, _) = mean_and_se(&x1);
        assert!((m - 0.7).abs() < 3.0 * se, "E X1 = {m}");
    }

    #[test]
    fn critical_companion_requires_strict_feller() {
        let mut p = params();
        p.b = 0.0;
        p.a = 0.5;
        let mut rng = derive_stream(0, 0, 0);
        assert!(simulate_critical_companion(&p, 10, &mut rng).is_err());
    }

    #[test]
    fn supercritical_companion_moments() {
        let p = ModelParams {
            a: 1.0,
            b: -1.0,
            alpha: 0.5,
            beta: 1.0,
            sigma1: 1.0,
            sigma2: 1.0,
            rho: 0.3,
            y0: 1.0,
            x0: 0.0,
        };
        let n = 100_000;
        let mut ye = Vec::with_capacity(n);
        let mut iy = Vec::with_capacity(n);
        for i in 0..n as u64 {
            let mut rng = derive_stream(61, 6, i);
            let c = simulate_supercritical_companion(&p, 100, &mut rng).unwrap();
            ye.push(c.y_end);
            iy.push(c.int_y);
        }
        let (m, se, _) = mean_and_se(&ye);
        assert!((m - 2.0).abs() < 3.0 * se, "E Y = {m}");
        // Left-point sum of 1 + u on 100 steps: 1 + (1 - 1/n) / 2.
        let (m, se, _) = mean_and_se(&iy);
        assert!((m - (1.0 + 0.5 * 0.99)).abs() < 3.0 * se, "E int Y = {m}");
    }

    #[test]
    fn supercritical_companion_concentrates_for_large_drift() {
        let spread = |a: f64| {
            let p = ModelParams {
                a,
                b: -1.0,
                alpha: 0.0,
                beta: 0.0,
                sigma1: 1.0,
                sigma2: 1.0,
                rho: 0.0,
                y0: 1.0,
                x0: 0.0,
            };
            let ys: Vec<f64> = (0..2000)
                .map(|i| {
                    let mut rng = derive_stream(71, 7, i);
                    simulate_supercritical_companion(&p, 100, &mut rng).unwrap().y_end
                })
                .collect();
            let (m, _, v) = mean_and_se(&ys);
            assert!((m / (a + 1.0) - 1.0).abs() < 0.01, "mean {m} at a = {a}");
            v.sqrt() / m
        };
        // Relative spread decays like a^{-1/2}.
        let ratio = spread(50.0) / spread(500.0);
        assert!((ratio / 10f64.sqrt() - 1.0).abs() < 0.15, "{ratio}");
    }

    #[test]
    fn supercritical_companion_rejects_other_regimes() {
        let p = params();
        let mut rng = derive_stream(0, 0, 0);
        assert!(matches!(
            simulate_supercritical_companion(&p, 10, &mut rng),
            Err(Error::Regime { .. })
        ));
    }
}
