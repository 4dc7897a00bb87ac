//! Batch Monte Carlo experiments that confront the estimator with its
//! predicted limit behaviour.
//!
//! Replicate `i` simulates its path from the stream derived from
//! `(seed, i)`, so a report is a pure function of its configuration no matter
//! how many threads run it. Reports carry no timing information for the same
//! reason.

use std::io::Write;
use std::path::PathBuf;

use nalgebra::Vector4;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asymptotics::{
    critical_limit_sample, critical_scaled_error, random_scaling_transform, subcritical_covariance,
    subcritical_scaled_error, supercritical_limit_sample, supercritical_scaled_error, Scaling,
    DEFAULT_COMPANION_STEPS,
};
use crate::error::{Error, Result};
use crate::estimator::{mle, prepare_stats, EstimateOptions, MleEstimate};
use crate::functionals::diffusion_matrix_estimate;
use crate::model::{classify, Criticality, ModelParams};
use crate::rng::{derive_stream, domain};
use crate::sim::simulate_heston_path;
use crate::stats::{empirical_covariance, ks_one_sample, ks_two_sample, mean, median, normal_cdf, std_dev};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Consistency,
    Clt,
    RandomScalingClt,
    CriticalLimit,
    SupercriticalLimit,
    DiffusionRecovery,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Consistency => "consistency",
            ExperimentKind::Clt => "clt",
            ExperimentKind::RandomScalingClt => "random-scaling-clt",
            ExperimentKind::CriticalLimit => "critical-limit",
            ExperimentKind::SupercriticalLimit => "supercritical-limit",
            ExperimentKind::DiffusionRecovery => "diffusion-recovery",
        }
    }

    fn required_regime(self) -> Option<Criticality> {
        match self {
            ExperimentKind::Clt | ExperimentKind::RandomScalingClt => Some(Criticality::Subcritical),
            ExperimentKind::CriticalLimit => Some(Criticality::Critical),
            ExperimentKind::SupercriticalLimit => Some(Criticality::Supercritical),
            ExperimentKind::Consistency | ExperimentKind::DiffusionRecovery => None,
        }
    }
}

/// Pass/fail thresholds. Defaults follow the acceptance settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    /// KS tests pass when `p > ks_alpha`.
    pub ks_alpha: f64,
    /// Consistency: `|theta_hat_i - theta_i| < consistency_tolerance` ...
    pub consistency_tolerance: f64,
    /// ... in at least this fraction of replicates.
    pub coverage: f64,
    /// Covariance entries with `|theoretical| >= covariance_cutoff` must match
    /// within `covariance_relative`, smaller ones within `covariance_absolute`.
    pub covariance_relative: f64,
    pub covariance_absolute: f64,
    pub covariance_cutoff: f64,
    /// Supercritical: `median |b_hat - b|` must stay below this.
    pub median_b_error: f64,
    /// Diffusion recovery: relative tolerance on `sigma1_hat`, `sigma2_hat`.
    pub sigma_relative: f64,
    /// Diffusion recovery: absolute tolerance on `rho_hat`.
    pub rho_absolute: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            ks_alpha: 0.01,
            consistency_tolerance: 0.5,
            coverage: 0.95,
            covariance_relative: 0.2,
            covariance_absolute: 0.05,
            covariance_cutoff: 0.25,
            median_b_error: 1e-2,
            sigma_relative: 0.02,
            rho_absolute: 0.03,
        }
    }
}

fn default_limit_draws() -> usize {
    10_000
}

fn default_companion_steps() -> usize {
    DEFAULT_COMPANION_STEPS
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub params: ModelParams,
    pub horizon: f64,
    pub dt: f64,
    pub replicates: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub estimator: EstimateOptions,
    /// Scaling applied in the critical and supercritical limit experiments.
    #[serde(default)]
    pub scaling: Scaling,
    /// Number of limit-law draws compared against the estimates.
    #[serde(default = "default_limit_draws")]
    pub limit_draws: usize,
    #[serde(default = "default_companion_steps")]
    pub companion_steps: usize,
    #[serde(default)]
    pub thresholds: Thresholds,
}

impl ExperimentConfig {
    /// Parses a TOML configuration. `kind`, when given, overrides the file's
    /// `kind` key (which may then be omitted).
    pub fn from_toml_str(text: &str, kind: Option<ExperimentKind>) -> Result<Self> {
        let mut table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        if let Some(kind) = kind {
            table.insert("kind".into(), toml::Value::String(kind.name().into()));
        }
        let config: ExperimentConfig = table
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate().map_err(|e| Error::Config(e.to_string()))?;
        if self.replicates < 1 {
            return Err(Error::Config("replicates must be at least 1".into()));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.horizon >= self.dt && self.horizon.is_finite()) {
            return Err(Error::Config(format!(
                "horizon {} must be at least dt = {}",
                self.horizon, self.dt
            )));
        }
        if self.limit_draws < 1 || self.companion_steps < 1 {
            return Err(Error::Config(
                "limit_draws and companion_steps must be positive".into(),
            ));
        }
        if let Some(required) = self.kind.required_regime() {
            let actual = classify(&self.params);
            if actual != required {
                return Err(Error::Config(format!(
                    "{} experiments need {} parameters, b = {} is {}",
                    self.kind.name(),
                    required.name(),
                    self.params.b,
                    actual.name()
                )));
            }
        }
        Ok(())
    }

    /// Grid steps per path; the simulated horizon is `n_steps * dt`.
    pub fn n_steps(&self) -> usize {
        ((self.horizon / self.dt).round() as usize).max(1)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ReplicateRow {
    pub replicate: u64,
    pub a_hat: f64,
    pub b_hat: f64,
    pub alpha_hat: f64,
    pub beta_hat: f64,
    pub det_condition: f64,
    pub min_y: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoordinateSummary {
    pub name: String,
    pub mean: f64,
    pub std_dev: f64,
    pub median_abs: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KsEntry {
    pub label: String,
    /// `None` when the test was skipped (fewer than two replicates).
    pub statistic: Option<f64>,
    pub p_value: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CovarianceEntry {
    pub row: usize,
    pub col: usize,
    pub empirical: f64,
    pub theoretical: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CriterionResult {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TestReport {
    pub kind: ExperimentKind,
    pub regime: Criticality,
    pub seed: u64,
    pub replicates: u64,
    pub horizon: f64,
    pub dt: f64,
    pub n_steps: usize,
    pub params: ModelParams,
    /// Smallest `Y` value seen on any replicate path.
    pub min_y: f64,
    pub coordinate_names: Vec<String>,
    pub coordinates: Vec<CoordinateSummary>,
    pub ks: Vec<KsEntry>,
    pub covariance: Vec<CovarianceEntry>,
    pub criteria: Vec<CriterionResult>,
    pub all_pass: bool,
    /// Conditions under which the reported limit theory does not apply.
    pub warnings: Vec<String>,
    /// Per-replicate values of the tested quantities, in replicate order.
    pub samples: Vec<Vec<f64>>,
    #[serde(skip)]
    pub rows: Vec<ReplicateRow>,
}

impl TestReport {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Per-replicate estimates as CSV:
    /// `replicate,a_hat,b_hat,alpha_hat,beta_hat,det_condition,min_y`.
    pub fn write_estimates_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for row in &self.rows {
            w.serialize(row).map_err(|e| Error::Csv(e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn column(&self, k: usize) -> Vec<f64> {
        self.samples.iter().map(|s| s[k]).collect()
    }
}

struct Replicate {
    row: ReplicateRow,
    sample: Vec<f64>,
}

fn run_replicate(config: &ExperimentConfig, index: u64) -> Result<Replicate> {
    let p = &config.params;
    let mut rng = derive_stream(config.seed, domain::PATHS, index);
    let path = simulate_heston_path(p, config.n_steps(), config.dt, &mut rng)?;
    let stats = prepare_stats(&path, &config.estimator)?;
    let est: MleEstimate = mle(&stats)?;
    let err = est.error(p);
    let sample = match config.kind {
        ExperimentKind::Consistency => err.as_slice().to_vec(),
        ExperimentKind::Clt => subcritical_scaled_error(&err, stats.horizon).as_slice().to_vec(),
        ExperimentKind::RandomScalingClt => random_scaling_transform(&stats, &err)?.as_slice().to_vec(),
        ExperimentKind::CriticalLimit => critical_scaled_error(&stats, &err, config.scaling)
            .as_slice()
            .to_vec(),
        ExperimentKind::SupercriticalLimit => supercritical_scaled_error(p, &stats, &err, config.scaling)
            .as_slice()
            .to_vec(),
        ExperimentKind::DiffusionRecovery => {
            let d = diffusion_matrix_estimate(&path)?;
            vec![d.sigma1_hat, d.sigma2_hat, d.rho_hat]
        }
    };
    Ok(Replicate {
        row: ReplicateRow {
            replicate: index,
            a_hat: est.a_hat,
            b_hat: est.b_hat,
            alpha_hat: est.alpha_hat,
            beta_hat: est.beta_hat,
            det_condition: est.det_condition,
            min_y: path.min_y(),
        },
        sample,
    })
}

/// Draws `config.limit_draws` vectors from the critical or supercritical
/// limit law on their own family of streams.
pub fn limit_draws(config: &ExperimentConfig) -> Result<Vec<Vector4<f64>>> {
    let draws: Vec<Result<Vector4<f64>>> = (0..config.limit_draws as u64)
        .into_par_iter()
        .map(|j| {
            let mut rng = derive_stream(config.seed, domain::LIMIT, j);
            let s = match config.kind {
                ExperimentKind::CriticalLimit => {
                    critical_limit_sample(&config.params, config.scaling, config.companion_steps, &mut rng)?
                }
                ExperimentKind::SupercriticalLimit => supercritical_limit_sample(
                    &config.params,
                    config.scaling,
                    config.companion_steps,
                    &mut rng,
                )?,
                other => {
                    return Err(Error::Config(format!(
                        "{} has no sampled limit law",
                        other.name()
                    )))
                }
            };
            Ok(s.v)
        })
        .collect();
    draws.into_iter().collect()
}

fn names(kind: ExperimentKind) -> Vec<String> {
    let v: &[&str] = match kind {
        ExperimentKind::Consistency | ExperimentKind::Clt | ExperimentKind::RandomScalingClt => {
            &["a", "b", "alpha", "beta"]
        }
        ExperimentKind::CriticalLimit | ExperimentKind::SupercriticalLimit => &["a", "alpha", "b", "beta"],
        ExperimentKind::DiffusionRecovery => &["sigma1", "sigma2", "rho"],
    };
    v.iter().map(|s| s.to_string()).collect()
}

fn ks_entry(label: String, outcome: Option<crate::stats::KsOutcome>) -> KsEntry {
    KsEntry {
        label,
        statistic: outcome.map(|o| o.statistic),
        p_value: outcome.map(|o| o.p_value),
    }
}

struct Assembler<'a> {
    config: &'a ExperimentConfig,
    report: TestReport,
}

impl Assembler<'_> {
    fn criterion(&mut self, name: impl Into<String>, pass: bool, detail: impl Into<String>) {
        self.report.criteria.push(CriterionResult {
            name: name.into(),
            pass,
            detail: detail.into(),
        });
    }

    /// Records a KS entry; when `gate` is set it also becomes a criterion.
    fn ks(&mut self, label: String, outcome: Option<crate::stats::KsOutcome>, gate: bool) {
        if let (true, Some(o)) = (gate, outcome) {
            let alpha = self.config.thresholds.ks_alpha;
            self.criterion(
                format!("ks {label}"),
                o.p_value > alpha,
                format!("D = {:.4}, p = {:.4} (threshold {alpha})", o.statistic, o.p_value),
            );
        }
        self.report.ks.push(ks_entry(label, outcome));
    }

    fn enough(&self) -> bool {
        self.report.samples.len() >= 2
    }

    fn consistency(&mut self) {
        let th = self.config.thresholds;
        let consistent: &[usize] = match self.report.regime {
            Criticality::Supercritical => &[1, 3],
            _ => &[0, 1, 2, 3],
        };
        for &k in consistent {
            let col = self.report.column(k);
            let inside = col.iter().filter(|e| e.abs() < th.consistency_tolerance).count();
            let frac = inside as f64 / col.len() as f64;
            let name = &self.report.coordinate_names[k];
            self.criterion(
                format!("consistency {name}"),
                frac >= th.coverage,
                format!(
                    "{:.1}% of replicates within {} (need {:.1}%)",
                    100.0 * frac,
                    th.consistency_tolerance,
                    100.0 * th.coverage
                ),
            );
        }
    }

    fn clt(&mut self) -> Result<()> {
        let th = self.config.thresholds;
        let sigma = subcritical_covariance(&self.config.params)?.0;
        let enough = self.enough();
        if enough {
            let vs: Vec<Vector4<f64>> = self
                .report
                .samples
                .iter()
                .map(|s| Vector4::from_column_slice(s))
                .collect();
            let emp = empirical_covariance(&vs)?;
            let mut worst = 0usize;
            for r in 0..4 {
                for c in r..4 {
                    let theo = sigma[(r, c)];
                    let tolerance = if theo.abs() >= th.covariance_cutoff {
                        th.covariance_relative * theo.abs()
                    } else {
                        th.covariance_absolute
                    };
                    let pass = (emp[(r, c)] - theo).abs() <= tolerance;
                    if !pass {
                        worst += 1;
                    }
                    self.report.covariance.push(CovarianceEntry {
                        row: r,
                        col: c,
                        empirical: emp[(r, c)],
                        theoretical: theo,
                        tolerance,
                        pass,
                    });
                }
            }
            self.criterion(
                "covariance",
                worst == 0,
                format!("{worst} of 10 entries outside tolerance"),
            );
        }
        for k in 0..4 {
            let sd = sigma[(k, k)].sqrt();
            let col = self.report.column(k);
            let outcome = if enough {
                Some(ks_one_sample(&col, |x| normal_cdf(x / sd))?)
            } else {
                None
            };
            let label = format!("{} vs N(0, {:.4})", self.report.coordinate_names[k], sd * sd);
            self.ks(label, outcome, true);
        }
        Ok(())
    }

    fn random_scaling_clt(&mut self) -> Result<()> {
        let p = self.config.params;
        let sds = [p.sigma1, p.sigma1, p.sigma2, p.sigma2];
        let enough = self.enough();
        for (k, sd) in sds.into_iter().enumerate() {
            let col = self.report.column(k);
            let outcome = if enough {
                Some(ks_one_sample(&col, |x| normal_cdf(x / sd))?)
            } else {
                None
            };
            let label = format!("{} vs N(0, {:.4})", self.report.coordinate_names[k], sd * sd);
            self.ks(label, outcome, true);
        }
        Ok(())
    }

    fn limit_comparison(&mut self, gated: &[usize]) -> Result<()> {
        let draws = limit_draws(self.config)?;
        let enough = self.enough();
        for k in 0..4 {
            let limit: Vec<f64> = draws.iter().map(|v| v[k]).collect();
            let col = self.report.column(k);
            let outcome = if enough {
                Some(ks_two_sample(&col, &limit)?)
            } else {
                None
            };
            let label = format!("{} vs limit law", self.report.coordinate_names[k]);
            self.ks(label, outcome, gated.contains(&k));
        }
        Ok(())
    }

    fn supercritical(&mut self) -> Result<()> {
        let th = self.config.thresholds;
        let b = self.config.params.b;
        let b_err: Vec<f64> = self.report.rows.iter().map(|r| (r.b_hat - b).abs()).collect();
        let med = median(&b_err);
        self.criterion(
            "median |b_hat - b|",
            med < th.median_b_error,
            format!("{med:.3e} (threshold {:.1e})", th.median_b_error),
        );
        self.limit_comparison(&[0])
    }

    fn diffusion_recovery(&mut self) {
        let th = self.config.thresholds;
        let p = self.config.params;
        let checks = [
            ("sigma1", 0, p.sigma1, true),
            ("sigma2", 1, p.sigma2, true),
            ("rho", 2, p.rho, false),
        ];
        for (name, k, truth, relative) in checks {
            let col = self.report.column(k);
            let inside = col
                .iter()
                .filter(|&&v| {
                    if relative {
                        (v / truth - 1.0).abs() < th.sigma_relative
                    } else {
                        (v - truth).abs() < th.rho_absolute
                    }
                })
                .count();
            let frac = inside as f64 / col.len() as f64;
            let tol = if relative {
                format!("{}% relative", 100.0 * th.sigma_relative)
            } else {
                format!("{} absolute", th.rho_absolute)
            };
            self.criterion(
                format!("recovery {name}"),
                frac >= th.coverage,
                format!("{:.1}% of replicates within {tol}", 100.0 * frac),
            );
        }
    }
}

/// Set when `a < sigma1^2 / 2`, where the likelihood theory is not developed.
pub fn feller_warning(params: &ModelParams) -> Option<String> {
    (!params.feller_strict()).then(|| {
        format!(
            "a = {} is below sigma1^2 / 2 = {}; the estimator's limit theory assumes otherwise",
            params.a,
            0.5 * params.sigma1 * params.sigma1
        )
    })
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<TestReport> {
    config.validate()?;
    let results: Vec<Result<Replicate>> = (0..config.replicates)
        .into_par_iter()
        .map(|i| {
            run_replicate(config, i).map_err(|e| Error::Replicate {
                index: i,
                source: Box::new(e),
            })
        })
        .collect();
    let mut rows = Vec::with_capacity(results.len());
    let mut samples = Vec::with_capacity(results.len());
    for r in results {
        let r = r?;
        rows.push(r.row);
        samples.push(r.sample);
    }

    let coordinate_names = names(config.kind);
    let coordinates = coordinate_names
        .iter()
        .enumerate()
        .map(|(k, name)| {
            let col: Vec<f64> = samples.iter().map(|s| s[k]).collect();
            let abs: Vec<f64> = col.iter().map(|v| v.abs()).collect();
            CoordinateSummary {
                name: name.clone(),
                mean: mean(&col),
                std_dev: std_dev(&col),
                median_abs: median(&abs),
            }
        })
        .collect();

    let n_steps = config.n_steps();
    let mut asm = Assembler {
        config,
        report: TestReport {
            kind: config.kind,
            regime: classify(&config.params),
            seed: config.seed,
            replicates: config.replicates,
            horizon: n_steps as f64 * config.dt,
            dt: config.dt,
            n_steps,
            params: config.params,
            min_y: rows.iter().map(|r| r.min_y).fold(f64::INFINITY, f64::min),
            coordinate_names,
            coordinates,
            ks: Vec::new(),
            covariance: Vec::new(),
            criteria: Vec::new(),
            all_pass: false,
            warnings: feller_warning(&config.params).into_iter().collect(),
            samples,
            rows,
        },
    };
    match config.kind {
        ExperimentKind::Consistency => asm.consistency(),
        ExperimentKind::Clt => asm.clt()?,
        ExperimentKind::RandomScalingClt => asm.random_scaling_clt()?,
        ExperimentKind::CriticalLimit => asm.limit_comparison(&[2, 3])?,
        ExperimentKind::SupercriticalLimit => asm.supercritical()?,
        ExperimentKind::DiffusionRecovery => asm.diffusion_recovery(),
    }
    let mut report = asm.report;
    report.all_pass = report.criteria.iter().all(|c| c.pass);
    Ok(report)
}
