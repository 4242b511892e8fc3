//! Replication harness: repeated-sampling tables and contamination sweeps.
//!
//! Stream layout: replication `r`, method `k` runs its sampler under
//! replication id `(r << 16) | k`; the observed data of replication `r` comes
//! from `(r << 16, RUN_LEVEL, OBSERVED_DATA)`. In a ζ-sweep every ζ reuses the
//! same replication ids, so neighbouring ζ values differ only through the
//! contaminated points.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::abc::{smc_abc, AbcProblem, ParticleCloud, SmcConfig};
use crate::distances::{DistanceKind, DistanceOptions};
use crate::error::{Error, Result};
use crate::estimators::{summarize, PosteriorSummary};
use crate::fmt::json_float;
use crate::measures::Dataset;
use crate::models::ModelSpec;
use crate::rng::{stage, StreamAddress, RUN_LEVEL};

pub const SCHEMA_VERSION: u32 = 1;

/// Share of replications a method must complete for its row to count.
pub const MIN_SUCCESS_FRACTION: f64 = 0.9;

/// One inference method: a distance and the simulated sample size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodSpec {
    pub label: String,
    pub distance: DistanceKind,
    pub m_sim: usize,
    #[serde(default)]
    pub options: DistanceOptions,
}

/// A complete experiment description (the JSON config format).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub name: String,
    pub model: ModelSpec,
    pub methods: Vec<MethodSpec>,
    #[serde(default)]
    pub sampler: SmcConfig,
    pub n_replications: usize,
    pub theta_true: Vec<f64>,
    pub master_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zeta_grid: Option<Vec<f64>>,
    /// In a sweep, run `n_replications` datasets per ζ instead of one.
    #[serde(default)]
    pub replicate_per_zeta: bool,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        self.model.validate()?;
        self.sampler.validate()?;
        self.model.name.validate_theta(&self.theta_true)?;
        if self.n_replications == 0 {
            return bad("n_replications must be positive".into());
        }
        for (i, m) in self.methods.iter().enumerate() {
            if m.label.is_empty() {
                return bad(format!("method {i} has an empty label"));
            }
            if self.methods[..i].iter().any(|o| o.label == m.label) {
                return bad(format!("duplicate method label {:?}", m.label));
            }
            m.distance.validate()?;
            if m.m_sim == 0 {
                return bad(format!("method {:?}: m_sim must be positive", m.label));
            }
        }
        if let Some(grid) = &self.zeta_grid {
            if grid.is_empty() || grid.iter().any(|z| !z.is_finite()) {
                return bad("zeta_grid must be a nonempty list of finite values".into());
            }
            if self.model.contamination.is_none() {
                return bad("zeta_grid needs a contamination block in the model".into());
            }
        }
        Ok(())
    }

    pub fn is_sweep(&self) -> bool {
        self.zeta_grid.is_some()
    }

    fn observed_address(&self, r: usize) -> StreamAddress {
        StreamAddress::new(self.master_seed, (r as u64) << 16, RUN_LEVEL, stage::OBSERVED_DATA)
    }

    fn method_address(&self, r: usize, k: usize) -> StreamAddress {
        StreamAddress::new(self.master_seed, ((r as u64) << 16) | k as u64, 0, 0)
    }
}

/// Produces a posterior cloud for one problem; the SMC sampler in
/// production, stubs in tests.
pub trait PosteriorSampler: Sync {
    fn sample(&self, problem: &AbcProblem, cfg: &SmcConfig, address: StreamAddress) -> Result<ParticleCloud>;
}

/// [`smc_abc`] as a [`PosteriorSampler`].
#[derive(Debug, Clone, Copy, Default)]
pub struct SmcSampler;

impl PosteriorSampler for SmcSampler {
    fn sample(&self, problem: &AbcProblem, cfg: &SmcConfig, address: StreamAddress) -> Result<ParticleCloud> {
        smc_abc(problem, cfg, address)
    }
}

/// Serializable posterior summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRecord {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub ci_low: Vec<f64>,
    pub ci_high: Vec<f64>,
}

impl From<&PosteriorSummary> for SummaryRecord {
    fn from(s: &PosteriorSummary) -> Self {
        Self {
            mean: s.mean.values.clone(),
            std: s.std.clone(),
            ci_low: s.ci_low.clone(),
            ci_high: s.ci_high.clone(),
        }
    }
}

impl SummaryRecord {
    pub fn contains(&self, j: usize, value: f64) -> bool {
        self.ci_low[j] <= value && value <= self.ci_high[j]
    }
}

/// One method's result on one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodOutcome {
    pub label: String,
    /// Fingerprint of the observed data the method saw.
    pub data_fingerprint: u64,
    pub summary: Option<SummaryRecord>,
    pub error: Option<String>,
    #[serde(with = "json_float")]
    pub epsilon: f64,
    pub total_simulations: u64,
}

/// All methods on one observed dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub replication: usize,
    pub zeta: Option<f64>,
    pub data_fingerprint: u64,
    pub outcomes: Vec<MethodOutcome>,
}

/// Aggregates over replications, per coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateStats {
    pub overall_mean: Vec<f64>,
    pub avg_posterior_std: Vec<f64>,
    pub coverage_pct: Vec<f64>,
    pub rmse: Vec<f64>,
}

/// One method's row (per ζ in sweeps).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodAggregate {
    pub label: String,
    pub zeta: Option<f64>,
    pub n_success: usize,
    pub n_total: usize,
    /// `None` when fewer than 90% of the replications succeeded.
    pub stats: Option<AggregateStats>,
}

/// Output of [`run_replications`] and [`run_zeta_sweep`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub config: ExperimentConfig,
    pub parameter_names: Vec<String>,
    pub aggregates: Vec<MethodAggregate>,
    pub replications: Vec<ReplicationRecord>,
    /// Wall-clock seconds; not persisted, so emitted files stay reproducible.
    #[serde(skip)]
    pub elapsed_secs: f64,
}

impl ExperimentReport {
    pub fn aggregate(&self, label: &str) -> Option<&MethodAggregate> {
        self.aggregates.iter().find(|a| a.label == label && a.zeta.is_none())
    }

    /// `(ζ, label, summary)` rows of a sweep, in grid order.
    pub fn sweep_rows(&self) -> Vec<(f64, &str, &SummaryRecord)> {
        self.replications
            .iter()
            .flat_map(|r| {
                r.outcomes.iter().filter_map(move |o| {
                    Some((r.zeta?, o.label.as_str(), o.summary.as_ref()?))
                })
            })
            .collect()
    }
}

/// Aggregates the summaries of one method across replications.
pub fn aggregate(summaries: &[&SummaryRecord], n_total: usize, theta_true: &[f64]) -> Option<AggregateStats> {
    let k = summaries.len();
    if k == 0 || (k as f64) < MIN_SUCCESS_FRACTION * n_total as f64 {
        return None;
    }
    let d = theta_true.len();
    let avg = |f: &dyn Fn(&SummaryRecord) -> f64| summaries.iter().map(|s| f(s)).sum::<f64>() / k as f64;
    let mut stats = AggregateStats {
        overall_mean: vec![0.0; d],
        avg_posterior_std: vec![0.0; d],
        coverage_pct: vec![0.0; d],
        rmse: vec![0.0; d],
    };
    for j in 0..d {
        let t = theta_true[j];
        stats.overall_mean[j] = avg(&|s| s.mean[j]);
        stats.avg_posterior_std[j] = avg(&|s| s.std[j]);
        stats.coverage_pct[j] = 100.0 * avg(&|s| if s.contains(j, t) { 1.0 } else { 0.0 });
        stats.rmse[j] = avg(&|s| (s.mean[j] - t).powi(2)).sqrt();
    }
    Some(stats)
}

fn run_dataset(
    cfg: &ExperimentConfig,
    sampler: &dyn PosteriorSampler,
    observed: &Dataset,
    replication: usize,
    zeta: Option<f64>,
) -> ReplicationRecord {
    let fingerprint = observed.fingerprint();
    let outcomes = cfg
        .methods
        .iter()
        .enumerate()
        .map(|(k, m)| {
            let address = cfg.method_address(replication, k);
            let result = AbcProblem::new(&cfg.model, m.distance, m.m_sim, observed.clone(), m.options).and_then(|p| {
                assert_eq!(p.observed.fingerprint(), fingerprint, "methods must share the observed data");
                sampler.sample(&p, &cfg.sampler, address)
            });
            let cloud = result.and_then(|c| summarize(&c).map(|s| (c, s)));
            match cloud {
                Ok((c, s)) => MethodOutcome {
                    label: m.label.clone(),
                    data_fingerprint: fingerprint,
                    summary: Some(SummaryRecord::from(&s)),
                    error: None,
                    epsilon: c.epsilon,
                    total_simulations: c.total_simulations,
                },
                Err(e) => MethodOutcome {
                    label: m.label.clone(),
                    data_fingerprint: fingerprint,
                    summary: None,
                    error: Some(e.to_string()),
                    epsilon: f64::INFINITY,
                    total_simulations: 0,
                },
            }
        })
        .collect();
    ReplicationRecord {
        replication,
        zeta,
        data_fingerprint: fingerprint,
        outcomes,
    }
}

fn aggregates_for(cfg: &ExperimentConfig, records: &[&ReplicationRecord], zeta: Option<f64>) -> Vec<MethodAggregate> {
    cfg.methods
        .iter()
        .enumerate()
        .map(|(k, m)| {
            let ok: Vec<&SummaryRecord> = records.iter().filter_map(|r| r.outcomes[k].summary.as_ref()).collect();
            MethodAggregate {
                label: m.label.clone(),
                zeta,
                n_success: ok.len(),
                n_total: records.len(),
                stats: aggregate(&ok, records.len(), &cfg.theta_true),
            }
        })
        .collect()
}

fn report(cfg: &ExperimentConfig, aggregates: Vec<MethodAggregate>, replications: Vec<ReplicationRecord>, start: std::time::Instant) -> ExperimentReport {
    ExperimentReport {
        schema_version: SCHEMA_VERSION,
        config: cfg.clone(),
        parameter_names: cfg.model.name.param_names().iter().map(|s| s.to_string()).collect(),
        aggregates,
        replications,
        elapsed_secs: start.elapsed().as_secs_f64(),
    }
}

/// Runs every method on `n_replications` observed datasets drawn at
/// `theta_true` (contaminated if configured).
pub fn run_replications(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    run_replications_with(cfg, &SmcSampler)
}

pub fn run_replications_with(cfg: &ExperimentConfig, sampler: &dyn PosteriorSampler) -> Result<ExperimentReport> {
    cfg.validate()?;
    let start = std::time::Instant::now();
    let records: Vec<ReplicationRecord> = (0..cfg.n_replications)
        .into_par_iter()
        .map(|r| {
            let observed = cfg.model.simulate_observed(&cfg.theta_true, &mut cfg.observed_address(r).stream())?;
            Ok(run_dataset(cfg, sampler, &observed, r, None))
        })
        .collect::<Result<_>>()?;
    let aggregates = aggregates_for(cfg, &records.iter().collect::<Vec<_>>(), None);
    Ok(report(cfg, aggregates, records, start))
}

/// Runs every method across the contamination grid `zeta_grid`.
pub fn run_zeta_sweep(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    run_zeta_sweep_with(cfg, &SmcSampler)
}

pub fn run_zeta_sweep_with(cfg: &ExperimentConfig, sampler: &dyn PosteriorSampler) -> Result<ExperimentReport> {
    cfg.validate()?;
    let grid = cfg
        .zeta_grid
        .clone()
        .ok_or_else(|| Error::InvalidConfig("run_zeta_sweep needs a zeta_grid".into()))?;
    let base = cfg.model.contamination.expect("validated");
    let start = std::time::Instant::now();
    let reps = if cfg.replicate_per_zeta { cfg.n_replications } else { 1 };
    let jobs: Vec<(f64, usize)> = grid.iter().flat_map(|&z| (0..reps).map(move |r| (z, r))).collect();
    let records: Vec<ReplicationRecord> = jobs
        .into_par_iter()
        .map(|(zeta, r)| {
            let model = ModelSpec {
                contamination: Some(base.with_zeta(zeta)),
                ..cfg.model.clone()
            };
            let observed = model.simulate_observed(&cfg.theta_true, &mut cfg.observed_address(r).stream())?;
            Ok(run_dataset(cfg, sampler, &observed, r, Some(zeta)))
        })
        .collect::<Result<_>>()?;
    let mut aggregates = Vec::new();
    for &z in &grid {
        let at: Vec<&ReplicationRecord> = records.iter().filter(|r| r.zeta == Some(z)).collect();
        aggregates.extend(aggregates_for(cfg, &at, Some(z)));
    }
    Ok(report(cfg, aggregates, records, start))
}

/// Runs a sweep when the config has a ζ grid, replications otherwise.
pub fn run(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    if cfg.is_sweep() {
        run_zeta_sweep(cfg)
    } else {
        run_replications(cfg)
    }
}
