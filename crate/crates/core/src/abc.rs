//! Rejection and adaptive sequential Monte Carlo ABC samplers.
//!
//! Both samplers target prior × 1{D(y, z) ≤ ε} where `D` is the distance
//! between the observed and a simulated empirical measure. Every random draw
//! comes from a stream addressed by (seed, replication, particle slot, stage),
//! so the returned cloud does not depend on the number of worker threads.
//!
//! SMC stage `t`:
//! 1. `ε_t` is the `alpha_quantile` of the live distances (never above
//!    `ε_{t−1}`) and weights are multiplied by the indicator. If the previous
//!    stage's acceptance rate fell below `min_acceptance`, ε is held instead:
//!    the moves can no longer refresh the cloud, and shrinking further would
//!    only select stale lucky distances. Held stages count as stagnant.
//!    Off (0) by default;
//! 2. if budget remains for a full sweep, the cloud is resampled
//!    (systematically) when the ESS falls below `ess_threshold_fraction · N`;
//! 3. each live particle takes Metropolis–Hastings steps with a Gaussian
//!    random-walk proposal scaled from the weighted covariance: at least
//!    `move_steps`, and with `move_coverage = q > 0` enough that, at the
//!    previous stage's acceptance rate `a`, a particle moves at least once
//!    with probability `q` (⌈ln(1−q)/ln(1−a)⌉ steps), capped by what the
//!    remaining budget affords.
//!
//! Proposals outside the prior support or rejected by the prior ratio never
//! reach the simulator and cost nothing. The first stage happens right after
//! initialisation, so with `sim_budget = N` the result is the rejection
//! sampler at the `alpha_quantile` of the initial distances.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distances::{distance, Coupling, DistanceContext, DistanceKind, DistanceOptions};
use crate::error::{Error, Result};
use crate::fmt::g17;
use crate::measures::Dataset;
use crate::models::{ModelSpec, ParameterVector, Prior, Simulator, Symmetry};
use crate::rng::{stage, StreamAddress, RUN_LEVEL};

/// A parameter draw with its distance and normalised log weight.
#[derive(Debug, Clone, PartialEq)]
pub struct Particle {
    pub theta: ParameterVector,
    /// `+∞` when the parameter is incompatible with the observed data.
    pub distance: f64,
    pub log_weight: f64,
}

impl Particle {
    pub fn weight(&self) -> f64 {
        self.log_weight.exp()
    }

    pub fn is_alive(&self) -> bool {
        self.log_weight > f64::NEG_INFINITY
    }
}

/// Diagnostics for one SMC stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageInfo {
    #[serde(with = "crate::fmt::json_float")]
    pub epsilon: f64,
    pub alive: usize,
    pub ess: f64,
    pub resampled: bool,
    /// MH acceptance rate of the moves that followed (0 when none ran).
    pub acceptance_rate: f64,
    pub simulations: u64,
}

/// Weighted particle approximation of the ABC posterior.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleCloud {
    pub particles: Vec<Particle>,
    pub epsilon: f64,
    pub epsilon_trace: Vec<f64>,
    pub stages: Vec<StageInfo>,
    pub total_simulations: u64,
    pub ess: f64,
}

impl ParticleCloud {
    /// Builds a cloud from unnormalised log weights.
    pub fn from_particles(mut particles: Vec<Particle>, epsilon: f64) -> Result<Self> {
        normalize_log_weights(&mut particles)?;
        let ess = ess_of(&particles);
        Ok(Self {
            particles,
            epsilon,
            epsilon_trace: vec![epsilon],
            stages: Vec::new(),
            total_simulations: 0,
            ess,
        })
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.particles.first().map_or(0, |p| p.theta.len())
    }

    pub fn names(&self) -> &'static [&'static str] {
        self.particles.first().map_or(&[], |p| p.theta.names)
    }

    pub fn weights(&self) -> Vec<f64> {
        self.particles.iter().map(Particle::weight).collect()
    }

    /// Particles with positive weight.
    pub fn alive(&self) -> impl Iterator<Item = &Particle> {
        self.particles.iter().filter(|p| p.is_alive())
    }

    /// Writes `θ_1..θ_d, weight, distance` rows.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for name in self.names() {
            out.push_str(name);
            out.push(',');
        }
        out.push_str("weight,distance\n");
        for p in &self.particles {
            for v in &p.theta.values {
                out.push_str(&g17(*v));
                out.push(',');
            }
            out.push_str(&g17(p.weight()));
            out.push(',');
            out.push_str(&g17(p.distance));
            out.push('\n');
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    /// Writes the run metadata as JSON.
    pub fn write_sidecar(&self, path: &Path, address: StreamAddress, config: Option<&SmcConfig>) -> Result<()> {
        let meta = CloudMetadata {
            address,
            config: config.cloned(),
            epsilon: self.epsilon,
            epsilon_trace: self.epsilon_trace.clone(),
            stages: self.stages.clone(),
            total_simulations: self.total_simulations,
            ess: self.ess,
            n_particles: self.len(),
        };
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer_pretty(&mut f, &meta)?;
        f.write_all(b"\n").map_err(|e| Error::io(path, e))
    }
}

/// JSON sidecar describing how a cloud was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CloudMetadata {
    pub address: StreamAddress,
    pub config: Option<SmcConfig>,
    #[serde(with = "crate::fmt::json_float")]
    pub epsilon: f64,
    #[serde(with = "crate::fmt::json_float::vec")]
    pub epsilon_trace: Vec<f64>,
    pub stages: Vec<StageInfo>,
    pub total_simulations: u64,
    pub ess: f64,
    pub n_particles: usize,
}

fn normalize_log_weights(particles: &mut [Particle]) -> Result<()> {
    let max = particles
        .iter()
        .map(|p| p.log_weight)
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || max.is_nan() {
        return Err(Error::EmptyCloud);
    }
    let sum: f64 = particles.iter().map(|p| (p.log_weight - max).exp()).sum();
    let shift = max + sum.ln();
    for p in particles.iter_mut() {
        p.log_weight -= shift;
    }
    Ok(())
}

fn ess_of(particles: &[Particle]) -> f64 {
    let s: f64 = particles.iter().map(|p| p.weight().powi(2)).sum();
    1.0 / s
}

/// `1 / Σ w_i²` of the normalised weights.
pub fn effective_sample_size(cloud: &ParticleCloud) -> f64 {
    ess_of(&cloud.particles)
}

/// Systematic resampling ancestors for normalised `weights` and one uniform
/// `u ∈ [0, 1)`: offspring `k` descends from the particle whose cumulative
/// weight interval contains `(u + k) / N`.
pub fn systematic_ancestors(weights: &[f64], u: f64) -> Vec<usize> {
    let n = weights.len();
    let mut out = Vec::with_capacity(n);
    let mut cumulative = weights.first().copied().unwrap_or(0.0);
    let mut i = 0;
    for k in 0..n {
        let pos = (u + k as f64) / n as f64;
        while pos >= cumulative && i + 1 < n {
            i += 1;
            cumulative += weights[i];
        }
        out.push(i);
    }
    out
}

/// Resamples the cloud systematically; offspring get equal weights.
pub fn systematic_resample<R: Rng + ?Sized>(cloud: &ParticleCloud, rng: &mut R) -> ParticleCloud {
    let ancestors = systematic_ancestors(&cloud.weights(), rng.random::<f64>());
    let lw = -(cloud.len() as f64).ln();
    let particles = ancestors
        .into_iter()
        .map(|a| Particle {
            log_weight: lw,
            ..cloud.particles[a].clone()
        })
        .collect::<Vec<_>>();
    ParticleCloud {
        ess: cloud.len() as f64,
        particles,
        ..cloud.clone()
    }
}

/// Everything a sampler needs about one inference problem: the prior, the
/// clean simulator and the observed-side distance state.
#[derive(Debug, Clone)]
pub struct AbcProblem {
    pub prior: Prior,
    pub simulator: Simulator,
    pub context: DistanceContext,
    pub observed: Dataset,
    symmetry: Option<Symmetry>,
}

impl AbcProblem {
    /// Builds the problem for `spec`'s model, distance `kind` and `m`
    /// simulated points per draw.
    pub fn new(spec: &ModelSpec, kind: DistanceKind, m: usize, observed: Dataset, options: DistanceOptions) -> Result<Self> {
        spec.validate()?;
        if m == 0 {
            return Err(Error::InvalidConfig("m_sim must be positive".into()));
        }
        if matches!(kind, DistanceKind::Wasserstein { .. })
            && options.coupling == Coupling::EqualLength
            && m != observed.len()
        {
            return Err(Error::InvalidConfig(format!(
                "Wasserstein needs m = n ({} vs {}) unless quantile coupling is enabled",
                m,
                observed.len()
            )));
        }
        let context = DistanceContext::new(kind, &observed, options)?;
        Ok(Self {
            prior: spec.prior(),
            simulator: spec.simulator(m),
            context,
            observed,
            symmetry: spec.label_symmetry(),
        })
    }

    fn wrap(&self, values: Vec<f64>) -> ParameterVector {
        ParameterVector {
            values,
            names: self.simulator.kind.param_names(),
        }
    }

    fn canonicalize(&self, theta: &mut [f64]) {
        if self.symmetry.is_some() {
            self.simulator.kind.canonicalize(theta);
        }
    }

    /// Distance for `theta`, or `None` (no simulation) when θ is
    /// incompatible with the observed data.
    fn evaluate<R: Rng + ?Sized>(&self, theta: &[f64], rng: &mut R) -> Result<Option<f64>> {
        if !self.simulator.admissible(theta, &self.observed) {
            return Ok(None);
        }
        let z = self.simulator.simulate(theta, rng)?;
        distance(&self.context, &z).map(Some)
    }

    /// Prior draw and its distance for one particle slot.
    fn initial_particle(&self, addr: StreamAddress) -> Result<(Vec<f64>, f64, u64)> {
        let mut rng = addr.stream();
        let mut theta = self.prior.sample(&mut rng);
        self.canonicalize(&mut theta);
        Ok(match self.evaluate(&theta, &mut rng)? {
            Some(d) => (theta, d, 1),
            None => (theta, f64::INFINITY, 0),
        })
    }

    fn initial_draws(&self, n: usize, base: StreamAddress) -> Result<Vec<(Vec<f64>, f64, u64)>> {
        (0..n)
            .into_par_iter()
            .map(|i| self.initial_particle(base.with_particle(i as u64).with_stage(0)))
            .collect()
    }
}

/// Empirical lower quantile: the smallest `d` with at least ⌈q·n⌉ of the
/// distances at or below it. Infinite values sort last.
fn lower_quantile(distances: &mut [f64], q: f64) -> f64 {
    distances.sort_unstable_by(f64::total_cmp);
    let k = ((q * distances.len() as f64).ceil() as usize).clamp(1, distances.len());
    distances[k - 1]
}

/// Tolerance for [`rejection_abc`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tolerance {
    Epsilon(f64),
    /// Keep this fraction of the draws (ε = that empirical quantile).
    AcceptFraction(f64),
}

/// Rejection ABC from `n_draws` prior simulations; accepted particles get
/// equal weights. Parameters with infinite distance are never accepted.
pub fn rejection_abc(problem: &AbcProblem, tolerance: Tolerance, n_draws: usize, address: StreamAddress) -> Result<ParticleCloud> {
    if n_draws == 0 {
        return Err(Error::InvalidConfig("n_draws must be positive".into()));
    }
    let draws = problem.initial_draws(n_draws, address)?;
    let sims: u64 = draws.iter().map(|d| d.2).sum();
    let epsilon = match tolerance {
        Tolerance::Epsilon(e) if e.is_nan() || e < 0.0 => {
            return Err(Error::InvalidConfig(format!("epsilon must be nonnegative, got {e}")))
        }
        Tolerance::Epsilon(e) => e,
        Tolerance::AcceptFraction(f) if !(f > 0.0 && f <= 1.0) => {
            return Err(Error::InvalidConfig(format!("accept fraction must lie in (0, 1], got {f}")))
        }
        Tolerance::AcceptFraction(f) => {
            let mut d: Vec<f64> = draws.iter().map(|d| d.1).collect();
            lower_quantile(&mut d, f)
        }
    };
    let particles: Vec<Particle> = draws
        .into_iter()
        .filter(|(_, d, _)| d.is_finite() && *d <= epsilon)
        .map(|(theta, d, _)| Particle {
            theta: problem.wrap(theta),
            distance: d,
            log_weight: 0.0,
        })
        .collect();
    if particles.is_empty() {
        return Err(Error::NoAcceptances { epsilon });
    }
    let mut cloud = ParticleCloud::from_particles(particles, epsilon)?;
    cloud.total_simulations = sims;
    Ok(cloud)
}

fn default_n_particles() -> usize {
    1024
}
fn default_sim_budget() -> u64 {
    200_000
}
fn default_alpha() -> f64 {
    0.5
}
fn default_ess_fraction() -> f64 {
    0.5
}
fn default_move_steps() -> usize {
    1
}
fn default_move_coverage() -> f64 {
    0.99
}
fn default_rw_scale() -> f64 {
    2.0
}
fn default_min_acceptance() -> f64 {
    0.0
}
fn default_stagnation_tol() -> f64 {
    1e-4
}
fn default_stagnation_stages() -> usize {
    3
}

/// Adaptive SMC settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmcConfig {
    #[serde(default = "default_n_particles")]
    pub n_particles: usize,
    /// Total simulations, initialisation included.
    #[serde(default = "default_sim_budget")]
    pub sim_budget: u64,
    #[serde(default = "default_alpha")]
    pub alpha_quantile: f64,
    #[serde(default = "default_ess_fraction")]
    pub ess_threshold_fraction: f64,
    #[serde(default = "default_move_steps")]
    pub move_steps: usize,
    /// Target probability that a particle moves at least once per stage;
    /// 0 keeps exactly `move_steps` steps.
    #[serde(default = "default_move_coverage")]
    pub move_coverage: f64,
    /// Multiplies the weighted empirical covariance in the proposal.
    #[serde(default = "default_rw_scale")]
    pub rw_scale: f64,
    /// Hold ε while the previous stage's MH acceptance rate is below this.
    #[serde(default = "default_min_acceptance")]
    pub min_acceptance: f64,
    /// Stop once ε falls by less than this relative amount ...
    #[serde(default = "default_stagnation_tol")]
    pub stagnation_tol: f64,
    /// ... for this many consecutive stages.
    #[serde(default = "default_stagnation_stages")]
    pub stagnation_stages: usize,
}

impl Default for SmcConfig {
    fn default() -> Self {
        Self {
            n_particles: default_n_particles(),
            sim_budget: default_sim_budget(),
            alpha_quantile: default_alpha(),
            ess_threshold_fraction: default_ess_fraction(),
            move_steps: default_move_steps(),
            move_coverage: default_move_coverage(),
            rw_scale: default_rw_scale(),
            min_acceptance: default_min_acceptance(),
            stagnation_tol: default_stagnation_tol(),
            stagnation_stages: default_stagnation_stages(),
        }
    }
}

impl SmcConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.n_particles < 2 {
            return bad(format!("n_particles must be at least 2, got {}", self.n_particles));
        }
        if self.sim_budget < self.n_particles as u64 {
            return bad(format!(
                "sim_budget ({}) must be at least n_particles ({})",
                self.sim_budget, self.n_particles
            ));
        }
        if !(self.alpha_quantile > 0.0 && self.alpha_quantile < 1.0) {
            return bad(format!("alpha_quantile must lie in (0, 1), got {}", self.alpha_quantile));
        }
        if !(0.0..=1.0).contains(&self.ess_threshold_fraction) {
            return bad(format!(
                "ess_threshold_fraction must lie in [0, 1], got {}",
                self.ess_threshold_fraction
            ));
        }
        if self.move_steps == 0 {
            return bad("move_steps must be positive".into());
        }
        if !(0.0..1.0).contains(&self.move_coverage) {
            return bad(format!("move_coverage must lie in [0, 1), got {}", self.move_coverage));
        }
        if !(self.rw_scale.is_finite() && self.rw_scale > 0.0) {
            return bad(format!("rw_scale must be positive, got {}", self.rw_scale));
        }
        if !(0.0..1.0).contains(&self.min_acceptance) {
            return bad(format!("min_acceptance must lie in [0, 1), got {}", self.min_acceptance));
        }
        if !(self.stagnation_tol >= 0.0) || self.stagnation_stages == 0 {
            return bad("stagnation_tol must be >= 0 and stagnation_stages positive".into());
        }
        Ok(())
    }
}

/// Gaussian random-walk proposal. With a label symmetry the increment is
/// drawn from the equal mixture of N(0, Σ) and N(0, LΣLᵀ) and the result is
/// mapped to the canonical representative; that keeps the proposal symmetric
/// on the quotient space, so the MH ratio stays the prior ratio.
#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    /// Row-major lower Cholesky factor of the covariance.
    chol: Vec<f64>,
    dim: usize,
    symmetry: Option<Symmetry>,
}

impl Proposal {
    pub fn new(covariance: &[f64], dim: usize, symmetry: Option<Symmetry>) -> Result<Self> {
        if covariance.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                actual: covariance.len(),
            });
        }
        Ok(Self {
            chol: cholesky_jittered(covariance, dim),
            dim,
            symmetry,
        })
    }

    /// `rw_scale` × weighted covariance of the live particles.
    pub fn from_cloud(particles: &[Particle], scale: f64, symmetry: Option<Symmetry>) -> Result<Self> {
        let dim = particles.first().ok_or(Error::EmptyCloud)?.theta.len();
        let mut mean = vec![0.0; dim];
        let mut total = 0.0;
        for p in particles.iter().filter(|p| p.is_alive()) {
            let w = p.weight();
            total += w;
            for (m, v) in mean.iter_mut().zip(&p.theta.values) {
                *m += w * v;
            }
        }
        if total <= 0.0 {
            return Err(Error::EmptyCloud);
        }
        mean.iter_mut().for_each(|m| *m /= total);
        let mut cov = vec![0.0; dim * dim];
        for p in particles.iter().filter(|p| p.is_alive()) {
            let w = p.weight() / total;
            for i in 0..dim {
                let di = p.theta.values[i] - mean[i];
                for j in 0..=i {
                    cov[i * dim + j] += w * di * (p.theta.values[j] - mean[j]);
                }
            }
        }
        for i in 0..dim {
            for j in 0..i {
                cov[j * dim + i] = cov[i * dim + j];
            }
        }
        cov.iter_mut().for_each(|c| *c *= scale);
        Self::new(&cov, dim, symmetry)
    }

    pub fn propose<R: Rng + ?Sized>(&self, theta: &[f64], rng: &mut R) -> Vec<f64> {
        let d = self.dim;
        let reflect = self.symmetry.is_some() && rng.random::<f64>() < 0.5;
        let z: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let mut step = vec![0.0; d];
        for i in 0..d {
            step[i] = (0..=i).map(|j| self.chol[i * d + j] * z[j]).sum();
        }
        if let (true, Some(s)) = (reflect, &self.symmetry) {
            step = (0..d).map(|i| s.sign[i] * step[s.perm[i]]).collect();
        }
        let mut out: Vec<f64> = theta.iter().zip(&step).map(|(t, s)| t + s).collect();
        if let Some(s) = &self.symmetry {
            // canonical representative: the one with first coordinate ≤ 0
            if out[0] > 0.0 {
                out = s.apply(&out);
            }
        }
        out
    }
}

/// Lower Cholesky factor; a growing diagonal jitter is added until the
/// factorisation succeeds (covariances of collapsed clouds are singular).
fn cholesky_jittered(a: &[f64], d: usize) -> Vec<f64> {
    let scale = (0..d).map(|i| a[i * d + i].abs()).fold(0.0, f64::max).max(1e-300);
    let mut jitter = 0.0;
    loop {
        if let Some(l) = cholesky(a, d, jitter) {
            return l;
        }
        jitter = if jitter == 0.0 { 1e-12 * scale } else { jitter * 10.0 };
    }
}

fn cholesky(a: &[f64], d: usize, jitter: f64) -> Option<Vec<f64>> {
    let mut l = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..=i {
            let mut s = a[i * d + j];
            if i == j {
                s += jitter;
            }
            for k in 0..j {
                s -= l[i * d + k] * l[j * d + k];
            }
            if i == j {
                if !(s > 0.0) {
                    return None;
                }
                l[i * d + i] = s.sqrt();
            } else {
                l[i * d + j] = s / l[j * d + j];
            }
        }
    }
    Some(l)
}

/// Outcome of one Metropolis–Hastings step.
#[derive(Debug, Clone, PartialEq)]
pub struct MoveOutcome {
    pub theta: Vec<f64>,
    pub log_prior: f64,
    pub distance: f64,
    pub accepted: bool,
    pub simulated: bool,
}

/// One MH step targeting prior × 1{θ is accepted by `check`}. `check` runs
/// only for proposals that survive the prior ratio; it returns the new
/// distance if the proposal falls inside the tolerance region and whether a
/// simulation was spent.
pub fn mh_step<R, F>(
    prior: &Prior,
    proposal: &Proposal,
    theta: &[f64],
    log_prior: f64,
    current_distance: f64,
    rng: &mut R,
    mut check: F,
) -> Result<MoveOutcome>
where
    R: Rng + ?Sized,
    F: FnMut(&[f64], &mut R) -> Result<(Option<f64>, bool)>,
{
    let candidate = proposal.propose(theta, rng);
    let u: f64 = rng.random();
    let stay = |simulated| MoveOutcome {
        theta: theta.to_vec(),
        log_prior,
        distance: current_distance,
        accepted: false,
        simulated,
    };
    let lp = prior.log_density_unchecked(&candidate);
    if lp == f64::NEG_INFINITY || u.ln() >= lp - log_prior {
        return Ok(stay(false));
    }
    let (inside, simulated) = check(&candidate, rng)?;
    Ok(match inside {
        Some(d) => MoveOutcome {
            theta: candidate,
            log_prior: lp,
            distance: d,
            accepted: true,
            simulated,
        },
        None => stay(simulated),
    })
}

/// Adaptive SMC-ABC. `address` fixes the master seed and replication; the
/// particle and stage components are filled in internally.
/// MH steps for the next stage given the previous acceptance rate.
fn move_count(cfg: &SmcConfig, acceptance: Option<f64>) -> usize {
    let base = cfg.move_steps;
    match acceptance {
        Some(a) if cfg.move_coverage > 0.0 => {
            if !(a > 0.0) {
                return usize::MAX;
            }
            if a >= 1.0 {
                return base;
            }
            let need = ((1.0 - cfg.move_coverage).ln() / (1.0 - a).ln()).ceil();
            (need as usize).max(base)
        }
        _ => base,
    }
}

pub fn smc_abc(problem: &AbcProblem, cfg: &SmcConfig, address: StreamAddress) -> Result<ParticleCloud> {
    cfg.validate()?;
    let n = cfg.n_particles;
    let draws = problem.initial_draws(n, address)?;
    if draws.iter().all(|d| d.1 == f64::INFINITY) {
        return Err(Error::Degenerate(
            "every initial particle is incompatible with the observed data".into(),
        ));
    }
    let mut total: u64 = draws.iter().map(|d| d.2).sum();
    let mut particles: Vec<Particle> = draws
        .into_iter()
        .map(|(theta, d, _)| Particle {
            theta: problem.wrap(theta),
            distance: d,
            log_weight: -(n as f64).ln(),
        })
        .collect();
    let mut log_priors: Vec<f64> = particles
        .iter()
        .map(|p| problem.prior.log_density_unchecked(&p.theta.values))
        .collect();

    let mut epsilon = f64::INFINITY;
    let mut trace = Vec::new();
    let mut stages: Vec<StageInfo> = Vec::new();
    let mut stagnant = 0;
    let mut t: u64 = 0;
    loop {
        t += 1;
        // (1) shrink the tolerance and reweight by the indicator
        let mut live: Vec<f64> = particles
            .iter()
            .filter(|p| p.is_alive() && p.distance.is_finite())
            .map(|p| p.distance)
            .collect();
        let hold = stages.last().is_some_and(|s| s.acceptance_rate < cfg.min_acceptance);
        let next = if hold {
            epsilon
        } else {
            lower_quantile(&mut live, cfg.alpha_quantile).min(epsilon)
        };
        let relative = if epsilon.is_infinite() {
            1.0
        } else if epsilon > 0.0 {
            (epsilon - next) / epsilon
        } else {
            0.0
        };
        epsilon = next;
        trace.push(epsilon);
        for p in particles.iter_mut() {
            if !(p.distance.is_finite() && p.distance <= epsilon) {
                p.log_weight = f64::NEG_INFINITY;
            }
        }
        normalize_log_weights(&mut particles)?;
        let ess = ess_of(&particles);
        let alive = particles.iter().filter(|p| p.is_alive()).count();
        stages.push(StageInfo {
            epsilon,
            alive,
            ess,
            resampled: false,
            acceptance_rate: 0.0,
            simulations: 0,
        });
        stagnant = if relative < cfg.stagnation_tol { stagnant + 1 } else { 0 };
        let affordable = (cfg.sim_budget.saturating_sub(total) / n as u64) as usize;
        if stagnant >= cfg.stagnation_stages || affordable < cfg.move_steps {
            break;
        }
        let prev_acceptance = stages.len().checked_sub(2).map(|k| stages[k].acceptance_rate);
        let steps = move_count(cfg, prev_acceptance).min(affordable);

        // (2) resample when degenerate
        if ess < cfg.ess_threshold_fraction * n as f64 {
            let mut rng = address
                .with_particle(RUN_LEVEL)
                .with_stage(stage::RESAMPLE_BASE + t)
                .stream();
            let ancestors = systematic_ancestors(
                &particles.iter().map(Particle::weight).collect::<Vec<_>>(),
                rng.random::<f64>(),
            );
            let lw = -(n as f64).ln();
            let (old_p, old_lp) = (particles, log_priors);
            particles = ancestors
                .iter()
                .map(|&a| Particle {
                    log_weight: lw,
                    ..old_p[a].clone()
                })
                .collect();
            log_priors = ancestors.iter().map(|&a| old_lp[a]).collect();
            stages.last_mut().unwrap().resampled = true;
            stages.last_mut().unwrap().ess = n as f64;
        }

        // (3) move the live particles
        let proposal = Proposal::from_cloud(&particles, cfg.rw_scale, problem.symmetry.clone())?;
        let moved: Vec<(Vec<f64>, f64, f64, u64, usize)> = particles
            .par_iter()
            .zip(log_priors.par_iter())
            .enumerate()
            .map(|(i, (p, &lp))| {
                let mut theta = p.theta.values.clone();
                let (mut lp, mut d) = (lp, p.distance);
                let (mut sims, mut acc) = (0u64, 0usize);
                if !p.is_alive() {
                    return Ok((theta, lp, d, sims, acc));
                }
                let mut rng = address.with_particle(i as u64).with_stage(t).stream();
                for _ in 0..steps {
                    let out = mh_step(&problem.prior, &proposal, &theta, lp, d, &mut rng, |cand, rng| {
                        let evaluated = problem.evaluate(cand, rng)?;
                        let simulated = evaluated.is_some();
                        Ok((evaluated.filter(|&dist| dist <= epsilon), simulated))
                    })?;
                    sims += out.simulated as u64;
                    acc += out.accepted as usize;
                    theta = out.theta;
                    lp = out.log_prior;
                    d = out.distance;
                }
                Ok((theta, lp, d, sims, acc))
            })
            .collect::<Result<_>>()?;
        let mut sims = 0;
        let mut accepted = 0;
        for (i, (theta, lp, d, s, a)) in moved.into_iter().enumerate() {
            particles[i].theta.values = theta;
            particles[i].distance = d;
            log_priors[i] = lp;
            sims += s;
            accepted += a;
        }
        total += sims;
        let attempts = particles.iter().filter(|p| p.is_alive()).count() * steps;
        let last = stages.last_mut().unwrap();
        last.simulations = sims;
        last.acceptance_rate = accepted as f64 / attempts.max(1) as f64;
    }

    let ess = ess_of(&particles);
    Ok(ParticleCloud {
        particles,
        epsilon,
        epsilon_trace: trace,
        stages,
        total_simulations: total,
        ess,
    })
}
