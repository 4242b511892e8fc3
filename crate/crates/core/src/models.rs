//! Priors and forward simulators for the benchmark models.
//!
//! | model     | parameters                  | prior                                         |
//! |-----------|-----------------------------|-----------------------------------------------|
//! | `mixture` | (μ, ω, σ₁, σ₂)              | N(0,1) × U[0,1] × U[0,10] × U[0,10]           |
//! | `gk`      | (a, b, g, k)                | U[0,10]⁴                                      |
//! | `mg1`     | (θ₁, θ₂, θ₃)                | (θ₁, θ₂−θ₁, θ₃) ~ U[0,10]² × U[0,1/3]         |
//! | `sv`      | (π, β, σ_u)                 | N(0,1) × U[0,1] × U[0,5]                      |
//!
//! Contamination is part of the observed-data generating process only. The
//! [`Simulator`] handed to the samplers has no contamination field, so
//! inference always runs against the assumed (clean) model.

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::Dataset;
use crate::normal;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Mixture,
    Gk,
    Mg1,
    Sv,
}

const MIXTURE_NAMES: &[&str] = &["mu", "omega", "sigma1", "sigma2"];
const GK_NAMES: &[&str] = &["a", "b", "g", "k"];
const MG1_NAMES: &[&str] = &["theta1", "theta2", "theta3"];
const SV_NAMES: &[&str] = &["pi", "beta", "sigma_u"];

/// Mixture-component contamination variance used by default.
pub const MIXTURE_CONTAMINATION_VARIANCE: f64 = 0.01;
/// Jump-component variance of the stochastic volatility errors.
pub const SV_JUMP_VARIANCE: f64 = 0.001;

impl ModelKind {
    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::Mixture => "mixture",
            ModelKind::Gk => "gk",
            ModelKind::Mg1 => "mg1",
            ModelKind::Sv => "sv",
        }
    }

    pub fn param_names(&self) -> &'static [&'static str] {
        match self {
            ModelKind::Mixture => MIXTURE_NAMES,
            ModelKind::Gk => GK_NAMES,
            ModelKind::Mg1 => MG1_NAMES,
            ModelKind::Sv => SV_NAMES,
        }
    }

    pub fn dimension(&self) -> usize {
        self.param_names().len()
    }

    pub fn default_prior(&self) -> Prior {
        use PriorDist::*;
        let direct = |d| PriorCoordinate {
            dist: d,
            offset_from: None,
        };
        let coords = match self {
            ModelKind::Mixture => vec![
                direct(Normal { mean: 0.0, sd: 1.0 }),
                direct(Uniform { lo: 0.0, hi: 1.0 }),
                direct(Uniform { lo: 0.0, hi: 10.0 }),
                direct(Uniform { lo: 0.0, hi: 10.0 }),
            ],
            ModelKind::Gk => vec![direct(Uniform { lo: 0.0, hi: 10.0 }); 4],
            ModelKind::Mg1 => vec![
                direct(Uniform { lo: 0.0, hi: 10.0 }),
                PriorCoordinate {
                    dist: Uniform { lo: 0.0, hi: 10.0 },
                    offset_from: Some(0),
                },
                direct(Uniform {
                    lo: 0.0,
                    hi: 1.0 / 3.0,
                }),
            ],
            ModelKind::Sv => vec![
                direct(Normal { mean: 0.0, sd: 1.0 }),
                direct(Uniform { lo: 0.0, hi: 1.0 }),
                direct(Uniform { lo: 0.0, hi: 5.0 }),
            ],
        };
        Prior { coordinates: coords }
    }

    /// Checks that `theta` lies in the model's parameter space.
    pub fn validate_theta(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.dimension() {
            return Err(Error::DimensionMismatch {
                expected: self.dimension(),
                actual: theta.len(),
            });
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("non-finite parameter {theta:?}")));
        }
        let bad = |msg: &str| Err(Error::InvalidParameter(format!("{}: {msg} (theta = {theta:?})", self.name())));
        match self {
            ModelKind::Mixture => {
                if !(0.0..=1.0).contains(&theta[1]) {
                    return bad("omega must lie in [0, 1]");
                }
                if theta[2] <= 0.0 || theta[3] <= 0.0 {
                    return bad("component standard deviations must be positive");
                }
            }
            ModelKind::Gk => {
                if theta[1] <= 0.0 {
                    return bad("b must be positive");
                }
                if theta[3] <= -0.5 {
                    return bad("k must exceed -0.5");
                }
            }
            ModelKind::Mg1 => {
                if !(0.0 < theta[0] && theta[0] < theta[1]) {
                    return bad("need 0 < theta1 < theta2");
                }
                if theta[2] <= 0.0 {
                    return bad("theta3 must be positive");
                }
            }
            ModelKind::Sv => {
                if theta[1].abs() >= 1.0 {
                    return bad("|beta| must be below 1");
                }
                if theta[2] < 0.0 {
                    return bad("sigma_u must be nonnegative");
                }
            }
        }
        Ok(())
    }

    /// Label-switching involution under which the model (and its default
    /// prior) is invariant, as a signed permutation plus shift:
    /// `new[i] = sign[i] * old[perm[i]] + shift[i]`.
    pub fn symmetry(&self) -> Option<Symmetry> {
        match self {
            // (μ, ω, σ₁, σ₂) ↦ (−μ, 1−ω, σ₂, σ₁)
            ModelKind::Mixture => Some(Symmetry {
                perm: vec![0, 1, 3, 2],
                sign: vec![-1.0, -1.0, 1.0, 1.0],
                shift: vec![0.0, 1.0, 0.0, 0.0],
            }),
            _ => None,
        }
    }

    /// Maps `theta` to the representative with μ ≤ 0 for models with a
    /// label-switching symmetry; no-op otherwise.
    pub fn canonicalize(&self, theta: &mut [f64]) {
        if let (ModelKind::Mixture, Some(s)) = (self, self.symmetry()) {
            if theta[0] > 0.0 {
                let mapped = s.apply(theta);
                theta.copy_from_slice(&mapped);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Symmetry {
    pub perm: Vec<usize>,
    pub sign: Vec<f64>,
    pub shift: Vec<f64>,
}

impl Symmetry {
    pub fn apply(&self, theta: &[f64]) -> Vec<f64> {
        (0..theta.len())
            .map(|i| self.sign[i] * theta[self.perm[i]] + self.shift[i])
            .collect()
    }

    /// `L Σ Lᵀ` for the linear part `L` of the map; `cov` is row-major d×d.
    pub fn transform_covariance(&self, cov: &[f64]) -> Vec<f64> {
        let d = self.perm.len();
        let mut out = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                out[i * d + j] = self.sign[i] * self.sign[j] * cov[self.perm[i] * d + self.perm[j]];
            }
        }
        out
    }
}

/// A parameter value with the model's coordinate labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterVector {
    pub values: Vec<f64>,
    pub names: &'static [&'static str],
}

impl ParameterVector {
    pub fn new(model: ModelKind, values: Vec<f64>) -> Result<Self> {
        if values.len() != model.dimension() {
            return Err(Error::DimensionMismatch {
                expected: model.dimension(),
                actual: values.len(),
            });
        }
        Ok(Self {
            values,
            names: model.param_names(),
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "snake_case", deny_unknown_fields)]
pub enum PriorDist {
    Uniform { lo: f64, hi: f64 },
    Normal { mean: f64, sd: f64 },
}

impl PriorDist {
    fn validate(&self) -> Result<()> {
        match *self {
            PriorDist::Uniform { lo, hi } if !(lo.is_finite() && hi.is_finite() && lo < hi) => {
                Err(Error::InvalidPrior(format!("uniform needs lo < hi, got [{lo}, {hi}]")))
            }
            PriorDist::Normal { mean, sd } if !(mean.is_finite() && sd.is_finite() && sd > 0.0) => {
                Err(Error::InvalidPrior(format!("normal needs sd > 0, got {sd}")))
            }
            _ => Ok(()),
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            PriorDist::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
            PriorDist::Normal { mean, sd } => mean + sd * rng.sample::<f64, _>(StandardNormal),
        }
    }

    fn ln_density(&self, x: f64) -> f64 {
        match *self {
            PriorDist::Uniform { lo, hi } => {
                if (lo..=hi).contains(&x) {
                    -(hi - lo).ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
            PriorDist::Normal { mean, sd } => normal::ln_pdf(x, mean, sd),
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            PriorDist::Uniform { lo, hi } => 0.5 * (lo + hi),
            PriorDist::Normal { mean, .. } => mean,
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            PriorDist::Uniform { lo, hi } => (hi - lo) * (hi - lo) / 12.0,
            PriorDist::Normal { sd, .. } => sd * sd,
        }
    }

    /// Support bounds; infinite for the normal.
    pub fn bounds(&self) -> (f64, f64) {
        match *self {
            PriorDist::Uniform { lo, hi } => (lo, hi),
            PriorDist::Normal { .. } => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }
}

/// One prior coordinate. With `offset_from = Some(i)` the distribution is
/// placed on `θ_j − θ_i` rather than on `θ_j` (a unit-Jacobian shift).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorCoordinate {
    #[serde(flatten)]
    pub dist: PriorDist,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offset_from: Option<usize>,
}

/// Product prior over independent (possibly offset) coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Prior {
    pub coordinates: Vec<PriorCoordinate>,
}

impl Prior {
    pub fn validate(&self) -> Result<()> {
        for (j, c) in self.coordinates.iter().enumerate() {
            c.dist.validate()?;
            if let Some(i) = c.offset_from {
                if i >= j {
                    return Err(Error::InvalidPrior(format!(
                        "coordinate {j} may only be offset from an earlier coordinate, got {i}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn dimension(&self) -> usize {
        self.coordinates.len()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut theta = Vec::with_capacity(self.dimension());
        for c in &self.coordinates {
            let raw = c.dist.sample(rng);
            let base = c.offset_from.map_or(0.0, |i| theta[i]);
            theta.push(raw + base);
        }
        theta
    }

    pub fn log_density(&self, theta: &[f64]) -> Result<f64> {
        if theta.len() != self.dimension() {
            return Err(Error::DimensionMismatch {
                expected: self.dimension(),
                actual: theta.len(),
            });
        }
        Ok(self.log_density_unchecked(theta))
    }

    pub(crate) fn log_density_unchecked(&self, theta: &[f64]) -> f64 {
        let mut total = 0.0;
        for (j, c) in self.coordinates.iter().enumerate() {
            let raw = theta[j] - c.offset_from.map_or(0.0, |i| theta[i]);
            total += c.dist.ln_density(raw);
            if total == f64::NEG_INFINITY {
                break;
            }
        }
        total
    }

    /// Prior mean and variance of each coordinate of θ (not of the raw
    /// offset coordinates).
    pub fn moments(&self) -> Vec<(f64, f64)> {
        let mut out: Vec<(f64, f64)> = Vec::with_capacity(self.dimension());
        for c in &self.coordinates {
            let (m, v) = (c.dist.mean(), c.dist.variance());
            let (bm, bv) = c.offset_from.map_or((0.0, 0.0), |i| out[i]);
            out.push((m + bm, v + bv));
        }
        out
    }
}

/// Free-function form of [`Prior::sample`].
pub fn prior_sample<R: Rng + ?Sized>(prior: &Prior, model: ModelKind, rng: &mut R) -> ParameterVector {
    ParameterVector {
        values: prior.sample(rng),
        names: model.param_names(),
    }
}

/// Free-function form of [`Prior::log_density`].
pub fn prior_logdensity(prior: &Prior, theta: &ParameterVector) -> Result<f64> {
    prior.log_density(&theta.values)
}

/// Observed-data contamination: each observation (mixture) or each error
/// term (sv) is drawn from N(zeta, nu) with probability alpha.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContaminationSpec {
    pub alpha: f64,
    pub zeta: f64,
    /// Variance of the contaminating component.
    pub nu: f64,
}

impl ContaminationSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidConfig(format!(
                "contamination alpha must lie in [0, 1], got {}",
                self.alpha
            )));
        }
        if !(self.zeta.is_finite() && self.nu.is_finite() && self.nu > 0.0) {
            return Err(Error::InvalidConfig("contamination needs finite zeta and nu > 0".into()));
        }
        Ok(())
    }

    pub fn with_zeta(self, zeta: f64) -> Self {
        Self { zeta, ..self }
    }
}

fn default_burn_in() -> usize {
    0
}

fn default_true() -> bool {
    true
}

/// A benchmark model together with its prior, observed sample size, default
/// simulated sample size and optional observed-data contamination.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub name: ModelKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior: Option<Prior>,
    pub n_obs: usize,
    pub m_sim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contamination: Option<ContaminationSpec>,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    /// Restrict models with a label-switching symmetry to one labelling
    /// (samplers then work on the quotient space).
    #[serde(default = "default_true")]
    pub identify_labels: bool,
}

impl ModelSpec {
    pub fn new(name: ModelKind, n_obs: usize, m_sim: usize) -> Self {
        Self {
            name,
            prior: None,
            n_obs,
            m_sim,
            contamination: None,
            burn_in: 0,
            identify_labels: true,
        }
    }

    pub fn with_contamination(mut self, c: ContaminationSpec) -> Self {
        self.contamination = Some(c);
        self
    }

    pub fn with_burn_in(mut self, burn_in: usize) -> Self {
        self.burn_in = burn_in;
        self
    }

    /// The symmetry samplers should quotient out, if any.
    pub fn label_symmetry(&self) -> Option<Symmetry> {
        self.identify_labels.then(|| self.name.symmetry()).flatten()
    }

    pub fn prior(&self) -> Prior {
        self.prior.clone().unwrap_or_else(|| self.name.default_prior())
    }

    pub fn validate(&self) -> Result<()> {
        let prior = self.prior();
        prior.validate()?;
        if prior.dimension() != self.name.dimension() {
            return Err(Error::InvalidPrior(format!(
                "{} has {} parameters but the prior has {}",
                self.name.name(),
                self.name.dimension(),
                prior.dimension()
            )));
        }
        if self.n_obs == 0 || self.m_sim == 0 {
            return Err(Error::InvalidConfig("n_obs and m_sim must be positive".into()));
        }
        if let Some(c) = &self.contamination {
            c.validate()?;
            if matches!(self.name, ModelKind::Gk | ModelKind::Mg1) {
                return Err(Error::InvalidConfig(format!(
                    "contamination is not defined for the {} model",
                    self.name.name()
                )));
            }
        }
        Ok(())
    }

    /// The assumed model for inference, producing `m` points per call.
    pub fn simulator(&self, m: usize) -> Simulator {
        Simulator {
            kind: self.name,
            m,
            burn_in: self.burn_in,
        }
    }

    /// Generates an observed dataset of `n_obs` points, contaminated if
    /// configured.
    pub fn simulate_observed<R: Rng + ?Sized>(&self, theta: &[f64], rng: &mut R) -> Result<Dataset> {
        simulate_with(self.name, theta, self.n_obs, self.burn_in, self.contamination.as_ref(), rng)
    }
}

/// Clean forward simulator used inside the samplers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Simulator {
    pub kind: ModelKind,
    pub m: usize,
    pub burn_in: usize,
}

impl Simulator {
    pub fn simulate<R: Rng + ?Sized>(&self, theta: &[f64], rng: &mut R) -> Result<Dataset> {
        simulate_with(self.kind, theta, self.m, self.burn_in, None, rng)
    }

    /// Parameters incompatible with the observed data regardless of the
    /// simulation (the M/G/1 requirement θ₁ ≤ min y).
    pub fn admissible(&self, theta: &[f64], observed: &Dataset) -> bool {
        match self.kind {
            ModelKind::Mg1 => theta[0] <= observed.min(),
            _ => true,
        }
    }
}

/// Dispatches to the model-specific simulator.
pub fn model_simulate<R: Rng + ?Sized>(spec: &ModelSpec, theta: &[f64], rng: &mut R) -> Result<Dataset> {
    spec.simulator(spec.m_sim).simulate(theta, rng)
}

fn simulate_with<R: Rng + ?Sized>(
    kind: ModelKind,
    theta: &[f64],
    n: usize,
    burn_in: usize,
    contamination: Option<&ContaminationSpec>,
    rng: &mut R,
) -> Result<Dataset> {
    match kind {
        ModelKind::Mixture => simulate_mixture(theta, n, contamination, rng),
        ModelKind::Gk => simulate_gk(theta, n, rng),
        ModelKind::Mg1 => simulate_mg1(theta, n, rng),
        ModelKind::Sv => simulate_sv(theta, n, burn_in, contamination, rng),
    }
}

/// Two-component normal mixture: N(μ, σ₁²) with probability 1 − ω and
/// N(−μ, σ₂²) otherwise.
pub fn simulate_mixture<R: Rng + ?Sized>(
    theta: &[f64],
    n: usize,
    contamination: Option<&ContaminationSpec>,
    rng: &mut R,
) -> Result<Dataset> {
    ModelKind::Mixture.validate_theta(theta)?;
    let (mu, omega, s1, s2) = (theta[0], theta[1], theta[2], theta[3]);
    let mut values = Vec::with_capacity(n);
    for _ in 0..n {
        let second = rng.random::<f64>() < omega;
        let z: f64 = rng.sample(StandardNormal);
        let mut y = if second { -mu + s2 * z } else { mu + s1 * z };
        if let Some(c) = contamination {
            // draws are consumed whether or not the point is replaced, so
            // datasets that differ only in zeta share everything else
            let hit = rng.random::<f64>() < c.alpha;
            let e: f64 = rng.sample(StandardNormal);
            if hit {
                y = c.zeta + c.nu.sqrt() * e;
            }
        }
        values.push(y);
    }
    Dataset::new(values)
}

/// Mixture density f_θ(x).
pub fn mixture_density(theta: &[f64], x: f64) -> Result<f64> {
    ModelKind::Mixture.validate_theta(theta)?;
    Ok(mixture_density_unchecked(theta, x))
}

pub(crate) fn mixture_density_unchecked(theta: &[f64], x: f64) -> f64 {
    let (mu, omega, s1, s2) = (theta[0], theta[1], theta[2], theta[3]);
    (1.0 - omega) * normal::pdf(x, mu, s1) + omega * normal::pdf(x, -mu, s2)
}

/// Mixture CDF.
pub fn mixture_cdf(theta: &[f64], x: f64) -> Result<f64> {
    ModelKind::Mixture.validate_theta(theta)?;
    Ok(mixture_cdf_unchecked(theta, x))
}

pub(crate) fn mixture_cdf_unchecked(theta: &[f64], x: f64) -> f64 {
    let (mu, omega, s1, s2) = (theta[0], theta[1], theta[2], theta[3]);
    (1.0 - omega) * normal::cdf((x - mu) / s1) + omega * normal::cdf((x + mu) / s2)
}

/// Mixture density convolved with a N(0, h²) kernel (closed form: each
/// component variance grows by h²).
pub fn mixture_smoothed_density(theta: &[f64], x: f64, h: f64) -> f64 {
    let (mu, omega, s1, s2) = (theta[0], theta[1], theta[2], theta[3]);
    let w1 = (s1 * s1 + h * h).sqrt();
    let w2 = (s2 * s2 + h * h).sqrt();
    (1.0 - omega) * normal::pdf(x, mu, w1) + omega * normal::pdf(x, -mu, w2)
}

/// CDF of the smoothed mixture.
pub fn mixture_smoothed_cdf(theta: &[f64], x: f64, h: f64) -> f64 {
    let (mu, omega, s1, s2) = (theta[0], theta[1], theta[2], theta[3]);
    let w1 = (s1 * s1 + h * h).sqrt();
    let w2 = (s2 * s2 + h * h).sqrt();
    (1.0 - omega) * normal::cdf((x - mu) / w1) + omega * normal::cdf((x + mu) / w2)
}

/// g-and-k transform of a standard normal value `z`.
#[inline]
pub fn gk_transform(theta: &[f64], z: f64) -> f64 {
    let (a, b, g, k) = (theta[0], theta[1], theta[2], theta[3]);
    // (1 − e^{−gz}) / (1 + e^{−gz}) = tanh(gz / 2), without overflow
    a + b * (1.0 + 0.8 * (0.5 * g * z).tanh()) * (1.0 + z * z).powf(k) * z
}

/// g-and-k quantile function.
pub fn gk_quantile(theta: &[f64], q: f64) -> Result<f64> {
    ModelKind::Gk.validate_theta(theta)?;
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::QOutOfRange(q));
    }
    Ok(gk_transform(theta, normal::quantile(q)))
}

/// Inversion sampling from the g-and-k distribution. Feeding standard normal
/// draws through the transform is the same as evaluating the quantile
/// function at uniforms, since z(U) is standard normal.
pub fn simulate_gk<R: Rng + ?Sized>(theta: &[f64], n: usize, rng: &mut R) -> Result<Dataset> {
    ModelKind::Gk.validate_theta(theta)?;
    let values = (0..n)
        .map(|_| gk_transform(theta, rng.sample(StandardNormal)))
        .collect();
    Dataset::new(values)
}

/// M/G/1 queue: service times U[θ₁, θ₂], exponential inter-arrival times
/// with rate θ₃; only inter-departure times are returned.
pub fn simulate_mg1<R: Rng + ?Sized>(theta: &[f64], n: usize, rng: &mut R) -> Result<Dataset> {
    ModelKind::Mg1.validate_theta(theta)?;
    let (t1, t2, rate) = (theta[0], theta[1], theta[2]);
    let mut service = Vec::with_capacity(n);
    let mut interarrival = Vec::with_capacity(n);
    for _ in 0..n {
        service.push(t1 + (t2 - t1) * rng.random::<f64>());
        interarrival.push(rng.sample::<f64, _>(Exp1) / rate);
    }
    Dataset::time_series(mg1_departures(&service, &interarrival))
}

/// Inter-departure times from given service and inter-arrival times:
/// `y_i = u_i + max(0, A_i − D_{i−1})` with `A_i` the i-th arrival time and
/// `D_{i−1}` the previous departure time.
pub fn mg1_departures(service: &[f64], interarrival: &[f64]) -> Vec<f64> {
    let mut arrival = 0.0;
    let mut departure = 0.0;
    service
        .iter()
        .zip(interarrival)
        .map(|(&u, &w)| {
            arrival += w;
            let y = u + (arrival - departure).max(0.0);
            departure += y;
            y
        })
        .collect()
}

/// Log-normal stochastic volatility model. The log-variance AR(1) starts at
/// its stationary mean, runs `burn_in + n` steps and the last `n` returns are
/// kept.
pub fn simulate_sv<R: Rng + ?Sized>(
    theta: &[f64],
    n: usize,
    burn_in: usize,
    contamination: Option<&ContaminationSpec>,
    rng: &mut R,
) -> Result<Dataset> {
    ModelKind::Sv.validate_theta(theta)?;
    let (pi, beta, sigma_u) = (theta[0], theta[1], theta[2]);
    let mut log_var = pi / (1.0 - beta);
    let mut values = Vec::with_capacity(n);
    for t in 0..burn_in + n {
        let u: f64 = rng.sample(StandardNormal);
        log_var = pi + beta * log_var + sigma_u * u;
        let mut v: f64 = rng.sample(StandardNormal);
        if let Some(c) = contamination {
            let hit = rng.random::<f64>() < c.alpha;
            let e: f64 = rng.sample(StandardNormal);
            if hit {
                v = c.zeta + c.nu.sqrt() * e;
            }
        }
        if t >= burn_in {
            values.push(saturate((0.5 * log_var).exp() * v, v));
        }
    }
    Dataset::time_series(values)
}

/// Returns beyond the floating-point range (β near 1 puts the stationary
/// log-variance in the thousands) are pinned at ±`f64::MAX`, which keeps
/// their order.
fn saturate(x: f64, shock: f64) -> f64 {
    if x.is_finite() {
        x
    } else if shock == 0.0 {
        0.0
    } else {
        f64::MAX.copysign(shock)
    }
}
