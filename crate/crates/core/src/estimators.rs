//! Posterior summaries and the minimum-distance point estimator.
//!
//! The point estimator minimises the distance between the observed data and
//! the model measure itself (no simulation), which needs a tractable model;
//! only the normal mixture qualifies. Its Hellinger objective compares the
//! kernel-smoothed data with the model density smoothed by the same kernel
//! (for a normal mixture that is again a normal mixture with variances
//! widened by h²).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::abc::ParticleCloud;
use crate::distances::{DistanceContext, DistanceKind};
use crate::error::{Error, Result};
use crate::measures::SmoothedDensity;
use crate::models::{self, ModelKind, ParameterVector, Prior};
use crate::rng::{stage, StreamAddress};

/// Weighted marginal summaries of a particle cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSummary {
    pub mean: ParameterVector,
    pub std: Vec<f64>,
    /// Equal-tailed 95% credible bounds.
    pub ci_low: Vec<f64>,
    pub ci_high: Vec<f64>,
}

impl PosteriorSummary {
    pub fn contains(&self, j: usize, value: f64) -> bool {
        self.ci_low[j] <= value && value <= self.ci_high[j]
    }
}

/// Weighted quantile by linear interpolation of the inverse weighted ECDF
/// through the points `(C_k, x_(k))`, `C_k` the cumulative weight.
/// `pairs` must be sorted by value and carry positive weights summing to 1.
fn weighted_quantile(pairs: &[(f64, f64)], q: f64) -> f64 {
    let mut cum = 0.0;
    let mut prev: Option<(f64, f64)> = None;
    for &(x, w) in pairs {
        let next = cum + w;
        if next >= q {
            return match prev {
                None => x,
                Some((px, pc)) if next > pc => px + (q - pc) / (next - pc) * (x - px),
                Some(_) => x,
            };
        }
        cum = next;
        prev = Some((x, cum));
    }
    pairs.last().map_or(f64::NAN, |p| p.0)
}

/// Weighted mean, population standard deviation and 2.5%/97.5% quantiles per
/// coordinate.
pub fn summarize(cloud: &ParticleCloud) -> Result<PosteriorSummary> {
    let live: Vec<_> = cloud.alive().collect();
    if live.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let weights: Vec<f64> = live.iter().map(|p| p.weight()).collect();
    let total: f64 = weights.iter().sum();
    let d = live[0].theta.len();
    let mut mean = vec![0.0; d];
    let mut std = vec![0.0; d];
    let mut lo = vec![0.0; d];
    let mut hi = vec![0.0; d];
    for j in 0..d {
        // shifted by the first value so that identical particles give it back exactly
        let x0 = live[0].theta.values[j];
        let m = x0 + live.iter().zip(&weights).map(|(p, w)| w * (p.theta.values[j] - x0)).sum::<f64>() / total;
        let var = live
            .iter()
            .zip(&weights)
            .map(|(p, w)| w * (p.theta.values[j] - m).powi(2))
            .sum::<f64>()
            / total;
        let mut pairs: Vec<(f64, f64)> = live
            .iter()
            .zip(&weights)
            .map(|(p, w)| (p.theta.values[j], w / total))
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        mean[j] = m;
        std[j] = var.sqrt();
        lo[j] = weighted_quantile(&pairs, 0.025);
        hi[j] = weighted_quantile(&pairs, 0.975);
    }
    Ok(PosteriorSummary {
        mean: ParameterVector {
            values: mean,
            names: live[0].theta.names,
        },
        std,
        ci_low: lo,
        ci_high: hi,
    })
}

/// Nelder–Mead settings for [`md_point_estimate`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub restarts: usize,
    pub max_iterations: usize,
    /// Convergence needs both the simplex diameter (max-norm) and the spread
    /// of objective values to drop below this.
    pub tolerance: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            restarts: 5,
            max_iterations: 500,
            tolerance: 1e-6,
        }
    }
}

/// Result of [`nelder_mead`].
#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Folds `x` back into `[lo, hi]` by reflection at the bounds.
fn reflect(x: f64, lo: f64, hi: f64) -> f64 {
    match (lo.is_finite(), hi.is_finite()) {
        (false, false) => x,
        (true, false) => {
            if x < lo {
                2.0 * lo - x
            } else {
                x
            }
        }
        (false, true) => {
            if x > hi {
                2.0 * hi - x
            } else {
                x
            }
        }
        (true, true) => {
            let w = hi - lo;
            let r = (x - lo).rem_euclid(2.0 * w);
            if r <= w {
                lo + r
            } else {
                hi - (r - w)
            }
        }
    }
}

/// Nelder–Mead minimisation (standard coefficients 1, 2, ½, ½) with every
/// trial point reflected into the box `bounds`.
///
/// Reflection can fold vertices onto each other and collapse the simplex
/// away from the optimum, so after convergence the search restarts from the
/// best point with a fresh simplex until a restart no longer improves the
/// objective by more than the tolerance. `max_iterations` bounds the total.
pub fn nelder_mead<F>(f: F, x0: &[f64], step: &[f64], bounds: &[(f64, f64)], cfg: &OptimizerConfig) -> Minimum
where
    F: Fn(&[f64]) -> f64,
{
    let mut best = nelder_mead_once(&f, x0, step, bounds, cfg.tolerance, cfg.max_iterations);
    let mut used = best.iterations;
    while best.converged {
        if used >= cfg.max_iterations {
            best.converged = false;
            break;
        }
        let again = nelder_mead_once(&f, &best.x, step, bounds, cfg.tolerance, cfg.max_iterations - used);
        used += again.iterations;
        let improved = again.value < best.value - cfg.tolerance;
        if again.value <= best.value {
            best = again;
        }
        if !improved {
            break;
        }
    }
    best.iterations = used;
    best
}

fn nelder_mead_once<F>(f: &F, x0: &[f64], step: &[f64], bounds: &[(f64, f64)], tolerance: f64, max_iterations: usize) -> Minimum
where
    F: Fn(&[f64]) -> f64,
{
    let d = x0.len();
    let clamp = |x: Vec<f64>| -> Vec<f64> {
        x.into_iter()
            .zip(bounds)
            .map(|(v, &(lo, hi))| reflect(v, lo, hi))
            .collect()
    };
    let eval = |x: &[f64]| {
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(d + 1);
    let start = clamp(x0.to_vec());
    simplex.push((start.clone(), eval(&start)));
    for i in 0..d {
        let mut x = start.clone();
        x[i] += step[i];
        let x = clamp(x);
        let v = eval(&x);
        simplex.push((x, v));
    }
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iterations {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = &simplex[0];
        let diameter = simplex[1..]
            .iter()
            .flat_map(|(x, _)| x.iter().zip(&best.0).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        let spread = simplex[d].1 - best.1;
        if diameter <= tolerance && spread <= tolerance {
            converged = true;
            break;
        }
        iterations += 1;
        let centroid: Vec<f64> = (0..d)
            .map(|j| simplex[..d].iter().map(|(x, _)| x[j]).sum::<f64>() / d as f64)
            .collect();
        let toward = |t: f64| -> Vec<f64> {
            let worst = &simplex[d].0;
            clamp((0..d).map(|j| centroid[j] + t * (worst[j] - centroid[j])).collect())
        };
        let xr = toward(-1.0);
        let fr = eval(&xr);
        if fr < simplex[0].1 {
            let xe = toward(-2.0);
            let fe = eval(&xe);
            simplex[d] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[d - 1].1 {
            simplex[d] = (xr, fr);
        } else {
            let (xc, fc) = if fr < simplex[d].1 {
                let x = toward(-0.5);
                let v = eval(&x);
                (x, v)
            } else {
                let x = toward(0.5);
                let v = eval(&x);
                (x, v)
            };
            if fc < simplex[d].1.min(fr) {
                simplex[d] = (xc, fc);
            } else {
                let x0 = simplex[0].0.clone();
                for vertex in simplex.iter_mut().skip(1) {
                    let x = clamp(vertex.0.iter().zip(&x0).map(|(v, b)| b + 0.5 * (v - b)).collect());
                    let v = eval(&x);
                    *vertex = (x, v);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, value) = simplex.swap_remove(0);
    Minimum {
        x,
        value,
        iterations,
        converged,
    }
}

/// Outcome of the minimum-distance estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct MdEstimate {
    pub theta_hat: ParameterVector,
    pub objective_value: f64,
    pub converged: bool,
    pub restarts_used: usize,
}

/// Distance between the observed data in `ctx` and the mixture model at
/// `theta`: Hellinger against the kernel-smoothed model density, or CvM
/// against the model CDF. `+∞` outside the parameter space.
pub fn md_objective(ctx: &DistanceContext, theta: &[f64]) -> Result<f64> {
    if ModelKind::Mixture.validate_theta(theta).is_err() {
        return Ok(f64::INFINITY);
    }
    match ctx.kind() {
        DistanceKind::Cvm => Ok(ctx.cvm_against_cdf(|x| models::mixture_cdf_unchecked(theta, x))),
        DistanceKind::Hellinger => {
            let h = ctx.bandwidth().expect("Hellinger context has a bandwidth");
            let grid = *ctx.grid().expect("Hellinger context has a grid");
            let values = grid
                .points()
                .iter()
                .map(|&x| models::mixture_smoothed_density(theta, x, h))
                .collect();
            let below = models::mixture_smoothed_cdf(theta, grid.lower(), h);
            let above = 1.0 - models::mixture_smoothed_cdf(theta, grid.upper(), h);
            let smoothed = SmoothedDensity::from_parts(grid, values, h, Some((below, above.max(0.0))));
            ctx.hellinger_against(&smoothed)
        }
        DistanceKind::Wasserstein { .. } => Err(Error::InvalidDistance(
            "the minimum-distance estimator supports hellinger and cvm only".into(),
        )),
    }
}

/// Minimum-distance estimate for the normal mixture: Nelder–Mead from
/// `cfg.restarts` prior draws, best objective wins (lowest restart index on
/// ties). The estimate is reported with canonical labels (μ ≤ 0).
pub fn md_point_estimate(
    model: ModelKind,
    prior: &Prior,
    ctx: &DistanceContext,
    cfg: &OptimizerConfig,
    address: StreamAddress,
) -> Result<MdEstimate> {
    if model != ModelKind::Mixture {
        return Err(Error::InvalidConfig(format!(
            "the minimum-distance estimator needs a tractable density; {} has none",
            model.name()
        )));
    }
    if cfg.restarts == 0 || cfg.max_iterations == 0 {
        return Err(Error::InvalidConfig("optimizer needs at least one restart and iteration".into()));
    }
    md_objective(ctx, &[-2.0, 0.5, 1.0, 1.0])?;
    let bounds: Vec<(f64, f64)> = prior.coordinates.iter().map(|c| c.dist.bounds()).collect();
    let step: Vec<f64> = prior.coordinates.iter().map(|c| 0.25 * c.dist.variance().sqrt()).collect();
    let objective = |x: &[f64]| md_objective(ctx, x).unwrap_or(f64::INFINITY);

    let runs: Vec<Minimum> = (0..cfg.restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = address.with_particle(r as u64).with_stage(stage::OPTIMIZER).stream();
            let mut x0 = prior.sample(&mut rng);
            for _ in 0..100 {
                if objective(&x0).is_finite() {
                    break;
                }
                x0 = prior.sample(&mut rng);
            }
            nelder_mead(objective, &x0, &step, &bounds, cfg)
        })
        .collect();
    // min_by keeps the first of equal elements: lowest restart index wins
    let best = runs
        .iter()
        .min_by(|a, b| a.value.total_cmp(&b.value))
        .expect("at least one restart");
    if !best.value.is_finite() {
        return Err(Error::OptimizerFailure("every restart ended at an infinite objective".into()));
    }
    let mut theta = best.x.clone();
    model.canonicalize(&mut theta);
    Ok(MdEstimate {
        theta_hat: ParameterVector {
            values: theta,
            names: model.param_names(),
        },
        objective_value: best.value,
        converged: runs.iter().any(|m| m.converged),
        restarts_used: cfg.restarts,
    })
}

/// `|posterior mean − θ̂|` per coordinate.
pub fn posterior_mean_vs_md_gap(cloud: &ParticleCloud, md: &MdEstimate) -> Result<Vec<f64>> {
    let s = summarize(cloud)?;
    if s.mean.len() != md.theta_hat.len() {
        return Err(Error::DimensionMismatch {
            expected: s.mean.len(),
            actual: md.theta_hat.len(),
        });
    }
    Ok(s.mean
        .values
        .iter()
        .zip(&md.theta_hat.values)
        .map(|(a, b)| (a - b).abs())
        .collect())
}
