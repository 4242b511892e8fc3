//! Discrepancies between the observed empirical measure and a simulated one.
//!
//! [`DistanceContext`] holds everything that depends only on the observed
//! data (sorted sample, ECDF at the sample points, smoothed observed density)
//! so that the simulation loop only pays for the simulated side.

use std::f64::consts::SQRT_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::{
    silverman_bandwidth, BinnedKde, Dataset, EmpiricalMeasure, IntegrationGrid, SmoothedDensity,
    DEFAULT_GRID_POINTS,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DistanceKind {
    Hellinger,
    Cvm,
    Wasserstein { p: f64 },
}

impl DistanceKind {
    pub fn validate(&self) -> Result<()> {
        match *self {
            DistanceKind::Wasserstein { p } if !(p.is_finite() && p >= 1.0) => Err(
                Error::InvalidDistance(format!("Wasserstein order must be >= 1, got {p}")),
            ),
            _ => Ok(()),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            DistanceKind::Hellinger => "hellinger",
            DistanceKind::Cvm => "cvm",
            DistanceKind::Wasserstein { .. } => "wasserstein",
        }
    }
}

/// How Wasserstein pairs order statistics of samples with different sizes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coupling {
    /// Lengths must match.
    #[default]
    EqualLength,
    /// The i-th of n observed order statistics is matched with the
    /// ⌈i·m/n⌉-th of m simulated ones.
    Quantile,
}

/// Options for building a [`DistanceContext`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DistanceOptions {
    /// Kernel bandwidth; Silverman's rule on the observed data when absent.
    pub bandwidth: Option<f64>,
    pub grid_points: usize,
    pub coupling: Coupling,
}

impl Default for DistanceOptions {
    fn default() -> Self {
        Self {
            bandwidth: None,
            grid_points: DEFAULT_GRID_POINTS,
            coupling: Coupling::EqualLength,
        }
    }
}

#[derive(Debug, Clone)]
struct HellingerState {
    bandwidth: f64,
    grid: IntegrationGrid,
    kde: BinnedKde,
    observed_density: SmoothedDensity,
    observed_root: RootDensity,
}

/// Square roots of a density normalised to unit total mass, with the two
/// tail cells appended as point masses.
#[derive(Debug, Clone)]
struct RootDensity {
    interior: Vec<f64>,
    lower_tail: f64,
    upper_tail: f64,
}

impl RootDensity {
    fn new(d: &SmoothedDensity) -> Option<Self> {
        let (lo, hi) = d.tail_mass().unwrap_or((0.0, 0.0));
        let mass = d.integral() + lo + hi;
        if !(mass > 0.0) {
            return None;
        }
        Some(Self {
            interior: d
                .density_values()
                .iter()
                .map(|v| (v / mass).sqrt())
                .collect(),
            lower_tail: (lo / mass).sqrt(),
            upper_tail: (hi / mass).sqrt(),
        })
    }

    fn distance(&self, other: &Self, grid: &IntegrationGrid) -> f64 {
        let n = self.interior.len();
        let mut sum = 0.0;
        for j in 0..n {
            let d = self.interior[j] - other.interior[j];
            sum += grid.weight(j) * d * d;
        }
        let dl = self.lower_tail - other.lower_tail;
        let du = self.upper_tail - other.upper_tail;
        sum += dl * dl + du * du;
        sum.max(0.0).sqrt().min(SQRT_2)
    }
}

/// Observed-side state shared by every distance evaluation in a run.
#[derive(Debug, Clone)]
pub struct DistanceContext {
    kind: DistanceKind,
    coupling: Coupling,
    observed_measure: EmpiricalMeasure,
    /// F̂_y(y_(i)) for the sorted observed values.
    observed_ecdf: Vec<f64>,
    hellinger: Option<HellingerState>,
}

impl DistanceContext {
    pub fn new(kind: DistanceKind, observed: &Dataset, options: DistanceOptions) -> Result<Self> {
        kind.validate()?;
        let observed_measure = observed.empirical_measure();
        let observed_ecdf = observed_measure
            .sorted_values()
            .iter()
            .map(|&y| observed_measure.ecdf(y))
            .collect();
        let hellinger = match kind {
            DistanceKind::Hellinger => {
                let bandwidth = match options.bandwidth {
                    Some(h) => h,
                    None => silverman_bandwidth(observed)?,
                };
                let grid = IntegrationGrid::covering(observed, bandwidth, options.grid_points)?;
                let kde = BinnedKde::new(&grid, bandwidth)?;
                let observed_density = kde.smooth(observed.values());
                let observed_root = RootDensity::new(&observed_density)
                    .ok_or_else(|| Error::InvalidDistance("observed density has no mass".into()))?;
                Some(HellingerState {
                    bandwidth,
                    grid,
                    kde,
                    observed_density,
                    observed_root,
                })
            }
            _ => None,
        };
        Ok(Self {
            kind,
            coupling: options.coupling,
            observed_measure,
            observed_ecdf,
            hellinger,
        })
    }

    pub fn kind(&self) -> DistanceKind {
        self.kind
    }

    pub fn observed_measure(&self) -> &EmpiricalMeasure {
        &self.observed_measure
    }

    pub fn bandwidth(&self) -> Option<f64> {
        self.hellinger.as_ref().map(|h| h.bandwidth)
    }

    pub fn grid(&self) -> Option<&IntegrationGrid> {
        self.hellinger.as_ref().map(|h| &h.grid)
    }

    pub fn observed_density(&self) -> Option<&SmoothedDensity> {
        self.hellinger.as_ref().map(|h| &h.observed_density)
    }

    pub fn coupling(&self) -> Coupling {
        self.coupling
    }

    /// CvM discrepancy against an arbitrary CDF, integrated over the observed
    /// empirical measure.
    pub fn cvm_against_cdf<F: Fn(f64) -> f64>(&self, cdf: F) -> f64 {
        let ys = self.observed_measure.sorted_values();
        let sum: f64 = ys
            .iter()
            .zip(&self.observed_ecdf)
            .map(|(&y, &f)| {
                let d = f - cdf(y);
                d * d
            })
            .sum();
        sum / ys.len() as f64
    }

    /// Hellinger distance between the observed smoothed density and another
    /// density on the same grid.
    pub fn hellinger_against(&self, other: &SmoothedDensity) -> Result<f64> {
        let state = self.hellinger.as_ref().ok_or_else(|| {
            Error::InvalidDistance("context was not built for the Hellinger distance".into())
        })?;
        if other.grid() != &state.grid {
            return Err(Error::InvalidGrid("density is not on the context grid".into()));
        }
        let root = match RootDensity::new(other) {
            Some(r) => r,
            None => return Ok(SQRT_2),
        };
        Ok(state.observed_root.distance(&root, &state.grid))
    }
}

/// Order-statistic Wasserstein distance of order `p` between equal-size samples.
pub fn wasserstein_1d(y: &Dataset, z: &Dataset, p: f64) -> Result<f64> {
    DistanceKind::Wasserstein { p }.validate()?;
    if y.len() != z.len() {
        return Err(Error::LengthMismatch {
            left: y.len(),
            right: z.len(),
        });
    }
    Ok(wasserstein_sorted(y.sorted(), z.sorted(), p))
}

/// Wasserstein distance with quantile coupling; `y` has n points, `z` has m.
pub fn wasserstein_1d_quantile_coupled(y: &Dataset, z: &Dataset, p: f64) -> Result<f64> {
    DistanceKind::Wasserstein { p }.validate()?;
    Ok(wasserstein_coupled(y.sorted(), z.sorted(), p))
}

fn wasserstein_sorted(ys: &[f64], zs: &[f64], p: f64) -> f64 {
    let n = ys.len() as f64;
    if p == 1.0 {
        ys.iter().zip(zs).map(|(a, b)| (a - b).abs()).sum::<f64>() / n
    } else if p == 2.0 {
        let s: f64 = ys.iter().zip(zs).map(|(a, b)| (a - b) * (a - b)).sum();
        (s / n).sqrt()
    } else {
        let s: f64 = ys.iter().zip(zs).map(|(a, b)| (a - b).abs().powf(p)).sum();
        (s / n).powf(1.0 / p)
    }
}

fn wasserstein_coupled(ys: &[f64], zs: &[f64], p: f64) -> f64 {
    let n = ys.len();
    let m = zs.len();
    if n == m {
        return wasserstein_sorted(ys, zs, p);
    }
    let s: f64 = ys
        .iter()
        .enumerate()
        .map(|(i, &y)| {
            // 1-based ⌈(i+1)·m/n⌉ → 0-based index
            let k = ((i + 1) * m).div_ceil(n) - 1;
            (y - zs[k]).abs().powf(p)
        })
        .sum();
    (s / n as f64).powf(1.0 / p)
}

/// Mean over the observed points of the squared gap between the observed and
/// simulated ECDFs.
pub fn cvm_distance(ctx: &DistanceContext, z: &Dataset) -> Result<f64> {
    let ys = ctx.observed_measure.sorted_values();
    let zs = z.sorted();
    let m = zs.len() as f64;
    let mut k = 0;
    let mut sum = 0.0;
    for (&y, &f) in ys.iter().zip(&ctx.observed_ecdf) {
        while k < zs.len() && zs[k] <= y {
            k += 1;
        }
        let d = f - k as f64 / m;
        sum += d * d;
    }
    Ok(sum / ys.len() as f64)
}

/// Hellinger distance between the smoothed observed and simulated measures.
///
/// The simulated sample is smoothed with the context's bandwidth on the
/// context's grid. Kernel mass falling outside the grid is kept as two tail
/// cells, so far-away samples still saturate at √2.
pub fn hellinger_distance(ctx: &DistanceContext, z: &Dataset) -> Result<f64> {
    let state = ctx.hellinger.as_ref().ok_or_else(|| {
        Error::InvalidDistance("context was not built for the Hellinger distance".into())
    })?;
    let simulated = state.kde.smooth(z.values());
    Ok(match RootDensity::new(&simulated) {
        Some(root) => state.observed_root.distance(&root, &state.grid),
        None => SQRT_2,
    })
}

/// Hellinger distance between two densities tabulated on the same grid.
pub fn hellinger_between(f: &SmoothedDensity, g: &SmoothedDensity) -> Result<f64> {
    if f.grid() != g.grid() {
        return Err(Error::InvalidGrid("densities live on different grids".into()));
    }
    match (RootDensity::new(f), RootDensity::new(g)) {
        (Some(a), Some(b)) => Ok(a.distance(&b, f.grid())),
        (None, None) => Ok(0.0),
        _ => Ok(SQRT_2),
    }
}

/// Distance between the observed data held by `ctx` and the simulated `z`.
pub fn distance(ctx: &DistanceContext, z: &Dataset) -> Result<f64> {
    match ctx.kind {
        DistanceKind::Hellinger => hellinger_distance(ctx, z),
        DistanceKind::Cvm => cvm_distance(ctx, z),
        DistanceKind::Wasserstein { p } => {
            let ys = ctx.observed_measure.sorted_values();
            match ctx.coupling {
                Coupling::EqualLength if ys.len() != z.len() => Err(Error::LengthMismatch {
                    left: ys.len(),
                    right: z.len(),
                }),
                Coupling::EqualLength => Ok(wasserstein_sorted(ys, z.sorted(), p)),
                Coupling::Quantile => Ok(wasserstein_coupled(ys, z.sorted(), p)),
            }
        }
    }
}
