//! Acceptance suite: one test per criterion. Each test prints the numbers it
//! checked and a `criterion N: PASS|FAIL` line before asserting.
//!
//! c01–c06 run the bundled experiment configs (minutes each on one core);
//! c07–c12 are property checks.

use std::f64::consts::SQRT_2;

use mdabc::abc::{rejection_abc, smc_abc, AbcProblem, Tolerance};
use mdabc::distances::{hellinger_between, hellinger_distance, wasserstein_1d, DistanceOptions};
use mdabc::estimators::{md_point_estimate, posterior_mean_vs_md_gap, summarize, OptimizerConfig};
use mdabc::experiments::{self, AggregateStats};
use mdabc::measures::{kde_smooth, silverman_bandwidth, BinnedKde};
use mdabc::models::simulate_mixture;
use mdabc::rng::{stage, RUN_LEVEL};
use mdabc::*;
use rand::Rng;
use rand_distr::{Distribution, Normal};

fn load(name: &str) -> ExperimentConfig {
    let path = format!("{}/../../configs/{name}", env!("CARGO_MANIFEST_DIR"));
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{path}: {e}"));
    ExperimentConfig::from_json(&text).unwrap()
}

/// Records named checks and reports them together.
struct Verdict {
    criterion: u32,
    failures: Vec<String>,
}

impl Verdict {
    fn new(criterion: u32) -> Self {
        Self {
            criterion,
            failures: Vec::new(),
        }
    }

    fn check(&mut self, what: impl Into<String>, ok: bool) {
        let what = what.into();
        println!("  [{}] {what}", if ok { "ok" } else { "FAIL" });
        if !ok {
            self.failures.push(what);
        }
    }

    fn finish(self) {
        let pass = self.failures.is_empty();
        println!("criterion {}: {}", self.criterion, if pass { "PASS" } else { "FAIL" });
        assert!(pass, "criterion {} failed: {:#?}", self.criterion, self.failures);
    }
}

fn stats<'a>(report: &'a ExperimentReport, label: &str) -> &'a AggregateStats {
    let a = report.aggregate(label).unwrap_or_else(|| panic!("no aggregate for {label}"));
    println!("  {label}: {}/{} replications succeeded", a.n_success, a.n_total);
    a.stats.as_ref().unwrap_or_else(|| panic!("{label}: too few successful replications"))
}

fn fmt(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.3}")).collect();
    format!("({})", parts.join(", "))
}

fn within(v: &[f64], target: &[f64], tol: f64) -> bool {
    v.iter().zip(target).all(|(a, b)| (a - b).abs() <= tol)
}

const MU: usize = 0;
const SIGMA1: usize = 2;

#[test]
fn c01_well_specified_mixture() {
    let report = experiments::run(&load("mixture_table1.json")).unwrap();
    let mut v = Verdict::new(1);
    let h = stats(&report, "hellinger");
    let c = stats(&report, "cvm");
    let w = stats(&report, "wabc");
    for (label, s) in [("hellinger", h), ("cvm", c), ("wabc", w)] {
        println!(
            "  {label}: mean {} std {} rmse {} cov {}",
            fmt(&s.overall_mean),
            fmt(&s.avg_posterior_std),
            fmt(&s.rmse),
            fmt(&s.coverage_pct)
        );
    }
    let h_target = [-1.98, 0.49, 1.01, 1.01];
    let c_target = [-1.96, 0.49, 1.10, 1.11];
    v.check(
        format!("hellinger means {} within 0.20 of {}", fmt(&h.overall_mean), fmt(&h_target)),
        within(&h.overall_mean, &h_target, 0.20),
    );
    v.check(
        format!("cvm means {} within 0.25 of {}", fmt(&c.overall_mean), fmt(&c_target)),
        within(&c.overall_mean, &c_target, 0.25),
    );
    v.check(
        format!("rmse(mu): hellinger {:.3} <= wabc {:.3}", h.rmse[MU], w.rmse[MU]),
        h.rmse[MU] <= w.rmse[MU],
    );
    v.check(
        format!(
            "posterior std(sigma1): hellinger {:.3} <= wabc {:.3}",
            h.avg_posterior_std[SIGMA1], w.avg_posterior_std[SIGMA1]
        ),
        h.avg_posterior_std[SIGMA1] <= w.avg_posterior_std[SIGMA1],
    );
    v.finish();
}

#[test]
fn c02_contaminated_mixture_orderings() {
    let report = experiments::run(&load("mixture_table2_zeta9.json")).unwrap();
    let mut v = Verdict::new(2);
    let h = stats(&report, "hellinger");
    let c = stats(&report, "cvm");
    let w = stats(&report, "wabc");
    for (label, s) in [("hellinger", h), ("cvm", c), ("wabc", w)] {
        println!("  {label}: mean {} rmse {}", fmt(&s.overall_mean), fmt(&s.rmse));
    }
    v.check(
        format!("mean(sigma1): cvm {:.3} < wabc {:.3}", c.overall_mean[SIGMA1], w.overall_mean[SIGMA1]),
        c.overall_mean[SIGMA1] < w.overall_mean[SIGMA1],
    );
    v.check(
        format!("rmse(sigma1): cvm {:.3} < wabc {:.3}", c.rmse[SIGMA1], w.rmse[SIGMA1]),
        c.rmse[SIGMA1] < w.rmse[SIGMA1],
    );
    v.check(
        format!("rmse(mu): hellinger {:.3} < wabc {:.3}", h.rmse[MU], w.rmse[MU]),
        h.rmse[MU] < w.rmse[MU],
    );
    v.finish();
}

/// Per-label posterior means of coordinate `j` across the sweep.
fn sweep_means(report: &ExperimentReport, label: &str, j: usize) -> Vec<(f64, f64)> {
    report
        .sweep_rows()
        .into_iter()
        .filter(|(_, l, _)| *l == label)
        .map(|(z, _, s)| (z, s.mean[j]))
        .collect()
}

fn range(v: &[(f64, f64)]) -> f64 {
    let max = v.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let min = v.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    max - min
}

#[test]
fn c03_contamination_sweep_stability() {
    // Only the two methods being compared are run.
    let mut cfg = load("mixture_fig3_sweep.json");
    cfg.methods.retain(|m| m.label != "hellinger");
    let grid_len = cfg.zeta_grid.as_ref().unwrap().len();
    let report = experiments::run(&cfg).unwrap();
    let mut v = Verdict::new(3);
    let c = sweep_means(&report, "cvm", MU);
    let w = sweep_means(&report, "wabc", MU);
    for ((z, a), (_, b)) in c.iter().zip(&w) {
        println!("  zeta {z:>5.1}: mu cvm {a:.3} wabc {b:.3}");
    }
    v.check(
        format!("every zeta summarised ({} cvm, {} wabc of {grid_len})", c.len(), w.len()),
        c.len() == grid_len && w.len() == grid_len,
    );
    v.check(
        format!("range of mean(mu): cvm {:.3} <= wabc {:.3}", range(&c), range(&w)),
        range(&c) <= range(&w),
    );
    v.finish();
}

#[test]
fn c04_g_and_k() {
    let report = experiments::run(&load("gk_appendix.json")).unwrap();
    let mut v = Verdict::new(4);
    let rep = &report.replications[0];
    for o in &rep.outcomes {
        let Some(s) = &o.summary else {
            v.check(format!("{}: run failed: {:?}", o.label, o.error), false);
            continue;
        };
        println!(
            "  {}: mean {} ci_low {} ci_high {}",
            o.label,
            fmt(&s.mean),
            fmt(&s.ci_low),
            fmt(&s.ci_high)
        );
        v.check(format!("{}: 95% interval contains a = 3", o.label), s.contains(0, 3.0));
        v.check(format!("{}: 95% interval contains b = 1", o.label), s.contains(1, 1.0));
        v.check(
            format!("{}: mean(a) {:.3} within 0.5 of 3", o.label, s.mean[0]),
            (s.mean[0] - 3.0).abs() <= 0.5,
        );
    }
    v.finish();
}

#[test]
fn c05_mg1_queue() {
    let cfg = load("mg1_appendix.json");
    let observed = cfg
        .model
        .simulate_observed(
            &cfg.theta_true,
            &mut StreamAddress::new(cfg.master_seed, 0, RUN_LEVEL, stage::OBSERVED_DATA).stream(),
        )
        .unwrap();
    println!("  min y = {:.4}", observed.min());
    let mut v = Verdict::new(5);
    for (k, method) in cfg.methods.iter().enumerate() {
        if method.label == "wabc" {
            continue;
        }
        let problem = AbcProblem::new(
            &cfg.model,
            method.distance,
            method.m_sim,
            observed.clone(),
            method.options.clone(),
        )
        .unwrap();
        let cloud = smc_abc(&problem, &cfg.sampler, StreamAddress::new(cfg.master_seed, k as u64, 0, 0)).unwrap();
        let s = summarize(&cloud).unwrap();
        println!("  {}: mean {} eps {:.4e}", method.label, fmt(&s.mean.values), cloud.epsilon);
        v.check(
            format!("{}: mean(theta1) {:.3} within 0.5 of 4", method.label, s.mean.values[0]),
            (s.mean.values[0] - 4.0).abs() <= 0.5,
        );
        v.check(
            format!("{}: mean(theta3) {:.4} within 0.05 of 0.15", method.label, s.mean.values[2]),
            (s.mean.values[2] - 0.15).abs() <= 0.05,
        );
        let violations = cloud.alive().filter(|p| p.theta.values[0] > observed.min()).count();
        v.check(
            format!("{}: {violations} accepted particles with theta1 > min y", method.label),
            violations == 0,
        );
    }
    v.finish();
}

#[test]
fn c06_stochastic_volatility_sweep() {
    let mut cfg = load("sv_sweep.json");
    cfg.methods.retain(|m| m.label == "hellinger");
    let report = experiments::run(&cfg).unwrap();
    let mut v = Verdict::new(6);
    let beta = sweep_means(&report, "hellinger", 1);
    for (z, b) in &beta {
        println!("  zeta {z:>4.1}: mean(beta) {b:.3}");
    }
    let grid_len = cfg.zeta_grid.as_ref().unwrap().len();
    v.check(format!("{} of {grid_len} zeta values summarised", beta.len()), beta.len() == grid_len);
    let worst = beta.iter().map(|(_, b)| (b - 0.9).abs()).fold(0.0, f64::max);
    v.check(format!("max |mean(beta) - 0.9| = {worst:.3} <= 0.15"), worst <= 0.15);
    v.finish();
}

/// Smallest `(1/n Σ |y_i − z_π(i)|^p)^(1/p)` over all permutations π.
fn brute_force_wasserstein(y: &[f64], z: &[f64], p: f64) -> f64 {
    fn go(y: &[f64], z: &mut Vec<f64>, k: usize, p: f64, best: &mut f64) {
        if k == z.len() {
            let cost: f64 = y.iter().zip(z.iter()).map(|(a, b)| (a - b).abs().powf(p)).sum();
            *best = best.min(cost);
            return;
        }
        for i in k..z.len() {
            z.swap(k, i);
            go(y, z, k + 1, p, best);
            z.swap(k, i);
        }
    }
    let mut best = f64::INFINITY;
    go(y, &mut z.to_vec(), 0, p, &mut best);
    (best / y.len() as f64).powf(1.0 / p)
}

#[test]
fn c07_wasserstein_matches_permutation_oracle() {
    let mut rng = RngStream::from_seed(7);
    let mut v = Verdict::new(7);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let n = rng.random_range(1..=6);
        let p = [1.0, 1.5, 2.0, 3.0][rng.random_range(0..4)];
        // integer-valued samples make ties common
        let draw = |rng: &mut RngStream| -> f64 {
            if rng.random::<bool>() {
                rng.random_range(-3..=3) as f64
            } else {
                rng.random_range(-5.0..5.0)
            }
        };
        let y: Vec<f64> = (0..n).map(|_| draw(&mut rng)).collect();
        let z: Vec<f64> = (0..n).map(|_| draw(&mut rng)).collect();
        let fast = wasserstein_1d(&Dataset::new(y.clone()).unwrap(), &Dataset::new(z.clone()).unwrap(), p).unwrap();
        let oracle = brute_force_wasserstein(&y, &z, p);
        worst = worst.max((fast - oracle).abs() / oracle.max(1.0));
    }
    v.check(format!("max relative gap over 200 pairs: {worst:.2e} <= 1e-12"), worst <= 1e-12);
    v.finish();
}

/// Root-density L2 distance between N(m1, s1²) and N(m2, s2²).
fn gaussian_hellinger(m1: f64, s1: f64, m2: f64, s2: f64) -> f64 {
    let v = s1 * s1 + s2 * s2;
    let affinity = (2.0 * s1 * s2 / v).sqrt() * (-(m1 - m2).powi(2) / (4.0 * v)).exp();
    (2.0 * (1.0 - affinity)).max(0.0).sqrt()
}

fn gaussian_pdf(m: f64, s: f64) -> impl Fn(f64) -> f64 {
    move |x| (-0.5 * ((x - m) / s).powi(2)).exp() / (s * (2.0 * std::f64::consts::PI).sqrt())
}

#[test]
fn c08_hellinger_against_closed_form() {
    let mut v = Verdict::new(8);
    let pairs = [(0.0, 1.0, 1.0, 1.0), (0.0, 1.0, 0.0, 2.0), (-1.0, 0.5, 2.0, 1.5), (0.0, 1.0, 0.0, 1.0), (0.0, 1.0, 8.0, 1.0)];
    let grid = IntegrationGrid::new(-20.0, 20.0, 4001).unwrap();
    for &(m1, s1, m2, s2) in &pairs {
        let f = SmoothedDensity::tabulate(&grid, gaussian_pdf(m1, s1));
        let g = SmoothedDensity::tabulate(&grid, gaussian_pdf(m2, s2));
        let got = hellinger_between(&f, &g).unwrap();
        let exact = gaussian_hellinger(m1, s1, m2, s2);
        v.check(
            format!("tabulated N({m1},{s1}²) vs N({m2},{s2}²): {got:.5} vs {exact:.5}"),
            (got - exact).abs() <= 1e-2,
        );
    }
    let normal = |m: f64, s: f64, seed: u64| {
        let mut rng = RngStream::from_seed(seed);
        let d = Normal::new(m, s).unwrap();
        Dataset::new((0..10_000).map(|_| d.sample(&mut rng)).collect()).unwrap()
    };
    for (k, &(m1, s1, m2, s2)) in pairs[..4].iter().enumerate() {
        let y = normal(m1, s1, 100 + k as u64);
        let z = normal(m2, s2, 200 + k as u64);
        let ctx = DistanceContext::new(DistanceKind::Hellinger, &y, DistanceOptions::default()).unwrap();
        let got = hellinger_distance(&ctx, &z).unwrap();
        let exact = gaussian_hellinger(m1, s1, m2, s2);
        v.check(
            format!("KDE at n=1e4 N({m1},{s1}²) vs N({m2},{s2}²): {got:.4} vs {exact:.4}"),
            (got - exact).abs() <= 5e-2 && got <= SQRT_2,
        );
    }
    v.finish();
}

#[test]
fn c09_kde_normalisation_and_ecdf_monotonicity() {
    let mut rng = RngStream::from_seed(9);
    let mut v = Verdict::new(9);
    let (mut worst_binned, mut worst_direct, mut ecdf_violations): (f64, f64, usize) = (0.0, 0.0, 0);
    for i in 0..1000 {
        let n = rng.random_range(2..=300);
        let values: Vec<f64> = match i % 3 {
            0 => (0..n).map(|_| Normal::new(0.0, 1.0).unwrap().sample(&mut rng)).collect(),
            1 => (0..n).map(|_| rng.random_range(-50.0..50.0)).collect(),
            _ => (0..n).map(|_| (rng.random_range(0..5) as f64) + 1e-3 * rng.random::<f64>()).collect(),
        };
        let d = Dataset::new(values).unwrap();
        let h = silverman_bandwidth(&d).unwrap();
        let grid = IntegrationGrid::covering(&d, h, 512).unwrap();
        let binned = BinnedKde::new(&grid, h).unwrap().smooth(d.values());
        let direct = kde_smooth(&d, h, &grid).unwrap();
        let total = |s: &SmoothedDensity| s.integral() + s.tail_mass().map_or(0.0, |(a, b)| a + b);
        worst_binned = worst_binned.max((total(&binned) - 1.0).abs());
        worst_direct = worst_direct.max((total(&direct) - 1.0).abs());

        let m = d.empirical_measure();
        let lo = d.min() - 1.0;
        let hi = d.max() + 1.0;
        let mut prev = 0.0;
        for k in 0..=200 {
            let x = lo + (hi - lo) * k as f64 / 200.0;
            let f = m.ecdf(x);
            if f < prev || !(0.0..=1.0).contains(&f) {
                ecdf_violations += 1;
            }
            prev = f;
        }
        if m.ecdf(lo) != 0.0 || m.ecdf(hi) != 1.0 {
            ecdf_violations += 1;
        }
    }
    v.check(format!("binned KDE: max |mass - 1| = {worst_binned:.2e} <= 1e-3"), worst_binned <= 1e-3);
    v.check(format!("direct KDE: max |mass - 1| = {worst_direct:.2e} <= 1e-3"), worst_direct <= 1e-3);
    v.check(format!("{ecdf_violations} ECDF monotonicity violations"), ecdf_violations == 0);
    v.finish();
}

#[test]
fn c10_rejection_at_infinite_tolerance_recovers_prior() {
    let mut v = Verdict::new(10);
    let draws = 10_000;
    let mut mixture = ModelSpec::new(ModelKind::Mixture, 50, 50);
    // the canonicalised prior is a different distribution
    mixture.identify_labels = false;
    let cases = [
        (mixture, None),
        (ModelSpec::new(ModelKind::Gk, 50, 50), None),
        (ModelSpec::new(ModelKind::Sv, 50, 50).with_burn_in(10), None),
        // observations above the θ₁ range keep every prior draw admissible
        (ModelSpec::new(ModelKind::Mg1, 50, 50), Some(Dataset::new(vec![10.0 + 1e-9; 50]).unwrap())),
    ];
    for (seed, (spec, observed)) in cases.into_iter().enumerate() {
        let observed = match observed {
            Some(d) => d,
            None => {
                let theta = spec.prior().sample(&mut RngStream::from_seed(seed as u64));
                spec.simulate_observed(&theta, &mut RngStream::from_seed(1000 + seed as u64)).unwrap()
            }
        };
        let problem = AbcProblem::new(&spec, DistanceKind::Cvm, spec.m_sim, observed, DistanceOptions::default()).unwrap();
        let cloud = rejection_abc(
            &problem,
            Tolerance::Epsilon(f64::INFINITY),
            draws,
            StreamAddress::new(10 + seed as u64, 0, 0, 0),
        )
        .unwrap();
        v.check(
            format!("{}: {} of {draws} draws accepted", spec.name.name(), cloud.alive().count()),
            cloud.alive().count() == draws,
        );
        let w = cloud.weights();
        for (j, (mean, var)) in spec.prior().moments().into_iter().enumerate() {
            let got: f64 = cloud.particles.iter().zip(&w).map(|(p, w)| w * p.theta.values[j]).sum();
            let se = (var / draws as f64).sqrt();
            v.check(
                format!("{} {}: mean {got:.4} vs prior {mean:.4} (3 se = {:.4})", spec.name.name(), cloud.names()[j], 3.0 * se),
                (got - mean).abs() <= 3.0 * se,
            );
        }
    }
    v.finish();
}

#[test]
fn c11_smc_invariants() {
    let mut v = Verdict::new(11);
    let spec = ModelSpec::new(ModelKind::Mixture, 100, 100);
    let sampler = SmcConfig {
        n_particles: 256,
        sim_budget: 6_000,
        ..Default::default()
    };
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
    for seed in 0..5u64 {
        let mut rng = RngStream::from_seed(seed);
        let y = Dataset::new(simulate_mixture(&[-2.0, 0.5, 1.0, 1.0], 100, None, &mut rng).unwrap().values().to_vec()).unwrap();
        let kind = [DistanceKind::Cvm, DistanceKind::Hellinger, DistanceKind::Wasserstein { p: 1.0 }][seed as usize % 3];
        let problem = AbcProblem::new(&spec, kind, 100, y, DistanceOptions::default()).unwrap();
        let address = StreamAddress::new(seed, 0, 0, 0);
        let a = one.install(|| smc_abc(&problem, &sampler, address)).unwrap();
        let b = four.install(|| smc_abc(&problem, &sampler, address)).unwrap();
        let monotone = a.epsilon_trace.windows(2).all(|w| w[1] <= w[0]);
        let mass: f64 = a.weights().iter().sum();
        let in_prior = a.particles.iter().all(|p| problem.prior.log_density(&p.theta.values).is_ok_and(f64::is_finite));
        let identical = a.particles.len() == b.particles.len()
            && a.particles.iter().zip(&b.particles).all(|(p, q)| {
                p.theta.values.iter().zip(&q.theta.values).all(|(x, y)| x.to_bits() == y.to_bits())
                    && p.distance.to_bits() == q.distance.to_bits()
                    && p.log_weight.to_bits() == q.log_weight.to_bits()
            })
            && a.epsilon_trace == b.epsilon_trace
            && a.total_simulations == b.total_simulations;
        v.check(format!("seed {seed} ({}): epsilon trace of {} stages nonincreasing", kind.label(), a.stages.len()), monotone);
        v.check(format!("seed {seed}: weights sum to 1 (off by {:.1e})", (mass - 1.0).abs()), (mass - 1.0).abs() <= 1e-12);
        v.check(
            format!("seed {seed}: {} simulations within budget {} + N", a.total_simulations, sampler.sim_budget),
            a.total_simulations <= sampler.sim_budget + sampler.n_particles as u64,
        );
        v.check(format!("seed {seed}: every particle inside the prior support"), in_prior);
        v.check(format!("seed {seed}: 1 and 4 threads give bit-identical clouds"), identical);
    }
    v.finish();
}

#[test]
fn c12_posterior_mean_tracks_minimum_distance_estimate() {
    let mut v = Verdict::new(12);
    let spec = ModelSpec::new(ModelKind::Mixture, 500, 1000);
    let sampler = SmcConfig {
        sim_budget: 400_000,
        ..Default::default()
    };
    let mut close = 0;
    for seed in 0..10u64 {
        let y = spec
            .simulate_observed(&[-2.0, 0.5, 1.0, 1.0], &mut StreamAddress::new(seed, 0, RUN_LEVEL, stage::OBSERVED_DATA).stream())
            .unwrap();
        let problem = AbcProblem::new(&spec, DistanceKind::Hellinger, 1000, y, DistanceOptions::default()).unwrap();
        let md = md_point_estimate(
            ModelKind::Mixture,
            &problem.prior,
            &problem.context,
            &OptimizerConfig::default(),
            StreamAddress::new(seed, 1, 0, 0),
        )
        .unwrap();
        let cloud = smc_abc(&problem, &sampler, StreamAddress::new(seed, 2, 0, 0)).unwrap();
        let gap = posterior_mean_vs_md_gap(&cloud, &md).unwrap();
        let worst = gap.iter().copied().fold(0.0, f64::max);
        println!(
            "  seed {seed}: md {} posterior mean {} max gap {worst:.3}",
            fmt(&md.theta_hat.values),
            fmt(&summarize(&cloud).unwrap().mean.values)
        );
        close += usize::from(worst <= 0.15);
    }
    v.check(format!("{close} of 10 seeds with max gap <= 0.15 (need 8)"), close >= 8);
    v.finish();
}
