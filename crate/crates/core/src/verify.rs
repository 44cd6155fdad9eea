//! Self-contained check suite for the clipping, rollback and trust-region
//! results, run in double precision.
//!
//! [`Mutation`] swaps in a deliberately broken objective so that the suite
//! can demonstrate that it detects the breakage.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{finite_diff_check, Tape, Var, DEFAULT_STEP};
use crate::distributions::{CategoricalDist, GaussianDist, PolicyDist};
use crate::envs::random_mdp;
use crate::error::Result;
use crate::objectives::{
    batch_objective, sample_objective, DistVars, ObjectiveConfig, Sample, SampleBatch, Surrogate, Variant,
};
use crate::oracle::{
    categorical_kl_witness, exact_eval, gaussian_kl_witness, lower_bound_m, monotonic_improvement_check,
    outward_push_witness, penalty_constant, random_policy, CheckStatus, MonotonicOptions, TabularBatchProblem,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum Mutation {
    #[default]
    None,
    /// The rollback branch slopes up with `+α` instead of down.
    RollbackSlope,
    /// The minimum with the unclipped term is dropped.
    NoMinimum,
}

/// Objective under test: the library objective, possibly mutated.
#[derive(Debug, Clone, Copy)]
pub struct CheckedObjective {
    pub config: ObjectiveConfig<f64>,
    pub mutation: Mutation,
}

impl CheckedObjective {
    pub fn new(variant: Variant, mutation: Mutation) -> Self {
        Self {
            config: ObjectiveConfig::for_variant(variant),
            mutation,
        }
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.config.alpha = alpha;
        self
    }
}

impl Surrogate<f64> for CheckedObjective {
    fn uses_kl(&self) -> bool {
        self.config.variant.uses_kl()
    }

    fn per_sample<'t>(&self, r: Var<'t, f64>, advantage: f64, kl: Var<'t, f64>, alpha_live: f64) -> Var<'t, f64> {
        let eps = self.config.epsilon;
        let alpha = self.config.alpha;
        let clipped = || r.clip_range(1.0 - eps, 1.0 + eps);
        let rollback = |slope: f64| {
            let v = r.value();
            if v <= 1.0 - eps {
                r.scale(slope) + (1.0 - slope) * (1.0 - eps)
            } else if v >= 1.0 + eps {
                r.scale(slope) + (1.0 - slope) * (1.0 + eps)
            } else {
                r
            }
        };
        match (self.config.variant, self.mutation) {
            (Variant::Rb, Mutation::RollbackSlope) => (r * advantage).min2(rollback(alpha) * advantage),
            (Variant::Rb, Mutation::NoMinimum) => rollback(-alpha) * advantage,
            (Variant::Clip, Mutation::NoMinimum) => clipped() * advantage,
            _ => sample_objective(&self.config, r, advantage, kl, alpha_live),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOptions {
    pub mutation: Mutation,
    pub seed: u64,
    pub gradient_points: usize,
    pub bound_instances: usize,
    pub monotonic_instances: usize,
    /// Largest number of inconclusive monotonic instances still reported as a pass.
    pub monotonic_max_inconclusive: usize,
    pub monotonic: MonotonicOptions,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            mutation: Mutation::None,
            seed: 0,
            gradient_points: 100,
            bound_instances: 1000,
            monotonic_instances: 50,
            monotonic_max_inconclusive: 5,
            monotonic: MonotonicOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub status: CheckStatus,
    pub detail: String,
}

impl CheckResult {
    fn new(name: &'static str, pass: bool, detail: String) -> Self {
        Self {
            name,
            status: if pass { CheckStatus::Pass } else { CheckStatus::Fail },
            detail,
        }
    }

    fn from_result(name: &'static str, outcome: Result<(bool, String)>) -> Self {
        match outcome {
            Ok((pass, detail)) => Self::new(name, pass, detail),
            Err(e) => Self::new(name, false, format!("error: {e}")),
        }
    }
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:<32} {:<12} {}", self.name, self.status.label(), self.detail)
    }
}

/// Runs every check in order.
pub fn run_checks(options: &VerifyOptions) -> Vec<CheckResult> {
    let m = options.mutation;
    vec![
        CheckResult::from_result(
            "gradient_finite_difference",
            check_gradients(m, options.gradient_points, options.seed),
        ),
        CheckResult::from_result("rollback_slope", check_rollback_slope(m, options.seed)),
        CheckResult::from_result("clip_lower_bound", check_clip_lower_bound(m, options.seed)),
        CheckResult::from_result(
            "eq2_lower_bound",
            check_performance_bound(options.bound_instances, options.seed),
        ),
        CheckResult::from_result("theorem_2_outward_push", check_outward_push(m)),
        CheckResult::from_result("theorem_3_categorical", check_categorical_witness()),
        CheckResult::from_result("theorem_3_gaussian", check_gaussian_witness()),
        CheckResult::from_result("theorem_4_rollback_step", check_rollback_step(m)),
        CheckResult::from_result("theorem_5_containment", check_containment(m, options.seed)),
        check_monotonic(options),
    ]
}

/// Report text, one line per check.
pub fn render_report(results: &[CheckResult]) -> String {
    results.iter().map(|r| format!("{r}\n")).collect()
}

pub fn any_failed(results: &[CheckResult]) -> bool {
    results.iter().any(|r| r.status == CheckStatus::Fail)
}

fn random_dist<R: Rng>(gaussian: bool, rng: &mut R) -> PolicyDist<f64> {
    if gaussian {
        let mean = (0..2).map(|_| rng.random_range(-0.5..0.5)).collect();
        let log_std = (0..2).map(|_| rng.random_range(-0.5..0.2)).collect();
        PolicyDist::Gaussian(GaussianDist::new(mean, log_std).expect("finite parameters"))
    } else {
        let logits = (0..3).map(|_| rng.random_range(-0.5..0.5)).collect();
        PolicyDist::Categorical(CategoricalDist::new(logits).expect("finite logits"))
    }
}

fn head_params(dist: &PolicyDist<f64>) -> Vec<f64> {
    match dist {
        PolicyDist::Categorical(c) => c.logits().to_vec(),
        PolicyDist::Gaussian(g) => g.mean().iter().chain(g.log_std()).copied().collect(),
    }
}

fn head_from<'t>(template: &PolicyDist<f64>, vars: &[Var<'t, f64>]) -> DistVars<'t, f64> {
    match template {
        PolicyDist::Categorical(_) => DistVars::Categorical { logits: vars.to_vec() },
        PolicyDist::Gaussian(g) => DistVars::Gaussian {
            mean: vars[..g.dim()].to_vec(),
            log_std: vars[g.dim()..].to_vec(),
        },
    }
}

fn dist_from(template: &PolicyDist<f64>, params: &[f64]) -> Result<PolicyDist<f64>> {
    let tape = Tape::new();
    head_from(template, &tape.vars(params)).to_dist()
}

/// True when a sample sits within `margin` of a branch switch of `config`.
fn near_kink(config: &ObjectiveConfig<f64>, sample: &Sample<f64>, new: &PolicyDist<f64>, margin: f64) -> Result<bool> {
    let r = (new.log_prob(&sample.action)?.value() - sample.old_log_prob).exp();
    let kl = sample.old_dist.kl(new)?;
    Ok((r - (1.0 - config.epsilon)).abs() < margin
        || (r - (1.0 + config.epsilon)).abs() < margin
        || (r - 1.0).abs() < margin
        || (kl - config.delta).abs() < margin)
}

/// Central differences against the tape gradient of two-sample batch
/// objectives, alternating categorical and Gaussian heads.
pub fn check_gradients(mutation: Mutation, points_per_variant: usize, seed: u64) -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut checked = 0usize;
    for variant in Variant::ALL {
        let objective = CheckedObjective::new(variant, mutation);
        let mut done = 0;
        while done < points_per_variant {
            let gaussian = done % 2 == 1;
            let old = random_dist(gaussian, &mut rng);
            let samples = (0..2)
                .map(|_| {
                    let action = old.sample(&mut rng);
                    Sample::from_dist(vec![0.0], action, rng.random_range(-2.0..2.0), 0.0, old.clone())
                })
                .collect::<Result<Vec<_>>>()?;
            let batch = SampleBatch::new(samples)?;
            let news: Vec<PolicyDist<f64>> = (0..2)
                .map(|_| {
                    let base = head_params(&old);
                    let shifted: Vec<f64> = base.iter().map(|&p| p + rng.random_range(-0.4..0.4)).collect();
                    dist_from(&old, &shifted)
                })
                .collect::<Result<_>>()?;
            let mut kinked = false;
            for (s, n) in batch.samples().iter().zip(&news) {
                kinked |= near_kink(&objective.config, s, n, 1e-3)?;
            }
            if kinked {
                continue;
            }
            let width = head_params(&old).len();
            let point: Vec<f64> = news.iter().flat_map(head_params).collect();
            let check = finite_diff_check(
                |_, x| {
                    let heads: Vec<_> = x.chunks(width).map(|c| head_from(&old, c)).collect();
                    batch_objective(&objective, &batch, &heads, 0.01, 1.5)
                },
                &point,
                DEFAULT_STEP,
            )?;
            worst = worst.max(check.max_rel_error);
            done += 1;
            checked += 1;
        }
    }
    Ok((worst <= 1e-4, format!("points={checked} max_rel_error={worst:.3e}")))
}

/// `d/dr` of the rollback objective equals `−α·A` outside the range.
pub fn check_rollback_slope(mutation: Mutation, seed: u64) -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let objective = CheckedObjective::new(Variant::Rb, mutation);
    let (eps, alpha) = (objective.config.epsilon, objective.config.alpha);
    let mut worst = 0.0f64;
    for k in 0..200 {
        let (r, a) = if k % 2 == 0 {
            (rng.random_range(1.0 + eps + 1e-3..3.0), rng.random_range(0.1..2.0))
        } else {
            (rng.random_range(0.05..1.0 - eps - 1e-3), -rng.random_range(0.1..2.0))
        };
        let tape = Tape::new();
        let rv = tape.var(r);
        let y = objective.per_sample(rv, a, tape.constant(0.0), 1.0);
        let slope = tape.backward(y)?.wrt(rv);
        worst = worst.max((slope + alpha * a).abs());
    }
    Ok((
        worst <= 1e-12,
        format!("alpha={alpha} max|dL/dr + alpha*A|={worst:.3e}"),
    ))
}

/// The clipped and rollback objectives never exceed `r·A`.
pub fn check_clip_lower_bound(mutation: Mutation, seed: u64) -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xc11b);
    let mut worst = f64::NEG_INFINITY;
    for variant in [Variant::Clip, Variant::Rb] {
        let objective = CheckedObjective::new(variant, mutation);
        for _ in 0..2000 {
            let r = rng.random_range(0.05..3.0);
            let a = rng.random_range(-2.0..2.0);
            let tape = Tape::new();
            let y = objective.per_sample(tape.var(r), a, tape.constant(0.0), 1.0).value();
            worst = worst.max(y - r * a);
        }
    }
    Ok((worst <= 1e-12, format!("max(L - r*A)={worst:.3e}")))
}

/// `η(π) ≥ M(π)` and `M(π_old) = η(π_old)` on random MDPs with 2 to 5 states.
pub fn check_performance_bound(instances: usize, seed: u64) -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xb0d);
    let (mut min_slack, mut max_touch) = (f64::INFINITY, 0.0f64);
    for _ in 0..instances {
        let n = rng.random_range(2..=5);
        let k = rng.random_range(2..=3);
        let gamma = rng.random_range(0.5..0.95);
        let mdp = random_mdp::<f64, _>(n, k, gamma, &mut rng)?;
        let old = random_policy(n, k, &mut rng);
        let new = random_policy(n, k, &mut rng);
        let eta_new = exact_eval(&mdp, &new)?.eta;
        let eta_old = exact_eval(&mdp, &old)?.eta;
        min_slack = min_slack.min(eta_new - lower_bound_m(&mdp, &old, &new)?.m);
        max_touch = max_touch.max((lower_bound_m(&mdp, &old, &old)?.m - eta_old).abs());
    }
    Ok((
        min_slack >= -1e-9 && max_touch <= 1e-9,
        format!("instances={instances} min(eta-M)={min_slack:.3e} max|M(old)-eta(old)|={max_touch:.3e}"),
    ))
}

pub fn check_outward_push(mutation: Mutation) -> Result<(bool, String)> {
    let w = outward_push_witness(0.2f64)?;
    let clip = CheckedObjective::new(Variant::Clip, mutation);
    let before = (w.ratio(0, w.theta0)? - 1.0f64).abs();
    let after = w.distance_after_step(&clip, w.beta_bar / 2.0)?;
    Ok((
        w.condition > 0.0 && after > before,
        format!("condition={:.6e} |r-1|: {before:.12} -> {after:.12}", w.condition),
    ))
}

pub fn check_categorical_witness() -> Result<(bool, String)> {
    let w = categorical_kl_witness(&[1.0f64 / 3.0; 3], 0, 0.2, 10.0)?;
    Ok((
        (w.ratio - 1.0f64).abs() <= 0.2 && w.kl > 10.0,
        format!("ratio={} kl={:.4}", w.ratio, w.kl),
    ))
}

pub fn check_gaussian_witness() -> Result<(bool, String)> {
    let w = gaussian_kl_witness(&GaussianDist::<f64>::scalar(0.0, 1.0)?, 0.0, 0.2, 10.0)?;
    Ok((
        (w.ratio - 1.0f64).abs() <= 0.2 && w.kl > 10.0,
        format!("ratio={:.12} kl={:.4} sigma={:.3e}", w.ratio, w.kl, w.dist.std()[0]),
    ))
}

pub fn check_rollback_step(mutation: Mutation) -> Result<(bool, String)> {
    let w = outward_push_witness(0.2f64)?;
    let beta = w.beta_bar / 2.0;
    let clip = CheckedObjective::new(Variant::Clip, mutation);
    let rb = CheckedObjective::new(Variant::Rb, mutation);
    let d_clip = w.distance_after_step(&clip, beta)?;
    let d_rb = w.distance_after_step(&rb, beta)?;
    Ok((
        d_rb < d_clip,
        format!("beta={beta:.4} |r-1| rb={d_rb:.12} clip={d_clip:.12}"),
    ))
}

/// Rollback with a large coefficient keeps every ratio near the range, while
/// the plain clipped objective lets some escape.
pub fn check_containment(mutation: Mutation, seed: u64) -> Result<(bool, String)> {
    let rb = CheckedObjective::new(Variant::Rb, mutation).with_alpha(1e3);
    let clip = CheckedObjective::new(Variant::Clip, mutation);
    let eps = rb.config.epsilon;
    let mut problems = vec![TabularBatchProblem::<f64>::two_action()];
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xc0de);
    for _ in 0..10 {
        problems.push(TabularBatchProblem::random(3, 3, &mut rng)?);
    }
    let mut rb_worst = 0.0f64;
    for p in &problems {
        let out = p.maximize(&rb, 20_000)?;
        if !out.max_ratio_deviation().is_finite() {
            return Ok((false, "rollback ascent diverged".into()));
        }
        rb_worst = rb_worst.max(out.max_ratio_deviation());
    }
    let clip_dev = problems[0].maximize(&clip, 20_000)?.max_ratio_deviation();
    Ok((
        rb_worst <= eps + 1e-3 && clip_dev > eps,
        format!("max|r-1| rb(alpha=1e3)={rb_worst:.6} clip={clip_dev:.6} eps={eps}"),
    ))
}

/// Exact-oracle monotonic improvement on random 4-state, 3-action MDPs with
/// `α = C` and `δ = 1e-3`.
pub fn check_monotonic(options: &VerifyOptions) -> CheckResult {
    let name = "theorem_6_monotonic";
    let run = || -> Result<(usize, usize, f64)> {
        let mut rng = ChaCha8Rng::seed_from_u64(options.seed ^ 0x6);
        let (mut violations, mut inconclusive, mut min_gain) = (0, 0, f64::INFINITY);
        for i in 0..options.monotonic_instances {
            let mdp = random_mdp::<f64, _>(4, 3, 0.9, &mut rng)?;
            let old = random_policy(4, 3, &mut rng);
            let c = penalty_constant(&mdp, &exact_eval(&mdp, &old)?);
            let opts = MonotonicOptions {
                seed: options.monotonic.seed.wrapping_add(i as u64),
                ..options.monotonic
            };
            let out = monotonic_improvement_check(&mdp, &old, 1e-3, c, &opts)?;
            match out.status {
                CheckStatus::Fail => violations += 1,
                CheckStatus::Inconclusive => inconclusive += 1,
                CheckStatus::Pass => min_gain = min_gain.min(out.eta_new - out.eta_old),
            }
        }
        Ok((violations, inconclusive, min_gain))
    };
    match run() {
        Ok((violations, inconclusive, min_gain)) => {
            let status = if violations > 0 {
                CheckStatus::Fail
            } else if inconclusive > options.monotonic_max_inconclusive {
                CheckStatus::Inconclusive
            } else {
                CheckStatus::Pass
            };
            CheckResult {
                name,
                status,
                detail: format!(
                    "instances={} violations={violations} inconclusive={inconclusive} min(eta_new-eta_old)={min_gain:.3e}",
                    options.monotonic_instances
                ),
            }
        }
        Err(e) => CheckResult::new(name, false, format!("error: {e}")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick(mutation: Mutation) -> VerifyOptions {
        VerifyOptions {
            mutation,
            gradient_points: 10,
            bound_instances: 50,
            monotonic_instances: 3,
            monotonic: MonotonicOptions {
                restarts: 2,
                iterations: 500,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    #[test]
    fn clean_suite_passes() {
        let results = run_checks(&quick(Mutation::None));
        for r in &results {
            assert_eq!(r.status, CheckStatus::Pass, "{r}");
        }
        assert!(render_report(&results)
            .lines()
            .any(|l| l.starts_with("theorem_6_monotonic") && l.contains("PASS")));
    }

    #[test]
    fn mutated_rollback_slope_is_caught() {
        let results = run_checks(&quick(Mutation::RollbackSlope));
        let failed: Vec<_> = results
            .iter()
            .filter(|r| r.status == CheckStatus::Fail)
            .map(|r| r.name)
            .collect();
        assert!(failed.contains(&"theorem_4_rollback_step"), "{failed:?}");
        assert!(failed.contains(&"rollback_slope"), "{failed:?}");
    }

    #[test]
    fn removed_minimum_is_caught() {
        let results = run_checks(&quick(Mutation::NoMinimum));
        let failed: Vec<_> = results
            .iter()
            .filter(|r| r.status == CheckStatus::Fail)
            .map(|r| r.name)
            .collect();
        assert!(failed.contains(&"clip_lower_bound"), "{failed:?}");
        assert!(any_failed(&results));
    }

    #[test]
    fn unmutated_checked_objective_is_the_library_objective() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for variant in Variant::ALL {
            let checked = CheckedObjective::new(variant, Mutation::None);
            for _ in 0..200 {
                let (r, a, kl) = (
                    rng.random_range(0.1..2.5),
                    rng.random_range(-2.0..2.0),
                    rng.random_range(0.0..0.1),
                );
                let tape = Tape::new();
                let x = checked.per_sample(tape.var(r), a, tape.var(kl), 0.7).value();
                let y = sample_objective(&checked.config, tape.var(r), a, tape.var(kl), 0.7).value();
                assert_eq!(x, y);
            }
        }
    }
}
