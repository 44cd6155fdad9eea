use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::exact::{check_policy, exact_eval, ExactEval};
use crate::distributions::kl_categorical;
use crate::envs::TabularMdp;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckStatus {
    Pass,
    Fail,
    Inconclusive,
}

impl CheckStatus {
    pub fn label(self) -> &'static str {
        match self {
            CheckStatus::Pass => "PASS",
            CheckStatus::Fail => "FAIL",
            CheckStatus::Inconclusive => "INCONCLUSIVE",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonotonicOptions {
    pub restarts: usize,
    pub iterations: usize,
    pub seed: u64,
    /// Allowed shortfall `η_old − η_new`.
    pub tolerance: f64,
}

impl Default for MonotonicOptions {
    fn default() -> Self {
        Self {
            restarts: 16,
            iterations: 10_000,
            seed: 0,
            tolerance: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonotonicOutcome<T> {
    pub new_policy: Vec<Vec<T>>,
    pub eta_old: T,
    pub eta_new: T,
    /// Best objective value found.
    pub objective: T,
    /// Gap between the best and second-best restart, or zero when the exact
    /// trust-region optimum was not beaten.
    pub restart_gap: T,
    pub status: CheckStatus,
}

/// Smallest probability the optimizer may assign.
const PROB_FLOOR: f64 = 1e-10;

/// Max-KL trust-region objective over a tabular policy, with expectations under
/// the old policy's discounted state distribution:
///
/// `Σ_{s,a} ρ(s) π_old(a|s) [r·A − α·K]` on samples with `K ≥ δ` and
/// `r·A ≥ A`, and `[r·A − α·δ]` on the others, where `K = max_s KL_s`.
struct MaxKlObjective<'a, T> {
    old_policy: &'a [Vec<T>],
    old_eval: &'a ExactEval<T>,
    delta: T,
    alpha: T,
}

impl<T: Scalar> MaxKlObjective<'_, T> {
    fn value_and_grad(&self, policy: &[Vec<T>]) -> Result<(T, Vec<Vec<T>>)> {
        let mut worst_state = 0;
        let mut k = T::zero();
        for (s, (o, n)) in self.old_policy.iter().zip(policy).enumerate() {
            let kl = kl_categorical(o, n)?;
            if kl > k || s == 0 {
                k = kl;
                worst_state = s;
            }
        }
        let outside = k >= self.delta;
        let mut value = T::zero();
        let mut triggered_mass = T::zero();
        let mut grad = vec![Vec::new(); policy.len()];
        for s in 0..policy.len() {
            let rho = self.old_eval.state_dist[s];
            for (a, (&p, &p_old)) in policy[s].iter().zip(&self.old_policy[s]).enumerate() {
                let adv = self.old_eval.advantages[s][a];
                let w = rho * p_old;
                grad[s].push(rho * adv);
                if w == T::zero() {
                    continue;
                }
                let r = p / p_old;
                let gain = r * adv;
                if outside && gain >= adv {
                    triggered_mass += w;
                    value += w * (gain - self.alpha * k);
                } else {
                    value += w * (gain - self.alpha * self.delta);
                }
            }
        }
        if outside && triggered_mass > T::zero() {
            for (a, g) in grad[worst_state].iter_mut().enumerate() {
                let p_old = self.old_policy[worst_state][a];
                let p = policy[worst_state][a];
                if p_old > T::zero() {
                    *g += self.alpha * triggered_mass * p_old / p;
                }
            }
        }
        Ok((value, grad))
    }
}

/// Euclidean projection of `x` onto `{p : p ≥ floor, Σ p = 1}`.
fn project_simplex<T: Scalar>(x: &mut [T], floor: T) {
    let n = x.len();
    let budget = T::one() - floor * T::from_usize_lossy(n);
    let mut sorted: Vec<T> = x.iter().map(|&v| v - floor).collect();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    let mut cumulative = T::zero();
    let mut shift = T::zero();
    for (i, &v) in sorted.iter().enumerate() {
        cumulative += v;
        let candidate = (cumulative - budget) / T::from_usize_lossy(i + 1);
        if v - candidate > T::zero() {
            shift = candidate;
        }
    }
    for v in x.iter_mut() {
        *v = (*v - floor - shift).max(T::zero()) + floor;
    }
}

/// Policy table whose rows are normalized exponential draws, so every
/// probability is strictly positive.
pub fn random_policy<T: Scalar, R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Vec<Vec<T>> {
    (0..n)
        .map(|_| {
            let raw: Vec<f64> = (0..k).map(|_| -rng.random_range(1e-6f64..1.0).ln()).collect();
            let total: f64 = raw.iter().sum();
            raw.iter().map(|&x| T::lit(x / total)).collect()
        })
        .collect()
}

/// Maximizes `Σ_a π(a) A(a)` subject to `KL(p_old, π) ≤ δ` for one state.
///
/// The maximizer has the form `π(a) ∝ p_old(a) / (ν − A(a))` with `ν` above
/// the largest advantage, chosen by bisection so that the KL equals `δ`.
fn trust_region_row<T: Scalar>(old: &[T], adv: &[T], delta: T) -> Result<Vec<T>> {
    let top = old
        .iter()
        .zip(adv)
        .filter(|(&p, _)| p > T::zero())
        .fold(T::neg_infinity(), |m, (_, &a)| m.max(a));
    let spread = old
        .iter()
        .zip(adv)
        .filter(|(&p, _)| p > T::zero())
        .fold(T::zero(), |m, (_, &a)| m.max(top - a));
    if old.iter().any(|&p| p == T::zero()) || !(spread > T::lit(1e-300)) {
        return Ok(old.to_vec());
    }
    let row_at = |t: T| -> Vec<T> {
        let raw: Vec<T> = old.iter().zip(adv).map(|(&p, &a)| p / (t + top - a)).collect();
        let total: T = raw.iter().copied().sum();
        raw.iter().map(|&x| x / total).collect()
    };
    let kl_at = |t: T| kl_categorical(old, &row_at(t));
    let (mut lo, mut hi) = (spread, spread);
    while kl_at(hi)? > delta {
        hi = hi + hi;
    }
    while kl_at(lo)? < delta && lo > T::lit(1e-300) {
        lo = lo / T::lit(2.0);
    }
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if mid <= lo || mid >= hi {
            break;
        }
        if kl_at(mid)? > delta {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(row_at(hi))
}

/// Projected (sub)gradient ascent with normalized steps `η₀/√k`, keeping the
/// best iterate.
fn ascend<T: Scalar>(
    objective: &MaxKlObjective<'_, T>,
    start: Vec<Vec<T>>,
    iterations: usize,
) -> Result<(T, Vec<Vec<T>>)> {
    let floor = T::lit(PROB_FLOOR);
    let mut policy = start;
    let (mut best_value, mut grad) = objective.value_and_grad(&policy)?;
    let mut best = policy.clone();
    let base = T::lit(0.05);
    for it in 1..=iterations {
        let norm: T = grad.iter().flatten().map(|&g| g * g).sum::<T>().sqrt();
        if !(norm > T::zero()) {
            break;
        }
        let step = base / T::from_usize_lossy(it).sqrt() / norm;
        for (row, g) in policy.iter_mut().zip(&grad) {
            for (p, &d) in row.iter_mut().zip(g) {
                *p += step * d;
            }
            project_simplex(row, floor);
        }
        let (value, g) = objective.value_and_grad(&policy)?;
        if value > best_value {
            best_value = value;
            best = policy.clone();
        }
        grad = g;
    }
    Ok((best_value, best))
}

/// Maximizes the max-KL objective with `δ` and `α` over per-state
/// categorical policies, then compares exact performances.
///
/// Inside the trust region the objective is linear in the policy, so its
/// maximizer there is computed exactly state by state. Points outside the
/// region are searched by multi-start ascent. The run is inconclusive when an
/// outside point beats the exact inside optimum and the two best restarts
/// disagree by more than `1e-6 · max(1, |J|)`.
pub fn monotonic_improvement_check<T: Scalar>(
    mdp: &TabularMdp<T>,
    old_policy: &[Vec<T>],
    delta: T,
    alpha: T,
    options: &MonotonicOptions,
) -> Result<MonotonicOutcome<T>> {
    check_policy(mdp, old_policy)?;
    if !(delta > T::zero()) || !(alpha > T::zero()) {
        return Err(Error::invalid_argument("delta and alpha must be positive"));
    }
    let old_eval = exact_eval(mdp, old_policy)?;
    let objective = MaxKlObjective {
        old_policy,
        old_eval: &old_eval,
        delta,
        alpha,
    };
    let inside: Vec<Vec<T>> = old_policy
        .iter()
        .zip(&old_eval.advantages)
        .map(|(row, adv)| trust_region_row(row, adv, delta))
        .collect::<Result<_>>()?;
    let inside_value = objective.value_and_grad(&inside)?.0;

    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut results = vec![
        ascend(&objective, inside.clone(), options.iterations)?,
        ascend(&objective, old_policy.to_vec(), options.iterations)?,
    ];
    for _ in 0..options.restarts {
        let start = random_policy(mdp.n_states(), mdp.n_actions(), &mut rng);
        results.push(ascend(&objective, start, options.iterations)?);
    }
    results.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(std::cmp::Ordering::Equal));
    let tol = T::lit(1e-6) * T::one().max(results[0].0.abs());
    let (best_value, best_policy, restart_gap) = if results[0].0 <= inside_value + tol {
        (inside_value, inside, T::zero())
    } else {
        let gap = results.get(1).map_or(T::zero(), |r| results[0].0 - r.0);
        (results[0].0, results[0].1.clone(), gap)
    };

    let eta_new = exact_eval(mdp, &best_policy)?.eta;
    let eta_old = old_eval.eta;
    let status = if restart_gap > tol {
        CheckStatus::Inconclusive
    } else if eta_new >= eta_old - T::lit(options.tolerance) {
        CheckStatus::Pass
    } else {
        CheckStatus::Fail
    };
    Ok(MonotonicOutcome {
        new_policy: best_policy,
        eta_old,
        eta_new,
        objective: best_value,
        restart_gap,
        status,
    })
}
