use crate::distributions::kl_categorical;
use crate::envs::TabularMdp;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Tolerance on row sums of policy tables.
pub const POLICY_TOLERANCE: f64 = 1e-9;

/// Dense square solve by Gaussian elimination with partial pivoting.
pub fn solve_linear<T: Scalar>(mut a: Vec<Vec<T>>, mut b: Vec<T>) -> Result<Vec<T>> {
    let n = b.len();
    if a.len() != n || a.iter().any(|row| row.len() != n) {
        return Err(Error::invalid_argument("linear system is not square"));
    }
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| {
                a[i][col]
                    .abs()
                    .partial_cmp(&a[j][col].abs())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
            .unwrap_or(col);
        if !(a[pivot][col].abs() > T::lit(1e-300)) {
            return Err(Error::Internal(format!("singular linear system at column {col}")));
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            if factor == T::zero() {
                continue;
            }
            for k in col..n {
                let v = a[col][k];
                a[row][k] -= factor * v;
            }
            let v = b[col];
            b[row] -= factor * v;
        }
    }
    let mut x = vec![T::zero(); n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in row + 1..n {
            acc -= a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
    }
    Ok(x)
}

/// Exact quantities of one policy on a tabular MDP.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactEval<T> {
    pub values: Vec<T>,
    pub action_values: Vec<Vec<T>>,
    pub advantages: Vec<Vec<T>>,
    /// `(1 − γ) Σ_t γ^{t−1} Pr(s_t = s)`.
    pub state_dist: Vec<T>,
    /// `Σ_s ρ(s) Σ_a π(a|s) c(s, a)`.
    pub eta: T,
}

pub fn check_policy<T: Scalar>(mdp: &TabularMdp<T>, policy: &[Vec<T>]) -> Result<()> {
    if policy.len() != mdp.n_states() {
        return Err(Error::invalid_argument(format!(
            "policy has {} rows for {} states",
            policy.len(),
            mdp.n_states()
        )));
    }
    for (s, row) in policy.iter().enumerate() {
        let total: T = row.iter().copied().sum();
        let ok = row.len() == mdp.n_actions()
            && row.iter().all(|&p| p >= T::zero() && p.is_finite())
            && (total - T::one()).abs() <= T::lit(POLICY_TOLERANCE);
        if !ok {
            return Err(Error::invalid_argument(format!(
                "policy row {s} is not a distribution over actions"
            )));
        }
    }
    Ok(())
}

/// State-to-state transition matrix under `policy`.
fn policy_transition<T: Scalar>(mdp: &TabularMdp<T>, policy: &[Vec<T>]) -> Vec<Vec<T>> {
    let n = mdp.n_states();
    let mut p = vec![vec![T::zero(); n]; n];
    for s in 0..n {
        for a in 0..mdp.n_actions() {
            let w = policy[s][a];
            if w == T::zero() {
                continue;
            }
            for (dst, &t) in p[s].iter_mut().zip(mdp.transition(s, a)) {
                *dst += w * t;
            }
        }
    }
    p
}

fn policy_reward<T: Scalar>(mdp: &TabularMdp<T>, policy: &[Vec<T>]) -> Vec<T> {
    (0..mdp.n_states())
        .map(|s| (0..mdp.n_actions()).map(|a| policy[s][a] * mdp.reward(s, a)).sum())
        .collect()
}

pub fn exact_eval<T: Scalar>(mdp: &TabularMdp<T>, policy: &[Vec<T>]) -> Result<ExactEval<T>> {
    check_policy(mdp, policy)?;
    let n = mdp.n_states();
    let gamma = mdp.gamma();
    let p = policy_transition(mdp, policy);

    // (I − γ P) V = r_π
    let mut lhs = vec![vec![T::zero(); n]; n];
    for s in 0..n {
        for k in 0..n {
            lhs[s][k] = if s == k { T::one() } else { T::zero() } - gamma * p[s][k];
        }
    }
    let values = solve_linear(lhs, policy_reward(mdp, policy))?;

    // (I − γ Pᵀ) d = (1 − γ) ρ1
    let mut lhs = vec![vec![T::zero(); n]; n];
    for s in 0..n {
        for k in 0..n {
            lhs[s][k] = if s == k { T::one() } else { T::zero() } - gamma * p[k][s];
        }
    }
    let rhs: Vec<T> = mdp.initial().iter().map(|&x| (T::one() - gamma) * x).collect();
    let state_dist = solve_linear(lhs, rhs)?;

    let mut action_values = vec![vec![T::zero(); mdp.n_actions()]; n];
    let mut advantages = vec![vec![T::zero(); mdp.n_actions()]; n];
    for s in 0..n {
        for a in 0..mdp.n_actions() {
            let next: T = mdp.transition(s, a).iter().zip(&values).map(|(&t, &v)| t * v).sum();
            action_values[s][a] = mdp.reward(s, a) + gamma * next;
            advantages[s][a] = action_values[s][a] - values[s];
        }
    }
    let eta = performance_from(mdp, policy, &state_dist);
    Ok(ExactEval {
        values,
        action_values,
        advantages,
        state_dist,
        eta,
    })
}

fn performance_from<T: Scalar>(mdp: &TabularMdp<T>, policy: &[Vec<T>], state_dist: &[T]) -> T {
    policy_reward(mdp, policy)
        .iter()
        .zip(state_dist)
        .map(|(&r, &d)| r * d)
        .sum()
}

/// Max-norm Bellman residual of `V` and `Q` in `eval` under `policy`.
pub fn bellman_residual<T: Scalar>(mdp: &TabularMdp<T>, policy: &[Vec<T>], eval: &ExactEval<T>) -> T {
    let gamma = mdp.gamma();
    let mut worst = T::zero();
    for s in 0..mdp.n_states() {
        let mut v_backup = T::zero();
        for a in 0..mdp.n_actions() {
            let next: T = mdp
                .transition(s, a)
                .iter()
                .zip(&eval.values)
                .map(|(&t, &v)| t * v)
                .sum();
            let q = mdp.reward(s, a) + gamma * next;
            worst = worst.max((q - eval.action_values[s][a]).abs());
            v_backup += policy[s][a] * q;
        }
        worst = worst.max((v_backup - eval.values[s]).abs());
    }
    worst
}

/// `L^PG(π) = η(π_old) + Σ_s ρ_old(s) Σ_a π(a|s) A_old(s, a)`.
pub fn surrogate_l_pg<T: Scalar>(old_eval: &ExactEval<T>, new_policy: &[Vec<T>]) -> T {
    let gain: T = old_eval
        .state_dist
        .iter()
        .zip(new_policy)
        .zip(&old_eval.advantages)
        .map(|((&d, pi), adv)| d * pi.iter().zip(adv).map(|(&p, &a)| p * a).sum::<T>())
        .sum();
    old_eval.eta + gain
}

/// `max_s D_KL(π_old(·|s) || π(·|s))` over every state.
pub fn max_kl<T: Scalar>(old_policy: &[Vec<T>], new_policy: &[Vec<T>]) -> Result<T> {
    let mut worst = T::zero();
    for (o, n) in old_policy.iter().zip(new_policy) {
        worst = worst.max(kl_categorical(o, n)?);
    }
    Ok(worst)
}

/// `4γ max|A| / (1 − γ)²`.
pub fn penalty_constant<T: Scalar>(mdp: &TabularMdp<T>, old_eval: &ExactEval<T>) -> T {
    let gamma = mdp.gamma();
    let max_adv = old_eval
        .advantages
        .iter()
        .flatten()
        .fold(T::zero(), |m, &a| m.max(a.abs()));
    let one_minus = T::one() - gamma;
    max_adv * T::lit(4.0) * gamma / (one_minus * one_minus)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LowerBound<T> {
    pub l_pg: T,
    pub c: T,
    pub max_kl: T,
    /// `L^PG − C · max KL`.
    pub m: T,
}

pub fn lower_bound_m<T: Scalar>(
    mdp: &TabularMdp<T>,
    old_policy: &[Vec<T>],
    new_policy: &[Vec<T>],
) -> Result<LowerBound<T>> {
    check_policy(mdp, new_policy)?;
    let old_eval = exact_eval(mdp, old_policy)?;
    let l_pg = surrogate_l_pg(&old_eval, new_policy);
    let c = penalty_constant(mdp, &old_eval);
    let kl = max_kl(old_policy, new_policy)?;
    let m = if kl == T::zero() { l_pg } else { l_pg - c * kl };
    Ok(LowerBound { l_pg, c, max_kl: kl, m })
}
