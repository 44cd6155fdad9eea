//! Tape-tracked distribution heads and objectives.
//!
//! A policy network emits logits (categorical) or a mean plus a log standard
//! deviation (Gaussian). [`DistVars`] holds those outputs as tape variables so
//! that log-probabilities, KL divergences and entropies can be differentiated
//! with respect to them, and through them with respect to the network.

use super::{above_range, below_range, improved, out_of_trust_region, ObjectiveConfig, Sample, SampleBatch, Variant};
use crate::autodiff::{sum, Tape, Var};
use crate::distributions::{Action, CategoricalDist, GaussianDist, PolicyDist};
use crate::error::{Error, Result};
use crate::scalar::{ln_two_pi, Scalar};

#[derive(Debug, Clone)]
pub enum DistVars<'t, T: Scalar> {
    Categorical {
        logits: Vec<Var<'t, T>>,
    },
    Gaussian {
        mean: Vec<Var<'t, T>>,
        log_std: Vec<Var<'t, T>>,
    },
}

impl<'t, T: Scalar> DistVars<'t, T> {
    /// Places the parameters of `dist` on `tape` as fresh leaves.
    pub fn leaves(tape: &'t Tape<T>, dist: &PolicyDist<T>) -> Self {
        match dist {
            PolicyDist::Categorical(c) => DistVars::Categorical {
                logits: tape.vars(c.logits()),
            },
            PolicyDist::Gaussian(g) => DistVars::Gaussian {
                mean: tape.vars(g.mean()),
                log_std: tape.vars(g.log_std()),
            },
        }
    }

    /// Every variable of the head in the order categorical logits, or mean then log_std.
    pub fn vars(&self) -> Vec<Var<'t, T>> {
        match self {
            DistVars::Categorical { logits } => logits.clone(),
            DistVars::Gaussian { mean, log_std } => mean.iter().chain(log_std).copied().collect(),
        }
    }

    /// Plain-value snapshot of the distribution.
    pub fn to_dist(&self) -> Result<PolicyDist<T>> {
        let values = |v: &[Var<'t, T>]| v.iter().map(|x| x.value()).collect::<Vec<_>>();
        Ok(match self {
            DistVars::Categorical { logits } => PolicyDist::Categorical(CategoricalDist::new(values(logits))?),
            DistVars::Gaussian { mean, log_std } => {
                PolicyDist::Gaussian(GaussianDist::new(values(mean), values(log_std))?)
            }
        })
    }

    fn tape(&self) -> Result<&'t Tape<T>> {
        let first = match self {
            DistVars::Categorical { logits } => logits.first(),
            DistVars::Gaussian { mean, .. } => mean.first(),
        };
        first
            .map(|v| v.tape())
            .ok_or_else(|| Error::invalid_argument("distribution head has no variables"))
    }

    /// Log-softmax of the logits, shifted by the (constant) maximum for stability.
    fn categorical_log_probs(logits: &[Var<'t, T>]) -> Result<Vec<Var<'t, T>>> {
        let m = logits.iter().map(|l| l.value()).fold(T::neg_infinity(), T::max);
        let exps: Vec<_> = logits.iter().map(|&l| (l - m).exp()).collect();
        let total = sum(&exps).ok_or_else(|| Error::invalid_argument("empty logits"))?;
        let lse = total.ln()? + m;
        Ok(logits.iter().map(|&l| l - lse).collect())
    }

    pub fn log_prob(&self, action: &Action<T>) -> Result<Var<'t, T>> {
        match (self, action) {
            (DistVars::Categorical { logits }, Action::Discrete(a)) => {
                if *a >= logits.len() {
                    return Err(Error::invalid_argument(format!(
                        "action {a} outside {} categories",
                        logits.len()
                    )));
                }
                Ok(Self::categorical_log_probs(logits)?[*a])
            }
            (DistVars::Gaussian { mean, log_std }, Action::Continuous(a)) => {
                if a.len() != mean.len() {
                    return Err(Error::invalid_argument(format!(
                        "action has dimension {}, head has {}",
                        a.len(),
                        mean.len()
                    )));
                }
                let half = T::lit(0.5);
                let terms: Vec<_> = a
                    .iter()
                    .zip(mean.iter().zip(log_std))
                    .map(|(&x, (&mu, &ls))| {
                        let z = (mu - x) * (-ls).exp();
                        z.square().scale(-half) - ls - half * ln_two_pi::<T>()
                    })
                    .collect();
                sum(&terms).ok_or_else(|| Error::invalid_argument("empty gaussian head"))
            }
            _ => Err(Error::invalid_argument("action kind does not match head kind")),
        }
    }

    /// `D_KL(old || self)`, with `old` held constant.
    pub fn kl_from(&self, old: &PolicyDist<T>) -> Result<Var<'t, T>> {
        let tape = self.tape()?;
        match (self, old) {
            (DistVars::Categorical { logits }, PolicyDist::Categorical(o)) => {
                if o.n_actions() != logits.len() {
                    return Err(Error::invalid_argument("categorical KL over different supports"));
                }
                let new_lp = Self::categorical_log_probs(logits)?;
                let mut total = tape.constant(T::zero());
                for (&lo, &ln) in o.log_probs().iter().zip(&new_lp) {
                    let p = lo.exp();
                    if p > T::zero() {
                        total = total + (-ln + lo) * p;
                    }
                }
                Ok(total)
            }
            (DistVars::Gaussian { mean, log_std }, PolicyDist::Gaussian(o)) => {
                if o.dim() != mean.len() {
                    return Err(Error::invalid_argument("gaussian KL over different dimensions"));
                }
                let half = T::lit(0.5);
                let mut total = tape.constant(T::zero());
                for i in 0..mean.len() {
                    let (mo, lo) = (o.mean()[i], o.log_std()[i]);
                    let var_old = (lo + lo).exp();
                    let diff = mean[i] - mo;
                    let inv_var_new = (log_std[i].scale(-T::lit(2.0))).exp();
                    let quad = (diff.square() + var_old) * inv_var_new;
                    total = total + (log_std[i] - lo) + quad.scale(half) - half;
                }
                Ok(total)
            }
            _ => Err(Error::invalid_argument("KL between different distribution kinds")),
        }
    }

    pub fn entropy(&self) -> Result<Var<'t, T>> {
        match self {
            DistVars::Categorical { logits } => {
                let lp = Self::categorical_log_probs(logits)?;
                let terms: Vec<_> = lp.iter().map(|&l| -(l.exp() * l)).collect();
                sum(&terms).ok_or_else(|| Error::invalid_argument("empty logits"))
            }
            DistVars::Gaussian { log_std, .. } => {
                let per_dim = T::lit(0.5) * (ln_two_pi::<T>() + T::one());
                let terms: Vec<_> = log_std.iter().map(|&ls| ls + per_dim).collect();
                sum(&terms).ok_or_else(|| Error::invalid_argument("empty gaussian head"))
            }
        }
    }
}

/// Tape version of [`super::evaluate`]. Branch selection uses the same
/// predicates, and constant branches carry no gradient.
pub fn sample_objective<'t, T: Scalar>(
    config: &ObjectiveConfig<T>,
    r: Var<'t, T>,
    advantage: T,
    kl: Var<'t, T>,
    alpha_live: T,
) -> Var<'t, T> {
    let (eps, delta, alpha) = (config.epsilon, config.delta, config.alpha);
    let tape = r.tape();
    let ra = r * advantage;
    let triggered = || out_of_trust_region(kl.value(), delta) && improved(r.value(), advantage);
    match config.variant {
        Variant::Pg => ra,
        Variant::Clip => ra.min2(r.clip_range(T::one() - eps, T::one() + eps) * advantage),
        Variant::ClipSimple => r.clip_range(T::one() - eps, T::one() + eps) * advantage,
        Variant::Rb => {
            let f = if below_range(r.value(), eps) {
                r.scale(-alpha) + (T::one() + alpha) * (T::one() - eps)
            } else if above_range(r.value(), eps) {
                r.scale(-alpha) + (T::one() + alpha) * (T::one() + eps)
            } else {
                r
            };
            ra.min2(f * advantage)
        }
        Variant::Tr => {
            if out_of_trust_region(kl.value(), delta) {
                ra.min2(tape.constant(advantage))
            } else {
                ra
            }
        }
        Variant::TrSimple => {
            if out_of_trust_region(kl.value(), delta) {
                tape.constant(advantage)
            } else {
                ra
            }
        }
        Variant::Truly => {
            if triggered() {
                ra - kl.scale(alpha)
            } else {
                ra - delta
            }
        }
        Variant::TrRbRatio => {
            if triggered() {
                ra.scale(-alpha)
            } else {
                ra
            }
        }
        Variant::Penalty => ra - kl.scale(alpha_live),
    }
}

/// A per-sample surrogate on tape variables.
///
/// [`ObjectiveConfig`] implements it with [`sample_objective`]; other
/// implementations let the batch machinery run alternative objectives.
pub trait Surrogate<T: Scalar> {
    /// Whether [`Surrogate::per_sample`] reads its `kl` argument.
    fn uses_kl(&self) -> bool;

    fn per_sample<'t>(&self, r: Var<'t, T>, advantage: T, kl: Var<'t, T>, alpha_live: T) -> Var<'t, T>;
}

impl<T: Scalar> Surrogate<T> for ObjectiveConfig<T> {
    fn uses_kl(&self) -> bool {
        self.variant.uses_kl()
    }

    fn per_sample<'t>(&self, r: Var<'t, T>, advantage: T, kl: Var<'t, T>, alpha_live: T) -> Var<'t, T> {
        sample_objective(self, r, advantage, kl, alpha_live)
    }
}

/// Per-sample surrogate for `sample` under the head `head`.
pub fn sample_surrogate<'t, T: Scalar, S: Surrogate<T> + ?Sized>(
    config: &S,
    sample: &Sample<T>,
    head: &DistVars<'t, T>,
    alpha_live: T,
) -> Result<Var<'t, T>> {
    let lp = head.log_prob(&sample.action)?;
    let r = (lp - sample.old_log_prob).exp();
    let kl = if config.uses_kl() {
        head.kl_from(&sample.old_dist)?
    } else {
        lp.tape().constant(T::zero())
    };
    Ok(config.per_sample(r, sample.advantage, kl, alpha_live))
}

/// Batch mean of the per-sample surrogate plus `entropy_coef` times the mean entropy.
///
/// `heads[i]` is the new policy's distribution at `batch[i].state`.
pub fn batch_objective<'t, T: Scalar, S: Surrogate<T> + ?Sized>(
    config: &S,
    batch: &SampleBatch<T>,
    heads: &[DistVars<'t, T>],
    entropy_coef: T,
    alpha_live: T,
) -> Result<Var<'t, T>> {
    if batch.is_empty() {
        return Err(Error::invalid_argument("empty batch"));
    }
    if heads.len() != batch.len() {
        return Err(Error::invalid_argument(format!(
            "{} heads for {} samples",
            heads.len(),
            batch.len()
        )));
    }
    let inv_n = T::one() / T::from_usize_lossy(batch.len());
    let mut terms = Vec::with_capacity(batch.len());
    for (sample, head) in batch.samples().iter().zip(heads) {
        let mut term = sample_surrogate(config, sample, head, alpha_live)?;
        if entropy_coef != T::zero() {
            term = term + head.entropy()?.scale(entropy_coef);
        }
        terms.push(term);
    }
    let total = sum(&terms).expect("batch is nonempty").scale(inv_n);
    if !total.value().is_finite() {
        return Err(Error::invalid_state(format!(
            "batch objective is non-finite ({})",
            total.value()
        )));
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{finite_diff_check, DEFAULT_STEP};
    use crate::distributions::kl_categorical;
    use crate::objectives::evaluate;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cat(logits: &[f64]) -> PolicyDist<f64> {
        PolicyDist::Categorical(CategoricalDist::new(logits.to_vec()).unwrap())
    }

    fn scalar_kl(tape: &Tape<f64>, v: f64) -> Var<'_, f64> {
        tape.var(v)
    }

    #[test]
    fn tape_objective_matches_plain_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for variant in Variant::ALL {
            let cfg = ObjectiveConfig::<f64>::for_variant(variant);
            for _ in 0..2000 {
                let r: f64 = rng.random_range(0.3..2.0);
                let a: f64 = rng.random_range(-3.0..3.0);
                let kl: f64 = rng.random_range(0.0..0.1);
                let tape = Tape::new();
                let y = sample_objective(&cfg, tape.var(r), a, scalar_kl(&tape, kl), 2.0);
                assert_eq!(
                    y.value(),
                    evaluate(&cfg, r, a, kl, 2.0),
                    "{variant} r={r} a={a} kl={kl}"
                );
            }
        }
    }

    #[test]
    fn constant_branches_have_zero_gradient() {
        let cfg = ObjectiveConfig::<f64>::for_variant(Variant::Clip);
        let tape = Tape::new();
        let r = tape.var(1.5);
        let y = sample_objective(&cfg, r, 1.0, tape.var(0.0), 1.0);
        assert_eq!(tape.backward(y).unwrap().wrt(r), 0.0);

        let cfg = ObjectiveConfig::<f64>::for_variant(Variant::Tr);
        let tape = Tape::new();
        let r = tape.var(1.3);
        let kl = tape.var(0.5);
        let y = sample_objective(&cfg, r, 1.0, kl, 1.0);
        let g = tape.backward(y).unwrap();
        assert_eq!((g.wrt(r), g.wrt(kl)), (0.0, 0.0));
    }

    #[test]
    fn rollback_slope_outside_range() {
        let cfg = ObjectiveConfig::<f64>::for_variant(Variant::Rb);
        for (r0, a) in [(1.3, 2.0), (1.7, 0.5)] {
            let tape = Tape::new();
            let r = tape.var(r0);
            let y = sample_objective(&cfg, r, a, tape.var(0.0), 1.0);
            assert_abs_diff_eq!(tape.backward(y).unwrap().wrt(r), -cfg.alpha * a, epsilon = 1e-15);
        }
    }

    #[test]
    fn simple_clip_loses_gradient_where_full_clip_keeps_it() {
        // r below the range with A > 0: the objective got worse, the minimum
        // keeps the unclipped branch, the simple form stays flat.
        let full = ObjectiveConfig::<f64>::for_variant(Variant::Clip);
        let simple = ObjectiveConfig::<f64>::for_variant(Variant::ClipSimple);
        let grad = |cfg: &ObjectiveConfig<f64>| {
            let tape = Tape::new();
            let r = tape.var(0.5);
            let y = sample_objective(cfg, r, 1.0, tape.var(0.0), 1.0);
            tape.backward(y).unwrap().wrt(r)
        };
        assert_eq!(grad(&full), 1.0);
        assert_eq!(grad(&simple), 0.0);
    }

    #[test]
    fn head_kl_matches_closed_form() {
        let old = cat(&[0.0, 0.0]);
        let tape = Tape::new();
        let head = DistVars::Categorical {
            logits: tape.vars(&[0.9f64.ln(), 0.1f64.ln()]),
        };
        let kl = head.kl_from(&old).unwrap().value();
        assert_abs_diff_eq!(kl, kl_categorical(&[0.5, 0.5], &[0.9, 0.1]).unwrap(), epsilon = 1e-12);

        let old = PolicyDist::Gaussian(GaussianDist::new(vec![0.0], vec![0.0]).unwrap());
        let head = DistVars::Gaussian {
            mean: tape.vars(&[0.0]),
            log_std: tape.vars(&[1.0]),
        };
        let expected = 1.0 + (-2.0f64).exp() / 2.0 - 0.5;
        assert_abs_diff_eq!(head.kl_from(&old).unwrap().value(), expected, epsilon = 1e-12);
    }

    #[test]
    fn head_values_match_distribution_module() {
        let dist = PolicyDist::Gaussian(GaussianDist::new(vec![0.3, -1.0], vec![-0.2, 0.4]).unwrap());
        let tape = Tape::new();
        let head = DistVars::leaves(&tape, &dist);
        let action = Action::Continuous(vec![0.1, 0.5]);
        assert_abs_diff_eq!(
            head.log_prob(&action).unwrap().value(),
            dist.log_prob(&action).unwrap().value(),
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(head.entropy().unwrap().value(), dist.entropy(), epsilon = 1e-12);

        let dist = cat(&[0.2, -0.7, 1.1]);
        let head = DistVars::leaves(&tape, &dist);
        assert_abs_diff_eq!(head.entropy().unwrap().value(), dist.entropy(), epsilon = 1e-12);
        assert_eq!(head.to_dist().unwrap(), dist);
    }

    fn batch_of(entries: &[(usize, f64)], old: &PolicyDist<f64>) -> SampleBatch<f64> {
        let samples = entries
            .iter()
            .map(|&(a, adv)| Sample::from_dist(vec![0.0], Action::Discrete(a), adv, adv, old.clone()).unwrap())
            .collect();
        SampleBatch::new(samples).unwrap()
    }

    #[test]
    fn batch_objective_examples() {
        let old = cat(&[0.0, 0.0]);
        let tape = Tape::new();
        let cfg = ObjectiveConfig::<f64>::for_variant(Variant::Clip);
        let batch = batch_of(&[(0, 2.5)], &old);
        let heads = vec![DistVars::leaves(&tape, &old)];
        let y = batch_objective(&cfg, &batch, &heads, 0.0, 1.0).unwrap();
        assert_abs_diff_eq!(y.value(), 2.5, epsilon = 1e-15);

        let cfg = ObjectiveConfig::<f64>::for_variant(Variant::Pg);
        let batch = batch_of(&[(0, 1.0), (1, -1.0)], &old);
        let heads = vec![DistVars::leaves(&tape, &old), DistVars::leaves(&tape, &old)];
        let y = batch_objective(&cfg, &batch, &heads, 0.0, 1.0).unwrap();
        assert_abs_diff_eq!(y.value(), 0.0, epsilon = 1e-15);

        // Two samples under a shifted policy, checked against hand-combined plain values.
        let cfg = ObjectiveConfig::<f64>::for_variant(Variant::Truly);
        let new = cat(&[0.9f64.ln(), 0.1f64.ln()]);
        let heads = vec![DistVars::leaves(&tape, &new), DistVars::leaves(&tape, &new)];
        let batch = batch_of(&[(0, 1.0), (1, 1.0)], &old);
        let kl = kl_categorical(&[0.5, 0.5], &[0.9, 0.1]).unwrap();
        let expected = (l_truly_plain(1.8, 1.0, kl) + l_truly_plain(0.2, 1.0, kl)) / 2.0;
        let y = batch_objective(&cfg, &batch, &heads, 0.0, 1.0).unwrap();
        assert_abs_diff_eq!(y.value(), expected, epsilon = 1e-12);
    }

    fn l_truly_plain(r: f64, a: f64, kl: f64) -> f64 {
        // kl = 0.51 ≥ δ; sample 1 improved (penalty branch), sample 2 not (−δ branch).
        if kl >= 0.03 && r * a >= a {
            r * a - 5.0 * kl
        } else {
            r * a - 0.03
        }
    }

    #[test]
    fn gradients_match_finite_differences_for_every_variant() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for variant in Variant::ALL {
            let cfg = ObjectiveConfig::<f64>::for_variant(variant);
            let old = cat(&[0.1, -0.4, 0.3]);
            let batch = batch_of(&[(0, 1.3), (2, -0.8)], &old);
            let mut checked = 0;
            while checked < 20 {
                let point: Vec<f64> = (0..6).map(|_| rng.random_range(-0.6..0.6)).collect();
                if near_kink(&cfg, &batch, &point) {
                    continue;
                }
                let check = finite_diff_check(
                    |_, x| {
                        let heads: Vec<_> = x
                            .chunks(3)
                            .map(|c| DistVars::Categorical { logits: c.to_vec() })
                            .collect();
                        batch_objective(&cfg, &batch, &heads, 0.01, 1.5)
                    },
                    &point,
                    DEFAULT_STEP,
                )
                .unwrap();
                assert!(check.max_rel_error <= 1e-4, "{variant}: {}", check.max_rel_error);
                checked += 1;
            }
        }
    }

    fn near_kink(cfg: &ObjectiveConfig<f64>, batch: &SampleBatch<f64>, point: &[f64]) -> bool {
        batch.samples().iter().zip(point.chunks(3)).any(|(s, logits)| {
            let new = cat(logits);
            let r = (new.log_prob(&s.action).unwrap().value() - s.old_log_prob).exp();
            let kl = s.old_dist.kl(&new).unwrap();
            let m = 1e-3;
            (r - (1.0 - cfg.epsilon)).abs() < m
                || (r - (1.0 + cfg.epsilon)).abs() < m
                || (kl - cfg.delta).abs() < m
                || (r - 1.0).abs() < m
        })
    }
}
