use crate::autodiff::Tape;
use crate::distributions::{kl_categorical, kl_gaussian, Action, CategoricalDist, GaussianDist, PolicyDist};
use crate::error::{Error, Result};
use crate::objectives::{batch_objective, DistVars, ObjectiveConfig, Sample, SampleBatch, Surrogate, Variant};
use crate::scalar::Scalar;

/// A categorical distribution with the sampled action's probability kept
/// fixed and KL from the old distribution above the requested bound.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoricalWitness<T> {
    pub probs: Vec<T>,
    pub ratio: T,
    pub kl: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianWitness<T> {
    pub dist: GaussianDist<T>,
    pub ratio: T,
    pub kl: T,
}

fn check_target<T: Scalar>(eps: T, target: T) -> Result<()> {
    if !target.is_finite() {
        return Err(Error::invalid_argument("KL target must be finite"));
    }
    if !(eps > T::zero() && eps < T::one()) {
        return Err(Error::invalid_argument("epsilon must lie in (0, 1)"));
    }
    Ok(())
}

/// Drives one non-sampled coordinate toward zero, rescales the remaining
/// non-sampled coordinates to keep the total at one, and leaves
/// `old[action]` untouched. Needs at least three actions.
pub fn categorical_kl_witness<T: Scalar>(old: &[T], action: usize, eps: T, target: T) -> Result<CategoricalWitness<T>> {
    check_target(eps, target)?;
    if old.len() < 3 {
        return Err(Error::invalid_argument(format!(
            "categorical witness needs at least 3 actions, got {}",
            old.len()
        )));
    }
    if action >= old.len() || !(old[action] > T::zero()) {
        return Err(Error::invalid_argument("sampled action must have positive probability"));
    }
    kl_categorical(old, old)?;
    let victim = (0..old.len())
        .filter(|&d| d != action)
        .max_by(|&i, &j| old[i].partial_cmp(&old[j]).unwrap_or(std::cmp::Ordering::Equal))
        .expect("at least two other actions");
    let rest_old: T = (0..old.len())
        .filter(|&d| d != action && d != victim)
        .map(|d| old[d])
        .sum();
    if !(old[victim] > T::zero()) || !(rest_old > T::zero()) {
        return Err(Error::invalid_argument(
            "old distribution has too little mass off the sampled action",
        ));
    }
    let free = old[victim] + rest_old;
    let e = T::lit(std::f64::consts::E);
    let mut tau = old[victim] / T::lit(2.0);
    loop {
        let mut probs = old.to_vec();
        probs[victim] = tau;
        let scale = (free - tau) / rest_old;
        for (d, p) in probs.iter_mut().enumerate() {
            if d != action && d != victim {
                *p = old[d] * scale;
            }
        }
        let kl = kl_categorical(old, &probs)?;
        if kl > target {
            let ratio = probs[action] / old[action];
            return Ok(CategoricalWitness { probs, ratio, kl });
        }
        if tau == T::zero() {
            return Err(Error::Internal(
                "categorical witness could not exceed the KL target".into(),
            ));
        }
        tau = tau / e;
    }
}

/// Shrinks `σ` by halving and moves the mean so that the density at `action`
/// is unchanged. One-dimensional only.
pub fn gaussian_kl_witness<T: Scalar>(
    old: &GaussianDist<T>,
    action: T,
    eps: T,
    target: T,
) -> Result<GaussianWitness<T>> {
    check_target(eps, target)?;
    if old.dim() != 1 {
        return Err(Error::invalid_argument("gaussian witness is one-dimensional"));
    }
    let (mu_old, sigma_old) = (old.mean()[0], old.std()[0]);
    let z_old = (action - mu_old) / sigma_old;
    let old_lp = old.log_prob(&[action])?.value();
    let mut sigma = sigma_old;
    for _ in 0..1000 {
        sigma = sigma / T::lit(2.0);
        let spread = T::lit(2.0) * sigma * sigma * ((sigma_old / sigma).ln() + z_old * z_old / T::lit(2.0));
        let new = GaussianDist::new(vec![action + spread.sqrt()], vec![sigma.ln()])?;
        let kl = kl_gaussian(old, &new)?;
        if kl > target {
            let ratio = (new.log_prob(&[action])?.value() - old_lp).exp();
            return Ok(GaussianWitness { dist: new, ratio, kl });
        }
    }
    Err(Error::Internal(
        "gaussian witness could not exceed the KL target".into(),
    ))
}

/// Two samples sharing one policy parameter `θ`.
///
/// At state `s` the logits are `(w_s·θ, 0)`. The old parameter is 0 (both
/// actions at probability 1/2) and the current one is `θ₀ = 0.5`. Sample 1
/// (`w = 1`, action 0, `A = +1`) starts outside the clipping range with an
/// improved objective; sample 2 (`w = 0.2`, action 1, `A = −1`) starts inside
/// and supplies the only gradient of the clipped objective.
#[derive(Debug, Clone)]
pub struct OutwardPushWitness<T> {
    pub eps: T,
    pub theta0: T,
    pub features: [T; 2],
    pub batch: SampleBatch<T>,
    /// Largest verified step: for every tested `β ≤ β̄`, `|r₁ − 1|` grows and
    /// sample 2 stays inside the clipping range.
    pub beta_bar: T,
    /// `⟨∇L^CLIP(θ₀), ∇r₁(θ₀)⟩ · A₁`.
    pub condition: T,
}

const WITNESS_THETA0: f64 = 0.5;
const WITNESS_FEATURES: [f64; 2] = [1.0, 0.2];

fn logits<T: Scalar>(w: T, theta: T) -> PolicyDist<T> {
    PolicyDist::Categorical(CategoricalDist::new(vec![w * theta, T::zero()]).expect("two logits"))
}

impl<T: Scalar> OutwardPushWitness<T> {
    /// Likelihood ratio of sample `i` at parameter `theta`.
    pub fn ratio(&self, i: usize, theta: T) -> Result<T> {
        let s = &self.batch.samples()[i];
        let lp = logits(self.features[i], theta).log_prob(&s.action)?.value();
        Ok((lp - s.old_log_prob).exp())
    }

    /// `(objective, dL/dθ, dr₁/dθ)` at `theta`.
    pub fn gradient<S: Surrogate<T> + ?Sized>(&self, config: &S, theta: T) -> Result<(T, T, T)> {
        let tape = Tape::with_capacity(128);
        let th = tape.var(theta);
        let heads: Vec<_> = self
            .features
            .iter()
            .map(|&w| DistVars::Categorical {
                logits: vec![th * w, tape.constant(T::zero())],
            })
            .collect();
        let objective = batch_objective(config, &self.batch, &heads, T::zero(), T::one())?;
        let grad = tape.backward(objective)?.wrt(th);
        let s1 = &self.batch.samples()[0];
        let r1 = (heads[0].log_prob(&s1.action)? - s1.old_log_prob).exp();
        let dr1 = tape.backward(r1)?.wrt(th);
        Ok((objective.value(), grad, dr1))
    }

    /// One gradient-ascent step of size `beta` from `θ₀`.
    pub fn step<S: Surrogate<T> + ?Sized>(&self, config: &S, beta: T) -> Result<T> {
        let (_, grad, _) = self.gradient(config, self.theta0)?;
        Ok(self.theta0 + beta * grad)
    }

    /// `|r₁ − 1|` after one step of size `beta` on `config`.
    pub fn distance_after_step<S: Surrogate<T> + ?Sized>(&self, config: &S, beta: T) -> Result<T> {
        Ok((self.ratio(0, self.step(config, beta)?)? - T::one()).abs())
    }

    fn step_is_outward(&self, clip: &ObjectiveConfig<T>, beta: T) -> Result<bool> {
        let before = (self.ratio(0, self.theta0)? - T::one()).abs();
        let theta1 = self.step(clip, beta)?;
        let after = (self.ratio(0, theta1)? - T::one()).abs();
        let inside = (self.ratio(1, theta1)? - T::one()).abs() < self.eps;
        Ok(after > before && inside)
    }
}

pub fn outward_push_witness<T: Scalar>(eps: T) -> Result<OutwardPushWitness<T>> {
    if !(eps > T::zero() && eps < T::lit(0.24)) {
        return Err(Error::invalid_argument(
            "outward-push witness needs epsilon in (0, 0.24)",
        ));
    }
    let features = WITNESS_FEATURES.map(T::lit);
    let old = |w: T| logits(w, T::zero());
    let samples = vec![
        Sample::from_dist(
            vec![T::one()],
            Action::Discrete(0),
            T::one(),
            T::one(),
            old(features[0]),
        )?,
        Sample::from_dist(
            vec![T::lit(0.2)],
            Action::Discrete(1),
            -T::one(),
            -T::one(),
            old(features[1]),
        )?,
    ];
    let mut witness = OutwardPushWitness {
        eps,
        theta0: T::lit(WITNESS_THETA0),
        features,
        batch: SampleBatch::new(samples)?,
        beta_bar: T::zero(),
        condition: T::zero(),
    };

    let mut clip = ObjectiveConfig::for_variant(Variant::Clip);
    clip.epsilon = eps;
    let r1 = witness.ratio(0, witness.theta0)?;
    let r2 = witness.ratio(1, witness.theta0)?;
    let a1 = witness.batch.samples()[0].advantage;
    if !((r1 - T::one()).abs() >= eps && r1 * a1 >= a1 && (r2 - T::one()).abs() < eps) {
        return Err(Error::Internal(format!(
            "witness starting ratios r1={r1}, r2={r2} do not fit the construction"
        )));
    }
    let (_, grad, dr1) = witness.gradient(&clip, witness.theta0)?;
    witness.condition = grad * dr1 * a1;
    if !(witness.condition > T::zero()) {
        return Err(Error::Internal(format!("gradient condition is {}", witness.condition)));
    }

    // Grow β from a tiny value while the push stays outward and sample 2 stays unclipped.
    let mut beta = T::lit(1e-6);
    if !witness.step_is_outward(&clip, beta)? {
        return Err(Error::Internal("smallest tested step does not push outward".into()));
    }
    while beta < T::lit(1e6) && witness.step_is_outward(&clip, beta + beta)? {
        beta = beta + beta;
    }
    witness.beta_bar = beta;
    Ok(witness)
}
