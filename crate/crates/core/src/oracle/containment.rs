use rand::Rng;

use crate::autodiff::Tape;
use crate::distributions::{Action, CategoricalDist, PolicyDist};
use crate::error::{Error, Result};
use crate::objectives::{batch_objective, DistVars, Sample, SampleBatch, Surrogate};
use crate::scalar::Scalar;

/// A batch over a few tabular states, each with its own free logit vector.
#[derive(Debug, Clone)]
pub struct TabularBatchProblem<T> {
    /// Old policy logits per state.
    pub old_logits: Vec<Vec<T>>,
    pub batch: SampleBatch<T>,
    /// State index of each sample.
    pub sample_state: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AscentResult<T> {
    pub logits: Vec<Vec<T>>,
    pub ratios: Vec<T>,
    pub objective: T,
    pub iterations: usize,
    pub converged: bool,
}

impl<T: Scalar> AscentResult<T> {
    pub fn max_ratio_deviation(&self) -> T {
        self.ratios.iter().fold(T::zero(), |m, &r| m.max((r - T::one()).abs()))
    }
}

impl<T: Scalar> TabularBatchProblem<T> {
    /// `entries[i] = (state, action, advantage)`.
    pub fn new(old_logits: Vec<Vec<T>>, entries: &[(usize, usize, T)]) -> Result<Self> {
        let mut samples = Vec::with_capacity(entries.len());
        let mut sample_state = Vec::with_capacity(entries.len());
        for &(s, a, adv) in entries {
            let row = old_logits
                .get(s)
                .ok_or_else(|| Error::invalid_argument(format!("sample refers to missing state {s}")))?;
            let dist = PolicyDist::Categorical(CategoricalDist::new(row.clone())?);
            let mut state = vec![T::zero(); old_logits.len()];
            state[s] = T::one();
            samples.push(Sample::from_dist(state, Action::Discrete(a), adv, adv, dist)?);
            sample_state.push(s);
        }
        Ok(Self {
            old_logits,
            batch: SampleBatch::new(samples)?,
            sample_state,
        })
    }

    /// One state with `π_old = (0.2, 0.8)` and samples `(a₀, A = +1)`, `(a₁, A = −1)`.
    /// Both samples push probability toward action 0.
    pub fn two_action() -> Self {
        let old = vec![vec![T::lit(0.2f64.ln()), T::lit(0.8f64.ln())]];
        Self::new(old, &[(0, 0, T::one()), (0, 1, -T::one())]).expect("fixed construction is valid")
    }

    /// Random problem with `n_states` states of `n_actions` actions, two
    /// samples per state and `|A| ∈ [0.2, 1]`.
    pub fn random<R: Rng + ?Sized>(n_states: usize, n_actions: usize, rng: &mut R) -> Result<Self> {
        let old: Vec<Vec<T>> = (0..n_states)
            .map(|_| (0..n_actions).map(|_| T::lit(rng.random_range(-1.0..1.0))).collect())
            .collect();
        let mut entries = Vec::new();
        for s in 0..n_states {
            for _ in 0..2 {
                let a = rng.random_range(0..n_actions);
                let magnitude: f64 = rng.random_range(0.2..1.0);
                let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                entries.push((s, a, T::lit(sign * magnitude)));
            }
        }
        Self::new(old, &entries)
    }

    fn objective_and_grad<S: Surrogate<T> + ?Sized>(&self, config: &S, logits: &[Vec<T>]) -> Result<(T, Vec<Vec<T>>)> {
        let tape = Tape::with_capacity(1024);
        let vars: Vec<Vec<_>> = logits.iter().map(|row| tape.vars(row)).collect();
        let heads: Vec<_> = self
            .sample_state
            .iter()
            .map(|&s| DistVars::Categorical {
                logits: vars[s].clone(),
            })
            .collect();
        let y = batch_objective(config, &self.batch, &heads, T::zero(), T::one())?;
        let g = tape.backward(y)?;
        Ok((y.value(), vars.iter().map(|row| g.wrt_all(row)).collect()))
    }

    fn objective<S: Surrogate<T> + ?Sized>(&self, config: &S, logits: &[Vec<T>]) -> Result<T> {
        Ok(self.objective_and_grad(config, logits)?.0)
    }

    pub fn ratios(&self, logits: &[Vec<T>]) -> Result<Vec<T>> {
        self.batch
            .samples()
            .iter()
            .zip(&self.sample_state)
            .map(|(s, &st)| {
                let dist = CategoricalDist::new(logits[st].clone())?;
                let lp = dist.log_prob(s.action.as_discrete().unwrap_or(usize::MAX))?;
                Ok((lp.value() - s.old_log_prob).exp())
            })
            .collect()
    }

    /// Gradient ascent on the batch objective from the old logits with
    /// backtracking: a step is taken only if it does not lower the objective.
    pub fn maximize<S: Surrogate<T> + ?Sized>(&self, config: &S, max_iterations: usize) -> Result<AscentResult<T>> {
        let mut logits = self.old_logits.clone();
        let (mut value, mut grad) = self.objective_and_grad(config, &logits)?;
        let mut step = T::one();
        let mut converged = false;
        let mut iterations = 0;
        while iterations < max_iterations {
            iterations += 1;
            let norm2: T = grad.iter().flatten().map(|&g| g * g).sum();
            if norm2.sqrt() <= T::lit(1e-12) {
                converged = true;
                break;
            }
            let mut accepted = false;
            while step > T::lit(1e-14) {
                let trial: Vec<Vec<T>> = logits
                    .iter()
                    .zip(&grad)
                    .map(|(row, g)| row.iter().zip(g).map(|(&x, &d)| x + step * d).collect())
                    .collect();
                let trial_value = self.objective(config, &trial)?;
                if trial_value >= value + T::lit(1e-4) * step * norm2 {
                    logits = trial;
                    value = trial_value;
                    accepted = true;
                    break;
                }
                step /= T::lit(2.0);
            }
            if !accepted {
                converged = true;
                break;
            }
            grad = self.objective_and_grad(config, &logits)?.1;
            step = (step + step).min(T::lit(64.0));
        }
        Ok(AscentResult {
            ratios: self.ratios(&logits)?,
            logits,
            objective: value,
            iterations,
            converged,
        })
    }
}
