//! On-policy training loop.
//!
//! Each epoch collects a batch under the frozen current policy, then runs
//! several shuffled minibatch passes of Adam on the selected surrogate plus a
//! value regression loss. Diagnostics compare the pre-epoch snapshot with the
//! parameters at the end of the epoch.

mod adam;
mod config;
mod rollout;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use adam::Adam;
pub use config::{TrainConfig, DISCRETE_ENTROPY_COEF};
pub use rollout::{collect_rollout, Collected, EnvSlot};

use crate::autodiff::Tape;
use crate::envs::{ActionSpace, Env};
use crate::error::{Error, Result};
use crate::objectives::{adapt_penalty_coef, epoch_diagnostics, sample_surrogate, SampleBatch, Variant};
use crate::policy::{Policy, ValueNet};
use crate::scalar::Scalar;

/// Header of the per-epoch metrics table.
pub const METRICS_HEADER: &str =
    "epoch,timesteps,mean_episode_reward,clipfrac,max_ratio,max_kl,mean_kl,entropy,unimproved_frac,loss,penalty_alpha";

#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics<T> {
    pub epoch: usize,
    /// Environment steps collected so far, this epoch included.
    pub timesteps: usize,
    pub mean_episode_reward: T,
    pub clipfrac: T,
    pub max_ratio: T,
    pub max_kl: T,
    pub mean_kl: T,
    pub entropy: T,
    pub unimproved_frac: T,
    /// Mean minibatch loss over the final optimization pass.
    pub loss: T,
    /// Penalty coefficient in effect during the epoch.
    pub penalty_alpha: T,
}

impl<T: Scalar> EpochMetrics<T> {
    /// One CSV row matching [`METRICS_HEADER`].
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.epoch,
            self.timesteps,
            self.mean_episode_reward,
            self.clipfrac,
            self.max_ratio,
            self.max_kl,
            self.mean_kl,
            self.entropy,
            self.unimproved_frac,
            self.loss,
            self.penalty_alpha
        )
    }
}

/// Surrogate values of one minibatch, measured before its update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinibatchRecord<T> {
    pub pass: usize,
    /// Mean of the selected per-sample surrogate.
    pub surrogate: T,
    /// Mean of `r·A` over the same samples.
    pub l_pg: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochOutcome<T> {
    pub metrics: EpochMetrics<T>,
    pub trace: Vec<MinibatchRecord<T>>,
}

#[derive(Debug, Clone)]
pub struct Trainer<T> {
    config: TrainConfig<T>,
    policy: Policy<T>,
    value: ValueNet<T>,
    policy_opt: Adam<T>,
    value_opt: Adam<T>,
    envs: Vec<EnvSlot<T>>,
    rng: ChaCha8Rng,
    penalty_alpha: T,
    epoch: usize,
    last_reward: Option<T>,
}

impl<T: Scalar> Trainer<T> {
    pub fn new(config: TrainConfig<T>) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let envs = (0..config.n_envs)
            .map(|_| Env::new(config.env, rng.random()).map(EnvSlot::new))
            .collect::<Result<Vec<_>>>()?;
        let obs_dim = envs[0].env.observation_dim();
        let space = envs[0].env.action_space();
        let policy = Policy::new(obs_dim, space, &config.hidden, config.init_log_std, &mut rng)?;
        let value = ValueNet::new(obs_dim, &config.hidden, &mut rng)?;
        Ok(Self {
            policy_opt: Adam::new(policy.n_params(), config.learning_rate),
            value_opt: Adam::new(value.net().n_params(), config.learning_rate),
            penalty_alpha: config.objective.alpha,
            config,
            policy,
            value,
            envs,
            rng,
            epoch: 0,
            last_reward: None,
        })
    }

    pub fn config(&self) -> &TrainConfig<T> {
        &self.config
    }

    pub fn policy(&self) -> &Policy<T> {
        &self.policy
    }

    pub fn value(&self) -> &ValueNet<T> {
        &self.value
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn penalty_alpha(&self) -> T {
        self.penalty_alpha
    }

    pub fn set_policy(&mut self, policy: Policy<T>) -> Result<()> {
        if policy.n_params() != self.policy.n_params() {
            return Err(Error::invalid_argument("replacement policy has a different shape"));
        }
        self.policy = policy;
        Ok(())
    }

    pub fn collect(&mut self) -> Result<Collected<T>> {
        collect_rollout(
            &self.policy,
            &self.value,
            &mut self.envs,
            self.config.timesteps_per_epoch,
            self.config.gamma,
            self.config.lambda,
            &mut self.rng,
        )
    }

    /// Updates the penalty coefficient from the epoch's measured mean KL.
    pub fn adapt_penalty(&mut self, measured_mean_kl: T) -> T {
        let o = &self.config.objective;
        self.penalty_alpha = adapt_penalty_coef(
            self.penalty_alpha,
            measured_mean_kl,
            o.penalty_target,
            o.penalty_adapt_factor,
        );
        self.penalty_alpha
    }

    /// Optimizes on `batch` and reports diagnostics for the epoch. On a
    /// non-finite loss the parameters are restored and an error describing
    /// the offending minibatch is returned.
    pub fn train_epoch(&mut self, mut batch: SampleBatch<T>) -> Result<EpochOutcome<T>> {
        let cfg = self.config.objective_at(self.epoch);
        cfg.validate()?;
        if self.config.normalize_advantages {
            batch.normalize_advantages();
        }
        let policy_before = self.policy.clone();
        let value_before = self.value.clone();
        let discrete = self.policy.is_discrete();
        let entropy_coef = self.config.entropy_coef_for(discrete);
        let alpha_live = self.penalty_alpha;
        let vf = self.config.value_loss_coef;
        let m = self.config.minibatch_size;
        let inv_m = T::one() / T::from_usize_lossy(m);
        let two = T::lit(2.0);

        let mut order: Vec<usize> = (0..batch.len()).collect();
        let mut trace = Vec::new();
        let mut last_pass_loss = T::zero();
        let mut pgrad = vec![T::zero(); self.policy.n_params()];
        let mut vgrad = vec![T::zero(); self.value.net().n_params()];
        for pass in 0..self.config.optimization_epochs {
            order.shuffle(&mut self.rng);
            let mut pass_loss = T::zero();
            let n_chunks = order.len() / m;
            for (chunk_index, chunk) in order.chunks_exact(m).enumerate() {
                pgrad.iter_mut().for_each(|g| *g = T::zero());
                vgrad.iter_mut().for_each(|g| *g = T::zero());
                let (mut surrogate, mut l_pg, mut entropy, mut value_err) =
                    (T::zero(), T::zero(), T::zero(), T::zero());
                for &i in chunk {
                    let s = &batch.samples()[i];
                    let (dist, cache) = self.policy.forward_cached(&s.state)?;
                    let tape = Tape::with_capacity(96);
                    let head = self.policy.head(&tape, &dist);
                    let term = sample_surrogate(&cfg, s, &head, alpha_live)?;
                    surrogate += term.value();
                    l_pg += (dist.log_prob(&s.action)?.value() - s.old_log_prob).exp() * s.advantage;
                    let root = if entropy_coef != T::zero() {
                        let h = head.entropy()?;
                        entropy += h.value();
                        term + h.scale(entropy_coef)
                    } else {
                        term
                    };
                    let g = tape.backward(root)?;
                    let head_grad: Vec<T> = g.wrt_all(&head.vars()).into_iter().map(|x| -x * inv_m).collect();
                    self.policy.backward(&cache, &head_grad, &mut pgrad)?;

                    let vcache = self.value.net().forward_cached(&s.state)?;
                    let diff = vcache.output()[0] - s.ret;
                    value_err += diff * diff;
                    self.value
                        .net()
                        .backward_cached(&vcache, &[two * vf * diff * inv_m], &mut vgrad)?;
                }
                let loss = -(surrogate + entropy_coef * entropy) * inv_m + vf * value_err * inv_m;
                if !loss.is_finite() || pgrad.iter().chain(&vgrad).any(|g| !g.is_finite()) {
                    self.policy = policy_before;
                    self.value = value_before;
                    return Err(Error::invalid_state(format!(
                        "non-finite loss at epoch {}, pass {pass}, minibatch {chunk_index}/{n_chunks}: \
                         surrogate {surrogate}, l_pg {l_pg}, entropy {entropy}, value error {value_err}",
                        self.epoch
                    )));
                }
                trace.push(MinibatchRecord {
                    pass,
                    surrogate: surrogate * inv_m,
                    l_pg: l_pg * inv_m,
                });
                pass_loss += loss;

                let mut params = self.policy.params();
                self.policy_opt.step(&mut params, &pgrad)?;
                self.policy.set_params(&params)?;
                let mut vparams = self.value.net().params();
                self.value_opt.step(&mut vparams, &vgrad)?;
                self.value.net_mut().set_params(&vparams)?;
            }
            last_pass_loss = pass_loss / T::from_usize_lossy(n_chunks.max(1));
        }

        let new_dists = batch
            .samples()
            .iter()
            .map(|s| self.policy.dist(&s.state))
            .collect::<Result<Vec<_>>>()?;
        let diag = epoch_diagnostics(&cfg, &batch, &new_dists)?;
        let metrics = EpochMetrics {
            epoch: self.epoch,
            timesteps: (self.epoch + 1) * self.config.timesteps_per_epoch,
            mean_episode_reward: T::zero(),
            clipfrac: diag.clipfrac,
            max_ratio: diag.max_ratio,
            max_kl: diag.max_kl,
            mean_kl: diag.mean_kl,
            entropy: diag.entropy,
            unimproved_frac: diag.unimproved_frac,
            loss: last_pass_loss,
            penalty_alpha: alpha_live,
        };
        if cfg.variant == Variant::Penalty {
            self.adapt_penalty(diag.mean_kl);
        }
        self.epoch += 1;
        Ok(EpochOutcome { metrics, trace })
    }

    /// Mean return of the episodes finished during collection. Without any,
    /// the previous epoch's value is repeated, and before the first finished
    /// episode the mean return of the episodes in progress is used.
    fn episode_reward(&mut self, finished: &[T]) -> T {
        let reward = if finished.is_empty() {
            self.last_reward.unwrap_or_else(|| {
                self.envs.iter().map(|e| e.episode_return).sum::<T>() / T::from_usize_lossy(self.envs.len())
            })
        } else {
            finished.iter().copied().sum::<T>() / T::from_usize_lossy(finished.len())
        };
        if !finished.is_empty() {
            self.last_reward = Some(reward);
        }
        reward
    }

    /// Collects a batch, trains on it and fills in the episode reward.
    pub fn step_epoch(&mut self) -> Result<EpochOutcome<T>> {
        let collected = self.collect()?;
        let reward = self.episode_reward(&collected.finished_returns);
        let mut outcome = self.train_epoch(collected.batch)?;
        outcome.metrics.mean_episode_reward = reward;
        Ok(outcome)
    }

    pub fn action_space(&self) -> ActionSpace {
        self.envs[0].env.action_space()
    }
}

/// Trains for `config.n_epochs()` epochs and returns the metric series.
pub fn run<T: Scalar>(config: &TrainConfig<T>) -> Result<Vec<EpochMetrics<T>>> {
    run_with(config, |_| Ok(()))
}

/// [`run`] with a callback invoked after every epoch.
pub fn run_with<T: Scalar>(
    config: &TrainConfig<T>,
    mut on_epoch: impl FnMut(&EpochMetrics<T>) -> Result<()>,
) -> Result<Vec<EpochMetrics<T>>> {
    let mut trainer = Trainer::new(config.clone())?;
    let mut series = Vec::with_capacity(config.n_epochs());
    for _ in 0..config.n_epochs() {
        let outcome = trainer.step_epoch()?;
        on_epoch(&outcome.metrics)?;
        series.push(outcome.metrics);
    }
    Ok(series)
}
