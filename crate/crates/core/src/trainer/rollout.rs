use rand::Rng;

use crate::advantage::{compute_gae, compute_returns, Rollout};
use crate::envs::Env;
use crate::error::{Error, Result};
use crate::objectives::{Sample, SampleBatch};
use crate::policy::{Policy, ValueNet};
use crate::scalar::Scalar;

/// An environment together with its current observation and the return of
/// the episode in progress.
#[derive(Debug, Clone)]
pub struct EnvSlot<T> {
    pub env: Env<T>,
    pub observation: Vec<T>,
    pub episode_return: T,
}

impl<T: Scalar> EnvSlot<T> {
    pub fn new(mut env: Env<T>) -> Self {
        let observation = env.reset();
        Self {
            env,
            observation,
            episode_return: T::zero(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Collected<T> {
    pub batch: SampleBatch<T>,
    /// One segment per environment, in batch order.
    pub rollouts: Vec<Rollout<T>>,
    /// Returns of the episodes that finished during collection.
    pub finished_returns: Vec<T>,
}

/// Steps every environment `n_steps / envs.len()` times under `policy` and
/// assembles the batch with GAE advantages and value targets.
///
/// Samples are grouped per environment, each group in time order.
pub fn collect_rollout<T: Scalar, R: Rng + ?Sized>(
    policy: &Policy<T>,
    value: &ValueNet<T>,
    envs: &mut [EnvSlot<T>],
    n_steps: usize,
    gamma: T,
    lambda: T,
    rng: &mut R,
) -> Result<Collected<T>> {
    if envs.is_empty() || n_steps % envs.len() != 0 || n_steps == 0 {
        return Err(Error::invalid_argument(format!(
            "{n_steps} steps cannot be split evenly over {} environments",
            envs.len()
        )));
    }
    let per_env = n_steps / envs.len();
    let mut states: Vec<Vec<Vec<T>>> = vec![Vec::with_capacity(per_env); envs.len()];
    let mut actions = vec![Vec::with_capacity(per_env); envs.len()];
    let mut dists = vec![Vec::with_capacity(per_env); envs.len()];
    let mut rewards = vec![Vec::with_capacity(per_env); envs.len()];
    let mut values = vec![Vec::with_capacity(per_env); envs.len()];
    let mut dones = vec![Vec::with_capacity(per_env); envs.len()];
    let mut finished_returns = Vec::new();

    for _ in 0..per_env {
        for (k, slot) in envs.iter_mut().enumerate() {
            let dist = policy.dist(&slot.observation)?;
            let action = dist.sample(rng);
            let v = value.value(&slot.observation)?;
            let t = slot.env.step(&action)?;
            slot.episode_return += t.reward;
            states[k].push(std::mem::replace(&mut slot.observation, t.observation));
            actions[k].push(action);
            dists[k].push(dist);
            rewards[k].push(t.reward);
            values[k].push(v);
            dones[k].push(t.done);
            if t.done {
                finished_returns.push(slot.episode_return);
                slot.episode_return = T::zero();
                slot.observation = slot.env.reset();
            }
        }
    }

    let mut samples = Vec::with_capacity(n_steps);
    let mut rollouts = Vec::with_capacity(envs.len());
    for (k, slot) in envs.iter().enumerate() {
        let bootstrap = value.value(&slot.observation)?;
        let rollout = Rollout::new(
            std::mem::take(&mut rewards[k]),
            std::mem::take(&mut values[k]),
            std::mem::take(&mut dones[k]),
            bootstrap,
        )?;
        let adv = compute_gae(&rollout, gamma, lambda)?;
        let ret = compute_returns(&adv, &rollout.values)?;
        let parts = std::mem::take(&mut states[k])
            .into_iter()
            .zip(std::mem::take(&mut actions[k]))
            .zip(std::mem::take(&mut dists[k]));
        for (((state, action), dist), (&a, &r)) in parts.zip(adv.iter().zip(&ret)) {
            samples.push(Sample::from_dist(state, action, a, r, dist)?);
        }
        rollouts.push(rollout);
    }
    Ok(Collected {
        batch: SampleBatch::new(samples)?,
        rollouts,
        finished_returns,
    })
}
