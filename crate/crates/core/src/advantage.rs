//! Generalized advantage estimation.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// One environment's trajectory segment.
///
/// `bootstrap_value` is the value estimate of the state reached after the
/// last step; it is ignored when that step is terminal.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout<T> {
    pub rewards: Vec<T>,
    pub values: Vec<T>,
    pub dones: Vec<bool>,
    pub bootstrap_value: T,
}

impl<T: Scalar> Rollout<T> {
    pub fn new(rewards: Vec<T>, values: Vec<T>, dones: Vec<bool>, bootstrap_value: T) -> Result<Self> {
        if rewards.len() != values.len() || rewards.len() != dones.len() {
            return Err(Error::invalid_argument(format!(
                "rollout arrays differ in length: {} rewards, {} values, {} dones",
                rewards.len(),
                values.len(),
                dones.len()
            )));
        }
        if !values.iter().all(|v| v.is_finite()) || !bootstrap_value.is_finite() {
            return Err(Error::invalid_argument("rollout value estimates must be finite"));
        }
        Ok(Self {
            rewards,
            values,
            dones,
            bootstrap_value,
        })
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }
}

pub fn compute_gae<T: Scalar>(rollout: &Rollout<T>, gamma: T, lambda: T) -> Result<Vec<T>> {
    if !(gamma > T::zero() && gamma <= T::one()) {
        return Err(Error::invalid_argument(format!(
            "gamma must lie in (0, 1], got {gamma}"
        )));
    }
    if !(lambda >= T::zero() && lambda <= T::one()) {
        return Err(Error::invalid_argument(format!(
            "lambda must lie in [0, 1], got {lambda}"
        )));
    }
    let n = rollout.len();
    let mut advantages = vec![T::zero(); n];
    let mut next_value = rollout.bootstrap_value;
    let mut next_advantage = T::zero();
    for t in (0..n).rev() {
        let live = if rollout.dones[t] { T::zero() } else { T::one() };
        let td = rollout.rewards[t] + gamma * next_value * live - rollout.values[t];
        next_advantage = td + gamma * lambda * live * next_advantage;
        advantages[t] = next_advantage;
        next_value = rollout.values[t];
    }
    Ok(advantages)
}

/// Value regression targets `A_t + V_t`.
pub fn compute_returns<T: Scalar>(advantages: &[T], values: &[T]) -> Result<Vec<T>> {
    if advantages.len() != values.len() {
        return Err(Error::invalid_argument(format!(
            "{} advantages for {} values",
            advantages.len(),
            values.len()
        )));
    }
    Ok(advantages.iter().zip(values).map(|(&a, &v)| a + v).collect())
}
