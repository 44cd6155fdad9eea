//! Toy environments implemented from scratch.
//!
//! [`Env`] wraps each environment together with its own seeded generator so
//! that a `(kind, seed, action sequence)` triple fixes every observation.

mod balance;
mod point_mass;
mod tabular;

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use balance::{Balance, Transition, BALANCE_MAX_STEPS};
pub use point_mass::{PointMass, POINT_MASS_HORIZON};
pub use tabular::{chain_mdp, random_mdp, TabularMdp, CHAIN_LEFT, CHAIN_RIGHT, STOCHASTIC_TOLERANCE};

use crate::distributions::{sample_categorical, Action, PolicyDist};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Episode length of the steppable chain.
pub const CHAIN_HORIZON: usize = 50;
/// Number of states of the steppable chain.
pub const CHAIN_STATES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvKind {
    Balance,
    PointMass,
    Chain,
}

impl EnvKind {
    pub fn name(self) -> &'static str {
        match self {
            EnvKind::Balance => "balance",
            EnvKind::PointMass => "point_mass",
            EnvKind::Chain => "chain",
        }
    }
}

impl fmt::Display for EnvKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EnvKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "balance" => Ok(EnvKind::Balance),
            "point_mass" => Ok(EnvKind::PointMass),
            "chain" => Ok(EnvKind::Chain),
            other => Err(Error::invalid_argument(format!(
                "unknown environment {other:?}, expected balance, point_mass or chain"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActionSpace {
    Discrete(usize),
    Continuous(usize),
}

/// A tabular MDP stepped by sampling, observed as a one-hot state vector.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularEnv<T> {
    mdp: TabularMdp<T>,
    horizon: usize,
    state: usize,
    steps: usize,
    done: bool,
}

impl<T: Scalar> TabularEnv<T> {
    pub fn new(mdp: TabularMdp<T>, horizon: usize) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::invalid_argument("horizon must be positive"));
        }
        Ok(Self {
            mdp,
            horizon,
            state: 0,
            steps: 0,
            done: false,
        })
    }

    pub fn mdp(&self) -> &TabularMdp<T> {
        &self.mdp
    }

    pub fn state(&self) -> usize {
        self.state
    }

    pub fn one_hot(&self, s: usize) -> Vec<T> {
        let mut v = vec![T::zero(); self.mdp.n_states()];
        v[s] = T::one();
        v
    }

    pub fn reset<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Vec<T> {
        self.state = sample_categorical(self.mdp.initial(), rng);
        self.steps = 0;
        self.done = false;
        self.one_hot(self.state)
    }

    pub fn step<R: Rng + ?Sized>(&mut self, action: usize, rng: &mut R) -> Result<Transition<T>> {
        if self.done {
            return Err(Error::invalid_state("tabular episode is over; reset first"));
        }
        if action >= self.mdp.n_actions() {
            return Err(Error::invalid_argument(format!("action {action} out of range")));
        }
        let reward = self.mdp.reward(self.state, action);
        self.state = sample_categorical(self.mdp.transition(self.state, action), rng);
        self.steps += 1;
        self.done = self.steps >= self.horizon;
        Ok(Transition {
            observation: self.one_hot(self.state),
            reward,
            done: self.done,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Inner<T> {
    Balance(Balance<T>),
    PointMass(PointMass<T>),
    Tabular(TabularEnv<T>),
}

/// An environment instance with its own generator.
#[derive(Debug, Clone)]
pub struct Env<T> {
    inner: Inner<T>,
    rng: ChaCha8Rng,
}

impl<T: Scalar> Env<T> {
    pub fn new(kind: EnvKind, seed: u64) -> Result<Self> {
        let inner = match kind {
            EnvKind::Balance => Inner::Balance(Balance::new()),
            EnvKind::PointMass => Inner::PointMass(PointMass::new()),
            EnvKind::Chain => Inner::Tabular(TabularEnv::new(chain_mdp(CHAIN_STATES)?, CHAIN_HORIZON)?),
        };
        Ok(Self {
            inner,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn tabular(env: TabularEnv<T>, seed: u64) -> Self {
        Self {
            inner: Inner::Tabular(env),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn kind(&self) -> Option<EnvKind> {
        match &self.inner {
            Inner::Balance(_) => Some(EnvKind::Balance),
            Inner::PointMass(_) => Some(EnvKind::PointMass),
            Inner::Tabular(_) => Some(EnvKind::Chain),
        }
    }

    pub fn observation_dim(&self) -> usize {
        match &self.inner {
            Inner::Balance(_) | Inner::PointMass(_) => 4,
            Inner::Tabular(t) => t.mdp().n_states(),
        }
    }

    pub fn action_space(&self) -> ActionSpace {
        match &self.inner {
            Inner::Balance(_) => ActionSpace::Discrete(2),
            Inner::PointMass(_) => ActionSpace::Continuous(2),
            Inner::Tabular(t) => ActionSpace::Discrete(t.mdp().n_actions()),
        }
    }

    pub fn as_tabular(&self) -> Option<&TabularEnv<T>> {
        match &self.inner {
            Inner::Tabular(t) => Some(t),
            _ => None,
        }
    }

    pub fn reset(&mut self) -> Vec<T> {
        match &mut self.inner {
            Inner::Balance(e) => e.reset(&mut self.rng),
            Inner::PointMass(e) => e.reset(&mut self.rng),
            Inner::Tabular(e) => e.reset(&mut self.rng),
        }
    }

    pub fn step(&mut self, action: &Action<T>) -> Result<Transition<T>> {
        match (&mut self.inner, action) {
            (Inner::Balance(e), Action::Discrete(a)) => e.step(*a),
            (Inner::PointMass(e), Action::Continuous(a)) => e.step(a),
            (Inner::Tabular(e), Action::Discrete(a)) => e.step(*a, &mut self.rng),
            _ => Err(Error::invalid_argument("action kind does not match the environment")),
        }
    }
}

/// Row-stochastic table `π(a|s)` of a categorical policy on a tabular
/// environment, evaluated at each one-hot state observation.
pub fn enumerate_tabular_policy<T, F>(env: &Env<T>, mut dist_at: F) -> Result<Vec<Vec<T>>>
where
    T: Scalar,
    F: FnMut(&[T]) -> Result<PolicyDist<T>>,
{
    let tab = env
        .as_tabular()
        .ok_or_else(|| Error::invalid_argument("policy enumeration needs a tabular environment"))?;
    (0..tab.mdp().n_states())
        .map(|s| match dist_at(&tab.one_hot(s))? {
            PolicyDist::Categorical(c) => Ok(c.probs()),
            PolicyDist::Gaussian(_) => Err(Error::invalid_argument("tabular policies must be categorical")),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::CategoricalDist;

    fn logits_policy(table: Vec<Vec<f64>>) -> impl FnMut(&[f64]) -> Result<PolicyDist<f64>> {
        move |obs| {
            let s = obs.iter().position(|&x| x == 1.0).unwrap();
            Ok(PolicyDist::Categorical(CategoricalDist::new(table[s].clone())?))
        }
    }

    #[test]
    fn enumerate_uniform_and_one_hot() {
        let env = Env::<f64>::new(EnvKind::Chain, 0).unwrap();
        let uniform = enumerate_tabular_policy(&env, logits_policy(vec![vec![0.0, 0.0]; CHAIN_STATES])).unwrap();
        assert!(uniform.iter().all(|row| row == &vec![0.5, 0.5]));
        let right = enumerate_tabular_policy(&env, logits_policy(vec![vec![-800.0, 0.0]; CHAIN_STATES])).unwrap();
        assert!(right.iter().all(|row| row == &vec![0.0, 1.0]));
    }

    #[test]
    fn enumerate_softmax_by_hand() {
        let mdp = TabularMdp::new(
            vec![
                vec![vec![1.0, 0.0], vec![0.0, 1.0]],
                vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            ],
            vec![vec![0.0, 0.0], vec![0.0, 0.0]],
            vec![1.0, 0.0],
            0.9,
        )
        .unwrap();
        let env = Env::tabular(TabularEnv::new(mdp, 10).unwrap(), 0);
        let table =
            enumerate_tabular_policy(&env, logits_policy(vec![vec![1.0, 0.0], vec![0.0, 2.0f64.ln()]])).unwrap();
        let e = std::f64::consts::E;
        assert!((table[0][0] - e / (e + 1.0)).abs() < 1e-15);
        assert!((table[1][1] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn enumerate_rejects_non_tabular() {
        let env = Env::<f64>::new(EnvKind::Balance, 0).unwrap();
        assert!(enumerate_tabular_policy(&env, logits_policy(vec![])).is_err());
    }

    #[test]
    fn env_determinism_and_kinds() {
        for kind in [EnvKind::Balance, EnvKind::PointMass, EnvKind::Chain] {
            let run = || {
                let mut env = Env::<f64>::new(kind, 9).unwrap();
                let mut obs = vec![env.reset()];
                for k in 0..30usize {
                    let action = match env.action_space() {
                        ActionSpace::Discrete(_) => Action::Discrete(k % 2),
                        ActionSpace::Continuous(d) => Action::Continuous(vec![0.3; d]),
                    };
                    let t = env.step(&action).unwrap();
                    obs.push(t.observation);
                    if t.done {
                        obs.push(env.reset());
                    }
                }
                obs
            };
            assert_eq!(run(), run());
            assert_eq!(kind.name().parse::<EnvKind>().unwrap(), kind);
        }
        let mut env = Env::<f64>::new(EnvKind::PointMass, 0).unwrap();
        env.reset();
        assert!(env.step(&Action::Discrete(0)).is_err());
    }
}
