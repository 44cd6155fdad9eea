use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Tolerance on row sums of transition tensors and initial distributions.
pub const STOCHASTIC_TOLERANCE: f64 = 1e-9;

/// Explicit finite MDP: `transition[s][a][s']`, `reward[s][a]`, initial
/// distribution `initial[s]` and discount `gamma`.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp<T> {
    n_states: usize,
    n_actions: usize,
    transition: Vec<Vec<Vec<T>>>,
    reward: Vec<Vec<T>>,
    initial: Vec<T>,
    gamma: T,
}

fn is_distribution<T: Scalar>(p: &[T]) -> bool {
    let total: T = p.iter().copied().sum();
    p.iter().all(|&x| x >= T::zero() && x.is_finite()) && (total - T::one()).abs() <= T::lit(STOCHASTIC_TOLERANCE)
}

impl<T: Scalar> TabularMdp<T> {
    pub fn new(transition: Vec<Vec<Vec<T>>>, reward: Vec<Vec<T>>, initial: Vec<T>, gamma: T) -> Result<Self> {
        let n_states = transition.len();
        if n_states == 0 {
            return Err(Error::invalid_argument("MDP needs at least one state"));
        }
        let n_actions = transition[0].len();
        if n_actions == 0 {
            return Err(Error::invalid_argument("MDP needs at least one action"));
        }
        if !(gamma > T::zero() && gamma < T::one()) {
            return Err(Error::invalid_argument(format!(
                "gamma must lie in (0, 1), got {gamma}"
            )));
        }
        if reward.len() != n_states || initial.len() != n_states {
            return Err(Error::invalid_argument(
                "reward and initial distribution must cover every state",
            ));
        }
        for s in 0..n_states {
            if transition[s].len() != n_actions || reward[s].len() != n_actions {
                return Err(Error::invalid_argument(format!(
                    "state {s} has the wrong number of actions"
                )));
            }
            for a in 0..n_actions {
                let row = &transition[s][a];
                if row.len() != n_states || !is_distribution(row) {
                    return Err(Error::invalid_argument(format!(
                        "T[{s}][{a}] is not a distribution over states"
                    )));
                }
                if !reward[s][a].is_finite() {
                    return Err(Error::invalid_argument(format!("c[{s}][{a}] is not finite")));
                }
            }
        }
        if !is_distribution(&initial) {
            return Err(Error::invalid_argument("initial distribution does not sum to 1"));
        }
        Ok(Self {
            n_states,
            n_actions,
            transition,
            reward,
            initial,
            gamma,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn transition(&self, s: usize, a: usize) -> &[T] {
        &self.transition[s][a]
    }

    pub fn reward(&self, s: usize, a: usize) -> T {
        self.reward[s][a]
    }

    pub fn initial(&self) -> &[T] {
        &self.initial
    }

    pub fn gamma(&self) -> T {
        self.gamma
    }
}

pub const CHAIN_LEFT: usize = 0;
pub const CHAIN_RIGHT: usize = 1;

/// `n`-state chain with goal `n − 1`. Right advances with probability 0.9
/// and stays otherwise, left retreats one state. Moving right from the state
/// next to the goal pays 1; the goal sends the agent back to state 0.
pub fn chain_mdp<T: Scalar>(n: usize) -> Result<TabularMdp<T>> {
    if n < 3 {
        return Err(Error::invalid_argument(format!(
            "chain needs at least 3 states, got {n}"
        )));
    }
    let goal = n - 1;
    let mut transition = vec![vec![vec![T::zero(); n]; 2]; n];
    let mut reward = vec![vec![T::zero(); 2]; n];
    for s in 0..n {
        if s == goal {
            transition[s][CHAIN_LEFT][0] = T::one();
            transition[s][CHAIN_RIGHT][0] = T::one();
            continue;
        }
        transition[s][CHAIN_LEFT][s.saturating_sub(1)] = T::one();
        transition[s][CHAIN_RIGHT][s + 1] = T::lit(0.9);
        transition[s][CHAIN_RIGHT][s] = T::lit(0.1);
    }
    reward[goal - 1][CHAIN_RIGHT] = T::one();
    let mut initial = vec![T::zero(); n];
    initial[0] = T::one();
    TabularMdp::new(transition, reward, initial, T::lit(0.9))
}

/// Random MDP with uniform-then-normalized transition rows, rewards in
/// `[−1, 1]` and a random initial distribution.
pub fn random_mdp<T: Scalar, R: Rng + ?Sized>(
    n_states: usize,
    n_actions: usize,
    gamma: T,
    rng: &mut R,
) -> Result<TabularMdp<T>> {
    if n_states == 0 || n_actions == 0 {
        return Err(Error::invalid_argument("random MDP needs states and actions"));
    }
    let draw_dist = |rng: &mut R| -> Vec<T> {
        let raw: Vec<f64> = (0..n_states).map(|_| rng.random_range(0.01..1.0)).collect();
        let total: f64 = raw.iter().sum();
        raw.iter().map(|x| T::lit(x / total)).collect()
    };
    let transition = (0..n_states)
        .map(|_| (0..n_actions).map(|_| draw_dist(rng)).collect())
        .collect();
    let reward = (0..n_states)
        .map(|_| (0..n_actions).map(|_| T::lit(rng.random_range(-1.0..1.0))).collect())
        .collect();
    let initial = draw_dist(rng);
    TabularMdp::new(transition, reward, initial, gamma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn chain_construction() {
        let m = chain_mdp::<f64>(3).unwrap();
        assert_eq!(m.transition(0, CHAIN_RIGHT)[1], 0.9);
        assert_eq!(m.transition(0, CHAIN_RIGHT)[0], 0.1);
        assert_eq!(m.reward(1, CHAIN_RIGHT), 1.0);
        assert_eq!(m.reward(0, CHAIN_RIGHT), 0.0);
        assert_eq!(m.reward(1, CHAIN_LEFT), 0.0);
        assert_eq!(m.initial(), &[1.0, 0.0, 0.0]);
        assert_eq!(m.gamma(), 0.9);
        assert!(chain_mdp::<f64>(2).is_err());
    }

    #[test]
    fn random_mdps_are_stochastic() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let m = random_mdp::<f64, _>(5, 3, 0.9, &mut rng).unwrap();
            for s in 0..5 {
                for a in 0..3 {
                    assert!((m.transition(s, a).iter().sum::<f64>() - 1.0).abs() < 1e-9);
                }
            }
            assert!((m.initial().iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_invalid_tensors() {
        let t = vec![vec![vec![0.5, 0.4]], vec![vec![0.0, 1.0]]];
        assert!(TabularMdp::new(t, vec![vec![0.0], vec![0.0]], vec![1.0, 0.0], 0.9).is_err());
        let t = vec![vec![vec![1.0]]];
        assert!(TabularMdp::new(t.clone(), vec![vec![0.0]], vec![1.0], 1.0).is_err());
        assert!(TabularMdp::new(t, vec![vec![f64::NAN]], vec![1.0], 0.5).is_err());
    }
}
