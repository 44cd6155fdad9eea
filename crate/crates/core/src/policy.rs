//! Actor and critic networks.

use rand::Rng;

use crate::autodiff::{Mlp, MlpCache, Tape};
use crate::distributions::{CategoricalDist, GaussianDist, PolicyDist};
use crate::envs::ActionSpace;
use crate::error::{Error, Result};
use crate::objectives::DistVars;
use crate::scalar::Scalar;

/// Output-layer weight scale of a freshly initialized policy.
pub const POLICY_OUTPUT_GAIN: f64 = 0.01;

/// A tanh MLP emitting categorical logits, or a Gaussian mean paired with a
/// state-independent log standard deviation.
///
/// Flat parameters are the network's followed by the log standard deviations.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy<T> {
    net: Mlp<T>,
    log_std: Option<Vec<T>>,
}

impl<T: Scalar> Policy<T> {
    pub fn new<R: Rng + ?Sized>(
        obs_dim: usize,
        space: ActionSpace,
        hidden: &[usize],
        init_log_std: T,
        rng: &mut R,
    ) -> Result<Self> {
        let (out, log_std) = match space {
            ActionSpace::Discrete(n) => (n, None),
            ActionSpace::Continuous(d) => (d, Some(vec![init_log_std; d])),
        };
        let sizes: Vec<usize> = std::iter::once(obs_dim)
            .chain(hidden.iter().copied())
            .chain([out])
            .collect();
        Ok(Self {
            net: Mlp::random(&sizes, T::lit(POLICY_OUTPUT_GAIN), rng)?,
            log_std,
        })
    }

    pub fn from_parts(net: Mlp<T>, log_std: Option<Vec<T>>) -> Result<Self> {
        if let Some(ls) = &log_std {
            if ls.len() != net.output_dim() {
                return Err(Error::invalid_argument("log_std length must match the network output"));
            }
        }
        Ok(Self { net, log_std })
    }

    pub fn net(&self) -> &Mlp<T> {
        &self.net
    }

    pub fn log_std(&self) -> Option<&[T]> {
        self.log_std.as_deref()
    }

    pub fn is_discrete(&self) -> bool {
        self.log_std.is_none()
    }

    pub fn n_params(&self) -> usize {
        self.net.n_params() + self.log_std.as_ref().map_or(0, Vec::len)
    }

    pub fn params(&self) -> Vec<T> {
        let mut p = self.net.params();
        if let Some(ls) = &self.log_std {
            p.extend_from_slice(ls);
        }
        p
    }

    pub fn set_params(&mut self, flat: &[T]) -> Result<()> {
        if flat.len() != self.n_params() {
            return Err(Error::invalid_argument(format!(
                "expected {} policy parameters, got {}",
                self.n_params(),
                flat.len()
            )));
        }
        let (net, rest) = flat.split_at(self.net.n_params());
        self.net.set_params(net)?;
        if let Some(ls) = &mut self.log_std {
            ls.copy_from_slice(rest);
        }
        Ok(())
    }

    fn dist_from_output(&self, out: Vec<T>) -> Result<PolicyDist<T>> {
        Ok(match &self.log_std {
            None => PolicyDist::Categorical(CategoricalDist::new(out)?),
            Some(ls) => PolicyDist::Gaussian(GaussianDist::new(out, ls.clone())?),
        })
    }

    pub fn dist(&self, observation: &[T]) -> Result<PolicyDist<T>> {
        self.dist_from_output(self.net.forward(observation)?)
    }

    /// Forward pass keeping the activations needed by [`Policy::backward`].
    pub fn forward_cached(&self, observation: &[T]) -> Result<(PolicyDist<T>, MlpCache<T>)> {
        let cache = self.net.forward_cached(observation)?;
        Ok((self.dist_from_output(cache.output().to_vec())?, cache))
    }

    /// Places the distribution parameters on `tape` as leaves.
    pub fn head<'t>(&self, tape: &'t Tape<T>, dist: &PolicyDist<T>) -> DistVars<'t, T> {
        DistVars::leaves(tape, dist)
    }

    /// Accumulates into `grad` the parameter gradient given the gradient with
    /// respect to the head variables (logits, or mean then log_std).
    pub fn backward(&self, cache: &MlpCache<T>, head_grad: &[T], grad: &mut [T]) -> Result<()> {
        if grad.len() != self.n_params() {
            return Err(Error::invalid_argument("gradient buffer does not match the policy"));
        }
        let out = self.net.output_dim();
        let expected = out + self.log_std.as_ref().map_or(0, Vec::len);
        if head_grad.len() != expected {
            return Err(Error::invalid_argument(format!(
                "head gradient has length {}, expected {expected}",
                head_grad.len()
            )));
        }
        let (net_grad, std_grad) = grad.split_at_mut(self.net.n_params());
        self.net.backward_cached(cache, &head_grad[..out], net_grad)?;
        for (g, &h) in std_grad.iter_mut().zip(&head_grad[out..]) {
            *g += h;
        }
        Ok(())
    }
}

/// Scalar state-value network.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueNet<T> {
    net: Mlp<T>,
}

impl<T: Scalar> ValueNet<T> {
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, hidden: &[usize], rng: &mut R) -> Result<Self> {
        let sizes: Vec<usize> = std::iter::once(obs_dim)
            .chain(hidden.iter().copied())
            .chain([1])
            .collect();
        Ok(Self {
            net: Mlp::random(&sizes, T::one(), rng)?,
        })
    }

    pub fn net(&self) -> &Mlp<T> {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut Mlp<T> {
        &mut self.net
    }

    pub fn value(&self, observation: &[T]) -> Result<T> {
        Ok(self.net.forward(observation)?[0])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::Action;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn param_roundtrip_and_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut p = Policy::<f64>::new(4, ActionSpace::Continuous(2), &[8], -0.5, &mut rng).unwrap();
        assert_eq!(p.n_params(), 4 * 8 + 8 + 8 * 2 + 2 + 2);
        let mut flat = p.params();
        assert_eq!(&flat[flat.len() - 2..], &[-0.5, -0.5]);
        let last = flat.len() - 1;
        flat[last] = 0.25;
        p.set_params(&flat).unwrap();
        assert_eq!(p.log_std().unwrap(), &[-0.5, 0.25]);
        assert!(p.set_params(&flat[1..]).is_err());
        let d = Policy::<f64>::new(4, ActionSpace::Discrete(3), &[8], 0.0, &mut rng).unwrap();
        assert!(d.is_discrete());
        assert!(matches!(d.dist(&[0.0; 4]).unwrap(), PolicyDist::Categorical(c) if c.n_actions() == 3));
    }

    #[test]
    fn dense_backward_matches_tape() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let policy = Policy::<f64>::new(3, ActionSpace::Continuous(2), &[5, 4], 0.1, &mut rng).unwrap();
        let obs = [0.3, -0.7, 1.1];
        let action = Action::Continuous(vec![0.2, -0.4]);

        let (dist, cache) = policy.forward_cached(&obs).unwrap();
        let tape = Tape::new();
        let head = policy.head(&tape, &dist);
        let y = head.log_prob(&action).unwrap();
        let g = tape.backward(y).unwrap();
        let mut dense = vec![0.0; policy.n_params()];
        policy.backward(&cache, &g.wrt_all(&head.vars()), &mut dense).unwrap();

        let tape = Tape::new();
        let leaves = policy.net().leaves(&tape);
        let mean = policy.net().forward_tape(&leaves, &obs).unwrap();
        let log_std = tape.vars(policy.log_std().unwrap());
        let head = DistVars::Gaussian {
            mean,
            log_std: log_std.clone(),
        };
        let y = head.log_prob(&action).unwrap();
        let g = tape.backward(y).unwrap();
        let mut full = g.wrt_all(&leaves);
        full.extend(g.wrt_all(&log_std));
        for (a, b) in dense.iter().zip(&full) {
            assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()), "{a} vs {b}");
        }
    }
}
