use rand::Rng;

use super::balance::Transition;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const POINT_MASS_HORIZON: usize = 200;
const DT: f64 = 0.1;

/// Planar point mass pushed by a force in `[−1, 1]²`; the goal is the origin.
#[derive(Debug, Clone, PartialEq)]
pub struct PointMass<T> {
    position: [T; 2],
    velocity: [T; 2],
    steps: usize,
    done: bool,
}

impl<T: Scalar> PointMass<T> {
    pub fn new() -> Self {
        Self {
            position: [T::zero(); 2],
            velocity: [T::zero(); 2],
            steps: 0,
            done: false,
        }
    }

    /// Random start position in `[−1, 1]²`, at rest.
    pub fn reset<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Vec<T> {
        let p = [T::lit(rng.random_range(-1.0..1.0)), T::lit(rng.random_range(-1.0..1.0))];
        self.reset_to(p, [T::zero(); 2])
    }

    pub fn reset_to(&mut self, position: [T; 2], velocity: [T; 2]) -> Vec<T> {
        self.position = position;
        self.velocity = velocity;
        self.steps = 0;
        self.done = false;
        self.observation()
    }

    pub fn observation(&self) -> Vec<T> {
        vec![self.position[0], self.position[1], self.velocity[0], self.velocity[1]]
    }

    pub fn step(&mut self, action: &[T]) -> Result<Transition<T>> {
        if self.done {
            return Err(Error::invalid_state("point-mass episode is over; reset first"));
        }
        if action.len() != 2 || !action.iter().all(|a| a.is_finite()) {
            return Err(Error::invalid_argument("point-mass action must be two finite numbers"));
        }
        let dt = T::lit(DT);
        let mut effort = T::zero();
        for i in 0..2 {
            let f = action[i].max(-T::one()).min(T::one());
            effort += f * f;
            self.velocity[i] += dt * f;
            self.position[i] += dt * self.velocity[i];
        }
        let distance = self.position[0].hypot(self.position[1]);
        self.steps += 1;
        self.done = self.steps >= POINT_MASS_HORIZON;
        Ok(Transition {
            observation: self.observation(),
            reward: -distance - T::lit(0.01) * effort,
            done: self.done,
        })
    }
}

impl<T: Scalar> Default for PointMass<T> {
    fn default() -> Self {
        Self::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn origin_at_rest_has_zero_reward() {
        let mut env = PointMass::<f64>::new();
        env.reset_to([0.0; 2], [0.0; 2]);
        let t = env.step(&[0.0, 0.0]).unwrap();
        assert_eq!(t.reward, 0.0);
        assert_eq!(t.observation, vec![0.0; 4]);
    }

    #[test]
    fn action_is_clipped() {
        let mut a = PointMass::<f64>::new();
        let mut b = PointMass::<f64>::new();
        a.reset_to([0.5, 0.5], [0.0; 2]);
        b.reset_to([0.5, 0.5], [0.0; 2]);
        let ta = a.step(&[5.0, -7.0]).unwrap();
        let tb = b.step(&[1.0, -1.0]).unwrap();
        assert_eq!(ta, tb);
        assert!((ta.reward - (-(0.51f64.hypot(0.49)) - 0.02)).abs() < 1e-12);
    }

    #[test]
    fn horizon_ends_episode() {
        let mut env = PointMass::<f64>::new();
        env.reset_to([0.2, 0.0], [0.0; 2]);
        for k in 1..=POINT_MASS_HORIZON {
            let t = env.step(&[0.0, 0.0]).unwrap();
            assert_eq!(t.done, k == POINT_MASS_HORIZON);
        }
        assert!(matches!(env.step(&[0.0, 0.0]), Err(Error::InvalidState(_))));
    }
}
