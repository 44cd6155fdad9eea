use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

const GRAVITY: f64 = 9.8;
const CART_MASS: f64 = 1.0;
const POLE_MASS: f64 = 0.1;
const TOTAL_MASS: f64 = CART_MASS + POLE_MASS;
/// Half the pole length.
const POLE_LENGTH: f64 = 0.5;
const POLE_MASS_LENGTH: f64 = POLE_MASS * POLE_LENGTH;
const FORCE: f64 = 10.0;
const TAU: f64 = 0.02;
const ANGLE_LIMIT: f64 = 12.0 * std::f64::consts::PI / 180.0;
const POSITION_LIMIT: f64 = 2.4;

pub const BALANCE_MAX_STEPS: usize = 500;

/// Cart-pole: push left (action 0) or right (action 1), +1 reward per step.
#[derive(Debug, Clone, PartialEq)]
pub struct Balance<T> {
    /// Position, velocity, angle, angular velocity.
    state: [T; 4],
    steps: usize,
    done: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition<T> {
    pub observation: Vec<T>,
    pub reward: T,
    pub done: bool,
}

impl<T: Scalar> Balance<T> {
    pub fn new() -> Self {
        Self {
            state: [T::zero(); 4],
            steps: 0,
            done: false,
        }
    }

    /// Starts an episode with every state coordinate uniform in `[−0.05, 0.05]`.
    pub fn reset<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Vec<T> {
        for x in &mut self.state {
            *x = T::lit(rng.random_range(-0.05..0.05));
        }
        self.steps = 0;
        self.done = false;
        self.observation()
    }

    /// Starts an episode from an explicit state.
    pub fn reset_to(&mut self, state: [T; 4]) -> Vec<T> {
        self.state = state;
        self.steps = 0;
        self.done = false;
        self.observation()
    }

    pub fn observation(&self) -> Vec<T> {
        self.state.to_vec()
    }

    pub fn step(&mut self, action: usize) -> Result<Transition<T>> {
        if self.done {
            return Err(Error::invalid_state("balance episode is over; reset first"));
        }
        if action > 1 {
            return Err(Error::invalid_argument(format!(
                "balance action must be 0 or 1, got {action}"
            )));
        }
        let [x, x_dot, theta, theta_dot] = self.state;
        let force = T::lit(if action == 1 { FORCE } else { -FORCE });
        let (sin, cos) = (theta.sin(), theta.cos());
        let pml = T::lit(POLE_MASS_LENGTH);
        let total = T::lit(TOTAL_MASS);
        let temp = (force + pml * theta_dot * theta_dot * sin) / total;
        let theta_acc = (T::lit(GRAVITY) * sin - cos * temp)
            / (T::lit(POLE_LENGTH) * (T::lit(4.0 / 3.0) - T::lit(POLE_MASS) * cos * cos / total));
        let x_acc = temp - pml * theta_acc * cos / total;
        let tau = T::lit(TAU);
        self.state = [
            x + tau * x_dot,
            x_dot + tau * x_acc,
            theta + tau * theta_dot,
            theta_dot + tau * theta_acc,
        ];
        self.steps += 1;
        let fell = self.state[0].abs() > T::lit(POSITION_LIMIT) || self.state[2].abs() > T::lit(ANGLE_LIMIT);
        self.done = fell || self.steps >= BALANCE_MAX_STEPS;
        Ok(Transition {
            observation: self.observation(),
            reward: T::one(),
            done: self.done,
        })
    }
}

impl<T: Scalar> Default for Balance<T> {
    fn default() -> Self {
        Self::new()
    }
}
