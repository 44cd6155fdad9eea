use super::tape::{Tape, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Central-difference step used when callers have no better choice.
pub const DEFAULT_STEP: f64 = 1e-5;

/// Outcome of [`finite_diff_check`].
#[derive(Debug, Clone)]
pub struct GradCheck<T> {
    pub analytic: Vec<T>,
    pub numeric: Vec<T>,
    /// `max_i |analytic_i − numeric_i| / max(1, |analytic_i|)`.
    pub max_rel_error: T,
}

/// Compares the tape gradient of `f` at `point` with central differences of step `h`.
pub fn finite_diff_check<T, F>(f: F, point: &[T], h: T) -> Result<GradCheck<T>>
where
    T: Scalar,
    F: for<'t> Fn(&'t Tape<T>, &[Var<'t, T>]) -> Result<Var<'t, T>>,
{
    if h.is_nan() || h <= T::zero() {
        return Err(Error::invalid_argument("finite-difference step must be positive"));
    }
    let eval = |x: &[T]| -> Result<T> {
        let tape = Tape::with_capacity(256);
        let vars = tape.vars(x);
        let y = f(&tape, &vars)?.value();
        if y.is_finite() {
            Ok(y)
        } else {
            Err(Error::invalid_state(format!(
                "objective is non-finite ({y}) near the check point"
            )))
        }
    };

    let tape = Tape::with_capacity(256);
    let vars = tape.vars(point);
    let root = f(&tape, &vars)?;
    if !root.value().is_finite() {
        return Err(Error::invalid_state("objective is non-finite at the check point"));
    }
    let analytic = tape.backward(root)?.wrt_all(&vars);

    let two_h = h + h;
    let mut shifted = point.to_vec();
    let mut numeric = Vec::with_capacity(point.len());
    let mut max_rel_error = T::zero();
    for i in 0..point.len() {
        shifted[i] = point[i] + h;
        let up = eval(&shifted)?;
        shifted[i] = point[i] - h;
        let down = eval(&shifted)?;
        shifted[i] = point[i];
        let fd = (up - down) / two_h;
        let err = (analytic[i] - fd).abs() / analytic[i].abs().max(T::one());
        max_rel_error = max_rel_error.max(err);
        numeric.push(fd);
    }
    Ok(GradCheck {
        analytic,
        numeric,
        max_rel_error,
    })
}
