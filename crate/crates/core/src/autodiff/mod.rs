//! Scalar reverse-mode differentiation.

mod gradcheck;
mod mlp;
mod tape;

pub use gradcheck::{finite_diff_check, GradCheck, DEFAULT_STEP};
pub use mlp::{Dense, Mlp, MlpCache};
pub use tape::{sum, Gradients, Tape, Var};
