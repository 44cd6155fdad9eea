//! Exact dynamic programming on tabular MDPs and constructive checks of the
//! clipping and trust-region results.

mod containment;
mod exact;
mod monotonic;
mod witness;

pub use containment::{AscentResult, TabularBatchProblem};
pub use exact::{
    bellman_residual, check_policy, exact_eval, lower_bound_m, max_kl, penalty_constant, solve_linear, surrogate_l_pg,
    ExactEval, LowerBound, POLICY_TOLERANCE,
};
pub use monotonic::{monotonic_improvement_check, random_policy, CheckStatus, MonotonicOptions, MonotonicOutcome};
pub use witness::{
    categorical_kl_witness, gaussian_kl_witness, outward_push_witness, CategoricalWitness, GaussianWitness,
    OutwardPushWitness,
};
