use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use proxlab::envs::{chain_mdp, random_mdp, TabularMdp};
use proxlab::objectives::{l_clip, l_pg, l_rb, l_truly, ObjectiveConfig, Variant};
use proxlab::oracle::{
    categorical_kl_witness, exact_eval, lower_bound_m, outward_push_witness, random_policy, surrogate_l_pg,
    TabularBatchProblem,
};

/// Performance by repeated Bellman backups, normalized by `1 − γ`.
fn iterative_eta(mdp: &TabularMdp<f64>, policy: &[Vec<f64>]) -> f64 {
    let n = mdp.n_states();
    let mut v = vec![0.0; n];
    for _ in 0..5000 {
        v = (0..n)
            .map(|s| {
                (0..mdp.n_actions())
                    .map(|a| {
                        let next: f64 = mdp.transition(s, a).iter().zip(&v).map(|(t, x)| t * x).sum();
                        policy[s][a] * (mdp.reward(s, a) + mdp.gamma() * next)
                    })
                    .sum()
            })
            .collect();
    }
    (1.0 - mdp.gamma()) * mdp.initial().iter().zip(&v).map(|(p, x)| p * x).sum::<f64>()
}

#[test]
fn exact_performance_matches_fixed_point_iteration() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..20 {
        let mdp = random_mdp::<f64, _>(5, 3, 0.9, &mut rng).unwrap();
        let pi = random_policy(5, 3, &mut rng);
        let exact = exact_eval(&mdp, &pi).unwrap().eta;
        assert!((exact - iterative_eta(&mdp, &pi)).abs() < 1e-10);
    }
    let chain = chain_mdp::<f64>(5).unwrap();
    let right = vec![vec![0.0, 1.0]; 5];
    assert!((exact_eval(&chain, &right).unwrap().eta - iterative_eta(&chain, &right)).abs() < 1e-10);
}

/// `η(π) − η(π_old)` equals the advantage of `π_old` averaged under the
/// discounted state distribution of `π`.
#[test]
fn performance_difference_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let mdp = random_mdp::<f64, _>(4, 3, 0.8, &mut rng).unwrap();
        let old = random_policy(4, 3, &mut rng);
        let new = random_policy(4, 3, &mut rng);
        let old_eval = exact_eval(&mdp, &old).unwrap();
        let new_eval = exact_eval(&mdp, &new).unwrap();
        let gain: f64 = new_eval
            .state_dist
            .iter()
            .zip(&new)
            .zip(&old_eval.advantages)
            .map(|((d, p), a)| d * p.iter().zip(a).map(|(x, y)| x * y).sum::<f64>())
            .sum();
        assert!((new_eval.eta - old_eval.eta - gain).abs() < 1e-10);
        assert!((surrogate_l_pg(&old_eval, &old) - old_eval.eta).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn lower_bound_holds(seed in any::<u64>(), n_states in 1usize..=5, n_actions in 2usize..=4, gamma in 0.5f64..0.95) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mdp = random_mdp::<f64, _>(n_states, n_actions, gamma, &mut rng).unwrap();
        let old = random_policy(n_states, n_actions, &mut rng);
        let new = random_policy(n_states, n_actions, &mut rng);
        let eta_new = exact_eval(&mdp, &new).unwrap().eta;
        let bound = lower_bound_m(&mdp, &old, &new).unwrap();
        prop_assert!(eta_new >= bound.m - 1e-9);
        let at_old = lower_bound_m(&mdp, &old, &old).unwrap();
        prop_assert!((at_old.m - exact_eval(&mdp, &old).unwrap().eta).abs() <= 1e-9);
    }

    #[test]
    fn surrogates_stay_below_the_unclipped_objective(r in 0.01f64..3.0, a in -5.0f64..5.0, eps in 0.05f64..0.5, alpha in 0.0f64..10.0, kl in 0.0f64..0.2) {
        let clip = l_clip(r, a, eps);
        prop_assert!(clip <= l_pg(r, a));
        prop_assert!(l_rb(r, a, eps, alpha) <= clip + 1e-12);
        prop_assert!(l_truly(r, a, kl, 0.03, alpha) <= l_pg(r, a));
    }

    #[test]
    fn objectives_agree_across_precisions(r in 0.2f64..2.0, a in -3.0f64..3.0) {
        let d = l_rb(r, a, 0.2, 0.3);
        let f = l_rb(r as f32, a as f32, 0.2, 0.3);
        prop_assert!((d - f as f64).abs() <= 1e-4 * (1.0 + d.abs()));
    }
}

#[test]
fn rollback_is_contained_where_clip_escapes() {
    let problem = TabularBatchProblem::<f64>::two_action();
    let mut rb = ObjectiveConfig::for_variant(Variant::Rb);
    rb.alpha = 1e3;
    let clip = ObjectiveConfig::for_variant(Variant::Clip);
    let rb_dev = problem.maximize(&rb, 20_000).unwrap().max_ratio_deviation();
    let clip_dev = problem.maximize(&clip, 20_000).unwrap().max_ratio_deviation();
    assert!(rb_dev <= 0.2 + 1e-3, "{rb_dev}");
    assert!(clip_dev > 0.2, "{clip_dev}");
}

#[test]
fn unbounded_kl_in_single_precision() {
    let w = categorical_kl_witness(&[1.0f32 / 3.0; 3], 0, 0.2, 10.0).unwrap();
    assert!((w.ratio - 1.0).abs() <= 0.2);
    assert!(w.kl > 10.0);
}

#[test]
fn outward_push_and_rollback_step() {
    let w = outward_push_witness(0.2f64).unwrap();
    let clip = ObjectiveConfig::for_variant(Variant::Clip);
    let rb = ObjectiveConfig::for_variant(Variant::Rb);
    assert!(w.condition > 0.0);
    let before = (w.ratio(0, w.theta0).unwrap() - 1.0).abs();
    let beta = w.beta_bar * 0.5;
    let after_clip = w.distance_after_step(&clip, beta).unwrap();
    assert!(after_clip > before);
    assert!(w.distance_after_step(&rb, beta).unwrap() < after_clip);
}
