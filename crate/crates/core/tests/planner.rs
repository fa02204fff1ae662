mod common;

use std::time::Duration;

use approx::assert_abs_diff_eq;
use common::{brute_force_q, fixture, random_model, random_rewards, random_simplex, toy_domain, ToyShape};
use mbrl_dialogue::planner::CanonicalObs;
use mbrl_dialogue::{BeliefState, DirichletParams, ModelType, PlanConfig, Planner, TransitionModel};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn cfg(horizon: usize, gamma: f64, k: usize) -> PlanConfig {
    PlanConfig {
        horizon,
        gamma,
        obs_top_k: k,
        ..PlanConfig::default()
    }
}

fn desk_belief(top: f64) -> BeliefState {
    let d = fixture("desk");
    // `top` on Left, the rest spread evenly, object not held.
    let rest = (1.0 - top) / 4.0;
    let mut probs = vec![rest; 5];
    probs[0] = top;
    probs.extend([0.0; 5]);
    BeliefState::from_probs(d.vocab(), probs).unwrap()
}

#[test]
fn clarification_threshold_at_one_step() {
    let d = fixture("desk");
    let v = d.vocab();
    let m = TransitionModel::from_domain(&d, ModelType::Multinomial).unwrap();
    let c = cfg(1, 0.95, 3);
    let p = Planner::new(&d, m.tables(), &c);
    // Execute is worth 12p − 6 and AskRepeat −1, so the switch is at 5/12.
    assert_eq!(v.actions[p.plan(&desk_belief(0.40)).action].label, "AskRepeat");
    assert_eq!(v.actions[p.plan(&desk_belief(0.43)).action].label, "Execute(Left)");
    let q = p.plan(&desk_belief(5.0 / 12.0)).q_values;
    assert_abs_diff_eq!(q[0], -1.0, epsilon = 1e-12);
    assert_abs_diff_eq!(q[v.action_index("AskRepeat").unwrap()], -1.0, epsilon = 1e-12);
}

#[test]
fn asking_has_positive_information_value() {
    let d = fixture("desk");
    let v = d.vocab();
    let m = TransitionModel::from_domain(&d, ModelType::Rules).unwrap();
    let ask = v.action_index("AskRepeat").unwrap();
    let b = desk_belief(0.3);
    // The intention persists under AskRepeat, so without observing anything
    // the best follow-up is worth the best one-step reward.
    let myopic = (0..v.n_actions()).map(|a| d.belief_reward(&b, a)).fold(f64::NEG_INFINITY, f64::max);
    let c = cfg(2, 0.95, v.n_acts() + 1);
    let q = Planner::new(&d, m.tables(), &c).q_value(&b, ask, 2);
    assert!(q > -1.0 + 0.95 * myopic + 0.5, "{q} vs {}", -1.0 + 0.95 * myopic);
    let r = Planner::new(&d, m.tables(), &c).plan(&desk_belief(0.95));
    assert_eq!(v.actions[r.action].label, "Execute(Left)");
}

#[test]
fn ties_go_to_the_first_action() {
    let shape = ToyShape {
        ni: 2,
        na: 3,
        nu: 2,
        contexts: vec![],
    };
    let d = toy_domain(&shape, &[vec![1.0, -1.0], vec![1.0, -1.0], vec![1.0, -1.0]]);
    let m = TransitionModel::from_domain(&d, ModelType::Multinomial).unwrap();
    let b = BeliefState::uniform(d.vocab());
    for h in 1..=3 {
        let c = cfg(h, 0.9, 3);
        assert_eq!(Planner::new(&d, m.tables(), &c).plan(&b).action, 0);
    }
}

/// One action, four acts, every act row (0.5, 0.3, 0.1, 0.1), noiseless channel.
fn four_act_model() -> (mbrl_dialogue::DomainSpec, TransitionModel) {
    let shape = ToyShape {
        ni: 2,
        na: 1,
        nu: 4,
        contexts: vec![],
    };
    let d = toy_domain(&shape, &[vec![0.0, 0.0]]);
    let mut m = TransitionModel::from_domain(&d, ModelType::Multinomial).unwrap();
    let updates = (0..m.parameter_count())
        .filter(|&k| m.param(k).len() == 4)
        .map(|k| (k, DirichletParams::new(vec![5.0, 3.0, 1.0, 1.0], m.param(k).labels().to_vec()).unwrap()))
        .collect();
    m.set_params(updates).unwrap();
    (d, m)
}

#[test]
fn top_k_renormalizes_the_kept_observations() {
    let (d, m) = four_act_model();
    let b = BeliefState::uniform(d.vocab());
    let c = PlanConfig {
        planner_noise: 0.0,
        ..cfg(2, 0.9, 3)
    };
    let p = Planner::new(&d, m.tables(), &c);

    let kept = p.top_k_observations(&b, 0, 3);
    let labels: Vec<CanonicalObs> = kept.iter().map(|k| k.0).collect();
    assert_eq!(labels, [CanonicalObs::Act(0), CanonicalObs::Act(1), CanonicalObs::Act(2)]);
    for (k, want) in kept.iter().zip([5.0 / 9.0, 3.0 / 9.0, 1.0 / 9.0]) {
        assert_abs_diff_eq!(k.1, want, epsilon = 1e-12);
    }

    let one = p.top_k_observations(&b, 0, 1);
    assert_eq!(one.len(), 1);
    assert_eq!(one[0].1, 1.0);

    // Zero-probability observations (the empty list here) are never kept.
    let all = p.top_k_observations(&b, 0, 10);
    assert_eq!(all.len(), 4);
    assert_abs_diff_eq!(all.iter().map(|k| k.1).sum::<f64>(), 1.0, epsilon = 1e-12);
}

#[test]
fn full_observation_set_with_noise() {
    let (d, m) = four_act_model();
    let b = BeliefState::uniform(d.vocab());
    let c = cfg(2, 0.9, 5);
    let p = Planner::new(&d, m.tables(), &c);
    let all = p.top_k_observations(&b, 0, 5);
    assert_eq!(all.len(), 5);
    // 0.9·0.5 + 0.025·0.5 on the first act, 0.1/4 on the empty list.
    assert_abs_diff_eq!(all[0].1, 0.9 * 0.5 + 0.025 * 0.5, epsilon = 1e-12);
    assert_eq!(all[4].0, CanonicalObs::Empty);
    assert_abs_diff_eq!(all[4].1, 0.025, epsilon = 1e-12);
}

#[test]
fn deadline_falls_back_to_the_deepest_finished_level() {
    let d = fixture("robot");
    let m = TransitionModel::from_domain(&d, ModelType::Rules).unwrap();
    let c = PlanConfig {
        deadline: Some(Duration::ZERO),
        ..cfg(3, 0.95, 3)
    };
    let r = Planner::new(&d, m.tables(), &c).plan(&BeliefState::uniform(d.vocab()));
    assert_eq!(r.depth, 1);
    assert!(r.truncated);
    let p = Planner::new(&d, m.tables(), &c);
    for (a, q) in r.q_values.iter().enumerate() {
        assert_abs_diff_eq!(*q, p.q_value(&BeliefState::uniform(d.vocab()), a, 1), epsilon = 1e-12);
    }

    let c = PlanConfig {
        deadline: Some(Duration::from_secs(60)),
        ..cfg(2, 0.95, 3)
    };
    let r = Planner::new(&d, m.tables(), &c).plan(&BeliefState::uniform(d.vocab()));
    assert_eq!((r.depth, r.truncated), (2, false));
}

#[test]
fn invalid_configurations_are_rejected() {
    assert!(cfg(0, 0.9, 3).validate().is_err());
    assert!(cfg(2, 1.5, 3).validate().is_err());
    assert!(cfg(2, 0.9, 0).validate().is_err());
    assert!(cfg(2, 0.9, 3).validate().is_ok());
}

fn random_case(seed: u64, max_states: usize) -> (mbrl_dialogue::DomainSpec, TransitionModel, BeliefState) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = ToyShape::random(&mut rng, max_states);
    let d = toy_domain(&shape, &random_rewards(&mut rng, &shape));
    let m = random_model(&mut rng, &d);
    let b = BeliefState::from_probs(d.vocab(), random_simplex(&mut rng, shape.ni * shape.nc())).unwrap();
    (d, m, b)
}

proptest! {
    #![proptest_config(common::cases(100))]

    #[test]
    fn one_step_value_is_expected_reward(seed in any::<u64>()) {
        let (d, m, b) = random_case(seed, 40);
        let c = cfg(1, 0.95, 3);
        let p = Planner::new(&d, m.tables(), &c);
        for a in 0..d.vocab().n_actions() {
            prop_assert!((p.q_value(&b, a, 1) - d.belief_reward(&b, a)).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_discount_ignores_the_future(seed in any::<u64>(), h in 1usize..4) {
        let (d, m, b) = random_case(seed, 40);
        let c = cfg(h, 0.0, 3);
        let p = Planner::new(&d, m.tables(), &c);
        for a in 0..d.vocab().n_actions() {
            prop_assert!((p.q_value(&b, a, h) - d.belief_reward(&b, a)).abs() < 1e-12);
        }
    }

    #[test]
    fn matches_flat_expectimax_on_small_problems(seed in any::<u64>(), h in 1usize..4, gamma in 0.0f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shape = ToyShape { ni: 2, na: 2, nu: 2, contexts: vec![] };
        let d = toy_domain(&shape, &random_rewards(&mut rng, &shape));
        let m = random_model(&mut rng, &d);
        let b = BeliefState::from_probs(d.vocab(), random_simplex(&mut rng, 2)).unwrap();
        let c = cfg(h, gamma, 3);
        let p = Planner::new(&d, m.tables(), &c);
        for a in 0..2 {
            let want = brute_force_q(&d, m.tables(), b.probs(), a, h, gamma, c.planner_noise);
            prop_assert!((p.q_value(&b, a, h) - want).abs() < 1e-9);
        }
    }

    #[test]
    fn dominated_action_never_scores_higher(seed in any::<u64>(), h in 1usize..4) {
        // Shared (prior) dynamics for every action; action 0 gets at least
        // the reward of action 1 in every state.
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shape = ToyShape::random(&mut rng, 40);
        let mut rewards = random_rewards(&mut rng, &shape);
        if rewards.len() < 2 {
            rewards.push(vec![0.0; shape.ni]);
        }
        let bonus: Vec<f64> = (0..shape.ni).map(|_| rand::Rng::random_range(&mut rng, 0.0..3.0)).collect();
        rewards[0] = rewards[1].iter().zip(&bonus).map(|(r, b)| r + b).collect();
        let shape = ToyShape { na: rewards.len(), ..shape };
        let d = toy_domain(&shape, &rewards);
        let m = TransitionModel::from_domain(&d, ModelType::Multinomial).unwrap();
        let b = BeliefState::from_probs(d.vocab(), random_simplex(&mut rng, shape.ni * shape.nc())).unwrap();
        let c = cfg(h, 0.9, 3);
        let p = Planner::new(&d, m.tables(), &c);
        prop_assert!(p.q_value(&b, 0, h) >= p.q_value(&b, 1, h) - 1e-12);
    }

    #[test]
    fn longer_horizon_never_loses_with_positive_rewards(seed in any::<u64>(), h in 1usize..3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shape = ToyShape::random(&mut rng, 40);
        let rewards: Vec<Vec<f64>> = random_rewards(&mut rng, &shape)
            .into_iter()
            .map(|row| row.into_iter().map(f64::abs).collect())
            .collect();
        let d = toy_domain(&shape, &rewards);
        let m = random_model(&mut rng, &d);
        let b = BeliefState::from_probs(d.vocab(), random_simplex(&mut rng, shape.ni * shape.nc())).unwrap();
        let c = cfg(h + 1, 0.9, 3);
        let p = Planner::new(&d, m.tables(), &c);
        for a in 0..shape.na {
            prop_assert!(p.q_value(&b, a, h + 1) >= p.q_value(&b, a, h) - 1e-12);
        }
    }
}
