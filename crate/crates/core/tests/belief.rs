mod common;

use approx::assert_abs_diff_eq;
use common::{fixture, random_simplex};
use mbrl_dialogue::{belief_update, BeliefState, LearnerConfig, LearnerState, ModelType, NBestList, TransitionModel};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn learner(kind: ModelType, belief: BeliefState, config: LearnerConfig) -> LearnerState {
    let d = fixture("toy");
    LearnerState::new(TransitionModel::from_domain(&d, kind).unwrap(), belief, config)
}

#[test]
fn empty_list_after_persisting_action_changes_nothing() {
    let d = fixture("toy");
    let v = d.vocab();
    let m = TransitionModel::from_domain(&d, ModelType::Rules).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let b = BeliefState::from_probs(v, random_simplex(&mut rng, 6)).unwrap();
    let repeat = v.action_index("Repeat").unwrap();
    let next = belief_update(m.tables(), &b, repeat, &NBestList::empty()).unwrap();
    for (p, q) in b.probs().iter().zip(next.probs()) {
        assert_abs_diff_eq!(p, q, epsilon = 1e-12);
    }
}

#[test]
fn point_observation_is_bayes_rule() {
    let d = fixture("toy");
    let v = d.vocab();
    let m = TransitionModel::from_domain(&d, ModelType::Rules).unwrap();
    let b = BeliefState::from_probs(v, vec![0.5, 0.5, 0.0, 0.0, 0.0, 0.0]).unwrap();
    let repeat = v.action_index("Repeat").unwrap();
    let heard = NBestList::point(v.act_index("Request(A)").unwrap());
    // P(Request(A) | A) = 0.5 + 0.5/5, P(Request(A) | B) = 0.5/5.
    let next = belief_update(m.tables(), &b, repeat, &heard).unwrap();
    assert_abs_diff_eq!(next.get(0, 0), 0.6 / 0.7, epsilon = 1e-12);
    assert_abs_diff_eq!(next.get(0, 1), 0.1 / 0.7, epsilon = 1e-12);
    assert_eq!(next.get(1, 0), 0.0);
}

#[test]
fn void_share_keeps_unlisted_acts_possible() {
    let d = fixture("toy");
    let v = d.vocab();
    // Request(C) after Check(A) with the intention known to be A only gets
    // the uniform share of the void outcome.
    let check = v.action_index("Check(A)").unwrap();
    let heard = NBestList::point(v.act_index("Request(C)").unwrap());
    let mut l = learner(ModelType::Rules, BeliefState::point(v, 0, 0), LearnerConfig::default());
    l.observe(check, &heard, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    assert_abs_diff_eq!(l.belief.get(0, 0), 1.0, epsilon = 1e-12);
    let k = l.model.param_index("check_right").unwrap();
    let m = l.model.param(k).mean_probs();
    assert!(m[2] > 1.0 / 3.0, "void share grows: {m:?}");
}

#[test]
fn uninformative_observation_keeps_parameters() {
    let d = fixture("toy");
    let v = d.vocab();
    let check = v.action_index("Check(B)").unwrap();
    for kind in [ModelType::Rules, ModelType::Multinomial] {
        for analytic in [true, false] {
            let config = LearnerConfig {
                analytic_linear: analytic,
                ..LearnerConfig::default()
            };
            let l = learner(kind, BeliefState::uniform(v), config);
            let (updates, skipped) = l
                .parameter_update(check, &NBestList::empty(), &mut ChaCha8Rng::seed_from_u64(5))
                .unwrap();
            assert_eq!(skipped, 0);
            for (k, p) in updates {
                for (a, b) in p.alphas().iter().zip(l.model.param(k).alphas()) {
                    assert!((a - b).abs() < 1e-4 * b, "{kind} analytic={analytic}: {a} vs {b}");
                }
            }
        }
    }
}

#[test]
fn repeated_disconfirmation_raises_its_parameter() {
    let d = fixture("toy");
    let v = d.vocab();
    let check_b = v.action_index("Check(B)").unwrap();
    let no = NBestList::point(v.act_index("No").unwrap());
    let mut l = learner(ModelType::Rules, BeliefState::point(v, 0, 0), LearnerConfig::default());
    let k = l.model.param_index("check_wrong").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut last = l.model.param(k).mean_probs()[0];
    for _ in 0..10 {
        l.belief = BeliefState::point(v, 0, 0);
        l.observe(check_b, &no, &mut rng).unwrap();
        let now = l.model.param(k).mean_probs()[0];
        assert!(now > last, "{now} <= {last}");
        last = now;
    }
    assert!(last > 0.7);
}

#[test]
fn fixed_model_when_learning_is_off() {
    let d = fixture("toy");
    let v = d.vocab();
    let config = LearnerConfig {
        learn: false,
        ..LearnerConfig::default()
    };
    let mut l = learner(ModelType::Rules, BeliefState::uniform(v), config);
    let before = l.model.pretty();
    l.observe(3, &NBestList::point(3), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    assert_eq!(before, l.model.pretty());
}

fn random_nbest<R: Rng>(rng: &mut R, nu: usize) -> NBestList {
    let n = rng.random_range(0..=nu.min(3));
    let mut acts: Vec<usize> = (0..nu).collect();
    for k in 0..n {
        let j = rng.random_range(k..nu);
        acts.swap(k, j);
    }
    let probs = random_simplex(rng, n + 1);
    NBestList::new(acts[..n].iter().zip(&probs).map(|(&a, &p)| (a, p.max(1e-3))).collect(), nu).unwrap()
}

proptest! {
    #![proptest_config(common::cases(100))]

    #[test]
    fn alphas_stay_positive(seed in any::<u64>(), rules in any::<bool>()) {
        let d = fixture("toy");
        let v = d.vocab();
        let kind = if rules { ModelType::Rules } else { ModelType::Multinomial };
        let config = LearnerConfig { theta_samples: 200, ..LearnerConfig::default() };
        let mut l = learner(kind, BeliefState::uniform(v), config);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..10 {
            let a = rng.random_range(0..v.n_actions());
            let obs = random_nbest(&mut rng, v.n_acts());
            l.observe(a, &obs, &mut rng).unwrap();
            let total: f64 = l.belief.probs().iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-9);
        }
        for k in 0..l.model.parameter_count() {
            prop_assert!(l.model.param(k).alphas().iter().all(|a| *a > 0.0 && a.is_finite()));
        }
    }

    #[test]
    fn sampled_and_closed_form_updates_agree(seed in any::<u64>()) {
        let d = fixture("toy");
        let v = d.vocab();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let belief = BeliefState::from_probs(v, random_simplex(&mut rng, 6)).unwrap();
        let a = rng.random_range(0..v.n_actions());
        let obs = random_nbest(&mut rng, v.n_acts());
        let run = |analytic: bool, rng: &mut ChaCha8Rng| {
            let config = LearnerConfig { analytic_linear: analytic, theta_samples: 20_000, ..LearnerConfig::default() };
            learner(ModelType::Multinomial, belief.clone(), config).parameter_update(a, &obs, rng).unwrap().0
        };
        let exact = run(true, &mut rng);
        let sampled = run(false, &mut rng);
        prop_assert_eq!(exact.len(), sampled.len());
        for ((k1, p), (k2, q)) in exact.iter().zip(&sampled) {
            prop_assert_eq!(k1, k2);
            for (x, y) in p.mean_probs().iter().zip(q.mean_probs()) {
                prop_assert!((x - y).abs() < 0.01, "entry {k1}: {x} vs {y}");
            }
            prop_assert!((p.total() - q.total()).abs() < 0.05 * p.total(), "entry {k1}: {} vs {}", p.total(), q.total());
        }
    }
}
