mod common;

use std::sync::LazyLock;

use common::fixture_path;
use mbrl_dialogue::simulator::{NoiseOutcome, SimulatorState};
use mbrl_dialogue::{DomainSpec, GroundTruth, Simulator};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

static ROBOT: LazyLock<DomainSpec> = LazyLock::new(|| common::fixture("robot"));

fn toy_with_noise(noise: [f64; 3]) -> DomainSpec {
    let mut doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(fixture_path("toy")).unwrap()).unwrap();
    doc["simulator"]["noise"] = serde_json::json!(noise);
    DomainSpec::from_json(&doc.to_string()).unwrap()
}

fn simulator(d: &DomainSpec, seed: u64) -> (Simulator, ChaCha8Rng) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (Simulator::new(GroundTruth::from_domain(d).unwrap(), &mut rng), rng)
}

fn fixed_state(intention: usize) -> SimulatorState {
    SimulatorState {
        intention,
        context: vec![0],
        context_index: 0,
        turn: 0,
        completed: 0,
        last_act: None,
    }
}

#[test]
fn nearly_noiseless_channel_reports_the_true_act() {
    let d = toy_with_noise([1e6, 1.0, 1.0]);
    let (mut sim, mut rng) = simulator(&d, 1);
    let n = 10_000;
    let mut hits = 0;
    for k in 0..n {
        sim.set_state(fixed_state(k % 3));
        let step = sim.step(k % 7, &mut rng);
        if step.observation.entries().first().map(|e| e.0) == Some(step.user_act) {
            hits += 1;
        }
    }
    assert!(hits as f64 / n as f64 > 0.999, "{hits}");
}

#[test]
fn observations_follow_the_channel_branches() {
    let d = fixture_path("toy");
    let d = mbrl_dialogue::load_domain(d).unwrap();
    let (mut sim, mut rng) = simulator(&d, 2);
    let mut seen = [0usize; 3];
    for k in 0..5000 {
        sim.set_state(fixed_state(k % 3));
        let step = sim.step(k % 7, &mut rng);
        let e = step.observation.entries();
        match step.outcome {
            NoiseOutcome::NotRecognized => {
                assert!(e.is_empty());
                seen[2] += 1;
            }
            NoiseOutcome::Correct => {
                assert_eq!(e[0].0, step.user_act);
                seen[0] += 1;
            }
            NoiseOutcome::Incorrect => {
                assert_ne!(e[0].0, step.user_act);
                if e.len() == 2 {
                    assert_eq!(e[1].0, step.user_act);
                }
                seen[1] += 1;
            }
        }
        if !e.is_empty() {
            assert!((e.iter().map(|x| x.1).sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
    // Expected shares are 5.4, 0.52 and 1.6 out of 7.52.
    let share = |k: usize| seen[k] as f64 / 5000.0;
    assert!((share(0) - 5.4 / 7.52).abs() < 0.03);
    assert!((share(1) - 0.52 / 7.52).abs() < 0.02);
    assert!((share(2) - 1.6 / 7.52).abs() < 0.03);
}

#[test]
fn confirmation_frequency_matches_its_table() {
    let d = mbrl_dialogue::load_domain(fixture_path("toy")).unwrap();
    let v = d.vocab();
    let (mut sim, mut rng) = simulator(&d, 3);
    let check_a = v.action_index("Check(A)").unwrap();
    let yes = v.act_index("Yes").unwrap();
    sim.set_state(fixed_state(0));
    let p = sim.actual_next_act_distribution(check_a).probs()[yes];
    // 0.9 plus the void 0.05 spread over five acts.
    assert!((p - 0.91).abs() < 1e-12);
    let n = 20_000;
    let mut count = 0;
    for _ in 0..n {
        sim.set_state(fixed_state(0));
        if sim.step(check_a, &mut rng).user_act == yes {
            count += 1;
        }
    }
    let se = (p * (1.0 - p) / n as f64).sqrt();
    assert!((count as f64 / n as f64 - p).abs() < 3.0 * se);
}

#[test]
fn empirical_acts_match_the_actual_distribution() {
    for noise in [[5.4, 0.52, 1.6], [1.0, 1.0, 1e6]] {
        let d = toy_with_noise(noise);
        let (mut sim, mut rng) = simulator(&d, 4);
        for action in 0..7 {
            for intention in 0..3 {
                sim.set_state(fixed_state(intention));
                let want = sim.actual_next_act_distribution(action);
                let n = 4000;
                let mut counts = [0usize; 5];
                for _ in 0..n {
                    sim.set_state(fixed_state(intention));
                    counts[sim.step(action, &mut rng).user_act] += 1;
                }
                for (c, p) in counts.iter().zip(want.probs()) {
                    let se = (p * (1.0 - p) / n as f64).sqrt();
                    let f = *c as f64 / n as f64;
                    assert!((f - p).abs() <= 4.0 * se, "a={action} i={intention}: {f} vs {p}");
                }
            }
        }
    }
}

#[test]
fn episode_ends_on_agenda_or_turn_limit() {
    let d = mbrl_dialogue::load_domain(fixture_path("toy")).unwrap();
    let v = d.vocab();
    let (mut sim, mut rng) = simulator(&d, 5);
    let repeat = v.action_index("Repeat").unwrap();
    let mut turns = 0;
    while !sim.episode_done() {
        sim.step(repeat, &mut rng);
        turns += 1;
    }
    assert_eq!(turns, 15);

    sim.reset(&mut rng);
    while !sim.episode_done() {
        let i = sim.state().intention;
        sim.step(i, &mut rng);
    }
    assert_eq!(sim.state().completed, 3);
    assert_eq!(sim.state().turn, 3);
}

#[test]
fn missing_simulator_section_is_an_error() {
    let mut doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(fixture_path("toy")).unwrap()).unwrap();
    doc.as_object_mut().unwrap().remove("simulator");
    let d = DomainSpec::from_json(&doc.to_string()).unwrap();
    assert!(GroundTruth::from_domain(&d).is_err());
}

proptest! {
    #![proptest_config(common::cases(100))]

    #[test]
    fn same_seed_same_trajectory(seed in any::<u64>(), actions in prop::collection::vec(0usize..7, 1..30)) {
        let d = mbrl_dialogue::load_domain(fixture_path("toy")).unwrap();
        let run = || {
            let (mut sim, mut rng) = simulator(&d, seed);
            actions.iter().map(|&a| (sim.step(a, &mut rng), sim.state().clone())).collect::<Vec<_>>()
        };
        prop_assert_eq!(run(), run());
    }

    #[test]
    fn actual_distribution_is_normalized(seed in any::<u64>(), action in 0usize..37) {
        let (sim, _) = simulator(&ROBOT, seed);
        let p = sim.actual_next_act_distribution(action);
        prop_assert!((p.probs().iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}
