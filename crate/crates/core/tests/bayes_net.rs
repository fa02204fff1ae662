mod common;

use approx::assert_abs_diff_eq;
use mbrl_dialogue::{Distribution, Evidence, InferenceMethod, Network, NetworkBuilder};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn chain() -> Network {
    let mut b = NetworkBuilder::new();
    b.variable("X", &["x0", "x1"]).unwrap();
    b.variable("Y", &["x0", "x1"]).unwrap();
    b.cpt("X", &[], vec![0.3, 0.7]).unwrap();
    b.cpt("Y", &["X"], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
    b.build().unwrap()
}

#[test]
fn identity_chain_evidence_pins_parent() {
    let net = chain();
    let post = net.exact_marginal(&["X"], &[("Y", Evidence::Hard("x1".into()))]).unwrap();
    assert_abs_diff_eq!(post.prob("x1").unwrap(), 1.0, epsilon = 1e-12);
}

#[test]
fn root_prior_is_recovered() {
    let mut b = NetworkBuilder::new();
    b.variable("R", &["a", "b"]).unwrap();
    b.cpt("R", &[], vec![0.2, 0.8]).unwrap();
    let net = b.build().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let d = net.query_marginal(&["R"], &[], InferenceMethod::Exact, &mut rng).unwrap();
    assert_eq!(d.probs(), &[0.2, 0.8]);
}

fn three_nodes() -> Network {
    let mut b = NetworkBuilder::new();
    b.variable("A", &["a0", "a1"]).unwrap();
    b.variable("B", &["b0", "b1", "b2"]).unwrap();
    b.variable("C", &["c0", "c1"]).unwrap();
    b.cpt("A", &[], vec![0.35, 0.65]).unwrap();
    b.cpt("B", &["A"], vec![0.5, 0.3, 0.2, 0.1, 0.6, 0.3]).unwrap();
    b.cpt("C", &["A", "B"], vec![0.9, 0.1, 0.4, 0.6, 0.2, 0.8, 0.7, 0.3, 0.5, 0.5, 0.05, 0.95])
        .unwrap();
    b.build().unwrap()
}

#[test]
fn sampling_matches_exact_on_three_nodes() {
    let net = three_nodes();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let evidence = [("C", Evidence::Hard("c1".into()))];
    let exact = net.query_marginal(&["B"], &evidence, InferenceMethod::Exact, &mut rng).unwrap();
    let approx = net
        .query_marginal(&["B"], &evidence, InferenceMethod::Sampling { n_samples: 100_000 }, &mut rng)
        .unwrap();
    assert!(exact.total_variation(&approx).unwrap() < 0.01);
}

#[test]
fn hard_evidence_on_leaf_is_bayes_rule() {
    let mut b = NetworkBuilder::new();
    b.variable("D", &["sick", "well"]).unwrap();
    b.variable("T", &["pos", "neg"]).unwrap();
    b.cpt("D", &[], vec![0.1, 0.9]).unwrap();
    b.cpt("T", &["D"], vec![0.9, 0.1, 0.2, 0.8]).unwrap();
    let net = b.build().unwrap();
    let post = net.exact_marginal(&["D"], &[("T", Evidence::Hard("pos".into()))]).unwrap();
    // 0.1·0.9 / (0.1·0.9 + 0.9·0.2)
    assert_abs_diff_eq!(post.prob("sick").unwrap(), 0.09 / 0.27, epsilon = 1e-12);
    let applied = net.apply_evidence(&[("T", Evidence::Hard("pos".into()))]).unwrap();
    let again = applied.exact_marginal(&["D"], &[]).unwrap();
    assert_abs_diff_eq!(again.prob("sick").unwrap(), 0.09 / 0.27, epsilon = 1e-12);
}

#[test]
fn uniform_soft_evidence_changes_nothing() {
    let net = three_nodes();
    let before = net.exact_marginal(&["A"], &[]).unwrap();
    let after = net.exact_marginal(&["A"], &[("B", Evidence::Soft(vec![0.4, 0.4, 0.4]))]).unwrap();
    for (x, y) in before.probs().iter().zip(after.probs()) {
        assert_abs_diff_eq!(x, y, epsilon = 1e-12);
    }
}

#[test]
fn soft_evidence_on_uniform_root() {
    let mut b = NetworkBuilder::new();
    b.variable("R", &["r0", "r1"]).unwrap();
    b.cpt("R", &[], vec![0.5, 0.5]).unwrap();
    let net = b.build().unwrap();
    let post = net.apply_evidence(&[("R", Evidence::Soft(vec![0.8, 0.2]))]).unwrap();
    let d = post.exact_marginal(&["R"], &[]).unwrap();
    assert_abs_diff_eq!(d.probs()[0], 0.8, epsilon = 1e-12);
    assert_abs_diff_eq!(d.probs()[1], 0.2, epsilon = 1e-12);
}

#[test]
fn structural_errors_are_rejected() {
    let mut b = NetworkBuilder::new();
    b.variable("A", &["a0", "a1"]).unwrap();
    b.cpt("A", &["Missing"], vec![0.5; 4]).unwrap();
    assert!(b.build().is_err(), "unknown parent");

    let mut b = NetworkBuilder::new();
    b.variable("A", &["a0", "a1"]).unwrap();
    b.cpt("A", &[], vec![0.5, 0.6]).unwrap();
    assert!(b.build().is_err(), "row summing to 1.1");

    let mut b = NetworkBuilder::new();
    b.variable("A", &["a0", "a1"]).unwrap();
    b.variable("B", &["b0", "b1"]).unwrap();
    b.cpt("A", &["B"], vec![0.5; 4]).unwrap();
    b.cpt("B", &["A"], vec![0.5; 4]).unwrap();
    assert!(b.build().is_err(), "cycle");

    assert!(Distribution::new(vec!["a".into(), "b".into()], vec![0.5, 0.6]).is_err());
}

#[test]
fn impossible_evidence_is_an_error() {
    let net = chain();
    let r = net.exact_marginal(&["X"], &[("Y", Evidence::Soft(vec![0.0, 0.0]))]);
    assert!(r.is_err());
}

#[test]
fn dump_lists_every_variable() {
    let text = three_nodes().dump();
    for name in ["A", "B", "C"] {
        assert!(text.contains(name));
    }
}

/// Random net of up to six variables. Parents are drawn among earlier
/// variables; CPT rows are random simplices.
fn random_net<R: Rng>(rng: &mut R, reversed_insertion: bool) -> (Network, Vec<(String, Vec<String>, Vec<f64>)>) {
    let n = rng.random_range(2..=6);
    let mut specs = Vec::new();
    let mut cards = Vec::new();
    for v in 0..n {
        let card = rng.random_range(2..=3);
        cards.push(card);
        let parents: Vec<String> = (0..v).filter(|_| rng.random_bool(0.4)).take(2).map(|p| format!("V{p}")).collect();
        let rows: usize = parents
            .iter()
            .map(|p| cards[p[1..].parse::<usize>().unwrap()])
            .product();
        let mut table = Vec::new();
        for _ in 0..rows {
            let raw: Vec<f64> = (0..card).map(|_| rng.random_range(0.05..1.0)).collect();
            let t: f64 = raw.iter().sum();
            table.extend(raw.into_iter().map(|x| x / t));
        }
        specs.push((format!("V{v}"), parents, table));
    }
    let build = |order: &[usize]| {
        let mut b = NetworkBuilder::new();
        for (v, card) in cards.iter().enumerate() {
            let values: Vec<String> = (0..*card).map(|k| format!("s{k}")).collect();
            b.variable_owned(&format!("V{v}"), values).unwrap();
        }
        for &v in order {
            let (name, parents, table) = &specs[v];
            let ps: Vec<&str> = parents.iter().map(String::as_str).collect();
            b.cpt(name, &ps, table.clone()).unwrap();
        }
        b.build().unwrap()
    };
    let mut order: Vec<usize> = (0..n).collect();
    if reversed_insertion {
        order.reverse();
    }
    (build(&order), specs)
}

proptest! {
    #![proptest_config(common::cases(100))]

    #[test]
    fn likelihood_weighting_within_three_standard_errors(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (net, specs) = random_net(&mut rng, false);
        let query = specs[0].0.clone();
        let leaf = specs.last().unwrap().0.clone();
        let evidence = [(leaf.as_str(), Evidence::Hard("s0".into()))];
        let exact = net.exact_marginal(&[&query], &evidence).unwrap();
        let est = net.likelihood_weighting(&[&query], &evidence, 4000, &mut rng).unwrap();
        for (p, q) in exact.probs().iter().zip(est.distribution.probs()) {
            let se = (p * (1.0 - p) / est.effective_samples).sqrt();
            prop_assert!((p - q).abs() <= 3.0 * se, "exact {p} vs {q}, se {se}");
        }
    }

    #[test]
    fn insertion_order_does_not_matter(seed in any::<u64>()) {
        let (a, specs) = random_net(&mut ChaCha8Rng::seed_from_u64(seed), false);
        let (b, _) = random_net(&mut ChaCha8Rng::seed_from_u64(seed), true);
        for (name, _, _) in &specs {
            let x = a.exact_marginal(&[name], &[]).unwrap();
            let y = b.exact_marginal(&[name], &[]).unwrap();
            for (p, q) in x.probs().iter().zip(y.probs()) {
                prop_assert!((p - q).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn marginals_are_normalized(seed in any::<u64>(), soft in prop::collection::vec(0.01f64..1.0, 3)) {
        let (net, specs) = random_net(&mut ChaCha8Rng::seed_from_u64(seed), false);
        let card = net.variable(&specs[1].0).unwrap().card();
        let evidence = [(specs[1].0.as_str(), Evidence::Soft(soft[..card].to_vec()))];
        for (name, _, _) in &specs {
            let d = net.exact_marginal(&[name], &evidence).unwrap();
            prop_assert!((d.probs().iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}
