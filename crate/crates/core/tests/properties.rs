use std::collections::BTreeSet;

use proptest::prelude::*;

use cfexplain::cnf::{encode_function, encode_instance};
use cfexplain::explain::{apply_flips, CompiledClassifier, Direction, ExplainOptions};
use cfexplain::model::{generate_synthetic, posterior_odds, predict, Instance, NbcModel, Rational};
use cfexplain::odd::{compile, compile_default};
use cfexplain::sat::solve;
use cfexplain::Error;

fn instance(n: usize, code: u64) -> Instance {
    Instance::from_index(code % (1u64 << n), n)
}

fn model_and_instance(max_n: usize) -> impl Strategy<Value = (NbcModel, Instance)> {
    (1..=max_n, any::<u64>(), any::<u64>())
        .prop_map(|(n, seed, code)| (generate_synthetic(n, seed).unwrap(), instance(n, code)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn single_flip_scales_odds((m, x) in model_and_instance(12), pick in any::<usize>()) {
        let i = pick % m.n();
        let v = x.get(i);
        let y = apply_flips(&x, &[i]).unwrap();
        let incremental = posterior_odds(&m, &x).unwrap() * m.likelihood_ratio(i, !v)
            / m.likelihood_ratio(i, v);
        prop_assert_eq!(&incremental, &posterior_odds(&m, &y).unwrap());
        prop_assert_eq!(incremental >= *m.decision_odds(), predict(&m, &y).unwrap());
    }

    #[test]
    fn zero_paths_partition_the_off_set((m, _x) in model_and_instance(9)) {
        let d = compile_default(&m).unwrap();
        let paths = d.zero_paths();
        for code in 0..1u64 << m.n() {
            let x = Instance::from_index(code, m.n());
            let hits = paths.iter().filter(|p| p.is_extended_by(&x)).count();
            prop_assert_eq!(hits, usize::from(!d.evaluate(&x).unwrap()));
        }
    }

    #[test]
    fn orderings_agree((m, _x) in model_and_instance(8), rotate in any::<usize>()) {
        let n = m.n();
        let mut order: Vec<usize> = (0..n).rev().collect();
        order.rotate_left(rotate % n);
        let a = compile_default(&m).unwrap();
        let b = compile(&m, &order).unwrap();
        for code in 0..1u64 << n {
            let x = Instance::from_index(code, n);
            prop_assert_eq!(a.evaluate(&x).unwrap(), b.evaluate(&x).unwrap());
        }
        prop_assert_eq!(a.count_models(), b.count_models());
    }

    #[test]
    fn explanations_invert_and_are_forced((m, x) in model_and_instance(10)) {
        let c = CompiledClassifier::build(m.clone(), &(0..m.n()).collect::<Vec<_>>()).unwrap();
        let predicted = predict(&m, &x).unwrap();
        let report = match c.explain(&x, &ExplainOptions::default()) {
            Ok(r) => r,
            Err(Error::NoCounterfactualExists) => {
                prop_assert!(c.obdd.as_constant().is_some());
                return Ok(());
            }
            Err(e) => panic!("{e}"),
        };
        prop_assert_eq!(report.prediction, predicted);
        let expected = if predicted { Direction::Negation } else { Direction::Function };
        prop_assert_eq!(report.direction, expected);
        let hard = if predicted { &c.cnf_neg } else { &c.cnf_pos };
        let soft = encode_instance(&x);
        for cf in &report.counterfactuals {
            prop_assert_eq!(predict(&m, &cf.resulting_instance).unwrap(), !predicted);
            prop_assert_eq!(&cf.cost, &Rational::from_integer(cf.flip_set.len().into()));
            // Keeping any one of the flipped features fixed makes the
            // remaining soft literals unsatisfiable with the hard part.
            for &keep in &cf.flip_set {
                let kept: Vec<_> = soft
                    .iter()
                    .filter(|c| {
                        let v = c.as_unit().unwrap().var;
                        !cf.flip_set.contains(&v) || v == keep
                    })
                    .cloned()
                    .collect();
                prop_assert!(!solve(&hard.with_clauses(kept).unwrap(), &[]).is_sat());
            }
        }
    }

    #[test]
    fn directions_are_symmetric((m, x) in model_and_instance(8)) {
        // Explaining x, then explaining any of its counterfactuals, leads back
        // to a set containing the original flip.
        let c = CompiledClassifier::build(m.clone(), &(0..m.n()).collect::<Vec<_>>()).unwrap();
        let Ok(report) = c.explain(&x, &ExplainOptions::default()) else { return Ok(()) };
        for cf in &report.counterfactuals {
            let back = c.explain(&cf.resulting_instance, &ExplainOptions::default()).unwrap();
            prop_assert_ne!(back.direction, report.direction);
            prop_assert!(back
                .counterfactuals
                .iter()
                .any(|b| b.flip_set.iter().all(|i| cf.flip_set.contains(i))));
        }
    }
}

#[test]
fn canonical_across_models_with_same_function() {
    // Many random models of few features collapse onto few functions; every
    // pair computing the same function must produce the identical diagram.
    let models: Vec<NbcModel> = (0..200)
        .map(|s| generate_synthetic(3, s).unwrap())
        .collect();
    let diagrams: Vec<_> = models.iter().map(|m| compile_default(m).unwrap()).collect();
    let mut checked = 0;
    for (i, (a, da)) in models.iter().zip(&diagrams).enumerate() {
        for (b, db) in models[i + 1..].iter().zip(&diagrams[i + 1..]) {
            let same = (0..8).all(|c| {
                let x = Instance::from_index(c, 3);
                predict(a, &x).unwrap() == predict(b, &x).unwrap()
            });
            assert_eq!(same, da == db);
            checked += same as usize;
        }
    }
    assert!(checked > 0);
}

#[test]
fn encodings_are_complementary() {
    for seed in 0..20 {
        let m = generate_synthetic(7, seed).unwrap();
        let d = compile_default(&m).unwrap();
        let (pos, neg) = (encode_function(&d), encode_function(&d.negate()));
        let zero_paths: BTreeSet<_> = (0..128)
            .filter(|&c| !pos.is_satisfied_by(&Instance::from_index(c, 7)))
            .collect();
        let neg_models: BTreeSet<_> = (0..128)
            .filter(|&c| neg.is_satisfied_by(&Instance::from_index(c, 7)))
            .collect();
        assert_eq!(zero_paths, neg_models);
    }
}
