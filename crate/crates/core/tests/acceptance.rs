//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any of them fails or runs over its time budget.

use std::collections::BTreeSet;
use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use num_bigint::BigUint;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cfexplain::bench::{averages, bench, BenchConfig, DEFAULT_CLAUSE_CAP};
use cfexplain::cnf::{encode_function, encode_instance, from_dimacs, to_dimacs, CnfFormula};
use cfexplain::explain::{apply_flips, CompiledClassifier, ExplainOptions};
use cfexplain::mcs::{brute_force_mcs, enumerate_mcs, McsProblem};
use cfexplain::model::{
    admission_example, generate_synthetic, parse_model, parse_rational, predict, serialize_model,
    FeatureCpt, Instance, NbcModel,
};
use cfexplain::odd::{compile_default, Obdd};
use cfexplain::sat::solve;
use cfexplain::Error;

type Check = std::result::Result<(), String>;

/// Name, check and time budget in seconds.
type Criterion = (&'static str, fn() -> Check, u64);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        let holds: bool = $cond;
        if !holds {
            return Err(format!($($fmt)+));
        }
    };
}

fn ok<T>(r: cfexplain::Result<T>) -> std::result::Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn all_instances(n: usize) -> impl Iterator<Item = Instance> {
    (0..1u64 << n).map(move |code| Instance::from_index(code, n))
}

fn random_instance(rng: &mut ChaCha8Rng, n: usize) -> Instance {
    Instance::new((0..n).map(|_| rng.gen::<bool>()).collect())
}

/// Models shared by the fidelity and CNF checks: 20 per size from 4 to 12.
fn fidelity_models() -> Vec<NbcModel> {
    (4..=12)
        .flat_map(|n| (0..20).map(move |k| generate_synthetic(n, 1000 * n as u64 + k).unwrap()))
        .collect()
}

fn fidelity() -> Check {
    for m in fidelity_models() {
        let d = ok(compile_default(&m))?;
        for x in all_instances(m.n()) {
            ensure!(
                ok(d.evaluate(&x))? == ok(predict(&m, &x))?,
                "diagram disagrees with the model on {x} (n = {})",
                m.n()
            );
        }
    }
    Ok(())
}

fn cnf_equivalence() -> Check {
    for m in fidelity_models() {
        let cnf = encode_function(&ok(compile_default(&m))?);
        for x in all_instances(m.n()) {
            ensure!(
                cnf.is_satisfied_by(&x) == ok(predict(&m, &x))?,
                "encoding disagrees with the model on {x} (n = {})",
                m.n()
            );
        }
    }
    Ok(())
}

fn sat_iff_positive() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..200 {
        let n = rng.gen_range(1..=16);
        let m = ok(generate_synthetic(n, rng.gen()))?;
        let x = random_instance(&mut rng, n);
        let cnf = encode_function(&ok(compile_default(&m))?);
        let combined = ok(cnf.with_clauses(encode_instance(&x)))?;
        ensure!(
            solve(&combined, &[]).is_sat() == ok(predict(&m, &x))?,
            "solver and model disagree on {x} (n = {n})"
        );
    }
    Ok(())
}

/// Minimal flip sets read straight off the diagram, by enumerating every
/// subset of features.
fn diagram_flip_sets(d: &Obdd, x: &Instance) -> std::result::Result<BTreeSet<Vec<usize>>, String> {
    let n = x.len();
    let target = !ok(d.evaluate(x))?;
    let flipping: Vec<u64> = (0..1u64 << n)
        .filter(|&mask| {
            let flips: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
            d.evaluate(&apply_flips(x, &flips).unwrap()).unwrap() == target
        })
        .collect();
    Ok(flipping
        .iter()
        .filter(|&&s| !flipping.iter().any(|&t| t != s && t & s == t))
        .map(|&s| (0..n).filter(|i| s >> i & 1 == 1).collect())
        .collect())
}

fn mcs_three_way() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut seen = [0usize; 2];
    for _ in 0..50 {
        let n = rng.gen_range(2..=10);
        let m = ok(generate_synthetic(n, rng.gen()))?;
        let d = ok(compile_default(&m))?;
        let cnf = [encode_function(&d), encode_function(&d.negate())];
        // One instance per prediction, when the classifier has both.
        let mut picked: [Option<Instance>; 2] = [None, None];
        for _ in 0..200 {
            let x = random_instance(&mut rng, n);
            let p = ok(d.evaluate(&x))? as usize;
            picked[p].get_or_insert(x);
        }
        for (p, x) in picked.iter().enumerate() {
            let Some(x) = x else { continue };
            seen[p] += 1;
            let soft = encode_instance(x);
            let problem = ok(McsProblem::new(&cnf[p], &soft))?;
            let direct = diagram_flip_sets(&d, x)?;
            if d.as_constant().is_some() {
                ensure!(
                    direct.is_empty()
                        && matches!(
                            enumerate_mcs(&problem, None),
                            Err(Error::NoCounterfactualExists)
                        )
                        && matches!(
                            brute_force_mcs(&problem),
                            Err(Error::NoCounterfactualExists)
                        ),
                    "constant classifier (n = {n}) reported a counterfactual"
                );
                continue;
            }
            let found: BTreeSet<Vec<usize>> = ok(enumerate_mcs(&problem, None))?
                .mcses
                .into_iter()
                .map(|s| s.features)
                .collect();
            let brute: BTreeSet<Vec<usize>> = ok(brute_force_mcs(&problem))?
                .into_iter()
                .map(|s| s.features)
                .collect();
            ensure!(
                found == brute && brute == direct,
                "MCS sets differ on {x} (n = {n}): enumerated {found:?}, brute force {brute:?}, diagram {direct:?}"
            );
        }
    }
    ensure!(
        seen[0] > 0 && seen[1] > 0,
        "only one prediction direction was exercised: {seen:?}"
    );
    Ok(())
}

fn worked_example() -> Check {
    let m = admission_example();
    let c = ok(CompiledClassifier::build(m, &[0, 1, 2, 3]))?;
    let expected = ok(Obdd::from_fn(&[0, 1, 2, 3], |x| {
        !x.get(3) || (!x.get(0) && !x.get(1) && !x.get(2))
    }))?;
    ensure!(
        c.obdd == expected,
        "diagram does not compute the expected function"
    );
    ensure!(
        c.cnf_pos.len() == 3,
        "expected 3 clauses, got {}",
        c.cnf_pos.len()
    );

    let sets = |bits: &str| -> std::result::Result<(bool, Vec<Vec<usize>>), String> {
        let x: Instance = bits.parse().map_err(|e: Error| e.to_string())?;
        let report = ok(c.explain(&x, &ExplainOptions::default()))?;
        Ok((
            report.prediction,
            report
                .counterfactuals
                .into_iter()
                .map(|cf| cf.flip_set)
                .collect(),
        ))
    };
    let (p, flips) = sets("1,1,1,1")?;
    ensure!(
        !p && flips == vec![vec![3], vec![0, 1, 2]],
        "1,1,1,1: prediction {p}, flips {flips:?}"
    );
    let (p, flips) = sets("1,0,1,0")?;
    ensure!(
        p && flips == vec![vec![3]],
        "1,0,1,0: prediction {p}, flips {flips:?}"
    );
    Ok(())
}

fn scale_trends() -> Check {
    let records = ok(bench(&BenchConfig {
        sizes: vec![5, 10, 16],
        per_size: 8,
        seed: 1,
        clause_cap: DEFAULT_CLAUSE_CAP,
        timings: false,
    }))?;
    let avg = averages(&records);
    let reference = [9.0, 42.0, 370.0];
    ensure!(avg.len() == 3, "expected 3 sizes, got {}", avg.len());
    for (a, r) in avg.iter().zip(reference) {
        ensure!(
            a.obdd_nodes >= r / 10.0 && a.obdd_nodes <= r * 10.0,
            "n = {}: average of {} nodes is not within 10x of {r}",
            a.n,
            a.obdd_nodes
        );
        let mcs = a
            .mcs_count
            .ok_or(format!("n = {}: no explained instance", a.n))?;
        ensure!(
            a.cnf_clauses >= mcs,
            "n = {}: {} clauses < {mcs} MCSs on average",
            a.n,
            a.cnf_clauses
        );
    }
    ensure!(
        avg.windows(2).all(|w| w[0].obdd_nodes < w[1].obdd_nodes),
        "node counts not increasing: {:?}",
        avg.iter().map(|a| a.obdd_nodes).collect::<Vec<_>>()
    );
    Ok(())
}

/// Antichain, correction, minimality and forced-flip checks for the MCS set
/// of one problem, with every model enumerated exhaustively.
fn check_mcs_family(hard: &CnfFormula, x: &Instance) -> Check {
    let n = x.len();
    let soft = encode_instance(x);
    let problem = ok(McsProblem::new(hard, &soft))?;
    let family = match enumerate_mcs(&problem, None) {
        Ok(e) => e.mcses,
        Err(Error::NoCounterfactualExists) => return Ok(()),
        Err(e) => return Err(e.to_string()),
    };
    let models: Vec<Instance> = all_instances(n)
        .filter(|a| hard.is_satisfied_by(a))
        .collect();
    for a in &family {
        for b in &family {
            ensure!(
                a == b || !a.features.iter().all(|f| b.features.contains(f)),
                "{:?} is contained in {:?}",
                a.features,
                b.features
            );
        }
        let keeps = |y: &Instance, dropped: &[usize]| {
            (0..n).all(|i| dropped.contains(&i) || y.get(i) == x.get(i))
        };
        let witnesses: Vec<&Instance> = models.iter().filter(|y| keeps(y, &a.features)).collect();
        ensure!(
            !witnesses.is_empty(),
            "{:?} does not correct {x}",
            a.features
        );
        for y in &witnesses {
            ensure!(
                a.features.iter().all(|&i| y.get(i) != x.get(i)),
                "model {y} keeps a soft literal of {:?}",
                a.features
            );
        }
        for &f in &a.features {
            let smaller: Vec<usize> = a.features.iter().copied().filter(|&g| g != f).collect();
            ensure!(
                !models.iter().any(|y| keeps(y, &smaller)),
                "{:?} is not minimal for {x}",
                a.features
            );
        }
    }
    Ok(())
}

fn invariants() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..60 {
        let n = rng.gen_range(1..=10);
        let m = ok(generate_synthetic(n, rng.gen()))?;
        let d = ok(compile_default(&m))?;
        let neg = d.negate();
        ensure!(neg.negate() == d, "negation is not an involution (n = {n})");
        for x in all_instances(n) {
            ensure!(
                ok(neg.evaluate(&x))? != ok(d.evaluate(&x))?,
                "negation agrees with the diagram on {x}"
            );
        }
        ensure!(
            d.count_models() + neg.count_models() == BigUint::from(1u64 << n),
            "model counts do not add up to 2^{n}"
        );

        let pos = encode_function(&d);
        let x = random_instance(&mut rng, n);
        check_mcs_family(&pos, &x)?;
        check_mcs_family(&encode_function(&neg), &x)?;

        let text = to_dimacs(&pos);
        ensure!(
            to_dimacs(&ok(from_dimacs(&text))?) == text,
            "DIMACS round trip changed the text (n = {n})"
        );
        let text = serialize_model(&m);
        ensure!(
            serialize_model(&ok(parse_model(&text))?) == text,
            "model round trip changed the text (n = {n})"
        );
    }
    let text = serialize_model(&admission_example());
    ensure!(
        serialize_model(&ok(parse_model(&text))?) == text,
        "model round trip changed the admission model"
    );
    Ok(())
}

fn constant_model(threshold: &str) -> NbcModel {
    let half = parse_rational("1/2").unwrap();
    let row = FeatureCpt {
        p1_pos: half.clone(),
        p1_neg: half.clone(),
    };
    NbcModel::new(
        vec!["A".into(), "B".into()],
        half,
        vec![row.clone(), row],
        parse_rational(threshold).unwrap(),
    )
    .unwrap()
}

fn constant_classifiers() -> Check {
    let x: Instance = "0,1".parse().map_err(|e: Error| e.to_string())?;

    let never = ok(CompiledClassifier::build(
        constant_model("999/1000"),
        &[0, 1],
    ))?;
    ensure!(
        never.obdd.as_constant() == Some(false),
        "expected a constant-0 diagram"
    );
    ensure!(
        matches!(
            never.explain(&x, &ExplainOptions::default()),
            Err(Error::NoCounterfactualExists)
        ),
        "constant-0 classifier produced a counterfactual"
    );

    let always = ok(CompiledClassifier::build(constant_model("1/1000"), &[0, 1]))?;
    ensure!(
        always.obdd.as_constant() == Some(true),
        "expected a constant-1 diagram"
    );
    ensure!(
        !always.cnf_pos.has_empty_clause(),
        "constant-1 encoding contains the empty clause"
    );
    ensure!(
        matches!(
            always.explain(&x, &ExplainOptions::default()),
            Err(Error::NoCounterfactualExists)
        ),
        "constant-1 classifier produced a counterfactual"
    );

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("never.json");
    std::fs::write(&path, serialize_model(&constant_model("999/1000")))
        .map_err(|e| e.to_string())?;
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = cfexplain::cli::run_with(
        [
            "cfexplain",
            "explain",
            "--model",
            path.to_str().unwrap(),
            "--instance",
            "0,1",
        ],
        &mut out,
        &mut err,
    );
    ensure!(code == 2, "CLI exited with {code}, expected 2");
    Ok(())
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("1 diagram fidelity", fidelity, 30),
        ("2 CNF equivalence", cnf_equivalence, 60),
        ("3 SAT iff predicted positive", sat_iff_positive, 30),
        ("4 MCS three-way agreement", mcs_three_way, 60),
        ("5 admission example", worked_example, 1),
        ("6 scale trends", scale_trends, 300),
        ("7 structural invariants", invariants, 60),
        ("8 constant classifiers", constant_classifiers, 1),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (name, check, limit) in criteria {
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|p| {
                let msg = p
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                Err(format!("panicked: {msg}"))
            })
            .and_then(|()| {
                let elapsed = start.elapsed();
                if elapsed > Duration::from_secs(limit) {
                    Err(format!("took {elapsed:.2?}, limit {limit} s"))
                } else {
                    Ok(())
                }
            });
        let elapsed = start.elapsed();
        match outcome {
            Ok(()) => println!("PASS {name} ({elapsed:.2?})"),
            Err(reason) => {
                failed += 1;
                println!("FAIL {name} ({elapsed:.2?}): {reason}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
