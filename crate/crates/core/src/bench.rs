//! Synthetic benchmark: random classifiers of several sizes pushed through
//! the whole pipeline, reported per run and as per-size averages.

use std::fmt::Write as _;
use std::time::Instant;

use num_traits::ToPrimitive;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cnf::encode_function;
use crate::error::{Error, Result};
use crate::explain::{explain_diagram, ExplainOptions};
use crate::model::{generate_synthetic, Instance};
use crate::odd::compile_default;

pub const MAX_BENCH_FEATURES: usize = 25;
pub const DEFAULT_CLAUSE_CAP: u64 = 1_000_000;

#[derive(Clone, Debug)]
pub struct BenchConfig {
    pub sizes: Vec<usize>,
    pub per_size: usize,
    pub seed: u64,
    /// Cells whose encoding would exceed this many clauses are skipped.
    pub clause_cap: u64,
    /// When false, every time column is written as 0 so output depends only
    /// on the configuration.
    pub timings: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CellStatus {
    Ok,
    /// Aborted before encoding: clause count above the cap.
    ClauseCap,
    /// The classifier is constant in the direction the instance needed.
    NoCounterfactual,
}

impl CellStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            CellStatus::Ok => "ok",
            CellStatus::ClauseCap => "clause_cap",
            CellStatus::NoCounterfactual => "no_counterfactual",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "ok" => Some(CellStatus::Ok),
            "clause_cap" => Some(CellStatus::ClauseCap),
            "no_counterfactual" => Some(CellStatus::NoCounterfactual),
            _ => None,
        }
    }
}

/// One model run through compile, encode and MCS enumeration.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchRecord {
    pub n: usize,
    /// Seed the model was generated from.
    pub seed: u64,
    pub obdd_nodes: usize,
    pub cnf_clauses: u64,
    pub encode_time_ms: f64,
    /// `None` unless `status` is `Ok`.
    pub mcs_count: Option<usize>,
    pub enumerate_time_ms: Option<f64>,
    pub status: CellStatus,
}

/// Per-size means; MCS columns average the `Ok` runs only.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchAverage {
    pub n: usize,
    pub runs: usize,
    pub obdd_nodes: f64,
    pub cnf_clauses: f64,
    pub encode_time_ms: f64,
    pub mcs_count: Option<f64>,
    pub enumerate_time_ms: Option<f64>,
}

/// Model seeds for one size; independent of which other sizes are run.
fn model_seeds(seed: u64, n: usize, count: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(n as u64);
    (0..count).map(|_| rng.next_u64()).collect()
}

fn random_instance(model_seed: u64, n: usize) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(model_seed);
    rng.set_stream(u64::MAX);
    Instance::new((0..n).map(|_| rng.gen::<bool>()).collect())
}

fn run_cell(n: usize, model_seed: u64, config: &BenchConfig) -> Result<BenchRecord> {
    let ms = |t: Instant| {
        if config.timings {
            t.elapsed().as_secs_f64() * 1e3
        } else {
            0.0
        }
    };
    let model = generate_synthetic(n, model_seed)?;
    let d = compile_default(&model)?;
    let negated = d.negate();
    let x = random_instance(model_seed, n);
    let prediction = d.evaluate(&x)?;

    let pos_paths = d.count_zero_paths().to_u64().unwrap_or(u64::MAX);
    let needed_paths = if prediction {
        negated.count_zero_paths().to_u64().unwrap_or(u64::MAX)
    } else {
        pos_paths
    };
    let mut record = BenchRecord {
        n,
        seed: model_seed,
        obdd_nodes: d.node_count(),
        cnf_clauses: pos_paths,
        encode_time_ms: 0.0,
        mcs_count: None,
        enumerate_time_ms: None,
        status: CellStatus::ClauseCap,
    };
    if pos_paths > config.clause_cap || needed_paths > config.clause_cap {
        return Ok(record);
    }

    let t = Instant::now();
    let cnf_pos = encode_function(&d);
    let cnf_neg = encode_function(&negated);
    record.encode_time_ms = ms(t);
    record.cnf_clauses = cnf_pos.len() as u64;

    let t = Instant::now();
    match explain_diagram(
        &d,
        &cnf_pos,
        &cnf_neg,
        model.feature_names(),
        &x,
        &ExplainOptions::default(),
    ) {
        Ok(report) => {
            record.mcs_count = Some(report.counterfactuals.len());
            record.enumerate_time_ms = Some(ms(t));
            record.status = CellStatus::Ok;
        }
        Err(Error::NoCounterfactualExists) => record.status = CellStatus::NoCounterfactual,
        Err(e) => return Err(e),
    }
    Ok(record)
}

/// Runs `per_size` models for every size in `config.sizes`.
pub fn bench(config: &BenchConfig) -> Result<Vec<BenchRecord>> {
    if config.per_size == 0 {
        return Err(Error::InvalidArgument("per-size must be at least 1".into()));
    }
    if config.sizes.is_empty() {
        return Err(Error::InvalidArgument("no sizes given".into()));
    }
    for &n in &config.sizes {
        if !(1..=MAX_BENCH_FEATURES).contains(&n) {
            return Err(Error::InvalidArgument(format!(
                "size {n} outside 1..={MAX_BENCH_FEATURES}"
            )));
        }
    }
    let mut records = Vec::new();
    for &n in &config.sizes {
        for model_seed in model_seeds(config.seed, n, config.per_size) {
            records.push(run_cell(n, model_seed, config)?);
        }
    }
    Ok(records)
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, count) = values.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    (count > 0).then(|| sum / count as f64)
}

/// Per-size averages in order of first appearance.
pub fn averages(records: &[BenchRecord]) -> Vec<BenchAverage> {
    let mut sizes: Vec<usize> = Vec::new();
    for r in records {
        if !sizes.contains(&r.n) {
            sizes.push(r.n);
        }
    }
    sizes
        .into_iter()
        .map(|n| {
            let rows: Vec<&BenchRecord> = records.iter().filter(|r| r.n == n).collect();
            let ok: Vec<&&BenchRecord> =
                rows.iter().filter(|r| r.status == CellStatus::Ok).collect();
            BenchAverage {
                n,
                runs: rows.len(),
                obdd_nodes: mean(rows.iter().map(|r| r.obdd_nodes as f64)).unwrap_or(0.0),
                cnf_clauses: mean(rows.iter().map(|r| r.cnf_clauses as f64)).unwrap_or(0.0),
                encode_time_ms: mean(rows.iter().map(|r| r.encode_time_ms)).unwrap_or(0.0),
                mcs_count: mean(ok.iter().filter_map(|r| r.mcs_count).map(|c| c as f64)),
                enumerate_time_ms: mean(ok.iter().filter_map(|r| r.enumerate_time_ms)),
            }
        })
        .collect()
}

const CSV_HEADER: [&str; 9] = [
    "kind",
    "vars",
    "seed",
    "obdd_size",
    "cnf_size",
    "encoding_runtime_ms",
    "mcs",
    "runtime_ms",
    "status",
];

fn fmt_opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// Raw rows (`kind = run`) followed by per-size averages (`kind = avg`).
pub fn to_csv(records: &[BenchRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER)?;
    for r in records {
        w.write_record([
            "run".to_string(),
            r.n.to_string(),
            r.seed.to_string(),
            r.obdd_nodes.to_string(),
            r.cnf_clauses.to_string(),
            format!("{:.3}", r.encode_time_ms),
            fmt_opt(r.mcs_count),
            fmt_opt(r.enumerate_time_ms.map(|t| format!("{t:.3}"))),
            r.status.as_str().to_string(),
        ])?;
    }
    for a in averages(records) {
        w.write_record([
            "avg".to_string(),
            a.n.to_string(),
            String::new(),
            format!("{:.3}", a.obdd_nodes),
            format!("{:.3}", a.cnf_clauses),
            format!("{:.3}", a.encode_time_ms),
            fmt_opt(a.mcs_count.map(|c| format!("{c:.3}"))),
            fmt_opt(a.enumerate_time_ms.map(|t| format!("{t:.3}"))),
            String::new(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Reads back the `run` rows of a bench CSV; `avg` rows are recomputable and
/// skipped.
pub fn from_csv(text: &str) -> Result<Vec<BenchRecord>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header = reader.headers()?.clone();
    if header.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(Error::InvalidArgument(
            "bench csv: unexpected header".into(),
        ));
    }
    let mut out = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row?;
        let bad =
            |col: &str| Error::InvalidArgument(format!("bench csv row {}: bad `{col}`", i + 2));
        if &row[0] != "run" {
            continue;
        }
        let opt = |col: usize| -> Option<&str> { Some(&row[col]).filter(|s| !s.is_empty()) };
        out.push(BenchRecord {
            n: row[1].parse().map_err(|_| bad("vars"))?,
            seed: row[2].parse().map_err(|_| bad("seed"))?,
            obdd_nodes: row[3].parse().map_err(|_| bad("obdd_size"))?,
            cnf_clauses: row[4].parse().map_err(|_| bad("cnf_size"))?,
            encode_time_ms: row[5].parse().map_err(|_| bad("encoding_runtime_ms"))?,
            mcs_count: opt(6)
                .map(|s| s.parse().map_err(|_| bad("mcs")))
                .transpose()?,
            enumerate_time_ms: opt(7)
                .map(|s| s.parse().map_err(|_| bad("runtime_ms")))
                .transpose()?,
            status: CellStatus::parse(&row[8]).ok_or_else(|| bad("status"))?,
        });
    }
    Ok(out)
}

/// Averages as a table with one column per size.
pub fn format_table(averages: &[BenchAverage]) -> String {
    let mut out = String::new();
    let row = |out: &mut String, label: &str, cells: Vec<String>| {
        let _ = write!(out, "{label:<22}");
        for c in cells {
            let _ = write!(out, " {c:>12}");
        }
        out.push('\n');
    };
    let num = |v: f64| format!("{v:.1}");
    let opt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), num);
    row(
        &mut out,
        "#Vars",
        averages.iter().map(|a| a.n.to_string()).collect(),
    );
    row(
        &mut out,
        "OBDD_size",
        averages.iter().map(|a| num(a.obdd_nodes)).collect(),
    );
    row(
        &mut out,
        "CNF_size",
        averages.iter().map(|a| num(a.cnf_clauses)).collect(),
    );
    row(
        &mut out,
        "Encoding_Runtime (ms)",
        averages.iter().map(|a| num(a.encode_time_ms)).collect(),
    );
    row(
        &mut out,
        "#MCS",
        averages.iter().map(|a| opt(a.mcs_count)).collect(),
    );
    row(
        &mut out,
        "Runtime (ms)",
        averages.iter().map(|a| opt(a.enumerate_time_ms)).collect(),
    );
    out
}
