//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 no counterfactual exists,
//! 3 file or parse error, 4 internal consistency failure.

use std::collections::{BTreeMap, BTreeSet};
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Parser, Subcommand};

use crate::bench::{self, BenchConfig, DEFAULT_CLAUSE_CAP};
use crate::cnf::{encode_function, from_wcnf, to_dimacs, Clause};
use crate::error::Error;
use crate::explain::{report_to_json, CompiledClassifier, ExplainOptions};
use crate::mcs::{enumerate_mcs, McsProblem};
use crate::model::{
    generate_synthetic, parse_model, parse_rational, predict, serialize_model, Instance, NbcModel,
    Rational,
};
use crate::odd::compile;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_NO_COUNTERFACTUAL: i32 = 2;
pub const EXIT_FILE: i32 = 3;
pub const EXIT_INTERNAL: i32 = 4;

const SLOW_EXPLANATION: Duration = Duration::from_secs(60);

#[derive(Parser, Debug)]
#[command(
    name = "cfexplain",
    version,
    about = "Counterfactual explanations for naive Bayes classifiers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a random synthetic classifier.
    Gen {
        #[arg(long)]
        features: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Model file to write; stdout if omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compile a model into an OBDD and report its size.
    Compile {
        #[arg(long)]
        model: PathBuf,
        /// Variable ordering as comma-separated feature indices (0-based) or names.
        #[arg(long)]
        order: Option<String>,
        /// Graphviz file to write.
        #[arg(long)]
        dot: Option<PathBuf>,
    },
    /// Encode a model's decision function (or its negation) as DIMACS CNF.
    Encode {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        negated: bool,
        #[arg(long)]
        order: Option<String>,
    },
    /// Print the predicted class (0 or 1) of an instance.
    Predict {
        #[arg(long)]
        model: PathBuf,
        /// Comma-separated 0/1 values, e.g. 1,0,1,0.
        #[arg(long)]
        instance: String,
    },
    /// Enumerate the counterfactual explanations of an instance.
    Explain {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        instance: String,
        /// Feature names that may not be flipped.
        #[arg(long)]
        immutable: Option<String>,
        /// Flip costs as NAME=RATIONAL pairs, e.g. GPA=3,WE=1/2.
        #[arg(long)]
        costs: Option<String>,
        #[arg(long)]
        max_mcs: Option<usize>,
        /// Report file to write; the JSON goes to stdout if omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        order: Option<String>,
        /// Directory for reusable CNF encodings.
        #[arg(long)]
        cache_dir: Option<PathBuf>,
    },
    /// Enumerate minimal correction subsets of a WCNF file whose soft clauses are units.
    Mcs {
        #[arg(long)]
        wcnf: PathBuf,
        #[arg(long)]
        max_mcs: Option<usize>,
    },
    /// Run the synthetic benchmark and write per-run rows plus averages as CSV.
    Bench {
        /// Comma-separated feature counts.
        #[arg(long, default_value = "5,10,16")]
        sizes: String,
        #[arg(long, default_value_t = 5)]
        per_size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_CLAUSE_CAP)]
        clause_cap: u64,
        /// Write 0 for all timing columns (byte-reproducible output).
        #[arg(long)]
        no_timing: bool,
    },
}

/// Errors carry the exit code they map to.
struct Failure {
    code: i32,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidArgument(_) | Error::InstanceShape { .. } => EXIT_USAGE,
            Error::NoCounterfactualExists => EXIT_NO_COUNTERFACTUAL,
            Error::ModelParse { .. } | Error::Dimacs { .. } | Error::Io(_) | Error::Csv(_) => {
                EXIT_FILE
            }
            Error::Internal(_) => EXIT_INTERNAL,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_USAGE,
        message: message.into(),
    }
}

fn read_file(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure {
        code: EXIT_FILE,
        message: format!("{}: {e}", path.display()),
    })
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|e| Failure {
        code: EXIT_FILE,
        message: format!("{}: {e}", path.display()),
    })
}

fn load_model(path: &Path) -> Result<NbcModel, Failure> {
    parse_model(&read_file(path)?).map_err(|e| Failure {
        code: EXIT_FILE,
        message: format!("{}: {e}", path.display()),
    })
}

fn feature_ref(model: &NbcModel, token: &str) -> Result<usize, Failure> {
    let token = token.trim();
    if let Some(i) = model.feature_index(token) {
        return Ok(i);
    }
    match token.parse::<usize>() {
        Ok(i) if i < model.n() => Ok(i),
        _ => Err(usage(format!("unknown feature `{token}`"))),
    }
}

fn parse_order(model: &NbcModel, order: Option<&str>) -> Result<Vec<usize>, Failure> {
    match order {
        None => Ok((0..model.n()).collect()),
        Some(text) => text.split(',').map(|t| feature_ref(model, t)).collect(),
    }
}

fn parse_instance(model: &NbcModel, text: &str) -> Result<Instance, Failure> {
    let x: Instance = text.parse()?;
    model.check_instance(&x)?;
    Ok(x)
}

fn emit(out: &mut dyn Write, path: Option<&Path>, contents: &str) -> Result<(), Failure> {
    match path {
        Some(p) => write_file(p, contents),
        None => out
            .write_all(contents.as_bytes())
            .map_err(|e| Error::Io(e).into()),
    }
}

fn execute(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), Failure> {
    let io = |e: std::io::Error| Failure::from(Error::Io(e));
    match cli.command {
        Command::Gen {
            features,
            seed,
            out: path,
        } => {
            let model = generate_synthetic(features, seed)?;
            emit(out, path.as_deref(), &serialize_model(&model))?;
        }
        Command::Compile { model, order, dot } => {
            let model = load_model(&model)?;
            let ordering = parse_order(&model, order.as_deref())?;
            let d = compile(&model, &ordering)?;
            writeln!(out, "nodes: {}", d.node_count()).map_err(io)?;
            writeln!(out, "models: {}", d.count_models()).map_err(io)?;
            writeln!(out, "off-set paths: {}", d.count_zero_paths()).map_err(io)?;
            if let Some(path) = dot {
                write_file(&path, &d.to_dot(model.feature_names()))?;
            }
        }
        Command::Encode {
            model,
            out: path,
            negated,
            order,
        } => {
            let model = load_model(&model)?;
            let ordering = parse_order(&model, order.as_deref())?;
            let d = compile(&model, &ordering)?;
            let d = if negated { d.negate() } else { d };
            emit(out, path.as_deref(), &to_dimacs(&encode_function(&d)))?;
        }
        Command::Predict { model, instance } => {
            let model = load_model(&model)?;
            let x = parse_instance(&model, &instance)?;
            writeln!(out, "{}", predict(&model, &x)? as u8).map_err(io)?;
        }
        Command::Explain {
            model,
            instance,
            immutable,
            costs,
            max_mcs,
            out: path,
            order,
            cache_dir,
        } => {
            let model = load_model(&model)?;
            let x = parse_instance(&model, &instance)?;
            let ordering = parse_order(&model, order.as_deref())?;
            let mut options = ExplainOptions {
                max_mcs,
                ..Default::default()
            };
            if let Some(list) = immutable.as_deref() {
                options.immutable = list
                    .split(',')
                    .map(|t| feature_ref(&model, t))
                    .collect::<Result<BTreeSet<_>, _>>()?;
            }
            if let Some(list) = costs.as_deref() {
                options.costs = parse_costs(&model, list)?;
            }
            let classifier = match cache_dir {
                Some(dir) => CompiledClassifier::load_or_build(model, &ordering, &dir)?.0,
                None => CompiledClassifier::build(model, &ordering)?,
            };
            let report = classifier.explain(&x, &options)?;
            if report.stats.elapsed_ms > SLOW_EXPLANATION.as_secs_f64() * 1e3 {
                writeln!(
                    err,
                    "warning: explanation took {:.1} s; consider --max-mcs",
                    report.stats.elapsed_ms / 1e3
                )
                .map_err(io)?;
            }
            let json = report_to_json(&report);
            match path {
                Some(p) => {
                    write_file(&p, &json)?;
                    let names = classifier.model.feature_names();
                    writeln!(out, "prediction: {}", report.prediction as u8).map_err(io)?;
                    for cf in &report.counterfactuals {
                        let flipped: Vec<&str> =
                            cf.flip_set.iter().map(|&i| names[i].as_str()).collect();
                        writeln!(
                            out,
                            "flip {{{}}} -> {}",
                            flipped.join(","),
                            cf.resulting_instance
                        )
                        .map_err(io)?;
                    }
                    if !report.complete {
                        writeln!(out, "(stopped at --max-mcs; more counterfactuals exist)")
                            .map_err(io)?;
                    }
                }
                None => out.write_all(json.as_bytes()).map_err(io)?,
            }
        }
        Command::Mcs { wcnf, max_mcs } => {
            let text = read_file(&wcnf)?;
            let instance = from_wcnf(&text)?;
            let soft: Vec<Clause> = instance.soft.iter().map(|(_, c)| c.clone()).collect();
            let problem = McsProblem::new(&instance.hard, &soft)?;
            let costs: BTreeMap<usize, _> = instance
                .soft
                .iter()
                .filter(|(w, _)| *w != 1)
                .map(|(w, c)| {
                    let var = c.as_unit().expect("checked unit").var;
                    (var, Rational::from_integer((*w).into()))
                })
                .collect();
            let problem = problem.with_costs(costs)?;
            let result = enumerate_mcs(&problem, max_mcs)?;
            for mcs in &result.mcses {
                let vars: Vec<String> = mcs.features.iter().map(|v| (v + 1).to_string()).collect();
                writeln!(out, "mcs {}", vars.join(" ")).map_err(io)?;
            }
            writeln!(
                out,
                "c {} mcs, {}",
                result.mcses.len(),
                if result.complete {
                    "complete"
                } else {
                    "incomplete"
                }
            )
            .map_err(io)?;
        }
        Command::Bench {
            sizes,
            per_size,
            seed,
            out: path,
            clause_cap,
            no_timing,
        } => {
            let sizes = sizes
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse::<usize>()
                        .map_err(|_| usage(format!("malformed size `{s}`")))
                })
                .collect::<Result<Vec<_>, _>>()?;
            let config = BenchConfig {
                sizes,
                per_size,
                seed,
                clause_cap,
                timings: !no_timing,
            };
            let records = bench::bench(&config)?;
            let csv = bench::to_csv(&records)?;
            match path {
                Some(p) => {
                    write_file(&p, &csv)?;
                    out.write_all(bench::format_table(&bench::averages(&records)).as_bytes())
                        .map_err(io)?;
                }
                None => out.write_all(csv.as_bytes()).map_err(io)?,
            }
        }
    }
    Ok(())
}

fn parse_costs(model: &NbcModel, list: &str) -> Result<BTreeMap<usize, Rational>, Failure> {
    list.split(',')
        .map(|pair| {
            let (name, value) = pair
                .split_once('=')
                .ok_or_else(|| usage(format!("cost `{pair}` is not NAME=VALUE")))?;
            let feature = feature_ref(model, name)?;
            let cost =
                parse_rational(value).ok_or_else(|| usage(format!("malformed cost `{value}`")))?;
            Ok((feature, cost))
        })
        .collect()
}

/// Runs the CLI with explicit output streams and returns the exit status.
pub fn run_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let rendered = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = out.write_all(rendered.as_bytes());
                    EXIT_OK
                }
                _ => {
                    let _ = err.write_all(rendered.as_bytes());
                    EXIT_USAGE
                }
            };
        }
    };
    match execute(cli, out, err) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}

/// Runs the CLI on the process's stdout and stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(args, &mut stdout.lock(), &mut stderr.lock())
}
