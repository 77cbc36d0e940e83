//! Counterfactual explanations of single predictions.
//!
//! For an instance predicted 0 the hard clauses are the encoding of the
//! classifier itself; for an instance predicted 1 they are the encoding of its
//! negation. In both cases the instance's unit clauses are soft, and every
//! minimal correction subset is exactly a minimal set of feature flips that
//! inverts the prediction.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cnf::{encode_function, encode_instance, from_dimacs, to_dimacs, CnfFormula};
use crate::error::{Error, Result};
use crate::mcs::{enumerate_mcs, McsProblem};
use crate::model::{
    format_rational, parse_rational, predict, serialize_model, Instance, NbcModel, Rational,
};
use crate::odd::{compile, Obdd};

/// Which clause set played the hard part.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    /// Encoding of `f`; used for instances predicted 0.
    #[serde(rename = "sigma_f")]
    Function,
    /// Encoding of `1 - f`; used for instances predicted 1.
    #[serde(rename = "sigma_not_f")]
    Negation,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Counterfactual {
    /// Sorted 0-based feature indices to flip.
    pub flip_set: Vec<usize>,
    pub resulting_instance: Instance,
    pub cost: Rational,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub clause_count: usize,
    pub sat_calls: u64,
    pub elapsed_ms: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExplanationReport {
    pub feature_names: Vec<String>,
    pub instance: Instance,
    pub prediction: bool,
    pub direction: Direction,
    /// Sorted by `(cost, cardinality, flip_set)`.
    pub counterfactuals: Vec<Counterfactual>,
    pub stats: Stats,
    pub complete: bool,
}

#[derive(Clone, Debug, Default)]
pub struct ExplainOptions {
    /// Per-feature flip costs (0-based index); unlisted features cost 1.
    pub costs: BTreeMap<usize, Rational>,
    /// Features that may not be flipped.
    pub immutable: BTreeSet<usize>,
    pub max_mcs: Option<usize>,
}

/// `x` with every feature in `flips` inverted.
pub fn apply_flips(x: &Instance, flips: &[usize]) -> Result<Instance> {
    let mut values = x.values().to_vec();
    for &i in flips {
        let slot = values.get_mut(i).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "flip index {i} out of range for an instance of {} features",
                x.len()
            ))
        })?;
        *slot = !*slot;
    }
    Ok(Instance::new(values))
}

/// Explains the diagram's prediction on `x`. `cnf_pos` and `cnf_neg` must be
/// the encodings of `d` and of its negation.
pub fn explain_diagram(
    d: &Obdd,
    cnf_pos: &CnfFormula,
    cnf_neg: &CnfFormula,
    feature_names: &[String],
    x: &Instance,
    options: &ExplainOptions,
) -> Result<ExplanationReport> {
    let start = Instant::now();
    let prediction = d.evaluate(x)?;
    let (direction, hard) = if prediction {
        (Direction::Negation, cnf_neg)
    } else {
        (Direction::Function, cnf_pos)
    };
    if hard.num_vars() != x.len() {
        return Err(Error::InstanceShape {
            expected: hard.num_vars(),
            got: x.len(),
        });
    }

    let soft = encode_instance(x);
    let problem = McsProblem::new(hard, &soft)?
        .with_costs(options.costs.clone())?
        .with_immutable(options.immutable.clone())?;
    let enumeration = enumerate_mcs(&problem, options.max_mcs)?;

    let mut counterfactuals = Vec::with_capacity(enumeration.mcses.len());
    for mcs in enumeration.mcses {
        let resulting_instance = apply_flips(x, &mcs.features)?;
        if d.evaluate(&resulting_instance)? == prediction {
            return Err(Error::Internal(format!(
                "flipping {:?} does not invert the prediction on {x}",
                mcs.features
            )));
        }
        counterfactuals.push(Counterfactual {
            flip_set: mcs.features,
            resulting_instance,
            cost: mcs.cost,
        });
    }

    Ok(ExplanationReport {
        feature_names: feature_names.to_vec(),
        instance: x.clone(),
        prediction,
        direction,
        counterfactuals,
        stats: Stats {
            clause_count: hard.len(),
            sat_calls: enumeration.sat_calls,
            elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
        },
        complete: enumeration.complete,
    })
}

/// Explains `predict(model, x)` using the model's compiled diagram and its
/// two encodings.
pub fn explain(
    model: &NbcModel,
    d: &Obdd,
    cnf_pos: &CnfFormula,
    cnf_neg: &CnfFormula,
    x: &Instance,
    options: &ExplainOptions,
) -> Result<ExplanationReport> {
    let prediction = predict(model, x)?;
    if d.evaluate(x)? != prediction {
        return Err(Error::Internal(format!(
            "diagram and model disagree on {x}"
        )));
    }
    explain_diagram(d, cnf_pos, cnf_neg, model.feature_names(), x, options)
}

/// A model compiled once and encoded in both directions, ready to explain any
/// number of instances.
#[derive(Clone, Debug)]
pub struct CompiledClassifier {
    pub model: NbcModel,
    pub obdd: Obdd,
    pub cnf_pos: CnfFormula,
    pub cnf_neg: CnfFormula,
}

impl CompiledClassifier {
    pub fn build(model: NbcModel, ordering: &[usize]) -> Result<Self> {
        let obdd = compile(&model, ordering)?;
        let cnf_pos = encode_function(&obdd);
        let cnf_neg = encode_function(&obdd.negate());
        Ok(CompiledClassifier {
            model,
            obdd,
            cnf_pos,
            cnf_neg,
        })
    }

    /// Like [`CompiledClassifier::build`], but reuses both encodings from
    /// `cache_dir` when present (keyed by a hash of the model file and the
    /// ordering) and stores them otherwise. Returns whether the cache hit.
    pub fn load_or_build(
        model: NbcModel,
        ordering: &[usize],
        cache_dir: &Path,
    ) -> Result<(Self, bool)> {
        let key = cache_key(&model, ordering);
        let pos_path = cache_dir.join(format!("{key}.pos.cnf"));
        let neg_path = cache_dir.join(format!("{key}.neg.cnf"));
        let obdd = compile(&model, ordering)?;

        let cached = (|| -> Option<(CnfFormula, CnfFormula)> {
            let pos = from_dimacs(&fs::read_to_string(&pos_path).ok()?).ok()?;
            let neg = from_dimacs(&fs::read_to_string(&neg_path).ok()?).ok()?;
            (pos.num_vars() == model.n() && neg.num_vars() == model.n()).then_some((pos, neg))
        })();
        if let Some((cnf_pos, cnf_neg)) = cached {
            return Ok((
                CompiledClassifier {
                    model,
                    obdd,
                    cnf_pos,
                    cnf_neg,
                },
                true,
            ));
        }

        let cnf_pos = encode_function(&obdd);
        let cnf_neg = encode_function(&obdd.negate());
        fs::create_dir_all(cache_dir)?;
        fs::write(&pos_path, to_dimacs(&cnf_pos))?;
        fs::write(&neg_path, to_dimacs(&cnf_neg))?;
        Ok((
            CompiledClassifier {
                model,
                obdd,
                cnf_pos,
                cnf_neg,
            },
            false,
        ))
    }

    pub fn explain(&self, x: &Instance, options: &ExplainOptions) -> Result<ExplanationReport> {
        explain(
            &self.model,
            &self.obdd,
            &self.cnf_pos,
            &self.cnf_neg,
            x,
            options,
        )
    }
}

/// Hex SHA-256 of the serialized model and the ordering.
pub fn cache_key(model: &NbcModel, ordering: &[usize]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(serialize_model(model).as_bytes());
    hasher.update(b"ordering:");
    for f in ordering {
        hasher.update(format!("{f},").as_bytes());
    }
    hex::encode(hasher.finalize())
}

// ---------------------------------------------------------------------------
// Report file format

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CounterfactualRecord {
    flipped_feature_names: Vec<String>,
    flip_indices: Vec<usize>,
    resulting_instance: Instance,
    cost: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReportRecord {
    feature_names: Vec<String>,
    instance: Instance,
    prediction: u8,
    direction: Direction,
    counterfactuals: Vec<CounterfactualRecord>,
    stats: Stats,
    complete: bool,
}

pub fn report_to_json(report: &ExplanationReport) -> String {
    let record = ReportRecord {
        feature_names: report.feature_names.clone(),
        instance: report.instance.clone(),
        prediction: report.prediction as u8,
        direction: report.direction,
        counterfactuals: report
            .counterfactuals
            .iter()
            .map(|cf| CounterfactualRecord {
                flipped_feature_names: cf
                    .flip_set
                    .iter()
                    .map(|&i| report.feature_names[i].clone())
                    .collect(),
                flip_indices: cf.flip_set.clone(),
                resulting_instance: cf.resulting_instance.clone(),
                cost: format_rational(&cf.cost),
            })
            .collect(),
        stats: report.stats.clone(),
        complete: report.complete,
    };
    let mut text = serde_json::to_string_pretty(&record).expect("report serializes");
    text.push('\n');
    text
}

pub fn report_from_json(text: &str) -> Result<ExplanationReport> {
    let bad = |message: String| Error::InvalidArgument(format!("report: {message}"));
    let record: ReportRecord = serde_json::from_str(text).map_err(|e| bad(e.to_string()))?;
    let prediction = match record.prediction {
        0 => false,
        1 => true,
        other => return Err(bad(format!("prediction must be 0 or 1, got {other}"))),
    };
    let counterfactuals = record
        .counterfactuals
        .into_iter()
        .map(|cf| {
            let cost = parse_rational(&cf.cost)
                .ok_or_else(|| bad(format!("malformed cost `{}`", cf.cost)))?;
            Ok(Counterfactual {
                flip_set: cf.flip_indices,
                resulting_instance: cf.resulting_instance,
                cost,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ExplanationReport {
        feature_names: record.feature_names,
        instance: record.instance,
        prediction,
        direction: record.direction,
        counterfactuals,
        stats: record.stats,
        complete: record.complete,
    })
}
