//! Binary naive Bayes classifiers with exact rational parameters.
//!
//! A model predicts class 1 for an instance `x` iff `P(Y=1 | x) >= T`. With
//! conditionally independent binary features this is decided without any
//! division by comparing posterior odds against `T / (1 - T)`.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Exact, arbitrary-precision fraction, always kept in lowest terms with a
/// positive denominator.
pub type Rational = BigRational;

/// Parses `"num/den"` (or a bare integer) into a reduced rational.
pub fn parse_rational(text: &str) -> Option<Rational> {
    let text = text.trim();
    let (num, den) = match text.split_once('/') {
        Some((n, d)) => (n.trim(), d.trim()),
        None => (text, "1"),
    };
    let num = BigInt::from_str(num).ok()?;
    let den = BigInt::from_str(den).ok()?;
    if den.is_zero() {
        return None;
    }
    Some(BigRational::new(num, den))
}

/// Formats a rational as `"num/den"`, including a `/1` for integers.
pub fn format_rational(value: &Rational) -> String {
    format!("{}/{}", value.numer(), value.denom())
}

fn in_open_unit_interval(value: &Rational) -> bool {
    value > &Rational::zero() && value < &Rational::one()
}

/// Class-conditional probabilities of one feature taking the value 1.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FeatureCpt {
    /// `p(X_i = 1 | Y = 1)`
    pub p1_pos: Rational,
    /// `p(X_i = 1 | Y = 0)`
    pub p1_neg: Rational,
}

/// A binary naive Bayes classifier.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NbcModel {
    feature_names: Vec<String>,
    prior_pos: Rational,
    cpt: Vec<FeatureCpt>,
    threshold: Rational,
    // Derived, cached for the decision path.
    prior_odds: Rational,
    decision_odds: Rational,
    ratios: Vec<[Rational; 2]>,
}

impl NbcModel {
    pub fn new(
        feature_names: Vec<String>,
        prior_pos: Rational,
        cpt: Vec<FeatureCpt>,
        threshold: Rational,
    ) -> Result<Self> {
        let invalid = |field: String, message: &str| Error::ModelParse {
            field,
            message: message.to_string(),
        };
        if feature_names.is_empty() {
            return Err(invalid("n".into(), "a model needs at least one feature"));
        }
        if cpt.len() != feature_names.len() {
            return Err(invalid(
                "cpt".into(),
                &format!("expected {} rows, found {}", feature_names.len(), cpt.len()),
            ));
        }
        let mut seen = HashSet::new();
        for (i, name) in feature_names.iter().enumerate() {
            if name.is_empty() {
                return Err(invalid(format!("feature_names[{i}]"), "empty name"));
            }
            if !seen.insert(name.as_str()) {
                return Err(invalid(
                    format!("feature_names[{i}]"),
                    &format!("duplicate name `{name}`"),
                ));
            }
        }
        if !in_open_unit_interval(&prior_pos) {
            return Err(invalid(
                "prior_pos".into(),
                "must lie strictly between 0 and 1",
            ));
        }
        if !in_open_unit_interval(&threshold) {
            return Err(invalid(
                "threshold".into(),
                "must lie strictly between 0 and 1",
            ));
        }
        for (i, row) in cpt.iter().enumerate() {
            if !in_open_unit_interval(&row.p1_pos) {
                return Err(invalid(
                    format!("cpt[{i}].p1_pos"),
                    "must lie strictly between 0 and 1",
                ));
            }
            if !in_open_unit_interval(&row.p1_neg) {
                return Err(invalid(
                    format!("cpt[{i}].p1_neg"),
                    "must lie strictly between 0 and 1",
                ));
            }
        }

        let one = Rational::one();
        let prior_odds = &prior_pos / (&one - &prior_pos);
        let decision_odds = &threshold / (&one - &threshold);
        let ratios = cpt
            .iter()
            .map(|row| {
                [
                    (&one - &row.p1_pos) / (&one - &row.p1_neg),
                    &row.p1_pos / &row.p1_neg,
                ]
            })
            .collect();
        Ok(NbcModel {
            feature_names,
            prior_pos,
            cpt,
            threshold,
            prior_odds,
            decision_odds,
            ratios,
        })
    }

    pub fn n(&self) -> usize {
        self.feature_names.len()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|f| f == name)
    }

    pub fn prior_pos(&self) -> &Rational {
        &self.prior_pos
    }

    pub fn cpt(&self) -> &[FeatureCpt] {
        &self.cpt
    }

    pub fn threshold(&self) -> &Rational {
        &self.threshold
    }

    /// `p(Y=1) / p(Y=0)`.
    pub fn prior_odds(&self) -> &Rational {
        &self.prior_odds
    }

    /// `T / (1 - T)`: posterior odds at or above this value predict class 1.
    pub fn decision_odds(&self) -> &Rational {
        &self.decision_odds
    }

    /// Likelihood ratio `p(X_i = v | Y=1) / p(X_i = v | Y=0)`.
    pub fn likelihood_ratio(&self, feature: usize, value: bool) -> &Rational {
        &self.ratios[feature][value as usize]
    }

    /// A copy of this model with a different decision threshold.
    pub fn with_threshold(&self, threshold: Rational) -> Result<Self> {
        NbcModel::new(
            self.feature_names.clone(),
            self.prior_pos.clone(),
            self.cpt.clone(),
            threshold,
        )
    }

    pub fn check_instance(&self, x: &Instance) -> Result<()> {
        if x.len() != self.n() {
            return Err(Error::InstanceShape {
                expected: self.n(),
                got: x.len(),
            });
        }
        Ok(())
    }
}

/// Posterior odds `P(Y=1|x) / P(Y=0|x)`.
pub fn posterior_odds(model: &NbcModel, x: &Instance) -> Result<Rational> {
    model.check_instance(x)?;
    let mut odds = model.prior_odds().clone();
    for (i, &v) in x.values().iter().enumerate() {
        odds *= model.likelihood_ratio(i, v);
    }
    Ok(odds)
}

/// Class 1 iff `P(Y=1|x) >= T`; a posterior exactly at the threshold is
/// positive.
pub fn predict(model: &NbcModel, x: &Instance) -> Result<bool> {
    Ok(posterior_odds(model, x)? >= *model.decision_odds())
}

/// Draws a random model with `n` features named `X1..Xn`. The prior and every
/// CPT entry are uniform over `{1/100, ..., 99/100}`; the threshold is `1/2`.
pub fn generate_synthetic(n: usize, seed: u64) -> Result<NbcModel> {
    if n == 0 {
        return Err(Error::InvalidArgument(
            "synthetic models need at least one feature".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hundredths = || Rational::new(BigInt::from(rng.gen_range(1..=99)), BigInt::from(100));
    let prior_pos = hundredths();
    let cpt = (0..n)
        .map(|_| FeatureCpt {
            p1_pos: hundredths(),
            p1_neg: hundredths(),
        })
        .collect();
    let names = (1..=n).map(|i| format!("X{i}")).collect();
    NbcModel::new(names, prior_pos, cpt, Rational::new(1.into(), 2.into()))
}

/// The admission classifier used as a running example throughout the docs and
/// tests: features WE, FA, E, GPA with prior `p(A=1) = 7/10`.
pub fn admission_example() -> NbcModel {
    let r = |text: &str| parse_rational(text).expect("literal rational");
    let row = |pos: &str, neg: &str| FeatureCpt {
        p1_pos: r(pos),
        p1_neg: r(neg),
    };
    NbcModel::new(
        ["WE", "FA", "E", "GPA"]
            .iter()
            .map(|s| s.to_string())
            .collect(),
        r("7/10"),
        vec![
            row("3/10", "8/10"),
            row("2/10", "7/10"),
            row("15/100", "4/10"),
            row("11/100", "97/100"),
        ],
        r("1/2"),
    )
    .expect("valid example model")
}

// ---------------------------------------------------------------------------
// Model file format

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CptRecord {
    p1_pos: String,
    p1_neg: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelRecord {
    n: usize,
    feature_names: Vec<String>,
    prior_pos: String,
    threshold: String,
    cpt: Vec<CptRecord>,
}

/// Serializes a model to the JSON model-file format (pretty-printed, trailing
/// newline).
pub fn serialize_model(model: &NbcModel) -> String {
    let record = ModelRecord {
        n: model.n(),
        feature_names: model.feature_names.clone(),
        prior_pos: format_rational(&model.prior_pos),
        threshold: format_rational(&model.threshold),
        cpt: model
            .cpt
            .iter()
            .map(|row| CptRecord {
                p1_pos: format_rational(&row.p1_pos),
                p1_neg: format_rational(&row.p1_neg),
            })
            .collect(),
    };
    let mut text = serde_json::to_string_pretty(&record).expect("model serializes");
    text.push('\n');
    text
}

pub fn parse_model(text: &str) -> Result<NbcModel> {
    let record: ModelRecord = serde_json::from_str(text).map_err(|e| Error::ModelParse {
        field: "<document>".into(),
        message: e.to_string(),
    })?;
    let field_rational = |field: String, value: &str| {
        parse_rational(value).ok_or_else(|| Error::ModelParse {
            field,
            message: format!("malformed rational `{value}`"),
        })
    };
    if record.n != record.feature_names.len() {
        return Err(Error::ModelParse {
            field: "n".into(),
            message: format!(
                "n = {} but {} feature names given",
                record.n,
                record.feature_names.len()
            ),
        });
    }
    let prior_pos = field_rational("prior_pos".into(), &record.prior_pos)?;
    let threshold = field_rational("threshold".into(), &record.threshold)?;
    let cpt = record
        .cpt
        .iter()
        .enumerate()
        .map(|(i, row)| {
            Ok(FeatureCpt {
                p1_pos: field_rational(format!("cpt[{i}].p1_pos"), &row.p1_pos)?,
                p1_neg: field_rational(format!("cpt[{i}].p1_neg"), &row.p1_neg)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    NbcModel::new(record.feature_names, prior_pos, cpt, threshold)
}

// ---------------------------------------------------------------------------
// Instances

/// A complete assignment of binary feature values, index-aligned with the
/// model's feature names.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Instance(Vec<bool>);

impl Instance {
    pub fn new(values: Vec<bool>) -> Self {
        Instance(values)
    }

    /// Builds an instance from 0/1 integers; any other value is rejected.
    pub fn from_bits(bits: &[u8]) -> Result<Self> {
        bits.iter()
            .map(|&b| match b {
                0 => Ok(false),
                1 => Ok(true),
                other => Err(Error::InvalidArgument(format!(
                    "instance values must be 0 or 1, got {other}"
                ))),
            })
            .collect::<Result<Vec<_>>>()
            .map(Instance)
    }

    /// The instance whose bits are the low `n` bits of `code`, feature 0 first
    /// in the most significant position.
    pub fn from_index(code: u64, n: usize) -> Self {
        Instance((0..n).map(|i| (code >> (n - 1 - i)) & 1 == 1).collect())
    }

    pub fn values(&self) -> &[bool] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, i: usize) -> bool {
        self.0[i]
    }

    pub fn bits(&self) -> Vec<u8> {
        self.0.iter().map(|&v| v as u8).collect()
    }
}

impl FromStr for Instance {
    type Err = Error;

    /// Parses a comma-separated `0`/`1` list such as `1,0,1,0`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() {
            return Err(Error::InvalidArgument("empty instance".into()));
        }
        s.split(',')
            .map(|tok| match tok.trim() {
                "0" => Ok(false),
                "1" => Ok(true),
                other => Err(Error::InvalidArgument(format!(
                    "malformed instance value `{other}` (expected 0 or 1)"
                ))),
            })
            .collect::<Result<Vec<_>>>()
            .map(Instance)
    }
}

impl fmt::Display for Instance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, &v) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            f.write_str(if v { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl Serialize for Instance {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.bits().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Instance {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let bits = Vec::<u8>::deserialize(deserializer)?;
        Instance::from_bits(&bits).map_err(serde::de::Error::custom)
    }
}
