//! Clausal encoding of decision diagrams and instances, plus DIMACS CNF/WCNF
//! text I/O.
//!
//! A diagram is encoded by negating each of its root-to-0-sink paths into one
//! clause. No auxiliary variables are introduced, so the clauses range over
//! the classifier's features only and the formula is satisfied by exactly the
//! instances the diagram maps to 1.

use std::collections::BTreeSet;
use std::fmt::{self, Write as _};

use crate::error::{Error, Result};
use crate::model::Instance;
use crate::odd::{Obdd, PathTerm};

/// A total 0/1 assignment to variables `1..=n`; stored 0-based like an
/// [`Instance`].
pub type Assignment = Instance;

/// A feature variable or its negation. `var` is 0-based; DIMACS output uses
/// `var + 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Literal {
    pub var: usize,
    pub positive: bool,
}

impl Literal {
    pub fn new(var: usize, positive: bool) -> Self {
        Literal { var, positive }
    }

    pub fn pos(var: usize) -> Self {
        Literal::new(var, true)
    }

    pub fn neg(var: usize) -> Self {
        Literal::new(var, false)
    }

    pub fn negated(self) -> Self {
        Literal::new(self.var, !self.positive)
    }

    /// Signed 1-based DIMACS integer.
    pub fn to_dimacs(self) -> i64 {
        let v = self.var as i64 + 1;
        if self.positive {
            v
        } else {
            -v
        }
    }

    /// `None` for `0`.
    pub fn from_dimacs(value: i64) -> Option<Self> {
        if value == 0 {
            return None;
        }
        Some(Literal::new(value.unsigned_abs() as usize - 1, value > 0))
    }

    pub fn is_satisfied_by(self, a: &Assignment) -> bool {
        a.get(self.var) == self.positive
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_dimacs())
    }
}

/// A disjunction of literals with no repeated variable. Empty means false.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Clause(Vec<Literal>);

impl Clause {
    /// Rejects complementary pairs; repeated identical literals are merged.
    pub fn new(literals: Vec<Literal>) -> Result<Self> {
        let mut seen: BTreeSet<Literal> = BTreeSet::new();
        let mut out = Vec::with_capacity(literals.len());
        for lit in literals {
            if seen.contains(&lit.negated()) {
                return Err(Error::InvalidArgument(format!(
                    "clause contains both {lit} and {}",
                    lit.negated()
                )));
            }
            if seen.insert(lit) {
                out.push(lit);
            }
        }
        Ok(Clause(out))
    }

    pub fn unit(lit: Literal) -> Self {
        Clause(vec![lit])
    }

    pub fn literals(&self) -> &[Literal] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_unit(&self) -> Option<Literal> {
        match self.0.as_slice() {
            [lit] => Some(*lit),
            _ => None,
        }
    }

    pub fn is_satisfied_by(&self, a: &Assignment) -> bool {
        self.0.iter().any(|l| l.is_satisfied_by(a))
    }

    fn max_var(&self) -> Option<usize> {
        self.0.iter().map(|l| l.var).max()
    }

    fn write_dimacs(&self, out: &mut String) {
        for lit in &self.0 {
            let _ = write!(out, "{} ", lit.to_dimacs());
        }
        out.push_str("0\n");
    }
}

/// The negation of an off-set term.
fn clause_of_path(term: &PathTerm) -> Clause {
    Clause(
        term.bindings
            .iter()
            .map(|&(var, value)| Literal::new(var, !value))
            .collect(),
    )
}

/// A conjunction of clauses over variables `0..num_vars`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CnfFormula {
    num_vars: usize,
    clauses: Vec<Clause>,
}

impl CnfFormula {
    pub fn new(num_vars: usize, clauses: Vec<Clause>) -> Result<Self> {
        for (i, clause) in clauses.iter().enumerate() {
            if let Some(v) = clause.max_var() {
                if v >= num_vars {
                    return Err(Error::InvalidArgument(format!(
                        "clause {i} mentions variable {} but the formula has {num_vars}",
                        v + 1
                    )));
                }
            }
        }
        Ok(CnfFormula { num_vars, clauses })
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn clauses(&self) -> &[Clause] {
        &self.clauses
    }

    pub fn len(&self) -> usize {
        self.clauses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clauses.is_empty()
    }

    pub fn has_empty_clause(&self) -> bool {
        self.clauses.iter().any(Clause::is_empty)
    }

    pub fn is_satisfied_by(&self, a: &Assignment) -> bool {
        self.clauses.iter().all(|c| c.is_satisfied_by(a))
    }

    /// This formula with extra clauses appended.
    pub fn with_clauses(&self, extra: impl IntoIterator<Item = Clause>) -> Result<Self> {
        let mut clauses = self.clauses.clone();
        clauses.extend(extra);
        CnfFormula::new(self.num_vars, clauses)
    }
}

/// Encodes the function of `d` as one clause per root-to-0-sink path. A
/// constant-1 diagram yields no clauses; a constant-0 diagram yields a single
/// empty clause.
pub fn encode_function(d: &Obdd) -> CnfFormula {
    let clauses = d.zero_paths().iter().map(clause_of_path).collect();
    CnfFormula {
        num_vars: d.num_vars(),
        clauses,
    }
}

/// One unit clause per feature fixing it to its value in `x`.
pub fn encode_instance(x: &Instance) -> Vec<Clause> {
    x.values()
        .iter()
        .enumerate()
        .map(|(i, &v)| Clause::unit(Literal::new(i, v)))
        .collect()
}

// ---------------------------------------------------------------------------
// DIMACS

pub fn to_dimacs(f: &CnfFormula) -> String {
    let mut out = format!("p cnf {} {}\n", f.num_vars, f.clauses.len());
    for clause in &f.clauses {
        clause.write_dimacs(&mut out);
    }
    out
}

/// Weighted variant: hard clauses carry weight `top`, soft clauses their own
/// weight (1 when `soft_weights` is `None`). `top` is one more than the sum of
/// the soft weights.
pub fn to_wcnf(hard: &CnfFormula, soft: &[Clause], soft_weights: Option<&[u64]>) -> String {
    let weight = |i: usize| soft_weights.map_or(1, |w| w[i]);
    let top: u64 = (0..soft.len()).map(weight).sum::<u64>() + 1;
    let num_vars = soft
        .iter()
        .filter_map(Clause::max_var)
        .map(|v| v + 1)
        .fold(hard.num_vars, usize::max);
    let mut out = format!(
        "p wcnf {} {} {}\n",
        num_vars,
        hard.clauses.len() + soft.len(),
        top
    );
    for clause in &hard.clauses {
        let _ = write!(out, "{top} ");
        clause.write_dimacs(&mut out);
    }
    for (i, clause) in soft.iter().enumerate() {
        let _ = write!(out, "{} ", weight(i));
        clause.write_dimacs(&mut out);
    }
    out
}

/// A parsed WCNF file: clauses of weight `>= top` are hard.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WcnfInstance {
    pub hard: CnfFormula,
    pub soft: Vec<(u64, Clause)>,
    pub top: u64,
}

enum Header {
    Cnf {
        vars: usize,
        clauses: usize,
    },
    Wcnf {
        vars: usize,
        clauses: usize,
        top: u64,
    },
}

struct ParsedBody {
    header: Header,
    /// (line of terminator, optional weight, clause)
    clauses: Vec<(usize, Option<u64>, Clause)>,
}

fn dimacs_err(line: usize, message: impl Into<String>) -> Error {
    Error::Dimacs {
        line,
        message: message.into(),
    }
}

fn parse_header(line_no: usize, line: &str) -> Result<Header> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    let num = |s: &str, what: &str| {
        s.parse::<u64>()
            .map_err(|_| dimacs_err(line_no, format!("bad {what} `{s}` in header")))
    };
    match fields.as_slice() {
        ["p", "cnf", vars, clauses] => Ok(Header::Cnf {
            vars: num(vars, "variable count")? as usize,
            clauses: num(clauses, "clause count")? as usize,
        }),
        ["p", "wcnf", vars, clauses, top] => Ok(Header::Wcnf {
            vars: num(vars, "variable count")? as usize,
            clauses: num(clauses, "clause count")? as usize,
            top: num(top, "top weight")?,
        }),
        _ => Err(dimacs_err(line_no, format!("bad header `{line}`"))),
    }
}

fn parse_body(text: &str) -> Result<ParsedBody> {
    let mut header = None;
    let mut clauses = Vec::new();
    let mut current: Vec<Literal> = Vec::new();
    let mut weight: Option<u64> = None;
    let mut at_clause_start = true;
    let mut last_line = 0;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        last_line = line_no;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('c') {
            continue;
        }
        let Some(h) = &header else {
            if !line.starts_with('p') {
                return Err(dimacs_err(line_no, "expected `p cnf` or `p wcnf` header"));
            }
            header = Some(parse_header(line_no, line)?);
            continue;
        };
        if line.starts_with('p') {
            return Err(dimacs_err(line_no, "duplicate header"));
        }
        let (vars, weighted) = match h {
            Header::Cnf { vars, .. } => (*vars, false),
            Header::Wcnf { vars, .. } => (*vars, true),
        };
        for tok in line.split_whitespace() {
            if weighted && at_clause_start {
                let w = tok
                    .parse::<u64>()
                    .map_err(|_| dimacs_err(line_no, format!("bad clause weight `{tok}`")))?;
                if w == 0 {
                    return Err(dimacs_err(line_no, "clause weight must be positive"));
                }
                weight = Some(w);
                at_clause_start = false;
                continue;
            }
            at_clause_start = false;
            let value = tok
                .parse::<i64>()
                .map_err(|_| dimacs_err(line_no, format!("bad literal `{tok}`")))?;
            match Literal::from_dimacs(value) {
                None => {
                    let clause = Clause::new(std::mem::take(&mut current))
                        .map_err(|e| dimacs_err(line_no, e.to_string()))?;
                    clauses.push((line_no, weight.take(), clause));
                    at_clause_start = true;
                }
                Some(lit) => {
                    if lit.var >= vars {
                        return Err(dimacs_err(
                            line_no,
                            format!("literal {value} out of range for {vars} variables"),
                        ));
                    }
                    current.push(lit);
                }
            }
        }
    }

    let Some(header) = header else {
        return Err(dimacs_err(last_line.max(1), "missing header"));
    };
    if !at_clause_start {
        return Err(dimacs_err(
            last_line,
            "last clause is missing its `0` terminator",
        ));
    }
    let declared = match header {
        Header::Cnf { clauses, .. } | Header::Wcnf { clauses, .. } => clauses,
    };
    if declared != clauses.len() {
        return Err(dimacs_err(
            last_line,
            format!(
                "header declares {declared} clauses, found {}",
                clauses.len()
            ),
        ));
    }
    Ok(ParsedBody { header, clauses })
}

/// Parses a `p cnf` file. Comment lines starting with `c` are ignored.
pub fn from_dimacs(text: &str) -> Result<CnfFormula> {
    let body = parse_body(text)?;
    match body.header {
        Header::Cnf { vars, .. } => Ok(CnfFormula {
            num_vars: vars,
            clauses: body.clauses.into_iter().map(|(_, _, c)| c).collect(),
        }),
        Header::Wcnf { .. } => Err(dimacs_err(1, "expected `p cnf`, found `p wcnf`")),
    }
}

/// Parses a `p wcnf` file into hard and weighted soft clauses.
pub fn from_wcnf(text: &str) -> Result<WcnfInstance> {
    let body = parse_body(text)?;
    let Header::Wcnf { vars, top, .. } = body.header else {
        return Err(dimacs_err(1, "expected `p wcnf`, found `p cnf`"));
    };
    let mut hard = Vec::new();
    let mut soft = Vec::new();
    for (_, weight, clause) in body.clauses {
        let w = weight.expect("weighted clauses carry a weight");
        if w >= top {
            hard.push(clause);
        } else {
            soft.push((w, clause));
        }
    }
    Ok(WcnfInstance {
        hard: CnfFormula {
            num_vars: vars,
            clauses: hard,
        },
        soft,
        top,
    })
}
