//! Minimal correction subsets of a hard formula plus soft unit clauses.
//!
//! Soft clauses are unit literals over pairwise distinct variables, so a
//! correction subset is just a set of variables whose soft literal gets
//! dropped, and a blocking clause for a found subset `D` is the disjunction of
//! the soft literals of `D` itself: every later model keeps at least one of
//! them, which rules out `D` and all of its supersets.

use std::collections::{BTreeMap, BTreeSet};

use num_traits::One;

use crate::cnf::{Clause, CnfFormula, Literal};
use crate::error::{Error, Result};
use crate::model::Rational;
use crate::sat::{SatResult, Solver};

/// Largest soft set [`brute_force_mcs`] will enumerate.
pub const BRUTE_FORCE_LIMIT: usize = 20;

#[derive(Clone, Debug)]
pub struct McsProblem<'a> {
    hard: &'a CnfFormula,
    soft: Vec<Literal>,
    costs: BTreeMap<usize, Rational>,
    immutable: BTreeSet<usize>,
}

/// One minimal correction subset, as the sorted 0-based variables whose soft
/// unit clauses it removes.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Mcs {
    pub features: Vec<usize>,
    pub cost: Rational,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct McsEnumeration {
    /// Sorted by `(cost, cardinality, features)`.
    pub mcses: Vec<Mcs>,
    /// False when `max_count` stopped enumeration before all were found.
    pub complete: bool,
    pub sat_calls: u64,
}

impl<'a> McsProblem<'a> {
    /// `soft` must consist of unit clauses over distinct variables.
    pub fn new(hard: &'a CnfFormula, soft: &[Clause]) -> Result<Self> {
        let mut seen = BTreeSet::new();
        let mut lits = Vec::with_capacity(soft.len());
        for (i, clause) in soft.iter().enumerate() {
            let lit = clause.as_unit().ok_or_else(|| {
                Error::InvalidArgument(format!("soft clause {i} is not a unit clause"))
            })?;
            if lit.var >= hard.num_vars() {
                return Err(Error::InvalidArgument(format!(
                    "soft literal {lit} out of range for {} variables",
                    hard.num_vars()
                )));
            }
            if !seen.insert(lit.var) {
                return Err(Error::InvalidArgument(format!(
                    "variable {} appears in more than one soft clause",
                    lit.var + 1
                )));
            }
            lits.push(lit);
        }
        lits.sort();
        Ok(McsProblem {
            hard,
            soft: lits,
            costs: BTreeMap::new(),
            immutable: BTreeSet::new(),
        })
    }

    /// Per-variable removal costs; unlisted variables cost 1.
    pub fn with_costs(mut self, costs: BTreeMap<usize, Rational>) -> Result<Self> {
        for (var, cost) in &costs {
            if !self.soft.iter().any(|l| l.var == *var) {
                return Err(Error::InvalidArgument(format!(
                    "cost given for variable {} which has no soft clause",
                    var + 1
                )));
            }
            if cost <= &Rational::from_integer(0.into()) {
                return Err(Error::InvalidArgument(format!(
                    "cost of variable {} must be positive",
                    var + 1
                )));
            }
        }
        self.costs = costs;
        Ok(self)
    }

    /// Variables whose soft clause must never be removed.
    pub fn with_immutable(mut self, immutable: BTreeSet<usize>) -> Result<Self> {
        for var in &immutable {
            if !self.soft.iter().any(|l| l.var == *var) {
                return Err(Error::InvalidArgument(format!(
                    "immutable variable {} has no soft clause",
                    var + 1
                )));
            }
        }
        self.immutable = immutable;
        Ok(self)
    }

    pub fn hard(&self) -> &CnfFormula {
        self.hard
    }

    pub fn soft(&self) -> &[Literal] {
        &self.soft
    }

    fn cost_of(&self, features: &[usize]) -> Rational {
        features
            .iter()
            .map(|v| self.costs.get(v).cloned().unwrap_or_else(Rational::one))
            .sum()
    }

    fn hardened(&self) -> Vec<Literal> {
        self.soft
            .iter()
            .filter(|l| self.immutable.contains(&l.var))
            .copied()
            .collect()
    }

    fn relaxable(&self) -> Vec<Literal> {
        self.soft
            .iter()
            .filter(|l| !self.immutable.contains(&l.var))
            .copied()
            .collect()
    }

    fn make_mcs(&self, mut features: Vec<usize>) -> Mcs {
        features.sort_unstable();
        let cost = self.cost_of(&features);
        Mcs { features, cost }
    }
}

fn sort_mcses(mcses: &mut [Mcs]) {
    mcses.sort_by(|a, b| {
        (&a.cost, a.features.len(), &a.features).cmp(&(&b.cost, b.features.len(), &b.features))
    });
}

/// Satisfiability oracle over the problem's hard part plus extra clauses,
/// counting calls.
struct Oracle<'p, 'a> {
    problem: &'p McsProblem<'a>,
    hardened: Vec<Literal>,
    calls: u64,
}

impl Oracle<'_, '_> {
    fn check(&mut self, blocking: &[Vec<Literal>], assumptions: &[Literal]) -> SatResult {
        self.calls += 1;
        let mut solver = Solver::from_formula(self.problem.hard);
        for clause in blocking {
            solver.add_literals(clause);
        }
        let mut all = self.hardened.clone();
        all.extend_from_slice(assumptions);
        solver.solve(&all)
    }
}

/// Enumerates every MCS of `hard ∧ soft` restricted to the soft clauses,
/// stopping after `max_count` of them if given.
///
/// Each round takes a model of the hard part and the blocking clauses, grows
/// the set of soft literals it satisfies to a maximal satisfiable one (trying
/// the falsified literals in ascending variable order), reports the
/// complement and blocks it.
///
/// Fails with [`Error::NoCounterfactualExists`] if the hard part, together
/// with the immutable soft literals, is unsatisfiable. Returns an empty list
/// if `hard ∧ soft` is already satisfiable.
pub fn enumerate_mcs(p: &McsProblem, max_count: Option<usize>) -> Result<McsEnumeration> {
    let mut oracle = Oracle {
        problem: p,
        hardened: p.hardened(),
        calls: 0,
    };
    let soft = p.relaxable();

    if !oracle.check(&[], &[]).is_sat() {
        return Err(Error::NoCounterfactualExists);
    }
    if oracle.check(&[], &soft).is_sat() {
        return Ok(McsEnumeration {
            mcses: Vec::new(),
            complete: true,
            sat_calls: oracle.calls,
        });
    }

    let mut blocking: Vec<Vec<Literal>> = Vec::new();
    let mut found = Vec::new();
    let complete = loop {
        let SatResult::Sat(mut model) = oracle.check(&blocking, &[]) else {
            break true;
        };
        if max_count.is_some_and(|max| found.len() >= max) {
            break false;
        }
        let (mut kept, falsified): (Vec<Literal>, Vec<Literal>) =
            soft.iter().partition(|l| l.is_satisfied_by(&model));
        let mut correction = Vec::new();
        for u in falsified {
            if u.is_satisfied_by(&model) {
                kept.push(u);
                continue;
            }
            kept.push(u);
            match oracle.check(&blocking, &kept) {
                SatResult::Sat(m) => model = m,
                SatResult::Unsat => {
                    kept.pop();
                    correction.push(u);
                }
            }
        }
        if correction.is_empty() {
            return Err(Error::Internal(
                "grown model satisfies every soft clause of an unsatisfiable system".into(),
            ));
        }
        found.push(p.make_mcs(correction.iter().map(|l| l.var).collect()));
        blocking.push(correction);
    };

    sort_mcses(&mut found);
    Ok(McsEnumeration {
        mcses: found,
        complete,
        sat_calls: oracle.calls,
    })
}

/// Reference enumeration over all subsets of the relaxable soft variables in
/// increasing cardinality, keeping the subset-minimal correction sets.
/// Refuses problems with more than [`BRUTE_FORCE_LIMIT`] soft clauses.
pub fn brute_force_mcs(p: &McsProblem) -> Result<Vec<Mcs>> {
    let soft = p.relaxable();
    if soft.len() > BRUTE_FORCE_LIMIT {
        return Err(Error::InvalidArgument(format!(
            "brute force limited to {BRUTE_FORCE_LIMIT} soft clauses, got {}",
            soft.len()
        )));
    }
    let mut oracle = Oracle {
        problem: p,
        hardened: p.hardened(),
        calls: 0,
    };
    if !oracle.check(&[], &[]).is_sat() {
        return Err(Error::NoCounterfactualExists);
    }
    let k = soft.len();
    let mut masks: Vec<u32> = (0..1u32 << k).collect();
    masks.sort_by_key(|m| (m.count_ones(), *m));

    let mut minimal: Vec<u32> = Vec::new();
    for mask in masks {
        if minimal.iter().any(|&m| m & !mask == 0) {
            continue;
        }
        let kept: Vec<Literal> = (0..k)
            .filter(|i| mask & (1 << i) == 0)
            .map(|i| soft[i])
            .collect();
        if oracle.check(&[], &kept).is_sat() {
            if mask == 0 {
                return Ok(Vec::new());
            }
            minimal.push(mask);
        }
    }
    let mut out: Vec<Mcs> = minimal
        .into_iter()
        .map(|mask| {
            p.make_mcs(
                (0..k)
                    .filter(|i| mask & (1 << i) != 0)
                    .map(|i| soft[i].var)
                    .collect(),
            )
        })
        .collect();
    sort_mcses(&mut out);
    Ok(out)
}
