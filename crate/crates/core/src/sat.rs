//! A small complete SAT solver.
//!
//! Conflict-driven clause learning over two watched literals, with a fixed
//! branching rule (lowest-index unassigned variable, value 0 first) and no
//! restarts, so identical inputs always produce identical models. Assumptions
//! are placed on the trail at decision level 0 before search starts.

use crate::cnf::{Assignment, Clause, CnfFormula, Literal};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SatResult {
    Sat(Assignment),
    Unsat,
}

impl SatResult {
    pub fn is_sat(&self) -> bool {
        matches!(self, SatResult::Sat(_))
    }

    pub fn model(&self) -> Option<&Assignment> {
        match self {
            SatResult::Sat(a) => Some(a),
            SatResult::Unsat => None,
        }
    }
}

/// Internal literal code: `2 * var + negative`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Lit(u32);

impl Lit {
    fn from_literal(l: Literal) -> Self {
        Lit((l.var as u32) << 1 | (!l.positive) as u32)
    }
    fn var(self) -> usize {
        (self.0 >> 1) as usize
    }
    fn is_neg(self) -> bool {
        self.0 & 1 == 1
    }
    fn not(self) -> Self {
        Lit(self.0 ^ 1)
    }
    fn idx(self) -> usize {
        self.0 as usize
    }
}

/// Single-use solver. Build it, add clauses, call [`Solver::solve`] once.
pub struct Solver {
    num_vars: usize,
    clauses: Vec<Vec<Lit>>,
    /// `watches[l]`: clauses currently watching literal `l`.
    watches: Vec<Vec<usize>>,
    units: Vec<Lit>,
    assigns: Vec<Option<bool>>,
    level: Vec<usize>,
    reason: Vec<Option<usize>>,
    trail: Vec<Lit>,
    trail_lim: Vec<usize>,
    qhead: usize,
    inconsistent: bool,
    conflicts: u64,
}

impl Solver {
    pub fn new(num_vars: usize) -> Self {
        Solver {
            num_vars,
            clauses: Vec::new(),
            watches: vec![Vec::new(); 2 * num_vars],
            units: Vec::new(),
            assigns: vec![None; num_vars],
            level: vec![0; num_vars],
            reason: vec![None; num_vars],
            trail: Vec::with_capacity(num_vars),
            trail_lim: Vec::new(),
            qhead: 0,
            inconsistent: false,
            conflicts: 0,
        }
    }

    pub fn from_formula(f: &CnfFormula) -> Self {
        let mut s = Solver::new(f.num_vars());
        for c in f.clauses() {
            s.add_clause(c);
        }
        s
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    /// Number of conflicts seen so far.
    pub fn conflicts(&self) -> u64 {
        self.conflicts
    }

    pub fn add_clause(&mut self, clause: &Clause) {
        self.add_literals(clause.literals());
    }

    /// Adds a disjunction of literals. Duplicates are merged; a clause
    /// containing a complementary pair is dropped.
    ///
    /// # Panics
    /// If a literal's variable is out of range.
    pub fn add_literals(&mut self, literals: &[Literal]) {
        let mut lits: Vec<Lit> = Vec::with_capacity(literals.len());
        for &l in literals {
            assert!(l.var < self.num_vars, "literal {l} out of range");
            let lit = Lit::from_literal(l);
            if lits.contains(&lit.not()) {
                return;
            }
            if !lits.contains(&lit) {
                lits.push(lit);
            }
        }
        match lits.len() {
            0 => self.inconsistent = true,
            1 => self.units.push(lits[0]),
            _ => {
                let ci = self.clauses.len();
                self.watches[lits[0].idx()].push(ci);
                self.watches[lits[1].idx()].push(ci);
                self.clauses.push(lits);
            }
        }
    }

    fn value(&self, l: Lit) -> Option<bool> {
        self.assigns[l.var()].map(|v| v != l.is_neg())
    }

    fn decision_level(&self) -> usize {
        self.trail_lim.len()
    }

    /// Returns false if `l` is already false.
    fn enqueue(&mut self, l: Lit, reason: Option<usize>) -> bool {
        match self.value(l) {
            Some(v) => v,
            None => {
                let v = l.var();
                self.assigns[v] = Some(!l.is_neg());
                self.level[v] = self.decision_level();
                self.reason[v] = reason;
                self.trail.push(l);
                true
            }
        }
    }

    /// Unit propagation; returns the index of a falsified clause on conflict.
    fn propagate(&mut self) -> Option<usize> {
        while self.qhead < self.trail.len() {
            let p = self.trail[self.qhead];
            self.qhead += 1;
            let false_lit = p.not();
            let mut ws = std::mem::take(&mut self.watches[false_lit.idx()]);
            let mut i = 0;
            while i < ws.len() {
                let ci = ws[i];
                {
                    let c = &mut self.clauses[ci];
                    if c[0] == false_lit {
                        c.swap(0, 1);
                    }
                }
                let first = self.clauses[ci][0];
                if self.value(first) == Some(true) {
                    i += 1;
                    continue;
                }
                let len = self.clauses[ci].len();
                let replacement =
                    (2..len).find(|&k| self.value(self.clauses[ci][k]) != Some(false));
                if let Some(k) = replacement {
                    self.clauses[ci].swap(1, k);
                    let w = self.clauses[ci][1];
                    self.watches[w.idx()].push(ci);
                    ws.swap_remove(i);
                    continue;
                }
                if self.value(first) == Some(false) {
                    self.watches[false_lit.idx()] = ws;
                    self.qhead = self.trail.len();
                    return Some(ci);
                }
                self.enqueue(first, Some(ci));
                i += 1;
            }
            self.watches[false_lit.idx()] = ws;
        }
        None
    }

    /// First-UIP conflict analysis. Returns the learnt clause (asserting
    /// literal first, highest remaining level second) and the backjump level.
    fn analyze(&self, mut confl: usize) -> (Vec<Lit>, usize) {
        let current = self.decision_level();
        let mut seen = vec![false; self.num_vars];
        let mut learnt = vec![Lit(0)];
        let mut pending = 0usize;
        let mut idx = self.trail.len();
        let mut skip_first = false;
        let uip = loop {
            let clause = &self.clauses[confl];
            for &q in &clause[skip_first as usize..] {
                let v = q.var();
                if !seen[v] && self.level[v] > 0 {
                    seen[v] = true;
                    if self.level[v] == current {
                        pending += 1;
                    } else {
                        learnt.push(q);
                    }
                }
            }
            let p = loop {
                idx -= 1;
                if seen[self.trail[idx].var()] {
                    break self.trail[idx];
                }
            };
            seen[p.var()] = false;
            pending -= 1;
            if pending == 0 {
                break p;
            }
            confl = self.reason[p.var()].expect("implied literal has a reason");
            skip_first = true;
        };
        learnt[0] = uip.not();

        let mut back_level = 0;
        if learnt.len() > 1 {
            let (best, lvl) = learnt
                .iter()
                .enumerate()
                .skip(1)
                .map(|(i, l)| (i, self.level[l.var()]))
                .max_by_key(|&(i, lvl)| (lvl, std::cmp::Reverse(i)))
                .expect("non-empty");
            learnt.swap(1, best);
            back_level = lvl;
        }
        (learnt, back_level)
    }

    fn backtrack(&mut self, level: usize) {
        if self.decision_level() <= level {
            return;
        }
        let keep = self.trail_lim[level];
        for l in self.trail.drain(keep..) {
            self.assigns[l.var()] = None;
            self.reason[l.var()] = None;
        }
        self.trail_lim.truncate(level);
        self.qhead = keep;
    }

    /// Decides satisfiability of the added clauses together with the
    /// `assumptions`. Contradictory assumptions simply yield `Unsat`.
    pub fn solve(mut self, assumptions: &[Literal]) -> SatResult {
        if self.inconsistent {
            return SatResult::Unsat;
        }
        let seeds: Vec<Lit> = self
            .units
            .iter()
            .copied()
            .chain(assumptions.iter().map(|&l| {
                assert!(l.var < self.num_vars, "assumption {l} out of range");
                Lit::from_literal(l)
            }))
            .collect();
        for l in seeds {
            if !self.enqueue(l, None) {
                return SatResult::Unsat;
            }
        }
        if self.propagate().is_some() {
            return SatResult::Unsat;
        }

        let mut next_var = 0;
        loop {
            while next_var < self.num_vars && self.assigns[next_var].is_some() {
                next_var += 1;
            }
            if next_var == self.num_vars {
                let values = self.assigns.iter().map(|v| v.expect("total")).collect();
                return SatResult::Sat(Assignment::new(values));
            }
            self.trail_lim.push(self.trail.len());
            self.enqueue(Lit::from_literal(Literal::neg(next_var)), None);

            while let Some(confl) = self.propagate() {
                self.conflicts += 1;
                if self.decision_level() == 0 {
                    return SatResult::Unsat;
                }
                let (learnt, back_level) = self.analyze(confl);
                self.backtrack(back_level);
                let asserting = learnt[0];
                if learnt.len() == 1 {
                    self.enqueue(asserting, None);
                } else {
                    let ci = self.clauses.len();
                    self.watches[learnt[0].idx()].push(ci);
                    self.watches[learnt[1].idx()].push(ci);
                    self.clauses.push(learnt);
                    self.enqueue(asserting, Some(ci));
                }
            }
            // Backjumping may have unassigned lower variables.
            next_var = 0;
        }
    }
}

/// Decides `f` under `assumptions`.
pub fn solve(f: &CnfFormula, assumptions: &[Literal]) -> SatResult {
    Solver::from_formula(f).solve(assumptions)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cnf::{encode_function, encode_instance};
    use crate::model::{admission_example, Instance};
    use crate::odd::compile_default;
    use proptest::prelude::*;

    fn clause(lits: &[i64]) -> Clause {
        Clause::new(
            lits.iter()
                .map(|&l| Literal::from_dimacs(l).unwrap())
                .collect(),
        )
        .unwrap()
    }

    fn formula(n: usize, clauses: &[&[i64]]) -> CnfFormula {
        CnfFormula::new(n, clauses.iter().map(|c| clause(c)).collect()).unwrap()
    }

    fn brute_force_sat(f: &CnfFormula, assumptions: &[Literal]) -> bool {
        let n = f.num_vars();
        (0..1u64 << n).any(|code| {
            let a = Instance::from_index(code, n);
            f.is_satisfied_by(&a) && assumptions.iter().all(|l| l.is_satisfied_by(&a))
        })
    }

    #[test]
    fn small_sat() {
        let f = formula(2, &[&[1, 2], &[-1, -2]]);
        let SatResult::Sat(a) = solve(&f, &[]) else {
            panic!("expected sat")
        };
        assert!(f.is_satisfied_by(&a));
        // lowest variable, value 0 first
        assert_eq!(a.bits(), vec![0, 1]);
    }

    #[test]
    fn empty_clause_is_unsat() {
        let f = CnfFormula::new(3, vec![clause(&[1]), Clause::default()]).unwrap();
        assert_eq!(solve(&f, &[]), SatResult::Unsat);
    }

    #[test]
    fn contradictory_assumptions() {
        let f = formula(2, &[&[1, 2]]);
        assert_eq!(
            solve(&f, &[Literal::pos(0), Literal::neg(0)]),
            SatResult::Unsat
        );
    }

    #[test]
    fn admission_instance_is_unsat() {
        let d = compile_default(&admission_example()).unwrap();
        let f = encode_function(&d);
        let x: Instance = "1,1,1,1".parse().unwrap();
        let assumptions: Vec<Literal> = encode_instance(&x)
            .iter()
            .map(|c| c.as_unit().unwrap())
            .collect();
        assert_eq!(solve(&f, &assumptions), SatResult::Unsat);

        let x: Instance = "1,0,1,0".parse().unwrap();
        let assumptions: Vec<Literal> = encode_instance(&x)
            .iter()
            .map(|c| c.as_unit().unwrap())
            .collect();
        assert_eq!(solve(&f, &assumptions), SatResult::Sat(x));
    }

    #[test]
    fn pigeonhole_three_into_two_is_unsat() {
        // p(i,j) = pigeon i in hole j -> var 2*i + j + 1
        let v = |i: i64, j: i64| 2 * i + j + 1;
        let mut cls: Vec<Vec<i64>> = (0..3).map(|i| vec![v(i, 0), v(i, 1)]).collect();
        for j in 0..2 {
            for a in 0..3 {
                for b in (a + 1)..3 {
                    cls.push(vec![-v(a, j), -v(b, j)]);
                }
            }
        }
        let refs: Vec<&[i64]> = cls.iter().map(|c| c.as_slice()).collect();
        assert_eq!(solve(&formula(6, &refs), &[]), SatResult::Unsat);
    }

    fn arb_formula() -> impl Strategy<Value = (CnfFormula, Vec<Literal>)> {
        (1usize..=9).prop_flat_map(|n| {
            let lit = (0..n, any::<bool>()).prop_map(|(v, s)| Literal::new(v, s));
            let clause = proptest::collection::vec(lit.clone(), 0..4).prop_map(|ls| {
                let mut seen: Vec<Literal> = Vec::new();
                for l in ls {
                    if !seen.contains(&l.negated()) && !seen.contains(&l) {
                        seen.push(l);
                    }
                }
                Clause::new(seen).unwrap()
            });
            (
                proptest::collection::vec(clause, 0..30),
                proptest::collection::vec(lit, 0..3),
            )
                .prop_map(move |(cs, asm)| (CnfFormula::new(n, cs).unwrap(), asm))
        })
    }

    proptest! {
        #[test]
        fn agrees_with_enumeration((f, asm) in arb_formula()) {
            let result = solve(&f, &asm);
            prop_assert_eq!(result.is_sat(), brute_force_sat(&f, &asm));
            if let SatResult::Sat(a) = &result {
                prop_assert!(f.is_satisfied_by(a));
                prop_assert!(asm.iter().all(|l| l.is_satisfied_by(a)));
            }
            prop_assert_eq!(solve(&f, &asm), result);
        }
    }
}
