//! Reduced ordered binary decision diagrams of classifier decision functions.
//!
//! Diagrams are immutable arenas. Index 0 is the 0-sink, index 1 the 1-sink,
//! and every internal node's children have smaller indices than the node
//! itself. After construction the arena is renumbered in a lo-first postorder
//! from the root, so two diagrams over the same ordering are structurally
//! equal exactly when they compute the same function.

use std::collections::HashMap;
use std::fmt::Write as _;

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};

use crate::error::{Error, Result};
use crate::model::{Instance, NbcModel, Rational};

pub type NodeId = usize;

/// Arena index of the 0-sink.
pub const FALSE: NodeId = 0;
/// Arena index of the 1-sink.
pub const TRUE: NodeId = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Node {
    Terminal(bool),
    /// `level` is the position in the diagram's variable ordering.
    Internal {
        level: usize,
        lo: NodeId,
        hi: NodeId,
    },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Obdd {
    ordering: Vec<usize>,
    nodes: Vec<Node>,
    root: NodeId,
}

/// One root-to-0-sink path: the `(feature, value)` pairs tested along it, in
/// ordering position. Features the path skips are absent.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PathTerm {
    pub bindings: Vec<(usize, bool)>,
}

impl PathTerm {
    /// True iff `x` agrees with every binding of the term.
    pub fn is_extended_by(&self, x: &Instance) -> bool {
        self.bindings.iter().all(|&(i, v)| x.get(i) == v)
    }
}

/// Checks that `ordering` is a permutation of `0..n`.
pub fn validate_ordering(ordering: &[usize], n: usize) -> Result<()> {
    if ordering.len() != n {
        return Err(Error::InvalidArgument(format!(
            "ordering has {} entries, expected {n}",
            ordering.len()
        )));
    }
    let mut seen = vec![false; n];
    for &f in ordering {
        if f >= n || std::mem::replace(&mut seen[f], true) {
            return Err(Error::InvalidArgument(format!(
                "ordering is not a permutation of 0..{n}"
            )));
        }
    }
    Ok(())
}

/// Arena under construction with hash-consing of internal nodes.
struct Arena {
    nodes: Vec<Node>,
    unique: HashMap<(usize, NodeId, NodeId), NodeId>,
}

impl Arena {
    fn new() -> Self {
        Arena {
            nodes: vec![Node::Terminal(false), Node::Terminal(true)],
            unique: HashMap::new(),
        }
    }

    fn mk(&mut self, level: usize, lo: NodeId, hi: NodeId) -> NodeId {
        if lo == hi {
            return lo;
        }
        let nodes = &mut self.nodes;
        *self.unique.entry((level, lo, hi)).or_insert_with(|| {
            nodes.push(Node::Internal { level, lo, hi });
            nodes.len() - 1
        })
    }

    /// Renumbers the nodes reachable from `root` in lo-first postorder.
    fn into_obdd(self, ordering: Vec<usize>, root: NodeId) -> Obdd {
        let mut remap: HashMap<NodeId, NodeId> = HashMap::from([(FALSE, FALSE), (TRUE, TRUE)]);
        let mut nodes = vec![Node::Terminal(false), Node::Terminal(true)];
        // Iterative postorder: (node, children_done)
        let mut stack = vec![(root, false)];
        while let Some((id, expanded)) = stack.pop() {
            if remap.contains_key(&id) {
                continue;
            }
            let Node::Internal { level, lo, hi } = self.nodes[id] else {
                unreachable!("terminals are pre-mapped")
            };
            if expanded {
                nodes.push(Node::Internal {
                    level,
                    lo: remap[&lo],
                    hi: remap[&hi],
                });
                remap.insert(id, nodes.len() - 1);
            } else {
                stack.push((id, true));
                stack.push((hi, false));
                stack.push((lo, false));
            }
        }
        Obdd {
            ordering,
            nodes,
            root: remap[&root],
        }
    }
}

/// Largest feature count [`compile`] accepts; suffix products are keyed by a
/// 64-bit assignment mask.
pub const MAX_COMPILE_FEATURES: usize = 63;

/// Two log-odds closer than this are compared exactly.
const LOG_TIE: f64 = 1e-9;

/// One suffix product: its natural log and the assignment that produced it
/// (bit `level` set iff the feature at that level is 1).
#[derive(Clone, Copy)]
struct Suffix {
    log: f64,
    mask: u64,
}

struct Ratios<'a> {
    model: &'a NbcModel,
    ordering: &'a [usize],
    logs: Vec<[f64; 2]>,
}

impl Ratios<'_> {
    fn exact(&self, from_level: usize, s: Suffix) -> Rational {
        (from_level..self.ordering.len())
            .map(|level| {
                self.model
                    .likelihood_ratio(self.ordering[level], s.mask >> level & 1 == 1)
            })
            .fold(Rational::one(), |acc, r| acc * r)
    }

    fn cmp(&self, level: usize, a: Suffix, b: Suffix) -> std::cmp::Ordering {
        let diff = a.log - b.log;
        if diff.abs() > LOG_TIE {
            return diff.partial_cmp(&0.0).expect("finite logs");
        }
        if a.mask == b.mask {
            return std::cmp::Ordering::Equal;
        }
        self.exact(level, a).cmp(&self.exact(level, b))
    }
}

fn ln(value: &Rational) -> f64 {
    value.to_f64().expect("finite ratio").ln()
}

/// Compiles a naive Bayes classifier into its reduced OBDD under `ordering`
/// (a permutation of feature indices; position = level).
///
/// For every level the set of odds multipliers the remaining features can
/// still contribute is known in advance, which turns "does this partial
/// product still reach the decision odds" into finding the interval of cut
/// points the running product falls in. Partial products in the same interval
/// denote the same sub-function and share one node.
///
/// Decisions are exact: products are ordered by their logarithms and compared
/// as rationals whenever the logarithms are too close to separate.
pub fn compile(model: &NbcModel, ordering: &[usize]) -> Result<Obdd> {
    let n = model.n();
    validate_ordering(ordering, n)?;
    if n > MAX_COMPILE_FEATURES {
        return Err(Error::InvalidArgument(format!(
            "cannot compile more than {MAX_COMPILE_FEATURES} features"
        )));
    }
    let ratios = Ratios {
        model,
        ordering,
        logs: ordering
            .iter()
            .map(|&f| {
                [
                    ln(model.likelihood_ratio(f, false)),
                    ln(model.likelihood_ratio(f, true)),
                ]
            })
            .collect(),
    };

    // suffixes[level]: distinct products over levels level..n, ascending.
    let mut suffixes: Vec<Vec<Suffix>> = vec![Vec::new(); n + 1];
    suffixes[n] = vec![Suffix { log: 0.0, mask: 0 }];
    for level in (0..n).rev() {
        let [l0, l1] = ratios.logs[level];
        let mut next: Vec<Suffix> = suffixes[level + 1]
            .iter()
            .flat_map(|s| {
                [
                    Suffix {
                        log: s.log + l0,
                        mask: s.mask,
                    },
                    Suffix {
                        log: s.log + l1,
                        mask: s.mask | 1 << level,
                    },
                ]
            })
            .collect();
        next.sort_by(|a, b| ratios.cmp(level, *a, *b));
        next.dedup_by(|a, b| ratios.cmp(level, *a, *b).is_eq());
        suffixes[level] = next;
    }

    struct Builder<'a> {
        ratios: Ratios<'a>,
        tau: &'a Rational,
        tau_log: f64,
        suffixes: Vec<Vec<Suffix>>,
        memo: HashMap<(usize, usize), NodeId>,
        arena: Arena,
    }

    impl Builder<'_> {
        /// Whether `acc * s >= tau`.
        fn reaches(&self, level: usize, acc: &Rational, acc_log: f64, s: Suffix) -> bool {
            let diff = acc_log + s.log - self.tau_log;
            if diff.abs() > LOG_TIE {
                return diff > 0.0;
            }
            acc * self.ratios.exact(level, s) >= *self.tau
        }

        fn build(&mut self, level: usize, acc: Rational, acc_log: f64) -> NodeId {
            let suffixes = &self.suffixes[level];
            // Completions that fall short of tau form a prefix of the
            // ascending suffix list.
            let short = suffixes.partition_point(|&s| !self.reaches(level, &acc, acc_log, s));
            if short == suffixes.len() {
                return FALSE;
            }
            if short == 0 {
                return TRUE;
            }
            if let Some(&id) = self.memo.get(&(level, short)) {
                return id;
            }
            let f = self.ratios.ordering[level];
            let model = self.ratios.model;
            let [l0, l1] = self.ratios.logs[level];
            let lo = self.build(
                level + 1,
                &acc * model.likelihood_ratio(f, false),
                acc_log + l0,
            );
            let hi = self.build(
                level + 1,
                &acc * model.likelihood_ratio(f, true),
                acc_log + l1,
            );
            let id = self.arena.mk(level, lo, hi);
            self.memo.insert((level, short), id);
            id
        }
    }

    let tau = model.decision_odds();
    let mut builder = Builder {
        ratios,
        tau,
        tau_log: ln(tau),
        suffixes,
        memo: HashMap::new(),
        arena: Arena::new(),
    };
    let root = builder.build(0, model.prior_odds().clone(), ln(model.prior_odds()));
    Ok(builder.arena.into_obdd(ordering.to_vec(), root))
}

/// Compiles with the model's declared feature order.
pub fn compile_default(model: &NbcModel) -> Result<Obdd> {
    let ordering: Vec<usize> = (0..model.n()).collect();
    compile(model, &ordering)
}

impl Obdd {
    /// The constant diagram over `n` variables (natural ordering).
    pub fn constant(n: usize, value: bool) -> Obdd {
        Obdd {
            ordering: (0..n).collect(),
            nodes: vec![Node::Terminal(false), Node::Terminal(true)],
            root: if value { TRUE } else { FALSE },
        }
    }

    /// Builds the reduced diagram of an arbitrary function by Shannon
    /// expansion over its full truth table. Exponential in `n`; intended for
    /// small functions and tests.
    pub fn from_fn(ordering: &[usize], f: impl Fn(&Instance) -> bool) -> Result<Obdd> {
        let n = ordering.len();
        validate_ordering(ordering, n)?;
        fn expand(
            arena: &mut Arena,
            ordering: &[usize],
            level: usize,
            values: &mut Vec<bool>,
            f: &dyn Fn(&Instance) -> bool,
        ) -> NodeId {
            if level == ordering.len() {
                return if f(&Instance::new(values.clone())) {
                    TRUE
                } else {
                    FALSE
                };
            }
            let var = ordering[level];
            values[var] = false;
            let lo = expand(arena, ordering, level + 1, values, f);
            values[var] = true;
            let hi = expand(arena, ordering, level + 1, values, f);
            arena.mk(level, lo, hi)
        }
        let mut arena = Arena::new();
        let mut values = vec![false; n];
        let root = expand(&mut arena, ordering, 0, &mut values, &f);
        Ok(arena.into_obdd(ordering.to_vec(), root))
    }

    pub fn num_vars(&self) -> usize {
        self.ordering.len()
    }

    pub fn ordering(&self) -> &[usize] {
        &self.ordering
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn node(&self, id: NodeId) -> Node {
        self.nodes[id]
    }

    fn level_of(&self, id: NodeId) -> usize {
        match self.nodes[id] {
            Node::Terminal(_) => self.num_vars(),
            Node::Internal { level, .. } => level,
        }
    }

    /// Constant value of the diagram, if it is a single sink.
    pub fn as_constant(&self) -> Option<bool> {
        match self.nodes[self.root] {
            Node::Terminal(v) => Some(v),
            Node::Internal { .. } => None,
        }
    }

    /// Number of nodes reachable from the root, sinks included.
    pub fn node_count(&self) -> usize {
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![self.root];
        let mut count = 0;
        while let Some(id) = stack.pop() {
            if std::mem::replace(&mut seen[id], true) {
                continue;
            }
            count += 1;
            if let Node::Internal { lo, hi, .. } = self.nodes[id] {
                stack.push(lo);
                stack.push(hi);
            }
        }
        count
    }

    pub fn evaluate(&self, x: &Instance) -> Result<bool> {
        if x.len() != self.num_vars() {
            return Err(Error::InstanceShape {
                expected: self.num_vars(),
                got: x.len(),
            });
        }
        let mut id = self.root;
        loop {
            match self.nodes[id] {
                Node::Terminal(v) => return Ok(v),
                Node::Internal { level, lo, hi } => {
                    id = if x.get(self.ordering[level]) { hi } else { lo };
                }
            }
        }
    }

    /// The diagram of `1 - f`: both sinks swap roles.
    pub fn negate(&self) -> Obdd {
        let flip = |id: NodeId| match id {
            FALSE => TRUE,
            TRUE => FALSE,
            other => other,
        };
        let nodes = self
            .nodes
            .iter()
            .map(|node| match *node {
                Node::Terminal(v) => Node::Terminal(v),
                Node::Internal { level, lo, hi } => Node::Internal {
                    level,
                    lo: flip(lo),
                    hi: flip(hi),
                },
            })
            .collect();
        Obdd {
            ordering: self.ordering.clone(),
            nodes,
            root: flip(self.root),
        }
    }

    /// Number of total assignments mapped to 1.
    pub fn count_models(&self) -> BigUint {
        // counts[id]: models over the levels from level_of(id) to n.
        let mut counts: Vec<BigUint> = Vec::with_capacity(self.nodes.len());
        for (id, node) in self.nodes.iter().enumerate() {
            let c = match *node {
                Node::Terminal(v) => {
                    if v {
                        BigUint::one()
                    } else {
                        BigUint::zero()
                    }
                }
                Node::Internal { level, lo, hi } => {
                    let weighted =
                        |child: NodeId| &counts[child] << (self.level_of(child) - level - 1);
                    debug_assert!(lo < id && hi < id);
                    weighted(lo) + weighted(hi)
                }
            };
            counts.push(c);
        }
        &counts[self.root] << self.level_of(self.root)
    }

    /// Number of root-to-0-sink paths, i.e. the clause count of the off-set
    /// encoding, without enumerating them.
    pub fn count_zero_paths(&self) -> BigUint {
        let mut counts: Vec<BigUint> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let c = match *node {
                Node::Terminal(v) => {
                    if v {
                        BigUint::zero()
                    } else {
                        BigUint::one()
                    }
                }
                Node::Internal { lo, hi, .. } => &counts[lo] + &counts[hi],
            };
            counts.push(c);
        }
        counts.swap_remove(self.root)
    }

    /// Every root-to-0-sink path, depth first with the lo edge explored
    /// before the hi edge. The disjunction of the terms is exactly `1 - f`
    /// and the terms are pairwise exclusive.
    pub fn zero_paths(&self) -> Vec<PathTerm> {
        let mut out = Vec::new();
        let mut path = Vec::with_capacity(self.num_vars());
        self.collect_zero_paths(self.root, &mut path, &mut out);
        out
    }

    fn collect_zero_paths(
        &self,
        id: NodeId,
        path: &mut Vec<(usize, bool)>,
        out: &mut Vec<PathTerm>,
    ) {
        match self.nodes[id] {
            Node::Terminal(true) => {}
            Node::Terminal(false) => out.push(PathTerm {
                bindings: path.clone(),
            }),
            Node::Internal { level, lo, hi } => {
                let var = self.ordering[level];
                for (child, value) in [(lo, false), (hi, true)] {
                    path.push((var, value));
                    self.collect_zero_paths(child, path, out);
                    path.pop();
                }
            }
        }
    }

    /// Graphviz rendering; solid edges are hi, dashed edges are lo.
    pub fn to_dot(&self, feature_names: &[String]) -> String {
        let mut out = String::from("digraph obdd {\n");
        let mut reachable = vec![false; self.nodes.len()];
        let mut stack = vec![self.root];
        while let Some(id) = stack.pop() {
            if std::mem::replace(&mut reachable[id], true) {
                continue;
            }
            if let Node::Internal { lo, hi, .. } = self.nodes[id] {
                stack.push(lo);
                stack.push(hi);
            }
        }
        for (id, node) in self.nodes.iter().enumerate() {
            if !reachable[id] {
                continue;
            }
            match *node {
                Node::Terminal(v) => {
                    let _ = writeln!(out, "  n{id} [shape=box,label=\"{}\"];", v as u8);
                }
                Node::Internal { level, .. } => {
                    let var = self.ordering[level];
                    let label = feature_names
                        .get(var)
                        .cloned()
                        .unwrap_or_else(|| format!("x{}", var + 1));
                    let _ = writeln!(out, "  n{id} [shape=circle,label=\"{label}\"];");
                }
            }
        }
        for (id, node) in self.nodes.iter().enumerate() {
            if let (true, Node::Internal { lo, hi, .. }) = (reachable[id], *node) {
                let _ = writeln!(out, "  n{id} -> n{lo} [style=dashed];");
                let _ = writeln!(out, "  n{id} -> n{hi} [style=solid];");
            }
        }
        out.push_str("}\n");
        out
    }
}
