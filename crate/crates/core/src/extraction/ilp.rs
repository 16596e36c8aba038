//! 0/1 integer linear programs: model, exhaustive enumeration for small
//! instances and best-first branch-and-bound over LP relaxations.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::fmt;
use std::time::{Duration, Instant};

use minilp::{ComparisonOp, OptimizationDirection, Problem};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Role of a binary variable. Indices refer to the candidate lists of the
/// model, not to the original soft complex.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum VarKind {
    F(usize),
    E(usize),
    V(usize),
    O(usize),
    FE(usize, usize),
    EV(usize, usize),
    FV(usize, usize),
    /// `E[j]·O[j]`.
    Y(usize),
    /// `FE[i,j]·EV[j,k]`.
    Z(usize, usize, usize),
    /// Free-standing variable of a hand-built model.
    X(usize),
}

impl VarKind {
    /// Branching priority: element variables first, then adjacency, then auxiliaries.
    pub fn priority(&self) -> u8 {
        match self {
            VarKind::F(_) | VarKind::E(_) | VarKind::V(_) | VarKind::O(_) | VarKind::X(_) => 0,
            VarKind::FE(..) | VarKind::EV(..) | VarKind::FV(..) => 1,
            VarKind::Y(_) | VarKind::Z(..) => 2,
        }
    }
}

impl fmt::Display for VarKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            VarKind::F(i) => write!(f, "F_{i}"),
            VarKind::E(i) => write!(f, "E_{i}"),
            VarKind::V(i) => write!(f, "V_{i}"),
            VarKind::O(i) => write!(f, "O_{i}"),
            VarKind::FE(i, j) => write!(f, "FE_{i}_{j}"),
            VarKind::EV(i, j) => write!(f, "EV_{i}_{j}"),
            VarKind::FV(i, j) => write!(f, "FV_{i}_{j}"),
            VarKind::Y(i) => write!(f, "Y_{i}"),
            VarKind::Z(i, j, k) => write!(f, "Z_{i}_{j}_{k}"),
            VarKind::X(i) => write!(f, "x_{i}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Cmp {
    Le,
    Ge,
    Eq,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub terms: Vec<(usize, f64)>,
    pub cmp: Cmp,
    pub rhs: f64,
}

impl Constraint {
    fn lhs(&self, x: &[bool]) -> f64 {
        self.terms.iter().filter(|(v, _)| x[*v]).map(|(_, c)| c).sum()
    }

    pub fn holds(&self, x: &[bool]) -> bool {
        let l = self.lhs(x);
        const TOL: f64 = 1e-9;
        match self.cmp {
            Cmp::Le => l <= self.rhs + TOL,
            Cmp::Ge => l >= self.rhs - TOL,
            Cmp::Eq => (l - self.rhs).abs() <= TOL,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Var {
    pub kind: VarKind,
    pub objective: f64,
    /// Secondary objective, kept orders of magnitude below the primary.
    pub tie_break: f64,
}

/// Maximization problem over binary variables.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IlpModel {
    pub vars: Vec<Var>,
    pub constraints: Vec<Constraint>,
    #[serde(skip)]
    index: HashMap<VarKind, usize>,
}

impl IlpModel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_var(&mut self, kind: VarKind, objective: f64) -> usize {
        self.add_var_with_tie(kind, objective, 0.0)
    }

    pub fn add_var_with_tie(&mut self, kind: VarKind, objective: f64, tie_break: f64) -> usize {
        assert!(!self.index.contains_key(&kind), "variable {kind} registered twice");
        let id = self.vars.len();
        self.vars.push(Var { kind, objective, tie_break });
        self.index.insert(kind, id);
        id
    }

    /// Adds `Σ terms cmp rhs`. Panics on an unregistered variable index.
    pub fn add_constraint(&mut self, terms: Vec<(usize, f64)>, cmp: Cmp, rhs: f64) {
        assert!(terms.iter().all(|(v, _)| *v < self.vars.len()), "constraint references unknown variable");
        self.constraints.push(Constraint { terms, cmp, rhs });
    }

    pub fn var(&self, kind: VarKind) -> Option<usize> {
        if self.index.len() != self.vars.len() {
            // Deserialized models carry no index; fall back to a scan.
            return self.vars.iter().position(|v| v.kind == kind);
        }
        self.index.get(&kind).copied()
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    /// Primary objective of an assignment, summed in variable order.
    pub fn objective_value(&self, x: &[bool]) -> f64 {
        self.vars.iter().zip(x).filter(|(_, &b)| b).map(|(v, _)| v.objective).sum()
    }

    fn score(&self, x: &[bool]) -> f64 {
        self.vars.iter().zip(x).filter(|(_, &b)| b).map(|(v, _)| v.objective + v.tie_break).sum()
    }

    pub fn is_feasible(&self, x: &[bool]) -> bool {
        x.len() == self.vars.len() && self.constraints.iter().all(|c| c.holds(x))
    }

    /// Indices of violated constraints.
    pub fn violations(&self, x: &[bool]) -> Vec<usize> {
        (0..self.constraints.len()).filter(|&c| !self.constraints[c].holds(x)).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMethod {
    Enumeration,
    BranchAndBound,
    External,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IlpSolution {
    pub values: Vec<bool>,
    /// Primary objective of `values`.
    pub objective: f64,
    /// Whether optimality was proven.
    pub optimal: bool,
    /// Upper bound minus incumbent when stopped early; zero when optimal.
    pub gap: f64,
    pub nodes: usize,
    pub method: SolveMethod,
}

impl IlpSolution {
    pub fn value(&self, model: &IlpModel, kind: VarKind) -> bool {
        model.var(kind).is_some_and(|i| self.values[i])
    }
}

#[derive(Clone, Debug)]
pub struct SolveOptions {
    pub time_limit: Duration,
    /// Models with at most this many variables are solved by enumeration.
    pub enumeration_threshold: usize,
    /// Run a diving heuristic every this many nodes (and at the root); 0 = root only.
    pub dive_interval: usize,
    /// Maximum LP re-solves per dive.
    pub dive_budget: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            time_limit: Duration::from_secs(60),
            enumeration_threshold: 20,
            dive_interval: 64,
            dive_budget: 400,
        }
    }
}

pub fn solve_ilp(model: &IlpModel, opts: &SolveOptions) -> Result<IlpSolution> {
    solve_ilp_with_start(model, opts, None)
}

/// Like [`solve_ilp`], seeding branch-and-bound with a known assignment.
/// An infeasible start is ignored.
pub fn solve_ilp_with_start(model: &IlpModel, opts: &SolveOptions, start: Option<&[bool]>) -> Result<IlpSolution> {
    if model.num_vars() <= opts.enumeration_threshold.min(26) {
        enumerate(model)
    } else {
        branch_and_bound_with_start(model, opts, start)
    }
}

/// Exhaustive search over all `2^n` assignments.
pub fn enumerate(model: &IlpModel) -> Result<IlpSolution> {
    let n = model.num_vars();
    if n > 26 {
        return Err(Error::Argument(format!("{n} variables is too many to enumerate")));
    }
    let mut best: Option<(f64, Vec<bool>)> = None;
    let mut x = vec![false; n];
    for mask in 0u64..(1u64 << n) {
        for (i, b) in x.iter_mut().enumerate() {
            *b = mask >> i & 1 == 1;
        }
        if !model.is_feasible(&x) {
            continue;
        }
        let s = model.score(&x);
        if best.as_ref().is_none_or(|(bs, _)| s > *bs) {
            best = Some((s, x.clone()));
        }
    }
    let (_, values) = best.ok_or(Error::Infeasible)?;
    Ok(IlpSolution {
        objective: model.objective_value(&values),
        values,
        optimal: true,
        gap: 0.0,
        nodes: 1usize << n,
        method: SolveMethod::Enumeration,
    })
}

const INT_TOL: f64 = 1e-6;
const PRUNE_TOL: f64 = 1e-9;

struct Node {
    bound: f64,
    depth: usize,
    seq: usize,
    lp: minilp::Solution,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    fn cmp(&self, other: &Self) -> Ordering {
        self.bound
            .total_cmp(&other.bound)
            .then(self.depth.cmp(&other.depth))
            .then(other.seq.cmp(&self.seq))
    }
}

struct Search<'a> {
    model: &'a IlpModel,
    vars: Vec<minilp::Variable>,
    incumbent: Option<(f64, Vec<bool>)>,
}

impl Search<'_> {
    fn offer(&mut self, x: Vec<bool>) {
        if !self.model.is_feasible(&x) {
            return;
        }
        let s = self.model.score(&x);
        if self.incumbent.as_ref().is_none_or(|(b, _)| s > *b + PRUNE_TOL) {
            self.incumbent = Some((s, x));
        }
    }

    fn values(&self, lp: &minilp::Solution) -> Vec<f64> {
        self.vars.iter().map(|&v| lp[v]).collect()
    }

    /// Most fractional variable of the highest-priority class that has one.
    fn branching_var(&self, vals: &[f64]) -> Option<usize> {
        let mut best: Option<(u8, f64, usize)> = None;
        for (i, &x) in vals.iter().enumerate() {
            let frac = (x - x.round()).abs();
            if frac <= INT_TOL {
                continue;
            }
            let p = self.model.vars[i].kind.priority();
            let better = match best {
                None => true,
                Some((bp, bf, _)) => p < bp || (p == bp && frac > bf + 1e-12),
            };
            if better {
                best = Some((p, frac, i));
            }
        }
        best.map(|(_, _, i)| i)
    }

    /// Rounds-and-fixes down from `lp` until the relaxation is integral,
    /// offering the result as an incumbent. At most `budget` LP re-solves.
    fn dive(&mut self, mut lp: minilp::Solution, budget: usize, deadline: Instant) {
        for _ in 0..budget {
            if self.pruned(lp.objective()) || Instant::now() > deadline {
                return;
            }
            let vals = self.values(&lp);
            let Some(b) = self.branching_var(&vals) else {
                self.offer(vals.iter().map(|&x| x > 0.5).collect());
                return;
            };
            let first = if vals[b] >= 0.5 { 1.0 } else { 0.0 };
            let var = self.vars[b];
            lp = match lp.clone().fix_var(var, first) {
                Ok(next) => next,
                Err(_) => match lp.fix_var(var, 1.0 - first) {
                    Ok(next) => next,
                    Err(_) => return,
                },
            };
        }
    }

    fn pruned(&self, bound: f64) -> bool {
        self.incumbent.as_ref().is_some_and(|(b, _)| bound <= *b + PRUNE_TOL)
    }
}

/// `None` when some constraint has no nonzero terms and fails on its own.
fn to_minilp(model: &IlpModel) -> Option<(Problem, Vec<minilp::Variable>)> {
    let mut p = Problem::new(OptimizationDirection::Maximize);
    let vars: Vec<_> = model.vars.iter().map(|v| p.add_var(v.objective + v.tie_break, (0.0, 1.0))).collect();
    for c in &model.constraints {
        let mut merged: Vec<(usize, f64)> = c.terms.clone();
        merged.sort_by_key(|t| t.0);
        merged.dedup_by(|b, a| {
            let same = a.0 == b.0;
            if same {
                a.1 += b.1;
            }
            same
        });
        merged.retain(|t| t.1 != 0.0);
        if merged.is_empty() {
            if !c.holds(&vec![false; model.vars.len()]) {
                return None;
            }
            continue;
        }
        let expr: Vec<_> = merged.iter().map(|&(v, k)| (vars[v], k)).collect();
        let op = match c.cmp {
            Cmp::Le => ComparisonOp::Le,
            Cmp::Ge => ComparisonOp::Ge,
            Cmp::Eq => ComparisonOp::Eq,
        };
        p.add_constraint(expr.as_slice(), op, c.rhs);
    }
    Some((p, vars))
}

/// Best-first branch-and-bound. The LP relaxation of each node is obtained
/// from its parent's by fixing the branching variable, so the simplex is
/// warm-started.
pub fn branch_and_bound(model: &IlpModel, opts: &SolveOptions) -> Result<IlpSolution> {
    branch_and_bound_with_start(model, opts, None)
}

pub fn branch_and_bound_with_start(
    model: &IlpModel,
    opts: &SolveOptions,
    warm: Option<&[bool]>,
) -> Result<IlpSolution> {
    let start = Instant::now();
    let n = model.num_vars();
    let Some((problem, vars)) = to_minilp(model) else {
        return Err(Error::Infeasible);
    };
    let mut search = Search { model, vars, incumbent: None };
    search.offer(vec![false; n]);
    if let Some(w) = warm {
        search.offer(w.to_vec());
    }

    let root = match problem.solve() {
        Ok(s) => s,
        Err(minilp::Error::Infeasible) => return Err(Error::Infeasible),
        Err(e) => return Err(Error::Solver(e.to_string())),
    };
    let mut heap = BinaryHeap::new();
    let mut seq = 0usize;
    heap.push(Node { bound: root.objective(), depth: 0, seq, lp: root });
    let mut nodes = 0usize;
    let mut timed_out = false;

    while let Some(node) = heap.pop() {
        if search.pruned(node.bound) {
            continue;
        }
        if start.elapsed() > opts.time_limit {
            heap.push(node);
            timed_out = true;
            break;
        }
        nodes += 1;
        if nodes == 1 || (opts.dive_interval > 0 && nodes % opts.dive_interval == 0) {
            search.dive(node.lp.clone(), opts.dive_budget, start + opts.time_limit);
            if search.pruned(node.bound) {
                continue;
            }
        }
        let vals = search.values(&node.lp);
        let Some(b) = search.branching_var(&vals) else {
            search.offer(vals.iter().map(|&x| x > 0.5).collect());
            continue;
        };
        search.offer(vals.iter().map(|&x| x > 0.5).collect());

        let up_first = vals[b] >= 0.5;
        let children = if up_first { [1.0, 0.0] } else { [0.0, 1.0] };
        let (first, second) = (node.lp.clone(), node.lp);
        for (lp, val) in [(first, children[0]), (second, children[1])] {
            let var = search.vars[b];
            match lp.fix_var(var, val) {
                Ok(child) => {
                    let bound = child.objective();
                    if !search.pruned(bound) {
                        seq += 1;
                        heap.push(Node { bound, depth: node.depth + 1, seq, lp: child });
                    }
                }
                Err(minilp::Error::Infeasible) => {}
                Err(e) => return Err(Error::Solver(e.to_string())),
            }
        }
    }

    let Some((score, values)) = search.incumbent else {
        return if timed_out {
            Err(Error::Timeout { seconds: opts.time_limit.as_secs_f64() })
        } else {
            Err(Error::Infeasible)
        };
    };
    let open_bound = heap
        .iter()
        .map(|n| n.bound)
        .filter(|b| *b > score + PRUNE_TOL)
        .fold(f64::NEG_INFINITY, f64::max);
    let optimal = !timed_out || open_bound == f64::NEG_INFINITY;
    if timed_out {
        log::warn!("ILP time limit reached after {nodes} nodes");
    }
    Ok(IlpSolution {
        objective: model.objective_value(&values),
        values,
        optimal,
        gap: if optimal { 0.0 } else { open_bound - score },
        nodes,
        method: SolveMethod::BranchAndBound,
    })
}
