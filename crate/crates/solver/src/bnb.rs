//! LP-based branch and bound for mixed-integer programs.
//!
//! Node selection is best-bound with ties broken towards deeper nodes and
//! then lower node ids; branching picks the most fractional integer column
//! (lowest index on ties). Both rules are deterministic, so repeated runs
//! produce identical logs.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::{Duration, Instant};

use log::debug;

use crate::error::SolverError;
use crate::problem::LpProblem;
use crate::simplex::{solve_lp, LpOptions, LpStatus};

/// An LP together with the set of columns restricted to integer values.
#[derive(Debug, Clone, PartialEq)]
pub struct MilpProblem {
    pub lp: LpProblem,
    pub integer: Vec<bool>,
}

impl MilpProblem {
    pub fn new(lp: LpProblem, integer: Vec<bool>) -> Self {
        Self { lp, integer }
    }

    pub fn continuous(lp: LpProblem) -> Self {
        let n = lp.num_cols;
        Self { lp, integer: vec![false; n] }
    }

    pub fn num_integer(&self) -> usize {
        self.integer.iter().filter(|&&b| b).count()
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        self.lp.validate()?;
        if self.integer.len() != self.lp.num_cols {
            return Err(SolverError::Malformed("integrality mask length mismatch".into()));
        }
        for (j, &int) in self.integer.iter().enumerate() {
            if int && !(self.lp.col_lower[j].is_finite() && self.lp.col_upper[j].is_finite()) {
                return Err(SolverError::UnboundedInteger(j));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct MilpOptions {
    pub lp: LpOptions,
    pub integrality_tol: f64,
    /// Nodes whose bound is within this absolute gap of the incumbent are pruned.
    pub absolute_gap: f64,
    pub max_nodes: usize,
    pub time_limit: Option<Duration>,
}

impl Default for MilpOptions {
    fn default() -> Self {
        Self {
            lp: LpOptions::default(),
            integrality_tol: 1e-6,
            absolute_gap: 1e-9,
            max_nodes: 200_000,
            time_limit: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MilpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    /// Node or time limit hit; `x` holds the incumbent if one was found.
    LimitReached,
    NumericFailure,
}

#[derive(Debug, Clone)]
pub struct MilpSolution {
    pub status: MilpStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    /// Lowest bound over the open nodes when the search stopped.
    pub best_bound: f64,
    pub nodes: usize,
    pub lp_iterations: usize,
    pub has_incumbent: bool,
    /// Progress lines, also emitted through `log::debug!` with a `[bnb]` prefix.
    pub log: Vec<String>,
}

struct Node {
    id: usize,
    depth: usize,
    bound: f64,
    /// Tightened bounds `(col, lower, upper)` relative to the root.
    bounds: Vec<(usize, f64, f64)>,
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
    // BinaryHeap is a max-heap: "greater" means "explore first".
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then(self.depth.cmp(&other.depth))
            .then(other.id.cmp(&self.id))
    }
}

struct Search<'a> {
    log: Vec<String>,
    opts: &'a MilpOptions,
}

impl Search<'_> {
    fn note(&mut self, line: String) {
        debug!("{line}");
        self.log.push(line);
    }
}

/// Maps a node's relaxation solution to a candidate point, or `None`.
pub type Heuristic<'a> = dyn Fn(&[f64]) -> Option<Vec<f64>> + 'a;

/// Optional problem-specific guidance for the search.
#[derive(Default)]
pub struct MilpHooks<'a> {
    /// Per-column branching priority; among fractional columns the highest
    /// priority class is branched first (then most fractional, then lowest
    /// index). Missing entries count as 0.
    pub priority: Option<&'a [u32]>,
    /// Called on every fractional node; a returned point that satisfies all
    /// rows, bounds and integrality within `heuristic_tol` and improves on
    /// the incumbent becomes the new incumbent.
    pub heuristic: Option<&'a Heuristic<'a>>,
    pub heuristic_tol: f64,
}

/// Solves a MILP by branch and bound over LP relaxations.
pub fn solve_milp(problem: &MilpProblem, opts: &MilpOptions) -> Result<MilpSolution, SolverError> {
    solve_milp_with(problem, opts, &MilpHooks::default())
}

fn integral(problem: &MilpProblem, x: &[f64], tol: f64) -> bool {
    x.iter().zip(&problem.integer).all(|(v, &int)| !int || (v - v.round()).abs() <= tol)
}

/// [`solve_milp`] with branching priorities and a primal heuristic.
pub fn solve_milp_with(problem: &MilpProblem, opts: &MilpOptions, hooks: &MilpHooks<'_>) -> Result<MilpSolution, SolverError> {
    problem.validate()?;
    let start = Instant::now();
    let mut search = Search { log: Vec::new(), opts };
    let mut work = problem.lp.clone();
    for j in 0..work.num_cols {
        if problem.integer[j] {
            work.col_lower[j] = work.col_lower[j].ceil();
            work.col_upper[j] = work.col_upper[j].floor();
        }
    }
    let int_lower = work.col_lower.clone();
    let int_upper = work.col_upper.clone();

    let mut heap = BinaryHeap::new();
    heap.push(Node { id: 0, depth: 0, bound: f64::NEG_INFINITY, bounds: Vec::new() });
    let mut next_id = 1;
    let mut nodes = 0;
    let mut lp_iterations = 0;
    let mut incumbent: Option<(f64, Vec<f64>)> = None;
    let mut status = MilpStatus::Optimal;

    while let Some(node) = heap.pop() {
        let cutoff = incumbent.as_ref().map_or(f64::INFINITY, |(obj, _)| obj - search.opts.absolute_gap);
        if node.bound >= cutoff {
            search.note(format!("[bnb] node {} pruned by bound {:.9}", node.id, node.bound));
            continue;
        }
        if nodes >= opts.max_nodes || opts.time_limit.is_some_and(|t| start.elapsed() >= t) {
            heap.push(node);
            status = MilpStatus::LimitReached;
            search.note(format!("[bnb] limit reached after {nodes} nodes"));
            break;
        }
        nodes += 1;
        work.col_lower.copy_from_slice(&int_lower);
        work.col_upper.copy_from_slice(&int_upper);
        for &(j, lo, hi) in &node.bounds {
            work.col_lower[j] = lo;
            work.col_upper[j] = hi;
        }
        let sol = solve_lp(&work, &opts.lp);
        lp_iterations += sol.iterations;
        match sol.status {
            LpStatus::Optimal => {}
            LpStatus::Infeasible => {
                search.note(format!("[bnb] node {} depth {} infeasible", node.id, node.depth));
                continue;
            }
            LpStatus::Unbounded => {
                search.note(format!("[bnb] node {} unbounded relaxation", node.id));
                if incumbent.is_none() || node.id == 0 {
                    return Ok(finish(search, MilpStatus::Unbounded, None, f64::NEG_INFINITY, nodes, lp_iterations, problem.lp.num_cols));
                }
                continue;
            }
            LpStatus::IterationLimit | LpStatus::NumericFailure => {
                search.note(format!("[bnb] node {} lp failure {:?}", node.id, sol.status));
                return Ok(finish(search, MilpStatus::NumericFailure, incumbent, f64::NAN, nodes, lp_iterations, problem.lp.num_cols));
            }
        }
        let obj = sol.objective;
        if obj >= cutoff {
            search.note(format!("[bnb] node {} depth {} obj {:.9} pruned", node.id, node.depth, obj));
            continue;
        }
        let mut branch: Option<(usize, f64)> = None;
        let mut best_key = (0u32, opts.integrality_tol);
        for j in 0..work.num_cols {
            if !problem.integer[j] {
                continue;
            }
            let v = sol.x[j];
            let frac = (v - v.floor()).min(v.ceil() - v);
            if frac <= opts.integrality_tol {
                continue;
            }
            let prio = hooks.priority.and_then(|p| p.get(j).copied()).unwrap_or(0);
            if branch.is_none() || prio > best_key.0 || (prio == best_key.0 && frac > best_key.1) {
                best_key = (prio, frac);
                branch = Some((j, v));
            }
        }
        if let (Some(_), Some(h)) = (branch, hooks.heuristic) {
            if let Some(cand) = h(&sol.x) {
                let ok = cand.len() == work.num_cols
                    && integral(problem, &cand, opts.integrality_tol)
                    && problem.lp.max_violation(&cand) <= hooks.heuristic_tol;
                if ok {
                    let cobj = problem.lp.objective_value(&cand);
                    if cobj < cutoff {
                        search.note(format!("[bnb] node {} depth {} heuristic incumbent {:.9}", node.id, node.depth, cobj));
                        incumbent = Some((cobj, cand));
                    }
                    if cobj <= obj + opts.absolute_gap {
                        search.note(format!("[bnb] node {} closed by heuristic", node.id));
                        continue;
                    }
                }
            }
        }
        match branch {
            None => {
                let mut x = sol.x;
                for j in 0..x.len() {
                    if problem.integer[j] {
                        x[j] = x[j].round();
                    }
                }
                search.note(format!("[bnb] node {} depth {} new incumbent {:.9}", node.id, node.depth, obj));
                incumbent = Some((obj, x));
            }
            Some((j, v)) => {
                search.note(format!(
                    "[bnb] node {} depth {} obj {:.9} branch col {} value {:.6}",
                    node.id, node.depth, obj, j, v
                ));
                let lo = work.col_lower[j];
                let hi = work.col_upper[j];
                for (child_lo, child_hi) in [(lo, v.floor()), (v.ceil(), hi)] {
                    let mut bounds = node.bounds.clone();
                    bounds.push((j, child_lo, child_hi));
                    heap.push(Node { id: next_id, depth: node.depth + 1, bound: obj, bounds });
                    next_id += 1;
                }
            }
        }
    }

    let best_bound = match (&incumbent, heap.iter().map(|n| n.bound).min_by(|a, b| a.total_cmp(b))) {
        (Some((obj, _)), None) => *obj,
        (Some((obj, _)), Some(b)) => b.min(*obj),
        (None, Some(b)) => b,
        (None, None) => f64::INFINITY,
    };
    if incumbent.is_none() && status == MilpStatus::Optimal {
        status = MilpStatus::Infeasible;
    }
    Ok(finish(search, status, incumbent, best_bound, nodes, lp_iterations, problem.lp.num_cols))
}

fn finish(
    mut search: Search<'_>,
    status: MilpStatus,
    incumbent: Option<(f64, Vec<f64>)>,
    best_bound: f64,
    nodes: usize,
    lp_iterations: usize,
    n: usize,
) -> MilpSolution {
    search.note(format!("[bnb] done status {status:?} nodes {nodes} lp iterations {lp_iterations}"));
    let has_incumbent = incumbent.is_some();
    let (objective, x) = incumbent.unwrap_or((f64::NAN, vec![0.0; n]));
    MilpSolution {
        status,
        x,
        objective,
        best_bound,
        nodes,
        lp_iterations,
        has_incumbent,
        log: search.log,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{LpBuilder, RowSense};

    #[test]
    fn small_knapsack() {
        // max 5a + 4b + 3c  s.t. 2a + 3b + c <= 5, 4a + b + 2c <= 11, binaries
        let mut b = LpBuilder::new();
        let a = b.add_col(0.0, 1.0, -5.0);
        let bb = b.add_col(0.0, 1.0, -4.0);
        let c = b.add_col(0.0, 1.0, -3.0);
        b.add_row(&[(a, 2.0), (bb, 3.0), (c, 1.0)], RowSense::Le, 5.0);
        b.add_row(&[(a, 4.0), (bb, 1.0), (c, 2.0)], RowSense::Le, 11.0);
        let p = MilpProblem::new(b.build(), vec![true; 3]);
        let s = solve_milp(&p, &MilpOptions::default()).unwrap();
        assert_eq!(s.status, MilpStatus::Optimal);
        assert!((s.objective + 9.0).abs() < 1e-9, "{}", s.objective);
    }

    #[test]
    fn integer_infeasible() {
        let mut b = LpBuilder::new();
        let x = b.add_col(0.0, 3.0, 0.0);
        b.add_row(&[(x, 2.0)], RowSense::Eq, 3.0);
        let p = MilpProblem::new(b.build(), vec![true]);
        assert_eq!(solve_milp(&p, &MilpOptions::default()).unwrap().status, MilpStatus::Infeasible);
    }

    #[test]
    fn rejects_unbounded_integer() {
        let mut b = LpBuilder::new();
        b.add_col(0.0, f64::INFINITY, 1.0);
        let p = MilpProblem::new(b.build(), vec![true]);
        assert!(matches!(solve_milp(&p, &MilpOptions::default()), Err(SolverError::UnboundedInteger(0))));
    }
}
