//! Bounded-variable revised primal simplex with row duals.
//!
//! Every row `i` gets a logical column `-e_i` whose variable carries the row
//! activity, so the working system is `[A  -I] (x, s) = 0` with all
//! constraints expressed as bounds. Phase 1 minimises the sum of basic
//! bound violations (long-step ratio test); phase 2 uses Dantzig pricing on
//! maintained reduced costs with a Harris ratio test and falls back to
//! Bland's rule while the objective stalls.

use log::debug;

use crate::lu::{LuFactor, SparseColumn};
use crate::problem::LpProblem;

const NEG_ONE: [f64; 1] = [-1.0];
const PIVOT_TOL: f64 = 1e-9;
const DEGENERATE_LIMIT: usize = 60;

#[derive(Debug, Clone)]
pub struct LpOptions {
    pub feasibility_tol: f64,
    pub optimality_tol: f64,
    /// 0 selects a size-dependent default.
    pub max_iterations: usize,
    pub refactor_interval: usize,
}

impl Default for LpOptions {
    fn default() -> Self {
        Self {
            feasibility_tol: 1e-7,
            optimality_tol: 1e-7,
            max_iterations: 0,
            refactor_interval: 100,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
    NumericFailure,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Column values (meaningful when `status == Optimal`).
    pub x: Vec<f64>,
    /// Row duals `y` with `c - Aᵀy = reduced_costs`; non-positive on active
    /// `≤` rows and non-negative on active `≥` rows.
    pub row_duals: Vec<f64>,
    pub reduced_costs: Vec<f64>,
    pub row_activity: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    /// Largest bound/row violation of `x`.
    pub primal_residual: f64,
    /// Sum of basic infeasibilities when phase 1 stopped (infeasible runs).
    pub infeasibility: f64,
}

impl LpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum VarState {
    Basic,
    AtLower,
    AtUpper,
    /// Nonbasic strictly inside its bounds (free columns sit at zero).
    Between,
    Fixed,
}

struct Step {
    theta: f64,
    /// Basis position leaving and whether it leaves at its upper bound;
    /// `None` is a bound flip of the entering column.
    leaving: Option<(usize, bool)>,
}

/// Solves `p` from a slack basis.
pub fn solve_lp(p: &LpProblem, opts: &LpOptions) -> LpSolution {
    if let Err(e) = p.validate() {
        debug!("lp: rejected malformed problem: {e}");
        return failure(p, LpStatus::NumericFailure);
    }
    let mut s = Simplex::new(p, opts);
    let status = s.run();
    s.finish(status)
}

fn failure(p: &LpProblem, status: LpStatus) -> LpSolution {
    LpSolution {
        status,
        x: vec![0.0; p.num_cols],
        row_duals: vec![0.0; p.num_rows],
        reduced_costs: vec![0.0; p.num_cols],
        row_activity: vec![0.0; p.num_rows],
        objective: f64::NAN,
        iterations: 0,
        primal_residual: f64::INFINITY,
        infeasibility: f64::NAN,
    }
}

fn column_of<'c>(p: &'c LpProblem, n: usize, logical: &'c [usize], j: usize) -> SparseColumn<'c> {
    if j < n {
        let r = p.col_start[j]..p.col_start[j + 1];
        (&p.row_index[r.clone()], &p.value[r])
    } else {
        let i = j - n;
        (&logical[i..i + 1], &NEG_ONE[..])
    }
}

struct Simplex<'a> {
    p: &'a LpProblem,
    opts: LpOptions,
    n: usize,
    m: usize,
    lower: Vec<f64>,
    upper: Vec<f64>,
    cost: Vec<f64>,
    x: Vec<f64>,
    state: Vec<VarState>,
    basis: Vec<usize>,
    pos_of: Vec<usize>,
    logical_rows: Vec<usize>,
    row_start: Vec<usize>,
    row_col: Vec<usize>,
    row_val: Vec<f64>,
    lu: LuFactor,
    d: Vec<f64>,
    iterations: usize,
    max_iterations: usize,
    degenerate_run: usize,
    bland: bool,
    infeasibility: f64,
    // scratch
    col_buf: Vec<f64>,
    row_buf: Vec<f64>,
    pivot_row: Vec<f64>,
    touched: Vec<usize>,
    mark: Vec<bool>,
    rejected: Vec<bool>,
}

impl<'a> Simplex<'a> {
    fn new(p: &'a LpProblem, opts: &LpOptions) -> Self {
        let n = p.num_cols;
        let m = p.num_rows;
        let total = n + m;
        let mut lower = Vec::with_capacity(total);
        let mut upper = Vec::with_capacity(total);
        lower.extend_from_slice(&p.col_lower);
        upper.extend_from_slice(&p.col_upper);
        for i in 0..m {
            let (lo, hi) = p.senses[i].activity_bounds(p.rhs[i]);
            lower.push(lo);
            upper.push(hi);
        }
        let mut cost = p.objective.clone();
        cost.resize(total, 0.0);
        let mut x = vec![0.0; total];
        let mut state = vec![VarState::Basic; total];
        for j in 0..n {
            let (l, u) = (lower[j], upper[j]);
            state[j] = if l == u {
                x[j] = l;
                VarState::Fixed
            } else if l <= 0.0 && 0.0 <= u {
                if l == 0.0 {
                    VarState::AtLower
                } else if u == 0.0 {
                    VarState::AtUpper
                } else {
                    VarState::Between
                }
            } else if l.is_finite() && (l.abs() <= u.abs() || !u.is_finite()) {
                x[j] = l;
                VarState::AtLower
            } else {
                x[j] = u;
                VarState::AtUpper
            };
        }
        let basis: Vec<usize> = (n..total).collect();
        let mut pos_of = vec![usize::MAX; total];
        for (pos, &j) in basis.iter().enumerate() {
            pos_of[j] = pos;
        }
        let (row_start, row_col, row_val) = p.to_row_major();
        let max_iterations = if opts.max_iterations == 0 {
            20 * (n + m) + 10_000
        } else {
            opts.max_iterations
        };
        Self {
            p,
            opts: opts.clone(),
            n,
            m,
            lower,
            upper,
            cost,
            x,
            state,
            basis,
            pos_of,
            logical_rows: (0..m).collect(),
            row_start,
            row_col,
            row_val,
            lu: LuFactor::default(),
            d: vec![0.0; total],
            iterations: 0,
            max_iterations,
            degenerate_run: 0,
            bland: false,
            infeasibility: 0.0,
            col_buf: vec![0.0; m],
            row_buf: vec![0.0; m],
            pivot_row: vec![0.0; total],
            touched: Vec::new(),
            mark: vec![false; total],
            rejected: vec![false; total],
        }
    }

    fn column(&self, j: usize) -> SparseColumn<'_> {
        column_of(self.p, self.n, &self.logical_rows, j)
    }

    fn col_dot(&self, j: usize, y: &[f64]) -> f64 {
        let (idx, val) = self.column(j);
        idx.iter().zip(val).map(|(&r, &v)| v * y[r]).sum()
    }

    fn is_infeasible(&self, j: usize) -> f64 {
        let tol = self.opts.feasibility_tol;
        let v = self.x[j];
        if v < self.lower[j] - tol {
            self.lower[j] - v
        } else if v > self.upper[j] + tol {
            v - self.upper[j]
        } else {
            0.0
        }
    }

    fn primal_infeasibility(&self) -> f64 {
        self.basis.iter().map(|&j| self.is_infeasible(j)).sum()
    }

    fn refactor(&mut self) {
        let (p, n, logical) = (self.p, self.n, &self.logical_rows);
        let cols: Vec<SparseColumn<'_>> = self
            .basis
            .iter()
            .map(|&j| column_of(p, n, logical, j))
            .collect();
        let repairs = self.lu.factor(self.m, &cols);
        for (pos, row) in repairs {
            let old = self.basis[pos];
            let new = self.n + row;
            debug!("lp: singular basis, replacing column {old} by logical {row}");
            self.set_nonbasic_nearest(old);
            self.basis[pos] = new;
            self.pos_of[new] = pos;
            self.state[new] = VarState::Basic;
        }
        self.recompute_primal();
        self.rejected.iter_mut().for_each(|r| *r = false);
    }

    fn set_nonbasic_nearest(&mut self, j: usize) {
        self.pos_of[j] = usize::MAX;
        let (l, u, v) = (self.lower[j], self.upper[j], self.x[j]);
        self.state[j] = if l == u {
            self.x[j] = l;
            VarState::Fixed
        } else if l.is_finite() && (v - l).abs() <= (u - v).abs() {
            self.x[j] = l;
            VarState::AtLower
        } else if u.is_finite() {
            self.x[j] = u;
            VarState::AtUpper
        } else {
            VarState::Between
        };
    }

    fn recompute_primal(&mut self) {
        let mut rhs = std::mem::take(&mut self.col_buf);
        rhs.iter_mut().for_each(|v| *v = 0.0);
        for j in 0..self.n + self.m {
            if self.state[j] == VarState::Basic {
                continue;
            }
            let xj = self.x[j];
            if xj == 0.0 {
                continue;
            }
            let (idx, val) = self.column(j);
            for (&r, &v) in idx.iter().zip(val) {
                rhs[r] -= v * xj;
            }
        }
        self.lu.ftran(&mut rhs);
        for pos in 0..self.m {
            self.x[self.basis[pos]] = rhs[pos];
        }
        self.col_buf = rhs;
    }

    /// Dual values for the given basic costs, then reduced costs of every
    /// nonbasic column under `cost_of`.
    fn price_all(&mut self, phase_one: bool) {
        let mut y = std::mem::take(&mut self.row_buf);
        for pos in 0..self.m {
            let j = self.basis[pos];
            y[pos] = if phase_one { self.phase_one_cost(j) } else { self.cost[j] };
        }
        self.lu.btran(&mut y);
        for j in 0..self.n + self.m {
            if self.state[j] == VarState::Basic {
                self.d[j] = 0.0;
            } else {
                let c = if phase_one { 0.0 } else { self.cost[j] };
                self.d[j] = c - self.col_dot(j, &y);
            }
        }
        self.row_buf = y;
    }

    fn phase_one_cost(&self, j: usize) -> f64 {
        let tol = self.opts.feasibility_tol;
        if self.x[j] < self.lower[j] - tol {
            -1.0
        } else if self.x[j] > self.upper[j] + tol {
            1.0
        } else {
            0.0
        }
    }

    /// Moves basic singleton columns into rows whose logical starts
    /// infeasible, which yields a feasible start for slack-augmented systems.
    fn crash(&mut self) {
        let tol = self.opts.feasibility_tol;
        let mut used = vec![false; self.n];
        let mut singletons: Vec<Vec<usize>> = vec![Vec::new(); self.m];
        for j in 0..self.n {
            let (idx, _) = self.column(j);
            if idx.len() == 1 && self.state[j] != VarState::Fixed {
                singletons[idx[0]].push(j);
            }
        }
        let mut changed = false;
        for i in 0..self.m {
            let lj = self.n + i;
            if self.state[lj] != VarState::Basic {
                continue;
            }
            let v = self.x[lj];
            let target = if v < self.lower[lj] - tol {
                self.lower[lj]
            } else if v > self.upper[lj] + tol {
                self.upper[lj]
            } else {
                continue;
            };
            for &j in &singletons[i] {
                if used[j] {
                    continue;
                }
                let a = self.column(j).1[0];
                let xj = self.x[j] + (target - v) / a;
                if xj >= self.lower[j] - tol && xj <= self.upper[j] + tol {
                    used[j] = true;
                    let pos = self.pos_of[lj];
                    self.x[j] = xj;
                    self.state[j] = VarState::Basic;
                    self.basis[pos] = j;
                    self.pos_of[j] = pos;
                    self.pos_of[lj] = usize::MAX;
                    self.x[lj] = target;
                    self.state[lj] = if self.lower[lj] == self.upper[lj] {
                        VarState::Fixed
                    } else if target == self.lower[lj] {
                        VarState::AtLower
                    } else {
                        VarState::AtUpper
                    };
                    changed = true;
                    break;
                }
            }
        }
        if changed {
            self.refactor();
        }
    }

    fn run(&mut self) -> LpStatus {
        self.refactor();
        self.crash();
        let ftol = self.opts.feasibility_tol;
        let mut phase_one = self.primal_infeasibility() > 0.0;
        if !phase_one {
            self.price_all(false);
        }
        loop {
            if self.iterations >= self.max_iterations {
                return LpStatus::IterationLimit;
            }
            if self.lu.num_updates() >= self.opts.refactor_interval
                || self.lu.eta_nnz() > 4 * self.lu.factor_nnz() + 10 * self.m
            {
                self.refactor();
                let infeasible = self.primal_infeasibility() > 0.0;
                if infeasible && !phase_one {
                    debug!("lp: lost feasibility after refactor, back to phase 1");
                }
                phase_one = infeasible;
                if !phase_one {
                    self.price_all(false);
                }
            }
            if phase_one {
                if self.primal_infeasibility() == 0.0 {
                    phase_one = false;
                    self.price_all(false);
                    continue;
                }
                self.price_all(true);
                let Some(q) = self.choose_entering() else {
                    self.infeasibility = self
                        .basis
                        .iter()
                        .map(|&j| (self.lower[j] - self.x[j]).max(self.x[j] - self.upper[j]).max(0.0))
                        .sum();
                    if self.infeasibility > ftol {
                        return LpStatus::Infeasible;
                    }
                    phase_one = false;
                    self.price_all(false);
                    continue;
                };
                let dir = if self.d[q] < 0.0 { 1.0 } else { -1.0 };
                self.ftran_column(q);
                match self.ratio_phase_one(q, dir) {
                    Some(step) => self.apply(q, dir, step, false),
                    None => {
                        self.rejected[q] = true;
                        continue;
                    }
                }
            } else {
                let Some(q) = self.choose_entering() else {
                    // confirm with fresh reduced costs
                    self.price_all(false);
                    if self.choose_entering().is_none() {
                        return LpStatus::Optimal;
                    }
                    continue;
                };
                let dir = if self.d[q] < 0.0 { 1.0 } else { -1.0 };
                self.ftran_column(q);
                match self.ratio_phase_two(q, dir) {
                    Some(step) => self.apply(q, dir, step, true),
                    None => return LpStatus::Unbounded,
                }
            }
        }
    }

    fn ftran_column(&mut self, q: usize) {
        let mut a = std::mem::take(&mut self.col_buf);
        a.iter_mut().for_each(|v| *v = 0.0);
        let (idx, val) = self.column(q);
        for (&r, &v) in idx.iter().zip(val) {
            a[r] = v;
        }
        self.lu.ftran(&mut a);
        self.col_buf = a;
    }

    fn eligible(&self, j: usize) -> Option<f64> {
        let tol = self.opts.optimality_tol;
        let d = self.d[j];
        match self.state[j] {
            VarState::AtLower if d < -tol => Some(-d),
            VarState::AtUpper if d > tol => Some(d),
            VarState::Between if d.abs() > tol => Some(d.abs()),
            _ => None,
        }
    }

    fn choose_entering(&self) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for j in 0..self.n + self.m {
            if self.rejected[j] {
                continue;
            }
            if let Some(score) = self.eligible(j) {
                if self.bland {
                    return Some(j);
                }
                if best.map_or(true, |(_, s)| score > s) {
                    best = Some((j, score));
                }
            }
        }
        best.map(|(j, _)| j)
    }

    fn bound_distance(&self, q: usize, dir: f64) -> f64 {
        if dir > 0.0 {
            self.upper[q] - self.x[q]
        } else {
            self.x[q] - self.lower[q]
        }
    }

    fn ratio_phase_two(&self, q: usize, dir: f64) -> Option<Step> {
        let tol = self.opts.feasibility_tol;
        let alpha = &self.col_buf;
        let flip = self.bound_distance(q, dir);
        if self.bland {
            let mut best: Option<(f64, usize, usize, bool)> = None;
            for pos in 0..self.m {
                let a = alpha[pos];
                if a.abs() <= PIVOT_TOL {
                    continue;
                }
                let j = self.basis[pos];
                let delta = -a * dir;
                let (ratio, at_upper) = if delta < 0.0 {
                    if !self.lower[j].is_finite() {
                        continue;
                    }
                    (((self.x[j] - self.lower[j]).max(0.0)) / -delta, false)
                } else {
                    if !self.upper[j].is_finite() {
                        continue;
                    }
                    (((self.upper[j] - self.x[j]).max(0.0)) / delta, true)
                };
                let better = match best {
                    None => true,
                    Some((r, bj, _, _)) => ratio < r - 1e-12 || (ratio <= r + 1e-12 && j < bj),
                };
                if better {
                    best = Some((ratio, j, pos, at_upper));
                }
            }
            return match best {
                Some((ratio, _, pos, up)) if ratio < flip => Some(Step { theta: ratio, leaving: Some((pos, up)) }),
                _ if flip.is_finite() => Some(Step { theta: flip, leaving: None }),
                _ => None,
            };
        }
        // Harris pass 1: relaxed bound
        let mut theta_max = f64::INFINITY;
        for pos in 0..self.m {
            let a = alpha[pos];
            if a.abs() <= PIVOT_TOL {
                continue;
            }
            let j = self.basis[pos];
            let delta = -a * dir;
            let r = if delta < 0.0 {
                (self.x[j] - self.lower[j] + tol) / -delta
            } else {
                (self.upper[j] + tol - self.x[j]) / delta
            };
            if r < theta_max {
                theta_max = r;
            }
        }
        if flip <= theta_max {
            if flip.is_finite() {
                return Some(Step { theta: flip, leaving: None });
            }
            return None;
        }
        // pass 2: largest pivot among ratios within the relaxed bound
        let mut best: Option<(usize, f64, f64, bool)> = None;
        for pos in 0..self.m {
            let a = alpha[pos];
            if a.abs() <= PIVOT_TOL {
                continue;
            }
            let j = self.basis[pos];
            let delta = -a * dir;
            let (r, up) = if delta < 0.0 {
                if !self.lower[j].is_finite() {
                    continue;
                }
                ((self.x[j] - self.lower[j]) / -delta, false)
            } else {
                if !self.upper[j].is_finite() {
                    continue;
                }
                ((self.upper[j] - self.x[j]) / delta, true)
            };
            if r <= theta_max && best.map_or(true, |(_, ba, _, _)| a.abs() > ba) {
                best = Some((pos, a.abs(), r, up));
            }
        }
        best.map(|(pos, _, r, up)| Step {
            theta: r.max(0.0),
            leaving: Some((pos, up)),
        })
    }

    /// Long-step phase 1 ratio test: walk the breakpoints of the piecewise
    /// linear infeasibility while its slope stays negative.
    fn ratio_phase_one(&self, q: usize, dir: f64) -> Option<Step> {
        let tol = self.opts.feasibility_tol;
        let alpha = &self.col_buf;
        // (ratio, |alpha|, pos, leaves at upper)
        let mut bps: Vec<(f64, f64, usize, bool)> = Vec::new();
        for pos in 0..self.m {
            let a = alpha[pos];
            if a.abs() <= PIVOT_TOL {
                continue;
            }
            let j = self.basis[pos];
            let delta = -a * dir;
            let (l, u, v) = (self.lower[j], self.upper[j], self.x[j]);
            if v < l - tol {
                if delta > 0.0 {
                    bps.push(((l - v) / delta, a.abs(), pos, false));
                    if u.is_finite() {
                        bps.push(((u - v) / delta, a.abs(), pos, true));
                    }
                }
            } else if v > u + tol {
                if delta < 0.0 {
                    bps.push(((v - u) / -delta, a.abs(), pos, true));
                    if l.is_finite() {
                        bps.push(((v - l) / -delta, a.abs(), pos, false));
                    }
                }
            } else if delta < 0.0 {
                if l.is_finite() {
                    bps.push(((v - l).max(0.0) / -delta, a.abs(), pos, false));
                }
            } else if u.is_finite() {
                bps.push(((u - v).max(0.0) / delta, a.abs(), pos, true));
            }
        }
        let flip = self.bound_distance(q, dir);
        bps.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.total_cmp(&a.1)).then(a.2.cmp(&b.2)));
        let mut slope = -self.d[q].abs();
        // stop once the slope is flat up to rounding, otherwise the step can
        // run along a zero-slope stretch and undo itself on the next pivot
        let flat = 1e-9 * self.d[q].abs().max(1.0);
        let mut chosen: Option<(f64, usize, bool)> = None;
        for &(ratio, a, pos, up) in &bps {
            if ratio >= flip {
                break;
            }
            slope += a;
            if slope >= -flat {
                chosen = Some((ratio, pos, up));
                break;
            }
        }
        match chosen {
            Some((ratio, pos, up)) => Some(Step {
                theta: ratio.max(0.0),
                leaving: Some((pos, up)),
            }),
            None if flip.is_finite() => Some(Step { theta: flip, leaving: None }),
            None => {
                // slope never turned: take the last breakpoint if any
                bps.last().map(|&(ratio, _, pos, up)| Step {
                    theta: ratio.max(0.0),
                    leaving: Some((pos, up)),
                })
            }
        }
    }

    fn apply(&mut self, q: usize, dir: f64, step: Step, maintain_duals: bool) {
        self.iterations += 1;
        let theta = step.theta;
        if theta <= 1e-12 {
            self.degenerate_run += 1;
            if self.degenerate_run > DEGENERATE_LIMIT && !self.bland {
                debug!("lp: stalling at iteration {}, switching to Bland's rule", self.iterations);
                self.bland = true;
            }
        } else {
            self.degenerate_run = 0;
            self.bland = false;
        }
        if theta != 0.0 {
            for pos in 0..self.m {
                let a = self.col_buf[pos];
                if a != 0.0 {
                    let j = self.basis[pos];
                    self.x[j] -= a * dir * theta;
                }
            }
            self.x[q] += dir * theta;
        }
        let Some((r, at_upper)) = step.leaving else {
            self.state[q] = if dir > 0.0 { VarState::AtUpper } else { VarState::AtLower };
            self.x[q] = if dir > 0.0 { self.upper[q] } else { self.lower[q] };
            return;
        };
        let leaving = self.basis[r];
        let alpha_r = self.col_buf[r];
        if maintain_duals {
            self.update_duals(q, r, leaving, alpha_r);
        }
        self.x[leaving] = if at_upper { self.upper[leaving] } else { self.lower[leaving] };
        self.state[leaving] = if self.lower[leaving] == self.upper[leaving] {
            VarState::Fixed
        } else if at_upper {
            VarState::AtUpper
        } else {
            VarState::AtLower
        };
        self.pos_of[leaving] = usize::MAX;
        self.basis[r] = q;
        self.pos_of[q] = r;
        self.state[q] = VarState::Basic;
        let alpha = std::mem::take(&mut self.col_buf);
        self.lu.update(r, &alpha);
        self.col_buf = alpha;
        if alpha_r.abs() < 1e-7 {
            // weak pivot: rebuild early
            self.refactor();
            if maintain_duals {
                self.price_all(false);
            }
        }
    }

    fn update_duals(&mut self, q: usize, r: usize, leaving: usize, alpha_r: f64) {
        let mut rho = std::mem::take(&mut self.row_buf);
        rho.iter_mut().for_each(|v| *v = 0.0);
        rho[r] = 1.0;
        self.lu.btran(&mut rho);
        for t in self.touched.drain(..) {
            self.pivot_row[t] = 0.0;
            self.mark[t] = false;
        }
        for i in 0..self.m {
            let ri = rho[i];
            if ri == 0.0 {
                continue;
            }
            for k in self.row_start[i]..self.row_start[i + 1] {
                let j = self.row_col[k];
                if self.state[j] == VarState::Basic {
                    continue;
                }
                if !self.mark[j] {
                    self.mark[j] = true;
                    self.touched.push(j);
                }
                self.pivot_row[j] += self.row_val[k] * ri;
            }
            let lj = self.n + i;
            if self.state[lj] != VarState::Basic {
                if !self.mark[lj] {
                    self.mark[lj] = true;
                    self.touched.push(lj);
                }
                self.pivot_row[lj] -= ri;
            }
        }
        self.row_buf = rho;
        let alpha_rq = self.pivot_row[q];
        if (alpha_rq - alpha_r).abs() > 1e-6 * (1.0 + alpha_r.abs()) {
            debug!("lp: pivot mismatch {alpha_rq} vs {alpha_r}, repricing");
        }
        let theta_d = self.d[q] / alpha_r;
        for &j in &self.touched {
            if j != q {
                self.d[j] -= theta_d * self.pivot_row[j];
            }
        }
        self.d[q] = 0.0;
        self.d[leaving] = -theta_d;
    }

    fn finish(mut self, status: LpStatus) -> LpSolution {
        let n = self.n;
        let m = self.m;
        let mut sol = LpSolution {
            status,
            x: self.x[..n].to_vec(),
            row_duals: vec![0.0; m],
            reduced_costs: vec![0.0; n],
            row_activity: Vec::new(),
            objective: f64::NAN,
            iterations: self.iterations,
            primal_residual: 0.0,
            infeasibility: self.infeasibility,
        };
        if status == LpStatus::Optimal {
            self.refactor();
            sol.x = self.x[..n].to_vec();
            let mut y = vec![0.0; m];
            for pos in 0..m {
                y[pos] = self.cost[self.basis[pos]];
            }
            self.lu.btran(&mut y);
            for j in 0..n {
                sol.reduced_costs[j] = self.cost[j] - self.col_dot(j, &y);
            }
            sol.row_duals = y;
            sol.objective = self.p.objective_value(&sol.x);
            sol.primal_residual = self.p.max_violation(&sol.x);
            if sol.primal_residual > 1e3 * self.opts.feasibility_tol {
                debug!("lp: residual {} too large after final refactor", sol.primal_residual);
                sol.status = LpStatus::NumericFailure;
            }
        }
        sol.row_activity = self.p.row_activity(&sol.x);
        debug!(
            "lp: status={:?} iterations={} rows={} cols={}",
            sol.status, sol.iterations, m, n
        );
        sol
    }
}
