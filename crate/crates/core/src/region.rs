//! Dispatch-region analysis: single-point worst-case checks, grid sweeps
//! over `t0` generator outputs, and per-line flow reports.

use std::fmt::Write as _;

use essr_solver::{solve_lp, LpOptions, LpStatus};
use serde::{Deserialize, Serialize};

use crate::bilevel::RecourseEvaluator;
use crate::error::{EssrError, Result};
use crate::grid::NetworkCase;
use crate::polytope::{
    augment_slacks, build_essr, build_shared_stack, feasibility_value, slack_lp, BigMPolicy, BusShed, FeasibilityLp,
    RowTag, Side, SlackLp, VarRef, SLACK_REPORT_TOL,
};
use crate::scenario::{FailureScenario, ScenarioSet};

/// A cell is feasible when its worst-case shed is at most this.
pub const FEASIBLE_TOL: f64 = 1e-6;

/// Default limit on the number of cells in one sweep.
pub const DEFAULT_GRID_CAP: usize = 250_000;

/// How post-`t0` dispatch relates across scenarios.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CouplingMode {
    /// Generation may be re-dispatched per scenario after `t0`.
    #[default]
    Recourse,
    /// One generation trajectory must serve every scenario at once.
    Shared,
}

impl std::str::FromStr for CouplingMode {
    type Err = EssrError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "recourse" => Ok(Self::Recourse),
            "shared" => Ok(Self::Shared),
            other => Err(EssrError::Invalid(format!("unknown coupling mode '{other}' (expected recourse or shared)"))),
        }
    }
}

/// Outcome of checking one `t0` dispatch point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    /// Generator outputs at `t0`, in case generator order.
    pub point: Vec<f64>,
    pub feasible: bool,
    /// Worst-case total slack. In shared mode this is the slack of the
    /// stacked system, summed over scenarios.
    pub shed: f64,
    /// Worst scenario (0-based); `None` in shared mode or when the point
    /// itself lies outside the generator limits.
    pub argmax_scenario: Option<usize>,
}

impl CellResult {
    fn new(point: Vec<f64>, shed: f64, argmax_scenario: Option<usize>) -> Self {
        Self { point, feasible: shed <= FEASIBLE_TOL, shed, argmax_scenario }
    }
}

/// Shared-mode LPs built once and re-pinned per point.
#[derive(Debug, Clone)]
struct SharedLps {
    fast: FeasibilityLp,
    slack: SlackLp,
    t0_vars: Vec<usize>,
}

#[derive(Debug, Clone)]
enum Engine {
    Recourse(Box<RecourseEvaluator>),
    Shared(Box<SharedLps>),
}

/// Evaluates many dispatch points against one case and scenario set.
#[derive(Debug, Clone)]
pub struct PointChecker {
    engine: Engine,
    bounds: Vec<(f64, f64)>,
    opts: LpOptions,
}

impl PointChecker {
    pub fn new(case: &NetworkCase, set: &ScenarioSet, mode: CouplingMode, opts: &LpOptions) -> Result<Self> {
        let engine = match mode {
            CouplingMode::Recourse => {
                Engine::Recourse(Box::new(RecourseEvaluator::new(case, set, BigMPolicy::Tight, opts.clone())?))
            }
            CouplingMode::Shared => {
                let sys = build_shared_stack(case, set)?;
                let t0_vars = case
                    .generators
                    .iter()
                    .map(|g| sys.var(&VarRef::GenOutput { gen: g.id, t: 0 }).expect("generator registered"))
                    .collect();
                let slack = augment_slacks(&sys)?;
                Engine::Shared(Box::new(SharedLps { fast: FeasibilityLp::new(&sys), slack: slack_lp(&slack, false)?, t0_vars }))
            }
        };
        let bounds = case.generators.iter().map(|g| (g.p_min, g.p_max)).collect();
        Ok(Self { engine, bounds, opts: opts.clone() })
    }

    pub fn mode(&self) -> CouplingMode {
        match self.engine {
            Engine::Recourse(_) => CouplingMode::Recourse,
            Engine::Shared(_) => CouplingMode::Shared,
        }
    }

    /// Checks a point inside the generator limits.
    pub fn check(&mut self, point: &[f64]) -> Result<CellResult> {
        if point.len() != self.bounds.len() {
            return Err(EssrError::Invalid(format!(
                "dispatch point has {} outputs, case has {} generators",
                point.len(),
                self.bounds.len()
            )));
        }
        if let Some(i) = (0..point.len()).find(|&i| !(self.bounds[i].0..=self.bounds[i].1).contains(&point[i])) {
            return Err(EssrError::Invalid(format!(
                "output {} of generator #{} is outside [{}, {}]",
                point[i],
                i + 1,
                self.bounds[i].0,
                self.bounds[i].1
            )));
        }
        match &mut self.engine {
            Engine::Recourse(ev) => {
                let (value, arg, _) = ev.worst(Some(point))?;
                Ok(CellResult::new(point.to_vec(), value, Some(arg)))
            }
            Engine::Shared(lps) => {
                for (i, &j) in lps.t0_vars.iter().enumerate() {
                    lps.fast.pin(j, point[i]);
                    lps.slack.set_var_bounds(j, point[i], point[i]);
                }
                if lps.fast.solve(&self.opts)?.is_some() {
                    return Ok(CellResult::new(point.to_vec(), 0.0, None));
                }
                let s = solve_lp(&lps.slack.lp, &self.opts);
                if s.status != LpStatus::Optimal {
                    return Err(EssrError::Solver(format!("shared stack slack LP ended with status {:?}", s.status)));
                }
                Ok(CellResult::new(point.to_vec(), s.objective.max(0.0), None))
            }
        }
    }
}

/// Worst-case check of one `t0` dispatch point.
pub fn check_point(
    case: &NetworkCase,
    set: &ScenarioSet,
    point: &[f64],
    mode: CouplingMode,
    opts: &LpOptions,
) -> Result<CellResult> {
    PointChecker::new(case, set, mode, opts)?.check(point)
}

/// One swept generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    /// Generator id.
    pub generator: usize,
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

impl Axis {
    pub fn values(&self) -> Vec<f64> {
        let n = ((self.max - self.min) / self.step + 1e-9).floor() as usize + 1;
        // round away accumulated binary noise so 0.62 prints as 0.62
        (0..n).map(|i| ((self.min + i as f64 * self.step) * 1e9).round() / 1e9).collect()
    }
}

/// What to sweep and how to fill in the generators that are not swept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub axes: Vec<Axis>,
    /// Generator whose output is set so that total `t0` generation equals
    /// total `t0` load.
    #[serde(default)]
    pub balance: Option<usize>,
    /// Remaining generators held at fixed outputs, as `(generator id, value)`.
    #[serde(default)]
    pub fixed: Vec<(usize, f64)>,
    #[serde(default)]
    pub mode: CouplingMode,
    /// Applied to every generator's up and down ramp limit.
    #[serde(default)]
    pub ramp: Option<f64>,
    /// `(line id, capacity)` overrides.
    #[serde(default)]
    pub capacity: Vec<(usize, f64)>,
    #[serde(default = "default_cap")]
    pub grid_cap: usize,
}

fn default_cap() -> usize {
    DEFAULT_GRID_CAP
}

impl SweepSpec {
    /// Two swept generators with a third balancing the load, the layout
    /// used for plane plots.
    pub fn plane(x: Axis, y: Axis, balance: usize) -> Self {
        Self {
            axes: vec![x, y],
            balance: Some(balance),
            fixed: Vec::new(),
            mode: CouplingMode::Recourse,
            ramp: None,
            capacity: Vec::new(),
            grid_cap: DEFAULT_GRID_CAP,
        }
    }

    /// The case with ramp and capacity overrides applied.
    pub fn apply(&self, case: &NetworkCase) -> Result<NetworkCase> {
        let mut c = case.clone();
        if let Some(r) = self.ramp {
            if !(r > 0.0) {
                return Err(EssrError::Invalid(format!("ramp override must be positive, got {r}")));
            }
            c.set_ramp(r);
        }
        for &(line, cap) in &self.capacity {
            c.set_line_capacity(line, cap)?;
        }
        Ok(c)
    }

    fn check(&self, case: &NetworkCase) -> Result<()> {
        if self.axes.is_empty() {
            return Err(EssrError::Invalid("sweep needs at least one axis".into()));
        }
        let mut role = vec![0usize; case.generators.len()];
        let mut mark = |id: usize| -> Result<()> {
            let pos = case
                .generators
                .iter()
                .position(|g| g.id == id)
                .ok_or_else(|| EssrError::Invalid(format!("sweep names unknown generator {id}")))?;
            role[pos] += 1;
            Ok(())
        };
        for a in &self.axes {
            if !(a.step > 0.0) || !(a.max >= a.min) {
                return Err(EssrError::Invalid(format!("axis of generator {} needs step > 0 and max ≥ min", a.generator)));
            }
            let g = case.generators.iter().find(|g| g.id == a.generator);
            if let Some(g) = g {
                if a.min < g.p_min - 1e-12 || a.max > g.p_max + 1e-12 {
                    return Err(EssrError::Invalid(format!(
                        "axis of generator {} leaves its limits [{}, {}]",
                        g.id, g.p_min, g.p_max
                    )));
                }
            }
            mark(a.generator)?;
        }
        if let Some(b) = self.balance {
            mark(b)?;
        }
        for &(g, _) in &self.fixed {
            mark(g)?;
        }
        if let Some(pos) = role.iter().position(|&r| r != 1) {
            let what = if role[pos] == 0 { "has no role" } else { "has more than one role" };
            return Err(EssrError::Invalid(format!("generator {} {what} in the sweep", case.generators[pos].id)));
        }
        let cells: usize = self.axes.iter().map(|a| a.values().len()).product();
        if cells > self.grid_cap {
            return Err(EssrError::Invalid(format!("sweep has {cells} cells, above the cap of {}", self.grid_cap)));
        }
        Ok(())
    }
}

/// Evaluated grid. Cells are stored row-major with the last axis varying
/// fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionGrid {
    pub axes: Vec<Axis>,
    pub balance: Option<usize>,
    pub mode: CouplingMode,
    /// Generator ids in the order of `CellResult::point`.
    pub generators: Vec<usize>,
    pub shape: Vec<usize>,
    pub cells: Vec<CellResult>,
}

impl RegionGrid {
    pub fn feasible_count(&self) -> usize {
        self.cells.iter().filter(|c| c.feasible).count()
    }

    pub fn index(&self, coords: &[usize]) -> usize {
        coords.iter().zip(&self.shape).fold(0, |acc, (&c, &n)| acc * n + c)
    }

    pub fn cell(&self, coords: &[usize]) -> &CellResult {
        &self.cells[self.index(coords)]
    }

    /// True when every cell feasible here is feasible in `other` (same grid).
    pub fn is_subset_of(&self, other: &RegionGrid) -> Result<bool> {
        if self.shape != other.shape || self.axes != other.axes {
            return Err(EssrError::Invalid("grids have different axes".into()));
        }
        Ok(self.cells.iter().zip(&other.cells).all(|(a, b)| !a.feasible || b.feasible))
    }

    /// Infeasible cells of a 2-D grid whose four neighbours are all feasible.
    pub fn isolated_infeasible(&self) -> Vec<usize> {
        if self.shape.len() != 2 {
            return Vec::new();
        }
        let (nx, ny) = (self.shape[0], self.shape[1]);
        let mut out = Vec::new();
        for i in 1..nx.saturating_sub(1) {
            for j in 1..ny.saturating_sub(1) {
                let idx = self.index(&[i, j]);
                let around = [[i - 1, j], [i + 1, j], [i, j - 1], [i, j + 1]];
                if !self.cells[idx].feasible && around.iter().all(|c| self.cell(c).feasible) {
                    out.push(idx);
                }
            }
        }
        out
    }

    /// `x,y[,z],feasible,shed,argmax_scenario` with the swept outputs as
    /// coordinates; the argmax is 0-based and empty when undefined.
    pub fn to_csv(&self) -> String {
        let names = ["x", "y", "z"];
        let mut s = String::new();
        for (i, _) in self.axes.iter().enumerate() {
            let name = names.get(i).map_or_else(|| format!("x{}", i + 1), |n| n.to_string());
            let _ = write!(s, "{name},");
        }
        s.push_str("feasible,shed,argmax_scenario\n");
        let pos: Vec<usize> = self
            .axes
            .iter()
            .map(|a| self.generators.iter().position(|&g| g == a.generator).unwrap_or(0))
            .collect();
        for c in &self.cells {
            for &p in &pos {
                let _ = write!(s, "{},", c.point[p]);
            }
            let arg = c.argmax_scenario.map_or(String::new(), |k| k.to_string());
            let _ = writeln!(s, "{},{:.9},{}", u8::from(c.feasible), c.shed, arg);
        }
        s
    }

    /// Gnuplot "nonuniform matrix" text for a 2-D grid: the first line holds
    /// the column count and the second-axis values, each following line one
    /// first-axis value and its shed values.
    pub fn to_gnuplot_matrix(&self) -> Result<String> {
        if self.shape.len() != 2 {
            return Err(EssrError::Invalid("matrix export needs a 2-D grid".into()));
        }
        let xs = self.axes[0].values();
        let ys = self.axes[1].values();
        let mut s = format!("{}", ys.len());
        for y in &ys {
            let _ = write!(s, " {y}");
        }
        s.push('\n');
        for (i, x) in xs.iter().enumerate() {
            let _ = write!(s, "{x}");
            for j in 0..ys.len() {
                let _ = write!(s, " {:.9}", self.cell(&[i, j]).shed);
            }
            s.push('\n');
        }
        Ok(s)
    }
}

/// Evaluates every cell of `spec` in a fixed order.
pub fn sweep_region(case: &NetworkCase, set: &ScenarioSet, spec: &SweepSpec, opts: &LpOptions) -> Result<RegionGrid> {
    let case = spec.apply(case)?;
    spec.check(&case)?;
    let pos_of = |id: usize| case.generators.iter().position(|g| g.id == id).expect("checked");
    let axis_pos: Vec<usize> = spec.axes.iter().map(|a| pos_of(a.generator)).collect();
    let values: Vec<Vec<f64>> = spec.axes.iter().map(Axis::values).collect();
    let shape: Vec<usize> = values.iter().map(Vec::len).collect();
    let total: usize = shape.iter().product();
    let load = case.total_load(0);
    let mut checker = PointChecker::new(&case, set, spec.mode, opts)?;
    let mut base = vec![0.0; case.generators.len()];
    for &(g, v) in &spec.fixed {
        base[pos_of(g)] = v;
    }
    let mut cells = Vec::with_capacity(total);
    let mut coords = vec![0usize; shape.len()];
    for _ in 0..total {
        let mut point = base.clone();
        for (a, &c) in coords.iter().enumerate() {
            point[axis_pos[a]] = values[a][c];
        }
        let cell = match spec.balance {
            Some(b) => {
                let bp = pos_of(b);
                let others: f64 = point.iter().enumerate().filter(|&(i, _)| i != bp).map(|(_, v)| v).sum();
                let v = ((load - others) * 1e9).round() / 1e9;
                point[bp] = v;
                let g = &case.generators[bp];
                let outside = (g.p_min - v).max(v - g.p_max);
                if outside > 0.0 {
                    // the balancing unit cannot make up the difference
                    CellResult::new(point, outside, None)
                } else {
                    checker.check(&point)?
                }
            }
            None => checker.check(&point)?,
        };
        cells.push(cell);
        for a in (0..coords.len()).rev() {
            coords[a] += 1;
            if coords[a] < shape[a] {
                break;
            }
            coords[a] = 0;
        }
    }
    Ok(RegionGrid {
        axes: spec.axes.clone(),
        balance: spec.balance,
        mode: spec.mode,
        generators: case.generators.iter().map(|g| g.id).collect(),
        shape,
        cells,
    })
}

/// One line of a [`FlowTable`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowRow {
    pub line: usize,
    pub from_bus: usize,
    pub to_bus: usize,
    pub capacity: f64,
    /// Flow per period `t1..tN`; `None` while the line is out of service.
    pub flows: Vec<Option<f64>>,
    pub binding: Vec<bool>,
}

/// Per-line flows after `t0` at a minimum-shed recourse solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowTable {
    pub periods: Vec<String>,
    pub rows: Vec<FlowRow>,
    /// Generator outputs per generator, per period `t0..tN`.
    pub dispatch: Vec<Vec<f64>>,
    pub shed: Vec<BusShed>,
    /// Generation that could not be absorbed, per bus and period.
    pub surplus: Vec<BusShed>,
    /// Total relaxation of the reported solution.
    pub total_slack: f64,
    /// False when balance relaxation alone could not hold the point and
    /// every row was relaxed.
    pub balance_only: bool,
}

impl FlowTable {
    pub fn total_shed(&self) -> f64 {
        self.shed.iter().map(|s| s.shed).sum()
    }

    /// `line,from_bus,to_bus,capacity,<period>...,binding` where the binding
    /// column lists the periods at capacity separated by `;`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("line,from_bus,to_bus,capacity");
        for p in &self.periods {
            let _ = write!(s, ",{p}");
        }
        s.push_str(",binding\n");
        for r in &self.rows {
            let _ = write!(s, "{},{},{},{}", r.line, r.from_bus, r.to_bus, r.capacity);
            for f in &r.flows {
                match f {
                    Some(v) => {
                        let _ = write!(s, ",{v:.4}");
                    }
                    None => s.push(','),
                }
            }
            let binding: Vec<&str> =
                r.binding.iter().zip(&self.periods).filter(|(b, _)| **b).map(|(_, p)| p.as_str()).collect();
            let _ = writeln!(s, ",{}", binding.join(";"));
        }
        s
    }
}

/// Flows of `scenario` with `t0` pinned to `point`.
///
/// When the point cannot be held, the table shows a minimum-shed solution:
/// line limits, angle limits and ramps stay hard and only nodal balance
/// may be relaxed (load shed, or surplus where generation cannot back
/// down). If even that is infeasible, every row is relaxed and the
/// minimum-total-slack point is reported instead.
pub fn flow_report(case: &NetworkCase, scenario: &FailureScenario, point: &[f64], opts: &LpOptions) -> Result<FlowTable> {
    let mut sys = build_essr(case, scenario)?;
    sys.pin_dispatch(case, 0, point)?;
    let slack = augment_slacks(&sys)?;
    let is_balance = |i: usize| matches!(slack.base.rows[slack.rows[i].source].tag, RowTag::Balance { .. });
    let mut slp = slack_lp(&slack, false)?;
    for i in 0..slack.rows.len() {
        if !is_balance(i) {
            slp.lp.col_upper[slp.minus_col[i]] = 0.0;
        }
    }
    let s = solve_lp(&slp.lp, opts);
    let (x, minus, total, balance_only) = match s.status {
        LpStatus::Optimal => {
            let x: Vec<f64> = slp.var_col.iter().map(|&c| s.x[c]).collect();
            let minus: Vec<f64> = slp.minus_col.iter().map(|&c| s.x[c]).collect();
            (x, minus, s.objective.max(0.0), true)
        }
        LpStatus::Infeasible => {
            let cert = feasibility_value(&slack, opts, true)?;
            (cert.x, cert.minus, cert.value, false)
        }
        other => return Err(EssrError::Solver(format!("flow report LP ended with status {other:?}"))),
    };
    let mut shed = Vec::new();
    let mut surplus = Vec::new();
    for (i, r) in slack.rows.iter().enumerate() {
        if let RowTag::Balance { bus, t, .. } = slack.base.rows[r.source].tag {
            if minus[i] > SLACK_REPORT_TOL {
                let entry = BusShed { bus, t, shed: minus[i] };
                if r.side == Side::Lower {
                    shed.push(entry);
                } else {
                    surplus.push(entry);
                }
            }
        }
    }
    let periods = case.horizon[1..].to_vec();
    let mut rows = Vec::with_capacity(case.lines.len());
    for l in &case.lines {
        let mut flows = Vec::with_capacity(periods.len());
        let mut binding = Vec::with_capacity(periods.len());
        for t in 1..case.num_periods() {
            let f = sys.var(&VarRef::LineFlow { line: l.id, t, block: 0 }).map(|j| x[j]);
            binding.push(f.is_some_and(|v| (v.abs() - l.capacity).abs() <= 1e-6));
            flows.push(f);
        }
        rows.push(FlowRow { line: l.id, from_bus: l.from_bus, to_bus: l.to_bus, capacity: l.capacity, flows, binding });
    }
    let dispatch = case
        .generators
        .iter()
        .map(|g| {
            (0..case.num_periods())
                .map(|t| sys.var(&VarRef::GenOutput { gen: g.id, t }).map_or(f64::NAN, |j| x[j]))
                .collect()
        })
        .collect();
    Ok(FlowTable { periods, rows, dispatch, shed, surplus, total_slack: total, balance_only })
}
