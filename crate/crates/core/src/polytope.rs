//! Constraint-system assembly: per-topology steady-state polytopes over a
//! multi-period horizon, slack-augmented feasibility LPs, switchable-line
//! systems with big-M rows and the McCormick scenario-selection chain.
//!
//! Conventions used by every builder:
//!
//! * nodal balance is `Σ P_g + Σ inflow − Σ outflow = load`, so a line's
//!   flow is positive from `from_bus` to `to_bus`;
//! * flow definition is `B·(θ_from − θ_to) − P = 0`;
//! * each variable's registry bounds mirror explicit bound rows, so slack
//!   formulations can relax bounds like any other row.

use std::collections::{BTreeMap, HashMap};

use essr_solver::{solve_lp, LpBuilder, LpOptions, LpProblem, LpStatus, RowSense};
use serde::{Deserialize, Serialize};

use crate::error::{EssrError, Result};
use crate::grid::NetworkCase;
use crate::scenario::{ExposedLine, FailureScenario, ScenarioSet};

/// Typed variable identity. Grid entities are referred to by their ids;
/// `block` separates copies of the network in stacked systems.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VarRef {
    GenOutput { gen: usize, t: usize },
    LineFlow { line: usize, t: usize, block: usize },
    Angle { bus: usize, t: usize, block: usize },
    LineState { line: usize, t: usize, block: usize },
    ScenarioSelect { k: usize },
    McCormickAux { k: usize, i: usize },
    SlackPlus { row: usize },
    SlackMinus { row: usize },
    /// Multiplier of expanded inner row `row`.
    Dual { row: usize },
    Indicator { row: usize, pair: PairKind },
    /// Product of `Dual{row}` with the binary at registry index `var`.
    DualProduct { row: usize, var: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairKind {
    RowSlack,
    ShedSlack,
}

impl VarRef {
    pub fn name(&self) -> String {
        match *self {
            VarRef::GenOutput { gen, t } => format!("P_g{gen}_t{t}"),
            VarRef::LineFlow { line, t, block } => format!("F_l{line}_t{t}_k{block}"),
            VarRef::Angle { bus, t, block } => format!("th_b{bus}_t{t}_k{block}"),
            VarRef::LineState { line, t, block } => format!("u_l{line}_t{t}_k{block}"),
            VarRef::ScenarioSelect { k } => format!("z_{k}"),
            VarRef::McCormickAux { k, i } => format!("zeta_{k}_{i}"),
            VarRef::SlackPlus { row } => format!("sp_{row}"),
            VarRef::SlackMinus { row } => format!("sm_{row}"),
            VarRef::Dual { row } => format!("alpha_{row}"),
            VarRef::Indicator { row, pair: PairKind::RowSlack } => format!("w_{row}"),
            VarRef::Indicator { row, pair: PairKind::ShedSlack } => format!("v_{row}"),
            VarRef::DualProduct { row, var } => format!("p_{row}_{var}"),
        }
    }

    /// Whether this variable is a primal network quantity (the `Y` vector).
    pub fn is_network(&self) -> bool {
        matches!(self, VarRef::GenOutput { .. } | VarRef::LineFlow { .. } | VarRef::Angle { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarInfo {
    pub var: VarRef,
    pub lower: f64,
    pub upper: f64,
    pub binary: bool,
}

impl VarInfo {
    pub fn is_pinned(&self) -> bool {
        self.lower == self.upper
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sense {
    Le,
    Eq,
}

/// The constraint family a row belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum RowTag {
    Balance { bus: usize, t: usize, block: usize },
    FlowAngle { line: usize, t: usize, block: usize },
    FlowMax { line: usize, t: usize, block: usize },
    FlowMin { line: usize, t: usize, block: usize },
    /// `−Bθ_f + Bθ_t + P + M·u ≤ M`
    SwitchAngleUpper { line: usize, t: usize, block: usize },
    /// `Bθ_f − Bθ_t − P + M·u ≤ M`
    SwitchAngleLower { line: usize, t: usize, block: usize },
    /// `P − cap·u ≤ 0`
    SwitchFlowMax { line: usize, t: usize, block: usize },
    /// `−P − cap·u ≤ 0`
    SwitchFlowMin { line: usize, t: usize, block: usize },
    GenMax { gen: usize, t: usize },
    GenMin { gen: usize, t: usize },
    AngleMax { bus: usize, t: usize, block: usize },
    AngleMin { bus: usize, t: usize, block: usize },
    Reference { t: usize, block: usize },
    RampUp { gen: usize, t: usize },
    RampDown { gen: usize, t: usize },
    McCormick { k: usize },
    Selection,
    Stationarity { var: usize },
    PrimalSlack { row: usize },
    StrongDuality,
    DualIndicator { row: usize },
    SlackIndicator { row: usize },
    ShedDualIndicator { row: usize },
    ShedIndicator { row: usize },
    ProductEnvelope { row: usize, var: usize },
}

impl RowTag {
    /// Rows describing the physical network; these are the rows that slack
    /// formulations relax. Topology-selection and KKT rows stay hard.
    pub fn is_network(&self) -> bool {
        !matches!(
            self,
            RowTag::McCormick { .. }
                | RowTag::Selection
                | RowTag::Stationarity { .. }
                | RowTag::PrimalSlack { .. }
                | RowTag::StrongDuality
                | RowTag::DualIndicator { .. }
                | RowTag::SlackIndicator { .. }
                | RowTag::ShedDualIndicator { .. }
                | RowTag::ShedIndicator { .. }
                | RowTag::ProductEnvelope { .. }
        )
    }

    pub fn period(&self) -> Option<usize> {
        match *self {
            RowTag::Balance { t, .. }
            | RowTag::FlowAngle { t, .. }
            | RowTag::FlowMax { t, .. }
            | RowTag::FlowMin { t, .. }
            | RowTag::SwitchAngleUpper { t, .. }
            | RowTag::SwitchAngleLower { t, .. }
            | RowTag::SwitchFlowMax { t, .. }
            | RowTag::SwitchFlowMin { t, .. }
            | RowTag::GenMax { t, .. }
            | RowTag::GenMin { t, .. }
            | RowTag::AngleMax { t, .. }
            | RowTag::AngleMin { t, .. }
            | RowTag::Reference { t, .. }
            | RowTag::RampUp { t, .. }
            | RowTag::RampDown { t, .. } => Some(t),
            _ => None,
        }
    }

    pub fn label(&self) -> String {
        serde_json::to_string(self).unwrap_or_default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearRow {
    /// `(registry index, coefficient)`, no duplicate indices.
    pub coeffs: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
    pub tag: RowTag,
    /// Cost multiplier of this row's slacks (used by deduplicated stacks).
    #[serde(default = "one", skip_serializing_if = "is_one")]
    pub weight: f64,
}

fn one() -> f64 {
    1.0
}

fn is_one(v: &f64) -> bool {
    *v == 1.0
}

impl LinearRow {
    pub fn activity(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(j, a)| a * x[j]).sum()
    }

    /// Amount by which `x` violates this row (0 when satisfied).
    pub fn violation(&self, x: &[f64]) -> f64 {
        let a = self.activity(x);
        match self.sense {
            Sense::Le => (a - self.rhs).max(0.0),
            Sense::Eq => (a - self.rhs).abs(),
        }
    }
}

/// Sparse rows over a typed variable registry.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSystem {
    pub vars: Vec<VarInfo>,
    pub rows: Vec<LinearRow>,
    /// Minimisation objective `(registry index, cost)`; empty for pure
    /// feasibility systems.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub objective: Vec<(usize, f64)>,
    #[serde(skip)]
    index: HashMap<VarRef, usize>,
}

impl ConstraintSystem {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn add_var(&mut self, var: VarRef, lower: f64, upper: f64, binary: bool) -> Result<usize> {
        if self.index.contains_key(&var) {
            return Err(EssrError::Invalid(format!("variable {} registered twice", var.name())));
        }
        if lower.is_nan() || upper.is_nan() || lower > upper {
            return Err(EssrError::Invalid(format!("bounds [{lower}, {upper}] of {} are not ordered", var.name())));
        }
        let j = self.vars.len();
        self.vars.push(VarInfo { var, lower, upper, binary });
        self.index.insert(var, j);
        Ok(j)
    }

    pub fn var(&self, var: &VarRef) -> Option<usize> {
        self.index.get(var).copied()
    }

    fn require(&self, var: &VarRef) -> Result<usize> {
        self.var(var).ok_or_else(|| EssrError::Invalid(format!("unknown variable {}", var.name())))
    }

    /// Adds a row, merging repeated indices and dropping zero coefficients.
    pub fn add_row(&mut self, coeffs: &[(usize, f64)], sense: Sense, rhs: f64, tag: RowTag) -> Result<usize> {
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(coeffs.len());
        for &(j, a) in coeffs {
            if j >= self.vars.len() {
                return Err(EssrError::Invalid(format!("row {tag:?} references unregistered index {j}")));
            }
            if !a.is_finite() {
                return Err(EssrError::Invalid(format!("row {tag:?} has a non-finite coefficient")));
            }
            match merged.iter_mut().find(|(k, _)| *k == j) {
                Some(e) => e.1 += a,
                None => merged.push((j, a)),
            }
        }
        merged.retain(|&(_, a)| a != 0.0);
        if !rhs.is_finite() {
            return Err(EssrError::Invalid(format!("row {tag:?} has a non-finite rhs")));
        }
        self.rows.push(LinearRow { coeffs: merged, sense, rhs, tag, weight: 1.0 });
        Ok(self.rows.len() - 1)
    }

    /// Fixes a variable to `value` through its registry bounds.
    pub fn pin(&mut self, var: &VarRef, value: f64) -> Result<()> {
        let j = self.require(var)?;
        self.vars[j].lower = value;
        self.vars[j].upper = value;
        Ok(())
    }

    /// Pins `P_g,t` for every generator in case order.
    pub fn pin_dispatch(&mut self, case: &NetworkCase, t: usize, values: &[f64]) -> Result<()> {
        if values.len() != case.generators.len() {
            return Err(EssrError::Invalid(format!(
                "dispatch has {} values for {} generators",
                values.len(),
                case.generators.len()
            )));
        }
        for (g, &v) in case.generators.iter().zip(values) {
            self.pin(&VarRef::GenOutput { gen: g.id, t }, v)?;
        }
        Ok(())
    }

    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let rows = self.rows.iter().map(|r| r.violation(x)).fold(0.0, f64::max);
        let bounds = self
            .vars
            .iter()
            .zip(x)
            .map(|(v, &xv)| (v.lower - xv).max(xv - v.upper).max(0.0))
            .fold(0.0, f64::max);
        rows.max(bounds)
    }

    /// Direct LP/MILP form: one column per registry entry, rows unchanged.
    pub fn to_lp(&self) -> (LpProblem, Vec<bool>) {
        let mut b = LpBuilder::new();
        let mut cost = vec![0.0; self.vars.len()];
        for &(j, c) in &self.objective {
            cost[j] += c;
        }
        for (v, &c) in self.vars.iter().zip(&cost) {
            b.add_named_col(v.var.name(), v.lower, v.upper, c);
        }
        for (i, r) in self.rows.iter().enumerate() {
            let sense = match r.sense {
                Sense::Le => RowSense::Le,
                Sense::Eq => RowSense::Eq,
            };
            b.add_named_row(format!("r{i}"), &r.coeffs, sense, r.rhs);
        }
        let integer = self.vars.iter().map(|v| v.binary).collect();
        (b.build(), integer)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let mut s: Self = serde_json::from_str(text)?;
        s.rebuild_index()?;
        Ok(s)
    }

    fn rebuild_index(&mut self) -> Result<()> {
        self.index.clear();
        for (j, v) in self.vars.iter().enumerate() {
            if self.index.insert(v.var, j).is_some() {
                return Err(EssrError::Invalid(format!("variable {} registered twice", v.var.name())));
            }
        }
        Ok(())
    }
}

/// How a line enters a period block.
#[derive(Debug, Clone, Copy)]
enum LineMode {
    Hard,
    Dropped,
    Switchable { u: usize, big_m: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BigMPolicy {
    /// Smallest valid constant from angle bounds and capacity.
    #[default]
    Tight,
    Constant(f64),
}

/// Smallest big-M making the switched flow-angle rows vacuous at `u = 0`.
pub fn big_m_for_line(line: &crate::grid::Line, case: &NetworkCase) -> Result<f64> {
    let from = case.bus_pos(line.from_bus).ok_or(EssrError::UnknownLine(line.id))?;
    let to = case.bus_pos(line.to_bus).ok_or(EssrError::UnknownLine(line.id))?;
    let (bf, bt) = (&case.buses[from], &case.buses[to]);
    let m = line.susceptance * (bf.angle_max - bf.angle_min + bt.angle_max - bt.angle_min) + line.capacity;
    if !m.is_finite() {
        return Err(EssrError::NonFiniteBigM { line: line.id });
    }
    Ok(m)
}

fn policy_m(policy: BigMPolicy, line: &crate::grid::Line, case: &NetworkCase) -> Result<f64> {
    match policy {
        BigMPolicy::Tight => big_m_for_line(line, case),
        BigMPolicy::Constant(m) if m.is_finite() => Ok(m),
        BigMPolicy::Constant(_) => Err(EssrError::NonFiniteBigM { line: line.id }),
    }
}

fn check_horizon(case: &NetworkCase) -> Result<()> {
    if case.num_periods() < 2 {
        return Err(EssrError::HorizonTooShort(case.num_periods()));
    }
    Ok(())
}

/// Registers generator variables for every period with bound and ramp
/// rows; returns indices as `[t][generator position]`.
fn add_generators(sys: &mut ConstraintSystem, case: &NetworkCase) -> Result<Vec<Vec<usize>>> {
    let n = case.num_periods();
    let mut idx = vec![Vec::with_capacity(case.generators.len()); n];
    for (t, row) in idx.iter_mut().enumerate() {
        for g in &case.generators {
            let j = sys.add_var(VarRef::GenOutput { gen: g.id, t }, g.p_min, g.p_max, false)?;
            sys.add_row(&[(j, 1.0)], Sense::Le, g.p_max, RowTag::GenMax { gen: g.id, t })?;
            sys.add_row(&[(j, -1.0)], Sense::Le, -g.p_min, RowTag::GenMin { gen: g.id, t })?;
            row.push(j);
        }
    }
    for t in 0..n - 1 {
        for (gp, g) in case.generators.iter().enumerate() {
            let (a, b) = (idx[t][gp], idx[t + 1][gp]);
            sys.add_row(&[(b, 1.0), (a, -1.0)], Sense::Le, g.ramp_up, RowTag::RampUp { gen: g.id, t })?;
            sys.add_row(&[(a, 1.0), (b, -1.0)], Sense::Le, g.ramp_down, RowTag::RampDown { gen: g.id, t })?;
        }
    }
    Ok(idx)
}

/// Adds angles, flows, balance, flow and angle rows for one period copy.
fn add_network_block(
    sys: &mut ConstraintSystem,
    case: &NetworkCase,
    t: usize,
    block: usize,
    gens: &[usize],
    mode: &dyn Fn(usize) -> LineMode,
) -> Result<()> {
    let mut theta = Vec::with_capacity(case.buses.len());
    for b in &case.buses {
        let j = sys.add_var(VarRef::Angle { bus: b.id, t, block }, b.angle_min, b.angle_max, false)?;
        theta.push(j);
    }
    let mut inject: Vec<Vec<(usize, f64)>> = vec![Vec::new(); case.buses.len()];
    for (gp, g) in case.generators.iter().enumerate() {
        let bp = case.bus_pos(g.bus).ok_or_else(|| EssrError::Invalid(format!("generator {} on unknown bus", g.id)))?;
        inject[bp].push((gens[gp], 1.0));
    }
    for (lp, line) in case.lines.iter().enumerate() {
        let m = mode(lp);
        if let LineMode::Dropped = m {
            continue;
        }
        let (fp, tp) = match (case.bus_pos(line.from_bus), case.bus_pos(line.to_bus)) {
            (Some(f), Some(t)) => (f, t),
            _ => return Err(EssrError::UnknownLine(line.id)),
        };
        let p = sys.add_var(VarRef::LineFlow { line: line.id, t, block }, -line.capacity, line.capacity, false)?;
        inject[tp].push((p, 1.0));
        inject[fp].push((p, -1.0));
        let (tf, tt, bsus, id) = (theta[fp], theta[tp], line.susceptance, line.id);
        match m {
            LineMode::Hard => {
                sys.add_row(&[(tf, bsus), (tt, -bsus), (p, -1.0)], Sense::Eq, 0.0, RowTag::FlowAngle { line: id, t, block })?;
                sys.add_row(&[(p, 1.0)], Sense::Le, line.capacity, RowTag::FlowMax { line: id, t, block })?;
                sys.add_row(&[(p, -1.0)], Sense::Le, line.capacity, RowTag::FlowMin { line: id, t, block })?;
            }
            LineMode::Switchable { u, big_m } => {
                sys.add_row(
                    &[(tf, -bsus), (tt, bsus), (p, 1.0), (u, big_m)],
                    Sense::Le,
                    big_m,
                    RowTag::SwitchAngleUpper { line: id, t, block },
                )?;
                sys.add_row(
                    &[(tf, bsus), (tt, -bsus), (p, -1.0), (u, big_m)],
                    Sense::Le,
                    big_m,
                    RowTag::SwitchAngleLower { line: id, t, block },
                )?;
                sys.add_row(&[(p, 1.0), (u, -line.capacity)], Sense::Le, 0.0, RowTag::SwitchFlowMax { line: id, t, block })?;
                sys.add_row(&[(p, -1.0), (u, -line.capacity)], Sense::Le, 0.0, RowTag::SwitchFlowMin { line: id, t, block })?;
            }
            LineMode::Dropped => unreachable!(),
        }
    }
    for (bp, b) in case.buses.iter().enumerate() {
        sys.add_row(&inject[bp], Sense::Eq, b.load_by_period[t], RowTag::Balance { bus: b.id, t, block })?;
    }
    for (bp, b) in case.buses.iter().enumerate() {
        sys.add_row(&[(theta[bp], 1.0)], Sense::Le, b.angle_max, RowTag::AngleMax { bus: b.id, t, block })?;
        sys.add_row(&[(theta[bp], -1.0)], Sense::Le, -b.angle_min, RowTag::AngleMin { bus: b.id, t, block })?;
    }
    let r = case.reference_pos().ok_or_else(|| EssrError::Invalid("case has no reference bus".into()))?;
    sys.add_row(&[(theta[r], 1.0)], Sense::Eq, 0.0, RowTag::Reference { t, block })?;
    Ok(())
}

fn check_scenario(case: &NetworkCase, scenario: &FailureScenario) -> Result<()> {
    if scenario.failed_by_period.len() + 1 != case.num_periods() {
        return Err(EssrError::Invalid(format!(
            "scenario covers {} periods after t0, case horizon has {}",
            scenario.failed_by_period.len(),
            case.num_periods() - 1
        )));
    }
    for l in scenario.failed_by_period.iter().flatten() {
        if case.line_pos(*l).is_none() {
            return Err(EssrError::UnknownLine(*l));
        }
    }
    Ok(())
}

/// Multi-period polytope for one failure scenario. Failed lines have no
/// flow variable in the periods where they are out.
pub fn build_essr(case: &NetworkCase, scenario: &FailureScenario) -> Result<ConstraintSystem> {
    check_horizon(case)?;
    check_scenario(case, scenario)?;
    let mut sys = ConstraintSystem::new();
    let gens = add_generators(&mut sys, case)?;
    for t in 0..case.num_periods() {
        let mode = |lp: usize| {
            if scenario.is_failed(case.lines[lp].id, t) {
                LineMode::Dropped
            } else {
                LineMode::Hard
            }
        };
        add_network_block(&mut sys, case, t, 0, &gens[t], &mode)?;
    }
    Ok(sys)
}

/// An exposed `(line, period)` position carrying a line-state binary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Slot {
    pub line: usize,
    pub t: usize,
    pub var: usize,
}

/// Every `(line, t)` with `t` at or after the line's first exposure, in
/// ascending line id, then period.
pub fn slot_positions(exposure: &[ExposedLine], horizon: usize) -> Vec<(usize, usize)> {
    let mut v: Vec<(usize, usize)> = exposure
        .iter()
        .flat_map(|e| (e.first_period.max(1)..horizon).map(move |t| (e.line, t)))
        .collect();
    v.sort_unstable();
    v
}

/// Line-state pattern of a scenario over the slots (0 failed, 1 in service).
pub fn slot_pattern(scenario: &FailureScenario, slots: &[Slot]) -> Vec<u8> {
    slots.iter().map(|s| u8::from(!scenario.is_failed(s.line, s.t))).collect()
}

/// A single network copy whose exposed lines are switched by binaries.
#[derive(Debug, Clone)]
pub struct SwitchableSystem {
    pub system: ConstraintSystem,
    pub slots: Vec<Slot>,
}

impl SwitchableSystem {
    /// Fixes the line-state binaries to a scenario's pattern.
    pub fn pin_scenario(&mut self, scenario: &FailureScenario) {
        for s in &self.slots {
            let v = if scenario.is_failed(s.line, s.t) { 0.0 } else { 1.0 };
            self.system.vars[s.var].lower = v;
            self.system.vars[s.var].upper = v;
        }
    }
}

/// Network with one binary `u` per exposed slot and big-M switched rows;
/// unexposed `(line, period)` pairs keep hard flow-angle rows.
pub fn build_switchable(case: &NetworkCase, exposure: &[ExposedLine], policy: BigMPolicy) -> Result<SwitchableSystem> {
    check_horizon(case)?;
    let mut sys = ConstraintSystem::new();
    let gens = add_generators(&mut sys, case)?;
    let mut slots = Vec::new();
    for (line, t) in slot_positions(exposure, case.num_periods()) {
        if case.line_pos(line).is_none() {
            return Err(EssrError::UnknownLine(line));
        }
        let var = sys.add_var(VarRef::LineState { line, t, block: 0 }, 0.0, 1.0, true)?;
        slots.push(Slot { line, t, var });
    }
    let mut big_m = Vec::with_capacity(case.lines.len());
    for l in &case.lines {
        big_m.push(policy_m(policy, l, case)?);
    }
    for t in 0..case.num_periods() {
        let mode = |lp: usize| match slots.iter().find(|s| s.line == case.lines[lp].id && s.t == t) {
            Some(s) => LineMode::Switchable { u: s.var, big_m: big_m[lp] },
            None => LineMode::Hard,
        };
        add_network_block(&mut sys, case, t, 0, &gens[t], &mode)?;
    }
    Ok(SwitchableSystem { system: sys, slots })
}

/// Stacked system with one network copy per scenario (block `k`) and a
/// single shared set of generator variables. Exposed slots in each block
/// get their own line-state binary `u_{l,t,k}`.
#[derive(Debug, Clone)]
pub struct MultiTopology {
    pub system: ConstraintSystem,
    /// `slots[k]` are the line-state binaries of block `k`.
    pub slots: Vec<Vec<Slot>>,
}

impl MultiTopology {
    /// Pins every block's line states to its own scenario.
    pub fn pin_scenarios(&mut self, set: &ScenarioSet) {
        for (k, s) in set.scenarios.iter().enumerate() {
            for slot in &self.slots[k] {
                let v = if s.is_failed(slot.line, slot.t) { 0.0 } else { 1.0 };
                self.system.vars[slot.var].lower = v;
                self.system.vars[slot.var].upper = v;
            }
        }
    }
}

pub fn build_multi_topology(case: &NetworkCase, set: &ScenarioSet, policy: BigMPolicy) -> Result<MultiTopology> {
    check_horizon(case)?;
    if set.is_empty() {
        return Err(EssrError::Invalid("scenario set is empty".into()));
    }
    let mut sys = ConstraintSystem::new();
    let gens = add_generators(&mut sys, case)?;
    let positions = slot_positions(&set.exposure, case.num_periods());
    let mut big_m = Vec::with_capacity(case.lines.len());
    for l in &case.lines {
        big_m.push(policy_m(policy, l, case)?);
    }
    let mut all_slots = Vec::with_capacity(set.len());
    for (k, s) in set.scenarios.iter().enumerate() {
        check_scenario(case, s)?;
        let mut slots = Vec::new();
        for &(line, t) in &positions {
            if case.line_pos(line).is_none() {
                return Err(EssrError::UnknownLine(line));
            }
            let var = sys.add_var(VarRef::LineState { line, t, block: k }, 0.0, 1.0, true)?;
            slots.push(Slot { line, t, var });
        }
        for t in 0..case.num_periods() {
            let mode = |lp: usize| match slots.iter().find(|s| s.line == case.lines[lp].id && s.t == t) {
                Some(s) => LineMode::Switchable { u: s.var, big_m: big_m[lp] },
                None => LineMode::Hard,
            };
            add_network_block(&mut sys, case, t, k, &gens[t], &mode)?;
        }
        all_slots.push(slots);
    }
    Ok(MultiTopology { system: sys, slots: all_slots })
}

/// Shared-trajectory stack with failed lines dropped. Blocks with the same
/// `(period, failed set)` have identical rows, so they are built once and
/// their slack weight is the number of scenarios sharing them; slack
/// objectives therefore equal those of the full per-scenario stack.
pub fn build_shared_stack(case: &NetworkCase, set: &ScenarioSet) -> Result<ConstraintSystem> {
    check_horizon(case)?;
    if set.is_empty() {
        return Err(EssrError::Invalid("scenario set is empty".into()));
    }
    let mut blocks: BTreeMap<(usize, Vec<usize>), usize> = BTreeMap::new();
    for s in &set.scenarios {
        check_scenario(case, s)?;
        let out = s.out_of_service();
        for t in 0..case.num_periods() {
            let failed = if t == 0 { Vec::new() } else { out[t - 1].clone() };
            *blocks.entry((t, failed)).or_insert(0) += 1;
        }
    }
    let mut sys = ConstraintSystem::new();
    let gens = add_generators(&mut sys, case)?;
    for (block, ((t, failed), mult)) in blocks.into_iter().enumerate() {
        let first_row = sys.rows.len();
        let mode = |lp: usize| {
            if failed.binary_search(&case.lines[lp].id).is_ok() {
                LineMode::Dropped
            } else {
                LineMode::Hard
            }
        };
        add_network_block(&mut sys, case, t, block, &gens[t], &mode)?;
        for r in &mut sys.rows[first_row..] {
            r.weight = mult as f64;
        }
    }
    Ok(sys)
}

/// Chain output: the selection variable and the chain's rows.
#[derive(Debug, Clone, PartialEq)]
pub struct McCormickChain {
    pub z: usize,
    pub aux: Vec<usize>,
    pub rows: std::ops::Range<usize>,
}

/// Literal `v = u` (pattern 1) or `v = 1 − u` (pattern 0) as `(coef, const)`.
fn literal(pattern: u8) -> (f64, f64) {
    if pattern == 1 {
        (1.0, 0.0)
    } else {
        (-1.0, 1.0)
    }
}

/// Recursive McCormick linearisation of `z_k = Π_i v_i`, where each literal
/// `v_i` is `u_i` or `1 − u_i` according to `pattern`. For binary `u` the
/// rows force `z_k = 1` exactly when `u` equals the pattern.
pub fn mccormick_chain(sys: &mut ConstraintSystem, u: &[usize], pattern: &[u8], k: usize) -> Result<McCormickChain> {
    if u.is_empty() {
        return Err(EssrError::EmptyChain);
    }
    if u.len() != pattern.len() || pattern.iter().any(|&p| p > 1) {
        return Err(EssrError::Invalid("pattern must be binary and match the chain length".into()));
    }
    let first_row = sys.rows.len();
    let tag = RowTag::McCormick { k };
    let s = u.len();
    if s == 1 {
        if pattern[0] == 1 {
            return Ok(McCormickChain { z: u[0], aux: Vec::new(), rows: first_row..first_row });
        }
        let z = sys.add_var(VarRef::ScenarioSelect { k }, 0.0, 1.0, true)?;
        sys.add_row(&[(z, 1.0), (u[0], 1.0)], Sense::Eq, 1.0, tag)?;
        return Ok(McCormickChain { z, aux: vec![z], rows: first_row..sys.rows.len() });
    }
    let mut aux = Vec::with_capacity(s - 1);
    for i in 2..=s {
        let var = if i == s { VarRef::ScenarioSelect { k } } else { VarRef::McCormickAux { k, i } };
        aux.push(sys.add_var(var, 0.0, 1.0, true)?);
    }
    let (a1, c1) = literal(pattern[0]);
    let (a2, c2) = literal(pattern[1]);
    let z2 = aux[0];
    // ζ2 ≥ v1 + v2 − 1
    sys.add_row(&[(u[0], a1), (u[1], a2), (z2, -1.0)], Sense::Le, 1.0 - c1 - c2, tag)?;
    // ζ2 ≤ v1, ζ2 ≤ v2
    sys.add_row(&[(z2, 1.0), (u[0], -a1)], Sense::Le, c1, tag)?;
    sys.add_row(&[(z2, 1.0), (u[1], -a2)], Sense::Le, c2, tag)?;
    for i in 3..=s {
        let (a, c) = literal(pattern[i - 1]);
        let (prev, cur) = (aux[i - 3], aux[i - 2]);
        // ζi ≥ vi + ζ(i−1) − 1
        sys.add_row(&[(u[i - 1], a), (prev, 1.0), (cur, -1.0)], Sense::Le, 1.0 - c, tag)?;
        // ζi ≤ vi, ζi ≤ ζ(i−1)
        sys.add_row(&[(cur, 1.0), (u[i - 1], -a)], Sense::Le, c, tag)?;
        sys.add_row(&[(cur, 1.0), (prev, -1.0)], Sense::Le, 0.0, tag)?;
    }
    Ok(McCormickChain { z: *aux.last().expect("chain has aux"), aux, rows: first_row..sys.rows.len() })
}

/// `Σ_k z_k = 1`.
pub fn build_selection(sys: &mut ConstraintSystem, z: &[usize]) -> Result<usize> {
    if z.is_empty() {
        return Err(EssrError::Invalid("selection needs at least one scenario".into()));
    }
    let coeffs: Vec<(usize, f64)> = z.iter().map(|&j| (j, 1.0)).collect();
    sys.add_row(&coeffs, Sense::Eq, 1.0, RowTag::Selection)
}

/// Which side of a source row an expanded `≤` row represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    /// Source row was already `≤`.
    Le,
    /// `a·x ≤ b` half of an equality.
    Upper,
    /// `−a·x ≤ −b` half of an equality.
    Lower,
}

impl Side {
    pub fn sign(self) -> f64 {
        if self == Side::Lower {
            -1.0
        } else {
            1.0
        }
    }
}

/// One relaxed row `sign·(a·x) + s⁺ − s⁻ ≤ sign·b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlackRow {
    pub source: usize,
    pub side: Side,
    pub weight: f64,
}

/// A system whose network rows carry a slack pair each; the objective is
/// the weighted total slack.
#[derive(Debug, Clone)]
pub struct SlackSystem {
    pub base: ConstraintSystem,
    pub rows: Vec<SlackRow>,
    /// Source rows kept hard (topology selection rows).
    pub hard: Vec<usize>,
}

impl SlackSystem {
    pub fn num_slacks(&self) -> usize {
        2 * self.rows.len()
    }

    /// Expanded coefficients and rhs of slack row `i`.
    pub fn expanded(&self, i: usize) -> (impl Iterator<Item = (usize, f64)> + '_, f64) {
        let r = self.rows[i];
        let src = &self.base.rows[r.source];
        let sg = r.side.sign();
        (src.coeffs.iter().map(move |&(j, a)| (j, sg * a)), sg * src.rhs)
    }

    /// Whether slack row `i` is the supply-short side of a balance row.
    pub fn is_shed_row(&self, i: usize) -> bool {
        let r = self.rows[i];
        r.side == Side::Lower && matches!(self.base.rows[r.source].tag, RowTag::Balance { .. })
    }
}

/// Relaxes every network row; equalities are split into two `≤` rows first.
pub fn augment_slacks(system: &ConstraintSystem) -> Result<SlackSystem> {
    if !system.objective.is_empty() {
        return Err(EssrError::Invalid("slack augmentation expects a pure feasibility system".into()));
    }
    let mut rows = Vec::new();
    let mut hard = Vec::new();
    for (i, r) in system.rows.iter().enumerate() {
        if !r.tag.is_network() {
            hard.push(i);
            continue;
        }
        match r.sense {
            Sense::Le => rows.push(SlackRow { source: i, side: Side::Le, weight: r.weight }),
            Sense::Eq => {
                rows.push(SlackRow { source: i, side: Side::Upper, weight: r.weight });
                rows.push(SlackRow { source: i, side: Side::Lower, weight: r.weight });
            }
        }
    }
    Ok(SlackSystem { base: system.clone(), rows, hard })
}

/// Column layout of an LP generated from a [`SlackSystem`].
#[derive(Debug, Clone)]
pub struct SlackLp {
    pub lp: LpProblem,
    /// LP column of each registry variable.
    pub var_col: Vec<usize>,
    pub plus_col: Vec<Option<usize>>,
    pub minus_col: Vec<usize>,
}

impl SlackLp {
    /// Sets the bounds of a registry variable's column (for pins that
    /// change between solves).
    pub fn set_var_bounds(&mut self, var: usize, lower: f64, upper: f64) {
        let c = self.var_col[var];
        self.lp.col_lower[c] = lower;
        self.lp.col_upper[c] = upper;
    }
}

/// Builds the slack LP. Continuous variables become free columns (their
/// bounds live on as rows), pinned variables become fixed columns, and any
/// unpinned binary is rejected. `with_plus` controls whether the `s⁺`
/// columns are generated (they are zero at every optimum).
pub fn slack_lp(slack: &SlackSystem, with_plus: bool) -> Result<SlackLp> {
    let base = &slack.base;
    let mut b = LpBuilder::new();
    let mut var_col = Vec::with_capacity(base.vars.len());
    for v in &base.vars {
        let c = if v.is_pinned() {
            b.add_named_col(v.var.name(), v.lower, v.upper, 0.0)
        } else if v.binary {
            return Err(EssrError::Invalid(format!("binary {} must be pinned in a slack LP", v.var.name())));
        } else {
            b.add_named_col(v.var.name(), f64::NEG_INFINITY, f64::INFINITY, 0.0)
        };
        var_col.push(c);
    }
    let mut plus_col = Vec::with_capacity(slack.rows.len());
    let mut minus_col = Vec::with_capacity(slack.rows.len());
    for (i, r) in slack.rows.iter().enumerate() {
        plus_col.push(with_plus.then(|| b.add_named_col(VarRef::SlackPlus { row: i }.name(), 0.0, f64::INFINITY, r.weight)));
        minus_col.push(b.add_named_col(VarRef::SlackMinus { row: i }.name(), 0.0, f64::INFINITY, r.weight));
    }
    for i in 0..slack.rows.len() {
        let (coeffs, rhs) = slack.expanded(i);
        let mut c: Vec<(usize, f64)> = coeffs.map(|(j, a)| (var_col[j], a)).collect();
        if let Some(p) = plus_col[i] {
            c.push((p, 1.0));
        }
        c.push((minus_col[i], -1.0));
        b.add_row(&c, RowSense::Le, rhs);
    }
    for &h in &slack.hard {
        let r = &base.rows[h];
        let c: Vec<(usize, f64)> = r.coeffs.iter().map(|&(j, a)| (var_col[j], a)).collect();
        let sense = if r.sense == Sense::Eq { RowSense::Eq } else { RowSense::Le };
        b.add_row(&c, sense, r.rhs);
    }
    Ok(SlackLp { lp: b.build(), var_col, plus_col, minus_col })
}

/// Compact feasibility LP: single-variable rows folded into column bounds,
/// equalities kept. Feasible exactly when the system is.
#[derive(Debug, Clone)]
pub struct FeasibilityLp {
    pub lp: LpProblem,
    /// Per registry variable: its column and the bound interval implied by
    /// single-variable rows (pins are intersected at solve time).
    pub row_bounds: Vec<(f64, f64)>,
}

impl FeasibilityLp {
    pub fn new(system: &ConstraintSystem) -> Self {
        let n = system.vars.len();
        let mut row_bounds = vec![(f64::NEG_INFINITY, f64::INFINITY); n];
        let mut b = LpBuilder::new();
        for v in &system.vars {
            b.add_col(v.lower, v.upper, 0.0);
        }
        for r in &system.rows {
            if r.coeffs.len() == 1 && r.coeffs[0].1 != 0.0 {
                let (j, a) = r.coeffs[0];
                let v = r.rhs / a;
                let rb = &mut row_bounds[j];
                match (r.sense, a > 0.0) {
                    (Sense::Eq, _) => {
                        rb.0 = rb.0.max(v);
                        rb.1 = rb.1.min(v);
                    }
                    (Sense::Le, true) => rb.1 = rb.1.min(v),
                    (Sense::Le, false) => rb.0 = rb.0.max(v),
                }
                continue;
            }
            let sense = if r.sense == Sense::Eq { RowSense::Eq } else { RowSense::Le };
            b.add_row(&r.coeffs, sense, r.rhs);
        }
        let mut lp = b.build();
        for (j, v) in system.vars.iter().enumerate() {
            lp.col_lower[j] = v.lower.max(row_bounds[j].0);
            lp.col_upper[j] = v.upper.min(row_bounds[j].1);
        }
        Self { lp, row_bounds }
    }

    /// Re-pins registry variable `j` to `value` (intersected with row bounds).
    pub fn pin(&mut self, j: usize, value: f64) {
        self.lp.col_lower[j] = value.max(self.row_bounds[j].0);
        self.lp.col_upper[j] = value.min(self.row_bounds[j].1);
    }

    /// `Some(x)` with a feasible point, `None` when infeasible.
    pub fn solve(&self, opts: &LpOptions) -> Result<Option<Vec<f64>>> {
        if (0..self.lp.num_cols).any(|j| self.lp.col_lower[j] > self.lp.col_upper[j] + opts.feasibility_tol) {
            return Ok(None);
        }
        let mut lp;
        let p = if (0..self.lp.num_cols).any(|j| self.lp.col_lower[j] > self.lp.col_upper[j]) {
            lp = self.lp.clone();
            for j in 0..lp.num_cols {
                if lp.col_lower[j] > lp.col_upper[j] {
                    let m = 0.5 * (lp.col_lower[j] + lp.col_upper[j]);
                    lp.col_lower[j] = m;
                    lp.col_upper[j] = m;
                }
            }
            &lp
        } else {
            &self.lp
        };
        let s = solve_lp(p, opts);
        match s.status {
            LpStatus::Optimal => Ok(Some(s.x)),
            LpStatus::Infeasible => Ok(None),
            other => Err(EssrError::Solver(format!("feasibility LP ended with status {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BusShed {
    pub bus: usize,
    pub t: usize,
    pub shed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowViolation {
    pub tag: RowTag,
    pub side: Side,
    pub plus: f64,
    pub minus: f64,
}

/// Result of the slack LP: value, a minimising point and attribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityCertificate {
    /// Optimal weighted total slack `f`.
    pub value: f64,
    /// Point over the registry variables.
    pub x: Vec<f64>,
    pub plus: Vec<f64>,
    pub minus: Vec<f64>,
    /// Supply shortfall on balance rows (`s⁻` of their lower halves).
    pub shed_by_bus: Vec<BusShed>,
    /// Rows with nonzero slack.
    pub violations: Vec<RowViolation>,
    /// True when the plain feasibility LP already certified `f = 0`.
    pub direct: bool,
}

impl FeasibilityCertificate {
    pub fn total_shed(&self) -> f64 {
        self.shed_by_bus.iter().map(|s| s.shed).sum()
    }
}

/// Tolerance below which slack values are reported as zero.
pub const SLACK_REPORT_TOL: f64 = 1e-9;

fn lp_failure(what: &str, status: LpStatus) -> EssrError {
    EssrError::Solver(format!("{what} ended with status {status:?}"))
}

/// Minimises total slack. A plain feasibility LP runs first; the slack LP
/// only runs when that one is infeasible. With `attribute`, a second LP
/// keeps the total at its optimum and moves slack onto balance rows where
/// possible, so the result reads as load shed.
pub fn feasibility_value(slack: &SlackSystem, opts: &LpOptions, attribute: bool) -> Result<FeasibilityCertificate> {
    let n = slack.base.vars.len();
    let m = slack.rows.len();
    if let Some(x) = FeasibilityLp::new(&slack.base).solve(opts)? {
        return Ok(FeasibilityCertificate {
            value: 0.0,
            x,
            plus: vec![0.0; m],
            minus: vec![0.0; m],
            shed_by_bus: Vec::new(),
            violations: Vec::new(),
            direct: true,
        });
    }
    let mut slp = slack_lp(slack, true)?;
    let s = solve_lp(&slp.lp, opts);
    if s.status != LpStatus::Optimal {
        return Err(lp_failure("slack LP", s.status));
    }
    let value = s.objective.max(0.0);
    let mut sol = s.x;
    if attribute && value > SLACK_REPORT_TOL {
        // stage 2: same total, least slack off the balance rows
        let total: Vec<(usize, f64)> = (0..m)
            .flat_map(|i| {
                let w = slack.rows[i].weight;
                slp.plus_col[i].map(|p| (p, w)).into_iter().chain(std::iter::once((slp.minus_col[i], w)))
            })
            .collect();
        let mut lp2 = slp.lp.clone();
        lp2.objective.iter_mut().for_each(|c| *c = 0.0);
        for i in 0..m {
            let on_balance = matches!(slack.base.rows[slack.rows[i].source].tag, RowTag::Balance { .. });
            if !on_balance {
                lp2.objective[slp.minus_col[i]] = 1.0;
            }
            if let Some(p) = slp.plus_col[i] {
                lp2.objective[p] = 1.0;
            }
        }
        let mut b = LpBuilder::from_problem(lp2);
        b.add_row(&total, RowSense::Le, value + 1e-9 * (1.0 + value));
        let s2 = solve_lp(&b.build(), opts);
        if s2.status == LpStatus::Optimal {
            sol = s2.x;
        }
    }
    slp.lp.objective.clear();
    let x: Vec<f64> = (0..n).map(|j| sol[slp.var_col[j]]).collect();
    let plus: Vec<f64> = slp.plus_col.iter().map(|c| c.map_or(0.0, |c| sol[c])).collect();
    let minus: Vec<f64> = slp.minus_col.iter().map(|&c| sol[c]).collect();
    Ok(certificate(slack, value, x, plus, minus))
}

fn certificate(slack: &SlackSystem, value: f64, x: Vec<f64>, plus: Vec<f64>, minus: Vec<f64>) -> FeasibilityCertificate {
    let mut shed_by_bus = Vec::new();
    let mut violations = Vec::new();
    for (i, r) in slack.rows.iter().enumerate() {
        let tag = slack.base.rows[r.source].tag;
        if slack.is_shed_row(i) && minus[i] > SLACK_REPORT_TOL {
            if let RowTag::Balance { bus, t, .. } = tag {
                shed_by_bus.push(BusShed { bus, t, shed: minus[i] });
            }
        }
        if plus[i] > SLACK_REPORT_TOL || minus[i] > SLACK_REPORT_TOL {
            violations.push(RowViolation { tag, side: r.side, plus: plus[i], minus: minus[i] });
        }
    }
    FeasibilityCertificate { value, x, plus, minus, shed_by_bus, violations, direct: false }
}
