//! Worst-case load shed over a scenario set: the KKT single-level MILP and
//! the per-scenario enumeration oracle it is checked against.
//!
//! The inner problem, for a fixed line-state vector `U`, is the slack LP
//!
//! ```text
//! min Σ w_i s⁻_i   s.t.  a_i·Y + c_i·U + s⁺_i − s⁻_i ≤ b_i,  s⁺, s⁻ ≥ 0
//! ```
//!
//! Its KKT system is `Aᵀα = 0`, `β = w + α`, `γ = w − α`, so `α ∈ [0, w]`
//! and `β ≥ w > 0` forces `s⁺ = 0`. Complementarity between `α` and the row
//! slack and between `γ` and `s⁻` is linearised with indicator binaries. A
//! strong-duality row `Σ w s⁻ = −Σ α_i (b_i − c_i·U)` is added as well; the
//! products `α_i·u_l` it needs are linearised exactly because `u` is binary.
//! With it, any point of the single-level system whose `U` is integral
//! already has the inner optimum, so the search only has to branch on the
//! topology binaries; the indicator binaries are completed by a heuristic.

use std::time::Instant;

use essr_solver::{solve_lp, solve_milp_with, LpBuilder, LpOptions, MilpHooks, MilpOptions, MilpProblem, MilpStatus, RowSense};
use serde::{Deserialize, Serialize};

use crate::error::{EssrError, Result};
use crate::grid::NetworkCase;
use crate::polytope::{
    augment_slacks, build_selection, build_switchable, mccormick_chain, slack_lp, slot_pattern, BigMPolicy, BusShed,
    ConstraintSystem, FeasibilityLp, PairKind, RowTag, Sense, SlackLp, SlackSystem, Slot, VarRef,
};
use crate::scenario::ScenarioSet;

/// Granularity to which reconstructed multipliers are rounded, so that
/// `β = w + α` and `γ = w − α` hold exactly in floating point.
pub const DUAL_GRID: f64 = 1.0 / 4_294_967_296.0;

/// One expanded inner row with pinned variables folded into the rhs.
#[derive(Debug, Clone, PartialEq)]
pub struct InnerRow {
    /// Coefficients on inner primal variables (registry indices).
    pub y: Vec<(usize, f64)>,
    /// Coefficients on outer binaries (registry indices).
    pub u: Vec<(usize, f64)>,
    pub rhs: f64,
    pub weight: f64,
    pub tag: RowTag,
}

/// How `β` and `γ` are recovered from `α`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DualSubstitution {
    /// `β_i = w_i + α_i`
    pub beta_is_weight_plus_alpha: bool,
    /// `γ_i = w_i − α_i`
    pub gamma_is_weight_minus_alpha: bool,
}

/// Stationarity, feasibility and bound data of the inner slack LP.
#[derive(Debug, Clone)]
pub struct KktSystem {
    pub slack: SlackSystem,
    /// Inner primal variables (registry indices).
    pub y: Vec<usize>,
    /// Position in `y` of each registry variable (`usize::MAX` if not inner).
    pub y_pos: Vec<usize>,
    /// Outer binaries appearing in inner rows (registry indices).
    pub u: Vec<usize>,
    pub rows: Vec<InnerRow>,
    /// `Aᵀα = 0`: for each `y[j]`, `(row, coefficient)` pairs.
    pub stationarity: Vec<Vec<(usize, f64)>>,
    /// Upper bound on the inner optimum for every `U`.
    pub f_max: f64,
    /// Box containing every inner optimum, per `y[j]`.
    pub y_box: Vec<(f64, f64)>,
    pub substitution: DualSubstitution,
}

/// Derives the KKT data of a slack system. Rows kept hard in `slack` are
/// outer (topology) rows; unpinned binaries in relaxed rows are outer
/// variables, unpinned continuous variables are inner.
pub fn derive_kkt(slack: &SlackSystem) -> Result<KktSystem> {
    let base = &slack.base;
    let n = base.vars.len();
    let mut y_pos = vec![usize::MAX; n];
    let mut y = Vec::new();
    let mut u = Vec::new();
    let mut is_u = vec![false; n];
    for i in 0..slack.rows.len() {
        if !(slack.rows[i].weight > 0.0 && slack.rows[i].weight.is_finite()) {
            return Err(EssrError::Invalid("inner objective must be a positive total slack".into()));
        }
        for &(j, _) in &base.rows[slack.rows[i].source].coeffs {
            let v = &base.vars[j];
            if v.is_pinned() {
                continue;
            }
            if v.binary {
                if !is_u[j] {
                    is_u[j] = true;
                    u.push(j);
                }
            } else if y_pos[j] == usize::MAX {
                y_pos[j] = y.len();
                y.push(j);
            }
        }
    }
    let mut rows = Vec::with_capacity(slack.rows.len());
    let mut stationarity = vec![Vec::new(); y.len()];
    for i in 0..slack.rows.len() {
        let (coeffs, mut rhs) = slack.expanded(i);
        let mut ry = Vec::new();
        let mut ru = Vec::new();
        for (j, a) in coeffs {
            let v = &base.vars[j];
            if v.is_pinned() {
                rhs -= a * v.lower;
            } else if is_u[j] {
                ru.push((j, a));
            } else {
                stationarity[y_pos[j]].push((i, a));
                ry.push((j, a));
            }
        }
        let src = slack.rows[i];
        rows.push(InnerRow { y: ry, u: ru, rhs, weight: src.weight, tag: base.rows[src.source].tag });
    }
    // Y0: origin clamped into the registry box
    let y0: Vec<f64> = y.iter().map(|&j| 0.0f64.clamp(base.vars[j].lower, base.vars[j].upper)).collect();
    let mut f_max = 0.0;
    for r in &rows {
        let ay: f64 = r.y.iter().map(|&(j, a)| a * y0[y_pos[j]]).sum();
        let cu: f64 = r.u.iter().map(|&(_, c)| c.max(0.0)).sum();
        f_max += r.weight * (ay + cu - r.rhs).max(0.0);
    }
    let min_w = rows.iter().map(|r| r.weight).fold(f64::INFINITY, f64::min).min(1.0);
    let spread = f_max / min_w;
    let y_box = y.iter().map(|&j| (base.vars[j].lower - spread, base.vars[j].upper + spread)).collect();
    Ok(KktSystem {
        slack: slack.clone(),
        y,
        y_pos,
        u,
        rows,
        stationarity,
        f_max,
        y_box,
        substitution: DualSubstitution { beta_is_weight_plus_alpha: true, gamma_is_weight_minus_alpha: true },
    })
}

/// A dual/primal pair whose product must vanish.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplementarityPair {
    pub row: usize,
    pub kind: PairKind,
    /// Bound on the dual side (`α` or `γ`).
    pub dual_bound: f64,
    /// Bound on the primal side (row slack or `s⁻`).
    pub primal_bound: f64,
}

impl KktSystem {
    /// Largest value of `b_i − c_i·U − a_i·Y` over the `Y` box and `U ∈ [0,1]`.
    fn max_row_gap(&self, i: usize) -> f64 {
        let r = &self.rows[i];
        let mut m = r.rhs;
        for &(j, a) in &r.y {
            let (lo, hi) = self.y_box[self.y_pos[j]];
            m += if a > 0.0 { -a * lo } else { -a * hi };
        }
        for &(_, c) in &r.u {
            m += (-c).max(0.0);
        }
        m
    }
}

/// Big-M pairs for `α ⟂ row slack` and `γ ⟂ s⁻` on every inner row. The
/// `β ⟂ s⁺` pairs need no binaries: `β ≥ w > 0` fixes `s⁺ = 0`.
pub fn linearize_complementarity(kkt: &KktSystem) -> Result<Vec<ComplementarityPair>> {
    let mut pairs = Vec::with_capacity(2 * kkt.rows.len());
    for (i, r) in kkt.rows.iter().enumerate() {
        let shed_bound = kkt.f_max / r.weight;
        let slack_bound = kkt.max_row_gap(i) + shed_bound;
        if !slack_bound.is_finite() || !shed_bound.is_finite() {
            return Err(EssrError::NonFiniteBound(format!("slack of inner row {i} ({})", r.tag.label())));
        }
        pairs.push(ComplementarityPair { row: i, kind: PairKind::RowSlack, dual_bound: r.weight, primal_bound: slack_bound.max(0.0) });
        pairs.push(ComplementarityPair { row: i, kind: PairKind::ShedSlack, dual_bound: r.weight, primal_bound: shed_bound });
    }
    Ok(pairs)
}

/// The assembled single-level problem with its column roles.
#[derive(Debug, Clone)]
pub struct SingleLevelMilp {
    pub system: ConstraintSystem,
    pub problem: MilpProblem,
    pub kkt: KktSystem,
    pub pairs: Vec<ComplementarityPair>,
    /// Branching priority per column: line states, then selection chain,
    /// then indicators.
    pub priority: Vec<u32>,
    pub alpha: Vec<usize>,
    pub plus: Vec<usize>,
    pub minus: Vec<usize>,
    /// Indicator of each pair, aligned with `pairs`.
    pub indicator: Vec<usize>,
    /// Selection variable per scenario.
    pub scenario_z: Vec<usize>,
}

/// Builds the single-level MILP: outer rows of the slack system, inner
/// primal rows, stationarity, linearised complementarity and the
/// strong-duality row; objective `min −Σ w s⁻`.
pub fn assemble_single_level(kkt: &KktSystem, pairs: &[ComplementarityPair], scenario_z: &[usize]) -> Result<SingleLevelMilp> {
    let base = &kkt.slack.base;
    if scenario_z.iter().any(|&z| z >= base.vars.len()) {
        return Err(EssrError::Invalid("selection variable outside the registry".into()));
    }
    let mut sys = ConstraintSystem::new();
    for v in &base.vars {
        sys.add_var(v.var, v.lower, v.upper, v.binary)?;
    }
    for (k, &j) in kkt.y.iter().enumerate() {
        sys.vars[j].lower = kkt.y_box[k].0;
        sys.vars[j].upper = kkt.y_box[k].1;
    }
    for &h in &kkt.slack.hard {
        let r = &base.rows[h];
        sys.add_row(&r.coeffs, r.sense, r.rhs, r.tag)?;
    }
    let m = kkt.rows.len();
    let mut plus = Vec::with_capacity(m);
    let mut minus = Vec::with_capacity(m);
    let mut alpha = Vec::with_capacity(m);
    for (i, r) in kkt.rows.iter().enumerate() {
        plus.push(sys.add_var(VarRef::SlackPlus { row: i }, 0.0, 0.0, false)?);
        minus.push(sys.add_var(VarRef::SlackMinus { row: i }, 0.0, kkt.f_max / r.weight, false)?);
        alpha.push(sys.add_var(VarRef::Dual { row: i }, 0.0, r.weight, false)?);
    }
    for (i, r) in kkt.rows.iter().enumerate() {
        let mut c: Vec<(usize, f64)> = r.y.iter().chain(&r.u).copied().collect();
        c.push((plus[i], 1.0));
        c.push((minus[i], -1.0));
        sys.add_row(&c, Sense::Le, r.rhs, RowTag::PrimalSlack { row: i })?;
    }
    for (k, col) in kkt.stationarity.iter().enumerate() {
        let c: Vec<(usize, f64)> = col.iter().map(|&(i, a)| (alpha[i], a)).collect();
        sys.add_row(&c, Sense::Eq, 0.0, RowTag::Stationarity { var: kkt.y[k] })?;
    }
    let mut indicator = Vec::with_capacity(pairs.len());
    for p in pairs {
        let r = &kkt.rows[p.row];
        let ind = sys.add_var(VarRef::Indicator { row: p.row, pair: p.kind }, 0.0, 1.0, true)?;
        indicator.push(ind);
        let (a, s, w, mb) = (alpha[p.row], minus[p.row], p.dual_bound, p.primal_bound);
        match p.kind {
            PairKind::RowSlack => {
                // α ≤ w·ind ;  b − a·Y − c·U − s⁺ + s⁻ ≤ M(1 − ind)
                sys.add_row(&[(a, 1.0), (ind, -w)], Sense::Le, 0.0, RowTag::DualIndicator { row: p.row })?;
                let mut c: Vec<(usize, f64)> = r.y.iter().chain(&r.u).map(|&(j, v)| (j, -v)).collect();
                c.push((plus[p.row], -1.0));
                c.push((s, 1.0));
                c.push((ind, mb));
                sys.add_row(&c, Sense::Le, mb - r.rhs, RowTag::SlackIndicator { row: p.row })?;
            }
            PairKind::ShedSlack => {
                // γ = w − α ≤ w·ind ;  s⁻ ≤ M(1 − ind)
                sys.add_row(&[(a, -1.0), (ind, -w)], Sense::Le, -w, RowTag::ShedDualIndicator { row: p.row })?;
                sys.add_row(&[(s, 1.0), (ind, mb)], Sense::Le, mb, RowTag::ShedIndicator { row: p.row })?;
            }
        }
    }
    // strong duality with exact products p = α·u
    let mut sd: Vec<(usize, f64)> = Vec::new();
    for (i, r) in kkt.rows.iter().enumerate() {
        sd.push((minus[i], r.weight));
        sd.push((alpha[i], r.rhs));
        for &(uj, c) in &r.u {
            let p = sys.add_var(VarRef::DualProduct { row: i, var: uj }, 0.0, r.weight, false)?;
            let w = r.weight;
            let tag = RowTag::ProductEnvelope { row: i, var: uj };
            sys.add_row(&[(p, 1.0), (alpha[i], -1.0)], Sense::Le, 0.0, tag)?;
            sys.add_row(&[(p, 1.0), (uj, -w)], Sense::Le, 0.0, tag)?;
            sys.add_row(&[(alpha[i], 1.0), (uj, w), (p, -1.0)], Sense::Le, w, tag)?;
            sd.push((p, -c));
        }
    }
    sys.add_row(&sd, Sense::Eq, 0.0, RowTag::StrongDuality)?;
    sys.objective = kkt.rows.iter().enumerate().map(|(i, r)| (minus[i], -r.weight)).collect();

    let priority = sys
        .vars
        .iter()
        .map(|v| match v.var {
            VarRef::LineState { .. } => 3,
            VarRef::ScenarioSelect { .. } | VarRef::McCormickAux { .. } => 2,
            _ => u32::from(v.binary),
        })
        .collect();
    let (lp, integer) = sys.to_lp();
    Ok(SingleLevelMilp {
        problem: MilpProblem::new(lp, integer),
        system: sys,
        kkt: kkt.clone(),
        pairs: pairs.to_vec(),
        priority,
        alpha,
        plus,
        minus,
        indicator,
        scenario_z: scenario_z.to_vec(),
    })
}

/// Multipliers reconstructed from a single-level solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualValues {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
    pub weight: Vec<f64>,
}

impl DualValues {
    /// `α ∈ [0, w]`, `β − α = w` and `γ + α = w`, all exact.
    pub fn identities_hold(&self) -> bool {
        (0..self.alpha.len()).all(|i| {
            let (a, b, g, w) = (self.alpha[i], self.beta[i], self.gamma[i], self.weight[i]);
            (0.0..=w).contains(&a) && b - a == w && g + a == w
        })
    }
}

/// Rounds to [`DUAL_GRID`] and clamps into `[0, w]`.
pub fn snap_dual(a: f64, w: f64) -> f64 {
    ((a / DUAL_GRID).round() * DUAL_GRID).clamp(0.0, w)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorstCaseMethod {
    Milp,
    Enumeration,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    pub nodes: usize,
    pub lp_iterations: usize,
    pub lp_solves: usize,
    pub wall_seconds: f64,
}

/// Outcome of a worst-case search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorstCaseReport {
    pub method: WorstCaseMethod,
    /// Worst-case total slack `F` (load shed plus other violations).
    pub value: f64,
    /// False when a solver limit stopped the search; `best_bound` then
    /// bounds the true value from above.
    pub complete: bool,
    pub best_bound: f64,
    /// Index into the scenario set (0-based).
    pub selected_scenario: Option<usize>,
    pub shed_by_bus: Vec<BusShed>,
    pub binding_rows: Vec<RowTag>,
    /// Per-scenario values (enumeration only).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub per_scenario: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duals: Option<DualValues>,
    pub stats: SolveStats,
}

impl WorstCaseReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Builds the worst-case MILP for the recourse reading: one network copy
/// whose line states pick exactly one scenario of `set`, with generation
/// re-optimised after `t0` (pinned to `t0` when given).
pub fn build_worst_case_milp(
    case: &NetworkCase,
    set: &ScenarioSet,
    t0: Option<&[f64]>,
    policy: BigMPolicy,
) -> Result<SingleLevelMilp> {
    if set.is_empty() {
        return Err(EssrError::Invalid("scenario set is empty".into()));
    }
    let mut sw = build_switchable(case, &set.exposure, policy)?;
    if let Some(p) = t0 {
        sw.system.pin_dispatch(case, 0, p)?;
    }
    let u: Vec<usize> = sw.slots.iter().map(|s| s.var).collect();
    let mut z = Vec::with_capacity(set.len());
    if u.is_empty() {
        if set.len() != 1 {
            return Err(EssrError::Invalid("scenarios differ but no line is exposed".into()));
        }
        z.push(sw.system.add_var(VarRef::ScenarioSelect { k: 0 }, 1.0, 1.0, true)?);
    } else {
        for (k, s) in set.scenarios.iter().enumerate() {
            let pattern = slot_pattern(s, &sw.slots);
            z.push(mccormick_chain(&mut sw.system, &u, &pattern, k)?.z);
        }
    }
    build_selection(&mut sw.system, &z)?;
    let slack = augment_slacks(&sw.system)?;
    let kkt = derive_kkt(&slack)?;
    let pairs = linearize_complementarity(&kkt)?;
    assemble_single_level(&kkt, &pairs, &z)
}

/// Completes a relaxation point whose topology binaries are integral: the
/// inner LP is solved for that topology, indicators are read off its
/// primal/dual optimum, and the remaining continuous columns are
/// recovered from the single-level LP with every integer column fixed.
fn complete_indicators(milp: &SingleLevelMilp, x: &[f64]) -> Option<Vec<f64>> {
    let tol = 1e-6;
    if milp.kkt.u.iter().any(|&j| (x[j] - x[j].round()).abs() > tol) {
        return None;
    }
    let kkt = &milp.kkt;
    let lp_opts = LpOptions::default();

    // inner LP: min Σ w s⁻  s.t.  a·Y − s⁻ ≤ b − c·U,  Y free
    let mut b = LpBuilder::new();
    for _ in &kkt.y {
        b.add_col(f64::NEG_INFINITY, f64::INFINITY, 0.0);
    }
    let shed: Vec<usize> = kkt.rows.iter().map(|r| b.add_col(0.0, f64::INFINITY, r.weight)).collect();
    let mut rhs = Vec::with_capacity(kkt.rows.len());
    for (i, r) in kkt.rows.iter().enumerate() {
        let mut c: Vec<(usize, f64)> = r.y.iter().map(|&(j, a)| (kkt.y_pos[j], a)).collect();
        c.push((shed[i], -1.0));
        let cu: f64 = r.u.iter().map(|&(j, v)| v * x[j].round()).sum();
        rhs.push(r.rhs - cu);
        b.add_row(&c, RowSense::Le, r.rhs - cu);
    }
    let inner = solve_lp(&b.build(), &lp_opts);
    if !inner.is_optimal() {
        return None;
    }

    let mut lp = milp.problem.lp.clone();
    for (j, &int) in milp.problem.integer.iter().enumerate() {
        if int {
            let v = x[j].round();
            lp.col_lower[j] = v;
            lp.col_upper[j] = v;
        }
    }
    let active = 1e-7;
    for (p, &ind) in milp.pairs.iter().zip(&milp.indicator) {
        let i = p.row;
        let on = match p.kind {
            PairKind::RowSlack => inner.row_activity[i] >= rhs[i] - active,
            PairKind::ShedSlack => inner.x[shed[i]] <= active,
        };
        let v = f64::from(u8::from(on));
        lp.col_lower[ind] = v;
        lp.col_upper[ind] = v;
    }
    let sol = solve_lp(&lp, &lp_opts);
    sol.is_optimal().then_some(sol.x)
}

/// Solves the single-level MILP and reconstructs multipliers and shed.
pub fn solve_worst_case(milp: &SingleLevelMilp, opts: &MilpOptions) -> Result<WorstCaseReport> {
    let start = Instant::now();
    let heur = |x: &[f64]| complete_indicators(milp, x);
    let hooks = MilpHooks { priority: Some(&milp.priority), heuristic: Some(&heur), heuristic_tol: 1e-6 };
    let sol = solve_milp_with(&milp.problem, opts, &hooks)?;
    let stats = SolveStats {
        nodes: sol.nodes,
        lp_iterations: sol.lp_iterations,
        lp_solves: sol.nodes,
        wall_seconds: start.elapsed().as_secs_f64(),
    };
    match sol.status {
        MilpStatus::Optimal | MilpStatus::LimitReached if sol.has_incumbent => {}
        MilpStatus::LimitReached => {
            return Ok(WorstCaseReport {
                method: WorstCaseMethod::Milp,
                value: f64::NAN,
                complete: false,
                best_bound: -sol.best_bound,
                selected_scenario: None,
                shed_by_bus: Vec::new(),
                binding_rows: Vec::new(),
                per_scenario: Vec::new(),
                duals: None,
                stats,
            })
        }
        other => return Err(EssrError::Solver(format!("worst-case MILP ended with status {other:?}"))),
    }
    let x = &sol.x;
    let kkt = &milp.kkt;
    let weight: Vec<f64> = kkt.rows.iter().map(|r| r.weight).collect();
    let alpha: Vec<f64> = milp.alpha.iter().zip(&weight).map(|(&j, &w)| snap_dual(x[j], w)).collect();
    let beta = alpha.iter().zip(&weight).map(|(a, w)| w + a).collect();
    let gamma = alpha.iter().zip(&weight).map(|(a, w)| w - a).collect();
    let mut shed_by_bus = Vec::new();
    let mut binding_rows = Vec::new();
    for (i, r) in kkt.rows.iter().enumerate() {
        if kkt.slack.is_shed_row(i) && x[milp.minus[i]] > crate::polytope::SLACK_REPORT_TOL {
            if let RowTag::Balance { bus, t, .. } = r.tag {
                shed_by_bus.push(BusShed { bus, t, shed: x[milp.minus[i]] });
            }
        }
        if alpha[i] > 1e-9 && !binding_rows.contains(&r.tag) {
            binding_rows.push(r.tag);
        }
    }
    let selected = milp.scenario_z.iter().position(|&z| x[z] > 0.5);
    Ok(WorstCaseReport {
        method: WorstCaseMethod::Milp,
        value: (-sol.objective).max(0.0),
        complete: sol.status == MilpStatus::Optimal,
        best_bound: -sol.best_bound,
        selected_scenario: selected,
        shed_by_bus,
        binding_rows,
        per_scenario: Vec::new(),
        duals: Some(DualValues { alpha, beta, gamma, weight }),
        stats,
    })
}

/// Per-scenario LPs of the recourse reading, built once and re-pinned for
/// each `t0` dispatch.
#[derive(Debug, Clone)]
pub struct RecourseEvaluator {
    scenarios: Vec<ScenarioLps>,
    opts: LpOptions,
}

#[derive(Debug, Clone)]
struct ScenarioLps {
    fast: FeasibilityLp,
    slack: SlackLp,
    slack_system: SlackSystem,
    t0_vars: Vec<usize>,
}

/// Value and attribution of one scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioValue {
    pub value: f64,
    pub shed_by_bus: Vec<BusShed>,
    pub binding_rows: Vec<RowTag>,
}

impl RecourseEvaluator {
    /// Each scenario uses the switchable network with its line states
    /// pinned, i.e. exactly the inner LP of the single-level MILP.
    pub fn new(case: &NetworkCase, set: &ScenarioSet, policy: BigMPolicy, opts: LpOptions) -> Result<Self> {
        if set.is_empty() {
            return Err(EssrError::Invalid("scenario set is empty".into()));
        }
        let base = build_switchable(case, &set.exposure, policy)?;
        let t0_vars: Vec<usize> = case
            .generators
            .iter()
            .map(|g| base.system.var(&VarRef::GenOutput { gen: g.id, t: 0 }).expect("generator registered"))
            .collect();
        let mut scenarios = Vec::with_capacity(set.len());
        for s in &set.scenarios {
            let mut sw = base.clone();
            sw.pin_scenario(s);
            let slack_system = augment_slacks(&sw.system)?;
            scenarios.push(ScenarioLps {
                fast: FeasibilityLp::new(&sw.system),
                slack: slack_lp(&slack_system, false)?,
                slack_system,
                t0_vars: t0_vars.clone(),
            });
        }
        Ok(Self { scenarios, opts })
    }

    pub fn len(&self) -> usize {
        self.scenarios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenarios.is_empty()
    }

    /// Minimum total slack of scenario `k` with `t0` pinned (or free).
    pub fn evaluate(&mut self, k: usize, t0: Option<&[f64]>, detail: bool) -> Result<ScenarioValue> {
        let opts = self.opts.clone();
        let sc = &mut self.scenarios[k];
        for (i, &j) in sc.t0_vars.iter().enumerate() {
            match t0 {
                Some(p) => {
                    sc.fast.pin(j, p[i]);
                    sc.slack.set_var_bounds(j, p[i], p[i]);
                }
                None => {
                    let v = sc.slack_system.base.vars[j];
                    sc.fast.lp.col_lower[j] = v.lower.max(sc.fast.row_bounds[j].0);
                    sc.fast.lp.col_upper[j] = v.upper.min(sc.fast.row_bounds[j].1);
                    sc.slack.set_var_bounds(j, f64::NEG_INFINITY, f64::INFINITY);
                }
            }
        }
        if sc.fast.solve(&opts)?.is_some() {
            return Ok(ScenarioValue { value: 0.0, shed_by_bus: Vec::new(), binding_rows: Vec::new() });
        }
        let s = essr_solver::solve_lp(&sc.slack.lp, &opts);
        if s.status != essr_solver::LpStatus::Optimal {
            return Err(EssrError::Solver(format!("scenario {} slack LP ended with status {:?}", k + 1, s.status)));
        }
        let mut out = ScenarioValue { value: s.objective.max(0.0), shed_by_bus: Vec::new(), binding_rows: Vec::new() };
        if detail {
            let ss = &sc.slack_system;
            for i in 0..ss.rows.len() {
                let sm = s.x[sc.slack.minus_col[i]];
                let tag = ss.base.rows[ss.rows[i].source].tag;
                if ss.is_shed_row(i) && sm > crate::polytope::SLACK_REPORT_TOL {
                    if let RowTag::Balance { bus, t, .. } = tag {
                        out.shed_by_bus.push(BusShed { bus, t, shed: sm });
                    }
                }
                // row dual of a ≤ row in a minimisation is ≤ 0; binding when nonzero
                if s.row_duals[i] < -1e-9 && !out.binding_rows.contains(&tag) {
                    out.binding_rows.push(tag);
                }
            }
        }
        Ok(out)
    }

    /// Maximum over scenarios; the argmax is the lowest index attaining it.
    pub fn worst(&mut self, t0: Option<&[f64]>) -> Result<(f64, usize, Vec<f64>)> {
        let mut values = Vec::with_capacity(self.len());
        for k in 0..self.len() {
            values.push(self.evaluate(k, t0, false)?.value);
        }
        let best = values.iter().copied().fold(0.0, f64::max);
        let arg = values.iter().position(|&v| v >= best - 1e-9).unwrap_or(0);
        Ok((best, arg, values))
    }
}

/// Enumeration oracle: one slack LP per scenario, maximum and argmax.
pub fn enumerate_worst_case(
    case: &NetworkCase,
    set: &ScenarioSet,
    t0: Option<&[f64]>,
    policy: BigMPolicy,
    opts: &LpOptions,
) -> Result<WorstCaseReport> {
    let start = Instant::now();
    let mut ev = RecourseEvaluator::new(case, set, policy, opts.clone())?;
    let (value, arg, per_scenario) = ev.worst(t0)?;
    let detail = ev.evaluate(arg, t0, true)?;
    Ok(WorstCaseReport {
        method: WorstCaseMethod::Enumeration,
        value,
        complete: true,
        best_bound: value,
        selected_scenario: Some(arg),
        shed_by_bus: detail.shed_by_bus,
        binding_rows: detail.binding_rows,
        per_scenario,
        duals: None,
        stats: SolveStats {
            nodes: 0,
            lp_iterations: 0,
            lp_solves: set.len() + 1,
            wall_seconds: start.elapsed().as_secs_f64(),
        },
    })
}

/// Slot list of a built MILP (line-state binaries in chain order).
pub fn milp_slots(milp: &SingleLevelMilp) -> Vec<Slot> {
    milp.system
        .vars
        .iter()
        .enumerate()
        .filter_map(|(j, v)| match v.var {
            VarRef::LineState { line, t, .. } => Some(Slot { line, t, var: j }),
            _ => None,
        })
        .collect()
}
