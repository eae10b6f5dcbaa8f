use essr_core::bilevel::{build_worst_case_milp, enumerate_worst_case, solve_worst_case, WorstCaseMethod};
use essr_core::grid::builtin_case;
use essr_core::polytope::{augment_slacks, build_essr, feasibility_value, BigMPolicy, RowTag};
use essr_core::scenario::{builtin_exposure, enumerate_scenarios, OutageModel, ScenarioSet};
use essr_solver::{apply_name_map, export_mps, import_mps, LpOptions, MilpOptions};

const POINT_B: [f64; 3] = [0.62, 0.90, 0.48];
const POINT_A: [f64; 3] = [0.62, 0.70, 0.68];

fn table_set() -> ScenarioSet {
    let exposure = builtin_exposure("seven_bus", 0.5).unwrap();
    enumerate_scenarios(&exposure, 3, 4096).unwrap().with_outage(OutageModel::Transient)
}

fn direct_values(ramp: f64, t0: &[f64]) -> Vec<f64> {
    let mut case = builtin_case("seven_bus").unwrap();
    case.set_ramp(ramp);
    table_set()
        .scenarios
        .iter()
        .map(|s| {
            let mut sys = build_essr(&case, s).unwrap();
            sys.pin_dispatch(&case, 0, t0).unwrap();
            feasibility_value(&augment_slacks(&sys).unwrap(), &LpOptions::default(), false).unwrap().value
        })
        .collect()
}

#[test]
fn point_b_is_short_only_at_the_slow_ramp() {
    let mut case = builtin_case("seven_bus").unwrap();
    let set = table_set();
    for (ramp, t0, positive) in [(0.15, POINT_B, true), (0.35, POINT_B, false), (0.15, POINT_A, false)] {
        case.set_ramp(ramp);
        let milp = build_worst_case_milp(&case, &set, Some(&t0), BigMPolicy::Tight).unwrap();
        let r = solve_worst_case(&milp, &MilpOptions::default()).unwrap();
        assert!(r.complete);
        assert_eq!(r.method, WorstCaseMethod::Milp);
        // with transient outages, removing a line never helps, so the
        // direct per-scenario LPs give the same maximum
        let direct = direct_values(ramp, &t0);
        let best = direct.iter().copied().fold(0.0, f64::max);
        assert!((r.value - best).abs() < 1e-6, "ramp {ramp}: {} vs {best}", r.value);
        assert_eq!(r.value > 1e-6, positive);
        if positive {
            let k = r.selected_scenario.unwrap();
            assert!((direct[k] - best).abs() < 1e-6);
            // the first scenario attaining the maximum is b1–b2 lost in t1
            assert_eq!(direct.iter().position(|&v| v >= best - 1e-9), Some(4));
        }
    }
}

#[test]
fn enumeration_reports_every_scenario() {
    let mut case = builtin_case("seven_bus").unwrap();
    case.set_ramp(0.15);
    let set = table_set();
    let r = enumerate_worst_case(&case, &set, Some(&POINT_B), BigMPolicy::Tight, &LpOptions::default()).unwrap();
    assert_eq!(r.per_scenario.len(), 12);
    assert_eq!(r.selected_scenario, Some(4));
    assert!(r.per_scenario.iter().all(|&v| v <= r.value));
    assert!(r.binding_rows.iter().any(|t| matches!(t, RowTag::FlowMax { line: 6, t: 1, .. } | RowTag::FlowMin { line: 6, t: 1, .. }
        | RowTag::SwitchFlowMax { line: 6, t: 1, .. } | RowTag::SwitchFlowMin { line: 6, t: 1, .. })));
}

/// Reconstructed multipliers satisfy inner stationarity `Aᵀα = 0`.
#[test]
fn multipliers_satisfy_inner_kkt() {
    let mut case = builtin_case("seven_bus").unwrap();
    case.set_ramp(0.15);
    let set = table_set();
    let milp = build_worst_case_milp(&case, &set, Some(&POINT_B), BigMPolicy::Tight).unwrap();
    let r = solve_worst_case(&milp, &MilpOptions::default()).unwrap();
    let d = r.duals.as_ref().unwrap();
    assert!(d.identities_hold());
    let worst = milp.kkt.stationarity.iter().map(|col| col.iter().map(|&(i, a)| a * d.alpha[i]).sum::<f64>().abs()).fold(0.0, f64::max);
    assert!(worst < 1e-6, "stationarity residual {worst}");
    // shed is part of the total slack, never more
    let shed: f64 = r.shed_by_bus.iter().map(|s| s.shed).sum();
    assert!(shed <= r.value + 1e-9);
}

#[test]
fn single_level_problem_round_trips_through_mps() {
    let case = builtin_case("seven_bus").unwrap();
    let set = table_set();
    let milp = build_worst_case_milp(&case, &set, Some(&POINT_B), BigMPolicy::Tight).unwrap();
    let (text, names) = export_mps(&milp.problem, "ESSR");
    let mut back = import_mps(&text).unwrap();
    apply_name_map(&mut back, &names);
    assert_eq!(back.lp.num_rows, milp.problem.lp.num_rows);
    assert_eq!(back.lp.num_cols, milp.problem.lp.num_cols);
    assert_eq!(back.integer, milp.problem.integer);
    assert_eq!(back, milp.problem);
}

#[test]
fn node_limit_yields_an_incomplete_report() {
    let mut case = builtin_case("seven_bus").unwrap();
    case.set_ramp(0.15);
    let set = table_set();
    let milp = build_worst_case_milp(&case, &set, Some(&POINT_B), BigMPolicy::Tight).unwrap();
    let full = solve_worst_case(&milp, &MilpOptions::default()).unwrap();
    let opts = MilpOptions { max_nodes: 1, ..MilpOptions::default() };
    let r = solve_worst_case(&milp, &opts).unwrap();
    if r.complete {
        assert!((r.value - full.value).abs() < 1e-6);
    } else {
        // the bound still brackets the optimum from above
        assert!(r.best_bound >= full.value - 1e-6);
        assert!(r.value.is_nan() || r.value <= full.value + 1e-6);
    }
}
