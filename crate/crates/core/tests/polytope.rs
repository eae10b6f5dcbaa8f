use std::collections::HashMap;

use essr_core::grid::{builtin_case, NetworkCase};
use essr_core::polytope::{
    augment_slacks, big_m_for_line, build_essr, build_multi_topology, build_shared_stack, build_switchable,
    feasibility_value, BigMPolicy, ConstraintSystem, FeasibilityLp, RowTag, Sense, VarRef,
};
use essr_core::scenario::{builtin_exposure, enumerate_scenarios, FailureScenario, OutageModel, ScenarioSet};
use essr_solver::{solve_lp, LpOptions, LpStatus};

fn family(tag: &RowTag) -> &'static str {
    match tag {
        RowTag::Balance { .. } => "balance",
        RowTag::FlowAngle { .. } => "flow_angle",
        RowTag::FlowMax { .. } | RowTag::FlowMin { .. } => "flow_limit",
        RowTag::GenMax { .. } | RowTag::GenMin { .. } => "gen_limit",
        RowTag::AngleMax { .. } | RowTag::AngleMin { .. } => "angle_limit",
        RowTag::Reference { .. } => "reference",
        RowTag::RampUp { .. } | RowTag::RampDown { .. } => "ramp",
        _ => "other",
    }
}

fn counts(sys: &ConstraintSystem) -> HashMap<&'static str, usize> {
    let mut m = HashMap::new();
    for r in &sys.rows {
        *m.entry(family(&r.tag)).or_insert(0) += 1;
    }
    m
}

fn table_set(outage: OutageModel) -> ScenarioSet {
    let exposure = builtin_exposure("seven_bus", 0.5).unwrap();
    enumerate_scenarios(&exposure, 3, 4096).unwrap().with_outage(outage)
}

#[test]
fn essr_row_families() {
    let case = builtin_case("seven_bus").unwrap();
    let (nb, nl, ng, nt) = (7, 9, 3, 3);
    let set = table_set(OutageModel::Persistent);
    for s in &set.scenarios {
        let sys = build_essr(&case, s).unwrap();
        // line-periods in service
        let live: usize = (0..nt).map(|t| nl - if t == 0 { 0 } else { s.out_of_service()[t - 1].len() }).sum();
        let c = counts(&sys);
        assert_eq!(c["balance"], nb * nt);
        assert_eq!(c["flow_angle"], live);
        assert_eq!(c["flow_limit"], 2 * live);
        assert_eq!(c["gen_limit"], 2 * ng * nt);
        assert_eq!(c["angle_limit"], 2 * nb * nt);
        assert_eq!(c["reference"], nt);
        assert_eq!(c["ramp"], 2 * ng * (nt - 1));
        assert!(!c.contains_key("other"));
    }
}

#[test]
fn slack_value_of_a_pinned_overrun() {
    // x pinned to 1.3 with x ≤ 1 needs 0.3 of slack
    let mut sys = ConstraintSystem::new();
    let x = sys.add_var(VarRef::GenOutput { gen: 1, t: 0 }, 1.3, 1.3, false).unwrap();
    sys.add_row(&[(x, 1.0)], Sense::Le, 1.0, RowTag::GenMax { gen: 1, t: 0 }).unwrap();
    let cert = feasibility_value(&augment_slacks(&sys).unwrap(), &LpOptions::default(), false).unwrap();
    assert!((cert.value - 0.3).abs() < 1e-9);
    assert!(!cert.direct);
}

#[test]
fn slack_value_of_a_supply_deficit_reads_as_shed() {
    // one bus with load 1.0 and a generator capped at 0.3
    let mut sys = ConstraintSystem::new();
    let p = sys.add_var(VarRef::GenOutput { gen: 1, t: 0 }, f64::NEG_INFINITY, f64::INFINITY, false).unwrap();
    sys.add_row(&[(p, 1.0)], Sense::Le, 0.3, RowTag::GenMax { gen: 1, t: 0 }).unwrap();
    sys.add_row(&[(p, -1.0)], Sense::Le, 0.0, RowTag::GenMin { gen: 1, t: 0 }).unwrap();
    sys.add_row(&[(p, 1.0)], Sense::Eq, 1.0, RowTag::Balance { bus: 1, t: 0, block: 0 }).unwrap();
    let cert = feasibility_value(&augment_slacks(&sys).unwrap(), &LpOptions::default(), true).unwrap();
    assert!((cert.value - 0.7).abs() < 1e-9);
    assert!((cert.total_shed() - 0.7).abs() < 1e-9);
    assert_eq!(cert.shed_by_bus.len(), 1);
    assert!(cert.plus.iter().all(|&v| v <= 1e-9));
}

/// With `u = 0`, every switched row holds for zero flow and any angles
/// inside their bounds.
#[test]
fn big_m_makes_switched_rows_vacuous() {
    for name in ["seven_bus", "ieee118"] {
        let case = builtin_case(name).unwrap();
        for l in &case.lines {
            let m = big_m_for_line(l, &case).unwrap();
            let f = case.buses[case.bus_pos(l.from_bus).unwrap()].clone();
            let t = case.buses[case.bus_pos(l.to_bus).unwrap()].clone();
            for tf in [f.angle_min, f.angle_max] {
                for tt in [t.angle_min, t.angle_max] {
                    let diff = l.susceptance * (tf - tt);
                    // −Bθf + Bθt + P + M·u ≤ M and the mirrored row, P = 0, u = 0
                    assert!(-diff <= m + 1e-9 && diff <= m + 1e-9, "{name} line {}", l.id);
                }
            }
        }
    }
}

fn slack_value(case: &NetworkCase, sys: &ConstraintSystem, t0: &[f64]) -> f64 {
    let mut sys = sys.clone();
    sys.pin_dispatch(case, 0, t0).unwrap();
    feasibility_value(&augment_slacks(&sys).unwrap(), &LpOptions::default(), false).unwrap().value
}

/// In-service switchable lines behave exactly like hard lines.
#[test]
fn switchable_network_matches_direct_build_without_failures() {
    let case = builtin_case("seven_bus").unwrap();
    let set = table_set(OutageModel::Persistent);
    let none = FailureScenario::no_failure(2);
    let direct = build_essr(&case, &none).unwrap();
    let mut sw = build_switchable(&case, &set.exposure, BigMPolicy::Tight).unwrap();
    sw.pin_scenario(&none);
    for t0 in [[0.62, 0.70, 0.68], [0.62, 0.90, 0.48], [1.5, 0.2, 0.2], [0.2, 0.2, 2.5]] {
        let (a, b) = (slack_value(&case, &direct, &t0), slack_value(&case, &sw.system, &t0));
        assert!((a - b).abs() < 1e-7, "{t0:?}: {a} vs {b}");
    }
}

/// Pinned multi-topology stack and the shared stack accept the same
/// `t0` points.
#[test]
fn pinned_multi_topology_equals_shared_stack() {
    let case = builtin_case("seven_bus").unwrap();
    for outage in [OutageModel::Persistent, OutageModel::Transient] {
        let set = table_set(outage);
        let mut multi = build_multi_topology(&case, &set, BigMPolicy::Tight).unwrap();
        multi.pin_scenarios(&set);
        let shared = build_shared_stack(&case, &set).unwrap();
        for t0 in [[0.62, 0.70, 0.68], [0.62, 0.90, 0.48], [0.8, 0.6, 0.6], [0.3, 0.3, 1.4]] {
            let feasible = |sys: &ConstraintSystem| {
                let mut s = sys.clone();
                s.pin_dispatch(&case, 0, &t0).unwrap();
                FeasibilityLp::new(&s).solve(&LpOptions::default()).unwrap().is_some()
            };
            assert_eq!(feasible(&multi.system), feasible(&shared), "{outage:?} {t0:?}");
        }
    }
}

/// The largest `t1` output reachable from a pinned `t0` is `t0 + ramp`.
#[test]
fn ramp_limits_the_next_period() {
    let mut case = builtin_case("seven_bus").unwrap();
    let t0 = [0.62, 0.90, 0.48];
    for ramp in [0.15, 0.25, 0.35] {
        case.set_ramp(ramp);
        let mut sys = build_essr(&case, &FailureScenario::no_failure(2)).unwrap();
        sys.pin_dispatch(&case, 0, &t0).unwrap();
        let f = FeasibilityLp::new(&sys);
        let j = sys.var(&VarRef::GenOutput { gen: 1, t: 1 }).unwrap();
        let mut lp = f.lp.clone();
        lp.objective[j] = -1.0;
        let s = solve_lp(&lp, &LpOptions::default());
        assert_eq!(s.status, LpStatus::Optimal);
        assert!(-s.objective <= t0[0] + ramp + 1e-9);

        let mut over = f.clone();
        over.pin(j, t0[0] + ramp + 0.01);
        assert!(over.solve(&LpOptions::default()).unwrap().is_none());
    }
}

#[test]
fn constraint_systems_round_trip_through_json() {
    let case = builtin_case("seven_bus").unwrap();
    let set = table_set(OutageModel::Transient);
    let sys = build_essr(&case, &set.scenarios[4]).unwrap();
    let back = ConstraintSystem::from_json(&sys.to_json().unwrap()).unwrap();
    assert_eq!(back, sys);
}
