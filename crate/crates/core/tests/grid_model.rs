use essr_core::grid::{builtin_case, NetworkCase};
use essr_core::matpower::import_matpower;

const CASE118: &str = include_str!("../data/case118.m");

/// Numeric rows of `mpc.<name> = [ ... ];`, read without the importer.
fn matrix(text: &str, name: &str) -> Vec<Vec<f64>> {
    let start = text.find(&format!("mpc.{name} = [")).expect("section present");
    let body = &text[start..];
    let body = &body[body.find('[').unwrap() + 1..body.find("];").unwrap()];
    body.lines()
        .map(|l| l.split('%').next().unwrap().trim().trim_end_matches(';'))
        .filter(|l| !l.is_empty())
        .map(|l| l.split_whitespace().map(|v| v.trim_end_matches(';').parse().unwrap()).collect())
        .collect()
}

#[test]
fn ieee118_counts_match_the_source_rows() {
    let case = builtin_case("ieee118").unwrap();
    let bus = matrix(CASE118, "bus");
    let branch = matrix(CASE118, "branch");
    let gen = matrix(CASE118, "gen");
    assert_eq!(case.buses.len(), bus.len());
    assert_eq!(case.lines.len(), branch.iter().filter(|r| r[10] > 0.0).count());
    assert_eq!(case.generators.len(), gen.iter().filter(|r| r[7] > 0.0).count());
    assert_eq!((case.buses.len(), case.lines.len(), case.generators.len()), (118, 186, 54));
}

#[test]
fn ieee118_per_unit_data() {
    let case = builtin_case("ieee118").unwrap();
    let base = 100.0;
    let branch = matrix(CASE118, "branch");
    for l in &case.lines {
        let row = &branch[l.id - 1];
        assert_eq!((l.from_bus, l.to_bus), (row[0] as usize, row[1] as usize));
        approx::assert_relative_eq!(l.susceptance, 1.0 / row[3].abs(), max_relative = 1e-12);
    }
    let bus = matrix(CASE118, "bus");
    for (b, row) in case.buses.iter().zip(&bus) {
        assert_eq!(b.id, row[0] as usize);
        assert!(b.load_by_period.iter().all(|&d| (d - row[2] / base).abs() < 1e-12));
    }
    assert_eq!(case.buses.iter().filter(|b| b.is_reference).count(), 1);
    assert!(case.validate().is_empty());
}

#[test]
fn fixtures_validate_and_round_trip_through_json() {
    for name in ["seven_bus", "ieee118"] {
        let case = builtin_case(name).unwrap();
        assert!(case.validate().is_empty(), "{name}");
        let back = NetworkCase::from_json(&case.to_json().unwrap()).unwrap();
        assert_eq!(back, case);
    }
}

#[test]
fn seven_bus_load_and_capacity_overrides() {
    let mut case = builtin_case("seven_bus").unwrap();
    assert!((case.total_load(0) - 2.0).abs() < 1e-12);
    case.set_line_capacity(6, 0.7).unwrap();
    assert_eq!(case.lines[5].capacity, 0.7);
    assert!(case.set_line_capacity(99, 0.7).is_err());
    case.set_ramp(0.35);
    assert!(case.generators.iter().all(|g| g.ramp_up == 0.35 && g.ramp_down == 0.35));
}

#[test]
fn zero_rating_means_unlimited() {
    let text = "function mpc = c\nmpc.baseMVA = 100;\n\
        mpc.bus = [1 3 0 0 0 0 1 1 0 1 1 1.1 0.9; 2 1 50 0 0 0 1 1 0 1 1 1.1 0.9];\n\
        mpc.gen = [1 40 0 0 0 1 100 1 80 0 0 0 0 0 0 0 0 0 0 0 0];\n\
        mpc.branch = [1 2 0 0.1 0 0 0 0 0 0 1 -360 360];\n";
    let case = import_matpower(text).unwrap();
    // total generation capacity plus total load bounds any DC flow
    assert!((case.lines[0].capacity - (0.8 + 0.5)).abs() < 1e-12);
    assert!((case.lines[0].susceptance - 10.0).abs() < 1e-12);
}
