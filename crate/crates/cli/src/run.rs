//! Command pipelines. Each returns the exit status and the files written.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use essr_core::bilevel::{build_worst_case_milp, enumerate_worst_case, solve_worst_case, WorstCaseReport};
use essr_core::grid::{builtin_case, NetworkCase, FIXTURES};
use essr_core::matpower::import_matpower;
use essr_core::polytope::{augment_slacks, build_essr, feasibility_value, BigMPolicy, BusShed, RowViolation};
use essr_core::region::{
    check_point, flow_report, sweep_region, Axis, CouplingMode, SweepSpec, DEFAULT_GRID_CAP, FEASIBLE_TOL,
};
use essr_core::scenario::{
    builtin_exposure, enumerate_scenarios, line_state_tensor, sample_scenarios, ExposureModel, OutageModel, ScenarioSet,
    DEFAULT_ENUMERATION_CAP,
};
use essr_core::EssrError;
use essr_solver::{export_mps, LpOptions, MilpOptions};
use log::info;
use serde::Serialize;

use crate::config::RunConfig;
use crate::CliError;

pub const EXIT_OK: u8 = 0;
pub const EXIT_FINDING: u8 = 1;
pub const EXIT_SOLVER: u8 = 3;

/// Files written by a command and its exit status.
pub struct Outcome {
    pub code: u8,
    pub outputs: Vec<PathBuf>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    argv: Vec<String>,
    config: &'a RunConfig,
    outputs: Vec<String>,
    exit_code: u8,
    wall_seconds: f64,
}

pub fn write_manifest(cfg: &RunConfig, command: &str, outcome: &Outcome, started: Instant) -> Result<(), CliError> {
    let m = Manifest {
        tool: "essr",
        version: env!("CARGO_PKG_VERSION"),
        command,
        argv: std::env::args().collect(),
        config: cfg,
        outputs: outcome
            .outputs
            .iter()
            .map(|p| p.file_name().map_or_else(|| p.display().to_string(), |n| n.to_string_lossy().into_owned()))
            .collect(),
        exit_code: outcome.code,
        wall_seconds: started.elapsed().as_secs_f64(),
    };
    let text = serde_json::to_string_pretty(&m).map_err(|e| CliError::Other(e.to_string()))?;
    write(&cfg.out_dir(), "manifest.json", &text).map(|_| ())
}

fn write(dir: &Path, name: &str, text: &str) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Usage(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    std::fs::write(&path, text).map_err(|e| CliError::Usage(format!("cannot write {}: {e}", path.display())))?;
    Ok(path)
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))
}

fn to_json<T: Serialize>(v: &T) -> Result<String, CliError> {
    serde_json::to_string_pretty(v).map_err(|e| CliError::Other(e.to_string()))
}

/// Loaded case with ramp and capacity overrides applied, plus its fixture
/// name when it is a built-in.
fn load_case(cfg: &RunConfig) -> Result<(NetworkCase, Option<String>), CliError> {
    let name = cfg.case.as_deref().ok_or_else(|| CliError::Usage("no case given (--fixture or --case)".into()))?;
    let (mut case, fixture) = if FIXTURES.contains(&name) {
        (builtin_case(name)?, Some(name.to_string()))
    } else {
        let path = Path::new(name);
        let text = read(path)?;
        let case = if path.extension().is_some_and(|e| e == "m") {
            import_matpower(&text)?
        } else {
            NetworkCase::from_json(&text)?
        };
        (case, None)
    };
    if let Some(r) = cfg.ramp {
        if !(r > 0.0) {
            return Err(CliError::Usage(format!("ramp must be positive, got {r}")));
        }
        case.set_ramp(r);
    }
    for &(line, cap) in &cfg.capacity {
        case.set_line_capacity(line, cap)?;
    }
    Ok((case, fixture))
}

fn load_exposure(cfg: &RunConfig, fixture: Option<&str>) -> Result<ExposureModel, CliError> {
    if let Some(p) = &cfg.exposure {
        return Ok(ExposureModel::from_json(&read(p)?)?);
    }
    let fixture = fixture.ok_or_else(|| CliError::Usage("a case file needs an --exposure model".into()))?;
    let p = cfg.probability.unwrap_or(if fixture == "seven_bus" { 0.5 } else { 0.05 });
    Ok(builtin_exposure(fixture, p)?)
}

fn parse_outage(s: &str) -> Result<OutageModel, CliError> {
    match s {
        "persistent" => Ok(OutageModel::Persistent),
        "transient" => Ok(OutageModel::Transient),
        other => Err(CliError::Usage(format!("unknown outage model '{other}' (expected persistent or transient)"))),
    }
}

fn parse_mode(cfg: &RunConfig) -> Result<CouplingMode, CliError> {
    cfg.mode.as_deref().map_or(Ok(CouplingMode::Recourse), |m| m.parse().map_err(|e: EssrError| CliError::Usage(e.to_string())))
}

fn load_scenarios(cfg: &RunConfig, case: &NetworkCase, fixture: Option<&str>) -> Result<ScenarioSet, CliError> {
    let source = cfg
        .scenarios
        .as_deref()
        .ok_or_else(|| CliError::Usage("no scenario source (--scen enumerate|sample|table2|FILE)".into()))?;
    let horizon = case.num_periods();
    let (set, default_outage) = match source {
        "table2" => {
            if fixture != Some("seven_bus") {
                return Err(CliError::Usage("--scen table2 needs the seven_bus fixture".into()));
            }
            let exposure = builtin_exposure("seven_bus", cfg.probability.unwrap_or(0.5))?;
            // the tabulated study reads each failure as an outage of that period only
            (enumerate_scenarios(&exposure, horizon, DEFAULT_ENUMERATION_CAP)?, OutageModel::Transient)
        }
        "enumerate" => {
            let exposure = load_exposure(cfg, fixture)?;
            (enumerate_scenarios(&exposure, horizon, DEFAULT_ENUMERATION_CAP)?, OutageModel::Persistent)
        }
        "sample" => {
            let exposure = load_exposure(cfg, fixture)?;
            let draws = cfg.draws.ok_or_else(|| CliError::Usage("--scen sample needs --draws".into()))?;
            if draws == 0 {
                return Err(CliError::Usage("--draws must be at least 1".into()));
            }
            (sample_scenarios(&exposure, horizon, draws, cfg.seed.unwrap_or(0))?, OutageModel::Persistent)
        }
        path => {
            let set = ScenarioSet::from_json(&read(Path::new(path))?)?;
            let model = set.scenarios.first().map_or(OutageModel::Persistent, |s| s.outage);
            (set, model)
        }
    };
    let outage = match &cfg.outage {
        Some(s) => parse_outage(s)?,
        None => default_outage,
    };
    let set = set.with_outage(outage);
    set.check()?;
    // rejects scenarios naming lines the case does not have
    line_state_tensor(&set, case)?;
    Ok(set)
}

fn t0_point(cfg: &RunConfig, case: &NetworkCase) -> Result<Option<Vec<f64>>, CliError> {
    match &cfg.t0 {
        Some(p) if p.len() != case.generators.len() => Err(CliError::Usage(format!(
            "--t0 has {} values, the case has {} generators",
            p.len(),
            case.generators.len()
        ))),
        Some(p) => Ok(Some(p.clone())),
        None => Ok(None),
    }
}

fn milp_options(cfg: &RunConfig) -> MilpOptions {
    let mut o = MilpOptions::default();
    if let Some(n) = cfg.node_limit {
        o.max_nodes = n;
    }
    o.time_limit = cfg.time_limit.map(Duration::from_secs_f64);
    o
}

pub fn case_validate(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let (case, _) = load_case(cfg)?;
    let report = case.validate();
    let out = write(&cfg.out_dir(), "validation.json", &to_json(&report)?)?;
    if report.is_empty() {
        println!("case is valid: {} buses, {} lines, {} generators", case.buses.len(), case.lines.len(), case.generators.len());
    } else {
        for v in &report.violations {
            println!("{}: {}", v.subject, v.message);
        }
    }
    Ok(Outcome { code: if report.is_empty() { EXIT_OK } else { EXIT_FINDING }, outputs: vec![out] })
}

pub fn scen_gen(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let (case, fixture) = load_case(cfg)?;
    let set = load_scenarios(cfg, &case, fixture.as_deref())?;
    let out = write(&cfg.out_dir(), "scenarios.json", &set.to_json()?)?;
    println!("{} scenarios from {} draws", set.len(), set.draw_count);
    Ok(Outcome { code: EXIT_OK, outputs: vec![out] })
}

#[derive(Serialize)]
struct ScenarioCheck {
    /// 1-based position in the scenario set.
    scenario: usize,
    value: f64,
    shed_by_bus: Vec<BusShed>,
    violations: Vec<RowViolation>,
}

pub fn feas_check(cfg: &RunConfig, only: Option<usize>) -> Result<Outcome, CliError> {
    let (case, fixture) = load_case(cfg)?;
    let set = load_scenarios(cfg, &case, fixture.as_deref())?;
    let t0 = t0_point(cfg, &case)?;
    let which: Vec<usize> = match only {
        Some(k) if k == 0 || k > set.len() => {
            return Err(CliError::Usage(format!("--scenario must be within 1..={}", set.len())));
        }
        Some(k) => vec![k - 1],
        None => (0..set.len()).collect(),
    };
    let opts = LpOptions::default();
    let mut checks = Vec::with_capacity(which.len());
    for k in which {
        let mut sys = build_essr(&case, &set.scenarios[k])?;
        if let Some(p) = &t0 {
            sys.pin_dispatch(&case, 0, p)?;
        }
        let cert = feasibility_value(&augment_slacks(&sys)?, &opts, true)?;
        println!("scenario {}: f = {:.9}", k + 1, cert.value);
        checks.push(ScenarioCheck { scenario: k + 1, value: cert.value, shed_by_bus: cert.shed_by_bus, violations: cert.violations });
    }
    let out = write(&cfg.out_dir(), "feasibility.json", &to_json(&checks)?)?;
    let code = if checks.iter().any(|c| c.value > FEASIBLE_TOL) { EXIT_FINDING } else { EXIT_OK };
    Ok(Outcome { code, outputs: vec![out] })
}

fn print_report(r: &WorstCaseReport) {
    let scen = r.selected_scenario.map_or("none".to_string(), |k| (k + 1).to_string());
    println!("worst-case slack F = {:.9} (scenario {scen}, {:?}, {:.2}s)", r.value, r.method, r.stats.wall_seconds);
    for s in &r.shed_by_bus {
        println!("  shed {:.9} at bus {} in period {}", s.shed, s.bus, s.t);
    }
    if !r.complete {
        println!("  search stopped at a limit; best bound {:.9}", r.best_bound);
    }
}

pub fn worst_solve(cfg: &RunConfig, oracle: bool, flows: bool) -> Result<Outcome, CliError> {
    let (case, fixture) = load_case(cfg)?;
    let set = load_scenarios(cfg, &case, fixture.as_deref())?;
    let t0 = t0_point(cfg, &case)?;
    let dir = cfg.out_dir();
    let mut outputs = Vec::new();
    match parse_mode(cfg)? {
        CouplingMode::Shared => {
            let p = t0.ok_or_else(|| CliError::Usage("shared mode needs --t0".into()))?;
            let cell = check_point(&case, &set, &p, CouplingMode::Shared, &LpOptions::default())?;
            println!("shared-trajectory slack = {:.9}", cell.shed);
            outputs.push(write(&dir, "report.json", &to_json(&cell)?)?);
            let code = if cell.feasible { EXIT_OK } else { EXIT_FINDING };
            Ok(Outcome { code, outputs })
        }
        CouplingMode::Recourse => {
            let report = if oracle {
                enumerate_worst_case(&case, &set, t0.as_deref(), BigMPolicy::Tight, &LpOptions::default())?
            } else {
                info!("building the single-level problem for {} scenarios", set.len());
                let milp = build_worst_case_milp(&case, &set, t0.as_deref(), BigMPolicy::Tight)?;
                solve_worst_case(&milp, &milp_options(cfg))?
            };
            print_report(&report);
            outputs.push(write(&dir, "report.json", &report.to_json()?)?);
            if flows {
                match (&t0, report.selected_scenario) {
                    (Some(p), Some(k)) => {
                        let table = flow_report(&case, &set.scenarios[k], p, &LpOptions::default())?;
                        outputs.push(write(&dir, "flows.csv", &table.to_csv())?);
                    }
                    _ => return Err(CliError::Usage("--flows needs --t0 and a selected scenario".into())),
                }
            }
            let code = if !report.complete {
                EXIT_SOLVER
            } else if report.value > FEASIBLE_TOL {
                EXIT_FINDING
            } else {
                EXIT_OK
            };
            Ok(Outcome { code, outputs })
        }
    }
}

fn parse_axis(spec: &str) -> Result<Axis, CliError> {
    let bad = || CliError::Usage(format!("axis '{spec}' is not GEN:MIN:MAX:STEP"));
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 4 {
        return Err(bad());
    }
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad());
    Ok(Axis { generator: parts[0].trim().parse().map_err(|_| bad())?, min: num(parts[1])?, max: num(parts[2])?, step: num(parts[3])? })
}

pub fn region_sweep(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let (case, fixture) = load_case(cfg)?;
    let set = load_scenarios(cfg, &case, fixture.as_deref())?;
    let g = &case.generators;
    let axis_over = |i: usize| Axis { generator: g[i].id, min: g[i].p_min, max: g[i].p_max, step: 0.02 };
    let (x, y, balance) = match (&cfg.x, &cfg.y) {
        (Some(x), y) => (parse_axis(x)?, y.as_deref().map(parse_axis).transpose()?, cfg.balance),
        (None, None) if g.len() == 3 => (axis_over(0), Some(axis_over(1)), Some(cfg.balance.unwrap_or(g[2].id))),
        _ => return Err(CliError::Usage("give sweep axes with --x GEN:MIN:MAX:STEP [--y ...] [--balance GEN]".into())),
    };
    let spec = SweepSpec {
        axes: std::iter::once(x).chain(y).collect(),
        balance,
        fixed: Vec::new(),
        mode: parse_mode(cfg)?,
        ramp: None,
        capacity: Vec::new(),
        grid_cap: DEFAULT_GRID_CAP,
    };
    let grid = sweep_region(&case, &set, &spec, &LpOptions::default())?;
    let dir = cfg.out_dir();
    let mut outputs = vec![write(&dir, "region.csv", &grid.to_csv())?];
    if grid.shape.len() == 2 {
        outputs.push(write(&dir, "region.dat", &grid.to_gnuplot_matrix()?)?);
    }
    outputs.push(write(&dir, "region.json", &to_json(&grid)?)?);
    println!("{} of {} cells feasible", grid.feasible_count(), grid.cells.len());
    Ok(Outcome { code: EXIT_OK, outputs })
}

pub fn export_mps_cmd(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let (case, fixture) = load_case(cfg)?;
    let set = load_scenarios(cfg, &case, fixture.as_deref())?;
    let t0 = t0_point(cfg, &case)?;
    let milp = build_worst_case_milp(&case, &set, t0.as_deref(), BigMPolicy::Tight)?;
    let (text, names) = export_mps(&milp.problem, "ESSR");
    let dir = cfg.out_dir();
    let mut outputs = vec![write(&dir, "problem.mps", &text)?];
    if !names.is_empty() {
        outputs.push(write(&dir, "problem.names", &names.to_text())?);
    }
    println!(
        "{} rows, {} columns, {} integer",
        milp.problem.lp.num_rows,
        milp.problem.lp.num_cols,
        milp.problem.integer.iter().filter(|&&b| b).count()
    );
    Ok(Outcome { code: EXIT_OK, outputs })
}
