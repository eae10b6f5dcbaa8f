//! Storm exposure model and sequential failure scenarios.
//!
//! Failure events are cumulative: a line fails at most once, and scenario
//! `failed_by_period[i]` is the set of lines that have failed by period
//! `t(i+1)`; period `t0` never has failures. Whether a failed line stays
//! out for the rest of the horizon ([`OutageModel::Persistent`], the
//! default) or only in the period it fails ([`OutageModel::Transient`]) is
//! a property of the scenario and decides which lines the network builders
//! drop.
//!
//! Sampling uses ChaCha8 seeded with `seed_from_u64(seed)`; draw `d` runs on
//! stream `d`, so draws are independent of evaluation order. Within a draw,
//! periods are visited in order and exposed lines in ascending line id; each
//! not-yet-failed exposed line consumes one uniform `f64` and fails when it
//! is below the exposure probability.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{EssrError, Result};
use crate::grid::NetworkCase;

pub const DEFAULT_ENUMERATION_CAP: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExposureEntry {
    pub line: usize,
    /// Horizon index (1 = t1).
    pub period: usize,
    pub probability: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExposureModel {
    pub entries: Vec<ExposureEntry>,
}

/// An exposed line and the first period in which it can fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExposedLine {
    pub line: usize,
    pub first_period: usize,
}

/// How long a failed line stays out of service.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutageModel {
    /// Out from its failure period to the end of the horizon.
    #[default]
    Persistent,
    /// Out only in the period in which it fails.
    Transient,
}

impl OutageModel {
    fn is_default(&self) -> bool {
        *self == OutageModel::Persistent
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureScenario {
    /// Cumulative failed line ids for t1..tN, each sorted ascending.
    pub failed_by_period: Vec<Vec<usize>>,
    pub weight: f64,
    #[serde(default, skip_serializing_if = "OutageModel::is_default")]
    pub outage: OutageModel,
}

impl FailureScenario {
    pub fn no_failure(periods_after_t0: usize) -> Self {
        Self { failed_by_period: vec![Vec::new(); periods_after_t0], weight: 1.0, outage: OutageModel::Persistent }
    }

    /// Whether `line` has failed at or before horizon period `t` (t0 = 0).
    pub fn has_failed(&self, line: usize, t: usize) -> bool {
        t >= 1 && self.failed_by_period[t - 1].binary_search(&line).is_ok()
    }

    /// Whether `line` is out of service in horizon period `t` under the
    /// scenario's outage model.
    pub fn is_failed(&self, line: usize, t: usize) -> bool {
        match self.outage {
            OutageModel::Persistent => self.has_failed(line, t),
            OutageModel::Transient => self.has_failed(line, t) && !self.has_failed(line, t - 1),
        }
    }

    /// Out-of-service lines in each of t1..tN.
    pub fn out_of_service(&self) -> Vec<Vec<usize>> {
        match self.outage {
            OutageModel::Persistent => self.failed_by_period.clone(),
            OutageModel::Transient => self.new_failures(),
        }
    }

    /// Lines failing for the first time in each period.
    pub fn new_failures(&self) -> Vec<Vec<usize>> {
        let mut prev: &[usize] = &[];
        self.failed_by_period
            .iter()
            .map(|cur| {
                let fresh = cur.iter().copied().filter(|l| prev.binary_search(l).is_err()).collect();
                prev = cur;
                fresh
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSet {
    pub scenarios: Vec<FailureScenario>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub draw_count: usize,
    /// Exposed lines (the candidate-failure set), ascending by line id.
    pub exposure: Vec<ExposedLine>,
}

impl ExposureModel {
    /// Exposure entries grouped by period (ascending), lines ascending.
    fn by_period(&self) -> BTreeMap<usize, Vec<(usize, f64)>> {
        let mut m: BTreeMap<usize, Vec<(usize, f64)>> = BTreeMap::new();
        for e in &self.entries {
            m.entry(e.period).or_default().push((e.line, e.probability));
        }
        for v in m.values_mut() {
            v.sort_by_key(|&(l, _)| l);
        }
        m
    }

    pub fn exposed_lines(&self) -> Vec<ExposedLine> {
        let mut first: BTreeMap<usize, usize> = BTreeMap::new();
        for e in &self.entries {
            let f = first.entry(e.line).or_insert(e.period);
            *f = (*f).min(e.period);
        }
        first.into_iter().map(|(line, first_period)| ExposedLine { line, first_period }).collect()
    }

    /// Checks probabilities, periods (1..horizon) and duplicate entries.
    pub fn check(&self, horizon: usize) -> Result<()> {
        let mut seen = BTreeSet::new();
        for e in &self.entries {
            if !(0.0..=1.0).contains(&e.probability) {
                return Err(EssrError::Invalid(format!("probability {} of line {} outside [0,1]", e.probability, e.line)));
            }
            if e.period == 0 || e.period >= horizon {
                return Err(EssrError::Invalid(format!("exposure period {} of line {} outside t1..t{}", e.period, e.line, horizon - 1)));
            }
            if !seen.insert((e.line, e.period)) {
                return Err(EssrError::Invalid(format!("duplicate exposure of line {} in period {}", e.line, e.period)));
            }
        }
        Ok(())
    }

    /// Every exposed line in the case exists.
    pub fn check_against(&self, case: &NetworkCase) -> Result<()> {
        self.check(case.num_periods())?;
        for e in &self.entries {
            if case.line_pos(e.line).is_none() {
                return Err(EssrError::UnknownLine(e.line));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Orders scenarios by their new-failure sets, period by period, reading
/// each set as a bitmask over exposed lines with the lowest line id as the
/// least significant bit.
fn scenario_order(exposed: &[ExposedLine], a: &FailureScenario, b: &FailureScenario) -> Ordering {
    let (na, nb) = (a.new_failures(), b.new_failures());
    for (sa, sb) in na.iter().zip(&nb) {
        for line in exposed.iter().rev().map(|e| e.line) {
            let (ia, ib) = (sa.binary_search(&line).is_ok(), sb.binary_search(&line).is_ok());
            if ia != ib {
                return ia.cmp(&ib);
            }
        }
    }
    Ordering::Equal
}

/// Builds a cumulative scenario from per-line failure periods.
fn scenario_from_failures(periods_after_t0: usize, fail_at: &[(usize, usize)], weight: f64) -> FailureScenario {
    let mut failed_by_period = vec![Vec::new(); periods_after_t0];
    for &(line, t) in fail_at {
        for set in failed_by_period.iter_mut().skip(t - 1) {
            set.push(line);
        }
    }
    for s in &mut failed_by_period {
        s.sort_unstable();
    }
    FailureScenario { failed_by_period, weight, outage: OutageModel::Persistent }
}

/// Every cumulative failure sequence consistent with the exposure windows,
/// weighted by exact path probabilities.
pub fn enumerate_scenarios(model: &ExposureModel, horizon: usize, cap: usize) -> Result<ScenarioSet> {
    model.check(horizon)?;
    if horizon < 2 {
        return Err(EssrError::HorizonTooShort(horizon));
    }
    let exposed = model.exposed_lines();
    // per line: options (fail period or never) with probabilities
    let mut options: Vec<Vec<(Option<usize>, f64)>> = Vec::new();
    let mut count: usize = 1;
    for ex in &exposed {
        let mut windows: Vec<(usize, f64)> = model
            .entries
            .iter()
            .filter(|e| e.line == ex.line)
            .map(|e| (e.period, e.probability))
            .collect();
        windows.sort_by_key(|w| w.0);
        let mut survive = 1.0;
        let mut opts = Vec::new();
        for (t, p) in windows {
            opts.push((Some(t), survive * p));
            survive *= 1.0 - p;
        }
        opts.push((None, survive));
        count = count.saturating_mul(opts.len());
        if count > cap {
            return Err(EssrError::CapExceeded { what: "scenario", count, cap });
        }
        options.push(opts);
    }
    let mut scenarios = Vec::with_capacity(count);
    let mut choice = vec![0usize; options.len()];
    loop {
        let mut weight = 1.0;
        let mut fails = Vec::new();
        for (i, &c) in choice.iter().enumerate() {
            let (t, p) = options[i][c];
            weight *= p;
            if let Some(t) = t {
                fails.push((exposed[i].line, t));
            }
        }
        scenarios.push(scenario_from_failures(horizon - 1, &fails, weight));
        // odometer increment
        let mut i = 0;
        loop {
            if i == choice.len() {
                scenarios.sort_by(|a, b| scenario_order(&exposed, a, b));
                return Ok(ScenarioSet { scenarios, seed: None, draw_count: 0, exposure: exposed });
            }
            choice[i] += 1;
            if choice[i] < options[i].len() {
                break;
            }
            choice[i] = 0;
            i += 1;
        }
    }
}

/// Runs one Monte Carlo draw.
pub fn sample_path(by_period: &BTreeMap<usize, Vec<(usize, f64)>>, horizon: usize, seed: u64, draw: u64) -> FailureScenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(draw);
    let mut failed: Vec<(usize, usize)> = Vec::new();
    for (&t, lines) in by_period {
        for &(line, p) in lines {
            if failed.iter().any(|&(l, _)| l == line) {
                continue;
            }
            let u: f64 = rng.gen();
            if u < p {
                failed.push((line, t));
            }
        }
    }
    scenario_from_failures(horizon - 1, &failed, 1.0)
}

/// Samples `draws` independent failure paths, deduplicated, weighted by
/// empirical frequency.
pub fn sample_scenarios(model: &ExposureModel, horizon: usize, draws: usize, seed: u64) -> Result<ScenarioSet> {
    model.check(horizon)?;
    if draws == 0 {
        return Err(EssrError::Invalid("at least one draw is required".into()));
    }
    if horizon < 2 {
        return Err(EssrError::HorizonTooShort(horizon));
    }
    let by_period = model.by_period();
    let mut counts: HashMap<Vec<Vec<usize>>, usize> = HashMap::new();
    for d in 0..draws {
        let s = sample_path(&by_period, horizon, seed, d as u64);
        *counts.entry(s.failed_by_period).or_insert(0) += 1;
    }
    let exposed = model.exposed_lines();
    let mut scenarios: Vec<FailureScenario> = counts
        .into_iter()
        .map(|(failed_by_period, c)| FailureScenario {
            failed_by_period,
            weight: c as f64 / draws as f64,
            outage: OutageModel::Persistent,
        })
        .collect();
    scenarios.sort_by(|a, b| scenario_order(&exposed, a, b));
    Ok(ScenarioSet { scenarios, seed: Some(seed), draw_count: draws, exposure: exposed })
}

impl ScenarioSet {
    pub fn len(&self) -> usize {
        self.scenarios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenarios.is_empty()
    }

    /// Single no-failure scenario over `horizon` periods.
    pub fn no_failure(horizon: usize) -> Self {
        Self {
            scenarios: vec![FailureScenario::no_failure(horizon.saturating_sub(1))],
            seed: None,
            draw_count: 0,
            exposure: Vec::new(),
        }
    }

    /// Applies an outage model to every scenario.
    pub fn with_outage(mut self, outage: OutageModel) -> Self {
        for s in &mut self.scenarios {
            s.outage = outage;
        }
        self
    }

    /// Keeps only the scenarios selected by `keep`, renormalising weights.
    pub fn subset(&self, keep: &[usize]) -> Self {
        let mut scenarios: Vec<FailureScenario> = keep.iter().map(|&k| self.scenarios[k].clone()).collect();
        let total: f64 = scenarios.iter().map(|s| s.weight).sum();
        if total > 0.0 {
            for s in &mut scenarios {
                s.weight /= total;
            }
        }
        Self { scenarios, seed: self.seed, draw_count: self.draw_count, exposure: self.exposure.clone() }
    }

    /// Checks cumulative monotonicity, exposure consistency and uniqueness.
    pub fn check(&self) -> Result<()> {
        let first: HashMap<usize, usize> = self.exposure.iter().map(|e| (e.line, e.first_period)).collect();
        let mut seen = BTreeSet::new();
        for (k, s) in self.scenarios.iter().enumerate() {
            if !seen.insert(s.failed_by_period.clone()) {
                return Err(EssrError::Invalid(format!("scenario {} duplicates an earlier scenario", k + 1)));
            }
            for (i, set) in s.failed_by_period.iter().enumerate() {
                if let Some(next) = s.failed_by_period.get(i + 1) {
                    if !set.iter().all(|l| next.binary_search(l).is_ok()) {
                        return Err(EssrError::Invalid(format!("scenario {} repairs a line", k + 1)));
                    }
                }
                for l in set {
                    if s.outage != self.scenarios[0].outage {
                        return Err(EssrError::Invalid("scenarios mix outage models".into()));
                    }
                    match first.get(l) {
                        Some(&f) if f <= i + 1 => {}
                        _ => return Err(EssrError::Invalid(format!("scenario {} fails unexposed line {l}", k + 1))),
                    }
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let set: Self = serde_json::from_str(text)?;
        set.check()?;
        Ok(set)
    }
}

/// Line states `r` over (exposed line, period t1..tN, scenario): 1 in
/// service, 0 failed. Unexposed lines are always in service and omitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineStateTensor {
    pub lines: Vec<usize>,
    pub periods: usize,
    /// `states[k][i][t-1]`
    pub states: Vec<Vec<Vec<u8>>>,
}

impl LineStateTensor {
    pub fn get(&self, scenario: usize, line: usize, t: usize) -> Option<u8> {
        let i = self.lines.iter().position(|&l| l == line)?;
        self.states[scenario][i].get(t.checked_sub(1)?).copied()
    }
}

pub fn line_state_tensor(set: &ScenarioSet, case: &NetworkCase) -> Result<LineStateTensor> {
    for s in &set.scenarios {
        for l in s.failed_by_period.iter().flatten() {
            if case.line_pos(*l).is_none() {
                return Err(EssrError::UnknownLine(*l));
            }
        }
    }
    let lines: Vec<usize> = set.exposure.iter().map(|e| e.line).collect();
    let periods = case.num_periods().saturating_sub(1);
    let states = set
        .scenarios
        .iter()
        .map(|s| {
            lines
                .iter()
                .map(|&l| (1..=periods).map(|t| u8::from(!s.is_failed(l, t))).collect())
                .collect()
        })
        .collect();
    Ok(LineStateTensor { lines, periods, states })
}

/// Exposure windows of the built-in studies.
pub fn builtin_exposure(name: &str, probability: f64) -> Result<ExposureModel> {
    let windows: Vec<(usize, usize)> = match name {
        // b1-b2 in t1; b1-b4 in t1 and t2; b1-b6 in t2
        "seven_bus" => vec![(1, 1), (2, 1), (2, 2), (3, 2)],
        // non-bridge lines along the storm path across the north-west area
        "ieee118" => {
            let t1 = [1, 3, 4, 5, 8, 12, 17, 21, 23, 25];
            let t2 = [26, 30, 31, 32, 34, 39, 43, 46, 50, 51];
            t1.iter().map(|&l| (l, 1)).chain(t2.iter().map(|&l| (l, 2))).collect()
        }
        other => return Err(EssrError::UnknownFixture(other.to_string())),
    };
    Ok(ExposureModel {
        entries: windows
            .into_iter()
            .map(|(line, period)| ExposureEntry { line, period, probability })
            .collect(),
    })
}
