//! Network data model, validation and the built-in test systems.

use serde::{Deserialize, Serialize};

use crate::error::{EssrError, Result};
use crate::matpower::import_matpower;

/// Angle bound applied when a source provides none (radians).
pub const DEFAULT_ANGLE_BOUND: f64 = 0.6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: usize,
    /// Active demand per period (p.u.).
    pub load_by_period: Vec<f64>,
    pub angle_min: f64,
    pub angle_max: f64,
    pub is_reference: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub id: usize,
    pub from_bus: usize,
    pub to_bus: usize,
    pub susceptance: f64,
    /// Symmetric thermal limit (p.u.).
    pub capacity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub id: usize,
    pub bus: usize,
    pub p_min: f64,
    pub p_max: f64,
    pub ramp_up: f64,
    pub ramp_down: f64,
    /// Output in the source data, if any; used as a default t0 dispatch.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_nominal: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkCase {
    pub base_mva: f64,
    pub horizon: Vec<String>,
    pub buses: Vec<Bus>,
    pub lines: Vec<Line>,
    pub generators: Vec<Generator>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub subject: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, subject: impl Into<String>, message: impl Into<String>) {
        self.violations.push(Violation { subject: subject.into(), message: message.into() });
    }
}

pub fn default_horizon(periods: usize) -> Vec<String> {
    (0..periods).map(|t| format!("t{t}")).collect()
}

impl NetworkCase {
    pub fn num_periods(&self) -> usize {
        self.horizon.len()
    }

    pub fn bus_pos(&self, id: usize) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }

    pub fn line_pos(&self, id: usize) -> Option<usize> {
        self.lines.iter().position(|l| l.id == id)
    }

    pub fn reference_pos(&self) -> Option<usize> {
        self.buses.iter().position(|b| b.is_reference)
    }

    pub fn total_load(&self, t: usize) -> f64 {
        self.buses.iter().map(|b| b.load_by_period[t]).sum()
    }

    /// Sets both ramp limits of every generator.
    pub fn set_ramp(&mut self, ramp: f64) {
        for g in &mut self.generators {
            g.ramp_up = ramp;
            g.ramp_down = ramp;
        }
    }

    pub fn set_line_capacity(&mut self, line_id: usize, capacity: f64) -> Result<()> {
        let pos = self.line_pos(line_id).ok_or(EssrError::UnknownLine(line_id))?;
        self.lines[pos].capacity = capacity;
        Ok(())
    }

    /// Replaces the horizon, replicating each bus's first-period load.
    pub fn set_horizon(&mut self, horizon: Vec<String>) {
        let n = horizon.len();
        for b in &mut self.buses {
            let base = b.load_by_period.first().copied().unwrap_or(0.0);
            b.load_by_period = vec![base; n];
        }
        self.horizon = horizon;
    }

    /// Source dispatch scaled so total output matches the t0 load; falls
    /// back to a load-proportional split of `p_max` when no source values exist.
    pub fn nominal_dispatch(&self) -> Vec<f64> {
        let load = self.total_load(0);
        let base: Vec<f64> = self
            .generators
            .iter()
            .map(|g| g.p_nominal.unwrap_or(g.p_max))
            .collect();
        let total: f64 = base.iter().sum();
        if total <= 0.0 {
            return vec![0.0; base.len()];
        }
        base.iter().map(|v| v * load / total).collect()
    }

    pub fn validate(&self) -> ValidationReport {
        let mut r = ValidationReport::default();
        let n = self.num_periods();
        let refs = self.buses.iter().filter(|b| b.is_reference).count();
        if refs != 1 {
            r.push("case", format!("expected exactly one reference bus, found {refs}"));
        }
        let mut seen = std::collections::HashSet::new();
        for b in &self.buses {
            let subject = format!("bus {}", b.id);
            if !seen.insert(b.id) {
                r.push(&subject, "duplicate bus id");
            }
            if !(b.angle_min < b.angle_max) {
                r.push(&subject, "angle_min must be below angle_max");
            }
            if b.load_by_period.len() != n {
                r.push(&subject, format!("load series has {} entries for {n} periods", b.load_by_period.len()));
            }
            if b.load_by_period.iter().any(|v| !v.is_finite()) {
                r.push(&subject, "non-finite load");
            }
        }
        let mut line_ids = std::collections::HashSet::new();
        for l in &self.lines {
            let subject = format!("line {}", l.id);
            if !line_ids.insert(l.id) {
                r.push(&subject, "duplicate line id");
            }
            if !(l.susceptance > 0.0 && l.susceptance.is_finite()) {
                r.push(&subject, "susceptance must be positive");
            }
            if !(l.capacity > 0.0 && l.capacity.is_finite()) {
                r.push(&subject, "capacity must be positive");
            }
            if l.from_bus == l.to_bus {
                r.push(&subject, "from_bus equals to_bus");
            }
            for end in [l.from_bus, l.to_bus] {
                if self.bus_pos(end).is_none() {
                    r.push(&subject, format!("references nonexistent bus {end}"));
                }
            }
        }
        for g in &self.generators {
            let subject = format!("generator {}", g.id);
            if self.bus_pos(g.bus).is_none() {
                r.push(&subject, format!("references nonexistent bus {}", g.bus));
            }
            if !(0.0 <= g.p_min && g.p_min <= g.p_max) {
                r.push(&subject, "requires 0 <= p_min <= p_max");
            }
            if !(g.ramp_up > 0.0 && g.ramp_down > 0.0) {
                r.push(&subject, "ramp limits must be positive");
            }
        }
        if !self.buses.is_empty() && !self.is_connected() {
            r.push("case", "network graph is not connected");
        }
        r
    }

    fn is_connected(&self) -> bool {
        let nb = self.buses.len();
        let mut parent: Vec<usize> = (0..nb).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for l in &self.lines {
            if let (Some(a), Some(b)) = (self.bus_pos(l.from_bus), self.bus_pos(l.to_bus)) {
                let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                parent[ra] = rb;
            }
        }
        let root = find(&mut parent, 0);
        (0..nb).all(|i| find(&mut parent, i) == root)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

pub const FIXTURES: [&str; 2] = ["seven_bus", "ieee118"];

const CASE118: &str = include_str!("../data/case118.m");

/// Built-in test systems.
pub fn builtin_case(name: &str) -> Result<NetworkCase> {
    match name {
        "seven_bus" => Ok(seven_bus()),
        "ieee118" => {
            let mut case = import_matpower(CASE118)?;
            case.set_ramp(0.25);
            Ok(case)
        }
        other => Err(EssrError::UnknownFixture(other.to_string())),
    }
}

fn seven_bus() -> NetworkCase {
    let horizon = default_horizon(3);
    let loads = [0.4, 0.0, 0.4, 0.6, 0.0, 0.6, 0.0];
    let buses = loads
        .iter()
        .enumerate()
        .map(|(i, &load)| Bus {
            id: i + 1,
            load_by_period: vec![load; horizon.len()],
            angle_min: -DEFAULT_ANGLE_BOUND,
            angle_max: DEFAULT_ANGLE_BOUND,
            is_reference: i + 1 == 2,
        })
        .collect();
    let table = [
        (1, 2, 0.65),
        (1, 4, 0.65),
        (1, 6, 0.65),
        (2, 3, 0.9),
        (3, 5, 0.9),
        (4, 5, 0.8),
        (4, 6, 0.8),
        (6, 7, 0.9),
        (3, 7, 0.9),
    ];
    let lines = table
        .iter()
        .enumerate()
        .map(|(i, &(f, t, cap))| Line { id: i + 1, from_bus: f, to_bus: t, susceptance: 10.0, capacity: cap })
        .collect();
    let generators = [2, 5, 7]
        .iter()
        .enumerate()
        .map(|(i, &bus)| Generator {
            id: i + 1,
            bus,
            p_min: 0.2,
            p_max: 2.5,
            ramp_up: 0.15,
            ramp_down: 0.15,
            p_nominal: None,
        })
        .collect();
    NetworkCase { base_mva: 100.0, horizon, buses, lines, generators }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seven_bus_matches_published_data() {
        let c = builtin_case("seven_bus").unwrap();
        assert_eq!(c.buses.len(), 7);
        assert_eq!(c.lines.len(), 9);
        let l6 = &c.lines[c.line_pos(6).unwrap()];
        assert_eq!((l6.from_bus, l6.to_bus, l6.capacity), (4, 5, 0.8));
        assert!(c.generators.iter().all(|g| g.p_min == 0.2 && g.p_max == 2.5));
        assert!((c.total_load(0) - 2.0).abs() < 1e-12);
        assert!(c.validate().is_empty());
    }

    #[test]
    fn validation_flags_reference_and_dangling_line() {
        let mut c = seven_bus();
        c.buses[0].is_reference = true;
        let r = c.validate();
        assert_eq!(r.violations.len(), 1, "{r:?}");

        let mut c = seven_bus();
        c.lines[3].to_bus = 42;
        let r = c.validate();
        assert_eq!(r.violations.len(), 1, "{r:?}");
        assert_eq!(r.violations[0].subject, "line 4");
    }

    #[test]
    fn unknown_fixture_is_rejected() {
        assert!(matches!(builtin_case("nope"), Err(EssrError::UnknownFixture(_))));
    }
}
