//! JSON run configuration with flat keys; command-line flags win.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::args::Common;
use crate::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Fixture name or case file path.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub case: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exposure: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probability: Option<f64>,
    /// enumerate | sample | table2 | path to a scenario file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenarios: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub draws: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outage: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ramp: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub capacity: Vec<(usize, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node_limit: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_limit: Option<f64>,
    /// Sweep axes as GEN:MIN:MAX:STEP.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub balance: Option<usize>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
    }

    /// Config file (if any) overridden by flags.
    pub fn resolve(common: &Common) -> Result<Self, CliError> {
        let mut c = match &common.config {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        if let Some(f) = &common.fixture {
            c.case = Some(f.clone());
        }
        if let Some(p) = &common.case {
            c.case = Some(p.display().to_string());
        }
        macro_rules! take {
            ($($field:ident),*) => {$(
                if common.$field.is_some() {
                    c.$field = common.$field.clone();
                }
            )*};
        }
        take!(exposure, probability, scenarios, draws, seed, outage, ramp, mode, t0, out_dir, node_limit, time_limit);
        for spec in &common.capacity {
            c.capacity.push(parse_capacity(spec)?);
        }
        if c.scenarios.is_none() && c.draws.is_some() {
            c.scenarios = Some("sample".into());
        }
        Ok(c)
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out_dir.clone().unwrap_or_else(|| PathBuf::from("essr-out"))
    }
}

fn parse_capacity(spec: &str) -> Result<(usize, f64), CliError> {
    let bad = || CliError::Usage(format!("capacity override '{spec}' is not LINE=CAPACITY"));
    let (l, c) = spec.split_once('=').ok_or_else(bad)?;
    Ok((l.trim().parse().map_err(|_| bad())?, c.trim().parse().map_err(|_| bad())?))
}
