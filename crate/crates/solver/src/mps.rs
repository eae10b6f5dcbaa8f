//! Fixed-format MPS export and a whitespace-tolerant reader.
//!
//! Fixed format limits names to eight characters. When any row (or column)
//! name does not fit, all rows (or columns) are renamed `R<i>` / `C<j>` and
//! the original names are returned in a [`NameMap`] so they can be restored.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::bnb::MilpProblem;
use crate::error::SolverError;
use crate::problem::{LpBuilder, RowSense};

const OBJ_ROW: &str = "OBJ";

/// Short MPS names mapped back to the original names.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NameMap {
    pub rows: Vec<(String, String)>,
    pub cols: Vec<(String, String)>,
}

impl NameMap {
    pub fn is_empty(&self) -> bool {
        self.rows.is_empty() && self.cols.is_empty()
    }

    /// Renders the map as `kind short original` lines.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (s, o) in &self.rows {
            let _ = writeln!(out, "ROW {s} {o}");
        }
        for (s, o) in &self.cols {
            let _ = writeln!(out, "COL {s} {o}");
        }
        out
    }
}

fn needs_rename(names: &[String]) -> bool {
    let mut seen = std::collections::HashSet::new();
    names.iter().any(|n| {
        n.is_empty() || n.len() > 8 || n.contains(char::is_whitespace) || n == OBJ_ROW || !seen.insert(n.as_str())
    })
}

fn short_names(names: &[String], prefix: char, map: &mut Vec<(String, String)>) -> Vec<String> {
    if !needs_rename(names) {
        return names.to_vec();
    }
    names
        .iter()
        .enumerate()
        .map(|(i, n)| {
            let s = format!("{prefix}{i}");
            map.push((s.clone(), n.clone()));
            s
        })
        .collect()
}

/// Shortest round-trip representation of `v`.
fn num(v: f64) -> String {
    let plain = format!("{v}");
    let sci = format!("{v:e}");
    if sci.len() < plain.len() {
        sci
    } else {
        plain
    }
}

fn entry_line(out: &mut String, kind: &str, f1: &str, pairs: &[(&str, f64)]) {
    let mut line = format!(" {kind:<2} {f1:<8}");
    for (k, (name, v)) in pairs.iter().enumerate() {
        if k == 0 {
            let _ = write!(line, "  {name:<8}  {:>12}", num(*v));
        } else {
            let _ = write!(line, "   {name:<8}  {:>12}", num(*v));
        }
    }
    out.push_str(line.trim_end());
    out.push('\n');
}

/// Writes `problem` in fixed-format MPS.
pub fn export_mps(problem: &MilpProblem, name: &str) -> (String, NameMap) {
    let lp = &problem.lp;
    let mut map = NameMap::default();
    let rows = short_names(&lp.row_names, 'R', &mut map.rows);
    let cols = short_names(&lp.col_names, 'C', &mut map.cols);
    let mut out = String::new();
    let _ = writeln!(out, "NAME          {name}");
    out.push_str("ROWS\n");
    let _ = writeln!(out, " N  {OBJ_ROW}");
    for (i, r) in rows.iter().enumerate() {
        let t = match lp.senses[i] {
            RowSense::Le => "L",
            RowSense::Ge => "G",
            RowSense::Eq => "E",
        };
        let _ = writeln!(out, " {t}  {r}");
    }
    out.push_str("COLUMNS\n");
    let mut in_int = false;
    let mut marker = 0;
    for j in 0..lp.num_cols {
        let int = problem.integer[j];
        if int != in_int {
            let kind = if int { "'INTORG'" } else { "'INTEND'" };
            let _ = writeln!(out, "    MARKER{marker:<4}  'MARKER'                 {kind}");
            marker += 1;
            in_int = int;
        }
        let mut entries: Vec<(&str, f64)> = Vec::new();
        if lp.objective[j] != 0.0 {
            entries.push((OBJ_ROW, lp.objective[j]));
        }
        for (r, v) in lp.column(j) {
            entries.push((rows[r].as_str(), v));
        }
        if entries.is_empty() {
            entries.push((OBJ_ROW, 0.0));
        }
        for chunk in entries.chunks(2) {
            entry_line(&mut out, "", &cols[j], chunk);
        }
    }
    if in_int {
        let _ = writeln!(out, "    MARKER{marker:<4}  'MARKER'                 'INTEND'");
    }
    out.push_str("RHS\n");
    let mut rhs: Vec<(&str, f64)> = Vec::new();
    if lp.objective_offset != 0.0 {
        rhs.push((OBJ_ROW, -lp.objective_offset));
    }
    for (i, &b) in lp.rhs.iter().enumerate() {
        if b != 0.0 {
            rhs.push((rows[i].as_str(), b));
        }
    }
    for chunk in rhs.chunks(2) {
        entry_line(&mut out, "", "RHS", chunk);
    }
    out.push_str("BOUNDS\n");
    for j in 0..lp.num_cols {
        let (lo, hi) = (lp.col_lower[j], lp.col_upper[j]);
        let c = cols[j].as_str();
        let int = problem.integer[j];
        if lo == hi {
            entry_line(&mut out, "FX", "BND", &[(c, lo)]);
            continue;
        }
        if lo == f64::NEG_INFINITY && hi == f64::INFINITY {
            let _ = writeln!(out, " FR BND       {c}");
            continue;
        }
        if lo == f64::NEG_INFINITY {
            let _ = writeln!(out, " MI BND       {c}");
        } else if lo != 0.0 || int {
            entry_line(&mut out, "LO", "BND", &[(c, lo)]);
        }
        if hi.is_finite() {
            entry_line(&mut out, "UP", "BND", &[(c, hi)]);
        } else if int {
            let _ = writeln!(out, " PL BND       {c}");
        }
    }
    out.push_str("ENDATA\n");
    (out, map)
}

/// Parses MPS text (fixed or free format without spaces in names).
pub fn import_mps(text: &str) -> Result<MilpProblem, SolverError> {
    #[derive(PartialEq)]
    enum Section {
        None,
        Rows,
        Columns,
        Rhs,
        Bounds,
        Done,
    }
    let err = |line: usize, msg: &str| SolverError::Mps { line, msg: msg.to_string() };
    let mut section = Section::None;
    let mut b = LpBuilder::new();
    let mut obj_name: Option<String> = None;
    let mut row_ids: HashMap<String, usize> = HashMap::new();
    let mut row_defs: Vec<(String, RowSense)> = Vec::new();
    let mut col_ids: HashMap<String, usize> = HashMap::new();
    let mut col_entries: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut col_names: Vec<String> = Vec::new();
    let mut cost: Vec<f64> = Vec::new();
    let mut integer: Vec<bool> = Vec::new();
    let mut lower: Vec<f64> = Vec::new();
    let mut upper: Vec<f64> = Vec::new();
    let mut rhs: Vec<f64> = Vec::new();
    let mut offset = 0.0;
    let mut in_int = false;

    let parse_num = |tok: &str, line: usize| tok.parse::<f64>().map_err(|_| err(line, &format!("bad number `{tok}`")));

    for (ln, raw) in text.lines().enumerate() {
        let ln = ln + 1;
        if raw.trim().is_empty() || raw.starts_with('*') {
            continue;
        }
        let toks: Vec<&str> = raw.split_whitespace().collect();
        if !raw.starts_with(' ') && !raw.starts_with('\t') {
            section = match toks[0] {
                "NAME" => Section::None,
                "ROWS" => Section::Rows,
                "COLUMNS" => {
                    rhs = vec![0.0; row_defs.len()];
                    Section::Columns
                }
                "RHS" => Section::Rhs,
                "BOUNDS" => Section::Bounds,
                "ENDATA" => Section::Done,
                "RANGES" => return Err(err(ln, "RANGES section is not supported")),
                other => return Err(err(ln, &format!("unknown section `{other}`"))),
            };
            continue;
        }
        match section {
            Section::Rows => {
                if toks.len() != 2 {
                    return Err(err(ln, "expected `type name`"));
                }
                let sense = match toks[0] {
                    "N" => {
                        if obj_name.is_none() {
                            obj_name = Some(toks[1].to_string());
                        }
                        continue;
                    }
                    "L" => RowSense::Le,
                    "G" => RowSense::Ge,
                    "E" => RowSense::Eq,
                    t => return Err(err(ln, &format!("unknown row type `{t}`"))),
                };
                row_ids.insert(toks[1].to_string(), row_defs.len());
                row_defs.push((toks[1].to_string(), sense));
            }
            Section::Columns => {
                if toks.len() >= 3 && toks[1] == "'MARKER'" {
                    match toks[2] {
                        "'INTORG'" => in_int = true,
                        "'INTEND'" => in_int = false,
                        _ => return Err(err(ln, "unknown marker")),
                    }
                    continue;
                }
                if toks.len() != 3 && toks.len() != 5 {
                    return Err(err(ln, "expected `col row value [row value]`"));
                }
                let j = *col_ids.entry(toks[0].to_string()).or_insert_with(|| {
                    col_names.push(toks[0].to_string());
                    col_entries.push(Vec::new());
                    cost.push(0.0);
                    integer.push(in_int);
                    lower.push(0.0);
                    upper.push(f64::INFINITY);
                    col_names.len() - 1
                });
                for pair in toks[1..].chunks(2) {
                    let v = parse_num(pair[1], ln)?;
                    if Some(pair[0]) == obj_name.as_deref() {
                        cost[j] += v;
                    } else if let Some(&r) = row_ids.get(pair[0]) {
                        col_entries[j].push((r, v));
                    } else {
                        return Err(err(ln, &format!("unknown row `{}`", pair[0])));
                    }
                }
            }
            Section::Rhs => {
                let start = if toks.len() % 2 == 1 { 1 } else { 0 };
                for pair in toks[start..].chunks(2) {
                    if pair.len() != 2 {
                        return Err(err(ln, "dangling rhs entry"));
                    }
                    let v = parse_num(pair[1], ln)?;
                    if Some(pair[0]) == obj_name.as_deref() {
                        offset = -v;
                    } else if let Some(&r) = row_ids.get(pair[0]) {
                        rhs[r] = v;
                    } else {
                        return Err(err(ln, &format!("unknown row `{}`", pair[0])));
                    }
                }
            }
            Section::Bounds => {
                if toks.len() < 3 {
                    return Err(err(ln, "expected `type set col [value]`"));
                }
                let j = *col_ids
                    .get(toks[2])
                    .ok_or_else(|| err(ln, &format!("unknown column `{}`", toks[2])))?;
                let value = || {
                    toks.get(3)
                        .ok_or_else(|| err(ln, "missing bound value"))
                        .and_then(|t| parse_num(t, ln))
                };
                match toks[0] {
                    "UP" => upper[j] = value()?,
                    "LO" => lower[j] = value()?,
                    "FX" => {
                        let v = value()?;
                        lower[j] = v;
                        upper[j] = v;
                    }
                    "FR" => {
                        lower[j] = f64::NEG_INFINITY;
                        upper[j] = f64::INFINITY;
                    }
                    "MI" => lower[j] = f64::NEG_INFINITY,
                    "PL" => upper[j] = f64::INFINITY,
                    "BV" => {
                        lower[j] = 0.0;
                        upper[j] = 1.0;
                        integer[j] = true;
                    }
                    t => return Err(err(ln, &format!("unknown bound type `{t}`"))),
                }
            }
            Section::None => {}
            Section::Done => break,
        }
    }
    if section != Section::Done {
        return Err(err(text.lines().count(), "missing ENDATA"));
    }
    for j in 0..col_names.len() {
        b.add_named_col(col_names[j].clone(), lower[j], upper[j], cost[j]);
    }
    let mut by_row: Vec<Vec<(usize, f64)>> = vec![Vec::new(); row_defs.len()];
    for (j, entries) in col_entries.iter().enumerate() {
        for &(r, v) in entries {
            by_row[r].push((j, v));
        }
    }
    for (i, (name, sense)) in row_defs.into_iter().enumerate() {
        b.add_named_row(name, &by_row[i], sense, rhs.get(i).copied().unwrap_or(0.0));
    }
    b.set_objective_offset(offset);
    Ok(MilpProblem::new(b.build(), integer))
}

/// Restores original names recorded by [`export_mps`].
pub fn apply_name_map(problem: &mut MilpProblem, map: &NameMap) {
    let rows: HashMap<&str, &str> = map.rows.iter().map(|(s, o)| (s.as_str(), o.as_str())).collect();
    let cols: HashMap<&str, &str> = map.cols.iter().map(|(s, o)| (s.as_str(), o.as_str())).collect();
    for n in problem.lp.row_names.iter_mut() {
        if let Some(o) = rows.get(n.as_str()) {
            *n = o.to_string();
        }
    }
    for n in problem.lp.col_names.iter_mut() {
        if let Some(o) = cols.get(n.as_str()) {
            *n = o.to_string();
        }
    }
}
