//! Reader for the bus/branch/gen/baseMVA subset of MATPOWER case files.

use std::collections::HashMap;

use crate::error::{EssrError, Result};
use crate::grid::{default_horizon, Bus, Generator, Line, NetworkCase, DEFAULT_ANGLE_BOUND};

/// Periods given to imported cases until a horizon is attached.
pub const IMPORT_PERIODS: usize = 3;

struct Matrix {
    rows: Vec<Vec<f64>>,
    /// Source line of each row, for error messages.
    lines: Vec<usize>,
}

/// Parses `mpc.<name> = value;` assignments. Matrices become row lists,
/// scalars become 1x1 matrices; string assignments are ignored.
fn parse_assignments(text: &str) -> Result<HashMap<String, Matrix>> {
    let mut out = HashMap::new();
    let mut current: Option<(String, Matrix)> = None;
    let mut row: Vec<f64> = Vec::new();
    let mut row_line = 0;

    for (ln0, raw) in text.lines().enumerate() {
        let ln = ln0 + 1;
        let code = raw.split('%').next().unwrap_or("");
        let mut rest = code;
        let mut col_offset = 0;
        if current.is_none() {
            let trimmed = code.trim_start();
            let Some(assign) = trimmed.strip_prefix("mpc.") else {
                let t = trimmed.trim();
                if !(t.is_empty() || t.starts_with("function") || t.starts_with("return") || t == "end") {
                    return Err(EssrError::Syntax {
                        line: ln,
                        column: code.len() - trimmed.len() + 1,
                        msg: format!("unexpected statement `{t}`"),
                    });
                }
                continue;
            };
            let Some(eq) = assign.find('=') else {
                return Err(EssrError::Syntax { line: ln, column: code.len() - assign.len() + 1, msg: "expected `=`".into() });
            };
            let name = assign[..eq].trim().to_string();
            let value = &assign[eq + 1..];
            col_offset = code.len() - value.len();
            let v = value.trim_start();
            if v.starts_with('\'') || v.starts_with('"') {
                continue;
            }
            if let Some(body) = v.strip_prefix('[') {
                col_offset += value.len() - body.len();
                current = Some((name, Matrix { rows: Vec::new(), lines: Vec::new() }));
                rest = body;
            } else {
                let num = v.trim_end().trim_end_matches(';').trim();
                let x = parse_number(num, ln, col_offset + value.len() - v.len() + 1)?;
                out.insert(name, Matrix { rows: vec![vec![x]], lines: vec![ln] });
                continue;
            }
        }
        // inside a matrix body
        let (_, mat) = current.as_mut().expect("matrix in progress");
        let mut closed = false;
        let mut pos = 0;
        let bytes = rest.as_bytes();
        while pos < bytes.len() {
            let c = bytes[pos] as char;
            if c.is_whitespace() || c == ',' {
                pos += 1;
                continue;
            }
            if c == ';' {
                if !row.is_empty() {
                    mat.rows.push(std::mem::take(&mut row));
                    mat.lines.push(row_line);
                }
                pos += 1;
                continue;
            }
            if c == ']' {
                closed = true;
                break;
            }
            let start = pos;
            while pos < bytes.len() {
                let d = bytes[pos] as char;
                if d.is_whitespace() || d == ',' || d == ';' || d == ']' {
                    break;
                }
                pos += 1;
            }
            let tok = &rest[start..pos];
            if row.is_empty() {
                row_line = ln;
            }
            row.push(parse_number(tok, ln, col_offset + start + 1)?);
        }
        // a newline also ends a row
        if !row.is_empty() {
            mat.rows.push(std::mem::take(&mut row));
            mat.lines.push(row_line);
        }
        if closed {
            let (name, mat) = current.take().expect("matrix in progress");
            out.insert(name, mat);
        }
    }
    if let Some((name, _)) = current {
        return Err(EssrError::Syntax {
            line: text.lines().count(),
            column: 1,
            msg: format!("matrix `{name}` is not closed"),
        });
    }
    Ok(out)
}

fn parse_number(tok: &str, line: usize, column: usize) -> Result<f64> {
    match tok {
        "Inf" | "inf" => Ok(f64::INFINITY),
        "-Inf" | "-inf" => Ok(f64::NEG_INFINITY),
        _ => tok.parse::<f64>().map_err(|_| EssrError::Syntax {
            line,
            column,
            msg: format!("invalid number `{tok}`"),
        }),
    }
}

fn section<'a>(m: &'a HashMap<String, Matrix>, name: &str, min_cols: usize) -> Result<&'a Matrix> {
    let mat = m.get(name).ok_or_else(|| EssrError::MissingSection(name.to_string()))?;
    for (r, line) in mat.rows.iter().zip(&mat.lines) {
        if r.len() < min_cols {
            return Err(EssrError::Syntax {
                line: *line,
                column: 1,
                msg: format!("`{name}` row has {} columns, need at least {min_cols}", r.len()),
            });
        }
    }
    Ok(mat)
}

/// Builds a [`NetworkCase`] in per-unit from MATPOWER case text.
///
/// Out-of-service branches and generators are dropped; branch ids are the
/// 1-based row numbers of the branch matrix. A zero `rateA` means
/// "unlimited" and is replaced by total generation plus total load, which no
/// DC flow can exceed. The reference is the type-3 bus when present,
/// otherwise the lowest-numbered generator bus.
pub fn import_matpower(text: &str) -> Result<NetworkCase> {
    if text.trim().is_empty() {
        return Err(EssrError::Syntax { line: 1, column: 1, msg: "empty case file".into() });
    }
    let m = parse_assignments(text)?;
    let base = section(&m, "baseMVA", 1)?.rows[0][0];
    if !(base > 0.0) {
        return Err(EssrError::Invalid(format!("baseMVA must be positive, got {base}")));
    }
    let bus_m = section(&m, "bus", 3)?;
    let branch_m = section(&m, "branch", 4)?;
    let gen_m = section(&m, "gen", 10)?;
    let periods = IMPORT_PERIODS;

    let mut generators = Vec::new();
    for (i, r) in gen_m.rows.iter().enumerate() {
        if r.get(7).copied().unwrap_or(1.0) <= 0.0 {
            continue;
        }
        let p_max = r[8] / base;
        let ramp30 = r.get(18).copied().unwrap_or(0.0) / base;
        let ramp = if ramp30 > 0.0 {
            ramp30
        } else if p_max > 0.0 {
            p_max
        } else {
            1.0
        };
        generators.push(Generator {
            id: i + 1,
            bus: r[0] as usize,
            p_min: r[9] / base,
            p_max,
            ramp_up: ramp,
            ramp_down: ramp,
            p_nominal: Some(r[1] / base),
        });
    }
    let explicit_ref = bus_m.rows.iter().find(|r| r.get(1) == Some(&3.0)).map(|r| r[0] as usize);
    let reference = explicit_ref.or_else(|| generators.iter().map(|g| g.bus).min());
    let buses: Vec<Bus> = bus_m
        .rows
        .iter()
        .map(|r| Bus {
            id: r[0] as usize,
            load_by_period: vec![r[2] / base; periods],
            angle_min: -DEFAULT_ANGLE_BOUND,
            angle_max: DEFAULT_ANGLE_BOUND,
            is_reference: Some(r[0] as usize) == reference,
        })
        .collect();
    let unlimited: f64 = generators.iter().map(|g| g.p_max).sum::<f64>()
        + buses.iter().map(|b| b.load_by_period[0].abs()).sum::<f64>();
    let mut lines = Vec::new();
    for (i, r) in branch_m.rows.iter().enumerate() {
        if r.get(10).copied().unwrap_or(1.0) <= 0.0 {
            continue;
        }
        let x = r[3];
        if x == 0.0 {
            return Err(EssrError::ZeroReactance { row: i + 1 });
        }
        let rate = r.get(5).copied().unwrap_or(0.0) / base;
        lines.push(Line {
            id: i + 1,
            from_bus: r[0] as usize,
            to_bus: r[1] as usize,
            susceptance: 1.0 / x.abs(),
            capacity: if rate > 0.0 { rate } else { unlimited },
        });
    }
    Ok(NetworkCase { base_mva: base, horizon: default_horizon(periods), buses, lines, generators })
}

#[cfg(test)]
mod tests {
    use super::*;

    const TINY: &str = "function mpc = tiny\nmpc.version = '2';\nmpc.baseMVA = 100;\n\
        mpc.bus = [\n 1 3 0 0;\n 2 1 50 0;\n];\n\
        mpc.gen = [1 60 0 0 0 1 100 1 200 0];\n\
        mpc.branch = [\n 1 2 0.01 0.1 0 150 0 0 0 0 1; % comment\n];\n";

    #[test]
    fn parses_tiny_case() {
        let c = import_matpower(TINY).unwrap();
        assert_eq!(c.buses.len(), 2);
        assert_eq!(c.lines.len(), 1);
        assert!((c.lines[0].susceptance - 10.0).abs() < 1e-12);
        assert!((c.lines[0].capacity - 1.5).abs() < 1e-12);
        assert!((c.buses[1].load_by_period[2] - 0.5).abs() < 1e-12);
        assert!(c.buses[0].is_reference);
        assert!(c.validate().is_empty());
    }

    #[test]
    fn reports_errors() {
        assert!(matches!(import_matpower(""), Err(EssrError::Syntax { .. })));
        let bad = TINY.replace("0.01 0.1", "0.01 0");
        assert!(matches!(import_matpower(&bad), Err(EssrError::ZeroReactance { row: 1 })));
        let missing = TINY.replace("mpc.gen", "mpc.other");
        assert!(matches!(import_matpower(&missing), Err(EssrError::MissingSection(s)) if s == "gen"));
        let typo = TINY.replace("50 0;", "5x0 0;");
        match import_matpower(&typo) {
            Err(EssrError::Syntax { line, column, .. }) => assert_eq!((line, column), (6, 6)),
            other => panic!("{other:?}"),
        }
    }
}
