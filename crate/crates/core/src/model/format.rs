//! Line-oriented system file format.
//!
//! ```text
//! # comment
//! [system]
//! n = 2
//! label = example1
//!
//! [constants]
//! rho_max = 3.8
//! nu = 0
//!
//! [matrix]
//! 0, 1
//! -2 - rho1, -1
//!
//! [parameters]
//! N = 1
//! rho1: 0, rho_max
//!
//! [inequalities]
//! rho1*(rho_max - rho1)
//!
//! [equalities]
//!
//! [derivatives]
//! box: -nu, nu
//! ```
//!
//! Sections may come in any order. `[constants]` entries are evaluated in
//! order and may use earlier constants; callers can override them. Interval
//! endpoints are separated by a comma (or whitespace when there is no comma).
//! `[derivatives]` holds either one `box:` line per parameter or any number
//! of `map:` lines with one expression per parameter. Without a
//! `[derivatives]` section parameters are piecewise constant (`box: 0, 0`).

use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::expr::{parse_expr, ExprError};
use super::{sample_parameter_seeded, DerivativeModel, LpvSystem, ModelError, ParameterSet};
use crate::poly::{PolyMatrix, Polynomial, Var};

const SECTIONS: [&str; 7] = [
    "system",
    "constants",
    "matrix",
    "parameters",
    "inequalities",
    "equalities",
    "derivatives",
];

struct Line<'a> {
    no: usize,
    /// Byte offset of `text` within the original line.
    offset: usize,
    text: &'a str,
}

fn syntax(line: &Line, col: usize, msg: impl Into<String>) -> ModelError {
    ModelError::Syntax {
        line: line.no,
        col: line.offset + col,
        msg: msg.into(),
    }
}

fn lift(line: &Line, at: usize, e: ExprError) -> ModelError {
    let col = line.offset + at + e.col;
    match e.unknown {
        Some(name) => ModelError::UnknownVariable {
            line: line.no,
            col,
            name,
        },
        None => ModelError::Syntax {
            line: line.no,
            col,
            msg: e.msg,
        },
    }
}

/// Splits `s` on `sep`, returning each piece with its byte offset.
fn split_at<'a>(s: &'a str, sep: char) -> Vec<(usize, &'a str)> {
    let mut out = Vec::new();
    let mut start = 0;
    for (i, c) in s.char_indices() {
        if c == sep {
            out.push((start, &s[start..i]));
            start = i + c.len_utf8();
        }
    }
    out.push((start, &s[start..]));
    out
}

fn key_value<'a>(line: &Line<'a>) -> Result<(&'a str, usize, &'a str), ModelError> {
    let Some(eq) = line.text.find('=') else {
        return Err(syntax(line, 1, "expected 'key = value'"));
    };
    let value = &line.text[eq + 1..];
    let lead = value.len() - value.trim_start().len();
    Ok((line.text[..eq].trim(), eq + 1 + lead, value.trim()))
}

struct Ctx<'a> {
    constants: &'a BTreeMap<String, f64>,
    nparams: usize,
}

impl Ctx<'_> {
    fn poly(&self, line: &Line, at: usize, text: &str) -> Result<Polynomial, ModelError> {
        let np = self.nparams;
        parse_expr(text, self.constants, &|v: Var| v.rho_index().is_some_and(|i| i < np))
            .map_err(|e| lift(line, at, e))
    }

    fn number(&self, line: &Line, at: usize, text: &str) -> Result<f64, ModelError> {
        let p = parse_expr(text, self.constants, &|_| false).map_err(|e| lift(line, at, e))?;
        p.as_constant().ok_or_else(|| syntax(line, at + 1, "expected a constant"))
    }

    /// `lo, hi` or `lo hi`.
    fn interval(&self, line: &Line, at: usize, text: &str) -> Result<(f64, f64), ModelError> {
        let parts: Vec<(usize, &str)> = if text.contains(',') {
            split_at(text, ',')
        } else {
            let mut v = Vec::new();
            let mut idx = 0;
            for piece in text.split_whitespace() {
                let off = text[idx..].find(piece).unwrap_or(0) + idx;
                v.push((off, piece));
                idx = off + piece.len();
            }
            v
        };
        if parts.len() != 2 {
            return Err(syntax(line, at + 1, "expected two interval endpoints"));
        }
        let lo = self.number(line, at + parts[0].0, parts[0].1)?;
        let hi = self.number(line, at + parts[1].0, parts[1].1)?;
        Ok((lo, hi))
    }
}

pub fn parse_system(text: &str) -> Result<LpvSystem, ModelError> {
    parse_system_with(text, &BTreeMap::new())
}

/// Parses a system file; entries of `overrides` replace (or add) named constants.
pub fn parse_system_with(text: &str, overrides: &BTreeMap<String, f64>) -> Result<LpvSystem, ModelError> {
    let mut sections: BTreeMap<&str, Vec<Line>> = BTreeMap::new();
    let mut current: Option<&str> = None;
    for (no, raw) in text.lines().enumerate() {
        let no = no + 1;
        let body = raw.split('#').next().unwrap_or("");
        let trimmed = body.trim();
        if trimmed.is_empty() {
            continue;
        }
        let offset = body.len() - body.trim_start().len();
        if let Some(name) = trimmed.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            let name = name.trim();
            let Some(&known) = SECTIONS.iter().find(|s| **s == name) else {
                return Err(ModelError::Syntax {
                    line: no,
                    col: offset + 1,
                    msg: format!("unknown section '{name}'"),
                });
            };
            if sections.contains_key(known) {
                return Err(ModelError::Syntax {
                    line: no,
                    col: offset + 1,
                    msg: format!("duplicate section '{name}'"),
                });
            }
            sections.insert(known, Vec::new());
            current = Some(known);
            continue;
        }
        let Some(sec) = current else {
            return Err(ModelError::Syntax {
                line: no,
                col: offset + 1,
                msg: "content before the first section".into(),
            });
        };
        sections.get_mut(sec).expect("section exists").push(Line {
            no,
            offset,
            text: trimmed,
        });
    }
    let empty = Vec::new();
    let get = |name: &str| sections.get(name).unwrap_or(&empty);

    // constants
    let mut constants: BTreeMap<String, f64> = BTreeMap::new();
    for line in get("constants") {
        let (key, at, value) = key_value(line)?;
        if key.is_empty() || Var::parse(key).is_some() || !key.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
            return Err(syntax(line, 1, format!("invalid constant name '{key}'")));
        }
        let v = match overrides.get(key) {
            Some(&v) => v,
            None => Ctx {
                constants: &constants,
                nparams: 0,
            }
            .number(line, at, value)?,
        };
        constants.insert(key.to_string(), v);
    }
    for (k, &v) in overrides {
        constants.insert(k.clone(), v);
    }

    // system
    let mut n: Option<usize> = None;
    let mut label = String::new();
    for line in get("system") {
        let (key, at, value) = key_value(line)?;
        match key {
            "n" => n = Some(value.parse().map_err(|_| syntax(line, at + 1, "n must be a positive integer"))?),
            "label" => label = value.to_string(),
            _ => return Err(syntax(line, 1, format!("unknown key '{key}'"))),
        }
    }
    let n = n.ok_or_else(|| ModelError::Invalid("[system] must set n".into()))?;

    // parameters
    let mut nparams: Option<usize> = None;
    let mut box_hull: Vec<Option<(f64, f64)>> = Vec::new();
    let ctx0 = Ctx {
        constants: &constants,
        nparams: 0,
    };
    for line in get("parameters") {
        if let Some(colon) = line.text.find(':') {
            let name = line.text[..colon].trim();
            let Some(i) = Var::parse(name).and_then(Var::rho_index) else {
                return Err(syntax(line, 1, format!("expected a parameter name, got '{name}'")));
            };
            let np = nparams.ok_or_else(|| syntax(line, 1, "N must be set before intervals"))?;
            if i >= np {
                return Err(ModelError::Dimension(format!("{name} exceeds N = {np}")));
            }
            let body = &line.text[colon + 1..];
            box_hull[i] = Some(ctx0.interval(line, colon + 1, body)?);
        } else {
            let (key, at, value) = key_value(line)?;
            if key != "N" {
                return Err(syntax(line, 1, format!("unknown key '{key}'")));
            }
            let np: usize = value.parse().map_err(|_| syntax(line, at + 1, "N must be an integer"))?;
            nparams = Some(np);
            box_hull = vec![None; np];
        }
    }
    let nparams = nparams.unwrap_or(0);
    let box_hull: Vec<(f64, f64)> = box_hull
        .into_iter()
        .enumerate()
        .map(|(i, b)| b.ok_or_else(|| ModelError::Invalid(format!("missing interval for rho{}", i + 1))))
        .collect::<Result<_, _>>()?;
    let ctx = Ctx {
        constants: &constants,
        nparams,
    };

    // matrix
    let rows = get("matrix");
    if rows.len() != n {
        return Err(ModelError::Dimension(format!("[matrix] has {} rows, expected {n}", rows.len())));
    }
    let mut entries = Vec::with_capacity(n);
    for line in rows {
        let cells = split_at(line.text, ',');
        if cells.len() != n {
            return Err(ModelError::Dimension(format!(
                "line {}: {} columns, expected {n}",
                line.no,
                cells.len()
            )));
        }
        let row = cells
            .into_iter()
            .map(|(off, cell)| ctx.poly(line, off, cell))
            .collect::<Result<Vec<_>, _>>()?;
        entries.push(row);
    }
    let a = PolyMatrix::from_rows(entries).map_err(|e| ModelError::Dimension(e.to_string()))?;

    let polys = |name: &str| -> Result<Vec<Polynomial>, ModelError> {
        get(name).iter().map(|l| ctx.poly(l, 0, l.text)).collect()
    };
    let inequalities = polys("inequalities")?;
    let equalities = polys("equalities")?;

    // derivatives
    let mut boxes = Vec::new();
    let mut maps = Vec::new();
    for line in get("derivatives") {
        let Some(colon) = line.text.find(':') else {
            return Err(syntax(line, 1, "expected 'box:' or 'map:'"));
        };
        let body = &line.text[colon + 1..];
        match line.text[..colon].trim() {
            "box" => boxes.push(ctx.interval(line, colon + 1, body)?),
            "map" => {
                let comps = split_at(body, ',')
                    .into_iter()
                    .map(|(off, e)| ctx.poly(line, colon + 1 + off, e))
                    .collect::<Result<Vec<_>, _>>()?;
                maps.push(comps);
            }
            other => return Err(syntax(line, 1, format!("unknown derivative kind '{other}'"))),
        }
    }
    let derivs = match (boxes.is_empty(), maps.is_empty()) {
        (true, true) => DerivativeModel::Box(vec![(0.0, 0.0); nparams]),
        (false, true) => DerivativeModel::Box(boxes),
        (true, false) => DerivativeModel::Maps(maps),
        (false, false) => return Err(ModelError::Invalid("mixing box and map derivatives".into())),
    };

    let sys = LpvSystem {
        label,
        n,
        a,
        params: ParameterSet {
            inequalities,
            equalities,
            box_hull,
        },
        derivs,
        constants,
    };
    sys.validate()?;
    if nparams > 0 {
        sample_parameter_seeded(&sys.params, 0)?;
    }
    Ok(sys)
}

/// Writes a system in the file format with all constants already applied.
pub fn print_system(sys: &LpvSystem) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "[system]\nn = {}", sys.n);
    if !sys.label.is_empty() {
        let _ = writeln!(s, "label = {}", sys.label);
    }
    if !sys.constants.is_empty() {
        let _ = writeln!(s, "\n[constants]");
        for (k, v) in &sys.constants {
            let _ = writeln!(s, "{k} = {v:?}");
        }
    }
    let _ = writeln!(s, "\n[matrix]");
    for i in 0..sys.n {
        let row: Vec<String> = (0..sys.n).map(|j| sys.a.get(i, j).to_string()).collect();
        let _ = writeln!(s, "{}", row.join(", "));
    }
    let _ = writeln!(s, "\n[parameters]\nN = {}", sys.num_params());
    for (i, (lo, hi)) in sys.params.box_hull.iter().enumerate() {
        let _ = writeln!(s, "rho{}: {lo:?}, {hi:?}", i + 1);
    }
    if !sys.params.inequalities.is_empty() {
        let _ = writeln!(s, "\n[inequalities]");
        for g in &sys.params.inequalities {
            let _ = writeln!(s, "{g}");
        }
    }
    if !sys.params.equalities.is_empty() {
        let _ = writeln!(s, "\n[equalities]");
        for h in &sys.params.equalities {
            let _ = writeln!(s, "{h}");
        }
    }
    let _ = writeln!(s, "\n[derivatives]");
    match &sys.derivs {
        DerivativeModel::Box(iv) => {
            for (lo, hi) in iv {
                let _ = writeln!(s, "box: {lo:?}, {hi:?}");
            }
        }
        DerivativeModel::Maps(maps) => {
            for m in maps {
                let comps: Vec<String> = m.iter().map(|p| p.to_string()).collect();
                let _ = writeln!(s, "map: {}", comps.join(", "));
            }
        }
    }
    s
}
