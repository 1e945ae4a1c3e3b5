//! Measure files:
//!
//! ```text
//! # comment
//! dim = 2
//! atom: weight=0.5 rotation=1 0 0 1 translation=1 0
//! atom: weight=0.5 rotation=1,0,0,1 translation=-1,0
//! ```
//!
//! Lists may use spaces or commas; an atom may continue on following lines.

use isomwalk::isometry::{Isometry, Rotation};
use isomwalk::measure::AtomicIsometryMeasure;
use isomwalk::{Error, Result};
use nalgebra::{DMatrix, DVector};

/// Weight sums within this distance of 1 are renormalized.
pub const WEIGHT_SUM_TOL: f64 = 1e-9;

#[derive(Default)]
struct Block {
    line: usize,
    fields: Vec<(String, Vec<String>)>,
}

fn err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

fn parse_float(s: &str, line: usize) -> Result<f64> {
    let x: f64 = s.parse().map_err(|_| err(line, format!("not a number: `{s}`")))?;
    if !x.is_finite() {
        return Err(err(line, format!("not finite: `{s}`")));
    }
    Ok(x)
}

fn push_tokens(block: &mut Block, text: &str, line: usize) -> Result<()> {
    for tok in text.split_whitespace() {
        let (key, rest) = match tok.split_once('=') {
            Some((k, r)) => (Some(k), r),
            None => (None, tok),
        };
        if let Some(k) = key {
            if block.fields.iter().any(|(name, _)| name == k) {
                return Err(err(line, format!("field `{k}` given twice")));
            }
            block.fields.push((k.to_string(), Vec::new()));
        }
        let field = block.fields.last_mut().ok_or_else(|| err(line, format!("value `{tok}` before any field")))?;
        field.1.extend(rest.split(',').filter(|s| !s.is_empty()).map(str::to_string));
    }
    Ok(())
}

fn build_atom(block: &Block, d: usize) -> Result<(Isometry, f64)> {
    let line = block.line;
    let get = |name: &str| -> Result<Vec<f64>> {
        let (_, vals) = block.fields.iter().find(|(k, _)| k == name).ok_or_else(|| err(line, format!("atom is missing `{name}`")))?;
        vals.iter().map(|v| parse_float(v, line)).collect()
    };
    if let Some((k, _)) = block.fields.iter().find(|(k, _)| !matches!(k.as_str(), "weight" | "rotation" | "translation")) {
        return Err(err(line, format!("unknown atom field `{k}`")));
    }
    let w = get("weight")?;
    let rot = get("rotation")?;
    let tr = get("translation")?;
    if w.len() != 1 || w[0] <= 0.0 {
        return Err(err(line, "weight must be one positive number"));
    }
    if rot.len() != d * d {
        return Err(err(line, format!("rotation needs {} entries, got {}", d * d, rot.len())));
    }
    if tr.len() != d {
        return Err(err(line, format!("translation needs {d} entries, got {}", tr.len())));
    }
    let theta = Rotation::new(DMatrix::from_row_slice(d, d, &rot)).map_err(|e| err(line, e.to_string()))?;
    Ok((Isometry::new(theta, DVector::from_vec(tr)).map_err(|e| err(line, e.to_string()))?, w[0]))
}

pub fn parse_measure(text: &str) -> Result<AtomicIsometryMeasure> {
    let mut dim: Option<usize> = None;
    let mut blocks: Vec<Block> = Vec::new();
    let mut last_line = 0;
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let s = raw.split('#').next().unwrap_or("").trim();
        if s.is_empty() {
            continue;
        }
        last_line = line;
        if dim.is_none() {
            let (key, value) = s.split_once('=').ok_or_else(|| err(line, "first line must be `dim = <d>`"))?;
            if key.trim() != "dim" {
                return Err(err(line, "first line must be `dim = <d>`"));
            }
            let d: usize = value.trim().parse().map_err(|_| err(line, format!("bad dimension `{}`", value.trim())))?;
            if d == 0 {
                return Err(err(line, "dimension must be positive"));
            }
            dim = Some(d);
            continue;
        }
        if let Some(rest) = s.strip_prefix("atom:") {
            let mut b = Block { line, ..Block::default() };
            push_tokens(&mut b, rest, line)?;
            blocks.push(b);
        } else {
            let b = blocks.last_mut().ok_or_else(|| err(line, format!("expected `atom:`, got `{s}`")))?;
            push_tokens(b, s, line)?;
        }
    }
    let d = dim.ok_or_else(|| err(last_line.max(1), "missing `dim = <d>`"))?;
    if blocks.is_empty() {
        return Err(err(last_line.max(1), "no atoms"));
    }
    let atoms = blocks.iter().map(|b| build_atom(b, d)).collect::<Result<Vec<_>>>()?;
    let total: f64 = atoms.iter().map(|a| a.1).sum();
    if (total - 1.0).abs() > WEIGHT_SUM_TOL {
        return Err(err(blocks.last().unwrap().line, format!("weights sum to {total}, not 1")));
    }
    AtomicIsometryMeasure::normalized(atoms)
}

#[cfg(test)]
pub fn write_measure(mu: &AtomicIsometryMeasure) -> String {
    let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
    let mut out = format!("dim = {}\n", mu.dim());
    for a in mu.atoms() {
        out.push_str(&format!(
            "atom: weight={} rotation={} translation={}\n",
            a.weight,
            join(&a.isometry.theta.row_major()),
            join(a.isometry.v.as_slice())
        ));
    }
    out
}
