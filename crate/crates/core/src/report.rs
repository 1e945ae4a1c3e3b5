//! Verdicts and verification reports shared by the checks and the CLI.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

impl Verdict {
    /// Fail dominates inconclusive, which dominates pass.
    pub fn combine(self, other: Verdict) -> Verdict {
        use Verdict::*;
        match (self, other) {
            (Fail, _) | (_, Fail) => Fail,
            (Inconclusive, _) | (_, Inconclusive) => Inconclusive,
            _ => Pass,
        }
    }

    pub fn from_bool(ok: bool) -> Verdict {
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::Inconclusive => "inconclusive",
        }
    }
}

/// One numeric comparison: `observed` against `threshold`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub observed: f64,
    pub threshold: f64,
    pub verdict: Verdict,
}

/// Which columns to draw and whether to use log–log axes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlotSpec {
    pub x: String,
    pub series: Vec<String>,
    pub log_log: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub plot: Option<PlotSpec>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Table { name: name.into(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new(), plot: None }
    }

    pub fn with_plot(mut self, x: &str, series: &[&str], log_log: bool) -> Self {
        self.plot = Some(PlotSpec { x: x.into(), series: series.iter().map(|s| s.to_string()).collect(), log_log });
        self
    }

    pub fn push(&mut self, row: Vec<f64>) {
        assert_eq!(row.len(), self.columns.len(), "row width");
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let idx = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[idx]).collect())
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|x| format!("{x:?}")).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub experiment: String,
    pub params: BTreeMap<String, Value>,
    pub tables: Vec<Table>,
    pub fits: BTreeMap<String, f64>,
    pub checks: Vec<Check>,
    pub notes: Vec<String>,
    pub verdict: Verdict,
    pub seed: u64,
    pub runtime_ms: u64,
}

impl VerificationReport {
    pub fn new(experiment: &str, seed: u64) -> Self {
        VerificationReport {
            experiment: experiment.into(),
            params: BTreeMap::new(),
            tables: Vec::new(),
            fits: BTreeMap::new(),
            checks: Vec::new(),
            notes: Vec::new(),
            verdict: Verdict::Pass,
            seed,
            runtime_ms: 0,
        }
    }

    pub fn param(&mut self, key: &str, value: impl Into<Value>) {
        self.params.insert(key.into(), value.into());
    }

    /// Records `observed <= threshold` as a check.
    pub fn check_le(&mut self, name: &str, observed: f64, threshold: f64) -> Verdict {
        let v = Verdict::from_bool(observed <= threshold);
        self.push_check(name, observed, threshold, v)
    }

    pub fn push_check(&mut self, name: &str, observed: f64, threshold: f64, verdict: Verdict) -> Verdict {
        self.checks.push(Check { name: name.into(), observed, threshold, verdict });
        self.verdict = self.verdict.combine(verdict);
        verdict
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// JSON with `rows` flattened over all tables (each row tagged with its table).
    pub fn to_json(&self) -> Value {
        let rows: Vec<Value> = self
            .tables
            .iter()
            .flat_map(|t| {
                t.rows.iter().map(move |r| {
                    let mut obj = serde_json::Map::new();
                    obj.insert("table".into(), json!(t.name));
                    for (c, x) in t.columns.iter().zip(r) {
                        obj.insert(c.clone(), json_number(*x));
                    }
                    Value::Object(obj)
                })
            })
            .collect();
        let checks: Vec<Value> = self
            .checks
            .iter()
            .map(|c| {
                json!({
                    "name": c.name,
                    "observed": json_number(c.observed),
                    "threshold": json_number(c.threshold),
                    "verdict": c.verdict,
                })
            })
            .collect();
        let fits: serde_json::Map<String, Value> = self.fits.iter().map(|(k, v)| (k.clone(), json_number(*v))).collect();
        json!({
            "experiment": self.experiment,
            "params": self.params,
            "rows": rows,
            "fits": fits,
            "checks": checks,
            "notes": self.notes,
            "verdict": self.verdict,
            "seed": self.seed,
            "runtime_ms": self.runtime_ms,
        })
    }

    /// Human-readable summary.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "experiment {}  seed {}  verdict {}", self.experiment, self.seed, self.verdict.as_str());
        for (k, v) in &self.params {
            let _ = writeln!(out, "param {k} = {v}");
        }
        for t in &self.tables {
            let _ = writeln!(out, "[{}]", t.name);
            let widths: Vec<usize> = t.columns.iter().map(|c| c.len().max(13) + 1).collect();
            let _ = writeln!(out, "  {}", t.columns.iter().zip(&widths).map(|(c, w)| format!("{c:>w$}")).collect::<String>());
            for r in &t.rows {
                let _ = writeln!(out, "  {}", r.iter().zip(&widths).map(|(x, w)| format!("{:>w$}", fmt_num(*x))).collect::<String>());
            }
        }
        for (k, v) in &self.fits {
            let _ = writeln!(out, "fit {k} = {}", fmt_num(*v));
        }
        for c in &self.checks {
            let _ = writeln!(
                out,
                "check {:<40} {:>12} vs {:>12}  {}",
                c.name,
                fmt_num(c.observed),
                fmt_num(c.threshold),
                c.verdict.as_str()
            );
        }
        for n in &self.notes {
            let _ = writeln!(out, "note: {n}");
        }
        out
    }
}

/// JSON has no NaN or infinity; those become strings.
fn json_number(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        json!(format!("{x}"))
    }
}

fn fmt_num(x: f64) -> String {
    if x == 0.0 || (1e-3..1e6).contains(&x.abs()) {
        format!("{x:.6}")
    } else {
        format!("{x:.4e}")
    }
}

/// Least-squares slope and R² of log y against log x over positive pairs.
pub fn log_log_fit(x: &[f64], y: &[f64]) -> Option<(f64, f64, f64)> {
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0 && a.is_finite() && b.is_finite())
        .map(|(a, b)| (a.ln(), b.ln()))
        .collect();
    linear_fit(&pts)
}

/// (slope, intercept, R²) of an ordinary least-squares line; None below two points.
pub fn linear_fit(pts: &[(f64, f64)]) -> Option<(f64, f64, f64)> {
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Some((slope, my - slope * mx, r2))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verdicts_combine() {
        use Verdict::*;
        assert_eq!(Pass.combine(Inconclusive), Inconclusive);
        assert_eq!(Inconclusive.combine(Fail), Fail);
        assert_eq!(Pass.combine(Pass), Pass);
    }

    #[test]
    fn exact_power_law_fit() {
        let x = [1.0, 2.0, 4.0, 8.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(1.5)).collect();
        let (s, _, r2) = log_log_fit(&x, &y).unwrap();
        assert!((s - 1.5).abs() < 1e-12);
        assert!((r2 - 1.0).abs() < 1e-12);
        assert!(log_log_fit(&[1.0], &[1.0]).is_none());
    }

    #[test]
    fn report_serialization() {
        let mut r = VerificationReport::new("demo", 7);
        let mut t = Table::new("main", &["l", "value"]);
        t.push(vec![1.0, f64::NAN]);
        r.tables.push(t);
        r.check_le("err", 0.1, 0.05);
        let j = r.to_json();
        assert_eq!(j["verdict"], "fail");
        assert_eq!(j["rows"][0]["table"], "main");
        assert_eq!(j["rows"][0]["value"], "NaN");
        assert!(r.tables[0].to_csv().starts_with("l,value\n1.0,NaN"));
    }
}
