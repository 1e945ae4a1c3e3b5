//! Builds the measure and group from a config and dispatches one experiment.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use isomwalk::conditions::{
    check_almost_nondegenerate, check_condition_c, check_condition_e, check_ssr_diagnostic, ConditionReport, Status,
};
use isomwalk::group::{close_finite_group, ergodic_haar, RotationGroupModel};
use isomwalk::isometry::{Isometry, Rotation};
use isomwalk::limits::{
    clt_check_with, consistency_check, fourier_range_check_with, gap_check, haar_options, limit_parameters_with,
    llt_check_with, multiscale_check_with, multiscale_compare, taylor_check, Bump, LimitParameters,
};
use isomwalk::measure::AtomicIsometryMeasure;
use isomwalk::report::{log_log_fit, Table, Verdict, VerificationReport};
use isomwalk::spectral::NormOptions;
use isomwalk::walker::{simulate_checkpoints, write_endpoints, WalkConfig};
use isomwalk::{catalog, Error, Result};
use nalgebra::{DMatrix, DVector};
use serde_json::Value;

use crate::config::{Experiment, ExperimentConfig, GroupKindSpec, MeasureSource, SpectralCheck};
use crate::measure_file::{parse_measure, WEIGHT_SUM_TOL};
use crate::plot::emit_plots;

const CONDITION_TOL: f64 = 1e-9;
const CONDITION_PROBES: usize = 64;
const NONDEGENERATE_K: usize = 4;
const NONDEGENERATE_CAP: usize = 100_000;
/// Standard errors allowed between the sample mean and the exact mean.
const MEAN_Z_MAX: f64 = 5.0;

pub struct Outcome {
    pub report: VerificationReport,
    pub files: Vec<PathBuf>,
}

pub fn load_measure(src: &MeasureSource, base: &Path) -> Result<AtomicIsometryMeasure> {
    match src {
        MeasureSource::Preset(name) => catalog::by_name(name),
        MeasureSource::File(p) => {
            let path = if p.is_absolute() { p.clone() } else { base.join(p) };
            let text = fs::read_to_string(&path).map_err(|e| {
                Error::Io(std::io::Error::new(e.kind(), format!("cannot read measure file {}: {e}", path.display())))
            })?;
            parse_measure(&text).map_err(|e| match e {
                Error::Parse { line, msg } => Error::Parse { line, msg: format!("{}: {msg}", path.display()) },
                other => other,
            })
        }
        MeasureSource::Inline { dim, atoms } => {
            let d = *dim;
            let mut out = Vec::with_capacity(atoms.len());
            for a in atoms {
                if a.rotation.len() != d * d || a.translation.len() != d {
                    return Err(Error::InvalidMeasure(format!(
                        "inline atom needs {} rotation and {d} translation entries, got {} and {}",
                        d * d,
                        a.rotation.len(),
                        a.translation.len()
                    )));
                }
                let theta = Rotation::new(DMatrix::from_row_slice(d, d, &a.rotation))?;
                out.push((Isometry::new(theta, DVector::from_column_slice(&a.translation))?, a.weight));
            }
            let total: f64 = out.iter().map(|a| a.1).sum();
            if (total - 1.0).abs() > WEIGHT_SUM_TOL {
                return Err(Error::InvalidMeasure(format!("inline weights sum to {total}, not 1")));
            }
            AtomicIsometryMeasure::normalized(out)
        }
    }
}

fn parameters(mu: &AtomicIsometryMeasure, cfg: &ExperimentConfig) -> Result<LimitParameters> {
    let g = &cfg.group;
    let seed = haar_options(cfg.seed).seed;
    limit_parameters_with(mu, |gens: &[Rotation]| match g.kind {
        GroupKindSpec::Auto => RotationGroupModel::from_generators(gens, g.max_order, g.word_length, g.samples, seed),
        GroupKindSpec::Finite => close_finite_group(gens, g.max_order),
        GroupKindSpec::Ergodic => ergodic_haar(gens, g.word_length, g.samples, seed),
    })
}

fn start(cfg: &ExperimentConfig, d: usize) -> Vec<f64> {
    cfg.start.clone().unwrap_or_else(|| vec![0.0; d])
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn params_report(mu: &AtomicIsometryMeasure, p: &LimitParameters, seed: u64) -> VerificationReport {
    let mut r = VerificationReport::new("params", seed);
    r.param("dim", mu.dim());
    r.param("atoms", mu.len());
    r.param("symmetric", mu.is_symmetric(1e-12));
    r.param("v0", p.drift.v0.as_slice().to_vec());
    r.param("origin", p.drift.origin.as_slice().to_vec());
    r.param("delta", rows(p.delta.matrix()));
    r.param("delta0", rows(p.delta0.form.matrix()));
    r.param("delta0_eigenvalues", p.delta0.form.eigenvalues().to_vec());
    r.param("delta0_positive_definite", p.delta0.form.is_positive_definite());
    r.param("step_covariance", rows(&p.step_covariance()));
    r.param("group_size", p.group.len());
    r.param("group_finite", p.group.is_finite());
    r
}

fn simulate(mu: &AtomicIsometryMeasure, cfg: &ExperimentConfig, out: &Path, files: &mut Vec<PathBuf>) -> Result<VerificationReport> {
    let d = mu.dim();
    let mut wc = WalkConfig::new(0, cfg.samples, start(cfg, d), cfg.seed).with_moments(&cfg.simulate.moments);
    if cfg.simulate.endpoints {
        wc = wc.storing_endpoints();
    }
    let mut steps = cfg.steps.clone();
    steps.sort_unstable();
    steps.dedup();
    let ens = simulate_checkpoints(mu, &wc, &steps)?;

    let mut r = VerificationReport::new("simulate", cfg.seed);
    r.param("samples", cfg.samples);
    r.param("steps", steps.clone());
    r.param("start", wc.start.clone());
    let mut cols: Vec<String> = vec!["l".into(), "mean_z".into(), "cov_trace_per_step".into()];
    cols.extend((0..d).map(|i| format!("mean_{i}")));
    cols.extend((0..d).map(|i| format!("exact_mean_{i}")));
    let moment_cols: Vec<String> = cfg.simulate.moments.iter().flat_map(|a| [format!("moment_{a}"), format!("moment_{a}_se")]).collect();
    cols.extend(moment_cols.iter().cloned());
    let col_refs: Vec<&str> = cols.iter().map(String::as_str).collect();
    let series: Vec<&str> = cfg.simulate.moments.iter().enumerate().map(|(k, _)| moment_cols[2 * k].as_str()).collect();
    let mut t = Table::new("checkpoints", &col_refs);
    if !series.is_empty() {
        t = t.with_plot("l", &series, true);
    }
    let mut worst_z = 0.0f64;
    for e in &ens {
        let z = (0..d)
            .map(|i| {
                let se = (e.covariance[(i, i)] / e.count as f64).sqrt();
                let diff = (e.mean[i] - e.exact_mean[i]).abs();
                if se > 0.0 {
                    diff / se
                } else if diff > 1e-9 * (1.0 + e.exact_mean[i].abs()) {
                    f64::INFINITY
                } else {
                    0.0
                }
            })
            .fold(0.0, f64::max);
        worst_z = worst_z.max(z);
        let mut row = vec![e.steps as f64, z, e.covariance.trace() / e.steps.max(1) as f64];
        row.extend(e.mean.iter());
        row.extend(e.exact_mean.iter());
        for m in &e.higher_moments {
            row.extend([m.1, m.2]);
        }
        t.push(row);
    }
    for (k, a) in cfg.simulate.moments.iter().enumerate() {
        let x: Vec<f64> = ens.iter().map(|e| e.steps as f64).collect();
        let y: Vec<f64> = ens.iter().map(|e| e.higher_moments[k].1).collect();
        if let Some((slope, _, _)) = log_log_fit(&x, &y) {
            r.fits.insert(format!("moment_{a}_growth_exponent"), slope);
        }
    }
    r.tables.push(t);
    r.check_le("max_mean_z", worst_z, MEAN_Z_MAX);
    if cfg.simulate.endpoints {
        if let Some(last) = ens.last() {
            let path = out.join("endpoints.bin");
            write_endpoints(&path, last)?;
            r.notes.push(format!("endpoints of l = {} written to endpoints.bin", last.steps));
            files.push(path);
        }
    }
    Ok(r)
}

fn spectrum(mu: &AtomicIsometryMeasure, compare: Option<&AtomicIsometryMeasure>, cfg: &ExperimentConfig) -> Result<VerificationReport> {
    let sp = &cfg.spectral;
    let opts = NormOptions { seed: cfg.seed, ..NormOptions::default() };
    match sp.check {
        SpectralCheck::Gap => gap_check(mu, &sp.radii, sp.resolution, compare.map(|c| (c, sp.degenerate_radius)), &opts, cfg.seed),
        SpectralCheck::Taylor => {
            let mut fs = vec![("measure", mu)];
            if let Some(c) = compare {
                fs.push(("compare", c));
            }
            taylor_check(mu, &fs, &sp.radii, sp.resolution, &opts, cfg.seed)
        }
        SpectralCheck::Consistency => {
            let l_max = *cfg.steps.iter().max().ok_or(Error::InvalidParameter { name: "steps", reason: "empty".into() })?;
            consistency_check(mu, &start(cfg, mu.dim()), l_max, &sp.radii, sp.resolution, cfg.samples, cfg.seed)
        }
    }
}

fn status_verdict(s: Status) -> Verdict {
    match s {
        Status::Holds => Verdict::Pass,
        Status::Fails => Verdict::Fail,
        Status::Inconclusive => Verdict::Inconclusive,
    }
}

fn conditions(mu: &AtomicIsometryMeasure, p: &LimitParameters, cfg: &ExperimentConfig) -> Result<VerificationReport> {
    let mut r = VerificationReport::new("conditions", cfg.seed);
    r.param("group_size", p.group.len());
    r.param("group_finite", p.group.is_finite());
    let x0 = DVector::from_vec(start(cfg, mu.dim()));
    let found: Vec<(&str, ConditionReport)> = vec![
        ("condition_c", check_condition_c(mu, CONDITION_TOL)),
        ("condition_e", check_condition_e(mu, &p.group, CONDITION_PROBES, CONDITION_TOL, cfg.seed)?),
        ("ssr_diagnostic", check_ssr_diagnostic(&p.group, CONDITION_TOL, cfg.seed)?),
        ("almost_nondegenerate", check_almost_nondegenerate(mu, &[x0], NONDEGENERATE_K, NONDEGENERATE_CAP)?),
    ];
    for (name, c) in found {
        r.push_check(name, if c.status == Status::Holds { 0.0 } else { 1.0 }, 0.0, status_verdict(c.status));
        let mut detail = format!("{name}: {}", c.detail);
        if !c.witness.is_empty() {
            detail.push_str(&format!(" (witness {:?})", c.witness));
        }
        r.notes.push(detail);
        for (k, v) in c.params {
            r.param(&format!("{name}.{k}"), v);
        }
    }
    Ok(r)
}

fn dispatch(exp: Experiment, cfg: &ExperimentConfig, base: &Path, out: &Path, files: &mut Vec<PathBuf>) -> Result<VerificationReport> {
    let mu = load_measure(&cfg.measure, base)?;
    let compare = cfg.compare.as_ref().map(|c| load_measure(c, base)).transpose()?;
    let d = mu.dim();
    let x0 = start(cfg, d);
    if x0.len() != d {
        return Err(Error::DimensionMismatch { expected: d, found: x0.len() });
    }
    let report = match exp {
        Experiment::Params => params_report(&mu, &parameters(&mu, cfg)?, cfg.seed),
        Experiment::Simulate => simulate(&mu, cfg, out, files)?,
        Experiment::Spectrum => spectrum(&mu, compare.as_ref(), cfg)?,
        Experiment::VerifyClt => clt_check_with(&mu, &parameters(&mu, cfg)?, &x0, &cfg.steps, cfg.samples, cfg.seed)?,
        Experiment::VerifyLlt => {
            let center = cfg.bump.center.clone().unwrap_or_else(|| vec![0.0; d]);
            let bump = Bump::new(center, cfg.bump.radius)?;
            llt_check_with(&mu, &parameters(&mu, cfg)?, &bump, &x0, &cfg.steps, cfg.samples, cfg.seed)?
        }
        Experiment::VerifyMultiscale => match &compare {
            Some(plain) => multiscale_compare(&mu, plain, &cfg.multiscale, &cfg.steps, cfg.samples, cfg.seed)?,
            None => multiscale_check_with(&mu, &parameters(&mu, cfg)?, &cfg.multiscale, &cfg.steps, cfg.samples, cfg.seed)?.0,
        },
        Experiment::VerifyFourier => {
            let l = *cfg.steps.last().ok_or(Error::InvalidParameter { name: "steps", reason: "empty".into() })?;
            fourier_range_check_with(&mu, &parameters(&mu, cfg)?, &x0, l, &cfg.fourier, cfg.samples, cfg.seed)?
        }
        Experiment::Conditions => conditions(&mu, &parameters(&mu, cfg)?, cfg)?,
    };
    Ok(report)
}

/// Report JSON without the wall-clock field, so reruns compare bitwise.
pub fn report_json(report: &VerificationReport) -> Value {
    let mut v = report.to_json();
    if let Value::Object(m) = &mut v {
        m.remove("runtime_ms");
    }
    v
}

/// Runs one experiment and writes report.json, CSVs and SVGs into `out`.
pub fn run(exp: Experiment, cfg: &ExperimentConfig, base: &Path, out: &Path) -> Result<Outcome> {
    let t0 = Instant::now();
    fs::create_dir_all(out)?;
    let mut files = Vec::new();
    let mut report = dispatch(exp, cfg, base, out, &mut files)?;
    report.experiment = exp.as_str().to_string();
    report.seed = cfg.seed;
    report.runtime_ms = t0.elapsed().as_millis() as u64;

    for t in &report.tables {
        let path = out.join(format!("{}.csv", t.name));
        fs::write(&path, t.to_csv())?;
        files.push(path);
    }
    let (plots, notes) = emit_plots(&report);
    report.notes.extend(notes);
    for p in plots {
        let path = out.join(&p.file_name);
        fs::write(&path, p.svg)?;
        files.push(path);
    }
    let path = out.join("report.json");
    fs::write(&path, serde_json::to_string_pretty(&report_json(&report))? + "\n")?;
    files.push(path);
    Ok(Outcome { report, files })
}
