//! Fourier-side checks: the exact/operator/Monte Carlo consistency triangle,
//! small-r Taylor structure of S_r and F, and the spectral gap probe.

use std::sync::Arc;
use std::time::Instant;

use serde_json::json;

use super::checks::{charfn_stream, haar_options, matrix_rows};
use super::form::limit_parameters;
use crate::error::{check_dim, Error, Result};
use crate::measure::AtomicIsometryMeasure;
use crate::report::{log_log_fit, Table, Verdict, VerificationReport};
use crate::rng;
use crate::spectral::{
    block_norm, build_projectors, f_at_points, point_mass_field, propagate, restrict_points, spectral_gap_probe, NormOptions,
    SphereGrid, Subspace,
};
use crate::walker::{exact_distribution, DEFAULT_EXACT_CAP};

fn finish(mut report: VerificationReport, t0: Instant) -> VerificationReport {
    report.runtime_ms = t0.elapsed().as_millis() as u64;
    report
}

/// `count` radii spaced evenly in log between `lo` and `hi`.
pub fn log_spaced(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count < 2 {
        return vec![lo];
    }
    (0..count).map(|k| (lo.ln() + (hi.ln() - lo.ln()) * k as f64 / (count - 1) as f64).exp()).collect()
}

fn probe_nodes(grid: &SphereGrid, count: usize) -> Vec<usize> {
    let step = (grid.len() / count.max(1)).max(1);
    (0..grid.len()).step_by(step).take(count).collect()
}

/// Res_r of the exact law against l applications of S_r, and both against
/// the Monte Carlo characteristic function at a few nodes.
pub fn consistency_check(
    mu: &AtomicIsometryMeasure,
    x0: &[f64],
    l_max: usize,
    r_list: &[f64],
    resolution: usize,
    n: usize,
    seed: u64,
) -> Result<VerificationReport> {
    let t0 = Instant::now();
    check_dim(mu.dim(), x0.len())?;
    if l_max == 0 || r_list.is_empty() {
        return Err(Error::InvalidParameter { name: "l_max", reason: "need l_max ≥ 1 and at least one radius".into() });
    }
    let grid = Arc::new(SphereGrid::new(mu.dim(), resolution)?);
    let mut report = VerificationReport::new("consistency", seed);
    report.param("dim", mu.dim());
    report.param("atoms", mu.len());
    report.param("x0", x0.to_vec());
    report.param("l_max", l_max);
    report.param("radii", r_list.to_vec());
    report.param("grid_nodes", grid.len());
    report.param("samples", n);

    let nodes = probe_nodes(&grid, 16);
    let mut table = Table::new("consistency", &["l", "r", "l2_distance", "max_residual", "max_z_exact", "max_z_operator"]);
    let (mut worst_dist, mut worst_z) = (0.0f64, 0.0f64);
    for &r in r_list {
        let psi0 = point_mass_field(x0, r, grid.clone())?;
        let freqs: Vec<Vec<f64>> = nodes.iter().map(|&i| grid.node(i).iter().map(|u| u * r).collect()).collect();
        for l in 1..=l_max {
            let law = exact_distribution(mu, x0, l, DEFAULT_EXACT_CAP)?;
            let exact = restrict_points(&law, r, grid.clone());
            let prop = propagate(mu, r, &psi0, l, false)?;
            let dist = exact.distance(&prop.field);
            let (mut z_exact, mut z_op) = (0.0f64, 0.0f64);
            if n > 0 {
                let est = charfn_stream(mu, x0, l, &freqs, n, rng::derive_seed(seed, (l as u64) << 8 | freqs.len() as u64))?;
                for (e, &i) in est.iter().zip(&nodes) {
                    let se = e.standard_error.max(f64::MIN_POSITIVE);
                    z_exact = z_exact.max((e.value - exact.values[i]).norm() / se);
                    z_op = z_op.max((e.value - prop.field.values[i]).norm() / se);
                }
            }
            worst_dist = worst_dist.max(dist);
            worst_z = worst_z.max(z_exact).max(z_op);
            table.push(vec![l as f64, r, dist, prop.max_residual, z_exact, z_op]);
        }
    }
    report.tables.push(table);
    report.check_le("max_l2_distance", worst_dist, 1e-8);
    if n > 0 {
        report.check_le("max_mc_z", worst_z, 4.0);
    }
    Ok(finish(report, t0))
}

/// Block norms ‖P_j S_r P_i‖ and the F expansion error against r.
///
/// `block_mu` drives the projector blocks; each entry of `f_measures` gets
/// its own max_ξ |F(rξ) − (1 − r²Δ(ξ,ξ))| series. Symmetric measures are
/// held to the faster rate.
pub fn taylor_check(
    block_mu: &AtomicIsometryMeasure,
    f_measures: &[(&str, &AtomicIsometryMeasure)],
    r_list: &[f64],
    resolution: usize,
    opts: &NormOptions,
    seed: u64,
) -> Result<VerificationReport> {
    let t0 = Instant::now();
    if r_list.len() < 2 {
        return Err(Error::InvalidParameter { name: "r_grid", reason: "need at least two radii for a slope".into() });
    }
    let mut report = VerificationReport::new("taylor", seed);
    report.param("radii", r_list.to_vec());
    let params = limit_parameters(block_mu, &haar_options(seed))?;
    let mu = &params.drift.centered;
    let grid = Arc::new(SphereGrid::new(mu.dim(), resolution)?);
    report.param("grid_nodes", grid.len());
    let proj = build_projectors(grid.clone(), &params.group)?;
    let dims = proj.dims();
    report.param("subspace_dims", dims.to_vec());

    let pairs: Vec<(usize, usize)> =
        (0..4).flat_map(|i| (0..4).map(move |j| (i, j))).filter(|&(i, j)| i != j && dims[i] > 0 && dims[j] > 0).collect();
    let mut names: Vec<String> = vec!["r".into()];
    names.extend(pairs.iter().map(|(i, j)| format!("P{j}SP{i}")));
    names.push("deficit_P0SP0".into());
    let refs: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
    let series: Vec<&str> = refs[1..].to_vec();
    let mut blocks = Table::new("blocks", &refs).with_plot("r", &series, true);
    let mut unconverged = 0;
    for &r in r_list {
        let op = crate::spectral::StepOperator::new(mu, r, grid.clone())?;
        let mut row = vec![r];
        for &(i, j) in &pairs {
            let est = block_norm(&op, &proj, Subspace::H(j), Subspace::H(i), opts);
            unconverged += !est.converged as usize;
            row.push(est.value);
        }
        let est = block_norm(&op, &proj, Subspace::H(0), Subspace::H(0), opts);
        unconverged += !est.converged as usize;
        row.push(1.0 - est.value);
        blocks.push(row);
    }
    for (k, &(i, j)) in pairs.iter().enumerate() {
        let y = blocks.rows.iter().map(|row| row[k + 1]).collect::<Vec<_>>();
        let slope = log_log_fit(r_list, &y).map(|f| f.0).unwrap_or(f64::NAN);
        let want = if (i, j) == (0, 1) { 2.0 } else { i.abs_diff(j) as f64 };
        let name = format!("slope_P{j}SP{i}");
        report.fits.insert(name.clone(), slope);
        report.push_check(&name, slope, want - 0.2, Verdict::from_bool(slope >= want - 0.2));
    }
    let deficit: Vec<f64> = blocks.rows.iter().map(|row| *row.last().unwrap()).collect();
    let s = log_log_fit(r_list, &deficit).map(|f| f.0).unwrap_or(f64::NAN);
    report.fits.insert("slope_deficit_P0SP0".into(), s);
    report.check_le("slope_deficit_P0SP0_minus_2", (s - 2.0).abs(), 0.2);
    report.tables.push(blocks);
    if unconverged > 0 {
        report.notes.push(format!("{unconverged} norm estimates hit the iteration limit"));
    }

    if !f_measures.is_empty() {
        let directions = probe_nodes(&grid, 64).into_iter().map(|i| grid.node(i).to_vec()).collect::<Vec<_>>();
        let mut names: Vec<String> = vec!["r".into()];
        names.extend(f_measures.iter().map(|(name, _)| format!("err_{name}")));
        let refs: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
        let series: Vec<&str> = refs[1..].to_vec();
        let mut table = Table::new("multiplier", &refs).with_plot("r", &series, true);
        let mut cols = Vec::new();
        for (k, (name, m)) in f_measures.iter().enumerate() {
            let p = limit_parameters(m, &haar_options(rng::derive_seed(seed, k as u64 + 1)))?;
            let c = &p.drift.centered;
            check_dim(grid.dim(), c.dim())?;
            report.param(&format!("delta_{name}"), matrix_rows(p.delta.matrix()));
            let mut errs = Vec::new();
            for &r in r_list {
                let vals = f_at_points(c, &p.group, r, &directions)?;
                let err = vals
                    .iter()
                    .zip(&directions)
                    .map(|(v, xi)| (v - (1.0 - r * r * p.delta.eval(xi))).norm())
                    .fold(0.0, f64::max);
                errs.push(err);
            }
            let slope = log_log_fit(r_list, &errs).map(|f| f.0).unwrap_or(f64::NAN);
            let want = if c.is_symmetric(1e-9) { 4.0 } else { 3.0 };
            let check = format!("slope_F_{name}");
            report.fits.insert(check.clone(), slope);
            report.push_check(&check, slope, want - 0.2, Verdict::from_bool(slope >= want - 0.2));
            cols.push(errs);
        }
        for (k, &r) in r_list.iter().enumerate() {
            let mut row = vec![r];
            row.extend(cols.iter().map(|c| c[k]));
            table.push(row);
        }
        report.tables.push(table);
    }
    Ok(finish(report, t0))
}

/// ‖S_r‖ ≤ 1 − ĉr²/4 across `r_list` for `mu`, and, when given, ‖S_r‖ = 1
/// for a degenerate measure at a radius where its walk is periodic.
pub fn gap_check(
    mu: &AtomicIsometryMeasure,
    r_list: &[f64],
    resolution: usize,
    degenerate: Option<(&AtomicIsometryMeasure, f64)>,
    opts: &NormOptions,
    seed: u64,
) -> Result<VerificationReport> {
    let t0 = Instant::now();
    if r_list.len() < 2 {
        return Err(Error::InvalidParameter { name: "r_grid", reason: "need at least two radii for a fit".into() });
    }
    let grid = Arc::new(SphereGrid::new(mu.dim(), resolution)?);
    let mut report = VerificationReport::new("spectrum", seed);
    report.param("dim", mu.dim());
    report.param("atoms", mu.len());
    report.param("radii", r_list.to_vec());
    report.param("grid_nodes", grid.len());
    let rows = spectral_gap_probe(mu, r_list, grid.clone(), opts)?;
    let mut table = Table::new("gap", &["r", "norm", "deficit", "converged", "iterations", "band_residual"])
        .with_plot("r", &["deficit"], true);
    let mut unconverged = 0;
    for g in &rows {
        unconverged += !g.norm.converged as usize;
        table.push(vec![g.r, g.norm.value, 1.0 - g.norm.value, g.norm.converged as u8 as f64, g.norm.iterations as f64, g.norm.band_residual]);
    }
    let deficits: Vec<f64> = rows.iter().map(|g| 1.0 - g.norm.value).collect();
    report.tables.push(table);
    let fit = log_log_fit(r_list, &deficits);
    let positive = deficits.iter().all(|&d| d > 0.0);
    let c_hat = if positive {
        (r_list.iter().zip(&deficits).map(|(r, d)| (d / (r * r)).ln()).sum::<f64>() / r_list.len() as f64).exp()
    } else {
        0.0
    };
    report.fits.insert("c_hat".into(), c_hat);
    if let Some((slope, _, r2)) = fit {
        report.fits.insert("slope".into(), slope);
        report.fits.insert("r2".into(), r2);
    }
    report.push_check("c_hat_positive", c_hat, 0.0, Verdict::from_bool(c_hat > 0.0));
    let r2 = fit.map(|f| f.2).unwrap_or(0.0);
    report.push_check("fit_r2", r2, 0.9, Verdict::from_bool(positive && r2 >= 0.9));
    let ratio = r_list.iter().zip(&deficits).map(|(r, d)| d / (c_hat * r * r)).fold(f64::INFINITY, f64::min);
    report.push_check("min_deficit_over_c_hat_r2", ratio, 0.25, Verdict::from_bool(c_hat > 0.0 && ratio >= 0.25));
    if unconverged > 0 {
        report.notes.push(format!("{unconverged} norm estimates hit the iteration limit"));
        report.push_check("norm_estimates_converged", unconverged as f64, 0.0, Verdict::Inconclusive);
    }

    if let Some((deg, r)) = degenerate {
        let dgrid = Arc::new(SphereGrid::new(deg.dim(), resolution)?);
        let est = spectral_gap_probe(deg, &[r], dgrid, opts)?.remove(0);
        report.param("degenerate", json!({"atoms": deg.len(), "r": r}));
        let mut t = Table::new("degenerate", &["r", "norm", "converged"]);
        t.push(vec![r, est.norm.value, est.norm.converged as u8 as f64]);
        report.tables.push(t);
        report.check_le("degenerate_norm_minus_1", (est.norm.value - 1.0).abs(), 1e-6);
    }
    Ok(finish(report, t0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use crate::spectral::{norm_decay, SphericalField, StepOperator};

    #[test]
    fn log_spacing() {
        let r = log_spaced(1e-3, 1e-1, 5);
        assert!((r[0] - 1e-3).abs() < 1e-15 && (r[4] - 0.1).abs() < 1e-15);
        assert!((r[2] - 1e-2).abs() < 1e-15);
    }

    #[test]
    fn consistency_without_sampling() {
        let r = consistency_check(&catalog::rotation_rich(), &[0.3, -0.2], 3, &[0.05, 1.0], 256, 0, 1).unwrap();
        assert_eq!(r.verdict, Verdict::Pass, "{}", r.summary());
    }

    #[test]
    fn gap_present_and_absent() {
        let r = gap_check(
            &catalog::rotation_rich(),
            &log_spaced(0.02, 0.2, 5),
            128,
            Some((&catalog::line_lattice(), 1.0)),
            &NormOptions::default(),
            4,
        )
        .unwrap();
        assert_eq!(r.verdict, Verdict::Pass, "{}", r.summary());
    }

    #[test]
    fn high_frequency_decay() {
        let grid = Arc::new(SphereGrid::new(2, 256).unwrap());
        let op = StepOperator::new(&catalog::rotation_rich(), 1.0, grid.clone()).unwrap();
        let psi = SphericalField::random_band_limited(grid, 3);
        let norms = norm_decay(&op, &psi, 200);
        assert!(norms[200] < (-1.0f64).exp() * norms[0], "{}", norms[200] / norms[0]);
        assert!(norms.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
    }
}
