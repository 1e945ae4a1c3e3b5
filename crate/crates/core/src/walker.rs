//! Monte Carlo simulation of Y_{k+1} = X_{k+1}(Y_k) and an exact enumeration
//! oracle for short walks.
//!
//! Samples are processed in fixed chunks of [`CHUNK`] consecutive indices,
//! each drawing from its own stream keyed by `(seed, sample index)`. Chunk
//! results are merged in index order, so aggregates are bitwise identical for
//! any number of worker threads.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::measure::{merge_by_key, AtomicIsometryMeasure, MERGE_TOL};
use crate::report::log_log_fit;
use crate::rng;

pub const CHUNK: usize = 1024;
pub const MAX_STEPS: usize = 10_000_000;
pub const MAX_SAMPLES: usize = 1_000_000_000;
/// Cap on samples × steps for one run.
pub const MAX_WORK: u128 = 1_000_000_000_000;
pub const DEFAULT_EXACT_CAP: usize = 5_000_000;

const DUMP_MAGIC: &[u8; 4] = b"IWLK";
const DUMP_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WalkConfig {
    pub steps: usize,
    pub samples: usize,
    pub start: Vec<f64>,
    pub seed: u64,
    pub store_endpoints: bool,
    /// Orders α of E|Y_l − E Y_l|^α to accumulate.
    pub moment_orders: Vec<f64>,
}

impl WalkConfig {
    pub fn new(steps: usize, samples: usize, start: Vec<f64>, seed: u64) -> Self {
        WalkConfig { steps, samples, start, seed, store_endpoints: false, moment_orders: Vec::new() }
    }

    pub fn storing_endpoints(mut self) -> Self {
        self.store_endpoints = true;
        self
    }

    pub fn with_moments(mut self, orders: &[f64]) -> Self {
        self.moment_orders = orders.to_vec();
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WalkEnsemble {
    pub dim: usize,
    pub count: usize,
    pub steps: usize,
    pub mean: DVector<f64>,
    /// Sample covariance (normalized by N).
    pub covariance: DMatrix<f64>,
    /// E Y_l computed exactly from the affine mean recursion.
    pub exact_mean: DVector<f64>,
    /// α → (mean, standard error) of |Y_l − E Y_l|^α.
    pub higher_moments: Vec<(f64, f64, f64)>,
    /// Row-major N × d when stored.
    pub endpoints: Option<Vec<f64>>,
}

impl WalkEnsemble {
    /// Raw second moment E[Y Yᵀ].
    pub fn second_moment(&self) -> DMatrix<f64> {
        &self.covariance + &self.mean * self.mean.transpose()
    }

    pub fn endpoint(&self, i: usize) -> Option<&[f64]> {
        self.endpoints.as_ref().map(|e| &e[i * self.dim..(i + 1) * self.dim])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CharFnEstimate {
    pub value: Complex64,
    /// sqrt(Var(re) + Var(im)) / √N.
    pub standard_error: f64,
    pub se_re: f64,
    pub se_im: f64,
}

/// Flat copy of a measure for the inner loop; atoms are chosen by comparing
/// 32-bit uniforms against cumulative thresholds scaled by 2^32.
pub(crate) struct Compiled {
    d: usize,
    rot: Vec<f64>,
    trans: Vec<f64>,
    thresholds: Vec<u64>,
    translations_only: bool,
}

impl Compiled {
    pub(crate) fn new(mu: &AtomicIsometryMeasure) -> Self {
        let d = mu.dim();
        let mut rot = Vec::with_capacity(mu.len() * d * d);
        let mut trans = Vec::with_capacity(mu.len() * d);
        let mut thresholds = Vec::with_capacity(mu.len());
        let mut cum = 0.0;
        let scale = (1u64 << 32) as f64;
        for a in mu.atoms() {
            rot.extend(a.isometry.theta.row_major());
            trans.extend(a.isometry.v.iter());
            cum += a.weight;
            thresholds.push(((cum * scale).round() as u64).min(1 << 32));
        }
        *thresholds.last_mut().expect("non-empty measure") = 1 << 32;
        let translations_only = mu.atoms().iter().all(|a| a.isometry.theta.is_identity(0.0));
        Compiled { d, rot, trans, thresholds, translations_only }
    }

    #[inline(always)]
    fn select(&self, u: u32) -> usize {
        let u = u as u64;
        let n = self.thresholds.len();
        if n <= 16 {
            // branchless: count thresholds not above u
            let mut k = 0;
            for &t in &self.thresholds[..n - 1] {
                k += (t <= u) as usize;
            }
            k
        } else {
            self.thresholds.partition_point(|&t| t <= u)
        }
    }
}

/// Pairs of 32-bit draws from one 64-bit output.
struct HalfDraws {
    rng: rng::StreamRng,
    spare: Option<u32>,
}

impl HalfDraws {
    #[inline(always)]
    fn next(&mut self) -> u32 {
        match self.spare.take() {
            Some(u) => u,
            None => {
                let x = self.rng.next_u64();
                self.spare = Some((x >> 32) as u32);
                x as u32
            }
        }
    }
}

/// Advances `B` independent samples in lockstep so their dependency chains
/// overlap; each sample still consumes only its own stream.
fn run_batch_fixed<const D: usize, const B: usize>(
    c: &Compiled,
    x0: &[f64],
    checkpoints: &[usize],
    draws: &mut [HalfDraws; B],
    mut emit: impl FnMut(usize, usize, &[f64]),
) {
    let mut y = [[0.0; D]; B];
    for yb in y.iter_mut() {
        yb.copy_from_slice(x0);
    }
    let mut step = 0;
    for (ci, &target) in checkpoints.iter().enumerate() {
        if c.translations_only {
            // both halves of each 64-bit draw, low half first as in HalfDraws
            if draws[0].spare.is_none() {
                while step + 2 <= target {
                    for b in 0..B {
                        let x = draws[b].rng.next_u64();
                        let a0 = c.select(x as u32);
                        let a1 = c.select((x >> 32) as u32);
                        let t0 = &c.trans[a0 * D..a0 * D + D];
                        let t1 = &c.trans[a1 * D..a1 * D + D];
                        for r in 0..D {
                            y[b][r] += t0[r];
                            y[b][r] += t1[r];
                        }
                    }
                    step += 2;
                }
            }
            while step < target {
                for b in 0..B {
                    let a = c.select(draws[b].next());
                    let t = &c.trans[a * D..a * D + D];
                    for r in 0..D {
                        y[b][r] += t[r];
                    }
                }
                step += 1;
            }
        } else {
            while step < target {
                for b in 0..B {
                    let a = c.select(draws[b].next());
                    let m: &[f64] = &c.rot[a * D * D..(a + 1) * D * D];
                    let t: &[f64] = &c.trans[a * D..a * D + D];
                    let mut z = [0.0; D];
                    for r in 0..D {
                        let mut s = t[r];
                        for k in 0..D {
                            s += m[r * D + k] * y[b][k];
                        }
                        z[r] = s;
                    }
                    y[b] = z;
                }
                step += 1;
            }
        }
        for (b, yb) in y.iter().enumerate() {
            emit(b, ci, yb);
        }
    }
}

fn run_fixed<const D: usize>(
    c: &Compiled,
    x0: &[f64],
    checkpoints: &[usize],
    seed: u64,
    lo: usize,
    hi: usize,
    mut emit: impl FnMut(u64, usize, &[f64]),
) {
    const B: usize = 4;
    let mut i = lo;
    while i + B <= hi {
        let mut draws: [HalfDraws; B] = std::array::from_fn(|b| HalfDraws { rng: rng::stream(seed, (i + b) as u64), spare: None });
        let mut buf: Vec<(usize, usize, [f64; D])> = Vec::with_capacity(B * checkpoints.len());
        run_batch_fixed::<D, B>(c, x0, checkpoints, &mut draws, |b, ci, y| {
            let mut a = [0.0; D];
            a.copy_from_slice(y);
            buf.push((b, ci, a));
        });
        // observations are delivered in sample order, then checkpoint order
        buf.sort_by_key(|e| (e.0, e.1));
        for (b, ci, y) in &buf {
            emit((i + b) as u64, *ci, y);
        }
        i += B;
    }
    while i < hi {
        let mut draws = [HalfDraws { rng: rng::stream(seed, i as u64), spare: None }];
        run_batch_fixed::<D, 1>(c, x0, checkpoints, &mut draws, |_, ci, y| emit(i as u64, ci, y));
        i += 1;
    }
}

fn run_sample_dyn(c: &Compiled, x0: &[f64], checkpoints: &[usize], draws: &mut HalfDraws, mut emit: impl FnMut(usize, &[f64])) {
    let d = c.d;
    let mut y = x0.to_vec();
    let mut z = vec![0.0; d];
    let mut step = 0;
    for (ci, &target) in checkpoints.iter().enumerate() {
        while step < target {
            let a = c.select(draws.next());
            let m = &c.rot[a * d * d..(a + 1) * d * d];
            let t = &c.trans[a * d..a * d + d];
            for r in 0..d {
                z[r] = t[r] + (0..d).map(|k| m[r * d + k] * y[k]).sum::<f64>();
            }
            std::mem::swap(&mut y, &mut z);
            step += 1;
        }
        emit(ci, &y);
    }
}

fn validate_run(d: usize, x0: &[f64], checkpoints: &[usize], n: usize) -> Result<()> {
    check_dim(d, x0.len())?;
    if n == 0 {
        return Err(Error::InvalidParameter { name: "samples", reason: "must be at least 1".into() });
    }
    if n > MAX_SAMPLES {
        return Err(Error::CapExceeded { what: "samples", value: n as u128, cap: MAX_SAMPLES as u128 });
    }
    if checkpoints.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter { name: "steps", reason: "checkpoints must be strictly increasing".into() });
    }
    let last = checkpoints.last().copied().unwrap_or(0);
    if last > MAX_STEPS {
        return Err(Error::CapExceeded { what: "steps", value: last as u128, cap: MAX_STEPS as u128 });
    }
    let work = last as u128 * n as u128;
    if work > MAX_WORK {
        return Err(Error::CapExceeded { what: "samples x steps", value: work, cap: MAX_WORK });
    }
    Ok(())
}

/// Runs `n` walks from `x0`, calling `observe(acc, checkpoint index, sample
/// index, position)` at every checkpoint. Per-chunk accumulators are merged in
/// chunk order.
pub fn walk_fold<A, I, O, M>(
    mu: &AtomicIsometryMeasure,
    x0: &[f64],
    checkpoints: &[usize],
    n: usize,
    seed: u64,
    init: I,
    observe: O,
    merge: M,
) -> Result<A>
where
    A: Send,
    I: Fn() -> A + Sync,
    O: Fn(&mut A, usize, u64, &[f64]) + Sync,
    M: Fn(&mut A, A),
{
    validate_run(mu.dim(), x0, checkpoints, n)?;
    let c = Compiled::new(mu);
    let chunks = n.div_ceil(CHUNK);
    let parts: Vec<A> = (0..chunks)
        .into_par_iter()
        .map(|ch| {
            let mut acc = init();
            let lo = ch * CHUNK;
            let hi = (lo + CHUNK).min(n);
            let emit = |idx: u64, ci: usize, y: &[f64]| observe(&mut acc, ci, idx, y);
            match c.d {
                1 => run_fixed::<1>(&c, x0, checkpoints, seed, lo, hi, emit),
                2 => run_fixed::<2>(&c, x0, checkpoints, seed, lo, hi, emit),
                3 => run_fixed::<3>(&c, x0, checkpoints, seed, lo, hi, emit),
                4 => run_fixed::<4>(&c, x0, checkpoints, seed, lo, hi, emit),
                _ => {
                    let mut emit = emit;
                    for i in lo..hi {
                        let mut draws = HalfDraws { rng: rng::stream(seed, i as u64), spare: None };
                        run_sample_dyn(&c, x0, checkpoints, &mut draws, |ci, y| emit(i as u64, ci, y));
                    }
                }
            }
            acc
        })
        .collect();
    let mut it = parts.into_iter();
    let mut total = it.next().unwrap_or_else(&init);
    for p in it {
        merge(&mut total, p);
    }
    Ok(total)
}

/// Streaming mean / covariance (Welford within a chunk, Chan across chunks)
/// plus absolute moments about a fixed center.
#[derive(Clone, Debug)]
pub struct MomentAccumulator {
    d: usize,
    n: u64,
    mean: Vec<f64>,
    m2: Vec<f64>,
    center: Vec<f64>,
    orders: Vec<f64>,
    abs: Vec<f64>,
    abs_sq: Vec<f64>,
}

impl MomentAccumulator {
    pub fn new(d: usize, center: Vec<f64>, orders: Vec<f64>) -> Self {
        let k = orders.len();
        MomentAccumulator { d, n: 0, mean: vec![0.0; d], m2: vec![0.0; d * d], center, orders, abs: vec![0.0; k], abs_sq: vec![0.0; k] }
    }

    #[inline]
    pub fn push(&mut self, y: &[f64]) {
        let d = self.d;
        self.n += 1;
        let n = self.n as f64;
        let mut delta = [0.0f64; 8];
        let mut delta_dyn;
        let delta: &mut [f64] = if d <= 8 {
            &mut delta[..d]
        } else {
            delta_dyn = vec![0.0; d];
            &mut delta_dyn
        };
        for r in 0..d {
            delta[r] = y[r] - self.mean[r];
            self.mean[r] += delta[r] / n;
        }
        for r in 0..d {
            let after = y[r] - self.mean[r];
            for s in 0..d {
                self.m2[s * d + r] += delta[s] * after;
            }
        }
        if !self.orders.is_empty() {
            let dist = (0..d).map(|r| (y[r] - self.center[r]).powi(2)).sum::<f64>().sqrt();
            for (k, &a) in self.orders.iter().enumerate() {
                let v = dist.powf(a);
                self.abs[k] += v;
                self.abs_sq[k] += v * v;
            }
        }
    }

    pub fn merge(&mut self, other: &MomentAccumulator) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = other.clone();
            return;
        }
        let d = self.d;
        let (na, nb) = (self.n as f64, other.n as f64);
        let n = na + nb;
        let delta: Vec<f64> = (0..d).map(|r| other.mean[r] - self.mean[r]).collect();
        for r in 0..d {
            for s in 0..d {
                self.m2[r * d + s] += other.m2[r * d + s] + delta[r] * delta[s] * na * nb / n;
            }
        }
        for r in 0..d {
            self.mean[r] += delta[r] * nb / n;
        }
        for k in 0..self.abs.len() {
            self.abs[k] += other.abs[k];
            self.abs_sq[k] += other.abs_sq[k];
        }
        self.n += other.n;
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.mean)
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        let c = DMatrix::from_row_slice(self.d, self.d, &self.m2) / (self.n.max(1) as f64);
        (&c + c.transpose()) * 0.5
    }

    /// (α, mean, standard error) of |Y − center|^α.
    pub fn abs_moments(&self) -> Vec<(f64, f64, f64)> {
        let n = self.n.max(1) as f64;
        self.orders
            .iter()
            .enumerate()
            .map(|(k, &a)| {
                let m = self.abs[k] / n;
                let var = (self.abs_sq[k] / n - m * m).max(0.0);
                (a, m, (var / n).sqrt())
            })
            .collect()
    }
}

/// E Y_k at each checkpoint: m_{k+1} = T m_k + b.
pub fn exact_means(mu: &AtomicIsometryMeasure, x0: &[f64], checkpoints: &[usize]) -> Vec<DVector<f64>> {
    let t = mu.mean_rotation();
    let b = mu.barycenter();
    let mut m = DVector::from_column_slice(x0);
    let mut step = 0;
    let mut out = Vec::with_capacity(checkpoints.len());
    for &target in checkpoints {
        while step < target {
            m = &t * &m + &b;
            step += 1;
        }
        out.push(m.clone());
    }
    out
}

struct EnsembleAcc {
    moments: Vec<MomentAccumulator>,
    endpoints: Option<Vec<Vec<f64>>>,
}

/// One pass producing an ensemble at every checkpoint; `cfg.steps` is ignored.
pub fn simulate_checkpoints(mu: &AtomicIsometryMeasure, cfg: &WalkConfig, checkpoints: &[usize]) -> Result<Vec<WalkEnsemble>> {
    let d = mu.dim();
    check_dim(d, cfg.start.len())?;
    if cfg.moment_orders.iter().any(|a| !(*a >= 0.0)) {
        return Err(Error::InvalidParameter { name: "moment_orders", reason: "orders must be non-negative".into() });
    }
    let centers = exact_means(mu, &cfg.start, checkpoints);
    let store = cfg.store_endpoints;
    let acc = walk_fold(
        mu,
        &cfg.start,
        checkpoints,
        cfg.samples,
        cfg.seed,
        || EnsembleAcc {
            moments: centers.iter().map(|c| MomentAccumulator::new(d, c.as_slice().to_vec(), cfg.moment_orders.clone())).collect(),
            endpoints: store.then(|| vec![Vec::new(); checkpoints.len()]),
        },
        |acc, ci, _, y| {
            acc.moments[ci].push(y);
            if let Some(e) = acc.endpoints.as_mut() {
                e[ci].extend_from_slice(y);
            }
        },
        |total, part| {
            for (a, b) in total.moments.iter_mut().zip(&part.moments) {
                a.merge(b);
            }
            if let (Some(a), Some(b)) = (total.endpoints.as_mut(), part.endpoints) {
                for (x, y) in a.iter_mut().zip(b) {
                    x.extend(y);
                }
            }
        },
    )?;
    let mut endpoints = acc.endpoints.map(|e| e.into_iter().map(Some).collect::<Vec<_>>());
    Ok(checkpoints
        .iter()
        .enumerate()
        .map(|(ci, &l)| {
            let m = &acc.moments[ci];
            WalkEnsemble {
                dim: d,
                count: m.count() as usize,
                steps: l,
                mean: m.mean(),
                covariance: m.covariance(),
                exact_mean: centers[ci].clone(),
                higher_moments: m.abs_moments(),
                endpoints: endpoints.as_mut().and_then(|e| e[ci].take()),
            }
        })
        .collect())
}

pub fn simulate(mu: &AtomicIsometryMeasure, cfg: &WalkConfig) -> Result<WalkEnsemble> {
    Ok(simulate_checkpoints(mu, cfg, &[cfg.steps])?.remove(0))
}

/// Law of Y_l by enumeration, merging coincident points at 1e-9. `cap`
/// bounds (distinct states) × (atoms) at every step.
pub fn exact_distribution(mu: &AtomicIsometryMeasure, x0: &[f64], l: usize, cap: usize) -> Result<Vec<(DVector<f64>, f64)>> {
    check_dim(mu.dim(), x0.len())?;
    let mut states = vec![(DVector::from_column_slice(x0), 1.0)];
    for _ in 0..l {
        let count = states.len().saturating_mul(mu.len());
        if count > cap {
            return Err(Error::CapExceeded { what: "exact states", value: count as u128, cap: cap as u128 });
        }
        let mut next = Vec::with_capacity(count);
        for (y, p) in &states {
            for a in mu.atoms() {
                next.push((a.isometry.apply_unchecked(y), p * a.weight));
            }
        }
        let keys: Vec<Vec<f64>> = next.iter().map(|(y, _)| y.as_slice().to_vec()).collect();
        let weights: Vec<f64> = next.iter().map(|s| s.1).collect();
        states = merge_by_key(&keys, &weights, MERGE_TOL).into_iter().map(|(i, w)| (next[i].0.clone(), w)).collect();
    }
    Ok(states)
}

/// ν̂(ξ) = Σ p e(⟨ξ, y⟩) for a finite law, with e(x) = e^{−2πix}.
pub fn charfn_of_points(points: &[(DVector<f64>, f64)], xi: &[f64]) -> Complex64 {
    points
        .iter()
        .map(|(y, p)| {
            let t: f64 = y.iter().zip(xi).map(|(a, b)| a * b).sum();
            e_phase(t) * *p
        })
        .sum()
}

/// e(t) = e^{−2πit}.
#[inline]
pub fn e_phase(t: f64) -> Complex64 {
    let (s, c) = (2.0 * std::f64::consts::PI * t).sin_cos();
    Complex64::new(c, -s)
}

pub fn empirical_charfn(ens: &WalkEnsemble, frequencies: &[Vec<f64>]) -> Result<Vec<CharFnEstimate>> {
    let pts = ens.endpoints.as_ref().ok_or(Error::EndpointsAbsent)?;
    for xi in frequencies {
        check_dim(ens.dim, xi.len())?;
    }
    let d = ens.dim;
    let n = ens.count;
    let k = frequencies.len();
    let chunks = n.div_ceil(CHUNK);
    let parts: Vec<Vec<[f64; 4]>> = (0..chunks)
        .into_par_iter()
        .map(|ch| {
            let lo = ch * CHUNK;
            let hi = (lo + CHUNK).min(n);
            let mut sums = vec![[0.0; 4]; k];
            for i in lo..hi {
                let y = &pts[i * d..(i + 1) * d];
                for (j, xi) in frequencies.iter().enumerate() {
                    let t: f64 = y.iter().zip(xi).map(|(a, b)| a * b).sum();
                    let z = e_phase(t);
                    let s = &mut sums[j];
                    s[0] += z.re;
                    s[1] += z.im;
                    s[2] += z.re * z.re;
                    s[3] += z.im * z.im;
                }
            }
            sums
        })
        .collect();
    let mut total = vec![[0.0; 4]; k];
    for p in parts {
        for (t, s) in total.iter_mut().zip(p) {
            for q in 0..4 {
                t[q] += s[q];
            }
        }
    }
    let nf = n as f64;
    Ok(total
        .into_iter()
        .map(|s| {
            let (re, im) = (s[0] / nf, s[1] / nf);
            let var_re = (s[2] / nf - re * re).max(0.0);
            let var_im = (s[3] / nf - im * im).max(0.0);
            CharFnEstimate {
                value: Complex64::new(re, im),
                standard_error: ((var_re + var_im) / nf).sqrt(),
                se_re: (var_re / nf).sqrt(),
                se_im: (var_im / nf).sqrt(),
            }
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentGrowth {
    pub order: f64,
    /// (l, E|Y_l − E Y_l|^α, standard error)
    pub rows: Vec<(usize, f64, f64)>,
    pub slope: Option<f64>,
}

pub fn moment_growth(
    mu: &AtomicIsometryMeasure,
    order: f64,
    l_list: &[usize],
    samples: usize,
    start: &[f64],
    seed: u64,
) -> Result<MomentGrowth> {
    if !(order >= 1.0) {
        return Err(Error::InvalidParameter { name: "order", reason: "must be at least 1".into() });
    }
    let mut ls = l_list.to_vec();
    ls.sort_unstable();
    ls.dedup();
    let cfg = WalkConfig::new(0, samples, start.to_vec(), seed).with_moments(&[order]);
    let ens = simulate_checkpoints(mu, &cfg, &ls)?;
    let rows: Vec<(usize, f64, f64)> = ens.iter().map(|e| (e.steps, e.higher_moments[0].1, e.higher_moments[0].2)).collect();
    let x: Vec<f64> = rows.iter().map(|r| r.0 as f64).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let slope = log_log_fit(&x, &y).map(|f| f.0);
    Ok(MomentGrowth { order, rows, slope })
}

/// Empirical law of stored endpoints as (point, probability) after merging.
pub fn endpoint_histogram(ens: &WalkEnsemble) -> Result<Vec<(DVector<f64>, f64)>> {
    let pts = ens.endpoints.as_ref().ok_or(Error::EndpointsAbsent)?;
    let d = ens.dim;
    let keys: Vec<Vec<f64>> = pts.chunks_exact(d).map(|c| c.to_vec()).collect();
    let w = vec![1.0 / ens.count as f64; keys.len()];
    Ok(merge_by_key(&keys, &w, MERGE_TOL).into_iter().map(|(i, p)| (DVector::from_vec(keys[i].clone()), p)).collect())
}

/// Total variation distance between two finite laws (points matched at 1e-9).
pub fn total_variation(a: &[(DVector<f64>, f64)], b: &[(DVector<f64>, f64)]) -> f64 {
    let keys: Vec<Vec<f64>> = a.iter().chain(b).map(|(y, _)| y.as_slice().to_vec()).collect();
    let mut signed: Vec<f64> = a.iter().map(|x| x.1).chain(b.iter().map(|x| -x.1)).collect();
    // merge by key on combined set, tracking signed mass per representative
    let groups = merge_by_key(&keys, &vec![1.0; keys.len()], MERGE_TOL);
    let reps: Vec<&Vec<f64>> = groups.iter().map(|(i, _)| &keys[*i]).collect();
    let mut mass = vec![0.0; reps.len()];
    for (k, key) in keys.iter().enumerate() {
        let j = reps
            .iter()
            .position(|r| r.iter().zip(key).all(|(x, y)| (x - y).abs() <= MERGE_TOL))
            .expect("every key is near its representative");
        mass[j] += std::mem::take(&mut signed[k]);
    }
    0.5 * mass.iter().map(|m| m.abs()).sum::<f64>()
}

/// Writes stored endpoints: "IWLK", u32 version, u32 d, 4 zero bytes, u64 N,
/// then N·d little-endian f64.
pub fn write_endpoints(path: &Path, ens: &WalkEnsemble) -> Result<()> {
    let pts = ens.endpoints.as_ref().ok_or(Error::EndpointsAbsent)?;
    let mut buf = Vec::with_capacity(24 + pts.len() * 8);
    buf.extend_from_slice(DUMP_MAGIC);
    buf.extend_from_slice(&DUMP_VERSION.to_le_bytes());
    buf.extend_from_slice(&(ens.dim as u32).to_le_bytes());
    buf.extend_from_slice(&[0u8; 4]);
    buf.extend_from_slice(&(ens.count as u64).to_le_bytes());
    for x in pts {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

/// Reads an endpoint dump back as (d, row-major values).
pub fn read_endpoints(path: &Path) -> Result<(usize, Vec<f64>)> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let bad = |msg: &str| Error::Parse { line: 0, msg: format!("{}: {msg}", path.display()) };
    if bytes.len() < 24 || &bytes[0..4] != DUMP_MAGIC {
        return Err(bad("not an endpoint dump"));
    }
    let word = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    if word(4) != DUMP_VERSION {
        return Err(bad("unsupported version"));
    }
    let d = word(8) as usize;
    let n = u64::from_le_bytes(bytes[16..24].try_into().unwrap()) as usize;
    if bytes.len() != 24 + n * d * 8 {
        return Err(bad("length does not match header"));
    }
    let vals = bytes[24..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    Ok((d, vals))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isometry::{Isometry, Rotation};
    use std::f64::consts::PI;

    fn t(v: &[f64]) -> Isometry {
        Isometry::translation(DVector::from_column_slice(v))
    }

    fn mu_t() -> AtomicIsometryMeasure {
        AtomicIsometryMeasure::new(vec![(t(&[1.0, 0.0]), 0.5), (t(&[-1.0, 0.0]), 0.5)]).unwrap()
    }

    fn mu_c() -> AtomicIsometryMeasure {
        AtomicIsometryMeasure::new(vec![
            (t(&[1.0, 0.0]), 0.25),
            (t(&[-1.0, 0.0]), 0.25),
            (t(&[0.0, 1.0]), 0.25),
            (t(&[0.0, -1.0]), 0.25),
        ])
        .unwrap()
    }

    fn rotating() -> AtomicIsometryMeasure {
        AtomicIsometryMeasure::normalized(vec![
            (Isometry::new(Rotation::planar(1.1), DVector::from_vec(vec![0.5, 0.0])).unwrap(), 1.0),
            (Isometry::new(Rotation::planar(-2.0), DVector::from_vec(vec![0.0, 0.7])).unwrap(), 1.0),
            (t(&[-0.3, -0.4]), 1.0),
        ])
        .unwrap()
    }

    #[test]
    fn zero_steps() {
        let e = simulate(&mu_c(), &WalkConfig::new(0, 100, vec![1.0, 2.0], 3).storing_endpoints()).unwrap();
        assert_eq!(e.mean.as_slice(), &[1.0, 2.0]);
        assert_eq!(e.covariance.amax(), 0.0);
        assert!(e.endpoints.unwrap().chunks(2).all(|p| p == [1.0, 2.0]));
    }

    #[test]
    fn deterministic_walk() {
        let g = Isometry::new(Rotation::planar(0.3), DVector::from_vec(vec![1.0, -1.0])).unwrap();
        let e = simulate(&AtomicIsometryMeasure::dirac(g.clone()), &WalkConfig::new(5, 37, vec![0.5, 0.5], 3).storing_endpoints())
            .unwrap();
        let mut y = DVector::from_vec(vec![0.5, 0.5]);
        for _ in 0..5 {
            y = g.apply(&y).unwrap();
        }
        for p in e.endpoints.as_ref().unwrap().chunks(2) {
            assert!((p[0] - y[0]).abs() < 1e-12 && (p[1] - y[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn square_lattice_moments() {
        let e = simulate(&mu_c(), &WalkConfig::new(1000, 100_000, vec![0.0, 0.0], 11)).unwrap();
        let se = (500.0f64 / 100_000.0).sqrt();
        assert!(e.mean.amax() <= 3.0 * se * 1.5);
        for i in 0..2 {
            assert!((e.covariance[(i, i)] / 500.0 - 1.0).abs() <= 0.05);
        }
        assert!(e.covariance[(0, 1)].abs() / 500.0 <= 0.05);
    }

    #[test]
    fn determinism_across_thread_counts() {
        let cfg = WalkConfig::new(50, 5000, vec![0.1, 0.2], 99).storing_endpoints().with_moments(&[2.0, 3.0]);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(|| simulate(&rotating(), &cfg).unwrap())
        };
        let a = run(1);
        let b = run(3);
        assert_eq!(a, b);
    }

    #[test]
    fn exact_distribution_examples() {
        let law = exact_distribution(&mu_t(), &[0.0, 0.0], 2, DEFAULT_EXACT_CAP).unwrap();
        let pts: Vec<(f64, f64)> = law.iter().map(|(y, p)| (y[0], *p)).collect();
        assert_eq!(pts, vec![(-2.0, 0.25), (0.0, 0.5), (2.0, 0.25)]);
        let law = exact_distribution(&rotating(), &[0.3, 0.1], 0, DEFAULT_EXACT_CAP).unwrap();
        assert_eq!(law.len(), 1);
        assert_eq!(law[0].1, 1.0);
        let law = exact_distribution(&rotating(), &[0.3, 0.1], 6, DEFAULT_EXACT_CAP).unwrap();
        assert!((law.iter().map(|x| x.1).sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(matches!(exact_distribution(&mu_c(), &[0.0, 0.0], 20, 100), Err(Error::CapExceeded { .. })));
    }

    #[test]
    fn monte_carlo_matches_enumeration() {
        let mu = rotating();
        let exact = exact_distribution(&mu, &[0.0, 0.0], 4, DEFAULT_EXACT_CAP).unwrap();
        let ens = simulate(&mu, &WalkConfig::new(4, 1_000_000, vec![0.0, 0.0], 5).storing_endpoints()).unwrap();
        let hist = endpoint_histogram(&ens).unwrap();
        assert!(total_variation(&exact, &hist) <= 0.01);
    }

    #[test]
    fn isometry_equivariance() {
        let mu = rotating();
        let h = Isometry::new(Rotation::planar(0.8), DVector::from_vec(vec![2.0, -1.0])).unwrap();
        // conjugating the steps by h⁻¹ and starting at h(x₀) gives h(Y_l)
        let conj = mu.conjugate_by(&h.invert()).unwrap();
        let x0 = DVector::from_vec(vec![0.4, 0.1]);
        let a = exact_distribution(&mu, x0.as_slice(), 4, DEFAULT_EXACT_CAP).unwrap();
        let b = exact_distribution(&conj, h.apply(&x0).unwrap().as_slice(), 4, DEFAULT_EXACT_CAP).unwrap();
        let mapped: Vec<(DVector<f64>, f64)> = a.iter().map(|(y, p)| (h.apply(y).unwrap(), *p)).collect();
        assert!(total_variation(&mapped, &b) < 1e-9);
        let ea = simulate(&mu, &WalkConfig::new(20, 200_000, x0.as_slice().to_vec(), 1)).unwrap();
        let eb = simulate(&conj, &WalkConfig::new(20, 200_000, h.apply(&x0).unwrap().as_slice().to_vec(), 2)).unwrap();
        let se = (ea.covariance.trace() / 200_000.0).sqrt();
        assert!((h.apply(&ea.mean).unwrap() - eb.mean).amax() <= 5.0 * se);
    }

    #[test]
    fn second_moment_identity_by_enumeration() {
        let (mu, _) = rotating().center().unwrap();
        let m2 = mu.moment(2.0);
        for l in 1..=8 {
            let law = exact_distribution(&mu, &[0.0, 0.0], l, DEFAULT_EXACT_CAP).unwrap();
            let s: f64 = law.iter().map(|(y, p)| p * y.norm_squared()).sum();
            assert!((s / (l as f64 * m2) - 1.0).abs() <= 1e-10, "l = {l}");
        }
    }

    #[test]
    fn charfn_examples() {
        let ens = simulate(&mu_c(), &WalkConfig::new(10, 1000, vec![0.0, 0.0], 1).storing_endpoints()).unwrap();
        let cf = empirical_charfn(&ens, &[vec![0.0, 0.0]]).unwrap();
        assert_eq!(cf[0].value, Complex64::new(1.0, 0.0));
        let g = Isometry::new(Rotation::planar(0.3), DVector::from_vec(vec![1.0, -1.0])).unwrap();
        let ens = simulate(&AtomicIsometryMeasure::dirac(g), &WalkConfig::new(7, 100, vec![0.0, 0.0], 1).storing_endpoints()).unwrap();
        for est in empirical_charfn(&ens, &[vec![0.3, -0.2], vec![1.7, 2.0]]).unwrap() {
            assert!((est.value.norm() - 1.0).abs() < 1e-12);
        }
        let no_store = simulate(&mu_c(), &WalkConfig::new(1, 10, vec![0.0, 0.0], 1)).unwrap();
        assert!(matches!(empirical_charfn(&no_store, &[vec![0.0, 0.0]]), Err(Error::EndpointsAbsent)));
    }

    #[test]
    fn charfn_matches_gaussian_for_square_lattice() {
        let l = 400;
        let ens = simulate(&mu_c(), &WalkConfig::new(l, 200_000, vec![0.0, 0.0], 8).storing_endpoints()).unwrap();
        let xi = [0.01, 0.0];
        let est = empirical_charfn(&ens, &[xi.to_vec()]).unwrap()[0];
        let predicted = (-(l as f64) * PI * PI * xi[0] * xi[0]).exp();
        assert!((est.value - Complex64::new(predicted, 0.0)).norm() <= 3.0 * est.standard_error.max(1e-4));
    }

    #[test]
    fn moment_growth_slopes() {
        let (mu, _) = rotating().center().unwrap();
        let g = moment_growth(&mu, 2.0, &[16, 64, 256], 20_000, &[0.0, 0.0], 4).unwrap();
        assert!((g.slope.unwrap() - 1.0).abs() <= 0.05);
        let g = moment_growth(&mu_c(), 4.0, &[64, 256, 1024, 4096], 20_000, &[0.0, 0.0], 4).unwrap();
        assert!(g.slope.unwrap() <= 2.1);
        let g = moment_growth(&mu_c(), 2.0, &[1], 100, &[0.0, 0.0], 4).unwrap();
        assert_eq!(g.rows.len(), 1);
        assert!(g.slope.is_none());
    }

    #[test]
    fn chebyshev_tail_mass() {
        let ens = simulate(&rotating(), &WalkConfig::new(200, 50_000, vec![0.0, 0.0], 6).storing_endpoints()).unwrap();
        let radius = 10.0 * ens.covariance.trace().sqrt();
        let far = ens
            .endpoints
            .as_ref()
            .unwrap()
            .chunks(2)
            .filter(|p| ((p[0] - ens.mean[0]).powi(2) + (p[1] - ens.mean[1]).powi(2)).sqrt() > radius)
            .count();
        assert!(far as f64 / ens.count as f64 <= 0.015);
    }

    #[test]
    fn streaming_aggregates_match_endpoints() {
        let ens = simulate(&rotating(), &WalkConfig::new(30, 3000, vec![0.0, 0.0], 2).storing_endpoints()).unwrap();
        let pts = ens.endpoints.as_ref().unwrap();
        let n = ens.count as f64;
        let mx = pts.chunks(2).map(|p| p[0]).sum::<f64>() / n;
        let vxx = pts.chunks(2).map(|p| (p[0] - mx).powi(2)).sum::<f64>() / n;
        assert!((mx - ens.mean[0]).abs() < 1e-10);
        assert!((vxx - ens.covariance[(0, 0)]).abs() < 1e-9);
        let eig = ens.covariance.clone().symmetric_eigen();
        assert!(eig.eigenvalues.min() >= -1e-10);
    }

    #[test]
    fn endpoint_dump_round_trip() {
        let ens = simulate(&rotating(), &WalkConfig::new(3, 10, vec![0.0, 0.0], 2).storing_endpoints()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.bin");
        write_endpoints(&p, &ens).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        assert_eq!(&bytes[..4], b"IWLK");
        assert_eq!(bytes.len(), 24 + 10 * 2 * 8);
        let (d, vals) = read_endpoints(&p).unwrap();
        assert_eq!(d, 2);
        assert_eq!(&vals, ens.endpoints.as_ref().unwrap());
    }
}
