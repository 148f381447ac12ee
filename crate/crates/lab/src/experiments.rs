//! Coalescence campaigns, renewal statistics, escape runs, diffusive scaling
//! and moment audits.

use dsf_core::exploration::{self, ExplorationState, Explorer};
use dsf_core::forest;
use dsf_core::partition::{self, CenterConfig};
use dsf_core::ppp::PointStore;
use dsf_core::stats::{self, OlsFit};
use dsf_core::stream;
use dsf_core::{Error, Exponent, NormContext};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

/// Store cells further than this below the lowest head are dropped.
const FORGET_MARGIN: f64 = 4.0;

fn start_line(k: usize, d: usize, sep: f64) -> Vec<Vec<f64>> {
    (0..k)
        .map(|i| {
            let mut v = vec![0.0; d];
            v[0] = sep * i as f64;
            v
        })
        .collect()
}

fn rep_seed(seed: u64, rep: u64) -> u64 {
    stream::derive_seed(seed, &[stream::tag(b"replicate"), rep])
}

#[derive(Clone, Debug, Serialize)]
pub struct CoalesceConfig {
    pub d: usize,
    pub p: Exponent,
    pub sep: f64,
    /// Vertical height at which a run is stopped.
    pub horizon: f64,
    pub max_steps: usize,
    pub reps: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoalesceRecord {
    pub rep: u64,
    pub coalesced: bool,
    /// Height of the merge point, or the stopping height when censored.
    pub t: f64,
    pub steps: usize,
}

/// Two trajectories from 0 and sep·e_1, run until they merge or reach the
/// height horizon.
pub fn coalescence_run(cfg: &CoalesceConfig, rep: u64) -> Result<CoalesceRecord, Error> {
    let ctx = NormContext::new(cfg.d, cfg.p)?;
    if cfg.sep == 0.0 {
        return Ok(CoalesceRecord { rep, coalesced: true, t: 0.0, steps: 0 });
    }
    let mut store = PointStore::poisson(cfg.d, rep_seed(cfg.seed, rep))?;
    let mut st = ExplorationState::new(start_line(2, cfg.d, cfg.sep), ctx)?;
    while st.m < cfg.horizon && st.n < cfg.max_steps {
        let rec = st.explore_step(&mut store)?;
        if st.distinct_heads() == 1 {
            return Ok(CoalesceRecord { rep, coalesced: true, t: rec.psi[cfg.d - 1], steps: st.n });
        }
        if st.n % 256 == 0 {
            store.forget_below(st.m - FORGET_MARGIN);
        }
    }
    Ok(CoalesceRecord { rep, coalesced: false, t: st.m, steps: st.n })
}

/// Replicates in parallel, returned in replicate order.
pub fn run_replicates<T: Send>(
    reps: usize,
    f: impl Fn(u64) -> Result<T, Error> + Sync,
) -> Result<Vec<T>, Error> {
    (0..reps as u64).into_par_iter().map(&f).collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct Proportion {
    pub count: usize,
    pub n: usize,
    pub frequency: f64,
    pub stderr: f64,
}

impl Proportion {
    pub fn new(count: usize, n: usize) -> Self {
        let f = if n == 0 { 0.0 } else { count as f64 / n as f64 };
        let se = if n == 0 { 0.0 } else { (f * (1.0 - f) / n as f64).sqrt() };
        Proportion { count, n, frequency: f, stderr: se }
    }

    /// z of self − other with the unpooled standard error.
    pub fn z_above(&self, other: &Proportion) -> f64 {
        let se = (self.stderr.powi(2) + other.stderr.powi(2)).sqrt();
        let diff = self.frequency - other.frequency;
        if se > 0.0 {
            diff / se
        } else if diff > 0.0 {
            f64::INFINITY
        } else {
            0.0
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct TailFit {
    pub slope: f64,
    pub intercept: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub r2: f64,
    pub t_lo: f64,
    pub t_hi: f64,
    pub points: usize,
    pub observations: usize,
}

pub const TAIL_MIN_OBS: usize = 200;
const TAIL_GRID: usize = 20;

fn fit_with_ci(x: &[f64], y: &[f64]) -> Result<(OlsFit, f64, f64), Error> {
    let f = stats::ols(x, y)?;
    let (lo, hi) = f.slope_ci(0.95);
    Ok((f, lo, hi))
}

/// Log-log slope of the empirical survival of T over the decade
/// [median, 10·median] of the uncensored times, cut at 0.8·horizon.
/// Censored runs count as exceeding every grid point.
pub fn coalescence_tail(uncensored: &[f64], total: usize, horizon: f64) -> Result<TailFit, Error> {
    if uncensored.len() < TAIL_MIN_OBS {
        return Err(Error::InsufficientData(format!(
            "{} uncensored times, need {TAIL_MIN_OBS}",
            uncensored.len()
        )));
    }
    let mut sorted: Vec<f64> = uncensored.to_vec();
    sorted.sort_by(f64::total_cmp);
    let t_lo = stats::quantile(&sorted, 0.5).max(f64::MIN_POSITIVE);
    let t_hi = (10.0 * t_lo).min(0.8 * horizon);
    if !(t_hi > 1.5 * t_lo) {
        return Err(Error::InsufficientData(format!("fit range [{t_lo}, {t_hi}] is too short")));
    }
    let mut x = Vec::new();
    let mut y = Vec::new();
    for i in 0..TAIL_GRID {
        let t = t_lo * (t_hi / t_lo).powf(i as f64 / (TAIL_GRID - 1) as f64);
        let above = sorted.len() - sorted.partition_point(|v| *v <= t) + (total - sorted.len());
        if above == 0 {
            continue;
        }
        x.push(t.ln());
        y.push((above as f64 / total as f64).ln());
    }
    let (f, lo, hi) = fit_with_ci(&x, &y)?;
    Ok(TailFit {
        slope: f.slope,
        intercept: f.intercept,
        ci_low: lo,
        ci_high: hi,
        r2: f.r2,
        t_lo,
        t_hi,
        points: x.len(),
        observations: uncensored.len(),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct CoalesceSummary {
    pub config: CoalesceConfig,
    pub coalescence: Proportion,
    pub mean_steps: f64,
    pub tail: Option<TailFit>,
}

pub fn summarize_coalescence(cfg: &CoalesceConfig, records: &[CoalesceRecord]) -> CoalesceSummary {
    let mut recs = records.to_vec();
    recs.sort_by_key(|r| r.rep);
    let times: Vec<f64> = recs.iter().filter(|r| r.coalesced).map(|r| r.t).collect();
    let steps: Vec<f64> = recs.iter().map(|r| r.steps as f64).collect();
    CoalesceSummary {
        config: cfg.clone(),
        coalescence: Proportion::new(times.len(), recs.len()),
        mean_steps: stats::mean(&steps),
        tail: if cfg.d == 2 { coalescence_tail(&times, recs.len(), cfg.horizon).ok() } else { None },
    }
}

/// Renewal-time exploration settings.
#[derive(Clone, Debug, Serialize)]
pub struct RenewalConfig {
    pub d: usize,
    pub p: Exponent,
    pub k: usize,
    pub sep: f64,
    pub kappa: f64,
    pub r: f64,
    pub renewals: usize,
    pub max_steps: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct RenewalSeries {
    pub rep: u64,
    /// Z_n = p(g_1 − g_2) at each renewal step (first pair for k > 2).
    pub z: Vec<Vec<f64>>,
    /// Block sizes between consecutive renewal steps.
    pub w: Vec<f64>,
    pub merged: bool,
    pub steps: usize,
}

/// Renewal steps of one exploration, stopped at the target count, at the
/// merge of all heads or at the step cap.
pub fn renewal_series(cfg: &RenewalConfig, rep: u64) -> Result<RenewalSeries, Error> {
    let ctx = NormContext::new(cfg.d, cfg.p)?;
    let mut store = PointStore::poisson(cfg.d, rep_seed(cfg.seed, rep))?;
    let st = ExplorationState::new(start_line(cfg.k, cfg.d, cfg.sep), ctx)?;
    let mut ex = Explorer::new(st, cfg.kappa, cfg.r);
    ex.forget_margin = Some(FORGET_MARGIN);
    let mut merged = false;
    while ex.trace.beta.len() < cfg.renewals && ex.state.n < cfg.max_steps {
        ex.advance(&mut store)?;
        if cfg.k > 1 && ex.state.distinct_heads() < cfg.k {
            merged = true;
            break;
        }
    }
    let z = ex.trace.heads_at_beta.iter().map(|h| exploration::pair_displacements(&h[..2.min(h.len())])
        .into_iter()
        .next()
        .unwrap_or_default())
        .collect();
    Ok(RenewalSeries { rep, z, w: ex.trace.w.clone(), merged, steps: ex.state.n })
}

/// Collect block sizes from successive replicates until `n` are available.
pub fn collect_blocks(cfg: &RenewalConfig, n: usize, max_reps: u64) -> Result<Vec<f64>, Error> {
    let mut out = Vec::new();
    let mut rep = 0;
    while out.len() < n && rep < max_reps {
        out.extend(renewal_series(cfg, rep)?.w);
        rep += 1;
    }
    out.truncate(n);
    Ok(out)
}

/// Slope of log P(W > t) against √t over the 5%–95% quantile range.
pub fn block_tail_fit(w: &[f64]) -> Result<TailFit, Error> {
    if w.len() < 20 {
        return Err(Error::InsufficientData("block tail needs at least 20 blocks".into()));
    }
    let mut s = w.to_vec();
    s.sort_by(f64::total_cmp);
    let (t_lo, t_hi) = (stats::quantile(&s, 0.05), stats::quantile(&s, 0.95));
    let mut x = Vec::new();
    let mut y = Vec::new();
    for i in 0..TAIL_GRID {
        let t = t_lo + (t_hi - t_lo) * i as f64 / (TAIL_GRID - 1) as f64;
        let surv = stats::survival_sorted(&s, t);
        if surv > 0.0 {
            x.push(t.sqrt());
            y.push(surv.ln());
        }
    }
    let (f, lo, hi) = fit_with_ci(&x, &y)?;
    Ok(TailFit {
        slope: f.slope,
        intercept: f.intercept,
        ci_low: lo,
        ci_high: hi,
        r2: f.r2,
        t_lo,
        t_hi,
        points: x.len(),
        observations: w.len(),
    })
}

/// V(z) = ln ln(e + ‖z‖₂²).
pub fn lyapunov_v(z: &[f64]) -> f64 {
    let n2: f64 = z.iter().map(|v| v * v).sum();
    (std::f64::consts::E + n2).ln().ln()
}

#[derive(Clone, Debug, Serialize)]
pub struct DriftEstimate {
    pub lo: f64,
    pub hi: f64,
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

/// Mean of V(Z_{n+1}) − V(Z_n) binned by ‖Z_n‖₂ over consecutive bin edges.
/// Empty bins are omitted.
pub fn lyapunov_drift(series: &[RenewalSeries], edges: &[f64]) -> Vec<DriftEstimate> {
    let mut bins: Vec<Vec<f64>> = vec![Vec::new(); edges.len().saturating_sub(1)];
    for s in series {
        for pair in s.z.windows(2) {
            let r = pair[0].iter().map(|v| v * v).sum::<f64>().sqrt();
            if let Some(b) = edges.windows(2).position(|e| r >= e[0] && r < e[1]) {
                bins[b].push(lyapunov_v(&pair[1]) - lyapunov_v(&pair[0]));
            }
        }
    }
    bins.iter()
        .enumerate()
        .filter(|(_, v)| !v.is_empty())
        .map(|(i, v)| DriftEstimate {
            lo: edges[i],
            hi: edges[i + 1],
            mean: stats::mean(v),
            stderr: if v.len() > 1 { stats::std_err(v) } else { 0.0 },
            n: v.len(),
        })
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct EscapeConfig {
    pub d: usize,
    pub p: Exponent,
    pub k: usize,
    pub sep: f64,
    /// Number of exploration steps per replicate.
    pub horizon: usize,
    pub reps: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct EscapeRecord {
    pub rep: u64,
    pub coalesced: bool,
    pub steps: usize,
    /// (step, min pairwise lateral distance) at steps 2^j.
    pub checkpoints: Vec<(usize, f64)>,
}

fn min_pair_distance(heads: &[Vec<f64>], ctx: &NormContext) -> f64 {
    exploration::pair_displacements(heads).iter().map(|z| ctx.norm(z)).fold(f64::INFINITY, f64::min)
}

pub fn escape_run(cfg: &EscapeConfig, rep: u64) -> Result<EscapeRecord, Error> {
    let ctx = NormContext::new(cfg.d, cfg.p)?;
    let mut store = PointStore::poisson(cfg.d, rep_seed(cfg.seed, rep))?;
    let mut st = ExplorationState::new(start_line(cfg.k, cfg.d, cfg.sep), ctx)?;
    let mut checkpoints = Vec::new();
    let mut next = 1;
    while st.n < cfg.horizon {
        st.explore_step(&mut store)?;
        if st.distinct_heads() < cfg.k {
            return Ok(EscapeRecord { rep, coalesced: true, steps: st.n, checkpoints });
        }
        if st.n == next {
            let heads: Vec<Vec<f64>> = st.heads.iter().map(|h| h.x.clone()).collect();
            checkpoints.push((st.n, min_pair_distance(&heads, &ctx)));
            next *= 2;
        }
        if st.n % 256 == 0 {
            store.forget_below(st.m - FORGET_MARGIN);
        }
    }
    Ok(EscapeRecord { rep, coalesced: false, steps: st.n, checkpoints })
}

#[derive(Clone, Debug, Serialize)]
pub struct EscapeSummary {
    pub config: EscapeConfig,
    pub non_coalesced: Proportion,
    pub growth: Option<TailFit>,
}

/// Slope of the mean log distance against log n over checkpoints n ≥ n_min.
pub fn growth_exponent(records: &[Vec<(usize, f64)>], n_min: usize) -> Result<TailFit, Error> {
    let mut by_step: std::collections::BTreeMap<usize, Vec<f64>> = Default::default();
    for r in records {
        for &(n, dist) in r {
            if n >= n_min && dist > 0.0 {
                by_step.entry(n).or_default().push(dist.ln());
            }
        }
    }
    let (x, y): (Vec<f64>, Vec<f64>) =
        by_step.iter().map(|(n, v)| ((*n as f64).ln(), stats::mean(v))).unzip();
    if x.len() < 3 {
        return Err(Error::InsufficientData("growth fit needs three checkpoints".into()));
    }
    let (f, lo, hi) = fit_with_ci(&x, &y)?;
    Ok(TailFit {
        slope: f.slope,
        intercept: f.intercept,
        ci_low: lo,
        ci_high: hi,
        r2: f.r2,
        t_lo: x[0].exp(),
        t_hi: x[x.len() - 1].exp(),
        points: x.len(),
        observations: records.len(),
    })
}

pub fn summarize_escape(cfg: &EscapeConfig, records: &[EscapeRecord]) -> EscapeSummary {
    let free: Vec<Vec<(usize, f64)>> = records.iter().filter(|r| !r.coalesced).map(|r| r.checkpoints.clone()).collect();
    EscapeSummary {
        config: cfg.clone(),
        non_coalesced: Proportion::new(free.len(), records.len()),
        growth: growth_exponent(&free, 64).ok(),
    }
}

/// Minimum pairwise distances of k independent Gaussian walks in R^dim, as
/// an escape-statistics reference.
pub fn synthetic_walk_checkpoints(k: usize, dim: usize, sep: f64, steps: usize, seed: u64) -> Vec<(usize, f64)> {
    let mut rng = stream::keyed_rng(seed, &[stream::tag(b"synthetic-walk")]);
    let mut pos: Vec<Vec<f64>> = (0..k).map(|i| {
        let mut v = vec![0.0; dim + 1];
        v[0] = sep * i as f64;
        v
    }).collect();
    let ctx = NormContext::new(dim + 1, Exponent::Finite(2.0)).expect("valid");
    let mut out = Vec::new();
    let mut next = 1;
    for n in 1..=steps {
        for p in pos.iter_mut() {
            for v in p.iter_mut().take(dim) {
                *v += Distribution::<f64>::sample(&StandardNormal, &mut rng);
            }
        }
        if n == next {
            out.push((n, min_pair_distance(&pos, &ctx)));
            next *= 2;
        }
    }
    out
}

/// Diffusive rescaling of a two-dimensional path.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScaledPath {
    pub start: f64,
    pub t: Vec<f64>,
    pub x: Vec<f64>,
    pub n: f64,
    pub gamma: f64,
    pub sigma: f64,
}

impl ScaledPath {
    /// t ↦ π(γn²t)/(σn) for a trajectory given as points (x, y).
    pub fn from_points(points: &[Vec<f64>], n: f64, gamma: f64, sigma: f64) -> Self {
        let t: Vec<f64> = points.iter().map(|p| p[1] / (gamma * n * n)).collect();
        let x = points.iter().map(|p| p[0] / (sigma * n)).collect();
        ScaledPath { start: t[0], t, x, n, gamma, sigma }
    }

    /// Value at time t, held constant before the start and after the end.
    pub fn eval(&self, t: f64) -> f64 {
        if t <= self.t[0] {
            return self.x[0];
        }
        let j = self.t.partition_point(|v| *v <= t);
        if j >= self.t.len() {
            return self.x[self.x.len() - 1];
        }
        let (t0, t1) = (self.t[j - 1], self.t[j]);
        let w = (t - t0) / (t1 - t0);
        self.x[j - 1] + w * (self.x[j] - self.x[j - 1])
    }

    pub fn end(&self) -> f64 {
        self.t[self.t.len() - 1]
    }
}

pub const D_PI_STEP: f64 = 1e-3;

/// d_Π with the sup taken over the points of the global grid step·Z that lie
/// at or after the earlier start, up to the later end.
pub fn d_pi(a: &ScaledPath, b: &ScaledPath, step: f64) -> f64 {
    let mut out = (a.start.tanh() - b.start.tanh()).abs();
    let t0 = a.start.min(b.start);
    let t1 = a.end().max(b.end());
    let (j0, j1) = ((t0 / step).ceil() as i64, (t1 / step).ceil() as i64);
    for j in j0..=j1 {
        let t = step * j as f64;
        let fa = a.eval(t.max(a.start)).tanh();
        let fb = b.eval(t.max(b.start)).tanh();
        out = out.max((fa - fb).abs() / (1.0 + t.abs()));
    }
    out
}

pub fn d_pi_matrix(paths: &[ScaledPath], step: f64) -> Vec<Vec<f64>> {
    let n = paths.len();
    let mut m = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let v = d_pi(&paths[i], &paths[j], step);
            m[i][j] = v;
            m[j][i] = v;
        }
    }
    m
}

/// Count of (i, j, l) with m[i][l] > m[i][j] + m[j][l] + tol, plus
/// asymmetric or non-zero-diagonal entries.
pub fn metric_violations(m: &[Vec<f64>], tol: f64) -> usize {
    let n = m.len();
    let mut bad = 0;
    for i in 0..n {
        if m[i][i] != 0.0 {
            bad += 1;
        }
        for j in 0..n {
            if (m[i][j] - m[j][i]).abs() > tol {
                bad += 1;
            }
            for l in 0..n {
                if m[i][l] > m[i][j] + m[j][l] + tol {
                    bad += 1;
                }
            }
        }
    }
    bad
}

#[derive(Clone, Debug, Serialize)]
pub struct Calibration {
    pub p: Exponent,
    /// Steps per unit height.
    pub gamma: f64,
    /// Lateral variance per unit height.
    pub diffusivity: f64,
    pub sigma: f64,
    pub trajectories: usize,
    pub height: f64,
}

fn lateral_at_height(points: &[Vec<f64>], h: f64) -> Option<f64> {
    let j = points.iter().position(|p| p[1] >= h)?;
    if j == 0 {
        return Some(points[0][0]);
    }
    let (a, b) = (&points[j - 1], &points[j]);
    let w = (h - a[1]) / (b[1] - a[1]);
    Some(a[0] + w * (b[0] - a[0]))
}

fn trajectory_to_height(d_ctx: &NormContext, seed: u64, height: f64) -> Result<Vec<Vec<f64>>, Error> {
    let mut store = PointStore::poisson(2, seed)?;
    let mut pts = vec![vec![0.0, 0.0]];
    let mut cur = vec![0.0, 0.0];
    while cur[1] < height {
        let f = store.nearest_above(&cur, &dsf_core::ppp::NoMask, d_ctx)?;
        cur = f.x;
        pts.push(cur.clone());
        if pts.len() % 256 == 0 {
            store.forget_below(cur[1] - FORGET_MARGIN);
        }
    }
    Ok(pts)
}

/// Lateral displacements at the given height of independent trajectories
/// from the origin, with the total step count.
pub fn lateral_sample(p: Exponent, n_traj: usize, height: f64, seed: u64) -> Result<(Vec<f64>, usize), Error> {
    let ctx = NormContext::new(2, p)?;
    let runs: Vec<(f64, usize)> = run_replicates(n_traj, |i| {
        let pts = trajectory_to_height(&ctx, rep_seed(seed, i), height)?;
        let n = pts.iter().position(|q| q[1] >= height).unwrap_or(pts.len() - 1);
        Ok((lateral_at_height(&pts, height).expect("reached height"), n))
    })?;
    Ok((runs.iter().map(|r| r.0).collect(), runs.iter().map(|r| r.1).sum()))
}

/// γ = steps per unit height, D = E[x(H)²]/H and σ = √(Dγ), so that the
/// rescaled path has unit variance at t = 1.
pub fn calibrate(p: Exponent, n_traj: usize, height: f64, seed: u64) -> Result<Calibration, Error> {
    let (xs, steps) = lateral_sample(p, n_traj, height, seed)?;
    let gamma = steps as f64 / (n_traj as f64 * height);
    let diffusivity = xs.iter().map(|x| x * x).sum::<f64>() / (xs.len() as f64 * height);
    Ok(Calibration { p, gamma, diffusivity, sigma: (diffusivity * gamma).sqrt(), trajectories: n_traj, height })
}

/// Second moment at t = 1 of independently rescaled paths with n chosen so
/// that γn² equals the height.
pub fn scaled_variance_at_one(cal: &Calibration, n_traj: usize, height: f64, seed: u64) -> Result<f64, Error> {
    let (xs, _) = lateral_sample(cal.p, n_traj, height, seed)?;
    let n = (height / cal.gamma).sqrt();
    Ok(xs.iter().map(|x| (x / (cal.sigma * n)).powi(2)).sum::<f64>() / xs.len() as f64)
}

/// Trajectories from `starts` in one shared store, each run up to `height`
/// above its start, rescaled. d_Π is a metric on the result only when all
/// starts share one height.
pub fn scaled_paths(
    p: Exponent,
    starts: &[Vec<f64>],
    height: f64,
    n: f64,
    gamma: f64,
    sigma: f64,
    seed: u64,
) -> Result<Vec<ScaledPath>, Error> {
    let ctx = NormContext::new(2, p)?;
    let mut store = PointStore::poisson(2, seed)?;
    let mut out = Vec::with_capacity(starts.len());
    for s in starts {
        let mut pts = vec![s.clone()];
        let mut cur = s.clone();
        while cur[1] < s[1] + height {
            let f = store.nearest_above(&cur, &dsf_core::ppp::NoMask, &ctx)?;
            cur = f.x;
            pts.push(cur.clone());
        }
        out.push(ScaledPath::from_points(&pts, n, gamma, sigma));
    }
    Ok(out)
}

/// Helper for `forest` exports.
pub fn forest_window(d: usize, p: Exponent, width: f64, height: f64, seed: u64) -> Result<forest::ForestGraph, Error> {
    let ctx = NormContext::new(d, p)?;
    let mut store = PointStore::poisson(d, seed)?;
    let mut lo = vec![0.0; d];
    let mut hi = vec![width; d];
    lo[d - 1] = 0.0;
    hi[d - 1] = height;
    let window = dsf_core::lpgeom::AxisBox::new(lo, hi)?;
    Ok(forest::build_forest(&mut store, &window, &ctx))
}

/// k centres c_i = R_0 s_i v_i on {x_d = 0} with v_i uniform in the lateral
/// cube and s_i log-uniform in [1e-3, 4], so several scales occur at once.
pub fn random_configuration<R: Rng + ?Sized>(
    rng: &mut R,
    k: usize,
    d: usize,
    ctx: &NormContext,
    kappa: f64,
) -> Result<CenterConfig, Error> {
    let (_, r0) = partition::witness_scale(k, kappa, ctx)?;
    let (lo, hi) = (1e-3f64.ln(), 4f64.ln());
    let centers = (0..k)
        .map(|_| {
            let s = (lo + (hi - lo) * rng.random::<f64>()).exp();
            let mut c: Vec<f64> = (0..d).map(|_| r0 * s * (2.0 * rng.random::<f64>() - 1.0)).collect();
            c[d - 1] = 0.0;
            c
        })
        .collect();
    CenterConfig::new(centers)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AuditSample {
    pub z: f64,
    pub z_next: f64,
    pub w_next: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct AuditBin {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
    pub second: f64,
    pub second_se: f64,
    pub third: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct AuditReport {
    pub bins: Vec<AuditBin>,
    pub second_lower_ok: bool,
    pub third_upper_ok: bool,
    pub f_mean: f64,
    pub f_stderr: f64,
    pub f_n: usize,
    pub f_ok: bool,
}

impl AuditReport {
    pub fn passes(&self) -> bool {
        self.second_lower_ok && self.third_upper_ok && self.f_ok
    }
}

/// Bound on the ratio of the largest bin third moment to the pooled one.
pub const THIRD_MOMENT_RATIO: f64 = 10.0;

/// Conditional second and third absolute moments of Z_{n+1} − Z_n in
/// |Z_n|-quantile bins, and the mean increment on {2W_{n+1} < |Z_n|}.
pub fn assumption_audit(samples: &[AuditSample], n_bins: usize) -> Result<AuditReport, Error> {
    if samples.len() < 2 * n_bins.max(1) {
        return Err(Error::InsufficientData("audit needs at least two samples per bin".into()));
    }
    let mut radii: Vec<f64> = samples.iter().map(|s| s.z.abs()).collect();
    radii.sort_by(f64::total_cmp);
    let mut edges: Vec<f64> = (0..=n_bins).map(|i| stats::quantile(&radii, i as f64 / n_bins as f64)).collect();
    edges[n_bins] = f64::INFINITY;
    let inc = |s: &AuditSample| s.z_next - s.z;
    let mut bins = Vec::new();
    for b in 0..n_bins {
        let v: Vec<f64> = samples
            .iter()
            .filter(|s| s.z.abs() >= edges[b] && (s.z.abs() < edges[b + 1] || b + 1 == n_bins))
            .map(inc)
            .collect();
        if v.is_empty() {
            continue;
        }
        let sq: Vec<f64> = v.iter().map(|x| x * x).collect();
        let cube: Vec<f64> = v.iter().map(|x| x.abs().powi(3)).collect();
        bins.push(AuditBin {
            lo: edges[b],
            hi: edges[b + 1],
            n: v.len(),
            second: stats::mean(&sq),
            second_se: if sq.len() > 1 { stats::std_err(&sq) } else { 0.0 },
            third: stats::mean(&cube),
        });
    }
    let all_cube: Vec<f64> = samples.iter().map(|s| inc(s).abs().powi(3)).collect();
    let pooled_third = stats::mean(&all_cube);
    let second_lower_ok = bins.iter().all(|b| b.second - 4.0 * b.second_se > 0.0);
    let third_upper_ok = bins.iter().all(|b| b.third <= THIRD_MOMENT_RATIO * pooled_third);
    let f: Vec<f64> = samples.iter().filter(|s| 2.0 * s.w_next < s.z.abs()).map(inc).collect();
    let (f_mean, f_stderr) = if f.len() > 1 { (stats::mean(&f), stats::std_err(&f)) } else { (0.0, 0.0) };
    let f_ok = f.len() > 1 && (f_mean.abs() <= 4.0 * f_stderr || f_stderr == 0.0 && f_mean == 0.0);
    Ok(AuditReport { bins, second_lower_ok, third_upper_ok, f_mean, f_stderr, f_n: f.len(), f_ok })
}

/// Audit samples from renewal series of two trajectories in d = 2.
pub fn audit_samples(series: &[RenewalSeries]) -> Vec<AuditSample> {
    let mut out = Vec::new();
    for s in series {
        for (i, w) in s.w.iter().enumerate() {
            if i + 1 < s.z.len() {
                out.push(AuditSample { z: s.z[i][0], z_next: s.z[i + 1][0], w_next: *w });
            }
        }
    }
    out
}

/// Symmetric ±1 walk samples with unit block sizes, for self-tests.
pub fn synthetic_audit_samples(n: usize, seed: u64, zero: bool) -> Vec<AuditSample> {
    let mut rng = stream::keyed_rng(seed, &[stream::tag(b"synthetic-audit")]);
    let mut z: f64 = 10.0;
    (0..n)
        .map(|_| {
            let step = if zero { 0.0 } else if rng.random::<bool>() { 1.0 } else { -1.0 };
            let s = AuditSample { z, z_next: z + step, w_next: 1.0 };
            z += step;
            s
        })
        .collect()
}
