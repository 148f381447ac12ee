//! Joint exploration of k trajectories with history sets, good steps,
//! renewal events, block statistics and the independent process.

use std::io::{self, Write};

use rand::Rng;
use rustc_hash::FxHashSet;
use rand_distr::{Distribution, Poisson};
use serde::Serialize;

use crate::lpgeom::{self, AxisBox, Exponent, HalfBall, NormContext, Region};
use crate::ppp::{Layer, Mask, NoMask, PointId, PointStore, Source};
use crate::stream;
use crate::Error;

/// Distance below which a head is considered to lie on a ball surface.
pub const BOUNDARY_TOL: f64 = 1e-9;

/// A trajectory head: a point of the process, or a deterministic start.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Site {
    #[serde(skip)]
    pub id: Option<PointId>,
    pub x: Vec<f64>,
}

impl Site {
    pub fn start(x: Vec<f64>) -> Self {
        Site { id: None, x }
    }

    pub fn same(&self, other: &Site) -> bool {
        match (self.id, other.id) {
            (Some(a), Some(b)) => a == b,
            (None, None) => self.x == other.x,
            _ => false,
        }
    }

    pub fn level(&self) -> f64 {
        self.x[self.x.len() - 1]
    }
}

/// H^+(m) ∩ ⋃ B^+(c, r) with every center at or below level m.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HistorySet {
    pub m: f64,
    pub balls: Vec<HalfBall>,
}

impl HistorySet {
    pub fn new(m: f64) -> Self {
        HistorySet { m, balls: Vec::new() }
    }

    #[inline]
    pub fn contains(&self, x: &[f64], ctx: &NormContext) -> bool {
        x[x.len() - 1] > self.m && self.balls.iter().any(|b| b.contains(x, ctx))
    }

    pub fn push(&mut self, ball: HalfBall) {
        if ball.top() > self.m && ball.radius > 0.0 {
            self.balls.push(ball);
        }
    }

    /// Move the bottom level up and drop balls lying entirely below it.
    pub fn raise(&mut self, m: f64) {
        if m > self.m {
            self.m = m;
        }
        let level = self.m;
        self.balls.retain(|b| b.top() > level);
    }

    /// Top level M = max(m, sup of x·e_d over the set).
    pub fn top(&self) -> f64 {
        self.balls.iter().fold(self.m, |acc, b| acc.max(b.top()))
    }

    pub fn height(&self) -> f64 {
        self.top() - self.m
    }

    pub fn to_region(&self) -> Region {
        Region::Intersection(vec![
            Region::Above(self.m),
            Region::Union(self.balls.iter().cloned().map(Region::HalfBall).collect()),
        ])
    }

    pub fn bounding_box(&self, d: usize) -> Option<AxisBox> {
        self.to_region().bounding_box(d)
    }

    /// Smallest gap between ‖x − c‖ and r over the stored balls.
    pub fn boundary_gap(&self, x: &[f64], ctx: &NormContext) -> f64 {
        self.balls.iter().map(|b| (ctx.dist(x, &b.center) - b.radius).abs()).fold(f64::INFINITY, f64::min)
    }
}

/// Excludes the open history set and the current heads.
pub struct HistoryMask<'a> {
    pub history: &'a HistorySet,
    pub heads: &'a [Site],
    pub ctx: &'a NormContext,
}

impl Mask for HistoryMask<'_> {
    fn excludes(&self, id: PointId, x: &[f64]) -> bool {
        self.heads.iter().any(|h| h.id == Some(id)) || self.history.contains(x, self.ctx)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StepRecord {
    pub n: usize,
    pub mover: usize,
    pub x: Vec<f64>,
    pub psi: Vec<f64>,
    #[serde(skip)]
    pub psi_id: Option<PointId>,
    pub len: f64,
}

#[derive(Clone, Debug)]
pub struct ExplorationState {
    pub ctx: NormContext,
    pub heads: Vec<Site>,
    pub history: HistorySet,
    pub m: f64,
    pub big_m: f64,
    pub n: usize,
    pub log: Option<Vec<StepRecord>>,
}

impl ExplorationState {
    /// Start k trajectories at points sharing the same last coordinate.
    pub fn new(starts: Vec<Vec<f64>>, ctx: NormContext) -> Result<Self, Error> {
        if starts.is_empty() {
            return Err(Error::InvalidParameter("need at least one starting point".into()));
        }
        let d = ctx.d;
        if starts.iter().any(|s| s.len() != d) {
            return Err(Error::InvalidParameter("starting point dimension mismatch".into()));
        }
        let level = starts[0][d - 1];
        if starts.iter().any(|s| s[d - 1] != level) {
            return Err(Error::InvalidParameter("starting points must share the last coordinate".into()));
        }
        Ok(ExplorationState {
            ctx,
            heads: starts.into_iter().map(Site::start).collect(),
            history: HistorySet::new(level),
            m: level,
            big_m: level,
            n: 0,
            log: None,
        })
    }

    pub fn with_log(mut self) -> Self {
        self.log = Some(Vec::new());
        self
    }

    pub fn k(&self) -> usize {
        self.heads.len()
    }

    pub fn height(&self) -> f64 {
        self.big_m - self.m
    }

    /// Index of the moving head: lowest level, ties to the lowest index.
    pub fn mover(&self) -> usize {
        let mut best = 0;
        for (i, h) in self.heads.iter().enumerate() {
            if h.level() < self.heads[best].level() {
                best = i;
            }
        }
        best
    }

    pub fn distinct_heads(&self) -> usize {
        let mut n = 0;
        for (i, h) in self.heads.iter().enumerate() {
            if !self.heads[..i].iter().any(|o| o.same(h)) {
                n += 1;
            }
        }
        n
    }

    /// One exploration step along the lowest trajectory.
    pub fn explore_step(&mut self, store: &mut PointStore) -> Result<StepRecord, Error> {
        let ctx = self.ctx;
        let i = self.mover();
        let x = self.heads[i].clone();
        let y = store.nearest_above(&x.x, &HistoryMask { history: &self.history, heads: &self.heads, ctx: &ctx }, &ctx)?;
        let mut psi = Site { id: Some(y.id), x: y.x };
        let mut best = y.dist;
        for h in &self.heads {
            if h.level() > self.m {
                let dh = ctx.dist(&x.x, &h.x);
                if dh < best {
                    best = dh;
                    psi = h.clone();
                }
            }
        }
        self.history.push(HalfBall { center: x.x.clone(), radius: best });
        for h in self.heads.iter_mut() {
            if h.same(&x) {
                *h = psi.clone();
            }
        }
        let m = self.heads.iter().map(Site::level).fold(f64::INFINITY, f64::min);
        self.history.raise(m);
        self.m = self.history.m;
        self.big_m = self.big_m.max(self.history.top());
        let rec = StepRecord { n: self.n, mover: i, x: x.x, psi: psi.x, psi_id: psi.id, len: best };
        self.n += 1;
        if let Some(log) = self.log.as_mut() {
            log.push(rec.clone());
        }
        Ok(rec)
    }

    /// Projections of the heads onto the levels m + κ and m.
    pub fn lifted_heads(&self, kappa: f64) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let d = self.ctx.d;
        let up = self.heads.iter().map(|h| with_last(&h.x, self.m + kappa, d)).collect();
        let down = self.heads.iter().map(|h| with_last(&h.x, self.m, d)).collect();
        (up, down)
    }
}

fn with_last(x: &[f64], v: f64, d: usize) -> Vec<f64> {
    let mut y = x.to_vec();
    y[d - 1] = v;
    y
}

fn half_ball_box(c: &[f64], r: f64) -> AxisBox {
    let d = c.len();
    let mut lo: Vec<f64> = c.iter().map(|v| v - r).collect();
    let hi: Vec<f64> = c.iter().map(|v| v + r).collect();
    lo[d - 1] = c[d - 1];
    AxisBox { lo, hi }
}

/// Count of points y in the open half-ball B^+(c, r) that the mask keeps.
fn count_half_ball<M: Mask + ?Sized>(
    store: &mut PointStore,
    c: &[f64],
    r: f64,
    mask: &M,
    ctx: &NormContext,
    stop_after: usize,
) -> usize {
    let hb = HalfBall { center: c.to_vec(), radius: r };
    let mut n = 0;
    store.for_each_in_box(&half_ball_box(c, r), |id, y| {
        if n <= stop_after && hb.contains(y, ctx) && !mask.excludes(id, y) {
            n += 1;
        }
    });
    n
}

/// Greedy good-step scan: τ_0 = 0 and
/// τ_{n+1} = inf{j > τ_n : L_j ≤ κ, m_j − m_{τ_n} ≥ κ + R}.
pub fn good_step_scan(l: &[f64], m: &[f64], kappa: f64, r: f64) -> Vec<usize> {
    let mut tau = Vec::new();
    if l.is_empty() {
        return tau;
    }
    tau.push(0);
    let mut last = 0;
    for j in 1..l.len().min(m.len()) {
        if l[j] <= kappa && m[j] - m[last] >= kappa + r {
            tau.push(j);
            last = j;
        }
    }
    tau
}

/// Evaluates the joint renewal event at the current (good) step: for every
/// head, exactly one point in B^+(g↑, R) and exactly one point in the upper
/// half-ball B^+(g↓, κ+R) outside the closed history set.
pub fn renewal_detect(
    state: &ExplorationState,
    store: &mut PointStore,
    kappa: f64,
    r: f64,
) -> bool {
    let ctx = state.ctx;
    let (up, down) = state.lifted_heads(kappa);
    let mask = HistoryMask { history: &state.history, heads: &state.heads, ctx: &ctx };
    for i in 0..state.k() {
        if count_half_ball(store, &up[i], r, &NoMask, &ctx, 1) != 1 {
            return false;
        }
        if count_half_ball(store, &down[i], kappa + r, &mask, &ctx, 1) != 1 {
            return false;
        }
    }
    true
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StepTrace {
    pub n: usize,
    pub x_n: Vec<f64>,
    pub psi: Vec<f64>,
    pub m: f64,
    #[serde(rename = "M")]
    pub big_m: f64,
    #[serde(rename = "L")]
    pub l: f64,
    pub good: bool,
    pub renewal: bool,
}

/// Invariant violations found while checking a run.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct InvariantReport {
    pub steps_checked: usize,
    pub points_inside_history: usize,
    pub level_decreases: usize,
    pub heads_off_boundary: usize,
    pub renewal_mismatches: usize,
    pub renewals_checked: usize,
}

impl InvariantReport {
    pub fn violations(&self) -> usize {
        self.points_inside_history + self.level_decreases + self.heads_off_boundary + self.renewal_mismatches
    }

    pub fn merge(&mut self, o: &InvariantReport) {
        self.steps_checked += o.steps_checked;
        self.points_inside_history += o.points_inside_history;
        self.level_decreases += o.level_decreases;
        self.heads_off_boundary += o.heads_off_boundary;
        self.renewal_mismatches += o.renewal_mismatches;
        self.renewals_checked += o.renewals_checked;
    }
}

/// Good-step and renewal bookkeeping along an exploration.
#[derive(Clone, Debug, Default, Serialize)]
pub struct RenewalTrace {
    pub kappa: f64,
    pub r: f64,
    pub tau: Vec<usize>,
    pub beta: Vec<usize>,
    /// Heads at each renewal step.
    pub heads_at_beta: Vec<Vec<Vec<f64>>>,
    /// Levels m at each renewal step.
    pub m_at_beta: Vec<f64>,
    /// W_{n+1}: summed step lengths between consecutive renewal steps.
    pub w: Vec<f64>,
}

/// Drives an exploration, flags good steps and renewals and optionally
/// checks the structural invariants at every step.
pub struct Explorer {
    pub state: ExplorationState,
    pub trace: RenewalTrace,
    pub report: InvariantReport,
    pub check_invariants: bool,
    pub detect_renewals: bool,
    /// Cells more than this far below m are dropped from the store.
    pub forget_margin: Option<f64>,
    last_tau_m: f64,
    block_len: f64,
}

impl Explorer {
    pub fn new(state: ExplorationState, kappa: f64, r: f64) -> Self {
        let m0 = state.m;
        Explorer {
            state,
            trace: RenewalTrace { kappa, r, ..Default::default() },
            report: InvariantReport::default(),
            check_invariants: false,
            detect_renewals: true,
            forget_margin: Some(4.0),
            last_tau_m: m0,
            block_len: 0.0,
        }
    }

    fn check_state(&mut self, store: &mut PointStore) {
        let ctx = self.state.ctx;
        let d = ctx.d;
        let h = &self.state.history;
        let mut inside = FxHashSet::default();
        for ball in &h.balls {
            let lo_level = h.m.max(ball.level());
            let mut b = half_ball_box(&ball.center, ball.radius);
            b.lo[d - 1] = lo_level;
            if b.hi[d - 1] <= lo_level {
                continue;
            }
            store.for_each_in_box(&b, |id, y| {
                if h.contains(y, &ctx) {
                    inside.insert(id);
                }
            });
        }
        self.report.points_inside_history += inside.len();
        for head in &self.state.heads {
            if head.level() > self.state.m && h.boundary_gap(&head.x, &ctx) >= BOUNDARY_TOL {
                self.report.heads_off_boundary += 1;
            }
        }
        self.report.steps_checked += 1;
    }

    /// Evaluate good step and renewal at the current state, then take one step.
    pub fn advance(&mut self, store: &mut PointStore) -> Result<StepTrace, Error> {
        let kappa = self.trace.kappa;
        let r = self.trace.r;
        let n = self.state.n;
        let l = self.state.height();
        let m = self.state.m;
        if self.check_invariants {
            self.check_state(store);
        }
        let good = n == 0 || (l <= kappa && m - self.last_tau_m >= kappa + r);
        if good {
            self.trace.tau.push(n);
            self.last_tau_m = m;
        }
        let renewal = good && self.detect_renewals && renewal_detect(&self.state, store, kappa, r);
        let mut psi_up = None;
        if renewal {
            if !self.trace.beta.is_empty() {
                self.trace.w.push(self.block_len);
            }
            self.block_len = 0.0;
            self.trace.beta.push(n);
            self.trace.heads_at_beta.push(self.state.heads.iter().map(|h| h.x.clone()).collect());
            self.trace.m_at_beta.push(m);
            if self.check_invariants && self.state.k() == 1 {
                let (up, _) = self.state.lifted_heads(kappa);
                psi_up = Some(store.nearest_above(&up[0], &NoMask, &self.state.ctx)?.id);
            }
        }
        let (old_m, old_big_m) = (self.state.m, self.state.big_m);
        let rec = self.state.explore_step(store)?;
        self.block_len += rec.len;
        if self.check_invariants {
            if self.state.m < old_m || self.state.big_m < old_big_m {
                self.report.level_decreases += 1;
            }
            if let Some(up_id) = psi_up {
                self.report.renewals_checked += 1;
                if rec.psi_id != Some(up_id) {
                    self.report.renewal_mismatches += 1;
                }
            }
        }
        if let Some(margin) = self.forget_margin {
            if n % 256 == 255 {
                store.forget_below(self.state.m - margin);
            }
        }
        Ok(StepTrace { n, x_n: rec.x, psi: rec.psi, m, big_m: old_big_m, l, good, renewal })
    }

    pub fn run(&mut self, store: &mut PointStore, steps: usize) -> Result<(), Error> {
        for _ in 0..steps {
            self.advance(store)?;
        }
        Ok(())
    }

    /// Run until `renewals` renewal steps have been seen or `max_steps`.
    pub fn run_until_renewals(
        &mut self,
        store: &mut PointStore,
        renewals: usize,
        max_steps: usize,
    ) -> Result<(), Error> {
        let mut steps = 0;
        while self.trace.beta.len() < renewals && steps < max_steps {
            self.advance(store)?;
            steps += 1;
        }
        Ok(())
    }
}

pub fn write_trace_jsonl<W: Write>(records: &[StepTrace], mut w: W) -> io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        writeln!(w)?;
    }
    Ok(())
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct BlockStats {
    /// W_{n+1} for each pair of consecutive renewal steps.
    pub w: Vec<f64>,
    /// Z_n^{i,j} for every renewal step n and pair i < j, in lexicographic
    /// pair order.
    pub z: Vec<Vec<Vec<f64>>>,
    /// r_n = ½ min ‖Z_n^{i,j}‖.
    pub r: Vec<f64>,
}

pub fn project(x: &[f64]) -> Vec<f64> {
    x[..x.len() - 1].to_vec()
}

pub fn pair_displacements(heads: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let k = heads.len();
    let mut out = Vec::new();
    for i in 0..k {
        for j in i + 1..k {
            let d = heads[i].len();
            out.push((0..d - 1).map(|s| heads[i][s] - heads[j][s]).collect());
        }
    }
    out
}

/// Block sizes and pairwise displacements from per-step lengths, the
/// renewal indices and the heads at those indices.
pub fn block_stats(
    step_lengths: &[f64],
    beta: &[usize],
    heads_at_beta: &[Vec<Vec<f64>>],
    ctx: &NormContext,
) -> Result<BlockStats, Error> {
    if beta.len() < 2 {
        return Err(Error::InsufficientData("block statistics need two renewal steps".into()));
    }
    let mut w = Vec::with_capacity(beta.len() - 1);
    for pair in beta.windows(2) {
        let mut s = 0.0;
        for len in &step_lengths[pair[0]..pair[1]] {
            s += len;
        }
        w.push(s);
    }
    let z: Vec<Vec<Vec<f64>>> = heads_at_beta.iter().map(|h| pair_displacements(h)).collect();
    let r = z
        .iter()
        .map(|zs| 0.5 * zs.iter().map(|v| ctx.norm(v)).fold(f64::INFINITY, f64::min))
        .collect();
    Ok(BlockStats { w, z, r })
}

/// Pilot run used to calibrate κ as a quantile of the observed L_n.
pub fn calibrate_kappa(
    store: &mut PointStore,
    starts: Vec<Vec<f64>>,
    ctx: NormContext,
    steps: usize,
    q: f64,
) -> Result<f64, Error> {
    let mut state = ExplorationState::new(starts, ctx)?;
    let mut ls = Vec::with_capacity(steps);
    for _ in 0..steps {
        ls.push(state.height());
        state.explore_step(store)?;
    }
    Ok(crate::stats::quantile(&ls, q))
}

#[derive(Clone, Debug, Serialize)]
pub struct AreaCheck {
    pub estimate: f64,
    pub stderr: f64,
    pub bound: f64,
    pub holds: bool,
    /// estimate + 4·stderr − bound.
    pub margin: f64,
}

/// Constant c = min{(α_p/2)^d |B(0,1)|, |B^+(0,1)|} of the ℓ^p area bound,
/// with Monte Carlo ball volumes.
pub fn area_constant(ctx: &NormContext, n_mc: usize, seed: u64) -> Result<f64, Error> {
    let d = ctx.d;
    let a = lpgeom::alpha_p(ctx.p)?;
    let cube = AxisBox::cube(d, -1.0, 1.0)?;
    let (ball, _) = lpgeom::mc_measure(&Region::ball(vec![0.0; d], 1.0), &cube, n_mc, seed, ctx)?;
    Ok(((a / 2.0).powi(d as i32) * ball).min(ball / 2.0))
}

/// Monte Carlo check of the lower bound on |B^+(x_n, L_n + ℓ) \ H_n|.
/// `area_const` is required for finite p (see [`area_constant`]).
pub fn area_bound_check(
    state: &ExplorationState,
    ell: f64,
    n_mc: usize,
    seed: u64,
    area_const: Option<f64>,
) -> Result<AreaCheck, Error> {
    let ctx = state.ctx;
    let d = ctx.d;
    let l = state.height();
    let x = &state.heads[state.mover()].x;
    let bound = match ctx.p {
        Exponent::Infinity => ell * (l + ell).powi(d as i32 - 1),
        Exponent::Finite(_) => {
            let c = area_const.ok_or_else(|| Error::InvalidParameter("area constant required for finite p".into()))?;
            c * ell.max(l).powi(d as i32)
        }
    };
    let rad = l + ell;
    if rad <= 0.0 {
        return Ok(AreaCheck { estimate: 0.0, stderr: 0.0, bound, holds: bound <= 0.0, margin: -bound });
    }
    let region = Region::half_ball(x.clone(), rad).minus(state.history.to_region());
    let (est, se) = lpgeom::mc_measure(&region, &half_ball_box(x, rad), n_mc, seed, &ctx)?;
    let margin = est + 4.0 * se - bound;
    Ok(AreaCheck { estimate: est, stderr: se, bound, holds: margin >= 0.0, margin })
}

#[derive(Clone, Debug, Serialize)]
pub struct IndependentTrace {
    pub k: usize,
    /// Positions g'_ζ(i) (or at n_max when incomplete).
    pub positions: Vec<Vec<f64>>,
    pub zeta: usize,
    pub complete: bool,
    /// Δ^{i,j} for i < j in lexicographic order.
    pub delta: Vec<Vec<f64>>,
    pub w: f64,
    pub m: f64,
    pub heights: Vec<f64>,
    pub rejections: Vec<u64>,
}

pub const REJECTION_CAP: u64 = 1_000_000;

/// Environment conditioned on exactly one point in B(−κe_d, κ+R) ∩ H^+(0),
/// that point lying in B^+(0, R). Returns the store and attempts used.
pub fn conditioned_environment(
    kappa: f64,
    r: f64,
    seed: u64,
    ctx: &NormContext,
) -> Result<(PointStore, u64), Error> {
    let d = ctx.d;
    let mut center = vec![0.0; d];
    center[d - 1] = -kappa;
    let q = Region::Intersection(vec![Region::ball(center, kappa + r), Region::Above(0.0)]);
    let small = Region::half_ball(vec![0.0; d], r);
    let mut lo = vec![-(kappa + r); d];
    let mut hi = vec![kappa + r; d];
    lo[d - 1] = 0.0;
    hi[d - 1] = r;
    let bbox = AxisBox::new(lo, hi)?;
    let counts = Poisson::new(bbox.volume()).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut rng = stream::keyed_rng(seed, &[stream::tag(b"env-rejection")]);
    let mut x = vec![0.0; d];
    for attempt in 1..=REJECTION_CAP {
        let n = counts.sample(&mut rng) as u64;
        let mut found: Option<Vec<f64>> = None;
        let mut hits = 0;
        for _ in 0..n {
            for s in 0..d {
                x[s] = bbox.lo[s] + (bbox.hi[s] - bbox.lo[s]) * rng.random::<f64>();
            }
            if q.contains(&x, ctx) {
                hits += 1;
                found = Some(x.clone());
            }
        }
        if hits == 1 {
            let p = found.expect("one hit");
            if small.contains(&p, ctx) {
                let layers = vec![
                    Layer { region: q, source: Source::Points(vec![p]) },
                    Layer {
                        region: Region::Everything,
                        source: Source::Poisson { seed: stream::derive_seed(seed, &[stream::tag(b"env-bulk")]), intensity: 1.0 },
                    },
                ];
                return Ok((PointStore::layered(*ctx, layers)?, attempt));
            }
        }
    }
    Err(Error::RejectionCap(REJECTION_CAP))
}

struct Walker {
    store: PointStore,
    head: Site,
    history: HistorySet,
}

/// The independent process: k trajectories from the origin, each in its own
/// conditioned environment, advanced lowest-first until the first joint
/// renewal index ζ or `n_max` steps.
pub fn independent_process(
    k: usize,
    kappa: f64,
    r: f64,
    n_max: usize,
    seed: u64,
    ctx: &NormContext,
) -> Result<IndependentTrace, Error> {
    if k == 0 || !(kappa > 0.0) || !(r > 0.0) {
        return Err(Error::InvalidParameter("need k >= 1, kappa > 0, R > 0".into()));
    }
    let d = ctx.d;
    let mut walkers = Vec::with_capacity(k);
    let mut rejections = Vec::with_capacity(k);
    for i in 0..k {
        let (store, tries) = conditioned_environment(kappa, r, stream::derive_seed(seed, &[i as u64]), ctx)?;
        rejections.push(tries);
        walkers.push(Walker { store, head: Site::start(vec![0.0; d]), history: HistorySet::new(0.0) });
    }
    let mut w = 0.0;
    let mut n = 0;
    let mut complete = false;
    loop {
        let m = walkers.iter().map(|wk| wk.head.level()).fold(f64::INFINITY, f64::min);
        for wk in walkers.iter_mut() {
            wk.history.raise(m);
        }
        if m >= r && walkers.iter().all(|wk| wk.history.height() <= kappa) {
            let mut ok = true;
            for wk in walkers.iter_mut() {
                let Walker { store, head, history } = wk;
                let up = with_last(&head.x, m + kappa, d);
                let down = with_last(&head.x, m, d);
                if count_half_ball(store, &up, r, &NoMask, ctx, 1) != 1 {
                    ok = false;
                    break;
                }
                let mask = HistoryMask { history, heads: std::slice::from_ref(head), ctx };
                if count_half_ball(store, &down, kappa + r, &mask, ctx, 1) != 1 {
                    ok = false;
                    break;
                }
            }
            if ok {
                complete = true;
                break;
            }
        }
        if n >= n_max {
            break;
        }
        let mut idx = 0;
        for (i, wk) in walkers.iter().enumerate() {
            if wk.head.level() < walkers[idx].head.level() {
                idx = i;
            }
        }
        let wk = &mut walkers[idx];
        let f = wk.store.nearest_above(&wk.head.x, &NoMask, ctx)?;
        wk.history.push(HalfBall { center: wk.head.x.clone(), radius: f.dist });
        wk.head = Site { id: Some(f.id), x: f.x };
        w += f.dist;
        n += 1;
        if n % 256 == 0 {
            let floor = m - 4.0;
            for wk in walkers.iter_mut() {
                wk.store.forget_below(floor);
            }
        }
    }
    let positions: Vec<Vec<f64>> = walkers.iter().map(|wk| wk.head.x.clone()).collect();
    let m = walkers.iter().map(|wk| wk.head.level()).fold(f64::INFINITY, f64::min);
    let heights = walkers.iter().map(|wk| wk.history.height()).collect();
    let delta = if complete { pair_displacements(&positions) } else { Vec::new() };
    Ok(IndependentTrace { k, positions, zeta: n, complete, delta, w, m, heights, rejections })
}
