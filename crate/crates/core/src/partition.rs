//! Partitions of centre configurations: cluster growth, ε-δ grouping, the
//! one-dimensional ℓ^∞ construction and the witness balls for the pieces
//! P_π^{R_0}.
//!
//! Indices are 0-based throughout.

use num_bigint::{BigInt, Sign};
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::Rng;
use serde::Serialize;

use crate::lpgeom::{Exponent, NormContext};
use crate::stream;
use crate::Error;

/// Relative slack for floating-point postconditions.
pub const FLOAT_SLACK: f64 = 1e-9;

/// Default grouping scale δ.
pub const DEFAULT_DELTA: f64 = 0.25;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CenterConfig {
    pub centers: Vec<Vec<f64>>,
}

impl CenterConfig {
    pub fn new(centers: Vec<Vec<f64>>) -> Result<Self, Error> {
        let Some(first) = centers.first() else {
            return Err(Error::InvalidParameter("configuration needs at least one centre".into()));
        };
        let d = first.len();
        if d < 2 {
            return Err(Error::InvalidParameter("centres need d >= 2".into()));
        }
        for c in &centers {
            if c.len() != d || c[d - 1] != 0.0 || c.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidParameter(format!("invalid centre {c:?}")));
            }
        }
        Ok(CenterConfig { centers })
    }

    pub fn k(&self) -> usize {
        self.centers.len()
    }

    pub fn dim(&self) -> usize {
        self.centers[0].len()
    }

    pub fn scaled(&self, s: f64) -> CenterConfig {
        CenterConfig { centers: self.centers.iter().map(|c| c.iter().map(|v| v / s).collect()).collect() }
    }
}

fn rat(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

/// C_1 = 1, C_{n+1} = (1 + 1/(n+1))(C_n + 1).
pub fn c_k_constants(k: usize) -> Vec<BigRational> {
    let mut out = Vec::with_capacity(k);
    if k == 0 {
        return out;
    }
    out.push(BigRational::one());
    for n in 1..k {
        let prev = out[n - 1].clone();
        out.push((BigRational::one() + rat(1, n as i64 + 1)) * (prev + BigRational::one()));
    }
    out
}

fn c_k(k: usize) -> BigRational {
    c_k_constants(k).pop().unwrap_or_else(BigRational::one)
}

/// ε = δ / (C_k (2 C_k)^k).
pub fn grouping_epsilon(k: usize, delta: &BigRational) -> BigRational {
    let c = c_k(k);
    let two_c = &c * rat(2, 1);
    let mut denom = c.clone();
    for _ in 0..k {
        denom = &denom * &two_c;
    }
    delta / denom
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Cluster {
    pub members: Vec<usize>,
    pub barycenter: Vec<f64>,
    pub radius: f64,
}

pub fn barycenter_radius(config: &CenterConfig, members: &[usize], ctx: &NormContext) -> (Vec<f64>, f64) {
    let d = config.dim();
    let mut b = vec![0.0; d];
    for &i in members {
        for s in 0..d {
            b[s] += config.centers[i][s];
        }
    }
    for v in b.iter_mut() {
        *v /= members.len() as f64;
    }
    let r = members.iter().map(|&i| ctx.dist(&config.centers[i], &b)).fold(0.0, f64::max);
    (b, r)
}

/// Grow a cluster from i0: repeatedly absorb the smallest index within
/// r_π + ξ of the barycentre.
pub fn grow_cluster(config: &CenterConfig, i0: usize, xi: f64, ctx: &NormContext) -> Result<Cluster, Error> {
    if !(xi > 0.0) || i0 >= config.k() {
        return Err(Error::InvalidParameter(format!("grow_cluster needs xi > 0 and i0 < k, got {xi}, {i0}")));
    }
    let mut members = vec![i0];
    loop {
        let (b, r) = barycenter_radius(config, &members, ctx);
        let next = (0..config.k()).find(|j| !members.contains(j) && ctx.dist(&config.centers[*j], &b) <= r + xi);
        match next {
            Some(j) => members.push(j),
            None => {
                members.sort_unstable();
                return Ok(Cluster { members, barycenter: b, radius: r });
            }
        }
    }
}

/// r_π ≤ C_k ξ and ‖c_j − c_π‖ > r_π + ξ for every j outside π.
pub fn cluster_holds(config: &CenterConfig, cl: &Cluster, xi: f64, ctx: &NormContext) -> bool {
    let ck = c_k(config.k()).to_f64().unwrap_or(f64::INFINITY);
    let (b, r) = barycenter_radius(config, &cl.members, ctx);
    r <= ck * xi * (1.0 + FLOAT_SLACK)
        && (0..config.k())
            .filter(|j| !cl.members.contains(j))
            .all(|j| ctx.dist(&config.centers[j], &b) > r + xi)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Grouping {
    pub parts: Vec<Cluster>,
    /// Separation reached by the construction.
    pub epsilon: f64,
    pub delta: f64,
}

impl Grouping {
    pub fn partition(&self) -> Vec<Vec<usize>> {
        self.parts.iter().map(|c| c.members.clone()).collect()
    }
}

/// The inductive ε-δ grouping: ξ_0 = δ/C_k, ξ divided by 2C_k before each
/// new cluster, grown from the smallest uncovered index.
pub fn group_partition(config: &CenterConfig, delta: f64, ctx: &NormContext) -> Result<Grouping, Error> {
    if !(delta > 0.0) {
        return Err(Error::InvalidParameter(format!("delta must be positive, got {delta}")));
    }
    let k = config.k();
    let ck = c_k(k).to_f64().expect("finite constant");
    let mut xi = delta / ck;
    let mut covered = vec![false; k];
    let mut parts = Vec::new();
    while let Some(i) = covered.iter().position(|c| !c) {
        xi /= 2.0 * ck;
        let cl = grow_cluster(config, i, xi, ctx)?;
        for &m in &cl.members {
            if covered[m] {
                return Err(Error::Verification(format!("index {m} assigned twice")));
            }
            covered[m] = true;
        }
        parts.push(cl);
    }
    Ok(Grouping { parts, epsilon: xi, delta })
}

/// Partition, r_π ≤ δ and ‖c_j − c_π‖ > r_π + ε for every part.
pub fn grouping_holds(config: &CenterConfig, g: &Grouping, ctx: &NormContext) -> bool {
    is_partition(&g.partition(), config.k())
        && g.parts.iter().all(|cl| {
            let (b, r) = barycenter_radius(config, &cl.members, ctx);
            r <= g.delta * (1.0 + FLOAT_SLACK)
                && (0..config.k())
                    .filter(|j| !cl.members.contains(j))
                    .all(|j| ctx.dist(&config.centers[j], &b) > r + g.epsilon)
        })
}

pub fn is_partition(parts: &[Vec<usize>], k: usize) -> bool {
    let mut seen = vec![false; k];
    for part in parts {
        if part.is_empty() {
            return false;
        }
        for &i in part {
            if i >= k || seen[i] {
                return false;
            }
            seen[i] = true;
        }
    }
    seen.into_iter().all(|s| s)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dim1Partition {
    /// Parts as original indices, in increasing order of position.
    pub parts: Vec<Vec<usize>>,
    /// The interval P_π of each part, [lo, hi] up to endpoints.
    pub pieces: Vec<(BigRational, BigRational)>,
    /// 2/k!.
    pub bound: BigRational,
}

impl Dim1Partition {
    pub fn lengths(&self) -> Vec<BigRational> {
        self.pieces.iter().map(|(a, b)| b - a).collect()
    }

    pub fn min_length(&self) -> BigRational {
        self.lengths().into_iter().min().unwrap_or_else(BigRational::zero)
    }

    pub fn midpoints(&self) -> Vec<BigRational> {
        self.pieces.iter().map(|(a, b)| (a + b) / rat(2, 1)).collect()
    }
}

fn factorial(k: usize) -> BigInt {
    (1..=k).fold(BigInt::one(), |acc, i| acc * BigInt::from(i))
}

/// Piece of the sorted positions a..=b (0-based) among unit intervals.
fn piece(sorted: &[BigRational], a: usize, b: usize) -> (BigRational, BigRational) {
    let one = BigRational::one();
    let mut lo = &sorted[b] - &one;
    let mut hi = &sorted[a] + &one;
    if a > 0 {
        let l = &sorted[a - 1] + &one;
        if l > lo {
            lo = l;
        }
    }
    if b + 1 < sorted.len() {
        let h = &sorted[b + 1] - &one;
        if h < hi {
            hi = h;
        }
    }
    if hi < lo {
        hi = lo.clone();
    }
    (lo, hi)
}

/// Greedy contiguous partition of points on the line with unit intervals:
/// each new range starts after the previous one and ends at the smallest
/// index whose piece has length at least 2∏_{i≤n} 1/(k−i).
pub fn dim1_partition(centers: &[BigRational]) -> Result<Dim1Partition, Error> {
    let k = centers.len();
    if k == 0 {
        return Err(Error::InvalidParameter("dim1_partition needs k >= 1".into()));
    }
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| centers[i].cmp(&centers[j]).then(i.cmp(&j)));
    let sorted: Vec<BigRational> = order.iter().map(|&i| centers[i].clone()).collect();
    let mut parts = Vec::new();
    let mut pieces = Vec::new();
    let mut target = rat(2, 1);
    let mut start = 0;
    let mut n = 0;
    while start < k {
        target = target / BigRational::from_integer(BigInt::from(k - n));
        let end = (start..k)
            .find(|&b| {
                let (lo, hi) = piece(&sorted, start, b);
                hi - lo >= target
            })
            .ok_or_else(|| Error::Verification(format!("no admissible range starting at position {start}")))?;
        parts.push(order[start..=end].to_vec());
        pieces.push(piece(&sorted, start, end));
        start = end + 1;
        n += 1;
    }
    let bound = BigRational::new(BigInt::from(2), factorial(k));
    Ok(Dim1Partition { parts, pieces, bound })
}

pub fn dim1_partition_f64(centers: &[f64]) -> Result<Dim1Partition, Error> {
    let c: Vec<BigRational> = centers
        .iter()
        .map(|v| BigRational::from_float(*v).ok_or_else(|| Error::InvalidParameter(format!("non-finite centre {v}"))))
        .collect::<Result<_, _>>()?;
    dim1_partition(&c)
}

/// Exact length of P_π for an arbitrary subset of positions on the line.
pub fn dim1_piece_length(centers: &[BigRational], part: &[usize]) -> BigRational {
    let one = BigRational::one();
    let mut lo = part.iter().map(|&i| &centers[i] - &one).max().expect("non-empty part");
    let hi = part.iter().map(|&i| &centers[i] + &one).min().expect("non-empty part");
    if hi <= lo {
        return BigRational::zero();
    }
    let mut cuts: Vec<(BigRational, BigRational)> = (0..centers.len())
        .filter(|j| !part.contains(j))
        .map(|j| (&centers[j] - &one, &centers[j] + &one))
        .collect();
    cuts.sort();
    let mut free = BigRational::zero();
    for (a, b) in cuts {
        if a > lo {
            let stop = if a < hi { a.clone() } else { hi.clone() };
            if stop > lo {
                free += &stop - &lo;
            }
        }
        if b > lo {
            lo = b;
        }
        if lo >= hi {
            return free;
        }
    }
    free + (hi - lo)
}

#[derive(Clone, Debug, Serialize)]
pub struct PartCheck {
    pub members: Vec<usize>,
    /// Witness centre R_0 α_π (rounded to f64 for reporting).
    pub center: Vec<f64>,
    /// Exact inclusion of the witness ball by the sufficient distance tests.
    pub exact_inclusion: bool,
    pub sampled_in_ball: usize,
    /// Sampled points of the witness ball found outside P_π^{R_0}.
    pub ball_points_outside: usize,
    pub piece_estimate: f64,
    pub piece_stderr: f64,
    pub ball_estimate: f64,
    pub mc_ok: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct PartitionWitness {
    pub partition: Vec<Vec<usize>>,
    pub kappa: f64,
    pub eta: f64,
    pub eta_log2: f64,
    pub r0: f64,
    /// Witness-ball radius R_0 η / 2 = 2κ.
    pub radius: f64,
    pub a0: f64,
    pub c_k: String,
    pub epsilon: String,
    pub parts: Vec<PartCheck>,
    pub verified: bool,
}

/// η for the finite-p route: the largest power of two ℓ with
/// pℓ(1+ℓ)^{p−1} + ℓ^p < (ε/2)^p / 2 and (ε−ℓ)^p − ℓ^p − (ε/2)^p > 0, halved
/// once more. Depends on (k, p) only.
pub fn eta_finite(eps: f64, p: f64) -> f64 {
    let half = (eps / 2.0).powf(p);
    let mut l = 0.5f64;
    loop {
        let inside = p * l * (1.0 + l).powf(p - 1.0) + l.powf(p) < 0.5 * half && l <= eps / 2.0;
        let outside = (eps - l).powf(p) - l.powf(p) - half > 0.0;
        if inside && outside {
            return l / 2.0;
        }
        l /= 2.0;
    }
}

/// (η, R_0) for k centres, independent of the configuration.
pub fn witness_scale(k: usize, kappa: f64, ctx: &NormContext) -> Result<(f64, f64), Error> {
    if !(kappa > 0.0) || k == 0 {
        return Err(Error::InvalidParameter("witness needs k >= 1 and kappa > 0".into()));
    }
    let eta = match ctx.p {
        Exponent::Infinity => 0.5 / factorial(k).to_f64().expect("small k"),
        Exponent::Finite(p) => {
            let eps = grouping_epsilon(k, &BigRational::from_float(DEFAULT_DELTA).expect("finite"));
            eta_finite(eps.to_f64().expect("finite"), p)
        }
    };
    Ok((eta, 4.0 * kappa / eta))
}

fn frac_bits(v: f64) -> u32 {
    if v == 0.0 {
        return 0;
    }
    let bits = v.to_bits();
    let exp = ((bits >> 52) & 0x7ff) as i32;
    let (mant, e) = if exp == 0 { (bits & ((1 << 52) - 1), -1074) } else { ((bits & ((1 << 52) - 1)) | (1 << 52), exp - 1075) };
    if e >= 0 {
        0
    } else {
        ((-e) as u32).saturating_sub(mant.trailing_zeros())
    }
}

/// floor(v · 2^f) as an integer; exact when v has at most f fractional bits.
fn to_fixed(v: f64, f: u32) -> BigInt {
    let r = BigRational::from_float(v).expect("finite");
    let scaled = r * BigRational::from_integer(BigInt::one() << f);
    scaled.floor().to_integer()
}

fn fixed_to_f64(v: &BigInt, f: u32) -> f64 {
    BigRational::new(v.clone(), BigInt::one() << f).to_f64().unwrap_or(f64::NAN)
}

/// Norm predicates on integer vectors.
#[derive(Clone, Copy)]
enum IntNorm {
    Pow(u32),
    Max,
}

impl IntNorm {
    /// Σ|v|^p, or max|v| for the sup norm.
    fn size(self, v: &[BigInt]) -> BigInt {
        match self {
            IntNorm::Pow(p) => v.iter().map(|x| x.abs().pow(p)).sum(),
            IntNorm::Max => v.iter().map(|x| x.abs()).max().unwrap_or_default(),
        }
    }

    /// Same transform applied to a radius.
    fn level(self, t: &BigInt) -> BigInt {
        match self {
            IntNorm::Pow(p) => t.pow(p),
            IntNorm::Max => t.clone(),
        }
    }
}

fn sub(a: &[BigInt], b: &[BigInt]) -> Vec<BigInt> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

struct FixedFrame {
    f: u32,
    norm: IntNorm,
    centers: Vec<Vec<BigInt>>,
    kappa: BigInt,
    r0: BigInt,
}

impl FixedFrame {
    /// The witness ball B(a, 2κ) lies in P_π^{R_0}: sufficient distance tests.
    fn exact_inclusion(&self, a: &[BigInt], members: &[usize]) -> bool {
        let d = a.len();
        let two_k = &self.kappa * 2;
        if a[d - 1] < two_k || self.r0 < two_k {
            return false;
        }
        let inner = self.norm.level(&(&self.r0 - &two_k));
        let outer = self.norm.level(&(&self.r0 + &self.kappa * 3));
        for (i, c) in self.centers.iter().enumerate() {
            let mut v = sub(a, c);
            if members.contains(&i) {
                if self.norm.size(&v) > inner {
                    return false;
                }
            } else {
                v[d - 1] += &self.kappa;
                if self.norm.size(&v) < outer {
                    return false;
                }
            }
        }
        true
    }

    /// Exact membership of x in P_π^{R_0}.
    fn in_piece(&self, x: &[BigInt], members: &[usize]) -> bool {
        let d = x.len();
        if x[d - 1].sign() != Sign::Plus {
            return false;
        }
        let r = self.norm.level(&self.r0);
        let rk = self.norm.level(&(&self.r0 + &self.kappa));
        for (i, c) in self.centers.iter().enumerate() {
            let mut v = sub(x, c);
            if members.contains(&i) {
                if self.norm.size(&v) >= r {
                    return false;
                }
            } else {
                v[d - 1] += &self.kappa;
                if self.norm.size(&v) < rk {
                    return false;
                }
            }
        }
        true
    }

    fn check_part(&self, a: &[BigInt], members: &[usize], kappa: f64, n_mc: usize, seed: u64) -> PartCheck {
        let d = a.len();
        let exact_inclusion = self.exact_inclusion(a, members);
        let two_k = &self.kappa * 2;
        let ball = self.norm.level(&two_k);
        let mut rng = stream::keyed_rng(seed, &[stream::tag(b"witness")]);
        let (mut in_ball, mut outside, mut in_piece) = (0usize, 0usize, 0usize);
        let mut x = vec![BigInt::zero(); d];
        for _ in 0..n_mc {
            let mut off = vec![BigInt::zero(); d];
            for s in 0..d {
                off[s] = to_fixed(2.0 * kappa * (2.0 * rng.random::<f64>() - 1.0), self.f);
                x[s] = &a[s] + &off[s];
            }
            let inside_ball = self.norm.size(&off) < ball;
            let inside_piece = self.in_piece(&x, members);
            if inside_ball {
                in_ball += 1;
                if !inside_piece {
                    outside += 1;
                }
            }
            if inside_piece {
                in_piece += 1;
            }
        }
        let vol = (4.0 * kappa).powi(d as i32);
        let n = n_mc.max(1) as f64;
        let fp = in_piece as f64 / n;
        let piece_estimate = vol * fp;
        let piece_stderr = vol * (fp * (1.0 - fp) / n).sqrt();
        let fb = in_ball as f64 / n;
        let ball_estimate = vol * fb;
        let ball_stderr = vol * (fb * (1.0 - fb) / n).sqrt();
        PartCheck {
            members: members.to_vec(),
            center: a.iter().map(|v| fixed_to_f64(v, self.f)).collect(),
            exact_inclusion,
            sampled_in_ball: in_ball,
            ball_points_outside: outside,
            piece_estimate,
            piece_stderr,
            ball_estimate,
            mc_ok: outside == 0 && piece_estimate + 4.0 * (piece_stderr + ball_stderr) >= ball_estimate,
        }
    }
}

/// Partition of the configuration and witness balls B(R_0 α_π, 2κ) inside
/// P_π^{R_0} for every part, with exact and Monte Carlo verification.
/// Finite p must be an integer.
pub fn combinatorial_witness(
    config: &CenterConfig,
    kappa: f64,
    ctx: &NormContext,
    n_mc: usize,
    seed: u64,
) -> Result<PartitionWitness, Error> {
    let k = config.k();
    let d = config.dim();
    if d != ctx.d {
        return Err(Error::InvalidParameter("configuration dimension mismatch".into()));
    }
    let (eta, r0) = witness_scale(k, kappa, ctx)?;
    let norm = match ctx.p {
        Exponent::Infinity => IntNorm::Max,
        Exponent::Finite(_) => IntNorm::Pow(
            ctx.p.as_integer().ok_or_else(|| Error::InvalidParameter(format!("witness needs integer p, got {}", ctx.p)))?,
        ),
    };
    let mut f = 128u32.max(frac_bits(kappa)).max(frac_bits(r0));
    for c in &config.centers {
        for v in c {
            f = f.max(frac_bits(*v));
        }
    }
    f += 8;
    let frame = FixedFrame {
        f,
        norm,
        centers: config.centers.iter().map(|c| c.iter().map(|v| to_fixed(*v, f)).collect()).collect(),
        kappa: to_fixed(kappa, f),
        r0: to_fixed(r0, f),
    };
    let ck = c_k(k);
    let delta = BigRational::from_float(DEFAULT_DELTA).expect("finite");
    let eps = grouping_epsilon(k, &delta);
    let unit = config.scaled(r0);
    let (partition, centers): (Vec<Vec<usize>>, Vec<Vec<BigInt>>) = match norm {
        IntNorm::Pow(p) => {
            let g = group_partition(&unit, DEFAULT_DELTA, ctx)?;
            if !grouping_holds(&unit, &g, ctx) {
                return Err(Error::Verification("grouping postconditions failed".into()));
            }
            let half_eps = (&eps * BigRational::from_integer(frame.r0.clone()) / rat(2, 1)).floor().to_integer();
            let parts = g.partition();
            let centers = parts
                .iter()
                .map(|members| {
                    let mut b = vec![BigInt::zero(); d];
                    for &i in members {
                        for s in 0..d {
                            b[s] += &frame.centers[i][s];
                        }
                    }
                    let m = BigInt::from(members.len());
                    for v in b.iter_mut() {
                        *v = v.div_floor_big(&m);
                    }
                    let r: BigInt = members
                        .iter()
                        .map(|&i| norm.size(&sub(&frame.centers[i], &b)).nth_root(p) + 1)
                        .max()
                        .unwrap_or_default();
                    let h2 = frame.r0.pow(p) - (r + &half_eps).pow(p);
                    b[d - 1] = if h2.sign() == Sign::Plus { h2.nth_root(p) } else { BigInt::zero() };
                    b
                })
                .collect();
            (parts, centers)
        }
        IntNorm::Max => {
            let r0q = BigRational::from_float(r0).expect("finite");
            let per_axis: Vec<Dim1Partition> = (0..d - 1)
                .map(|s| {
                    let pos: Vec<BigRational> = config
                        .centers
                        .iter()
                        .map(|c| BigRational::from_float(c[s]).expect("finite") / &r0q)
                        .collect();
                    dim1_partition(&pos)
                })
                .collect::<Result<_, _>>()?;
            let mut parts = Vec::new();
            let mut centers = Vec::new();
            let scale = BigRational::from_integer(BigInt::one() << f);
            for i in 0..k {
                let choice: Vec<usize> =
                    per_axis.iter().map(|dp| dp.parts.iter().position(|p| p.contains(&i)).expect("covering")).collect();
                let members: Vec<usize> = (0..k)
                    .filter(|&j| per_axis.iter().zip(&choice).all(|(dp, &c)| dp.parts[c].contains(&j)))
                    .collect();
                if members[0] != i {
                    continue;
                }
                let mut a: Vec<BigInt> = per_axis
                    .iter()
                    .zip(&choice)
                    .map(|(dp, &c)| (&dp.midpoints()[c] * &r0q * &scale).floor().to_integer())
                    .collect();
                a.push(&frame.r0 / 2);
                parts.push(members);
                centers.push(a);
            }
            (parts, centers)
        }
    };
    if !is_partition(&partition, k) {
        return Err(Error::Verification("construction did not return a partition".into()));
    }
    let checks: Vec<PartCheck> = partition
        .iter()
        .zip(&centers)
        .enumerate()
        .map(|(i, (members, a))| frame.check_part(a, members, kappa, n_mc, stream::derive_seed(seed, &[i as u64])))
        .collect();
    let verified = checks.iter().all(|c| c.exact_inclusion && c.mc_ok);
    let a0 = checks.iter().map(|c| c.ball_estimate).fold(f64::INFINITY, f64::min);
    Ok(PartitionWitness {
        partition,
        kappa,
        eta,
        eta_log2: eta.log2(),
        r0,
        radius: 2.0 * kappa,
        a0,
        c_k: ck.to_string(),
        epsilon: eps.to_string(),
        parts: checks,
        verified,
    })
}

trait DivFloorBig {
    fn div_floor_big(&self, m: &BigInt) -> BigInt;
}

impl DivFloorBig for BigInt {
    fn div_floor_big(&self, m: &BigInt) -> BigInt {
        num_integer::Integer::div_floor(self, m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx(d: usize, p: Exponent) -> NormContext {
        NormContext::new(d, p).unwrap()
    }

    fn cfg(c: Vec<Vec<f64>>) -> CenterConfig {
        CenterConfig::new(c).unwrap()
    }

    #[test]
    fn c_k_values() {
        let c = c_k_constants(3);
        assert_eq!(c, vec![rat(1, 1), rat(3, 1), rat(16, 3)]);
        assert!(c_k_constants(0).is_empty());
    }

    #[test]
    fn grow_cluster_examples() {
        let c = ctx(2, Exponent::Finite(2.0));
        let one = cfg(vec![vec![1.0, 0.0]]);
        let cl = grow_cluster(&one, 0, 1.0, &c).unwrap();
        assert_eq!((cl.members, cl.radius), (vec![0], 0.0));
        let far = cfg(vec![vec![0.0, 0.0], vec![10.0, 0.0]]);
        assert_eq!(grow_cluster(&far, 1, 1.0, &c).unwrap().members, vec![1]);
        let near = cfg(vec![vec![0.0, 0.0], vec![0.5, 0.0]]);
        let cl = grow_cluster(&near, 0, 1.0, &c).unwrap();
        assert_eq!(cl.members, vec![0, 1]);
        assert_eq!(cl.radius, 0.25);
        assert!(cluster_holds(&near, &cl, 1.0, &c));
        assert!(grow_cluster(&near, 0, 0.0, &c).is_err());
    }

    #[test]
    fn grouping_examples() {
        let c = ctx(2, Exponent::Finite(2.0));
        let g = group_partition(&cfg(vec![vec![3.0, 0.0]]), 0.7, &c).unwrap();
        assert_eq!(g.partition(), vec![vec![0]]);
        let sep = cfg(vec![vec![0.0, 0.0], vec![100.0, 0.0], vec![200.0, 0.0]]);
        let g = group_partition(&sep, 1.0, &c).unwrap();
        assert_eq!(g.partition(), vec![vec![0], vec![1], vec![2]]);
        assert!(grouping_holds(&sep, &g, &c));
        let tight = cfg(vec![vec![0.0, 0.0], vec![0.01, 0.0], vec![0.02, 0.0]]);
        let g = group_partition(&tight, 1.0, &c).unwrap();
        assert_eq!(g.partition(), vec![vec![0, 1, 2]]);
        assert!(g.parts[0].radius <= 1.0);
        assert!(grouping_holds(&tight, &g, &c));
    }

    #[test]
    fn dim1_examples() {
        let p = dim1_partition_f64(&[0.7]).unwrap();
        assert_eq!(p.parts, vec![vec![0]]);
        assert_eq!(p.min_length(), rat(2, 1));
        let p = dim1_partition_f64(&[3.0, 0.0]).unwrap();
        assert_eq!(p.parts, vec![vec![1], vec![0]]);
        assert_eq!(p.lengths(), vec![rat(2, 1), rat(2, 1)]);
        let p = dim1_partition_f64(&[0.0, 0.5]).unwrap();
        assert!(p.min_length() >= rat(1, 1));
        let brute = [vec![vec![0usize, 1]], vec![vec![0], vec![1]]];
        let c: Vec<BigRational> = [0.0, 0.5].iter().map(|v| BigRational::from_float(*v).unwrap()).collect();
        let best = brute
            .iter()
            .map(|parts| parts.iter().map(|q| dim1_piece_length(&c, q)).min().unwrap())
            .max()
            .unwrap();
        assert!(best >= rat(1, 1));
        for (part, (lo, hi)) in p.parts.iter().zip(&p.pieces) {
            assert_eq!(dim1_piece_length(&c, part), hi - lo);
        }
    }

    #[test]
    fn piece_length_oracle_matches_formula() {
        let c: Vec<BigRational> = [rat(0, 1), rat(1, 3), rat(3, 2), rat(5, 2)].to_vec();
        let p = dim1_partition(&c).unwrap();
        assert!(is_partition(&p.parts, 4));
        for (part, (lo, hi)) in p.parts.iter().zip(&p.pieces) {
            assert_eq!(dim1_piece_length(&c, part), hi - lo);
        }
        assert!(p.min_length() >= p.bound);
    }

    #[test]
    fn eta_conditions() {
        let e = eta_finite(0.01, 2.0);
        assert!(e > 0.0 && e < 0.01);
        let l = 2.0 * e;
        assert!(2.0 * l * (1.0 + l) + l * l < (0.005f64).powi(2));
    }

    #[test]
    fn frac_bits_values() {
        assert_eq!(frac_bits(1.0), 0);
        assert_eq!(frac_bits(0.5), 1);
        assert_eq!(frac_bits(0.375), 3);
        assert_eq!(frac_bits(1024.0), 0);
        assert_eq!(to_fixed(0.375, 4), BigInt::from(6));
        assert_eq!(to_fixed(-0.375, 4), BigInt::from(-6));
    }

    #[test]
    fn witness_single_centre() {
        for p in [Exponent::Finite(1.0), Exponent::Finite(2.0), Exponent::Infinity] {
            let c = ctx(2, p);
            let w = combinatorial_witness(&cfg(vec![vec![5.0, 0.0]]), 1.0, &c, 128, 1).unwrap();
            assert_eq!(w.partition, vec![vec![0]]);
            assert!(w.verified, "{w:?}");
        }
    }

    #[test]
    fn witness_coincident_centres() {
        for p in [Exponent::Finite(2.0), Exponent::Infinity] {
            let c = ctx(3, p);
            let w = combinatorial_witness(&cfg(vec![vec![1.0, 2.0, 0.0], vec![1.0, 2.0, 0.0]]), 1.0, &c, 128, 2).unwrap();
            assert_eq!(w.partition, vec![vec![0, 1]]);
            assert!(w.verified);
        }
    }

    #[test]
    fn witness_mixed_configuration() {
        for p in [Exponent::Finite(1.0), Exponent::Finite(2.0), Exponent::Infinity] {
            let c = ctx(2, p);
            let (_, r0) = witness_scale(3, 1.0, &c).unwrap();
            let conf = cfg(vec![vec![0.0, 0.0], vec![0.01 * r0, 0.0], vec![1.5 * r0, 0.0]]);
            let w = combinatorial_witness(&conf, 1.0, &c, 256, 3).unwrap();
            assert!(is_partition(&w.partition, 3));
            assert!(w.verified, "{p}: {w:?}");
        }
    }

    #[test]
    fn witness_rejects_fractional_p() {
        let c = ctx(2, Exponent::Finite(1.5));
        assert!(combinatorial_witness(&cfg(vec![vec![0.0, 0.0]]), 1.0, &c, 8, 1).is_err());
    }
}
