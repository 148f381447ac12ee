//! Samplers X^H and U^H, the proportion function α_h, section inclusion
//! checks and the exact counterexample in dimension three.

use std::fmt;
use std::io::{self, Write};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use rand::Rng;
use serde::Serialize;

use crate::lpgeom::{self, Ball, NormContext};
use crate::ppp::{Mask, PointId, PointStore};
use crate::stats::{self, TestResult};
use crate::stream;
use crate::Error;

/// H^+(0) ∩ ⋃ B(c, r) with c·e_d ≤ 0 and ‖c‖ ≥ r.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct RecenteredHistory {
    pub balls: Vec<Ball>,
}

impl RecenteredHistory {
    pub fn empty() -> Self {
        RecenteredHistory { balls: Vec::new() }
    }

    pub fn new(balls: Vec<Ball>, ctx: &NormContext) -> Result<Self, Error> {
        for b in &balls {
            let d = b.center.len();
            if d != ctx.d || b.center[d - 1] > 0.0 || ctx.norm(&b.center) < b.radius {
                return Err(Error::InvalidParameter(format!("ball {b:?} is not admissible")));
            }
        }
        Ok(RecenteredHistory { balls })
    }

    /// 1 to 4 balls, c·e_d ∈ [−2, 0], lateral coordinates in [−2, 2],
    /// radius uniform in (0, ‖c‖].
    pub fn random<R: Rng + ?Sized>(rng: &mut R, ctx: &NormContext) -> Self {
        let d = ctx.d;
        let n = rng.random_range(1..=4);
        let balls = (0..n)
            .map(|_| {
                let mut c: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..=2.0)).collect();
                c[d - 1] = -2.0 * rng.random::<f64>();
                let r = ctx.norm(&c) * (1.0 - rng.random::<f64>());
                Ball { center: c, radius: r }
            })
            .collect();
        RecenteredHistory { balls }
    }

    /// The half-ball B^+(c, ‖c‖) with c = (3, 3, 0).
    pub fn counterexample_history(ctx: &NormContext) -> Self {
        let c = vec![3.0, 3.0, 0.0];
        let r = ctx.norm(&c);
        RecenteredHistory { balls: vec![Ball { center: c, radius: r }] }
    }

    pub fn is_empty(&self) -> bool {
        self.balls.is_empty()
    }

    /// Membership in the open set H^+(0) ∩ ⋃ B(c, r).
    #[inline]
    pub fn contains(&self, x: &[f64], ctx: &NormContext) -> bool {
        x[x.len() - 1] > 0.0 && self.balls.iter().any(|b| b.contains(x, ctx))
    }

    /// Membership with the level 0 included, as used for sections.
    #[inline]
    pub fn contains_closed_level(&self, x: &[f64], ctx: &NormContext) -> bool {
        x[x.len() - 1] >= 0.0 && self.balls.iter().any(|b| b.contains(x, ctx))
    }

    /// The set H/s.
    pub fn scaled(&self, s: f64) -> Self {
        RecenteredHistory {
            balls: self
                .balls
                .iter()
                .map(|b| Ball { center: b.center.iter().map(|v| v / s).collect(), radius: b.radius / s })
                .collect(),
        }
    }
}

struct HistoryOnly<'a> {
    h: &'a RecenteredHistory,
    ctx: &'a NormContext,
}

impl Mask for HistoryOnly<'_> {
    fn excludes(&self, _: PointId, x: &[f64]) -> bool {
        self.h.contains(x, self.ctx)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct XSample {
    pub x: Vec<f64>,
    /// ‖X_2‖, norm of the second-closest admissible point.
    pub x2_norm: f64,
}

/// n independent copies of X^H (closest point of H^+(0) ∩ N \ H to the
/// origin) together with ‖X_2^H‖. Sample i uses the stream derived from
/// (seed, i), so equal seeds couple different H on the same points.
pub fn sample_x(h: &RecenteredHistory, ctx: &NormContext, seed: u64, n: usize) -> Result<Vec<XSample>, Error> {
    let origin = vec![0.0; ctx.d];
    let mask = HistoryOnly { h, ctx };
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut store = PointStore::poisson(ctx.d, stream::derive_seed(seed, &[i as u64]))?;
        let found = store.k_nearest_above(&origin, 2, &mask, ctx)?;
        out.push(XSample { x: found[0].x.clone(), x2_norm: found[1].dist });
    }
    Ok(out)
}

const U_MIN_RATE: f64 = 1e-6;
const U_RATE_WINDOW: u64 = 1_000_000;

/// n uniform points of B^+(0, 1) \ H by rejection from [−1, 1]^{d−1} × [0, 1).
pub fn sample_u(h: &RecenteredHistory, ctx: &NormContext, seed: u64, n: usize) -> Result<Vec<Vec<f64>>, Error> {
    let d = ctx.d;
    let mut rng = stream::keyed_rng(seed, &[stream::tag(b"sample_u")]);
    let mut out = Vec::with_capacity(n);
    let mut tries: u64 = 0;
    let mut x = vec![0.0; d];
    while out.len() < n {
        for v in x.iter_mut().take(d - 1) {
            *v = 2.0 * rng.random::<f64>() - 1.0;
        }
        x[d - 1] = rng.random::<f64>();
        tries += 1;
        if x[d - 1] > 0.0 && ctx.norm(&x) < 1.0 && !h.contains(&x, ctx) {
            out.push(x.clone());
        }
        if tries >= U_RATE_WINDOW && (out.len() as f64) < U_MIN_RATE * tries as f64 {
            return Err(Error::EmptyRegion(out.len() as f64 / tries as f64));
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, Serialize)]
pub struct EcdfComparison {
    pub grid: Vec<f64>,
    pub survival_a: Vec<f64>,
    pub survival_b: Vec<f64>,
    pub stderr: Vec<f64>,
    /// Largest z of survival_b − survival_a over the grid (0 when none).
    pub max_violation_z: f64,
    pub violations: usize,
    pub z_threshold: f64,
}

impl EcdfComparison {
    pub fn passes(&self) -> bool {
        self.violations == 0
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "h,survival_a,survival_b,stderr")?;
        for i in 0..self.grid.len() {
            writeln!(w, "{:?},{:?},{:?},{:?}", self.grid[i], self.survival_a[i], self.survival_b[i], self.stderr[i])?;
        }
        Ok(())
    }
}

pub const ECDF_GRID: usize = 50;
pub const Z_THRESHOLD: f64 = 4.0;

fn survival(sorted: &[f64], t: f64) -> f64 {
    let below = sorted.partition_point(|v| *v < t);
    (sorted.len() - below) as f64 / sorted.len() as f64
}

/// One-sided check that `a` stochastically dominates `b`: flags grid points
/// where P(a ≥ h) < P(b ≥ h) − z·se. The default grid is 50 quantiles of the
/// pooled sample.
pub fn ecdf_dominance(a: &[f64], b: &[f64], grid: Option<&[f64]>) -> Result<EcdfComparison, Error> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InsufficientData("ecdf comparison needs two non-empty samples".into()));
    }
    let mut sa = a.to_vec();
    let mut sb = b.to_vec();
    sa.sort_by(f64::total_cmp);
    sb.sort_by(f64::total_cmp);
    let grid: Vec<f64> = match grid {
        Some(g) => g.to_vec(),
        None => {
            let mut pooled: Vec<f64> = sa.iter().chain(sb.iter()).copied().collect();
            pooled.sort_by(f64::total_cmp);
            let mut g: Vec<f64> =
                (0..ECDF_GRID).map(|i| stats::quantile(&pooled, (i as f64 + 0.5) / ECDF_GRID as f64)).collect();
            g.dedup();
            g
        }
    };
    let (na, nb) = (sa.len() as f64, sb.len() as f64);
    let mut out = EcdfComparison {
        grid: grid.clone(),
        survival_a: Vec::with_capacity(grid.len()),
        survival_b: Vec::with_capacity(grid.len()),
        stderr: Vec::with_capacity(grid.len()),
        max_violation_z: 0.0,
        violations: 0,
        z_threshold: Z_THRESHOLD,
    };
    for &t in &grid {
        let (pa, pb) = (survival(&sa, t), survival(&sb, t));
        let pool = (pa * na + pb * nb) / (na + nb);
        let se = (pool * (1.0 - pool) * (1.0 / na + 1.0 / nb)).sqrt();
        let gap = pb - pa;
        let z = if gap <= 0.0 {
            0.0
        } else if se > 0.0 {
            gap / se
        } else {
            f64::INFINITY
        };
        out.max_violation_z = out.max_violation_z.max(z);
        if z > Z_THRESHOLD {
            out.violations += 1;
        }
        out.survival_a.push(pa);
        out.survival_b.push(pb);
        out.stderr.push(se);
    }
    Ok(out)
}

fn unit_section_point<R: Rng + ?Sized>(rng: &mut R, ctx: &NormContext, x0: &mut [f64]) {
    let d = ctx.d;
    lpgeom::sample_unit_ball(rng, d - 1, ctx.p, x0);
    x0[d - 1] = 0.0;
}

/// Estimate of α_h = |p(S_h \ H)| / |p(S_h)| with its binomial stderr.
/// The same seed reuses the same section points for every h.
pub fn alpha_h_estimate(
    h_set: &RecenteredHistory,
    h: f64,
    ctx: &NormContext,
    n: usize,
    seed: u64,
) -> Result<(f64, f64), Error> {
    if n == 0 {
        return Err(Error::InvalidParameter("alpha_h needs n >= 1".into()));
    }
    let r = lpgeom::rho(h, ctx)?;
    let d = ctx.d;
    let mut rng = stream::keyed_rng(seed, &[stream::tag(b"alpha_h")]);
    let mut x0 = vec![0.0; d];
    let mut x = vec![0.0; d];
    let mut free = 0usize;
    for _ in 0..n {
        unit_section_point(&mut rng, ctx, &mut x0);
        for s in 0..d - 1 {
            x[s] = r * x0[s];
        }
        x[d - 1] = h;
        if !h_set.contains_closed_level(&x, ctx) {
            free += 1;
        }
    }
    let a = free as f64 / n as f64;
    Ok((a, (a * (1.0 - a) / n as f64).sqrt()))
}

/// α̂ along a grid of h values.
pub fn alpha_curve(
    h_set: &RecenteredHistory,
    grid: &[f64],
    ctx: &NormContext,
    n: usize,
    seed: u64,
) -> Result<Vec<(f64, f64, f64)>, Error> {
    grid.iter()
        .map(|&h| alpha_h_estimate(h_set, h, ctx, n, seed).map(|(a, se)| (h, a, se)))
        .collect()
}

/// Largest drop α̂(h_i) − α̂(h_j), i < j, in units of the pooled stderr.
pub fn max_decrease_z(curve: &[(f64, f64, f64)]) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..curve.len() {
        for j in i + 1..curve.len() {
            let drop = curve[i].1 - curve[j].1;
            if drop > 0.0 {
                let se = (curve[i].2.powi(2) + curve[j].2.powi(2)).sqrt();
                worst = worst.max(if se > 0.0 { drop / se } else { f64::INFINITY });
            }
        }
    }
    worst
}

pub fn write_alpha_csv<W: Write>(curve: &[(f64, f64, f64)], mut w: W) -> io::Result<()> {
    writeln!(w, "h,estimate,stderr")?;
    for (h, a, se) in curve {
        writeln!(w, "{h:?},{a:?},{se:?}")?;
    }
    Ok(())
}

/// Whether x0 ∈ S_0 violates [Φ⁻¹_h(x0) ∈ H] ⇒ [Φ⁻¹_{h'}(x0) ∈ H].
pub fn section_violation_at(
    h_set: &RecenteredHistory,
    x0: &[f64],
    h: f64,
    h_prime: f64,
    ctx: &NormContext,
) -> Result<bool, Error> {
    let hi = lpgeom::phi_inverse(x0, h, ctx)?;
    let lo = lpgeom::phi_inverse(x0, h_prime, ctx)?;
    Ok(h_set.contains_closed_level(&hi, ctx) && !h_set.contains_closed_level(&lo, ctx))
}

/// Sampled points x0 of S_0 violating Φ(S_h ∩ H) ⊂ Φ(S_{h'} ∩ H).
pub fn section_inclusion_test(
    h_set: &RecenteredHistory,
    h: f64,
    h_prime: f64,
    ctx: &NormContext,
    n: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>, Error> {
    if !(0.0 <= h_prime && h_prime <= h && h < 1.0) {
        return Err(Error::InvalidParameter(format!("need 0 <= h' <= h < 1, got h={h}, h'={h_prime}")));
    }
    let mut rng = stream::keyed_rng(seed, &[stream::tag(b"section")]);
    let mut x0 = vec![0.0; ctx.d];
    let mut bad = Vec::new();
    for _ in 0..n {
        unit_section_point(&mut rng, ctx, &mut x0);
        if section_violation_at(h_set, &x0, h, h_prime, ctx)? {
            bad.push(x0.clone());
        }
    }
    Ok(bad)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CounterexampleReport {
    /// ‖(2/3)x − c‖³ + ρ(2/3)³.
    pub lifted: BigRational,
    /// ‖x − c‖³.
    pub base: BigRational,
    /// ‖c‖³ = 2·3³.
    pub radius_cubed: BigRational,
}

impl CounterexampleReport {
    pub fn lifted_inside(&self) -> bool {
        self.lifted < self.radius_cubed
    }

    pub fn base_outside(&self) -> bool {
        self.base > self.radius_cubed
    }

    pub fn passes(&self) -> bool {
        self.lifted_inside() && self.base_outside()
    }
}

impl fmt::Display for CounterexampleReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "p = d = 3, c = (3, 3, 0), x = (3/4, -1/2, 0)")?;
        writeln!(f, "|(2/3)x - c|^3 + rho(2/3)^3 = {} < {} : {}", self.lifted, self.radius_cubed, self.lifted_inside())?;
        writeln!(f, "|x - c|^3 = {} > {} : {}", self.base, self.radius_cubed, self.base_outside())?;
        write!(f, "{}", if self.passes() { "PASS" } else { "FAIL" })
    }
}

fn q(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

fn cube_norm3(v: &[BigRational]) -> BigRational {
    v.iter().fold(BigRational::zero(), |acc, t| {
        let a = if *t < BigRational::zero() { -t.clone() } else { t.clone() };
        acc + &a * &a * &a
    })
}

/// Exact evaluation of the two cubed distances of the counterexample.
pub fn counterexample_verify() -> CounterexampleReport {
    let c = [q(3, 1), q(3, 1), q(0, 1)];
    let x = [q(3, 4), q(-1, 2), q(0, 1)];
    let t = q(2, 3);
    let shrunk: Vec<BigRational> = x.iter().zip(&c).map(|(xi, ci)| &t * xi - ci).collect();
    let rho_cubed = BigRational::one() - &t * &t * &t;
    let lifted = cube_norm3(&shrunk) + rho_cubed;
    let diff: Vec<BigRational> = x.iter().zip(&c).map(|(xi, ci)| xi - ci).collect();
    let base = cube_norm3(&diff);
    CounterexampleReport { lifted, base, radius_cubed: cube_norm3(&c) }
}

#[derive(Clone, Debug, Serialize)]
pub struct UniformisationReport {
    pub band: (f64, f64),
    pub selected: usize,
    pub reference: usize,
    pub test: TestResult,
    pub max_ratio_norm: f64,
}

pub const MIN_BAND_SAMPLES: usize = 20;

/// Given ‖X_2^H‖ in a narrow band around s, X^H/‖X_2^H‖ is compared (last
/// coordinate, two-sample KS) with U^{H/s}.
pub fn uniformisation_check(
    h_set: &RecenteredHistory,
    ctx: &NormContext,
    n: usize,
    seed: u64,
    band: (f64, f64),
) -> Result<UniformisationReport, Error> {
    if !(band.0 > 0.0 && band.1 > band.0) {
        return Err(Error::InvalidParameter(format!("invalid band {band:?}")));
    }
    let xs = sample_x(h_set, ctx, seed, n)?;
    let d = ctx.d;
    let mut ys = Vec::new();
    let mut max_ratio: f64 = 0.0;
    for s in &xs {
        let ratio = ctx.norm(&s.x) / s.x2_norm;
        max_ratio = max_ratio.max(ratio);
        if s.x2_norm >= band.0 && s.x2_norm < band.1 {
            ys.push(s.x[d - 1] / s.x2_norm);
        }
    }
    if ys.len() < MIN_BAND_SAMPLES {
        return Err(Error::InsufficientData(format!(
            "{} samples in band {band:?}, need {MIN_BAND_SAMPLES}",
            ys.len()
        )));
    }
    let mid = 0.5 * (band.0 + band.1);
    let m = 5 * ys.len();
    let us: Vec<f64> = sample_u(&h_set.scaled(mid), ctx, stream::derive_seed(seed, &[stream::tag(b"reference")]), m)?
        .into_iter()
        .map(|u| u[d - 1])
        .collect();
    let test = stats::ks_two_sample(&ys, &us)?;
    Ok(UniformisationReport { band, selected: ys.len(), reference: m, test, max_ratio_norm: max_ratio })
}
