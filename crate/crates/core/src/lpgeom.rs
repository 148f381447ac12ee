//! ℓ^p geometry: norms, balls, half-balls, sections of the unit ball, the
//! section map Φ, composable regions and Monte Carlo measure estimation.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::stream;
use crate::Error;

/// Slack used by geometric predicates that are evaluated in floating point.
pub const GEOM_EPS: f64 = 1e-10;

/// Norm exponent. `Infinity` is kept separate so the max-norm is never
/// approximated by a large finite power.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Exponent {
    Finite(f64),
    Infinity,
}

impl Exponent {
    pub fn is_infinite(self) -> bool {
        matches!(self, Exponent::Infinity)
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            Exponent::Finite(p) => Some(p),
            Exponent::Infinity => None,
        }
    }

    /// The exponent as an integer, when it is one.
    pub fn as_integer(self) -> Option<u32> {
        match self {
            Exponent::Finite(p) if p.fract() == 0.0 && (1.0..=64.0).contains(&p) => Some(p as u32),
            _ => None,
        }
    }
}

impl fmt::Display for Exponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Exponent::Finite(p) => write!(f, "{p}"),
            Exponent::Infinity => write!(f, "inf"),
        }
    }
}

impl FromStr for Exponent {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim().to_ascii_lowercase();
        if t == "inf" || t == "infinity" || t == "∞" {
            return Ok(Exponent::Infinity);
        }
        let p: f64 = t
            .parse()
            .map_err(|_| Error::InvalidParameter(format!("cannot parse exponent `{s}`")))?;
        if !(p >= 1.0) || !p.is_finite() {
            return Err(Error::InvalidParameter(format!("exponent must be in [1, inf], got {s}")));
        }
        Ok(Exponent::Finite(p))
    }
}

impl Serialize for Exponent {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Exponent::Finite(p) => s.serialize_f64(*p),
            Exponent::Infinity => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Exponent {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(p) => Exponent::from_str(&p.to_string()).map_err(serde::de::Error::custom),
            Raw::Text(t) => Exponent::from_str(&t).map_err(serde::de::Error::custom),
        }
    }
}

/// Ambient dimension and norm exponent.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormContext {
    pub d: usize,
    pub p: Exponent,
}

impl NormContext {
    pub fn new(d: usize, p: Exponent) -> Result<Self, Error> {
        if d == 0 {
            return Err(Error::InvalidParameter("dimension must be at least 1".into()));
        }
        if let Exponent::Finite(q) = p {
            if !(q >= 1.0) || !q.is_finite() {
                return Err(Error::InvalidParameter(format!("exponent must be in [1, inf], got {q}")));
            }
        }
        Ok(NormContext { d, p })
    }

    /// Norm of a vector of any length (used for both R^d and R^{d-1}).
    #[inline]
    pub fn norm(&self, v: &[f64]) -> f64 {
        lp_norm_slice(v, self.p)
    }

    #[inline]
    pub fn dist(&self, a: &[f64], b: &[f64]) -> f64 {
        debug_assert_eq!(a.len(), b.len());
        match self.p {
            Exponent::Infinity => a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs())),
            Exponent::Finite(p) if p == 2.0 => {
                a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
            }
            Exponent::Finite(p) if p == 1.0 => a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum(),
            Exponent::Finite(p) => {
                let scale = a.iter().zip(b).fold(0.0, |m: f64, (x, y)| m.max((x - y).abs()));
                if scale == 0.0 {
                    return 0.0;
                }
                let s: f64 = a.iter().zip(b).map(|(x, y)| ((x - y).abs() / scale).powf(p)).sum();
                scale * s.powf(1.0 / p)
            }
        }
    }
}

fn lp_norm_slice(v: &[f64], p: Exponent) -> f64 {
    match p {
        Exponent::Infinity => v.iter().fold(0.0, |m, x| m.max(x.abs())),
        Exponent::Finite(p) if p == 2.0 => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
        Exponent::Finite(p) if p == 1.0 => v.iter().map(|x| x.abs()).sum(),
        Exponent::Finite(p) => {
            let scale = v.iter().fold(0.0, |m: f64, x| m.max(x.abs()));
            if scale == 0.0 {
                return 0.0;
            }
            let s: f64 = v.iter().map(|x| (x.abs() / scale).powf(p)).sum();
            scale * s.powf(1.0 / p)
        }
    }
}

pub fn lp_norm(v: &[f64], ctx: &NormContext) -> f64 {
    ctx.norm(v)
}

/// α_p = 2^{1/p} − 1, the radius of the empty ball at e_d.
pub fn alpha_p(p: Exponent) -> Result<f64, Error> {
    match p {
        Exponent::Infinity => Err(Error::InvalidParameter("alpha_p is undefined for p = inf".into())),
        Exponent::Finite(q) if q >= 1.0 => Ok((q.recip() * std::f64::consts::LN_2).exp_m1()),
        Exponent::Finite(q) => Err(Error::InvalidParameter(format!("exponent must be >= 1, got {q}"))),
    }
}

/// Radius of the section of the unit ball at height h.
pub fn rho(h: f64, ctx: &NormContext) -> Result<f64, Error> {
    if !(0.0..1.0).contains(&h) {
        return Err(Error::InvalidParameter(format!("section height must be in [0,1), got {h}")));
    }
    Ok(match ctx.p {
        Exponent::Infinity => 1.0,
        Exponent::Finite(p) => (1.0 - h.powf(p)).powf(1.0 / p),
    })
}

/// Φ: sends a point of the section S_h onto S_0.
pub fn phi_map(x: &[f64], ctx: &NormContext) -> Result<Vec<f64>, Error> {
    let d = x.len();
    let h = x[d - 1];
    if h >= 1.0 {
        return Err(Error::InvalidParameter(format!("phi_map needs x·e_d < 1, got {h}")));
    }
    let r = rho(h.max(0.0), ctx)?;
    let mut y: Vec<f64> = x.iter().map(|v| v / r).collect();
    y[d - 1] = 0.0;
    Ok(y)
}

/// Inverse of Φ restricted to S_h: x0 ↦ ρ(h)x0 + h e_d.
pub fn phi_inverse(x0: &[f64], h: f64, ctx: &NormContext) -> Result<Vec<f64>, Error> {
    let d = x0.len();
    let r = rho(h, ctx)?;
    let mut y: Vec<f64> = x0.iter().map(|v| v * r).collect();
    y[d - 1] = h;
    Ok(y)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl Ball {
    pub fn new(center: Vec<f64>, radius: f64) -> Result<Self, Error> {
        if !(radius >= 0.0) {
            return Err(Error::InvalidParameter(format!("radius must be >= 0, got {radius}")));
        }
        Ok(Ball { center, radius })
    }

    #[inline]
    pub fn contains(&self, x: &[f64], ctx: &NormContext) -> bool {
        ctx.dist(x, &self.center) < self.radius
    }
}

/// Open half-ball B^+(c, r) = B(c, r) ∩ {x·e_d > c·e_d}.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HalfBall {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl HalfBall {
    pub fn new(center: Vec<f64>, radius: f64) -> Result<Self, Error> {
        if !(radius >= 0.0) {
            return Err(Error::InvalidParameter(format!("radius must be >= 0, got {radius}")));
        }
        Ok(HalfBall { center, radius })
    }

    #[inline]
    pub fn level(&self) -> f64 {
        self.center[self.center.len() - 1]
    }

    #[inline]
    pub fn top(&self) -> f64 {
        self.level() + self.radius
    }

    #[inline]
    pub fn contains(&self, x: &[f64], ctx: &NormContext) -> bool {
        let d = x.len();
        x[d - 1] > self.center[d - 1] && ctx.dist(x, &self.center) < self.radius
    }
}

/// Axis-aligned box [lo, hi).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxisBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl AxisBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self, Error> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::InvalidParameter("box corners must have equal, non-zero length".into()));
        }
        for (a, b) in lo.iter().zip(&hi) {
            if !a.is_finite() || !b.is_finite() || b < a {
                return Err(Error::DegenerateBox(format!("[{a}, {b}]")));
            }
        }
        Ok(AxisBox { lo, hi })
    }

    pub fn cube(d: usize, lo: f64, hi: f64) -> Result<Self, Error> {
        AxisBox::new(vec![lo; d], vec![hi; d])
    }

    pub fn around(center: &[f64], half_width: f64) -> Result<Self, Error> {
        AxisBox::new(
            center.iter().map(|c| c - half_width).collect(),
            center.iter().map(|c| c + half_width).collect(),
        )
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(a, b)| b - a).product()
    }

    pub fn is_flat(&self) -> bool {
        self.lo.iter().zip(&self.hi).any(|(a, b)| b <= a)
    }

    #[inline]
    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter().zip(self.lo.iter().zip(&self.hi)).all(|(v, (a, b))| *a <= *v && *v < *b)
    }

    pub fn intersect(&self, other: &AxisBox) -> Option<AxisBox> {
        let lo: Vec<f64> = self.lo.iter().zip(&other.lo).map(|(a, b)| a.max(*b)).collect();
        let hi: Vec<f64> = self.hi.iter().zip(&other.hi).map(|(a, b)| a.min(*b)).collect();
        if lo.iter().zip(&hi).any(|(a, b)| b < a) {
            return None;
        }
        Some(AxisBox { lo, hi })
    }

    pub fn hull(&self, other: &AxisBox) -> AxisBox {
        AxisBox {
            lo: self.lo.iter().zip(&other.lo).map(|(a, b)| a.min(*b)).collect(),
            hi: self.hi.iter().zip(&other.hi).map(|(a, b)| a.max(*b)).collect(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        for (s, o) in out.iter_mut().enumerate() {
            *o = self.lo[s] + (self.hi[s] - self.lo[s]) * rng.random::<f64>();
        }
    }
}

/// A finite boolean combination of balls, half-balls, boxes and horizontal
/// half-spaces.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Region {
    Everything,
    Nothing,
    Ball(Ball),
    HalfBall(HalfBall),
    /// Open half-space {x·e_d > h}.
    Above(f64),
    /// Closed half-space {x·e_d ≤ h}.
    AtOrBelow(f64),
    Box(AxisBox),
    Union(Vec<Region>),
    Intersection(Vec<Region>),
    Difference(Box<Region>, Box<Region>),
}

impl Region {
    pub fn ball(center: Vec<f64>, radius: f64) -> Region {
        Region::Ball(Ball { center, radius })
    }

    pub fn half_ball(center: Vec<f64>, radius: f64) -> Region {
        Region::HalfBall(HalfBall { center, radius })
    }

    pub fn minus(self, other: Region) -> Region {
        Region::Difference(Box::new(self), Box::new(other))
    }

    pub fn contains(&self, x: &[f64], ctx: &NormContext) -> bool {
        let d = x.len();
        match self {
            Region::Everything => true,
            Region::Nothing => false,
            Region::Ball(b) => b.contains(x, ctx),
            Region::HalfBall(b) => b.contains(x, ctx),
            Region::Above(h) => x[d - 1] > *h,
            Region::AtOrBelow(h) => x[d - 1] <= *h,
            Region::Box(b) => b.contains(x),
            Region::Union(rs) => rs.iter().any(|r| r.contains(x, ctx)),
            Region::Intersection(rs) => rs.iter().all(|r| r.contains(x, ctx)),
            Region::Difference(a, b) => a.contains(x, ctx) && !b.contains(x, ctx),
        }
    }

    /// A box containing the region, or `None` when the region is unbounded.
    /// The empty region reports `None` as well.
    pub fn bounding_box(&self, d: usize) -> Option<AxisBox> {
        match self {
            Region::Everything | Region::Nothing | Region::Above(_) | Region::AtOrBelow(_) => None,
            Region::Ball(b) => Some(AxisBox {
                lo: b.center.iter().map(|c| c - b.radius).collect(),
                hi: b.center.iter().map(|c| c + b.radius).collect(),
            }),
            Region::HalfBall(b) => {
                let mut lo: Vec<f64> = b.center.iter().map(|c| c - b.radius).collect();
                let hi: Vec<f64> = b.center.iter().map(|c| c + b.radius).collect();
                lo[d - 1] = b.center[d - 1];
                Some(AxisBox { lo, hi })
            }
            Region::Box(b) => Some(b.clone()),
            Region::Union(rs) => {
                let mut acc: Option<AxisBox> = None;
                for r in rs {
                    if matches!(r, Region::Nothing) {
                        continue;
                    }
                    let b = r.bounding_box(d)?;
                    acc = Some(match acc {
                        None => b,
                        Some(a) => a.hull(&b),
                    });
                }
                acc
            }
            Region::Intersection(rs) => {
                let mut acc: Option<AxisBox> = None;
                for r in rs {
                    if let Some(b) = r.bounding_box(d) {
                        acc = Some(match acc {
                            None => b,
                            Some(a) => a.intersect(&b).unwrap_or_else(|| AxisBox {
                                lo: a.lo.clone(),
                                hi: a.lo.clone(),
                            }),
                        });
                    }
                }
                let mut acc = acc?;
                for r in rs {
                    match r {
                        Region::Above(h) => acc.lo[d - 1] = acc.lo[d - 1].max(*h),
                        Region::AtOrBelow(h) => acc.hi[d - 1] = acc.hi[d - 1].min(*h),
                        _ => {}
                    }
                }
                if acc.hi[d - 1] < acc.lo[d - 1] {
                    acc.hi[d - 1] = acc.lo[d - 1];
                }
                Some(acc)
            }
            Region::Difference(a, _) => a.bounding_box(d),
        }
    }
}

/// Monte Carlo volume of `region` estimated with `n` uniform points of `bbox`.
/// Returns the estimate and its binomial standard error.
pub fn mc_measure(
    region: &Region,
    bbox: &AxisBox,
    n: usize,
    seed: u64,
    ctx: &NormContext,
) -> Result<(f64, f64), Error> {
    if bbox.is_flat() {
        return Err(Error::DegenerateBox("Monte Carlo box has zero volume".into()));
    }
    if n == 0 {
        return Err(Error::InvalidParameter("Monte Carlo sample count must be positive".into()));
    }
    let mut rng = stream::keyed_rng(seed, &[stream::tag(b"mc_measure")]);
    let mut x = vec![0.0; bbox.dim()];
    let mut hits = 0usize;
    for _ in 0..n {
        bbox.sample(&mut rng, &mut x);
        if region.contains(&x, ctx) {
            hits += 1;
        }
    }
    let vol = bbox.volume();
    let f = hits as f64 / n as f64;
    Ok((vol * f, vol * (f * (1.0 - f) / n as f64).sqrt()))
}

/// Uniform point of the unit ℓ^p ball of the given dimension, by rejection
/// from the cube [-1,1]^dim.
pub fn sample_unit_ball<R: Rng + ?Sized>(rng: &mut R, dim: usize, p: Exponent, out: &mut [f64]) {
    loop {
        for o in out.iter_mut().take(dim) {
            *o = 2.0 * rng.random::<f64>() - 1.0;
        }
        if lp_norm_slice(&out[..dim], p) < 1.0 {
            return;
        }
    }
}
