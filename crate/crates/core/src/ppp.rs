//! Lazily sampled homogeneous Poisson point process.
//!
//! Space is cut into unit lattice cells. The points of a cell are drawn from
//! a random stream keyed by (seed, cell coordinates), so the realization in
//! any region is fixed by the seed and never by the order of queries. A store
//! is a stack of layers; a point produced by layer `i` is kept when it lies in
//! the layer's region and in none of the regions of the layers before it.

use std::io::{self, Write};

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use rustc_hash::FxHashMap;

use crate::lpgeom::{AxisBox, NormContext, Region};
use crate::stream;
use crate::Error;

pub const MAX_DIM: usize = 8;
pub const INITIAL_SHELL: f64 = 1.0;
pub const SHELL_CAP: f64 = (1u64 << 20) as f64;

pub type CellKey = [i32; MAX_DIM];

/// Identity of a point: its lattice cell and its position within the cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PointId {
    pub cell: CellKey,
    pub slot: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Found {
    pub id: PointId,
    pub x: Vec<f64>,
    pub dist: f64,
}

#[derive(Clone, Debug)]
pub enum Source {
    Poisson { seed: u64, intensity: f64 },
    Points(Vec<Vec<f64>>),
}

#[derive(Clone, Debug)]
pub struct Layer {
    pub region: Region,
    pub source: Source,
}

/// Points excluded from a nearest-point query.
pub trait Mask {
    fn excludes(&self, id: PointId, x: &[f64]) -> bool;
}

pub struct NoMask;

impl Mask for NoMask {
    #[inline]
    fn excludes(&self, _: PointId, _: &[f64]) -> bool {
        false
    }
}

pub struct RegionMask<'a> {
    pub region: &'a Region,
    pub ctx: &'a NormContext,
}

impl Mask for RegionMask<'_> {
    fn excludes(&self, _: PointId, x: &[f64]) -> bool {
        self.region.contains(x, self.ctx)
    }
}

impl<M: Mask + ?Sized> Mask for &M {
    fn excludes(&self, id: PointId, x: &[f64]) -> bool {
        (**self).excludes(id, x)
    }
}

#[derive(Clone, Debug)]
struct LayerState {
    layer: Layer,
    poisson: Option<Poisson<f64>>,
    buckets: FxHashMap<CellKey, Vec<usize>>,
}

#[derive(Clone, Debug)]
pub struct PointStore {
    d: usize,
    geom: NormContext,
    intensity: f64,
    layers: Vec<LayerState>,
    cells: FxHashMap<CellKey, Vec<f64>>,
    finite: bool,
    trivial: bool,
}

fn plain_ctx(d: usize) -> Result<NormContext, Error> {
    NormContext::new(d, crate::Exponent::Finite(2.0))
}

pub fn cell_of(x: &[f64]) -> CellKey {
    let mut k = [0i32; MAX_DIM];
    for (s, v) in x.iter().enumerate() {
        k[s] = v.floor() as i32;
    }
    k
}

fn key_hash(key: &CellKey, d: usize) -> Vec<u64> {
    key[..d].iter().map(|&c| c as i64 as u64).collect()
}

impl PointStore {
    /// Unit-intensity process.
    pub fn poisson(d: usize, seed: u64) -> Result<Self, Error> {
        PointStore::with_intensity(d, seed, 1.0)
    }

    pub fn with_intensity(d: usize, seed: u64, intensity: f64) -> Result<Self, Error> {
        PointStore::layered(
            plain_ctx(d)?,
            vec![Layer { region: Region::Everything, source: Source::Poisson { seed, intensity } }],
        )
    }

    /// A finite store holding exactly the given points.
    pub fn from_points(d: usize, points: Vec<Vec<f64>>) -> Result<Self, Error> {
        PointStore::layered(
            plain_ctx(d)?,
            vec![Layer { region: Region::Everything, source: Source::Points(points) }],
        )
    }

    /// Layered store; `geom` is the norm used to evaluate the layer regions.
    pub fn layered(geom: NormContext, layers: Vec<Layer>) -> Result<Self, Error> {
        let d = geom.d;
        if d == 0 || d > MAX_DIM {
            return Err(Error::InvalidParameter(format!("dimension must be in 1..={MAX_DIM}, got {d}")));
        }
        let mut states = Vec::with_capacity(layers.len());
        let mut finite = true;
        let mut intensity = 1.0;
        for layer in layers {
            let mut poisson = None;
            let mut buckets: FxHashMap<CellKey, Vec<usize>> = FxHashMap::default();
            match &layer.source {
                Source::Poisson { intensity: lambda, .. } => {
                    if !(*lambda > 0.0) || !lambda.is_finite() {
                        return Err(Error::InvalidParameter(format!("intensity must be positive, got {lambda}")));
                    }
                    poisson = Some(Poisson::new(*lambda).map_err(|e| Error::InvalidParameter(e.to_string()))?);
                    finite = false;
                    intensity = *lambda;
                }
                Source::Points(pts) => {
                    for (i, p) in pts.iter().enumerate() {
                        if p.len() != d {
                            return Err(Error::InvalidParameter("point dimension mismatch".into()));
                        }
                        buckets.entry(cell_of(p)).or_default().push(i);
                    }
                }
            }
            states.push(LayerState { layer, poisson, buckets });
        }
        let trivial = states.len() == 1 && matches!(states[0].layer.region, Region::Everything);
        let mut store = PointStore { d, geom, intensity, layers: states, cells: FxHashMap::default(), finite, trivial };
        if finite {
            let keys: Vec<CellKey> = {
                let mut ks: Vec<CellKey> =
                    store.layers.iter().flat_map(|l| l.buckets.keys().copied()).collect();
                ks.sort();
                ks.dedup();
                ks
            };
            for k in keys {
                store.ensure_cell(k);
            }
        }
        Ok(store)
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn intensity(&self) -> f64 {
        self.intensity
    }

    pub fn is_finite(&self) -> bool {
        self.finite
    }

    pub fn layers(&self) -> impl Iterator<Item = &Layer> {
        self.layers.iter().map(|l| &l.layer)
    }

    pub fn generated_cells(&self) -> usize {
        self.cells.len()
    }

    fn generate_cell(&self, key: CellKey) -> Vec<f64> {
        let d = self.d;
        let ctx = self.geom;
        let mut out = Vec::new();
        let mut x = vec![0.0; d];
        for (li, st) in self.layers.iter().enumerate() {
            let keep = |x: &[f64], out: &mut Vec<f64>| {
                if self.trivial
                    || (st.layer.region.contains(x, &ctx)
                        && !self.layers[..li].iter().any(|e| e.layer.region.contains(x, &ctx)))
                {
                    out.extend_from_slice(x);
                }
            };
            match &st.layer.source {
                Source::Poisson { seed, .. } => {
                    let mut rng = stream::keyed_rng(*seed, &key_hash(&key, d));
                    let n = st.poisson.as_ref().map(|p| p.sample(&mut rng) as u64).unwrap_or(0);
                    for _ in 0..n {
                        for s in 0..d {
                            x[s] = key[s] as f64 + rng.random::<f64>();
                        }
                        keep(&x, &mut out);
                    }
                }
                Source::Points(pts) => {
                    if let Some(idx) = st.buckets.get(&key) {
                        for &i in idx {
                            keep(&pts[i], &mut out);
                        }
                    }
                }
            }
        }
        out
    }

    fn ensure_cell(&mut self, key: CellKey) {
        if !self.cells.contains_key(&key) {
            let pts = if self.finite && !self.layers.iter().any(|l| l.buckets.contains_key(&key)) {
                Vec::new()
            } else {
                self.generate_cell(key)
            };
            self.cells.insert(key, pts);
        }
    }

    fn cell_range(&self, b: &AxisBox) -> (CellKey, CellKey) {
        let mut lo = [0i32; MAX_DIM];
        let mut hi = [0i32; MAX_DIM];
        for s in 0..self.d {
            lo[s] = b.lo[s].floor().max(i32::MIN as f64 / 2.0) as i32;
            hi[s] = b.hi[s].floor().min(i32::MAX as f64 / 2.0) as i32;
        }
        (lo, hi)
    }

    fn for_each_key(&self, lo: &CellKey, hi: &CellKey, mut f: impl FnMut(CellKey)) {
        let d = self.d;
        let mut cur = *lo;
        loop {
            f(cur);
            let mut s = 0;
            loop {
                if s == d {
                    return;
                }
                if cur[s] < hi[s] {
                    cur[s] += 1;
                    break;
                }
                cur[s] = lo[s];
                s += 1;
            }
        }
    }

    /// Generate every cell meeting the box.
    pub fn ensure_box(&mut self, b: &AxisBox) {
        if self.finite {
            return;
        }
        let (lo, hi) = self.cell_range(b);
        let mut missing = Vec::new();
        self.for_each_key(&lo, &hi, |k| {
            if !self.cells.contains_key(&k) {
                missing.push(k);
            }
        });
        for k in missing {
            let pts = self.generate_cell(k);
            self.cells.insert(k, pts);
        }
    }

    /// True when every cell meeting the box has been generated.
    pub fn is_box_generated(&self, b: &AxisBox) -> bool {
        if self.finite {
            return true;
        }
        let (lo, hi) = self.cell_range(b);
        let mut all = true;
        self.for_each_key(&lo, &hi, |k| all &= self.cells.contains_key(&k));
        all
    }

    /// Visit the points of generated cells meeting the box (not filtered by
    /// the box itself).
    fn scan_cells(&self, b: &AxisBox, mut f: impl FnMut(PointId, &[f64])) {
        let d = self.d;
        if self.finite {
            for (k, pts) in &self.cells {
                for (slot, x) in pts.chunks_exact(d).enumerate() {
                    f(PointId { cell: *k, slot: slot as u32 }, x);
                }
            }
            return;
        }
        let (lo, hi) = self.cell_range(b);
        self.for_each_key(&lo, &hi, |k| {
            if let Some(pts) = self.cells.get(&k) {
                for (slot, x) in pts.chunks_exact(d).enumerate() {
                    f(PointId { cell: k, slot: slot as u32 }, x);
                }
            }
        });
    }

    /// Visit every point inside the box, generating cells as needed.
    pub fn for_each_in_box(&mut self, b: &AxisBox, mut f: impl FnMut(PointId, &[f64])) {
        self.ensure_box(b);
        self.scan_cells(b, |id, x| {
            if b.contains(x) {
                f(id, x)
            }
        });
    }

    /// Points inside the box, in a deterministic order.
    pub fn sample_box(&mut self, b: &AxisBox) -> Vec<(PointId, Vec<f64>)> {
        if b.is_flat() {
            return Vec::new();
        }
        let mut out = Vec::new();
        self.for_each_in_box(b, |id, x| out.push((id, x.to_vec())));
        out.sort_by(|a, b| a.0.cmp(&b.0));
        out
    }

    pub fn count_in_box(&mut self, b: &AxisBox) -> usize {
        if b.is_flat() {
            return 0;
        }
        let mut n = 0;
        self.for_each_in_box(b, |_, _| n += 1);
        n
    }

    /// Points of the region that lie in the given bounding box.
    pub fn points_in_region(
        &mut self,
        region: &Region,
        bbox: &AxisBox,
        ctx: &NormContext,
    ) -> Vec<(PointId, Vec<f64>)> {
        let mut out = Vec::new();
        self.for_each_in_box(bbox, |id, x| {
            if region.contains(x, ctx) {
                out.push((id, x.to_vec()))
            }
        });
        out.sort_by(|a, b| a.0.cmp(&b.0));
        out
    }

    pub fn coords(&self, id: PointId) -> Option<&[f64]> {
        let d = self.d;
        let pts = self.cells.get(&id.cell)?;
        let i = id.slot as usize * d;
        pts.get(i..i + d)
    }

    fn half_box(&self, x: &[f64], r: f64) -> AxisBox {
        let d = self.d;
        let mut lo: Vec<f64> = x.iter().map(|v| v - r).collect();
        let hi: Vec<f64> = x.iter().map(|v| v + r).collect();
        lo[d - 1] = x[d - 1];
        AxisBox { lo, hi }
    }

    fn scan_best<M: Mask + ?Sized>(
        &self,
        b: &AxisBox,
        x: &[f64],
        k: usize,
        mask: &M,
        ctx: &NormContext,
        best: &mut Vec<(f64, PointId)>,
    ) {
        let d = self.d;
        best.clear();
        let h = x[d - 1];
        self.scan_cells(b, |id, y| {
            if y[d - 1] <= h {
                return;
            }
            let dist = ctx.dist(x, y);
            if best.len() == k && dist >= best[k - 1].0 {
                return;
            }
            if mask.excludes(id, y) {
                return;
            }
            let pos = best.partition_point(|(e, i)| (*e, *i) < (dist, id));
            best.insert(pos, (dist, id));
            best.truncate(k);
        });
    }

    fn to_found(&self, best: &[(f64, PointId)]) -> Vec<Found> {
        best.iter()
            .map(|(dist, id)| Found { id: *id, x: self.coords(*id).expect("generated").to_vec(), dist: *dist })
            .collect()
    }

    /// The k points closest to x with strictly larger e_d coordinate that the
    /// mask does not exclude, nearest first. The window grows in doubling
    /// shells until the half-ball through the k-th candidate is fully sampled.
    pub fn k_nearest_above<M: Mask + ?Sized>(
        &mut self,
        x: &[f64],
        k: usize,
        mask: &M,
        ctx: &NormContext,
    ) -> Result<Vec<Found>, Error> {
        let mut best = Vec::with_capacity(k + 1);
        if self.finite {
            let b = self.half_box(x, 0.0);
            self.scan_best(&b, x, k, mask, ctx, &mut best);
            if best.len() < k {
                return Err(Error::NoPointAbove);
            }
            return Ok(self.to_found(&best));
        }
        let mut r = INITIAL_SHELL;
        loop {
            let b = self.half_box(x, r);
            self.ensure_box(&b);
            self.scan_best(&b, x, k, mask, ctx, &mut best);
            if best.len() == k && best[k - 1].0 <= r {
                return Ok(self.to_found(&best));
            }
            r *= 2.0;
            if r > SHELL_CAP {
                return Err(Error::ExpansionCap(r));
            }
        }
    }

    pub fn nearest_above<M: Mask + ?Sized>(
        &mut self,
        x: &[f64],
        mask: &M,
        ctx: &NormContext,
    ) -> Result<Found, Error> {
        Ok(self.k_nearest_above(x, 1, mask, ctx)?.remove(0))
    }

    /// Nearest point above x using only already generated cells. Returns
    /// `None` when the answer cannot be certified from the sampled region.
    pub fn nearest_above_frozen(&self, x: &[f64], ctx: &NormContext) -> Option<Found> {
        let mut best = Vec::with_capacity(2);
        if self.finite {
            let b = self.half_box(x, 0.0);
            self.scan_best(&b, x, 1, &NoMask, ctx, &mut best);
            return self.to_found(&best).pop();
        }
        let mut r = INITIAL_SHELL;
        loop {
            let b = self.half_box(x, r);
            if !self.is_box_generated(&b) {
                return None;
            }
            self.scan_best(&b, x, 1, &NoMask, ctx, &mut best);
            if best.len() == 1 && best[0].0 <= r {
                return self.to_found(&best).pop();
            }
            r *= 2.0;
            if r > SHELL_CAP {
                return None;
            }
        }
    }

    /// A store equal to this one inside `keep` and freshly sampled outside.
    pub fn resample_outside(&self, keep: &Region, fresh_seed: u64) -> PointStore {
        let mut layers: Vec<Layer> = self
            .layers
            .iter()
            .map(|l| Layer {
                region: Region::Intersection(vec![l.layer.region.clone(), keep.clone()]),
                source: l.layer.source.clone(),
            })
            .collect();
        layers.push(Layer {
            region: Region::Everything,
            source: Source::Poisson { seed: fresh_seed, intensity: self.intensity },
        });
        PointStore::layered(self.geom, layers).expect("layers were already validated")
    }

    /// Drop generated cells lying entirely below the given level. They are
    /// regenerated identically if needed again.
    pub fn forget_below(&mut self, level: f64) {
        if self.finite {
            return;
        }
        let d = self.d;
        self.cells.retain(|k, _| (k[d - 1] as f64 + 1.0) > level);
    }

    /// All generated points in a deterministic order.
    pub fn all_points(&self) -> Vec<(PointId, Vec<f64>)> {
        let d = self.d;
        let mut keys: Vec<&CellKey> = self.cells.keys().collect();
        keys.sort();
        let mut out = Vec::new();
        for k in keys {
            for (slot, x) in self.cells[k].chunks_exact(d).enumerate() {
                out.push((PointId { cell: *k, slot: slot as u32 }, x.to_vec()));
            }
        }
        out
    }

    /// CSV export, one point per row with full round-trip precision.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let header: Vec<String> = (1..=self.d).map(|s| format!("x{s}")).collect();
        writeln!(w, "{}", header.join(","))?;
        for (_, x) in self.all_points() {
            let row: Vec<String> = x.iter().map(|v| format!("{v:?}")).collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}
