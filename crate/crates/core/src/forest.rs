//! The directed spanning forest on a finite window: certified out-edges
//! x → Ψ(x), trajectories and tree counting.

use std::io::{self, Write};

use rustc_hash::FxHashMap;
use serde::Serialize;

use crate::lpgeom::{AxisBox, NormContext};
use crate::ppp::{NoMask, PointId, PointStore};
use crate::Error;

#[derive(Clone, Debug, Serialize)]
pub struct ForestGraph {
    pub vertices: Vec<Vec<f64>>,
    #[serde(skip)]
    pub ids: Vec<PointId>,
    /// (source, target) vertex indices.
    pub edges: Vec<(usize, usize)>,
    /// Out-edge of each vertex, when certified.
    pub successor: Vec<Option<usize>>,
    /// Vertices whose successor could not be certified inside the window.
    pub boundary: Vec<bool>,
    pub window: AxisBox,
}

impl ForestGraph {
    pub fn boundary_count(&self) -> usize {
        self.boundary.iter().filter(|b| **b).count()
    }

    /// Edges strictly increase the last coordinate, which rules out cycles;
    /// this walks every path anyway.
    pub fn is_acyclic(&self) -> bool {
        let d = self.window.dim();
        if self.edges.iter().any(|&(a, b)| self.vertices[b][d - 1] <= self.vertices[a][d - 1]) {
            return false;
        }
        let n = self.vertices.len();
        let mut state = vec![0u8; n];
        for s in 0..n {
            let mut path = Vec::new();
            let mut v = s;
            loop {
                match state[v] {
                    2 => break,
                    1 => return false,
                    _ => {}
                }
                state[v] = 1;
                path.push(v);
                match self.successor[v] {
                    Some(w) => v = w,
                    None => break,
                }
            }
            for v in path {
                state[v] = 2;
            }
        }
        true
    }

    /// Follow certified edges from a vertex.
    pub fn path_from(&self, start: usize) -> Vec<usize> {
        let mut out = vec![start];
        let mut v = start;
        while let Some(w) = self.successor[v] {
            out.push(w);
            v = w;
        }
        out
    }

    pub fn write_vertices_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let d = self.window.dim();
        let cols: Vec<String> = (1..=d).map(|s| format!("x{s}")).collect();
        writeln!(w, "index,{},boundary", cols.join(","))?;
        for (i, x) in self.vertices.iter().enumerate() {
            let row: Vec<String> = x.iter().map(|v| format!("{v:?}")).collect();
            writeln!(w, "{i},{},{}", row.join(","), self.boundary[i] as u8)?;
        }
        Ok(())
    }

    pub fn write_edges_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "source,target")?;
        for (a, b) in &self.edges {
            writeln!(w, "{a},{b}")?;
        }
        Ok(())
    }
}

/// Build the forest on the points of `window`. An edge is emitted only when
/// the successor's half-ball lies in the sampled region and the successor is
/// itself a vertex of the window.
pub fn build_forest(store: &mut PointStore, window: &AxisBox, ctx: &NormContext) -> ForestGraph {
    let pts = store.sample_box(window);
    let index: FxHashMap<PointId, usize> = pts.iter().enumerate().map(|(i, (id, _))| (*id, i)).collect();
    let mut successor = vec![None; pts.len()];
    let mut boundary = vec![false; pts.len()];
    let mut edges = Vec::new();
    for (i, (_, x)) in pts.iter().enumerate() {
        match store.nearest_above_frozen(x, ctx).and_then(|f| index.get(&f.id).copied()) {
            Some(j) => {
                successor[i] = Some(j);
                edges.push((i, j));
            }
            None => boundary[i] = true,
        }
    }
    let (ids, vertices) = pts.into_iter().unzip();
    ForestGraph { vertices, ids, edges, successor, boundary, window: window.clone() }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Trajectory {
    pub points: Vec<Vec<f64>>,
    #[serde(skip)]
    pub ids: Vec<Option<PointId>>,
    /// True when the path stopped at the edge of a window rather than after
    /// the requested number of steps.
    pub truncated: bool,
}

impl Trajectory {
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let d = self.points.first().map_or(0, |p| p.len());
        let cols: Vec<String> = (1..=d).map(|s| format!("x{s}")).collect();
        writeln!(w, "step,{}", cols.join(","))?;
        for (i, x) in self.points.iter().enumerate() {
            let row: Vec<String> = x.iter().map(|v| format!("{v:?}")).collect();
            writeln!(w, "{i},{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Iterate Ψ from `start` for `n_steps` steps, growing the store as needed.
pub fn trajectory_from(
    store: &mut PointStore,
    start: &[f64],
    n_steps: usize,
    ctx: &NormContext,
) -> Result<Trajectory, Error> {
    let mut points = vec![start.to_vec()];
    let mut ids = vec![None];
    let mut cur = start.to_vec();
    for _ in 0..n_steps {
        let f = store.nearest_above(&cur, &NoMask, ctx)?;
        cur = f.x.clone();
        points.push(f.x);
        ids.push(Some(f.id));
    }
    Ok(Trajectory { points, ids, truncated: false })
}

/// Trajectory of a window vertex along certified edges.
pub fn trajectory_in_forest(g: &ForestGraph, start: usize) -> Trajectory {
    let path = g.path_from(start);
    let last = *path.last().expect("non-empty");
    Trajectory {
        points: path.iter().map(|&i| g.vertices[i].clone()).collect(),
        ids: path.iter().map(|&i| Some(g.ids[i])).collect(),
        truncated: g.boundary[last],
    }
}

fn find(parent: &mut [usize], mut v: usize) -> usize {
    while parent[v] != v {
        parent[v] = parent[parent[v]];
        v = parent[v];
    }
    v
}

/// Number of weakly connected components of the certified graph, with their
/// sizes in decreasing order.
pub fn count_trees(g: &ForestGraph) -> (usize, Vec<usize>) {
    let n = g.vertices.len();
    let mut parent: Vec<usize> = (0..n).collect();
    for &(a, b) in &g.edges {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent[ra.max(rb)] = ra.min(rb);
        }
    }
    let mut sizes: FxHashMap<usize, usize> = FxHashMap::default();
    for v in 0..n {
        let r = find(&mut parent, v);
        *sizes.entry(r).or_default() += 1;
    }
    let mut s: Vec<usize> = sizes.into_values().collect();
    s.sort_unstable_by(|a, b| b.cmp(a));
    (s.len(), s)
}
