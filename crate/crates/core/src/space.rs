//! Finite pointed metric windows and the recipes that generate them.
//!
//! A window is immutable once built. Points are addressed by dense indices
//! `0..len()`; string labels are kept for file formats.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap, VecDeque};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance for every distance comparison.
pub const TOL: f64 = 1e-9;
/// Largest window stored as a full distance matrix.
pub const MAX_DENSE_POINTS: usize = 6_000;
/// Largest window of any kind.
pub const MAX_POINTS: usize = 400_000;

/// How coordinates turn into distances.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoordNorm {
    L1,
    L2,
    /// ℓ1 on every coordinate but the last, combined in ℓ2 with the last one.
    L1Line,
}

impl CoordNorm {
    pub fn eval(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            CoordNorm::L1 => a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum(),
            CoordNorm::L2 => a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt(),
            CoordNorm::L1Line => {
                let k = a.len() - 1;
                let base: f64 = a[..k].iter().zip(&b[..k]).map(|(x, y)| (x - y).abs()).sum();
                let t = a[k] - b[k];
                (base * base + t * t).sqrt()
            }
        }
    }
}

/// Which finitely generated group a Cayley window samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "group", rename_all = "kebab-case")]
pub enum Group {
    /// ℤ^dim; `generators` defaults to the standard basis.
    Lattice {
        dim: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        generators: Option<Vec<Vec<i64>>>,
    },
    /// Free group on `rank` letters with the standard symmetric generating set.
    Free { rank: usize },
}

/// Deterministic description of a window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SpaceRecipe {
    Matrix {
        labels: Vec<String>,
        dist: Vec<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        basepoint: Option<String>,
    },
    Graph {
        edges: Vec<(String, String, f64)>,
        basepoint: String,
    },
    Cayley {
        #[serde(flatten)]
        group: Group,
        radius: f64,
    },
    /// Origin plus `count` uniform samples from `[-extent, extent]^dim`, or
    /// the explicit `points` when given (the first one is the basepoint).
    Cloud {
        dim: usize,
        #[serde(default)]
        count: usize,
        #[serde(default)]
        extent: f64,
        #[serde(default)]
        seed: u64,
        norm: CoordNorm,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        points: Vec<Vec<f64>>,
    },
    /// Grid sample of `{(x, y) : x >= 0, |y| <= sqrt(x)}` inside the Euclidean ball.
    Parabolic {
        radius: f64,
        #[serde(default = "one")]
        step: f64,
    },
    /// ℓ2 product of the base window with an integer sample of the line.
    ProductWithLine {
        base: Box<SpaceRecipe>,
        radius: f64,
    },
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug)]
enum Metric {
    Dense(Vec<f64>),
    Coords { coords: Vec<Vec<f64>>, norm: CoordNorm },
    FreeWords(Vec<Vec<i32>>),
    Product { base: Box<MetricWindow>, base_idx: Vec<usize>, t: Vec<f64> },
}

#[derive(Clone, Debug)]
struct GridIndex {
    cell: f64,
    dim: usize,
    cells: HashMap<Vec<i64>, Vec<u32>>,
}

impl GridIndex {
    fn build(coords: &[Vec<f64>], cell: f64) -> Self {
        let dim = coords.first().map_or(0, Vec::len);
        let mut cells: HashMap<Vec<i64>, Vec<u32>> = HashMap::new();
        for (i, c) in coords.iter().enumerate() {
            cells.entry(Self::key(c, cell)).or_default().push(i as u32);
        }
        GridIndex { cell, dim, cells }
    }

    fn key(c: &[f64], cell: f64) -> Vec<i64> {
        c.iter().map(|v| (v / cell).floor() as i64).collect()
    }

    /// Every point whose ℓ∞ distance to `c` may be at most `r`.
    fn candidates(&self, c: &[f64], r: f64, out: &mut Vec<usize>) {
        let lo: Vec<i64> = c.iter().map(|v| ((v - r) / self.cell).floor() as i64).collect();
        let hi: Vec<i64> = c.iter().map(|v| ((v + r) / self.cell).floor() as i64).collect();
        let cells_in_box: i64 = lo.iter().zip(&hi).map(|(a, b)| b - a + 1).product();
        if cells_in_box as usize > 4 * self.cells.len() {
            for pts in self.cells.values() {
                out.extend(pts.iter().map(|&p| p as usize));
            }
            return;
        }
        let mut key = lo.clone();
        loop {
            if let Some(pts) = self.cells.get(&key) {
                out.extend(pts.iter().map(|&p| p as usize));
            }
            let mut k = 0;
            loop {
                if k == self.dim {
                    return;
                }
                key[k] += 1;
                if key[k] <= hi[k] {
                    break;
                }
                key[k] = lo[k];
                k += 1;
            }
        }
    }
}

/// A finite pointed metric space with cached norms.
#[derive(Clone, Debug)]
pub struct MetricWindow {
    labels: Vec<String>,
    index: HashMap<String, usize>,
    metric: Metric,
    base: usize,
    norms: Vec<f64>,
    radius: f64,
    /// Weighted adjacency whose shortest paths reproduce `dist` exactly.
    graph: Option<Vec<Vec<(u32, f64)>>>,
    grid: Option<GridIndex>,
    lattice_dim: Option<usize>,
    recipe: Option<SpaceRecipe>,
}

#[derive(Copy, Clone, PartialEq)]
struct HeapItem(f64, usize);
impl Eq for HeapItem {}
impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then(other.1.cmp(&self.1))
    }
}

impl MetricWindow {
    fn assemble(
        labels: Vec<String>,
        metric: Metric,
        base: usize,
        graph: Option<Vec<Vec<(u32, f64)>>>,
        lattice_dim: Option<usize>,
    ) -> Result<Self> {
        let n = labels.len();
        if n == 0 {
            return Err(Error::Invalid("window has no points".into()));
        }
        if n > MAX_POINTS {
            return Err(Error::TooLarge { points: n, limit: MAX_POINTS, bytes: (n as u64) * (n as u64) * 8 });
        }
        let mut index = HashMap::with_capacity(n);
        for (i, l) in labels.iter().enumerate() {
            if index.insert(l.clone(), i).is_some() {
                return Err(Error::Invalid(format!("duplicate point id `{l}`")));
            }
        }
        let grid = match &metric {
            Metric::Coords { coords, .. } => {
                let cell = coords
                    .iter()
                    .flat_map(|c| c.iter())
                    .fold(0.0f64, |m, v| m.max(v.abs()))
                    .max(1.0)
                    / (n as f64).powf(1.0 / coords[0].len().max(1) as f64).max(1.0);
                Some(GridIndex::build(coords, cell.max(1.0)))
            }
            _ => None,
        };
        let mut w = MetricWindow {
            labels,
            index,
            metric,
            base,
            norms: Vec::new(),
            radius: 0.0,
            graph,
            grid,
            lattice_dim,
            recipe: None,
        };
        w.norms = (0..n).into_par_iter().map(|i| w.dist(i, base)).collect();
        w.radius = w.norms.iter().cloned().fold(0.0, f64::max);
        Ok(w)
    }

    /// Window from an explicit distance matrix; validates every invariant.
    pub fn from_matrix(labels: Vec<String>, dist: Vec<Vec<f64>>, basepoint: Option<&str>) -> Result<Self> {
        let n = labels.len();
        if n > MAX_DENSE_POINTS {
            return Err(Error::TooLarge { points: n, limit: MAX_DENSE_POINTS, bytes: (n as u64) * (n as u64) * 8 });
        }
        if dist.len() != n || dist.iter().any(|row| row.len() != n) {
            return Err(Error::Invalid(format!("distance matrix must be {n}x{n}")));
        }
        let flat: Vec<f64> = dist.into_iter().flatten().collect();
        validate_dense(&labels, &flat)?;
        let base = match basepoint {
            Some(b) => labels.iter().position(|l| l == b).ok_or_else(|| Error::UnknownPoint(b.into()))?,
            None => 0,
        };
        Self::assemble(labels, Metric::Dense(flat), base, None, None)
    }

    /// Window whose distance is the shortest-path metric of a weighted graph.
    pub fn from_edges(edges: &[(String, String, f64)], basepoint: &str) -> Result<Self> {
        let mut labels: Vec<String> = Vec::new();
        let mut idx: HashMap<String, usize> = HashMap::new();
        let mut id = |s: &str, labels: &mut Vec<String>| -> usize {
            *idx.entry(s.to_string()).or_insert_with(|| {
                labels.push(s.to_string());
                labels.len() - 1
            })
        };
        let mut adj: Vec<Vec<(u32, f64)>> = Vec::new();
        for (u, v, wgt) in edges {
            if !(*wgt > 0.0) || !wgt.is_finite() {
                return Err(Error::Invalid(format!("edge {u}-{v} has non-positive weight {wgt}")));
            }
            let a = id(u, &mut labels);
            let b = id(v, &mut labels);
            adj.resize(labels.len(), Vec::new());
            adj[a].push((b as u32, *wgt));
            adj[b].push((a as u32, *wgt));
        }
        let base = labels.iter().position(|l| l == basepoint).ok_or_else(|| Error::UnknownPoint(basepoint.into()))?;
        let n = labels.len();
        if n > MAX_DENSE_POINTS {
            return Err(Error::TooLarge { points: n, limit: MAX_DENSE_POINTS, bytes: (n as u64) * (n as u64) * 8 });
        }
        let rows: Vec<Vec<f64>> = (0..n).into_par_iter().map(|s| dijkstra(&adj, &[s], f64::INFINITY)).collect();
        if let Some(bad) = rows[base].iter().position(|d| d.is_infinite()) {
            return Err(Error::Disconnected(labels[bad].clone()));
        }
        let flat: Vec<f64> = rows.into_iter().flatten().collect();
        Self::assemble(labels, Metric::Dense(flat), base, Some(adj), None)
    }

    /// Window over explicit coordinates; the first point is the basepoint
    /// unless `base` says otherwise.
    pub fn from_coords(labels: Vec<String>, coords: Vec<Vec<f64>>, norm: CoordNorm, base: usize) -> Result<Self> {
        if labels.len() != coords.len() {
            return Err(Error::Invalid("label and coordinate counts differ".into()));
        }
        Self::assemble(labels, Metric::Coords { coords, norm }, base, None, None)
    }

    pub fn build(recipe: &SpaceRecipe) -> Result<Self> {
        let mut w = match recipe {
            SpaceRecipe::Matrix { labels, dist, basepoint } => {
                Self::from_matrix(labels.clone(), dist.clone(), basepoint.as_deref())?
            }
            SpaceRecipe::Graph { edges, basepoint } => Self::from_edges(edges, basepoint)?,
            SpaceRecipe::Cayley { group, radius } => {
                check_radius(*radius)?;
                match group {
                    Group::Lattice { dim, generators } => lattice_ball(*dim, generators.as_deref(), *radius)?,
                    Group::Free { rank } => free_ball(*rank, *radius)?,
                }
            }
            SpaceRecipe::Cloud { dim, count, extent, seed, norm, points } => {
                cloud(*dim, *count, *extent, *seed, *norm, points)?
            }
            SpaceRecipe::Parabolic { radius, step } => {
                check_radius(*radius)?;
                parabolic(*radius, *step)?
            }
            SpaceRecipe::ProductWithLine { base, radius } => {
                check_radius(*radius)?;
                product_with_line(&Self::build(base)?, *radius)?
            }
        };
        w.recipe = Some(recipe.clone());
        Ok(w)
    }

    pub fn recipe(&self) -> Option<&SpaceRecipe> {
        self.recipe.as_ref()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> &str {
        &self.labels[i]
    }

    pub fn id(&self, label: &str) -> Result<usize> {
        self.index.get(label).copied().ok_or_else(|| Error::UnknownPoint(label.into()))
    }

    pub fn basepoint(&self) -> usize {
        self.base
    }

    /// Largest norm in the window.
    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Radius minus a relative margin; "for all large r" checks stop here.
    pub fn rim(&self, margin: f64) -> f64 {
        self.radius * (1.0 - margin)
    }

    /// Value used for d(x, ∅).
    pub fn sentinel(&self) -> f64 {
        self.radius + 1.0
    }

    /// Lattice dimension for standard-generator ℤ^d windows.
    pub fn lattice_dim(&self) -> Option<usize> {
        self.lattice_dim
    }

    /// Coordinates when the window has them.
    pub fn coords(&self, i: usize) -> Option<&[f64]> {
        match &self.metric {
            Metric::Coords { coords, .. } => Some(&coords[i]),
            _ => None,
        }
    }

    pub fn coord_norm(&self) -> Option<CoordNorm> {
        match &self.metric {
            Metric::Coords { norm, .. } => Some(*norm),
            _ => None,
        }
    }

    pub fn has_exact_graph(&self) -> bool {
        self.graph.is_some()
    }

    pub fn norm(&self, i: usize) -> f64 {
        self.norms[i]
    }

    pub fn norm_of(&self, label: &str) -> Result<f64> {
        Ok(self.norms[self.id(label)?])
    }

    pub fn norms(&self) -> &[f64] {
        &self.norms
    }

    pub fn dist(&self, i: usize, j: usize) -> f64 {
        match &self.metric {
            Metric::Dense(d) => d[i * self.labels.len() + j],
            Metric::Coords { coords, norm } => norm.eval(&coords[i], &coords[j]),
            Metric::FreeWords(words) => free_dist(&words[i], &words[j]),
            Metric::Product { base, base_idx, t } => {
                let dx = base.dist(base_idx[i], base_idx[j]);
                let dt = t[i] - t[j];
                (dx * dx + dt * dt).sqrt()
            }
        }
    }

    /// min over `set` of d(x, a); the sentinel when `set` is empty.
    pub fn dist_to_set(&self, x: usize, set: &[usize]) -> f64 {
        set.iter().map(|&a| self.dist(x, a)).fold(None, |m: Option<f64>, d| Some(m.map_or(d, |m| m.min(d)))).unwrap_or_else(|| self.sentinel())
    }

    /// d(x, set) for every point of the window at once.
    pub fn dist_to_set_all(&self, set: &[usize]) -> Vec<f64> {
        if set.is_empty() {
            return vec![self.sentinel(); self.len()];
        }
        if let Some(adj) = &self.graph {
            return dijkstra(adj, set, f64::INFINITY);
        }
        (0..self.len()).into_par_iter().map(|x| self.dist_to_set(x, set)).collect()
    }

    /// { x : r1 <= ||x|| <= r2 } within tolerance.
    pub fn annulus(&self, r1: f64, r2: f64) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.norms[i] >= r1 - TOL && self.norms[i] <= r2 + TOL).collect()
    }

    /// Closed ball { y : d(x, y) <= r }, sorted.
    pub fn ball(&self, x: usize, r: f64) -> Vec<usize> {
        let mut out = Vec::new();
        if let Some(adj) = &self.graph {
            let mut dist: HashMap<usize, f64> = HashMap::new();
            let mut heap = BinaryHeap::new();
            dist.insert(x, 0.0);
            heap.push(HeapItem(0.0, x));
            while let Some(HeapItem(d, u)) = heap.pop() {
                if d > dist[&u] {
                    continue;
                }
                out.push(u);
                for &(v, wgt) in &adj[u] {
                    let nd = d + wgt;
                    let v = v as usize;
                    if nd <= r + TOL && dist.get(&v).is_none_or(|&old| nd < old) {
                        dist.insert(v, nd);
                        heap.push(HeapItem(nd, v));
                    }
                }
            }
            out.sort_unstable();
            out.dedup();
            return out;
        }
        if let (Some(grid), Metric::Coords { coords, .. }) = (&self.grid, &self.metric) {
            grid.candidates(&coords[x], r + TOL, &mut out);
            out.retain(|&y| self.dist(x, y) <= r + TOL);
            out.sort_unstable();
            return out;
        }
        let nx = self.norms[x];
        (0..self.len()).filter(|&y| (self.norms[y] - nx).abs() <= r + TOL && self.dist(x, y) <= r + TOL).collect()
    }

    /// d(x, X \ member) for each x of `member`, in member order.
    pub fn dist_to_complement(&self, member: &[usize]) -> Vec<f64> {
        let n = self.len();
        let mut inside = vec![false; n];
        for &m in member {
            inside[m] = true;
        }
        if member.len() == n || inside.iter().all(|&b| b) {
            return vec![self.sentinel(); member.len()];
        }
        if let Some(adj) = &self.graph {
            // A geodesic from x to its nearest outside point leaves the member
            // only at its last step, so the search can stay inside.
            let mut dist: HashMap<usize, f64> = HashMap::with_capacity(member.len());
            let mut heap = BinaryHeap::new();
            for &m in member {
                let best = adj[m].iter().filter(|(v, _)| !inside[*v as usize]).map(|&(_, w)| w).fold(f64::INFINITY, f64::min);
                if best.is_finite() {
                    dist.insert(m, best);
                    heap.push(HeapItem(best, m));
                }
            }
            while let Some(HeapItem(d, u)) = heap.pop() {
                if d > dist[&u] {
                    continue;
                }
                for &(v, wgt) in &adj[u] {
                    let v = v as usize;
                    if !inside[v] {
                        continue;
                    }
                    let nd = d + wgt;
                    if dist.get(&v).is_none_or(|&old| nd < old) {
                        dist.insert(v, nd);
                        heap.push(HeapItem(nd, v));
                    }
                }
            }
            return member.iter().map(|m| dist.get(m).copied().unwrap_or(f64::INFINITY)).collect();
        }
        if self.grid.is_some() {
            return member
                .par_iter()
                .map(|&x| {
                    let mut rho = self.grid.as_ref().map_or(1.0, |g| g.cell);
                    loop {
                        let best = self.ball(x, rho).into_iter().filter(|&y| !inside[y]).map(|y| self.dist(x, y)).fold(f64::INFINITY, f64::min);
                        if best <= rho + TOL {
                            return best;
                        }
                        if rho > 2.0 * self.radius + 1.0 {
                            return (0..n).filter(|&y| !inside[y]).map(|y| self.dist(x, y)).fold(f64::INFINITY, f64::min);
                        }
                        rho *= 2.0;
                    }
                })
                .collect();
        }
        member
            .par_iter()
            .map(|&x| (0..n).filter(|&y| !inside[y]).map(|y| self.dist(x, y)).fold(f64::INFINITY, f64::min))
            .collect()
    }

    /// Largest pairwise distance inside `set` (0 for sets of size < 2).
    pub fn diameter(&self, set: &[usize]) -> f64 {
        if set.len() < 2 {
            return 0.0;
        }
        if let Metric::Coords { coords, norm: CoordNorm::L1 } = &self.metric {
            // |a|_1 = max over sign vectors s of <s, a>.
            let d = coords[set[0]].len();
            let mut best = 0.0f64;
            for mask in 0..(1usize << d) {
                let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
                for &p in set {
                    let v: f64 = coords[p].iter().enumerate().map(|(k, c)| if mask >> k & 1 == 1 { -c } else { *c }).sum();
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
                best = best.max(hi - lo);
            }
            return best;
        }
        set.par_iter()
            .enumerate()
            .map(|(k, &a)| set[k + 1..].iter().map(|&b| self.dist(a, b)).fold(0.0, f64::max))
            .reduce(|| 0.0, f64::max)
    }

    /// Sub-window on `points` (sorted, must contain the basepoint).
    pub fn restrict(&self, points: &[usize]) -> Result<Self> {
        let base = points.iter().position(|&p| p == self.base).ok_or_else(|| Error::Precondition("restriction must keep the basepoint".into()))?;
        let labels: Vec<String> = points.iter().map(|&p| self.labels[p].clone()).collect();
        let metric = match &self.metric {
            Metric::Coords { coords, norm } => Metric::Coords { coords: points.iter().map(|&p| coords[p].clone()).collect(), norm: *norm },
            Metric::FreeWords(w) => Metric::FreeWords(points.iter().map(|&p| w[p].clone()).collect()),
            _ => {
                if points.len() > MAX_DENSE_POINTS {
                    return Err(Error::TooLarge { points: points.len(), limit: MAX_DENSE_POINTS, bytes: (points.len() as u64).pow(2) * 8 });
                }
                let mut flat = Vec::with_capacity(points.len() * points.len());
                for &a in points {
                    for &b in points {
                        flat.push(self.dist(a, b));
                    }
                }
                Metric::Dense(flat)
            }
        };
        Self::assemble(labels, metric, base, None, None)
    }

    /// Exhaustive (or sampled, above `exhaustive_limit`) triangle check.
    /// Returns the first violating triple.
    pub fn check_triangle(&self, exhaustive_limit: usize, samples: usize, seed: u64) -> Option<(usize, usize, usize)> {
        let n = self.len();
        if n <= exhaustive_limit {
            return (0..n).into_par_iter().find_map_first(|a| {
                for b in 0..n {
                    for c in 0..n {
                        if self.dist(a, c) > self.dist(a, b) + self.dist(b, c) + TOL {
                            return Some((a, b, c));
                        }
                    }
                }
                None
            });
        }
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..samples).find_map(|_| {
            let (a, b, c) = (rng.gen_range(0..n), rng.gen_range(0..n), rng.gen_range(0..n));
            (self.dist(a, c) > self.dist(a, b) + self.dist(b, c) + TOL).then_some((a, b, c))
        })
    }
}

fn check_radius(r: f64) -> Result<()> {
    if r > 0.0 && r.is_finite() {
        Ok(())
    } else {
        Err(Error::Precondition(format!("window radius must be positive, got {r}")))
    }
}

fn validate_dense(labels: &[String], d: &[f64]) -> Result<()> {
    let n = labels.len();
    for i in 0..n {
        if d[i * n + i].abs() > TOL {
            return Err(Error::Invalid(format!("d({0},{0}) = {1} is not 0", labels[i], d[i * n + i])));
        }
        for j in 0..n {
            let v = d[i * n + j];
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Invalid(format!("d({},{}) = {v} is not a finite nonnegative number", labels[i], labels[j])));
            }
            if (v - d[j * n + i]).abs() > TOL {
                return Err(Error::Invalid(format!("d({},{}) != d({},{})", labels[i], labels[j], labels[j], labels[i])));
            }
        }
    }
    let bad = (0..n).into_par_iter().find_map_first(|a| {
        for b in 0..n {
            for c in 0..n {
                if d[a * n + c] > d[a * n + b] + d[b * n + c] + TOL {
                    return Some((a, b, c));
                }
            }
        }
        None
    });
    if let Some((a, b, c)) = bad {
        return Err(Error::Invalid(format!("triangle inequality fails: d({0},{2}) > d({0},{1}) + d({1},{2})", labels[a], labels[b], labels[c])));
    }
    Ok(())
}

fn dijkstra(adj: &[Vec<(u32, f64)>], sources: &[usize], cutoff: f64) -> Vec<f64> {
    let mut dist = vec![f64::INFINITY; adj.len()];
    let mut heap = BinaryHeap::new();
    for &s in sources {
        dist[s] = 0.0;
        heap.push(HeapItem(0.0, s));
    }
    while let Some(HeapItem(d, u)) = heap.pop() {
        if d > dist[u] {
            continue;
        }
        for &(v, w) in &adj[u] {
            let nd = d + w;
            let v = v as usize;
            if nd < dist[v] && nd <= cutoff {
                dist[v] = nd;
                heap.push(HeapItem(nd, v));
            }
        }
    }
    dist
}

/// Integer or short decimal rendering used in point labels.
pub fn fmt_num(v: f64) -> String {
    if (v - v.round()).abs() < 1e-12 {
        format!("{}", v.round() as i64)
    } else {
        let s = format!("{v:.6}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

pub fn tuple_label(c: &[f64]) -> String {
    let parts: Vec<String> = c.iter().map(|v| fmt_num(*v)).collect();
    format!("({})", parts.join(","))
}

fn lattice_ball(dim: usize, generators: Option<&[Vec<i64>]>, radius: f64) -> Result<MetricWindow> {
    if dim == 0 {
        return Err(Error::Precondition("lattice dimension must be at least 1".into()));
    }
    let std_gens: Vec<Vec<i64>> = (0..dim).map(|k| (0..dim).map(|j| i64::from(j == k)).collect()).collect();
    let standard = generators.is_none();
    let gens: Vec<Vec<i64>> = generators.map(|g| g.to_vec()).unwrap_or(std_gens);
    if gens.iter().any(|g| g.len() != dim) {
        return Err(Error::Invalid(format!("every generator must have {dim} entries")));
    }
    let mut sym = gens.clone();
    sym.extend(gens.iter().map(|g| g.iter().map(|v| -v).collect::<Vec<_>>()));
    let rmax = radius.floor() as usize;
    let words = bfs_words(dim, &sym, rmax, MAX_POINTS)?;
    let mut pts: Vec<(Vec<i64>, usize)> = words.into_iter().collect();
    pts.sort_by(|a, b| a.1.cmp(&b.1).then(a.0.cmp(&b.0)));
    let labels: Vec<String> = pts.iter().map(|(p, _)| tuple_label(&p.iter().map(|&v| v as f64).collect::<Vec<_>>())).collect();
    let coords: Vec<Vec<f64>> = pts.iter().map(|(p, _)| p.iter().map(|&v| v as f64).collect()).collect();
    if standard {
        // Word length for the standard generators is the ℓ1 norm, and ℓ1 balls
        // are geodesically convex in the grid graph, so the induced unit graph
        // reproduces the metric.
        let pos: HashMap<Vec<i64>, usize> = pts.iter().enumerate().map(|(i, (p, _))| (p.clone(), i)).collect();
        let adj: Vec<Vec<(u32, f64)>> = pts
            .iter()
            .map(|(p, _)| {
                sym.iter()
                    .filter_map(|g| {
                        let q: Vec<i64> = p.iter().zip(g).map(|(a, b)| a + b).collect();
                        pos.get(&q).map(|&j| (j as u32, 1.0))
                    })
                    .collect()
            })
            .collect();
        return MetricWindow::assemble(labels, Metric::Coords { coords, norm: CoordNorm::L1 }, 0, Some(adj), Some(dim));
    }
    let n = pts.len();
    if n > MAX_DENSE_POINTS {
        return Err(Error::TooLarge { points: n, limit: MAX_DENSE_POINTS, bytes: (n as u64) * (n as u64) * 8 });
    }
    // Left-invariance: d(g, h) = |h - g|, read off a ball of twice the radius.
    let table = bfs_words(dim, &sym, 2 * rmax, 4 * MAX_POINTS)?;
    let mut flat = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let diff: Vec<i64> = pts[j].0.iter().zip(&pts[i].0).map(|(a, b)| a - b).collect();
            flat[i * n + j] = table[&diff] as f64;
        }
    }
    MetricWindow::assemble(labels, Metric::Dense(flat), 0, None, None)
}

fn bfs_words(dim: usize, sym: &[Vec<i64>], rmax: usize, limit: usize) -> Result<HashMap<Vec<i64>, usize>> {
    let mut seen: HashMap<Vec<i64>, usize> = HashMap::new();
    let origin = vec![0i64; dim];
    seen.insert(origin.clone(), 0);
    let mut queue = VecDeque::from([origin]);
    while let Some(p) = queue.pop_front() {
        let d = seen[&p];
        if d == rmax {
            continue;
        }
        for g in sym {
            let q: Vec<i64> = p.iter().zip(g).map(|(a, b)| a + b).collect();
            if !seen.contains_key(&q) {
                seen.insert(q.clone(), d + 1);
                if seen.len() > limit {
                    return Err(Error::TooLarge { points: seen.len(), limit, bytes: (seen.len() as u64).pow(2) * 8 });
                }
                queue.push_back(q);
            }
        }
    }
    Ok(seen)
}

fn free_dist(a: &[i32], b: &[i32]) -> f64 {
    let common = a.iter().zip(b).take_while(|(x, y)| x == y).count();
    (a.len() + b.len() - 2 * common) as f64
}

fn free_label(w: &[i32]) -> String {
    if w.is_empty() {
        return "e".into();
    }
    w.iter()
        .map(|&l| {
            let c = (b'a' + (l.unsigned_abs() as u8 - 1)) as char;
            if l > 0 { c } else { c.to_ascii_uppercase() }
        })
        .collect()
}

fn free_ball(rank: usize, radius: f64) -> Result<MetricWindow> {
    if rank == 0 || rank > 26 {
        return Err(Error::Precondition("free group rank must be in 1..=26".into()));
    }
    let rmax = radius.floor() as usize;
    let count: f64 = 1.0 + (1..=rmax).map(|k| 2.0 * rank as f64 * (2.0 * rank as f64 - 1.0).powi(k as i32 - 1)).sum::<f64>();
    if count > MAX_POINTS as f64 {
        return Err(Error::TooLarge { points: count as usize, limit: MAX_POINTS, bytes: (count * count * 8.0) as u64 });
    }
    let letters: Vec<i32> = (1..=rank as i32).flat_map(|l| [l, -l]).collect();
    let mut words: Vec<Vec<i32>> = vec![vec![]];
    let mut frontier = 0;
    for _ in 0..rmax {
        let end = words.len();
        for i in frontier..end {
            for &l in &letters {
                if words[i].last() == Some(&-l) {
                    continue;
                }
                let mut w = words[i].clone();
                w.push(l);
                words.push(w);
            }
        }
        frontier = end;
    }
    let pos: HashMap<Vec<i32>, usize> = words.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
    // The Cayley graph is a tree and balls are subtrees, so parent edges are exact.
    let mut adj: Vec<Vec<(u32, f64)>> = vec![Vec::new(); words.len()];
    for (i, w) in words.iter().enumerate().skip(1) {
        let p = pos[&w[..w.len() - 1]];
        adj[i].push((p as u32, 1.0));
        adj[p].push((i as u32, 1.0));
    }
    let labels = words.iter().map(|w| free_label(w)).collect();
    MetricWindow::assemble(labels, Metric::FreeWords(words), 0, Some(adj), None)
}

fn cloud(dim: usize, count: usize, extent: f64, seed: u64, norm: CoordNorm, points: &[Vec<f64>]) -> Result<MetricWindow> {
    use rand::{Rng, SeedableRng};
    let pts: Vec<Vec<f64>> = if points.is_empty() {
        if dim == 0 || !(extent > 0.0) {
            return Err(Error::Precondition("sampled clouds need dim >= 1 and extent > 0".into()));
        }
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut v = vec![vec![0.0; dim]];
        v.extend((0..count).map(|_| (0..dim).map(|_| rng.gen_range(-extent..=extent)).collect()));
        v
    } else {
        points.to_vec()
    };
    if pts.iter().any(|p| p.len() != dim) {
        return Err(Error::Invalid(format!("every cloud point must have {dim} coordinates")));
    }
    if norm == CoordNorm::L1Line && dim < 2 {
        return Err(Error::Precondition("l1-line norm needs at least two coordinates".into()));
    }
    let labels: Vec<String> = if points.is_empty() { (0..pts.len()).map(|i| format!("p{i}")).collect() } else { pts.iter().map(|p| tuple_label(p)).collect() };
    MetricWindow::from_coords(labels, pts, norm, 0)
}

fn parabolic(radius: f64, step: f64) -> Result<MetricWindow> {
    if !(step > 0.0) {
        return Err(Error::Precondition("parabolic grid step must be positive".into()));
    }
    let mut pts: Vec<Vec<f64>> = Vec::new();
    let nx = (radius / step).floor() as i64;
    for i in 0..=nx {
        let x = i as f64 * step;
        let ymax = x.sqrt();
        let nyk = (ymax / step + TOL).floor() as i64;
        for j in -nyk..=nyk {
            let y = j as f64 * step;
            if x * x + y * y <= radius * radius + TOL {
                pts.push(vec![x, y]);
            }
        }
    }
    let labels = pts.iter().map(|p| tuple_label(p)).collect();
    let base = pts.iter().position(|p| p[0] == 0.0 && p[1] == 0.0).unwrap_or(0);
    MetricWindow::from_coords(labels, pts, CoordNorm::L2, base)
}

fn product_with_line(base: &MetricWindow, radius: f64) -> Result<MetricWindow> {
    let tmax = radius.floor() as i64;
    let mut base_idx = Vec::new();
    let mut ts = Vec::new();
    for i in 0..base.len() {
        for t in -tmax..=tmax {
            let (nx, tf) = (base.norm(i), t as f64);
            if nx * nx + tf * tf <= radius * radius + TOL {
                base_idx.push(i);
                ts.push(tf);
            }
        }
    }
    let labels: Vec<String> = base_idx.iter().zip(&ts).map(|(&i, &t)| format!("{};{}", base.label(i), fmt_num(t))).collect();
    let origin = base_idx.iter().zip(&ts).position(|(&i, &t)| i == base.basepoint() && t == 0.0).ok_or_else(|| Error::Invalid("product window lost its basepoint".into()))?;
    if let (Metric::Coords { coords, norm }, true) = (&base.metric, base.lattice_dim.is_some() || base.coord_norm() == Some(CoordNorm::L2)) {
        let norm = match norm {
            CoordNorm::L1 => CoordNorm::L1Line,
            CoordNorm::L2 => CoordNorm::L2,
            CoordNorm::L1Line => return Err(Error::Precondition("product of a product window with the line is not supported".into())),
        };
        let c: Vec<Vec<f64>> = base_idx.iter().zip(&ts).map(|(&i, &t)| coords[i].iter().cloned().chain([t]).collect()).collect();
        return MetricWindow::assemble(labels, Metric::Coords { coords: c, norm }, origin, None, None);
    }
    MetricWindow::assemble(labels, Metric::Product { base: Box::new(base.clone()), base_idx, t: ts }, origin, None, None)
}

/// For product windows: the base-point index and line coordinate of `i`.
pub fn product_parts(w: &MetricWindow, i: usize) -> Option<(String, f64)> {
    let (b, t) = w.label(i).rsplit_once(';')?;
    Some((b.to_string(), t.parse().ok()?))
}
