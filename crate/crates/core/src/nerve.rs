//! Nerve complexes, barycentric projections with measured constants, and
//! pushing a projection off its top simplices.

use std::collections::{BTreeSet, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covers::{Cover, SetFamily};
use crate::error::{Error, Result};
use crate::space::MetricWindow;

/// Largest number of members allowed to share a point (2^k faces).
pub const MAX_NERVE_MULTIPLICITY: usize = 20;

/// Sparse barycentric coordinates, sorted by vertex.
pub type Coords = Vec<(u32, f64)>;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NerveComplex {
    pub vertices: usize,
    /// Every simplex, sorted by size then lexicographically.
    pub simplices: Vec<Vec<u32>>,
    pub maximal: Vec<Vec<u32>>,
    pub dimension: usize,
}

impl NerveComplex {
    pub fn contains(&self, s: &[u32]) -> bool {
        self.simplices.binary_search_by(|t| t.len().cmp(&s.len()).then_with(|| t.as_slice().cmp(s))).is_ok()
    }
}

/// Downward closure of the member sets of every point.
pub fn build_nerve(c: &Cover, n_points: usize) -> Result<NerveComplex> {
    let table = c.membership(n_points);
    let sigs: BTreeSet<Vec<u32>> = table.into_iter().filter(|s| !s.is_empty()).collect();
    if let Some(s) = sigs.iter().find(|s| s.len() > MAX_NERVE_MULTIPLICITY) {
        return Err(Error::TooLarge { points: s.len(), limit: MAX_NERVE_MULTIPLICITY, bytes: 1u64 << s.len().min(63) });
    }
    let mut all: BTreeSet<Vec<u32>> = BTreeSet::new();
    for s in &sigs {
        for mask in 1u32..(1u32 << s.len()) {
            all.insert(s.iter().enumerate().filter(|(k, _)| mask >> k & 1 == 1).map(|(_, &v)| v).collect());
        }
    }
    let maximal: Vec<Vec<u32>> = sigs.iter().filter(|s| !sigs.iter().any(|t| t.len() > s.len() && s.iter().all(|v| t.contains(v)))).cloned().collect();
    let mut simplices: Vec<Vec<u32>> = all.into_iter().collect();
    simplices.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    let dimension = simplices.last().map_or(0, |s| s.len() - 1);
    Ok(NerveComplex { vertices: c.len(), simplices, maximal, dimension })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NerveMap {
    pub nerve: NerveComplex,
    pub coords: Vec<Coords>,
    /// sup over pairs of |p(x) - p(y)|_2 / d(x, y).
    pub lipschitz: f64,
    pub lipschitz_pair: Option<(usize, usize)>,
    /// max over maximal simplices s of diam { x : support p(x) ⊆ s }.
    pub cobounded: f64,
}

pub fn sparse_l2(a: &Coords, b: &Coords) -> f64 {
    let (mut i, mut j, mut s) = (0, 0, 0.0);
    while i < a.len() || j < b.len() {
        let (va, vb) = (a.get(i).map(|p| p.0), b.get(j).map(|p| p.0));
        let diff = match (va, vb) {
            (Some(x), Some(y)) if x == y => {
                i += 1;
                j += 1;
                a[i - 1].1 - b[j - 1].1
            }
            (Some(x), Some(y)) if x < y => {
                i += 1;
                a[i - 1].1
            }
            (Some(_), None) => {
                i += 1;
                a[i - 1].1
            }
            _ => {
                j += 1;
                b[j - 1].1
            }
        };
        s += diff * diff;
    }
    s.sqrt()
}

/// Exact sup of |m(x) - m(y)|_2 / d(x, y) over window pairs.
pub fn map_lipschitz(m: &[Coords], w: &MetricWindow) -> (f64, Option<(usize, usize)>) {
    (0..w.len())
        .into_par_iter()
        .map(|x| {
            let mut best = (0.0f64, None);
            for y in (x + 1)..w.len() {
                let d = w.dist(x, y);
                if d <= 0.0 {
                    continue;
                }
                let v = sparse_l2(&m[x], &m[y]) / d;
                if v > best.0 {
                    best = (v, Some((x, y)));
                }
            }
            best
        })
        .reduce(|| (0.0, None), |a, b| if b.0 > a.0 { b } else { a })
}

/// Barycentric projection to the nerve: coordinate d(x, X \ U), normalized.
pub fn projection(c: &Cover, w: &MetricWindow) -> Result<NerveMap> {
    let nerve = build_nerve(c, w.len())?;
    let per: Vec<Vec<f64>> = c.members.par_iter().map(|m| w.dist_to_complement(m)).collect();
    let mut raw: Vec<Coords> = vec![Vec::new(); w.len()];
    for (u, (m, d)) in c.members.iter().zip(&per).enumerate() {
        for (&p, &v) in m.iter().zip(d) {
            raw[p].push((u as u32, v));
        }
    }
    let mut coords = Vec::with_capacity(w.len());
    for (x, r) in raw.into_iter().enumerate() {
        let s: f64 = r.iter().map(|p| p.1).sum();
        if r.is_empty() || s <= 0.0 {
            return Err(Error::Invalid(format!("point {} lies in no member", w.label(x))));
        }
        coords.push(r.into_iter().map(|(u, v)| (u, v / s)).collect::<Coords>());
    }
    let (lipschitz, lipschitz_pair) = map_lipschitz(&coords, w);
    let cobounded = nerve
        .maximal
        .par_iter()
        .map(|s| {
            let pre: Vec<usize> = (0..w.len()).filter(|&x| coords[x].iter().all(|(u, _)| s.contains(u))).collect();
            w.diameter(&pre)
        })
        .reduce(|| 0.0, f64::max);
    Ok(NerveMap { nerve, coords, lipschitz, lipschitz_pair, cobounded })
}

/// Candidate maps from a closed top simplex to its boundary that fix the boundary.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryCandidate {
    /// Ray from the barycenter through p, stopped at the boundary.
    Radial,
    /// Zero the smallest coordinate (lowest index on ties) and spread its
    /// mass evenly over the others.
    NearestBoundary,
    /// Radial on simplices whose preimage misses the barycenter, nearest
    /// boundary elsewhere.
    Auto,
}

fn radial(simplex: &[u32], p: &Coords) -> Option<Coords> {
    let k = simplex.len() as f64;
    let b = 1.0 / k;
    let val = |v: u32| p.iter().find(|q| q.0 == v).map_or(0.0, |q| q.1);
    let t = simplex.iter().map(|&v| val(v)).filter(|&pv| pv < b).map(|pv| b / (b - pv)).fold(f64::INFINITY, f64::min);
    if !t.is_finite() {
        return None;
    }
    Some(simplex.iter().map(|&v| (v, (b + t * (val(v) - b)).max(0.0))).filter(|q| q.1 > 1e-15).collect())
}

fn nearest_boundary(simplex: &[u32], p: &Coords) -> Coords {
    let val = |v: u32| p.iter().find(|q| q.0 == v).map_or(0.0, |q| q.1);
    let (lo, m) = simplex.iter().map(|&v| (v, val(v))).fold((simplex[0], f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
    let share = m / (simplex.len() - 1) as f64;
    simplex.iter().filter(|&&v| v != lo).map(|&v| (v, val(v) + share)).filter(|q| q.1 > 0.0).collect()
}

fn at_barycenter(simplex: &[u32], p: &Coords) -> bool {
    let b = 1.0 / simplex.len() as f64;
    p.len() == simplex.len() && p.iter().all(|q| (q.1 - b).abs() < 1e-12)
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PushChecks {
    pub stars_shrink: bool,
    pub multiplicity: bool,
    pub lebesgue: bool,
}

impl PushChecks {
    pub fn all(&self) -> bool {
        self.stars_shrink && self.multiplicity && self.lebesgue
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkeletonPush {
    pub n: usize,
    pub q: Vec<Coords>,
    /// Candidate used on each top simplex.
    pub choices: Vec<(Vec<u32>, BoundaryCandidate)>,
    /// {q^-1(st v)} for vertices whose star preimage is nonempty.
    pub cover: Cover,
    pub cover_vertex: Vec<u32>,
    pub lambda: f64,
    pub m: f64,
    pub b: f64,
    pub q_lipschitz: f64,
    pub lebesgue: f64,
    pub lebesgue_bound: f64,
    pub multiplicity: usize,
    pub checks: PushChecks,
}

/// Replaces p by a boundary map on every n-simplex (n = nerve dimension
/// unless given) and reads off the cover by open vertex stars of q.
pub fn skeleton_push(p: &NerveMap, w: &MetricWindow, candidate: BoundaryCandidate, n: Option<usize>) -> Result<SkeletonPush> {
    let n = n.unwrap_or(p.nerve.dimension);
    // A vertex has no boundary to push to, so n = 0 leaves p unchanged.
    let tops: Vec<Vec<u32>> = if n == 0 { vec![] } else { p.nerve.simplices.iter().filter(|s| s.len() == n + 1).cloned().collect() };
    let mut by_vertex: HashMap<u32, Vec<usize>> = HashMap::new();
    for (i, s) in tops.iter().enumerate() {
        for &v in s {
            by_vertex.entry(v).or_default().push(i);
        }
    }
    let choices: Vec<BoundaryCandidate> = tops
        .iter()
        .map(|s| match candidate {
            BoundaryCandidate::Auto => {
                if p.coords.iter().any(|c| at_barycenter(s, c)) {
                    BoundaryCandidate::NearestBoundary
                } else {
                    BoundaryCandidate::Radial
                }
            }
            c => c,
        })
        .collect();
    let apply = |i: usize, c: &Coords, x: usize| -> Result<Coords> {
        match choices[i] {
            BoundaryCandidate::Radial => radial(&tops[i], c).ok_or_else(|| Error::Precondition(format!("radial map undefined at barycenter point {}", w.label(x)))),
            _ => Ok(nearest_boundary(&tops[i], c)),
        }
    };
    let mut q = Vec::with_capacity(w.len());
    for (x, c) in p.coords.iter().enumerate() {
        let support: Vec<u32> = c.iter().map(|q| q.0).collect();
        let mut holders: Vec<usize> = by_vertex.get(&support[0]).cloned().unwrap_or_default();
        holders.retain(|&i| support.iter().all(|v| tops[i].contains(v)));
        if holders.is_empty() {
            q.push(c.clone());
            continue;
        }
        let first = apply(holders[0], c, x)?;
        for &i in &holders[1..] {
            let other = apply(i, c, x)?;
            if sparse_l2(&first, &other) > 1e-9 {
                return Err(Error::Precondition(format!("boundary maps on simplices {:?} and {:?} disagree at {}", tops[holders[0]], tops[i], w.label(x))));
            }
        }
        if support.len() < n + 1 && sparse_l2(&first, c) > 1e-9 {
            return Err(Error::Precondition(format!("boundary map on {:?} moves the boundary point {}", tops[holders[0]], w.label(x))));
        }
        q.push(first);
    }

    let mut stars: Vec<Vec<usize>> = vec![Vec::new(); p.nerve.vertices];
    for (x, c) in q.iter().enumerate() {
        for &(v, val) in c {
            if val > 0.0 {
                stars[v as usize].push(x);
            }
        }
    }
    let (cover_vertex, members): (Vec<u32>, Vec<Vec<usize>>) = stars.into_iter().enumerate().filter(|(_, s)| !s.is_empty()).map(|(v, s)| (v as u32, s)).unzip();
    let cover = SetFamily { members };
    let stars_shrink = q.iter().zip(&p.coords).all(|(qx, px)| qx.iter().filter(|e| e.1 > 0.0).all(|e| px.iter().any(|f| f.0 == e.0 && f.1 > 0.0)));
    let multiplicity = cover.multiplicity(w.len());
    let lambda = p.lipschitz;
    let (q_lipschitz, _) = map_lipschitz(&q, w);
    let m = if lambda > 0.0 { 1.0 / lambda } else { f64::INFINITY };
    let b = if lambda > 0.0 { q_lipschitz / lambda } else { 0.0 };
    // m / (b (n+1)) = 1 / (Lip(q) (n+1)).
    let lebesgue_bound = if q_lipschitz > 0.0 { 1.0 / (q_lipschitz * (n + 1) as f64) } else { w.sentinel() };
    let lebesgue = cover.lebesgue_number(w);
    let checks = PushChecks { stars_shrink, multiplicity: multiplicity <= n.max(1), lebesgue: lebesgue >= lebesgue_bound - 1e-12 };
    Ok(SkeletonPush {
        n,
        q,
        choices: tops.into_iter().zip(choices).collect(),
        cover,
        cover_vertex,
        lambda,
        m,
        b,
        q_lipschitz,
        lebesgue,
        lebesgue_bound,
        multiplicity,
        checks,
    })
}

/// {p^-1(st v)}: the cover whose nerve the projection lands in.
pub fn star_cover(p: &NerveMap) -> Cover {
    let mut stars: Vec<Vec<usize>> = vec![Vec::new(); p.nerve.vertices];
    for (x, c) in p.coords.iter().enumerate() {
        for &(v, _) in c {
            stars[v as usize].push(x);
        }
    }
    SetFamily { members: stars.into_iter().filter(|s| !s.is_empty()).collect() }
}
