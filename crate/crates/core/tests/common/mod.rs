//! Brute-force oracles. Everything here uses only pairwise distances and
//! norms, never the library's indexes, graphs or cached diameters.
#![allow(dead_code)]

use std::collections::{BTreeSet, HashSet};

use coarsekit::{CoordNorm, MetricWindow, SetFamily};

pub const TOL: f64 = 1e-9;

pub fn plane_disk(radius: f64) -> MetricWindow {
    let k = radius as i64;
    let mut pts = vec![vec![0.0, 0.0]];
    for x in -k..=k {
        for y in -k..=k {
            let n = ((x * x + y * y) as f64).sqrt();
            if (x, y) != (0, 0) && n <= radius {
                pts.push(vec![x as f64, y as f64]);
            }
        }
    }
    let labels = pts.iter().map(|p| format!("({},{})", p[0], p[1])).collect();
    MetricWindow::from_coords(labels, pts, CoordNorm::L2, 0).unwrap()
}

pub fn line(radius: i64) -> MetricWindow {
    let pts: Vec<Vec<f64>> = std::iter::once(0).chain((1..=radius).flat_map(|i| [i, -i])).map(|i| vec![i as f64]).collect();
    let labels = pts.iter().map(|p| format!("{}", p[0])).collect();
    MetricWindow::from_coords(labels, pts, CoordNorm::L1, 0).unwrap()
}

pub fn angle(w: &MetricWindow, x: usize) -> f64 {
    let c = w.coords(x).unwrap();
    c[1].atan2(c[0])
}

/// Smallest absolute difference of two angles.
pub fn angle_gap(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(std::f64::consts::TAU);
    d.min(std::f64::consts::TAU - d)
}

pub fn dist_to_set(w: &MetricWindow, x: usize, set: &[usize]) -> f64 {
    if set.is_empty() {
        return w.radius() + 1.0;
    }
    set.iter().map(|&y| w.dist(x, y)).fold(f64::INFINITY, f64::min)
}

pub fn complement(n: usize, set: &[usize]) -> Vec<usize> {
    let s: HashSet<usize> = set.iter().copied().collect();
    (0..n).filter(|p| !s.contains(p)).collect()
}

pub fn diameter(w: &MetricWindow, m: &[usize]) -> f64 {
    let mut d = 0.0f64;
    for (i, &a) in m.iter().enumerate() {
        for &b in &m[i + 1..] {
            d = d.max(w.dist(a, b));
        }
    }
    d
}

pub fn mesh(w: &MetricWindow, f: &SetFamily) -> f64 {
    f.members.iter().map(|m| diameter(w, m)).fold(0.0, f64::max)
}

pub fn multiplicity(n: usize, f: &SetFamily) -> usize {
    let mut count = vec![0usize; n];
    for m in &f.members {
        for &p in m {
            count[p] += 1;
        }
    }
    count.into_iter().max().unwrap_or(0)
}

pub fn covers(n: usize, f: &SetFamily) -> bool {
    let mut seen = vec![false; n];
    for m in &f.members {
        for &p in m {
            seen[p] = true;
        }
    }
    seen.into_iter().all(|b| b)
}

/// L(x) at each of `points`: largest distance from x to the outside of a
/// member holding x (radius + 1 when the member is everything).
pub fn lebesgue_values(w: &MetricWindow, f: &SetFamily, points: &[usize]) -> Vec<f64> {
    let n = w.len();
    let wanted: HashSet<usize> = points.iter().copied().collect();
    let inside: Vec<Vec<bool>> = f
        .members
        .iter()
        .filter(|m| m.iter().any(|p| wanted.contains(p)))
        .map(|m| {
            let mut v = vec![false; n];
            for &p in m {
                v[p] = true;
            }
            v
        })
        .collect();
    points
        .iter()
        .map(|&x| {
            let mut best = 0.0f64;
            for ins in inside.iter().filter(|ins| ins[x]) {
                let mut d = w.radius() + 1.0;
                for y in 0..n {
                    if !ins[y] {
                        d = d.min(w.dist(x, y));
                    }
                }
                best = best.max(d);
            }
            best
        })
        .collect()
}

pub fn lebesgue(w: &MetricWindow, f: &SetFamily, points: &[usize]) -> f64 {
    lebesgue_values(w, f, points).into_iter().fold(f64::INFINITY, f64::min)
}

pub fn subset(a: &[usize], b: &[usize]) -> bool {
    let s: HashSet<usize> = b.iter().copied().collect();
    a.iter().all(|p| s.contains(p))
}

pub fn refines(a: &SetFamily, b: &SetFamily) -> bool {
    a.members.iter().all(|m| b.members.iter().any(|v| subset(m, v)))
}

pub fn as_set(f: &SetFamily) -> BTreeSet<Vec<usize>> {
    f.members.iter().map(|m| {
        let mut m = m.clone();
        m.sort_unstable();
        m
    }).collect()
}

/// sup over ordered pairs x != y of |f(x) - f(y)| ||x|| / d(x, y).
pub fn seminorm(w: &MetricWindow, f: &[f64]) -> f64 {
    seminorm_on(w, f, &(0..w.len()).collect::<Vec<_>>())
}

pub fn seminorm_on(w: &MetricWindow, f: &[f64], dom: &[usize]) -> f64 {
    let mut s = 0.0f64;
    for &x in dom {
        for &y in dom {
            let d = w.dist(x, y);
            if x != y && d > 0.0 {
                s = s.max((f[x] - f[y]).abs() * w.norm(x) / d);
            }
        }
    }
    s
}

/// d(A \ B_r, B \ B_r) with B_r the open ball; infinite when a side is empty.
pub fn separation_at(w: &MetricWindow, a: &[usize], b: &[usize], r: f64) -> f64 {
    let mut d = f64::INFINITY;
    for &x in a.iter().filter(|&&x| w.norm(x) >= r - TOL) {
        for &y in b.iter().filter(|&&y| w.norm(y) >= r - TOL) {
            d = d.min(w.dist(x, y));
        }
    }
    d
}

/// r1 together with every norm value in (r1, top].
pub fn step_points(w: &MetricWindow, r1: f64, top: f64) -> Vec<f64> {
    let mut v: Vec<f64> = w.norms().iter().copied().filter(|&n| n > r1 + TOL && n <= top + TOL).collect();
    v.push(r1);
    v.sort_by(f64::total_cmp);
    v.dedup_by(|a, b| (*a - *b).abs() <= TOL);
    v
}

pub fn smallest_positive_norm(w: &MetricWindow) -> f64 {
    w.norms().iter().copied().filter(|&n| n > TOL).fold(f64::INFINITY, f64::min)
}

pub fn l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub fn sparse_dense(c: &[(u32, f64)], k: usize) -> Vec<f64> {
    let mut v = vec![0.0; k];
    for &(i, x) in c {
        v[i as usize] = x;
    }
    v
}
