//! Rescaled limits along exponential index sets: sequences x_n with
//! ||x_n|| <= C n, tail-median distances d(x_n, y_n)/n, and the separation
//! inequalities between two such sequences.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::covers::{LinearityWitness, WitnessConfig};
use crate::error::{Error, Result};
use crate::space::{CoordNorm, MetricWindow, SpaceRecipe, TOL};
use crate::sublinear::divergence_witness;

/// Spread above which a tail median is reported as ultrafilter-dependent.
pub const SPREAD_FLAG: f64 = 0.05;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentialSequence {
    pub a: f64,
    pub values: Vec<u64>,
}

/// f(1) = start, f(k+1) = ceil(a f(k)).
pub fn exp_sequence(a: f64, start: u64, len: usize) -> Result<ExponentialSequence> {
    if !(a > 1.0) || start < 1 || len < 2 {
        return Err(Error::Precondition("exp_sequence needs a > 1, start >= 1, len >= 2".into()));
    }
    let mut values = vec![start];
    while values.len() < len {
        let next = (a * *values.last().unwrap_or(&start) as f64).ceil();
        // Beyond 2^53 consecutive integers are no longer exact in f64.
        if next >= 9_007_199_254_740_992.0 {
            return Err(Error::Precondition(format!("index overflow after {} terms", values.len())));
        }
        values.push(next as u64);
    }
    let seq = ExponentialSequence { a, values };
    if let Some(k) = seq.growth_violation() {
        return Err(Error::Invalid(format!("growth invariant fails at term {k}")));
    }
    Ok(seq)
}

impl ExponentialSequence {
    /// First k with f(k+1) < a f(k).
    pub fn growth_violation(&self) -> Option<usize> {
        self.values.windows(2).position(|p| (p[1] as f64) < self.a * p[0] as f64 - TOL)
    }
}

/// Points x_n of a window indexed by a strictly increasing index set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaledSequence {
    pub indices: Vec<u64>,
    pub points: Vec<usize>,
    pub cseq: f64,
}

impl ScaledSequence {
    /// Checks ||x_n|| <= cseq n for every entry.
    pub fn new(w: &MetricWindow, indices: Vec<u64>, points: Vec<usize>, cseq: f64) -> Result<Self> {
        if indices.len() != points.len() || indices.is_empty() {
            return Err(Error::Precondition("a sequence needs one point per index".into()));
        }
        if indices.windows(2).any(|p| p[1] <= p[0]) || indices[0] == 0 {
            return Err(Error::Precondition("indices must be positive and strictly increasing".into()));
        }
        if let Some(k) = (0..indices.len()).find(|&k| points[k] >= w.len() || w.norm(points[k]) > cseq * indices[k] as f64 + TOL) {
            return Err(Error::Precondition(format!("linear bound fails at n = {}", indices[k])));
        }
        Ok(ScaledSequence { indices, points, cseq })
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

fn same_index_set(x: &ScaledSequence, y: &ScaledSequence) -> Result<()> {
    if x.indices != y.indices {
        return Err(Error::Precondition("sequences must share their index set".into()));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConeDistance {
    pub estimate: f64,
    pub spread: f64,
    pub ultrafilter_dependent: bool,
}

/// Median and range of d(x_n, y_n)/n over the last `tail` indices.
pub fn cone_distance(x: &ScaledSequence, y: &ScaledSequence, w: &MetricWindow, tail: usize) -> Result<ConeDistance> {
    same_index_set(x, y)?;
    if tail == 0 || tail > x.len() {
        return Err(Error::Precondition(format!("tail {tail} must lie in 1..={}", x.len())));
    }
    let start = x.len() - tail;
    let mut ratios: Vec<f64> = (start..x.len()).map(|k| w.dist(x.points[k], y.points[k]) / x.indices[k] as f64).collect();
    ratios.sort_by(f64::total_cmp);
    let estimate = if tail % 2 == 1 { ratios[tail / 2] } else { 0.5 * (ratios[tail / 2 - 1] + ratios[tail / 2]) };
    let spread = ratios[tail - 1] - ratios[0];
    Ok(ConeDistance { estimate, spread, ultrafilter_dependent: spread > SPREAD_FLAG })
}

/// max{(2D1 + D2 + 3δ)/(D2 - δ), (2D2 + D1 + 3δ)/(D1 - δ)}.
pub fn required_growth(d1: f64, d2: f64, delta: f64) -> f64 {
    ((2.0 * d1 + d2 + 3.0 * delta) / (d2 - delta)).max((2.0 * d2 + d1 + 3.0 * delta) / (d1 - delta))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndexMargin {
    pub n: u64,
    pub pair_distance: f64,
    /// min over later m of d(x_n, y_m) - d(x_n, y_n), and the same with x, y
    /// swapped; none at the last index.
    pub later_margin_x: Option<f64>,
    pub later_margin_y: Option<f64>,
    /// min over later m of d(x_n, y_m) minus its lower bound, and swapped.
    pub cross_margin_x: Option<f64>,
    pub cross_margin_y: Option<f64>,
    /// Whether min over all m of d(x_n, y_m) is attained at m = n, and swapped.
    pub attained_x: bool,
    pub attained_y: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub a: f64,
    pub a_required: f64,
    pub a_bound_ok: bool,
    pub margins: Vec<IndexMargin>,
    /// Inequalities that broke, in index order.
    pub broken: Vec<String>,
    /// Indices where the nearest point of the other sequence sits at an
    /// earlier index; informational, see `pass`.
    pub earlier_nearest: Vec<u64>,
    /// a-bound, later-index attainment on both sides and both cross bounds.
    pub pass: bool,
}

/// Checks, for x and y on the index set of `seq`:
/// d(x_n, y_m) >= d(x_n, y_n) and d(y_n, x_m) >= d(x_n, y_n) for m > n, and
/// d(x_n, y_m) >= (a^l (D2 - δ) - (D1 + δ)) f(k) for n = f(k), m = f(k + l),
/// with its mirror. Together these give d(x_n, y_m) >= d(x_j, y_j) for
/// j = min(n, m), which is what separates the two traces.
pub fn gap_claim_check(x: &ScaledSequence, y: &ScaledSequence, w: &MetricWindow, seq: &ExponentialSequence, d1: f64, d2: f64, delta: f64) -> Result<GapReport> {
    same_index_set(x, y)?;
    if x.indices != seq.values {
        return Err(Error::Precondition("sequences must be indexed by the exponential sequence".into()));
    }
    if !(delta > 0.0) || d1 <= delta || d2 <= delta {
        return Err(Error::Precondition("need 0 < delta < min(D1, D2)".into()));
    }
    if let Some(k) = seq.growth_violation() {
        return Err(Error::Precondition(format!("f(k+1) >= a f(k) fails at n = {}", seq.values[k])));
    }
    for (k, &n) in x.indices.iter().enumerate() {
        let nf = n as f64;
        if (w.norm(x.points[k]) - d1 * nf).abs() >= delta * nf {
            return Err(Error::Precondition(format!("| ||x_n|| - D1 n | < delta n fails at n = {n}")));
        }
        if (w.norm(y.points[k]) - d2 * nf).abs() >= delta * nf {
            return Err(Error::Precondition(format!("| ||y_n|| - D2 n | < delta n fails at n = {n}")));
        }
    }
    let a = seq.a;
    let a_required = required_growth(d1, d2, delta);
    let a_bound_ok = a >= a_required - TOL;
    let mut broken = Vec::new();
    if !a_bound_ok {
        broken.push(format!("a-bound: a = {a} < {a_required}"));
    }
    let len = x.len();
    let mut margins = Vec::with_capacity(len);
    let mut earlier_nearest = Vec::new();
    for k in 0..len {
        let n = x.indices[k];
        let pair = w.dist(x.points[k], y.points[k]);
        let (mut lx, mut ly, mut cx, mut cy) = (f64::INFINITY, f64::INFINITY, f64::INFINITY, f64::INFINITY);
        for j in k + 1..len {
            let l = (j - k) as i32;
            let fk = n as f64;
            let dxy = w.dist(x.points[k], y.points[j]);
            let dyx = w.dist(y.points[k], x.points[j]);
            lx = lx.min(dxy - pair);
            ly = ly.min(dyx - pair);
            cx = cx.min(dxy - (a.powi(l) * (d2 - delta) - (d1 + delta)) * fk);
            cy = cy.min(dyx - (a.powi(l) * (d1 - delta) - (d2 + delta)) * fk);
        }
        let attained_x = (0..len).all(|j| w.dist(x.points[k], y.points[j]) >= pair - TOL);
        let attained_y = (0..len).all(|j| w.dist(y.points[k], x.points[j]) >= pair - TOL);
        if lx < -TOL {
            broken.push(format!("later attainment for x at n = {n}"));
        }
        if ly < -TOL {
            broken.push(format!("later attainment for y at n = {n}"));
        }
        if cx < -TOL {
            broken.push(format!("cross bound for x at n = {n}"));
        }
        if cy < -TOL {
            broken.push(format!("cross bound for y at n = {n}"));
        }
        if !attained_x || !attained_y {
            earlier_nearest.push(n);
        }
        let fin = |v: f64| v.is_finite().then_some(v);
        margins.push(IndexMargin { n, pair_distance: pair, later_margin_x: fin(lx), later_margin_y: fin(ly), cross_margin_x: fin(cx), cross_margin_y: fin(cy), attained_x, attained_y });
    }
    Ok(GapReport { a, a_required, a_bound_ok, margins, pass: broken.is_empty(), broken, earlier_nearest })
}

/// Divergence witness for the traces {x_n} and {y_n} inside the window
/// they span together with the basepoint.
pub fn xi_separation(x: &ScaledSequence, y: &ScaledSequence, w: &MetricWindow, eps: f64, cfg: &WitnessConfig) -> Result<LinearityWitness> {
    same_index_set(x, y)?;
    if !(eps > 0.0) {
        return Err(Error::Precondition("eps must be positive".into()));
    }
    if let Some(k) = (0..x.len()).find(|&k| w.dist(x.points[k], y.points[k]) / x.indices[k] as f64 <= eps) {
        return Err(Error::Precondition(format!("d(x_n, y_n)/n > eps fails at n = {}", x.indices[k])));
    }
    let mut pts: Vec<usize> = x.points.iter().chain(&y.points).copied().chain([w.basepoint()]).collect();
    pts.sort_unstable();
    pts.dedup();
    let z = w.restrict(&pts)?;
    let local = |p: &[usize]| -> Vec<usize> { p.iter().map(|q| pts.binary_search(q).unwrap_or(0)).collect() };
    divergence_witness(&[local(&x.points), local(&y.points)], &z, cfg)
}

/// Two sequences on rays of ℝ² (ℓ2): x_n near D1 n u and y_n near D2 n v,
/// each norm perturbed by less than delta n (scaled by `jitter` in [0, 1)).
#[derive(Clone, Debug)]
pub struct RayPair {
    pub window: MetricWindow,
    pub x: ScaledSequence,
    pub y: ScaledSequence,
}

pub fn ray_pair(seq: &ExponentialSequence, u: f64, d1: f64, v: f64, d2: f64, delta: f64, jitter: f64, seed: u64) -> Result<RayPair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pts = vec![vec![0.0, 0.0]];
    for &n in &seq.values {
        let nf = n as f64;
        let sx = d1 + jitter * delta * rng.gen_range(-1.0..1.0);
        let sy = d2 + jitter * delta * rng.gen_range(-1.0..1.0);
        pts.push(vec![sx * nf * u.cos(), sx * nf * u.sin()]);
        pts.push(vec![sy * nf * v.cos(), sy * nf * v.sin()]);
    }
    let window = MetricWindow::build(&SpaceRecipe::Cloud { dim: 2, count: 0, extent: 0.0, seed: 0, norm: CoordNorm::L2, points: pts.clone() })?;
    let find = |p: &[f64]| window.id(&crate::space::tuple_label(p));
    let xs = (0..seq.values.len()).map(|k| find(&pts[1 + 2 * k])).collect::<Result<Vec<_>>>()?;
    let ys = (0..seq.values.len()).map(|k| find(&pts[2 + 2 * k])).collect::<Result<Vec<_>>>()?;
    let c = d1.max(d2) + delta;
    Ok(RayPair { x: ScaledSequence::new(&window, seq.values.clone(), xs, c)?, y: ScaledSequence::new(&window, seq.values.clone(), ys, c)?, window })
}
