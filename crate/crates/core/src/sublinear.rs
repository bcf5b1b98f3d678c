//! Sublinear control of relations, divergence and separation witnesses,
//! Urysohn functions and the extension machinery over linear neighborhoods.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covers::{geometric_grid, linearity_witness, smallest_positive_norm, LinearityWitness, WitnessConfig};
use crate::error::{Error, Result};
use crate::space::{MetricWindow, TOL};

/// Finite relation of ordered pairs (y, x).
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Relation {
    pub pairs: Vec<(usize, usize)>,
}

impl Relation {
    pub fn diagonal(n: usize) -> Self {
        Relation { pairs: (0..n).map(|i| (i, i)).collect() }
    }

    pub fn inverse(&self) -> Self {
        Relation { pairs: self.pairs.iter().map(|&(y, x)| (x, y)).collect() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileSample {
    pub r: f64,
    pub forward: f64,
    pub backward: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlProfile {
    pub samples: Vec<ProfileSample>,
}

impl ControlProfile {
    pub fn max_at_or_above(&self, r: f64) -> f64 {
        self.samples.iter().filter(|s| s.r >= r - TOL).map(|s| s.forward.max(s.backward)).fold(0.0, f64::max)
    }
}

/// Every distinct positive norm when the window has at most 10^4 points,
/// else 64 geometric steps up to the radius.
pub fn default_r_grid(w: &MetricWindow) -> Vec<f64> {
    if w.len() <= 10_000 {
        let mut v: Vec<f64> = w.norms().iter().cloned().filter(|&x| x > TOL).collect();
        v.sort_by(f64::total_cmp);
        v.dedup_by(|a, b| (*a - *b).abs() <= TOL);
        v
    } else {
        smallest_positive_norm(w).map_or_else(Vec::new, |lo| geometric_grid(lo, w.radius(), 64))
    }
}

/// sup over pairs with key norm >= r of value, for each r; 0 over no pairs.
fn suffix_sup(mut keyed: Vec<(f64, f64)>, grid: &[f64]) -> Vec<f64> {
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut suffix = vec![0.0f64; keyed.len() + 1];
    for k in (0..keyed.len()).rev() {
        suffix[k] = suffix[k + 1].max(keyed[k].1);
    }
    grid.iter().map(|&r| suffix[keyed.partition_point(|p| p.0 < r - TOL)]).collect()
}

/// Forward: sup of d(y, x)/||x|| over pairs (y, x) with ||x|| >= r.
/// Backward: the same with the roles of y and x exchanged.
pub fn control_profile(e: &Relation, w: &MetricWindow, r_grid: &[f64]) -> ControlProfile {
    let fwd: Vec<(f64, f64)> = e.pairs.iter().filter(|p| w.norm(p.1) > TOL).map(|&(y, x)| (w.norm(x), w.dist(y, x) / w.norm(x))).collect();
    let bwd: Vec<(f64, f64)> = e.pairs.iter().filter(|p| w.norm(p.0) > TOL).map(|&(y, x)| (w.norm(y), w.dist(y, x) / w.norm(y))).collect();
    let f = suffix_sup(fwd, r_grid);
    let b = suffix_sup(bwd, r_grid);
    ControlProfile { samples: r_grid.iter().zip(f).zip(b).map(|((&r, forward), backward)| ProfileSample { r, forward, backward }).collect() }
}

/// Linearity witness for x -> max_i d(x, E_i).
pub fn divergence_witness(sets: &[Vec<usize>], w: &MetricWindow, cfg: &WitnessConfig) -> Result<LinearityWitness> {
    if sets.is_empty() {
        return Err(Error::Precondition("divergence needs at least one set".into()));
    }
    Ok(linearity_witness(&divergence_function(sets, w), w, cfg))
}

pub fn divergence_function(sets: &[Vec<usize>], w: &MetricWindow) -> Vec<f64> {
    let mut f = vec![0.0f64; w.len()];
    for s in sets {
        for (x, d) in w.dist_to_set_all(s).into_iter().enumerate() {
            f[x] = f[x].max(d);
        }
    }
    f
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeparationWitness {
    pub d: f64,
    pub r1: f64,
    pub valid: bool,
    /// (r, d(A \ B_r, B \ B_r)) on the evaluation grid.
    pub profile: Vec<(f64, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

/// r -> d(A \ B_r, B \ B_r) with B_r the open ball; sentinel when a side is
/// empty. Checks of s(r) >= D r skip those r: the infimum over no pairs is
/// infinite, and radius + 1 is not large enough to stand in for it once D > 1.
pub struct SeparationFunction {
    keys: Vec<f64>,
    suffix: Vec<f64>,
    sentinel: f64,
}

impl SeparationFunction {
    pub fn new(a: &[usize], b: &[usize], w: &MetricWindow) -> Self {
        let mut keyed: Vec<(f64, f64)> = a
            .par_iter()
            .flat_map_iter(|&x| b.iter().map(move |&y| (w.norm(x).min(w.norm(y)), w.dist(x, y))))
            .collect();
        keyed.sort_by(|p, q| p.0.total_cmp(&q.0));
        let mut suffix = vec![f64::INFINITY; keyed.len() + 1];
        for k in (0..keyed.len()).rev() {
            suffix[k] = suffix[k + 1].min(keyed[k].1);
        }
        SeparationFunction { keys: keyed.iter().map(|p| p.0).collect(), suffix, sentinel: w.sentinel() }
    }

    /// No pair survives outside B_r.
    pub fn vacuous(&self, r: f64) -> bool {
        self.keys.last().is_none_or(|&k| k < r - TOL)
    }

    pub fn at(&self, r: f64) -> f64 {
        let v = self.suffix[self.keys.partition_point(|&k| k < r - TOL)];
        if v.is_finite() {
            v
        } else {
            self.sentinel
        }
    }
}

/// Evaluation points for "every r in [r1, top]": r1 itself and every norm
/// value in between. The separation is a step function that only changes at
/// norm values, so its ratio to r is smallest at these points.
pub fn exact_grid(w: &MetricWindow, r1: f64, top: f64) -> Vec<f64> {
    let mut g = vec![r1];
    g.extend(default_exact_norms(w).into_iter().filter(|&v| v > r1 + TOL && v <= top + TOL));
    g
}

fn default_exact_norms(w: &MetricWindow) -> Vec<f64> {
    let mut v: Vec<f64> = w.norms().iter().cloned().filter(|&x| x > TOL).collect();
    v.sort_by(f64::total_cmp);
    v.dedup_by(|a, b| (*a - *b).abs() <= TOL);
    v
}

/// Smallest r in the grid where s(r) < d r, if any.
pub fn check_separation(sep: &SeparationFunction, w: &MetricWindow, d: f64, r1: f64, top: f64) -> Option<f64> {
    exact_grid(w, r1, top).into_iter().find(|&r| !sep.vacuous(r) && sep.at(r) < d * r - TOL)
}

/// First point x with r0 <= ||x|| <= top and f(x) < c ||x||.
pub fn check_divergence(f: &[f64], w: &MetricWindow, c: f64, r0: f64, top: f64) -> Option<usize> {
    (0..w.len()).find(|&x| w.norm(x) >= r0 - TOL && w.norm(x) <= top + TOL && f[x] < c * w.norm(x) - TOL)
}

pub fn separation_witness(a: &[usize], b: &[usize], w: &MetricWindow, cfg: &WitnessConfig) -> Result<SeparationWitness> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Precondition("separation needs two nonempty sets".into()));
    }
    let sep = SeparationFunction::new(a, b, w);
    let rim = w.rim(cfg.margin);
    let Some(lo) = smallest_positive_norm(w) else {
        return Ok(SeparationWitness { d: 0.0, r1: 0.0, valid: false, profile: vec![], reason: Some("window has no point of positive norm".into()) });
    };
    let grid = exact_grid(w, lo, rim);
    let profile: Vec<(f64, f64)> = grid.iter().map(|&r| (r, sep.at(r))).collect();
    let mut best: Option<(f64, f64)> = None;
    for r1 in geometric_grid(lo, w.radius() / 2.0, cfg.steps) {
        if sep.vacuous(r1) || r1 > rim + TOL {
            continue;
        }
        let d = profile.iter().filter(|p| p.0 >= r1 - TOL && !sep.vacuous(p.0)).map(|p| p.1 / p.0).fold(sep.at(r1) / r1, f64::min);
        if best.is_none_or(|(bd, _)| d > bd) {
            best = Some((d, r1));
        }
    }
    Ok(match best {
        None => SeparationWitness { d: 0.0, r1: 0.0, valid: false, profile, reason: Some("A \\ B_r or B \\ B_r is empty for every grid r".into()) },
        Some((d, r1)) => {
            let valid = d > cfg.threshold;
            SeparationWitness { d, r1, valid, profile, reason: (!valid).then(|| format!("best separation slope {d:.3e} is below threshold")) }
        }
    })
}

/// Divergence witness (c, r0) gives separation with D = c, r1 = r0.
pub fn separation_from_divergence(c: f64, r0: f64) -> (f64, f64) {
    (c, r0)
}

/// Separation (D, r1) gives divergence with any C < min{1/2, D/4}; we take
/// 99% of the bound, and r0 = 2 r1.
pub fn divergence_from_separation(d: f64, r1: f64) -> (f64, f64) {
    (0.99 * (0.5f64).min(d / 4.0), 2.0 * r1)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariationSeminorm {
    pub value: f64,
    pub argmax: Option<(usize, usize)>,
    pub sup_abs: f64,
}

/// sup over ordered pairs x != y of |f(x) - f(y)| ||x|| / d(x, y).
pub fn variation_seminorm(f: &[f64], w: &MetricWindow) -> VariationSeminorm {
    variation_on(f, w, &(0..w.len()).collect::<Vec<_>>())
}

/// Seminorm restricted to pairs inside `dom`.
pub fn variation_on(f: &[f64], w: &MetricWindow, dom: &[usize]) -> VariationSeminorm {
    let (value, argmax) = dom
        .par_iter()
        .map(|&x| {
            let nx = w.norm(x);
            let mut best = (0.0f64, None);
            if nx <= TOL {
                return best;
            }
            for &y in dom {
                let d = w.dist(x, y);
                if d <= TOL {
                    continue;
                }
                let v = (f[x] - f[y]).abs() * nx / d;
                if v > best.0 {
                    best = (v, Some((x, y)));
                }
            }
            best
        })
        .reduce(|| (0.0, None), |a, b| if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1 && b.1.is_some()) { b } else { a });
    let sup_abs = dom.iter().map(|&x| f[x].abs()).fold(0.0, f64::max);
    VariationSeminorm { value, argmax, sup_abs }
}

fn complement(set: &[usize], n: usize) -> Vec<usize> {
    let mut inside = vec![false; n];
    for &p in set {
        inside[p] = true;
    }
    (0..n).filter(|&p| !inside[p]).collect()
}

fn ratio(num: &[f64], other: &[f64], w: &MetricWindow, what: &str) -> Result<Vec<f64>> {
    num.iter()
        .zip(other)
        .enumerate()
        .map(|(x, (a, b))| {
            if a + b <= 0.0 {
                Err(Error::Precondition(format!("{what}: d(x,A) + d(x,B) = 0 at {}", w.label(x))))
            } else {
                Ok(a / (a + b))
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UrysohnReport {
    pub phi: Vec<f64>,
    pub seminorm: VariationSeminorm,
    /// Separation constant used in the bound, after clamping to 2.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_used: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub within: Option<bool>,
}

/// phi = d(x,A) / (d(x,A) + d(x,B)): 0 on A, 1 on B.
///
/// With a hypothesis constant `c` (verified for every r > 0) the seminorm is
/// checked against 3/min(c, 2): the underlying estimate yields (1 + c)/c,
/// which stays below 3/c only while c <= 2.
pub fn urysohn_phi(a: &[usize], b: &[usize], w: &MetricWindow, c: Option<f64>) -> Result<UrysohnReport> {
    let da = w.dist_to_set_all(a);
    let db = w.dist_to_set_all(b);
    let phi = ratio(&da, &db, w, "urysohn function")?;
    let seminorm = variation_seminorm(&phi, w);
    let mut rep = UrysohnReport { phi, seminorm, c_used: None, bound: None, within: None };
    if let Some(c) = c {
        let lo = smallest_positive_norm(w).unwrap_or(1.0);
        let sep = SeparationFunction::new(a, b, w);
        if let Some(r) = check_separation(&sep, w, c, lo, w.radius()) {
            return Err(Error::Precondition(format!("separation hypothesis with constant {c} fails at r = {r}")));
        }
        let cu = c.min(2.0);
        rep.c_used = Some(cu);
        rep.bound = Some(3.0 / cu);
        rep.within = Some(rep.seminorm.value <= 3.0 / cu + TOL);
    }
    Ok(rep)
}

/// Separation of A from X \ W for every r > 0 (up to the radius).
pub fn linear_neighborhood_check(a: &[usize], wset: &[usize], w: &MetricWindow, threshold: f64) -> Result<SeparationWitness> {
    let mut in_w = vec![false; w.len()];
    for &p in wset {
        in_w[p] = true;
    }
    if let Some(&p) = a.iter().find(|&&p| !in_w[p]) {
        return Err(Error::Precondition(format!("A is not inside W: {} is missing", w.label(p))));
    }
    let b = complement(wset, w.len());
    let lo = smallest_positive_norm(w).unwrap_or(1.0);
    let sep = SeparationFunction::new(a, &b, w);
    let grid = exact_grid(w, lo, w.radius());
    let profile: Vec<(f64, f64)> = grid.iter().map(|&r| (r, sep.at(r))).collect();
    let d = profile.iter().filter(|p| !sep.vacuous(p.0)).map(|p| p.1 / p.0).fold(f64::INFINITY, f64::min);
    let d = if d.is_finite() { d } else { w.sentinel() };
    let valid = d > threshold;
    Ok(SeparationWitness { d, r1: lo, valid, profile, reason: (!valid).then(|| format!("separation slope {d:.3e} from the complement is below {threshold:.1e}")) })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HatExtension {
    pub values: Vec<f64>,
    pub phi: Vec<f64>,
    pub neighborhood: SeparationWitness,
    pub c_f: f64,
    pub sup_f: f64,
    pub c_phi: f64,
    pub seminorm: f64,
    pub bound: f64,
    pub within: bool,
}

/// f on W times the bump d(x,B)/(d(x,A)+d(x,B)), B = X \ W; zero off W.
pub fn hat_extension(f: &[f64], a: &[usize], wset: &[usize], w: &MetricWindow) -> Result<HatExtension> {
    let neighborhood = linear_neighborhood_check(a, wset, w, 1e-3)?;
    if !neighborhood.valid {
        return Err(Error::Precondition(format!("W is not a linear neighborhood of A: {}", neighborhood.reason.clone().unwrap_or_default())));
    }
    let b = complement(wset, w.len());
    let da = w.dist_to_set_all(a);
    let db = w.dist_to_set_all(&b);
    let phi = ratio(&db, &da, w, "bump function")?;
    let mut in_w = vec![false; w.len()];
    for &p in wset {
        in_w[p] = true;
    }
    let values: Vec<f64> = (0..w.len()).map(|x| if in_w[x] { phi[x] * f[x] } else { 0.0 }).collect();
    let on_w = variation_on(f, w, wset);
    let c_phi = variation_seminorm(&phi, w).value;
    let seminorm = variation_seminorm(&values, w).value;
    let bound = on_w.value + on_w.sup_abs * c_phi;
    Ok(HatExtension { values, phi, neighborhood, c_f: on_w.value, sup_f: on_w.sup_abs, c_phi, seminorm, bound, within: seminorm <= bound + TOL * bound.max(1.0) })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlendExtension {
    pub values: Vec<f64>,
    pub hat: HatExtension,
    /// {x : |hat(x) - fbar(x)| < eps/2}.
    pub inner: Vec<usize>,
    pub inner_check: SeparationWitness,
    pub max_deviation: f64,
    pub close: bool,
    pub extends: bool,
    pub seminorm: f64,
}

pub fn blend_extension(f: &[f64], fbar: &[f64], a: &[usize], wset: &[usize], eps: f64, w: &MetricWindow) -> Result<BlendExtension> {
    if !(eps > 0.0) {
        return Err(Error::Precondition("eps must be positive".into()));
    }
    if let Some(&p) = a.iter().find(|&&p| (f[p] - fbar[p]).abs() > TOL) {
        return Err(Error::Precondition(format!("global map disagrees with f on A at {}", w.label(p))));
    }
    let hat = hat_extension(f, a, wset, w)?;
    let inner: Vec<usize> = (0..w.len()).filter(|&x| (hat.values[x] - fbar[x]).abs() < eps / 2.0).collect();
    let inner_check = linear_neighborhood_check(a, &inner, w, 1e-3)?;
    if !inner_check.valid {
        let prof: Vec<String> = inner_check.profile.iter().take(8).map(|(r, s)| format!("({r:.3}, {s:.3})")).collect();
        return Err(Error::Precondition(format!("no linear neighborhood at eps = {eps}; separation profile {}", prof.join(" "))));
    }
    let da = w.dist_to_set_all(a);
    let d_out = w.dist_to_set_all(&complement(&inner, w.len()));
    let psi1 = ratio(&d_out, &da, w, "blend weights")?;
    let values: Vec<f64> = (0..w.len()).map(|x| psi1[x] * hat.values[x] + (1.0 - psi1[x]) * fbar[x]).collect();
    let max_deviation = values.iter().zip(fbar).map(|(g, b)| (g - b).abs()).fold(0.0, f64::max);
    let extends = a.iter().all(|&p| (values[p] - f[p]).abs() <= TOL);
    let seminorm = variation_seminorm(&values, w).value;
    Ok(BlendExtension { values, hat, inner, inner_check, max_deviation, close: max_deviation <= eps, extends, seminorm })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioBlend {
    pub values: Vec<f64>,
    pub c_u: f64,
    pub c_v: f64,
    pub seminorm: f64,
    pub bound: f64,
    pub within: bool,
}

/// u / (u + v) for nonnegative u, v with u + v >= delta.
pub fn ratio_blend(u: &[f64], v: &[f64], delta: f64, w: &MetricWindow) -> Result<RatioBlend> {
    if !(delta > 0.0) {
        return Err(Error::Precondition("delta must be positive".into()));
    }
    for x in 0..w.len() {
        if u[x] < -TOL || v[x] < -TOL {
            return Err(Error::Precondition(format!("negative value at {}", w.label(x))));
        }
        if u[x] + v[x] < delta - TOL {
            return Err(Error::Precondition(format!("u + v = {} < delta at {}", u[x] + v[x], w.label(x))));
        }
    }
    let values: Vec<f64> = u.iter().zip(v).map(|(a, b)| a / (a + b)).collect();
    let c_u = variation_seminorm(u, w).value;
    let c_v = variation_seminorm(v, w).value;
    let seminorm = variation_seminorm(&values, w).value;
    let bound = (2.0 * c_u + c_v) / delta;
    Ok(RatioBlend { values, c_u, c_v, seminorm, bound, within: seminorm <= bound + TOL * bound.max(1.0) })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimplexExtension {
    /// h(x) per point, n+1 barycentric coordinates on the boundary.
    pub h: Vec<Vec<f64>>,
    pub min_abs_sum: f64,
    pub min_clearance: f64,
    pub sum_ok: bool,
    pub clearance_ok: bool,
    pub extends: bool,
    /// sup |h(x) - h(y)| / |q'(x) - q'(y)| over window pairs.
    pub retraction_lipschitz: f64,
}

fn l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Pushes x -> (q_0(x), ..., q_n(x)) to the simplex boundary by normalizing
/// absolute values and retracting radially from the barycenter.
/// `q[i][x]` and `g[i][x]` are coordinate i at point x.
pub fn simplex_boundary_extension(q: &[Vec<f64>], g: &[Vec<f64>], a: &[usize], w: &MetricWindow) -> Result<SimplexExtension> {
    let k = q.len();
    if k < 2 || g.len() != k {
        return Err(Error::Precondition("need n+1 >= 2 coordinate maps for both q and g".into()));
    }
    let n_pts = w.len();
    let tol_pert = 1.0 / (3.0 * k as f64);
    for x in 0..n_pts {
        let sum: f64 = (0..k).map(|i| g[i][x]).sum();
        if (0..k).any(|i| g[i][x] < -TOL) || (sum - 1.0).abs() > 1e-9 || !(0..k).any(|i| g[i][x].abs() <= TOL) {
            return Err(Error::Precondition(format!("g is not on the simplex boundary at {}", w.label(x))));
        }
        for i in 0..k {
            if (q[i][x] - g[i][x]).abs() > tol_pert + TOL {
                return Err(Error::Precondition(format!("|q_{i} - g_{i}| = {} exceeds 1/(3(n+1)) at {}", (q[i][x] - g[i][x]).abs(), w.label(x))));
            }
        }
    }
    for &x in a {
        if let Some(i) = (0..k).find(|&i| (q[i][x] - g[i][x]).abs() > TOL) {
            return Err(Error::Precondition(format!("q_{i} differs from g_{i} on A at {}", w.label(x))));
        }
    }
    let bary = vec![1.0 / k as f64; k];
    let mut min_abs_sum = f64::INFINITY;
    let mut min_clearance = f64::INFINITY;
    let mut qp = Vec::with_capacity(n_pts);
    let mut h = Vec::with_capacity(n_pts);
    for x in 0..n_pts {
        let s: f64 = (0..k).map(|i| q[i][x].abs()).sum();
        min_abs_sum = min_abs_sum.min(s);
        let v: Vec<f64> = (0..k).map(|i| q[i][x].abs() / s).collect();
        min_clearance = min_clearance.min(l2(&v, &bary));
        let t = (0..k).filter(|&i| v[i] < bary[i]).map(|i| bary[i] / (bary[i] - v[i])).fold(f64::INFINITY, f64::min);
        let hx: Vec<f64> = (0..k).map(|i| (bary[i] + t * (v[i] - bary[i])).max(0.0)).collect();
        qp.push(v);
        h.push(hx);
    }
    let retraction_lipschitz = (0..n_pts)
        .into_par_iter()
        .map(|x| {
            ((x + 1)..n_pts)
                .map(|y| {
                    let dq = l2(&qp[x], &qp[y]);
                    if dq <= 1e-12 {
                        0.0
                    } else {
                        l2(&h[x], &h[y]) / dq
                    }
                })
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max);
    let extends = a.iter().all(|&x| (0..k).all(|i| (h[x][i] - g[i][x]).abs() <= 1e-9));
    Ok(SimplexExtension {
        h,
        min_abs_sum,
        min_clearance,
        sum_ok: min_abs_sum >= 2.0 / 3.0 - TOL,
        clearance_ok: min_clearance >= 1.0 / (2.0 * k as f64) - TOL,
        extends,
        retraction_lipschitz,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QiReport {
    pub lambda: f64,
    pub c: f64,
    pub lower_violations: usize,
    pub upper_violations: usize,
    /// Smallest (lambda', C') pair this map would need with C' = c.
    pub measured_upper: f64,
    pub density: f64,
    pub dense: bool,
    pub is_qi: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relation: Option<RelationTransport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelationTransport {
    pub source: ControlProfile,
    pub image: ControlProfile,
    /// Norm above which the per-pair bound applies: 2 lambda (C + d(f x0, y0)).
    pub threshold: f64,
    pub bound_violations: usize,
    pub pairs_checked: usize,
}

/// Checks (1/lambda) d - C <= d(f x, f y) <= lambda d + C on every pair and
/// the density of the image; optionally transports a relation.
pub fn qi_check(f: &[usize], wx: &MetricWindow, wy: &MetricWindow, lambda: f64, c: f64, density: f64, e: Option<&Relation>) -> Result<QiReport> {
    if f.len() != wx.len() || f.iter().any(|&y| y >= wy.len()) {
        return Err(Error::Precondition("map must send every source point into the target window".into()));
    }
    let n = wx.len();
    let (lower, upper, measured_upper) = (0..n)
        .into_par_iter()
        .map(|x| {
            let (mut lo, mut hi, mut mu) = (0usize, 0usize, 0.0f64);
            for y in (x + 1)..n {
                let d = wx.dist(x, y);
                let dy = wy.dist(f[x], f[y]);
                if dy < d / lambda - c - TOL {
                    lo += 1;
                }
                if dy > lambda * d + c + TOL {
                    hi += 1;
                }
                if d > TOL {
                    mu = mu.max((dy - c) / d);
                }
            }
            (lo, hi, mu)
        })
        .reduce(|| (0, 0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1, a.2.max(b.2)));
    let image: Vec<usize> = f.to_vec();
    let dens = wy.dist_to_set_all(&image).into_iter().fold(0.0, f64::max);
    let relation = e.map(|e| {
        let grid = default_r_grid(wx);
        let img = Relation { pairs: e.pairs.iter().map(|&(y, x)| (f[y], f[x])).collect() };
        let delta0 = wy.norm(f[wx.basepoint()]);
        let threshold = 2.0 * lambda * (c + delta0);
        let mut viol = 0;
        let mut checked = 0;
        for &(y, x) in &e.pairs {
            let nx = wx.norm(x);
            if nx < threshold || nx <= TOL || wy.norm(f[x]) <= TOL {
                continue;
            }
            checked += 1;
            let lhs = wy.dist(f[y], f[x]) / wy.norm(f[x]);
            let rhs = 2.0 * lambda * lambda * wx.dist(y, x) / nx + 2.0 * lambda * c / nx;
            if lhs > rhs + TOL {
                viol += 1;
            }
        }
        RelationTransport { source: control_profile(e, wx, &grid), image: control_profile(&img, wy, &default_r_grid(wy)), threshold, bound_violations: viol, pairs_checked: checked }
    });
    Ok(QiReport {
        lambda,
        c,
        lower_violations: lower,
        upper_violations: upper,
        measured_upper,
        density: dens,
        dense: dens <= density + TOL,
        is_qi: lower == 0 && upper == 0 && dens <= density + TOL,
        relation,
    })
}
