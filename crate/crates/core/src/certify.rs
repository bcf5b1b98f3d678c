//! Dimension certificates: per-scale covers with mesh <= C r, multiplicity
//! <= n+1 and Lebesgue number > r, plus the constructions that produce them.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, HashMap};
use std::sync::atomic::{AtomicUsize, Ordering};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covers::{Cover, SetFamily, WitnessConfig};
use crate::error::{Error, Result};
use crate::space::{fmt_num, CoordNorm, product_parts, MetricWindow, SpaceRecipe, TOL};
use crate::sublinear::{control_profile, default_r_grid, divergence_witness, qi_check, ControlProfile, QiReport, Relation};

pub use crate::report::SCHEMA_VERSION;

/// Fraction of the radius excluded from the r-grid.
pub const RIM_MARGIN: f64 = 0.1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertEntry {
    pub r: f64,
    pub members: Vec<Vec<String>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ANCertificate {
    pub schema_version: u32,
    pub n: usize,
    pub c: f64,
    pub r0: f64,
    pub window: SpaceRecipe,
    pub construction: String,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
    pub entries: Vec<CertEntry>,
}

/// Outcome of the three per-scale inequalities on one cover.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntryReport {
    pub r: f64,
    pub members: usize,
    pub mesh: f64,
    pub multiplicity: usize,
    pub lebesgue: f64,
    /// Point where the Lebesgue function is smallest.
    pub lebesgue_point: String,
    /// Point lying in the most members.
    pub multiplicity_point: String,
    /// Most members met by an open r-ball (informational).
    pub ball_meeting: usize,
    pub mesh_ok: bool,
    pub multiplicity_ok: bool,
    pub lebesgue_ok: bool,
    pub pass: bool,
    /// (annulus lower norm, min Lebesgue value on the annulus).
    pub profile: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub n: usize,
    pub c: f64,
    pub entries: Vec<EntryReport>,
    pub pass: bool,
}

impl VerifyReport {
    pub fn first_failure(&self) -> Option<&EntryReport> {
        self.entries.iter().find(|e| !e.pass)
    }
}

const PROFILE_BINS: usize = 16;

pub fn check_entry(cover: &Cover, w: &MetricWindow, n: usize, c: f64, r: f64) -> EntryReport {
    let lf = cover.lebesgue_function(w);
    let (lp, lebesgue) = lf.iter().cloned().enumerate().fold((0, f64::INFINITY), |a, (i, v)| if v < a.1 { (i, v) } else { a });
    let table = cover.membership(w.len());
    let (mp, multiplicity) = table.iter().map(Vec::len).enumerate().fold((0, 0), |a, (i, v)| if v > a.1 { (i, v) } else { a });
    let ball_meeting = (0..w.len())
        .into_par_iter()
        .map(|x| {
            let mut met: Vec<u32> = w.ball(x, r).into_iter().filter(|&y| w.dist(x, y) < r).flat_map(|y| table[y].iter().copied()).collect();
            met.sort_unstable();
            met.dedup();
            met.len()
        })
        .max()
        .unwrap_or(0);
    let mesh = cover.mesh(w);
    let width = (w.radius() / PROFILE_BINS as f64).max(TOL);
    let mut profile: Vec<(f64, f64)> = (0..PROFILE_BINS).map(|k| (k as f64 * width, f64::INFINITY)).collect();
    for (x, v) in lf.iter().enumerate() {
        let k = ((w.norm(x) / width) as usize).min(PROFILE_BINS - 1);
        profile[k].1 = profile[k].1.min(*v);
    }
    profile.retain(|p| p.1.is_finite());
    let mesh_ok = mesh <= c * r + TOL;
    let multiplicity_ok = multiplicity <= n + 1;
    let lebesgue_ok = lebesgue > r + TOL;
    EntryReport {
        r,
        members: cover.len(),
        mesh,
        multiplicity,
        lebesgue,
        lebesgue_point: w.label(lp).to_string(),
        multiplicity_point: w.label(mp).to_string(),
        ball_meeting,
        mesh_ok,
        multiplicity_ok,
        lebesgue_ok,
        pass: mesh_ok && multiplicity_ok && lebesgue_ok,
        profile,
    }
}

/// Checks every entry of `cert` on `w`; malformed entries are errors.
pub fn verify(cert: &ANCertificate, w: &MetricWindow) -> Result<VerifyReport> {
    if cert.entries.is_empty() {
        return Err(Error::Precondition("certificate has no entries".into()));
    }
    if !(cert.c > 0.0) || !(cert.r0 > 0.0) {
        return Err(Error::Precondition("certificate needs C > 0 and r0 > 0".into()));
    }
    let covers = cert
        .entries
        .iter()
        .enumerate()
        .map(|(i, e)| {
            // Past the sentinel radius + 1 no cover can have Lebesgue number > r.
            if e.r < cert.r0 - TOL || e.r >= w.sentinel() {
                return Err(Error::Precondition(format!("entry {i}: r = {} lies outside [r0, radius + 1)", e.r)));
            }
            SetFamily::from_labels(w, &e.members).map_err(|err| Error::Invalid(format!("entry {i}: {err}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let entries: Vec<EntryReport> = cert.entries.par_iter().zip(covers.par_iter()).map(|(e, cv)| check_entry(cv, w, cert.n, cert.c, e.r)).collect();
    let pass = entries.iter().all(|e| e.pass);
    Ok(VerifyReport { n: cert.n, c: cert.c, entries, pass })
}

/// Builds the certificate's window from its recipe and verifies.
pub fn verify_cert(cert: &ANCertificate) -> Result<VerifyReport> {
    verify(cert, &MetricWindow::build(&cert.window)?)
}

/// r0, 2 r0, 4 r0, ... up to rim / (4 C); always contains r0.
pub fn r_grid(r0: f64, rim: f64, c: f64) -> Vec<f64> {
    let mut out = vec![r0];
    let top = rim / (4.0 * c);
    while out.last().is_some_and(|&r| 2.0 * r <= top + TOL) {
        out.push(2.0 * out.last().copied().unwrap_or(r0));
    }
    out
}

fn window_recipe(w: &MetricWindow) -> Result<SpaceRecipe> {
    w.recipe().cloned().ok_or_else(|| Error::Precondition("certificates need a window built from a recipe".into()))
}

// ==== bricks ====

/// Staggered boxes on a ℤ^d window: d+1 families, each r-disjoint, each
/// point r-deep inside a box of some family.
///
/// Per family c the boxes are translates of a cube of period p = (d+1) s
/// shifted diagonally by c s and shrunk by m on every side, with 2m+1 > r and
/// s = 2(m+k), k = floor(r). The residues within m+k of a box wall form one
/// band of width s per family; the d coordinates hit at most d bands. The
/// plane uses the rotated coordinates (x+y, x-y), where ℓ1 becomes ℓ∞.
pub fn brick_cover(d: usize, r: f64, w: &MetricWindow) -> Result<Cover> {
    if w.lattice_dim() != Some(d) {
        return Err(Error::Precondition(format!("brick cover needs a ℤ^{d} lattice window")));
    }
    if !(r >= 1.0) {
        return Err(Error::Precondition("brick cover needs r >= 1".into()));
    }
    if r > w.radius() {
        return SetFamily::new(vec![(0..w.len()).collect()]);
    }
    let m = ((r - 1.0) / 2.0).floor() as i64 + 1;
    let k = r.floor() as i64;
    let s = 2 * (m + k);
    let period = (d as i64 + 1) * s;
    let mut boxes: BTreeMap<(i64, Vec<i64>), Vec<usize>> = BTreeMap::new();
    for p in 0..w.len() {
        let x: Vec<i64> = w.coords(p).ok_or_else(|| Error::Precondition("lattice window lost its coordinates".into()))?.iter().map(|v| v.round() as i64).collect();
        let u = if d == 2 { vec![x[0] + x[1], x[0] - x[1]] } else { x };
        for c in 0..=d as i64 {
            let shifted: Vec<i64> = u.iter().map(|v| v - c * s).collect();
            if shifted.iter().all(|v| {
                let rho = v.rem_euclid(period);
                rho >= m && rho < period - m
            }) {
                boxes.entry((c, shifted.iter().map(|v| v.div_euclid(period)).collect())).or_default().push(p);
            }
        }
    }
    SetFamily::new(boxes.into_values().collect())
}

/// Brick certificate at n = d over the r-grid from `r0`; C is the largest
/// measured mesh/r on the grid.
pub fn brick_certificate(w: &MetricWindow, r0: f64) -> Result<ANCertificate> {
    let d = w.lattice_dim().ok_or_else(|| Error::Precondition("brick certificate needs a lattice window".into()))?;
    let rim = w.rim(RIM_MARGIN);
    let slope = |r: f64| -> Result<(Cover, f64)> {
        let cv = brick_cover(d, r, w)?;
        let m = cv.mesh(w);
        Ok((cv, m / r))
    };
    let (_, c0) = slope(r0)?;
    let mut grid = r_grid(r0, rim, c0);
    let mut built: Vec<(f64, Cover, f64)> = grid.par_iter().map(|&r| slope(r).map(|(cv, s)| (r, cv, s))).collect::<Result<_>>()?;
    let mut c = built.iter().map(|b| b.2).fold(c0, f64::max);
    // A larger C only shrinks the grid, so one pass settles it.
    grid = r_grid(r0, rim, c);
    built.truncate(grid.len());
    c = built.iter().map(|b| b.2).fold(c0, f64::max);
    let mut metadata = BTreeMap::new();
    metadata.insert("lattice_dim".into(), d.to_string());
    let cert = ANCertificate {
        schema_version: SCHEMA_VERSION,
        n: d,
        c,
        r0,
        window: window_recipe(w)?,
        construction: "brick".into(),
        metadata,
        entries: built.iter().map(|(r, cv, _)| CertEntry { r: *r, members: cv.to_labels(w) }).collect(),
    };
    self_verify(&cert, w)?;
    Ok(cert)
}

fn self_verify(cert: &ANCertificate, w: &MetricWindow) -> Result<VerifyReport> {
    let rep = verify(cert, w)?;
    if let Some(bad) = rep.first_failure() {
        return Err(Error::Verification(format!(
            "{} certificate failed at r = {}: mesh {} (C r = {}), multiplicity {} (n+1 = {}), Lebesgue {} at {}",
            cert.construction,
            bad.r,
            fmt_num(bad.mesh),
            fmt_num(cert.c * bad.r),
            bad.multiplicity,
            cert.n + 1,
            fmt_num(bad.lebesgue),
            bad.lebesgue_point
        )));
    }
    Ok(rep)
}

// ==== greedy search ====

/// Net spacings tried in order, as multiples of r. Only those with
/// 2 s + 2 r <= C r are used, so a larger C tries a superset.
pub const NET_SPACINGS: [f64; 9] = [8.0, 6.0, 4.0, 3.0, 2.0, 1.5, 1.0, 0.75, 0.5];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchFailure {
    pub seed: u64,
    pub restarts: usize,
    /// Merges attempted over all restarts.
    pub iterations: usize,
    /// Lowest final multiplicity over the restarts (0 when none ran).
    pub best_multiplicity: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchSuccess {
    pub seed: u64,
    /// Spacing factor of the net that succeeded; 0 for the single-member cover.
    pub spacing: f64,
    pub merges: usize,
    pub cover: Cover,
    pub report: EntryReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum SearchOutcome {
    Found(SearchSuccess),
    Exhausted(SearchFailure),
}

impl SearchOutcome {
    pub fn is_found(&self) -> bool {
        matches!(self, SearchOutcome::Found(_))
    }
}

/// Voronoi cells of a random net, fattened by r, then pairwise merges at the
/// worst point while the merged cell keeps diameter <= C r.
pub fn greedy_search(w: &MetricWindow, n: usize, c: f64, r: f64, seed: u64) -> SearchOutcome {
    let mut fail = SearchFailure { seed, restarts: 0, iterations: 0, best_multiplicity: 0 };
    if !(c > 1.0) || !(r > 0.0) {
        return SearchOutcome::Exhausted(fail);
    }
    let all: Vec<usize> = (0..w.len()).collect();
    if w.sentinel() > r + TOL && w.radius() <= c * r + TOL && w.diameter(&all) <= c * r + TOL {
        let cover = SetFamily { members: vec![all] };
        let report = check_entry(&cover, w, n, c, r);
        return SearchOutcome::Found(SearchSuccess { seed, spacing: 0.0, merges: 0, cover, report });
    }
    let balls: Vec<Vec<usize>> = (0..w.len()).into_par_iter().map(|x| w.ball(x, r)).collect();
    for (j, &sigma) in NET_SPACINGS.iter().enumerate() {
        if 2.0 * sigma * r + 2.0 * r > c * r + TOL {
            continue;
        }
        fail.restarts += 1;
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ j as u64);
        let cells = voronoi_cells(w, sigma * r, &mut rng);
        let (result, merges, mult) = repair(w, &cells, &balls, n, c * r);
        fail.iterations += merges;
        if fail.best_multiplicity == 0 || mult < fail.best_multiplicity {
            fail.best_multiplicity = mult;
        }
        if let Some(cover) = result {
            let report = check_entry(&cover, w, n, c, r);
            if report.pass {
                return SearchOutcome::Found(SearchSuccess { seed, spacing: sigma, merges, cover, report });
            }
        }
    }
    SearchOutcome::Exhausted(fail)
}

/// Cell index of every point for a random s-net; ties go to the earlier net point.
fn voronoi_cells(w: &MetricWindow, s: f64, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut order: Vec<usize> = (0..w.len()).collect();
    order.shuffle(rng);
    let mut covered = vec![false; w.len()];
    let mut best = vec![(f64::INFINITY, usize::MAX); w.len()];
    let mut centers = 0;
    for x in order {
        if covered[x] {
            continue;
        }
        for y in w.ball(x, s) {
            covered[y] = true;
            let d = w.dist(x, y);
            if d < best[y].0 - TOL {
                best[y] = (d, centers);
            }
        }
        centers += 1;
    }
    best.into_iter().map(|b| b.1).collect()
}

/// Returns the repaired cover (if the target multiplicity was reached), the
/// number of merges and the final multiplicity.
fn repair(w: &MetricWindow, cell: &[usize], balls: &[Vec<usize>], n: usize, max_diam: f64) -> (Option<Cover>, usize, usize) {
    let cells = cell.iter().max().map_or(0, |m| m + 1);
    let mut near: Vec<Vec<usize>> = balls
        .iter()
        .map(|b| {
            let mut v: Vec<usize> = b.iter().map(|&z| cell[z]).collect();
            v.sort_unstable();
            v.dedup();
            v
        })
        .collect();
    let mut fat: Vec<Vec<usize>> = vec![Vec::new(); cells];
    for (y, v) in near.iter().enumerate() {
        for &k in v {
            fat[k].push(y);
        }
    }
    let mut ext = Extents::new(w, &fat);
    let mut merges = 0;
    // Lazy max-heap on (count, lowest index); stale entries are skipped.
    let mut heap: BinaryHeap<(usize, Reverse<usize>)> = near.iter().enumerate().map(|(y, v)| (v.len(), Reverse(y))).collect();
    loop {
        while heap.peek().is_some_and(|&(k, Reverse(y))| near[y].len() != k) {
            heap.pop();
        }
        let (mult, worst) = heap.peek().map_or((0, 0), |&(k, Reverse(y))| (k, y));
        if mult <= n + 1 {
            let members: Vec<Vec<usize>> = fat.into_iter().filter(|m| !m.is_empty()).collect();
            return (Some(SetFamily { members }), merges, mult);
        }
        let cand = &near[worst];
        let mut choice: Option<(f64, usize, usize)> = None;
        for (ia, &a) in cand.iter().enumerate() {
            for &b in &cand[ia + 1..] {
                let d = ext.union_diameter(w, &fat, a, b);
                if d <= max_diam + TOL && choice.is_none_or(|c| d < c.0) {
                    choice = Some((d, a, b));
                }
            }
        }
        let Some((d, a, b)) = choice else {
            return (None, merges, mult);
        };
        merges += 1;
        ext.merge(a, b, d);
        let moved = std::mem::take(&mut fat[b]);
        for &y in &moved {
            let v = &mut near[y];
            for k in v.iter_mut() {
                if *k == b {
                    *k = a;
                }
            }
            v.sort_unstable();
            v.dedup();
            heap.push((v.len(), Reverse(y)));
        }
        fat[a].extend(moved);
        fat[a].sort_unstable();
        fat[a].dedup();
    }
}

/// Cell diameters under merges. In ℓ1 coordinates the diameter is the
/// largest spread of <s, x> over sign vectors s, so per-cell extremes suffice.
enum Extents {
    L1 { dim: usize, ext: Vec<Vec<(f64, f64)>> },
    Plain(Vec<f64>),
}

impl Extents {
    fn new(w: &MetricWindow, fat: &[Vec<usize>]) -> Self {
        let dim = w.coords(0).map_or(0, <[f64]>::len);
        if w.coord_norm() == Some(CoordNorm::L1) && dim > 0 && dim < 16 {
            let ext = fat
                .iter()
                .map(|m| {
                    (0..1usize << (dim - 1))
                        .map(|mask| m.iter().map(|&p| Self::proj(w, p, mask)).fold((f64::INFINITY, f64::NEG_INFINITY), |e, v| (e.0.min(v), e.1.max(v))))
                        .collect()
                })
                .collect();
            return Extents::L1 { dim, ext };
        }
        Extents::Plain(fat.iter().map(|m| w.diameter(m)).collect())
    }

    fn proj(w: &MetricWindow, p: usize, mask: usize) -> f64 {
        w.coords(p).map_or(0.0, |c| c.iter().enumerate().map(|(k, v)| if mask >> k & 1 == 1 { -v } else { *v }).sum())
    }

    fn union_diameter(&self, w: &MetricWindow, fat: &[Vec<usize>], a: usize, b: usize) -> f64 {
        match self {
            Extents::L1 { ext, .. } => ext[a].iter().zip(&ext[b]).map(|(x, y)| x.1.max(y.1) - x.0.min(y.0)).fold(0.0, f64::max),
            Extents::Plain(diam) => {
                let cross = fat[a].iter().flat_map(|&x| fat[b].iter().map(move |&y| (x, y))).map(|(x, y)| w.dist(x, y)).fold(0.0, f64::max);
                diam[a].max(diam[b]).max(cross)
            }
        }
    }

    fn merge(&mut self, a: usize, b: usize, d: f64) {
        match self {
            Extents::L1 { ext, dim } => {
                let eb = std::mem::take(&mut ext[b]);
                debug_assert!(eb.len() == 1 << (*dim - 1));
                for (x, y) in ext[a].iter_mut().zip(eb) {
                    *x = (x.0.min(y.0), x.1.max(y.1));
                }
            }
            Extents::Plain(diam) => diam[a] = d,
        }
    }
}

/// Runs the seeds in parallel; returns the first success in seed order, or
/// every failure.
pub fn search_seeds(w: &MetricWindow, n: usize, c: f64, r: f64, seeds: &[u64]) -> std::result::Result<SearchSuccess, Vec<SearchFailure>> {
    // Seeds after the earliest success so far are skipped; every seed before
    // it still runs, so the answer matches a sequential scan.
    let first = AtomicUsize::new(usize::MAX);
    let outcomes: Vec<Option<SearchOutcome>> = seeds
        .par_iter()
        .enumerate()
        .map(|(i, &s)| {
            if first.load(Ordering::Relaxed) < i {
                return None;
            }
            let o = greedy_search(w, n, c, r, s);
            if o.is_found() {
                first.fetch_min(i, Ordering::Relaxed);
            }
            Some(o)
        })
        .collect();
    let mut failures = Vec::new();
    for o in outcomes.into_iter().flatten() {
        match o {
            SearchOutcome::Found(ok) => return Ok(ok),
            SearchOutcome::Exhausted(f) => failures.push(f),
        }
    }
    Err(failures)
}

/// Certificate from greedy covers at every r of the grid.
pub fn search_certificate(w: &MetricWindow, n: usize, c: f64, r0: f64, seeds: &[u64]) -> std::result::Result<ANCertificate, (f64, Vec<SearchFailure>)> {
    let grid = r_grid(r0, w.rim(RIM_MARGIN), c);
    let mut entries = Vec::new();
    for r in grid {
        match search_seeds(w, n, c, r, seeds) {
            Ok(ok) => entries.push(CertEntry { r, members: ok.cover.to_labels(w) }),
            Err(f) => return Err((r, f)),
        }
    }
    let Some(window) = w.recipe().cloned() else {
        return Err((r0, vec![]));
    };
    Ok(ANCertificate { schema_version: SCHEMA_VERSION, n, c, r0, window, construction: "greedy".into(), metadata: BTreeMap::new(), entries })
}

// ==== products with the line ====

/// Certificate at n+1 on X×ℝ from a certificate on X.
///
/// Each point of X is assigned to the lowest member containing its closed
/// r-ball; members that meet get distinct colors; the line is cut into
/// intervals of length q g (q colors, g = 2 ceil(r) + 2) with the cuts of
/// color k offset by k g. Cells are (part × interval) fattened by r. The
/// members through a point carry distinct colors, so at most one of them
/// has a cut within r, which bounds the multiplicity by n+2.
pub fn product_certificate(cert: &ANCertificate, w_prod: &MetricWindow) -> Result<ANCertificate> {
    match w_prod.recipe() {
        Some(SpaceRecipe::ProductWithLine { base, .. }) if **base == cert.window => {}
        _ => return Err(Error::Precondition("product window must be the product of the certificate's window with the line".into())),
    }
    let wx = MetricWindow::build(&cert.window)?;
    let rep = verify(cert, &wx)?;
    if let Some(bad) = rep.first_failure() {
        return Err(Error::Verification(format!("base certificate fails at r = {}", bad.r)));
    }
    let parts: Vec<(usize, f64)> =
        (0..w_prod.len()).map(|i| product_parts(w_prod, i).ok_or_else(|| Error::Invalid(format!("{} is not a product label", w_prod.label(i)))).and_then(|(b, t)| Ok((wx.id(&b)?, t)))).collect::<Result<_>>()?;
    let mut entries = Vec::new();
    let mut colors_used = Vec::new();
    let mut slope = 0.0f64;
    for e in &cert.entries {
        let u = SetFamily::from_labels(&wx, &e.members)?;
        let (cover, q) = product_cover(&u, &wx, w_prod, &parts, e.r)?;
        slope = slope.max(cover.mesh(w_prod) / e.r);
        colors_used.push(q.to_string());
        entries.push(CertEntry { r: e.r, members: cover.to_labels(w_prod) });
    }
    let mut metadata = BTreeMap::new();
    metadata.insert("product_metric".into(), "l2".into());
    metadata.insert("base_construction".into(), cert.construction.clone());
    metadata.insert("colors".into(), colors_used.join(","));
    let out = ANCertificate {
        schema_version: SCHEMA_VERSION,
        n: cert.n + 1,
        c: slope,
        r0: cert.r0,
        window: window_recipe(w_prod)?,
        construction: "product".into(),
        metadata,
        entries,
    };
    self_verify(&out, w_prod)?;
    Ok(out)
}

fn product_cover(u: &Cover, wx: &MetricWindow, wp: &MetricWindow, parts: &[(usize, f64)], r: f64) -> Result<(Cover, usize)> {
    let depth: Vec<Vec<f64>> = u.members.par_iter().map(|m| wx.dist_to_complement(m)).collect();
    let mut part = vec![usize::MAX; wx.len()];
    for (j, (m, d)) in u.members.iter().zip(&depth).enumerate().rev() {
        for (&x, &v) in m.iter().zip(d) {
            if v > r + TOL {
                part[x] = j;
            }
        }
    }
    if let Some(x) = part.iter().position(|&p| p == usize::MAX) {
        return Err(Error::Precondition(format!("no member contains the closed r-ball at {}", wx.label(x))));
    }
    let table = u.membership(wx.len());
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); u.len()];
    for through in &table {
        for &a in through {
            for &b in through {
                if a != b {
                    adj[a as usize].push(b as usize);
                }
            }
        }
    }
    let mut color = vec![usize::MAX; u.len()];
    for j in 0..u.len() {
        let taken: Vec<usize> = adj[j].iter().map(|&b| color[b]).collect();
        color[j] = (0..).find(|k| !taken.contains(k)).unwrap_or(0);
    }
    let q = color.iter().max().map_or(1, |m| m + 1);
    let g = 2.0 * r.ceil() + 2.0;
    let period = q as f64 * g;
    let mut keys: HashMap<(usize, i64), usize> = HashMap::new();
    let cell: Vec<usize> = parts
        .iter()
        .map(|&(x, t)| {
            let j = part[x];
            let k = ((t - color[j] as f64 * g) / period).floor() as i64;
            let next = keys.len();
            *keys.entry((j, k)).or_insert(next)
        })
        .collect();
    let near: Vec<Vec<usize>> = (0..wp.len())
        .into_par_iter()
        .map(|y| {
            let mut v: Vec<usize> = wp.ball(y, r).into_iter().map(|z| cell[z]).collect();
            v.sort_unstable();
            v.dedup();
            v
        })
        .collect();
    let mut members = vec![Vec::new(); keys.len()];
    for (y, v) in near.iter().enumerate() {
        for &k in v {
            members[k].push(y);
        }
    }
    let mut order: Vec<((usize, i64), usize)> = keys.into_iter().collect();
    order.sort_unstable();
    Ok((SetFamily::new(order.into_iter().map(|(_, k)| std::mem::take(&mut members[k])).collect())?, q))
}

// ==== parabolic region ====

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParabolicConfig {
    pub r: f64,
    pub c: f64,
    pub seeds: u64,
}

impl Default for ParabolicConfig {
    fn default() -> Self {
        ParabolicConfig { r: 1.5, c: 10.0, seeds: 8 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParabolicRung {
    pub radius: f64,
    pub points: usize,
    /// Projection (x, y) -> (x, 0) onto the ray, as pairs (image, point).
    pub projection: ControlProfile,
    /// Its inverse, the inclusion of the ray read backwards.
    pub injection: ControlProfile,
    /// Largest profile value over r >= 16 divided by 2/sqrt(r).
    pub bound_ratio: f64,
    pub bound_ok: bool,
    pub nonincreasing: bool,
    pub n1: Vec<SearchOutcomeSummary>,
    pub n2: Vec<SearchOutcomeSummary>,
    pub n1_fails: bool,
    pub n2_succeeds: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcomeSummary {
    pub seed: u64,
    pub found: bool,
    pub multiplicity: usize,
    pub iterations: usize,
}

impl From<&SearchOutcome> for SearchOutcomeSummary {
    fn from(o: &SearchOutcome) -> Self {
        match o {
            SearchOutcome::Found(s) => SearchOutcomeSummary { seed: s.seed, found: true, multiplicity: s.report.multiplicity, iterations: s.merges },
            SearchOutcome::Exhausted(f) => SearchOutcomeSummary { seed: f.seed, found: false, multiplicity: f.best_multiplicity, iterations: f.iterations },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParabolicReport {
    pub schema_version: u32,
    pub config: ParabolicConfig,
    pub rungs: Vec<ParabolicRung>,
    pub stable: bool,
}

pub fn parabolic_rung(radius: f64, cfg: &ParabolicConfig) -> Result<ParabolicRung> {
    if radius < 16.0 {
        return Err(Error::Precondition("parabolic demo needs radius >= 16".into()));
    }
    let w = MetricWindow::build(&SpaceRecipe::Parabolic { radius, step: 1.0 })?;
    let mut pairs = Vec::with_capacity(w.len());
    for p in 0..w.len() {
        let c = w.coords(p).ok_or_else(|| Error::Invalid("parabolic window lost its coordinates".into()))?;
        pairs.push((w.id(&crate::space::tuple_label(&[c[0], 0.0]))?, p));
    }
    let proj = Relation { pairs };
    let grid = default_r_grid(&w);
    let projection = control_profile(&proj, &w, &grid);
    let injection = control_profile(&proj.inverse(), &w, &grid);
    let mut bound_ratio = 0.0f64;
    for prof in [&projection, &injection] {
        for s in prof.samples.iter().filter(|s| s.r >= 16.0 - TOL) {
            bound_ratio = bound_ratio.max(s.forward.max(s.backward) / (2.0 / s.r.sqrt()));
        }
    }
    let nonincreasing = [&projection, &injection].iter().all(|p| p.samples.windows(2).all(|s| s[1].forward <= s[0].forward + TOL && s[1].backward <= s[0].backward + TOL));
    let seeds: Vec<u64> = (0..cfg.seeds).collect();
    let n1: Vec<SearchOutcomeSummary> = seeds.par_iter().map(|&s| (&greedy_search(&w, 1, cfg.c, cfg.r, s)).into()).collect();
    let n2: Vec<SearchOutcomeSummary> = seeds.par_iter().map(|&s| (&greedy_search(&w, 2, cfg.c, cfg.r, s)).into()).collect();
    Ok(ParabolicRung {
        radius,
        points: w.len(),
        projection,
        injection,
        bound_ratio,
        bound_ok: bound_ratio <= 1.0 + TOL,
        nonincreasing,
        n1_fails: n1.iter().all(|o| !o.found),
        n2_succeeds: n2.iter().any(|o| o.found),
        n1,
        n2,
    })
}

/// Rungs at radius, 2 radius and 4 radius.
pub fn parabolic_demo(radius: f64, cfg: &ParabolicConfig) -> Result<ParabolicReport> {
    let rungs = [1.0, 2.0, 4.0].iter().map(|k| parabolic_rung(k * radius, cfg)).collect::<Result<Vec<_>>>()?;
    let stable = rungs.iter().all(|r| r.bound_ok && r.nonincreasing && r.n1_fails && r.n2_succeeds);
    Ok(ParabolicReport { schema_version: SCHEMA_VERSION, config: *cfg, rungs, stable })
}

// ==== slices of X×ℝ ====

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SliceMap {
    pub t: f64,
    /// Base points x whose slice point (x, round(||x|| tan t)) lies in the window.
    pub domain: Vec<String>,
    pub image: Vec<String>,
    pub lambda: f64,
    pub c: f64,
    pub qi: QiReport,
}

/// x -> nearest window point to (x, ||x|| tan t), checked as a
/// quasi-isometry onto the slice with lambda = sqrt(1 + tan^2 t), C = 1.
pub fn cone_slice_map(w_prod: &MetricWindow, t: f64) -> Result<SliceMap> {
    if !(0.0..=std::f64::consts::FRAC_PI_4 + TOL).contains(&t) {
        return Err(Error::Precondition(format!("slice angle {t} is outside [0, pi/4]")));
    }
    let Some(SpaceRecipe::ProductWithLine { base, .. }) = w_prod.recipe() else {
        return Err(Error::Precondition("slice maps need a product-with-line window".into()));
    };
    let wb = MetricWindow::build(base)?;
    let tan = t.tan();
    let mut dom = Vec::new();
    let mut img = Vec::new();
    for x in 0..wb.len() {
        let s = (wb.norm(x) * tan).round();
        if let Ok(y) = w_prod.id(&format!("{};{}", wb.label(x), fmt_num(s))) {
            dom.push(x);
            img.push(y);
        }
    }
    let wx = wb.restrict(&dom)?;
    let mut slice = img.clone();
    slice.sort_unstable();
    slice.dedup();
    let ws = w_prod.restrict(&slice)?;
    let f: Vec<usize> = img.iter().map(|&y| slice.binary_search(&y).unwrap_or(0)).collect();
    let lambda = (1.0 + tan * tan).sqrt();
    let qi = qi_check(&f, &wx, &ws, lambda, 1.0, 0.0, None)?;
    Ok(SliceMap { t, domain: wx.labels().to_vec(), image: img.iter().map(|&y| w_prod.label(y).to_string()).collect(), lambda, c: 1.0, qi })
}

/// Product-window indices of the slice at angle t.
pub fn slice_points(w_prod: &MetricWindow, t: f64) -> Result<Vec<usize>> {
    let m = cone_slice_map(w_prod, t)?;
    let mut v = m.image.iter().map(|l| w_prod.id(l)).collect::<Result<Vec<_>>>()?;
    v.sort_unstable();
    Ok(v)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SliceSeparation {
    /// min over the set of |s - ||y|| tan t| / ||(y, s)||.
    pub c: f64,
    pub argmin: String,
}

/// Separation of `set` from the slice at angle t, relative to the norm.
pub fn slice_separation(w_prod: &MetricWindow, t: f64, set: &[usize]) -> Result<SliceSeparation> {
    let wb = match w_prod.recipe() {
        Some(SpaceRecipe::ProductWithLine { base, .. }) => MetricWindow::build(base)?,
        _ => return Err(Error::Precondition("slice separation needs a product-with-line window".into())),
    };
    let mut best = (f64::INFINITY, String::new());
    for &p in set {
        let (b, s) = product_parts(w_prod, p).ok_or_else(|| Error::Invalid(format!("{} is not a product label", w_prod.label(p))))?;
        let nrm = w_prod.norm(p);
        if nrm <= TOL {
            continue;
        }
        let v = (s - wb.norm_of(&b)? * t.tan()).abs() / nrm;
        if v < best.0 {
            best = (v, w_prod.label(p).to_string());
        }
    }
    Ok(SliceSeparation { c: best.0, argmin: best.1 })
}

/// Divergence witness between the slices at angles t1 and t2.
pub fn slice_divergence(w_prod: &MetricWindow, t1: f64, t2: f64, cfg: &WitnessConfig) -> Result<crate::covers::LinearityWitness> {
    divergence_witness(&[slice_points(w_prod, t1)?, slice_points(w_prod, t2)?], w_prod, cfg)
}
