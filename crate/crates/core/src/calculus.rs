//! Star merge of a fine cover into a coarse one over a key set, and the
//! telescope that chains star merges along a geometric ladder of scales.

use std::collections::HashSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covers::{linearity_witness, Cover, SetFamily, WitnessConfig};
use crate::error::{Error, Result};
use crate::space::{MetricWindow, TOL};

/// Where a merged member came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "from", content = "index")]
pub enum Origin {
    /// A fine member contained in the key set, kept as is.
    Kept(usize),
    /// A coarse member trimmed off the key set and grown by its fine members.
    Merged(usize),
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergeChecks {
    pub covers: bool,
    pub multiplicity: bool,
    pub refines_coarse: bool,
    pub fine_refines: bool,
    pub inside_key_kept: bool,
    pub off_key_survive: bool,
}

impl MergeChecks {
    pub fn all(&self) -> bool {
        self.covers && self.multiplicity && self.refines_coarse && self.fine_refines && self.inside_key_kept && self.off_key_survive
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MergeResult {
    pub merged: Cover,
    pub origin: Vec<Origin>,
    /// Lowest-index coarse member containing each fine member.
    pub choice: Vec<usize>,
    pub checks: MergeChecks,
}

/// Merges the fine cover `u` into the coarse cover `v` over the key set `k`.
///
/// Fine members inside `k` are kept; every coarse member reaching outside
/// `k` is cut down to its part outside `k` and absorbs the fine members
/// that reach outside `k` and were assigned to it.
pub fn star_merge(w: &MetricWindow, u: &Cover, v: &Cover, k: &[usize]) -> Result<MergeResult> {
    let n = w.len();
    let choice = u.refinement_map(v, n).map_err(|i| {
        let first: Vec<&str> = u.members[i].iter().take(4).map(|&p| w.label(p)).collect();
        Error::Precondition(format!("fine member {i} (starting {}) lies in no coarse member", first.join(",")))
    })?;
    let mut in_k = vec![false; n];
    for &p in k {
        in_k[p] = true;
    }
    let inside = |m: &[usize]| m.iter().all(|&p| in_k[p]);

    let mut members = Vec::new();
    let mut origin = Vec::new();
    let mut grown: Vec<Vec<usize>> = vec![Vec::new(); v.len()];
    for (i, m) in u.members.iter().enumerate() {
        if inside(m) {
            members.push(m.clone());
            origin.push(Origin::Kept(i));
        } else {
            grown[choice[i]].extend_from_slice(m);
        }
    }
    for (j, m) in v.members.iter().enumerate() {
        if inside(m) {
            continue;
        }
        let mut vp: Vec<usize> = m.iter().copied().filter(|&p| !in_k[p]).collect();
        vp.append(&mut grown[j]);
        vp.sort_unstable();
        vp.dedup();
        members.push(vp);
        origin.push(Origin::Merged(j));
    }
    let merged = SetFamily { members };
    let checks = check_merge(n, u, v, &in_k, &merged);
    Ok(MergeResult { merged, origin, choice, checks })
}

fn check_merge(n: usize, u: &Cover, v: &Cover, in_k: &[bool], w: &Cover) -> MergeChecks {
    let u_set: HashSet<&Vec<usize>> = u.members.iter().collect();
    let w_set: HashSet<&Vec<usize>> = w.members.iter().collect();
    let bound = u.multiplicity(n).max(v.multiplicity(n));
    MergeChecks {
        covers: w.uncovered(n).is_none(),
        multiplicity: w.multiplicity(n) <= bound,
        refines_coarse: w.refines(v, n),
        fine_refines: u.refines(w, n),
        inside_key_kept: w.members.iter().filter(|m| m.iter().all(|&p| in_k[p])).all(|m| u_set.contains(m)),
        off_key_survive: v.members.iter().filter(|m| m.iter().all(|&p| !in_k[p])).all(|m| w_set.contains(m)),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageStats {
    pub index: usize,
    pub r: f64,
    pub members: usize,
    pub mesh: f64,
    pub multiplicity: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TelescopeChecks {
    pub grouped_refines_target: bool,
    pub grouped_multiplicity: bool,
    /// L(x) > slope * ||x|| on the asserted annulus.
    pub lebesgue_slope: bool,
    pub membership_persistence: bool,
    pub backward_propagation: bool,
    pub stages_refine_limit: bool,
    pub limit_multiplicity: bool,
}

impl TelescopeChecks {
    pub fn all(&self) -> bool {
        self.grouped_refines_target
            && self.grouped_multiplicity
            && self.lebesgue_slope
            && self.membership_persistence
            && self.backward_propagation
            && self.stages_refine_limit
            && self.limit_multiplicity
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TelescopeParams {
    pub c: f64,
    pub d: f64,
    pub r0: f64,
    /// r_1, r_2, ... up to r_{T+2}.
    pub ladder: Vec<f64>,
    pub stop: usize,
    /// n such that every ladder cover has multiplicity <= n + 1.
    pub n: usize,
    pub rim: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TelescopeResult {
    pub params: TelescopeParams,
    pub stages: Vec<Cover>,
    pub stage_stats: Vec<StageStats>,
    pub liminf_cover: Cover,
    pub restricted: Cover,
    pub grouped: Cover,
    /// Target member index behind each grouped member.
    pub grouped_target: Vec<usize>,
    pub slope_bound: f64,
    /// Annulus on which the slope bound is asserted.
    pub annulus: (f64, f64),
    /// Beyond 3 r_{T+2} the finite construction guarantees nothing.
    pub guaranteed_up_to: f64,
    /// min of L(x) / ||x|| over the asserted annulus.
    pub measured_slope: f64,
    /// Worst point of the slope check, as (label, norm, L).
    pub worst: Option<(String, f64, f64)>,
    /// The ladder supplied fewer covers than the window affords.
    pub partial: bool,
    pub checks: TelescopeChecks,
}

/// r_i = (c/d)^i r0 for i = 1..=count.
pub fn scale_ladder(c: f64, d: f64, r0: f64, count: usize) -> Vec<f64> {
    (1..=count).map(|i| (c / d).powi(i as i32) * r0).collect()
}

/// Largest i with 2 r_{i+2} <= rim, or 0 when even i = 1 does not fit.
pub fn stop_index(c: f64, d: f64, r0: f64, rim: f64) -> usize {
    let mut t = 0;
    while 2.0 * (c / d).powi(t as i32 + 3) * r0 <= rim + TOL {
        t += 1;
    }
    t
}

/// Chains star merges along `ladder` (covers at scales r_1, r_2, ...) and
/// groups the result by the target cover.
pub fn telescope(w: &MetricWindow, target: &Cover, ladder: &[Cover], c: f64, d: f64, r0: f64, margin: f64) -> Result<TelescopeResult> {
    if !(c > 1.0 && 1.0 > d && d > 0.0 && r0 > 0.0) {
        return Err(Error::Precondition(format!("need c > 1 > d > 0 and r0 > 0, got c={c} d={d} r0={r0}")));
    }
    target.ensure_cover(w)?;
    let n_pts = w.len();
    let rim = w.rim(margin);
    let affordable = stop_index(c, d, r0, rim);
    let stop = affordable.min(ladder.len());
    if stop == 0 {
        return Err(Error::Precondition(format!("window rim {rim} admits no stage for r0={r0} (need 2 r_3 <= rim)")));
    }
    let r = scale_ladder(c, d, r0, stop + 2);

    // Preconditions on every used ladder cover.
    let mut n_plus_1 = 0;
    for (i, u) in ladder[..stop].iter().enumerate() {
        u.ensure_cover(w).map_err(|e| Error::Precondition(format!("stage {}: {e}", i + 1)))?;
        let (mesh, mult, leb) = (u.mesh(w), u.multiplicity(n_pts), u.lebesgue_number(w));
        if !(mesh < c * r[i]) || !(leb > r[i]) {
            return Err(Error::Precondition(format!(
                "stage {}: ladder cover has mesh {mesh} (need < {}) and Lebesgue number {leb} (need > {})",
                i + 1,
                c * r[i],
                r[i]
            )));
        }
        n_plus_1 = n_plus_1.max(mult);
    }
    let target_fn = target.lebesgue_function(w);
    let wit = linearity_witness(&target_fn, w, &WitnessConfig { margin, ..Default::default() });
    if !wit.valid || wit.c < d {
        return Err(Error::Precondition(format!("target Lebesgue slope {} is not >= d = {d}", wit.c)));
    }

    let ball = |rad: f64| -> Vec<usize> { (0..n_pts).filter(|&x| w.norm(x) <= rad + TOL).collect() };
    let mut stages: Vec<Cover> = vec![ladder[0].clone()];
    for i in 1..stop {
        // V_{i+1} = V_i merged into U_{i+1} over the closed ball of radius 2 r_{i+2}.
        let key = ball(2.0 * r[i + 1]);
        let res = star_merge(w, &stages[i - 1], &ladder[i], &key).map_err(|e| Error::Precondition(format!("stage {}: {e}", i + 1)))?;
        if !res.checks.all() {
            return Err(Error::Invalid(format!("stage {}: star merge properties failed: {:?}", i + 1, res.checks)));
        }
        stages.push(res.merged);
    }
    let stage_stats = stages
        .iter()
        .enumerate()
        .map(|(i, s)| StageStats { index: i + 1, r: r[i], members: s.len(), mesh: s.mesh(w), multiplicity: s.multiplicity(n_pts) })
        .collect();

    // With finitely many stages the liminf is the last stage.
    let limit = stages[stop - 1].clone();
    let outside_r2: Vec<bool> = (0..n_pts).map(|x| w.norm(x) > r[1] + TOL).collect();
    let restricted = SetFamily { members: limit.members.iter().filter(|m| m.iter().any(|&p| outside_r2[p])).cloned().collect() };
    let to_target = restricted.refinement_map(target, n_pts);
    let mut checks = TelescopeChecks { grouped_refines_target: to_target.is_ok(), ..Default::default() };
    let to_target = to_target.unwrap_or_default();
    let mut groups: Vec<Option<Vec<usize>>> = vec![None; target.len()];
    for (m, &t) in restricted.members.iter().zip(&to_target) {
        groups[t].get_or_insert_with(Vec::new).extend_from_slice(m);
    }
    let mut grouped = SetFamily { members: Vec::new() };
    let mut grouped_target = Vec::new();
    for (t, g) in groups.into_iter().enumerate() {
        if let Some(mut g) = g {
            g.sort_unstable();
            g.dedup();
            grouped.members.push(g);
            grouped_target.push(t);
        }
    }
    checks.grouped_refines_target &= grouped.refines(target, n_pts);
    checks.grouped_multiplicity = grouped.multiplicity(n_pts) <= n_plus_1;
    checks.limit_multiplicity = limit.multiplicity(n_pts) <= n_plus_1;

    let slope_bound = d * d / (3.0 * c * c);
    let guaranteed_up_to = 3.0 * r[stop + 1];
    let annulus = (3.0 * r[1], rim);
    let lf = grouped.lebesgue_function(w);
    let mut measured_slope = f64::INFINITY;
    let mut worst = None;
    checks.lebesgue_slope = true;
    for x in 0..n_pts {
        let nx = w.norm(x);
        if nx < annulus.0 - TOL || nx > annulus.1 + TOL || nx <= TOL {
            continue;
        }
        let s = lf[x] / nx;
        if s < measured_slope {
            measured_slope = s;
            worst = Some((w.label(x).to_string(), nx, lf[x]));
        }
        if !(lf[x] > slope_bound * nx) {
            checks.lebesgue_slope = false;
        }
    }

    let sets: Vec<HashSet<&Vec<usize>>> = stages.iter().map(|s| s.members.iter().collect()).collect();
    let meets = |m: &[usize], rad: f64| m.iter().any(|&p| w.norm(p) <= rad + TOL);
    // Stage i (1-based) members meeting the r_{i+2} ball persist into stage i+1.
    checks.membership_persistence = (1..stop).all(|i| stages[i - 1].members.iter().filter(|m| meets(m, r[i + 1])).all(|m| sets[i].contains(m)));
    // Limit members meeting the r_{i+1} ball were already present at stage i-1.
    checks.backward_propagation = (2..=stop).all(|i| limit.members.iter().filter(|m| meets(m, r[i])).all(|m| sets[i - 2].contains(m)));
    checks.stages_refine_limit = stages.par_iter().all(|s| s.refines(&limit, n_pts));

    Ok(TelescopeResult {
        params: TelescopeParams { c, d, r0, ladder: r, stop, n: n_plus_1.saturating_sub(1), rim },
        stages,
        stage_stats,
        liminf_cover: limit,
        restricted,
        grouped,
        grouped_target,
        slope_bound,
        annulus,
        guaranteed_up_to,
        measured_slope,
        worst,
        partial: stop < affordable,
        checks,
    })
}

/// Cover of a ℤ window by integer intervals of diameter < c r whose
/// r-deep cores tile the line, so the Lebesgue number exceeds r.
///
/// Fails when no integer diameter below `c r` leaves a nonempty core.
pub fn line_interval_cover(w: &MetricWindow, r: f64, c: f64) -> Result<Cover> {
    if w.lattice_dim() != Some(1) {
        return Err(Error::Precondition("interval covers need a ℤ window".into()));
    }
    let diam = ((c * r).ceil() - 1.0) as i64;
    let depth = r.floor() as i64;
    let step = diam - 2 * depth + 1;
    if step < 1 {
        return Err(Error::Precondition(format!("no interval of diameter < {} has a core of depth > {r}", c * r)));
    }
    let at = |p: usize| w.coords(p).expect("lattice windows carry coordinates")[0] as i64;
    let lo = (0..w.len()).map(at).min().unwrap_or(0);
    let hi = (0..w.len()).map(at).max().unwrap_or(0);
    let mut members = Vec::new();
    let mut core = lo;
    while core <= hi {
        let (a, b) = (core - depth, core - depth + diam);
        let m: Vec<usize> = (0..w.len()).filter(|&p| (a..=b).contains(&at(p))).collect();
        members.push(m);
        core += step;
    }
    SetFamily::new(members)
}

/// {x <= overlap} and {x >= -overlap} on a ℤ window.
pub fn half_line_cover(w: &MetricWindow, overlap: i64) -> Result<Cover> {
    if w.lattice_dim() != Some(1) {
        return Err(Error::Precondition("half-line covers need a ℤ window".into()));
    }
    let at = |p: usize| w.coords(p).expect("lattice windows carry coordinates")[0] as i64;
    SetFamily::new(vec![(0..w.len()).filter(|&p| at(p) <= overlap).collect(), (0..w.len()).filter(|&p| at(p) >= -overlap).collect()])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::{CoordNorm, Group, SpaceRecipe};

    fn line(n: usize) -> MetricWindow {
        let pts: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64]).collect();
        MetricWindow::from_coords((0..n).map(|i| i.to_string()).collect(), pts, CoordNorm::L1, 0).unwrap()
    }

    fn zline(r: f64) -> MetricWindow {
        MetricWindow::build(&SpaceRecipe::Cayley { group: Group::Lattice { dim: 1, generators: None }, radius: r }).unwrap()
    }

    fn pairs() -> Cover {
        SetFamily::new((0..5).map(|i| vec![2 * i, 2 * i + 1]).collect()).unwrap()
    }

    fn halves() -> Cover {
        SetFamily::new(vec![(0..6).collect(), (6..10).collect()]).unwrap()
    }

    #[test]
    fn full_key_returns_fine_cover() {
        let w = line(10);
        let res = star_merge(&w, &pairs(), &halves(), &(0..10).collect::<Vec<_>>()).unwrap();
        assert_eq!(res.merged, pairs());
        assert!(res.checks.all());
    }

    #[test]
    fn empty_key_returns_coarse_cover() {
        let w = line(10);
        let res = star_merge(&w, &pairs(), &halves(), &[]).unwrap();
        assert_eq!(res.merged, halves());
        assert!(res.checks.all());
    }

    #[test]
    fn line_instance_matches_hand_evaluation() {
        // Fine pairs, overlapping coarse halves, key {0..4}.
        let w = line(10);
        let v = SetFamily::new(vec![(0..6).collect(), (4..10).collect()]).unwrap();
        let res = star_merge(&w, &pairs(), &v, &[0, 1, 2, 3, 4]).unwrap();
        // Kept: {0,1},{2,3}. {4,5} -> V_0; {6,7},{8,9} -> V_1.
        // V_0' = {5} ∪ {4,5} = {4,5}; V_1' = {5..9} ∪ {6..9} = {5..9}.
        assert_eq!(res.merged.members, vec![vec![0, 1], vec![2, 3], vec![4, 5], vec![5, 6, 7, 8, 9]]);
        assert_eq!(res.origin, vec![Origin::Kept(0), Origin::Kept(1), Origin::Merged(0), Origin::Merged(1)]);
        assert_eq!(res.choice, vec![0, 0, 0, 1, 1]);
        assert!(res.checks.all());

        let split = SetFamily::new(vec![(0..5).collect(), (5..10).collect()]).unwrap();
        let res = star_merge(&w, &pairs(), &split, &[0, 1, 2, 3, 4]).unwrap_err();
        assert!(res.to_string().contains("fine member 2"));
    }

    #[test]
    fn self_merge_is_mutually_refining() {
        let w = line(10);
        let u = SetFamily::new(vec![(0..4).collect(), (3..8).collect(), (7..10).collect()]).unwrap();
        let res = star_merge(&w, &u, &u, &[2, 3, 4]).unwrap();
        assert!(res.merged.refines(&u, 10) && u.refines(&res.merged, 10));
    }

    #[test]
    fn interval_covers_meet_scale_requirements() {
        let w = zline(300.0);
        for (r, c) in [(5.88, 2.0), (23.52, 2.0), (3.0, 4.5), (7.5, 3.0)] {
            let u = line_interval_cover(&w, r, c).unwrap();
            assert!(u.uncovered(w.len()).is_none());
            assert!(u.mesh(&w) < c * r);
            assert!(u.lebesgue_number(&w) > r);
        }
        assert!(line_interval_cover(&w, 4.0, 2.0).is_err());
    }

    #[test]
    fn telescope_on_small_line() {
        let w = zline(800.0);
        let (c, d, r0) = (4.5, 0.5, 0.04);
        let t = stop_index(c, d, r0, w.rim(0.1));
        let ladder: Vec<Cover> = scale_ladder(c, d, r0, t).iter().map(|&r| line_interval_cover(&w, r, c).unwrap()).collect();
        let res = telescope(&w, &half_line_cover(&w, 3).unwrap(), &ladder, c, d, r0, 0.1).unwrap();
        assert_eq!(res.params.stop, t);
        assert!(res.checks.all(), "{:?}", res.checks);
        assert!(res.measured_slope > res.slope_bound);
    }

    #[test]
    fn single_stage_telescope() {
        let w = zline(200.0);
        let (c, d) = (4.5, 0.5);
        // 2 r_3 = 2 * 729 r0 must fit under the rim of 180 while 2 r_4 does not.
        let r0 = 0.12;
        assert_eq!(stop_index(c, d, r0, w.rim(0.1)), 1);
        let ladder = vec![line_interval_cover(&w, 9.0 * r0, c).unwrap()];
        let res = telescope(&w, &half_line_cover(&w, 2).unwrap(), &ladder, c, d, r0, 0.1).unwrap();
        assert_eq!(res.stages.len(), 1);
        assert_eq!(res.liminf_cover, ladder[0]);
        assert!(res.checks.all());
    }

    #[test]
    fn telescope_rejects_bad_stage() {
        let w = zline(800.0);
        let (c, d, r0) = (4.5, 0.5, 0.04);
        let t = stop_index(c, d, r0, w.rim(0.1));
        let mut ladder: Vec<Cover> = scale_ladder(c, d, r0, t).iter().map(|&r| line_interval_cover(&w, r, c).unwrap()).collect();
        ladder[1] = SetFamily::new((0..w.len()).map(|p| vec![p]).collect()).unwrap();
        let err = telescope(&w, &half_line_cover(&w, 3).unwrap(), &ladder, c, d, r0, 0.1).unwrap_err();
        assert!(err.to_string().contains("stage 2"));
    }
}
