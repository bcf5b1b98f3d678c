//! Set families over a window: mesh, multiplicity, Lebesgue profile,
//! disjointness, fattening and linearity witnesses.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::space::{MetricWindow, TOL};

/// Indexed family of point subsets; members are sorted point indices.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SetFamily {
    pub members: Vec<Vec<usize>>,
}

/// A family whose union is the whole window.
pub type Cover = SetFamily;

impl SetFamily {
    /// Sorts and dedups every member; rejects empty members.
    pub fn new(members: Vec<Vec<usize>>) -> Result<Self> {
        let mut members = members;
        for (i, m) in members.iter_mut().enumerate() {
            m.sort_unstable();
            m.dedup();
            if m.is_empty() {
                return Err(Error::Invalid(format!("member {i} is empty")));
            }
        }
        Ok(SetFamily { members })
    }

    /// Family from label lists.
    pub fn from_labels(w: &MetricWindow, members: &[Vec<String>]) -> Result<Self> {
        let ids = members.iter().map(|m| m.iter().map(|l| w.id(l)).collect::<Result<Vec<_>>>()).collect::<Result<Vec<_>>>()?;
        Self::new(ids)
    }

    pub fn to_labels(&self, w: &MetricWindow) -> Vec<Vec<String>> {
        self.members.iter().map(|m| m.iter().map(|&p| w.label(p).to_string()).collect()).collect()
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// For every point, the indices of the members containing it.
    pub fn membership(&self, n: usize) -> Vec<Vec<u32>> {
        let mut out = vec![Vec::new(); n];
        for (i, m) in self.members.iter().enumerate() {
            for &p in m {
                out[p].push(i as u32);
            }
        }
        out
    }

    /// First point not covered by any member.
    pub fn uncovered(&self, n: usize) -> Option<usize> {
        let mut hit = vec![false; n];
        for m in &self.members {
            for &p in m {
                hit[p] = true;
            }
        }
        hit.iter().position(|h| !h)
    }

    pub fn ensure_cover(&self, w: &MetricWindow) -> Result<()> {
        match self.uncovered(w.len()) {
            Some(p) => Err(Error::Invalid(format!("point {} is not covered", w.label(p)))),
            None => Ok(()),
        }
    }

    pub fn mesh(&self, w: &MetricWindow) -> f64 {
        self.members.par_iter().map(|m| w.diameter(m)).reduce(|| 0.0, f64::max)
    }

    pub fn multiplicity(&self, n: usize) -> usize {
        self.membership(n).iter().map(Vec::len).max().unwrap_or(0)
    }

    /// L(x) = max over members V containing x of d(x, X \ V); 0 off the union.
    pub fn lebesgue_function(&self, w: &MetricWindow) -> Vec<f64> {
        let per: Vec<Vec<f64>> = self.members.par_iter().map(|m| w.dist_to_complement(m)).collect();
        let mut out = vec![0.0f64; w.len()];
        for (m, d) in self.members.iter().zip(per) {
            for (&p, v) in m.iter().zip(d) {
                out[p] = out[p].max(v);
            }
        }
        out
    }

    /// Minimum of the Lebesgue function over the window.
    pub fn lebesgue_number(&self, w: &MetricWindow) -> f64 {
        self.lebesgue_function(w).into_iter().fold(f64::INFINITY, f64::min)
    }

    /// Whether every member is contained in some member of `other`; the
    /// lowest such index per member, or the first member that fits nowhere.
    pub fn refinement_map(&self, other: &SetFamily, n: usize) -> std::result::Result<Vec<usize>, usize> {
        let table = other.membership(n);
        self.members
            .iter()
            .enumerate()
            .map(|(i, m)| {
                let mut cand: Vec<u32> = table[m[0]].clone();
                for &p in &m[1..] {
                    cand.retain(|c| table[p].contains(c));
                    if cand.is_empty() {
                        break;
                    }
                }
                cand.iter().min().map(|&c| c as usize).ok_or(i)
            })
            .collect()
    }

    pub fn refines(&self, other: &SetFamily, n: usize) -> bool {
        self.refinement_map(other, n).is_ok()
    }

    /// Distinct members all lie at set distance > r.
    pub fn is_r_disjoint(&self, w: &MetricWindow, r: f64) -> bool {
        self.disjointness_violation(w, r).is_none()
    }

    /// A pair of points from distinct members within distance r.
    pub fn disjointness_violation(&self, w: &MetricWindow, r: f64) -> Option<(usize, usize)> {
        let table = self.membership(w.len());
        if table.iter().any(|t| t.len() > 1) {
            let p = table.iter().position(|t| t.len() > 1).unwrap_or(0);
            return Some((p, p));
        }
        self.members.par_iter().enumerate().find_map_any(|(i, m)| {
            for &x in m {
                for y in w.ball(x, r) {
                    if table[y].iter().any(|&j| j as usize != i) && w.dist(x, y) <= r + TOL {
                        return Some((x, y));
                    }
                }
            }
            None
        })
    }

    /// Each member replaced by its closed s-neighborhood.
    pub fn fatten(&self, w: &MetricWindow, s: f64) -> SetFamily {
        let members = self
            .members
            .par_iter()
            .map(|m| {
                if w.has_exact_graph() {
                    let d = w.dist_to_set_all(m);
                    (0..w.len()).filter(|&y| d[y] <= s + TOL).collect()
                } else {
                    let mut hit = vec![false; w.len()];
                    for &x in m {
                        for y in w.ball(x, s) {
                            hit[y] = true;
                        }
                    }
                    (0..w.len()).filter(|&y| hit[y]).collect()
                }
            })
            .collect();
        SetFamily { members }
    }

    /// Union of several families, in order.
    pub fn union(families: &[SetFamily]) -> SetFamily {
        SetFamily { members: families.iter().flat_map(|f| f.members.iter().cloned()).collect() }
    }
}

/// Mesh, multiplicity and Lebesgue number in one pass.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverStats {
    pub members: usize,
    pub mesh: f64,
    pub multiplicity: usize,
    pub lebesgue: f64,
    /// (annulus lower norm, min Lebesgue value on the annulus).
    pub profile: Vec<(f64, f64)>,
}

pub fn cover_stats(c: &Cover, w: &MetricWindow, bins: usize) -> CoverStats {
    let lf = c.lebesgue_function(w);
    let lebesgue = lf.iter().cloned().fold(f64::INFINITY, f64::min);
    let bins = bins.max(1);
    let width = (w.radius() / bins as f64).max(TOL);
    let mut profile = vec![(0.0, f64::INFINITY); bins];
    for (k, p) in profile.iter_mut().enumerate() {
        p.0 = k as f64 * width;
    }
    for (x, v) in lf.iter().enumerate() {
        let k = ((w.norm(x) / width) as usize).min(bins - 1);
        profile[k].1 = profile[k].1.min(*v);
    }
    profile.retain(|p| p.1.is_finite());
    CoverStats { members: c.len(), mesh: c.mesh(w), multiplicity: c.multiplicity(w.len()), lebesgue, profile }
}

/// Certifies f(x) >= c ||x|| on the annulus [r0, rim].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearityWitness {
    pub c: f64,
    pub r0: f64,
    pub rim: f64,
    pub valid: bool,
    /// (r0 candidate, c(r0)) for every candidate with a nonempty annulus.
    pub margin_profile: Vec<(f64, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WitnessConfig {
    pub threshold: f64,
    pub margin: f64,
    pub steps: usize,
}

impl Default for WitnessConfig {
    fn default() -> Self {
        WitnessConfig { threshold: 1e-3, margin: 0.1, steps: 16 }
    }
}

/// Geometric grid of `steps` values from `lo` to `hi` inclusive.
pub fn geometric_grid(lo: f64, hi: f64, steps: usize) -> Vec<f64> {
    if !(lo > 0.0) || hi <= lo || steps < 2 {
        return vec![lo];
    }
    let q = (hi / lo).powf(1.0 / (steps - 1) as f64);
    (0..steps).map(|k| if k + 1 == steps { hi } else { lo * q.powi(k as i32) }).collect()
}

pub fn smallest_positive_norm(w: &MetricWindow) -> Option<f64> {
    w.norms().iter().cloned().filter(|&v| v > TOL).fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.min(v))))
}

pub fn linearity_witness(f: &[f64], w: &MetricWindow, cfg: &WitnessConfig) -> LinearityWitness {
    let rim = w.rim(cfg.margin);
    let invalid = |reason: &str| LinearityWitness { c: 0.0, r0: 0.0, rim, valid: false, margin_profile: vec![], reason: Some(reason.into()) };
    let Some(lo) = smallest_positive_norm(w) else {
        return invalid("window has no point of positive norm");
    };
    // Sort points by norm once; c(r0) is a suffix minimum restricted to <= rim.
    let mut order: Vec<usize> = (0..w.len()).filter(|&x| w.norm(x) > TOL && w.norm(x) <= rim + TOL).collect();
    order.sort_by(|&a, &b| w.norm(a).total_cmp(&w.norm(b)));
    let mut suffix = vec![f64::INFINITY; order.len() + 1];
    for k in (0..order.len()).rev() {
        let x = order[k];
        suffix[k] = suffix[k + 1].min(f[x] / w.norm(x));
    }
    let mut profile = Vec::new();
    for r0 in geometric_grid(lo, w.radius() / 2.0, cfg.steps) {
        let k = order.partition_point(|&x| w.norm(x) < r0 - TOL);
        if k < order.len() {
            profile.push((r0, suffix[k]));
        }
    }
    let Some(&(r0, c)) = profile.iter().max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.total_cmp(&a.0))) else {
        return invalid("annulus [r0, rim] is empty for every candidate r0");
    };
    let valid = c > cfg.threshold;
    LinearityWitness { c, r0, rim, valid, margin_profile: profile, reason: (!valid).then(|| format!("best slope {c:.3e} is below threshold {:.1e}", cfg.threshold)) }
}

/// Witness recomputed at growing radii; a slope that decays along the
/// ladder marks a sublinear function even when each rung passes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadiusLadder {
    pub rungs: Vec<(f64, LinearityWitness)>,
    pub decaying: bool,
}

pub fn radius_ladder<F>(radii: &[f64], cfg: &WitnessConfig, mut eval: F) -> Result<RadiusLadder>
where
    F: FnMut(f64) -> Result<(MetricWindow, Vec<f64>)>,
{
    let mut rungs = Vec::new();
    for &r in radii {
        let (w, f) = eval(r)?;
        rungs.push((r, linearity_witness(&f, &w, cfg)));
    }
    // A linear function keeps its slope; a drop of more than 20% per
    // doubling of the radius is reported as decay.
    let decaying = rungs.windows(2).any(|p| p[1].1.c < 0.8 * p[0].1.c) || rungs.iter().any(|r| !r.1.valid);
    Ok(RadiusLadder { rungs, decaying })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::{CoordNorm, Group, SpaceRecipe};
    use rand::{Rng, SeedableRng};

    fn line(n: usize) -> MetricWindow {
        let pts: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64]).collect();
        MetricWindow::from_coords((0..n).map(|i| i.to_string()).collect(), pts, CoordNorm::L1, 0).unwrap()
    }

    fn two_halves() -> Cover {
        SetFamily::new(vec![(0..=5).collect(), (4..=9).collect()]).unwrap()
    }

    #[test]
    fn line_cover_statistics() {
        let w = line(10);
        let c = two_halves();
        assert_eq!(c.mesh(&w), 5.0);
        assert_eq!(c.multiplicity(w.len()), 2);
        let l = c.lebesgue_function(&w);
        assert_eq!(l[0], 6.0);
        assert_eq!(l[4], 2.0);
        assert_eq!(c.lebesgue_number(&w), 2.0);
        let singles = SetFamily::new((0..10).map(|i| vec![i]).collect()).unwrap();
        assert_eq!(singles.mesh(&w), 0.0);
        assert_eq!(singles.multiplicity(10), 1);
    }

    #[test]
    fn whole_window_member_uses_sentinel() {
        let w = line(10);
        let c = SetFamily::new(vec![(0..10).collect()]).unwrap();
        assert!(c.lebesgue_function(&w).iter().all(|&v| v == w.sentinel()));
    }

    #[test]
    fn disjointness_and_fattening() {
        let w = line(10);
        let f = SetFamily::new(vec![vec![0], vec![5]]).unwrap();
        assert!(f.is_r_disjoint(&w, 4.0));
        assert!(!f.is_r_disjoint(&w, 5.0));
        assert!(SetFamily::new(vec![vec![3]]).unwrap().is_r_disjoint(&w, 100.0));
        let g = SetFamily::new(vec![vec![0], vec![9]]).unwrap();
        assert_eq!(g.fatten(&w, 2.0).members, vec![vec![0, 1, 2], vec![7, 8, 9]]);
        assert_eq!(g.fatten(&w, 0.0), g);
    }

    #[test]
    fn refinement_map_picks_lowest_index() {
        let v = SetFamily::new(vec![(0..=5).collect(), (0..=9).collect()]).unwrap();
        let u = SetFamily::new(vec![vec![1, 2], vec![6, 7]]).unwrap();
        assert_eq!(u.refinement_map(&v, 10), Ok(vec![0, 1]));
        let bad = SetFamily::new(vec![vec![1], vec![1, 7]]).unwrap();
        assert_eq!(bad.refinement_map(&two_halves(), 10), Err(1));
    }

    fn random_family(rng: &mut impl Rng, n: usize) -> SetFamily {
        let k = rng.gen_range(1..6);
        let mut members = Vec::new();
        for _ in 0..k {
            let mut m: Vec<usize> = (0..n).filter(|_| rng.gen_bool(0.3)).collect();
            m.push(rng.gen_range(0..n));
            members.push(m);
        }
        SetFamily::new(members).unwrap()
    }

    #[test]
    fn statistics_match_brute_force_on_random_families() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let w = MetricWindow::build(&SpaceRecipe::Cloud { dim: 2, count: 40, extent: 5.0, seed: 2, norm: CoordNorm::L2, points: vec![] }).unwrap();
        let n = w.len();
        for _ in 0..30 {
            let f = random_family(&mut rng, n);
            let mesh = f.members.iter().flat_map(|m| m.iter().flat_map(|&a| m.iter().map(move |&b| (a, b)))).map(|(a, b)| w.dist(a, b)).fold(0.0, f64::max);
            assert_eq!(f.mesh(&w), mesh);
            let mult = (0..n).map(|x| f.members.iter().filter(|m| m.contains(&x)).count()).max().unwrap();
            assert_eq!(f.multiplicity(n), mult);
            let lf = f.lebesgue_function(&w);
            for x in 0..n {
                let brute = f
                    .members
                    .iter()
                    .filter(|m| m.contains(&x))
                    .map(|m| {
                        let comp: Vec<usize> = (0..n).filter(|y| !m.contains(y)).collect();
                        w.dist_to_set(x, &comp)
                    })
                    .fold(0.0, f64::max);
                assert_eq!(lf[x], brute);
            }
            let r = rng.gen_range(0.0..3.0);
            let mut disjoint = true;
            for i in 0..f.len() {
                for j in 0..f.len() {
                    if i != j {
                        let d = f.members[i].iter().flat_map(|&a| f.members[j].iter().map(move |&b| (a, b))).map(|(a, b)| w.dist(a, b)).fold(f64::INFINITY, f64::min);
                        disjoint &= d > r;
                    }
                }
            }
            assert_eq!(f.is_r_disjoint(&w, r), disjoint);
        }
    }

    #[test]
    fn fattened_brick_families_on_z() {
        // Two 3-disjoint families of period-8 blocks, fattened by 1.5.
        let w = MetricWindow::build(&SpaceRecipe::Cayley { group: Group::Lattice { dim: 1, generators: None }, radius: 40.0 }).unwrap();
        let coord = |p: usize| w.coords(p).unwrap()[0] as i64;
        let fam = |shift: i64| {
            let mut blocks: std::collections::BTreeMap<i64, Vec<usize>> = Default::default();
            for p in 0..w.len() {
                let c = coord(p) + shift;
                if c.rem_euclid(8) < 4 {
                    blocks.entry(c.div_euclid(8)).or_default().push(p);
                }
            }
            SetFamily::new(blocks.into_values().collect()).unwrap()
        };
        let (a, b) = (fam(0), fam(4));
        let r = 3.0;
        assert!(a.is_r_disjoint(&w, r) && b.is_r_disjoint(&w, r));
        let cover = SetFamily::union(&[a.clone(), b.clone()]).fatten(&w, r / 2.0);
        let old_mesh = SetFamily::union(&[a, b]).mesh(&w);
        assert!(cover.uncovered(w.len()).is_none());
        assert!(cover.multiplicity(w.len()) <= 2);
        assert!(cover.lebesgue_number(&w) >= r / 2.0);
        assert!(cover.mesh(&w) <= old_mesh + r);
    }

    #[test]
    fn witness_of_norm_is_one() {
        let w = line(50);
        let f: Vec<f64> = w.norms().to_vec();
        let wit = linearity_witness(&f, &w, &WitnessConfig::default());
        assert!(wit.valid);
        assert_eq!(wit.c, 1.0);
        let doubled: Vec<f64> = f.iter().map(|v| 2.0 * v).collect();
        assert_eq!(linearity_witness(&doubled, &w, &WitnessConfig::default()).c, 2.0);
    }

    #[test]
    fn square_root_is_flagged_on_ladder() {
        let cfg = WitnessConfig::default();
        let build = |r: f64| {
            let w = MetricWindow::build(&SpaceRecipe::Cayley { group: Group::Lattice { dim: 1, generators: None }, radius: r })?;
            let f: Vec<f64> = w.norms().iter().map(|v| v.sqrt()).collect();
            Ok((w, f))
        };
        let (w, f) = build(1e4).unwrap();
        let wit = linearity_witness(&f, &w, &cfg);
        // min of 1/sqrt(t) on [r0, 9000] sits at the rim.
        assert!((wit.c - 1.0 / 9000f64.sqrt()).abs() < 1e-12);
        assert!((wit.c - 0.01).abs() < 0.001);
        let ladder = radius_ladder(&[1e4, 2e4, 4e4], &cfg, build).unwrap();
        assert!(ladder.decaying);
    }

    #[test]
    fn degenerate_window_gives_invalid_witness() {
        let w = MetricWindow::from_matrix(vec!["o".into()], vec![vec![0.0]], None).unwrap();
        let wit = linearity_witness(&[0.0], &w, &WitnessConfig::default());
        assert!(!wit.valid && wit.reason.is_some());
    }
}
