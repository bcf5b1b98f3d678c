//! Property tests for structural invariants on small random windows.

mod common;

use proptest::prelude::*;

use coarsekit::calculus::star_merge;
use coarsekit::certify::{check_entry, greedy_search, SearchOutcome};
use coarsekit::cone::{cone_distance, ScaledSequence};
use coarsekit::covers::cover_stats;
use coarsekit::nerve::{build_nerve, projection};
use coarsekit::sublinear::{control_profile, default_r_grid, urysohn_phi, variation_seminorm, Relation};
use coarsekit::{CoordNorm, Cover, MetricWindow, SetFamily, SpaceRecipe};

use common::*;

// =============================================================================
// STRATEGIES
// =============================================================================

fn cloud() -> impl Strategy<Value = MetricWindow> {
    (1usize..=2, 8usize..40, any::<u64>(), prop::bool::ANY).prop_map(|(dim, count, seed, l1)| {
        let norm = if l1 { CoordNorm::L1 } else { CoordNorm::L2 };
        MetricWindow::build(&SpaceRecipe::Cloud { dim, count, extent: 8.0, seed, norm, points: vec![] }).unwrap()
    })
}

/// A window with a cover by closed balls around every `stride`-th point.
fn covered() -> impl Strategy<Value = (MetricWindow, Cover)> {
    (cloud(), 1usize..4, 0.5f64..4.0).prop_map(|(w, stride, rho)| {
        let mut members: Vec<Vec<usize>> = (0..w.len()).step_by(stride).map(|c| (0..w.len()).filter(|&y| w.dist(c, y) <= rho).collect()).collect();
        let seen: Vec<usize> = (0..w.len()).filter(|&p| !members.iter().any(|m| m.contains(&p))).collect();
        members.extend(seen.into_iter().map(|p| vec![p]));
        (w, SetFamily::new(members).unwrap())
    })
}

fn values(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-5.0f64..5.0, n)
}

fn window_with_two(w: MetricWindow) -> impl Strategy<Value = (MetricWindow, Vec<f64>, Vec<f64>)> {
    let n = w.len();
    (Just(w), values(n), values(n))
}

fn disjoint_pair() -> impl Strategy<Value = (MetricWindow, Vec<usize>, Vec<usize>)> {
    cloud().prop_flat_map(|w| {
        let n = w.len();
        (Just(w), prop::collection::vec(0u8..3, n))
    })
    .prop_filter_map("both sides nonempty", |(w, side)| {
        let a: Vec<usize> = (0..w.len()).filter(|&p| side[p] == 0).collect();
        let b: Vec<usize> = (0..w.len()).filter(|&p| side[p] == 1).collect();
        (!a.is_empty() && !b.is_empty()).then_some((w, a, b))
    })
}

// =============================================================================
// COVERS
// =============================================================================

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn prop_cover_stats_match_brute_force((w, c) in covered()) {
        let s = cover_stats(&c, &w, 4);
        let all: Vec<usize> = (0..w.len()).collect();
        prop_assert_eq!(s.multiplicity, multiplicity(w.len(), &c));
        prop_assert!((s.mesh - mesh(&w, &c)).abs() <= TOL);
        prop_assert!((s.lebesgue - lebesgue(&w, &c, &all)).abs() <= TOL);
    }

    #[test]
    fn prop_refinement_is_reflexive_and_union_bounds_multiplicity((w, c) in covered()) {
        prop_assert!(c.refines(&c, w.len()));
        let u = SetFamily::union(&[c.clone(), c.clone()]);
        prop_assert!(u.multiplicity(w.len()) <= 2 * c.multiplicity(w.len()));
    }

    #[test]
    fn prop_fattening_keeps_refinement((w, c) in covered(), s in 0.0f64..3.0) {
        let f = c.fatten(&w, s);
        prop_assert!(c.refines(&f, w.len()));
        prop_assert!(mesh(&w, &f) <= mesh(&w, &c) + 2.0 * s + TOL);
    }
}

// =============================================================================
// STAR MERGE
// =============================================================================

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn prop_merge_with_full_key_returns_fine((w, c) in covered()) {
        let coarse = SetFamily::new(vec![(0..w.len()).collect()]).unwrap();
        let all: Vec<usize> = (0..w.len()).collect();
        let res = star_merge(&w, &c, &coarse, &all).unwrap();
        prop_assert_eq!(as_set(&res.merged), as_set(&c));
    }

    #[test]
    fn prop_merge_with_empty_key_returns_coarse((w, c) in covered(), groups in 1usize..4) {
        let mut members = vec![Vec::new(); groups];
        for (i, m) in c.members.iter().enumerate() {
            members[i % groups].extend_from_slice(m);
        }
        members.retain(|m: &Vec<usize>| !m.is_empty());
        let coarse = SetFamily::new(members).unwrap();
        let res = star_merge(&w, &c, &coarse, &[]).unwrap();
        prop_assert_eq!(as_set(&res.merged), as_set(&coarse));
    }

    #[test]
    fn prop_merge_is_idempotent((w, c) in covered(), cut in 0.0f64..8.0) {
        let coarse = SetFamily::new(vec![(0..w.len()).collect()]).unwrap();
        let k: Vec<usize> = (0..w.len()).filter(|&p| w.norm(p) <= cut).collect();
        let once = star_merge(&w, &c, &coarse, &k).unwrap();
        let twice = star_merge(&w, &c, &once.merged, &k).unwrap();
        prop_assert_eq!(as_set(&once.merged), as_set(&twice.merged));
        prop_assert!(once.checks.all());
    }
}

// =============================================================================
// SUBLINEAR CONTROL
// =============================================================================

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn prop_seminorm_is_subadditive_and_homogeneous((w, f, g) in cloud().prop_flat_map(window_with_two), t in -3.0f64..3.0) {
        let sum: Vec<f64> = f.iter().zip(&g).map(|(a, b)| a + b).collect();
        let scaled: Vec<f64> = f.iter().map(|a| t * a).collect();
        let (sf, sg) = (variation_seminorm(&f, &w).value, variation_seminorm(&g, &w).value);
        prop_assert!(variation_seminorm(&sum, &w).value <= sf + sg + TOL * (sf + sg).max(1.0));
        prop_assert!((variation_seminorm(&scaled, &w).value - t.abs() * sf).abs() <= TOL * sf.max(1.0));
        prop_assert!((sf - seminorm(&w, &f)).abs() <= TOL * sf.max(1.0));
    }

    #[test]
    fn prop_urysohn_is_symmetric((w, a, b) in disjoint_pair()) {
        let ab = urysohn_phi(&a, &b, &w, None).unwrap();
        let ba = urysohn_phi(&b, &a, &w, None).unwrap();
        prop_assert!(ab.phi.iter().zip(&ba.phi).all(|(x, y)| (x + y - 1.0).abs() <= 1e-12));
        prop_assert!(a.iter().all(|&p| ab.phi[p] == 0.0) && b.iter().all(|&p| ab.phi[p] == 1.0));
        prop_assert!(ab.phi.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn prop_identity_relation_has_zero_profile(w in cloud()) {
        let p = control_profile(&Relation::diagonal(w.len()), &w, &default_r_grid(&w));
        prop_assert!(p.samples.iter().all(|s| s.forward == 0.0 && s.backward == 0.0));
    }

    #[test]
    fn prop_inverse_relation_swaps_profile_directions(w in cloud(), shift in 1usize..5) {
        let pairs = (0..w.len()).map(|x| ((x + shift) % w.len(), x)).collect();
        let e = Relation { pairs };
        let grid = default_r_grid(&w);
        let (p, q) = (control_profile(&e, &w, &grid), control_profile(&e.inverse(), &w, &grid));
        for (s, t) in p.samples.iter().zip(&q.samples) {
            prop_assert_eq!(s.forward, t.backward);
            prop_assert_eq!(s.backward, t.forward);
        }
        prop_assert!(p.samples.windows(2).all(|s| s[1].forward <= s[0].forward));
    }
}

// =============================================================================
// NERVE
// =============================================================================

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn prop_nerve_simplices_are_exactly_common_intersections((w, c) in covered()) {
        prop_assume!(multiplicity(w.len(), &c) <= 12);
        let nerve = build_nerve(&c, w.len()).unwrap();
        let k = c.len().min(12);
        let holds: Vec<Vec<bool>> = c.members.iter().map(|m| (0..w.len()).map(|p| m.contains(&p)).collect()).collect();
        for mask in 1u32..(1 << k) {
            let s: Vec<u32> = (0..k as u32).filter(|i| mask >> i & 1 == 1).collect();
            let meet = (0..w.len()).any(|p| s.iter().all(|&i| holds[i as usize][p]));
            prop_assert_eq!(nerve.contains(&s), meet, "simplex {:?}", s);
        }
    }

    #[test]
    fn prop_projection_is_barycentric_on_its_simplex((w, c) in covered()) {
        // Beyond 20 members through one point the nerve refuses to enumerate.
        prop_assume!(multiplicity(w.len(), &c) <= 12);
        let p = projection(&c, &w).unwrap();
        for (x, coords) in p.coords.iter().enumerate() {
            let total: f64 = coords.iter().map(|q| q.1).sum();
            prop_assert!((total - 1.0).abs() <= 1e-9);
            prop_assert!(coords.iter().all(|&(v, _)| c.members[v as usize].contains(&x)));
        }
    }
}

// =============================================================================
// CERTIFICATES AND CONES
// =============================================================================

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn prop_greedy_success_passes_independent_check(w in cloud(), n in 1usize..3, seed in any::<u64>()) {
        let (c, r) = (6.0, 1.0);
        if let SearchOutcome::Found(ok) = greedy_search(&w, n, c, r, seed) {
            let all: Vec<usize> = (0..w.len()).collect();
            prop_assert!(covers(w.len(), &ok.cover));
            prop_assert!(mesh(&w, &ok.cover) <= c * r + TOL);
            prop_assert!(multiplicity(w.len(), &ok.cover) <= n + 1);
            prop_assert!(lebesgue(&w, &ok.cover, &all) > r);
            // A cover that works at n also works at n + 1.
            prop_assert!(check_entry(&ok.cover, &w, n + 1, c, r).pass);
        }
    }

    #[test]
    fn prop_greedy_is_deterministic(w in cloud(), seed in any::<u64>()) {
        prop_assert_eq!(greedy_search(&w, 1, 6.0, 1.0, seed), greedy_search(&w, 1, 6.0, 1.0, seed));
    }

    #[test]
    fn prop_cone_distance_is_a_pseudometric(pts in prop::collection::vec((-50.0f64..50.0, -50.0f64..50.0), 15)) {
        let mut coords = vec![vec![0.0, 0.0]];
        coords.extend(pts.iter().map(|&(x, y)| vec![x, y]));
        let labels = (0..coords.len()).map(|i| format!("p{i}")).collect();
        let w = MetricWindow::from_coords(labels, coords, CoordNorm::L2, 0).unwrap();
        let idx: Vec<u64> = vec![10, 20, 30, 40, 50];
        let seq = |k: usize| ScaledSequence::new(&w, idx.clone(), (1 + 5 * k..6 + 5 * k).collect(), 10.0).unwrap();
        let (x, y, z) = (seq(0), seq(1), seq(2));
        let d = |a: &ScaledSequence, b: &ScaledSequence| cone_distance(a, b, &w, 1).unwrap().estimate;
        prop_assert_eq!(d(&x, &x), 0.0);
        prop_assert_eq!(d(&x, &y), d(&y, &x));
        prop_assert!(d(&x, &z) <= d(&x, &y) + d(&y, &z) + TOL);
    }
}
