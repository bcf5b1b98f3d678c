//! Nerve projection of a block cover of ℤ² and the push into a lower skeleton.

use coarsekit::nerve::{projection, skeleton_push, BoundaryCandidate};
use coarsekit::{Group, MetricWindow, SetFamily, SpaceRecipe};

fn main() -> coarsekit::Result<()> {
    let w = MetricWindow::build(&SpaceRecipe::Cayley { group: Group::Lattice { dim: 2, generators: None }, radius: 10.0 })?;
    // 7x7 blocks repeating every 5 steps: each point meets up to four blocks.
    let mut blocks = std::collections::BTreeMap::<(i64, i64), Vec<usize>>::new();
    for p in 0..w.len() {
        let c = w.coords(p).unwrap();
        let (x, y) = (c[0] as i64, c[1] as i64);
        for i in (x - 6).div_euclid(5)..=x.div_euclid(5) {
            for j in (y - 6).div_euclid(5)..=y.div_euclid(5) {
                if (5 * i..=5 * i + 6).contains(&x) && (5 * j..=5 * j + 6).contains(&y) {
                    blocks.entry((i, j)).or_default().push(p);
                }
            }
        }
    }
    let cover = SetFamily::new(blocks.into_values().collect())?;
    let p = projection(&cover, &w)?;
    println!("nerve: {} vertices, dimension {}, Lip(p) = {:.4}", p.nerve.vertices, p.nerve.dimension, p.lipschitz);
    for cand in [BoundaryCandidate::Radial, BoundaryCandidate::NearestBoundary, BoundaryCandidate::Auto] {
        match skeleton_push(&p, &w, cand, None) {
            Ok(s) => println!("{cand:?}: n = {}, multiplicity {}, Lip(q) = {:.4}, Lebesgue {:.4} >= {:.4}: {:?}", s.n, s.multiplicity, s.q_lipschitz, s.lebesgue, s.lebesgue_bound, s.checks),
            Err(e) => println!("{cand:?}: {e}"),
        }
    }
    Ok(())
}
