//! Word-metric balls in ℤ² and the free group F2: sizes, norm spread and a
//! triangle-inequality spot check.

use coarsekit::{Group, MetricWindow, SpaceRecipe};

fn main() -> coarsekit::Result<()> {
    for (name, group, radius) in [("ℤ²", Group::Lattice { dim: 2, generators: None }, 20.0), ("F2", Group::Free { rank: 2 }, 6.0)] {
        let w = MetricWindow::build(&SpaceRecipe::Cayley { group, radius })?;
        let mut by_norm = std::collections::BTreeMap::new();
        for &n in w.norms() {
            *by_norm.entry(n as u64).or_insert(0usize) += 1;
        }
        println!("{name}: radius {radius}, {} points, sphere sizes {:?}", w.len(), by_norm.values().take(8).collect::<Vec<_>>());
        match w.check_triangle(400, 20_000, 0) {
            None => println!("  triangle inequality holds on the sample"),
            Some((a, b, c)) => println!("  triangle fails at {} {} {}", w.label(a), w.label(b), w.label(c)),
        }
        let far = (0..w.len()).max_by(|&a, &b| w.norm(a).total_cmp(&w.norm(b))).unwrap();
        println!("  a farthest point: {} at distance {}", w.label(far), w.norm(far));
    }
    Ok(())
}
