//! Brick certificates for ℤ^d, independent verification, and greedy search
//! failing one dimension lower.

use coarsekit::certify::{brick_certificate, greedy_search, verify_cert};
use coarsekit::{Group, MetricWindow, SpaceRecipe};

fn main() -> coarsekit::Result<()> {
    // The r-grid runs up to rim / (4C), so several scales need wide windows.
    for (d, radius) in [(1, 200.0), (2, 100.0)] {
        let w = MetricWindow::build(&SpaceRecipe::Cayley { group: Group::Lattice { dim: d, generators: None }, radius })?;
        let cert = brick_certificate(&w, 1.0)?;
        let rep = verify_cert(&cert)?;
        println!("ℤ^{d}: n = {}, C = {:.3}, {} scales, verify {}", cert.n, cert.c, cert.entries.len(), rep.pass);
        for e in rep.entries.iter().take(4) {
            println!("  r = {:<8.3} mesh {:<6} mult {} lebesgue {}", e.r, e.mesh, e.multiplicity, e.lebesgue);
        }
        let below = greedy_search(&w, d - 1, 3.0 * (d + 1) as f64, 1.5, 0);
        println!("  greedy at n = {}: found {}", d - 1, below.is_found());
    }
    Ok(())
}
