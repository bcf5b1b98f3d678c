//! Mesh, multiplicity and Lebesgue number of overlapping interval covers of ℤ.

use coarsekit::calculus::line_interval_cover;
use coarsekit::covers::cover_stats;
use coarsekit::{Group, MetricWindow, SpaceRecipe};

fn main() -> coarsekit::Result<()> {
    let w = MetricWindow::build(&SpaceRecipe::Cayley { group: Group::Lattice { dim: 1, generators: None }, radius: 200.0 })?;
    println!("{:>6} {:>8} {:>6} {:>5} {:>9}", "r", "members", "mesh", "mult", "lebesgue");
    for r in [1.5, 4.5, 13.5, 40.5] {
        let c = line_interval_cover(&w, r, 4.0)?;
        let s = cover_stats(&c, &w, 8);
        println!("{r:>6} {:>8} {:>6} {:>5} {:>9}", s.members, s.mesh, s.multiplicity, s.lebesgue);
    }
    Ok(())
}
