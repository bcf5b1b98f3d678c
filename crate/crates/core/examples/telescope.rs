//! Telescoping a ladder of interval covers of ℤ into a cover whose Lebesgue
//! number grows linearly in the norm.

use coarsekit::calculus::{half_line_cover, line_interval_cover, scale_ladder, stop_index, telescope};
use coarsekit::{Cover, Group, MetricWindow, SpaceRecipe};

fn main() -> coarsekit::Result<()> {
    let w = MetricWindow::build(&SpaceRecipe::Cayley { group: Group::Lattice { dim: 1, generators: None }, radius: 800.0 })?;
    let (c, d, r0, margin) = (4.5, 0.5, 0.04, 0.1);
    let t = stop_index(c, d, r0, w.rim(margin));
    let ladder: Vec<Cover> = scale_ladder(c, d, r0, t).iter().map(|&r| line_interval_cover(&w, r, c)).collect::<coarsekit::Result<_>>()?;
    let target = half_line_cover(&w, 3)?;
    let res = telescope(&w, &target, &ladder, c, d, r0, margin)?;
    for s in &res.stage_stats {
        println!("stage {} r = {:.3}: {} members, mesh {}, multiplicity {}", s.index, s.r, s.members, s.mesh, s.multiplicity);
    }
    println!("grouped cover: {} members", res.grouped.len());
    println!("L(x)/|x| >= {:.4} on [{:.1}, {:.1}], bound {:.4}", res.measured_slope, res.annulus.0, res.annulus.1, res.slope_bound);
    println!("all checks: {}", res.checks.all());
    Ok(())
}
