//! The parabolic region against its ray: sublinear control profiles and the
//! dimension search at n = 1 and n = 2.

use coarsekit::certify::{parabolic_rung, ParabolicConfig};

fn main() -> coarsekit::Result<()> {
    let rung = parabolic_rung(100.0, &ParabolicConfig::default())?;
    println!("radius {}: {} points", rung.radius, rung.points);
    for s in rung.projection.samples.iter().filter(|s| [16.0, 25.0, 49.0, 81.0].contains(&s.r)) {
        println!("  r = {:>4}: forward {:.4}, backward {:.4}, 2/sqrt(r) = {:.4}", s.r, s.forward, s.backward, 2.0 / s.r.sqrt());
    }
    println!("profile / bound = {:.4}, n = 1 fails {}, n = 2 succeeds {}", rung.bound_ratio, rung.n1_fails, rung.n2_succeeds);
    Ok(())
}
