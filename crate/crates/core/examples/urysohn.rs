//! Urysohn function between two sectors of the plane and its sublinear
//! variation seminorm.

use coarsekit::sublinear::{separation_witness, urysohn_phi};
use coarsekit::{CoordNorm, MetricWindow, WitnessConfig};

fn main() -> coarsekit::Result<()> {
    let mut coords = vec![vec![0.0, 0.0]];
    for x in -20i32..=20 {
        for y in -20i32..=20 {
            if (x, y) != (0, 0) && x * x + y * y <= 400 {
                coords.push(vec![x as f64, y as f64]);
            }
        }
    }
    let labels = coords.iter().map(|c| format!("({},{})", c[0], c[1])).collect();
    let w = MetricWindow::from_coords(labels, coords, CoordNorm::L2, 0)?;
    let sector = |lo: f64, hi: f64| -> Vec<usize> {
        (1..w.len())
            .filter(|&p| {
                let c = w.coords(p).unwrap();
                let t = c[1].atan2(c[0]);
                t >= lo && t <= hi && w.norm(p) >= 2.0
            })
            .collect()
    };
    let (a, b) = (sector(-0.3, 0.3), sector(2.0, 2.6));
    let sep = separation_witness(&a, &b, &w, &WitnessConfig { margin: 0.0, ..Default::default() })?;
    println!("separation slope D = {:.4} from r1 = {}", sep.d, sep.r1);
    let rep = urysohn_phi(&a, &b, &w, Some(sep.d))?;
    println!("seminorm {:.4}, bound 3/C = {:.4}, within: {:?}", rep.seminorm.value, rep.bound.unwrap(), rep.within);
    Ok(())
}
