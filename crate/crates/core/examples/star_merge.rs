//! Merging a fine cover into a coarse one over a key set, with the checked
//! properties printed.

use coarsekit::calculus::star_merge;
use coarsekit::{MetricWindow, SetFamily};

fn interval(w: &MetricWindow, lo: i64, hi: i64) -> Vec<usize> {
    (lo..=hi).map(|i| w.id(&format!("({i})")).unwrap()).collect()
}

fn main() -> coarsekit::Result<()> {
    let w = MetricWindow::build(&coarsekit::SpaceRecipe::Cayley { group: coarsekit::Group::Lattice { dim: 1, generators: None }, radius: 12.0 })?;
    let fine = SetFamily::new(vec![interval(&w, -12, -5), interval(&w, -6, 0), interval(&w, 0, 6), interval(&w, 5, 12)])?;
    let coarse = SetFamily::new(vec![interval(&w, -12, 0), interval(&w, -1, 12)])?;
    let key = interval(&w, -4, 4);
    let res = star_merge(&w, &fine, &coarse, &key)?;
    for (m, o) in res.merged.members.iter().zip(&res.origin) {
        let xs: Vec<f64> = m.iter().map(|&p| w.coords(p).unwrap()[0]).collect();
        let (lo, hi) = xs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |a, &x| (a.0.min(x), a.1.max(x)));
        println!("{o:?}: [{lo}, {hi}]");
    }
    println!("checks: {:?}", res.checks);
    Ok(())
}
