//! Exponential index sequences, ray pairs and the check that their traces
//! diverge linearly.

use coarsekit::cone::{cone_distance, exp_sequence, gap_claim_check, ray_pair, required_growth, xi_separation};
use coarsekit::WitnessConfig;

fn main() -> coarsekit::Result<()> {
    let (d1, d2, delta) = (1.0, 1.5, 0.1);
    let a = required_growth(d1, d2, delta);
    let seq = exp_sequence(a * 1.1, 1, 8)?;
    println!("a >= {a:.4}; f = {:?}", seq.values);
    let pair = ray_pair(&seq, 0.0, d1, 2.0, d2, delta, 0.5, 7)?;
    let cone = cone_distance(&pair.x, &pair.y, &pair.window, 3)?;
    println!("cone distance ~ {:.4} (spread {:.4})", cone.estimate, cone.spread);
    let gap = gap_claim_check(&pair.x, &pair.y, &pair.window, &seq, d1, d2, delta)?;
    println!("gap inequalities hold: {} {:?}", gap.pass, gap.broken);
    let xi = xi_separation(&pair.x, &pair.y, &pair.window, 0.5 * cone.estimate, &WitnessConfig::default())?;
    println!("trace divergence: c = {:.4} on [{:.1}, {:.1}], valid {}", xi.c, xi.r0, xi.rim, xi.valid);
    Ok(())
}
