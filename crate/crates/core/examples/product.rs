//! Lifting a certificate for ℤ to one for ℤ × ℝ.

use coarsekit::certify::{brick_certificate, product_certificate, verify_cert};
use coarsekit::{Group, MetricWindow, SpaceRecipe};

fn main() -> coarsekit::Result<()> {
    let base = SpaceRecipe::Cayley { group: Group::Lattice { dim: 1, generators: None }, radius: 30.0 };
    let cert = brick_certificate(&MetricWindow::build(&base)?, 1.0)?;
    let wp = MetricWindow::build(&SpaceRecipe::ProductWithLine { base: Box::new(base), radius: 20.0 })?;
    let prod = product_certificate(&cert, &wp)?;
    let rep = verify_cert(&prod)?;
    println!("base n = {}, C = {:.3}; product n = {}, C = {:.3}, {} scales over {} points", cert.n, cert.c, prod.n, prod.c, prod.entries.len(), wp.len());
    println!("product verify: {}", rep.pass);
    Ok(())
}
