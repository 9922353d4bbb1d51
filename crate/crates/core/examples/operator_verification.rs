//! Approximation rates of the local projections, the potential
//! reconstruction and both stabilizations, with no global solve.

use hho::harness::{verify_operators, FamilyKind, MeshFamily, VerificationTarget};

fn main() -> hho::Result<()> {
    let family = MeshFamily::doubling(FamilyKind::Quad, 8, 4);
    let r = verify_operators(&family, &[0, 1, 2], VerificationTarget::Sin)?;
    for b in &r.blocks {
        println!(
            "{:<27} k={} rate {:.3} (expected {:.1}) {}",
            b.name,
            b.k,
            b.rate.unwrap_or(f64::NAN),
            b.expected.unwrap_or(f64::NAN),
            if b.pass { "ok" } else { "FAIL" }
        );
    }
    // Polynomials reproduced exactly.
    let r = verify_operators(&family, &[1, 2], VerificationTarget::Poly)?;
    println!("polynomial target pass: {}", r.pass);
    Ok(())
}
