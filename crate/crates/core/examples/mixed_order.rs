//! Cell unknowns one degree above the face unknowns, with the
//! Lehrenfeld-Schöberl stabilization.

use hho::context::HhoDegrees;
use hho::harness::{convergence_study, FamilyKind, MeshFamily, SolveOptions};
use hho::problems::poisson_sine;

fn main() -> hho::Result<()> {
    let family = MeshFamily::doubling(FamilyKind::Quad, 8, 4);
    for k in 0..=2 {
        let r = convergence_study(
            &poisson_sine(2),
            &family,
            HhoDegrees::mixed(k),
            &SolveOptions::default(),
        )?;
        println!(
            "k = {k}, k' = {}: rate_h1 {:.3}, rate_l2 {:.3}, pass {}",
            r.k_cell,
            r.fitted("rate_h1").unwrap_or(f64::NAN),
            r.fitted("rate_l2").unwrap_or(f64::NAN),
            r.pass
        );
    }
    Ok(())
}
