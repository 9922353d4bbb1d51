//! Convergence of the equal-order scheme for `−Δu = f` with
//! `u = sin(πx) sin(πy)` on uniform quadrilateral meshes.

use hho::context::HhoDegrees;
use hho::harness::{convergence_study, FamilyKind, MeshFamily, SolveOptions};
use hho::problems::poisson_sine;

fn main() -> hho::Result<()> {
    let family = MeshFamily::doubling(FamilyKind::Quad, 8, 4);
    for k in 0..=2 {
        let report = convergence_study(
            &poisson_sine(2),
            &family,
            HhoDegrees::equal(k),
            &SolveOptions::default(),
        )?;
        println!("k = {k}");
        print!("{}", report.to_csv());
        for c in &report.checks {
            println!(
                "  {} = {:.3} in [{}, {}]: {}",
                c.name,
                c.value.unwrap_or(f64::NAN),
                c.min,
                c.max,
                c.pass
            );
        }
    }
    Ok(())
}
