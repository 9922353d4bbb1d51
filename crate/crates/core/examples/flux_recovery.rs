//! Face fluxes are single-valued across interior faces and balance the load
//! in every cell.

use hho::context::HhoDegrees;
use hho::harness::{family_mesh, flux_check, solve_problem, FamilyKind, SolveOptions};
use hho::problems::poisson_sine;

fn main() -> hho::Result<()> {
    let mesh = family_mesh(FamilyKind::Hanging, 9)?;
    for k in 0..=2 {
        let sol = solve_problem(
            &mesh,
            HhoDegrees::equal(k),
            &poisson_sine(2),
            &SolveOptions::default(),
        )?;
        let c = flux_check(&mesh, &sol)?;
        println!(
            "k={k}: interface {:.2e}, balance {:.2e}",
            c.interface, c.balance
        );
    }
    Ok(())
}
