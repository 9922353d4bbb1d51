//! Round trip of a mesh through the JSON format, with a Neumann side.

use hho::context::HhoDegrees;
use hho::harness::{error_norms, solve_problem, SolveOptions};
use hho::mesh::{build_structured_mesh, BoundaryKind, CellShape, Mesh, Rectangle};
use hho::problems::poisson_sine;

fn main() -> hho::Result<()> {
    let mesh = build_structured_mesh(CellShape::Tri, 4, 4, Rectangle::UNIT)?
        .with_boundary_predicate(|p| {
            if p[0] > 1.0 - 1e-12 {
                BoundaryKind::Neumann
            } else {
                BoundaryKind::Dirichlet
            }
        });
    let text = mesh.to_json_string()?;
    println!("{} bytes of JSON", text.len());
    let back = Mesh::from_json_str(&text)?;
    assert_eq!(back.num_cells(), mesh.num_cells());

    let spec = poisson_sine(2);
    let sol = solve_problem(&back, HhoDegrees::equal(1), &spec, &SolveOptions::default())?;
    let e = error_norms(
        &back,
        &sol.discrete,
        &sol.field,
        spec.exact.as_ref().unwrap(),
    )?;
    println!("h = {:.3}, energy error {:.3e}", e.h, e.err_h1);
    Ok(())
}
