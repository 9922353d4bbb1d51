//! Quadrilateral meshes where some cells are split into four, so their
//! neighbours become pentagons with a hanging vertex.

use hho::context::HhoDegrees;
use hho::harness::{convergence_study, family_mesh, FamilyKind, MeshFamily, SolveOptions};
use hho::problems::poisson_sine;

fn main() -> hho::Result<()> {
    let mesh = family_mesh(FamilyKind::Hanging, 6)?;
    let mut sides = std::collections::BTreeMap::new();
    for c in 0..mesh.num_cells() {
        *sides.entry(mesh.cell_faces(c).len()).or_insert(0) += 1;
    }
    println!(
        "6x6 base: {} cells, faces per cell {:?}",
        mesh.num_cells(),
        sides
    );

    let family = MeshFamily::doubling(FamilyKind::Hanging, 8, 4);
    let r = convergence_study(
        &poisson_sine(2),
        &family,
        HhoDegrees::equal(1),
        &SolveOptions::default(),
    )?;
    print!("{}", r.to_csv());
    println!("pass: {}", r.pass);
    Ok(())
}
