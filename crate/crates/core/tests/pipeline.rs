use hho::context::HhoDegrees;
use hho::elasticity_operators::Lame;
use hho::harness::{
    bilinear_form, convergence_study_on, discretize, family_mesh, load_functional,
    restrict_to_admissible, solve_problem, FamilyKind, SolveOptions,
};
use hho::mesh::{
    build_interval_mesh, build_structured_mesh, BoundaryKind, CellShape, Mesh, Rectangle,
};
use hho::problems::{
    elasticity_divergence_free, poisson_constant_source, poisson_sine, ProblemSpec,
};
use hho::projection::HybridField;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_meshes() -> Vec<Mesh> {
    vec![
        build_structured_mesh(CellShape::Quad, 3, 3, Rectangle::UNIT).unwrap(),
        build_structured_mesh(CellShape::Tri, 3, 2, Rectangle::UNIT).unwrap(),
        family_mesh(FamilyKind::Hanging, 4).unwrap(),
    ]
}

fn check_spd(spec: &ProblemSpec, mesh: &Mesh, degrees: HhoDegrees) {
    let sol = solve_problem(mesh, degrees, spec, &SolveOptions::default()).unwrap();
    let a = sol.global.matrix.to_dense();
    let scale = a.amax();
    assert!((&a - a.transpose()).amax() <= 1e-13 * scale);
    let r = sol.reduced.matrix.to_dense();
    let eig = r.clone().symmetric_eigen().eigenvalues;
    assert!(
        eig.min() > 1e-10 * eig.max(),
        "reduced matrix not positive definite"
    );
}

#[test]
fn reduced_matrices_are_symmetric_positive_definite() {
    for mesh in small_meshes() {
        for k in 0..=2 {
            check_spd(&poisson_sine(2), &mesh, HhoDegrees::equal(k));
            check_spd(&poisson_sine(2), &mesh, HhoDegrees::mixed(k));
        }
        for k in 1..=2 {
            check_spd(
                &elasticity_divergence_free(Lame::new(1.0, 100.0).unwrap()),
                &mesh,
                HhoDegrees::equal(k),
            );
        }
    }
}

#[test]
fn one_dimensional_face_matrix_is_tridiagonal_and_degree_independent() {
    let mesh = build_interval_mesh(0.0, 1.0, 12, Some(1.3)).unwrap();
    let spec = poisson_sine(1);
    let mats: Vec<_> = (0..=3)
        .map(|k| {
            let sol = solve_problem(&mesh, HhoDegrees::equal(k), &spec, &SolveOptions::default())
                .unwrap();
            sol.global.matrix.to_dense()
        })
        .collect();
    let n = mats[0].nrows();
    assert_eq!(n, 13);
    for i in 0..n {
        let nnz = (0..n).filter(|&j| mats[0][(i, j)].abs() > 1e-12).count();
        assert!(nnz <= 3);
        // Constants lie in the kernel of the pure face operator.
        assert!(mats[0].row(i).sum().abs() < 1e-10 * mats[0].amax());
    }
    for m in &mats[1..] {
        assert!((m - &mats[0]).amax() <= 1e-11 * mats[0].amax());
    }
}

#[test]
fn galerkin_orthogonality_on_random_test_functions() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mesh = family_mesh(FamilyKind::Hanging, 6).unwrap();
    for (spec, degrees) in [
        (poisson_sine(2), HhoDegrees::equal(2)),
        (poisson_constant_source(2.0), HhoDegrees::mixed(1)),
        (
            elasticity_divergence_free(Lame::new(1.0, 10.0).unwrap()),
            HhoDegrees::equal(1),
        ),
    ] {
        let sol = solve_problem(&mesh, degrees, &spec, &SolveOptions::default()).unwrap();
        let d = &sol.discrete;
        for _ in 0..10 {
            let mut w = HybridField::zeros(&mesh, d.degrees);
            for b in w.cells.iter_mut().chain(w.faces.iter_mut()) {
                for x in b.iter_mut() {
                    *x = rng.random_range(-1.0..1.0);
                }
            }
            restrict_to_admissible(d, &mut w);
            let a = bilinear_form(&mesh, d, &sol.field, &w);
            let l = load_functional(&mesh, d, &w);
            assert!((a - l).abs() <= 1e-10 * (1.0 + l.abs()), "{a} vs {l}");
        }
    }
}

fn tagged_family(sizes: &[usize]) -> Vec<Mesh> {
    sizes
        .iter()
        .map(|&n| {
            build_structured_mesh(CellShape::Quad, n, n, Rectangle::UNIT)
                .unwrap()
                .with_boundary_predicate(|p| {
                    if p[0] > 1.0 - 1e-12 || p[1] < 1e-12 {
                        BoundaryKind::Neumann
                    } else {
                        BoundaryKind::Dirichlet
                    }
                })
        })
        .collect()
}

#[test]
fn neumann_boundaries_keep_the_rates() {
    let meshes = tagged_family(&[4, 8, 16, 32]);
    for k in 0..=2 {
        let r = convergence_study_on(
            &poisson_sine(2),
            &meshes,
            "quad-neumann",
            HhoDegrees::equal(k),
            &SolveOptions::default(),
        )
        .unwrap();
        assert!(r.pass, "k = {k}: {:?}", r.checks);
    }
    let r = convergence_study_on(
        &elasticity_divergence_free(Lame::new(1.0, 1.0).unwrap()),
        &meshes,
        "quad-neumann",
        HhoDegrees::equal(1),
        &SolveOptions::default(),
    )
    .unwrap();
    assert!(r.pass, "{:?}", r.checks);
}

#[test]
fn discretization_is_independent_of_solver() {
    use hho::assembly::{SolverKind, SolverOptions};
    let mesh = build_structured_mesh(CellShape::Tri, 6, 6, Rectangle::UNIT).unwrap();
    let d = discretize(
        &mesh,
        HhoDegrees::equal(1),
        &poisson_sine(2),
        Default::default(),
    )
    .unwrap();
    let direct = d.clone().solve(&mesh, SolverOptions::default()).unwrap();
    let cg = d
        .solve(
            &mesh,
            SolverOptions {
                kind: SolverKind::Cg,
                ..SolverOptions::default()
            },
        )
        .unwrap();
    let diff = (direct.field.to_vector() - cg.field.to_vector()).amax();
    assert!(diff < 1e-9, "{diff}");
    assert!(cg.report.relative_residual <= 1e-12);
}
