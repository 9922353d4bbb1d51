//! In 1D the condensed face system coincides with continuous P1 finite
//! elements on the mesh vertices, for every k >= 1.

use std::sync::Arc;

use hho::harness::{oracle_1d, ScalarFn};
use hho::mesh::build_interval_mesh;

fn main() -> hho::Result<()> {
    let mesh = build_interval_mesh(0.0, 1.0, 32, Some(1.5))?;
    let f: ScalarFn = Arc::new(|x: f64| {
        std::f64::consts::PI.powi(2) * (std::f64::consts::PI * x).sin() + x.exp()
    });
    for k in 0..=3 {
        let r = oracle_1d(&mesh, k, f.clone())?;
        println!(
            "k={k}: matrix {:.2e}, rhs {:.2e}, recovery {:?}, pass {}",
            r.matrix_deviation, r.rhs_deviation, r.recovery_deviation, r.pass
        );
    }
    Ok(())
}
