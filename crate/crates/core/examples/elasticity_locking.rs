//! Linear elasticity with a divergence-free solution: the error does not
//! grow as λ/μ becomes large.

use hho::harness::{locking_test, FamilyKind, MeshFamily, SolveOptions};

fn main() -> hho::Result<()> {
    let family = MeshFamily::new(FamilyKind::Tri, &[8, 16, 24, 32]);
    let r = locking_test(1.0, &[1.0, 1e2, 1e4], 1, &family, &SolveOptions::default())?;
    for s in &r.studies {
        let lame = s.lame.unwrap();
        let last = s.rows.last().unwrap();
        println!(
            "lambda/mu = {:>7}: finest strain error {:.4e}, rate {:.3}",
            lame.lambda / lame.mu,
            last.err_h1,
            s.fitted("rate_h1").unwrap_or(f64::NAN)
        );
    }
    println!(
        "max/min finest error {:.3} (limit {}), pass {}",
        r.ratio, r.max_ratio, r.pass
    );
    Ok(())
}
