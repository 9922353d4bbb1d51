//! Model problems: data of the Poisson and linear elasticity problems and the
//! manufactured solutions used by the convergence studies.
//!
//! Every field is stored as a two-component function; scalar problems use the
//! first component and leave the second at zero.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::elasticity_operators::Lame;
use crate::error::{HhoError, Result};
use crate::Point;

pub type VectorFn = Arc<dyn Fn(Point) -> [f64; 2] + Send + Sync>;
/// `g[c][d] = ∂_d u_c`.
pub type GradientFn = Arc<dyn Fn(Point) -> [[f64; 2]; 2] + Send + Sync>;
/// Boundary data depending on the point and the outward unit normal.
pub type BoundaryFn = Arc<dyn Fn(Point, Point) -> [f64; 2] + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProblemKind {
    Poisson,
    Elasticity,
}

#[derive(Clone)]
pub struct ExactSolution {
    pub value: VectorFn,
    pub gradient: GradientFn,
}

#[derive(Clone)]
pub struct ProblemSpec {
    pub id: String,
    pub kind: ProblemKind,
    pub source: VectorFn,
    pub dirichlet: VectorFn,
    pub neumann: BoundaryFn,
    pub lame: Option<Lame>,
    pub exact: Option<ExactSolution>,
}

impl std::fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("id", &self.id)
            .field("kind", &self.kind)
            .field("lame", &self.lame)
            .field("exact", &self.exact.is_some())
            .finish()
    }
}

impl ProblemSpec {
    /// Problem with a known solution: Dirichlet data is its trace and Neumann
    /// data its normal flux (or traction).
    pub fn manufactured(
        id: &str,
        kind: ProblemKind,
        lame: Option<Lame>,
        exact: ExactSolution,
        source: VectorFn,
    ) -> Self {
        let value = exact.value.clone();
        let gradient = exact.gradient.clone();
        let neumann: BoundaryFn = match kind {
            ProblemKind::Poisson => Arc::new(move |p, n| {
                let g = gradient(p);
                [g[0][0] * n[0] + g[0][1] * n[1], 0.0]
            }),
            ProblemKind::Elasticity => {
                let Lame { mu, lambda } = lame.expect("elasticity needs Lamé parameters");
                Arc::new(move |p, n| {
                    let s = stress(gradient(p), mu, lambda);
                    [
                        s[0][0] * n[0] + s[0][1] * n[1],
                        s[1][0] * n[0] + s[1][1] * n[1],
                    ]
                })
            }
        };
        ProblemSpec {
            id: id.to_string(),
            kind,
            source,
            dirichlet: value,
            neumann,
            lame,
            exact: Some(exact),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match (self.kind, self.lame) {
            (ProblemKind::Elasticity, None) => Err(HhoError::InvalidInput(format!(
                "problem '{}' is elasticity but has no Lamé parameters",
                self.id
            ))),
            (ProblemKind::Elasticity, Some(l)) => Lame::new(l.mu, l.lambda).map(|_| ()),
            _ => Ok(()),
        }
    }
}

/// `σ = 2μ ε(u) + λ div(u) I` from the displacement gradient.
pub fn stress(g: [[f64; 2]; 2], mu: f64, lambda: f64) -> [[f64; 2]; 2] {
    let div = g[0][0] + g[1][1];
    let exy = 0.5 * (g[0][1] + g[1][0]);
    [
        [2.0 * mu * g[0][0] + lambda * div, 2.0 * mu * exy],
        [2.0 * mu * exy, 2.0 * mu * g[1][1] + lambda * div],
    ]
}

/// Poisson problem with `u = sin(πx)` in 1D or `u = sin(πx) sin(πy)` in 2D.
pub fn poisson_sine(dim: usize) -> ProblemSpec {
    let exact = if dim == 1 {
        ExactSolution {
            value: Arc::new(|p| [(PI * p[0]).sin(), 0.0]),
            gradient: Arc::new(|p| [[PI * (PI * p[0]).cos(), 0.0], [0.0, 0.0]]),
        }
    } else {
        ExactSolution {
            value: Arc::new(|p| [(PI * p[0]).sin() * (PI * p[1]).sin(), 0.0]),
            gradient: Arc::new(|p| {
                let (sx, cx) = (PI * p[0]).sin_cos();
                let (sy, cy) = (PI * p[1]).sin_cos();
                [[PI * cx * sy, PI * sx * cy], [0.0, 0.0]]
            }),
        }
    };
    let d = dim as f64;
    let u = exact.value.clone();
    let source: VectorFn = Arc::new(move |p| [d * PI * PI * u(p)[0], 0.0]);
    ProblemSpec::manufactured("poisson_sine", ProblemKind::Poisson, None, exact, source)
}

/// `f`, `u_D`, `g_N` all zero.
pub fn poisson_zero() -> ProblemSpec {
    let exact = ExactSolution {
        value: Arc::new(|_| [0.0, 0.0]),
        gradient: Arc::new(|_| [[0.0; 2]; 2]),
    };
    ProblemSpec::manufactured(
        "poisson_zero",
        ProblemKind::Poisson,
        None,
        exact,
        Arc::new(|_| [0.0, 0.0]),
    )
}

/// Poisson problem with a constant source, homogeneous Dirichlet data and no
/// known solution.
pub fn poisson_constant_source(value: f64) -> ProblemSpec {
    ProblemSpec {
        id: "poisson_constant".into(),
        kind: ProblemKind::Poisson,
        source: Arc::new(move |_| [value, 0.0]),
        dirichlet: Arc::new(|_| [0.0, 0.0]),
        neumann: Arc::new(|_, _| [0.0, 0.0]),
        lame: None,
        exact: None,
    }
}

/// Bivariate polynomial `Σ c x^a y^b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    pub terms: Vec<(f64, u32, u32)>,
}

impl Polynomial {
    /// Fixed dense polynomial of total degree `degree` with coefficients
    /// depending on `seed`; the 1D variant omits powers of y.
    pub fn full(degree: u32, dim: usize, seed: u32) -> Self {
        let mut terms = Vec::new();
        for total in 0..=degree {
            for b in 0..=total {
                let a = total - b;
                if dim == 1 && b > 0 {
                    continue;
                }
                let c = 1.0 / (1.0 + a as f64 + 2.0 * b as f64 + seed as f64)
                    * if (a + seed).is_multiple_of(2) {
                        1.0
                    } else {
                        -1.0
                    };
                terms.push((c, a, b));
            }
        }
        Polynomial { terms }
    }

    pub fn eval(&self, p: Point) -> f64 {
        self.terms
            .iter()
            .map(|&(c, a, b)| c * p[0].powi(a as i32) * p[1].powi(b as i32))
            .sum()
    }

    /// `∂_x^i ∂_y^j` of the polynomial.
    pub fn derivative(&self, i: u32, j: u32) -> Polynomial {
        let terms = self
            .terms
            .iter()
            .filter(|&&(_, a, b)| a >= i && b >= j)
            .map(|&(c, a, b)| {
                let fa: f64 = ((a - i + 1)..=a).map(|t| t as f64).product();
                let fb: f64 = ((b - j + 1)..=b).map(|t| t as f64).product();
                (c * fa * fb, a - i, b - j)
            })
            .collect();
        Polynomial { terms }
    }
}

/// Poisson problem whose solution is a global polynomial of the given degree.
pub fn poisson_polynomial(degree: u32, dim: usize) -> ProblemSpec {
    let u = Polynomial::full(degree, dim, 0);
    let (ux, uy) = (u.derivative(1, 0), u.derivative(0, 1));
    let lap = {
        let (a, b) = (u.derivative(2, 0), u.derivative(0, 2));
        Polynomial {
            terms: a.terms.into_iter().chain(b.terms).collect(),
        }
    };
    let exact = ExactSolution {
        value: Arc::new(move |p| [u.eval(p), 0.0]),
        gradient: Arc::new(move |p| [[ux.eval(p), uy.eval(p)], [0.0, 0.0]]),
    };
    ProblemSpec::manufactured(
        &format!("poisson_poly{degree}"),
        ProblemKind::Poisson,
        None,
        exact,
        Arc::new(move |p| [-lap.eval(p), 0.0]),
    )
}

/// Divergence-free displacement
/// `u = (π sin²(πx) sin(2πy), −π sin(2πx) sin²(πy))`, the curl of
/// `sin²(πx) sin²(πy)`; the source is `−μΔu`.
pub fn elasticity_divergence_free(lame: Lame) -> ProblemSpec {
    let exact = ExactSolution {
        value: Arc::new(|p| {
            let (sx, sy) = ((PI * p[0]).sin(), (PI * p[1]).sin());
            [
                PI * sx * sx * (2.0 * PI * p[1]).sin(),
                -PI * (2.0 * PI * p[0]).sin() * sy * sy,
            ]
        }),
        gradient: Arc::new(|p| {
            let (sx, sy) = ((PI * p[0]).sin(), (PI * p[1]).sin());
            let (s2x, c2x) = (2.0 * PI * p[0]).sin_cos();
            let (s2y, c2y) = (2.0 * PI * p[1]).sin_cos();
            [
                [PI * PI * s2x * s2y, 2.0 * PI * PI * sx * sx * c2y],
                [-2.0 * PI * PI * c2x * sy * sy, -PI * PI * s2x * s2y],
            ]
        }),
    };
    let mu = lame.mu;
    let source: VectorFn = Arc::new(move |p| {
        let (s2x, c2x) = (2.0 * PI * p[0]).sin_cos();
        let (s2y, c2y) = (2.0 * PI * p[1]).sin_cos();
        let p3 = 2.0 * PI.powi(3);
        [
            -mu * p3 * s2y * (2.0 * c2x - 1.0),
            mu * p3 * s2x * (2.0 * c2y - 1.0),
        ]
    });
    ProblemSpec::manufactured(
        "elasticity_divfree",
        ProblemKind::Elasticity,
        Some(lame),
        exact,
        source,
    )
}

/// Compressible displacement `u = (sin(πx) sin(πy), x y (1 − x)(1 − y))`
/// with source `−μΔu − (μ + λ)∇(div u)`.
pub fn elasticity_compressible(lame: Lame) -> ProblemSpec {
    let exact = ExactSolution {
        value: Arc::new(|p| {
            let (x, y) = (p[0], p[1]);
            [(PI * x).sin() * (PI * y).sin(), (x - x * x) * (y - y * y)]
        }),
        gradient: Arc::new(|p| {
            let (x, y) = (p[0], p[1]);
            let (sx, cx) = (PI * x).sin_cos();
            let (sy, cy) = (PI * y).sin_cos();
            [
                [PI * cx * sy, PI * sx * cy],
                [(1.0 - 2.0 * x) * (y - y * y), (x - x * x) * (1.0 - 2.0 * y)],
            ]
        }),
    };
    let Lame { mu, lambda } = lame;
    let source: VectorFn = Arc::new(move |p| {
        let (x, y) = (p[0], p[1]);
        let (sx, cx) = (PI * x).sin_cos();
        let (sy, cy) = (PI * y).sin_cos();
        let lap = [
            -2.0 * PI * PI * sx * sy,
            -2.0 * (y - y * y) - 2.0 * (x - x * x),
        ];
        let grad_div = [
            -PI * PI * sx * sy + (1.0 - 2.0 * x) * (1.0 - 2.0 * y),
            PI * PI * cx * cy - 2.0 * (x - x * x),
        ];
        [
            -mu * lap[0] - (mu + lambda) * grad_div[0],
            -mu * lap[1] - (mu + lambda) * grad_div[1],
        ]
    });
    ProblemSpec::manufactured(
        "elasticity_compressible",
        ProblemKind::Elasticity,
        Some(lame),
        exact,
        source,
    )
}

/// Elasticity problem with a global polynomial displacement of the given degree.
pub fn elasticity_polynomial(lame: Lame, degree: u32) -> ProblemSpec {
    let u = [
        Polynomial::full(degree, 2, 0),
        Polynomial::full(degree, 2, 1),
    ];
    let d = |c: usize, i: u32, j: u32| u[c].derivative(i, j);
    let grads = [[d(0, 1, 0), d(0, 0, 1)], [d(1, 1, 0), d(1, 0, 1)]];
    let second = [
        [d(0, 2, 0), d(0, 1, 1), d(0, 0, 2)],
        [d(1, 2, 0), d(1, 1, 1), d(1, 0, 2)],
    ];
    let Lame { mu, lambda } = lame;
    let source: VectorFn = Arc::new(move |p| {
        let s: Vec<[f64; 3]> = second
            .iter()
            .map(|c| [c[0].eval(p), c[1].eval(p), c[2].eval(p)])
            .collect();
        // div σ = μΔu + (μ+λ)∇div u
        let lap = [s[0][0] + s[0][2], s[1][0] + s[1][2]];
        let grad_div = [s[0][0] + s[1][1], s[0][1] + s[1][2]];
        [
            -mu * lap[0] - (mu + lambda) * grad_div[0],
            -mu * lap[1] - (mu + lambda) * grad_div[1],
        ]
    });
    let exact = ExactSolution {
        value: Arc::new(move |p| [u[0].eval(p), u[1].eval(p)]),
        gradient: Arc::new(move |p| {
            [
                [grads[0][0].eval(p), grads[0][1].eval(p)],
                [grads[1][0].eval(p), grads[1][1].eval(p)],
            ]
        }),
    };
    ProblemSpec::manufactured(
        &format!("elasticity_poly{degree}"),
        ProblemKind::Elasticity,
        Some(lame),
        exact,
        source,
    )
}

/// Rigid motion `u = (a − c y, b + c x)`, zero source.
pub fn elasticity_rigid(lame: Lame, a: f64, b: f64, c: f64) -> ProblemSpec {
    let exact = ExactSolution {
        value: Arc::new(move |p| [a - c * p[1], b + c * p[0]]),
        gradient: Arc::new(move |_| [[0.0, -c], [c, 0.0]]),
    };
    ProblemSpec::manufactured(
        "elasticity_rigid",
        ProblemKind::Elasticity,
        Some(lame),
        exact,
        Arc::new(|_| [0.0, 0.0]),
    )
}

/// Looks up a named problem.
pub fn problem_by_name(name: &str, dim: usize, lame: Lame) -> Result<ProblemSpec> {
    match name {
        "poisson" | "poisson_sine" => Ok(poisson_sine(dim)),
        "poisson_zero" => Ok(poisson_zero()),
        "elasticity" | "elasticity_divfree" => Ok(elasticity_divergence_free(lame)),
        "elasticity_compressible" => Ok(elasticity_compressible(lame)),
        "elasticity_rigid" => Ok(elasticity_rigid(lame, 0.3, -0.2, 0.5)),
        _ => {
            if let Some(d) = name.strip_prefix("poisson_poly") {
                let deg = d
                    .parse()
                    .map_err(|_| HhoError::Config(format!("unknown problem '{name}'")))?;
                return Ok(poisson_polynomial(deg, dim));
            }
            if let Some(d) = name.strip_prefix("elasticity_poly") {
                let deg = d
                    .parse()
                    .map_err(|_| HhoError::Config(format!("unknown problem '{name}'")))?;
                return Ok(elasticity_polynomial(lame, deg));
            }
            Err(HhoError::Config(format!(
                "unknown problem '{name}' (expected poisson, poisson_zero, poisson_polyN, elasticity, \
                 elasticity_compressible, elasticity_rigid or elasticity_polyN)"
            )))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FD: f64 = 1e-4;

    fn fd_gradient(f: &VectorFn, p: Point) -> [[f64; 2]; 2] {
        let mut g = [[0.0; 2]; 2];
        for d in 0..2 {
            let mut a = p;
            let mut b = p;
            a[d] += FD;
            b[d] -= FD;
            let (fa, fb) = (f(a), f(b));
            for c in 0..2 {
                g[c][d] = (fa[c] - fb[c]) / (2.0 * FD);
            }
        }
        g
    }

    /// `−div σ(u)` (elasticity) or `−Δu` (Poisson) by central differences of
    /// the exact gradient.
    fn fd_source(spec: &ProblemSpec, p: Point) -> [f64; 2] {
        let ex = spec.exact.as_ref().unwrap();
        let flux = |q: Point| -> [[f64; 2]; 2] {
            let g = (ex.gradient)(q);
            match spec.lame {
                Some(l) => stress(g, l.mu, l.lambda),
                None => g,
            }
        };
        let mut out = [0.0; 2];
        for d in 0..2 {
            let mut a = p;
            let mut b = p;
            a[d] += FD;
            b[d] -= FD;
            let (fa, fb) = (flux(a), flux(b));
            for c in 0..2 {
                out[c] -= (fa[c][d] - fb[c][d]) / (2.0 * FD);
            }
        }
        out
    }

    fn check(spec: &ProblemSpec) {
        let ex = spec.exact.as_ref().unwrap();
        for &p in &[[0.13, 0.71], [0.5, 0.5], [0.87, 0.29], [0.33, 0.05]] {
            let g = (ex.gradient)(p);
            let gf = fd_gradient(&ex.value, p);
            let s = (spec.source)(p);
            let sf = fd_source(spec, p);
            for c in 0..2 {
                for d in 0..2 {
                    assert!(
                        (g[c][d] - gf[c][d]).abs() < 1e-6 * (1.0 + g[c][d].abs()),
                        "{} gradient at {p:?}",
                        spec.id
                    );
                }
                assert!(
                    (s[c] - sf[c]).abs() < 1e-4 * (1.0 + s[c].abs()),
                    "{} source at {p:?}: {s:?} vs {sf:?}",
                    spec.id
                );
            }
        }
    }

    #[test]
    fn sources_match_finite_differences() {
        let lame = Lame::new(1.3, 2.1).unwrap();
        check(&poisson_sine(2));
        check(&poisson_polynomial(3, 2));
        check(&elasticity_divergence_free(lame));
        check(&elasticity_compressible(lame));
        check(&elasticity_polynomial(lame, 3));
        check(&elasticity_rigid(lame, 1.0, 2.0, 0.5));
    }

    #[test]
    fn divergence_free_field_has_zero_divergence() {
        let spec = elasticity_divergence_free(Lame::new(1.0, 1.0).unwrap());
        let g = spec.exact.unwrap().gradient;
        for &p in &[[0.1, 0.2], [0.7, 0.4], [0.45, 0.95]] {
            let v = g(p);
            assert!((v[0][0] + v[1][1]).abs() < 1e-12);
        }
    }

    #[test]
    fn manufactured_neumann_is_the_normal_flux() {
        let spec = poisson_sine(2);
        let g = (spec.neumann)([0.0, 0.5], [-1.0, 0.0]);
        assert!((g[0] + PI).abs() < 1e-12);
    }

    #[test]
    fn polynomial_derivatives() {
        let p = Polynomial {
            terms: vec![(2.0, 3, 1), (1.0, 0, 0)],
        };
        assert_eq!(p.derivative(1, 0).terms, vec![(6.0, 2, 1)]);
        assert_eq!(p.derivative(2, 1).terms, vec![(12.0, 1, 0)]);
        assert!(problem_by_name("nope", 2, Lame::new(1.0, 1.0).unwrap()).is_err());
        assert_eq!(
            problem_by_name("poisson_poly2", 2, Lame::new(1.0, 1.0).unwrap())
                .unwrap()
                .id,
            "poisson_poly2"
        );
    }
}
