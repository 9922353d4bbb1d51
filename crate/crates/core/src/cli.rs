//! Command-line front end: configuration (JSON file and flags), mesh
//! selection, and report emission for the `hho` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::assembly::{SolverKind, SolverOptions};
use crate::context::{ContextOptions, HhoDegrees};
use crate::elasticity_operators::Lame;
use crate::error::{HhoError, Result};
use crate::harness::{
    convergence_study_on, discrete_energy, error_norms, family_mesh, flux_check, locking_test,
    oracle_1d, solve_problem, verify_operators, FamilyKind, MeshFamily, SolveOptions,
    VerificationTarget,
};
use crate::mesh::{
    build_hanging_node_mesh, build_interval_mesh, build_structured_mesh, refine_uniform, CellShape,
    Mesh, Rectangle,
};
use crate::problems::{problem_by_name, ProblemKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DegreeMode {
    /// Cell degree equal to the face degree.
    Equal,
    /// Cell degree one above the face degree.
    Plus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverArg {
    Direct,
    Cg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetArg {
    Sin,
    Poly,
}

#[derive(Debug, Parser)]
#[command(
    name = "hho",
    about = "Hybrid High-Order solver for Poisson and linear elasticity"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve one problem on one mesh.
    Solve(Flags),
    /// Run a convergence study on a refined mesh sequence.
    Converge(Flags),
    /// Decay rates of projections, reconstruction and stabilizations.
    Verify(Flags),
    /// Compare the 1D condensed system with the P1 finite element system.
    Oracle1d(Flags),
    /// Elasticity errors for several λ/μ ratios.
    Locking(Flags),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Solve(_) => "solve",
            Command::Converge(_) => "converge",
            Command::Verify(_) => "verify",
            Command::Oracle1d(_) => "oracle1d",
            Command::Locking(_) => "locking",
        }
    }

    fn flags(&self) -> &Flags {
        match self {
            Command::Solve(f)
            | Command::Converge(f)
            | Command::Verify(f)
            | Command::Oracle1d(f)
            | Command::Locking(f) => f,
        }
    }
}

/// Options shared by all subcommands. Every key can also be given in a JSON
/// file passed with `--config`; flags take precedence.
#[derive(Debug, Clone, Default, clap::Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Flags {
    /// JSON configuration file.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Mesh file in JSON format.
    #[arg(long)]
    pub mesh: Option<PathBuf>,
    /// Mesh generator: quad:NX:NY, tri:NX:NY, interval:N or hanging:NX:NY:c1,c2,...
    #[arg(long)]
    pub gen: Option<String>,
    /// Face degree k.
    #[arg(long)]
    pub k: Option<usize>,
    /// Cell degree: equal (k' = k) or plus (k' = k + 1).
    #[arg(long, value_enum)]
    pub mode: Option<DegreeMode>,
    /// Problem name (poisson, poisson_zero, poisson_polyN, elasticity,
    /// elasticity_compressible, elasticity_rigid, elasticity_polyN).
    #[arg(long)]
    pub problem: Option<String>,
    /// Number of refinement levels.
    #[arg(long)]
    pub levels: Option<usize>,
    /// Explicit mesh sizes of a generated family (overrides --levels).
    #[arg(long, value_delimiter = ',')]
    pub sizes: Option<Vec<usize>>,
    /// Output directory (reports go to stdout when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub solver: Option<SolverArg>,
    /// Relative residual target of the iterative solver.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub threads: Option<usize>,
    /// Number of cells of the 1D oracle mesh.
    #[arg(long)]
    pub n: Option<usize>,
    /// Verification target.
    #[arg(long, value_enum)]
    pub target: Option<TargetArg>,
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    /// λ/μ ratios of the locking study.
    #[arg(long, value_delimiter = ',')]
    pub ratios: Option<Vec<f64>>,
    /// Orthonormalize the cell bases.
    #[arg(long)]
    pub orthonormal: Option<bool>,
    /// Also write the reduced matrix in coordinate format (solve only).
    #[arg(long)]
    pub export_matrix: Option<bool>,
}

macro_rules! merge_fields {
    ($a:expr, $b:expr, $($f:ident),*) => {
        Flags { config: $a.config.clone(), $($f: $a.$f.clone().or($b.$f.clone())),* }
    };
}

impl Flags {
    /// Values of `self` override those of `file`.
    pub fn merged_with(&self, file: &Flags) -> Flags {
        merge_fields!(
            self,
            file,
            mesh,
            gen,
            k,
            mode,
            problem,
            levels,
            sizes,
            out,
            solver,
            tol,
            threads,
            n,
            target,
            mu,
            lambda,
            ratios,
            orthonormal,
            export_matrix
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CommandKind {
    Solve,
    Converge,
    Verify,
    Oracle1d,
    Locking,
}

/// Mesh source after validation.
#[derive(Debug, Clone, PartialEq)]
pub enum MeshSource {
    File(PathBuf),
    Generator(GeneratorSpec),
    /// Interval `(0, 1)` with `n` cells and vertices `(i/n)^1.5`.
    GradedInterval(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub enum GeneratorSpec {
    Quad(usize, usize),
    Tri(usize, usize),
    Interval(usize),
    Hanging(usize, usize, Vec<usize>),
}

pub fn parse_generator(s: &str) -> Result<GeneratorSpec> {
    let parts: Vec<&str> = s.split(':').collect();
    let num = |t: &str| -> Result<usize> {
        t.parse::<usize>().ok().filter(|&v| v > 0).ok_or_else(|| {
            HhoError::Config(format!("--gen '{s}': '{t}' is not a positive integer"))
        })
    };
    match parts.as_slice() {
        ["quad", nx, ny] => Ok(GeneratorSpec::Quad(num(nx)?, num(ny)?)),
        ["tri", nx, ny] => Ok(GeneratorSpec::Tri(num(nx)?, num(ny)?)),
        ["interval", n] => Ok(GeneratorSpec::Interval(num(n)?)),
        ["hanging", nx, ny, cells] => {
            let list = cells
                .split(',')
                .filter(|c| !c.is_empty())
                .map(|c| {
                    c.parse::<usize>()
                        .map_err(|_| HhoError::Config(format!("--gen '{s}': bad cell index '{c}'")))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(GeneratorSpec::Hanging(num(nx)?, num(ny)?, list))
        }
        _ => Err(HhoError::Config(format!(
            "--gen '{s}' not understood; expected quad:NX:NY, tri:NX:NY, interval:N or hanging:NX:NY:cells"
        ))),
    }
}

impl GeneratorSpec {
    pub fn build(&self) -> Result<Mesh> {
        match self {
            GeneratorSpec::Quad(nx, ny) => {
                build_structured_mesh(CellShape::Quad, *nx, *ny, Rectangle::UNIT)
            }
            GeneratorSpec::Tri(nx, ny) => {
                build_structured_mesh(CellShape::Tri, *nx, *ny, Rectangle::UNIT)
            }
            GeneratorSpec::Interval(n) => build_interval_mesh(0.0, 1.0, *n, None),
            GeneratorSpec::Hanging(nx, ny, cells) => {
                let base = build_structured_mesh(CellShape::Quad, *nx, *ny, Rectangle::UNIT)?;
                build_hanging_node_mesh(&base, cells)
            }
        }
    }

    /// Family kind and base size for studies on generated meshes.
    fn family(&self) -> Result<(FamilyKind, usize)> {
        let square = |nx: usize, ny: usize| {
            if nx == ny {
                Ok(nx)
            } else {
                Err(HhoError::Config(format!(
                    "mesh families need NX = NY, got {nx}×{ny}"
                )))
            }
        };
        Ok(match self {
            GeneratorSpec::Quad(nx, ny) => (FamilyKind::Quad, square(*nx, *ny)?),
            GeneratorSpec::Tri(nx, ny) => (FamilyKind::Tri, square(*nx, *ny)?),
            GeneratorSpec::Interval(n) => (FamilyKind::Interval, *n),
            GeneratorSpec::Hanging(nx, ny, _) => (FamilyKind::Hanging, square(*nx, *ny)?),
        })
    }
}

/// Validated configuration with defaults applied.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: CommandKind,
    pub mesh: MeshSource,
    pub k: usize,
    /// Degrees for `verify` when `--k` is not given.
    pub k_list: Vec<usize>,
    pub mode: DegreeMode,
    pub problem: String,
    pub levels: usize,
    pub sizes: Option<Vec<usize>>,
    pub out: Option<PathBuf>,
    pub solver: SolverOptions,
    pub threads: Option<usize>,
    pub n: usize,
    pub target: TargetArg,
    pub lame: Lame,
    pub ratios: Vec<f64>,
    pub orthonormal: bool,
    pub export_matrix: bool,
}

impl RunConfig {
    pub fn degrees(&self) -> HhoDegrees {
        match self.mode {
            DegreeMode::Equal => HhoDegrees::equal(self.k),
            DegreeMode::Plus => HhoDegrees::mixed(self.k),
        }
    }

    pub fn solve_options(&self) -> SolveOptions {
        SolveOptions {
            context: ContextOptions {
                orthonormal: self.orthonormal,
            },
            solver: self.solver,
        }
    }
}

/// Reads the optional config file and merges it under the flags.
pub fn parse_config(command: &Command) -> Result<RunConfig> {
    let flags = command.flags();
    let merged = match &flags.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| {
                HhoError::Config(format!("cannot read config {}: {e}", path.display()))
            })?;
            let file: Flags = serde_json::from_str(&text)
                .map_err(|e| HhoError::Config(format!("config {}: {e}", path.display())))?;
            flags.merged_with(&file)
        }
        None => flags.clone(),
    };
    resolve(command.name(), &merged)
}

/// Applies defaults and validates a merged flag set.
pub fn resolve(command: &str, f: &Flags) -> Result<RunConfig> {
    let command = match command {
        "solve" => CommandKind::Solve,
        "converge" => CommandKind::Converge,
        "verify" => CommandKind::Verify,
        "oracle1d" => CommandKind::Oracle1d,
        "locking" => CommandKind::Locking,
        other => return Err(HhoError::Config(format!("unknown command '{other}'"))),
    };
    let default_gen = match command {
        CommandKind::Locking => "tri:8:8",
        _ => "quad:8:8",
    };
    let mesh = match (&f.mesh, &f.gen) {
        (Some(p), _) => MeshSource::File(p.clone()),
        (None, Some(g)) => MeshSource::Generator(parse_generator(g)?),
        (None, None) if command == CommandKind::Oracle1d => {
            MeshSource::GradedInterval(f.n.unwrap_or(32))
        }
        (None, None) => MeshSource::Generator(parse_generator(default_gen)?),
    };
    let problem = f.problem.clone().unwrap_or_else(|| {
        if command == CommandKind::Locking {
            "elasticity"
        } else {
            "poisson"
        }
        .to_string()
    });
    let k = f.k.unwrap_or(1);
    let k_list = match (command, f.k) {
        (CommandKind::Verify, None) => vec![0, 1, 2],
        _ => vec![k],
    };
    let mode = f.mode.unwrap_or(DegreeMode::Equal);
    let elastic = problem.starts_with("elasticity") || command == CommandKind::Locking;
    if elastic && k == 0 {
        return Err(HhoError::Config(
            "elasticity requires face degree k ≥ 1 (got k = 0); pass --k 1 or higher".into(),
        ));
    }
    let cap = crate::basis::DEFAULT_DEGREE_CAP;
    let kc = if mode == DegreeMode::Plus { k + 1 } else { k };
    if k + 1 > cap || kc > cap {
        return Err(HhoError::Config(format!(
            "degree k = {k} with mode {mode:?} exceeds the degree cap {cap} of the reconstruction basis"
        )));
    }
    if command == CommandKind::Locking && mode == DegreeMode::Plus {
        return Err(HhoError::Config(
            "the locking study uses equal-order degrees; drop --mode plus".into(),
        ));
    }
    let levels = f.levels.unwrap_or(4);
    if matches!(
        command,
        CommandKind::Converge | CommandKind::Verify | CommandKind::Locking
    ) {
        let n = f.sizes.as_ref().map_or(levels, |s| s.len());
        if n < 4 {
            return Err(HhoError::Config(format!(
                "studies need at least 4 levels, got {n}"
            )));
        }
    }
    let tol = f.tol.unwrap_or(1e-12);
    if !(tol > 0.0) {
        return Err(HhoError::Config(format!(
            "--tol must be positive, got {tol}"
        )));
    }
    let solver = SolverOptions {
        kind: match f.solver.unwrap_or(SolverArg::Direct) {
            SolverArg::Direct => SolverKind::Direct,
            SolverArg::Cg => SolverKind::Cg,
        },
        tol,
        ..SolverOptions::default()
    };
    let lame = Lame::new(f.mu.unwrap_or(1.0), f.lambda.unwrap_or(1.0))
        .map_err(|e| HhoError::Config(e.to_string()))?;
    if f.threads == Some(0) {
        return Err(HhoError::Config("--threads must be at least 1".into()));
    }
    Ok(RunConfig {
        command,
        mesh,
        k,
        k_list,
        mode,
        problem,
        levels,
        sizes: f.sizes.clone(),
        out: f.out.clone(),
        solver,
        threads: f.threads,
        n: f.n.unwrap_or(32),
        target: f.target.unwrap_or(TargetArg::Sin),
        lame,
        ratios: f.ratios.clone().unwrap_or_else(|| vec![1.0, 1e2, 1e4]),
        orthonormal: f.orthonormal.unwrap_or(false),
        export_matrix: f.export_matrix.unwrap_or(false),
    })
}

/// Outcome of a run: report files written and the first failed check.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub files: Vec<PathBuf>,
    pub failure: Option<String>,
}

struct Output {
    dir: Option<PathBuf>,
    files: Vec<PathBuf>,
}

impl Output {
    fn new(dir: Option<PathBuf>) -> Result<Self> {
        if let Some(d) = &dir {
            fs::create_dir_all(d)?;
        }
        Ok(Output {
            dir,
            files: Vec::new(),
        })
    }

    fn emit(&mut self, name: &str, content: &str) -> Result<()> {
        match &self.dir {
            Some(d) => {
                let p = d.join(name);
                fs::write(&p, content)?;
                self.files.push(p);
            }
            None => print!("{content}"),
        }
        Ok(())
    }
}

fn json_text(v: &impl Serialize) -> Result<String> {
    Ok(serde_json::to_string_pretty(v)? + "\n")
}

fn load_mesh(source: &MeshSource) -> Result<Mesh> {
    match source {
        MeshSource::File(p) => Mesh::from_json_str(
            &fs::read_to_string(p)
                .map_err(|e| HhoError::Config(format!("cannot read mesh {}: {e}", p.display())))?,
        ),
        MeshSource::Generator(g) => g.build(),
        MeshSource::GradedInterval(n) => build_interval_mesh(0.0, 1.0, *n, Some(ORACLE_GRADING)),
    }
}

fn study_family(cfg: &RunConfig) -> Result<Option<MeshFamily>> {
    match &cfg.mesh {
        MeshSource::File(_) | MeshSource::GradedInterval(_) => Ok(None),
        MeshSource::Generator(g) => {
            let (kind, base) = g.family()?;
            Ok(Some(match &cfg.sizes {
                Some(s) => MeshFamily::new(kind, s),
                None => MeshFamily::doubling(kind, base, cfg.levels),
            }))
        }
    }
}

/// Meshes of a study: a generated family, or uniform refinements of a file mesh.
fn study_meshes(cfg: &RunConfig) -> Result<(Vec<Mesh>, String)> {
    match study_family(cfg)? {
        Some(fam) => {
            let meshes = fam
                .sizes
                .iter()
                .map(|&n| family_mesh(fam.kind, n))
                .collect::<Result<_>>()?;
            Ok((meshes, fam.describe()))
        }
        None => {
            let mut meshes = vec![load_mesh(&cfg.mesh)?];
            for _ in 1..cfg.levels {
                let next = refine_uniform(meshes.last().unwrap())?;
                meshes.push(next);
            }
            let label = match &cfg.mesh {
                MeshSource::File(p) => format!("file:{}", p.display()),
                _ => "graded_interval".to_string(),
            };
            Ok((meshes, format!("{label}+{}", cfg.levels - 1)))
        }
    }
}

fn first_failed(checks: impl IntoIterator<Item = (String, bool)>) -> Option<String> {
    checks.into_iter().find(|(_, pass)| !pass).map(|(n, _)| n)
}

/// Executes a validated configuration, writing reports.
pub fn run(cfg: &RunConfig) -> Result<RunOutcome> {
    let mut out = Output::new(cfg.out.clone())?;
    let options = cfg.solve_options();
    let failure = match cfg.command {
        CommandKind::Solve => {
            let mesh = load_mesh(&cfg.mesh)?;
            let spec = problem_by_name(&cfg.problem, mesh.dim(), cfg.lame)?;
            let sol = solve_problem(&mesh, cfg.degrees(), &spec, &options)?;
            let errors = match &spec.exact {
                Some(ex) => Some(error_norms(&mesh, &sol.discrete, &sol.field, ex)?),
                None => None,
            };
            let flux = match spec.kind {
                ProblemKind::Poisson => Some(flux_check(&mesh, &sol)?),
                ProblemKind::Elasticity => None,
            };
            let energy = discrete_energy(&mesh, &sol.discrete, &sol.field);
            let residual_ok = sol.report.relative_residual <= 1e-11;
            let report = json!({
                "command": "solve",
                "problem": spec.id,
                "k_face": sol.discrete.degrees.k_face,
                "k_cell": sol.discrete.degrees.k_cell,
                "cells": mesh.num_cells(),
                "faces": mesh.num_faces(),
                "unknowns": sol.discrete.map.reduced_size(),
                "hybrid_dimension": sol.discrete.map.hybrid_dimension(),
                "relative_residual": sol.report.relative_residual,
                "iterations": sol.report.iterations,
                "energy": energy,
                "errors": errors,
                "flux": flux,
                "pass": residual_ok,
                "cell_coefficients": sol.field.cells.iter().map(|c| c.as_slice().to_vec()).collect::<Vec<_>>(),
                "face_coefficients": sol.field.faces.iter().map(|c| c.as_slice().to_vec()).collect::<Vec<_>>(),
            });
            out.emit("solution.json", &json_text(&report)?)?;
            if cfg.export_matrix {
                let mut buf = Vec::new();
                sol.reduced.matrix.write_coordinate(&mut buf)?;
                out.emit("matrix.txt", &String::from_utf8_lossy(&buf))?;
            }
            first_failed([("relative_residual ≤ 1e-11".to_string(), residual_ok)])
        }
        CommandKind::Converge => {
            let (meshes, label) = study_meshes(cfg)?;
            let spec = problem_by_name(&cfg.problem, meshes[0].dim(), cfg.lame)?;
            let report = convergence_study_on(&spec, &meshes, &label, cfg.degrees(), &options)?;
            out.emit("convergence.csv", &report.to_csv())?;
            out.emit("convergence.json", &json_text(&report)?)?;
            first_failed(report.checks.iter().map(|c| {
                (
                    format!("{} = {:?} outside [{}, {}]", c.name, c.value, c.min, c.max),
                    c.pass,
                )
            }))
        }
        CommandKind::Verify => {
            let fam = study_family(cfg)?.ok_or_else(|| {
                HhoError::Config("verify needs a generated mesh family (--gen)".into())
            })?;
            let target = match cfg.target {
                TargetArg::Sin => VerificationTarget::Sin,
                TargetArg::Poly => VerificationTarget::Poly,
            };
            let report = verify_operators(&fam, &cfg.k_list, target)?;
            out.emit("verification.json", &json_text(&report)?)?;
            first_failed(report.blocks.iter().map(|b| {
                (
                    format!(
                        "{} (k = {}): rate {:?}, expected {:?} ± {}",
                        b.name, b.k, b.rate, b.expected, b.tolerance
                    ),
                    b.pass,
                )
            }))
        }
        CommandKind::Oracle1d => {
            let mesh = load_mesh(&cfg.mesh)?;
            let f: crate::harness::ScalarFn = Arc::new(oracle_source);
            let report = oracle_1d(&mesh, cfg.k, f)?;
            out.emit("oracle1d.json", &json_text(&report)?)?;
            first_failed([
                (
                    format!(
                        "matrix deviation {:e} > {:e}",
                        report.matrix_deviation, report.tolerance
                    ),
                    report.matrix_deviation <= report.tolerance,
                ),
                (
                    format!(
                        "rhs deviation {:e} > {:e}",
                        report.rhs_deviation, report.tolerance
                    ),
                    cfg.k == 0 || report.rhs_deviation <= report.tolerance,
                ),
                (
                    format!(
                        "cell recovery deviation {:?} > {:e}",
                        report.recovery_deviation, report.tolerance
                    ),
                    report
                        .recovery_deviation
                        .is_none_or(|d| d <= report.tolerance),
                ),
            ])
        }
        CommandKind::Locking => {
            let fam = study_family(cfg)?.ok_or_else(|| {
                HhoError::Config("locking needs a generated mesh family (--gen)".into())
            })?;
            let report = locking_test(cfg.lame.mu, &cfg.ratios, cfg.k, &fam, &options)?;
            let mut csv = String::from("ratio,level,h,err_strain,rate\n");
            for (r, s) in cfg.ratios.iter().zip(&report.studies) {
                for row in &s.rows {
                    csv.push_str(&format!(
                        "{r:e},{},{:.6e},{:.6e},{}\n",
                        row.level,
                        row.h,
                        row.err_h1,
                        row.rate_h1.map_or(String::new(), |v| format!("{v:.6}"))
                    ));
                }
            }
            out.emit("locking.csv", &csv)?;
            out.emit("locking.json", &json_text(&report)?)?;
            let mut checks: Vec<(String, bool)> = report
                .studies
                .iter()
                .zip(&cfg.ratios)
                .flat_map(|(s, r)| {
                    s.checks.iter().map(move |c| {
                        (
                            format!(
                                "λ/μ = {r:e}: {} = {:?} outside [{}, {}]",
                                c.name, c.value, c.min, c.max
                            ),
                            c.pass,
                        )
                    })
                })
                .collect();
            checks.push((
                format!("error ratio {:.3} > {}", report.ratio, report.max_ratio),
                report.ratio <= report.max_ratio,
            ));
            first_failed(checks)
        }
    };
    Ok(RunOutcome {
        files: out.files,
        failure,
    })
}

pub const ORACLE_GRADING: f64 = 1.5;

/// Source of the 1D oracle: `π² sin(πx) + eˣ`.
pub fn oracle_source(x: f64) -> f64 {
    std::f64::consts::PI.powi(2) * (std::f64::consts::PI * x).sin() + x.exp()
}

/// Parses arguments, runs, and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let cfg = match parse_config(&cli.command) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    faer::set_global_parallelism(faer::Par::Seq);
    let result = match cfg.threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| run(&cfg)),
            Err(e) => Err(HhoError::Config(format!("cannot start {n} threads: {e}"))),
        },
        None => run(&cfg),
    };
    match result {
        Ok(RunOutcome {
            failure: None,
            files,
        }) => {
            for f in files {
                eprintln!("wrote {}", f.display());
            }
            0
        }
        Ok(RunOutcome {
            failure: Some(msg), ..
        }) => {
            eprintln!("check failed: {msg}");
            1
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

/// Writes a mesh to a JSON file.
pub fn write_mesh(mesh: &Mesh, path: &Path) -> Result<()> {
    fs::write(path, mesh.to_json_string()?)?;
    Ok(())
}
