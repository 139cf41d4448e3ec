//! Command layer: wires a JSON run configuration to the cell solves, the
//! time integrators, and the report files behind a small CLI.

pub mod config;
pub mod report;

pub use config::{load_config, Discretization, OutputConfig, RunConfig};
pub use report::{l2_spacetime_error, p1_l2_sq, ConvergenceReport, ConvergenceRow};

use std::ffi::OsString;
use std::fs;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::evolution::{solve_direct, solve_macro, NewmarkConfig, Trajectory};
use crate::mesh::{build_cell_mesh, build_macro_mesh, build_perforated_mesh, write_vtk, CellMesh};
use crate::model::{compute_effective_scalars, CoefficientModel, EffectiveScalars, HoleSpec};
use crate::multiscale::{
    build_micro_field, macro_tensor, macro_tensor_flux, micro_tensor, micro_tensor_flux,
    solve_meso_cell, tensor_table, EffectiveTensor, MesoCorrector, MicroCorrector, MicroField,
};
use crate::util::fmt_e12;
use crate::{Error, Result};

/// Everything the two cell problems produce: scalar cell averages, the
/// intermediate tensor field, one representative fine corrector, the coarse
/// corrector, and the limit tensor.
pub struct CellStage {
    pub scalars: EffectiveScalars,
    pub zmesh: CellMesh,
    pub ymesh: CellMesh,
    pub field: MicroField,
    pub micro: MicroCorrector,
    pub meso: MesoCorrector,
    pub tensor: EffectiveTensor,
    pub tensor_flux: EffectiveTensor,
}

fn tensor_gap(a: &EffectiveTensor, b: &EffectiveTensor) -> f64 {
    let mut gap: f64 = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            gap = gap.max((a.a[i][j] - b.a[i][j]).abs());
        }
    }
    gap
}

/// Runs both cell problems and cross-checks each tensor against its
/// flux-form companion. The two forms agree at the discrete corrector up to
/// the iterative-solver residual, so a gap beyond that bound means the
/// corrector solve went wrong — the stage refuses to hand the tensor on.
pub fn run_cell_stage(model: &CoefficientModel, disc: &Discretization) -> Result<CellStage> {
    let scalars = compute_effective_scalars(model, disc.quadrature_resolution)?;
    let zmesh = build_cell_mesh(&model.hole, disc.h_cell)?;
    let ymesh = build_cell_mesh(&HoleSpec::None, disc.h_cell)?;
    let (field, micro) = build_micro_field(model, &ymesh, &zmesh, disc.solver_tol)?;
    let meso = solve_meso_cell(&field, &ymesh, disc.solver_tol)?;
    let tensor = macro_tensor(&field, &ymesh, &meso);
    let tensor_flux = macro_tensor_flux(&field, &ymesh, &meso);
    tensor.validate("limit tensor")?;

    let micro_energy = micro_tensor(model, &zmesh, &micro);
    let micro_flux = micro_tensor_flux(model, &zmesh, &micro);
    for (name, energy, flux) in [
        ("fine-scale", &micro_energy, &micro_flux),
        ("limit", &tensor, &tensor_flux),
    ] {
        let scale = energy
            .a
            .iter()
            .flatten()
            .fold(1.0f64, |acc, v| acc.max(v.abs()));
        let gate = scale * (10.0 * disc.solver_tol).max(1e-7);
        let gap = tensor_gap(energy, flux);
        if gap > gate {
            return Err(Error::Solver(format!(
                "{name} tensor: energy form and flux form disagree by {} \
                 (allowed {}); corrector solve is suspect",
                fmt_e12(gap),
                fmt_e12(gate)
            )));
        }
    }
    Ok(CellStage {
        scalars,
        zmesh,
        ymesh,
        field,
        micro,
        meso,
        tensor,
        tensor_flux,
    })
}

fn ensure_out_dir(output: &OutputConfig) -> Result<PathBuf> {
    fs::create_dir_all(&output.directory)?;
    Ok(output.directory.clone())
}

fn print_tensor(label: &str, t: &EffectiveTensor) {
    println!(
        "{label}: [{} {}; {} {}]",
        fmt_e12(t.a[0][0]),
        fmt_e12(t.a[0][1]),
        fmt_e12(t.a[1][0]),
        fmt_e12(t.a[1][1])
    );
}

/// `cell`: cell averages, tensor field table, correctors.
pub fn cmd_cell(cfg: &RunConfig) -> Result<CellStage> {
    let stage = run_cell_stage(&cfg.model, &cfg.discretization)?;
    let out = ensure_out_dir(&cfg.output)?;
    if cfg.output.write_csv {
        let rows = tensor_table(&stage.field, &stage.ymesh)?;
        report::write_tensor_table(
            &out.join("tensors.csv"),
            &rows,
            &stage.tensor,
            &stage.tensor_flux,
        )?;
    }
    if cfg.output.write_vtk {
        write_vtk(
            &out.join("micro_corrector.vtk"),
            "fine-cell correctors",
            &stage.zmesh.mesh,
            &[("chi1", &stage.micro.chi[0]), ("chi2", &stage.micro.chi[1])],
        )?;
        write_vtk(
            &out.join("meso_corrector.vtk"),
            "coarse-cell correctors",
            &stage.ymesh.mesh,
            &[
                ("theta1", &stage.meso.theta[0]),
                ("theta2", &stage.meso.theta[1]),
            ],
        )?;
    }
    println!(
        "cell averages: |Z*| = {}, m_rho = {}, m_sqrt_rho = {}, m_beta = {}",
        fmt_e12(stage.scalars.z_star_measure),
        fmt_e12(stage.scalars.m_rho),
        fmt_e12(stage.scalars.m_sqrt_rho),
        fmt_e12(stage.scalars.m_beta)
    );
    print_tensor("limit tensor", &stage.tensor);
    Ok(stage)
}

/// `macro`: integrate the limit equation on the macroscopic box.
pub fn cmd_macro(cfg: &RunConfig) -> Result<Trajectory> {
    let stage = run_cell_stage(&cfg.model, &cfg.discretization)?;
    let disc = &cfg.discretization;
    let pmesh = build_macro_mesh(cfg.problem.domain, disc.h_macro)?;
    let ncfg = NewmarkConfig::new(disc.dt, cfg.problem.final_time, disc.snapshot_stride);
    let traj = solve_macro(
        &stage.scalars,
        &stage.tensor,
        &cfg.problem,
        &pmesh,
        &ncfg,
        disc.solver_tol,
    )?;
    let out = ensure_out_dir(&cfg.output)?;
    if cfg.output.write_csv {
        report::write_energy_csv(&out.join("energy.csv"), &traj.energy)?;
    }
    if cfg.output.write_vtk {
        report::write_snapshots(&out, "limit", &pmesh.mesh, &traj)?;
    }
    println!(
        "limit run: {} steps, final energy {}, identity defect {}",
        ncfg.n_steps(),
        fmt_e12(*traj.energy.energy.last().unwrap()),
        fmt_e12(traj.energy.identity_defect())
    );
    Ok(traj)
}

/// `direct`: integrate the resolved equation on one perforated mesh.
pub fn cmd_direct(cfg: &RunConfig, epsilon: Option<f64>) -> Result<Trajectory> {
    let disc = &cfg.discretization;
    let eps = epsilon.unwrap_or(disc.epsilons[0]);
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Config(format!("epsilon = {eps} outside (0, 1)")));
    }
    let h = disc.fine_spacing(eps);
    let dt = disc.fine_dt(eps);
    let pmesh = build_perforated_mesh(
        cfg.problem.domain,
        eps,
        &cfg.model.hole,
        h,
        disc.max_vertices,
    )?;
    let ncfg = NewmarkConfig::new(dt, cfg.problem.final_time, disc.snapshot_stride);
    let started = Instant::now();
    let traj = solve_direct(
        &cfg.model,
        &cfg.problem,
        &pmesh,
        &ncfg,
        disc.rho_min,
        disc.solver_tol,
    )?;
    let out = ensure_out_dir(&cfg.output)?;
    if cfg.output.write_csv {
        report::write_energy_csv(&out.join("direct_energy.csv"), &traj.energy)?;
    }
    if cfg.output.write_vtk {
        report::write_snapshots(&out, "direct", &pmesh.mesh, &traj)?;
    }
    println!(
        "resolved run: epsilon = {}, h = {}, dt = {}, {} vertices, {} holes, \
         identity defect {}, wall {:.1} s",
        fmt_e12(eps),
        fmt_e12(h),
        fmt_e12(dt),
        pmesh.mesh.vertices.len(),
        pmesh.hole_count,
        fmt_e12(traj.energy.identity_defect()),
        started.elapsed().as_secs_f64()
    );
    Ok(traj)
}

/// `compare`: resolved runs across all configured scales against the limit
/// run, with the error-vs-scale report. The limit trajectory is re-run per
/// scale at that scale's own time step so the snapshot stamps agree exactly;
/// the cell stage (the expensive part) is shared.
pub fn cmd_compare(cfg: &RunConfig, workers: Option<usize>) -> Result<ConvergenceReport> {
    if workers == Some(0) {
        return Err(Error::Config("workers must be at least 1".into()));
    }
    let disc = &cfg.discretization;
    let cell_started = Instant::now();
    let stage = run_cell_stage(&cfg.model, &cfg.discretization)?;
    print_tensor("limit tensor", &stage.tensor);
    println!("cell stage: {:.1} s", cell_started.elapsed().as_secs_f64());

    let lmesh = build_macro_mesh(cfg.problem.domain, disc.h_macro)?;
    let run_one = |eps: f64| -> Result<ConvergenceRow> {
        let started = Instant::now();
        let h = disc.fine_spacing(eps);
        let dt = disc.fine_dt(eps);
        let pmesh = build_perforated_mesh(
            cfg.problem.domain,
            eps,
            &cfg.model.hole,
            h,
            disc.max_vertices,
        )?;
        let ncfg = NewmarkConfig::new(dt, cfg.problem.final_time, disc.snapshot_stride);
        let resolved = solve_direct(
            &cfg.model,
            &cfg.problem,
            &pmesh,
            &ncfg,
            disc.rho_min,
            disc.solver_tol,
        )?;
        let limit = solve_macro(
            &stage.scalars,
            &stage.tensor,
            &cfg.problem,
            &lmesh,
            &ncfg,
            disc.solver_tol,
        )?;
        let error = l2_spacetime_error(&resolved, &pmesh.mesh, &limit, &lmesh.mesh)?;
        Ok(ConvergenceRow {
            epsilon: eps,
            h,
            dt,
            dofs: pmesh.mesh.vertices.len() - pmesh.dirichlet.len(),
            error,
            wall_seconds: started.elapsed().as_secs_f64(),
        })
    };
    let rows: Result<Vec<ConvergenceRow>> = match workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build()
            .map_err(|e| Error::Solver(format!("cannot build worker pool: {e}")))?
            .install(|| disc.epsilons.par_iter().map(|&e| run_one(e)).collect()),
        None => disc.epsilons.par_iter().map(|&e| run_one(e)).collect(),
    };
    let report = ConvergenceReport { rows: rows? };

    for r in &report.rows {
        println!(
            "epsilon = {}: error = {}, dofs = {}, wall {:.1} s",
            fmt_e12(r.epsilon),
            fmt_e12(r.error),
            r.dofs,
            r.wall_seconds
        );
    }
    println!("verdict: {}", report.verdict());
    if cfg.output.write_csv {
        let out = ensure_out_dir(&cfg.output)?;
        report::write_convergence(&out, &report)?;
    }
    Ok(report)
}

#[derive(Parser)]
#[command(
    name = "porohom",
    version,
    about = "cell problems, effective tensors, and resolved-vs-limit wave runs \
             for media oscillating on two nested scales with tiny holes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Path to the JSON run configuration
    #[arg(long)]
    config: PathBuf,
    /// Override the configured output directory
    #[arg(long)]
    out: Option<PathBuf>,
}

impl CommonArgs {
    fn load(&self) -> Result<RunConfig> {
        let mut cfg = load_config(&self.config)?;
        if let Some(dir) = &self.out {
            cfg.output.directory = dir.clone();
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Solve both cell problems and write the tensor table
    Cell(CommonArgs),
    /// Integrate the limit equation on the macroscopic domain
    Macro(CommonArgs),
    /// Integrate the resolved equation on one perforated mesh
    Direct {
        #[command(flatten)]
        common: CommonArgs,
        /// Oscillation scale (defaults to the first configured one)
        #[arg(long)]
        epsilon: Option<f64>,
    },
    /// Run every configured scale and report error versus scale
    Compare {
        #[command(flatten)]
        common: CommonArgs,
        /// Cap on concurrently running scales
        #[arg(long)]
        workers: Option<usize>,
    },
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Cell(common) => {
            cmd_cell(&common.load()?)?;
        }
        Command::Macro(common) => {
            cmd_macro(&common.load()?)?;
        }
        Command::Direct { common, epsilon } => {
            cmd_direct(&common.load()?, epsilon)?;
        }
        Command::Compare { common, workers } => {
            cmd_compare(&common.load()?, workers)?;
        }
    }
    Ok(())
}

/// CLI entry point. Exit codes: 0 success, 2 usage/model errors, 3 runtime
/// failures.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // --help and --version arrive here too; they are not failures
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
