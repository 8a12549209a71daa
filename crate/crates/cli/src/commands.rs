//! The work behind each subcommand, independent of argument parsing.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use fehomog_core::newton::reference_matrix;
use fehomog_core::precond::BlockKind;
use fehomog_core::{
    assemble_reference, compare_db_sb, condition_estimate, eigenvalue_bounds, BoundSequences, Clock, Comparison,
    FftBackend, SolveReport, Solver, Termination, Weighting,
};
use serde::Serialize;
use thiserror::Error;

use crate::output::{fmt_f64, gradient_labels, write_csv, write_dump, FieldKind, Sidecar};
use crate::problem::{LoadError, Problem, ProblemError};

/// Why a command stopped early; each variant has its own exit code.
#[derive(Debug, Error)]
pub enum Failure {
    #[error("invalid problem: {0}")]
    Validation(#[from] ProblemError),
    #[error("{context}: {source}")]
    Io { context: String, source: io::Error },
    #[error("not converged: {0}")]
    NonConvergence(String),
    #[error("numerical failure: {0}")]
    Numerical(fehomog_core::Error),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Io { .. } => 1,
            Failure::Validation(_) => 2,
            Failure::NonConvergence(_) => 3,
            Failure::Numerical(_) => 4,
        }
    }
}

impl From<LoadError> for Failure {
    fn from(e: LoadError) -> Self {
        match e {
            LoadError::Io { path, source } => Failure::Io {
                context: path.display().to_string(),
                source,
            },
            LoadError::Invalid(e) => Failure::Validation(e),
        }
    }
}

fn numerical(e: fehomog_core::Error) -> Failure {
    match e {
        fehomog_core::Error::UnequalWeights => {
            Failure::Validation(ProblemError::Cell("comparison needs a stencil with equal quadrature weights".into()))
        }
        other => Failure::Numerical(other),
    }
}

fn io_at(path: &Path) -> impl FnOnce(io::Error) -> Failure + '_ {
    move |source| Failure::Io {
        context: path.display().to_string(),
        source,
    }
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(io_at(dir))
}

/// What `solve` leaves behind besides its files.
#[derive(Clone, Debug)]
pub struct SolveSummary {
    pub report: SolveReport,
    /// Volume averages of gradient and flux per completed load step.
    pub average_gradient: Vec<Vec<f64>>,
    pub average_flux: Vec<Vec<f64>>,
    pub step_dirs: Vec<PathBuf>,
}

#[derive(Serialize)]
struct SummaryJson<'a> {
    converged: bool,
    load_steps: usize,
    assemblies: usize,
    terminations: Vec<&'a str>,
    seconds_constitutive: f64,
    seconds_assembly: f64,
    seconds_linear_solve: f64,
    seconds_total: f64,
}

/// Runs the load program and writes per-step field dumps,
/// `averages.csv`, `report.csv` and `summary.json` into `out`.
pub fn solve(problem: &Problem, out: &Path, backend: &dyn FftBackend, clock: &dyn Clock) -> Result<SolveSummary, Failure> {
    let disc = &problem.disc;
    let mut solver = Solver::new(disc, &problem.materials, problem.config.clone(), backend, clock).map_err(numerical)?;
    create_dir(out)?;
    let labels = gradient_labels(disc);
    let mut summary = SolveSummary {
        report: SolveReport::default(),
        average_gradient: Vec::new(),
        average_flux: Vec::new(),
        step_dirs: Vec::new(),
    };
    let mut failure = None;
    for (k, load) in problem.loads.iter().enumerate() {
        let step = match solver.step(load) {
            Ok(s) => s,
            Err(e) => {
                failure = Some(numerical(e));
                break;
            }
        };
        let dir = out.join(format!("step-{:03}", k + 1));
        create_dir(&dir)?;
        for (name, kind, values) in [
            ("fluctuation", FieldKind::Fluctuation, solver.fluctuation().as_slice()),
            ("gradient", FieldKind::Gradient, solver.strain().as_slice()),
            ("flux", FieldKind::Flux, solver.stress().as_slice()),
        ] {
            write_dump(&dir, &Sidecar::for_field(disc, name, kind), values).map_err(io_at(&dir))?;
        }
        summary.average_gradient.push(disc.volume_average(solver.strain()).map_err(numerical)?);
        summary.average_flux.push(step.average_stress.clone());
        summary.step_dirs.push(dir);
        if step.termination != Termination::Converged {
            failure = Some(Failure::NonConvergence(format!(
                "load step {} ended with {} after {} Newton iterations",
                k + 1,
                step.termination.name(),
                step.newton_iterations()
            )));
            break;
        }
    }
    summary.report = solver.report().clone();

    let mut header = vec!["load_step".to_string(), "termination".to_string()];
    header.extend(labels.iter().map(|l| format!("gradient_{l}")));
    header.extend(labels.iter().map(|l| format!("flux_{l}")));
    let rows: Vec<Vec<String>> = summary
        .report
        .load_steps
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let mut row = vec![(k + 1).to_string(), s.termination.name().to_string()];
            row.extend(summary.average_gradient[k].iter().map(|v| fmt_f64(*v)));
            row.extend(summary.average_flux[k].iter().map(|v| fmt_f64(*v)));
            row
        })
        .collect();
    let path = out.join("averages.csv");
    write_csv(&path, &header, &rows).map_err(io_at(&path))?;

    let header: Vec<String> = [
        "load_step",
        "newton_step",
        "cg_iterations",
        "cg_converged",
        "residual_initial",
        "residual_final",
        "increment_ratio",
        "reassembled",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let mut rows = Vec::new();
    for (k, s) in summary.report.load_steps.iter().enumerate() {
        for (i, n) in s.steps.iter().enumerate() {
            rows.push(vec![
                (k + 1).to_string(),
                (i + 1).to_string(),
                n.cg_iterations.to_string(),
                n.cg_converged.to_string(),
                fmt_f64(n.residual_initial),
                fmt_f64(n.residual_final),
                fmt_f64(n.increment_ratio),
                n.reassembled.to_string(),
            ]);
        }
    }
    let path = out.join("report.csv");
    write_csv(&path, &header, &rows).map_err(io_at(&path))?;

    let r = &summary.report;
    let json = SummaryJson {
        converged: failure.is_none(),
        load_steps: r.load_steps.len(),
        assemblies: r.assemblies,
        terminations: r.load_steps.iter().map(|s| s.termination.name()).collect(),
        seconds_constitutive: r.times.constitutive,
        seconds_assembly: r.times.assembly,
        seconds_linear_solve: r.times.linear_solve,
        seconds_total: r.times.total,
    };
    let path = out.join("summary.json");
    fs::write(&path, serde_json::to_string_pretty(&json).expect("summary serialises") + "\n").map_err(io_at(&path))?;

    match failure {
        Some(f) => Err(f),
        None => Ok(summary),
    }
}

/// Bound sequences at the initial tangent and the configured reference.
pub fn bounds(problem: &Problem) -> Result<(BoundSequences, f64), Failure> {
    let disc = &problem.disc;
    let tangent = problem.materials.initial_tangent(disc);
    let c_ref = reference_matrix(&problem.config.reference, disc, &tangent);
    let b = eigenvalue_bounds(disc, &tangent, &c_ref).map_err(numerical)?;
    let kappa = condition_estimate(&b);
    Ok((b, kappa))
}

pub fn bounds_csv(b: &BoundSequences) -> (Vec<String>, Vec<Vec<String>>) {
    let header = vec!["index".into(), "lower".into(), "upper".into()];
    let rows = b
        .lower
        .iter()
        .zip(&b.upper)
        .enumerate()
        .map(|(i, (l, u))| vec![i.to_string(), fmt_f64(*l), fmt_f64(*u)])
        .collect();
    (header, rows)
}

/// Runs both schemes over the load program.
pub fn compare(problem: &Problem, backend: &dyn FftBackend) -> Result<Comparison, Failure> {
    compare_db_sb(&problem.disc, &problem.materials, &problem.loads, &problem.config, backend).map_err(numerical)
}

/// One row per Newton step of each load step.
pub fn compare_csv(c: &Comparison) -> (Vec<String>, Vec<Vec<String>>) {
    let header: Vec<String> = [
        "load_step",
        "newton_step",
        "db_newton",
        "sb_newton",
        "db_cg",
        "sb_cg",
        "fluctuation_discrepancy",
        "strain_discrepancy",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let mut rows = Vec::new();
    for (k, (a, b)) in c.db.load_steps.iter().zip(&c.sb.load_steps).enumerate() {
        let n = a.steps.len().max(b.steps.len());
        let cg = |s: &fehomog_core::LoadStepReport, i: usize| s.steps.get(i).map_or(String::new(), |x| x.cg_iterations.to_string());
        for i in 0..n {
            rows.push(vec![
                (k + 1).to_string(),
                (i + 1).to_string(),
                a.newton_iterations().to_string(),
                b.newton_iterations().to_string(),
                cg(a, i),
                cg(b, i),
                fmt_f64(c.fluctuation_discrepancy[k]),
                fmt_f64(c.strain_discrepancy[k]),
            ]);
        }
    }
    (header, rows)
}

/// Frequency-block diagnostics of the reference preconditioner at the
/// initial tangent: eigenvalue range and Hermitian defect per frequency.
pub fn probe_precond(problem: &Problem, backend: &dyn FftBackend) -> Result<(Vec<String>, Vec<Vec<String>>, String), Failure> {
    let disc = &problem.disc;
    let tangent = problem.materials.initial_tangent(disc);
    let c_ref = reference_matrix(&problem.config.reference, disc, &tangent);
    let mut blocks = assemble_reference(disc, &c_ref, Weighting::Quadrature, backend).map_err(numerical)?;
    let mut rows = Vec::new();
    for k in 0..blocks.n_frequencies() {
        let ev = blocks.block_eigenvalues(k);
        let coords: Vec<String> = blocks.transform().frequency_coords(k).iter().map(usize::to_string).collect();
        rows.push(vec![
            k.to_string(),
            coords.join(" "),
            fmt_f64(ev.first().copied().unwrap_or(0.0)),
            fmt_f64(ev.last().copied().unwrap_or(0.0)),
            fmt_f64(blocks.hermitian_defect(k)),
        ]);
    }
    let stats = blocks.stats();
    blocks.invert().map_err(numerical)?;
    for (k, row) in rows.iter_mut().enumerate() {
        row.push(
            match blocks.kind(k) {
                BlockKind::Assembled => "assembled",
                BlockKind::Inverted => "inverted",
                BlockKind::PseudoInverted => "pseudo-inverted",
            }
            .to_string(),
        );
    }
    let header = ["frequency", "coords", "eig_min", "eig_max", "hermitian_defect", "inverse"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let note = format!(
        "block size {}, {} frequencies, {} operator applications, {} transforms",
        blocks.block_size(),
        blocks.n_frequencies(),
        stats.operator_applications,
        stats.transforms
    );
    Ok((header, rows, note))
}

/// Writes a table to `out/name` or to standard output.
pub fn emit_table(out: Option<&Path>, name: &str, header: &[String], rows: &[Vec<String>]) -> Result<(), Failure> {
    match out {
        Some(dir) => {
            create_dir(dir)?;
            let path = dir.join(name);
            write_csv(&path, header, rows).map_err(io_at(&path))
        }
        None => {
            let mut w = csv::Writer::from_writer(io::stdout());
            let res: csv::Result<()> = (|| {
                w.write_record(header)?;
                for r in rows {
                    w.write_record(r)?;
                }
                w.flush()?;
                Ok(())
            })();
            res.map_err(|e| Failure::Io {
                context: "standard output".into(),
                source: e.into(),
            })
        }
    }
}
