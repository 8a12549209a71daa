use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use fehomog::commands::{self, emit_table, Failure};
use fehomog::output::{fmt_f64, write_csv};
use fehomog::templates;
use fehomog::{Problem, RustFft, StdClock};
use fehomog_core::StencilKind;

#[derive(Parser)]
#[command(name = "fehomog", version, about = "FFT-preconditioned finite-element homogenization on voxel grids")]
struct Cli {
    /// Worker threads for the FFT (all cores by default).
    #[arg(long, global = true, env = "HOMOG_THREADS")]
    threads: Option<usize>,
    /// Seed for randomized templates.
    #[arg(long, global = true, env = "HOMOG_SEED", default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the load program and write fields, averages and the solver log.
    Solve {
        #[arg(long, env = "HOMOG_PROBLEM")]
        problem: PathBuf,
        #[arg(long, env = "HOMOG_OUT")]
        out: PathBuf,
    },
    /// Two-sided eigenvalue bounds of the preconditioned operator.
    Bounds {
        #[arg(long, env = "HOMOG_PROBLEM")]
        problem: PathBuf,
        #[arg(long, env = "HOMOG_OUT")]
        out: Option<PathBuf>,
    },
    /// Displacement- against strain-based Newton-PCG, step by step.
    Compare {
        #[arg(long, env = "HOMOG_PROBLEM")]
        problem: PathBuf,
        #[arg(long, env = "HOMOG_OUT")]
        out: Option<PathBuf>,
    },
    /// Frequency-block diagnostics of the reference preconditioner.
    ProbePrecond {
        #[arg(long, env = "HOMOG_PROBLEM")]
        problem: PathBuf,
        #[arg(long, env = "HOMOG_OUT")]
        out: Option<PathBuf>,
    },
    /// Write a built-in benchmark problem and its phase map.
    Template {
        #[arg(value_enum)]
        kind: TemplateKind,
        #[arg(long, env = "HOMOG_OUT")]
        out: PathBuf,
        /// Pixels per axis.
        #[arg(long, default_value_t = 32)]
        size: usize,
        /// Phase contrast (K2/K1 for the coated sphere).
        #[arg(long, default_value_t = 1e3)]
        contrast: f64,
        /// Stencil for 2D templates.
        #[arg(long, default_value = "two-triangles")]
        stencil: String,
        /// Volume fraction of phase 1 in the random template.
        #[arg(long, default_value_t = 0.5)]
        fraction: f64,
        /// Elastic instead of thermal phases in the random template.
        #[arg(long)]
        elastic: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum TemplateKind {
    SquareInclusion,
    CoatedSphere,
    RandomTwoPhase,
}

fn load(path: &Path) -> Result<Problem, Failure> {
    Ok(Problem::load(path)?)
}

fn run(cli: Cli) -> Result<(), Failure> {
    let backend = RustFft::new();
    match cli.command {
        Command::Solve { problem, out } => {
            let p = load(&problem)?;
            let summary = commands::solve(&p, &out, &backend, &StdClock::default())?;
            let cg: usize = summary.report.load_steps.iter().map(|s| s.total_cg()).sum();
            println!(
                "{} load steps converged, {} Newton iterations, {} CG iterations, results in {}",
                summary.report.load_steps.len(),
                summary.report.load_steps.iter().map(|s| s.newton_iterations()).sum::<usize>(),
                cg,
                out.display()
            );
        }
        Command::Bounds { problem, out } => {
            let p = load(&problem)?;
            let (b, kappa) = commands::bounds(&p)?;
            let (header, rows) = commands::bounds_csv(&b);
            emit_table(out.as_deref(), "bounds.csv", &header, &rows)?;
            if let Some(dir) = &out {
                let path = dir.join("condition.csv");
                write_csv(&path, &["condition_estimate".into()], &[vec![fmt_f64(kappa)]]).map_err(|source| {
                    Failure::Io {
                        context: path.display().to_string(),
                        source,
                    }
                })?;
            }
            eprintln!("condition estimate {kappa}");
        }
        Command::Compare { problem, out } => {
            let p = load(&problem)?;
            let c = commands::compare(&p, &backend)?;
            let (header, rows) = commands::compare_csv(&c);
            emit_table(out.as_deref(), "compare.csv", &header, &rows)?;
        }
        Command::ProbePrecond { problem, out } => {
            let p = load(&problem)?;
            let (header, rows, note) = commands::probe_precond(&p, &backend)?;
            emit_table(out.as_deref(), "probe.csv", &header, &rows)?;
            eprintln!("{note}");
        }
        Command::Template {
            kind,
            out,
            size,
            contrast,
            stencil,
            fraction,
            elastic,
        } => {
            let stencil: StencilKind = stencil
                .parse()
                .map_err(|_| Failure::Validation(fehomog::ProblemError::UnknownStencil(stencil.clone())))?;
            let t = match kind {
                TemplateKind::SquareInclusion => templates::square_inclusion(size, stencil),
                TemplateKind::CoatedSphere => templates::coated_sphere(size, contrast),
                TemplateKind::RandomTwoPhase => {
                    let dims = vec![size; stencil.dim()];
                    templates::random_two_phase(&dims, stencil, elastic, fraction, contrast, cli.seed)
                }
            };
            t.problem()?;
            let path = t.write(&out).map_err(|source| Failure::Io {
                context: out.display().to_string(),
                source,
            })?;
            println!("{}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("fehomog: cannot configure {n} threads: {e}");
            return ExitCode::from(1);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("fehomog: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
