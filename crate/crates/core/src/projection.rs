//! Strain-based scheme with the discrete Green projection
//! `Γ⁰ = D (Dᵀ C_ref D)† Dᵀ`, and a harness comparing it with the
//! displacement-based solver.
//!
//! With equal quadrature weights the projected strain iteration, run as CG in
//! the inner product `⟨a, b⟩ = Σ_Q a(Q)ᵀ C_ref b(Q)`, produces the gradients of
//! the displacement-based PCG iterates, so both schemes take the same steps.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::fft::FftBackend;
use crate::field::{QuadField, TangentField};
use crate::krylov::{pcg, PcgOptions};
use crate::linalg::{dot, Matrix};
use crate::material::InternalState;
use crate::math::sqrt;
use crate::newton::{
    evaluate_points, needs_assembly, ratio, reference_matrix, LoadStepReport, MaterialMap, NewtonCriterion,
    NewtonStep, NoClock, SolveConfig, SolveReport, Solver, Termination,
};
use crate::operator::{Discretization, Weighting};
use crate::precond::{assemble_reference, FrequencyBlockDiag};

fn require_equal_weights(disc: &Discretization) -> Result<()> {
    if disc.layout().has_equal_weights() {
        Ok(())
    } else {
        Err(Error::UnequalWeights)
    }
}

/// Assembles and inverts the unweighted reference blocks used by `Γ⁰`.
pub fn projection_blocks(disc: &Discretization, c_ref: &Matrix, backend: &dyn FftBackend) -> Result<FrequencyBlockDiag> {
    require_equal_weights(disc)?;
    let mut blocks = assemble_reference(disc, c_ref, Weighting::Unit, backend)?;
    blocks.invert()?;
    Ok(blocks)
}

/// `Γ⁰ s` on flat quadrature vectors.
fn gamma_into(disc: &Discretization, blocks: &FrequencyBlockDiag, backend: &dyn FftBackend, s: &[f64], out: &mut [f64]) -> Result<()> {
    let n = disc.n_dofs();
    let mut t = vec![0.0; n];
    let mut z = vec![0.0; n];
    disc.divergence_into(s, &mut t, Weighting::Unit);
    blocks.apply(backend, &t, &mut z)?;
    disc.gradient_into(&z, out);
    Ok(())
}

/// `Γ⁰ s` with blocks from [`projection_blocks`].
pub fn gamma_apply(
    disc: &Discretization,
    blocks: &FrequencyBlockDiag,
    backend: &dyn FftBackend,
    s: &QuadField,
) -> Result<QuadField> {
    require_equal_weights(disc)?;
    if blocks.weighting() != Weighting::Unit {
        return Err(Error::InvalidConfig("projection needs blocks assembled without weights".into()));
    }
    if s.as_slice().len() != disc.n_gradient_values() {
        return Err(Error::ShapeMismatch {
            what: "quadrature field",
            expected: disc.n_gradient_values(),
            found: s.as_slice().len(),
        });
    }
    let mut out = disc.zero_quad();
    gamma_into(disc, blocks, backend, s.as_slice(), out.as_mut_slice())?;
    Ok(out)
}

/// Result of one strain-based load step.
#[derive(Clone, Debug)]
pub struct SbOutcome {
    /// Total strain `e + ε̃`.
    pub strain: QuadField,
    pub stress: QuadField,
    pub state: InternalState,
    pub report: LoadStepReport,
}

/// Strain-based Newton driver; mirrors [`Solver`] step for step.
pub struct SbSolver<'a> {
    disc: &'a Discretization,
    materials: &'a MaterialMap,
    config: SolveConfig,
    backend: &'a dyn FftBackend,
    fluctuation: Vec<f64>,
    strain: QuadField,
    stress: QuadField,
    tangent: TangentField,
    state: InternalState,
    trial: InternalState,
    blocks: Option<FrequencyBlockDiag>,
    assembled_reference: Option<Matrix>,
    reference_inverse: Option<Matrix>,
    report: SolveReport,
}

impl<'a> SbSolver<'a> {
    pub fn new(
        disc: &'a Discretization,
        materials: &'a MaterialMap,
        config: SolveConfig,
        backend: &'a dyn FftBackend,
    ) -> Result<Self> {
        require_equal_weights(disc)?;
        config.validate()?;
        materials.validate(disc)?;
        if config.criterion != NewtonCriterion::StrainIncrement {
            return Err(Error::InvalidConfig(
                "the strain-based scheme has no displacement unknown; use the strain-increment criterion".into(),
            ));
        }
        let nq = disc.layout().n_quad();
        let width = materials.internal_width();
        Ok(Self {
            disc,
            materials,
            config,
            backend,
            fluctuation: vec![0.0; disc.n_gradient_values()],
            strain: disc.zero_quad(),
            stress: disc.zero_quad(),
            tangent: materials.initial_tangent(disc),
            state: InternalState::zeros(nq, width),
            trial: InternalState::zeros(nq, width),
            blocks: None,
            assembled_reference: None,
            reference_inverse: None,
            report: SolveReport::default(),
        })
    }

    pub fn strain(&self) -> &QuadField {
        &self.strain
    }

    pub fn stress(&self) -> &QuadField {
        &self.stress
    }

    pub fn state(&self) -> &InternalState {
        &self.state
    }

    pub fn report(&self) -> &SolveReport {
        &self.report
    }

    /// Fluctuating part `ε - e` of the strain.
    pub fn fluctuation(&self) -> &[f64] {
        &self.fluctuation
    }

    fn evaluate(&mut self, load: &[f64]) -> Result<()> {
        let nq = self.disc.layout().n_quad();
        let strain = self.strain.as_mut_slice();
        for (r, chunk) in self.fluctuation.chunks(nq).enumerate() {
            for (s, f) in strain[r * nq..(r + 1) * nq].iter_mut().zip(chunk) {
                *s = f + load[r];
            }
        }
        evaluate_points(
            self.disc,
            self.materials,
            &self.strain,
            &self.state,
            &mut self.stress,
            &mut self.tangent,
            &mut self.trial,
        )
    }

    fn refresh(&mut self) -> Result<bool> {
        let candidate = reference_matrix(&self.config.reference, self.disc, &self.tangent);
        if !needs_assembly(self.assembled_reference.as_ref(), &candidate, self.config.reassembly_threshold) {
            return Ok(false);
        }
        self.blocks = Some(projection_blocks(self.disc, &candidate, self.backend)?);
        self.reference_inverse = Some(candidate.inverse()?);
        self.assembled_reference = Some(candidate);
        self.report.assemblies += 1;
        Ok(true)
    }

    fn reference(&self) -> &Matrix {
        self.assembled_reference.as_ref().expect("projection assembled")
    }

    /// `Σ_Q a(Q)ᵀ C_ref b(Q)`.
    fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        point_form(self.reference(), self.disc.layout().n_quad(), a, b)
    }

    /// `sqrt(Σ_Q σᵀ C_ref⁻¹ σ)`, the unweighted counterpart of the
    /// displacement solver's stress scale.
    fn stress_scale(&self) -> f64 {
        let inv = self.reference_inverse.as_ref().expect("projection assembled");
        let s = self.stress.as_slice();
        sqrt(point_form(inv, self.disc.layout().n_quad(), s, s).max(0.0))
    }

    /// `-Γ⁰ σ`.
    fn rhs(&self) -> Result<Vec<f64>> {
        let blocks = self.blocks.as_ref().expect("projection assembled");
        let mut out = vec![0.0; self.disc.n_gradient_values()];
        gamma_into(self.disc, blocks, self.backend, self.stress.as_slice(), &mut out)?;
        out.iter_mut().for_each(|v| *v = -*v);
        Ok(out)
    }

    pub fn step(&mut self, load: &[f64]) -> Result<LoadStepReport> {
        let m = self.disc.gradient_components();
        if load.len() != m {
            return Err(Error::ShapeMismatch {
                what: "macroscopic load",
                expected: m,
                found: load.len(),
            });
        }
        self.evaluate(load)?;
        let mut reassembled = self.refresh()?;
        let mut b = self.rhs()?;
        let mut steps = Vec::new();
        let mut termination = Termination::NewtonCap;
        let mut b0 = 0.0;
        let nq = self.disc.layout().n_quad();
        for i in 0..self.config.max_newton {
            let floor = self.config.residual_floor * self.stress_scale();
            if i >= 1 {
                let nb = sqrt(self.inner(&b, &b).max(0.0));
                if nb <= self.config.eta_newton * b0 || nb <= floor {
                    termination = Termination::Converged;
                    break;
                }
            }
            let mut delta = vec![0.0; b.len()];
            let outcome = {
                let disc = self.disc;
                let tangent = &self.tangent;
                let blocks = self.blocks.as_ref().expect("projection assembled");
                let backend = self.backend;
                let c_ref = self.reference();
                let m = disc.gradient_components();
                let mut flux = vec![0.0; b.len()];
                pcg(
                    |v, out| {
                        for q in 0..nq {
                            let c = tangent.point(q);
                            for r in 0..m {
                                let mut acc = 0.0;
                                for s in 0..m {
                                    acc += c[r * m + s] * v[s * nq + q];
                                }
                                flux[r * nq + q] = acc;
                            }
                        }
                        gamma_into(disc, blocks, backend, &flux, out)
                    },
                    |v, out| {
                        out.copy_from_slice(v);
                        Ok(())
                    },
                    |a, b| point_form(c_ref, nq, a, b),
                    &b,
                    &mut delta,
                    &PcgOptions {
                        eta: self.config.eta_cg,
                        max_iter: self.config.max_cg,
                        abs_floor: floor,
                    },
                    None,
                )?
            };
            if i == 0 {
                b0 = outcome.initial_norm();
            }
            let mut step = NewtonStep {
                cg_iterations: outcome.iterations,
                cg_converged: outcome.converged,
                residual_initial: outcome.initial_norm(),
                residual_final: outcome.final_norm(),
                increment_ratio: f64::NAN,
                reassembled,
                cg_history: outcome.history,
            };
            if !outcome.converged {
                steps.push(step);
                termination = Termination::CgStall;
                break;
            }
            self.fluctuation.iter_mut().zip(&delta).for_each(|(f, d)| *f += d);
            let num = self.disc.weighted_dot(&delta, &delta);
            let den = self.disc.weighted_dot(&self.fluctuation, &self.fluctuation);
            step.increment_ratio = ratio(sqrt(num), sqrt(den));
            let done = step.increment_ratio <= self.config.eta_newton;
            steps.push(step);
            self.evaluate(load)?;
            reassembled = self.refresh()?;
            b = self.rhs()?;
            if done {
                termination = Termination::Converged;
                break;
            }
        }
        if termination == Termination::Converged {
            self.state = self.trial.clone();
        }
        let report = LoadStepReport {
            load: load.to_vec(),
            steps,
            termination,
            average_stress: self.disc.volume_average(&self.stress)?,
        };
        self.report.load_steps.push(report.clone());
        Ok(report)
    }
}

/// `Σ_Q a(Q)ᵀ C b(Q)` for component-major quadrature vectors.
fn point_form(c: &Matrix, nq: usize, a: &[f64], b: &[f64]) -> f64 {
    let m = c.rows();
    let mut acc = 0.0;
    for r in 0..m {
        for s in 0..m {
            let crs = c[(r, s)];
            if crs != 0.0 {
                acc += crs * dot(&a[r * nq..(r + 1) * nq], &b[s * nq..(s + 1) * nq]);
            }
        }
    }
    acc
}

/// One strain-based load step from a zero fluctuation.
pub fn sb_newton_solve(
    disc: &Discretization,
    materials: &MaterialMap,
    load: &[f64],
    config: &SolveConfig,
    backend: &dyn FftBackend,
) -> Result<SbOutcome> {
    let mut solver = SbSolver::new(disc, materials, config.clone(), backend)?;
    let report = solver.step(load)?;
    Ok(SbOutcome {
        strain: solver.strain,
        stress: solver.stress,
        state: solver.state,
        report,
    })
}

/// Side-by-side record of both schemes on one load program.
#[derive(Clone, Debug)]
pub struct Comparison {
    pub db: SolveReport,
    pub sb: SolveReport,
    /// Per load step: `‖ε̃_SB - D u_DB‖_∞ / ‖D u_DB‖_∞` (0 when both vanish).
    pub fluctuation_discrepancy: Vec<f64>,
    /// Per load step: `‖ε_SB - ε_DB‖_∞ / ‖ε_DB‖_∞` for the total strain.
    pub strain_discrepancy: Vec<f64>,
}

impl Comparison {
    pub fn newton_counts_equal(&self) -> bool {
        self.db.load_steps.len() == self.sb.load_steps.len()
            && self
                .db
                .load_steps
                .iter()
                .zip(&self.sb.load_steps)
                .all(|(a, b)| a.newton_iterations() == b.newton_iterations())
    }

    /// Largest per-Newton-step difference in CG counts, `None` when the
    /// Newton counts differ.
    pub fn max_cg_difference(&self) -> Option<usize> {
        if !self.newton_counts_equal() {
            return None;
        }
        let mut worst = 0;
        for (a, b) in self.db.load_steps.iter().zip(&self.sb.load_steps) {
            for (x, y) in a.steps.iter().zip(&b.steps) {
                worst = worst.max(x.cg_iterations.abs_diff(y.cg_iterations));
            }
        }
        Some(worst)
    }
}

/// Runs the displacement- and strain-based schemes on the same loads.
pub fn compare_db_sb(
    disc: &Discretization,
    materials: &MaterialMap,
    loads: &[Vec<f64>],
    config: &SolveConfig,
    backend: &dyn FftBackend,
) -> Result<Comparison> {
    require_equal_weights(disc)?;
    let mut db = Solver::new(disc, materials, config.clone(), backend, &NoClock)?;
    let mut sb = SbSolver::new(disc, materials, config.clone(), backend)?;
    let mut fluctuation_discrepancy = Vec::new();
    let mut strain_discrepancy = Vec::new();
    let mut grad = vec![0.0; disc.n_gradient_values()];
    for load in loads {
        let a = db.step(load)?;
        let b = sb.step(load)?;
        disc.gradient_into(db.fluctuation().as_slice(), &mut grad);
        fluctuation_discrepancy.push(relative_max(sb.fluctuation(), &grad));
        strain_discrepancy.push(relative_max(sb.strain().as_slice(), db.strain().as_slice()));
        if a.termination != Termination::Converged || b.termination != Termination::Converged {
            break;
        }
    }
    Ok(Comparison {
        db: db.into_report(),
        sb: sb.report.clone(),
        fluctuation_discrepancy,
        strain_discrepancy,
    })
}

fn relative_max(a: &[f64], reference: &[f64]) -> f64 {
    let diff = a.iter().zip(reference).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()));
    let scale = reference.iter().fold(0.0_f64, |m, y| m.max(y.abs()));
    ratio(diff, scale)
}
