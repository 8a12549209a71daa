//! Newton iteration on the periodic fluctuation with PCG inner solves.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::fft::FftBackend;
use crate::field::{NodalField, QuadField, TangentField};
use crate::krylov::{pcg, PcgOptions, PcgOutcome};
use crate::linalg::{dot, Matrix};
use crate::material::{InternalState, MaterialModel};
use crate::math::sqrt;
use crate::operator::{Discretization, Weighting};
use crate::precond::{assemble_reference, FrequencyBlockDiag};

/// Wall-clock source for phase timings; the core has none of its own.
pub trait Clock {
    /// Seconds since an arbitrary origin.
    fn now(&self) -> f64;
}

/// Clock that never advances.
#[derive(Clone, Copy, Debug, Default)]
pub struct NoClock;

impl Clock for NoClock {
    fn now(&self) -> f64 {
        0.0
    }
}

/// Choice of the uniform reference tangent `C_ref`.
#[derive(Clone, Debug, PartialEq)]
pub enum ReferencePolicy {
    /// `scale · I`.
    Identity { scale: f64 },
    /// Volume average of the current tangent, refreshed by the reassembly
    /// threshold.
    VolumeMean,
    Explicit(Matrix),
}

/// Quantity compared against `eta_newton` after each linear solve.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NewtonCriterion {
    /// `‖D δu‖_W ≤ η ‖D u‖_W`.
    StrainIncrement,
    /// `‖δu‖ ≤ η ‖u‖`.
    Displacement,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveConfig {
    pub eta_newton: f64,
    pub eta_cg: f64,
    pub max_newton: usize,
    pub max_cg: usize,
    pub reference: ReferencePolicy,
    /// Relative Frobenius change of the mean tangent that triggers a new
    /// assembly under [`ReferencePolicy::VolumeMean`].
    pub reassembly_threshold: f64,
    pub criterion: NewtonCriterion,
    /// Residuals below `residual_floor` times the stress scale are treated
    /// as converged (round-off of an equilibrated field).
    pub residual_floor: f64,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            eta_newton: 1e-6,
            eta_cg: 1e-6,
            max_newton: 50,
            max_cg: 2000,
            reference: ReferencePolicy::VolumeMean,
            reassembly_threshold: 0.1,
            criterion: NewtonCriterion::StrainIncrement,
            residual_floor: 1e-14,
        }
    }
}

impl SolveConfig {
    pub fn validate(&self) -> Result<()> {
        let tol_ok = |t: f64| t > 0.0 && t < 1.0;
        if !tol_ok(self.eta_newton) || !tol_ok(self.eta_cg) {
            return Err(Error::InvalidConfig(format!(
                "tolerances must lie in (0, 1): eta_newton = {}, eta_cg = {}",
                self.eta_newton, self.eta_cg
            )));
        }
        if self.max_newton == 0 || self.max_cg == 0 {
            return Err(Error::InvalidConfig("iteration caps must be at least 1".into()));
        }
        if !(self.reassembly_threshold >= 0.0) || !(self.residual_floor >= 0.0) {
            return Err(Error::InvalidConfig(
                "reassembly threshold and residual floor must be non-negative".into(),
            ));
        }
        if let ReferencePolicy::Identity { scale } = self.reference {
            if !(scale > 0.0 && scale.is_finite()) {
                return Err(Error::InvalidConfig(format!("identity reference scale must be positive, got {scale}")));
            }
        }
        Ok(())
    }
}

/// Phase id per pixel plus the model of each phase.
#[derive(Clone, Debug, PartialEq)]
pub struct MaterialMap {
    models: Vec<MaterialModel>,
    phases: Vec<usize>,
}

impl MaterialMap {
    pub fn new(models: Vec<MaterialModel>, phases: Vec<usize>) -> Result<Self> {
        if let Some(bad) = phases.iter().find(|&&p| p >= models.len()) {
            return Err(Error::InvalidMaterial(format!(
                "phase id {bad} has no material ({} defined)",
                models.len()
            )));
        }
        Ok(Self { models, phases })
    }

    pub fn uniform(model: MaterialModel, n_pixels: usize) -> Self {
        Self {
            models: vec![model],
            phases: vec![0; n_pixels],
        }
    }

    pub fn models(&self) -> &[MaterialModel] {
        &self.models
    }

    pub fn phases(&self) -> &[usize] {
        &self.phases
    }

    #[inline]
    pub fn model_of_pixel(&self, pixel: usize) -> &MaterialModel {
        &self.models[self.phases[pixel]]
    }

    pub fn internal_width(&self) -> usize {
        self.models.iter().map(|m| m.internal_width()).max().unwrap_or(0)
    }

    pub fn is_linear(&self) -> bool {
        self.models.iter().all(|m| m.is_linear())
    }

    /// Checks the map against a discretisation.
    pub fn validate(&self, disc: &Discretization) -> Result<()> {
        let np = disc.layout().n_pixels();
        if self.phases.len() != np {
            return Err(Error::ShapeMismatch {
                what: "phase map",
                expected: np,
                found: self.phases.len(),
            });
        }
        for m in &self.models {
            m.validate(disc.physics(), disc.dim())?;
        }
        Ok(())
    }

    /// Tangent at zero strain and zero internal state at every point.
    pub fn initial_tangent(&self, disc: &Discretization) -> TangentField {
        let l = disc.layout();
        let m = disc.gradient_components();
        let per_model: Vec<Matrix> = self.models.iter().map(|mm| mm.elastic_tangent(disc.dim())).collect();
        let mut t = TangentField::zeros(m, l.n_quad());
        let np = l.n_pixels();
        for q in 0..l.n_quad() {
            t.set_point(q, &per_model[self.phases[q % np]]);
        }
        t.set_pixel_constant(true);
        t
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Termination {
    Converged,
    CgStall,
    NewtonCap,
}

impl Termination {
    pub fn name(self) -> &'static str {
        match self {
            Termination::Converged => "converged",
            Termination::CgStall => "cg-stall",
            Termination::NewtonCap => "newton-cap",
        }
    }
}

/// One linear solve of a Newton iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct NewtonStep {
    pub cg_iterations: usize,
    pub cg_converged: bool,
    /// `‖b‖_{M⁻¹}` before and after the inner solve.
    pub residual_initial: f64,
    pub residual_final: f64,
    /// The quantity tested against `eta_newton`.
    pub increment_ratio: f64,
    /// Whether the preconditioner was (re)assembled before this solve.
    pub reassembled: bool,
    pub cg_history: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LoadStepReport {
    pub load: Vec<f64>,
    pub steps: Vec<NewtonStep>,
    pub termination: Termination,
    pub average_stress: Vec<f64>,
}

impl LoadStepReport {
    pub fn newton_iterations(&self) -> usize {
        self.steps.len()
    }

    pub fn total_cg(&self) -> usize {
        self.steps.iter().map(|s| s.cg_iterations).sum()
    }
}

/// Accumulated seconds per phase, as reported by the [`Clock`].
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PhaseTimes {
    pub constitutive: f64,
    pub assembly: f64,
    pub linear_solve: f64,
    pub total: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SolveReport {
    pub load_steps: Vec<LoadStepReport>,
    pub assemblies: usize,
    pub times: PhaseTimes,
}

impl SolveReport {
    pub fn converged(&self) -> bool {
        self.load_steps.iter().all(|s| s.termination == Termination::Converged)
    }
}

/// Stateful driver for a load program; keeps the fluctuation, committed
/// internal variables and the preconditioner between load steps.
pub struct Solver<'a> {
    disc: &'a Discretization,
    materials: &'a MaterialMap,
    config: SolveConfig,
    backend: &'a dyn FftBackend,
    clock: &'a dyn Clock,
    u: NodalField,
    state: InternalState,
    trial: InternalState,
    strain: QuadField,
    stress: QuadField,
    tangent: TangentField,
    blocks: Option<FrequencyBlockDiag>,
    assembled_reference: Option<Matrix>,
    reference_inverse: Option<Matrix>,
    report: SolveReport,
}

/// Everything a single load step produces.
#[derive(Clone, Debug)]
pub struct NewtonOutcome {
    pub fluctuation: NodalField,
    pub state: InternalState,
    pub strain: QuadField,
    pub stress: QuadField,
    pub report: LoadStepReport,
}

/// Solves one load step from a zero fluctuation and the given internal state.
pub fn newton_solve(
    disc: &Discretization,
    materials: &MaterialMap,
    state: &InternalState,
    load: &[f64],
    config: &SolveConfig,
    backend: &dyn FftBackend,
) -> Result<NewtonOutcome> {
    let mut solver = Solver::new(disc, materials, config.clone(), backend, &NoClock)?;
    solver.set_state(state.clone())?;
    let report = solver.step(load)?;
    Ok(NewtonOutcome {
        fluctuation: solver.u,
        state: solver.state,
        strain: solver.strain,
        stress: solver.stress,
        report,
    })
}

/// `(1/|Y|) Σ_Q w^Q σ(Q)`.
pub fn average_stress(disc: &Discretization, sigma: &QuadField) -> Result<Vec<f64>> {
    disc.volume_average(sigma)
}

impl<'a> Solver<'a> {
    pub fn new(
        disc: &'a Discretization,
        materials: &'a MaterialMap,
        config: SolveConfig,
        backend: &'a dyn FftBackend,
        clock: &'a dyn Clock,
    ) -> Result<Self> {
        config.validate()?;
        materials.validate(disc)?;
        let m = disc.gradient_components();
        if let ReferencePolicy::Explicit(c) = &config.reference {
            if c.rows() != m || c.cols() != m {
                return Err(Error::ShapeMismatch {
                    what: "explicit reference tangent",
                    expected: m * m,
                    found: c.rows() * c.cols(),
                });
            }
        }
        let nq = disc.layout().n_quad();
        let width = materials.internal_width();
        Ok(Self {
            disc,
            materials,
            config,
            backend,
            clock,
            u: disc.zero_nodal(),
            state: InternalState::zeros(nq, width),
            trial: InternalState::zeros(nq, width),
            strain: disc.zero_quad(),
            stress: disc.zero_quad(),
            tangent: materials.initial_tangent(disc),
            blocks: None,
            assembled_reference: None,
            reference_inverse: None,
            report: SolveReport::default(),
        })
    }

    /// Replaces the committed internal state.
    pub fn set_state(&mut self, state: InternalState) -> Result<()> {
        if state.n_points() != self.state.n_points() || state.width() != self.state.width() {
            return Err(Error::ShapeMismatch {
                what: "internal state",
                expected: self.state.n_points() * self.state.width(),
                found: state.n_points() * state.width(),
            });
        }
        self.trial = state.clone();
        self.state = state;
        Ok(())
    }

    pub fn fluctuation(&self) -> &NodalField {
        &self.u
    }

    pub fn strain(&self) -> &QuadField {
        &self.strain
    }

    pub fn stress(&self) -> &QuadField {
        &self.stress
    }

    pub fn tangent(&self) -> &TangentField {
        &self.tangent
    }

    pub fn state(&self) -> &InternalState {
        &self.state
    }

    pub fn preconditioner(&self) -> Option<&FrequencyBlockDiag> {
        self.blocks.as_ref()
    }

    pub fn report(&self) -> &SolveReport {
        &self.report
    }

    pub fn into_report(self) -> SolveReport {
        self.report
    }

    /// Strain `e + D u`, stress, tangent and trial state at every point.
    fn evaluate(&mut self, load: &[f64]) -> Result<()> {
        let t0 = self.clock.now();
        self.disc.gradient_into(self.u.as_slice(), self.strain.as_mut_slice());
        for (r, &e) in load.iter().enumerate() {
            self.strain.component_mut(r).iter_mut().for_each(|v| *v += e);
        }
        evaluate_points(
            self.disc,
            self.materials,
            &self.strain,
            &self.state,
            &mut self.stress,
            &mut self.tangent,
            &mut self.trial,
        )?;
        self.report.times.constitutive += self.clock.now() - t0;
        Ok(())
    }

    /// Assembles the preconditioner when missing or when the mean tangent
    /// moved past the threshold.
    fn refresh_preconditioner(&mut self) -> Result<bool> {
        let candidate = reference_matrix(&self.config.reference, self.disc, &self.tangent);
        if !needs_assembly(self.assembled_reference.as_ref(), &candidate, self.config.reassembly_threshold) {
            return Ok(false);
        }
        let t0 = self.clock.now();
        let mut blocks = assemble_reference(self.disc, &candidate, Weighting::Quadrature, self.backend)?;
        blocks.invert()?;
        self.reference_inverse = Some(candidate.inverse()?);
        self.blocks = Some(blocks);
        self.assembled_reference = Some(candidate);
        self.report.assemblies += 1;
        self.report.times.assembly += self.clock.now() - t0;
        Ok(true)
    }

    /// `sqrt(Σ_Q w^Q σᵀ C_ref⁻¹ σ)`, an upper bound of `‖Dᵀ W σ‖_{M⁻¹}`.
    fn stress_scale(&self) -> f64 {
        let inv = self.reference_inverse.as_ref().expect("preconditioner assembled");
        let m = self.disc.gradient_components();
        let nq = self.disc.layout().n_quad();
        let s = self.stress.as_slice();
        let mut acc = 0.0;
        let mut v = [0.0; 6];
        for q in 0..nq {
            for r in 0..m {
                v[r] = s[r * nq + q];
            }
            let mut quad = 0.0;
            for r in 0..m {
                quad += v[r] * dot(inv.row(r), &v[..m]);
            }
            acc += self.disc.layout().weight(q) * quad;
        }
        sqrt(acc.max(0.0))
    }

    fn residual(&self) -> Vec<f64> {
        let mut b = vec![0.0; self.disc.n_dofs()];
        self.disc
            .divergence_into(self.stress.as_slice(), &mut b, Weighting::Quadrature);
        b.iter_mut().for_each(|v| *v = -*v);
        b
    }

    fn inner_solve(&mut self, b: &[f64], floor: f64) -> Result<(Vec<f64>, PcgOutcome)> {
        let t0 = self.clock.now();
        let disc = self.disc;
        let tangent = &self.tangent;
        let blocks = self.blocks.as_ref().expect("preconditioner assembled");
        let backend = self.backend;
        let mut x = vec![0.0; disc.n_dofs()];
        let options = PcgOptions {
            eta: self.config.eta_cg,
            max_iter: self.config.max_cg,
            abs_floor: floor,
        };
        let outcome = pcg(
            |v, out| {
                disc.apply_k_into(tangent, v, out, Weighting::Quadrature);
                Ok(())
            },
            |v, out| blocks.apply(backend, v, out),
            dot,
            b,
            &mut x,
            &options,
            None,
        )?;
        self.report.times.linear_solve += self.clock.now() - t0;
        Ok((x, outcome))
    }

    fn preconditioned_norm(&self, b: &[f64]) -> Result<f64> {
        let mut z = vec![0.0; b.len()];
        self.blocks
            .as_ref()
            .expect("preconditioner assembled")
            .apply(self.backend, b, &mut z)?;
        Ok(sqrt(dot(b, &z).max(0.0)))
    }

    fn increment_ratio(&self, delta: &[f64]) -> f64 {
        let (num, den) = match self.config.criterion {
            NewtonCriterion::StrainIncrement => {
                let mut g = vec![0.0; self.disc.n_gradient_values()];
                self.disc.gradient_into(delta, &mut g);
                let num = self.disc.weighted_dot(&g, &g);
                self.disc.gradient_into(self.u.as_slice(), &mut g);
                (num, self.disc.weighted_dot(&g, &g))
            }
            NewtonCriterion::Displacement => (dot(delta, delta), dot(self.u.as_slice(), self.u.as_slice())),
        };
        ratio(sqrt(num), sqrt(den))
    }

    /// Runs Newton for one macroscopic load; commits the internal state on
    /// convergence.
    pub fn step(&mut self, load: &[f64]) -> Result<LoadStepReport> {
        let m = self.disc.gradient_components();
        if load.len() != m {
            return Err(Error::ShapeMismatch {
                what: "macroscopic load",
                expected: m,
                found: load.len(),
            });
        }
        if load.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("macroscopic load"));
        }
        let t_start = self.clock.now();
        self.evaluate(load)?;
        let mut reassembled = self.refresh_preconditioner()?;
        let mut b = self.residual();
        let mut steps = Vec::new();
        let mut termination = Termination::NewtonCap;
        let mut b0 = 0.0;
        for i in 0..self.config.max_newton {
            let floor = self.config.residual_floor * self.stress_scale();
            if i >= 1 {
                let nb = self.preconditioned_norm(&b)?;
                if nb <= self.config.eta_newton * b0 || nb <= floor {
                    termination = Termination::Converged;
                    break;
                }
            }
            let (delta, outcome) = self.inner_solve(&b, floor)?;
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
            self.u
                .as_mut_slice()
                .iter_mut()
                .zip(&delta)
                .for_each(|(u, d)| *u += d);
            self.u.remove_mean();
            step.increment_ratio = self.increment_ratio(&delta);
            let done = step.increment_ratio <= self.config.eta_newton;
            steps.push(step);
            self.evaluate(load)?;
            reassembled = self.refresh_preconditioner()?;
            b = self.residual();
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
        self.report.times.total += self.clock.now() - t_start;
        self.report.load_steps.push(report.clone());
        Ok(report)
    }

    /// Runs the loads in order, warm-starting each from the previous
    /// fluctuation; stops at the first load step that does not converge.
    pub fn run(&mut self, loads: &[Vec<f64>]) -> Result<&SolveReport> {
        for load in loads {
            let r = self.step(load)?;
            if r.termination != Termination::Converged {
                break;
            }
        }
        Ok(&self.report)
    }
}

/// Evaluates every quadrature point: stress, tangent and trial state from
/// the strain and the committed state.
pub(crate) fn evaluate_points(
    disc: &Discretization,
    materials: &MaterialMap,
    strain: &QuadField,
    state: &InternalState,
    stress: &mut QuadField,
    tangent: &mut TangentField,
    trial: &mut InternalState,
) -> Result<()> {
    let m = disc.gradient_components();
    let nq = disc.layout().n_quad();
    let np = disc.layout().n_pixels();
    let mut eps = [0.0; 6];
    let mut sig = [0.0; 6];
    let strain = strain.as_slice();
    let stress = stress.as_mut_slice();
    for q in 0..nq {
        for r in 0..m {
            eps[r] = strain[r * nq + q];
        }
        materials.model_of_pixel(q % np).evaluate(
            disc.dim(),
            &eps[..m],
            state.point(q),
            &mut sig[..m],
            tangent.point_mut(q),
            trial.point_mut(q),
        )?;
        for r in 0..m {
            stress[r * nq + q] = sig[r];
        }
    }
    tangent.set_pixel_constant(materials.is_linear());
    Ok(())
}

/// The reference tangent a policy selects for the current tangent field.
pub fn reference_matrix(policy: &ReferencePolicy, disc: &Discretization, tangent: &TangentField) -> Matrix {
    match policy {
        ReferencePolicy::Identity { scale } => Matrix::scaled_identity(disc.gradient_components(), *scale),
        ReferencePolicy::VolumeMean => {
            let mut c = disc.mean_tangent(tangent);
            let t = c.transpose();
            c.add_scaled(&t, 1.0);
            c.scale(0.5);
            c
        }
        ReferencePolicy::Explicit(c) => c.clone(),
    }
}

/// Reassembly rule: nothing assembled yet, or a relative Frobenius change
/// above `threshold`.
pub(crate) fn needs_assembly(previous: Option<&Matrix>, candidate: &Matrix, threshold: f64) -> bool {
    match previous {
        None => true,
        Some(prev) => {
            let mut diff = candidate.clone();
            diff.add_scaled(prev, -1.0);
            diff.frobenius_norm() > threshold * prev.frobenius_norm()
        }
    }
}

/// `num / den` with `0 / 0 = 0`.
pub(crate) fn ratio(num: f64, den: f64) -> f64 {
    if num == 0.0 {
        0.0
    } else if den == 0.0 {
        f64::INFINITY
    } else {
        num / den
    }
}
