//! Problem files: a TOML document next to a raw phase map.
//!
//! ```toml
//! stencil = "two-triangles"       # bilinear-quad | two-triangles | four-triangles-two-node | trilinear-hex
//! physics = "thermal"             # thermal | elasticity
//!
//! [cell]
//! dims = [64, 64]                 # pixels per axis, last axis fastest in the phase map
//! lengths = [1.0, 1.0]            # optional, unit cell by default
//!
//! [phase_map]
//! path = "phases.u8"              # one unsigned byte per pixel, relative to this file
//!
//! [[material]]
//! phase = 0
//! model = "isotropic-conductor"   # see `ModelSpec` for all models
//! conductivity = 100.0
//!
//! [reference]
//! policy = "volume-mean"          # volume-mean | identity (scale) | explicit (matrix)
//!
//! [solver]                        # every key optional
//! eta_newton = 1e-6
//! eta_cg = 1e-6
//!
//! [loading]
//! steps = [[0.01, 0.0]]           # one macroscopic gradient per load step
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use fehomog_core::linalg::Matrix;
use fehomog_core::material::J2Params;
use fehomog_core::newton::{NewtonCriterion, ReferencePolicy, SolveConfig};
use fehomog_core::{CellSpec, Discretization, GridLayout, MaterialMap, MaterialModel, Physics, StencilKind};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub stencil: String,
    pub physics: String,
    pub cell: CellSection,
    pub phase_map: PhaseMapSection,
    #[serde(rename = "material")]
    pub materials: Vec<ModelSpec>,
    #[serde(default)]
    pub reference: ReferenceSpec,
    #[serde(default)]
    pub solver: SolverSection,
    pub loading: LoadingSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellSection {
    pub dims: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lengths: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseMapSection {
    pub path: PathBuf,
}

/// Constitutive model of one phase.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelSpec {
    IsotropicElastic { phase: u8, bulk: f64, shear: f64 },
    /// Mandel stiffness, rows `(11, 22, 12)` or `(11, 22, 33, 23, 13, 12)`.
    Elastic { phase: u8, stiffness: Vec<Vec<f64>> },
    IsotropicConductor { phase: u8, conductivity: f64 },
    AnisotropicConductor { phase: u8, conductivity: Vec<Vec<f64>> },
    J2Plastic {
        phase: u8,
        bulk: f64,
        shear: f64,
        yield_stress: f64,
        #[serde(default)]
        hardening: f64,
    },
}

impl ModelSpec {
    pub fn phase(&self) -> u8 {
        match self {
            ModelSpec::IsotropicElastic { phase, .. }
            | ModelSpec::Elastic { phase, .. }
            | ModelSpec::IsotropicConductor { phase, .. }
            | ModelSpec::AnisotropicConductor { phase, .. }
            | ModelSpec::J2Plastic { phase, .. } => *phase,
        }
    }

    fn name(&self) -> &'static str {
        match self {
            ModelSpec::IsotropicElastic { .. } => "isotropic-elastic",
            ModelSpec::Elastic { .. } => "elastic",
            ModelSpec::IsotropicConductor { .. } => "isotropic-conductor",
            ModelSpec::AnisotropicConductor { .. } => "anisotropic-conductor",
            ModelSpec::J2Plastic { .. } => "j2-plastic",
        }
    }

    fn physics(&self) -> Physics {
        match self {
            ModelSpec::IsotropicConductor { .. } | ModelSpec::AnisotropicConductor { .. } => Physics::Thermal,
            _ => Physics::Elasticity,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ReferenceSpec {
    #[default]
    VolumeMean,
    Identity {
        #[serde(default = "one")]
        scale: f64,
    },
    Explicit { matrix: Vec<Vec<f64>> },
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CriterionSpec {
    StrainIncrement,
    Displacement,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta_newton: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta_cg: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_newton: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_cg: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reassembly_threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub criterion: Option<CriterionSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residual_floor: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadingSection {
    pub steps: Vec<Vec<f64>>,
}

/// Reasons a problem is rejected before any output is written.
#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("cannot parse problem file: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("unknown stencil `{0}` (expected bilinear-quad, two-triangles, four-triangles-two-node or trilinear-hex)")]
    UnknownStencil(String),
    #[error("unknown physics `{0}` (expected thermal or elasticity)")]
    UnknownPhysics(String),
    #[error("cell: {0}")]
    Cell(String),
    #[error("phase map has {found} bytes, the cell has {expected} pixels")]
    PhaseMapSize { expected: usize, found: usize },
    #[error("material for phase {0} is defined twice")]
    DuplicatePhase(u8),
    #[error("phase {phase}: {parameter} must be positive, got {value}")]
    NonPositiveModulus { phase: u8, parameter: &'static str, value: f64 },
    #[error("phase {phase}: hardening must be non-negative, got {value}")]
    NegativeHardening { phase: u8, value: f64 },
    #[error("phase {phase}: model {model} does not apply to {physics} problems")]
    ModelPhysics { phase: u8, model: &'static str, physics: &'static str },
    #[error("phase {phase}: {message}")]
    Material { phase: u8, message: String },
    #[error("phase map uses phase {phase} ({pixels} pixels) but no material defines it")]
    MissingPhase { phase: u8, pixels: usize },
    #[error("loading: no load steps given")]
    NoLoads,
    #[error("loading: step {step} has {found} components, expected {expected}")]
    LoadLength { step: usize, expected: usize, found: usize },
    #[error("loading: step {step} has a non-finite component")]
    LoadNotFinite { step: usize },
    #[error("reference: {0}")]
    Reference(String),
    #[error("solver: {0}")]
    Solver(String),
}

/// A validated problem ready to run.
#[derive(Clone, Debug)]
pub struct Problem {
    pub disc: Discretization,
    pub materials: MaterialMap,
    /// File phase id of each material index.
    pub phase_ids: Vec<u8>,
    pub config: SolveConfig,
    pub loads: Vec<Vec<f64>>,
}

/// Reading a problem can fail on IO or on validation.
#[derive(Debug, Error)]
pub enum LoadError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Invalid(#[from] ProblemError),
}

impl ProblemFile {
    pub fn parse(text: &str) -> Result<Self, ProblemError> {
        Ok(toml::from_str(text)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("problem files serialise")
    }
}

impl Problem {
    /// Reads and validates a problem file and the phase map it points to.
    pub fn load(path: &Path) -> Result<Self, LoadError> {
        let text = fs::read_to_string(path).map_err(|source| LoadError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let file = ProblemFile::parse(&text)?;
        let map_path = path.parent().unwrap_or(Path::new(".")).join(&file.phase_map.path);
        let phases = fs::read(&map_path).map_err(|source| LoadError::Io { path: map_path, source })?;
        Ok(Self::build(&file, &phases)?)
    }

    /// Validates an in-memory problem.
    pub fn build(file: &ProblemFile, phases: &[u8]) -> Result<Self, ProblemError> {
        let kind: StencilKind = file
            .stencil
            .parse()
            .map_err(|_| ProblemError::UnknownStencil(file.stencil.clone()))?;
        let physics = match file.physics.as_str() {
            "thermal" => Physics::Thermal,
            "elasticity" => Physics::Elasticity,
            other => return Err(ProblemError::UnknownPhysics(other.to_string())),
        };
        let dims = &file.cell.dims;
        if dims.len() != kind.dim() {
            return Err(ProblemError::Cell(format!(
                "stencil {kind} needs {} dims, got {}",
                kind.dim(),
                dims.len()
            )));
        }
        let lengths = file.cell.lengths.clone().unwrap_or_else(|| vec![1.0; dims.len()]);
        let cell = CellSpec::new(dims, &lengths).map_err(|e| ProblemError::Cell(e.to_string()))?;
        let layout = GridLayout::new(cell, kind).map_err(|e| ProblemError::Cell(e.to_string()))?;
        let disc = Discretization::new(layout, physics);
        let dim = disc.dim();
        let np = disc.layout().n_pixels();
        if phases.len() != np {
            return Err(ProblemError::PhaseMapSize {
                expected: np,
                found: phases.len(),
            });
        }

        let mut catalog = BTreeMap::new();
        for spec in &file.materials {
            let phase = spec.phase();
            if catalog.contains_key(&phase) {
                return Err(ProblemError::DuplicatePhase(phase));
            }
            catalog.insert(phase, model(spec, physics, dim)?);
        }
        let mut counts = [0usize; 256];
        for &p in phases {
            counts[p as usize] += 1;
        }
        if let Some(phase) = (0..=255u8).find(|&p| counts[p as usize] > 0 && !catalog.contains_key(&p)) {
            return Err(ProblemError::MissingPhase {
                phase,
                pixels: counts[phase as usize],
            });
        }
        let phase_ids: Vec<u8> = catalog.keys().copied().collect();
        let mut index = [0usize; 256];
        for (i, &p) in phase_ids.iter().enumerate() {
            index[p as usize] = i;
        }
        let models: Vec<MaterialModel> = catalog.into_values().collect();
        let materials = MaterialMap::new(models, phases.iter().map(|&p| index[p as usize]).collect())
            .map_err(|e| ProblemError::Cell(e.to_string()))?;

        let m = disc.gradient_components();
        if file.loading.steps.is_empty() {
            return Err(ProblemError::NoLoads);
        }
        for (step, load) in file.loading.steps.iter().enumerate() {
            if load.len() != m {
                return Err(ProblemError::LoadLength {
                    step: step + 1,
                    expected: m,
                    found: load.len(),
                });
            }
            if load.iter().any(|v| !v.is_finite()) {
                return Err(ProblemError::LoadNotFinite { step: step + 1 });
            }
        }

        let reference = match &file.reference {
            ReferenceSpec::VolumeMean => ReferencePolicy::VolumeMean,
            ReferenceSpec::Identity { scale } => ReferencePolicy::Identity { scale: *scale },
            ReferenceSpec::Explicit { matrix } => {
                let c = square(matrix, m).map_err(ProblemError::Reference)?;
                c.cholesky()
                    .map_err(|_| ProblemError::Reference("explicit matrix is not positive definite".into()))?;
                if c.asymmetry() > 1e-12 {
                    return Err(ProblemError::Reference("explicit matrix is not symmetric".into()));
                }
                ReferencePolicy::Explicit(c)
            }
        };
        let s = &file.solver;
        let d = SolveConfig::default();
        let config = SolveConfig {
            eta_newton: s.eta_newton.unwrap_or(d.eta_newton),
            eta_cg: s.eta_cg.unwrap_or(d.eta_cg),
            max_newton: s.max_newton.unwrap_or(d.max_newton),
            max_cg: s.max_cg.unwrap_or(d.max_cg),
            reference,
            reassembly_threshold: s.reassembly_threshold.unwrap_or(d.reassembly_threshold),
            criterion: match s.criterion {
                Some(CriterionSpec::Displacement) => NewtonCriterion::Displacement,
                _ => NewtonCriterion::StrainIncrement,
            },
            residual_floor: s.residual_floor.unwrap_or(d.residual_floor),
        };
        config.validate().map_err(|e| match e {
            fehomog_core::Error::InvalidConfig(msg) if msg.contains("identity reference") => {
                ProblemError::Reference(msg)
            }
            other => ProblemError::Solver(other.to_string()),
        })?;
        Ok(Self {
            disc,
            materials,
            phase_ids,
            config,
            loads: file.loading.steps.clone(),
        })
    }
}

fn positive(phase: u8, parameter: &'static str, value: f64) -> Result<(), ProblemError> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(ProblemError::NonPositiveModulus { phase, parameter, value })
    }
}

fn square(rows: &[Vec<f64>], n: usize) -> Result<Matrix, String> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(format!("matrix must be {n} × {n}"));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err("matrix has non-finite entries".into());
    }
    Matrix::from_rows(rows).map_err(|e| e.to_string())
}

fn model(spec: &ModelSpec, physics: Physics, dim: usize) -> Result<MaterialModel, ProblemError> {
    let phase = spec.phase();
    if spec.physics() != physics {
        return Err(ProblemError::ModelPhysics {
            phase,
            model: spec.name(),
            physics: match physics {
                Physics::Thermal => "thermal",
                Physics::Elasticity => "elasticity",
            },
        });
    }
    let invalid = |e: fehomog_core::Error| ProblemError::Material {
        phase,
        message: e.to_string(),
    };
    let spd = |rows: &[Vec<f64>], n: usize| -> Result<Matrix, ProblemError> {
        let c = square(rows, n).map_err(|message| ProblemError::Material { phase, message })?;
        if c.asymmetry() > 1e-12 || c.cholesky().is_err() {
            return Err(ProblemError::Material {
                phase,
                message: "matrix must be symmetric positive definite".into(),
            });
        }
        Ok(c)
    };
    let m = match spec {
        ModelSpec::IsotropicElastic { bulk, shear, .. } => {
            positive(phase, "bulk", *bulk)?;
            positive(phase, "shear", *shear)?;
            MaterialModel::isotropic_elastic(*bulk, *shear, dim).map_err(invalid)?
        }
        ModelSpec::Elastic { stiffness, .. } => MaterialModel::LinearElastic {
            stiffness: spd(stiffness, dim * (dim + 1) / 2)?,
        },
        ModelSpec::IsotropicConductor { conductivity, .. } => {
            positive(phase, "conductivity", *conductivity)?;
            MaterialModel::isotropic_conductor(*conductivity, dim).map_err(invalid)?
        }
        ModelSpec::AnisotropicConductor { conductivity, .. } => MaterialModel::Conductivity {
            conductivity: spd(conductivity, dim)?,
        },
        ModelSpec::J2Plastic {
            bulk,
            shear,
            yield_stress,
            hardening,
            ..
        } => {
            positive(phase, "bulk", *bulk)?;
            positive(phase, "shear", *shear)?;
            positive(phase, "yield_stress", *yield_stress)?;
            if !(*hardening >= 0.0 && hardening.is_finite()) {
                return Err(ProblemError::NegativeHardening { phase, value: *hardening });
            }
            MaterialModel::J2Plastic(J2Params {
                bulk: *bulk,
                shear: *shear,
                yield_stress: *yield_stress,
                hardening: *hardening,
            })
        }
    };
    m.validate(physics, dim).map_err(invalid)?;
    Ok(m)
}
