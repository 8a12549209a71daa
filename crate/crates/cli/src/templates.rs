//! Built-in benchmark microstructures.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use fehomog_core::StencilKind;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::problem::{
    CellSection, LoadingSection, ModelSpec, PhaseMapSection, Problem, ProblemError, ProblemFile, ReferenceSpec,
    SolverSection,
};

/// Name of the phase map written next to a template's problem file.
pub const PHASE_MAP_FILE: &str = "phases.u8";

/// A problem file together with its phase map.
#[derive(Clone, Debug, PartialEq)]
pub struct Template {
    pub file: ProblemFile,
    pub phases: Vec<u8>,
}

impl Template {
    pub fn problem(&self) -> Result<Problem, ProblemError> {
        Problem::build(&self.file, &self.phases)
    }

    /// Writes `problem.toml` and the phase map into `dir`; returns the path
    /// of the problem file.
    pub fn write(&self, dir: &Path) -> io::Result<PathBuf> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(&self.file.phase_map.path), &self.phases)?;
        let path = dir.join("problem.toml");
        fs::write(&path, self.file.to_toml())?;
        Ok(path)
    }
}

fn pixel_centres(dims: &[usize]) -> impl Iterator<Item = Vec<f64>> + '_ {
    let n: usize = dims.iter().product();
    (0..n).map(move |p| {
        let mut x = vec![0.0; dims.len()];
        let mut rest = p;
        for a in (0..dims.len()).rev() {
            x[a] = ((rest % dims[a]) as f64 + 0.5) / dims[a] as f64;
            rest /= dims[a];
        }
        x
    })
}

fn file(stencil: StencilKind, physics: &str, dims: Vec<usize>, materials: Vec<ModelSpec>, steps: Vec<Vec<f64>>) -> ProblemFile {
    ProblemFile {
        stencil: stencil.name().to_string(),
        physics: physics.to_string(),
        cell: CellSection { dims, lengths: None },
        phase_map: PhaseMapSection {
            path: PHASE_MAP_FILE.into(),
        },
        materials,
        reference: ReferenceSpec::VolumeMean,
        solver: SolverSection::default(),
        loading: LoadingSection { steps },
    }
}

/// Conductivities of the square-inclusion benchmark (matrix, inclusion).
pub const SQUARE_INCLUSION_CONDUCTIVITY: (f64, f64) = (100.0, 1.0e4);

/// Square conducting inclusion of half the cell edge, centred, in an
/// insulating matrix; thermal load `(0.01, 0)`.
pub fn square_inclusion(n: usize, stencil: StencilKind) -> Template {
    let (matrix, inclusion) = SQUARE_INCLUSION_CONDUCTIVITY;
    let dims = vec![n, n];
    let phases = pixel_centres(&dims)
        .map(|x| u8::from(x.iter().all(|&c| (0.25..0.75).contains(&c))))
        .collect();
    let materials = vec![
        ModelSpec::IsotropicConductor {
            phase: 0,
            conductivity: matrix,
        },
        ModelSpec::IsotropicConductor {
            phase: 1,
            conductivity: inclusion,
        },
    ];
    Template {
        file: file(stencil, "thermal", dims, materials, vec![vec![0.01, 0.0]]),
        phases,
    }
}

/// Inner and outer radius of the coated sphere in a unit cube.
pub const CORE_RADIUS: f64 = 0.2;
pub const COATING_RADIUS: f64 = 0.4;

/// Moduli of a neutral coated sphere: core (1), coating (2), matrix (eff).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoatedSphereModuli {
    pub k1: f64,
    pub g1: f64,
    pub k2: f64,
    pub g2: f64,
    pub k_eff: f64,
    pub g_eff: f64,
}

/// Balances the core and coating bulk moduli for the contrast
/// `rho = K2 / K1` so that the coated sphere is invisible to hydrostatic
/// loading in a matrix with `K_eff = 1`, `G_eff = 0.6`. Every phase has
/// `G = 0.6 K`.
pub fn coated_sphere_moduli(rho: f64) -> CoatedSphereModuli {
    let c = (CORE_RADIUS / COATING_RADIUS).powi(3);
    // Coated-sphere bulk modulus with K1 = K2 / rho, written as K2 · f.
    let jump = 1.0 / rho - 1.0;
    let f = 1.0 + c * jump / (1.0 + (1.0 - c) * jump / (1.0 + 4.0 * 0.6 / 3.0));
    let k2 = 1.0 / f;
    let k1 = k2 / rho;
    CoatedSphereModuli {
        k1,
        g1: 0.6 * k1,
        k2,
        g2: 0.6 * k2,
        k_eff: 1.0,
        g_eff: 0.6,
    }
}

/// Coated sphere centred in the unit cube on an `n³` trilinear grid; phase 0
/// is the matrix, 1 the core, 2 the coating. Load `e = (1, 0, 0, 0, 0, 0)`.
pub fn coated_sphere(n: usize, rho: f64) -> Template {
    let dims = vec![n, n, n];
    let phases = pixel_centres(&dims)
        .map(|x| {
            let r2: f64 = x.iter().map(|c| (c - 0.5) * (c - 0.5)).sum();
            if r2 < CORE_RADIUS * CORE_RADIUS {
                1
            } else if r2 < COATING_RADIUS * COATING_RADIUS {
                2
            } else {
                0
            }
        })
        .collect();
    let m = coated_sphere_moduli(rho);
    let materials = vec![
        ModelSpec::IsotropicElastic {
            phase: 0,
            bulk: m.k_eff,
            shear: m.g_eff,
        },
        ModelSpec::IsotropicElastic {
            phase: 1,
            bulk: m.k1,
            shear: m.g1,
        },
        ModelSpec::IsotropicElastic {
            phase: 2,
            bulk: m.k2,
            shear: m.g2,
        },
    ];
    Template {
        file: file(
            StencilKind::TrilinearHex,
            "elasticity",
            dims,
            materials,
            vec![vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0]],
        ),
        phases,
    }
}

/// Independent pixel-wise coin flips with probability `fraction` for
/// phase 1. Thermal phases have conductivities 1 and `contrast`;
/// elastic phases are isotropic with `G = 0.6 K`, `K` 1 and `contrast`.
pub fn random_two_phase(
    dims: &[usize],
    stencil: StencilKind,
    elastic: bool,
    fraction: f64,
    contrast: f64,
    seed: u64,
) -> Template {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n: usize = dims.iter().product();
    let phases = (0..n).map(|_| u8::from(rng.gen::<f64>() < fraction)).collect();
    let (physics, materials, load) = if elastic {
        let m = stencil.dim() * (stencil.dim() + 1) / 2;
        let mut e = vec![0.0; m];
        e[0] = 0.01;
        let mats = [1.0, contrast]
            .iter()
            .enumerate()
            .map(|(p, &k)| ModelSpec::IsotropicElastic {
                phase: p as u8,
                bulk: k,
                shear: 0.6 * k,
            })
            .collect();
        ("elasticity", mats, e)
    } else {
        let mut e = vec![0.0; stencil.dim()];
        e[0] = 0.01;
        let mats = [1.0, contrast]
            .iter()
            .enumerate()
            .map(|(p, &k)| ModelSpec::IsotropicConductor {
                phase: p as u8,
                conductivity: k,
            })
            .collect();
        ("thermal", mats, e)
    };
    Template {
        file: file(stencil, physics, dims.to_vec(), materials, vec![load]),
        phases,
    }
}
