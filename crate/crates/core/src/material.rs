//! Constitutive models evaluated pointwise at quadrature points.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::field::Physics;
use crate::linalg::Matrix;
use crate::mandel::{isotropic_3d, restrict_to_plane, PLANE_COMPONENTS};
use crate::math::sqrt;

/// Parameters of small-strain J2 plasticity with linear isotropic hardening,
/// `τ_y = τ_y0 + H ε_p`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct J2Params {
    pub bulk: f64,
    pub shear: f64,
    pub yield_stress: f64,
    pub hardening: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum MaterialModel {
    /// `σ = C ε` with a symmetric Mandel stiffness.
    LinearElastic { stiffness: Matrix },
    /// `q = A ∇θ` with a symmetric `d × d` conductivity.
    Conductivity { conductivity: Matrix },
    J2Plastic(J2Params),
}

/// Number of internal variables stored by the J2 model: the 3D plastic strain
/// in Mandel form followed by the accumulated equivalent plastic strain.
pub const J2_STATE_WIDTH: usize = 7;

impl MaterialModel {
    pub fn isotropic_elastic(bulk: f64, shear: f64, dim: usize) -> Result<Self> {
        Ok(Self::LinearElastic {
            stiffness: crate::mandel::isotropic_stiffness(bulk, shear, dim)?,
        })
    }

    pub fn isotropic_conductor(kappa: f64, dim: usize) -> Result<Self> {
        if !(kappa > 0.0 && kappa.is_finite()) {
            return Err(Error::InvalidMaterial(format!(
                "conductivity must be positive, got {kappa}"
            )));
        }
        Ok(Self::Conductivity {
            conductivity: Matrix::scaled_identity(dim, kappa),
        })
    }

    pub fn internal_width(&self) -> usize {
        match self {
            MaterialModel::J2Plastic(_) => J2_STATE_WIDTH,
            _ => 0,
        }
    }

    /// Whether the stress is linear in the strain and independent of state.
    pub fn is_linear(&self) -> bool {
        !matches!(self, MaterialModel::J2Plastic(_))
    }

    /// Checks moduli, symmetry and the match with the physics and dimension.
    pub fn validate(&self, physics: Physics, dim: usize) -> Result<()> {
        let m = physics.gradient_components(dim);
        match (self, physics) {
            (MaterialModel::LinearElastic { stiffness }, Physics::Elasticity)
            | (MaterialModel::Conductivity { conductivity: stiffness }, Physics::Thermal) => {
                if stiffness.rows() != m || stiffness.cols() != m {
                    return Err(Error::InvalidMaterial(format!(
                        "expected a {m}x{m} matrix, got {}x{}",
                        stiffness.rows(),
                        stiffness.cols()
                    )));
                }
                if !stiffness.is_finite() {
                    return Err(Error::NonFinite("material matrix"));
                }
                if stiffness.asymmetry() > 1e-12 {
                    return Err(Error::InvalidMaterial(
                        "material matrix is not symmetric".into(),
                    ));
                }
                stiffness
                    .cholesky()
                    .map(|_| ())
                    .map_err(|_| Error::InvalidMaterial("material matrix is not positive definite".into()))
            }
            (MaterialModel::J2Plastic(p), Physics::Elasticity) => {
                let positive = |v: f64| v > 0.0 && v.is_finite();
                if !positive(p.bulk) || !positive(p.shear) || !positive(p.yield_stress) {
                    return Err(Error::InvalidMaterial(format!(
                        "J2 moduli and yield stress must be positive ({p:?})"
                    )));
                }
                if !(p.hardening >= 0.0 && p.hardening.is_finite()) {
                    return Err(Error::InvalidMaterial(format!(
                        "hardening modulus must be non-negative, got {}",
                        p.hardening
                    )));
                }
                Ok(())
            }
            (_, physics) => Err(Error::InvalidMaterial(format!(
                "model not applicable to {physics:?}"
            ))),
        }
    }

    /// Stress, consistent tangent (row-major `m × m`) and updated internal
    /// state for a strain (or temperature gradient) `strain`.
    ///
    /// `state` is read only; the trial update goes to `state_new`, which has
    /// the same width.
    pub fn evaluate(
        &self,
        dim: usize,
        strain: &[f64],
        state: &[f64],
        stress: &mut [f64],
        tangent: &mut [f64],
        state_new: &mut [f64],
    ) -> Result<()> {
        self.evaluate_unchecked(dim, strain, state, stress, tangent, state_new)?;
        if stress.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("stress"));
        }
        Ok(())
    }

    fn evaluate_unchecked(
        &self,
        dim: usize,
        strain: &[f64],
        state: &[f64],
        stress: &mut [f64],
        tangent: &mut [f64],
        state_new: &mut [f64],
    ) -> Result<()> {
        if strain.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("strain"));
        }
        if state.len() < self.internal_width() || state_new.len() != state.len() {
            return Err(Error::ShapeMismatch {
                what: "internal state",
                expected: self.internal_width(),
                found: state.len(),
            });
        }
        match self {
            MaterialModel::LinearElastic { stiffness: c }
            | MaterialModel::Conductivity { conductivity: c } => {
                c.mul_vec_into(strain, stress);
                tangent.copy_from_slice(c.as_slice());
                state_new.copy_from_slice(state);
                Ok(())
            }
            MaterialModel::J2Plastic(p) => {
                state_new.copy_from_slice(state);
                j2_return(p, dim, strain, state, stress, tangent, state_new);
                Ok(())
            }
        }
    }

    /// Tangent at zero strain and given state (used for reference choices).
    pub fn elastic_tangent(&self, dim: usize) -> Matrix {
        match self {
            MaterialModel::LinearElastic { stiffness: c }
            | MaterialModel::Conductivity { conductivity: c } => c.clone(),
            MaterialModel::J2Plastic(p) => {
                let c = isotropic_3d(p.bulk, p.shear);
                if dim == 2 {
                    restrict_to_plane(&c)
                } else {
                    c
                }
            }
        }
    }
}

/// Radial return for J2 plasticity; `state_new` starts as a copy of `state`.
fn j2_return(
    p: &J2Params,
    dim: usize,
    strain: &[f64],
    state: &[f64],
    stress: &mut [f64],
    tangent: &mut [f64],
    state_new: &mut [f64],
) {
    let mut eps = [0.0; 6];
    if dim == 2 {
        for (k, &i) in PLANE_COMPONENTS.iter().enumerate() {
            eps[i] = strain[k];
        }
    } else {
        eps.copy_from_slice(&strain[..6]);
    }
    let plastic = &state[..6];
    let accumulated = state[6];

    let mut elastic = [0.0; 6];
    for i in 0..6 {
        elastic[i] = eps[i] - plastic[i];
    }
    let volumetric = elastic[0] + elastic[1] + elastic[2];
    let mut s_trial = [0.0; 6];
    for i in 0..6 {
        let dev = if i < 3 { elastic[i] - volumetric / 3.0 } else { elastic[i] };
        s_trial[i] = 2.0 * p.shear * dev;
    }
    let s_norm = sqrt(s_trial.iter().map(|v| v * v).sum());
    let sigma_eq = sqrt(1.5) * s_norm;
    let yield_now = p.yield_stress + p.hardening * accumulated;
    let overstress = sigma_eq - yield_now;

    let mut sigma = [0.0; 6];
    let mut c = isotropic_3d(p.bulk, p.shear);
    if overstress <= 0.0 {
        for i in 0..6 {
            sigma[i] = s_trial[i] + if i < 3 { p.bulk * volumetric } else { 0.0 };
        }
    } else {
        let three_g = 3.0 * p.shear;
        let delta = overstress / (three_g + p.hardening);
        let mut n = [0.0; 6];
        for i in 0..6 {
            n[i] = s_trial[i] / s_norm;
        }
        let shrink = 2.0 * p.shear * sqrt(1.5) * delta;
        for i in 0..6 {
            sigma[i] = s_trial[i] - shrink * n[i] + if i < 3 { p.bulk * volumetric } else { 0.0 };
            state_new[i] = plastic[i] + sqrt(1.5) * delta * n[i];
        }
        state_new[6] = accumulated + delta;

        let theta = 1.0 - three_g * delta / sigma_eq;
        let theta_bar = three_g / (three_g + p.hardening) - (1.0 - theta);
        let two_g = 2.0 * p.shear;
        for i in 0..6 {
            for j in 0..6 {
                let vol = if i < 3 && j < 3 { 1.0 } else { 0.0 };
                let ident = if i == j { 1.0 } else { 0.0 };
                let p_dev = ident - vol / 3.0;
                c[(i, j)] = p.bulk * vol + two_g * theta * p_dev - two_g * theta_bar * n[i] * n[j];
            }
        }
    }

    if dim == 2 {
        for (k, &i) in PLANE_COMPONENTS.iter().enumerate() {
            stress[k] = sigma[i];
        }
        tangent.copy_from_slice(restrict_to_plane(&c).as_slice());
    } else {
        stress[..6].copy_from_slice(&sigma);
        tangent.copy_from_slice(c.as_slice());
    }
}

/// Equivalent von Mises stress `√(3/2) ‖dev σ‖` of a 3D Mandel stress.
pub fn von_mises(sigma: &[f64; 6]) -> f64 {
    let mean = (sigma[0] + sigma[1] + sigma[2]) / 3.0;
    let mut s2 = 0.0;
    for (i, s) in sigma.iter().enumerate() {
        let d = if i < 3 { s - mean } else { *s };
        s2 += d * d;
    }
    sqrt(1.5 * s2)
}

/// Per-quadrature-point internal variables, `width` values per point.
#[derive(Clone, Debug, PartialEq)]
pub struct InternalState {
    width: usize,
    values: Vec<f64>,
}

impl InternalState {
    pub fn zeros(n_quad: usize, width: usize) -> Self {
        Self {
            width,
            values: alloc::vec![0.0; n_quad * width],
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn n_points(&self) -> usize {
        if self.width == 0 {
            0
        } else {
            self.values.len() / self.width
        }
    }

    #[inline]
    pub fn point(&self, q: usize) -> &[f64] {
        &self.values[q * self.width..(q + 1) * self.width]
    }

    #[inline]
    pub fn point_mut(&mut self, q: usize) -> &mut [f64] {
        &mut self.values[q * self.width..(q + 1) * self.width]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn j2() -> MaterialModel {
        MaterialModel::J2Plastic(J2Params {
            bulk: 1.2,
            shear: 0.7,
            yield_stress: 0.01,
            hardening: 0.05,
        })
    }

    fn eval(m: &MaterialModel, dim: usize, eps: &[f64], state: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let n = eps.len();
        let mut s = vec![0.0; n];
        let mut c = vec![0.0; n * n];
        let mut g = vec![0.0; state.len()];
        m.evaluate(dim, eps, state, &mut s, &mut c, &mut g).unwrap();
        (s, c, g)
    }

    #[test]
    fn identity_material_passes_strain_through() {
        let m = MaterialModel::LinearElastic {
            stiffness: Matrix::identity(3),
        };
        let (s, c, _) = eval(&m, 2, &[0.1, -0.2, 0.3], &[]);
        assert_eq!(s, vec![0.1, -0.2, 0.3]);
        assert_eq!(c, Matrix::identity(3).into_vec());
    }

    #[test]
    fn j2_elastic_regime() {
        let m = j2();
        let state = [0.0; 7];
        let eps = [1e-4, -0.5e-4, 0.2e-4, 0.0, 1e-5, 0.0];
        let (s, c, g) = eval(&m, 3, &eps, &state);
        let ce = isotropic_3d(1.2, 0.7);
        for (a, b) in s.iter().zip(ce.mul_vec(&eps)) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(c, ce.into_vec());
        assert_eq!(g, state.to_vec());
    }

    fn plastic_state() -> ([f64; 6], [f64; 7]) {
        let eps = [0.03, -0.01, 0.004, 0.006, -0.002, 0.011];
        let mut state = [0.0; 7];
        state[0] = 0.002;
        state[1] = -0.001;
        state[2] = -0.001;
        state[5] = 0.0007;
        state[6] = 0.003;
        (eps, state)
    }

    #[test]
    fn j2_return_lands_on_yield_surface() {
        let m = j2();
        let (eps, state) = plastic_state();
        let (s, _, g) = eval(&m, 3, &eps, &state);
        let sigma: [f64; 6] = s.try_into().unwrap();
        let tau = 0.01 + 0.05 * g[6];
        assert!(g[6] > state[6]);
        assert!((von_mises(&sigma) - tau).abs() < 1e-10 * 0.01);
    }

    #[test]
    fn j2_tangent_matches_finite_differences() {
        let m = j2();
        let (eps, state) = plastic_state();
        for dim in [2usize, 3] {
            let e: Vec<f64> = if dim == 3 {
                eps.to_vec()
            } else {
                PLANE_COMPONENTS.iter().map(|&i| eps[i]).collect()
            };
            let n = e.len();
            let (_, c, _) = eval(&m, dim, &e, &state);
            let step = 1e-6;
            let mut worst = 0.0_f64;
            let mut scale = 0.0_f64;
            for j in 0..n {
                let mut ep = e.clone();
                let mut em = e.clone();
                ep[j] += step;
                em[j] -= step;
                let (sp, _, _) = eval(&m, dim, &ep, &state);
                let (sm, _, _) = eval(&m, dim, &em, &state);
                for i in 0..n {
                    let fd = (sp[i] - sm[i]) / (2.0 * step);
                    worst = worst.max((fd - c[i * n + j]).abs());
                    scale = scale.max(c[i * n + j].abs());
                }
            }
            assert!(worst / scale < 1e-5, "dim {dim}: {}", worst / scale);
            let cm = Matrix::from_row_major(n, n, c).unwrap();
            assert!(cm.asymmetry() < 1e-13);
        }
    }

    #[test]
    fn evaluation_is_pure() {
        let m = j2();
        let (eps, state) = plastic_state();
        assert_eq!(eval(&m, 3, &eps, &state), eval(&m, 3, &eps, &state));
    }

    #[test]
    fn rejects_bad_inputs() {
        let m = j2();
        let mut s = [0.0; 6];
        let mut c = [0.0; 36];
        let mut g = [0.0; 7];
        assert_eq!(
            m.evaluate(3, &[f64::NAN, 0.0, 0.0, 0.0, 0.0, 0.0], &[0.0; 7], &mut s, &mut c, &mut g),
            Err(Error::NonFinite("strain"))
        );
        assert!(m.evaluate(3, &[0.0; 6], &[0.0; 3], &mut s, &mut c, &mut g[..3]).is_err());
        let bad = MaterialModel::J2Plastic(J2Params {
            bulk: 1.0,
            shear: 1.0,
            yield_stress: 1.0,
            hardening: -1.0,
        });
        assert!(bad.validate(Physics::Elasticity, 3).is_err());
        let nonsym = MaterialModel::LinearElastic {
            stiffness: Matrix::from_rows(&[
                vec![2.0, 0.5, 0.0],
                vec![0.0, 2.0, 0.0],
                vec![0.0, 0.0, 2.0],
            ])
            .unwrap(),
        };
        assert!(nonsym.validate(Physics::Elasticity, 2).is_err());
        let cond = MaterialModel::isotropic_conductor(2.0, 2).unwrap();
        assert!(cond.validate(Physics::Elasticity, 2).is_err());
        assert!(cond.validate(Physics::Thermal, 2).is_ok());
    }
}
