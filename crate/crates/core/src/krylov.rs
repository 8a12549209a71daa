//! Preconditioned conjugate gradients with stopping in the `M⁻¹`-norm.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::sqrt;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PcgOptions {
    /// Relative tolerance on `‖r‖_{M⁻¹}`.
    pub eta: f64,
    pub max_iter: usize,
    /// Absolute tolerance on `‖r‖_{M⁻¹}`, below which the residual is
    /// treated as round-off.
    pub abs_floor: f64,
}

impl PcgOptions {
    pub fn new(eta: f64, max_iter: usize) -> Self {
        Self {
            eta,
            max_iter,
            abs_floor: 0.0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PcgOutcome {
    pub iterations: usize,
    pub converged: bool,
    /// `‖r_k‖_{M⁻¹}` for `k = 0 ..= iterations`.
    pub history: Vec<f64>,
}

impl PcgOutcome {
    pub fn initial_norm(&self) -> f64 {
        self.history.first().copied().unwrap_or(0.0)
    }

    pub fn final_norm(&self) -> f64 {
        self.history.last().copied().unwrap_or(0.0)
    }
}

/// `‖r‖²_{M⁻¹}` with round-off negatives clamped; NaN and infinity are errors.
fn checked(rz: f64) -> Result<f64> {
    if rz.is_finite() {
        Ok(rz.max(0.0))
    } else {
        Err(Error::NonFinite("CG residual"))
    }
}

/// Solves `A x = b` starting from the given `x`.
///
/// `inner` is the inner product in which `A` and `M⁻¹` are self-adjoint
/// (the Euclidean one for the displacement formulation). `observer` sees
/// every iterate, `x_0` included.
pub fn pcg<A, M, I>(
    mut apply_a: A,
    mut apply_m: M,
    inner: I,
    b: &[f64],
    x: &mut [f64],
    options: &PcgOptions,
    mut observer: Option<&mut dyn FnMut(usize, &[f64])>,
) -> Result<PcgOutcome>
where
    A: FnMut(&[f64], &mut [f64]) -> Result<()>,
    M: FnMut(&[f64], &mut [f64]) -> Result<()>,
    I: Fn(&[f64], &[f64]) -> f64,
{
    let n = b.len();
    if x.len() != n {
        return Err(Error::ShapeMismatch {
            what: "CG iterate",
            expected: n,
            found: x.len(),
        });
    }
    let mut r = b.to_vec();
    let mut q = vec![0.0; n];
    if x.iter().any(|v| *v != 0.0) {
        apply_a(x, &mut q)?;
        r.iter_mut().zip(&q).for_each(|(ri, qi)| *ri -= qi);
    }
    let mut z = vec![0.0; n];
    apply_m(&r, &mut z)?;
    let mut rz = checked(inner(&r, &z))?;
    let norm0 = sqrt(rz);
    let mut outcome = PcgOutcome {
        history: vec![norm0],
        ..Default::default()
    };
    if let Some(obs) = observer.as_deref_mut() {
        obs(0, x);
    }
    let target = (options.eta * norm0).max(options.abs_floor);
    if norm0 <= target || norm0 == 0.0 {
        outcome.converged = true;
        return Ok(outcome);
    }
    let mut p = z.clone();
    for k in 1..=options.max_iter {
        apply_a(&p, &mut q)?;
        let curvature = inner(&p, &q);
        if !(curvature > 0.0) {
            return Err(Error::IndefiniteOperator {
                iteration: k,
                curvature,
            });
        }
        let alpha = rz / curvature;
        x.iter_mut().zip(&p).for_each(|(xi, pi)| *xi += alpha * pi);
        r.iter_mut().zip(&q).for_each(|(ri, qi)| *ri -= alpha * qi);
        apply_m(&r, &mut z)?;
        let rz_new = checked(inner(&r, &z))?;
        let norm = sqrt(rz_new);
        outcome.history.push(norm);
        outcome.iterations = k;
        if let Some(obs) = observer.as_deref_mut() {
            obs(k, x);
        }
        if norm <= target {
            outcome.converged = true;
            return Ok(outcome);
        }
        let beta = rz_new / rz;
        rz = rz_new;
        p.iter_mut().zip(&z).for_each(|(pi, zi)| *pi = zi + beta * *pi);
    }
    Ok(outcome)
}
