//! Mandel notation for symmetric second- and fourth-order tensors.
//!
//! Component order is `(11, 22, 12)` in 2D and `(11, 22, 33, 23, 13, 12)` in
//! 3D. Off-diagonal entries carry a `√2` factor so that Euclidean norms and dot
//! products of Mandel vectors equal Frobenius norms and double contractions.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::SQRT_2;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

const PAIRS_2D: [(usize, usize); 3] = [(0, 0), (1, 1), (0, 1)];
const PAIRS_3D: [(usize, usize); 6] = [(0, 0), (1, 1), (2, 2), (1, 2), (0, 2), (0, 1)];

/// Positions of the 2D components inside the 3D Mandel vector.
pub const PLANE_COMPONENTS: [usize; 3] = [0, 1, 5];

/// Number of Mandel components `d (d + 1) / 2`.
#[inline]
pub fn mandel_size(dim: usize) -> usize {
    dim * (dim + 1) / 2
}

/// Index pairs `(a, b)` of each Mandel component.
pub fn mandel_pairs(dim: usize) -> &'static [(usize, usize)] {
    match dim {
        2 => &PAIRS_2D,
        3 => &PAIRS_3D,
        _ => panic!("Mandel notation defined for d = 2, 3 (got {dim})"),
    }
}

#[inline]
fn factor(pair: (usize, usize)) -> f64 {
    if pair.0 == pair.1 {
        1.0
    } else {
        SQRT_2
    }
}

/// Mandel vector of a `d × d` tensor given row-major; the input is symmetrized.
pub fn to_mandel_strain(dim: usize, tensor: &[f64]) -> Vec<f64> {
    assert_eq!(tensor.len(), dim * dim);
    mandel_pairs(dim)
        .iter()
        .map(|&(a, b)| 0.5 * (tensor[a * dim + b] + tensor[b * dim + a]) * factor((a, b)))
        .collect()
}

/// Symmetric `d × d` tensor (row-major) from its Mandel vector.
pub fn from_mandel(dim: usize, v: &[f64]) -> Vec<f64> {
    let mut t = vec![0.0; dim * dim];
    for (&(a, b), &x) in mandel_pairs(dim).iter().zip(v) {
        let val = x / factor((a, b));
        t[a * dim + b] = val;
        t[b * dim + a] = val;
    }
    t
}

/// Mandel matrix of a fourth-order tensor stored as a flat `d⁴` array with
/// index `((i d + j) d + k) d + l`. Minor symmetries are assumed.
pub fn to_mandel_stiffness(dim: usize, c4: &[f64]) -> Matrix {
    assert_eq!(c4.len(), dim * dim * dim * dim);
    let pairs = mandel_pairs(dim);
    let m = pairs.len();
    let mut out = Matrix::zeros(m, m);
    for (r, &(i, j)) in pairs.iter().enumerate() {
        for (s, &(k, l)) in pairs.iter().enumerate() {
            out[(r, s)] = factor((i, j)) * factor((k, l)) * c4[((i * dim + j) * dim + k) * dim + l];
        }
    }
    out
}

/// Mandel image of the unit vector `δ_ab` (the identity tensor).
pub fn identity_vector(dim: usize) -> Vec<f64> {
    mandel_pairs(dim)
        .iter()
        .map(|&(a, b)| if a == b { 1.0 } else { 0.0 })
        .collect()
}

/// Trace of a Mandel vector.
pub fn trace(dim: usize, v: &[f64]) -> f64 {
    v.iter().take(dim).sum()
}

/// Isotropic stiffness `3K P_vol + 2G P_dev` in Mandel form.
///
/// For `dim = 2` the in-plane rows and columns of the 3D tensor are kept
/// (plane strain).
pub fn isotropic_stiffness(bulk: f64, shear: f64, dim: usize) -> Result<Matrix> {
    if !(bulk > 0.0 && bulk.is_finite()) || !(shear > 0.0 && shear.is_finite()) {
        return Err(Error::InvalidMaterial(alloc::format!(
            "isotropic moduli must be positive (K = {bulk}, G = {shear})"
        )));
    }
    let full = isotropic_3d(bulk, shear);
    Ok(match dim {
        3 => full,
        2 => restrict_to_plane(&full),
        _ => {
            return Err(Error::InvalidMaterial(alloc::format!(
                "unsupported dimension {dim}"
            )))
        }
    })
}

pub(crate) fn isotropic_3d(bulk: f64, shear: f64) -> Matrix {
    let mut c = Matrix::zeros(6, 6);
    let lambda = bulk - 2.0 * shear / 3.0;
    for i in 0..3 {
        for j in 0..3 {
            c[(i, j)] = lambda;
        }
        c[(i, i)] += 2.0 * shear;
    }
    for i in 3..6 {
        c[(i, i)] = 2.0 * shear;
    }
    c
}

/// Rows and columns `(11, 22, 12)` of a 3D Mandel matrix.
pub fn restrict_to_plane(c: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(3, 3);
    for (r, &i) in PLANE_COMPONENTS.iter().enumerate() {
        for (s, &j) in PLANE_COMPONENTS.iter().enumerate() {
            out[(r, s)] = c[(i, j)];
        }
    }
    out
}
