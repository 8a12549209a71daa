//! Dense assembly on tiny grids and element-wise two-sided bounds on the
//! spectrum of the preconditioned operator.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::FRAC_1_SQRT_2;

use crate::error::{Error, Result};
use crate::field::{Physics, TangentField};
use crate::linalg::Matrix;
use crate::mandel::mandel_pairs;
use crate::math::sqrt;
use crate::operator::{Discretization, Weighting};

/// Largest number of unknowns accepted by the dense routines.
pub const DENSE_LIMIT: usize = 4096;

fn guard(n: usize) -> Result<()> {
    if n > DENSE_LIMIT {
        return Err(Error::SizeGuard {
            limit: DENSE_LIMIT,
            requested: n,
        });
    }
    Ok(())
}

/// `Dᵀ W C D` column by column from the matrix-free operator.
pub fn dense_assemble(disc: &Discretization, tangent: &TangentField) -> Result<Matrix> {
    let n = disc.n_dofs();
    guard(n)?;
    if tangent.size() != disc.gradient_components() || tangent.n_quad() != disc.layout().n_quad() {
        return Err(Error::ShapeMismatch {
            what: "tangent field",
            expected: disc.gradient_components() * disc.layout().n_quad(),
            found: tangent.size() * tangent.n_quad(),
        });
    }
    let mut k = Matrix::zeros(n, n);
    let mut e = vec![0.0; n];
    let mut col = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        disc.apply_k_into(tangent, &e, &mut col, Weighting::Quadrature);
        e[j] = 0.0;
        for (i, v) in col.iter().enumerate() {
            k[(i, j)] = *v;
        }
    }
    Ok(k)
}

/// Explicit gradient matrix `D` (rows `r · N_Q + Q`, columns `c · N_I + I`)
/// built straight from the stencil tables.
pub fn dense_gradient(disc: &Discretization) -> Result<Matrix> {
    let l = disc.layout();
    let n = disc.n_dofs();
    let rows = disc.n_gradient_values();
    guard(n)?;
    let ni = l.n_nodes();
    let nq = l.n_quad();
    let mut d = Matrix::zeros(rows, n);
    for q in 0..nq {
        let (pixel, k) = l.quad_parts(q);
        let coords = l.pixel_coords(pixel);
        for node in &l.stencil().quad_points()[k].nodes {
            let i = l.node_index(l.neighbor(coords, node.offset), node.node_type);
            match disc.physics() {
                Physics::Thermal => {
                    for beta in 0..disc.dim() {
                        d[(beta * nq + q, i)] += node.grad[beta];
                    }
                }
                Physics::Elasticity => {
                    for (r, &(a, b)) in mandel_pairs(disc.dim()).iter().enumerate() {
                        if a == b {
                            d[(r * nq + q, a * ni + i)] += node.grad[a];
                        } else {
                            d[(r * nq + q, a * ni + i)] += FRAC_1_SQRT_2 * node.grad[b];
                            d[(r * nq + q, b * ni + i)] += FRAC_1_SQRT_2 * node.grad[a];
                        }
                    }
                }
            }
        }
    }
    Ok(d)
}

/// Diagonal of `W`, one weight per row of [`dense_gradient`].
pub fn dense_weights(disc: &Discretization) -> Vec<f64> {
    let nq = disc.layout().n_quad();
    (0..disc.n_gradient_values())
        .map(|row| disc.layout().weight(row % nq))
        .collect()
}

/// Block-diagonal `C` in the row ordering of [`dense_gradient`].
pub fn dense_tangent(disc: &Discretization, tangent: &TangentField) -> Result<Matrix> {
    let rows = disc.n_gradient_values();
    guard(rows)?;
    let nq = disc.layout().n_quad();
    let m = disc.gradient_components();
    let mut c = Matrix::zeros(rows, rows);
    for q in 0..nq {
        let t = tangent.point(q);
        for r in 0..m {
            for s in 0..m {
                c[(r * nq + q, s * nq + q)] = t[r * m + s];
            }
        }
    }
    Ok(c)
}

/// Sorted lower and upper bound sequences, one entry per unknown.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundSequences {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BoundSequences {
    /// Whether the ascending non-trivial eigenvalues `mu` (the `kernel_dim`
    /// zero modes removed) satisfy `lower[j + kernel_dim] ≤ mu[j] ≤ upper[j]`,
    /// i.e. lie inside the bounds aligned from either end, up to `rel_tol`.
    pub fn contains(&self, mu: &[f64], kernel_dim: usize, rel_tol: f64) -> bool {
        mu.len() + kernel_dim == self.lower.len()
            && mu.iter().enumerate().all(|(j, &v)| {
                v >= self.lower[j + kernel_dim] * (1.0 - rel_tol) && v <= self.upper[j] * (1.0 + rel_tol)
            })
    }
}

/// Per-point extreme eigenvalues of `C_ref⁻¹ C(Q)`.
pub fn point_extremes(disc: &Discretization, tangent: &TangentField, c_ref: &Matrix) -> Result<Vec<(f64, f64)>> {
    let m = disc.gradient_components();
    if c_ref.rows() != m || c_ref.cols() != m {
        return Err(Error::ShapeMismatch {
            what: "reference tangent",
            expected: m * m,
            found: c_ref.rows() * c_ref.cols(),
        });
    }
    let chol = c_ref.cholesky()?;
    let l = disc.layout();
    let nq = l.n_quad();
    let np = l.n_pixels();
    let extremes = |q: usize| -> Result<(f64, f64)> {
        let c = tangent.point_matrix(q);
        let (lo, hi) = c.generalized_extremes(&chol);
        if !(lo > 0.0) {
            return Err(Error::NotPositiveDefinite("tangent"));
        }
        Ok((lo, hi))
    };
    if tangent.is_pixel_constant() {
        let per_pixel = (0..np).map(extremes).collect::<Result<Vec<_>>>()?;
        Ok((0..nq).map(|q| per_pixel[q % np]).collect())
    } else {
        (0..nq).map(extremes).collect()
    }
}

/// For every node the minimum and maximum of the point extremes over the
/// quadrature points whose stencil contains the node, each repeated once
/// per field component, then sorted.
pub fn eigenvalue_bounds(disc: &Discretization, tangent: &TangentField, c_ref: &Matrix) -> Result<BoundSequences> {
    let pts = point_extremes(disc, tangent, c_ref)?;
    let l = disc.layout();
    let ni = l.n_nodes();
    let mut lo = vec![f64::INFINITY; ni];
    let mut hi = vec![f64::NEG_INFINITY; ni];
    for (q, &(pl, ph)) in pts.iter().enumerate() {
        for node in disc.point_nodes(q) {
            lo[node] = lo[node].min(pl);
            hi[node] = hi[node].max(ph);
        }
    }
    let c = disc.field_components();
    let mut lower: Vec<f64> = lo.iter().flat_map(|&v| core::iter::repeat(v).take(c)).collect();
    let mut upper: Vec<f64> = hi.iter().flat_map(|&v| core::iter::repeat(v).take(c)).collect();
    lower.sort_by(f64::total_cmp);
    upper.sort_by(f64::total_cmp);
    Ok(BoundSequences { lower, upper })
}

/// `max λ^U / min λ^L`, an upper bound on the condition number of the
/// preconditioned operator.
pub fn condition_estimate(bounds: &BoundSequences) -> f64 {
    let lo = bounds.lower.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = bounds.upper.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    hi / lo
}

/// Non-trivial eigenvalues of the pencil `(K, K_ref)` on the complement of
/// the common kernel, ascending. `k` and `k_ref` are dense and symmetric.
pub fn pencil_spectrum(k: &Matrix, k_ref: &Matrix, kernel_dim: usize) -> Vec<f64> {
    let n = k.rows();
    let (vals, vecs) = k_ref.symmetric_eigen();
    let keep: Vec<usize> = (kernel_dim..n).collect();
    let r = keep.len();
    // Columns V Λ^{-1/2} spanning the range of K_ref.
    let mut basis = Matrix::zeros(n, r);
    for (j, &col) in keep.iter().enumerate() {
        let s = 1.0 / sqrt(vals[col]);
        for i in 0..n {
            basis[(i, j)] = vecs[(i, col)] * s;
        }
    }
    basis.transpose().matmul(&k.matmul(&basis)).symmetric_eigenvalues()
}
