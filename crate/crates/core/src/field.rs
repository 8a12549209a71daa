//! Nodal, quadrature and tangent fields on a periodic grid.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::mandel::mandel_size;

/// Which boundary-value problem the grid carries.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Physics {
    /// Small-strain mechanics: `d` displacement components, Mandel strains.
    Elasticity,
    /// Scalar conduction: one temperature, `d` gradient components.
    Thermal,
}

impl Physics {
    /// Unknowns per node.
    pub fn field_components(self, dim: usize) -> usize {
        match self {
            Physics::Elasticity => dim,
            Physics::Thermal => 1,
        }
    }

    /// Gradient (strain or temperature gradient) components per quadrature point.
    pub fn gradient_components(self, dim: usize) -> usize {
        match self {
            Physics::Elasticity => mandel_size(dim),
            Physics::Thermal => dim,
        }
    }
}

/// Per-node values, component-major: `values[c · n_nodes + I]`.
#[derive(Clone, Debug, PartialEq)]
pub struct NodalField {
    components: usize,
    n_nodes: usize,
    values: Vec<f64>,
}

impl NodalField {
    pub fn zeros(components: usize, n_nodes: usize) -> Self {
        Self {
            components,
            n_nodes,
            values: vec![0.0; components * n_nodes],
        }
    }

    pub fn from_vec(components: usize, n_nodes: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != components * n_nodes {
            return Err(Error::ShapeMismatch {
                what: "nodal field",
                expected: components * n_nodes,
                found: values.len(),
            });
        }
        Ok(Self {
            components,
            n_nodes,
            values,
        })
    }

    #[inline]
    pub fn components(&self) -> usize {
        self.components
    }

    #[inline]
    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    pub fn component(&self, c: usize) -> &[f64] {
        &self.values[c * self.n_nodes..(c + 1) * self.n_nodes]
    }

    pub fn component_mut(&mut self, c: usize) -> &mut [f64] {
        &mut self.values[c * self.n_nodes..(c + 1) * self.n_nodes]
    }

    /// Mean of each component over all nodes.
    pub fn component_means(&self) -> Vec<f64> {
        (0..self.components)
            .map(|c| self.component(c).iter().sum::<f64>() / self.n_nodes as f64)
            .collect()
    }

    /// Removes the per-component mean (the rigid translations).
    pub fn remove_mean(&mut self) {
        for c in 0..self.components {
            let n = self.n_nodes;
            remove_mean(&mut self.values[c * n..(c + 1) * n]);
        }
    }
}

pub(crate) fn remove_mean(v: &mut [f64]) {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= mean);
}

/// Per-quadrature-point values, component-major: `values[r · n_quad + Q]`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadField {
    components: usize,
    n_quad: usize,
    values: Vec<f64>,
}

impl QuadField {
    pub fn zeros(components: usize, n_quad: usize) -> Self {
        Self {
            components,
            n_quad,
            values: vec![0.0; components * n_quad],
        }
    }

    pub fn from_vec(components: usize, n_quad: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != components * n_quad {
            return Err(Error::ShapeMismatch {
                what: "quadrature field",
                expected: components * n_quad,
                found: values.len(),
            });
        }
        Ok(Self {
            components,
            n_quad,
            values,
        })
    }

    /// Field equal to `v` at every quadrature point.
    pub fn uniform(v: &[f64], n_quad: usize) -> Self {
        let mut f = Self::zeros(v.len(), n_quad);
        for (c, &x) in v.iter().enumerate() {
            f.component_mut(c).fill(x);
        }
        f
    }

    #[inline]
    pub fn components(&self) -> usize {
        self.components
    }

    #[inline]
    pub fn n_quad(&self) -> usize {
        self.n_quad
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    pub fn component(&self, c: usize) -> &[f64] {
        &self.values[c * self.n_quad..(c + 1) * self.n_quad]
    }

    pub fn component_mut(&mut self, c: usize) -> &mut [f64] {
        &mut self.values[c * self.n_quad..(c + 1) * self.n_quad]
    }

    /// Values of all components at quadrature point `q`.
    pub fn point(&self, q: usize) -> Vec<f64> {
        (0..self.components)
            .map(|c| self.values[c * self.n_quad + q])
            .collect()
    }

    pub fn set_point(&mut self, q: usize, v: &[f64]) {
        for (c, &x) in v.iter().enumerate() {
            self.values[c * self.n_quad + q] = x;
        }
    }
}

/// One symmetric `m × m` tangent per quadrature point, point-major.
#[derive(Clone, Debug, PartialEq)]
pub struct TangentField {
    size: usize,
    n_quad: usize,
    values: Vec<f64>,
    pixel_constant: bool,
}

impl TangentField {
    pub fn zeros(size: usize, n_quad: usize) -> Self {
        Self {
            size,
            n_quad,
            values: vec![0.0; size * size * n_quad],
            pixel_constant: false,
        }
    }

    /// The same tangent at every point.
    pub fn uniform(c: &Matrix, n_quad: usize) -> Self {
        let size = c.rows();
        let mut values = Vec::with_capacity(size * size * n_quad);
        for _ in 0..n_quad {
            values.extend_from_slice(c.as_slice());
        }
        Self {
            size,
            n_quad,
            values,
            pixel_constant: true,
        }
    }

    #[inline]
    pub fn size(&self) -> usize {
        self.size
    }

    #[inline]
    pub fn n_quad(&self) -> usize {
        self.n_quad
    }

    #[inline]
    pub fn point(&self, q: usize) -> &[f64] {
        let s = self.size * self.size;
        &self.values[q * s..(q + 1) * s]
    }

    #[inline]
    pub fn point_mut(&mut self, q: usize) -> &mut [f64] {
        let s = self.size * self.size;
        &mut self.values[q * s..(q + 1) * s]
    }

    pub fn point_matrix(&self, q: usize) -> Matrix {
        Matrix::from_row_major(self.size, self.size, self.point(q).to_vec())
            .expect("tangent block has size²  entries")
    }

    pub fn set_point(&mut self, q: usize, c: &Matrix) {
        self.point_mut(q).copy_from_slice(c.as_slice());
    }

    /// Marks the tangent as constant over each pixel, enabling per-pixel
    /// shortcuts in the bound computation.
    pub fn set_pixel_constant(&mut self, flag: bool) {
        self.pixel_constant = flag;
    }

    pub fn is_pixel_constant(&self) -> bool {
        self.pixel_constant
    }

    /// `Σ_Q w^Q C(Q) / Σ_Q w^Q` for weights indexed by point.
    pub fn weighted_mean(&self, weight: impl Fn(usize) -> f64) -> Matrix {
        let mut acc = vec![0.0; self.size * self.size];
        let mut total = 0.0;
        for q in 0..self.n_quad {
            let w = weight(q);
            total += w;
            for (a, v) in acc.iter_mut().zip(self.point(q)) {
                *a += w * v;
            }
        }
        acc.iter_mut().for_each(|a| *a /= total);
        Matrix::from_row_major(self.size, self.size, acc).expect("square accumulator")
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }
}
