//! Matrix-free gradient `D`, weighted divergence `Dᵀ W`, and the fused
//! stiffness action `Dᵀ W C D` as short-kernel loops over the periodic grid.

use alloc::vec::Vec;
use core::f64::consts::FRAC_1_SQRT_2;

use crate::error::{Error, Result};
use crate::field::{NodalField, Physics, QuadField, TangentField};
use crate::grid::{GridLayout, MAX_DIM};
use crate::mandel::mandel_pairs;

/// Whether the divergence carries the quadrature weights.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Weighting {
    /// `Dᵀ W`, the discretised weak form.
    Quadrature,
    /// Plain `Dᵀ`, used by the strain-based projection.
    Unit,
}

#[derive(Clone, Copy, Debug)]
struct Slot {
    offset: [usize; MAX_DIM],
    node_type: usize,
}

#[derive(Clone, Copy, Debug)]
struct Entry {
    slot: usize,
    comp: usize,
    row: usize,
    coef: f64,
}

#[derive(Clone, Debug)]
struct QuadKernel {
    weight: f64,
    slots: Vec<Slot>,
    entries: Vec<Entry>,
}

/// A grid together with the physics it discretises; owns the gradient kernels.
#[derive(Clone, Debug)]
pub struct Discretization {
    layout: GridLayout,
    physics: Physics,
    kernels: Vec<QuadKernel>,
}

impl Discretization {
    pub fn new(layout: GridLayout, physics: Physics) -> Self {
        let dim = layout.dim();
        let kernels = layout
            .stencil()
            .quad_points()
            .iter()
            .map(|qp| {
                let slots = qp
                    .nodes
                    .iter()
                    .map(|n| Slot {
                        offset: n.offset,
                        node_type: n.node_type,
                    })
                    .collect();
                let mut entries = Vec::new();
                for (slot, n) in qp.nodes.iter().enumerate() {
                    let mut push = |comp, row, coef: f64| {
                        if coef != 0.0 {
                            entries.push(Entry {
                                slot,
                                comp,
                                row,
                                coef,
                            });
                        }
                    };
                    match physics {
                        Physics::Thermal => {
                            for (row, &g) in n.grad.iter().enumerate().take(dim) {
                                push(0, row, g);
                            }
                        }
                        Physics::Elasticity => {
                            for (row, &(a, b)) in mandel_pairs(dim).iter().enumerate() {
                                if a == b {
                                    push(a, row, n.grad[a]);
                                } else {
                                    push(a, row, FRAC_1_SQRT_2 * n.grad[b]);
                                    push(b, row, FRAC_1_SQRT_2 * n.grad[a]);
                                }
                            }
                        }
                    }
                }
                QuadKernel {
                    weight: qp.weight,
                    slots,
                    entries,
                }
            })
            .collect();
        Self {
            layout,
            physics,
            kernels,
        }
    }

    #[inline]
    pub fn layout(&self) -> &GridLayout {
        &self.layout
    }

    #[inline]
    pub fn physics(&self) -> Physics {
        self.physics
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.layout.dim()
    }

    /// Unknowns per node `c`.
    #[inline]
    pub fn field_components(&self) -> usize {
        self.physics.field_components(self.dim())
    }

    /// Gradient components per quadrature point `m`.
    #[inline]
    pub fn gradient_components(&self) -> usize {
        self.physics.gradient_components(self.dim())
    }

    /// Total number of nodal unknowns `c · N_I`.
    #[inline]
    pub fn n_dofs(&self) -> usize {
        self.field_components() * self.layout.n_nodes()
    }

    /// Length of a quadrature field `m · N_Q`.
    #[inline]
    pub fn n_gradient_values(&self) -> usize {
        self.gradient_components() * self.layout.n_quad()
    }

    pub fn zero_nodal(&self) -> NodalField {
        NodalField::zeros(self.field_components(), self.layout.n_nodes())
    }

    pub fn zero_quad(&self) -> QuadField {
        QuadField::zeros(self.gradient_components(), self.layout.n_quad())
    }

    fn check_nodal(&self, u: &NodalField) -> Result<()> {
        if u.components() != self.field_components() || u.n_nodes() != self.layout.n_nodes() {
            return Err(Error::ShapeMismatch {
                what: "nodal field",
                expected: self.n_dofs(),
                found: u.as_slice().len(),
            });
        }
        Ok(())
    }

    fn check_quad(&self, s: &QuadField) -> Result<()> {
        if s.components() != self.gradient_components() || s.n_quad() != self.layout.n_quad() {
            return Err(Error::ShapeMismatch {
                what: "quadrature field",
                expected: self.n_gradient_values(),
                found: s.as_slice().len(),
            });
        }
        Ok(())
    }

    fn check_tangent(&self, c: &TangentField) -> Result<()> {
        if c.size() != self.gradient_components() || c.n_quad() != self.layout.n_quad() {
            return Err(Error::ShapeMismatch {
                what: "tangent field",
                expected: self.gradient_components() * self.layout.n_quad(),
                found: c.size() * c.n_quad(),
            });
        }
        Ok(())
    }

    /// `D u`.
    pub fn gradient(&self, u: &NodalField) -> Result<QuadField> {
        self.check_nodal(u)?;
        let mut out = self.zero_quad();
        self.gradient_into(u.as_slice(), out.as_mut_slice());
        Ok(out)
    }

    /// `Dᵀ W s`.
    pub fn divergence(&self, s: &QuadField) -> Result<NodalField> {
        self.divergence_with(s, Weighting::Quadrature)
    }

    pub fn divergence_with(&self, s: &QuadField, weighting: Weighting) -> Result<NodalField> {
        self.check_quad(s)?;
        let mut out = self.zero_nodal();
        self.divergence_into(s.as_slice(), out.as_mut_slice(), weighting);
        Ok(out)
    }

    /// `Dᵀ W C D u` in one sweep over the quadrature points.
    pub fn apply_k(&self, tangent: &TangentField, u: &NodalField) -> Result<NodalField> {
        self.check_tangent(tangent)?;
        self.check_nodal(u)?;
        let mut out = self.zero_nodal();
        self.apply_k_into(tangent, u.as_slice(), out.as_mut_slice(), Weighting::Quadrature);
        Ok(out)
    }

    /// Calls `f(pixel, q, Q, node indices)` for every quadrature point.
    #[inline]
    fn for_each_point(&self, mut f: impl FnMut(&QuadKernel, usize, &[usize])) {
        let l = &self.layout;
        let dims = l.dims3();
        let np = l.n_pixels();
        let mut idx = [0usize; 8];
        let mut pixel = 0;
        for c0 in 0..dims[0] {
            for c1 in 0..dims[1] {
                for c2 in 0..dims[2] {
                    let c = [c0, c1, c2];
                    for (k, kern) in self.kernels.iter().enumerate() {
                        for (s, slot) in kern.slots.iter().enumerate() {
                            idx[s] = slot.node_type * np + l.neighbor(c, slot.offset);
                        }
                        f(kern, k * np + pixel, &idx[..kern.slots.len()]);
                    }
                    pixel += 1;
                }
            }
        }
    }

    pub fn gradient_into(&self, u: &[f64], out: &mut [f64]) {
        let ni = self.layout.n_nodes();
        let nq = self.layout.n_quad();
        out.fill(0.0);
        self.for_each_point(|kern, q, idx| {
            for e in &kern.entries {
                out[e.row * nq + q] += e.coef * u[e.comp * ni + idx[e.slot]];
            }
        });
    }

    pub fn divergence_into(&self, s: &[f64], out: &mut [f64], weighting: Weighting) {
        let ni = self.layout.n_nodes();
        let nq = self.layout.n_quad();
        out.fill(0.0);
        self.for_each_point(|kern, q, idx| {
            let w = match weighting {
                Weighting::Quadrature => kern.weight,
                Weighting::Unit => 1.0,
            };
            for e in &kern.entries {
                out[e.comp * ni + idx[e.slot]] += e.coef * w * s[e.row * nq + q];
            }
        });
    }

    pub fn apply_k_into(&self, tangent: &TangentField, u: &[f64], out: &mut [f64], weighting: Weighting) {
        let ni = self.layout.n_nodes();
        let m = self.gradient_components();
        out.fill(0.0);
        let mut grad = [0.0; 6];
        let mut flux = [0.0; 6];
        self.for_each_point(|kern, q, idx| {
            grad[..m].fill(0.0);
            for e in &kern.entries {
                grad[e.row] += e.coef * u[e.comp * ni + idx[e.slot]];
            }
            let c = tangent.point(q);
            let w = match weighting {
                Weighting::Quadrature => kern.weight,
                Weighting::Unit => 1.0,
            };
            for r in 0..m {
                let row = &c[r * m..(r + 1) * m];
                flux[r] = w * row.iter().zip(&grad[..m]).map(|(a, b)| a * b).sum::<f64>();
            }
            for e in &kern.entries {
                out[e.comp * ni + idx[e.slot]] += e.coef * flux[e.row];
            }
        });
    }

    /// Applies a uniform tangent without materialising a tangent field.
    pub fn apply_uniform_into(&self, c: &[f64], u: &[f64], out: &mut [f64], weighting: Weighting) {
        let ni = self.layout.n_nodes();
        let m = self.gradient_components();
        out.fill(0.0);
        let mut grad = [0.0; 6];
        let mut flux = [0.0; 6];
        self.for_each_point(|kern, _q, idx| {
            grad[..m].fill(0.0);
            for e in &kern.entries {
                grad[e.row] += e.coef * u[e.comp * ni + idx[e.slot]];
            }
            let w = match weighting {
                Weighting::Quadrature => kern.weight,
                Weighting::Unit => 1.0,
            };
            for r in 0..m {
                flux[r] = w * c[r * m..(r + 1) * m].iter().zip(&grad[..m]).map(|(a, b)| a * b).sum::<f64>();
            }
            for e in &kern.entries {
                out[e.comp * ni + idx[e.slot]] += e.coef * flux[e.row];
            }
        });
    }

    /// `Σ_Q w^Q a(Q)·b(Q)` over all components.
    pub fn weighted_dot(&self, a: &[f64], b: &[f64]) -> f64 {
        let nq = self.layout.n_quad();
        let np = self.layout.n_pixels();
        let mut acc = 0.0;
        for (r, (ar, br)) in a.chunks(nq).zip(b.chunks(nq)).enumerate() {
            let _ = r;
            for (k, kern) in self.kernels.iter().enumerate() {
                let s: f64 = ar[k * np..(k + 1) * np]
                    .iter()
                    .zip(&br[k * np..(k + 1) * np])
                    .map(|(x, y)| x * y)
                    .sum();
                acc += kern.weight * s;
            }
        }
        acc
    }

    /// Volume average `(1/|Y|) Σ_Q w^Q s(Q)` per component.
    pub fn volume_average(&self, s: &QuadField) -> Result<Vec<f64>> {
        self.check_quad(s)?;
        let np = self.layout.n_pixels();
        let volume = self.layout.cell().volume();
        Ok((0..s.components())
            .map(|c| {
                let comp = s.component(c);
                let mut acc = 0.0;
                for (k, kern) in self.kernels.iter().enumerate() {
                    let part: f64 = comp[k * np..(k + 1) * np].iter().sum();
                    acc += kern.weight * part;
                }
                acc / volume
            })
            .collect())
    }

    /// Volume-averaged tangent `Σ_Q w^Q C(Q) / |Y|`.
    pub fn mean_tangent(&self, tangent: &TangentField) -> crate::linalg::Matrix {
        tangent.weighted_mean(|q| self.layout.weight(q))
    }

    /// Number of nodes touching one quadrature point, per local point.
    pub fn support_sizes(&self) -> Vec<usize> {
        self.kernels.iter().map(|k| k.slots.len()).collect()
    }

    /// Global node indices touching quadrature point `Q`.
    pub fn point_nodes(&self, quad: usize) -> Vec<usize> {
        let l = &self.layout;
        let (pixel, k) = l.quad_parts(quad);
        let c = l.pixel_coords(pixel);
        self.kernels[k]
            .slots
            .iter()
            .map(|s| l.node_index(l.neighbor(c, s.offset), s.node_type))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{CellSpec, StencilKind};
    use crate::linalg::{dot, Matrix};
    use crate::mandel::to_mandel_strain;

    fn disc(dims: &[usize], kind: StencilKind, physics: Physics) -> Discretization {
        let cell = CellSpec::new(dims, &[1.0, 1.3, 0.8][..dims.len()]).unwrap();
        Discretization::new(GridLayout::new(cell, kind).unwrap(), physics)
    }

    fn pseudo_random(n: usize, seed: u64) -> Vec<f64> {
        let mut s = seed;
        (0..n)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((s >> 11) as f64) / ((1u64 << 53) as f64) - 0.5
            })
            .collect()
    }

    #[test]
    fn constant_field_has_zero_gradient() {
        for kind in StencilKind::ALL {
            let dims: &[usize] = if kind.dim() == 3 { &[3, 2, 4] } else { &[4, 3] };
            let d = disc(dims, kind, Physics::Elasticity);
            let mut u = d.zero_nodal();
            for c in 0..u.components() {
                u.component_mut(c).fill(0.3 + c as f64);
            }
            let g = d.gradient(&u).unwrap();
            assert!(g.as_slice().iter().all(|v| v.abs() < 1e-12), "{kind}");
        }
    }

    #[test]
    fn uniform_stress_has_zero_divergence() {
        for kind in StencilKind::ALL {
            let dims: &[usize] = if kind.dim() == 3 { &[3, 2, 4] } else { &[4, 3] };
            let d = disc(dims, kind, Physics::Elasticity);
            let m = d.gradient_components();
            let s = QuadField::uniform(&pseudo_random(m, 4), d.layout().n_quad());
            let div = d.divergence(&s).unwrap();
            assert!(div.as_slice().iter().all(|v| v.abs() < 1e-13), "{kind}");
        }
    }

    #[test]
    fn affine_field_reproduced_away_from_wrap() {
        // E = [[0.3, 0.1], [0.1, -0.2]]
        let e = [0.3, 0.1, 0.1, -0.2];
        let expected = to_mandel_strain(2, &e);
        for kind in [StencilKind::TwoTriangles, StencilKind::BilinearQuad, StencilKind::FourTrianglesTwoNode] {
            let d = disc(&[4, 4], kind, Physics::Elasticity);
            let l = d.layout();
            let mut u = d.zero_nodal();
            for i in 0..l.n_nodes() {
                let x = l.node_position(i);
                u.component_mut(0)[i] = e[0] * x[0] + e[1] * x[1];
                u.component_mut(1)[i] = e[2] * x[0] + e[3] * x[1];
            }
            let g = d.gradient(&u).unwrap();
            for q in 0..l.n_quad() {
                let (pixel, _) = l.quad_parts(q);
                let c = l.pixel_coords(pixel);
                if c[0] + 1 >= 4 || c[1] + 1 >= 4 {
                    continue;
                }
                for (r, ex) in expected.iter().enumerate() {
                    assert!((g.component(r)[q] - ex).abs() < 1e-12, "{kind}");
                }
            }
        }
    }

    #[test]
    fn fused_stiffness_equals_three_passes() {
        let d = disc(&[3, 4], StencilKind::FourTrianglesTwoNode, Physics::Elasticity);
        let nq = d.layout().n_quad();
        let mut t = TangentField::zeros(3, nq);
        for q in 0..nq {
            let b = Matrix::from_row_major(3, 3, pseudo_random(9, q as u64)).unwrap();
            let mut c = b.matmul(&b.transpose());
            c.add_scaled(&Matrix::identity(3), 0.5);
            t.set_point(q, &c);
        }
        let u = NodalField::from_vec(2, d.layout().n_nodes(), pseudo_random(d.n_dofs(), 7)).unwrap();
        let fused = d.apply_k(&t, &u).unwrap();
        let g = d.gradient(&u).unwrap();
        let mut s = d.zero_quad();
        for q in 0..nq {
            let sq = t.point_matrix(q).mul_vec(&g.point(q));
            s.set_point(q, &sq);
        }
        let three = d.divergence(&s).unwrap();
        for (a, b) in fused.as_slice().iter().zip(three.as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn divergence_is_weighted_adjoint() {
        let d = disc(&[3, 3], StencilKind::BilinearQuad, Physics::Thermal);
        let u = NodalField::from_vec(1, 9, pseudo_random(9, 1)).unwrap();
        let s = QuadField::from_vec(2, 36, pseudo_random(72, 2)).unwrap();
        let lhs = d.weighted_dot(d.gradient(&u).unwrap().as_slice(), s.as_slice());
        let rhs = dot(u.as_slice(), d.divergence(&s).unwrap().as_slice());
        assert!((lhs - rhs).abs() < 1e-13 * lhs.abs().max(1.0));
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let d = disc(&[3, 3], StencilKind::TwoTriangles, Physics::Elasticity);
        let bad = NodalField::zeros(1, 9);
        assert!(matches!(d.gradient(&bad), Err(Error::ShapeMismatch { .. })));
        let bad = QuadField::zeros(2, 18);
        assert!(matches!(d.divergence(&bad), Err(Error::ShapeMismatch { .. })));
    }
}
