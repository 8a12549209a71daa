//! Reference-material preconditioner `M⁻¹ = (Dᵀ W C_ref D)†`, applied through
//! its block-diagonal Fourier representation.
//!
//! The reference operator commutes with periodic pixel shifts, so in Fourier
//! space it decouples into one `B × B` block per frequency with
//! `B = components · nodes_per_pixel`. Blocks are obtained by probing the
//! operator with one unit impulse per unknown of pixel 0.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft::{FftBackend, RealFftNd};
use crate::field::NodalField;
use crate::linalg::{hermitian_eigenvalues, invert_complex_in_place, Matrix};
use crate::math::sqrt;
use crate::operator::{Discretization, Weighting};

/// Work counters of one assembly, for checking the probing loop structure.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct AssemblyStats {
    /// Applications of the reference stiffness to an impulse.
    pub operator_applications: usize,
    /// Forward real transforms of size `N_p`.
    pub transforms: usize,
}

/// How a stored block was treated by [`FrequencyBlockDiag::invert`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BlockKind {
    Assembled,
    Inverted,
    PseudoInverted,
}

/// Per-frequency blocks of the reference operator or of its pseudo-inverse.
#[derive(Clone, Debug, PartialEq)]
pub struct FrequencyBlockDiag {
    fft: RealFftNd,
    components: usize,
    nodes_per_pixel: usize,
    block_size: usize,
    blocks: Vec<Complex64>,
    kinds: Vec<BlockKind>,
    c_ref: Matrix,
    weighting: Weighting,
    stats: AssemblyStats,
}

/// Probes `Dᵀ W C_ref D` (or `Dᵀ C_ref D` for [`Weighting::Unit`]) and
/// collects its Fourier blocks.
pub fn assemble_reference(
    disc: &Discretization,
    c_ref: &Matrix,
    weighting: Weighting,
    backend: &dyn FftBackend,
) -> Result<FrequencyBlockDiag> {
    let m = disc.gradient_components();
    if c_ref.rows() != m || c_ref.cols() != m {
        return Err(Error::ShapeMismatch {
            what: "reference tangent",
            expected: m * m,
            found: c_ref.rows() * c_ref.cols(),
        });
    }
    if !c_ref.is_finite() {
        return Err(Error::NonFinite("reference tangent"));
    }
    if c_ref.asymmetry() > 1e-12 {
        return Err(Error::NotPositiveDefinite("reference tangent is not symmetric"));
    }
    c_ref.cholesky()?;

    let layout = disc.layout();
    let np = layout.n_pixels();
    let nn = layout.nodes_per_pixel();
    let c = disc.field_components();
    let b = c * nn;
    let fft = RealFftNd::new(layout.cell().dims());
    let nf = fft.spectrum_len();
    let mut blocks = vec![Complex64::new(0.0, 0.0); nf * b * b];
    let mut stats = AssemblyStats::default();

    let mut impulse = vec![0.0; disc.n_dofs()];
    let mut column = vec![0.0; disc.n_dofs()];
    let mut spectrum = vec![Complex64::new(0.0, 0.0); nf];
    for col in 0..b {
        impulse.fill(0.0);
        impulse[col * np] = 1.0;
        disc.apply_uniform_into(c_ref.as_slice(), &impulse, &mut column, weighting);
        stats.operator_applications += 1;
        for row in 0..b {
            fft.forward(backend, &column[row * np..(row + 1) * np], &mut spectrum);
            stats.transforms += 1;
            for (k, z) in spectrum.iter().enumerate() {
                blocks[k * b * b + row * b + col] = *z;
            }
        }
    }
    Ok(FrequencyBlockDiag {
        fft,
        components: c,
        nodes_per_pixel: nn,
        block_size: b,
        blocks,
        kinds: vec![BlockKind::Assembled; nf],
        c_ref: c_ref.clone(),
        weighting,
        stats,
    })
}

/// Replaces every block by its inverse, the zero-frequency block by its
/// Moore-Penrose pseudo-inverse.
pub fn invert_blocks(mut blocks: FrequencyBlockDiag) -> Result<FrequencyBlockDiag> {
    blocks.invert()?;
    Ok(blocks)
}

/// `M⁻¹ r` for inverted blocks.
pub fn apply_preconditioner(
    disc: &Discretization,
    blocks: &FrequencyBlockDiag,
    backend: &dyn FftBackend,
    r: &NodalField,
) -> Result<NodalField> {
    if r.as_slice().len() != disc.n_dofs() || blocks.block_size * disc.layout().n_pixels() != disc.n_dofs() {
        return Err(Error::ShapeMismatch {
            what: "preconditioner input",
            expected: blocks.block_size * disc.layout().n_pixels(),
            found: r.as_slice().len(),
        });
    }
    let mut out = disc.zero_nodal();
    blocks.apply(backend, r.as_slice(), out.as_mut_slice())?;
    Ok(out)
}

impl FrequencyBlockDiag {
    #[inline]
    pub fn block_size(&self) -> usize {
        self.block_size
    }

    #[inline]
    pub fn n_frequencies(&self) -> usize {
        self.kinds.len()
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn nodes_per_pixel(&self) -> usize {
        self.nodes_per_pixel
    }

    pub fn transform(&self) -> &RealFftNd {
        &self.fft
    }

    pub fn stats(&self) -> AssemblyStats {
        self.stats
    }

    pub fn reference(&self) -> &Matrix {
        &self.c_ref
    }

    pub fn weighting(&self) -> Weighting {
        self.weighting
    }

    pub fn kind(&self, k: usize) -> BlockKind {
        self.kinds[k]
    }

    pub fn is_inverted(&self) -> bool {
        self.kinds.iter().all(|k| *k != BlockKind::Assembled)
    }

    /// Row-major block at stored frequency `k`.
    pub fn block(&self, k: usize) -> &[Complex64] {
        let s = self.block_size * self.block_size;
        &self.blocks[k * s..(k + 1) * s]
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.blocks
    }

    /// Eigenvalues of the (Hermitian) block at frequency `k`, ascending.
    pub fn block_eigenvalues(&self, k: usize) -> Vec<f64> {
        hermitian_eigenvalues(self.block_size, self.block(k))
    }

    /// `max |B_k - B_kᴴ|` relative to the largest entry over all blocks.
    pub fn hermitian_defect(&self, k: usize) -> f64 {
        let n = self.block_size;
        let blk = self.block(k);
        let scale = self.blocks.iter().fold(0.0_f64, |m, z| m.max(z.norm_sqr()));
        let mut defect = 0.0_f64;
        for r in 0..n {
            for c in 0..n {
                defect = defect.max((blk[r * n + c] - blk[c * n + r].conj()).norm_sqr());
            }
        }
        if scale == 0.0 {
            0.0
        } else {
            sqrt(defect / scale)
        }
    }

    /// Orthonormal translation modes of the zero-frequency block, one per
    /// field component: `1/√Nn` on every node type of that component.
    pub fn translation_modes(&self) -> Vec<Vec<f64>> {
        let nn = self.nodes_per_pixel;
        let v = 1.0 / sqrt(nn as f64);
        (0..self.components)
            .map(|alpha| {
                let mut mode = vec![0.0; self.block_size];
                mode[alpha * nn..(alpha + 1) * nn].fill(v);
                mode
            })
            .collect()
    }

    /// Inverts the blocks in place; a no-op when already inverted.
    pub fn invert(&mut self) -> Result<()> {
        if self.is_inverted() {
            return Ok(());
        }
        let n = self.block_size;
        let s = n * n;
        let modes = self.translation_modes();
        let mut projector = vec![0.0; s];
        for mode in &modes {
            for r in 0..n {
                for c in 0..n {
                    projector[r * n + c] += mode[r] * mode[c];
                }
            }
        }

        // Zero frequency: Z† = (Z + sP)⁻¹ - P/s with P the kernel projector.
        // For one-node stencils the zero block vanishes identically, so the
        // scale is taken over all frequencies.
        let scale = self.blocks.iter().fold(0.0_f64, |m, z| m.max(sqrt(z.norm_sqr())));
        let zero = &mut self.blocks[..s];
        let mut residual = 0.0_f64;
        for mode in &modes {
            for r in 0..n {
                let mut acc = Complex64::new(0.0, 0.0);
                for c in 0..n {
                    acc += zero[r * n + c] * mode[c];
                }
                residual = residual.max(sqrt(acc.norm_sqr()));
            }
        }
        let residual = if scale > 0.0 { residual / scale } else { residual };
        if residual > 1e-10 {
            return Err(Error::KernelMismatch { residual });
        }
        let shift = scale;
        for (z, p) in zero.iter_mut().zip(&projector) {
            *z += shift * p;
        }
        invert_complex_in_place(n, zero, 1e-13).map_err(|_| Error::SingularBlock { index: 0 })?;
        for (z, p) in zero.iter_mut().zip(&projector) {
            *z -= p / shift;
        }
        self.kinds[0] = BlockKind::PseudoInverted;

        for k in 1..self.kinds.len() {
            invert_complex_in_place(n, &mut self.blocks[k * s..(k + 1) * s], 1e-13)
                .map_err(|_| Error::SingularBlock { index: k })?;
            self.kinds[k] = BlockKind::Inverted;
        }
        Ok(())
    }

    /// `out = M⁻¹ r` on flat component-major nodal vectors.
    pub fn apply(&self, backend: &dyn FftBackend, r: &[f64], out: &mut [f64]) -> Result<()> {
        if !self.is_inverted() {
            return Err(Error::BlocksNotInverted);
        }
        self.multiply(backend, r, out);
        Ok(())
    }

    /// `out = K_ref r` using assembled (not inverted) blocks.
    pub fn apply_assembled(&self, backend: &dyn FftBackend, r: &[f64], out: &mut [f64]) -> Result<()> {
        if self.kinds.iter().any(|k| *k != BlockKind::Assembled) {
            return Err(Error::InvalidConfig("blocks already inverted".into()));
        }
        self.multiply(backend, r, out);
        Ok(())
    }

    fn multiply(&self, backend: &dyn FftBackend, r: &[f64], out: &mut [f64]) {
        let n = self.block_size;
        let np = self.fft.real_len();
        let nf = self.n_frequencies();
        let mut spec = vec![Complex64::new(0.0, 0.0); n * nf];
        for a in 0..n {
            self.fft
                .forward(backend, &r[a * np..(a + 1) * np], &mut spec[a * nf..(a + 1) * nf]);
        }
        let mut result = vec![Complex64::new(0.0, 0.0); n * nf];
        let mut local = vec![Complex64::new(0.0, 0.0); n];
        for k in 0..nf {
            for (a, l) in local.iter_mut().enumerate() {
                *l = spec[a * nf + k];
            }
            let blk = self.block(k);
            for a in 0..n {
                let mut acc = Complex64::new(0.0, 0.0);
                for (bcol, l) in local.iter().enumerate() {
                    acc += blk[a * n + bcol] * l;
                }
                result[a * nf + k] = acc;
            }
        }
        for a in 0..n {
            self.fft
                .inverse(backend, &mut result[a * nf..(a + 1) * nf], &mut out[a * np..(a + 1) * np]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fft::NativeFft;
    use crate::field::{Physics, TangentField};
    use crate::grid::{CellSpec, GridLayout, StencilKind};
    use crate::linalg::dot;
    use crate::mandel::isotropic_stiffness;

    fn disc(dims: &[usize], kind: StencilKind, physics: Physics) -> Discretization {
        let cell = CellSpec::new(dims, &[1.0, 0.9, 1.1][..dims.len()]).unwrap();
        Discretization::new(GridLayout::new(cell, kind).unwrap(), physics)
    }

    fn noise(n: usize, seed: u64) -> Vec<f64> {
        let mut s = seed;
        (0..n)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((s >> 11) as f64) / ((1u64 << 53) as f64) - 0.5
            })
            .collect()
    }

    fn cases() -> Vec<(Discretization, Matrix)> {
        let mut out = Vec::new();
        for kind in StencilKind::ALL {
            let dims: &[usize] = if kind.dim() == 3 { &[3, 4, 2] } else { &[4, 3] };
            let d = disc(dims, kind, Physics::Elasticity);
            let c = isotropic_stiffness(1.3, 0.4, kind.dim()).unwrap();
            out.push((d, c));
            let d = disc(dims, kind, Physics::Thermal);
            let a = Matrix::from_rows(&if kind.dim() == 3 {
                vec![vec![2.0, 0.3, 0.0], vec![0.3, 1.0, 0.1], vec![0.0, 0.1, 1.5]]
            } else {
                vec![vec![2.0, 0.3], vec![0.3, 1.0]]
            })
            .unwrap();
            out.push((d, a));
        }
        out
    }

    #[test]
    fn assembly_counts_and_zero_frequency_kernel() {
        for (d, c) in cases() {
            let blocks = assemble_reference(&d, &c, Weighting::Quadrature, &NativeFft).unwrap();
            let b = blocks.block_size();
            assert_eq!(blocks.stats().operator_applications, b);
            assert_eq!(blocks.stats().transforms, b * b);
            let eig = blocks.block_eigenvalues(0);
            let top = (0..blocks.n_frequencies())
                .map(|k| blocks.block_eigenvalues(k)[b - 1])
                .fold(0.0, f64::max);
            let tol = 1e-12 * top;
            let nulls = eig.iter().filter(|v| v.abs() < tol).count();
            assert_eq!(nulls, d.field_components());
            for k in 0..blocks.n_frequencies() {
                assert!(blocks.hermitian_defect(k) < 1e-12);
                if k > 0 {
                    assert!(blocks.block_eigenvalues(k)[0] > 0.0);
                }
            }
        }
    }

    #[test]
    fn exact_inverse_for_uniform_reference() {
        for (d, c) in cases() {
            let blocks = invert_blocks(assemble_reference(&d, &c, Weighting::Quadrature, &NativeFft).unwrap()).unwrap();
            let mut r = d.zero_nodal();
            r.as_mut_slice().copy_from_slice(&noise(d.n_dofs(), 3));
            r.remove_mean();
            let z = apply_preconditioner(&d, &blocks, &NativeFft, &r).unwrap();
            let t = TangentField::uniform(&c, d.layout().n_quad());
            let back = d.apply_k(&t, &z).unwrap();
            let scale = r.as_slice().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            for (a, b) in back.as_slice().iter().zip(r.as_slice()) {
                assert!((a - b).abs() < 1e-10 * scale);
            }
        }
    }

    #[test]
    fn symmetric_and_annihilates_translations() {
        for (d, c) in cases() {
            let blocks = invert_blocks(assemble_reference(&d, &c, Weighting::Quadrature, &NativeFft).unwrap()).unwrap();
            let n = d.n_dofs();
            let u = noise(n, 1);
            let v = noise(n, 2);
            let mut mu = vec![0.0; n];
            let mut mv = vec![0.0; n];
            blocks.apply(&NativeFft, &u, &mut mu).unwrap();
            blocks.apply(&NativeFft, &v, &mut mv).unwrap();
            assert!((dot(&u, &mv) - dot(&mu, &v)).abs() < 1e-11 * dot(&u, &mu).abs().max(1.0));
            assert!(dot(&u, &mu) >= 0.0);
            let ones = vec![1.0; n];
            blocks.apply(&NativeFft, &ones, &mut mu).unwrap();
            assert!(mu.iter().all(|x| x.abs() < 1e-12));
        }
    }

    #[test]
    fn moore_penrose_identities_at_zero_frequency() {
        let (d, c) = cases().swap_remove(4);
        let assembled = assemble_reference(&d, &c, Weighting::Quadrature, &NativeFft).unwrap();
        let inv = invert_blocks(assembled.clone()).unwrap();
        let n = assembled.block_size();
        let z = assembled.block(0);
        let zp = inv.block(0);
        let mul = |a: &[Complex64], b: &[Complex64]| {
            let mut out = vec![Complex64::new(0.0, 0.0); n * n];
            for r in 0..n {
                for cc in 0..n {
                    for k in 0..n {
                        out[r * n + cc] += a[r * n + k] * b[k * n + cc];
                    }
                }
            }
            out
        };
        let zzz = mul(&mul(z, zp), z);
        for (a, b) in zzz.iter().zip(z) {
            assert!((a - b).norm_sqr() < 1e-22);
        }
        let ppp = mul(&mul(zp, z), zp);
        for (a, b) in ppp.iter().zip(zp) {
            assert!((a - b).norm_sqr() < 1e-22);
        }
        assert_eq!(inv.kind(0), BlockKind::PseudoInverted);
    }

    #[test]
    fn apply_requires_inversion_and_reassembly_is_bitwise_stable() {
        let (d, c) = cases().swap_remove(0);
        let a1 = assemble_reference(&d, &c, Weighting::Quadrature, &NativeFft).unwrap();
        let a2 = assemble_reference(&d, &c, Weighting::Quadrature, &NativeFft).unwrap();
        assert_eq!(a1, a2);
        let mut out = vec![0.0; d.n_dofs()];
        assert_eq!(
            a1.apply(&NativeFft, &vec![0.0; d.n_dofs()], &mut out),
            Err(Error::BlocksNotInverted)
        );
    }

    #[test]
    fn rejects_non_spd_reference() {
        let d = disc(&[3, 3], StencilKind::TwoTriangles, Physics::Thermal);
        let bad = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        assert!(assemble_reference(&d, &bad, Weighting::Quadrature, &NativeFft).is_err());
    }
}
