#![allow(dead_code)]

use fehomog_core::linalg::Matrix;
use fehomog_core::{CellSpec, Discretization, GridLayout, Physics, StencilKind, TangentField};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn disc(dims: &[usize], kind: StencilKind, physics: Physics) -> Discretization {
    let cell = CellSpec::unit(dims).unwrap();
    Discretization::new(GridLayout::new(cell, kind).unwrap(), physics)
}

/// A non-cubic cell so that spacing enters every formula.
pub fn stretched(dims: &[usize], kind: StencilKind, physics: Physics) -> Discretization {
    let lengths: Vec<f64> = [1.3, 0.7, 1.1][..dims.len()].to_vec();
    let cell = CellSpec::new(dims, &lengths).unwrap();
    Discretization::new(GridLayout::new(cell, kind).unwrap(), physics)
}

pub fn small_dims(kind: StencilKind) -> Vec<usize> {
    if kind.dim() == 2 {
        vec![3, 4]
    } else {
        vec![3, 2, 4]
    }
}

pub fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// Symmetric positive definite matrix with eigenvalues log-uniform in
/// `[lo, hi]` and random eigenvectors.
pub fn random_spd(rng: &mut ChaCha8Rng, m: usize, lo: f64, hi: f64) -> Matrix {
    let mut g = Matrix::zeros(m, m);
    for i in 0..m {
        for j in 0..=i {
            let v = rng.gen_range(-1.0..1.0);
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    let (_, vecs) = g.symmetric_eigen();
    let lam: Vec<f64> = (0..m)
        .map(|_| (lo.ln() + rng.gen::<f64>() * (hi.ln() - lo.ln())).exp())
        .collect();
    let mut out = Matrix::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            out[(i, j)] = (0..m).map(|k| vecs[(i, k)] * lam[k] * vecs[(j, k)]).sum();
        }
    }
    // Exact symmetry.
    for i in 0..m {
        for j in 0..i {
            let v = 0.5 * (out[(i, j)] + out[(j, i)]);
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    out
}

pub fn random_phases(rng: &mut ChaCha8Rng, n_pixels: usize) -> Vec<usize> {
    let mut phases: Vec<usize> = (0..n_pixels).map(|_| rng.gen_range(0..2)).collect();
    // Both phases present.
    phases[0] = 0;
    if n_pixels > 1 {
        phases[n_pixels - 1] = 1;
    }
    phases
}

/// Pixel-wise constant tangent taking one of two matrices.
pub fn phase_tangent(disc: &Discretization, phases: &[usize], mats: &[Matrix]) -> TangentField {
    let l = disc.layout();
    let np = l.n_pixels();
    let mut t = TangentField::zeros(disc.gradient_components(), l.n_quad());
    for q in 0..l.n_quad() {
        t.set_point(q, &mats[phases[q % np]]);
    }
    t.set_pixel_constant(true);
    t
}

/// Random two-phase SPD tangent.
pub fn two_phase_tangent(rng: &mut ChaCha8Rng, disc: &Discretization, lo: f64, hi: f64) -> TangentField {
    let m = disc.gradient_components();
    let mats = [random_spd(rng, m, lo, hi), random_spd(rng, m, lo, hi)];
    let phases = random_phases(rng, disc.layout().n_pixels());
    phase_tangent(disc, &phases, &mats)
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

pub const PHYSICS: [Physics; 2] = [Physics::Thermal, Physics::Elasticity];
