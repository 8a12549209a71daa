mod common;

use common::*;
use fehomog_core::spectral::{dense_assemble, eigenvalue_bounds, pencil_spectrum};
use fehomog_core::{Physics, StencilKind, TangentField};
use rand::Rng;

#[test]
fn stiffness_kernel_is_the_constants() {
    let mut r = rng(41);
    for kind in StencilKind::ALL {
        for physics in PHYSICS {
            let d = stretched(&small_dims(kind), kind, physics);
            let t = two_phase_tangent(&mut r, &d, 1e-3, 1e3);
            let ev = dense_assemble(&d, &t).unwrap().symmetric_eigenvalues();
            let radius = ev.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let zeros = ev.iter().filter(|v| v.abs() <= 1e-10 * radius).count();
            assert_eq!(zeros, d.field_components(), "{kind} {physics:?}");
        }
    }
}

#[test]
fn pencil_eigenvalues_lie_within_bounds() {
    let mut r = rng(43);
    let mut instances = 0;
    for kind in StencilKind::ALL {
        for physics in PHYSICS {
            for _ in 0..6 {
                let dims: Vec<usize> = (0..kind.dim()).map(|_| r.gen_range(2..5)).collect();
                let d = stretched(&dims, kind, physics);
                let contrast = 10f64.powf(r.gen_range(-3.0..3.0));
                let t = two_phase_tangent(&mut r, &d, contrast.min(1.0), contrast.max(1.0));
                let c_ref = match r.gen_range(0..2) {
                    0 => d.mean_tangent(&t),
                    _ => random_spd(&mut r, d.gradient_components(), 0.5, 2.0),
                };
                let k = dense_assemble(&d, &t).unwrap();
                let k_ref = dense_assemble(&d, &TangentField::uniform(&c_ref, d.layout().n_quad())).unwrap();
                let mu = pencil_spectrum(&k, &k_ref, d.field_components());
                let bounds = eigenvalue_bounds(&d, &t, &c_ref).unwrap();
                assert!(bounds.contains(&mu, d.field_components(), 1e-8), "{kind} {physics:?} {dims:?}");
                instances += 1;
            }
        }
    }
    assert!(instances >= 20);
}

#[test]
fn bound_extremes_do_not_depend_on_the_mesh_size() {
    let mut r = rng(47);
    for kind in StencilKind::ALL {
        for physics in PHYSICS {
            let dims = small_dims(kind);
            let coarse = disc(&dims, kind, physics);
            let m = coarse.gradient_components();
            let mats = [random_spd(&mut r, m, 0.01, 1.0), random_spd(&mut r, m, 1.0, 100.0)];
            let phases = random_phases(&mut r, coarse.layout().n_pixels());
            let fine_dims: Vec<usize> = dims.iter().map(|n| 2 * n).collect();
            let fine = disc(&fine_dims, kind, physics);
            // Each coarse pixel becomes a 2×…×2 block of fine pixels.
            let fine_phases: Vec<usize> = (0..fine.layout().n_pixels())
                .map(|p| {
                    let c = fine.layout().pixel_coords(p);
                    coarse.layout().pixel_index([c[0] / 2, c[1] / 2, c[2] / 2])
                })
                .map(|p| phases[p])
                .collect();
            let c_ref = random_spd(&mut r, m, 0.5, 2.0);
            let a = eigenvalue_bounds(&coarse, &phase_tangent(&coarse, &phases, &mats), &c_ref).unwrap();
            let b = eigenvalue_bounds(&fine, &phase_tangent(&fine, &fine_phases, &mats), &c_ref).unwrap();
            assert_eq!(a.lower[0], b.lower[0], "{kind} {physics:?}");
            assert_eq!(a.upper.last(), b.upper.last(), "{kind} {physics:?}");
        }
    }
}

#[test]
fn uniform_material_with_matching_reference_has_unit_spectrum() {
    let mut r = rng(53);
    for kind in StencilKind::ALL {
        let d = disc(&small_dims(kind), kind, Physics::Elasticity);
        let c = random_spd(&mut r, d.gradient_components(), 0.1, 10.0);
        let t = TangentField::uniform(&c, d.layout().n_quad());
        let k = dense_assemble(&d, &t).unwrap();
        let mu = pencil_spectrum(&k, &k, d.field_components());
        assert!(mu.iter().all(|v| (v - 1.0).abs() < 1e-9), "{kind}");
    }
}
