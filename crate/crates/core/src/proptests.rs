//! Property tests of the public operators.

use crate::data::{fourier_field, potential_from_density_modes, FourierMode};
use crate::grid::{divergence, integrate, laplacian, skew_gradient, ScalarField, TorusGrid};
use crate::nahm::{herm_exp, vb, CMatrix};
use crate::obstacle::SlabGrid;
use crate::phi_solver::{lorentz_q, SymMatrix};
use crate::space_h::{curvature_vector, sectional_curvature, PathInH, Potential};
use crate::transforms::legendre_phi_to_u;
use nalgebra::Complex;
use proptest::prelude::*;

const KS: [[i64; 2]; 6] = [[1, 0], [0, 1], [1, 1], [1, -1], [2, 1], [0, 3]];

fn coeffs(scale: f64) -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-scale..scale, 0.0..6.28), KS.len())
}

fn modes(c: &[(f64, f64)]) -> Vec<FourierMode> {
    KS.iter().zip(c).map(|(k, &(a, p))| FourierMode::new(k, a, p)).collect()
}

fn field(g: TorusGrid, c: &[(f64, f64)]) -> ScalarField {
    fourier_field(g, &modes(c)).unwrap()
}

fn potential(g: TorusGrid, c: &[(f64, f64)]) -> Potential {
    Potential::new(potential_from_density_modes(g, &modes(c)).unwrap()).unwrap()
}

fn grid() -> TorusGrid {
    TorusGrid::new(2, 16).unwrap()
}

fn sym(size: usize, a: &[f64]) -> SymMatrix {
    let mut data = vec![0.0; size * size];
    for i in 0..size {
        for j in 0..size {
            data[i * size + j] = (0..size).map(|k| a[i * size + k] * a[j * size + k]).sum::<f64>();
        }
    }
    SymMatrix::new(size, data).unwrap()
}

fn cmat(n: usize, v: &[f64]) -> CMatrix {
    CMatrix::from_fn(n, n, |i, j| Complex::new(v[2 * (i * n + j)], v[2 * (i * n + j) + 1]))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn laplacian_is_mean_free_and_self_adjoint(a in coeffs(1.0), b in coeffs(1.0)) {
        let (f, h) = (field(grid(), &a), field(grid(), &b));
        prop_assert!(integrate(&laplacian(&f)).abs() < 1e-10);
        let lhs = integrate(&(&f * &laplacian(&h)));
        let rhs = integrate(&(&h * &laplacian(&f)));
        prop_assert!((lhs - rhs).abs() < 1e-9 * (1.0 + lhs.abs()));
    }

    #[test]
    fn skew_gradient_is_divergence_free(a in coeffs(1.0)) {
        let v = skew_gradient(&field(grid(), &a)).unwrap();
        prop_assert!(divergence(&v).norm_inf() < 1e-9);
    }

    #[test]
    fn curvature_vector_is_antisymmetric_and_bilinear(
        p in coeffs(0.1), a in coeffs(1.0), b in coeffs(1.0), c in coeffs(1.0), s in -2.0..2.0f64,
    ) {
        let g = grid();
        let phi = potential(g, &p);
        let (fa, fb, fc) = (field(g, &a), field(g, &b), field(g, &c));
        let ab = curvature_vector(&phi, &fa, &fb).unwrap();
        let ba = curvature_vector(&phi, &fb, &fa).unwrap();
        prop_assert!(ab.add(&ba).norm_inf() < 1e-9);
        let mixed = curvature_vector(&phi, &fa.axpy(s, &fc), &fb).unwrap();
        let split = ab.add(&curvature_vector(&phi, &fc, &fb).unwrap().scale(s));
        prop_assert!(mixed.sub(&split).norm_inf() < 1e-8 * (1.0 + ab.norm_inf()));
    }

    #[test]
    fn sectional_curvature_is_nonpositive(p in coeffs(0.1), a in coeffs(1.0), b in coeffs(1.0)) {
        let g = grid();
        let k = sectional_curvature(&potential(g, &p), &field(g, &a), &field(g, &b)).unwrap();
        prop_assert!(k <= 1e-12);
    }

    #[test]
    fn lorentz_q_on_positive_matrices(
        size in 2usize..6,
        a in prop::collection::vec(-1.0..1.0f64, 36),
        b in prop::collection::vec(-1.0..1.0f64, 36),
        s in 0.0..1.0f64,
    ) {
        let (ma, mb) = (sym(size, &a), sym(size, &b));
        let (qa, qb) = (lorentz_q(&ma), lorentz_q(&mb));
        prop_assert!(qa >= -1e-10 && qb >= -1e-10);
        // reverse Cauchy-Schwarz: sqrt Q is concave along segments of the cone
        let mid = lorentz_q(&ma.lincomb(s, &mb, 1.0 - s));
        prop_assert!(mid.max(0.0).sqrt() >= s * qa.max(0.0).sqrt() + (1.0 - s) * qb.max(0.0).sqrt() - 1e-9);
    }

    #[test]
    fn vb_is_unitarily_invariant(
        hv in prop::collection::vec(-0.5..0.5f64, 18),
        bv in prop::collection::vec(-1.0..1.0f64, 18),
        uv in prop::collection::vec(-1.0..1.0f64, 18),
    ) {
        let s = cmat(3, &hv);
        let h = herm_exp(&((&s + s.adjoint()) * Complex::new(0.5, 0.0)));
        let b = cmat(3, &bv);
        let u = cmat(3, &uv).qr().q();
        let lhs = vb(&(&u * &h * u.adjoint()), &(&u * &b * u.adjoint())).unwrap();
        let rhs = vb(&h, &b).unwrap();
        prop_assert!((lhs - rhs).abs() < 1e-9 * (1.0 + rhs));
    }

    #[test]
    fn legendre_transform_dominates_the_obstacle(a in -0.3..0.3f64, b in -0.3..0.3f64) {
        let g = TorusGrid::new(1, 16).unwrap();
        let path = PathInH::from_fn(g, 16, |x, t| {
            0.5 * t * (t - 1.0) + 0.01 * (a * (1.0 - t) + b * t) * (std::f64::consts::TAU * x[0]).cos()
        })
        .unwrap();
        let slab = SlabGrid::new(g, 1.0, 32).unwrap();
        let u = legendre_phi_to_u(&path, slab).unwrap();
        let (p0, p1) = (path.slice(0), path.slice(16));
        for idx in 0..g.len() {
            for j in 0..=32 {
                let z = slab.z(j);
                let lower = (z - p1.values()[idx] + p0.values()[idx]).max(0.0);
                prop_assert!(u.get(idx, j) >= lower - 1e-12);
            }
        }
    }
}
