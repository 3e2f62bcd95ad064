//! The space ℋ of admissible potentials `{φ : 1 - Δφ > 0}` with its
//! Riemannian metric `‖α‖²_φ = ∫ α² (1 - Δφ) dμ`, the Euler–Lagrange flow of
//! the action `∫ ½‖φ̇‖² + ε V(φ) dt`, the covariant derivative, curvature and
//! the conserved quantities attached to Laplacian eigenfunctions.

use crate::error::{Error, Result};
use crate::grid::{
    cross_scalar, divergence, dot, fourier_eigenpair, gradient, integrate, laplacian, lie_bracket, require_2d,
    skew_gradient, FourierKind, ScalarField, TorusGrid, VectorFieldOnX,
};

pub const DEFAULT_MARGIN: f64 = 1e-8;

/// `1 - Δφ`, the density of `dμ_φ` against the flat measure.
pub fn density(phi: &ScalarField) -> ScalarField {
    laplacian(phi).map(|v| 1.0 - v)
}

fn check_admissible(phi: &ScalarField, margin: f64) -> Result<ScalarField> {
    let rho = density(phi);
    let min_density = rho.min();
    if min_density < margin {
        return Err(Error::NotAdmissible { min_density, margin });
    }
    Ok(rho)
}

/// An admissible potential together with the margin it was checked against.
#[derive(Clone, Debug, PartialEq)]
pub struct Potential {
    field: ScalarField,
    margin: f64,
}

impl Potential {
    pub fn new(field: ScalarField) -> Result<Self> {
        Self::with_margin(field, DEFAULT_MARGIN)
    }

    pub fn with_margin(field: ScalarField, margin: f64) -> Result<Self> {
        if !(margin > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "admissibility margin must be positive, got {margin}"
            )));
        }
        check_admissible(&field, margin)?;
        Ok(Self { field, margin })
    }

    pub fn zero(grid: TorusGrid) -> Self {
        Self {
            field: ScalarField::zeros(grid),
            margin: DEFAULT_MARGIN,
        }
    }

    pub fn field(&self) -> &ScalarField {
        &self.field
    }

    pub fn margin(&self) -> f64 {
        self.margin
    }

    pub fn grid(&self) -> TorusGrid {
        self.field.grid()
    }

    pub fn density(&self) -> ScalarField {
        density(&self.field)
    }
}

/// A path `t ↦ Φ(·, t)` sampled at `t_j = j/m`, every slice admissible.
#[derive(Clone, Debug, PartialEq)]
pub struct PathInH {
    slices: Vec<ScalarField>,
}

impl PathInH {
    pub fn new(slices: Vec<ScalarField>) -> Result<Self> {
        Self::with_margin(slices, DEFAULT_MARGIN)
    }

    pub fn with_margin(slices: Vec<ScalarField>, margin: f64) -> Result<Self> {
        if slices.len() < 2 {
            return Err(Error::InvalidParameter("a path needs at least two slices".into()));
        }
        let grid = slices[0].grid();
        for s in &slices {
            grid.check_same(&s.grid())?;
            check_admissible(s, margin)?;
        }
        Ok(Self { slices })
    }

    /// Samples `f(x, t)` on `m + 1` time levels.
    pub fn from_fn(grid: TorusGrid, m: usize, f: impl Fn([f64; 2], f64) -> f64) -> Result<Self> {
        let slices = (0..=m)
            .map(|j| {
                let t = j as f64 / m as f64;
                ScalarField::from_fn(grid, |x| f(x, t))
            })
            .collect();
        Self::new(slices)
    }

    /// Straight segment between the boundary potentials.
    pub fn linear(phi0: &ScalarField, phi1: &ScalarField, m: usize) -> Result<Self> {
        let slices = (0..=m)
            .map(|j| {
                let t = j as f64 / m as f64;
                phi0.zip_map(phi1, |a, b| (1.0 - t) * a + t * b)
            })
            .collect();
        Self::new(slices)
    }

    pub(crate) fn from_raw(slices: Vec<ScalarField>) -> Self {
        Self { slices }
    }

    pub fn m(&self) -> usize {
        self.slices.len() - 1
    }

    pub fn tau(&self) -> f64 {
        1.0 / self.m() as f64
    }

    pub fn grid(&self) -> TorusGrid {
        self.slices[0].grid()
    }

    pub fn slice(&self, j: usize) -> &ScalarField {
        &self.slices[j]
    }

    pub fn slices(&self) -> &[ScalarField] {
        &self.slices
    }

    pub fn into_slices(self) -> Vec<ScalarField> {
        self.slices
    }

    /// Pointwise value at node `idx` of every slice.
    pub fn column(&self, idx: usize) -> Vec<f64> {
        self.slices.iter().map(|s| s.values()[idx]).collect()
    }

    /// `Φ(x, 1 - t)`.
    pub fn reversed(&self) -> Self {
        Self {
            slices: self.slices.iter().rev().cloned().collect(),
        }
    }

    /// `a·self + b·other` slice by slice.
    pub fn combine(&self, a: f64, other: &PathInH, b: f64) -> Result<Self> {
        if self.m() != other.m() {
            return Err(Error::ShapeMismatch(format!(
                "paths with {} and {} intervals",
                self.m(),
                other.m()
            )));
        }
        self.grid().check_same(&other.grid())?;
        Ok(Self {
            slices: self
                .slices
                .iter()
                .zip(&other.slices)
                .map(|(p, q)| p.zip_map(q, |u, v| a * u + b * v))
                .collect(),
        })
    }

    /// Largest nodal difference over all slices.
    pub fn max_abs_diff(&self, other: &PathInH) -> f64 {
        self.slices
            .iter()
            .zip(&other.slices)
            .map(|(a, b)| (a - b).norm_inf())
            .fold(0.0, f64::max)
    }
}

/// Phase point of the second-order flow.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryState {
    pub phi: Potential,
    pub phi_dot: ScalarField,
    pub t: f64,
}

/// `∫ α² (1 - Δφ) dμ`.
pub fn metric_norm_sq(phi: &Potential, alpha: &ScalarField) -> f64 {
    metric_inner(phi.field(), alpha, alpha)
}

pub(crate) fn metric_inner(phi: &ScalarField, a: &ScalarField, b: &ScalarField) -> f64 {
    let rho = density(phi);
    let g = phi.grid();
    g.cell_volume()
        * a.values()
            .iter()
            .zip(b.values())
            .zip(rho.values())
            .map(|((x, y), r)| x * y * r)
            .sum::<f64>()
}

/// `V(φ) = ∫ φ dμ`, the potential energy of the action.
pub fn v_functional(phi: &ScalarField) -> f64 {
    integrate(phi)
}

/// Time derivative of a sampled family: centered in the interior,
/// one-sided second order at the ends.
pub fn time_derivative(slices: &[ScalarField]) -> Vec<ScalarField> {
    let m = slices.len() - 1;
    let inv = m as f64;
    (0..=m)
        .map(|j| {
            if m == 1 {
                return (&slices[1] - &slices[0]).scale(inv);
            }
            if j == 0 {
                let a = slices[0].scale(-3.0);
                let b = slices[1].scale(4.0);
                (&(&a + &b) - &slices[2]).scale(0.5 * inv)
            } else if j == m {
                let a = slices[m].scale(3.0);
                let b = slices[m - 1].scale(-4.0);
                (&(&a + &b) + &slices[m - 2]).scale(0.5 * inv)
            } else {
                (&slices[j + 1] - &slices[j - 1]).scale(0.5 * inv)
            }
        })
        .collect()
}

/// Trapezoid rule on uniformly spaced samples over `[0, 1]`.
pub fn trapezoid(samples: &[f64]) -> f64 {
    let m = samples.len() - 1;
    let inner: f64 = samples[1..m].iter().sum();
    (inner + 0.5 * (samples[0] + samples[m])) / m as f64
}

/// `∫₀¹ ½‖φ̇‖²_φ + ε V(φ) dt`.
pub fn action(path: &PathInH, eps: f64) -> f64 {
    let dot_phi = time_derivative(path.slices());
    let samples: Vec<f64> = path
        .slices()
        .iter()
        .zip(&dot_phi)
        .map(|(p, v)| 0.5 * metric_inner(p, v, v) + eps * v_functional(p))
        .collect();
    trapezoid(&samples)
}

/// Second differences in t on interior slices.
pub(crate) fn second_difference(slices: &[ScalarField], j: usize) -> ScalarField {
    let m = (slices.len() - 1) as f64;
    let s = &(&slices[j + 1] + &slices[j - 1]) - &slices[j].scale(2.0);
    s.scale(m * m)
}

pub(crate) fn centered_difference(slices: &[ScalarField], j: usize) -> ScalarField {
    let m = (slices.len() - 1) as f64;
    (&slices[j + 1] - &slices[j - 1]).scale(0.5 * m)
}

/// `∂²_tΦ (1 - ΔΦ) - |∇∂_tΦ|²` on interior slices `1..m-1`.
pub(crate) fn q_of_slices(slices: &[ScalarField]) -> Vec<ScalarField> {
    let m = slices.len() - 1;
    (1..m)
        .map(|j| {
            let dtt = second_difference(slices, j);
            let rho = density(&slices[j]);
            let g = gradient(&centered_difference(slices, j));
            let grad_sq = dot(&g, &g);
            &(&dtt * &rho) - &grad_sq
        })
        .collect()
}

/// Residual of the Euler–Lagrange equation `φ̈(1 - Δφ) - |∇φ̇|² = ε` on the
/// interior slices.
pub fn el_residual(path: &PathInH, eps: f64) -> Result<Vec<ScalarField>> {
    if path.m() < 2 {
        return Err(Error::InvalidParameter(
            "the Euler-Lagrange residual needs m >= 2".into(),
        ));
    }
    Ok(q_of_slices(path.slices())
        .into_iter()
        .map(|q| q.map(|v| v - eps))
        .collect())
}

/// `W = -∇φ̇ / (1 - Δφ)`, the vector field transporting along the path.
pub fn transport_field(phi: &ScalarField, phi_dot: &ScalarField) -> VectorFieldOnX {
    let inv_rho = density(phi).map(|r| -1.0 / r);
    gradient(phi_dot).scale_by(&inv_rho)
}

/// `ψ̇ + (W, ∇ψ)` at a single time, with `W` from `(φ, φ̇)`.
pub fn covariant_derivative_at(
    phi: &ScalarField,
    phi_dot: &ScalarField,
    psi: &ScalarField,
    psi_dot: &ScalarField,
) -> ScalarField {
    let w = transport_field(phi, phi_dot);
    psi_dot + &dot(&w, &gradient(psi))
}

/// Covariant derivative `D_tψ` of a family of functions along `path`.
pub fn covariant_derivative(path: &PathInH, psi: &[ScalarField]) -> Result<Vec<ScalarField>> {
    if psi.len() != path.slices().len() {
        return Err(Error::ShapeMismatch(format!(
            "path has {} slices, family has {}",
            path.slices().len(),
            psi.len()
        )));
    }
    for p in psi {
        path.grid().check_same(&p.grid())?;
    }
    let phi_dot = time_derivative(path.slices());
    let psi_dot = time_derivative(psi);
    Ok((0..psi.len())
        .map(|j| covariant_derivative_at(path.slice(j), &phi_dot[j], &psi[j], &psi_dot[j]))
        .collect())
}

/// Right-hand side of the flow: `φ̈ = (|∇φ̇|² + ε) / (1 - Δφ)`.
fn acceleration(phi: &ScalarField, phi_dot: &ScalarField, eps: f64) -> Option<ScalarField> {
    let rho = density(phi);
    if rho.min() <= 0.0 {
        return None;
    }
    let g = gradient(phi_dot);
    let num = dot(&g, &g).map(|v| v + eps);
    Some(num.zip_map(&rho, |a, r| a / r))
}

/// Classical RK4 integration of the Euler–Lagrange flow. Returns the states
/// at every step, starting with `init`.
pub fn forward_flow(init: &TrajectoryState, eps: f64, dt: f64, steps: usize) -> Result<Vec<TrajectoryState>> {
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
    }
    if eps < 0.0 {
        return Err(Error::InvalidParameter(format!("eps must be >= 0, got {eps}")));
    }
    init.phi.grid().check_same(&init.phi_dot.grid())?;
    let margin = init.phi.margin();
    let mut out = Vec::with_capacity(steps + 1);
    out.push(init.clone());
    let mut phi = init.phi.field().clone();
    let mut vel = init.phi_dot.clone();
    let mut t = init.t;
    for step in 1..=steps {
        let lost = || Error::AdmissibilityLost { step };
        let k1p = vel.clone();
        let k1v = acceleration(&phi, &vel, eps).ok_or_else(lost)?;
        let p2 = phi.axpy(0.5 * dt, &k1p);
        let v2 = vel.axpy(0.5 * dt, &k1v);
        let k2v = acceleration(&p2, &v2, eps).ok_or_else(lost)?;
        let p3 = phi.axpy(0.5 * dt, &v2);
        let v3 = vel.axpy(0.5 * dt, &k2v);
        let k3v = acceleration(&p3, &v3, eps).ok_or_else(lost)?;
        let p4 = phi.axpy(dt, &v3);
        let v4 = vel.axpy(dt, &k3v);
        let k4v = acceleration(&p4, &v4, eps).ok_or_else(lost)?;
        let c = dt / 6.0;
        let dphi = &(&k1p + &v2.scale(2.0)) + &(&v3.scale(2.0) + &v4);
        let dvel = &(&k1v + &k2v.scale(2.0)) + &(&k3v.scale(2.0) + &k4v);
        phi = phi.axpy(c, &dphi);
        vel = vel.axpy(c, &dvel);
        t += dt;
        if phi.values().iter().chain(vel.values()).any(|v| !v.is_finite()) {
            return Err(lost());
        }
        let potential = Potential::with_margin(phi.clone(), margin).map_err(|_| lost())?;
        out.push(TrajectoryState {
            phi: potential,
            phi_dot: vel.clone(),
            t,
        });
    }
    Ok(out)
}

/// `ν_{α,β} = g · sgrad(g · (∇α × ∇β))` with `g = 1/(1 - Δφ)` and
/// `sgrad s = (∂₂s, -∂₁s)`.
pub fn curvature_vector(phi: &Potential, alpha: &ScalarField, beta: &ScalarField) -> Result<VectorFieldOnX> {
    require_2d(phi.grid(), "curvature_vector")?;
    let g = phi.density().map(|r| 1.0 / r);
    let c = cross_scalar(&gradient(alpha), &gradient(beta))?;
    Ok(skew_gradient(&(&g * &c))?.scale_by(&g))
}

/// `K_{α,β} = -∫ (1 - Δφ)⁻¹ (∇α × ∇β)² dμ`.
pub fn sectional_curvature(phi: &Potential, alpha: &ScalarField, beta: &ScalarField) -> Result<f64> {
    require_2d(phi.grid(), "sectional_curvature")?;
    let c = cross_scalar(&gradient(alpha), &gradient(beta))?;
    let rho = phi.density();
    Ok(-integrate(&c.zip_map(&rho, |c, r| c * c / r)))
}

/// Finite-difference commutator `(D_s D_t - D_t D_s)ψ` at `s = t = 0` for
/// the two-parameter families `φ(s,t) = φ₀ + sα + tβ` and
/// `ψ(s,t) = ψ₀ + sψ₁ + tψ₂`. The inner derivatives are exact (the families
/// are affine); the outer ones are centered differences with step `step`.
pub fn covariant_commutator(
    phi0: &Potential,
    alpha: &ScalarField,
    beta: &ScalarField,
    psi: [&ScalarField; 3],
    step: f64,
) -> Result<ScalarField> {
    let [psi0, psi1, psi2] = psi;
    let at = |s: f64, t: f64| {
        let phi = phi0.field().axpy(s, alpha).axpy(t, beta);
        let p = psi0.axpy(s, psi1).axpy(t, psi2);
        (phi, p)
    };
    let d_t = |s: f64, t: f64| {
        let (phi, p) = at(s, t);
        covariant_derivative_at(&phi, beta, &p, psi2)
    };
    let d_s = |s: f64, t: f64| {
        let (phi, p) = at(s, t);
        covariant_derivative_at(&phi, alpha, &p, psi1)
    };
    for s in [-step, step] {
        for t in [-step, step] {
            if density(&at(s, t).0).min() <= 0.0 {
                return Err(Error::NotAdmissible {
                    min_density: density(&at(s, t).0).min(),
                    margin: 0.0,
                });
            }
        }
    }
    let inv = 0.5 / step;
    let dt0 = d_t(0.0, 0.0);
    let ds0 = d_s(0.0, 0.0);
    let ds_dt_rate = (&d_t(step, 0.0) - &d_t(-step, 0.0)).scale(inv);
    let dt_ds_rate = (&d_s(0.0, step) - &d_s(0.0, -step)).scale(inv);
    let phi = phi0.field();
    let ds_dt = covariant_derivative_at(phi, alpha, &dt0, &ds_dt_rate);
    let dt_ds = covariant_derivative_at(phi, beta, &ds0, &dt_ds_rate);
    Ok(&ds_dt - &dt_ds)
}

/// `∫ exp(√(λ/ε) φ̇) f_λ (1 - Δφ) dμ` for the discrete eigenpair of mode `k`.
pub fn conserved_quantity(
    phi: &Potential,
    phi_dot: &ScalarField,
    k: &[i64],
    kind: FourierKind,
    eps: f64,
) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "conserved quantities need eps > 0, got {eps}"
        )));
    }
    let (f, lam) = fourier_eigenpair(phi.grid(), k, kind)?;
    let c = (lam / eps).sqrt();
    let rho = phi.density();
    let g = phi.grid();
    Ok(g.cell_volume()
        * phi_dot
            .values()
            .iter()
            .zip(f.values())
            .zip(rho.values())
            .map(|((v, f), r)| (c * v).exp() * f * r)
            .sum::<f64>())
}

/// `curl s = (-∂₂s, ∂₁s)`, the identification of bivectors with functions
/// under which the two vector identities below hold.
pub fn curl(s: &ScalarField) -> Result<VectorFieldOnX> {
    Ok(skew_gradient(s)?.scale(-1.0))
}

/// Residual norms of
/// `curl(v×w) = [v,w] + (div v) w - (div w) v` and
/// `curl(f v×w) = f curl(v×w) + (v,∇f) w - (w,∇f) v` under the discrete
/// operators.
pub fn check_vector_identities(v: &VectorFieldOnX, w: &VectorFieldOnX, f: &ScalarField) -> Result<(f64, f64)> {
    require_2d(v.grid(), "check_vector_identities")?;
    let vw = cross_scalar(v, w)?;
    let lhs1 = curl(&vw)?;
    let rhs1 = lie_bracket(v, w)
        .add(&w.scale_by(&divergence(v)))
        .sub(&v.scale_by(&divergence(w)));
    let lhs2 = curl(&(f * &vw))?;
    let rhs2 = lhs1
        .scale_by(f)
        .add(&w.scale_by(&dot(v, &gradient(f))))
        .sub(&v.scale_by(&dot(w, &gradient(f))));
    Ok((lhs1.sub(&rhs1).norm_inf(), lhs2.sub(&rhs2).norm_inf()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{potential_from_density_modes, random_modes, FourierMode};
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn g1(n: usize) -> TorusGrid {
        TorusGrid::new(1, n).unwrap()
    }
    fn g2(n: usize) -> TorusGrid {
        TorusGrid::new(2, n).unwrap()
    }

    #[test]
    fn metric_examples() {
        let g = g1(32);
        let phi = Potential::zero(g);
        assert_abs_diff_eq!(
            metric_norm_sq(&phi, &ScalarField::constant(g, 1.0)),
            1.0,
            epsilon = 1e-14
        );
        let c = ScalarField::from_fn(g, |x| (2.0 * PI * x[0]).cos());
        assert_abs_diff_eq!(metric_norm_sq(&phi, &c), 0.5, epsilon = 1e-14);
        let p = Potential::new(c.scale(0.001)).unwrap();
        assert_eq!(metric_norm_sq(&p, &ScalarField::zeros(g)), 0.0);
    }

    #[test]
    fn inadmissible_potentials_are_rejected() {
        let g = g1(32);
        let big = ScalarField::from_fn(g, |x| (2.0 * PI * x[0]).cos());
        assert!(matches!(Potential::new(big), Err(Error::NotAdmissible { .. })));
    }

    #[test]
    fn action_examples() {
        let g = g1(8);
        let phi0 = potential_from_density_modes(g, &[FourierMode::new(&[1], 0.2, 0.0)]).unwrap();
        let constant = PathInH::new(vec![phi0.clone(); 9]).unwrap();
        assert_abs_diff_eq!(action(&constant, 0.0), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(action(&constant, 1.0), 0.0, epsilon = 1e-14);
        let err = |m: usize| {
            let p = PathInH::from_fn(g, m, |_, t| 0.5 * t * (t - 1.0)).unwrap();
            (action(&p, 1.0) + 1.0 / 24.0).abs()
        };
        assert!(err(64) < 1e-4);
        assert!(err(32) / err(64) > 3.9);
    }

    #[test]
    fn el_residual_examples() {
        let g = g1(16);
        let quad = PathInH::from_fn(g, 16, |_, t| 0.35 * t * (t - 1.0)).unwrap();
        for r in el_residual(&quad, 0.7).unwrap() {
            assert!(r.norm_inf() < 1e-11);
        }
        let lin = PathInH::from_fn(g, 16, |_, t| 0.3 * t).unwrap();
        for r in el_residual(&lin, 0.0).unwrap() {
            assert!(r.norm_inf() < 1e-12);
        }
        let psi = ScalarField::from_fn(g, |x| 0.01 * (2.0 * PI * x[0]).sin());
        let tpsi = PathInH::new((0..=8).map(|j| psi.scale(j as f64 / 8.0)).collect()).unwrap();
        let gp = gradient(&psi);
        let expect = dot(&gp, &gp).scale(-1.0);
        for (j, r) in el_residual(&tpsi, 0.0).unwrap().iter().enumerate() {
            // second difference vanishes, the laplacian term drops out
            assert!((r - &expect).norm_inf() < 1e-12, "slice {j}");
        }
    }

    #[test]
    fn covariant_derivative_examples() {
        let g = g1(16);
        let path = PathInH::new(vec![ScalarField::zeros(g); 5]).unwrap();
        let c = vec![ScalarField::constant(g, 2.0); 5];
        for d in covariant_derivative(&path, &c).unwrap() {
            assert!(d.norm_inf() < 1e-14);
        }
        let path = PathInH::from_fn(g, 8, |x, t| 0.002 * t * (2.0 * PI * x[0]).cos()).unwrap();
        let fam: Vec<ScalarField> = (0..=8)
            .map(|j| ScalarField::constant(g, (j as f64 / 8.0).powi(2)))
            .collect();
        let d = covariant_derivative(&path, &fam).unwrap();
        for (j, dj) in d.iter().enumerate() {
            let expect = 2.0 * j as f64 / 8.0;
            assert!((dj.max() - expect).abs() < 1e-12 && (dj.min() - expect).abs() < 1e-12);
        }
    }

    fn compat_residual(n: usize, m: usize) -> f64 {
        let g = g1(n);
        let tp = 2.0 * PI;
        let path = PathInH::from_fn(g, m, |x, t| {
            0.003 * (tp * x[0]).cos() * (1.0 + t) + 0.002 * t * t * (2.0 * tp * x[0]).sin()
        })
        .unwrap();
        let psi: Vec<ScalarField> = (0..=m)
            .map(|j| {
                let t = j as f64 / m as f64;
                ScalarField::from_fn(g, |x| (tp * x[0] + t).sin() + t)
            })
            .collect();
        let chi: Vec<ScalarField> = (0..=m)
            .map(|j| {
                let t = j as f64 / m as f64;
                ScalarField::from_fn(g, |x| (2.0 * tp * x[0]).cos() * (1.0 + t * t))
            })
            .collect();
        let inner: Vec<ScalarField> = (0..=m)
            .map(|j| {
                let v = metric_inner(path.slice(j), &psi[j], &chi[j]);
                ScalarField::constant(g, v)
            })
            .collect();
        let d_inner = time_derivative(&inner);
        let dpsi = covariant_derivative(&path, &psi).unwrap();
        let dchi = covariant_derivative(&path, &chi).unwrap();
        (0..=m)
            .map(|j| {
                let p = path.slice(j);
                let rhs = metric_inner(p, &dpsi[j], &chi[j]) + metric_inner(p, &psi[j], &dchi[j]);
                (d_inner[j].values()[0] - rhs).abs()
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn covariant_derivative_is_metric_compatible() {
        let coarse = compat_residual(32, 32);
        let fine = compat_residual(64, 64);
        assert!(fine < 1e-3, "residual {fine}");
        assert!(coarse / fine > 3.0, "ratio {}", coarse / fine);
    }

    #[test]
    fn flow_examples() {
        let g = g1(16);
        for eps in [0.0, 0.8] {
            let init = TrajectoryState {
                phi: Potential::new(ScalarField::constant(g, 0.3)).unwrap(),
                phi_dot: ScalarField::constant(g, -0.2),
                t: 0.0,
            };
            let traj = forward_flow(&init, eps, 0.01, 100).unwrap();
            let last = traj.last().unwrap();
            let t = last.t;
            let expect = 0.3 - 0.2 * t + 0.5 * eps * t * t;
            assert!((last.phi.field().max() - expect).abs() < 1e-12);
            assert!((last.phi_dot.min() - (-0.2 + eps * t)).abs() < 1e-12);
        }
    }

    #[test]
    fn flow_reports_loss_of_admissibility() {
        let g = g1(16);
        let init = TrajectoryState {
            phi: Potential::zero(g),
            phi_dot: ScalarField::from_fn(g, |x| 0.02 * (2.0 * PI * x[0]).cos()),
            t: 0.0,
        };
        let r = forward_flow(&init, 0.0, 0.05, 400);
        assert!(matches!(r, Err(Error::AdmissibilityLost { .. })), "{r:?}");
    }

    #[test]
    fn v_is_convex_along_the_flow() {
        // the forward problem is elliptic in (x, t): keep data small and low
        let g = g1(16);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let phi = potential_from_density_modes(g, &random_modes(&mut rng, 1, 2, 1, 0.02)).unwrap();
        let vel = potential_from_density_modes(g, &random_modes(&mut rng, 1, 2, 1, 0.02)).unwrap();
        let init = TrajectoryState {
            phi: Potential::new(phi).unwrap(),
            phi_dot: vel,
            t: 0.0,
        };
        let traj = forward_flow(&init, 0.5, 0.01, 30).unwrap();
        let v: Vec<f64> = traj.iter().map(|s| v_functional(s.phi.field())).collect();
        for w in v.windows(3) {
            assert!(w[0] - 2.0 * w[1] + w[2] >= -1e-8);
        }
    }

    #[test]
    fn curvature_examples() {
        let g = g2(16);
        let tp = 2.0 * PI;
        let a = ScalarField::from_fn(g, |x| (tp * x[0]).sin());
        let b = ScalarField::from_fn(g, |x| (2.0 * tp * x[0]).cos());
        let phi = Potential::zero(g);
        assert!(curvature_vector(&phi, &a, &b).unwrap().norm_inf() < 1e-12);
        assert!(sectional_curvature(&phi, &a, &b).unwrap().abs() < 1e-12);

        let g1d = g1(16);
        let z = ScalarField::zeros(g1d);
        assert!(curvature_vector(&Potential::zero(g1d), &z, &z).is_err());
        assert!(sectional_curvature(&Potential::zero(g1d), &z, &z).is_err());
    }

    #[test]
    fn curvature_vector_of_sines_converges() {
        let err = |n: usize| {
            let g = g2(n);
            let tp = 2.0 * PI;
            let a = ScalarField::from_fn(g, |x| (tp * x[0]).sin());
            let b = ScalarField::from_fn(g, |x| (tp * x[1]).sin());
            let nu = curvature_vector(&Potential::zero(g), &a, &b).unwrap();
            let c3 = tp.powi(3);
            let e0 = ScalarField::from_fn(g, |x| -c3 * (tp * x[0]).cos() * (tp * x[1]).sin());
            let e1 = ScalarField::from_fn(g, |x| c3 * (tp * x[0]).sin() * (tp * x[1]).cos());
            (nu.component(0) - &e0)
                .norm_inf()
                .max((nu.component(1) - &e1).norm_inf())
                / c3
        };
        let (a, b) = (err(32), err(64));
        assert!(b < 0.01);
        assert!(a / b > 3.8);
    }

    #[test]
    fn sectional_curvature_of_cosines() {
        let g = g2(64);
        let tp = 2.0 * PI;
        let a = ScalarField::from_fn(g, |x| (tp * x[0]).cos());
        let b = ScalarField::from_fn(g, |x| (tp * x[1]).cos());
        let k = sectional_curvature(&Potential::zero(g), &a, &b).unwrap();
        let exact = -4.0 * PI.powi(4);
        assert!(((k - exact) / exact).abs() < 0.01, "K = {k}");
        // centered differences replace 2π by sin(2πh)/h
        let h = 1.0 / 64.0;
        let discrete = -((tp * h).sin() / h).powi(4) / 4.0;
        assert_abs_diff_eq!(k, discrete, epsilon = 1e-9);
    }

    #[test]
    fn conserved_quantity_examples() {
        let g = g1(32);
        let flat = Potential::new(ScalarField::constant(g, 0.4)).unwrap();
        let q = conserved_quantity(&flat, &ScalarField::constant(g, 0.2), &[1], FourierKind::Cos, 1.0).unwrap();
        assert!(q.abs() < 1e-14);
        let (f, lam) = fourier_eigenpair(g, &[2], FourierKind::Cos).unwrap();
        let c = 0.001;
        let p = Potential::new(f.scale(c)).unwrap();
        let q = conserved_quantity(&p, &ScalarField::zeros(g), &[2], FourierKind::Cos, 1.0).unwrap();
        assert_abs_diff_eq!(q, -c * lam / 2.0, epsilon = 1e-13);
        assert!(conserved_quantity(&p, &ScalarField::zeros(g), &[2], FourierKind::Cos, 0.0).is_err());
        assert!(conserved_quantity(&p, &ScalarField::zeros(g), &[0], FourierKind::Cos, 1.0).is_err());
    }

    fn trig_fields(n: usize) -> (VectorFieldOnX, VectorFieldOnX, ScalarField) {
        let g = g2(n);
        let tp = 2.0 * PI;
        let v = VectorFieldOnX::new(vec![
            ScalarField::from_fn(g, |x| (tp * x[1]).sin() + 0.5),
            ScalarField::from_fn(g, |x| (tp * x[0]).cos() * (tp * x[1]).sin()),
        ])
        .unwrap();
        let w = VectorFieldOnX::new(vec![
            ScalarField::from_fn(g, |x| (tp * (x[0] + x[1])).cos()),
            ScalarField::from_fn(g, |x| (tp * x[0]).sin() - 0.3),
        ])
        .unwrap();
        let f = ScalarField::from_fn(g, |x| (tp * x[0]).sin() * (tp * x[1]).cos() + 1.0);
        (v, w, f)
    }

    #[test]
    fn vector_identities_trivial_cases() {
        let (v, _, f) = trig_fields(16);
        let (a, b) = check_vector_identities(&v, &v, &f).unwrap();
        assert!(a < 1e-12 && b < 1e-12);
        let g = g2(16);
        let c = VectorFieldOnX::constant(g, &[0.3, -1.0]);
        let d = VectorFieldOnX::constant(g, &[2.0, 0.5]);
        let (a, b) = check_vector_identities(&c, &d, &ScalarField::constant(g, 3.0)).unwrap();
        assert!(a < 1e-12 && b < 1e-12);
    }

    #[test]
    fn vector_identities_refine() {
        let r = |n: usize| {
            let (v, w, f) = trig_fields(n);
            check_vector_identities(&v, &w, &f).unwrap()
        };
        let (a1, b1) = r(32);
        let (a2, b2) = r(64);
        assert!(a1 / a2 >= 2.0, "first identity {a1} -> {a2}");
        assert!(b1 / b2 >= 2.0, "second identity {b1} -> {b2}");
        assert!(a2 < 1.0 && b2 < 1.0);
    }
}
