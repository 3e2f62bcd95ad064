//! Dirichlet problem `q(Φ) = ε` on `X × [0, 1]`, where
//! `q(Φ) = ∂²_tΦ (1 - ΔΦ) - |∇∂_tΦ|²`, solved by damped Newton inside a
//! continuation on the boundary data. Also the Lorentzian quadratic `Q` and
//! the convexity diagnostics behind uniqueness.

use crate::banded::BandMatrix;
use crate::error::{Error, Result};
use crate::grid::{dot, gradient, laplacian, partial, ScalarField};
use crate::space_h::{action, centered_difference, density, q_of_slices, second_difference, PathInH, Potential};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NewtonOptions {
    /// Target for `‖q(Φ) - ε‖∞`.
    pub tol: f64,
    pub max_iter: usize,
    /// Step shrink factor of the backtracking line search.
    pub backtrack: f64,
    /// First continuation step.
    pub initial_ds: f64,
    /// Largest continuation step.
    pub max_ds: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 30,
            backtrack: 0.5,
            initial_ds: 0.25,
            max_ds: 0.25,
        }
    }
}

#[derive(Clone, Debug)]
pub struct PhiProblem {
    pub phi0: Potential,
    pub phi1: Potential,
    pub eps: f64,
    pub m: usize,
    pub newton: NewtonOptions,
}

impl PhiProblem {
    pub fn new(phi0: Potential, phi1: Potential, eps: f64, m: usize) -> Result<Self> {
        if !(eps > 0.0) {
            return Err(Error::InvalidParameter(format!("eps must be positive, got {eps}")));
        }
        if m < 2 {
            return Err(Error::InvalidParameter(format!("need m >= 2, got {m}")));
        }
        phi0.grid().check_same(&phi1.grid())?;
        Ok(Self {
            phi0,
            phi1,
            eps,
            m,
            newton: NewtonOptions::default(),
        })
    }

    pub fn with_newton(mut self, newton: NewtonOptions) -> Self {
        self.newton = newton;
        self
    }
}

/// Statistics of a successful solve.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SolveStats {
    pub continuation_steps: usize,
    pub rejected_steps: usize,
    pub newton_iterations: usize,
    pub residual: f64,
}

/// `q(Φ)` on the interior slices `1..m-1`.
pub fn q_operator(path: &PathInH) -> Result<Vec<ScalarField>> {
    if path.m() < 2 {
        return Err(Error::InvalidParameter("q needs m >= 2".into()));
    }
    Ok(q_of_slices(path.slices()))
}

/// Directional derivative `Dq[ψ]` on the interior slices.
pub fn q_linearization(path: &PathInH, psi: &[ScalarField]) -> Result<Vec<ScalarField>> {
    if path.m() < 2 {
        return Err(Error::InvalidParameter("q needs m >= 2".into()));
    }
    if psi.len() != path.slices().len() {
        return Err(Error::ShapeMismatch(format!(
            "path has {} slices, direction has {}",
            path.slices().len(),
            psi.len()
        )));
    }
    let s = path.slices();
    Ok((1..path.m())
        .map(|j| {
            let rho = density(&s[j]);
            let a = &second_difference(psi, j) * &rho;
            let b = &second_difference(s, j) * &laplacian(&psi[j]);
            let c = dot(
                &gradient(&centered_difference(s, j)),
                &gradient(&centered_difference(psi, j)),
            );
            &(&a - &b) - &c.scale(2.0)
        })
        .collect())
}

/// Position of node `i` in the folded ordering `0, n-1, 1, n-2, ...`, which
/// keeps periodic neighbours within distance two.
fn fold(i: usize, n: usize) -> usize {
    if i < n / 2 {
        2 * i
    } else {
        2 * (n - 1 - i) + 1
    }
}

struct Layout {
    n: usize,
    dim: usize,
    per_slice: usize,
    pos: Vec<usize>,
    band: usize,
}

impl Layout {
    fn new(path: &PathInH) -> Self {
        let grid = path.grid();
        let n = grid.n();
        let pos = (0..grid.len())
            .map(|idx| {
                let mi = grid.multi_index(idx);
                match grid.dim() {
                    1 => fold(mi[0], n),
                    _ => fold(mi[0], n) * n + fold(mi[1], n),
                }
            })
            .collect();
        let inner = if grid.dim() == 1 { 2 } else { 2 * n };
        Self {
            n,
            dim: grid.dim(),
            per_slice: grid.len(),
            pos,
            band: grid.len() + inner,
        }
    }

    fn unknown(&self, j: usize, idx: usize) -> usize {
        (j - 1) * self.per_slice + self.pos[idx]
    }
}

fn assemble_jacobian(slices: &[ScalarField], layout: &Layout) -> BandMatrix {
    let m = slices.len() - 1;
    let grid = slices[0].grid();
    let h = grid.spacing();
    let tau = 1.0 / m as f64;
    let size = (m - 1) * layout.per_slice;
    let mut jac = BandMatrix::zeros(size, layout.band, layout.band);
    let inv_tau2 = 1.0 / (tau * tau);
    let inv_h2 = 1.0 / (h * h);
    let mix = 1.0 / (2.0 * h * tau);
    for j in 1..m {
        let rho = density(&slices[j]);
        let dtt = second_difference(slices, j);
        let dt = centered_difference(slices, j);
        let coef: Vec<ScalarField> = (0..layout.dim).map(|a| partial(&dt, a)).collect();
        for idx in 0..layout.per_slice {
            let row = layout.unknown(j, idx);
            let r = rho.values()[idx];
            let p = dtt.values()[idx];
            jac.add(row, row, -2.0 * r * inv_tau2 - p * 2.0 * layout.dim as f64 * inv_h2);
            if j + 1 < m {
                jac.add(row, layout.unknown(j + 1, idx), r * inv_tau2);
            }
            if j > 1 {
                jac.add(row, layout.unknown(j - 1, idx), r * inv_tau2);
            }
            for (axis, c) in coef.iter().enumerate() {
                let c = c.values()[idx];
                let ip = grid.shift(idx, axis, 1);
                let im = grid.shift(idx, axis, -1);
                jac.add(row, layout.unknown(j, ip), p * inv_h2);
                jac.add(row, layout.unknown(j, im), p * inv_h2);
                if j + 1 < m {
                    jac.add(row, layout.unknown(j + 1, ip), -c * mix);
                    jac.add(row, layout.unknown(j + 1, im), c * mix);
                }
                if j > 1 {
                    jac.add(row, layout.unknown(j - 1, ip), c * mix);
                    jac.add(row, layout.unknown(j - 1, im), -c * mix);
                }
            }
        }
    }
    debug_assert!(layout.n >= 4);
    jac
}

fn residual(slices: &[ScalarField], eps: f64) -> (Vec<ScalarField>, f64) {
    let r: Vec<ScalarField> = q_of_slices(slices).into_iter().map(|q| q.map(|v| v - eps)).collect();
    let norm = r.iter().map(ScalarField::norm_inf).fold(0.0, f64::max);
    (r, norm)
}

fn acceptable(slices: &[ScalarField], margin: f64) -> bool {
    let m = slices.len() - 1;
    (1..m).all(|j| density(&slices[j]).min() >= margin) && q_of_slices(slices).iter().all(|q| q.min() > 0.0)
}

enum NewtonFailure {
    Diverged(f64),
    Stalled,
}

fn newton(
    slices: &mut [ScalarField],
    eps: f64,
    margin: f64,
    opts: &NewtonOptions,
    layout: &Layout,
    iterations: &mut usize,
) -> std::result::Result<f64, NewtonFailure> {
    let m = slices.len() - 1;
    if !acceptable(slices, margin) {
        return Err(NewtonFailure::Stalled);
    }
    let (mut r, mut norm) = residual(slices, eps);
    for _ in 0..opts.max_iter {
        if norm <= opts.tol {
            return Ok(norm);
        }
        *iterations += 1;
        let jac = assemble_jacobian(slices, layout);
        let mut rhs = vec![0.0; jac.size()];
        for j in 1..m {
            for (idx, v) in r[j - 1].values().iter().enumerate() {
                rhs[layout.unknown(j, idx)] = -v;
            }
        }
        if jac.solve(&mut rhs).is_err() {
            return Err(NewtonFailure::Diverged(norm));
        }
        let mut step = 1.0;
        let mut accepted = false;
        while step > 1e-6 {
            let trial: Vec<ScalarField> = (0..=m)
                .map(|j| {
                    if j == 0 || j == m {
                        return slices[j].clone();
                    }
                    let base = slices[j].values();
                    let vals = (0..base.len())
                        .map(|idx| base[idx] + step * rhs[layout.unknown(j, idx)])
                        .collect();
                    ScalarField::from_values(slices[j].grid(), vals).unwrap_or_else(|_| slices[j].clone())
                })
                .collect();
            if acceptable(&trial, margin) {
                let (tr, tn) = residual(&trial, eps);
                if tn < norm {
                    slices.clone_from_slice(&trial);
                    r = tr;
                    norm = tn;
                    accepted = true;
                    break;
                }
            }
            step *= opts.backtrack;
        }
        if !accepted {
            return if norm.is_finite() {
                Err(NewtonFailure::Stalled)
            } else {
                Err(NewtonFailure::Diverged(norm))
            };
        }
    }
    if norm <= opts.tol {
        Ok(norm)
    } else {
        Err(NewtonFailure::Stalled)
    }
}

/// Solves the Dirichlet problem; see [`solve_dirichlet_with_stats`].
pub fn solve_dirichlet(problem: &PhiProblem) -> Result<PathInH> {
    solve_dirichlet_with_stats(problem).map(|(p, _)| p)
}

/// Continuation in `s ∈ [0, 1]` on the boundary data `(sφ₀, sφ₁)`, starting
/// from the exact solution `(ε/2) t (t - 1)` at `s = 0`. Each step predicts
/// by adding the linear interpolant of the data increment and corrects with
/// damped Newton; failed steps are halved down to `2⁻²⁰`.
pub fn solve_dirichlet_with_stats(problem: &PhiProblem) -> Result<(PathInH, SolveStats)> {
    let grid = problem.phi0.grid();
    let m = problem.m;
    let eps = problem.eps;
    let opts = problem.newton;
    let margin = problem.phi0.margin().min(problem.phi1.margin());
    if !(opts.tol > 0.0) || !(opts.backtrack > 0.0 && opts.backtrack < 1.0) {
        return Err(Error::InvalidParameter(
            "Newton tolerance must be positive and backtrack factor in (0, 1)".into(),
        ));
    }
    if !(opts.initial_ds > 0.0 && opts.max_ds > 0.0) {
        return Err(Error::InvalidParameter("continuation steps must be positive".into()));
    }
    let phi0 = problem.phi0.field();
    let phi1 = problem.phi1.field();
    let mut slices: Vec<ScalarField> = (0..=m)
        .map(|j| {
            let t = j as f64 / m as f64;
            ScalarField::constant(grid, 0.5 * eps * t * (t - 1.0))
        })
        .collect();
    let path_probe = PathInH::from_raw(slices.clone());
    let layout = Layout::new(&path_probe);
    let mut stats = SolveStats::default();

    let mut s = 0.0f64;
    let mut ds = opts.initial_ds.min(1.0);
    let min_ds = 2f64.powi(-20);
    let mut last_failure: Option<NewtonFailure> = None;
    let mut norm = residual(&slices, eps).1;
    while s < 1.0 {
        let target = (s + ds).min(1.0);
        let inc = target - s;
        let mut trial: Vec<ScalarField> = slices
            .iter()
            .enumerate()
            .map(|(j, sl)| {
                let t = j as f64 / m as f64;
                let lin = phi0.zip_map(phi1, |a, b| (1.0 - t) * a + t * b);
                sl.axpy(inc, &lin)
            })
            .collect();
        // exact boundary values, free of accumulated rounding
        trial[0] = phi0.scale(target);
        trial[m] = phi1.scale(target);
        match newton(&mut trial, eps, margin, &opts, &layout, &mut stats.newton_iterations) {
            Ok(res) => {
                slices = trial;
                s = target;
                norm = res;
                stats.continuation_steps += 1;
                ds = (2.0 * ds).min(opts.max_ds);
                last_failure = None;
            }
            Err(f) => {
                stats.rejected_steps += 1;
                ds *= 0.5;
                last_failure = Some(f);
                if ds < min_ds {
                    return Err(match last_failure {
                        Some(NewtonFailure::Diverged(r)) => Error::NewtonDiverged { s, residual: r },
                        _ => Error::StepTooSmall { s },
                    });
                }
            }
        }
    }
    debug_assert!(last_failure.is_none());
    stats.residual = norm;
    let path = PathInH::with_margin(slices, margin).map_err(|_| Error::AdmissibilityLost {
        step: stats.continuation_steps,
    })?;
    Ok((path, stats))
}

/// Symmetric matrix indexed from 0, stored densely.
#[derive(Clone, Debug, PartialEq)]
pub struct SymMatrix {
    size: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    /// Row-major entries; rejects asymmetric input beyond `1e-12` relative.
    pub fn new(size: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != size * size || size == 0 {
            return Err(Error::ShapeMismatch(format!(
                "{} entries for a {size}x{size} matrix",
                data.len()
            )));
        }
        let scale = data.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for i in 0..size {
            for j in 0..i {
                if (data[i * size + j] - data[j * size + i]).abs() > 1e-12 * scale {
                    return Err(Error::InvalidParameter(format!(
                        "matrix is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(Self { size, data })
    }

    pub fn identity(size: usize) -> Self {
        let mut data = vec![0.0; size * size];
        for i in 0..size {
            data[i * size + i] = 1.0;
        }
        Self { size, data }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.size + j]
    }

    pub fn lincomb(&self, a: f64, other: &SymMatrix, b: f64) -> SymMatrix {
        SymMatrix {
            size: self.size,
            data: self.data.iter().zip(&other.data).map(|(x, y)| a * x + b * y).collect(),
        }
    }
}

/// `Q(A) = A₀₀ Σ_{i≥1} Aᵢᵢ - Σ_{i≥1} A²ᵢ₀`.
pub fn lorentz_q(a: &SymMatrix) -> f64 {
    let trace: f64 = (1..a.size()).map(|i| a.get(i, i)).sum();
    let mixed: f64 = (1..a.size()).map(|i| a.get(i, 0).powi(2)).sum();
    a.get(0, 0) * trace - mixed
}

/// Smallest value of `Q` over the interior nodes of a path, for the
/// discrete Hessian-type matrix with `A₀₀ = ∂²_tΦ`, `A₀ᵢ = ∂ᵢ∂_tΦ` and a
/// spatial block of trace `1 - ΔΦ` (so that `Q = q(Φ)` pointwise).
pub fn min_discrete_q(path: &PathInH) -> f64 {
    let s = path.slices();
    let d = path.grid().dim();
    let mut min = f64::INFINITY;
    for j in 1..path.m() {
        let dtt = second_difference(s, j);
        let dt = centered_difference(s, j);
        let g = gradient(&dt);
        let lap = laplacian(&s[j]);
        for idx in 0..dtt.values().len() {
            let mut data = vec![0.0; (d + 1) * (d + 1)];
            data[0] = dtt.values()[idx];
            for a in 0..d {
                let v = g.component(a).values()[idx];
                data[a + 1] = v;
                data[(a + 1) * (d + 1)] = v;
                // only the trace of the spatial block enters Q
                data[(a + 1) * (d + 2)] = (1.0 - lap.values()[idx]) / d as f64;
            }
            let q = lorentz_q(&SymMatrix { size: d + 1, data });
            min = min.min(q);
        }
    }
    min
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvexityReport {
    pub s: Vec<f64>,
    pub actions: Vec<f64>,
    pub min_second_difference: f64,
    /// Minimum of `q(Φ_s) - ε` over interior nodes and `s ∈ (0, 1)`.
    pub min_q_minus_eps: f64,
}

/// Evaluates the action along `s ↦ s·a + (1-s)·b` at `samples` equally
/// spaced points of `[0, 1]`.
pub fn convexity_report(path_a: &PathInH, path_b: &PathInH, eps: f64, samples: usize) -> Result<ConvexityReport> {
    if samples < 3 {
        return Err(Error::InvalidParameter("need at least 3 samples".into()));
    }
    if path_a.m() != path_b.m() || path_a.grid() != path_b.grid() {
        return Err(Error::ShapeMismatch("paths differ in shape".into()));
    }
    let m = path_a.m();
    let bd = (path_a.slice(0) - path_b.slice(0))
        .norm_inf()
        .max((path_a.slice(m) - path_b.slice(m)).norm_inf());
    if bd > 1e-12 {
        return Err(Error::ShapeMismatch(format!(
            "paths do not share boundary slices (difference {bd:e})"
        )));
    }
    let mut s_vals = Vec::with_capacity(samples);
    let mut actions = Vec::with_capacity(samples);
    let mut min_q = f64::INFINITY;
    for i in 0..samples {
        let s = i as f64 / (samples - 1) as f64;
        let p = path_a.combine(s, path_b, 1.0 - s)?;
        if density_ok(&p) {
            actions.push(action(&p, eps));
        } else {
            return Err(Error::NotAdmissible {
                min_density: p
                    .slices()
                    .iter()
                    .map(|x| density(x).min())
                    .fold(f64::INFINITY, f64::min),
                margin: 0.0,
            });
        }
        if i > 0 && i + 1 < samples {
            for q in q_of_slices(p.slices()) {
                min_q = min_q.min(q.min() - eps);
            }
        }
        s_vals.push(s);
    }
    let min_second = actions
        .windows(3)
        .map(|w| w[0] - 2.0 * w[1] + w[2])
        .fold(f64::INFINITY, f64::min);
    Ok(ConvexityReport {
        s: s_vals,
        actions,
        min_second_difference: min_second,
        min_q_minus_eps: min_q,
    })
}

fn density_ok(p: &PathInH) -> bool {
    p.slices().iter().all(|s| density(s).min() > 0.0)
}
