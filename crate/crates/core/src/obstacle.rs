//! The U-formulation: minimise
//! `E_M(U) = ∫∫ ½|∇_X U|² + (ε/2)(∂_zU)² + ρ₀ U` over `U ≥ L` on the slab
//! `X × [-M, M]`, with `U = 0` at `z = -M` and `U = L` at `z = M`.
//!
//! The minimiser satisfies the complementarity system
//! `Δ_ε U + ρ₀ ≥ 0`, `U ≥ L`, `min(Δ_ε U + ρ₀, U - L) = 0`, where
//! `Δ_ε = -ε∂²_z + Δ_X`.

use crate::error::{Error, Result};
use crate::grid::{integrate, ScalarField, TorusGrid};
use crate::space_h::{density, Potential};

/// Tensor grid on `X × [-M, M]` with `m_z` intervals in `z`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SlabGrid {
    base: TorusGrid,
    half_height: f64,
    mz: usize,
}

impl SlabGrid {
    pub fn new(base: TorusGrid, half_height: f64, mz: usize) -> Result<Self> {
        if !(half_height > 0.0) || !half_height.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "slab half-height must be positive, got {half_height}"
            )));
        }
        if mz < 8 || mz % 2 != 0 {
            return Err(Error::InvalidParameter(format!(
                "z-intervals must be even and >= 8, got {mz}"
            )));
        }
        Ok(Self { base, half_height, mz })
    }

    pub fn base(&self) -> TorusGrid {
        self.base
    }

    pub fn half_height(&self) -> f64 {
        self.half_height
    }

    pub fn mz(&self) -> usize {
        self.mz
    }

    /// Vertical spacing `k = 2M / m_z`.
    pub fn dz(&self) -> f64 {
        2.0 * self.half_height / self.mz as f64
    }

    pub fn z(&self, j: usize) -> f64 {
        if j == self.mz {
            return self.half_height;
        }
        -self.half_height + j as f64 * self.dz()
    }

    pub fn column_len(&self) -> usize {
        self.mz + 1
    }

    pub fn len(&self) -> usize {
        self.base.len() * self.column_len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Flat index of node `(x-index, j)`; columns are contiguous.
    #[inline]
    pub fn index(&self, idx: usize, j: usize) -> usize {
        idx * self.column_len() + j
    }
}

/// Function sampled on a [`SlabGrid`], stored column by column.
#[derive(Clone, Debug, PartialEq)]
pub struct SlabField {
    slab: SlabGrid,
    values: Vec<f64>,
}

impl SlabField {
    pub fn from_values(slab: SlabGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != slab.len() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} samples, got {}",
                slab.len(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("slab field sample".into()));
        }
        Ok(Self { slab, values })
    }

    /// Samples `f(x, z)`.
    pub fn from_fn(slab: SlabGrid, f: impl Fn([f64; 2], f64) -> f64) -> Self {
        let base = slab.base();
        let mut values = Vec::with_capacity(slab.len());
        for idx in 0..base.len() {
            let x = base.coords(idx);
            for j in 0..slab.column_len() {
                values.push(f(x, slab.z(j)));
            }
        }
        Self { slab, values }
    }

    pub fn zeros(slab: SlabGrid) -> Self {
        Self {
            slab,
            values: vec![0.0; slab.len()],
        }
    }

    pub(crate) fn raw(slab: SlabGrid, values: Vec<f64>) -> Self {
        Self { slab, values }
    }

    pub fn slab(&self) -> SlabGrid {
        self.slab
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, idx: usize, j: usize) -> f64 {
        self.values[self.slab.index(idx, j)]
    }

    pub fn column(&self, idx: usize) -> &[f64] {
        let c = self.slab.column_len();
        &self.values[idx * c..(idx + 1) * c]
    }

    /// Horizontal slice at level `j`.
    pub fn level(&self, j: usize) -> ScalarField {
        let base = self.slab.base();
        ScalarField::raw(base, (0..base.len()).map(|i| self.get(i, j)).collect())
    }

    pub fn max_abs_diff(&self, other: &SlabField) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}

/// `L(x, z) = max(φ₀(x) - φ₁(x) + z, 0)`.
pub fn obstacle_l(phi0: &Potential, phi1: &Potential, slab: SlabGrid) -> Result<SlabField> {
    phi0.grid().check_same(&phi1.grid())?;
    slab.base().check_same(&phi0.grid())?;
    let diff = phi0.field() - phi1.field();
    let base = slab.base();
    let mut values = Vec::with_capacity(slab.len());
    for idx in 0..base.len() {
        let d = diff.values()[idx];
        for j in 0..slab.column_len() {
            values.push((d + slab.z(j)).max(0.0));
        }
    }
    Ok(SlabField::raw(slab, values))
}

/// A complete variational-inequality instance.
#[derive(Clone, Debug)]
pub struct ObstacleProblem {
    lower: SlabField,
    rho0: ScalarField,
    eps: f64,
}

impl ObstacleProblem {
    /// Checks `∫ρ₀ = 1` within `1e-10`, `ρ₀ > 0`, `ε > 0` and `L(·, -M) = 0`.
    pub fn new(lower: SlabField, rho0: ScalarField, eps: f64) -> Result<Self> {
        if !(eps > 0.0) {
            return Err(Error::InvalidParameter(format!("eps must be positive, got {eps}")));
        }
        lower.slab().base().check_same(&rho0.grid())?;
        let integral = integrate(&rho0);
        if (integral - 1.0).abs() > 1e-10 {
            return Err(Error::NotNormalized { integral });
        }
        if rho0.min() <= 0.0 {
            return Err(Error::NotPositive { min: rho0.min() });
        }
        let slab = lower.slab();
        for idx in 0..slab.base().len() {
            if lower.get(idx, 0) != 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "obstacle must vanish on the bottom cap (column {idx})"
                )));
            }
        }
        Ok(Self { lower, rho0, eps })
    }

    /// The instance attached to boundary potentials: `L` from `(φ₀, φ₁)` and
    /// `ρ₀ = 1 - Δφ₀`.
    pub fn from_potentials(phi0: &Potential, phi1: &Potential, eps: f64, slab: SlabGrid) -> Result<Self> {
        let lower = obstacle_l(phi0, phi1, slab)?;
        Self::new(lower, density(phi0.field()), eps)
    }

    pub fn lower(&self) -> &SlabField {
        &self.lower
    }

    pub fn rho0(&self) -> &ScalarField {
        &self.rho0
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn slab(&self) -> SlabGrid {
        self.lower.slab()
    }

    /// Field with the correct cap values and `L` elsewhere; a feasible start.
    pub fn feasible_start(&self) -> SlabField {
        self.lower.clone()
    }

    /// Largest `|U - cap|` on the two caps.
    pub fn cap_violation(&self, u: &SlabField) -> f64 {
        let slab = self.slab();
        let mz = slab.mz();
        (0..slab.base().len())
            .map(|i| u.get(i, 0).abs().max((u.get(i, mz) - self.lower.get(i, mz)).abs()))
            .fold(0.0, f64::max)
    }
}

/// Neighbour table of a torus grid: `[axis][idx] -> (plus, minus)`.
pub(crate) fn neighbours(grid: TorusGrid) -> Vec<Vec<(usize, usize)>> {
    (0..grid.dim())
        .map(|a| {
            (0..grid.len())
                .map(|i| (grid.shift(i, a, 1), grid.shift(i, a, -1)))
                .collect()
        })
        .collect()
}

/// `E_M(U)` with edge-based differences, so that its gradient at interior
/// nodes is `h^d k (Δ_ε U + ρ₀)`; trapezoid weights in `z`.
pub fn energy_em(u: &SlabField, p: &ObstacleProblem) -> Result<f64> {
    let slab = p.slab();
    if u.slab() != slab {
        return Err(Error::ShapeMismatch("field and problem live on different slabs".into()));
    }
    let base = slab.base();
    let nb = neighbours(base);
    let (h, k, eps) = (base.spacing(), slab.dz(), p.eps());
    let mz = slab.mz();
    let mut total = 0.0;
    for idx in 0..base.len() {
        let col = u.column(idx);
        let rho = p.rho0().values()[idx];
        let mut vertical = 0.0;
        for j in 0..mz {
            let d = (col[j + 1] - col[j]) / k;
            vertical += 0.5 * eps * d * d * k;
        }
        let mut horizontal = 0.0;
        for j in 0..=mz {
            let w = if j == 0 || j == mz { 0.5 * k } else { k };
            let mut g2 = 0.0;
            for axis in &nb {
                let d = (u.get(axis[idx].0, j) - col[j]) / h;
                g2 += d * d;
            }
            horizontal += w * (0.5 * g2 + rho * col[j]);
        }
        total += vertical + horizontal;
    }
    Ok(total * base.cell_volume())
}

/// `Δ_ε U + ρ₀` at interior nodes (zero on the caps).
pub fn complementarity_operator(u: &SlabField, p: &ObstacleProblem) -> SlabField {
    let slab = p.slab();
    let base = slab.base();
    let nb = neighbours(base);
    let (h, k, eps) = (base.spacing(), slab.dz(), p.eps());
    let (cz, cx) = (eps / (k * k), 1.0 / (h * h));
    let mz = slab.mz();
    let mut out = vec![0.0; slab.len()];
    for idx in 0..base.len() {
        for j in 1..mz {
            let c = u.get(idx, j);
            let mut v = cz * (2.0 * c - u.get(idx, j + 1) - u.get(idx, j - 1));
            for axis in &nb {
                let (pp, mm) = axis[idx];
                v += cx * (2.0 * c - u.get(pp, j) - u.get(mm, j));
            }
            out[slab.index(idx, j)] = v + p.rho0().values()[idx];
        }
    }
    SlabField::raw(slab, out)
}

/// Largest `|min(Δ_εU + ρ₀, U - L)|` over interior nodes.
pub fn complementarity_residual(u: &SlabField, p: &ObstacleProblem) -> f64 {
    let r = complementarity_operator(u, p);
    let slab = p.slab();
    let mut worst = 0.0f64;
    for idx in 0..slab.base().len() {
        for j in 1..slab.mz() {
            let gap = u.get(idx, j) - p.lower().get(idx, j);
            worst = worst.max(r.get(idx, j).min(gap).abs());
        }
    }
    worst
}

/// Over-relaxation factor from the Jacobi spectral radius of the
/// unconstrained operator (Dirichlet in `z`, periodic in `x`).
pub fn optimal_omega(p: &ObstacleProblem) -> f64 {
    let slab = p.slab();
    let base = slab.base();
    let (h, k, eps) = (base.spacing(), slab.dz(), p.eps());
    let diag = 2.0 * eps / (k * k) + 2.0 * base.dim() as f64 / (h * h);
    let lam_min = eps * (2.0 - 2.0 * (std::f64::consts::PI / slab.mz() as f64).cos()) / (k * k);
    let rho_j = 1.0 - lam_min / diag;
    2.0 / (1.0 + (1.0 - rho_j * rho_j).sqrt())
}

#[derive(Clone, Debug, PartialEq)]
pub struct PsorOptions {
    pub omega: f64,
    pub tol: f64,
    pub max_sweeps: usize,
    /// Record `E_M` after every sweep.
    pub record_energy: bool,
    /// Check the residual every this many sweeps.
    pub check_every: usize,
}

impl Default for PsorOptions {
    fn default() -> Self {
        Self {
            omega: 1.5,
            tol: 1e-10,
            max_sweeps: 200_000,
            record_energy: false,
            check_every: 10,
        }
    }
}

#[derive(Clone, Debug)]
pub struct PsorOutcome {
    pub u: SlabField,
    pub sweeps: usize,
    pub residual: f64,
    pub energies: Vec<f64>,
}

/// Projected SOR with the defaults of [`PsorOptions`] apart from `ω`, `tol`
/// and the sweep budget.
pub fn solve_psor(p: &ObstacleProblem, omega: f64, tol: f64, max_sweeps: usize) -> Result<SlabField> {
    let opts = PsorOptions {
        omega,
        tol,
        max_sweeps,
        ..PsorOptions::default()
    };
    solve_psor_detailed(p, &opts, None).map(|o| o.u)
}

/// Lexicographic projected SOR (columns outer, `z` inner). Starts from
/// `start` or from the obstacle.
pub fn solve_psor_detailed(p: &ObstacleProblem, opts: &PsorOptions, start: Option<&SlabField>) -> Result<PsorOutcome> {
    if !(opts.omega > 0.0 && opts.omega < 2.0) {
        return Err(Error::InvalidParameter(format!(
            "relaxation factor must lie in (0, 2), got {}",
            opts.omega
        )));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidParameter("tolerance must be positive".into()));
    }
    let slab = p.slab();
    let base = slab.base();
    let nb = neighbours(base);
    let (h, k, eps) = (base.spacing(), slab.dz(), p.eps());
    let (cz, cx) = (eps / (k * k), 1.0 / (h * h));
    let diag = 2.0 * cz + 2.0 * base.dim() as f64 * cx;
    let mz = slab.mz();
    let cl = slab.column_len();
    let lower = p.lower().values();
    let rho = p.rho0().values();

    let mut u: Vec<f64> = match start {
        Some(s) => {
            if s.slab() != slab {
                return Err(Error::ShapeMismatch("start field on a different slab".into()));
            }
            s.values().iter().zip(lower).map(|(a, b)| a.max(*b)).collect()
        }
        None => lower.to_vec(),
    };
    for idx in 0..base.len() {
        u[idx * cl] = 0.0;
        u[idx * cl + mz] = lower[idx * cl + mz];
    }

    let mut energies = Vec::new();
    let check_every = opts.check_every.max(1);
    let mut residual = f64::INFINITY;
    let mut sweeps = 0;
    while sweeps < opts.max_sweeps {
        for idx in 0..base.len() {
            let off = idx * cl;
            for j in 1..mz {
                let mut nsum = cz * (u[off + j + 1] + u[off + j - 1]);
                for axis in &nb {
                    let (pp, mm) = axis[idx];
                    nsum += cx * (u[pp * cl + j] + u[mm * cl + j]);
                }
                let target = (nsum - rho[idx]) / diag;
                let cur = u[off + j];
                let next = cur + opts.omega * (target - cur);
                u[off + j] = next.max(lower[off + j]);
            }
        }
        sweeps += 1;
        if opts.record_energy {
            energies.push(energy_em(&SlabField::raw(slab, u.clone()), p)?);
        }
        if sweeps % check_every == 0 || sweeps == opts.max_sweeps {
            let field = SlabField::raw(slab, u.clone());
            residual = complementarity_residual(&field, p);
            if !residual.is_finite() {
                return Err(Error::NotConverged { sweeps, residual });
            }
            if residual <= opts.tol {
                break;
            }
        }
    }
    if residual > opts.tol {
        return Err(Error::NotConverged { sweeps, residual });
    }
    let u = SlabField::raw(slab, u);
    for idx in 0..base.len() {
        for j in (1..=2).chain(mz - 2..mz) {
            if u.get(idx, j) - p.lower().get(idx, j) > 1e-12 {
                return Err(Error::FreeBoundaryTouchesSlab);
            }
        }
    }
    Ok(PsorOutcome {
        u,
        sweeps,
        residual,
        energies,
    })
}

/// Non-contact region and the two free boundaries.
#[derive(Clone, Debug, PartialEq)]
pub struct ActiveSet {
    /// `U - L > tol`, in slab layout.
    pub mask: Vec<bool>,
    pub h0: ScalarField,
    pub h1: ScalarField,
}

impl ActiveSet {
    pub fn contains(&self, slab: SlabGrid, idx: usize, j: usize) -> bool {
        self.mask[slab.index(idx, j)]
    }

    /// Index range `[first, last]` of the mask in column `idx`, if any.
    pub fn column_range(&self, slab: SlabGrid, idx: usize) -> Option<(usize, usize)> {
        let col = &self.mask[idx * slab.column_len()..(idx + 1) * slab.column_len()];
        let first = col.iter().position(|&b| b)?;
        let last = col.iter().rposition(|&b| b)?;
        Some((first, last))
    }
}

/// Zero of `g` extrapolated linearly through `(za, ga)`, `(zb, gb)`,
/// clamped to one cell beyond `za`.
fn extrapolate_zero(za: f64, ga: f64, zb: f64, gb: f64, k: f64) -> f64 {
    let slope = (gb - ga) / (zb - za);
    if slope.abs() < 1e-300 || !slope.is_finite() {
        return za - 0.5 * (zb - za).signum() * k;
    }
    let z = za - ga / slope;
    let lo = za.min(za - (zb - za).signum() * k);
    let hi = za.max(za - (zb - za).signum() * k);
    z.clamp(lo, hi)
}

/// Extracts `{U - L > tol}` and the boundary heights. Near a free boundary
/// `U - L` vanishes quadratically, so `√(U - L)` is extrapolated linearly to
/// its zero from the first two masked nodes.
pub fn active_set(u: &SlabField, lower: &SlabField, tol: f64) -> Result<ActiveSet> {
    let slab = u.slab();
    if lower.slab() != slab {
        return Err(Error::ShapeMismatch("U and L on different slabs".into()));
    }
    let base = slab.base();
    let k = slab.dz();
    let mz = slab.mz();
    let mask: Vec<bool> = u
        .values()
        .iter()
        .zip(lower.values())
        .map(|(a, b)| a - b > tol)
        .collect();
    let mut h0 = Vec::with_capacity(base.len());
    let mut h1 = Vec::with_capacity(base.len());
    for idx in 0..base.len() {
        let col = &mask[idx * slab.column_len()..(idx + 1) * slab.column_len()];
        let gap = |j: usize| (u.get(idx, j) - lower.get(idx, j)).max(0.0).sqrt();
        match (col.iter().position(|&b| b), col.iter().rposition(|&b| b)) {
            (Some(a), Some(b)) => {
                if col[a..=b].iter().any(|&v| !v) {
                    return Err(Error::NonContiguousMask { x: idx });
                }
                let (lo, hi) = if b > a {
                    (
                        extrapolate_zero(slab.z(a), gap(a), slab.z(a + 1), gap(a + 1), k),
                        extrapolate_zero(slab.z(b), gap(b), slab.z(b - 1), gap(b - 1), k),
                    )
                } else {
                    (slab.z(a) - 0.5 * k, slab.z(a) + 0.5 * k)
                };
                h0.push(lo);
                h1.push(hi.max(lo));
            }
            _ => {
                // L = max(z - c, 0) with its kink at c = M - L(M)
                let kink = slab.half_height() - lower.get(idx, mz);
                h0.push(kink);
                h1.push(kink);
            }
        }
    }
    Ok(ActiveSet {
        mask,
        h0: ScalarField::raw(base, h0),
        h1: ScalarField::raw(base, h1),
    })
}

/// `J(u) = ∫ ½|∇u|² + ρu` with edge differences.
pub fn energy_j(u: &ScalarField, rho: &ScalarField) -> f64 {
    let grid = u.grid();
    let nb = neighbours(grid);
    let h = grid.spacing();
    let v = u.values();
    let mut total = 0.0;
    for idx in 0..grid.len() {
        let mut g2 = 0.0;
        for axis in &nb {
            let d = (v[axis[idx].0] - v[idx]) / h;
            g2 += d * d;
        }
        total += 0.5 * g2 + rho.values()[idx] * v[idx];
    }
    total * grid.cell_volume()
}

/// Minimiser of `J` over `u ≥ λ_z` for one obstacle, by projected SOR on X.
pub fn solve_family_member(
    lam: &ScalarField,
    rho: &ScalarField,
    z: f64,
    omega: f64,
    tol: f64,
    max_sweeps: usize,
) -> Result<ScalarField> {
    let grid = lam.grid();
    grid.check_same(&rho.grid())?;
    let nb = neighbours(grid);
    let h = grid.spacing();
    let cx = 1.0 / (h * h);
    let diag = 2.0 * grid.dim() as f64 * cx;
    let obstacle: Vec<f64> = lam.values().iter().map(|&l| l.max(z)).collect();
    let mut u = obstacle.clone();
    let r = rho.values();
    let residual = |u: &[f64]| {
        let mut worst = 0.0f64;
        for idx in 0..grid.len() {
            let mut a = 0.0;
            for axis in &nb {
                let (p, m) = axis[idx];
                a += cx * (2.0 * u[idx] - u[p] - u[m]);
            }
            worst = worst.max((a + r[idx]).min(u[idx] - obstacle[idx]).abs());
        }
        worst
    };
    let mut res = residual(&u);
    let mut sweeps = 0;
    while res > tol && sweeps < max_sweeps {
        for idx in 0..grid.len() {
            let mut nsum = 0.0;
            for axis in &nb {
                let (p, m) = axis[idx];
                nsum += cx * (u[p] + u[m]);
            }
            let target = (nsum - r[idx]) / diag;
            let next = u[idx] + omega * (target - u[idx]);
            u[idx] = next.max(obstacle[idx]);
        }
        sweeps += 1;
        if sweeps % 10 == 0 {
            res = residual(&u);
        }
    }
    if res > tol {
        return Err(Error::NotConverged { sweeps, residual: res });
    }
    Ok(ScalarField::raw(grid, u))
}

#[derive(Clone, Debug)]
pub struct FamilyMember {
    pub z: f64,
    pub u: ScalarField,
    /// `u_z > λ_z` (the non-contact set Ω_z).
    pub omega_mask: Vec<bool>,
}

#[derive(Clone, Debug)]
pub struct FamilySweep {
    pub members: Vec<FamilyMember>,
    /// `‖u_{z_{i+1}} - u_{z_i}‖∞ / (z_{i+1} - z_i)` between consecutive levels.
    pub derivative: Vec<f64>,
}

/// Solves the `J` obstacle problem for each `z` in `z_list`.
pub fn family_sweep(lam: &ScalarField, rho: &ScalarField, z_list: &[f64], tol: f64) -> Result<FamilySweep> {
    if rho.min() <= 0.0 {
        return Err(Error::NotPositive { min: rho.min() });
    }
    let grid = lam.grid();
    let omega = {
        let n = grid.n() as f64;
        2.0 / (1.0 + (std::f64::consts::PI / n).sin() * 2.0)
    };
    let mut members = Vec::with_capacity(z_list.len());
    for &z in z_list {
        let u = solve_family_member(lam, rho, z, omega.min(1.95), tol, 2_000_000)?;
        let omega_mask = u
            .values()
            .iter()
            .zip(lam.values())
            .map(|(a, l)| a - l.max(z) > tol.sqrt())
            .collect();
        members.push(FamilyMember { z, u, omega_mask });
    }
    let derivative = members
        .windows(2)
        .map(|w| (&w[1].u - &w[0].u).norm_inf() / (w[1].z - w[0].z).abs().max(f64::MIN_POSITIVE))
        .collect();
    Ok(FamilySweep { members, derivative })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{potential_from_density_modes, FourierMode};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn slab(n: usize, m: f64, mz: usize) -> SlabGrid {
        SlabGrid::new(TorusGrid::new(1, n).unwrap(), m, mz).unwrap()
    }

    fn flat_problem(n: usize, mz: usize) -> ObstacleProblem {
        let s = slab(n, 1.0, mz);
        let z = Potential::zero(s.base());
        ObstacleProblem::from_potentials(&z, &z, 1.0, s).unwrap()
    }

    fn quadratic(z: f64) -> f64 {
        if z <= -0.5 {
            0.0
        } else if z >= 0.5 {
            z
        } else {
            0.5 * z * z + 0.5 * z + 0.125
        }
    }

    #[test]
    fn slab_grid_validation() {
        let b = TorusGrid::new(1, 8).unwrap();
        assert!(SlabGrid::new(b, 1.0, 7).is_err());
        assert!(SlabGrid::new(b, 1.0, 6).is_err());
        assert!(SlabGrid::new(b, 0.0, 8).is_err());
        let s = SlabGrid::new(b, 1.0, 8).unwrap();
        assert_eq!(s.z(4), 0.0);
        assert_eq!(s.z(8), 1.0);
    }

    #[test]
    fn obstacle_examples() {
        let s = slab(16, 1.0, 16);
        let zero = Potential::zero(s.base());
        let l = obstacle_l(&zero, &zero, s).unwrap();
        for j in 0..=16 {
            assert_eq!(l.get(3, j), s.z(j).max(0.0));
        }
        let bump = Potential::new(ScalarField::from_fn(s.base(), |x| 0.002 * (2.0 * PI * x[0]).cos())).unwrap();
        let l = obstacle_l(&bump, &zero, s).unwrap();
        for idx in 0..16 {
            let col = l.column(idx);
            for j in 1..16 {
                assert!(col[j + 1] - 2.0 * col[j] + col[j - 1] >= -1e-15);
                assert!(col[j] >= col[j - 1]);
            }
        }
        // φ₀ - φ₁ = 0.3 puts the kink at z = -0.3
        let s2 = slab(4, 1.0, 20);
        let shifted = Potential::new(ScalarField::constant(s2.base(), 0.3)).unwrap();
        let l = obstacle_l(&shifted, &Potential::zero(s2.base()), s2).unwrap();
        for j in 0..=20 {
            let z = s2.z(j);
            assert_abs_diff_eq!(l.get(0, j), (z + 0.3).max(0.0), epsilon = 1e-15);
        }
    }

    #[test]
    fn problem_validation() {
        let s = slab(8, 1.0, 8);
        let z = Potential::zero(s.base());
        let l = obstacle_l(&z, &z, s).unwrap();
        assert!(matches!(
            ObstacleProblem::new(l.clone(), ScalarField::constant(s.base(), 0.9), 1.0),
            Err(Error::NotNormalized { .. })
        ));
        let bad = ScalarField::from_fn(s.base(), |x| 1.0 + 2.0 * (2.0 * PI * x[0]).cos());
        assert!(matches!(
            ObstacleProblem::new(l.clone(), bad, 1.0),
            Err(Error::NotPositive { .. })
        ));
        assert!(ObstacleProblem::new(l, ScalarField::constant(s.base(), 1.0), 0.0).is_err());
    }

    #[test]
    fn energy_examples() {
        let p = flat_problem(8, 16);
        let s = p.slab();
        assert_eq!(energy_em(&SlabField::zeros(s), &p).unwrap(), 0.0);
        let lin = SlabField::from_fn(s, |_, z| z);
        assert_abs_diff_eq!(energy_em(&lin, &p).unwrap(), 1.0, epsilon = 1e-13);
        // U = L = max(z, 0): εM/2 + M²/2 with the +ρ₀U sign
        assert_abs_diff_eq!(energy_em(p.lower(), &p).unwrap(), 1.0, epsilon = 1e-13);
        let p2 = {
            let s = slab(8, 2.0, 16);
            let z = Potential::zero(s.base());
            ObstacleProblem::from_potentials(&z, &z, 0.5, s).unwrap()
        };
        assert_abs_diff_eq!(
            energy_em(p2.lower(), &p2).unwrap(),
            0.5 * 0.5 * 2.0 + 2.0,
            epsilon = 1e-13
        );
    }

    #[test]
    fn energy_gradient_is_the_complementarity_operator() {
        let p = flat_problem(8, 16);
        let s = p.slab();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let u = SlabField::from_fn(s, |x, z| quadratic(z) + 0.01 * (2.0 * PI * x[0]).sin() * (1.0 - z * z));
        let r = complementarity_operator(&u, &p);
        let cell = s.base().cell_volume() * s.dz();
        for _ in 0..10 {
            let idx = rng.random_range(0..8);
            let j = rng.random_range(1..16);
            let mut plus = u.values().to_vec();
            let mut minus = u.values().to_vec();
            let e = 1e-5;
            plus[s.index(idx, j)] += e;
            minus[s.index(idx, j)] -= e;
            let fd = (energy_em(&SlabField::raw(s, plus), &p).unwrap()
                - energy_em(&SlabField::raw(s, minus), &p).unwrap())
                / (2.0 * e);
            assert_abs_diff_eq!(fd / cell, r.get(idx, j), epsilon = 1e-5);
        }
    }

    #[test]
    fn flat_instance_matches_closed_form() {
        let p = flat_problem(4, 64);
        let u = solve_psor(&p, optimal_omega(&p), 1e-10, 100_000).unwrap();
        let s = p.slab();
        for j in 0..=64 {
            assert!((u.get(0, j) - quadratic(s.z(j))).abs() < 1e-8, "j={j}");
            assert!((u.get(1, j) - u.get(0, j)).abs() < 1e-12);
        }
        let act = active_set(&u, p.lower(), 1e-9).unwrap();
        assert_abs_diff_eq!(act.h0.max(), -0.5, epsilon = 1e-3);
        assert_abs_diff_eq!(act.h1.min(), 0.5, epsilon = 1e-3);
    }

    #[test]
    fn relaxation_factor_does_not_change_the_solution() {
        let s = slab(16, 1.0, 32);
        let phi = Potential::new(potential_from_density_modes(s.base(), &[FourierMode::new(&[1], 0.2, 0.4)]).unwrap())
            .unwrap();
        let p = ObstacleProblem::from_potentials(&phi, &Potential::zero(s.base()), 1.0, s).unwrap();
        let a = solve_psor(&p, 1.2, 1e-10, 1_000_000).unwrap();
        let b = solve_psor(&p, 1.8, 1e-10, 1_000_000).unwrap();
        assert!(a.max_abs_diff(&b) < 1e-9);
    }

    #[test]
    fn psor_energy_is_monotone_and_minimal() {
        let s = slab(8, 1.0, 16);
        let phi = Potential::new(potential_from_density_modes(s.base(), &[FourierMode::new(&[1], 0.3, 0.0)]).unwrap())
            .unwrap();
        let p = ObstacleProblem::from_potentials(&phi, &phi, 1.0, s).unwrap();
        let opts = PsorOptions {
            omega: 1.7,
            record_energy: true,
            ..PsorOptions::default()
        };
        let out = solve_psor_detailed(&p, &opts, None).unwrap();
        for w in out.energies.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
        let best = energy_em(&out.u, &p).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let mut v = out.u.values().to_vec();
            for idx in 0..8 {
                for j in 1..16 {
                    let i = s.index(idx, j);
                    v[i] = (v[i] + rng.random_range(-0.01..0.01)).max(p.lower().values()[i]);
                }
            }
            assert!(energy_em(&SlabField::raw(s, v), &p).unwrap() >= best - 1e-12);
        }
    }

    #[test]
    fn small_slab_is_reported() {
        let s = slab(4, 0.52, 52);
        let z = Potential::zero(s.base());
        let p = ObstacleProblem::from_potentials(&z, &z, 1.0, s).unwrap();
        assert!(matches!(
            solve_psor(&p, 1.8, 1e-10, 100_000),
            Err(Error::FreeBoundaryTouchesSlab)
        ));
    }

    #[test]
    fn active_set_examples() {
        let p = flat_problem(4, 16);
        let act = active_set(p.lower(), p.lower(), 1e-12).unwrap();
        assert!(act.mask.iter().all(|b| !b));
        assert_eq!(act.h0, act.h1);
        assert_abs_diff_eq!(act.h0.max(), 0.0, epsilon = 1e-15);
        let mut broken = p.lower().values().to_vec();
        let s = p.slab();
        broken[s.index(0, 3)] += 1.0;
        broken[s.index(0, 6)] += 1.0;
        assert!(matches!(
            active_set(&SlabField::raw(s, broken), p.lower(), 1e-12),
            Err(Error::NonContiguousMask { x: 0 })
        ));
    }

    #[test]
    fn family_sweep_examples() {
        let g = TorusGrid::new(1, 16).unwrap();
        let lam = ScalarField::from_fn(g, |x| 0.1 * (2.0 * PI * x[0]).cos());
        let rho = ScalarField::constant(g, 1.0);
        let sweep = family_sweep(&lam, &rho, &[-0.5, -0.3, 0.5], 1e-10).unwrap();
        assert!((&sweep.members[0].u - &sweep.members[1].u).norm_inf() < 1e-8);
        assert!(sweep.derivative[0] < 1e-6);
        // full contact once the constant obstacle dominates
        let top = &sweep.members[2].u;
        assert!(top.values().iter().all(|&v| (v - 0.5).abs() < 1e-12));
        assert!(sweep.members[2].omega_mask.iter().all(|b| !b));
        assert!(energy_j(&sweep.members[0].u, &rho).is_finite());
    }
}
