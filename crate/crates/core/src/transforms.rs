//! Maps between the three formulations:
//! Φ → U (Legendre transform in `t`), U → θ (`θ = ∂_zU`), and
//! θ → (h_t, ρ_t) → Φ (level sets, fluxes and `φ_t = φ₀ + ∫₀ᵗ h_τ dτ`).

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::grid::{integrate, laplacian, ScalarField, TorusGrid};
use crate::obstacle::{neighbours, ActiveSet, SlabField, SlabGrid};
use crate::space_h::{trapezoid, PathInH, Potential};

/// Level sets `θ = t_j` as graphs `z = h_{t_j}(x)`, optionally with fluxes.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelSetFamily {
    pub heights: Vec<ScalarField>,
    pub fluxes: Vec<ScalarField>,
}

impl LevelSetFamily {
    pub fn m(&self) -> usize {
        self.heights.len() - 1
    }

    pub fn t(&self, j: usize) -> f64 {
        j as f64 / self.m() as f64
    }
}

/// Piecewise-linear Legendre transform in `t`, column by column:
/// `U(x, z) = max_j (z t_j - Φ(x, t_j) + Φ(x, 0))`.
pub fn legendre_phi_to_u(path: &PathInH, slab: SlabGrid) -> Result<SlabField> {
    let grid = path.grid();
    slab.base().check_same(&grid)?;
    let m = path.m();
    let tau = path.tau();
    let mut max_slope = 0.0f64;
    let mut values = vec![0.0; slab.len()];
    for idx in 0..grid.len() {
        let col = path.column(idx);
        for j in 1..m {
            if !(col[j + 1] - 2.0 * col[j] + col[j - 1] > 0.0) {
                return Err(Error::NotStrictlyConvexInT { node: idx, slice: j });
            }
        }
        let slopes: Vec<f64> = col.windows(2).map(|w| (w[1] - w[0]) / tau).collect();
        max_slope = max_slope.max(slopes[0].abs()).max(slopes[m - 1].abs());
        let mut best = 0usize;
        for jz in 0..slab.column_len() {
            let z = slab.z(jz);
            while best < m && slopes[best] < z {
                best += 1;
            }
            let t = best as f64 * tau;
            values[slab.index(idx, jz)] = z * t - col[best] + col[0];
        }
    }
    if slab.half_height() <= max_slope {
        return Err(Error::SlabTooSmall {
            m: slab.half_height(),
            slope: max_slope,
        });
    }
    SlabField::from_values(slab, values)
}

/// `∂_z` of one column restricted to `[a, b]`: centered inside, one-sided
/// second order at the ends, first order on two-node ranges.
fn masked_derivative(col: &[f64], a: usize, b: usize, k: f64, out: &mut [f64]) {
    if b == a {
        out[a] = if a + 1 < col.len() && a > 0 {
            (col[a + 1] - col[a - 1]) / (2.0 * k)
        } else {
            0.0
        };
        return;
    }
    for j in a..=b {
        out[j] = if j > a && j < b {
            (col[j + 1] - col[j - 1]) / (2.0 * k)
        } else if b - a == 1 {
            (col[b] - col[a]) / k
        } else if j == a {
            (-3.0 * col[a] + 4.0 * col[a + 1] - col[a + 2]) / (2.0 * k)
        } else {
            (3.0 * col[b] - 4.0 * col[b - 1] + col[b - 2]) / (2.0 * k)
        };
    }
}

/// `θ = ∂_zU` on the active set; outside it θ takes the slopes of `L`
/// (0 below the non-contact region, 1 above).
pub fn u_to_theta(u: &SlabField, active: &ActiveSet) -> Result<SlabField> {
    let slab = u.slab();
    if active.mask.len() != slab.len() {
        return Err(Error::ShapeMismatch("mask and field sizes differ".into()));
    }
    let k = slab.dz();
    let mut out = vec![0.0; slab.len()];
    for idx in 0..slab.base().len() {
        let col = u.column(idx);
        let o = &mut out[idx * slab.column_len()..(idx + 1) * slab.column_len()];
        match active.column_range(slab, idx) {
            Some((a, b)) => {
                masked_derivative(col, a, b, k, o);
                for v in o[..a].iter_mut() {
                    *v = 0.0;
                }
                for v in o[b + 1..].iter_mut() {
                    *v = 1.0;
                }
            }
            None => {
                let kink = active.h0.values()[idx];
                for (j, v) in o.iter_mut().enumerate() {
                    *v = if slab.z(j) < kink { 0.0 } else { 1.0 };
                }
            }
        }
    }
    SlabField::from_values(slab, out)
}

/// Heights `h_{t_j}` of the level sets `θ = t_j`, `j = 0..m`, by monotone
/// linear interpolation of the masked samples of each column. Levels beyond
/// the sampled range (in particular `t = 0` and `t = 1`) come from the end
/// segments extended linearly; columns with fewer than two samples fall back
/// to the anchors `(H₀, 0)` and `(H₁, 1)`.
pub fn theta_level_sets(theta: &SlabField, active: &ActiveSet, m: usize) -> Result<LevelSetFamily> {
    if m < 1 {
        return Err(Error::InvalidParameter("need at least one level interval".into()));
    }
    let slab = theta.slab();
    let base = slab.base();
    let mut heights = vec![vec![0.0; base.len()]; m + 1];
    for idx in 0..base.len() {
        let h0 = active.h0.values()[idx];
        let h1 = active.h1.values()[idx];
        let (mut zs, mut ts) = (Vec::new(), Vec::new());
        if let Some((a, b)) = active.column_range(slab, idx) {
            for j in a..=b {
                zs.push(slab.z(j));
                ts.push(theta.get(idx, j));
            }
        }
        if zs.len() < 2 {
            zs.insert(0, h0);
            ts.insert(0, 0.0);
            zs.push(h1);
            ts.push(1.0);
        }
        let flat = h0 == h1 && zs.len() == 2;
        for w in 1..ts.len() {
            if !(ts[w] > ts[w - 1]) && !flat {
                return Err(Error::NonMonotoneTheta { x: idx, z: zs[w] });
            }
        }
        let mut seg = 0usize;
        for (jt, hrow) in heights.iter_mut().enumerate() {
            if flat {
                hrow[idx] = h0;
                continue;
            }
            let t = jt as f64 / m as f64;
            while seg + 2 < ts.len() && ts[seg + 1] < t {
                seg += 1;
            }
            let (t0, t1) = (ts[seg], ts[seg + 1]);
            let (z0, z1) = (zs[seg], zs[seg + 1]);
            hrow[idx] = z0 + (t - t0) / (t1 - t0) * (z1 - z0);
        }
    }
    Ok(LevelSetFamily {
        heights: heights
            .into_iter()
            .map(|v| ScalarField::from_values(base, v))
            .collect::<Result<_>>()?,
        fluxes: Vec::new(),
    })
}

/// Evaluates a column at height `z` from the samples on `[a, b]`, linear in
/// between and linearly extrapolated beyond the ends.
fn column_eval(slab: SlabGrid, col: &[f64], a: usize, b: usize, z: f64) -> f64 {
    if a == b {
        return col[a];
    }
    let k = slab.dz();
    let pos = (z - slab.z(0)) / k;
    let lo = (pos.floor() as isize).clamp(a as isize, b as isize - 1) as usize;
    let w = pos - lo as f64;
    col[lo] + w * (col[lo + 1] - col[lo])
}

/// Vertical derivative of θ on each masked column (zero elsewhere).
fn theta_z(theta: &SlabField, active: &ActiveSet) -> Vec<f64> {
    let slab = theta.slab();
    let mut out = vec![0.0; slab.len()];
    for idx in 0..slab.base().len() {
        if let Some((a, b)) = active.column_range(slab, idx) {
            let o = &mut out[idx * slab.column_len()..(idx + 1) * slab.column_len()];
            masked_derivative(theta.column(idx), a, b, slab.dz(), o);
        }
    }
    out
}

/// `ρ = ε∂_zθ + |∇_Xθ|²/∂_zθ` on the graph `z = h(x)`. Values off the grid
/// come from linear interpolation in `z` of the masked samples, extended
/// linearly past the free boundaries so that horizontal differences see a
/// smooth θ.
pub fn flux(theta: &SlabField, active: &ActiveSet, h: &ScalarField, eps: f64) -> Result<ScalarField> {
    let slab = theta.slab();
    let base = slab.base();
    base.check_same(&h.grid())?;
    let dz = theta_z(theta, active);
    let nb = neighbours(base);
    let hx = base.spacing();
    let cl = slab.column_len();
    let mut out = Vec::with_capacity(base.len());
    let range = |idx: usize| active.column_range(slab, idx);
    for idx in 0..base.len() {
        let z = h.values()[idx];
        let Some((a, b)) = range(idx) else {
            return Err(Error::VanishingVerticalDerivative { x: idx });
        };
        let tz = column_eval(slab, &dz[idx * cl..(idx + 1) * cl], a, b, z);
        if !(tz > 0.0) {
            return Err(Error::VanishingVerticalDerivative { x: idx });
        }
        let mut g2 = 0.0;
        for axis in &nb {
            let (p, mm) = axis[idx];
            let (Some((pa, pb)), Some((ma, mb))) = (range(p), range(mm)) else {
                return Err(Error::VanishingVerticalDerivative { x: idx });
            };
            let tp = column_eval(slab, theta.column(p), pa, pb, z);
            let tm = column_eval(slab, theta.column(mm), ma, mb, z);
            let d = (tp - tm) / (2.0 * hx);
            g2 += d * d;
        }
        out.push(eps * tz + g2 / tz);
    }
    ScalarField::from_values(base, out)
}

/// Fluxes at every level of the family.
pub fn attach_fluxes(levels: &mut LevelSetFamily, theta: &SlabField, active: &ActiveSet, eps: f64) -> Result<()> {
    levels.fluxes = levels
        .heights
        .iter()
        .map(|h| flux(theta, active, h, eps))
        .collect::<Result<_>>()?;
    Ok(())
}

/// Mean-zero `φ` with `1 - Δφ = ρ`, by diagonalising the periodic stencil
/// with an FFT. The residual is at rounding level plus `|∫ρ - 1|`, the part
/// of `ρ` no potential can produce.
pub fn poisson_solve(rho: &ScalarField) -> Result<Potential> {
    let integral = integrate(rho);
    if (integral - 1.0).abs() > 1e-8 {
        return Err(Error::NotNormalized { integral });
    }
    if rho.min() <= 0.0 {
        return Err(Error::NotPositive { min: rho.min() });
    }
    let grid = rho.grid();
    let mut data: Vec<Complex<f64>> = rho.values().iter().map(|r| Complex::new(1.0 - r, 0.0)).collect();
    fft_nd(grid, &mut data, false);
    for (idx, c) in data.iter_mut().enumerate() {
        let mi = grid.multi_index(idx);
        let k: Vec<i64> = (0..grid.dim()).map(|a| mi[a] as i64).collect();
        if k.iter().all(|&v| v == 0) {
            *c = Complex::new(0.0, 0.0);
        } else {
            *c /= grid.laplacian_symbol(&k);
        }
    }
    fft_nd(grid, &mut data, true);
    let scale = 1.0 / grid.len() as f64;
    let phi = ScalarField::from_values(grid, data.iter().map(|c| c.re * scale).collect())?;
    Potential::with_margin(phi, f64::MIN_POSITIVE)
}

fn fft_nd(grid: TorusGrid, data: &mut [Complex<f64>], inverse: bool) {
    let n = grid.n();
    let mut planner = FftPlanner::new();
    let fft = if inverse {
        planner.plan_fft_inverse(n)
    } else {
        planner.plan_fft_forward(n)
    };
    match grid.dim() {
        1 => fft.process(data),
        _ => {
            // rows are contiguous (axis 1), then columns via a scratch buffer
            for row in data.chunks_mut(n) {
                fft.process(row);
            }
            let mut col = vec![Complex::new(0.0, 0.0); n];
            for c in 0..n {
                for r in 0..n {
                    col[r] = data[r * n + c];
                }
                fft.process(&mut col);
                for r in 0..n {
                    data[r * n + c] = col[r];
                }
            }
        }
    }
}

/// Result of [`theta_to_phi`].
#[derive(Clone, Debug)]
pub struct Reconstruction {
    pub path: PathInH,
    /// `‖ρ_{t_j} - (1 - Δφ_{t_j})‖∞` per level; empty without fluxes.
    pub consistency: Vec<f64>,
}

/// `φ₀` from `ρ₀` (mean zero), then `φ_{t_j} = φ₀ + ∫₀^{t_j} h` by the
/// trapezoid rule on the level grid.
pub fn theta_to_phi(levels: &LevelSetFamily, rho0: &ScalarField) -> Result<Reconstruction> {
    let phi0 = poisson_solve(rho0)?;
    let grid = phi0.grid();
    let m = levels.m();
    let tau = 1.0 / m as f64;
    let mut slices = Vec::with_capacity(m + 1);
    let mut acc = phi0.field().clone();
    slices.push(acc.clone());
    for j in 1..=m {
        let step = (&levels.heights[j - 1] + &levels.heights[j]).scale(0.5 * tau);
        acc = &acc + &step;
        slices.push(acc.clone());
    }
    for s in &slices {
        grid.check_same(&s.grid())?;
    }
    let path = PathInH::with_margin(slices, f64::MIN_POSITIVE)?;
    let consistency = if levels.fluxes.len() == m + 1 {
        levels
            .fluxes
            .iter()
            .zip(path.slices())
            .map(|(r, p)| (r - &laplacian(p).map(|v| 1.0 - v)).norm_inf())
            .collect()
    } else {
        Vec::new()
    };
    Ok(Reconstruction { path, consistency })
}

/// `min_c ‖a - b - c‖∞` over all slices: the distance up to one additive
/// constant.
pub fn distance_up_to_constant(a: &PathInH, b: &PathInH) -> f64 {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (x, y) in a.slices().iter().zip(b.slices()) {
        for (u, v) in x.values().iter().zip(y.values()) {
            lo = lo.min(u - v);
            hi = hi.max(u - v);
        }
    }
    0.5 * (hi - lo)
}

/// Discrete residuals of the level-set identities.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LevelIdentityReport {
    /// `∂ᵢθ + ∂_zθ ∂ᵢh = 0` on the level sets.
    pub graph: f64,
    /// `∂_zθ ∂_th = 1`.
    pub inverse_height: f64,
    /// `∂²_zU ∂²_tΦ = 1`.
    pub legendre_curvature: f64,
    /// `∂_tρ_t + Δ_X h_t = 0`; NaN when the family carries no fluxes.
    pub flux_law: f64,
}

/// Evaluates the level-set identities on the interior levels with
/// `t_j ∈ [window.0, window.1]`. Within a few cells of the free boundaries the
/// obstacle discretisation is only first-order accurate, so bulk convergence
/// is measured on a window bounded away from `t = 0` and `t = 1`; pass
/// `(0.0, 1.0)` for every interior level.
pub fn check_level_identities(
    theta: &SlabField,
    u: &SlabField,
    active: &ActiveSet,
    levels: &LevelSetFamily,
    path: &PathInH,
    window: (f64, f64),
) -> Result<LevelIdentityReport> {
    let slab = theta.slab();
    let base = slab.base();
    let m = levels.m();
    if path.m() != m {
        return Err(Error::ShapeMismatch(format!(
            "path has {} intervals, level family {m}",
            path.m()
        )));
    }
    if m < 2 {
        return Err(Error::InvalidParameter("need m >= 2".into()));
    }
    let cl = slab.column_len();
    let dz = theta_z(theta, active);
    let k = slab.dz();
    let mut uzz = vec![0.0; slab.len()];
    for idx in 0..base.len() {
        if let Some((a, b)) = active.column_range(slab, idx) {
            for j in a.max(1)..=b.min(slab.mz() - 1) {
                let c = u.column(idx);
                uzz[idx * cl + j] = (c[j + 1] - 2.0 * c[j] + c[j - 1]) / (k * k);
            }
        }
    }
    let nb = neighbours(base);
    let hx = base.spacing();
    let tau = 1.0 / m as f64;
    let mut report = LevelIdentityReport::default();
    let in_window = |jt: usize| {
        let t = jt as f64 * tau;
        t >= window.0 - 1e-12 && t <= window.1 + 1e-12
    };
    for jt in (1..m).filter(|&jt| in_window(jt)) {
        let h = &levels.heights[jt];
        for idx in 0..base.len() {
            let Some((a, b)) = active.column_range(slab, idx) else {
                continue;
            };
            let z = h.values()[idx];
            let tz = column_eval(slab, &dz[idx * cl..(idx + 1) * cl], a, b, z);
            for axis in &nb {
                let (p, mm) = axis[idx];
                let (Some((pa, pb)), Some((ma, mb))) = (active.column_range(slab, p), active.column_range(slab, mm))
                else {
                    continue;
                };
                let ti = (column_eval(slab, theta.column(p), pa, pb, z)
                    - column_eval(slab, theta.column(mm), ma, mb, z))
                    / (2.0 * hx);
                let hi = (h.values()[p] - h.values()[mm]) / (2.0 * hx);
                report.graph = report.graph.max((ti + tz * hi).abs());
            }
            let ht = (levels.heights[jt + 1].values()[idx] - levels.heights[jt - 1].values()[idx]) / (2.0 * tau);
            report.inverse_height = report.inverse_height.max((tz * ht - 1.0).abs());
            let (ua, ub) = (a.max(1), b.min(slab.mz() - 1));
            if ua <= ub {
                let uzz_at = column_eval(slab, &uzz[idx * cl..(idx + 1) * cl], ua, ub, z);
                let col = path.column(idx);
                let ptt = (col[jt + 1] - 2.0 * col[jt] + col[jt - 1]) / (tau * tau);
                report.legendre_curvature = report.legendre_curvature.max((uzz_at * ptt - 1.0).abs());
            }
        }
    }
    report.flux_law = if levels.fluxes.len() == m + 1 {
        (1..m)
            .filter(|&jt| in_window(jt))
            .map(|jt| {
                let rt = (&levels.fluxes[jt + 1] - &levels.fluxes[jt - 1]).scale(0.5 / tau);
                (&rt + &laplacian(&levels.heights[jt])).norm_inf()
            })
            .fold(0.0, f64::max)
    } else {
        f64::NAN
    };
    Ok(report)
}

/// `∫ρ_t dμ` at each level.
pub fn flux_integrals(levels: &LevelSetFamily) -> Vec<f64> {
    levels.fluxes.iter().map(integrate).collect()
}

/// Time integral of per-level values on the level grid.
pub fn integrate_levels(values: &[f64]) -> f64 {
    trapezoid(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{potential_from_density_modes, FourierMode};
    use crate::obstacle::active_set;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn slab(n: usize, m: f64, mz: usize) -> SlabGrid {
        SlabGrid::new(TorusGrid::new(1, n).unwrap(), m, mz).unwrap()
    }

    fn quadratic_u(z: f64, eps: f64) -> f64 {
        if z <= -0.5 * eps {
            0.0
        } else if z >= 0.5 * eps {
            z
        } else {
            z * z / (2.0 * eps) + 0.5 * z + eps / 8.0
        }
    }

    #[test]
    fn legendre_of_the_quadratic() {
        for eps in [0.5, 1.0, 2.0] {
            let g = TorusGrid::new(1, 4).unwrap();
            let m = 64;
            let path = PathInH::from_fn(g, m, |_, t| 0.5 * eps * t * (t - 1.0)).unwrap();
            let s = SlabGrid::new(g, eps, 128).unwrap();
            let u = legendre_phi_to_u(&path, s).unwrap();
            for j in 0..=128 {
                let z = s.z(j);
                // piecewise-linear conjugate undershoots by at most ε τ²/8
                let e = quadratic_u(z, eps) - u.get(0, j);
                assert!(e >= -1e-12 && e <= eps / (8.0 * (m * m) as f64) + 1e-12, "z={z} e={e}");
            }
            let lo = s.mz() / 4;
            assert!(u.get(0, lo).abs() < 1e-12);
            assert_abs_diff_eq!(u.get(0, 3 * s.mz() / 4), 0.5 * eps, epsilon = 1e-12);
        }
    }

    #[test]
    fn legendre_rejects_bad_input() {
        let g = TorusGrid::new(1, 4).unwrap();
        let lin = PathInH::from_fn(g, 8, |_, t| 0.3 * t).unwrap();
        let s = SlabGrid::new(g, 1.0, 16).unwrap();
        assert!(matches!(
            legendre_phi_to_u(&lin, s),
            Err(Error::NotStrictlyConvexInT { .. })
        ));
        let steep = PathInH::from_fn(g, 8, |_, t| 2.0 * t * (t - 1.0)).unwrap();
        assert!(matches!(legendre_phi_to_u(&steep, s), Err(Error::SlabTooSmall { .. })));
    }

    #[test]
    fn legendre_dominates_the_obstacle() {
        let s = slab(16, 1.0, 64);
        let g = s.base();
        let p0 = potential_from_density_modes(g, &[FourierMode::new(&[1], 0.1, 0.0)]).unwrap();
        let p1 = potential_from_density_modes(g, &[FourierMode::new(&[2], 0.1, 0.5)]).unwrap();
        let path = PathInH::new(
            (0..=16)
                .map(|j| {
                    let t = j as f64 / 16.0;
                    let lin = p0.zip_map(&p1, |a, b| (1.0 - t) * a + t * b);
                    lin.map(|v| v + 0.5 * t * (t - 1.0))
                })
                .collect(),
        )
        .unwrap();
        let u = legendre_phi_to_u(&path, s).unwrap();
        let l = crate::obstacle::obstacle_l(&Potential::new(p0).unwrap(), &Potential::new(p1).unwrap(), s).unwrap();
        for (a, b) in u.values().iter().zip(l.values()) {
            assert!(a - b >= -1e-12);
        }
    }

    fn quadratic_field(s: SlabGrid, eps: f64) -> SlabField {
        SlabField::from_fn(s, |_, z| quadratic_u(z, eps))
    }

    #[test]
    fn theta_of_the_quadratic() {
        let s = slab(4, 1.0, 64);
        let u = quadratic_field(s, 1.0);
        let l = SlabField::from_fn(s, |_, z| z.max(0.0));
        let act = active_set(&u, &l, 1e-12).unwrap();
        let theta = u_to_theta(&u, &act).unwrap();
        for j in 0..=64 {
            let z = s.z(j);
            let expect = (z + 0.5).clamp(0.0, 1.0);
            assert!((theta.get(0, j) - expect).abs() < 1e-12, "z={z}");
        }
        assert_abs_diff_eq!(act.h0.max(), -0.5, epsilon = 1e-9);
        assert_abs_diff_eq!(act.h1.min(), 0.5, epsilon = 1e-9);
        let levels = theta_level_sets(&theta, &act, 8).unwrap();
        for (j, h) in levels.heights.iter().enumerate() {
            assert_abs_diff_eq!(h.max(), j as f64 / 8.0 - 0.5, epsilon = 1e-9);
        }
    }

    #[test]
    fn level_sets_of_an_affine_theta() {
        let s = slab(4, 1.0, 40);
        let hh = 0.6;
        let theta = SlabField::from_fn(s, |_, z| (z / hh).clamp(0.0, 1.0));
        let mask: Vec<bool> = (0..s.len())
            .map(|i| {
                let z = s.z(i % s.column_len());
                z > 1e-9 && z < hh - 1e-9
            })
            .collect();
        let act = ActiveSet {
            mask,
            h0: ScalarField::zeros(s.base()),
            h1: ScalarField::constant(s.base(), hh),
        };
        let levels = theta_level_sets(&theta, &act, 6).unwrap();
        for (j, h) in levels.heights.iter().enumerate() {
            assert_abs_diff_eq!(h.min(), hh * j as f64 / 6.0, epsilon = 1e-12);
        }
        let f = flux(&theta, &act, &levels.heights[3], hh).unwrap();
        assert_abs_diff_eq!(f.min(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(f.max(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn non_monotone_theta_is_reported() {
        let s = slab(4, 1.0, 16);
        let theta = SlabField::from_fn(s, |_, z| if z.abs() < 0.3 { 0.5 - z } else { 0.5 });
        let mask: Vec<bool> = (0..s.len()).map(|i| (s.z(i % 17)).abs() < 0.3).collect();
        let act = ActiveSet {
            mask,
            h0: ScalarField::constant(s.base(), -0.3),
            h1: ScalarField::constant(s.base(), 0.3),
        };
        assert!(matches!(
            theta_level_sets(&theta, &act, 4),
            Err(Error::NonMonotoneTheta { .. })
        ));
    }

    #[test]
    fn flux_of_the_quadratic_is_one() {
        let eps = 0.5;
        let s = slab(4, 1.0, 80);
        let u = quadratic_field(s, eps);
        let l = SlabField::from_fn(s, |_, z| z.max(0.0));
        let act = active_set(&u, &l, 1e-12).unwrap();
        let theta = u_to_theta(&u, &act).unwrap();
        let mut levels = theta_level_sets(&theta, &act, 10).unwrap();
        attach_fluxes(&mut levels, &theta, &act, eps).unwrap();
        for f in &levels.fluxes {
            assert!((f.max() - 1.0).abs() < 1e-9 && (f.min() - 1.0).abs() < 1e-9);
        }
        let rec = theta_to_phi(&levels, &ScalarField::constant(s.base(), 1.0)).unwrap();
        for (j, p) in rec.path.slices().iter().enumerate() {
            let t = j as f64 / 10.0;
            assert_abs_diff_eq!(p.max(), 0.5 * eps * t * (t - 1.0), epsilon = 1e-9);
        }
        assert!(rec.consistency.iter().all(|c| *c < 1e-9));
    }

    #[test]
    fn poisson_examples() {
        let g = TorusGrid::new(1, 32).unwrap();
        let p = poisson_solve(&ScalarField::constant(g, 1.0)).unwrap();
        assert!(p.field().norm_inf() < 1e-15);
        for (d, k) in [(1usize, vec![3i64]), (2, vec![2, -1])] {
            let g = TorusGrid::new(d, 32).unwrap();
            let a = 0.4;
            let kk = k.clone();
            let rho = ScalarField::from_fn(g, |x| {
                let arg = 2.0 * PI * (kk[0] as f64 * x[0] + kk.get(1).copied().unwrap_or(0) as f64 * x[1]);
                1.0 + a * arg.cos()
            });
            let phi = poisson_solve(&rho).unwrap();
            let lam = g.laplacian_symbol(&k);
            let kk = k.clone();
            let expect = ScalarField::from_fn(g, |x| {
                let arg = 2.0 * PI * (kk[0] as f64 * x[0] + kk.get(1).copied().unwrap_or(0) as f64 * x[1]);
                -(a / lam) * arg.cos()
            });
            assert!((phi.field() - &expect).norm_inf() < 1e-14);
            let res = (&phi.density() - &rho).norm_inf();
            assert!(res <= 1e-10, "{res}");
        }
        assert!(matches!(
            poisson_solve(&ScalarField::constant(g, 0.9)),
            Err(Error::NotNormalized { .. })
        ));
    }

    #[test]
    fn flux_law_vanishes_for_the_flat_solution() {
        let eps = 1.0;
        let s = slab(8, 1.0, 64);
        let u = quadratic_field(s, eps);
        let l = SlabField::from_fn(s, |_, z| z.max(0.0));
        let act = active_set(&u, &l, 1e-12).unwrap();
        let theta = u_to_theta(&u, &act).unwrap();
        let mut levels = theta_level_sets(&theta, &act, 8).unwrap();
        attach_fluxes(&mut levels, &theta, &act, eps).unwrap();
        let path = PathInH::from_fn(s.base(), 8, |_, t| 0.5 * eps * t * (t - 1.0)).unwrap();
        let rep = check_level_identities(&theta, &u, &act, &levels, &path, (0.0, 1.0)).unwrap();
        assert!(rep.graph < 1e-12);
        assert!(rep.inverse_height < 1e-9);
        assert!(rep.legendre_curvature < 1e-9);
        assert!(rep.flux_law < 1e-9);
    }
}
