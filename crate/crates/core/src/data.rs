//! Smooth periodic test data from Fourier recipes.

use std::f64::consts::PI;

use rand::Rng;

use crate::error::{Error, Result};
use crate::grid::{ScalarField, TorusGrid};

/// One term `amplitude · cos(2π k·x + phase)`.
#[derive(Clone, Debug, PartialEq)]
pub struct FourierMode {
    pub k: Vec<i64>,
    pub amplitude: f64,
    pub phase: f64,
}

impl FourierMode {
    pub fn new(k: &[i64], amplitude: f64, phase: f64) -> Self {
        Self {
            k: k.to_vec(),
            amplitude,
            phase,
        }
    }

    fn check(&self, grid: TorusGrid) -> Result<()> {
        if self.k.len() != grid.dim() {
            return Err(Error::InvalidWaveVector(format!(
                "mode {:?} on a {}-dimensional torus",
                self.k,
                grid.dim()
            )));
        }
        let half = (grid.n() / 2) as i64;
        if self.k.iter().any(|ki| ki.abs() >= half) {
            return Err(Error::InvalidWaveVector(format!(
                "mode {:?} is not resolved by n = {}",
                self.k,
                grid.n()
            )));
        }
        if !self.amplitude.is_finite() || !self.phase.is_finite() {
            return Err(Error::NonFinite(format!("mode {:?}", self.k)));
        }
        Ok(())
    }

    fn eval(&self, x: [f64; 2]) -> f64 {
        let kx = self.k[0] as f64 * x[0] + self.k.get(1).copied().unwrap_or(0) as f64 * x[1];
        self.amplitude * (2.0 * PI * kx + self.phase).cos()
    }
}

/// `Σ aⱼ cos(2π kⱼ·x + phaseⱼ)`.
pub fn fourier_field(grid: TorusGrid, modes: &[FourierMode]) -> Result<ScalarField> {
    for m in modes {
        m.check(grid)?;
    }
    Ok(ScalarField::from_fn(grid, |x| modes.iter().map(|m| m.eval(x)).sum()))
}

/// Potential whose density is `1 - Δφ = 1 + Σ aⱼ cos(2π kⱼ·x + phaseⱼ)`,
/// using the discrete eigenvalues so the identity holds to rounding.
/// Zero modes contribute nothing (they only shift the density mean).
pub fn potential_from_density_modes(grid: TorusGrid, modes: &[FourierMode]) -> Result<ScalarField> {
    let mut scaled = Vec::with_capacity(modes.len());
    for m in modes {
        m.check(grid)?;
        if m.k.iter().all(|&k| k == 0) {
            return Err(Error::InvalidWaveVector(
                "the zero mode would change the total mass of the density".into(),
            ));
        }
        let lam = grid.laplacian_symbol(&m.k);
        scaled.push(FourierMode {
            k: m.k.clone(),
            amplitude: -m.amplitude / lam,
            phase: m.phase,
        });
    }
    fourier_field(grid, &scaled)
}

/// Draws `count` modes with `1 ≤ |k|∞ ≤ max_k`, amplitudes uniform in
/// `[-amplitude, amplitude] / count` and uniform phases.
pub fn random_modes<R: Rng>(rng: &mut R, dim: usize, count: usize, max_k: i64, amplitude: f64) -> Vec<FourierMode> {
    let per = amplitude / count.max(1) as f64;
    (0..count)
        .map(|_| {
            let k = loop {
                let k: Vec<i64> = (0..dim).map(|_| rng.random_range(-max_k..=max_k)).collect();
                if k.iter().any(|&v| v != 0) {
                    break k;
                }
            };
            FourierMode {
                k,
                amplitude: rng.random_range(-per..=per),
                phase: rng.random_range(0.0..2.0 * PI),
            }
        })
        .collect()
}
