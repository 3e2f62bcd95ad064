//! Periodic grids on the unit torus `T^d` (`d` = 1 or 2) and the
//! second-order finite-difference calculus used by every solver in the crate.
//!
//! The Laplacian follows the geometer's sign convention: `laplacian(f)`
//! returns `-Σ ∂ᵢ²f`, a positive semi-definite operator. Its discrete
//! eigenvalues are the stencil symbols `Σ (2 - 2cos(2πkᵢh)) / h²`, not the
//! continuum values `4π²|k|²`.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Neg, Sub};

use crate::error::{Error, Result};

/// Uniform periodic grid on the unit torus with `n` nodes per axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TorusGrid {
    dim: usize,
    n: usize,
}

impl TorusGrid {
    /// `n` must be even and at least 4, `dim` must be 1 or 2.
    pub fn new(dim: usize, n: usize) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::InvalidParameter(format!(
                "torus dimension must be 1 or 2, got {dim}"
            )));
        }
        if n < 4 || n % 2 != 0 {
            return Err(Error::InvalidParameter(format!(
                "nodes per axis must be even and >= 4, got {n}"
            )));
        }
        Ok(Self { dim, n })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn spacing(&self) -> f64 {
        1.0 / self.n as f64
    }

    /// Number of samples, `n^d`.
    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Total measure of the torus.
    pub fn volume(&self) -> f64 {
        1.0
    }

    /// Quadrature weight `h^d` of a single node.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    /// Multi-index of a flat index; axis 0 varies slowest.
    pub fn multi_index(&self, idx: usize) -> [usize; 2] {
        match self.dim {
            1 => [idx, 0],
            _ => [idx / self.n, idx % self.n],
        }
    }

    pub fn flat_index(&self, mi: [usize; 2]) -> usize {
        match self.dim {
            1 => mi[0],
            _ => mi[0] * self.n + mi[1],
        }
    }

    /// Coordinates of a node; unused trailing coordinates are zero.
    pub fn coords(&self, idx: usize) -> [f64; 2] {
        let mi = self.multi_index(idx);
        let h = self.spacing();
        [mi[0] as f64 * h, mi[1] as f64 * h]
    }

    /// Flat index of the neighbour `delta` steps along `axis`, with wrap.
    #[inline]
    pub fn shift(&self, idx: usize, axis: usize, delta: isize) -> usize {
        let mut mi = self.multi_index(idx);
        let n = self.n as isize;
        mi[axis] = (mi[axis] as isize + delta).rem_euclid(n) as usize;
        self.flat_index(mi)
    }

    /// Stencil symbol of the discrete Laplacian for integer wave-vector `k`.
    pub fn laplacian_symbol(&self, k: &[i64]) -> f64 {
        let h = self.spacing();
        k.iter()
            .take(self.dim)
            .map(|&ki| (2.0 - 2.0 * (2.0 * PI * ki as f64 * h).cos()) / (h * h))
            .sum()
    }

    pub(crate) fn check_same(&self, other: &TorusGrid) -> Result<()> {
        if self != other {
            return Err(Error::ShapeMismatch(format!(
                "grid {}x{} vs grid {}x{}",
                self.dim, self.n, other.dim, other.n
            )));
        }
        Ok(())
    }
}

/// Real function sampled at the nodes of a [`TorusGrid`].
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    grid: TorusGrid,
    values: Vec<f64>,
}

impl ScalarField {
    /// Wraps raw samples; rejects wrong lengths and non-finite values.
    pub fn from_values(grid: TorusGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} samples, got {}",
                grid.len(),
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("sample {pos} is not finite")));
        }
        Ok(Self { grid, values })
    }

    /// Samples `f(x₁, x₂)` at every node (`x₂ = 0` in one dimension).
    pub fn from_fn(grid: TorusGrid, f: impl Fn([f64; 2]) -> f64) -> Self {
        let values = (0..grid.len()).map(|i| f(grid.coords(i))).collect();
        Self { grid, values }
    }

    pub fn zeros(grid: TorusGrid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: TorusGrid, c: f64) -> Self {
        Self {
            grid,
            values: vec![c; grid.len()],
        }
    }

    // Internal constructor for results of finite arithmetic on finite fields.
    pub(crate) fn raw(grid: TorusGrid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    pub fn grid(&self) -> TorusGrid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::raw(self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    /// Pointwise combination of two fields on the same grid.
    ///
    /// Panics if the grids differ.
    pub fn zip_map(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> Self {
        assert_eq!(self.grid, other.grid, "fields live on different grids");
        Self::raw(
            self.grid,
            self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        )
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn norm_inf(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn mean(&self) -> f64 {
        integrate(self) / self.grid.volume()
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map(|v| c * v)
    }

    /// `self + c * other`.
    pub fn axpy(&self, c: f64, other: &ScalarField) -> Self {
        self.zip_map(other, |a, b| a + c * b)
    }
}

impl Add for &ScalarField {
    type Output = ScalarField;
    fn add(self, rhs: &ScalarField) -> ScalarField {
        self.zip_map(rhs, |a, b| a + b)
    }
}

impl Sub for &ScalarField {
    type Output = ScalarField;
    fn sub(self, rhs: &ScalarField) -> ScalarField {
        self.zip_map(rhs, |a, b| a - b)
    }
}

impl Mul for &ScalarField {
    type Output = ScalarField;
    fn mul(self, rhs: &ScalarField) -> ScalarField {
        self.zip_map(rhs, |a, b| a * b)
    }
}

impl Mul<f64> for &ScalarField {
    type Output = ScalarField;
    fn mul(self, rhs: f64) -> ScalarField {
        self.scale(rhs)
    }
}

impl Neg for &ScalarField {
    type Output = ScalarField;
    fn neg(self) -> ScalarField {
        self.scale(-1.0)
    }
}

/// A tangent vector field on the torus: one [`ScalarField`] per axis.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorFieldOnX {
    components: Vec<ScalarField>,
}

impl VectorFieldOnX {
    pub fn new(components: Vec<ScalarField>) -> Result<Self> {
        let first = components
            .first()
            .ok_or_else(|| Error::InvalidParameter("vector field needs components".into()))?;
        let grid = first.grid();
        if components.len() != grid.dim() {
            return Err(Error::ShapeMismatch(format!(
                "{} components on a {}-dimensional torus",
                components.len(),
                grid.dim()
            )));
        }
        for c in &components {
            grid.check_same(&c.grid())?;
        }
        Ok(Self { components })
    }

    pub fn constant(grid: TorusGrid, v: &[f64]) -> Self {
        Self {
            components: (0..grid.dim()).map(|a| ScalarField::constant(grid, v[a])).collect(),
        }
    }

    pub fn grid(&self) -> TorusGrid {
        self.components[0].grid()
    }

    pub fn component(&self, axis: usize) -> &ScalarField {
        &self.components[axis]
    }

    pub fn components(&self) -> &[ScalarField] {
        &self.components
    }

    /// Multiplies every component by the scalar field `f`.
    pub fn scale_by(&self, f: &ScalarField) -> Self {
        Self {
            components: self.components.iter().map(|c| c * f).collect(),
        }
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            components: self.components.iter().map(|v| v.scale(c)).collect(),
        }
    }

    pub fn add(&self, other: &VectorFieldOnX) -> Self {
        Self {
            components: self
                .components
                .iter()
                .zip(&other.components)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    pub fn sub(&self, other: &VectorFieldOnX) -> Self {
        Self {
            components: self
                .components
                .iter()
                .zip(&other.components)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }

    /// Largest pointwise component magnitude.
    pub fn norm_inf(&self) -> f64 {
        self.components.iter().map(ScalarField::norm_inf).fold(0.0, f64::max)
    }
}

/// Pointwise inner product `(v, w)`.
pub fn dot(v: &VectorFieldOnX, w: &VectorFieldOnX) -> ScalarField {
    let grid = v.grid();
    let mut out = vec![0.0; grid.len()];
    for (a, b) in v.components().iter().zip(w.components()) {
        for (o, (x, y)) in out.iter_mut().zip(a.values().iter().zip(b.values())) {
            *o += x * y;
        }
    }
    ScalarField::raw(grid, out)
}

/// `Δ_X f = -Σ ∂ᵢ² f` with the 3-point stencil on every axis.
pub fn laplacian(f: &ScalarField) -> ScalarField {
    let grid = f.grid();
    let inv_h2 = 1.0 / (grid.spacing() * grid.spacing());
    let v = f.values();
    let mut out = vec![0.0; grid.len()];
    for axis in 0..grid.dim() {
        for (idx, o) in out.iter_mut().enumerate() {
            let p = grid.shift(idx, axis, 1);
            let m = grid.shift(idx, axis, -1);
            *o -= (v[p] - 2.0 * v[idx] + v[m]) * inv_h2;
        }
    }
    ScalarField::raw(grid, out)
}

/// Centered difference along one axis.
pub fn partial(f: &ScalarField, axis: usize) -> ScalarField {
    let grid = f.grid();
    let inv_2h = 0.5 / grid.spacing();
    let v = f.values();
    let out = (0..grid.len())
        .map(|idx| (v[grid.shift(idx, axis, 1)] - v[grid.shift(idx, axis, -1)]) * inv_2h)
        .collect();
    ScalarField::raw(grid, out)
}

/// Centered-difference gradient.
pub fn gradient(f: &ScalarField) -> VectorFieldOnX {
    VectorFieldOnX {
        components: (0..f.grid().dim()).map(|a| partial(f, a)).collect(),
    }
}

/// Centered-difference divergence, the negative adjoint of [`gradient`].
pub fn divergence(v: &VectorFieldOnX) -> ScalarField {
    let grid = v.grid();
    let mut out = ScalarField::zeros(grid);
    for (axis, c) in v.components().iter().enumerate() {
        out = &out + &partial(c, axis);
    }
    out
}

/// `(v, ∇f)`.
pub fn directional(v: &VectorFieldOnX, f: &ScalarField) -> ScalarField {
    dot(v, &gradient(f))
}

/// Lie bracket `[v, w] = (v·∇)w - (w·∇)v` with centered differences.
pub fn lie_bracket(v: &VectorFieldOnX, w: &VectorFieldOnX) -> VectorFieldOnX {
    let components = (0..v.grid().dim())
        .map(|a| &directional(v, w.component(a)) - &directional(w, v.component(a)))
        .collect();
    VectorFieldOnX { components }
}

/// `h^d Σ f`, exact for trigonometric polynomials below the Nyquist mode.
pub fn integrate(f: &ScalarField) -> f64 {
    f.grid().cell_volume() * f.values().iter().sum::<f64>()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FourierKind {
    Cos,
    Sin,
}

/// Returns `cos(2πk·x)` (or `sin`) together with its exact discrete
/// Laplacian eigenvalue.
pub fn fourier_eigenpair(grid: TorusGrid, k: &[i64], kind: FourierKind) -> Result<(ScalarField, f64)> {
    if k.len() != grid.dim() {
        return Err(Error::InvalidWaveVector(format!(
            "wave-vector has {} entries on a {}-dimensional torus",
            k.len(),
            grid.dim()
        )));
    }
    let half = (grid.n() / 2) as i64;
    if k.iter().all(|&ki| ki == 0) {
        return Err(Error::InvalidWaveVector(
            "k = 0 has eigenvalue 0; a positive eigenvalue is required".into(),
        ));
    }
    if k.iter().any(|&ki| ki.abs() >= half) {
        return Err(Error::InvalidWaveVector(format!(
            "|k_i| must stay below n/2 = {half} to avoid aliasing"
        )));
    }
    let kk = [k[0] as f64, k.get(1).copied().unwrap_or(0) as f64];
    let f = ScalarField::from_fn(grid, |x| {
        let arg = 2.0 * PI * (kk[0] * x[0] + kk[1] * x[1]);
        match kind {
            FourierKind::Cos => arg.cos(),
            FourierKind::Sin => arg.sin(),
        }
    });
    Ok((f, grid.laplacian_symbol(k)))
}

/// `(∂₂s, -∂₁s)` on the 2-torus; divergence free by construction.
pub fn skew_gradient(s: &ScalarField) -> Result<VectorFieldOnX> {
    require_2d(s.grid(), "skew_gradient")?;
    Ok(VectorFieldOnX {
        components: vec![partial(s, 1), -&partial(s, 0)],
    })
}

/// `v₁w₂ - v₂w₁`, the bivector `v×w` identified with a function.
pub fn cross_scalar(v: &VectorFieldOnX, w: &VectorFieldOnX) -> Result<ScalarField> {
    require_2d(v.grid(), "cross_scalar")?;
    v.grid().check_same(&w.grid())?;
    Ok(&(v.component(0) * w.component(1)) - &(v.component(1) * w.component(0)))
}

pub(crate) fn require_2d(grid: TorusGrid, op: &str) -> Result<()> {
    if grid.dim() != 2 {
        return Err(Error::RequiresTwoDimensions(op.to_string()));
    }
    Ok(())
}
