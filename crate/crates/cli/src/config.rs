//! Scenario files. Every table rejects keys it does not know.

use std::path::Path;

use serde::Deserialize;

use crate::error::CliError;

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    SolvePhi,
    SolveObstacle,
    Roundtrip,
    Geodesic,
    Curvature,
    Conserve,
    NahmForward,
    NahmBvp,
    SweepJ,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::SolvePhi => "solve-phi",
            Kind::SolveObstacle => "solve-obstacle",
            Kind::Roundtrip => "roundtrip",
            Kind::Geodesic => "geodesic",
            Kind::Curvature => "curvature",
            Kind::Conserve => "conserve",
            Kind::NahmForward => "nahm-forward",
            Kind::NahmBvp => "nahm-bvp",
            Kind::SweepJ => "sweep-j",
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub kind: Kind,
    #[serde(default)]
    pub seed: u64,
    pub eps: Option<f64>,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub data: DataSpec,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default)]
    pub flow: FlowSpec,
    #[serde(default)]
    pub curvature: CurvatureSpec,
    #[serde(default)]
    pub nahm: NahmSpec,
    #[serde(default)]
    pub sweep: SweepSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(default = "one")]
    pub d: usize,
    #[serde(default = "n_default")]
    pub n: usize,
    #[serde(default = "m_default")]
    pub m: usize,
    #[serde(default = "mz_default")]
    pub mz: usize,
    #[serde(rename = "M", default = "one_f")]
    pub big_m: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            d: 1,
            n: n_default(),
            m: m_default(),
            mz: mz_default(),
            big_m: 1.0,
        }
    }
}

/// One term `amplitude * cos(2 pi k.x + phase)`.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeSpec {
    pub k: Vec<i64>,
    pub amplitude: f64,
    #[serde(default)]
    pub phase: f64,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomSpec {
    #[serde(default = "three")]
    pub count: usize,
    #[serde(default = "three_i")]
    pub max_k: i64,
    pub amplitude: f64,
}

/// A field on the torus: Fourier terms, plus random terms drawn from the
/// seed, or raw nodal values (row-major, `n^d` of them).
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSpec {
    #[serde(default)]
    pub modes: Vec<ModeSpec>,
    pub random: Option<RandomSpec>,
    pub values: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixSpec {
    pub re: Vec<Vec<f64>>,
    pub im: Option<Vec<Vec<f64>>>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSpec {
    /// Densities are `1 + field`; potentials solve `1 - lap phi = rho`.
    pub rho0: Option<FieldSpec>,
    pub rho1: Option<FieldSpec>,
    /// Initial potential (as a density) and velocity for the flows.
    pub rho: Option<FieldSpec>,
    pub phi_dot: Option<FieldSpec>,
    /// Obstacle of the J family.
    pub lambda: Option<FieldSpec>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    pub newton_tol: Option<f64>,
    pub newton_max_iter: Option<usize>,
    pub initial_ds: Option<f64>,
    pub max_ds: Option<f64>,
    /// PSOR relaxation factor; the optimal factor when absent.
    pub omega: Option<f64>,
    pub psor_tol: Option<f64>,
    pub max_sweeps: Option<usize>,
    pub bvp_tol: Option<f64>,
    pub bvp_max_iter: Option<usize>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowSpec {
    #[serde(default = "dt_default")]
    pub dt: f64,
    #[serde(default = "steps_default")]
    pub steps: usize,
    /// Keep every this many steps in the tables.
    #[serde(default = "record_default")]
    pub record_every: usize,
    #[serde(default = "modes_default")]
    pub modes: Vec<Vec<i64>>,
    #[serde(default = "drift_default")]
    pub drift_tol: f64,
}

impl Default for FlowSpec {
    fn default() -> Self {
        Self {
            dt: dt_default(),
            steps: steps_default(),
            record_every: record_default(),
            modes: modes_default(),
            drift_tol: drift_default(),
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurvatureSpec {
    #[serde(default = "trials_default")]
    pub trials: usize,
    /// Density amplitude of the random base points.
    #[serde(default = "half")]
    pub phi_amplitude: f64,
    #[serde(default = "one_f")]
    pub tangent_amplitude: f64,
    #[serde(default = "three_i")]
    pub max_k: i64,
}

impl Default for CurvatureSpec {
    fn default() -> Self {
        Self {
            trials: trials_default(),
            phi_amplitude: 0.5,
            tangent_amplitude: 1.0,
            max_k: 3,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NahmSpec {
    /// su(2) pole data `T_i = -c e_i / (1 + c t)` at `t = 0`.
    pub pole: Option<f64>,
    pub t0: Option<MatrixSpec>,
    pub t1: Option<MatrixSpec>,
    pub t2: Option<MatrixSpec>,
    pub t3: Option<MatrixSpec>,
    /// Random skew-Hermitian data (nahm-forward) or random endpoints and
    /// B (nahm-bvp) of this size.
    pub random_size: Option<usize>,
    #[serde(default = "random_scale_default")]
    pub random_scale: f64,
    #[serde(default = "one_f")]
    pub span: f64,
    #[serde(default = "dt_default")]
    pub dt: f64,
    #[serde(default = "record_default")]
    pub record_every: usize,
    #[serde(default = "nahm_drift_default")]
    pub drift_tol: f64,
    pub h0: Option<MatrixSpec>,
    pub h1: Option<MatrixSpec>,
    pub b: Option<MatrixSpec>,
    #[serde(default = "bvp_residual_default")]
    pub residual_tol: f64,
}

impl Default for NahmSpec {
    fn default() -> Self {
        Self {
            pole: None,
            t0: None,
            t1: None,
            t2: None,
            t3: None,
            random_size: None,
            random_scale: random_scale_default(),
            span: 1.0,
            dt: dt_default(),
            record_every: record_default(),
            drift_tol: nahm_drift_default(),
            h0: None,
            h1: None,
            b: None,
            residual_tol: bvp_residual_default(),
        }
    }
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    #[serde(default)]
    pub z: Vec<f64>,
    pub tol: Option<f64>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub dir: Option<String>,
}

fn one() -> usize {
    1
}
fn one_f() -> f64 {
    1.0
}
fn half() -> f64 {
    0.5
}
fn three() -> usize {
    3
}
fn three_i() -> i64 {
    3
}
fn n_default() -> usize {
    64
}
fn m_default() -> usize {
    64
}
fn mz_default() -> usize {
    128
}
fn dt_default() -> f64 {
    1e-3
}
fn steps_default() -> usize {
    1000
}
fn record_default() -> usize {
    10
}
fn modes_default() -> Vec<Vec<i64>> {
    vec![vec![1], vec![2], vec![3]]
}
fn drift_default() -> f64 {
    1e-6
}
fn nahm_drift_default() -> f64 {
    1e-8
}
fn trials_default() -> usize {
    200
}
fn random_scale_default() -> f64 {
    0.3
}
fn bvp_residual_default() -> f64 {
    1e-3
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: Config = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn eps(&self) -> f64 {
        self.eps.unwrap_or(match self.kind {
            Kind::Geodesic => 0.0,
            _ => 1.0,
        })
    }

    fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Config(msg));
        let g = &self.grid;
        if !(1..=2).contains(&g.d) {
            return bad(format!("grid.d must be 1 or 2, got {}", g.d));
        }
        if g.n < 4 || g.m < 2 || g.mz < 4 {
            return bad(format!("grid too small: n = {}, m = {}, mz = {}", g.n, g.m, g.mz));
        }
        if !(g.big_m > 0.0) {
            return bad(format!("grid.M must be positive, got {}", g.big_m));
        }
        let eps = self.eps();
        let needs_positive = !matches!(
            self.kind,
            Kind::Geodesic | Kind::Curvature | Kind::NahmForward | Kind::NahmBvp
        );
        if !eps.is_finite() || eps < 0.0 || (needs_positive && eps == 0.0) {
            return bad(format!("eps = {eps} is not allowed for {}", self.kind.name()));
        }
        if self.kind == Kind::Curvature && g.d != 2 {
            return bad("curvature needs grid.d = 2".into());
        }
        if matches!(self.kind, Kind::Geodesic | Kind::Conserve) {
            let f = &self.flow;
            if !(f.dt > 0.0) || f.steps == 0 || f.record_every == 0 {
                return bad("flow needs dt > 0, steps > 0 and record_every > 0".into());
            }
            if f.modes.iter().any(|k| k.len() != g.d) {
                return bad(format!("flow.modes must have {} components each", g.d));
            }
        }
        if self.kind == Kind::NahmForward {
            let n = &self.nahm;
            if !(n.dt > 0.0) || !(n.span > 0.0) || n.record_every == 0 {
                return bad("nahm needs dt > 0, span > 0 and record_every > 0".into());
            }
        }
        if self.kind == Kind::SweepJ && self.sweep.z.is_empty() {
            return bad("sweep.z must list at least one level".into());
        }
        Ok(())
    }
}
