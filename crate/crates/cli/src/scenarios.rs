//! One runner per scenario kind. Inputs are built first (failures there are
//! configuration errors), then the solvers run (failures there are solver
//! errors).

use std::f64::consts::PI;
use std::time::Instant;

use fbp_core::data::{fourier_field, potential_from_density_modes, random_modes, FourierMode};
use fbp_core::grid::FourierKind;
use fbp_core::nahm::{
    geodesic, integrate_nahm, invariant_drift, power_traces, reconstruct_nahm, solve_bvp_detailed, BvpOptions, CMatrix,
};
use fbp_core::obstacle::{
    active_set, complementarity_residual, energy_em, family_sweep, optimal_omega, solve_psor_detailed, ObstacleProblem,
    PsorOptions, SlabGrid,
};
use fbp_core::phi_solver::{min_discrete_q, solve_dirichlet_with_stats, NewtonOptions, PhiProblem};
use fbp_core::space_h::{action, conserved_quantity, density, forward_flow, sectional_curvature, v_functional};
use fbp_core::transforms::{
    attach_fluxes, check_level_identities, distance_up_to_constant, flux_integrals, legendre_phi_to_u, poisson_solve,
    theta_level_sets, theta_to_phi, u_to_theta,
};
use fbp_core::{NahmState, Potential, ScalarField, TorusGrid, TrajectoryState};
use nalgebra::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::{json, Map, Value};

use crate::config::{Config, FieldSpec, Kind, MatrixSpec};
use crate::error::{bad_input, CliError};
use crate::output::{field_json, levels_table, num, path_table, slab_table, snapshots_table, Check, Table};

pub struct Outcome {
    pub results: Map<String, Value>,
    pub tables: Vec<Table>,
    pub checks: Vec<Check>,
}

impl Outcome {
    fn new() -> Self {
        Self {
            results: Map::new(),
            tables: Vec::new(),
            checks: Vec::new(),
        }
    }

    fn put(&mut self, key: &str, v: impl Into<Value>) {
        self.results.insert(key.into(), v.into());
    }
}

/// Prints one summary line per stage with its wall time.
struct Clock(Instant);

impl Clock {
    fn start() -> Self {
        Clock(Instant::now())
    }

    fn lap(&mut self, stage: &str, summary: String) {
        println!("{stage}: {summary} ({:.3} s)", self.0.elapsed().as_secs_f64());
        self.0 = Instant::now();
    }
}

pub fn run(cfg: &Config) -> Result<Outcome, CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    match cfg.kind {
        Kind::SolvePhi => solve_phi(cfg, &mut rng),
        Kind::SolveObstacle => solve_obstacle(cfg, &mut rng),
        Kind::Roundtrip => roundtrip(cfg, &mut rng),
        Kind::Geodesic => flow(cfg, &mut rng, false),
        Kind::Conserve => flow(cfg, &mut rng, true),
        Kind::Curvature => curvature(cfg, &mut rng),
        Kind::NahmForward => nahm_forward(cfg, &mut rng),
        Kind::NahmBvp => nahm_bvp(cfg, &mut rng),
        Kind::SweepJ => sweep_j(cfg, &mut rng),
    }
}

// ---- inputs ----

fn torus(cfg: &Config) -> Result<TorusGrid, CliError> {
    TorusGrid::new(cfg.grid.d, cfg.grid.n).map_err(bad_input)
}

fn slab(cfg: &Config, g: TorusGrid) -> Result<SlabGrid, CliError> {
    SlabGrid::new(g, cfg.grid.big_m, cfg.grid.mz).map_err(bad_input)
}

fn field(spec: Option<&FieldSpec>, g: TorusGrid, rng: &mut ChaCha8Rng) -> Result<ScalarField, CliError> {
    let Some(spec) = spec else {
        return Ok(ScalarField::zeros(g));
    };
    if let Some(values) = &spec.values {
        if !spec.modes.is_empty() || spec.random.is_some() {
            return Err(CliError::Config(
                "values cannot be combined with modes or random".into(),
            ));
        }
        return ScalarField::from_values(g, values.clone()).map_err(bad_input);
    }
    let mut modes: Vec<FourierMode> = spec
        .modes
        .iter()
        .map(|m| FourierMode::new(&m.k, m.amplitude, m.phase))
        .collect();
    if let Some(r) = &spec.random {
        modes.extend(random_modes(rng, g.dim(), r.count, r.max_k, r.amplitude));
    }
    fourier_field(g, &modes).map_err(bad_input)
}

fn density_of(spec: Option<&FieldSpec>, g: TorusGrid, rng: &mut ChaCha8Rng) -> Result<ScalarField, CliError> {
    Ok(field(spec, g, rng)?.map(|v| 1.0 + v))
}

/// The potential with `1 - lap phi = rho` and mean zero.
fn potential(spec: Option<&FieldSpec>, g: TorusGrid, rng: &mut ChaCha8Rng) -> Result<Potential, CliError> {
    let rho = density_of(spec, g, rng)?;
    let p = poisson_solve(&rho).map_err(bad_input)?;
    Potential::new(p.field().clone()).map_err(bad_input)
}

fn newton(cfg: &Config) -> NewtonOptions {
    let d = NewtonOptions::default();
    let s = &cfg.solver;
    NewtonOptions {
        tol: s.newton_tol.unwrap_or(d.tol),
        max_iter: s.newton_max_iter.unwrap_or(d.max_iter),
        initial_ds: s.initial_ds.unwrap_or(d.initial_ds),
        max_ds: s.max_ds.unwrap_or(d.max_ds),
        ..d
    }
}

fn psor(cfg: &Config, p: &ObstacleProblem) -> PsorOptions {
    let d = PsorOptions::default();
    let s = &cfg.solver;
    PsorOptions {
        omega: s.omega.unwrap_or_else(|| optimal_omega(p)),
        tol: s.psor_tol.unwrap_or(d.tol),
        max_sweeps: s.max_sweeps.unwrap_or(d.max_sweeps),
        ..d
    }
}

fn matrix(spec: &MatrixSpec, what: &str) -> Result<CMatrix, CliError> {
    let n = spec.re.len();
    let rows_ok = |rows: &Vec<Vec<f64>>| rows.len() == n && rows.iter().all(|r| r.len() == n);
    if n == 0 || !rows_ok(&spec.re) || spec.im.as_ref().is_some_and(|im| !rows_ok(im)) {
        return Err(CliError::Config(format!("{what} must be a non-empty square matrix")));
    }
    Ok(CMatrix::from_fn(n, n, |i, j| {
        Complex::new(spec.re[i][j], spec.im.as_ref().map_or(0.0, |im| im[i][j]))
    }))
}

fn random_matrix(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> CMatrix {
    CMatrix::from_fn(n, n, |_, _| {
        Complex::new(rng.random_range(-scale..=scale), rng.random_range(-scale..=scale))
    })
}

fn hermitian(a: &CMatrix) -> CMatrix {
    (a + a.adjoint()) * Complex::new(0.5, 0.0)
}

/// `exp` of a random Hermitian matrix.
fn random_positive(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> CMatrix {
    fbp_core::nahm::herm_exp(&hermitian(&random_matrix(rng, n, scale)))
}

fn check_positive(h: &CMatrix, what: &str) -> Result<(), CliError> {
    let asym = (h - h.adjoint()).camax();
    if asym > 1e-12 * (1.0 + h.camax()) {
        return Err(CliError::Config(format!(
            "{what} is not Hermitian (asymmetry {asym:e})"
        )));
    }
    let min = hermitian(h).symmetric_eigen().eigenvalues.min();
    if !(min > 0.0) {
        return Err(CliError::Config(format!(
            "{what} is not positive definite (smallest eigenvalue {min:e})"
        )));
    }
    Ok(())
}

/// Every `every`-th element plus the last one.
fn thin<T: Clone>(xs: &[T], every: usize) -> Vec<T> {
    let mut out: Vec<T> = xs.iter().step_by(every).cloned().collect();
    if (xs.len() - 1) % every != 0 {
        out.push(xs[xs.len() - 1].clone());
    }
    out
}

fn thin_indices(len: usize, every: usize) -> Vec<usize> {
    thin(&(0..len).collect::<Vec<_>>(), every)
}

// ---- scenarios ----

fn solve_phi(cfg: &Config, rng: &mut ChaCha8Rng) -> Result<Outcome, CliError> {
    let g = torus(cfg)?;
    let phi0 = potential(cfg.data.rho0.as_ref(), g, rng)?;
    let phi1 = potential(cfg.data.rho1.as_ref(), g, rng)?;
    let opts = newton(cfg);
    let problem = PhiProblem::new(phi0.clone(), phi1.clone(), cfg.eps(), cfg.grid.m)
        .map_err(bad_input)?
        .with_newton(opts);
    let mut clock = Clock::start();
    let (path, stats) = solve_dirichlet_with_stats(&problem)?;
    clock.lap(
        "phi solve",
        format!(
            "{} Newton iterations, residual {:e}",
            stats.newton_iterations, stats.residual
        ),
    );
    let e = action(&path, cfg.eps());
    let min_q = min_discrete_q(&path);
    let ends = (path.slice(0) - phi0.field())
        .norm_inf()
        .max((path.slice(cfg.grid.m) - phi1.field()).norm_inf());
    clock.lap("diagnostics", format!("action {e:e}, min q {min_q:e}"));

    let mut out = Outcome::new();
    out.put("newton_iterations", stats.newton_iterations);
    out.put("continuation_steps", stats.continuation_steps);
    out.put("rejected_steps", stats.rejected_steps);
    out.put("q_residual", stats.residual);
    out.put("action", e);
    out.put("min_q", min_q);
    out.checks.push(Check::at_most("q_residual", stats.residual, opts.tol));
    out.checks.push(Check::at_most("boundary_mismatch", ends, 1e-12));
    out.checks
        .push(Check::at_least("min_q_positive", min_q, f64::MIN_POSITIVE));
    out.tables.push(path_table("phi", &path));
    Ok(out)
}

fn solve_obstacle(cfg: &Config, rng: &mut ChaCha8Rng) -> Result<Outcome, CliError> {
    let g = torus(cfg)?;
    let phi0 = potential(cfg.data.rho0.as_ref(), g, rng)?;
    let phi1 = potential(cfg.data.rho1.as_ref(), g, rng)?;
    let s = slab(cfg, g)?;
    let p = ObstacleProblem::from_potentials(&phi0, &phi1, cfg.eps(), s).map_err(bad_input)?;
    let opts = PsorOptions {
        record_energy: true,
        ..psor(cfg, &p)
    };
    let mut clock = Clock::start();
    let res = solve_psor_detailed(&p, &opts, None)?;
    clock.lap("psor", format!("{} sweeps, residual {:e}", res.sweeps, res.residual));
    let act = active_set(&res.u, p.lower(), 1e-12)?;
    let comp = complementarity_residual(&res.u, &p);
    let energy = energy_em(&res.u, &p)?;
    let above = res
        .u
        .values()
        .iter()
        .zip(p.lower().values())
        .map(|(u, l)| u - l)
        .fold(f64::INFINITY, f64::min);
    let rise = res
        .energies
        .windows(2)
        .map(|w| (w[1] - w[0]) / (1.0 + w[0].abs()))
        .fold(0.0, f64::max);
    clock.lap(
        "free boundary",
        format!(
            "H0 in [{:e}, {:e}], H1 in [{:e}, {:e}]",
            act.h0.min(),
            act.h0.max(),
            act.h1.min(),
            act.h1.max()
        ),
    );

    let mut out = Outcome::new();
    out.put("omega", opts.omega);
    out.put("sweeps", res.sweeps);
    out.put("complementarity_residual", comp);
    out.put("energy", energy);
    out.put("energy_trace", thin(&res.energies, (res.energies.len() / 200).max(1)));
    out.put("h0", field_json(&act.h0));
    out.put("h1", field_json(&act.h1));
    out.checks
        .push(Check::at_most("complementarity_residual", comp, opts.tol));
    out.checks.push(Check::at_least("above_obstacle", above, -1e-12));
    out.checks.push(Check::at_most("energy_monotone", rise, 1e-12));
    out.tables.push(slab_table("u", &res.u));
    let mut fb = Table::with_header(
        "free_boundary",
        (1..=g.dim())
            .map(|i| format!("x{i}"))
            .chain(["H0".into(), "H1".into()])
            .collect(),
    );
    for idx in 0..g.len() {
        let x = g.coords(idx);
        let mut row: Vec<f64> = x[..g.dim()].to_vec();
        row.push(act.h0.values()[idx]);
        row.push(act.h1.values()[idx]);
        fb.push_nums(&row);
    }
    out.tables.push(fb);
    Ok(out)
}

fn roundtrip(cfg: &Config, rng: &mut ChaCha8Rng) -> Result<Outcome, CliError> {
    let g = torus(cfg)?;
    let eps = cfg.eps();
    let phi0 = potential(cfg.data.rho0.as_ref(), g, rng)?;
    let phi1 = potential(cfg.data.rho1.as_ref(), g, rng)?;
    let s = slab(cfg, g)?;
    let problem = PhiProblem::new(phi0.clone(), phi1.clone(), eps, cfg.grid.m)
        .map_err(bad_input)?
        .with_newton(newton(cfg));
    let p = ObstacleProblem::from_potentials(&phi0, &phi1, eps, s).map_err(bad_input)?;

    let mut clock = Clock::start();
    let (path, stats) = solve_dirichlet_with_stats(&problem)?;
    clock.lap("phi solve", format!("{} Newton iterations", stats.newton_iterations));
    let u_leg = legendre_phi_to_u(&path, s)?;
    clock.lap(
        "legendre",
        format!("max U {:e}", u_leg.values().iter().cloned().fold(f64::MIN, f64::max)),
    );
    let opts = psor(cfg, &p);
    let res = solve_psor_detailed(&p, &opts, None)?;
    clock.lap("psor", format!("{} sweeps, residual {:e}", res.sweeps, res.residual));
    let gap = u_leg.max_abs_diff(&res.u);

    // round trip from the Legendre transform
    let act_l = active_set(&u_leg, p.lower(), 1e-12)?;
    let theta_l = u_to_theta(&u_leg, &act_l)?;
    let levels_l = theta_level_sets(&theta_l, &act_l, cfg.grid.m)?;
    let rec = theta_to_phi(&levels_l, &phi0.density())?;
    let back = distance_up_to_constant(&rec.path, &path);
    clock.lap(
        "round trip",
        format!("legendre vs psor {gap:e}, recovered Phi {back:e}"),
    );

    // level-set fluxes of the obstacle solution
    let act = active_set(&res.u, p.lower(), 1e-12)?;
    let theta = u_to_theta(&res.u, &act)?;
    let mut levels = theta_level_sets(&theta, &act, cfg.grid.m)?;
    attach_fluxes(&mut levels, &theta, &act, eps)?;
    let integrals = flux_integrals(&levels);
    let mass = integrals.iter().map(|v| (v - 1.0).abs()).fold(0.0, f64::max);
    let matched: Vec<f64> = levels
        .fluxes
        .iter()
        .zip(path.slices())
        .map(|(r, phi)| (r - &density(phi)).norm_inf())
        .collect();
    let ids = check_level_identities(&theta, &res.u, &act, &levels, &path, (0.0, 1.0))?;
    clock.lap(
        "fluxes",
        format!("max |int rho_t - 1| {mass:e}, flux law {:e}", ids.flux_law),
    );

    let mut out = Outcome::new();
    out.put("legendre_vs_psor", gap);
    out.put("roundtrip_distance", back);
    out.put("psor_sweeps", res.sweeps);
    out.put("newton_iterations", stats.newton_iterations);
    out.put("flux_integrals", integrals);
    out.put("flux_vs_density", matched);
    out.put(
        "level_identities",
        json!({
            "graph": ids.graph,
            "inverse_height": ids.inverse_height,
            "legendre_curvature": ids.legendre_curvature,
            "flux_law": ids.flux_law,
        }),
    );
    out.put("h0", field_json(&act.h0));
    out.put("h1", field_json(&act.h1));
    out.checks.push(Check::at_most("legendre_vs_psor", gap, 5e-3));
    out.checks.push(Check::at_most("roundtrip_distance", back, 1e-2));
    out.tables.push(path_table("phi", &path));
    out.tables.push(slab_table("u", &res.u));
    out.tables.push(slab_table("theta", &theta));
    out.tables.push(path_table("phi_roundtrip", &rec.path));
    Ok(out)
}

/// Forward flow from `(phi, phi_dot)`: the geodesic scenario tracks the
/// potential energy, the conserve scenario the mode quantities.
fn flow(cfg: &Config, rng: &mut ChaCha8Rng, conserve: bool) -> Result<Outcome, CliError> {
    let g = torus(cfg)?;
    let f = &cfg.flow;
    let eps = cfg.eps();
    let phi = potential(cfg.data.rho.as_ref(), g, rng)?;
    let phi_dot = field(cfg.data.phi_dot.as_ref(), g, rng)?;
    for k in &f.modes {
        fbp_core::grid::fourier_eigenpair(g, k, FourierKind::Cos).map_err(bad_input)?;
    }
    let init = TrajectoryState { phi, phi_dot, t: 0.0 };
    let mut clock = Clock::start();
    let mut out = Outcome::new();
    // keep what was computed before admissibility was lost, and report the loss
    let traj = match forward_flow(&init, eps, f.dt, f.steps) {
        Err(fbp_core::Error::AdmissibilityLost { step }) if step > 2 => {
            let lost = step as f64 * f.dt;
            out.put("admissibility_lost_at", lost);
            out.checks
                .push(Check::at_least("admissible_until_end", lost, f.steps as f64 * f.dt));
            forward_flow(&init, eps, f.dt, step - 1)?
        }
        other => other?,
    };
    let last = traj.last().map_or(0.0, |s| s.t);
    clock.lap("flow", format!("{} steps to t = {last}", traj.len() - 1));
    let keep = thin_indices(traj.len(), f.record_every);

    if conserve {
        let header: Vec<String> = std::iter::once("t".to_string())
            .chain(
                f.modes
                    .iter()
                    .map(|k| format!("Q_{}", k.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("_"))),
            )
            .collect();
        let rows: Vec<Vec<f64>> = keep
            .par_iter()
            .map(|&i| {
                let s = &traj[i];
                let mut row = vec![s.t];
                for k in &f.modes {
                    row.push(conserved_quantity(&s.phi, &s.phi_dot, k, FourierKind::Cos, eps)?);
                }
                Ok(row)
            })
            .collect::<Result<_, fbp_core::Error>>()?;
        let mut table = Table::with_header("conserve", header);
        let mut drifts = Vec::new();
        for (c, k) in f.modes.iter().enumerate() {
            let q0 = rows[0][c + 1];
            let drift = rows.iter().map(|r| (r[c + 1] - q0).abs()).fold(0.0, f64::max) / q0.abs();
            out.checks.push(Check::at_most(
                &format!("drift_{}", &table.header[c + 1]),
                drift,
                f.drift_tol,
            ));
            drifts.push(json!({ "k": k, "initial": q0, "relative_drift": drift }));
        }
        for r in &rows {
            table.push_nums(r);
        }
        clock.lap(
            "conserved quantities",
            format!("{} snapshots, {} modes", rows.len(), f.modes.len()),
        );
        out.put("modes", drifts);
        out.tables.push(table);
    } else {
        let v: Vec<f64> = traj.iter().map(|s| v_functional(s.phi.field())).collect();
        let min_dd = v
            .windows(3)
            .map(|w| w[2] - 2.0 * w[1] + w[0])
            .fold(f64::INFINITY, f64::min);
        let min_dd = if min_dd.is_finite() { min_dd } else { 0.0 };
        clock.lap("potential energy", format!("min second difference {min_dd:e}"));
        out.put(
            "v_trace",
            keep.iter().map(|&i| json!([traj[i].t, v[i]])).collect::<Vec<_>>(),
        );
        out.put("min_second_difference", min_dd);
        out.checks.push(Check::at_least("v_convex", min_dd, -1e-8));
        let snaps: Vec<(f64, &ScalarField)> = keep.iter().map(|&i| (traj[i].t, traj[i].phi.field())).collect();
        out.tables.push(snapshots_table("phi", g, &snaps));
    }
    out.put("final_time", last);
    Ok(out)
}

fn curvature(cfg: &Config, rng: &mut ChaCha8Rng) -> Result<Outcome, CliError> {
    let g = torus(cfg)?;
    let c = &cfg.curvature;
    let mut draws = Vec::with_capacity(c.trials);
    for _ in 0..c.trials {
        let phi = potential_from_density_modes(g, &random_modes(rng, 2, 3, c.max_k, c.phi_amplitude))
            .and_then(Potential::new)
            .map_err(bad_input)?;
        let a = fourier_field(g, &random_modes(rng, 2, 3, c.max_k, c.tangent_amplitude)).map_err(bad_input)?;
        let b = fourier_field(g, &random_modes(rng, 2, 3, c.max_k, c.tangent_amplitude)).map_err(bad_input)?;
        draws.push((phi, a, b));
    }
    let mut clock = Clock::start();
    let ks: Vec<f64> = draws
        .par_iter()
        .map(|(phi, a, b)| sectional_curvature(phi, a, b))
        .collect::<Result<_, _>>()?;
    let max_k = ks.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let a = ScalarField::from_fn(g, |x| (2.0 * PI * x[0]).cos());
    let b = ScalarField::from_fn(g, |x| (2.0 * PI * x[1]).cos());
    let reference = sectional_curvature(&Potential::zero(g), &a, &b)?;
    clock.lap("curvature", format!("{} trials, max K {max_k:e}", ks.len()));

    let mut out = Outcome::new();
    out.put("max_k", max_k);
    out.put(
        "reference",
        json!({ "k": reference, "continuum": -4.0 * PI.powi(4), "note": "phi = 0, alpha = cos(2 pi x1), beta = cos(2 pi x2)" }),
    );
    out.checks.push(Check::at_most("k_nonpositive", max_k, 1e-12));
    let mut table = Table::new("curvature", &["trial", "K"]);
    for (i, k) in ks.iter().enumerate() {
        table.push(vec![i.to_string(), num(*k)]);
    }
    out.tables.push(table);
    Ok(out)
}

fn nahm_forward(cfg: &Config, rng: &mut ChaCha8Rng) -> Result<Outcome, CliError> {
    let n = &cfg.nahm;
    let init = if let Some(c) = n.pole {
        NahmState::su2_pole(c, 0.0)
    } else if let Some(size) = n.random_size {
        let mats = std::array::from_fn(|i| {
            if i == 0 {
                CMatrix::zeros(size, size)
            } else {
                let a = random_matrix(rng, size, n.random_scale);
                (&a - a.adjoint()) * Complex::new(0.5, 0.0)
            }
        });
        NahmState::new(0.0, mats).map_err(bad_input)?
    } else {
        let (Some(t1), Some(t2), Some(t3)) = (&n.t1, &n.t2, &n.t3) else {
            return Err(CliError::Config(
                "nahm-forward needs pole, random_size or t1, t2, t3".into(),
            ));
        };
        let t1 = matrix(t1, "t1")?;
        let size = t1.nrows();
        let t0 = match &n.t0 {
            Some(t0) => matrix(t0, "t0")?,
            None => CMatrix::zeros(size, size),
        };
        NahmState::new(0.0, [t0, t1, matrix(t2, "t2")?, matrix(t3, "t3")?]).map_err(bad_input)?
    };
    let mut clock = Clock::start();
    let traj = integrate_nahm(&init, n.span, n.dt)?;
    let drift = invariant_drift(&traj)?;
    clock.lap(
        "nahm flow",
        format!("{} steps, invariant drift {drift:e}", traj.len() - 1),
    );

    let mut out = Outcome::new();
    out.put("invariant_drift", drift);
    out.checks.push(Check::at_most("invariant_drift", drift, n.drift_tol));
    if let Some(c) = n.pole {
        let err = traj
            .iter()
            .map(|s| {
                let exact = NahmState::su2_pole(c, s.t);
                (1..4)
                    .map(|i| (&s.mats[i] - &exact.mats[i]).camax())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        out.put("pole_error", err);
        out.checks.push(Check::at_most("pole_error", err, n.drift_tol));
    }
    let dim = init.dim();
    let mut header = vec!["t".to_string()];
    for k in 1..=dim {
        header.push(format!("re_tr_c{k}"));
        header.push(format!("im_tr_c{k}"));
    }
    let mut table = Table::with_header("invariants", header);
    for i in thin_indices(traj.len(), n.record_every) {
        let mut row = vec![traj[i].t];
        for p in power_traces(&traj[i]) {
            row.push(p.re);
            row.push(p.im);
        }
        table.push_nums(&row);
    }
    out.tables.push(table);
    Ok(out)
}

fn nahm_bvp(cfg: &Config, rng: &mut ChaCha8Rng) -> Result<Outcome, CliError> {
    let n = &cfg.nahm;
    let (h0, h1, b) = if let Some(size) = n.random_size {
        let h0 = random_positive(rng, size, n.random_scale);
        let h1 = random_positive(rng, size, n.random_scale);
        (h0, h1, random_matrix(rng, size, n.random_scale))
    } else {
        let (Some(h0), Some(h1)) = (&n.h0, &n.h1) else {
            return Err(CliError::Config("nahm-bvp needs random_size or h0 and h1".into()));
        };
        let h0 = matrix(h0, "h0")?;
        let size = h0.nrows();
        let b = match &n.b {
            Some(b) => matrix(b, "b")?,
            None => CMatrix::zeros(size, size),
        };
        (h0, matrix(h1, "h1")?, b)
    };
    check_positive(&h0, "h0")?;
    check_positive(&h1, "h1")?;
    if h1.nrows() != h0.nrows() || b.nrows() != h0.nrows() {
        return Err(CliError::Config("h0, h1 and b must have the same size".into()));
    }
    let d = BvpOptions::default();
    let opts = BvpOptions {
        m: cfg.grid.m,
        tol: cfg.solver.bvp_tol.unwrap_or(d.tol),
        max_iter: cfg.solver.bvp_max_iter.unwrap_or(d.max_iter),
    };
    let mut clock = Clock::start();
    let res = solve_bvp_detailed(&h0, &h1, &b, &opts)?;
    clock.lap(
        "bvp",
        format!(
            "{} iterations, action {:e}",
            res.iterations,
            res.actions.last().copied().unwrap_or(f64::NAN)
        ),
    );
    let rec = reconstruct_nahm(&res.path)?;
    clock.lap("reconstruction", format!("residual {:e}", rec.residual));
    let rise = res
        .actions
        .windows(2)
        .map(|w| (w[1] - w[0]) / (1.0 + w[0].abs()))
        .fold(0.0, f64::max);

    let mut out = Outcome::new();
    out.put("iterations", res.iterations);
    out.put("action_trace", res.actions.clone());
    out.put("gradient_norm", res.gradient_norm);
    out.put("reconstruction_residual", rec.residual);
    out.checks
        .push(Check::at_most("reconstruction_residual", rec.residual, n.residual_tol));
    out.checks.push(Check::at_most("action_monotone", rise, 1e-12));
    if b.camax() == 0.0 {
        let m = res.path.m();
        let mut err = 0.0f64;
        for (j, h) in res.path.samples().iter().enumerate() {
            err = err.max((h - geodesic(&h0, &h1, j as f64 / m as f64)?).camax());
        }
        out.put("geodesic_error", err);
        out.checks.push(Check::at_most("geodesic_error", err, 1e-4));
    }
    let mut table = Table::new("h", &["t", "i", "j", "re", "im"]);
    let tau = res.path.tau();
    for (k, h) in res.path.samples().iter().enumerate() {
        for i in 0..h.nrows() {
            for j in 0..h.ncols() {
                let v = h[(i, j)];
                table.push(vec![
                    num(k as f64 * tau),
                    i.to_string(),
                    j.to_string(),
                    num(v.re),
                    num(v.im),
                ]);
            }
        }
    }
    out.tables.push(table);
    Ok(out)
}

fn sweep_j(cfg: &Config, rng: &mut ChaCha8Rng) -> Result<Outcome, CliError> {
    let g = torus(cfg)?;
    let lam = field(cfg.data.lambda.as_ref(), g, rng)?;
    let rho = density_of(cfg.data.rho.as_ref(), g, rng)?;
    let tol = cfg.sweep.tol.unwrap_or(1e-10);
    let mut clock = Clock::start();
    let sweep = family_sweep(&lam, &rho, &cfg.sweep.z, tol)?;
    clock.lap("family sweep", format!("{} levels", sweep.members.len()));

    let mut out = Outcome::new();
    let mut below = f64::INFINITY;
    let mut members = Vec::new();
    for m in &sweep.members {
        let gap =
            m.u.values()
                .iter()
                .zip(lam.values())
                .map(|(u, l)| u - l.max(m.z))
                .fold(f64::INFINITY, f64::min);
        below = below.min(gap);
        let free = m.omega_mask.iter().filter(|&&b| b).count() as f64 / g.len() as f64;
        members.push(json!({ "z": m.z, "free_fraction": free, "energy": fbp_core::obstacle::energy_j(&m.u, &rho) }));
    }
    out.put("members", members);
    out.put("derivative", sweep.derivative.clone());
    out.checks.push(Check::at_least("above_obstacle", below, -1e-12));
    let levels: Vec<(f64, &ScalarField)> = sweep.members.iter().map(|m| (m.z, &m.u)).collect();
    out.tables.push(levels_table("u", g, &levels));
    Ok(out)
}
