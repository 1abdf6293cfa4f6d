//! CNAB2 time integration of the difference system for `v_d = v - v_E`.
//!
//! Each horizontal mode is advanced independently: Crank-Nicolson for
//! `nu_H Delta_H + nu_z d_z^2`, second-order Adams-Bashforth for the rest.
//! The vertical solve carries the boundary rows `d_z v(0) = 0`, `v(-h) = 0`
//! and a surface-pressure multiplier fixed through an influence function so
//! that `div_H vbar = 0` holds exactly after every step.

use std::path::PathBuf;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

use crate::diagnostics::{record, DiagnosticsRecord};
use crate::field::{Field, FieldError, LpNorm, Repr};
use crate::grid::{Grid, GridError, VerticalOp};
use crate::hydrostatics::{boundary_residuals, project_boundary_compatible, vertical_average};
use crate::io::SnapshotError;
use crate::model::{smallness_of, ModelError, PhysicalParams, Smallness};
use crate::operator::{advection, LinearizedOp, OperatorError};

/// CFL threshold on `max|v_d| dt / min(dx, dy)`.
pub const CFL_LIMIT: f64 = 0.8;
/// Guard on `dt |f|` for the explicit rotation.
pub const ROTATION_GUARD: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StepError {
    #[error("CFL violation at step {step}: {cfl:.3} > {CFL_LIMIT}")]
    Cfl { step: u64, cfl: f64 },
    #[error("NaN detected at step {step}")]
    NaN { step: u64 },
    #[error("invariant violated at step {step}: {what} = {value:e}")]
    Invariant { step: u64, what: &'static str, value: f64 },
    #[error("invalid time step {0}")]
    InvalidDt(f64),
    #[error("horizon {horizon} shorter than dt {dt}")]
    ShortHorizon { horizon: f64, dt: f64 },
}

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("invalid configuration: {key} {constraint}")]
    Config { key: &'static str, constraint: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Operator(#[from] Box<OperatorError>),
    #[error("step {step} failed: {source}")]
    Step {
        step: u64,
        #[source]
        source: StepError,
    },
    #[error("initial snapshot: {0}")]
    Snapshot(#[from] SnapshotError),
    #[error("snapshot grid does not match the configured grid")]
    SnapshotGrid,
    #[error("output: {0}")]
    Output(#[from] std::io::Error),
}

impl From<OperatorError> for SolverError {
    fn from(e: OperatorError) -> Self {
        SolverError::Operator(Box::new(e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Nonlinear,
    /// `F = 0`: the propagator of `A`.
    Linear,
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialCondition {
    /// `v_0 - v_E` is a seeded random field (see [`Field::random`]).
    Random { seed: u64, amplitude: f64, slope: f64 },
    /// `v_0 = v_E`.
    Ekman,
    /// Full velocity `v_0` read from a snapshot file.
    Snapshot(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub dt: f64,
    pub t_end: f64,
    pub nx: usize,
    pub ny: usize,
    /// Vertical polynomial degree.
    pub nz: usize,
    /// Record diagnostics every `cadence` steps.
    pub cadence: usize,
    /// Emit a snapshot every `snapshot_every` steps; 0 disables.
    pub snapshot_every: usize,
    pub init: InitialCondition,
    pub mode: Mode,
}

impl SimConfig {
    pub fn validate(&self, params: &PhysicalParams) -> Result<(), SolverError> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(SolverError::Config {
                key: "sim.dt",
                constraint: format!("must be finite and > 0 (got {})", self.dt),
            });
        }
        if self.dt * params.f.abs() > ROTATION_GUARD {
            return Err(SolverError::Config {
                key: "sim.dt",
                constraint: format!("must satisfy dt*|f| <= {ROTATION_GUARD} (got {})", self.dt * params.f.abs()),
            });
        }
        if !(self.t_end >= self.dt) || !self.t_end.is_finite() {
            return Err(SolverError::Config {
                key: "sim.t_end",
                constraint: format!("must be finite and >= dt (got {})", self.t_end),
            });
        }
        if self.cadence == 0 {
            return Err(SolverError::Config {
                key: "sim.cadence",
                constraint: "must be >= 1".into(),
            });
        }
        if let InitialCondition::Random { amplitude, .. } = self.init {
            if !(amplitude >= 0.0) || !amplitude.is_finite() {
                return Err(SolverError::Config {
                    key: "init.amplitude",
                    constraint: format!("must be finite and >= 0 (got {amplitude})"),
                });
            }
        }
        Ok(())
    }

    /// Number of steps: `t_end / dt` rounded to the nearest integer.
    pub fn steps(&self) -> u64 {
        (self.t_end / self.dt).round().max(1.0) as u64
    }

    pub fn grid(&self, params: &PhysicalParams) -> Result<Arc<Grid>, GridError> {
        Grid::new(self.nx, self.ny, self.nz, params.l_x, params.l_y, params.h)
    }
}

/// Evolving difference field.
#[derive(Debug, Clone)]
pub struct SimState {
    /// `v_d`, spectral.
    pub v_d: Field,
    pub t: f64,
    /// Explicit tendency at the previous step, absent before the first step.
    pub prev_tendency: Option<Field>,
    pub step_index: u64,
}

impl SimState {
    pub fn new(v_d: Field) -> Self {
        Self {
            v_d: v_d.to_spectral(),
            t: 0.0,
            prev_tendency: None,
            step_index: 0,
        }
    }

    /// Full velocity `v_d + v_E`.
    pub fn full_velocity(&self, op: &LinearizedOp) -> Field {
        &self.v_d + &op.ekman_field().to_spectral()
    }
}

/// Factorized `(1 + c nu_H |k|^2) I - c nu_z D^2` with boundary rows, and
/// its influence function for the surface-pressure multiplier.
#[derive(Debug, Clone)]
struct ModeSolve {
    inv: VerticalOp,
    psi: Vec<f64>,
    psi_integral: f64,
}

impl ModeSolve {
    fn new(g: &Grid, p: &PhysicalParams, k2: f64, c: f64) -> Self {
        let nzp = g.nzp();
        let alpha = 1.0 + c * p.nu_h * k2;
        let beta = c * p.nu_z;
        let mut m = DMatrix::<f64>::from_fn(nzp, nzp, |i, j| {
            let id = if i == j { alpha } else { 0.0 };
            id - beta * g.dz2.get(i, j)
        });
        for j in 0..nzp {
            m[(0, j)] = g.dz.get(0, j);
            m[(nzp - 1, j)] = if j == nzp - 1 { 1.0 } else { 0.0 };
        }
        let inv = m.try_inverse().expect("vertical Helmholtz matrix is nonsingular");
        let inv = VerticalOp::from_matrix(&inv);
        let mut e = vec![1.0; nzp];
        e[0] = 0.0;
        e[nzp - 1] = 0.0;
        let mut psi = vec![0.0; nzp];
        inv.apply(&e, &mut psi);
        let psi_integral = psi.iter().zip(&g.weights).map(|(a, w)| a * w).sum();
        Self { inv, psi, psi_integral }
    }
}

/// One-step map with factorized vertical solves for a fixed `dt`.
#[derive(Debug, Clone)]
pub struct Stepper {
    op: LinearizedOp,
    dt: f64,
    mode: Mode,
    /// Per `(|m_x|, |m_y|)`: backward-Euler step sizes `dt/2` and `dt/4`.
    solves: Vec<[ModeSolve; 2]>,
    solve_of_mode: Vec<usize>,
}

impl Stepper {
    pub fn new(op: &LinearizedOp, dt: f64, mode: Mode) -> Result<Self, StepError> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(StepError::InvalidDt(dt));
        }
        let g = op.grid().clone();
        let p = op.params();
        let mut keys: Vec<(usize, usize)> = Vec::new();
        let mut solve_of_mode = Vec::with_capacity(g.modes());
        for mode in 0..g.modes() {
            let key = (g.mx[mode / g.ny].unsigned_abs() as usize, g.my[mode % g.ny].unsigned_abs() as usize);
            let idx = match keys.iter().position(|k| *k == key) {
                Some(i) => i,
                None => {
                    keys.push(key);
                    keys.len() - 1
                }
            };
            solve_of_mode.push(idx);
        }
        let mut k2_of_key = vec![0.0; keys.len()];
        for mode in 0..g.modes() {
            k2_of_key[solve_of_mode[mode]] = g.k2(mode);
        }
        let solves = k2_of_key
            .par_iter()
            .map(|&k2| [ModeSolve::new(&g, p, k2, 0.5 * dt), ModeSolve::new(&g, p, k2, 0.25 * dt)])
            .collect();
        Ok(Self {
            op: op.clone(),
            dt,
            mode,
            solves,
            solve_of_mode,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn op(&self) -> &LinearizedOp {
        &self.op
    }

    /// Explicit part: `-(v . grad v + w d_z v)` (nonlinear mode only) plus
    /// the Ekman coupling and rotation.
    pub fn explicit_tendency(&self, v: &Field) -> Field {
        let mut out = match self.mode {
            Mode::Nonlinear => -&advection(v, v),
            Mode::Linear => Field::zeros(v.grid(), Repr::Spectral),
        };
        self.op.coupling_into(&v.to_spectral(), &mut out);
        out
    }

    /// Solves `(I - dt/2 L) u = rhs` per mode, with boundary rows zeroed and
    /// the barotropic divergence removed by the influence function.
    fn implicit_solve(&self, rhs: &Field) -> Field {
        self.helmholtz(rhs, 0)
    }

    /// As [`Self::implicit_solve`] with `dt/2` replaced by `dt/4` when
    /// `which = 1`.
    fn helmholtz(&self, rhs: &Field, which: usize) -> Field {
        let g = self.op.grid();
        let nzp = g.nzp();
        let mut out = Field::zeros(g, Repr::Spectral);
        let mut cols: Vec<(usize, [Vec<Complex64>; 2])> = (0..g.modes())
            .into_par_iter()
            .filter_map(|mode| {
                let a = rhs.column(0, mode);
                let b = rhs.column(1, mode);
                let empty = |c: &[Complex64]| c[1..nzp - 1].iter().all(|x| x.re == 0.0 && x.im == 0.0);
                if empty(a) && empty(b) {
                    return None;
                }
                let s = &self.solves[self.solve_of_mode[mode]][which];
                let mut u = [vec![Complex64::default(); nzp], vec![Complex64::default(); nzp]];
                for (c, src) in [a, b].into_iter().enumerate() {
                    let mut r = src.to_vec();
                    r[0] = Complex64::default();
                    r[nzp - 1] = Complex64::default();
                    s.inv.apply(&r, &mut u[c]);
                }
                let (kx, ky) = g.wavevector(mode);
                let k2 = kx * kx + ky * ky;
                if k2 > 0.0 {
                    let int = |col: &[Complex64]| -> Complex64 { col.iter().zip(&g.weights).map(|(v, w)| v * *w).sum() };
                    let kv = int(&u[0]) * kx + int(&u[1]) * ky;
                    let lam = kv / (k2 * s.psi_integral);
                    for iz in 0..nzp {
                        u[0][iz] -= lam * (kx * s.psi[iz]);
                        u[1][iz] -= lam * (ky * s.psi[iz]);
                    }
                }
                Some((mode, u))
            })
            .collect();
        for (mode, u) in cols.iter_mut() {
            out.column_mut(0, *mode).copy_from_slice(&u[0]);
            out.column_mut(1, *mode).copy_from_slice(&u[1]);
        }
        out
    }

    /// `n` IMEX backward-Euler substeps of length `dt/n` (`n` is 2 or 4);
    /// `now` is the explicit tendency at `v`.
    fn euler_substeps(&self, v: &Field, now: &Field, n: usize) -> Field {
        let which = if n == 2 { 0 } else { 1 };
        let frac = self.dt / n as f64;
        let mut u = v.clone();
        for i in 0..n {
            let tendency = if i == 0 { now.clone() } else { self.explicit_tendency(&u) };
            u.axpy(frac, &tendency);
            u = self.helmholtz(&u, which);
        }
        u
    }

    /// `v + dt/2 L v + dt * explicit`.
    fn rhs(&self, v: &Field, explicit: &Field) -> Field {
        let mut r = v.clone();
        r.axpy(0.5 * self.dt, &self.op.diffusion(v));
        r.axpy(self.dt, explicit);
        r
    }

    /// Makes arbitrary data admissible. Data already satisfying the boundary
    /// conditions gets the boundary-compatible projection; otherwise one
    /// backward-Euler half step `(I - dt/2 L) u = v` with the boundary rows
    /// and the barotropic constraint is applied. Returns the new field and
    /// whether smoothing was used.
    pub fn prepare_initial(&self, v: &Field) -> (Field, bool) {
        let s = v.to_spectral();
        let (top, bottom) = boundary_residuals(&s);
        let tol = 1e-8 * (1.0 + s.l2_norm());
        if top <= tol && bottom <= tol {
            (project_boundary_compatible(&s), false)
        } else {
            (self.implicit_solve(&s), true)
        }
    }

    /// Advances `state` by one step. The first step, which has no
    /// Adams-Bashforth history, is Richardson-extrapolated IMEX backward
    /// Euler: twice four quarter steps minus two half steps.
    pub fn step(&self, state: &mut SimState) -> Result<(), StepError> {
        let step = state.step_index + 1;
        let v = &state.v_d;
        let now = self.explicit_tendency(v);
        let next = match &state.prev_tendency {
            Some(prev) => {
                let mut ab = now.scale(1.5);
                ab.axpy(-0.5, prev);
                self.implicit_solve(&self.rhs(v, &ab))
            }
            None => {
                // 2 E(dt/4)^4 - E(dt/2)^2 for backward-Euler substeps E:
                // second order, and it damps the stiff vertical modes that
                // Crank-Nicolson leaves nearly undamped like 4/(dt lambda)^2
                let quarter = self.euler_substeps(v, &now, 4);
                let half = self.euler_substeps(v, &now, 2);
                let mut u = quarter.scale(2.0);
                u.axpy(-1.0, &half);
                u
            }
        };
        if !next.is_finite() {
            return Err(StepError::NaN { step });
        }
        let norm = next.l2_norm();
        let div = vertical_average(&next).divergence_norm();
        if div > 1e-9 * (1.0 + norm) {
            return Err(StepError::Invariant {
                step,
                what: "div_H vbar",
                value: div,
            });
        }
        let (top, bottom) = boundary_residuals(&next);
        let btol = 1e-8 * (1.0 + norm);
        if top > btol || bottom > btol {
            return Err(StepError::Invariant {
                step,
                what: "boundary residual",
                value: top.max(bottom),
            });
        }
        if self.mode == Mode::Nonlinear {
            let cfl = next.lp_norm(LpNorm::Inf) * self.dt / self.op.grid().min_horizontal_spacing();
            if cfl > CFL_LIMIT {
                return Err(StepError::Cfl { step, cfl });
            }
        }
        state.prev_tendency = Some(now);
        state.v_d = next;
        state.t = step as f64 * self.dt;
        state.step_index = step;
        Ok(())
    }

    /// Applies `steps` steps from a fresh state (no preparation).
    pub fn propagate(&self, v: &Field, steps: usize) -> Result<Field, StepError> {
        let mut state = SimState::new(v.clone());
        for _ in 0..steps {
            self.step(&mut state)?;
        }
        Ok(state.v_d)
    }
}

/// Evolves `v` under `d_t v = A v` over `horizon` with the linear stepper,
/// using `ceil(horizon/dt)` equal steps.
pub fn propagate_linear(op: &LinearizedOp, v: &Field, horizon: f64, dt: f64) -> Result<Field, StepError> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(StepError::InvalidDt(dt));
    }
    if !(horizon >= dt * (1.0 - 1e-12)) {
        return Err(StepError::ShortHorizon { horizon, dt });
    }
    let steps = ((horizon / dt) - 1e-9).ceil().max(1.0) as usize;
    let stepper = Stepper::new(op, horizon / steps as f64, Mode::Linear)?;
    stepper.propagate(v, steps)
}

/// Events passed to the [`simulate_with`] observer.
pub enum Event<'a> {
    Record(&'a DiagnosticsRecord),
    Snapshot(&'a SimState),
}

/// Outcome of a run.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub records: Vec<DiagnosticsRecord>,
    pub final_state: SimState,
    pub smallness: Smallness,
    /// Initial data needed the half-step smoothing.
    pub smoothed_initial: bool,
    pub op: LinearizedOp,
}

/// Builds the initial difference field for `cfg`.
pub fn initial_difference(cfg: &SimConfig, op: &LinearizedOp) -> Result<Field, SolverError> {
    let g = op.grid();
    Ok(match &cfg.init {
        InitialCondition::Random { seed, amplitude, slope } => Field::random(g, *seed, *amplitude, *slope)?,
        InitialCondition::Ekman => Field::zeros(g, Repr::Spectral),
        InitialCondition::Snapshot(path) => {
            let (v, _t) = crate::io::read_snapshot(path)?;
            if !v.grid().same_shape(g) {
                return Err(SolverError::SnapshotGrid);
            }
            let v = Field::from_parts(g, [v.comp(0).to_vec(), v.comp(1).to_vec()], v.repr());
            &v.to_spectral() - &op.ekman_field().to_spectral()
        }
    })
}

/// Runs `cfg`, reporting records and snapshots to `observer` as they are
/// produced.
pub fn simulate_with(
    cfg: &SimConfig,
    params: &PhysicalParams,
    mut observer: impl FnMut(Event<'_>) -> std::io::Result<()>,
) -> Result<Trajectory, SolverError> {
    params.validate()?;
    cfg.validate(params)?;
    let grid = cfg.grid(params)?;
    let op = LinearizedOp::new(params, &grid)?;
    let smallness = smallness_of(op.ekman());
    if cfg.mode == Mode::Nonlinear && !smallness.stable {
        log::warn!("C_E = {} >= 1: outside the proven stability regime", smallness.c_e);
    }
    let stepper = Stepper::new(&op, cfg.dt, cfg.mode).map_err(|source| SolverError::Step { step: 0, source })?;
    let (v0, smoothed) = stepper.prepare_initial(&initial_difference(cfg, &op)?);
    let mut state = SimState::new(v0);
    let mut records = Vec::new();
    let first = record(&state.v_d, 0.0);
    observer(Event::Record(&first))?;
    records.push(first);
    let steps = cfg.steps();
    for n in 1..=steps {
        stepper
            .step(&mut state)
            .map_err(|source| SolverError::Step { step: n, source })?;
        if n % cfg.cadence as u64 == 0 || n == steps {
            let r = record(&state.v_d, state.t);
            observer(Event::Record(&r))?;
            records.push(r);
        }
        if cfg.snapshot_every > 0 && n % cfg.snapshot_every as u64 == 0 {
            observer(Event::Snapshot(&state))?;
        }
    }
    Ok(Trajectory {
        records,
        final_state: state,
        smallness,
        smoothed_initial: smoothed,
        op,
    })
}

/// [`simulate_with`] without an observer.
pub fn simulate(cfg: &SimConfig, params: &PhysicalParams) -> Result<Trajectory, SolverError> {
    simulate_with(cfg, params, |_| Ok(()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn params() -> PhysicalParams {
        PhysicalParams {
            nu_h: 1.0,
            nu_z: 1.0,
            f: 1.0,
            rho0: 1000.0,
            g: 9.81,
            h: 1.0,
            tau: [0.1, 0.0],
            v_g: [0.0, 0.05],
            l_x: 2.0 * PI,
            l_y: 2.0 * PI,
        }
    }

    fn cfg() -> SimConfig {
        SimConfig {
            dt: 0.01,
            t_end: 0.1,
            nx: 8,
            ny: 8,
            nz: 16,
            cadence: 1,
            snapshot_every: 0,
            init: InitialCondition::Random {
                seed: 3,
                amplitude: 0.1,
                slope: 1.0,
            },
            mode: Mode::Nonlinear,
        }
    }

    #[test]
    fn zero_is_a_fixed_point() {
        let mut c = cfg();
        c.init = InitialCondition::Ekman;
        let tr = simulate(&c, &params()).unwrap();
        assert!(tr.final_state.v_d.is_zero());
        assert!(tr.records.iter().all(|r| r.h1 == 0.0));
    }

    #[test]
    fn invariants_hold_along_a_run() {
        let tr = simulate(&cfg(), &params()).unwrap();
        assert_eq!(tr.records.len(), 11);
        let v = &tr.final_state.v_d;
        assert!(vertical_average(v).divergence_norm() < 1e-12);
        let (top, bottom) = boundary_residuals(v);
        assert!(top < 1e-9 && bottom < 1e-12);
        assert!(!tr.smoothed_initial);
    }

    #[test]
    fn config_guards() {
        let p = params();
        let mut c = cfg();
        c.dt = 0.6;
        c.t_end = 1.0;
        assert!(matches!(c.validate(&p), Err(SolverError::Config { key: "sim.dt", .. })));
        let mut c = cfg();
        c.t_end = 0.001;
        assert!(matches!(c.validate(&p), Err(SolverError::Config { key: "sim.t_end", .. })));
        let mut c = cfg();
        c.cadence = 0;
        assert!(matches!(c.validate(&p), Err(SolverError::Config { key: "sim.cadence", .. })));
    }

    #[test]
    fn cfl_violation_is_reported() {
        let mut c = cfg();
        c.dt = 0.5;
        c.t_end = 1.0;
        c.init = InitialCondition::Random {
            seed: 1,
            amplitude: 50.0,
            slope: 1.0,
        };
        let err = simulate(&c, &params()).unwrap_err();
        assert!(matches!(err, SolverError::Step { step: 1, source: StepError::Cfl { .. } }), "{err}");
    }

    #[test]
    fn rough_data_is_smoothed() {
        let p = params();
        let g = cfg().grid(&p).unwrap();
        let op = LinearizedOp::new(&p, &g).unwrap();
        let st = Stepper::new(&op, 0.01, Mode::Linear).unwrap();
        let rough = Field::from_fn(&g, |x, _, _| [x.sin(), 1.0]);
        let (v, smoothed) = st.prepare_initial(&rough);
        assert!(smoothed);
        let (top, bottom) = boundary_residuals(&v);
        assert!(top < 1e-9 && bottom < 1e-13);
        assert!(vertical_average(&v).divergence_norm() < 1e-12);
    }

    #[test]
    fn linear_propagation_is_linear() {
        let p = params();
        let g = cfg().grid(&p).unwrap();
        let op = LinearizedOp::new(&p, &g).unwrap();
        let st = Stepper::new(&op, 0.01, Mode::Linear).unwrap();
        let a = st.prepare_initial(&Field::random(&g, 1, 1.0, 1.0).unwrap()).0;
        let b = st.prepare_initial(&Field::random(&g, 2, 1.0, 1.0).unwrap()).0;
        let lhs = propagate_linear(&op, &(&a.scale(2.0) + &b.scale(-3.0)), 0.2, 0.01).unwrap();
        let rhs = &propagate_linear(&op, &a, 0.2, 0.01).unwrap().scale(2.0) + &propagate_linear(&op, &b, 0.2, 0.01).unwrap().scale(-3.0);
        assert!((&lhs - &rhs).l2_norm() <= 1e-11 * lhs.l2_norm());
        assert!(propagate_linear(&op, &Field::zeros(&g, Repr::Spectral), 0.2, 0.01).unwrap().is_zero());
        assert!(matches!(propagate_linear(&op, &a, 0.001, 0.01), Err(StepError::ShortHorizon { .. })));
    }
}
