//! Subcommands of the `ekman` binary. Each command writes its report to the
//! given writer and returns the process exit code; errors are classified by
//! [`exit_code`].
//!
//! Exit codes: 0 success or PASS, 1 validation (bad config, bad flags, a
//! FAIL verdict from `check`), 2 runtime (I/O, solver or invariant failure),
//! 3 Arnoldi not converged.

use std::io::Write;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use ekman_core::config::{load_run_config, validate_spectrum, ConfigError, RunConfig};
use ekman_core::diagnostics::record;
use ekman_core::hydrostatics::{
    baroclinic_part, boundary_residuals, project_boundary_compatible, recover_pressure, reconstruct_w, steady_residual,
    vertical_average,
};
use ekman_core::io::{
    decode_snapshot, encode_snapshot, ekman_csv, write_atomic, write_snapshot, Manifest, OutputLock, SeriesWriter,
};
use ekman_core::model::{ekman_coefficients, layer_thickness, smallness_of, sup_derivative_bound};
use ekman_core::operator::{apply_A, estimate_spectral_bound, ArnoldiOptions, LinearizedOp, OperatorError, SpectralBound};
use ekman_core::solver::{simulate_with, Event, InitialCondition, Mode, SimState, SolverError, Stepper};
use ekman_core::{Field, Repr};
use thiserror::Error;

pub const EXIT_OK: u8 = 0;
pub const EXIT_VALIDATION: u8 = 1;
pub const EXIT_RUNTIME: u8 = 2;
pub const EXIT_NOT_CONVERGED: u8 = 3;

/// CLI-level failures not covered by the library error types.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("--samples must be >= 2 (got {0})")]
    Samples(usize),
    #[error("PE_THREADS must be a positive integer (got \"{0}\")")]
    Threads(String),
    #[error("{0} invariant check(s) failed")]
    Verify(usize),
}

/// Maps an error chain to the documented exit code.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<ConfigError>() {
            return EXIT_VALIDATION;
        }
        if let Some(e) = cause.downcast_ref::<CliError>() {
            return match e {
                CliError::Verify(_) => EXIT_RUNTIME,
                _ => EXIT_VALIDATION,
            };
        }
        if let Some(e) = cause.downcast_ref::<OperatorError>() {
            match e {
                OperatorError::NotConverged { .. } => return EXIT_NOT_CONVERGED,
                OperatorError::InvalidArnoldi(_) | OperatorError::Model(_) | OperatorError::GeometryMismatch { .. } => {
                    return EXIT_VALIDATION
                }
                _ => {}
            }
        }
        if let Some(SolverError::Config { .. } | SolverError::Model(_)) = cause.downcast_ref::<SolverError>() {
            return EXIT_VALIDATION;
        }
    }
    EXIT_RUNTIME
}

/// Sizes the global rayon pool from `PE_THREADS` (unset: rayon default).
pub fn configure_threads(value: Option<&str>) -> Result<()> {
    let Some(raw) = value else { return Ok(()) };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Threads(raw.to_string()))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .context("configuring the thread pool")
}

/// Optional overrides from the command line.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub horizon: Option<f64>,
    pub krylov: Option<usize>,
    pub tol: Option<f64>,
    pub seed: Option<u64>,
}

fn load(config: &Path, ov: &Overrides) -> Result<RunConfig> {
    let mut c = load_run_config(config)?;
    if let Some(h) = ov.horizon {
        c.spectrum.horizon = h;
    }
    if let Some(k) = ov.krylov {
        c.spectrum.krylov = k;
    }
    if let Some(t) = ov.tol {
        c.spectrum.tol = t;
    }
    if let Some(s) = ov.seed {
        c.spectrum.seed = s;
        if let InitialCondition::Random { seed, .. } = &mut c.sim.init {
            *seed = s;
        }
    }
    Ok(c)
}

fn unix_time() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

/// Prints the spiral coefficients and the smallness verdict.
pub fn cmd_check(config: &Path, out: &mut dyn Write) -> Result<u8> {
    let c = load(config, &Overrides::default())?;
    let d = layer_thickness(&c.physics).map_err(ConfigError::Model)?;
    let sol = ekman_coefficients(&c.physics).map_err(ConfigError::Model)?;
    let s = smallness_of(&sol);
    writeln!(out, "d = {d:e}")?;
    for (i, k) in sol.k.iter().enumerate() {
        writeln!(out, "k{} = {k:e}", i + 1)?;
    }
    writeln!(out, "sup_derivative_bound = {:e}", sup_derivative_bound(&sol))?;
    writeln!(out, "C_E = {:e}", s.c_e)?;
    if s.stable {
        writeln!(out, "PASS: C_E < 1")?;
        Ok(EXIT_OK)
    } else {
        writeln!(out, "FAIL: C_E >= 1")?;
        Ok(EXIT_VALIDATION)
    }
}

/// Writes the sampled spiral to `path`.
pub fn cmd_ekman(config: &Path, samples: usize, path: &Path, out: &mut dyn Write) -> Result<u8> {
    if samples < 2 {
        return Err(CliError::Samples(samples).into());
    }
    let c = load(config, &Overrides::default())?;
    let sol = ekman_coefficients(&c.physics).map_err(ConfigError::Model)?;
    write_atomic(path, ekman_csv(&sol, samples).as_bytes()).with_context(|| format!("writing {}", path.display()))?;
    writeln!(out, "wrote {samples} rows to {}", path.display())?;
    Ok(EXIT_OK)
}

fn snapshot_name(step: u64) -> String {
    format!("snapshot_{step:08}.pesn")
}

/// Runs the simulation into `dir`: `series.csv`, periodic snapshots,
/// `final.pesn`, then `manifest.txt`.
pub fn cmd_simulate(config: &Path, dir: &Path, ov: &Overrides, out: &mut dyn Write) -> Result<u8> {
    let c = load(config, ov)?;
    let started = unix_time();
    let _lock = OutputLock::acquire(dir).with_context(|| format!("locking {}", dir.display()))?;
    let manifest_path = dir.join("manifest.txt");
    if manifest_path.exists() {
        std::fs::remove_file(&manifest_path).with_context(|| format!("removing stale {}", manifest_path.display()))?;
    }
    let grid = c.sim.grid(&c.physics).map_err(SolverError::from)?;
    let ekman = LinearizedOp::new(&c.physics, &grid)?.ekman_field().to_physical();
    let mut series = SeriesWriter::create(&dir.join("series.csv")).context("creating series.csv")?;
    let mut snapshot_error = None;
    let result = simulate_with(&c.sim, &c.physics, |event| match event {
        Event::Record(r) => series.write(r),
        Event::Snapshot(s) => write_snapshot(&(&s.v_d.to_physical() + &ekman), s.t, &dir.join(snapshot_name(s.step_index)))
            .map_err(|e| {
                let msg = e.to_string();
                snapshot_error = Some(e);
                std::io::Error::other(msg)
            }),
    });
    let mut m = Manifest::default();
    for (k, v) in &c.echo {
        m.push(format!("config.{k}"), v);
    }
    m.push("code_version", env!("CARGO_PKG_VERSION"));
    let seed = match c.sim.init {
        InitialCondition::Random { seed, .. } => seed.to_string(),
        _ => "none".into(),
    };
    m.push("seed", seed);
    m.push("started_unix", started);
    match result {
        Ok(tr) => {
            let full_v = &tr.final_state.v_d.to_physical() + &ekman;
            write_snapshot(&full_v, tr.final_state.t, &dir.join("final.pesn"))?;
            m.push("c_e", format!("{:e}", tr.smallness.c_e));
            m.push("c_e_lt_1", tr.smallness.stable);
            m.push("omega0", "not computed");
            m.push("smoothed_initial", tr.smoothed_initial);
            m.push("steps", tr.final_state.step_index);
            m.push("records", tr.records.len());
            m.push("status", "completed");
            m.push("finished_unix", unix_time());
            m.write(&manifest_path)?;
            let last = tr.records.last().expect("at least the initial record");
            writeln!(
                out,
                "completed {} steps, t = {}, ||v_d||_H1 = {:e}, C_E = {:e}",
                tr.final_state.step_index, tr.final_state.t, last.h1, tr.smallness.c_e
            )?;
            Ok(EXIT_OK)
        }
        Err(e) => {
            if let Some(se) = snapshot_error {
                return Err(se.into());
            }
            if let SolverError::Step { step, .. } = &e {
                m.push("failed_step", step);
            }
            m.push("status", "failed");
            m.push("error", &e);
            m.push("finished_unix", unix_time());
            m.write(&manifest_path)?;
            Err(e.into())
        }
    }
}

fn print_bound(out: &mut dyn Write, b: &SpectralBound) -> std::io::Result<()> {
    writeln!(out, "omega0 = {:e}", b.omega0)?;
    writeln!(out, "ritz = {:e} {:+e}i", b.ritz.re, b.ritz.im)?;
    writeln!(out, "ritz_residual = {:e}", b.residual)?;
    writeln!(out, "horizon = {}", b.horizon)?;
    writeln!(out, "dt = {:e} ({} steps)", b.dt, b.steps_per_horizon)?;
    writeln!(out, "krylov_dim = {}", b.krylov_dim)?;
    writeln!(out, "iterations = {}", b.iterations)?;
    writeln!(out, "complex_pair = {}", b.complex_pair)
}

/// Estimates the spectral bound of the linearization on the config grid.
pub fn cmd_spectrum(config: &Path, ov: &Overrides, out: &mut dyn Write) -> Result<u8> {
    let c = load(config, ov)?;
    validate_spectrum(&c.spectrum, &c.physics)?;
    let grid = c.sim.grid(&c.physics).map_err(SolverError::from)?;
    let op = LinearizedOp::new(&c.physics, &grid)?;
    let opts = ArnoldiOptions {
        horizon: c.spectrum.horizon,
        krylov_dim: c.spectrum.krylov,
        tol: c.spectrum.tol,
        dt: c.spectrum.dt,
        seed: c.spectrum.seed,
    };
    match estimate_spectral_bound(&op, &opts) {
        Ok(b) => {
            print_bound(out, &b)?;
            writeln!(out, "converged")?;
            Ok(EXIT_OK)
        }
        Err(OperatorError::NotConverged { bound, tol }) => {
            print_bound(out, &bound)?;
            writeln!(out, "not converged (tol {tol:e})")?;
            Err(OperatorError::NotConverged { bound, tol }.into())
        }
        Err(e) => Err(e.into()),
    }
}

struct Checks<'a> {
    out: &'a mut dyn Write,
    failed: usize,
}

impl Checks<'_> {
    fn report(&mut self, name: &str, pass: bool, detail: String) -> std::io::Result<()> {
        if !pass {
            self.failed += 1;
        }
        writeln!(self.out, "{} {name}: {detail}", if pass { "PASS" } else { "FAIL" })
    }
}

/// Runs the invariant suite at the config's grid and parameters.
pub fn cmd_verify(config: &Path, ov: &Overrides, out: &mut dyn Write) -> Result<u8> {
    let c = load(config, ov)?;
    let grid = c.sim.grid(&c.physics).map_err(SolverError::from)?;
    let op = LinearizedOp::new(&c.physics, &grid)?;
    let p = &c.physics;
    let mut ck = Checks { out, failed: 0 };
    let seed = match c.sim.init {
        InitialCondition::Random { seed, .. } => seed,
        _ => c.spectrum.seed,
    };

    let ve = op.ekman_field().to_spectral();
    let w = reconstruct_w(&ve);
    let pressure = recover_pressure(&ve, p)?;
    let res = steady_residual(&ve, &w, &pressure.to_field(), p);
    let vmax = ve.lp_norm(ekman_core::LpNorm::Inf);
    ck.report(
        "equilibrium residual",
        res.max() <= 1e-7 * (1.0 + vmax),
        format!("{:e} (momentum {:e})", res.max(), res.momentum),
    )?;

    let (mut jensen, mut poincare, mut ortho) = (f64::INFINITY, f64::INFINITY, 0.0f64);
    for s in 0..20 {
        let v = project_boundary_compatible(&Field::random(&grid, seed.wrapping_add(s), 1.0, 1.0)?);
        let r = record(&v, 0.0);
        jensen = jensen.min(r.jensen_slack);
        poincare = poincare.min(r.poincare_slack);
        let inner = vertical_average(&v).broadcast().inner(&baroclinic_part(&v));
        ortho = ortho.max(inner.abs() / v.l2_norm().powi(2));
    }
    ck.report("Jensen slack", jensen >= -1e-10, format!("min {jensen:e}"))?;
    ck.report("Poincare slack", poincare >= -1e-10, format!("min {poincare:e}"))?;
    ck.report("barotropic/baroclinic orthogonality", ortho <= 1e-10, format!("max {ortho:e}"))?;

    let v = project_boundary_compatible(&Field::random(&grid, seed, 1.0, 1.0)?);
    let form = apply_A(&op, &v).inner(&v);
    let stable = smallness_of(op.ekman()).stable;
    ck.report(
        "energy form <Av, v>",
        !stable || form < 0.0,
        format!("{form:e} (C_E < 1: {stable})"),
    )?;

    let stepper = Stepper::new(&op, c.sim.dt, c.sim.mode)?;
    let mut zero = SimState::new(Field::zeros(&grid, Repr::Spectral));
    let mut drift = 0.0f64;
    for _ in 0..10 {
        stepper.step(&mut zero)?;
        drift = drift.max(zero.v_d.l2_norm());
    }
    ck.report("fixed point", drift <= 1e-13, format!("max ||v_d|| {drift:e} over 10 steps"))?;

    let mut state = SimState::new(stepper.prepare_initial(&Field::random(&grid, seed, 0.1, 1.0)?).0);
    let mut worst_div = 0.0f64;
    let mut worst_bc = 0.0f64;
    let mut energy_ok = true;
    let mut prev = state.v_d.l2_norm().powi(2);
    for _ in 0..10 {
        stepper.step(&mut state)?;
        let n = state.v_d.l2_norm();
        worst_div = worst_div.max(vertical_average(&state.v_d).divergence_norm() / (1.0 + n));
        let (top, bottom) = boundary_residuals(&state.v_d);
        worst_bc = worst_bc.max(top.max(bottom) / (1.0 + n));
        energy_ok &= n * n <= prev * (1.0 + 1e-10);
        prev = n * n;
    }
    ck.report("div_H vbar after steps", worst_div <= 1e-9, format!("{worst_div:e}"))?;
    ck.report("boundary residuals after steps", worst_bc <= 1e-8, format!("{worst_bc:e}"))?;
    if stable && c.sim.mode == Mode::Nonlinear {
        ck.report("energy monotone", energy_ok, "10 steps".into())?;
    }

    let phys = state.v_d.to_physical();
    let (back, t) = decode_snapshot(&encode_snapshot(&phys, state.t))?;
    let bits = |f: &Field| f.physical_values().map(|c| c.iter().map(|x| x.to_bits()).collect::<Vec<_>>());
    ck.report(
        "snapshot round trip",
        bits(&phys) == bits(&back) && t.to_bits() == state.t.to_bits(),
        "bit-exact comparison".into(),
    )?;

    let failed = ck.failed;
    writeln!(ck.out, "{} failed", failed)?;
    if failed > 0 {
        return Err(CliError::Verify(failed).into());
    }
    Ok(EXIT_OK)
}
