//! Plain-text run configuration: `section.key = value` lines, `#` comments.
//!
//! ```text
//! physics.nu_h = 1.0      # m^2/s
//! physics.nu_z = 1.0      # m^2/s
//! physics.f = 1.0         # 1/s, nonzero
//! physics.rho0 = 1000     # kg/m^3
//! physics.g = 9.81        # m/s^2
//! physics.h = 1.0         # m
//! physics.tau1 = 0.1      # surface shear dv1/dz (1/s)
//! physics.tau2 = 0.0
//! physics.vg1 = 0.0       # geostrophic velocity (m/s)
//! physics.vg2 = 0.0
//! physics.lx = 6.283185307179586
//! physics.ly = 6.283185307179586
//! sim.dt = 0.005
//! sim.t_end = 1.0
//! sim.nx = 16
//! sim.ny = 16
//! sim.nz = 24             # vertical polynomial degree
//! sim.cadence = 10        # optional, default 1
//! sim.snapshot_every = 0  # optional, default 0 (off)
//! sim.mode = nonlinear    # optional: nonlinear | linear
//! init.kind = random      # random | ekman | snapshot
//! init.seed = 42          # random: optional, default 0
//! init.amplitude = 0.05   # random: required
//! init.slope = 1.0        # random: optional, default 1
//! init.path = v0.pesn     # snapshot: required, relative to this file
//! spectrum.horizon = 1.0  # optional, default 1/|f|
//! spectrum.krylov = 20    # optional
//! spectrum.tol = 1e-6     # optional
//! spectrum.dt = 0.005     # optional, default sim.dt
//! spectrum.seed = 0       # optional
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::model::{ModelError, PhysicalParams};
use crate::solver::{InitialCondition, Mode, SimConfig, SolverError};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: unknown key \"{key}\"")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: duplicate key \"{key}\"")]
    DuplicateKey { line: usize, key: String },
    #[error("missing required key \"{0}\"")]
    Missing(&'static str),
    #[error("invalid value for {key}: {constraint}")]
    Invalid { key: String, constraint: String },
    #[error(transparent)]
    Model(ModelError),
}

const KEYS: &[&str] = &[
    "physics.nu_h",
    "physics.nu_z",
    "physics.f",
    "physics.rho0",
    "physics.g",
    "physics.h",
    "physics.tau1",
    "physics.tau2",
    "physics.vg1",
    "physics.vg2",
    "physics.lx",
    "physics.ly",
    "sim.dt",
    "sim.t_end",
    "sim.nx",
    "sim.ny",
    "sim.nz",
    "sim.cadence",
    "sim.snapshot_every",
    "sim.mode",
    "init.kind",
    "init.seed",
    "init.amplitude",
    "init.slope",
    "init.path",
    "spectrum.horizon",
    "spectrum.krylov",
    "spectrum.tol",
    "spectrum.dt",
    "spectrum.seed",
];

/// Settings for the spectral-bound estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumConfig {
    pub horizon: f64,
    pub krylov: usize,
    pub tol: f64,
    pub dt: f64,
    pub seed: u64,
}

/// Everything a config file defines.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub physics: PhysicalParams,
    pub sim: SimConfig,
    pub spectrum: SpectrumConfig,
    /// Raw `key = value` pairs in key order, for the manifest echo.
    pub echo: Vec<(String, String)>,
}

struct Raw {
    values: BTreeMap<&'static str, (usize, String)>,
}

impl Raw {
    fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut values = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let content = line.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| ConfigError::Parse {
                line: line_no,
                message: format!("expected key = value, found \"{content}\""),
            })?;
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() || value.is_empty() {
                return Err(ConfigError::Parse {
                    line: line_no,
                    message: "empty key or value".into(),
                });
            }
            let known = KEYS.iter().find(|k| **k == key).ok_or_else(|| ConfigError::UnknownKey {
                line: line_no,
                key: key.to_string(),
            })?;
            if values.insert(*known, (line_no, value.to_string())).is_some() {
                return Err(ConfigError::DuplicateKey {
                    line: line_no,
                    key: key.to_string(),
                });
            }
        }
        Ok(Self { values })
    }

    fn get<T: std::str::FromStr>(&self, key: &'static str) -> Result<Option<T>, ConfigError> {
        match self.values.get(key) {
            None => Ok(None),
            Some((line, v)) => v.parse::<T>().map(Some).map_err(|_| ConfigError::Parse {
                line: *line,
                message: format!("cannot parse \"{v}\" for {key}"),
            }),
        }
    }

    fn req<T: std::str::FromStr>(&self, key: &'static str) -> Result<T, ConfigError> {
        self.get(key)?.ok_or(ConfigError::Missing(key))
    }
}

fn model_key(name: &str) -> String {
    let short = match name {
        "l_x" => "lx",
        "l_y" => "ly",
        other => other,
    };
    format!("physics.{short}")
}

/// Parses and validates config text; relative snapshot paths resolve
/// against `base`.
pub fn parse_config(text: &str, base: &Path) -> Result<RunConfig, ConfigError> {
    let raw = Raw::parse(text)?;
    let physics = PhysicalParams {
        nu_h: raw.req("physics.nu_h")?,
        nu_z: raw.req("physics.nu_z")?,
        f: raw.req("physics.f")?,
        rho0: raw.req("physics.rho0")?,
        g: raw.req("physics.g")?,
        h: raw.req("physics.h")?,
        tau: [raw.req("physics.tau1")?, raw.req("physics.tau2")?],
        v_g: [raw.req("physics.vg1")?, raw.req("physics.vg2")?],
        l_x: raw.req("physics.lx")?,
        l_y: raw.req("physics.ly")?,
    };
    physics.validate().map_err(|e| match e {
        ModelError::Invalid { name, constraint, value } => ConfigError::Invalid {
            key: model_key(name),
            constraint: format!("{constraint} (got {value})"),
        },
        other => ConfigError::Model(other),
    })?;

    let mode = match raw.get::<String>("sim.mode")?.as_deref() {
        None | Some("nonlinear") => Mode::Nonlinear,
        Some("linear") => Mode::Linear,
        Some(other) => {
            return Err(ConfigError::Invalid {
                key: "sim.mode".into(),
                constraint: format!("must be nonlinear or linear (got {other})"),
            })
        }
    };
    let init = match raw.req::<String>("init.kind")?.as_str() {
        "random" => InitialCondition::Random {
            seed: raw.get("init.seed")?.unwrap_or(0),
            amplitude: raw.req("init.amplitude")?,
            slope: raw.get("init.slope")?.unwrap_or(1.0),
        },
        "ekman" => InitialCondition::Ekman,
        "snapshot" => {
            let p: String = raw.req("init.path")?;
            InitialCondition::Snapshot(base.join(p))
        }
        other => {
            return Err(ConfigError::Invalid {
                key: "init.kind".into(),
                constraint: format!("must be random, ekman or snapshot (got {other})"),
            })
        }
    };
    let sim = SimConfig {
        dt: raw.req("sim.dt")?,
        t_end: raw.req("sim.t_end")?,
        nx: raw.req("sim.nx")?,
        ny: raw.req("sim.ny")?,
        nz: raw.req("sim.nz")?,
        cadence: raw.get("sim.cadence")?.unwrap_or(1),
        snapshot_every: raw.get("sim.snapshot_every")?.unwrap_or(0),
        init,
        mode,
    };
    sim.validate(&physics).map_err(|e| match e {
        SolverError::Config { key, constraint } => ConfigError::Invalid {
            key: key.into(),
            constraint,
        },
        other => ConfigError::Invalid {
            key: "sim".into(),
            constraint: other.to_string(),
        },
    })?;
    for (key, n, min) in [("sim.nx", sim.nx, 8), ("sim.ny", sim.ny, 8)] {
        if n < min || n % 2 != 0 {
            return Err(ConfigError::Invalid {
                key: key.into(),
                constraint: format!("must be even and >= {min} (got {n})"),
            });
        }
    }
    if sim.nz < 16 {
        return Err(ConfigError::Invalid {
            key: "sim.nz".into(),
            constraint: format!("must be >= 16 (got {})", sim.nz),
        });
    }

    let spectrum = SpectrumConfig {
        horizon: raw.get("spectrum.horizon")?.unwrap_or(1.0 / physics.f.abs()),
        krylov: raw.get("spectrum.krylov")?.unwrap_or(20),
        tol: raw.get("spectrum.tol")?.unwrap_or(1e-6),
        dt: raw.get("spectrum.dt")?.unwrap_or(sim.dt),
        seed: raw.get("spectrum.seed")?.unwrap_or(0),
    };
    validate_spectrum(&spectrum, &physics)?;
    let echo = raw.values.iter().map(|(k, (_, v))| (k.to_string(), v.clone())).collect();
    Ok(RunConfig {
        physics,
        sim,
        spectrum,
        echo,
    })
}

/// Checks the Arnoldi settings.
pub fn validate_spectrum(s: &SpectrumConfig, physics: &PhysicalParams) -> Result<(), ConfigError> {
    let bad = |key: &str, constraint: String| {
        Err(ConfigError::Invalid {
            key: key.into(),
            constraint,
        })
    };
    if !(s.horizon > 0.0) || !s.horizon.is_finite() {
        return bad("spectrum.horizon", format!("must be finite and > 0 (got {})", s.horizon));
    }
    if s.krylov < 2 {
        return bad("spectrum.krylov", format!("must be >= 2 (got {})", s.krylov));
    }
    if !(s.tol > 0.0) {
        return bad("spectrum.tol", format!("must be > 0 (got {})", s.tol));
    }
    if !(s.dt > 0.0) || s.dt > s.horizon || s.dt * physics.f.abs() > crate::solver::ROTATION_GUARD {
        return bad(
            "spectrum.dt",
            format!("must be in (0, horizon] with dt*|f| <= 0.5 (got {})", s.dt),
        );
    }
    Ok(())
}

/// Reads and validates a config file.
pub fn load_run_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text, path.parent().unwrap_or(Path::new(".")))
}

/// Physical parameters and simulation settings of a config file.
pub fn load_config(path: &Path) -> Result<(PhysicalParams, SimConfig), ConfigError> {
    let c = load_run_config(path)?;
    Ok((c.physics, c.sim))
}
