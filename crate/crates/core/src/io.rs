//! Persistence: binary field snapshots, CSV series, run manifests, and the
//! output-directory lock.
//!
//! Snapshot layout (little-endian): `b"PESN"`, `u32` version 1, `u32` nx,
//! ny, nz (vertical degree), `f64` lx, ly, h, t, then component 1 and
//! component 2 as physical `f64` arrays in `(ix, iy, iz)` order, `z` fastest.

use std::fs::{self, File, OpenOptions};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use thiserror::Error;

use crate::diagnostics::DiagnosticsRecord;
use crate::field::Field;
use crate::grid::{Grid, GridError};
use crate::model::EkmanSolution;

pub const SNAPSHOT_MAGIC: &[u8; 4] = b"PESN";
pub const SNAPSHOT_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 * 4 + 4 * 8;

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("not a PESN file")]
    NotPesn,
    #[error("unsupported version {0}")]
    UnsupportedVersion(u32),
    #[error("truncated file: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("dimension overflow: {nx} x {ny} x {nz}")]
    DimensionOverflow { nx: u32, ny: u32, nz: u32 },
    #[error("invalid grid in snapshot: {0}")]
    Grid(#[from] GridError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> SnapshotError + '_ {
    move |source| SnapshotError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Serializes `v` at time `t`.
pub fn encode_snapshot(v: &Field, t: f64) -> Vec<u8> {
    let g = v.grid();
    let [a, b] = v.physical_values();
    let mut out = Vec::with_capacity(HEADER_LEN + 16 * g.len());
    out.extend_from_slice(SNAPSHOT_MAGIC);
    for x in [SNAPSHOT_VERSION, g.nx as u32, g.ny as u32, g.nz as u32] {
        out.extend_from_slice(&x.to_le_bytes());
    }
    for x in [g.lx, g.ly, g.h, t] {
        out.extend_from_slice(&x.to_le_bytes());
    }
    for x in a.iter().chain(&b) {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

/// Parses a snapshot into a physical field and its time.
pub fn decode_snapshot(bytes: &[u8]) -> Result<(Field, f64), SnapshotError> {
    if bytes.len() < 4 || &bytes[..4] != SNAPSHOT_MAGIC {
        return Err(SnapshotError::NotPesn);
    }
    if bytes.len() < HEADER_LEN {
        return Err(SnapshotError::Truncated {
            expected: HEADER_LEN,
            found: bytes.len(),
        });
    }
    let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes"));
    let f64_at = |i: usize| f64::from_le_bytes(bytes[i..i + 8].try_into().expect("8 bytes"));
    let version = u32_at(4);
    if version != SNAPSHOT_VERSION {
        return Err(SnapshotError::UnsupportedVersion(version));
    }
    let (nx, ny, nz) = (u32_at(8), u32_at(12), u32_at(16));
    let overflow = SnapshotError::DimensionOverflow { nx, ny, nz };
    let count = (nx as usize)
        .checked_mul(ny as usize)
        .and_then(|c| c.checked_mul(nz as usize + 1))
        .ok_or(overflow)?;
    let expected = count
        .checked_mul(16)
        .and_then(|c| c.checked_add(HEADER_LEN))
        .ok_or(SnapshotError::DimensionOverflow { nx, ny, nz })?;
    if bytes.len() < expected {
        return Err(SnapshotError::Truncated {
            expected,
            found: bytes.len(),
        });
    }
    let (lx, ly, h, t) = (f64_at(20), f64_at(28), f64_at(36), f64_at(44));
    let grid: Arc<Grid> = Grid::new(nx as usize, ny as usize, nz as usize, lx, ly, h)?;
    let read = |start: usize| -> Vec<f64> { (0..count).map(|i| f64_at(start + 8 * i)).collect() };
    let a = read(HEADER_LEN);
    let b = read(HEADER_LEN + 8 * count);
    Ok((Field::from_physical(&grid, &a, &b), t))
}

/// Writes a snapshot through a temporary file and a rename.
pub fn write_snapshot(v: &Field, t: f64, path: &Path) -> Result<(), SnapshotError> {
    write_atomic(path, &encode_snapshot(v, t)).map_err(io_err(path))
}

pub fn read_snapshot(path: &Path) -> Result<(Field, f64), SnapshotError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    decode_snapshot(&bytes)
}

/// Writes `bytes` to `path` via `path.tmp` and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

/// Formats a float for CSV: 17 significant digits.
pub fn csv_float(x: f64) -> String {
    format!("{x:.16e}")
}

/// Line-buffered `series.csv` writer; each row is flushed so an interrupted
/// run leaves a readable prefix.
pub struct SeriesWriter {
    out: BufWriter<File>,
}

impl SeriesWriter {
    pub fn create(path: &Path) -> io::Result<Self> {
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "{}", DiagnosticsRecord::CSV_HEADER)?;
        out.flush()?;
        Ok(Self { out })
    }

    pub fn write(&mut self, r: &DiagnosticsRecord) -> io::Result<()> {
        writeln!(self.out, "{}", r.csv_row())?;
        self.out.flush()
    }
}

/// `z,v1,v2,dv1dz,dv2dz` at `samples` uniformly spaced heights from `-h` to `0`.
pub fn ekman_csv(sol: &EkmanSolution, samples: usize) -> String {
    let h = sol.params.h;
    let mut s = String::from("z,v1,v2,dv1dz,dv2dz\n");
    for i in 0..samples {
        let z = if i + 1 == samples {
            0.0
        } else {
            -h + h * i as f64 / (samples - 1) as f64
        };
        let v = sol.profile_unchecked(z);
        let d = sol.derivative_unchecked(z);
        let row = [z, v[0], v[1], d[0], d[1]].map(csv_float).join(",");
        s.push_str(&row);
        s.push('\n');
    }
    s
}

/// Ordered `key = value` text, one entry per line.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Manifest {
    pub entries: Vec<(String, String)>,
}

impl Manifest {
    pub fn push(&mut self, key: impl Into<String>, value: impl ToString) {
        self.entries.push((key.into(), value.to_string()));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn render(&self) -> String {
        self.entries
            .iter()
            .map(|(k, v)| format!("{k} = {}\n", v.replace('\n', " ")))
            .collect()
    }

    pub fn parse(text: &str) -> Self {
        let entries = text
            .lines()
            .filter_map(|l| l.split_once(" = "))
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
        Self { entries }
    }

    pub fn write(&self, path: &Path) -> io::Result<()> {
        write_atomic(path, self.render().as_bytes())
    }
}

/// Exclusive ownership of an output directory through a `.lock` file,
/// removed on drop.
#[derive(Debug)]
pub struct OutputLock {
    path: PathBuf,
}

impl OutputLock {
    pub fn acquire(dir: &Path) -> io::Result<Self> {
        fs::create_dir_all(dir)?;
        let path = dir.join(".lock");
        let mut f = OpenOptions::new().write(true).create_new(true).open(&path).map_err(|e| {
            if e.kind() == io::ErrorKind::AlreadyExists {
                io::Error::new(e.kind(), format!("{} is locked by another run", dir.display()))
            } else {
                e
            }
        })?;
        writeln!(f, "{}", std::process::id())?;
        Ok(Self { path })
    }
}

impl Drop for OutputLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}
