//! File formats: line-delimited JSON scan, ground-truth and detection
//! streams, and grid snapshots.
//!
//! Each stream file holds one record per line, ordered by timestamp. Floats
//! are written in shortest round-trip form, so write-then-load is bit-exact
//! for finite values.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{ClassLabel, DetectedObject, GtObject};
use crate::model::{CellState, GridMap, Scan};

pub trait Timed {
    fn time(&self) -> f64;
}

impl Timed for Scan {
    fn time(&self) -> f64 {
        self.t
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GtRecord {
    pub id: u64,
    pub class: ClassLabel,
    pub cx: f64,
    pub cy: f64,
    pub vx: f64,
    pub vy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GtFrame {
    pub t: f64,
    pub objects: Vec<GtRecord>,
}

impl GtFrame {
    pub fn to_objects(&self) -> Vec<GtObject> {
        self.objects
            .iter()
            .map(|o| GtObject {
                t: self.t,
                id: o.id,
                class: o.class,
                center: [o.cx, o.cy],
                velocity: [o.vx, o.vy],
            })
            .collect()
    }
}

impl Timed for GtFrame {
    fn time(&self) -> f64 {
        self.t
    }
}

/// Detected objects of one pipeline step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionFrame {
    pub t: f64,
    pub particle_count: usize,
    pub objects: Vec<DetectedObject>,
}

impl Timed for DetectionFrame {
    fn time(&self) -> f64 {
        self.t
    }
}

/// Parses one record per non-blank line. Timestamps must not decrease.
pub fn read_records<T: DeserializeOwned + Timed>(reader: impl BufRead) -> Result<Vec<T>> {
    let mut out: Vec<T> = Vec::new();
    for (k, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: T = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: k + 1,
            reason: e.to_string(),
        })?;
        let t = rec.time();
        if !t.is_finite() {
            return Err(Error::Parse { line: k + 1, reason: format!("non-finite timestamp {t}") });
        }
        if let Some(prev) = out.last() {
            if t < prev.time() {
                return Err(Error::NonMonotoneTime { previous: prev.time(), current: t });
            }
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn write_records<T: Serialize>(records: &[T], mut writer: impl Write) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut writer, r).map_err(std::io::Error::from)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

pub fn load<T: DeserializeOwned + Timed>(path: &Path) -> Result<Vec<T>> {
    read_records(BufReader::new(File::open(path)?))
}

pub fn save<T: Serialize>(records: &[T], path: &Path) -> Result<()> {
    write_records(records, BufWriter::new(File::create(path)?))
}

pub fn load_scans(path: &Path) -> Result<Vec<Scan>> {
    load(path)
}

pub fn write_scans(scans: &[Scan], path: &Path) -> Result<()> {
    save(scans, path)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridFormat {
    Csv,
    Raw,
}

impl std::str::FromStr for GridFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "csv" => Ok(GridFormat::Csv),
            "raw" => Ok(GridFormat::Raw),
            other => Err(format!("unknown grid format `{other}` (expected csv or raw)")),
        }
    }
}

pub const RAW_MAGIC: &[u8; 4] = b"DOGM";
pub const RAW_VERSION: u32 = 1;

pub fn write_grid_csv(grid: &GridMap, mut w: impl Write) -> Result<()> {
    writeln!(w, "i,j,p_unk,p_free,p_static,p_dyn,argmax")?;
    let (width, height) = grid.dims();
    for j in 0..height {
        for i in 0..width {
            let c = grid.cell(i, j);
            writeln!(
                w,
                "{i},{j},{},{},{},{},{}",
                c.0[0],
                c.0[1],
                c.0[2],
                c.0[3],
                c.argmax().label()
            )?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_grid_raw(grid: &GridMap, mut w: impl Write) -> Result<()> {
    let (width, height) = grid.dims();
    w.write_all(RAW_MAGIC)?;
    w.write_all(&RAW_VERSION.to_le_bytes())?;
    w.write_all(&(width as u32).to_le_bytes())?;
    w.write_all(&(height as u32).to_le_bytes())?;
    w.write_all(&(grid.spec.cell_size as f32).to_le_bytes())?;
    for s in 0..4 {
        for c in &grid.cells {
            w.write_all(&(c.0[s] as f32).to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn export_grid(grid: &GridMap, path: &Path, format: GridFormat) -> Result<()> {
    let w = BufWriter::new(File::create(path)?);
    match format {
        GridFormat::Csv => write_grid_csv(grid, w),
        GridFormat::Raw => write_grid_raw(grid, w),
    }
}

/// Contents of a raw grid snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct RawGrid {
    pub width: usize,
    pub height: usize,
    pub cell_size: f32,
    /// Row-major cells.
    pub cells: Vec<CellState>,
}

pub fn read_grid_raw(mut r: impl Read) -> Result<RawGrid> {
    let bad = |reason: &str| Error::Parse { line: 0, reason: reason.to_string() };
    let mut header = [0u8; 20];
    r.read_exact(&mut header)?;
    if &header[0..4] != RAW_MAGIC {
        return Err(bad("missing DOGM magic"));
    }
    let word = |k: usize| [header[k], header[k + 1], header[k + 2], header[k + 3]];
    let version = u32::from_le_bytes(word(4));
    if version != RAW_VERSION {
        return Err(bad(&format!("unsupported raw grid version {version}")));
    }
    let width = u32::from_le_bytes(word(8)) as usize;
    let height = u32::from_le_bytes(word(12)) as usize;
    let cell_size = f32::from_le_bytes(word(16));
    let n = width * height;
    let mut body = vec![0u8; 4 * 4 * n];
    r.read_exact(&mut body)?;
    let mut cells = vec![CellState([0.0; 4]); n];
    for (k, chunk) in body.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
        cells[k % n].0[k / n] = v as f64;
    }
    Ok(RawGrid { width, height, cell_size, cells })
}

pub fn import_grid_raw(path: &Path) -> Result<RawGrid> {
    read_grid_raw(BufReader::new(File::open(path)?))
}
