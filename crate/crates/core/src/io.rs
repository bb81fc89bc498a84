//! On-disk formats.
//!
//! Field grids are written as a 32-byte little-endian header followed by the
//! node values as `f64`, row-major over `(j, i, component)`:
//!
//! | offset | size | content                     |
//! |-------:|-----:|-----------------------------|
//! | 0      | 8    | magic `FLOEFLD\0`           |
//! | 8      | 4    | format version (`u32`, = 1) |
//! | 12     | 4    | `grid_n` (`u32`)            |
//! | 16     | 4    | component count (`u32`, = 2)|
//! | 20     | 4    | reserved, zero              |
//! | 24     | 8    | time (`f64`)                |
//!
//! The file length is always `32 + 8 · grid_n² · components`. The CSV
//! variant has header `time,i,j,x,y,u,v`. Observations are CSV with header
//! `time,floe_id,x,y`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::FieldGrid;
use crate::scalar::Real;

pub const FIELD_MAGIC: [u8; 8] = *b"FLOEFLD\0";
pub const FIELD_VERSION: u32 = 1;
pub const FIELD_HEADER_LEN: usize = 32;
pub const FIELD_COMPONENTS: u32 = 2;

/// How field grids are written.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldFormat {
    #[default]
    Binary,
    Csv,
}

impl FieldFormat {
    pub fn extension(self) -> &'static str {
        match self {
            FieldFormat::Binary => "bin",
            FieldFormat::Csv => "csv",
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn format_err(what: &'static str, path: &Path, reason: impl Into<String>) -> Error {
    Error::Format {
        what,
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

pub fn encode_field<T: Real>(field: &FieldGrid<T>) -> Vec<u8> {
    let n = field.n();
    let mut out = Vec::with_capacity(FIELD_HEADER_LEN + 16 * n * n);
    out.extend_from_slice(&FIELD_MAGIC);
    out.extend_from_slice(&FIELD_VERSION.to_le_bytes());
    out.extend_from_slice(&(n as u32).to_le_bytes());
    out.extend_from_slice(&FIELD_COMPONENTS.to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    out.extend_from_slice(&field.time().as_f64().to_le_bytes());
    for x in field.flat() {
        out.extend_from_slice(&x.as_f64().to_le_bytes());
    }
    out
}

/// Parses a binary field, validating the header and the exact length.
pub fn decode_field<T: Real>(bytes: &[u8], path: &Path) -> Result<FieldGrid<T>> {
    let bad = |reason: String| format_err("field file", path, reason);
    if bytes.len() < FIELD_HEADER_LEN {
        return Err(bad(format!("{} bytes is shorter than the header", bytes.len())));
    }
    if bytes[..8] != FIELD_MAGIC {
        return Err(bad("bad magic".into()));
    }
    let word = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4-byte slice"));
    let version = word(8);
    if version != FIELD_VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let n = word(12) as usize;
    let comps = word(16);
    if comps != FIELD_COMPONENTS {
        return Err(bad(format!("expected {FIELD_COMPONENTS} components, got {comps}")));
    }
    if word(20) != 0 {
        return Err(bad("reserved header word is not zero".into()));
    }
    let time = f64::from_le_bytes(bytes[24..32].try_into().expect("8-byte slice"));
    let expected = n
        .checked_mul(n)
        .and_then(|c| c.checked_mul(8 * comps as usize))
        .and_then(|c| c.checked_add(FIELD_HEADER_LEN));
    if expected != Some(bytes.len()) {
        return Err(bad(format!("length {} does not match grid_n = {n}", bytes.len())));
    }
    let data: Vec<T> = bytes[FIELD_HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| T::lit(f64::from_le_bytes(c.try_into().expect("8-byte chunk"))))
        .collect();
    let values = data.chunks_exact(2).map(|c| [c[0], c[1]]).collect();
    FieldGrid::from_values(n, T::lit(time), values).map_err(|e| bad(e.to_string()))
}

#[derive(Debug, Serialize, Deserialize)]
struct FieldRow {
    time: f64,
    i: usize,
    j: usize,
    x: f64,
    y: f64,
    u: f64,
    v: f64,
}

pub fn write_field<T: Real>(path: &Path, field: &FieldGrid<T>, format: FieldFormat) -> Result<()> {
    match format {
        FieldFormat::Binary => {
            let mut w = create(path)?;
            w.write_all(&encode_field(field))
                .and_then(|_| w.flush())
                .map_err(|e| Error::io(path, e))
        }
        FieldFormat::Csv => {
            let n = field.n();
            let mut w = csv::Writer::from_writer(create(path)?);
            for j in 0..n {
                for i in 0..n {
                    let [x, y] = field.node(i, j);
                    let [u, v] = field.get(i, j);
                    w.serialize(FieldRow {
                        time: field.time().as_f64(),
                        i,
                        j,
                        x: x.as_f64(),
                        y: y.as_f64(),
                        u: u.as_f64(),
                        v: v.as_f64(),
                    })
                    .map_err(|e| format_err("field csv", path, e.to_string()))?;
                }
            }
            w.flush().map_err(|e| Error::io(path, e))
        }
    }
}

pub fn read_field<T: Real>(path: &Path, format: FieldFormat) -> Result<FieldGrid<T>> {
    match format {
        FieldFormat::Binary => {
            let mut bytes = Vec::new();
            File::open(path)
                .and_then(|f| BufReader::new(f).read_to_end(&mut bytes))
                .map_err(|e| Error::io(path, e))?;
            decode_field(&bytes, path)
        }
        FieldFormat::Csv => {
            let rows: Vec<FieldRow> = read_csv(path, "field csv")?;
            let n = (rows.len() as f64).sqrt().round() as usize;
            if n * n != rows.len() || n < 2 {
                return Err(format_err("field csv", path, format!("{} rows is not a square grid", rows.len())));
            }
            let mut grid = FieldGrid::zeros(n, T::lit(rows[0].time))?;
            let mut seen = vec![false; n * n];
            for r in rows {
                if r.i >= n || r.j >= n || std::mem::replace(&mut seen[r.j * n + r.i], true) {
                    return Err(format_err("field csv", path, format!("bad or repeated node ({}, {})", r.i, r.j)));
                }
                grid.set(r.i, r.j, [T::lit(r.u), T::lit(r.v)]);
            }
            Ok(grid)
        }
    }
}

/// One noisy position fix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservationRecord {
    pub time: f64,
    pub floe_id: usize,
    pub x: f64,
    pub y: f64,
}

pub fn write_csv<R: Serialize>(path: &Path, rows: &[R], header: &[&str]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(!rows.is_empty())
        .from_writer(create(path)?);
    if rows.is_empty() {
        // serde headers come from the first row; an empty table still gets one
        w.write_record(header).map_err(|e| format_err("csv", path, e.to_string()))?;
    }
    for r in rows {
        w.serialize(r).map_err(|e| format_err("csv", path, e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_csv<R: DeserializeOwned>(path: &Path, what: &'static str) -> Result<Vec<R>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    csv::Reader::from_reader(BufReader::new(file))
        .deserialize()
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| format_err(what, path, e.to_string()))
}

pub const OBSERVATION_HEADER: [&str; 4] = ["time", "floe_id", "x", "y"];

pub fn write_observations(path: &Path, records: &[ObservationRecord]) -> Result<()> {
    write_csv(path, records, &OBSERVATION_HEADER)
}

pub fn read_observations(path: &Path) -> Result<Vec<ObservationRecord>> {
    read_csv(path, "observations")
}

pub fn write_toml<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    let text = toml::to_string_pretty(value).map_err(|e| format_err("toml", path, e.to_string()))?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_toml<S: DeserializeOwned>(path: &Path, what: &'static str) -> Result<S> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    toml::from_str(&text).map_err(|e| format_err(what, path, e.to_string()))
}
