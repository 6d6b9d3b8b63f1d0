//! Draw files, their schema sidecars, and checkpoints.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::draws::DrawMatrix;
use crate::error::{Error, Result};
use crate::factor::FactorState;
use crate::sampler::ChainState;

/// Bumped whenever the draw-file layout changes.
pub const DRAWS_SCHEMA_VERSION: u32 = 1;
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Sweep,
    Param,
    State,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnInfo {
    pub name: String,
    pub kind: ColumnKind,
}

/// Describes a draw file: the sweep index, parameters in blocking order,
/// then any thinned states.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DrawSchema {
    pub version: u32,
    pub model: String,
    pub columns: Vec<ColumnInfo>,
}

impl DrawSchema {
    pub fn for_draws(model: &str, d: &DrawMatrix) -> Self {
        let mut columns = vec![ColumnInfo {
            name: "sweep".into(),
            kind: ColumnKind::Sweep,
        }];
        columns.extend(d.param_names.iter().map(|n| ColumnInfo {
            name: n.clone(),
            kind: ColumnKind::Param,
        }));
        columns.extend(d.state_names.iter().map(|n| ColumnInfo {
            name: n.clone(),
            kind: ColumnKind::State,
        }));
        DrawSchema {
            version: DRAWS_SCHEMA_VERSION,
            model: model.into(),
            columns,
        }
    }
}

/// `draws.csv` -> `draws.schema.json`.
pub fn schema_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("schema.json")
}

fn ser_err(p: &Path, e: impl std::fmt::Display) -> Error {
    Error::Serialization(format!("{}: {e}", p.display()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let s = serde_json::to_string_pretty(value).map_err(|e| ser_err(path, e))?;
    std::fs::write(path, s + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&s).map_err(|e| ser_err(path, e))
}

/// Writes the draws and their schema sidecar. Values use the shortest
/// representation that round-trips, so equal draws give identical bytes.
pub fn write_draws(path: &Path, model: &str, d: &DrawMatrix) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| ser_err(path, e))?;
    let schema = DrawSchema::for_draws(model, d);
    w.write_record(schema.columns.iter().map(|c| c.name.as_str()))
        .map_err(|e| ser_err(path, e))?;
    let mut rec = Vec::with_capacity(d.width() + 1);
    for r in 0..d.n_rows() {
        rec.clear();
        rec.push(d.sweeps[r].to_string());
        rec.extend(d.row(r).iter().map(|v| v.to_string()));
        w.write_record(&rec).map_err(|e| ser_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    write_json(&schema_path(path), &schema)
}

/// Reads a draw file, using its sidecar to split parameters from states.
pub fn read_draws(path: &Path) -> Result<(DrawSchema, DrawMatrix)> {
    let schema: DrawSchema = read_json(&schema_path(path))?;
    if schema.version != DRAWS_SCHEMA_VERSION {
        return Err(Error::Data {
            row: 0,
            col: 0,
            msg: format!("draw schema version {} is not supported", schema.version),
        });
    }
    let mut rdr = csv::Reader::from_path(path).map_err(|e| ser_err(path, e))?;
    let header = rdr.headers().map_err(|e| ser_err(path, e))?.clone();
    if header
        .iter()
        .ne(schema.columns.iter().map(|c| c.name.as_str()))
    {
        return Err(Error::Data {
            row: 1,
            col: 1,
            msg: "header does not match the schema sidecar".into(),
        });
    }
    let names = |k: ColumnKind| {
        schema
            .columns
            .iter()
            .filter(|c| c.kind == k)
            .map(|c| c.name.clone())
            .collect()
    };
    let mut d = DrawMatrix::new(names(ColumnKind::Param), names(ColumnKind::State));
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| Error::Data {
            row,
            col: 1,
            msg: e.to_string(),
        })?;
        let mut vals = Vec::with_capacity(rec.len());
        for (c, cell) in rec.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| Error::Data {
                row,
                col: c + 1,
                msg: format!("`{cell}` is not a number"),
            })?;
            vals.push(v);
        }
        if vals.len() != d.width() + 1 {
            return Err(Error::Data {
                row,
                col: vals.len(),
                msg: "wrong number of fields".into(),
            });
        }
        d.sweeps.push(vals[0] as usize);
        d.values.extend_from_slice(&vals[1..]);
    }
    Ok((schema, d))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ChainCheckpoint {
    Single(ChainState),
    Factor(FactorState),
}

/// Everything needed to continue a run exactly where it stopped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    /// The resolved config of the run, as TOML.
    pub config: String,
    pub chain: ChainCheckpoint,
    pub draws: DrawMatrix,
    pub timed_seconds: f64,
    pub timed_sweeps: usize,
}

pub fn save_checkpoint(path: &Path, cp: &Checkpoint) -> Result<()> {
    let tmp = path.with_extension("tmp");
    let f = std::fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    let mut w = std::io::BufWriter::new(f);
    ciborium::into_writer(cp, &mut w).map_err(|e| ser_err(path, e))?;
    drop(w);
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let cp: Checkpoint =
        ciborium::from_reader(std::io::BufReader::new(f)).map_err(|e| ser_err(path, e))?;
    if cp.version != CHECKPOINT_VERSION {
        return Err(Error::Data {
            row: 0,
            col: 0,
            msg: format!("checkpoint version {} is not supported", cp.version),
        });
    }
    Ok(cp)
}
