//! Return and price tables in CSV form: a header row of series names and a
//! first column of date labels.

use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fewest returns a table must have before it is fitted.
pub const MIN_T: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum DataMode {
    Prices,
    #[default]
    Returns,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReturnsTable {
    pub dates: Vec<String>,
    pub names: Vec<String>,
    /// One vector per series.
    pub values: Vec<Vec<f64>>,
    pub mode: DataMode,
}

impl ReturnsTable {
    pub fn rows(&self) -> usize {
        self.dates.len()
    }

    pub fn s_len(&self) -> usize {
        self.names.len()
    }

    pub fn series(&self, name: &str) -> Option<&[f64]> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|k| self.values[k].as_slice())
    }

    /// Log-returns; a price table loses its first date.
    pub fn to_returns(&self) -> Result<ReturnsTable> {
        match self.mode {
            DataMode::Returns => Ok(self.clone()),
            DataMode::Prices => {
                let values = self
                    .values
                    .iter()
                    .enumerate()
                    .map(|(k, p)| {
                        compute_log_returns(p).map_err(|e| match e {
                            Error::Data { row, msg, .. } => Error::Data {
                                row: row + 1,
                                col: k + 2,
                                msg,
                            },
                            e => e,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(ReturnsTable {
                    dates: self.dates[1..].to_vec(),
                    names: self.names.clone(),
                    values,
                    mode: DataMode::Returns,
                })
            }
        }
    }

    /// Keeps only the named series, in the given order.
    pub fn select(&self, names: &[String]) -> Result<ReturnsTable> {
        let mut values = Vec::with_capacity(names.len());
        for n in names {
            let v = self
                .series(n)
                .ok_or_else(|| Error::config("series", format!("no column named `{n}`")))?;
            values.push(v.to_vec());
        }
        Ok(ReturnsTable {
            dates: self.dates.clone(),
            names: names.to_vec(),
            values,
            mode: self.mode,
        })
    }

    pub fn require_length(&self, min: usize) -> Result<()> {
        let t = match self.mode {
            DataMode::Prices => self.rows().saturating_sub(1),
            DataMode::Returns => self.rows(),
        };
        if t < min {
            return Err(Error::Data {
                row: self.rows() + 1,
                col: 1,
                msg: format!("need at least {min} returns, found {t}"),
            });
        }
        Ok(())
    }
}

/// `y_t = log P_t - log P_{t-1}`. Data errors carry the 0-based price index as `row`.
pub fn compute_log_returns(prices: &[f64]) -> Result<Vec<f64>> {
    if let Some(i) = prices.iter().position(|p| !(*p > 0.0) || !p.is_finite()) {
        return Err(Error::Data {
            row: i,
            col: 0,
            msg: format!("price {} is not strictly positive", prices[i]),
        });
    }
    Ok(prices.windows(2).map(|w| w[1].ln() - w[0].ln()).collect())
}

/// Parses a table. Row numbers in errors are 1-based file lines (the header
/// is line 1), columns are 1-based.
pub fn parse_returns_csv<R: Read>(reader: R, mode: DataMode) -> Result<ReturnsTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut records = rdr.records();
    let header = match records.next() {
        Some(Ok(h)) => h,
        Some(Err(e)) => {
            return Err(Error::Data {
                row: 1,
                col: 1,
                msg: e.to_string(),
            })
        }
        None => {
            return Err(Error::Data {
                row: 1,
                col: 1,
                msg: "missing header row".into(),
            })
        }
    };
    if header.len() < 2 {
        return Err(Error::Data {
            row: 1,
            col: 1,
            msg: "header needs a date column and at least one series".into(),
        });
    }
    let names: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    if let Some(k) = names
        .iter()
        .position(|n| n.is_empty() || n.parse::<f64>().is_ok())
    {
        return Err(Error::Data {
            row: 1,
            col: k + 2,
            msg: format!("`{}` is not a series name (missing header?)", names[k]),
        });
    }
    let mut dates = Vec::new();
    let mut values = vec![Vec::new(); names.len()];
    for (i, rec) in records.enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| Error::Data {
            row,
            col: 1,
            msg: e.to_string(),
        })?;
        if rec.len() != header.len() {
            return Err(Error::Data {
                row,
                col: rec.len().min(header.len()) + 1,
                msg: format!("expected {} fields, found {}", header.len(), rec.len()),
            });
        }
        dates.push(rec[0].to_string());
        for (k, cell) in rec.iter().skip(1).enumerate() {
            if cell.is_empty() {
                return Err(Error::Data {
                    row,
                    col: k + 2,
                    msg: "empty cell".into(),
                });
            }
            let v: f64 = cell.parse().map_err(|_| Error::Data {
                row,
                col: k + 2,
                msg: format!("`{cell}` is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Data {
                    row,
                    col: k + 2,
                    msg: format!("`{cell}` is not finite"),
                });
            }
            values[k].push(v);
        }
    }
    if dates.is_empty() {
        return Err(Error::Data {
            row: 2,
            col: 1,
            msg: "no data rows".into(),
        });
    }
    if mode == DataMode::Prices {
        for (k, col) in values.iter().enumerate() {
            if let Some(i) = col.iter().position(|p| *p <= 0.0) {
                return Err(Error::Data {
                    row: i + 2,
                    col: k + 2,
                    msg: format!("price {} is not strictly positive", col[i]),
                });
            }
        }
    }
    Ok(ReturnsTable {
        dates,
        names,
        values,
        mode,
    })
}

pub fn load_returns_csv(path: impl AsRef<Path>, mode: DataMode) -> Result<ReturnsTable> {
    let f = std::fs::File::open(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
    parse_returns_csv(f, mode).map_err(|e| e.context(path.as_ref().display().to_string()))
}

/// Writes series as columns under a `t` index column (1-based).
pub fn write_series_csv(path: impl AsRef<Path>, names: &[String], cols: &[Vec<f64>]) -> Result<()> {
    let p = path.as_ref();
    let mut w = csv::Writer::from_path(p)
        .map_err(|e| Error::Serialization(format!("{}: {e}", p.display())))?;
    let ser = |e: csv::Error| Error::Serialization(format!("{}: {e}", p.display()));
    let mut header = vec!["t".to_string()];
    header.extend(names.iter().cloned());
    w.write_record(&header).map_err(ser)?;
    let t_len = cols.first().map_or(0, Vec::len);
    for t in 0..t_len {
        let mut rec = vec![(t + 1).to_string()];
        rec.extend(cols.iter().map(|c| c[t].to_string()));
        w.write_record(&rec).map_err(ser)?;
    }
    w.flush().map_err(|e| Error::io(p, e))
}
