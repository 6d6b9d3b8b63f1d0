//! Integrated autocorrelation times and time-normalised variances.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::draws::DrawMatrix;
use crate::error::{Error, Result};

/// Shortest chain accepted by [`iact`].
pub const MIN_CHAIN: usize = 100;

fn autocov(x: &[f64], mean: f64, lag: usize) -> f64 {
    let n = x.len();
    x[..n - lag]
        .iter()
        .zip(&x[lag..])
        .map(|(a, b)| (a - mean) * (b - mean))
        .sum::<f64>()
        / n as f64
}

/// `1 + 2 sum_j rho_j`, truncated by Geyer's initial monotone positive
/// sequence rule on the pair sums `gamma_{2m} + gamma_{2m+1}`.
/// Autocovariances are only computed up to the truncation point.
pub fn iact(x: &[f64]) -> Result<f64> {
    let n = x.len();
    if n < MIN_CHAIN {
        return Err(Error::Precondition(format!(
            "IACT needs at least {MIN_CHAIN} draws, got {n}"
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::UndefinedIact("chain has non-finite values".into()));
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let g0 = autocov(x, mean, 0);
    if !(g0 > 0.0) || x.iter().all(|&v| v == x[0]) {
        return Err(Error::UndefinedIact("chain has zero variance".into()));
    }
    let mut sum = 0.0;
    let mut prev = f64::INFINITY;
    let mut m = 0;
    while 2 * m + 1 < n {
        let pair = autocov(x, mean, 2 * m) + autocov(x, mean, 2 * m + 1);
        if pair <= 0.0 {
            break;
        }
        let pair = pair.min(prev);
        sum += pair;
        prev = pair;
        m += 1;
    }
    Ok((2.0 * sum - g0) / g0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamIact {
    pub name: String,
    pub iact: f64,
}

/// IACT summary over the recorded (thinned) state columns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateSummary {
    pub min: f64,
    pub mean: f64,
    pub max: f64,
    pub n_states: usize,
    /// Constant columns that were left out.
    pub skipped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyReport {
    pub label: String,
    pub n_draws: usize,
    /// Seconds per post-burn-in sweep.
    pub ct: f64,
    pub params: Vec<ParamIact>,
    pub iact_max: f64,
    pub iact_mean: f64,
    pub tnv_max: f64,
    pub tnv_mean: f64,
    pub baseline: Option<String>,
    pub rtnv_max: Option<f64>,
    pub rtnv_mean: Option<f64>,
    pub states: Option<StateSummary>,
}

impl EfficiencyReport {
    /// Builds a report from per-parameter IACTs and seconds per sweep.
    pub fn from_iacts(
        label: impl Into<String>,
        params: Vec<ParamIact>,
        ct: f64,
        n_draws: usize,
    ) -> Result<Self> {
        if params.is_empty() {
            return Err(Error::Precondition("no parameters to summarize".into()));
        }
        let iact_max = params
            .iter()
            .map(|p| p.iact)
            .fold(f64::NEG_INFINITY, f64::max);
        let iact_mean = params.iter().map(|p| p.iact).sum::<f64>() / params.len() as f64;
        Ok(EfficiencyReport {
            label: label.into(),
            n_draws,
            ct,
            params,
            iact_max,
            iact_mean,
            tnv_max: iact_max * ct,
            tnv_mean: iact_mean * ct,
            baseline: None,
            rtnv_max: None,
            rtnv_mean: None,
            states: None,
        })
    }

    pub fn iact_of(&self, name: &str) -> Option<f64> {
        self.params.iter().find(|p| p.name == name).map(|p| p.iact)
    }

    /// Sets the RTNV fields relative to `baseline`.
    pub fn relative_to(mut self, baseline: &EfficiencyReport) -> Self {
        self.baseline = Some(baseline.label.clone());
        self.rtnv_max = Some(self.tnv_max / baseline.tnv_max);
        self.rtnv_mean = Some(self.tnv_mean / baseline.tnv_mean);
        self
    }

    /// Machine-readable form of the report.
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Serialization(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Serialization(e.to_string()))
    }
}

/// Per-parameter IACTs of `draws`, the TNVs at `ct` seconds per sweep and,
/// given a baseline, the RTNVs. State columns contribute min/mean/max IACT;
/// constant state columns are skipped.
pub fn summarize(
    draws: &DrawMatrix,
    ct: f64,
    label: impl Into<String>,
    baseline: Option<&EfficiencyReport>,
) -> Result<EfficiencyReport> {
    let params = draws
        .param_names
        .par_iter()
        .enumerate()
        .map(|(c, name)| {
            iact(&draws.column(c))
                .map(|v| ParamIact {
                    name: name.clone(),
                    iact: v,
                })
                .map_err(|e| e.context(format!("parameter `{name}`")))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut report = EfficiencyReport::from_iacts(label, params, ct, draws.n_rows())?;
    if !draws.state_names.is_empty() {
        let p = draws.param_names.len();
        let vals: Vec<Option<f64>> = (0..draws.state_names.len())
            .into_par_iter()
            .map(|k| match iact(&draws.column(p + k)) {
                Ok(v) => Ok(Some(v)),
                Err(Error::UndefinedIact(_)) => Ok(None),
                Err(e) => Err(e),
            })
            .collect::<Result<_>>()?;
        let ok: Vec<f64> = vals.iter().flatten().copied().collect();
        if ok.is_empty() {
            log::warn!("every recorded state column is constant");
        } else {
            report.states = Some(StateSummary {
                min: ok.iter().copied().fold(f64::INFINITY, f64::min),
                mean: ok.iter().sum::<f64>() / ok.len() as f64,
                max: ok.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                n_states: ok.len(),
                skipped: vals.len() - ok.len(),
            });
        }
    }
    Ok(match baseline {
        Some(b) => report.relative_to(b),
        None => report,
    })
}

fn cell(v: Option<f64>) -> String {
    match v {
        Some(x) if x != 0.0 && x.abs() < 0.01 => format!("{x:.2e}"),
        Some(x) if x.is_finite() => format!("{x:.2}"),
        Some(x) => format!("{x}"),
        None => "-".into(),
    }
}

/// Text table with one column per report: per-parameter IACTs, then the
/// state summary, the max/mean rows and CT.
pub fn render_table(reports: &[EfficiencyReport]) -> String {
    let mut names: Vec<&str> = Vec::new();
    for r in reports {
        for p in &r.params {
            if !names.contains(&p.name.as_str()) {
                names.push(&p.name);
            }
        }
    }
    let mut rows: Vec<(String, Vec<String>)> = Vec::new();
    for n in &names {
        rows.push((
            n.to_string(),
            reports.iter().map(|r| cell(r.iact_of(n))).collect(),
        ));
    }
    if reports.iter().any(|r| r.states.is_some()) {
        for (lab, f) in [("h min", 0), ("h mean", 1), ("h max", 2)] {
            rows.push((
                lab.into(),
                reports
                    .iter()
                    .map(|r| cell(r.states.map(|s| [s.min, s.mean, s.max][f])))
                    .collect(),
            ));
        }
    }
    let block: [(&str, fn(&EfficiencyReport) -> Option<f64>); 7] = [
        ("IACT_MAX", |r| Some(r.iact_max)),
        ("IACT_MEAN", |r| Some(r.iact_mean)),
        ("TNV_MAX", |r| Some(r.tnv_max)),
        ("TNV_MEAN", |r| Some(r.tnv_mean)),
        ("RTNV_MAX", |r| r.rtnv_max),
        ("RTNV_MEAN", |r| r.rtnv_mean),
        ("CT", |r| Some(r.ct)),
    ];
    for (lab, f) in block {
        rows.push((lab.into(), reports.iter().map(|r| cell(f(r))).collect()));
    }
    let w0 = rows.iter().map(|r| r.0.len()).max().unwrap_or(0).max(5);
    let widths: Vec<usize> = (0..reports.len())
        .map(|j| {
            rows.iter()
                .map(|r| r.1[j].len())
                .chain([reports[j].label.len()])
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut out = String::new();
    let _ = write!(out, "{:<w0$}", "param");
    for (r, w) in reports.iter().zip(&widths) {
        let _ = write!(out, "  {:>w$}", r.label);
    }
    out.push('\n');
    for (lab, cells) in &rows {
        let _ = write!(out, "{lab:<w0$}");
        for (c, w) in cells.iter().zip(&widths) {
            let _ = write!(out, "  {c:>w$}");
        }
        out.push('\n');
    }
    out
}
