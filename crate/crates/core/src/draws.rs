//! Post-burn-in draws of parameters and thinned state paths.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DrawMatrix {
    pub param_names: Vec<String>,
    pub state_names: Vec<String>,
    pub sweeps: Vec<usize>,
    /// Row-major, `param_names.len() + state_names.len()` values per row.
    pub values: Vec<f64>,
}

impl DrawMatrix {
    pub fn new(param_names: Vec<String>, state_names: Vec<String>) -> Self {
        DrawMatrix {
            param_names,
            state_names,
            sweeps: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn width(&self) -> usize {
        self.param_names.len() + self.state_names.len()
    }

    pub fn n_rows(&self) -> usize {
        self.sweeps.len()
    }

    pub fn push(&mut self, sweep: usize, params: &[f64], states: &[f64]) {
        assert_eq!(params.len(), self.param_names.len());
        assert_eq!(states.len(), self.state_names.len());
        self.sweeps.push(sweep);
        self.values.extend_from_slice(params);
        self.values.extend_from_slice(states);
    }

    /// Parameter names followed by state names, in column order.
    pub fn all_names(&self) -> Vec<&str> {
        self.param_names
            .iter()
            .chain(&self.state_names)
            .map(String::as_str)
            .collect()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.param_names
            .iter()
            .chain(&self.state_names)
            .position(|n| n == name)
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let w = self.width();
        &self.values[r * w..(r + 1) * w]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        let w = self.width();
        (0..self.n_rows()).map(|r| self.values[r * w + c]).collect()
    }

    pub fn param(&self, name: &str) -> Option<Vec<f64>> {
        self.param_names
            .iter()
            .position(|n| n == name)
            .map(|c| self.column(c))
    }

    pub fn state_columns(&self) -> impl Iterator<Item = (&str, Vec<f64>)> {
        let p = self.param_names.len();
        self.state_names
            .iter()
            .enumerate()
            .map(move |(k, n)| (n.as_str(), self.column(p + k)))
    }

    pub fn mean_sd(&self, c: usize) -> (f64, f64) {
        let col = self.column(c);
        let n = col.len() as f64;
        let m = col.iter().sum::<f64>() / n;
        let v = col.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0).max(1.0);
        (m, v.sqrt())
    }
}
