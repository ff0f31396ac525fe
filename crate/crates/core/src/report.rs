use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

/// One compared quantity: an estimate (with its Monte Carlo standard error,
/// zero for deterministic values) against an oracle and/or a bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub statistic: String,
    #[serde(rename = "N")]
    pub n: Option<u64>,
    pub estimate: f64,
    pub std_error: f64,
    pub oracle: Option<f64>,
    pub bound: Option<f64>,
    pub error: Option<f64>,
    pub pass: bool,
}

impl ReportRow {
    pub fn new(statistic: impl Into<String>, estimate: f64) -> Self {
        Self { statistic: statistic.into(), n: None, estimate, std_error: 0.0, oracle: None, bound: None, error: None, pass: true }
    }

    pub fn at(mut self, n: u64) -> Self {
        self.n = Some(n);
        self
    }

    pub fn se(mut self, std_error: f64) -> Self {
        self.std_error = std_error;
        self
    }

    /// Sets the oracle and the absolute error `|estimate - oracle|`.
    pub fn oracle(mut self, oracle: f64) -> Self {
        self.oracle = Some(oracle);
        self.error = Some((self.estimate - oracle).abs());
        self
    }

    pub fn bound(mut self, bound: f64) -> Self {
        self.bound = Some(bound);
        self
    }

    pub fn error(mut self, error: f64) -> Self {
        self.error = Some(error);
        self
    }

    pub fn pass(mut self, pass: bool) -> Self {
        self.pass = pass;
        self
    }
}

/// Record of one verification: per-point rows, the fitted decay order of the
/// primary statistic, and the overall verdict with the rule that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub name: String,
    pub n_grid: Vec<u64>,
    /// Statistic whose error sequence over `n_grid` is fitted.
    pub primary: String,
    pub rows: Vec<ReportRow>,
    pub decay_order: Option<f64>,
    pub pass: bool,
    pub criterion: String,
    pub notes: Vec<String>,
}

impl ConvergenceReport {
    pub fn new(name: impl Into<String>, primary: impl Into<String>, n_grid: Vec<u64>) -> Self {
        Self {
            name: name.into(),
            n_grid,
            primary: primary.into(),
            rows: Vec::new(),
            decay_order: None,
            pass: true,
            criterion: String::new(),
            notes: Vec::new(),
        }
    }

    pub fn push(&mut self, row: ReportRow) {
        self.rows.push(row);
    }

    pub fn note(&mut self, note: impl Into<String>) {
        self.notes.push(note.into());
    }

    /// Rows of the primary statistic, in grid order.
    pub fn primary_rows(&self) -> Vec<&ReportRow> {
        self.rows.iter().filter(|r| r.statistic == self.primary).collect()
    }

    pub fn rows_for(&self, statistic: &str) -> Vec<&ReportRow> {
        self.rows.iter().filter(|r| r.statistic == statistic).collect()
    }

    /// Fits the decay order of the primary statistic's errors (least squares
    /// on log error vs log N over rows whose error exceeds 5 standard errors).
    pub fn fit_decay(&mut self) {
        let pts: Vec<(f64, f64)> = self
            .primary_rows()
            .iter()
            .filter_map(|r| Some((r.n? as f64, r.error?, r.std_error)))
            .filter(|&(_, e, se)| e > 0.0 && e > 5.0 * se)
            .map(|(n, e, _)| (n, e))
            .collect();
        self.decay_order = decay_order(&pts);
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Flat CSV rows (`name,N,estimate,se,oracle,error,pass`) without header.
    pub fn csv_rows(&self, out: &mut String) {
        for r in &self.rows {
            let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
            let _ = writeln!(
                out,
                "{}.{},{},{},{},{},{},{}",
                self.name,
                r.statistic,
                r.n.map(|n| n.to_string()).unwrap_or_default(),
                r.estimate,
                r.std_error,
                opt(r.oracle),
                opt(r.error),
                r.pass
            );
        }
    }
}

pub const REPORT_CSV_HEADER: &str = "name,N,estimate,se,oracle,error,pass";

/// `-slope` of the least-squares line through `(log n, log err)`; needs at
/// least three points.
pub fn decay_order(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 3 {
        return None;
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    (sxx > 0.0).then(|| -sxy / sxx)
}

/// Weakly decreasing over consecutive rows, skipping any comparison where the
/// later error is within 5 standard errors of zero (noise-dominated).
pub fn weakly_decreasing(rows: &[&ReportRow]) -> bool {
    rows.windows(2).all(|w| {
        let (a, b) = (w[0].error.unwrap_or(0.0), w[1].error.unwrap_or(0.0));
        b <= 5.0 * w[1].std_error || b <= a
    })
}
