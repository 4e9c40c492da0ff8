//! Long-format result tables.

use std::cmp::Ordering;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::HarnessError;

/// One `(experiment, trial, sweep, sweep_value, metric, value)` row. Rows
/// without a trial index are aggregates over trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub experiment: String,
    pub trial: Option<usize>,
    pub sweep: String,
    pub sweep_value: f64,
    pub metric: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultTable {
    pub experiment: String,
    pub config_hash: String,
    pub seed: u64,
    rows: Vec<Row>,
}

pub fn artifact_version() -> String {
    format!("dmimo-core {}", env!("CARGO_PKG_VERSION"))
}

fn row_order(a: &Row, b: &Row) -> Ordering {
    a.sweep
        .cmp(&b.sweep)
        .then(a.sweep_value.total_cmp(&b.sweep_value))
        .then(a.metric.cmp(&b.metric))
        .then(a.trial.cmp(&b.trial))
}

impl ResultTable {
    pub fn new(experiment: impl Into<String>, config_hash: impl Into<String>, seed: u64) -> Self {
        ResultTable { experiment: experiment.into(), config_hash: config_hash.into(), seed, rows: Vec::new() }
    }

    pub fn push(&mut self, trial: Option<usize>, sweep: &str, sweep_value: f64, metric: &str, value: f64) {
        self.rows.push(Row {
            experiment: self.experiment.clone(),
            trial,
            sweep: sweep.to_string(),
            sweep_value,
            metric: metric.to_string(),
            value,
        });
    }

    /// Aggregate row.
    pub fn push_agg(&mut self, sweep: &str, sweep_value: f64, metric: &str, value: f64) {
        self.push(None, sweep, sweep_value, metric, value);
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Sorts rows by `(sweep, sweep_value, metric, trial)`.
    pub fn sort(&mut self) {
        self.rows.sort_by(row_order);
    }

    /// Aggregate value for `(sweep, sweep_value, metric)`.
    pub fn aggregate(&self, sweep: &str, sweep_value: f64, metric: &str) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.trial.is_none() && r.sweep == sweep && r.sweep_value == sweep_value && r.metric == metric)
            .map(|r| r.value)
    }

    /// Per-trial values of `metric` at one sweep point, in trial order.
    pub fn trial_values(&self, sweep: &str, sweep_value: f64, metric: &str) -> Vec<f64> {
        let mut v: Vec<(usize, f64)> = self
            .rows
            .iter()
            .filter(|r| r.sweep == sweep && r.sweep_value == sweep_value && r.metric == metric)
            .filter_map(|r| r.trial.map(|t| (t, r.value)))
            .collect();
        v.sort_by_key(|p| p.0);
        v.into_iter().map(|p| p.1).collect()
    }

    fn write_header<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "# experiment={}", self.experiment)?;
        writeln!(w, "# config_hash={}", self.config_hash)?;
        writeln!(w, "# seed={}", self.seed)?;
        writeln!(w, "# version={}", artifact_version())
    }

    /// Header comment lines followed by sorted CSV rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<(), HarnessError> {
        self.write_header(&mut w)?;
        let mut sorted: Vec<&Row> = self.rows.iter().collect();
        sorted.sort_by(|a, b| row_order(a, b));
        let mut wr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
        wr.write_record(["experiment", "trial", "sweep", "sweep_value", "metric", "value"])?;
        for r in sorted {
            wr.serialize(r)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("utf-8 CSV")
    }

    /// Header lines plus the aggregate rows as aligned text.
    pub fn write_summary<W: Write>(&self, mut w: W) -> Result<(), HarnessError> {
        self.write_header(&mut w)?;
        let mut agg: Vec<&Row> = self.rows.iter().filter(|r| r.trial.is_none()).collect();
        agg.sort_by(|a, b| row_order(a, b));
        writeln!(w, "{:<16} {:>12} {:<28} {:>14}", "sweep", "value", "metric", "result")?;
        for r in agg {
            writeln!(w, "{:<16} {:>12} {:<28} {:>14.6e}", r.sweep, r.sweep_value, r.metric, r.value)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(r: R) -> Result<Vec<Row>, HarnessError> {
        let mut rd = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(r);
        Ok(rd.deserialize().collect::<Result<Vec<Row>, _>>()?)
    }
}
