use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::Path;

use crate::data::DataError;

pub const CSV_HEADER: &str = "phase,round,step,elbo,nll_oracle,bleu2,d_loss,d_acc,mean_reward";

/// One logging event; absent metrics are written as empty fields.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricsRow {
    pub phase: String,
    pub round: usize,
    pub step: usize,
    pub elbo: Option<f64>,
    pub nll_oracle: Option<f64>,
    pub bleu2: Option<f64>,
    pub d_loss: Option<f64>,
    pub d_acc: Option<f64>,
    pub mean_reward: Option<f64>,
}

impl MetricsRow {
    pub fn new(phase: &str, round: usize, step: usize) -> Self {
        Self {
            phase: phase.to_string(),
            round,
            step,
            ..Self::default()
        }
    }

    pub fn to_csv(&self) -> String {
        let f = |x: Option<f64>| x.map(|v| format!("{v:.6}")).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.phase,
            self.round,
            self.step,
            f(self.elbo),
            f(self.nll_oracle),
            f(self.bleu2),
            f(self.d_loss),
            f(self.d_acc),
            f(self.mean_reward)
        )
    }
}

/// Append-only CSV log, optionally mirrored to a file.
#[derive(Debug, Default)]
pub struct MetricsLog {
    pub rows: Vec<MetricsRow>,
    file: Option<File>,
}

impl MetricsLog {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Creates (truncating) `path` and writes the header.
    pub fn create(path: &Path) -> Result<Self, DataError> {
        let mut file = OpenOptions::new().create(true).write(true).truncate(true).open(path)?;
        writeln!(file, "{CSV_HEADER}")?;
        Ok(Self {
            rows: Vec::new(),
            file: Some(file),
        })
    }

    pub fn append(&mut self, row: MetricsRow) -> Result<(), DataError> {
        if let Some(f) = &mut self.file {
            writeln!(f, "{}", row.to_csv())?;
            f.flush()?;
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{CSV_HEADER}\n");
        for r in &self.rows {
            out.push_str(&r.to_csv());
            out.push('\n');
        }
        out
    }

    pub fn phase(&self, phase: &str) -> impl Iterator<Item = &MetricsRow> {
        let phase = phase.to_string();
        self.rows.iter().filter(move |r| r.phase == phase)
    }
}
