use std::path::Path;

use serde::Serialize;
use serde_json::{Map, Value};

use crate::error::Result;

/// Fixed 17-significant-digit rendering used in every CSV.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Clone, Debug, Serialize)]
pub struct Verdict {
    pub subcommand: String,
    pub config_hash: String,
    pub pass: bool,
    pub failures: Vec<String>,
    #[serde(flatten)]
    pub details: Map<String, Value>,
}

/// A finished subcommand: table plus verdict.
#[derive(Clone, Debug)]
pub struct Report {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
    pub verdict: Verdict,
}

impl Report {
    pub fn new(subcommand: &str, config_hash: &str, header: &[&str]) -> Self {
        Report {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
            verdict: Verdict {
                subcommand: subcommand.to_string(),
                config_hash: config_hash.to_string(),
                pass: true,
                failures: Vec::new(),
                details: Map::new(),
            },
        }
    }

    pub fn row(&mut self, cells: Vec<String>) {
        debug_assert_eq!(cells.len(), self.header.len());
        self.rows.push(cells);
    }

    pub fn fail(&mut self, message: impl Into<String>) {
        self.verdict.pass = false;
        self.verdict.failures.push(message.into());
    }

    pub fn detail(&mut self, key: &str, value: impl Serialize) {
        let v = serde_json::to_value(value).unwrap_or(Value::Null);
        self.verdict.details.insert(key.to_string(), v);
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let name = &self.verdict.subcommand;
        let mut w = csv::Writer::from_path(dir.join(format!("{name}.csv")))?;
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        w.flush()?;
        let json = serde_json::to_string_pretty(&self.verdict)?;
        std::fs::write(dir.join(format!("{name}.json")), json + "\n")?;
        Ok(())
    }
}
