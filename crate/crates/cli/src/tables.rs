//! Result tables in the layout of the published accuracy, AOPC and CoV tables.

use crate::error::{CliError, Result};

/// Feature-set columns of the accuracy and CoV tables.
pub const FEATURE_COLUMNS: [&str; 5] = ["GRF", "FBJA", "FBJAX", "LBJA", "LBJAX"];

pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: AsRef<str>>(columns: &[S]) -> Table {
        let mut header = vec!["Model".to_string()];
        header.extend(columns.iter().map(|c| c.as_ref().to_string()));
        Table { header, rows: Vec::new() }
    }

    /// Adds a row with `value` under `column`; other cells stay empty.
    pub fn set(&mut self, model: &str, column: &str, value: String) -> Result<()> {
        let col = self
            .header
            .iter()
            .position(|h| h == column)
            .ok_or_else(|| CliError::Usage(format!("no table column `{column}`")))?;
        let row = match self.rows.iter().position(|r| r[0] == model) {
            Some(i) => &mut self.rows[i],
            None => {
                let mut r = vec![String::new(); self.header.len()];
                r[0] = model.to_string();
                self.rows.push(r);
                self.rows.last_mut().unwrap()
            }
        };
        row[col] = value;
        Ok(())
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| CliError::Io(e.to_string());
        w.write_record(&self.header).map_err(io)?;
        for r in &self.rows {
            w.write_record(r).map_err(io)?;
        }
        w.into_inner().map_err(|e| CliError::Io(e.to_string()))
    }
}
