//! Delimited-text helpers shared by every reader and exporter.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Renders a float with 17 significant digits so exported tables are stable
/// across runs and round-trip exactly.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "NaN".to_string()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.to_string()
    } else if x == 0.0 {
        "0".to_string()
    } else {
        format!("{:.16e}", x)
    }
}

/// Empty cell for undefined values.
pub fn fmt_opt_f64(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

pub fn open_reader(path: &Path) -> Result<csv::Reader<BufReader<File>>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(BufReader::new(file)))
}

/// Column lookup by header name.
pub struct Columns {
    table: String,
    index: HashMap<String, usize>,
}

impl Columns {
    pub fn from_headers(table: &str, headers: &csv::StringRecord) -> Self {
        let index = headers
            .iter()
            .enumerate()
            .map(|(i, h)| (h.trim().trim_matches('"').to_string(), i))
            .collect();
        Columns {
            table: table.to_string(),
            index,
        }
    }

    pub fn require(&self, name: &str) -> Result<usize> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| Error::schema(&self.table, format!("missing required column `{name}`")))
    }

    pub fn optional(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }
}

pub fn parse_i64(table: &str, column: &str, line: u64, raw: &str) -> Result<i64> {
    raw.trim().parse::<i64>().map_err(|_| {
        Error::schema(
            table,
            format!("column `{column}` line {line}: `{raw}` is not an integer"),
        )
    })
}

pub fn parse_f64(table: &str, column: &str, line: u64, raw: &str) -> Result<f64> {
    raw.trim().parse::<f64>().map_err(|_| {
        Error::schema(
            table,
            format!("column `{column}` line {line}: `{raw}` is not a number"),
        )
    })
}

/// Integer if parseable, `None` for empty / `?` / anything else.
pub fn parse_opt_i64(raw: &str) -> Option<i64> {
    raw.trim().parse::<i64>().ok()
}

/// Simple table writer with a fixed header.
pub struct TableWriter {
    inner: csv::Writer<BufWriter<File>>,
    width: usize,
}

impl TableWriter {
    pub fn create(path: &Path, header: &[&str]) -> Result<Self> {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
        }
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut inner = csv::WriterBuilder::new().from_writer(BufWriter::new(file));
        inner.write_record(header)?;
        Ok(TableWriter {
            inner,
            width: header.len(),
        })
    }

    pub fn row<I, S>(&mut self, cells: I) -> Result<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        let record: Vec<S> = cells.into_iter().collect();
        debug_assert_eq!(record.len(), self.width, "row width mismatch");
        self.inner.write_record(record)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.inner.flush().map_err(|e| Error::io("<csv>", e))?;
        let buf = self
            .inner
            .into_inner()
            .map_err(|e| Error::io("<csv>", e.into_error()))?;
        let mut file = buf
            .into_inner()
            .map_err(|e| Error::io("<csv>", e.into_error()))?;
        file.flush().map_err(|e| Error::io("<csv>", e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_rendering_round_trips() {
        for &x in &[0.1, 1.0 / 3.0, 1e-12, 123456.789, -0.0072, 0.95f64.powi(19)] {
            let s = fmt_f64(x);
            assert_eq!(s.parse::<f64>().unwrap(), x, "{s}");
        }
        assert_eq!(fmt_f64(0.0), "0");
        assert_eq!(fmt_f64(0.5), "5.0000000000000000e-1");
    }

    #[test]
    fn missing_column_is_named() {
        let headers = csv::StringRecord::from(vec!["a", "b"]);
        let cols = Columns::from_headers("studentInfo", &headers);
        let err = cols.require("final_result").unwrap_err();
        assert!(err.to_string().contains("final_result"));
        assert_eq!(err.code(), "E_SCHEMA");
    }
}
