//! String-valued tables with named columns, read from and written to CSV.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: AsRef<str>>(columns: &[S]) -> Self {
        Self { columns: columns.iter().map(|c| c.as_ref().to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Indices of `names`, or the list of those missing.
    pub fn require(&self, names: &[&str]) -> Result<Vec<usize>> {
        let missing: Vec<&str> = names.iter().copied().filter(|n| self.column(n).is_none()).collect();
        if !missing.is_empty() {
            return Err(Error::MissingColumns(missing.join(", ")));
        }
        Ok(names.iter().map(|n| self.column(n).unwrap()).collect())
    }

    pub fn get(&self, row: usize, name: &str) -> Option<&str> {
        self.column(name).map(|c| self.rows[row][c].as_str())
    }

    /// Parsed value; empty or unparsable cells give `None`.
    pub fn get_f64(&self, row: usize, name: &str) -> Option<f64> {
        self.get(row, name).and_then(|v| v.parse().ok())
    }

    /// Rows whose `column` equals `value`.
    pub fn filter(&self, column: &str, value: &str) -> Table {
        let mut t = Table { columns: self.columns.clone(), rows: Vec::new() };
        if let Some(c) = self.column(column) {
            t.rows = self.rows.iter().filter(|r| r[c] == value).cloned().collect();
        }
        t
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(w);
        w.write_record(&self.columns)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        Self::from_reader(std::fs::File::open(path)?)
    }

    pub fn from_reader<R: std::io::Read>(r: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let columns = rd.headers()?.iter().map(String::from).collect();
        let mut rows = Vec::new();
        for rec in rd.records() {
            rows.push(rec?.iter().map(String::from).collect());
        }
        Ok(Self { columns, rows })
    }

    /// Records as JSON objects keyed by column name.
    pub fn to_json(&self) -> Result<String> {
        let objs: Vec<serde_json::Map<String, serde_json::Value>> = self
            .rows
            .iter()
            .map(|r| {
                self.columns
                    .iter()
                    .zip(r)
                    .map(|(c, v)| (c.clone(), serde_json::Value::String(v.clone())))
                    .collect()
            })
            .collect();
        Ok(serde_json::to_string_pretty(&objs)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_and_lookup() {
        let mut t = Table::new(&["a", "b"]);
        t.push(vec!["1".into(), "x".into()]);
        t.push(vec!["2.5".into(), "".into()]);
        let text = t.to_csv_string().unwrap();
        assert_eq!(text, "a,b\n1,x\n2.5,\n");
        let back = Table::from_reader(text.as_bytes()).unwrap();
        assert_eq!(back, t);
        assert_eq!(t.get_f64(1, "a"), Some(2.5));
        assert_eq!(t.get_f64(1, "b"), None);
        assert!(matches!(t.require(&["a", "c"]), Err(Error::MissingColumns(m)) if m == "c"));
        assert_eq!(t.filter("b", "x").len(), 1);
    }
}
