//! Column-oriented time-series record of a closed-loop run.

use std::io::{self, BufRead, Write};

use crate::error::{Error, Result};

/// Uniformly sampled signals, one named column per scalar.
///
/// Vector signals use an index suffix: `q0`, `q1`, `d_hat0`, ...
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SimLog {
    names: Vec<String>,
    data: Vec<Vec<f64>>,
}

impl SimLog {
    pub fn new(names: Vec<String>) -> Self {
        let data = vec![Vec::new(); names.len()];
        Self { names, data }
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Number of rows.
    pub fn len(&self) -> usize {
        self.data.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn push_row(&mut self, row: &[f64]) -> Result<()> {
        if row.len() != self.names.len() {
            return Err(Error::DimensionMismatch {
                context: "log row",
                expected: self.names.len(),
                got: row.len(),
            });
        }
        for (col, v) in self.data.iter_mut().zip(row) {
            col.push(*v);
        }
        Ok(())
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.data[i].as_slice())
    }

    pub fn require(&self, name: &str) -> Result<&[f64]> {
        self.column(name)
            .ok_or_else(|| Error::LogSchema(format!("missing column `{name}`")))
    }

    /// Columns `prefix0 .. prefix{n-1}`.
    pub fn require_vector(&self, prefix: &str, n: usize) -> Result<Vec<&[f64]>> {
        (0..n).map(|i| self.require(&format!("{prefix}{i}"))).collect()
    }

    /// Number of consecutive `prefix{i}` columns present.
    pub fn vector_len(&self, prefix: &str) -> usize {
        (0..).take_while(|i| self.column(&format!("{prefix}{i}")).is_some()).count()
    }

    /// Row `k` of the vector signal `prefix`.
    pub fn vector_at(&self, prefix: &str, k: usize) -> Result<Vec<f64>> {
        let n = self.vector_len(prefix);
        if n == 0 {
            return Err(Error::LogSchema(format!("missing column `{prefix}0`")));
        }
        Ok(self.require_vector(prefix, n)?.iter().map(|c| c[k]).collect())
    }

    /// Keeps the first `rows` rows.
    pub fn truncate(&mut self, rows: usize) {
        for col in &mut self.data {
            col.truncate(rows);
        }
    }

    /// Header line, then one line per row with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{}", self.names.join(","))?;
        let mut line = String::new();
        for k in 0..self.len() {
            line.clear();
            for (i, col) in self.data.iter().enumerate() {
                if i > 0 {
                    line.push(',');
                }
                line.push_str(&format!("{:.16e}", col[k]));
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii output")
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = match lines.next() {
            Some(line) => line.map_err(|e| Error::LogSchema(e.to_string()))?,
            None => return Err(Error::LogSchema("empty CSV".into())),
        };
        let names: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
        let mut log = SimLog::new(names);
        for (k, line) in lines.enumerate() {
            let line = line.map_err(|e| Error::LogSchema(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let row = line
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::LogSchema(format!("row {}: {e}", k + 1)))?;
            log.push_row(&row)
                .map_err(|_| Error::LogSchema(format!("row {} has {} fields", k + 1, row.len())))?;
        }
        Ok(log)
    }
}
