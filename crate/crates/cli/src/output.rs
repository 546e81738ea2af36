//! CSV tables with the resolved configuration echoed as `#` comments.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use crate::error::{CliError, CliResult};

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f(x: f64) -> String {
    format!("{x:.16e}")
}

pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(columns: &[&'static str]) -> Self {
        Table {
            columns: columns.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    /// Comment header followed by the CSV body.
    pub fn render(&self, header: &str) -> CliResult<Vec<u8>> {
        let mut buf = Vec::new();
        for line in header.lines() {
            writeln!(buf, "# {line}").expect("write to memory");
        }
        let mut w = csv::Writer::from_writer(buf);
        let fail = |e: csv::Error| CliError::io("formatting CSV", std::io::Error::other(e));
        w.write_record(&self.columns).map_err(fail)?;
        for row in &self.rows {
            w.write_record(row).map_err(fail)?;
        }
        w.into_inner().map_err(|e| CliError::io("formatting CSV", e.into_error()))
    }

    /// Writes atomically to `path` (temp file and rename), or to stdout.
    pub fn write(&self, header: &str, path: Option<&Path>) -> CliResult<()> {
        let bytes = self.render(header)?;
        match path {
            None => std::io::stdout()
                .write_all(&bytes)
                .map_err(|e| CliError::io("writing to stdout", e)),
            Some(path) => write_atomic(path, &bytes),
        }
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let ctx = || format!("writing {}", path.display());
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::io(ctx(), e))?;
    tmp.write_all(bytes).map_err(|e| CliError::io(ctx(), e))?;
    tmp.as_file().sync_all().map_err(|e| CliError::io(ctx(), e))?;
    tmp.persist(path).map_err(|e| CliError::io(ctx(), e.error))?;
    Ok(())
}

/// A results file read back: column name to values, one map per row.
pub struct ReadTable {
    pub columns: Vec<String>,
    pub rows: Vec<HashMap<String, String>>,
}

impl ReadTable {
    pub fn read(path: &Path) -> CliResult<ReadTable> {
        let bad = |msg: String| CliError::Config(format!("{}: {msg}", path.display()));
        let file = std::fs::File::open(path).map_err(|e| CliError::io(format!("reading {}", path.display()), e))?;
        let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(file);
        let columns: Vec<String> = r
            .headers()
            .map_err(|e| bad(e.to_string()))?
            .iter()
            .map(str::to_owned)
            .collect();
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(|e| bad(e.to_string()))?;
            rows.push(columns.iter().cloned().zip(rec.iter().map(str::to_owned)).collect());
        }
        Ok(ReadTable { columns, rows })
    }

    pub fn has(&self, column: &str) -> bool {
        self.columns.iter().any(|c| c == column)
    }

    pub fn float(&self, row: usize, column: &str, path: &Path) -> CliResult<f64> {
        let raw = self.rows[row]
            .get(column)
            .ok_or_else(|| CliError::Config(format!("{}: missing column {column}", path.display())))?;
        raw.trim().parse().map_err(|_| {
            CliError::Config(format!(
                "{}: row {} column {column}: '{raw}' is not a number",
                path.display(),
                row + 1
            ))
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip_exactly() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE] {
            assert_eq!(fmt_f(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
        }
    }

    #[test]
    fn rendered_table_reads_back() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let mut t = Table::new(&["objective_id", "estimate"]);
        t.push(vec!["a".into(), fmt_f(0.25)]);
        t.write("model = \"x\"\nsteps = 3", Some(&path)).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("# model = \"x\"\n# steps = 3\nobjective_id,estimate\n"));
        let back = ReadTable::read(&path).unwrap();
        assert_eq!(back.rows.len(), 1);
        assert_eq!(back.float(0, "estimate", &path).unwrap(), 0.25);
    }
}
