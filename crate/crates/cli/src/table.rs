//! Versioned CSV tables.
//!
//! Every table starts with a `#name/major` line followed by an ordinary CSV
//! header. Readers accept only the major versions they know. Floats use the
//! shortest representation that round-trips, so equal values always give
//! equal bytes.

use std::collections::BTreeMap;
use std::path::Path;

use landau_core::StatRecord;

use crate::error::{CliError, CliResult};

pub const STATS: &str = "landau-stats";
pub const LLN: &str = "landau-lln";
pub const CHAOS: &str = "landau-chaos";
pub const MOMENTS: &str = "landau-moments";
pub const DIAGNOSTICS: &str = "landau-diagnostics";
pub const MAJOR: u32 = 1;

const KNOWN: [&str; 5] = [STATS, LLN, CHAOS, MOMENTS, DIAGNOSTICS];

#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub schema: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(schema: &str, header: Vec<String>) -> Self {
        Table { schema: schema.into(), header, rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        let mut text = format!("#{}/{}\n", self.schema, MAJOR).into_bytes();
        {
            let mut w = csv::Writer::from_writer(&mut text);
            w.write_record(&self.header)?;
            for r in &self.rows {
                w.write_record(r)?;
            }
            w.flush()?;
        }
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let (first, rest) = text.split_once('\n').unwrap_or((&text, ""));
        let tag = first
            .strip_prefix('#')
            .ok_or_else(|| CliError::Config(format!("{}: missing schema line", path.display())))?;
        let (name, major) = tag
            .split_once('/')
            .ok_or_else(|| CliError::Config(format!("{}: malformed schema `{tag}`", path.display())))?;
        if !KNOWN.contains(&name) {
            return Err(CliError::Config(format!("{}: unknown schema `{name}`", path.display())));
        }
        if major.trim().parse::<u32>().ok() != Some(MAJOR) {
            return Err(CliError::Config(format!(
                "{}: schema {name} version {major} is not supported (expected {MAJOR})",
                path.display()
            )));
        }
        let mut r = csv::Reader::from_reader(rest.as_bytes());
        let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        let mut rows = Vec::new();
        for rec in r.records() {
            rows.push(rec?.iter().map(str::to_string).collect());
        }
        Ok(Table { schema: name.into(), header, rows })
    }

    pub fn column(&self, name: &str) -> CliResult<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::Config(format!("{} table has no column `{name}`", self.schema)))
    }

    pub fn floats(&self, name: &str) -> CliResult<Vec<f64>> {
        let c = self.column(name)?;
        self.rows
            .iter()
            .map(|r| r[c].parse::<f64>().map_err(|e| CliError::Config(format!("column `{name}`: {e}"))))
            .collect()
    }
}

pub fn num(x: f64) -> String {
    format!("{x}")
}

fn pair_label(a: usize, b: usize) -> String {
    format!("{}{}", a + 1, b + 1)
}

/// Header of the per-replica statistics table for dimension d.
pub fn stats_header(d: usize, hierarchy: &BTreeMap<String, f64>) -> Vec<String> {
    let mut h: Vec<String> = ["time", "p", "M2", "M4", "Mp"].iter().map(|s| s.to_string()).collect();
    h.extend((1..=d).map(|a| format!("Psi_{a}")));
    for a in 0..d {
        for b in a + 1..d {
            h.push(format!("cross_{}", pair_label(a, b)));
        }
    }
    h.push("lln_value".into());
    h.extend(hierarchy.keys().map(|k| format!("hierarchy_{k}")));
    h
}

pub fn stats_table(records: &[StatRecord]) -> CliResult<Table> {
    let first = records.first().ok_or_else(|| CliError::Numerical("no records to write".into()))?;
    let d = first.psi.len();
    let mut t = Table::new(STATS, stats_header(d, &first.hierarchy));
    for r in records {
        let mut row = vec![num(r.time), r.p.to_string(), num(r.m2), num(r.m4), num(r.mp)];
        row.extend(r.psi.iter().copied().map(num));
        row.extend(r.cross_moments.iter().copied().map(num));
        row.push(num(r.lln_value));
        row.extend(r.hierarchy.values().copied().map(num));
        t.push(row);
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_version_gate() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        let mut t = Table::new(LLN, vec!["N".into(), "mean".into()]);
        t.push(vec!["250".into(), num(0.1 + 0.2)]);
        t.write(&p).unwrap();
        let back = Table::read(&p).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.floats("mean").unwrap(), vec![0.1 + 0.2]);
        assert!(back.floats("slope").is_err());

        let text = std::fs::read_to_string(&p).unwrap();
        std::fs::write(&p, text.replace("/1\n", "/2\n")).unwrap();
        assert!(Table::read(&p).is_err());
        std::fs::write(&p, "N,mean\n1,2\n").unwrap();
        assert!(Table::read(&p).is_err());
    }
}
