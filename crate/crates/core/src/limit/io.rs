//! Density fields as a CSV of (v1, v2, f) rows plus a JSON sidecar.
//!
//! Floats are written in shortest round-trip form, so reading a field back
//! reproduces it bit for bit.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DensityField, Grid2D};
use crate::error::{Error, Result};

const SCHEMA: &str = "landau-field/1";

/// Metadata stored next to the CSV values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSidecar {
    pub schema: String,
    pub grid: Grid2D,
    pub time: f64,
    /// Initial anisotropy D_αα of the moment layer, when known.
    pub anisotropy: Option<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct Row {
    v1: f64,
    v2: f64,
    f: f64,
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}

pub fn write_field(
    field: &DensityField,
    anisotropy: Option<&[f64]>,
    csv_path: &Path,
    json_path: &Path,
) -> Result<()> {
    let grid = field.grid();
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(csv_path)?));
    for i in 0..grid.n() {
        for j in 0..grid.n() {
            w.serialize(Row { v1: grid.coord(i), v2: grid.coord(j), f: field.at(i, j) })
                .map_err(csv_err)?;
        }
    }
    w.flush()?;
    let sidecar = FieldSidecar {
        schema: SCHEMA.to_string(),
        grid: *grid,
        time: field.time(),
        anisotropy: anisotropy.map(<[f64]>::to_vec),
    };
    let mut out = BufWriter::new(File::create(json_path)?);
    serde_json::to_writer_pretty(&mut out, &sidecar)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

pub fn read_field(csv_path: &Path, json_path: &Path) -> Result<(DensityField, FieldSidecar)> {
    let sidecar: FieldSidecar = serde_json::from_reader(BufReader::new(File::open(json_path)?))?;
    if sidecar.schema != SCHEMA {
        return Err(Error::Format(format!("unsupported field schema `{}`", sidecar.schema)));
    }
    let grid = sidecar.grid;
    let n = grid.n();
    let mut r = csv::Reader::from_reader(BufReader::new(File::open(csv_path)?));
    let mut values = Vec::with_capacity(n * n);
    for (k, row) in r.deserialize::<Row>().enumerate() {
        let row = row.map_err(csv_err)?;
        let (i, j) = (k / n, k % n);
        if k >= n * n || row.v1 != grid.coord(i) || row.v2 != grid.coord(j) {
            return Err(Error::Format(format!("row {k} does not match the grid node order")));
        }
        if !row.f.is_finite() {
            return Err(Error::Format(format!("non-finite density in row {k}")));
        }
        values.push(row.f);
    }
    if values.len() != n * n {
        return Err(Error::Format(format!("expected {} rows, found {}", n * n, values.len())));
    }
    let probe = DensityField { grid, values: Vec::new(), time: sidecar.time };
    Ok((probe.with_values(values, sidecar.time), sidecar))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Dim;
    use crate::particle::InitialLaw;

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let law = InitialLaw::bimodal(Dim::TWO);
        let f = DensityField::from_law(Grid2D::new(6.5, 33).unwrap(), &law).unwrap();
        let (c, j) = (dir.path().join("f.csv"), dir.path().join("f.json"));
        let d = law.moment_state().unwrap();
        write_field(&f, Some(d.anisotropy()), &c, &j).unwrap();
        let (g, side) = read_field(&c, &j).unwrap();
        assert_eq!(g, f);
        assert!(f.values().iter().zip(g.values()).all(|(a, b)| a.to_bits() == b.to_bits()));
        assert_eq!(side.anisotropy.as_deref(), Some(d.anisotropy()));
    }

    #[test]
    fn rejects_truncated_csv() {
        let dir = tempfile::tempdir().unwrap();
        let f = DensityField::equilibrium(Grid2D::new(6.0, 9).unwrap()).unwrap();
        let (c, j) = (dir.path().join("f.csv"), dir.path().join("f.json"));
        write_field(&f, None, &c, &j).unwrap();
        let text = std::fs::read_to_string(&c).unwrap();
        let cut: Vec<&str> = text.lines().take(20).collect();
        std::fs::write(&c, cut.join("\n")).unwrap();
        assert!(read_field(&c, &j).is_err());
    }
}
