//! Field snapshot files: one JSON header line, then the node values as
//! little-endian `f64`, x-fastest.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Geometry, Grid, ScalarField};
use crate::io::format::to_json;

pub const SCHEMA: &str = "segflow-field/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotHeader {
    pub schema: String,
    pub dim: usize,
    pub counts: Vec<usize>,
    pub extents: Vec<f64>,
    pub origin: Vec<f64>,
    pub geometry: Geometry,
    pub m: usize,
    pub t: f64,
    pub component: usize,
    pub step: usize,
    pub epsilon: f64,
}

impl SnapshotHeader {
    pub fn for_field(grid: &Grid, m: usize, t: f64, component: usize, step: usize, epsilon: f64) -> Self {
        SnapshotHeader {
            schema: SCHEMA.to_string(),
            dim: grid.dim(),
            counts: grid.counts().to_vec(),
            extents: grid.extents().to_vec(),
            origin: grid.origin().to_vec(),
            geometry: grid.geometry(),
            m,
            t,
            component,
            step,
            epsilon,
        }
    }

    pub fn build_grid(&self) -> Result<Arc<Grid>> {
        Grid::new(self.dim, &self.origin, &self.extents, &self.counts, self.geometry).map(Arc::new)
    }

    pub fn node_count(&self) -> usize {
        self.counts.iter().product()
    }
}

pub fn write_snapshot(path: &Path, header: &SnapshotHeader, values: &[f64]) -> Result<()> {
    if values.len() != header.node_count() {
        return Err(Error::Usage(format!(
            "{} values for a header with {} nodes",
            values.len(),
            header.node_count()
        )));
    }
    let mut buf = Vec::with_capacity(256 + 8 * values.len());
    buf.extend_from_slice(to_json(header).map_err(|e| Error::Numerical(e.to_string()))?.as_bytes());
    buf.push(b'\n');
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let mut f = fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

/// Reads only the header line.
pub fn read_header(path: &Path) -> Result<SnapshotHeader> {
    let mut r = BufReader::new(fs::File::open(path)?);
    let mut line = Vec::new();
    r.read_until(b'\n', &mut line)?;
    parse_header(path, &line)
}

fn parse_header(path: &Path, line: &[u8]) -> Result<SnapshotHeader> {
    let header: SnapshotHeader = serde_json::from_slice(line)
        .map_err(|e| Error::Config(format!("{}: bad snapshot header: {e}", path.display())))?;
    if header.schema != SCHEMA {
        return Err(Error::Config(format!(
            "{}: unsupported schema {:?}",
            path.display(),
            header.schema
        )));
    }
    Ok(header)
}

pub fn read_snapshot(path: &Path) -> Result<(SnapshotHeader, Vec<f64>)> {
    let mut r = BufReader::new(fs::File::open(path)?);
    let mut line = Vec::new();
    r.read_until(b'\n', &mut line)?;
    let header = parse_header(path, &line)?;
    let mut payload = Vec::new();
    r.read_to_end(&mut payload)?;
    if payload.len() != 8 * header.node_count() {
        return Err(Error::Config(format!(
            "{}: payload has {} bytes, header expects {}",
            path.display(),
            payload.len(),
            8 * header.node_count()
        )));
    }
    let values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Ok((header, values))
}

/// Reads a snapshot onto an existing grid, checking that it matches.
pub fn read_field(path: &Path, grid: &Arc<Grid>) -> Result<(SnapshotHeader, ScalarField)> {
    let (header, values) = read_snapshot(path)?;
    let g = header.build_grid()?;
    if *g != **grid {
        return Err(Error::Config(format!("{}: grid does not match the run", path.display())));
    }
    Ok((header, ScalarField::from_values(grid, values)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_grid;

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let g = build_grid(2, &[1.0, 0.7], &[9, 5], Geometry::Box).unwrap();
        let f = ScalarField::from_fn_unmasked(&g, |x| (x[0] * 10.0).sin() / 3.0 + x[1]);
        let h = SnapshotHeader::for_field(&g, 2, 0.1 + 0.2, 1, 17, 1e-3);
        let p = dir.path().join("s.bin");
        write_snapshot(&p, &h, f.values()).unwrap();
        let (h2, f2) = read_field(&p, &g).unwrap();
        assert_eq!(h, h2);
        assert!(f.values().iter().zip(f2.values()).all(|(a, b)| a.to_bits() == b.to_bits()));
        assert_eq!(read_header(&p).unwrap(), h);
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let g = build_grid(1, &[1.0], &[5], Geometry::Box).unwrap();
        let h = SnapshotHeader::for_field(&g, 1, 0.0, 0, 0, 0.1);
        let p = dir.path().join("s.bin");
        write_snapshot(&p, &h, &[0.0; 5]).unwrap();
        let bytes = fs::read(&p).unwrap();
        fs::write(&p, &bytes[..bytes.len() - 3]).unwrap();
        assert!(read_snapshot(&p).is_err());
    }
}
