//! File formats: headerless numeric CSV for matrices, edge-list CSV, JSON
//! manifests. Every write goes to a temporary sibling and is renamed into
//! place.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{JglError, Result};
use crate::matrix::SymMatrix;
use crate::select::ClassDataset;
use crate::solver::PrecisionSet;
use crate::synth::{GroundTruth, SyntheticSpec};

/// Largest `|a_ij - a_ji|` accepted (relative to the largest entry) when
/// reading a symmetric matrix.
pub const SYMMETRY_TOLERANCE: f64 = 1e-8;

fn io_err(path: &Path, source: std::io::Error) -> JglError {
    JglError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn parse_err(path: &Path, message: impl Into<String>) -> JglError {
    JglError::Parse {
        path: path.display().to_string(),
        message: message.into(),
    }
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| parse_err(path, "not a file path"))?
        .to_string_lossy();
    let tmp = path.with_file_name(format!(".{name}.tmp{}", std::process::id()));
    let mut f = fs::File::create(&tmp).map_err(|e| io_err(&tmp, e))?;
    f.write_all(bytes).map_err(|e| io_err(&tmp, e))?;
    f.sync_all().map_err(|e| io_err(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        io_err(path, e)
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| parse_err(path, e.to_string()))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| parse_err(path, e.to_string()))
}

fn csv_bytes(rows: impl IntoIterator<Item = Vec<String>>, header: Option<&[&str]>) -> Vec<u8> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    if let Some(h) = header {
        w.write_record(h).expect("writing to memory");
    }
    for row in rows {
        w.write_record(&row).expect("writing to memory");
    }
    w.into_inner().expect("writing to memory")
}

/// Writes a table with a header row; cells are written as given.
pub fn write_table(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    write_atomic(path, &csv_bytes(rows, Some(header)))
}

/// Headerless CSV, one matrix row per line, shortest round-trip decimals.
pub fn write_matrix_csv(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let rows = (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)].to_string()).collect());
    write_atomic(path, &csv_bytes(rows, None))
}

pub fn read_matrix_csv(path: &Path) -> Result<DMatrix<f64>> {
    let text = fs::read(path).map_err(|e| io_err(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_slice());
    let mut values = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(|e| parse_err(path, e.to_string()))?;
        if record.iter().all(str::is_empty) {
            continue;
        }
        match cols {
            None => cols = Some(record.len()),
            Some(c) if c != record.len() => {
                return Err(parse_err(
                    path,
                    format!("row {} has {} fields, expected {c}", r + 1, record.len()),
                ))
            }
            _ => {}
        }
        for (c, field) in record.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| {
                parse_err(path, format!("row {}, column {}: '{field}' is not a number", r + 1, c + 1))
            })?;
            if !v.is_finite() {
                return Err(parse_err(path, format!("row {}, column {}: non-finite value", r + 1, c + 1)));
            }
            values.push(v);
        }
        rows += 1;
    }
    let cols = cols.ok_or_else(|| parse_err(path, "no data rows"))?;
    Ok(DMatrix::from_row_slice(rows, cols, &values))
}

/// Reads a square CSV and checks that it is symmetric.
pub fn read_sym_csv(path: &Path) -> Result<SymMatrix> {
    let m = read_matrix_csv(path)?;
    if m.nrows() != m.ncols() {
        return Err(parse_err(path, format!("matrix is {}x{}, not square", m.nrows(), m.ncols())));
    }
    let scale = m.amax().max(1.0);
    let asym = (&m - m.transpose()).amax();
    if asym > SYMMETRY_TOLERANCE * scale {
        return Err(parse_err(path, format!("matrix is not symmetric (max |a_ij - a_ji| = {asym:e})")));
    }
    SymMatrix::new(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeKind {
    /// Nonzero in every class.
    Common,
    Specific,
}

impl std::fmt::Display for EdgeKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EdgeKind::Common => "common",
            EdgeKind::Specific => "specific",
        })
    }
}

/// One exported edge; `class`, `i` and `j` are 1-based with `i < j`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub class: usize,
    pub i: usize,
    pub j: usize,
    pub value: f64,
    pub kind: EdgeKind,
}

/// Edges with `|theta_ij| > threshold`, ordered by class, then `j`, then `i`.
pub fn edge_records(theta: &PrecisionSet, threshold: f64) -> Vec<EdgeRecord> {
    let p = theta.dim();
    let on = |b: &SymMatrix, i, j| b.get(i, j).abs() > threshold;
    let mut out = Vec::new();
    for (k, b) in theta.blocks().iter().enumerate() {
        for j in 1..p {
            for i in 0..j {
                if !on(b, i, j) {
                    continue;
                }
                let kind = if theta.blocks().iter().all(|o| on(o, i, j)) {
                    EdgeKind::Common
                } else {
                    EdgeKind::Specific
                };
                out.push(EdgeRecord {
                    class: k + 1,
                    i: i + 1,
                    j: j + 1,
                    value: b.get(i, j),
                    kind,
                });
            }
        }
    }
    out
}

pub fn write_edges_csv(path: &Path, edges: &[EdgeRecord]) -> Result<()> {
    let rows = edges.iter().map(|e| {
        vec![
            e.class.to_string(),
            e.i.to_string(),
            e.j.to_string(),
            e.value.to_string(),
            e.kind.to_string(),
        ]
    });
    write_table(path, &["class", "i", "j", "value", "kind"], rows)
}

pub fn precision_file(k: usize) -> String {
    format!("precision_{}.csv", k + 1)
}

pub fn samples_file(k: usize) -> String {
    format!("samples_{}.csv", k + 1)
}

pub fn write_precision_set(dir: &Path, theta: &PrecisionSet) -> Result<Vec<PathBuf>> {
    theta
        .blocks()
        .iter()
        .enumerate()
        .map(|(k, b)| {
            let path = dir.join(precision_file(k));
            write_matrix_csv(&path, b.as_matrix()).map(|_| path)
        })
        .collect()
}

pub fn read_precision_set(dir: &Path, classes: usize) -> Result<PrecisionSet> {
    let blocks = (0..classes)
        .map(|k| read_sym_csv(&dir.join(precision_file(k))))
        .collect::<Result<Vec<_>>>()?;
    PrecisionSet::new(blocks)
}

/// JSON manifest of a ground-truth bundle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthManifest {
    pub spec: SyntheticSpec,
    pub seed: u64,
    pub p: usize,
    pub classes: usize,
    pub counts: Vec<usize>,
    pub precision_files: Vec<String>,
    pub sample_files: Vec<String>,
    pub edges_file: String,
}

pub const MANIFEST_FILE: &str = "manifest.json";
pub const TRUTH_EDGES_FILE: &str = "edges.csv";

pub fn save_ground_truth(dir: &Path, truth: &GroundTruth) -> Result<TruthManifest> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let classes = truth.theta.classes();
    write_precision_set(dir, &truth.theta)?;
    for (k, x) in truth.samples.classes().iter().enumerate() {
        write_matrix_csv(&dir.join(samples_file(k)), x)?;
    }
    let rows = truth.edges.iter().enumerate().flat_map(|(k, edges)| {
        edges.iter().map(move |&(i, j)| {
            vec![
                (k + 1).to_string(),
                (i + 1).to_string(),
                (j + 1).to_string(),
                truth.theta.blocks()[k].get(i, j).to_string(),
            ]
        })
    });
    write_table(&dir.join(TRUTH_EDGES_FILE), &["class", "i", "j", "value"], rows)?;
    let manifest = TruthManifest {
        spec: truth.spec.clone(),
        seed: truth.spec.seed,
        p: truth.theta.dim(),
        classes,
        counts: truth.samples.counts(),
        precision_files: (0..classes).map(precision_file).collect(),
        sample_files: (0..classes).map(samples_file).collect(),
        edges_file: TRUTH_EDGES_FILE.into(),
    };
    write_json(&dir.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

pub fn load_ground_truth(dir: &Path) -> Result<GroundTruth> {
    let manifest: TruthManifest = read_json(&dir.join(MANIFEST_FILE))?;
    let blocks = manifest
        .precision_files
        .iter()
        .map(|f| read_sym_csv(&dir.join(f)))
        .collect::<Result<Vec<_>>>()?;
    let theta = PrecisionSet::new(blocks)?;
    let samples = ClassDataset::new(
        manifest
            .sample_files
            .iter()
            .map(|f| read_matrix_csv(&dir.join(f)))
            .collect::<Result<Vec<_>>>()?,
    )?;
    if theta.classes() != manifest.classes || theta.dim() != manifest.p || samples.dim() != manifest.p {
        return Err(parse_err(
            &dir.join(MANIFEST_FILE),
            "manifest disagrees with the stored matrices",
        ));
    }
    let p = theta.dim();
    let edges = theta
        .blocks()
        .iter()
        .map(|b| {
            (1..p)
                .flat_map(|j| (0..j).map(move |i| (i, j)))
                .filter(|&(i, j)| b.get(i, j) != 0.0)
                .collect::<Vec<_>>()
        })
        .map(|mut e| {
            e.sort();
            e
        })
        .collect();
    Ok(GroundTruth {
        spec: manifest.spec,
        theta,
        edges,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::generate;

    #[test]
    fn matrix_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let m = DMatrix::from_row_slice(2, 3, &[0.1, -1.0 / 3.0, 1e-300, 2.5e10, 0.0, -7.0]);
        let path = dir.path().join("m.csv");
        write_matrix_csv(&path, &m).unwrap();
        assert_eq!(read_matrix_csv(&path).unwrap(), m);
    }

    #[test]
    fn ragged_and_garbage_rows_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        fs::write(&path, "1,2\n3\n").unwrap();
        assert!(matches!(read_matrix_csv(&path), Err(JglError::Parse { .. })));
        fs::write(&path, "1,x\n").unwrap();
        assert!(read_matrix_csv(&path).unwrap_err().to_string().contains("'x'"));
        fs::write(&path, "1,2\n3,4\n").unwrap();
        assert!(read_sym_csv(&path).is_err());
        assert!(matches!(read_matrix_csv(&dir.path().join("none.csv")), Err(JglError::Io { .. })));
    }

    #[test]
    fn edge_kinds() {
        let a = SymMatrix::from_upper_fn(3, |i, j| match (i, j) {
            (0, 1) => 0.5,
            (1, 2) => -0.2,
            _ if i == j => 1.0,
            _ => 0.0,
        });
        let b = SymMatrix::from_upper_fn(3, |i, j| match (i, j) {
            (0, 1) => 0.4,
            _ if i == j => 1.0,
            _ => 0.0,
        });
        let e = edge_records(&PrecisionSet::new(vec![a, b]).unwrap(), 0.0);
        let summary: Vec<_> = e.iter().map(|r| (r.class, r.i, r.j, r.kind)).collect();
        assert_eq!(
            summary,
            vec![
                (1, 1, 2, EdgeKind::Common),
                (1, 2, 3, EdgeKind::Specific),
                (2, 1, 2, EdgeKind::Common),
            ]
        );
    }

    #[test]
    fn ground_truth_round_trip() {
        let truth = generate(&SyntheticSpec {
            p: 6,
            n_total: 30,
            edge_density: 0.4,
            ..SyntheticSpec::default()
        })
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let manifest = save_ground_truth(dir.path(), &truth).unwrap();
        assert_eq!(manifest.spec, truth.spec);
        let back = load_ground_truth(dir.path()).unwrap();
        assert_eq!(back.theta, truth.theta);
        assert_eq!(back.edges, truth.edges);
        assert_eq!(back.samples, truth.samples);
        let leftovers: Vec<_> = fs::read_dir(dir.path())
            .unwrap()
            .filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().contains(".tmp"))
            .collect();
        assert!(leftovers.is_empty());
    }
}
