//! Time-series collection, CSV round-tripping, legacy VTK export, and the
//! normalized deviation metric used for model comparisons.

use crate::mesh::Mesh;
use std::fmt::Write as _;
use std::io;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("series length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("empty series have no deviation")]
    EmptySeries,
    #[error("normalizing entry {index} is zero")]
    ZeroNormalizer { index: usize },
    #[error("malformed CSV at line {line}: {msg}")]
    Csv { line: usize, msg: String },
    #[error("unknown column '{0}'")]
    UnknownColumn(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Named scalar channels sampled once per accepted time step. When the
/// first column is `time` the rows must arrive in strictly increasing
/// order; there is no row for t = 0 (channels start at the first step).
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    columns: Vec<String>,
    rows: Vec<Vec<f64>>,
}

impl TimeSeries {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        Self {
            columns: columns.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Append one row; the arity must match and time must advance.
    pub fn push_row(&mut self, row: Vec<f64>) {
        assert_eq!(row.len(), self.columns.len(), "row arity mismatch");
        if self.columns.first().map(String::as_str) == Some("time") {
            if let Some(last) = self.rows.last() {
                assert!(
                    row[0] > last[0],
                    "time must be strictly increasing ({} after {})",
                    row[0],
                    last[0]
                );
            }
        }
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>, OutputError> {
        let idx = self
            .columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| OutputError::UnknownColumn(name.to_string()))?;
        Ok(self.rows.iter().map(|r| r[idx]).collect())
    }

    /// CSV with a header row and fixed scientific notation carrying twelve
    /// significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(&self.columns.join(","));
        out.push('\n');
        for row in &self.rows {
            for (i, v) in row.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                let _ = write!(out, "{v:.11e}");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, OutputError> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or(OutputError::Csv {
            line: 1,
            msg: "missing header".into(),
        })?;
        let columns: Vec<String> = header.split(',').map(|c| c.trim().to_string()).collect();
        let mut series = Self {
            columns,
            rows: Vec::new(),
        };
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let row: Vec<f64> = line
                .split(',')
                .map(|v| {
                    v.trim().parse::<f64>().map_err(|e| OutputError::Csv {
                        line: i + 1,
                        msg: e.to_string(),
                    })
                })
                .collect::<Result<_, _>>()?;
            if row.len() != series.columns.len() {
                return Err(OutputError::Csv {
                    line: i + 1,
                    msg: format!(
                        "expected {} fields, found {}",
                        series.columns.len(),
                        row.len()
                    ),
                });
            }
            series.rows.push(row);
        }
        Ok(series)
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), OutputError> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self, OutputError> {
        Self::from_csv(&std::fs::read_to_string(path)?)
    }
}

/// Which of the two series provides the per-sample normalizer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Normalization {
    ByFirst,
    BySecond,
}

/// Normalized root-mean-square deviation between two equally long series:
/// `sqrt((1/N) sum ((a_i - b_i) / norm_i)^2)` with `norm_i` drawn from the
/// chosen series. Zero normalizer entries are an error.
pub fn mean_square_deviation(
    a: &[f64],
    b: &[f64],
    norm: Normalization,
) -> Result<f64, OutputError> {
    if a.len() != b.len() {
        return Err(OutputError::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(OutputError::EmptySeries);
    }
    let mut acc = 0.0;
    for (index, (&ai, &bi)) in a.iter().zip(b).enumerate() {
        let n = match norm {
            Normalization::ByFirst => ai,
            Normalization::BySecond => bi,
        };
        if n == 0.0 {
            return Err(OutputError::ZeroNormalizer { index });
        }
        let d = (ai - bi) / n;
        acc += d * d;
    }
    Ok((acc / a.len() as f64).sqrt())
}

/// One exported field snapshot: nodal displacement and damage plus
/// per-element stress components (plain Voigt, quadrature average).
pub struct VtkSnapshot<'a> {
    pub mesh: &'a Mesh,
    pub title: &'a str,
    /// Interleaved nodal displacements (ncomp per node).
    pub displacement: &'a [f64],
    /// Nodal damage.
    pub damage: &'a [f64],
    /// Per-element stress `[S11, S22, S12]` (zeros pad 1-D).
    pub cell_stress: &'a [[f64; 3]],
}

/// Zero-padded per-step filename, e.g. `out_000042.vtk`.
pub fn vtk_filename(prefix: &str, step: usize) -> String {
    format!("{prefix}_{step:06}.vtk")
}

/// Render a legacy ASCII VTK unstructured-grid file.
pub fn vtk_string(snap: &VtkSnapshot<'_>) -> String {
    let mesh = snap.mesh;
    let nc = mesh.dim().coords();
    let mut out = String::new();
    out.push_str("# vtk DataFile Version 3.0\n");
    let _ = writeln!(out, "{}", snap.title);
    out.push_str("ASCII\nDATASET UNSTRUCTURED_GRID\n");

    let _ = writeln!(out, "POINTS {} double", mesh.n_nodes());
    for c in &mesh.coords {
        let _ = writeln!(out, "{:.9e} {:.9e} 0.0", c[0], c[1]);
    }

    let npe = mesh.kind.nodes_per_element();
    let _ = writeln!(
        out,
        "CELLS {} {}",
        mesh.n_elements(),
        mesh.n_elements() * (npe + 1)
    );
    for el in &mesh.elements {
        let _ = write!(out, "{npe}");
        for &n in el {
            let _ = write!(out, " {n}");
        }
        out.push('\n');
    }
    let _ = writeln!(out, "CELL_TYPES {}", mesh.n_elements());
    for _ in 0..mesh.n_elements() {
        let _ = writeln!(out, "{}", mesh.kind.vtk_cell_type());
    }

    let _ = writeln!(out, "POINT_DATA {}", mesh.n_nodes());
    out.push_str("VECTORS displacement double\n");
    for n in 0..mesh.n_nodes() {
        let ux = snap.displacement[n * nc];
        let uy = if nc > 1 {
            snap.displacement[n * nc + 1]
        } else {
            0.0
        };
        let _ = writeln!(out, "{ux:.9e} {uy:.9e} 0.0");
    }
    out.push_str("SCALARS damage double 1\nLOOKUP_TABLE default\n");
    for n in 0..mesh.n_nodes() {
        let _ = writeln!(out, "{:.9e}", snap.damage[n]);
    }

    let _ = writeln!(out, "CELL_DATA {}", mesh.n_elements());
    for (slot, name) in ["s11", "s22", "s12"].iter().enumerate() {
        let _ = writeln!(out, "SCALARS {name} double 1");
        out.push_str("LOOKUP_TABLE default\n");
        for s in snap.cell_stress {
            let _ = writeln!(out, "{:.9e}", s[slot]);
        }
    }
    out
}

pub fn write_vtk(path: &Path, snap: &VtkSnapshot<'_>) -> Result<(), OutputError> {
    std::fs::write(path, vtk_string(snap))?;
    Ok(())
}
