//! On-disk formats: `design.json`, matrix CSVs, edge lists and traces.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use urf_core::rigidity::RigidityCertificate;
use urf_core::sim::{RateEstimate, SimTrace};
use urf_core::solver::SolveReport;
use urf_core::Design;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub i: usize,
    pub j: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub psd: f64,
    pub null: f64,
    pub rank: f64,
    pub edge: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateRecord {
    pub passes: bool,
    pub psd_ok: bool,
    pub rank_ok: bool,
    pub nullspace_ok: bool,
    pub rank: usize,
    pub expected_rank: usize,
    pub generic_assumed: bool,
    pub spectrum: Vec<f64>,
    pub lambda_min_nonzero: f64,
    /// `null` when infinite.
    pub condition_number: Option<f64>,
    pub edges_effective: usize,
    pub tolerances: Tolerances,
}

impl From<&RigidityCertificate> for CertificateRecord {
    fn from(c: &RigidityCertificate) -> Self {
        Self {
            passes: c.passes(),
            psd_ok: c.psd_ok,
            rank_ok: c.rank_ok,
            nullspace_ok: c.nullspace_ok,
            rank: c.rank,
            expected_rank: c.expected_rank,
            generic_assumed: c.generic_assumed,
            spectrum: c.spectrum.clone(),
            lambda_min_nonzero: c.lambda_min_nonzero,
            condition_number: finite(c.condition_number),
            edges_effective: c.edges_effective,
            tolerances: Tolerances {
                psd: c.tolerances.psd,
                null: c.tolerances.null,
                rank: c.tolerances.rank,
                edge: c.tolerances.edge,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityRecord {
    pub lambda_min_reduced: f64,
    pub lambda_max_stress: f64,
    pub equilibrium_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveRecord {
    pub status: String,
    pub iterations: usize,
    pub primal_residual: Option<f64>,
    pub dual_residual: Option<f64>,
    pub objective: f64,
    pub feasibility: FeasibilityRecord,
}

impl From<&SolveReport> for SolveRecord {
    fn from(r: &SolveReport) -> Self {
        Self {
            status: r.status.as_str().to_string(),
            iterations: r.iterations,
            primal_residual: finite(r.primal_residual),
            dual_residual: finite(r.dual_residual),
            objective: r.objective,
            feasibility: FeasibilityRecord {
                lambda_min_reduced: r.feasibility.lambda_min_reduced,
                lambda_max_stress: r.feasibility.lambda_max_stress,
                equilibrium_residual: r.feasibility.equilibrium_residual,
            },
        }
    }
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

/// Everything `design` produces, in the shape written to `design.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignResult {
    pub dimension: usize,
    pub nodes: usize,
    /// One entry per agent.
    pub positions: Vec<Vec<f64>>,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub tau: f64,
    /// `M`, the number of edges kept after thresholding.
    pub edges_effective: usize,
    pub edges: Vec<EdgeRecord>,
    /// Full stress vector over the lexicographic complete-graph ordering.
    pub stress: Vec<f64>,
    pub omega_raw: Vec<Vec<f64>>,
    pub omega_normalized: Vec<Vec<f64>>,
    /// Certificate of the normalized stress.
    pub certificate: CertificateRecord,
    pub solve: SolveRecord,
}

impl DesignResult {
    pub fn from_design(d: &Design, tau: f64) -> Self {
        Self {
            dimension: d.problem.dim(),
            nodes: d.problem.nodes(),
            positions: d.problem.config.points(),
            alpha: d.problem.alpha,
            beta: d.problem.beta,
            gamma: d.problem.gamma,
            tau,
            edges_effective: d.edges.count(),
            edges: d
                .edges
                .edges
                .iter()
                .zip(&d.edges.weights)
                .map(|(&(i, j), &weight)| EdgeRecord { i, j, weight })
                .collect(),
            stress: d.stress.values().iter().copied().collect(),
            omega_raw: rows(&d.omega),
            omega_normalized: rows(&d.omega_normalized),
            certificate: CertificateRecord::from(&d.certificate),
            solve: SolveRecord::from(&d.report),
        }
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| {
            CliError::Input(format!(
                "{}: line {}, column {}: {e}",
                path.display(),
                e.line(),
                e.column()
            ))
        })
    }

    pub fn normalized_matrix(&self) -> Result<DMatrix<f64>, CliError> {
        from_rows(&self.omega_normalized)
    }
}

pub fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub fn from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>, CliError> {
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(CliError::Input(format!(
            "expected a square matrix, got {n} rows of lengths {:?}",
            rows.iter().map(Vec::len).collect::<Vec<_>>()
        )));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text =
        serde_json::to_string_pretty(value).map_err(|e| CliError::Io(std::io::Error::other(e)))?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Io(std::io::Error::other(e))
}

/// `N` rows of `N` comma-separated values, no header.
pub fn write_matrix_csv(path: &Path, m: &DMatrix<f64>) -> Result<(), CliError> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(csv_err)?;
    for r in m.row_iter() {
        w.write_record(r.iter().map(|x| x.to_string()))
            .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_matrix_csv(path: &Path) -> Result<DMatrix<f64>, CliError> {
    let bad = |msg: String| CliError::Input(format!("{}: {msg}", path.display()));
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| bad(e.to_string()))?;
    let mut rows = Vec::new();
    for (line, record) in r.records().enumerate() {
        let record = record.map_err(|e| bad(e.to_string()))?;
        let row = record
            .iter()
            .enumerate()
            .map(|(col, field)| {
                field.parse::<f64>().map_err(|_| {
                    bad(format!(
                        "line {}, field {}: `{field}` is not a number",
                        line + 1,
                        col + 1
                    ))
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    from_rows(&rows).map_err(|e| bad(e.to_string()))
}

pub fn write_edges_csv(path: &Path, edges: &[EdgeRecord]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["i", "j", "weight"]).map_err(csv_err)?;
    for e in edges {
        w.write_record([e.i.to_string(), e.j.to_string(), e.weight.to_string()])
            .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// `t,delta` rows followed by a `# rate=<value>` footer.
pub fn write_trace_csv(path: &Path, trace: &SimTrace, rate: &RateEstimate) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["t", "delta"]).map_err(csv_err)?;
    for (t, d) in trace.times.iter().zip(&trace.delta) {
        w.write_record([t.to_string(), d.to_string()])
            .map_err(csv_err)?;
    }
    let mut bytes = w.into_inner().map_err(|e| CliError::Io(e.into_error()))?;
    bytes.extend_from_slice(format!("# rate={}\n", rate.rate).as_bytes());
    if rate.lower_bound {
        bytes.extend_from_slice(b"# rate_is_lower_bound=true\n");
    }
    fs::write(path, bytes)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_csv_roundtrip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let m =
            DMatrix::from_row_slice(2, 2, &[0.1 + 0.2, -1e-300, 1.0 / 3.0, 123456789.12345679]);
        write_matrix_csv(&path, &m).unwrap();
        assert_eq!(read_matrix_csv(&path).unwrap(), m);
    }

    #[test]
    fn ragged_matrix_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        fs::write(&path, "1,2\n3\n").unwrap();
        assert!(matches!(read_matrix_csv(&path), Err(CliError::Input(_))));
        fs::write(&path, "1,x\n3,4\n").unwrap();
        let err = read_matrix_csv(&path).unwrap_err();
        assert!(err.to_string().contains("line 1, field 2"), "{err}");
    }
}
