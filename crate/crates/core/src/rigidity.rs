//! Universal-rigidity certificates for designed stress matrices.
//!
//! A stress matrix supports affine formation control when it is positive
//! semidefinite, has rank `N − D − 1`, and annihilates the rows of `P̄`.
//! For a generic configuration these three properties are equivalent to
//! universal rigidity of the underlying framework.

use nalgebra::DMatrix;

use crate::error::{invalid, Result};
use crate::framework::{
    canonical_edges, effective_edges, stress_from_matrix, Configuration, DEFAULT_EDGE_TOL,
};
use crate::spectral::{numerical_rank, sym_eig, DEFAULT_RANK_TOL};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidityTolerances {
    /// `λ_min ≥ −psd · λ_max`.
    pub psd: f64,
    /// `‖Ω P̄ᵀ‖_F ≤ null · ‖Ω‖_F ‖P̄‖_F`.
    pub null: f64,
    /// Relative eigenvalue cut for the numerical rank.
    pub rank: f64,
    /// Relative stress cut for counting edges.
    pub edge: f64,
}

impl Default for RigidityTolerances {
    fn default() -> Self {
        Self {
            psd: 1e-8,
            null: 1e-8,
            rank: DEFAULT_RANK_TOL,
            edge: DEFAULT_EDGE_TOL,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RigidityCertificate {
    pub psd_ok: bool,
    pub rank_ok: bool,
    pub nullspace_ok: bool,
    pub rank: usize,
    pub expected_rank: usize,
    /// Ascending eigenvalues of `Ω`.
    pub spectrum: Vec<f64>,
    /// `λ_{D+2}`, the smallest eigenvalue outside the affine nullspace.
    pub lambda_min_nonzero: f64,
    /// `λ_max / λ_{D+2}`; infinite when `λ_{D+2}` is numerically zero.
    pub condition_number: f64,
    pub edges_effective: usize,
    /// The three checks imply universal rigidity only for generic
    /// configurations; for special ones (regular polygons, lattices) they
    /// still certify the stress properties formation stability needs.
    pub generic_assumed: bool,
    pub tolerances: RigidityTolerances,
}

impl RigidityCertificate {
    pub fn passes(&self) -> bool {
        self.psd_ok && self.rank_ok && self.nullspace_ok
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumReport {
    pub spectrum: Vec<f64>,
    pub lambda_min_nonzero: f64,
    pub condition_number: f64,
    /// `false` when `λ_{D+2}` is numerically zero.
    pub rigid: bool,
}

/// Ascending spectrum, `λ_{D+2}` and `κ = λ_max / λ_{D+2}`.
pub fn spectrum_report(omega: &DMatrix<f64>, dim: usize) -> Result<SpectrumReport> {
    spectrum_report_with(omega, dim, DEFAULT_RANK_TOL)
}

fn spectrum_report_with(omega: &DMatrix<f64>, dim: usize, tol: f64) -> Result<SpectrumReport> {
    let n = omega.nrows();
    if n < dim + 2 {
        return Err(invalid!(
            "{n}x{n} stress has no (D+2)-th eigenvalue for D = {dim}"
        ));
    }
    let eig = sym_eig(omega)?;
    let spectrum: Vec<f64> = eig.values.iter().copied().collect();
    let top = eig.max();
    let lambda = spectrum[dim + 1];
    let rigid = top > 0.0 && lambda > tol * top;
    let condition_number = if rigid { top / lambda } else { f64::INFINITY };
    Ok(SpectrumReport {
        spectrum,
        lambda_min_nonzero: lambda,
        condition_number,
        rigid,
    })
}

pub fn verify_urf(
    omega: &DMatrix<f64>,
    config: &Configuration,
    tols: &RigidityTolerances,
) -> Result<RigidityCertificate> {
    let n = config.len();
    let d = config.dim();
    if omega.nrows() != n || omega.ncols() != n {
        return Err(invalid!(
            "stress is {}x{}, configuration has {n} agents",
            omega.nrows(),
            omega.ncols()
        ));
    }
    let report = spectrum_report_with(omega, d, tols.rank)?;
    let top = report.spectrum.last().copied().unwrap_or(0.0);
    let bottom = report.spectrum.first().copied().unwrap_or(0.0);
    let scale = report.spectrum.iter().fold(0.0_f64, |a, l| a.max(l.abs()));

    let psd_ok = bottom >= -tols.psd * top.max(0.0) && (top > 0.0 || scale == 0.0);
    let rank = numerical_rank(&report.spectrum, tols.rank);
    let expected_rank = n - d - 1;
    let rank_ok = rank == expected_rank;

    let p_bar = config.augmented();
    let residual = (omega * p_bar.transpose()).norm();
    let nullspace_ok = residual <= tols.null * omega.norm() * p_bar.norm();

    let ordering = canonical_edges(n)?;
    let stress = stress_from_matrix(&ordering, omega)?;
    let edges_effective = effective_edges(&ordering, &stress, tols.edge)?.count();

    Ok(RigidityCertificate {
        psd_ok,
        rank_ok,
        nullspace_ok,
        rank,
        expected_rank,
        spectrum: report.spectrum,
        lambda_min_nonzero: report.lambda_min_nonzero,
        condition_number: report.condition_number,
        edges_effective,
        generic_assumed: true,
        tolerances: *tols,
    })
}
