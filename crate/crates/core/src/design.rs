//! One-shot design pipeline: build, solve, normalize, certify.

use nalgebra::DMatrix;

use crate::error::Result;
use crate::framework::{effective_edges, Configuration, SparseEdges, StressVector};
use crate::problem::{build_problem, DesignProblem, Hyperparams};
use crate::rigidity::{verify_urf, RigidityCertificate, RigidityTolerances};
use crate::solver::{normalize_stress, solve, SolveParams, SolveReport};

#[derive(Debug, Clone)]
pub struct Design {
    pub problem: DesignProblem,
    pub stress: StressVector,
    pub report: SolveReport,
    pub edges: SparseEdges,
    pub omega: DMatrix<f64>,
    /// `Ω / λ_max(Ω)`; equal to `omega` when that has no positive eigenvalue.
    pub omega_normalized: DMatrix<f64>,
    /// Certificate of the normalized stress.
    pub certificate: RigidityCertificate,
}

pub fn design(
    config: &Configuration,
    hyper: Hyperparams,
    params: &SolveParams,
    tau_rel: f64,
) -> Result<Design> {
    let problem = build_problem(config, hyper)?;
    design_problem(problem, params, tau_rel)
}

pub fn design_problem(
    problem: DesignProblem,
    params: &SolveParams,
    tau_rel: f64,
) -> Result<Design> {
    let (stress, report) = solve(&problem, params)?;
    let edges = effective_edges(&problem.ordering, &stress, tau_rel)?;
    let omega = problem.stress_matrix(stress.values());
    let omega_normalized = normalize_stress(&omega).unwrap_or_else(|_| omega.clone());
    let tols = RigidityTolerances {
        edge: tau_rel,
        ..RigidityTolerances::default()
    };
    let certificate = verify_urf(&omega_normalized, &problem.config, &tols)?;
    Ok(Design {
        problem,
        stress,
        report,
        edges,
        omega,
        omega_normalized,
        certificate,
    })
}
