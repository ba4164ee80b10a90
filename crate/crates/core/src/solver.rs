//! First-order solver for the stress-design program.
//!
//! Global-consensus ADMM over one least-squares variable `ω̄` and four
//! copies, each carrying one piece of the program:
//!
//! * `z₁ = ω̄`, objective `‖·‖₁ − αψᵀ·` (shifted soft-thresholding),
//! * `z₂ = ω̄`, indicator of `ker(E)` (fixed orthogonal projector),
//! * `X = Ψ diag(ω̄) Ψᵀ`, indicator of `{X ⪰ γI}` (eigenvalue clamp),
//! * `Y = B̄ diag(ω̄) B̄ᵀ`, indicator of `{0 ⪯ Y ⪯ βI}` (eigenvalue clamp).
//!
//! The `ω̄` step solves `(2I + A₁ᵀA₁ + A₂ᵀA₂) ω̄ = rhs` with a Cholesky factor
//! computed once. Feasible points have `Ω ⪰ 0`, so clamping `Y` from below
//! at zero instead of `−β` does not cut off any solution.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{invalid, Result, UrfError};
use crate::framework::{effective_edges, StressVector};
use crate::problem::DesignProblem;
use crate::spectral::{clamp_eigs, sym_eig, DEFAULT_RANK_TOL};

/// Slack allowed when certifying the spectral and equilibrium constraints.
pub const FEASIBILITY_TOL: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveParams {
    pub rho: f64,
    pub max_iter: usize,
    pub eps_abs: f64,
    pub eps_rel: f64,
    pub over_relaxation: f64,
}

impl Default for SolveParams {
    fn default() -> Self {
        Self {
            rho: 1.0,
            max_iter: 20_000,
            eps_abs: 1e-8,
            eps_rel: 1e-6,
            over_relaxation: 1.6,
        }
    }
}

impl SolveParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0) || !self.rho.is_finite() {
            return Err(invalid!("rho must be positive, got {}", self.rho));
        }
        if self.max_iter == 0 {
            return Err(invalid!("max_iter must be at least 1"));
        }
        if !(self.eps_abs > 0.0) || !(self.eps_rel > 0.0) {
            return Err(invalid!("stopping tolerances must be positive"));
        }
        if !(1.0..=1.8).contains(&self.over_relaxation) {
            return Err(invalid!(
                "over-relaxation must lie in [1, 1.8], got {}",
                self.over_relaxation
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    MaxIter,
    InfeasibleDetected,
}

impl SolveStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::MaxIter => "max-iter",
            SolveStatus::InfeasibleDetected => "infeasible-detected",
        }
    }
}

/// Constraint values evaluated on a returned stress vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Feasibility {
    /// `λ_min(Ψ diag(ω̄) Ψᵀ)`.
    pub lambda_min_reduced: f64,
    /// `λ_max(B̄ diag(ω̄) B̄ᵀ)`.
    pub lambda_max_stress: f64,
    /// `‖E ω̄‖∞`.
    pub equilibrium_residual: f64,
}

impl Feasibility {
    pub fn evaluate(problem: &DesignProblem, w: &DVector<f64>) -> Result<Self> {
        let reduced = sym_eig(&problem.reduced_stress(w))?;
        let full = sym_eig(&problem.stress_matrix(w))?;
        Ok(Self {
            lambda_min_reduced: reduced.min(),
            lambda_max_stress: full.max(),
            equilibrium_residual: (&problem.equilibrium * w).amax(),
        })
    }

    /// Checks the three constraints with absolute slack `tol`, the spectral
    /// ones measured relative to `β`.
    pub fn satisfied(&self, problem: &DesignProblem, tol: f64) -> bool {
        self.lambda_min_reduced >= problem.gamma - tol * problem.beta
            && self.lambda_max_stress <= problem.beta + tol * problem.beta
            && self.equilibrium_residual <= tol
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub status: SolveStatus,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    /// `‖ω̄‖₁ − αψᵀω̄` at the returned point.
    pub objective: f64,
    pub feasibility: Feasibility,
}

impl SolveReport {
    pub fn certified(&self, problem: &DesignProblem) -> bool {
        self.status == SolveStatus::Optimal && self.feasibility.satisfied(problem, FEASIBILITY_TOL)
    }
}

/// Objective handled by the `z₁` block.
#[derive(Debug, Clone)]
enum Objective {
    /// `‖ω̄‖₁ − αψᵀω̄`.
    Sparse,
    /// `−αψᵀω̄` with entries outside `support` pinned to zero.
    Restricted { support: Vec<bool> },
}

/// Precomputed operators shared by every iteration.
struct Operators {
    chol: Cholesky<f64, Dyn>,
    kernel_projector: DMatrix<f64>,
}

impl Operators {
    fn new(problem: &DesignProblem) -> Result<Self> {
        let m = problem.edges();
        let g1 = problem.psi_mat.transpose() * &problem.psi_mat;
        let g2 = problem.incidence.transpose() * &problem.incidence;
        let system = DMatrix::from_fn(m, m, |e, f| {
            let diag = if e == f { 2.0 } else { 0.0 };
            diag + g1[(e, f)] * g1[(e, f)] + g2[(e, f)] * g2[(e, f)]
        });
        let chol = Cholesky::new(system).ok_or_else(|| {
            UrfError::Internal("ADMM system matrix is not positive definite".into())
        })?;
        let kernel_projector = null_projector(&problem.equilibrium)?;
        Ok(Self {
            chol,
            kernel_projector,
        })
    }
}

/// Orthogonal projector onto `ker(A)`, from the eigenvectors of `AᵀA`.
fn null_projector(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.ncols();
    let eig = sym_eig(&(a.transpose() * a))?;
    let scale = eig.max().abs();
    let mut basis = Vec::new();
    for k in 0..n {
        if eig.values[k].abs() <= DEFAULT_RANK_TOL * scale || scale == 0.0 {
            basis.push(eig.vectors.column(k).into_owned());
        }
    }
    if basis.is_empty() {
        return Ok(DMatrix::zeros(n, n));
    }
    let v = DMatrix::from_columns(&basis);
    Ok(&v * v.transpose())
}

// Aᵀ applied to a matrix for the map ω ↦ G diag(ω) Gᵀ: entry e is g_eᵀ M g_e.
fn adjoint(g: &DMatrix<f64>, m: &DMatrix<f64>) -> DVector<f64> {
    let mg = m * g;
    DVector::from_iterator(
        g.ncols(),
        g.column_iter()
            .zip(mg.column_iter())
            .map(|(a, b)| a.dot(&b)),
    )
}

fn forward(g: &DMatrix<f64>, w: &DVector<f64>) -> DMatrix<f64> {
    let mut scaled = g.clone();
    for (mut col, &wk) in scaled.column_iter_mut().zip(w.iter()) {
        col *= wk;
    }
    scaled * g.transpose()
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// `γ > β`, or no nonzero equilibrium stress on the allowed edges (the
/// lower eigenvalue bound `γ > 0` then excludes `ω̄ = 0` as well).
fn trivially_infeasible(problem: &DesignProblem, objective: &Objective) -> Result<bool> {
    if problem.gamma > problem.beta {
        return Ok(true);
    }
    let allowed: Vec<usize> = match objective {
        Objective::Sparse => (0..problem.edges()).collect(),
        Objective::Restricted { support } => (0..support.len()).filter(|&e| support[e]).collect(),
    };
    if allowed.is_empty() {
        return Ok(true);
    }
    let free = null_projector(&problem.equilibrium.select_columns(&allowed))?;
    Ok(free.trace() < 0.5)
}

struct Outcome {
    w: DVector<f64>,
    status: SolveStatus,
    iterations: usize,
    primal_residual: f64,
    dual_residual: f64,
}

fn admm(problem: &DesignProblem, params: &SolveParams, objective: &Objective) -> Result<Outcome> {
    params.validate()?;
    let m = problem.edges();
    if trivially_infeasible(problem, objective)? {
        return Ok(Outcome {
            w: DVector::zeros(m),
            status: SolveStatus::InfeasibleDetected,
            iterations: 0,
            primal_residual: f64::INFINITY,
            dual_residual: f64::INFINITY,
        });
    }
    let ops = Operators::new(problem)?;
    let n = problem.nodes();
    let k = problem.kernel.dim();
    let rho = params.rho;
    let relax = params.over_relaxation;
    let psi_g = &problem.psi_mat;
    let inc = &problem.incidence;
    let shift = &problem.psi * (problem.alpha / rho);

    let mut z1 = DVector::<f64>::zeros(m);
    let mut z2 = DVector::<f64>::zeros(m);
    let mut x = DMatrix::<f64>::zeros(k, k);
    let mut y = DMatrix::<f64>::zeros(n, n);
    let mut u1 = DVector::<f64>::zeros(m);
    let mut u2 = DVector::<f64>::zeros(m);
    let mut ux = DMatrix::<f64>::zeros(k, k);
    let mut uy = DMatrix::<f64>::zeros(n, n);

    let dims = (2 * m + k * k + n * n) as f64;
    let sqrt_p = dims.sqrt();
    let sqrt_n = (m as f64).sqrt();

    let mut primal = f64::INFINITY;
    let mut dual = f64::INFINITY;

    for iter in 1..=params.max_iter {
        let rhs =
            (&z1 - &u1) + (&z2 - &u2) + adjoint(psi_g, &(&x - &ux)) + adjoint(inc, &(&y - &uy));
        let w = ops.chol.solve(&rhs);
        let aw_x = forward(psi_g, &w);
        let aw_y = forward(inc, &w);

        let h1 = &w * relax + &z1 * (1.0 - relax);
        let h2 = &w * relax + &z2 * (1.0 - relax);
        let hx = &aw_x * relax + &x * (1.0 - relax);
        let hy = &aw_y * relax + &y * (1.0 - relax);

        let z1_old = z1.clone();
        let z2_old = z2.clone();
        let x_old = x.clone();
        let y_old = y.clone();

        let v1 = &h1 + &u1;
        z1 = match objective {
            Objective::Sparse => {
                DVector::from_fn(m, |e, _| soft_threshold(v1[e] + shift[e], 1.0 / rho))
            }
            Objective::Restricted { support } => {
                DVector::from_fn(m, |e, _| if support[e] { v1[e] + shift[e] } else { 0.0 })
            }
        };
        z2 = &ops.kernel_projector * (&h2 + &u2);
        x = clamp_eigs(&(&hx + &ux), problem.gamma, f64::INFINITY)?;
        y = clamp_eigs(&(&hy + &uy), 0.0, problem.beta)?;

        u1 += &h1 - &z1;
        u2 += &h2 - &z2;
        ux += &hx - &x;
        uy += &hy - &y;

        let r1 = &w - &z1;
        let r2 = &w - &z2;
        let rx = &aw_x - &x;
        let ry = &aw_y - &y;
        primal =
            (r1.norm_squared() + r2.norm_squared() + rx.norm_squared() + ry.norm_squared()).sqrt();
        let s = (&z1 - &z1_old)
            + (&z2 - &z2_old)
            + adjoint(psi_g, &(&x - &x_old))
            + adjoint(inc, &(&y - &y_old));
        dual = rho * s.norm();

        let aw_norm = (2.0 * w.norm_squared() + aw_x.norm_squared() + aw_y.norm_squared()).sqrt();
        let z_norm =
            (z1.norm_squared() + z2.norm_squared() + x.norm_squared() + y.norm_squared()).sqrt();
        let eps_pri = sqrt_p * params.eps_abs + params.eps_rel * aw_norm.max(z_norm);
        let aty = &u1 + &u2 + adjoint(psi_g, &ux) + adjoint(inc, &uy);
        let eps_dual = sqrt_n * params.eps_abs + params.eps_rel * rho * aty.norm();

        if primal <= eps_pri && dual <= eps_dual {
            return Ok(Outcome {
                w: z1,
                status: SolveStatus::Optimal,
                iterations: iter,
                primal_residual: primal,
                dual_residual: dual,
            });
        }
    }
    Ok(Outcome {
        w: z1,
        status: SolveStatus::MaxIter,
        iterations: params.max_iter,
        primal_residual: primal,
        dual_residual: dual,
    })
}

/// Moves `w` to the nearest point of `ker(E)` that keeps its zero pattern.
fn project_on_support(problem: &DesignProblem, w: &DVector<f64>) -> Result<DVector<f64>> {
    let support: Vec<usize> = (0..w.len()).filter(|&e| w[e] != 0.0).collect();
    if support.is_empty() {
        return Ok(w.clone());
    }
    let e_s = problem.equilibrium.select_columns(&support);
    let proj = null_projector(&e_s)?;
    let w_s = DVector::from_iterator(support.len(), support.iter().map(|&e| w[e]));
    let cleaned = proj * w_s;
    let mut out = DVector::zeros(w.len());
    for (k, &e) in support.iter().enumerate() {
        out[e] = cleaned[k];
    }
    Ok(out)
}

fn finish(problem: &DesignProblem, outcome: Outcome) -> Result<(StressVector, SolveReport)> {
    let mut w = outcome.w;
    if outcome.status == SolveStatus::Optimal {
        let cleaned = project_on_support(problem, &w)?;
        // keep the raw iterate when the support carries no exact equilibrium
        let tol = 100.0 * outcome.primal_residual.max(1e-9);
        if (&cleaned - &w).norm() <= tol {
            w = cleaned;
        }
    }
    let feasibility = Feasibility::evaluate(problem, &w)?;
    let report = SolveReport {
        status: outcome.status,
        iterations: outcome.iterations,
        primal_residual: outcome.primal_residual,
        dual_residual: outcome.dual_residual,
        objective: problem.objective(&w),
        feasibility,
    };
    Ok((StressVector(w), report))
}

/// Solves the sparse design program for `problem`.
pub fn solve(problem: &DesignProblem, params: &SolveParams) -> Result<(StressVector, SolveReport)> {
    let outcome = admm(problem, params, &Objective::Sparse)?;
    finish(problem, outcome)
}

/// Result of [`polish`].
#[derive(Debug, Clone, PartialEq)]
pub struct Polished {
    pub stress: StressVector,
    /// `false` when the restricted program failed and the input was kept.
    pub improved: bool,
    pub report: Option<SolveReport>,
}

/// Re-solves on the thresholded support of `w` with the `ℓ₁` term dropped,
/// maximizing `ψᵀω̄` alone. The support never grows; the input comes back
/// unchanged if the restricted program cannot be certified.
pub fn polish(
    problem: &DesignProblem,
    w: &StressVector,
    tau_rel: f64,
    params: &SolveParams,
) -> Result<Polished> {
    let kept = effective_edges(&problem.ordering, w, tau_rel)?;
    let unchanged = Polished {
        stress: w.clone(),
        improved: false,
        report: None,
    };
    if kept.count() == 0 {
        return Ok(unchanged);
    }
    let mut support = vec![false; problem.edges()];
    for &e in &kept.indices {
        support[e] = true;
    }
    let outcome = admm(problem, params, &Objective::Restricted { support })?;
    let (polished, report) = finish(problem, outcome)?;
    if !report.certified(problem) {
        return Ok(Polished {
            report: Some(report),
            ..unchanged
        });
    }
    let before = normalized_gap(problem, w.values())?;
    let after = normalized_gap(problem, polished.values())?;
    if after + 1e-9 < before {
        return Ok(Polished {
            report: Some(report),
            ..unchanged
        });
    }
    Ok(Polished {
        stress: polished,
        improved: true,
        report: Some(report),
    })
}

// λ_{D+2} of Ω / λ_max(Ω)
fn normalized_gap(problem: &DesignProblem, w: &DVector<f64>) -> Result<f64> {
    let eig = sym_eig(&problem.stress_matrix(w))?;
    let top = eig.max();
    if top <= 0.0 {
        return Ok(0.0);
    }
    Ok(eig.values[problem.dim() + 1] / top)
}

/// `Ω / λ_max(Ω)`.
pub fn normalize_stress(omega: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = sym_eig(omega)?;
    let top = eig.max();
    if !(top > 0.0) {
        return Err(invalid!(
            "cannot normalize a stress matrix with largest eigenvalue {top}"
        ));
    }
    Ok(omega / top)
}
