//! Data of the convex stress-design program.
//!
//! Over the complete graph, the design variable `ω̄` is chosen to
//!
//! ```text
//! minimize    ‖ω̄‖₁ − α ψᵀω̄
//! subject to  Ψ diag(ω̄) Ψᵀ ⪰ γ I
//!             ‖B̄ diag(ω̄) B̄ᵀ‖₂ ≤ β
//!             E ω̄ = 0
//! ```
//!
//! where `Ψ = Qᵀ B̄` for an orthonormal kernel basis `Q` of `P̄`,
//! `ψ = diag(ΨᵀΨ)` turns `tr(QᵀΩQ)` into a linear function of `ω̄`,
//! and `E` stacks the equilibrium conditions `P̄ Ω = 0`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, UrfError};
use crate::framework::{canonical_edges, incidence, Configuration, EdgeOrdering};
use crate::spectral::{kernel_basis, KernelBasis};

pub const DEFAULT_BETA: f64 = 1.0;
pub const DEFAULT_GAMMA: f64 = 0.1;

/// Weighting and spectral bounds of the design program.
///
/// `alpha = None` selects [`alpha_max`], the largest weight that keeps the
/// origin a minimizer of the unconstrained objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyperparams {
    pub alpha: Option<f64>,
    pub beta: f64,
    pub gamma: f64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            alpha: None,
            beta: DEFAULT_BETA,
            gamma: DEFAULT_GAMMA,
        }
    }
}

impl Hyperparams {
    pub fn with_alpha(alpha: f64) -> Self {
        Self {
            alpha: Some(alpha),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(UrfError::InvalidHyperparameters(msg));
        if let Some(a) = self.alpha {
            if !(a > 0.0) || !a.is_finite() {
                return bad(format!("alpha must be positive and finite, got {a}"));
            }
        }
        if !(self.gamma > 0.0) || !self.gamma.is_finite() {
            return bad(format!("gamma must be positive, got {}", self.gamma));
        }
        if !(self.beta > self.gamma) || !self.beta.is_finite() {
            return bad(format!(
                "beta must exceed gamma, got beta = {} and gamma = {}",
                self.beta, self.gamma
            ));
        }
        Ok(())
    }
}

/// Fully assembled design program for one configuration.
#[derive(Debug, Clone)]
pub struct DesignProblem {
    pub config: Configuration,
    pub ordering: EdgeOrdering,
    /// `B̄`, `N × M̄`.
    pub incidence: DMatrix<f64>,
    pub kernel: KernelBasis,
    /// `Ψ = QᵀB̄`, `(N−D−1) × M̄`.
    pub psi_mat: DMatrix<f64>,
    /// `ψ = diag(ΨᵀΨ)`.
    pub psi: DVector<f64>,
    /// Equilibrium operator, `N(D+1) × M̄`.
    pub equilibrium: DMatrix<f64>,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl DesignProblem {
    pub fn nodes(&self) -> usize {
        self.config.len()
    }

    pub fn dim(&self) -> usize {
        self.config.dim()
    }

    pub fn edges(&self) -> usize {
        self.ordering.len()
    }

    /// `‖ω̄‖₁ − α ψᵀω̄`.
    pub fn objective(&self, w: &DVector<f64>) -> f64 {
        w.iter().map(|x| x.abs()).sum::<f64>() - self.alpha * self.psi.dot(w)
    }

    /// `Ψ diag(ω̄) Ψᵀ`.
    pub fn reduced_stress(&self, w: &DVector<f64>) -> DMatrix<f64> {
        weighted_gram(&self.psi_mat, w)
    }

    /// `B̄ diag(ω̄) B̄ᵀ`.
    pub fn stress_matrix(&self, w: &DVector<f64>) -> DMatrix<f64> {
        weighted_gram(&self.incidence, w)
    }

    /// Same problem with a different weighting `α`.
    pub fn with_alpha(&self, alpha: f64) -> Result<Self> {
        Hyperparams {
            alpha: Some(alpha),
            beta: self.beta,
            gamma: self.gamma,
        }
        .validate()?;
        Ok(Self {
            alpha,
            ..self.clone()
        })
    }
}

// A diag(w) Aᵀ
fn weighted_gram(a: &DMatrix<f64>, w: &DVector<f64>) -> DMatrix<f64> {
    let mut scaled = a.clone();
    for (mut col, &wk) in scaled.column_iter_mut().zip(w.iter()) {
        col *= wk;
    }
    scaled * a.transpose()
}

/// `Ψ = QᵀB̄` and its column energies `ψ_e = ‖Qᵀb_e‖²`.
pub fn build_psi(
    kernel: &KernelBasis,
    incidence: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    if kernel.q.nrows() != incidence.nrows() {
        return Err(crate::error::invalid!(
            "kernel basis has {} rows, incidence has {}",
            kernel.q.nrows(),
            incidence.nrows()
        ));
    }
    let psi_mat = kernel.q.transpose() * incidence;
    let psi = DVector::from_iterator(
        psi_mat.ncols(),
        psi_mat.column_iter().map(|c| c.norm_squared()),
    );
    Ok((psi_mat, psi))
}

/// Stacks the blocks `P̄ B̄ diag(b̄_i)`, `b̄_i` the `i`-th row of `B̄`, so that
/// `E ω̄ = vec(P̄ Ω)` column by column.
pub fn build_equilibrium(p_bar: &DMatrix<f64>, incidence: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if p_bar.ncols() != incidence.nrows() {
        return Err(crate::error::invalid!(
            "configuration has {} agents, incidence has {} rows",
            p_bar.ncols(),
            incidence.nrows()
        ));
    }
    let rows = p_bar.nrows();
    let n = incidence.nrows();
    let m = incidence.ncols();
    let pb = p_bar * incidence;
    let mut e = DMatrix::zeros(n * rows, m);
    for i in 0..n {
        for k in 0..m {
            let b_ik = incidence[(i, k)];
            if b_ik == 0.0 {
                continue;
            }
            for r in 0..rows {
                e[(i * rows + r, k)] = pb[(r, k)] * b_ik;
            }
        }
    }
    Ok(e)
}

/// `1 / ‖ψ‖∞`: the supremum of weights for which the objective keeps its
/// minimum at the origin.
pub fn alpha_max(psi: &DVector<f64>) -> Result<f64> {
    let top = psi.iter().copied().fold(0.0_f64, f64::max);
    if !(top > 0.0) {
        return Err(UrfError::Internal(
            "edge energies are all zero; kernel basis is empty".into(),
        ));
    }
    Ok(1.0 / top)
}

pub fn build_problem(config: &Configuration, hyper: Hyperparams) -> Result<DesignProblem> {
    hyper.validate()?;
    let ordering = canonical_edges(config.len())?;
    let b = incidence(&ordering);
    let p_bar = config.augmented();
    let kernel = kernel_basis(&p_bar)?;
    let (psi_mat, psi) = build_psi(&kernel, &b)?;
    let equilibrium = build_equilibrium(&p_bar, &b)?;
    let alpha = match hyper.alpha {
        Some(a) => a,
        None => alpha_max(&psi)?,
    };
    Ok(DesignProblem {
        config: config.clone(),
        ordering,
        incidence: b,
        kernel,
        psi_mat,
        psi,
        equilibrium,
        alpha,
        beta: hyper.beta,
        gamma: hyper.gamma,
    })
}
