//! Closed-loop affine formation dynamics `ż = −(Ω ⊗ I_D) z`.
//!
//! States are stacked agent-major, `z = [z_1; …; z_N]`. Written as a `D × N`
//! matrix `Z` the dynamics read `Ż = −Z Ω`, so the flow is
//! `Z(t) = Z(0) V e^{−Λt} Vᵀ` over the eigenpairs of `Ω`.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, Result, UrfError};
use crate::framework::Configuration;
use crate::spectral::{sym_eig, EigenDecomposition, DEFAULT_RANK_TOL};

/// Tracking errors below this are treated as numerically zero.
pub const DELTA_FLOOR: f64 = 1e-14;

/// Fraction of a trace used by [`estimate_rate`] in the pipeline.
pub const DEFAULT_RATE_WINDOW: f64 = 0.5;

/// Relative tolerance on negative eigenvalues before a stress is refused.
const PSD_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitMode {
    AtTarget,
    /// Random perturbation with its affine-nullspace component removed, so
    /// the trajectory returns to the target itself.
    PerturbedOrthogonal,
    PerturbedFree,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub t_end: f64,
    pub samples: usize,
    pub init: InitMode,
    /// `None` uses `0.1 · ‖p‖`.
    pub perturbation_scale: Option<f64>,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            t_end: 20.0,
            samples: 401,
            init: InitMode::PerturbedOrthogonal,
            perturbation_scale: None,
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_end > 0.0) || !self.t_end.is_finite() {
            return Err(invalid!("t_end must be positive, got {}", self.t_end));
        }
        if self.samples < 2 {
            return Err(invalid!("need at least 2 samples, got {}", self.samples));
        }
        if let Some(s) = self.perturbation_scale {
            if !(s >= 0.0) || !s.is_finite() {
                return Err(invalid!("perturbation scale must be nonnegative, got {s}"));
            }
        }
        Ok(())
    }

    /// Uniform grid on `[0, t_end]`.
    pub fn times(&self) -> Vec<f64> {
        let last = (self.samples - 1) as f64;
        (0..self.samples)
            .map(|k| self.t_end * k as f64 / last)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    /// `δ(t) = ‖z(t) − p‖₂`.
    pub delta: Vec<f64>,
}

impl SimTrace {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

fn check_psd(omega: &DMatrix<f64>) -> Result<EigenDecomposition> {
    if !omega.is_square() {
        return Err(invalid!("stress must be square"));
    }
    let eig = sym_eig(omega)?;
    let top = eig.max().max(0.0);
    if eig.min() < -PSD_TOL * top.max(f64::MIN_POSITIVE) {
        return Err(UrfError::Unstable(format!(
            "stress has eigenvalue {} < 0; the closed loop diverges",
            eig.min()
        )));
    }
    Ok(eig)
}

// eigenvalues at roundoff level are exact equilibria
fn settled_rates(eig: &EigenDecomposition) -> Vec<f64> {
    let top = eig.max().max(0.0);
    eig.values
        .iter()
        .map(|&l| if l <= DEFAULT_RANK_TOL * top { 0.0 } else { l })
        .collect()
}

fn as_matrix(z: &DVector<f64>, dim: usize) -> Result<DMatrix<f64>> {
    if dim == 0 || !z.len().is_multiple_of(dim) {
        return Err(invalid!(
            "state of length {} does not split into {dim}-vectors",
            z.len()
        ));
    }
    Ok(DMatrix::from_column_slice(dim, z.len() / dim, z.as_slice()))
}

fn as_vector(z: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(z.as_slice())
}

/// `(Ω ⊗ I_D) z`.
pub fn apply_stress(omega: &DMatrix<f64>, z: &DVector<f64>, dim: usize) -> Result<DVector<f64>> {
    let zm = as_matrix(z, dim)?;
    if zm.ncols() != omega.nrows() {
        return Err(invalid!(
            "state has {} agents, stress has {}",
            zm.ncols(),
            omega.nrows()
        ));
    }
    Ok(as_vector(&(zm * omega)))
}

/// `V(z) = ½ zᵀ (Ω ⊗ I_D) z`.
pub fn lyapunov(omega: &DMatrix<f64>, z: &DVector<f64>, dim: usize) -> Result<f64> {
    Ok(0.5 * z.dot(&apply_stress(omega, z, dim)?))
}

/// `p + scale · n / ‖n‖` for a seeded Gaussian `n`. With `orthogonal`, `n` is
/// first stripped of its component in `null(Ω ⊗ I_D)`.
pub fn init_perturbed(
    omega: &DMatrix<f64>,
    target: &DVector<f64>,
    dim: usize,
    scale: f64,
    seed: u64,
    orthogonal: bool,
) -> Result<DVector<f64>> {
    if !(scale >= 0.0) || !scale.is_finite() {
        return Err(invalid!(
            "perturbation scale must be nonnegative, got {scale}"
        ));
    }
    let n_agents = as_matrix(target, dim)?.ncols();
    if n_agents != omega.nrows() {
        return Err(invalid!(
            "target has {n_agents} agents, stress has {}",
            omega.nrows()
        ));
    }
    if scale == 0.0 {
        return Ok(target.clone());
    }
    let null_basis = if orthogonal {
        let eig = check_psd(omega)?;
        let rates = settled_rates(&eig);
        let cols: Vec<_> = (0..rates.len())
            .filter(|&k| rates[k] == 0.0)
            .map(|k| eig.vectors.column(k).into_owned())
            .collect();
        (!cols.is_empty()).then(|| DMatrix::from_columns(&cols))
    } else {
        None
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..64 {
        let mut noise = DMatrix::from_fn(dim, n_agents, |_, _| StandardNormal.sample(&mut rng));
        if let Some(v) = &null_basis {
            noise -= &noise * v * v.transpose();
        }
        let norm = noise.norm();
        if norm > 1e-8 {
            return Ok(target + as_vector(&noise) * (scale / norm));
        }
    }
    Err(UrfError::Internal(
        "perturbation kept vanishing under the nullspace projection".into(),
    ))
}

fn trace_from(times: Vec<f64>, states: Vec<DVector<f64>>, target: &DVector<f64>) -> SimTrace {
    let delta = states.iter().map(|z| (z - target).norm()).collect();
    SimTrace {
        times,
        states,
        delta,
    }
}

/// Propagates `z0` exactly through the eigenbasis of `Ω`.
pub fn propagate(
    omega: &DMatrix<f64>,
    z0: &DVector<f64>,
    target: &DVector<f64>,
    dim: usize,
    times: &[f64],
) -> Result<SimTrace> {
    let eig = check_psd(omega)?;
    let rates = settled_rates(&eig);
    let z0m = as_matrix(z0, dim)?;
    if z0m.ncols() != omega.nrows() || target.len() != z0.len() {
        return Err(invalid!("state and stress sizes disagree"));
    }
    check_times(times)?;
    // z(t) = p + e^{-Ωt}(z0 - p) + (e^{-Ωt} - I) p, so a start at an
    // equilibrium target only sees the target's own residual
    let target_m = as_matrix(target, dim)?;
    let modal_dev = (&z0m - &target_m) * &eig.vectors;
    let modal_target = &target_m * &eig.vectors;
    let vt = eig.vectors.transpose();
    let (states, delta) = times
        .iter()
        .map(|&t| {
            let mut m = modal_dev.clone();
            let mut drift = modal_target.clone();
            for (k, &rate) in rates.iter().enumerate() {
                m.column_mut(k).scale_mut((-rate * t).exp());
                drift.column_mut(k).scale_mut((-rate * t).exp_m1());
            }
            let dev = (m + drift) * &vt;
            (as_vector(&(&target_m + &dev)), dev.norm())
        })
        .unzip();
    Ok(SimTrace {
        times: times.to_vec(),
        states,
        delta,
    })
}

fn check_times(times: &[f64]) -> Result<()> {
    if times.is_empty() {
        return Err(invalid!("no sample times"));
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(invalid!("sample times must be strictly increasing"));
    }
    Ok(())
}

/// Runs the closed loop from the initial state selected by `sim`.
pub fn simulate(omega: &DMatrix<f64>, config: &Configuration, sim: &SimConfig) -> Result<SimTrace> {
    sim.validate()?;
    let dim = config.dim();
    let target = config.stacked();
    let scale = sim.perturbation_scale.unwrap_or(0.1 * target.norm());
    let z0 = match sim.init {
        InitMode::AtTarget => target.clone(),
        InitMode::PerturbedOrthogonal => {
            init_perturbed(omega, &target, dim, scale, sim.seed, true)?
        }
        InitMode::PerturbedFree => init_perturbed(omega, &target, dim, scale, sim.seed, false)?,
    };
    propagate(omega, &z0, &target, dim, &sim.times())
}

/// Classical fourth-order Runge–Kutta on a fixed step no larger than `dt`,
/// landing exactly on every sample time. Kept as an independent check of
/// [`propagate`].
pub fn integrate_numeric(
    omega: &DMatrix<f64>,
    z0: &DVector<f64>,
    target: &DVector<f64>,
    dim: usize,
    times: &[f64],
    dt: f64,
) -> Result<SimTrace> {
    check_times(times)?;
    let top = sym_eig(omega)?.max();
    if !(dt > 0.0) || (top > 0.0 && dt >= 2.0 / top) {
        return Err(UrfError::Unstable(format!(
            "step {dt} violates dt < 2/λ_max = {}",
            2.0 / top
        )));
    }
    let mut z = as_matrix(z0, dim)?;
    if z.ncols() != omega.nrows() || target.len() != z0.len() {
        return Err(invalid!("state and stress sizes disagree"));
    }
    let f = |z: &DMatrix<f64>| -(z * omega);
    let mut states = Vec::with_capacity(times.len());
    let mut now = times[0];
    for &t in times {
        let span = t - now;
        if span > 0.0 {
            let steps = (span / dt).ceil() as usize;
            let h = span / steps as f64;
            for _ in 0..steps {
                let k1 = f(&z);
                let k2 = f(&(&z + &k1 * (0.5 * h)));
                let k3 = f(&(&z + &k2 * (0.5 * h)));
                let k4 = f(&(&z + &k3 * h));
                z += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
            }
        }
        now = t;
        states.push(as_vector(&z));
    }
    Ok(trace_from(times.to_vec(), states, target))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateEstimate {
    /// Negated least-squares slope of `ln δ(t)`.
    pub rate: f64,
    /// Set when samples fell below [`DELTA_FLOOR`] and were dropped, so the
    /// true rate may be larger.
    pub lower_bound: bool,
}

/// Fits `ln δ(t)` over the final `window` fraction of samples.
pub fn estimate_rate(trace: &SimTrace, window: f64) -> Result<RateEstimate> {
    if !(window > 0.0 && window <= 1.0) {
        return Err(invalid!("window must lie in (0, 1], got {window}"));
    }
    let n = trace.len();
    if n < 2 {
        return Err(invalid!("need at least two samples"));
    }
    let start = (((1.0 - window) * n as f64).floor() as usize).min(n - 2);
    let mut pts: Vec<(f64, f64)> = (start..n)
        .filter(|&k| trace.delta[k] > DELTA_FLOOR)
        .map(|k| (trace.times[k], trace.delta[k].ln()))
        .collect();
    let dropped = pts.len() < n - start;
    if pts.len() < 2 {
        // fall back to the last resolvable stretch of the whole trace
        pts = (0..n)
            .filter(|&k| trace.delta[k] > DELTA_FLOOR)
            .map(|k| (trace.times[k], trace.delta[k].ln()))
            .collect();
        let keep = pts.len().saturating_sub(2);
        pts.drain(..keep);
    }
    if pts.len() < 2 {
        return Ok(RateEstimate {
            rate: 0.0,
            lower_bound: true,
        });
    }
    let m = pts.len() as f64;
    let t_mean = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let y_mean = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = pts.iter().map(|p| (p.0 - t_mean) * (p.1 - y_mean)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - t_mean).powi(2)).sum();
    Ok(RateEstimate {
        rate: -sxy / sxx,
        lower_bound: dropped,
    })
}
