//! Dense symmetric eigen-machinery: cyclic Jacobi eigendecomposition,
//! numerical rank, orthonormal kernel bases and spectral-box projections.

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Result, UrfError};

/// Relative tolerance used to decide whether an eigenvalue is numerically zero.
pub const DEFAULT_RANK_TOL: f64 = 1e-8;

const MAX_SWEEPS: usize = 100;

/// Eigenpairs of a symmetric matrix, eigenvalues in ascending order.
///
/// Column `k` of `vectors` belongs to `values[k]`.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

impl EigenDecomposition {
    /// `V diag(f(λ)) Vᵀ`.
    pub fn reconstruct_with<F: Fn(f64) -> f64>(&self, f: F) -> DMatrix<f64> {
        let n = self.values.len();
        let mut scaled = self.vectors.clone();
        for k in 0..n {
            let w = f(self.values[k]);
            scaled.column_mut(k).scale_mut(w);
        }
        &scaled * self.vectors.transpose()
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        self.reconstruct_with(|l| l)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().next().unwrap_or(0.0)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().last().unwrap_or(0.0)
    }
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// The input is symmetrized as `(A + Aᵀ)/2` before rotating, so small
/// asymmetries from floating-point assembly are harmless.
pub fn sym_eig(a: &DMatrix<f64>) -> Result<EigenDecomposition> {
    if !a.is_square() {
        return Err(invalid!(
            "eigendecomposition needs a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        ));
    }
    let n = a.nrows();
    let mut m = (a + a.transpose()) * 0.5;
    let mut v = DMatrix::<f64>::identity(n, n);

    let total: f64 = m.iter().map(|x| x * x).sum();
    for _ in 0..MAX_SWEEPS {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += m[(p, q)] * m[(p, q)];
            }
        }
        // off-diagonal mass at roundoff level of the whole matrix
        if off <= 1e-34 * total || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let app = m[(p, p)];
                let aqq = m[(q, q)];
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta.is_infinite() {
                    0.0
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                if s == 0.0 {
                    continue;
                }
                rotate(&mut m, &mut v, p, q, c, s);
                m[(p, p)] = app - t * apq;
                m[(q, q)] = aqq + t * apq;
                m[(p, q)] = 0.0;
                m[(q, p)] = 0.0;
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(i, i)].total_cmp(&m[(j, j)]));
    let values = DVector::from_iterator(n, order.iter().map(|&k| m[(k, k)]));
    let mut vectors = DMatrix::<f64>::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &v.column(src));
    }
    Ok(EigenDecomposition { values, vectors })
}

// A <- Jᵀ A J and V <- V J for the plane rotation J acting on (p, q).
fn rotate(m: &mut DMatrix<f64>, v: &mut DMatrix<f64>, p: usize, q: usize, c: f64, s: f64) {
    let n = m.nrows();
    for k in 0..n {
        let mkp = m[(k, p)];
        let mkq = m[(k, q)];
        m[(k, p)] = c * mkp - s * mkq;
        m[(k, q)] = s * mkp + c * mkq;
    }
    for k in 0..n {
        let mpk = m[(p, k)];
        let mqk = m[(q, k)];
        m[(p, k)] = c * mpk - s * mqk;
        m[(q, k)] = s * mpk + c * mqk;
    }
    for k in 0..n {
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = c * vkp - s * vkq;
        v[(k, q)] = s * vkp + c * vkq;
    }
}

/// Number of eigenvalues with `|λ| > tol_rel · max|λ|`.
pub fn numerical_rank(eigenvalues: &[f64], tol_rel: f64) -> usize {
    let scale = eigenvalues.iter().fold(0.0_f64, |acc, l| acc.max(l.abs()));
    if scale == 0.0 {
        return 0;
    }
    eigenvalues
        .iter()
        .filter(|l| l.abs() > tol_rel * scale)
        .count()
}

/// Orthonormal basis `Q` of `ker(P̄)`, stored as columns.
#[derive(Debug, Clone)]
pub struct KernelBasis {
    pub q: DMatrix<f64>,
}

impl KernelBasis {
    pub fn dim(&self) -> usize {
        self.q.ncols()
    }

    /// Orthogonal projector `Q Qᵀ` onto the kernel.
    pub fn projector(&self) -> DMatrix<f64> {
        &self.q * self.q.transpose()
    }
}

/// Kernel of a full-row-rank wide matrix, taken from the near-zero
/// eigenvectors of `P̄ᵀ P̄`.
pub fn kernel_basis(p_bar: &DMatrix<f64>) -> Result<KernelBasis> {
    let rows = p_bar.nrows();
    let n = p_bar.ncols();
    if rows > n {
        return Err(UrfError::DegenerateConfiguration(format!(
            "{rows}x{n} matrix cannot have full row rank"
        )));
    }
    let gram = p_bar.transpose() * p_bar;
    let eig = sym_eig(&gram)?;
    let rank = numerical_rank(eig.values.as_slice(), DEFAULT_RANK_TOL);
    if rank != rows {
        return Err(UrfError::DegenerateConfiguration(format!(
            "augmented configuration has numerical rank {rank}, expected {rows}"
        )));
    }
    let q = eig.vectors.columns(0, n - rows).into_owned();
    Ok(KernelBasis { q })
}

/// Frobenius projection onto `{X : lo·I ⪯ X ⪯ hi·I}`; `hi` may be `+∞`.
pub fn clamp_eigs(a: &DMatrix<f64>, lo: f64, hi: f64) -> Result<DMatrix<f64>> {
    if lo.is_nan() || hi.is_nan() || lo > hi {
        return Err(invalid!("spectral box [{lo}, {hi}] is empty"));
    }
    let eig = sym_eig(a)?;
    Ok(eig.reconstruct_with(|l| l.clamp(lo, hi)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frob(m: &DMatrix<f64>) -> f64 {
        m.norm()
    }

    fn check_decomp(a: &DMatrix<f64>, eig: &EigenDecomposition) {
        let n = a.nrows() as f64;
        let rec = eig.reconstruct();
        assert!(frob(&(a - rec)) <= 1e-10 * frob(a).max(1.0));
        let vtv = eig.vectors.transpose() * &eig.vectors;
        let id = DMatrix::<f64>::identity(a.nrows(), a.nrows());
        assert!(frob(&(vtv - id)) <= 1e-10 * n);
        for w in eig.values.as_slice().windows(2) {
            assert!(w[0] <= w[1]);
        }
    }

    #[test]
    fn identity_eigenvalues() {
        let a = DMatrix::<f64>::identity(3, 3);
        let eig = sym_eig(&a).unwrap();
        assert_eq!(eig.values.as_slice(), &[1.0, 1.0, 1.0]);
        check_decomp(&a, &eig);
    }

    #[test]
    fn diagonal_sorted() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 1.0, 2.0]));
        let eig = sym_eig(&a).unwrap();
        assert_eq!(eig.values.as_slice(), &[1.0, 2.0, 3.0]);
        check_decomp(&a, &eig);
    }

    #[test]
    fn rank_one_outer_product() {
        let q = DVector::from_vec(vec![1.0, -1.0, 1.0, -1.0]);
        let a = &q * q.transpose();
        let eig = sym_eig(&a).unwrap();
        let expect = [0.0, 0.0, 0.0, 4.0];
        for (got, want) in eig.values.iter().zip(expect) {
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
        check_decomp(&a, &eig);
    }

    #[test]
    fn non_square_rejected() {
        let a = DMatrix::<f64>::zeros(2, 3);
        assert!(matches!(sym_eig(&a), Err(UrfError::InvalidArgument(_))));
    }

    #[test]
    fn dense_random_matrix() {
        // deterministic but unstructured entries
        let n = 9;
        let a = DMatrix::from_fn(n, n, |i, j| {
            let (i, j) = (i.min(j) as f64, i.max(j) as f64);
            (1.3 * i + 0.7 * j).sin() + 0.1 * (i * j).cos()
        });
        let eig = sym_eig(&a).unwrap();
        check_decomp(&a, &eig);
    }

    #[test]
    fn rank_examples() {
        assert_eq!(numerical_rank(&[0.0, 0.0, 0.0, 4.0], 1e-8), 1);
        assert_eq!(numerical_rank(&[0.0, 0.0], 1e-8), 0);
        assert_eq!(numerical_rank(&[1e-12, 1.0, 1.0], 1e-8), 2);
    }

    #[test]
    fn kernel_of_square() {
        // rows: x, y, 1 for the square (±1, ±1)
        let p_bar = DMatrix::from_row_slice(
            3,
            4,
            &[
                1.0, -1.0, -1.0, 1.0, 1.0, 1.0, -1.0, -1.0, 1.0, 1.0, 1.0, 1.0,
            ],
        );
        let k = kernel_basis(&p_bar).unwrap();
        assert_eq!(k.dim(), 1);
        let expect = DVector::from_vec(vec![0.5, -0.5, 0.5, -0.5]);
        let col = k.q.column(0).into_owned();
        let aligned = if col.dot(&expect) < 0.0 { -col } else { col };
        assert!((aligned - expect).norm() < 1e-12);
        assert!((&p_bar * &k.q).norm() <= 1e-10 * p_bar.norm());
    }

    #[test]
    fn kernel_rejects_collinear() {
        let p_bar = DMatrix::from_row_slice(
            3,
            4,
            &[0.0, 1.0, 2.0, 3.0, 0.0, 1.0, 2.0, 3.0, 1.0, 1.0, 1.0, 1.0],
        );
        assert!(matches!(
            kernel_basis(&p_bar),
            Err(UrfError::DegenerateConfiguration(_))
        ));
    }

    #[test]
    fn clamp_examples() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, 0.5, 2.0]));
        let c = clamp_eigs(&a, 0.0, 1.0).unwrap();
        let want = DMatrix::from_diagonal(&DVector::from_vec(vec![0.0, 0.5, 1.0]));
        assert!((c - want).norm() < 1e-14);

        let inside = DMatrix::from_row_slice(2, 2, &[0.5, 0.1, 0.1, 0.6]);
        let c = clamp_eigs(&inside, 0.0, 1.0).unwrap();
        assert!((c - &inside).norm() < 1e-14);

        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![0.05, 5.0]));
        let c = clamp_eigs(&a, 0.1, f64::INFINITY).unwrap();
        let want = DMatrix::from_diagonal(&DVector::from_vec(vec![0.1, 5.0]));
        assert!((c - want).norm() < 1e-14);
    }

    #[test]
    fn clamp_empty_box() {
        let a = DMatrix::<f64>::identity(2, 2);
        assert!(clamp_eigs(&a, 1.0, 0.5).is_err());
    }
}
