use nalgebra::{DMatrix, DVector, SymmetricEigen};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use urf_core::framework::{assemble_stress, canonical_edges, random_generic, StressVector};
use urf_core::problem::{build_problem, build_psi, Hyperparams};
use urf_core::rigidity::{verify_urf, RigidityTolerances};
use urf_core::sim::{apply_stress, integrate_numeric, lyapunov, propagate};
use urf_core::solver::{solve, SolveParams, SolveStatus, FEASIBILITY_TOL};
use urf_core::spectral::{clamp_eigs, kernel_basis, sym_eig, KernelBasis};

fn random_stress(m: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    DVector::from_fn(m, |_, _| rng.random_range(-1.0..1.0))
}

fn random_symmetric(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-2.0..2.0));
    (&a + a.transpose()) * 0.5
}

fn random_psd(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    &a * a.transpose()
}

fn random_orthogonal(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    a.qr().q()
}

// oracle kernel from nalgebra's SVD, independent of the Jacobi route
fn svd_kernel_projector(p_bar: &DMatrix<f64>) -> DMatrix<f64> {
    let n = p_bar.ncols();
    let r = p_bar.nrows();
    let full = p_bar.clone().insert_rows(r, n - r, 0.0);
    let svd = full.svd(false, true);
    let vt = svd.v_t.unwrap();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let rows: Vec<_> = order[r..].iter().map(|&k| vt.row(k).transpose()).collect();
    let q = DMatrix::from_columns(&rows);
    &q * q.transpose()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn assembly_matches_entrywise_definition(n in 2usize..=12, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ordering = canonical_edges(n).unwrap();
        let w = random_stress(ordering.len(), &mut rng);
        let omega = assemble_stress(&ordering, &StressVector(w.clone())).unwrap();
        for i in 0..n {
            for j in 0..n {
                let want: f64 = if i == j {
                    (0..n).filter(|&k| k != i).map(|k| w[ordering.index_of(i, k).unwrap()]).sum()
                } else {
                    -w[ordering.index_of(i, j).unwrap()]
                };
                prop_assert!((omega.0[(i, j)] - want).abs() < 1e-12);
            }
        }
        let ones = DVector::repeat(n, 1.0);
        prop_assert!((omega.matrix() * ones).amax() < 1e-12);
        prop_assert!((omega.matrix() - omega.matrix().transpose()).amax() == 0.0);
    }

    #[test]
    fn scaling_stress_scales_spectrum(n in 3usize..=10, seed in any::<u64>(), c in 0.01f64..50.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ordering = canonical_edges(n).unwrap();
        let w = random_stress(ordering.len(), &mut rng);
        let a = sym_eig(assemble_stress(&ordering, &StressVector(w.clone())).unwrap().matrix()).unwrap();
        let b = sym_eig(assemble_stress(&ordering, &StressVector(w * c)).unwrap().matrix()).unwrap();
        for (x, y) in a.values.iter().zip(b.values.iter()) {
            prop_assert!((x * c - y).abs() <= 1e-10 * (1.0 + y.abs()));
        }
    }

    #[test]
    fn jacobi_agrees_with_reference(n in 1usize..=12, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_symmetric(n, &mut rng);
        let ours = sym_eig(&a).unwrap();
        let mut reference: Vec<f64> = SymmetricEigen::new(a.clone()).eigenvalues.iter().copied().collect();
        reference.sort_by(f64::total_cmp);
        for (x, y) in ours.values.iter().zip(&reference) {
            prop_assert!((x - y).abs() < 1e-10);
        }
        let scale = a.norm().max(1.0);
        prop_assert!((&a - ours.reconstruct()).norm() <= 1e-10 * scale);
        let gram = ours.vectors.transpose() * &ours.vectors;
        prop_assert!((gram - DMatrix::identity(n, n)).norm() <= 1e-10 * n as f64);
    }

    #[test]
    fn clamp_is_idempotent_projection(n in 1usize..=10, seed in any::<u64>(), lo in -1.0f64..0.5, width in 0.0f64..2.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let hi = lo + width;
        let a = random_symmetric(n, &mut rng);
        let once = clamp_eigs(&a, lo, hi).unwrap();
        let twice = clamp_eigs(&once, lo, hi).unwrap();
        prop_assert!((&once - &twice).norm() <= 1e-10 * (1.0 + once.norm()));
        let spec = sym_eig(&once).unwrap();
        prop_assert!(spec.min() >= lo - 1e-10 && spec.max() <= hi + 1e-10);

        let dist = (&a - &once).norm();
        for _ in 0..100 {
            // feasible competitor: random eigenbasis, eigenvalues inside the box
            let v = random_orthogonal(n, &mut rng);
            let lambdas = DVector::from_fn(n, |_, _| rng.random_range(lo..=hi));
            let x = &v * DMatrix::from_diagonal(&lambdas) * v.transpose();
            prop_assert!(dist <= (&a - x).norm() + 1e-10);
        }
    }

    #[test]
    fn kernel_projector_is_basis_free(n in 4usize..=12, seed in any::<u64>()) {
        let cfg = random_generic(n, 2, seed).unwrap();
        let p_bar = cfg.augmented();
        let k = kernel_basis(&p_bar).unwrap();
        prop_assert_eq!(k.dim(), n - 3);
        let gram = k.q.transpose() * &k.q;
        prop_assert!((gram - DMatrix::identity(n - 3, n - 3)).norm() <= 1e-10);
        prop_assert!((&p_bar * &k.q).norm() <= 1e-10 * p_bar.norm());
        prop_assert!((k.projector() - svd_kernel_projector(&p_bar)).norm() <= 1e-9);
    }

    #[test]
    fn psi_identities(n in 4usize..=12, d in 1usize..=3, seed in any::<u64>()) {
        prop_assume!(n >= d + 2);
        let cfg = random_generic(n, d, seed).unwrap();
        let p = build_problem(&cfg, Hyperparams::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37);
        prop_assert!(p.psi.iter().all(|&x| (-1e-12..=2.0 + 1e-12).contains(&x)));
        for _ in 0..100 {
            let w = random_stress(p.edges(), &mut rng);
            let omega = p.stress_matrix(&w);
            let trace = (p.kernel.q.transpose() * &omega * &p.kernel.q).trace();
            prop_assert!((trace - p.psi.dot(&w)).abs() <= 1e-10);
        }
        for _ in 0..20 {
            let w = random_stress(p.edges(), &mut rng);
            let omega = assemble_stress(&p.ordering, &StressVector(w.clone())).unwrap();
            let lhs = (&p.equilibrium * &w).norm();
            let rhs = (cfg.augmented() * omega.matrix()).norm();
            prop_assert!((lhs - rhs).abs() <= 1e-10);
        }
    }

    #[test]
    fn psi_is_affine_and_basis_invariant(n in 4usize..=10, seed in any::<u64>()) {
        let cfg = random_generic(n, 2, seed).unwrap();
        let p = build_problem(&cfg, Hyperparams::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));

        let mut a: DMatrix<f64> = DMatrix::from_fn(2, 2, |_, _| rng.random_range(-2.0..2.0));
        while a.determinant().abs() < 0.2 {
            a = DMatrix::from_fn(2, 2, |_, _| rng.random_range(-2.0..2.0));
        }
        let t = DVector::from_fn(2, |_, _| rng.random_range(-5.0..5.0));
        let moved = build_problem(&cfg.affine_image(&a, &t).unwrap(), Hyperparams::default()).unwrap();
        prop_assert!((&p.psi - &moved.psi).amax() <= 1e-9);

        let r = random_orthogonal(p.kernel.dim(), &mut rng);
        let rotated = KernelBasis { q: &p.kernel.q * r };
        let (_, psi2) = build_psi(&rotated, &p.incidence).unwrap();
        prop_assert!((&p.psi - psi2).amax() <= 1e-10);
    }

    #[test]
    fn equilibrium_rank_matches_stress_space(n in 4usize..=8, seed in any::<u64>()) {
        let cfg = random_generic(n, 2, seed).unwrap();
        let p = build_problem(&cfg, Hyperparams::default()).unwrap();
        let m = p.edges();
        let svd = p.equilibrium.clone().svd(false, false);
        let top = svd.singular_values.max();
        let rank = svd.singular_values.iter().filter(|&&s| s > 1e-9 * top).count();
        // generic frameworks in the plane: dim of the stress space is M̄ − (2N − 3)
        prop_assert_eq!(m - rank, m - (2 * n - 3));
    }

    #[test]
    fn lyapunov_decreases(n in 4usize..=8, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let omega = random_psd(n, &mut rng);
        let z0 = DVector::from_fn(2 * n, |_, _| rng.random_range(-1.0..1.0));
        let target = DVector::zeros(2 * n);
        let times: Vec<f64> = (0..=40).map(|k| k as f64 * 0.25).collect();
        let trace = propagate(&omega, &z0, &target, 2, &times).unwrap();
        let v: Vec<f64> = trace.states.iter().map(|z| lyapunov(&omega, z, 2).unwrap()).collect();
        for w in v.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-12 * (1.0 + w[0].abs()));
        }
    }

    #[test]
    fn spectral_matches_rk4(n in 3usize..=8, seed in any::<u64>(), t_end in 0.5f64..10.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut omega = random_psd(n, &mut rng);
        omega /= sym_eig(&omega).unwrap().max().max(1e-12);
        let z0 = DVector::from_fn(2 * n, |_, _| rng.random_range(-1.0..1.0));
        let target = DVector::zeros(2 * n);
        let times: Vec<f64> = (0..=20).map(|k| t_end * k as f64 / 20.0).collect();
        let exact = propagate(&omega, &z0, &target, 2, &times).unwrap();
        let rk = integrate_numeric(&omega, &z0, &target, 2, &times, 1e-2).unwrap();
        for (a, b) in exact.states.iter().zip(&rk.states) {
            prop_assert!((a - b).amax() <= 1e-6);
        }
    }

    #[test]
    fn affine_images_are_equilibria(seed in any::<u64>()) {
        let cfg = random_generic(6, 2, seed % 20).unwrap();
        let p = build_problem(&cfg, Hyperparams::default()).unwrap();
        let (w, report) = solve(&p, &SolveParams::default()).unwrap();
        prop_assert_eq!(report.status, SolveStatus::Optimal);
        let omega = p.stress_matrix(w.values());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = DMatrix::from_fn(2, 2, |_, _| rng.random_range(-3.0..3.0));
        let b = DVector::from_fn(2, |_, _| rng.random_range(-3.0..3.0));
        let mut image = &a * cfg.positions();
        for mut c in image.column_iter_mut() {
            c += &b;
        }
        let z = DVector::from_column_slice(image.as_slice());
        prop_assert!(apply_stress(&omega, &z, 2).unwrap().norm() <= 1e-9);
    }
}

// Closed form when ker(E) is one-dimensional (N = D + 2): ω̄ = c·v with the
// constraints pinning c to [γ/λ_v, β/λ_v], λ_v = ψᵀv the only nonzero
// eigenvalue of Ω_v.
#[test]
fn matches_closed_form_on_minimal_frameworks() {
    for seed in 0..12u64 {
        let cfg = random_generic(4, 2, 100 + seed).unwrap();
        for alpha in [0.3, 0.8, 3.0] {
            let p = build_problem(&cfg, Hyperparams::with_alpha(alpha)).unwrap();
            let full = p
                .equilibrium
                .clone()
                .insert_rows(p.equilibrium.nrows(), 0, 0.0);
            let svd = full.svd(false, true);
            let (k, _) = svd
                .singular_values
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.total_cmp(b.1))
                .unwrap();
            let mut v = svd.v_t.unwrap().row(k).transpose();
            let mut lambda_v = p.psi.dot(&v);
            if lambda_v < 0.0 {
                v = -v;
                lambda_v = -lambda_v;
            }
            let slope = v.iter().map(|x| x.abs()).sum::<f64>() - alpha * lambda_v;
            let c = if slope > 0.0 {
                p.gamma / lambda_v
            } else {
                p.beta / lambda_v
            };
            let expect = &v * c;

            let (w, report) = solve(&p, &SolveParams::default()).unwrap();
            assert_eq!(report.status, SolveStatus::Optimal);
            let rel = (w.values() - &expect).norm() / expect.norm();
            assert!(
                rel <= 1e-4,
                "seed {seed} alpha {alpha}: relative error {rel}"
            );
        }
    }
}

#[test]
fn relabeling_permutes_solution() {
    let cfg = random_generic(6, 2, 4).unwrap();
    let perm = [3, 0, 5, 1, 4, 2];
    let moved = cfg.permuted(&perm).unwrap();
    let p = build_problem(&cfg, Hyperparams::default()).unwrap();
    let q = build_problem(&moved, Hyperparams::default()).unwrap();
    let (w, ra) = solve(&p, &SolveParams::default()).unwrap();
    let (v, rb) = solve(&q, &SolveParams::default()).unwrap();
    assert!((ra.objective - rb.objective).abs() <= 1e-6);
    // new edge (a, b) is old edge (perm[a], perm[b])
    for (e, &(a, b)) in q.ordering.edges().iter().enumerate() {
        let old = p.ordering.index_of(perm[a], perm[b]).unwrap();
        assert!((v.values()[e] - w.values()[old]).abs() <= 1e-5);
    }
}

#[test]
fn solutions_certify_as_rigid() {
    for seed in 0..6u64 {
        let cfg = random_generic(7, 2, seed).unwrap();
        let p = build_problem(&cfg, Hyperparams::default()).unwrap();
        let (w, report) = solve(&p, &SolveParams::default()).unwrap();
        assert!(report.feasibility.satisfied(&p, FEASIBILITY_TOL));
        let omega = p.stress_matrix(w.values());
        let cert = verify_urf(&omega, &cfg, &RigidityTolerances::default()).unwrap();
        assert!(cert.passes(), "seed {seed}: {cert:?}");
        // scale invariance of the verdict
        let scaled = verify_urf(&(omega * 17.0), &cfg, &RigidityTolerances::default()).unwrap();
        assert_eq!(scaled.passes(), cert.passes());
        assert!(cert.condition_number >= 1.0);
    }
}
