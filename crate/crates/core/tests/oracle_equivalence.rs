//! Matrix-free operators and preconditioners against dense reference matrices.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use aaotau::oracle::{self, dense_a, dense_b, dense_b_tau, dense_preconditioners, dense_sine_kron, DenseMatrix};
use aaotau::{AllAtOnceOperator, ProblemSpec, SpatialScheme, TauPreconditioner, TemporalOperator, DEFAULT_ETA};

const CAP: usize = oracle::DEFAULT_MAX_DENSE;

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn rel_err(got: &[f64], want: &DenseMatrix) -> f64 {
    let scale = want.amax().max(f64::MIN_POSITIVE);
    got.iter().zip(want.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / scale
}

fn column(v: &[f64]) -> DenseMatrix {
    DenseMatrix::from_column_slice(v.len(), 1, v)
}

struct Fixture {
    spec: ProblemSpec,
    a: AllAtOnceOperator,
    p: TauPreconditioner,
    dense_a: DenseMatrix,
    dense: oracle::DensePreconditioners,
}

fn fixture(alpha: f64, beta: &[f64], n: usize, dims: &[usize], scheme: SpatialScheme) -> Fixture {
    let spec = ProblemSpec::unit_box(alpha, beta, n, dims, scheme).unwrap();
    let w = spec.spatial_weights().unwrap();
    let t = TemporalOperator::from_weights(&spec.temporal_weights().unwrap()).unwrap();
    Fixture {
        a: AllAtOnceOperator::from_spec(&spec).unwrap(),
        p: TauPreconditioner::build(&spec, &w, &t, DEFAULT_ETA).unwrap(),
        dense_a: dense_a(&spec, &w, &t, CAP).unwrap(),
        dense: dense_preconditioners(&spec, &w, &t, DEFAULT_ETA, CAP).unwrap(),
        spec,
    }
}

fn cases() -> Vec<(f64, Vec<f64>, usize, Vec<usize>, SpatialScheme)> {
    vec![
        (0.3, vec![1.4], 1, vec![7], SpatialScheme::ShiftedGrunwald),
        (0.7, vec![1.8], 6, vec![5], SpatialScheme::CelikDuman),
        (0.5, vec![1.2, 1.7], 5, vec![4, 3], SpatialScheme::WeightedShifted),
        (0.9, vec![1.9, 1.1], 3, vec![6, 6], SpatialScheme::ShiftedGrunwald),
        (0.1, vec![1.3, 1.5, 1.7], 2, vec![3, 2, 4], SpatialScheme::CelikDuman),
        (0.6, vec![1.6, 1.6, 1.6], 1, vec![2, 3, 2], SpatialScheme::WeightedShifted),
    ]
}

#[test]
fn all_at_once_operator_matches_dense() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for (alpha, beta, n, dims, scheme) in cases() {
        let f = fixture(alpha, &beta, n, &dims, scheme);
        for _ in 0..5 {
            let v = random_vec(&mut rng, f.a.len());
            let err = rel_err(&f.a.apply(&v).unwrap(), &(&f.dense_a * column(&v)));
            assert!(err < 1e-12, "{scheme} n={n} dims={dims:?}: {err:e}");
        }
    }
}

#[test]
fn preconditioner_applies_match_dense_inverses() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for (alpha, beta, n, dims, scheme) in cases() {
        let f = fixture(alpha, &beta, n, &dims, scheme);
        let p_inv = f.dense.p.clone().try_inverse().unwrap();
        let pl_inv = f.dense.pl.clone().try_inverse().unwrap();
        for _ in 0..5 {
            let v = random_vec(&mut rng, f.a.len());
            let dv = column(&v);
            assert!(rel_err(&f.p.apply_p_inv(&v).unwrap(), &(&p_inv * &dv)) < 1e-11);
            let e = rel_err(&f.p.apply_pl_inv(&v).unwrap(), &(&pl_inv * &dv));
            assert!(e < 1e-11, "{scheme} dims={dims:?}: {e:e}");
            assert!(rel_err(&f.p.apply_pr(&v).unwrap(), &(&f.dense.pr * &dv)) < 1e-11);
        }
    }
}

#[test]
fn dense_p_times_apply_p_inv_is_identity() {
    let f = fixture(0.4, &[1.5, 1.3], 2, &[2, 2], SpatialScheme::ShiftedGrunwald);
    let size = f.a.len();
    for k in 0..size {
        let mut e = vec![0.0; size];
        e[k] = 1.0;
        let back = &f.dense.p * column(&f.p.apply_p_inv(&e).unwrap());
        for (i, x) in back.iter().enumerate() {
            let want = if i == k { 1.0 } else { 0.0 };
            assert!((x - want).abs() < 1e-12, "column {k} row {i}: {x}");
        }
    }
}

#[test]
fn two_sided_factors_compose_to_one_sided() {
    for (alpha, beta, n, dims, scheme) in cases() {
        let f = fixture(alpha, &beta, n, &dims, scheme);
        let diff = &f.dense.pl * &f.dense.pr - &f.dense.p;
        assert!(diff.amax() <= 1e-11 * f.dense.p.amax(), "{scheme} dims={dims:?}: {:e} vs {:e}", diff.amax(), f.dense.p.amax());
    }
}

#[test]
fn b_tau_is_diagonalized_by_sine_transform() {
    for (alpha, beta, n, dims, scheme) in cases() {
        let f = fixture(alpha, &beta, n, &dims, scheme);
        let w = f.spec.spatial_weights().unwrap();
        let bt = dense_b_tau(&f.spec, &w, DEFAULT_ETA, CAP).unwrap();
        let s = dense_sine_kron(&dims);
        let d = &s * &bt * &s;
        for i in 0..d.nrows() {
            for j in 0..d.ncols() {
                let want = if i == j { f.p.lambda()[i] } else { 0.0 };
                assert!((d[(i, j)] - want).abs() < 1e-10 * bt.amax(), "({i},{j})");
            }
        }
    }
}

#[test]
fn spatial_matrix_is_symmetric_positive_definite() {
    for (alpha, beta, n, dims, scheme) in cases() {
        let f = fixture(alpha, &beta, n, &dims, scheme);
        let b = dense_b(&f.spec, &f.spec.spatial_weights().unwrap(), CAP).unwrap();
        assert!((&b - b.transpose()).amax() < 1e-12 * b.amax());
        assert!(oracle::min_eigenvalue(&b) > 0.0);
    }
}

#[test]
fn single_time_step_reduces_to_spatial_problem() {
    let f = fixture(0.5, &[1.5, 1.5], 1, &[5, 5], SpatialScheme::ShiftedGrunwald);
    let t0 = f.p.temporal().diagonal();
    for (k, lam) in f.p.lambda().iter().enumerate() {
        assert!(lam.is_finite() && *lam > 0.0, "{k}");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let v = random_vec(&mut rng, f.a.len());
    let s = dense_sine_kron(&[5, 5]);
    let diag = DenseMatrix::from_diagonal(&f.p.lambda().iter().map(|l| 1.0 / (l + t0)).collect::<Vec<_>>().into());
    let want = &s * diag * &s * column(&v);
    assert!(rel_err(&f.p.apply_p_inv(&v).unwrap(), &want) < 1e-12);
}
