use matsketch::linalg::{symmetric_eigen, DenseMatrix};
use matsketch::lln::{
    empirical_second_moment, lln_deviation, rademacher_moment_check, rademacher_moment_exact, tail_bound_eval,
    VectorEnsemble,
};
use matsketch::rng::derive_rng;
use proptest::prelude::*;
use rand::Rng;

#[test]
fn scaled_basis_sixteen_at_coupon_threshold() {
    let n = 16usize;
    let d = n * (16.0 * (16.0f64).ln()).ceil() as usize;
    let s = lln_deviation(&VectorEnsemble::scaled_basis(n).unwrap(), d, 100, 3, 1.0).unwrap();
    assert!(s.mean <= 1.0, "{}", s.mean);
}

#[test]
fn identity_rows_deviation_decreases() {
    let e = VectorEnsemble::matrix_rows(&DenseMatrix::identity(4)).unwrap();
    let means: Vec<f64> =
        [10, 100, 1000].iter().map(|&d| lln_deviation(&e, d, 200, 17, 1.0).unwrap().mean).collect();
    assert!(means[0] > means[1] && means[1] > means[2], "{means:?}");
}

#[test]
fn deviation_matches_explicit_draws() {
    // The count-based moment equals the average of the drawn outer products.
    let a = DenseMatrix::from_fn(9, 4, |i, j| ((i * 4 + j) as f64 * 0.83).sin());
    let e = VectorEnsemble::matrix_rows(&a).unwrap();
    let d = 25;
    let stats = lln_deviation(&e, d, 4, 21, 1.0).unwrap();
    for t in 0..4 {
        let mut rng = matsketch::rng::trial_rng(21, t);
        let ys = e.draw(d, &mut rng);
        let emp = empirical_second_moment(&ys).unwrap();
        let dev = matsketch::linalg::symmetric_spectral_norm(&emp.sub(e.second_moment()).unwrap()).unwrap();
        assert!((dev - stats.deviations[t]).abs() < 1e-12);
    }
}

#[test]
fn log_factor_is_necessary() {
    for n in [64, 128] {
        let s = lln_deviation(&VectorEnsemble::scaled_basis(n).unwrap(), n, 100, n as u64, 1.0).unwrap();
        assert!(s.mean >= 0.9, "n={n}: {}", s.mean);
    }
}

#[test]
fn tail_bound_halving_a() {
    for (a, t, c) in [(0.2, 0.5, 1.0), (0.3, 0.9, 2.0), (0.05, 0.1, 0.5)] {
        let full = tail_bound_eval(a, t, c).unwrap();
        let half = tail_bound_eval(a / 2.0, t, c).unwrap();
        assert!(full < 1.0 && half < 1.0);
        assert!((half / 2.0 - (full / 2.0).powi(4)).abs() <= 1e-15);
    }
}

#[test]
fn rademacher_exhaustive_within_four() {
    let mut rng = derive_rng(40, 0);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let d = rng.random_range(1..=8);
        let n = rng.random_range(1..=8);
        let ys: Vec<Vec<f64>> = (0..d).map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let c = rademacher_moment_exact(&ys, 1.0).unwrap();
        assert!(c.lhs <= 4.0 * c.rhs_factor, "{c:?}");
        worst = worst.max(c.fitted_constant());
    }
    assert!(worst > 0.0 && worst <= 4.0);
}

#[test]
fn rademacher_monte_carlo_tracks_exact() {
    let mut rng = derive_rng(41, 0);
    let ys: Vec<Vec<f64>> = (0..6).map(|_| (0..5).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let exact = rademacher_moment_exact(&ys, 2.0).unwrap();
    let mc = rademacher_moment_check(&ys, 2.0, 20_000, 3).unwrap();
    assert!((mc.lhs - exact.lhs).abs() <= 0.02 * exact.lhs);
    assert_eq!(mc.rhs_factor, exact.rhs_factor);
}

proptest! {
    #[test]
    fn empirical_moment_is_psd(ys in (1usize..6).prop_flat_map(|n| proptest::collection::vec(proptest::collection::vec(-3.0..3.0f64, n), 1..10))) {
        let m = empirical_second_moment(&ys).unwrap();
        prop_assert_eq!(m.clone(), m.transpose());
        let vals = symmetric_eigen(&m).unwrap().0;
        prop_assert!(*vals.last().unwrap() >= -1e-10);
    }

    #[test]
    fn deviation_stats_invariants(n in 1usize..20, d in 2usize..200, seed in any::<u64>()) {
        let s = lln_deviation(&VectorEnsemble::scaled_basis(n).unwrap(), d, 5, seed, 1.0).unwrap();
        prop_assert!(s.deviations.iter().all(|&x| x >= 0.0));
        prop_assert!(s.mean <= s.max);
        for (x, y) in s.deviations.iter().zip(s.closed_form.as_ref().unwrap()) {
            prop_assert!((x - y).abs() <= 1e-10);
        }
    }
}
