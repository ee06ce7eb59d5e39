//! Law of large numbers for sums of rank-one operators `y ⊗ y`.
//!
//! Ensembles are finitely supported: `y` takes the value `atom_j` with
//! probability `p_j`. Every ensemble is normalized so that `‖E y⊗y‖₂ = 1`.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, frobenius_norm, symmetric_spectral_norm, DenseMatrix};
use crate::rng::trial_rng;
use crate::sampling::{squared_norm, CumulativeTable};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleKind {
    /// `√n·e_i`, each with probability `1/n`.
    ScaledBasis,
    /// `(‖A‖_F/‖x_j‖₂)·x_j` with probability `‖x_j‖₂²/‖A‖_F²`, after `A ← A/‖A‖₂`.
    MatrixRows,
}

pub struct VectorEnsemble {
    kind: EnsembleKind,
    n: usize,
    bound: f64,
    /// Atom rows for `MatrixRows`; `None` for the scaled basis.
    atoms: Option<DenseMatrix>,
    probabilities: Vec<f64>,
    table: CumulativeTable,
    second_moment: DenseMatrix,
}

impl VectorEnsemble {
    pub fn scaled_basis(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Empty);
        }
        let probabilities = vec![1.0 / n as f64; n];
        Ok(Self {
            kind: EnsembleKind::ScaledBasis,
            n,
            bound: (n as f64).sqrt(),
            atoms: None,
            table: CumulativeTable::from_weights(&probabilities)?,
            probabilities,
            second_moment: DenseMatrix::identity(n),
        })
    }

    /// Rows of `A/‖A‖₂`, so that `E y⊗y = AᵀA/‖A‖₂²` and `M = √r(A)`.
    pub fn matrix_rows(a: &DenseMatrix) -> Result<Self> {
        let spectral = linalg::spectral_norm(a)?;
        if spectral == 0.0 {
            return Err(Error::ZeroMatrix);
        }
        let b = a.scaled(1.0 / spectral);
        let frob = frobenius_norm(&b);
        let weights: Vec<f64> = b.rows_iter().map(squared_norm).collect();
        let total: f64 = weights.iter().sum();
        let n = b.ncols();
        let atoms = DenseMatrix::from_fn(b.nrows(), n, |i, j| {
            if weights[i] > 0.0 {
                b.get(i, j) * frob / weights[i].sqrt()
            } else {
                0.0
            }
        });
        Ok(Self {
            kind: EnsembleKind::MatrixRows,
            n,
            bound: frob,
            table: CumulativeTable::from_weights(&weights)?,
            probabilities: weights.iter().map(|w| w / total).collect(),
            second_moment: b.gram(),
            atoms: Some(atoms),
        })
    }

    pub fn kind(&self) -> EnsembleKind {
        self.kind
    }

    pub fn dimension(&self) -> usize {
        self.n
    }

    /// `M = ess sup ‖y‖₂`.
    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn second_moment(&self) -> &DenseMatrix {
        &self.second_moment
    }

    pub fn atom_count(&self) -> usize {
        self.probabilities.len()
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn atom(&self, j: usize) -> Vec<f64> {
        match &self.atoms {
            Some(m) => m.row(j).to_vec(),
            None => {
                let mut v = vec![0.0; self.n];
                v[j] = self.bound;
                v
            }
        }
    }

    pub fn draw_index<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.table.sample(rng)
    }

    /// `d` i.i.d. copies of `y`.
    pub fn draw<R: Rng + ?Sized>(&self, d: usize, rng: &mut R) -> Vec<Vec<f64>> {
        (0..d).map(|_| self.atom(self.draw_index(rng))).collect()
    }

    /// `Σ_j (count_j/d)·atom_j⊗atom_j`.
    fn moment_from_counts(&self, counts: &[usize], d: usize) -> DenseMatrix {
        let n = self.n;
        let mut g = vec![0.0; n * n];
        match &self.atoms {
            None => {
                for (i, &c) in counts.iter().enumerate() {
                    g[i * n + i] = n as f64 * c as f64 / d as f64;
                }
            }
            Some(atoms) => {
                for (j, &c) in counts.iter().enumerate() {
                    if c > 0 {
                        linalg::add_outer(&mut g, atoms.row(j), c as f64 / d as f64);
                    }
                }
                linalg::symmetrize_upper(&mut g, n);
            }
        }
        DenseMatrix::new(n, n, g).expect("finite moment")
    }
}

/// `(1/d)·Σ y_i⊗y_i`.
pub fn empirical_second_moment(samples: &[Vec<f64>]) -> Result<DenseMatrix> {
    let first = samples.first().ok_or(Error::Empty)?;
    let n = first.len();
    if n == 0 {
        return Err(Error::Empty);
    }
    if samples.iter().any(|y| y.len() != n) {
        return Err(Error::DimensionMismatch("samples have different lengths".into()));
    }
    let mut g = vec![0.0; n * n];
    let w = 1.0 / samples.len() as f64;
    for y in samples {
        linalg::add_outer(&mut g, y, w);
    }
    linalg::symmetrize_upper(&mut g, n);
    DenseMatrix::new(n, n, g)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DeviationStats {
    pub d: usize,
    pub trials: usize,
    /// `‖(1/d)Σ y_i⊗y_i − E y⊗y‖₂` per trial.
    pub deviations: Vec<f64>,
    pub mean: f64,
    pub max: f64,
    pub c_constant: f64,
    /// `C·√(log d / d)·M`.
    pub a_value: f64,
    /// `max_i |(n/d)·count_i − 1|` per trial, for the scaled basis only.
    pub closed_form: Option<Vec<f64>>,
}

pub fn lln_deviation(
    ensemble: &VectorEnsemble,
    d: usize,
    trials: usize,
    seed: u64,
    c_constant: f64,
) -> Result<DeviationStats> {
    if d < 2 {
        return Err(Error::OutOfRange(format!("d = {d} must be at least 2")));
    }
    if trials == 0 {
        return Err(Error::OutOfRange("trials must be at least 1".into()));
    }
    let per_trial = (0..trials)
        .into_par_iter()
        .map(|t| -> Result<(f64, Option<f64>)> {
            let mut rng = trial_rng(seed, t);
            let mut counts = vec![0usize; ensemble.atom_count()];
            for _ in 0..d {
                counts[ensemble.draw_index(&mut rng)] += 1;
            }
            let emp = ensemble.moment_from_counts(&counts, d);
            let dev = symmetric_spectral_norm(&emp.sub(&ensemble.second_moment)?)?;
            let closed = (ensemble.kind == EnsembleKind::ScaledBasis).then(|| {
                let n = ensemble.n as f64;
                counts
                    .iter()
                    .map(|&c| (n / d as f64 * c as f64 - 1.0).abs())
                    .fold(0.0, f64::max)
            });
            Ok((dev, closed))
        })
        .collect::<Result<Vec<_>>>()?;
    let deviations: Vec<f64> = per_trial.iter().map(|p| p.0).collect();
    let closed_form = (ensemble.kind == EnsembleKind::ScaledBasis)
        .then(|| per_trial.iter().map(|p| p.1.unwrap_or(0.0)).collect());
    let mean = deviations.iter().sum::<f64>() / trials as f64;
    let max = deviations.iter().copied().fold(0.0, f64::max);
    let a_value = c_constant * ((d as f64).ln() / d as f64).sqrt() * ensemble.bound;
    Ok(DeviationStats { d, trials, deviations, mean, max, c_constant, a_value, closed_form })
}

/// `min(1, 2·exp(−c·t²/a²))`.
pub fn tail_bound_eval(a: f64, t: f64, c_constant: f64) -> Result<f64> {
    if !(a > 0.0 && a.is_finite()) {
        return Err(Error::OutOfRange(format!("a = {a} must be positive")));
    }
    if !(t > 0.0 && t < 1.0) {
        return Err(Error::OutOfRange(format!("t = {t} must lie in (0, 1)")));
    }
    if !(c_constant > 0.0 && c_constant.is_finite()) {
        return Err(Error::OutOfRange(format!("c = {c_constant} must be positive")));
    }
    Ok((2.0 * (-c_constant * t * t / (a * a)).exp()).min(1.0))
}

/// Estimated `(E‖Σ ε_i y_i⊗y_i‖₂^p)^{1/p}` next to the factor
/// `(p + log k)^{1/2}·max‖y_i‖₂·‖Σ y_i⊗y_i‖₂^{1/2}`, `k = min(d, n)`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct RademacherCheck {
    pub p: f64,
    pub lhs: f64,
    pub rhs_factor: f64,
    /// True when every sign pattern was enumerated.
    pub exact: bool,
}

impl RademacherCheck {
    /// `lhs / rhs_factor`, the smallest constant that makes the inequality hold.
    pub fn fitted_constant(&self) -> f64 {
        if self.lhs == 0.0 {
            0.0
        } else {
            self.lhs / self.rhs_factor
        }
    }
}

pub const MAX_SIGN_ENUMERATION: usize = 24;

struct Outer {
    n: usize,
    terms: Vec<Vec<f64>>,
}

impl Outer {
    fn new(vectors: &[Vec<f64>], p: f64) -> Result<Self> {
        let n = vectors.first().ok_or(Error::Empty)?.len();
        if n == 0 {
            return Err(Error::Empty);
        }
        if vectors.iter().any(|v| v.len() != n) {
            return Err(Error::DimensionMismatch("vectors have different lengths".into()));
        }
        if !(p >= 1.0 && p.is_finite()) {
            return Err(Error::OutOfRange(format!("p = {p} must be at least 1")));
        }
        let terms = vectors
            .iter()
            .map(|y| {
                let mut g = vec![0.0; n * n];
                linalg::add_outer(&mut g, y, 1.0);
                linalg::symmetrize_upper(&mut g, n);
                g
            })
            .collect();
        Ok(Self { n, terms })
    }

    fn signed_norm(&self, sign: impl Fn(usize) -> f64) -> Result<f64> {
        let mut sum = vec![0.0; self.n * self.n];
        for (i, t) in self.terms.iter().enumerate() {
            let s = sign(i);
            sum.iter_mut().zip(t).for_each(|(a, b)| *a += s * b);
        }
        symmetric_spectral_norm(&DenseMatrix::new(self.n, self.n, sum)?)
    }

    fn rhs_factor(&self, vectors: &[Vec<f64>], p: f64) -> Result<f64> {
        let k = vectors.len().min(self.n) as f64;
        let max_len = vectors.iter().map(|v| squared_norm(v).sqrt()).fold(0.0, f64::max);
        let total = self.signed_norm(|_| 1.0)?;
        Ok((p + k.ln()).sqrt() * max_len * total.sqrt())
    }
}

/// Monte-Carlo version over `trials` independent sign sequences.
pub fn rademacher_moment_check(
    vectors: &[Vec<f64>],
    p: f64,
    trials: usize,
    seed: u64,
) -> Result<RademacherCheck> {
    let outer = Outer::new(vectors, p)?;
    if trials == 0 {
        return Err(Error::OutOfRange("trials must be at least 1".into()));
    }
    let powers = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = trial_rng(seed, t);
            let signs: Vec<f64> =
                (0..vectors.len()).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
            outer.signed_norm(|i| signs[i]).map(|x| x.powf(p))
        })
        .collect::<Result<Vec<_>>>()?;
    let lhs = (powers.iter().sum::<f64>() / trials as f64).powf(1.0 / p);
    Ok(RademacherCheck { p, lhs, rhs_factor: outer.rhs_factor(vectors, p)?, exact: false })
}

/// Exact version: averages over all `2^d` sign sequences (`d ≤ 24`).
pub fn rademacher_moment_exact(vectors: &[Vec<f64>], p: f64) -> Result<RademacherCheck> {
    let outer = Outer::new(vectors, p)?;
    let d = vectors.len();
    if d > MAX_SIGN_ENUMERATION {
        return Err(Error::TooLarge { got: d, limit: MAX_SIGN_ENUMERATION });
    }
    // A global sign flip leaves the norm unchanged, so fix ε₁ = +1.
    let patterns = 1usize << (d - 1);
    let total = (0..patterns)
        .into_par_iter()
        .map(|mask| {
            outer
                .signed_norm(|i| if i > 0 && mask >> (i - 1) & 1 == 1 { -1.0 } else { 1.0 })
                .map(|x| x.powf(p))
        })
        .collect::<Result<Vec<_>>>()?
        .iter()
        .sum::<f64>();
    let lhs = (total / patterns as f64).powf(1.0 / p);
    Ok(RademacherCheck { p, lhs, rhs_factor: outer.rhs_factor(vectors, p)?, exact: true })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_rng;

    #[test]
    fn second_moment_examples() {
        let e1 = vec![1.0, 0.0, 0.0];
        let m = empirical_second_moment(&vec![e1; 5]).unwrap();
        assert_eq!(m.as_slice(), &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let s = 2.0_f64.sqrt();
        let m = empirical_second_moment(&[vec![s, 0.0], vec![0.0, s]]).unwrap();
        assert!(m.max_abs_diff(&DenseMatrix::identity(2)) < 1e-15);
        assert!(matches!(empirical_second_moment(&[]), Err(Error::Empty)));
        assert!(matches!(
            empirical_second_moment(&[vec![1.0], vec![1.0, 2.0]]),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn second_moment_matches_double_loop() {
        let mut rng = derive_rng(3, 0);
        for _ in 0..20 {
            let d = rng.random_range(1..12);
            let n = rng.random_range(1..7);
            let ys: Vec<Vec<f64>> =
                (0..d).map(|_| (0..n).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
            let got = empirical_second_moment(&ys).unwrap();
            for a in 0..n {
                for b in 0..n {
                    let mut s = 0.0;
                    for y in &ys {
                        s += y[a] * y[b];
                    }
                    assert!((got.get(a, b) - s / d as f64).abs() < 1e-12);
                }
            }
            let eig = linalg::symmetric_eigen(&got).unwrap().0;
            assert!(*eig.last().unwrap() >= -1e-10);
        }
    }

    #[test]
    fn ensemble_properties() {
        let e = VectorEnsemble::scaled_basis(5).unwrap();
        assert_eq!(e.bound(), 5.0_f64.sqrt());
        assert_eq!(e.second_moment(), &DenseMatrix::identity(5));
        assert_eq!(e.atom(2), vec![0.0, 0.0, 5.0_f64.sqrt(), 0.0, 0.0]);

        let a = DenseMatrix::from_rows(&[[3.0, 0.0], [0.0, 1.0], [0.0, 0.0]]).unwrap();
        let e = VectorEnsemble::matrix_rows(&a).unwrap();
        assert!((e.bound() - (10.0_f64 / 9.0).sqrt()).abs() < 1e-12);
        assert!((symmetric_spectral_norm(e.second_moment()).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(e.probabilities()[2], 0.0);
        // E y⊗y from the atoms equals the stored second moment.
        let mut g = DenseMatrix::zeros(2, 2);
        for j in 0..e.atom_count() {
            let v = e.atom(j);
            let p = e.probabilities()[j];
            g = DenseMatrix::from_fn(2, 2, |r, c| g.get(r, c) + p * v[r] * v[c]);
        }
        assert!(g.max_abs_diff(e.second_moment()) < 1e-12);
        assert!(matches!(VectorEnsemble::matrix_rows(&DenseMatrix::zeros(2, 2)), Err(Error::ZeroMatrix)));
    }

    #[test]
    fn scaled_basis_one_never_deviates() {
        let e = VectorEnsemble::scaled_basis(1).unwrap();
        for d in [2, 7, 100] {
            let s = lln_deviation(&e, d, 5, 1, 1.0).unwrap();
            assert!(s.deviations.iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn closed_form_agrees_with_eigensolver() {
        for n in [3, 8, 17] {
            let e = VectorEnsemble::scaled_basis(n).unwrap();
            let s = lln_deviation(&e, 3 * n, 25, n as u64, 1.0).unwrap();
            for (x, y) in s.deviations.iter().zip(s.closed_form.as_ref().unwrap()) {
                assert!((x - y).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn deviation_is_deterministic_and_validates() {
        let e = VectorEnsemble::scaled_basis(6).unwrap();
        let a = lln_deviation(&e, 10, 8, 4, 1.0).unwrap();
        let b = lln_deviation(&e, 10, 8, 4, 1.0).unwrap();
        assert_eq!(a.deviations, b.deviations);
        assert!(a.mean <= a.max);
        assert!(lln_deviation(&e, 1, 8, 4, 1.0).is_err());
        assert!(lln_deviation(&e, 10, 0, 4, 1.0).is_err());
    }

    #[test]
    fn tail_bound_examples() {
        assert_eq!(tail_bound_eval(1.0, 1e-9, 1.0).unwrap(), 1.0);
        assert!((tail_bound_eval(0.5, 0.5, 1.0).unwrap() - 2.0 / std::f64::consts::E).abs() < 1e-15);
        assert!(tail_bound_eval(0.0, 0.5, 1.0).is_err());
        assert!(tail_bound_eval(1.0, 1.0, 1.0).is_err());
        assert!(tail_bound_eval(1.0, 0.5, 0.0).is_err());
    }

    #[test]
    fn rademacher_single_vector() {
        let y = vec![vec![1.0, 2.0, -2.0]];
        for p in [1.0, 2.0, 5.0] {
            let c = rademacher_moment_exact(&y, p).unwrap();
            assert!((c.lhs - 9.0).abs() < 1e-12);
            assert!((c.rhs_factor - p.sqrt() * 9.0).abs() < 1e-12);
            assert!(c.fitted_constant() <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn rademacher_orthogonal_equal_norms() {
        let ys = vec![vec![2.0, 0.0, 0.0], vec![0.0, -2.0, 0.0], vec![0.0, 0.0, 2.0]];
        let exact = rademacher_moment_exact(&ys, 3.0).unwrap();
        assert!((exact.lhs - 4.0).abs() < 1e-12);
        let mc = rademacher_moment_check(&ys, 3.0, 50, 9).unwrap();
        assert!((mc.lhs - 4.0).abs() < 1e-12);
        assert!(!mc.exact && exact.exact);
    }
}
