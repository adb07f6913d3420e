//! The truncated weighted spectral operator and its non-truncated variant.
//!
//! From amplitudes `y` and the sensing matrix `A`, the operator
//! `V = (1/m) sum_i y_i a_i a_i^T 1{l*lambda < y_i < u*lambda}` concentrates
//! around `||x||_2 (gamma0 I + beta0 xbar xbar^T)`, so its leading
//! (sparsity-constrained) eigenvector estimates the signal direction. The
//! norm estimate `lambda = sqrt(pi/2) * mean(y)` sets the truncation band
//! and the final scaling. Closed-form band moments of the standard normal
//! are provided as test oracles for the population matrix.

use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayView1};

use crate::error::{Error, Result};
use crate::signals::SensingMatrix;
use crate::spca::SymmetricOperator;

/// `lambda = sqrt(pi/2) * mean(y)`; a consistent estimator of `||x||_2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormEstimate {
    lambda: f64,
}

impl NormEstimate {
    pub fn lambda(&self) -> f64 {
        self.lambda
    }
}

/// Computes the norm estimate exactly as stated: no clipping, summation in
/// index order so the value is bit-for-bit reproducible from `y`.
pub fn estimate_norm(y: ArrayView1<f64>) -> Result<NormEstimate> {
    if y.is_empty() {
        return Err(Error::invalid_argument(
            "cannot estimate a norm from zero measurements",
        ));
    }
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    Ok(NormEstimate {
        lambda: (PI / 2.0).sqrt() * mean,
    })
}

/// Truncation interval `(l, u)` in units of the norm estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncationBand {
    l: f64,
    u: f64,
}

impl TruncationBand {
    pub fn new(l: f64, u: f64) -> Result<Self> {
        if !(l.is_finite() && u.is_finite()) || l <= 0.0 || l >= u {
            return Err(Error::invalid_argument(format!(
                "truncation band requires 0 < l < u, got ({l}, {u})"
            )));
        }
        Ok(TruncationBand { l, u })
    }

    /// The default band `(l, u) = (1, 5)`.
    pub fn default_band() -> Self {
        TruncationBand { l: 1.0, u: 5.0 }
    }

    pub fn l(&self) -> f64 {
        self.l
    }

    pub fn u(&self) -> f64 {
        self.u
    }
}

/// Whether the operator is materialized as an `n x n` matrix or applied
/// against the sensing rows on the fly.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatorRepresentation {
    Dense,
    MatrixFree,
}

impl OperatorRepresentation {
    /// Dense applications are `O(n^2)` after an `O(m n^2)` build; matrix-free
    /// ones are `O(m n)` each. Dense wins for the iteration counts used here
    /// up to moderate dimensions.
    pub fn auto_for(n: usize) -> Self {
        if n <= 2048 {
            OperatorRepresentation::Dense
        } else {
            OperatorRepresentation::MatrixFree
        }
    }
}

/// Weighted empirical second-moment operator `sum_i w_i a_i a_i^T` with
/// per-measurement weights `w_i` (zero outside the truncation band).
#[derive(Debug, Clone)]
pub struct TruncatedSpectralOperator {
    matrix: Arc<SensingMatrix>,
    weights: Array1<f64>,
    active: Vec<usize>,
    lambda: f64,
    psd: bool,
    dense: Option<Array2<f64>>,
}

impl TruncatedSpectralOperator {
    pub fn dim(&self) -> usize {
        self.matrix.cols()
    }

    pub fn weights(&self) -> ArrayView1<'_, f64> {
        self.weights.view()
    }

    pub fn active_count(&self) -> usize {
        self.active.len()
    }

    pub fn is_zero(&self) -> bool {
        self.active.is_empty()
    }

    /// The norm estimate computed from the `y` this operator was built from.
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn representation(&self) -> OperatorRepresentation {
        if self.dense.is_some() {
            OperatorRepresentation::Dense
        } else {
            OperatorRepresentation::MatrixFree
        }
    }

    pub fn dense_matrix(&self) -> Option<&Array2<f64>> {
        self.dense.as_ref()
    }

    pub fn matrix(&self) -> &Arc<SensingMatrix> {
        &self.matrix
    }

    /// Applies the operator: `V w`. The matrix-free path computes
    /// `A^T (weights o (A w))` over the active rows without materializing `V`.
    pub fn apply(&self, w: ArrayView1<f64>) -> Result<Array1<f64>> {
        if w.len() != self.dim() {
            return Err(Error::dimension_mismatch(format!(
                "operator dimension {} but input has {}",
                self.dim(),
                w.len()
            )));
        }
        if let Some(dense) = &self.dense {
            return Ok(dense.dot(&w));
        }
        let mut out = Array1::<f64>::zeros(self.dim());
        for &i in &self.active {
            let row = self.matrix.row(i);
            let t = self.weights[i] * row.dot(&w);
            out.scaled_add(t, &row);
        }
        Ok(out)
    }

    /// `<w, V w>`.
    pub fn quadratic_form(&self, w: ArrayView1<f64>) -> Result<f64> {
        let vw = self.apply(w)?;
        Ok(w.dot(&vw))
    }
}

fn build_operator(
    matrix: &Arc<SensingMatrix>,
    weights: Array1<f64>,
    lambda: f64,
    psd: bool,
    representation: OperatorRepresentation,
) -> TruncatedSpectralOperator {
    let active: Vec<usize> = weights
        .iter()
        .enumerate()
        .filter_map(|(i, &w)| (w != 0.0).then_some(i))
        .collect();
    let dense = match representation {
        OperatorRepresentation::MatrixFree => None,
        OperatorRepresentation::Dense => {
            let n = matrix.cols();
            let rows = active.len();
            let mut gathered = Array2::<f64>::zeros((rows, n));
            let mut scaled = Array2::<f64>::zeros((rows, n));
            for (k, &i) in active.iter().enumerate() {
                let row = matrix.row(i);
                gathered.row_mut(k).assign(&row);
                let w = weights[i];
                ndarray::Zip::from(scaled.row_mut(k))
                    .and(&row)
                    .for_each(|d, &s| *d = w * s);
            }
            let v = gathered.t().dot(&scaled);
            Some((&v + &v.t()) * 0.5)
        }
    };
    TruncatedSpectralOperator {
        matrix: Arc::clone(matrix),
        weights,
        active,
        lambda,
        psd,
        dense,
    }
}

/// Builds `V` from Gaussian amplitudes using the strict truncation rule
/// `l*lambda < y_i < u*lambda`, with `lambda` computed internally from the
/// same `y`. An empty active set is legal and yields the zero operator.
pub fn build_truncated_operator(
    matrix: &Arc<SensingMatrix>,
    y: ArrayView1<f64>,
    band: &TruncationBand,
    representation: OperatorRepresentation,
) -> Result<TruncatedSpectralOperator> {
    let m = matrix.rows();
    if y.len() != m {
        return Err(Error::dimension_mismatch(format!(
            "matrix has {m} rows but y has {} entries",
            y.len()
        )));
    }
    let lambda = estimate_norm(y)?.lambda();
    let lo = band.l() * lambda;
    let hi = band.u() * lambda;
    let minv = 1.0 / m as f64;
    let weights = Array1::from_iter(
        y.iter()
            .map(|&yi| if lo < yi && yi < hi { yi * minv } else { 0.0 }),
    );
    Ok(build_operator(
        matrix,
        weights,
        lambda,
        true,
        representation,
    ))
}

/// Builds the non-truncated variant with weights `y_i / m` for every row,
/// including any negative `y_i` under noise; positive semidefiniteness is
/// not guaranteed for this operator.
pub fn build_untruncated_operator(
    matrix: &Arc<SensingMatrix>,
    y: ArrayView1<f64>,
    representation: OperatorRepresentation,
) -> Result<TruncatedSpectralOperator> {
    let m = matrix.rows();
    if y.len() != m {
        return Err(Error::dimension_mismatch(format!(
            "matrix has {m} rows but y has {} entries",
            y.len()
        )));
    }
    let lambda = estimate_norm(y)?.lambda();
    let minv = 1.0 / m as f64;
    let weights = Array1::from_iter(y.iter().map(|&yi| yi * minv));
    Ok(build_operator(
        matrix,
        weights,
        lambda,
        false,
        representation,
    ))
}

impl SymmetricOperator for TruncatedSpectralOperator {
    fn dim(&self) -> usize {
        self.dim()
    }

    fn apply(&self, w: ArrayView1<f64>) -> Array1<f64> {
        TruncatedSpectralOperator::apply(self, w).expect("dimension checked by caller")
    }

    fn diagonal(&self) -> Array1<f64> {
        if let Some(dense) = &self.dense {
            return dense.diag().to_owned();
        }
        let mut diag = Array1::<f64>::zeros(self.dim());
        for &i in &self.active {
            let row = self.matrix.row(i);
            let w = self.weights[i];
            ndarray::Zip::from(&mut diag)
                .and(&row)
                .for_each(|d, &a| *d += w * a * a);
        }
        diag
    }

    fn column(&self, j: usize) -> Array1<f64> {
        if let Some(dense) = &self.dense {
            return dense.column(j).to_owned();
        }
        let mut col = Array1::<f64>::zeros(self.dim());
        for &i in &self.active {
            let row = self.matrix.row(i);
            let t = self.weights[i] * row[j];
            col.scaled_add(t, &row);
        }
        col
    }

    fn principal_submatrix(&self, idx: &[usize]) -> Array2<f64> {
        if let Some(dense) = &self.dense {
            let k = idx.len();
            let mut sub = Array2::<f64>::zeros((k, k));
            for (r, &i) in idx.iter().enumerate() {
                for (c, &j) in idx.iter().enumerate() {
                    sub[(r, c)] = dense[(i, j)];
                }
            }
            return sub;
        }
        let k = idx.len();
        let mut sub = Array2::<f64>::zeros((k, k));
        let mut gathered = vec![0.0; k];
        for &i in &self.active {
            let row = self.matrix.row(i);
            for (t, &j) in gathered.iter_mut().zip(idx.iter()) {
                *t = row[j];
            }
            let w = self.weights[i];
            for r in 0..k {
                let f = w * gathered[r];
                for c in 0..k {
                    sub[(r, c)] += f * gathered[c];
                }
            }
        }
        sub
    }

    fn assume_psd(&self) -> bool {
        self.psd
    }
}

/// Band moments of the standard normal against which the population matrix
/// `E[V] = ||x||_2 (gamma0 I + beta0 xbar xbar^T)` is checked, plus the
/// noise-weight coefficients from the shifted-band expectation lemma.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PopulationCoefficients {
    pub gamma0: f64,
    pub beta0: f64,
    pub gamma_check: f64,
    pub beta_check: f64,
}

impl PopulationCoefficients {
    /// Closed-form Gaussian tail expressions over `(l, u)`:
    /// `gamma0 = E[|g| 1] = 2(phi(l) - phi(u))`,
    /// `beta0 = E[|g|^3 1] - gamma0 = 2((l^2+1)phi(l) - (u^2+1)phi(u))`,
    /// `gamma_check = E[1] = erfc(l/sqrt2) - erfc(u/sqrt2)`,
    /// `beta_check = E[g^2 1] - gamma_check = 2(l phi(l) - u phi(u))`.
    ///
    /// A degenerate interval `l = u` is allowed and yields all zeros.
    pub fn for_interval(l: f64, u: f64) -> Result<Self> {
        if !(l.is_finite() && u.is_finite()) || l <= 0.0 || l > u {
            return Err(Error::invalid_argument(format!(
                "band moments require 0 < l <= u, got ({l}, {u})"
            )));
        }
        let phi = |t: f64| (-0.5 * t * t).exp() / (2.0 * PI).sqrt();
        let gamma0 = 2.0 * (phi(l) - phi(u));
        let beta0 = 2.0 * ((l * l + 1.0) * phi(l) - (u * u + 1.0) * phi(u));
        let gamma_check = libm::erfc(l / 2.0f64.sqrt()) - libm::erfc(u / 2.0f64.sqrt());
        let beta_check = 2.0 * (l * phi(l) - u * phi(u));
        Ok(PopulationCoefficients {
            gamma0,
            beta0,
            gamma_check,
            beta_check,
        })
    }
}

/// Band moments for a [`TruncationBand`] (always a valid interval).
pub fn population_coefficients(band: &TruncationBand) -> PopulationCoefficients {
    PopulationCoefficients::for_interval(band.l(), band.u())
        .expect("band invariant guarantees 0 < l < u")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::sym_spectral_norm;
    use crate::rng::{Component, TrialStreams};
    use crate::signals::{gen_sensing_matrix, gen_sparse_signal, measure, NoiseSpec, SparseSignal};
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    // ---- quadrature oracle (independent of the closed forms) ----

    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let n = if n.is_multiple_of(2) { n } else { n + 1 };
        let h = (b - a) / n as f64;
        let mut acc = f(a) + f(b);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * f(a + i as f64 * h);
        }
        acc * h / 3.0
    }

    fn band_moment(power: u32, l: f64, u: f64) -> f64 {
        let phi = |t: f64| (-0.5 * t * t).exp() / (2.0 * PI).sqrt();
        2.0 * simpson(&|t: f64| t.powi(power as i32) * phi(t), l, u, 20_000)
    }

    #[test]
    fn closed_forms_match_quadrature_oracle() {
        for (l, u) in [(1.0, 5.0), (0.5, 2.0), (1.5, 2.0), (2.0, 8.0)] {
            let c = PopulationCoefficients::for_interval(l, u).unwrap();
            let g0 = band_moment(1, l, u);
            let b0 = band_moment(3, l, u) - g0;
            let gc = band_moment(0, l, u);
            let bc = band_moment(2, l, u) - gc;
            assert_abs_diff_eq!(c.gamma0, g0, epsilon = 1e-9);
            assert_abs_diff_eq!(c.beta0, b0, epsilon = 1e-9);
            assert_abs_diff_eq!(c.gamma_check, gc, epsilon = 1e-9);
            assert_abs_diff_eq!(c.beta_check, bc, epsilon = 1e-9);
        }
    }

    #[test]
    fn default_band_coefficients_to_six_digits() {
        // Frozen from the quadrature oracle for (l, u) = (1, 5).
        let c = population_coefficients(&TruncationBand::default_band());
        assert_abs_diff_eq!(c.gamma0, 0.483938475599257, epsilon = 5e-7);
        assert_abs_diff_eq!(c.beta0, 0.967805588661807, epsilon = 5e-7);
    }

    #[test]
    fn degenerate_interval_gives_zero_coefficients() {
        let c = PopulationCoefficients::for_interval(1.3, 1.3).unwrap();
        assert_eq!(c.gamma0, 0.0);
        assert_eq!(c.beta0, 0.0);
        assert_eq!(c.gamma_check, 0.0);
        assert_eq!(c.beta_check, 0.0);
        assert!(PopulationCoefficients::for_interval(2.0, 1.0).is_err());
        assert!(PopulationCoefficients::for_interval(0.0, 1.0).is_err());
    }

    #[test]
    fn narrow_band_beta_positive() {
        let c = PopulationCoefficients::for_interval(1.5, 2.0).unwrap();
        assert!(c.beta0 > 0.0);
        assert!(c.beta_check > 0.0);
    }

    // ---- norm estimate ----

    #[test]
    fn constant_amplitudes_give_exact_lambda() {
        let y = Array1::from_elem(17, 3.25);
        let lam = estimate_norm(y.view()).unwrap().lambda();
        assert_eq!(lam, (PI / 2.0).sqrt() * 3.25);
        assert!(estimate_norm(Array1::<f64>::zeros(0).view()).is_err());
    }

    #[test]
    fn lambda_concentrates_for_unit_signal() {
        // x = e1 in R^1, sigma = 0, m = 1e6: E[lambda] = 1, std ~ 7.6e-4.
        let m = 1_000_000;
        let matrix = Arc::new(gen_sensing_matrix(m, 1, 31).unwrap());
        let x = SparseSignal::from_parts(array![1.0], vec![0]).unwrap();
        let meas = measure(
            &matrix,
            &x,
            &NoiseSpec::noiseless(),
            &mut TrialStreams::new(0).component(Component::Noise),
        )
        .unwrap();
        let lam = estimate_norm(meas.amplitudes()).unwrap().lambda();
        assert!((0.99..=1.01).contains(&lam), "lambda = {lam}");
    }

    #[test]
    fn lambda_is_unbiased_across_trials() {
        // Mean of lambda / ||x|| over 1e4 trials within 3 standard errors.
        let trials = 10_000;
        let m = 100;
        let streams = TrialStreams::new(5);
        let x = gen_sparse_signal(6, 3, &mut streams.component(Component::Signal)).unwrap();
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for t in 0..trials {
            let matrix = Arc::new(gen_sensing_matrix(m, 6, 1000 + t as u64).unwrap());
            let meas = measure(
                &matrix,
                &x,
                &NoiseSpec::noiseless(),
                &mut streams.component(Component::Noise),
            )
            .unwrap();
            let r = estimate_norm(meas.amplitudes()).unwrap().lambda() / x.norm();
            sum += r;
            sumsq += r * r;
        }
        let mean = sum / trials as f64;
        let var = sumsq / trials as f64 - mean * mean;
        let se = (var / trials as f64).sqrt();
        assert!((mean - 1.0).abs() <= 3.0 * se, "mean {mean}, se {se}");
    }

    // ---- operator construction ----

    fn toy_operator(
        seed: u64,
        m: usize,
        n: usize,
        sigma: f64,
        repr: OperatorRepresentation,
    ) -> (Arc<SensingMatrix>, Array1<f64>, TruncatedSpectralOperator) {
        let streams = TrialStreams::new(seed);
        let matrix = Arc::new(gen_sensing_matrix(m, n, streams.matrix_seed()).unwrap());
        let x = gen_sparse_signal(n, (n / 3).max(1), &mut streams.component(Component::Signal))
            .unwrap();
        let noise = NoiseSpec::new(sigma).unwrap();
        let meas = measure(
            &matrix,
            &x,
            &noise,
            &mut streams.component(Component::Noise),
        )
        .unwrap();
        let y = meas.amplitudes().to_owned();
        let op = build_truncated_operator(&matrix, y.view(), &TruncationBand::default_band(), repr)
            .unwrap();
        (matrix, y, op)
    }

    #[test]
    fn out_of_band_measurements_give_zero_operator() {
        let matrix = Arc::new(gen_sensing_matrix(6, 4, 9).unwrap());
        // Constant y: lambda = sqrt(pi/2) c ~ 1.2533 c, so y = c sits below l*lambda for l = 1.3.
        let y = Array1::from_elem(6, 2.0);
        let band = TruncationBand::new(1.3, 2.0).unwrap();
        let op = build_truncated_operator(&matrix, y.view(), &band, OperatorRepresentation::Dense)
            .unwrap();
        assert_eq!(op.active_count(), 0);
        assert!(op.is_zero());
        let w = Array1::from_elem(4, 1.0);
        assert_eq!(op.apply(w.view()).unwrap().to_vec(), vec![0.0; 4]);
    }

    #[test]
    fn single_active_row_is_rank_one() {
        let matrix = Arc::new(gen_sensing_matrix(5, 3, 12).unwrap());
        // One measurement inside the band, the rest far outside.
        let y = array![0.001, 1.2, 0.001, 0.001, 0.001];
        let lam = estimate_norm(y.view()).unwrap().lambda();
        let band = TruncationBand::new(1.0, 5.0).unwrap();
        assert!(band.l() * lam < 1.2 && 1.2 < band.u() * lam);
        let op = build_truncated_operator(&matrix, y.view(), &band, OperatorRepresentation::Dense)
            .unwrap();
        assert_eq!(op.active_count(), 1);
        let a = matrix.row(1);
        let c = 1.2 / 5.0;
        let dense = op.dense_matrix().unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_abs_diff_eq!(dense[(i, j)], c * a[i] * a[j], epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn untruncated_equals_wide_band_noiseless() {
        let streams = TrialStreams::new(44);
        let matrix = Arc::new(gen_sensing_matrix(60, 8, streams.matrix_seed()).unwrap());
        let x = gen_sparse_signal(8, 3, &mut streams.component(Component::Signal)).unwrap();
        let meas = measure(
            &matrix,
            &x,
            &NoiseSpec::noiseless(),
            &mut streams.component(Component::Noise),
        )
        .unwrap();
        let wide = TruncationBand::new(1e-12, 1e12).unwrap();
        let vt = build_truncated_operator(
            &matrix,
            meas.amplitudes(),
            &wide,
            OperatorRepresentation::Dense,
        )
        .unwrap();
        let vn =
            build_untruncated_operator(&matrix, meas.amplitudes(), OperatorRepresentation::Dense)
                .unwrap();
        // Noiseless y > 0 almost surely, so the weight vectors agree bitwise.
        assert_eq!(vt.weights().to_vec(), vn.weights().to_vec());
        assert_eq!(vt.dense_matrix().unwrap(), vn.dense_matrix().unwrap());
    }

    #[test]
    fn zero_measurements_give_zero_untruncated_operator() {
        let matrix = Arc::new(gen_sensing_matrix(7, 3, 2).unwrap());
        let y = Array1::<f64>::zeros(7);
        let op = build_untruncated_operator(&matrix, y.view(), OperatorRepresentation::MatrixFree)
            .unwrap();
        assert_eq!(op.active_count(), 0);
    }

    #[test]
    fn operators_from_sign_flipped_signals_are_identical() {
        let streams = TrialStreams::new(17);
        let matrix = Arc::new(gen_sensing_matrix(40, 6, streams.matrix_seed()).unwrap());
        let x = gen_sparse_signal(6, 2, &mut streams.component(Component::Signal)).unwrap();
        let m1 = measure(
            &matrix,
            &x,
            &NoiseSpec::noiseless(),
            &mut streams.component(Component::Noise),
        )
        .unwrap();
        let m2 = measure(
            &matrix,
            &x.negated(),
            &NoiseSpec::noiseless(),
            &mut streams.component(Component::Noise),
        )
        .unwrap();
        let v1 = build_truncated_operator(
            &matrix,
            m1.amplitudes(),
            &TruncationBand::default_band(),
            OperatorRepresentation::Dense,
        )
        .unwrap();
        let v2 = build_truncated_operator(
            &matrix,
            m2.amplitudes(),
            &TruncationBand::default_band(),
            OperatorRepresentation::Dense,
        )
        .unwrap();
        assert_eq!(v1.weights().to_vec(), v2.weights().to_vec());
        assert_eq!(v1.dense_matrix().unwrap(), v2.dense_matrix().unwrap());
    }

    #[test]
    fn apply_matches_rank_one_formula() {
        let a = array![1.0, -2.0, 0.5];
        let matrix = Arc::new(SensingMatrix::from_entries(
            Array2::from_shape_vec((1, 3), a.to_vec()).unwrap(),
            0,
        ));
        let y = array![1.0];
        let op = build_untruncated_operator(&matrix, y.view(), OperatorRepresentation::MatrixFree)
            .unwrap();
        let w = array![0.3, 0.7, -0.1];
        let out = op.apply(w.view()).unwrap();
        let c = 1.0; // weight = y/m = 1
        let dot = a.dot(&w);
        for i in 0..3 {
            assert_abs_diff_eq!(out[i], c * dot * a[i], epsilon = 1e-14);
        }
    }

    #[test]
    fn dense_and_matrix_free_agree() {
        let (_, y, dense_op) = toy_operator(3, 80, 12, 0.1, OperatorRepresentation::Dense);
        let mf_op = build_truncated_operator(
            dense_op.matrix(),
            y.view(),
            &TruncationBand::default_band(),
            OperatorRepresentation::MatrixFree,
        )
        .unwrap();
        let mut rng = TrialStreams::new(9).component(Component::Init);
        for _ in 0..20 {
            let w = Array1::from_iter((0..12).map(|_| rng.sample::<f64, _>(StandardNormal)));
            let d = dense_op.apply(w.view()).unwrap();
            let f = mf_op.apply(w.view()).unwrap();
            let diff = (&d - &f).mapv(f64::abs).sum();
            let scale = d.mapv(f64::abs).sum().max(1e-300);
            assert!(diff / scale <= 1e-8, "relative difference {}", diff / scale);
        }
    }

    #[test]
    fn quadratic_form_matches_direct_sum() {
        let (matrix, y, op) = toy_operator(5, 50, 9, 0.0, OperatorRepresentation::Dense);
        let mut rng = TrialStreams::new(10).component(Component::Init);
        for _ in 0..10 {
            let w = Array1::from_iter((0..9).map(|_| rng.sample::<f64, _>(StandardNormal)));
            let qf = op.quadratic_form(w.view()).unwrap();
            // direct-sum oracle: sum_i w_i <a_i, w>^2
            let mut direct = 0.0;
            for i in 0..50 {
                let dot = matrix.row(i).dot(&w);
                direct += op.weights()[i] * dot * dot;
            }
            let _ = y;
            assert!(
                (qf - direct).abs() <= 1e-8 * direct.abs().max(1.0),
                "qf {qf} direct {direct}"
            );
            assert!(qf >= -1e-10 * w.dot(&w));
        }
        let zero = Array1::<f64>::zeros(9);
        assert_eq!(op.quadratic_form(zero.view()).unwrap(), 0.0);
    }

    #[test]
    fn population_matrix_matches_lemma_closed_form() {
        // n = 5, x = 2 e1, sigma = 0, moderate m; the acceptance suite runs
        // the full-size version of this check.
        let m = 300_000;
        let n = 5;
        let streams = TrialStreams::new(61);
        let matrix = Arc::new(gen_sensing_matrix(m, n, streams.matrix_seed()).unwrap());
        let mut values = Array1::<f64>::zeros(n);
        values[0] = 2.0;
        let x = SparseSignal::from_parts(values, vec![0]).unwrap();
        let meas = measure(
            &matrix,
            &x,
            &NoiseSpec::noiseless(),
            &mut streams.component(Component::Noise),
        )
        .unwrap();
        let band = TruncationBand::default_band();
        let op = build_truncated_operator(
            &matrix,
            meas.amplitudes(),
            &band,
            OperatorRepresentation::Dense,
        )
        .unwrap();
        let c = population_coefficients(&band);
        let mut expected = Array2::<f64>::eye(n) * (2.0 * c.gamma0);
        expected[(0, 0)] += 2.0 * c.beta0;
        let diff = op.dense_matrix().unwrap() - &expected;
        let err = sym_spectral_norm(&diff.view());
        assert!(err <= 0.04, "spectral norm deviation {err}");
    }

    #[test]
    fn untruncated_population_matches_gaussian_moments() {
        // E|g| = sqrt(2/pi), E|g|^3 = 2 sqrt(2/pi): for x = e1 the mean of
        // V-tilde is gamma I + beta e1 e1^T with gamma = beta = 0.79788...
        let m = 400_000;
        let n = 5;
        let streams = TrialStreams::new(62);
        let matrix = Arc::new(gen_sensing_matrix(m, n, streams.matrix_seed()).unwrap());
        let mut values = Array1::<f64>::zeros(n);
        values[0] = 1.0;
        let x = SparseSignal::from_parts(values, vec![0]).unwrap();
        let meas = measure(
            &matrix,
            &x,
            &NoiseSpec::noiseless(),
            &mut streams.component(Component::Noise),
        )
        .unwrap();
        let op =
            build_untruncated_operator(&matrix, meas.amplitudes(), OperatorRepresentation::Dense)
                .unwrap();
        let g = (2.0 / PI).sqrt();
        let mut expected = Array2::<f64>::eye(n) * g;
        expected[(0, 0)] += g;
        let diff = op.dense_matrix().unwrap() - &expected;
        let err = sym_spectral_norm(&diff.view());
        assert!(err <= 0.03, "spectral norm deviation {err}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn operator_is_symmetric_and_psd(seed in 0u64..500, sigma in 0.0f64..0.5) {
            let (_, _, op) = toy_operator(seed, 40, 7, sigma, OperatorRepresentation::Dense);
            let mut rng = TrialStreams::new(seed ^ 0xabc).component(Component::Init);
            for _ in 0..5 {
                let w = Array1::from_iter((0..7).map(|_| rng.sample::<f64, _>(StandardNormal)));
                let v = Array1::from_iter((0..7).map(|_| rng.sample::<f64, _>(StandardNormal)));
                let vw = op.apply(w.view()).unwrap();
                let vv = op.apply(v.view()).unwrap();
                let lhs = vw.dot(&v);
                let rhs = vv.dot(&w);
                let scale = lhs.abs().max(rhs.abs()).max(1e-300);
                prop_assert!((lhs - rhs).abs() / scale <= 1e-10);
                let qf = op.quadratic_form(w.view()).unwrap();
                prop_assert!(qf >= -1e-10 * w.dot(&w));
            }
        }

        #[test]
        fn widening_band_never_loses_active_rows(seed in 0u64..500, dl in 0.01f64..0.9, du in 0.0f64..5.0) {
            let streams = TrialStreams::new(seed);
            let matrix = Arc::new(gen_sensing_matrix(50, 6, streams.matrix_seed()).unwrap());
            let x = gen_sparse_signal(6, 2, &mut streams.component(Component::Signal)).unwrap();
            let meas = measure(&matrix, &x, &NoiseSpec::new(0.2).unwrap(), &mut streams.component(Component::Noise)).unwrap();
            let inner = TruncationBand::new(1.0, 5.0).unwrap();
            let outer = TruncationBand::new(1.0 - dl, 5.0 + du).unwrap();
            let vi = build_truncated_operator(&matrix, meas.amplitudes(), &inner, OperatorRepresentation::MatrixFree).unwrap();
            let vo = build_truncated_operator(&matrix, meas.amplitudes(), &outer, OperatorRepresentation::MatrixFree).unwrap();
            prop_assert!(vo.active_count() >= vi.active_count());
        }
    }
}
