//! The initializer zoo: the sparse-PCA spectral initializer on the truncated
//! operator, its non-truncated variant, reconstructions of the ThWF / SPARTA
//! / CoPRAM spectral initializations, and random initialization.
//!
//! Every initializer is a pure function of `(A, y, config, seed)`; identical
//! inputs give bit-identical outputs. All of them are invariant under a
//! global sign flip of the signal because `y` is.

use std::sync::Arc;
use std::time::Instant;

use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{norm2, top_k_by_magnitude};
use crate::signals::SensingMatrix;
use crate::spca::{power_method, solve_spca, start_vector, DenseSymOperator, SpcaConfig};
use crate::spectral::{
    build_truncated_operator, build_untruncated_operator, estimate_norm, OperatorRepresentation,
    TruncationBand,
};

/// Power steps used by every restricted-block baseline.
const POWER_STEPS: usize = 100;

/// Identifies which method produced a result; also the experiment vocabulary
/// of the harness CSV.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MethodTag {
    PriSpca,
    PriSpcaNt,
    Thwf,
    Sparta,
    Copram,
    Random,
    GenAmplitude,
    GenSpectral,
}

impl MethodTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            MethodTag::PriSpca => "pri-spca",
            MethodTag::PriSpcaNt => "pri-spca-nt",
            MethodTag::Thwf => "thwf",
            MethodTag::Sparta => "sparta",
            MethodTag::Copram => "copram",
            MethodTag::Random => "random",
            MethodTag::GenAmplitude => "gen-amplitude",
            MethodTag::GenSpectral => "gen-spectral",
        }
    }

    pub fn all_sparse_initializers() -> &'static [MethodTag] {
        &[
            MethodTag::PriSpca,
            MethodTag::PriSpcaNt,
            MethodTag::Thwf,
            MethodTag::Sparta,
            MethodTag::Copram,
        ]
    }
}

impl std::fmt::Display for MethodTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for MethodTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pri-spca" => Ok(MethodTag::PriSpca),
            "pri-spca-nt" => Ok(MethodTag::PriSpcaNt),
            "thwf" => Ok(MethodTag::Thwf),
            "sparta" => Ok(MethodTag::Sparta),
            "copram" => Ok(MethodTag::Copram),
            "random" => Ok(MethodTag::Random),
            "gen-amplitude" => Ok(MethodTag::GenAmplitude),
            "gen-spectral" => Ok(MethodTag::GenSpectral),
            other => Err(Error::Parse(format!("unknown method '{other}'"))),
        }
    }
}

/// An initializer's output: the unit direction, the scaled initial vector
/// `x0 = lambda_used * xhat`, and bookkeeping.
#[derive(Debug, Clone)]
pub struct InitResult {
    pub xhat: Array1<f64>,
    pub x0: Array1<f64>,
    pub method: MethodTag,
    pub lambda_used: f64,
    pub support_estimate: Option<Vec<usize>>,
    /// Wall-clock seconds spent inside the initializer.
    pub wall_time: f64,
    pub degenerate: bool,
}

impl InitResult {
    fn assemble(
        method: MethodTag,
        xhat: Array1<f64>,
        scale: f64,
        support_estimate: Option<Vec<usize>>,
        degenerate: bool,
        started: Instant,
    ) -> Self {
        let nrm = norm2(&xhat.view());
        debug_assert!(
            (nrm - 1.0).abs() <= 1e-10,
            "initializer direction norm {nrm}"
        );
        let x0 = xhat.mapv(|v| scale * v);
        InitResult {
            xhat,
            x0,
            method,
            lambda_used: scale,
            support_estimate,
            wall_time: started.elapsed().as_secs_f64(),
            degenerate,
        }
    }
}

fn first_basis_vector(n: usize) -> Array1<f64> {
    let mut e = Array1::<f64>::zeros(n);
    e[0] = 1.0;
    e
}

/// The sparse-PCA spectral initializer on the truncated operator: compute
/// `lambda` and `V`, solve the sparsity-constrained quadratic maximization
/// from the largest-diagonal-column start, and scale the unit maximizer by
/// `lambda`.
pub fn pri_spca(
    matrix: &Arc<SensingMatrix>,
    y: ArrayView1<f64>,
    band: &TruncationBand,
    cfg: &SpcaConfig,
) -> Result<InitResult> {
    cfg.validate()?;
    let started = Instant::now();
    let repr = OperatorRepresentation::auto_for(matrix.cols());
    let op = build_truncated_operator(matrix, y, band, repr)?;
    let lambda = op.lambda();
    if op.is_zero() {
        // Empty truncation band: nothing to iterate on. Flag it and fall back
        // to a deterministic basis direction so the harness can still score.
        return Ok(InitResult::assemble(
            MethodTag::PriSpca,
            first_basis_vector(matrix.cols()),
            lambda,
            None,
            true,
            started,
        ));
    }
    let (start, start_degenerate) = start_vector(&op);
    let res = solve_spca(&op, cfg, start.view())?;
    let support = res
        .direction
        .iter()
        .enumerate()
        .filter_map(|(j, &v)| (v != 0.0).then_some(j))
        .collect();
    Ok(InitResult::assemble(
        MethodTag::PriSpca,
        res.direction,
        lambda,
        Some(support),
        res.degenerate || start_degenerate,
        started,
    ))
}

/// Identical pipeline on the non-truncated weighted matrix; still scaled by
/// `lambda`.
pub fn pri_spca_nt(
    matrix: &Arc<SensingMatrix>,
    y: ArrayView1<f64>,
    cfg: &SpcaConfig,
) -> Result<InitResult> {
    cfg.validate()?;
    let started = Instant::now();
    let repr = OperatorRepresentation::auto_for(matrix.cols());
    let op = build_untruncated_operator(matrix, y, repr)?;
    let lambda = op.lambda();
    if op.is_zero() {
        return Ok(InitResult::assemble(
            MethodTag::PriSpcaNt,
            first_basis_vector(matrix.cols()),
            lambda,
            None,
            true,
            started,
        ));
    }
    let (start, start_degenerate) = start_vector(&op);
    let res = solve_spca(&op, cfg, start.view())?;
    let support = res
        .direction
        .iter()
        .enumerate()
        .filter_map(|(j, &v)| (v != 0.0).then_some(j))
        .collect();
    Ok(InitResult::assemble(
        MethodTag::PriSpcaNt,
        res.direction,
        lambda,
        Some(support),
        res.degenerate || start_degenerate,
        started,
    ))
}

/// Marginal scores `M_j = (1/m) sum_i y_i^2 a_ij^2`.
fn squared_marginals(matrix: &SensingMatrix, y: ArrayView1<f64>) -> Array1<f64> {
    let (m, n) = (matrix.rows(), matrix.cols());
    let mut scores = Array1::<f64>::zeros(n);
    for i in 0..m {
        let z = y[i] * y[i];
        let row = matrix.row(i);
        ndarray::Zip::from(&mut scores)
            .and(&row)
            .for_each(|acc, &a| *acc += z * a * a);
    }
    scores / m as f64
}

/// `sum_i w_i a_{i,cols} a_{i,cols}^T` over the given rows, via gathered GEMM.
fn restricted_weighted_block(
    matrix: &SensingMatrix,
    row_weights: &[(usize, f64)],
    cols: &[usize],
) -> Array2<f64> {
    let k = cols.len();
    let rows = row_weights.len();
    let mut gathered = Array2::<f64>::zeros((rows, k));
    let mut scaled = Array2::<f64>::zeros((rows, k));
    for (r, &(i, w)) in row_weights.iter().enumerate() {
        let row = matrix.row(i);
        for (c, &j) in cols.iter().enumerate() {
            let v = row[j];
            gathered[(r, c)] = v;
            scaled[(r, c)] = w * v;
        }
    }
    let block = gathered.t().dot(&scaled);
    (&block + &block.t()) * 0.5
}

/// Power iteration on a restricted block from its largest-diagonal-column
/// start, embedded back into `R^n`.
fn restricted_power_direction(
    block: Array2<f64>,
    cols: &[usize],
    n: usize,
) -> Result<(Array1<f64>, bool)> {
    let op = DenseSymOperator::new(block, true)?;
    let (start, start_degenerate) = start_vector(&op);
    let (v, power_degenerate) = power_method(&op, POWER_STEPS, start.view());
    let mut xhat = Array1::<f64>::zeros(n);
    for (idx, &j) in cols.iter().enumerate() {
        xhat[j] = v[idx];
    }
    let nrm = norm2(&xhat.view());
    if nrm == 0.0 {
        return Ok((first_basis_vector(n), true));
    }
    Ok((xhat / nrm, start_degenerate || power_degenerate))
}

/// CoPRAM-style spectral initialization: top-`s` marginal support estimate,
/// power iteration on the squared-weighted restricted block, scaled by
/// `sqrt(mean y_i^2)`.
pub fn copram_init(
    matrix: &Arc<SensingMatrix>,
    y: ArrayView1<f64>,
    s: usize,
) -> Result<InitResult> {
    if s == 0 {
        return Err(Error::invalid_argument("sparsity must be >= 1"));
    }
    if y.len() != matrix.rows() {
        return Err(Error::dimension_mismatch(
            "y length differs from matrix rows",
        ));
    }
    let started = Instant::now();
    let (m, n) = (matrix.rows(), matrix.cols());
    let s = s.min(n);
    let scores = squared_marginals(matrix, y);
    let support = top_k_by_magnitude(&scores.view(), s);
    let minv = 1.0 / m as f64;
    let row_weights: Vec<(usize, f64)> = (0..m).map(|i| (i, y[i] * y[i] * minv)).collect();
    let block = restricted_weighted_block(matrix, &row_weights, &support);
    let (xhat, degenerate) = restricted_power_direction(block, &support, n)?;
    let phi = (y.iter().map(|v| v * v).sum::<f64>() * minv).sqrt();
    Ok(InitResult::assemble(
        MethodTag::Copram,
        xhat,
        phi,
        Some(support),
        degenerate,
        started,
    ))
}

/// SPARTA-style spectral initialization: same marginal support estimate,
/// but the block only sums the `ceil(m/6)` largest measurements, each
/// normalized by the restricted row norm.
pub fn sparta_init(
    matrix: &Arc<SensingMatrix>,
    y: ArrayView1<f64>,
    s: usize,
) -> Result<InitResult> {
    if s == 0 {
        return Err(Error::invalid_argument("sparsity must be >= 1"));
    }
    if y.len() != matrix.rows() {
        return Err(Error::dimension_mismatch(
            "y length differs from matrix rows",
        ));
    }
    let started = Instant::now();
    let (m, n) = (matrix.rows(), matrix.cols());
    let s = s.min(n);
    let scores = squared_marginals(matrix, y);
    let support = top_k_by_magnitude(&scores.view(), s);
    let selected: Vec<usize> = if m < 6 {
        (0..m).collect()
    } else {
        let take = m.div_ceil(6);
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&i, &j| {
            y[j].partial_cmp(&y[i])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(i.cmp(&j))
        });
        let mut sel = order[..take].to_vec();
        sel.sort_unstable();
        sel
    };
    let minv = 1.0 / m as f64;
    let mut row_weights = Vec::with_capacity(selected.len());
    for &i in &selected {
        let row = matrix.row(i);
        let mut restricted_sq = 0.0;
        for &j in &support {
            restricted_sq += row[j] * row[j];
        }
        if restricted_sq > 0.0 {
            row_weights.push((i, y[i] * y[i] * minv / restricted_sq));
        }
    }
    let block = restricted_weighted_block(matrix, &row_weights, &support);
    let (xhat, degenerate) = restricted_power_direction(block, &support, n)?;
    let phi = (y.iter().map(|v| v * v).sum::<f64>() * minv).sqrt();
    Ok(InitResult::assemble(
        MethodTag::Sparta,
        xhat,
        phi,
        Some(support),
        degenerate,
        started,
    ))
}

/// Support selection rule for the ThWF-style initializer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThwfSelect {
    /// Keep the top-`s` marginals.
    Sparsity(usize),
    /// Diagonal thresholding: keep `j` with `M_j > (1 + alpha) * mean(y^2)`.
    Alpha(f64),
}

/// ThWF-style spectral initialization on squared amplitudes `z_i = y_i^2`:
/// diagonal-thresholding support estimate, power iteration on the restricted
/// block, scaled by `sqrt(mean z)`.
pub fn thwf_init(
    matrix: &Arc<SensingMatrix>,
    y: ArrayView1<f64>,
    select: ThwfSelect,
) -> Result<InitResult> {
    if y.len() != matrix.rows() {
        return Err(Error::dimension_mismatch(
            "y length differs from matrix rows",
        ));
    }
    let started = Instant::now();
    let (m, n) = (matrix.rows(), matrix.cols());
    let minv = 1.0 / m as f64;
    let scores = squared_marginals(matrix, y);
    let phi2 = y.iter().map(|v| v * v).sum::<f64>() * minv;
    let support = match select {
        ThwfSelect::Sparsity(s) => {
            if s == 0 {
                return Err(Error::invalid_argument("sparsity must be >= 1"));
            }
            top_k_by_magnitude(&scores.view(), s.min(n))
        }
        ThwfSelect::Alpha(alpha) => {
            if alpha.is_nan() || alpha <= 0.0 {
                return Err(Error::invalid_argument("alpha must be positive"));
            }
            let threshold = phi2 * (1.0 + alpha);
            let mut sel: Vec<usize> = (0..n).filter(|&j| scores[j] > threshold).collect();
            if sel.is_empty() {
                sel = top_k_by_magnitude(&scores.view(), 1);
            }
            sel
        }
    };
    let row_weights: Vec<(usize, f64)> = (0..m).map(|i| (i, y[i] * y[i] * minv)).collect();
    let block = restricted_weighted_block(matrix, &row_weights, &support);
    let (xhat, degenerate) = restricted_power_direction(block, &support, n)?;
    Ok(InitResult::assemble(
        MethodTag::Thwf,
        xhat,
        phi2.sqrt(),
        Some(support),
        degenerate,
        started,
    ))
}

/// Random initialization `x0 = lambda * g / ||g||_2` with `g ~ N(0, I_n)`.
pub fn random_init<R: Rng + ?Sized>(lambda: f64, n: usize, rng: &mut R) -> Result<InitResult> {
    if n == 0 {
        return Err(Error::invalid_argument("dimension must be >= 1"));
    }
    let started = Instant::now();
    let g = loop {
        let g = Array1::from_iter((0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
        if norm2(&g.view()) > 0.0 {
            break g;
        }
    };
    let xhat = &g / norm2(&g.view());
    Ok(InitResult::assemble(
        MethodTag::Random,
        xhat,
        lambda,
        None,
        false,
        started,
    ))
}

/// `lambda` for scaling externally provided directions, e.g. random
/// initialization in the harness.
pub fn lambda_for(y: ArrayView1<f64>) -> Result<f64> {
    Ok(estimate_norm(y)?.lambda())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{Component, TrialStreams};
    use crate::signals::{gen_sensing_matrix, gen_sparse_signal, measure, NoiseSpec, SparseSignal};
    use approx::assert_abs_diff_eq;

    fn trial(
        seed: u64,
        m: usize,
        n: usize,
        s: usize,
        sigma: f64,
    ) -> (Arc<SensingMatrix>, SparseSignal, Array1<f64>) {
        let streams = TrialStreams::new(seed);
        let matrix = Arc::new(gen_sensing_matrix(m, n, streams.matrix_seed()).unwrap());
        let x = gen_sparse_signal(n, s, &mut streams.component(Component::Signal)).unwrap();
        let noise = NoiseSpec::new(sigma).unwrap();
        let meas = measure(
            &matrix,
            &x,
            &noise,
            &mut streams.component(Component::Noise),
        )
        .unwrap();
        (matrix, x, meas.amplitudes().to_owned())
    }

    fn error_to(signal: &SparseSignal, est: &Array1<f64>) -> f64 {
        let x = signal.values();
        let d1 = (&x - est).mapv(|v| v * v).sum().sqrt();
        let d2 = (&x + est).mapv(|v| v * v).sum().sqrt();
        d1.min(d2) / signal.norm()
    }

    #[test]
    fn pri_spca_aligns_with_signal_when_oversampled() {
        // Full-support setting: alignment improves with sample size.
        let n = 25;
        let cfg = SpcaConfig::new(n);
        let (matrix_lo, x_lo, y_lo) = trial(100, 150, n, n, 0.0);
        let err_lo = {
            let r = pri_spca(
                &matrix_lo,
                y_lo.view(),
                &TruncationBand::default_band(),
                &cfg,
            )
            .unwrap();
            error_to(&x_lo, &r.xhat.mapv(|v| v * x_lo.norm()))
        };
        let (matrix_hi, x_hi, y_hi) = trial(100, 3000, n, n, 0.0);
        let err_hi = {
            let r = pri_spca(
                &matrix_hi,
                y_hi.view(),
                &TruncationBand::default_band(),
                &cfg,
            )
            .unwrap();
            error_to(&x_hi, &r.xhat.mapv(|v| v * x_hi.norm()))
        };
        assert!(err_hi < 0.3, "error at m = 3000 is {err_hi}");
        assert!(err_hi < err_lo, "no improvement: {err_lo} -> {err_hi}");
    }

    #[test]
    fn initializers_are_sign_invariant() {
        let n = 40;
        let s = 4;
        let streams = TrialStreams::new(9);
        let matrix = Arc::new(gen_sensing_matrix(120, n, streams.matrix_seed()).unwrap());
        let x = gen_sparse_signal(n, s, &mut streams.component(Component::Signal)).unwrap();
        let noise = NoiseSpec::new(0.1).unwrap();
        let y_pos = measure(
            &matrix,
            &x,
            &noise,
            &mut streams.component(Component::Noise),
        )
        .unwrap();
        let y_neg = measure(
            &matrix,
            &x.negated(),
            &noise,
            &mut streams.component(Component::Noise),
        )
        .unwrap();
        assert_eq!(y_pos.amplitudes().to_vec(), y_neg.amplitudes().to_vec());
        let cfg = SpcaConfig::new(s);
        let band = TruncationBand::default_band();
        let pairs: Vec<(Array1<f64>, Array1<f64>)> = vec![
            (
                pri_spca(&matrix, y_pos.amplitudes(), &band, &cfg)
                    .unwrap()
                    .x0,
                pri_spca(&matrix, y_neg.amplitudes(), &band, &cfg)
                    .unwrap()
                    .x0,
            ),
            (
                pri_spca_nt(&matrix, y_pos.amplitudes(), &cfg).unwrap().x0,
                pri_spca_nt(&matrix, y_neg.amplitudes(), &cfg).unwrap().x0,
            ),
            (
                copram_init(&matrix, y_pos.amplitudes(), s).unwrap().x0,
                copram_init(&matrix, y_neg.amplitudes(), s).unwrap().x0,
            ),
            (
                sparta_init(&matrix, y_pos.amplitudes(), s).unwrap().x0,
                sparta_init(&matrix, y_neg.amplitudes(), s).unwrap().x0,
            ),
            (
                thwf_init(&matrix, y_pos.amplitudes(), ThwfSelect::Alpha(0.1))
                    .unwrap()
                    .x0,
                thwf_init(&matrix, y_neg.amplitudes(), ThwfSelect::Alpha(0.1))
                    .unwrap()
                    .x0,
            ),
        ];
        for (a, b) in pairs {
            assert_eq!(a.to_vec(), b.to_vec());
        }
    }

    #[test]
    fn copram_recovers_singleton_support() {
        // Fourth-moment oracle: E[M_1] = 3, E[M_j] = 1; separation is tens of
        // standard deviations at this sample size.
        let mut hits = 0;
        let trials = 50;
        for t in 0..trials {
            let streams = TrialStreams::new(2000 + t);
            let matrix = Arc::new(gen_sensing_matrix(2000, 6, streams.matrix_seed()).unwrap());
            let x =
                SparseSignal::from_parts(ndarray::array![1.0, 0.0, 0.0, 0.0, 0.0, 0.0], vec![0])
                    .unwrap();
            let meas = measure(
                &matrix,
                &x,
                &NoiseSpec::noiseless(),
                &mut streams.component(Component::Noise),
            )
            .unwrap();
            let r = copram_init(&matrix, meas.amplitudes(), 1).unwrap();
            if r.support_estimate.as_deref() == Some(&[0][..]) {
                hits += 1;
            }
        }
        assert!(
            hits as f64 / trials as f64 >= 0.99,
            "support hit rate {hits}/{trials}"
        );
    }

    #[test]
    fn thwf_recovers_singleton_support() {
        // At m = 1e5 the null marginals sit ~11 sigma below the threshold.
        let mut hits = 0;
        let trials = 20;
        for t in 0..trials {
            let streams = TrialStreams::new(3000 + t);
            let matrix = Arc::new(gen_sensing_matrix(100_000, 6, streams.matrix_seed()).unwrap());
            let x =
                SparseSignal::from_parts(ndarray::array![1.0, 0.0, 0.0, 0.0, 0.0, 0.0], vec![0])
                    .unwrap();
            let meas = measure(
                &matrix,
                &x,
                &NoiseSpec::noiseless(),
                &mut streams.component(Component::Noise),
            )
            .unwrap();
            let r = thwf_init(&matrix, meas.amplitudes(), ThwfSelect::Alpha(0.1)).unwrap();
            if r.support_estimate.as_deref() == Some(&[0][..]) {
                hits += 1;
            }
        }
        assert!(
            hits as f64 / trials as f64 >= 0.99,
            "support hit rate {hits}/{trials}"
        );
    }

    #[test]
    fn nt_variant_matches_wide_band_pipeline() {
        // With (l, u) -> (0+, inf) every noiseless measurement stays in the
        // band, so the truncated pipeline reproduces the non-truncated one.
        let (matrix, _, y) = trial(11, 120, 30, 4, 0.0);
        let cfg = SpcaConfig::new(4);
        let wide = TruncationBand::new(1e-12, 1e12).unwrap();
        let a = pri_spca(&matrix, y.view(), &wide, &cfg).unwrap();
        let b = pri_spca_nt(&matrix, y.view(), &cfg).unwrap();
        let diff = (&a.xhat - &b.xhat)
            .mapv(f64::abs)
            .sum()
            .min((&a.xhat + &b.xhat).mapv(f64::abs).sum());
        assert!(diff <= 1e-8, "pipelines diverged by {diff}");
        assert_eq!(a.lambda_used, b.lambda_used);
    }

    #[test]
    fn sparta_error_is_bounded_and_behind_pri_spca() {
        // Paired trials at a moderate scale: the sparta error stays in [0, 2]
        // and its mean trails the truncated sparse-PCA initializer.
        let trials = 12;
        let mut pri_sum = 0.0;
        let mut sparta_sum = 0.0;
        for t in 0..trials {
            let (matrix, x, y) = trial(7000 + t, 900, 400, 10, 0.0);
            let cfg = SpcaConfig::new(10);
            let pri = pri_spca(&matrix, y.view(), &TruncationBand::default_band(), &cfg).unwrap();
            let sp = sparta_init(&matrix, y.view(), 10).unwrap();
            let pri_err = error_to(&x, &pri.x0);
            let sp_err = error_to(&x, &sp.x0);
            assert!(
                (0.0..=2.0).contains(&sp_err),
                "sparta error {sp_err} out of range"
            );
            pri_sum += pri_err;
            sparta_sum += sp_err;
        }
        assert!(
            pri_sum < sparta_sum,
            "expected pri-spca mean {} below sparta mean {}",
            pri_sum / trials as f64,
            sparta_sum / trials as f64
        );
    }

    #[test]
    fn copram_full_sparsity_is_plain_spectral() {
        let (matrix, _, y) = trial(5, 100, 8, 3, 0.0);
        let r = copram_init(&matrix, y.view(), 8).unwrap();
        assert_eq!(
            r.support_estimate.as_deref(),
            Some(&[0, 1, 2, 3, 4, 5, 6, 7][..])
        );
    }

    #[test]
    fn sparta_selection_size_uses_ceiling() {
        let (matrix, _, y) = trial(6, 6, 5, 2, 0.0);
        let r = sparta_init(&matrix, y.view(), 2).unwrap();
        assert!(!r.degenerate);
        // ceil(6/6) = 1: the block uses exactly the largest measurement; the
        // result is a unit vector supported on the estimated support.
        assert_eq!(r.support_estimate.as_ref().unwrap().len(), 2);
        assert_abs_diff_eq!(norm2(&r.xhat.view()), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn scaled_outputs_have_expected_norm() {
        let (matrix, _, y) = trial(7, 200, 30, 5, 0.0);
        let cfg = SpcaConfig::new(5);
        for r in [
            pri_spca(&matrix, y.view(), &TruncationBand::default_band(), &cfg).unwrap(),
            pri_spca_nt(&matrix, y.view(), &cfg).unwrap(),
            copram_init(&matrix, y.view(), 5).unwrap(),
            sparta_init(&matrix, y.view(), 5).unwrap(),
            thwf_init(&matrix, y.view(), ThwfSelect::Sparsity(5)).unwrap(),
        ] {
            assert_abs_diff_eq!(
                norm2(&r.x0.view()),
                r.lambda_used,
                epsilon = 1e-10 * r.lambda_used.max(1.0)
            );
            let nnz = r.xhat.iter().filter(|v| **v != 0.0).count();
            assert!(nnz <= 5 || matches!(r.method, MethodTag::Thwf));
        }
    }

    #[test]
    fn random_init_norm_and_determinism() {
        let mut rng1 = TrialStreams::new(1).component(Component::Init);
        let mut rng2 = TrialStreams::new(1).component(Component::Init);
        let a = random_init(2.5, 100, &mut rng1).unwrap();
        let b = random_init(2.5, 100, &mut rng2).unwrap();
        assert_eq!(a.x0.to_vec(), b.x0.to_vec());
        assert_abs_diff_eq!(norm2(&a.x0.view()), 2.5, epsilon = 1e-12);
    }

    #[test]
    fn random_init_squared_error_near_two() {
        // Against a unit signal with lambda = 1, the expected squared
        // relative error is 2 - 2 E|<xbar, g/||g||>| ~ 1.95 at n = 1000.
        let n = 1000;
        let streams = TrialStreams::new(55);
        let x = gen_sparse_signal(n, 10, &mut streams.component(Component::Signal)).unwrap();
        let xbar = x.normalized();
        let mut rng = streams.component(Component::Init);
        let trials = 200;
        let mut acc = 0.0;
        for _ in 0..trials {
            let r = random_init(1.0, n, &mut rng).unwrap();
            let d1 = (&xbar - &r.x0).mapv(|v| v * v).sum();
            let d2 = (&xbar + &r.x0).mapv(|v| v * v).sum();
            acc += d1.min(d2);
        }
        let mean = acc / trials as f64;
        assert!(
            (mean - 2.0).abs() <= 0.1,
            "mean squared relative error {mean}"
        );
    }
}
