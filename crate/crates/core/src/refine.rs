//! CoPRAM-style refinement: alternate between the measurement phases
//! `p = sign(A x)` and an s-sparse least-squares solve of `p o y ~ A x`
//! by CoSaMP, warm-started at the previous iterate.

use std::time::Instant;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};
use crate::linalg::{least_squares, norm2, top_k_by_magnitude};
use crate::signals::SensingMatrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefinementConfig {
    /// Outer alternating iterations `T`.
    pub outer_iters: usize,
    /// Sparsity budget.
    pub s: usize,
    /// CoSaMP iterations per outer step.
    pub inner_iters: usize,
    /// CoSaMP residual tolerance.
    pub inner_tol: f64,
}

impl RefinementConfig {
    pub fn new(s: usize) -> Self {
        RefinementConfig {
            outer_iters: 100,
            s,
            inner_iters: 25,
            inner_tol: 1e-6,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.outer_iters == 0 || self.s == 0 {
            return Err(Error::InvalidConfiguration(
                "refinement requires T >= 1 and s >= 1".into(),
            ));
        }
        if self.inner_iters == 0 || self.inner_tol.is_nan() || self.inner_tol < 0.0 {
            return Err(Error::InvalidConfiguration(
                "invalid CoSaMP settings".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct RefineOutcome {
    pub x: Array1<f64>,
    pub iters_used: usize,
    pub degenerate: bool,
    /// Fixed-phase residual (before, after) the sparse solve at each outer
    /// step; in the noiseless regime `after <= before` up to the CoSaMP
    /// tolerance.
    pub residual_trace: Vec<(f64, f64)>,
}

fn prune_to_top_k(v: &ArrayView1<f64>, k: usize) -> Array1<f64> {
    let keep = top_k_by_magnitude(v, k);
    let mut out = Array1::<f64>::zeros(v.len());
    for &j in &keep {
        out[j] = v[j];
    }
    out
}

/// `A x` for sparse `x`, touching only the nonzero columns.
fn sparse_matvec(a: &ArrayView2<f64>, x: &ArrayView1<f64>) -> Array1<f64> {
    let nnz: Vec<usize> = x
        .iter()
        .enumerate()
        .filter_map(|(j, &v)| (v != 0.0).then_some(j))
        .collect();
    if nnz.len() * 4 > a.ncols() {
        return a.dot(x);
    }
    let mut out = Array1::<f64>::zeros(a.nrows());
    for &j in &nnz {
        out.scaled_add(x[j], &a.column(j));
    }
    out
}

fn gather_columns(a: &ArrayView2<f64>, cols: &[usize]) -> Array2<f64> {
    let mut sub = Array2::<f64>::zeros((a.nrows(), cols.len()));
    for (c, &j) in cols.iter().enumerate() {
        sub.column_mut(c).assign(&a.column(j));
    }
    sub
}

/// Classic CoSaMP for `min ||b - A x||_2` over `s`-sparse `x`.
///
/// Each iteration merges the top-`2s` proxy coordinates with the current
/// support, solves least squares on the merged support, prunes to the top
/// `s`, and recomputes the residual; it stops on the residual tolerance,
/// the iteration cap, or an exact fixed point.
pub fn cosamp(
    a: &ArrayView2<f64>,
    b: &ArrayView1<f64>,
    s: usize,
    inner_iters: usize,
    tol: f64,
    warm_start: Option<&ArrayView1<f64>>,
) -> Result<Array1<f64>> {
    let (m, n) = (a.nrows(), a.ncols());
    if b.len() != m {
        return Err(Error::dimension_mismatch(format!(
            "matrix has {m} rows, rhs has {}",
            b.len()
        )));
    }
    if s == 0 || s > m {
        return Err(Error::invalid_argument(format!(
            "sparsity {s} must satisfy 1 <= s <= m = {m}"
        )));
    }
    let s = s.min(n);
    let mut x = match warm_start {
        Some(w) if w.len() == n => prune_to_top_k(w, s),
        Some(_) => return Err(Error::dimension_mismatch("warm start has wrong dimension")),
        None => Array1::zeros(n),
    };
    let mut residual = b - &sparse_matvec(a, &x.view());
    for _ in 0..inner_iters {
        if norm2(&residual.view()) <= tol {
            break;
        }
        let proxy = a.t().dot(&residual);
        let mut merged = top_k_by_magnitude(&proxy.view(), (2 * s).min(n));
        merged.extend(
            x.iter()
                .enumerate()
                .filter_map(|(j, &v)| (v != 0.0).then_some(j)),
        );
        merged.sort_unstable();
        merged.dedup();
        let sub = gather_columns(a, &merged);
        let (u, rank_deficient) = least_squares(&sub.view(), b)?;
        if rank_deficient {
            log::debug!(
                "cosamp: rank-deficient merged support of size {}, using minimum-norm solution",
                merged.len()
            );
        }
        let mut candidate = Array1::<f64>::zeros(n);
        for (idx, &j) in merged.iter().enumerate() {
            candidate[j] = u[idx];
        }
        let next = prune_to_top_k(&candidate.view(), s);
        let unchanged = next == x;
        x = next;
        residual = b - &sparse_matvec(a, &x.view());
        if unchanged {
            // Deterministic fixed point: further iterations repeat exactly.
            break;
        }
    }
    Ok(x)
}

/// Runs the alternating refinement, invoking `observe(iter, x, elapsed_secs)`
/// after each outer step; the observer returns `true` to stop early (used by
/// the time-budget experiment).
pub fn copram_refine_observed<F>(
    matrix: &SensingMatrix,
    y: ArrayView1<f64>,
    x0: ArrayView1<f64>,
    cfg: &RefinementConfig,
    mut observe: F,
) -> Result<RefineOutcome>
where
    F: FnMut(usize, &Array1<f64>, f64) -> bool,
{
    cfg.validate()?;
    let a = matrix.entries();
    let (m, n) = (a.nrows(), a.ncols());
    if y.len() != m || x0.len() != n {
        return Err(Error::dimension_mismatch(
            "refinement inputs disagree with the sensing matrix",
        ));
    }
    if x0.iter().any(|v| !v.is_finite()) || x0.iter().all(|v| *v == 0.0) {
        return Err(Error::invalid_argument(
            "initial vector must be finite and nonzero",
        ));
    }
    let started = Instant::now();
    let mut x = x0.to_owned();
    let mut iters_used = 0;
    let mut degenerate = false;
    let mut trace = Vec::new();
    for t in 1..=cfg.outer_iters {
        iters_used = t;
        let ax = sparse_matvec(&a, &x.view());
        if norm2(&ax.view()) == 0.0 {
            degenerate = true;
            break;
        }
        // sign(0) := +1 for determinism.
        let target = Array1::from_iter(
            ax.iter()
                .zip(y.iter())
                .map(|(&p, &yi)| if p < 0.0 { -yi } else { yi }),
        );
        let before = norm2(&(&target - &ax).view());
        let next = cosamp(
            &a,
            &target.view(),
            cfg.s,
            cfg.inner_iters,
            cfg.inner_tol,
            Some(&x.view()),
        )?;
        let ax_next = sparse_matvec(&a, &next.view());
        let after = norm2(&(&target - &ax_next).view());
        trace.push((before, after));
        let fixed_point = next == x;
        x = next;
        if observe(t, &x, started.elapsed().as_secs_f64()) {
            break;
        }
        if fixed_point {
            break;
        }
    }
    Ok(RefineOutcome {
        x,
        iters_used,
        degenerate,
        residual_trace: trace,
    })
}

/// `T` rounds of phase/sparse-solve alternation starting at `x0`.
pub fn copram_refine(
    matrix: &SensingMatrix,
    y: ArrayView1<f64>,
    x0: ArrayView1<f64>,
    cfg: &RefinementConfig,
) -> Result<RefineOutcome> {
    copram_refine_observed(matrix, y, x0, cfg, |_, _, _| false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::init::pri_spca;
    use crate::rng::{Component, TrialStreams};
    use crate::signals::{gen_sensing_matrix, gen_sparse_signal, measure, NoiseSpec, SparseSignal};
    use crate::spca::SpcaConfig;
    use crate::spectral::TruncationBand;
    use std::sync::Arc;

    fn trial(
        seed: u64,
        m: usize,
        n: usize,
        s: usize,
    ) -> (Arc<SensingMatrix>, SparseSignal, Array1<f64>) {
        let streams = TrialStreams::new(seed);
        let matrix = Arc::new(gen_sensing_matrix(m, n, streams.matrix_seed()).unwrap());
        let x = gen_sparse_signal(n, s, &mut streams.component(Component::Signal)).unwrap();
        let meas = measure(
            &matrix,
            &x,
            &NoiseSpec::noiseless(),
            &mut streams.component(Component::Noise),
        )
        .unwrap();
        (matrix, x, meas.amplitudes().to_owned())
    }

    fn rel_error(x: &SparseSignal, est: &Array1<f64>) -> f64 {
        let v = x.values();
        let d1 = (&v - est).mapv(|t| t * t).sum().sqrt();
        let d2 = (&v + est).mapv(|t| t * t).sum().sqrt();
        d1.min(d2) / x.norm()
    }

    #[test]
    fn cosamp_recovers_exactly_sparse_signal() {
        let (matrix, x, _) = trial(1, 120, 100, 4);
        let b = matrix.entries().dot(&x.values());
        let rec = cosamp(&matrix.entries(), &b.view(), 4, 25, 1e-9, None).unwrap();
        // Exact-recovery oracle: direct least squares on the true support.
        let sub = gather_columns(&matrix.entries(), x.support());
        let (u, _) = least_squares(&sub.view(), &b.view()).unwrap();
        let mut oracle = Array1::<f64>::zeros(100);
        for (idx, &j) in x.support().iter().enumerate() {
            oracle[j] = u[idx];
        }
        let diff = norm2(&(&rec - &oracle).view());
        assert!(diff <= 1e-6, "distance to oracle {diff}");
        assert!(norm2(&(&rec - &x.values()).view()) <= 1e-6);
    }

    #[test]
    fn cosamp_with_s_equal_n_is_least_squares() {
        let (matrix, _, _) = trial(2, 30, 8, 3);
        let mut rng = TrialStreams::new(2).component(Component::Init);
        use rand::Rng;
        use rand_distr::StandardNormal;
        let b = Array1::from_iter((0..30).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let rec = cosamp(&matrix.entries(), &b.view(), 8, 40, 1e-12, None).unwrap();
        let (ls, _) = least_squares(&matrix.entries(), &b.view()).unwrap();
        assert!(norm2(&(&rec - &ls).view()) <= 1e-8);
    }

    #[test]
    fn cosamp_zero_rhs_gives_zero() {
        let (matrix, x, _) = trial(3, 40, 20, 3);
        let b = Array1::<f64>::zeros(40);
        // Even from a nonzero warm start the solver lands on zero.
        let rec = cosamp(
            &matrix.entries(),
            &b.view(),
            3,
            10,
            1e-12,
            Some(&x.values()),
        )
        .unwrap();
        assert!(rec.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn cosamp_rejects_oversized_sparsity() {
        let (matrix, _, _) = trial(4, 10, 20, 2);
        let b = Array1::<f64>::zeros(10);
        assert!(cosamp(&matrix.entries(), &b.view(), 11, 5, 1e-9, None).is_err());
    }

    #[test]
    fn refine_from_truth_is_a_fixed_point() {
        let (matrix, x, y) = trial(5, 150, 60, 5);
        let cfg = RefinementConfig::new(5);
        let out = copram_refine(&matrix, y.view(), x.values(), &cfg).unwrap();
        assert!(!out.degenerate);
        assert!(rel_error(&x, &out.x) <= 1e-6);
        // Exact fixed point detected immediately.
        assert_eq!(out.iters_used, 1);
    }

    #[test]
    fn refine_respects_global_sign_pair() {
        let (matrix, x, y) = trial(6, 150, 60, 5);
        let cfg = RefinementConfig::new(5);
        let neg = x.values().mapv(|v| -v);
        let out = copram_refine(&matrix, y.view(), neg.view(), &cfg).unwrap();
        assert!(rel_error(&x, &out.x) <= 1e-6);
        // Sign-pair symmetry: starting points x0 and -x0 give flipped outputs.
        let x0 = {
            let mut v = x.values().to_owned();
            v[x.support()[0]] *= 1.5;
            v
        };
        let a = copram_refine(&matrix, y.view(), x0.view(), &cfg).unwrap();
        let b = copram_refine(&matrix, y.view(), x0.mapv(|v| -v).view(), &cfg).unwrap();
        let flipped = b.x.mapv(|v| -v);
        assert_eq!(a.x.to_vec(), flipped.to_vec());
    }

    #[test]
    fn refined_iterates_are_sparse_and_residuals_monotone() {
        let (matrix, x, y) = trial(7, 200, 80, 6);
        let cfg = RefinementConfig::new(6);
        let x0 = pri_spca(
            &matrix,
            y.view(),
            &TruncationBand::default_band(),
            &SpcaConfig::new(6),
        )
        .unwrap()
        .x0;
        let out = copram_refine(&matrix, y.view(), x0.view(), &cfg).unwrap();
        let nnz = out.x.iter().filter(|v| **v != 0.0).count();
        assert!(nnz <= 6);
        for (before, after) in &out.residual_trace {
            assert!(
                after <= &(before + 1e-6),
                "residual grew: {before} -> {after}"
            );
        }
        assert!(
            rel_error(&x, &out.x) <= 1e-6,
            "error {}",
            rel_error(&x, &out.x)
        );
    }

    #[test]
    fn refinement_improves_spectral_initialization() {
        let mut successes = 0;
        let trials = 10;
        for t in 0..trials {
            let (matrix, x, y) = trial(100 + t, 150, 200, 5);
            let x0 = pri_spca(
                &matrix,
                y.view(),
                &TruncationBand::default_band(),
                &SpcaConfig::new(5),
            )
            .unwrap()
            .x0;
            let cfg = RefinementConfig::new(5);
            let out = copram_refine(&matrix, y.view(), x0.view(), &cfg).unwrap();
            if rel_error(&x, &out.x) < 0.01 {
                successes += 1;
            }
        }
        assert!(
            successes > trials / 2,
            "only {successes}/{trials} refinements succeeded"
        );
    }

    #[test]
    fn observer_can_stop_early() {
        let (matrix, _, y) = trial(8, 100, 50, 4);
        let mut x0 = Array1::<f64>::zeros(50);
        x0[0] = 1.0;
        x0[7] = -0.5;
        let cfg = RefinementConfig::new(4);
        let out =
            copram_refine_observed(&matrix, y.view(), x0.view(), &cfg, |t, _, _| t >= 3).unwrap();
        assert!(out.iters_used <= 3);
    }
}
