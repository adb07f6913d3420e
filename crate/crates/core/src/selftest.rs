//! Always-on property suites behind the `selftest` CLI subcommand, plus the
//! exhaustive sparse-PCA oracle they rely on.
//!
//! Each check returns a pass/fail report; the suite is deliberately
//! independent of the code paths it validates (the oracle goes through the
//! Jacobi eigensolver, not the iterative solvers).

use std::sync::Arc;

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::harness::{
    records_equal_modulo_timing, records_from_csv, records_to_csv, run_experiment,
    ExperimentConfig, ExperimentKind,
};
use crate::init::{
    copram_init, lambda_for, pri_spca, pri_spca_nt, random_init, sparta_init, thwf_init, ThwfSelect,
};
use crate::linalg::{jacobi_eigh, norm2};
use crate::rng::{Component, TrialStreams};
use crate::signals::{gen_sensing_matrix, gen_sparse_signal, measure, NoiseSpec};
use crate::spca::{solve_spca, start_vector, DenseSymOperator, SpcaConfig, SpcaSolver};
use crate::spectral::{
    build_truncated_operator, build_untruncated_operator, OperatorRepresentation, TruncationBand,
};

#[derive(Debug, Clone)]
pub struct CheckReport {
    pub name: &'static str,
    pub passed: bool,
    pub details: String,
}

impl CheckReport {
    fn ok(name: &'static str, details: String) -> Self {
        CheckReport {
            name,
            passed: true,
            details,
        }
    }

    fn fail(name: &'static str, details: String) -> Self {
        CheckReport {
            name,
            passed: false,
            details,
        }
    }
}

/// Maximum of `w^T M w` over unit `s`-sparse `w`, by scanning every size-`s`
/// support and taking the top eigenvalue of its principal submatrix.
pub fn exhaustive_sparse_pca(matrix: &ndarray::ArrayView2<f64>, s: usize) -> (Vec<usize>, f64) {
    let n = matrix.nrows();
    assert!(s >= 1 && s <= n);
    let mut best_support = Vec::new();
    let mut best_obj = f64::NEG_INFINITY;
    let mut support: Vec<usize> = (0..s).collect();
    loop {
        let mut sub = Array2::<f64>::zeros((s, s));
        for (r, &i) in support.iter().enumerate() {
            for (c, &j) in support.iter().enumerate() {
                sub[(r, c)] = matrix[(i, j)];
            }
        }
        let (vals, _) = jacobi_eigh(&sub.view());
        if vals[0] > best_obj {
            best_obj = vals[0];
            best_support = support.clone();
        }
        // Next lexicographic combination.
        let mut i = s;
        loop {
            if i == 0 {
                return (best_support, best_obj);
            }
            i -= 1;
            if support[i] != i + n - s {
                break;
            }
        }
        support[i] += 1;
        for j in i + 1..s {
            support[j] = support[j - 1] + 1;
        }
    }
}

fn random_gaussian_matrix(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    let mut rng = TrialStreams::new(seed).component(Component::Init);
    Array2::from_shape_fn((rows, cols), |_| rng.sample::<f64, _>(StandardNormal))
}

fn check_sign_invariance() -> CheckReport {
    const NAME: &str = "sign-invariance";
    let streams = TrialStreams::new(101);
    let n = 50;
    let s = 4;
    let matrix = match gen_sensing_matrix(140, n, streams.matrix_seed()) {
        Ok(m) => Arc::new(m),
        Err(e) => return CheckReport::fail(NAME, e.to_string()),
    };
    let x = gen_sparse_signal(n, s, &mut streams.component(Component::Signal)).unwrap();
    let noise = NoiseSpec::new(0.1).unwrap();
    let pos = measure(
        &matrix,
        &x,
        &noise,
        &mut streams.component(Component::Noise),
    )
    .unwrap();
    let neg = measure(
        &matrix,
        &x.negated(),
        &noise,
        &mut streams.component(Component::Noise),
    )
    .unwrap();
    if pos.amplitudes().to_vec() != neg.amplitudes().to_vec() {
        return CheckReport::fail(NAME, "measurements changed under the sign flip".into());
    }
    let cfg = SpcaConfig::new(s);
    let band = TruncationBand::default_band();
    let lambda = lambda_for(pos.amplitudes()).unwrap();
    let outputs = |y: ndarray::ArrayView1<f64>, seed: u64| -> Vec<Array1<f64>> {
        vec![
            pri_spca(&matrix, y, &band, &cfg).unwrap().x0,
            pri_spca_nt(&matrix, y, &cfg).unwrap().x0,
            copram_init(&matrix, y, s).unwrap().x0,
            sparta_init(&matrix, y, s).unwrap().x0,
            thwf_init(&matrix, y, ThwfSelect::Sparsity(s)).unwrap().x0,
            random_init(
                lambda,
                n,
                &mut TrialStreams::new(seed).component(Component::Init),
            )
            .unwrap()
            .x0,
        ]
    };
    let a = outputs(pos.amplitudes(), 7);
    let b = outputs(neg.amplitudes(), 7);
    for (i, (va, vb)) in a.iter().zip(b.iter()).enumerate() {
        if va.to_vec() != vb.to_vec() {
            return CheckReport::fail(
                NAME,
                format!("initializer #{i} changed under the sign flip"),
            );
        }
    }
    CheckReport::ok(
        NAME,
        "measurements and all six initializers bit-identical under x -> -x".into(),
    )
}

fn check_operator_psd_symmetry() -> CheckReport {
    const NAME: &str = "operator-psd-symmetry";
    for seed in 0..10u64 {
        let streams = TrialStreams::new(200 + seed);
        let matrix = Arc::new(gen_sensing_matrix(60, 9, streams.matrix_seed()).unwrap());
        let x = gen_sparse_signal(9, 3, &mut streams.component(Component::Signal)).unwrap();
        let meas = measure(
            &matrix,
            &x,
            &NoiseSpec::new(0.2).unwrap(),
            &mut streams.component(Component::Noise),
        )
        .unwrap();
        let op = build_truncated_operator(
            &matrix,
            meas.amplitudes(),
            &TruncationBand::default_band(),
            OperatorRepresentation::Dense,
        )
        .unwrap();
        let mut rng = streams.component(Component::Init);
        for _ in 0..6 {
            let w = Array1::from_iter((0..9).map(|_| rng.sample::<f64, _>(StandardNormal)));
            let v = Array1::from_iter((0..9).map(|_| rng.sample::<f64, _>(StandardNormal)));
            let vw = op.apply(w.view()).unwrap();
            let vv = op.apply(v.view()).unwrap();
            let lhs = vw.dot(&v);
            let rhs = vv.dot(&w);
            if (lhs - rhs).abs() > 1e-10 * lhs.abs().max(rhs.abs()).max(1e-300) {
                return CheckReport::fail(NAME, format!("symmetry violated: {lhs} vs {rhs}"));
            }
            let qf = op.quadratic_form(w.view()).unwrap();
            if qf < -1e-10 * w.dot(&w) {
                return CheckReport::fail(NAME, format!("negative quadratic form {qf}"));
            }
        }
    }
    CheckReport::ok(
        NAME,
        "symmetry within 1e-10 and nonnegative quadratic forms on 10 noisy instances".into(),
    )
}

fn check_dense_matrix_free_agreement() -> CheckReport {
    const NAME: &str = "dense-vs-matrix-free";
    let mut worst = 0.0f64;
    for seed in 0..6u64 {
        let streams = TrialStreams::new(300 + seed);
        let matrix = Arc::new(gen_sensing_matrix(80, 12, streams.matrix_seed()).unwrap());
        let x = gen_sparse_signal(12, 4, &mut streams.component(Component::Signal)).unwrap();
        let meas = measure(
            &matrix,
            &x,
            &NoiseSpec::new(0.1).unwrap(),
            &mut streams.component(Component::Noise),
        )
        .unwrap();
        for untruncated in [false, true] {
            let (dense_op, mf_op) = if untruncated {
                (
                    build_untruncated_operator(
                        &matrix,
                        meas.amplitudes(),
                        OperatorRepresentation::Dense,
                    )
                    .unwrap(),
                    build_untruncated_operator(
                        &matrix,
                        meas.amplitudes(),
                        OperatorRepresentation::MatrixFree,
                    )
                    .unwrap(),
                )
            } else {
                let band = TruncationBand::default_band();
                (
                    build_truncated_operator(
                        &matrix,
                        meas.amplitudes(),
                        &band,
                        OperatorRepresentation::Dense,
                    )
                    .unwrap(),
                    build_truncated_operator(
                        &matrix,
                        meas.amplitudes(),
                        &band,
                        OperatorRepresentation::MatrixFree,
                    )
                    .unwrap(),
                )
            };
            let mut rng = streams.component(Component::Init);
            for _ in 0..8 {
                let w = Array1::from_iter((0..12).map(|_| rng.sample::<f64, _>(StandardNormal)));
                let d = dense_op.apply(w.view()).unwrap();
                let f = mf_op.apply(w.view()).unwrap();
                let rel = norm2(&(&d - &f).view()) / norm2(&d.view()).max(1e-300);
                worst = worst.max(rel);
                if rel > 1e-8 {
                    return CheckReport::fail(
                        NAME,
                        format!("representations disagree: relative error {rel}"),
                    );
                }
            }
        }
    }
    CheckReport::ok(
        NAME,
        format!("worst relative disagreement {worst:.2e} (tolerance 1e-8)"),
    )
}

fn check_tpower_monotone() -> CheckReport {
    const NAME: &str = "tpower-monotone-objective";
    for seed in 0..15u64 {
        let b = random_gaussian_matrix(10, 10, 400 + seed);
        let psd = b.t().dot(&b);
        let op = DenseSymOperator::new(psd, true).unwrap();
        let mut cfg = SpcaConfig::new(3);
        cfg.solver = SpcaSolver::TPower;
        let (start, _) = start_vector(&op);
        let res = solve_spca(&op, &cfg, start.view()).unwrap();
        for pair in res.objective_trace.windows(2) {
            if pair[1] < pair[0] - 1e-10 * pair[0].abs().max(1.0) {
                return CheckReport::fail(
                    NAME,
                    format!("objective decreased: {} -> {}", pair[0], pair[1]),
                );
            }
        }
    }
    CheckReport::ok(
        NAME,
        "objective nondecreasing (1e-10 slack) on 15 PSD instances".into(),
    )
}

fn check_spca_feasibility() -> CheckReport {
    const NAME: &str = "spca-feasibility";
    for seed in 0..10u64 {
        let b = random_gaussian_matrix(11, 11, 500 + seed);
        let psd = b.t().dot(&b);
        let op = DenseSymOperator::new(psd, true).unwrap();
        for solver in [SpcaSolver::TPower, SpcaSolver::Grqi] {
            let mut cfg = SpcaConfig::new(4);
            cfg.solver = solver;
            let (start, _) = start_vector(&op);
            let res = solve_spca(&op, &cfg, start.view()).unwrap();
            let nrm = norm2(&res.direction.view());
            if (nrm - 1.0).abs() > 1e-10 {
                return CheckReport::fail(NAME, format!("direction norm {nrm}"));
            }
            let nnz = res.direction.iter().filter(|v| **v != 0.0).count();
            if nnz > 4 {
                return CheckReport::fail(NAME, format!("{nnz} nonzeros exceed the budget"));
            }
        }
    }
    CheckReport::ok(
        NAME,
        "unit norm within 1e-10 and sparsity within budget for both solvers".into(),
    )
}

fn check_exhaustive_oracle_gap() -> CheckReport {
    const NAME: &str = "spca-exhaustive-oracle";
    // Random PSD instances drawn the way the solvers meet them in practice:
    // truncated spectral operators of noiseless n = 8, s = 3, m = 300 trials.
    let mut results = Vec::new();
    for solver in [SpcaSolver::TPower, SpcaSolver::Grqi] {
        let mut hits = 0;
        for seed in 0..100u64 {
            let streams = TrialStreams::new(9000 + seed);
            let matrix = Arc::new(gen_sensing_matrix(300, 8, streams.matrix_seed()).unwrap());
            let x = gen_sparse_signal(8, 3, &mut streams.component(Component::Signal)).unwrap();
            let meas = measure(
                &matrix,
                &x,
                &NoiseSpec::noiseless(),
                &mut streams.component(Component::Noise),
            )
            .unwrap();
            let op = build_truncated_operator(
                &matrix,
                meas.amplitudes(),
                &TruncationBand::default_band(),
                OperatorRepresentation::Dense,
            )
            .unwrap();
            let dense = op.dense_matrix().unwrap();
            let (_, best) = exhaustive_sparse_pca(&dense.view(), 3);
            let mut cfg = SpcaConfig::new(3);
            cfg.solver = solver;
            let (start, _) = start_vector(&op);
            let res = solve_spca(&op, &cfg, start.view()).unwrap();
            if best - res.objective <= 1e-6 {
                hits += 1;
            }
        }
        results.push((solver, hits));
        if hits < 80 {
            return CheckReport::fail(
                NAME,
                format!("{solver:?} matched the oracle on only {hits}/100 instances"),
            );
        }
    }
    CheckReport::ok(
        NAME,
        format!(
            "oracle matches: tpower {}/100, grqi {}/100 (threshold 80)",
            results[0].1, results[1].1
        ),
    )
}

fn check_csv_round_trip() -> CheckReport {
    const NAME: &str = "csv-round-trip";
    let mut cfg = ExperimentConfig::defaults(ExperimentKind::VaryM);
    cfg.n = 40;
    cfg.m_grid = vec![60];
    cfg.s_grid = vec![3];
    cfg.trials = 2;
    cfg.master_seed = 77;
    match run_experiment(&cfg) {
        Ok(out) => {
            let text = records_to_csv(&out.records);
            match records_from_csv(&text) {
                Ok(parsed) if parsed == out.records => CheckReport::ok(
                    NAME,
                    format!("{} records round-tripped exactly", parsed.len()),
                ),
                Ok(_) => CheckReport::fail(NAME, "parsed records differ from the originals".into()),
                Err(e) => CheckReport::fail(NAME, e.to_string()),
            }
        }
        Err(e) => CheckReport::fail(NAME, e.to_string()),
    }
}

fn check_full_run_determinism() -> CheckReport {
    const NAME: &str = "full-run-determinism";
    let mut cfg = ExperimentConfig::defaults(ExperimentKind::VaryM);
    cfg.n = 50;
    cfg.m_grid = vec![70, 110];
    cfg.s_grid = vec![4];
    cfg.trials = 2;
    cfg.master_seed = 4242;
    let a = match run_experiment(&cfg) {
        Ok(o) => o,
        Err(e) => return CheckReport::fail(NAME, e.to_string()),
    };
    let b = run_experiment(&cfg).unwrap();
    if records_equal_modulo_timing(&a.records, &b.records) {
        CheckReport::ok(
            NAME,
            format!(
                "{} records identical modulo timing columns",
                a.records.len()
            ),
        )
    } else {
        CheckReport::fail(NAME, "reruns under the same master seed diverged".into())
    }
}

/// Runs every property suite and returns one report per check.
pub fn run_all() -> Vec<CheckReport> {
    vec![
        check_sign_invariance(),
        check_operator_psd_symmetry(),
        check_dense_matrix_free_agreement(),
        check_tpower_monotone(),
        check_spca_feasibility(),
        check_exhaustive_oracle_gap(),
        check_csv_round_trip(),
        check_full_run_determinism(),
    ]
}
