//! Experiment driver: seeded parameter sweeps over (m, s, sigma) grids,
//! paired trials across methods, CSV emission, and block summaries.
//!
//! Within one trial every method consumes the identical `(x, A, eta)`;
//! the `data_checksum` column makes that pairing auditable. Records are
//! produced in deterministic `(grid point, trial, method)` order regardless
//! of worker scheduling, so a rerun with the same master seed reproduces the
//! CSV bit-for-bit except for the timing columns.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayView1};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::generative::{
    brute_force_amplitude_min, build_latent_net, generative_spectral_init, make_linear_generator,
    sample_latent_annulus,
};
use crate::init::{
    copram_init, lambda_for, pri_spca, pri_spca_nt, random_init, sparta_init, thwf_init,
    InitResult, MethodTag, ThwfSelect,
};
use crate::refine::{copram_refine, copram_refine_observed, RefinementConfig};
use crate::rng::{stable_seed, Component, TrialStreams};
use crate::signals::{
    gen_sensing_matrix, gen_sparse_signal, measure, NoiseSpec, SensingMatrix, SparseSignal,
};
use crate::spca::{SpcaConfig, SpcaSolver};
use crate::spectral::TruncationBand;

/// Refined relative error below this threshold counts as a success.
pub const SUCCESS_THRESHOLD: f64 = 0.01;

/// ThWF diagonal-thresholding tuning parameter.
pub const THWF_ALPHA: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ExperimentKind {
    VaryM,
    VaryS,
    VarySigma,
    SuccessRate,
    TimeBudget,
    GenerativeToy,
}

impl ExperimentKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentKind::VaryM => "vary_m",
            ExperimentKind::VaryS => "vary_s",
            ExperimentKind::VarySigma => "vary_sigma",
            ExperimentKind::SuccessRate => "success_rate",
            ExperimentKind::TimeBudget => "time_budget",
            ExperimentKind::GenerativeToy => "generative_toy",
        }
    }
}

impl std::fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vary_m" => Ok(ExperimentKind::VaryM),
            "vary_s" => Ok(ExperimentKind::VaryS),
            "vary_sigma" => Ok(ExperimentKind::VarySigma),
            "success_rate" => Ok(ExperimentKind::SuccessRate),
            "time_budget" => Ok(ExperimentKind::TimeBudget),
            "generative_toy" => Ok(ExperimentKind::GenerativeToy),
            other => Err(Error::Parse(format!("unknown experiment kind '{other}'"))),
        }
    }
}

/// Settings for the generative toy experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenToyConfig {
    pub k: usize,
    pub output_dim: usize,
    pub latent_radius: f64,
    pub delta: f64,
    /// Latent samples are drawn from the annulus `[lo * r, r]` so signals
    /// stay bounded away from zero.
    pub annulus_lo: f64,
}

impl Default for GenToyConfig {
    fn default() -> Self {
        GenToyConfig {
            k: 2,
            output_dim: 20,
            latent_radius: 1.0,
            delta: 0.05,
            annulus_lo: 0.5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub n: usize,
    pub m_grid: Vec<usize>,
    pub s_grid: Vec<usize>,
    pub sigma_grid: Vec<f64>,
    pub methods: Vec<MethodTag>,
    pub refine: bool,
    pub refinement: RefinementConfig,
    /// Trials per repeat block.
    pub trials: usize,
    /// Repeat blocks used for error bars.
    pub repeats: usize,
    pub master_seed: u64,
    pub band: TruncationBand,
    pub solver: SpcaSolver,
    /// Budgets (seconds) for the time-budget experiment.
    pub budget_grid: Vec<f64>,
    pub gen: GenToyConfig,
    pub output_path: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Default settings for each experiment kind.
    pub fn defaults(kind: ExperimentKind) -> Self {
        let base = ExperimentConfig {
            kind,
            n: 1000,
            m_grid: vec![1000],
            s_grid: vec![10],
            sigma_grid: vec![0.0],
            methods: MethodTag::all_sparse_initializers().to_vec(),
            refine: false,
            refinement: RefinementConfig::new(10),
            trials: 50,
            repeats: 1,
            master_seed: 1,
            band: TruncationBand::default_band(),
            solver: SpcaSolver::Grqi,
            budget_grid: Vec::new(),
            gen: GenToyConfig::default(),
            output_path: None,
        };
        match kind {
            ExperimentKind::VaryM => ExperimentConfig {
                m_grid: (1..=30).map(|i| i * 100).collect(),
                s_grid: vec![10, 20],
                ..base
            },
            ExperimentKind::VaryS => ExperimentConfig {
                m_grid: vec![1000, 2000],
                s_grid: (1..=10).map(|i| i * 5).collect(),
                ..base
            },
            ExperimentKind::VarySigma => ExperimentConfig {
                m_grid: vec![3000],
                s_grid: vec![10, 20],
                sigma_grid: (1..=10).map(|i| i as f64 / 10.0).collect(),
                methods: vec![
                    MethodTag::PriSpca,
                    MethodTag::PriSpcaNt,
                    MethodTag::Sparta,
                    MethodTag::Copram,
                ],
                ..base
            },
            ExperimentKind::SuccessRate => ExperimentConfig {
                m_grid: (2..=20).map(|i| i * 50).collect(),
                s_grid: vec![10, 20],
                methods: vec![
                    MethodTag::PriSpca,
                    MethodTag::PriSpcaNt,
                    MethodTag::Thwf,
                    MethodTag::Sparta,
                    MethodTag::Copram,
                    MethodTag::Random,
                ],
                refine: true,
                repeats: 10,
                ..base
            },
            ExperimentKind::TimeBudget => ExperimentConfig {
                m_grid: vec![500],
                s_grid: vec![20],
                sigma_grid: vec![0.1, 0.2],
                methods: vec![
                    MethodTag::PriSpca,
                    MethodTag::PriSpcaNt,
                    MethodTag::Sparta,
                    MethodTag::Copram,
                    MethodTag::Random,
                ],
                refine: true,
                repeats: 10,
                budget_grid: (0..=20).map(|i| 0.1 + 0.02 * i as f64).collect(),
                ..base
            },
            ExperimentKind::GenerativeToy => ExperimentConfig {
                n: 20,
                m_grid: vec![200, 400],
                s_grid: vec![0],
                methods: vec![MethodTag::GenAmplitude, MethodTag::GenSpectral],
                ..base
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m_grid.is_empty() || self.s_grid.is_empty() || self.sigma_grid.is_empty() {
            return Err(Error::InvalidConfiguration(
                "parameter grids must be nonempty".into(),
            ));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidConfiguration(
                "method list must be nonempty".into(),
            ));
        }
        if self.trials == 0 || self.repeats == 0 {
            return Err(Error::InvalidConfiguration(
                "trials and repeats must be >= 1".into(),
            ));
        }
        if self.kind == ExperimentKind::TimeBudget && self.budget_grid.is_empty() {
            return Err(Error::InvalidConfiguration(
                "time-budget experiment needs a budget grid".into(),
            ));
        }
        if self.kind != ExperimentKind::GenerativeToy {
            if self.n == 0 {
                return Err(Error::InvalidConfiguration("dimension must be >= 1".into()));
            }
            for &s in &self.s_grid {
                if s == 0 || s > self.n {
                    return Err(Error::InvalidConfiguration(format!(
                        "sparsity {s} out of range for n = {}",
                        self.n
                    )));
                }
            }
            for &m in &self.m_grid {
                if m == 0 {
                    return Err(Error::InvalidConfiguration(
                        "sample sizes must be >= 1".into(),
                    ));
                }
            }
        }
        for &sigma in &self.sigma_grid {
            if sigma.is_nan() || sigma < 0.0 {
                return Err(Error::InvalidConfiguration(
                    "noise levels must be >= 0".into(),
                ));
            }
        }
        Ok(())
    }

    fn total_trials(&self) -> usize {
        self.trials * self.repeats
    }
}

/// One `(grid point, method, trial)` outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub kind: ExperimentKind,
    pub n: usize,
    pub m: usize,
    pub s: usize,
    pub sigma: f64,
    /// Set for the time-budget experiment only.
    pub budget: Option<f64>,
    pub method: MethodTag,
    pub trial_index: usize,
    pub seed: u64,
    pub relative_error: f64,
    /// Defined only when refinement ran: refined error below
    /// [`SUCCESS_THRESHOLD`].
    pub success: Option<bool>,
    pub init_time: f64,
    pub refine_time: Option<f64>,
    /// Checksum of `(x, A, y)` shared by all methods in the trial.
    pub data_checksum: u64,
}

/// `min(||x - est||, ||x + est||) / ||x||`.
pub fn relative_error(estimate: ArrayView1<f64>, truth: ArrayView1<f64>) -> Result<f64> {
    if estimate.len() != truth.len() {
        return Err(Error::dimension_mismatch(format!(
            "estimate has {} entries, truth has {}",
            estimate.len(),
            truth.len()
        )));
    }
    let norm: f64 = truth.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm <= 0.0 {
        return Err(Error::invalid_argument(
            "relative error is undefined for a zero signal",
        ));
    }
    let mut minus = 0.0;
    let mut plus = 0.0;
    for (&t, &e) in truth.iter().zip(estimate.iter()) {
        minus += (t - e) * (t - e);
        plus += (t + e) * (t + e);
    }
    Ok(minus.min(plus).sqrt() / norm)
}

fn checksum_f64s(seed: u64, values: impl Iterator<Item = f64>) -> u64 {
    let mut h = seed;
    for v in values {
        h = stable_seed(h, &[v.to_bits()]);
    }
    h
}

fn trial_checksum(x: ArrayView1<f64>, a: &SensingMatrix, y: ArrayView1<f64>) -> u64 {
    let h = checksum_f64s(0x6368_6563_6b73_756d, x.iter().copied());
    let h = checksum_f64s(h, a.entries().iter().copied());
    checksum_f64s(h, y.iter().copied())
}

struct TrialData {
    signal: SparseSignal,
    matrix: Arc<SensingMatrix>,
    y: Array1<f64>,
    checksum: u64,
    seed: u64,
}

fn prepare_trial(
    cfg: &ExperimentConfig,
    m: usize,
    s: usize,
    sigma: f64,
    trial_index: usize,
) -> Result<TrialData> {
    let seed = stable_seed(
        cfg.master_seed,
        &[
            cfg.kind as u64,
            m as u64,
            s as u64,
            sigma.to_bits(),
            trial_index as u64,
        ],
    );
    let streams = TrialStreams::new(seed);
    let signal = gen_sparse_signal(cfg.n, s, &mut streams.component(Component::Signal))?;
    let matrix = Arc::new(gen_sensing_matrix(m, cfg.n, streams.matrix_seed())?);
    let noise = NoiseSpec::new(sigma)?;
    let meas = measure(
        &matrix,
        &signal,
        &noise,
        &mut streams.component(Component::Noise),
    )?;
    let y = meas.amplitudes().to_owned();
    let checksum = trial_checksum(signal.values(), &matrix, y.view());
    Ok(TrialData {
        signal,
        matrix,
        y,
        checksum,
        seed,
    })
}

/// Runs one initializer; `Ok(None)` means the combination is skipped (e.g.
/// ThWF under noise, which uses quadratic data).
fn run_initializer(
    cfg: &ExperimentConfig,
    data: &TrialData,
    method: MethodTag,
    s: usize,
    sigma: f64,
) -> Result<Option<InitResult>> {
    let spca = SpcaConfig {
        s,
        ..SpcaConfig::new(s).with_solver(cfg.solver)
    };
    let y = data.y.view();
    let out = match method {
        MethodTag::PriSpca => Some(pri_spca(&data.matrix, y, &cfg.band, &spca)?),
        MethodTag::PriSpcaNt => Some(pri_spca_nt(&data.matrix, y, &spca)?),
        MethodTag::Thwf => {
            if sigma > 0.0 {
                log::debug!("skipping thwf in a noisy sweep (quadratic measurements)");
                None
            } else {
                Some(thwf_init(&data.matrix, y, ThwfSelect::Alpha(THWF_ALPHA))?)
            }
        }
        MethodTag::Sparta => Some(sparta_init(&data.matrix, y, s)?),
        MethodTag::Copram => Some(copram_init(&data.matrix, y, s)?),
        MethodTag::Random => {
            let lambda = lambda_for(y)?;
            let streams = TrialStreams::new(data.seed);
            Some(random_init(
                lambda,
                cfg.n,
                &mut streams.component(Component::Init),
            )?)
        }
        MethodTag::GenAmplitude | MethodTag::GenSpectral => {
            log::debug!("skipping generative method {method} in a sparse experiment");
            None
        }
    };
    Ok(out)
}

fn run_sparse_trial(
    cfg: &ExperimentConfig,
    m: usize,
    s: usize,
    sigma: f64,
    trial_index: usize,
) -> Result<Vec<TrialRecord>> {
    let data = prepare_trial(cfg, m, s, sigma, trial_index)?;
    let mut records = Vec::with_capacity(cfg.methods.len());
    for &method in &cfg.methods {
        let Some(init) = run_initializer(cfg, &data, method, s, sigma)? else {
            continue;
        };
        let mut record = TrialRecord {
            kind: cfg.kind,
            n: cfg.n,
            m,
            s,
            sigma,
            budget: None,
            method,
            trial_index,
            seed: data.seed,
            relative_error: relative_error(init.x0.view(), data.signal.values())?,
            success: None,
            init_time: init.wall_time,
            refine_time: None,
            data_checksum: data.checksum,
        };
        if cfg.refine {
            let refine_cfg = RefinementConfig {
                s,
                ..cfg.refinement
            };
            let started = std::time::Instant::now();
            let refined = copram_refine(&data.matrix, data.y.view(), init.x0.view(), &refine_cfg)?;
            record.refine_time = Some(started.elapsed().as_secs_f64());
            record.relative_error = relative_error(refined.x.view(), data.signal.values())?;
            record.success = Some(record.relative_error < SUCCESS_THRESHOLD);
        }
        records.push(record);
    }
    Ok(records)
}

fn run_time_budget_trial(
    cfg: &ExperimentConfig,
    m: usize,
    s: usize,
    sigma: f64,
    trial_index: usize,
) -> Result<Vec<TrialRecord>> {
    let data = prepare_trial(cfg, m, s, sigma, trial_index)?;
    let max_budget = cfg.budget_grid.iter().copied().fold(0.0f64, f64::max);
    let mut records = Vec::new();
    for &method in &cfg.methods {
        let Some(init) = run_initializer(cfg, &data, method, s, sigma)? else {
            continue;
        };
        let init_err = relative_error(init.x0.view(), data.signal.values())?;
        // (cumulative seconds, relative error) after the initializer and
        // after each outer refinement iteration.
        let mut timeline: Vec<(f64, f64)> = vec![(init.wall_time, init_err)];
        let refine_cfg = RefinementConfig {
            s,
            ..cfg.refinement
        };
        let truth = data.signal.values();
        copram_refine_observed(
            &data.matrix,
            data.y.view(),
            init.x0.view(),
            &refine_cfg,
            |_, x, elapsed| {
                let err = relative_error(x.view(), truth).expect("dimensions fixed");
                timeline.push((init.wall_time + elapsed, err));
                init.wall_time + elapsed > max_budget * 1.1 + 0.05
            },
        )?;
        for &budget in &cfg.budget_grid {
            // Nearest-time iteration; earlier wins ties.
            let (best_time, best_err) = timeline
                .iter()
                .copied()
                .min_by(|a, b| {
                    let da = (a.0 - budget).abs();
                    let db = (b.0 - budget).abs();
                    da.partial_cmp(&db)
                        .unwrap()
                        .then(a.0.partial_cmp(&b.0).unwrap())
                })
                .expect("timeline is nonempty");
            records.push(TrialRecord {
                kind: cfg.kind,
                n: cfg.n,
                m,
                s,
                sigma,
                budget: Some(budget),
                method,
                trial_index,
                seed: data.seed,
                relative_error: best_err,
                success: None,
                init_time: init.wall_time,
                refine_time: Some((best_time - init.wall_time).max(0.0)),
                data_checksum: data.checksum,
            });
        }
    }
    Ok(records)
}

fn run_generative_trial(
    cfg: &ExperimentConfig,
    m: usize,
    sigma: f64,
    trial_index: usize,
) -> Result<Vec<TrialRecord>> {
    use rand::Rng;
    use rand_distr::StandardNormal;
    let seed = stable_seed(
        cfg.master_seed,
        &[
            cfg.kind as u64,
            m as u64,
            0,
            sigma.to_bits(),
            trial_index as u64,
        ],
    );
    let streams = TrialStreams::new(seed);
    let g = &cfg.gen;
    let b = {
        let mut rng = streams.component(Component::Signal);
        Array2::from_shape_fn((g.output_dim, g.k), |_| {
            rng.sample::<f64, _>(StandardNormal)
        })
    };
    let model = make_linear_generator(b, g.latent_radius)?;
    let net = build_latent_net(&model, g.delta)?;
    let z_star = sample_latent_annulus(
        g.k,
        g.latent_radius,
        g.annulus_lo,
        &mut streams.component(Component::Init),
    );
    let x = model.evaluate(z_star.view())?;
    let matrix = Arc::new(gen_sensing_matrix(m, g.output_dim, streams.matrix_seed())?);
    let x_norm: f64 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut noise_rng = streams.component(Component::Noise);
    let y = Array1::from_iter((0..m).map(|i| {
        let eta: f64 = if sigma > 0.0 {
            sigma * x_norm * noise_rng.sample::<f64, _>(StandardNormal)
        } else {
            0.0
        };
        matrix.row(i).dot(&x).abs() + eta
    }));
    let checksum = trial_checksum(x.view(), &matrix, y.view());
    let xbar = x.mapv(|v| v / x_norm);
    let mut records = Vec::new();
    for &method in &cfg.methods {
        let started = std::time::Instant::now();
        let (err, ok) = match method {
            MethodTag::GenAmplitude => {
                let res = brute_force_amplitude_min(&model, &net, &matrix, y.view())?;
                (relative_error(res.q.view(), x.view())?, true)
            }
            MethodTag::GenSpectral => {
                let res = generative_spectral_init(&model, &net, &matrix, y.view(), &cfg.band)?;
                (relative_error(res.xhat.view(), xbar.view())?, true)
            }
            _ => {
                log::debug!("skipping sparse method {method} in the generative toy experiment");
                (0.0, false)
            }
        };
        if !ok {
            continue;
        }
        records.push(TrialRecord {
            kind: cfg.kind,
            n: g.output_dim,
            m,
            s: 0,
            sigma,
            budget: None,
            method,
            trial_index,
            seed,
            relative_error: err,
            success: None,
            init_time: started.elapsed().as_secs_f64(),
            refine_time: None,
            data_checksum: checksum,
        });
    }
    Ok(records)
}

/// Records plus the count of skipped method/experiment combinations.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub records: Vec<TrialRecord>,
    pub skipped: usize,
}

/// Runs the full sweep: every grid point x trial x method, with paired data
/// per trial. Trials run on a worker pool (except the time-budget kind,
/// which stays on one worker to keep timings clean) and are merged in
/// deterministic order.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let mut jobs = Vec::new();
    for &m in &cfg.m_grid {
        for &s in &cfg.s_grid {
            for &sigma in &cfg.sigma_grid {
                for trial in 0..cfg.total_trials() {
                    jobs.push((m, s, sigma, trial));
                }
            }
        }
    }
    let expected_per_trial = cfg.methods.len();
    let nested: Vec<Vec<TrialRecord>> = match cfg.kind {
        ExperimentKind::TimeBudget => jobs
            .iter()
            .map(|&(m, s, sigma, trial)| run_time_budget_trial(cfg, m, s, sigma, trial))
            .collect::<Result<_>>()?,
        ExperimentKind::GenerativeToy => jobs
            .par_iter()
            .map(|&(m, _s, sigma, trial)| run_generative_trial(cfg, m, sigma, trial))
            .collect::<Result<_>>()?,
        _ => jobs
            .par_iter()
            .map(|&(m, s, sigma, trial)| run_sparse_trial(cfg, m, s, sigma, trial))
            .collect::<Result<_>>()?,
    };
    let mut records = Vec::new();
    let mut skipped = 0usize;
    for (job_records, &(_, _, _, _)) in nested.into_iter().zip(jobs.iter()) {
        let produced_methods = match cfg.kind {
            ExperimentKind::TimeBudget => {
                if cfg.budget_grid.is_empty() {
                    0
                } else {
                    job_records.len() / cfg.budget_grid.len()
                }
            }
            _ => job_records.len(),
        };
        skipped += expected_per_trial.saturating_sub(produced_methods);
        records.extend(job_records);
    }
    // Deterministic (grid point, method, trial) emission order, independent
    // of worker scheduling; stable sort keeps budget points in grid order.
    let grid_pos = |r: &TrialRecord| -> usize {
        let mi = cfg.m_grid.iter().position(|&m| m == r.m).unwrap_or(0);
        let si = cfg.s_grid.iter().position(|&s| s == r.s).unwrap_or(0);
        let gi = cfg
            .sigma_grid
            .iter()
            .position(|&g| g == r.sigma)
            .unwrap_or(0);
        (mi * cfg.s_grid.len() + si) * cfg.sigma_grid.len() + gi
    };
    let method_pos = |r: &TrialRecord| cfg.methods.iter().position(|&m| m == r.method).unwrap_or(0);
    records.sort_by_key(|r| (grid_pos(r), method_pos(r), r.trial_index));
    Ok(RunOutput { records, skipped })
}

/// Per-(grid point, method) summary.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub kind: ExperimentKind,
    pub n: usize,
    pub m: usize,
    pub s: usize,
    pub sigma: f64,
    pub budget: Option<f64>,
    pub method: MethodTag,
    pub trials: usize,
    pub mean_relative_error: f64,
    /// Sample standard deviation across repeat-block means.
    pub std_over_blocks: f64,
    pub success_rate: Option<f64>,
    pub mean_init_time: f64,
    pub mean_refine_time: Option<f64>,
}

/// Groups records by `(grid point, method)`: the mean is over all trials,
/// the standard deviation is across the repeat-block means (sample std,
/// divisor N - 1).
pub fn summarize(records: &[TrialRecord], trials_per_block: usize) -> Vec<SummaryRow> {
    use std::collections::BTreeMap;
    assert!(trials_per_block >= 1);
    type Key = (
        ExperimentKind,
        usize,
        usize,
        usize,
        u64,
        Option<u64>,
        MethodTag,
    );
    let mut groups: BTreeMap<Key, Vec<&TrialRecord>> = BTreeMap::new();
    for r in records {
        let key = (
            r.kind,
            r.n,
            r.m,
            r.s,
            r.sigma.to_bits(),
            r.budget.map(f64::to_bits),
            r.method,
        );
        groups.entry(key).or_default().push(r);
    }
    let mut rows = Vec::with_capacity(groups.len());
    for ((kind, n, m, s, sigma_bits, budget_bits, method), group) in groups {
        let count = group.len();
        let mean = group.iter().map(|r| r.relative_error).sum::<f64>() / count as f64;
        let mut block_means: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
        for r in &group {
            let block = r.trial_index / trials_per_block;
            let e = block_means.entry(block).or_insert((0.0, 0));
            e.0 += r.relative_error;
            e.1 += 1;
        }
        let means: Vec<f64> = block_means
            .values()
            .map(|(sum, c)| sum / *c as f64)
            .collect();
        let std_over_blocks = if means.len() < 2 {
            0.0
        } else {
            let bm = means.iter().sum::<f64>() / means.len() as f64;
            (means.iter().map(|v| (v - bm) * (v - bm)).sum::<f64>() / (means.len() - 1) as f64)
                .sqrt()
        };
        let successes: Vec<bool> = group.iter().filter_map(|r| r.success).collect();
        let success_rate = if successes.is_empty() {
            None
        } else {
            Some(successes.iter().filter(|v| **v).count() as f64 / successes.len() as f64)
        };
        let mean_init_time = group.iter().map(|r| r.init_time).sum::<f64>() / count as f64;
        let refine_times: Vec<f64> = group.iter().filter_map(|r| r.refine_time).collect();
        let mean_refine_time = if refine_times.is_empty() {
            None
        } else {
            Some(refine_times.iter().sum::<f64>() / refine_times.len() as f64)
        };
        rows.push(SummaryRow {
            kind,
            n,
            m,
            s,
            sigma: f64::from_bits(sigma_bits),
            budget: budget_bits.map(f64::from_bits),
            method,
            trials: count,
            mean_relative_error: mean,
            std_over_blocks,
            success_rate,
            mean_init_time,
            mean_refine_time,
        });
    }
    rows
}

// ---- CSV ----

/// 17 significant digits: enough to round-trip any f64 exactly.
fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_f64(field: &str) -> Result<f64> {
    field
        .parse::<f64>()
        .map_err(|e| Error::Parse(format!("bad float '{field}': {e}")))
}

pub const CSV_HEADER: &str =
    "kind,n,m,s,sigma,budget,method,trial_index,seed,relative_error,success,init_time,refine_time,data_checksum";

pub fn records_to_csv(records: &[TrialRecord]) -> String {
    let mut out = String::with_capacity(64 + records.len() * 160);
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in records {
        let success = match r.success {
            None => "",
            Some(true) => "true",
            Some(false) => "false",
        };
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.kind,
            r.n,
            r.m,
            r.s,
            fmt_f64(r.sigma),
            r.budget.map(fmt_f64).unwrap_or_default(),
            r.method,
            r.trial_index,
            r.seed,
            fmt_f64(r.relative_error),
            success,
            fmt_f64(r.init_time),
            r.refine_time.map(fmt_f64).unwrap_or_default(),
            r.data_checksum,
        ));
    }
    out
}

pub fn records_from_csv(text: &str) -> Result<Vec<TrialRecord>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == CSV_HEADER => {}
        other => return Err(Error::Parse(format!("unexpected CSV header: {other:?}"))),
    }
    let mut records = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 14 {
            return Err(Error::Parse(format!(
                "line {}: expected 14 fields, got {}",
                lineno + 2,
                fields.len()
            )));
        }
        let parse_usize = |f: &str| -> Result<usize> {
            f.parse::<usize>()
                .map_err(|e| Error::Parse(format!("bad integer '{f}': {e}")))
        };
        records.push(TrialRecord {
            kind: fields[0].parse()?,
            n: parse_usize(fields[1])?,
            m: parse_usize(fields[2])?,
            s: parse_usize(fields[3])?,
            sigma: parse_f64(fields[4])?,
            budget: if fields[5].is_empty() {
                None
            } else {
                Some(parse_f64(fields[5])?)
            },
            method: fields[6].parse()?,
            trial_index: parse_usize(fields[7])?,
            seed: fields[8]
                .parse::<u64>()
                .map_err(|e| Error::Parse(format!("bad seed: {e}")))?,
            relative_error: parse_f64(fields[9])?,
            success: match fields[10] {
                "" => None,
                "true" => Some(true),
                "false" => Some(false),
                other => return Err(Error::Parse(format!("bad success flag '{other}'"))),
            },
            init_time: parse_f64(fields[11])?,
            refine_time: if fields[12].is_empty() {
                None
            } else {
                Some(parse_f64(fields[12])?)
            },
            data_checksum: fields[13]
                .parse::<u64>()
                .map_err(|e| Error::Parse(format!("bad checksum: {e}")))?,
        });
    }
    Ok(records)
}

pub const SUMMARY_HEADER: &str =
    "kind,n,m,s,sigma,budget,method,trials,mean_relative_error,std_over_blocks,success_rate,mean_init_time,mean_refine_time";

pub fn summary_to_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::with_capacity(64 + rows.len() * 140);
    out.push_str(SUMMARY_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.kind,
            r.n,
            r.m,
            r.s,
            fmt_f64(r.sigma),
            r.budget.map(fmt_f64).unwrap_or_default(),
            r.method,
            r.trials,
            fmt_f64(r.mean_relative_error),
            fmt_f64(r.std_over_blocks),
            r.success_rate.map(fmt_f64).unwrap_or_default(),
            fmt_f64(r.mean_init_time),
            r.mean_refine_time.map(fmt_f64).unwrap_or_default(),
        ));
    }
    out
}

/// Sibling path for the summary CSV: `results.csv -> results.summary.csv`.
pub fn summary_path(records_path: &Path) -> PathBuf {
    match records_path.extension().and_then(|e| e.to_str()) {
        Some("csv") => records_path.with_extension("summary.csv"),
        _ => {
            let mut name = records_path.as_os_str().to_owned();
            name.push(".summary.csv");
            PathBuf::from(name)
        }
    }
}

/// Writes the records CSV and its summary sibling.
pub fn write_outputs(records: &[TrialRecord], trials_per_block: usize, path: &Path) -> Result<()> {
    std::fs::write(path, records_to_csv(records))?;
    let rows = summarize(records, trials_per_block);
    std::fs::write(summary_path(path), summary_to_csv(&rows))?;
    Ok(())
}

/// Record equality ignoring wall-clock columns; reruns under a fixed master
/// seed must agree on everything else.
pub fn records_equal_modulo_timing(a: &[TrialRecord], b: &[TrialRecord]) -> bool {
    if a.len() != b.len() {
        return false;
    }
    a.iter().zip(b.iter()).all(|(x, y)| {
        x.kind == y.kind
            && x.n == y.n
            && x.m == y.m
            && x.s == y.s
            && x.sigma == y.sigma
            && x.budget == y.budget
            && x.method == y.method
            && x.trial_index == y.trial_index
            && x.seed == y.seed
            && x.relative_error == y.relative_error
            && x.success == y.success
            && x.data_checksum == y.data_checksum
    })
}
