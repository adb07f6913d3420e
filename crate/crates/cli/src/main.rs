//! Experiment CLI: parameter sweeps for the sparse phase retrieval
//! initializers, the toy generative verifications, and the property
//! self-test suite.
//!
//! Exit codes: 0 on success, 1 on failed self-test or runtime error,
//! 2 on invalid configuration, 3 when every requested combination was
//! skipped and no records were produced.

use std::collections::HashMap;
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use prispca::harness::{summary_path, summary_to_csv, write_outputs};
use prispca::{
    run_experiment, selftest, summarize, ExperimentConfig, ExperimentKind, MethodTag, SpcaSolver,
    TruncationBand,
};

#[derive(Parser, Debug)]
#[command(
    name = "prispca",
    about = "Sparse phase retrieval initialization experiments",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample-size sweep: error of each initializer as m grows.
    VaryM(SweepArgs),
    /// Sparsity sweep: error as s grows at fixed m.
    VaryS(SweepArgs),
    /// Noise sweep: error as sigma grows (quadratic-measurement methods excluded).
    VarySigma(SweepArgs),
    /// Initialization plus refinement; success means refined error < 0.01.
    SuccessRate(SweepArgs),
    /// Error achieved within a wall-clock budget, per budget point.
    TimeBudget(SweepArgs),
    /// Brute-force verification on toy generative models.
    GenToy(SweepArgs),
    /// Run the oracle/property suites and report pass/fail per property.
    Selftest,
}

#[derive(Args, Debug, Default)]
struct SweepArgs {
    /// Flat `key = value` config file; command-line flags override it.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Signal dimension.
    #[arg(long)]
    n: Option<usize>,

    /// Sparsity grid: `10`, `5,10,20`, or `lo:hi:step`.
    #[arg(long)]
    s: Option<String>,

    /// Sample-size grid: `1000`, `500,1000`, or `lo:hi:step`.
    #[arg(long)]
    m: Option<String>,

    /// Noise-level grid: `0`, `0.1,0.2`, or `lo:hi:step`.
    #[arg(long)]
    sigma: Option<String>,

    /// Trials per repeat block.
    #[arg(long)]
    trials: Option<usize>,

    /// Repeat blocks for error bars.
    #[arg(long)]
    repeats: Option<usize>,

    /// Master seed; everything is reproducible from it.
    #[arg(long)]
    seed: Option<u64>,

    /// Comma-separated method tags (pri-spca, pri-spca-nt, thwf, sparta,
    /// copram, random, gen-amplitude, gen-spectral).
    #[arg(long)]
    methods: Option<String>,

    /// Lower truncation constant.
    #[arg(long)]
    l: Option<f64>,

    /// Upper truncation constant.
    #[arg(long)]
    u: Option<f64>,

    /// Sparse-PCA solver: tpower or grqi.
    #[arg(long)]
    solver: Option<String>,

    /// Run the alternating refinement after each initializer.
    #[arg(long)]
    refine: bool,

    /// Output CSV path; a `.summary.csv` sibling and a plotting script are
    /// written next to it.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Latent dimension for gen-toy.
    #[arg(long)]
    k: Option<usize>,

    /// Net resolution for gen-toy.
    #[arg(long)]
    delta: Option<f64>,
}

fn parse_usize_grid(text: &str) -> anyhow::Result<Vec<usize>> {
    let text = text.trim();
    if let Some((lo, rest)) = text.split_once(':') {
        let (hi, step) = rest
            .split_once(':')
            .ok_or_else(|| anyhow::anyhow!("grid range needs lo:hi:step, got '{text}'"))?;
        let (lo, hi, step): (usize, usize, usize) =
            (lo.trim().parse()?, hi.trim().parse()?, step.trim().parse()?);
        if step == 0 || hi < lo {
            anyhow::bail!("bad grid range '{text}'");
        }
        return Ok((lo..=hi).step_by(step).collect());
    }
    text.split(',')
        .map(|t| {
            t.trim()
                .parse::<usize>()
                .map_err(|e| anyhow::anyhow!("bad integer '{t}': {e}"))
        })
        .collect()
}

fn parse_f64_grid(text: &str) -> anyhow::Result<Vec<f64>> {
    let text = text.trim();
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() == 3 {
        let (lo, hi, step): (f64, f64, f64) = (
            parts[0].trim().parse()?,
            parts[1].trim().parse()?,
            parts[2].trim().parse()?,
        );
        if step.is_nan() || step <= 0.0 || hi < lo {
            anyhow::bail!("bad grid range '{text}'");
        }
        let mut grid = Vec::new();
        let mut i = 0usize;
        loop {
            let v = lo + step * i as f64;
            if v > hi + step * 1e-9 {
                break;
            }
            grid.push(v);
            i += 1;
        }
        return Ok(grid);
    }
    text.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|e| anyhow::anyhow!("bad number '{t}': {e}"))
        })
        .collect()
}

fn parse_methods(text: &str) -> anyhow::Result<Vec<MethodTag>> {
    text.split(',')
        .map(|t| MethodTag::from_str(t.trim()).map_err(|e| anyhow::anyhow!(e.to_string())))
        .collect()
}

/// Flat `key = value` file; `#` starts a comment.
fn read_config_file(path: &PathBuf) -> anyhow::Result<HashMap<String, String>> {
    let text = std::fs::read_to_string(path)?;
    let mut map = HashMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            anyhow::anyhow!("{}:{}: expected 'key = value'", path.display(), lineno + 1)
        })?;
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

fn build_config(kind: ExperimentKind, args: &SweepArgs) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::defaults(kind);
    let file = match &args.config {
        Some(path) => read_config_file(path)?,
        None => HashMap::new(),
    };
    let lookup = |key: &str| file.get(key).cloned();

    if let Some(n) = args
        .n
        .map(Ok)
        .or_else(|| lookup("n").map(|v| v.parse()))
        .transpose()?
    {
        cfg.n = n;
    }
    if let Some(text) = args.s.clone().or_else(|| lookup("s")) {
        cfg.s_grid = parse_usize_grid(&text)?;
    }
    if let Some(text) = args.m.clone().or_else(|| lookup("m")) {
        cfg.m_grid = parse_usize_grid(&text)?;
    }
    if let Some(text) = args.sigma.clone().or_else(|| lookup("sigma")) {
        cfg.sigma_grid = parse_f64_grid(&text)?;
    }
    if let Some(trials) = args
        .trials
        .map(Ok)
        .or_else(|| lookup("trials").map(|v| v.parse()))
        .transpose()?
    {
        cfg.trials = trials;
    }
    if let Some(repeats) = args
        .repeats
        .map(Ok)
        .or_else(|| lookup("repeats").map(|v| v.parse()))
        .transpose()?
    {
        cfg.repeats = repeats;
    }
    if let Some(seed) = args
        .seed
        .map(Ok)
        .or_else(|| lookup("seed").map(|v| v.parse()))
        .transpose()?
    {
        cfg.master_seed = seed;
    }
    if let Some(text) = args.methods.clone().or_else(|| lookup("methods")) {
        cfg.methods = parse_methods(&text)?;
    }
    let l = args
        .l
        .map(Ok)
        .or_else(|| lookup("l").map(|v| v.parse()))
        .transpose()?;
    let u = args
        .u
        .map(Ok)
        .or_else(|| lookup("u").map(|v| v.parse()))
        .transpose()?;
    if l.is_some() || u.is_some() {
        let band = TruncationBand::new(l.unwrap_or(cfg.band.l()), u.unwrap_or(cfg.band.u()))
            .map_err(|e| anyhow::anyhow!(e.to_string()))?;
        cfg.band = band;
    }
    if let Some(text) = args.solver.clone().or_else(|| lookup("solver")) {
        cfg.solver = SpcaSolver::from_str(&text).map_err(|e| anyhow::anyhow!(e.to_string()))?;
    }
    if args.refine
        || lookup("refine")
            .map(|v| v == "true" || v == "1")
            .unwrap_or(false)
    {
        cfg.refine = true;
    }
    if let Some(out) = args
        .out
        .clone()
        .or_else(|| lookup("out").map(PathBuf::from))
    {
        cfg.output_path = Some(out);
    }
    if let Some(k) = args
        .k
        .map(Ok)
        .or_else(|| lookup("k").map(|v| v.parse()))
        .transpose()?
    {
        cfg.gen.k = k;
    }
    if let Some(delta) = args
        .delta
        .map(Ok)
        .or_else(|| lookup("delta").map(|v| v.parse()))
        .transpose()?
    {
        cfg.gen.delta = delta;
    }
    if kind == ExperimentKind::GenerativeToy {
        cfg.gen.output_dim = cfg.n;
    }
    Ok(cfg)
}

/// Matplotlib script that plots the summary CSV; kept as plain text so no
/// plotting engine is linked into the binary.
fn plot_script(kind: ExperimentKind, summary_csv: &std::path::Path) -> String {
    let x_column = match kind {
        ExperimentKind::VaryM | ExperimentKind::SuccessRate => "m",
        ExperimentKind::VaryS => "s",
        ExperimentKind::VarySigma => "sigma",
        ExperimentKind::TimeBudget => "budget",
        ExperimentKind::GenerativeToy => "m",
    };
    let y_column = if kind == ExperimentKind::SuccessRate {
        "success_rate"
    } else {
        "mean_relative_error"
    };
    format!(
        "#!/usr/bin/env python3\n\
         # Plots {y} against {x} per method from the summary CSV.\n\
         import csv\n\
         from collections import defaultdict\n\
         import matplotlib\n\
         matplotlib.use(\"Agg\")\n\
         import matplotlib.pyplot as plt\n\
         \n\
         series = defaultdict(list)\n\
         with open({path:?}) as fh:\n\
         \x20\x20\x20\x20for row in csv.DictReader(fh):\n\
         \x20\x20\x20\x20\x20\x20\x20\x20if not row[\"{y}\"]:\n\
         \x20\x20\x20\x20\x20\x20\x20\x20\x20\x20\x20\x20continue\n\
         \x20\x20\x20\x20\x20\x20\x20\x20series[row[\"method\"]].append((float(row[\"{x}\"]), float(row[\"{y}\"]), float(row[\"std_over_blocks\"])))\n\
         \n\
         plt.figure(figsize=(7, 5))\n\
         for method, pts in sorted(series.items()):\n\
         \x20\x20\x20\x20pts.sort()\n\
         \x20\x20\x20\x20xs = [p[0] for p in pts]\n\
         \x20\x20\x20\x20ys = [p[1] for p in pts]\n\
         \x20\x20\x20\x20errs = [p[2] for p in pts]\n\
         \x20\x20\x20\x20plt.errorbar(xs, ys, yerr=errs, marker=\"o\", capsize=2, label=method)\n\
         plt.xlabel(\"{x}\")\n\
         plt.ylabel(\"{y}\")\n\
         plt.legend()\n\
         plt.grid(True, alpha=0.3)\n\
         plt.tight_layout()\n\
         plt.savefig(\"{stem}.png\", dpi=150)\n\
         print(\"wrote {stem}.png\")\n",
        x = x_column,
        y = y_column,
        path = summary_csv,
        stem = summary_csv.with_extension("").display(),
    )
}

fn run_sweep(kind: ExperimentKind, args: &SweepArgs) -> anyhow::Result<ExitCode> {
    let cfg = match build_config(kind, args) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("invalid configuration: {e}");
            return Ok(ExitCode::from(2));
        }
    };
    if let Err(e) = cfg.validate() {
        eprintln!("invalid configuration: {e}");
        return Ok(ExitCode::from(2));
    }
    log::info!(
        "running {kind}: n={}, m={:?}, s={:?}, sigma={:?}, {} trials x {} repeats, methods {:?}",
        cfg.n,
        cfg.m_grid,
        cfg.s_grid,
        cfg.sigma_grid,
        cfg.trials,
        cfg.repeats,
        cfg.methods.iter().map(|m| m.as_str()).collect::<Vec<_>>()
    );
    let out = run_experiment(&cfg)?;
    if out.records.is_empty() {
        eprintln!(
            "all {} requested combinations were skipped; nothing to report",
            out.skipped
        );
        return Ok(ExitCode::from(3));
    }
    if out.skipped > 0 {
        log::warn!(
            "{} method/experiment combinations were skipped",
            out.skipped
        );
    }
    let summary = summarize(&out.records, cfg.trials);
    if let Some(path) = &cfg.output_path {
        write_outputs(&out.records, cfg.trials, path)?;
        let spath = summary_path(path);
        let script_path = path.with_extension("plot.py");
        std::fs::write(&script_path, plot_script(kind, &spath))?;
        println!(
            "wrote {} records to {}, summary to {}, plot script to {}",
            out.records.len(),
            path.display(),
            spath.display(),
            script_path.display()
        );
    } else {
        print!("{}", summary_to_csv(&summary));
    }
    Ok(ExitCode::SUCCESS)
}

fn run_selftest() -> ExitCode {
    let reports = selftest::run_all();
    let mut failed = 0;
    for r in &reports {
        let status = if r.passed { "PASS" } else { "FAIL" };
        println!("{status} {:<28} {}", r.name, r.details);
        if !r.passed {
            failed += 1;
        }
    }
    if failed == 0 {
        println!("selftest: all {} checks passed", reports.len());
        ExitCode::SUCCESS
    } else {
        println!("selftest: {failed}/{} checks FAILED", reports.len());
        ExitCode::FAILURE
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::VaryM(args) => run_sweep(ExperimentKind::VaryM, args),
        Command::VaryS(args) => run_sweep(ExperimentKind::VaryS, args),
        Command::VarySigma(args) => run_sweep(ExperimentKind::VarySigma, args),
        Command::SuccessRate(args) => run_sweep(ExperimentKind::SuccessRate, args),
        Command::TimeBudget(args) => run_sweep(ExperimentKind::TimeBudget, args),
        Command::GenToy(args) => run_sweep(ExperimentKind::GenerativeToy, args),
        Command::Selftest => return run_selftest(),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
