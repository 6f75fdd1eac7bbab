use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;
use svdae::eval::{evaluate, EvalConfig, EvalReport, HrMode};
use svdae::harness::{
    export_spectrum, reconstruction_stats, sample_block, sweep_gamma, sweep_lambda_ease, sweep_noise, timed_fit,
    FittedModel, ModelSpec, RankChoice, DEFAULT_NOISE_RATIOS, DEFAULT_SAMPLE_SIZE,
};
use svdae::io::{
    build_bundle, load_adjacency, load_interactions, load_model, save_model, write_report, DatasetBundle,
    PersistedModel, RawPairs,
};
use svdae::models::{select_rank, SvdBackend, DEFAULT_GAMMA_GRID, DEFAULT_LAMBDA_GRID};
use svdae::rsvd::{randomized_truncated_svd, RsvdParams};
use svdae::sparse::NormalizedMatrix;
use svdae::synth::{synth_bundle, SynthConfig};

#[derive(Parser)]
#[command(name = "svdae", version, about = "Closed-form collaborative filtering: SVD-AE and EASE")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model on the training split and save it.
    Fit(FitArgs),
    /// Fit (or load) a model and evaluate it on the test split.
    Eval(EvalArgs),
    /// Sweep the SVD-AE rank parameter gamma.
    SweepGamma(SweepGammaArgs),
    /// Sweep the EASE regularization lambda.
    SweepLambda(SweepLambdaArgs),
    /// Refit models on noise-injected training data.
    SweepNoise(SweepNoiseArgs),
    /// Print the leading singular values of the normalized training matrix.
    Spectrum(SpectrumArgs),
    /// Dataset statistics, optionally with a reconstruction histogram.
    Stats(StatsArgs),
    /// Write a synthetic low-rank dataset as train/val/test pair files.
    Synth(SynthArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelKind {
    SvdAe,
    Ease,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Pairs,
    Adjacency,
}

#[derive(Clone, Copy, ValueEnum)]
enum CliHrMode {
    Truncated,
    Recall,
}

#[derive(Args)]
struct DataArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    val: Option<PathBuf>,
    #[arg(long)]
    test: Option<PathBuf>,
    /// Input file layout.
    #[arg(long, value_enum, default_value = "pairs")]
    format: Format,
}

#[derive(Args)]
struct SvdArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    oversample: usize,
    #[arg(long, default_value_t = 4)]
    power_iters: usize,
}

impl SvdArgs {
    fn backend(&self) -> SvdBackend {
        SvdBackend::Randomized(RsvdParams { oversample: self.oversample, power_iters: self.power_iters, seed: self.seed })
    }
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long, value_enum, default_value = "svd-ae")]
    model: ModelKind,
    /// Rank as a fraction of min(|U|, |I|).
    #[arg(long, conflicts_with = "rank")]
    gamma: Option<f64>,
    /// Explicit rank.
    #[arg(long)]
    rank: Option<usize>,
    #[arg(long, default_value_t = 100.0)]
    lambda: f64,
    #[command(flatten)]
    svd: SvdArgs,
}

impl ModelArgs {
    fn spec(&self) -> ModelSpec {
        match self.model {
            ModelKind::SvdAe => ModelSpec::SvdAe {
                rank: match self.rank {
                    Some(m) => RankChoice::Fixed(m),
                    None => RankChoice::Gamma(self.gamma.unwrap_or(0.04)),
                },
                backend: self.svd.backend(),
            },
            ModelKind::Ease => ModelSpec::Ease { lambda: self.lambda },
        }
    }
}

#[derive(Args)]
struct MetricArgs {
    /// Cutoffs, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "10,100")]
    k: Vec<usize>,
    #[arg(long, value_enum, default_value = "truncated")]
    hr_mode: CliHrMode,
}

impl MetricArgs {
    fn config(&self) -> EvalConfig {
        EvalConfig {
            k_list: self.k.clone(),
            hr_mode: match self.hr_mode {
                CliHrMode::Truncated => HrMode::Truncated,
                CliHrMode::Recall => HrMode::Recall,
            },
            ..Default::default()
        }
    }
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    /// Model file to write.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    metrics: MetricArgs,
    /// Evaluate a saved model instead of fitting one.
    #[arg(long)]
    load: Option<PathBuf>,
    /// JSON report to write.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepGammaArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    svd: SvdArgs,
    #[command(flatten)]
    metrics: MetricArgs,
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_GAMMA_GRID)]
    gammas: Vec<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepLambdaArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    metrics: MetricArgs,
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_LAMBDA_GRID)]
    lambdas: Vec<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepNoiseArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    svd: SvdArgs,
    #[command(flatten)]
    metrics: MetricArgs,
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_NOISE_RATIOS)]
    ratios: Vec<f64>,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "svd-ae,ease")]
    models: Vec<ModelKind>,
    #[arg(long, default_value_t = 0.04)]
    gamma: f64,
    #[arg(long, default_value_t = 100.0)]
    lambda: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SpectrumArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, conflicts_with = "rank")]
    gamma: Option<f64>,
    #[arg(long)]
    rank: Option<usize>,
    #[command(flatten)]
    svd: SvdArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct StatsArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Also fit the model and histogram a sampled block of its scores.
    #[arg(long)]
    histogram: bool,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = DEFAULT_SAMPLE_SIZE)]
    sample: usize,
    #[arg(long, default_value_t = 20)]
    bins: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 2000)]
    users: usize,
    #[arg(long, default_value_t = 1500)]
    items: usize,
    #[arg(long = "latent-rank", default_value_t = 8)]
    latent_rank: usize,
    #[arg(long, default_value_t = 75_000)]
    interactions: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory receiving train.txt, val.txt and test.txt.
    #[arg(long)]
    out: PathBuf,
}

fn load_split(path: &Path, format: Format) -> Result<RawPairs> {
    let raw = match format {
        Format::Pairs => load_interactions(path),
        Format::Adjacency => load_adjacency(path),
    }?;
    if !raw.malformed_lines.is_empty() {
        let shown: Vec<String> = raw.malformed_lines.iter().take(5).map(|n| n.to_string()).collect();
        eprintln!(
            "warning: {}: skipped {} malformed lines (first: {})",
            path.display(),
            raw.malformed_lines.len(),
            shown.join(", ")
        );
    }
    if raw.duplicates > 0 {
        eprintln!("warning: {}: collapsed {} duplicate pairs", path.display(), raw.duplicates);
    }
    Ok(raw)
}

fn load_bundle(data: &DataArgs, need_test: bool) -> Result<DatasetBundle> {
    if need_test && data.test.is_none() {
        bail!("--test is required for this command");
    }
    let optional = |p: &Option<PathBuf>| p.as_deref().map(|p| load_split(p, data.format)).transpose();
    let train = load_split(&data.train, data.format)?;
    let val = optional(&data.val)?.unwrap_or_default();
    let test = optional(&data.test)?.unwrap_or_default();
    let name = data.train.parent().and_then(|p| p.file_name()).map(|s| s.to_string_lossy().into_owned());
    Ok(build_bundle(name.unwrap_or_else(|| "dataset".into()), &train, &val, &test)?)
}

fn emit<T: serde::Serialize, C: serde::Serialize>(out: &Option<PathBuf>, kind: &str, config: &C, body: &T) -> Result<()> {
    if let Some(path) = out {
        write_report(path, kind, config, body).with_context(|| format!("writing {}", path.display()))?;
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn print_report(label: &str, report: &EvalReport) {
    let metrics: Vec<String> = report.metrics.iter().map(|(k, v)| format!("{k}={v:.5}")).collect();
    println!("{label}: {} ({} users)", metrics.join(" "), report.users_evaluated);
}

fn cmd_fit(args: FitArgs) -> Result<()> {
    let bundle = load_bundle(&args.data, false)?;
    let spec = args.model.spec();
    let fit = timed_fit(&spec, &bundle.train)?;
    let persisted = match fit.model {
        FittedModel::SvdAe(m) => PersistedModel::SvdAe(m),
        FittedModel::Ease(m) => PersistedModel::Ease(m),
        FittedModel::Popularity(_) => unreachable!("not selectable from the command line"),
    };
    save_model(&args.out, &persisted)?;
    println!(
        "{} on {}x{} ({} interactions): pre-processing {:.3} s, fit {:.3} s -> {}",
        spec.name(),
        bundle.num_users(),
        bundle.num_items(),
        bundle.train.nnz(),
        fit.timing.pre_processing_secs,
        fit.timing.fit_secs,
        args.out.display()
    );
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let bundle = load_bundle(&args.data, true)?;
    let config = args.metrics.config();
    let mask = bundle.train_and_validation()?;
    let spec = args.model.spec();
    let (model, timing) = match &args.load {
        Some(path) => {
            let model = match load_model(path)? {
                PersistedModel::SvdAe(m) => FittedModel::SvdAe(m),
                PersistedModel::Ease(m) => FittedModel::Ease(m),
            };
            (model, None)
        }
        None => {
            let fit = timed_fit(&spec, &bundle.train)?;
            (fit.model, Some(fit.timing))
        }
    };
    let scorer = model.scorer(&bundle.train)?;
    if (scorer.num_users(), scorer.num_items()) != bundle.train.shape() {
        bail!(
            "model covers {}x{} but the data is {}x{}",
            scorer.num_users(),
            scorer.num_items(),
            bundle.num_users(),
            bundle.num_items()
        );
    }
    let mut report = evaluate(scorer.as_ref(), &bundle.train, &mask, &bundle.test, &config)?;
    report.metadata.model = match &model {
        FittedModel::SvdAe(_) => "svd-ae",
        FittedModel::Ease(_) => "ease",
        FittedModel::Popularity(_) => "popularity",
    }
    .into();
    report.metadata.split = Some("test".into());
    match &model {
        FittedModel::SvdAe(m) => {
            report.metadata.rank = Some(m.rank());
            report.metadata.gamma = m.gamma();
            report.metadata.seed = m.seed();
        }
        FittedModel::Ease(m) => report.metadata.lambda = Some(m.lambda()),
        FittedModel::Popularity(_) => {}
    }
    print_report("test", &report);
    let config_echo = json!({ "eval": config, "model": spec, "loaded": args.load, "timing": timing });
    emit(&args.out, "eval", &config_echo, &report)
}

fn print_sweep(result: &svdae::harness::SweepResult) {
    for p in &result.points {
        let mse = p.mse.map(|m| format!(" mse={m:.4}")).unwrap_or_default();
        let rank = p.rank.map(|m| format!(" rank={m}")).unwrap_or_default();
        print_report(&format!("{} {}={}{rank}{mse}", result.model, result.axis.as_str(), p.value), &p.test);
    }
    if let Some(v) = result.selected {
        println!("selected by validation {}: {v}", result.selection_metric);
    }
}

fn cmd_sweep_gamma(args: SweepGammaArgs) -> Result<()> {
    let bundle = load_bundle(&args.data, true)?;
    let config = args.metrics.config();
    let result = sweep_gamma(&bundle, &args.gammas, &config, &args.svd.backend())?;
    print_sweep(&result);
    emit(&args.out, "sweep", &json!({ "eval": config, "backend": args.svd.backend() }), &result)
}

fn cmd_sweep_lambda(args: SweepLambdaArgs) -> Result<()> {
    let bundle = load_bundle(&args.data, true)?;
    let config = args.metrics.config();
    let result = sweep_lambda_ease(&bundle, &args.lambdas, &config)?;
    print_sweep(&result);
    emit(&args.out, "sweep", &json!({ "eval": config }), &result)
}

fn cmd_sweep_noise(args: SweepNoiseArgs) -> Result<()> {
    let bundle = load_bundle(&args.data, true)?;
    let config = args.metrics.config();
    let specs: Vec<ModelSpec> = args
        .models
        .iter()
        .map(|m| match m {
            ModelKind::SvdAe => ModelSpec::SvdAe { rank: RankChoice::Gamma(args.gamma), backend: args.svd.backend() },
            ModelKind::Ease => ModelSpec::Ease { lambda: args.lambda },
        })
        .collect();
    let results = sweep_noise(&bundle, &args.ratios, &specs, &config, args.svd.seed)?;
    for r in &results {
        print_sweep(r);
    }
    emit(&args.out, "noise-sweep", &json!({ "eval": config, "models": specs, "seed": args.svd.seed }), &results)
}

fn cmd_spectrum(args: SpectrumArgs) -> Result<()> {
    let bundle = load_bundle(&args.data, false)?;
    let r = &bundle.train;
    let rank = match args.rank {
        Some(m) => m,
        None => select_rank(r.num_users(), r.num_items(), args.gamma.unwrap_or(0.04))?,
    };
    let params = RsvdParams { oversample: args.svd.oversample, power_iters: args.svd.power_iters, seed: args.svd.seed };
    let f = randomized_truncated_svd(&NormalizedMatrix::from_interactions(r), rank, &params)?;
    let values = export_spectrum(&f);
    let mut stdout = std::io::stdout().lock();
    for v in &values {
        writeln!(stdout, "{v:.12}")?;
    }
    emit(&args.out, "spectrum", &json!({ "rank": rank, "params": params }), &json!({ "singular_values": values }))
}

fn cmd_stats(args: StatsArgs) -> Result<()> {
    let bundle = load_bundle(&args.data, false)?;
    let (u, i) = bundle.train.shape();
    let density = bundle.train.nnz() as f64 / (u as f64 * i as f64);
    println!("users {u}, items {i}");
    println!(
        "train {}, validation {}, test {} interactions; train density {density:.6}",
        bundle.train.nnz(),
        bundle.validation.nnz(),
        bundle.test.nnz()
    );
    let mut body = json!({
        "users": u,
        "items": i,
        "train": bundle.train.nnz(),
        "validation": bundle.validation.nnz(),
        "test": bundle.test.nnz(),
        "train_density": density,
    });
    if args.histogram {
        let fit = timed_fit(&args.model.spec(), &bundle.train)?;
        let scorer = fit.model.scorer(&bundle.train)?;
        let block = sample_block(scorer.as_ref(), &bundle.train, args.sample, args.model.svd.seed)?;
        let stats = reconstruction_stats(block.scores.as_ref(), block.input.as_ref(), args.bins)?;
        println!("reconstruction range [{:.4}, {:.4}], counts {:?}", stats.reconstructed.min, stats.reconstructed.max, stats.reconstructed.counts);
        println!("input counts {:?}", stats.input.counts);
        body["histogram"] = serde_json::to_value(&stats)?;
    }
    emit(&args.out, "stats", &json!({ "sample": args.sample, "bins": args.bins }), &body)
}

fn write_pairs(path: &Path, m: &svdae::sparse::InteractionMatrix) -> Result<()> {
    let mut text = String::with_capacity(m.nnz() * 10);
    for (u, i) in m.iter() {
        text.push_str(&format!("{u} {i}\n"));
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn cmd_synth(args: SynthArgs) -> Result<()> {
    let config = SynthConfig::new(args.users, args.items, args.latent_rank, args.interactions, args.seed);
    let bundle = synth_bundle(&config)?;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    write_pairs(&args.out.join("train.txt"), &bundle.train)?;
    write_pairs(&args.out.join("val.txt"), &bundle.validation)?;
    write_pairs(&args.out.join("test.txt"), &bundle.test)?;
    println!(
        "{}: train {}, validation {}, test {} -> {}",
        bundle.name,
        bundle.train.nnz(),
        bundle.validation.nnz(),
        bundle.test.nnz(),
        args.out.display()
    );
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Fit(a) => cmd_fit(a),
        Command::Eval(a) => cmd_eval(a),
        Command::SweepGamma(a) => cmd_sweep_gamma(a),
        Command::SweepLambda(a) => cmd_sweep_lambda(a),
        Command::SweepNoise(a) => cmd_sweep_noise(a),
        Command::Spectrum(a) => cmd_spectrum(a),
        Command::Stats(a) => cmd_stats(a),
        Command::Synth(a) => cmd_synth(a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
