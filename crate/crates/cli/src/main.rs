use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use sphmm_core::config::RunConfig;
use sphmm_core::eval::{
    default_alpha_grid, emit_report, report_from_scores, score_utterances, students_t_with_critical, sweep_csv,
    sweep_from_scores, Approach, SWEEP_FILE,
};
use sphmm_core::manifest::{DatasetManifest, Split};
use sphmm_core::pipeline::{Corpus, TrainedSystem, Utterance};
use sphmm_core::synth::{generate_corpus, generate_manifest, MANIFEST_FILE};

#[derive(Debug, Parser)]
#[command(
    name = "sphmm",
    version,
    about = "Two-stage gender/emotion recognizer with suprasegmental HMMs"
)]
struct Cli {
    /// Flat `key = value` configuration file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Root seed for every random choice [default: 0]
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (results do not depend on this) [default: all cores]
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Output directory: corpus for `synth`, models for `train`, reports for
    /// `evaluate` and `alpha-sweep`
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic WAV corpus and its manifest.
    Synth(SynthArgs),
    /// Train gender, gender-dependent emotion and pooled emotion models.
    Train(RunArgs),
    /// Score the test split with all three approaches and write a report.
    Evaluate(RunArgs),
    /// Gender-dependent emotion accuracy over a grid of fusion weights.
    AlphaSweep(SweepArgs),
    /// Two-sample t statistic from summary statistics.
    Ttest(TtestArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// paper-shape, separable, prosody-only or chance [default: separable]
    #[arg(long)]
    preset: Option<String>,
    /// Inter-emotion divergence in [0, 1] [default: preset's]
    #[arg(long)]
    separability: Option<f64>,
    /// Speakers per gender [default: preset's]
    #[arg(long)]
    speakers: Option<usize>,
    /// Training speakers per gender [default: preset's]
    #[arg(long)]
    train_speakers: Option<usize>,
    /// Sentences per speaker [default: preset's]
    #[arg(long)]
    sentences: Option<usize>,
    /// Training sentences [default: preset's]
    #[arg(long)]
    train_sentences: Option<usize>,
    /// Repeats per recording session, comma separated [default: preset's]
    #[arg(long)]
    repeats: Option<String>,
    /// Mean utterance duration in seconds [default: preset's]
    #[arg(long)]
    duration: Option<f64>,
    /// Write only the manifest, no audio.
    #[arg(long)]
    manifest_only: bool,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Dataset manifest (CSV)
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Directory manifest paths are relative to [default: manifest's directory]
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// Model directory (read by evaluate and alpha-sweep) [default: models]
    #[arg(long)]
    model_dir: Option<PathBuf>,
    /// Acoustic states per model [default: 9]
    #[arg(long)]
    states: Option<usize>,
    /// Gaussian components per acoustic state [default: 10]
    #[arg(long)]
    mixtures: Option<usize>,
    /// Suprasegmental states [default: 3]
    #[arg(long)]
    supra_states: Option<usize>,
    /// Gaussian components per suprasegmental state [default: 3]
    #[arg(long)]
    supra_mixtures: Option<usize>,
    /// Baum-Welch iteration cap [default: 20]
    #[arg(long)]
    max_iters: Option<usize>,
    /// Relative log-likelihood improvement that stops training [default: 0.0001]
    #[arg(long)]
    rel_tol: Option<f64>,
    /// Variance floor as a fraction of the global data variance [default: 0.001]
    #[arg(long)]
    variance_floor_ratio: Option<f64>,
    /// Fusion weight between acoustic (0) and suprasegmental (1) scores [default: 0.5]
    #[arg(long)]
    alpha: Option<f64>,
    /// Emotion vocabulary, comma separated [default: neutral,anger,sadness,happiness,disgust,fear]
    #[arg(long)]
    emotions: Option<String>,
    /// Accept train/test splits that share speakers or sentences.
    #[arg(long)]
    allow_split_overlap: bool,
    /// Analysis frame length in ms [default: 30]
    #[arg(long)]
    frame_length_ms: Option<f64>,
    /// Analysis frame shift in ms [default: 5]
    #[arg(long)]
    frame_shift_ms: Option<f64>,
    /// Pre-emphasis coefficient [default: 0.97]
    #[arg(long)]
    pre_emphasis: Option<f64>,
    /// Disable pre-emphasis.
    #[arg(long)]
    no_pre_emphasis: bool,
    /// Mel filterbank channels [default: 24]
    #[arg(long)]
    mel_channels: Option<usize>,
    /// FFT size [default: 512]
    #[arg(long)]
    fft_size: Option<usize>,
    /// Cepstral coefficients per frame [default: 8]
    #[arg(long)]
    num_coeffs: Option<usize>,
    /// Delta regression half-window [default: 2]
    #[arg(long)]
    delta_window: Option<usize>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Comma-separated fusion weights [default: 0,0.1,...,1]
    #[arg(long)]
    alphas: Option<String>,
}

#[derive(Debug, Args)]
struct TtestArgs {
    /// Mean of the first sample
    #[arg(long)]
    mx: f64,
    /// Mean of the second sample
    #[arg(long)]
    my: f64,
    /// Standard deviation of the first sample
    #[arg(long)]
    sx: f64,
    /// Standard deviation of the second sample
    #[arg(long)]
    sy: f64,
    /// Sample size
    #[arg(long)]
    n: usize,
    /// Critical value of the one-tailed test [default: 1.645]
    #[arg(long)]
    critical: Option<f64>,
}

fn base_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn apply_run_args(cfg: &mut RunConfig, a: &RunArgs) -> Result<()> {
    macro_rules! set {
        ($($field:ident => $key:literal),* $(,)?) => {
            $(if let Some(v) = &a.$field { cfg.set($key, &v.to_string())?; })*
        };
    }
    set!(
        states => "num_states",
        mixtures => "acoustic_mixtures",
        supra_states => "supra_states",
        supra_mixtures => "supra_mixtures",
        max_iters => "max_iters",
        rel_tol => "rel_tol",
        variance_floor_ratio => "variance_floor_ratio",
        alpha => "alpha",
        emotions => "emotions",
        frame_length_ms => "frame_length_ms",
        frame_shift_ms => "frame_shift_ms",
        pre_emphasis => "pre_emphasis",
        mel_channels => "mel_channels",
        fft_size => "fft_size",
        num_coeffs => "num_coeffs",
        delta_window => "delta_window",
    );
    if let Some(m) = &a.manifest {
        cfg.manifest = Some(m.clone());
    }
    if let Some(d) = &a.data_dir {
        cfg.data_dir = Some(d.clone());
    }
    if let Some(d) = &a.model_dir {
        cfg.model_dir = d.clone();
    }
    if a.allow_split_overlap {
        cfg.allow_split_overlap = true;
    }
    if a.no_pre_emphasis {
        cfg.pre_emphasis_enabled = false;
    }
    cfg.validate()?;
    Ok(())
}

fn load_split(cfg: &RunConfig, split: Split) -> Result<Corpus> {
    let manifest_path = cfg
        .manifest
        .as_deref()
        .context("no manifest given (use --manifest or `manifest =`)")?;
    let manifest = DatasetManifest::load(manifest_path)?;
    if !cfg.allow_split_overlap {
        manifest.check_speaker_independence()?;
    }
    let data_dir = cfg
        .data_dir
        .clone()
        .unwrap_or_else(|| manifest_path.parent().map(Path::to_path_buf).unwrap_or_default());
    let corpus = Corpus::from_manifest(&manifest, &data_dir, &cfg.features(), &cfg.prosody(), &[split])?;
    log::info!(
        "loaded {} {split:?} utterances from {}",
        corpus.utterances.len(),
        manifest_path.display()
    );
    Ok(corpus)
}

fn cmd_synth(cli: &Cli, a: &SynthArgs) -> Result<()> {
    let out = cli.out.as_deref().context("synth needs --out <dir>")?;
    let mut cfg = base_config(cli)?;
    if let Some(p) = &a.preset {
        cfg.set("synth.preset", p)?;
    }
    let overrides = [
        ("separability", a.separability.map(|v| v.to_string())),
        ("speakers_per_gender", a.speakers.map(|v| v.to_string())),
        ("train_speakers", a.train_speakers.map(|v| v.to_string())),
        ("sentences", a.sentences.map(|v| v.to_string())),
        ("train_sentences", a.train_sentences.map(|v| v.to_string())),
        ("repeats", a.repeats.clone()),
        ("duration_s", a.duration.map(|v| v.to_string())),
    ];
    for (k, v) in overrides {
        if let Some(v) = v {
            cfg.set(&format!("synth.{k}"), &v)?;
        }
    }
    let spec = cfg.synth_spec()?;
    let manifest = if a.manifest_only {
        generate_manifest(&spec, out)?
    } else {
        generate_corpus(&spec, out)?
    };
    log::info!(
        "{} rows: {} train, {} test",
        manifest.len(),
        manifest.split(Split::Train).count(),
        manifest.split(Split::Test).count()
    );
    println!("{}", out.join(MANIFEST_FILE).display());
    Ok(())
}

fn cmd_train(cli: &Cli, a: &RunArgs) -> Result<()> {
    let mut cfg = base_config(cli)?;
    apply_run_args(&mut cfg, a)?;
    if let Some(o) = &cli.out {
        cfg.model_dir = o.clone();
    }
    let corpus = load_split(&cfg, Split::Train)?;
    let system = TrainedSystem::train(&corpus, &cfg.model())?;
    system.save(&cfg.model_dir)?;
    println!(
        "wrote {} gender, {} emotion and {} pooled models to {}",
        2,
        system.emotion.cells.len(),
        system.pooled.cells.len(),
        cfg.model_dir.display()
    );
    Ok(())
}

fn test_set(cli: &Cli, run: &RunArgs) -> Result<(RunConfig, TrainedSystem, Corpus)> {
    let mut cfg = base_config(cli)?;
    apply_run_args(&mut cfg, run)?;
    if let Some(o) = &cli.out {
        cfg.report_dir = o.clone();
    }
    let system = TrainedSystem::load(&cfg.model_dir)
        .with_context(|| format!("cannot load models from {}", cfg.model_dir.display()))?;
    if system.emotions() != cfg.emotions.as_slice() {
        cfg.emotions = system.emotions().to_vec();
    }
    let corpus = load_split(&cfg, Split::Test)?;
    if corpus.utterances.is_empty() {
        bail!("the manifest has no test utterances");
    }
    Ok((cfg, system, corpus))
}

fn cmd_evaluate(cli: &Cli, a: &RunArgs) -> Result<()> {
    let (cfg, system, corpus) = test_set(cli, a)?;
    let test: Vec<&Utterance> = corpus.utterances.iter().collect();
    let scores = score_utterances(&system, &test)?;
    let report = report_from_scores(system.emotions(), &test, &scores, cfg.fusion_weight()?, cfg.echo())?;
    emit_report(&report, &cfg.report_dir)?;
    println!("gender accuracy: {:.2}%", report.gender_accuracy);
    for a in Approach::ALL {
        println!("approach {} average: {:.2}%", a.number(), report.average(a));
    }
    println!("report: {}", cfg.report_dir.display());
    Ok(())
}

fn cmd_alpha_sweep(cli: &Cli, a: &SweepArgs) -> Result<()> {
    let alphas = match &a.alphas {
        Some(s) => s
            .split(',')
            .map(|x| x.trim().parse::<f64>().with_context(|| format!("bad alpha `{x}`")))
            .collect::<Result<Vec<_>>>()?,
        None => default_alpha_grid(),
    };
    let (cfg, system, corpus) = test_set(cli, &a.run)?;
    let test: Vec<&Utterance> = corpus.utterances.iter().collect();
    let scores = score_utterances(&system, &test)?;
    let curve = sweep_from_scores(&test, &scores, &alphas)?;
    std::fs::create_dir_all(&cfg.report_dir).with_context(|| format!("creating {}", cfg.report_dir.display()))?;
    let path = cfg.report_dir.join(SWEEP_FILE);
    std::fs::write(&path, sweep_csv(&curve)).with_context(|| format!("writing {}", path.display()))?;
    for p in &curve {
        println!("{:.2} {:.2}", p.alpha, p.accuracy_percent);
    }
    println!("curve: {}", path.display());
    Ok(())
}

fn cmd_ttest(cli: &Cli, a: &TtestArgs) -> Result<()> {
    let critical = match a.critical {
        Some(c) => c,
        None => base_config(cli)?.critical_value,
    };
    let r = students_t_with_critical(a.mx, a.my, a.sx, a.sy, a.n, critical)?;
    println!("t = {}", r.t_value);
    println!("sd_pooled = {}", r.sd_pooled);
    println!("critical = {}", r.critical_value);
    println!(
        "{}",
        if r.significant {
            "significant"
        } else {
            "not significant"
        }
    );
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    if let Some(j) = cli.jobs {
        if j == 0 {
            bail!("--jobs must be at least 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(j).build_global()?;
    }
    match &cli.command {
        Command::Synth(a) => cmd_synth(cli, a),
        Command::Train(a) => cmd_train(cli, a),
        Command::Evaluate(a) => cmd_evaluate(cli, a),
        Command::AlphaSweep(a) => cmd_alpha_sweep(cli, a),
        Command::Ttest(a) => cmd_ttest(cli, a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
