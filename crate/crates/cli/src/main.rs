use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use roomest::corpus::{read_manifest_csv, ManifestRow};
use roomest::eval::{bench_estimator, evaluate, measure_rtf, write_results_csv, write_stats_json, StatsFile};
use roomest::{
    build_corpus, build_diagonal_filterbank, build_vocabulary, extract_features, ground_truth,
    log_mel_spectrogram, read_wav, speech_like, synth_rir, train, AudioBuffer, ClassGrid,
    Estimator, FeatureMatrix, FrameParams, MlpModel, NoiseKind, Rir, TrainConfig, SAMPLE_RATE,
};

#[derive(Parser)]
#[command(name = "roomest", version, about = "Blind T60 and DRR estimation from speech")]
struct Cli {
    /// Seed for every stochastic step.
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,

    /// Progress messages on standard error (repeat for more).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Export the Gabor filterbank as text files.
    Filters {
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the T × 600 Gabor feature matrix of a WAV file as CSV.
    Features {
        wav: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        channel: usize,
    },
    /// Print T60, DRR and direct-path position of an impulse response.
    GroundTruth {
        rir: PathBuf,
        #[arg(long, default_value_t = 0)]
        channel: usize,
    },
    /// Build a labeled reverberant, noisy corpus.
    Synth(SynthArgs),
    /// Train a model on a corpus manifest.
    Train(TrainArgs),
    /// Estimate T60 and DRR for WAV files.
    Estimate {
        #[arg(required = true)]
        wavs: Vec<PathBuf>,
        #[arg(long)]
        model: PathBuf,
        /// Directory for per-frame posterior CSVs (one per input file).
        #[arg(long)]
        per_frame: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        channel: usize,
        #[arg(long, default_value_t = 0)]
        jobs: usize,
    },
    /// Score a model against a corpus manifest.
    Evaluate {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        stats: Option<PathBuf>,
        /// Add a real-time-factor report to the statistics.
        #[arg(long)]
        rtf: bool,
        #[arg(long, default_value_t = 0)]
        jobs: usize,
    },
    /// Single-threaded real-time-factor measurement over a directory of WAVs.
    Bench {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        audio_dir: PathBuf,
    },
}

#[derive(Args)]
struct SynthArgs {
    /// Directory of 16 kHz speech WAVs.
    #[arg(long, required_unless_present = "synthetic_speech", conflicts_with = "synthetic_speech")]
    speech_dir: Option<PathBuf>,
    /// Generate this many speech-like utterances instead of reading files.
    #[arg(long)]
    synthetic_speech: Option<usize>,
    /// Utterance length for generated speech, seconds.
    #[arg(long, default_value_t = 2.5)]
    speech_seconds: f64,
    /// Directory of 16 kHz impulse-response WAVs.
    #[arg(long, required_unless_present = "synthetic_rirs", conflicts_with = "synthetic_rirs")]
    rir_dir: Option<PathBuf>,
    /// Synthetic impulse responses as comma-separated T60:DRR pairs, e.g. 0.3:5,0.6:-2.
    #[arg(long, value_delimiter = ',')]
    synthetic_rirs: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',', default_value = "ambient,babble,fan")]
    noise: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "0,10,20", allow_hyphen_values = true)]
    snr: Vec<f64>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 256)]
    hidden: usize,
    #[arg(long, default_value_t = 20)]
    epochs: usize,
    #[arg(long, default_value_t = 0.01)]
    lr: f64,
    #[arg(long, default_value_t = 0.9)]
    momentum: f64,
    #[arg(long, default_value_t = 256)]
    batch: usize,
    #[arg(long, default_value_t = 0.1)]
    val_fraction: f64,
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .context("building thread pool")
}

fn run(cli: Cli) -> Result<()> {
    let seed = cli.seed;
    let verbose = cli.verbose;
    match cli.command {
        Command::Filters { out } => {
            let params = FrameParams::default();
            let bank = build_diagonal_filterbank(params.n_mels, params.frame_rate(SAMPLE_RATE))?;
            bank.export(&out)
                .with_context(|| format!("exporting filters to {}", out.display()))?;
            println!("{} filters, {} features -> {}", bank.filters.len(), bank.feature_dim, out.display());
        }
        Command::Features { wav, out, channel } => {
            let audio = read_wav(&wav, channel)?;
            let feats = features_of(&audio)?;
            write_matrix_csv(&out, feats.values.rows().into_iter().map(|r| r.to_vec()))?;
            println!("{} frames x {} features -> {}", feats.n_frames(), feats.dim(), out.display());
        }
        Command::GroundTruth { rir, channel } => {
            let rir = Rir::new(read_wav(&rir, channel)?)?;
            let (t60, drr) = ground_truth(&rir)?;
            println!("t60_s={t60:.3} drr_db={drr:.2} peak_sample={}", rir.peak_index);
        }
        Command::Synth(args) => synth(args, seed, verbose)?,
        Command::Train(args) => train_cmd(args, seed, verbose)?,
        Command::Estimate {
            wavs,
            model,
            per_frame,
            channel,
            jobs,
        } => {
            let estimator = load_estimator(&model)?;
            if let Some(dir) = &per_frame {
                fs::create_dir_all(dir)?;
            }
            let lines: Vec<Result<String>> = pool(jobs)?.install(|| {
                wavs.par_iter()
                    .map(|wav| {
                        let audio = read_wav(wav, channel)?;
                        let (est, post, _) = estimator
                            .estimate_detailed(&audio)
                            .with_context(|| format!("estimating {}", wav.display()))?;
                        if let Some(dir) = &per_frame {
                            let stem = wav.file_stem().unwrap_or_default().to_string_lossy();
                            let path = dir.join(format!("{stem}.posteriors.csv"));
                            write_matrix_csv(&path, post.rows().into_iter().map(|r| r.to_vec()))?;
                        }
                        Ok(format!(
                            "{}\t{:.3}\t{:.1}\t{}\t{}",
                            wav.display(),
                            est.t60_hat,
                            est.drr_hat,
                            est.class_id,
                            est.n_frames
                        ))
                    })
                    .collect()
            });
            let mut stdout = io::stdout().lock();
            for line in lines {
                writeln!(stdout, "{}", line?)?;
            }
        }
        Command::Evaluate {
            manifest,
            model,
            out,
            stats,
            rtf,
            jobs,
        } => {
            let estimator = load_estimator(&model)?;
            let rows = read_manifest_csv(&manifest)
                .with_context(|| format!("reading {}", manifest.display()))?;
            let outcome = pool(jobs)?.install(|| evaluate(&rows, &estimator))?;
            for f in &outcome.failed {
                eprintln!("warning: {}: {}", f.item, f.error);
            }
            write_results_csv(&out, &outcome.records)?;
            let report = if rtf && !outcome.runs.is_empty() {
                Some(measure_rtf(&outcome.runs)?)
            } else {
                None
            };
            if let Some(path) = &stats {
                write_stats_json(
                    path,
                    &StatsFile {
                        groups: &outcome.groups,
                        excluded: outcome.failed.len(),
                        rtf: report.as_ref(),
                    },
                )?;
            }
            println!(
                "{} items evaluated, {} excluded -> {}",
                outcome.records.len(),
                outcome.failed.len(),
                out.display()
            );
            if let Some(r) = report {
                println!("mean RTF {:.5}", r.mean_rtf);
            }
        }
        Command::Bench { model, audio_dir } => {
            let estimator = load_estimator(&model)?;
            let files = wav_files(&audio_dir)?;
            let audio = files
                .iter()
                .map(|p| read_wav(p, 0).with_context(|| format!("reading {}", p.display())))
                .collect::<Result<Vec<_>>>()?;
            let report = pool(1)?.install(|| bench_estimator(&estimator, &audio))?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
    }
    Ok(())
}

fn features_of(audio: &AudioBuffer) -> Result<FeatureMatrix> {
    let params = FrameParams::default();
    let bank = build_diagonal_filterbank(params.n_mels, params.frame_rate(SAMPLE_RATE))?;
    Ok(extract_features(&log_mel_spectrogram(audio, &params)?, &bank)?)
}

fn write_matrix_csv<T: std::fmt::Display>(
    path: &Path,
    rows: impl Iterator<Item = Vec<T>>,
) -> Result<()> {
    let mut text = String::new();
    for row in rows {
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                text.push(',');
            }
            write!(text, "{v}").expect("write to String");
        }
        text.push('\n');
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn load_estimator(path: &Path) -> Result<Estimator> {
    let model = MlpModel::load(path).with_context(|| format!("loading model {}", path.display()))?;
    Ok(Estimator::new(model)?)
}

/// `*.wav` files of a directory in name order.
fn wav_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .is_some_and(|e| e.eq_ignore_ascii_case("wav"))
        })
        .collect();
    files.sort();
    if files.is_empty() {
        bail!("no .wav files in {}", dir.display());
    }
    Ok(files)
}

fn parse_rir_spec(spec: &str) -> Result<(f64, f64)> {
    let (t, d) = spec
        .split_once(':')
        .ok_or_else(|| anyhow!("expected T60:DRR, got `{spec}`"))?;
    Ok((t.trim().parse()?, d.trim().parse()?))
}

fn synth(args: SynthArgs, seed: u64, verbose: u8) -> Result<()> {
    let kinds = args
        .noise
        .iter()
        .map(|k| k.parse::<NoiseKind>())
        .collect::<roomest::Result<Vec<_>>>()?;
    let pool = pool(args.jobs)?;
    let speech: Vec<AudioBuffer> = match (&args.speech_dir, args.synthetic_speech) {
        (Some(dir), _) => wav_files(dir)?
            .iter()
            .map(|p| read_wav(p, 0).with_context(|| format!("reading {}", p.display())))
            .collect::<Result<_>>()?,
        (None, Some(n)) => pool.install(|| {
            (0..n)
                .into_par_iter()
                .map(|u| speech_like(args.speech_seconds, seed.wrapping_add(u as u64)))
                .collect::<roomest::Result<_>>()
        })?,
        (None, None) => bail!("one of --speech-dir or --synthetic-speech is required"),
    };
    let rirs: Vec<Rir> = match (&args.rir_dir, &args.synthetic_rirs) {
        (Some(dir), _) => wav_files(dir)?
            .iter()
            .map(|p| Ok(Rir::new(read_wav(p, 0)?)?))
            .collect::<Result<_>>()?,
        (None, Some(specs)) => specs
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let (t60, drr) = parse_rir_spec(s)?;
                let seed = seed.wrapping_add(1_000_000 + i as u64);
                Ok(synth_rir(t60, drr, (1.2 * t60).max(0.5), seed)?)
            })
            .collect::<Result<_>>()?,
        (None, None) => bail!("one of --rir-dir or --synthetic-rirs is required"),
    };
    if verbose > 0 {
        eprintln!("{} utterances, {} impulse responses", speech.len(), rirs.len());
    }
    let corpus = pool.install(|| {
        build_corpus(&speech, &rirs, &kinds, &args.snr, &ClassGrid::default(), seed)
    })?;
    let csv = pool.install(|| corpus.write(&args.out))?;
    println!(
        "{} items, {} classes -> {}",
        corpus.manifest.items.len(),
        corpus.manifest.vocabulary.len(),
        csv.display()
    );
    Ok(())
}

fn train_cmd(args: TrainArgs, seed: u64, verbose: u8) -> Result<()> {
    let rows: Vec<ManifestRow> = read_manifest_csv(&args.manifest)
        .with_context(|| format!("reading {}", args.manifest.display()))?;
    if rows.is_empty() {
        bail!("manifest {} lists no items", args.manifest.display());
    }
    let grid = ClassGrid::default();
    let truths: Vec<(f64, f64)> = rows.iter().map(|r| (r.t60_s, r.drr_db)).collect();
    let vocabulary = build_vocabulary(&grid, &truths)?;
    let params = FrameParams::default();
    let bank = build_diagonal_filterbank(params.n_mels, params.frame_rate(SAMPLE_RATE))?;
    let pool = pool(args.jobs)?;
    let dataset: Vec<(FeatureMatrix, usize)> = pool.install(|| {
        rows.par_iter()
            .map(|r| {
                let audio = read_wav(&r.path, 0).with_context(|| format!("reading {}", r.path))?;
                let feats = extract_features(&log_mel_spectrogram(&audio, &params)?, &bank)?;
                let cell = grid.cell_of(r.t60_s, r.drr_db)?;
                let class = vocabulary.class_of(cell).expect("vocabulary built from these rows");
                Ok((feats, class))
            })
            .collect::<Result<_>>()
    })?;
    if verbose > 0 {
        let frames: usize = dataset.iter().map(|(f, _)| f.n_frames()).sum();
        eprintln!("{} utterances, {frames} frames, {} classes", dataset.len(), vocabulary.len());
    }
    let config = TrainConfig {
        learning_rate: args.lr,
        momentum: args.momentum,
        batch_size: args.batch,
        epochs: args.epochs,
        hidden_units: args.hidden,
        seed,
        validation_fraction: args.val_fraction,
    };
    let outcome = pool.install(|| train(&dataset, vocabulary.len(), &config))?;
    let mut stdout = io::stdout().lock();
    writeln!(stdout, "epoch\ttrain_ce\tval_ce\tval_acc")?;
    for e in &outcome.history {
        writeln!(
            stdout,
            "{}\t{:.6}\t{:.6}\t{:.4}",
            e.epoch, e.train_ce, e.val_ce, e.val_accuracy
        )?;
    }
    let model = MlpModel::new(outcome.network, vocabulary, grid, params, bank.config.clone(), seed)?;
    model
        .save(&args.out)
        .with_context(|| format!("writing {}", args.out.display()))?;
    if verbose > 0 {
        eprintln!("best epoch {} -> {}", outcome.best_epoch, args.out.display());
    }
    Ok(())
}
