use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use darksight::config::{RunConfig, SEED_ENV};
use darksight::curate::{self, DEFAULT_MIN_COUNT};
use darksight::gdq::{self, Baseline, IntensityModel, ScanOptions, DEFAULT_TAU};
use darksight::pipeline::{self, Model, SweepParam};
use darksight::tcm::{l_tc, RegionGrid};
use darksight::video::{read_dvt, write_dvt, Clip, DvtTensor};

#[derive(Parser, Debug)]
#[command(name = "darksight", version, about = "Dark-video analysis toolkit")]
struct Cli {
    /// Worker threads for per-file work; 1 keeps runs bit-reproducible.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Darkness quantification.
    #[command(subcommand)]
    Gdq(GdqCommand),
    /// Keep low-light videos of well-populated classes and split them 80/20.
    Curate {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value_t = DEFAULT_MIN_COUNT)]
        min_count: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Corpus statistics of a manifest as JSON.
    Stats {
        #[arg(long)]
        manifest: PathBuf,
        /// Scene count from external metadata.
        #[arg(long)]
        scenes: Option<usize>,
        /// Also print a table row with this dataset name to stderr.
        #[arg(long)]
        name: Option<String>,
    },
    /// Luminance-adapt every frame of a clip; writes an f32 DVT and a JSON sidecar.
    Enhance {
        #[arg(long = "in")]
        input: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        out: PathBuf,
        /// Sidecar path; defaults to the output path with a `.json` extension.
        #[arg(long)]
        sidecar: Option<PathBuf>,
    },
    /// Classify one clip.
    Classify {
        #[arg(long = "in")]
        input: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
        /// One class label per line.
        #[arg(long)]
        classes: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Stand-alone loss evaluation.
    #[command(subcommand)]
    Losses(LossCommand),
    /// Full forward pipeline on one clip.
    Pipeline {
        #[arg(long = "in")]
        input: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
        /// Include wall time in the report (makes output run-dependent).
        #[arg(long)]
        timing: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the pipeline for each value of one knob; CSV to stdout or --out.
    Sweep {
        #[arg(long, value_enum)]
        param: SweepArg,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        #[arg(long = "in", required = true)]
        inputs: Vec<PathBuf>,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check every analytic loss gradient against central differences.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Perturb the analytic gradients (negative control).
        #[arg(long, hide = true)]
        corrupt: bool,
    },
    /// Parameter counts per pathway.
    Params {
        #[command(flatten)]
        model: ModelArgs,
    },
}

#[derive(Subcommand, Debug)]
enum GdqCommand {
    /// Scan a directory tree and emit one JSON line per video.
    Scan {
        dir: PathBuf,
        #[arg(long, default_value_t = DEFAULT_TAU)]
        tau: f64,
        #[arg(long, value_enum, default_value_t = IntensityArg::RgbMean)]
        intensity: IntensityArg,
        #[arg(long, value_enum, default_value_t = BaselineArg::Video)]
        baseline: BaselineArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand, Debug)]
enum LossCommand {
    /// Temporal-consistency loss between two DVT sequences.
    Tc {
        #[arg(long)]
        enhanced: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = RegionGrid::DEFAULT.rows)]
        grid: usize,
    },
}

#[derive(Args, Debug, Default)]
struct ModelArgs {
    /// `key = value` run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    mu_out: Option<String>,
    /// Per-pixel kernel size.
    #[arg(long = "up")]
    u_p: Option<String>,
    #[arg(long)]
    grid: Option<String>,
    /// Use unnormalized per-pixel kernels.
    #[arg(long)]
    raw_kernels: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SweepArg {
    #[value(name = "mu_out", alias = "mu-out")]
    MuOut,
    #[value(name = "u_p")]
    Up,
    Grid,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum IntensityArg {
    RgbMean,
    Luma601,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum BaselineArg {
    Video,
    Corpus,
}

/// A failure the caller should report with exit code 2.
#[derive(Debug)]
struct NumericalFailure(String);

impl std::fmt::Display for NumericalFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for NumericalFailure {}

impl ModelArgs {
    /// Config file, then the seed from the environment, then flags.
    fn resolve(&self) -> anyhow::Result<RunConfig> {
        let cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        let mut cfg = cfg.with_seed_override(std::env::var(SEED_ENV).ok().as_deref())?;
        for (key, value) in [("mu_out", &self.mu_out), ("u_p", &self.u_p), ("grid", &self.grid)] {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        if self.raw_kernels {
            cfg.normalize_kernels = false;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn emit(out: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match out {
        Some(path) => std::fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            stdout.flush()?;
            Ok(())
        }
    }
}

fn json_line<T: serde::Serialize>(value: &T) -> anyhow::Result<String> {
    Ok(serde_json::to_string(value)? + "\n")
}

fn read_labels(path: &Path, expected: usize) -> anyhow::Result<Vec<String>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let labels: Vec<String> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect();
    if labels.len() != expected {
        bail!(darksight::Error::Config(format!(
            "{} lists {} labels but the model has {expected} classes",
            path.display(),
            labels.len()
        )));
    }
    Ok(labels)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Gdq(GdqCommand::Scan {
            dir,
            tau,
            intensity,
            baseline,
            out,
        }) => {
            let opts = ScanOptions {
                tau,
                model: match intensity {
                    IntensityArg::RgbMean => IntensityModel::RgbMean,
                    IntensityArg::Luma601 => IntensityModel::Luma601,
                },
                baseline: match baseline {
                    BaselineArg::Video => Baseline::Video,
                    BaselineArg::Corpus => Baseline::Corpus,
                },
                jobs: cli.jobs.max(1),
            };
            let records = gdq::scan(&dir, &opts)?;
            let mut text = String::new();
            for r in &records {
                text += &json_line(r)?;
            }
            let low = records.iter().filter(|r| r.label == gdq::LightLabel::LowLight).count();
            eprintln!("scanned {} videos, {low} low-light", records.len());
            emit(out.as_deref(), &text)
        }
        Command::Curate {
            manifest,
            min_count,
            seed,
            out,
        } => {
            let entries = curate::read_manifest(&manifest)?;
            let total = entries.len();
            let curated = curate::curate(entries, min_count, seed);
            eprintln!("kept {} of {total} entries", curated.len());
            let mut buf = Vec::new();
            curate::write_manifest(&curated, &mut buf)?;
            emit(out.as_deref(), std::str::from_utf8(&buf)?)
        }
        Command::Stats { manifest, scenes, name } => {
            let entries = curate::read_manifest(&manifest)?;
            let stats = curate::stats(&entries, scenes);
            if let Some(name) = name {
                eprintln!("{}", stats.table_row(&name));
            }
            emit(None, &json_line(&stats)?)
        }
        Command::Enhance {
            input,
            model,
            out,
            sidecar,
        } => {
            let cfg = model.resolve()?;
            let clip = Clip::load(&input)?;
            let (enhanced, side) = pipeline::enhance_clip(&clip, &cfg)?;
            write_dvt(&DvtTensor::from_tensor(&enhanced)?, &out)?;
            let sidecar = sidecar.unwrap_or_else(|| out.with_extension("json"));
            emit(Some(&sidecar), &json_line(&side)?)?;
            eprintln!("wrote {} and {}", out.display(), sidecar.display());
            Ok(())
        }
        Command::Classify {
            input,
            model,
            classes,
            out,
        } => {
            let cfg = model.resolve()?;
            let labels = classes
                .as_deref()
                .map(|p| read_labels(p, cfg.num_classes))
                .transpose()?;
            let clip = Clip::load(&input)?;
            let report = pipeline::pipeline_run(&clip, &cfg, &Model::build(&cfg)?)?;
            let mut ranked: Vec<(usize, f64)> = report.probs.iter().copied().enumerate().collect();
            ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            let label = |i: usize| labels.as_ref().map(|l| l[i].clone());
            let top5: Vec<_> = ranked
                .iter()
                .take(5)
                .map(|&(i, p)| serde_json::json!({ "class": i, "label": label(i), "prob": p }))
                .collect();
            let value = serde_json::json!({
                "top1": report.top1,
                "top1_label": label(report.top1),
                "probs": top5,
                "losses": report.losses,
                "config": report.config,
            });
            emit(out.as_deref(), &json_line(&value)?)
        }
        Command::Losses(LossCommand::Tc { enhanced, input, grid }) => {
            if grid == 0 {
                bail!(darksight::Error::Config("grid must be >= 1".into()));
            }
            let e = read_dvt(&enhanced)?.to_tensor::<f64>()?;
            let i = read_dvt(&input)?.to_tensor::<f64>()?;
            let loss = l_tc(&e, &i, RegionGrid::square(grid))?.loss;
            if !loss.is_finite() {
                bail!(darksight::Error::NonFinite { op: "l_tc" });
            }
            emit(None, &json_line(&serde_json::json!({ "l_tc": loss, "grid": grid }))?)
        }
        Command::Pipeline {
            input,
            model,
            timing,
            out,
        } => {
            let cfg = model.resolve()?;
            let clip = Clip::load(&input)?;
            let start = Instant::now();
            let model = Model::build(&cfg)?;
            let mut report = pipeline::pipeline_run(&clip, &cfg, &model)?;
            let elapsed = start.elapsed().as_secs_f64() * 1e3;
            eprintln!("pipeline finished in {elapsed:.1} ms");
            if timing {
                report.timing_ms = Some(elapsed);
            }
            emit(out.as_deref(), &json_line(&report)?)
        }
        Command::Sweep {
            param,
            values,
            inputs,
            model,
            out,
        } => {
            let cfg = model.resolve()?;
            let param = match param {
                SweepArg::MuOut => SweepParam::MuOut,
                SweepArg::Up => SweepParam::KernelSize,
                SweepArg::Grid => SweepParam::Grid,
            };
            let clips = inputs
                .iter()
                .map(|p| Clip::load(p))
                .collect::<darksight::Result<Vec<_>>>()?;
            let csv = pipeline::sweep(param, &values, &clips, &cfg)?;
            emit(out.as_deref(), &csv)
        }
        Command::Gradcheck { seed, corrupt } => {
            let seed = match std::env::var(SEED_ENV) {
                Ok(v) => v
                    .trim()
                    .parse()
                    .map_err(|_| darksight::Error::Config(format!("{SEED_ENV}: cannot parse `{v}`")))?,
                Err(_) => seed,
            };
            let report = pipeline::gradcheck_all(seed, corrupt)?;
            for c in &report.checks {
                eprintln!(
                    "{:<14} max rel error {:.3e} {}",
                    c.loss,
                    c.max_rel_error,
                    if c.passed { "ok" } else { "FAILED" }
                );
            }
            emit(None, &json_line(&report)?)?;
            if !report.passed {
                bail!(NumericalFailure(format!(
                    "gradient check exceeded tolerance {}",
                    report.tolerance
                )));
            }
            Ok(())
        }
        Command::Params { model } => {
            let cfg = model.resolve()?;
            let report = pipeline::params_report(&cfg)?;
            eprintln!(
                "reflected pathway overhead {:.2}%",
                100.0 * report.backbone.reflected_overhead
            );
            emit(None, &json_line(&report)?)
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<NumericalFailure>().is_some() {
        return 2;
    }
    match err.downcast_ref::<darksight::Error>() {
        Some(e) if e.is_numerical() => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
