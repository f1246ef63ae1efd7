use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use msbatn::attention::{attended_pairs_count, build_sparse_mask, build_window_schedule_with};
use msbatn::metrics::{evaluate_all, IouRule, DEFAULT_THRESHOLDS};
use msbatn::network::{count_params_flops, load_checkpoint, save_checkpoint, ModelConfig};
use msbatn::pipeline::{
    infer, load_dataset, load_features, load_labels, parse_boundaries, save_labels, synth_dataset,
    train_with, write_dataset, InferOptions, RunConfig, SynthSpec, TrainState,
};
use msbatn::segments::refine_prediction;
use msbatn::{Error, Result};

#[derive(Parser)]
#[command(
    name = "msbatn",
    version,
    about = "Boundary-aware temporal action segmentation"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Iou {
    Strict,
    Inclusive,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic labelled feature dataset.
    Synth {
        /// TOML synthetic spec; defaults apply when omitted.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10)]
        n: usize,
        #[arg(long, default_value_t = 1000)]
        frames: usize,
    },
    /// Train a model on a directory of `.feat` + `.labels` files.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        /// Best checkpoint; the resumable last state goes to `<out>.last`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Segment one feature file.
    Infer {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        no_refine: bool,
        #[arg(long, default_value_t = 0.5)]
        theta: f64,
        #[arg(long, default_value_t = 8)]
        min_distance: usize,
        #[arg(long)]
        average_stages: bool,
    },
    /// Score predicted labels against ground truth.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long, value_delimiter = ',')]
        thresholds: Option<Vec<f64>>,
        #[arg(long)]
        x100: bool,
        #[arg(long, value_enum, default_value = "strict")]
        iou: Iou,
        /// Also write `metric=value` lines here.
        #[arg(long)]
        kv: Option<PathBuf>,
    },
    /// Relabel spans between boundaries by centre-weighted voting.
    Refine {
        /// `[T × C]` probabilities in feature-file format.
        #[arg(long)]
        probs: PathBuf,
        #[arg(long)]
        boundaries: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the DSWA masks of one layer as rows of key indices.
    InspectMask {
        #[arg(long = "T")]
        t: usize,
        #[arg(long, default_value_t = 0)]
        layer: usize,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Only print the pair counts.
        #[arg(long)]
        summary: bool,
    },
    /// Parameter count and multiply-accumulates for one sequence length.
    Flops {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "T", default_value_t = 1024)]
        t: usize,
    },
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_owned(),
        source: e,
    })
}

/// Accepts either a full run config or a bare model config.
fn model_config(path: Option<&Path>) -> Result<ModelConfig> {
    let Some(path) = path else {
        return Ok(ModelConfig::default());
    };
    let text = read_text(path)?;
    RunConfig::from_toml(&text)
        .map(|r| r.model)
        .or_else(|run_err| {
            ModelConfig::from_toml(&text).map_err(|e| {
                Error::Config(format!(
                    "{}: not a run config ({run_err}) nor a model config ({e})",
                    path.display()
                ))
            })
        })
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Command::Synth {
            spec,
            out,
            n,
            frames,
        } => {
            let spec = match spec {
                Some(p) => toml::from_str::<SynthSpec>(&read_text(&p)?)
                    .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?,
                None => SynthSpec::default(),
            };
            let seqs = synth_dataset(&spec, n, frames)?;
            write_dataset(&out, &seqs)?;
            println!(
                "wrote {n} sequences of {frames} frames to {}",
                out.display()
            );
        }
        Command::Train {
            config,
            data,
            out,
            resume,
        } => {
            let run = match &config {
                Some(p) => RunConfig::from_toml(&read_text(p)?)?,
                None => RunConfig::default(),
            };
            let data = data
                .or_else(|| run.data_dir.as_ref().map(PathBuf::from))
                .ok_or_else(|| Error::Config("no data directory given".into()))?;
            let out = out
                .or_else(|| run.out.as_ref().map(PathBuf::from))
                .ok_or_else(|| Error::Config("no output checkpoint given".into()))?;
            let samples = load_dataset(&data)?;
            let state = match resume {
                Some(p) => Some(TrainState::from_checkpoint(
                    load_checkpoint(&p)?,
                    run.optim,
                )?),
                None => None,
            };
            let outcome = train_with(&run, &samples, state, |e| println!("{}", e.to_line()))?;
            let st = &outcome.state;
            save_checkpoint(&out, &st.best_model(), &Default::default())?;
            save_checkpoint(&with_suffix(&out, ".last"), &st.model, &st.state_blobs())?;
            println!(
                "best epoch {} monitored loss {}; saved {}",
                st.best_epoch,
                st.best_loss,
                out.display()
            );
        }
        Command::Infer {
            ckpt,
            features,
            out,
            no_refine,
            theta,
            min_distance,
            average_stages,
        } => {
            let model = load_checkpoint(&ckpt)?.model;
            let x = load_features(&features)?;
            let opts = InferOptions {
                refine: !no_refine,
                theta,
                min_distance,
                average_stages,
            };
            let result = infer(&model, &x, &opts)?;
            let stem = features
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or("pred");
            for p in result.write(&out, stem)? {
                println!("{}", p.display());
            }
        }
        Command::Eval {
            pred,
            gt,
            thresholds,
            x100,
            iou,
            kv,
        } => {
            let p = load_labels(&pred)?;
            let g = load_labels(&gt)?;
            let th = thresholds.unwrap_or_else(|| DEFAULT_THRESHOLDS.to_vec());
            let rule = match iou {
                Iou::Strict => IouRule::Strict,
                Iou::Inclusive => IouRule::Inclusive,
            };
            let report = evaluate_all(&p, &g, &th, rule)?;
            print!("{}", report.to_text(x100));
            if let Some(path) = kv {
                fs::write(&path, report.to_key_values())
                    .map_err(|e| Error::Io { path, source: e })?;
            }
        }
        Command::Refine {
            probs,
            boundaries,
            out,
        } => {
            let p = load_features(&probs)?;
            let b = parse_boundaries(&read_text(&boundaries)?, &boundaries.display().to_string())?;
            let labels = refine_prediction(&p, &b)?;
            match out {
                Some(path) => save_labels(&labels, &path)?,
                None => print!("{}", msbatn::pipeline::format_labels(&labels)),
            }
        }
        Command::InspectMask {
            t,
            layer,
            config,
            summary,
        } => {
            let cfg = model_config(config.as_deref())?;
            if t == 0 {
                return Err(Error::invalid("inspect-mask", "T must be positive"));
            }
            if layer >= cfg.n_blocks {
                return Err(Error::invalid(
                    "inspect-mask",
                    format!("layer {layer} out of range for {} blocks", cfg.n_blocks),
                ));
            }
            let schedule = build_window_schedule_with(cfg.n_blocks, &cfg.window)?;
            let (e, s) = schedule[layer];
            for spec in [e, s] {
                let mask = build_sparse_mask(t, &spec);
                let pairs = attended_pairs_count(&mask);
                println!(
                    "# {:?} width={} rate={} pairs={} density={:.4}",
                    spec.role,
                    spec.one_sided_width,
                    spec.dilation_rate,
                    pairs,
                    pairs as f64 / (t * t) as f64
                );
                if !summary {
                    for (i, row) in mask.rows().enumerate() {
                        let keys: Vec<String> = row.iter().map(usize::to_string).collect();
                        println!("{i}: {}", keys.join(" "));
                    }
                }
            }
        }
        Command::Flops { config, t } => {
            let cfg = model_config(config.as_deref())?;
            let r = count_params_flops(&cfg, t)?;
            println!("params={}", r.params);
            println!("params_m={:.4}", r.params as f64 / 1e6);
            println!("macs={}", r.macs);
            println!("gmacs={:.4}", r.gmacs());
            println!("attention_macs={}", r.attention_macs);
            println!("attended_pairs={}", r.attended_pairs);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 2 } else { 1 })
        }
    }
}
