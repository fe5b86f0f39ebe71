use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use staypos::evalkit::{self, Perturbation, ResultsCsv, Target};
use staypos::experiment::{self, ExperimentConfig, RunError, Stage};
use staypos::nnet::{checkpoint, MlpParams};
use staypos::scores::write_decomposition_csv;
use staypos::synthgen::io::{read_dataset, write_atomic};
use staypos::synthgen::{DatasetSpec, Family};
use staypos::trainer::{self, TrainMode};
use staypos::Error;

const EXIT_USAGE: u8 = 64;

#[derive(Parser)]
#[command(name = "staypos", version, about = "Stay-positive detector experiments on a synthetic benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment config (JSON); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config's global seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate train/val/test datasets into a directory.
    GenData {
        #[command(flatten)]
        common: Common,
        /// Dataset spec (JSON); overrides the config's dataset section.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a detector from scratch (stage1 or clamp_full_retrain).
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "stage1")]
        mode: String,
        /// Directory written by gen-data.
        #[arg(long)]
        data: PathBuf,
        /// Writes <prefix>.spnn and <prefix>.report.json.
        #[arg(long, visible_alias = "out")]
        out_prefix: PathBuf,
    },
    /// Re-fit the head of a checkpoint with non-negative weights.
    RetrainPositive {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, visible_alias = "out")]
        out_prefix: PathBuf,
        /// Only zero the negative weights, without re-fitting.
        #[arg(long)]
        clamp_only: bool,
    },
    /// Per-family AP on the test set.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Perturbation sweep on the test set.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// compression | downsize | noise | lowpass | upscale
        #[arg(long)]
        perturbation: String,
        /// fakes | reals | both
        #[arg(long, default_value = "fakes")]
        target: String,
        /// Comma-separated grid; the perturbation's default grid when omitted.
        #[arg(long, value_delimiter = ',')]
        grid: Option<Vec<f64>>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Real/fake score decomposition for every sample of a dataset.
    Decompose {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        /// A dataset file, or a gen-data directory (its test set is used).
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Aggregate a completed run directory into one JSON document.
    Report {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        run: PathBuf,
        /// Defaults to <run>/report.json.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Full pipeline: data, training, every scenario, summary.
    Run {
        #[command(flatten)]
        common: Common,
        /// Overrides the config's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

struct Failure {
    code: u8,
    stage: &'static str,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            stage: "usage",
            message: message.into(),
        }
    }

    fn at(stage: Stage) -> impl Fn(Error) -> Failure {
        move |e| Failure::from(RunError { stage, source: e })
    }
}

impl From<RunError> for Failure {
    fn from(e: RunError) -> Self {
        let rec = e.record();
        let stage = match rec.stage {
            Stage::Config => "config",
            Stage::Data => "data",
            Stage::Training => "training",
            Stage::Eval => "eval",
        };
        Self {
            code: rec.exit_code as u8,
            stage,
            message: rec.message,
        }
    }
}

type CliResult<T> = Result<T, Failure>;

fn require(path: &Path) -> CliResult<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Failure::usage(format!("{} does not exist", path.display())))
    }
}

fn load_config(common: &Common) -> CliResult<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(p) => {
            require(p)?;
            ExperimentConfig::load(p).map_err(Failure::at(Stage::Config))?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn load_bundle(dir: &Path) -> CliResult<evalkit::DataBundle> {
    require(dir)?;
    experiment::read_bundle(dir).map_err(Failure::at(Stage::Data))
}

fn load_model(path: &Path) -> CliResult<MlpParams<f64>> {
    require(path)?;
    checkpoint::load_any(path).map_err(Failure::at(Stage::Data))
}

fn with_ext(prefix: &Path, ext: &str) -> PathBuf {
    let mut os = prefix.as_os_str().to_owned();
    os.push(ext);
    PathBuf::from(os)
}

fn save_trained(prefix: &Path, params: &MlpParams<f64>, report: Option<&mut trainer::TrainReport>) -> CliResult<()> {
    let err = Failure::at(Stage::Training);
    if let Some(dir) = prefix.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| err(e.into()))?;
    }
    let ckpt = with_ext(prefix, ".spnn");
    checkpoint::save(&ckpt, params).map_err(&err)?;
    if let Some(r) = report {
        r.checkpoint = Some(ckpt.display().to_string());
        let json = r.to_json().map_err(&err)?;
        write_atomic(&with_ext(prefix, ".report.json"), json.as_bytes()).map_err(&err)?;
    }
    println!("wrote {}", ckpt.display());
    Ok(())
}

fn write_output(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let err = Failure::at(Stage::Eval);
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| err(e.into()))?;
    }
    write_atomic(path, bytes).map_err(err)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::GenData { common, spec, out } => {
            let cfg = load_config(&common)?;
            let mut cfg = cfg;
            if let Some(p) = spec {
                require(&p)?;
                let text = fs::read_to_string(&p).map_err(|e| Failure::at(Stage::Config)(e.into()))?;
                cfg.dataset = serde_json::from_str::<DatasetSpec>(&text).map_err(|e| Failure::at(Stage::Config)(e.into()))?;
            }
            let spec = cfg.dataset_spec();
            spec.validate().map_err(Failure::at(Stage::Config))?;
            let bundle = evalkit::DataBundle::build(&spec).map_err(Failure::at(Stage::Data))?;
            experiment::write_bundle(&out, &bundle).map_err(Failure::at(Stage::Data))?;
            println!(
                "wrote {} train, {} val, {} test samples to {}",
                bundle.train.len(),
                bundle.val.len(),
                bundle.test.reals.len() + bundle.test.base_fakes.len() + bundle.test.improved_fakes.len(),
                out.display()
            );
            Ok(())
        }
        Command::Train {
            common,
            mode,
            data,
            out_prefix,
        } => {
            let cfg = load_config(&common)?;
            let mode = TrainMode::parse(&mode).ok_or_else(|| Failure::usage(format!("unknown mode {mode}")))?;
            let bundle = load_bundle(&data)?;
            let abl = cfg.ablation_config();
            let err = Failure::at(Stage::Training);
            let (params, mut report) = match mode {
                TrainMode::Stage1 => trainer::train_stage1(&bundle.train, &bundle.val, &abl.dims, &abl.stage1),
                TrainMode::ClampFullRetrain => {
                    trainer::train_full_clamped(&bundle.train, &bundle.val, &abl.dims, &abl.clamp_full)
                }
                other => {
                    return Err(Failure::usage(format!(
                        "train runs stage1 or clamp_full_retrain; use retrain-positive for {}",
                        other.name()
                    )))
                }
            }
            .map_err(err)?;
            save_trained(&out_prefix, &params, Some(&mut report))
        }
        Command::RetrainPositive {
            common,
            checkpoint,
            data,
            out_prefix,
            clamp_only,
        } => {
            let cfg = load_config(&common)?;
            let model = load_model(&checkpoint)?;
            if clamp_only {
                return save_trained(&out_prefix, &trainer::clamp_head(&model), None);
            }
            let bundle = load_bundle(&data)?;
            let abl = cfg.ablation_config();
            let (params, mut report) =
                trainer::retrain_stay_positive(&model, &bundle.train, &bundle.val, &abl.stay_positive)
                    .map_err(Failure::at(Stage::Training))?;
            save_trained(&out_prefix, &params, Some(&mut report))
        }
        Command::Eval {
            common: _,
            checkpoint,
            data,
            out,
        } => {
            let model = load_model(&checkpoint)?;
            let bundle = load_bundle(&data)?;
            let t = &bundle.test;
            let fams = [
                (Family::Base, t.base_fakes.as_slice()),
                (Family::Improved, t.improved_fakes.as_slice()),
            ];
            let id = model_id(&checkpoint);
            let err = Failure::at(Stage::Eval);
            let res = evalkit::generalization_eval(&model, &id, &t.reals, &fams).map_err(&err)?;
            let mut csv = ResultsCsv::new(Vec::new()).map_err(&err)?;
            for (r, (fam, _)) in res.iter().zip(&fams) {
                csv.result(r, "family", &fam.to_string()).map_err(&err)?;
            }
            write_output(&out, &csv.finish().map_err(&err)?)
        }
        Command::Sweep {
            common,
            checkpoint,
            data,
            perturbation,
            target,
            grid,
            out,
        } => {
            let cfg = load_config(&common)?;
            let p = Perturbation::parse(&perturbation)
                .ok_or_else(|| Failure::usage(format!("unknown perturbation {perturbation}")))?;
            let target = Target::parse(&target).ok_or_else(|| Failure::usage(format!("unknown target {target}")))?;
            let grid = grid.unwrap_or_else(|| p.default_grid());
            let model = load_model(&checkpoint)?;
            let bundle = load_bundle(&data)?;
            let t = &bundle.test;
            let err = Failure::at(Stage::Eval);
            let curve = if p == Perturbation::Upscale {
                evalkit::fake_spurious_probe(&model, &model_id(&checkpoint), &t.reals, &grid)
            } else {
                evalkit::robustness_sweep(&model, &model_id(&checkpoint), &t.reals, &t.base_fakes, p, &grid, target, cfg.seed)
            }
            .map_err(&err)?;
            let mut csv = ResultsCsv::new(Vec::new()).map_err(&err)?;
            csv.curve(&curve).map_err(&err)?;
            write_output(&out, &csv.finish().map_err(&err)?)
        }
        Command::Decompose {
            common: _,
            checkpoint,
            data,
            out,
        } => {
            let model = load_model(&checkpoint)?;
            require(&data)?;
            let samples = if data.is_dir() {
                let t = load_bundle(&data)?.test;
                [t.reals, t.base_fakes, t.improved_fakes].concat()
            } else {
                read_dataset(&data).map_err(Failure::at(Stage::Data))?.1
            };
            let mut buf = Vec::new();
            write_decomposition_csv(&model, &samples, &mut buf).map_err(Failure::at(Stage::Eval))?;
            write_output(&out, &buf)
        }
        Command::Report { common: _, run, out } => {
            require(&run)?;
            let report = experiment::build_report(&run).map_err(Failure::at(Stage::Eval))?;
            let text = serde_json::to_string_pretty(&report).map_err(|e| Failure::at(Stage::Eval)(e.into()))?;
            write_output(&out.unwrap_or_else(|| run.join("report.json")), text.as_bytes())
        }
        Command::Run { common, out } => {
            let mut cfg = load_config(&common)?;
            if let Some(out) = out {
                cfg.out_dir = out;
            }
            let summary = experiment::run_full_experiment(&cfg)?;
            for c in &summary.checks {
                println!("[{}] {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            println!("results in {}", cfg.resolved_out_dir().display());
            Ok(())
        }
    }
}

fn model_id(checkpoint: &Path) -> String {
    checkpoint
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("model")
        .to_string()
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let record = serde_json::json!({
                "stage": f.stage,
                "exit_code": f.code,
                "message": f.message,
            });
            eprintln!("{record}");
            ExitCode::from(f.code)
        }
    }
}
