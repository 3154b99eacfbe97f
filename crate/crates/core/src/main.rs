use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ponnet::harness::gradcheck::gradient_suite;
use ponnet::harness::{
    baseline_metrics, default_grid, evaluate, export_attention_overlay, load_dataset, run_ablation, run_collision_types, train_with,
    AblationReport, AblationRow, Cell, Metrics, TrainConfig,
};
use ponnet::model::PonNet;
use ponnet::placesim::{dataset::DEFAULT_RATIOS, generate_dataset, GenConfig, Split};
use ponnet::planedet::BaselineParams;
use ponnet::{Error, Result};

const CHECKPOINT_FILE: &str = "model.ckpt";
const TRAIN_CONFIG_FILE: &str = "train_config.json";
/// Worker thread count. Execution is single-threaded, so every accepted value
/// gives identical results.
const THREADS_ENV: &str = "PONNET_THREADS";

fn check_threads() -> Result<()> {
    match std::env::var(THREADS_ENV) {
        Ok(v) if v.trim().parse::<usize>().map_or(true, |n| n == 0) => {
            Err(Error::Config(format!("{THREADS_ENV} must be a positive integer, got {v:?}")))
        }
        _ => Ok(()),
    }
}

#[derive(Parser)]
#[command(name = "ponnet", version, about = "Damaging-collision prediction: data, training and evaluation")]
struct Cli {
    /// Base seed (overrides the config file).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// JSON config: generation config for gen-data, training config otherwise.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset.
    GenData {
        #[arg(long)]
        n: usize,
        /// Train/validation/test ratios.
        #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = DEFAULT_RATIOS)]
        ratios: Vec<f64>,
    },
    /// Train one model and evaluate its best-validation checkpoint.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Evaluate a trained run directory on a split.
    Eval {
        #[arg(long)]
        data: PathBuf,
        /// Directory written by `train`.
        #[arg(long)]
        run: PathBuf,
        #[arg(long, default_value = "test", value_parser = parse_split)]
        split: Split,
    },
    /// Variant × input-mode ablation over trial seeds.
    Ablate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 5)]
        trials: usize,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Five-head collision-type study over trial seeds.
    CollisionTypes {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 5)]
        trials: usize,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Export attention overlays for one sample.
    Overlay {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        run: PathBuf,
        /// Index within the split.
        #[arg(long, default_value_t = 0)]
        sample: usize,
        #[arg(long, default_value = "test", value_parser = parse_split)]
        split: Split,
    },
    /// Finite-difference checks of every operator and the micro model.
    Gradcheck {
        #[arg(long, default_value_t = 10)]
        seeds: u64,
    },
    /// Plane-detection baseline on a split.
    Baseline {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "test", value_parser = parse_split)]
        split: Split,
    },
}

fn parse_split(s: &str) -> std::result::Result<Split, String> {
    match s {
        "train" => Ok(Split::Train),
        "valid" | "val" => Ok(Split::Valid),
        "test" => Ok(Split::Test),
        other => Err(format!("unknown split `{other}` (train, valid, test)")),
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let p = dir.join(name);
    fs::write(&p, contents).map_err(|e| Error::io(&p, e))
}

fn train_config(cli: &Cli, epochs: Option<usize>) -> Result<TrainConfig> {
    let mut cfg = match &cli.config {
        Some(p) => TrainConfig::from_json(&read(p)?)?,
        None => TrainConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(e) = epochs {
        cfg.epochs = e;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load_run(run: &Path) -> Result<(TrainConfig, PonNet)> {
    let cfg = TrainConfig::from_json(&read(&run.join(TRAIN_CONFIG_FILE))?)?;
    let model = PonNet::load(cfg.model_config(), &run.join(CHECKPOINT_FILE))?;
    Ok((cfg, model))
}

fn print_row(r: &AblationRow) {
    match &r.error {
        Some(e) => eprintln!("{} {}: failed: {e}", r.method, r.input),
        None => eprintln!("{} {}: {:?}", r.method, r.input, r.mean),
    }
}

fn write_report(out: &Path, stem: &str, report: &AblationReport) -> Result<()> {
    write(out, &format!("{stem}.json"), &report.to_json())?;
    write(out, &format!("{stem}.txt"), &report.table())?;
    print!("{}", report.table());
    Ok(())
}

fn write_metrics(out: &Path, stem: &str, m: &Metrics) -> Result<()> {
    write(out, &format!("{stem}.json"), &m.to_json())?;
    let mut text = String::new();
    for (h, name) in m.heads.iter().enumerate() {
        text.push_str(&format!("{name}: accuracy {:.2}%\n", 100.0 * m.head_accuracy[h]));
        text.push_str(&m.confusion_table(h));
    }
    write(out, &format!("{stem}.txt"), &text)?;
    print!("{text}");
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("ponnet-out"));
    match &cli.command {
        Command::GenData { n, ratios } => {
            let cfg = match &cli.config {
                Some(p) => serde_json::from_str::<GenConfig>(&read(p)?).map_err(|e| Error::Config(e.to_string()))?,
                None => GenConfig::default(),
            };
            let m = generate_dataset(*n, cli.seed.unwrap_or(0), [ratios[0], ratios[1], ratios[2]], &cfg, &out)?;
            print!("{}", m.stats.table());
        }
        Command::Train { data, epochs } => {
            let cfg = train_config(cli, *epochs)?;
            let ds = load_dataset(data, cfg.model.input_side)?;
            let mut outcome =
                train_with(&cfg, &ds, |e| eprintln!("epoch {:>3}  loss {:.5}  val {:.4}", e.epoch, e.train_loss, e.val_accuracy))?;
            fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
            outcome.model.save(&out.join(CHECKPOINT_FILE))?;
            write(&out, TRAIN_CONFIG_FILE, &cfg.to_json())?;
            let mut m = evaluate(&mut outcome.model, &ds, Split::Test)?;
            m.attach_training(cfg.seed, &outcome);
            write_metrics(&out, "metrics", &m)?;
        }
        Command::Eval { data, run, split } => {
            let (cfg, mut model) = load_run(run)?;
            let ds = load_dataset(data, cfg.model.input_side)?;
            let m = evaluate(&mut model, &ds, *split)?;
            write_metrics(&out, &format!("eval_{}", split_name(*split)), &m)?;
        }
        Command::Ablate { data, trials, epochs } => {
            let cfg = train_config(cli, *epochs)?;
            let ds = load_dataset(data, cfg.model.input_side)?;
            let report = run_ablation(&default_grid(), &ds, &cfg, *trials, cfg.seed, print_row)?;
            write_report(&out, "ablation", &report)?;
        }
        Command::CollisionTypes { data, trials, epochs } => {
            let cfg = train_config(cli, *epochs)?;
            let ds = load_dataset(data, cfg.model.input_side)?;
            let grid: Vec<Cell> = default_grid().into_iter().filter(|c| *c != Cell::Baseline).collect();
            let report = run_collision_types(&grid, &ds, &cfg, *trials, cfg.seed, print_row)?;
            write_report(&out, "collision_types", &report)?;
        }
        Command::Overlay { data, run, sample, split } => {
            let (cfg, mut model) = load_run(run)?;
            let ds = load_dataset(data, cfg.model.input_side)?;
            for p in export_attention_overlay(&mut model, &ds, *split, *sample, &out)? {
                println!("{}", p.display());
            }
        }
        Command::Gradcheck { seeds } => {
            let lines = gradient_suite(*seeds)?;
            let mut failed = 0;
            for l in &lines {
                println!(
                    "{:<24} seed {:>2}  max rel err {:.3e}  (< {:.0e})  {}",
                    l.name,
                    l.seed,
                    l.max_rel_error,
                    l.tolerance,
                    if l.passed { "ok" } else { "FAIL" }
                );
                failed += usize::from(!l.passed);
            }
            if cli.out.is_some() {
                write(&out, "gradcheck.json", &serde_json::to_string_pretty(&lines).expect("serializes"))?;
            }
            if failed > 0 {
                return Err(Error::Input(format!("{failed} gradient checks failed")));
            }
        }
        Command::Baseline { data, split } => {
            let ds = load_dataset(data, TrainConfig::default().model.input_side)?;
            let m = baseline_metrics(&ds, *split, &BaselineParams::default())?;
            write_metrics(&out, &format!("baseline_{}", split_name(*split)), &m)?;
        }
    }
    Ok(())
}

fn split_name(s: Split) -> &'static str {
    match s {
        Split::Train => "train",
        Split::Valid => "valid",
        Split::Test => "test",
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match check_threads().and_then(|()| run(&cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
