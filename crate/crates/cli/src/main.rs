//! `cosal`: command-line front end for the co-saliency pipeline.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use cosal_core::config::{config_load, ConfigOverrides, PipelineConfig};
use cosal_core::interchange::{self, REQUESTS_FILE};
use cosal_core::metrics::evaluate_dataset;
use cosal_core::pipeline::{run_group, Mode, RunOutcome};
use cosal_core::synth::{generate_dataset, SynthConfig};
use cosal_core::viz;
use rayon::prelude::*;

const EXIT_REQUESTED: u8 = 2;

#[derive(Parser)]
#[command(
    name = "cosal",
    version,
    about = "Training-free co-salient object detection"
)]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Predict co-salient masks for one or more group directories.
    Run(RunArgs),
    /// Score predictions against ground truth.
    Eval(EvalArgs),
    /// Generate synthetic groups with planted ground truth.
    Synth(SynthArgs),
    /// Render prediction overlays.
    Viz(VizArgs),
    /// Schema-check a group directory.
    Validate(ValidateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Oneshot,
    TwoPass,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Oneshot => Mode::Oneshot,
            ModeArg::TwoPass => Mode::TwoPass,
        }
    }
}

#[derive(Args)]
struct RunArgs {
    /// Group directory; repeat for several groups.
    #[arg(long = "group", required = true)]
    groups: Vec<PathBuf>,
    /// Output directory. With several groups, each gets a subdirectory
    /// named after its group directory.
    #[arg(long)]
    out: PathBuf,
    /// TOML or JSON file with configuration overrides.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "oneshot")]
    mode: ModeArg,
    /// Maximum number of groups processed concurrently.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[command(flatten)]
    overrides: OverrideArgs,
}

#[derive(Args, Default)]
struct OverrideArgs {
    #[arg(long)]
    tau_area: Option<f64>,
    #[arg(long)]
    tau_con: Option<f64>,
    #[arg(long)]
    r_min: Option<f64>,
    #[arg(long)]
    r_max: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long = "t-r")]
    t_r: Option<usize>,
    #[arg(long = "t")]
    t: Option<usize>,
    #[arg(long)]
    tau_fb: Option<f64>,
    #[arg(long)]
    tau_diff: Option<f64>,
    #[arg(long)]
    sem_percentile: Option<f64>,
}

impl OverrideArgs {
    fn to_overrides(&self) -> ConfigOverrides {
        ConfigOverrides {
            tau_area: self.tau_area,
            tau_con: self.tau_con,
            r_min: self.r_min,
            r_max: self.r_max,
            sigma: self.sigma,
            gamma: self.gamma,
            alpha: self.alpha,
            beta: self.beta,
            t_r: self.t_r,
            t: self.t,
            tau_fb: self.tau_fb,
            tau_diff: self.tau_diff,
            sem_percentile: self.sem_percentile,
            tie_break_policy: None,
        }
    }
}

#[derive(Args)]
struct EvalArgs {
    /// Directory of predicted maps.
    #[arg(long)]
    pred: PathBuf,
    /// Directory of ground-truth masks.
    #[arg(long)]
    gt: PathBuf,
    /// Where to write the JSON report.
    #[arg(long, default_value = "metrics.json")]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    groups: usize,
    #[arg(long, default_value_t = 5)]
    images_per_group: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct VizArgs {
    #[arg(long)]
    group: PathBuf,
    /// Directory holding `prediction_<id>.png` files.
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Optional directory of source images named `<image_id>.{png,jpg,jpeg}`.
    #[arg(long)]
    images: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    group: PathBuf,
}

enum GroupStatus {
    Done,
    Requested,
}

fn group_out_dir(out: &Path, group: &Path, several: bool) -> PathBuf {
    if !several {
        return out.to_path_buf();
    }
    let name = group
        .file_name()
        .map(|n| n.to_os_string())
        .unwrap_or_else(|| "group".into());
    out.join(name)
}

fn run_one(group: &Path, out: &Path, config: &PipelineConfig, mode: Mode) -> Result<GroupStatus> {
    match run_group(group, out, config, mode)? {
        RunOutcome::Completed(pred) => {
            log::info!(
                "{}: {} predictions written to {}",
                pred.report.group_id,
                pred.results.len(),
                out.display()
            );
            Ok(GroupStatus::Done)
        }
        RunOutcome::PrototypesRequested(req) => {
            let n = req.images.iter().map(|i| i.masks.len()).sum::<usize>();
            println!(
                "{}: {n} prototypes requested in {}",
                req.group_id,
                group.join(REQUESTS_FILE).display()
            );
            Ok(GroupStatus::Requested)
        }
    }
}

fn cmd_run(args: &RunArgs) -> Result<ExitCode> {
    let config = config_load(args.config.as_deref(), &args.overrides.to_overrides())?;
    let mode = Mode::from(args.mode);
    let several = args.groups.len() > 1;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.jobs.max(1))
        .build()
        .context("building the worker pool")?;
    let statuses: Vec<Result<GroupStatus>> = pool.install(|| {
        args.groups
            .par_iter()
            .map(|g| run_one(g, &group_out_dir(&args.out, g, several), &config, mode))
            .collect()
    });
    let mut failed = false;
    let mut requested = false;
    for (group, status) in args.groups.iter().zip(statuses) {
        match status {
            Ok(GroupStatus::Done) => {}
            Ok(GroupStatus::Requested) => requested = true,
            Err(e) => {
                failed = true;
                eprintln!("error: {}: {e:#}", group.display());
            }
        }
    }
    Ok(if failed {
        ExitCode::FAILURE
    } else if requested {
        ExitCode::from(EXIT_REQUESTED)
    } else {
        ExitCode::SUCCESS
    })
}

fn cmd_eval(args: &EvalArgs) -> Result<ExitCode> {
    let report = evaluate_dataset(&args.pred, &args.gt)?;
    print!("{}", report.table());
    interchange::write_json(&args.out, &report)?;
    if report.n_images == 0 {
        bail!("no prediction matched a ground-truth file");
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_synth(args: &SynthArgs) -> Result<ExitCode> {
    let config = SynthConfig {
        seed: args.seed,
        n_images: args.images_per_group,
        ..SynthConfig::default()
    };
    for dir in generate_dataset(&args.out, &config, args.groups)? {
        println!("{}", dir.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_viz(args: &VizArgs) -> Result<ExitCode> {
    let summary = viz::viz_group(&args.group, &args.pred, &args.out, args.images.as_deref())?;
    for w in &summary.warnings {
        eprintln!("warning: {w}");
    }
    println!(
        "{} overlays written to {}",
        summary.written.len(),
        args.out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_validate(args: &ValidateArgs) -> Result<ExitCode> {
    let problems = interchange::validate_dir(&args.group);
    if problems.is_empty() {
        println!("{}: ok", args.group.display());
        return Ok(ExitCode::SUCCESS);
    }
    for p in &problems {
        println!("{p}");
    }
    println!("{}: {} problem(s)", args.group.display(), problems.len());
    Ok(ExitCode::FAILURE)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).init();
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Viz(a) => cmd_viz(a),
        Command::Validate(a) => cmd_validate(a),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e:#}");
        ExitCode::FAILURE
    })
}
