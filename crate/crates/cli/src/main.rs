use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use dyncable::trajgen::Action;
use dyncable_cli::config::{ExperimentConfig, World};
use dyncable_cli::stages::{self, Cable, Context, ModelChoice};
use dyncable_cli::CliError;

#[derive(Parser)]
#[command(name = "dyncable", version, about = "Dynamic free-end cable manipulation pipeline")]
struct Cli {
    /// Experiment config (JSON). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, overriding the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Use the full-size grids and datasets instead of the desk-scale ones.
    #[arg(long, global = true)]
    full_scale: bool,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum DataKind {
    Tune,
    Sim,
    Real,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Mlp,
    Gp,
    All,
}

#[derive(Clone, Copy, ValueEnum)]
enum CableArg {
    Sim,
    Tuned,
    Real,
}

#[derive(Clone, Copy, ValueEnum)]
enum WorldArg {
    Sim,
    Real,
}

#[derive(Subcommand)]
enum Cmd {
    /// Roll out one action and write its endpoint trace.
    Simulate {
        /// θ1,θ2,r2 or θ1,θ2,r2,ψ
        #[arg(long, allow_hyphen_values = true, conflicts_with = "action_file")]
        action: Option<String>,
        /// JSON file holding one action.
        #[arg(long)]
        action_file: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "sim")]
        cable: CableArg,
        /// Trace CSV path (default: <out>/simulate/trace.csv).
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Generate reference trajectories or transition datasets.
    GenData {
        #[arg(long, value_enum)]
        kind: DataKind,
    },
    /// Fit the simulator parameters to the reference trajectories.
    Tune {
        /// Training reference manifest (default: <out>/refs/train_manifest.json).
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Train forward models.
    Train {
        #[arg(long, value_enum, default_value = "all")]
        model: ModelArg,
    },
    /// Evaluate policies on the target set.
    Eval {
        /// Models to evaluate (default: every trained one).
        #[arg(long = "model", value_delimiter = ',')]
        models: Vec<String>,
        /// Also evaluate the polar-casting baseline.
        #[arg(long)]
        polar_cast: bool,
        #[arg(long, value_enum)]
        world: Option<WorldArg>,
    },
    /// Workspace coverage of each configured action set.
    Coverage,
    /// Endpoint repeatability under increasing perturbation.
    Repeat,
    /// Every stage in order.
    Pipeline,
}

fn context(cli: &Cli) -> Result<Context, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if cli.full_scale {
        cfg.full_scale();
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    if let Cmd::Eval { world: Some(w), .. } = &cli.cmd {
        cfg.eval.world = match w {
            WorldArg::Sim => World::Sim,
            WorldArg::Real => World::Real,
        };
    }
    Context::new(cfg)
}

fn print_table(rows: &[stages::TableRow]) {
    println!("{:<22} {:>7} {:>9} {:>9} {:>9} {:>9}", "policy", "trials", "off_table", "rejected", "median_%", "iqr_%");
    for r in rows {
        let f = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.2}"));
        let iqr = match (r.q1_pct, r.q3_pct) {
            (Some(a), Some(b)) => format!("{:.2}", b - a),
            _ => "-".into(),
        };
        println!(
            "{:<22} {:>7} {:>9} {:>9} {:>9} {:>9}",
            r.policy,
            r.trials,
            r.off_table,
            r.rejected_targets,
            f(r.median_pct),
            iqr
        );
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(CliError::Config("--workers must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    let ctx = context(cli)?;
    match &cli.cmd {
        Cmd::Simulate { action, action_file, cable, trace } => {
            let action: Action = match (action, action_file) {
                (Some(s), _) => stages::parse_action(s)?,
                (None, Some(p)) => serde_json::from_str(&std::fs::read_to_string(p)?)
                    .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?,
                (None, None) => return Err(CliError::Config("give --action or --action-file".into())),
            };
            let cable = match cable {
                CableArg::Sim => Cable::Sim,
                CableArg::Tuned => Cable::Tuned,
                CableArg::Real => Cable::Real,
            };
            let r = ctx.stage("simulate", |c| stages::run_simulate(c, &action, cable, trace.as_deref()))?;
            println!(
                "endpoint x={:.4} y={:.4} m, r={:.4} m, θ={:.4} rad (settled after {:.2} s)",
                r.endpoint.x, r.endpoint.y, r.endpoint_polar.r, r.endpoint_polar.theta, r.settle_time
            );
        }
        Cmd::GenData { kind } => {
            let msg = match kind {
                DataKind::Tune => ctx.stage("gen-data tune", stages::gen_tune_data)?,
                DataKind::Sim => ctx.stage("gen-data sim", stages::gen_sim_data)?,
                DataKind::Real => ctx.stage("gen-data real", stages::gen_real_data)?,
            };
            println!("{msg}");
        }
        Cmd::Tune { manifest } => {
            let s = ctx.stage("tune", |c| stages::run_tune(c, manifest.as_deref()))?;
            print!("{}", stages::describe_tune(&s));
        }
        Cmd::Train { model } => {
            let choice = match model {
                ModelArg::Mlp => ModelChoice::Mlp,
                ModelArg::Gp => ModelChoice::Gp,
                ModelArg::All => ModelChoice::All,
            };
            for r in ctx.stage("train", |c| stages::run_train(c, choice))? {
                let med = r.real_holdout_median.map_or("-".into(), |m| format!("{m:.4} m"));
                println!("{}: held-out median error {med}", r.name);
            }
        }
        Cmd::Eval { models, polar_cast, .. } => {
            let rows = ctx.stage("eval", |c| stages::run_eval(c, models, *polar_cast))?;
            print_table(&rows);
        }
        Cmd::Coverage => {
            let rep = ctx.stage("coverage", stages::run_coverage)?;
            for r in &rep.runs {
                println!("{:<12} {:>5} endpoints  coverage {:.1}%", r.label, r.endpoints, 100.0 * r.fraction);
            }
        }
        Cmd::Repeat => {
            for l in ctx.stage("repeat", stages::run_repeat)? {
                println!(
                    "noise x{}: mean std {:.4} m ({:.2}%), {} actions excluded",
                    l.level, l.stats.mean_std, l.stats.mean_std_pct, l.stats.excluded
                );
            }
        }
        Cmd::Pipeline => {
            for line in stages::run_pipeline(&ctx)? {
                println!("{line}");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
