use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use wakesteer::harness::{
    cmd_ablate, cmd_baseline, cmd_eval, cmd_train, plotdata, selftest, ControllerSpec, RunConfig,
};
use wakesteer::policy::{Scale, Variant};
use wakesteer::Error;

const EXIT_USAGE: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

/// Wake-steering laboratory: train and evaluate yaw controllers on a simulated wind farm.
#[derive(Parser)]
#[command(name = "wakesteer", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    opts: Opts,
}

#[derive(Args)]
struct Opts {
    /// Flat `section.key = value` overrides on top of the profile.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// v0 (fully connected), v1 (graph attention) or v2 (attention).
    #[arg(long, global = true, value_parser = parse_with::<Variant>)]
    model: Option<Variant>,
    /// Profile: `paper` (full protocol) or `desk` (small, the default).
    #[arg(long, global = true, value_parser = parse_with::<Scale>)]
    scale: Option<Scale>,
    /// Train a single seed instead of `train.seeds`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (for `plotdata`, the output file).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// standard, gauss-seidel, heuristic or checkpoint:<path>.
    #[arg(long, global = true, value_parser = parse_with::<ControllerSpec>)]
    controller: Option<ControllerSpec>,
    /// Number of direction bins of an evaluation sweep.
    #[arg(long, global = true)]
    directions: Option<usize>,
    /// Held-out episodes per direction bin.
    #[arg(long = "eval-seeds", global = true)]
    eval_seeds: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Train one policy per seed; writes metrics CSVs and checkpoints.
    Train,
    /// Evaluate a controller over the direction sweep.
    Eval,
    /// Evaluate the non-learning controllers (all three unless --controller is given).
    Baseline,
    /// Train and evaluate the reward ablations (default, p=0, w0=0).
    Ablate,
    /// Merge evaluation CSVs into long-format plot data.
    Plotdata { inputs: Vec<PathBuf> },
    /// Run the built-in oracle checks.
    Selftest,
}

fn parse_with<T: std::str::FromStr<Err = Error>>(s: &str) -> Result<T, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn load_config(o: &Opts) -> Result<RunConfig, Error> {
    let text = match &o.config {
        Some(p) => std::fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?,
        None => String::new(),
    };
    let mut cfg = RunConfig::from_text(&text, o.scale, o.model)?;
    if let Some(s) = o.seed {
        cfg.train.seeds = vec![s];
    }
    if let Some(out) = &o.out {
        cfg.out = out.clone();
    }
    if let Some(d) = o.directions {
        cfg.eval.directions = d;
    }
    if let Some(s) = o.eval_seeds {
        cfg.eval.seeds = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_paths(paths: &[PathBuf]) {
    for p in paths {
        println!("{}", p.display());
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    let o = &cli.opts;
    match cli.command {
        Command::Train => {
            let cfg = load_config(o)?;
            let outcomes = cmd_train(&cfg, |seed, m| {
                eprintln!(
                    "seed {seed} iter {} reward {:.4} power_ratio {:.5} entropy {:.3}",
                    m.iter, m.mean_reward, m.mean_power_ratio, m.mean_entropy
                )
            })?;
            for o in outcomes {
                print_paths(&o.checkpoints);
            }
        }
        Command::Eval => {
            let cfg = load_config(o)?;
            let spec = o.controller.as_ref().ok_or_else(|| Error::Config("eval needs --controller".into()))?;
            print_paths(&[cmd_eval(&cfg, spec)?]);
        }
        Command::Baseline => {
            let cfg = load_config(o)?;
            let kinds = match &o.controller {
                None => vec![],
                Some(ControllerSpec::Baseline(k)) => vec![*k],
                Some(c) => return Err(Error::Config(format!("baseline takes a non-learning controller, got {c}"))),
            };
            print_paths(&cmd_baseline(&cfg, &kinds)?);
        }
        Command::Ablate => {
            let cfg = load_config(o)?;
            let paths = cmd_ablate(&cfg, |name, seed, m| {
                eprintln!("{name} seed {seed} iter {} reward {:.4}", m.iter, m.mean_reward)
            })?;
            print_paths(&paths);
        }
        Command::Plotdata { inputs } => {
            let text = plotdata(&inputs)?;
            match &o.out {
                Some(p) => std::fs::write(p, text)?,
                None => print!("{text}"),
            }
        }
        Command::Selftest => {
            let checks = selftest();
            for c in &checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            if checks.iter().any(|c| !c.passed) {
                return Err(Error::Numerical("self-test failed".into()));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if matches!(e, Error::Config(_)) { EXIT_USAGE } else { EXIT_RUNTIME })
        }
    }
}
