//! Commands behind the `wakesteer` binary: training runs, evaluation
//! sweeps, ablations, plot data and the self-test.

mod config;
mod eval;
mod selftest;

use std::fs;
use std::path::{Path, PathBuf};

pub use config::{parse_entries, EvalSettings, FarmSettings, LayoutSource, ModelSettings, RunConfig, TrainSettings};
pub use eval::{
    controller_label, eval_csv, evaluate, parse_eval_csv, read_eval_csv, summarize, write_eval_csv, Controller,
    ControllerSpec, DirectionSummary, EvalRecord, EVAL_HEADER,
};
pub use selftest::{selftest, SelfCheck};

use crate::baselines::BaselineKind;
use crate::error::{Error, Result};
use crate::policy::Policy;
use crate::ppo::{train, IterMetrics, TrainOutcome, TrainOutput};

pub const CONFIG_SNAPSHOT_NAME: &str = "config.txt";
pub const PLOT_HEADER: &str = "controller,direction,mean,var";

fn write_snapshot(cfg: &RunConfig, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(CONFIG_SNAPSHOT_NAME), cfg.snapshot())?;
    Ok(())
}

/// Trains one policy per configured seed, writing metrics and checkpoints
/// under `cfg.out`.
pub fn cmd_train(cfg: &RunConfig, mut progress: impl FnMut(u64, &IterMetrics)) -> Result<Vec<TrainOutcome>> {
    cfg.validate()?;
    let setup = cfg.train_setup()?;
    let model = cfg.model_config(setup.layout.n_turbines());
    write_snapshot(cfg, &cfg.out)?;
    let out = TrainOutput { dir: Some(cfg.out.clone()) };
    cfg.train
        .seeds
        .iter()
        .map(|&seed| {
            train(&setup, model.clone(), &cfg.ppo, seed, &out, |m, _| {
                progress(seed, m);
                Ok(())
            })
        })
        .collect()
}

pub fn eval_file_name(label: &str) -> String {
    format!("eval_{label}.csv")
}

/// Evaluates one controller and writes `eval_<label>.csv` under `cfg.out`.
pub fn cmd_eval(cfg: &RunConfig, spec: &ControllerSpec) -> Result<PathBuf> {
    cfg.validate()?;
    let n = cfg.layout()?.n_turbines();
    let controller = Controller::resolve(spec, cfg, n)?;
    let rows = summarize(&evaluate(cfg, &controller)?);
    let path = cfg.out.join(eval_file_name(&controller_label(spec)));
    write_eval_csv(&path, &rows)?;
    Ok(path)
}

/// Evaluates the given baselines, or all three when `kinds` is empty.
pub fn cmd_baseline(cfg: &RunConfig, kinds: &[BaselineKind]) -> Result<Vec<PathBuf>> {
    let all = [BaselineKind::Standard, BaselineKind::GaussSeidel, BaselineKind::Heuristic];
    let kinds = if kinds.is_empty() { &all[..] } else { kinds };
    kinds.iter().map(|&k| cmd_eval(cfg, &ControllerSpec::Baseline(k))).collect()
}

/// The reward ablations: unchanged, without wake-loss damping (`p = 0`)
/// and without the invalid-yaw penalty (`w0 = 0`).
pub fn ablation_variants(cfg: &RunConfig) -> Vec<(&'static str, RunConfig)> {
    let mut p0 = cfg.clone();
    p0.env.p = 0.0;
    let mut w0 = cfg.clone();
    w0.env.w0 = 0.0;
    vec![("default", cfg.clone()), ("p0", p0), ("w0", w0)]
}

/// Trains each ablation with the same seeds, then evaluates the final
/// policies of all seeds together. Writes `eval_ablate_<name>.csv` under `cfg.out`.
pub fn cmd_ablate(cfg: &RunConfig, mut progress: impl FnMut(&str, u64, &IterMetrics)) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let mut paths = Vec::new();
    for (name, mut variant) in ablation_variants(cfg) {
        variant.out = cfg.out.join(format!("ablate_{name}"));
        let outcomes = cmd_train(&variant, |seed, m| progress(name, seed, m))?;
        let mut records = Vec::new();
        for o in outcomes {
            records.extend(evaluate(&variant, &Controller::Policy(o.policy))?);
        }
        let path = cfg.out.join(eval_file_name(&format!("ablate_{name}")));
        write_eval_csv(&path, &summarize(&records))?;
        paths.push(path);
    }
    Ok(paths)
}

/// Controller name of an evaluation file: its stem without the `eval_` prefix.
pub fn plot_label(path: &Path) -> String {
    let stem = path.file_stem().map_or_else(String::new, |s| s.to_string_lossy().into_owned());
    stem.strip_prefix("eval_").map(str::to_owned).unwrap_or(stem)
}

/// Merges evaluation CSVs into long-format rows `controller,direction,mean,var`.
pub fn plotdata(inputs: &[PathBuf]) -> Result<String> {
    if inputs.is_empty() {
        return Err(Error::Config("plotdata needs at least one evaluation CSV".into()));
    }
    let mut s = format!("{PLOT_HEADER}\n");
    for path in inputs {
        let label = plot_label(path);
        for r in read_eval_csv(path)? {
            s.push_str(&format!("{label},{},{},{}\n", r.dir, r.mean_improvement_pct, r.var));
        }
    }
    Ok(s)
}

/// Loads a checkpoint written by `train` for the given iteration.
pub fn load_trained(dir: &Path, cfg: &RunConfig, seed: u64, iter: usize) -> Result<Policy> {
    Policy::load(&dir.join(crate::ppo::checkpoint_name(cfg.model.variant, seed, iter)))
}
