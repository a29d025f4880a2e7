//! Held-out evaluation sweeps over direction bins.

use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::baselines::{gauss_seidel_controller, heuristic_controller, standard_controller, BaselineKind};
use crate::env::WffcEnv;
use crate::error::{Error, Result};
use crate::policy::Policy;
use crate::ppo::run_episodes;
use crate::rng::evaluation_episode_seed;
use crate::wind::FORECAST_HORIZON;

use super::config::RunConfig;

/// A controller as named on the command line.
#[derive(Debug, Clone, PartialEq)]
pub enum ControllerSpec {
    Baseline(BaselineKind),
    Checkpoint(PathBuf),
}

impl FromStr for ControllerSpec {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.strip_prefix("checkpoint:") {
            Some(p) if !p.is_empty() => Ok(Self::Checkpoint(PathBuf::from(p))),
            Some(_) => Err(Error::Config("checkpoint: needs a path".into())),
            None => Ok(Self::Baseline(s.parse()?)),
        }
    }
}

impl Display for ControllerSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ControllerSpec::Baseline(k) => write!(f, "{k}"),
            ControllerSpec::Checkpoint(p) => write!(f, "checkpoint:{}", p.display()),
        }
    }
}

/// A controller ready to run.
#[derive(Debug, Clone)]
pub enum Controller {
    Baseline(BaselineKind, [f64; FORECAST_HORIZON + 1]),
    Policy(Policy),
}

impl Controller {
    /// Loads checkpoints. A missing or mismatched checkpoint is a configuration error.
    pub fn resolve(spec: &ControllerSpec, cfg: &RunConfig, n_turbines: usize) -> Result<Self> {
        match spec {
            ControllerSpec::Baseline(kind) => Ok(Self::Baseline(*kind, cfg.horizon_weights)),
            ControllerSpec::Checkpoint(path) => {
                let policy = Policy::load(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
                if policy.config().n_turbines != n_turbines {
                    return Err(Error::Config(format!(
                        "{} was trained for {} turbines, layout has {n_turbines}",
                        path.display(),
                        policy.config().n_turbines
                    )));
                }
                Ok(Self::Policy(policy))
            }
        }
    }
}

/// Short name used in file names and plot data.
pub fn controller_label(spec: &ControllerSpec) -> String {
    match spec {
        ControllerSpec::Baseline(k) => k.to_string(),
        ControllerSpec::Checkpoint(p) => p.file_stem().map_or("checkpoint".into(), |s| s.to_string_lossy().into_owned()),
    }
}

/// One held-out episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    pub dir: usize,
    pub seed: u64,
    pub energy_mwh: f64,
    pub standard_energy_mwh: f64,
    /// `100·(E − E_std)/E_std`.
    pub improvement_pct: f64,
    /// Mean over steps of the perfect-tracking wake losses.
    pub mean_wake_losses: f64,
}

/// One row of an evaluation CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionSummary {
    pub dir: usize,
    pub mean_improvement_pct: f64,
    /// Population variance over the bin's episodes.
    pub var: f64,
    pub mean_wake_losses: f64,
}

pub const EVAL_HEADER: &str = "dir,mean_improvement_pct,var,mean_wake_losses";

/// `(bin, eval seed index)` pairs in output order.
fn episode_keys(directions: usize, seeds: usize) -> Vec<(usize, usize)> {
    (0..directions).flat_map(|d| (0..seeds).map(move |s| (d, s))).collect()
}

fn make_env(cfg: &RunConfig, setup: &crate::ppo::TrainSetup, dir: usize, seed_index: usize) -> Result<(u64, WffcEnv)> {
    let w = (cfg.eval.k0_max - cfg.eval.k0_min) / cfg.eval.directions as f64;
    let lo = cfg.eval.k0_min + w * dir as f64;
    let seed = evaluation_episode_seed(seed_index as u64, dir as u64);
    Ok((seed, setup.make_env(seed, (lo, lo + w))?))
}

/// Energy and mean reference wake losses of one baseline episode.
fn run_baseline(kind: BaselineKind, weights: &[f64; FORECAST_HORIZON + 1], mut env: WffcEnv) -> Result<(f64, f64)> {
    let layout = env.layout().clone();
    let model = *env.turbine();
    let (mut energy, mut losses, mut steps) = (0.0, 0.0, 0usize);
    while !env.is_done() {
        let s = env.state();
        let d = match kind {
            BaselineKind::Standard => standard_controller(s),
            BaselineKind::GaussSeidel => gauss_seidel_controller(&layout, &model, s)?,
            BaselineKind::Heuristic => heuristic_controller(&layout, &model, s, weights)?,
        };
        let r = env.step(&d.actions)?;
        energy += r.energy_mwh;
        losses += r.wake_losses;
        steps += 1;
    }
    Ok((energy, losses / steps as f64))
}

/// Maps `f` over `items`, in parallel when the `parallel` feature is on.
/// Output order follows input order.
fn par_map<T: Sync, U: Send>(items: &[T], f: impl Fn(&T) -> Result<U> + Sync + Send) -> Result<Vec<U>> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Runs every `(direction bin, held-out seed)` episode with `controller`
/// and with the standard controller on the same wind.
pub fn evaluate(cfg: &RunConfig, controller: &Controller) -> Result<Vec<EvalRecord>> {
    let setup = cfg.train_setup()?;
    let keys = episode_keys(cfg.eval.directions, cfg.eval.seeds);
    let envs = keys.iter().map(|&(d, s)| make_env(cfg, &setup, d, s)).collect::<Result<Vec<_>>>()?;
    let standard = par_map(&envs, |(_, env)| run_baseline(BaselineKind::Standard, &cfg.horizon_weights, env.clone()))?;
    let energies: Vec<f64> = match controller {
        Controller::Baseline(BaselineKind::Standard, _) => standard.iter().map(|r| r.0).collect(),
        Controller::Baseline(kind, weights) => {
            par_map(&envs, |(_, env)| Ok(run_baseline(*kind, weights, env.clone())?.0))?
        }
        Controller::Policy(p) => {
            if p.config().n_turbines != setup.layout.n_turbines() {
                return Err(Error::Config("policy and layout disagree on the turbine count".into()));
            }
            run_episodes(&p.arch, &p.params, envs.clone(), true)?.iter().map(|e| e.energy_mwh()).collect()
        }
    };
    Ok(keys
        .iter()
        .zip(&envs)
        .zip(energies.iter().zip(&standard))
        .map(|((&(dir, _), (seed, _)), (&e, &(e_std, losses)))| EvalRecord {
            dir,
            seed: *seed,
            energy_mwh: e,
            standard_energy_mwh: e_std,
            improvement_pct: 100.0 * (e - e_std) / e_std,
            mean_wake_losses: losses,
        })
        .collect())
}

/// Per-bin mean and variance of the improvement, bins in ascending order.
pub fn summarize(records: &[EvalRecord]) -> Vec<DirectionSummary> {
    let n_dirs = records.iter().map(|r| r.dir + 1).max().unwrap_or(0);
    (0..n_dirs)
        .filter_map(|d| {
            let rs: Vec<&EvalRecord> = records.iter().filter(|r| r.dir == d).collect();
            if rs.is_empty() {
                return None;
            }
            let n = rs.len() as f64;
            let mean = rs.iter().map(|r| r.improvement_pct).sum::<f64>() / n;
            let var = rs.iter().map(|r| (r.improvement_pct - mean).powi(2)).sum::<f64>() / n;
            let losses = rs.iter().map(|r| r.mean_wake_losses).sum::<f64>() / n;
            Some(DirectionSummary { dir: d, mean_improvement_pct: mean, var, mean_wake_losses: losses })
        })
        .collect()
}

pub fn eval_csv(rows: &[DirectionSummary]) -> String {
    let mut s = format!("{EVAL_HEADER}\n");
    for r in rows {
        s.push_str(&format!("{},{},{},{}\n", r.dir, r.mean_improvement_pct, r.var, r.mean_wake_losses));
    }
    s
}

pub fn write_eval_csv(path: &Path, rows: &[DirectionSummary]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, eval_csv(rows)).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

/// Parses an evaluation CSV. A wrong header or a malformed row is a configuration error.
pub fn parse_eval_csv(text: &str) -> Result<Vec<DirectionSummary>> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(EVAL_HEADER) {
        return Err(Error::Config(format!("expected header {EVAL_HEADER:?}")));
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, line)| {
            let bad = || Error::Config(format!("row {}: malformed {line:?}", i + 1));
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            if cols.len() != 4 {
                return Err(bad());
            }
            let num = |c: &str| c.parse::<f64>().map_err(|_| bad());
            Ok(DirectionSummary {
                dir: cols[0].parse().map_err(|_| bad())?,
                mean_improvement_pct: num(cols[1])?,
                var: num(cols[2])?,
                mean_wake_losses: num(cols[3])?,
            })
        })
        .collect()
}

pub fn read_eval_csv(path: &Path) -> Result<Vec<DirectionSummary>> {
    let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    parse_eval_csv(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}
