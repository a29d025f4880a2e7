use std::path::Path;
use std::process::{Command, Output};

fn wakesteer(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wakesteer")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn tiny_config(dir: &Path) -> String {
    let path = dir.join("tiny.cfg");
    std::fs::write(
        &path,
        "ppo.training_steps = 2\nppo.episodes_per_iter = 2\nppo.train_batch = 36\nppo.minibatch = 18\nppo.epochs = 1\n",
    )
    .unwrap();
    path.display().to_string()
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(code(&wakesteer(&[])), 2);
    assert_eq!(code(&wakesteer(&["fly"])), 2);
    assert_eq!(code(&wakesteer(&["eval", "--model", "v9"])), 2);
    assert_eq!(code(&wakesteer(&["eval"])), 2);
    assert_eq!(code(&wakesteer(&["plotdata"])), 2);
    assert_eq!(code(&wakesteer(&["train", "--config", "/nonexistent/run.cfg"])), 2);
    assert_eq!(code(&wakesteer(&["--help"])), 0);
}

#[test]
fn unknown_config_keys_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "ppo.learning_rate = 0.1\n").unwrap();
    let o = wakesteer(&["train", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown key"));
}

#[test]
fn missing_checkpoint_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().display().to_string();
    let o = wakesteer(&["eval", "--controller", "checkpoint:/nonexistent/v2_0_1.ckpt", "--out", &out]);
    assert_eq!(code(&o), 2);
}

#[test]
fn train_then_eval_checkpoint_then_plot() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let out = dir.path().join("run").display().to_string();
    let o = wakesteer(&["train", "--config", &cfg, "--seed", "3", "--out", &out]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let ckpt = Path::new(&out).join("v2_3_2.ckpt");
    assert!(ckpt.exists());
    assert!(Path::new(&out).join("metrics_v2_3.csv").exists());

    let controller = format!("checkpoint:{}", ckpt.display());
    let args = ["eval", "--controller", &controller, "--directions", "2", "--eval-seeds", "1", "--out", &out];
    assert_eq!(code(&wakesteer(&args)), 0);
    let a = std::fs::read_to_string(Path::new(&out).join("eval_v2_3_2.csv")).unwrap();
    assert_eq!(a.lines().next().unwrap(), "dir,mean_improvement_pct,var,mean_wake_losses");
    assert_eq!(a.lines().count(), 3);
    assert_eq!(code(&wakesteer(&args)), 0);
    let b = std::fs::read_to_string(Path::new(&out).join("eval_v2_3_2.csv")).unwrap();
    assert_eq!(a, b);

    let o = wakesteer(&["baseline", "--controller", "standard", "--directions", "2", "--eval-seeds", "1", "--out", &out]);
    assert_eq!(code(&o), 0);
    let plot = dir.path().join("plot.csv");
    let inputs = [Path::new(&out).join("eval_v2_3_2.csv"), Path::new(&out).join("eval_standard.csv")];
    let o = wakesteer(&[
        "plotdata",
        inputs[0].to_str().unwrap(),
        inputs[1].to_str().unwrap(),
        "--out",
        plot.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    let text = std::fs::read_to_string(plot).unwrap();
    assert_eq!(text.lines().next().unwrap(), "controller,direction,mean,var");
    assert!(text.contains("\nv2_3_2,1,"));
    assert!(text.contains("\nstandard,0,0,0\n"));
}

#[test]
fn runtime_failures_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "").unwrap();
    let out = blocker.join("run").display().to_string();
    assert_eq!(code(&wakesteer(&["train", "--config", &cfg, "--out", &out])), 3);
}

#[test]
fn baseline_rejects_checkpoints() {
    let o = wakesteer(&["baseline", "--controller", "checkpoint:x.ckpt"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn selftest_passes() {
    let o = wakesteer(&["selftest"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.lines().all(|l| l.starts_with("PASS")), "{text}");
}
