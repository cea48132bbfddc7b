//! End-to-end tests of the `fanet` binary: artifact layout, exit codes, and
//! byte-level reproducibility of the CSV outputs.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn fanet_bin() -> &'static str {
    env!("CARGO_BIN_EXE_fanet")
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    Command::new(fanet_bin())
        .current_dir(dir)
        .args(args)
        .output()
        .expect("failed to spawn fanet binary")
}

fn tiny_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("tiny.cfg");
    fs::write(
        &path,
        "master_seed = 11\n\
         array.n_elements = 8\n\
         grid.bins = 16\n\
         net.embed_dim = 16\n\
         net.attn_dim = 8\n\
         net.hidden_dim = 16\n\
         train.n_signals = 64\n\
         train.epochs = 2\n\
         train.batch_size = 32\n\
         train.holdout_signals = 8\n\
         iht.max_iters = 50\n\
         sweep.snrs_db = 10,30\n\
         sweep.trials = 5\n\
         sweep.missing = 3\n\
         eval.bf_points = 64\n",
    )
    .unwrap();
    path
}

fn assert_success(out: &Output) {
    assert!(
        out.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn exit_code(out: &Output) -> i32 {
    out.status.code().expect("no exit code")
}

#[test]
fn gen_writes_reproducible_dataset() {
    let dir = tempfile::tempdir().unwrap();
    tiny_config(dir.path());
    let out = run_in(dir.path(), &["gen", "--config", "tiny.cfg", "--out", "a"]);
    assert_success(&out);
    let out = run_in(dir.path(), &["gen", "--config", "tiny.cfg", "--out", "b"]);
    assert_success(&out);
    let a = fs::read(dir.path().join("a/dataset.fads")).unwrap();
    let b = fs::read(dir.path().join("b/dataset.fads")).unwrap();
    assert!(!a.is_empty());
    assert_eq!(a, b);
    assert!(dir.path().join("a/config_resolved.cfg").exists());
}

#[test]
fn train_sweep_reconstruct_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    tiny_config(dir.path());
    let out = run_in(dir.path(), &["train", "--config", "tiny.cfg", "--out", "run"]);
    assert_success(&out);
    let weights = dir.path().join("run/weights.fanw");
    assert!(weights.exists());
    let log = fs::read_to_string(dir.path().join("run/training_log.csv")).unwrap();
    let lines: Vec<&str> = log.lines().collect();
    assert_eq!(lines[0], "epoch,mean_loss,wall_seconds");
    assert_eq!(lines.len(), 3, "two epochs expected: {log}");

    // resolved config re-runs to identical outputs
    let out = run_in(
        dir.path(),
        &["train", "--config", "run/config_resolved.cfg", "--out", "run2"],
    );
    assert_success(&out);
    assert_eq!(
        fs::read(&weights).unwrap(),
        fs::read(dir.path().join("run2/weights.fanw")).unwrap()
    );

    let out = run_in(
        dir.path(),
        &[
            "sweep",
            "--config",
            "tiny.cfg",
            "--checkpoint",
            "run/weights.fanw",
            "--out",
            "sw",
        ],
    );
    assert_success(&out);
    let records = fs::read_to_string(dir.path().join("sw/records.csv")).unwrap();
    let lines: Vec<&str> = records.lines().collect();
    assert_eq!(lines[0], "trial_id,snr_db,missing_idx,method,mse");
    // 2 SNRs x 5 trials x 3 methods
    assert_eq!(lines.len(), 1 + 30, "{records}");
    let summary = fs::read_to_string(dir.path().join("sw/summary.csv")).unwrap();
    assert!(summary.starts_with("snr_db,method,mean_mse,stderr_mse,n_trials"));
    assert_eq!(summary.lines().count(), 1 + 6);

    // byte-identical on repeat, with a thread cap in place
    let out = run_in(
        dir.path(),
        &[
            "sweep",
            "--config",
            "tiny.cfg",
            "--checkpoint",
            "run/weights.fanw",
            "--out",
            "sw2",
            "--threads",
            "2",
        ],
    );
    assert_success(&out);
    assert_eq!(
        fs::read(dir.path().join("sw/records.csv")).unwrap(),
        fs::read(dir.path().join("sw2/records.csv")).unwrap()
    );

    let out = run_in(
        dir.path(),
        &[
            "reconstruct",
            "--config",
            "tiny.cfg",
            "--checkpoint",
            "run/weights.fanw",
            "--out",
            "rec",
            "--snr-db",
            "10",
            "--targets",
            "8:1:0;-5:0.7:1.2",
            "--missing-count",
            "3",
        ],
    );
    assert_success(&out);
    for name in [
        "spectrum_clean.csv",
        "spectrum_sparse.csv",
        "spectrum_iht.csv",
        "spectrum_fanet.csv",
        "sparse_geometry.csv",
    ] {
        let text = fs::read_to_string(dir.path().join("rec").join(name)).unwrap();
        assert!(!text.is_empty(), "{name} is empty");
    }
    let spectrum = fs::read_to_string(dir.path().join("rec/spectrum_fanet.csv")).unwrap();
    assert!(spectrum.starts_with("# curve: fanet"));
    assert!(spectrum.contains("angle_deg,power_db"));
    // 64 evaluation angles
    assert_eq!(
        spectrum.lines().filter(|l| !l.starts_with('#')).count(),
        1 + 64
    );
    let geometry = fs::read_to_string(dir.path().join("rec/sparse_geometry.csv")).unwrap();
    assert!(geometry.starts_with("# missing_idx:"));
    assert_eq!(geometry.lines().count(), 1 + 1 + 8);

    // degenerate mask: explicit empty missing list keeps the full array
    let out = run_in(
        dir.path(),
        &[
            "reconstruct",
            "--config",
            "tiny.cfg",
            "--checkpoint",
            "run/weights.fanw",
            "--out",
            "rec_full",
            "--targets",
            "8:1:0",
            "--missing-idx",
            "",
        ],
    );
    assert_success(&out);
    let geometry = fs::read_to_string(dir.path().join("rec_full/sparse_geometry.csv")).unwrap();
    assert!(!geometry.contains(",0\n"), "no element should be masked: {geometry}");
}

#[test]
fn sweep_without_checkpoint_skips_the_network_column() {
    let dir = tempfile::tempdir().unwrap();
    tiny_config(dir.path());
    let out = run_in(dir.path(), &["sweep", "--config", "tiny.cfg", "--out", "sw"]);
    assert_success(&out);
    let records = fs::read_to_string(dir.path().join("sw/records.csv")).unwrap();
    assert!(!records.contains("fanet"));
    assert_eq!(records.lines().count(), 1 + 20);
}

#[test]
fn zero_trials_emit_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("zero.cfg");
    let tiny = fs::read_to_string(tiny_config(dir.path())).unwrap();
    fs::write(&path, tiny.replace("sweep.trials = 5", "sweep.trials = 0")).unwrap();
    let out = run_in(dir.path(), &["sweep", "--config", "zero.cfg", "--out", "sw"]);
    assert_success(&out);
    assert_eq!(
        fs::read_to_string(dir.path().join("sw/records.csv")).unwrap(),
        "trial_id,snr_db,missing_idx,method,mse\n"
    );
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    // missing config file
    let out = run_in(dir.path(), &["train", "--config", "nope.cfg"]);
    assert_eq!(exit_code(&out), 2);
    // unknown key
    fs::write(dir.path().join("bad.cfg"), "train.batchsize = 8\n").unwrap();
    let out = run_in(dir.path(), &["train", "--config", "bad.cfg"]);
    assert_eq!(exit_code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("train.batchsize"));
    // invalid value caught by validation
    fs::write(dir.path().join("bad2.cfg"), "train.lr = -1\n").unwrap();
    let out = run_in(dir.path(), &["train", "--config", "bad2.cfg"]);
    assert_eq!(exit_code(&out), 2);
}

#[test]
fn checkpoint_mismatch_and_bad_indices_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    tiny_config(dir.path());
    let out = run_in(dir.path(), &["train", "--config", "tiny.cfg", "--out", "run"]);
    assert_success(&out);

    // same checkpoint against different network dims
    let tiny = fs::read_to_string(dir.path().join("tiny.cfg")).unwrap();
    fs::write(
        dir.path().join("other.cfg"),
        tiny.replace("net.embed_dim = 16", "net.embed_dim = 32"),
    )
    .unwrap();
    let out = run_in(
        dir.path(),
        &[
            "sweep",
            "--config",
            "other.cfg",
            "--checkpoint",
            "run/weights.fanw",
            "--out",
            "sw",
        ],
    );
    assert_eq!(exit_code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("dims"));

    // out-of-range missing index
    let out = run_in(
        dir.path(),
        &[
            "reconstruct",
            "--config",
            "tiny.cfg",
            "--checkpoint",
            "run/weights.fanw",
            "--out",
            "rec",
            "--targets",
            "5:1:0",
            "--missing-idx",
            "3;99",
        ],
    );
    assert_eq!(exit_code(&out), 2);
}

#[test]
fn unwritable_output_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    tiny_config(dir.path());
    // a regular file where the output directory should go
    fs::write(dir.path().join("blocked"), b"").unwrap();
    let out = run_in(
        dir.path(),
        &["gen", "--config", "tiny.cfg", "--out", "blocked"],
    );
    assert_eq!(exit_code(&out), 4);
}

#[test]
fn strict_paper_switches_defaults_under_overrides() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("small.cfg"),
        "train.n_signals = 4\narray.n_elements = 8\ngrid.bins = 8\nsweep.missing = 3\n",
    )
    .unwrap();
    let out = run_in(
        dir.path(),
        &["gen", "--config", "small.cfg", "--strict-paper", "--out", "g"],
    );
    assert_success(&out);
    let echo = fs::read_to_string(dir.path().join("g/config_resolved.cfg")).unwrap();
    assert!(echo.contains("train.n_signals = 4"), "override wins");
    assert!(echo.contains("train.epochs = 500"), "strict default kept");
    assert!(echo.contains("sweep.trials = 5000"));
    assert!(echo.contains("tokens.sparsity_feature = false"));
}
