use std::fs;
use std::process::Command;

fn slicekit() -> Command {
    Command::new(env!("CARGO_BIN_EXE_slicekit"))
}

#[test]
fn lists_methods() {
    let out = slicekit().arg("--list-methods").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for name in ["MC", "CQSW", "RRGQSW", "ARBOSW", "coulomb-optimized"] {
        assert!(text.contains(name), "{name} missing");
    }
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.toml");
    fs::write(
        &config,
        "experiment = \"landscapes\"\nmethods = [\"BOSW\"]\nseeds = [7]\n[landscapes]\nkinds = [\"ridge\"]\nbudgets = [6]\n",
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let status = slicekit()
        .args(["landscapes", "--config"])
        .arg(&config)
        .args([
            "--method",
            "MC,SQSW",
            "--seed",
            "1",
            "--seed",
            "2",
            "--L",
            "12",
            "--set",
            "selector.beta=1.5",
            "--out",
        ])
        .arg(&out_dir)
        .output()
        .unwrap()
        .status;
    assert!(status.success());
    let lock = fs::read_to_string(out_dir.join("config.lock")).unwrap();
    assert!(lock.contains("methods = [\"MC\", \"SQSW\"]"));
    assert!(lock.contains("seeds = [1, 2]"));
    assert!(lock.contains("L = 12"));
    assert!(lock.contains("beta = 1.5"));
    let csv = fs::read_to_string(out_dir.join("results.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 2);
}

#[test]
fn failures_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let run = |args: &[&str]| slicekit().args(args).current_dir(dir.path()).output().unwrap();

    let bad_method = run(&["interpolate", "--method", "XQSW"]);
    assert_eq!(bad_method.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad_method.stderr).contains("XQSW"));

    assert_eq!(run(&["nonsense"]).status.code(), Some(2));
    assert_eq!(
        run(&["landscapes", "--set", "selector.unknown=1"]).status.code(),
        Some(2)
    );

    // a sub-run failure still writes the remaining rows
    let partial = run(&["landscapes", "--method", "MC,ARBOSW", "--out", "p"]);
    assert_eq!(partial.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&partial.stderr).contains("ARBOSW"));
    assert!(dir.path().join("p/results.csv").exists());
}
