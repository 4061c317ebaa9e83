use std::fs;

use slicekit::experiment::{run_experiment, ExperimentKind, RunConfig};
use slicekit::io::save_point_cloud;
use slicekit::ot1d::PointCloud;

fn small(experiment: ExperimentKind, out: &std::path::Path) -> RunConfig {
    let mut cfg = RunConfig::defaults(experiment);
    cfg.output = out.to_path_buf();
    cfg.selector.l = 12;
    cfg.data.fixture.n = 32;
    cfg
}

#[test]
fn interpolating_a_cloud_to_itself_reports_zero() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.xyz");
    let rows: Vec<Vec<f64>> = (0..20)
        .map(|i| vec![i as f64 * 0.1, (i * i) as f64 * 0.01, -(i as f64)])
        .collect();
    save_point_cloud(&path, &PointCloud::from_rows(&rows).unwrap()).unwrap();

    let mut cfg = small(ExperimentKind::Interpolate, &dir.path().join("out"));
    cfg.methods = vec!["MC".parse().unwrap(), "CQSW".parse().unwrap()];
    cfg.data.source = Some(path.clone());
    cfg.data.target = Some(path);
    cfg.flow.steps = 20;
    cfg.flow.checkpoints = vec![10, 20];
    let report = run_experiment(&cfg, Some(2)).unwrap();
    assert!(report.success(), "{:?}", report.failures);
    assert_eq!(report.rows.len(), 4);
    assert!(report.rows.iter().all(|r| r.metric == 0.0));
}

#[test]
fn failed_sub_runs_keep_the_others() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(ExperimentKind::Landscapes, dir.path());
    cfg.methods = vec!["MC".parse().unwrap(), "ABOSW".parse().unwrap()];
    cfg.seeds = vec![3, 4];
    let report = run_experiment(&cfg, None).unwrap();
    assert_eq!(report.failures.len(), 2);
    assert!(report.failures[0].contains("ABOSW"));
    let csv = fs::read_to_string(dir.path().join("results.csv")).unwrap();
    // header plus 3 landscapes × 4 budgets × 2 seeds for MC
    assert_eq!(csv.lines().count(), 1 + 24);
    assert!(csv.lines().skip(1).all(|l| l.contains(",MC,")));
}

#[test]
fn outputs_are_complete() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(ExperimentKind::ApproxError, dir.path());
    cfg.methods = vec!["MC".parse().unwrap(), "RGQSW".parse().unwrap()];
    cfg.approx.budgets = vec![4, 16, 64];
    cfg.approx.reference_slices = 1000;
    let report = run_experiment(&cfg, None).unwrap();
    assert!(report.success());
    for file in ["results.csv", "timings.csv", "config.lock", "approx-error.svg"] {
        assert!(dir.path().join(file).exists(), "{file} missing");
    }
    assert_eq!(fs::read_dir(dir.path().join("cache")).unwrap().count(), 1);
    assert!(report.rows.iter().all(|r| r.metric >= 0.0 && r.axis == "L"));
    let lock = RunConfig::load(&dir.path().join("config.lock")).unwrap();
    assert_eq!(lock, cfg);
}

#[test]
fn style_transfer_writes_images() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(ExperimentKind::StyleTransfer, dir.path());
    cfg.flow.steps = 10;
    cfg.flow.checkpoints = vec![10];
    cfg.flow.eval_slices = 200;
    cfg.data.image_size = [8, 8];
    let report = run_experiment(&cfg, None).unwrap();
    assert!(report.success(), "{:?}", report.failures);
    let img = slicekit::io::load_image(&dir.path().join("MC-seed0.ppm")).unwrap();
    assert_eq!((img.width, img.height), (8, 8));
}
