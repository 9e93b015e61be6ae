//! Every example runs and produces sensible numbers.

#[allow(dead_code)]
mod threshold_pipeline {
    include!("../examples/threshold_pipeline.rs");
}
#[allow(dead_code)]
mod fcm_pipeline {
    include!("../examples/fcm_pipeline.rs");
}
#[allow(dead_code)]
mod active_contour {
    include!("../examples/active_contour.rs");
}
#[allow(dead_code)]
mod border_correction {
    include!("../examples/border_correction.rs");
}
#[allow(dead_code)]
mod mask_metrics {
    include!("../examples/mask_metrics.rs");
}
#[allow(dead_code)]
mod phantom_suite {
    include!("../examples/phantom_suite.rs");
}
#[allow(dead_code)]
mod bench_grid {
    include!("../examples/bench_grid.rs");
}
#[allow(dead_code)]
mod command_line {
    include!("../examples/command_line.rs");
}

#[test]
fn threshold_example() {
    let (plain, amf) = threshold_pipeline::run_example().unwrap();
    assert!(amf > 0.99);
    assert!(amf >= plain);
}

#[test]
fn fcm_example() {
    let (centers, dsc) = fcm_pipeline::run_example().unwrap();
    assert!((centers[0] - 11.5).abs() < 0.5);
    assert!((centers[1] - 201.0).abs() < 0.5);
    assert!(dsc > 0.99);
}

#[test]
fn active_contour_example() {
    let s = active_contour::run_example().unwrap();
    assert!(s.disk_dsc > 0.99);
    assert!(s
        .energy
        .windows(2)
        .all(|e| e[1] <= e[0] + 1e-9 * e[0].abs()));
    assert!(s.slice_dsc > 0.99);
}

#[test]
fn border_correction_example() {
    let rows = border_correction::run_example().unwrap();
    let get = |name: &str| rows.iter().find(|(n, _)| n == name).unwrap().1;
    assert!(get("none") < 0.2);
    assert!(get("amf") >= 0.95);
    assert!(get("amf") > get("rolling_ball"));
}

#[test]
fn mask_metrics_example() {
    let ev = mask_metrics::run_example().unwrap();
    assert_eq!(ev.counts.tp, 224);
    assert!((ev.dsc - 448.0 / 513.0).abs() < 1e-12);
    assert!((ev.hausdorff.unwrap() - 72f64.sqrt()).abs() < 1e-12);
}

#[test]
fn phantom_suite_example() {
    let (counts, dir) = phantom_suite::run_example().unwrap();
    assert_eq!(counts, [4, 2, 2, 2]);
    let written = std::fs::read_dir(&dir).unwrap().count();
    std::fs::remove_dir_all(&dir).unwrap();
    assert_eq!(written, 20);
}

#[test]
fn bench_grid_example() {
    let report = bench_grid::run_example().unwrap();
    assert_eq!(report.cells.len(), 9);
    assert!(report.passed());
    assert_eq!(report.to_csv().unwrap().lines().count(), 10);
}

#[test]
fn command_line_example() {
    let (codes, dir) = command_line::run_example();
    assert_eq!(codes, [0, 0, 0]);
    assert!(dir.join("run/result.json").is_file());
    assert!(dir.join("suite/manifest.json").is_file());
    std::fs::remove_dir_all(&dir).unwrap();
}
