use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use wiclosure::candidates::EvalReport;
use wiclosure::io::{
    format_tum, load_candidates, load_report, load_tum, parse_tum, save_candidates, save_report, save_tum, split,
    to_json, TumRecord,
};
use wiclosure::pipeline::{run, RunOptions, Stage, CANDIDATES_CSV, REPORT_FILE, SCENARIO_FILE, TRAJECTORIES_FILE};
use wiclosure::sim::{resample, synthesize, ScenarioConfig, TrajectorySpec};
use wiclosure::Error;

fn scenarios() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

#[test]
fn bundled_scenarios_match_presets() {
    let dir = scenarios();
    let presets = [
        ("crossing.json", ScenarioConfig::crossing(0, 300, 300)),
        ("noise_free.json", ScenarioConfig::noise_free(0, 300, 300)),
        ("hardware_analog.json", ScenarioConfig::hardware_analog(0)),
        ("kitti_shaped.json", ScenarioConfig::kitti_shaped(0)),
    ];
    for (file, preset) in presets {
        let loaded = ScenarioConfig::load(&dir.join(file)).unwrap();
        assert_eq!(loaded, preset, "{file}");
    }
    let tum = ScenarioConfig::load(&dir.join("tum_split.json")).unwrap();
    assert!(matches!(&tum.trajectory, TrajectorySpec::TumSplit { path, .. } if path.is_absolute() || path.exists()));
    let d = synthesize(&tum).unwrap();
    assert_eq!(d.truth.alpha.len() + d.truth.beta.len(), 601);
    assert!(!d.true_pairs.is_empty());
}

#[test]
fn range_noise_statistics() {
    let mut residuals = Vec::new();
    for seed in 0..40 {
        let c = ScenarioConfig::crossing(seed, 400, 400);
        let d = synthesize(&c).unwrap();
        for m in &d.measurements {
            let pose = |e: wiclosure::factors::Endpoint| {
                if e.robot == 0 { d.truth.alpha[e.index] } else { d.truth.beta[e.index] }
            };
            let truth = (pose(m.receiver).translation - pose(m.transmitter).translation).norm();
            residuals.push(m.range.d - truth);
        }
    }
    let n = residuals.len() as f64;
    let mean = residuals.iter().sum::<f64>() / n;
    let std = (residuals.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    assert!(n > 150.0, "only {n} measurements");
    assert!(mean.abs() < 4.0 * 0.5 / n.sqrt(), "mean {mean}");
    assert!((std - 0.5).abs() < 0.1, "std {std}");
}

#[test]
fn simulation_is_seeded() {
    let c = ScenarioConfig::crossing(8, 250, 250);
    let a = synthesize(&c).unwrap();
    let b = synthesize(&c).unwrap();
    assert_eq!(serde_json::to_string(&a.measurements).unwrap(), serde_json::to_string(&b.measurements).unwrap());
    let other = synthesize(&ScenarioConfig { seed: 9, ..c }).unwrap();
    assert_ne!(serde_json::to_string(&a.measurements).unwrap(), serde_json::to_string(&other.measurements).unwrap());
}

#[test]
fn invalid_config_rejected() {
    let mut c = ScenarioConfig::crossing(0, 200, 200);
    c.range_sigma = 0.0;
    assert!(matches!(c.validate(), Err(Error::Config(_))));
    let mut c = ScenarioConfig::hardware_analog(0);
    c.multipath.min_offset_deg = 5.0;
    assert!(matches!(c.validate(), Err(Error::Config(_))));
}

#[test]
fn tum_round_trip_is_exact() {
    let poses = resample(&[Vector3::zeros(), Vector3::new(50.0, 0.0, 0.0), Vector3::new(50.0, 30.0, 1.0)], 0.7).unwrap();
    let recs: Vec<TumRecord> = poses.iter().enumerate().map(|(i, p)| TumRecord::from_pose(i as f64 / 3.0, p)).collect();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.tum");
    save_tum(&path, &recs).unwrap();
    let back = load_tum(&path).unwrap();
    assert_eq!(back, recs);
    assert_eq!(format_tum(&back), std::fs::read_to_string(&path).unwrap());
    for (r, p) in back.iter().zip(&poses) {
        assert!((r.pose().to_homogeneous() - p.to_homogeneous()).norm() < 1e-12);
    }
}

#[test]
fn tum_split_halves() {
    let text: String = (0..1000).map(|i| format!("{i} {i} 0 0 0 0 0 1\n")).collect();
    let recs = parse_tum(&text, "mem").unwrap();
    let parts = split(&recs, 2).unwrap();
    assert_eq!((parts[0].len(), parts[1].len()), (500, 500));
    assert_eq!(parts[1][0].timestamp, 500.0);
    assert!(split(&recs, 0).is_err());
}

#[test]
fn tum_errors_carry_line_numbers() {
    let err = parse_tum("# header\n0 0 0 0 0 0 0 1\n1 0 0\n", "x.tum").unwrap_err();
    assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
    let err = parse_tum("0 0 0 0 0 0 0 2\n", "x.tum").unwrap_err();
    assert!(matches!(err, Error::Parse { line: 1, .. }));
}

#[test]
fn artifacts_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let c = ScenarioConfig::crossing(2, 220, 240);
    let a = run(&c, &RunOptions { out: Some(dir.path().to_path_buf()), ..Default::default() }).unwrap();
    let report = a.report.unwrap();
    let loaded: EvalReport = load_report(&dir.path().join(REPORT_FILE)).unwrap();
    assert_eq!(to_json(&loaded), to_json(&report));
    let rows = load_candidates(&dir.path().join(CANDIDATES_CSV)).unwrap();
    let set = a.candidates.unwrap();
    assert_eq!(rows.len(), set.pairs.len());
    for (row, p) in rows.iter().zip(&set.pairs) {
        assert_eq!((row.0, row.1, row.3), (p.p_index, p.k_index, p.route_link));
        assert_eq!(row.2, p.d_mh);
    }
    let copy = dir.path().join("copy.json");
    save_report(&copy, &loaded).unwrap();
    assert_eq!(std::fs::read(&copy).unwrap(), std::fs::read(dir.path().join(REPORT_FILE)).unwrap());
    let csv_copy = dir.path().join("copy.csv");
    save_candidates(&csv_copy, &set).unwrap();
    assert_eq!(std::fs::read(&csv_copy).unwrap(), std::fs::read(dir.path().join(CANDIDATES_CSV)).unwrap());
}

#[test]
fn stages_resume_from_disk() {
    let dir = tempfile::tempdir().unwrap();
    let out = Some(dir.path().to_path_buf());
    let c = ScenarioConfig::crossing(6, 230, 230);
    run(&c, &RunOptions { stages: vec![Stage::Simulate, Stage::Solve], out: out.clone(), ..Default::default() }).unwrap();
    assert!(dir.path().join(SCENARIO_FILE).exists());
    assert!(dir.path().join(TRAJECTORIES_FILE).exists());
    assert!(!dir.path().join(REPORT_FILE).exists());
    let rest = vec![Stage::Pcm, Stage::Prune, Stage::Gate, Stage::Evaluate];
    let resumed = run(&c, &RunOptions { stages: rest, out, ..Default::default() }).unwrap();
    let whole = run(&c, &RunOptions::default()).unwrap();
    assert_eq!(to_json(&resumed.report.unwrap()), to_json(&whole.report.unwrap()));
}

#[test]
fn missing_upstream_artifact_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let c = ScenarioConfig::crossing(6, 230, 230);
    let err = run(&c, &RunOptions { stages: vec![Stage::Gate], out: Some(dir.path().to_path_buf()), ..Default::default() })
        .unwrap_err();
    assert!(err.to_string().contains("missing"), "{err}");
}
