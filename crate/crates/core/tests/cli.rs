mod common;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use common::*;
use evcalib::calib::{calibrate_offei, OffEiConfig};
use evcalib::ingest::{
    load_dataset, read_calibration_map, read_events, write_calibration_map, write_frames,
};
use evcalib::simulate::{simulate_events, SimConfig};
use evcalib::{CalibrationMap, IntensityFrame};

fn evcalib(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_evcalib"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Writes `frames` under `dir/video` and simulates them through the binary
/// with `map`. Returns (images index, events file).
fn simulated(dir: &Path, frames: &[IntensityFrame], map: &CalibrationMap) -> (PathBuf, PathBuf) {
    let index = write_frames(&dir.join("video"), frames).unwrap();
    let map_path = dir.join("truth.txt");
    write_calibration_map(map, &map_path).unwrap();
    let events = dir.join("events.txt");
    let o = evcalib(&[
        "simulate",
        "--video",
        s(&dir.join("video")),
        "--map",
        s(&map_path),
        "--out",
        s(&events),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    (index, events)
}

fn metrics_rows(path: &Path) -> Vec<Vec<f64>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.split(' ').map(|f| f.parse().unwrap()).collect())
        .collect()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

#[test]
fn constant_video_simulates_no_events() {
    let dir = tempfile::tempdir().unwrap();
    let frames: Vec<IntensityFrame> = (0..2)
        .map(|k| IntensityFrame::uniform(k as f64 * FRAME_DT, 6, 4, 90.0).unwrap())
        .collect();
    write_frames(&dir.path().join("video"), &frames).unwrap();
    let out = dir.path().join("events.txt");
    let o = evcalib(&[
        "simulate",
        "--video",
        s(&dir.path().join("video")),
        "--nominal-c",
        "0.1",
        "--out",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).trim(), "events 0");
    assert!(read_events(&out).unwrap().is_empty());
}

#[test]
fn missing_video_fails_naming_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("no_such_video");
    let o = evcalib(&[
        "simulate",
        "--video",
        s(&missing),
        "--nominal-c",
        "0.1",
        "--out",
        s(&dir.path().join("e.txt")),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("no_such_video"), "{}", stderr(&o));
}

#[test]
fn binary_simulation_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let map = random_map(16, 12, 11);
    let frames = moving_texture(16, 12, 12, (0.7, 0.4), 2.0, 11);
    let (index, events) = simulated(dir.path(), &frames, &map);
    let loaded = evcalib::ingest::load_frames(&index).unwrap();
    let expected = simulate_events(&loaded, &map, &SimConfig::default()).unwrap();
    assert_eq!(read_events(&events).unwrap(), expected.events());
}

#[test]
fn offline_calibration_recovers_the_map() {
    let dir = tempfile::tempdir().unwrap();
    let truth = random_map(24, 24, 12);
    let frames = moving_texture(24, 24, 200, (0.24, 0.18), 2.0, 12);
    let (index, events) = simulated(dir.path(), &frames, &truth);
    let out = dir.path().join("map.txt");
    let o = evcalib(&[
        "calibrate",
        "--algorithm",
        "offei",
        "--events",
        s(&events),
        "--images",
        s(&index),
        "--d",
        "6",
        "--out",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("degenerate "));
    assert!(dir.path().join("map.txt.report.txt").is_file());
    let est = read_calibration_map(&out).unwrap();

    let (dataset, _) = load_dataset(&events, &index).unwrap();
    let cfg = OffEiConfig {
        d: 6,
        ..OffEiConfig::default()
    };
    assert_eq!(est, calibrate_offei(&dataset, &cfg).unwrap().0);

    let counts = dataset.stream().counts();
    let rel: Vec<f64> = truth
        .c()
        .iter_xy()
        .filter(|&(x, y, _)| *counts.get(x, y) >= 50)
        .map(|(x, y, &c)| (est.c().get(x, y) - c).abs() / c)
        .collect();
    assert!(rel.len() > 24 * 24 / 4);
    let m = median(rel);
    assert!(m < 0.05, "{m}");
}

#[test]
fn offline_calibration_needs_enough_frames() {
    let dir = tempfile::tempdir().unwrap();
    let truth = random_map(8, 8, 13);
    let (index, events) = simulated(
        dir.path(),
        &moving_texture(8, 8, 5, (0.6, 0.35), 2.0, 13),
        &truth,
    );
    let o = evcalib(&[
        "calibrate",
        "--algorithm",
        "offei",
        "--events",
        s(&events),
        "--images",
        s(&index),
        "--d",
        "10",
        "--out",
        s(&dir.path().join("map.txt")),
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn event_only_calibration_rejects_empty_streams() {
    let dir = tempfile::tempdir().unwrap();
    let events = dir.path().join("events.txt");
    fs::write(&events, "").unwrap();
    let o = evcalib(&[
        "calibrate",
        "--algorithm",
        "offe",
        "--events",
        s(&events),
        "--width",
        "4",
        "--height",
        "4",
        "--out",
        s(&dir.path().join("map.txt")),
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn online_calibration_on_a_short_stream_keeps_the_fallback() {
    let dir = tempfile::tempdir().unwrap();
    let truth = random_map(8, 8, 14);
    let (index, events) = simulated(
        dir.path(),
        &moving_texture(8, 8, 10, (0.6, 0.35), 2.0, 14),
        &truth,
    );
    let out = dir.path().join("map.txt");
    let o = evcalib(&[
        "calibrate",
        "--algorithm",
        "onei",
        "--events",
        s(&events),
        "--images",
        s(&index),
        "--out",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).trim(), "updates 0");
    assert!(stderr(&o).contains("buffer never filled"));
    assert_eq!(
        read_calibration_map(&out).unwrap(),
        CalibrationMap::uniform(8, 8, 0.1, 0.0).unwrap()
    );
    let index = fs::read_to_string(dir.path().join("map.txt.snapshots/snapshots.txt")).unwrap();
    assert!(index.is_empty());
}

#[test]
fn online_calibration_writes_snapshots() {
    let dir = tempfile::tempdir().unwrap();
    let truth = random_map(8, 8, 15);
    let (index, events) = simulated(
        dir.path(),
        &moving_texture(8, 8, 60, (0.6, 0.35), 2.0, 15),
        &truth,
    );
    let out = dir.path().join("map.txt");
    let o = evcalib(&[
        "calibrate",
        "--algorithm",
        "onei",
        "--events",
        s(&events),
        "--images",
        s(&index),
        "--big-capacity",
        "1500",
        "--small-capacity",
        "150",
        "--min-events",
        "4",
        "--out",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let n: usize = stdout(&o)
        .trim()
        .strip_prefix("updates ")
        .unwrap()
        .parse()
        .unwrap();
    assert!(n > 0);
    let snaps = dir.path().join("map.txt.snapshots");
    let lines = fs::read_to_string(snaps.join("snapshots.txt")).unwrap();
    assert_eq!(lines.lines().count(), n);
    let last = lines
        .lines()
        .last()
        .unwrap()
        .split(' ')
        .nth(3)
        .unwrap()
        .to_owned();
    assert_eq!(
        read_calibration_map(&snaps.join(last)).unwrap(),
        read_calibration_map(&out).unwrap()
    );
}

#[test]
fn evaluation_of_a_still_scene_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    let frames: Vec<IntensityFrame> = (0..4)
        .map(|k| IntensityFrame::uniform(k as f64 * FRAME_DT, 12, 12, 120.0).unwrap())
        .collect();
    let (index, events) = simulated(dir.path(), &frames, &random_map(12, 12, 16));
    let out = dir.path().join("eval");
    let o = evcalib(&[
        "evaluate",
        "--events",
        s(&events),
        "--images",
        s(&index),
        "--uniform",
        "0.1",
        "--skip",
        "0",
        "--out-dir",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = metrics_rows(&out.join("metrics.txt"));
    assert_eq!(rows.len(), 3);
    for r in rows {
        assert_eq!(&r[1..], &[0.0, 100.0, 1.0]);
    }
    assert!(out.join("recon_00003.pgm").is_file());
}

#[test]
fn evaluation_skips_the_warmup_interval() {
    let dir = tempfile::tempdir().unwrap();
    let truth = random_map(12, 12, 17);
    let (index, events) = simulated(
        dir.path(),
        &moving_texture(12, 12, 20, (0.6, 0.35), 2.0, 17),
        &truth,
    );
    let out = dir.path().join("eval");
    let skip = format!("{}", 8.0 * FRAME_DT);
    let o = evcalib(&[
        "evaluate",
        "--events",
        s(&events),
        "--images",
        s(&index),
        "--uniform",
        "0.1",
        "--skip",
        &skip,
        "--out-dir",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = metrics_rows(&out.join("metrics.txt"));
    assert_eq!(rows.len(), 20 - 8);
    assert!(rows.iter().all(|r| r[0] >= 8.0));
}

#[test]
fn calibrated_map_scores_better_than_uniform() {
    let dir = tempfile::tempdir().unwrap();
    let truth = random_map(16, 16, 18);
    let (index, events) = simulated(
        dir.path(),
        &moving_texture(16, 16, 30, (0.5, 0.3), 2.0, 18),
        &truth,
    );
    let mean_rmse = |extra: &[&str], name: &str| {
        let out = dir.path().join(name);
        let mut args = vec![
            "evaluate",
            "--events",
            s(&events),
            "--images",
            s(&index),
            "--skip",
            "0",
            "--window",
            "10",
            "--out-dir",
            s(&out),
        ];
        args.extend_from_slice(extra);
        let o = evcalib(&args);
        assert!(o.status.success(), "{}", stderr(&o));
        let rows = metrics_rows(&out.join("metrics.txt"));
        rows.iter().map(|r| r[1]).sum::<f64>() / rows.len() as f64
    };
    let truth_path = dir.path().join("truth.txt");
    let calibrated = mean_rmse(&["--map", s(&truth_path)], "cal");
    let uniform = mean_rmse(&["--uniform", "0.1"], "uni");
    assert!(calibrated < uniform, "{calibrated} vs {uniform}");
}

fn class_counts(dir: &Path) -> Vec<(String, usize)> {
    fs::read_to_string(dir.join("counts.txt"))
        .unwrap()
        .lines()
        .map(|l| {
            let (name, n) = l.split_once(' ').unwrap();
            (name.to_owned(), n.parse().unwrap())
        })
        .collect()
}

#[test]
fn uniform_map_is_all_nominal() {
    let dir = tempfile::tempdir().unwrap();
    let map = dir.path().join("map.txt");
    write_calibration_map(&CalibrationMap::uniform(10, 7, 0.1, 0.0).unwrap(), &map).unwrap();
    let out = dir.path().join("cls");
    let o = evcalib(&["classify", "--map", s(&map), "--out-dir", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let counts = class_counts(&out);
    assert_eq!(counts[0], ("nominal".to_owned(), 70));
    assert!(counts[1..].iter().all(|c| c.1 == 0));
    let hist = fs::read_to_string(out.join("histogram.txt")).unwrap();
    assert_eq!(hist.lines().filter(|l| l.starts_with("c ")).count(), 50);
    assert_eq!(hist.lines().filter(|l| l.starts_with("b ")).count(), 50);
    for name in ["classes.pgm", "c_heatmap.pgm", "b_heatmap.pgm"] {
        assert!(out.join(name).is_file());
    }
}

#[test]
fn injected_hot_pixels_are_counted() {
    let dir = tempfile::tempdir().unwrap();
    let mut map = CalibrationMap::uniform(10, 7, 0.1, 0.0).unwrap();
    for (x, y) in [(0, 0), (4, 3), (9, 6)] {
        map.set(x, y, 0.05, 0.0).unwrap();
    }
    let path = dir.path().join("map.txt");
    write_calibration_map(&map, &path).unwrap();
    let out = dir.path().join("cls");
    let o = evcalib(&["classify", "--map", s(&path), "--out-dir", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let counts = class_counts(&out);
    assert_eq!(counts[0].1, 67);
    assert_eq!(counts[1], ("hot".to_owned(), 3));
}

#[test]
fn runs_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let truth = random_map(12, 12, 19);
    let (index, events) = simulated(
        dir.path(),
        &moving_texture(12, 12, 30, (0.6, 0.35), 2.0, 19),
        &truth,
    );
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = evcalib(&[
            "calibrate",
            "--algorithm",
            "offei",
            "--events",
            s(&events),
            "--images",
            s(&index),
            "--d",
            "5",
            "--out",
            s(&out),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        fs::read(out).unwrap()
    };
    assert_eq!(run("a.txt"), run("b.txt"));
    let again = dir.path().join("events2.txt");
    let o = evcalib(&[
        "simulate",
        "--video",
        s(&dir.path().join("video")),
        "--map",
        s(&dir.path().join("truth.txt")),
        "--out",
        s(&again),
    ]);
    assert!(o.status.success());
    assert_eq!(fs::read(events).unwrap(), fs::read(again).unwrap());
}
