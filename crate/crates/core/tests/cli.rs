use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const ARTIFACTS: [&str; 7] = [
    "features.csv",
    "clusters.csv",
    "clusters.geojson",
    "variance_curve.csv",
    "merges.csv",
    "poi_significance.csv",
    "run_manifest.json",
];

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_urban-attractors"))
        .args(args)
        .output()
        .expect("spawn binary")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// A small synthetic city on disk; returns its config path.
fn small_city(dir: &Path, seed: &str) -> PathBuf {
    let out = dir.join("city");
    let o = bin(&["synth", "--seed", seed, "--out", s(&out), "--n-zones", "100", "--n-global", "4", "--downtown-radius-m", "9000"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    out.join("config.toml")
}

#[test]
fn version_and_help_exit_zero() {
    let v = bin(&["--version"]);
    assert_eq!(code(&v), 0);
    assert!(String::from_utf8_lossy(&v.stdout).contains(env!("CARGO_PKG_VERSION")));
    assert_eq!(code(&bin(&["--help"])), 0);
    assert_eq!(code(&bin(&["run", "--help"])), 0);
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&bin(&["run", "--no-such-flag"])), 1);
    assert_eq!(code(&bin(&[])), 1);
    // Neither a config nor the input paths.
    assert_eq!(code(&bin(&["run"])), 1);
}

#[test]
fn missing_input_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_city(dir.path(), "1");
    fs::remove_file(dir.path().join("city/od.csv")).unwrap();
    let o = bin(&["run", "--config", s(&cfg)]);
    assert_eq!(code(&o), 1);
    assert!(!o.stderr.is_empty());
}

#[test]
fn malformed_csv_exits_two_and_leaves_no_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_city(dir.path(), "1");
    fs::write(dir.path().join("city/pois.csv"), "poi_id,poi_type,x,y\np1,cafe,not-a-number,3\n").unwrap();
    let out = dir.path().join("failed");
    let o = bin(&["run", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
    let left: Vec<_> = fs::read_dir(&out).map(|d| d.map(|e| e.unwrap().path()).collect()).unwrap_or_default();
    assert!(left.is_empty(), "partial outputs left: {left:?}");
}

#[test]
fn synth_then_run_writes_every_artifact_stably() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_city(dir.path(), "2");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = bin(&["run", "--config", s(&cfg), "--out", s(out)]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ARTIFACTS {
        assert!(a.join(f).is_file(), "missing {f}");
    }
    assert_eq!(fs::read(a.join("run_manifest.json")).unwrap(), fs::read(b.join("run_manifest.json")).unwrap());
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(a.join("run_manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["clustering"]["k"], 3);
    assert!(!dir.path().join("a").read_dir().unwrap().any(|e| e.unwrap().file_name().to_string_lossy().starts_with(".staging")));
}

#[test]
fn thread_count_does_not_change_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_city(dir.path(), "3");
    let (a, b) = (dir.path().join("t1"), dir.path().join("t4"));
    assert_eq!(code(&bin(&["run", "--config", s(&cfg), "--out", s(&a), "--threads", "1"])), 0);
    assert_eq!(code(&bin(&["run", "--config", s(&cfg), "--out", s(&b), "--threads", "4"])), 0);
    for f in ARTIFACTS {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} differs");
    }
}

#[test]
fn skip_poi_runs_without_pois() {
    let dir = tempfile::tempdir().unwrap();
    small_city(dir.path(), "4");
    let c = dir.path().join("city");
    let out = dir.path().join("out");
    let o = bin(&[
        "run",
        "--zones",
        s(&c.join("zones.geojson")),
        "--od",
        s(&c.join("od.csv")),
        "--road-nodes",
        s(&c.join("road_nodes.csv")),
        "--road-edges",
        s(&c.join("road_edges.csv")),
        "--skip-poi",
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("clusters.csv").is_file());
    assert!(!out.join("poi_significance.csv").exists());
}

#[test]
fn pois_required_unless_skipped() {
    let dir = tempfile::tempdir().unwrap();
    small_city(dir.path(), "4");
    let c = dir.path().join("city");
    let o = bin(&[
        "run",
        "--zones",
        s(&c.join("zones.geojson")),
        "--od",
        s(&c.join("od.csv")),
        "--road-nodes",
        s(&c.join("road_nodes.csv")),
        "--road-edges",
        s(&c.join("road_edges.csv")),
        "--out",
        s(&dir.path().join("out")),
    ]);
    assert_eq!(code(&o), 1);
}

fn cluster_column(path: &Path) -> Vec<(String, String)> {
    let text = fs::read_to_string(path).unwrap();
    text.lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[1].to_string(), f[2].to_string())
        })
        .collect()
}

#[test]
fn k_override_five_gives_five_unlabeled_clusters() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_city(dir.path(), "5");
    let out = dir.path().join("out");
    assert_eq!(code(&bin(&["run", "--config", s(&cfg), "--k", "5", "--out", s(&out)])), 0);
    let rows = cluster_column(&out.join("clusters.csv"));
    let mut ids: Vec<&str> = rows.iter().map(|r| r.0.as_str()).collect();
    ids.sort();
    ids.dedup();
    assert_eq!(ids, ["0", "1", "2", "3", "4"]);
    assert!(rows.iter().all(|r| r.1 == "Other"));
    let sig = fs::read_to_string(out.join("poi_significance.csv")).unwrap();
    assert!(sig.lines().skip(1).all(|l| l.starts_with("cluster_")));
}

#[test]
fn staged_commands_match_full_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_city(dir.path(), "6");
    let full = dir.path().join("full");
    let staged = dir.path().join("staged");
    assert_eq!(code(&bin(&["run", "--config", s(&cfg), "--out", s(&full)])), 0);
    assert_eq!(code(&bin(&["features", "--config", s(&cfg), "--out", s(&staged)])), 0);
    assert_eq!(fs::read(full.join("features.csv")).unwrap(), fs::read(staged.join("features.csv")).unwrap());
    let zones = dir.path().join("city/zones.geojson");
    let o = bin(&[
        "cluster",
        "--features",
        s(&staged.join("features.csv")),
        "--zones",
        s(&zones),
        "--config",
        s(&cfg),
        "--out",
        s(&staged),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["clusters.csv", "clusters.geojson", "variance_curve.csv", "merges.csv"] {
        assert_eq!(fs::read(full.join(f)).unwrap(), fs::read(staged.join(f)).unwrap(), "{f} differs");
    }
    let o = bin(&[
        "poi-sig",
        "--clusters",
        s(&staged.join("clusters.csv")),
        "--pois",
        s(&dir.path().join("city/pois.csv")),
        "--zones",
        s(&zones),
        "--out",
        s(&staged),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(
        fs::read(full.join("poi_significance.csv")).unwrap(),
        fs::read(staged.join("poi_significance.csv")).unwrap()
    );
}

#[test]
fn cluster_k_flag_matches_pipeline_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_city(dir.path(), "7");
    let full = dir.path().join("full");
    let staged = dir.path().join("staged");
    assert_eq!(code(&bin(&["run", "--config", s(&cfg), "--k-override", "3", "--out", s(&full)])), 0);
    let o = bin(&["cluster", "--features", s(&full.join("features.csv")), "--k", "3", "--out", s(&staged)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read(full.join("clusters.csv")).unwrap(), fs::read(staged.join("clusters.csv")).unwrap());
}

fn square(id: &str, x0: f64) -> String {
    let x1 = x0 + 10.0;
    format!(
        r#"{{"type":"Feature","properties":{{"id":"{id}"}},"geometry":{{"type":"Polygon","coordinates":[[[{x0},0],[{x1},0],[{x1},10],[{x0},10],[{x0},0]]]}}}}"#
    )
}

#[test]
fn poi_sig_on_four_poi_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(
        d.join("zones.geojson"),
        format!(r#"{{"type":"FeatureCollection","features":[{},{}]}}"#, square("dt", 0.0), square("res", 20.0)),
    )
    .unwrap();
    fs::write(d.join("clusters.csv"), "zone_id,cluster,archetype\ndt,0,Downtown\nres,1,Residential\n").unwrap();
    fs::write(
        d.join("pois.csv"),
        "poi_id,poi_type,x,y\np1,restaurant,5,5\np2,restaurant,25,5\np3,school,5,5\np4,school,25,5\np5,school,500,500\n",
    )
    .unwrap();
    let o = bin(&[
        "poi-sig",
        "--clusters",
        s(&d.join("clusters.csv")),
        "--pois",
        s(&d.join("pois.csv")),
        "--zones",
        s(&d.join("zones.geojson")),
        "--out",
        s(&d.join("out")),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(d.join("out/poi_significance.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("attractor_class,poi_type,a,expected_a,p_value,p_bonferroni"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 4);
    for r in &rows {
        // Every table is (1,1,1,1): p = 5/6, expected a = 1.
        assert_eq!(r[2], "1");
        assert_eq!(r[3].parse::<f64>().unwrap(), 1.0);
        assert!((r[4].parse::<f64>().unwrap() - 5.0 / 6.0).abs() < 1e-14);
        assert_eq!(r[5].parse::<f64>().unwrap(), 1.0);
    }
    assert_eq!((rows[0][0], rows[0][1]), ("Downtown", "restaurant"));
    assert_eq!((rows[3][0], rows[3][1]), ("Residential", "school"));
}

#[test]
fn poi_sig_rejects_unknown_zone() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("zones.geojson"), format!(r#"{{"type":"FeatureCollection","features":[{}]}}"#, square("a", 0.0))).unwrap();
    fs::write(d.join("clusters.csv"), "zone_id,cluster,archetype\nzz,0,Downtown\n").unwrap();
    fs::write(d.join("pois.csv"), "poi_id,poi_type,x,y\np1,cafe,5,5\n").unwrap();
    let o = bin(&[
        "poi-sig",
        "--clusters",
        s(&d.join("clusters.csv")),
        "--pois",
        s(&d.join("pois.csv")),
        "--zones",
        s(&d.join("zones.geojson")),
        "--out",
        s(&d.join("out")),
    ]);
    assert_eq!(code(&o), 2);
}
