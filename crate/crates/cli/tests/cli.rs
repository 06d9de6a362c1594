use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use elastic_ds::{GeometricDescriptor, Trajectory};
use elastic_ds_cli::files::{
    read_json, sha256_hex, write_json, DemoFile, DescriptorFile, PolicyFile,
};
use nalgebra::DVector;
use serde_json::Value;
use tempfile::TempDir;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn run<I, S>(args: I) -> Output
where
    I: IntoIterator<Item = S>,
    S: AsRef<std::ffi::OsStr>,
{
    Command::new(env!("CARGO_BIN_EXE_elastic-ds"))
        .args(args)
        .env_remove("ELASTIC_DS_CONFIG")
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "status {:?}\nstderr: {}",
        out.status,
        String::from_utf8_lossy(&out.stderr)
    );
    let text = String::from_utf8(out.stdout.clone()).expect("utf-8 stdout");
    serde_json::from_str(text.trim()).unwrap_or(Value::Null)
}

fn fit_fixture(dir: &TempDir) -> PathBuf {
    let out = dir.path().join("policy.json");
    let demo = fixture("s_curve_demo.json");
    ok(&run([
        "fit".as_ref(),
        demo.as_os_str(),
        "-o".as_ref(),
        out.as_os_str(),
    ]));
    out
}

fn straight_demo(dir: &TempDir) -> PathBuf {
    let n = 60;
    let pts = (0..n)
        .map(|i| DVector::from_vec(vec![i as f64 / (n - 1) as f64, 0.0]))
        .collect();
    let t = (0..n).map(|i| i as f64 * 0.02).collect();
    let traj = Trajectory::new(pts, t).unwrap();
    let path = dir.path().join("line.json");
    write_json(&path, &DemoFile::from_trajectories(&[traj]).unwrap()).unwrap();
    path
}

/// Value of `name="..."` inside one SVG element.
fn attr(element: &str, name: &str) -> f64 {
    let key = format!(" {name}=\"");
    let start = element.find(&key).unwrap() + key.len();
    let len = element[start..].find('"').unwrap();
    element[start..start + len].parse().unwrap()
}

fn csv_rows(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    (header, rows)
}

#[test]
fn fit_writes_a_policy_that_loads_back() {
    let dir = TempDir::new().unwrap();
    let path = fit_fixture(&dir);
    let (file, learned) = PolicyFile::load(&path).unwrap();
    assert_eq!(file.dim, 2);
    assert!((1..=8).contains(&learned.policy.len()));
    let demo_bytes = std::fs::read(fixture("s_curve_demo.json")).unwrap();
    assert_eq!(file.provenance.demo_sha256, sha256_hex(&demo_bytes));
    assert!(file.provenance.descriptor.is_none());
}

#[test]
fn empty_demo_is_a_validation_error_and_writes_nothing() {
    let dir = TempDir::new().unwrap();
    let demo = dir.path().join("empty.json");
    std::fs::write(&demo, "").unwrap();
    let out = dir.path().join("p.json");
    let res = run(["fit".as_ref(), demo.as_os_str(), "-o".as_ref(), out.as_os_str()]);
    assert_eq!(res.status.code(), Some(2));
    assert!(res.stdout.is_empty());
    assert!(!out.exists());
}

#[test]
fn k_max_one_forces_a_single_component() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("p.json");
    let demo = fixture("s_curve_demo.json");
    let line = ok(&run([
        "fit".as_ref(),
        demo.as_os_str(),
        "-o".as_ref(),
        out.as_os_str(),
        "--k-max".as_ref(),
        "1".as_ref(),
    ]));
    assert_eq!(line["k"], 1);
    assert_eq!(PolicyFile::load(&out).unwrap().1.policy.len(), 1);
}

#[test]
fn transforming_to_the_chain_frames_changes_nothing() {
    let dir = TempDir::new().unwrap();
    let policy = fit_fixture(&dir);
    let (_, learned) = PolicyFile::load(&policy).unwrap();
    let desc = GeometricDescriptor::both(
        learned.chain.entry_frame().unwrap(),
        learned.chain.exit_frame().unwrap(),
    )
    .unwrap();
    let desc_path = dir.path().join("identity.json");
    write_json(&desc_path, &DescriptorFile::from_descriptor(&desc)).unwrap();
    let out = dir.path().join("moved.json");
    ok(&run([
        "transform".as_ref(),
        policy.as_os_str(),
        desc_path.as_os_str(),
        "-o".as_ref(),
        out.as_os_str(),
    ]));
    let (_, moved) = PolicyFile::load(&out).unwrap();
    for (a, b) in learned.chain.joints().iter().zip(moved.chain.joints()) {
        assert!((a - b).amax() < 1e-9);
    }
    for (a, b) in learned.policy.components().iter().zip(moved.policy.components()) {
        assert!((a.mean() - b.mean()).amax() < 1e-9);
        assert!((a.covariance() - b.covariance()).amax() < 1e-9);
    }
    assert!((learned.policy.attractor() - moved.policy.attractor()).amax() < 1e-9);
}

#[test]
fn non_orthonormal_descriptor_is_rejected() {
    let dir = TempDir::new().unwrap();
    let policy = fit_fixture(&dir);
    let bad = dir.path().join("bad.json");
    std::fs::write(
        &bad,
        r#"{"version":1,"dim":2,"enter":{"position":[0,0],"rotation":[[1,0.2],[0,1]]}}"#,
    )
    .unwrap();
    let out = dir.path().join("moved.json");
    let res = run([
        "transform".as_ref(),
        policy.as_os_str(),
        bad.as_os_str(),
        "-o".as_ref(),
        out.as_os_str(),
    ]);
    assert_eq!(res.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn shifted_descriptor_is_followed_closely() {
    let dir = TempDir::new().unwrap();
    let policy = fit_fixture(&dir);
    let desc = fixture("s_curve_descriptor.json");
    let out = dir.path().join("moved.json");
    let line = ok(&run([
        "transform".as_ref(),
        policy.as_os_str(),
        desc.as_os_str(),
        "-o".as_ref(),
        out.as_os_str(),
    ]));
    assert_eq!(line["converged"], true);
    assert!(line["start_cos"].as_f64().unwrap() >= 0.98, "{line}");
    assert!(line["goal_cos"].as_f64().unwrap() >= 0.99, "{line}");
    assert!(line["endpoints_distance"].as_f64().unwrap() <= 0.01, "{line}");

    let metrics = ok(&run(["metrics".as_ref(), out.as_os_str()]));
    assert_eq!(metrics["start_cos"], line["start_cos"]);
    assert_eq!(metrics["goal_cos"], line["goal_cos"]);
}

#[test]
fn transform_leaves_its_input_untouched_and_refuses_to_overwrite_it() {
    let dir = TempDir::new().unwrap();
    let policy = fit_fixture(&dir);
    let before = std::fs::read(&policy).unwrap();
    let desc = fixture("s_curve_descriptor.json");
    let out = dir.path().join("moved.json");
    ok(&run([
        "transform".as_ref(),
        policy.as_os_str(),
        desc.as_os_str(),
        "-o".as_ref(),
        out.as_os_str(),
    ]));
    assert_eq!(std::fs::read(&policy).unwrap(), before);
    let res = run([
        "transform".as_ref(),
        policy.as_os_str(),
        desc.as_os_str(),
        "-o".as_ref(),
        policy.as_os_str(),
    ]);
    assert_eq!(res.status.code(), Some(1));
    assert_eq!(std::fs::read(&policy).unwrap(), before);
}

#[test]
fn rollout_csv_has_a_decreasing_lyapunov_column() {
    let dir = TempDir::new().unwrap();
    let policy = fit_fixture(&dir);
    let csv = dir.path().join("r.csv");
    let line = ok(&run([
        "rollout".as_ref(),
        policy.as_os_str(),
        "-o".as_ref(),
        csv.as_os_str(),
        "--start".as_ref(),
        "-0.2,0.3".as_ref(),
    ]));
    assert_eq!(line["converged"], true);
    let (header, rows) = csv_rows(&csv);
    assert_eq!(header, ["t", "x0", "x1", "v0", "v1", "V"]);
    assert_eq!(rows[0][1..3], [-0.2, 0.3]);
    for w in rows.windows(2) {
        assert!(w[1][5] < w[0][5]);
        assert!(w[1][0] > w[0][0]);
    }
}

#[test]
fn field_of_a_single_component_points_at_the_attractor() {
    let dir = TempDir::new().unwrap();
    let demo = straight_demo(&dir);
    let policy = dir.path().join("line.policy.json");
    ok(&run([
        "fit".as_ref(),
        demo.as_os_str(),
        "-o".as_ref(),
        policy.as_os_str(),
        "--k-max".as_ref(),
        "1".as_ref(),
    ]));
    let (_, learned) = PolicyFile::load(&policy).unwrap();
    let goal = learned.policy.attractor().clone();
    let csv = dir.path().join("f.csv");
    let svg = dir.path().join("f.svg");
    ok(&run([
        "field".as_ref(),
        policy.as_os_str(),
        "--csv".as_ref(),
        csv.as_os_str(),
        "--svg".as_ref(),
        svg.as_os_str(),
        "--nx".as_ref(),
        "9".as_ref(),
        "--ny".as_ref(),
        "7".as_ref(),
    ]));
    let (header, rows) = csv_rows(&csv);
    assert_eq!(header, ["x0", "x1", "v0", "v1", "speed"]);
    assert_eq!(rows.len(), 63);
    for r in &rows {
        let to_goal = DVector::from_vec(vec![goal[0] - r[0], goal[1] - r[1]]);
        let v = DVector::from_vec(vec![r[2], r[3]]);
        if to_goal.norm() > 1e-9 {
            assert!(v.dot(&to_goal) > 0.0, "row {r:?}");
        }
    }
    let text = std::fs::read_to_string(&svg).unwrap();
    assert!(text.starts_with("<svg"));
    let goal_el = text.split("<circle class=\"attractor\"").nth(1).unwrap();
    let (gx, gy) = (attr(goal_el, "cx"), attr(goal_el, "cy"));
    let arrows: Vec<&str> = text.split("<line class=\"arrow\"").skip(1).collect();
    assert_eq!(arrows.len() + text.matches("class=\"still\"").count(), 63);
    for a in &arrows {
        let (x1, y1) = (attr(a, "x1"), attr(a, "y1"));
        let (dx, dy) = (attr(a, "x2") - x1, attr(a, "y2") - y1);
        let (tx, ty) = (gx - x1, gy - y1);
        if tx.hypot(ty) > 1.0 {
            assert!(dx * tx + dy * ty > 0.0, "arrow {a}");
        }
    }
    assert!(text.contains("class=\"rollout\""));
    assert!(text.contains("class=\"attractor\""));
}

#[test]
fn field_without_outputs_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let policy = fit_fixture(&dir);
    assert_eq!(run(["field".as_ref(), policy.as_os_str()]).status.code(), Some(1));
}

#[test]
fn bench_prints_one_row_per_size() {
    let dir = TempDir::new().unwrap();
    let csv = dir.path().join("bench.csv");
    let out = run([
        "bench".as_ref(),
        "--sizes".as_ref(),
        "100,200,400".as_ref(),
        "--repeats".as_ref(),
        "1".as_ref(),
        "--csv".as_ref(),
        csv.as_os_str(),
    ]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<_> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 3);
    for (row, n) in rows.iter().zip(["100", "200", "400"]) {
        assert_eq!(row.split_whitespace().next(), Some(n));
    }
    assert_eq!(std::fs::read_to_string(csv).unwrap().lines().count(), 4);
}

#[test]
fn policy_files_round_trip_bit_exactly() {
    let dir = TempDir::new().unwrap();
    let path = fit_fixture(&dir);
    let original = std::fs::read(&path).unwrap();

    let (file, _): (PolicyFile, _) = read_json(&path).unwrap();
    let copy = dir.path().join("copy.json");
    write_json(&copy, &file).unwrap();
    assert_eq!(std::fs::read(&copy).unwrap(), original);

    let (file, learned) = PolicyFile::load(&path).unwrap();
    let rebuilt = dir.path().join("rebuilt.json");
    write_json(&rebuilt, &PolicyFile::new(&learned, file.provenance).unwrap()).unwrap();
    assert_eq!(std::fs::read(&rebuilt).unwrap(), original);
}

#[test]
fn fitting_is_deterministic_for_a_fixed_seed() {
    let dir = TempDir::new().unwrap();
    let demo = fixture("s_curve_demo.json");
    let fit = |name: &str, seed: &str| {
        let out = dir.path().join(name);
        ok(&run([
            "--seed".as_ref(),
            seed.as_ref(),
            "-q".as_ref(),
            "fit".as_ref(),
            demo.as_os_str(),
            "-o".as_ref(),
            out.as_os_str(),
        ]));
        std::fs::read(out).unwrap()
    };
    assert_eq!(fit("a.json", "11"), fit("b.json", "11"));
}

#[test]
fn bad_command_lines_exit_with_usage_status() {
    assert_eq!(run(["nonsense"]).status.code(), Some(1));
    assert_eq!(run(["fit"]).status.code(), Some(1));
    assert_eq!(run(["bench", "--shape", "circle"]).status.code(), Some(1));
    assert_eq!(run(["--help"]).status.code(), Some(0));
}

#[test]
fn split_then_stitch_reaches_the_original_goal() {
    let dir = TempDir::new().unwrap();
    let demo = fixture("s_curve_demo.json");
    let (file, _): (DemoFile, _) = read_json(&demo).unwrap();
    let via = file.trajectories().unwrap()[0].points()[100].clone();
    let via_arg = format!("{},{}", via[0], via[1]);
    let prefix = dir.path().join("seg");
    let line = ok(&run([
        "split".as_ref(),
        demo.as_os_str(),
        "--via".as_ref(),
        via_arg.as_ref(),
        "--prefix".as_ref(),
        prefix.as_os_str(),
    ]));
    assert_eq!(line["segments"], 2);

    let mut policies = Vec::new();
    for i in 0..2 {
        let seg = dir.path().join(format!("seg-{i}.json"));
        let out = dir.path().join(format!("p{i}.json"));
        ok(&run(["-q".as_ref(), "fit".as_ref(), seg.as_os_str(), "-o".as_ref(), out.as_os_str()]));
        policies.push(out);
    }
    let stitched = dir.path().join("stitched.json");
    ok(&run([
        "stitch".as_ref(),
        policies[0].as_os_str(),
        policies[1].as_os_str(),
        "-o".as_ref(),
        stitched.as_os_str(),
    ]));
    let (_, learned) = PolicyFile::load(&stitched).unwrap();
    let end = file.trajectories().unwrap()[0].end().clone();
    assert!((learned.policy.attractor() - end).norm() < 1e-9);
    let metrics = ok(&run(["metrics".as_ref(), stitched.as_os_str()]));
    assert_eq!(metrics["converged"], true);
}
