//! End-to-end tests of the `edgemig` binary: artifact layout, determinism,
//! manifest replay, the comparison protocol, and trace emission.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use edgemig::baselines::derive_calibration;
use edgemig::metrics::mu;
use edgemig::simnet::{run_trace, Policy, SimConfig};
use edgemig::workload::{load_csv_traces, synth_workload, SynthSpec};

fn edgemig_bin(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_edgemig"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("spawning edgemig")
}

fn assert_ok(output: &Output) {
    assert!(
        output.status.success(),
        "edgemig failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
}

/// A small but non-trivial spec: the wide-mode mixture drives real
/// migrations, so tables carry defined values rather than all-NaN.
fn spec_text(seeds: &str, output: &str) -> String {
    format!(
        r#"
seeds = {seeds}
output = "{output}"

[grid]
n_nodes = [20]
trips = [200]
req_step = [1.0]

[workload.synthetic]
trips = 200
n_locations = 120
city_size = 12.0
trip_max_len = 10.0

[[workload.synthetic.modes]]
low = 0.06
high = 0.94
jitter = 0.025
weight = 0.9
"#
    )
}

fn write_spec(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn read_lines(path: &Path) -> Vec<String> {
    fs::read_to_string(path)
        .unwrap_or_else(|e| panic!("reading {}: {e}", path.display()))
        .lines()
        .map(str::to_string)
        .collect()
}

#[test]
fn run_writes_logs_tables_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), "exp.toml", &spec_text("[0, 1]", "out"));
    assert_ok(&edgemig_bin(dir.path(), &["run", &spec]));

    let out = dir.path().join("out");
    let summary = read_lines(&out.join("summary.csv"));
    assert_eq!(summary.len(), 2, "header + one cell row");
    assert_eq!(
        summary[0],
        "policy,n_nodes,trips,req_step,runs,migration_pct,mean_directives,mu_s,mu_r,mean_kappa,unm_ratio,delta"
    );
    assert!(summary[1].starts_with("model,20,200,1.0,2,"));

    let averages = read_lines(&out.join("averages.csv"));
    assert_eq!(averages.len(), 2);
    assert!(averages[1].starts_with("model,20,1,"));

    for seed in [0, 1] {
        let log = out.join("runs").join(format!("model-n20-t200-s1-seed{seed}.jsonl"));
        let lines = read_lines(&log);
        let first: serde_json::Value = serde_json::from_str(&lines[0]).unwrap();
        assert_eq!(first["event"], "start");
        assert_eq!(first["seed"], seed);
        let last: serde_json::Value = serde_json::from_str(lines.last().unwrap()).unwrap();
        assert_eq!(last["event"], "end");
        let requests = lines
            .iter()
            .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap())
            .filter(|v| v["event"] == "request")
            .count() as u64;
        assert_eq!(last["total_requests"].as_u64().unwrap(), requests);
    }

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "run");
    assert_eq!(manifest["runs"].as_array().unwrap().len(), 2);
    assert_eq!(manifest["spec"]["seeds"], serde_json::json!([0, 1]));
}

#[test]
fn rerun_and_single_worker_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), "exp.toml", &spec_text("[0, 1]", "unused"));
    assert_ok(&edgemig_bin(dir.path(), &["run", &spec, "--out", "a"]));
    assert_ok(&edgemig_bin(dir.path(), &["run", &spec, "--out", "b"]));
    assert_ok(&edgemig_bin(dir.path(), &["run", &spec, "--out", "c", "--workers", "1"]));

    for file in [
        "summary.csv",
        "averages.csv",
        "runs/model-n20-t200-s1-seed0.jsonl",
        "runs/model-n20-t200-s1-seed1.jsonl",
    ] {
        let a = fs::read(dir.path().join("a").join(file)).unwrap();
        let b = fs::read(dir.path().join("b").join(file)).unwrap();
        let c = fs::read(dir.path().join("c").join(file)).unwrap();
        assert_eq!(a, b, "{file} differs between identical reruns");
        assert_eq!(a, c, "{file} depends on the worker count");
    }
}

#[test]
fn compare_emits_three_policy_rows_plots_and_calibrations() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), "exp.toml", &spec_text("[0, 1]", "out"));
    assert_ok(&edgemig_bin(dir.path(), &["compare", &spec]));

    let out = dir.path().join("out");
    let summary = read_lines(&out.join("summary.csv"));
    assert_eq!(summary.len(), 4, "header + exactly 3 policy rows per cell");
    assert!(summary[1].starts_with("model,"));
    assert!(summary[2].starts_with("random-dm,"));
    assert!(summary[3].starts_with("dbscan-dm,"));

    for metric in ["mu_s", "mu_r", "kappa", "unm_ratio", "delta"] {
        let rows = read_lines(&out.join("plots").join(format!("{metric}.csv")));
        assert_eq!(rows[0], "policy,n_nodes,trips,req_step,seed,value");
        assert_eq!(rows.len(), 1 + 3 * 2, "one raw row per run in {metric}.csv");
    }

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    let calibrations = manifest["calibrations"].as_array().unwrap();
    assert_eq!(calibrations.len(), 2, "one calibration per cell × seed");
    for calibration in calibrations {
        assert!(calibration["qnm"].as_u64().unwrap() >= 1);
        let p = calibration["p_migrate"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&p));
    }
    assert_eq!(manifest["runs"].as_array().unwrap().len(), 6);
}

#[test]
fn compare_matches_the_library_protocol() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), "exp.toml", &spec_text("[0, 1]", "out"));
    assert_ok(&edgemig_bin(dir.path(), &["compare", &spec]));

    // The same protocol, straight against the library.
    let synth = SynthSpec {
        trips: 200,
        n_locations: 120,
        city_size: 12.0,
        trip_max_len: 10.0,
        modes: vec![edgemig::workload::ModeSpec {
            low: 0.06,
            high: 0.94,
            jitter: 0.025,
            weight: 0.9,
        }],
        ..SynthSpec::default()
    };
    let mut expected = vec![Vec::new(); 3]; // per policy slot, per seed μ_s
    for seed in [0, 1] {
        let workload = synth_workload(&synth, seed).unwrap();
        let mut config = SimConfig {
            trips: 200,
            seed,
            ..SimConfig::default()
        };
        config.random_dm.seed = seed;
        let model = run_trace(&config, &workload).unwrap();
        let calibration = derive_calibration(&model);
        expected[0].push(mu(&model.strict).ok());
        for (slot, policy) in [(1, Policy::RandomDm), (2, Policy::DbscanDm)] {
            let mut run_config = config.clone();
            run_config.policy = policy;
            run_config.random_dm = calibration;
            let record = run_trace(&run_config, &workload).unwrap();
            expected[slot].push(mu(&record.strict).ok());
        }
    }
    let means: Vec<f64> = expected
        .iter()
        .map(|per_seed| {
            let defined: Vec<f64> = per_seed.iter().flatten().copied().collect();
            defined.iter().sum::<f64>() / defined.len().max(1) as f64
        })
        .collect();

    let summary = read_lines(&dir.path().join("out").join("summary.csv"));
    for (row, mean) in summary[1..].iter().zip(&means) {
        let mu_s: f64 = row.split(',').nth(7).unwrap().parse().unwrap();
        assert_eq!(
            mu_s.to_bits(),
            mean.to_bits(),
            "summary μ_s diverges from the library protocol in row {row}"
        );
    }
}

#[test]
fn synth_emits_traces_the_loader_accepts_and_runs() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), "exp.toml", &spec_text("[7]", "data"));
    assert_ok(&edgemig_bin(dir.path(), &["synth", &spec]));

    let data = dir.path().join("data");
    let workload = load_csv_traces(
        &data.join("locations.csv"),
        &data.join("trips.csv"),
        &data.join("intervals.csv"),
    )
    .expect("emitted traces load back");
    assert_eq!(workload.locations.len(), 120);
    assert_eq!(workload.trips.len(), 200);

    // Interval rows cover the busiest cell: Σ ⌊length/step⌋ + 1 draws.
    let expected_rows: usize = workload
        .trips
        .trips()
        .iter()
        .map(|w| (w.last().unwrap().2 / 1.0).floor() as usize + 1)
        .sum();
    let interval_rows = read_lines(&data.join("intervals.csv")).len() - 1;
    assert_eq!(interval_rows, expected_rows);

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(data.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "synth");
    assert_eq!(manifest["synth_seed"], 7);

    // The emitted files drive a run through the CSV workload source.
    let csv_spec = write_spec(
        dir.path(),
        "replay.toml",
        r#"
seeds = [0]
output = "replay-out"

[grid]
n_nodes = [20]
trips = [200]
req_step = [1.0]

[workload.csv]
locations = "data/locations.csv"
trips = "data/trips.csv"
intervals = "data/intervals.csv"
"#,
    );
    assert_ok(&edgemig_bin(dir.path(), &["run", &csv_spec]));
    assert_eq!(read_lines(&dir.path().join("replay-out/summary.csv")).len(), 2);
}

#[test]
fn manifest_replays_compare_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), "exp.toml", &spec_text("[0]", "unused"));
    assert_ok(&edgemig_bin(dir.path(), &["compare", &spec, "--out", "first"]));
    let manifest = dir.path().join("first/manifest.json");
    assert_ok(&edgemig_bin(
        dir.path(),
        &["compare", manifest.to_str().unwrap(), "--out", "second"],
    ));
    for file in ["summary.csv", "plots/mu_s.csv", "runs/model-n20-t200-s1-seed0.jsonl"] {
        assert_eq!(
            fs::read(dir.path().join("first").join(file)).unwrap(),
            fs::read(dir.path().join("second").join(file)).unwrap(),
            "{file} not reproduced from the manifest"
        );
    }
}

#[test]
fn seed_flag_overrides_spec_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), "exp.toml", &spec_text("[0, 1]", "out"));
    assert_ok(&edgemig_bin(dir.path(), &["run", &spec, "--seed", "9"]));
    let out = dir.path().join("out");
    assert!(out.join("runs/model-n20-t200-s1-seed9.jsonl").exists());
    assert!(!out.join("runs/model-n20-t200-s1-seed0.jsonl").exists());
    let summary = read_lines(&out.join("summary.csv"));
    assert!(summary[1].starts_with("model,20,200,1.0,1,"), "single run per cell");
}

#[test]
fn failing_cell_is_named_on_nonzero_exit() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("locations.csv"),
        {
            let mut text = String::from("id,x,y\n");
            for i in 0..25 {
                text.push_str(&format!("{i},{}.0,{}.0\n", i % 5, i / 5));
            }
            text
        },
    )
    .unwrap();
    fs::write(
        dir.path().join("trips.csv"),
        "trip_id,seq,x,y\n0,0,0.0,0.0\n0,1,3.0,0.0\n",
    )
    .unwrap();
    fs::write(dir.path().join("intervals.csv"), "low,high\n0.2,0.4\n0.3,0.8\n").unwrap();
    let spec = write_spec(
        dir.path(),
        "exp.toml",
        r#"
seeds = [0]
output = "out"

[grid]
n_nodes = [20]
trips = [5]
req_step = [1.0]

[workload.csv]
locations = "locations.csv"
trips = "trips.csv"
intervals = "intervals.csv"
"#,
    );
    let output = edgemig_bin(dir.path(), &["run", &spec]);
    assert!(!output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(
        stderr.contains("cell policy=model n_nodes=20 trips=5 req_step=1 seed=0"),
        "diagnostic does not name the failing cell: {stderr}"
    );
}
