use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::Arc;

use rydgen::lattice::{build_king_subgraph, Defects};
use rydgen::mcmc::{channel_matrix, spectral_gap, stationary_distribution, Channel, Sampler};
use rydgen::quench::{Quench, QuenchSpec};
use rydgen::rydberg::RydbergParams;

const GRID: &str = r#"
[lattice]
rows = 2
cols = 3
spacing = 1.0

[rydberg]
omega = 1.0
delta = 1.0
c6 = 1.0
"#;

fn rydgen(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rydgen")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = rydgen(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn read(p: impl AsRef<Path>) -> String {
    fs::read_to_string(p).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn csv_rows(text: &str) -> Vec<Vec<String>> {
    text.lines().skip(1).filter(|l| !l.starts_with('#')).map(|l| l.split(',').map(String::from).collect()).collect()
}

#[test]
fn phase_sweep_grid() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "grid.toml", GRID);
    let out = dir.path().join("sweep");
    ok(&["phase-sweep", "--config", &cfg, "--out", s(&out), "--grid", "3x4", "--delta-range", "0:3", "--t-range", "0:2"]);
    let text = read(out.join("phase_sweep.csv"));
    assert!(text.starts_with("delta,t,gap\n"));
    let rows: Vec<(f64, f64, f64)> =
        csv_rows(&text).iter().map(|r| (r[0].parse().unwrap(), r[1].parse().unwrap(), r[2].parse().unwrap())).collect();
    assert_eq!(rows.len(), 12);
    assert!(rows.windows(2).all(|w| (w[0].0, w[0].1) < (w[1].0, w[1].1)));
    for &(_, t, g) in &rows {
        assert!((0.0..=1.0).contains(&g));
        if t == 0.0 {
            assert_eq!(g, 0.0);
        }
    }
}

#[test]
fn phase_sweep_point_matches_direct_gap() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "grid.toml", GRID);
    let out = dir.path().join("one");
    ok(&["phase-sweep", "--config", &cfg, "--out", s(&out), "--grid", "1x1", "--delta-range", "2:3", "--t-range", "1.5:2"]);
    let rows = csv_rows(&read(out.join("phase_sweep.csv")));
    let gap: f64 = rows[0][2].parse().unwrap();

    let atoms = build_king_subgraph(2, 3, 1.0, Defects::None).unwrap();
    let params = RydbergParams::new(atoms, 1.0, 2.0, 1.0).unwrap();
    let sampler = Sampler::quantum(Quench::new(QuenchSpec::new(params.clone(), 1.5).unwrap()).unwrap()).unwrap();
    let channel = Channel::new(sampler, 0.1, Arc::new(params.quadratic_energy()), 1).unwrap();
    let mu = stationary_distribution(&channel).unwrap();
    let direct = spectral_gap(&channel_matrix(&channel).unwrap(), Some(&mu.probs)).unwrap();
    assert_eq!(rows[0][0], "2.0");
    assert_eq!(rows[0][1], "1.5");
    assert!((gap - direct).abs() <= 1e-12, "{gap} vs {direct}");
}

#[test]
fn phase_sweep_capacity_errors_become_nan() {
    let dir = tempfile::tempdir().unwrap();
    let big = "[lattice]\nrows = 4\ncols = 4\n[rydberg]\nomega = 1.0\ndelta = 1.0\nc6 = 1.0\n";
    let cfg = write_config(dir.path(), "big.toml", big);
    let out = dir.path().join("big");
    let res = ok(&["phase-sweep", "--config", &cfg, "--out", s(&out), "--grid", "1x2"]);
    let rows = csv_rows(&read(out.join("phase_sweep.csv")));
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r[2] == "nan"));
    assert!(String::from_utf8_lossy(&res.stderr).contains("exceeds the cap"));
}

/// Dataset, config and trained model shared by the sampling tests.
struct Trained {
    _dir: tempfile::TempDir,
    root: PathBuf,
    cfg: String,
    model: PathBuf,
    data: PathBuf,
}

const LINE: &str = r#"
[lattice]
rows = 2
cols = 3
spacing = 1.0

[rydberg]
omega = 1.0
delta = 0.5
c6 = 1.0

[channel]
sampler = "bitflip"

[train]
learning_rate = 1.0
w_energy = 0.1
hidden = [8]
epochs = 20

[benchmark]
taus = [0.1, 1.0]
samples = 500
"#;

fn trained() -> Trained {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_path_buf();
    let cfg = write_config(&root, "run.toml", LINE);
    let data = root.join("data");
    ok(&["make-dataset", "--out", s(&data), "--count", "8", "--height", "4", "--width", "4", "--seed", "3"]);
    let train = root.join("train");
    ok(&["train", "--config", &cfg, "--data", s(&data), "--out", s(&train), "--seed", "5"]);
    Trained { _dir: dir, model: train.join("model.json"), root, cfg, data }
}

#[test]
fn train_outputs_and_determinism() {
    let t = trained();
    let loss = read(t.root.join("train/loss.csv"));
    assert!(loss.starts_with("epoch,rec,energy,is,dist,total\n"));
    assert_eq!(csv_rows(&loss).len(), 20);
    let again = t.root.join("again");
    ok(&["train", "--config", &t.cfg, "--data", s(&t.data), "--out", s(&again), "--seed", "5", "--threads", "1"]);
    assert_eq!(read(again.join("loss.csv")), loss);
    assert_eq!(read(again.join("model.json")), read(&t.model));

    let zero = write_config(
        &t.root,
        "zero.toml",
        &LINE.replace("w_energy = 0.1", "w_energy = 0.0\nw_rec = 0.0").replace("learning_rate = 1.0", "learning_rate = 0.0"),
    );
    let flat = t.root.join("flat");
    ok(&["train", "--config", &zero, "--data", s(&t.data), "--out", s(&flat)]);
    for row in csv_rows(&read(flat.join("loss.csv"))) {
        assert!(row[1..].iter().all(|v| v.parse::<f64>().unwrap() == 0.0), "{row:?}");
    }
}

#[test]
fn sample_outputs() {
    let t = trained();
    let out = t.root.join("samples");
    ok(&["sample", "--config", &t.cfg, "--model", s(&t.model), "--data", s(&t.data), "--count", "4", "--out", s(&out)]);
    let rows = csv_rows(&read(out.join("samples.csv")));
    assert_eq!(rows.len(), 4);
    for k in 0..4 {
        let chain = read(out.join(format!("chain_{k:04}.csv")));
        assert!(chain.starts_with("step,state,energy,proposal,accepted\n"));
        // default depth 3
        assert_eq!(csv_rows(&chain).len(), 3);
        let pgm = fs::read(out.join(format!("sample_{k:04}.pgm"))).unwrap();
        assert!(pgm.starts_with(b"P5\n4 4\n255\n"));
    }

    let empty = t.root.join("empty");
    ok(&["sample", "--config", &t.cfg, "--model", s(&t.model), "--count", "0", "--out", s(&empty)]);
    assert_eq!(read(empty.join("samples.csv")), "sample,start,latent,energy,design\n");
}

#[test]
fn quantum_sampler_at_zero_time_keeps_starts() {
    let t = trained();
    let cfg = write_config(&t.root, "still.toml", &format!("{LINE}\n[quench]\nt = 0.0\n"));
    let out = t.root.join("still");
    ok(&["sample", "--config", &cfg, "--model", s(&t.model), "--data", s(&t.data), "--count", "8", "--sampler", "quantum", "--out", s(&out)]);
    for row in csv_rows(&read(out.join("samples.csv"))) {
        assert_eq!(row[1], row[2]);
    }
}

#[test]
fn benchmark_report_and_exact_self_test() {
    let t = trained();
    let out = t.root.join("bench");
    ok(&["benchmark", "--config", &t.cfg, "--model", s(&t.model), "--data", s(&t.data), "--out", s(&out)]);
    let text = read(out.join("divergence.csv"));
    assert!(text.starts_with("tau,depth,sampler,alpha,renyi_nats,kl_nats,tv\n"));
    let rows = csv_rows(&text);
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0][..3], ["0.1", "3", "bitflip"]);
    let bins = read(out.join("bins_tau0.1_bitflip_d3.csv"));
    assert!(bins.starts_with("bin_lo,bin_hi,p_hat,mu_hat\n"));
    assert!(bins.lines().last().unwrap().starts_with("# summary tau=0.1 depth=3 sampler=bitflip"));

    let again = t.root.join("bench2");
    ok(&["benchmark", "--config", &t.cfg, "--model", s(&t.model), "--data", s(&t.data), "--out", s(&again), "--threads", "1"]);
    assert_eq!(read(again.join("divergence.csv")), text);

    let exact = t.root.join("exact");
    ok(&["benchmark", "--config", &t.cfg, "--model", s(&t.model), "--exact", "--samples", "5000", "--out", s(&exact)]);
    for row in csv_rows(&read(exact.join("divergence.csv"))) {
        assert_eq!(row[2], "exact");
        assert!(row[4].parse::<f64>().unwrap() <= 0.01, "{row:?}");
    }
}

const PAIR: &str = r#"
[lattice]
positions = [[0.0, 0.0], [1.0, 0.0]]

[rydberg]
omega = 1.0
delta = 0.0
c6 = 27.0
"#;

fn diffuse_counts(dir: &Path, cfg: &str, args: &[&str]) -> Vec<(String, usize)> {
    let out = dir.join("diffuse");
    let mut all = vec!["diffuse", "--config", cfg, "--out", s(&out)];
    all.extend_from_slice(args);
    ok(&all);
    let text = read(out.join("diffuse.csv"));
    assert!(text.starts_with("z,count,hamming,quadratic_hamming,d_x\n"));
    csv_rows(&text).into_iter().map(|r| (r[0].clone(), r[1].parse().unwrap())).collect()
}

#[test]
fn diffuse_examples() {
    let dir = tempfile::tempdir().unwrap();
    let single = write_config(dir.path(), "one.toml", "[lattice]\npositions = [[0.0, 0.0]]\n[rydberg]\nomega = 1.0\ndelta = 0.0\nc6 = 1.0\n");
    let counts = diffuse_counts(dir.path(), &single, &["--target", "0", "--shots", "10000"]);
    let ones = counts.iter().find(|(z, _)| z == "1").map_or(0, |c| c.1) as f64;
    // sin²(π/4) = 1/2, σ = sqrt(N/4)
    assert!((ones - 5000.0).abs() <= 3.0 * 50.0, "{ones}");

    let still = diffuse_counts(dir.path(), &single, &["--target", "1", "--t", "0"]);
    assert_eq!(still, vec![("1".to_string(), 10000)]);

    let pair = write_config(dir.path(), "pair.toml", PAIR);
    let counts = diffuse_counts(dir.path(), &pair, &["--target", "10", "--shots", "10000"]);
    let both = counts.iter().find(|(z, _)| z == "11").map_or(0, |c| c.1);
    assert!(both <= 100, "(1,1) count {both}");
}

#[test]
fn diffuse_warns_on_dependent_target() {
    let dir = tempfile::tempdir().unwrap();
    let pair = write_config(dir.path(), "pair.toml", PAIR);
    let out = ok(&["diffuse", "--config", &pair, "--target", "11", "--shots", "10", "--out", s(&dir.path().join("d"))]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning"));
}

#[test]
fn diffuse_reports_decoded_distances() {
    let t = trained();
    let out = t.root.join("dd");
    ok(&["diffuse", "--config", &t.cfg, "--model", s(&t.model), "--target", "100001", "--shots", "200", "--out", s(&out)]);
    let rows = csv_rows(&read(out.join("diffuse.csv")));
    assert!(!rows.is_empty());
    for r in rows {
        let d: f64 = r[4].parse().unwrap();
        assert!((0.0..=1.0).contains(&d));
        if r[0] == "100001" {
            assert_eq!(d, 0.0);
            assert_eq!(r[2], "0");
        }
    }
}

#[test]
fn check_suites_pass_and_fail_on_faults() {
    let dir = tempfile::tempdir().unwrap();
    for suite in ["metric", "balance", "isometry", "gradient"] {
        let out = dir.path().join(suite);
        let res = ok(&["check", "--suite", suite, "--out", s(&out)]);
        let report: serde_json::Value = serde_json::from_slice(&res.stdout).unwrap();
        assert_eq!(report["passed"], true, "{suite}");
        assert_eq!(report["suite"], suite);

        let bad = rydgen(&["check", "--suite", suite, "--inject-fault", "--out", s(&out)]);
        assert_eq!(bad.status.code(), Some(3), "{suite}");
        let report: serde_json::Value = serde_json::from_slice(&bad.stdout).unwrap();
        assert_eq!(report["passed"], false);
        let failed = report["checks"].as_array().unwrap().iter().find(|c| c["passed"] == false).unwrap();
        if suite == "metric" || suite == "balance" {
            assert!(!failed["witness"].as_array().unwrap().is_empty());
        }
        let saved: serde_json::Value = serde_json::from_str(&read(out.join(format!("check_{suite}.json")))).unwrap();
        assert_eq!(saved, report);
    }
}

#[test]
fn balance_suite_on_configured_lattice() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "grid.toml", GRID);
    let res = ok(&["check", "--suite", "balance", "--config", &cfg, "--out", s(&dir.path().join("c"))]);
    let report: serde_json::Value = serde_json::from_slice(&res.stdout).unwrap();
    for c in report["checks"].as_array().unwrap() {
        assert!(c["value"].as_f64().unwrap() <= 1e-12);
    }
}

#[test]
fn kernel_csv_columns_are_stochastic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "grid.toml", GRID);
    let out = dir.path().join("k");
    ok(&["kernel", "--config", &cfg, "--out", s(&out)]);
    for name in ["proposal_kernel.csv", "channel_kernel.csv"] {
        let text = read(out.join(name));
        assert!(text.starts_with("row,col,probability\n"));
        let mut sums = vec![0.0; 64];
        for r in csv_rows(&text) {
            assert_eq!(r[0].len(), 6);
            let col: usize = r[1].chars().enumerate().map(|(i, c)| usize::from(c == '1') << i).sum();
            sums[col] += r[2].parse::<f64>().unwrap();
        }
        assert!(sums.iter().all(|s| (s - 1.0).abs() < 1e-8), "{name}");
    }
}

#[test]
fn resolved_config_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "grid.toml", LINE);
    let first = dir.path().join("first");
    ok(&["check", "--suite", "isometry", "--config", &cfg, "--seed", "9", "--out", s(&first)]);
    let resolved = read(first.join("run.toml"));
    assert!(resolved.contains("seed = 9"));
    let second = dir.path().join("second");
    let path = first.join("run.toml");
    ok(&["check", "--suite", "isometry", "--config", s(&path), "--out", s(&second)]);
    // only the output directory differs
    assert_eq!(read(second.join("run.toml")), resolved.replace(s(&first), s(&second)));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(rydgen(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(rydgen(&["check", "--suite", "nonsense"]).status.code(), Some(1));
    assert_eq!(rydgen(&["--help"]).status.code(), Some(0));
    let unknown = write_config(dir.path(), "bad.toml", "[channel]\ntemperature = 2.0\n");
    assert_eq!(rydgen(&["kernel", "--config", &unknown]).status.code(), Some(1));
    let no_c6 = write_config(dir.path(), "noc6.toml", "[lattice]\nrows = 1\ncols = 2\n[rydberg]\nomega = 1.0\ndelta = 0.0\n");
    assert_eq!(rydgen(&["kernel", "--config", &no_c6]).status.code(), Some(1));
    let grid = write_config(dir.path(), "grid.toml", GRID);
    let missing = rydgen(&["train", "--config", &grid, "--data", s(&dir.path().join("nope")), "--out", s(&dir.path().join("o"))]);
    assert_eq!(missing.status.code(), Some(2));
    let help = String::from_utf8(rydgen(&["--help"]).stdout).unwrap();
    assert!(help.contains("rad/μs") && help.contains("μm"));
}

#[test]
fn shipped_configs_parse() {
    let dir = tempfile::tempdir().unwrap();
    let configs = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in fs::read_dir(&configs).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            ok(&["check", "--suite", "isometry", "--config", s(&path), "--out", s(&dir.path().join("c"))]);
            seen += 1;
        }
    }
    assert!(seen >= 4);
}
