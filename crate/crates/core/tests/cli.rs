use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mcbm::cli::{sha256_hex, Manifest};
use mcbm::data::{load_concept_dataset, DatasetFormat, LoadOptions};
use mcbm::info::{mrmr_rank, MrmrOptions};

fn mcbm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mcbm"))
        .args(args)
        .output()
        .expect("spawn mcbm")
}

fn ok(args: &[&str]) -> Output {
    let out = mcbm(args);
    assert!(
        out.status.success(),
        "mcbm {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn manifest(path: &Path) -> Manifest {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

fn snapshot(m: &Manifest) -> Vec<(String, Vec<u8>)> {
    m.output_files
        .iter()
        .map(|f| (f.path.clone(), std::fs::read(&f.path).unwrap()))
        .collect()
}

/// Small synthetic dataset directory.
fn synth(dir: &Path, n: usize, seed: u64) -> PathBuf {
    let out = dir.join("synth");
    ok(&[
        "synth",
        "--n",
        &n.to_string(),
        "--seed",
        &seed.to_string(),
        "-o",
        s(&out),
    ]);
    out
}

#[test]
fn exit_codes() {
    assert_eq!(mcbm(&["--help"]).status.code(), Some(0));
    assert_eq!(mcbm(&["--version"]).status.code(), Some(0));
    assert_eq!(mcbm(&["rank", "--no-such-flag"]).status.code(), Some(2));
    assert_eq!(mcbm(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(mcbm(&[]).status.code(), Some(2));

    let dir = tempfile::tempdir().unwrap();
    let missing = mcbm(&[
        "rank",
        "--data",
        s(&dir.path().join("nope.csv")),
        "-o",
        s(&dir.path().join("r.csv")),
    ]);
    assert_eq!(missing.status.code(), Some(1));
    assert!(
        String::from_utf8_lossy(&missing.stderr).starts_with("error[io]"),
        "{:?}",
        missing
    );

    let no_output = mcbm(&["rank", "--data", "x.csv"]);
    assert_eq!(no_output.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&no_output.stderr).starts_with("error["));

    let bad = mcbm(&["synth", "--levels", "0", "-o", s(&dir.path().join("s"))]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(!dir.path().join("s").join("manifest.json").exists());
}

#[test]
fn synth_writes_dataset_and_hashed_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = synth(dir.path(), 120, 4);
    let m = manifest(&out.join("manifest.json"));
    assert_eq!(m.command, "synth");
    assert_eq!(m.tool_version, env!("CARGO_PKG_VERSION"));
    assert_eq!(m.resolved_config["n"], 120);
    assert_eq!(m.resolved_config["seed"], 4);
    let names: Vec<&str> = m
        .output_files
        .iter()
        .map(|f| f.path.rsplit('/').next().unwrap())
        .collect();
    assert_eq!(names, ["dataset.csv", "planted_levels.csv"]);
    for f in &m.output_files {
        assert_eq!(f.sha256, sha256_hex(&std::fs::read(&f.path).unwrap()), "{}", f.path);
    }
    let ds = load_concept_dataset(out.join("dataset.csv"), DatasetFormat::Csv, &LoadOptions::default()).unwrap();
    assert_eq!(ds.n_samples(), 120);
    let planted = std::fs::read_to_string(out.join("planted_levels.csv")).unwrap();
    assert_eq!(planted.lines().next(), Some("sample_id,planted_level,oracle_level"));
    assert_eq!(planted.lines().count(), 121);
}

#[test]
fn rank_matches_library_and_writes_header() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), 300, 9).join("dataset.csv");
    let out = dir.path().join("ranking.csv");
    ok(&["rank", "--data", s(&data), "-o", s(&out)]);
    let text = std::fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("rank,concept_index,concept_name,score,relevance,redundancy")
    );
    let cli_order: Vec<usize> = lines.map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();

    let ds = load_concept_dataset(&data, DatasetFormat::Csv, &LoadOptions::default()).unwrap();
    let lib = mrmr_rank(&ds, &MrmrOptions::default()).unwrap();
    assert_eq!(cli_order, lib.order());

    let m = manifest(&dir.path().join("ranking.csv.manifest.json"));
    assert_eq!(m.input_hashes[s(&data)], sha256_hex(&std::fs::read(&data).unwrap()));
}

#[test]
fn rank_excludes_named_concepts() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), 200, 2).join("dataset.csv");
    let ds = load_concept_dataset(&data, DatasetFormat::Csv, &LoadOptions::default()).unwrap();
    let name = ds.concept_names()[0].clone();
    let out = dir.path().join("r.csv");
    ok(&["rank", "--data", s(&data), "--exclude", &name, "-o", s(&out)]);
    let text = std::fs::read_to_string(&out).unwrap();
    let last = text.lines().last().unwrap();
    assert_eq!(last.split(',').nth(2), Some(name.as_str()));

    let bad = mcbm(&["rank", "--data", s(&data), "--exclude", "not_a_concept", "-o", s(&out)]);
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn train_evaluate_intervene_chain() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), 400, 6).join("dataset.csv");
    let run = dir.path().join("run");
    ok(&[
        "train",
        "--data",
        s(&data),
        "--epochs",
        "4",
        "--seed",
        "3",
        "-o",
        s(&run),
    ]);
    for f in ["model.json", "history.csv", "ranking.csv", "manifest.json"] {
        assert!(run.join(f).exists(), "{f}");
    }
    let model = run.join("model.json");

    let stdout = ok(&["evaluate", "--model", s(&model), "--data", s(&data)]).stdout;
    let metrics: serde_json::Value = serde_json::from_slice(&stdout).unwrap();
    let rows = metrics.as_array().unwrap();
    assert!(!rows.is_empty());
    for r in rows {
        let acc = r["accuracy"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&acc));
    }

    let iv = dir.path().join("iv");
    ok(&["intervene", "--model", s(&model), "--data", s(&data), "-o", s(&iv)]);
    for f in ["curves.csv", "traces.csv", "levels.json", "manifest.json"] {
        assert!(iv.join(f).exists(), "{f}");
    }
    let curves = std::fs::read_to_string(iv.join("curves.csv")).unwrap();
    assert!(curves.lines().count() > 1);

    let wrong = mcbm(&["evaluate", "--model", s(&data), "--data", s(&data)]);
    assert_eq!(wrong.status.code(), Some(1));
}

#[test]
fn manifests_reproduce_outputs_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let synth_dir = synth(dir.path(), 250, 12);
    let data = synth_dir.join("dataset.csv");
    let rank_out = dir.path().join("ranking.csv");
    ok(&["rank", "--data", s(&data), "-o", s(&rank_out)]);
    let run = dir.path().join("run");
    ok(&[
        "train",
        "--data",
        s(&data),
        "--epochs",
        "3",
        "--mode",
        "efficient",
        "-o",
        s(&run),
    ]);
    let iv = dir.path().join("iv");
    ok(&[
        "intervene",
        "--model",
        s(&run.join("model.json")),
        "--data",
        s(&data),
        "-o",
        s(&iv),
    ]);

    for (cmd, manifest_path) in [
        ("synth", synth_dir.join("manifest.json")),
        ("rank", dir.path().join("ranking.csv.manifest.json")),
        ("train", run.join("manifest.json")),
        ("intervene", iv.join("manifest.json")),
    ] {
        let before = manifest(&manifest_path);
        let files = snapshot(&before);
        let copy = dir.path().join(format!("{cmd}.manifest.json"));
        std::fs::copy(&manifest_path, &copy).unwrap();
        ok(&[cmd, "--config", s(&copy)]);
        let after = manifest(&manifest_path);
        assert_eq!(before, after, "{cmd}");
        assert_eq!(files, snapshot(&after), "{cmd}");
    }
}

#[test]
fn flags_override_config_file_over_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("conf.json");
    std::fs::write(&conf, r#"{"n": 50, "seed": 7}"#).unwrap();

    let a = dir.path().join("a");
    ok(&["synth", "--config", s(&conf), "-o", s(&a)]);
    let m = manifest(&a.join("manifest.json"));
    assert_eq!(m.resolved_config["n"], 50);
    assert_eq!(m.resolved_config["seed"], 7);
    assert_eq!(
        m.resolved_config["levels"],
        serde_json::to_value(mcbm::data::SyntheticSpec::default().levels).unwrap()
    );

    let b = dir.path().join("b");
    ok(&["synth", "--config", s(&conf), "--n", "70", "-o", s(&b)]);
    let m = manifest(&b.join("manifest.json"));
    assert_eq!(m.resolved_config["n"], 70);
    assert_eq!(m.resolved_config["seed"], 7);

    std::fs::write(&conf, r#"{"n": 50, "bogus": 1}"#).unwrap();
    assert_eq!(
        mcbm(&["synth", "--config", s(&conf), "-o", s(&a)]).status.code(),
        Some(1)
    );
}

#[test]
fn manifest_from_another_command_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let synth_dir = synth(dir.path(), 60, 1);
    let out = mcbm(&["rank", "--config", s(&synth_dir.join("manifest.json"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("synth"));
}
