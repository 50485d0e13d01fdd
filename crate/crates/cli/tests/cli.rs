use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use onset_cli::commands::{checkpoint_path, load_split, Loaded, Trained};
use onset_cli::{
    evaluate, generate, prepare, report_features, train, CliError, Manifest, RunConfig, Task,
};
use onset_core::data::{write_cohort, PatientRecord};
use onset_core::evaluation::auc_masked;
use onset_core::models::{AnyNetwork, Arch, InputDims};

fn small_config(out: &Path, patients: usize) -> RunConfig {
    let mut cfg = RunConfig::parse(
        r#"
        seed = 5

        [lstm]
        hidden_size = 4
        hidden = [8]

        [cnn1]
        num_filters = 4
        hidden = [8]

        [cnn2]
        vertical_filters = 4
        temporal_filters = 4
        hidden = [8]

        [train]
        max_epochs = 2
        batch_size = 64
        learning_rate = 1.0
        dropout = 0.0

        [baseline]
        epochs = 5
        "#,
    )
    .unwrap();
    cfg.out = out.to_path_buf();
    cfg.synth.patients = patients;
    cfg
}

fn read(path: impl AsRef<Path>) -> Vec<u8> {
    fs::read(path.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", path.as_ref().display()))
}

fn files_of(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                read(&p),
            )
        })
        .collect()
}

fn manifest(dir: &Path) -> Manifest {
    serde_json::from_slice(&read(dir.join("manifest.json"))).unwrap()
}

fn run_binary(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_onset"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

#[test]
fn generate_is_byte_identical_across_runs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    generate(&small_config(a.path(), 60)).unwrap();
    generate(&small_config(b.path(), 60)).unwrap();
    let fa = files_of(&a.path().join("cohort"));
    assert_eq!(fa.len(), 6);
    assert_eq!(fa, files_of(&b.path().join("cohort")));
}

#[test]
fn zero_patients_give_header_only_files() {
    let dir = tempfile::tempdir().unwrap();
    let cohort = generate(&small_config(dir.path(), 0)).unwrap();
    for (name, bytes) in files_of(&cohort) {
        if name.ends_with(".csv") {
            let text = String::from_utf8(bytes).unwrap();
            assert_eq!(text.lines().count(), 1, "{name}: {text:?}");
        }
    }
}

#[test]
fn spec_hash_changes_exactly_when_the_spec_changes() {
    let hash = |cfg: &RunConfig| {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = cfg.clone();
        cfg.out = dir.path().to_path_buf();
        generate(&cfg).unwrap();
        manifest(&dir.path().join("cohort")).inputs["synth_spec_sha256"].clone()
    };
    let base = small_config(Path::new("unused"), 30);
    let h0 = hash(&base);
    let mut other_training = base.clone();
    other_training.train.max_epochs = 9;
    assert_eq!(hash(&other_training), h0);
    let mut other_spec = base.clone();
    other_spec.synth.noise = 0.25;
    assert_ne!(hash(&other_spec), h0);
    let mut other_disease = base.clone();
    other_disease.synth.diseases[0].description = "changed".into();
    assert_ne!(hash(&other_disease), h0);
}

/// `(patient, month)` pairs of the given CSV, read as plain text.
fn month_rows(path: &Path, code_column: Option<usize>) -> Vec<(u64, u32, String)> {
    String::from_utf8(read(path))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            let code = code_column.map(|c| f[c].to_string()).unwrap_or_default();
            (f[0].parse().unwrap(), f[1].parse().unwrap(), code)
        })
        .collect()
}

#[test]
fn positive_counts_match_an_independent_tally() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), 150);
    generate(&cfg).unwrap();
    let counts = prepare(&cfg).unwrap();

    let cohort = cfg.cohort_dir();
    let mut lab_months: BTreeMap<u64, BTreeSet<u32>> = BTreeMap::new();
    for (id, m, _) in month_rows(&cohort.join("labs.csv"), None) {
        lab_months.entry(id).or_default().insert(m);
    }
    let dx = month_rows(&cohort.join("dx.csv"), Some(2));
    let (b, gap, horizon) = (cfg.window.window as u32, cfg.window.gap, cfg.window.horizon);
    let mut tally: BTreeMap<String, usize> = BTreeMap::new();
    for (id, months) in &lab_months {
        let (first, last) = (*months.first().unwrap(), *months.last().unwrap());
        for t in (first + b - 1)..=last {
            if !months.iter().any(|&m| m + b > t && m <= t) {
                continue;
            }
            for (code, _) in cfg.disease_list() {
                let mine: Vec<u32> = dx
                    .iter()
                    .filter(|r| r.0 == *id && r.2 == code)
                    .map(|r| r.1)
                    .collect();
                if mine.iter().any(|&m| m <= t + gap) {
                    continue;
                }
                let window: BTreeSet<u32> = mine
                    .into_iter()
                    .filter(|&m| m <= t + gap + horizon)
                    .collect();
                if window.len() >= 2 {
                    *tally.entry(code).or_default() += 1;
                }
            }
        }
    }
    let mut counted: BTreeMap<String, usize> = BTreeMap::new();
    for c in &counts {
        for (code, [pos, _, _]) in &c.labels {
            *counted.entry(code.clone()).or_default() += pos;
        }
    }
    assert_eq!(counted, tally);
    assert_eq!(
        counts.iter().map(|c| c.patients).sum::<usize>(),
        lab_months.len()
    );
    let csv = String::from_utf8(read(cfg.prepared_dir().join("counts.csv"))).unwrap();
    assert_eq!(csv.lines().count(), 1 + 3 * 3);
}

#[test]
fn yearly_stride_bounds_windows_per_patient() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config(dir.path(), 80);
    cfg.synth.history = 60;
    cfg.window.window = 12;
    cfg.window.stride = 12;
    generate(&cfg).unwrap();
    prepare(&cfg).unwrap();
    let mut span: BTreeMap<u64, (u32, u32)> = BTreeMap::new();
    for (id, m, _) in month_rows(&cfg.cohort_dir().join("labs.csv"), None) {
        let e = span.entry(id).or_insert((m, m));
        e.0 = e.0.min(m);
        e.1 = e.1.max(m);
    }
    let mut windows: BTreeMap<u64, usize> = BTreeMap::new();
    for split in ["train", "val", "test"] {
        let text =
            String::from_utf8(read(cfg.prepared_dir().join(format!("{split}.jsonl")))).unwrap();
        for line in text.lines() {
            let v: serde_json::Value = serde_json::from_str(line).unwrap();
            *windows
                .entry(v["patient_id"].as_u64().unwrap())
                .or_default() += 1;
        }
    }
    assert!(!windows.is_empty());
    for (id, n) in windows {
        let (first, last) = span[&id];
        let months = (last - first + 1) as usize;
        assert!(
            n <= months.div_ceil(12),
            "patient {id}: {n} windows over {months} months"
        );
    }
}

#[test]
fn prepare_rerun_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), 90);
    generate(&cfg).unwrap();
    prepare(&cfg).unwrap();
    let first = files_of(&cfg.prepared_dir());
    prepare(&cfg).unwrap();
    assert_eq!(files_of(&cfg.prepared_dir()), first);
    assert!(first.contains_key("train.bin") && first.contains_key("stats.json"));
}

#[test]
fn reloaded_checkpoints_reproduce_validation_auc() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), 200);
    generate(&cfg).unwrap();
    prepare(&cfg).unwrap();
    let trained = train(&cfg, &[Arch::Cnn2, Arch::Lstm, Arch::Cnn1, Arch::Lr]).unwrap();
    let val = load_split(&cfg, "val").unwrap();
    let m = val.meta.diseases.len();
    let labels = |d: usize| -> Vec<Option<bool>> {
        val.examples
            .iter()
            .map(|e| e.y[d].target().map(|t| t == 1.0))
            .collect()
    };
    for t in trained {
        let (arch, expected): (Arch, Vec<Option<f64>>) = match t {
            Trained::Network { arch, fit } => (
                arch,
                fit.history[fit.best_epoch.unwrap() - 1].val_aucs.clone(),
            ),
            Trained::Baseline(model) => (
                Arch::Lr,
                model
                    .fits()
                    .iter()
                    .map(|f| f.as_ref().and_then(|f| f.val_auc))
                    .collect(),
            ),
        };
        let probs = Loaded::read(&checkpoint_path(&cfg, arch))
            .unwrap()
            .predict(&val)
            .unwrap();
        for (d, want) in expected.iter().enumerate() {
            let col: Vec<f64> = (0..val.examples.len())
                .map(|i| probs.data()[i * m + d])
                .collect();
            let got = auc_masked(&col, &labels(d));
            match (got, want) {
                (Some(g), Some(w)) => {
                    assert!((g - w).abs() <= 1e-12, "{arch} disease {d}: {g} vs {w}")
                }
                (g, w) => assert_eq!(g, *w, "{arch} disease {d}"),
            }
        }
    }
}

fn prepared_run(patients: usize) -> (tempfile::TempDir, RunConfig) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), patients);
    generate(&cfg).unwrap();
    prepare(&cfg).unwrap();
    (dir, cfg)
}

#[test]
fn single_checkpoint_reports_equal_the_ensemble() {
    let (_dir, cfg) = prepared_run(200);
    train(&cfg, &[Arch::Lr, Arch::Cnn2]).unwrap();
    let test = load_split(&cfg, "test").unwrap();
    let evaluable = (0..test.meta.diseases.len())
        .filter(|&d| {
            let known: BTreeSet<bool> = test
                .examples
                .iter()
                .filter_map(|e| e.y[d].target().map(|t| t == 1.0))
                .collect();
            known.len() == 2
        })
        .count();
    for arch in [Arch::Lr, Arch::Cnn2] {
        let report = evaluate(&cfg, &[checkpoint_path(&cfg, arch)], false).unwrap();
        assert_eq!(report.rows.len(), evaluable);
        for row in &report.rows {
            assert_eq!(row.ensemble(), row.auc_of(arch));
            assert!(row.aucs.iter().filter(|a| a.is_some()).count() == 2);
        }
    }
    let first = evaluate(&cfg, &[], false).unwrap();
    let bytes = read(cfg.reports_dir().join("report.csv"));
    let second = evaluate(&cfg, &[], false).unwrap();
    assert_eq!(first, second);
    assert_eq!(read(cfg.reports_dir().join("report.csv")), bytes);
    assert!(cfg.reports_dir().join("top_features.csv").is_file());
}

#[test]
fn mismatched_checkpoint_is_rejected() {
    let (dir, cfg) = prepared_run(120);
    let wrong = InputDims {
        labs: 5,
        window: 36,
        diseases: 3,
    };
    let net = AnyNetwork::build(Arch::Cnn2, cfg.arch_spec(Arch::Cnn2), wrong, 1).unwrap();
    let path = dir.path().join("wrong.bin");
    net.save(&path).unwrap();
    let err = evaluate(&cfg, &[path.clone()], false).unwrap_err();
    assert!(
        matches!(err, CliError::Core(onset_core::Error::Dimension(_))),
        "{err}"
    );
    assert_eq!(err.exit_code(), 3);
    let err = report_features(&cfg, Some(&path), None).unwrap_err();
    assert_eq!(err.exit_code(), 2);
}

fn write_config(dir: &Path, cfg: &RunConfig) -> PathBuf {
    let path = dir.join("run.toml");
    fs::write(&path, toml::to_string(cfg).unwrap()).unwrap();
    path
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let mut cfg = small_config(&out, 120);
    cfg.seed = None;
    let config = write_config(dir.path(), &cfg);
    let config = config.to_str().unwrap();

    let missing_seed = run_binary(&["--config", config, "generate"]);
    assert_eq!(missing_seed.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing_seed.stderr).contains("seed"));

    let no_cohort = run_binary(&["--config", config, "--seed", "3", "prepare"]);
    assert_eq!(no_cohort.status.code(), Some(2));

    for step in ["generate", "prepare"] {
        let ok = run_binary(&["--config", config, "--seed", "3", step]);
        assert_eq!(
            ok.status.code(),
            Some(0),
            "{}",
            String::from_utf8_lossy(&ok.stderr)
        );
    }
    let ok = run_binary(&[
        "--config", config, "--seed", "3", "train", "--arch", "lr,cnn1",
    ]);
    assert_eq!(
        ok.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&ok.stderr)
    );
    let report = run_binary(&["--config", config, "--threads", "1", "evaluate"]);
    assert_eq!(report.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&report.stdout).starts_with("icd9,description,pos,auc_lr"));

    let bad_flag = run_binary(&["--config", config, "--threads", "0", "evaluate"]);
    assert_eq!(bad_flag.status.code(), Some(2));

    let labs = out.join("cohort").join("labs.csv");
    let mut text = fs::read_to_string(&labs).unwrap();
    text.push_str("7,not-a-month,2160-0,1.0\n");
    let line = text.lines().count();
    fs::write(&labs, text).unwrap();
    let malformed = run_binary(&["--config", config, "--seed", "3", "prepare"]);
    assert_eq!(malformed.status.code(), Some(3));
    let stderr = String::from_utf8_lossy(&malformed.stderr);
    assert!(stderr.contains(&format!("line {line}")), "{stderr}");
}

#[test]
fn manifests_record_config_seed_and_artifacts() {
    let (_dir, cfg) = prepared_run(80);
    for dir in [cfg.cohort_dir(), cfg.prepared_dir()] {
        let m = manifest(&dir);
        assert_eq!(m.seed, Some(5));
        assert_eq!(m.config_sha256, cfg.hash());
        assert_eq!(m.tool_version, env!("CARGO_PKG_VERSION"));
        for (name, art) in &m.artifacts {
            assert_eq!(
                art.sha256,
                onset_cli::config::sha256_hex(&read(dir.join(name)))
            );
        }
    }
    assert_eq!(manifest(&cfg.prepared_dir()).artifacts.len(), 9);
}

fn ckd_record(id: u64, egfr: &[u32], outcome: Option<u32>) -> PatientRecord {
    let mut r = PatientRecord::new(id);
    for &m in egfr {
        r.add_lab("33914-3", m, 20.0 + m as f64 / 10.0);
        r.add_lab("2160-0", m, 3.0);
    }
    if let Some(m) = outcome {
        r.procedures.push((m, "90935".into()));
    }
    r.gender = Some("F".into());
    r.birth_year = Some(1950);
    r.canonicalize();
    r
}

#[test]
fn kidney_failure_task_prepares_single_outcome_sets() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config(dir.path(), 0);
    cfg.task = Task::Ckd;
    let records: Vec<PatientRecord> = (1..=40)
        .map(|id| ckd_record(id, &[0, 3, 6, 9, 12], (id % 2 == 0).then_some(20)))
        .collect();
    fs::create_dir_all(cfg.cohort_dir()).unwrap();
    write_cohort(&cfg.cohort_dir(), &records).unwrap();
    assert_eq!(generate(&cfg).unwrap_err().exit_code(), 2);

    let counts = prepare(&cfg).unwrap();
    assert_eq!(counts.iter().map(|c| c.examples).sum::<usize>(), 80);
    let train_set = load_split(&cfg, "train").unwrap();
    assert_eq!(train_set.meta.labs.len(), 46);
    assert_eq!(train_set.meta.window, 12);
    assert_eq!(train_set.meta.diseases, ["kidney_failure"]);
    let positives: usize = counts.iter().map(|c| c.labels[0].1[0]).sum();
    assert_eq!(positives, 40);
}
