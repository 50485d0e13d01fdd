use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use onset_core::container::NamedTensors;
use onset_core::data::{
    build_ckd_examples, build_examples, compute_norm_stats, filter_cohort, read_cohort,
    split_by_patient, synthesize_cohort, write_cohort, Example, ExampleSet, ExampleSetMeta, Label,
    NormStats, PatientId, PatientRecord, Split, SplitPart, DEMO_FILE, DX_FILE, LABS_FILE, PX_FILE,
    RX_FILE,
};
use onset_core::evaluation::{
    self, report_top_features, write_top_features, EvalReport, ModelScores,
};
use onset_core::models::{
    checkpoint_arch, AnyNetwork, Arch, BaselineConfig, BaselineModel, InputDims,
};
use onset_core::training::{fit_any, FitResult, TrainConfig};

use crate::config::{sha256_hex, RunConfig, Task, CKD_OUTCOME};
use crate::manifest::Manifest;
use crate::{CliError, Result};

pub const SPLITS: [&str; 3] = ["train", "val", "test"];
pub const STATS_FILE: &str = "stats.json";
pub const COUNTS_FILE: &str = "counts.csv";
pub const SIZES_FILE: &str = "splits.csv";
pub const REPORT_FILE: &str = "report.csv";
pub const TOP_FEATURES_FILE: &str = "top_features.csv";

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

fn require_dir(dir: &Path, what: &str) -> Result<()> {
    if dir.is_dir() {
        Ok(())
    } else {
        Err(CliError::Config(format!(
            "{what} directory {} does not exist",
            dir.display()
        )))
    }
}

/// Writes a synthetic cohort to the cohort directory.
pub fn generate(cfg: &RunConfig) -> Result<PathBuf> {
    if cfg.task != Task::Multidisease {
        return Err(CliError::Config(
            "synthetic generation covers the multidisease task only".into(),
        ));
    }
    let seed = cfg.require_seed()?;
    let records = synthesize_cohort(&cfg.synth, seed)?;
    let dir = cfg.cohort_dir();
    create_dir(&dir)?;
    write_cohort(&dir, &records)?;
    log::info!(
        "wrote {} synthetic patients to {}",
        records.len(),
        dir.display()
    );

    let mut manifest = Manifest::new(cfg.hash(), Some(seed));
    let spec = serde_json::to_string(&cfg.synth).expect("spec serializes");
    manifest
        .inputs
        .insert("synth_spec_sha256".into(), sha256_hex(spec.as_bytes()));
    let files: Vec<String> = [LABS_FILE, DX_FILE, RX_FILE, PX_FILE, DEMO_FILE]
        .iter()
        .map(|f| f.to_string())
        .collect();
    manifest.record(&dir, "generate", &files)?;
    manifest.write(&dir)?;
    Ok(dir)
}

/// Label tallies of one split.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitCounts {
    pub split: &'static str,
    pub patients: usize,
    pub examples: usize,
    /// Per disease: positive, negative and excluded examples.
    pub labels: Vec<(String, [usize; 3])>,
}

fn count_labels(split: &'static str, examples: &[Example], diseases: &[String]) -> SplitCounts {
    let patients: BTreeSet<PatientId> = examples.iter().map(|e| e.patient_id).collect();
    let labels = diseases
        .iter()
        .enumerate()
        .map(|(d, code)| {
            let mut c = [0; 3];
            for e in examples {
                match e.y[d] {
                    Label::Pos => c[0] += 1,
                    Label::Neg => c[1] += 1,
                    Label::Excluded => c[2] += 1,
                }
            }
            (code.clone(), c)
        })
        .collect();
    SplitCounts {
        split,
        patients: patients.len(),
        examples: examples.len(),
        labels,
    }
}

fn partition(examples: Vec<Example>, split: &Split) -> [Vec<Example>; 3] {
    let mut parts: [Vec<Example>; 3] = Default::default();
    for e in examples {
        let k = match split.part_of(e.patient_id) {
            Some(SplitPart::Train) => 0,
            Some(SplitPart::Val) => 1,
            Some(SplitPart::Test) => 2,
            None => continue,
        };
        parts[k].push(e);
    }
    parts
}

fn stats_for(records: &[PatientRecord], split: &Split, train_only: bool) -> NormStats {
    if train_only {
        let train: Vec<PatientRecord> = records
            .iter()
            .filter(|r| split.part_of(r.patient_id) == Some(SplitPart::Train))
            .cloned()
            .collect();
        compute_norm_stats(&train)
    } else {
        compute_norm_stats(records)
    }
}

/// Builds the train/validation/test example sets from the cohort directory.
pub fn prepare(cfg: &RunConfig) -> Result<Vec<SplitCounts>> {
    let seed = cfg.require_seed()?;
    let cohort = cfg.cohort_dir();
    require_dir(&cohort, "cohort")?;
    let records = read_cohort(&cohort)?;
    let read = records.len();

    let (examples, stats, meta) = match cfg.task {
        Task::Multidisease => {
            let records = filter_cohort(records);
            log::info!(
                "{} of {read} patients pass the cohort filter",
                records.len()
            );
            let ids: Vec<PatientId> = records.iter().map(|r| r.patient_id).collect();
            let split = split_by_patient(&ids, cfg.split, seed)?;
            let stats = stats_for(&records, &split, cfg.stats_from_train);
            let labs = cfg.lab_codes();
            let diseases: Vec<String> = cfg.disease_list().into_iter().map(|d| d.0).collect();
            let examples = build_examples(&records, &stats, &cfg.window, &labs, &diseases)?;
            let meta = ExampleSetMeta {
                labs,
                diseases,
                window: cfg.window.window,
            };
            (partition(examples, &split), stats, meta)
        }
        Task::Ckd => {
            let all = compute_norm_stats(&records);
            let probe = build_ckd_examples(&records, &cfg.ckd, Some(&all))?;
            let ids: Vec<PatientId> = probe.iter().map(|e| e.patient_id).collect();
            log::info!(
                "{} of {read} patients contribute kidney-failure examples",
                ids.iter().collect::<BTreeSet<_>>().len()
            );
            let split = split_by_patient(&ids, cfg.split, seed)?;
            let (stats, examples) = if cfg.stats_from_train {
                let stats = stats_for(&records, &split, true);
                let examples = build_ckd_examples(&records, &cfg.ckd, Some(&stats))?;
                (stats, examples)
            } else {
                (all, probe)
            };
            let examples = examples.iter().map(|e| e.to_example()).collect();
            let meta = ExampleSetMeta {
                labs: cfg.ckd.feature_names(),
                diseases: vec![CKD_OUTCOME.into()],
                window: cfg.ckd.year as usize,
            };
            (partition(examples, &split), stats, meta)
        }
    };

    let dir = cfg.prepared_dir();
    create_dir(&dir)?;
    let mut files = Vec::new();
    let mut counts = Vec::new();
    for (name, part) in SPLITS.into_iter().zip(examples) {
        counts.push(count_labels(name, &part, &meta.diseases));
        let set = ExampleSet {
            meta: meta.clone(),
            examples: part,
        };
        set.save(&dir, name)?;
        files.push(format!("{name}.bin"));
        files.push(format!("{name}.jsonl"));
    }
    let stats_json = serde_json::to_string_pretty(&stats).map_err(onset_core::Error::from)?;
    write_file(&dir.join(STATS_FILE), stats_json + "\n")?;
    write_file(&dir.join(COUNTS_FILE), counts_csv(&counts))?;
    write_file(&dir.join(SIZES_FILE), sizes_csv(&counts))?;
    files.extend([STATS_FILE, COUNTS_FILE, SIZES_FILE].map(String::from));
    for c in &counts {
        log::info!(
            "{}: {} patients, {} examples",
            c.split,
            c.patients,
            c.examples
        );
    }

    let mut manifest = Manifest::new(cfg.hash(), Some(seed));
    manifest.record(&dir, "prepare", &files)?;
    manifest.write(&dir)?;
    Ok(counts)
}

fn counts_csv(counts: &[SplitCounts]) -> String {
    let mut out = String::from("split,icd9,pos,neg,excluded\n");
    for c in counts {
        for (code, [p, n, x]) in &c.labels {
            let _ = writeln!(out, "{},{code},{p},{n},{x}", c.split);
        }
    }
    out
}

fn sizes_csv(counts: &[SplitCounts]) -> String {
    let mut out = String::from("split,patients,examples\n");
    for c in counts {
        let _ = writeln!(out, "{},{},{}", c.split, c.patients, c.examples);
    }
    out
}

pub fn load_split(cfg: &RunConfig, name: &str) -> Result<ExampleSet> {
    let dir = cfg.prepared_dir();
    require_dir(&dir, "prepared examples")?;
    Ok(ExampleSet::load(&dir, name)?)
}

fn dims_of(meta: &ExampleSetMeta) -> InputDims {
    InputDims {
        labs: meta.labs.len(),
        window: meta.window,
        diseases: meta.diseases.len(),
    }
}

pub fn checkpoint_path(cfg: &RunConfig, arch: Arch) -> PathBuf {
    cfg.models_dir().join(format!("{arch}.bin"))
}

/// What training produced for one architecture.
#[derive(Debug)]
pub enum Trained {
    Network { arch: Arch, fit: FitResult },
    Baseline(BaselineModel),
}

/// Trains each architecture on the prepared training split, selecting on
/// the validation split, and writes one checkpoint per architecture.
pub fn train(cfg: &RunConfig, archs: &[Arch]) -> Result<Vec<Trained>> {
    let seed = cfg.require_seed()?;
    let archs = if archs.is_empty() {
        &cfg.models[..]
    } else {
        archs
    };
    if archs.is_empty() {
        return Err(CliError::Config("no model selected for training".into()));
    }
    let train_set = load_split(cfg, "train")?;
    let val_set = load_split(cfg, "val")?;
    let meta = &train_set.meta;
    let tr = train_set.refs();
    let va = val_set.refs();
    let dims = dims_of(meta);
    let dir = cfg.models_dir();
    create_dir(&dir)?;

    let mut manifest = Manifest::open(&dir, cfg.hash(), Some(seed));
    let mut out = Vec::new();
    for &arch in archs {
        log::info!("training {arch} on {} examples", tr.len());
        let path = checkpoint_path(cfg, arch);
        let mut files = vec![format!("{arch}.bin")];
        match arch {
            Arch::Lr => {
                let bcfg = BaselineConfig {
                    seed,
                    ..cfg.baseline.clone()
                };
                let model = BaselineModel::fit(&tr, &va, &meta.labs, &meta.diseases, &bcfg)?;
                model.save(&path)?;
                write_file(&dir.join("lr_selection.csv"), selection_csv(&model))?;
                files.push("lr_selection.csv".into());
                out.push(Trained::Baseline(model));
            }
            _ => {
                let mut net = AnyNetwork::build(arch, cfg.arch_spec(arch), dims, seed)?;
                let tcfg = TrainConfig {
                    seed,
                    ..cfg.train.clone()
                };
                let fit = fit_any(&mut net, &tr, &va, &tcfg)?;
                net.save(&path)?;
                let history = format!("{arch}_history.csv");
                write_file(&dir.join(&history), fit.history_csv(&meta.diseases))?;
                files.push(history);
                out.push(Trained::Network { arch, fit });
            }
        }
        manifest.record(&dir, "train", &files)?;
    }
    manifest.write(&dir)?;
    Ok(out)
}

fn selection_csv(model: &BaselineModel) -> String {
    let mut out = String::from("icd9,l1,l2,dropout,val_auc\n");
    for (code, fit) in model.diseases().iter().zip(model.fits()) {
        match fit {
            Some(f) => {
                let auc = f.val_auc.map(|a| a.to_string()).unwrap_or_default();
                let _ = writeln!(
                    out,
                    "{code},{},{},{},{auc}",
                    f.point.l1, f.point.l2, f.point.dropout
                );
            }
            None => {
                let _ = writeln!(out, "{code},,,,");
            }
        }
    }
    out
}

/// A checkpoint of either kind, read from disk.
pub enum Loaded {
    Network(AnyNetwork),
    Baseline(BaselineModel),
}

impl Loaded {
    pub fn read(path: &Path) -> Result<Self> {
        if !path.is_file() {
            return Err(CliError::Config(format!(
                "checkpoint {} does not exist",
                path.display()
            )));
        }
        let stored = NamedTensors::read(path)?;
        Ok(match checkpoint_arch(&stored)? {
            Arch::Lr => Loaded::Baseline(BaselineModel::from_named(stored)?),
            _ => Loaded::Network(AnyNetwork::from_named(&stored)?),
        })
    }

    pub fn arch(&self) -> Arch {
        match self {
            Loaded::Network(n) => n.arch(),
            Loaded::Baseline(_) => Arch::Lr,
        }
    }

    /// Probabilities on `set`, after checking the checkpoint was built for
    /// the same input layout and diseases.
    pub fn predict(&self, set: &ExampleSet) -> Result<onset_core::Tensor> {
        let dims = dims_of(&set.meta);
        let mismatch = |what: String| {
            CliError::Core(onset_core::Error::Dimension(format!(
                "{} checkpoint does not match the examples: {what}",
                self.arch()
            )))
        };
        match self {
            Loaded::Network(net) => {
                if net.dims() != dims {
                    return Err(mismatch(format!("{:?} vs {:?}", net.dims(), dims)));
                }
                Ok(net.predict(&set.refs())?)
            }
            Loaded::Baseline(model) => {
                if model.diseases() != set.meta.diseases {
                    return Err(mismatch("disease lists differ".into()));
                }
                if model.feature_names().len() != 5 * dims.labs {
                    return Err(mismatch(format!(
                        "{} features for {} input rows",
                        model.feature_names().len(),
                        dims.labs
                    )));
                }
                Ok(model.predict(&set.refs())?)
            }
        }
    }
}

fn default_checkpoints(cfg: &RunConfig) -> Vec<PathBuf> {
    cfg.models
        .iter()
        .map(|&a| checkpoint_path(cfg, a))
        .filter(|p| p.is_file())
        .collect()
}

/// Scores the test split with every checkpoint and writes the report CSV,
/// plus top baseline features when a baseline checkpoint is among them.
pub fn evaluate(
    cfg: &RunConfig,
    checkpoints: &[PathBuf],
    full_precision: bool,
) -> Result<EvalReport> {
    let paths = if checkpoints.is_empty() {
        default_checkpoints(cfg)
    } else {
        checkpoints.to_vec()
    };
    if paths.is_empty() {
        return Err(CliError::Config(format!(
            "no checkpoints given and none found in {}",
            cfg.models_dir().display()
        )));
    }
    let test = load_split(cfg, "test")?;
    let mut scores = Vec::new();
    let mut baseline = None;
    for path in &paths {
        let model = Loaded::read(path)?;
        let arch = model.arch();
        if scores.iter().any(|s: &ModelScores| s.arch == arch) {
            return Err(CliError::Config(format!("two {arch} checkpoints given")));
        }
        let probs = model.predict(&test)?;
        scores.push(ModelScores { arch, probs });
        if let Loaded::Baseline(m) = model {
            baseline = Some(m);
        }
    }
    let described = cfg.disease_list();
    let diseases: Vec<(String, String)> = test
        .meta
        .diseases
        .iter()
        .map(|code| {
            let desc = described
                .iter()
                .find(|d| &d.0 == code)
                .map(|d| d.1.clone())
                .unwrap_or_default();
            (code.clone(), desc)
        })
        .collect();
    let report = evaluation::evaluate(&scores, &test.refs(), &diseases)?;
    for code in &report.omitted {
        log::warn!("{code}: a single class among test labels, left out of the report");
    }

    let dir = cfg.reports_dir();
    create_dir(&dir)?;
    write_file(&dir.join(REPORT_FILE), report.to_csv(full_precision)?)?;
    let mut files = vec![REPORT_FILE.to_string()];
    if let Some(model) = &baseline {
        let top = report_top_features(model, cfg.top_features);
        write_file(&dir.join(TOP_FEATURES_FILE), write_top_features(&top))?;
        files.push(TOP_FEATURES_FILE.into());
    }
    let mut manifest = Manifest::open(&dir, cfg.hash(), cfg.seed);
    manifest.record(&dir, "evaluate", &files)?;
    manifest.write(&dir)?;
    Ok(report)
}

/// Writes the `top` heaviest features per disease of a baseline checkpoint.
pub fn report_features(
    cfg: &RunConfig,
    checkpoint: Option<&Path>,
    top: Option<usize>,
) -> Result<PathBuf> {
    let path = checkpoint
        .map(Path::to_path_buf)
        .unwrap_or_else(|| checkpoint_path(cfg, Arch::Lr));
    let model = match Loaded::read(&path)? {
        Loaded::Baseline(m) => m,
        Loaded::Network(n) => {
            return Err(CliError::Config(format!(
                "{} holds a {} network; feature weights need a baseline checkpoint",
                path.display(),
                n.arch()
            )))
        }
    };
    let ranked = report_top_features(&model, top.unwrap_or(cfg.top_features));
    let dir = cfg.reports_dir();
    create_dir(&dir)?;
    let out = dir.join(TOP_FEATURES_FILE);
    write_file(&out, write_top_features(&ranked))?;
    let mut manifest = Manifest::open(&dir, cfg.hash(), cfg.seed);
    manifest.record(&dir, "report-features", &[TOP_FEATURES_FILE.into()])?;
    manifest.write(&dir)?;
    Ok(out)
}
