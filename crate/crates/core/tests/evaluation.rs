mod common;

use common::*;
use onset_core::data::*;
use onset_core::evaluation::*;
use onset_core::models::{Arch, BaselineConfig, BaselineModel, RegPoint};
use onset_core::{SeededRng, Tensor};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};

/// Fraction of (positive, negative) pairs ranked correctly, ties half.
fn pairwise_auc(scores: &[f64], labels: &[bool]) -> Option<f64> {
    let mut wins = 0.0;
    let mut pairs = 0usize;
    for (i, &li) in labels.iter().enumerate() {
        for (j, &lj) in labels.iter().enumerate() {
            if li && !lj {
                pairs += 1;
                if scores[i] > scores[j] {
                    wins += 1.0;
                } else if scores[i] == scores[j] {
                    wins += 0.5;
                }
            }
        }
    }
    (pairs > 0).then(|| wins / pairs as f64)
}

fn tied_instance() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
    (2usize..80).prop_flat_map(|n| {
        (
            prop::collection::vec((0u8..12).prop_map(|k| k as f64 / 4.0), n),
            prop::collection::vec(any::<bool>(), n),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn rank_auc_matches_pairwise_oracle((scores, labels) in tied_instance()) {
        match (auc(&scores, &labels), pairwise_auc(&scores, &labels)) {
            (Some(a), Some(b)) => prop_assert!((a - b).abs() <= 1e-12, "{a} vs {b}"),
            (a, b) => prop_assert_eq!(a, b),
        }
    }

    #[test]
    fn flipped_labels_complement_exactly((scores, labels) in tied_instance()) {
        let flipped: Vec<bool> = labels.iter().map(|l| !l).collect();
        if let (Some(a), Some(b)) = (auc(&scores, &labels), auc(&scores, &flipped)) {
            prop_assert_eq!(a + b, 1.0);
        }
    }

    #[test]
    fn monotone_transforms_preserve_auc(
        raw in prop::collection::vec(-3.0f64..3.0, 2..60),
        seed in 0u64..1000,
        scale in 0.1f64..10.0,
        shift in -5.0f64..5.0,
    ) {
        let mut rng = SeededRng::seed_from_u64(seed);
        let labels: Vec<bool> = raw.iter().map(|_| rng.random_bool(0.4)).collect();
        let base = auc(&raw, &labels);
        let exp: Vec<f64> = raw.iter().map(|s| s.exp()).collect();
        let affine: Vec<f64> = raw.iter().map(|s| scale * s + shift).collect();
        prop_assert_eq!(auc(&exp, &labels), base);
        prop_assert_eq!(auc(&affine, &labels), base);
    }
}

#[test]
fn hand_case() {
    assert_eq!(
        auc(&[0.1, 0.4, 0.35, 0.8], &[false, false, true, true]),
        Some(0.75)
    );
}

#[test]
fn random_scores_are_near_chance() {
    let mut rng = SeededRng::seed_from_u64(12);
    let scores: Vec<f64> = (0..2000).map(|_| rng.random()).collect();
    let labels: Vec<bool> = (0..2000).map(|_| rng.random_bool(0.3)).collect();
    let a = auc(&scores, &labels).unwrap();
    assert!((0.45..=0.55).contains(&a), "{a}");
}

#[test]
fn undefined_cases() {
    assert_eq!(auc(&[0.2, 0.3], &[true, true]), None);
    assert_eq!(auc(&[], &[]), None);
    assert_eq!(auc(&[f64::NAN, 0.3], &[true, false]), None);
    assert_eq!(
        auc_masked(&[0.2, 0.9, 0.5], &[Some(false), None, Some(true)]),
        Some(1.0)
    );
}

fn random_scores(n: usize, m: usize, rng: &mut SeededRng) -> Tensor {
    Tensor::new(vec![n, m], (0..n * m).map(|_| rng.random()).collect()).unwrap()
}

#[test]
fn report_rows_cover_every_scorable_disease_once() {
    let dims = onset_core::models::InputDims {
        labs: 2,
        window: 4,
        diseases: 6,
    };
    let mut examples = random_examples(200, dims, 3);
    // disease 5 has no positives
    for e in &mut examples {
        if e.y[5] == Label::Pos {
            e.y[5] = Label::Neg;
        }
    }
    let refs: Vec<&Example> = examples.iter().collect();
    let mut rng = SeededRng::seed_from_u64(4);
    let models: Vec<ModelScores> = [Arch::Lr, Arch::Lstm, Arch::Cnn1, Arch::Cnn2]
        .into_iter()
        .map(|arch| ModelScores {
            arch,
            probs: random_scores(200, 6, &mut rng),
        })
        .collect();
    let diseases: Vec<(String, String)> = (0..6)
        .map(|d| (format!("D{d}"), format!("disease {d}")))
        .collect();
    let report = evaluate(&models, &refs, &diseases).unwrap();
    let mut codes: Vec<&str> = report.rows.iter().map(|r| r.code.as_str()).collect();
    codes.sort();
    assert_eq!(codes, ["D0", "D1", "D2", "D3", "D4"]);
    assert_eq!(report.omitted, ["D5"]);
    for w in report.rows.windows(2) {
        assert!(w[0].max_auc() >= w[1].max_auc());
    }
    for (d, row) in report
        .rows
        .iter()
        .map(|r| (r.code[1..].parse::<usize>().unwrap(), r))
    {
        let labels: Vec<Option<bool>> = refs
            .iter()
            .map(|e| e.y[d].target().map(|t| t == 1.0))
            .collect();
        assert_eq!(
            row.positives,
            labels.iter().filter(|l| **l == Some(true)).count()
        );
        for (k, m) in models.iter().enumerate() {
            let col: Vec<f64> = (0..200).map(|i| m.probs.data()[i * 6 + d]).collect();
            assert_eq!(row.aucs[k], auc_masked(&col, &labels));
        }
        let deep = row.aucs[1..4]
            .iter()
            .flatten()
            .copied()
            .fold(f64::MIN, f64::max);
        assert_eq!(row.improved, deep - row.aucs[0].unwrap() >= IMPROVEMENT);
    }
    let csv = report.to_csv(false).unwrap();
    assert!(csv
        .starts_with("icd9,description,pos,auc_lr,auc_lstm,auc_cnn1,auc_cnn2,auc_ens,improved\n"));
    assert_eq!(csv.lines().count(), 6);
}

fn linear_cohort(seed: u64) -> (Vec<Example>, Vec<String>) {
    let spec = SynthSpec {
        patients: 600,
        labs: 3,
        diseases: vec![
            PlantedDisease {
                code: "L".into(),
                description: String::new(),
                generator: Generator::Linear {
                    lab: 1,
                    threshold: 0.0,
                    sharpness: 8.0,
                },
            },
            PlantedDisease {
                code: "N".into(),
                description: String::new(),
                generator: Generator::Null { prevalence: 0.4 },
            },
        ],
        ..SynthSpec::default()
    };
    let cohort = synthesize_cohort(&spec, seed).unwrap();
    let stats = compute_norm_stats(&cohort);
    let labs = spec.lab_codes();
    let examples = build_examples(
        &cohort,
        &stats,
        &WindowConfig::default(),
        &labs,
        &spec.disease_codes(),
    )
    .unwrap();
    (examples, labs)
}

fn fitted_baseline(grid: Vec<RegPoint>) -> BaselineModel {
    let (examples, labs) = linear_cohort(31);
    let refs: Vec<&Example> = examples.iter().collect();
    let (train, val) = refs.split_at(450);
    let cfg = BaselineConfig {
        grid,
        ..BaselineConfig::default()
    };
    BaselineModel::fit(train, val, &labs, &["L".to_string(), "N".to_string()], &cfg).unwrap()
}

#[test]
fn infinite_l1_yields_all_zero_weights_ranked_by_name() {
    let model = fitted_baseline(vec![RegPoint {
        l1: f64::INFINITY,
        l2: 0.0,
        dropout: 0.0,
    }]);
    let top = report_top_features(&model, 4);
    assert_eq!(top.len(), 2);
    let mut names = model.feature_names().to_vec();
    names.sort();
    for (_, feats) in &top {
        assert!(feats.iter().all(|f| f.weight == 0.0));
        let got: Vec<&String> = feats.iter().map(|f| &f.name).collect();
        assert_eq!(got, names.iter().take(4).collect::<Vec<_>>());
    }
}

#[test]
fn planted_lab_dominates_and_weights_are_exact() {
    let model = fitted_baseline(BaselineConfig::default().grid);
    let top = report_top_features(&model, 3);
    let (code, feats) = &top[0];
    assert_eq!(code, "L");
    let lab = &model.feature_names()[5];
    let lab_prefix = lab.split(" -").next().unwrap();
    assert!(feats[0].name.starts_with(lab_prefix), "{feats:?}");
    let fit = model.fits()[0].as_ref().unwrap();
    for f in feats {
        let k = model
            .feature_names()
            .iter()
            .position(|n| *n == f.name)
            .unwrap();
        assert_eq!(f.weight.to_bits(), fit.model.weights[k].to_bits());
    }
    let csv = write_top_features(&top);
    let mut rows = csv.lines().skip(1);
    let first: Vec<&str> = rows.next().unwrap().rsplitn(2, ',').collect();
    assert_eq!(
        first[0].parse::<f64>().unwrap().to_bits(),
        feats[0].weight.to_bits()
    );
}

#[test]
fn baseline_checkpoint_round_trips_infinite_l1_and_skipped_diseases() {
    let (mut examples, labs) = linear_cohort(32);
    for e in &mut examples {
        if e.y[1] == Label::Pos {
            e.y[1] = Label::Neg;
        }
    }
    let refs: Vec<&Example> = examples.iter().collect();
    let (train, val) = refs.split_at(450);
    let cfg = BaselineConfig {
        grid: vec![
            RegPoint {
                l1: f64::INFINITY,
                l2: 0.0,
                dropout: 0.0,
            },
            RegPoint::default(),
        ],
        ..BaselineConfig::default()
    };
    let model =
        BaselineModel::fit(train, val, &labs, &["L".to_string(), "N".to_string()], &cfg).unwrap();
    assert!(model.fits()[1].is_none());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("lr.bin");
    model.save(&path).unwrap();
    let back = BaselineModel::load(&path).unwrap();
    assert_eq!(back.fits(), model.fits());
    let bits = |t: Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(
        bits(back.predict(val).unwrap()),
        bits(model.predict(val).unwrap())
    );
}
