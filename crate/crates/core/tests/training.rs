mod common;

use common::*;
use onset_core::data::*;
use onset_core::models::{Cnn1, Cnn1Spec, InputDims, Network, Pass};
use onset_core::training::*;
use onset_core::{SeededRng, Tensor};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};

fn label_column(n: usize, positives: usize) -> Vec<Vec<Label>> {
    (0..n)
        .map(|i| {
            vec![if i < positives {
                Label::Pos
            } else {
                Label::Neg
            }]
        })
        .collect()
}

#[test]
fn constant_predictor_balances_classes() {
    for f in [0.5, 0.1, 0.01] {
        let n = 1000;
        let labels = label_column(n, (f * n as f64).round() as usize);
        let refs: Vec<&[Label]> = labels.iter().map(|y| y.as_slice()).collect();
        let w = compute_disease_weights(&refs, 1, Weighting::InverseFrequency);
        let probs = Tensor::new(vec![n, 1], vec![0.5; n]).unwrap();
        let nll = weighted_nll(&probs, &refs, &w).unwrap();
        assert!(
            (nll.positive - nll.negative).abs() < 1e-9,
            "f={f}: {} vs {}",
            nll.positive,
            nll.negative
        );
    }
}

#[test]
fn scaling_weights_scales_loss_and_gradient() {
    let examples = random_examples(20, TINY, 4);
    let refs: Vec<&[Label]> = examples.iter().map(|e| e.y.as_slice()).collect();
    let w = uneven_weights(2);
    let mut rng = SeededRng::seed_from_u64(1);
    let probs = Tensor::new(
        vec![20, 2],
        (0..40).map(|_| rng.random_range(0.01..0.99)).collect(),
    )
    .unwrap();
    let base = weighted_nll(&probs, &refs, &w).unwrap();
    for c in [0.1, 3.0, 250.0] {
        let scaled = weighted_nll(&probs, &refs, &w.scaled(c)).unwrap();
        assert!((scaled.loss - c * base.loss).abs() <= 1e-12 * scaled.loss.abs().max(1.0));
        for (a, b) in scaled.grad.data().iter().zip(base.grad.data()) {
            assert!((a - c * b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }
}

#[test]
fn excluded_entries_are_inert_in_the_loss() {
    let examples = random_examples(30, TINY, 5);
    let refs: Vec<&[Label]> = examples.iter().map(|e| e.y.as_slice()).collect();
    let w = uneven_weights(2);
    let mut rng = SeededRng::seed_from_u64(2);
    let probs = Tensor::new(
        vec![30, 2],
        (0..60).map(|_| rng.random_range(0.01..0.99)).collect(),
    )
    .unwrap();
    let base = weighted_nll(&probs, &refs, &w).unwrap();
    let mut perturbed = probs.clone();
    for (i, y) in refs.iter().enumerate() {
        for (d, l) in y.iter().enumerate() {
            if *l == Label::Excluded {
                perturbed.data_mut()[i * 2 + d] = rng.random_range(0.01..0.99);
                assert_eq!(base.grad.data()[i * 2 + d], 0.0);
            }
        }
    }
    let again = weighted_nll(&perturbed, &refs, &w).unwrap();
    assert_eq!(base.loss.to_bits(), again.loss.to_bits());
    let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&base.grad), bits(&again.grad));
}

/// Parameter gradients of a network on a batch, without batch norm or dropout.
fn param_grads<N: Network>(net: &N, examples: &[Example], w: &DiseaseWeights) -> Vec<Vec<u64>> {
    let refs: Vec<&Example> = examples.iter().collect();
    let x = net.input(&refs).unwrap();
    let mut rng = SeededRng::seed_from_u64(0);
    let mut pass = Pass::train(&mut rng, 0.0);
    let (probs, cache) = net.forward(&x, &mut pass).unwrap();
    let labels: Vec<&[Label]> = examples.iter().map(|e| e.y.as_slice()).collect();
    let nll = weighted_nll(&probs, &labels, w).unwrap();
    let grads = net.backward(&cache, &nll.grad).unwrap();
    (0..net.params().len())
        .map(|k| {
            grads
                .get_or_zeros(k, net.params())
                .data()
                .iter()
                .map(|v| v.to_bits())
                .collect()
        })
        .collect()
}

#[test]
fn excluded_perturbations_leave_network_gradients_bitwise_unchanged() {
    let w = uneven_weights(2);
    let nets: Vec<Box<dyn Fn(&[Example]) -> Vec<Vec<u64>>>> = vec![
        Box::new(|e| param_grads(&tiny_cnn1(false, 1), e, &w)),
        Box::new(|e| param_grads(&tiny_cnn2(false, 2), e, &w)),
        Box::new(|e| param_grads(&tiny_lstm(false, false, 3), e, &w)),
    ];
    for grads_of in nets {
        let mut examples = random_examples(8, TINY, 6);
        let base = grads_of(&examples);
        // An extra example whose every label is excluded, with arbitrary inputs.
        let mut extra = random_examples(1, TINY, 99).remove(0);
        extra.y = vec![Label::Excluded; 2];
        examples.push(extra);
        assert_eq!(grads_of(&examples), base);
        // Changing the inputs of the excluded example changes nothing either.
        let last = examples.len() - 1;
        for v in examples[last].x.data_mut() {
            *v = -*v + 0.5;
        }
        assert_eq!(grads_of(&examples), base);
    }
}

proptest! {
    #[test]
    fn adadelta_moves_against_the_gradient(
        g in prop::collection::vec(-10.0f64..10.0, 1..8),
        x0 in prop::collection::vec(-5.0f64..5.0, 8),
        rho in 0.5f64..0.99,
        lr in 0.01f64..2.0,
    ) {
        let n = g.len();
        let mut x = x0[..n].to_vec();
        let mut sq_g = vec![0.0; n];
        let mut sq_d = vec![0.0; n];
        adadelta_update(&mut x, &g, &mut sq_g, &mut sq_d, rho, 1e-6, lr);
        for k in 0..n {
            let step = x[k] - x0[k];
            prop_assert!(step * g[k] <= 0.0);
            if g[k] == 0.0 {
                prop_assert_eq!(step, 0.0);
            }
        }
    }
}

#[test]
fn adadelta_first_step_scalar() {
    let (mut x, mut sg, mut sd) = ([0.0], [0.0], [0.0]);
    adadelta_update(&mut x, &[1.0], &mut sg, &mut sd, 0.9, 1e-6, 1.0);
    assert!((x[0] + 3.1623e-3).abs() < 1e-7, "{}", x[0]);
}

#[test]
fn adadelta_minimizes_a_convex_quadratic() {
    let curvature = [1.0, 4.0, 0.25];
    let mut x = vec![1.0, -2.0, 3.0];
    let (mut sg, mut sd) = (vec![0.0; 3], vec![0.0; 3]);
    let loss = |x: &[f64]| 0.5 * x.iter().zip(curvature).map(|(v, a)| a * v * v).sum::<f64>();
    let mut steps = 0;
    while loss(&x) >= 1e-3 && steps < 5000 {
        let g: Vec<f64> = x.iter().zip(curvature).map(|(v, a)| a * v).collect();
        adadelta_update(&mut x, &g, &mut sg, &mut sd, 0.95, 1e-6, 1.0);
        steps += 1;
    }
    assert!(loss(&x) < 1e-3, "loss {} after {steps} steps", loss(&x));
}

fn small_cnn1(dims: InputDims, seed: u64) -> Cnn1 {
    let spec = Cnn1Spec {
        num_filters: 6,
        kernel_len: 3,
        pool: 3,
        hidden: vec![16],
        ..Cnn1Spec::default()
    };
    Cnn1::new(spec, dims, seed).unwrap()
}

fn linear_task(patients: usize, seed: u64) -> (Vec<Example>, Vec<Example>, InputDims) {
    let spec = SynthSpec {
        patients,
        labs: 3,
        history: 36,
        diseases: vec![PlantedDisease {
            code: "L".into(),
            description: String::new(),
            generator: Generator::Linear {
                lab: 1,
                threshold: 0.0,
                sharpness: 8.0,
            },
        }],
        ..SynthSpec::default()
    };
    let cohort = synthesize_cohort(&spec, seed).unwrap();
    let stats = compute_norm_stats(&cohort);
    let cfg = WindowConfig {
        window: 36,
        ..WindowConfig::default()
    };
    let examples = build_examples(
        &cohort,
        &stats,
        &cfg,
        &spec.lab_codes(),
        &spec.disease_codes(),
    )
    .unwrap();
    let cut = examples.len() * 3 / 4;
    let val = examples[cut..].to_vec();
    let mut train = examples;
    train.truncate(cut);
    let dims = InputDims {
        labs: 3,
        window: 36,
        diseases: 1,
    };
    (train, val, dims)
}

fn quick_config(epochs: usize) -> TrainConfig {
    TrainConfig {
        batch_size: 64,
        learning_rate: 1.0,
        max_epochs: epochs,
        seed: 3,
        dropout: 0.2,
        ..TrainConfig::default()
    }
}

#[test]
fn zero_epochs_leave_parameters_untouched() {
    let (train, val, dims) = linear_task(100, 1);
    let tr: Vec<&Example> = train.iter().collect();
    let va: Vec<&Example> = val.iter().collect();
    let mut net = small_cnn1(dims, 4);
    let before = net.params().clone();
    let r = fit(&mut net, &tr, &va, &quick_config(0)).unwrap();
    assert_eq!(r.best_epoch, None);
    assert!(r.history.is_empty());
    assert_eq!(net.params(), &before);
}

#[test]
fn planted_linear_signal_is_learned_and_best_epoch_is_kept() {
    let (train, val, dims) = linear_task(1600, 2);
    let tr: Vec<&Example> = train.iter().collect();
    let va: Vec<&Example> = val.iter().collect();
    let mut net = small_cnn1(dims, 5);
    let r = fit(&mut net, &tr, &va, &quick_config(8)).unwrap();
    let best = r.best_epoch.unwrap();
    let top = r
        .history
        .iter()
        .map(|h| h.mean_val_auc)
        .fold(f64::MIN, f64::max);
    let first_top = r
        .history
        .iter()
        .find(|h| h.mean_val_auc == top)
        .unwrap()
        .epoch;
    assert_eq!(best, first_top);
    let now = validation_aucs(&net, &va, &r.weights.trainable).unwrap();
    assert_eq!(now, r.history[best - 1].val_aucs);
    assert!(top >= 0.85, "best validation AUC {top}");
}

#[test]
fn seeded_fits_are_bitwise_identical() {
    let (train, val, dims) = linear_task(300, 3);
    let tr: Vec<&Example> = train.iter().collect();
    let va: Vec<&Example> = val.iter().collect();
    let run = || {
        let mut net = small_cnn1(dims, 6);
        let r = fit(&mut net, &tr, &va, &quick_config(2)).unwrap();
        (net.params().clone(), r.history_csv(&["L".into()]))
    };
    let (a, ha) = run();
    let (b, hb) = run();
    assert_eq!(ha, hb);
    for (p, q) in a.entries().iter().zip(b.entries()) {
        let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&p.tensor), bits(&q.tensor), "{}", p.name);
    }
}

#[test]
fn fit_rejects_single_class_training_data() {
    let (mut train, val, dims) = linear_task(100, 4);
    for e in &mut train {
        e.y = vec![Label::Neg];
    }
    let tr: Vec<&Example> = train.iter().collect();
    let va: Vec<&Example> = val.iter().collect();
    let mut net = small_cnn1(dims, 7);
    assert!(fit(&mut net, &tr, &va, &quick_config(1)).is_err());
}
