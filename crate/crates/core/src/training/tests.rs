use super::*;
use crate::kspace::{build_dataset, DatasetSpec};
use crate::network::{ModelConfig, RegType};
use crate::phantom::{labels_to_onehot, LabelMap};
use num_complex::Complex;
use proptest::prelude::*;

fn small_spec() -> DatasetSpec {
    DatasetSpec {
        train_brains: 2,
        test_brains: 1,
        slices_per_brain: 2,
        height: 32,
        width: 32,
        center_lines: 8,
        seed: 3,
        ..DatasetSpec::default()
    }
}

fn small_model(kind: ModelKind) -> ModelConfig {
    ModelConfig {
        model_kind: kind,
        reg_type: RegType::A,
        n_blocks: 2,
        recurrences: 1,
        reg_channels: 3,
        unet_base_channels: 3,
        lstm_hidden_channels: 3,
        unet_depth: 2,
        weight_seed: 4,
        ..ModelConfig::default()
    }
}

fn items(with_x_full: bool) -> Vec<TrainItem<f32>> {
    build_dataset(&small_spec())
        .unwrap()
        .into_iter()
        .map(|mut s| {
            if !with_x_full {
                s.x_full = None;
            }
            TrainItem::from_sample(&s).unwrap()
        })
        .collect()
}

fn quick(variant: LossVariant) -> TrainConfig {
    TrainConfig { loss_variant: variant, learning_rate: 1e-3, max_epochs: 2, batch_size: 2, seed: 9, ..TrainConfig::default() }
}

fn onehot_mask() -> SegMask {
    let labels: Vec<u8> = (0..36).map(|i| (i % 4) as u8).collect();
    labels_to_onehot(&LabelMap::new(6, 6, labels).unwrap()).unwrap()
}

#[test]
fn cross_entropy_examples() {
    let gt = onehot_mask();
    let exact = Tensor::from_vec(&[4, 6, 6], gt.data.clone());
    assert!(cross_entropy_loss(&exact, &gt).unwrap().abs() < 1e-12);
    let uniform = Tensor::from_vec(&[4, 6, 6], vec![0.25; 144]);
    assert!((cross_entropy_loss(&uniform, &gt).unwrap() - 4f64.ln()).abs() < 1e-12);
    let bad = Tensor::<f64>::zeros(&[4, 5, 6]);
    assert!(cross_entropy_loss(&bad, &gt).is_err());
}

#[test]
fn cross_entropy_graph_matches_direct_evaluation() {
    let gt = onehot_mask();
    let logits = Tensor::from_vec(&[4, 6, 6], (0..144).map(|i| (i as f64 * 0.77).sin() * 3.0).collect());
    let store = crate::nn::ParamStore::<f64>::new();
    let mut g = Graph::inference(&store);
    let l = g.input(logits);
    let s = g.softmax(l);
    let loss = g.cross_entropy(s, Arc::new(gt.data.clone()));
    let direct = cross_entropy_loss(g.value(s), &gt).unwrap();
    assert!((g.value(loss).item() - direct).abs() < 1e-12);
}

proptest! {
    #[test]
    fn cross_entropy_is_permutation_invariant(rot in 1usize..36) {
        let gt = onehot_mask();
        let probs: Vec<f64> = (0..144).map(|i| 0.1 + 0.8 * ((i * 7 % 13) as f64 / 13.0)).collect();
        let permute = |v: &[f64]| -> Vec<f64> {
            (0..4).flat_map(|c| (0..36).map(move |p| (c, p))).map(|(c, p)| v[c * 36 + (p + rot) % 36]).collect()
        };
        let a = cross_entropy_loss(&Tensor::from_vec(&[4, 6, 6], probs.clone()), &gt).unwrap();
        let gt_perm = SegMask { data: permute(&gt.data), ..gt.clone() };
        let b = cross_entropy_loss(&Tensor::from_vec(&[4, 6, 6], permute(&probs)), &gt_perm).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn l2_triangle_inequality(vals in prop::collection::vec(-5.0f64..5.0, 36)) {
        let img = |off: usize| ComplexImage::from_data(3, 2, (0..6).map(|i| Complex::new(vals[off + i], vals[off + 6 + i])).collect());
        let (a, b, c) = (img(0), img(12), img(24));
        prop_assert!(l2_loss(&a, &c).unwrap() <= l2_loss(&a, &b).unwrap() + l2_loss(&b, &c).unwrap() + 1e-12);
    }
}

#[test]
fn l2_examples() {
    let zero = ComplexImage::<f64>::zeros(2, 2);
    assert_eq!(l2_loss(&zero, &zero).unwrap(), 0.0);
    let mut one = zero.clone();
    one.data[3] = Complex::new(0.0, 3.0);
    assert_eq!(l2_loss(&one, &zero).unwrap(), 3.0);
    assert!(l2_loss(&zero, &ComplexImage::zeros(2, 3)).is_err());
}

#[test]
fn learning_rate_schedule() {
    let cfg = TrainConfig::default();
    assert_eq!(cfg.learning_rate_at(0), 1e-4);
    assert_eq!(cfg.learning_rate_at(19), 1e-4);
    assert_eq!(cfg.learning_rate_at(20), 5e-5);
    assert_eq!(cfg.learning_rate_at(40), 2.5e-5);
}

#[test]
fn composite_loss_relations() {
    let data = items(true);
    let item = &data[0];
    let mut cfg = small_model(ModelKind::Seranet);
    for t in [0usize, 2] {
        cfg.recurrences = t;
        let model = Model::<f32>::new(cfg.clone()).unwrap();
        let mut g = Graph::inference(model.params());
        let f = model.forward(&mut g, &item.measurement).unwrap();
        let mut eval = |v| {
            let l = composite_loss(&mut g, &f, &item.target, item.x_full.as_ref(), v, 1.0).unwrap();
            g.value(l).item()
        };
        let (fin, sum) = (eval(LossVariant::CeFinal), eval(LossVariant::CeSum));
        if t == 0 {
            assert_eq!(fin, sum);
        } else {
            assert!(sum >= fin);
        }
        let x_t = Arc::new(g.value(f.final_image().unwrap()).data().to_vec());
        let l = composite_loss(&mut g, &f, &item.target, Some(&x_t), LossVariant::CePlusL2, 1.0).unwrap();
        assert_eq!(g.value(l).item(), fin);
        assert!(composite_loss(&mut g, &f, &item.target, None, LossVariant::CePlusL2, 1.0).is_err());
    }
}

#[test]
fn seeded_training_is_deterministic() {
    let data = items(false);
    let run = || {
        let mut model = Model::<f32>::new(small_model(ModelKind::Seranet)).unwrap();
        let report = train_model(&mut model, &quick(LossVariant::CeSum), &data, &mut |_, _| Control::Continue).unwrap();
        (report, model.params().clone())
    };
    let (a, pa) = run();
    let (b, pb) = run();
    assert_eq!(a, b);
    assert_eq!(pa, pb);
    assert_eq!(a.epochs.len(), 2);
    assert!(a.epochs.iter().all(|e| e.loss.is_finite() && e.phase == Phase::EndToEnd));
}

#[test]
fn two_step_trains_in_two_phases() {
    let data = items(true);
    let mut model = Model::<f32>::new(small_model(ModelKind::TwoStep)).unwrap();
    let before = model.params().clone();
    let report = train_model(&mut model, &quick(LossVariant::CeFinal), &data, &mut |_, _| Control::Continue).unwrap();
    assert_eq!(report.phases(), vec![Phase::Reconstruction, Phase::Segmentation]);
    assert_eq!(report.losses(Phase::Reconstruction).len(), 2);
    // Every parameter is updated by one of the phases.
    for (id, name, t) in model.params().iter() {
        assert_ne!(t, before.get(id), "{name} never updated");
    }
}

#[test]
fn missing_x_full_is_a_configuration_error() {
    let data = items(false);
    let mut model = Model::<f32>::new(small_model(ModelKind::Seranet)).unwrap();
    let err = train_model(&mut model, &quick(LossVariant::CePlusL2), &data, &mut |_, _| Control::Continue);
    assert!(matches!(err, Err(Error::Config(_))));
    let mut model = Model::<f32>::new(small_model(ModelKind::TwoStep)).unwrap();
    assert!(train_model(&mut model, &quick(LossVariant::CeFinal), &data, &mut |_, _| Control::Continue).is_err());
    assert!(train_model(&mut model, &quick(LossVariant::CeFinal), &[], &mut |_, _| Control::Continue).is_err());
}

#[test]
fn callback_can_stop_training() {
    let data = items(false);
    let mut model = Model::<f32>::new(small_model(ModelKind::OneStep)).unwrap();
    let mut cfg = quick(LossVariant::CeFinal);
    cfg.max_epochs = 10;
    let report = train_model(&mut model, &cfg, &data, &mut |log, _| {
        if log.epoch == 2 {
            Control::Stop
        } else {
            Control::Continue
        }
    })
    .unwrap();
    assert!(report.stopped_early);
    assert_eq!(report.epochs.len(), 3);
    let eval = evaluate(&model, &data).unwrap();
    assert_eq!(eval.per_record.len(), data.len());
    assert!(eval.mean.all_in_unit_interval());
}
