use std::path::Path;

use super::*;
use crate::kspace::{build_sample, fft2c, DatasetSpec};

fn tiny(kind: ModelKind, reg_type: RegType) -> ModelConfig {
    ModelConfig {
        model_kind: kind,
        reg_type,
        n_blocks: 2,
        recurrences: 2,
        reg_channels: 4,
        unet_base_channels: 4,
        lstm_hidden_channels: 4,
        unet_depth: 3,
        weight_seed: 11,
        ..ModelConfig::default()
    }
}

fn sample(noise: f64, rate: f64) -> KSpaceSample {
    let spec = DatasetSpec { height: 40, width: 48, noise_level: noise, rate, center_lines: 8, seed: 5, ..DatasetSpec::default() };
    build_sample(&spec, 0, 0, 0).unwrap()
}

fn zeroed(config: ModelConfig) -> Model<f32> {
    let mut m = Model::new(config).unwrap();
    m.params_mut().zero_all();
    m
}

fn prob_sums_ok(s: &Tensor<f32>, tol: f32) -> bool {
    let (c, h, w) = s.chw();
    (0..h * w).all(|p| {
        let sum: f32 = (0..c).map(|i| s.data()[i * h * w + p]).sum();
        (sum - 1.0).abs() <= tol && (0..c).all(|i| (0.0..=1.0).contains(&s.data()[i * h * w + p]))
    })
}

#[test]
fn config_validation() {
    let mut c = tiny(ModelKind::Seranet, RegType::A);
    c.n_blocks = 1;
    assert!(Model::<f32>::new(c.clone()).is_err());
    c.model_kind = ModelKind::Joint;
    assert!(Model::<f32>::new(c.clone()).is_ok());
    c.model_kind = ModelKind::OneStep;
    c.n_blocks = 0;
    assert!(Model::<f32>::new(c).is_ok());
    assert!("segnet".parse::<ModelKind>().is_err());
    assert_eq!("twostep".parse::<ModelKind>().unwrap(), ModelKind::TwoStep);
    assert_eq!("one-step".parse::<ModelKind>().unwrap(), ModelKind::OneStep);
}

#[test]
fn reg_blocks_keep_shape_and_reduce_to_residual_when_zeroed() {
    for reg_type in [RegType::A, RegType::B] {
        for cin in [2usize, 8] {
            let mut store = ParamStore::<f64>::new();
            let block = RegBlock::register(&mut store, "r", reg_type, cin, 3, 1);
            let x = Tensor::from_vec(&[cin, 10, 14], (0..cin * 140).map(|i| (i as f64 * 0.3).sin()).collect());
            let mut g = Graph::new(&store);
            let xi = g.input(x.clone());
            let out = block.forward(&mut g, xi).unwrap();
            assert_eq!(g.value(out).shape(), &[2, 10, 14]);
            let again = {
                let mut g2 = Graph::new(&store);
                let xi = g2.input(x.clone());
                let o = block.forward(&mut g2, xi).unwrap();
                g2.value(o).clone()
            };
            assert_eq!(g.value(out), &again);

            let bad = g.input(Tensor::zeros(&[cin + 1, 10, 14]));
            assert!(block.forward(&mut g, bad).is_err());

            store.zero_all();
            let mut g = Graph::new(&store);
            let xi = g.input(x.clone());
            let out = block.forward(&mut g, xi).unwrap();
            assert_eq!(g.value(out).data(), &x.data()[..2 * 140]);
        }
    }
}

#[test]
fn zero_weight_pipelines_reproduce_the_full_image() {
    let s = sample(0.0, 1.0);
    let x_full = Tensor::from_vec(&[2, 40, 48], s.x_full().unwrap().to_channels());
    for reg_type in [RegType::A, RegType::B] {
        for kind in ModelKind::ALL {
            let model = zeroed(tiny(kind, reg_type));
            let m = Measurement::from_sample(&s).unwrap();
            let mut g = Graph::inference(model.params());
            let f = model.forward(&mut g, &m).unwrap();
            for x in f.recon_prev.iter().chain(&f.recon).chain(&f.refined) {
                if Some(*x) == f.recon_prev && model.config().recon_blocks() == 1 {
                    continue;
                }
                assert!(g.value(*x).max_abs_diff(&x_full) < 1e-6, "{kind} {reg_type}");
            }
            for &seg in &f.segs {
                assert!(prob_sums_ok(g.value(seg), 1e-5));
            }
        }
    }
}

#[test]
fn dc_postcondition_after_every_layer() {
    let s = sample(0.1, 0.3);
    let model = Model::<f32>::new(tiny(ModelKind::Seranet, RegType::A)).unwrap();
    let m = Measurement::from_sample(&s).unwrap();
    let mut g = Graph::inference(model.params());
    let f = model.forward(&mut g, &m).unwrap();
    let keep = s.mask.expand(40);
    for x in f.recon.iter().chain(&f.refined) {
        let img = crate::kspace::ComplexImage::from_channels(40, 48, g.value(*x).data()).unwrap();
        let k = fft2c(&img);
        for (i, &kept) in keep.iter().enumerate() {
            if kept {
                assert!((k.data[i] - s.y.data[i]).norm() < 1e-5);
            }
        }
    }
}

#[test]
fn seranet_emits_t_plus_one_normalized_maps() {
    let s = sample(0.1, 0.3);
    for reg_type in [RegType::A, RegType::B] {
        let model = Model::<f32>::new(tiny(ModelKind::Seranet, reg_type)).unwrap();
        let p = model.predict(&Measurement::from_sample(&s).unwrap()).unwrap();
        assert_eq!(p.segs.len(), 3);
        for seg in &p.segs {
            assert_eq!(seg.shape(), &[4, 40, 48]);
            assert!(prob_sums_ok(seg, 1e-5));
        }
        assert_eq!(p.image.unwrap().shape(), &[2, 40, 48]);
    }
}

#[test]
fn seranet_without_recurrence_matches_joint_bitwise() {
    let s = sample(0.1, 0.3);
    let m = Measurement::from_sample(&s).unwrap();
    let mut c = tiny(ModelKind::Seranet, RegType::A);
    c.recurrences = 0;
    let seranet = Model::<f32>::new(c.clone()).unwrap();
    c.model_kind = ModelKind::Joint;
    let joint = Model::<f32>::new(c).unwrap();
    assert_eq!(seranet.params(), joint.params());
    let a = seranet.predict(&m).unwrap();
    let b = joint.predict(&m).unwrap();
    assert_eq!(a.segs.len(), 1);
    assert_eq!(a.final_seg().data(), b.final_seg().data());
}

#[test]
fn recurrent_state_changes_the_segmentation() {
    let s = sample(0.1, 0.3);
    let model = Model::<f64>::new(tiny(ModelKind::Seranet, RegType::A)).unwrap();
    let m = Measurement::<f64>::from_sample(&s).unwrap();
    let mut g = Graph::inference(model.params());
    let x = g.input(m.zero_filled.clone());
    let (s0, state) = model.segment_step(&mut g, x, None).unwrap();
    let (s1, _) = model.segment_step(&mut g, x, Some(state)).unwrap();
    assert!(g.value(s0).max_abs_diff(g.value(s1)) > 1e-9);
}

#[test]
fn segmenter_rejects_indivisible_inputs() {
    let mut store = ParamStore::<f32>::new();
    let seg = layers::Segmenter::register(&mut store, "seg", 2, 2, 2, 4, 0);
    let mut g = Graph::inference(&store);
    let x = g.input(Tensor::zeros(&[2, 10, 12]));
    assert!(seg.step(&mut g, x, None).is_err());
    let x = g.input(Tensor::zeros(&[2, 12, 12]));
    assert!(seg.step(&mut g, x, None).is_ok());
}

#[test]
fn first_recon_block_receives_gradient() {
    let s = sample(0.1, 0.3);
    let model = Model::<f64>::new(tiny(ModelKind::Seranet, RegType::A)).unwrap();
    let m = Measurement::<f64>::from_sample(&s).unwrap();
    let target: Vec<f64> = s.seg_gt().data;
    let mut g = Graph::new(model.params());
    let f = model.forward(&mut g, &m).unwrap();
    let loss = g.cross_entropy(f.final_seg(), Arc::new(target));
    let grads = g.backward(loss);
    let id = model.params().id_of("recon0.conv4.w").unwrap();
    assert!(grads.get(id).unwrap().data().iter().any(|v| v.abs() > 0.0));
    let id = model.params().id_of("attreg.conv0.w").unwrap();
    assert!(grads.get(id).is_some());
}

#[test]
fn fresh_reg_blocks_pass_the_residual_through() {
    for reg_type in [RegType::A, RegType::B] {
        let mut store = ParamStore::<f64>::new();
        let block = RegBlock::register(&mut store, "r", reg_type, 8, 3, 4);
        let x = Tensor::from_vec(&[8, 8, 12], (0..8 * 96).map(|i| (i as f64 * 0.7).cos()).collect());
        let mut g = Graph::new(&store);
        let xi = g.input(x.clone());
        let out = block.forward(&mut g, xi).unwrap();
        assert_eq!(g.value(out).data(), &x.data()[..2 * 96]);
    }
}

#[test]
fn recon_param_mask_selects_reconstruction_blocks() {
    let model = Model::<f32>::new(tiny(ModelKind::TwoStep, RegType::B)).unwrap();
    let mask = model.recon_param_mask();
    assert!(mask.iter().any(|&b| b) && mask.iter().any(|&b| !b));
    for ((_, name, _), &r) in model.params().iter().zip(&mask) {
        assert_eq!(r, name.starts_with("recon"));
    }
}

#[test]
fn checkpoint_roundtrip_and_corruption() {
    let model = Model::<f32>::new(tiny(ModelKind::Seranet, RegType::B)).unwrap();
    let bytes = checkpoint_to_bytes(&model);
    let back = checkpoint_from_bytes(&bytes, Path::new("mem")).unwrap();
    assert_eq!(back.config(), model.config());
    assert_eq!(back.params(), model.params());
    assert_eq!(checkpoint_to_bytes(&back), bytes);

    let mut bad = bytes.clone();
    let mid = bad.len() / 2;
    bad[mid] ^= 1;
    assert!(matches!(checkpoint_from_bytes(&bad, Path::new("mem")), Err(crate::Error::Corrupt { .. })));
    assert!(checkpoint_from_bytes(&bytes[..10], Path::new("mem")).is_err());
}

#[test]
fn config_diff_names_fields() {
    let a = tiny(ModelKind::Seranet, RegType::A);
    let mut b = a.clone();
    b.reg_type = RegType::B;
    b.recurrences = 1;
    let mut d = a.diff(&b);
    d.sort();
    assert_eq!(d, vec!["recurrences".to_string(), "reg_type".to_string()]);
    assert!(a.diff(&a).is_empty());
}

#[test]
fn attention_groups_scale_the_image() {
    let store = ParamStore::<f64>::new();
    let mut g = Graph::inference(&store);
    let x = Tensor::from_vec(&[2, 2, 3], (0..12).map(|i| i as f64 - 4.5).collect());
    let xi = g.input(x.clone());
    let uniform = g.input(Tensor::from_vec(&[4, 2, 3], vec![0.25; 24]));
    let att = g.attention_combine(xi, uniform).unwrap();
    for grp in 0..4 {
        for j in 0..12 {
            assert_eq!(g.value(att).data()[grp * 12 + j], 0.25 * x.data()[j]);
        }
    }
    let mut onehot = vec![0.0; 24];
    for p in 0..6 {
        onehot[(p % 4) * 6 + p] = 1.0;
    }
    let oh = g.input(Tensor::from_vec(&[4, 2, 3], onehot));
    let att = g.attention_combine(xi, oh).unwrap();
    for p in 0..6 {
        for grp in 0..4 {
            for c in 0..2 {
                let v = g.value(att).data()[(2 * grp + c) * 6 + p];
                let expected = if grp == p % 4 { x.data()[c * 6 + p] } else { 0.0 };
                assert_eq!(v, expected);
            }
        }
    }
}
