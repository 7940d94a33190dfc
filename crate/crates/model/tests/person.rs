mod common;

use candle_core::{DType, Device, Tensor};
use socialgaze_core::config::{BackboneKind, RunConfig};
use socialgaze_model::params::ParamStore;
use socialgaze_model::person::ResNet18;
use socialgaze_model::{ModelError, SocialGazeModel};

use common::{flat, max_abs_diff, random_inputs, toy_with};

fn person_inputs(cfg: &RunConfig, n: usize, t: usize, seed: u64) -> (Tensor, Tensor, Tensor) {
    let x = random_inputs(cfg, 1, n, t, false, seed);
    let c = cfg.model.crop_size;
    (
        x.crops.reshape((n, t, 3, c, c)).unwrap(),
        x.boxes.reshape((n, t, 4)).unwrap(),
        x.mask.reshape((n, t)).unwrap(),
    )
}

#[test]
fn toy_backbone_embeds_each_crop() {
    let cfg = toy_with(|c| {
        c.model.gaze_dim = 16;
        c.model.crop_size = 32;
    });
    let model = SocialGazeModel::new(&cfg).unwrap();
    let crops = Tensor::randn(0.0f64, 1.0, (2, 3, 32, 32), &Device::Cpu).unwrap();
    let e = model.person.backbone.forward(&crops).unwrap();
    assert_eq!(e.dims(), [2, 16]);
}

#[test]
fn resnet18_produces_512_features() {
    let store = ParamStore::new(0, DType::F32);
    let net = ResNet18::new(&store.root().sub("backbone")).unwrap();
    let crops = Tensor::rand(0.0f32, 1.0, (5, 3, 224, 224), &Device::Cpu).unwrap();
    let e = net.forward(&crops).unwrap();
    assert_eq!(e.dims(), [5, 512]);
    assert!(flat(&e).iter().all(|v| v.is_finite()));
    // running statistics are buffers, never trained
    assert!(store.names().iter().any(|n| n.ends_with("running_mean")));
    assert!(store.learned().iter().all(|(n, _)| !n.contains("running_")));
}

#[test]
fn resnet18_backbone_requires_512_dims() {
    let cfg = toy_with(|c| c.model.backbone = BackboneKind::ResNet18);
    assert!(SocialGazeModel::new(&cfg).is_err());
}

#[test]
fn identical_crops_give_identical_rows() {
    let cfg = RunConfig::toy();
    let model = SocialGazeModel::new(&cfg).unwrap();
    let one = Tensor::randn(0.0f64, 1.0, (1, 1, 3, 16, 16), &Device::Cpu).unwrap();
    let crops = Tensor::cat(&[&one, &one], 1).unwrap();
    let e = model.person.embed(&crops).unwrap();
    assert_eq!(flat(&e.narrow(1, 0, 1).unwrap()), flat(&e.narrow(1, 1, 1).unwrap()));
}

#[test]
fn non_finite_crops_are_rejected() {
    let cfg = RunConfig::toy();
    let model = SocialGazeModel::new(&cfg).unwrap();
    let (crops, boxes, mask) = person_inputs(&cfg, 2, 2, 1);
    let mut v = flat(&crops);
    v[17] = f64::NAN;
    let bad = Tensor::from_vec(v, crops.dims(), &Device::Cpu).unwrap();
    let err = model.person.forward(&bad, &boxes, None, &mask).unwrap_err();
    assert!(matches!(err, ModelError::Validation(_)), "{err}");
}

#[test]
fn output_shapes() {
    let cfg = RunConfig::toy();
    let model = SocialGazeModel::new(&cfg).unwrap();
    let (crops, boxes, mask) = person_inputs(&cfg, 3, 2, 2);
    let out = model.person.forward(&crops, &boxes, None, &mask).unwrap();
    assert_eq!(out.static_emb.dims(), [3, 2, 8]);
    assert_eq!(out.temporal.dims(), [3, 2, 8]);
    assert_eq!(out.vectors.dims(), [3, 2, 2]);
    assert_eq!(out.tokens.dims(), [3, 2, 16]);
}

fn time_reversal_gap(cfg: &RunConfig) -> f64 {
    let model = SocialGazeModel::new(cfg).unwrap();
    if cfg.model.temporal_pos {
        // zero-initialized; give the positions some content
        let pos = model.person.temporal_pos.as_ref().unwrap();
        let v = Tensor::randn(0.0f64, 1.0, pos.dims(), &Device::Cpu).unwrap();
        model.params.set("person.temporal_pos", &v).unwrap();
    }
    let (crops, _, mask) = person_inputs(cfg, 2, 2, 3);
    let e = model.person.embed(&crops).unwrap();
    let rev = Tensor::new(&[1u32, 0], &Device::Cpu).unwrap();
    let a = model.person.encode_time(&e, &mask).unwrap();
    let b = model.person.encode_time(&e.index_select(&rev, 1).unwrap(), &mask).unwrap();
    max_abs_diff(&a.index_select(&rev, 1).unwrap(), &b)
}

#[test]
fn temporal_positions_break_time_equivariance() {
    let without = time_reversal_gap(&toy_with(|c| c.model.temporal_pos = false));
    assert!(without < 1e-12, "{without}");
    let with = time_reversal_gap(&RunConfig::toy());
    assert!(with > 1e-6, "{with}");
}

#[test]
fn temporal_positions_start_at_zero() {
    let model = SocialGazeModel::new(&RunConfig::toy()).unwrap();
    let pos = model.person.temporal_pos.as_ref().unwrap();
    assert_eq!(pos.dims(), [2, 8]);
    assert!(flat(pos).iter().all(|&v| v == 0.0));
}

#[test]
fn single_step_matches_static_model() {
    // with one step, the static restriction changes nothing
    let cfg = RunConfig::toy();
    let a = SocialGazeModel::new(&cfg).unwrap();
    let b = SocialGazeModel::new(&toy_with(|c| c.ablation.static_model = true)).unwrap();
    let (crops, _, mask) = person_inputs(&cfg, 2, 1, 4);
    let e = a.person.embed(&crops).unwrap();
    let ta = a.person.encode_time(&e, &mask).unwrap();
    let tb = b.person.encode_time(&e, &mask).unwrap();
    assert_eq!(flat(&ta), flat(&tb));
}

#[test]
fn zeroed_vector_head_gives_zero_vectors() {
    let cfg = RunConfig::toy();
    let model = SocialGazeModel::new(&cfg).unwrap();
    model.params.fill_prefix("person.vector_head.fc2.", 0.0).unwrap();
    let (crops, boxes, mask) = person_inputs(&cfg, 2, 2, 5);
    let out = model.person.forward(&crops, &boxes, None, &mask).unwrap();
    assert!(flat(&out.vectors).iter().all(|&v| v == 0.0));
}

#[test]
fn tokens_are_the_sum_of_projections() {
    let cfg = RunConfig::toy();
    let model = SocialGazeModel::new(&cfg).unwrap();
    let (crops, boxes, mask) = person_inputs(&cfg, 2, 2, 6);
    let p = &model.person;
    let out = p.forward(&crops, &boxes, None, &mask).unwrap();
    let expect = (p.proj_gaze.forward(&out.temporal).unwrap() + p.proj_box.forward(&boxes).unwrap()).unwrap();
    assert_eq!(flat(&out.tokens), flat(&expect));

    // without the gaze term, identical boxes give identical tokens
    model.params.fill_prefix("person.proj_gaze.", 0.0).unwrap();
    let same = Tensor::cat(&[boxes.narrow(0, 0, 1).unwrap(), boxes.narrow(0, 0, 1).unwrap()], 0).unwrap();
    let out = p.forward(&crops, &same, None, &mask).unwrap();
    assert_eq!(flat(&out.tokens.narrow(0, 0, 1).unwrap()), flat(&out.tokens.narrow(0, 1, 1).unwrap()));
}

#[test]
fn speaking_scores_add_their_own_term() {
    let cfg = toy_with(|c| c.ablation.speaking = true);
    let model = SocialGazeModel::new(&cfg).unwrap();
    let (crops, boxes, mask) = person_inputs(&cfg, 2, 2, 7);
    let p = &model.person;
    let temporal = p.forward(&crops, &boxes, None, &mask).unwrap().temporal;
    let none = p.tokenize(&temporal, &boxes, None, &mask).unwrap();
    let scores = Tensor::rand(0.0f64, 1.0, (2, 2), &Device::Cpu).unwrap();
    let some = p.tokenize(&temporal, &boxes, Some(&scores), &mask).unwrap();
    assert!(max_abs_diff(&none, &some) > 0.0);

    model.params.fill_prefix("person.proj_speaking.", 0.0).unwrap();
    let zeros = scores.zeros_like().unwrap();
    let silent = p.tokenize(&temporal, &boxes, Some(&zeros), &mask).unwrap();
    assert_eq!(flat(&none), flat(&silent));
}

#[test]
fn speaking_scores_need_the_projection() {
    let cfg = RunConfig::toy();
    let model = SocialGazeModel::new(&cfg).unwrap();
    let (crops, boxes, mask) = person_inputs(&cfg, 2, 2, 8);
    let scores = Tensor::zeros((2, 2), DType::F64, &Device::Cpu).unwrap();
    assert!(model.person.forward(&crops, &boxes, Some(&scores), &mask).is_err());
}

#[test]
fn token_shape_mismatch_is_an_error() {
    let cfg = RunConfig::toy();
    let model = SocialGazeModel::new(&cfg).unwrap();
    let (crops, boxes, mask) = person_inputs(&cfg, 2, 2, 9);
    let temporal = model.person.forward(&crops, &boxes, None, &mask).unwrap().temporal;
    let short = boxes.narrow(1, 0, 1).unwrap();
    assert!(model.person.tokenize(&temporal, &short, None, &mask).is_err());
}

#[test]
fn persons_are_processed_in_isolation() {
    let cfg = RunConfig::toy();
    let model = SocialGazeModel::new(&cfg).unwrap();
    let (crops, boxes, mask) = person_inputs(&cfg, 3, 2, 10);
    let (other, other_boxes, _) = person_inputs(&cfg, 3, 2, 11);
    let swap = |a: &Tensor, b: &Tensor| Tensor::cat(&[a.narrow(0, 0, 2).unwrap(), b.narrow(0, 2, 1).unwrap()], 0).unwrap();
    let a = model.person.forward(&crops, &boxes, None, &mask).unwrap();
    let b = model.person.forward(&swap(&crops, &other), &swap(&boxes, &other_boxes), None, &mask).unwrap();
    for (x, y) in [(&a.static_emb, &b.static_emb), (&a.temporal, &b.temporal), (&a.vectors, &b.vectors), (&a.tokens, &b.tokens)] {
        assert_eq!(flat(&x.narrow(0, 0, 2).unwrap()), flat(&y.narrow(0, 0, 2).unwrap()));
        assert!(max_abs_diff(&x.narrow(0, 2, 1).unwrap(), &y.narrow(0, 2, 1).unwrap()) > 0.0);
    }
}

#[test]
fn masked_steps_have_zero_tokens() {
    let cfg = RunConfig::toy();
    let model = SocialGazeModel::new(&cfg).unwrap();
    let (crops, boxes, _) = person_inputs(&cfg, 2, 2, 12);
    let mask = Tensor::new(&[[1.0f64, 0.0], [0.0, 1.0]], &Device::Cpu).unwrap();
    let out = model.person.forward(&crops, &boxes, None, &mask).unwrap();
    let tokens = flat(&out.tokens);
    let d = 16;
    for (slot, masked) in [(0, false), (1, true), (2, true), (3, false)] {
        let row = &tokens[slot * d..(slot + 1) * d];
        assert_eq!(row.iter().all(|&v| v == 0.0), masked, "slot {slot}");
    }
}
