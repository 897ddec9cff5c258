use emotts::dataset::{overfit_corpus, ManifestEntry};
use emotts::model::{Checkpoint, LossWeights, Model, ModelConfig, SequencePlan, Variant};
use emotts::train::{
    build_targets, fit, multi_stream_loss, prepare, teacher_forcing_plan, FitHooks, Phase, TrainConfig,
};
use emotts::vocab::{format_prompt, PromptRecord};
use proptest::prelude::*;

fn plan_for(model: &Model, e: &ManifestEntry, mask_guidance: bool) -> SequencePlan {
    let layout = model.layout();
    let prompt = format_prompt(&PromptRecord::emotion(e.description.clone(), e.text.clone()), layout).unwrap();
    let mut streams = build_targets(e, model.variant(), layout, model.config.group_size).unwrap();
    if mask_guidance {
        streams = streams.without_guidance_loss();
    }
    teacher_forcing_plan(&prompt, &streams).unwrap()
}

fn small_config(steps: usize) -> TrainConfig {
    let mut tc = TrainConfig::new(Phase::Finetune, steps);
    tc.peak_lr = 3e-3;
    tc.warmup_steps = 2.min(steps);
    tc.batch_size = 4;
    tc
}

#[test]
fn zero_model_gives_uniform_cross_entropy() {
    let model = Model::zeroed(ModelConfig::toy(Variant::AudioOnly)).unwrap();
    let data = overfit_corpus(3).unwrap();
    let plans: Vec<_> = data.iter().map(|e| plan_for(&model, e, false)).collect();
    let r = multi_stream_loss(&model, &plans, LossWeights::default()).unwrap();
    let expected = (model.layout().audio_size as f64).ln();
    assert!((r.total - expected).abs() < 1e-12, "{} vs {expected}", r.total);
    assert_eq!(r.guidance, None);
}

#[test]
fn masked_guidance_matches_zero_guidance_weight() {
    let model = Model::new(ModelConfig::toy(Variant::ParallelPhoneme), 3).unwrap();
    let data = overfit_corpus(4).unwrap();
    let full: Vec<_> = data.iter().map(|e| plan_for(&model, e, false)).collect();
    let masked: Vec<_> = data.iter().map(|e| plan_for(&model, e, true)).collect();
    let zero_weight = LossWeights {
        audio: 1.0,
        guidance: 0.0,
    };
    let (a, ga) = model.batch_loss(&full, zero_weight, true).unwrap();
    let (b, gb) = model.batch_loss(&masked, LossWeights::default(), true).unwrap();
    assert_eq!(a.total, b.total);
    assert_eq!(Some(a.total), a.audio);
    assert_eq!(b.guidance, None);
    assert!(a.guidance.unwrap() > 0.0);
    let (ga, gb) = (ga.unwrap(), gb.unwrap());
    for ((name, x), (_, y)) in ga.tensors().into_iter().zip(gb.tensors()) {
        let worst = x.iter().zip(y).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        assert!(worst < 1e-14, "{name}: {worst}");
    }
}

#[test]
fn fully_masked_batch_is_rejected_by_the_objective() {
    let model = Model::new(ModelConfig::toy(Variant::AudioOnly), 3).unwrap();
    let e = &overfit_corpus(1).unwrap()[0];
    let layout = model.layout();
    let prompt = format_prompt(&PromptRecord::emotion(e.description.clone(), e.text.clone()), layout).unwrap();
    let streams = build_targets(e, Variant::AudioOnly, layout, 3).unwrap().fully_masked();
    let plan = teacher_forcing_plan(&prompt, &streams).unwrap();
    assert!(multi_stream_loss(&model, std::slice::from_ref(&plan), LossWeights::default()).is_err());
    let (r, g) = model.batch_loss(&[plan], LossWeights::default(), true).unwrap();
    assert_eq!(r.total, 0.0);
    assert!(g.unwrap().tensors().iter().all(|(_, t)| t.iter().all(|&v| v == 0.0)));
}

/// Loss read at positions before `cut` must not see inputs at or after it.
fn prefix_loss(model: &Model, plan: &SequencePlan, cut: usize, truncate: bool) -> f64 {
    let outputs: Vec<_> = plan.outputs.iter().filter(|o| o.position < cut).cloned().collect();
    let inputs = if truncate {
        plan.inputs[..cut].to_vec()
    } else {
        plan.inputs.clone()
    };
    let p = SequencePlan { inputs, outputs };
    model.batch_loss(&[p], LossWeights::default(), false).unwrap().0.total
}

#[test]
fn teacher_forced_loss_is_causal() {
    for variant in [Variant::ParallelPhoneme, Variant::SerialText, Variant::interleaved()] {
        let model = Model::new(ModelConfig::toy(variant), 5).unwrap();
        let e = &overfit_corpus(2).unwrap()[1];
        let plan = plan_for(&model, e, false);
        let first = plan.outputs[0].position;
        for cut in [first + 1, first + 3, plan.inputs.len() - 1] {
            let a = prefix_loss(&model, &plan, cut, false);
            let b = prefix_loss(&model, &plan, cut, true);
            assert!((a - b).abs() < 1e-12, "{variant}: cut {cut}: {a} vs {b}");
        }
    }
}

#[test]
fn fit_reduces_loss_and_writes_checkpoints() {
    let data = overfit_corpus(8).unwrap();
    let mut model = Model::new(ModelConfig::toy(Variant::ParallelPhoneme), 11).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config(60);
    cfg.checkpoint_every = Some(25);
    let mut seen = 0;
    let hooks = FitHooks {
        checkpoint_dir: Some(dir.path().to_path_buf()),
        on_step: Some(Box::new(|_, _| seen += 1)),
    };
    let log = fit(&mut model, &data, &cfg, hooks).unwrap();
    assert_eq!(seen, 60);
    assert_eq!(log.records.len(), 60);
    assert!(log.last_loss().unwrap() < 0.7 * log.first_loss().unwrap());
    assert_eq!(log.checkpoints.len(), 3);
    let ck = Checkpoint::load(log.checkpoints.last().unwrap()).unwrap();
    assert_eq!(ck.model, model);
    assert_eq!(log.to_jsonl().unwrap().lines().count(), 60);
}

#[test]
fn fit_rejects_bad_inputs() {
    let mut model = Model::new(ModelConfig::toy(Variant::AudioOnly), 1).unwrap();
    assert!(fit(&mut model, &[], &small_config(5), FitHooks::default()).is_err());
    let mut cfg = small_config(5);
    cfg.batch_size = 0;
    assert!(fit(&mut model, &overfit_corpus(2).unwrap(), &cfg, FitHooks::default()).is_err());
}

#[test]
fn every_variant_prepares_and_trains_one_step() {
    let data = overfit_corpus(4).unwrap();
    for variant in Variant::ALL {
        let mut model = Model::new(ModelConfig::toy(variant), 2).unwrap();
        let items = prepare(&data, &model, Phase::Pretrain).unwrap();
        assert_eq!(items.len(), 4);
        let mut cfg = small_config(1);
        cfg.phase = Phase::Pretrain;
        let log = fit(&mut model, &data, &cfg, FitHooks::default()).unwrap();
        assert!(log.first_loss().unwrap().is_finite(), "{variant}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn loss_is_finite_and_nonnegative(seed in 0u64..1000, n in 1usize..5) {
        let model = Model::new(ModelConfig::toy(Variant::ParallelText), seed).unwrap();
        let data = overfit_corpus(n).unwrap();
        let plans: Vec<_> = data.iter().map(|e| plan_for(&model, e, false)).collect();
        let r = multi_stream_loss(&model, &plans, LossWeights::default()).unwrap();
        prop_assert!(r.total.is_finite() && r.total >= 0.0);
        prop_assert!(r.audio_slots > 0 && r.guidance_slots > 0);
    }
}
