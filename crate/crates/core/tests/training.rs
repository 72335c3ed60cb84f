use seqderain::batching::Scheme;
use seqderain::dataset::LoadedMap;
use seqderain::frame::Frame;
use seqderain::model::{ArchConfig, DerainNet};
use seqderain::nn::Tensor;
use seqderain::synth::{random_curvature_profile, synthesize_map, Palette, RainSpec, SceneSpec};
use seqderain::training::{
    constant_baseline_mse, dump_comparisons, evaluate_mse, train, ComparisonOptions, DerainCheckpoint, Derainer, EvalSets,
    Split, TrainConfig, TrainOutputs,
};
use seqderain::Error;

const RES: usize = 32;

fn arch() -> ArchConfig {
    ArchConfig {
        resolution: RES,
        base_channels: 8,
        channel_cap: 32,
        latent_channels: 32,
        ..ArchConfig::default()
    }
}

fn map(name: &str, n_frames: usize, seed: u64) -> LoadedMap {
    let palette = [Palette::Urban, Palette::Rural, Palette::Highway][seed as usize % 3];
    let scene = SceneSpec {
        map_name: name.into(),
        n_frames,
        seed,
        resolution: RES,
        curvature_profile: random_curvature_profile(n_frames, seed, 0.02),
        palette,
    };
    synthesize_map(&scene, &RainSpec::heavy(RES, seed + 100)).unwrap().to_loaded()
}

fn cfg(scheme: Scheme, epochs: usize, seed: u64) -> TrainConfig {
    TrainConfig {
        epochs,
        scheme,
        seed,
        arch: arch(),
        ..TrainConfig::default()
    }
}

struct Identity;
impl Derainer for Identity {
    fn derain_batch(&mut self, rainy: &Tensor<f32>) -> seqderain::Result<Tensor<f32>> {
        Ok(rainy.clone())
    }
}

struct Constant(f32);
impl Derainer for Constant {
    fn derain_batch(&mut self, rainy: &Tensor<f32>) -> seqderain::Result<Tensor<f32>> {
        Ok(Tensor::full(rainy.shape(), self.0))
    }
}

fn weights(model: &mut DerainNet<f32>) -> Vec<Vec<f32>> {
    model.params_mut().into_iter().map(|p| p.value.clone()).collect()
}

#[test]
fn one_epoch_emits_one_record_per_split() {
    let train_set = [map("a", 20, 1)];
    let val = map("v", 6, 2);
    let r = train(&cfg(Scheme::Rtrb, 1, 0), &train_set, EvalSets { validation: std::slice::from_ref(&val), test: &[] }, &TrainOutputs::default()).unwrap();
    assert_eq!(r.plans[0].len(), 2);
    assert_eq!(r.history.len(), 2);
    assert_eq!(r.history[0].split, Split::Train);
    assert_eq!(r.history[1].split, Split::Validation);
    assert!(r.history.iter().all(|h| h.epoch == 1 && h.mse.is_finite() && h.mse >= 0.0));
}

#[test]
fn zero_learning_rate_leaves_weights_untouched() {
    let train_set = [map("a", 20, 1)];
    let c = TrainConfig {
        learning_rate: 0.0,
        ..cfg(Scheme::Strb, 2, 5)
    };
    let mut r = train(&c, &train_set, EvalSets::default(), &TrainOutputs::default()).unwrap();
    let mut init = DerainNet::<f32>::new(c.arch, c.seed).unwrap();
    assert_eq!(weights(&mut r.checkpoint.model), weights(&mut init));
}

#[test]
fn identical_runs_are_identical() {
    let train_set = [map("a", 20, 1), map("b", 20, 2)];
    let val = map("v", 6, 3);
    let c = cfg(Scheme::Strb, 2, 9);
    let a = train(&c, &train_set, EvalSets { validation: std::slice::from_ref(&val), test: &[] }, &TrainOutputs::default()).unwrap();
    let b = train(&c, &train_set, EvalSets { validation: std::slice::from_ref(&val), test: &[] }, &TrainOutputs::default()).unwrap();
    assert_eq!(a.history, b.history);
    assert_eq!(a.plans, b.plans);
}

#[test]
fn schemes_differ_only_in_batch_composition() {
    let train_set = [map("a", 20, 1), map("b", 20, 2), map("c", 20, 3)];
    let runs: Vec<_> = Scheme::ALL
        .iter()
        .map(|&s| {
            let c = cfg(s, 1, 4);
            let r = train(&c, &train_set, EvalSets::default(), &TrainOutputs::default()).unwrap();
            (c.hash_without_scheme(), r.plans[0].to_text())
        })
        .collect();
    for i in 0..runs.len() {
        for j in i + 1..runs.len() {
            assert_eq!(runs[i].0, runs[j].0);
            assert_ne!(runs[i].1, runs[j].1);
        }
    }
}

#[test]
fn train_loss_falls_by_epoch_ten_for_every_scheme() {
    let train_set = [map("a", 20, 1), map("b", 20, 2), map("c", 20, 3)];
    for scheme in Scheme::ALL {
        for seed in 0..3 {
            let r = train(&cfg(scheme, 10, seed), &train_set, EvalSets::default(), &TrainOutputs::default()).unwrap();
            let first = r.history.first().unwrap().mse;
            let last = r.history.last().unwrap().mse;
            assert!(last < first, "{scheme} seed {seed}: {first} -> {last}");
        }
    }
}

#[test]
fn artifacts_and_checkpoint_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let train_set = [map("a", 20, 1)];
    let val = map("v", 8, 2);
    let c = TrainConfig {
        checkpoint_every: 1,
        ..cfg(Scheme::Stsb, 2, 3)
    };
    let mut r = train(&c, &train_set, EvalSets { validation: std::slice::from_ref(&val), test: &[] }, &TrainOutputs { dir: Some(dir.path()) }).unwrap();
    for f in ["config.json", "loss.csv", "final.ckpt", "checkpoint_epoch_001.ckpt", "plans/epoch_001.csv", "plans/epoch_002.csv"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let csv = std::fs::read_to_string(dir.path().join("loss.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 4);
    let echoed: TrainConfig = serde_json::from_str(&std::fs::read_to_string(dir.path().join("config.json")).unwrap()).unwrap();
    assert_eq!(echoed, c);

    let before = evaluate_mse(&mut r.checkpoint.model, &val, 4).unwrap();
    let mut loaded = DerainCheckpoint::load(&dir.path().join("final.ckpt")).unwrap();
    let after = evaluate_mse(&mut loaded.model, &val, 4).unwrap();
    assert!((before - after).abs() <= 1e-7, "{before} vs {after}");
    assert_eq!(loaded.epochs_completed, 2);
    assert_eq!(loaded.scheme, Scheme::Stsb);
    assert_eq!(loaded.step, r.checkpoint.step);
    let last_val = r.history.last().unwrap();
    assert_eq!(last_val.split, Split::Validation);
    assert!((last_val.mse - after).abs() <= 1e-7);
}

#[test]
fn identity_model_on_clear_input_scores_zero() {
    let mut m = map("a", 5, 1);
    m.rainy = m.clear.clone();
    assert_eq!(evaluate_mse(&mut Identity, &m, 2).unwrap(), 0.0);
}

#[test]
fn constant_predictor_matches_loop_oracle() {
    let m = map("a", 7, 4);
    let mut total = 0.0f64;
    let mut n = 0usize;
    for f in &m.clear {
        for c in 0..3 {
            for y in 0..f.height() {
                for x in 0..f.width() {
                    let d = f.get(y, x)[c] as f64 - 0.5;
                    total += d * d;
                    n += 1;
                }
            }
        }
    }
    let oracle = total / n as f64;
    let got = evaluate_mse(&mut Constant(0.5), &m, 3).unwrap();
    assert!((got - oracle).abs() < 1e-12, "{got} vs {oracle}");
    assert!((constant_baseline_mse(&[&m]).unwrap() - oracle).abs() < 1e-12);
}

#[test]
fn evaluation_is_batch_size_invariant() {
    let m = map("a", 13, 6);
    let mut model = DerainNet::<f32>::new(arch(), 2).unwrap();
    let a = evaluate_mse(&mut model, &m, 1).unwrap();
    let b = evaluate_mse(&mut model, &m, 10).unwrap();
    assert!((a - b).abs() < 1e-6, "{a} vs {b}");
}

#[test]
fn empty_inputs_are_rejected() {
    let empty = LoadedMap {
        map_name: "e".into(),
        frame_indices: vec![],
        clear: vec![],
        rainy: vec![],
        steering: vec![],
    };
    assert!(matches!(evaluate_mse(&mut Identity, &empty, 4), Err(Error::EmptyDataset(_))));
    assert!(matches!(
        train(&cfg(Scheme::Strb, 1, 0), &[empty], EvalSets::default(), &TrainOutputs::default()),
        Err(Error::Config(_))
    ));
}

#[test]
fn non_finite_loss_names_epoch_and_batch() {
    let mut m = map("a", 20, 1);
    for f in &mut m.rainy {
        f.set(0, 0, [f32::NAN; 3]);
    }
    let err = train(&cfg(Scheme::Rtrb, 1, 0), &[m], EvalSets::default(), &TrainOutputs::default()).unwrap_err();
    assert!(matches!(err, Error::NonFiniteLoss { epoch: 1, batch: 0 }), "{err}");
}

#[test]
fn comparison_panels_follow_requested_layout() {
    let m = map("t", 6, 2);
    let mut model = DerainNet::<f32>::new(arch(), 1).unwrap();
    let dir = tempfile::tempdir().unwrap();

    let files = dump_comparisons(&mut model, &m, &dir.path().join("p"), &[0, 2, 4], &ComparisonOptions::default()).unwrap();
    assert_eq!(files.len(), 3);
    let f = Frame::load(&files[0]).unwrap();
    assert_eq!((f.height(), f.width()), (RES, 3 * RES));

    let strip = ComparisonOptions {
        strip: true,
        ..Default::default()
    };
    let files = dump_comparisons(&mut model, &m, &dir.path().join("s"), &[1, 2, 3], &strip).unwrap();
    assert_eq!(files.len(), 1);
    let f = Frame::load(&files[0]).unwrap();
    assert_eq!((f.height(), f.width()), (3 * RES, 3 * RES));

    let base = dir.path().join("baseline");
    m.clear[0].save_png(&base.join(seqderain::dataset::frame_file_name(0))).unwrap();
    let opts = ComparisonOptions {
        baseline_dir: Some(&base),
        ..Default::default()
    };
    let files = dump_comparisons(&mut model, &m, &dir.path().join("b"), &[0, 1], &opts).unwrap();
    assert_eq!(Frame::load(&files[0]).unwrap().width(), 4 * RES);
    // frame 1 has no baseline image, so that panel is dropped
    assert_eq!(Frame::load(&files[1]).unwrap().width(), 3 * RES);
}
