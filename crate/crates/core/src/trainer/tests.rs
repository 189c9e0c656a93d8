use super::*;
use crate::discriminator::{RelationDiscConfig, WireframeDiscConfig};

fn tiny(experiment: Experiment, disc: DiscKind) -> TrainConfig {
    TrainConfig {
        experiment,
        discriminator: disc,
        width: 16,
        height: 16,
        batch_size: 4,
        iterations: 4,
        lr: 1e-3,
        init_std: 0.2,
        seed: 11,
        checkpoint_every: 0,
        log_every: 2,
        eval_samples: 6,
        dataset_size: 8,
        generator: GeneratorConfig {
            embed_dim: 8,
            encoder_widths: vec![8],
            decoder_widths: vec![8],
            n_relation_blocks: 1,
            bottleneck_reduction: 2,
            ..Default::default()
        },
        relation_disc: RelationDiscConfig { encoder_widths: vec![8], head_widths: vec![8], ..Default::default() },
        wireframe_disc: WireframeDiscConfig { channels: vec![4, 4, 4], kernel: 3, stride: 2, pad: 1 },
        ..Default::default()
    }
}

#[test]
fn init_statistics_and_reproducibility() {
    let cfg = TrainConfig { seed: 3, ..Default::default() };
    let a = Trainer::new(&cfg).unwrap();
    let mut weights = Vec::new();
    for (name, p) in a.gen.iter().chain(a.dis.iter()) {
        if name.ends_with("/b") {
            assert!(p.value.data().iter().all(|&v| v == 0.0), "{name}");
        } else {
            weights.extend_from_slice(p.value.data());
        }
    }
    assert!(weights.len() >= 100_000);
    let n = weights.len() as f64;
    let mean = weights.iter().sum::<f64>() / n;
    let std = (weights.iter().map(|w| (w - mean).powi(2)).sum::<f64>() / n).sqrt();
    // Standard error of a sample std is about σ/√(2n).
    assert!((std - 0.02).abs() < 3.0 * 0.02 / (2.0 * n).sqrt(), "{std}");
    let b = Trainer::new(&cfg).unwrap();
    assert_eq!(a.named_tensors(), b.named_tensors());
}

#[test]
fn loss_limits() {
    let mut g = Graph::new();
    let real = g.input(Tensor::vector(vec![40.0; 3]));
    let fake = g.input(Tensor::vector(vec![-40.0; 3]));
    let d = discriminator_loss(&mut g, real, fake).unwrap();
    let gl = generator_loss(&mut g, fake);
    assert!(g.value(d).item() < 1e-15);
    assert!(g.value(gl).item() > 39.0);
    let half = g.input(Tensor::vector(vec![0.0; 3]));
    let d = discriminator_loss(&mut g, half, half).unwrap();
    let gl = generator_loss(&mut g, half);
    assert!((g.value(d).item() - std::f64::consts::LN_2).abs() < 1e-15);
    assert!((g.value(gl).item() - std::f64::consts::LN_2).abs() < 1e-15);
}

#[test]
fn one_step_moves_every_parameter() {
    for disc in [DiscKind::Relation, DiscKind::Wireframe] {
        // Freshly initialized boxes are a few hundredths wide; the canvas must
        // be fine enough for their edges to cross pixel centers.
        let cfg =
            TrainConfig { n_elements: 3, batch_size: 16, width: 64, height: 64, ..tiny(Experiment::Docbox, disc) };
        let data = prepare_data(&cfg.resolved().unwrap(), &synth_data(&cfg).unwrap()).unwrap();
        let mut t = Trainer::new(&cfg).unwrap();
        let before = (t.gen.clone(), t.dis.clone());
        let losses = t.step(&data).unwrap();
        assert!(losses.d_loss.is_finite() && losses.g_loss.is_finite());
        for (store, old) in [(&t.gen, &before.0), (&t.dis, &before.1)] {
            for (name, p) in store.iter() {
                assert_ne!(&p.value, old.value(name).unwrap(), "{disc:?} {name} did not move");
            }
        }
    }
}

#[test]
fn smoke_run_writes_one_checkpoint_and_log_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = TrainConfig {
        iterations: 10,
        checkpoint_every: 10,
        log_every: 5,
        out_dir: Some(dir.path().to_path_buf()),
        ..tiny(Experiment::Docbox, DiscKind::Wireframe)
    };
    let report = train(&cfg, &synth_data(&cfg).unwrap()).unwrap();
    assert_eq!(report.checkpoints.len(), 1);
    assert_eq!(report.log.len(), 2);
    let csv = std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "iter,d_loss,g_loss,overlap_idx,align_idx,displacement");
    assert_eq!(lines.len(), 3);
    assert!(dir.path().join("manifest.json").exists());
}

#[test]
fn resume_matches_an_unbroken_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = TrainConfig { log_every: 1, ..tiny(Experiment::Docbox, DiscKind::Relation) };
    let data = synth_data(&cfg).unwrap();
    let full = train(&cfg, &data).unwrap();

    let half = train(&TrainConfig { iterations: 2, ..cfg.clone() }, &data).unwrap();
    let path = dir.path().join("half.ckpt");
    half.trainer.save_checkpoint(&path).unwrap();
    let resumed = Trainer::from_checkpoint(&cfg, &path).unwrap();
    assert_eq!(resumed.iteration, 2);
    let rest = run(resumed, &data).unwrap();
    let losses =
        |rows: &[LogRow]| rows.iter().map(|r| (r.iter, r.d_loss.to_bits(), r.g_loss.to_bits())).collect::<Vec<_>>();
    assert_eq!(losses(&rest.log), losses(&full.log[2..]));
    assert_eq!(rest.trainer.named_tensors(), full.trainer.named_tensors());
}

#[test]
fn identical_runs_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for dir in [&a, &b] {
        let cfg = TrainConfig {
            iterations: 6,
            checkpoint_every: 3,
            out_dir: Some(dir.path().to_path_buf()),
            ..tiny(Experiment::Docbox, DiscKind::Wireframe)
        };
        train(&cfg, &synth_data(&cfg).unwrap()).unwrap();
    }
    for f in ["ckpt_000003.ckpt", "ckpt_000006.ckpt", "metrics.csv", "manifest.json"] {
        let (x, y) = (std::fs::read(a.path().join(f)), std::fs::read(b.path().join(f)));
        assert_eq!(x.unwrap(), y.unwrap(), "{f}");
    }
}

#[test]
fn divergence_dumps_the_last_good_state() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = TrainConfig {
        lr: 1e308,
        iterations: 5,
        out_dir: Some(dir.path().to_path_buf()),
        ..tiny(Experiment::Docbox, DiscKind::Relation)
    };
    match train(&cfg, &synth_data(&cfg).unwrap()) {
        Err(Error::TrainingDiverged { checkpoint: Some(path), iteration }) => {
            let t = Trainer::from_checkpoint(&cfg, &path).unwrap();
            assert_eq!(t.iteration, iteration);
            assert!(t.gen.all_finite() && t.dis.all_finite());
        }
        other => panic!("expected divergence, got {other:?}"),
    }
}

#[test]
fn recovery_regime() {
    let cfg = TrainConfig { iterations: 2, ..tiny(Experiment::Tangram, DiscKind::Relation) };
    let data = synth_data(&cfg).unwrap();
    let r = perturb_recover_train(&cfg, &data, 0.0).unwrap();
    assert_eq!(r.input_displacement, Some(0.0));
    assert!(r.initial_displacement.unwrap() > 0.0);
    assert!(r.log.iter().all(|row| row.displacement.is_some() && row.overlap_idx.is_none()));
    let r = perturb_recover_train(&cfg, &data, 0.1).unwrap();
    let d = r.input_displacement.unwrap();
    // Mean norm of a 2-d N(0, σ²) offset is σ·√(π/2).
    assert!((d - 0.1 * (std::f64::consts::PI / 2.0).sqrt()).abs() < 0.04, "{d}");
    let docs = synth_data(&tiny(Experiment::Docbox, DiscKind::Relation)).unwrap();
    assert!(matches!(perturb_recover_train(&cfg, &docs, 0.1), Err(Error::InvalidGeometry(_))));
}

#[test]
fn frozen_classes_in_recovery() {
    let cfg = tiny(Experiment::Tangram, DiscKind::Wireframe);
    let t = Trainer::new(&cfg).unwrap();
    let data = synth_data(&cfg).unwrap();
    let real = LayoutBatch::from_layouts(&data[..2]).unwrap();
    let out = t.generate(&real).unwrap();
    assert_eq!(out.p, real.p);
    assert_eq!(out.pieces, real.pieces);
}
