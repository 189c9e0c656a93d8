// Acceptance suite. Prints one PASS/FAIL line per criterion. Pass criterion
// numbers as arguments to run a subset, e.g.
// `cargo test --release --test acceptance -- 1 2 3`.
//
// Criteria 1, 2, 3, 8 and 9 are deterministic contracts and fail the process.
// Criteria 4 to 7 measure training outcomes and are reported without failing.

use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use wirelayout::autodiff::GradCheck;
use wirelayout::data::synth_digit_dataset;
use wirelayout::discriminator::{RelationDiscConfig, WireframeDiscConfig};
use wirelayout::generator::{generate_layout, sample_z, GeneratorConfig};
use wirelayout::gradsuite::gradient_suite;
use wirelayout::metrics::{
    alignment_index, inception_score, inception_score_from_probs, loss_landscape, overlap_index, spearman,
    total_variation, train_classifier, ClassifierConfig,
};
use wirelayout::render::{compose, reference_rasterize, RenderConfig};
use wirelayout::trainer::{
    box_metrics, perturb_recover_train, prepare_data, synth_data, train, DiscKind, Experiment, TrainConfig, Trainer,
};
use wirelayout::{ClassSchema, Element, GeomKind, Geometry, Layout};

const SEEDS: [u64; 3] = [1, 2, 3];
const DOC_ITERS: usize = 1000;
const DIGIT_ITERS: usize = 1000;
const TANGRAM_ITERS: usize = 600;
const DIGITS: [u8; 3] = [0, 1, 7];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

/// Network sizes shared by every training criterion.
fn base_config(experiment: Experiment, disc: DiscKind, seed: u64) -> TrainConfig {
    TrainConfig {
        experiment,
        discriminator: disc,
        batch_size: 32,
        lr: 2e-5,
        init_std: 0.1,
        seed,
        checkpoint_every: 0,
        log_every: 100,
        eval_samples: 64,
        generator: GeneratorConfig {
            embed_dim: 64,
            encoder_widths: vec![64],
            decoder_widths: vec![64],
            ..Default::default()
        },
        relation_disc: RelationDiscConfig { encoder_widths: vec![32], head_widths: vec![32], ..Default::default() },
        wireframe_disc: WireframeDiscConfig { channels: vec![8, 16, 32], kernel: 3, stride: 2, pad: 1 },
        ..Default::default()
    }
}

fn doc_config(disc: DiscKind, seed: u64) -> TrainConfig {
    TrainConfig {
        n_elements: 9,
        width: 64,
        height: 64,
        iterations: DOC_ITERS,
        dataset_size: 2000,
        ..base_config(Experiment::Docbox, disc, seed)
    }
}

fn c1() -> Outcome {
    let start = Instant::now();
    let rows = gradient_suite(0, 50, &GradCheck::default()).expect("suite runs");
    let secs = start.elapsed().as_secs_f64();
    let worst = rows.iter().map(|r| r.max_error).fold(0.0, f64::max);
    let detail = rows.iter().map(|r| format!("{} {:.1e}", r.op, r.max_error)).collect::<Vec<_>>().join(", ");
    outcome(
        worst < 1e-4 && secs < 120.0 && rows.iter().all(|r| r.configs >= 50),
        format!("max rel error {worst:.2e} over 50 configs per op in {secs:.1}s ({detail})"),
    )
}

fn random_layout(rng: &mut ChaCha8Rng, kind: GeomKind) -> Layout {
    let n = rng.random_range(1..=6);
    let m = rng.random_range(1..=4);
    let names: Vec<String> = (0..m).map(|c| format!("c{c}")).collect();
    let coord = |rng: &mut ChaCha8Rng| rng.random_range(-0.1..1.1);
    let elements = (0..n)
        .map(|_| {
            let p = (0..m).map(|_| rng.random_range(0.0..=1.0)).collect();
            let geom = match kind {
                GeomKind::Point => Geometry::Point { x: coord(rng), y: coord(rng) },
                GeomKind::Box => {
                    let (a, b, c, d) = (coord(rng), coord(rng), coord(rng), coord(rng));
                    Geometry::Box { xl: a.min(b), yt: c.min(d), xr: a.max(b), yb: c.max(d) }
                }
                _ => Geometry::Triangle { v: std::array::from_fn(|_| coord(rng)) },
            };
            Element::new(p, geom)
        })
        .collect();
    Layout::new(ClassSchema::new(names).unwrap(), elements).unwrap()
}

fn c2() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    let mut per_kind = Vec::new();
    for kind in [GeomKind::Point, GeomKind::Box, GeomKind::Triangle] {
        let mut kind_worst: f64 = 0.0;
        for _ in 0..100 {
            let layout = random_layout(&mut rng, kind);
            let cfg = RenderConfig::new(rng.random_range(4..=48), rng.random_range(4..=48)).unwrap();
            let d = compose(&layout, &cfg).unwrap().max_abs_diff(&reference_rasterize(&layout, &cfg).unwrap());
            kind_worst = kind_worst.max(d);
        }
        per_kind.push(format!("{} {kind_worst:.1e}", kind.name()));
        worst = worst.max(kind_worst);
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst < 1e-9 && secs < 60.0,
        format!(
            "max |compose - reference| {worst:.2e} over 100 layouts per kind in {secs:.1}s ({})",
            per_kind.join(", ")
        ),
    )
}

fn c3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let schema = ClassSchema::documents();
    let real = prepare_data(
        &doc_config(DiscKind::Relation, 0).resolved().unwrap(),
        &synth_data(&doc_config(DiscKind::Relation, 0)).unwrap(),
    )
    .unwrap();
    let mut failures = Vec::new();
    for disc in [DiscKind::Relation, DiscKind::Wireframe] {
        let t = Trainer::new(&doc_config(disc, 3)).unwrap();
        for k in 0..100 {
            let mut perm: Vec<usize> = (0..9).collect();
            perm.shuffle(&mut rng);
            if disc == DiscKind::Relation {
                let z = sample_z(&mut rng, t.gen_config(), &schema, GeomKind::Box).unwrap();
                let out = generate_layout(&t.gen, t.gen_config(), &z).unwrap();
                let out_perm = generate_layout(&t.gen, t.gen_config(), &z.permuted(&perm)).unwrap();
                if out.permuted(&perm) != out_perm {
                    failures.push(format!("generator perm {k}"));
                }
            }
            let layout = &real[rng.random_range(0..real.len())];
            let (a, b) =
                (t.disc.score(&t.dis, layout).unwrap(), t.disc.score(&t.dis, &layout.permuted(&perm)).unwrap());
            if a.to_bits() != b.to_bits() {
                failures.push(format!("{} perm {k}: {a} vs {b}", t.disc.config.name()));
            }
        }
    }
    let detail = if failures.is_empty() {
        "generator equivariance and both discriminator invariances bit-exact on 100 permutations".to_string()
    } else {
        format!("{} mismatches, first: {}", failures.len(), failures[0])
    };
    outcome(failures.is_empty(), detail)
}

struct DocRun {
    overlap: Option<f64>,
    align: Option<f64>,
    secs: f64,
    landscape: Vec<(f64, f64)>,
}

fn doc_run(disc: DiscKind, seed: u64) -> DocRun {
    let cfg = doc_config(disc, seed);
    let data = synth_data(&cfg).unwrap();
    let start = Instant::now();
    let report = train(&cfg, &data).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let t = &report.trainer;
    let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
    let generated = t.sample(256, &mut rng).unwrap();
    let (overlap, align) = box_metrics(&generated, cfg.presence_threshold).unwrap();

    // Same sweep for both discriminators of a seed.
    let real = prepare_data(&t.config, &data[..256]).unwrap();
    let magnitudes: Vec<f64> = (0..21).map(|k| 0.01 * k as f64).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(2000 + seed);
    let landscape = loss_landscape(&t.disc, &t.dis, &real, &magnitudes, &mut rng).unwrap();
    DocRun { overlap, align, secs, landscape }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn fmt(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.3}")).unwrap_or_else(|| "none".into())
}

fn c4_c7() -> (Outcome, Outcome) {
    let mut rows = Vec::new();
    for seed in SEEDS {
        let rel = doc_run(DiscKind::Relation, seed);
        let wf = doc_run(DiscKind::Wireframe, seed);
        println!(
            "  docbox seed {seed}: relation overlap {} align {} ({:.0}s), wireframe overlap {} align {} ({:.0}s)",
            fmt(rel.overlap),
            fmt(rel.align),
            rel.secs,
            fmt(wf.overlap),
            fmt(wf.align),
            wf.secs
        );
        rows.push((rel, wf));
    }

    let slowest = rows.iter().flat_map(|(r, w)| [r.secs, w.secs]).fold(0.0, f64::max);
    let collect = |f: &dyn Fn(&(DocRun, DocRun)) -> Option<f64>| rows.iter().map(f).collect::<Option<Vec<f64>>>();
    let c4 = match (
        collect(&|r| r.0.overlap),
        collect(&|r| r.0.align),
        collect(&|r| r.1.overlap),
        collect(&|r| r.1.align),
    ) {
        (Some(ro), Some(ra), Some(wo), Some(wa)) => {
            let (ro, ra, wo, wa) = (mean(&ro), mean(&ra), mean(&wo), mean(&wa));
            outcome(
                wa <= 0.75 * ra && wo <= ro && slowest <= 1800.0,
                format!(
                    "mean alignment wireframe {wa:.3} vs 0.75 x relation {:.3}; mean overlap wireframe {wo:.3} vs relation {ro:.3}; slowest run {slowest:.0}s",
                    0.75 * ra
                ),
            )
        }
        _ => outcome(false, "a run generated no element above the presence threshold, so a mean is undefined".into()),
    };

    let mut wins = 0;
    let mut parts = Vec::new();
    for (seed, (rel, wf)) in SEEDS.iter().zip(&rows) {
        let (x, wy): (Vec<f64>, Vec<f64>) = wf.landscape.iter().copied().unzip();
        let ry: Vec<f64> = rel.landscape.iter().map(|p| p.1).collect();
        let rho = spearman(&x, &wy).unwrap_or(f64::NAN);
        let (tv_w, tv_r) = (total_variation(&wy), total_variation(&ry));
        if rho > 0.9 && tv_w < tv_r {
            wins += 1;
        }
        parts.push(format!("seed {seed}: rho {rho:.3}, TV wireframe {tv_w:.4} vs relation {tv_r:.4}"));
    }
    let c7 = outcome(wins >= 2, format!("{wins}/3 seeds smoother ({})", parts.join("; ")));
    (c4, c7)
}

fn c5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let (train_set, labels) = synth_digit_dataset(&mut rng, &DIGITS, 1500, 32).unwrap();
    let clf_cfg = ClassifierConfig { image_size: 16, hidden: vec![64], epochs: 30, ..Default::default() };
    let (clf, acc) = train_classifier(&train_set, &labels, &clf_cfg).unwrap();
    let (real, _) = synth_digit_dataset(&mut rng, &DIGITS, 1000, 32).unwrap();
    let (real_is, _) = inception_score(&real, &clf, 10).unwrap();

    let mut wins = 0;
    let mut parts = Vec::new();
    for seed in SEEDS {
        let mut scores = Vec::new();
        for disc in [DiscKind::Wireframe, DiscKind::Relation] {
            let cfg = TrainConfig {
                iterations: DIGIT_ITERS,
                dataset_size: 2000,
                digits: DIGITS.to_vec(),
                ..base_config(Experiment::Points, disc, seed)
            };
            let report = train(&cfg, &synth_data(&cfg).unwrap()).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(3000 + seed);
            let samples = report.trainer.sample(1000, &mut rng).unwrap();
            scores.push(inception_score(&samples, &clf, 10).unwrap().0);
        }
        let (wf, rel) = (scores[0], scores[1]);
        if real_is > wf && wf >= rel {
            wins += 1;
        }
        parts.push(format!("seed {seed}: wireframe {wf:.3}, relation {rel:.3}"));
    }
    outcome(
        wins >= 2,
        format!("{wins}/3 seeds ordered; real {real_is:.3} (classifier accuracy {acc:.3}); {}", parts.join("; ")),
    )
}

fn c6() -> Outcome {
    let (mut inputs, mut trained) = (Vec::new(), Vec::new());
    let mut parts = Vec::new();
    for seed in SEEDS {
        let cfg = TrainConfig {
            iterations: TANGRAM_ITERS,
            dataset_size: 200,
            eval_samples: 200,
            noise_std: 0.1,
            ..base_config(Experiment::Tangram, DiscKind::Wireframe, seed)
        };
        let data = synth_data(&cfg).unwrap();
        let report = perturb_recover_train(&cfg, &data, 0.1).unwrap();
        let input = report.input_displacement.unwrap();
        let last = report.log.last().and_then(|r| r.displacement).unwrap();
        parts.push(format!(
            "seed {seed}: input {input:.4}, untrained {:.4}, trained {last:.4}",
            report.initial_displacement.unwrap()
        ));
        inputs.push(input);
        trained.push(last);
    }
    let (i, t) = (mean(&inputs), mean(&trained));
    outcome(
        t <= 0.5 * i,
        format!("mean trained displacement {t:.4} vs 0.5 x input {:.4} ({})", 0.5 * i, parts.join("; ")),
    )
}

fn boxes(b: &[[f64; 4]]) -> Layout {
    let elements = b.iter().map(|&[xl, yt, xr, yb]| Element::one_hot(0, 1, Geometry::Box { xl, yt, xr, yb })).collect();
    Layout::new(ClassSchema::new(["box"]).unwrap(), elements).unwrap()
}

fn c8() -> Outcome {
    let mut failures = Vec::new();
    let mut check = |name: &str, ok: bool| {
        if !ok {
            failures.push(name.to_string());
        }
    };
    let disjoint = boxes(&[[0.0, 0.0, 0.25, 0.25], [0.5, 0.5, 0.75, 1.0], [0.25, 0.0, 0.5, 0.25]]);
    check("overlap of disjoint boxes", overlap_index(&[disjoint]).unwrap() == 0.0);
    let pair = boxes(&[[0.0, 0.0, 0.5, 0.5], [0.25, 0.25, 0.75, 0.75]]);
    check("overlap 6.25", overlap_index(&[pair]).unwrap() == 6.25);

    let shared_left = boxes(&[[0.2, 0.1, 0.5, 0.2], [0.2, 0.3, 0.9, 0.4], [0.2, 0.5, 0.3, 0.6]]);
    check("alignment of shared xL", alignment_index(&[shared_left]).unwrap() == 0.0);
    let centered = boxes(&[[0.1, 0.1, 0.9, 0.2], [0.3, 0.3, 0.7, 0.4], [0.2, 0.5, 0.8, 0.6]]);
    check("alignment of centered boxes", alignment_index(&[centered]).unwrap() == 0.0);
    // xL = {0.1, 0.2, 0.3} with every center at 0.3; the decimal inputs are
    // not binary-exact, so the oracle is a direct population std.
    let stepped = [[0.1, 0.1, 0.5, 0.2], [0.2, 0.3, 0.4, 0.4], [0.3, 0.5, 0.3, 0.6]];
    let pop_std = |v: Vec<f64>| {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64).sqrt()
    };
    let lefts = pop_std(stepped.iter().map(|b| b[0]).collect());
    let centers = pop_std(stepped.iter().map(|b| (b[0] + b[2]) / 2.0).collect());
    let got = alignment_index(&[boxes(&stepped)]).unwrap();
    check("alignment center branch", (got - 100.0 * lefts.min(centers)).abs() < 1e-12 && got < 1e-12);

    let k = 4;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let uniform = vec![vec![1.0 / k as f64; k]; 40];
    let balanced: Vec<Vec<f64>> = (0..40).map(|i| (0..k).map(|c| (c == i % k) as u8 as f64).collect()).collect();
    let collapsed: Vec<Vec<f64>> = (0..40).map(|_| (0..k).map(|c| (c == 2) as u8 as f64).collect()).collect();
    let tiny: Vec<Vec<f64>> = (0..40)
        .map(|i| {
            let mut r = vec![1e-300; k];
            r[i % k] = 1.0 - 3e-300;
            r
        })
        .collect();
    let skewed: Vec<Vec<f64>> = (0..40)
        .map(|_| {
            let raw: Vec<f64> = (0..k).map(|_| rng.random::<f64>().powi(8)).collect();
            let s: f64 = raw.iter().sum();
            raw.iter().map(|v| v / s).collect()
        })
        .collect();
    let score = |p: &[Vec<f64>], splits| inception_score_from_probs(p, splits).unwrap().0;
    check("uniform stub scores 1", (score(&uniform, 4) - 1.0).abs() < 1e-12);
    check("confident balanced stub scores K", (score(&balanced, 1) - k as f64).abs() < 1e-12);
    for (name, stub) in [
        ("uniform", &uniform),
        ("balanced", &balanced),
        ("collapsed", &collapsed),
        ("tiny", &tiny),
        ("skewed", &skewed),
    ] {
        for splits in [1, 3, 40] {
            let s = score(stub, splits);
            check(&format!("{name} stub within [1, K] at {splits} splits"), (1.0..=k as f64).contains(&s));
        }
    }
    let detail = if failures.is_empty() {
        "every overlap/alignment example exact; inception score within [1, K] on all stubs".to_string()
    } else {
        format!("failed: {}", failures.join(", "))
    };
    outcome(failures.is_empty(), detail)
}

fn c9() -> Outcome {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for dir in &dirs {
        let cfg = TrainConfig {
            iterations: 100,
            checkpoint_every: 50,
            log_every: 10,
            dataset_size: 200,
            out_dir: Some(dir.path().to_path_buf()),
            ..doc_config(DiscKind::Wireframe, 9)
        };
        train(&cfg, &synth_data(&cfg).unwrap()).unwrap();
    }
    let list = |d: &Path| {
        let mut v: Vec<String> =
            std::fs::read_dir(d).unwrap().map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect();
        v.sort();
        v
    };
    let (a, b) = (list(dirs[0].path()), list(dirs[1].path()));
    let identical = a == b
        && a.iter()
            .all(|f| std::fs::read(dirs[0].path().join(f)).unwrap() == std::fs::read(dirs[1].path().join(f)).unwrap());
    outcome(identical && a.len() == 4, format!("{} files compared byte-for-byte: {}", a.len(), a.join(", ")))
}

fn main() {
    let picked: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let wants = |c: usize| picked.is_empty() || picked.contains(&c);
    let mut results: Vec<(usize, Outcome)> = Vec::new();
    let mut record = |id: usize, o: Outcome| {
        println!("  finished criterion {id}");
        results.push((id, o));
    };
    let contracts: [(usize, fn() -> Outcome); 5] = [(1, c1), (2, c2), (3, c3), (8, c8), (9, c9)];
    for (id, f) in contracts {
        if wants(id) {
            record(id, f());
        }
    }
    if wants(4) || wants(7) {
        let (o4, o7) = c4_c7();
        if wants(4) {
            record(4, o4);
        }
        if wants(7) {
            record(7, o7);
        }
    }
    if wants(5) {
        record(5, c5());
    }
    if wants(6) {
        record(6, c6());
    }
    results.sort_by_key(|r| r.0);
    for (id, o) in &results {
        println!("criterion {id}: {} {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    if results.iter().any(|(id, o)| [1, 2, 3, 8, 9].contains(id) && !o.pass) {
        std::process::exit(1);
    }
}
