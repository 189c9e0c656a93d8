use std::path::Path;
use std::process::{Command, Output};

fn wirelayout(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wirelayout")).args(args).output().expect("binary runs")
}

fn files(dir: &Path, ext: &str) -> Vec<String> {
    let mut out: Vec<String> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(ext))
        .collect();
    out.sort();
    out
}

#[test]
fn missing_config_is_a_usage_error_naming_the_path() {
    let out = wirelayout(&["train", "--config", "missing.cfg"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.cfg"));
}

#[test]
fn unknown_subcommand_and_flag_exit_1() {
    assert_eq!(wirelayout(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(wirelayout(&["render", "--bogus"]).status.code(), Some(1));
    assert_eq!(wirelayout(&["--help"]).status.code(), Some(0));
}

#[test]
fn gradcheck_seed_7_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = wirelayout(&["gradcheck", "--seed", "7", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8_lossy(&out.stdout);
    for op in wirelayout::gradsuite::SUITE_OPS {
        assert!(text.contains(op), "{op} missing from\n{text}");
    }
    assert!(dir.path().join("manifest.json").exists());
}

#[test]
fn synth_then_render_one_layout_gives_one_image() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let imgs = dir.path().join("imgs");
    let out = wirelayout(&["synth", "--experiment", "docbox", "--count", "1", "--out", data.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let layouts = data.join("layouts.json");
    let out = wirelayout(&["render", "--in", layouts.to_str().unwrap(), "--out", imgs.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(files(&imgs, ".png").len(), 1);
    assert!(imgs.join("manifest.json").exists());
}

#[test]
fn unreadable_layout_file_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{ not json").unwrap();
    let out = wirelayout(&["render", "--in", bad.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn train_generate_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = |s: &str| dir.path().join(s).to_string_lossy().into_owned();
    std::fs::write(
        dir.path().join("cfg.toml"),
        "experiment = \"docbox\"\nwidth = 16\nheight = 16\nbatch_size = 2\ndataset_size = 4\neval_samples = 2\n\
         [generator]\nembed_dim = 8\nencoder_widths = [8]\ndecoder_widths = [8]\n\
         [relation_disc]\nencoder_widths = [8]\nhead_widths = [8]\n",
    )
    .unwrap();
    let out = wirelayout(&[
        "train",
        "--config",
        &path("cfg.toml"),
        "--discriminator",
        "relation",
        "--iterations",
        "3",
        "--checkpoint-every",
        "3",
        "--log-every",
        "1",
        "--out",
        &path("run"),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest = std::fs::read_to_string(dir.path().join("run/manifest.json")).unwrap();
    // Flags override the file and the manifest records the merged result.
    assert!(manifest.contains("\"iterations\": 3"), "{manifest}");
    assert_eq!(files(&dir.path().join("run"), ".ckpt"), ["ckpt_000003.ckpt"]);

    let out = wirelayout(&["generate", "--run", &path("run"), "--count", "2", "--out", &path("gen")]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(files(&dir.path().join("gen"), ".png").len(), 2);

    let out = wirelayout(&["eval", "--in", &path("gen/layouts.json"), "--out", &path("eval")]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("eval/eval.json").exists());
}
