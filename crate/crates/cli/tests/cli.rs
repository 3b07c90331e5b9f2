use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rsen::data::{load_checkpoint, read_png, save_checkpoint, write_png};
use rsen::model::{init_params, ModelConfig, ParameterStore};
use rsen::Tensor;

fn rsen(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rsen"))
        .args(args)
        .current_dir(cwd)
        .env_remove("RSEN_THREADS")
        .output()
        .expect("spawn rsen")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    v.sort();
    v
}

fn write_config(dir: &Path, name: &str, extra: &str) -> PathBuf {
    let text = format!(
        "# toy run\nmodel.channel_scale = 1/4\ntrain.data_dir = data\ntrain.patch_size = 16\ntrain.batch_size = 2\ntrain.lr = 1e-3\n{extra}"
    );
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn help_lists_flags_for_every_subcommand() {
    let tmp = tempfile::tempdir().unwrap();
    let expected: &[(&str, &[&str])] = &[
        ("train", &["--config", "--resume"]),
        ("derain", &["--input", "--weights", "--output", "--dump-streaks"]),
        ("eval", &["--pred", "--gt"]),
        ("bench", &["--weights", "--size", "--repeats"]),
        ("gradcheck", &["--scale", "--seed"]),
        ("synth", &["--clean-dir", "--out-dir", "--intensity", "--angle", "--count", "--seed"]),
    ];
    for (cmd, flags) in expected {
        let o = rsen(&[cmd, "--help"], tmp.path());
        assert_eq!(code(&o), 0, "{cmd}");
        for f in *flags {
            assert!(stdout(&o).contains(f), "{cmd} --help lacks {f}");
        }
    }
    assert_eq!(code(&rsen(&["--help"], tmp.path())), 0);
    assert_eq!(code(&rsen(&["frobnicate"], tmp.path())), 2);
    assert_eq!(code(&rsen(&["eval", "--bogus"], tmp.path())), 2);
    assert_eq!(code(&rsen(&[], tmp.path())), 2);
}

#[test]
fn synth_with_zero_intensity_copies_clean() {
    let tmp = tempfile::tempdir().unwrap();
    let o = rsen(&["synth", "--out-dir", "s", "--generate", "3", "--image-size", "24", "--intensity", "0"], tmp.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let rainy = files(&tmp.path().join("s/rainy"));
    assert_eq!(rainy.len(), 3);
    assert_eq!(rainy, files(&tmp.path().join("s/clean")));

    let o = rsen(&["synth", "--clean-dir", "s/clean", "--out-dir", "t", "--intensity", "0.4", "--seed", "3"], tmp.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(files(&tmp.path().join("t/clean")), files(&tmp.path().join("s/clean")));
    assert_ne!(files(&tmp.path().join("t/rainy")), files(&tmp.path().join("t/clean")));

    let o = rsen(&["synth", "--out-dir", "u", "--intensity", "1.5"], tmp.path());
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("rain.intensity"));
}

#[test]
fn derain_with_zero_weights_reproduces_input() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let cfg = ModelConfig::desk();
    save_checkpoint(&dir.join("zero.rsen"), &ParameterStore::zeros(&cfg), &cfg, None).unwrap();
    let img = Tensor::from_fn([1, 3, 50, 37], |_, c, y, x| ((c * 41 + y * 7 + x * 13) % 256) as f32 / 255.0);
    write_png(&dir.join("in.png"), &img).unwrap();
    let o = rsen(
        &["derain", "--input", "in.png", "--weights", "zero.rsen", "--output", "out.png", "--dump-streaks", "r.png"],
        dir,
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = read_png(&dir.join("out.png")).unwrap();
    assert_eq!(out.dims().as_array(), [1, 3, 50, 37]);
    assert_eq!(out.data(), read_png(&dir.join("in.png")).unwrap().data());
    assert_eq!(read_png(&dir.join("r.png")).unwrap().dims().as_array(), [1, 3, 50, 37]);
}

#[test]
fn derain_error_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let small = ModelConfig { base_channels: 16, ..ModelConfig::default() };
    save_checkpoint(&dir.join("w.rsen"), &init_params(&small, 0), &small, None).unwrap();
    write_png(&dir.join("in.png"), &Tensor::full([1, 3, 12, 12], 0.5f32)).unwrap();
    std::fs::write(dir.join("big.cfg"), "model.base_channels = 64\n").unwrap();

    let o = rsen(&["derain", "--input", "missing.png", "--weights", "w.rsen", "--output", "o.png"], dir);
    assert_eq!(code(&o), 2);
    let o = rsen(
        &["derain", "--input", "in.png", "--weights", "w.rsen", "--output", "o.png", "--model-config", "big.cfg"],
        dir,
    );
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("encoder/in/conv/weight"), "{}", stderr(&o));
    let bytes = std::fs::read(dir.join("w.rsen")).unwrap();
    std::fs::write(dir.join("cut.rsen"), &bytes[..bytes.len() - 1]).unwrap();
    let o = rsen(&["derain", "--input", "in.png", "--weights", "cut.rsen", "--output", "o.png"], dir);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("truncated"), "{}", stderr(&o));
}

#[test]
fn train_is_reproducible_and_resumable() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let o = rsen(&["synth", "--out-dir", "data", "--generate", "3", "--image-size", "20"], dir);
    assert_eq!(code(&o), 0);
    let a = write_config(dir, "a.cfg", "train.epochs = 3\ntrain.out_dir = run_a\n");
    let b = write_config(dir, "b.cfg", "train.epochs = 3\ntrain.out_dir = run_b\n");
    for cfg in [&a, &b] {
        let o = rsen(&["train", "--config", cfg.to_str().unwrap()], dir);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    let ck_a = std::fs::read(dir.join("run_a/checkpoint.rsen")).unwrap();
    let ck_b = std::fs::read(dir.join("run_b/checkpoint.rsen")).unwrap();
    let strip = |b: &[u8]| load_checkpoint_params(b);
    assert_eq!(strip(&ck_a), strip(&ck_b));

    let more = write_config(dir, "more.cfg", "train.epochs = 5\ntrain.out_dir = run_a\n");
    let o = rsen(&["train", "--config", "more.cfg", "--resume", "run_a/checkpoint.rsen"], dir);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let log = std::fs::read_to_string(dir.join("run_a/train_log.csv")).unwrap();
    let epochs: Vec<usize> = log
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("epoch"))
        .map(|l| l.split(',').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(epochs, [0, 1, 2, 3, 4]);
    let ck = load_checkpoint(&dir.join("run_a/checkpoint.rsen")).unwrap();
    assert_eq!(ck.meta.get::<usize>("state.epoch").unwrap(), Some(5));
    drop(more);
}

fn load_checkpoint_params(bytes: &[u8]) -> Vec<(String, Vec<u32>)> {
    let ck = rsen::data::decode_checkpoint(bytes).unwrap();
    ck.params
        .iter()
        .map(|(n, t)| (n.to_string(), t.data().iter().map(|v| v.to_bits()).collect()))
        .collect()
}

#[test]
fn train_input_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let cfg = write_config(dir, "c.cfg", "");
    let o = rsen(&["train", "--config", cfg.to_str().unwrap()], dir);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("data"), "{}", stderr(&o));

    let bad = write_config(dir, "bad.cfg", "train.learning_rate = 3\n");
    let o = rsen(&["train", "--config", bad.to_str().unwrap()], dir);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("train.learning_rate"), "{}", stderr(&o));

    let o = rsen(&["train", "--config", "absent.cfg"], dir);
    assert_eq!(code(&o), 2);
}

#[test]
fn gradcheck_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let o = rsen(&["gradcheck"], tmp.path());
    assert_eq!(code(&o), 0, "{}{}", stdout(&o), stderr(&o));
    assert!(stdout(&o).contains("conv2d"));
    let o = rsen(&["gradcheck", "--corrupt", "sigmoid"], tmp.path());
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("sigmoid"), "{}", stderr(&o));
    let o = rsen(&["gradcheck", "--scale", "1/4", "--size", "12", "--seed", "2"], tmp.path());
    assert_eq!(code(&o), 0, "{}{}", stdout(&o), stderr(&o));
    assert_eq!(code(&rsen(&["gradcheck", "--corrupt", "nonsense"], tmp.path())), 2);
}

#[test]
fn eval_and_bench() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    assert_eq!(code(&rsen(&["synth", "--out-dir", "d", "--generate", "2", "--image-size", "16"], dir)), 0);
    let o = rsen(&["eval", "--pred", "d/clean", "--gt", "d/clean"], dir);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).starts_with("id,psnr,ssim\n"));
    assert!(stdout(&o).contains("mean_ssim=1.0000"));
    let o = rsen(&["eval", "--pred", "d/rainy", "--gt", "nowhere"], dir);
    assert_eq!(code(&o), 2);

    let o = rsen(&["bench", "--size", "30"], dir);
    assert_eq!(code(&o), 2);
    let o = rsen(&["bench", "--size", "16", "--repeats", "2", "--scale", "1/4"], dir);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = stdout(&o);
    let mut lines = out.lines();
    assert_eq!(lines.next(), Some("size,median_s,runs"));
    assert!(lines.next().unwrap().starts_with("16,"));
}

#[test]
fn thread_cap_is_validated() {
    let tmp = tempfile::tempdir().unwrap();
    let run = |v: &str| {
        Command::new(env!("CARGO_BIN_EXE_rsen"))
            .args(["bench", "--size", "8", "--repeats", "1", "--scale", "1/4"])
            .current_dir(tmp.path())
            .env("RSEN_THREADS", v)
            .output()
            .unwrap()
    };
    assert_eq!(code(&run("1")), 0);
    assert_eq!(code(&run("0")), 0);
    assert_eq!(code(&run("many")), 2);
}
