use std::path::{Path, PathBuf};
use std::process::Command;

use hecnn::activation::{PolyActivation, PUBLISHED_LINEAR, PUBLISHED_QUADRATIC};
use hecnn::ckks::{decode, decrypt, encode, encrypt, CkksParams, EncryptionRandomness, PlaintextVector, PublicKey, SecretKey};
use hecnn::cli::{bench_rows, run, PREDICTIONS_HEADER};
use hecnn::model_io::{gen_synthetic, load_surrogates, save_model, Dataset, SyntheticSpec, RELU_SURROGATE};
use hecnn::nn::{LayerSpec, Model, ModelSpec, Preprocessing};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempfile::TempDir;

struct Outcome {
    code: i32,
    stdout: String,
    stderr: String,
}

fn hecnn(args: &[&str]) -> Outcome {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("hecnn").chain(args.iter().copied());
    let code = run(argv, &mut out, &mut err);
    Outcome {
        code,
        stdout: String::from_utf8(out).unwrap(),
        stderr: String::from_utf8(err).unwrap(),
    }
}

fn ok(args: &[&str]) -> String {
    let o = hecnn(args);
    assert_eq!(o.code, 0, "{args:?} failed: {}", o.stderr);
    o.stdout
}

fn p(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).to_str().unwrap().to_string()
}

/// 8x8x3 input, depth 5: pool, conv, surrogate, dense.
fn tiny_model(seed: u64) -> Model {
    let mut spec = ModelSpec::new(
        [8, 8, 3],
        vec![
            LayerSpec::pool(2),
            LayerSpec::conv_same(2, 3),
            LayerSpec::activation(RELU_SURROGATE),
            LayerSpec::Dense { units: 1 },
            LayerSpec::Sigmoid,
        ],
    )
    .with_activation(RELU_SURROGATE, PolyActivation::published_relu());
    spec.preprocessing = Preprocessing::unit_range(3);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Model::with_generator(spec, |_, _| rng.random_range(-0.5..0.5)).unwrap()
}

fn tiny_data(samples: usize, seed: u64) -> Dataset {
    gen_synthetic(&SyntheticSpec {
        height: 8,
        width: 8,
        ..SyntheticSpec::with_samples(samples, seed)
    })
    .unwrap()
}

/// Writes a tiny model and dataset into `dir`; returns their paths.
fn fixture(dir: &TempDir, samples: usize) -> (String, String) {
    let model = p(dir, "tiny.json");
    save_model(&tiny_model(1), Path::new(&model)).unwrap();
    let data = p(dir, "tiny.bin");
    std::fs::write(&data, tiny_data(samples, 2).to_bytes()).unwrap();
    (model, data)
}

/// (id, logit, label) per record of a predictions file.
fn predictions(text: &str) -> Vec<(usize, f64, u8)> {
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(PREDICTIONS_HEADER));
    lines
        .filter(|l| !l.starts_with('#'))
        .map(|l| {
            let f: Vec<&str> = l.split(' ').collect();
            assert_eq!(f.len(), 4, "{l}");
            f[3].parse::<f64>().unwrap();
            (f[0].parse().unwrap(), f[1].parse().unwrap(), f[2].parse().unwrap())
        })
        .collect()
}

fn read(path: &str) -> String {
    std::fs::read_to_string(path).unwrap()
}

#[test]
fn keygen_is_deterministic_and_refuses_to_overwrite() {
    let dir = TempDir::new().unwrap();
    let (a, b) = (p(&dir, "a"), p(&dir, "b"));
    for d in [&a, &b] {
        ok(&["keygen", "--keys", d, "--preset", "test-n4096-d4", "--seed", "5"]);
    }
    for f in ["secret.key", "public.key", "eval.key"] {
        let x = std::fs::read(Path::new(&a).join(f)).unwrap();
        assert_eq!(x, std::fs::read(Path::new(&b).join(f)).unwrap(), "{f}");
    }
    let before = std::fs::read(Path::new(&a).join("secret.key")).unwrap();
    let o = hecnn(&["keygen", "--keys", &a, "--preset", "test-n4096-d4", "--seed", "6"]);
    assert_eq!(o.code, 2);
    assert!(o.stderr.starts_with("error: ") && o.stderr.contains("--force"), "{}", o.stderr);
    assert_eq!(std::fs::read(Path::new(&a).join("secret.key")).unwrap(), before);
    ok(&["keygen", "--keys", &a, "--preset", "test-n4096-d4", "--seed", "6", "--force"]);
    assert_ne!(std::fs::read(Path::new(&a).join("secret.key")).unwrap(), before);
}

#[test]
fn generated_keys_decrypt_what_they_encrypt() {
    let dir = TempDir::new().unwrap();
    let keys = p(&dir, "k");
    ok(&["keygen", "--keys", &keys, "--preset", "test-n4096-d4", "--seed", "9"]);
    let params = CkksParams::preset("test-n4096-d4").unwrap();
    let sk = SecretKey::from_bytes(&params, &std::fs::read(Path::new(&keys).join("secret.key")).unwrap()).unwrap();
    let pk = PublicKey::from_bytes(&params, &std::fs::read(Path::new(&keys).join("public.key")).unwrap()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let v: Vec<f64> = (0..params.slot_count()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let m = encode(&params, &PlaintextVector::from_real(&v), params.scale()).unwrap();
    let ct = encrypt(&pk, &m, &EncryptionRandomness::sample(&params, 3).unwrap()).unwrap();
    let back = decode(&params, &decrypt(&sk, &ct).unwrap()).unwrap().real_parts();
    let err = v.iter().zip(&back).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(err < 2f64.powi(-25), "{err}");
}

#[test]
fn encrypted_inference_matches_plaintext() {
    let dir = TempDir::new().unwrap();
    let (model, data) = fixture(&dir, 10);
    let keys = p(&dir, "k");
    ok(&["keygen", "--keys", &keys, "--seed", "3"]);
    let plain = p(&dir, "plain.txt");
    ok(&["infer", "--model", &model, "--data", &data, "--out", &plain]);
    let plain = predictions(&read(&plain));
    assert_eq!(plain.len(), 10);
    assert_eq!(plain.iter().map(|r| r.0).collect::<Vec<_>>(), (0..10).collect::<Vec<_>>());

    let mut runs = Vec::new();
    for name in ["enc1.txt", "enc2.txt"] {
        let out = p(&dir, name);
        let stdout = ok(&[
            "infer", "--model", &model, "--data", &data, "--keys", &keys, "--mode", "encrypted", "--batch", "8", "--seed", "4",
            "--out", &out,
        ]);
        assert!(stdout.contains("ms/image") && stdout.contains("conv2d"), "{stdout}");
        runs.push(predictions(&read(&out)));
    }
    for ((pl, e1), e2) in plain.iter().zip(&runs[0]).zip(&runs[1]) {
        assert_eq!(pl.2, e1.2, "label of image {}", pl.0);
        assert_eq!(pl.2, u8::from(pl.1 > 0.0));
        assert!((pl.1 - e1.1).abs() < 1e-2, "{} vs {}", pl.1, e1.1);
        // Non-timing output is a function of the seed.
        assert_eq!(e1.1.to_bits(), e2.1.to_bits());
    }

    let out = p(&dir, "degenerate.txt");
    ok(&["infer", "--model", &model, "--data", &data, "--mode", "degenerate", "--out", &out]);
    for (pl, d) in plain.iter().zip(predictions(&read(&out))) {
        assert!((pl.1 - d.1).abs() < 2f64.powi(-20), "{} vs {}", pl.1, d.1);
    }
}

#[test]
fn empty_dataset_gives_header_only() {
    let dir = TempDir::new().unwrap();
    let (model, _) = fixture(&dir, 1);
    let empty = p(&dir, "empty.bin");
    std::fs::write(&empty, tiny_data(0, 1).to_bytes()).unwrap();
    let out = p(&dir, "pred.txt");
    ok(&["infer", "--model", &model, "--data", &empty, "--out", &out]);
    assert_eq!(read(&out), format!("{PREDICTIONS_HEADER}\n"));
    let stdout = ok(&["infer", "--model", &model, "--data", &empty]);
    assert!(stdout.starts_with(&format!("{PREDICTIONS_HEADER}\n#")), "{stdout}");
}

#[test]
fn infer_validates_before_running() {
    let dir = TempDir::new().unwrap();
    let (model, data) = fixture(&dir, 4);
    let keys = p(&dir, "k");
    let o = hecnn(&["infer", "--model", &model, "--data", &data, "--mode", "encrypted", "--batch", "4096"]);
    assert_eq!(o.code, 2, "{}", o.stderr);
    assert!(o.stderr.contains("exceeds 2048 slots"), "{}", o.stderr);
    let o = hecnn(&["infer", "--model", &model, "--data", &data, "--mode", "encrypted", "--preset", "test-n4096-d4"]);
    assert_eq!(o.code, 2);
    assert!(o.stderr.contains("depth exhausted"), "{}", o.stderr);
    let o = hecnn(&["infer", "--model", &model, "--data", &data, "--mode", "encrypted"]);
    assert_eq!(o.code, 2);
    assert!(o.stderr.contains("--keys"));
    let o = hecnn(&["infer", "--model", &model, "--data", &data, "--mode", "encrypted", "--keys", &keys]);
    assert_eq!(o.code, 1, "missing key files are a runtime error");
    let o = hecnn(&["infer", "--model", &model, "--data", &data, "--preset", "nope"]);
    assert_eq!(o.code, 0, "plain mode ignores the preset");
    let o = hecnn(&["infer", "--model", &model, "--data", &data, "--mode", "degenerate", "--preset", "nope"]);
    assert_eq!(o.code, 2);
    assert!(o.stderr.contains("unknown preset `nope`"));

    let wrong = p(&dir, "wrong.bin");
    let big = gen_synthetic(&SyntheticSpec::with_samples(2, 0)).unwrap();
    std::fs::write(&wrong, big.to_bytes()).unwrap();
    let o = hecnn(&["infer", "--model", &model, "--data", &wrong]);
    assert_eq!(o.code, 2);
    assert!(o.stderr.contains("does not match model input"), "{}", o.stderr);
}

#[test]
fn approx_writes_the_published_surrogate() {
    let dir = TempDir::new().unwrap();
    let out = p(&dir, "relu.json");
    let stdout = ok(&["approx", "--activation", "relu", "--degree", "2", "--out", &out]);
    assert!(stdout.contains("relu_poly"));
    let m = load_surrogates(Path::new(&out)).unwrap();
    let c = &m.surrogates[RELU_SURROGATE].coefficients;
    assert_eq!(c.len(), 3);
    assert!(c[0].abs() < 1e-12);
    assert!((c[1] - PUBLISHED_LINEAR).abs() < 1e-9, "{}", c[1]);
    assert!((c[2] - PUBLISHED_QUADRATIC).abs() < 1e-12, "{}", c[2]);

    let to_stdout = ok(&["approx", "--activation", "relu", "--degree", "2"]);
    assert_eq!(to_stdout, read(&out));

    let o = hecnn(&["approx", "--degree", "0"]);
    assert_eq!(o.code, 2);
    assert!(o.stderr.contains("degree"), "{}", o.stderr);
    assert_eq!(hecnn(&["approx", "--activation", "swish"]).code, 2);
    assert_eq!(hecnn(&["approx", "--interval", "-1"]).code, 2);
}

#[test]
fn infer_accepts_a_replacement_surrogate() {
    let dir = TempDir::new().unwrap();
    let (model, data) = fixture(&dir, 3);
    let linear = p(&dir, "lin.json");
    // Degree-1 fit on [-1, 1]: x/2 + 1/4 instead of the quadratic.
    ok(&["approx", "--degree", "1", "--interval", "1", "--name", RELU_SURROGATE, "--out", &linear]);
    let base = predictions(&ok(&["infer", "--model", &model, "--data", &data]));
    let swapped = predictions(&ok(&["infer", "--model", &model, "--data", &data, "--surrogates", &linear]));
    assert_eq!(base.len(), swapped.len());
    assert!(base.iter().zip(&swapped).any(|(a, b)| a.1 != b.1));
}

/// Makespan column of a text report.
fn makespans(report: &str) -> Vec<f64> {
    report
        .lines()
        .skip_while(|l| !l.starts_with("op "))
        .skip(1)
        .map(|l| l.split_whitespace().nth(6).unwrap().parse().unwrap())
        .collect()
}

#[test]
fn circuit_report_and_export() {
    let dir = TempDir::new().unwrap();
    let report = ok(&["circuit", "--op", "add", "--bits", "8", "--workers", "1,2,10,20,40"]);
    let m = makespans(&report);
    assert_eq!(m.len(), 5);
    assert_eq!(m[0], 64.0 * 37.0);
    assert!(m.windows(2).all(|w| w[1] <= w[0]), "{m:?}");
    assert!(report.contains("exhaustive check skipped"));

    let mul4 = ok(&["circuit", "--op", "mul", "--bits", "4"]);
    assert!(mul4.lines().next().unwrap().contains("exhaustive check passed (256 operand pairs)"), "{mul4}");
    let add6 = ok(&["circuit", "--op", "add", "--bits", "6", "--exhaustive", "--batch", "1"]);
    assert!(add6.contains("exhaustive check passed (4096 operand pairs)"));

    let csv = ok(&["circuit", "--op", "mul", "--bits", "3", "--format", "csv", "--workers", "4"]);
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].starts_with("op,circuits,gates"));
    assert!(rows[1].starts_with("mul3,64,"));

    let export = p(&dir, "add5.txt");
    let out = p(&dir, "report.txt");
    ok(&["circuit", "--op", "add", "--bits", "5", "--export", &export, "--out", &out]);
    let c = hecnn::circuit::Circuit::from_text(&read(&export)).unwrap();
    assert_eq!(c.gates().len(), 22);
    assert!(read(&out).contains("add5"));

    assert_eq!(hecnn(&["circuit", "--op", "div"]).code, 2);
    assert_eq!(hecnn(&["circuit", "--bits", "0"]).code, 2);
    assert_eq!(hecnn(&["circuit", "--workers", "0"]).code, 2);
    assert_eq!(hecnn(&["circuit", "--bits", "9", "--exhaustive"]).code, 2);
}

#[test]
fn circuit_costs_come_from_the_config_file() {
    let dir = TempDir::new().unwrap();
    let cfg = p(&dir, "run.toml");
    std::fs::write(&cfg, "[costs]\nxor = 2.0\nand = 1.0\nor = 1.0\nnot = 1.0\n").unwrap();
    let report = ok(&["circuit", "--bits", "4", "--workers", "1", "--batch", "1", "--config", &cfg]);
    // add4: 7 XOR at cost 2, 7 AND and 3 OR at cost 1.
    assert_eq!(makespans(&report), vec![24.0]);
    std::fs::write(&cfg, "[costs]\nxor = -1.0\nand = 1.0\nor = 1.0\nnot = 1.0\n").unwrap();
    assert_eq!(hecnn(&["circuit", "--config", &cfg]).code, 2);
    std::fs::write(&cfg, "colour = \"blue\"\n").unwrap();
    assert_eq!(hecnn(&["circuit", "--config", &cfg]).code, 2);
}

#[test]
fn config_supplies_paths_and_flags_override_it() {
    let dir = TempDir::new().unwrap();
    let (model, data) = fixture(&dir, 3);
    let cfg = p(&dir, "run.toml");
    let from_cfg = p(&dir, "from_cfg.txt");
    std::fs::write(
        &cfg,
        format!("model = {model:?}\ndata = {data:?}\nout = {from_cfg:?}\nmode = \"plain\"\nbatch = 2\nseed = 1\n"),
    )
    .unwrap();
    ok(&["infer", "--config", &cfg]);
    assert_eq!(predictions(&read(&from_cfg)).len(), 3);
    let flagged = p(&dir, "flag.txt");
    ok(&["infer", "--config", &cfg, "--out", &flagged]);
    let a: Vec<f64> = predictions(&read(&from_cfg)).iter().map(|r| r.1).collect();
    let b: Vec<f64> = predictions(&read(&flagged)).iter().map(|r| r.1).collect();
    assert_eq!(a, b);
    let o = hecnn(&["infer", "--config", &cfg, "--mode", "sideways"]);
    assert_eq!(o.code, 2);
}

#[test]
fn bench_reports_ops_layers_and_logits() {
    let dir = TempDir::new().unwrap();
    let (model, data) = fixture(&dir, 4);
    let out = p(&dir, "bench.txt");
    let text = ok(&["bench", "--model", &model, "--data", &data, "--preset", "test-n4096-d8", "--seed", "2", "--out", &out]);
    assert_eq!(text, read(&out));
    let rows = bench_rows(&text);
    let stages: Vec<&str> = rows.iter().map(|r| r.stage.as_str()).collect();
    for s in ["op:add", "op:mul", "op:mul_plain", "input:encrypt", "output:decrypt", "total"] {
        assert!(stages.contains(&s), "missing {s}: {stages:?}");
    }
    assert_eq!(stages.iter().filter(|s| s.starts_with("layer")).count(), 4);
    for r in &rows {
        assert!(r.encrypted_ms > 0.0, "{r:?}");
        match r.ratio {
            Some(q) => assert!((q - r.encrypted_ms / r.plain_ms).abs() <= 0.005 + 1e-9, "{r:?}"),
            None => assert_eq!(r.plain_ms, 0.0),
        }
    }
    let logits: Vec<(f64, f64)> = text
        .lines()
        .skip_while(|l| !l.starts_with("id plain_logit"))
        .skip(1)
        .take_while(|l| !l.starts_with('#'))
        .map(|l| {
            let f: Vec<f64> = l.split(' ').skip(1).map(|x| x.parse().unwrap()).collect();
            (f[0], f[1])
        })
        .collect();
    assert_eq!(logits.len(), 4);
    for (a, b) in logits {
        assert!((a - b).abs() < 1e-2);
    }
}

#[test]
fn gen_data_and_train_produce_loadable_files() {
    let dir = TempDir::new().unwrap();
    let data = p(&dir, "d.bin");
    ok(&["gen-data", "--out", &data, "--samples", "64", "--seed", "3"]);
    let d = Dataset::from_bytes(&std::fs::read(&data).unwrap()).unwrap();
    assert_eq!((d.len(), d.height, d.width, d.channels), (64, 32, 32, 3));
    let model = p(&dir, "m.json");
    let stdout = ok(&["train", "--data", &data, "--out", &model, "--epochs", "1", "--seed", "1"]);
    assert!(stdout.contains("epoch   1 loss"), "{stdout}");
    let m = hecnn::model_io::load_model(Path::new(&model)).unwrap();
    assert_eq!(m.spec.depth_cost().unwrap(), 8);
    assert_eq!(hecnn(&["train", "--data", &data, "--out", &model, "--holdout", "1.5"]).code, 2);
    assert_eq!(hecnn(&["train", "--data", &data, "--out", &model, "--epochs", "0"]).code, 2);
}

fn binary() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hecnn"))
}

#[test]
fn binary_exit_codes() {
    let dir = TempDir::new().unwrap();
    let status = |args: &[&str]| binary().args(args).output().unwrap();
    let help = status(&["--help"]);
    assert_eq!(help.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&help.stdout).contains("keygen"));
    assert_eq!(status(&["--version"]).status.code(), Some(0));
    assert_eq!(status(&["--no-such-flag"]).status.code(), Some(2));
    assert_eq!(status(&[]).status.code(), Some(2));
    let missing = p(&dir, "missing.json");
    let o = status(&["infer", "--model", &missing, "--data", "x.bin"]);
    assert_eq!(o.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&o.stderr);
    assert!(stderr.starts_with("error: ") && stderr.contains("missing.json"), "{stderr}");
    assert_eq!(status(&["circuit", "--bits", "2", "--batch", "1"]).status.code(), Some(0));
}

#[test]
fn data_dir_override_resolves_relative_paths() {
    let dir = TempDir::new().unwrap();
    let (model, _) = fixture(&dir, 5);
    let data_dir: PathBuf = dir.path().join("datasets");
    std::fs::create_dir(&data_dir).unwrap();
    std::fs::write(data_dir.join("five.bin"), tiny_data(5, 7).to_bytes()).unwrap();
    let o = binary()
        .args(["infer", "--model", &model, "--data", "five.bin"])
        .env("HECNN_DATA_DIR", &data_dir)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(predictions(&String::from_utf8(o.stdout).unwrap()).len(), 5);
    let o = binary()
        .args(["infer", "--model", &model, "--data", "five.bin"])
        .env_remove("HECNN_DATA_DIR")
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
}
