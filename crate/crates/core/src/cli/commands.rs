use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{Duration, Instant};

use super::{io_err, Architecture, CliError, Command, Mode, ReportFormat, Settings, TrainActivation, EVAL_KEY_FILE, PUBLIC_KEY_FILE, SECRET_KEY_FILE};
use crate::activation::{published_interval, Activation, PolyActivation, SurrogateManifest};
use crate::circuit::{batch_table, exhaustive_check, render_csv, render_text, GateCosts, Op};
use crate::ckks::{
    decode, decrypt, encode, encrypt, he_add, he_mul, he_mul_plain, keygen, CkksParams, EncryptionRandomness, EvaluationKey,
    NoiseMode, PlaintextVector, PresetTable, PublicKey, SecretKey,
};
use crate::model_io::{
    apply_surrogates, gen_synthetic, load_model, load_surrogates, resolve_data_path, save_model, Dataset, SyntheticSpec,
    RELU_SURROGATE,
};
use crate::nn::{
    check_depth, decrypt_tensor, derive_seed, encrypt_tensor, forward_encrypted_timed, forward_plain_timed, EncryptedEvaluator,
    Model, NnError, TensorPlain,
};
use crate::train::{accuracy, compact_cnn, small_cnn, train, ActivationMode, TrainConfig};

/// First line of an `infer` predictions file.
pub const PREDICTIONS_HEADER: &str = "id logit label ms";

const DEFAULT_BATCH: usize = 8;

pub(super) fn dispatch(cmd: &Command, s: &Settings, out: &mut Vec<u8>) -> Result<(), CliError> {
    match cmd {
        Command::Keygen { keys, .. } => cmd_keygen(s, &s.path(keys, &s.config.keys, "keys")?, out),
        Command::Infer {
            model,
            data,
            keys,
            out: dest,
            mode,
            batch,
            surrogates,
            ..
        } => {
            let job = InferJob {
                model: s.path(model, &s.config.model, "model")?,
                data: resolve_data_path(&s.path(data, &s.config.data, "data")?),
                keys: keys.clone().or(s.config.keys.clone()),
                out: dest.clone().or(s.config.out.clone()),
                mode: mode.or(s.config.mode).unwrap_or(Mode::Plain),
                batch: batch.or(s.config.batch).unwrap_or(DEFAULT_BATCH),
                surrogates: surrogates.clone(),
            };
            cmd_infer(s, &job, out)
        }
        Command::Approx {
            activation,
            degree,
            interval,
            name,
            out: dest,
            ..
        } => cmd_approx(activation, *degree, *interval, name.as_deref(), dest.as_deref(), out),
        Command::Circuit {
            op,
            bits,
            workers,
            batch,
            format,
            exhaustive,
            export,
            out: dest,
            ..
        } => {
            let costs = s.config.costs.unwrap_or_default();
            let job = CircuitJob {
                op: Op::from_str(op)?,
                bits: *bits,
                workers: workers.clone(),
                copies: *batch,
                format: *format,
                exhaustive: *exhaustive,
                costs,
            };
            cmd_circuit(&job, export.as_deref(), dest.as_deref(), out)
        }
        Command::Bench {
            model,
            data,
            keys,
            batch,
            out: dest,
            ..
        } => {
            let model = s.path(model, &s.config.model, "model")?;
            let data = resolve_data_path(&s.path(data, &s.config.data, "data")?);
            let keys = keys.clone().or(s.config.keys.clone());
            let batch = batch.or(s.config.batch).unwrap_or(DEFAULT_BATCH);
            cmd_bench(s, &model, &data, keys.as_deref(), batch, dest.clone().or(s.config.out.clone()).as_deref(), out)
        }
        Command::GenData {
            out: dest, samples, size, ..
        } => {
            let dest = s.path(dest, &s.config.out, "out")?;
            cmd_gen_data(s, &dest, *samples, *size, out)
        }
        Command::Train {
            data,
            out: dest,
            activation,
            arch,
            epochs,
            holdout,
            ..
        } => {
            let job = TrainJob {
                data: resolve_data_path(&s.path(data, &s.config.data, "data")?),
                out: s.path(dest, &s.config.out, "out")?,
                arch: *arch,
                activation: *activation,
                epochs: *epochs,
                holdout: *holdout,
            };
            cmd_train(s, &job, out)
        }
    }
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(|e| io_err(path, e))
}

fn read_bytes(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|e| io_err(path, e))
}

fn stdout_err(e: std::io::Error) -> CliError {
    io_err(Path::new("<stdout>"), e)
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

/// Loads `--preset`, looking in `--presets` first when given.
fn params(s: &Settings) -> Result<CkksParams, CliError> {
    if let Some(path) = &s.presets {
        let table = PresetTable::load(path)?;
        if let Ok(p) = table.get(&s.preset) {
            return Ok(CkksParams::from_preset(p)?);
        }
    }
    Ok(CkksParams::preset(&s.preset)?)
}

fn cmd_keygen(s: &Settings, dir: &Path, out: &mut Vec<u8>) -> Result<(), CliError> {
    let params = params(s)?;
    let files = [SECRET_KEY_FILE, PUBLIC_KEY_FILE, EVAL_KEY_FILE].map(|f| dir.join(f));
    if !s.force {
        if let Some(existing) = files.iter().find(|p| p.exists()) {
            return Err(CliError::Usage(format!(
                "{} already exists; pass --force to overwrite",
                existing.display()
            )));
        }
    }
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let started = Instant::now();
    let (sk, pk, evk) = keygen(&params, s.seed)?;
    let elapsed = started.elapsed();
    write_bytes(&files[0], &sk.to_bytes(&params))?;
    write_bytes(&files[1], &pk.to_bytes(&params))?;
    write_bytes(&files[2], &evk.to_bytes(&params))?;
    writeln!(
        out,
        "keys for {} (N={}, levels={}) written to {} in {:.1} ms",
        s.preset,
        params.degree(),
        params.max_level(),
        dir.display(),
        ms(elapsed)
    )
    .map_err(stdout_err)
}

struct Keys {
    params: CkksParams,
    sk: SecretKey,
    pk: PublicKey,
    evk: EvaluationKey,
}

fn load_keys(params: &CkksParams, dir: &Path) -> Result<Keys, CliError> {
    let read = |f: &str| read_bytes(&dir.join(f));
    Ok(Keys {
        params: params.clone(),
        sk: SecretKey::from_bytes(params, &read(SECRET_KEY_FILE)?)?,
        pk: PublicKey::from_bytes(params, &read(PUBLIC_KEY_FILE)?)?,
        evk: EvaluationKey::from_bytes(params, &read(EVAL_KEY_FILE)?)?,
    })
}

fn ephemeral_keys(params: &CkksParams, seed: u64) -> Result<Keys, CliError> {
    let (sk, pk, evk) = keygen(params, seed)?;
    Ok(Keys {
        params: params.clone(),
        sk,
        pk,
        evk,
    })
}

fn load_dataset(path: &Path) -> Result<Dataset, CliError> {
    Ok(Dataset::from_bytes(&read_bytes(path)?)?)
}

fn check_shapes(model: &Model, data: &Dataset) -> Result<(), CliError> {
    if data.shape() != model.spec.input_shape() {
        return Err(NnError::InputShape {
            expected: model.spec.input_shape(),
            found: data.shape(),
        }
        .into());
    }
    Ok(())
}

fn check_batch(batch: usize, params: &CkksParams) -> Result<(), CliError> {
    if batch == 0 {
        return Err(CliError::Usage("--batch must be at least 1".into()));
    }
    if batch > params.slot_count() {
        return Err(NnError::BatchTooLarge {
            batch,
            slots: params.slot_count(),
        }
        .into());
    }
    Ok(())
}

/// Encrypts `x`, runs the model and decrypts; returns logits, per-layer
/// times and (encrypt, decrypt) times.
fn run_encrypted(
    model: &Model,
    keys: &Keys,
    x: &TensorPlain,
    seed: u64,
    index: u64,
) -> Result<(TensorPlain, Vec<Duration>, Duration, Duration), CliError> {
    let t0 = Instant::now();
    let ct = encrypt_tensor(&keys.params, &keys.pk, x, derive_seed(seed, 2, index))?;
    let enc = t0.elapsed();
    let ev = EncryptedEvaluator {
        params: &keys.params,
        pk: &keys.pk,
        evk: &keys.evk,
        seed: derive_seed(seed, 3, index),
    };
    let (y, layers) = forward_encrypted_timed(model, &ev, &ct)?;
    let t1 = Instant::now();
    let logits = decrypt_tensor(&keys.params, &keys.sk, &y)?;
    Ok((logits, layers, enc, t1.elapsed()))
}

/// Keys for an encrypted mode, or `None` for plaintext.
fn keys_for(s: &Settings, mode: Mode, dir: Option<&Path>) -> Result<Option<Keys>, CliError> {
    match mode {
        Mode::Plain => Ok(None),
        Mode::Encrypted => {
            let dir = dir.ok_or_else(|| CliError::Usage("--mode encrypted needs --keys".into()))?;
            Ok(Some(load_keys(&params(s)?, dir)?))
        }
        Mode::Degenerate => Ok(Some(ephemeral_keys(&params(s)?.with_noise(NoiseMode::Degenerate), s.seed)?)),
    }
}

struct InferJob {
    model: PathBuf,
    data: PathBuf,
    keys: Option<PathBuf>,
    out: Option<PathBuf>,
    mode: Mode,
    batch: usize,
    surrogates: Option<PathBuf>,
}

/// Round-trip-exact text for a logit.
fn fmt_logit(x: f64) -> String {
    format!("{x:.17e}")
}

fn cmd_infer(s: &Settings, job: &InferJob, out: &mut Vec<u8>) -> Result<(), CliError> {
    let mut model = load_model(&job.model)?;
    if let Some(p) = &job.surrogates {
        apply_surrogates(&mut model.spec, &load_surrogates(p)?);
    }
    model.spec.shape_infer()?;
    let data = load_dataset(&job.data)?;
    check_shapes(&model, &data)?;
    if job.mode != Mode::Plain {
        let params = params(s)?;
        check_batch(job.batch, &params)?;
        check_depth(&model, params.max_level())?;
    } else if job.batch == 0 {
        return Err(CliError::Usage("--batch must be at least 1".into()));
    }
    let keys = keys_for(s, job.mode, job.keys.as_deref())?;

    let started = Instant::now();
    let mut layer_ms = vec![0.0; model.spec.layers.len()];
    let mut table = String::from(PREDICTIONS_HEADER);
    table.push('\n');
    for (b, start) in (0..data.len()).step_by(job.batch).enumerate() {
        let end = (start + job.batch).min(data.len());
        let x = data.to_tensor(start..end, &model.spec.preprocessing)?;
        let t = Instant::now();
        let (logits, layers) = match &keys {
            None => forward_plain_timed(&model, &x)?,
            Some(k) => {
                let (y, layers, _, _) = run_encrypted(&model, k, &x, s.seed, b as u64)?;
                (y, layers)
            }
        };
        let per_image = ms(t.elapsed()) / (end - start) as f64;
        for (acc, d) in layer_ms.iter_mut().zip(&layers) {
            *acc += ms(*d);
        }
        for i in 0..end - start {
            let logit = logits.sample(i)[0];
            let label = u8::from(logit > 0.0);
            writeln!(table, "{} {} {label} {per_image:.3}", start + i, fmt_logit(logit)).unwrap();
        }
    }
    let total = ms(started.elapsed());

    let mut summary = String::new();
    writeln!(
        summary,
        "mode {:?}, {} images, batch {}, total {total:.1} ms, {:.2} ms/image",
        job.mode,
        data.len(),
        job.batch,
        if data.is_empty() { 0.0 } else { total / data.len() as f64 }
    )
    .unwrap();
    for (i, (layer, t)) in model.spec.layers.iter().zip(&layer_ms).enumerate() {
        if matches!(layer, crate::nn::LayerSpec::Sigmoid) {
            continue;
        }
        writeln!(summary, "  layer {i:>2} {:<10} {t:>12.3} ms", layer.kind_name()).unwrap();
    }

    match &job.out {
        Some(p) => {
            write_bytes(p, table.as_bytes())?;
            out.write_all(summary.as_bytes()).map_err(stdout_err)?;
            writeln!(out, "predictions written to {}", p.display()).map_err(stdout_err)
        }
        None => {
            out.write_all(table.as_bytes()).map_err(stdout_err)?;
            for line in summary.lines() {
                writeln!(out, "# {line}").map_err(stdout_err)?;
            }
            Ok(())
        }
    }
}

fn cmd_approx(
    activation: &str,
    degree: usize,
    interval: Option<f64>,
    name: Option<&str>,
    dest: Option<&Path>,
    out: &mut Vec<u8>,
) -> Result<(), CliError> {
    let act = Activation::from_str(activation)?;
    let bound = interval.unwrap_or_else(published_interval);
    let p = PolyActivation::fit(act, degree, bound)?;
    let name = name.map(str::to_string).unwrap_or_else(|| format!("{}_poly", act.name()));
    // Worst deviation from the exact activation on a fine grid.
    let steps = 2000;
    let max_err = (0..=steps)
        .map(|i| -bound + 2.0 * bound * i as f64 / steps as f64)
        .map(|x| (p.eval_plain(x) - act.eval(x)).abs())
        .fold(0.0, f64::max);
    let manifest = SurrogateManifest::new(BTreeMap::from([(name.clone(), p.clone())]));
    let json = manifest.to_json();
    match dest {
        Some(path) => {
            write_bytes(path, json.as_bytes())?;
            writeln!(out, "{name}: degree {} on [-{bound}, {bound}], depth {}", p.degree(), p.depth()).map_err(stdout_err)?;
            for (k, c) in p.coefficients.iter().enumerate() {
                writeln!(out, "  c{k} = {c:.17e}").map_err(stdout_err)?;
            }
            writeln!(out, "  max |p(x) - {}(x)| = {max_err:.6e}", act.name()).map_err(stdout_err)?;
            writeln!(out, "written to {}", path.display()).map_err(stdout_err)
        }
        None => out.write_all(json.as_bytes()).map_err(stdout_err),
    }
}

struct CircuitJob {
    op: Op,
    bits: usize,
    workers: Vec<usize>,
    copies: usize,
    format: ReportFormat,
    exhaustive: bool,
    costs: GateCosts,
}

/// Operand widths checked exhaustively without `--exhaustive`.
const AUTO_EXHAUSTIVE_BITS: usize = 4;
const MAX_EXHAUSTIVE_BITS: usize = 8;

fn cmd_circuit(job: &CircuitJob, export: Option<&Path>, dest: Option<&Path>, out: &mut Vec<u8>) -> Result<(), CliError> {
    job.costs.validate()?;
    if job.exhaustive && job.bits > MAX_EXHAUSTIVE_BITS {
        return Err(CliError::Usage(format!(
            "--exhaustive supports at most {MAX_EXHAUSTIVE_BITS} bits, got {}",
            job.bits
        )));
    }
    if job.copies == 0 {
        return Err(CliError::Usage("--batch must be at least 1".into()));
    }
    let table = batch_table(job.op, job.bits, job.copies, &job.workers, &job.costs)?;
    let checked = job.exhaustive || job.bits <= AUTO_EXHAUSTIVE_BITS;
    if checked {
        if let Some((a, b)) = exhaustive_check(job.op, job.bits)? {
            return Err(CliError::Check(format!("{}{} is wrong for operands {a} and {b}", job.op.name(), job.bits)));
        }
    }
    if let Some(path) = export {
        write_bytes(path, job.op.build(job.bits)?.to_text().as_bytes())?;
    }
    let report = match job.format {
        ReportFormat::Text => {
            let pairs = 1u128 << (2 * job.bits.min(63));
            let check = if checked {
                format!("exhaustive check passed ({pairs} operand pairs)")
            } else {
                "exhaustive check skipped".to_string()
            };
            format!("# {} x {}-bit {}; {check}\n{}", job.copies, job.bits, job.op.name(), render_text(&[table]))
        }
        ReportFormat::Csv => render_csv(&[table]),
    };
    match dest {
        Some(p) => write_bytes(p, report.as_bytes()),
        None => out.write_all(report.as_bytes()).map_err(stdout_err),
    }
}

/// One line of the `bench` table. `ratio` is encrypted over plain, computed
/// from the printed millisecond values.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub stage: String,
    pub plain_ms: f64,
    pub encrypted_ms: f64,
    pub ratio: Option<f64>,
}

const BENCH_HEADER: &str = "stage plain_ms encrypted_ms ratio";

fn bench_line(stage: &str, plain: f64, encrypted: f64) -> String {
    let p = format!("{plain:.6}");
    let e = format!("{encrypted:.6}");
    let (pv, ev): (f64, f64) = (p.parse().unwrap(), e.parse().unwrap());
    let ratio = if pv > 0.0 { format!("{:.2}", ev / pv) } else { "-".into() };
    format!("{stage} {p} {e} {ratio}")
}

/// Parses the timing table of `bench` output; other lines are ignored.
pub fn bench_rows(text: &str) -> Vec<BenchRow> {
    let mut lines = text.lines().skip_while(|l| *l != BENCH_HEADER);
    lines.next();
    lines
        .map_while(|l| {
            let f: Vec<&str> = l.split_whitespace().collect();
            if f.len() != 4 {
                return None;
            }
            Some(BenchRow {
                stage: f[0].to_string(),
                plain_ms: f[1].parse().ok()?,
                encrypted_ms: f[2].parse().ok()?,
                ratio: f[3].parse().ok(),
            })
        })
        .collect()
}

/// Mean wall time of `reps` calls in milliseconds.
fn time_ms<T>(reps: usize, mut f: impl FnMut() -> Result<T, CliError>) -> Result<f64, CliError> {
    let t = Instant::now();
    for _ in 0..reps {
        std::hint::black_box(f()?);
    }
    Ok(ms(t.elapsed()) / reps as f64)
}

fn op_rows(keys: &Keys, values: &[f64], reps: usize) -> Result<Vec<String>, CliError> {
    let params = &keys.params;
    let m = encode(params, &PlaintextVector::from_real(values), params.scale())?;
    let r = EncryptionRandomness::sample(params, 1)?;
    let ct = encrypt(&keys.pk, &m, &r)?;
    let ct2 = encrypt(&keys.pk, &m, &EncryptionRandomness::sample(params, 2)?)?;
    let w: Vec<f64> = values.iter().map(|v| 0.5 * v).collect();

    let plain_add = time_ms(reps, || Ok(values.iter().zip(&w).map(|(a, b)| a + b).collect::<Vec<f64>>()))?;
    let plain_mul = time_ms(reps, || Ok(values.iter().zip(values).map(|(a, b)| a * b).collect::<Vec<f64>>()))?;
    let plain_mulp = time_ms(reps, || Ok(values.iter().zip(&w).map(|(a, b)| a * b).collect::<Vec<f64>>()))?;
    let enc_add = time_ms(reps, || Ok(he_add(&ct, &ct2)?))?;
    let enc_mul = time_ms(reps, || Ok(he_mul(&ct, &ct2, &keys.evk)?))?;
    let mw = encode(params, &PlaintextVector::from_real(&w), params.scale())?;
    let enc_mulp = time_ms(reps, || Ok(he_mul_plain(&ct, &mw)?))?;
    let plain_enc = time_ms(reps, || Ok(values.to_vec()))?;
    let enc_enc = time_ms(reps, || {
        let m = encode(params, &PlaintextVector::from_real(values), params.scale())?;
        Ok(encrypt(&keys.pk, &m, &r)?)
    })?;
    let enc_dec = time_ms(reps, || Ok(decode(params, &decrypt(&keys.sk, &ct)?)?))?;
    Ok(vec![
        bench_line("op:add", plain_add, enc_add),
        bench_line("op:mul", plain_mul, enc_mul),
        bench_line("op:mul_plain", plain_mulp, enc_mulp),
        bench_line("op:encrypt", plain_enc, enc_enc),
        bench_line("op:decrypt", plain_enc, enc_dec),
    ])
}

fn cmd_bench(
    s: &Settings,
    model_path: &Path,
    data_path: &Path,
    keys_dir: Option<&Path>,
    batch: usize,
    dest: Option<&Path>,
    out: &mut Vec<u8>,
) -> Result<(), CliError> {
    let model = load_model(model_path)?;
    let data = load_dataset(data_path)?;
    check_shapes(&model, &data)?;
    let params = params(s)?;
    check_batch(batch, &params)?;
    check_depth(&model, params.max_level())?;
    if data.is_empty() {
        return Err(CliError::Usage("bench needs at least one image".into()));
    }
    let keys = match keys_dir {
        Some(dir) => load_keys(&params, dir)?,
        None => ephemeral_keys(&params, s.seed)?,
    };
    let n = batch.min(data.len());
    let x = data.to_tensor(0..n, &model.spec.preprocessing)?;

    let t = Instant::now();
    let (plain_logits, plain_layers) = forward_plain_timed(&model, &x)?;
    let plain_total = ms(t.elapsed());
    let t = Instant::now();
    let (enc_logits, enc_layers, enc_time, dec_time) = run_encrypted(&model, &keys, &x, s.seed, 0)?;
    let enc_total = ms(t.elapsed());

    let mut text = String::new();
    writeln!(text, "# preset {} batch {n} seed {}", s.preset, s.seed).unwrap();
    writeln!(text, "{BENCH_HEADER}").unwrap();
    let sample: Vec<f64> = (0..params.slot_count()).map(|i| (i % 17) as f64 / 17.0).collect();
    for line in op_rows(&keys, &sample, 5)? {
        writeln!(text, "{line}").unwrap();
    }
    writeln!(text, "{}", bench_line("input:encrypt", 0.0, ms(enc_time))).unwrap();
    for (i, (p, e)) in plain_layers.iter().zip(&enc_layers).enumerate() {
        let stage = format!("layer{i}:{}", model.spec.layers[i].kind_name());
        writeln!(text, "{}", bench_line(&stage, ms(*p), ms(*e))).unwrap();
    }
    writeln!(text, "{}", bench_line("output:decrypt", 0.0, ms(dec_time))).unwrap();
    writeln!(text, "{}", bench_line("total", plain_total, enc_total)).unwrap();
    writeln!(text).unwrap();
    writeln!(text, "id plain_logit encrypted_logit").unwrap();
    let mut worst = 0.0f64;
    for i in 0..n {
        let (p, e) = (plain_logits.sample(i)[0], enc_logits.sample(i)[0]);
        worst = worst.max((p - e).abs());
        writeln!(text, "{i} {} {}", fmt_logit(p), fmt_logit(e)).unwrap();
    }
    writeln!(text, "# max |plain - encrypted| = {worst:.3e}").unwrap();
    if let Some(p) = dest {
        write_bytes(p, text.as_bytes())?;
    }
    out.write_all(text.as_bytes()).map_err(stdout_err)
}

fn cmd_gen_data(s: &Settings, dest: &Path, samples: usize, size: usize, out: &mut Vec<u8>) -> Result<(), CliError> {
    let spec = SyntheticSpec {
        height: size,
        width: size,
        ..SyntheticSpec::with_samples(samples, s.seed)
    };
    let data = gen_synthetic(&spec)?;
    write_bytes(dest, &data.to_bytes())?;
    writeln!(
        out,
        "{} images of {size}x{size}x{}, {:.1}% positive, written to {}",
        data.len(),
        spec.channels,
        100.0 * data.positive_fraction(),
        dest.display()
    )
    .map_err(stdout_err)
}

struct TrainJob {
    data: PathBuf,
    out: PathBuf,
    arch: Architecture,
    activation: TrainActivation,
    epochs: usize,
    holdout: f64,
}

fn cmd_train(s: &Settings, job: &TrainJob, out: &mut Vec<u8>) -> Result<(), CliError> {
    if !(0.0..1.0).contains(&job.holdout) {
        return Err(CliError::Usage(format!("--holdout must be in [0, 1), got {}", job.holdout)));
    }
    let data = load_dataset(&job.data)?;
    let held = (data.len() as f64 * job.holdout).round() as usize;
    let (train_set, test_set) = data.split_at(data.len() - held);
    let mode = match job.activation {
        TrainActivation::Relu => ActivationMode::ExactRelu,
        TrainActivation::Poly => ActivationMode::Surrogate,
    };
    let build = match job.arch {
        Architecture::Compact => compact_cnn,
        Architecture::Small => small_cnn,
    };
    let spec = build(RELU_SURROGATE, PolyActivation::published_relu());
    let cfg = TrainConfig {
        epochs: job.epochs,
        seed: s.seed,
        ..TrainConfig::default()
    };
    let report = train(&spec, mode, &train_set, &cfg)?;
    for (e, loss) in report.epoch_loss.iter().enumerate() {
        writeln!(out, "epoch {:>3} loss {loss:.5}", e + 1).map_err(stdout_err)?;
    }
    if !test_set.is_empty() {
        let acc = accuracy(&report.model, mode, &test_set)?;
        writeln!(out, "held-out accuracy {:.4} on {} images", acc, test_set.len()).map_err(stdout_err)?;
    }
    save_model(&report.model, &job.out)?;
    writeln!(out, "model written to {}", job.out.display()).map_err(stdout_err)
}
