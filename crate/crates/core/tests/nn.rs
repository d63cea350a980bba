use hecnn::activation::PolyActivation;
use hecnn::ckks::*;
use hecnn::nn::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rand_vec(rng: &mut ChaCha8Rng, n: usize, b: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-b..b)).collect()
}

fn single(model: &Model, params: Vec<LayerParams>) -> Model {
    Model::new(model.spec.clone(), params).unwrap()
}

fn one_layer(input: [usize; 3], layer: LayerSpec, weights: Vec<f64>, bias: Vec<f64>) -> Model {
    let spec = ModelSpec::new(input, vec![layer]);
    let m = Model::with_generator(spec, |_, _| 0.0).unwrap();
    single(&m, vec![LayerParams { weights, bias }])
}

/// Direct six-loop cross-correlation on one HWC image.
#[allow(clippy::too_many_arguments)]
fn naive_conv(x: &[f64], h: usize, w: usize, ic: usize, wt: &[f64], b: &[f64], k: usize, oc: usize, same: bool) -> Vec<f64> {
    let pad = if same { (k - 1) / 2 } else { 0 };
    let (oh, ow) = if same { (h, w) } else { (h - k + 1, w - k + 1) };
    let mut out = vec![0.0; oh * ow * oc];
    for i in 0..oh {
        for j in 0..ow {
            for f in 0..oc {
                let mut s = b[f];
                for ki in 0..k {
                    for kj in 0..k {
                        for c in 0..ic {
                            let (ii, jj) = (i as isize + ki as isize - pad as isize, j as isize + kj as isize - pad as isize);
                            if ii >= 0 && jj >= 0 && (ii as usize) < h && (jj as usize) < w {
                                s += x[(ii as usize * w + jj as usize) * ic + c] * wt[((ki * k + kj) * ic + c) * oc + f];
                            }
                        }
                    }
                }
                out[(i * ow + j) * oc + f] = s;
            }
        }
    }
    out
}

#[test]
fn unit_kernel_is_identity() {
    let m = one_layer([3, 3, 1], LayerSpec::conv_same(1, 1), vec![1.0], vec![0.0]);
    let x = TensorPlain::new(1, Shape::spatial(3, 3, 1), (0..9).map(f64::from).collect()).unwrap();
    assert_eq!(forward_plain(&m, &x).unwrap().data, x.data);
}

#[test]
fn ones_kernel_counts_nine() {
    let m = one_layer([4, 4, 1], LayerSpec::conv_valid(1, 3), vec![1.0; 9], vec![0.0]);
    let x = TensorPlain::new(1, Shape::spatial(4, 4, 1), vec![1.0; 16]).unwrap();
    let y = forward_plain(&m, &x).unwrap();
    assert_eq!(y.shape, Shape::spatial(2, 2, 1));
    assert_eq!(y.data, vec![9.0; 4]);
}

#[test]
fn conv_matches_naive_loops() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for same in [true, false] {
        let wt = rand_vec(&mut rng, 3 * 3 * 2 * 3, 1.0);
        let b = rand_vec(&mut rng, 3, 1.0);
        let layer = if same { LayerSpec::conv_same(3, 3) } else { LayerSpec::conv_valid(3, 3) };
        let m = one_layer([8, 8, 2], layer, wt.clone(), b.clone());
        let imgs: Vec<Vec<f64>> = (0..3).map(|_| rand_vec(&mut rng, 128, 2.0)).collect();
        let x = TensorPlain::from_samples(Shape::spatial(8, 8, 2), &imgs).unwrap();
        let y = forward_plain(&m, &x).unwrap();
        for (i, img) in imgs.iter().enumerate() {
            let want = naive_conv(img, 8, 8, 2, &wt, &b, 3, 3, same);
            let got = y.sample(i);
            assert!(got.iter().zip(&want).all(|(a, b)| (a - b).abs() < 1e-10));
        }
    }
}

#[test]
fn pooling_examples() {
    let m = one_layer([2, 2, 1], LayerSpec::pool(2), vec![], vec![]);
    let x = TensorPlain::new(1, Shape::spatial(2, 2, 1), vec![1.0, 2.0, 3.0, 4.0]).unwrap();
    assert_eq!(forward_plain(&m, &x).unwrap().data, vec![2.5]);

    let m = one_layer([4, 6, 2], LayerSpec::pool(2), vec![], vec![]);
    let x = TensorPlain::new(1, Shape::spatial(4, 6, 2), vec![0.75; 48]).unwrap();
    assert!(forward_plain(&m, &x).unwrap().data.iter().all(|&v| v == 0.75));

    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let m = one_layer([5, 7, 3], LayerSpec::pool(2), vec![], vec![]);
    let img = rand_vec(&mut rng, 105, 3.0);
    let y = forward_plain(&m, &TensorPlain::new(1, Shape::spatial(5, 7, 3), img.clone()).unwrap()).unwrap();
    assert_eq!(y.shape, Shape::spatial(2, 3, 3));
    for i in 0..2 {
        for j in 0..3 {
            for c in 0..3 {
                let at = |a: usize, b: usize| img[(a * 7 + b) * 3 + c];
                let want = (at(2 * i, 2 * j) + at(2 * i + 1, 2 * j) + at(2 * i, 2 * j + 1) + at(2 * i + 1, 2 * j + 1)) / 4.0;
                assert!((y.data[(i * 3 + j) * 3 + c] - want).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn padding_examples() {
    let m = one_layer([2, 2, 1], LayerSpec::pad(0), vec![], vec![]);
    let x = TensorPlain::new(1, Shape::spatial(2, 2, 1), vec![1.0, 2.0, 3.0, 4.0]).unwrap();
    assert_eq!(forward_plain(&m, &x).unwrap(), x);
    let m = one_layer([2, 2, 1], LayerSpec::pad(1), vec![], vec![]);
    let y = forward_plain(&m, &x).unwrap();
    assert_eq!(y.shape, Shape::spatial(4, 4, 1));
    #[rustfmt::skip]
    let want = vec![
        0.0, 0.0, 0.0, 0.0,
        0.0, 1.0, 2.0, 0.0,
        0.0, 3.0, 4.0, 0.0,
        0.0, 0.0, 0.0, 0.0,
    ];
    assert_eq!(y.data, want);
}

#[test]
fn dense_examples() {
    let m = one_layer([1, 1, 2], LayerSpec::Dense { units: 2 }, vec![1.0, 0.0, 0.0, 1.0], vec![0.0, 0.0]);
    let x = TensorPlain::new(1, Shape::spatial(1, 1, 2), vec![1.0, 2.0]).unwrap();
    assert_eq!(forward_plain(&m, &x).unwrap().data, vec![1.0, 2.0]);
    // Row i of W holds input i's weights: [[1, 1], [1, -1]].
    let m = one_layer([1, 1, 2], LayerSpec::Dense { units: 2 }, vec![1.0, 1.0, 1.0, -1.0], vec![0.0, 0.0]);
    assert_eq!(forward_plain(&m, &x).unwrap().data, vec![3.0, -1.0]);

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let w = rand_vec(&mut rng, 32 * 8, 1.0);
    let b = rand_vec(&mut rng, 8, 1.0);
    let m = one_layer([2, 4, 4], LayerSpec::Dense { units: 8 }, w.clone(), b.clone());
    let v = rand_vec(&mut rng, 32, 1.0);
    let y = forward_plain(&m, &TensorPlain::new(1, Shape::spatial(2, 4, 4), v.clone()).unwrap()).unwrap();
    for j in 0..8 {
        let want: f64 = b[j] + (0..32).map(|i| v[i] * w[i * 8 + j]).sum::<f64>();
        assert!((y.data[j] - want).abs() < 1e-10);
    }
}

#[test]
fn empty_and_activation_models() {
    let m = Model::new(ModelSpec::new([2, 2, 1], vec![]), vec![]).unwrap();
    let x = TensorPlain::new(1, Shape::spatial(2, 2, 1), vec![1.0, -2.0, 3.0, 4.0]).unwrap();
    assert_eq!(forward_plain(&m, &x).unwrap(), x);
    let spec = ModelSpec::new([1, 1, 1], vec![LayerSpec::activation("p")]).with_activation("p", PolyActivation::published_relu());
    let m = Model::with_generator(spec, |_, _| 0.0).unwrap();
    let x = TensorPlain::new(1, Shape::spatial(1, 1, 1), vec![0.0]).unwrap();
    assert_eq!(forward_plain(&m, &x).unwrap().data, vec![0.0]);
}

#[test]
fn weight_shapes_are_validated() {
    let spec = ModelSpec::new([4, 4, 1], vec![LayerSpec::conv_valid(2, 3)]);
    let err = Model::new(spec, vec![LayerParams { weights: vec![0.0; 17], bias: vec![0.0; 2] }]);
    assert!(matches!(err, Err(NnError::WeightShape { layer: 0, expected: 18, found: 17, .. })));
}

#[test]
fn linear_layers_are_linear_on_plain_path() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let spec = ModelSpec::new([6, 6, 2], vec![LayerSpec::conv_same(2, 3), LayerSpec::pool(2), LayerSpec::Dense { units: 3 }]);
    // Zero biases so the whole stack is linear.
    let m = Model::with_generator(spec.clone(), |_, _| 0.0).unwrap();
    let shapes = spec.parameter_shapes().unwrap();
    let params = shapes
        .iter()
        .map(|&(w, b)| LayerParams { weights: rand_vec(&mut rng, w, 1.0), bias: vec![0.0; b] })
        .collect();
    let m = Model::new(m.spec, params).unwrap();
    let a = rand_vec(&mut rng, 72, 1.0);
    let b = rand_vec(&mut rng, 72, 1.0);
    let run = |v: Vec<f64>| forward_plain(&m, &TensorPlain::new(1, Shape::spatial(6, 6, 2), v).unwrap()).unwrap().data;
    let fa = run(a.clone());
    let fb = run(b.clone());
    let fab = run(a.iter().zip(&b).map(|(x, y)| 2.0 * x + y).collect());
    for i in 0..3 {
        assert!((fab[i] - (2.0 * fa[i] + fb[i])).abs() < 1e-12);
    }
}

#[test]
fn logit_threshold_matches_sigmoid_threshold() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let spec = ModelSpec::new([4, 4, 1], vec![LayerSpec::Dense { units: 1 }, LayerSpec::Sigmoid]);
    let m = Model::with_generator(spec, |_, _| rng.random_range(-1.0..1.0)).unwrap();
    let imgs: Vec<Vec<f64>> = (0..200).map(|_| rand_vec(&mut rng, 16, 2.0)).collect();
    let x = TensorPlain::from_samples(Shape::spatial(4, 4, 1), &imgs).unwrap();
    let logits = forward_plain_logits(&m, &x).unwrap();
    let probs = forward_plain(&m, &x).unwrap();
    for (l, p) in logits.data.iter().zip(&probs.data) {
        assert_eq!(*l > 0.0, *p > 0.5);
    }
}

struct Keys {
    params: CkksParams,
    sk: SecretKey,
    pk: PublicKey,
    evk: EvaluationKey,
}

fn keys(noise: NoiseMode) -> Keys {
    let params = CkksParams::preset("test-n4096-d8").unwrap().with_noise(noise);
    let (sk, pk, evk) = keygen(&params, 77).unwrap();
    Keys { params, sk, pk, evk }
}

fn run_encrypted(k: &Keys, m: &Model, x: &TensorPlain) -> (TensorPlain, TensorEncrypted) {
    let ct = encrypt_tensor(&k.params, &k.pk, x, 9).unwrap();
    let ev = EncryptedEvaluator { params: &k.params, pk: &k.pk, evk: &k.evk, seed: 3 };
    let y = forward_encrypted(m, &ev, &ct).unwrap();
    (decrypt_tensor(&k.params, &k.sk, &y).unwrap(), y)
}

fn small_cnn(rng: &mut ChaCha8Rng) -> Model {
    let spec = ModelSpec::new(
        [6, 6, 2],
        vec![
            LayerSpec::pad(1),
            LayerSpec::conv_valid(2, 3),
            LayerSpec::activation("p"),
            LayerSpec::pool(2),
            LayerSpec::Dense { units: 2 },
            LayerSpec::Sigmoid,
        ],
    )
    .with_activation("p", PolyActivation::published_relu());
    Model::with_generator(spec, |_, _| rng.random_range(-0.5..0.5)).unwrap()
}

#[test]
fn encrypted_forward_matches_plain_and_keeps_ledger() {
    let k = keys(NoiseMode::Standard);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let m = small_cnn(&mut rng);
    let imgs: Vec<Vec<f64>> = (0..8).map(|_| rand_vec(&mut rng, 72, 1.0)).collect();
    let x = TensorPlain::from_samples(Shape::spatial(6, 6, 2), &imgs).unwrap();
    let (got, y) = run_encrypted(&k, &m, &x);
    let want = forward_plain_logits(&m, &x).unwrap();
    assert_eq!(got.shape, want.shape);
    let err = got.data.iter().zip(&want.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(err < 1e-2, "max error {err}");
    let (scale, level) = y.ledger().expect("uniform ledger");
    assert_eq!(scale, k.params.scale());
    assert_eq!(level, k.params.max_level() - m.spec.depth_cost().unwrap());

    // Each image alone in slot 0 gives the same logits as the packed batch.
    for (i, img) in imgs.iter().enumerate().take(2) {
        let xi = TensorPlain::from_samples(Shape::spatial(6, 6, 2), std::slice::from_ref(img)).unwrap();
        let (alone, _) = run_encrypted(&k, &m, &xi);
        for (a, b) in alone.data.iter().zip(got.sample(i)) {
            assert!((a - b).abs() < 1e-4);
        }
    }
}

#[test]
fn degenerate_mode_agrees_to_rounding() {
    let k = keys(NoiseMode::Degenerate);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let m = small_cnn(&mut rng);
    let imgs: Vec<Vec<f64>> = (0..4).map(|_| rand_vec(&mut rng, 72, 1.0)).collect();
    let x = TensorPlain::from_samples(Shape::spatial(6, 6, 2), &imgs).unwrap();
    let (got, _) = run_encrypted(&k, &m, &x);
    let want = forward_plain_logits(&m, &x).unwrap();
    let err = got.data.iter().zip(&want.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(err < 2f64.powi(-20), "max error {err}");
}

#[test]
fn depth_exhaustion_names_the_layer() {
    let k = keys(NoiseMode::Standard);
    let spec = ModelSpec::new(
        [2, 2, 1],
        vec![
            LayerSpec::activation("p"),
            LayerSpec::activation("p"),
            LayerSpec::activation("p"),
            LayerSpec::activation("p"),
            LayerSpec::Dense { units: 1 },
        ],
    )
    .with_activation("p", PolyActivation::published_relu());
    let m = Model::with_generator(spec, |_, _| 0.1).unwrap();
    let x = TensorPlain::new(1, Shape::spatial(2, 2, 1), vec![0.5; 4]).unwrap();
    let ct = encrypt_tensor(&k.params, &k.pk, &x, 1).unwrap();
    let ev = EncryptedEvaluator { params: &k.params, pk: &k.pk, evk: &k.evk, seed: 0 };
    let err = forward_encrypted(&m, &ev, &ct).unwrap_err();
    assert_eq!(err, NnError::DepthExhausted { layer: 4, needed: 1, available: 0 });
}

#[test]
fn batch_larger_than_slots_is_rejected() {
    let k = keys(NoiseMode::Standard);
    let x = TensorPlain::zeros(k.params.slot_count() + 1, Shape::spatial(1, 1, 1));
    assert!(matches!(encrypt_tensor(&k.params, &k.pk, &x, 0), Err(NnError::BatchTooLarge { .. })));
}
