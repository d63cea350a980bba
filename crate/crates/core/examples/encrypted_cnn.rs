//! Run a small CNN over a batch of encrypted images and compare the logits
//! with the plaintext forward pass.

use std::time::Instant;

use hecnn::activation::PolyActivation;
use hecnn::ckks::{keygen, CkksParams};
use hecnn::model_io::{gen_synthetic, SyntheticSpec};
use hecnn::nn::{
    decrypt_tensor, encrypt_tensor, forward_encrypted_timed, forward_plain_logits, EncryptedEvaluator, LayerSpec, Model, ModelSpec,
    Preprocessing,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut spec = ModelSpec::new(
        [8, 8, 3],
        vec![
            LayerSpec::pool(2),
            LayerSpec::conv_same(4, 3),
            LayerSpec::activation("relu_poly"),
            LayerSpec::Dense { units: 1 },
            LayerSpec::Sigmoid,
        ],
    )
    .with_activation("relu_poly", PolyActivation::published_relu());
    spec.preprocessing = Preprocessing::unit_range(3);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let model = Model::with_generator(spec, |_, _| rng.random_range(-0.5..0.5))?;
    println!("model depth {}", model.spec.depth_cost()?);

    let data = gen_synthetic(&SyntheticSpec {
        height: 8,
        width: 8,
        ..SyntheticSpec::with_samples(16, 6)
    })?;
    let x = data.to_tensor(0..data.len(), &model.spec.preprocessing)?;

    let params = CkksParams::preset("test-n4096-d8")?;
    let (sk, pk, evk) = keygen(&params, 7)?;
    let t = Instant::now();
    let ct = encrypt_tensor(&params, &pk, &x, 8)?;
    println!("encrypted {} images into {} ciphertexts in {:.2?}", x.batch, ct.data.len(), t.elapsed());

    let ev = EncryptedEvaluator {
        params: &params,
        pk: &pk,
        evk: &evk,
        seed: 9,
    };
    let (out, times) = forward_encrypted_timed(&model, &ev, &ct)?;
    for (layer, t) in model.spec.layers.iter().zip(&times) {
        println!("  {:<11} {t:.2?}", layer.kind_name());
    }
    let enc = decrypt_tensor(&params, &sk, &out)?;
    let plain = forward_plain_logits(&model, &x)?;
    for i in 0..x.batch {
        let (a, b) = (plain.sample(i)[0], enc.sample(i)[0]);
        println!("image {i:>2} label {} plain {a:+.6} encrypted {b:+.6}", data.labels[i]);
    }
    Ok(())
}
