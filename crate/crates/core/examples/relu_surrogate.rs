//! Fit polynomial ReLU surrogates of a few degrees and evaluate the degree-2
//! one on a ciphertext.

use hecnn::activation::{published_interval, Activation, PolyActivation};
use hecnn::ckks::{decode, decrypt, encode, encrypt, keygen, max_abs_error, CkksParams, EncryptionRandomness, PlaintextVector};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let bound = published_interval();
    println!("fit interval [-{bound:.3}, {bound:.3}]");
    for degree in [2, 3, 4, 6] {
        let p = PolyActivation::fit(Activation::Relu, degree, bound)?;
        let worst = (0..=1000)
            .map(|i| -bound + 2.0 * bound * i as f64 / 1000.0)
            .map(|x| (p.eval_plain(x) - x.max(0.0)).abs())
            .fold(0.0, f64::max);
        println!("degree {degree}: depth {}, max error {worst:8.2}, coefficients {:?}", p.depth(), p.coefficients);
    }
    let published = PolyActivation::published_relu();
    println!("published: {:?}", published.coefficients);

    let params = CkksParams::preset("test-n4096-d4")?;
    let (sk, pk, evk) = keygen(&params, 3)?;
    let xs: Vec<f64> = (0..params.slot_count()).map(|i| -bound + 2.0 * bound * i as f64 / params.slot_count() as f64).collect();
    // Scale inputs down so the encrypted values stay small relative to the modulus.
    let scaled = PolyActivation::new(
        published.coefficients.iter().enumerate().map(|(k, c)| c * bound.powi(k as i32) / bound).collect(),
        1.0,
        "relu",
    )?;
    let unit: Vec<f64> = xs.iter().map(|x| x / bound).collect();
    let m = encode(&params, &PlaintextVector::from_real(&unit), params.scale())?;
    let ct = encrypt(&pk, &m, &EncryptionRandomness::sample(&params, 4)?)?;
    let out = scaled.eval_encrypted(&params, &ct, &evk)?;
    let got: Vec<f64> = decode(&params, &decrypt(&sk, &out)?)?.real_parts().iter().map(|v| v * bound).collect();
    let want = published.eval_slice(&xs);
    println!("encrypted surrogate on {} points: max error {:.3e}, levels used {}", xs.len(), max_abs_error(&got, &want), ct.level() - out.level());
    Ok(())
}
