//! Encrypt two vectors, add and multiply them under encryption, and compare
//! with plaintext arithmetic.

use hecnn::ckks::{
    decode, decrypt, encode, encrypt, he_add, he_mul, keygen, max_abs_error, Ciphertext, CkksParams, EncryptionRandomness,
    PlaintextVector,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let params = CkksParams::preset("test-n4096-d4")?;
    let (sk, pk, evk) = keygen(&params, 1)?;
    let slots = params.slot_count();
    println!("N = {}, {slots} slots, {} levels, scale 2^{}", params.degree(), params.max_level(), params.scale().log2());

    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let p: Vec<f64> = (0..slots).map(|_| rng.random_range(-1.0..1.0)).collect();
    let q: Vec<f64> = (0..slots).map(|_| rng.random_range(-1.0..1.0)).collect();
    let enc = |v: &[f64], seed| -> Result<_, Box<dyn std::error::Error>> {
        let m = encode(&params, &PlaintextVector::from_real(v), params.scale())?;
        Ok(encrypt(&pk, &m, &EncryptionRandomness::sample(&params, seed)?)?)
    };
    let (cp, cq) = (enc(&p, 10)?, enc(&q, 11)?);
    let dec = |ct: &Ciphertext| -> Result<Vec<f64>, Box<dyn std::error::Error>> {
        let mut v = decode(&params, &decrypt(&sk, ct)?)?.real_parts();
        v.truncate(slots);
        Ok(v)
    };

    println!("decrypt(encrypt(p)) error   {:.3e}", max_abs_error(&dec(&cp)?, &p));
    let sum: Vec<f64> = p.iter().zip(&q).map(|(a, b)| a + b).collect();
    println!("p + q error                 {:.3e}", max_abs_error(&dec(&he_add(&cp, &cq)?)?, &sum));
    let prod: Vec<f64> = p.iter().zip(&q).map(|(a, b)| a * b).collect();
    let cprod = he_mul(&cp, &cq, &evk)?;
    println!("p * q error                 {:.3e} (level {} -> {})", max_abs_error(&dec(&cprod)?, &prod), cp.level(), cprod.level());
    Ok(())
}
