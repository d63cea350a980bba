use hecnn::ckks::*;
use hecnn::ring::Representation;
use num_bigint::BigInt;
use num_traits::ToPrimitive;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn lift(s: &hecnn::ring::RingPoly, params: &CkksParams) -> hecnn::ring::RingPoly {
    let ring = params.key_ring();
    let c = s.to_centered_bigints().unwrap();
    hecnn::ring::RingPoly::from_bigints(ring, ring.max_level(), &c).unwrap().to_ntt().unwrap()
}

fn reference() -> CkksParams {
    CkksParams::preset("test-n4096-d4").unwrap()
}

fn random_vec(rng: &mut ChaCha8Rng, len: usize, bound: f64) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(-bound..bound)).collect()
}

fn enc(params: &CkksParams, pk: &PublicKey, v: &[f64], seed: u64) -> Ciphertext {
    let m = encode(params, &PlaintextVector::from_real(v), params.scale()).unwrap();
    encrypt(pk, &m, &EncryptionRandomness::sample(params, seed).unwrap()).unwrap()
}

fn dec(params: &CkksParams, sk: &SecretKey, ct: &Ciphertext) -> Vec<f64> {
    decode(params, &decrypt(sk, ct).unwrap()).unwrap().real_parts()
}

#[test]
fn public_key_residual_is_small() {
    let params = reference();
    let (sk, pk, _) = keygen(&params, 7).unwrap();
    let s = lift(sk.poly(), &params);
    let r = pk.b().add(&pk.a().mul(&s).unwrap()).unwrap().to_coeff().unwrap();
    let bound = (6.0 * params.sigma()).floor();
    for c in r.to_centered_bigints().unwrap() {
        assert!(c.to_f64().unwrap().abs() <= bound);
    }
}

#[test]
fn keygen_is_deterministic() {
    let params = CkksParams::preset("toy-n16").unwrap();
    let a = keygen(&params, 3).unwrap();
    let b = keygen(&params, 3).unwrap();
    assert_eq!(a, b);
    let c = keygen(&params, 4).unwrap();
    assert_ne!(a.0, c.0);
}

#[test]
fn degenerate_noise_public_key_is_exact() {
    let params = reference().with_noise(NoiseMode::Degenerate);
    let (sk, pk, evk) = keygen(&params, 1).unwrap();
    assert!(pk.b().add(&pk.a().mul(&lift(sk.poly(), &params)).unwrap()).unwrap().is_zero());
    let s = sk.poly().to_ntt().unwrap();
    // Pair (i, t) decrypts to s^2 * 2^(w t) modulo prime i and to zero
    // modulo every other prime.
    let s2 = s.mul(&s).unwrap().to_coeff().unwrap();
    let primes = params.ring().chain();
    let mut pairs = evk.pairs().iter();
    for (i, &q) in primes.iter().enumerate() {
        let digits = (64 - q.leading_zeros()).div_ceil(evk.base_bits());
        for t in 0..digits {
            let (b, a) = pairs.next().expect("pair for every digit");
            let lhs = b.add(&a.mul(&s).unwrap()).unwrap().to_coeff().unwrap();
            let g = (BigInt::from(1) << (evk.base_bits() * t) as usize) % BigInt::from(q);
            let g = u128::try_from(g).unwrap();
            for (j, row) in lhs.residues().iter().enumerate() {
                if j == i {
                    let want: Vec<u64> = s2.residues()[i].iter().map(|&x| (x as u128 * g % q as u128) as u64).collect();
                    assert_eq!(row, &want, "pair ({i}, {t})");
                } else {
                    assert!(row.iter().all(|&x| x == 0), "pair ({i}, {t}) row {j}");
                }
            }
        }
    }
    assert!(pairs.next().is_none());
}

#[test]
fn zero_randomness_gives_plaintext_pair() {
    let params = reference();
    let (sk, pk, _) = keygen(&params, 2).unwrap();
    let m = encode(&params, &PlaintextVector::from_real(&[1.5, -2.0, 3.25]), params.scale()).unwrap();
    let ct = encrypt(&pk, &m, &EncryptionRandomness::zero(&params)).unwrap();
    assert_eq!(ct.c0, m.poly);
    assert!(ct.c1.is_zero());
    assert_eq!(ct.level(), params.max_level());
    assert_eq!(decrypt(&sk, &ct).unwrap().poly, m.poly);
}

#[test]
fn encrypt_rejects_lower_level_plaintext() {
    let params = reference();
    let (_, pk, _) = keygen(&params, 2).unwrap();
    let m = encode_at_level(&params, &PlaintextVector::from_real(&[1.0]), params.scale(), 1).unwrap();
    let r = EncryptionRandomness::zero(&params);
    assert!(matches!(encrypt(&pk, &m, &r), Err(CkksError::PlaintextLevel { .. })));
}

#[test]
fn fresh_encryption_error_below_bound() {
    let params = reference();
    let (sk, pk, _) = keygen(&params, 11).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let bound = 2f64.powi(-25);
    let mut worst = 0.0f64;
    for trial in 0..20 {
        let v = random_vec(&mut rng, params.slot_count(), 10.0);
        let got = dec(&params, &sk, &enc(&params, &pk, &v, 100 + trial));
        worst = worst.max(max_abs_error(&got, &v));
    }
    let zero = vec![0.0; params.slot_count()];
    let got = dec(&params, &sk, &enc(&params, &pk, &zero, 1));
    worst = worst.max(got.iter().fold(0.0f64, |m, x| m.max(x.abs())));
    assert!(worst < bound, "worst {worst:e}");
}

#[test]
fn add_and_mul_match_plaintext() {
    let params = reference();
    let (sk, pk, evk) = keygen(&params, 12).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let p = random_vec(&mut rng, params.slot_count(), 4.0);
    let q = random_vec(&mut rng, params.slot_count(), 4.0);
    let (x, y) = (enc(&params, &pk, &p, 1), enc(&params, &pk, &q, 2));

    let s = he_add(&x, &y).unwrap();
    assert_eq!(s, he_add(&y, &x).unwrap());
    let got = dec(&params, &sk, &s);
    for i in 0..p.len() {
        assert!((got[i] - (p[i] + q[i])).abs() <= 1e-6 * (p[i] + q[i]).abs().max(1.0));
    }

    let prod = he_mul(&x, &y, &evk).unwrap();
    assert_eq!(prod.level(), x.level() - 1);
    let dropped = params.prime(x.level()) as f64;
    assert_eq!(prod.scale, x.scale * y.scale / dropped);
    let got = dec(&params, &sk, &prod);
    for i in 0..p.len() {
        let want = p[i] * q[i];
        assert!((got[i] - want).abs() <= 1e-6 * want.abs().max(1.0), "slot {i}: {} vs {want}", got[i]);
    }

    let d = dec(&params, &sk, &he_sub(&x, &y).unwrap());
    assert!(max_abs_error(&d, &p.iter().zip(&q).map(|(a, b)| a - b).collect::<Vec<_>>()) < 1e-6);
}

#[test]
fn multiply_by_encrypted_ones() {
    let params = reference();
    let (sk, pk, evk) = keygen(&params, 13).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let p = random_vec(&mut rng, params.slot_count(), 4.0);
    let x = enc(&params, &pk, &p, 1);
    let ones = enc(&params, &pk, &vec![1.0; params.slot_count()], 2);
    let got = dec(&params, &sk, &he_mul(&x, &ones, &evk).unwrap());
    assert!(max_abs_error(&got, &p) < 1e-6);
}

#[test]
fn plaintext_constant_multiplication() {
    let params = reference();
    let (sk, pk, _) = keygen(&params, 14).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let p = random_vec(&mut rng, params.slot_count(), 4.0);
    let x = enc(&params, &pk, &p, 1);
    let top = x.level();
    for c in [1.0, 0.25, 0.0] {
        let m = encode_constant(&params, c, params.prime(top) as f64, top).unwrap();
        let y = he_mul_plain(&x, &m).unwrap();
        assert_eq!(y.level(), top - 1);
        assert_eq!(y.scale, x.scale * params.prime(top) as f64 / params.prime(top) as f64);
        let want: Vec<f64> = p.iter().map(|v| v * c).collect();
        assert!(max_abs_error(&dec(&params, &sk, &y), &want) < 1e-6);
    }
    // Non-constant plaintext vector.
    let w = random_vec(&mut rng, params.slot_count(), 2.0);
    let m = encode_at_level(&params, &PlaintextVector::from_real(&w), params.scale(), top).unwrap();
    let y = he_mul_plain(&x, &m).unwrap();
    let want: Vec<f64> = p.iter().zip(&w).map(|(a, b)| a * b).collect();
    assert!(max_abs_error(&dec(&params, &sk, &y), &want) < 1e-6);
}

#[test]
fn rescale_and_mod_switch_bookkeeping() {
    let params = reference();
    let (sk, pk, _) = keygen(&params, 15).unwrap();
    let p = vec![0.5, -1.25, 3.0];
    let x = enc(&params, &pk, &p, 1);
    let r = rescale(&x).unwrap();
    assert_eq!(r.scale, x.scale / params.prime(x.level()) as f64);
    assert_eq!(r.level(), x.level() - 1);

    let low = mod_switch(&x, 1).unwrap();
    assert_eq!(low.scale, x.scale);
    assert_eq!(low.level(), 1);
    let a = dec(&params, &sk, &x);
    let b = dec(&params, &sk, &low);
    assert!(max_abs_error(&a, &b) < 2f64.powi(-25));
    assert!(mod_switch(&low, 2).is_err());
    assert!(matches!(rescale(&mod_switch(&x, 0).unwrap()), Err(CkksError::NoLevelLeft)));
}

#[test]
fn add_rejects_misaligned_operands() {
    let params = reference();
    let (_, pk, evk) = keygen(&params, 16).unwrap();
    let x = enc(&params, &pk, &[1.0], 1);
    let y = he_mul(&x, &x, &evk).unwrap();
    assert!(matches!(he_add(&x, &y), Err(CkksError::LevelMismatch { .. })));
    let mut z = mod_switch(&x, y.level()).unwrap();
    z.scale *= 1.5;
    assert!(matches!(he_add(&z, &y), Err(CkksError::ScaleMismatch { .. })));
}

#[test]
fn wrong_secret_key_gives_garbage() {
    let params = reference();
    let (_, pk, _) = keygen(&params, 17).unwrap();
    let (other, _, _) = keygen(&params, 18).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let p = random_vec(&mut rng, params.slot_count(), 1.0);
    let got = dec(&params, &other, &enc(&params, &pk, &p, 1));
    let close = got.iter().zip(&p).filter(|(a, b)| (*a - *b).abs() < 1.0).count();
    assert!(close < p.len() / 100, "{close} slots decrypted near the plaintext");
}

#[test]
fn multiplication_chain_respects_depth_budget() {
    let params = reference();
    let budget = depth_budget(&params);
    assert_eq!(budget, 4);
    let (sk, pk, evk) = keygen(&params, 19).unwrap();
    let v = [1.1, -0.9, 0.7];
    let mut x = enc(&params, &pk, &v, 1);
    for _ in 0..budget {
        x = he_square(&x, &evk).unwrap();
    }
    assert_eq!(x.level(), 0);
    let want: Vec<f64> = v.iter().map(|t| t.powi(1 << budget)).collect();
    assert!(max_abs_error(&dec(&params, &sk, &x)[..3], &want) < 1e-4);
    assert!(matches!(he_square(&x, &evk), Err(CkksError::NoLevelLeft)));
}

#[test]
fn degenerate_pipeline_is_exact_up_to_rounding() {
    let params = reference().with_noise(NoiseMode::Degenerate);
    let (sk, pk, evk) = keygen(&params, 20).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let p = random_vec(&mut rng, params.slot_count(), 3.0);
    let q = random_vec(&mut rng, params.slot_count(), 3.0);
    let x = enc(&params, &pk, &p, 1);
    let y = enc(&params, &pk, &q, 2);
    let z = linear_combination(&params, &[(&he_mul(&x, &y, &evk).unwrap(), 0.5)], 0.25).unwrap();
    let got = dec(&params, &sk, &z);
    let want: Vec<f64> = p.iter().zip(&q).map(|(a, b)| 0.5 * a * b + 0.25).collect();
    assert!(max_abs_error(&got, &want) < 2f64.powi(-20));
}

#[test]
fn linear_combination_matches_weighted_sum() {
    let params = reference();
    let (sk, pk, _) = keygen(&params, 21).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let vs: Vec<Vec<f64>> = (0..5).map(|_| random_vec(&mut rng, 64, 2.0)).collect();
    let ws = [0.3, -1.7, 0.0, 2.5, 1e-3];
    let cts: Vec<Ciphertext> = vs.iter().enumerate().map(|(i, v)| enc(&params, &pk, v, i as u64)).collect();
    let terms: Vec<(&Ciphertext, f64)> = cts.iter().zip(ws).collect();
    let z = linear_combination(&params, &terms, -0.5).unwrap();
    assert_eq!(z.scale, cts[0].scale);
    assert_eq!(z.level(), cts[0].level() - 1);
    let want: Vec<f64> = (0..64)
        .map(|j| vs.iter().zip(ws).map(|(v, w)| v[j] * w).sum::<f64>() - 0.5)
        .collect();
    assert!(max_abs_error(&dec(&params, &sk, &z)[..64], &want) < 1e-6);
    assert!(matches!(linear_combination(&params, &[], 0.0), Err(CkksError::EmptyCombination)));
}

#[test]
fn slots_are_independent() {
    let params = reference();
    let (sk, pk, evk) = keygen(&params, 22).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let v = random_vec(&mut rng, params.slot_count(), 2.0);
    let f = |x: f64| 0.5 * x * x - 0.25 * x + 1.0;
    let x = enc(&params, &pk, &v, 1);
    let sq = he_square(&x, &evk).unwrap();
    let lin = linear_combination(&params, &[(&x, -0.25)], 1.0).unwrap();
    let quad = linear_combination(&params, &[(&sq, 0.5)], 0.0).unwrap();
    let lin = mod_switch(&lin, quad.level()).unwrap();
    let mut lin = lin;
    lin.scale = quad.scale;
    let got = dec(&params, &sk, &he_add(&quad, &lin).unwrap());
    for (g, x) in got.iter().zip(&v) {
        assert!((g - f(*x)).abs() < 1e-5);
    }
}

#[test]
fn serialization_round_trips() {
    let params = reference();
    let (sk, pk, evk) = keygen(&params, 23).unwrap();
    let ct = enc(&params, &pk, &[1.0, 2.0], 1);
    let low = rescale(&ct).unwrap();
    assert_eq!(SecretKey::from_bytes(&params, &sk.to_bytes(&params)).unwrap(), sk);
    assert_eq!(PublicKey::from_bytes(&params, &pk.to_bytes(&params)).unwrap(), pk);
    assert_eq!(EvaluationKey::from_bytes(&params, &evk.to_bytes(&params)).unwrap(), evk);
    for c in [&ct, &low] {
        let bytes = c.to_bytes(&params);
        let back = Ciphertext::from_bytes(&params, &bytes).unwrap();
        assert_eq!(&back, c);
        assert_eq!(back.to_bytes(&params), bytes);
    }
    let bytes = ct.to_bytes(&params);
    assert!(Ciphertext::from_bytes(&params, &bytes[..bytes.len() - 1]).is_err());
    assert!(PublicKey::from_bytes(&params, &bytes).is_err());
    let other = CkksParams::preset("toy-n16").unwrap();
    assert!(Ciphertext::from_bytes(&other, &bytes).is_err());
    assert_eq!(&bytes[..4], b"CKKS");
    assert_eq!(ct.c0.representation(), Representation::Coefficient);
}
