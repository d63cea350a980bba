//! Negacyclic polynomial products in RNS form: NTT against schoolbook, and a
//! rescale that drops the top prime.

use hecnn::ckks::CkksParams;
use hecnn::ring::{MulStrategy, RingPoly};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let params = CkksParams::preset("toy-n16")?;
    let ring = params.ring();
    println!("degree {}, chain {:?}", ring.degree(), ring.chain());

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let level = ring.max_level();
    let a: Vec<i64> = (0..ring.degree()).map(|_| rng.random_range(-50..50)).collect();
    let b: Vec<i64> = (0..ring.degree()).map(|_| rng.random_range(-50..50)).collect();
    let pa = RingPoly::from_signed(ring, level, &a)?;
    let pb = RingPoly::from_signed(ring, level, &b)?;

    let fast = pa.mul_with(&pb, MulStrategy::Ntt)?;
    let slow = pa.mul_with(&pb, MulStrategy::Schoolbook)?;
    println!("NTT product equals schoolbook: {}", fast == slow);

    // x^n = -1: multiplying by x shifts and negates the wrapped coefficient.
    let x = RingPoly::monomial(ring, level, 1);
    let shifted = pa.mul(&x)?.to_coeff()?;
    let q0 = ring.moduli()[0];
    println!("a[n-1] = {}, (a*x)[0] = {}", a[ring.degree() - 1], q0.center(shifted.residues()[0][0]));

    let dropped = fast.rescale()?;
    println!("rescale: level {} -> {}", fast.level(), dropped.level());
    Ok(())
}
