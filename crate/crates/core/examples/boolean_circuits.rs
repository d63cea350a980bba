//! Adder and multiplier circuits: gate counts, a fixed-point sum and the
//! parallel schedule of a batch.

use hecnn::circuit::{batch_table, build_adder, evaluate, exhaustive_check, render_text, FixedPointCodec, GateCosts, Op};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for k in [4, 8, 16, 32] {
        let add = Op::Add.build(k)?;
        let mul = Op::Mul.build(k)?;
        println!("k={k:>2}: adder {:>4} gates depth {:>3}, multiplier {:>5} gates depth {:>3}", add.gates().len(), add.depth(), mul.gates().len(), mul.depth());
    }
    println!("4-bit exhaustive check: add {:?}, mul {:?}", exhaustive_check(Op::Add, 4)?, exhaustive_check(Op::Mul, 4)?);

    let codec = FixedPointCodec::new(16, 6)?;
    let adder = build_adder(16)?;
    let (a, b) = (-12.328125, 40.5);
    let mut bits = codec.encode(a)?;
    bits.extend(codec.encode(b)?);
    let sum = codec.decode(&evaluate(&adder, &bits)?[..16])?;
    println!("{a} + {b} = {sum} through the 16-bit adder");

    let tables = [
        batch_table(Op::Add, 8, 64, &[1, 10, 20, 40], &GateCosts::default())?,
        batch_table(Op::Mul, 8, 64, &[1, 10, 20, 40], &GateCosts::default())?,
    ];
    print!("{}", render_text(&tables));
    Ok(())
}
