//! Boolean circuits over abstract bits: fixed-point encoding, ripple-carry
//! arithmetic, evaluation and a level-by-level parallel schedule model.

mod fixed;
mod schedule;

use std::fmt::{self, Write as _};
use std::str::FromStr;

use thiserror::Error;

pub use fixed::{bit_string, from_bits, to_bits, FixedPointCodec};
pub use schedule::{batch_table, render_csv, render_text, schedule, speedup_table, GateCosts, ScheduleReport, SpeedupRow, SpeedupTable};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CircuitError {
    #[error("invalid fixed-point format: {bits} bits with {frac} fractional (need frac < bits <= 64)")]
    InvalidCodec { bits: u32, frac: u32 },
    #[error("{value} is not representable with {bits} bits and {frac} fractional bits")]
    Overflow { value: f64, bits: u32, frac: u32 },
    #[error("expected {expected} input bits, found {found}")]
    InputLength { expected: usize, found: usize },
    #[error("gate {gate} reads wire {wire}, which is not defined before it")]
    InvalidWire { gate: usize, wire: usize },
    #[error("output wire {0} does not exist")]
    InvalidOutput(usize),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("operand width must be at least 1")]
    ZeroWidth,
    #[error("worker count must be at least 1")]
    NoWorkers,
    #[error("gate costs must be positive and finite")]
    InvalidCost,
    #[error("unknown operation `{0}` (expected add or mul)")]
    UnknownOp(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum GateKind {
    Xor,
    And,
    Or,
    Not,
}

impl GateKind {
    pub const ALL: [GateKind; 4] = [GateKind::Xor, GateKind::And, GateKind::Or, GateKind::Not];

    pub fn arity(self) -> usize {
        match self {
            Self::Not => 1,
            _ => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Xor => "XOR",
            Self::And => "AND",
            Self::Or => "OR",
            Self::Not => "NOT",
        }
    }
}

impl fmt::Display for GateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GateKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown gate kind `{s}`"))
    }
}

/// A gate reading one or two wires. For `Not`, `b` equals `a`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Gate {
    pub kind: GateKind,
    pub a: usize,
    pub b: usize,
}

/// Wires `0..inputs` are the inputs; gate `g` writes wire `inputs + g`.
/// Gates only read earlier wires, so the gate list is a topological order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Circuit {
    inputs: usize,
    gates: Vec<Gate>,
    outputs: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct GateCounts {
    pub xor: usize,
    pub and: usize,
    pub or: usize,
    pub not: usize,
}

impl GateCounts {
    pub fn total(&self) -> usize {
        self.xor + self.and + self.or + self.not
    }
}

impl Circuit {
    pub fn new(inputs: usize, gates: Vec<Gate>, outputs: Vec<usize>) -> Result<Self, CircuitError> {
        for (g, gate) in gates.iter().enumerate() {
            for wire in [gate.a, gate.b] {
                if wire >= inputs + g {
                    return Err(CircuitError::InvalidWire { gate: g, wire });
                }
            }
        }
        if let Some(&o) = outputs.iter().find(|&&o| o >= inputs + gates.len()) {
            return Err(CircuitError::InvalidOutput(o));
        }
        Ok(Self { inputs, gates, outputs })
    }

    pub fn input_count(&self) -> usize {
        self.inputs
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    pub fn outputs(&self) -> &[usize] {
        &self.outputs
    }

    pub fn wire_count(&self) -> usize {
        self.inputs + self.gates.len()
    }

    pub fn gate_counts(&self) -> GateCounts {
        let mut c = GateCounts::default();
        for g in &self.gates {
            match g.kind {
                GateKind::Xor => c.xor += 1,
                GateKind::And => c.and += 1,
                GateKind::Or => c.or += 1,
                GateKind::Not => c.not += 1,
            }
        }
        c
    }

    /// Level of every gate: inputs sit at level 0, a gate one above its
    /// deepest input.
    pub fn gate_levels(&self) -> Vec<usize> {
        let mut wire_level = vec![0usize; self.wire_count()];
        let mut out = Vec::with_capacity(self.gates.len());
        for (g, gate) in self.gates.iter().enumerate() {
            let l = 1 + wire_level[gate.a].max(wire_level[gate.b]);
            wire_level[self.inputs + g] = l;
            out.push(l);
        }
        out
    }

    pub fn depth(&self) -> usize {
        self.gate_levels().into_iter().max().unwrap_or(0)
    }

    /// `copies` disjoint instances side by side; inputs and outputs are
    /// concatenated instance by instance.
    pub fn batch(&self, copies: usize) -> Self {
        let mut b = Builder::new(self.inputs * copies);
        let mut outputs = Vec::with_capacity(self.outputs.len() * copies);
        for i in 0..copies {
            let inputs: Vec<usize> = (i * self.inputs..(i + 1) * self.inputs).collect();
            outputs.extend(b.embed(self, &inputs));
        }
        b.finish(outputs)
    }

    /// One gate per line, `id KIND in [in]`, after `inputs` and `outputs`
    /// header lines. Gate ids are wire ids.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "inputs {}", self.inputs).unwrap();
        write!(s, "outputs").unwrap();
        for o in &self.outputs {
            write!(s, " {o}").unwrap();
        }
        s.push('\n');
        for (g, gate) in self.gates.iter().enumerate() {
            match gate.kind {
                GateKind::Not => writeln!(s, "{} {} {}", self.inputs + g, gate.kind, gate.a),
                kind => writeln!(s, "{} {} {} {}", self.inputs + g, kind, gate.a, gate.b),
            }
            .unwrap();
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self, CircuitError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'));
        let err = |line: usize, message: String| CircuitError::Parse { line: line + 1, message };
        let num = |line: usize, tok: &str| tok.parse::<usize>().map_err(|_| err(line, format!("bad number `{tok}`")));

        let (ln, first) = lines.next().ok_or_else(|| err(0, "empty circuit".into()))?;
        let inputs = match first.split_whitespace().collect::<Vec<_>>().as_slice() {
            ["inputs", n] => num(ln, n)?,
            _ => return Err(err(ln, "expected `inputs N`".into())),
        };
        let (ln, second) = lines.next().ok_or_else(|| err(ln + 1, "missing outputs line".into()))?;
        let mut toks = second.split_whitespace();
        if toks.next() != Some("outputs") {
            return Err(err(ln, "expected `outputs ...`".into()));
        }
        let outputs = toks.map(|t| num(ln, t)).collect::<Result<Vec<_>, _>>()?;

        let mut gates = Vec::new();
        for (ln, line) in lines {
            let toks: Vec<&str> = line.split_whitespace().collect();
            let (id, kind) = match toks.as_slice() {
                [id, kind, ..] => (num(ln, id)?, kind.parse::<GateKind>().map_err(|m| err(ln, m))?),
                _ => return Err(err(ln, "expected `id KIND inputs`".into())),
            };
            if id != inputs + gates.len() {
                return Err(err(ln, format!("gate id {id} out of order, expected {}", inputs + gates.len())));
            }
            if toks.len() != 2 + kind.arity() {
                return Err(err(ln, format!("{kind} takes {} inputs", kind.arity())));
            }
            let a = num(ln, toks[2])?;
            let b = if kind.arity() == 2 { num(ln, toks[3])? } else { a };
            gates.push(Gate { kind, a, b });
        }
        Self::new(inputs, gates, outputs)
    }
}

/// Incremental circuit construction.
pub struct Builder {
    inputs: usize,
    gates: Vec<Gate>,
}

impl Builder {
    pub fn new(inputs: usize) -> Self {
        Self { inputs, gates: Vec::new() }
    }

    fn push(&mut self, kind: GateKind, a: usize, b: usize) -> usize {
        self.gates.push(Gate { kind, a, b });
        self.inputs + self.gates.len() - 1
    }

    pub fn xor(&mut self, a: usize, b: usize) -> usize {
        self.push(GateKind::Xor, a, b)
    }

    pub fn and(&mut self, a: usize, b: usize) -> usize {
        self.push(GateKind::And, a, b)
    }

    pub fn or(&mut self, a: usize, b: usize) -> usize {
        self.push(GateKind::Or, a, b)
    }

    pub fn not(&mut self, a: usize) -> usize {
        self.push(GateKind::Not, a, a)
    }

    /// Returns `(sum, carry)`.
    pub fn half_adder(&mut self, a: usize, b: usize) -> (usize, usize) {
        (self.xor(a, b), self.and(a, b))
    }

    /// Two XOR, two AND and one OR; returns `(sum, carry)`.
    pub fn full_adder(&mut self, a: usize, b: usize, c: usize) -> (usize, usize) {
        let p = self.xor(a, b);
        let g = self.and(a, b);
        let s = self.xor(p, c);
        let t = self.and(p, c);
        (s, self.or(g, t))
    }

    /// Ripple-carry sum of equal-width operands; `width + 1` output wires.
    pub fn ripple_add(&mut self, a: &[usize], b: &[usize]) -> Vec<usize> {
        assert_eq!(a.len(), b.len());
        let mut out = Vec::with_capacity(a.len() + 1);
        let (s, mut carry) = self.half_adder(a[0], b[0]);
        out.push(s);
        for i in 1..a.len() {
            let (s, c) = self.full_adder(a[i], b[i], carry);
            out.push(s);
            carry = c;
        }
        out.push(carry);
        out
    }

    /// Copies `c`'s gates with its inputs mapped onto `inputs`; returns the
    /// wires of its outputs.
    pub fn embed(&mut self, c: &Circuit, inputs: &[usize]) -> Vec<usize> {
        let mut map: Vec<usize> = inputs.to_vec();
        map.reserve(c.gates.len());
        for g in &c.gates {
            let w = self.push(g.kind, map[g.a], map[g.b]);
            map.push(w);
        }
        c.outputs.iter().map(|&o| map[o]).collect()
    }

    pub fn finish(self, outputs: Vec<usize>) -> Circuit {
        Circuit::new(self.inputs, self.gates, outputs).expect("builder only references existing wires")
    }
}

/// `k`-bit ripple-carry adder. Inputs are `a` then `b`, LSB first; outputs
/// are the `k + 1` sum bits. Uses `5k - 3` gates.
pub fn build_adder(k: usize) -> Result<Circuit, CircuitError> {
    if k == 0 {
        return Err(CircuitError::ZeroWidth);
    }
    let mut b = Builder::new(2 * k);
    let a: Vec<usize> = (0..k).collect();
    let y: Vec<usize> = (k..2 * k).collect();
    let out = b.ripple_add(&a, &y);
    Ok(b.finish(out))
}

/// Unsigned shift-and-add multiplier: `k^2` AND partial products summed by
/// `k - 1` ripple adders. Outputs the full `2k`-bit product (one bit for
/// `k = 1`).
pub fn build_multiplier(k: usize) -> Result<Circuit, CircuitError> {
    if k == 0 {
        return Err(CircuitError::ZeroWidth);
    }
    let mut b = Builder::new(2 * k);
    let pp: Vec<Vec<usize>> = (0..k).map(|i| (0..k).map(|j| b.and(j, k + i)).collect()).collect();
    if k == 1 {
        return Ok(b.finish(vec![pp[0][0]]));
    }
    let mut out = vec![pp[0][0]];
    // Running sum of the bits above the last emitted product bit.
    let mut acc: Vec<usize> = pp[0][1..].to_vec();
    for row in &pp[1..] {
        let mut sum = Vec::with_capacity(k + 1);
        let (s, mut carry) = b.half_adder(acc[0], row[0]);
        sum.push(s);
        for j in 1..k {
            let (s, c) = match acc.get(j) {
                Some(&x) => b.full_adder(x, row[j], carry),
                None => b.half_adder(row[j], carry),
            };
            sum.push(s);
            carry = c;
        }
        sum.push(carry);
        out.push(sum[0]);
        acc = sum[1..].to_vec();
    }
    out.extend(acc);
    Ok(b.finish(out))
}

/// Gate count of [`build_multiplier`].
pub fn multiplier_gate_count(k: usize) -> usize {
    match k {
        0 => 0,
        1 => 1,
        _ => k * k + (5 * k - 6) + (k - 2) * (5 * k - 3),
    }
}

/// Primitive bit operations; plain booleans here, an encrypted-bit scheme
/// would implement the same trait.
pub trait BitBackend {
    type Bit: Clone;
    fn xor(&self, a: &Self::Bit, b: &Self::Bit) -> Self::Bit;
    fn and(&self, a: &Self::Bit, b: &Self::Bit) -> Self::Bit;
    fn or(&self, a: &Self::Bit, b: &Self::Bit) -> Self::Bit;
    fn not(&self, a: &Self::Bit) -> Self::Bit;
}

pub struct PlainBits;

impl BitBackend for PlainBits {
    type Bit = bool;

    fn xor(&self, a: &bool, b: &bool) -> bool {
        a ^ b
    }

    fn and(&self, a: &bool, b: &bool) -> bool {
        a & b
    }

    fn or(&self, a: &bool, b: &bool) -> bool {
        a | b
    }

    fn not(&self, a: &bool) -> bool {
        !a
    }
}

pub fn evaluate_with<B: BitBackend>(c: &Circuit, backend: &B, inputs: &[B::Bit]) -> Result<Vec<B::Bit>, CircuitError> {
    if inputs.len() != c.inputs {
        return Err(CircuitError::InputLength {
            expected: c.inputs,
            found: inputs.len(),
        });
    }
    let mut wires: Vec<B::Bit> = Vec::with_capacity(c.wire_count());
    wires.extend_from_slice(inputs);
    for g in &c.gates {
        let (a, b) = (&wires[g.a], &wires[g.b]);
        let v = match g.kind {
            GateKind::Xor => backend.xor(a, b),
            GateKind::And => backend.and(a, b),
            GateKind::Or => backend.or(a, b),
            GateKind::Not => backend.not(a),
        };
        wires.push(v);
    }
    Ok(c.outputs.iter().map(|&o| wires[o].clone()).collect())
}

pub fn evaluate(c: &Circuit, inputs: &[bool]) -> Result<Vec<bool>, CircuitError> {
    evaluate_with(c, &PlainBits, inputs)
}

/// Arithmetic operation a circuit implements.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    Add,
    Mul,
}

impl Op {
    pub fn build(self, k: usize) -> Result<Circuit, CircuitError> {
        match self {
            Self::Add => build_adder(k),
            Self::Mul => build_multiplier(k),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Add => "add",
            Self::Mul => "mul",
        }
    }

    /// Integer result as produced by the circuit's outputs.
    pub fn reference(self, a: u128, b: u128) -> u128 {
        match self {
            Self::Add => a + b,
            Self::Mul => a * b,
        }
    }
}

impl FromStr for Op {
    type Err = CircuitError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "add" => Ok(Self::Add),
            "mul" => Ok(Self::Mul),
            other => Err(CircuitError::UnknownOp(other.to_string())),
        }
    }
}

/// Checks `op` on every pair of `k`-bit operands; returns the first failing
/// pair.
pub fn exhaustive_check(op: Op, k: usize) -> Result<Option<(u128, u128)>, CircuitError> {
    let c = op.build(k)?;
    for a in 0..1u128 << k {
        for b in 0..1u128 << k {
            let mut inputs = to_bits(a, k);
            inputs.extend(to_bits(b, k));
            if from_bits(&evaluate(&c, &inputs)?) != op.reference(a, b) {
                return Ok(Some((a, b)));
            }
        }
    }
    Ok(None)
}
