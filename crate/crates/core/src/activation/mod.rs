//! Polynomial surrogates for activation functions.
//!
//! A surrogate is built by L2-projecting the activation's derivative onto
//! low-degree polynomials over `[-B, B]` and integrating the projection with
//! the integration constant fixed to zero.

pub mod quadrature;

use std::collections::BTreeMap;
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ckks::{he_mul, mod_switch, weighted_sum, Ciphertext, CkksError, CkksParams, EvaluationKey};
use quadrature::CompositeRule;

/// Quadratic coefficient of the published degree-2 ReLU surrogate.
pub const PUBLISHED_QUADRATIC: f64 = 0.000469841857369822;
/// Linear coefficient of the published degree-2 ReLU surrogate.
pub const PUBLISHED_LINEAR: f64 = 0.500000000000008;

/// Half-width `B` for which the degree-1 step fit integrates to the published
/// quadratic coefficient: `3 / (8 B) = a`.
pub fn published_interval() -> f64 {
    3.0 / (8.0 * PUBLISHED_QUADRATIC)
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ActivationError {
    #[error("fit interval must have positive finite half-width, got {0}")]
    DegenerateInterval(f64),
    #[error("surrogate degree must be at least 1, got {0}")]
    InvalidDegree(usize),
    #[error("quadrature grid of {grid} panels is below the minimum {min}")]
    GridTooSmall { grid: usize, min: usize },
    #[error("unknown activation `{0}`")]
    UnknownActivation(String),
    #[error("coefficients must be finite")]
    NonFinite,
    #[error("surrogate needs {needed} levels, {available} available")]
    InsufficientDepth { needed: usize, available: usize },
    #[error("surrogate manifest: {0}")]
    Manifest(String),
    #[error(transparent)]
    Ckks(#[from] CkksError),
}

/// Function whose L2 projection is computed.
#[derive(Debug, Clone, PartialEq)]
pub enum DerivativeTarget {
    /// Heaviside step, the derivative of ReLU (value 1/2 at 0).
    Step,
    /// `sigma(x) * (1 - sigma(x))`.
    SigmoidDerivative,
    /// `1 - tanh(x)^2`.
    TanhDerivative,
    /// Ascending power-basis coefficients.
    Polynomial(Vec<f64>),
}

impl DerivativeTarget {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Self::Step => {
                if x > 0.0 {
                    1.0
                } else if x < 0.0 {
                    0.0
                } else {
                    0.5
                }
            }
            Self::SigmoidDerivative => {
                let s = sigmoid(x);
                s * (1.0 - s)
            }
            Self::TanhDerivative => {
                let t = x.tanh();
                1.0 - t * t
            }
            Self::Polynomial(c) => horner(c, x),
        }
    }
}

/// Activation names accepted by the fitter, mapped to their derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
    Tanh,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Self::Relu => "relu",
            Self::Sigmoid => "sigmoid",
            Self::Tanh => "tanh",
        }
    }

    pub fn derivative(self) -> DerivativeTarget {
        match self {
            Self::Relu => DerivativeTarget::Step,
            Self::Sigmoid => DerivativeTarget::SigmoidDerivative,
            Self::Tanh => DerivativeTarget::TanhDerivative,
        }
    }

    pub fn eval(self, x: f64) -> f64 {
        match self {
            Self::Relu => x.max(0.0),
            Self::Sigmoid => sigmoid(x),
            Self::Tanh => x.tanh(),
        }
    }
}

impl FromStr for Activation {
    type Err = ActivationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "relu" => Ok(Self::Relu),
            "sigmoid" => Ok(Self::Sigmoid),
            "tanh" => Ok(Self::Tanh),
            other => Err(ActivationError::UnknownActivation(other.to_string())),
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Derivative fit request. `grid` is the number of uniform quadrature panels
/// over `[-B, B]`; odd counts are bumped to the next even number so that 0 is
/// always a panel edge.
#[derive(Debug, Clone, PartialEq)]
pub struct FitSpec {
    pub target: DerivativeTarget,
    pub bound: f64,
    pub degree: usize,
    pub grid: usize,
}

impl FitSpec {
    pub fn new(target: DerivativeTarget, bound: f64, degree: usize) -> Self {
        Self {
            target,
            bound,
            degree,
            grid: Self::min_grid(degree).max(64),
        }
    }

    pub fn min_grid(degree: usize) -> usize {
        10 * (degree + 1)
    }

    fn validate(&self) -> Result<(), ActivationError> {
        if !(self.bound > 0.0) || !self.bound.is_finite() {
            return Err(ActivationError::DegenerateInterval(self.bound));
        }
        let min = Self::min_grid(self.degree);
        if self.grid < min {
            return Err(ActivationError::GridTooSmall { grid: self.grid, min });
        }
        Ok(())
    }

    /// Quadrature rule over `[-B, B]` exact for polynomials of degree `2d + 3`.
    pub fn rule(&self) -> CompositeRule {
        let panels = self.grid + self.grid % 2;
        CompositeRule::new(-self.bound, self.bound, panels, self.degree + 2)
    }
}

/// Power-basis coefficients of `P_k(t)` for `k = 0..=degree`.
fn legendre_monomials(degree: usize) -> Vec<Vec<f64>> {
    let mut rows: Vec<Vec<f64>> = vec![vec![1.0]];
    if degree >= 1 {
        rows.push(vec![0.0, 1.0]);
    }
    for k in 2..=degree {
        let kf = k as f64;
        let mut next = vec![0.0; k + 1];
        for (j, c) in rows[k - 1].iter().enumerate() {
            next[j + 1] += (2.0 * kf - 1.0) / kf * c;
        }
        for (j, c) in rows[k - 2].iter().enumerate() {
            next[j] -= (kf - 1.0) / kf * c;
        }
        rows.push(next);
    }
    rows
}

fn legendre_values(degree: usize, t: f64) -> Vec<f64> {
    let mut p = Vec::with_capacity(degree + 1);
    p.push(1.0);
    if degree >= 1 {
        p.push(t);
    }
    for k in 2..=degree {
        let kf = k as f64;
        p.push(((2.0 * kf - 1.0) * t * p[k - 1] - (kf - 1.0) * p[k - 2]) / kf);
    }
    p
}

/// L2 projection of the target onto degree-`d` polynomials over `[-B, B]`,
/// returned as ascending power-basis coefficients in `x`.
///
/// The projection is computed in the Legendre basis of `t = x / B`, where the
/// Gram matrix is diagonal.
pub fn fit_derivative(spec: &FitSpec) -> Result<Vec<f64>, ActivationError> {
    spec.validate()?;
    let rule = spec.rule();
    let d = spec.degree;
    let b = spec.bound;
    let mut proj = vec![0.0; d + 1];
    for (&x, &w) in rule.nodes.iter().zip(&rule.weights) {
        let fx = spec.target.eval(x);
        for (acc, pk) in proj.iter_mut().zip(legendre_values(d, x / b)) {
            *acc += w * fx * pk;
        }
    }
    // <P_k(x/B), P_k(x/B)> over [-B, B] is 2B / (2k + 1).
    for (k, a) in proj.iter_mut().enumerate() {
        *a *= (2 * k + 1) as f64 / (2.0 * b);
    }
    let mono = legendre_monomials(d);
    let mut coeffs = vec![0.0; d + 1];
    for (k, a) in proj.iter().enumerate() {
        for (j, m) in mono[k].iter().enumerate() {
            coeffs[j] += a * m;
        }
    }
    for (j, c) in coeffs.iter_mut().enumerate() {
        *c /= b.powi(j as i32);
    }
    Ok(coeffs)
}

/// Quadrature L2 error `int (f - p)^2` over the spec's grid.
pub fn fit_error(spec: &FitSpec, coeffs: &[f64]) -> f64 {
    spec.rule().integrate(|x| {
        let r = spec.target.eval(x) - horner(coeffs, x);
        r * r
    })
}

fn to_rational(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite coefficient")
}

/// Exact antiderivative with zero constant term.
pub fn integrate_exact(c: &[BigRational]) -> Vec<BigRational> {
    let mut out = Vec::with_capacity(c.len() + 1);
    out.push(BigRational::zero());
    for (k, ck) in c.iter().enumerate() {
        out.push(ck / BigRational::from_integer(BigInt::from(k + 1)));
    }
    out
}

/// Exact derivative.
pub fn differentiate_exact(c: &[BigRational]) -> Vec<BigRational> {
    c.iter()
        .enumerate()
        .skip(1)
        .map(|(k, ck)| ck * BigRational::from_integer(BigInt::from(k)))
        .collect()
}

/// Antiderivative with zero constant term, computed in exact rationals and
/// rounded once to the nearest float.
pub fn integrate_coefficients(c: &[f64]) -> Vec<f64> {
    let exact: Vec<BigRational> = c.iter().map(|&x| to_rational(x)).collect();
    integrate_exact(&exact)
        .iter()
        .map(|r| r.to_f64().expect("representable"))
        .collect()
}

/// Derivative, rounded once from exact rationals.
pub fn differentiate_coefficients(c: &[f64]) -> Vec<f64> {
    let exact: Vec<BigRational> = c.iter().map(|&x| to_rational(x)).collect();
    differentiate_exact(&exact)
        .iter()
        .map(|r| r.to_f64().expect("representable"))
        .collect()
}

pub fn horner(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &ck| acc * x + ck)
}

/// A polynomial activation surrogate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyActivation {
    /// Ascending-degree coefficients `c_0..c_d`.
    pub coefficients: Vec<f64>,
    /// Half-width `B` of the fit interval `[-B, B]`.
    pub interval: f64,
    pub source: String,
}

impl PolyActivation {
    pub fn new(coefficients: Vec<f64>, interval: f64, source: impl Into<String>) -> Result<Self, ActivationError> {
        if coefficients.iter().any(|c| !c.is_finite()) || !interval.is_finite() {
            return Err(ActivationError::NonFinite);
        }
        let p = Self {
            coefficients,
            interval,
            source: source.into(),
        };
        if p.degree() < 1 {
            return Err(ActivationError::InvalidDegree(p.degree()));
        }
        Ok(p)
    }

    /// The published degree-2 ReLU surrogate `0.000469841857369822 x^2 + 0.500000000000008 x`.
    pub fn published_relu() -> Self {
        Self {
            coefficients: vec![0.0, PUBLISHED_LINEAR, PUBLISHED_QUADRATIC],
            interval: published_interval(),
            source: "relu".into(),
        }
    }

    /// Fits `activation`'s derivative at `degree - 1` and integrates.
    pub fn fit(activation: Activation, degree: usize, bound: f64) -> Result<Self, ActivationError> {
        if degree < 1 {
            return Err(ActivationError::InvalidDegree(degree));
        }
        let spec = FitSpec::new(activation.derivative(), bound, degree - 1);
        let d = fit_derivative(&spec)?;
        Self::new(integrate_coefficients(&d), bound, activation.name())
    }

    /// Index of the highest nonzero coefficient.
    pub fn degree(&self) -> usize {
        self.coefficients.iter().rposition(|&c| c != 0.0).unwrap_or(0)
    }

    pub fn eval_plain(&self, x: f64) -> f64 {
        horner(&self.coefficients, x)
    }

    pub fn eval_slice(&self, xs: &[f64]) -> Vec<f64> {
        xs.iter().map(|&x| self.eval_plain(x)).collect()
    }

    /// Levels consumed by [`eval_encrypted`](Self::eval_encrypted): `ceil(log2 d) + 1`.
    pub fn depth(&self) -> usize {
        ceil_log2(self.degree()) + 1
    }

    /// Evaluates the surrogate on every slot of `x`.
    ///
    /// Powers `x^2..x^d` are built by repeated squaring and products of
    /// already-computed powers, aligned to one level, then combined with a
    /// single weighted sum. The result keeps `x`'s scale.
    pub fn eval_encrypted(
        &self,
        params: &CkksParams,
        x: &Ciphertext,
        evk: &EvaluationKey,
    ) -> Result<Ciphertext, ActivationError> {
        let d = self.degree();
        let needed = self.depth();
        if x.level() < needed {
            return Err(ActivationError::InsufficientDepth {
                needed,
                available: x.level(),
            });
        }
        let powers = power_table(x, d, evk)?;
        let combine_level = x.level() + 1 - needed;
        let mut aligned = Vec::with_capacity(d);
        for p in &powers {
            aligned.push(mod_switch(p, combine_level)?);
        }
        let terms: Vec<(&Ciphertext, f64)> = aligned
            .iter()
            .zip(&self.coefficients[1..=d])
            .filter(|(_, &c)| c != 0.0)
            .map(|(ct, &c)| (ct, c))
            .collect();
        let terms = if terms.is_empty() {
            vec![(&aligned[0], 0.0)]
        } else {
            terms
        };
        Ok(weighted_sum(params, &terms, self.coefficients[0], x.scale)?)
    }
}

fn ceil_log2(d: usize) -> usize {
    if d <= 1 {
        0
    } else {
        (usize::BITS - (d - 1).leading_zeros()) as usize
    }
}

/// `[x, x^2, ..., x^d]`, each at depth `ceil(log2 k)` below `x`.
fn power_table(x: &Ciphertext, d: usize, evk: &EvaluationKey) -> Result<Vec<Ciphertext>, CkksError> {
    let mut powers: Vec<Ciphertext> = vec![x.clone()];
    for k in 2..=d {
        let high = 1usize << (usize::BITS - 1 - (k - 1).leading_zeros());
        let (a, b) = (high, k - high);
        let p = if a == b {
            he_mul(&powers[a - 1], &powers[a - 1], evk)?
        } else {
            let pa = &powers[a - 1];
            let pb = &powers[b - 1];
            let level = pa.level().min(pb.level());
            he_mul(&mod_switch(pa, level)?, &mod_switch(pb, level)?, evk)?
        };
        powers.push(p);
    }
    Ok(powers)
}

pub const SURROGATE_SCHEMA: u32 = 1;

/// Named surrogates in the JSON text format read by model manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateManifest {
    pub schema: u32,
    pub surrogates: BTreeMap<String, PolyActivation>,
}

impl SurrogateManifest {
    pub fn new(surrogates: BTreeMap<String, PolyActivation>) -> Self {
        Self {
            schema: SURROGATE_SCHEMA,
            surrogates,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, ActivationError> {
        let m: Self = serde_json::from_str(text).map_err(|e| ActivationError::Manifest(e.to_string()))?;
        if m.schema != SURROGATE_SCHEMA {
            return Err(ActivationError::Manifest(format!("unsupported schema {}", m.schema)));
        }
        for p in m.surrogates.values() {
            PolyActivation::new(p.coefficients.clone(), p.interval, p.source.clone())?;
        }
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn step_fit_matches_closed_form() {
        for b in [1.0, 3.0, 17.5, published_interval()] {
            let c = fit_derivative(&FitSpec::new(DerivativeTarget::Step, b, 1)).unwrap();
            assert!((c[0] - 0.5).abs() < 1e-14);
            assert!((c[1] - 3.0 / (4.0 * b)).abs() < 1e-14 / b);
        }
    }

    #[test]
    fn step_fit_closed_form_matches_brute_force_quadrature() {
        // Independent midpoint-rule normal equations for degree 1.
        let b = 2.0;
        let n = 200_000;
        let h = 2.0 * b / n as f64;
        let (mut s0, mut s1, mut s2, mut f0, mut f1) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for i in 0..n {
            let x = -b + (i as f64 + 0.5) * h;
            let f = if x > 0.0 { 1.0 } else { 0.0 };
            s0 += h;
            s1 += h * x;
            s2 += h * x * x;
            f0 += h * f;
            f1 += h * f * x;
        }
        let det = s0 * s2 - s1 * s1;
        let c0 = (f0 * s2 - f1 * s1) / det;
        let c1 = (s0 * f1 - s1 * f0) / det;
        assert!((c0 - 0.5).abs() < 1e-8);
        assert!((c1 - 3.0 / (4.0 * b)).abs() < 1e-8);
    }

    #[test]
    fn polynomial_targets_are_recovered() {
        let target = vec![0.3, -1.2, 0.05, 0.7];
        for degree in 3..6 {
            let c = fit_derivative(&FitSpec::new(DerivativeTarget::Polynomial(target.clone()), 2.5, degree)).unwrap();
            for (k, ck) in c.iter().enumerate() {
                let want = target.get(k).copied().unwrap_or(0.0);
                assert!((ck - want).abs() < 1e-10, "degree {degree} k {k}: {ck} vs {want}");
            }
        }
        for degree in 0..6 {
            let c = fit_derivative(&FitSpec::new(DerivativeTarget::Polynomial(vec![1.0]), 9.0, degree)).unwrap();
            assert!((c[0] - 1.0).abs() < 1e-12);
            assert!(c[1..].iter().all(|x| x.abs() < 1e-12));
        }
    }

    #[test]
    fn fit_rejects_bad_specs() {
        let mut spec = FitSpec::new(DerivativeTarget::Step, 0.0, 1);
        assert!(matches!(fit_derivative(&spec), Err(ActivationError::DegenerateInterval(_))));
        spec.bound = 1.0;
        spec.grid = 19;
        assert!(matches!(fit_derivative(&spec), Err(ActivationError::GridTooSmall { .. })));
        assert!(matches!(
            PolyActivation::fit(Activation::Relu, 0, 1.0),
            Err(ActivationError::InvalidDegree(0))
        ));
        assert!("gelu".parse::<Activation>().is_err());
    }

    #[test]
    fn published_polynomial_is_reproduced() {
        let p = PolyActivation::fit(Activation::Relu, 2, published_interval()).unwrap();
        assert_eq!(p.coefficients[0], 0.0);
        assert!((p.coefficients[1] - 0.5).abs() < 1e-9);
        assert!((p.coefficients[2] - PUBLISHED_QUADRATIC).abs() < 1e-12);
        assert!((published_interval() - 798.14).abs() < 0.01);
    }

    #[test]
    fn integrate_examples() {
        let b = 5.0;
        let c = integrate_coefficients(&[0.5, 3.0 / (4.0 * b)]);
        assert_eq!(c, vec![0.0, 0.5, 3.0 / (8.0 * b)]);
        assert_eq!(integrate_coefficients(&[2.5]), vec![0.0, 2.5]);
        assert_eq!(differentiate_coefficients(&c), vec![0.5, 3.0 / (4.0 * b)]);
    }

    #[test]
    fn published_polynomial_values() {
        let p = PolyActivation::published_relu();
        assert_eq!(p.eval_plain(0.0), 0.0);
        assert!((p.eval_plain(1.0) - (PUBLISHED_LINEAR + PUBLISHED_QUADRATIC)).abs() < 1e-15);
        assert!((p.eval_plain(1.0) - 0.500469841857).abs() < 1e-12);
        for x in [0.5, 3.0, 40.0, 700.0] {
            let even_l = p.eval_plain(x) - PUBLISHED_LINEAR * x;
            let even_r = p.eval_plain(-x) + PUBLISHED_LINEAR * x;
            assert!((even_l - even_r).abs() < 1e-12 * x * x);
        }
        assert_eq!(p.degree(), 2);
        assert_eq!(p.depth(), 2);
    }

    #[test]
    fn depth_formula() {
        for (d, depth) in [(1, 1), (2, 2), (3, 3), (4, 3), (5, 4), (8, 4), (9, 5)] {
            let mut c = vec![0.0; d + 1];
            c[d] = 1.0;
            assert_eq!(PolyActivation::new(c, 1.0, "x").unwrap().depth(), depth);
        }
    }

    #[test]
    fn manifest_round_trip() {
        let mut m = BTreeMap::new();
        m.insert("poly-relu".to_string(), PolyActivation::published_relu());
        m.insert("sig3".to_string(), PolyActivation::fit(Activation::Sigmoid, 3, 6.0).unwrap());
        let manifest = SurrogateManifest::new(m);
        let text = manifest.to_json();
        assert_eq!(SurrogateManifest::from_json(&text).unwrap(), manifest);
        assert!(text.contains("0.000469841857369822"));
        assert!(SurrogateManifest::from_json("{\"schema\": 9, \"surrogates\": {}}").is_err());
    }

    proptest! {
        #[test]
        fn derivative_of_integral_is_exact(c in proptest::collection::vec(-1e6f64..1e6, 1..8)) {
            let exact: Vec<BigRational> = c.iter().map(|&x| to_rational(x)).collect();
            prop_assert_eq!(differentiate_exact(&integrate_exact(&exact)), exact);
        }

        #[test]
        fn projection_is_optimal(b in 0.5f64..50.0, degree in 1usize..4, which in 0usize..4, sign in prop::bool::ANY) {
            let which = which % (degree + 1);
            for target in [DerivativeTarget::Step, DerivativeTarget::SigmoidDerivative] {
                let spec = FitSpec::new(target, b, degree);
                let c = fit_derivative(&spec).unwrap();
                let base = fit_error(&spec, &c);
                let mut moved = c.clone();
                moved[which] += if sign { 1e-3 } else { -1e-3 };
                prop_assert!(fit_error(&spec, &moved) > base);
            }
        }
    }
}
