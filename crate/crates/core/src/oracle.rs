//! One-shot frequency oracles: generalized randomized response (GRR),
//! symmetric and optimized unary encoding (SUE, OUE) and the adaptive
//! GRR/OUE choice.
//!
//! Every oracle is described by a pair `(p, q)`: the probability of reporting
//! the true value (or keeping a set bit) and the probability of reporting one
//! specific other value (or raising an unset bit). The server side inverts the
//! channel with the unbiased estimator `(N_i - n q) / (n (p - q))`.

use rand::distr::{Bernoulli, Distribution};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_domain, ensure_epsilon, LdpError, Result};

/// Largest domain accepted by the dense unary representation.
pub const MAX_DOMAIN: usize = 1 << 20;

/// A categorical attribute with `size` values indexed `0..size`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AttributeDomain(usize);

impl AttributeDomain {
    pub fn new(size: usize) -> Result<Self> {
        ensure_domain(size)?;
        Ok(Self(size))
    }

    pub fn size(self) -> usize {
        self.0
    }

    pub fn contains(self, v: usize) -> bool {
        v < self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OracleKind {
    Grr { domain: usize },
    Sue,
    Oue,
}

impl OracleKind {
    pub fn is_unary(self) -> bool {
        !matches!(self, OracleKind::Grr { .. })
    }

    pub fn name(self) -> &'static str {
        match self {
            OracleKind::Grr { .. } => "GRR",
            OracleKind::Sue => "SUE",
            OracleKind::Oue => "OUE",
        }
    }
}

/// Perturbation probabilities of a one-round oracle together with the budget
/// they realize.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OneRoundParams {
    pub p: f64,
    pub q: f64,
    pub epsilon: f64,
    pub kind: OracleKind,
}

impl OneRoundParams {
    pub fn domain(&self) -> Option<usize> {
        match self.kind {
            OracleKind::Grr { domain } => Some(domain),
            _ => None,
        }
    }
}

pub fn grr_params(epsilon: f64, c: usize) -> Result<OneRoundParams> {
    ensure_epsilon(epsilon)?;
    ensure_domain(c)?;
    let e = epsilon.exp();
    let p = e / (e + (c - 1) as f64);
    let q = (1.0 - p) / (c - 1) as f64;
    Ok(OneRoundParams {
        p,
        q,
        epsilon,
        kind: OracleKind::Grr { domain: c },
    })
}

pub fn sue_params(epsilon: f64) -> Result<OneRoundParams> {
    ensure_epsilon(epsilon)?;
    let e = (epsilon / 2.0).exp();
    let p = e / (e + 1.0);
    Ok(OneRoundParams {
        p,
        q: 1.0 - p,
        epsilon,
        kind: OracleKind::Sue,
    })
}

pub fn oue_params(epsilon: f64) -> Result<OneRoundParams> {
    ensure_epsilon(epsilon)?;
    Ok(OneRoundParams {
        p: 0.5,
        q: 1.0 / (epsilon.exp() + 1.0),
        epsilon,
        kind: OracleKind::Oue,
    })
}

/// Budget realized by a unary-encoding channel with bit probabilities `(p, q)`.
pub fn ue_epsilon(p: f64, q: f64) -> Result<f64> {
    if !(0.0 < q && q < p && p < 1.0) {
        return Err(LdpError::InvalidParameter(format!(
            "unary encoding requires 0 < q < p < 1, got p={p}, q={q}"
        )));
    }
    Ok((p * (1.0 - q) / ((1.0 - p) * q)).ln())
}

/// Dense bit vector produced by unary encoding.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct UnaryVector {
    bits: Vec<bool>,
}

impl UnaryVector {
    pub fn zeros(len: usize) -> Self {
        Self {
            bits: vec![false; len],
        }
    }

    pub fn from_bits(bits: Vec<bool>) -> Self {
        Self { bits }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn get(&self, i: usize) -> bool {
        self.bits[i]
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Indices of set bits.
    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
    }
}

pub fn ue_encode(v: usize, c: usize) -> Result<UnaryVector> {
    ensure_domain(c)?;
    if v >= c {
        return Err(LdpError::InvalidInput(format!(
            "value index {v} outside domain of size {c}"
        )));
    }
    let mut out = UnaryVector::zeros(c);
    out.bits[v] = true;
    Ok(out)
}

/// Report `v` with probability `p`, otherwise a uniformly chosen other value.
pub fn grr_perturb<R: Rng + ?Sized>(v: usize, params: &OneRoundParams, rng: &mut R) -> Result<usize> {
    let c = params.domain().ok_or_else(|| {
        LdpError::InvalidParameter(format!("{} parameters cannot drive GRR", params.kind.name()))
    })?;
    if v >= c {
        return Err(LdpError::InvalidInput(format!(
            "value index {v} outside domain of size {c}"
        )));
    }
    Ok(grr_draw(v, c, params.p, rng))
}

pub(crate) fn grr_draw<R: Rng + ?Sized>(v: usize, c: usize, p: f64, rng: &mut R) -> usize {
    if rng.random::<f64>() < p {
        v
    } else {
        let k = rng.random_range(0..c - 1);
        if k >= v {
            k + 1
        } else {
            k
        }
    }
}

fn ensure_probability(name: &str, x: f64) -> Result<()> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(LdpError::InvalidParameter(format!(
            "{name} must lie in [0, 1], got {x}"
        )))
    }
}

/// Flip each bit independently: a set bit stays set with probability `p`, an
/// unset bit becomes set with probability `q`.
pub fn ue_perturb<R: Rng + ?Sized>(b: &UnaryVector, p: f64, q: f64, rng: &mut R) -> Result<UnaryVector> {
    ensure_probability("p", p)?;
    ensure_probability("q", q)?;
    Ok(ue_flip(b, p, q, rng))
}

/// Callers guarantee `p, q` in `[0, 1]`.
pub(crate) fn ue_flip<R: Rng + ?Sized>(b: &UnaryVector, p: f64, q: f64, rng: &mut R) -> UnaryVector {
    let keep = Bernoulli::new(p).expect("validated probability");
    let raise = Bernoulli::new(q).expect("validated probability");
    let bits = b
        .bits
        .iter()
        .map(|&bit| if bit { keep.sample(rng) } else { raise.sample(rng) })
        .collect();
    UnaryVector { bits }
}

/// Anything that can serve as an observed (or expected) count.
pub trait Count: Copy {
    fn to_f64(self) -> f64;
}

impl Count for u32 {
    fn to_f64(self) -> f64 {
        f64::from(self)
    }
}

impl Count for u64 {
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Count for usize {
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Count for f64 {
    fn to_f64(self) -> f64 {
        self
    }
}

/// Per-value estimates of one attribute.
///
/// The raw estimates are unbiased and may fall outside `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyEstimate {
    pub freqs: Vec<f64>,
    pub n: u64,
    pub analytic_var: Vec<f64>,
}

impl FrequencyEstimate {
    /// Clip to `[0, 1]` and rescale to sum 1. Falls back to the uniform
    /// distribution when every estimate clips to zero.
    pub fn clip_and_normalize(&self) -> Vec<f64> {
        let clipped: Vec<f64> = self.freqs.iter().map(|f| f.clamp(0.0, 1.0)).collect();
        let total: f64 = clipped.iter().sum();
        if total > 0.0 {
            clipped.into_iter().map(|f| f / total).collect()
        } else {
            vec![1.0 / clipped.len() as f64; clipped.len()]
        }
    }
}

pub(crate) fn ensure_reports(n: u64) -> Result<()> {
    if n == 0 {
        Err(LdpError::EmptyInput("no reports to estimate from"))
    } else {
        Ok(())
    }
}

/// Unbiased estimator `(N_i - n q) / (n (p - q))`.
pub fn estimate_freq<C: Count>(counts: &[C], n: u64, params: &OneRoundParams) -> Result<FrequencyEstimate> {
    ensure_reports(n)?;
    if let Some(c) = params.domain() {
        if counts.len() != c {
            return Err(LdpError::ShapeMismatch(format!(
                "expected {c} counts for GRR, got {}",
                counts.len()
            )));
        }
    }
    if counts.is_empty() {
        return Err(LdpError::EmptyInput("no count positions"));
    }
    let (p, q) = (params.p, params.q);
    if p == q {
        return Err(LdpError::DegenerateParameters("p equals q".into()));
    }
    let nf = n as f64;
    let freqs = counts
        .iter()
        .map(|&count| (count.to_f64() - nf * q) / (nf * (p - q)))
        .collect();
    let var = variance_approx(params, n);
    Ok(FrequencyEstimate {
        freqs,
        n,
        analytic_var: vec![var; counts.len()],
    })
}

/// Variance of the unbiased estimator at a value with true frequency `f`.
pub fn variance_exact(params: &OneRoundParams, n: u64, f: f64) -> f64 {
    let (p, q, nf) = (params.p, params.q, n as f64);
    q * (1.0 - q) / (nf * (p - q).powi(2)) + f * (1.0 - p - q) / (nf * (p - q))
}

/// Variance approximation at `f = 0`.
pub fn variance_approx(params: &OneRoundParams, n: u64) -> f64 {
    variance_exact(params, n, 0.0)
}

pub fn grr_variance_closed(epsilon: f64, c: usize, n: u64) -> f64 {
    let e = epsilon.exp();
    (e + c as f64 - 2.0) / (n as f64 * (e - 1.0).powi(2))
}

pub fn sue_variance_closed(epsilon: f64, n: u64) -> f64 {
    let e = (epsilon / 2.0).exp();
    e / (n as f64 * (e - 1.0).powi(2))
}

pub fn oue_variance_closed(epsilon: f64, n: u64) -> f64 {
    let e = epsilon.exp();
    4.0 * e / (n as f64 * (e - 1.0).powi(2))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AdpChoice {
    Grr,
    Oue,
}

/// GRR iff `c < 3 e^eps + 2`; the boundary goes to OUE.
pub fn adp_choose(epsilon: f64, c: usize) -> Result<AdpChoice> {
    ensure_epsilon(epsilon)?;
    ensure_domain(c)?;
    if (c as f64) < 3.0 * epsilon.exp() + 2.0 {
        Ok(AdpChoice::Grr)
    } else {
        Ok(AdpChoice::Oue)
    }
}

/// Parameters of the oracle picked by [`adp_choose`].
pub fn adp_params(epsilon: f64, c: usize) -> Result<OneRoundParams> {
    match adp_choose(epsilon, c)? {
        AdpChoice::Grr => grr_params(epsilon, c),
        AdpChoice::Oue => oue_params(epsilon),
    }
}
