//! Memoization-based longitudinal protocols.
//!
//! A user randomizes their value once (round one, budget `eps_inf`) and keeps
//! that output forever; every later report re-randomizes the memoized output
//! (round two) so that a single report only leaks `eps_1`.

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{grr_channel, ue_bits_channel, ChannelMatrix};
use crate::error::{ensure_domain, ensure_epsilon, LdpError, Result};
use crate::oracle::{
    ensure_reports, grr_draw, grr_params, oue_params, sue_params, ue_encode, ue_flip, Count,
    FrequencyEstimate,
};
use crate::report::Report;

/// Largest L-GRR domain for which the composed channel is enumerated.
pub const MAX_GRR_ENUMERATION: usize = 1 << 12;

/// Largest domain for which [`two_round_channel`] builds the whole matrix.
pub const MAX_FULL_GRR_CHANNEL: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetPair {
    pub eps_inf: f64,
    pub eps_1: f64,
}

impl BudgetPair {
    pub fn new(eps_inf: f64, eps_1: f64) -> Result<Self> {
        ensure_epsilon(eps_inf)?;
        ensure_epsilon(eps_1)?;
        if eps_1 >= eps_inf {
            return Err(LdpError::InvalidParameter(format!(
                "single-report budget {eps_1} must be below the lifetime budget {eps_inf}"
            )));
        }
        Ok(Self { eps_inf, eps_1 })
    }
}

/// Protocol family, independent of any domain size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LongitudinalProtocol {
    LGrr,
    LSue,
    LOue,
    LOsue,
    LSoue,
}

impl LongitudinalProtocol {
    pub const ALL: [LongitudinalProtocol; 5] = [
        LongitudinalProtocol::LGrr,
        LongitudinalProtocol::LSue,
        LongitudinalProtocol::LOue,
        LongitudinalProtocol::LOsue,
        LongitudinalProtocol::LSoue,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LongitudinalProtocol::LGrr => "L-GRR",
            LongitudinalProtocol::LSue => "L-SUE",
            LongitudinalProtocol::LOue => "L-OUE",
            LongitudinalProtocol::LOsue => "L-OSUE",
            LongitudinalProtocol::LSoue => "L-SOUE",
        }
    }

    pub fn is_unary(self) -> bool {
        self != LongitudinalProtocol::LGrr
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TwoRoundKind {
    LGrr { domain: usize },
    LSue,
    LOue,
    LOsue,
    LSoue,
}

impl TwoRoundKind {
    pub fn protocol(self) -> LongitudinalProtocol {
        match self {
            TwoRoundKind::LGrr { .. } => LongitudinalProtocol::LGrr,
            TwoRoundKind::LSue => LongitudinalProtocol::LSue,
            TwoRoundKind::LOue => LongitudinalProtocol::LOue,
            TwoRoundKind::LOsue => LongitudinalProtocol::LOsue,
            TwoRoundKind::LSoue => LongitudinalProtocol::LSoue,
        }
    }

    pub fn name(self) -> &'static str {
        self.protocol().name()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoRoundParams {
    pub p1: f64,
    pub q1: f64,
    pub p2: f64,
    pub q2: f64,
    pub eps_inf: f64,
    pub eps_1: f64,
    pub kind: TwoRoundKind,
}

pub fn lgrr_params(eps_inf: f64, eps_1: f64, c: usize) -> Result<TwoRoundParams> {
    BudgetPair::new(eps_inf, eps_1)?;
    ensure_domain(c)?;
    let first = grr_params(eps_inf, c)?;
    let (e_inf, e_1, cf) = (eps_inf.exp(), eps_1.exp(), c as f64);
    let e_both = (eps_1 + eps_inf).exp();
    let p2 = (e_both - 1.0) / (-cf * e_1 + (cf - 1.0) * e_inf + e_1 + e_both - 1.0);
    let q2 = (1.0 - p2) / (cf - 1.0);
    if !(p2 > 0.0 && p2 < 1.0) {
        return Err(LdpError::Infeasible {
            protocol: "L-GRR",
            reason: format!("p2 = {p2} lies outside (0, 1)"),
        });
    }
    if p2 <= q2 {
        return Err(LdpError::Infeasible {
            protocol: "L-GRR",
            reason: format!("p2 = {p2} does not exceed q2 = {q2}"),
        });
    }
    Ok(TwoRoundParams {
        p1: first.p,
        q1: first.q,
        p2,
        q2,
        eps_inf,
        eps_1,
        kind: TwoRoundKind::LGrr { domain: c },
    })
}

/// Budget of one unary report after both rounds, from the per-bit chain
/// `ps = p1 p2 + (1-p1) q2`, `qs = q1 p2 + (1-q1) q2`.
pub fn ue_chain_epsilon(p1: f64, q1: f64, p2: f64, q2: f64) -> f64 {
    let ps = p1 * p2 + (1.0 - p1) * q2;
    let qs = q1 * p2 + (1.0 - q1) * q2;
    (ps * (1.0 - qs) / ((1.0 - ps) * qs)).ln()
}

/// Symmetric second round (`q2 = 1 - p2`) hitting `eps_1` after a first
/// round `(p1, q1)`.
///
/// With `a = 2p1-1`, `b = 2q1-1`, `K = e^eps_1` and `x = 2p2-1` the chain
/// condition is the quadratic `(1-K) + (a-b)(1+K) x - ab(1-K) x^2 = 0`; the
/// root is taken in the cancellation-free form `-2C / (B + sqrt(B^2 - 4AC))`.
pub fn symmetric_second_round(p1: f64, q1: f64, eps_1: f64) -> Result<f64> {
    let (a, b, k) = (2.0 * p1 - 1.0, 2.0 * q1 - 1.0, eps_1.exp());
    let qa = -a * b * (1.0 - k);
    let qb = (a - b) * (1.0 + k);
    let qc = 1.0 - k;
    let disc = qb * qb - 4.0 * qa * qc;
    let x = -2.0 * qc / (qb + disc.max(0.0).sqrt());
    if !(x > 0.0 && x < 1.0) {
        return Err(LdpError::Infeasible {
            protocol: "symmetric second round",
            reason: format!("2 p2 - 1 = {x} lies outside (0, 1)"),
        });
    }
    Ok((1.0 + x) / 2.0)
}

const BISECT_LO: f64 = 1e-12;
const BISECT_HI: f64 = 0.5 - 1e-12;
const BISECT_TOL: f64 = 1e-12;
const BISECT_MAX_ITER: usize = 200;

/// `q2` for a second round with `p2 = 1/2`. The chain budget falls
/// monotonically from its `q2 -> 0` supremum to 0 at `q2 = 1/2`, so a target
/// at or above the supremum has no solution.
fn half_second_round(p1: f64, q1: f64, eps_1: f64, protocol: &'static str) -> Result<f64> {
    let chain = |q2: f64| ue_chain_epsilon(p1, q1, 0.5, q2);
    let sup = ue_chain_epsilon(p1, q1, 0.5, 0.0);
    if eps_1 >= sup || chain(BISECT_LO) < eps_1 {
        return Err(LdpError::Infeasible {
            protocol,
            reason: format!(
                "eps_1 = {eps_1} is not below the largest reachable single-report budget {sup}"
            ),
        });
    }
    let (mut lo, mut hi) = (BISECT_LO, BISECT_HI);
    let mut mid = 0.5 * (lo + hi);
    for _ in 0..BISECT_MAX_ITER {
        mid = 0.5 * (lo + hi);
        let r = chain(mid) - eps_1;
        if r.abs() <= BISECT_TOL {
            break;
        }
        if r > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(mid)
}

/// Parameters of the unary two-round protocols. First letter of the suffix
/// is the first round (S = SUE, O = OUE), the second is the second round;
/// L-SUE and L-OUE use the same oracle twice.
pub fn lue_params(eps_inf: f64, eps_1: f64, protocol: LongitudinalProtocol) -> Result<TwoRoundParams> {
    BudgetPair::new(eps_inf, eps_1)?;
    let (first, kind) = match protocol {
        LongitudinalProtocol::LSue => (sue_params(eps_inf)?, TwoRoundKind::LSue),
        LongitudinalProtocol::LSoue => (sue_params(eps_inf)?, TwoRoundKind::LSoue),
        LongitudinalProtocol::LOue => (oue_params(eps_inf)?, TwoRoundKind::LOue),
        LongitudinalProtocol::LOsue => (oue_params(eps_inf)?, TwoRoundKind::LOsue),
        LongitudinalProtocol::LGrr => {
            return Err(LdpError::InvalidParameter(
                "L-GRR needs a domain size; use lgrr_params".into(),
            ))
        }
    };
    let (p1, q1) = (first.p, first.q);
    let (p2, q2) = match protocol {
        LongitudinalProtocol::LOsue => {
            let (e_inf, e_1) = (eps_inf.exp(), eps_1.exp());
            let e_both = (eps_1 + eps_inf).exp();
            let p2 = (1.0 - e_both) / (e_1 - e_inf - e_both + 1.0);
            (p2, 1.0 - p2)
        }
        LongitudinalProtocol::LSue => {
            let p2 = symmetric_second_round(p1, q1, eps_1)?;
            (p2, 1.0 - p2)
        }
        _ => (0.5, half_second_round(p1, q1, eps_1, protocol.name())?),
    };
    if !(q2 > 0.0 && q2 < p2 && p2 < 1.0) {
        return Err(LdpError::Infeasible {
            protocol: protocol.name(),
            reason: format!("second round p2 = {p2}, q2 = {q2} violates 0 < q2 < p2 < 1"),
        });
    }
    Ok(TwoRoundParams {
        p1,
        q1,
        p2,
        q2,
        eps_inf,
        eps_1,
        kind,
    })
}

/// Dispatch on the protocol family; `c` is only consulted by L-GRR.
pub fn longitudinal_params(
    protocol: LongitudinalProtocol,
    eps_inf: f64,
    eps_1: f64,
    c: usize,
) -> Result<TwoRoundParams> {
    match protocol {
        LongitudinalProtocol::LGrr => lgrr_params(eps_inf, eps_1, c),
        other => lue_params(eps_inf, eps_1, other),
    }
}

/// Permanent first-round output of one user for one attribute.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoState {
    pub memoized_report: Report,
    pub attribute_index: usize,
    domain: usize,
}

impl MemoState {
    pub fn domain(&self) -> usize {
        self.domain
    }
}

fn check_value(v: usize, c: usize, params: &TwoRoundParams) -> Result<()> {
    ensure_domain(c)?;
    if let TwoRoundKind::LGrr { domain } = params.kind {
        if domain != c {
            return Err(LdpError::ShapeMismatch(format!(
                "L-GRR parameters were solved for c = {domain}, not {c}"
            )));
        }
    }
    if v >= c {
        return Err(LdpError::InvalidInput(format!(
            "value index {v} outside domain of size {c}"
        )));
    }
    Ok(())
}

pub fn memoize<R: Rng + ?Sized>(v: usize, c: usize, params: &TwoRoundParams, rng: &mut R) -> Result<MemoState> {
    memoize_attribute(0, v, c, params, rng)
}

pub fn memoize_attribute<R: Rng + ?Sized>(
    attribute_index: usize,
    v: usize,
    c: usize,
    params: &TwoRoundParams,
    rng: &mut R,
) -> Result<MemoState> {
    check_value(v, c, params)?;
    let memoized_report = match params.kind {
        TwoRoundKind::LGrr { .. } => Report::Value(grr_draw(v, c, params.p1, rng)),
        _ => Report::Unary(ue_flip(&ue_encode(v, c)?, params.p1, params.q1, rng)),
    };
    Ok(MemoState {
        memoized_report,
        attribute_index,
        domain: c,
    })
}

/// Second-round sanitization of the memoized output. The true value is not
/// an input, so repeated reports cannot be averaged back to it.
pub fn report<R: Rng + ?Sized>(memo: &MemoState, params: &TwoRoundParams, rng: &mut R) -> Result<Report> {
    match (&memo.memoized_report, params.kind) {
        (Report::Value(x), TwoRoundKind::LGrr { domain }) if domain == memo.domain => {
            Ok(Report::Value(grr_draw(*x, domain, params.p2, rng)))
        }
        (Report::Unary(b), kind) if !matches!(kind, TwoRoundKind::LGrr { .. }) => {
            Ok(Report::Unary(ue_flip(b, params.p2, params.q2, rng)))
        }
        (memo_report, kind) => Err(LdpError::Decode(format!(
            "memoized {} report cannot be re-sanitized with {} parameters",
            memo_report.kind_name(),
            kind.name()
        ))),
    }
}

/// Client-side store of memoized states keyed by `(user, attribute)`.
#[derive(Debug, Default, Clone)]
pub struct MemoStore {
    states: HashMap<(u64, usize), MemoState>,
}

impl MemoStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Create the permanent memo; a second call for the same key is refused.
    pub fn memoize<R: Rng + ?Sized>(
        &mut self,
        user: u64,
        attribute: usize,
        v: usize,
        c: usize,
        params: &TwoRoundParams,
        rng: &mut R,
    ) -> Result<&MemoState> {
        use std::collections::hash_map::Entry;
        match self.states.entry((user, attribute)) {
            Entry::Occupied(_) => Err(LdpError::AlreadyMemoized { user, attribute }),
            Entry::Vacant(slot) => Ok(slot.insert(memoize_attribute(attribute, v, c, params, rng)?)),
        }
    }

    pub fn get(&self, user: u64, attribute: usize) -> Option<&MemoState> {
        self.states.get(&(user, attribute))
    }

    pub fn report<R: Rng + ?Sized>(
        &self,
        user: u64,
        attribute: usize,
        params: &TwoRoundParams,
        rng: &mut R,
    ) -> Result<Report> {
        let memo = self.get(user, attribute).ok_or_else(|| {
            LdpError::InvalidInput(format!(
                "no memoized state for user {user}, attribute {attribute}"
            ))
        })?;
        report(memo, params, rng)
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// `(N_i - n q1 (p2 - q2) - n q2) / (n (p1 - q1)(p2 - q2))`.
pub fn longitudinal_estimate<C: Count>(counts: &[C], n: u64, params: &TwoRoundParams) -> Result<FrequencyEstimate> {
    ensure_reports(n)?;
    if let TwoRoundKind::LGrr { domain } = params.kind {
        if counts.len() != domain {
            return Err(LdpError::ShapeMismatch(format!(
                "expected {domain} counts for L-GRR, got {}",
                counts.len()
            )));
        }
    }
    if counts.is_empty() {
        return Err(LdpError::EmptyInput("no count positions"));
    }
    let (d1, d2) = (params.p1 - params.q1, params.p2 - params.q2);
    if d1 == 0.0 || d2 == 0.0 {
        return Err(LdpError::DegenerateParameters(format!(
            "p1 - q1 = {d1}, p2 - q2 = {d2}"
        )));
    }
    let nf = n as f64;
    let freqs = counts
        .iter()
        .map(|&count| (count.to_f64() - nf * params.q1 * d2 - nf * params.q2) / (nf * d1 * d2))
        .collect();
    let var = longitudinal_variance_approx(params, n);
    Ok(FrequencyEstimate {
        freqs,
        n,
        analytic_var: vec![var; counts.len()],
    })
}

/// Probability that a report counts towards a value of true frequency `f`.
pub fn longitudinal_gamma(params: &TwoRoundParams, f: f64) -> f64 {
    let d2 = params.p2 - params.q2;
    f * (params.p1 - params.q1) * d2 + params.q1 * d2 + params.q2
}

/// `gamma (1 - gamma) / (n (p1 - q1)^2 (p2 - q2)^2)`.
pub fn longitudinal_variance(params: &TwoRoundParams, n: u64, f: f64) -> f64 {
    let g = longitudinal_gamma(params, f);
    let scale = ((params.p1 - params.q1) * (params.p2 - params.q2)).powi(2);
    g * (1.0 - g) / (n as f64 * scale)
}

pub fn longitudinal_variance_approx(params: &TwoRoundParams, n: u64) -> f64 {
    longitudinal_variance(params, n, 0.0)
}

/// Budget consumed by `t` reports built on one memoized value:
/// `ln((e^(eps_inf + t eps_1) + 1) / (e^eps_inf + e^(t eps_1)))`.
///
/// With `m` and `M` the smaller and larger of `eps_inf` and `t eps_1` this is
/// `m - ln1p((1 - e^-2m) / (e^(M-m) + e^-2m))`. The subtracted term only
/// shrinks as `M` grows, so the rounded result never decreases in `t` once
/// it saturates at `eps_inf`, and nothing overflows.
pub fn privacy_over_time(eps_inf: f64, eps_1: f64, t: u64) -> f64 {
    let te = t as f64 * eps_1;
    let (m, big) = if te < eps_inf { (te, eps_inf) } else { (eps_inf, te) };
    let u = -(-2.0 * m).exp_m1() / ((big - m).exp() + (-2.0 * m).exp());
    (m - u.ln_1p()).max(0.0)
}

/// Exact two-round channel for small domains.
pub fn two_round_channel(params: &TwoRoundParams, c: usize) -> Result<ChannelMatrix> {
    ensure_domain(c)?;
    match params.kind {
        TwoRoundKind::LGrr { domain } => {
            check_value(0, c, params)?;
            if domain > MAX_FULL_GRR_CHANNEL {
                return Err(LdpError::EnumerationLimit(format!(
                    "full L-GRR channel over {domain} values (limit {MAX_FULL_GRR_CHANNEL})"
                )));
            }
            grr_channel(params.p1, params.q1, c).compose(&grr_channel(params.p2, params.q2, c))
        }
        _ => {
            let first = ue_bits_channel(params.p1, params.q1, c)?;
            let second = ue_bits_channel(params.p2, params.q2, c)?;
            let encode =
                ChannelMatrix::from_fn(c, 1 << c, |v, o| if o == 1 << v { 1.0 } else { 0.0 });
            encode.compose(&first)?.compose(&second)
        }
    }
}

/// Privacy loss of a single second-round report, measured on the exact
/// composition of both rounds.
///
/// L-GRR composes the randomized-response rounds explicitly (row 0 of the
/// product; every other row is a permutation of it). Unary kinds act on each
/// bit independently, so the per-bit chain is exact for any `c`.
pub fn effective_single_report_epsilon(params: &TwoRoundParams, c: usize) -> Result<f64> {
    ensure_domain(c)?;
    match params.kind {
        TwoRoundKind::LGrr { domain } => {
            if domain != c {
                return Err(LdpError::ShapeMismatch(format!(
                    "L-GRR parameters were solved for c = {domain}, not {c}"
                )));
            }
            if c > MAX_GRR_ENUMERATION {
                return Err(LdpError::EnumerationLimit(format!(
                    "L-GRR channel over {c} values (limit {MAX_GRR_ENUMERATION})"
                )));
            }
            let mut row = vec![0.0; c];
            for mid in 0..c {
                let pm = if mid == 0 { params.p1 } else { params.q1 };
                for (y, out) in row.iter_mut().enumerate() {
                    *out += pm * if y == mid { params.p2 } else { params.q2 };
                }
            }
            let hi = row.iter().copied().fold(0.0, f64::max);
            let lo = row.iter().copied().fold(f64::INFINITY, f64::min);
            Ok(if lo == 0.0 { f64::INFINITY } else { (hi / lo).ln() })
        }
        _ => Ok(ue_chain_epsilon(params.p1, params.q1, params.p2, params.q2)),
    }
}

/// L-GRR when its approximate variance is no larger than L-OSUE's.
pub fn allomfree_params(eps_inf: f64, eps_1: f64, c: usize) -> Result<TwoRoundParams> {
    let grr = lgrr_params(eps_inf, eps_1, c)?;
    let osue = lue_params(eps_inf, eps_1, LongitudinalProtocol::LOsue)?;
    if longitudinal_variance_approx(&grr, 1) <= longitudinal_variance_approx(&osue, 1) {
        Ok(grr)
    } else {
        Ok(osue)
    }
}

fn check_tuple(tuple: &[usize], domains: &[usize], tau: usize) -> Result<()> {
    if domains.is_empty() {
        return Err(LdpError::EmptyInput("no attributes"));
    }
    if tuple.len() != domains.len() {
        return Err(LdpError::ShapeMismatch(format!(
            "tuple has {} values for {} attributes",
            tuple.len(),
            domains.len()
        )));
    }
    if tau == 0 {
        return Err(LdpError::InvalidParameter("tau must be at least 1".into()));
    }
    Ok(())
}

fn emit<R: Rng + ?Sized>(
    j: usize,
    v: usize,
    c: usize,
    params: &TwoRoundParams,
    tau: usize,
    rng: &mut R,
) -> Result<Vec<(usize, Report)>> {
    let memo = memoize_attribute(j, v, c, params, rng)?;
    (0..tau)
        .map(|_| report(&memo, params, rng).map(|r| (memo.attribute_index, r)))
        .collect()
}

/// One user's ALLOMFREE session: sample a single attribute once, pick L-GRR
/// or L-OSUE for its domain, memoize, then emit `tau` reports of it.
pub fn allomfree_client<R: Rng + ?Sized>(
    tuple: &[usize],
    domains: &[usize],
    eps_inf: f64,
    eps_1: f64,
    tau: usize,
    rng: &mut R,
) -> Result<Vec<(usize, Report)>> {
    check_tuple(tuple, domains, tau)?;
    let j = rng.random_range(0..domains.len());
    let params = allomfree_params(eps_inf, eps_1, domains[j])?;
    emit(j, tuple[j], domains[j], &params, tau, rng)
}

/// Same session shape as [`allomfree_client`] with a fixed protocol family.
pub fn sampled_longitudinal_client<R: Rng + ?Sized>(
    tuple: &[usize],
    domains: &[usize],
    protocol: LongitudinalProtocol,
    eps_inf: f64,
    eps_1: f64,
    tau: usize,
    rng: &mut R,
) -> Result<Vec<(usize, Report)>> {
    check_tuple(tuple, domains, tau)?;
    let j = rng.random_range(0..domains.len());
    let params = longitudinal_params(protocol, eps_inf, eps_1, domains[j])?;
    emit(j, tuple[j], domains[j], &params, tau, rng)
}
