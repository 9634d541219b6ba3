//! Collecting `d` categorical attributes from each user.
//!
//! * Spl: every attribute is reported with `eps / d`.
//! * Smp: one uniformly sampled attribute is reported with the full `eps`,
//!   and its index is disclosed.
//! * RS+FD: one sampled attribute is reported at the amplified budget
//!   `ln(d (e^eps - 1) + 1)`; every other slot carries fake data, so the
//!   sampled index stays hidden.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_domain, ensure_epsilon, LdpError, Result};
use crate::oracle::{
    adp_params, ensure_reports, grr_draw, grr_params, oue_params, sue_params, ue_encode, ue_flip,
    variance_approx, Count, FrequencyEstimate, OneRoundParams, OracleKind, UnaryVector,
};
use crate::report::{Report, SampledReport, TupleReport};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MultidimConfig {
    domains: Vec<usize>,
}

impl MultidimConfig {
    pub fn new(domains: Vec<usize>) -> Result<Self> {
        if domains.is_empty() {
            return Err(LdpError::InvalidParameter("at least one attribute is required".into()));
        }
        for &c in &domains {
            ensure_domain(c)?;
        }
        Ok(Self { domains })
    }

    pub fn d(&self) -> usize {
        self.domains.len()
    }

    pub fn c(&self, j: usize) -> usize {
        self.domains[j]
    }

    pub fn domains(&self) -> &[usize] {
        &self.domains
    }

    pub fn check_tuple(&self, tuple: &[usize]) -> Result<()> {
        if tuple.len() != self.d() {
            return Err(LdpError::ShapeMismatch(format!(
                "tuple has {} values for {} attributes",
                tuple.len(),
                self.d()
            )));
        }
        for (j, (&v, &c)) in tuple.iter().zip(&self.domains).enumerate() {
            if v >= c {
                return Err(LdpError::InvalidInput(format!(
                    "attribute {j}: value index {v} outside domain of size {c}"
                )));
            }
        }
        Ok(())
    }

    fn check_attribute(&self, j: usize) -> Result<()> {
        if j >= self.d() {
            return Err(LdpError::InvalidInput(format!(
                "attribute {j} out of range for d = {}",
                self.d()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OracleChoice {
    Grr,
    Sue,
    Oue,
    Adp,
}

impl OracleChoice {
    pub fn name(self) -> &'static str {
        match self {
            OracleChoice::Grr => "GRR",
            OracleChoice::Sue => "SUE",
            OracleChoice::Oue => "OUE",
            OracleChoice::Adp => "ADP",
        }
    }
}

pub fn oracle_params(choice: OracleChoice, epsilon: f64, c: usize) -> Result<OneRoundParams> {
    match choice {
        OracleChoice::Grr => grr_params(epsilon, c),
        OracleChoice::Sue => sue_params(epsilon),
        OracleChoice::Oue => oue_params(epsilon),
        OracleChoice::Adp => adp_params(epsilon, c),
    }
}

/// Sanitize one value with a one-round oracle; GRR yields a value index,
/// unary kinds a bit vector.
pub fn perturb_value<R: Rng + ?Sized>(v: usize, c: usize, params: &OneRoundParams, rng: &mut R) -> Result<Report> {
    match params.kind {
        OracleKind::Grr { domain } => {
            if domain != c {
                return Err(LdpError::ShapeMismatch(format!(
                    "GRR parameters were solved for c = {domain}, not {c}"
                )));
            }
            if v >= c {
                return Err(LdpError::InvalidInput(format!(
                    "value index {v} outside domain of size {c}"
                )));
            }
            Ok(Report::Value(grr_draw(v, c, params.p, rng)))
        }
        _ => Ok(Report::Unary(ue_flip(&ue_encode(v, c)?, params.p, params.q, rng))),
    }
}

/// `ln(d (e^eps - 1) + 1)`: the budget a mechanism may spend when it only
/// touches a `1/d` sample of the input.
pub fn amplify(epsilon: f64, d: usize) -> Result<f64> {
    ensure_epsilon(epsilon)?;
    if d == 0 {
        return Err(LdpError::InvalidParameter("d must be at least 1".into()));
    }
    Ok((d as f64 * epsilon.exp_m1()).ln_1p())
}

pub fn spl_client<R: Rng + ?Sized>(
    tuple: &[usize],
    config: &MultidimConfig,
    epsilon: f64,
    choice: OracleChoice,
    rng: &mut R,
) -> Result<TupleReport> {
    config.check_tuple(tuple)?;
    let share = epsilon / config.d() as f64;
    let per_attribute = tuple
        .iter()
        .zip(config.domains())
        .map(|(&v, &c)| perturb_value(v, c, &oracle_params(choice, share, c)?, rng))
        .collect::<Result<_>>()?;
    Ok(TupleReport { per_attribute })
}

pub fn smp_client<R: Rng + ?Sized>(
    tuple: &[usize],
    config: &MultidimConfig,
    epsilon: f64,
    choice: OracleChoice,
    rng: &mut R,
) -> Result<SampledReport> {
    config.check_tuple(tuple)?;
    let j = rng.random_range(0..config.d());
    let c = config.c(j);
    let payload = perturb_value(tuple[j], c, &oracle_params(choice, epsilon, c)?, rng)?;
    Ok(SampledReport {
        attribute_index: j,
        payload: Box::new(payload),
    })
}

/// Variance when each user reports `r` of the `d` attributes with `eps / r`
/// each: `(d / r) Var*(eps / r)`. `r = 1` is Smp, `r = d` is Spl.
pub fn sampled_variance(epsilon: f64, d: usize, r: usize, c: usize, choice: OracleChoice, n: u64) -> Result<f64> {
    if r == 0 || r > d {
        return Err(LdpError::InvalidParameter(format!(
            "r = {r} must lie in [1, d = {d}]"
        )));
    }
    let params = oracle_params(choice, epsilon / r as f64, c)?;
    Ok(d as f64 / r as f64 * variance_approx(&params, n))
}

pub fn smp_variance(epsilon: f64, d: usize, c: usize, choice: OracleChoice, n: u64) -> Result<f64> {
    sampled_variance(epsilon, d, 1, c, choice, n)
}

pub fn spl_variance(epsilon: f64, d: usize, c: usize, choice: OracleChoice, n: u64) -> Result<f64> {
    sampled_variance(epsilon, d, d, c, choice, n)
}

/// Exhaustive argmin over `r` in `[1, d]` (smallest `r` on ties).
pub fn smp_optimal_r(epsilon: f64, d: usize, c: usize, choice: OracleChoice) -> Result<usize> {
    let mut best = (1, f64::INFINITY);
    for r in 1..=d {
        let v = sampled_variance(epsilon, d, r, c, choice, 1)?;
        if v < best.1 {
            best = (r, v);
        }
    }
    Ok(best.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RsfdVariant {
    Grr,
    OueZ,
    OueR,
    Adp,
}

impl RsfdVariant {
    pub fn name(self) -> &'static str {
        match self {
            RsfdVariant::Grr => "RS+FD[GRR]",
            RsfdVariant::OueZ => "RS+FD[OUE-z]",
            RsfdVariant::OueR => "RS+FD[OUE-r]",
            RsfdVariant::Adp => "RS+FD[ADP]",
        }
    }
}

/// Concrete protocol used on one attribute slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RsfdSlot {
    Grr,
    OueZ,
    OueR,
}

fn rsfd_gamma(slot: RsfdSlot, d: usize, c: usize, p: f64, q: f64, f: f64) -> f64 {
    let (df, cf) = (d as f64, c as f64);
    match slot {
        RsfdSlot::Grr => (q + f * (p - q) + (df - 1.0) / cf) / df,
        RsfdSlot::OueZ => (df * q + f * (p - q)) / df,
        RsfdSlot::OueR => (q + f * (p - q) + (df - 1.0) / cf * (p + (cf - 1.0) * q)) / df,
    }
}

fn slot_variance(slot: RsfdSlot, d: usize, c: usize, params: &OneRoundParams, n: u64, f: f64) -> f64 {
    let (p, q) = (params.p, params.q);
    let g = rsfd_gamma(slot, d, c, p, q, f);
    (d * d) as f64 * g * (1.0 - g) / (n as f64 * (p - q).powi(2))
}

fn slot_params(slot: RsfdSlot, eps_prime: f64, c: usize) -> Result<OneRoundParams> {
    match slot {
        RsfdSlot::Grr => grr_params(eps_prime, c),
        RsfdSlot::OueZ | RsfdSlot::OueR => oue_params(eps_prime),
    }
}

/// RS+FD[GRR] iff its `f = 0` variance is no larger than RS+FD[OUE-z]'s.
/// Both variances scale as `1 / n`, so `n` does not affect the outcome.
pub fn rsfd_adp_choose(d: usize, c_j: usize, eps_prime: f64, n: u64) -> Result<RsfdSlot> {
    ensure_reports(n)?;
    ensure_domain(c_j)?;
    if d == 0 {
        return Err(LdpError::InvalidParameter("d must be at least 1".into()));
    }
    let grr = grr_params(eps_prime, c_j)?;
    let oue = oue_params(eps_prime)?;
    let var_grr = slot_variance(RsfdSlot::Grr, d, c_j, &grr, n, 0.0);
    let var_oue = slot_variance(RsfdSlot::OueZ, d, c_j, &oue, n, 0.0);
    Ok(if var_grr <= var_oue {
        RsfdSlot::Grr
    } else {
        RsfdSlot::OueZ
    })
}

/// Protocol used on attribute `j` under `variant`.
pub fn rsfd_slot(config: &MultidimConfig, j: usize, epsilon: f64, variant: RsfdVariant) -> Result<RsfdSlot> {
    config.check_attribute(j)?;
    Ok(match variant {
        RsfdVariant::Grr => RsfdSlot::Grr,
        RsfdVariant::OueZ => RsfdSlot::OueZ,
        RsfdVariant::OueR => RsfdSlot::OueR,
        RsfdVariant::Adp => rsfd_adp_choose(config.d(), config.c(j), amplify(epsilon, config.d())?, 1)?,
    })
}

/// Protocol and amplified-budget parameters of one RS+FD slot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RsfdSlotPlan {
    pub slot: RsfdSlot,
    pub params: OneRoundParams,
    pub c: usize,
}

/// Resolve every slot once so per-user clients do no parameter solving.
pub fn rsfd_plan(config: &MultidimConfig, epsilon: f64, variant: RsfdVariant) -> Result<Vec<RsfdSlotPlan>> {
    let eps_prime = amplify(epsilon, config.d())?;
    (0..config.d())
        .map(|i| {
            let slot = rsfd_slot(config, i, epsilon, variant)?;
            let c = config.c(i);
            Ok(RsfdSlotPlan {
                slot,
                params: slot_params(slot, eps_prime, c)?,
                c,
            })
        })
        .collect()
}

/// RS+FD client over a precomputed plan: every slot gets a report, only the
/// sampled one is derived from the user's data. Fake values are uniform over
/// the full domain and may coincide with the true value.
pub fn rsfd_client_with_plan<R: Rng + ?Sized>(tuple: &[usize], plan: &[RsfdSlotPlan], rng: &mut R) -> Result<TupleReport> {
    if tuple.len() != plan.len() || plan.is_empty() {
        return Err(LdpError::ShapeMismatch(format!(
            "tuple has {} values for {} attributes",
            tuple.len(),
            plan.len()
        )));
    }
    let sampled = rng.random_range(0..plan.len());
    let mut per_attribute = Vec::with_capacity(plan.len());
    for (i, slot) in plan.iter().enumerate() {
        let (c, params) = (slot.c, &slot.params);
        let rep = if i == sampled {
            perturb_value(tuple[i], c, params, rng)?
        } else {
            match slot.slot {
                RsfdSlot::Grr => Report::Value(rng.random_range(0..c)),
                RsfdSlot::OueZ => Report::Unary(ue_flip(&UnaryVector::zeros(c), params.p, params.q, rng)),
                RsfdSlot::OueR => {
                    let fake = ue_encode(rng.random_range(0..c), c)?;
                    Report::Unary(ue_flip(&fake, params.p, params.q, rng))
                }
            }
        };
        per_attribute.push(rep);
    }
    Ok(TupleReport { per_attribute })
}

pub fn rsfd_client<R: Rng + ?Sized>(
    tuple: &[usize],
    config: &MultidimConfig,
    epsilon: f64,
    variant: RsfdVariant,
    rng: &mut R,
) -> Result<TupleReport> {
    config.check_tuple(tuple)?;
    rsfd_client_with_plan(tuple, &rsfd_plan(config, epsilon, variant)?, rng)
}

pub fn rsfd_grr_client<R: Rng + ?Sized>(tuple: &[usize], config: &MultidimConfig, epsilon: f64, rng: &mut R) -> Result<TupleReport> {
    rsfd_client(tuple, config, epsilon, RsfdVariant::Grr, rng)
}

pub fn rsfd_ouez_client<R: Rng + ?Sized>(tuple: &[usize], config: &MultidimConfig, epsilon: f64, rng: &mut R) -> Result<TupleReport> {
    rsfd_client(tuple, config, epsilon, RsfdVariant::OueZ, rng)
}

pub fn rsfd_ouer_client<R: Rng + ?Sized>(tuple: &[usize], config: &MultidimConfig, epsilon: f64, rng: &mut R) -> Result<TupleReport> {
    rsfd_client(tuple, config, epsilon, RsfdVariant::OueR, rng)
}

pub fn rsfd_adp_client<R: Rng + ?Sized>(tuple: &[usize], config: &MultidimConfig, epsilon: f64, rng: &mut R) -> Result<TupleReport> {
    rsfd_client(tuple, config, epsilon, RsfdVariant::Adp, rng)
}

/// Unbiased per-attribute estimate for attribute `j`; `n` counts every user,
/// since each contributes a report to every slot.
pub fn rsfd_estimate<C: Count>(
    counts: &[C],
    n: u64,
    config: &MultidimConfig,
    j: usize,
    epsilon: f64,
    variant: RsfdVariant,
) -> Result<FrequencyEstimate> {
    ensure_reports(n)?;
    config.check_attribute(j)?;
    let (d, c) = (config.d(), config.c(j));
    if counts.len() != c {
        return Err(LdpError::ShapeMismatch(format!(
            "attribute {j} has {c} values but {} counts were given",
            counts.len()
        )));
    }
    let slot = rsfd_slot(config, j, epsilon, variant)?;
    let params = slot_params(slot, amplify(epsilon, d)?, c)?;
    let (p, q) = (params.p, params.q);
    if p == q {
        return Err(LdpError::DegenerateParameters("p equals q".into()));
    }
    let (nf, df, cf) = (n as f64, d as f64, c as f64);
    let freqs = counts
        .iter()
        .map(|&count| {
            let nc = count.to_f64();
            match slot {
                RsfdSlot::Grr => (nc * df * cf - nf * (df - 1.0 + q * cf)) / (nf * cf * (p - q)),
                RsfdSlot::OueZ => df * (nc - nf * q) / (nf * (p - q)),
                RsfdSlot::OueR => {
                    let offset = q * cf + (p - q) * (df - 1.0) + q * cf * (df - 1.0);
                    (nc * df * cf - nf * offset) / (nf * cf * (p - q))
                }
            }
        })
        .collect();
    let var = slot_variance(slot, d, c, &params, n, 0.0);
    Ok(FrequencyEstimate {
        freqs,
        n,
        analytic_var: vec![var; c],
    })
}

/// `d^2 gamma (1 - gamma) / (n (p - q)^2)` at true frequency `f`.
pub fn rsfd_variance(
    config: &MultidimConfig,
    j: usize,
    epsilon: f64,
    variant: RsfdVariant,
    n: u64,
    f: f64,
) -> Result<f64> {
    ensure_reports(n)?;
    let slot = rsfd_slot(config, j, epsilon, variant)?;
    let (d, c) = (config.d(), config.c(j));
    let params = slot_params(slot, amplify(epsilon, d)?, c)?;
    Ok(slot_variance(slot, d, c, &params, n, f))
}

/// Probability that a single RS+FD slot report counts towards a value of
/// frequency `f` (the `gamma` of the variance formula).
pub fn rsfd_gamma_at(config: &MultidimConfig, j: usize, epsilon: f64, variant: RsfdVariant, f: f64) -> Result<f64> {
    let slot = rsfd_slot(config, j, epsilon, variant)?;
    let (d, c) = (config.d(), config.c(j));
    let params = slot_params(slot, amplify(epsilon, d)?, c)?;
    Ok(rsfd_gamma(slot, d, c, params.p, params.q, f))
}
