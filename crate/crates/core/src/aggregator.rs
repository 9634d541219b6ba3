//! Server side: count reports per attribute, turn counts into estimates,
//! route reports into per-day and union-of-days databases, and score
//! estimates with the averaged MSE.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LdpError, Result};
use crate::longitudinal::{
    allomfree_params, longitudinal_estimate, longitudinal_params, memoize_attribute, report,
    LongitudinalProtocol, TwoRoundKind, TwoRoundParams,
};
use crate::multidim::{
    oracle_params, perturb_value, rsfd_client_with_plan, rsfd_estimate, rsfd_plan, MultidimConfig,
    OracleChoice, RsfdSlot, RsfdSlotPlan, RsfdVariant,
};
use crate::oracle::{estimate_freq, FrequencyEstimate, OneRoundParams, OracleKind};
use crate::report::{Report, TupleReport};

/// Wire shape expected for one attribute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SlotLayout {
    Value { c: usize },
    Unary { c: usize },
}

impl SlotLayout {
    pub fn width(self) -> usize {
        match self {
            SlotLayout::Value { c } | SlotLayout::Unary { c } => c,
        }
    }

    fn of_oracle(params: &OneRoundParams, c: usize) -> Self {
        match params.kind {
            OracleKind::Grr { .. } => SlotLayout::Value { c },
            _ => SlotLayout::Unary { c },
        }
    }

    fn of_two_round(params: &TwoRoundParams, c: usize) -> Self {
        match params.kind {
            TwoRoundKind::LGrr { .. } => SlotLayout::Value { c },
            _ => SlotLayout::Unary { c },
        }
    }
}

/// Counts `N_i` (per value or per bit) and report count `n` of one attribute.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeCounts {
    pub layout: SlotLayout,
    pub counts: Vec<u64>,
    pub n: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistogramAccumulator {
    attributes: Vec<AttributeCounts>,
}

impl HistogramAccumulator {
    pub fn new(layouts: Vec<SlotLayout>) -> Result<Self> {
        if layouts.is_empty() {
            return Err(LdpError::InvalidParameter("accumulator needs at least one attribute".into()));
        }
        Ok(Self {
            attributes: layouts
                .into_iter()
                .map(|layout| AttributeCounts {
                    layout,
                    counts: vec![0; layout.width()],
                    n: 0,
                })
                .collect(),
        })
    }

    pub fn for_strategy(config: &MultidimConfig, strategy: &Strategy) -> Result<Self> {
        Ok(strategy.prepare(config)?.accumulator())
    }

    pub fn d(&self) -> usize {
        self.attributes.len()
    }

    pub fn attribute(&self, j: usize) -> &AttributeCounts {
        &self.attributes[j]
    }

    pub fn counts(&self, j: usize) -> &[u64] {
        &self.attributes[j].counts
    }

    pub fn n(&self, j: usize) -> u64 {
        self.attributes[j].n
    }

    pub fn is_empty(&self) -> bool {
        self.attributes.iter().all(|a| a.n == 0)
    }

    fn check_slot(&self, j: usize, report: &Report) -> Result<()> {
        let attr = self.attributes.get(j).ok_or_else(|| {
            LdpError::Decode(format!("attribute index {j} out of range for d = {}", self.d()))
        })?;
        match (attr.layout, report) {
            (SlotLayout::Value { c }, Report::Value(x)) if *x < c => Ok(()),
            (SlotLayout::Unary { c }, Report::Unary(b)) if b.len() == c => Ok(()),
            (layout, other) => Err(LdpError::Decode(format!(
                "attribute {j} expects {layout:?}, got a {} report",
                other.kind_name()
            ))),
        }
    }

    fn add_slot(&mut self, j: usize, report: &Report) {
        let attr = &mut self.attributes[j];
        match report {
            Report::Value(x) => attr.counts[*x] += 1,
            Report::Unary(b) => b.ones().for_each(|i| attr.counts[i] += 1),
            _ => unreachable!("validated by check_slot"),
        }
        attr.n += 1;
    }

    /// Count one report. Sampled reports touch only the disclosed attribute;
    /// tuples touch every attribute; bare values need a one-attribute
    /// accumulator. Nothing is counted if any part fails to decode.
    pub fn accumulate(&mut self, report: &Report) -> Result<()> {
        match report {
            Report::Tuple(t) => {
                if t.per_attribute.len() != self.d() {
                    return Err(LdpError::Decode(format!(
                        "tuple of {} slots for {} attributes",
                        t.per_attribute.len(),
                        self.d()
                    )));
                }
                for (j, slot) in t.per_attribute.iter().enumerate() {
                    self.check_slot(j, slot)?;
                }
                for (j, slot) in t.per_attribute.iter().enumerate() {
                    self.add_slot(j, slot);
                }
            }
            Report::Sampled(s) => {
                self.check_slot(s.attribute_index, &s.payload)?;
                self.add_slot(s.attribute_index, &s.payload);
            }
            bare => {
                if self.d() != 1 {
                    return Err(LdpError::Decode(format!(
                        "untagged {} report sent to a {}-attribute accumulator",
                        bare.kind_name(),
                        self.d()
                    )));
                }
                self.check_slot(0, bare)?;
                self.add_slot(0, bare);
            }
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &HistogramAccumulator) -> Result<()> {
        if self.d() != other.d()
            || self
                .attributes
                .iter()
                .zip(&other.attributes)
                .any(|(a, b)| a.layout != b.layout)
        {
            return Err(LdpError::ShapeMismatch(
                "cannot merge accumulators with different layouts".into(),
            ));
        }
        for (a, b) in self.attributes.iter_mut().zip(&other.attributes) {
            a.n += b.n;
            a.counts.iter_mut().zip(&b.counts).for_each(|(x, y)| *x += y);
        }
        Ok(())
    }
}

/// How every user reports; determines both the client and the estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Strategy {
    Spl { epsilon: f64, choice: OracleChoice },
    Smp { epsilon: f64, choice: OracleChoice },
    Rsfd { epsilon: f64, variant: RsfdVariant },
    /// One sampled attribute reported through a fixed two-round protocol.
    Longitudinal {
        eps_inf: f64,
        eps_1: f64,
        protocol: LongitudinalProtocol,
    },
    Allomfree { eps_inf: f64, eps_1: f64 },
}

/// Parameters resolved for one attribute.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum AttributeEstimator {
    OneRound(OneRoundParams),
    TwoRound(TwoRoundParams),
    Rsfd(RsfdSlotPlan),
}

impl AttributeEstimator {
    fn layout(&self, c: usize) -> SlotLayout {
        match self {
            AttributeEstimator::OneRound(p) => SlotLayout::of_oracle(p, c),
            AttributeEstimator::TwoRound(p) => SlotLayout::of_two_round(p, c),
            AttributeEstimator::Rsfd(plan) => match plan.slot {
                RsfdSlot::Grr => SlotLayout::Value { c },
                RsfdSlot::OueZ | RsfdSlot::OueR => SlotLayout::Unary { c },
            },
        }
    }
}

impl Strategy {
    pub fn name(&self) -> String {
        match self {
            Strategy::Spl { choice, .. } => format!("Spl[{}]", choice.name()),
            Strategy::Smp { choice, .. } => format!("Smp[{}]", choice.name()),
            Strategy::Rsfd { variant, .. } => variant.name().to_string(),
            Strategy::Longitudinal { protocol, .. } => protocol.name().to_string(),
            Strategy::Allomfree { .. } => "ALLOMFREE".to_string(),
        }
    }

    /// Solve every attribute's parameters once.
    pub fn prepare(&self, config: &MultidimConfig) -> Result<PreparedStrategy> {
        let d = config.d();
        let attributes = match *self {
            Strategy::Rsfd { epsilon, variant } => rsfd_plan(config, epsilon, variant)?
                .into_iter()
                .map(AttributeEstimator::Rsfd)
                .collect(),
            _ => (0..d)
                .map(|j| {
                    let c = config.c(j);
                    Ok(match *self {
                        Strategy::Spl { epsilon, choice } => {
                            AttributeEstimator::OneRound(oracle_params(choice, epsilon / d as f64, c)?)
                        }
                        Strategy::Smp { epsilon, choice } => {
                            AttributeEstimator::OneRound(oracle_params(choice, epsilon, c)?)
                        }
                        Strategy::Longitudinal {
                            eps_inf,
                            eps_1,
                            protocol,
                        } => AttributeEstimator::TwoRound(longitudinal_params(protocol, eps_inf, eps_1, c)?),
                        Strategy::Allomfree { eps_inf, eps_1 } => {
                            AttributeEstimator::TwoRound(allomfree_params(eps_inf, eps_1, c)?)
                        }
                        Strategy::Rsfd { .. } => unreachable!(),
                    })
                })
                .collect::<Result<Vec<_>>>()?,
        };
        Ok(PreparedStrategy {
            strategy: *self,
            config: config.clone(),
            attributes,
        })
    }

    /// One user's report; prefer [`PreparedStrategy::client`] in loops.
    pub fn client<R: Rng + ?Sized>(&self, tuple: &[usize], config: &MultidimConfig, rng: &mut R) -> Result<Report> {
        self.prepare(config)?.client(tuple, rng)
    }
}

/// A strategy with all per-attribute parameters solved for one configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedStrategy {
    strategy: Strategy,
    config: MultidimConfig,
    attributes: Vec<AttributeEstimator>,
}

impl PreparedStrategy {
    pub fn strategy(&self) -> &Strategy {
        &self.strategy
    }

    pub fn config(&self) -> &MultidimConfig {
        &self.config
    }

    pub fn estimator(&self, j: usize) -> &AttributeEstimator {
        &self.attributes[j]
    }

    pub fn accumulator(&self) -> HistogramAccumulator {
        let layouts = self
            .attributes
            .iter()
            .enumerate()
            .map(|(j, a)| a.layout(self.config.c(j)))
            .collect();
        HistogramAccumulator::new(layouts).expect("configuration has at least one attribute")
    }

    /// One user's report in a single collection round. Sampling strategies
    /// disclose the attribute index; Spl and RS+FD send a full tuple.
    pub fn client<R: Rng + ?Sized>(&self, tuple: &[usize], rng: &mut R) -> Result<Report> {
        self.config.check_tuple(tuple)?;
        let d = self.config.d();
        match self.strategy {
            Strategy::Spl { .. } => {
                let per_attribute = self
                    .attributes
                    .iter()
                    .enumerate()
                    .map(|(j, a)| match a {
                        AttributeEstimator::OneRound(p) => perturb_value(tuple[j], self.config.c(j), p, rng),
                        _ => unreachable!("Spl resolves one-round parameters"),
                    })
                    .collect::<Result<_>>()?;
                Ok(Report::Tuple(TupleReport { per_attribute }))
            }
            Strategy::Rsfd { .. } => {
                let plan: Vec<RsfdSlotPlan> = self
                    .attributes
                    .iter()
                    .map(|a| match a {
                        AttributeEstimator::Rsfd(p) => *p,
                        _ => unreachable!("RS+FD resolves slot plans"),
                    })
                    .collect();
                Ok(Report::Tuple(rsfd_client_with_plan(tuple, &plan, rng)?))
            }
            _ => {
                let j = rng.random_range(0..d);
                let c = self.config.c(j);
                let payload = match &self.attributes[j] {
                    AttributeEstimator::OneRound(p) => perturb_value(tuple[j], c, p, rng)?,
                    AttributeEstimator::TwoRound(p) => {
                        let memo = memoize_attribute(j, tuple[j], c, p, rng)?;
                        report(&memo, p, rng)?
                    }
                    AttributeEstimator::Rsfd(_) => unreachable!("handled above"),
                };
                Ok(Report::sampled(j, payload))
            }
        }
    }

    /// Per-attribute estimates, each with that attribute's own report count.
    pub fn estimate(&self, acc: &HistogramAccumulator) -> Result<Vec<FrequencyEstimate>> {
        if acc.is_empty() {
            return Err(LdpError::EmptyInput("accumulator holds no reports"));
        }
        if acc.d() != self.config.d() {
            return Err(LdpError::ShapeMismatch(format!(
                "accumulator has {} attributes, configuration {}",
                acc.d(),
                self.config.d()
            )));
        }
        self.attributes
            .iter()
            .enumerate()
            .map(|(j, a)| {
                let (counts, n) = (acc.counts(j), acc.n(j));
                match a {
                    AttributeEstimator::OneRound(p) => estimate_freq(counts, n, p),
                    AttributeEstimator::TwoRound(p) => longitudinal_estimate(counts, n, p),
                    AttributeEstimator::Rsfd(plan) => {
                        let Strategy::Rsfd { epsilon, variant } = self.strategy else {
                            unreachable!("slot plans only come from RS+FD")
                        };
                        debug_assert_eq!(plan.c, self.config.c(j));
                        rsfd_estimate(counts, n, &self.config, j, epsilon, variant)
                    }
                }
            })
            .collect()
    }
}

/// Per-attribute estimates using the matching estimator and the strategy's
/// effective budget (`eps / d` for Spl, `eps` for Smp with the per-attribute
/// report count, the amplified budget for RS+FD with all users).
pub fn estimate_all(
    acc: &HistogramAccumulator,
    config: &MultidimConfig,
    strategy: &Strategy,
) -> Result<Vec<FrequencyEstimate>> {
    strategy.prepare(config)?.estimate(acc)
}

/// `(1/d) sum_j (1/c_j) sum_i (f - f_hat)^2`.
pub fn mse_avg(true_freqs: &[Vec<f64>], est_freqs: &[Vec<f64>]) -> Result<f64> {
    if true_freqs.is_empty() {
        return Err(LdpError::EmptyInput("no attributes"));
    }
    if true_freqs.len() != est_freqs.len() {
        return Err(LdpError::ShapeMismatch(format!(
            "{} true attributes vs {} estimated",
            true_freqs.len(),
            est_freqs.len()
        )));
    }
    let mut total = 0.0;
    for (j, (t, e)) in true_freqs.iter().zip(est_freqs).enumerate() {
        if t.len() != e.len() || t.is_empty() {
            return Err(LdpError::ShapeMismatch(format!(
                "attribute {j}: {} true values vs {} estimated",
                t.len(),
                e.len()
            )));
        }
        let sq: f64 = t.iter().zip(e).map(|(a, b)| (a - b).powi(2)).sum();
        total += sq / t.len() as f64;
    }
    Ok(total / true_freqs.len() as f64)
}

/// [`mse_avg`] additionally averaged over collection rounds.
pub fn mse_avg_over_time(true_freqs: &[Vec<Vec<f64>>], est_freqs: &[Vec<Vec<f64>>]) -> Result<f64> {
    if true_freqs.is_empty() {
        return Err(LdpError::EmptyInput("no collection rounds"));
    }
    if true_freqs.len() != est_freqs.len() {
        return Err(LdpError::ShapeMismatch(format!(
            "{} true rounds vs {} estimated",
            true_freqs.len(),
            est_freqs.len()
        )));
    }
    let mut total = 0.0;
    for (t, e) in true_freqs.iter().zip(est_freqs) {
        total += mse_avg(t, e)?;
    }
    Ok(total / true_freqs.len() as f64)
}

/// One database per day `D_j` and per union `D_j ∪ ... ∪ D_i` of consecutive
/// days, `Nb (Nb + 1) / 2` in total, ordered
/// `D1, D2, D2∪D1, D3, D3∪D2, D3∪D2∪D1, ...`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct UnionDayPlan {
    nb: usize,
}

impl UnionDayPlan {
    pub fn new(nb: usize) -> Result<Self> {
        if nb == 0 {
            return Err(LdpError::InvalidParameter("at least one day is required".into()));
        }
        Ok(Self { nb })
    }

    pub fn days(&self) -> usize {
        self.nb
    }

    pub fn num_databases(&self) -> usize {
        self.nb * (self.nb + 1) / 2
    }

    /// Index of the database covering days `first..=last` (1-based days).
    pub fn index(&self, first: usize, last: usize) -> Result<usize> {
        if first == 0 || first > last || last > self.nb {
            return Err(LdpError::InvalidInput(format!(
                "day span {first}..={last} invalid for {} days",
                self.nb
            )));
        }
        Ok(last * (last - 1) / 2 + (last - first))
    }

    /// Inverse of [`UnionDayPlan::index`].
    pub fn span(&self, index: usize) -> Result<(usize, usize)> {
        if index >= self.num_databases() {
            return Err(LdpError::InvalidInput(format!("database {index} out of range")));
        }
        let mut last = 1;
        while last * (last + 1) / 2 <= index {
            last += 1;
        }
        let offset = index - last * (last - 1) / 2;
        Ok((last - offset, last))
    }

    pub fn label(&self, index: usize) -> Result<String> {
        let (first, last) = self.span(index)?;
        Ok((first..=last)
            .rev()
            .map(|d| format!("D{d}"))
            .collect::<Vec<_>>()
            .join("∪"))
    }

    /// Databases a user's report on `day` goes to, given the previous day
    /// (0 if none) on which the same user was present.
    fn targets(&self, day: usize, previous: usize) -> Vec<usize> {
        let mut out = Vec::new();
        for last in day..=self.nb {
            for first in previous + 1..=day {
                out.push(last * (last - 1) / 2 + (last - first));
            }
        }
        out.sort_unstable();
        out
    }

    /// `(day, databases)` for each day the user is present, in day order.
    pub fn route_user(&self, presence: &[usize]) -> Result<Vec<(usize, Vec<usize>)>> {
        let mut days = presence.to_vec();
        days.sort_unstable();
        days.dedup();
        if let Some(&bad) = days.iter().find(|&&d| d == 0 || d > self.nb) {
            return Err(LdpError::InvalidInput(format!(
                "day {bad} outside 1..={}",
                self.nb
            )));
        }
        let mut previous = 0;
        let mut out = Vec::with_capacity(days.len());
        for day in days {
            out.push((day, self.targets(day, previous)));
            previous = day;
        }
        Ok(out)
    }

    /// Fresh accumulator per database, cloned from `template`.
    pub fn databases(&self, template: &HistogramAccumulator) -> Vec<HistogramAccumulator> {
        vec![template.clone(); self.num_databases()]
    }
}

/// Route every user's reports. A report on a day enters that day's database
/// and every union containing that day that does not already hold a report
/// of the same user, so each union counts each present user once.
pub fn route_union_days(presence: &[Vec<usize>], nb: usize) -> Result<Vec<Vec<(usize, Vec<usize>)>>> {
    let plan = UnionDayPlan::new(nb)?;
    presence.iter().map(|days| plan.route_user(days)).collect()
}
