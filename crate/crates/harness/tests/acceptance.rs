//! Acceptance gate: one test per criterion, each printing a PASS/FAIL line.
//!
//! Tests hold a shared lock so that their wall-clock budgets are measured
//! without competing for the CPU with each other.

use std::collections::BTreeSet;
use std::io::Write;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ldplab::dataset::{synth_uniform, Dataset};
use ldplab::experiment::{run_experiment, Execution, ExperimentResult, ExperimentSpec, StrategySpec};
use ldplab::tables::{variance_table, TableConfig, TableKind};
use ldplab_core::aggregator::route_union_days;
use ldplab_core::channel::{grr_channel, ue_channel, ChannelMatrix};
use ldplab_core::longitudinal::{
    allomfree_params, longitudinal_estimate, longitudinal_params, longitudinal_variance, memoize, privacy_over_time,
    report, two_round_channel, LongitudinalProtocol, TwoRoundKind, TwoRoundParams,
};
use ldplab_core::multidim::{
    oracle_params, perturb_value, rsfd_client_with_plan, rsfd_estimate, rsfd_plan, rsfd_variance, MultidimConfig,
    OracleChoice, RsfdSlot, RsfdSlotPlan, RsfdVariant,
};
use ldplab_core::noise::{lambert_w_minus1, planar_laplace_offset, planar_radius_cdf, GeoBudget};
use ldplab_core::oracle::{estimate_freq, variance_approx, variance_exact, OneRoundParams, OracleKind};
use ldplab_core::Report;

static GATE: Mutex<()> = Mutex::new(());

fn criterion(name: &str, budget: Duration, body: impl FnOnce() -> Result<String, String>) {
    let _guard = GATE.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let outcome = body();
    let elapsed = start.elapsed();
    let outcome = match outcome {
        Ok(msg) if elapsed > budget => Err(format!("{msg}; took {elapsed:.2?}, limit {budget:.0?}")),
        other => other,
    };
    // Written straight to the stream so the line shows without --nocapture.
    let mut out = std::io::stdout().lock();
    match outcome {
        Ok(msg) => {
            let _ = writeln!(out, "PASS {name}: {msg} [{elapsed:.2?}]");
        }
        Err(msg) => {
            let _ = writeln!(out, "FAIL {name}: {msg} [{elapsed:.2?}]");
            drop(out);
            panic!("{name}: {msg}");
        }
    }
}

const TOL: f64 = 1e-9;
const EPS_SET: [f64; 6] = [0.1, 0.5, 1.0, 2.0, 4.0, 7.0];

// ---------------------------------------------------------------------------
// Channel enumeration helpers
// ---------------------------------------------------------------------------

fn oracle_channel(p: &OneRoundParams, c: usize) -> ChannelMatrix {
    match p.kind {
        OracleKind::Grr { .. } => grr_channel(p.p, p.q, c),
        _ => ue_channel(p.p, p.q, c).unwrap(),
    }
}

/// Mixed-radix digits of `index`, least significant first.
fn digits(mut index: usize, radix: &[usize]) -> Vec<usize> {
    radix
        .iter()
        .map(|&r| {
            let d = index % r;
            index /= r;
            d
        })
        .collect()
}

/// Channel of independent per-attribute channels applied to every attribute.
fn product_channel(parts: &[ChannelMatrix]) -> ChannelMatrix {
    let ins: Vec<usize> = parts.iter().map(|m| m.inputs()).collect();
    let outs: Vec<usize> = parts.iter().map(|m| m.outputs()).collect();
    ChannelMatrix::from_fn(ins.iter().product(), outs.iter().product(), |x, y| {
        let (xs, ys) = (digits(x, &ins), digits(y, &outs));
        parts.iter().enumerate().map(|(j, m)| m.prob(xs[j], ys[j])).product()
    })
}

/// One uniformly sampled attribute reported through its channel; the output
/// is the pair (attribute, report), laid out attribute by attribute.
fn sampled_channel(parts: &[ChannelMatrix]) -> ChannelMatrix {
    let ins: Vec<usize> = parts.iter().map(|m| m.inputs()).collect();
    let offsets: Vec<usize> = parts
        .iter()
        .scan(0, |acc, m| {
            let o = *acc;
            *acc += m.outputs();
            Some(o)
        })
        .collect();
    let total = parts.iter().map(|m| m.outputs()).sum();
    let d = parts.len() as f64;
    ChannelMatrix::from_fn(ins.iter().product(), total, |x, y| {
        let xs = digits(x, &ins);
        let j = offsets.iter().rposition(|&o| o <= y).unwrap();
        parts[j].prob(xs[j], y - offsets[j]) / d
    })
}

/// Output distribution of a fake (non-sampled) RS+FD slot.
fn fake_distribution(plan: &RsfdSlotPlan) -> Vec<f64> {
    let c = plan.c;
    match plan.slot {
        RsfdSlot::Grr => vec![1.0 / c as f64; c],
        RsfdSlot::OueZ => {
            let (_, q) = (plan.params.p, plan.params.q);
            (0..1usize << c)
                .map(|o| (0..c).map(|i| if (o >> i) & 1 == 1 { q } else { 1.0 - q }).product())
                .collect()
        }
        RsfdSlot::OueR => {
            let ch = ue_channel(plan.params.p, plan.params.q, c).unwrap();
            (0..1usize << c)
                .map(|o| (0..c).map(|v| ch.prob(v, o)).sum::<f64>() / c as f64)
                .collect()
        }
    }
}

fn slot_channel(plan: &RsfdSlotPlan) -> ChannelMatrix {
    oracle_channel(&plan.params, plan.c)
}

/// Full RS+FD tuple channel: every slot emits a report.
fn rsfd_tuple_channel(plan: &[RsfdSlotPlan]) -> ChannelMatrix {
    let ins: Vec<usize> = plan.iter().map(|s| s.c).collect();
    let chans: Vec<ChannelMatrix> = plan.iter().map(slot_channel).collect();
    let fakes: Vec<Vec<f64>> = plan.iter().map(fake_distribution).collect();
    let outs: Vec<usize> = chans.iter().map(|m| m.outputs()).collect();
    let d = plan.len();
    ChannelMatrix::from_fn(ins.iter().product(), outs.iter().product(), |x, y| {
        let (xs, ys) = (digits(x, &ins), digits(y, &outs));
        (0..d)
            .map(|j| {
                (0..d)
                    .map(|k| if k == j { chans[k].prob(xs[k], ys[k]) } else { fakes[k][ys[k]] })
                    .product::<f64>()
            })
            .sum::<f64>()
            / d as f64
    })
}

/// Marginal channel of one RS+FD slot: sampled with probability `1/d`,
/// fake otherwise.
fn rsfd_slot_marginal(plan: &[RsfdSlotPlan], j: usize) -> ChannelMatrix {
    let d = plan.len() as f64;
    let ch = slot_channel(&plan[j]);
    let fake = fake_distribution(&plan[j]);
    ChannelMatrix::from_fn(ch.inputs(), ch.outputs(), |x, y| ch.prob(x, y) / d + (1.0 - 1.0 / d) * fake[y])
}

/// Expected per-value counts of `n` users with frequencies `f` through `ch`.
/// Unary outputs contribute one count per set bit.
fn expected_counts(ch: &ChannelMatrix, unary: bool, f: &[f64], n: f64) -> Vec<f64> {
    let c = f.len();
    let mut counts = vec![0.0; c];
    for (v, &fv) in f.iter().enumerate() {
        for o in 0..ch.outputs() {
            let w = n * fv * ch.prob(v, o);
            if unary {
                (0..c).filter(|i| (o >> i) & 1 == 1).for_each(|i| counts[i] += w);
            } else {
                counts[o] += w;
            }
        }
    }
    counts
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Exact uniform data: value `i mod c_j` in attribute `j`, shifted per
/// attribute so tuples vary.
fn uniform_exact(n: usize, domains: &[usize]) -> Dataset {
    let rows = (0..n).map(|i| domains.iter().enumerate().map(|(j, &c)| (i + j) % c).collect()).collect();
    Dataset::new((0..domains.len()).map(|j| format!("A{j}")).collect(), domains.to_vec(), rows).unwrap()
}

// ---------------------------------------------------------------------------
// 1. Analytic tables
// ---------------------------------------------------------------------------

/// Rows of the one-round table: eps, GRR(c=2), GRR(c=32), GRR(c=1024), OUE, SUE.
const ONE_ROUND_PRINTED: [(f64, [&str; 5]); 4] = [
    (0.5, ["0.000392", "0.007520", "0.243240", "0.001567", "0.001592"]),
    (1.0, ["0.000092", "0.001108", "0.034707", "0.000368", "0.000392"]),
    (2.0, ["0.000018", "0.000092", "0.002522", "0.000072", "0.000092"]),
    (4.0, ["0.000002", "0.000003", "0.000037", "0.000008", "0.000018"]),
];

/// Longitudinal table rows: (eps_inf, eps_1) budget and the cells
/// L-GRR(c=2), L-GRR(c=32), L-GRR(c=1024), L-OSUE, L-SUE, L-SOUE, L-OUE.
/// In the 0.3 block the printed labels of the third and fourth rows repeat
/// those of the 0.6 block; the cells themselves belong to (2.0, 0.6) and
/// (4.0, 1.2), the budgets listed here.
const LONGITUDINAL_PRINTED: [(f64, f64, [&str; 7]); 24] = [
    (0.5, 0.30, ["0.001103", "0.980969", "26706", "0.004411", "0.004436", "0.005306", "0.005549"]),
    (1.0, 0.60, ["0.000270", "0.125036", "3153", "0.001078", "0.001103", "0.001234", "0.001347"]),
    (2.0, 1.20, ["0.000062", "0.006327", "117", "0.000247", "0.000270", "0.000264", "0.000310"]),
    (4.0, 2.40, ["0.000011", "0.000078", "0.25903", "0.000044", "0.000062", "0.000045", "0.000057"]),
    (0.5, 0.25, ["0.001592", "2.088372", "60218", "0.006367", "0.006392", "0.007336", "0.007611"]),
    (1.0, 0.50, ["0.000392", "0.268074", "7198", "0.001567", "0.001592", "0.001740", "0.001872"]),
    (2.0, 1.00, ["0.000092", "0.013926", "281", "0.000368", "0.000392", "0.000389", "0.000447"]),
    (4.0, 2.00, ["0.000018", "0.000188", "0.74088", "0.000072", "0.000092", "0.000073", "0.000092"]),
    (0.5, 0.20, ["0.002492", "4.530779", "135874", "0.009967", "0.009992", "0.011012", "0.011324"]),
    (1.0, 0.40, ["0.000617", "0.586823", "16443", "0.002467", "0.002492", "0.002658", "0.002812"]),
    (2.0, 0.80, ["0.000148", "0.031552", "673", "0.000593", "0.000617", "0.000617", "0.000690"]),
    (4.0, 1.60, ["0.000032", "0.000484", "2.12772", "0.000127", "0.000148", "0.000128", "0.000156"]),
    (0.5, 0.15, ["0.004436", "10", "329836", "0.017744", "0.017769", "0.018863", "0.019214"]),
    (1.0, 0.30, ["0.001103", "1.398568", "40412", "0.004411", "0.004436", "0.004620", "0.004799"]),
    (2.0, 0.60, ["0.000270", "0.078202", "1737", "0.001078", "0.001103", "0.001106", "0.001198"]),
    (4.0, 1.20, ["0.000062", "0.001389", "6", "0.000247", "0.000270", "0.000248", "0.000291"]),
    (0.5, 0.10, ["0.009992", "30", "972656", "0.039967", "0.039992", "0.041148", "0.041536"]),
    (1.0, 0.20, ["0.002492", "4.080052", "120651", "0.009967", "0.009992", "0.010190", "0.010394"]),
    (2.0, 0.40, ["0.000617", "0.237925", "5443", "0.002467", "0.002492", "0.002498", "0.002610"]),
    (4.0, 0.80, ["0.000148", "0.004939", "24", "0.000593", "0.000617", "0.000595", "0.000659"]),
    (0.5, 0.05, ["0.039992", "154", "4941829", "0.159967", "0.159992", "0.161191", "0.161608"]),
    (1.0, 0.10, ["0.009992", "20", "620584", "0.039967", "0.039992", "0.040201", "0.040424"]),
    (2.0, 0.20, ["0.002492", "1.255550", "29356", "0.009967", "0.009992", "0.010000", "0.010130"]),
    (4.0, 0.40, ["0.000617", "0.030494", "156", "0.002467", "0.002492", "0.002469", "0.002560"]),
];

/// A computed value matches a printed cell when it differs by less than one
/// unit in the last printed decimal (covers both rounding and truncation).
fn matches_printed(computed: f64, printed: &str) -> bool {
    let decimals = printed.split_once('.').map_or(0, |(_, frac)| frac.len());
    let value: f64 = printed.parse().unwrap();
    (computed - value).abs() < 10f64.powi(-(decimals as i32))
}

#[test]
fn criterion_1_variance_tables() {
    criterion("criterion 1 (variance tables)", Duration::from_secs(1), || {
        let cells = variance_table(&TableConfig::default()).map_err(|e| e.to_string())?;
        let lookup = |table: TableKind, eps_inf: f64, eps_1: Option<f64>, protocol: &str, c: Option<usize>| {
            cells
                .iter()
                .find(|x| {
                    x.table == table
                        && x.eps_inf == eps_inf
                        && x.protocol == protocol
                        && x.c == c
                        && match (x.eps_1, eps_1) {
                            (Some(a), Some(b)) => (a - b).abs() < 1e-9,
                            (None, None) => true,
                            _ => false,
                        }
                })
                .and_then(|x| x.variance)
        };
        let mut checked = 0;
        let mut mismatches = Vec::new();
        for (eps, row) in ONE_ROUND_PRINTED {
            let cols = [("GRR", Some(2)), ("GRR", Some(32)), ("GRR", Some(1024)), ("OUE", None), ("SUE", None)];
            for ((protocol, c), printed) in cols.into_iter().zip(row) {
                let v = lookup(TableKind::OneRound, eps, None, protocol, c);
                checked += 1;
                if !v.is_some_and(|v| matches_printed(v, printed)) {
                    mismatches.push(format!("{protocol}({c:?}) eps={eps}: {v:?} vs {printed}"));
                }
            }
        }
        for (eps_inf, eps_1, row) in LONGITUDINAL_PRINTED {
            let cols = [
                ("L-GRR", Some(2)),
                ("L-GRR", Some(32)),
                ("L-GRR", Some(1024)),
                ("L-OSUE", None),
                ("L-SUE", None),
                ("L-SOUE", None),
                ("L-OUE", None),
            ];
            for ((protocol, c), printed) in cols.into_iter().zip(row) {
                let v = lookup(TableKind::Longitudinal, eps_inf, Some(eps_1), protocol, c);
                checked += 1;
                if !v.is_some_and(|v| matches_printed(v, printed)) {
                    mismatches.push(format!("{protocol}({c:?}) ({eps_inf}, {eps_1}): {v:?} vs {printed}"));
                }
            }
        }
        if mismatches.is_empty() {
            Ok(format!("{checked} printed cells reproduced"))
        } else {
            Err(format!("{} of {checked} cells differ: {}", mismatches.len(), mismatches.join("; ")))
        }
    });
}

// ---------------------------------------------------------------------------
// 2. Channel epsilon
// ---------------------------------------------------------------------------

struct Audit {
    checked: usize,
    worst_excess: f64,
    failures: Vec<String>,
}

impl Audit {
    fn new() -> Self {
        Self {
            checked: 0,
            worst_excess: f64::NEG_INFINITY,
            failures: Vec::new(),
        }
    }

    fn check(&mut self, what: impl FnOnce() -> String, measured: f64, declared: f64) {
        self.checked += 1;
        let excess = measured - declared;
        self.worst_excess = self.worst_excess.max(excess);
        if !(measured <= declared + TOL) {
            self.failures.push(format!("{}: measured {measured} > declared {declared}", what()));
        }
    }

    fn finish(self, label: &str) -> Result<String, String> {
        if self.failures.is_empty() {
            Ok(format!(
                "{} {label} channels within declared epsilon (worst excess {:.3e})",
                self.checked, self.worst_excess
            ))
        } else {
            let shown: Vec<_> = self.failures.iter().take(5).cloned().collect();
            Err(format!(
                "{} of {} channels exceed the declared epsilon, e.g. {}",
                self.failures.len(),
                self.checked,
                shown.join("; ")
            ))
        }
    }
}

fn longitudinal_per_report(params: &TwoRoundParams, c: usize) -> ChannelMatrix {
    match params.kind {
        TwoRoundKind::LGrr { .. } => two_round_channel(params, c).unwrap(),
        // Bits are randomized independently in both rounds, so the per-report
        // channel is unary encoding with the chained bit rates. For c <= 8 it
        // is cross-checked against the explicit composition below.
        _ => {
            let ps = params.p1 * params.p2 + (1.0 - params.p1) * params.q2;
            let qs = params.q1 * params.p2 + (1.0 - params.q1) * params.q2;
            ue_channel(ps, qs, c).unwrap()
        }
    }
}

fn first_round_channel(params: &TwoRoundParams, c: usize) -> ChannelMatrix {
    match params.kind {
        TwoRoundKind::LGrr { .. } => grr_channel(params.p1, params.q1, c),
        _ => ue_channel(params.p1, params.q1, c).unwrap(),
    }
}

const BUDGET_PAIRS: [(f64, f64); 8] = [
    (0.5, 0.3),
    (1.0, 0.5),
    (1.0, 0.1),
    (2.0, 1.2),
    (2.0, 0.4),
    (4.0, 2.4),
    (4.0, 1.0),
    (3.0, 1.8),
];

#[test]
fn criterion_2a_channel_epsilon_protocols_and_strategies() {
    criterion("criterion 2a (channel epsilon, protocols and strategies)", Duration::from_secs(30), || {
        let mut audit = Audit::new();
        // One-round oracles, c up to 16.
        for eps in EPS_SET {
            for c in 2..=16 {
                for choice in [OracleChoice::Grr, OracleChoice::Sue, OracleChoice::Oue, OracleChoice::Adp] {
                    let p = oracle_params(choice, eps, c).map_err(|e| e.to_string())?;
                    let m = oracle_channel(&p, c).max_log_ratio();
                    audit.check(|| format!("{} c={c} eps={eps}", choice.name()), m, eps);
                }
            }
        }
        // Two-round protocols: memoized value within eps_inf, each report within eps_1.
        for (eps_inf, eps_1) in BUDGET_PAIRS {
            for c in 2..=16 {
                for protocol in LongitudinalProtocol::ALL {
                    let params = match longitudinal_params(protocol, eps_inf, eps_1, c) {
                        Ok(p) => p,
                        Err(ldplab_core::LdpError::Infeasible { .. }) => continue,
                        Err(e) => return Err(e.to_string()),
                    };
                    let name = protocol.name();
                    audit.check(
                        || format!("{name} first round c={c} ({eps_inf},{eps_1})"),
                        first_round_channel(&params, c).max_log_ratio(),
                        eps_inf,
                    );
                    let per_report = longitudinal_per_report(&params, c);
                    if protocol.is_unary() && c <= 8 {
                        let explicit = two_round_channel(&params, c).unwrap();
                        let gap = (0..c)
                            .flat_map(|v| (0..1usize << c).map(move |o| (v, o)))
                            .map(|(v, o)| (explicit.prob(v, o) - per_report.prob(v, o)).abs())
                            .fold(0.0, f64::max);
                        if gap > 1e-12 {
                            return Err(format!("{name} c={c}: chained-bit channel differs from composition by {gap}"));
                        }
                    }
                    audit.check(
                        || format!("{name} report c={c} ({eps_inf},{eps_1})"),
                        per_report.max_log_ratio(),
                        eps_1,
                    );
                }
            }
        }
        // Multidimensional strategies, d <= 3.
        let shapes: [&[usize]; 5] = [&[2, 3], &[3, 4], &[2, 2, 3], &[2, 3, 4], &[4, 4]];
        for domains in shapes {
            let d = domains.len();
            for eps in [0.5, 2f64.ln(), 1.0, 7f64.ln(), 4.0] {
                for choice in [OracleChoice::Grr, OracleChoice::Sue, OracleChoice::Oue, OracleChoice::Adp] {
                    let spl: Vec<ChannelMatrix> = domains
                        .iter()
                        .map(|&c| oracle_channel(&oracle_params(choice, eps / d as f64, c).unwrap(), c))
                        .collect();
                    audit.check(
                        || format!("Spl[{}] {domains:?} eps={eps}", choice.name()),
                        product_channel(&spl).max_log_ratio(),
                        eps,
                    );
                    let smp: Vec<ChannelMatrix> = domains
                        .iter()
                        .map(|&c| oracle_channel(&oracle_params(choice, eps, c).unwrap(), c))
                        .collect();
                    audit.check(
                        || format!("Smp[{}] {domains:?} eps={eps}", choice.name()),
                        sampled_channel(&smp).max_log_ratio(),
                        eps,
                    );
                }
                for variant in [RsfdVariant::Grr, RsfdVariant::OueZ, RsfdVariant::OueR, RsfdVariant::Adp] {
                    let config = MultidimConfig::new(domains.to_vec()).unwrap();
                    let plan = rsfd_plan(&config, eps, variant).map_err(|e| e.to_string())?;
                    for j in 0..d {
                        audit.check(
                            || format!("{} slot {j} {domains:?} eps={eps}", variant.name()),
                            rsfd_slot_marginal(&plan, j).max_log_ratio(),
                            eps,
                        );
                    }
                }
            }
            for (eps_inf, eps_1) in BUDGET_PAIRS {
                let mut strategies: Vec<(String, Vec<TwoRoundParams>)> = LongitudinalProtocol::ALL
                    .iter()
                    .filter_map(|&protocol| {
                        let ps: Result<Vec<_>, _> = domains
                            .iter()
                            .map(|&c| longitudinal_params(protocol, eps_inf, eps_1, c))
                            .collect();
                        ps.ok().map(|ps| (protocol.name().to_string(), ps))
                    })
                    .collect();
                strategies.push((
                    "ALLOMFREE".into(),
                    domains
                        .iter()
                        .map(|&c| allomfree_params(eps_inf, eps_1, c).unwrap())
                        .collect(),
                ));
                for (name, params) in strategies {
                    let first: Vec<ChannelMatrix> =
                        params.iter().zip(domains).map(|(p, &c)| first_round_channel(p, c)).collect();
                    audit.check(
                        || format!("sampled {name} memoized {domains:?} ({eps_inf},{eps_1})"),
                        sampled_channel(&first).max_log_ratio(),
                        eps_inf,
                    );
                    let reports: Vec<ChannelMatrix> =
                        params.iter().zip(domains).map(|(p, &c)| longitudinal_per_report(p, c)).collect();
                    audit.check(
                        || format!("sampled {name} report {domains:?} ({eps_inf},{eps_1})"),
                        sampled_channel(&reports).max_log_ratio(),
                        eps_1,
                    );
                }
            }
        }
        audit.finish("protocol/strategy")
    });
}

#[test]
fn criterion_2b_channel_epsilon_rsfd_full_tuple() {
    criterion("criterion 2b (channel epsilon, RS+FD full tuple)", Duration::from_secs(30), || {
        let mut audit = Audit::new();
        let shapes: [&[usize]; 5] = [&[2, 2], &[2, 3], &[3, 4], &[2, 2, 3], &[2, 3, 4]];
        for domains in shapes {
            let config = MultidimConfig::new(domains.to_vec()).unwrap();
            for eps in [0.5, 2f64.ln(), 3f64.ln(), 1.0, 7f64.ln(), 4.0] {
                for variant in [RsfdVariant::Grr, RsfdVariant::OueZ, RsfdVariant::OueR, RsfdVariant::Adp] {
                    let plan = rsfd_plan(&config, eps, variant).map_err(|e| e.to_string())?;
                    audit.check(
                        || format!("{} {domains:?} eps={eps}", variant.name()),
                        rsfd_tuple_channel(&plan).max_log_ratio(),
                        eps,
                    );
                }
            }
        }
        audit.finish("RS+FD tuple")
    });
}

// ---------------------------------------------------------------------------
// 3. Unbiasedness
// ---------------------------------------------------------------------------

#[test]
fn criterion_3_unbiasedness() {
    criterion("criterion 3 (unbiasedness)", Duration::from_secs(120), || {
        let mut worst_exact: f64 = 0.0;
        let n = 1000.0;
        let f = [0.5, 0.3, 0.2];
        let c = f.len();

        // Pure oracles by enumerated expectation.
        for eps in EPS_SET {
            for choice in [OracleChoice::Grr, OracleChoice::Sue, OracleChoice::Oue] {
                let p = oracle_params(choice, eps, c).unwrap();
                let counts = expected_counts(&oracle_channel(&p, c), p.kind.is_unary(), &f, n);
                let est = estimate_freq(&counts, n as u64, &p).map_err(|e| e.to_string())?;
                worst_exact = worst_exact.max(max_abs_diff(&est.freqs, &f));
            }
        }
        // Longitudinal estimator over the explicit two-round composition.
        for (eps_inf, eps_1) in BUDGET_PAIRS {
            for protocol in LongitudinalProtocol::ALL {
                let Ok(p) = longitudinal_params(protocol, eps_inf, eps_1, c) else { continue };
                let ch = two_round_channel(&p, c).unwrap();
                let counts = expected_counts(&ch, protocol.is_unary(), &f, n);
                let est = longitudinal_estimate(&counts, n as u64, &p).map_err(|e| e.to_string())?;
                worst_exact = worst_exact.max(max_abs_diff(&est.freqs, &f));
            }
        }
        // RS+FD estimators over the full tuple channel and a joint distribution.
        let domains = [2usize, 3];
        let joint = [0.1, 0.25, 0.05, 0.2, 0.3, 0.1]; // index = v0 + 2 v1
        let config = MultidimConfig::new(domains.to_vec()).unwrap();
        for eps in EPS_SET {
            for variant in [RsfdVariant::Grr, RsfdVariant::OueZ, RsfdVariant::OueR] {
                let plan = rsfd_plan(&config, eps, variant).unwrap();
                let ch = rsfd_tuple_channel(&plan);
                let outs: Vec<usize> = plan.iter().map(|s| slot_channel(s).outputs()).collect();
                let mut counts: Vec<Vec<f64>> = domains.iter().map(|&c| vec![0.0; c]).collect();
                for (x, &fx) in joint.iter().enumerate() {
                    for y in 0..ch.outputs() {
                        let w = n * fx * ch.prob(x, y);
                        for (j, yj) in digits(y, &outs).into_iter().enumerate() {
                            match plan[j].slot {
                                RsfdSlot::Grr => counts[j][yj] += w,
                                _ => (0..domains[j]).filter(|i| (yj >> i) & 1 == 1).for_each(|i| counts[j][i] += w),
                            }
                        }
                    }
                }
                let mut marginals = [vec![0.0; 2], vec![0.0; 3]];
                for (x, &fx) in joint.iter().enumerate() {
                    marginals[0][x % 2] += fx;
                    marginals[1][x / 2] += fx;
                }
                for j in 0..2 {
                    let est = rsfd_estimate(&counts[j], n as u64, &config, j, eps, variant).map_err(|e| e.to_string())?;
                    worst_exact = worst_exact.max(max_abs_diff(&est.freqs, &marginals[j]));
                }
            }
        }
        if worst_exact > 1e-12 {
            return Err(format!("enumerated expectation off by {worst_exact:e}"));
        }

        // Empirical: |f_hat - f| within 4 sigma at n = 2e5.
        let n = 200_000usize;
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let f5 = [0.4, 0.25, 0.15, 0.12, 0.08];
        let values: Vec<usize> = f5
            .iter()
            .enumerate()
            .flat_map(|(v, &fv)| std::iter::repeat_n(v, (fv * n as f64).round() as usize))
            .collect();
        assert_eq!(values.len(), n);
        let mut worst_z: f64 = 0.0;
        let mut checks = 0;
        for choice in [OracleChoice::Grr, OracleChoice::Sue, OracleChoice::Oue] {
            let p = oracle_params(choice, 1.0, 5).unwrap();
            let mut counts = [0u64; 5];
            for &v in &values {
                match perturb_value(v, 5, &p, &mut rng).unwrap() {
                    Report::Value(y) => counts[y] += 1,
                    Report::Unary(b) => b.ones().for_each(|i| counts[i] += 1),
                    _ => unreachable!(),
                }
            }
            let est = estimate_freq(&counts, n as u64, &p).unwrap();
            for (i, &fi) in f5.iter().enumerate() {
                let z = (est.freqs[i] - fi).abs() / variance_exact(&p, n as u64, fi).sqrt();
                worst_z = worst_z.max(z);
                checks += 1;
            }
        }
        for protocol in LongitudinalProtocol::ALL {
            let p = longitudinal_params(protocol, 2.0, 1.0, 5).unwrap();
            let mut counts = [0u64; 5];
            for &v in &values {
                let memo = memoize(v, 5, &p, &mut rng).unwrap();
                match report(&memo, &p, &mut rng).unwrap() {
                    Report::Value(y) => counts[y] += 1,
                    Report::Unary(b) => b.ones().for_each(|i| counts[i] += 1),
                    _ => unreachable!(),
                }
            }
            let est = longitudinal_estimate(&counts, n as u64, &p).unwrap();
            for (i, &fi) in f5.iter().enumerate() {
                let z = (est.freqs[i] - fi).abs() / longitudinal_variance(&p, n as u64, fi).sqrt();
                worst_z = worst_z.max(z);
                checks += 1;
            }
        }
        let domains = [2usize, 3, 5];
        let config = MultidimConfig::new(domains.to_vec()).unwrap();
        let data = uniform_exact(n, &domains);
        let truth = data.true_frequencies();
        for variant in [RsfdVariant::Grr, RsfdVariant::OueZ, RsfdVariant::OueR] {
            let eps = 2.0;
            let plan = rsfd_plan(&config, eps, variant).unwrap();
            let mut counts: Vec<Vec<u64>> = domains.iter().map(|&c| vec![0; c]).collect();
            for row in data.rows() {
                let rep = rsfd_client_with_plan(row, &plan, &mut rng).unwrap();
                for (j, r) in rep.per_attribute.iter().enumerate() {
                    match r {
                        Report::Value(y) => counts[j][*y] += 1,
                        Report::Unary(b) => b.ones().for_each(|i| counts[j][i] += 1),
                        _ => unreachable!(),
                    }
                }
            }
            for j in 0..domains.len() {
                let est = rsfd_estimate(&counts[j], n as u64, &config, j, eps, variant).unwrap();
                for (i, &fi) in truth[j].iter().enumerate() {
                    let sd = rsfd_variance(&config, j, eps, variant, n as u64, fi).unwrap().sqrt();
                    worst_z = worst_z.max((est.freqs[i] - fi).abs() / sd);
                    checks += 1;
                }
            }
        }
        if worst_z > 4.0 {
            return Err(format!("empirical deviation reached {worst_z:.2} sigma"));
        }
        Ok(format!(
            "exact bias <= {worst_exact:.1e}; {checks} empirical estimates within {worst_z:.2} sigma"
        ))
    });
}

// ---------------------------------------------------------------------------
// 4. Variance coherence
// ---------------------------------------------------------------------------

/// Expected MSE_avg of a strategy on a dataset, from each value's variance
/// at its true frequency. Strategies that sample one attribute per user
/// estimate the frequency within a random ~n/d sub-population, which adds
/// the sub-sampling variance `f (1 - f) (d - 1) / n` against the full data.
fn analytic_mse(spec: StrategySpec, eps: f64, eps_1: f64, data: &Dataset) -> (f64, f64) {
    let truth = data.true_frequencies();
    let d = data.d();
    let n = data.n() as u64;
    let config = data.config().unwrap();
    let (mut exact, mut approx) = (0.0, 0.0);
    for (j, fj) in truth.iter().enumerate() {
        let c = fj.len();
        let per_value: Vec<(f64, f64)> = fj
            .iter()
            .map(|&f| match spec {
                StrategySpec::Spl(choice) => {
                    let p = oracle_params(choice, eps / d as f64, c).unwrap();
                    (variance_exact(&p, n, f), variance_approx(&p, n))
                }
                StrategySpec::Smp(choice) => {
                    let p = oracle_params(choice, eps, c).unwrap();
                    let nj = n / d as u64;
                    (variance_exact(&p, nj, f), variance_approx(&p, nj))
                }
                StrategySpec::Rsfd(variant) => (
                    rsfd_variance(&config, j, eps, variant, n, f).unwrap(),
                    rsfd_variance(&config, j, eps, variant, n, 0.0).unwrap(),
                ),
                StrategySpec::Longitudinal(protocol) => {
                    let p = longitudinal_params(protocol, eps, eps_1, c).unwrap();
                    let nj = n / d as u64;
                    (longitudinal_variance(&p, nj, f), longitudinal_variance(&p, nj, 0.0))
                }
                StrategySpec::Allomfree => {
                    let p = allomfree_params(eps, eps_1, c).unwrap();
                    let nj = n / d as u64;
                    (longitudinal_variance(&p, nj, f), longitudinal_variance(&p, nj, 0.0))
                }
            })
            .collect();
        let sampled = matches!(
            spec,
            StrategySpec::Smp(_) | StrategySpec::Longitudinal(_) | StrategySpec::Allomfree
        );
        let sub_sampling: f64 = if sampled {
            fj.iter().map(|&f| f * (1.0 - f) * (d as f64 - 1.0) / n as f64).sum()
        } else {
            0.0
        };
        exact += (per_value.iter().map(|v| v.0).sum::<f64>() + sub_sampling) / c as f64;
        approx += per_value.iter().map(|v| v.1).sum::<f64>() / c as f64;
    }
    (exact / d as f64, approx / d as f64)
}

#[test]
fn criterion_4_variance_coherence() {
    criterion("criterion 4 (variance coherence)", Duration::from_secs(600), || {
        let n = 100_000;
        let runs = 100;
        let single = uniform_exact(n, &[10]);
        let multi = uniform_exact(n, &[10, 10, 10]);
        let families: Vec<(StrategySpec, f64, f64, &Dataset)> = vec![
            (StrategySpec::Spl(OracleChoice::Grr), 1.0, 0.0, &single),
            (StrategySpec::Spl(OracleChoice::Sue), 1.0, 0.0, &single),
            (StrategySpec::Spl(OracleChoice::Oue), 1.0, 0.0, &single),
            (StrategySpec::Longitudinal(LongitudinalProtocol::LGrr), 2.0, 1.0, &single),
            (StrategySpec::Longitudinal(LongitudinalProtocol::LSue), 2.0, 1.0, &single),
            (StrategySpec::Longitudinal(LongitudinalProtocol::LOue), 2.0, 1.0, &single),
            (StrategySpec::Longitudinal(LongitudinalProtocol::LOsue), 2.0, 1.0, &single),
            (StrategySpec::Longitudinal(LongitudinalProtocol::LSoue), 2.0, 1.0, &single),
            (StrategySpec::Spl(OracleChoice::Adp), 2.0, 0.0, &multi),
            (StrategySpec::Smp(OracleChoice::Adp), 2.0, 0.0, &multi),
            (StrategySpec::Rsfd(RsfdVariant::Grr), 2.0, 0.0, &multi),
            (StrategySpec::Rsfd(RsfdVariant::OueZ), 2.0, 0.0, &multi),
            (StrategySpec::Rsfd(RsfdVariant::OueR), 2.0, 0.0, &multi),
        ];
        let mut lines = Vec::new();
        let mut failures = Vec::new();
        for (k, (strategy, eps, eps_1, data)) in families.into_iter().enumerate() {
            let spec = ExperimentSpec {
                strategies: vec![strategy],
                eps_grid: Some(vec![eps]),
                eps1_fracs: vec![if eps_1 > 0.0 { eps_1 / eps } else { 0.5 }],
                runs,
                seed: 4000 + k as u64,
            };
            let res = run_experiment(data, &spec, Execution::Parallel).map_err(|e| e.to_string())?;
            let mean = res.runs.iter().map(|r| r.mse).sum::<f64>() / res.runs.len() as f64;
            let (exact, approx) = analytic_mse(strategy, eps, eps_1, data);
            let rel = (mean - exact).abs() / exact;
            let line = format!(
                "{strategy}: empirical {mean:.4e}, analytic {exact:.4e} (f=0 form {approx:.4e}), rel {:.1}%",
                100.0 * rel
            );
            if rel > 0.15 {
                failures.push(line.clone());
            }
            lines.push(line);
        }
        if failures.is_empty() {
            Ok(lines.join("; "))
        } else {
            Err(failures.join("; "))
        }
    });
}

// ---------------------------------------------------------------------------
// 5. Orderings
// ---------------------------------------------------------------------------

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sample_var(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

fn sweep(data: &Dataset, strategies: Vec<StrategySpec>, grid: Vec<f64>, fracs: Vec<f64>, runs: usize, seed: u64) -> Result<ExperimentResult, String> {
    let spec = ExperimentSpec {
        strategies,
        eps_grid: Some(grid),
        eps1_fracs: fracs,
        runs,
        seed,
    };
    run_experiment(data, &spec, Execution::Parallel).map_err(|e| e.to_string())
}

fn log_grid() -> Vec<f64> {
    (2..=7).map(|k| (k as f64).ln()).collect()
}

#[test]
fn criterion_5a_smp_beats_spl() {
    criterion("criterion 5a (Smp[ADP] beats Spl[ADP])", Duration::from_secs(600), || {
        let data = synth_uniform(50_000, &[10; 5], 51).map_err(|e| e.to_string())?;
        let smp = StrategySpec::Smp(OracleChoice::Adp);
        let spl = StrategySpec::Spl(OracleChoice::Adp);
        let res = sweep(&data, vec![smp, spl], log_grid(), vec![0.5], 100, 5)?;
        let mut wins = Vec::new();
        for eps in log_grid() {
            let (a, b) = (res.mse_at(smp, eps, None), res.mse_at(spl, eps, None));
            let w = a.iter().zip(&b).filter(|(x, y)| x < y).count();
            wins.push(w);
        }
        if wins.iter().all(|&w| w > 50) {
            Ok(format!("Smp wins {wins:?} of 100 runs per budget"))
        } else {
            Err(format!("Smp wins {wins:?} of 100 runs per budget; a majority is required everywhere"))
        }
    });
}

#[test]
fn criterion_5b_allomfree_ordering() {
    criterion("criterion 5b (ALLOMFREE vs L-SUE and L-OUE)", Duration::from_secs(600), || {
        let data = synth_uniform(100_000, &[2, 4, 8, 16, 32], 52).map_err(|e| e.to_string())?;
        let grid: Vec<f64> = (1..=8).map(|k| 0.5 * k as f64).collect();
        let all = StrategySpec::Allomfree;
        let sue = StrategySpec::Longitudinal(LongitudinalProtocol::LSue);
        let oue = StrategySpec::Longitudinal(LongitudinalProtocol::LOue);
        let res = sweep(&data, vec![all, sue, oue], grid.clone(), vec![0.6], 30, 6)?;
        let mut good = 0;
        let mut gains = Vec::new();
        for &e in &grid {
            let e1 = Some(0.6 * e);
            let (a, s, o) = (mean(&res.mse_at(all, e, e1)), mean(&res.mse_at(sue, e, e1)), mean(&res.mse_at(oue, e, e1)));
            if a.is_nan() || s.is_nan() || o.is_nan() {
                return Err(format!("missing results at eps_inf={e}"));
            }
            if a <= s && a <= o {
                good += 1;
            }
            gains.push(format!("{e}:{:.0}%", 100.0 * (1.0 - a / s.min(o))));
        }
        let share = good as f64 / grid.len() as f64;
        let msg = format!("ALLOMFREE best at {good}/{} points; gain over the better rival {}", grid.len(), gains.join(" "));
        if share >= 0.9 {
            Ok(msg)
        } else {
            Err(msg)
        }
    });
}

#[test]
fn criterion_5c_rsfd_adp_ordering() {
    criterion("criterion 5c (RS+FD[ADP] vs the worse of GRR/OUE-z)", Duration::from_secs(600), || {
        let data = synth_uniform(50_000, &[2, 4, 8, 16, 32], 53).map_err(|e| e.to_string())?;
        let adp = StrategySpec::Rsfd(RsfdVariant::Adp);
        let grr = StrategySpec::Rsfd(RsfdVariant::Grr);
        let ouez = StrategySpec::Rsfd(RsfdVariant::OueZ);
        let runs = 50;
        let res = sweep(&data, vec![adp, grr, ouez], log_grid(), vec![0.5], runs, 7)?;
        let mut failures = Vec::new();
        let mut margins = Vec::new();
        for e in log_grid() {
            let a = res.mse_at(adp, e, None);
            let (g, o) = (res.mse_at(grr, e, None), res.mse_at(ouez, e, None));
            let worse = if mean(&g) >= mean(&o) { &g } else { &o };
            let noise = 3.0 * ((sample_var(&a) + sample_var(worse)) / runs as f64).sqrt();
            let excess = mean(&a) - mean(worse);
            margins.push(format!("{e:.3}:{:.2}", excess / noise));
            if excess > noise {
                failures.push(format!("eps={e}: ADP {:.4e} vs worse {:.4e} (noise {noise:.2e})", mean(&a), mean(worse)));
            }
        }
        if failures.is_empty() {
            Ok(format!("(ADP - worse)/3SE per budget: {}", margins.join(" ")))
        } else {
            Err(failures.join("; "))
        }
    });
}

// ---------------------------------------------------------------------------
// 6. Privacy decay
// ---------------------------------------------------------------------------

#[test]
fn criterion_6_privacy_decay() {
    criterion("criterion 6 (privacy decay bound)", Duration::from_secs(1), || {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut evaluated = 0;
        for _ in 0..1000 {
            let eps_inf = rng.random_range(0.01..10.0);
            let eps_1 = eps_inf * rng.random_range(0.01..0.99);
            let mut prev = f64::NEG_INFINITY;
            for t in 1..=500u64 {
                let e = privacy_over_time(eps_inf, eps_1, t);
                let bound = eps_inf.min(t as f64 * eps_1);
                if e > bound + 1e-12 {
                    return Err(format!("eps_t={e} > {bound} at ({eps_inf}, {eps_1}), t={t}"));
                }
                if e < prev {
                    return Err(format!("eps_t decreases at ({eps_inf}, {eps_1}), t={t}: {prev} -> {e}"));
                }
                prev = e;
                evaluated += 1;
            }
        }
        Ok(format!("1000 budget pairs, {evaluated} (pair, t) points bounded and monotone"))
    });
}

// ---------------------------------------------------------------------------
// 7. Geo mechanism
// ---------------------------------------------------------------------------

#[test]
fn criterion_7_geo_mechanism() {
    criterion("criterion 7 (Lambert W and planar Laplace)", Duration::from_secs(60), || {
        let inv_e = (-1.0f64).exp();
        let mut worst: f64 = 0.0;
        for k in 0..10_000 {
            // Half log-spaced towards 0, half clustered at the branch point.
            let x = if k % 2 == 0 {
                -inv_e * 10f64.powf(-15.0 * (k as f64 / 10_000.0))
            } else {
                -inv_e * (1.0 - 10f64.powf(-12.0 * (k as f64 / 10_000.0)))
            };
            let w = lambert_w_minus1(x).map_err(|e| e.to_string())?;
            if w > -1.0 {
                return Err(format!("W(-1)({x}) = {w} above the branch point"));
            }
            worst = worst.max((w * w.exp() - x).abs());
        }
        if worst >= 1e-12 {
            return Err(format!("Lambert residual {worst:e}"));
        }
        let budget = GeoBudget::new(0.01).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 1_000_000;
        let mut radii: Vec<f64> = (0..n)
            .map(|_| {
                let (dx, dy) = planar_laplace_offset(budget, &mut rng);
                dx.hypot(dy)
            })
            .collect();
        radii.sort_by(f64::total_cmp);
        let ks = radii
            .iter()
            .enumerate()
            .map(|(i, &r)| {
                let cdf = planar_radius_cdf(r, budget);
                (cdf - i as f64 / n as f64).abs().max(((i + 1) as f64 / n as f64 - cdf).abs())
            })
            .fold(0.0, f64::max);
        if ks >= 0.01 {
            return Err(format!("KS distance {ks}"));
        }
        Ok(format!("Lambert residual {worst:.1e} over 1e4 points; radius KS {ks:.2e} at 1e6 samples"))
    });
}

// ---------------------------------------------------------------------------
// 8. Union-day routing
// ---------------------------------------------------------------------------

fn check_routing(presence: &[Vec<usize>], nb: usize) -> Result<(), String> {
    let routes = route_union_days(presence, nb).map_err(|e| e.to_string())?;
    let dbs = nb * (nb + 1) / 2;
    let mut routed: Vec<Vec<usize>> = vec![Vec::new(); dbs];
    for (u, user_routes) in routes.iter().enumerate() {
        for (_, targets) in user_routes {
            for &db in targets {
                routed[db].push(u);
            }
        }
    }
    for last in 1..=nb {
        for first in 1..=last {
            let db = last * (last - 1) / 2 + (last - first);
            let expected: BTreeSet<usize> = presence
                .iter()
                .enumerate()
                .filter(|(_, days)| days.iter().any(|&d| first <= d && d <= last))
                .map(|(u, _)| u)
                .collect();
            let got: BTreeSet<usize> = routed[db].iter().copied().collect();
            if got.len() != routed[db].len() {
                return Err(format!("database [{first},{last}] counts a user twice (Nb={nb})"));
            }
            if got != expected {
                return Err(format!("database [{first},{last}] users {got:?}, expected {expected:?} (Nb={nb})"));
            }
        }
    }
    Ok(())
}

#[test]
fn criterion_8_union_day_routing() {
    criterion("criterion 8 (union-day routing)", Duration::from_secs(5), || {
        let mut populations = 0;
        for nb in 1..=5usize {
            // Every presence pattern, one user each.
            let all: Vec<Vec<usize>> = (0..1usize << nb)
                .map(|mask| (1..=nb).filter(|d| (mask >> (d - 1)) & 1 == 1).collect())
                .collect();
            check_routing(&all, nb)?;
            populations += 1;
            // Random populations with repeated patterns.
            let mut rng = ChaCha8Rng::seed_from_u64(nb as u64);
            for _ in 0..200 {
                let users = rng.random_range(1..40);
                let pop: Vec<Vec<usize>> = (0..users)
                    .map(|_| {
                        let mask = rng.random_range(0..1usize << nb);
                        (1..=nb).filter(|d| (mask >> (d - 1)) & 1 == 1).collect()
                    })
                    .collect();
                check_routing(&pop, nb)?;
                populations += 1;
            }
        }
        Ok(format!("{populations} populations over Nb = 1..5 match the distinct-user oracle"))
    });
}

// ---------------------------------------------------------------------------
// 9. Determinism
// ---------------------------------------------------------------------------

fn csv_bytes(res: &ExperimentResult) -> (Vec<u8>, Vec<u8>) {
    let (mut runs, mut summary) = (Vec::new(), Vec::new());
    res.write_runs_csv(&mut runs).unwrap();
    res.write_summary_csv(&mut summary).unwrap();
    (runs, summary)
}

#[test]
fn criterion_9_determinism() {
    criterion("criterion 9 (determinism)", Duration::from_secs(300), || {
        let data = synth_uniform(5_000, &[3, 5, 8], 9).map_err(|e| e.to_string())?;
        let strategies = ["spl-adp", "smp-oue", "rsfd-adp", "rsfd-ouer", "l-oue", "l-osue", "allomfree"]
            .iter()
            .map(|s| s.parse().unwrap())
            .collect();
        let spec = ExperimentSpec {
            strategies,
            eps_grid: Some(vec![0.5, 1.0, 2.0]),
            eps1_fracs: vec![0.3, 0.9],
            runs: 4,
            seed: 99,
        };
        let serial = csv_bytes(&run_experiment(&data, &spec, Execution::Serial).map_err(|e| e.to_string())?);
        let parallel = csv_bytes(&run_experiment(&data, &spec, Execution::Parallel).map_err(|e| e.to_string())?);
        let again = csv_bytes(&run_experiment(&data, &spec, Execution::Parallel).map_err(|e| e.to_string())?);
        if serial != parallel || parallel != again {
            return Err("library result CSVs differ between executions".into());
        }

        // The CLI end to end, single-threaded and with a thread pool.
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let run_cli = |sub: &str, extra: &[&str], threads: &str| -> Result<(Vec<u8>, Vec<u8>), String> {
            let out = dir.path().join(sub);
            let status = std::process::Command::new(env!("CARGO_BIN_EXE_ldplab"))
                .args(["simulate", "--synth", "3000,3,4", "--strategy", "smp-adp,l-osue,rsfd-grr"])
                .args(["--eps-grid", "0.7,1.4", "--runs", "3", "--seed", "11", "--out"])
                .arg(&out)
                .args(extra)
                .env("RAYON_NUM_THREADS", threads)
                .output()
                .map_err(|e| e.to_string())?;
            if !status.status.success() {
                return Err(format!("cli failed: {}", String::from_utf8_lossy(&status.stderr)));
            }
            let read = |f: &str| std::fs::read(out.join(f)).map_err(|e| e.to_string());
            Ok((read("runs.csv")?, read("summary.csv")?))
        };
        let a = run_cli("serial", &["--serial"], "1")?;
        let b = run_cli("parallel", &[], "4")?;
        if a != b {
            return Err("CLI result CSVs differ between serial and parallel execution".into());
        }
        Ok(format!(
            "{} run rows and {} summary bytes identical across serial/parallel (library and CLI)",
            String::from_utf8_lossy(&serial.0).lines().count() - 1,
            serial.1.len()
        ))
    });
}
