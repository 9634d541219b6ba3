//! Seeded Monte Carlo sweeps over privacy budgets. Every (grid point, run)
//! pair owns an RNG stream derived from the base seed, so the result rows do
//! not depend on how the pairs are scheduled across threads.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{HarnessError, Result};
use ldplab_core::aggregator::{mse_avg, Strategy};
use ldplab_core::longitudinal::LongitudinalProtocol;
use ldplab_core::multidim::{MultidimConfig, OracleChoice, RsfdVariant};
use ldplab_core::LdpError;

/// A strategy family without its budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StrategySpec {
    Spl(OracleChoice),
    Smp(OracleChoice),
    Rsfd(RsfdVariant),
    Longitudinal(LongitudinalProtocol),
    Allomfree,
}

impl StrategySpec {
    pub const ALL_NAMES: [&'static str; 18] = [
        "spl-grr", "spl-sue", "spl-oue", "spl-adp", "smp-grr", "smp-sue", "smp-oue", "smp-adp", "rsfd-grr",
        "rsfd-ouez", "rsfd-ouer", "rsfd-adp", "l-grr", "l-sue", "l-oue", "l-osue", "l-soue", "allomfree",
    ];

    pub fn is_longitudinal(self) -> bool {
        matches!(self, StrategySpec::Longitudinal(_) | StrategySpec::Allomfree)
    }

    /// Budget grid used when none is given: ln 2..ln 7 for one-shot
    /// strategies, 0.5..4.0 in steps of 0.5 for `eps_inf` otherwise.
    pub fn default_grid(self) -> Vec<f64> {
        if self.is_longitudinal() {
            (1..=8).map(|k| 0.5 * k as f64).collect()
        } else {
            (2..=7).map(|k| (k as f64).ln()).collect()
        }
    }

    /// Concrete strategy; `eps_1` is only read by longitudinal ones.
    pub fn with_budget(self, epsilon: f64, eps_1: f64) -> Strategy {
        match self {
            StrategySpec::Spl(choice) => Strategy::Spl { epsilon, choice },
            StrategySpec::Smp(choice) => Strategy::Smp { epsilon, choice },
            StrategySpec::Rsfd(variant) => Strategy::Rsfd { epsilon, variant },
            StrategySpec::Longitudinal(protocol) => Strategy::Longitudinal {
                eps_inf: epsilon,
                eps_1,
                protocol,
            },
            StrategySpec::Allomfree => Strategy::Allomfree { eps_inf: epsilon, eps_1 },
        }
    }
}

impl fmt::Display for StrategySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let oracle = |c: &OracleChoice| match c {
            OracleChoice::Grr => "grr",
            OracleChoice::Sue => "sue",
            OracleChoice::Oue => "oue",
            OracleChoice::Adp => "adp",
        };
        match self {
            StrategySpec::Spl(c) => write!(f, "spl-{}", oracle(c)),
            StrategySpec::Smp(c) => write!(f, "smp-{}", oracle(c)),
            StrategySpec::Rsfd(v) => f.write_str(match v {
                RsfdVariant::Grr => "rsfd-grr",
                RsfdVariant::OueZ => "rsfd-ouez",
                RsfdVariant::OueR => "rsfd-ouer",
                RsfdVariant::Adp => "rsfd-adp",
            }),
            StrategySpec::Longitudinal(p) => f.write_str(&p.name().to_ascii_lowercase()),
            StrategySpec::Allomfree => f.write_str("allomfree"),
        }
    }
}

impl FromStr for StrategySpec {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        let oracle = |name: &str| match name {
            "grr" => Some(OracleChoice::Grr),
            "sue" => Some(OracleChoice::Sue),
            "oue" => Some(OracleChoice::Oue),
            "adp" => Some(OracleChoice::Adp),
            _ => None,
        };
        let lower = s.trim().to_ascii_lowercase();
        let parsed = match lower.split_once('-') {
            Some(("spl", o)) => oracle(o).map(StrategySpec::Spl),
            Some(("smp", o)) => oracle(o).map(StrategySpec::Smp),
            Some(("rsfd", v)) => match v {
                "grr" => Some(RsfdVariant::Grr),
                "ouez" | "oue-z" => Some(RsfdVariant::OueZ),
                "ouer" | "oue-r" => Some(RsfdVariant::OueR),
                "adp" => Some(RsfdVariant::Adp),
                _ => None,
            }
            .map(StrategySpec::Rsfd),
            Some(("l", _)) => LongitudinalProtocol::ALL
                .into_iter()
                .find(|p| p.name().eq_ignore_ascii_case(&lower))
                .map(StrategySpec::Longitudinal),
            _ if lower == "allomfree" => Some(StrategySpec::Allomfree),
            _ => None,
        };
        parsed.ok_or_else(|| {
            HarnessError::InvalidSpec(format!(
                "unknown strategy '{s}' (expected one of {})",
                Self::ALL_NAMES.join(", ")
            ))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub strategies: Vec<StrategySpec>,
    /// Overrides every strategy's default grid when present.
    pub eps_grid: Option<Vec<f64>>,
    /// `eps_1 / eps_inf` ratios swept for longitudinal strategies.
    pub eps1_fracs: Vec<f64>,
    pub runs: usize,
    pub seed: u64,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            strategies: Vec::new(),
            eps_grid: None,
            eps1_fracs: vec![0.3, 0.6],
            runs: 100,
            seed: 0,
        }
    }
}

/// One budget a strategy is evaluated at.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub strategy: StrategySpec,
    pub epsilon: f64,
    pub eps_1: Option<f64>,
    /// Position in the strategy's own grid; part of the seed derivation.
    pub index: usize,
}

impl GridPoint {
    pub fn strategy(&self) -> Strategy {
        self.strategy.with_budget(self.epsilon, self.eps_1.unwrap_or(self.epsilon))
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.strategies.is_empty() {
            return Err(HarnessError::InvalidSpec("no strategy given".into()));
        }
        if self.runs == 0 {
            return Err(HarnessError::InvalidSpec("runs must be at least 1".into()));
        }
        if let Some(grid) = &self.eps_grid {
            if grid.is_empty() {
                return Err(HarnessError::InvalidSpec("empty epsilon grid".into()));
            }
            if let Some(bad) = grid.iter().find(|e| !(e.is_finite() && **e > 0.0)) {
                return Err(HarnessError::InvalidSpec(format!("epsilon {bad} is not positive and finite")));
            }
        }
        if self.strategies.iter().any(|s| s.is_longitudinal()) {
            if self.eps1_fracs.is_empty() {
                return Err(HarnessError::InvalidSpec("empty eps1 fraction list".into()));
            }
            if let Some(bad) = self.eps1_fracs.iter().find(|f| !(**f > 0.0 && **f < 1.0)) {
                return Err(HarnessError::InvalidSpec(format!("eps1 fraction {bad} outside (0, 1)")));
            }
        }
        Ok(())
    }

    /// Every grid point, strategies in spec order, budgets in grid order.
    pub fn grid(&self) -> Vec<GridPoint> {
        let mut points = Vec::new();
        for &strategy in &self.strategies {
            let grid = self.eps_grid.clone().unwrap_or_else(|| strategy.default_grid());
            let fracs: Vec<Option<f64>> = if strategy.is_longitudinal() {
                self.eps1_fracs.iter().copied().map(Some).collect()
            } else {
                vec![None]
            };
            let mut index = 0;
            for frac in &fracs {
                for &epsilon in &grid {
                    points.push(GridPoint {
                        strategy,
                        epsilon,
                        eps_1: frac.map(|f| f * epsilon),
                        index,
                    });
                    index += 1;
                }
            }
        }
        points
    }
}

/// splitmix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of one run, a hash of the base seed, budget index and run index.
/// Strategies share seeds at equal indices, which pairs their runs.
pub fn run_seed(base: u64, eps_index: usize, run: usize) -> u64 {
    mix(mix(mix(base) ^ eps_index as u64) ^ run as u64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub strategy: String,
    pub epsilon: f64,
    pub eps1: Option<f64>,
    pub run: usize,
    pub mse: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PointStatus {
    Ok,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRecord {
    pub strategy: String,
    pub epsilon: f64,
    pub eps1: Option<f64>,
    pub runs: usize,
    pub mean_mse: Option<f64>,
    pub std_mse: Option<f64>,
    pub status: PointStatus,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub runs: Vec<RunRecord>,
    pub summary: Vec<SummaryRecord>,
}

impl ExperimentResult {
    pub fn write_runs_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for r in &self.runs {
            w.serialize(r)?;
        }
        if self.runs.is_empty() {
            w.write_record(["strategy", "epsilon", "eps1", "run", "mse", "seed"])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_summary_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for r in &self.summary {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Summary rows of one strategy, in grid order.
    pub fn summary_for(&self, strategy: StrategySpec) -> Vec<&SummaryRecord> {
        let name = strategy.to_string();
        self.summary.iter().filter(|r| r.strategy == name).collect()
    }

    /// Per-run MSEs of one grid point, in run order.
    pub fn mse_at(&self, strategy: StrategySpec, epsilon: f64, eps1: Option<f64>) -> Vec<f64> {
        let name = strategy.to_string();
        self.runs
            .iter()
            .filter(|r| r.strategy == name && r.epsilon == epsilon && r.eps1 == eps1)
            .map(|r| r.mse)
            .collect()
    }
}

/// Sidecar describing how a result set was produced.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest<'a> {
    pub tool: &'static str,
    pub version: &'static str,
    pub spec: &'a ExperimentSpec,
    pub dataset: DatasetInfo,
}

#[derive(Debug, Clone, Serialize)]
pub struct DatasetInfo {
    pub source: String,
    pub n: usize,
    pub names: Vec<String>,
    pub domains: Vec<usize>,
}

impl<'a> Manifest<'a> {
    pub fn new(spec: &'a ExperimentSpec, dataset: &Dataset, source: impl Into<String>) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            spec,
            dataset: DatasetInfo {
                source: source.into(),
                n: dataset.n(),
                names: dataset.names().to_vec(),
                domains: dataset.domains().to_vec(),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Serial,
    Parallel,
}

/// Simulate every user of `dataset` once under `strategy` and score the
/// estimates against the dataset's own frequencies.
pub fn simulate_once(
    dataset: &Dataset,
    config: &MultidimConfig,
    truth: &[Vec<f64>],
    strategy: &Strategy,
    seed: u64,
) -> std::result::Result<f64, LdpError> {
    let prepared = strategy.prepare(config)?;
    let mut acc = prepared.accumulator();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for row in dataset.rows() {
        acc.accumulate(&prepared.client(row, &mut rng)?)?;
    }
    let est: Vec<Vec<f64>> = prepared.estimate(&acc)?.into_iter().map(|e| e.freqs).collect();
    mse_avg(truth, &est)
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

/// Run the sweep. Infeasible budgets become `infeasible` summary rows
/// without runs; any other failure aborts.
pub fn run_experiment(dataset: &Dataset, spec: &ExperimentSpec, execution: Execution) -> Result<ExperimentResult> {
    spec.validate()?;
    let config = dataset.config()?;
    let truth = dataset.true_frequencies();
    let grid = spec.grid();

    // Solve parameters once per point so infeasibility is decided up front.
    let feasible: Vec<std::result::Result<(), String>> = grid
        .iter()
        .map(|pt| match pt.strategy().prepare(&config) {
            Ok(_) => Ok(()),
            Err(LdpError::Infeasible { protocol, reason }) => Err(format!("{protocol}: {reason}")),
            Err(e) => Err(format!("error: {e}")),
        })
        .collect();
    if let Some(Err(msg)) = feasible.iter().find(|f| matches!(f, Err(m) if m.starts_with("error: "))) {
        return Err(HarnessError::InvalidSpec(msg.clone()));
    }

    let tasks: Vec<(usize, usize)> = grid
        .iter()
        .enumerate()
        .filter(|(g, _)| feasible[*g].is_ok())
        .flat_map(|(g, _)| (0..spec.runs).map(move |r| (g, r)))
        .collect();
    let run_task = |&(g, run): &(usize, usize)| -> Result<(usize, RunRecord)> {
        let pt = &grid[g];
        let seed = run_seed(spec.seed, pt.index, run);
        let mse = simulate_once(dataset, &config, &truth, &pt.strategy(), seed)?;
        Ok((
            g,
            RunRecord {
                strategy: pt.strategy.to_string(),
                epsilon: pt.epsilon,
                eps1: pt.eps_1,
                run,
                mse,
                seed,
            },
        ))
    };
    let mut rows: Vec<(usize, RunRecord)> = match execution {
        Execution::Serial => tasks.iter().map(run_task).collect::<Result<_>>()?,
        Execution::Parallel => tasks.par_iter().map(run_task).collect::<Result<_>>()?,
    };
    rows.sort_by_key(|(g, r)| (*g, r.run));

    let mut summary = Vec::with_capacity(grid.len());
    for (g, pt) in grid.iter().enumerate() {
        let mses: Vec<f64> = rows.iter().filter(|(i, _)| *i == g).map(|(_, r)| r.mse).collect();
        let record = match &feasible[g] {
            Ok(()) => {
                let (mean, std) = mean_std(&mses);
                SummaryRecord {
                    strategy: pt.strategy.to_string(),
                    epsilon: pt.epsilon,
                    eps1: pt.eps_1,
                    runs: mses.len(),
                    mean_mse: Some(mean),
                    std_mse: Some(std),
                    status: PointStatus::Ok,
                    note: String::new(),
                }
            }
            Err(reason) => SummaryRecord {
                strategy: pt.strategy.to_string(),
                epsilon: pt.epsilon,
                eps1: pt.eps_1,
                runs: 0,
                mean_mse: None,
                std_mse: None,
                status: PointStatus::Infeasible,
                note: reason.clone(),
            },
        };
        summary.push(record);
    }
    Ok(ExperimentResult {
        runs: rows.into_iter().map(|(_, r)| r).collect(),
        summary,
    })
}
