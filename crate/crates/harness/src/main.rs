use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use ldplab::dataset::{load_csv_path, synth_uniform, Dataset};
use ldplab::experiment::{run_experiment, Execution, ExperimentSpec, Manifest, StrategySpec};
use ldplab::tables::{variance_table, write_table_csv, TableConfig};
use ldplab::{geo_sanitize, HarnessError, Result};
use ldplab_core::longitudinal::{
    allomfree_params, effective_single_report_epsilon, longitudinal_params, LongitudinalProtocol,
};
use ldplab_core::multidim::{oracle_params, OracleChoice};

#[derive(Parser)]
#[command(name = "ldplab", version, about = "Local differential privacy frequency-estimation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo MSE sweep over privacy budgets.
    Simulate {
        /// Categorical CSV with a header row.
        #[arg(long, conflicts_with = "synth", required_unless_present = "synth")]
        data: Option<PathBuf>,
        /// Uniform synthetic data as `n,d,c` (one domain for all attributes)
        /// or `n,d,c1,...,cd`.
        #[arg(long)]
        synth: Option<String>,
        /// Strategy names, comma separated (e.g. `smp-adp,spl-adp`).
        #[arg(long, value_delimiter = ',', required = true)]
        strategy: Vec<String>,
        #[arg(long, value_delimiter = ',')]
        eps_grid: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',', default_values_t = vec![0.3, 0.6])]
        eps1_frac: Vec<f64>,
        #[arg(long, default_value_t = 100)]
        runs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Seed of the synthetic dataset itself.
        #[arg(long, default_value_t = 0)]
        data_seed: u64,
        /// Output directory for runs.csv, summary.csv and manifest.json.
        #[arg(long)]
        out: PathBuf,
        /// Run on one thread (results are identical either way).
        #[arg(long)]
        serial: bool,
    },
    /// Closed-form variance tables of the one-round and longitudinal protocols.
    VarianceTable {
        /// Output CSV; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 10_000)]
        n: u64,
    },
    /// Planar Laplace obfuscation of a coordinate CSV at epsilon = l / r.
    GeoSanitize {
        #[arg(long)]
        l: f64,
        #[arg(long)]
        r: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print solved protocol parameters as JSON.
    Params {
        /// grr, sue, oue, adp, l-grr, l-sue, l-oue, l-osue, l-soue or allomfree.
        #[arg(long)]
        protocol: String,
        /// Budget; the lifetime budget for two-round protocols.
        #[arg(long)]
        eps: f64,
        /// Single-report budget of two-round protocols.
        #[arg(long)]
        eps1: Option<f64>,
        #[arg(long, default_value_t = 2)]
        c: usize,
    },
}

fn parse_synth(text: &str) -> Result<(usize, Vec<usize>)> {
    let nums: Vec<usize> = text
        .split(',')
        .map(|s| s.trim().parse())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| HarnessError::InvalidSpec(format!("--synth expects integers, got '{text}'")))?;
    match nums.as_slice() {
        [n, d, c] => Ok((*n, vec![*c; *d])),
        [n, d, cs @ ..] if cs.len() == *d => Ok((*n, cs.to_vec())),
        _ => Err(HarnessError::InvalidSpec(format!(
            "--synth expects n,d,c or n,d,c1,...,cd, got '{text}'"
        ))),
    }
}

fn simulate(
    data: Option<PathBuf>,
    synth: Option<String>,
    spec: ExperimentSpec,
    data_seed: u64,
    out: PathBuf,
    serial: bool,
) -> Result<()> {
    spec.validate()?;
    let (dataset, source): (Dataset, String) = match (data, synth) {
        (Some(path), _) => (load_csv_path(&path)?.0, path.display().to_string()),
        (None, Some(text)) => {
            let (n, domains) = parse_synth(&text)?;
            if n == 0 {
                return Err(HarnessError::InvalidSpec("synthetic dataset needs n >= 1".into()));
            }
            let ds = synth_uniform(n, &domains, data_seed).map_err(|e| HarnessError::InvalidSpec(e.to_string()))?;
            (ds, format!("synth:{text}:seed={data_seed}"))
        }
        (None, None) => return Err(HarnessError::InvalidSpec("one of --data or --synth is required".into())),
    };
    let execution = if serial { Execution::Serial } else { Execution::Parallel };
    let result = run_experiment(&dataset, &spec, execution)?;
    fs::create_dir_all(&out)?;
    result.write_runs_csv(BufWriter::new(File::create(out.join("runs.csv"))?))?;
    result.write_summary_csv(BufWriter::new(File::create(out.join("summary.csv"))?))?;
    let manifest = Manifest::new(&spec, &dataset, source);
    serde_json::to_writer_pretty(BufWriter::new(File::create(out.join("manifest.json"))?), &manifest)?;
    let infeasible = result.summary.iter().filter(|s| s.mean_mse.is_none()).count();
    eprintln!(
        "{} runs over {} grid points ({} infeasible) written to {}",
        result.runs.len(),
        result.summary.len(),
        infeasible,
        out.display()
    );
    Ok(())
}

fn params(protocol: &str, eps: f64, eps1: Option<f64>, c: usize) -> Result<serde_json::Value> {
    let one_round = match protocol.to_ascii_lowercase().as_str() {
        "grr" => Some(OracleChoice::Grr),
        "sue" => Some(OracleChoice::Sue),
        "oue" => Some(OracleChoice::Oue),
        "adp" => Some(OracleChoice::Adp),
        _ => None,
    };
    if let Some(choice) = one_round {
        let p = oracle_params(choice, eps, c)?;
        return Ok(json!({
            "protocol": p.kind.name(),
            "epsilon": p.epsilon,
            "c": c,
            "p": p.p,
            "q": p.q,
        }));
    }
    let eps_1 = eps1.ok_or_else(|| HarnessError::InvalidSpec("--eps1 is required for two-round protocols".into()))?;
    let solved = match protocol.parse::<StrategySpec>()? {
        StrategySpec::Longitudinal(p) => longitudinal_params(p, eps, eps_1, c),
        StrategySpec::Allomfree => allomfree_params(eps, eps_1, c),
        _ => return Err(HarnessError::InvalidSpec(format!("'{protocol}' is not a protocol"))),
    };
    let p = solved.map_err(|e| match e {
        ldplab_core::LdpError::Infeasible { protocol, reason } => {
            HarnessError::Infeasible(format!("{protocol}: {reason}"))
        }
        other => other.into(),
    })?;
    let exact = if p.kind.protocol() == LongitudinalProtocol::LGrr && c > ldplab_core::longitudinal::MAX_GRR_ENUMERATION {
        None
    } else {
        Some(effective_single_report_epsilon(&p, c)?)
    };
    Ok(json!({
        "protocol": p.kind.name(),
        "eps_inf": p.eps_inf,
        "eps_1": p.eps_1,
        "c": c,
        "p1": p.p1,
        "q1": p.q1,
        "p2": p.p2,
        "q2": p.q2,
        "single_report_epsilon": exact,
    }))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate {
            data,
            synth,
            strategy,
            eps_grid,
            eps1_frac,
            runs,
            seed,
            data_seed,
            out,
            serial,
        } => {
            let strategies = strategy
                .iter()
                .map(|s| s.parse())
                .collect::<Result<Vec<StrategySpec>>>()?;
            let spec = ExperimentSpec {
                strategies,
                eps_grid,
                eps1_fracs: eps1_frac,
                runs,
                seed,
            };
            simulate(data, synth, spec, data_seed, out, serial)
        }
        Command::VarianceTable { out, n } => {
            if n == 0 {
                return Err(HarnessError::InvalidSpec("n must be at least 1".into()));
            }
            let cells = variance_table(&TableConfig {
                n,
                ..Default::default()
            })?;
            match out {
                Some(path) => write_table_csv(&cells, BufWriter::new(File::create(path)?)),
                None => write_table_csv(&cells, io::stdout().lock()),
            }
        }
        Command::GeoSanitize { l, r, seed, input, out } => {
            let reader = File::open(&input)
                .map_err(|e| HarnessError::load(0, format!("{}: {e}", input.display())))?;
            let rows = geo_sanitize(BufReader::new(reader), BufWriter::new(File::create(&out)?), l, r, seed)?;
            eprintln!("{rows} rows written to {}", out.display());
            Ok(())
        }
        Command::Params { protocol, eps, eps1, c } => {
            let value = params(&protocol, eps, eps1, c)?;
            let mut stdout = io::stdout().lock();
            serde_json::to_writer_pretty(&mut stdout, &value)?;
            writeln!(stdout)?;
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        // A closed downstream pipe (e.g. `| head`) is not a failure.
        Err(HarnessError::Io(e)) if e.kind() == io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
        Err(HarnessError::Json(e)) if e.io_error_kind() == Some(io::ErrorKind::BrokenPipe) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
