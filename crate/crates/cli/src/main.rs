use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use semicov_core::harness::{
    compute_beta, run_assumption_audit, run_clt, run_estimate, run_independence_diagnostic, run_wlln, simulate_path,
    BetaComputation, Experiment, ExperimentConfig, McReport, SCHEMA_VERSION,
};

/// Exit status when every assertion row passed.
const EXIT_PASS: u8 = 0;
/// Exit status when at least one assertion row failed.
const EXIT_ASSERTION: u8 = 1;
/// Exit status for invalid input or a runtime error.
const EXIT_ERROR: u8 = 2;

#[derive(Parser, Debug)]
#[command(name = "semicov", version, about = "Realised semicovariance of Brownian semistationary processes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Experiment configuration (TOML).
    config: PathBuf,
    /// Overrides the configured base seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 0 uses every available core.
    #[arg(long, env = "SEMICOV_THREADS", default_value_t = 0)]
    threads: usize,
    /// Output directory; defaults to the configured one, then `out`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulates paths and writes one CSV per replicate and frequency.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Number of paths per frequency.
        #[arg(long, default_value_t = 1)]
        paths: u64,
    },
    /// Evaluates the configured functional on simulated replicates.
    Estimate {
        #[command(flatten)]
        common: Common,
    },
    /// Computes the limiting variance constant of the configured functional.
    ComputeBeta {
        #[command(flatten)]
        common: Common,
    },
    /// Runs a univariate, bivariate or generalised CLT experiment.
    VerifyClt {
        #[command(flatten)]
        common: Common,
    },
    /// Runs the law-of-large-numbers experiment.
    VerifyWlln {
        #[command(flatten)]
        common: Common,
    },
    /// Measures the covariance between the core and the centred statistic.
    DiagnoseIndependence {
        #[command(flatten)]
        common: Common,
    },
    /// Checks the configured kernels against the model assumptions.
    AuditAssumptions {
        #[command(flatten)]
        common: Common,
    },
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Simulate { common, .. }
            | Command::Estimate { common }
            | Command::ComputeBeta { common }
            | Command::VerifyClt { common }
            | Command::VerifyWlln { common }
            | Command::DiagnoseIndependence { common }
            | Command::AuditAssumptions { common } => common,
        }
    }
}

fn load(common: &Common) -> anyhow::Result<(ExperimentConfig, PathBuf)> {
    let mut cfg =
        ExperimentConfig::load(&common.config).with_context(|| format!("reading {}", common.config.display()))?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    let out = common.out.clone().or_else(|| cfg.output_dir.clone()).unwrap_or_else(|| PathBuf::from("out"));
    cfg.output_dir = None;
    Ok((cfg, out))
}

/// Forces `experiment` for subcommands that fix it.
fn with_experiment(mut cfg: ExperimentConfig, experiment: Experiment) -> ExperimentConfig {
    cfg.experiment = experiment;
    cfg
}

fn print_report(report: &McReport, csv: &Path, json: &Path) {
    println!("{} (config {}, seed {})", report.experiment.name(), &report.config_hash[..12], report.seed);
    println!("{:<28} {:>7} {:>14} {:>14} {:>8}  result", "check", "n", "estimate", "target", "z");
    for row in &report.rows {
        let z = row.z.map(|z| format!("{z:.2}")).unwrap_or_else(|| "-".into());
        let result = match (row.assertion, row.pass) {
            (true, true) => "PASS",
            (true, false) => "FAIL",
            (false, _) => "info",
        };
        println!("{:<28} {:>7} {:>14.6} {:>14.6} {:>8}  {result}", row.check, row.n, row.estimate, row.target, z);
    }
    println!("wrote {} and {}", csv.display(), json.display());
}

fn finish(report: &McReport, dir: &Path, name: &str) -> anyhow::Result<u8> {
    let (csv, json) = report.write_outputs_as(dir, name)?;
    print_report(report, &csv, &json);
    Ok(if report.passed() { EXIT_PASS } else { EXIT_ASSERTION })
}

#[derive(Serialize)]
struct BetaSummary<'a> {
    schema_version: u32,
    config_hash: String,
    beta: f64,
    warning: Option<&'a str>,
    report: semicov_core::asymptotics::BetaReport,
    detail: &'a BetaComputation,
}

fn write_beta(cfg: &ExperimentConfig, dir: &Path) -> anyhow::Result<u8> {
    let beta = compute_beta(cfg)?;
    std::fs::create_dir_all(dir)?;
    let json_path = dir.join("beta_summary.json");
    let summary = BetaSummary {
        schema_version: SCHEMA_VERSION,
        config_hash: cfg.hash(),
        beta: beta.beta(),
        warning: beta.warning(),
        report: beta.report(),
        detail: &beta,
    };
    serde_json::to_writer_pretty(std::fs::File::create(&json_path)?, &summary)?;
    let csv_path = dir.join("beta_terms.csv");
    let mut w = csv::Writer::from_path(&csv_path)?;
    match &beta {
        BetaComputation::Univariate { result, .. } => {
            w.write_record(["k", "contribution", "partial_sum"])?;
            for (k, (c, s)) in result.contributions.iter().zip(result.partial_sums()).enumerate() {
                w.write_record([(k + 1).to_string(), format!("{c:.17e}"), format!("{s:.17e}")])?;
            }
        }
        BetaComputation::Bivariate { result } => {
            w.write_record(["lag", "covariance"])?;
            for (k, c) in result.covariances.iter().enumerate() {
                w.write_record([k.to_string(), format!("{c:.17e}")])?;
            }
        }
    }
    w.flush()?;
    println!("beta = {:.10}", beta.beta());
    if let Some(msg) = beta.warning() {
        println!("warning: {msg}");
    }
    println!("wrote {} and {}", csv_path.display(), json_path.display());
    Ok(EXIT_PASS)
}

fn write_paths(cfg: &ExperimentConfig, dir: &Path, paths: u64) -> anyhow::Result<u8> {
    if paths == 0 {
        bail!("--paths must be at least 1");
    }
    std::fs::create_dir_all(dir)?;
    #[derive(Serialize)]
    struct PathSummary {
        schema_version: u32,
        config_hash: String,
        seed: u64,
        files: Vec<PathBuf>,
    }
    let mut files = Vec::new();
    for &n in &cfg.n_grid {
        for rep in 0..paths {
            let path = simulate_path(cfg, n, rep)?;
            let file = dir.join(format!("path_n{n}_rep{rep}.csv"));
            path.write_csv(std::fs::File::create(&file)?)?;
            files.push(file);
        }
    }
    let json = dir.join("simulate_summary.json");
    let summary = PathSummary { schema_version: SCHEMA_VERSION, config_hash: cfg.hash(), seed: cfg.seed, files };
    serde_json::to_writer_pretty(std::fs::File::create(&json)?, &summary)?;
    println!("wrote {} path files and {}", summary.files.len(), json.display());
    Ok(EXIT_PASS)
}

fn run(cli: Cli) -> anyhow::Result<u8> {
    let common = cli.command.common();
    if common.threads > 0 {
        rayon::ThreadPoolBuilder::new().num_threads(common.threads).build_global()?;
    }
    let (cfg, out) = load(common)?;
    match &cli.command {
        Command::Simulate { paths, .. } => write_paths(&cfg, &out, *paths),
        Command::Estimate { .. } => finish(&run_estimate(&cfg)?, &out, "estimate"),
        Command::ComputeBeta { .. } => write_beta(&cfg, &out),
        Command::VerifyClt { .. } => {
            if !cfg.is_clt() {
                bail!("verify-clt needs experiment = univariate-clt, bivariate-clt or generalised-clt");
            }
            let report = run_clt(&cfg)?;
            finish(&report, &out, report.experiment.name())
        }
        Command::VerifyWlln { .. } => finish(&run_wlln(&with_experiment(cfg, Experiment::Wlln))?, &out, "wlln"),
        Command::DiagnoseIndependence { .. } => finish(
            &run_independence_diagnostic(&with_experiment(cfg, Experiment::IndependenceDiagnostic))?,
            &out,
            "independence-diagnostic",
        ),
        Command::AuditAssumptions { .. } => {
            finish(&run_assumption_audit(&with_experiment(cfg, Experiment::AssumptionAudit))?, &out, "assumption-audit")
        }
    }
}

fn main() -> ExitCode {
    env_logger::init();
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}
