use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nonlocal_lab::Error;
use nonlocal_labcli::scenarios::{self, Outcome};
use nonlocal_labcli::selfcheck::selfcheck;
use nonlocal_labcli::{Report, ScenarioConfig, ScenarioKind};

#[derive(Parser)]
#[command(name = "labcli", version, about = "Run nonlocal regularity experiments")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct Common {
    /// Scenario config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads, 0 = all cores.
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

#[derive(Subcommand)]
enum Cmd {
    /// Evolve the configured problem and analyze it.
    Simulate(Common),
    /// Analyze an exported trajectory CSV.
    Analyze {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        trajectory: PathBuf,
    },
    /// Blow-down oscillation diagnostic.
    Liouville(Common),
    /// Distance to the second-order operator as sigma -> 2.
    Limit2(Common),
    /// Operator rescaling relation and ellipticity sandwich.
    Scalecheck(Common),
    /// Built-in invariant suites.
    Selfcheck(Common),
}

enum Failure {
    Lab(Error),
    Usage(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lab(e)
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Cfl { .. }
        | Error::NonFinite { .. }
        | Error::Divergence(_)
        | Error::Quadrature(_)
        | Error::Estimation(_) => 3,
        _ => 2,
    }
}

fn load(c: &Common, expect: Option<ScenarioKind>) -> Result<(ScenarioConfig, PathBuf), Failure> {
    let path = c
        .config
        .as_ref()
        .ok_or_else(|| Failure::Usage("--config is required".into()))?;
    let cfg = ScenarioConfig::load(path, c.seed)?;
    if let Some(k) = expect {
        if cfg.scenario != k {
            return Err(Failure::Usage(format!(
                "config is a {} scenario, expected {}",
                cfg.scenario.as_str(),
                k.as_str()
            )));
        }
    }
    let dir = c.out.clone().unwrap_or_else(|| cfg.output.dir.clone());
    Ok((cfg, dir))
}

fn print(report: &Report, files: &[PathBuf]) {
    for c in &report.checks {
        let tag = if c.passed { "ok  " } else { "FAIL" };
        let rel = match c.relation {
            nonlocal_labcli::report::Relation::AtMost => "<=",
            nonlocal_labcli::report::Relation::AtLeast => ">=",
        };
        println!("{tag} {} = {:.6e} {rel} {:.6e}", c.name, c.value, c.threshold);
    }
    for f in files {
        println!("wrote {}", f.display());
    }
    println!("{}", if report.passed { "PASS" } else { "FAIL" });
}

fn run(cli: Cli) -> Result<bool, Failure> {
    let threads = match &cli.cmd {
        Cmd::Simulate(c) | Cmd::Liouville(c) | Cmd::Limit2(c) | Cmd::Scalecheck(c) | Cmd::Selfcheck(c) => c.threads,
        Cmd::Analyze { common, .. } => common.threads,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Failure::Usage(format!("thread pool: {e}")))?;
    let outcome: Outcome = match &cli.cmd {
        Cmd::Simulate(c) => {
            let (cfg, dir) = load(c, None)?;
            scenarios::simulate(&cfg, &dir)?
        }
        Cmd::Analyze { common, trajectory } => {
            let (cfg, dir) = load(common, None)?;
            scenarios::analyze(&cfg, trajectory, &dir)?
        }
        Cmd::Liouville(c) => {
            let (cfg, dir) = load(c, Some(ScenarioKind::Liouville))?;
            scenarios::run_liouville(&cfg, &dir)?
        }
        Cmd::Limit2(c) => {
            let (cfg, dir) = load(c, Some(ScenarioKind::Sigma2Limit))?;
            scenarios::run_sigma2_limit(&cfg, &dir)?
        }
        Cmd::Scalecheck(c) => {
            let (cfg, dir) = load(c, Some(ScenarioKind::ScalingCheck))?;
            scenarios::run_scaling_check(&cfg, &dir)?
        }
        Cmd::Selfcheck(c) => {
            let report = selfcheck(c.seed.unwrap_or(0))?;
            let mut files = Vec::new();
            if let Some(dir) = &c.out {
                report.write(dir, "selfcheck")?;
                files.push(dir.join("selfcheck.report.json"));
            }
            Outcome { report, files }
        }
    };
    print(&outcome.report, &outcome.files);
    Ok(outcome.report.passed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Lab(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
