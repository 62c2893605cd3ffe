use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use tiersense::classify::{ModelFile, NeuralDetector};
use tiersense::harness::{
    emit_report, run_experiment, verify_against_paper, ExperimentConfig, ReportFormat, RunResult,
    TraceSource,
};
use tiersense::station::{self, provision_home, Ingestor, SelfTest};
use tiersense::store::{EntityKind, Store};
use tiersense::{calibrate, generate_trace, write_trace, CalibrationTargets, EnergyParams, NodeConfig, Tier, TraceSpec};

#[derive(Parser)]
#[command(name = "tiersense", version, about = "Tiered body-sensor node simulator and ingestion station")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Accelerometer trace utilities.
    Traces {
        #[command(subcommand)]
        command: TracesCommand,
    },
    /// Run tiers over a trace and write the result as JSON.
    Simulate(SimulateArgs),
    /// Render a result file as a table or CSV.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value = "table")]
        format: FormatArg,
    },
    /// Check a reference result against the published figures.
    Verify {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Solve energy parameters from two measured operating points.
    Calibrate(CalibrateArgs),
    /// Train the neural fall detector and save it as a model file.
    Train {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the HTTP ingestion endpoint until interrupted.
    Serve {
        #[arg(long, env = "TIERSENSE_PORT", default_value_t = station::DEFAULT_PORT)]
        port: u16,
        #[arg(long, default_value = "0.0.0.0")]
        bind: String,
        #[arg(long)]
        store: PathBuf,
        /// Node address (16 hex digits) to register with a person, room and
        /// camera before serving. Repeatable.
        #[arg(long = "node")]
        nodes: Vec<String>,
        #[arg(long, default_value_t = 2.0)]
        risk_threshold: f64,
    },
    /// Post a probe record to a running endpoint.
    Selftest {
        #[arg(long, env = "TIERSENSE_PORT", default_value_t = station::DEFAULT_PORT)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
    },
    /// Export one entity of a store as CSV.
    Dump {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        entity: String,
        #[arg(long, required = true)]
        csv: bool,
    },
}

#[derive(Subcommand)]
enum TracesCommand {
    /// Generate a synthetic trace file.
    Gen(GenArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Profile {
    Reference,
    Custom,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Table,
    Csv,
}

impl From<FormatArg> for ReportFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Table => ReportFormat::Table,
            FormatArg::Csv => ReportFormat::Csv,
        }
    }
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, value_enum, default_value = "reference")]
    profile: Profile,
    #[arg(long)]
    duration_min: Option<f64>,
    #[arg(long)]
    interval_ms: Option<f64>,
    #[arg(long)]
    activity: Option<f64>,
    #[arg(long)]
    falls: Option<u32>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

impl GenArgs {
    fn spec(&self) -> Result<TraceSpec> {
        let base = match self.profile {
            Profile::Reference => {
                if self.duration_min.is_some()
                    || self.interval_ms.is_some()
                    || self.activity.is_some()
                    || self.falls.is_some()
                {
                    bail!("the reference profile is fixed; use --profile custom to set parameters");
                }
                return Ok(TraceSpec::reference());
            }
            Profile::Custom => TraceSpec::default(),
        };
        Ok(TraceSpec {
            duration_min: self.duration_min.unwrap_or(base.duration_min),
            sample_interval_ms: self.interval_ms.unwrap_or(base.sample_interval_ms),
            activity_fraction: self.activity.unwrap_or(base.activity_fraction),
            fall_count: self.falls.unwrap_or(base.fall_count),
            ..base
        })
    }
}

#[derive(Args)]
struct SimulateArgs {
    /// Tiers to run: 1, 2, 3 or neural. Repeatable or comma separated.
    #[arg(long = "tier", value_delimiter = ',', default_values_t = vec!["1".to_string(), "2".into(), "3".into()])]
    tiers: Vec<String>,
    #[arg(long, conflicts_with = "profile")]
    trace: Option<PathBuf>,
    #[arg(long, value_enum)]
    profile: Option<Profile>,
    #[arg(long, default_value_t = 3)]
    runs: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Parameter file, or `paper` for the calibrated preset.
    #[arg(long, default_value = "paper")]
    params: String,
    /// Trained model file for the neural tier.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    store: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CalibrateArgs {
    #[arg(long)]
    p1: f64,
    #[arg(long)]
    p2: f64,
    #[arg(long)]
    ntx1: f64,
    #[arg(long)]
    ntx2: f64,
    #[arg(long, default_value_t = 0.8)]
    share: f64,
    #[arg(long, default_value_t = 0.5)]
    split: f64,
    #[arg(long)]
    out: PathBuf,
}

fn load_params(arg: &str) -> Result<(EnergyParams, String)> {
    if arg == "paper" || arg == "paper_calibrated" {
        return Ok((EnergyParams::paper_calibrated(), "paper_calibrated".into()));
    }
    let params = EnergyParams::load(arg).with_context(|| format!("loading parameters from {arg}"))?;
    let label = Path::new(arg)
        .file_stem()
        .map_or_else(|| arg.to_string(), |s| s.to_string_lossy().into_owned());
    Ok((params, label))
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let tiers = args
        .tiers
        .iter()
        .map(|t| t.parse::<Tier>().map_err(anyhow::Error::msg))
        .collect::<Result<Vec<_>>>()?;
    let trace = match (&args.trace, args.profile) {
        (Some(p), _) => TraceSource::File(p.clone()),
        (None, Some(Profile::Custom)) => bail!("--profile custom needs a trace file; generate one with `traces gen`"),
        (None, _) => TraceSource::reference(),
    };
    let detector = match &args.model {
        Some(p) => Some(
            ModelFile::load(p)
                .and_then(ModelFile::into_detector)
                .with_context(|| format!("loading model {}", p.display()))?,
        ),
        None if tiers.contains(&Tier::Neural) => bail!("--tier neural needs --model"),
        None => None,
    };
    let (params, params_label) = load_params(&args.params)?;
    let cfg = ExperimentConfig {
        trace,
        tiers,
        runs: args.runs,
        base_seed: args.seed,
        params,
        params_label,
        node: NodeConfig::default(),
        store_dir: args.store,
        detector,
    };
    let result = run_experiment(&cfg)?;
    result.save(&args.out)?;
    print!("{}", emit_report(&result, ReportFormat::Table));
    Ok(())
}

fn verify(input: &Path) -> Result<bool> {
    let result = RunResult::load(input).with_context(|| format!("reading {}", input.display()))?;
    let checks = verify_against_paper(&result);
    for c in &checks {
        println!("{c}");
    }
    Ok(checks.iter().all(|c| c.pass))
}

fn serve(port: u16, bind: &str, store_dir: &Path, nodes: &[String], risk: f64) -> Result<()> {
    let mut store = Store::open(store_dir)?;
    for n in nodes {
        if n.len() != 16 {
            bail!("node address {n:?} must be 16 hex digits");
        }
        let addr = u64::from_str_radix(n, 16).with_context(|| format!("node address {n:?}"))?;
        provision_home(&mut store, addr)?;
    }
    let handle = station::serve((bind, port), Ingestor::new(store, risk))
        .with_context(|| format!("binding {bind}:{port}"))?;
    eprintln!("listening on {}", handle.addr());
    handle.wait();
    Ok(())
}

fn dump(store_dir: &Path, entity: &str) -> Result<()> {
    if !store_dir.join("MANIFEST").exists() {
        bail!("{} is not a store directory", store_dir.display());
    }
    let kind: EntityKind = entity.parse().map_err(anyhow::Error::msg)?;
    let store = Store::open(store_dir)?;
    let stdout = io::stdout();
    store.dump_csv(kind, stdout.lock())?;
    Ok(())
}

/// `Ok(false)` means the command ran but a check failed.
fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Traces {
            command: TracesCommand::Gen(args),
        } => {
            let spec = args.spec()?;
            let trace = generate_trace(&spec, args.seed)?;
            write_trace(&trace, &args.out)?;
            eprintln!("wrote {} samples to {}", trace.len(), args.out.display());
        }
        Command::Simulate(args) => simulate(args)?,
        Command::Report { input, format } => {
            let result = RunResult::load(&input).with_context(|| format!("reading {}", input.display()))?;
            let text = emit_report(&result, format.into());
            io::stdout().write_all(text.as_bytes())?;
        }
        Command::Verify { input } => return verify(&input),
        Command::Calibrate(a) => {
            let params = calibrate(&CalibrationTargets {
                p1_w: a.p1,
                p2_w: a.p2,
                n_tx1: a.ntx1,
                n_tx2: a.ntx2,
                comm_share: a.share,
                cpu_split: a.split,
            })?;
            params.save(&a.out)?;
            print!("{}", params.to_text());
        }
        Command::Train { seed, out } => {
            let (detector, outcome) = NeuralDetector::train_default(seed)?;
            ModelFile::from(&detector).save(&out)?;
            eprintln!(
                "trained {} epochs, mse {:.5}; saved {}",
                outcome.epochs,
                outcome.mse,
                out.display()
            );
        }
        Command::Serve {
            port,
            bind,
            store,
            nodes,
            risk_threshold,
        } => serve(port, &bind, &store, &nodes, risk_threshold)?,
        Command::Selftest { port, host } => {
            let outcome = station::self_test(&format!("{host}:{port}"));
            println!("{outcome}");
            return Ok(outcome == SelfTest::Success);
        }
        Command::Dump { store, entity, csv: _ } => dump(&store, &entity)?,
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn reference_profile_rejects_overrides() {
        let cli = Cli::try_parse_from(["tiersense", "traces", "gen", "--falls", "2", "--out", "x.csv"]).unwrap();
        let Command::Traces { command: TracesCommand::Gen(args) } = cli.command else {
            panic!("wrong subcommand");
        };
        assert!(args.spec().is_err());
    }

    #[test]
    fn preset_name_resolves() {
        let (p, label) = load_params("paper").unwrap();
        assert_eq!(p, EnergyParams::paper_calibrated());
        assert_eq!(label, "paper_calibrated");
    }
}
