//! The `dpw` command line: sampling, accounting, simulation, cost and DP-SGD
//! runs, each writing its output file plus a `<output>.manifest.json`.
//!
//! Exit codes: 0 success, 2 configuration or validation error, 3 calibration
//! failure, 4 numerical failure.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::accounting::{
    calibrate_sigma, compose, dpsgd_curve, to_eps_delta, AccountingError, Calibration, RdpCurve,
    SubsampledGaussianParams,
};
use crate::accounting::default_orders;
use crate::costmodel::{method_cost_report, round_cents, CostError, MethodDescriptor, PricingTable};
use crate::dpsgd::{train, DpSgdConfig, DpSgdError, ToyDataset};
use crate::mechanisms::{
    exponential_mechanism, gnmax, gumbel_topk, limited_domain_max, ptr_topk, report_noisy_max, LimitedDomainOutcome,
    MechanismError, NoisyMaxNoise, PrivacyBudget, PtrOutcome, ScoreVector, Sensitivity, VoteHistogram,
};
use crate::rng::RngStream;
use crate::simharness::{simulate, simulate_with_threads, ScenarioConfig, SimError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_CALIBRATION: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "dpw", version, about = "Differential-privacy workbench")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw samples from a selection mechanism.
    Mech {
        #[command(subcommand)]
        command: MechCommand,
    },
    /// Privacy accounting.
    Account {
        #[command(subcommand)]
        command: AccountCommand,
    },
    /// Trace a privacy-utility curve for a simulated scenario.
    Sim(SimArgs),
    /// API and GPU cost estimates.
    Cost {
        #[command(subcommand)]
        command: CostCommand,
    },
    /// Train the toy model with DP-SGD.
    Dpsgd(DpsgdArgs),
}

#[derive(Debug, Subcommand)]
pub enum MechCommand {
    Sample(SampleArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum MechKind {
    Em,
    RnmLaplace,
    RnmGaussian,
    Gumbel,
    Gnmax,
    Ptr,
    Lda,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long = "mech", value_enum)]
    pub mech: MechKind,
    /// Comma-separated utility scores (em, gumbel).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub scores: Option<Vec<f64>>,
    /// Comma-separated vote counts (rnm-*, gnmax, ptr, lda).
    #[arg(long, value_delimiter = ',')]
    pub counts: Option<Vec<u64>>,
    #[arg(long, default_value_t = 1.0)]
    pub sens: f64,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Laplace scale for rnm-laplace; defaults to 1/eps.
    #[arg(long)]
    pub scale: Option<f64>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub kbar: Option<usize>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub n: u64,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum AccountCommand {
    /// Smallest σ whose DP-SGD ε lands in (0.99·eps, eps].
    Calibrate(CalibrateArgs),
    /// ε at δ for a subsampled Gaussian run, a calibration report or an RDP curve.
    Convert(ConvertArgs),
    /// Sum RDP curves order by order.
    Compose(ComposeArgs),
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[arg(long)]
    pub eps: f64,
    #[arg(long)]
    pub delta: f64,
    #[arg(long)]
    pub q: f64,
    #[arg(long)]
    pub steps: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ConvertArgs {
    /// Calibration report written by `account calibrate`.
    #[arg(long, conflicts_with_all = ["sigma", "curve"])]
    pub from: Option<PathBuf>,
    /// RDP curve JSON (`orders`, `values`).
    #[arg(long, conflicts_with = "sigma")]
    pub curve: Option<PathBuf>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub q: Option<f64>,
    #[arg(long)]
    pub steps: Option<u64>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ComposeArgs {
    #[arg(long = "curve", required = true)]
    pub curves: Vec<PathBuf>,
    /// Also convert the composed curve at this δ.
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Worker threads for trials; results do not depend on it.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum CostCommand {
    Estimate(CostArgs),
}

#[derive(Debug, Args)]
pub struct CostArgs {
    /// Pricing table; the shipped table when omitted.
    #[arg(long)]
    pub pricing: Option<PathBuf>,
    #[arg(long)]
    pub workload: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DpsgdArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

/// A failed command and its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn config(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_CONFIG,
            message: message.into(),
        }
    }
}

impl From<MechanismError> for CliError {
    fn from(e: MechanismError) -> Self {
        CliError::config(e.to_string())
    }
}

impl From<AccountingError> for CliError {
    fn from(e: AccountingError) -> Self {
        let code = match e {
            AccountingError::Calibration(_) => EXIT_CALIBRATION,
            AccountingError::InvalidInput(_) => EXIT_CONFIG,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

impl From<CostError> for CliError {
    fn from(e: CostError) -> Self {
        CliError::config(e.to_string())
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Accounting(a) => a.into(),
            SimError::Csv(_) => CliError {
                code: EXIT_NUMERICAL,
                message: e.to_string(),
            },
            other => CliError::config(other.to_string()),
        }
    }
}

impl From<DpSgdError> for CliError {
    fn from(e: DpSgdError) -> Self {
        match e {
            DpSgdError::Divergence { .. } => CliError {
                code: EXIT_NUMERICAL,
                message: e.to_string(),
            },
            DpSgdError::Accounting(a) => a.into(),
            other => CliError::config(other.to_string()),
        }
    }
}

/// Written next to every output file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_paths: Vec<String>,
    pub seed: Option<u64>,
    pub output: String,
    pub tool_version: String,
    pub wall_clock_seconds: f64,
}

pub fn manifest_path(output: &Path) -> PathBuf {
    let mut name = output.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    output.with_file_name(name)
}

/// Writes `bytes` to a temporary file in the target directory, then renames it.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let fail = |e: std::io::Error| CliError::config(format!("cannot write {}: {e}", path.display()));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(fail)?;
    tmp.write_all(bytes).map_err(fail)?;
    tmp.persist(path).map_err(|e| fail(e.error))?;
    Ok(())
}

fn read_file(path: &Path, what: &str) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::config(format!("{what}: cannot read {}: {e}", path.display())))
}

fn parse_json<T: serde::de::DeserializeOwned>(path: &Path, what: &str) -> Result<T, CliError> {
    let text = read_file(path, what)?;
    serde_json::from_str(&text).map_err(|e| CliError::config(format!("{what} {}: {e}", path.display())))
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("reports serialize");
    s.push('\n');
    s
}

struct Output {
    command: &'static str,
    config_paths: Vec<String>,
    seed: Option<u64>,
    started: Instant,
}

impl Output {
    fn new(command: &'static str, config_paths: Vec<&Path>, seed: Option<u64>) -> Self {
        Output {
            command,
            config_paths: config_paths.iter().map(|p| p.display().to_string()).collect(),
            seed,
            started: Instant::now(),
        }
    }

    fn write(self, path: &Path, bytes: &[u8]) -> Result<(), CliError> {
        atomic_write(path, bytes)?;
        let manifest = RunManifest {
            command: self.command.to_string(),
            config_paths: self.config_paths,
            seed: self.seed,
            output: path.display().to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            wall_clock_seconds: self.started.elapsed().as_secs_f64(),
        };
        atomic_write(&manifest_path(path), to_json(&manifest).as_bytes())
    }
}

fn need<T: Copy>(v: Option<T>, flag: &str, mech: &str) -> Result<T, CliError> {
    v.ok_or_else(|| CliError::config(format!("--{flag} is required for {mech}")))
}

fn need_ref<'a, T>(v: &'a Option<T>, flag: &str, mech: &str) -> Result<&'a T, CliError> {
    v.as_ref().ok_or_else(|| CliError::config(format!("--{flag} is required for {mech}")))
}

fn join(idx: &[usize]) -> String {
    idx.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

/// Newline-delimited samples: an index, a comma-separated index list
/// (gumbel with k > 1, ptr), `abstain` or `bottom`.
pub fn sample_lines(a: &SampleArgs) -> Result<String, CliError> {
    let name = format!("{:?}", a.mech).to_lowercase();
    let mut rng = RngStream::from_seed(a.seed);
    let mut out = String::new();
    let sens = Sensitivity::new(a.sens).map_err(|e| CliError::config(format!("--sens: {e}")))?;
    let hist = || -> Result<VoteHistogram, CliError> {
        Ok(VoteHistogram::from_counts(need_ref(&a.counts, "counts", &name)?.clone())?)
    };
    let scores = || -> Result<ScoreVector, CliError> {
        Ok(ScoreVector::from_scores(need_ref(&a.scores, "scores", &name)?.clone())?)
    };
    match a.mech {
        MechKind::Em => {
            let (s, eps) = (scores()?, need(a.eps, "eps", &name)?);
            for _ in 0..a.n {
                writeln!(out, "{}", exponential_mechanism(&s, sens, eps, &mut rng)?).unwrap();
            }
        }
        MechKind::Gumbel => {
            let (s, eps) = (scores()?, need(a.eps, "eps", &name)?);
            let k = a.k.unwrap_or(1);
            for _ in 0..a.n {
                writeln!(out, "{}", join(&gumbel_topk(&s, sens, eps, k, &mut rng)?)).unwrap();
            }
        }
        MechKind::RnmLaplace => {
            let h = hist()?;
            let noise = match (a.scale, a.eps) {
                (Some(scale), _) => NoisyMaxNoise::Laplace { scale },
                (None, Some(eps)) => NoisyMaxNoise::laplace_for_epsilon(eps)?,
                (None, None) => return Err(CliError::config("--eps or --scale is required for rnm-laplace")),
            };
            for _ in 0..a.n {
                writeln!(out, "{}", report_noisy_max(&h, noise, &mut rng)?).unwrap();
            }
        }
        MechKind::RnmGaussian | MechKind::Gnmax => {
            let (h, sigma) = (hist()?, need(a.sigma, "sigma", &name)?);
            for _ in 0..a.n {
                let pick = if a.mech == MechKind::Gnmax {
                    gnmax(&h, sigma, &mut rng)?
                } else {
                    report_noisy_max(&h, NoisyMaxNoise::Gaussian { sigma }, &mut rng)?
                };
                writeln!(out, "{pick}").unwrap();
            }
        }
        MechKind::Ptr => {
            let h = hist()?;
            let budget = PrivacyBudget::new(need(a.eps, "eps", &name)?, need(a.delta, "delta", &name)?)?;
            let k = need(a.k, "k", &name)?;
            for _ in 0..a.n {
                match ptr_topk(&h, k, budget, &mut rng)? {
                    PtrOutcome::Release(idx) => writeln!(out, "{}", join(&idx)).unwrap(),
                    PtrOutcome::Abstain => out.push_str("abstain\n"),
                }
            }
        }
        MechKind::Lda => {
            let h = hist()?;
            let budget = PrivacyBudget::new(need(a.eps, "eps", &name)?, need(a.delta, "delta", &name)?)?;
            let kbar = need(a.kbar.or(a.k), "kbar", &name)?;
            for _ in 0..a.n {
                match limited_domain_max(&h, kbar, budget, &mut rng)? {
                    LimitedDomainOutcome::Selected(i) => writeln!(out, "{i}").unwrap(),
                    LimitedDomainOutcome::Bottom => out.push_str("bottom\n"),
                }
            }
        }
    }
    Ok(out)
}

/// Result of `account convert`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvertReport {
    pub epsilon: f64,
    pub delta: f64,
    pub alpha: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub steps: Option<u64>,
}

/// Result of `account compose`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComposeReport {
    pub curve: RdpCurve,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
}

fn convert(a: &ConvertArgs) -> Result<ConvertReport, CliError> {
    if let Some(path) = &a.curve {
        let curve: RdpCurve = parse_json(path, "curve")?;
        let delta = need(a.delta, "delta", "convert --curve")?;
        let c = to_eps_delta(&curve, delta)?;
        return Ok(ConvertReport {
            epsilon: c.epsilon,
            delta: c.delta,
            alpha: c.alpha,
            sigma: None,
            q: None,
            steps: None,
        });
    }
    let (sigma, q, steps, delta) = match &a.from {
        Some(path) => {
            let cal: Calibration = parse_json(path, "calibration")?;
            (cal.sigma, cal.q, cal.steps, a.delta.unwrap_or(cal.delta))
        }
        None => (
            need(a.sigma, "sigma", "convert")?,
            need(a.q, "q", "convert")?,
            need(a.steps, "steps", "convert")?,
            need(a.delta, "delta", "convert")?,
        ),
    };
    let params = SubsampledGaussianParams::new(sigma, q, steps)?;
    let c = to_eps_delta(&dpsgd_curve(params, &default_orders())?, delta)?;
    Ok(ConvertReport {
        epsilon: c.epsilon,
        delta: c.delta,
        alpha: c.alpha,
        sigma: Some(sigma),
        q: Some(q),
        steps: Some(steps),
    })
}

/// Result of `cost estimate`: rounded to cents, with the unrounded figures.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostEstimate {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,
    pub train: f64,
    pub query: f64,
    pub all: f64,
    pub exact: crate::costmodel::CostReport,
}

/// Result of `dpsgd`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DpsgdReport {
    pub weights: Vec<f64>,
    /// `None` (JSON null) when the guarantee is vacuous, as with σ = 0.
    pub epsilon: Option<f64>,
    pub delta: f64,
    pub alpha: f64,
    pub steps: u64,
    pub ledger: crate::accounting::PrivacyLedger,
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

fn emit(report: &str, out: Option<&Path>, o: Output, stdout: &mut dyn Write) -> Result<(), CliError> {
    match out {
        Some(p) => o.write(p, report.as_bytes()),
        None => stdout
            .write_all(report.as_bytes())
            .map_err(|e| CliError::config(format!("cannot write to stdout: {e}"))),
    }
}

/// Runs a parsed command. Reports without `--out` go to `stdout`.
pub fn execute(cli: &Cli, stdout: &mut dyn Write) -> Result<(), CliError> {
    match &cli.command {
        Command::Mech {
            command: MechCommand::Sample(a),
        } => {
            let o = Output::new("mech sample", vec![], Some(a.seed));
            let lines = sample_lines(a)?;
            o.write(&a.out, lines.as_bytes())
        }
        Command::Account { command } => match command {
            AccountCommand::Calibrate(a) => {
                let o = Output::new("account calibrate", vec![], None);
                let cal = calibrate_sigma(a.eps, a.delta, a.q, a.steps)?;
                emit(&to_json(&cal), a.out.as_deref(), o, stdout)
            }
            AccountCommand::Convert(a) => {
                let paths: Vec<&Path> = a.from.iter().chain(&a.curve).map(PathBuf::as_path).collect();
                let o = Output::new("account convert", paths, None);
                let report = convert(a)?;
                emit(&to_json(&report), a.out.as_deref(), o, stdout)
            }
            AccountCommand::Compose(a) => {
                let o = Output::new("account compose", a.curves.iter().map(PathBuf::as_path).collect(), None);
                let curves = a
                    .curves
                    .iter()
                    .map(|p| parse_json::<RdpCurve>(p, "curve"))
                    .collect::<Result<Vec<_>, _>>()?;
                let curve = compose(&curves)?;
                let conv = a.delta.map(|d| to_eps_delta(&curve, d)).transpose()?;
                let report = ComposeReport {
                    curve,
                    epsilon: conv.map(|c| c.epsilon),
                    delta: conv.map(|c| c.delta),
                    alpha: conv.map(|c| c.alpha),
                };
                emit(&to_json(&report), a.out.as_deref(), o, stdout)
            }
        },
        Command::Sim(a) => {
            let o = Output::new("sim", vec![&a.scenario], Some(a.seed));
            let scenario = ScenarioConfig::from_json(&read_file(&a.scenario, "scenario")?)?;
            let root = RngStream::from_seed(a.seed);
            let curve = match a.threads {
                Some(0) => return Err(CliError::config("--threads must be positive")),
                Some(t) => simulate_with_threads(&scenario, &root, t)?,
                None => simulate(&scenario, &root)?,
            };
            o.write(&a.out, curve.to_csv_string()?.as_bytes())
        }
        Command::Cost {
            command: CostCommand::Estimate(a),
        } => {
            let mut paths = vec![a.workload.as_path()];
            paths.extend(a.pricing.as_deref());
            let o = Output::new("cost estimate", paths, None);
            let pricing = match &a.pricing {
                Some(p) => {
                    let t: PricingTable = parse_json(p, "pricing")?;
                    t.validate()?;
                    t
                }
                None => PricingTable::builtin(),
            };
            let workload: MethodDescriptor = parse_json(&a.workload, "workload")?;
            let exact = method_cost_report(&pricing, &workload)?;
            let report = CostEstimate {
                method: workload.method.clone(),
                train: round_cents(exact.train),
                query: round_cents(exact.query),
                all: round_cents(exact.all),
                exact,
            };
            emit(&to_json(&report), a.out.as_deref(), o, stdout)
        }
        Command::Dpsgd(a) => {
            let o = Output::new("dpsgd", vec![&a.data, &a.config], Some(a.seed));
            let config: DpSgdConfig = parse_json(&a.config, "dpsgd config")?;
            let file = std::fs::File::open(&a.data)
                .map_err(|e| CliError::config(format!("data: cannot read {}: {e}", a.data.display())))?;
            let data = ToyDataset::from_csv(file)?;
            let out = train(&data, &config, &mut RngStream::from_seed(a.seed))?;
            let report = DpsgdReport {
                weights: out.weights,
                epsilon: finite(out.epsilon),
                delta: out.delta,
                alpha: out.alpha,
                steps: config.steps,
                ledger: out.ledger,
            };
            o.write(&a.out, to_json(&report).as_bytes())
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                stderr.write_all(text.as_bytes())
            } else {
                stdout.write_all(text.as_bytes())
            };
            return code;
        }
    };
    match execute(&cli, stdout) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "error: {}", e.message);
            e.code
        }
    }
}
