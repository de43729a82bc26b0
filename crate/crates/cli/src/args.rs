use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use mmimo_core::tail::DEFAULT_OUTAGE_PROBABILITIES;

const MAX_SEED: u64 = i64::MAX as u64;

#[derive(Debug, Parser)]
#[command(
    name = "mmimo",
    version,
    about = "Massive MIMO channel hardening, tail and shadowing analysis"
)]
pub struct Cli {
    /// Directory receiving all artifacts and the run manifest.
    #[arg(long, global = true, env = "MMIMO_OUT_DIR", default_value = "out")]
    pub out_dir: PathBuf,

    /// Exit with status 4 when any result is flagged unreliable.
    #[arg(long, global = true)]
    pub strict: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize a channel tensor and write it as a CHT file.
    Synth(SynthArgs),
    /// Detect lost samples, measure time autocorrelation, check UE speed.
    Qc(QcArgs),
    /// Standard deviation of the combined gain versus subset size.
    Hardening(HardeningArgs),
    /// Empirical CDFs, gamma fits and offsets to the i.i.d. reference.
    Tails(TailsArgs),
    /// Fading margins per subset size and outage probability.
    Margin(MarginArgs),
    /// Linear trend and log-normal shadowing of the aggregate gain.
    Shadowing(ShadowingArgs),
    /// qc, hardening, tails, margin and shadowing in one directory.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SourceArgs {
    /// Preset name from the scenario file.
    #[arg(long)]
    pub scenario: Option<String>,
    /// Scenario file (TOML table of presets, a single config, or a run manifest).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override the configured seed.
    #[arg(long, value_parser = clap::value_parser!(u64).range(..=MAX_SEED))]
    pub seed: Option<u64>,
    /// Override the dimensions as N,F,M.
    #[arg(long, value_parser = parse_dims)]
    pub dims: Option<[usize; 3]>,
}

fn parse_dims(s: &str) -> Result<[usize; 3], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(format!("expected N,F,M, got '{s}'"));
    }
    let mut out = [0; 3];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = p.parse().map_err(|e| format!("'{p}': {e}"))?;
    }
    Ok(out)
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SynthArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    /// File name of the tensor inside the output directory.
    #[arg(long, default_value = "channel.cht")]
    pub output: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Repair {
    /// Fail if the tensor carries flagged samples.
    None,
    /// Remove lost samples.
    Drop,
    /// Linearly interpolate lost samples.
    Interpolate,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DetectArgs {
    /// Flag samples this many dB below the running median.
    #[arg(long, default_value_t = mmimo_core::qc::DEFAULT_THRESHOLD_DB)]
    pub threshold_db: f64,
    /// Odd running-median window length, samples.
    #[arg(long, default_value_t = mmimo_core::qc::DEFAULT_WINDOW)]
    pub window: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct InputArgs {
    /// Input CHT file.
    #[arg(long)]
    pub input: PathBuf,
    /// How detected or flagged lost samples are handled before analysis.
    #[arg(long, value_enum, default_value_t = Repair::None)]
    pub repair: Repair,
    #[command(flatten)]
    pub detect: DetectArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SubsetModeArg {
    FirstK,
    RandomK,
    Polarization,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
pub enum PolarizationArg {
    V,
    H,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SubsetArgs {
    #[arg(long, value_enum, default_value_t = SubsetModeArg::FirstK)]
    pub subset_mode: SubsetModeArg,
    /// Seed of the random-k ordering.
    #[arg(long, value_parser = clap::value_parser!(u64).range(..=MAX_SEED))]
    pub subset_seed: Option<u64>,
    /// Polarization kept by the polarization mode.
    #[arg(long, value_enum)]
    pub polarization: Option<PolarizationArg>,
    /// Comma-separated subset sizes (default 1,2,4,...,64,100 up to M).
    #[arg(long, value_delimiter = ',')]
    pub sizes: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodArg {
    Mle,
    Mom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum UnitArg {
    Db,
    Linear,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct QcParams {
    #[command(flatten)]
    pub detect: DetectArgs,
    /// Largest autocorrelation lag, samples.
    #[arg(long, default_value_t = 10)]
    pub max_lag: usize,
    /// Correlate envelopes instead of complex coefficients.
    #[arg(long)]
    pub envelope: bool,
    /// Assumed UE speed checked against the Doppler limit, m/s.
    #[arg(long, default_value_t = 1.0)]
    pub ue_speed: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct QcArgs {
    /// Input CHT file.
    #[arg(long)]
    pub input: PathBuf,
    #[command(flatten)]
    pub params: QcParams,
    /// Also write the repaired tensor under this file name.
    #[arg(long)]
    pub repaired: Option<String>,
    /// Repair applied for --repaired.
    #[arg(long, value_enum, default_value_t = Repair::Interpolate)]
    pub repair: Repair,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct HardeningArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub subsets: SubsetArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TailParams {
    #[arg(long, value_enum, default_value_t = MethodArg::Mle)]
    pub method: MethodArg,
    /// Tie the gamma scale to 1/shape.
    #[arg(long)]
    pub unit_mean: bool,
    /// Points per empirical CDF.
    #[arg(long, default_value_t = 200)]
    pub points: usize,
    /// Probabilities at which CDF offsets are reported.
    #[arg(long, value_delimiter = ',', default_values_t = [1e-1, 1e-2, 1e-3])]
    pub offset_p: Vec<f64>,
    #[arg(long, value_enum, default_value_t = UnitArg::Db)]
    pub offset_unit: UnitArg,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TailsArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub subsets: SubsetArgs,
    #[command(flatten)]
    pub params: TailParams,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct MarginParams {
    /// Outage probabilities.
    #[arg(long = "p", value_delimiter = ',', default_values_t = DEFAULT_OUTAGE_PROBABILITIES)]
    pub probabilities: Vec<f64>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct MarginArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub subsets: SubsetArgs,
    #[command(flatten)]
    pub params: MarginParams,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ShadowingParams {
    /// Leave samples before this index out of the regression.
    #[arg(long, default_value_t = 0)]
    pub from_sample: usize,
    /// Points of the residual CDF table.
    #[arg(long, default_value_t = 200)]
    pub cdf_points: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ShadowingArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub params: ShadowingParams,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ReportArgs {
    /// Input CHT file; without it the tensor is synthesized.
    #[arg(long, conflicts_with_all = ["scenario", "config", "seed", "dims"])]
    pub input: Option<PathBuf>,
    #[command(flatten)]
    pub source: SourceArgs,
    #[command(flatten)]
    pub qc: QcParams,
    #[command(flatten)]
    pub subsets: SubsetArgs,
    #[command(flatten)]
    pub tails: TailParams,
    #[command(flatten)]
    pub margin: MarginParams,
    #[command(flatten)]
    pub shadowing: ShadowingParams,
}
