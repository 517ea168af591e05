use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use qbattery_core::heatbudget::Architecture;

/// Shared-battery quantum computing simulator.
///
/// Simulation units: g = 1, times in 1/g. Heat-budget output is in SI units
/// (W, J). Set QBATTERY_THREADS to bound the worker pool.
#[derive(Debug, Parser)]
#[command(name = "qbattery", version)]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
pub struct Common {
    /// Output file (stdout when absent); a manifest is written next to it.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Seed for optimizers and sampled measurements.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// JSON file merged over the subcommand's default settings.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum Command {
    /// Collective charge time and error over a (N, r) grid.
    ChargeSweep(ChargeSweepArgs),
    /// Encode a logical state of the four-qubit code with one ancilla.
    QecEncode(QecEncodeArgs),
    /// Optimize a local energy-changing gate on one qubit.
    LocalGateSearch(LocalGateArgs),
    /// Heat load and qubit limit per architecture.
    HeatBudget(HeatBudgetArgs),
    /// Room-temperature energy against circuit depth.
    EnergyCurve(EnergyCurveArgs),
    /// Propagate a basis state through a detuning schedule.
    Evolve(EvolveArgs),
    /// Re-run the command recorded in a manifest.
    Rerun(RerunArgs),
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ChargeSweepArgs {
    #[arg(long, default_value_t = 1)]
    pub n_min: usize,
    #[arg(long, default_value_t = 4)]
    pub n_max: usize,
    /// Photons per qubit.
    #[arg(long, default_value_t = 1)]
    pub r_min: usize,
    #[arg(long, default_value_t = 6)]
    pub r_max: usize,
    #[arg(long, value_enum, default_value_t = BatteryArg::Both)]
    pub battery: BatteryArg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BatteryArg {
    Fock,
    Coherent,
    Both,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct QecEncodeArgs {
    #[arg(long, value_enum, default_value_t = LogicalArg::Plus)]
    pub state: LogicalArg,
    /// Handling of the ancilla measurement (logical plus only).
    #[arg(long, value_enum, default_value_t = PolicyArg::Sample)]
    pub policy: PolicyArg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogicalArg {
    Zero,
    Plus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyArg {
    Both,
    Sample,
    #[value(name = "post-select-0")]
    PostSelect0,
    #[value(name = "post-select-1")]
    PostSelect1,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct LocalGateArgs {
    #[arg(long)]
    pub qubits: usize,
    #[arg(long)]
    pub nfb: usize,
    #[arg(long, default_value_t = 2)]
    pub steps: usize,
    #[arg(long, default_value_t = 0)]
    pub target: usize,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct HeatBudgetArgs {
    /// standard, shared, standard-sc or shared-sc; all when absent.
    #[arg(long, value_parser = parse_arch)]
    pub arch: Option<Architecture>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct EnergyCurveArgs {
    /// Largest depth in QEC cycles.
    #[arg(long)]
    pub depth: f64,
    #[arg(long, default_value_t = 1.0)]
    pub step: f64,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct EvolveArgs {
    /// SystemConfig JSON.
    #[arg(long)]
    pub system: PathBuf,
    /// DetuningSchedule JSON.
    #[arg(long)]
    pub schedule: PathBuf,
    /// Index of the initial basis state.
    #[arg(long, default_value_t = 0)]
    pub initial: usize,
    #[arg(long, value_enum, default_value_t = BasisArg::Dressed)]
    pub basis: BasisArg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BasisArg {
    Dressed,
    Full,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct RerunArgs {
    pub manifest: PathBuf,
}

fn parse_arch(s: &str) -> Result<Architecture, String> {
    s.parse().map_err(|e: qbattery_core::Error| e.to_string())
}
