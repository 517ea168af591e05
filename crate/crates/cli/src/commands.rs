use std::fs;
use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use qbattery_core::circuits::{
    encode_logical_plus, encode_logical_zero, reference_config, BranchPolicy, CircuitRun,
    EncodingSettings,
};
use qbattery_core::evolution::run_schedule;
use qbattery_core::gates::{collective_charge, Battery};
use qbattery_core::heatbudget::{Architecture, EnergyPoint, HeatModel};
use qbattery_core::optimizer::{local_gate_search, LocalGateSettings};
use qbattery_core::{BasisTag, DetuningSchedule, QuantumState, SystemConfig};

use crate::args::{BasisArg, BatteryArg, Command, Common, Format, LogicalArg, PolicyArg};

/// A command with every setting resolved; enough to reproduce its output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub command: Command,
    pub seed: Option<u64>,
    pub format: Format,
    pub settings: Value,
}

pub struct Output {
    pub schema: &'static str,
    pub body: String,
}

#[derive(Debug, Serialize)]
struct ChargeRow {
    n_qubits: usize,
    r: usize,
    n_fb: usize,
    battery: Battery,
    normalized_time: f64,
    time: f64,
    gate_error: f64,
}

#[derive(Debug, Serialize)]
struct HeatRow {
    architecture: Architecture,
    passive_cp_w: f64,
    passive_mxc_w: f64,
    active_cp_w: f64,
    active_mxc_w: f64,
    total_cp_w: f64,
    total_mxc_w: f64,
    qubit_limit_cp: u64,
    qubit_limit_mxc: u64,
    qubit_limit: u64,
}

#[derive(Debug, Serialize)]
struct EnergyRow {
    depth: f64,
    architecture: Architecture,
    energy_j: f64,
}

#[derive(Debug, Serialize)]
struct EnergyCurve {
    curves: Vec<(Architecture, Vec<EnergyPoint>)>,
    /// Depth beyond which the shared-cavity layout beats the standard one.
    crossover_depth: Option<f64>,
}

#[derive(Debug, Serialize)]
struct StabilizerRow<'a> {
    checkpoint: &'a str,
    fidelity: f64,
    pauli: &'a str,
    value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct EvolveInput {
    system: SystemConfig,
    schedule: DetuningSchedule,
}

#[derive(Debug, Serialize)]
struct EvolveOutput {
    basis: BasisTag,
    dim: usize,
    duration: f64,
    /// `[re, im]` pairs.
    amplitudes: Vec<[f64; 2]>,
    populations: Vec<f64>,
}

#[derive(Debug, Serialize)]
struct AmplitudeRow {
    index: usize,
    re: f64,
    im: f64,
    population: f64,
}

fn read_json(path: &Path) -> Result<Value> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                merge(b.entry(k).or_insert(Value::Null), v);
            }
        }
        (b, p) => *b = p,
    }
}

fn settings_with<T: Serialize + DeserializeOwned>(default: T, config: Option<&Path>) -> Result<T> {
    let mut v = serde_json::to_value(default)?;
    if let Some(path) = config {
        merge(&mut v, read_json(path)?);
    }
    serde_json::from_value(v).context("invalid settings in --config")
}

fn decode<T: DeserializeOwned>(v: &Value) -> Result<T> {
    serde_json::from_value(v.clone()).context("invalid settings")
}

/// Fill in defaults, the config file and the seed.
pub fn resolve(command: Command, common: &Common) -> Result<Plan> {
    let config = common.config.as_deref();
    let (settings, seed, default_format) = match &command {
        Command::ChargeSweep(_) => {
            ensure!(config.is_none(), "charge-sweep takes no --config");
            (Value::Null, None, Format::Csv)
        }
        Command::QecEncode(_) => {
            let mut s = settings_with(EncodingSettings::default(), config)?;
            if let Some(seed) = common.seed {
                s.seed = seed;
            }
            (serde_json::to_value(s)?, Some(s.seed), Format::Json)
        }
        Command::LocalGateSearch(a) => {
            let mut s = settings_with(LocalGateSettings::default(), config)?;
            s.n_steps = a.steps;
            if let Some(seed) = common.seed {
                s.solver.seed = seed;
            }
            (serde_json::to_value(s)?, Some(s.solver.seed), Format::Json)
        }
        Command::HeatBudget(_) => (
            serde_json::to_value(settings_with(HeatModel::default(), config)?)?,
            None,
            Format::Json,
        ),
        Command::EnergyCurve(_) => (
            serde_json::to_value(settings_with(HeatModel::default(), config)?)?,
            None,
            Format::Csv,
        ),
        Command::Evolve(a) => {
            ensure!(config.is_none(), "evolve takes its inputs from --system and --schedule");
            let input = EvolveInput {
                system: serde_json::from_value(read_json(&a.system)?).context("invalid --system")?,
                schedule: serde_json::from_value(read_json(&a.schedule)?)
                    .context("invalid --schedule")?,
            };
            (serde_json::to_value(input)?, None, Format::Json)
        }
        Command::Rerun(_) => bail!("rerun is resolved from its manifest"),
    };
    Ok(Plan {
        command,
        seed,
        format: common.format.unwrap_or(default_format),
        settings,
    })
}

fn json<T: Serialize>(v: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(v)? + "\n")
}

fn csv<T: Serialize>(rows: impl IntoIterator<Item = T>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

pub fn execute(plan: &Plan) -> Result<Output> {
    let format = plan.format;
    match &plan.command {
        Command::ChargeSweep(a) => {
            ensure!(a.n_min >= 1 && a.n_min <= a.n_max, "need 1 <= n-min <= n-max");
            ensure!(a.r_min >= 1 && a.r_min <= a.r_max, "need 1 <= r-min <= r-max");
            let batteries: &[Battery] = match a.battery {
                BatteryArg::Fock => &[Battery::Fock],
                BatteryArg::Coherent => &[Battery::Coherent],
                BatteryArg::Both => &[Battery::Fock, Battery::Coherent],
            };
            let grid: Vec<(usize, usize, Battery)> = (a.n_min..=a.n_max)
                .flat_map(|n| (a.r_min..=a.r_max).flat_map(move |r| batteries.iter().map(move |&b| (n, r, b))))
                .collect();
            let rows = grid
                .into_par_iter()
                .map(|(n, r, battery)| {
                    let cfg = SystemConfig::new(n, 1.0, n * r);
                    let cc = collective_charge(&cfg, battery)?;
                    Ok(ChargeRow {
                        n_qubits: n,
                        r,
                        n_fb: n * r,
                        battery,
                        normalized_time: cc.normalized_time,
                        time: cc.time,
                        gate_error: cc.population_error,
                    })
                })
                .collect::<qbattery_core::Result<Vec<_>>>()?;
            let body = match format {
                Format::Csv => csv(rows)?,
                Format::Json => json(&rows)?,
            };
            Ok(Output { schema: "charge_sweep.v1", body })
        }
        Command::QecEncode(a) => {
            let s: EncodingSettings = decode(&plan.settings)?;
            let cfg = reference_config();
            let run: CircuitRun = match a.state {
                LogicalArg::Zero => encode_logical_zero(&cfg, &s)?,
                LogicalArg::Plus => {
                    let policy = match a.policy {
                        PolicyArg::Both => BranchPolicy::BothBranches,
                        PolicyArg::Sample => BranchPolicy::Sample,
                        PolicyArg::PostSelect0 => BranchPolicy::PostSelect(0),
                        PolicyArg::PostSelect1 => BranchPolicy::PostSelect(1),
                    };
                    encode_logical_plus(&cfg, policy, &s)?
                }
            };
            let body = match format {
                Format::Json => json(&run)?,
                Format::Csv => {
                    let checkpoints = run
                        .checkpoints
                        .iter()
                        .chain(run.branches.iter().map(|b| &b.checkpoint));
                    csv(checkpoints.flat_map(|c| {
                        c.stabilizers.iter().map(move |s| StabilizerRow {
                            checkpoint: &c.label,
                            fidelity: c.fidelity,
                            pauli: &s.pauli,
                            value: s.value,
                        })
                    }))?
                }
            };
            Ok(Output { schema: "circuit_run.v1", body })
        }
        Command::LocalGateSearch(a) => {
            ensure!(format == Format::Json, "local-gate-search writes JSON only");
            let s: LocalGateSettings = decode(&plan.settings)?;
            let result = local_gate_search(&SystemConfig::new(a.qubits, 1.0, a.nfb), a.target, &s)?;
            Ok(Output {
                schema: "local_gate.v1",
                body: json(&result)?,
            })
        }
        Command::HeatBudget(a) => {
            let model: HeatModel = decode(&plan.settings)?;
            model.validate()?;
            let archs = a.arch.map_or(Architecture::ALL.to_vec(), |x| vec![x]);
            let reports = archs
                .iter()
                .map(|&x| model.qubit_limit(x))
                .collect::<qbattery_core::Result<Vec<_>>>()?;
            let body = match format {
                Format::Json if reports.len() == 1 => json(&reports[0])?,
                Format::Json => json(&reports)?,
                Format::Csv => csv(reports.iter().map(|r| HeatRow {
                    architecture: r.architecture,
                    passive_cp_w: r.passive_cp,
                    passive_mxc_w: r.passive_mxc,
                    active_cp_w: r.active_cp,
                    active_mxc_w: r.active_mxc,
                    total_cp_w: r.total_cp,
                    total_mxc_w: r.total_mxc,
                    qubit_limit_cp: r.qubit_limit_cp,
                    qubit_limit_mxc: r.qubit_limit_mxc,
                    qubit_limit: r.qubit_limit,
                }))?,
            };
            Ok(Output { schema: "heat_report.v1", body })
        }
        Command::EnergyCurve(a) => {
            ensure!(a.depth.is_finite() && a.depth >= 0.0, "--depth must be non-negative");
            ensure!(a.step.is_finite() && a.step > 0.0, "--step must be positive");
            let model: HeatModel = decode(&plan.settings)?;
            model.validate()?;
            let count = (a.depth / a.step + 1e-9).floor() as usize;
            let depths: Vec<f64> = (0..=count).map(|k| k as f64 * a.step).collect();
            let curves = Architecture::ALL
                .iter()
                .map(|&x| Ok((x, model.rt_energy_curve(x, &depths)?)))
                .collect::<qbattery_core::Result<Vec<_>>>()?;
            let body = match format {
                Format::Csv => csv(curves.iter().flat_map(|(x, pts)| {
                    pts.iter().map(move |p| EnergyRow {
                        depth: p.depth,
                        architecture: *x,
                        energy_j: p.energy,
                    })
                }))?,
                Format::Json => json(&EnergyCurve {
                    crossover_depth: model
                        .crossover_depth(Architecture::SharedCavity, Architecture::Standard)?,
                    curves,
                })?,
            };
            Ok(Output { schema: "energy_curve.v1", body })
        }
        Command::Evolve(a) => {
            let input: EvolveInput = decode(&plan.settings)?;
            let cfg = &input.system;
            cfg.validate()?;
            let (dim, basis) = match a.basis {
                BasisArg::Dressed => (cfg.dressed_dim(), BasisTag::Dressed),
                BasisArg::Full => (cfg.full_dim(), BasisTag::Full),
            };
            ensure!(a.initial < dim, "--initial {} is outside the {dim}-dimensional basis", a.initial);
            let psi = QuantumState::basis_state(dim, a.initial, basis);
            let out = run_schedule(cfg, &psi, &input.schedule)?;
            let amps = out.amplitudes();
            let body = match format {
                Format::Json => json(&EvolveOutput {
                    basis,
                    dim,
                    duration: input.schedule.total_duration(),
                    amplitudes: amps.iter().map(|c| [c.re, c.im]).collect(),
                    populations: amps.iter().map(|c| c.norm_sqr()).collect(),
                })?,
                Format::Csv => csv(amps.iter().enumerate().map(|(index, c)| AmplitudeRow {
                    index,
                    re: c.re,
                    im: c.im,
                    population: c.norm_sqr(),
                }))?,
            };
            Ok(Output { schema: "state.v1", body })
        }
        Command::Rerun(_) => bail!("nested rerun"),
    }
}
