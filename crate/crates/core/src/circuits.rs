//! Distance-2 surface-code logical state encoding with four data qubits
//! (`q0..q3`) and one ancilla (`q4`) sharing a single battery.
//!
//! Each stage is a detuning schedule optimized against the ideal state after
//! the corresponding circuit element. The `|+⟩_L` preparation probes `IIXX`
//! through the ancilla, measures it, and picks the correction schedule for the
//! observed outcome.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::basis::{qubit_bit, qubit_mask, SystemConfig};
use crate::error::{Error, Result};
use crate::evolution::{measure_qubit, project_qubit, run_schedule, DetuningSchedule, QuantumState};
use crate::gates::{entangling_duration, rotation, x_duration, ParkPolicy};
use crate::hamiltonian::BasisTag;
use crate::linalg::{c, CMatrix, CVector, C64};
use crate::optimizer::{
    isolated_evolve, solve, Bounds, Objective, OptimizationProblem, OptimizationResult, ScheduleTemplate,
    SolverSettings, StateObjective,
};

pub const STABILIZERS: [&str; 3] = ["XXXX", "ZZII", "IIZZ"];
pub const LOGICAL_X: &str = "IIXX";
pub const LOGICAL_Z: &str = "IZZI";
pub const ANCILLA: usize = 4;
/// Coupling of the reference device in rad/ns; simulation runs with `g = 1`
/// and times convert to ns as `t / G_DEVICE`.
pub const G_DEVICE: f64 = 2.0 * PI * 0.015;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct PauliString(Vec<Pauli>);

impl PauliString {
    pub fn new(ops: Vec<Pauli>) -> Self {
        Self(ops)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn ops(&self) -> &[Pauli] {
        &self.0
    }

    /// Extend with identities to `n` qubits.
    pub fn padded(&self, n: usize) -> Result<Self> {
        if self.len() > n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: self.len(),
            });
        }
        let mut ops = self.0.clone();
        ops.resize(n, Pauli::I);
        Ok(Self(ops))
    }

    /// `P|ψ⟩` on a `2^len` register, qubit 0 most significant.
    pub fn apply(&self, amps: &CVector) -> Result<CVector> {
        let n = self.len();
        if amps.len() != 1 << n {
            return Err(Error::DimensionMismatch {
                expected: 1 << n,
                found: amps.len(),
            });
        }
        let mut out = CVector::zeros(amps.len());
        for (i, a) in amps.iter().enumerate() {
            let mut j = i;
            let mut phase = c(1.0);
            for (q, op) in self.0.iter().enumerate() {
                let bit = qubit_bit(i, q, n);
                match op {
                    Pauli::I => {}
                    Pauli::X => j ^= qubit_mask(q, n),
                    Pauli::Z => {
                        if bit == 1 {
                            phase = -phase;
                        }
                    }
                    Pauli::Y => {
                        j ^= qubit_mask(q, n);
                        phase *= if bit == 0 { C64::new(0.0, 1.0) } else { C64::new(0.0, -1.0) };
                    }
                }
            }
            out[j] += phase * a;
        }
        Ok(out)
    }
}

impl FromStr for PauliString {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        s.chars()
            .map(|ch| match ch.to_ascii_uppercase() {
                'I' => Ok(Pauli::I),
                'X' => Ok(Pauli::X),
                'Y' => Ok(Pauli::Y),
                'Z' => Ok(Pauli::Z),
                other => Err(Error::invalid(format!("'{other}' is not a Pauli letter"))),
            })
            .collect::<Result<Vec<_>>>()
            .map(Self)
    }
}

impl TryFrom<String> for PauliString {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<PauliString> for String {
    fn from(p: PauliString) -> String {
        p.to_string()
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for op in &self.0 {
            f.write_str(match op {
                Pauli::I => "I",
                Pauli::X => "X",
                Pauli::Y => "Y",
                Pauli::Z => "Z",
            })?;
        }
        Ok(())
    }
}

/// `⟨ψ|P|ψ⟩` for a dressed-basis state; `P` must cover every qubit.
pub fn stabilizer_expectation(state: &QuantumState, pauli: &PauliString) -> Result<f64> {
    if state.basis() != BasisTag::Dressed {
        return Err(Error::BasisMismatch {
            expected: BasisTag::Dressed,
            found: state.basis(),
        });
    }
    let v = state.amplitudes().dotc(&pauli.apply(state.amplitudes())?).re;
    Ok(v.clamp(-1.0, 1.0))
}

/// Amplitude vector over `n` qubits from `(bits, amplitude)` pairs, where
/// `bits` is a string over the first qubits and the rest are `|0⟩`.
fn sparse_state(n: usize, terms: &[(&str, f64)]) -> CVector {
    let mut v = CVector::zeros(1 << n);
    for (bits, a) in terms {
        let idx = bits
            .chars()
            .enumerate()
            .filter(|(_, b)| *b == '1')
            .fold(0, |acc, (q, _)| acc | qubit_mask(q, n));
        v[idx] += c(*a);
    }
    v
}

/// `(|0000⟩ + |1111⟩)/√2` on `q0..q3`, remaining qubits in `|0⟩`.
pub fn logical_zero(n: usize) -> CVector {
    sparse_state(n, &[("0000", FRAC_1_SQRT_2), ("1111", FRAC_1_SQRT_2)])
}

/// `(|0⟩_L + |1⟩_L)/√2` with `|1⟩_L = (|0011⟩ + |1100⟩)/√2`.
pub fn logical_plus(n: usize) -> CVector {
    sparse_state(n, &[("0000", 0.5), ("1111", 0.5), ("0011", 0.5), ("1100", 0.5)])
}

/// Apply a single-qubit unitary to qubit `q`.
pub fn apply_single_qubit(amps: &CVector, q: usize, n: usize, u: &CMatrix) -> CVector {
    let m = qubit_mask(q, n);
    let mut out = amps.clone();
    for i in 0..amps.len() {
        if i & m == 0 {
            let (a0, a1) = (amps[i], amps[i | m]);
            out[i] = u[(0, 0)] * a0 + u[(0, 1)] * a1;
            out[i | m] = u[(1, 0)] * a0 + u[(1, 1)] * a1;
        }
    }
    out
}

fn with_ancilla(amps: &CVector, n: usize, outcome: usize) -> CVector {
    let m = qubit_mask(ANCILLA, n);
    let mut out = CVector::zeros(amps.len());
    for (i, a) in amps.iter().enumerate() {
        let j = if outcome == 1 { i | m } else { i & !m };
        out[j] += a;
    }
    out
}

/// Normalized part of `amps` with the ancilla in `|0⟩`.
fn ancilla_ground(amps: &CVector, n: usize) -> CVector {
    let m = qubit_mask(ANCILLA, n);
    let mut out = amps.clone();
    for (i, a) in out.iter_mut().enumerate() {
        if i & m != 0 {
            *a = c(0.0);
        }
    }
    let norm = out.norm();
    out / c(norm)
}

/// Parts of `amps` with even or odd `Z`-parity on the listed qubits.
fn parity_split(amps: &CVector, qubits: &[usize], n: usize) -> (CVector, CVector) {
    let mut even = CVector::zeros(amps.len());
    let mut odd = CVector::zeros(amps.len());
    for (i, a) in amps.iter().enumerate() {
        let p: usize = qubits.iter().map(|&q| qubit_bit(i, q, n)).sum();
        if p.is_multiple_of(2) {
            even[i] = *a;
        } else {
            odd[i] = *a;
        }
    }
    (even, odd)
}

/// Fidelity to a superposition of orthogonal branch states with free
/// relative phases: `max_φ |⟨Σ e^{iφ_a} T_a|ψ⟩|² = (Σ_a |⟨T_a|ψ⟩|)²`.
/// The branch weights are fixed by the norms of the `T_a`. Several branch
/// assignments may be offered; the best one counts.
struct BranchObjective {
    config: SystemConfig,
    initial: CVector,
    alternatives: Vec<Vec<CVector>>,
}

impl BranchObjective {
    fn score(&self, psi: &CVector) -> (usize, f64) {
        branch_score(&self.alternatives, psi)
    }
}

fn branch_score(alternatives: &[Vec<CVector>], psi: &CVector) -> (usize, f64) {
    alternatives
        .iter()
        .map(|targets| {
            let s: f64 = targets.iter().map(|t| t.dotc(psi).norm()).sum();
            s * s
        })
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (k, f)| if f > best.1 { (k, f) } else { best })
}

/// [`BranchObjective`] in the isolated single-qubit model.
struct IsolatedBranchObjective {
    config: SystemConfig,
    active: usize,
    initial: CVector,
    alternatives: Vec<Vec<CVector>>,
}

impl Objective for IsolatedBranchObjective {
    fn error(&self, schedule: &DetuningSchedule) -> Result<f64> {
        let psi = isolated_evolve(&self.config, self.active, &self.initial, schedule)?;
        Ok(1.0 - branch_score(&self.alternatives, &psi).1)
    }
}

impl Objective for BranchObjective {
    fn error(&self, schedule: &DetuningSchedule) -> Result<f64> {
        let psi = QuantumState::new(self.initial.clone(), BasisTag::Dressed)?;
        let out = run_schedule(&self.config, &psi, schedule)?;
        Ok(1.0 - self.score(out.amplitudes()).1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "outcome", rename_all = "snake_case")]
pub enum BranchPolicy {
    Sample,
    PostSelect(u8),
    BothBranches,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateRecord {
    pub name: String,
    pub start_time: f64,
    pub schedule: DetuningSchedule,
    /// Fidelity to the ideal state after this element.
    pub stage_fidelity: f64,
    pub evaluations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilizerValue {
    pub pauli: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub label: String,
    pub time: f64,
    pub target: String,
    pub fidelity: f64,
    pub stabilizers: Vec<StabilizerValue>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRecord {
    pub qubit: usize,
    pub time: f64,
    pub outcome: u8,
    pub probability: f64,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchRun {
    pub measurement: MeasurementRecord,
    /// `+1` or `−1`: the `IIXX` eigenvalue this outcome signals.
    pub parity: i8,
    pub gates: Vec<GateRecord>,
    pub checkpoint: Checkpoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircuitRun {
    pub name: String,
    pub config: SystemConfig,
    /// Device coupling in rad/ns for converting times.
    pub device_coupling: f64,
    pub branch_policy: Option<BranchPolicy>,
    pub seed: u64,
    pub gates: Vec<GateRecord>,
    pub checkpoints: Vec<Checkpoint>,
    pub branches: Vec<BranchRun>,
    /// Final fidelity: the selected branch, or the probability-weighted mean
    /// over both branches.
    pub fidelity: f64,
    /// Objective evaluations in the exact model.
    pub evaluations: usize,
    /// Evaluations of the isolated single-qubit surrogate.
    pub surrogate_evaluations: usize,
}

impl CircuitRun {
    pub fn measurements(&self) -> Vec<&MeasurementRecord> {
        self.branches.iter().map(|b| &b.measurement).collect()
    }

    pub fn stabilizer(&self, checkpoint: &str, pauli: &str) -> Option<f64> {
        self.checkpoints
            .iter()
            .chain(self.branches.iter().map(|b| &b.checkpoint))
            .find(|c| c.label == checkpoint)
            .and_then(|c| c.stabilizers.iter().find(|s| s.pauli == pauli))
            .map(|s| s.value)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EncodingSettings {
    pub seed: u64,
    /// `false` runs the analytic seed schedules without optimization.
    pub optimize: bool,
    pub ghz_steps: usize,
    /// Steps of each single-qubit stage of the `|+⟩_L` circuit.
    pub local_steps: usize,
    pub entangling_detuning: f64,
    /// Detuning of the dispersive segment of the parity probe.
    pub probe_detuning: f64,
    /// Park detuning while preparing `|0⟩_L` (the ancilla idles in `|0⟩`).
    pub park: f64,
    /// Park detuning during the `|+⟩_L` stages.
    pub local_park: f64,
    /// Multistart search of the exact model.
    pub solver: SolverSettings,
    /// Multistart search of the isolated single-qubit model.
    pub surrogate: SolverSettings,
    /// Evaluation cap of an exact refinement.
    pub refine_evals: usize,
}

impl Default for EncodingSettings {
    fn default() -> Self {
        Self {
            seed: 7,
            optimize: true,
            ghz_steps: 8,
            local_steps: 6,
            entangling_detuning: 20.0,
            probe_detuning: 80.0,
            park: 200.0,
            local_park: 1000.0,
            solver: SolverSettings {
                starts: 8,
                max_evals: 12_000,
                stop_below: Some(2e-3),
                ..SolverSettings::default()
            },
            surrogate: SolverSettings {
                starts: 64,
                max_evals: 3_000,
                stop_below: Some(1e-7),
                ..SolverSettings::default()
            },
            refine_evals: 3_000,
        }
    }
}

/// Five qubits, seven quanta, `g = 1`.
pub fn reference_config() -> SystemConfig {
    SystemConfig::new(5, 1.0, 7)
}

fn check_config(config: &SystemConfig) -> Result<()> {
    config.require_dressed()?;
    if config.n_qubits != 5 {
        return Err(Error::invalid("surface-code encoding needs exactly 5 qubits"));
    }
    Ok(())
}

fn stabilizer_table(state: &QuantumState, labels: &[&str]) -> Result<Vec<StabilizerValue>> {
    labels
        .iter()
        .map(|l| {
            let p: PauliString = l.parse()?;
            Ok(StabilizerValue {
                pauli: l.to_string(),
                value: stabilizer_expectation(state, &p.padded(5)?)?,
            })
        })
        .collect()
}

fn fidelity_to(state: &QuantumState, target: &CVector) -> f64 {
    target.dotc(state.amplitudes()).norm_sqr()
}

fn solver_settings(s: &EncodingSettings, stage: u64) -> SolverSettings {
    SolverSettings {
        seed: s.seed.wrapping_mul(1_000).wrapping_add(stage),
        ..s.solver
    }
}

/// Unoptimized `|0⟩_L` schedule: half charge at `Δ = 0`, a one-axis twist
/// `exp(−iπ/2·J_z²)` in the dispersive regime, half charge again. Padded
/// with negligible steps up to `k` steps.
fn ghz_analytic_seed(config: &SystemConfig, k: usize, delta_e: f64) -> Vec<f64> {
    let g = config.coupling;
    let half = x_duration(g, config.n_fb) / 2.0;
    let twist = PI * delta_e / (6.0 * g * g);
    let mut p = vec![half, 0.0, twist, delta_e, half, 0.0];
    while p.len() < 2 * k {
        p.extend([1e-6, 0.0]);
    }
    p.truncate(2 * k);
    p
}

fn step_name(prefix: &str, i: usize, delta: f64, config: &SystemConfig) -> String {
    let dispersive = delta.abs() >= 3.0 * config.coupling * (config.n_fb as f64).sqrt();
    let kind = if dispersive { "entangling" } else { "energy_transfer" };
    format!("{prefix}_{i}_{kind}")
}

struct Stage {
    result: OptimizationResult,
}

fn run_stage(
    template: &ScheduleTemplate,
    objective: &dyn Objective,
    seeds: Vec<Vec<f64>>,
    settings: &EncodingSettings,
    stage: u64,
) -> Result<Stage> {
    let solver = if settings.optimize {
        solver_settings(settings, stage)
    } else {
        SolverSettings {
            starts: 0,
            max_evals: 1,
            ..solver_settings(settings, stage)
        }
    };
    let result = solve(&OptimizationProblem {
        template: template.clone(),
        objective,
        initial_guesses: seeds,
        settings: solver,
    })?;
    Ok(Stage { result })
}

/// Prepare `|0⟩_L` (GHZ on the data qubits) from `|00000⟩`.
pub fn encode_logical_zero(config: &SystemConfig, settings: &EncodingSettings) -> Result<CircuitRun> {
    let (run, _) = logical_zero_state(config, settings)?;
    Ok(run)
}

fn logical_zero_state(
    config: &SystemConfig,
    settings: &EncodingSettings,
) -> Result<(CircuitRun, QuantumState)> {
    check_config(config)?;
    let g = config.coupling;
    let mut bounds = Bounds::scaled(g);
    bounds.duration.1 = 40.0 / g;
    let park = ParkPolicy {
        detuning: settings.park,
        echo: false,
    };
    let template =
        ScheduleTemplate::with_active_uniform(config, &[0, 1, 2, 3], settings.ghz_steps, &bounds, &park);
    let target = logical_zero(5);
    let initial = QuantumState::basis_state(32, 0, BasisTag::Dressed);
    let objective = StateObjective {
        config: config.clone(),
        initial: initial.amplitudes().clone(),
        target: target.clone(),
    };
    let seed = ghz_analytic_seed(config, settings.ghz_steps, settings.entangling_detuning);
    let stage = run_stage(&template, &objective, vec![seed], settings, 1)?;
    let state = run_schedule(config, &initial, &stage.result.schedule)?;

    let mut gates = Vec::new();
    let mut t = 0.0;
    let steps = &stage.result.params;
    for (i, seg) in stage.result.schedule.segments.iter().enumerate() {
        gates.push(GateRecord {
            name: step_name("ghz", i, steps[2 * i + 1], config),
            start_time: t,
            schedule: DetuningSchedule {
                segments: vec![seg.clone()],
            },
            stage_fidelity: 1.0 - stage.result.error,
            evaluations: if i == 0 { stage.result.evaluations } else { 0 },
        });
        t += seg.duration;
    }
    let fidelity = fidelity_to(&state, &target);
    let checkpoint = Checkpoint {
        label: "logical_zero".into(),
        time: t,
        target: "ghz4".into(),
        fidelity,
        stabilizers: stabilizer_table(&state, &["XXXX", "ZZII", "IIZZ", LOGICAL_Z])?,
    };
    let run = CircuitRun {
        name: "logical_zero".into(),
        config: config.clone(),
        device_coupling: G_DEVICE,
        branch_policy: None,
        seed: settings.seed,
        gates,
        checkpoints: vec![checkpoint],
        branches: Vec::new(),
        fidelity,
        evaluations: stage.result.evaluations,
        surrogate_evaluations: 0,
    };
    Ok((run, state))
}

fn append_gate(
    gates: &mut Vec<GateRecord>,
    t: &mut f64,
    name: &str,
    result: &OptimizationResult,
) {
    gates.push(GateRecord {
        name: name.into(),
        start_time: *t,
        schedule: result.schedule.clone(),
        stage_fidelity: 1.0 - result.error,
        evaluations: result.evaluations,
    });
    *t += result.schedule.total_duration();
}

fn concat(templates: &[&ScheduleTemplate]) -> ScheduleTemplate {
    let mut out = templates[0].clone();
    for t in &templates[1..] {
        out.steps.extend(t.steps.iter().cloned());
    }
    out
}

fn refine_settings(s: &EncodingSettings, stage: u64) -> SolverSettings {
    SolverSettings {
        starts: 0,
        max_evals: s.refine_evals,
        initial_step: 0.002,
        stop_below: None,
        ..solver_settings(s, stage)
    }
}

fn local_template(config: &SystemConfig, active: usize, settings: &EncodingSettings) -> ScheduleTemplate {
    let g = config.coupling;
    let bounds = Bounds {
        delta: (-15.0 * g, 15.0 * g),
        duration: (1e-6 / g, 15.0 / g),
    };
    let park = ParkPolicy::echoed(settings.local_park);
    ScheduleTemplate::with_active(config, &[active], settings.local_steps, &bounds, &park)
}

struct StageOutcome {
    result: OptimizationResult,
    surrogate_evaluations: usize,
    state: QuantumState,
}

/// Single-qubit stage: multistart search in the isolated model, then a
/// refinement of the best schedule in the exact model.
fn local_stage(
    config: &SystemConfig,
    active: usize,
    initial: &QuantumState,
    alternatives: Vec<Vec<CVector>>,
    settings: &EncodingSettings,
    stage: u64,
) -> Result<StageOutcome> {
    let template = local_template(config, active, settings);
    let iso = IsolatedBranchObjective {
        config: config.clone(),
        active,
        initial: initial.amplitudes().clone(),
        alternatives: alternatives.clone(),
    };
    let coarse = solve(&OptimizationProblem {
        template: template.clone(),
        objective: &iso,
        initial_guesses: Vec::new(),
        settings: SolverSettings {
            seed: solver_settings(settings, stage).seed,
            ..settings.surrogate
        },
    })?;
    let exact = BranchObjective {
        config: config.clone(),
        initial: initial.amplitudes().clone(),
        alternatives,
    };
    let result = solve(&OptimizationProblem {
        template,
        objective: &exact,
        initial_guesses: vec![coarse.params.clone()],
        settings: refine_settings(settings, stage),
    })?;
    let state = run_schedule(config, initial, &result.schedule)?;
    Ok(StageOutcome {
        result,
        surrogate_evaluations: coarse.evaluations,
        state,
    })
}

fn single_target(v: CVector) -> Vec<Vec<CVector>> {
    vec![vec![v]]
}

/// Multiply the part of `amps` with `q2 q3` parity `parity` by `−1` where
/// the ancilla is excited.
fn parity_phase(amps: &CVector, n: usize, parity: usize) -> CVector {
    let mut out = amps.clone();
    for (i, a) in out.iter_mut().enumerate() {
        let p = (qubit_bit(i, 2, n) + qubit_bit(i, 3, n)) % 2;
        if p == parity && qubit_bit(i, ANCILLA, n) == 1 {
            *a = -*a;
        }
    }
    out
}

fn parity_components(amps: &CVector, n: usize) -> Vec<CVector> {
    let (even, odd) = parity_split(amps, &[2, 3], n);
    vec![even, odd]
}

/// Prepare `|+⟩_L`: `|0⟩_L`, then an `IIXX` probe through the ancilla,
/// a measurement of the ancilla and an outcome-dependent correction.
///
/// The probe conjugates `XX → ZZ` on `q2 q3`, kicks the `ZZ` parity back
/// onto the ancilla (half transfer, dispersive segment, half transfer) and
/// undoes the conjugation once the ancilla is measured.
pub fn encode_logical_plus(
    config: &SystemConfig,
    policy: BranchPolicy,
    settings: &EncodingSettings,
) -> Result<CircuitRun> {
    if !settings.optimize {
        return Err(Error::invalid(
            "the |+>_L preparation has no analytic schedule; enable optimization",
        ));
    }
    if let BranchPolicy::PostSelect(o) = policy {
        if o > 1 {
            return Err(Error::invalid(format!("outcome must be 0 or 1, got {o}")));
        }
    }
    let (zero_run, zero_state) = logical_zero_state(config, settings)?;
    let n = 5;
    let g = config.coupling;
    let park = ParkPolicy::echoed(settings.local_park);
    let mut gates = zero_run.gates.clone();
    let mut checkpoints = zero_run.checkpoints.clone();
    let mut t = checkpoints[0].time;
    let mut evaluations = zero_run.evaluations;
    let mut surrogate_evaluations = 0;
    let ry = |angle: f64| rotation([0.0, 1.0, 0.0], angle);
    let rx = |angle: f64| rotation([1.0, 0.0, 0.0], angle);

    // XX -> ZZ on q2, q3, one qubit at a time.
    let mut state = zero_state;
    for (k, q) in [2usize, 3].into_iter().enumerate() {
        let target = apply_single_qubit(state.amplitudes(), q, n, &ry(-PI / 2.0));
        let st = local_stage(config, q, &state, single_target(target), settings, 2 + k as u64)?;
        append_gate(&mut gates, &mut t, &format!("conjugation_q{q}"), &st.result);
        evaluations += st.result.evaluations;
        surrogate_evaluations += st.surrogate_evaluations;
        state = st.state;
    }
    let s_conj = state.clone();
    let probe_start = t;
    let probe_gates = gates.len();

    // Ancilla half transfer.
    let target = apply_single_qubit(state.amplitudes(), ANCILLA, n, &rx(PI / 2.0));
    let anc1 = local_stage(config, ANCILLA, &state, single_target(target), settings, 4)?;
    append_gate(&mut gates, &mut t, "ancilla_half_transfer", &anc1.result);
    evaluations += anc1.result.evaluations;
    surrogate_evaluations += anc1.surrogate_evaluations;
    state = anc1.state.clone();

    // Dispersive segment on q2, q3: the ancilla photon shifts the q2 q3
    // energy by π times a sign set by their parity. A short tied step
    // cancels the remaining single-qubit phase.
    let de = settings.probe_detuning;
    let t_ent = entangling_duration(g, de);
    let ent_bounds = Bounds {
        delta: (-2.0 * de.abs(), 2.0 * de.abs()),
        duration: (1e-6 / g, 2.0 * t_ent),
    };
    let fix_bounds = Bounds {
        delta: (-80.0 * g, 80.0 * g),
        duration: (1e-6 / g, 1.0 / g),
    };
    let ent_template = concat(&[
        &ScheduleTemplate::with_active_uniform(config, &[2, 3], 2, &ent_bounds, &park),
        &ScheduleTemplate::with_active_uniform(config, &[2, 3], 1, &fix_bounds, &park),
    ]);
    let ent_obj = BranchObjective {
        config: config.clone(),
        initial: state.amplitudes().clone(),
        alternatives: (0..2)
            .map(|p| parity_components(&parity_phase(state.amplitudes(), n, p), n))
            .collect(),
    };
    let ent_seeds: Vec<Vec<f64>> = (0..8)
        .map(|j| {
            let fix = (j as f64 + 0.5) * PI / (4.0 * 80.0 * g);
            vec![t_ent / 2.0, de, t_ent / 2.0, de, fix, 80.0 * g]
        })
        .collect();
    let ent = solve(&OptimizationProblem {
        template: ent_template.clone(),
        objective: &ent_obj,
        initial_guesses: ent_seeds,
        settings: SolverSettings {
            starts: 0,
            ..solver_settings(settings, 5)
        },
    })?;
    append_gate(&mut gates, &mut t, "parity_entangling", &ent);
    evaluations += ent.evaluations;
    state = run_schedule(config, &state, &ent.schedule)?;

    // Second half transfer maps the parity onto the ancilla population.
    let anc_targets: Vec<Vec<CVector>> = [PI / 2.0, -PI / 2.0]
        .iter()
        .map(|&a| parity_components(&apply_single_qubit(state.amplitudes(), ANCILLA, n, &rx(a)), n))
        .collect();
    let anc2 = local_stage(config, ANCILLA, &state, anc_targets, settings, 6)?;
    append_gate(&mut gates, &mut t, "ancilla_half_transfer", &anc2.result);
    evaluations += anc2.result.evaluations;
    surrogate_evaluations += anc2.surrogate_evaluations;
    let mut s_pre = anc2.state.clone();

    // Joint refinement of the whole probe against the parity-resolved target.
    let (even, odd) = parity_split(&ancilla_ground(s_conj.amplitudes(), n), &[2, 3], n);
    let assignments = vec![
        vec![with_ancilla(&even, n, 0), with_ancilla(&odd, n, 1)],
        vec![with_ancilla(&even, n, 1), with_ancilla(&odd, n, 0)],
    ];
    let probe_obj = BranchObjective {
        config: config.clone(),
        initial: s_conj.amplitudes().clone(),
        alternatives: assignments.clone(),
    };
    let anc_template = local_template(config, ANCILLA, settings);
    let probe_template = concat(&[&anc_template, &ent_template, &anc_template]);
    let mut seed = anc1.result.params.clone();
    seed.extend(&ent.params);
    seed.extend(&anc2.result.params);
    let probe = solve(&OptimizationProblem {
        template: probe_template,
        objective: &probe_obj,
        initial_guesses: vec![seed],
        settings: refine_settings(settings, 7),
    })?;
    evaluations += probe.evaluations;
    let staged_score = probe_obj.score(s_pre.amplitudes()).1;
    if 1.0 - probe.error > staged_score {
        gates.truncate(probe_gates);
        t = probe_start;
        append_gate(&mut gates, &mut t, "parity_probe", &probe);
        s_pre = run_schedule(config, &s_conj, &probe.schedule)?;
    }
    let (assignment, pre_fidelity) = probe_obj.score(s_pre.amplitudes());
    checkpoints.push(Checkpoint {
        label: "pre_measurement".into(),
        time: t,
        target: "zz_parity_on_ancilla".into(),
        fidelity: pre_fidelity,
        stabilizers: stabilizer_table(&s_pre, &["XXXX", "ZZII", "IIZZ"])?,
    });

    // Outcome carrying the +1 eigenvalue of IIXX.
    let plus_outcome: u8 = if assignment == 0 { 0 } else { 1 };
    let outcomes: Vec<(u8, Option<u64>)> = match policy {
        BranchPolicy::Sample => {
            let m = measure_qubit(&s_pre, ANCILLA, n, settings.seed)?;
            vec![(m.outcome, Some(settings.seed))]
        }
        BranchPolicy::PostSelect(o) => vec![(o, None)],
        BranchPolicy::BothBranches => vec![(0, None), (1, None)],
    };

    let p = settings.local_park * g;
    let phase_bounds = Bounds {
        delta: (-1.5 * p, 1.5 * p),
        duration: (1e-6 / g, 4.0 * PI / p),
    };
    let phase_template = ScheduleTemplate::all_free(n, 1, &phase_bounds);
    // Identity, and Z on q1 and q2 (the logical Z flips the IIXX sign).
    let phase_seeds = vec![
        vec![1e-6 / g, p, p, p, p, p],
        vec![2.0 * PI / p, p, p / 2.0, p / 2.0, p, p],
    ];

    let target = logical_plus(n);
    let mut branches = Vec::new();
    for (k, (outcome, seed)) in outcomes.into_iter().enumerate() {
        let (post, probability) = project_qubit(&s_pre, ANCILLA, n, outcome)?;
        let stage = 10 + 10 * k as u64;
        let mut bgates = Vec::new();
        let mut bt = t;
        let mut bstate = post;
        for (j, q) in [2usize, 3].into_iter().enumerate() {
            let target = apply_single_qubit(bstate.amplitudes(), q, n, &ry(PI / 2.0));
            let st = local_stage(config, q, &bstate, single_target(target), settings, stage + j as u64)?;
            append_gate(&mut bgates, &mut bt, &format!("deconjugation_q{q}"), &st.result);
            evaluations += st.result.evaluations;
            surrogate_evaluations += st.surrogate_evaluations;
            bstate = st.state;
        }
        let branch_target = with_ancilla(&target, n, outcome as usize);
        let phase_obj = StateObjective {
            config: config.clone(),
            initial: bstate.amplitudes().clone(),
            target: branch_target.clone(),
        };
        let phase = solve(&OptimizationProblem {
            template: phase_template.clone(),
            objective: &phase_obj,
            initial_guesses: phase_seeds.clone(),
            settings: SolverSettings {
                starts: 0,
                max_evals: settings.refine_evals,
                initial_step: 0.002,
                stop_below: None,
                ..solver_settings(settings, stage + 2)
            },
        })?;
        append_gate(&mut bgates, &mut bt, "phase_correction", &phase);
        evaluations += phase.evaluations;
        let fin = run_schedule(config, &bstate, &phase.schedule)?;
        let fidelity = fidelity_to(&fin, &branch_target);
        branches.push(BranchRun {
            measurement: MeasurementRecord {
                qubit: ANCILLA,
                time: t,
                outcome,
                probability,
                seed,
            },
            parity: if outcome == plus_outcome { 1 } else { -1 },
            gates: bgates,
            checkpoint: Checkpoint {
                label: format!("logical_plus_outcome_{outcome}"),
                time: bt,
                target: "logical_plus".into(),
                fidelity,
                stabilizers: stabilizer_table(&fin, &["XXXX", "ZZII", "IIZZ", LOGICAL_X])?,
            },
        });
    }

    let fidelity = match policy {
        BranchPolicy::BothBranches => branches
            .iter()
            .map(|b| b.measurement.probability * b.checkpoint.fidelity)
            .sum(),
        _ => branches[0].checkpoint.fidelity,
    };
    Ok(CircuitRun {
        name: "logical_plus".into(),
        config: config.clone(),
        device_coupling: G_DEVICE,
        branch_policy: Some(policy),
        seed: settings.seed,
        gates,
        checkpoints,
        branches,
        fidelity,
        evaluations,
        surrogate_evaluations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(v: CVector) -> QuantumState {
        QuantumState::new(v, BasisTag::Dressed).unwrap()
    }

    fn p(s: &str) -> PauliString {
        s.parse().unwrap()
    }

    #[test]
    fn pauli_parsing_and_display() {
        assert_eq!(p("ixyz").to_string(), "IXYZ");
        assert!("XQ".parse::<PauliString>().is_err());
        assert_eq!(p("XX").padded(4).unwrap().to_string(), "XXII");
        assert!(p("XXX").padded(2).is_err());
    }

    #[test]
    fn stabilizer_examples() {
        let zero = state(sparse_state(4, &[("0000", 1.0)]));
        assert_eq!(stabilizer_expectation(&zero, &p("ZZII")).unwrap(), 1.0);
        let ghz = state(logical_zero(4));
        for s in ["XXXX", "ZZII", "IIZZ", "IZZI"] {
            assert!((stabilizer_expectation(&ghz, &p(s)).unwrap() - 1.0).abs() < 1e-15, "{s}");
        }
        assert!(stabilizer_expectation(&ghz, &p("IIXX")).unwrap().abs() < 1e-15);
        assert!(stabilizer_expectation(&ghz, &p("XXX")).is_err());
    }

    #[test]
    fn logical_plus_is_in_code_space() {
        let plus = state(logical_plus(5));
        for s in ["XXXXI", "ZZIII", "IIZZI", "IIXXI"] {
            assert!((stabilizer_expectation(&plus, &p(s)).unwrap() - 1.0).abs() < 1e-15, "{s}");
        }
        assert!(stabilizer_expectation(&plus, &p("IZZII")).unwrap().abs() < 1e-15);
    }

    #[test]
    fn y_matches_ixz() {
        let v = CVector::from_vec(vec![C64::new(0.6, 0.0), C64::new(0.0, 0.8)]);
        let y = p("Y").apply(&v).unwrap();
        let expect = crate::linalg::pauli_y() * &v;
        assert!((y - expect).norm() < 1e-15);
    }

    #[test]
    fn conjugation_maps_xx_to_zz() {
        let n = 5;
        let ry = rotation([0.0, 1.0, 0.0], -PI / 2.0);
        let plus = logical_plus(n);
        let v = apply_single_qubit(&apply_single_qubit(&plus, 2, n, &ry), 3, n, &ry);
        let zz = stabilizer_expectation(&state(v), &p("IIZZI")).unwrap();
        assert!((zz - 1.0).abs() < 1e-14);
    }

    #[test]
    fn branch_objective_ignores_relative_phase() {
        let a = sparse_state(2, &[("00", 0.6)]);
        let b = sparse_state(2, &[("11", 0.8)]);
        let obj = BranchObjective {
            config: SystemConfig::new(2, 1.0, 2),
            initial: CVector::zeros(4),
            alternatives: vec![vec![a.clone(), b.clone()]],
        };
        let psi = &a + &b * C64::from_polar(1.0, 1.3);
        assert!((obj.score(&psi).1 - 1.0).abs() < 1e-14);
    }

    #[test]
    fn parity_split_halves_ghz_conjugate() {
        let n = 5;
        let ry = rotation([0.0, 1.0, 0.0], -PI / 2.0);
        let z = logical_zero(n);
        let v = apply_single_qubit(&apply_single_qubit(&z, 2, n, &ry), 3, n, &ry);
        let (e, o) = parity_split(&v, &[2, 3], n);
        assert!((e.norm_squared() - 0.5).abs() < 1e-14);
        assert!((o.norm_squared() - 0.5).abs() < 1e-14);
    }

    #[test]
    fn config_must_have_five_qubits() {
        let s = EncodingSettings::default();
        assert!(encode_logical_zero(&SystemConfig::new(4, 1.0, 7), &s).is_err());
        let s = EncodingSettings {
            optimize: false,
            ..s
        };
        assert!(encode_logical_plus(&reference_config(), BranchPolicy::Sample, &s).is_err());
    }

    #[test]
    fn parity_phase_marks_one_parity_with_ancilla_excited() {
        let n = 5;
        let v = CVector::from_element(32, c(1.0));
        let odd = parity_phase(&v, n, 1);
        assert_eq!(odd[0b00011].re, -1.0);
        assert_eq!(odd[0b00101].re, -1.0);
        assert_eq!(odd[0b00111].re, 1.0);
        assert_eq!(odd[0b00100].re, 1.0);
        let even = parity_phase(&v, n, 0);
        assert_eq!(even[0b00001].re, -1.0);
        assert_eq!(even[0b00111].re, -1.0);
        assert_eq!(even[0b00101].re, 1.0);
    }

    #[test]
    fn ancilla_ground_drops_excited_ancilla_and_normalizes() {
        let v = sparse_state(5, &[("00000", 0.6), ("00001", 0.8)]);
        let g = ancilla_ground(&v, 5);
        assert!((g[0].re - 1.0).abs() < 1e-15);
        assert_eq!(g[1].norm(), 0.0);
    }

    #[test]
    fn ideal_probe_branches_sit_in_opposite_iixx_eigenspaces() {
        let n = 5;
        let ry = |a: f64| rotation([0.0, 1.0, 0.0], a);
        let rx = rotation([1.0, 0.0, 0.0], PI / 2.0);
        let mut v = logical_zero(n);
        for q in [2, 3] {
            v = apply_single_qubit(&v, q, n, &ry(-PI / 2.0));
        }
        v = apply_single_qubit(&v, ANCILLA, n, &rx);
        v = parity_phase(&v, n, 0);
        v = apply_single_qubit(&v, ANCILLA, n, &rx);
        let iixx = p("IIXXI");
        let mut total = 0.0;
        let mut signs = Vec::new();
        for outcome in [0, 1] {
            let (post, prob) = project_qubit(&state(v.clone()), ANCILLA, n, outcome).unwrap();
            total += prob;
            let mut w = post.into_amplitudes();
            for q in [2, 3] {
                w = apply_single_qubit(&w, q, n, &ry(PI / 2.0));
            }
            let flipped = iixx.apply(&w).unwrap();
            let sign = w.dotc(&flipped).re.signum();
            // component outside the eigenspace of that sign
            let off = (&w - &flipped * C64::new(sign, 0.0)).norm() / 2.0;
            assert!(off < 1e-8, "outcome {outcome}: {off:e}");
            signs.push(sign);
        }
        assert!((total - 1.0).abs() < 1e-10);
        assert_eq!(signs[0], -signs[1]);
    }

    #[test]
    fn analytic_logical_zero_is_frozen() {
        let s = EncodingSettings {
            optimize: false,
            ..Default::default()
        };
        let run = encode_logical_zero(&reference_config(), &s).unwrap();
        assert_eq!(run.evaluations, 1);
        assert!((run.fidelity - 0.219937989858).abs() < 1e-9, "{}", run.fidelity);
        assert_eq!(run.checkpoints[0].stabilizers.len(), 4);
    }
}
