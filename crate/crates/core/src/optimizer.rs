//! Derivative-free schedule optimization: bounded multi-start Nelder–Mead
//! over piecewise-constant detuning schedules, and the local energy-changing
//! gate search.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{popcount, qubit_mask, SystemConfig};
use crate::error::{Error, Result};
use crate::evolution::{run_schedule, schedule_propagator, DetuningSchedule, QuantumState, Segment};
use crate::fidelity::{extract_block, trace_fidelity};
use crate::gates::{rotation_of, ParkPolicy};
use crate::hamiltonian::{BasisTag, DetuningVector, DETUNING_SIGN};
use crate::linalg::{c, CMatrix, CVector, C64};

/// One schedule entry: optimized within bounds, held fixed, parked, or tied
/// to another qubit's detuning in the same step. Parked values are negated
/// in the second half of an echoed step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Param {
    Free { lo: f64, hi: f64 },
    Fixed(f64),
    Parked(f64),
    Tied(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepTemplate {
    pub duration: Param,
    pub delta: Vec<Param>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub delta: (f64, f64),
    pub duration: (f64, f64),
}

impl Default for Bounds {
    fn default() -> Self {
        Self {
            delta: (-80.0, 80.0),
            duration: (1e-6, 200.0),
        }
    }
}

impl Bounds {
    /// Default box scaled to coupling `g`.
    pub fn scaled(g: f64) -> Self {
        let b = Self::default();
        Self {
            delta: (b.delta.0 * g, b.delta.1 * g),
            duration: (b.duration.0 / g, b.duration.1 / g),
        }
    }
}

/// Maps a flat vector of free parameters to a [`DetuningSchedule`].
///
/// The full parameter layout is `[t, Δ_1, …, Δ_N]` per step, i.e.
/// `k·(N+1)` entries for `k` steps, of which only `Free` ones are searched.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleTemplate {
    pub n_qubits: usize,
    pub steps: Vec<StepTemplate>,
    pub echo: bool,
}

impl ScheduleTemplate {
    /// Every duration and detuning free.
    pub fn all_free(n_qubits: usize, n_steps: usize, bounds: &Bounds) -> Self {
        let step = StepTemplate {
            duration: Param::Free {
                lo: bounds.duration.0,
                hi: bounds.duration.1,
            },
            delta: vec![
                Param::Free {
                    lo: bounds.delta.0,
                    hi: bounds.delta.1
                };
                n_qubits
            ],
        };
        Self {
            n_qubits,
            steps: vec![step; n_steps],
            echo: false,
        }
    }

    /// Listed qubits free, the rest parked by `park`.
    pub fn with_active(
        config: &SystemConfig,
        active: &[usize],
        n_steps: usize,
        bounds: &Bounds,
        park: &ParkPolicy,
    ) -> Self {
        let mut rank = 0;
        let delta: Vec<Param> = (0..config.n_qubits)
            .map(|q| {
                if active.contains(&q) {
                    Param::Free {
                        lo: bounds.delta.0,
                        hi: bounds.delta.1,
                    }
                } else {
                    let v = park.park_value(rank, config.coupling);
                    rank += 1;
                    Param::Parked(v)
                }
            })
            .collect();
        let step = StepTemplate {
            duration: Param::Free {
                lo: bounds.duration.0,
                hi: bounds.duration.1,
            },
            delta,
        };
        Self {
            n_qubits: config.n_qubits,
            steps: vec![step; n_steps],
            echo: park.echo,
        }
    }

    /// Like [`Self::with_active`] but all active qubits share one detuning.
    pub fn with_active_uniform(
        config: &SystemConfig,
        active: &[usize],
        n_steps: usize,
        bounds: &Bounds,
        park: &ParkPolicy,
    ) -> Self {
        let mut t = Self::with_active(config, active, n_steps, bounds, park);
        if let Some(&lead) = active.first() {
            for step in &mut t.steps {
                for &q in &active[1..] {
                    step.delta[q] = Param::Tied(lead);
                }
            }
        }
        t
    }

    /// Parameter count when every entry is free, `k·(N+1)`.
    pub fn total_parameters(&self) -> usize {
        self.steps.len() * (self.n_qubits + 1)
    }

    fn params(&self) -> impl Iterator<Item = &Param> {
        self.steps
            .iter()
            .flat_map(|s| std::iter::once(&s.duration).chain(s.delta.iter()))
    }

    pub fn free_bounds(&self) -> Vec<(f64, f64)> {
        self.params()
            .filter_map(|p| match p {
                Param::Free { lo, hi } => Some((*lo, *hi)),
                _ => None,
            })
            .collect()
    }

    pub fn free_count(&self) -> usize {
        self.free_bounds().len()
    }

    pub fn schedule(&self, x: &[f64]) -> DetuningSchedule {
        let mut it = x.iter();
        let mut take = |p: &Param| match p {
            Param::Free { .. } => *it.next().expect("parameter vector too short"),
            Param::Fixed(v) | Param::Parked(v) => *v,
            Param::Tied(_) => 0.0,
        };
        let mut segments = Vec::new();
        for step in &self.steps {
            let t = take(&step.duration);
            let mut delta: Vec<f64> = step.delta.iter().map(&mut take).collect();
            for (q, p) in step.delta.iter().enumerate() {
                if let Param::Tied(j) = p {
                    delta[q] = delta[*j];
                }
            }
            let has_parked = step.delta.iter().any(|p| matches!(p, Param::Parked(_)));
            if self.echo && has_parked {
                let flipped: Vec<f64> = step
                    .delta
                    .iter()
                    .zip(&delta)
                    .map(|(p, v)| if matches!(p, Param::Parked(_)) { -v } else { *v })
                    .collect();
                segments.push(Segment {
                    duration: t / 2.0,
                    delta: DetuningVector(delta),
                });
                segments.push(Segment {
                    duration: t / 2.0,
                    delta: DetuningVector(flipped),
                });
            } else {
                segments.push(Segment {
                    duration: t,
                    delta: DetuningVector(delta),
                });
            }
        }
        DetuningSchedule { segments }
    }
}

/// Something to minimize over schedules. Errors count as infeasible points.
pub trait Objective: Sync {
    fn error(&self, schedule: &DetuningSchedule) -> Result<f64>;

    /// Per-block fidelities for reporting; empty when not meaningful.
    fn blocks(&self, _schedule: &DetuningSchedule) -> Result<Vec<f64>> {
        Ok(Vec::new())
    }
}

impl<F> Objective for F
where
    F: Fn(&DetuningSchedule) -> Result<f64> + Sync,
{
    fn error(&self, schedule: &DetuningSchedule) -> Result<f64> {
        self(schedule)
    }
}

/// `1 − |⟨target|U|initial⟩|²` in the dressed basis.
pub struct StateObjective {
    pub config: SystemConfig,
    pub initial: CVector,
    pub target: CVector,
}

impl Objective for StateObjective {
    fn error(&self, schedule: &DetuningSchedule) -> Result<f64> {
        let psi = QuantumState::new(self.initial.clone(), BasisTag::Dressed)?;
        let out = run_schedule(&self.config, &psi, schedule)?;
        Ok(1.0 - self.target.dotc(out.amplitudes()).norm_sqr())
    }
}

/// `1 − |Tr(U_target† U)|²/d²` in the dressed basis.
pub struct GateObjective {
    pub config: SystemConfig,
    pub target: CMatrix,
}

impl Objective for GateObjective {
    fn error(&self, schedule: &DetuningSchedule) -> Result<f64> {
        let u = schedule_propagator(&self.config, BasisTag::Dressed, schedule)?;
        Ok(1.0 - trace_fidelity(&self.target, u.matrix())?)
    }
}

/// Surrogate for [`StateObjective`] with one active qubit and every other
/// qubit frozen: each configuration of the others is an independent
/// two-level Jaynes-Cummings block with `n_fb − (their excitations)` photons.
pub struct IsolatedStateObjective {
    pub config: SystemConfig,
    pub active: usize,
    pub initial: CVector,
    pub target: CVector,
}

impl IsolatedStateObjective {
    pub fn evolve(&self, schedule: &DetuningSchedule) -> Result<CVector> {
        isolated_evolve(&self.config, self.active, &self.initial, schedule)
    }
}

/// Evolve `initial` with only `active` coupled to the battery; see
/// [`IsolatedStateObjective`].
pub fn isolated_evolve(
    config: &SystemConfig,
    active: usize,
    initial: &CVector,
    schedule: &DetuningSchedule,
) -> Result<CVector> {
    let n = config.n_qubits;
    let m = qubit_mask(active, n);
    let mut out = initial.clone();
    let mut cache: Vec<Option<CMatrix>> = vec![None; config.n_fb + 1];
    for s in (0..(1usize << n)).filter(|b| b & m == 0) {
        let n_eff = config.n_fb.saturating_sub(popcount(s));
        if cache[n_eff].is_none() {
            cache[n_eff] = Some(jc_block(config.coupling, n_eff, active, schedule)?);
        }
        let u = cache[n_eff].as_ref().expect("filled above");
        let (a0, a1) = (initial[s], initial[s | m]);
        out[s] = u[(0, 0)] * a0 + u[(0, 1)] * a1;
        out[s | m] = u[(1, 0)] * a0 + u[(1, 1)] * a1;
    }
    Ok(out)
}

impl Objective for IsolatedStateObjective {
    fn error(&self, schedule: &DetuningSchedule) -> Result<f64> {
        Ok(1.0 - self.target.dotc(&self.evolve(schedule)?).norm_sqr())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    pub starts: usize,
    pub max_evals: usize,
    /// Simplex diameter in parameters scaled to `[0, 1]`.
    pub tol: f64,
    pub seed: u64,
    /// Starts run in fixed-size batches; the search stops after the first
    /// batch whose best error is below this value.
    pub stop_below: Option<f64>,
    pub batch: usize,
    /// Initial simplex edge in scaled parameters.
    pub initial_step: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            starts: 32,
            max_evals: 5000,
            tol: 1e-9,
            seed: 0,
            stop_below: None,
            batch: 4,
            initial_step: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationResult {
    pub schedule: DetuningSchedule,
    pub params: Vec<f64>,
    pub error: f64,
    pub block_fidelities: Vec<f64>,
    pub evaluations: usize,
    pub converged: bool,
    /// Best error after each start, in start order; non-increasing.
    pub trace: Vec<f64>,
    pub seed: u64,
}

impl OptimizationResult {
    pub fn fidelity(&self) -> f64 {
        1.0 - self.error
    }
}

pub struct OptimizationProblem<'a> {
    pub template: ScheduleTemplate,
    pub objective: &'a dyn Objective,
    pub initial_guesses: Vec<Vec<f64>>,
    pub settings: SolverSettings,
}

struct LocalRun {
    x: Vec<f64>,
    f: f64,
    evals: usize,
    converged: bool,
    feasible: bool,
}

/// Bounded Nelder–Mead with adaptive coefficients in unit-cube coordinates.
/// Points are clamped to the box. Restarts from the best vertex while the
/// evaluation budget lasts and the restart still improves.
fn nelder_mead(
    f: &dyn Fn(&[f64]) -> Option<f64>,
    start: &[f64],
    settings: &SolverSettings,
) -> LocalRun {
    let d = start.len();
    let mut evals = 0usize;
    let mut feasible = false;
    let mut eval = |u: &[f64], evals: &mut usize| -> f64 {
        *evals += 1;
        match f(u) {
            Some(v) if v.is_finite() => {
                feasible = true;
                v
            }
            _ => f64::INFINITY,
        }
    };
    let clamp = |u: &mut Vec<f64>| u.iter_mut().for_each(|x| *x = x.clamp(0.0, 1.0));
    let dn = d.max(1) as f64;
    let (alpha, gamma, rho, sigma) = (1.0, 1.0 + 2.0 / dn, 0.75 - 1.0 / (2.0 * dn), 1.0 - 1.0 / dn);
    let sigma = if d == 1 { 0.5 } else { sigma };

    let mut best_x = start.to_vec();
    let mut best_f = eval(&best_x, &mut evals);
    let mut converged = false;
    let mut step = settings.initial_step;
    while evals < settings.max_evals {
        let mut simplex: Vec<(Vec<f64>, f64)> = vec![(best_x.clone(), best_f)];
        for i in 0..d {
            let mut v = best_x.clone();
            v[i] = if v[i] + step <= 1.0 { v[i] + step } else { v[i] - step };
            clamp(&mut v);
            let fv = eval(&v, &mut evals);
            simplex.push((v, fv));
        }
        let round_start = best_f;
        let mut round_converged = false;
        while evals < settings.max_evals {
            simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
            let diameter = simplex[1..]
                .iter()
                .flat_map(|(v, _)| v.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()))
                .fold(0.0, f64::max);
            if diameter < settings.tol {
                round_converged = true;
                break;
            }
            let mut centroid = vec![0.0; d];
            for (v, _) in &simplex[..d] {
                for (c, x) in centroid.iter_mut().zip(v) {
                    *c += x / dn;
                }
            }
            let worst = simplex[d].clone();
            let along = |t: f64| -> Vec<f64> {
                let mut p: Vec<f64> = centroid
                    .iter()
                    .zip(&worst.0)
                    .map(|(c, w)| c + t * (c - w))
                    .collect();
                p.iter_mut().for_each(|x| *x = x.clamp(0.0, 1.0));
                p
            };
            let xr = along(alpha);
            let fr = eval(&xr, &mut evals);
            if fr < simplex[0].1 {
                let xe = along(alpha * gamma);
                let fe = eval(&xe, &mut evals);
                simplex[d] = if fe < fr { (xe, fe) } else { (xr, fr) };
            } else if fr < simplex[d - 1].1 {
                simplex[d] = (xr, fr);
            } else {
                let (xc, fc) = if fr < worst.1 {
                    let x = along(alpha * rho);
                    let v = eval(&x, &mut evals);
                    (x, v)
                } else {
                    let x = along(-rho);
                    let v = eval(&x, &mut evals);
                    (x, v)
                };
                if fc < worst.1.min(fr) {
                    simplex[d] = (xc, fc);
                } else {
                    let best = simplex[0].0.clone();
                    for item in simplex.iter_mut().skip(1) {
                        let mut v: Vec<f64> = best
                            .iter()
                            .zip(&item.0)
                            .map(|(b, x)| b + sigma * (x - b))
                            .collect();
                        clamp(&mut v);
                        let fv = eval(&v, &mut evals);
                        *item = (v, fv);
                    }
                }
            }
        }
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        if simplex[0].1 < best_f {
            best_f = simplex[0].1;
            best_x = simplex[0].0.clone();
        }
        if round_converged {
            converged = true;
            if best_f.is_nan() || best_f >= round_start - 1e-15 {
                break;
            }
            step = (step * 0.5).max(settings.tol * 10.0);
        } else {
            converged = false;
        }
    }
    LocalRun {
        x: best_x,
        f: best_f,
        evals,
        converged,
        feasible,
    }
}

fn to_unit(x: &[f64], bounds: &[(f64, f64)]) -> Vec<f64> {
    x.iter()
        .zip(bounds)
        .map(|(v, (lo, hi))| ((v - lo) / (hi - lo)).clamp(0.0, 1.0))
        .collect()
}

fn from_unit(u: &[f64], bounds: &[(f64, f64)]) -> Vec<f64> {
    u.iter()
        .zip(bounds)
        .map(|(v, (lo, hi))| lo + v * (hi - lo))
        .collect()
}

/// Multi-start bounded simplex search. Deterministic for a given seed and
/// independent of the thread count.
pub fn solve(problem: &OptimizationProblem) -> Result<OptimizationResult> {
    let bounds = problem.template.free_bounds();
    if bounds.iter().any(|(lo, hi)| !(lo.is_finite() && hi.is_finite() && hi > lo)) {
        return Err(Error::invalid("every free parameter needs finite bounds lo < hi"));
    }
    let s = &problem.settings;
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    let mut starts: Vec<Vec<f64>> = problem
        .initial_guesses
        .iter()
        .map(|g| {
            if g.len() != bounds.len() {
                Err(Error::DimensionMismatch {
                    expected: bounds.len(),
                    found: g.len(),
                })
            } else {
                Ok(to_unit(g, &bounds))
            }
        })
        .collect::<Result<_>>()?;
    while starts.len() < s.starts.max(problem.initial_guesses.len()).max(1) {
        starts.push((0..bounds.len()).map(|_| rng.random::<f64>()).collect());
    }

    let template = &problem.template;
    let objective = problem.objective;
    let f = |u: &[f64]| -> Option<f64> {
        let sched = template.schedule(&from_unit(u, &bounds));
        objective.error(&sched).ok()
    };

    let mut best: Option<LocalRun> = None;
    let mut trace = Vec::new();
    let mut evaluations = 0;
    let mut any_feasible = false;
    for chunk in starts.chunks(s.batch.max(1)) {
        let runs: Vec<LocalRun> = chunk.par_iter().map(|u| nelder_mead(&f, u, s)).collect();
        for run in runs {
            evaluations += run.evals;
            any_feasible |= run.feasible;
            let better = match &best {
                None => true,
                Some(b) => run.f < b.f,
            };
            if better {
                best = Some(run);
            }
            trace.push(best.as_ref().map_or(f64::INFINITY, |b| b.f));
        }
        if let (Some(limit), Some(b)) = (s.stop_below, &best) {
            if b.f < limit {
                break;
            }
        }
    }
    let best = best.ok_or(Error::NoFeasibleEvaluation)?;
    if !any_feasible || !best.f.is_finite() {
        return Err(Error::NoFeasibleEvaluation);
    }
    let params = from_unit(&best.x, &bounds);
    let schedule = template.schedule(&params);
    let block_fidelities = objective.blocks(&schedule)?;
    Ok(OptimizationResult {
        schedule,
        params,
        error: best.f,
        block_fidelities,
        evaluations,
        converged: best.converged,
        trace,
        seed: s.seed,
    })
}

/// Lower bound `⌈(4^N − 1)/(N + 1)⌉` on the number of detuning steps for
/// a generic `N`-qubit unitary.
pub fn dof_bound(n_qubits: usize) -> Result<u64> {
    if n_qubits == 0 || n_qubits > 31 {
        return Err(Error::invalid(format!("n_qubits must be in 1..=31, got {n_qubits}")));
    }
    let num = (1u64 << (2 * n_qubits)) - 1;
    let den = n_qubits as u64 + 1;
    Ok(num.div_ceil(den))
}

/// How spectator qubits are treated when evaluating a local gate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpectatorModel {
    /// Spectators infinitely detuned: each block is a two-level
    /// Jaynes-Cummings problem with `n_fb − (spectator excitations)` photons.
    Isolated,
    /// Full dressed evolution with parked spectators.
    Parked(ParkPolicy),
}

/// Block-agreement objective for a local energy-changing gate on one qubit.
///
/// The error is `1 − min_s F(U_ref, U_s)` over spectator configurations `s`,
/// plus a penalty keeping the reference transfer probability
/// `|⟨1|U_ref|0⟩|²` inside `[min_transfer, max_transfer]`, which excludes
/// the trivial identity and full inversion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalGateObjective {
    pub config: SystemConfig,
    pub target_qubit: usize,
    pub model: SpectatorModel,
    pub min_transfer: f64,
    pub max_transfer: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalGateReport {
    /// Spectator bit patterns (full-register bits with the target cleared).
    pub spectators: Vec<usize>,
    pub fidelities: Vec<f64>,
    pub reference: usize,
    pub worst: f64,
    pub average: f64,
    pub transfer: f64,
    pub axis: [f64; 3],
    pub angle: f64,
}

impl LocalGateObjective {
    fn spectator_patterns(&self) -> Vec<usize> {
        let n = self.config.n_qubits;
        let m = qubit_mask(self.target_qubit, n);
        (0..(1usize << n)).filter(|b| b & m == 0).collect()
    }

    fn reference_pattern(&self, patterns: &[usize]) -> usize {
        patterns
            .iter()
            .position(|&b| popcount(b) == 1)
            .unwrap_or(0)
    }

    fn block_unitaries(&self, schedule: &DetuningSchedule) -> Result<Vec<CMatrix>> {
        let n = self.config.n_qubits;
        let m = qubit_mask(self.target_qubit, n);
        let patterns = self.spectator_patterns();
        match self.model {
            SpectatorModel::Parked(_) => {
                let u = schedule_propagator(&self.config, BasisTag::Dressed, schedule)?;
                Ok(patterns
                    .iter()
                    .map(|&s| extract_block(u.matrix(), &[s, s | m]))
                    .collect())
            }
            SpectatorModel::Isolated => patterns
                .iter()
                .map(|&s| {
                    let n_eff = self.config.n_fb - popcount(s);
                    jc_block(self.config.coupling, n_eff, self.target_qubit, schedule)
                })
                .collect(),
        }
    }

    pub fn report(&self, schedule: &DetuningSchedule) -> Result<LocalGateReport> {
        let patterns = self.spectator_patterns();
        let blocks = self.block_unitaries(schedule)?;
        let reference = self.reference_pattern(&patterns);
        let fidelities = blocks
            .iter()
            .map(|b| trace_fidelity(&blocks[reference], b))
            .collect::<Result<Vec<_>>>()?;
        let worst = fidelities.iter().copied().fold(f64::INFINITY, f64::min);
        let average = fidelities.iter().sum::<f64>() / fidelities.len() as f64;
        let transfer = blocks[reference][(1, 0)].norm_sqr();
        let (axis, angle) = rotation_of(&blocks[reference]);
        Ok(LocalGateReport {
            spectators: patterns,
            fidelities,
            reference,
            worst,
            average,
            transfer,
            axis,
            angle,
        })
    }
}

impl Objective for LocalGateObjective {
    fn error(&self, schedule: &DetuningSchedule) -> Result<f64> {
        let r = self.report(schedule)?;
        let violation =
            (self.min_transfer - r.transfer).max(0.0) + (r.transfer - self.max_transfer).max(0.0);
        Ok(1.0 - r.worst + 10.0 * violation)
    }

    fn blocks(&self, schedule: &DetuningSchedule) -> Result<Vec<f64>> {
        Ok(self.report(schedule)?.fidelities)
    }
}

/// Two-level block `{|0⟩|n_eff⟩, |1⟩|n_eff − 1⟩}` of the target qubit under
/// the target's detunings only.
fn jc_block(g: f64, n_eff: usize, qubit: usize, schedule: &DetuningSchedule) -> Result<CMatrix> {
    let omega = g * (n_eff as f64).sqrt();
    let mut u = CMatrix::identity(2, 2);
    for seg in &schedule.segments {
        let d = DETUNING_SIGN * seg.delta.as_slice()[qubit];
        // H = [[0, Ω], [Ω, d]] = d/2 I + (Ω σx + (−d/2) σz)
        let hz = -d / 2.0;
        let w = (omega * omega + hz * hz).sqrt();
        let t = seg.duration;
        let (s, co) = ((w * t).sin(), (w * t).cos());
        let (nx, nz) = if w > 0.0 { (omega / w, hz / w) } else { (0.0, 0.0) };
        let phase = C64::from_polar(1.0, -d / 2.0 * t);
        let step = CMatrix::from_row_slice(
            2,
            2,
            &[
                C64::new(co, -s * nz),
                C64::new(0.0, -s * nx),
                C64::new(0.0, -s * nx),
                C64::new(co, s * nz),
            ],
        ) * phase;
        u = step * u;
    }
    Ok(u)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalGateSettings {
    pub n_steps: usize,
    pub park: ParkPolicy,
    pub min_transfer: f64,
    pub max_transfer: f64,
    /// Starts in the isolated model.
    pub seed_starts: usize,
    /// Best isolated-model schedules refined in the parked model.
    pub refine: usize,
    pub solver: SolverSettings,
}

impl Default for LocalGateSettings {
    fn default() -> Self {
        Self {
            n_steps: 2,
            park: ParkPolicy::echoed(200.0),
            min_transfer: 0.05,
            max_transfer: 0.95,
            seed_starts: 1024,
            refine: 8,
            solver: SolverSettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalGateResult {
    pub config: SystemConfig,
    pub target_qubit: usize,
    pub result: OptimizationResult,
    pub report: LocalGateReport,
    /// Same schedule evaluated with isolated spectators.
    pub isolated_report: LocalGateReport,
}

/// Two-stage search: multi-start in the isolated-spectator model, then the
/// best candidates are refined in the full dressed model with parked
/// spectators.
pub fn local_gate_search(
    config: &SystemConfig,
    target_qubit: usize,
    settings: &LocalGateSettings,
) -> Result<LocalGateResult> {
    config.require_dressed()?;
    if target_qubit >= config.n_qubits {
        return Err(Error::invalid(format!("target qubit {target_qubit} out of range")));
    }
    if settings.n_steps == 0 {
        return Err(Error::invalid("n_steps must be at least 1"));
    }
    let bounds = Bounds::scaled(config.coupling);
    let template = ScheduleTemplate::with_active(
        config,
        &[target_qubit],
        settings.n_steps,
        &bounds,
        &settings.park,
    );
    let isolated = LocalGateObjective {
        config: config.clone(),
        target_qubit,
        model: SpectatorModel::Isolated,
        min_transfer: settings.min_transfer,
        max_transfer: settings.max_transfer,
    };
    let parked = LocalGateObjective {
        model: SpectatorModel::Parked(settings.park),
        ..isolated.clone()
    };

    let mut candidates: Vec<(f64, Vec<f64>)> = Vec::new();
    for k in 0..settings.seed_starts {
        let problem = OptimizationProblem {
            template: template.clone(),
            objective: &isolated,
            initial_guesses: Vec::new(),
            settings: SolverSettings {
                starts: 1,
                seed: settings.solver.seed.wrapping_add(k as u64),
                stop_below: None,
                ..settings.solver
            },
        };
        if let Ok(r) = solve(&problem) {
            candidates.push((r.error, r.params));
        }
    }
    if candidates.is_empty() {
        return Err(Error::NoFeasibleEvaluation);
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0));
    candidates.truncate(settings.refine.max(1));

    let problem = OptimizationProblem {
        template: template.clone(),
        objective: &parked,
        initial_guesses: candidates.into_iter().map(|(_, p)| p).collect(),
        settings: SolverSettings {
            starts: 0,
            initial_step: 0.002,
            ..settings.solver
        },
    };
    let result = solve(&problem)?;
    let report = parked.report(&result.schedule)?;
    let isolated_report = isolated.report(&result.schedule)?;
    Ok(LocalGateResult {
        config: config.clone(),
        target_qubit,
        result,
        report,
        isolated_report,
    })
}

/// Dressed ground state with `|1…1⟩`-style helpers for state objectives.
pub fn basis_vector(dim: usize, index: usize) -> CVector {
    let mut v = CVector::zeros(dim);
    v[index] = c(1.0);
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn dof_bound_examples() {
        assert_eq!(dof_bound(1).unwrap(), 2);
        assert_eq!(dof_bound(2).unwrap(), 5);
        assert_eq!(dof_bound(5).unwrap(), 171);
        assert!(dof_bound(0).is_err());
    }

    #[test]
    fn template_parameter_accounting() {
        let t = ScheduleTemplate::all_free(3, 2, &Bounds::default());
        assert_eq!(t.total_parameters(), 8);
        assert_eq!(t.free_count(), 8);
        let cfg = SystemConfig::new(3, 1.0, 5);
        let t = ScheduleTemplate::with_active(&cfg, &[0], 2, &Bounds::default(), &ParkPolicy::echoed(200.0));
        assert_eq!(t.total_parameters(), 8);
        assert_eq!(t.free_count(), 4);
        let s = t.schedule(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.len(), 4);
        assert_eq!(s.segments[0].delta.0, vec![2.0, 200.0, -200.0]);
        assert_eq!(s.segments[1].delta.0, vec![2.0, -200.0, 200.0]);
        assert_eq!(s.segments[3].duration, 1.5);
    }

    #[test]
    fn nelder_mead_finds_quadratic_minimum() {
        let f = |u: &[f64]| Some((u[0] - 0.3).powi(2) + 4.0 * (u[1] - 0.7).powi(2));
        let run = nelder_mead(&f, &[0.9, 0.1], &SolverSettings::default());
        assert!(run.converged);
        assert!((run.x[0] - 0.3).abs() < 1e-6 && (run.x[1] - 0.7).abs() < 1e-6);
    }

    #[test]
    fn nelder_mead_respects_bounds() {
        let f = |u: &[f64]| Some(-u[0]);
        let run = nelder_mead(&f, &[0.2], &SolverSettings::default());
        assert!(run.x[0] <= 1.0 && run.x[0] > 1.0 - 1e-6);
    }

    #[test]
    fn solver_recovers_x_duration() {
        let cfg = SystemConfig::new(1, 1.0, 4);
        let objective = StateObjective {
            config: cfg.clone(),
            initial: basis_vector(2, 0),
            target: basis_vector(2, 1),
        };
        let template = ScheduleTemplate {
            n_qubits: 1,
            steps: vec![StepTemplate {
                duration: Param::Free { lo: 0.01, hi: 1.5 },
                delta: vec![Param::Fixed(0.0)],
            }],
            echo: false,
        };
        let r = solve(&OptimizationProblem {
            template,
            objective: &objective,
            initial_guesses: Vec::new(),
            settings: SolverSettings {
                starts: 4,
                ..Default::default()
            },
        })
        .unwrap();
        assert!(r.error < 1e-8);
        assert!((r.params[0] - PI / 4.0).abs() < 1e-4);
    }

    #[test]
    fn analytic_seed_converges_quickly() {
        let cfg = SystemConfig::new(1, 1.0, 4);
        let objective = StateObjective {
            config: cfg.clone(),
            initial: basis_vector(2, 0),
            target: basis_vector(2, 1),
        };
        let template = ScheduleTemplate {
            n_qubits: 1,
            steps: vec![StepTemplate {
                duration: Param::Free { lo: 0.01, hi: 1.5 },
                delta: vec![Param::Fixed(0.0)],
            }],
            echo: false,
        };
        let r = solve(&OptimizationProblem {
            template,
            objective: &objective,
            initial_guesses: vec![vec![PI / 4.0]],
            settings: SolverSettings {
                starts: 1,
                max_evals: 10,
                ..Default::default()
            },
        })
        .unwrap();
        assert!(r.error < 1e-12);
        assert!(r.evaluations <= 10);
    }

    #[test]
    fn solver_is_reproducible_and_trace_monotone() {
        let cfg = SystemConfig::new(2, 1.0, 3);
        let objective = StateObjective {
            config: cfg.clone(),
            initial: basis_vector(4, 0),
            target: basis_vector(4, 0b11),
        };
        let template = ScheduleTemplate::all_free(2, 1, &Bounds::default());
        let make = || OptimizationProblem {
            template: template.clone(),
            objective: &objective,
            initial_guesses: Vec::new(),
            settings: SolverSettings {
                starts: 3,
                max_evals: 400,
                seed: 11,
                ..Default::default()
            },
        };
        let a = solve(&make()).unwrap();
        let b = solve(&make()).unwrap();
        assert_eq!(a, b);
        assert!(a.trace.windows(2).all(|w| w[1] <= w[0]));
        let again = objective.error(&a.schedule).unwrap();
        assert!((again - a.error).abs() < 1e-12);
    }

    #[test]
    fn infeasible_objective_is_reported() {
        let failing = |_: &DetuningSchedule| -> Result<f64> { Err(Error::Numerical("x".into())) };
        let r = solve(&OptimizationProblem {
            template: ScheduleTemplate::all_free(1, 1, &Bounds::default()),
            objective: &failing,
            initial_guesses: Vec::new(),
            settings: SolverSettings {
                starts: 2,
                max_evals: 20,
                ..Default::default()
            },
        });
        assert!(matches!(r, Err(Error::NoFeasibleEvaluation)));
    }

    #[test]
    fn jc_block_matches_dressed_single_qubit() {
        let cfg = SystemConfig::new(1, 1.0, 3);
        let sched = DetuningSchedule::new().then(0.7, vec![1.3]).then(0.4, vec![-2.0]);
        let u = schedule_propagator(&cfg, BasisTag::Dressed, &sched).unwrap();
        let b = jc_block(1.0, 3, 0, &sched).unwrap();
        assert!(crate::linalg::max_abs_diff(u.matrix(), &b) < 1e-12);
    }

    #[test]
    fn two_qubit_closed_form_is_exact_in_isolated_model() {
        let cfg = SystemConfig::new(2, 1.0, 2);
        let (t, _) = crate::gates::two_qubit_local_x(1.0, 2).unwrap();
        let obj = LocalGateObjective {
            config: cfg,
            target_qubit: 0,
            model: SpectatorModel::Isolated,
            min_transfer: 0.0,
            max_transfer: 1.0,
        };
        let r = obj.report(&DetuningSchedule::single(t, vec![0.0, 1e6])).unwrap();
        assert!(1.0 - r.worst < 1e-12);
        assert!(r.transfer > 0.05 && r.transfer < 0.95);
    }

    #[test]
    fn published_three_qubit_schedule_block_fidelities() {
        let cfg = SystemConfig::new(3, 1.0, 5);
        let obj = LocalGateObjective {
            config: cfg,
            target_qubit: 0,
            model: SpectatorModel::Isolated,
            min_transfer: 0.0,
            max_transfer: 1.0,
        };
        let sched = DetuningSchedule::new()
            .then(24.13, vec![6.5, 1e6, -1e6])
            .then(24.54, vec![-6.76, 1e6, -1e6]);
        let r = obj.report(&sched).unwrap();
        // spectator patterns 000, 001, 010, 011
        assert!((r.fidelities[0] - 0.992).abs() < 1e-3, "{:?}", r.fidelities);
        assert!((r.fidelities[3] - 0.989).abs() < 1e-3, "{:?}", r.fidelities);
        assert!((r.average - 0.995).abs() < 1e-3);
    }
}
