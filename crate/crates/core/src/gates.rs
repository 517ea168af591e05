//! Native gates as detuning schedules: energy transfer (charging),
//! dispersive entangling gates and the ancilla parity probe.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::basis::{coherent_cutoff, popcount, qubit_mask, SystemConfig};
use crate::error::{Error, Result};
use crate::evolution::{schedule_propagator, DetuningSchedule, Segment, Spectrum};
use crate::fidelity::{extract_block, trace_fidelity};
use crate::hamiltonian::{build_collective, build_dispersive, BasisTag, DetuningVector};
use crate::linalg::{c, kron, pauli_x, pauli_z, CMatrix, CVector, C64, I};

/// Detuning assignment for qubits that sit out a gate.
///
/// Idle qubit number `r` (counted in index order) is parked at
/// `(−1)^r · detuning · (1 + ⌊r/2⌋/4)` in units of `g`, so parked qubits are
/// far from the battery and from each other. With `echo`, every step is
/// split into two halves with the parked detunings negated in the second
/// half, which cancels the bare phase and the leading dispersive shift of
/// parked qubits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParkPolicy {
    pub detuning: f64,
    pub echo: bool,
}

impl Default for ParkPolicy {
    fn default() -> Self {
        Self {
            detuning: 200.0,
            echo: false,
        }
    }
}

impl ParkPolicy {
    pub fn echoed(detuning: f64) -> Self {
        Self {
            detuning,
            echo: true,
        }
    }

    /// Parking far enough that exchange with idle qubits is below `1e-10`.
    pub fn far() -> Self {
        Self {
            detuning: 1e6,
            echo: false,
        }
    }

    pub fn park_value(&self, rank: usize, g: f64) -> f64 {
        let sign = if rank.is_multiple_of(2) { 1.0 } else { -1.0 };
        sign * self.detuning * g * (1.0 + 0.25 * (rank / 2) as f64)
    }

    /// One gate step: `active` qubits get their listed detuning, every other
    /// qubit is parked.
    pub fn step(
        &self,
        config: &SystemConfig,
        duration: f64,
        active: &[(usize, f64)],
    ) -> Vec<Segment> {
        let n = config.n_qubits;
        let mut delta = vec![0.0; n];
        let mut parked = Vec::new();
        let mut rank = 0;
        for (q, d) in delta.iter_mut().enumerate() {
            if let Some(&(_, v)) = active.iter().find(|(a, _)| *a == q) {
                *d = v;
            } else {
                *d = self.park_value(rank, config.coupling);
                parked.push(q);
                rank += 1;
            }
        }
        if self.echo && !parked.is_empty() {
            let mut flipped = delta.clone();
            for &q in &parked {
                flipped[q] = -flipped[q];
            }
            vec![
                Segment {
                    duration: duration / 2.0,
                    delta: DetuningVector(delta),
                },
                Segment {
                    duration: duration / 2.0,
                    delta: DetuningVector(flipped),
                },
            ]
        } else {
            vec![Segment {
                duration,
                delta: DetuningVector(delta),
            }]
        }
    }
}

/// What a gate is meant to implement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GateTarget {
    /// `X` on each listed qubit, identity elsewhere, on the `2^N` basis.
    X { qubits: Vec<usize> },
    /// Population transfer `|0…0⟩ → |1…1⟩`.
    FullCharge,
    /// Dispersive-model propagator on the involved qubits.
    Dispersive {
        delta: f64,
        n_involved: usize,
        n_fb: usize,
        duration: f64,
    },
    /// Ancilla readout of `Z^{⊗N}` on the data qubits.
    ParityProbe { data: Vec<usize>, ancilla: usize },
}

impl GateTarget {
    /// Reference unitary, where one exists. Parity probes return the
    /// kickback operator `i^N Z^{⊗N}` on the data qubits.
    pub fn unitary(&self, config: &SystemConfig) -> Result<Option<CMatrix>> {
        Ok(match self {
            GateTarget::X { qubits } => {
                let n = config.n_qubits;
                let mut u = CMatrix::identity(1, 1);
                for q in 0..n {
                    let f = if qubits.contains(&q) {
                        pauli_x()
                    } else {
                        CMatrix::identity(2, 2)
                    };
                    u = kron(&u, &f);
                }
                Some(u)
            }
            GateTarget::FullCharge => None,
            GateTarget::Dispersive {
                delta,
                n_involved,
                n_fb,
                duration,
            } => Some(dispersive_unitary(config.coupling, *delta, *n_involved, *n_fb, *duration)?),
            GateTarget::ParityProbe { data, .. } => Some(parity_kickback_unitary(data.len())),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateSpec {
    pub name: String,
    pub schedule: DetuningSchedule,
    pub target: GateTarget,
    pub involved_qubits: Vec<usize>,
    pub entangling_gates: usize,
}

impl GateSpec {
    /// `|Tr(U_target† U)|²/d²` of the realized gate on the involved qubits,
    /// with every other qubit idle in `|0⟩`. `None` when the target is not a
    /// unitary on the involved qubits.
    pub fn realized_fidelity(&self, config: &SystemConfig) -> Result<Option<f64>> {
        let mut involved = self.involved_qubits.clone();
        involved.sort_unstable();
        let k = involved.len();
        let target = match &self.target {
            GateTarget::X { .. } => (0..k).fold(CMatrix::identity(1, 1), |u, _| kron(&u, &pauli_x())),
            GateTarget::Dispersive { .. } => match self.target.unitary(config)? {
                Some(u) => u,
                None => return Ok(None),
            },
            _ => return Ok(None),
        };
        let n = config.n_qubits;
        let u = schedule_propagator(config, BasisTag::Dressed, &self.schedule)?;
        let indices: Vec<usize> = (0..1usize << k)
            .map(|s| {
                involved
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| (s >> (k - 1 - j)) & 1 == 1)
                    .fold(0, |acc, (_, &q)| acc | qubit_mask(q, n))
            })
            .collect();
        let block = extract_block(u.matrix(), &indices);
        trace_fidelity(&target, &block).map(Some)
    }
}

fn check_qubit(config: &SystemConfig, q: usize) -> Result<()> {
    if q >= config.n_qubits {
        return Err(Error::invalid(format!(
            "qubit {q} out of range for {} qubits",
            config.n_qubits
        )));
    }
    Ok(())
}

/// Resonant time for a full `|0⟩ → |1⟩` transfer with `n_eff` photons.
pub fn x_duration(g: f64, n_eff: usize) -> f64 {
    PI / (2.0 * g * (n_eff as f64).sqrt())
}

/// Resonant `X` on one qubit assuming the battery holds `n_fb` photons.
pub fn single_qubit_x(config: &SystemConfig, qubit: usize, park: &ParkPolicy) -> Result<GateSpec> {
    x_with_photons(config, qubit, config.n_fb, park)
}

/// Resonant `X` on one qubit when the battery holds `n_eff` photons.
pub fn x_with_photons(
    config: &SystemConfig,
    qubit: usize,
    n_eff: usize,
    park: &ParkPolicy,
) -> Result<GateSpec> {
    config.require_dressed()?;
    check_qubit(config, qubit)?;
    if n_eff == 0 {
        return Err(Error::invalid("energy transfer needs at least one photon"));
    }
    let t = x_duration(config.coupling, n_eff);
    Ok(GateSpec {
        name: format!("x_q{}", qubit + 1),
        schedule: DetuningSchedule {
            segments: park.step(config, t, &[(qubit, 0.0)]),
        },
        target: GateTarget::X {
            qubits: vec![qubit],
        },
        involved_qubits: vec![qubit],
        entangling_gates: 0,
    })
}

/// Charge qubits one at a time; step `k` lasts `π/(2g√(n_fb − k))`.
pub fn sequential_full_charge(config: &SystemConfig, park: &ParkPolicy) -> Result<GateSpec> {
    config.require_dressed()?;
    let mut schedule = DetuningSchedule::new();
    for k in 0..config.n_qubits {
        let t = x_duration(config.coupling, config.n_fb - k);
        schedule.segments.extend(park.step(config, t, &[(k, 0.0)]));
    }
    Ok(GateSpec {
        name: "sequential_charge".into(),
        schedule,
        target: GateTarget::X {
            qubits: (0..config.n_qubits).collect(),
        },
        involved_qubits: (0..config.n_qubits).collect(),
        entangling_gates: 0,
    })
}

/// `(π/2g) Σ_k 1/√(n_fb − k)`.
pub fn sequential_charge_time(config: &SystemConfig) -> f64 {
    (0..config.n_qubits)
        .map(|k| x_duration(config.coupling, config.n_fb - k))
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Battery {
    Fock,
    /// Coherent state with mean photon number `n_fb`.
    Coherent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollectiveCharge {
    pub gate: GateSpec,
    pub battery: Battery,
    pub time: f64,
    /// `time · 2g√r / π` with `r = n_fb / N`; equals 1 for a lone qubit.
    pub normalized_time: f64,
    /// `1 − |⟨1…1|ψ(T)⟩|²`.
    pub population_error: f64,
    /// `1 − ⟨n_q⟩/N` at `T`.
    pub energy_error: f64,
}

const SCAN_POINTS: usize = 400;
const TIME_TOL: f64 = 1e-10;

/// First local maximum of `f` on a uniform scan of `[0, t_max]`, refined by
/// golden-section search. Falls back to the scan maximum.
pub fn first_peak(f: impl Fn(f64) -> f64, t_max: f64) -> f64 {
    let dt = t_max / SCAN_POINTS as f64;
    let vals: Vec<f64> = (0..=SCAN_POINTS).map(|i| f(i as f64 * dt)).collect();
    let peak = (1..SCAN_POINTS)
        .find(|&i| vals[i] >= vals[i - 1] && vals[i] > vals[i + 1])
        .unwrap_or_else(|| {
            (0..=SCAN_POINTS)
                .max_by(|&a, &b| vals[a].total_cmp(&vals[b]))
                .unwrap_or(0)
                .clamp(1, SCAN_POINTS - 1)
        });
    let (mut a, mut b) = ((peak - 1) as f64 * dt, (peak + 1) as f64 * dt);
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - phi * (b - a);
    let mut x2 = a + phi * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while b - a > TIME_TOL {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + phi * (b - a);
            f2 = f(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - phi * (b - a);
            f1 = f(x1);
        }
    }
    0.5 * (a + b)
}

/// Symmetric qubits ⊗ Fock evolution from `|0…0⟩ ⊗ Σ_p c_p|p⟩` at zero
/// detuning. Each total-excitation sector is a tridiagonal `(N+1)`-level
/// chain, so the photon cutoff only enters through the initial amplitudes.
struct SymmetricFockEvolution {
    n: usize,
    sectors: Vec<(f64, Spectrum)>,
}

impl SymmetricFockEvolution {
    fn new(n_qubits: usize, g: f64, photon_weights: &[f64]) -> Result<Self> {
        let sectors = photon_weights
            .iter()
            .enumerate()
            .filter(|(_, w)| **w > 0.0)
            .map(|(m, &w)| {
                // sector with m excitations: qubit excitations k = 0..min(N, m)
                let kmax = n_qubits.min(m);
                let mut h = CMatrix::zeros(kmax + 1, kmax + 1);
                for k in 0..kmax {
                    let v = c(g
                        * (((n_qubits - k) * (k + 1)) as f64).sqrt()
                        * ((m - k) as f64).sqrt());
                    h[(k + 1, k)] = v;
                    h[(k, k + 1)] = v;
                }
                let op = crate::hamiltonian::HermitianOperator::from_parts(
                    h,
                    crate::hamiltonian::BasisTag::Dicke,
                );
                Ok((w, Spectrum::new(&op)?))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            n: n_qubits,
            sectors,
        })
    }

    /// Excitation-count distribution at time `t`.
    fn distribution(&self, t: f64) -> Vec<f64> {
        let mut p = vec![0.0; self.n + 1];
        for (w, s) in &self.sectors {
            let dim = s.eigenvalues().len();
            let mut psi = CVector::zeros(dim);
            psi[0] = c(1.0);
            let out = s.evolve(&psi, t);
            for (k, a) in out.iter().enumerate() {
                p[k] += w * a.norm_sqr();
            }
        }
        p
    }
}

fn poisson_weights(mean: f64, cutoff: usize) -> Vec<f64> {
    let mut w = Vec::with_capacity(cutoff + 1);
    let mut log_p = -mean;
    for p in 0..=cutoff {
        if p > 0 {
            log_p += mean.ln() - (p as f64).ln();
        }
        w.push(log_p.exp());
    }
    w
}

/// Collective resonant charging `|0…0⟩ → |1…1⟩` with all qubits at zero
/// detuning; the gate time is the first maximum of the `|1…1⟩` population.
pub fn collective_charge(config: &SystemConfig, battery: Battery) -> Result<CollectiveCharge> {
    config.require_dressed()?;
    let n = config.n_qubits;
    let g = config.coupling;
    let r = config.n_fb as f64 / n as f64;
    let distribution: Box<dyn Fn(f64) -> Vec<f64>> = match battery {
        Battery::Fock => {
            let s = Spectrum::new(&build_collective(config, 0.0)?)?;
            Box::new(move |t| {
                let mut psi = CVector::zeros(n + 1);
                psi[0] = c(1.0);
                s.evolve(&psi, t).iter().map(|a| a.norm_sqr()).collect()
            })
        }
        Battery::Coherent => {
            let cutoff = config
                .photon_cutoff
                .unwrap_or(0)
                .max(coherent_cutoff(config.n_fb as f64));
            let evo = SymmetricFockEvolution::new(n, g, &poisson_weights(config.n_fb as f64, cutoff))?;
            Box::new(move |t| evo.distribution(t))
        }
    };
    let time = if n == 1 && battery == Battery::Fock {
        x_duration(g, config.n_fb)
    } else {
        first_peak(|t| distribution(t)[n], PI * (n as f64).sqrt() / g)
    };
    let p = distribution(time);
    let mean_excitation: f64 = p.iter().enumerate().map(|(k, x)| k as f64 * x).sum();
    Ok(CollectiveCharge {
        gate: GateSpec {
            name: "collective_charge".into(),
            schedule: DetuningSchedule::single(time, DetuningVector::uniform(n, 0.0)),
            target: GateTarget::FullCharge,
            involved_qubits: (0..n).collect(),
            entangling_gates: 0,
        },
        battery,
        time,
        normalized_time: time * 2.0 * g * r.sqrt() / PI,
        population_error: (1.0 - p[n]).max(0.0),
        energy_error: (1.0 - mean_excitation / n as f64).max(0.0),
    })
}

/// Dispersive exchange time `π|Δ|/(2g²)`.
pub fn entangling_duration(g: f64, delta: f64) -> f64 {
    PI * delta.abs() / (2.0 * g * g)
}

/// Propagator of the dispersive model on `n_involved` qubits.
pub fn dispersive_unitary(
    g: f64,
    delta: f64,
    n_involved: usize,
    n_fb: usize,
    duration: f64,
) -> Result<CMatrix> {
    let cfg = SystemConfig {
        n_qubits: n_involved,
        coupling: g,
        n_fb,
        photon_cutoff: None,
    };
    let h = build_dispersive(&cfg, delta, n_involved)?;
    Ok(crate::evolution::propagator(&h, duration)?.matrix().clone())
}

/// Involved qubits share detuning `delta` for `π|Δ|/(2g²)`; others parked.
pub fn entangling_gate(
    config: &SystemConfig,
    qubits: &[usize],
    delta: f64,
    park: &ParkPolicy,
) -> Result<GateSpec> {
    config.require_dressed()?;
    if !(delta.is_finite() && delta != 0.0) {
        return Err(Error::invalid("entangling detuning must be nonzero"));
    }
    if qubits.is_empty() {
        return Err(Error::invalid("entangling gate needs at least one qubit"));
    }
    for &q in qubits {
        check_qubit(config, q)?;
    }
    let t = entangling_duration(config.coupling, delta);
    let active: Vec<(usize, f64)> = qubits.iter().map(|&q| (q, delta)).collect();
    Ok(GateSpec {
        name: format!("ent_{}", qubits.len()),
        schedule: DetuningSchedule {
            segments: park.step(config, t, &active),
        },
        target: GateTarget::Dispersive {
            delta,
            n_involved: qubits.len(),
            n_fb: config.n_fb,
            duration: t,
        },
        involved_qubits: qubits.to_vec(),
        entangling_gates: 1,
    })
}

/// `i^N Z^{⊗N}` on `n` qubits.
pub fn parity_kickback_unitary(n: usize) -> CMatrix {
    let phase = I.powu(n as u32);
    let dim = 1usize << n;
    CMatrix::from_diagonal(&CVector::from_iterator(
        dim,
        (0..dim).map(|b| {
            if popcount(b).is_multiple_of(2) {
                phase
            } else {
                -phase
            }
        }),
    ))
}

/// Analytic `Z^{⊗N}` helper for tests and stabilizer checks.
pub fn z_string(n: usize) -> CMatrix {
    let mut u = CMatrix::identity(1, 1);
    for _ in 0..n {
        u = kron(&u, &pauli_z());
    }
    u
}

/// Controlled-parity probe: `√X` on the ancilla, one entangling gate on the
/// data qubits with the ancilla echo-parked, then a second `√X`.
///
/// `n_eff` is the photon number the ancilla sees, i.e. `n_fb` minus the
/// excitations known to be present on the other qubits.
pub fn parity_probe(
    config: &SystemConfig,
    data: &[usize],
    ancilla: usize,
    delta: f64,
    n_eff: usize,
    park: &ParkPolicy,
) -> Result<GateSpec> {
    config.require_dressed()?;
    check_qubit(config, ancilla)?;
    if data.contains(&ancilla) {
        return Err(Error::invalid("ancilla must not be a data qubit"));
    }
    if n_eff == 0 {
        return Err(Error::invalid("ancilla needs at least one photon"));
    }
    let half_x = x_duration(config.coupling, n_eff) / 2.0;
    let ent = entangling_gate(
        config,
        data,
        delta,
        &ParkPolicy {
            echo: true,
            ..*park
        },
    )?;
    let mut schedule = DetuningSchedule {
        segments: park.step(config, half_x, &[(ancilla, 0.0)]),
    };
    schedule.extend(&ent.schedule);
    schedule
        .segments
        .extend(park.step(config, half_x, &[(ancilla, 0.0)]));
    let mut involved = data.to_vec();
    involved.push(ancilla);
    Ok(GateSpec {
        name: format!("parity_probe_{}", data.len()),
        schedule,
        target: GateTarget::ParityProbe {
            data: data.to_vec(),
            ancilla,
        },
        involved_qubits: involved,
        entangling_gates: 1,
    })
}

/// Closed-form two-qubit local `X^α`: duration `π/(g(√n − √(n−1)))` and
/// `α = √(n−1)/(√n − √(n−1))`.
pub fn two_qubit_local_x(g: f64, n_fb: usize) -> Result<(f64, f64)> {
    if n_fb < 2 {
        return Err(Error::invalid("closed-form local gate needs n_fb >= 2"));
    }
    let a = (n_fb as f64).sqrt();
    let b = ((n_fb - 1) as f64).sqrt();
    Ok((PI / (g * (a - b)), b / (a - b)))
}

/// `exp(−iθ n̂·σ/2)` for a unit axis.
pub fn rotation(axis: [f64; 3], angle: f64) -> CMatrix {
    let norm = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
    let (x, y, z) = (axis[0] / norm, axis[1] / norm, axis[2] / norm);
    let (s, co) = ((angle / 2.0).sin(), (angle / 2.0).cos());
    CMatrix::from_row_slice(
        2,
        2,
        &[
            C64::new(co, -s * z),
            C64::new(-s * y, -s * x),
            C64::new(s * y, -s * x),
            C64::new(co, s * z),
        ],
    )
}

/// Axis and angle of a `2 × 2` unitary with its global phase removed.
/// The angle lies in `[0, π]` once the axis sign is chosen.
pub fn rotation_of(u: &CMatrix) -> ([f64; 3], f64) {
    let det = u[(0, 0)] * u[(1, 1)] - u[(0, 1)] * u[(1, 0)];
    let phase = det.sqrt();
    let v = u.map(|z| z / phase);
    // v = cos(θ/2) I − i sin(θ/2) n·σ
    let co = (0.5 * (v[(0, 0)] + v[(1, 1)])).re;
    let nx = -(0.5 * (v[(0, 1)] + v[(1, 0)])).im;
    let ny = (0.5 * (v[(1, 0)] - v[(0, 1)])).re;
    let nz = -(0.5 * (v[(0, 0)] - v[(1, 1)])).im;
    let s = (nx * nx + ny * ny + nz * nz).sqrt();
    let (co, nx, ny, nz) = if co < 0.0 {
        (-co, -nx, -ny, -nz)
    } else {
        (co, nx, ny, nz)
    };
    let angle = 2.0 * s.atan2(co);
    if s < 1e-15 {
        return ([0.0, 0.0, 1.0], 0.0);
    }
    ([nx / s, ny / s, nz / s], angle)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolution::{run_schedule, schedule_propagator, QuantumState};
    use crate::hamiltonian::BasisTag;
    use crate::linalg::max_abs_diff;

    #[test]
    fn x_duration_examples() {
        let g = single_qubit_x(&SystemConfig::new(1, 1.0, 9), 0, &ParkPolicy::default()).unwrap();
        assert!((g.schedule.total_duration() - PI / 6.0).abs() < 1e-15);
        let g = single_qubit_x(&SystemConfig::new(1, 1.0, 1), 0, &ParkPolicy::default()).unwrap();
        assert!((g.schedule.total_duration() - PI / 2.0).abs() < 1e-15);
    }

    #[test]
    fn park_values_alternate_and_spread() {
        let p = ParkPolicy::default();
        let v: Vec<f64> = (0..4).map(|r| p.park_value(r, 1.0)).collect();
        assert_eq!(v, vec![200.0, -200.0, 250.0, -250.0]);
    }

    #[test]
    fn echo_splits_steps() {
        let cfg = SystemConfig::new(3, 1.0, 4);
        let segs = ParkPolicy::echoed(100.0).step(&cfg, 2.0, &[(1, 0.5)]);
        assert_eq!(segs.len(), 2);
        assert_eq!(segs[0].delta.0, vec![100.0, 0.5, -100.0]);
        assert_eq!(segs[1].delta.0, vec![-100.0, 0.5, 100.0]);
        assert_eq!(segs[0].duration, 1.0);
    }

    #[test]
    fn idle_qubit_population_is_preserved_at_default_park() {
        for n_fb in [2, 5, 9] {
            let cfg = SystemConfig::new(2, 1.0, n_fb);
            let gate = single_qubit_x(&cfg, 0, &ParkPolicy::default()).unwrap();
            let out = run_schedule(&cfg, &QuantumState::ground_dressed(&cfg), &gate.schedule)
                .unwrap();
            let idle_excited = out.population(0b01) + out.population(0b11);
            assert!(idle_excited < 1e-3, "n_fb={n_fb}: {idle_excited}");
        }
    }

    #[test]
    fn sequential_time_formula() {
        let t = sequential_charge_time(&SystemConfig::new(2, 1.0, 2));
        assert!((t - PI / 2.0 * (1.0 / 2f64.sqrt() + 1.0)).abs() < 1e-14);
        assert!((t - 2.6815).abs() < 1e-3);
    }

    #[test]
    fn sequential_charge_single_qubit_equals_x() {
        let cfg = SystemConfig::new(1, 1.0, 3);
        let a = sequential_full_charge(&cfg, &ParkPolicy::default()).unwrap();
        let b = single_qubit_x(&cfg, 0, &ParkPolicy::default()).unwrap();
        assert_eq!(a.schedule, b.schedule);
    }

    #[test]
    fn collective_single_qubit_is_exact() {
        let r = collective_charge(&SystemConfig::new(1, 1.0, 4), Battery::Fock).unwrap();
        assert!((r.normalized_time - 1.0).abs() < 1e-15);
        assert!(r.population_error < 1e-14);
    }

    #[test]
    fn first_peak_of_cosine_square() {
        let t = first_peak(|t| (t.sin()).powi(2), 10.0);
        assert!((t - PI / 2.0).abs() < 1e-6);
    }

    #[test]
    fn symmetric_coherent_evolution_matches_full_space() {
        // coherent battery, N = 2, mean 3: compare against the full builder
        let n = 2;
        let cutoff = 30;
        let w = poisson_weights(3.0, cutoff);
        let evo = SymmetricFockEvolution::new(n, 1.0, &w).unwrap();
        let cfg = SystemConfig::new(n, 1.0, 3).with_cutoff(cutoff);
        let h = crate::hamiltonian::build_full(&cfg, &DetuningVector::uniform(n, 0.0)).unwrap();
        let s = Spectrum::new(&h).unwrap();
        let mut psi = CVector::zeros(cfg.full_dim());
        for (p, wp) in w.iter().enumerate() {
            psi[p << n] = c(wp.sqrt());
        }
        let t = 0.83;
        let out = s.evolve(&psi, t);
        let mut dist = vec![0.0; n + 1];
        for (i, a) in out.iter().enumerate() {
            dist[popcount(i & 3)] += a.norm_sqr();
        }
        let sym = evo.distribution(t);
        for k in 0..=n {
            assert!((dist[k] - sym[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn kickback_small_cases() {
        let u2 = parity_kickback_unitary(2);
        let expected = CMatrix::from_diagonal(&CVector::from_vec(vec![
            c(-1.0),
            c(1.0),
            c(1.0),
            c(-1.0),
        ]));
        assert!(max_abs_diff(&u2, &expected) < 1e-15);
        let u1 = parity_kickback_unitary(1);
        assert!(max_abs_diff(&u1, &(pauli_z() * I)) < 1e-15);
    }

    #[test]
    fn kickback_from_dispersive_model() {
        for n in 1..=4 {
            let delta = 17.0;
            let t = entangling_duration(1.0, delta);
            let a = dispersive_unitary(1.0, delta, n, 6, t).unwrap();
            let b = dispersive_unitary(1.0, delta, n, 5, t).unwrap();
            let k = a.adjoint() * b;
            assert!(max_abs_diff(&k, &parity_kickback_unitary(n)) < 1e-10);
        }
    }

    #[test]
    fn dispersive_gate_commutes_with_parity() {
        let u = dispersive_unitary(1.0, 13.0, 3, 4, 2.7).unwrap();
        let z = z_string(3);
        assert!(max_abs_diff(&(&u * &z), &(&z * &u)) < 1e-12);
    }

    #[test]
    fn two_qubit_entangler_matches_closed_form_matrix() {
        // Δ²/g² = 19: off-diagonal (−i)^19 = i, |11⟩ phase (−1)^{n+18}
        let delta = 19f64.sqrt();
        for n_fb in [4usize, 5] {
            let t = entangling_duration(1.0, delta);
            let u = dispersive_unitary(1.0, delta, 2, n_fb, t).unwrap();
            let sign = if n_fb % 2 == 0 { 1.0 } else { -1.0 };
            #[rustfmt::skip]
            let expected = CMatrix::from_row_slice(
                4,
                4,
                &[
                    c(sign), c(0.0), c(0.0), c(0.0),
                    c(0.0), c(0.0), I, c(0.0),
                    c(0.0), I, c(0.0), c(0.0),
                    c(0.0), c(0.0), c(0.0), c(sign),
                ],
            );
            let overlap = crate::linalg::trace(&(expected.adjoint() * &u)).norm() / 4.0;
            assert!((overlap - 1.0).abs() < 1e-10, "n_fb={n_fb}: {overlap}");
        }
    }

    #[test]
    fn dispersive_exchange_is_complete_at_t_ent() {
        let u = dispersive_unitary(1.0, 9.0, 2, 4, entangling_duration(1.0, 9.0)).unwrap();
        assert!((u[(2, 1)].norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn local_x_closed_form() {
        let (t, alpha) = two_qubit_local_x(1.0, 2).unwrap();
        assert!((t - 7.5845).abs() < 1e-4);
        assert!((alpha - 1.0 / (2f64.sqrt() - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn local_x_closed_form_is_spectator_independent() {
        let n = 3;
        let (t, _) = two_qubit_local_x(1.0, n).unwrap();
        let ideal = |n_eff: usize| {
            let th = (n_eff as f64).sqrt() * t;
            CMatrix::from_row_slice(2, 2, &[c(th.cos()), -I * th.sin(), -I * th.sin(), c(th.cos())])
        };
        // equal up to the sign from the extra 2π of Rabi phase
        let f = crate::fidelity::trace_fidelity(&ideal(n), &ideal(n - 1)).unwrap();
        assert!(1.0 - f < 1e-12);
    }

    #[test]
    fn rotation_round_trip() {
        let u = rotation([0.07, 0.811, 1.0], 0.96 * PI) * C64::from_polar(1.0, 0.3);
        let (axis, angle) = rotation_of(&u);
        let norm = (0.07f64.powi(2) + 0.811f64.powi(2) + 1.0).sqrt();
        assert!((angle - 0.96 * PI).abs() < 1e-12);
        assert!((axis[1] - 0.811 / norm).abs() < 1e-12);
    }

    #[test]
    fn realized_x_is_exact_for_one_qubit() {
        let cfg = SystemConfig::new(1, 1.0, 5);
        let gate = single_qubit_x(&cfg, 0, &ParkPolicy::default()).unwrap();
        let u = schedule_propagator(&cfg, BasisTag::Dressed, &gate.schedule).unwrap();
        let x = gate.target.unitary(&cfg).unwrap().unwrap();
        let f = crate::linalg::trace(&(x.adjoint() * u.matrix())).norm_sqr() / 4.0;
        assert!(1.0 - f < 1e-12);
    }

    #[test]
    fn realized_fidelity_of_native_gates() {
        let cfg = SystemConfig::new(3, 1.0, 5);
        let x = single_qubit_x(&cfg, 1, &ParkPolicy::default()).unwrap();
        assert!(x.realized_fidelity(&cfg).unwrap().unwrap() > 0.999);
        let mut errs = Vec::new();
        let pair = SystemConfig::new(2, 1.0, 4);
        for delta in [10.0, 20.0, 40.0] {
            let ent = entangling_gate(&pair, &[0, 1], delta, &ParkPolicy::default()).unwrap();
            errs.push(1.0 - ent.realized_fidelity(&pair).unwrap().unwrap());
        }
        assert!(errs[0] > errs[1] && errs[1] > errs[2], "{errs:?}");
        let probe = parity_probe(&cfg, &[0, 1], 2, 20.0, 5, &ParkPolicy::default()).unwrap();
        assert!(probe.realized_fidelity(&cfg).unwrap().is_none());
    }
}
