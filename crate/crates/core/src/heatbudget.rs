//! Cryogenic heat budget and room-temperature control energy per qubit.
//!
//! Everything here is in SI units (watts, joules, seconds). Parameters are
//! read from a JSON data file; [`HeatModel::default`] uses the bundled one.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const DEFAULT_PARAMETERS: &str = include_str!("../data/heat_parameters.json");

/// dBm to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

fn db_gain(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StagePower {
    pub cp: f64,
    pub mxc: f64,
}

impl StagePower {
    fn scale(self, k: f64) -> Self {
        Self {
            cp: self.cp * k,
            mxc: self.mxc * k,
        }
    }
}

impl std::ops::Add for StagePower {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self {
            cp: self.cp + o.cp,
            mxc: self.mxc + o.mxc,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CableKind {
    SsDrive,
    SsFlux,
    Nbti,
    Opt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    Standard,
    SharedCavity,
    StandardSc,
    SharedCavitySc,
}

impl Architecture {
    pub const ALL: [Architecture; 4] = [
        Architecture::Standard,
        Architecture::SharedCavity,
        Architecture::StandardSc,
        Architecture::SharedCavitySc,
    ];

    pub fn key(self) -> &'static str {
        match self {
            Architecture::Standard => "standard",
            Architecture::SharedCavity => "shared_cavity",
            Architecture::StandardSc => "standard_sc",
            Architecture::SharedCavitySc => "shared_cavity_sc",
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for Architecture {
    type Err = Error;

    /// Accepts `standard`, `shared`, `standard-sc`, `shared-sc` and the
    /// snake_case keys.
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "standard" => Ok(Architecture::Standard),
            "shared" | "shared_cavity" => Ok(Architecture::SharedCavity),
            "standard_sc" => Ok(Architecture::StandardSc),
            "shared_sc" | "shared_cavity_sc" => Ok(Architecture::SharedCavitySc),
            other => Err(Error::invalid(format!(
                "unknown architecture '{other}' (expected standard, shared, standard-sc or shared-sc)"
            ))),
        }
    }
}

/// Active load of one control channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Channel {
    /// Pulsed signal: average power at the device is `duty · Σ pulses`, and
    /// each stage dissipates what enters it, i.e. the device power times the
    /// cumulative attenuation below and at that stage.
    Attenuated {
        pulse_dbm: Vec<f64>,
        duty_cycle: f64,
        lines_per_qubit: f64,
        attenuation_mxc_db: f64,
        attenuation_cp_db: f64,
        rt_extra_db: f64,
    },
    /// Per-stage powers given directly, scaled by `(1 + overhead)/reduction`.
    Fixed {
        cp: f64,
        mxc: f64,
        overhead: f64,
        reduction: f64,
        rt_extra_db: f64,
    },
}

impl Channel {
    pub fn stage_power(&self) -> StagePower {
        match self {
            Channel::Attenuated {
                pulse_dbm,
                duty_cycle,
                lines_per_qubit,
                attenuation_mxc_db,
                attenuation_cp_db,
                ..
            } => {
                let device: f64 =
                    duty_cycle * pulse_dbm.iter().map(|&p| dbm_to_watts(p)).sum::<f64>();
                let mxc = device * db_gain(*attenuation_mxc_db);
                StagePower {
                    cp: mxc * db_gain(*attenuation_cp_db) * lines_per_qubit,
                    mxc: mxc * lines_per_qubit,
                }
            }
            Channel::Fixed {
                cp,
                mxc,
                overhead,
                reduction,
                ..
            } => StagePower { cp: *cp, mxc: *mxc }.scale((1.0 + overhead) / reduction),
        }
    }

    /// Power drawn at room temperature for this channel.
    pub fn rt_power(&self) -> f64 {
        let extra = match self {
            Channel::Attenuated { rt_extra_db, .. } | Channel::Fixed { rt_extra_db, .. } => {
                *rt_extra_db
            }
        };
        self.stage_power().cp * db_gain(extra)
    }

    fn validate(&self, name: &str) -> Result<()> {
        let ok = match self {
            Channel::Attenuated {
                pulse_dbm,
                duty_cycle,
                lines_per_qubit,
                ..
            } => {
                (0.0..=1.0).contains(duty_cycle)
                    && *lines_per_qubit >= 0.0
                    && pulse_dbm.iter().all(|p| p.is_finite())
            }
            Channel::Fixed {
                cp, mxc, reduction, ..
            } => *cp >= 0.0 && *mxc >= 0.0 && *reduction > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("channel '{name}' has invalid parameters")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchitectureConfig {
    pub drive_cables: f64,
    pub flux_cable: CableKind,
    pub nbti_cables: f64,
    pub drive_active: bool,
    pub flux_active: bool,
    pub shared_cavity: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatModel {
    pub cooling: StagePower,
    pub cables: BTreeMap<CableKind, StagePower>,
    pub channels: BTreeMap<String, Channel>,
    pub architectures: BTreeMap<Architecture, ArchitectureConfig>,
    pub cycle_time: f64,
    pub shared_overhead_rounds: f64,
    pub qubits_per_battery: f64,
}

impl Default for HeatModel {
    fn default() -> Self {
        Self::from_json(DEFAULT_PARAMETERS).expect("bundled heat parameters are valid")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelLoad {
    pub channel: String,
    pub cp: f64,
    pub mxc: f64,
    pub rt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatReport {
    pub architecture: Architecture,
    pub passive_cp: f64,
    pub passive_mxc: f64,
    pub active_cp: f64,
    pub active_mxc: f64,
    pub total_cp: f64,
    pub total_mxc: f64,
    pub qubit_limit_cp: u64,
    pub qubit_limit_mxc: u64,
    pub qubit_limit: u64,
    pub channels: Vec<ChannelLoad>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyPoint {
    pub depth: f64,
    pub energy: f64,
}

impl HeatModel {
    pub fn from_json(text: &str) -> Result<Self> {
        let model: Self = serde_json::from_str(text)?;
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        for (kind, p) in &self.cables {
            if !(p.cp >= 0.0 && p.mxc >= 0.0) {
                return Err(Error::invalid(format!("cable {kind:?} has negative passive heat")));
            }
        }
        for (name, ch) in &self.channels {
            ch.validate(name)?;
        }
        for arch in Architecture::ALL {
            let cfg = self.config(arch)?;
            if cfg.drive_cables < 0.0 || cfg.nbti_cables < 0.0 {
                return Err(Error::invalid(format!("{arch}: negative cable count")));
            }
            self.cable(cfg.flux_cable)?;
        }
        self.cable(CableKind::SsDrive)?;
        self.cable(CableKind::Nbti)?;
        if !(self.cycle_time > 0.0 && self.qubits_per_battery > 0.0) {
            return Err(Error::invalid("cycle_time and qubits_per_battery must be positive"));
        }
        Ok(())
    }

    pub fn config(&self, arch: Architecture) -> Result<&ArchitectureConfig> {
        self.architectures
            .get(&arch)
            .ok_or_else(|| Error::invalid(format!("no parameters for architecture {arch}")))
    }

    fn cable(&self, kind: CableKind) -> Result<StagePower> {
        self.cables
            .get(&kind)
            .copied()
            .ok_or_else(|| Error::invalid(format!("no passive heat for cable {kind:?}")))
    }

    fn channel(&self, name: &str) -> Result<&Channel> {
        self.channels
            .get(name)
            .ok_or_else(|| Error::invalid(format!("no parameters for channel '{name}'")))
    }

    pub fn passive_per_qubit(&self, arch: Architecture) -> Result<StagePower> {
        let cfg = self.config(arch)?;
        Ok(self.cable(CableKind::SsDrive)?.scale(cfg.drive_cables)
            + self.cable(cfg.flux_cable)?
            + self.cable(CableKind::Nbti)?.scale(cfg.nbti_cables))
    }

    /// Channels that dissipate for `arch`, with per-qubit loads.
    pub fn active_channels(&self, arch: Architecture) -> Result<Vec<ChannelLoad>> {
        let cfg = self.config(arch)?;
        let mut names = Vec::new();
        if cfg.drive_active {
            names.push("drive");
        }
        if cfg.flux_active {
            names.push("flux");
        }
        names.extend(["readout_drive", "pump"]);
        names
            .into_iter()
            .map(|name| {
                let ch = self.channel(name)?;
                let p = ch.stage_power();
                Ok(ChannelLoad {
                    channel: name.to_string(),
                    cp: p.cp,
                    mxc: p.mxc,
                    rt: ch.rt_power(),
                })
            })
            .collect()
    }

    pub fn active_per_qubit(&self, arch: Architecture) -> Result<StagePower> {
        Ok(self
            .active_channels(arch)?
            .iter()
            .fold(StagePower { cp: 0.0, mxc: 0.0 }, |acc, c| {
                acc + StagePower { cp: c.cp, mxc: c.mxc }
            }))
    }

    /// Qubit limit with the model's cooling powers.
    pub fn qubit_limit(&self, arch: Architecture) -> Result<HeatReport> {
        self.qubit_limit_with(arch, self.cooling)
    }

    pub fn qubit_limit_with(&self, arch: Architecture, cooling: StagePower) -> Result<HeatReport> {
        if !(cooling.cp > 0.0 && cooling.mxc > 0.0) {
            return Err(Error::invalid("cooling powers must be positive"));
        }
        let passive = self.passive_per_qubit(arch)?;
        let channels = self.active_channels(arch)?;
        let active = self.active_per_qubit(arch)?;
        let total = passive + active;
        if total.cp <= 0.0 || total.mxc <= 0.0 {
            return Err(Error::invalid(format!("{arch}: zero heat load per qubit")));
        }
        let limit_cp = (cooling.cp / total.cp).floor() as u64;
        let limit_mxc = (cooling.mxc / total.mxc).floor() as u64;
        Ok(HeatReport {
            architecture: arch,
            passive_cp: passive.cp,
            passive_mxc: passive.mxc,
            active_cp: active.cp,
            active_mxc: active.mxc,
            total_cp: total.cp,
            total_mxc: total.mxc,
            qubit_limit_cp: limit_cp,
            qubit_limit_mxc: limit_mxc,
            qubit_limit: limit_cp.min(limit_mxc),
            channels,
        })
    }

    /// Room-temperature power per qubit during computation.
    pub fn rt_power_per_qubit(&self, arch: Architecture) -> Result<f64> {
        Ok(self.active_channels(arch)?.iter().map(|c| c.rt).sum())
    }

    /// One-off energy per qubit for charging shared cavities: the given
    /// number of average drive rounds, shared by the qubits of one battery.
    pub fn overhead_energy(&self, arch: Architecture) -> Result<f64> {
        if !self.config(arch)?.shared_cavity {
            return Ok(0.0);
        }
        let drive = self.channel("drive")?.rt_power();
        Ok(self.shared_overhead_rounds / self.qubits_per_battery * drive * self.cycle_time)
    }

    /// `E(d) = E_overhead + d · cycle_time · P_RT` for each depth.
    pub fn rt_energy_curve(&self, arch: Architecture, depths: &[f64]) -> Result<Vec<EnergyPoint>> {
        if let Some(d) = depths.iter().find(|d| !(d.is_finite() && **d >= 0.0)) {
            return Err(Error::invalid(format!("depth must be non-negative, got {d}")));
        }
        let e0 = self.overhead_energy(arch)?;
        let slope = self.rt_power_per_qubit(arch)? * self.cycle_time;
        Ok(depths
            .iter()
            .map(|&d| EnergyPoint {
                depth: d,
                energy: e0 + slope * d,
            })
            .collect())
    }

    /// Depth beyond which `candidate` uses less room-temperature energy than
    /// `baseline`; `None` if it never does.
    pub fn crossover_depth(&self, candidate: Architecture, baseline: Architecture) -> Result<Option<f64>> {
        let de = self.overhead_energy(candidate)? - self.overhead_energy(baseline)?;
        let ds = (self.rt_power_per_qubit(baseline)? - self.rt_power_per_qubit(candidate)?)
            * self.cycle_time;
        if ds <= 0.0 {
            return Ok(if de < 0.0 { Some(0.0) } else { None });
        }
        Ok(Some((de / ds).max(0.0)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const NW: f64 = 1e-9;

    #[test]
    fn dbm_conversion() {
        assert!((dbm_to_watts(30.0) - 1.0).abs() < 1e-15);
        assert!((dbm_to_watts(-60.0) - 1e-9).abs() < 1e-24);
    }

    #[test]
    fn passive_totals() {
        let m = HeatModel::default();
        let p = m.passive_per_qubit(Architecture::Standard).unwrap();
        assert!((p.cp / NW - 756.25).abs() < 1e-9);
        assert!((p.mxc / NW - 29.0).abs() < 1e-9);
        let p = m.passive_per_qubit(Architecture::SharedCavity).unwrap();
        assert!((p.mxc / NW - 21.35).abs() < 1e-9);
    }

    #[test]
    fn active_breakdown() {
        let m = HeatModel::default();
        let a = m.active_channels(Architecture::Standard).unwrap();
        let drive = &a[0];
        // 0.2 · (10^-10.1 + 10^-10.7) W at the qubit, 20 dB and 40 dB up
        let p_avg = 0.2 * (10f64.powf(-10.1) + 10f64.powf(-10.7));
        assert!((drive.mxc - 1e2 * p_avg).abs() < 1e-20);
        assert!((drive.cp - 1e4 * p_avg).abs() < 1e-18);
        let flux = &a[1];
        assert!((flux.mxc / NW - 50.0 * 7.0 / 18.0).abs() < 1e-9);
        let pump = &a[3];
        assert!((pump.mxc / NW - 1.25).abs() < 1e-9);
        assert!((pump.cp / NW - 12.5).abs() < 1e-9);
        let shared = m.active_channels(Architecture::SharedCavitySc).unwrap();
        let names: Vec<_> = shared.iter().map(|c| c.channel.as_str()).collect();
        assert_eq!(names, ["readout_drive", "pump"]);
    }

    #[test]
    fn totals_are_passive_plus_active() {
        let m = HeatModel::default();
        for arch in Architecture::ALL {
            let r = m.qubit_limit(arch).unwrap();
            assert_eq!(r.total_cp, r.passive_cp + r.active_cp);
            assert_eq!(r.total_mxc, r.passive_mxc + r.active_mxc);
            assert_eq!(r.qubit_limit, r.qubit_limit_cp.min(r.qubit_limit_mxc));
        }
    }

    #[test]
    fn removing_drive_never_heats() {
        let m = HeatModel::default();
        for (shared, standard) in [
            (Architecture::SharedCavity, Architecture::Standard),
            (Architecture::SharedCavitySc, Architecture::StandardSc),
        ] {
            let a = m.qubit_limit(shared).unwrap();
            let b = m.qubit_limit(standard).unwrap();
            assert!(a.total_cp <= b.total_cp && a.total_mxc <= b.total_mxc);
        }
    }

    #[test]
    fn energy_curves_are_affine() {
        let m = HeatModel::default();
        let std = m.rt_energy_curve(Architecture::Standard, &[0.0, 1.0, 2.0]).unwrap();
        assert_eq!(std[0].energy, 0.0);
        let sh = m.rt_energy_curve(Architecture::SharedCavity, &[0.0, 1.0, 2.0]).unwrap();
        assert!(sh[0].energy > 0.0);
        let slope = |c: &[EnergyPoint]| (c[1].energy - c[0].energy, c[2].energy - c[1].energy);
        let (a, b) = slope(&std);
        assert!((a - b).abs() < 1e-12 * a);
        assert!(a > slope(&sh).0);
        assert!(m.rt_energy_curve(Architecture::Standard, &[-1.0]).is_err());
    }

    #[test]
    fn architecture_names() {
        assert_eq!("shared".parse::<Architecture>().unwrap(), Architecture::SharedCavity);
        assert_eq!("standard-sc".parse::<Architecture>().unwrap(), Architecture::StandardSc);
        assert_eq!("shared-sc".parse::<Architecture>().unwrap(), Architecture::SharedCavitySc);
        assert!("hybrid".parse::<Architecture>().is_err());
    }

    #[test]
    fn rejects_bad_cooling_and_parameters() {
        let m = HeatModel::default();
        let zero = StagePower { cp: 0.0, mxc: 1.0 };
        assert!(m.qubit_limit_with(Architecture::Standard, zero).is_err());
        let bad = DEFAULT_PARAMETERS.replace("\"duty_cycle\": 0.2", "\"duty_cycle\": 1.5");
        assert!(HeatModel::from_json(&bad).is_err());
    }
}
