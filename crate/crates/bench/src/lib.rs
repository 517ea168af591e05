//! Fixtures shared by the benchmarks.

use qbattery_core::{DetuningSchedule, SystemConfig};

/// `steps` segments with deterministic, well-spread detunings.
pub fn fixture_schedule(config: &SystemConfig, steps: usize) -> DetuningSchedule {
    (0..steps).fold(DetuningSchedule::new(), |s, k| {
        let delta: Vec<f64> = (0..config.n_qubits)
            .map(|q| 3.0 * ((k * config.n_qubits + q) as f64 * 1.7).sin())
            .collect();
        s.then(0.4 + 0.1 * k as f64, delta)
    })
}
