use proptest::prelude::*;

use qbattery_core::basis::{
    embed_dressed_in_full, popcount, restrict_full_to_dressed, symmetric_projection,
};
use qbattery_core::evolution::{run_schedule, schedule_propagator};
use qbattery_core::fidelity::{average_gate_fidelity, state_fidelity};
use qbattery_core::gates::{dispersive_unitary, z_string};
use qbattery_core::hamiltonian::excitation_number_full;
use qbattery_core::linalg::{max_abs_diff, unitarity_error, CMatrix, CVector, C64};
use qbattery_core::{BasisTag, DetuningSchedule, Propagator, QuantumState, SystemConfig};

/// `(n_qubits, n_fb)` with `n_fb` between `N` and 5.
fn system() -> impl Strategy<Value = SystemConfig> {
    (1usize..=3)
        .prop_flat_map(|n| (Just(n), n..=5))
        .prop_map(|(n, n_fb)| SystemConfig::new(n, 1.0, n_fb))
}

fn schedule(n_qubits: usize) -> impl Strategy<Value = DetuningSchedule> {
    prop::collection::vec(
        (0.0f64..3.0, prop::collection::vec(-6.0f64..6.0, n_qubits)),
        1..4,
    )
    .prop_map(|segs| {
        segs.into_iter()
            .fold(DetuningSchedule::new(), |s, (t, d)| s.then(t, d))
    })
}

fn amplitudes(dim: usize) -> impl Strategy<Value = CVector> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), dim).prop_filter_map(
        "zero vector",
        |v| {
            let v = CVector::from_iterator(v.len(), v.into_iter().map(|(a, b)| C64::new(a, b)));
            let n = v.norm();
            (n > 1e-3).then(|| v / C64::new(n, 0.0))
        },
    )
}

fn case() -> impl Strategy<Value = (SystemConfig, DetuningSchedule, CVector)> {
    system().prop_flat_map(|cfg| {
        let n = cfg.n_qubits;
        let dim = cfg.dressed_dim();
        (Just(cfg), schedule(n), amplitudes(dim))
    })
}

fn overlap(a: &CVector, b: &CVector) -> f64 {
    a.dotc(b).norm_sqr()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn dressed_evolution_matches_full_space((cfg, sched, psi) in case()) {
        let dressed = QuantumState::new(psi.clone(), BasisTag::Dressed).unwrap();
        let d_out = run_schedule(&cfg, &dressed, &sched).unwrap();
        let full = QuantumState::new(embed_dressed_in_full(&psi, &cfg).unwrap(), BasisTag::Full).unwrap();
        let f_out = run_schedule(&cfg, &full, &sched).unwrap();
        let back = restrict_full_to_dressed(f_out.amplitudes(), &cfg).unwrap();
        prop_assert!(overlap(d_out.amplitudes(), &back) > 1.0 - 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn full_propagator_is_unitary_and_conserves_excitations((cfg, sched, _) in case()) {
        let u = schedule_propagator(&cfg, BasisTag::Full, &sched).unwrap();
        prop_assert!(unitarity_error(u.matrix()) < 1e-10);
        let n = cfg.n_qubits;
        let exc = |i: usize| (i >> n) + popcount(i & ((1 << n) - 1));
        let m = u.matrix();
        let mut leak: f64 = 0.0;
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                if exc(i) != exc(j) {
                    leak = leak.max(m[(i, j)].norm());
                }
            }
        }
        prop_assert!(leak < 1e-12, "leak {leak:e}");
    }

    #[test]
    fn norm_and_energy_are_conserved((cfg, sched, psi) in case()) {
        let full = QuantumState::new(embed_dressed_in_full(&psi, &cfg).unwrap(), BasisTag::Full).unwrap();
        let number = excitation_number_full(&cfg);
        let mut state = full;
        for seg in &sched.segments {
            let one = DetuningSchedule { segments: vec![seg.clone()] };
            let before = state.norm();
            state = run_schedule(&cfg, &state, &one).unwrap();
            prop_assert!((state.norm() - before).abs() < 1e-12);
            prop_assert!((state.expectation(&number) - cfg.n_fb as f64).abs() < 1e-10);
        }
    }

    #[test]
    fn embed_then_restrict_is_identity((cfg, _, psi) in case()) {
        let back = restrict_full_to_dressed(&embed_dressed_in_full(&psi, &cfg).unwrap(), &cfg).unwrap();
        let diff = (&back - &psi).camax();
        prop_assert!(diff < 1e-14);
    }

    #[test]
    fn uniform_detuning_keeps_ground_state_symmetric(
        n in 1usize..=4,
        extra in 0usize..3,
        segs in prop::collection::vec((0.0f64..3.0, -6.0f64..6.0), 1..4),
    ) {
        let cfg = SystemConfig::new(n, 1.0, n + extra);
        let mut psi = QuantumState::ground_dressed(&cfg);
        for (t, d) in segs {
            psi = run_schedule(&cfg, &psi, &DetuningSchedule::single(t, vec![d; n])).unwrap();
            prop_assert!(symmetric_projection(psi.amplitudes(), n).unwrap().residual < 1e-10);
        }
    }

    #[test]
    fn gate_fidelity_ignores_global_phase_and_is_symmetric(
        (cfg, sched, _) in case(),
        other in schedule(3),
        phi in 0.0f64..6.3,
    ) {
        let u = schedule_propagator(&cfg, BasisTag::Dressed, &sched).unwrap();
        let phased = Propagator::from_matrix(u.matrix() * C64::from_polar(1.0, phi), BasisTag::Dressed).unwrap();
        prop_assert!((average_gate_fidelity(&u, &phased).unwrap() - 1.0).abs() < 1e-12);
        let n = cfg.n_qubits;
        let v = DetuningSchedule {
            segments: other
                .segments
                .into_iter()
                .map(|mut s| {
                    s.delta.0.truncate(n);
                    s
                })
                .collect(),
        };
        let w = schedule_propagator(&cfg, BasisTag::Dressed, &v).unwrap();
        let ab = average_gate_fidelity(&u, &w).unwrap();
        let ba = average_gate_fidelity(&w, &u).unwrap();
        prop_assert!((ab - ba).abs() < 1e-12);
    }

    #[test]
    fn state_fidelity_is_symmetric_and_unitarily_invariant(
        (cfg, sched, psi) in case(),
        seed in any::<u64>(),
    ) {
        // second state: a fixed rotation of the first's amplitudes
        let dim = cfg.dressed_dim();
        let phi: Vec<C64> = (0..dim)
            .map(|k| C64::from_polar(1.0, ((seed >> (k % 60)) & 0xff) as f64 / 40.0))
            .collect();
        let mut chi = psi.clone();
        chi.iter_mut().zip(&phi).for_each(|(a, p)| *a *= p);
        chi.as_mut_slice().rotate_left(1);
        let a = QuantumState::new(psi, BasisTag::Dressed).unwrap();
        let b = QuantumState::new(chi, BasisTag::Dressed).unwrap();
        let f = state_fidelity(&a, &b).unwrap();
        prop_assert!((f - state_fidelity(&b, &a).unwrap()).abs() < 1e-12);
        let a2 = run_schedule(&cfg, &a, &sched).unwrap();
        let b2 = run_schedule(&cfg, &b, &sched).unwrap();
        prop_assert!((f - state_fidelity(&a2, &b2).unwrap()).abs() < 1e-10);
    }

    #[test]
    fn dispersive_gate_preserves_parity(
        n in 1usize..=4,
        extra in 0usize..4,
        delta in prop_oneof![-60.0f64..-5.0, 5.0f64..60.0],
        t in 0.0f64..50.0,
    ) {
        let u: CMatrix = dispersive_unitary(1.0, delta, n, n + extra, t).unwrap();
        let z = z_string(n);
        prop_assert!(max_abs_diff(&(&u * &z), &(&z * &u)) < 1e-12);
    }
}
