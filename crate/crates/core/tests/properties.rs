mod common;

use std::f64::consts::TAU;

use cqed_cluster::dynamics::{self, ModelTier, PhysicalParams, Propagator};
use cqed_cluster::hilbert::{self, fidelity, MeasureMode, StateVector, SubsystemSpec, C64};
use cqed_cluster::protocol::{self, FusionMode, ProtocolConfig, Simulator};
use cqed_cluster::verify::{self, GraphSpec};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::random_state;

fn mode_state(seed: u64, k: usize, d: usize) -> StateVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_state(vec![SubsystemSpec::collective_mode(d).unwrap(); k], &mut rng)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn jc_evolution_preserves_norm(seed in any::<u64>(), n in 1usize..60, t in 0.0f64..5.0) {
        let p = PhysicalParams::lab_defaults(n, 20.0).unwrap();
        let h = dynamics::build_jc_hamiltonian(&p, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let psi = random_state(h.subsystems().to_vec(), &mut rng);
        let out = Propagator::new(&h).unwrap().evolve(&psi, t * p.chain_pass_duration()).unwrap();
        prop_assert!((out.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn chain_yields_path_cluster(k in 2usize..=5, n in 1usize..=200) {
        let p = PhysicalParams::lab_defaults(n, 20.0).unwrap();
        let trace = protocol::run_chain(k, &p, ModelTier::AnalyticJC, false).unwrap();
        let (cluster, w) = trace.cluster_state().unwrap();
        prop_assert!((w - 1.0).abs() < 1e-10);
        for s in verify::stabilizer_expectations(&cluster, &GraphSpec::path(k)).unwrap() {
            prop_assert!((s - 1.0).abs() < 1e-9);
        }
        prop_assert!(trace.max_leakage() < 1e-12);
    }

    #[test]
    fn alignment_dominates_plain_and_ignores_global_phase(seed in any::<u64>(), a in 0.0f64..TAU, b in 0.0f64..TAU) {
        let psi = mode_state(seed, 3, 3);
        let reference = mode_state(seed.wrapping_add(1), 3, 3);
        let al = verify::phase_aligned_fidelity(&psi, &reference).unwrap();
        prop_assert!(al.fidelity + 1e-12 >= al.plain_fidelity);
        prop_assert!(al.fidelity <= 1.0);
        prop_assert!((al.plain_fidelity - fidelity(&psi, &reference).unwrap()).abs() < 1e-12);
        let al2 = verify::phase_aligned_fidelity(
            &psi.scaled(C64::from_polar(1.0, a)),
            &reference.scaled(C64::from_polar(1.0, b)),
        ).unwrap();
        prop_assert!((al.fidelity - al2.fidelity).abs() < 1e-9);
    }

    #[test]
    fn injected_mode_phases_are_undone(t0 in 0.0f64..TAU, t1 in 0.0f64..TAU) {
        let reference = verify::build_reference_cluster(&GraphSpec::path(2), 4).unwrap();
        let rotated = verify::apply_phases(&reference, &[vec![t0], vec![t1]]).unwrap();
        let al = verify::phase_aligned_fidelity(&rotated, &reference).unwrap();
        prop_assert!((al.fidelity - 1.0).abs() < 1e-10);
        for (got, want) in al.phases.iter().zip([t0, t1]) {
            let diff = (got[0] - want).rem_euclid(TAU);
            prop_assert!(diff < 1e-8 || TAU - diff < 1e-8);
        }
    }

    #[test]
    fn measurement_is_a_probability_distribution(seed in any::<u64>(), draw in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let subs = vec![SubsystemSpec::control_atom(), SubsystemSpec::collective_mode(3).unwrap()];
        let psi = random_state(subs, &mut rng);
        for basis in [protocol::fg_basis(0).unwrap(), protocol::ge_basis(0).unwrap()] {
            let probs = basis.probabilities(&psi).unwrap();
            prop_assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(probs.iter().all(|&p| p >= -1e-15));
            let m = hilbert::measure(&psi, &basis, &MeasureMode::Sample(draw)).unwrap();
            prop_assert!(m.post_state.is_normalized(1e-12));
            let again = hilbert::measure(&psi, &basis, &MeasureMode::Sample(draw)).unwrap();
            prop_assert_eq!(m.label, again.label);
        }
    }

    #[test]
    fn fusion_matches_reference_for_random_inputs(seed in any::<u64>(), node_a in 0usize..2, node_b in 0usize..3) {
        // arbitrary qubit-valued inputs, not only clusters
        let embed = |s: u64, k: usize| {
            let q = mode_state(s, k, 2);
            let amps: Vec<C64> = q.amplitudes().iter().copied().collect();
            common::embed_qubits(k, &amps, 4)
        };
        let a = embed(seed, 2);
        let b = embed(seed ^ 0x5555, 3);
        let sim = Simulator::new(PhysicalParams::lab_defaults(10, 20.0).unwrap(), ModelTier::AnalyticJC, ProtocolConfig::default()).unwrap();
        let target = common::fusion_target(&a, &b, node_a, node_b);
        for path in ["+,-", "+,+"] {
            match sim.run_fusion(&a, &b, node_a, node_b, &FusionMode::parse_path(path).unwrap()) {
                Ok(trace) => prop_assert!(fidelity(&trace.final_state, &target).unwrap() > 1.0 - 1e-10),
                // a random input can make a branch vanishingly unlikely
                Err(cqed_cluster::Error::ImpossibleBranch { .. }) => {}
                Err(other) => prop_assert!(false, "{other}"),
            }
        }
    }

    #[test]
    fn fused_graph_degrees(na in 1usize..6, nb in 1usize..6, ia in 0usize..6, ib in 0usize..6) {
        prop_assume!(ia < na && ib < nb);
        let (a, b) = (GraphSpec::path(na), GraphSpec::path(nb));
        let f = GraphSpec::fused(&a, &b, ia, ib).unwrap();
        prop_assert_eq!(f.nodes(), na + nb - 1);
        prop_assert_eq!(f.edges().len(), a.edges().len() + b.edges().len());
        let target = na - 1 + ib;
        prop_assert_eq!(f.neighbors(target).len(), a.neighbors(ia).len() + b.neighbors(ib).len());
    }

    #[test]
    fn commutator_identity_holds(seed in any::<u64>(), n in 1usize..120) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let psi = random_state(vec![SubsystemSpec::dicke_ladder(n).unwrap()], &mut rng);
        let d = verify::bosonic_commutator_defect(&psi).unwrap();
        prop_assert!(d.identity.abs() < 1e-12);
        prop_assert!(d.gap >= 0.0 && d.gap <= 2.0 + 1e-12);
    }

    #[test]
    fn time_budget_is_linear(k in 0usize..20, overhead in 0.0f64..1e-3) {
        let p = PhysicalParams::lab_defaults(100, 20.0).unwrap();
        let b = protocol::total_protocol_time(k, &p, overhead, 30e-3);
        let zones = if k >= 2 { k } else { 0 };
        let expected = k as f64 * p.chain_pass_duration() + zones as f64 * overhead;
        prop_assert!((b.total_s - expected).abs() <= 1e-15 * expected.max(1.0));
    }
}
