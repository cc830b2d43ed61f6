mod common;

use cqed_cluster::dynamics::{ModelTier, PhysicalParams};
use cqed_cluster::hilbert::{self, fidelity, StateVector, SubsystemSpec, C64};
use cqed_cluster::protocol::{FusionMode, ProtocolConfig, Simulator};
use cqed_cluster::verify::{self, GraphSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::*;

fn sim(tier: ModelTier, n: usize) -> Simulator {
    Simulator::new(PhysicalParams::lab_defaults(n, 20.0).unwrap(), tier, ProtocolConfig::default()).unwrap()
}

fn snapshot(trace: &cqed_cluster::protocol::ProtocolTrace, stage: &str) -> StateVector {
    StateVector::from_snapshot(trace.intermediate(stage).unwrap().snapshot.as_ref().unwrap()).unwrap()
}

#[test]
fn nested_product_equals_cz_construction() {
    for k in 2..=5 {
        let nested = Modes::nested_product(k, 4, k).to_state();
        let cz = verify::build_reference_cluster(&GraphSpec::path(k), 4).unwrap();
        let brute = brute_graph_state(k, GraphSpec::path(k).edges(), 4);
        assert!((fidelity(&nested, &cz).unwrap() - 1.0).abs() < 1e-14, "K={k}");
        assert!((fidelity(&brute, &cz).unwrap() - 1.0).abs() < 1e-14, "K={k}");
    }
}

#[test]
fn two_node_cluster_is_zero_plus_one_minus() {
    // (|0⟩|+⟩ + |1⟩|−⟩)/√2 with mode 0 first
    let s = 0.5;
    let amps = [C64::new(s, 0.0), C64::new(s, 0.0), C64::new(s, 0.0), C64::new(-s, 0.0)];
    let expected = embed_qubits(2, &amps, 3);
    let cluster = verify::build_reference_cluster(&GraphSpec::path(2), 3).unwrap();
    assert!((fidelity(&expected, &cluster).unwrap() - 1.0).abs() < 1e-15);
}

#[test]
fn every_station_matches_nested_form() {
    for tier in [ModelTier::AnalyticJC, ModelTier::EffectiveSpin] {
        for k in 2..=5 {
            let trace = sim(tier, 8).run_chain(k, true).unwrap();
            assert!(trace.matches_chain_template(k));
            for j in 1..k {
                let c = fidelity(&snapshot(&trace, &format!("C{j}")), &after_cavity(k, 4, j)).unwrap();
                let r = fidelity(&snapshot(&trace, &format!("R{j}")), &after_zone(k, 4, j)).unwrap();
                assert!(c > 1.0 - 1e-10 && r > 1.0 - 1e-10, "{tier:?} K={k} j={j}: {c} {r}");
            }
            let re = fidelity(&snapshot(&trace, "RE"), &after_extra_zone(k, 4)).unwrap();
            let fin = fidelity(&trace.final_state, &chain_final(k, 4)).unwrap();
            assert!(re > 1.0 - 1e-10 && fin > 1.0 - 1e-9, "{tier:?} K={k}: {re} {fin}");
            for rec in &trace.intermediates {
                assert!(rec.fidelity > 1.0 - 1e-10, "{tier:?} {}: {}", rec.stage, rec.fidelity);
            }
        }
    }
}

#[test]
fn chain_output_has_unit_stabilizers() {
    let trace = sim(ModelTier::AnalyticJC, 10).run_chain(4, false).unwrap();
    let (cluster, _) = trace.cluster_state().unwrap();
    for s in verify::stabilizer_expectations(&cluster, &GraphSpec::path(4)).unwrap() {
        assert!((s - 1.0).abs() < 1e-9, "{s}");
    }
}

fn certified(state: &StateVector, graph: &GraphSpec) -> (bool, bool) {
    let reference = verify::build_reference_cluster(graph, 4).unwrap();
    let aligned = verify::phase_aligned_fidelity(state, &reference).unwrap();
    let inverse: Vec<Vec<f64>> = aligned.phases.iter().map(|p| p.iter().map(|t| -t).collect()).collect();
    let derotated = verify::apply_phases(state, &inverse).unwrap();
    let stab = verify::stabilizer_expectations(&derotated, graph).unwrap();
    let stab_ok = stab.iter().all(|s| (s - 1.0).abs() <= 1e-9);
    (stab_ok, aligned.fidelity >= 1.0 - 1e-8)
}

#[test]
fn stabilizer_certificate_agrees_with_fidelity() {
    let graph = GraphSpec::path(4);
    let reference = verify::build_reference_cluster(&graph, 4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);

    // Uncorrupted: reference, chain output, locally rotated reference.
    let chain = sim(ModelTier::AnalyticJC, 10).run_chain(4, false).unwrap().cluster_state().unwrap().0;
    let rotated = verify::apply_phases(&reference, &[vec![0.3], vec![1.7], vec![4.0], vec![2.2]]).unwrap();
    for good in [&reference, &chain, &rotated] {
        assert_eq!(certified(good, &graph), (true, true));
    }

    // Corrupted: a sign flip, admixture of a random qubit state, a small
    // exchange between two modes.
    let mut flipped: Vec<C64> = reference.amplitudes().iter().copied().collect();
    let idx = hilbert::compose_index(reference.subsystems(), &[1, 0, 1, 0]).unwrap();
    flipped[idx] = -flipped[idx];
    let flipped = StateVector::from_vec(reference.subsystems().to_vec(), flipped).unwrap();

    let noise = {
        let q = random_state(vec![SubsystemSpec::collective_mode(2).unwrap(); 4], &mut rng);
        let q: Vec<C64> = q.amplitudes().iter().copied().collect();
        embed_qubits(4, &q, 4)
    };
    let mixed: Vec<C64> = reference
        .amplitudes()
        .iter()
        .zip(noise.amplitudes().iter())
        .map(|(a, b)| a + b * 0.05)
        .collect();
    let mixed = StateVector::normalized_from(reference.subsystems().to_vec(), mixed).unwrap();

    let (c, s) = (0.999f64.sqrt(), 0.001f64.sqrt());
    let mut swap = nalgebra::DMatrix::<C64>::identity(16, 16);
    // mix |1,0⟩ and |0,1⟩ on modes 0 and 1
    let (i10, i01) = (1, 4);
    swap[(i10, i10)] = C64::new(c, 0.0);
    swap[(i01, i01)] = C64::new(c, 0.0);
    swap[(i10, i01)] = C64::new(-s, 0.0);
    swap[(i01, i10)] = C64::new(s, 0.0);
    let exchanged = hilbert::apply_local(&reference, &[0, 1], &swap).unwrap();

    for bad in [&flipped, &mixed, &exchanged] {
        assert_eq!(certified(bad, &graph), (false, false));
    }
}

fn two_node_chains() -> (Simulator, StateVector, StateVector) {
    let s = sim(ModelTier::AnalyticJC, 10);
    let a = s.run_chain(2, false).unwrap().cluster_state().unwrap().0;
    let b = s.run_chain(2, false).unwrap().cluster_state().unwrap().0;
    (s, a, b)
}

#[test]
fn fused_two_node_chains_form_three_node_path_for_every_node_choice() {
    let (s, a, b) = two_node_chains();
    for node_a in 0..2 {
        for node_b in 0..2 {
            // survivor of chain a links to node_b; chain b keeps its link
            let expected_edges = [(0, 1 + node_b), (1, 2)];
            let brute = brute_graph_state(3, &expected_edges, 4);
            for path in ["+,-", "+,+"] {
                let trace = s
                    .run_fusion(&a, &b, node_a, node_b, &FusionMode::parse_path(path).unwrap())
                    .unwrap();
                assert!(trace.matches_fusion_template(node_a, 2 + node_b));
                let target = fusion_target(&a, &b, node_a, node_b);
                let lib = verify::fusion_reference(&a, &b, node_a, node_b).unwrap();
                assert!(fidelity(&trace.final_state, &target).unwrap() > 1.0 - 1e-10);
                assert!(fidelity(&lib, &target).unwrap() > 1.0 - 1e-12);
                let aligned = verify::phase_aligned_fidelity(&trace.final_state, &brute).unwrap();
                assert!(aligned.fidelity > 1.0 - 1e-9, "{node_a} {node_b} {path}: {}", aligned.fidelity);
            }
        }
    }
}

#[test]
fn fusing_middle_nodes_gives_the_fused_graph() {
    let s = sim(ModelTier::AnalyticJC, 10);
    let a = s.run_chain(3, false).unwrap().cluster_state().unwrap().0;
    let b = s.run_chain(3, false).unwrap().cluster_state().unwrap().0;
    let trace = s.run_fusion(&a, &b, 1, 1, &FusionMode::parse_path("+,+").unwrap()).unwrap();
    assert!(trace.success);
    let target = fusion_target(&a, &b, 1, 1);
    assert!(fidelity(&trace.final_state, &target).unwrap() > 1.0 - 1e-10);
    // star-like: b1 inherits a0 and a2
    let graph = GraphSpec::fused(&GraphSpec::path(3), &GraphSpec::path(3), 1, 1).unwrap();
    let brute = brute_graph_state(5, &[(0, 3), (1, 3), (2, 3), (3, 4)], 4);
    let lib = verify::build_reference_cluster(&graph, 4).unwrap();
    assert!((fidelity(&lib, &brute).unwrap() - 1.0).abs() < 1e-12);
    let aligned = verify::phase_aligned_fidelity(&trace.final_state, &brute).unwrap();
    assert!(aligned.fidelity > 1.0 - 1e-9);
}

#[test]
fn fusion_from_spin_tier_chains() {
    let s = sim(ModelTier::EffectiveSpin, 6);
    let a = s.run_chain(2, false).unwrap().cluster_state().unwrap().0;
    let trace = s.run_fusion(&a, &a, 0, 1, &FusionMode::parse_path("+,-").unwrap()).unwrap();
    let target = fusion_target(&a, &a, 0, 1);
    assert!(fidelity(&trace.final_state, &target).unwrap() > 1.0 - 1e-10);
}

#[test]
fn full_tier_residual_shrinks_with_detuning() {
    let config = ProtocolConfig {
        cavity_truncation: 3,
        ..ProtocolConfig::default()
    };
    let mut last = f64::INFINITY;
    let mut last_fid = 0.0;
    for ratio in [10.0, 20.0, 40.0] {
        let r = verify::approximation_point(10, ratio, 2, config).unwrap();
        assert!(r.cavity_residual < last, "ratio {ratio}");
        assert!(r.chain_fidelity >= last_fid);
        assert!(r.chain_fidelity >= r.plain_fidelity);
        last = r.cavity_residual;
        last_fid = r.chain_fidelity;
    }
}

#[test]
fn time_budget_for_lab_defaults() {
    let p = PhysicalParams::lab_defaults(100, 20.0).unwrap();
    let b = cqed_cluster::protocol::lab_time_budget(4, &p);
    assert!(b.total_s < 30e-3);
    assert!((b.pass_s - p.chain_pass_duration()).abs() < 1e-18);
}
