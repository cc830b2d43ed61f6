use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use cqed_cluster::dynamics::ModelTier;
use cqed_cluster::hilbert::{StateSnapshot, StateVector};
use cqed_cluster::protocol::{self, FusionMode, ProtocolTrace, Simulator};
use cqed_cluster::verify::{self, ApproximationReport, GraphSpec};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ChainSource, RunConfig};
use crate::error::CliError;

/// Exact tiers must reproduce references to this accuracy.
const EXACT_TIER_TOLERANCE: f64 = 1e-9;
const CI_SIGMAS: f64 = 3.0;

fn is_exact(tier: ModelTier) -> bool {
    tier != ModelTier::FullDispersive
}

fn simulator(config: &RunConfig) -> Result<Simulator, CliError> {
    Ok(Simulator::new(config.params.build()?, config.tier, config.numerics())?)
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    fs::write(&path, contents)?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serialization is infallible");
    s.push('\n');
    s
}

/// Stabilizers of `state` after undoing the local phases that best align it
/// with the ideal graph state; the full tier accumulates such phases.
fn aligned_stabilizers(state: &StateVector, graph: &GraphSpec, d: usize) -> Result<(Vec<f64>, verify::PhaseAlignment), CliError> {
    let reference = verify::build_reference_cluster(graph, d)?;
    let aligned = verify::phase_aligned_fidelity(state, &reference)?;
    let inverse: Vec<Vec<f64>> = aligned.phases.iter().map(|p| p.iter().map(|t| -t).collect()).collect();
    let stab = verify::stabilizer_expectations(&verify::apply_phases(state, &inverse)?, graph)?;
    Ok((stab, aligned))
}

#[derive(Serialize)]
struct ChainSummary<'a> {
    k: usize,
    tier: ModelTier,
    atom_ground_weight: f64,
    fidelity: f64,
    plain_fidelity: f64,
    stabilizers: &'a [f64],
    max_leakage: f64,
    max_cavity_residual: f64,
}

pub fn cmd_chain(config: &RunConfig) -> Result<(), CliError> {
    let k = config.k;
    if k < 2 {
        return Err(CliError::Config(format!("a chain needs at least 2 nodes, got k = {k}")));
    }
    let sim = simulator(config)?;
    let trace = sim.run_chain(k, true)?;
    let (cluster, weight) = trace.cluster_state()?;
    let cluster = cluster.normalize()?;
    let graph = GraphSpec::path(k);
    let (stab, aligned) = aligned_stabilizers(&cluster, &graph, config.mode_truncation)?;

    let out = &config.out;
    write(out, "chain_trace.json", &(trace.to_json(true) + "\n"))?;
    write(out, "chain_state.json", &(cluster.snapshot().to_json() + "\n"))?;
    let summary = ChainSummary {
        k,
        tier: config.tier,
        atom_ground_weight: weight,
        fidelity: aligned.fidelity,
        plain_fidelity: aligned.plain_fidelity,
        stabilizers: &stab,
        max_leakage: trace.max_leakage(),
        max_cavity_residual: trace.max_cavity_residual(),
    };
    write(out, "chain_report.json", &to_json(&summary))?;

    println!("chain K={k} tier={} N={}", config.tier.name(), config.params.n_atoms);
    for (j, s) in stab.iter().enumerate() {
        println!("stabilizer K_{j} = {s:.12}");
    }
    println!("fidelity {:.12} (unaligned {:.12})", aligned.fidelity, aligned.plain_fidelity);
    println!(
        "max leakage {:.3e}, max cavity residual {:.3e}",
        trace.max_leakage(),
        trace.max_cavity_residual()
    );

    if is_exact(config.tier) {
        if 1.0 - aligned.fidelity > EXACT_TIER_TOLERANCE {
            return Err(CliError::Physics(format!(
                "chain fidelity {} below 1 - {EXACT_TIER_TOLERANCE}",
                aligned.fidelity
            )));
        }
        if let Some(bad) = stab.iter().find(|s| (*s - 1.0).abs() > EXACT_TIER_TOLERANCE) {
            return Err(CliError::Physics(format!("stabilizer expectation {bad} differs from 1")));
        }
    }
    Ok(())
}

/// A fusion input together with its graph when it was generated here.
struct FusionInput {
    state: StateVector,
    graph: Option<GraphSpec>,
}

fn load_input(source: &ChainSource, name: &str, sim: &Simulator) -> Result<FusionInput, CliError> {
    match (source.k, &source.snapshot) {
        (Some(k), None) => {
            if k < 2 {
                return Err(CliError::Config(format!("chain_{name}: a chain needs at least 2 nodes")));
            }
            let (state, _) = sim.run_chain(k, false)?.cluster_state()?;
            Ok(FusionInput {
                state: state.normalize()?,
                graph: Some(GraphSpec::path(k)),
            })
        }
        (None, Some(path)) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
            let state = StateVector::from_snapshot(&StateSnapshot::from_json(&text)?)?;
            Ok(FusionInput { state, graph: None })
        }
        _ => Err(CliError::Config(format!(
            "chain_{name} needs exactly one of `k` or `snapshot`"
        ))),
    }
}

#[derive(Serialize)]
struct PostselectReport {
    path: String,
    success: bool,
    branch_probability: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    fidelity: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    fused_graph_fidelity: Option<f64>,
}

#[derive(Serialize)]
struct TrialReport {
    seed: u64,
    trials: usize,
    successes: usize,
    frequency: f64,
    standard_error: f64,
    ci_sigmas: f64,
    ci_low: f64,
    ci_high: f64,
    /// Keyed by `"stage1,stage2"`; stage 2 is absent after a stage-1 failure.
    outcomes: BTreeMap<String, usize>,
    first_trial: serde_json::Value,
}

fn outcome_key(trace: &ProtocolTrace) -> String {
    trace.outcomes.iter().map(|o| o.label.as_str()).collect::<Vec<_>>().join(",")
}

pub fn cmd_fuse(config: &RunConfig) -> Result<(), CliError> {
    let fusion = &config.fusion;
    let sim = simulator(config)?;
    let a = load_input(&fusion.chain_a, "a", &sim)?;
    let b = load_input(&fusion.chain_b, "b", &sim)?;
    let (node_a, node_b) = (fusion.node_a, fusion.node_b);
    let out = &config.out;

    if let Some(mode) = config.fusion_mode()? {
        let trace = sim.run_fusion(&a.state, &b.state, node_a, node_b, &mode)?;
        let path = fusion.postselect.clone().unwrap_or_default();
        let branch_probability: f64 = trace.outcomes.iter().map(|o| o.probability).product();
        write(out, "fusion_trace.json", &(trace.to_json(true) + "\n"))?;
        let mut report = PostselectReport {
            path: path.clone(),
            success: trace.success,
            branch_probability,
            fidelity: None,
            fused_graph_fidelity: None,
        };
        if !trace.success {
            println!("fusion path {path}: stage 1 failed (probability {branch_probability:.6})");
            write(out, "fusion_report.json", &to_json(&report))?;
            return Ok(());
        }
        let reference = verify::fusion_reference(&a.state, &b.state, node_a, node_b)?;
        let fid = cqed_cluster::hilbert::fidelity(&trace.final_state, &reference)?;
        report.fidelity = Some(fid);
        println!("fusion path {path}: branch probability {branch_probability:.6}");
        println!("fidelity {fid:.12}");
        if let (Some(ga), Some(gb)) = (&a.graph, &b.graph) {
            let graph = GraphSpec::fused(ga, gb, node_a, node_b)?;
            let target = verify::build_reference_cluster(&graph, config.mode_truncation)?;
            let aligned = verify::phase_aligned_fidelity(&trace.final_state, &target)?;
            report.fused_graph_fidelity = Some(aligned.fidelity);
            println!("fused graph fidelity {:.12}", aligned.fidelity);
        }
        write(out, "fused_state.json", &(trace.final_state.snapshot().to_json() + "\n"))?;
        write(out, "fusion_report.json", &to_json(&report))?;
        if is_exact(config.tier) {
            let worst = report.fused_graph_fidelity.map_or(fid, |g| g.min(fid));
            if 1.0 - worst > EXACT_TIER_TOLERANCE {
                return Err(CliError::Physics(format!("fusion fidelity {worst} below 1 - {EXACT_TIER_TOLERANCE}")));
            }
        }
        return Ok(());
    }

    let trials = fusion.trials;
    if trials == 0 {
        return Err(CliError::Config("trials must be positive".into()));
    }
    // Seeds are drawn in trial order so the thread count cannot change them.
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let seeds: Vec<u64> = (0..trials).map(|_| rng.next_u64()).collect();
    let first = sim.run_fusion(&a.state, &b.state, node_a, node_b, &FusionMode::Sample(seeds[0]))?;
    let rest: Vec<(bool, String)> = seeds[1..]
        .par_iter()
        .map(|&s| {
            sim.run_fusion(&a.state, &b.state, node_a, node_b, &FusionMode::Sample(s))
                .map(|t| (t.success, outcome_key(&t)))
        })
        .collect::<Result<_, _>>()?;

    let mut outcomes = BTreeMap::new();
    let mut successes = 0;
    for (success, key) in std::iter::once((first.success, outcome_key(&first))).chain(rest) {
        successes += usize::from(success);
        *outcomes.entry(key).or_insert(0) += 1;
    }
    let n = trials as f64;
    let frequency = successes as f64 / n;
    let standard_error = (frequency * (1.0 - frequency) / n).sqrt();
    let first_trial = serde_json::from_str(&first.to_json(false)).expect("trace is valid json");
    let report = TrialReport {
        seed: config.seed,
        trials,
        successes,
        frequency,
        standard_error,
        ci_sigmas: CI_SIGMAS,
        ci_low: (frequency - CI_SIGMAS * standard_error).max(0.0),
        ci_high: (frequency + CI_SIGMAS * standard_error).min(1.0),
        outcomes,
        first_trial,
    };
    write(out, "fusion_trials.json", &to_json(&report))?;
    println!("fusion trials {trials} seed {}", config.seed);
    println!(
        "success frequency {frequency:.4} ({}σ interval [{:.4}, {:.4}])",
        CI_SIGMAS, report.ci_low, report.ci_high
    );
    for (key, count) in &report.outcomes {
        println!("outcome {key}: {count}");
    }
    Ok(())
}

#[derive(Serialize)]
struct ValidationFile<'a> {
    k: usize,
    points: &'a [ApproximationReport],
    time_budget: protocol::TimeBudget,
}

pub fn cmd_validate(config: &RunConfig) -> Result<(), CliError> {
    let sweep = &config.sweep;
    if sweep.n_values.is_empty() || sweep.ratios.is_empty() {
        return Err(CliError::Config("sweep grid is empty".into()));
    }
    if sweep.k < 2 {
        return Err(CliError::Config("sweep k must be at least 2".into()));
    }
    let mut grid: Vec<(usize, f64)> = Vec::new();
    for &n in &sweep.n_values {
        for &r in &sweep.ratios {
            if !(r.is_finite() && r > 0.0) {
                return Err(CliError::Config(format!("dispersive ratio must be positive, got {r}")));
            }
            grid.push((n, r));
        }
    }
    grid.sort_by(|x, y| x.0.cmp(&y.0).then(x.1.total_cmp(&y.1)));
    grid.dedup();
    let numerics = config.numerics();
    let points: Vec<ApproximationReport> = grid
        .par_iter()
        .map(|&(n, r)| -> Result<_, CliError> {
            let params = config.params.build_with(n, Some(r))?;
            Ok(verify::approximation_point_with(params, r, sweep.k, numerics)?)
        })
        .collect::<Result<_, _>>()?;

    let mut csv = csv::Writer::from_writer(Vec::new());
    csv.write_record(["N", "ratio", "K", "fidelity", "cavity_residual", "commutator_gap"])?;
    for p in &points {
        csv.write_record([
            p.n_atoms.to_string(),
            p.ratio.to_string(),
            p.k.to_string(),
            format!("{:.12}", p.chain_fidelity),
            format!("{:.6e}", p.cavity_residual),
            format!("{:.6e}", p.commutator_gap),
        ])?;
    }
    let bytes = csv.into_inner().map_err(|e| CliError::Config(format!("csv: {e}")))?;
    let csv_text = String::from_utf8(bytes).expect("csv output is utf-8");

    let budget = protocol::total_protocol_time(config.k, &config.params.build()?, config.zone_overhead_s, config.lifetime_s);
    write(&config.out, "validation.csv", &csv_text)?;
    write(
        &config.out,
        "validation.json",
        &to_json(&ValidationFile {
            k: sweep.k,
            points: &points,
            time_budget: budget,
        }),
    )?;

    print!("{csv_text}");
    for n in &sweep.n_values {
        let fids: Vec<f64> = points.iter().filter(|p| p.n_atoms == *n).map(|p| p.chain_fidelity).collect();
        let monotone = fids.windows(2).all(|w| w[1] >= w[0]);
        println!("N={n}: fidelity {} with ratio", if monotone { "increases" } else { "does not increase" });
    }
    println!(
        "total_protocol_time K={} N={}: {:.6e} s vs lifetime {:.1e} s (margin x{:.1})",
        config.k, config.params.n_atoms, budget.total_s, budget.lifetime_s, budget.margin
    );
    Ok(())
}
