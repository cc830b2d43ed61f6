//! Reference graph states, stabilizer certificates, phase-aligned fidelity
//! and diagnostics of the bosonic and dispersive approximations.

use std::f64::consts::{FRAC_1_SQRT_2, PI, TAU};

use nalgebra::{DMatrix, Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{ops, ModelTier, PhysicalParams};
use crate::error::{Error, Result};
use crate::hilbert::{self, level, Role, StateVector, SubsystemSpec, C64, ZERO};
use crate::protocol::{ProtocolConfig, Simulator};

/// Population outside `{|0⟩, |1⟩}` tolerated by the stabilizer test.
pub const STABILIZER_LEAKAGE_LIMIT: f64 = 1e-9;
pub const PHASE_TOLERANCE: f64 = 1e-12;
pub const PHASE_MAX_SWEEPS: usize = 500;
const PHASE_GRID_CHECK: usize = 16;

/// Undirected simple graph on `nodes` vertices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphSpec {
    nodes: usize,
    edges: Vec<(usize, usize)>,
}

impl GraphSpec {
    pub fn new(nodes: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut normalized: Vec<(usize, usize)> = Vec::with_capacity(edges.len());
        for &(a, b) in edges {
            if a == b {
                return Err(Error::InvalidGraph(format!("self-loop on node {a}")));
            }
            if a >= nodes || b >= nodes {
                return Err(Error::InvalidGraph(format!("edge ({a}, {b}) outside {nodes} nodes")));
            }
            let e = (a.min(b), a.max(b));
            if normalized.contains(&e) {
                return Err(Error::InvalidGraph(format!("duplicate edge ({a}, {b})")));
            }
            normalized.push(e);
        }
        normalized.sort_unstable();
        Ok(Self {
            nodes,
            edges: normalized,
        })
    }

    /// Path `0 - 1 - .. - (k-1)`.
    pub fn path(k: usize) -> Self {
        let edges: Vec<(usize, usize)> = (1..k).map(|i| (i - 1, i)).collect();
        Self { nodes: k, edges }
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, node: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .edges
            .iter()
            .filter_map(|&(a, b)| {
                if a == node {
                    Some(b)
                } else if b == node {
                    Some(a)
                } else {
                    None
                }
            })
            .collect();
        out.sort_unstable();
        out
    }

    /// Graph left after fusing `node_a` of `a` into `node_b` of `b`:
    /// `node_a` disappears and `node_b` inherits its neighbours. Node order
    /// is `a` without `node_a`, then `b`.
    pub fn fused(a: &GraphSpec, b: &GraphSpec, node_a: usize, node_b: usize) -> Result<Self> {
        if node_a >= a.nodes || node_b >= b.nodes {
            return Err(Error::InvalidGraph("fusion node outside its graph".into()));
        }
        let map_a = |i: usize| if i < node_a { i } else { i - 1 };
        let target = a.nodes - 1 + node_b;
        let mut edges = Vec::new();
        for &(x, y) in &a.edges {
            let m = |i: usize| if i == node_a { target } else { map_a(i) };
            edges.push((m(x), m(y)));
        }
        for &(x, y) in &b.edges {
            edges.push((a.nodes - 1 + x, a.nodes - 1 + y));
        }
        GraphSpec::new(a.nodes + b.nodes - 1, &edges)
    }
}

/// `|+⟩^⊗n` followed by a controlled-Z across every edge, on modes of
/// dimension `mode_truncation`.
pub fn build_reference_cluster(graph: &GraphSpec, mode_truncation: usize) -> Result<StateVector> {
    let n = graph.nodes;
    if n == 0 {
        return Err(Error::Empty("graph nodes"));
    }
    let spec = SubsystemSpec::collective_mode(mode_truncation)?;
    let subs = vec![spec; n];
    let mut amps = vec![ZERO; hilbert::total_dim(&subs)];
    let scale = 2f64.powf(-(n as f64) / 2.0);
    for word in 0..(1usize << n) {
        let bits: Vec<usize> = (0..n).map(|i| (word >> i) & 1).collect();
        let flips = graph.edges.iter().filter(|&&(a, b)| bits[a] & bits[b] == 1).count();
        let sign = if flips % 2 == 0 { 1.0 } else { -1.0 };
        amps[hilbert::compose_index(&subs, &bits)?] = C64::new(sign * scale, 0.0);
    }
    StateVector::from_vec(subs, amps)
}

/// `⟨X_a Π_{b ∈ N(a)} Z_b⟩` for every node `a`, with the Pauli operators
/// acting on the `{|0⟩, |1⟩}` levels of each mode.
pub fn stabilizer_expectations(state: &StateVector, graph: &GraphSpec) -> Result<Vec<f64>> {
    let subs = state.subsystems();
    if subs.len() != graph.nodes {
        return Err(Error::DimensionMismatch {
            expected: graph.nodes,
            got: subs.len(),
        });
    }
    let norm2 = state.norm().powi(2);
    for (i, s) in subs.iter().enumerate() {
        if !s.is_ladder() {
            return Err(Error::InvalidSubsystem(format!("subsystem {i} is not a mode")));
        }
        let outside = state.population_above(i, 2)? / norm2;
        if outside > STABILIZER_LEAKAGE_LIMIT {
            return Err(Error::OutsideQubitSubspace(outside));
        }
    }
    let strides = hilbert::strides(subs);
    let amps = state.amplitudes();
    let mut out = Vec::with_capacity(graph.nodes);
    for a in 0..graph.nodes {
        let neighbors = graph.neighbors(a);
        let mut acc = ZERO;
        for (idx, amp) in amps.iter().enumerate() {
            let levels = hilbert::decompose_index(subs, idx);
            if levels.iter().any(|&l| l > 1) {
                continue;
            }
            let sign: f64 = neighbors
                .iter()
                .map(|&b| if levels[b] == 1 { -1.0 } else { 1.0 })
                .product();
            let flipped = if levels[a] == 0 { idx + strides[a] } else { idx - strides[a] };
            acc += amps[flipped].conj() * amp * sign;
        }
        out.push(acc.re / norm2);
    }
    Ok(out)
}

/// Result of [`phase_aligned_fidelity`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseAlignment {
    pub fidelity: f64,
    /// Fidelity before any rotation.
    pub plain_fidelity: f64,
    /// Per subsystem: `[θ]` for a ladder (rotation `e^{iθn}`), `[φ_g, φ_e]`
    /// for a control atom (phases relative to `|f⟩`).
    pub phases: Vec<Vec<f64>>,
    pub sweeps: usize,
}

struct PhaseParam {
    subsystem: usize,
    atom_level: Option<usize>,
}

impl PhaseParam {
    fn multiplicity(&self, levels: &[usize]) -> usize {
        let l = levels[self.subsystem];
        match self.atom_level {
            Some(target) => usize::from(l == target),
            None => l,
        }
    }
}

/// Objective pieces: `S(θ) = Σ_x e^{-iφ(x)} c_x` with `c_x = conj(ref_x) ψ_x`.
struct Alignment {
    weights: Vec<C64>,
    mult: Vec<Vec<usize>>,
    params: Vec<PhaseParam>,
    theta: Vec<f64>,
}

impl Alignment {
    fn phase_of(&self, x: usize) -> f64 {
        self.mult[x]
            .iter()
            .zip(&self.theta)
            .map(|(&k, &t)| k as f64 * t)
            .sum()
    }

    fn value(&self) -> f64 {
        self.weights
            .iter()
            .enumerate()
            .map(|(x, c)| C64::from_polar(1.0, -self.phase_of(x)) * c)
            .sum::<C64>()
            .norm_sqr()
    }

    /// Coefficients `A_k` of `S(θ_p) = Σ_k A_k e^{-ikθ_p}`.
    fn coefficients(&self, p: usize) -> Vec<C64> {
        let kmax = self.mult.iter().map(|m| m[p]).max().unwrap_or(0);
        let mut a = vec![ZERO; kmax + 1];
        for (x, c) in self.weights.iter().enumerate() {
            let k = self.mult[x][p];
            let rest = self.phase_of(x) - k as f64 * self.theta[p];
            a[k] += C64::from_polar(1.0, -rest) * c;
        }
        a
    }

    fn best_single(&self, p: usize) -> f64 {
        let a = self.coefficients(p);
        let scale: f64 = a.iter().map(|z| z.norm()).sum();
        let support: Vec<usize> = (0..a.len()).filter(|&k| a[k].norm() > 1e-15 * scale.max(1e-300)).collect();
        let eval = |t: f64| -> f64 {
            a.iter()
                .enumerate()
                .map(|(k, z)| C64::from_polar(1.0, -(k as f64) * t) * z)
                .sum::<C64>()
                .norm_sqr()
        };
        match support.as_slice() {
            [] | [_] => self.theta[p],
            [k1, k2] => {
                let dk = (k2 - k1) as f64;
                ((a[*k2].arg() - a[*k1].arg()) / dk).rem_euclid(TAU / dk)
            }
            _ => {
                let grid = 64;
                let step = TAU / grid as f64;
                let (best, _) = (0..grid)
                    .map(|i| (i as f64 * step, eval(i as f64 * step)))
                    .fold((0.0, f64::MIN), |acc, v| if v.1 > acc.1 { v } else { acc });
                golden_max(eval, best - step, best + step, 1e-13).rem_euclid(TAU)
            }
        }
    }
}

fn golden_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - r * (hi - lo);
    let mut x2 = lo + r * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while hi - lo > tol {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + r * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - r * (hi - lo);
            f1 = f(x1);
        }
    }
    0.5 * (lo + hi)
}

/// Largest `|⟨R(θ) ref|ψ⟩|²` over local diagonal rotations `R(θ)`: one
/// phase per ladder (`e^{iθ n}`) and two for a control atom.
pub fn phase_aligned_fidelity(state: &StateVector, reference: &StateVector) -> Result<PhaseAlignment> {
    phase_aligned_fidelity_with(state, reference, PHASE_MAX_SWEEPS)
}

pub fn phase_aligned_fidelity_with(
    state: &StateVector,
    reference: &StateVector,
    max_sweeps: usize,
) -> Result<PhaseAlignment> {
    let subs = state.subsystems();
    if subs != reference.subsystems() {
        return Err(Error::InvalidSubsystem(
            "phase alignment needs states on the same composite space".into(),
        ));
    }
    let norms = state.norm().powi(2) * reference.norm().powi(2);
    if norms == 0.0 {
        return Err(Error::Empty("zero state"));
    }
    let mut params = Vec::new();
    for (i, s) in subs.iter().enumerate() {
        if s.role == Role::ControlAtom {
            params.push(PhaseParam {
                subsystem: i,
                atom_level: Some(level::G),
            });
            params.push(PhaseParam {
                subsystem: i,
                atom_level: Some(level::E),
            });
        } else {
            params.push(PhaseParam {
                subsystem: i,
                atom_level: None,
            });
        }
    }
    let mut weights = Vec::new();
    let mut mult = Vec::new();
    for (x, (r, s)) in reference.amplitudes().iter().zip(state.amplitudes().iter()).enumerate() {
        let c = r.conj() * s;
        if c == ZERO {
            continue;
        }
        let levels = hilbert::decompose_index(subs, x);
        weights.push(c);
        mult.push(params.iter().map(|p| p.multiplicity(&levels)).collect());
    }
    let plain = weights.iter().sum::<C64>().norm_sqr() / norms;
    let mut al = Alignment {
        weights,
        mult,
        theta: vec![0.0; params.len()],
        params,
    };
    let mut current = al.value();
    let mut sweeps = 0;
    loop {
        let mut converged = false;
        while sweeps < max_sweeps {
            sweeps += 1;
            for p in 0..al.theta.len() {
                let old = al.theta[p];
                al.theta[p] = al.best_single(p);
                if al.value() < current {
                    al.theta[p] = old;
                }
            }
            let next = al.value();
            let gain = next - current;
            current = next;
            if gain <= PHASE_TOLERANCE * norms {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::NoConvergence(sweeps));
        }
        // Coarse grid check against poor starts.
        let mut improved = false;
        for p in 0..al.theta.len() {
            let old = al.theta[p];
            for i in 0..PHASE_GRID_CHECK {
                al.theta[p] = old + TAU * i as f64 / PHASE_GRID_CHECK as f64;
                let v = al.value();
                if v > current + PHASE_TOLERANCE * norms {
                    current = v;
                    improved = true;
                    break;
                }
                al.theta[p] = old;
            }
        }
        if !improved {
            break;
        }
    }
    let mut phases: Vec<Vec<f64>> = vec![Vec::new(); subs.len()];
    for (p, t) in al.params.iter().zip(&al.theta) {
        phases[p.subsystem].push(t.rem_euclid(TAU));
    }
    Ok(PhaseAlignment {
        fidelity: (current / norms).min(1.0),
        plain_fidelity: plain,
        phases,
        sweeps,
    })
}

/// Applies the local diagonal rotations described by `phases` (same layout
/// as [`PhaseAlignment::phases`]).
pub fn apply_phases(state: &StateVector, phases: &[Vec<f64>]) -> Result<StateVector> {
    let subs = state.subsystems();
    if phases.len() != subs.len() {
        return Err(Error::DimensionMismatch {
            expected: subs.len(),
            got: phases.len(),
        });
    }
    let amps: Vec<C64> = state
        .amplitudes()
        .iter()
        .enumerate()
        .map(|(x, a)| {
            let levels = hilbert::decompose_index(subs, x);
            let phi: f64 = subs
                .iter()
                .enumerate()
                .map(|(i, s)| {
                    let l = levels[i];
                    if s.role == Role::ControlAtom {
                        match l {
                            level::G => phases[i][0],
                            level::E => phases[i][1],
                            _ => 0.0,
                        }
                    } else {
                        phases[i][0] * l as f64
                    }
                })
                .sum();
            C64::from_polar(1.0, phi) * a
        })
        .collect();
    StateVector::from_vec(subs.to_vec(), amps)
}

/// Ideal fusion output built from the inputs alone: the components with
/// equal qubit values on `node_a` and `node_b` survive, `node_a` is dropped.
/// Output order is `chain_a` without `node_a`, then `chain_b`.
pub fn fusion_reference(
    chain_a: &StateVector,
    chain_b: &StateVector,
    node_a: usize,
    node_b: usize,
) -> Result<StateVector> {
    let len_a = chain_a.subsystems().len();
    if node_a >= len_a || node_b >= chain_b.subsystems().len() {
        return Err(Error::IndexOutOfRange {
            index: node_a.max(node_b),
            count: len_a,
        });
    }
    let joint = hilbert::tensor_product(&[chain_a.clone(), chain_b.clone()])?;
    let subs = joint.subsystems().to_vec();
    let ib = len_a + node_b;
    let mut out_subs = subs.clone();
    out_subs.remove(node_a);
    let mut amps = vec![ZERO; hilbert::total_dim(&out_subs)];
    for (x, amp) in joint.amplitudes().iter().enumerate() {
        let levels = hilbert::decompose_index(&subs, x);
        if levels[node_a] > 1 || levels[ib] > 1 || levels[node_a] != levels[ib] {
            continue;
        }
        let mut rest = levels.clone();
        rest.remove(node_a);
        amps[hilbert::compose_index(&out_subs, &rest)?] += *amp;
    }
    StateVector::normalized_from(out_subs, amps)
}

/// `[b, b†]` on the Dicke ladder of `n_atoms` spins with `b = S⁻/√N`.
pub fn dicke_commutator(n_atoms: usize) -> DMatrix<C64> {
    let raise = ops::dicke_raise(n_atoms);
    let lower = raise.adjoint();
    (&lower * &raise - &raise * &lower) / C64::new(n_atoms as f64, 0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CommutatorDefect {
    /// `⟨[b,b†]⟩ - (1 - 2⟨n⟩/N)`; zero for every ladder state.
    pub identity: f64,
    /// `|⟨[b,b†]⟩ - 1| = 2⟨n⟩/N`.
    pub gap: f64,
}

/// Compares the explicit ladder commutator with `1 - 2n/N` on `state`,
/// a single Dicke ladder subsystem.
pub fn bosonic_commutator_defect(state: &StateVector) -> Result<CommutatorDefect> {
    let subs = state.subsystems();
    if subs.len() != 1 || subs[0].role != Role::DickeLadder {
        return Err(Error::InvalidSubsystem("expected a single Dicke ladder".into()));
    }
    let n_atoms = subs[0].dim - 1;
    let psi = state.amplitudes() / C64::new(state.norm(), 0.0);
    let comm = dicke_commutator(n_atoms);
    let expect = (psi.adjoint() * &comm * &psi)[(0, 0)].re;
    let mean_n: f64 = psi.iter().enumerate().map(|(n, a)| n as f64 * a.norm_sqr()).sum();
    Ok(CommutatorDefect {
        identity: expect - (1.0 - 2.0 * mean_n / n_atoms as f64),
        gap: (expect - 1.0).abs(),
    })
}

/// Ladder state with the given level populations, for gap estimates from
/// reduced mode populations.
fn ladder_from_populations(n_atoms: usize, pops: &[f64]) -> Result<StateVector> {
    let spec = SubsystemSpec::dicke_ladder(n_atoms)?;
    let mut amps = vec![ZERO; n_atoms + 1];
    for (n, p) in pops.iter().enumerate() {
        if n <= n_atoms {
            amps[n] = C64::new(p.max(0.0).sqrt(), 0.0);
        } else if *p > 1e-12 {
            return Err(Error::TruncationEdge(*p));
        }
    }
    StateVector::normalized_from(vec![spec], amps)
}

/// One grid point of [`approximation_sweep`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApproximationReport {
    pub n_atoms: usize,
    pub ratio: f64,
    pub k: usize,
    /// Phase-aligned fidelity between the full-model and exchange-model
    /// chain outputs.
    pub chain_fidelity: f64,
    pub plain_fidelity: f64,
    /// Largest cavity population left after any pass.
    pub cavity_residual: f64,
    /// Largest `2⟨n⟩/N` over the chain modes.
    pub commutator_gap: f64,
    pub phases: Vec<Vec<f64>>,
}

/// Chain comparison between the full dispersive and the analytic tiers at
/// one parameter point.
pub fn approximation_point(n_atoms: usize, ratio: f64, k: usize, config: ProtocolConfig) -> Result<ApproximationReport> {
    let params = PhysicalParams::lab_defaults(n_atoms, ratio)?;
    approximation_point_with(params, ratio, k, config)
}

pub fn approximation_point_with(
    params: PhysicalParams,
    ratio: f64,
    k: usize,
    config: ProtocolConfig,
) -> Result<ApproximationReport> {
    let full = Simulator::new(params, ModelTier::FullDispersive, config)?.run_chain(k, false)?;
    let exact = Simulator::new(params, ModelTier::AnalyticJC, config)?.run_chain(k, false)?;
    let aligned = phase_aligned_fidelity(&full.final_state, &exact.final_state)?;
    let mut gap: f64 = 0.0;
    for m in 1..=k {
        let pops = hilbert::reduced_density(&full.final_state, &[m])?.populations();
        let ladder = ladder_from_populations(params.n_atoms, &pops)?;
        gap = gap.max(bosonic_commutator_defect(&ladder)?.gap);
    }
    Ok(ApproximationReport {
        n_atoms: params.n_atoms,
        ratio,
        k,
        chain_fidelity: aligned.fidelity,
        plain_fidelity: aligned.plain_fidelity,
        cavity_residual: full.max_cavity_residual(),
        commutator_gap: gap,
        phases: aligned.phases,
    })
}

/// Evaluates every `(N, ratio)` pair concurrently; results are ordered by
/// `N` then ratio as given.
pub fn approximation_sweep(
    n_values: &[usize],
    ratio_values: &[f64],
    k: usize,
    config: ProtocolConfig,
) -> Result<Vec<ApproximationReport>> {
    if n_values.is_empty() || ratio_values.is_empty() {
        return Err(Error::Empty("sweep grid"));
    }
    let grid: Vec<(usize, f64)> = n_values
        .iter()
        .flat_map(|&n| ratio_values.iter().map(move |&r| (n, r)))
        .collect();
    grid.par_iter()
        .map(|&(n, r)| approximation_point(n, r, k, config))
        .collect()
}

/// Angular frequency `ω` of `y(t) ≈ a + b cos ωt + c sin ωt` by least
/// squares, seeded from the mean-crossing count.
pub fn fit_oscillation_frequency(times: &[f64], values: &[f64]) -> Result<f64> {
    if times.len() != values.len() {
        return Err(Error::DimensionMismatch {
            expected: times.len(),
            got: values.len(),
        });
    }
    if times.len() < 8 {
        return Err(Error::Empty("too few samples for a frequency fit"));
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let crossings = values
        .windows(2)
        .filter(|w| (w[0] - mean).signum() != (w[1] - mean).signum())
        .count();
    let span = times[times.len() - 1] - times[0];
    if crossings < 2 || !(span > 0.0) {
        return Err(Error::InvalidParams("signal does not oscillate over the window".into()));
    }
    let guess = PI * crossings as f64 / span;
    let residual = |w: f64| -> f64 {
        let mut ata = Matrix3::<f64>::zeros();
        let mut aty = Vector3::<f64>::zeros();
        for (&t, &y) in times.iter().zip(values) {
            let row = Vector3::new(1.0, (w * t).cos(), (w * t).sin());
            ata += row * row.transpose();
            aty += row * y;
        }
        let coef = match ata.lu().solve(&aty) {
            Some(c) => c,
            None => return f64::INFINITY,
        };
        times
            .iter()
            .zip(values)
            .map(|(&t, &y)| {
                let model = coef[0] + coef[1] * (w * t).cos() + coef[2] * (w * t).sin();
                (y - model).powi(2)
            })
            .sum()
    };
    let (lo, hi) = (0.7 * guess, 1.3 * guess);
    let grid = 400;
    let step = (hi - lo) / grid as f64;
    let (best, _) = (0..=grid)
        .map(|i| lo + i as f64 * step)
        .map(|w| (w, residual(w)))
        .fold((guess, f64::INFINITY), |acc, v| if v.1 < acc.1 { v } else { acc });
    Ok(golden_max(|w| -residual(w), best - step, best + step, guess * 1e-13))
}

/// `(|0⟩ + |1⟩)/√2` on a mode of dimension `dim`.
pub fn plus_mode(dim: usize) -> Result<StateVector> {
    let mut amps = vec![ZERO; dim];
    amps[0] = C64::new(FRAC_1_SQRT_2, 0.0);
    amps[1] = C64::new(FRAC_1_SQRT_2, 0.0);
    StateVector::from_vec(vec![SubsystemSpec::collective_mode(dim)?], amps)
}

/// `|g⟩ ⊗ state`, the expected chain output including the control atom.
pub fn with_ground_atom(state: &StateVector) -> Result<StateVector> {
    let atom = StateVector::basis(vec![SubsystemSpec::control_atom()], &[level::G])?;
    hilbert::tensor_product(&[atom, state.clone()])
}
