//! Chain generation and two-chain fusion as sequences of cavity passes,
//! Ramsey pulses and atom detections.
//!
//! The chain state lives on `[control atom, mode_1, .., mode_K]`. A cavity
//! pass only ever touches the control atom and one collective mode; in the
//! full dispersive tier the cavity field of that station is attached for the
//! duration of the pass, starting in vacuum, and projected back onto vacuum
//! afterwards.

use std::f64::consts::FRAC_1_SQRT_2;

use nalgebra::{DMatrix, DVector};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    self, ModelTier, PhysicalParams, Propagator, DEFAULT_CAVITY_TRUNCATION, DEFAULT_MODE_TRUNCATION,
    LAB_LIFETIME_S,
};
use crate::error::{Error, Result};
use crate::hilbert::{
    self, ket, level, MeasureMode, MeasurementBasis, Role, StateSnapshot, StateVector,
    SubsystemSpec, C64, I, ONE, ZERO,
};

pub const TRACE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PulseName {
    /// `|g⟩ → i|e⟩`
    PulseA,
    /// `|e⟩ → (|f⟩-|e⟩)/√2`, `|f⟩ → (|f⟩+|e⟩)/√2`
    PulseB,
    /// `|f⟩ → -i|g⟩`
    PulseE,
}

/// Classical pulse on the control atom.
#[derive(Debug, Clone, PartialEq)]
pub struct RamseyPulse {
    pub name: PulseName,
    pub unitary: DMatrix<C64>,
    /// Level whose image is a completion of the specified action; the
    /// protocol must not populate it when the pulse fires.
    pub completed_level: usize,
}

impl RamseyPulse {
    pub fn new(name: PulseName) -> Self {
        let s = C64::new(FRAC_1_SQRT_2, 0.0);
        let mut u = DMatrix::from_element(3, 3, ZERO);
        let (f, g, e) = (level::F, level::G, level::E);
        // Columns are images of basis states.
        let completed_level = match name {
            PulseName::PulseA => {
                u[(f, f)] = ONE;
                u[(e, g)] = I;
                u[(g, e)] = I;
                e
            }
            PulseName::PulseB => {
                u[(f, f)] = s;
                u[(e, f)] = s;
                u[(f, e)] = s;
                u[(e, e)] = -s;
                u[(g, g)] = ONE;
                g
            }
            PulseName::PulseE => {
                u[(g, f)] = -I;
                u[(f, g)] = -I;
                u[(e, e)] = ONE;
                g
            }
        };
        Self {
            name,
            unitary: u,
            completed_level,
        }
    }
}

/// Outcome labels of the stage-1 fusion detection basis `(|f⟩ ± |g⟩)/√2`.
pub const FG_PLUS: &str = "+";
pub const FG_MINUS: &str = "-";
/// Outcome labels of the stage-2 basis `(|g⟩ ± i|e⟩)/√2`.
pub const GE_PLUS: &str = "+";
pub const GE_MINUS: &str = "-";
pub const COMPLEMENT: &str = "other";

fn fg_vectors() -> [(&'static str, Vec<C64>); 2] {
    let s = C64::new(FRAC_1_SQRT_2, 0.0);
    [(FG_PLUS, vec![s, s, ZERO]), (FG_MINUS, vec![s, -s, ZERO])]
}

fn ge_vectors() -> [(&'static str, Vec<C64>); 2] {
    let s = C64::new(FRAC_1_SQRT_2, 0.0);
    [(GE_PLUS, vec![ZERO, s, I * s]), (GE_MINUS, vec![ZERO, s, -I * s])]
}

/// Detection of the control atom in `{(|f⟩ ± |g⟩)/√2}`.
pub fn fg_basis(atom_index: usize) -> Result<MeasurementBasis> {
    MeasurementBasis::from_vectors(SubsystemSpec::control_atom(), atom_index, &fg_vectors(), COMPLEMENT)
}

/// Detection of the control atom in `{(|g⟩ ± i|e⟩)/√2}`.
pub fn ge_basis(atom_index: usize) -> Result<MeasurementBasis> {
    MeasurementBasis::from_vectors(SubsystemSpec::control_atom(), atom_index, &ge_vectors(), COMPLEMENT)
}

fn outcome_vector(basis_vectors: &[(&str, Vec<C64>)], label: &str) -> Option<Vec<C64>> {
    basis_vectors
        .iter()
        .find(|(l, _)| *l == label)
        .map(|(_, v)| v.clone())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum ProtocolStep {
    CavityPass {
        atom: String,
        ensemble_index: usize,
        duration: f64,
        tier: ModelTier,
    },
    Pulse {
        atom: String,
        pulse: PulseName,
    },
    Measure {
        atom: String,
        basis: String,
        mode: MeasureMode,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassReport {
    pub step_index: usize,
    pub ensemble_index: usize,
    /// Population on the top mode level or pushed beyond the truncation.
    pub leakage: f64,
    /// Population outside cavity vacuum at the end of the pass.
    pub cavity_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeRecord {
    pub step_index: usize,
    pub label: String,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntermediateRecord {
    pub step_index: usize,
    pub stage: String,
    pub fidelity: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub snapshot: Option<StateSnapshot>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionRecord {
    pub after_step: usize,
    pub ensemble_index: usize,
    pub operation: String,
}

/// Record of one protocol execution.
#[derive(Debug, Clone)]
pub struct ProtocolTrace {
    pub kind: String,
    pub tier: ModelTier,
    pub steps: Vec<ProtocolStep>,
    pub passes: Vec<PassReport>,
    pub outcomes: Vec<OutcomeRecord>,
    pub intermediates: Vec<IntermediateRecord>,
    pub corrections: Vec<CorrectionRecord>,
    pub pulse_completion_population: f64,
    pub final_state: StateVector,
    pub success: bool,
}

#[derive(Serialize)]
struct TraceFile<'a> {
    schema_version: u32,
    kind: &'a str,
    tier: ModelTier,
    success: bool,
    steps: &'a [ProtocolStep],
    passes: &'a [PassReport],
    outcomes: &'a [OutcomeRecord],
    intermediates: &'a [IntermediateRecord],
    corrections: &'a [CorrectionRecord],
    max_leakage: f64,
    max_cavity_residual: f64,
    pulse_completion_population: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    final_state: Option<StateSnapshot>,
}

impl ProtocolTrace {
    fn new(kind: &str, tier: ModelTier, state: StateVector) -> Self {
        Self {
            kind: kind.to_string(),
            tier,
            steps: Vec::new(),
            passes: Vec::new(),
            outcomes: Vec::new(),
            intermediates: Vec::new(),
            corrections: Vec::new(),
            pulse_completion_population: 0.0,
            final_state: state,
            success: false,
        }
    }

    pub fn max_leakage(&self) -> f64 {
        self.passes.iter().fold(0.0, |a, p| a.max(p.leakage))
    }

    pub fn max_cavity_residual(&self) -> f64 {
        self.passes.iter().fold(0.0, |a, p| a.max(p.cavity_residual))
    }

    pub fn intermediate(&self, stage: &str) -> Option<&IntermediateRecord> {
        self.intermediates.iter().find(|r| r.stage == stage)
    }

    /// Mode state after a chain run with the control atom projected onto
    /// `|g⟩`, together with the weight of that projection.
    pub fn cluster_state(&self) -> Result<(StateVector, f64)> {
        if self.final_state.subsystems()[0].role != Role::ControlAtom {
            return Err(Error::InvalidSubsystem("trace has no control atom".into()));
        }
        hilbert::contract_subsystem(&self.final_state, 0, &ket(3, level::G))
    }

    /// Whether the executed steps follow `C_1, R_1, .., C_{K-1}, R_{K-1},
    /// R_E, C_K` with every zone made of pulse A then pulse B.
    pub fn matches_chain_template(&self, k: usize) -> bool {
        let expected = chain_template(k);
        self.steps.len() == expected.len()
            && self.steps.iter().zip(&expected).all(|(s, e)| step_signature(s) == *e)
    }

    /// Whether the executed steps follow the fusion template: `c1` through
    /// both node cavities, detection of `c1`, then (on success) `c2` through
    /// the first node cavity and its detection.
    pub fn matches_fusion_template(&self, node_a: usize, node_b: usize) -> bool {
        let sig: Vec<StepSignature> = self.steps.iter().map(step_signature).collect();
        let stage1 = vec![
            StepSignature::Pass("c1".into(), node_a),
            StepSignature::Pass("c1".into(), node_b),
            StepSignature::Measure("c1".into()),
        ];
        let mut full = stage1.clone();
        full.push(StepSignature::Pass("c2".into(), node_a));
        full.push(StepSignature::Measure("c2".into()));
        if self.success {
            sig == full
        } else {
            sig == stage1
        }
    }

    pub fn to_json(&self, include_state: bool) -> String {
        let file = TraceFile {
            schema_version: TRACE_SCHEMA_VERSION,
            kind: &self.kind,
            tier: self.tier,
            success: self.success,
            steps: &self.steps,
            passes: &self.passes,
            outcomes: &self.outcomes,
            intermediates: &self.intermediates,
            corrections: &self.corrections,
            max_leakage: self.max_leakage(),
            max_cavity_residual: self.max_cavity_residual(),
            pulse_completion_population: self.pulse_completion_population,
            final_state: include_state.then(|| self.final_state.snapshot()),
        };
        serde_json::to_string_pretty(&file).expect("trace serialization is infallible")
    }
}

/// Ensemble indices in the fusion template refer to the combined
/// `[chain_a, chain_b]` mode list.
#[derive(Debug, Clone, PartialEq, Eq)]
enum StepSignature {
    Pass(String, usize),
    Pulse(PulseName),
    Measure(String),
}

fn step_signature(step: &ProtocolStep) -> StepSignature {
    match step {
        ProtocolStep::CavityPass {
            atom,
            ensemble_index,
            ..
        } => StepSignature::Pass(atom.clone(), *ensemble_index),
        ProtocolStep::Pulse { pulse, .. } => StepSignature::Pulse(*pulse),
        ProtocolStep::Measure { atom, .. } => StepSignature::Measure(atom.clone()),
    }
}

fn chain_template(k: usize) -> Vec<StepSignature> {
    let mut out = Vec::new();
    for j in 0..k {
        if j + 1 == k && k >= 2 {
            out.push(StepSignature::Pulse(PulseName::PulseE));
        }
        out.push(StepSignature::Pass("c".into(), j));
        if j + 1 < k {
            out.push(StepSignature::Pulse(PulseName::PulseA));
            out.push(StepSignature::Pulse(PulseName::PulseB));
        }
    }
    out
}

/// Numerical settings shared by all runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub mode_truncation: usize,
    pub cavity_truncation: usize,
    /// Bound on per-pass mode leakage and, in exact tiers, on population of
    /// pulse completion levels.
    pub leakage_bound: f64,
    /// Bound on per-pass cavity residual and, in the full tier, on pulse
    /// completion populations.
    pub residual_bound: f64,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            mode_truncation: DEFAULT_MODE_TRUNCATION,
            cavity_truncation: DEFAULT_CAVITY_TRUNCATION,
            leakage_bound: 1e-8,
            residual_bound: 0.05,
        }
    }
}

enum PassEngine {
    Analytic,
    /// Evolution on (atom ⊗ ladder ⊗ cavity); `cavity_dim` is 1 in the
    /// effective tier.
    Numeric {
        propagator: Propagator,
        frame: Vec<f64>,
        ladder_dim: usize,
        cavity_dim: usize,
    },
}

/// Executes passes, pulses and detections for one parameter set and tier.
pub struct Simulator {
    params: PhysicalParams,
    tier: ModelTier,
    config: ProtocolConfig,
    engine: PassEngine,
}

impl Simulator {
    pub fn new(params: PhysicalParams, tier: ModelTier, config: ProtocolConfig) -> Result<Self> {
        params.validate()?;
        if !params.resonant {
            return Err(Error::InvalidParams(
                "the protocol requires the resonance condition 2λ_L = (N-1)λ_c".into(),
            ));
        }
        if config.mode_truncation < 3 {
            return Err(Error::InvalidParams(format!(
                "mode truncation must be >= 3 to monitor leakage, got {}",
                config.mode_truncation
            )));
        }
        let ladder_dim = params.n_atoms + 1;
        let engine = match tier {
            ModelTier::AnalyticJC => PassEngine::Analytic,
            ModelTier::EffectiveSpin => {
                let h = dynamics::build_effective_spin_hamiltonian(&params)?;
                PassEngine::Numeric {
                    frame: h.diagonal(),
                    propagator: Propagator::new(&h)?,
                    ladder_dim,
                    cavity_dim: 1,
                }
            }
            ModelTier::FullDispersive => {
                let h = dynamics::build_full_hamiltonian(&params, config.cavity_truncation)?;
                PassEngine::Numeric {
                    frame: dynamics::full_model_frame(&params)?,
                    propagator: Propagator::new(&h)?,
                    ladder_dim,
                    cavity_dim: config.cavity_truncation,
                }
            }
        };
        Ok(Self {
            params,
            tier,
            config,
            engine,
        })
    }

    pub fn params(&self) -> &PhysicalParams {
        &self.params
    }

    pub fn tier(&self) -> ModelTier {
        self.tier
    }

    pub fn config(&self) -> &ProtocolConfig {
        &self.config
    }

    fn completion_bound(&self) -> f64 {
        match self.tier {
            ModelTier::FullDispersive => self.config.residual_bound,
            _ => self.config.leakage_bound,
        }
    }

    fn mode_spec(&self) -> Result<SubsystemSpec> {
        SubsystemSpec::collective_mode(self.config.mode_truncation)
    }

    /// Lets the control atom at `atom` exchange with the mode at `mode`
    /// for `duration`. Returns the new state and the pass diagnostics
    /// (with `step_index` left at zero).
    pub fn cavity_pass(
        &self,
        state: &StateVector,
        atom: usize,
        mode: usize,
        duration: f64,
    ) -> Result<(StateVector, PassReport)> {
        if !(duration > 0.0) {
            return Err(Error::InvalidParams(format!("pass duration must be positive, got {duration}")));
        }
        let subs = state.subsystems();
        let count = subs.len();
        let atom_spec = subs.get(atom).ok_or(Error::IndexOutOfRange { index: atom, count })?;
        let mode_spec = subs.get(mode).ok_or(Error::IndexOutOfRange { index: mode, count })?;
        if atom_spec.role != Role::ControlAtom || mode_spec.role != Role::CollectiveMode {
            return Err(Error::InvalidSubsystem(format!(
                "cavity pass needs (control atom, collective mode), got ({:?}, {:?})",
                atom_spec.role, mode_spec.role
            )));
        }
        let d = mode_spec.dim;
        let (out, lost, cavity_residual) = match &self.engine {
            PassEngine::Analytic => {
                let out = dynamics::jc_analytic_map_on(state, atom, mode, duration, &self.params)?;
                (out, 0.0, 0.0)
            }
            PassEngine::Numeric {
                propagator,
                frame,
                ladder_dim,
                cavity_dim,
            } => self.numeric_pass(state, atom, mode, d, duration, propagator, frame, *ladder_dim, *cavity_dim)?,
        };
        let leakage = out.level_population(mode, d - 1)? + lost;
        let report = PassReport {
            step_index: 0,
            ensemble_index: mode,
            leakage,
            cavity_residual,
        };
        if leakage > self.config.leakage_bound {
            return Err(Error::Leakage {
                context: format!("cavity pass on subsystem {mode}"),
                value: leakage,
                bound: self.config.leakage_bound,
            });
        }
        if cavity_residual > self.config.residual_bound {
            return Err(Error::Leakage {
                context: format!("cavity vacuum after pass on subsystem {mode}"),
                value: cavity_residual,
                bound: self.config.residual_bound,
            });
        }
        Ok((out, report))
    }

    #[allow(clippy::too_many_arguments)]
    fn numeric_pass(
        &self,
        state: &StateVector,
        atom: usize,
        mode: usize,
        d: usize,
        t: f64,
        propagator: &Propagator,
        frame: &[f64],
        ladder_dim: usize,
        cavity_dim: usize,
    ) -> Result<(StateVector, f64, f64)> {
        let u = propagator.unitary(t);
        let in_model = |a: usize, n: usize| a + 3 * n;
        let full_index = |a: usize, n: usize, c: usize| a + 3 * (n + ladder_dim * c);
        let layout = hilbert::local_layout(state.subsystems(), &[atom, mode])?;
        let total = state.norm().powi(2);

        // Images of the local inputs |a, n⟩ (cavity in vacuum), split into the
        // kept part, population past the mode truncation and the cavity part.
        let local_dim = 3 * d;
        let mut kept = DMatrix::from_element(local_dim, local_dim, ZERO);
        let mut cavity_rows: Vec<usize> = Vec::new();
        for c in 1..cavity_dim {
            for n in 0..ladder_dim {
                for a in 0..3 {
                    cavity_rows.push(full_index(a, n, c));
                }
            }
        }
        for n in 0..d {
            for a in 0..3 {
                let col = in_model(a, n);
                if n >= ladder_dim {
                    // Mode levels with no Dicke counterpart are decoupled.
                    kept[(col, col)] = ONE;
                    continue;
                }
                let src = full_index(a, n, 0);
                for n2 in 0..ladder_dim.min(d) {
                    for a2 in 0..3 {
                        let row = in_model(a2, n2);
                        let phase = C64::from_polar(1.0, frame[in_model(a2, n2)] * t);
                        kept[(row, col)] = phase * u[(full_index(a2, n2, 0), src)];
                    }
                }
            }
        }
        let beyond_rows: Vec<usize> = (d.min(ladder_dim)..ladder_dim)
            .flat_map(|n| (0..3).map(move |a| full_index(a, n, 0)))
            .collect();

        let mut out: Vec<C64> = state.amplitudes().iter().copied().collect();
        let mut lost = 0.0;
        let mut residual = 0.0;
        let mut block = DVector::from_element(local_dim, ZERO);
        for &base in &layout.bases {
            for (l, &o) in layout.offsets.iter().enumerate() {
                block[l] = state.amplitudes()[base + o];
            }
            let mapped = &kept * &block;
            for (l, &o) in layout.offsets.iter().enumerate() {
                out[base + o] = mapped[l];
            }
            if !beyond_rows.is_empty() || !cavity_rows.is_empty() {
                let mut src = DVector::from_element(u.ncols(), ZERO);
                for n in 0..d.min(ladder_dim) {
                    for a in 0..3 {
                        src[full_index(a, n, 0)] = block[in_model(a, n)];
                    }
                }
                let image = &u * &src;
                lost += beyond_rows.iter().map(|&r| image[r].norm_sqr()).sum::<f64>();
                residual += cavity_rows.iter().map(|&r| image[r].norm_sqr()).sum::<f64>();
            }
        }
        let out = StateVector::from_vec(state.subsystems().to_vec(), out)?.normalize()?;
        Ok((out, lost / total, residual / total))
    }

    fn apply_pulse(
        &self,
        state: &StateVector,
        atom: usize,
        pulse: &RamseyPulse,
        trace: &mut ProtocolTrace,
    ) -> Result<StateVector> {
        let completion = state.level_population(atom, pulse.completed_level)? / state.norm().powi(2);
        trace.pulse_completion_population = trace.pulse_completion_population.max(completion);
        if completion > self.completion_bound() {
            return Err(Error::Leakage {
                context: format!("{:?} on a populated completion level", pulse.name),
                value: completion,
                bound: self.completion_bound(),
            });
        }
        hilbert::apply_local(state, &[atom], &pulse.unitary)
    }

    fn record_pass(
        &self,
        trace: &mut ProtocolTrace,
        atom_label: &str,
        ensemble_index: usize,
        duration: f64,
        mut report: PassReport,
    ) {
        report.step_index = trace.steps.len();
        report.ensemble_index = ensemble_index;
        trace.steps.push(ProtocolStep::CavityPass {
            atom: atom_label.to_string(),
            ensemble_index,
            duration,
            tier: self.tier,
        });
        trace.passes.push(report);
    }

    fn record_intermediate(
        &self,
        trace: &mut ProtocolTrace,
        state: &StateVector,
        stage: ChainStage,
        k: usize,
        with_snapshot: bool,
    ) -> Result<()> {
        let reference = reference::chain_state(stage, k, self.config.mode_truncation)?;
        trace.intermediates.push(IntermediateRecord {
            step_index: trace.steps.len() - 1,
            stage: stage.label(k),
            fidelity: hilbert::fidelity(state, &reference)?,
            snapshot: with_snapshot.then(|| state.snapshot()),
        });
        Ok(())
    }

    /// Generates a `K`-node chain: `C_1, R_1, .., C_{K-1}, R_{K-1}, R_E, C_K`
    /// with every pass lasting `π / (2√N λ_c)`.
    ///
    /// With `trace_intermediates` the fidelity of the state after every
    /// station against its closed form is recorded, with snapshots.
    pub fn run_chain(&self, k: usize, trace_intermediates: bool) -> Result<ProtocolTrace> {
        if k < 2 {
            return Err(Error::InvalidParams(format!("a chain needs at least 2 nodes, got {k}")));
        }
        let mode = self.mode_spec()?;
        let atom = StateVector::single(SubsystemSpec::control_atom(), &[ONE, ZERO, ONE])?;
        let vacuum = StateVector::basis(vec![mode], &[0])?;
        let mut factors = vec![atom];
        factors.extend(std::iter::repeat_n(vacuum, k));
        let mut state = hilbert::tensor_product(&factors)?;
        let mut trace = ProtocolTrace::new("chain", self.tier, state.clone());
        let duration = self.params.chain_pass_duration();
        let pulse_a = RamseyPulse::new(PulseName::PulseA);
        let pulse_b = RamseyPulse::new(PulseName::PulseB);
        let pulse_e = RamseyPulse::new(PulseName::PulseE);

        for j in 1..=k {
            if j == k {
                state = self.apply_pulse(&state, 0, &pulse_e, &mut trace)?;
                trace.steps.push(ProtocolStep::Pulse {
                    atom: "c".into(),
                    pulse: PulseName::PulseE,
                });
                if trace_intermediates {
                    self.record_intermediate(&mut trace, &state, ChainStage::AfterExtraZone, k, true)?;
                }
            }
            let (next, report) = self.cavity_pass(&state, 0, j, duration)?;
            state = next;
            self.record_pass(&mut trace, "c", j - 1, duration, report);
            if trace_intermediates {
                self.record_intermediate(&mut trace, &state, ChainStage::AfterCavity(j), k, true)?;
            }
            if j < k {
                for pulse in [&pulse_a, &pulse_b] {
                    state = self.apply_pulse(&state, 0, pulse, &mut trace)?;
                    trace.steps.push(ProtocolStep::Pulse {
                        atom: "c".into(),
                        pulse: pulse.name,
                    });
                }
                if trace_intermediates {
                    self.record_intermediate(&mut trace, &state, ChainStage::AfterZone(j), k, true)?;
                }
            }
        }
        let ground = state.level_population(0, level::G)?;
        if 1.0 - ground > self.completion_bound() {
            return Err(Error::Leakage {
                context: "control atom not returned to |g⟩".into(),
                value: 1.0 - ground,
                bound: self.completion_bound(),
            });
        }
        trace.final_state = state;
        trace.success = true;
        Ok(trace)
    }

    /// Fuses node `node_a` of `chain_a` with node `node_b` of `chain_b`.
    ///
    /// Both inputs are mode-only states. On success the output lists the
    /// modes of `chain_a` without `node_a`, then the modes of `chain_b`.
    pub fn run_fusion(
        &self,
        chain_a: &StateVector,
        chain_b: &StateVector,
        node_a: usize,
        node_b: usize,
        mode: &FusionMode,
    ) -> Result<ProtocolTrace> {
        for (chain, node, name) in [(chain_a, node_a, "a"), (chain_b, node_b, "b")] {
            let subs = chain.subsystems();
            if subs.iter().any(|s| s.role != Role::CollectiveMode) {
                return Err(Error::InvalidSubsystem(format!(
                    "chain {name} must contain only collective modes"
                )));
            }
            if node >= subs.len() {
                return Err(Error::IndexOutOfRange {
                    index: node,
                    count: subs.len(),
                });
            }
            if subs[node].dim != self.config.mode_truncation {
                return Err(Error::DimensionMismatch {
                    expected: self.config.mode_truncation,
                    got: subs[node].dim,
                });
            }
            let outside = chain.population_above(node, 2)? / chain.norm().powi(2);
            if outside > 1e-10 {
                return Err(Error::OutsideQubitSubspace(outside));
            }
        }
        let len_a = chain_a.subsystems().len();
        let mut rng = match mode {
            FusionMode::Sample(seed) => Some(ChaCha8Rng::seed_from_u64(*seed)),
            FusionMode::Postselect { .. } => None,
        };
        let mut next_mode = |stage: usize| -> MeasureMode {
            match (mode, rng.as_mut()) {
                (FusionMode::Postselect { stage1, stage2 }, _) => {
                    MeasureMode::Postselect(if stage == 1 { stage1.clone() } else { stage2.clone() })
                }
                (FusionMode::Sample(_), Some(r)) => MeasureMode::Sample(r.next_u64()),
                _ => unreachable!("sampling mode always owns a generator"),
            }
        };

        // Stage 1: c1 in (|f⟩+|g⟩)/√2 through both node cavities.
        let c1 = StateVector::single(SubsystemSpec::control_atom(), &[ONE, ONE, ZERO])?;
        let mut state = hilbert::tensor_product(&[c1, chain_a.clone(), chain_b.clone()])?;
        let mut trace = ProtocolTrace::new("fusion", self.tier, state.clone());
        let long = self.params.fusion_pass_duration();
        let idx_a = 1 + node_a;
        let idx_b = 1 + len_a + node_b;
        for (idx, ensemble) in [(idx_a, node_a), (idx_b, len_a + node_b)] {
            let (next, report) = self.cavity_pass(&state, 0, idx, long)?;
            state = next;
            self.record_pass(&mut trace, "c1", ensemble, long, report);
        }
        let m1_mode = next_mode(1);
        let m1 = hilbert::measure(&state, &fg_basis(0)?, &m1_mode)?;
        trace.steps.push(ProtocolStep::Measure {
            atom: "c1".into(),
            basis: "(|f⟩±|g⟩)/√2".into(),
            mode: m1_mode,
        });
        trace.outcomes.push(OutcomeRecord {
            step_index: trace.steps.len() - 1,
            label: m1.label.clone(),
            probability: m1.probability,
        });
        if m1.label != FG_PLUS {
            trace.final_state = m1.post_state;
            trace.success = false;
            return Ok(trace);
        }
        let plus = outcome_vector(&fg_vectors(), FG_PLUS).expect("label exists");
        let (rest, _) = hilbert::contract_subsystem(&m1.post_state, 0, &plus)?;

        // Stage 2: c2 in |g⟩ through the first node cavity.
        let c2 = StateVector::basis(vec![SubsystemSpec::control_atom()], &[level::G])?;
        state = hilbert::tensor_product(&[c2, rest])?;
        let short = self.params.chain_pass_duration();
        let (next, report) = self.cavity_pass(&state, 0, idx_a, short)?;
        state = next;
        self.record_pass(&mut trace, "c2", node_a, short, report);
        let m2_mode = next_mode(2);
        let m2 = hilbert::measure(&state, &ge_basis(0)?, &m2_mode)?;
        trace.steps.push(ProtocolStep::Measure {
            atom: "c2".into(),
            basis: "(|g⟩±i|e⟩)/√2".into(),
            mode: m2_mode,
        });
        let m2_step = trace.steps.len() - 1;
        trace.outcomes.push(OutcomeRecord {
            step_index: m2_step,
            label: m2.label.clone(),
            probability: m2.probability,
        });
        let outcome = outcome_vector(&ge_vectors(), &m2.label).ok_or_else(|| Error::ImpossibleBranch {
            label: m2.label.clone(),
            probability: m2.probability,
        })?;
        let (mut rest, _) = hilbert::contract_subsystem(&m2.post_state, 0, &outcome)?;
        // Node a is left in |0⟩ and drops out of the cluster.
        let freed = rest.level_population(node_a, 0)?;
        if 1.0 - freed > self.completion_bound() {
            return Err(Error::Leakage {
                context: "first fusion node not returned to vacuum".into(),
                value: 1.0 - freed,
                bound: self.completion_bound(),
            });
        }
        let d = self.config.mode_truncation;
        (rest, _) = hilbert::contract_subsystem(&rest, node_a, &ket(d, 0))?;
        let out_b = len_a - 1 + node_b;
        if m2.label == GE_PLUS {
            rest = hilbert::apply_local(&rest, &[out_b], &parity_phase(d))?;
            trace.corrections.push(CorrectionRecord {
                after_step: m2_step,
                ensemble_index: len_a + node_b,
                operation: "Z".into(),
            });
        }
        trace.final_state = rest;
        trace.success = true;
        Ok(trace)
    }
}

/// `Σ_n (-1)^n |n⟩⟨n|`, the `diag(1, -1)` phase on the qubit levels.
pub fn parity_phase(dim: usize) -> DMatrix<C64> {
    DMatrix::from_diagonal(&DVector::from_iterator(
        dim,
        (0..dim).map(|n| if n % 2 == 0 { ONE } else { -ONE }),
    ))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum FusionMode {
    /// Draw both detection outcomes from a generator seeded with this value.
    Sample(u64),
    /// Condition on the given stage-1 and stage-2 labels.
    Postselect { stage1: String, stage2: String },
}

impl FusionMode {
    /// Parses `"+,-"` style path specifications.
    pub fn parse_path(spec: &str) -> Result<Self> {
        let parts: Vec<&str> = spec.split(',').map(str::trim).collect();
        let valid = |s: &str| s == "+" || s == "-";
        match parts.as_slice() {
            [a, b] if valid(a) && valid(b) => Ok(FusionMode::Postselect {
                stage1: (*a).to_string(),
                stage2: (*b).to_string(),
            }),
            _ => Err(Error::InvalidParams(format!(
                "postselection path must look like `+,-`, got `{spec}`"
            ))),
        }
    }
}

/// Runs a chain with the default numerical settings.
pub fn run_chain(k: usize, params: &PhysicalParams, tier: ModelTier, trace_intermediates: bool) -> Result<ProtocolTrace> {
    Simulator::new(*params, tier, ProtocolConfig::default())?.run_chain(k, trace_intermediates)
}

/// Runs a fusion with the default numerical settings.
pub fn run_fusion(
    chain_a: &StateVector,
    chain_b: &StateVector,
    node_a: usize,
    node_b: usize,
    params: &PhysicalParams,
    tier: ModelTier,
    mode: &FusionMode,
) -> Result<ProtocolTrace> {
    Simulator::new(*params, tier, ProtocolConfig::default())?.run_fusion(chain_a, chain_b, node_a, node_b, mode)
}

/// Time spent in cavities and zones, compared with the radiative lifetime.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeBudget {
    pub total_s: f64,
    pub pass_s: f64,
    pub zones: usize,
    pub lifetime_s: f64,
    /// `lifetime / total`; infinite for an empty protocol.
    pub margin: f64,
}

/// `K · π/(2√N λ_c)` plus `zone_overhead_s` for each of the `K-1` Ramsey
/// zones and the extra zone.
pub fn total_protocol_time(k: usize, params: &PhysicalParams, zone_overhead_s: f64, lifetime_s: f64) -> TimeBudget {
    let pass = params.chain_pass_duration();
    let zones = if k >= 2 { k } else { 0 };
    let total = k as f64 * pass + zones as f64 * zone_overhead_s;
    TimeBudget {
        total_s: total,
        pass_s: pass,
        zones,
        lifetime_s,
        margin: if total > 0.0 { lifetime_s / total } else { f64::INFINITY },
    }
}

/// [`total_protocol_time`] against the laboratory lifetime, no overheads.
pub fn lab_time_budget(k: usize, params: &PhysicalParams) -> TimeBudget {
    total_protocol_time(k, params, 0.0, LAB_LIFETIME_S)
}

/// Position in the chain pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChainStage {
    /// After cavity `j` (1-based).
    AfterCavity(usize),
    /// After Ramsey zone `j` (1-based, `j < K`).
    AfterZone(usize),
    /// After the extra zone preceding the last cavity.
    AfterExtraZone,
}

impl ChainStage {
    pub fn label(&self, _k: usize) -> String {
        match self {
            ChainStage::AfterCavity(j) => format!("C{j}"),
            ChainStage::AfterZone(j) => format!("R{j}"),
            ChainStage::AfterExtraZone => "RE".into(),
        }
    }
}

pub mod reference {
    //! Closed-form chain states at each station.

    use super::*;

    /// `Π_{i>1} (-1)^{x_{i-1} x_i}` over the first `m` bits.
    fn path_sign(bits: &[usize], m: usize) -> f64 {
        let flips = (1..m).filter(|&i| bits[i - 1] == 1 && bits[i] == 1).count();
        if flips % 2 == 0 {
            1.0
        } else {
            -1.0
        }
    }

    /// `(-1)^{x_{j}}` for 1-based `j`, or 1 when `j == 0`.
    fn sigma(bits: &[usize], j: usize) -> f64 {
        if j == 0 || bits[j - 1] == 0 {
            1.0
        } else {
            -1.0
        }
    }

    /// Chain state on `[atom, mode_1..mode_K]` at `stage`.
    pub fn chain_state(stage: ChainStage, k: usize, mode_truncation: usize) -> Result<StateVector> {
        let mode = SubsystemSpec::collective_mode(mode_truncation)?;
        let mut subs = vec![SubsystemSpec::control_atom()];
        subs.extend(std::iter::repeat_n(mode, k));
        let mut amps = vec![ZERO; hilbert::total_dim(&subs)];
        let mut put = |atom: usize, bits: &[usize], value: C64| -> Result<()> {
            let mut levels = vec![atom];
            levels.extend_from_slice(bits);
            amps[hilbert::compose_index(&subs, &levels)?] += value;
            Ok(())
        };
        let r = |x: f64| C64::new(x, 0.0);
        for word in 0..(1usize << k) {
            let bits: Vec<usize> = (0..k).map(|i| (word >> i) & 1).collect();
            match stage {
                ChainStage::AfterCavity(j) if j == k => {
                    put(level::G, &bits, r(path_sign(&bits, k)))?;
                }
                ChainStage::AfterCavity(j) => {
                    // (|f⟩|0⟩_j - i|g⟩|1⟩_j σ_{j-1}) Π_{m<j}(|0⟩_m + |1⟩_m σ_{m-1})
                    if bits[j..].contains(&1) {
                        continue;
                    }
                    let base = path_sign(&bits, j - 1);
                    if bits[j - 1] == 0 {
                        put(level::F, &bits, r(base))?;
                    } else {
                        put(level::G, &bits, -I * base * sigma(&bits, j - 1))?;
                    }
                }
                ChainStage::AfterZone(j) => {
                    // (|f⟩ + |e⟩σ_j) Π_{m≤j}(|0⟩_m + |1⟩_m σ_{m-1})
                    if bits[j..].contains(&1) {
                        continue;
                    }
                    let base = path_sign(&bits, j);
                    put(level::F, &bits, r(base))?;
                    put(level::E, &bits, r(base * sigma(&bits, j)))?;
                }
                ChainStage::AfterExtraZone => {
                    // (-i|g⟩ + |e⟩σ_{K-1}) Π_{m<K}(...)
                    if bits[k - 1] == 1 {
                        continue;
                    }
                    let base = path_sign(&bits, k - 1);
                    put(level::G, &bits, -I * base)?;
                    put(level::E, &bits, r(base * sigma(&bits, k - 1)))?;
                }
            }
        }
        StateVector::normalized_from(subs, amps)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::fidelity;

    fn params(n: usize) -> PhysicalParams {
        PhysicalParams::lab_defaults(n, 20.0).unwrap()
    }

    fn analytic(n: usize) -> Simulator {
        Simulator::new(params(n), ModelTier::AnalyticJC, ProtocolConfig::default()).unwrap()
    }

    fn max_abs(m: &DMatrix<C64>) -> f64 {
        m.iter().fold(0.0, |a, z| a.max(z.norm()))
    }

    #[test]
    fn pulses_are_unitary_and_act_as_specified() {
        let s = FRAC_1_SQRT_2;
        for name in [PulseName::PulseA, PulseName::PulseB, PulseName::PulseE] {
            let p = RamseyPulse::new(name);
            assert!(max_abs(&(p.unitary.adjoint() * &p.unitary - DMatrix::identity(3, 3))) < 1e-12);
        }
        let a = RamseyPulse::new(PulseName::PulseA).unitary;
        assert_eq!(a[(level::E, level::G)], I);
        assert_eq!(a[(level::F, level::F)], ONE);
        let b = RamseyPulse::new(PulseName::PulseB).unitary;
        assert!((b[(level::F, level::E)].re - s).abs() < 1e-15);
        assert!((b[(level::E, level::E)].re + s).abs() < 1e-15);
        assert!((b[(level::E, level::F)].re - s).abs() < 1e-15);
        let e = RamseyPulse::new(PulseName::PulseE).unitary;
        assert_eq!(e[(level::G, level::F)], -I);
        assert_eq!(e[(level::E, level::E)], ONE);
    }

    #[test]
    fn chain_pass_from_superposition() {
        let sim = analytic(10);
        let atom = StateVector::single(SubsystemSpec::control_atom(), &[ONE, ZERO, ONE]).unwrap();
        let vac = StateVector::basis(vec![SubsystemSpec::collective_mode(4).unwrap()], &[0]).unwrap();
        let psi = hilbert::tensor_product(&[atom, vac]).unwrap();
        let (out, report) = sim.cavity_pass(&psi, 0, 1, sim.params().chain_pass_duration()).unwrap();
        let reference = reference::chain_state(ChainStage::AfterCavity(1), 2, 4).unwrap();
        // compare on the single-mode slice
        let expected = hilbert::contract_subsystem(&reference, 2, &ket(4, 0)).unwrap().0;
        assert!((fidelity(&out, &expected).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(report.cavity_residual, 0.0);
    }

    #[test]
    fn f_level_passes_unchanged() {
        for tier in [ModelTier::AnalyticJC, ModelTier::EffectiveSpin] {
            let sim = Simulator::new(params(5), tier, ProtocolConfig::default()).unwrap();
            let subs = vec![SubsystemSpec::control_atom(), SubsystemSpec::collective_mode(4).unwrap()];
            let psi = StateVector::normalized_from(
                subs.clone(),
                (0..12)
                    .map(|i| if i % 3 == level::F && i < 6 { C64::new(1.0, i as f64) } else { ZERO })
                    .collect(),
            )
            .unwrap();
            let (out, _) = sim.cavity_pass(&psi, 0, 1, 0.7 * sim.params().chain_pass_duration()).unwrap();
            assert!((fidelity(&out, &psi).unwrap() - 1.0).abs() < 1e-12, "{tier:?}");
        }
    }

    #[test]
    fn spin_tier_matches_analytic_on_single_excitations() {
        let p = params(6);
        let spin = Simulator::new(p, ModelTier::EffectiveSpin, ProtocolConfig::default()).unwrap();
        let exact = analytic(6);
        let subs = vec![SubsystemSpec::control_atom(), SubsystemSpec::collective_mode(4).unwrap()];
        // superposition within the {f,g,e} x {0,1} block, no |e,1⟩
        let mut amps = vec![ZERO; 12];
        amps[level::F] = C64::new(0.3, 0.1);
        amps[level::G] = C64::new(-0.2, 0.4);
        amps[level::E] = C64::new(0.5, 0.0);
        amps[level::F + 3] = C64::new(0.1, -0.3);
        amps[level::G + 3] = C64::new(0.0, 0.6);
        let psi = StateVector::normalized_from(subs, amps).unwrap();
        for t in [0.3, 1.0, 2.0] {
            let dt = t * p.chain_pass_duration();
            let (a, _) = spin.cavity_pass(&psi, 0, 1, dt).unwrap();
            let (b, _) = exact.cavity_pass(&psi, 0, 1, dt).unwrap();
            assert!(fidelity(&a, &b).unwrap() > 1.0 - 1e-10);
        }
    }

    #[test]
    fn chain_k2_matches_closed_forms() {
        let trace = analytic(10).run_chain(2, true).unwrap();
        for rec in &trace.intermediates {
            assert!(rec.fidelity > 1.0 - 1e-10, "{}: {}", rec.stage, rec.fidelity);
        }
        assert_eq!(
            trace.intermediates.iter().map(|r| r.stage.as_str()).collect::<Vec<_>>(),
            vec!["C1", "R1", "RE", "C2"]
        );
        assert!(trace.matches_chain_template(2));
        assert!(!trace.matches_chain_template(3));
    }

    #[test]
    fn chain_disentangles_atom() {
        let trace = analytic(10).run_chain(4, false).unwrap();
        let rho = hilbert::reduced_density(&trace.final_state, &[0]).unwrap();
        assert!((rho.matrix[(level::G, level::G)].re - 1.0).abs() < 1e-10);
        let (cluster, w) = trace.cluster_state().unwrap();
        assert!((w - 1.0).abs() < 1e-10);
        assert_eq!(cluster.subsystems().len(), 4);
        assert!(trace.max_leakage() < 1e-12);
    }

    #[test]
    fn chain_rejects_short() {
        assert!(analytic(10).run_chain(1, false).is_err());
        assert!(analytic(10).run_chain(0, false).is_err());
    }

    #[test]
    fn modes_stay_in_qubit_subspace() {
        let trace = analytic(4).run_chain(3, true).unwrap();
        for rec in &trace.intermediates {
            let st = StateVector::from_snapshot(rec.snapshot.as_ref().unwrap()).unwrap();
            for m in 1..=3 {
                assert!(st.population_above(m, 2).unwrap() < 1e-15);
            }
        }
    }

    fn cluster(k: usize, n: usize) -> StateVector {
        analytic(n).run_chain(k, false).unwrap().cluster_state().unwrap().0
    }

    #[test]
    fn fusion_postselect_probabilities() {
        let a = cluster(2, 10);
        let b = cluster(2, 10);
        let sim = analytic(10);
        let trace = sim
            .run_fusion(&a, &b, 0, 0, &FusionMode::parse_path("+,-").unwrap())
            .unwrap();
        assert!(trace.success);
        assert_eq!(trace.outcomes.len(), 2);
        for o in &trace.outcomes {
            assert!((o.probability - 0.5).abs() < 1e-10);
        }
        assert_eq!(trace.final_state.subsystems().len(), 3);
        assert!(trace.corrections.is_empty());
        assert!(trace.matches_fusion_template(0, 2));
    }

    #[test]
    fn fusion_failure_branch_keeps_state() {
        let a = cluster(2, 10);
        let b = cluster(3, 10);
        let trace = analytic(10)
            .run_fusion(&a, &b, 1, 1, &FusionMode::parse_path("-,+").unwrap())
            .unwrap();
        assert!(!trace.success);
        assert_eq!(trace.outcomes.len(), 1);
        assert!((trace.outcomes[0].probability - 0.5).abs() < 1e-10);
        assert_eq!(trace.final_state.subsystems().len(), 1 + 2 + 3);
        assert!(trace.matches_fusion_template(1, 3));
    }

    #[test]
    fn fusion_plus_branch_is_corrected() {
        let a = cluster(2, 10);
        let b = cluster(2, 10);
        let sim = analytic(10);
        let minus = sim.run_fusion(&a, &b, 0, 0, &FusionMode::parse_path("+,-").unwrap()).unwrap();
        let plus = sim.run_fusion(&a, &b, 0, 0, &FusionMode::parse_path("+,+").unwrap()).unwrap();
        assert_eq!(plus.corrections.len(), 1);
        assert!(fidelity(&plus.final_state, &minus.final_state).unwrap() > 1.0 - 1e-10);
    }

    #[test]
    fn fusion_rejects_leaky_nodes() {
        let d = 4;
        let mode = SubsystemSpec::collective_mode(d).unwrap();
        let bad = StateVector::normalized_from(
            vec![mode, mode],
            (0..16).map(|i| if i == 2 || i == 0 { ONE } else { ZERO }).collect(),
        )
        .unwrap();
        let good = cluster(2, 10);
        let r = analytic(10).run_fusion(&bad, &good, 0, 0, &FusionMode::Sample(1));
        assert!(matches!(r, Err(Error::OutsideQubitSubspace(_))));
    }

    #[test]
    fn sampled_fusion_is_reproducible() {
        let a = cluster(2, 10);
        let b = cluster(2, 10);
        let sim = analytic(10);
        let x = sim.run_fusion(&a, &b, 0, 1, &FusionMode::Sample(42)).unwrap();
        let y = sim.run_fusion(&a, &b, 0, 1, &FusionMode::Sample(42)).unwrap();
        assert_eq!(x.to_json(true), y.to_json(true));
    }

    #[test]
    fn path_spec_parsing() {
        assert!(FusionMode::parse_path("+, -").is_ok());
        assert!(FusionMode::parse_path("+").is_err());
        assert!(FusionMode::parse_path("x,-").is_err());
    }

    #[test]
    fn time_budget_edges_and_scaling() {
        let p = params(100);
        assert_eq!(total_protocol_time(0, &p, 1e-5, 0.03).total_s, 0.0);
        let b4 = total_protocol_time(4, &p, 0.0, 0.03);
        assert!((b4.total_s - 4.0 * p.chain_pass_duration()).abs() < 1e-18);
        let with_zones = total_protocol_time(4, &p, 1e-5, 0.03);
        assert!((with_zones.total_s - b4.total_s - 4e-5).abs() < 1e-15);

        // Doubling N at fixed λ_c: keep g²/δ_c fixed by scaling both.
        let mut q = p;
        q.n_atoms = 400;
        q.rabi = dynamics::resonant_rabi(400, q.g_coupling, q.delta_c(), q.delta_l());
        let ratio = q.chain_pass_duration() / p.chain_pass_duration();
        assert!((ratio - 0.5).abs() < 1e-12);
    }

    #[test]
    fn trace_json_has_schema_version() {
        let trace = analytic(10).run_chain(2, true).unwrap();
        let v: serde_json::Value = serde_json::from_str(&trace.to_json(false)).unwrap();
        assert_eq!(v["schema_version"], 1);
        assert_eq!(v["steps"][0]["kind"], "CavityPass");
        assert_eq!(v["steps"][0]["tier"], "analytic");
        assert!(v.get("final_state").is_none());
    }
}
