//! Composite finite-dimensional Hilbert spaces.
//!
//! A composite space is an ordered list of [`SubsystemSpec`]s. Amplitudes are
//! stored with subsystem 0 varying fastest: the composite index of the level
//! tuple `(i_0, i_1, ...)` is `Σ_k i_k · stride_k` with `stride_0 = 1` and
//! `stride_{k+1} = stride_k · dim_k`. Snapshot files use the same order.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Tolerance used for normalization, hermiticity and projector checks.
pub const TOLERANCE: f64 = 1e-12;

/// Branches with probability below this are treated as impossible.
pub const IMPOSSIBLE_BRANCH: f64 = 1e-12;

pub(crate) const ZERO: C64 = C64::new(0.0, 0.0);
pub(crate) const ONE: C64 = C64::new(1.0, 0.0);
pub(crate) const I: C64 = C64::new(0.0, 1.0);

/// Control-atom level indices.
pub mod level {
    pub const F: usize = 0;
    pub const G: usize = 1;
    pub const E: usize = 2;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Role {
    ControlAtom,
    CollectiveMode,
    CavityMode,
    DickeLadder,
}

/// One tensor factor of a composite space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SubsystemSpec {
    pub role: Role,
    pub dim: usize,
}

impl SubsystemSpec {
    pub fn new(role: Role, dim: usize) -> Result<Self> {
        if dim < 2 {
            return Err(Error::InvalidSubsystem(format!(
                "{role:?} needs dim >= 2, got {dim}"
            )));
        }
        if role == Role::ControlAtom && dim != 3 {
            return Err(Error::InvalidSubsystem(format!(
                "control atom has exactly 3 levels, got {dim}"
            )));
        }
        Ok(Self { role, dim })
    }

    /// Three-level atom with basis order (f, g, e).
    pub fn control_atom() -> Self {
        Self {
            role: Role::ControlAtom,
            dim: 3,
        }
    }

    pub fn collective_mode(truncation: usize) -> Result<Self> {
        Self::new(Role::CollectiveMode, truncation)
    }

    pub fn cavity_mode(truncation: usize) -> Result<Self> {
        Self::new(Role::CavityMode, truncation)
    }

    /// Symmetric subspace of `n_atoms` two-level atoms (excitations 0..=N).
    pub fn dicke_ladder(n_atoms: usize) -> Result<Self> {
        if n_atoms == 0 {
            return Err(Error::InvalidSubsystem(
                "Dicke ladder needs at least one atom".into(),
            ));
        }
        Self::new(Role::DickeLadder, n_atoms + 1)
    }

    /// Whether the subsystem carries an excitation-number ladder.
    pub fn is_ladder(&self) -> bool {
        self.role != Role::ControlAtom
    }
}

pub fn total_dim(subsystems: &[SubsystemSpec]) -> usize {
    subsystems.iter().map(|s| s.dim).product()
}

pub fn strides(subsystems: &[SubsystemSpec]) -> Vec<usize> {
    let mut out = Vec::with_capacity(subsystems.len());
    let mut acc = 1;
    for s in subsystems {
        out.push(acc);
        acc *= s.dim;
    }
    out
}

/// Levels of every subsystem for a composite index.
pub fn decompose_index(subsystems: &[SubsystemSpec], mut index: usize) -> Vec<usize> {
    subsystems
        .iter()
        .map(|s| {
            let level = index % s.dim;
            index /= s.dim;
            level
        })
        .collect()
}

pub fn compose_index(subsystems: &[SubsystemSpec], levels: &[usize]) -> Result<usize> {
    if levels.len() != subsystems.len() {
        return Err(Error::DimensionMismatch {
            expected: subsystems.len(),
            got: levels.len(),
        });
    }
    let mut index = 0;
    for ((s, &l), stride) in subsystems.iter().zip(levels).zip(strides(subsystems)) {
        if l >= s.dim {
            return Err(Error::IndexOutOfRange {
                index: l,
                count: s.dim,
            });
        }
        index += l * stride;
    }
    Ok(index)
}

/// Offsets of a group of subsystems and the base indices of every
/// configuration of the remaining ("spectator") subsystems.
///
/// The local index runs over the selected subsystems with the first listed
/// varying fastest, so `base + offsets[local]` addresses one amplitude.
#[derive(Debug, Clone)]
pub(crate) struct LocalLayout {
    pub offsets: Vec<usize>,
    pub bases: Vec<usize>,
}

pub(crate) fn local_layout(subsystems: &[SubsystemSpec], indices: &[usize]) -> Result<LocalLayout> {
    let count = subsystems.len();
    for (pos, &i) in indices.iter().enumerate() {
        if i >= count {
            return Err(Error::IndexOutOfRange { index: i, count });
        }
        if indices[..pos].contains(&i) {
            return Err(Error::InvalidSubsystem(format!("subsystem {i} listed twice")));
        }
    }
    let stride = strides(subsystems);
    let enumerate = |which: &[usize]| -> Vec<usize> {
        let mut out = vec![0usize];
        for &k in which {
            let mut next = Vec::with_capacity(out.len() * subsystems[k].dim);
            for level in 0..subsystems[k].dim {
                next.extend(out.iter().map(|&o| o + level * stride[k]));
            }
            out = next;
        }
        out
    };
    let spectators: Vec<usize> = (0..count).filter(|k| !indices.contains(k)).collect();
    // `enumerate` puts the first listed subsystem on the fastest axis.
    Ok(LocalLayout {
        offsets: enumerate(indices),
        bases: enumerate(&spectators),
    })
}

/// Pure state on a composite space.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    subsystems: Vec<SubsystemSpec>,
    amplitudes: DVector<C64>,
}

impl StateVector {
    /// Wraps amplitudes without normalizing them.
    pub fn new(subsystems: Vec<SubsystemSpec>, amplitudes: DVector<C64>) -> Result<Self> {
        if subsystems.is_empty() {
            return Err(Error::Empty("subsystem list"));
        }
        let expected = total_dim(&subsystems);
        if amplitudes.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                got: amplitudes.len(),
            });
        }
        Ok(Self {
            subsystems,
            amplitudes,
        })
    }

    pub fn from_vec(subsystems: Vec<SubsystemSpec>, amplitudes: Vec<C64>) -> Result<Self> {
        Self::new(subsystems, DVector::from_vec(amplitudes))
    }

    /// Wraps and normalizes amplitudes.
    pub fn normalized_from(subsystems: Vec<SubsystemSpec>, amplitudes: Vec<C64>) -> Result<Self> {
        Self::from_vec(subsystems, amplitudes)?.normalize()
    }

    /// Product basis state with the given level on each subsystem.
    pub fn basis(subsystems: Vec<SubsystemSpec>, levels: &[usize]) -> Result<Self> {
        let index = compose_index(&subsystems, levels)?;
        let mut amplitudes = DVector::from_element(total_dim(&subsystems), ZERO);
        amplitudes[index] = ONE;
        Self::new(subsystems, amplitudes)
    }

    /// Normalized single-subsystem state.
    pub fn single(spec: SubsystemSpec, amplitudes: &[C64]) -> Result<Self> {
        Self::normalized_from(vec![spec], amplitudes.to_vec())
    }

    pub fn subsystems(&self) -> &[SubsystemSpec] {
        &self.subsystems
    }

    pub fn amplitudes(&self) -> &DVector<C64> {
        &self.amplitudes
    }

    pub fn into_amplitudes(self) -> DVector<C64> {
        self.amplitudes
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitude(&self, levels: &[usize]) -> Result<C64> {
        Ok(self.amplitudes[compose_index(&self.subsystems, levels)?])
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.norm()
    }

    pub fn normalize(mut self) -> Result<Self> {
        let norm = self.norm();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::NotNormalized(norm));
        }
        self.amplitudes.unscale_mut(norm);
        Ok(self)
    }

    pub fn is_normalized(&self, tol: f64) -> bool {
        (self.norm() - 1.0).abs() <= tol
    }

    pub fn inner(&self, other: &StateVector) -> Result<C64> {
        check_same_space(&self.subsystems, &other.subsystems)?;
        Ok(self.amplitudes.dotc(&other.amplitudes))
    }

    pub fn scaled(&self, factor: C64) -> StateVector {
        StateVector {
            subsystems: self.subsystems.clone(),
            amplitudes: self.amplitudes.map(|a| a * factor),
        }
    }

    /// Population of `level` on subsystem `index`.
    pub fn level_population(&self, index: usize, level: usize) -> Result<f64> {
        let layout = local_layout(&self.subsystems, &[index])?;
        if level >= self.subsystems[index].dim {
            return Err(Error::IndexOutOfRange {
                index: level,
                count: self.subsystems[index].dim,
            });
        }
        let off = layout.offsets[level];
        Ok(layout
            .bases
            .iter()
            .map(|b| self.amplitudes[b + off].norm_sqr())
            .sum())
    }

    /// Population outside levels `{0, .., keep-1}` of subsystem `index`.
    pub fn population_above(&self, index: usize, keep: usize) -> Result<f64> {
        let dim = self
            .subsystems
            .get(index)
            .ok_or(Error::IndexOutOfRange {
                index,
                count: self.subsystems.len(),
            })?
            .dim;
        let mut total = 0.0;
        for level in keep.min(dim)..dim {
            total += self.level_population(index, level)?;
        }
        Ok(total)
    }

    pub fn snapshot(&self) -> StateSnapshot {
        StateSnapshot {
            subsystems: self.subsystems.clone(),
            amplitudes: self.amplitudes.iter().map(|a| [a.re, a.im]).collect(),
        }
    }

    pub fn from_snapshot(snapshot: &StateSnapshot) -> Result<Self> {
        for s in &snapshot.subsystems {
            SubsystemSpec::new(s.role, s.dim).map_err(|e| Error::Snapshot(e.to_string()))?;
        }
        let amplitudes = snapshot
            .amplitudes
            .iter()
            .map(|&[re, im]| C64::new(re, im))
            .collect();
        Self::from_vec(snapshot.subsystems.clone(), amplitudes)
    }
}

fn check_same_space(a: &[SubsystemSpec], b: &[SubsystemSpec]) -> Result<()> {
    if a.len() != b.len() || a.iter().zip(b).any(|(x, y)| x.dim != y.dim) {
        return Err(Error::DimensionMismatch {
            expected: total_dim(a),
            got: total_dim(b),
        });
    }
    Ok(())
}

/// Serialized form of a [`StateVector`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateSnapshot {
    pub subsystems: Vec<SubsystemSpec>,
    pub amplitudes: Vec<[f64; 2]>,
}

impl StateSnapshot {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("snapshot serialization is infallible")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Snapshot(e.to_string()))
    }
}

/// Normalized tensor product in the order given.
pub fn tensor_product(states: &[StateVector]) -> Result<StateVector> {
    if states.is_empty() {
        return Err(Error::Empty("state list"));
    }
    for s in states {
        if !s.is_normalized(1e-10) {
            return Err(Error::NotNormalized(s.norm()));
        }
    }
    let mut subsystems = Vec::new();
    let mut amps: Vec<C64> = vec![ONE];
    for s in states {
        subsystems.extend_from_slice(&s.subsystems);
        // Earlier factors keep the faster axes.
        let mut next = Vec::with_capacity(amps.len() * s.dim());
        for b in s.amplitudes.iter() {
            next.extend(amps.iter().map(|a| a * b));
        }
        amps = next;
    }
    StateVector::from_vec(subsystems, amps)?.normalize()
}

/// Hermitian operator on a composite space.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianOperator {
    subsystems: Vec<SubsystemSpec>,
    matrix: DMatrix<C64>,
}

/// Maximum entry of `m - m†`.
pub fn hermiticity_defect(m: &DMatrix<C64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

fn max_entry(m: &DMatrix<C64>) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

impl HermitianOperator {
    /// Checks shape and hermiticity (relative to the largest entry).
    pub fn new(subsystems: Vec<SubsystemSpec>, matrix: DMatrix<C64>) -> Result<Self> {
        let dim = total_dim(&subsystems);
        if matrix.nrows() != dim || matrix.ncols() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: matrix.nrows().max(matrix.ncols()),
            });
        }
        let defect = hermiticity_defect(&matrix);
        if defect > TOLERANCE * max_entry(&matrix).max(1.0) {
            return Err(Error::NotHermitian(defect));
        }
        Ok(Self { subsystems, matrix })
    }

    pub fn subsystems(&self) -> &[SubsystemSpec] {
        &self.subsystems
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// `⟨bra|H|ket⟩` for product basis levels.
    pub fn element(&self, bra: &[usize], ket: &[usize]) -> Result<C64> {
        let r = compose_index(&self.subsystems, bra)?;
        let c = compose_index(&self.subsystems, ket)?;
        Ok(self.matrix[(r, c)])
    }

    pub fn expectation(&self, state: &StateVector) -> Result<f64> {
        check_same_space(&self.subsystems, &state.subsystems)?;
        Ok(state.amplitudes.dotc(&(&self.matrix * &state.amplitudes)).re)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.matrix[(i, i)].re).collect()
    }
}

/// Product of single-subsystem matrices in the composite index order
/// (first factor fastest).
pub fn kron_subsystems(factors: &[&DMatrix<C64>]) -> DMatrix<C64> {
    let mut out = DMatrix::from_element(1, 1, ONE);
    for f in factors {
        // nalgebra's kron puts its left operand on the slow axis.
        out = f.kronecker(&out);
    }
    out
}

/// Lifts a single-subsystem operator to the composite space.
pub fn embed_operator(
    op: &HermitianOperator,
    target: &[SubsystemSpec],
    index: usize,
) -> Result<HermitianOperator> {
    let local_dim = target
        .get(index)
        .ok_or(Error::IndexOutOfRange {
            index,
            count: target.len(),
        })?
        .dim;
    if op.dim() != local_dim {
        return Err(Error::DimensionMismatch {
            expected: local_dim,
            got: op.dim(),
        });
    }
    let matrix = embed_matrix(op.matrix(), target, &[index])?;
    Ok(HermitianOperator {
        subsystems: target.to_vec(),
        matrix,
    })
}

/// Lifts a matrix acting on `indices` (first listed fastest) to the full
/// composite space.
pub fn embed_matrix(
    local: &DMatrix<C64>,
    target: &[SubsystemSpec],
    indices: &[usize],
) -> Result<DMatrix<C64>> {
    let layout = local_layout(target, indices)?;
    let ld = layout.offsets.len();
    if local.nrows() != ld || local.ncols() != ld {
        return Err(Error::DimensionMismatch {
            expected: ld,
            got: local.nrows(),
        });
    }
    let dim = total_dim(target);
    let mut out = DMatrix::from_element(dim, dim, ZERO);
    for &base in &layout.bases {
        for (r, &ro) in layout.offsets.iter().enumerate() {
            for (c, &co) in layout.offsets.iter().enumerate() {
                out[(base + ro, base + co)] = local[(r, c)];
            }
        }
    }
    Ok(out)
}

/// Matrix-vector product with a full-space operator.
pub fn apply(op: &DMatrix<C64>, state: &StateVector) -> Result<StateVector> {
    if op.nrows() != state.dim() || op.ncols() != state.dim() {
        return Err(Error::DimensionMismatch {
            expected: state.dim(),
            got: op.nrows(),
        });
    }
    Ok(StateVector {
        subsystems: state.subsystems.clone(),
        amplitudes: op * &state.amplitudes,
    })
}

/// Applies a matrix acting on the listed subsystems (first listed fastest)
/// without forming the full-space operator.
pub fn apply_local(
    state: &StateVector,
    indices: &[usize],
    local: &DMatrix<C64>,
) -> Result<StateVector> {
    let layout = local_layout(&state.subsystems, indices)?;
    let ld = layout.offsets.len();
    if local.nrows() != ld || local.ncols() != ld {
        return Err(Error::DimensionMismatch {
            expected: ld,
            got: local.nrows(),
        });
    }
    let mut out = state.amplitudes.clone();
    let mut block = DVector::from_element(ld, ZERO);
    for &base in &layout.bases {
        for (l, &o) in layout.offsets.iter().enumerate() {
            block[l] = state.amplitudes[base + o];
        }
        let mapped = local * &block;
        for (l, &o) in layout.offsets.iter().enumerate() {
            out[base + o] = mapped[l];
        }
    }
    Ok(StateVector {
        subsystems: state.subsystems.clone(),
        amplitudes: out,
    })
}

/// `|⟨a|b⟩|²`.
pub fn fidelity(a: &StateVector, b: &StateVector) -> Result<f64> {
    Ok(a.inner(b)?.norm_sqr().min(1.0))
}

/// Projective measurement on one subsystem.
#[derive(Debug, Clone)]
pub struct MeasurementBasis {
    subsystem_index: usize,
    projectors: Vec<HermitianOperator>,
    labels: Vec<String>,
}

impl MeasurementBasis {
    /// Validates orthogonality, idempotence and completeness.
    pub fn new(
        subsystem_index: usize,
        projectors: Vec<HermitianOperator>,
        labels: Vec<String>,
    ) -> Result<Self> {
        if projectors.is_empty() {
            return Err(Error::InvalidBasis("no projectors".into()));
        }
        if projectors.len() != labels.len() {
            return Err(Error::InvalidBasis(format!(
                "{} projectors but {} labels",
                projectors.len(),
                labels.len()
            )));
        }
        let dim = projectors[0].dim();
        let mut sum = DMatrix::from_element(dim, dim, ZERO);
        for (i, p) in projectors.iter().enumerate() {
            if p.dim() != dim {
                return Err(Error::InvalidBasis("projector dimensions differ".into()));
            }
            let m = p.matrix();
            if max_entry(&(m * m - m)) > TOLERANCE {
                return Err(Error::InvalidBasis(format!("`{}` is not idempotent", labels[i])));
            }
            for (j, q) in projectors.iter().enumerate().skip(i + 1) {
                if max_entry(&(m * q.matrix())) > TOLERANCE {
                    return Err(Error::InvalidBasis(format!(
                        "`{}` and `{}` are not orthogonal",
                        labels[i], labels[j]
                    )));
                }
            }
            sum += m;
        }
        if max_entry(&(sum - DMatrix::identity(dim, dim))) > TOLERANCE {
            return Err(Error::InvalidBasis("projectors do not sum to identity".into()));
        }
        Ok(Self {
            subsystem_index,
            projectors,
            labels,
        })
    }

    /// Rank-one projectors onto orthonormal local vectors. When the vectors do
    /// not span the subsystem, a complementary projector labelled
    /// `complement` is appended.
    pub fn from_vectors(
        spec: SubsystemSpec,
        subsystem_index: usize,
        vectors: &[(&str, Vec<C64>)],
        complement: &str,
    ) -> Result<Self> {
        let dim = spec.dim;
        let mut projectors = Vec::new();
        let mut labels = Vec::new();
        let mut span = DMatrix::from_element(dim, dim, ZERO);
        for (label, v) in vectors {
            if v.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: v.len(),
                });
            }
            let v = DVector::from_vec(v.clone());
            let p = &v * v.adjoint();
            span += &p;
            projectors.push(HermitianOperator::new(vec![spec], p)?);
            labels.push((*label).to_string());
        }
        if vectors.len() < dim {
            let rest = DMatrix::identity(dim, dim) - span;
            projectors.push(HermitianOperator::new(vec![spec], rest)?);
            labels.push(complement.to_string());
        }
        Self::new(subsystem_index, projectors, labels)
    }

    pub fn subsystem_index(&self) -> usize {
        self.subsystem_index
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn projectors(&self) -> &[HermitianOperator] {
        &self.projectors
    }

    fn check_state(&self, state: &StateVector) -> Result<()> {
        let spec = state
            .subsystems
            .get(self.subsystem_index)
            .ok_or(Error::IndexOutOfRange {
                index: self.subsystem_index,
                count: state.subsystems.len(),
            })?;
        if spec.dim != self.projectors[0].dim() {
            return Err(Error::DimensionMismatch {
                expected: spec.dim,
                got: self.projectors[0].dim(),
            });
        }
        Ok(())
    }

    /// Outcome probabilities `⟨ψ|P_k|ψ⟩` in label order.
    pub fn probabilities(&self, state: &StateVector) -> Result<Vec<f64>> {
        self.check_state(state)?;
        let norm2 = state.norm().powi(2);
        self.projectors
            .iter()
            .map(|p| {
                let projected = apply_local(state, &[self.subsystem_index], p.matrix())?;
                Ok(projected.norm().powi(2) / norm2)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum MeasureMode {
    /// Draw an outcome from the Born distribution using this seed.
    Sample(u64),
    /// Condition on the named outcome.
    Postselect(String),
}

#[derive(Debug, Clone)]
pub struct Measurement {
    pub label: String,
    pub probability: f64,
    pub post_state: StateVector,
}

pub fn measure(state: &StateVector, basis: &MeasurementBasis, mode: &MeasureMode) -> Result<Measurement> {
    let probs = basis.probabilities(state)?;
    let chosen = match mode {
        MeasureMode::Postselect(label) => {
            let k = basis
                .labels
                .iter()
                .position(|l| l == label)
                .ok_or_else(|| Error::UnknownOutcome(label.clone()))?;
            if probs[k] < IMPOSSIBLE_BRANCH {
                return Err(Error::ImpossibleBranch {
                    label: label.clone(),
                    probability: probs[k],
                });
            }
            k
        }
        MeasureMode::Sample(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut pick = None;
            for (k, &p) in probs.iter().enumerate() {
                acc += p;
                if u < acc && p >= IMPOSSIBLE_BRANCH {
                    pick = Some(k);
                    break;
                }
            }
            // Rounding can leave u just above the cumulative sum.
            pick.unwrap_or_else(|| {
                probs
                    .iter()
                    .rposition(|&p| p >= IMPOSSIBLE_BRANCH)
                    .expect("some outcome has nonzero probability")
            })
        }
    };
    let projected = apply_local(state, &[basis.subsystem_index], basis.projectors[chosen].matrix())?;
    Ok(Measurement {
        label: basis.labels[chosen].clone(),
        probability: probs[chosen],
        post_state: projected.normalize()?,
    })
}

/// Density matrix on a subset of subsystems.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    pub subsystems: Vec<SubsystemSpec>,
    pub matrix: DMatrix<C64>,
}

impl DensityMatrix {
    pub fn trace(&self) -> f64 {
        self.matrix.trace().re
    }

    pub fn purity(&self) -> f64 {
        (&self.matrix * &self.matrix).trace().re
    }

    /// Diagonal entries (level populations).
    pub fn populations(&self) -> Vec<f64> {
        (0..self.matrix.nrows()).map(|i| self.matrix[(i, i)].re).collect()
    }
}

/// Partial trace over every subsystem not listed in `keep`.
pub fn reduced_density(state: &StateVector, keep: &[usize]) -> Result<DensityMatrix> {
    if keep.is_empty() {
        return Err(Error::Empty("kept subsystem list"));
    }
    let layout = local_layout(&state.subsystems, keep)?;
    let ld = layout.offsets.len();
    let norm2 = state.norm().powi(2);
    let mut rho = DMatrix::from_element(ld, ld, ZERO);
    for &base in &layout.bases {
        for (r, &ro) in layout.offsets.iter().enumerate() {
            let a = state.amplitudes[base + ro];
            if a == ZERO {
                continue;
            }
            for (c, &co) in layout.offsets.iter().enumerate() {
                rho[(r, c)] += a * state.amplitudes[base + co].conj();
            }
        }
    }
    rho.unscale_mut(norm2);
    Ok(DensityMatrix {
        subsystems: keep.iter().map(|&k| state.subsystems[k]).collect(),
        matrix: rho,
    })
}

/// Removes subsystem `index` by taking the partial inner product with
/// `vector` on it. Returns the normalized remainder and the squared norm of
/// the contraction.
pub fn contract_subsystem(
    state: &StateVector,
    index: usize,
    vector: &[C64],
) -> Result<(StateVector, f64)> {
    if state.subsystems.len() < 2 {
        return Err(Error::InvalidSubsystem(
            "cannot remove the only subsystem".into(),
        ));
    }
    let layout = local_layout(&state.subsystems, &[index])?;
    let dim = state.subsystems[index].dim;
    if vector.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: vector.len(),
        });
    }
    // Spectator bases enumerate the remaining subsystems in order with the
    // earliest one fastest, which is exactly the reduced index convention.
    let amps: Vec<C64> = layout
        .bases
        .iter()
        .map(|&b| {
            layout
                .offsets
                .iter()
                .zip(vector)
                .map(|(&o, v)| v.conj() * state.amplitudes[b + o])
                .sum()
        })
        .collect();
    let mut subsystems = state.subsystems.clone();
    subsystems.remove(index);
    let rest = StateVector::from_vec(subsystems, amps)?;
    let weight = rest.norm().powi(2) / state.norm().powi(2);
    if weight < IMPOSSIBLE_BRANCH {
        return Err(Error::ImpossibleBranch {
            label: format!("contraction of subsystem {index}"),
            probability: weight,
        });
    }
    Ok((rest.normalize()?, weight))
}

/// Level vector `|level⟩` on a subsystem of dimension `dim`.
pub fn ket(dim: usize, level: usize) -> Vec<C64> {
    let mut v = vec![ZERO; dim];
    v[level] = ONE;
    v
}
