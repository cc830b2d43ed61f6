//! Hamiltonians for the three model tiers and their time evolution.
//!
//! All rates are angular frequencies in rad/s and durations are in seconds.
//! The full dispersive model is built in the frame co-rotating at the drive
//! frequency, the effective and Jaynes-Cummings models in the frame of the
//! bare atomic transition.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{
    self, hermiticity_defect, kron_subsystems, level, HermitianOperator, Role, StateVector,
    SubsystemSpec, C64, I, ONE, TOLERANCE, ZERO,
};

pub const TWO_PI: f64 = 2.0 * PI;

/// Default truncation of a collective ensemble mode.
pub const DEFAULT_MODE_TRUNCATION: usize = 4;
/// Default truncation of the cavity field.
pub const DEFAULT_CAVITY_TRUNCATION: usize = 3;

/// Laboratory values: 25 kHz coupling, 51.1 GHz g-e and 54.3 GHz g-f
/// transitions, 30 ms radiative lifetime.
pub const LAB_COUPLING_HZ: f64 = 25.0e3;
pub const LAB_OMEGA_0_HZ: f64 = 51.1e9;
pub const LAB_OMEGA_1_HZ: f64 = 54.3e9;
pub const LAB_LIFETIME_S: f64 = 30.0e-3;

/// Drive detuning used when only the cavity detuning is specified.
///
/// The drive and cavity detunings must differ, otherwise the drive and the
/// cavity form a two-photon Raman resonance on the control atom.
pub const DEFAULT_DRIVE_TO_CAVITY_DETUNING: f64 = 2.0;

/// Below this dispersive ratio the builder logs a warning.
pub const DISPERSIVE_WARNING_RATIO: f64 = 10.0;

/// Physical parameters of one cavity station.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams {
    /// g-e transition (rad/s).
    pub omega_0: f64,
    /// g-f transition (rad/s). Not used by the dynamics.
    pub omega_1: f64,
    /// Cavity mode (rad/s).
    pub omega_c: f64,
    /// Classical drive (rad/s).
    pub omega_l: f64,
    /// Classical Rabi frequency (rad/s).
    pub rabi: f64,
    /// Atom-cavity coupling (rad/s).
    pub g_coupling: f64,
    /// Atoms per ensemble.
    pub n_atoms: usize,
    /// Whether `2 λ_L = (N-1) λ_c` is required to hold.
    pub resonant: bool,
}

impl PhysicalParams {
    pub fn new(
        omega_0: f64,
        omega_1: f64,
        omega_c: f64,
        omega_l: f64,
        rabi: f64,
        g_coupling: f64,
        n_atoms: usize,
        resonant: bool,
    ) -> Result<Self> {
        let p = Self {
            omega_0,
            omega_1,
            omega_c,
            omega_l,
            rabi,
            g_coupling,
            n_atoms,
            resonant,
        };
        p.validate()?;
        for w in p.warnings() {
            log::warn!("{w}");
        }
        Ok(p)
    }

    /// Parameters from detunings, solving the drive strength for the
    /// resonance condition when `rabi` is `None`.
    pub fn from_detunings(
        omega_0: f64,
        omega_1: f64,
        g_coupling: f64,
        n_atoms: usize,
        delta_c: f64,
        delta_l: f64,
        rabi: Option<f64>,
    ) -> Result<Self> {
        let omega_c = omega_0 - delta_c;
        let omega_l = omega_0 - delta_l;
        match rabi {
            Some(r) => Self::new(omega_0, omega_1, omega_c, omega_l, r, g_coupling, n_atoms, false),
            None => {
                // Use the rounded detunings so the stored frequencies satisfy
                // the condition exactly.
                let dc = omega_0 - omega_c;
                let dl = omega_0 - omega_l;
                let rabi = resonant_rabi(n_atoms, g_coupling, dc, dl);
                Self::new(omega_0, omega_1, omega_c, omega_l, rabi, g_coupling, n_atoms, true)
            }
        }
    }

    /// Laboratory transition frequencies and coupling with the cavity detuned
    /// by `ratio · g · √N` and the drive strength solved for resonance.
    pub fn lab_defaults(n_atoms: usize, ratio: f64) -> Result<Self> {
        let g = TWO_PI * LAB_COUPLING_HZ;
        let delta_c = ratio * g * (n_atoms as f64).sqrt();
        Self::from_detunings(
            TWO_PI * LAB_OMEGA_0_HZ,
            TWO_PI * LAB_OMEGA_1_HZ,
            g,
            n_atoms,
            delta_c,
            DEFAULT_DRIVE_TO_CAVITY_DETUNING * delta_c,
            None,
        )
    }

    pub fn delta_c(&self) -> f64 {
        self.omega_0 - self.omega_c
    }

    pub fn delta_l(&self) -> f64 {
        self.omega_0 - self.omega_l
    }

    pub fn lambda_l(&self) -> f64 {
        self.rabi * self.rabi / self.delta_l()
    }

    pub fn lambda_c(&self) -> f64 {
        self.g_coupling * self.g_coupling / self.delta_c()
    }

    pub fn sqrt_n(&self) -> f64 {
        (self.n_atoms as f64).sqrt()
    }

    /// `δ_c / (g √(N (n̄+1)))`.
    pub fn dispersive_ratio(&self, mean_photons: f64) -> f64 {
        self.delta_c() / (self.g_coupling * (self.n_atoms as f64 * (mean_photons + 1.0)).sqrt())
    }

    /// Relative violation of `2 λ_L = (N-1) λ_c`.
    pub fn resonance_defect(&self) -> f64 {
        let lhs = 2.0 * self.lambda_l();
        let rhs = (self.n_atoms as f64 - 1.0) * self.lambda_c();
        (lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(self.lambda_c())
    }

    /// Interaction time for a half exchange, `π / (2 √N λ_c)`.
    pub fn chain_pass_duration(&self) -> f64 {
        PI / (2.0 * self.sqrt_n() * self.lambda_c())
    }

    /// Interaction time for a full exchange cycle, `π / (√N λ_c)`.
    pub fn fusion_pass_duration(&self) -> f64 {
        PI / (self.sqrt_n() * self.lambda_c())
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.omega_0,
            self.omega_1,
            self.omega_c,
            self.omega_l,
            self.rabi,
            self.g_coupling,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidParams("non-finite frequency".into()));
        }
        if self.n_atoms == 0 {
            return Err(Error::InvalidParams("ensemble needs at least one atom".into()));
        }
        if !(self.g_coupling > 0.0) {
            return Err(Error::InvalidParams("coupling must be positive".into()));
        }
        if self.rabi < 0.0 {
            return Err(Error::InvalidParams("Rabi frequency must be non-negative".into()));
        }
        if !(self.delta_c() > 0.0) {
            return Err(Error::InvalidParams(format!(
                "cavity detuning must be positive, got {}",
                self.delta_c()
            )));
        }
        if !(self.delta_l() > 0.0) {
            return Err(Error::InvalidParams(format!(
                "drive detuning must be positive, got {}",
                self.delta_l()
            )));
        }
        if self.resonant && self.resonance_defect() > TOLERANCE {
            return Err(Error::InvalidParams(format!(
                "resonance condition violated (relative defect {:e})",
                self.resonance_defect()
            )));
        }
        Ok(())
    }

    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        let ratio = self.dispersive_ratio(0.0);
        // detunings are stored as differences of ~1e11 rad/s frequencies
        if ratio < DISPERSIVE_WARNING_RATIO * (1.0 - 1e-9) {
            out.push(format!(
                "dispersive ratio {ratio:.3} is below {DISPERSIVE_WARNING_RATIO}; adiabatic elimination of the cavity is questionable"
            ));
        }
        out
    }
}

/// Drive strength `Ω = √(δ_L (N-1) λ_c / 2)` meeting the resonance condition.
pub fn resonant_rabi(n_atoms: usize, g_coupling: f64, delta_c: f64, delta_l: f64) -> f64 {
    let lambda_c = g_coupling * g_coupling / delta_c;
    (delta_l * (n_atoms as f64 - 1.0) * lambda_c / 2.0).max(0.0).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelTier {
    /// Closed-form resonant exchange map.
    #[serde(rename = "analytic")]
    AnalyticJC,
    /// Cavity eliminated, ensemble kept as a Dicke ladder.
    #[serde(rename = "spin")]
    EffectiveSpin,
    /// Control atom, Dicke ladder, cavity field and classical drive.
    #[serde(rename = "full")]
    FullDispersive,
}

impl ModelTier {
    pub fn name(&self) -> &'static str {
        match self {
            ModelTier::AnalyticJC => "analytic",
            ModelTier::EffectiveSpin => "spin",
            ModelTier::FullDispersive => "full",
        }
    }
}

impl std::str::FromStr for ModelTier {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "analytic" => Ok(ModelTier::AnalyticJC),
            "spin" => Ok(ModelTier::EffectiveSpin),
            "full" => Ok(ModelTier::FullDispersive),
            other => Err(Error::InvalidParams(format!(
                "unknown tier `{other}` (expected analytic, spin or full)"
            ))),
        }
    }
}

pub mod ops {
    //! Single-subsystem matrices.

    use super::*;

    fn real_diag(values: impl Iterator<Item = f64>) -> DMatrix<C64> {
        let v: Vec<C64> = values.map(|x| C64::new(x, 0.0)).collect();
        DMatrix::from_diagonal(&nalgebra::DVector::from_vec(v))
    }

    /// `|e⟩⟨g|` on the control atom; `|f⟩` is untouched.
    pub fn atom_raise() -> DMatrix<C64> {
        let mut m = DMatrix::from_element(3, 3, ZERO);
        m[(level::E, level::G)] = ONE;
        m
    }

    /// `(|e⟩⟨e| - |g⟩⟨g|) / 2`.
    pub fn atom_sz() -> DMatrix<C64> {
        real_diag([0.0, -0.5, 0.5].into_iter())
    }

    pub fn atom_projector(which: usize) -> DMatrix<C64> {
        let mut m = DMatrix::from_element(3, 3, ZERO);
        m[(which, which)] = ONE;
        m
    }

    /// Collective raising operator on the Dicke ladder of `n_atoms`:
    /// `S⁺|n⟩ = √((n+1)(N-n)) |n+1⟩`.
    pub fn dicke_raise(n_atoms: usize) -> DMatrix<C64> {
        let dim = n_atoms + 1;
        let mut m = DMatrix::from_element(dim, dim, ZERO);
        for n in 0..n_atoms {
            m[(n + 1, n)] = C64::new((((n + 1) * (n_atoms - n)) as f64).sqrt(), 0.0);
        }
        m
    }

    /// `S_z|n⟩ = (n - N/2)|n⟩`.
    pub fn dicke_sz(n_atoms: usize) -> DMatrix<C64> {
        real_diag((0..=n_atoms).map(|n| n as f64 - n_atoms as f64 / 2.0))
    }

    /// Excitation number on a ladder of dimension `dim`.
    pub fn number(dim: usize) -> DMatrix<C64> {
        real_diag((0..dim).map(|n| n as f64))
    }

    /// Truncated bosonic annihilation operator.
    pub fn boson_lower(dim: usize) -> DMatrix<C64> {
        let mut m = DMatrix::from_element(dim, dim, ZERO);
        for n in 1..dim {
            m[(n - 1, n)] = C64::new((n as f64).sqrt(), 0.0);
        }
        m
    }

    pub fn identity(dim: usize) -> DMatrix<C64> {
        DMatrix::identity(dim, dim)
    }
}

fn hermitian_part_check(subsystems: Vec<SubsystemSpec>, m: DMatrix<C64>) -> Result<HermitianOperator> {
    HermitianOperator::new(subsystems, m)
}

/// Full Hamiltonian on (control atom ⊗ Dicke ladder ⊗ cavity) in the frame
/// co-rotating at the drive frequency:
///
/// `H = (δ_L-δ_c) a†a + δ_L (S_z,c + S_z,ens) + Ω (S_c⁺ + S_c⁻)
///      + g (a† S_c⁻ + a S_c⁺) + g (a† S_ens⁻ + a S_ens⁺)`.
pub fn build_full_hamiltonian(params: &PhysicalParams, cavity_truncation: usize) -> Result<HermitianOperator> {
    params.validate()?;
    if cavity_truncation < 2 {
        return Err(Error::InvalidParams(format!(
            "cavity truncation must be >= 2, got {cavity_truncation}"
        )));
    }
    let n = params.n_atoms;
    let ladder = n + 1;
    let dc = cavity_truncation;
    let subsystems = vec![
        SubsystemSpec::control_atom(),
        SubsystemSpec::dicke_ladder(n)?,
        SubsystemSpec::cavity_mode(dc)?,
    ];
    let id_a = ops::identity(3);
    let id_n = ops::identity(ladder);
    let id_c = ops::identity(dc);
    let sp_c = ops::atom_raise();
    let sm_c = sp_c.adjoint();
    let sp_e = ops::dicke_raise(n);
    let sm_e = sp_e.adjoint();
    let a = ops::boson_lower(dc);
    let ad = a.adjoint();

    let c = |x: f64| C64::new(x, 0.0);
    let mut h = kron_subsystems(&[&id_a, &id_n, &ops::number(dc)]) * c(params.delta_l() - params.delta_c());
    h += kron_subsystems(&[&ops::atom_sz(), &id_n, &id_c]) * c(params.delta_l());
    h += kron_subsystems(&[&id_a, &ops::dicke_sz(n), &id_c]) * c(params.delta_l());
    h += kron_subsystems(&[&(&sp_c + &sm_c), &id_n, &id_c]) * c(params.rabi);
    h += (kron_subsystems(&[&sm_c, &id_n, &ad]) + kron_subsystems(&[&sp_c, &id_n, &a])) * c(params.g_coupling);
    h += (kron_subsystems(&[&id_a, &sm_e, &ad]) + kron_subsystems(&[&id_a, &sp_e, &a])) * c(params.g_coupling);
    hermitian_part_check(subsystems, h)
}

/// Effective Hamiltonian on (control atom ⊗ Dicke ladder) after eliminating
/// the cavity and the drive:
///
/// `H = λ_L (|e⟩⟨e| - |g⟩⟨g|) + λ_c (|e⟩⟨e| + n_b)
///      + λ_c [(S_c⁺ S_ens⁻ + S_c⁻ S_ens⁺) + (S_ens⁺ S_ens⁻ - n_b)]`,
///
/// where `S_ens⁺ S_ens⁻ - n_b` is the intra-sample exchange `Σ_{j≠k} S_k⁺ S_j⁻`
/// restricted to the symmetric subspace.
pub fn build_effective_spin_hamiltonian(params: &PhysicalParams) -> Result<HermitianOperator> {
    params.validate()?;
    let n = params.n_atoms;
    let ladder = n + 1;
    let subsystems = vec![SubsystemSpec::control_atom(), SubsystemSpec::dicke_ladder(n)?];
    let id_a = ops::identity(3);
    let id_n = ops::identity(ladder);
    let sp_c = ops::atom_raise();
    let sm_c = sp_c.adjoint();
    let sp_e = ops::dicke_raise(n);
    let sm_e = sp_e.adjoint();
    let pe = ops::atom_projector(level::E);
    let pg = ops::atom_projector(level::G);
    let nb = ops::number(ladder);

    let c = |x: f64| C64::new(x, 0.0);
    let lc = c(params.lambda_c());
    let mut h = kron_subsystems(&[&(&pe - &pg), &id_n]) * c(params.lambda_l());
    h += (kron_subsystems(&[&pe, &id_n]) + kron_subsystems(&[&id_a, &nb])) * lc;
    h += (kron_subsystems(&[&sp_c, &sm_e]) + kron_subsystems(&[&sm_c, &sp_e])) * lc;
    h += kron_subsystems(&[&id_a, &(&sp_e * &sm_e - &nb)]) * lc;
    hermitian_part_check(subsystems, h)
}

/// Jaynes-Cummings Hamiltonian on (control atom ⊗ truncated collective mode):
///
/// `H = (2λ_L + λ_c) S_z,c + N λ_c b†b + √N λ_c (S_c⁺ b + S_c⁻ b†)`.
pub fn build_jc_hamiltonian(params: &PhysicalParams, mode_truncation: usize) -> Result<HermitianOperator> {
    params.validate()?;
    let d = mode_truncation;
    let subsystems = vec![SubsystemSpec::control_atom(), SubsystemSpec::collective_mode(d)?];
    let id_a = ops::identity(3);
    let b = ops::boson_lower(d);
    let bd = b.adjoint();
    let sp_c = ops::atom_raise();
    let sm_c = sp_c.adjoint();
    let n = params.n_atoms as f64;
    let lc = params.lambda_c();

    let c = |x: f64| C64::new(x, 0.0);
    let mut h = kron_subsystems(&[&ops::atom_sz(), &ops::identity(d)]) * c(2.0 * params.lambda_l() + lc);
    h += kron_subsystems(&[&id_a, &(&bd * &b)]) * c(n * lc);
    h += (kron_subsystems(&[&sp_c, &b]) + kron_subsystems(&[&sm_c, &bd])) * c(n.sqrt() * lc);
    hermitian_part_check(subsystems, h)
}

/// Diagonal generator of the interaction frame for the full model,
/// restricted to (control atom ⊗ Dicke ladder) with the cavity in vacuum:
/// the free precession `δ_L (S_z,c + S_z,ens)` plus the diagonal of the
/// effective Hamiltonian.
pub fn full_model_frame(params: &PhysicalParams) -> Result<Vec<f64>> {
    let eff = build_effective_spin_hamiltonian(params)?;
    let subs = eff.subsystems().to_vec();
    let n = params.n_atoms as f64;
    Ok(eff
        .diagonal()
        .into_iter()
        .enumerate()
        .map(|(idx, d)| {
            let levels = hilbert::decompose_index(&subs, idx);
            let sz_c = match levels[0] {
                level::G => -0.5,
                level::E => 0.5,
                _ => 0.0,
            };
            let sz_e = levels[1] as f64 - n / 2.0;
            d + params.delta_l() * (sz_c + sz_e)
        })
        .collect())
}

/// Cached eigendecomposition `H = V diag(E) V†`.
#[derive(Debug, Clone)]
pub struct Propagator {
    subsystems: Vec<SubsystemSpec>,
    energies: Vec<f64>,
    vectors: DMatrix<C64>,
}

/// Hermiticity defect above which evolution is refused.
pub const EVOLVE_HERMITICITY_LIMIT: f64 = 1e-10;

impl Propagator {
    pub fn new(h: &HermitianOperator) -> Result<Self> {
        Self::from_matrix(h.subsystems().to_vec(), h.matrix())
    }

    pub fn from_matrix(subsystems: Vec<SubsystemSpec>, h: &DMatrix<C64>) -> Result<Self> {
        let dim = hilbert::total_dim(&subsystems);
        if h.nrows() != dim || h.ncols() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: h.nrows(),
            });
        }
        let scale = h.iter().fold(1.0f64, |acc, z| acc.max(z.norm()));
        let defect = hermiticity_defect(h);
        if defect > EVOLVE_HERMITICITY_LIMIT * scale {
            return Err(Error::NotHermitian(defect));
        }
        let eig = SymmetricEigen::new(h.clone());
        Ok(Self {
            subsystems,
            energies: eig.eigenvalues.iter().copied().collect(),
            vectors: eig.eigenvectors,
        })
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn subsystems(&self) -> &[SubsystemSpec] {
        &self.subsystems
    }

    /// `exp(-i H t)`.
    pub fn unitary(&self, t: f64) -> DMatrix<C64> {
        let mut scaled = self.vectors.clone();
        for (k, &e) in self.energies.iter().enumerate() {
            let phase = C64::from_polar(1.0, -e * t);
            scaled.column_mut(k).iter_mut().for_each(|z| *z *= phase);
        }
        scaled * self.vectors.adjoint()
    }

    /// `exp(i D t) exp(-i H t)` for a diagonal frame generator `D`.
    pub fn interaction_unitary(&self, t: f64, frame: &[f64]) -> Result<DMatrix<C64>> {
        if frame.len() != self.energies.len() {
            return Err(Error::DimensionMismatch {
                expected: self.energies.len(),
                got: frame.len(),
            });
        }
        let mut u = self.unitary(t);
        for (r, &d) in frame.iter().enumerate() {
            let phase = C64::from_polar(1.0, d * t);
            u.row_mut(r).iter_mut().for_each(|z| *z *= phase);
        }
        Ok(u)
    }

    pub fn evolve(&self, state: &StateVector, t: f64) -> Result<StateVector> {
        if state.subsystems().len() != self.subsystems.len()
            || state
                .subsystems()
                .iter()
                .zip(&self.subsystems)
                .any(|(a, b)| a.dim != b.dim)
        {
            return Err(Error::DimensionMismatch {
                expected: hilbert::total_dim(&self.subsystems),
                got: state.dim(),
            });
        }
        // Evolve in the eigenbasis instead of forming the full unitary.
        let coeffs = self.vectors.adjoint() * state.amplitudes();
        let phased = nalgebra::DVector::from_iterator(
            coeffs.len(),
            coeffs
                .iter()
                .zip(&self.energies)
                .map(|(c, &e)| c * C64::from_polar(1.0, -e * t)),
        );
        StateVector::new(state.subsystems().to_vec(), &self.vectors * phased)
    }
}

/// `ψ(t) = exp(-i H t) ψ`.
pub fn evolve(state: &StateVector, h: &HermitianOperator, t: f64) -> Result<StateVector> {
    Propagator::new(h)?.evolve(state, t)
}

/// Closed-form resonant exchange on (control atom ⊗ mode of dimension `d`),
/// as a local matrix with the atom index fastest:
///
/// `|e,n⟩ → cos θ_n |e,n⟩ - i sin θ_n |g,n+1⟩`,
/// `|g,n+1⟩ → cos θ_n |g,n+1⟩ - i sin θ_n |e,n⟩`,
/// `θ_n = √((n+1)N) λ_c t`; `|f,n⟩` and `|g,0⟩` are invariant. `|e,d-1⟩` has
/// no partner in the truncated space and is left unchanged; callers must
/// keep it unpopulated.
pub fn jc_analytic_unitary(params: &PhysicalParams, mode_truncation: usize, t: f64) -> DMatrix<C64> {
    let d = mode_truncation;
    let idx = |a: usize, n: usize| a + 3 * n;
    let mut u = DMatrix::identity(3 * d, 3 * d);
    let n_atoms = params.n_atoms as f64;
    for n in 0..d - 1 {
        let theta = (((n + 1) as f64) * n_atoms).sqrt() * params.lambda_c() * t;
        let (s, c) = theta.sin_cos();
        let e = idx(level::E, n);
        let g = idx(level::G, n + 1);
        u[(e, e)] = C64::new(c, 0.0);
        u[(g, g)] = C64::new(c, 0.0);
        u[(g, e)] = -I * s;
        u[(e, g)] = -I * s;
    }
    u
}

/// Population of `|e⟩|d-1⟩` on the given atom/mode pair.
pub fn edge_population(state: &StateVector, atom: usize, mode: usize) -> Result<f64> {
    let subs = state.subsystems();
    let d = subs.get(mode).ok_or(Error::IndexOutOfRange { index: mode, count: subs.len() })?.dim;
    let layout = hilbert::local_layout(subs, &[atom, mode])?;
    let edge = layout.offsets[level::E + 3 * (d - 1)];
    let amps = state.amplitudes();
    let pop: f64 = layout.bases.iter().map(|&b| amps[b + edge].norm_sqr()).sum();
    Ok(pop / state.norm().powi(2))
}

/// Applies the closed-form exchange map to the (atom, mode) pair of a
/// composite state.
pub fn jc_analytic_map_on(
    state: &StateVector,
    atom: usize,
    mode: usize,
    t: f64,
    params: &PhysicalParams,
) -> Result<StateVector> {
    if !params.resonant {
        return Err(Error::InvalidParams(
            "closed-form exchange requires the resonance condition".into(),
        ));
    }
    params.validate()?;
    let subs = state.subsystems();
    let count = subs.len();
    let atom_spec = subs.get(atom).ok_or(Error::IndexOutOfRange { index: atom, count })?;
    let mode_spec = subs.get(mode).ok_or(Error::IndexOutOfRange { index: mode, count })?;
    if atom_spec.role != Role::ControlAtom {
        return Err(Error::InvalidSubsystem(format!("subsystem {atom} is not the control atom")));
    }
    if !mode_spec.is_ladder() {
        return Err(Error::InvalidSubsystem(format!("subsystem {mode} is not a mode")));
    }
    let edge = edge_population(state, atom, mode)?;
    if edge > TOLERANCE {
        return Err(Error::TruncationEdge(edge));
    }
    let u = jc_analytic_unitary(params, mode_spec.dim, t);
    hilbert::apply_local(state, &[atom, mode], &u)
}

/// Closed-form exchange on a two-subsystem (control atom ⊗ mode) state.
pub fn jc_analytic_map(state: &StateVector, t: f64, params: &PhysicalParams) -> Result<StateVector> {
    if state.subsystems().len() != 2 {
        return Err(Error::InvalidSubsystem(
            "expected a (control atom, mode) state".into(),
        ));
    }
    jc_analytic_map_on(state, 0, 1, t, params)
}
