//! Test-side oracles built without the library's protocol code.
#![allow(dead_code)]

use cqed_cluster::hilbert::{self, level, StateVector, SubsystemSpec, C64};

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// Amplitudes over `k` modes of dimension `d`, mode 0 fastest.
#[derive(Clone, Debug)]
pub struct Modes {
    pub k: usize,
    pub d: usize,
    pub amps: Vec<C64>,
}

impl Modes {
    pub fn vacuum(k: usize, d: usize) -> Self {
        let mut amps = vec![ZERO; d.pow(k as u32)];
        amps[0] = ONE;
        Self { k, d, amps }
    }

    fn level(&self, idx: usize, m: usize) -> usize {
        (idx / self.d.pow(m as u32)) % self.d
    }

    /// `σ_m = |0⟩⟨0| - |1⟩⟨1|` on 1-based mode `m`; `σ_0` is the identity.
    pub fn sigma(&self, m: usize) -> Self {
        if m == 0 {
            return self.clone();
        }
        let mut out = self.clone();
        for (idx, a) in out.amps.iter_mut().enumerate() {
            match self.level(idx, m - 1) {
                0 => {}
                1 => *a = -*a,
                _ => *a = ZERO,
            }
        }
        out
    }

    /// `|1⟩_m ⟨0|_m` on 1-based mode `m`.
    pub fn raise(&self, m: usize) -> Self {
        let stride = self.d.pow((m - 1) as u32);
        let mut out = vec![ZERO; self.amps.len()];
        for (idx, a) in self.amps.iter().enumerate() {
            if self.level(idx, m - 1) == 0 {
                out[idx + stride] = *a;
            }
        }
        Self { k: self.k, d: self.d, amps: out }
    }

    pub fn add(&self, other: &Self) -> Self {
        let amps = self.amps.iter().zip(&other.amps).map(|(a, b)| a + b).collect();
        Self { k: self.k, d: self.d, amps }
    }

    pub fn scale(&self, s: C64) -> Self {
        Self { k: self.k, d: self.d, amps: self.amps.iter().map(|a| a * s).collect() }
    }

    /// Nested product `(|0⟩_j + |1⟩_j σ_{j-1}) .. (|0⟩_2 + |1⟩_2 σ_1)(|0⟩_1 + |1⟩_1)`
    /// applied factor by factor to the vacuum.
    pub fn nested_product(k: usize, d: usize, j: usize) -> Self {
        let mut psi = Self::vacuum(k, d);
        for m in 1..=j {
            psi = psi.add(&psi.sigma(m - 1).raise(m));
        }
        psi
    }

    pub fn to_state(&self) -> StateVector {
        let spec = SubsystemSpec::collective_mode(self.d).unwrap();
        StateVector::normalized_from(vec![spec; self.k], self.amps.clone()).unwrap()
    }
}

/// `Σ_a |a⟩ ⊗ modes_a` on `[atom, modes]`, normalized.
pub fn with_atom(parts: &[(usize, Modes)]) -> StateVector {
    let k = parts[0].1.k;
    let d = parts[0].1.d;
    let spec = SubsystemSpec::collective_mode(d).unwrap();
    let mut subs = vec![SubsystemSpec::control_atom()];
    subs.extend(std::iter::repeat_n(spec, k));
    let mut amps = vec![ZERO; 3 * d.pow(k as u32)];
    for (atom, modes) in parts {
        for (idx, a) in modes.amps.iter().enumerate() {
            amps[atom + 3 * idx] += a;
        }
    }
    StateVector::normalized_from(subs, amps).unwrap()
}

/// State after cavity `j < K`: `(|f⟩|0⟩_j - i|g⟩|1⟩_j σ_{j-1}) P_{j-1}`.
pub fn after_cavity(k: usize, d: usize, j: usize) -> StateVector {
    let p = Modes::nested_product(k, d, j - 1);
    with_atom(&[(level::F, p.clone()), (level::G, p.sigma(j - 1).raise(j).scale(-I))])
}

/// State after zone `R_j`: `(|f⟩ + |e⟩σ_j) P_j`.
pub fn after_zone(k: usize, d: usize, j: usize) -> StateVector {
    let p = Modes::nested_product(k, d, j);
    with_atom(&[(level::F, p.clone()), (level::E, p.sigma(j))])
}

/// State after the extra zone: `(-i|g⟩ + |e⟩σ_{K-1}) P_{K-1}`.
pub fn after_extra_zone(k: usize, d: usize) -> StateVector {
    let p = Modes::nested_product(k, d, k - 1);
    with_atom(&[(level::G, p.scale(-I)), (level::E, p.sigma(k - 1))])
}

/// Final chain state `|g⟩ P_K`.
pub fn chain_final(k: usize, d: usize) -> StateVector {
    with_atom(&[(level::G, Modes::nested_product(k, d, k))])
}

/// Graph state from explicit `|+⟩` preparation and controlled-Z matrices,
/// restricted to qubits (`d = 2` per node) then embedded in modes of `d`.
pub fn brute_graph_state(nodes: usize, edges: &[(usize, usize)], d: usize) -> StateVector {
    let dim = 1usize << nodes;
    let mut psi = vec![C64::new((dim as f64).sqrt().recip(), 0.0); dim];
    for &(a, b) in edges {
        // diagonal CZ: -1 on |1⟩_a|1⟩_b
        for (x, amp) in psi.iter_mut().enumerate() {
            if (x >> a) & 1 == 1 && (x >> b) & 1 == 1 {
                *amp = -*amp;
            }
        }
    }
    embed_qubits(nodes, &psi, d)
}

pub fn embed_qubits(nodes: usize, qubit_amps: &[C64], d: usize) -> StateVector {
    let spec = SubsystemSpec::collective_mode(d).unwrap();
    let subs = vec![spec; nodes];
    let mut amps = vec![ZERO; d.pow(nodes as u32)];
    for (x, a) in qubit_amps.iter().enumerate() {
        let levels: Vec<usize> = (0..nodes).map(|i| (x >> i) & 1).collect();
        amps[hilbert::compose_index(&subs, &levels).unwrap()] = *a;
    }
    StateVector::normalized_from(subs, amps).unwrap()
}

/// Unnormalized `⟨level|_node Φ⟩`.
fn project(state: &StateVector, node: usize, lvl: usize) -> StateVector {
    let subs = state.subsystems();
    let mut rest = subs.to_vec();
    rest.remove(node);
    let mut amps = vec![ZERO; hilbert::total_dim(&rest)];
    for (x, a) in state.amplitudes().iter().enumerate() {
        let mut levels = hilbert::decompose_index(subs, x);
        if levels[node] == lvl {
            levels.remove(node);
            amps[hilbert::compose_index(&rest, &levels).unwrap()] += a;
        }
    }
    StateVector::from_vec(rest, amps).unwrap()
}

/// Target of a successful fusion written directly from the input
/// decompositions `|Φ_i⟩ = |0⟩_i|Ψ_i1⟩ + |1⟩_i|Ψ_i2⟩`:
/// `|0⟩_b |Ψ_a1⟩|Ψ_b1⟩ + |1⟩_b |Ψ_a2⟩|Ψ_b2⟩`, with `|Ψ_bj⟩` keeping
/// `node_b` in its place. Order: chain a without `node_a`, then chain b.
pub fn fusion_target(a: &StateVector, b: &StateVector, node_a: usize, node_b: usize) -> StateVector {
    let mut total: Option<Vec<C64>> = None;
    let mut subs_out = Vec::new();
    for lvl in 0..2 {
        let psi_a = project(a, node_a, lvl);
        let psi_b = project(b, node_b, lvl);
        // re-insert |lvl⟩ on node_b
        let bsubs = b.subsystems().to_vec();
        let mut bamps = vec![ZERO; hilbert::total_dim(&bsubs)];
        for (x, amp) in psi_b.amplitudes().iter().enumerate() {
            let mut levels = hilbert::decompose_index(psi_b.subsystems(), x);
            levels.insert(node_b, lvl);
            bamps[hilbert::compose_index(&bsubs, &levels).unwrap()] = *amp;
        }
        let mut subs = psi_a.subsystems().to_vec();
        subs.extend_from_slice(&bsubs);
        let mut amps = vec![ZERO; hilbert::total_dim(&subs)];
        let da = psi_a.dim();
        for (i, x) in psi_a.amplitudes().iter().enumerate() {
            for (j, y) in bamps.iter().enumerate() {
                amps[i + da * j] = x * y;
            }
        }
        total = Some(match total {
            None => amps,
            Some(t) => t.iter().zip(&amps).map(|(p, q)| p + q).collect(),
        });
        subs_out = subs;
    }
    StateVector::normalized_from(subs_out, total.unwrap()).unwrap()
}

/// `|f⟩`, `|g⟩`, `|e⟩` amplitudes of a single-atom vector (for readability).
pub fn atom_vec(f: C64, g: C64, e: C64) -> Vec<C64> {
    let mut v = vec![ZERO; 3];
    v[level::F] = f;
    v[level::G] = g;
    v[level::E] = e;
    v
}

/// Collective raising operator and `S_z` restricted to the symmetric
/// subspace, built from `2^N` single-atom Pauli operators.
pub fn brute_force_dicke(n_atoms: usize) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let dim = 1usize << n_atoms;
    let binom = |n: usize, k: usize| -> f64 { (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64) };
    let symmetric = |k: usize| -> Vec<f64> {
        let norm = binom(n_atoms, k).sqrt().recip();
        (0..dim).map(|x| if (x as u32).count_ones() as usize == k { norm } else { 0.0 }).collect()
    };
    // S+ = Σ_j σ+_j, S_z = Σ_j σ_z/2 with bit 1 = excited
    let apply_raise = |v: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; dim];
        for (x, a) in v.iter().enumerate() {
            for j in 0..n_atoms {
                if (x >> j) & 1 == 0 {
                    out[x | (1 << j)] += a;
                }
            }
        }
        out
    };
    let apply_sz = |v: &[f64]| -> Vec<f64> {
        v.iter()
            .enumerate()
            .map(|(x, a)| a * ((x as u32).count_ones() as f64 - n_atoms as f64 / 2.0))
            .collect()
    };
    let basis: Vec<Vec<f64>> = (0..=n_atoms).map(symmetric).collect();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let mut raise = vec![vec![0.0; n_atoms + 1]; n_atoms + 1];
    let mut sz = vec![vec![0.0; n_atoms + 1]; n_atoms + 1];
    for (c, ket) in basis.iter().enumerate() {
        let r = apply_raise(ket);
        let z = apply_sz(ket);
        for (row, bra) in basis.iter().enumerate() {
            raise[row][c] = dot(bra, &r);
            sz[row][c] = dot(bra, &z);
        }
    }
    (raise, sz)
}

pub fn random_state(subs: Vec<SubsystemSpec>, rng: &mut impl rand::Rng) -> StateVector {
    let n = hilbert::total_dim(&subs);
    let amps = (0..n)
        .map(|_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
        .collect();
    StateVector::normalized_from(subs, amps).unwrap()
}
