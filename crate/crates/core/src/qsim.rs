//! Statevector simulation of data-embedding circuits and fidelity kernels.
//!
//! Basis index bit `q` holds qubit `q` (little-endian). A circuit applies the
//! init gate to every qubit of `|0…0⟩`, then repeats `depth` times an
//! embedding layer followed by an entangling layer. Qubit `q` embeds feature
//! `q mod d` at angle `scaling · x[q mod d]`.

use std::f64::consts::FRAC_1_SQRT_2;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::KernelMatrix;

/// Cap on the qubit count chosen by [`CircuitSpec::for_dimension`].
pub const DEFAULT_MAX_QUBITS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum InitGate {
    None,
    H,
    S,
    T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Embedding {
    RY,
    RXRZ,
}

/// Two-qubit entangling gate. `None` builds a product-state circuit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EntanglerGate {
    None,
    CX,
    CZ,
    SqrtISwap,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Topology {
    Ladder,
    Circ,
    AllToAll,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CircuitSpec {
    pub n_qubits: usize,
    pub init: InitGate,
    pub embedding: Embedding,
    pub entangler_gate: EntanglerGate,
    pub entangler_topology: Topology,
    pub depth: usize,
    pub scaling: f64,
}

impl Default for CircuitSpec {
    /// H init, RY embedding, CX ladder, five re-uploads, unit scaling.
    fn default() -> Self {
        Self {
            n_qubits: 1,
            init: InitGate::H,
            embedding: Embedding::RY,
            entangler_gate: EntanglerGate::CX,
            entangler_topology: Topology::Ladder,
            depth: 5,
            scaling: 1.0,
        }
    }
}

impl CircuitSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_qubits == 0 {
            return Err(Error::Input("n_qubits must be at least 1".into()));
        }
        if self.n_qubits > 24 {
            return Err(Error::Input(format!("n_qubits {} is too large", self.n_qubits)));
        }
        if self.depth == 0 {
            return Err(Error::Input("depth must be at least 1".into()));
        }
        if !(self.scaling.is_finite() && self.scaling > 0.0) {
            return Err(Error::Input(format!("scaling must be positive, got {}", self.scaling)));
        }
        Ok(())
    }

    /// This template with the qubit count set to `min(dim, max_qubits)`.
    pub fn for_dimension(&self, dim: usize, max_qubits: usize) -> Self {
        Self {
            n_qubits: dim.clamp(1, max_qubits.max(1)),
            ..*self
        }
    }

    pub fn with_scaling(&self, scaling: f64) -> Self {
        Self { scaling, ..*self }
    }

    /// Ordered qubit pairs the entangler acts on, in application order.
    pub fn entangler_pairs(&self) -> Vec<(usize, usize)> {
        let n = self.n_qubits;
        if self.entangler_gate == EntanglerGate::None || n < 2 {
            return Vec::new();
        }
        match self.entangler_topology {
            Topology::Ladder => (0..n - 1).map(|q| (q, q + 1)).collect(),
            Topology::Circ => {
                let mut pairs: Vec<_> = (0..n - 1).map(|q| (q, q + 1)).collect();
                if n > 2 {
                    pairs.push((n - 1, 0));
                }
                pairs
            }
            Topology::AllToAll => (0..n)
                .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
                .collect(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }
}

type Gate1 = [[Complex64; 2]; 2];

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn hadamard() -> Gate1 {
    let h = FRAC_1_SQRT_2;
    [[c(h, 0.0), c(h, 0.0)], [c(h, 0.0), c(-h, 0.0)]]
}

fn phase(angle: f64) -> Gate1 {
    [[c(1.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), Complex64::from_polar(1.0, angle)]]
}

/// `exp(−iθσ_y/2)`
pub fn ry(theta: f64) -> Gate1 {
    let (s, co) = (theta / 2.0).sin_cos();
    [[c(co, 0.0), c(-s, 0.0)], [c(s, 0.0), c(co, 0.0)]]
}

/// `exp(−iθσ_x/2)`
pub fn rx(theta: f64) -> Gate1 {
    let (s, co) = (theta / 2.0).sin_cos();
    [[c(co, 0.0), c(0.0, -s)], [c(0.0, -s), c(co, 0.0)]]
}

/// `exp(−iθσ_z/2)`
pub fn rz(theta: f64) -> Gate1 {
    [
        [Complex64::from_polar(1.0, -theta / 2.0), c(0.0, 0.0)],
        [c(0.0, 0.0), Complex64::from_polar(1.0, theta / 2.0)],
    ]
}

/// A normalized pure state on `n_qubits` qubits.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    n_qubits: usize,
    amplitudes: Vec<Complex64>,
}

impl StateVector {
    /// `|0…0⟩`
    pub fn zero(n_qubits: usize) -> Self {
        let mut amplitudes = vec![c(0.0, 0.0); 1 << n_qubits];
        amplitudes[0] = c(1.0, 0.0);
        Self { n_qubits, amplitudes }
    }

    pub fn from_amplitudes(amplitudes: Vec<Complex64>) -> Result<Self> {
        let len = amplitudes.len();
        if len == 0 || !len.is_power_of_two() {
            return Err(Error::Size(format!("amplitude count {len} is not a power of two")));
        }
        let state = Self {
            n_qubits: len.trailing_zeros() as usize,
            amplitudes,
        };
        if (state.norm() - 1.0).abs() > 1e-10 {
            return Err(Error::Input(format!("state norm {} is not 1", state.norm())));
        }
        Ok(state)
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `⟨self|other⟩`
    pub fn inner(&self, other: &StateVector) -> Complex64 {
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    pub fn fidelity(&self, other: &StateVector) -> f64 {
        self.inner(other).norm_sqr()
    }

    pub fn apply_1q(&mut self, gate: &Gate1, qubit: usize) {
        let mask = 1usize << qubit;
        for i in 0..self.amplitudes.len() {
            if i & mask == 0 {
                let (a0, a1) = (self.amplitudes[i], self.amplitudes[i | mask]);
                self.amplitudes[i] = gate[0][0] * a0 + gate[0][1] * a1;
                self.amplitudes[i | mask] = gate[1][0] * a0 + gate[1][1] * a1;
            }
        }
    }

    pub fn apply_cx(&mut self, control: usize, target: usize) {
        let (cm, tm) = (1usize << control, 1usize << target);
        for i in 0..self.amplitudes.len() {
            if i & cm != 0 && i & tm == 0 {
                self.amplitudes.swap(i, i | tm);
            }
        }
    }

    pub fn apply_cz(&mut self, a: usize, b: usize) {
        let mask = (1usize << a) | (1usize << b);
        for (i, amp) in self.amplitudes.iter_mut().enumerate() {
            if i & mask == mask {
                *amp = -*amp;
            }
        }
    }

    /// `√iSWAP`: mixes `|01⟩` and `|10⟩` with amplitudes `1/√2` and `i/√2`.
    pub fn apply_sqrt_iswap(&mut self, a: usize, b: usize) {
        let (am, bm) = (1usize << a, 1usize << b);
        let h = FRAC_1_SQRT_2;
        for i in 0..self.amplitudes.len() {
            if i & am != 0 && i & bm == 0 {
                let j = (i & !am) | bm;
                let (u, v) = (self.amplitudes[i], self.amplitudes[j]);
                self.amplitudes[i] = c(h, 0.0) * u + c(0.0, h) * v;
                self.amplitudes[j] = c(0.0, h) * u + c(h, 0.0) * v;
            }
        }
    }

    fn apply_entangler(&mut self, gate: EntanglerGate, a: usize, b: usize) {
        match gate {
            EntanglerGate::None => {}
            EntanglerGate::CX => self.apply_cx(a, b),
            EntanglerGate::CZ => self.apply_cz(a, b),
            EntanglerGate::SqrtISwap => self.apply_sqrt_iswap(a, b),
        }
    }
}

/// Runs the embedding circuit of `spec` on input `x`.
pub fn prepare_state(spec: &CircuitSpec, x: &[f64]) -> Result<StateVector> {
    spec.validate()?;
    if x.is_empty() {
        return Err(Error::Size("input vector is empty".into()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input("input vector has non-finite values".into()));
    }
    let n = spec.n_qubits;
    let mut state = StateVector::zero(n);
    let init = match spec.init {
        InitGate::None => None,
        InitGate::H => Some(hadamard()),
        InitGate::S => Some(phase(std::f64::consts::FRAC_PI_2)),
        InitGate::T => Some(phase(std::f64::consts::FRAC_PI_4)),
    };
    if let Some(g) = init {
        for q in 0..n {
            state.apply_1q(&g, q);
        }
    }
    let angles: Vec<f64> = (0..n).map(|q| spec.scaling * x[q % x.len()]).collect();
    let pairs = spec.entangler_pairs();
    for _ in 0..spec.depth {
        for (q, &angle) in angles.iter().enumerate() {
            match spec.embedding {
                Embedding::RY => state.apply_1q(&ry(angle), q),
                Embedding::RXRZ => {
                    state.apply_1q(&rx(angle), q);
                    state.apply_1q(&rz(angle), q);
                }
            }
        }
        for &(a, b) in &pairs {
            state.apply_entangler(spec.entangler_gate, a, b);
        }
    }
    Ok(state)
}

/// Fidelity kernel `|⟨ψ(x_i)|ψ(x_j)⟩|²` over the rows of `data`.
pub fn fidelity_kernel_matrix(data: &DMatrix<f64>, spec: &CircuitSpec) -> Result<KernelMatrix> {
    let n = data.nrows();
    if n < 2 {
        return Err(Error::Size(format!("need at least 2 samples, got {n}")));
    }
    let states: Vec<StateVector> = (0..n)
        .into_par_iter()
        .map(|i| {
            let row: Vec<f64> = data.row(i).iter().copied().collect();
            prepare_state(spec, &row)
        })
        .collect::<Result<_>>()?;
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..n)
                .map(|j| match i.cmp(&j) {
                    std::cmp::Ordering::Equal => 1.0,
                    _ => states[i].fidelity(&states[j]).min(1.0),
                })
                .collect()
        })
        .collect();
    Ok(KernelMatrix::from_symmetric(
        DMatrix::from_fn(n, n, |i, j| rows[i][j]),
        false,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Z,
}

/// `Tr[O ρ]` with `O = (σ_axis + 1)/2` on `qubit`; lies in `[0, 1]`.
pub fn measure_observable(state: &StateVector, qubit: usize, axis: Axis) -> Result<f64> {
    if qubit >= state.n_qubits {
        return Err(Error::Index {
            index: qubit,
            len: state.n_qubits,
        });
    }
    let mask = 1usize << qubit;
    let amps = &state.amplitudes;
    let expectation: f64 = match axis {
        Axis::Z => amps
            .iter()
            .enumerate()
            .map(|(i, a)| if i & mask == 0 { a.norm_sqr() } else { -a.norm_sqr() })
            .sum(),
        Axis::X => (0..amps.len())
            .filter(|i| i & mask == 0)
            .map(|i| 2.0 * (amps[i].conj() * amps[i | mask]).re)
            .sum(),
    };
    Ok(((expectation + 1.0) / 2.0).clamp(0.0, 1.0))
}
