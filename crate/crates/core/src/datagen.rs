//! Synthetic three-variable junction data and standardization.
//!
//! Columns are always `X, Y, Z`, with `Z` the middle node of the junction.
//! Two independent standard-normal sources `u, v` drive the recipes:
//!
//! | kind        | relations                                   | DAG           |
//! |-------------|---------------------------------------------|---------------|
//! | collider    | `X = u`, `Y = v²`, `Z = (X + Y)/2`          | `X → Z ← Y`   |
//! | chain       | `X = (u + v)/2`, `Z = 0.5 X`, `Y = Z²`      | `X → Z → Y`   |
//! | fork        | `Z = (u + v)/2`, `X = 0.5 Z`, `Y = Z²`      | `X ← Z → Y`   |
//! | independent | `X, Y, Z` i.i.d. standard normal            | no edges      |
//!
//! Every variable with a parent gets additive Gaussian noise whose standard
//! deviation is `noise_ratio` times the sample standard deviation of its
//! noiseless value.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pc::MixedGraph;
use crate::qsim::{
    measure_observable, prepare_state, Axis, CircuitSpec, Embedding, EntanglerGate, InitGate,
    Topology,
};
use crate::Dataset;

pub const DEFAULT_NOISE_RATIO: f64 = 0.05;

const X: usize = 0;
const Y: usize = 1;
const Z: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JunctionKind {
    Collider,
    Fork,
    Chain,
    Independent,
}

impl JunctionKind {
    pub const ALL: [JunctionKind; 4] = [
        JunctionKind::Collider,
        JunctionKind::Fork,
        JunctionKind::Chain,
        JunctionKind::Independent,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            JunctionKind::Collider => "collider",
            JunctionKind::Fork => "fork",
            JunctionKind::Chain => "chain",
            JunctionKind::Independent => "independent",
        }
    }

    fn edges(self) -> &'static [(usize, usize)] {
        match self {
            JunctionKind::Collider => &[(X, Z), (Y, Z)],
            JunctionKind::Chain => &[(X, Z), (Z, Y)],
            JunctionKind::Fork => &[(Z, X), (Z, Y)],
            JunctionKind::Independent => &[],
        }
    }
}

impl fmt::Display for JunctionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for JunctionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        JunctionKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| {
                Error::Input(format!(
                    "unknown junction kind '{s}' (expected collider, fork, chain or independent)"
                ))
            })
    }
}

/// The DAG a generator sampled from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundTruth {
    pub kind: JunctionKind,
    pub nodes: Vec<String>,
    pub edges: Vec<[String; 2]>,
}

impl GroundTruth {
    pub fn for_kind(kind: JunctionKind) -> Self {
        let nodes = node_names();
        let edges = kind
            .edges()
            .iter()
            .map(|&(a, b)| [nodes[a].clone(), nodes[b].clone()])
            .collect();
        Self { kind, nodes, edges }
    }

    pub fn dag(&self) -> Result<MixedGraph> {
        let idx = |name: &str| {
            self.nodes
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| Error::Graph(format!("unknown node '{name}'")))
        };
        let edges = self
            .edges
            .iter()
            .map(|[a, b]| Ok((idx(a)?, idx(b)?)))
            .collect::<Result<Vec<_>>>()?;
        MixedGraph::from_dag(self.nodes.clone(), &edges)
    }
}

fn node_names() -> Vec<String> {
    vec!["X".into(), "Y".into(), "Z".into()]
}

fn sample_std(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

fn add_noise(signal: Vec<f64>, ratio: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let sd = ratio * sample_std(&signal);
    signal
        .into_iter()
        .map(|s| {
            let e: f64 = rng.sample(StandardNormal);
            s + sd * e
        })
        .collect()
}

/// Evaluates the recipe of `kind` on the sources and returns `[X, Y, Z]`.
/// `third` is only used by the independent kind.
fn compose(
    kind: JunctionKind,
    u: Vec<f64>,
    v: Vec<f64>,
    third: Vec<f64>,
    ratio: f64,
    rng: &mut ChaCha8Rng,
) -> [Vec<f64>; 3] {
    let mix: Vec<f64> = u.iter().zip(&v).map(|(a, b)| (a + b) / 2.0).collect();
    let half = |w: &[f64]| w.iter().map(|t| 0.5 * t).collect::<Vec<_>>();
    let square = |w: &[f64]| w.iter().map(|t| t * t).collect::<Vec<_>>();
    match kind {
        JunctionKind::Collider => {
            let x = u;
            let y = square(&v);
            let z = add_noise(x.iter().zip(&y).map(|(a, b)| (a + b) / 2.0).collect(), ratio, rng);
            [x, y, z]
        }
        JunctionKind::Chain => {
            let x = mix;
            let z = add_noise(half(&x), ratio, rng);
            let y = add_noise(square(&z), ratio, rng);
            [x, y, z]
        }
        JunctionKind::Fork => {
            let z = mix;
            let x = add_noise(half(&z), ratio, rng);
            let y = add_noise(square(&z), ratio, rng);
            [x, y, z]
        }
        JunctionKind::Independent => [u, v, third],
    }
}

fn check_args(n: usize, noise_ratio: f64) -> Result<()> {
    if n < 10 {
        return Err(Error::Size(format!("need at least 10 samples, got {n}")));
    }
    if !(noise_ratio >= 0.0 && noise_ratio.is_finite()) {
        return Err(Error::Input(format!("noise ratio must be ≥ 0, got {noise_ratio}")));
    }
    Ok(())
}

fn normals(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// Junction data from standard-normal sources.
pub fn gen_junction(
    kind: JunctionKind,
    n: usize,
    noise_ratio: f64,
    seed: u64,
) -> Result<(Dataset, GroundTruth)> {
    check_args(n, noise_ratio)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = normals(n, &mut rng);
    let v = normals(n, &mut rng);
    let w = if kind == JunctionKind::Independent {
        normals(n, &mut rng)
    } else {
        Vec::new()
    };
    let cols = compose(kind, u, v, w, noise_ratio, &mut rng);
    let data = Dataset::from_columns(node_names(), cols.into())?;
    Ok((data, GroundTruth::for_kind(kind)))
}

/// The two-qubit source circuit: H on both qubits, one RY layer, CX(0→1).
pub fn default_generator_spec() -> CircuitSpec {
    CircuitSpec {
        n_qubits: 2,
        init: InitGate::H,
        embedding: Embedding::RY,
        entangler_gate: EntanglerGate::CX,
        entangler_topology: Topology::Ladder,
        depth: 1,
        scaling: 1.0,
    }
}

/// Maps a standard-normal draw clipped to `[−3, 3]` affinely onto `[0, π]`.
pub fn gaussian_to_angle(g: f64) -> f64 {
    (g.clamp(-3.0, 3.0) + 3.0) / 6.0 * std::f64::consts::PI
}

/// One quantum source column: each row prepares the circuit on fresh
/// Gaussian inputs and records `⟨(σ_axis + 1)/2⟩` on `qubit`.
fn quantum_source(
    spec: &CircuitSpec,
    n: usize,
    qubit: usize,
    axis: Axis,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>> {
    (0..n)
        .map(|_| {
            let input: Vec<f64> = (0..spec.n_qubits)
                .map(|_| gaussian_to_angle(rng.sample(StandardNormal)))
                .collect();
            measure_observable(&prepare_state(spec, &input)?, qubit, axis)
        })
        .collect()
}

/// Junction data whose sources are circuit measurements in `[0, 1]`: the
/// first source measures `O_x` on qubit 0, the second `O_z` on qubit 1 (or
/// qubit 0 for a single-qubit circuit).
pub fn gen_quantum_junction(
    kind: JunctionKind,
    n: usize,
    noise_ratio: f64,
    spec: &CircuitSpec,
    seed: u64,
) -> Result<(Dataset, GroundTruth)> {
    check_args(n, noise_ratio)?;
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let zq = 1.min(spec.n_qubits - 1);
    let u = quantum_source(spec, n, 0, Axis::X, &mut rng)?;
    let v = quantum_source(spec, n, zq, Axis::Z, &mut rng)?;
    let w = if kind == JunctionKind::Independent {
        quantum_source(spec, n, 0, Axis::X, &mut rng)?
    } else {
        Vec::new()
    };
    let cols = compose(kind, u, v, w, noise_ratio, &mut rng);
    let data = Dataset::from_columns(node_names(), cols.into())?;
    Ok((data, GroundTruth::for_kind(kind)))
}

/// Centers each column and scales it to unit sample standard deviation
/// (denominator `n − 1`).
pub fn standardize(data: &Dataset) -> Result<Dataset> {
    let n = data.n_samples();
    if n < 2 {
        return Err(Error::Size(format!("need at least 2 samples to standardize, got {n}")));
    }
    let mut values = data.values().clone();
    for (c, mut col) in values.column_iter_mut().enumerate() {
        let mean = col.mean();
        let sd = (col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        if !(sd > 1e-12 * (1.0 + mean.abs())) {
            return Err(Error::DegenerateData(format!(
                "column '{}' is constant",
                data.names()[c]
            )));
        }
        col.apply(|x| *x = (*x - mean) / sd);
    }
    Dataset::new(data.names().to_vec(), values)
}

/// Sample standard deviation helper shared with tests and callers.
pub fn column_std(data: &DMatrix<f64>, c: usize) -> f64 {
    sample_std(data.column(c).as_slice())
}
