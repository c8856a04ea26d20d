//! Brute-force reference implementations shared by the integration tests.
//! None of them reuse the library's algorithms.

#![allow(dead_code)]

use std::collections::BTreeSet;

use nalgebra::{DMatrix, SymmetricEigen};
use qcausal_core::kernels::{center, gaussian_kernel_matrix, GaussianKernelParams, KernelMatrix};
use qcausal_core::pc::MixedGraph;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// Centered Gaussian kernel of random data with a random width.
pub fn random_centered_kernel(rng: &mut ChaCha8Rng, n: usize) -> KernelMatrix {
    let d = rng.random_range(1..=3);
    let data = normal_matrix(rng, n, d);
    let width = rng.random_range(0.3..3.0);
    center(&gaussian_kernel_matrix(&data, GaussianKernelParams::new(width).unwrap()).unwrap())
}

/// Centered Gram matrix `H G Gᵀ H` of a random low-rank factor.
pub fn random_centered_gram(rng: &mut ChaCha8Rng, n: usize) -> KernelMatrix {
    let rank = rng.random_range(1..=n);
    let g = normal_matrix(rng, n, rank);
    let h = DMatrix::identity(n, n) - DMatrix::from_element(n, n, 1.0 / n as f64);
    let k = &h * (&g * g.transpose()) * &h;
    let k = (&k + k.transpose()) * 0.5;
    KernelMatrix::new(k, true).unwrap()
}

/// Tr M and Tr M² from the explicit `n² × n²` matrix
/// `M_{ij,i'j'} = Σ_k T_ijk T_i'j'k`, `T_ijk = ψ_i(k) φ_j(k)/√n`,
/// with `ψ = V_A Λ_A^{1/2}` and `φ = V_B Λ_B^{1/2}`.
pub fn tensor_m_traces(a: &DMatrix<f64>, b: &DMatrix<f64>) -> (f64, f64) {
    let n = a.nrows();
    let feature = |m: &DMatrix<f64>| {
        let eig = SymmetricEigen::new(m.clone());
        let sqrt_l = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
        &eig.eigenvectors * DMatrix::from_diagonal(&sqrt_l)
    };
    let (psi, phi) = (feature(a), feature(b));
    let t = DMatrix::from_fn(n * n, n, |ij, k| {
        let (i, j) = (ij / n, ij % n);
        psi[(k, i)] * phi[(k, j)] / (n as f64).sqrt()
    });
    let m = &t * t.transpose();
    (m.trace(), (&m * &m).trace())
}

/// Node names `V0, V1, ...`.
pub fn names(p: usize) -> Vec<String> {
    (0..p).map(|i| format!("V{i}")).collect()
}

/// Every DAG on `p` nodes (3^(p(p−1)/2) candidate edge assignments, cyclic
/// ones dropped).
pub fn all_dags(p: usize) -> Vec<MixedGraph> {
    let pairs: Vec<(usize, usize)> = (0..p).flat_map(|a| ((a + 1)..p).map(move |b| (a, b))).collect();
    let total = 3usize.pow(pairs.len() as u32);
    (0..total)
        .filter_map(|mut code| {
            let mut edges = Vec::new();
            for &(a, b) in &pairs {
                match code % 3 {
                    1 => edges.push((a, b)),
                    2 => edges.push((b, a)),
                    _ => {}
                }
                code /= 3;
            }
            MixedGraph::from_dag(names(p), &edges).ok()
        })
        .collect()
}

/// A random DAG: random topological order, each forward pair an edge with
/// probability `density`.
pub fn random_dag(rng: &mut ChaCha8Rng, p: usize, density: f64) -> MixedGraph {
    let mut order: Vec<usize> = (0..p).collect();
    order.shuffle(rng);
    let mut edges = Vec::new();
    for i in 0..p {
        for j in (i + 1)..p {
            if rng.random_bool(density) {
                edges.push((order[i], order[j]));
            }
        }
    }
    MixedGraph::from_dag(names(p), &edges).unwrap()
}

fn v_structures(edges: &BTreeSet<(usize, usize)>) -> BTreeSet<(usize, usize, usize)> {
    let adjacent = |a: usize, b: usize| edges.contains(&(a, b)) || edges.contains(&(b, a));
    let mut out = BTreeSet::new();
    for &(a, c) in edges {
        for &(b, c2) in edges {
            if c == c2 && a < b && !adjacent(a, b) {
                out.insert((a, c, b));
            }
        }
    }
    out
}

fn acyclic(p: usize, edges: &BTreeSet<(usize, usize)>) -> bool {
    let names = names(p);
    let list: Vec<(usize, usize)> = edges.iter().copied().collect();
    MixedGraph::from_dag(names, &list).is_ok()
}

/// The CPDAG by enumerating every orientation of the skeleton and keeping
/// the DAGs with the same v-structures: an edge is directed iff all members
/// of the equivalence class agree on it.
pub fn brute_force_cpdag(dag: &MixedGraph) -> MixedGraph {
    let p = dag.n_nodes();
    let truth: BTreeSet<(usize, usize)> = dag.directed_edges().collect();
    let target = v_structures(&truth);
    let skeleton: Vec<(usize, usize)> = dag.skeleton().into_iter().collect();
    let mut members: Vec<BTreeSet<(usize, usize)>> = Vec::new();
    for mask in 0..(1usize << skeleton.len()) {
        let edges: BTreeSet<(usize, usize)> = skeleton
            .iter()
            .enumerate()
            .map(|(i, &(a, b))| if mask >> i & 1 == 1 { (b, a) } else { (a, b) })
            .collect();
        if acyclic(p, &edges) && v_structures(&edges) == target {
            members.push(edges);
        }
    }
    let mut g = MixedGraph::empty(dag.nodes().to_vec());
    for &(a, b) in &skeleton {
        if members.iter().all(|m| m.contains(&(a, b))) {
            g.add_undirected(a, b);
            g.orient(a, b);
        } else if members.iter().all(|m| m.contains(&(b, a))) {
            g.add_undirected(a, b);
            g.orient(b, a);
        } else {
            g.add_undirected(a, b);
        }
    }
    g
}

/// d-separation by enumerating every simple path in the skeleton and
/// applying the blocking rules node by node.
pub fn d_separated_by_paths(dag: &MixedGraph, x: usize, y: usize, z: &[usize]) -> bool {
    let p = dag.n_nodes();
    let descendants = |v: usize| -> Vec<usize> {
        let mut out = vec![v];
        let mut i = 0;
        while i < out.len() {
            let u = out[i];
            for (a, b) in dag.directed_edges() {
                if a == u && !out.contains(&b) {
                    out.push(b);
                }
            }
            i += 1;
        }
        out
    };
    fn walk(
        dag: &MixedGraph,
        path: &mut Vec<usize>,
        y: usize,
        p: usize,
        out: &mut Vec<Vec<usize>>,
    ) {
        let last = *path.last().unwrap();
        if last == y {
            out.push(path.clone());
            return;
        }
        for next in 0..p {
            if dag.adjacent(last, next) && !path.contains(&next) {
                path.push(next);
                walk(dag, path, y, p, out);
                path.pop();
            }
        }
    }
    let mut paths = Vec::new();
    walk(dag, &mut vec![x], y, p, &mut paths);
    let open = |path: &Vec<usize>| {
        path.windows(3).all(|w| {
            let (a, m, b) = (w[0], w[1], w[2]);
            let collider = dag.has_directed(a, m) && dag.has_directed(b, m);
            if collider {
                descendants(m).iter().any(|d| z.contains(d))
            } else {
                !z.contains(&m)
            }
        })
    };
    !paths.iter().any(open)
}

/// All subsets of `items`.
pub fn power_set(items: &[usize]) -> Vec<Vec<usize>> {
    (0..(1usize << items.len()))
        .map(|mask| {
            items
                .iter()
                .enumerate()
                .filter(|(i, _)| mask >> i & 1 == 1)
                .map(|(_, &v)| v)
                .collect()
        })
        .collect()
}
