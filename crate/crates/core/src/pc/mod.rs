//! The PC algorithm: skeleton discovery, v-structure orientation and
//! orientation propagation.
//!
//! Skeleton discovery is the level-stable variant: each level tests against
//! a snapshot of the adjacencies and applies all removals at the end of the
//! level, so tests within a level can run in parallel and the result does not
//! depend on scheduling.

mod graph;
mod tester;

use log::{debug, info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use graph::{GraphJson, MixedGraph, SepsetTable};
pub use tester::{CITester, DSeparationOracle, KernelCiTester, KernelSpec};

use crate::datagen::standardize;
use crate::error::{Error, Result};
use crate::kcit::{NullMethod, DEFAULT_EPSILON};
use crate::kta::{
    minimize_kta_gradient, minimize_kta_scalar, shuffle_columns, OptimizerConfig, OptimizerMethod,
    ParamKernel,
};
use crate::qsim::{CircuitSpec, DEFAULT_MAX_QUBITS};
use crate::Dataset;

/// One (conditional) independence test performed during skeleton discovery.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestRecord {
    pub x: usize,
    pub y: usize,
    pub conditioning_set: Vec<usize>,
    pub statistic: f64,
    pub p_value: f64,
    pub independent: bool,
}

/// All `k`-subsets of `items` in lexicographic order.
fn subsets(items: &[usize], k: usize) -> Vec<Vec<usize>> {
    let n = items.len();
    if k > n {
        return Vec::new();
    }
    let mut idx: Vec<usize> = (0..k).collect();
    let mut out = Vec::new();
    loop {
        out.push(idx.iter().map(|&i| items[i]).collect());
        let Some(i) = (0..k).rev().find(|&i| idx[i] < n - k + i) else {
            return out;
        };
        idx[i] += 1;
        for j in (i + 1)..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

fn format_set(names: &[String], set: &[usize]) -> String {
    let inner: Vec<&str> = set.iter().map(|&v| names[v].as_str()).collect();
    format!("{{{}}}", inner.join(","))
}

/// Outcome of testing one adjacent pair at one level.
struct PairOutcome {
    pair: (usize, usize),
    sepset: Option<Vec<usize>>,
    records: Vec<TestRecord>,
}

fn test_pair(
    names: &[String],
    g: &MixedGraph,
    tester: &dyn CITester,
    (x, y): (usize, usize),
    level: usize,
    alpha: f64,
) -> Result<PairOutcome> {
    let mut records = Vec::new();
    let mut tried: Vec<Vec<usize>> = Vec::new();
    for (a, b) in [(x, y), (y, x)] {
        let candidates: Vec<usize> = g.neighbors(a).into_iter().filter(|&v| v != b).collect();
        for set in subsets(&candidates, level) {
            if tried.contains(&set) {
                continue;
            }
            let r = tester.test(x, y, &set, alpha).map_err(|e| {
                e.context(format!(
                    "testing {} vs {} given {}",
                    names[x],
                    names[y],
                    format_set(names, &set)
                ))
            })?;
            records.push(TestRecord {
                x,
                y,
                conditioning_set: set.clone(),
                statistic: r.statistic,
                p_value: r.p_value,
                independent: r.independent,
            });
            if r.independent {
                return Ok(PairOutcome {
                    pair: (x, y),
                    sepset: Some(set),
                    records,
                });
            }
            tried.push(set);
        }
    }
    Ok(PairOutcome {
        pair: (x, y),
        sepset: None,
        records,
    })
}

/// Skeleton discovery starting from the complete graph over `names`.
///
/// Returns the undirected skeleton, the separating sets of removed pairs and
/// every test performed in execution order (level, then pair).
pub fn skeleton(
    names: &[String],
    tester: &dyn CITester,
    alpha: f64,
    max_depth: Option<usize>,
) -> Result<(MixedGraph, SepsetTable, Vec<TestRecord>)> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Input(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if names.len() != tester.n_vars() {
        return Err(Error::Size(format!(
            "{} names for a tester over {} variables",
            names.len(),
            tester.n_vars()
        )));
    }
    let mut g = MixedGraph::complete_undirected(names.to_vec());
    let mut sepsets = SepsetTable::default();
    let mut records = Vec::new();
    let mut level = 0;
    loop {
        if max_depth.is_some_and(|d| level > d) {
            break;
        }
        let pairs: Vec<(usize, usize)> = g
            .undirected_edges()
            .filter(|&(x, y)| g.neighbors(x).len() > level || g.neighbors(y).len() > level)
            .collect();
        if pairs.is_empty() {
            break;
        }
        let snapshot = &g;
        let outcomes = pairs
            .par_iter()
            .map(|&pair| test_pair(names, snapshot, tester, pair, level, alpha))
            .collect::<Result<Vec<_>>>()?;
        let mut removed = 0;
        for outcome in outcomes {
            records.extend(outcome.records);
            if let Some(set) = outcome.sepset {
                let (x, y) = outcome.pair;
                debug!("removed {} - {} given {}", names[x], names[y], format_set(names, &set));
                g.remove_edge(x, y);
                sepsets.insert(x, y, set);
                removed += 1;
            }
        }
        debug!("level {level}: {} pairs tested, {removed} edges removed", pairs.len());
        level += 1;
    }
    Ok((g, sepsets, records))
}

/// Orients unshielded triples `x − z − y` as `x → z ← y` when `z` is not in
/// the separating set of `x` and `y`. The first orientation of an edge wins;
/// later conflicting arrows are skipped and described in `notes`.
pub fn orient_vstructures_logged(
    skeleton: &MixedGraph,
    sepsets: &SepsetTable,
    notes: &mut Vec<String>,
) -> MixedGraph {
    let mut g = skeleton.clone();
    let names = skeleton.nodes();
    let p = skeleton.n_nodes();
    for z in 0..p {
        let nbrs = skeleton.neighbors(z);
        for (i, &x) in nbrs.iter().enumerate() {
            for &y in &nbrs[i + 1..] {
                if skeleton.adjacent(x, y) {
                    continue;
                }
                let Some(sep) = sepsets.get(x, y) else {
                    continue;
                };
                if sep.contains(&z) {
                    continue;
                }
                for a in [x, y] {
                    if g.has_directed(a, z) {
                        continue;
                    }
                    if g.has_directed(z, a) {
                        let msg = format!(
                            "collider {} -> {} <- {} conflicts with existing {} -> {}; kept the earlier arrow",
                            names[x], names[z], names[y], names[z], names[a]
                        );
                        warn!("{msg}");
                        notes.push(msg);
                    } else if g.has_directed_path(z, a) {
                        let msg = format!(
                            "skipped {} -> {}: would close a directed cycle",
                            names[a], names[z]
                        );
                        warn!("{msg}");
                        notes.push(msg);
                    } else {
                        g.orient(a, z);
                    }
                }
            }
        }
    }
    g
}

pub fn orient_vstructures(skeleton: &MixedGraph, sepsets: &SepsetTable) -> MixedGraph {
    orient_vstructures_logged(skeleton, sepsets, &mut Vec::new())
}

/// Which propagation rule, if any, orients the undirected edge as `a → b`.
fn rule_for(g: &MixedGraph, a: usize, b: usize) -> Option<&'static str> {
    let r1 = g
        .parents(a)
        .into_iter()
        .any(|c| c != b && !g.adjacent(c, b));
    if r1 {
        return Some("chain");
    }
    if g.has_directed_path(a, b) {
        return Some("path");
    }
    None
}

/// Applies the two propagation rules until nothing changes:
/// `c → a − b` with `c`, `b` nonadjacent gives `a → b`, and `a − b` with a
/// directed path `a ⇝ b` gives `a → b`. Orientations that would close a
/// directed cycle are skipped and described in `notes`.
pub fn propagate_orientations_logged(g: &MixedGraph, notes: &mut Vec<String>) -> MixedGraph {
    let mut g = g.clone();
    let mut skipped = std::collections::BTreeSet::new();
    loop {
        let mut changed = false;
        let edges: Vec<(usize, usize)> = g.undirected_edges().collect();
        for (u, v) in edges {
            for (a, b) in [(u, v), (v, u)] {
                if !g.has_undirected(a, b) {
                    continue;
                }
                let Some(rule) = rule_for(&g, a, b) else {
                    continue;
                };
                if g.has_directed_path(b, a) {
                    if skipped.insert((a, b)) {
                        let names = g.nodes();
                        let msg = format!(
                            "skipped {} -> {} ({rule} rule): would close a directed cycle",
                            names[a], names[b]
                        );
                        warn!("{msg}");
                        notes.push(msg);
                    }
                    continue;
                }
                g.orient(a, b);
                changed = true;
            }
        }
        if !changed {
            return g;
        }
    }
}

pub fn propagate_orientations(g: &MixedGraph) -> MixedGraph {
    propagate_orientations_logged(g, &mut Vec::new())
}

/// Skeleton, v-structures and propagation with an arbitrary tester.
pub fn pc_with_tester(
    names: &[String],
    tester: &dyn CITester,
    alpha: f64,
    max_depth: Option<usize>,
) -> Result<PcOutput> {
    let (skel, sepsets, tests) = skeleton(names, tester, alpha, max_depth)?;
    let mut notes = Vec::new();
    let oriented = orient_vstructures_logged(&skel, &sepsets, &mut notes);
    let graph = propagate_orientations_logged(&oriented, &mut notes);
    Ok(PcOutput {
        graph,
        sepsets,
        report: PcReport {
            names: names.to_vec(),
            alpha,
            tests,
            optimization: None,
            notes,
        },
    })
}

/// Kernel family used by the independence tests.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelChoice {
    /// Gaussian kernels (classical PC).
    Gaussian,
    /// Fidelity kernels of the given circuit template (qPC).
    Quantum(CircuitSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcConfig {
    pub kernel: KernelChoice,
    pub alpha: f64,
    pub epsilon: f64,
    /// When set, kernel hyperparameters are tuned by KTA minimization on
    /// decoupled data before testing.
    pub optimizer: Option<OptimizerConfig>,
    pub max_depth: Option<usize>,
    pub null: NullMethod,
    /// Cap on the qubit count of fidelity kernels over variable sets.
    pub max_qubits: usize,
    /// Seed for the decoupling shuffle.
    pub seed: u64,
}

impl Default for PcConfig {
    fn default() -> Self {
        Self {
            kernel: KernelChoice::Gaussian,
            alpha: 0.05,
            epsilon: DEFAULT_EPSILON,
            optimizer: None,
            max_depth: None,
            null: NullMethod::Gamma,
            max_qubits: DEFAULT_MAX_QUBITS,
            seed: 0,
        }
    }
}

/// What the hyperparameter search settled on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationSummary {
    pub kernel: String,
    pub method: OptimizerMethod,
    /// One shared value (scaling or width), or one width per variable.
    pub parameters: Vec<f64>,
    pub initial_kta: f64,
    pub kta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcReport {
    pub names: Vec<String>,
    pub alpha: f64,
    pub tests: Vec<TestRecord>,
    pub optimization: Option<OptimizationSummary>,
    /// Orientation conflicts and skipped orientations.
    pub notes: Vec<String>,
}

impl PcReport {
    /// Test log with columns `x,y,conditioning_set,statistic,p_value,independent`;
    /// conditioning sets are `;`-separated variable names.
    pub fn tests_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["x", "y", "conditioning_set", "statistic", "p_value", "independent"])?;
        for t in &self.tests {
            let set: Vec<&str> = t.conditioning_set.iter().map(|&v| self.names[v].as_str()).collect();
            w.write_record([
                self.names[t.x].clone(),
                self.names[t.y].clone(),
                set.join(";"),
                format!("{:?}", t.statistic),
                format!("{:?}", t.p_value),
                t.independent.to_string(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Numeric(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcOutput {
    pub graph: MixedGraph,
    pub sepsets: SepsetTable,
    pub report: PcReport,
}

fn tune_kernel(
    data: &nalgebra::DMatrix<f64>,
    config: &PcConfig,
    opt: &OptimizerConfig,
) -> Result<(KernelSpec, OptimizationSummary)> {
    let p = data.ncols();
    match (config.kernel, opt.method) {
        (KernelChoice::Quantum(_), OptimizerMethod::Gradient) => Err(Error::UnsupportedKernel(
            "gradient search needs an analytic kernel derivative; use scalar search for fidelity kernels".into(),
        )),
        (choice, OptimizerMethod::ScalarBounded) => {
            let decoupled = shuffle_columns(data, config.seed)?;
            let family = match choice {
                KernelChoice::Gaussian => ParamKernel::Gaussian,
                KernelChoice::Quantum(spec) => ParamKernel::Fidelity(spec),
            };
            let out = minimize_kta_scalar(&decoupled, |d, g| family.matrix(d, g), opt)?;
            info!(
                "KTA search: parameter {:.4} (KTA {:.4} from {:.4})",
                out.gamma, out.kta, out.initial_kta
            );
            let (spec, name) = match choice {
                KernelChoice::Gaussian => (KernelSpec::GaussianWidths(vec![out.gamma; p]), "gaussian"),
                KernelChoice::Quantum(t) => (
                    KernelSpec::Fidelity {
                        template: t.with_scaling(out.gamma),
                        max_qubits: config.max_qubits,
                    },
                    "quantum",
                ),
            };
            Ok((
                spec,
                OptimizationSummary {
                    kernel: name.into(),
                    method: opt.method,
                    parameters: vec![out.gamma],
                    initial_kta: out.initial_kta,
                    kta: out.kta,
                },
            ))
        }
        (KernelChoice::Gaussian, OptimizerMethod::Gradient) => {
            // Each pair yields a width per member; a variable's width is the
            // geometric mean over the pairs it belongs to.
            let mut log_sum = vec![0.0; p];
            let (mut initial, mut last) = (0.0, 0.0);
            let mut pairs = 0usize;
            for i in 0..p {
                for j in (i + 1)..p {
                    let cols = nalgebra::DMatrix::from_fn(data.nrows(), 2, |r, c| {
                        data[(r, if c == 0 { i } else { j })]
                    });
                    let mut pair_opt = *opt;
                    pair_opt.seed = opt.seed.wrapping_add((i * p + j) as u64);
                    let out = minimize_kta_gradient(&cols, &pair_opt)?;
                    log_sum[i] += out.theta.ln();
                    log_sum[j] += out.phi.ln();
                    initial += out.initial_kta;
                    last += out.kta;
                    pairs += 1;
                }
            }
            let widths: Vec<f64> = log_sum.iter().map(|s| (s / (p - 1) as f64).exp()).collect();
            info!("KTA gradient search: widths {widths:?}");
            Ok((
                KernelSpec::GaussianWidths(widths.clone()),
                OptimizationSummary {
                    kernel: "gaussian".into(),
                    method: opt.method,
                    parameters: widths,
                    initial_kta: initial / pairs as f64,
                    kta: last / pairs as f64,
                },
            ))
        }
    }
}

/// Full pipeline: standardize, optionally tune kernels, then PC.
pub fn run_pc(data: &Dataset, config: &PcConfig) -> Result<PcOutput> {
    if !(config.alpha > 0.0 && config.alpha < 1.0) {
        return Err(Error::Input(format!("alpha must lie in (0, 1), got {}", config.alpha)));
    }
    if let KernelChoice::Quantum(spec) = &config.kernel {
        spec.validate()?;
    }
    let std = standardize(data)?;
    let names = std.names().to_vec();
    if names.len() < 2 {
        return Ok(PcOutput {
            graph: MixedGraph::empty(names.clone()),
            sepsets: SepsetTable::default(),
            report: PcReport {
                names,
                alpha: config.alpha,
                tests: Vec::new(),
                optimization: None,
                notes: Vec::new(),
            },
        });
    }
    let values = std.values().clone();
    let (spec, summary) = match &config.optimizer {
        Some(opt) => {
            let (s, summary) = tune_kernel(&values, config, opt)?;
            (s, Some(summary))
        }
        None => match config.kernel {
            KernelChoice::Gaussian => (KernelSpec::GaussianMedian, None),
            KernelChoice::Quantum(template) => (
                KernelSpec::Fidelity {
                    template,
                    max_qubits: config.max_qubits,
                },
                None,
            ),
        },
    };
    let tester = KernelCiTester::new(values, spec, config.epsilon, config.null)?;
    let mut out = pc_with_tester(&names, &tester, config.alpha, config.max_depth)?;
    out.report.optimization = summary;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(p: usize) -> Vec<String> {
        ["X", "Y", "Z", "W", "V"][..p].iter().map(|s| s.to_string()).collect()
    }

    /// Never reports independence.
    struct AlwaysDependent(usize);

    impl CITester for AlwaysDependent {
        fn n_vars(&self) -> usize {
            self.0
        }

        fn test(&self, _: usize, _: usize, _: &[usize], alpha: f64) -> Result<crate::kcit::CITestResult> {
            Ok(crate::kcit::CITestResult {
                statistic: 1.0,
                gamma_shape: 1.0,
                gamma_scale: 1.0,
                p_value: 0.0,
                independent: false,
                alpha,
            })
        }
    }

    #[test]
    fn subsets_are_lexicographic() {
        assert_eq!(subsets(&[1, 3, 5], 2), vec![vec![1, 3], vec![1, 5], vec![3, 5]]);
        assert_eq!(subsets(&[1, 3], 0), vec![Vec::<usize>::new()]);
        assert!(subsets(&[1], 2).is_empty());
        assert_eq!(subsets(&[0, 1, 2, 3], 3).len(), 4);
    }

    #[test]
    fn independent_variables_give_empty_graph() {
        let oracle = DSeparationOracle::new(MixedGraph::from_dag(names(3), &[]).unwrap()).unwrap();
        let (g, seps, _) = skeleton(&names(3), &oracle, 0.05, None).unwrap();
        assert_eq!(g.edge_count(), 0);
        assert_eq!(seps.len(), 3);
        assert!(seps.iter().all(|(_, s)| s.is_empty()));
    }

    #[test]
    fn collider_skeleton_and_orientation() {
        // X -> Z <- Y
        let dag = MixedGraph::from_dag(names(3), &[(0, 2), (1, 2)]).unwrap();
        let oracle = DSeparationOracle::new(dag.clone()).unwrap();
        let (g, seps, _) = skeleton(&names(3), &oracle, 0.05, None).unwrap();
        assert!(g.has_undirected(0, 2) && g.has_undirected(1, 2) && !g.adjacent(0, 1));
        assert_eq!(seps.get(0, 1), Some(&[][..]));
        let o = orient_vstructures(&g, &seps);
        assert_eq!(o, dag);
    }

    #[test]
    fn separated_by_middle_node_stays_undirected() {
        let mut g = MixedGraph::empty(names(3));
        g.add_undirected(0, 2);
        g.add_undirected(1, 2);
        let mut seps = SepsetTable::default();
        seps.insert(0, 1, vec![2]);
        assert_eq!(orient_vstructures(&g, &seps), g);
    }

    #[test]
    fn star_with_two_colliders() {
        // X, Y, W all point into Z; no other adjacencies.
        let mut g = MixedGraph::empty(names(4));
        for v in [0, 1, 3] {
            g.add_undirected(v, 2);
        }
        let mut seps = SepsetTable::default();
        for (a, b) in [(0, 1), (0, 3), (1, 3)] {
            seps.insert(a, b, vec![]);
        }
        let o = orient_vstructures(&g, &seps);
        assert!(o.has_directed(0, 2) && o.has_directed(1, 2) && o.has_directed(3, 2));
    }

    #[test]
    fn complete_graph_retained() {
        let (g, seps, _) = skeleton(&names(4), &AlwaysDependent(4), 0.05, None).unwrap();
        assert_eq!(g.edge_count(), 6);
        assert!(seps.is_empty());
    }

    #[test]
    fn chain_rule_and_path_rule() {
        // X -> Z - Y, X and Y nonadjacent
        let mut g = MixedGraph::from_dag(names(3), &[(0, 2)]).unwrap();
        g.add_undirected(2, 1);
        let out = propagate_orientations(&g);
        assert!(out.has_directed(2, 1));

        // X - Y plus X -> W -> Y
        let mut g = MixedGraph::from_dag(names(4), &[(0, 3), (3, 1)]).unwrap();
        g.add_undirected(0, 1);
        let out = propagate_orientations(&g);
        assert!(out.has_directed(0, 1));
    }

    #[test]
    fn propagation_is_idempotent() {
        let mut g = MixedGraph::from_dag(names(4), &[(0, 2), (1, 2)]).unwrap();
        g.add_undirected(2, 3);
        let once = propagate_orientations(&g);
        assert_eq!(propagate_orientations(&once), once);
        assert_eq!(once.skeleton(), g.skeleton());
    }

    #[test]
    fn single_variable_dataset() {
        let d = Dataset::from_columns(vec!["A".into()], vec![vec![1.0, 2.0, 3.0, 5.0]]).unwrap();
        let out = run_pc(&d, &PcConfig::default()).unwrap();
        assert_eq!(out.graph.n_nodes(), 1);
        assert_eq!(out.graph.edge_count(), 0);
    }

    #[test]
    fn constant_column_is_named() {
        let d = Dataset::from_columns(
            vec!["A".into(), "B".into()],
            vec![vec![1.0, 2.0, 3.0, 4.0, 5.0], vec![2.0; 5]],
        )
        .unwrap();
        let err = run_pc(&d, &PcConfig::default()).unwrap_err();
        assert!(err.is_degenerate());
        assert!(err.to_string().contains('B'));
    }

    #[test]
    fn tests_csv_lists_every_test() {
        let dag = MixedGraph::from_dag(names(3), &[(0, 2), (2, 1)]).unwrap();
        let oracle = DSeparationOracle::new(dag).unwrap();
        let out = pc_with_tester(&names(3), &oracle, 0.05, None).unwrap();
        let csv = out.report.tests_csv().unwrap();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "x,y,conditioning_set,statistic,p_value,independent");
        assert_eq!(lines.count(), out.report.tests.len());
        assert!(csv.contains("X,Y,Z,"));
    }
}
