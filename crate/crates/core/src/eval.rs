//! Scoring discovered graphs: skeleton confusion counts, TPR/FPR, ROC sweeps
//! over significance levels and Markov-equivalence accuracy.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::{gen_junction, gen_quantum_junction, GroundTruth, JunctionKind, DEFAULT_NOISE_RATIO};
use crate::error::{Error, Result};
use crate::kta::OptimizerConfig;
use crate::pc::{propagate_orientations, run_pc, GraphJson, KernelChoice, MixedGraph, PcConfig};
use crate::qsim::CircuitSpec;
use crate::Dataset;

/// The significance levels swept by default, largest first.
pub const DEFAULT_ALPHAS: [f64; 12] = [
    0.999999, 0.9, 0.75, 0.5, 0.25, 0.2, 0.1, 0.05, 0.01, 0.001, 0.0001, 0.00001,
];

/// Edge-existence confusion counts over unordered variable pairs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkeletonConfusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl SkeletonConfusion {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

impl std::ops::AddAssign for SkeletonConfusion {
    fn add_assign(&mut self, o: Self) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.tn += o.tn;
        self.fn_ += o.fn_;
    }
}

fn same_nodes(a: &MixedGraph, b: &MixedGraph) -> Result<()> {
    if a.nodes() != b.nodes() {
        return Err(Error::Graph(format!(
            "node sets differ: {:?} vs {:?}",
            a.nodes(),
            b.nodes()
        )));
    }
    Ok(())
}

pub fn skeleton_confusion(estimate: &MixedGraph, truth: &MixedGraph) -> Result<SkeletonConfusion> {
    same_nodes(estimate, truth)?;
    let mut c = SkeletonConfusion::default();
    let p = truth.n_nodes();
    for a in 0..p {
        for b in (a + 1)..p {
            match (estimate.adjacent(a, b), truth.adjacent(a, b)) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
        }
    }
    Ok(c)
}

/// True- and false-positive rates; `None` when the denominator is zero.
pub fn tpr_fpr(c: &SkeletonConfusion) -> (Option<f64>, Option<f64>) {
    let rate = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
    (rate(c.tp, c.tp + c.fn_), rate(c.fp, c.fp + c.tn))
}

/// The CPDAG of the DAG's equivalence class: v-structure edges stay
/// directed, the propagation rules used by PC orient what they can, and all
/// remaining edges are undirected.
pub fn dag_to_cpdag(dag: &MixedGraph) -> Result<MixedGraph> {
    if dag.undirected_edges().next().is_some() {
        return Err(Error::Graph("expected a DAG, found undirected edges".into()));
    }
    dag.validate()?;
    let mut g = MixedGraph::empty(dag.nodes().to_vec());
    for (a, b) in dag.directed_edges() {
        g.add_undirected(a, b);
    }
    for c in 0..dag.n_nodes() {
        let parents = dag.parents(c);
        for (i, &a) in parents.iter().enumerate() {
            for &b in &parents[i + 1..] {
                if !dag.adjacent(a, b) {
                    g.orient(a, c);
                    g.orient(b, c);
                }
            }
        }
    }
    Ok(propagate_orientations(&g))
}

/// Whether `estimate` is exactly the CPDAG of `truth_dag`.
pub fn markov_accuracy(estimate: &MixedGraph, truth_dag: &MixedGraph) -> Result<bool> {
    same_nodes(estimate, truth_dag)?;
    Ok(*estimate == dag_to_cpdag(truth_dag)?)
}

/// JSON comparison of an estimate against the true equivalence class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CpdagVerdict {
    pub markov_equivalent: bool,
    pub confusion: SkeletonConfusion,
    pub tpr: Option<f64>,
    pub fpr: Option<f64>,
    pub estimate: GraphJson,
    pub expected: GraphJson,
}

pub fn compare(estimate: &MixedGraph, truth_dag: &MixedGraph) -> Result<CpdagVerdict> {
    let expected = dag_to_cpdag(truth_dag)?;
    let confusion = skeleton_confusion(estimate, truth_dag)?;
    let (tpr, fpr) = tpr_fpr(&confusion);
    Ok(CpdagVerdict {
        markov_equivalent: *estimate == expected,
        confusion,
        tpr,
        fpr,
        estimate: estimate.to_json(),
        expected: expected.to_json(),
    })
}

/// How benchmark datasets are drawn. Trial `t` uses seed `base_seed + t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub kind: JunctionKind,
    pub n: usize,
    pub noise_ratio: f64,
    /// Draw sources from this circuit instead of standard normals.
    pub quantum: Option<CircuitSpec>,
    pub base_seed: u64,
}

impl GeneratorConfig {
    pub fn new(kind: JunctionKind, n: usize) -> Self {
        Self {
            kind,
            n,
            noise_ratio: DEFAULT_NOISE_RATIO,
            quantum: None,
            base_seed: 0,
        }
    }

    pub fn trial_seed(&self, trial: usize) -> u64 {
        self.base_seed.wrapping_add(trial as u64)
    }

    pub fn generate(&self, trial: usize) -> Result<(Dataset, GroundTruth)> {
        let seed = self.trial_seed(trial);
        match &self.quantum {
            None => gen_junction(self.kind, self.n, self.noise_ratio, seed),
            Some(spec) => gen_quantum_junction(self.kind, self.n, self.noise_ratio, spec, seed),
        }
    }
}

/// The discovery methods compared by the benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Gaussian kernels with median-heuristic widths.
    PcGaussian,
    /// Fidelity kernels of the default circuit at scaling 1.
    QpcDefault,
    /// Fidelity kernels with the scaling chosen by KTA minimization.
    QpcOptimized,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::PcGaussian, Method::QpcDefault, Method::QpcOptimized];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::PcGaussian => "pc-gaussian",
            Method::QpcDefault => "qpc-default",
            Method::QpcOptimized => "qpc-optimized",
        }
    }

    pub fn config(self, alpha: f64, seed: u64) -> PcConfig {
        let base = PcConfig {
            alpha,
            seed,
            ..PcConfig::default()
        };
        match self {
            Method::PcGaussian => base,
            Method::QpcDefault => PcConfig {
                kernel: KernelChoice::Quantum(CircuitSpec::default()),
                ..base
            },
            Method::QpcOptimized => PcConfig {
                kernel: KernelChoice::Quantum(CircuitSpec::default()),
                optimizer: Some(OptimizerConfig {
                    seed,
                    ..OptimizerConfig::quantum_default()
                }),
                ..base
            },
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Input(format!("unknown method '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub trial: usize,
    pub seed: u64,
    pub confusion: SkeletonConfusion,
    pub markov_equivalent: bool,
}

/// Generates dataset `trial`, runs discovery and scores it.
pub fn run_trial(gen: &GeneratorConfig, config: &PcConfig, trial: usize) -> Result<TrialOutcome> {
    let seed = gen.trial_seed(trial);
    let (data, truth) = gen.generate(trial)?;
    let dag = truth.dag()?;
    let config = PcConfig {
        seed,
        optimizer: config.optimizer.map(|o| OptimizerConfig { seed, ..o }),
        ..config.clone()
    };
    let out = run_pc(&data, &config)?;
    Ok(TrialOutcome {
        trial,
        seed,
        confusion: skeleton_confusion(&out.graph, &dag)?,
        markov_equivalent: markov_accuracy(&out.graph, &dag)?,
    })
}

/// Runs `trials` trials in parallel; results are in trial order.
pub fn run_trials(gen: &GeneratorConfig, config: &PcConfig, trials: usize) -> Vec<Result<TrialOutcome>> {
    (0..trials)
        .into_par_iter()
        .map(|t| {
            run_trial(gen, config, t)
                .map_err(|e| e.context(format!("alpha {}, trial {t}", config.alpha)))
        })
        .collect()
}

/// One pooled ROC point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub alpha: f64,
    pub trials: usize,
    pub confusion: SkeletonConfusion,
    pub tpr: Option<f64>,
    pub fpr: Option<f64>,
}

impl RocPoint {
    pub fn pooled(alpha: f64, outcomes: &[TrialOutcome]) -> Self {
        let mut confusion = SkeletonConfusion::default();
        for o in outcomes {
            confusion += o.confusion;
        }
        let (tpr, fpr) = tpr_fpr(&confusion);
        Self {
            alpha,
            trials: outcomes.len(),
            confusion,
            tpr,
            fpr,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
}

impl RocCurve {
    /// Columns `alpha,trials,tp,fp,tn,fn,tpr,fpr`; undefined rates are
    /// empty cells.
    pub fn to_csv(&self) -> Result<String> {
        roc_csv(&[], self.points.iter().map(|p| (Vec::new(), p)))
    }
}

/// ROC rows preceded by label columns named `labels` (for example method
/// and sample size).
pub fn roc_csv<'a>(
    labels: &[&str],
    rows: impl IntoIterator<Item = (Vec<String>, &'a RocPoint)>,
) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<&str> = labels.to_vec();
    header.extend(["alpha", "trials", "tp", "fp", "tn", "fn", "tpr", "fpr"]);
    w.write_record(&header)?;
    let opt = |v: Option<f64>| v.map(|x| format!("{x:?}")).unwrap_or_default();
    for (mut row, p) in rows {
        if row.len() != labels.len() {
            return Err(Error::Size(format!(
                "{} labels for {} label columns",
                row.len(),
                labels.len()
            )));
        }
        let c = p.confusion;
        row.extend([
            format!("{:?}", p.alpha),
            p.trials.to_string(),
            c.tp.to_string(),
            c.fp.to_string(),
            c.tn.to_string(),
            c.fn_.to_string(),
            opt(p.tpr),
            opt(p.fpr),
        ]);
        w.write_record(&row)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Numeric(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Pooled skeleton rates for each `alpha`, over the same `trials` datasets.
pub fn roc_sweep(
    gen: &GeneratorConfig,
    method: &PcConfig,
    alphas: &[f64],
    trials: usize,
) -> Result<RocCurve> {
    if trials == 0 {
        return Err(Error::Input("trials must be at least 1".into()));
    }
    let points = alphas
        .iter()
        .map(|&alpha| {
            let config = PcConfig {
                alpha,
                ..method.clone()
            };
            let outcomes = run_trials(gen, &config, trials)
                .into_iter()
                .collect::<Result<Vec<_>>>()?;
            Ok(RocPoint::pooled(alpha, &outcomes))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RocCurve { points })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names() -> Vec<String> {
        vec!["X".into(), "Y".into(), "Z".into()]
    }

    fn dag(edges: &[(usize, usize)]) -> MixedGraph {
        MixedGraph::from_dag(names(), edges).unwrap()
    }

    #[test]
    fn confusion_examples() {
        let truth = dag(&[(0, 2), (2, 1)]);
        let c = skeleton_confusion(&truth, &truth).unwrap();
        assert_eq!((c.tp, c.fp, c.tn, c.fn_), (2, 0, 1, 0));

        let c = skeleton_confusion(&MixedGraph::empty(names()), &truth).unwrap();
        assert_eq!((c.tp, c.fp, c.tn, c.fn_), (0, 0, 1, 2));

        let mut est = MixedGraph::empty(names());
        est.add_undirected(0, 1);
        let c = skeleton_confusion(&est, &truth).unwrap();
        assert_eq!((c.tp, c.fp, c.tn, c.fn_), (0, 1, 0, 2));
        assert_eq!(c.total(), 3);
    }

    #[test]
    fn rates() {
        let c = SkeletonConfusion { tp: 2, fp: 0, tn: 3, fn_: 1 };
        let (tpr, fpr) = tpr_fpr(&c);
        assert!((tpr.unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(fpr, Some(0.0));
        let (tpr, _) = tpr_fpr(&SkeletonConfusion { tp: 0, fp: 1, tn: 2, fn_: 0 });
        assert_eq!(tpr, None);
    }

    #[test]
    fn cpdag_of_junctions() {
        let chain = dag(&[(0, 2), (2, 1)]);
        let fork = dag(&[(2, 0), (2, 1)]);
        let collider = dag(&[(0, 2), (1, 2)]);
        let c = dag_to_cpdag(&chain).unwrap();
        assert!(c.has_undirected(0, 2) && c.has_undirected(1, 2));
        assert_eq!(c, dag_to_cpdag(&fork).unwrap());
        assert_eq!(dag_to_cpdag(&collider).unwrap(), collider);
    }

    #[test]
    fn markov_accuracy_examples() {
        let chain = dag(&[(0, 2), (2, 1)]);
        let fork = dag(&[(2, 0), (2, 1)]);
        let collider = dag(&[(0, 2), (1, 2)]);
        assert!(markov_accuracy(&collider, &collider).unwrap());
        assert!(markov_accuracy(&dag_to_cpdag(&chain).unwrap(), &fork).unwrap());
        let mut extra = dag_to_cpdag(&chain).unwrap();
        extra.add_undirected(0, 1);
        assert!(!markov_accuracy(&extra, &fork).unwrap());
    }

    #[test]
    fn node_mismatch_is_an_error() {
        let a = MixedGraph::empty(names());
        let b = MixedGraph::empty(vec!["A".into(), "B".into(), "C".into()]);
        assert!(skeleton_confusion(&a, &b).is_err());
        assert!(markov_accuracy(&a, &b).is_err());
    }

    #[test]
    fn default_alpha_set() {
        assert_eq!(DEFAULT_ALPHAS.len(), 12);
        assert!(DEFAULT_ALPHAS.windows(2).all(|w| w[0] > w[1]));
    }

    #[test]
    fn roc_csv_leaves_undefined_rates_empty() {
        let p = RocPoint::pooled(
            0.05,
            &[TrialOutcome {
                trial: 0,
                seed: 0,
                confusion: SkeletonConfusion { tp: 0, fp: 1, tn: 2, fn_: 0 },
                markov_equivalent: false,
            }],
        );
        let csv = RocCurve { points: vec![p] }.to_csv().unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "alpha,trials,tp,fp,tn,fn,tpr,fpr");
        assert!(lines[1].starts_with("0.05,1,0,1,2,0,,0.333"));
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        }
    }
}
