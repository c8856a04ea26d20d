//! Kernel target alignment (KTA) and hyperparameter search.
//!
//! `KTA(X, Y) = Tr[K̃x K̃y] / sqrt(Tr[K̃x²] Tr[K̃y²])` is the signal-to-noise
//! ratio of the gamma null used by the unconditional test. Minimizing it on
//! data whose dependence has been destroyed (by shuffling or by resampling
//! from fitted marginals) picks kernels with a low false-positive risk.
//!
//! Two searches are provided: stochastic gradient steps on
//! `f = −log KTA` for Gaussian widths, and a bounded golden-section search
//! on a single scalar hyperparameter (the circuit scaling for fidelity
//! kernels).

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{
    center, center_values, gaussian_kernel_matrix, squared_distances, GaussianKernelParams, KernelMatrix,
};
use crate::qsim::{fidelity_kernel_matrix, CircuitSpec, DEFAULT_MAX_QUBITS};

/// Alignment of two centered kernels, in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct KtaValue(f64);

impl KtaValue {
    pub fn value(self) -> f64 {
        self.0
    }

    /// `−log KTA`
    pub fn neg_log(self) -> f64 {
        -self.0.ln()
    }
}

pub fn kta(kx: &KernelMatrix, ky: &KernelMatrix) -> Result<KtaValue> {
    if !kx.is_centered() || !ky.is_centered() {
        return Err(Error::Input("KTA expects centered kernels".into()));
    }
    let denom = (kx.trace_sq() * ky.trace_sq()).sqrt();
    if !(denom > 0.0) {
        return Err(Error::DegenerateData(
            "centered kernel is zero (constant data)".into(),
        ));
    }
    let value = kx.trace_product(ky)? / denom;
    Ok(KtaValue(value.clamp(0.0, 1.0)))
}

/// Permutes the second column of an n×2 matrix.
pub fn shuffle_decouple(data: &DMatrix<f64>, seed: u64) -> Result<DMatrix<f64>> {
    if data.ncols() != 2 {
        return Err(Error::Size(format!("expected 2 columns, got {}", data.ncols())));
    }
    if data.nrows() < 2 {
        return Err(Error::Size("need at least 2 samples".into()));
    }
    shuffle_columns(data, seed)
}

/// Permutes every column except the first with independent permutations,
/// leaving each marginal intact and breaking dependence between columns.
pub fn shuffle_columns(data: &DMatrix<f64>, seed: u64) -> Result<DMatrix<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = data.clone();
    let n = data.nrows();
    for c in 1..data.ncols() {
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        for (r, &src) in perm.iter().enumerate() {
            out[(r, c)] = data[(src, c)];
        }
    }
    Ok(out)
}

/// A kernel family with one scalar hyperparameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ParamKernel {
    /// Gaussian kernel; the parameter is the width σ.
    Gaussian,
    /// Fidelity kernel; the parameter is the circuit scaling γ. The qubit
    /// count of the template is replaced by the data dimension.
    Fidelity(CircuitSpec),
}

impl ParamKernel {
    pub fn matrix(&self, data: &DMatrix<f64>, param: f64) -> Result<KernelMatrix> {
        match self {
            ParamKernel::Gaussian => {
                gaussian_kernel_matrix(data, GaussianKernelParams::new(param)?)
            }
            ParamKernel::Fidelity(spec) => {
                let spec = spec.for_dimension(data.ncols(), DEFAULT_MAX_QUBITS);
                fidelity_kernel_matrix(data, &spec.with_scaling(param))
            }
        }
    }

    /// Elementwise derivative of the (uncentered) kernel matrix with respect
    /// to the parameter.
    pub fn derivative(&self, data: &DMatrix<f64>, param: f64) -> Result<DMatrix<f64>> {
        match self {
            ParamKernel::Gaussian => {
                let k = self.matrix(data, param)?;
                let d2 = squared_distances(data);
                Ok(k.values().component_mul(&d2) / param.powi(3))
            }
            ParamKernel::Fidelity(_) => Err(Error::UnsupportedKernel(
                "no analytic derivative for the fidelity kernel scaling".into(),
            )),
        }
    }
}

/// `f = −log KTA` and its partial derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KtaGradient {
    pub f: f64,
    pub d_theta: f64,
    pub d_phi: f64,
}

/// Derivatives of `f(θ, φ) = −log KTA(K̃x(θ), K̃y(φ))`:
///
/// `∂f/∂θ = −Tr[K̃y ∂K̃x] / Tr[K̃x K̃y] + Tr[K̃x ∂K̃x] / Tr[K̃x²]`
///
/// and symmetrically for φ, with `∂K̃ = H ∂K H`.
pub fn kta_gradient(
    data_x: &DMatrix<f64>,
    data_y: &DMatrix<f64>,
    kernel_x: &ParamKernel,
    theta: f64,
    kernel_y: &ParamKernel,
    phi: f64,
) -> Result<KtaGradient> {
    let dkx = kernel_x.derivative(data_x, theta)?;
    let dky = kernel_y.derivative(data_y, phi)?;
    let kx = center(&kernel_x.matrix(data_x, theta)?);
    let ky = center(&kernel_y.matrix(data_y, phi)?);
    // Derivative matrices are symmetric but indefinite, so they stay plain.
    let dkx = center_values(&dkx);
    let dky = center_values(&dky);
    let tr = |k: &KernelMatrix, d: &DMatrix<f64>| k.values().component_mul(d).sum();

    let cross = kx.trace_product(&ky)?;
    let (sx, sy) = (kx.trace_sq(), ky.trace_sq());
    if !(cross > 0.0 && sx > 0.0 && sy > 0.0) {
        return Err(Error::DegenerateData("KTA is zero; −log KTA undefined".into()));
    }
    let f = -(cross / (sx * sy).sqrt()).ln();
    let d_theta = -tr(&ky, &dkx) / cross + tr(&kx, &dkx) / sx;
    let d_phi = -tr(&kx, &dky) / cross + tr(&ky, &dky) / sy;
    Ok(KtaGradient { f, d_theta, d_phi })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerMethod {
    ScalarBounded,
    Gradient,
}

/// How dependence is removed before alignment is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Decoupling {
    /// Shuffle for n ≤ 500, resample above.
    #[default]
    Auto,
    Shuffle,
    /// Independent draws from normals with the data's means and variances.
    MomentResample,
}

impl Decoupling {
    pub fn resolve(self, n: usize) -> Decoupling {
        match self {
            Decoupling::Auto if n <= 500 => Decoupling::Shuffle,
            Decoupling::Auto => Decoupling::MomentResample,
            other => other,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    pub method: OptimizerMethod,
    pub bounds: (f64, f64),
    pub init: f64,
    /// Gradient search stops once `f = −log KTA` reaches this value.
    pub target: f64,
    /// Gradient step size.
    pub step: f64,
    /// Samples drawn per gradient iteration.
    pub resample_m: usize,
    pub max_iters: usize,
    pub seed: u64,
    #[serde(default)]
    pub decoupling: Decoupling,
}

impl OptimizerConfig {
    /// Scalar search on the circuit scaling over `[0.01, 0.5]` from `0.1`.
    pub fn quantum_default() -> Self {
        Self {
            method: OptimizerMethod::ScalarBounded,
            bounds: (0.01, 0.5),
            init: 0.1,
            target: 10.0,
            step: 0.1,
            resample_m: 50,
            max_iters: 100,
            seed: 0,
            decoupling: Decoupling::Auto,
        }
    }

    /// Gradient search on Gaussian widths over `[0.1, 10]` from `1`.
    pub fn gaussian_default() -> Self {
        Self {
            method: OptimizerMethod::Gradient,
            bounds: (0.1, 10.0),
            init: 1.0,
            ..Self::quantum_default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (low, high) = self.bounds;
        if !(low.is_finite() && high.is_finite() && low < self.init && self.init < high) {
            return Err(Error::Input(format!(
                "optimizer needs low < init < high, got ({low}, {}, {high})",
                self.init
            )));
        }
        if !(self.step > 0.0) {
            return Err(Error::Input("step must be positive".into()));
        }
        if self.resample_m < 4 {
            return Err(Error::Input("resample_m must be at least 4".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::Input("max_iters must be at least 1".into()));
        }
        Ok(())
    }
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self::quantum_default()
    }
}

/// One objective evaluation of the scalar search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub iteration: usize,
    pub gamma: f64,
    pub kta: f64,
}

pub fn trace_to_csv(trace: &[TracePoint]) -> String {
    let mut out = String::from("iteration,gamma,kta\n");
    for p in trace {
        out.push_str(&format!("{},{:?},{:?}\n", p.iteration, p.gamma, p.kta));
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarMinimum {
    pub x: f64,
    pub value: f64,
    pub evaluations: Vec<(f64, f64)>,
}

const GOLDEN_TOL: f64 = 1e-4;
const GOLDEN_BUDGET: usize = 100;

/// Golden-section search on `[low, high]`. `init` and both bounds are always
/// evaluated, and the best point seen is returned.
pub fn golden_section<F>(mut f: F, low: f64, high: f64, init: f64) -> Result<ScalarMinimum>
where
    F: FnMut(f64) -> Result<f64>,
{
    if !(low < high) || !(low..=high).contains(&init) {
        return Err(Error::Input(format!("invalid bracket ({low}, {init}, {high})")));
    }
    let mut evals: Vec<(f64, f64)> = Vec::new();
    let mut eval = |x: f64, evals: &mut Vec<(f64, f64)>| -> Result<f64> {
        let v = f(x)?;
        if !v.is_finite() {
            return Err(Error::Numeric(format!("objective is {v} at {x}")));
        }
        evals.push((x, v));
        Ok(v)
    };
    eval(init, &mut evals)?;
    eval(low, &mut evals)?;
    eval(high, &mut evals)?;

    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (low, high);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = eval(c, &mut evals)?;
    let mut fd = eval(d, &mut evals)?;
    while b - a > GOLDEN_TOL && evals.len() < GOLDEN_BUDGET {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = eval(c, &mut evals)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = eval(d, &mut evals)?;
        }
    }
    let (x, value) = evals
        .iter()
        .copied()
        .min_by(|p, q| p.1.total_cmp(&q.1))
        .expect("at least three evaluations");
    Ok(ScalarMinimum {
        x,
        value,
        evaluations: evals,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarOutcome {
    pub gamma: f64,
    pub kta: f64,
    pub initial_kta: f64,
    pub trace: Vec<TracePoint>,
}

/// Mean KTA over all unordered column pairs of `data`, each column embedded
/// by `make_kernel(column, γ)`.
pub fn mean_pairwise_kta<F>(data: &DMatrix<f64>, make_kernel: &F, gamma: f64) -> Result<f64>
where
    F: Fn(&DMatrix<f64>, f64) -> Result<KernelMatrix>,
{
    let p = data.ncols();
    if p < 2 {
        return Err(Error::Size("KTA needs at least two variables".into()));
    }
    let kernels: Vec<KernelMatrix> = (0..p)
        .map(|c| make_kernel(&DMatrix::from_column_slice(data.nrows(), 1, data.column(c).as_slice()), gamma).map(|k| center(&k)))
        .collect::<Result<_>>()?;
    let mut total = 0.0;
    let mut count = 0usize;
    for i in 0..p {
        for j in (i + 1)..p {
            total += kta(&kernels[i], &kernels[j])?.value();
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// Minimizes the mean pairwise KTA over the scalar hyperparameter within
/// `config.bounds`. `data` should already be decoupled.
pub fn minimize_kta_scalar<F>(
    data: &DMatrix<f64>,
    make_kernel: F,
    config: &OptimizerConfig,
) -> Result<ScalarOutcome>
where
    F: Fn(&DMatrix<f64>, f64) -> Result<KernelMatrix>,
{
    config.validate()?;
    let (low, high) = config.bounds;
    let min = golden_section(|g| mean_pairwise_kta(data, &make_kernel, g), low, high, config.init)?;
    let trace = min
        .evaluations
        .iter()
        .enumerate()
        .map(|(iteration, &(gamma, kta))| TracePoint { iteration, gamma, kta })
        .collect::<Vec<_>>();
    Ok(ScalarOutcome {
        gamma: min.x,
        kta: min.value,
        initial_kta: min.evaluations[0].1,
        trace,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradientStep {
    pub iteration: usize,
    pub theta: f64,
    pub phi: f64,
    pub kta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientOutcome {
    /// Width of the first column's kernel at the best iterate.
    pub theta: f64,
    pub phi: f64,
    pub kta: f64,
    pub initial_kta: f64,
    /// False when `max_iters` ran out before the target was reached.
    pub converged: bool,
    pub trace: Vec<GradientStep>,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Stochastic search on two Gaussian widths.
///
/// Each iteration draws a decoupled batch of `resample_m` samples (either a
/// shuffled subsample or independent normal draws with the data's moments),
/// evaluates `f = −log KTA` and its gradient, and steps
/// `θ ← θ + η ∂f/∂θ` (likewise φ), clamped to the bounds. Increasing `f`
/// decreases KTA. The best iterate (lowest batch KTA) is returned.
pub fn minimize_kta_gradient(data: &DMatrix<f64>, config: &OptimizerConfig) -> Result<GradientOutcome> {
    config.validate()?;
    if config.method != OptimizerMethod::Gradient {
        return Err(Error::Input("config.method must be gradient".into()));
    }
    if data.ncols() != 2 || data.nrows() < 4 {
        return Err(Error::Size("gradient search expects an n×2 matrix with n ≥ 4".into()));
    }
    let n = data.nrows();
    let xs: Vec<f64> = data.column(0).iter().copied().collect();
    let ys: Vec<f64> = data.column(1).iter().copied().collect();
    let (mx, sx) = mean_std(&xs);
    let (my, sy) = mean_std(&ys);
    if !(sx > 0.0 && sy > 0.0) {
        return Err(Error::DegenerateData("constant column".into()));
    }
    let normal_x = Normal::new(mx, sx).map_err(|e| Error::Numeric(e.to_string()))?;
    let normal_y = Normal::new(my, sy).map_err(|e| Error::Numeric(e.to_string()))?;
    let strategy = config.decoupling.resolve(n);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (low, high) = config.bounds;
    let (mut theta, mut phi) = (config.init, config.init);
    let mut trace = Vec::with_capacity(config.max_iters);
    let mut best: Option<GradientStep> = None;
    let mut converged = false;
    let kernel = ParamKernel::Gaussian;

    for iteration in 0..config.max_iters {
        let (bx, by): (Vec<f64>, Vec<f64>) = match strategy {
            Decoupling::MomentResample => (0..config.resample_m)
                .map(|_| (normal_x.sample(&mut rng), normal_y.sample(&mut rng)))
                .unzip(),
            _ => {
                let m = config.resample_m.min(n);
                let mut px: Vec<usize> = (0..n).collect();
                let mut py = px.clone();
                px.shuffle(&mut rng);
                py.shuffle(&mut rng);
                (
                    px[..m].iter().map(|&i| xs[i]).collect(),
                    py[..m].iter().map(|&i| ys[i]).collect(),
                )
            }
        };
        let bx = DMatrix::from_vec(bx.len(), 1, bx);
        let by = DMatrix::from_vec(by.len(), 1, by);
        let grad = kta_gradient(&bx, &by, &kernel, theta, &kernel, phi)?;
        let step = GradientStep {
            iteration,
            theta,
            phi,
            kta: (-grad.f).exp(),
        };
        trace.push(step);
        if best.is_none_or(|b| step.kta < b.kta) {
            best = Some(step);
        }
        if grad.f >= config.target {
            converged = true;
            break;
        }
        theta = (theta + config.step * grad.d_theta).clamp(low, high);
        phi = (phi + config.step * grad.d_phi).clamp(low, high);
    }
    if !converged {
        log::warn!(
            "KTA gradient search stopped at max_iters={} before reaching f ≥ {}",
            config.max_iters,
            config.target
        );
    }
    let best = best.expect("max_iters ≥ 1");
    Ok(GradientOutcome {
        theta: best.theta,
        phi: best.phi,
        kta: best.kta,
        initial_kta: trace[0].kta,
        converged,
        trace,
    })
}
