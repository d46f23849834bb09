//! Posterior predictive ensembles, evaluation metrics, uncertainty-band
//! export, and verification against targets with closed-form posteriors.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::gp::{kernel_matrix, GpPrior, Kernel, MeanFn, MeasurementSet};
use crate::likelihood::{functional_drift, GaussianLikelihood, Minibatch};
use crate::linalg::{cholesky, solve_spd, DenseMatrix};
use crate::mlp::{LinearNoBiasModel, Model, ParamVector};
use crate::rng::RngState;
use crate::samplers::{sghmc_momentum_step, sghmc_position_step, sgld_step, Dynamics};

const LOG_2PI: f64 = 1.8378770664093453;

/// Per-point summary of the Gaussian-mixture predictive: ensemble mean,
/// spread of the ensemble means, and total spread including the observation
/// noise.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveSummary {
    pub means: Vec<f64>,
    pub stds_param: Vec<f64>,
    pub stds_total: Vec<f64>,
}

/// n x S matrix of single-output function values, one column per posterior
/// sample.
pub fn predictive_values<M: Model>(
    model: &M,
    samples: &[ParamVector],
    x: &DenseMatrix,
) -> Result<DenseMatrix> {
    if samples.is_empty() {
        return Err(Error::EmptySampleSet);
    }
    let mut out = DenseMatrix::zeros(x.rows(), samples.len());
    for (s, w) in samples.iter().enumerate() {
        let f = model.forward_values(w, x)?;
        if f.cols() != 1 {
            return Err(Error::DimensionMismatch(
                "predictive summaries need a single-output model".into(),
            ));
        }
        for i in 0..x.rows() {
            out.set(i, s, f.get(i, 0));
        }
    }
    Ok(out)
}

/// Equal-weight mixture of Gaussians centered at the per-sample function
/// values, each with variance noise_std^2.
pub fn predictive_ensemble<M: Model>(
    model: &M,
    samples: &[ParamVector],
    x: &DenseMatrix,
    noise_std: f64,
) -> Result<PredictiveSummary> {
    let fs = predictive_values(model, samples, x)?;
    let s = samples.len() as f64;
    let noise_var = noise_std * noise_std;
    let mut means = Vec::with_capacity(x.rows());
    let mut stds_param = Vec::with_capacity(x.rows());
    let mut stds_total = Vec::with_capacity(x.rows());
    for i in 0..x.rows() {
        let row = fs.row(i);
        let mean = row.iter().sum::<f64>() / s;
        let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / s;
        means.push(mean);
        stds_param.push(var.sqrt());
        stds_total.push((var + noise_var).sqrt());
    }
    Ok(PredictiveSummary {
        means,
        stds_param,
        stds_total,
    })
}

fn log_sum_exp(vals: impl Iterator<Item = f64>) -> f64 {
    let vals: Vec<f64> = vals.collect();
    let max = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + vals.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// log (1/S) sum_s N(y | f_s, noise_std^2), evaluated stably.
pub fn mixture_log_density(fs: &[f64], y: f64, noise_std: f64) -> f64 {
    let var = noise_std * noise_std;
    let s = fs.len() as f64;
    log_sum_exp(
        fs.iter()
            .map(|f| -0.5 * ((y - f) * (y - f) / var + var.ln() + LOG_2PI)),
    ) - s.ln()
}

pub fn rmse(pred: &[f64], y: &[f64]) -> Result<f64> {
    if pred.len() != y.len() || pred.is_empty() {
        return Err(Error::DimensionMismatch(format!(
            "{} predictions against {} targets",
            pred.len(),
            y.len()
        )));
    }
    let mse = pred
        .iter()
        .zip(y)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / pred.len() as f64;
    Ok(mse.sqrt())
}

/// Average negative log mixture density over the test points.
pub fn nll<M: Model>(
    model: &M,
    samples: &[ParamVector],
    x: &DenseMatrix,
    y: &[f64],
    noise_std: f64,
) -> Result<f64> {
    if x.rows() != y.len() || y.is_empty() {
        return Err(Error::DimensionMismatch(format!(
            "{} inputs against {} targets",
            x.rows(),
            y.len()
        )));
    }
    let fs = predictive_values(model, samples, x)?;
    let total: f64 = (0..x.rows())
        .map(|i| -mixture_log_density(fs.row(i), y[i], noise_std))
        .sum();
    Ok(total / y.len() as f64)
}

/// CSV with one row per input: x (first feature), mean, std_param,
/// std_total.
pub fn export_bands(
    path: impl AsRef<Path>,
    x: &DenseMatrix,
    summary: &PredictiveSummary,
) -> Result<()> {
    let path = path.as_ref();
    if x.rows() != summary.means.len() {
        return Err(Error::DimensionMismatch("band export row counts".into()));
    }
    let mut out = String::from("x,mean,std_param,std_total\n");
    for i in 0..x.rows() {
        out.push_str(&format!(
            "{},{},{},{}\n",
            x.get(i, 0),
            summary.means[i],
            summary.stds_param[i],
            summary.stds_total[i]
        ));
    }
    fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Standard error of the series mean from non-overlapping batch means.
pub fn batch_means_se(series: &[f64], num_batches: usize) -> f64 {
    let b = num_batches.max(2).min(series.len());
    let batch_len = series.len() / b;
    let means: Vec<f64> = (0..b)
        .map(|i| {
            let chunk = &series[i * batch_len..(i + 1) * batch_len];
            chunk.iter().sum::<f64>() / chunk.len() as f64
        })
        .collect();
    let grand = means.iter().sum::<f64>() / b as f64;
    let var = means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (b as f64 - 1.0);
    (var / b as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TractableTarget {
    Gaussian2d,
    ConjugateLinear,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerifyConfig {
    pub steps: usize,
    pub burn_in: usize,
    pub epsilon: f64,
    /// Independent chains pooled for the ensemble moment estimates.
    pub chains: usize,
    pub friction: f64,
    pub mass: f64,
    pub seed: u64,
    pub mean_tol: f64,
    pub cov_rtol: f64,
    pub var_rtol: f64,
    /// Mean checks on the conjugate target allow this many batch-means
    /// standard errors.
    pub mean_se_factor: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            steps: 100_000,
            burn_in: 5_000,
            epsilon: 5e-4,
            chains: 256,
            friction: 1.0,
            mass: 1.0,
            seed: 1,
            mean_tol: 0.05,
            cov_rtol: 0.10,
            var_rtol: 0.15,
            mean_se_factor: 3.0,
        }
    }
}

impl VerifyConfig {
    /// Defaults with the friction tuned per dynamics: near-critical damping
    /// mixes the tight conjugate posterior much faster.
    pub fn recommended(dynamics: Dynamics) -> Self {
        VerifyConfig {
            friction: if dynamics == Dynamics::Fsghmc { 10.0 } else { 1.0 },
            ..VerifyConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckLine {
    pub name: String,
    pub observed: f64,
    pub expected: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl CheckLine {
    fn new(name: impl Into<String>, observed: f64, expected: f64, tolerance: f64) -> Self {
        let pass = (observed - expected).abs() <= tolerance;
        CheckLine {
            name: name.into(),
            observed,
            expected,
            tolerance,
            pass,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub target: TractableTarget,
    pub dynamics: Dynamics,
    pub checks: Vec<CheckLine>,
    pub pass: bool,
}

impl VerificationReport {
    fn assemble(target: TractableTarget, dynamics: Dynamics, checks: Vec<CheckLine>) -> Self {
        let pass = checks.iter().all(|c| c.pass);
        VerificationReport {
            target,
            dynamics,
            checks,
            pass,
        }
    }
}

/// Run the requested dynamics against a target with a known posterior and
/// compare long-run moments to the closed form.
pub fn verify_tractable(
    target: TractableTarget,
    dynamics: Dynamics,
    config: &VerifyConfig,
) -> Result<VerificationReport> {
    match (target, dynamics.is_functional()) {
        (TractableTarget::Gaussian2d, false) => verify_gaussian2d(dynamics, config),
        (TractableTarget::ConjugateLinear, true) => verify_conjugate_linear(dynamics, config),
        _ => Err(Error::Config(format!(
            "target {target:?} is not defined for dynamics {}",
            dynamics.as_str()
        ))),
    }
}

const GAUSS2D_MEAN: [f64; 2] = [1.0, -1.0];
const GAUSS2D_COV: [[f64; 2]; 2] = [[1.0, 0.5], [0.5, 2.0]];
// inverse of [[1, 0.5], [0.5, 2]]
const GAUSS2D_PREC: [[f64; 2]; 2] = [
    [8.0 / 7.0, -2.0 / 7.0],
    [-2.0 / 7.0, 4.0 / 7.0],
];

fn gauss2d_drift(w: &ParamVector) -> ParamVector {
    let d0 = w.0[0] - GAUSS2D_MEAN[0];
    let d1 = w.0[1] - GAUSS2D_MEAN[1];
    ParamVector(vec![
        -(GAUSS2D_PREC[0][0] * d0 + GAUSS2D_PREC[0][1] * d1),
        -(GAUSS2D_PREC[1][0] * d0 + GAUSS2D_PREC[1][1] * d1),
    ])
}

struct MomentAccumulator {
    n: f64,
    sum: Vec<f64>,
    cross: Vec<f64>,
    dim: usize,
}

impl MomentAccumulator {
    fn new(dim: usize) -> Self {
        MomentAccumulator {
            n: 0.0,
            sum: vec![0.0; dim],
            cross: vec![0.0; dim * dim],
            dim,
        }
    }

    fn push(&mut self, w: &[f64]) {
        self.n += 1.0;
        for i in 0..self.dim {
            self.sum[i] += w[i];
            for j in 0..self.dim {
                self.cross[i * self.dim + j] += w[i] * w[j];
            }
        }
    }

    fn mean(&self, i: usize) -> f64 {
        self.sum[i] / self.n
    }

    fn cov(&self, i: usize, j: usize) -> f64 {
        self.cross[i * self.dim + j] / self.n - self.mean(i) * self.mean(j)
    }
}

fn verify_gaussian2d(dynamics: Dynamics, config: &VerifyConfig) -> Result<VerificationReport> {
    let root = RngState::new(config.seed);
    let mut acc = MomentAccumulator::new(2);
    for chain in 0..config.chains.max(1) {
        let mut rng = root.fork(chain as u64);
        let mut w = ParamVector(rng.gaussian_vector(2));
        let mut z = ParamVector(vec![0.0, 0.0]);
        if dynamics.is_hamiltonian() {
            let std = config.mass.sqrt();
            for zi in z.0.iter_mut() {
                *zi = std * rng.standard_normal();
            }
        }
        for t in 0..config.burn_in + config.steps {
            if dynamics.is_hamiltonian() {
                sghmc_position_step(&mut w, &z, config.epsilon, config.mass);
                let drift = gauss2d_drift(&w);
                sghmc_momentum_step(
                    &mut z,
                    &drift,
                    config.epsilon,
                    config.friction,
                    config.mass,
                    1.0,
                    &mut rng,
                );
            } else {
                let drift = gauss2d_drift(&w);
                sgld_step(&mut w, &drift, config.epsilon, 1.0, &mut rng);
            }
            if t >= config.burn_in {
                acc.push(&w.0);
            }
        }
    }
    let mut checks = Vec::new();
    for i in 0..2 {
        checks.push(CheckLine::new(
            format!("mean[{i}]"),
            acc.mean(i),
            GAUSS2D_MEAN[i],
            config.mean_tol,
        ));
    }
    for i in 0..2 {
        for j in i..2 {
            checks.push(CheckLine::new(
                format!("cov[{i}][{j}]"),
                acc.cov(i, j),
                GAUSS2D_COV[i][j],
                config.cov_rtol * GAUSS2D_COV[i][j].abs(),
            ));
        }
    }
    Ok(VerificationReport::assemble(
        TractableTarget::Gaussian2d,
        dynamics,
        checks,
    ))
}

/// Fixed design of the conjugate Bayesian linear model: 20 standardized 2-D
/// inputs, noise std 0.5, prior w ~ N(0, I).
struct ConjugateProblem {
    train: Dataset,
    grid: DenseMatrix,
    noise_std: f64,
    post_mean: Vec<f64>,
    post_cov: DenseMatrix,
}

fn conjugate_problem(seed: u64) -> Result<ConjugateProblem> {
    let mut rng = RngState::new(seed ^ 0x5eed);
    let n = 20;
    let noise_std = 0.5;
    let w_true = [0.7, -1.2];
    let rows: Vec<Vec<f64>> = (0..n).map(|_| rng.gaussian_vector(2)).collect();
    let phi = DenseMatrix::from_rows(&rows)?;
    let y: Vec<f64> = (0..n)
        .map(|i| {
            phi.get(i, 0) * w_true[0]
                + phi.get(i, 1) * w_true[1]
                + noise_std * rng.standard_normal()
        })
        .collect();
    let train = Dataset::new(phi.clone(), DenseMatrix::column(&y), "conjugate")?;

    // A = Phi^T Phi / sigma^2 + I, posterior N(A^{-1} Phi^T y / sigma^2, A^{-1})
    let var = noise_std * noise_std;
    let mut a = DenseMatrix::identity(2);
    for i in 0..n {
        for p in 0..2 {
            for q in 0..2 {
                a.set(p, q, a.get(p, q) + phi.get(i, p) * phi.get(i, q) / var);
            }
        }
    }
    let chol = cholesky(&a, 0.0)?;
    let mut b = [0.0; 2];
    for i in 0..n {
        for p in 0..2 {
            b[p] += phi.get(i, p) * y[i] / var;
        }
    }
    let post_mean = solve_spd(&chol.l, &b)?;
    let mut post_cov = DenseMatrix::zeros(2, 2);
    for c in 0..2 {
        let mut e = [0.0; 2];
        e[c] = 1.0;
        let col = solve_spd(&chol.l, &e)?;
        for r in 0..2 {
            post_cov.set(r, c, col[r]);
        }
    }
    let grid = DenseMatrix::from_rows(&[
        vec![-1.0, -1.0],
        vec![-0.5, 1.0],
        vec![0.0, 0.5],
        vec![1.0, -0.5],
        vec![1.5, 1.0],
    ])?;
    Ok(ConjugateProblem {
        train,
        grid,
        noise_std,
        post_mean,
        post_cov,
    })
}

fn conjugate_prior() -> Result<GpPrior> {
    GpPrior::new(
        MeanFn::Zero,
        Kernel::Linear {
            variance: 1.0,
            offset: 0.0,
        },
        0.0,
    )
}

fn verify_conjugate_linear(
    dynamics: Dynamics,
    config: &VerifyConfig,
) -> Result<VerificationReport> {
    let problem = conjugate_problem(config.seed)?;
    let model = LinearNoBiasModel { input_dim: 2 };
    let gp = conjugate_prior()?;
    let factor = gp.factor(&MeasurementSet::new(problem.train.x.clone())?)?;
    let lik = GaussianLikelihood::new(problem.noise_std)?;
    let batch = Minibatch {
        x: &problem.train.x,
        y: &problem.train.y,
        n_total: problem.train.len(),
    };

    let mut rng = RngState::new(config.seed);
    let mut w = ParamVector(vec![0.0, 0.0]);
    let mut z = ParamVector(vec![0.0, 0.0]);
    if dynamics.is_hamiltonian() {
        let std = config.mass.sqrt();
        for zi in z.0.iter_mut() {
            *zi = std * rng.standard_normal();
        }
    }
    let g = problem.grid.rows();
    let mut traces: Vec<Vec<f64>> = vec![Vec::with_capacity(config.steps); g];
    for t in 0..config.burn_in + config.steps {
        if dynamics.is_hamiltonian() {
            sghmc_position_step(&mut w, &z, config.epsilon, config.mass);
            let drift = functional_drift(&model, &w, &batch, &factor, &lik)?;
            sghmc_momentum_step(
                &mut z,
                &drift,
                config.epsilon,
                config.friction,
                config.mass,
                1.0,
                &mut rng,
            );
        } else {
            let drift = functional_drift(&model, &w, &batch, &factor, &lik)?;
            sgld_step(&mut w, &drift, config.epsilon, 1.0, &mut rng);
        }
        if !w.is_finite() {
            return Err(Error::NonFiniteState { iteration: t });
        }
        if t >= config.burn_in {
            for (i, trace) in traces.iter_mut().enumerate() {
                let row = problem.grid.row(i);
                trace.push(row[0] * w.0[0] + row[1] * w.0[1]);
            }
        }
    }

    let mut checks = Vec::new();
    for i in 0..g {
        let row = problem.grid.row(i);
        let exact_mean = row[0] * problem.post_mean[0] + row[1] * problem.post_mean[1];
        let mut exact_var = 0.0;
        for p in 0..2 {
            for q in 0..2 {
                exact_var += row[p] * problem.post_cov.get(p, q) * row[q];
            }
        }
        let trace = &traces[i];
        let n = trace.len() as f64;
        let mean = trace.iter().sum::<f64>() / n;
        let var = trace.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let se = batch_means_se(trace, 50);
        checks.push(CheckLine::new(
            format!("grid_mean[{i}]"),
            mean,
            exact_mean,
            config.mean_se_factor * se,
        ));
        checks.push(CheckLine::new(
            format!("grid_var[{i}]"),
            var,
            exact_var,
            config.var_rtol * exact_var,
        ));
    }
    checks.extend(prior_recovery_checks(&problem, config)?);
    Ok(VerificationReport::assemble(
        TractableTarget::ConjugateLinear,
        dynamics,
        checks,
    ))
}

/// Zero-data case: the drift is the prior gradient alone, so the long-run
/// grid covariance must reproduce the kernel matrix.
fn prior_recovery_checks(
    problem: &ConjugateProblem,
    config: &VerifyConfig,
) -> Result<Vec<CheckLine>> {
    let model = LinearNoBiasModel { input_dim: 2 };
    let gp = conjugate_prior()?;
    let factor = gp.factor(&MeasurementSet::new(problem.train.x.clone())?)?;
    let kernel_grid = kernel_matrix(&gp.kernel, &problem.grid, &problem.grid)?;

    let mut rng = RngState::new(config.seed ^ 0x9e37);
    let mut w = ParamVector(vec![0.0, 0.0]);
    // larger steps are fine against the wide prior
    let eps = 10.0 * config.epsilon;
    let g = problem.grid.rows();
    let mut acc = MomentAccumulator::new(g);
    for t in 0..config.burn_in + config.steps {
        let f_m = model.forward_values(&w, &factor.points)?;
        let cot = factor.grad(&f_m)?;
        let drift = model.vjp(&w, &factor.points, &cot)?;
        sgld_step(&mut w, &drift, eps, 1.0, &mut rng);
        if t >= config.burn_in {
            let fs: Vec<f64> = (0..g)
                .map(|i| {
                    let row = problem.grid.row(i);
                    row[0] * w.0[0] + row[1] * w.0[1]
                })
                .collect();
            acc.push(&fs);
        }
    }
    let mut checks = Vec::new();
    for i in 0..g {
        let kii = kernel_grid.get(i, i);
        checks.push(CheckLine::new(
            format!("prior_grid_var[{i}]"),
            acc.cov(i, i),
            kii,
            config.var_rtol * kii,
        ));
    }
    // one representative off-diagonal entry
    let scale = (kernel_grid.get(0, 0) * kernel_grid.get(1, 1)).sqrt();
    checks.push(CheckLine::new(
        "prior_grid_cov[0][1]",
        acc.cov(0, 1),
        kernel_grid.get(0, 1),
        config.var_rtol * scale,
    ));
    Ok(checks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mlp::ConstantModel;

    #[test]
    fn degenerate_ensemble_has_zero_spread() {
        let model = ConstantModel;
        let samples = vec![ParamVector(vec![1.5]); 4];
        let x = DenseMatrix::column(&[0.0, 1.0, 2.0]);
        let s = predictive_ensemble(&model, &samples, &x, 0.3).unwrap();
        assert_eq!(s.means, vec![1.5; 3]);
        assert_eq!(s.stds_param, vec![0.0; 3]);
        for v in &s.stds_total {
            assert!((v - 0.3).abs() < 1e-15);
        }
        // mixture of identical components is one Gaussian
        let ld = mixture_log_density(&[1.5; 4], 2.0, 0.3);
        let var: f64 = 0.09;
        let single = -0.5 * ((0.5f64 * 0.5 / var) + var.ln() + LOG_2PI);
        assert!((ld - single).abs() < 1e-12);
    }

    #[test]
    fn mixture_density_matches_brute_force() {
        let mut rng = RngState::new(3);
        let fs = rng.gaussian_vector(16);
        let sigma = 0.7;
        for _ in 0..10 {
            let y = rng.standard_normal() * 2.0;
            let var = sigma * sigma;
            let direct: f64 = fs
                .iter()
                .map(|f| (-0.5 * (y - f) * (y - f) / var).exp() / (var * (LOG_2PI).exp()).sqrt())
                .sum::<f64>()
                / fs.len() as f64;
            let ld = mixture_log_density(&fs, y, sigma);
            assert!((ld - direct.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn total_variance_decomposition() {
        let model = ConstantModel;
        let samples = vec![
            ParamVector(vec![0.0]),
            ParamVector(vec![1.0]),
            ParamVector(vec![2.0]),
        ];
        let x = DenseMatrix::column(&[0.0]);
        let s = predictive_ensemble(&model, &samples, &x, 0.4).unwrap();
        let total = s.stds_total[0] * s.stds_total[0];
        let decomposed = s.stds_param[0] * s.stds_param[0] + 0.16;
        assert!((total - decomposed).abs() < 1e-14);
        assert!(s.stds_param[0] >= 0.0 && s.stds_total[0] >= s.stds_param[0]);
    }

    #[test]
    fn empty_sample_set_rejected() {
        let model = ConstantModel;
        let x = DenseMatrix::column(&[0.0]);
        assert!(matches!(
            predictive_ensemble(&model, &[], &x, 1.0),
            Err(Error::EmptySampleSet)
        ));
    }

    #[test]
    fn rmse_hand_case() {
        let r = rmse(&[1.0, 2.0], &[4.0, 6.0]).unwrap();
        assert!((r - (12.5f64).sqrt()).abs() < 1e-14);
        assert!(rmse(&[], &[]).is_err());
    }

    #[test]
    fn nll_single_sample_zero_residual() {
        let model = ConstantModel;
        let samples = vec![ParamVector(vec![2.0])];
        let x = DenseMatrix::column(&[0.0]);
        let v = nll(&model, &samples, &x, &[2.0], 1.0).unwrap();
        assert!((v - 0.5 * LOG_2PI).abs() < 1e-14);
    }

    #[test]
    fn band_export_format() {
        let model = ConstantModel;
        let samples = vec![ParamVector(vec![1.0]), ParamVector(vec![3.0])];
        let x = DenseMatrix::column(&[-1.0, 0.5]);
        let s = predictive_ensemble(&model, &samples, &x, 0.5).unwrap();
        let path = std::env::temp_dir().join(format!("funcmcmc-bands-{}.csv", std::process::id()));
        export_bands(&path, &x, &s).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        std::fs::remove_file(&path).ok();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "x,mean,std_param,std_total");
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("-1,2,1,"));
    }

    #[test]
    fn batch_means_se_iid_scale() {
        let mut rng = RngState::new(8);
        let series = rng.gaussian_vector(10_000);
        let se = batch_means_se(&series, 50);
        let expected = 1.0 / (series.len() as f64).sqrt();
        assert!(se > expected / 2.0 && se < expected * 2.0, "se {se}");
    }

    #[test]
    fn verify_rejects_mismatched_targets() {
        let config = VerifyConfig::default();
        assert!(verify_tractable(TractableTarget::Gaussian2d, Dynamics::Fsgld, &config).is_err());
        assert!(
            verify_tractable(TractableTarget::ConjugateLinear, Dynamics::Sghmc, &config).is_err()
        );
    }

    #[test]
    fn verify_smoke_loose_tolerances_and_forced_fail() {
        let config = VerifyConfig {
            steps: 4000,
            burn_in: 500,
            chains: 8,
            epsilon: 5e-3,
            mean_tol: 0.5,
            cov_rtol: 1.0,
            var_rtol: 1.0,
            ..VerifyConfig::default()
        };
        let report = verify_tractable(TractableTarget::Gaussian2d, Dynamics::Sgld, &config).unwrap();
        assert!(report.pass, "loose-tolerance smoke run failed: {report:?}");
        assert_eq!(report.checks.len(), 5);

        let forced = VerifyConfig {
            mean_tol: 0.0,
            cov_rtol: 0.0,
            ..config
        };
        let report = verify_tractable(TractableTarget::Gaussian2d, Dynamics::Sgld, &forced).unwrap();
        assert!(!report.pass, "zero tolerance must fail");
    }

    #[test]
    fn conjugate_posterior_closed_form_sanity() {
        // the posterior must shrink toward the data fit relative to the prior
        let p = conjugate_problem(0).unwrap();
        assert!(p.post_cov.get(0, 0) < 1.0);
        assert!(p.post_cov.get(1, 1) < 1.0);
        assert!((p.post_cov.get(0, 1) - p.post_cov.get(1, 0)).abs() < 1e-12);
        // with 20 points at noise 0.5 the mean is near the generating weights
        assert!((p.post_mean[0] - 0.7).abs() < 0.5);
        assert!((p.post_mean[1] + 1.2).abs() < 0.5);
    }
}
