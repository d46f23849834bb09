//! Gaussian-process functional prior: kernels, the finite-marginal Gaussian
//! log-density at measurement points with its analytic gradient, and
//! marginal-likelihood pre-training of the hyperparameters.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cholesky, log_det, solve_spd, CholeskyFactor, DenseMatrix};

const LOG_2PI: f64 = 1.8378770664093453;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Kernel {
    Rbf { lengthscale: f64, variance: f64 },
    Matern52 { lengthscale: f64, variance: f64 },
    Linear { variance: f64, offset: f64 },
}

impl Kernel {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Kernel::Rbf { lengthscale, variance } | Kernel::Matern52 { lengthscale, variance } => {
                lengthscale > 0.0 && variance > 0.0
            }
            Kernel::Linear { variance, offset } => variance > 0.0 && offset >= 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config("kernel hyperparameters must be positive".into()))
        }
    }

    pub fn eval(&self, x1: &[f64], x2: &[f64]) -> f64 {
        match *self {
            Kernel::Rbf { lengthscale, variance } => {
                let d2: f64 = x1.iter().zip(x2).map(|(a, b)| (a - b) * (a - b)).sum();
                variance * (-d2 / (2.0 * lengthscale * lengthscale)).exp()
            }
            Kernel::Matern52 { lengthscale, variance } => {
                let d2: f64 = x1.iter().zip(x2).map(|(a, b)| (a - b) * (a - b)).sum();
                let r = d2.sqrt();
                let a = 5.0_f64.sqrt() * r / lengthscale;
                variance * (1.0 + a + a * a / 3.0) * (-a).exp()
            }
            Kernel::Linear { variance, offset } => {
                let dot: f64 = x1.iter().zip(x2).map(|(a, b)| a * b).sum();
                variance * (dot + offset)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum MeanFn {
    Zero,
    Constant { value: f64 },
}

impl MeanFn {
    pub fn value(&self) -> f64 {
        match *self {
            MeanFn::Zero => 0.0,
            MeanFn::Constant { value } => value,
        }
    }
}

/// Finite set of inputs at which the functional prior is marginalized.
#[derive(Debug, Clone)]
pub struct MeasurementSet {
    pub points: DenseMatrix,
}

impl MeasurementSet {
    pub fn new(points: DenseMatrix) -> Result<Self> {
        if points.rows() == 0 {
            return Err(Error::Policy("measurement set must be non-empty".into()));
        }
        Ok(MeasurementSet { points })
    }

    pub fn len(&self) -> usize {
        self.points.rows()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Functional prior P0 ~ GP(m, K).
///
/// `noise_variance` enters only the pre-training marginal likelihood; the
/// prior used inside the samplers is noise-free.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpPrior {
    pub mean: MeanFn,
    pub kernel: Kernel,
    pub noise_variance: f64,
}

impl GpPrior {
    pub fn new(mean: MeanFn, kernel: Kernel, noise_variance: f64) -> Result<Self> {
        kernel.validate()?;
        if noise_variance < 0.0 || !noise_variance.is_finite() {
            return Err(Error::Config("noise variance must be >= 0".into()));
        }
        Ok(GpPrior {
            mean,
            kernel,
            noise_variance,
        })
    }

    pub fn mean_vector(&self, n: usize) -> Vec<f64> {
        vec![self.mean.value(); n]
    }

    /// Cholesky factor of K(X_M, X_M) + j I for repeated gradient solves.
    pub fn factor(&self, x_m: &MeasurementSet) -> Result<PriorFactor> {
        let k = kernel_matrix(&self.kernel, &x_m.points, &x_m.points)?;
        let chol = cholesky(&k, 0.0)?;
        Ok(PriorFactor {
            points: x_m.points.clone(),
            mean: self.mean.value(),
            chol,
        })
    }
}

/// Entry (i,j) = k(x1_i, x2_j).
pub fn kernel_matrix(kernel: &Kernel, x1: &DenseMatrix, x2: &DenseMatrix) -> Result<DenseMatrix> {
    if x1.cols() != x2.cols() {
        return Err(Error::DimensionMismatch(format!(
            "kernel inputs of widths {} and {}",
            x1.cols(),
            x2.cols()
        )));
    }
    let mut k = DenseMatrix::zeros(x1.rows(), x2.rows());
    for i in 0..x1.rows() {
        for j in 0..x2.rows() {
            k.set(i, j, kernel.eval(x1.row(i), x2.row(j)));
        }
    }
    Ok(k)
}

/// Cached factorization of the prior marginal at a fixed measurement set.
#[derive(Debug, Clone)]
pub struct PriorFactor {
    pub points: DenseMatrix,
    pub mean: f64,
    pub chol: CholeskyFactor,
}

impl PriorFactor {
    pub fn len(&self) -> usize {
        self.points.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.rows() == 0
    }

    /// log N(f | m, K + jI), summed over output columns.
    pub fn log_density(&self, f_m: &DenseMatrix) -> Result<f64> {
        let m = self.len();
        if f_m.rows() != m {
            return Err(Error::DimensionMismatch(format!(
                "function values of length {} at {} measurement points",
                f_m.rows(),
                m
            )));
        }
        let ld = log_det(&self.chol.l);
        let mut total = 0.0;
        for c in 0..f_m.cols() {
            let centered: Vec<f64> = (0..m).map(|i| f_m.get(i, c) - self.mean).collect();
            let alpha = solve_spd(&self.chol.l, &centered)?;
            let quad: f64 = centered.iter().zip(&alpha).map(|(a, b)| a * b).sum();
            total += -0.5 * (quad + ld + m as f64 * LOG_2PI);
        }
        Ok(total)
    }

    /// Column-wise gradient -(K + jI)^{-1} (f - m).
    pub fn grad(&self, f_m: &DenseMatrix) -> Result<DenseMatrix> {
        let m = self.len();
        if f_m.rows() != m {
            return Err(Error::DimensionMismatch(format!(
                "function values of length {} at {} measurement points",
                f_m.rows(),
                m
            )));
        }
        let mut g = DenseMatrix::zeros(m, f_m.cols());
        for c in 0..f_m.cols() {
            let centered: Vec<f64> = (0..m).map(|i| f_m.get(i, c) - self.mean).collect();
            let alpha = solve_spd(&self.chol.l, &centered)?;
            for i in 0..m {
                g.set(i, c, -alpha[i]);
            }
        }
        Ok(g)
    }
}

/// log P0(f^{X_M}) for single-output function values.
pub fn prior_log_density(gp: &GpPrior, x_m: &MeasurementSet, f_m: &[f64]) -> Result<f64> {
    gp.factor(x_m)?.log_density(&DenseMatrix::column(f_m))
}

/// Analytic gradient of the prior marginal log-density.
pub fn prior_grad(gp: &GpPrior, x_m: &MeasurementSet, f_m: &[f64]) -> Result<Vec<f64>> {
    let g = gp.factor(x_m)?.grad(&DenseMatrix::column(f_m))?;
    Ok(g.data().to_vec())
}

/// One evaluation of log N(y | m, K + noise I) and its gradient with respect
/// to the log-hyperparameters (and the raw mean constant).
struct MarginalEval {
    log_lik: f64,
    grad: Vec<f64>,
}

fn hyperparams(gp: &GpPrior, train_mean: bool) -> Vec<f64> {
    let mut p = match gp.kernel {
        Kernel::Rbf { lengthscale, variance } | Kernel::Matern52 { lengthscale, variance } => {
            vec![lengthscale.ln(), variance.ln()]
        }
        Kernel::Linear { variance, offset } => vec![variance.ln(), offset.max(1e-12).ln()],
    };
    p.push(gp.noise_variance.max(1e-12).ln());
    if train_mean {
        p.push(gp.mean.value());
    }
    p
}

fn with_hyperparams(gp: &GpPrior, p: &[f64], train_mean: bool) -> GpPrior {
    let kernel = match gp.kernel {
        Kernel::Rbf { .. } => Kernel::Rbf {
            lengthscale: p[0].exp(),
            variance: p[1].exp(),
        },
        Kernel::Matern52 { .. } => Kernel::Matern52 {
            lengthscale: p[0].exp(),
            variance: p[1].exp(),
        },
        Kernel::Linear { .. } => Kernel::Linear {
            variance: p[0].exp(),
            offset: p[1].exp(),
        },
    };
    let mean = if train_mean {
        MeanFn::Constant { value: p[3] }
    } else {
        gp.mean
    };
    GpPrior {
        mean,
        kernel,
        noise_variance: p[2].exp(),
    }
}

/// dK/d(log theta) for the two kernel hyperparameters, evaluated entrywise.
fn kernel_param_derivs(kernel: &Kernel, x1: &[f64], x2: &[f64]) -> [f64; 2] {
    match *kernel {
        Kernel::Rbf { lengthscale, variance } => {
            let d2: f64 = x1.iter().zip(x2).map(|(a, b)| (a - b) * (a - b)).sum();
            let k = variance * (-d2 / (2.0 * lengthscale * lengthscale)).exp();
            // d/dlog(l) and d/dlog(variance)
            [k * d2 / (lengthscale * lengthscale), k]
        }
        Kernel::Matern52 { lengthscale, variance } => {
            let d2: f64 = x1.iter().zip(x2).map(|(a, b)| (a - b) * (a - b)).sum();
            let r = d2.sqrt();
            let a = 5.0_f64.sqrt() * r / lengthscale;
            let e = (-a).exp();
            let k = variance * (1.0 + a + a * a / 3.0) * e;
            // d k / d log(l) = variance * e^{-a} * a^2 (1 + a) / 3
            [variance * e * a * a * (1.0 + a) / 3.0, k]
        }
        Kernel::Linear { variance, offset } => {
            let dot: f64 = x1.iter().zip(x2).map(|(a, b)| a * b).sum();
            // order matches hyperparams(): [log variance, log offset]
            [variance * (dot + offset), variance * offset]
        }
    }
}

fn marginal_eval(gp: &GpPrior, x: &DenseMatrix, y: &[f64], train_mean: bool) -> Result<MarginalEval> {
    let n = x.rows();
    let mut ky = kernel_matrix(&gp.kernel, x, x)?;
    for i in 0..n {
        ky.set(i, i, ky.get(i, i) + gp.noise_variance);
    }
    let f = cholesky(&ky, 0.0)?;
    let mean = gp.mean.value();
    let centered: Vec<f64> = y.iter().map(|v| v - mean).collect();
    let alpha = solve_spd(&f.l, &centered)?;
    let quad: f64 = centered.iter().zip(&alpha).map(|(a, b)| a * b).sum();
    let log_lik = -0.5 * (quad + log_det(&f.l) + n as f64 * LOG_2PI);
    if !log_lik.is_finite() {
        return Err(Error::NonFiniteLoss(format!(
            "marginal likelihood is {log_lik}"
        )));
    }

    // K_y^{-1} columns for the trace terms
    let mut kinv = DenseMatrix::zeros(n, n);
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        let col = solve_spd(&f.l, &e)?;
        for i in 0..n {
            kinv.set(i, j, col[i]);
        }
    }

    // dL/dtheta = 1/2 alpha^T dK alpha - 1/2 tr(K_y^{-1} dK)
    let mut g_kernel = [0.0; 2];
    for i in 0..n {
        for j in 0..n {
            let d = kernel_param_derivs(&gp.kernel, x.row(i), x.row(j));
            let w = 0.5 * (alpha[i] * alpha[j] - kinv.get(i, j));
            g_kernel[0] += w * d[0];
            g_kernel[1] += w * d[1];
        }
    }
    // dK_y/dlog(noise) = noise * I
    let mut g_noise = 0.0;
    for i in 0..n {
        g_noise += 0.5 * (alpha[i] * alpha[i] - kinv.get(i, i)) * gp.noise_variance;
    }
    let mut grad = vec![g_kernel[0], g_kernel[1], g_noise];
    if train_mean {
        grad.push(alpha.iter().sum());
    }
    Ok(MarginalEval { log_lik, grad })
}

/// Marginal likelihood of a single-output dataset under the prior with
/// observation noise; exposed for diagnostics and tests.
pub fn log_marginal_likelihood(gp: &GpPrior, x: &DenseMatrix, y: &[f64]) -> Result<f64> {
    Ok(marginal_eval(gp, x, y, false)?.log_lik)
}

/// Gradient ascent on log-hyperparameters of log N(y | m(X), K + noise I).
///
/// Steps that would decrease the objective are backtracked, so the returned
/// trace is non-decreasing up to 1e-9 and the final prior is never worse than
/// the initial one. Gradients are clipped at norm 10.
pub fn pretrain(
    gp: &GpPrior,
    x: &DenseMatrix,
    y: &[f64],
    epochs: usize,
    lr: f64,
) -> Result<(GpPrior, Vec<f64>)> {
    if x.rows() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} inputs with {} targets",
            x.rows(),
            y.len()
        )));
    }
    let train_mean = matches!(gp.mean, MeanFn::Constant { .. });
    let mut params = hyperparams(gp, train_mean);
    let mut current = marginal_eval(gp, x, y, train_mean)?;
    let mut trace = vec![current.log_lik];
    for _ in 0..epochs {
        let mut grad = current.grad.clone();
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if norm > 10.0 {
            for g in &mut grad {
                *g *= 10.0 / norm;
            }
        }
        let mut step = lr;
        let mut accepted = false;
        for _ in 0..30 {
            let proposal: Vec<f64> = params.iter().zip(&grad).map(|(p, g)| p + step * g).collect();
            let cand_gp = with_hyperparams(gp, &proposal, train_mean);
            match marginal_eval(&cand_gp, x, y, train_mean) {
                Ok(eval) if eval.log_lik >= current.log_lik - 1e-9 => {
                    params = proposal;
                    current = eval;
                    accepted = true;
                    break;
                }
                _ => step *= 0.5,
            }
        }
        trace.push(current.log_lik);
        if !accepted {
            break;
        }
    }
    // pad the trace so callers can rely on epochs+1 entries
    while trace.len() < epochs + 1 {
        trace.push(current.log_lik);
    }
    Ok((with_hyperparams(gp, &params, train_mean), trace))
}
