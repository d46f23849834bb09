//! Gaussian likelihood and the stochastic potential-energy drifts in both
//! function space and parameter space.

use crate::error::{Error, Result};
use crate::gp::PriorFactor;
use crate::linalg::DenseMatrix;
use crate::mlp::{Model, ParamVector};

const LOG_2PI: f64 = 1.8378770664093453;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianLikelihood {
    pub noise_std: f64,
}

impl GaussianLikelihood {
    pub fn new(noise_std: f64) -> Result<Self> {
        if !(noise_std.is_finite() && noise_std > 0.0) {
            return Err(Error::Config("likelihood noise std must be positive".into()));
        }
        Ok(GaussianLikelihood { noise_std })
    }

    /// sum_{i,a} log N(y_{i,a} | f_{i,a}, sigma^2)
    pub fn log_likelihood(&self, f: &DenseMatrix, y: &DenseMatrix) -> Result<f64> {
        check_shapes(f, y)?;
        let var = self.noise_std * self.noise_std;
        let mut total = 0.0;
        for (fv, yv) in f.data().iter().zip(y.data()) {
            let r = yv - fv;
            total += -0.5 * (r * r / var + var.ln() + LOG_2PI);
        }
        Ok(total)
    }

    pub fn log_density_scalar(&self, f: f64, y: f64) -> f64 {
        let var = self.noise_std * self.noise_std;
        let r = y - f;
        -0.5 * (r * r / var + var.ln() + LOG_2PI)
    }
}

/// Isotropic Gaussian prior over the flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamPrior {
    pub variance: f64,
}

impl ParamPrior {
    pub fn new(variance: f64) -> Result<Self> {
        if !(variance.is_finite() && variance > 0.0) {
            return Err(Error::Config("parameter prior variance must be positive".into()));
        }
        Ok(ParamPrior { variance })
    }

    pub fn log_density(&self, w: &ParamVector) -> f64 {
        let k = w.len() as f64;
        -0.5 * (w.dot(w) / self.variance + k * (self.variance.ln() + LOG_2PI))
    }
}

fn check_shapes(f: &DenseMatrix, y: &DenseMatrix) -> Result<()> {
    if f.rows() != y.rows() || f.cols() != y.cols() {
        return Err(Error::DimensionMismatch(format!(
            "function values {}x{} against targets {}x{}",
            f.rows(),
            f.cols(),
            y.rows(),
            y.cols()
        )));
    }
    Ok(())
}

/// Entry (i,a) = (y_{i,a} - f_{i,a}) / sigma^2.
pub fn grad_loglik_wrt_f(
    lik: &GaussianLikelihood,
    f: &DenseMatrix,
    y: &DenseMatrix,
) -> Result<DenseMatrix> {
    check_shapes(f, y)?;
    let var = lik.noise_std * lik.noise_std;
    let mut g = DenseMatrix::zeros(f.rows(), f.cols());
    for (out, (fv, yv)) in g.data_mut().iter_mut().zip(f.data().iter().zip(y.data())) {
        *out = (yv - fv) / var;
    }
    Ok(g)
}

/// A minibatch with the full-dataset size used for gradient rescaling.
#[derive(Debug, Clone)]
pub struct Minibatch<'a> {
    pub x: &'a DenseMatrix,
    pub y: &'a DenseMatrix,
    pub n_total: usize,
}

impl<'a> Minibatch<'a> {
    pub fn scale(&self) -> f64 {
        self.n_total as f64 / self.x.rows() as f64
    }
}

/// Function-space drift routed back to parameters, assembled as two VJPs:
/// the rescaled likelihood gradient backpropagated from the minibatch points
/// plus the analytic prior gradient backpropagated from the measurement
/// points.
pub fn functional_drift<M: Model>(
    model: &M,
    w: &ParamVector,
    batch: &Minibatch,
    factor: &PriorFactor,
    lik: &GaussianLikelihood,
) -> Result<ParamVector> {
    if batch.x.rows() == 0 || batch.n_total < batch.x.rows() {
        return Err(Error::DimensionMismatch(
            "minibatch must be non-empty and no larger than the dataset".into(),
        ));
    }
    let f_batch = model.forward_values(w, batch.x)?;
    let mut cot = grad_loglik_wrt_f(lik, &f_batch, batch.y)?;
    let scale = batch.scale();
    for v in cot.data_mut() {
        *v *= scale;
    }
    let mut drift = model.vjp(w, batch.x, &cot)?;

    let f_m = model.forward_values(w, &factor.points)?;
    let prior_cot = factor.grad(&f_m)?;
    drift.add_scaled(&model.vjp(w, &factor.points, &prior_cot)?, 1.0);
    Ok(drift)
}

/// Parameter-space drift -grad U(w) with an isotropic Gaussian prior.
pub fn param_drift<M: Model>(
    model: &M,
    w: &ParamVector,
    batch: &Minibatch,
    prior: &ParamPrior,
    lik: &GaussianLikelihood,
) -> Result<ParamVector> {
    if batch.x.rows() == 0 || batch.n_total < batch.x.rows() {
        return Err(Error::DimensionMismatch(
            "minibatch must be non-empty and no larger than the dataset".into(),
        ));
    }
    let f_batch = model.forward_values(w, batch.x)?;
    let mut cot = grad_loglik_wrt_f(lik, &f_batch, batch.y)?;
    let scale = batch.scale();
    for v in cot.data_mut() {
        *v *= scale;
    }
    let mut drift = model.vjp(w, batch.x, &cot)?;
    drift.add_scaled(w, -1.0 / prior.variance);
    Ok(drift)
}

/// Stochastic log-posterior surrogate in function space: rescaled minibatch
/// log-likelihood plus the prior marginal log-density at the measurement
/// points. Recorded as a per-iteration diagnostic.
pub fn functional_log_posterior<M: Model>(
    model: &M,
    w: &ParamVector,
    batch: &Minibatch,
    factor: &PriorFactor,
    lik: &GaussianLikelihood,
) -> Result<f64> {
    let f_batch = model.forward_values(w, batch.x)?;
    let ll = lik.log_likelihood(&f_batch, batch.y)? * batch.scale();
    let f_m = model.forward_values(w, &factor.points)?;
    Ok(ll + factor.log_density(&f_m)?)
}

/// Parameter-space counterpart of [`functional_log_posterior`].
pub fn param_log_posterior<M: Model>(
    model: &M,
    w: &ParamVector,
    batch: &Minibatch,
    prior: &ParamPrior,
    lik: &GaussianLikelihood,
) -> Result<f64> {
    let f_batch = model.forward_values(w, batch.x)?;
    Ok(lik.log_likelihood(&f_batch, batch.y)? * batch.scale() + prior.log_density(w))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::{GpPrior, Kernel, MeanFn, MeasurementSet};
    use crate::mlp::{Activation, ConstantModel, MlpArchitecture};
    use crate::rng::RngState;

    #[test]
    fn grad_zero_at_fit_and_unit_variance() {
        let lik = GaussianLikelihood::new(1.0).unwrap();
        let f = DenseMatrix::column(&[1.0, -0.5]);
        let g = grad_loglik_wrt_f(&lik, &f, &f).unwrap();
        assert!(g.data().iter().all(|&v| v == 0.0));
        let y = DenseMatrix::column(&[2.0]);
        let f0 = DenseMatrix::column(&[0.0]);
        let g = grad_loglik_wrt_f(&lik, &f0, &y).unwrap();
        assert_eq!(g.get(0, 0), 2.0);
    }

    #[test]
    fn grad_matches_finite_differences() {
        let lik = GaussianLikelihood::new(0.7).unwrap();
        let mut rng = RngState::new(4);
        let f = DenseMatrix::new(3, 2, rng.gaussian_vector(6)).unwrap();
        let y = DenseMatrix::new(3, 2, rng.gaussian_vector(6)).unwrap();
        let g = grad_loglik_wrt_f(&lik, &f, &y).unwrap();
        let eps = 1e-6;
        for i in 0..3 {
            for a in 0..2 {
                let mut fp = f.clone();
                fp.set(i, a, f.get(i, a) + eps);
                let mut fm = f.clone();
                fm.set(i, a, f.get(i, a) - eps);
                let fd = (lik.log_likelihood(&fp, &y).unwrap()
                    - lik.log_likelihood(&fm, &y).unwrap())
                    / (2.0 * eps);
                let rel = (fd - g.get(i, a)).abs() / g.get(i, a).abs().max(1e-8);
                assert!(rel <= 1e-6, "({i},{a}) rel {rel}");
            }
        }
    }

    fn gp_marginal(variance: f64) -> (GpPrior, MeasurementSet) {
        let gp = GpPrior::new(
            MeanFn::Zero,
            Kernel::Rbf {
                lengthscale: 1.0,
                variance,
            },
            0.0,
        )
        .unwrap();
        let xm = MeasurementSet::new(DenseMatrix::column(&[0.0])).unwrap();
        (gp, xm)
    }

    #[test]
    fn constant_model_reduction_matches_param_drift() {
        // f(x; w) = w with a single measurement point and GP marginal
        // N(0, sp2) reduces algebraically to the parameter-space drift with
        // prior N(0, sp2).
        let model = ConstantModel;
        let mut rng = RngState::new(6);
        for _ in 0..10 {
            let sigma = rng.uniform(0.2, 1.5);
            let sp2 = rng.uniform(0.3, 2.0);
            let w = ParamVector(vec![rng.standard_normal()]);
            let xs = DenseMatrix::column(&rng.gaussian_vector(4));
            let ys = DenseMatrix::column(&rng.gaussian_vector(4));
            let batch = Minibatch {
                x: &xs,
                y: &ys,
                n_total: 8,
            };
            let lik = GaussianLikelihood::new(sigma).unwrap();
            let (gp, xm) = gp_marginal(sp2);
            let factor = gp.factor(&xm).unwrap();
            let fd = functional_drift(&model, &w, &batch, &factor, &lik).unwrap();
            let pd = param_drift(
                &model,
                &w,
                &batch,
                &ParamPrior::new(sp2).unwrap(),
                &lik,
            )
            .unwrap();
            assert!(
                (fd.0[0] - pd.0[0]).abs() <= 1e-12 * pd.0[0].abs().max(1.0),
                "reduction mismatch: {} vs {}",
                fd.0[0],
                pd.0[0]
            );
            // explicit closed form
            let expect = 2.0 * (ys.data().iter().sum::<f64>() - 4.0 * w.0[0]) / (sigma * sigma)
                - w.0[0] / sp2;
            assert!((fd.0[0] - expect).abs() <= 1e-10 * expect.abs().max(1.0));
        }
    }

    #[test]
    fn zero_residual_zero_drift() {
        let model = ConstantModel;
        let w = ParamVector(vec![0.0]);
        let xs = DenseMatrix::column(&[0.1, 0.2]);
        let ys = DenseMatrix::column(&[0.0, 0.0]);
        let batch = Minibatch {
            x: &xs,
            y: &ys,
            n_total: 2,
        };
        let lik = GaussianLikelihood::new(0.5).unwrap();
        let (gp, xm) = gp_marginal(1.0);
        let factor = gp.factor(&xm).unwrap();
        let d = functional_drift(&model, &w, &batch, &factor, &lik).unwrap();
        assert!(d.0[0].abs() < 1e-15);
    }

    #[test]
    fn halves_average_to_full_batch_likelihood() {
        let arch = MlpArchitecture::new(vec![1, 5, 1], Activation::Tanh).unwrap();
        let mut rng = RngState::new(9);
        let w = ParamVector(rng.gaussian_vector(arch.param_count()));
        let xs = DenseMatrix::column(&rng.gaussian_vector(6));
        let ys = DenseMatrix::column(&rng.gaussian_vector(6));
        let lik = GaussianLikelihood::new(0.5).unwrap();
        let prior = ParamPrior::new(1.0).unwrap();
        let full = param_drift(
            &arch,
            &w,
            &Minibatch {
                x: &xs,
                y: &ys,
                n_total: 6,
            },
            &prior,
            &lik,
        )
        .unwrap();
        let x1 = DenseMatrix::column(&xs.data()[..3]);
        let y1 = DenseMatrix::column(&ys.data()[..3]);
        let x2 = DenseMatrix::column(&xs.data()[3..]);
        let y2 = DenseMatrix::column(&ys.data()[3..]);
        let h1 = param_drift(
            &arch,
            &w,
            &Minibatch {
                x: &x1,
                y: &y1,
                n_total: 6,
            },
            &prior,
            &lik,
        )
        .unwrap();
        let h2 = param_drift(
            &arch,
            &w,
            &Minibatch {
                x: &x2,
                y: &y2,
                n_total: 6,
            },
            &prior,
            &lik,
        )
        .unwrap();
        for ((f, a), b) in full.0.iter().zip(&h1.0).zip(&h2.0) {
            assert!((f - (a + b) / 2.0).abs() < 1e-10, "{f} vs {}", (a + b) / 2.0);
        }
    }

    #[test]
    fn param_drift_linear_model_closed_form() {
        // [p,1] identity net: drift = (N/n) X^T r / sigma^2 (+ bias term) - w/var
        let arch = MlpArchitecture::new(vec![2, 1], Activation::Identity).unwrap();
        let mut rng = RngState::new(13);
        let w = ParamVector(rng.gaussian_vector(3));
        let xs: Vec<Vec<f64>> = (0..5).map(|_| rng.gaussian_vector(2)).collect();
        let x = DenseMatrix::from_rows(&xs).unwrap();
        let y = DenseMatrix::column(&rng.gaussian_vector(5));
        let lik = GaussianLikelihood::new(0.8).unwrap();
        let prior = ParamPrior::new(2.0).unwrap();
        let d = param_drift(
            &arch,
            &w,
            &Minibatch {
                x: &x,
                y: &y,
                n_total: 5,
            },
            &prior,
            &lik,
        )
        .unwrap();
        let var = 0.8 * 0.8;
        let resid: Vec<f64> = (0..5)
            .map(|i| y.get(i, 0) - (xs[i][0] * w.0[0] + xs[i][1] * w.0[1] + w.0[2]))
            .collect();
        for j in 0..2 {
            let expect: f64 =
                resid.iter().zip(&xs).map(|(r, row)| r * row[j] / var).sum::<f64>() - w.0[j] / 2.0;
            assert!((d.0[j] - expect).abs() < 1e-10);
        }
        let expect_b: f64 = resid.iter().map(|r| r / var).sum::<f64>() - w.0[2] / 2.0;
        assert!((d.0[2] - expect_b).abs() < 1e-10);
    }

    #[test]
    fn functional_drift_matches_finite_differences_of_energy() {
        let arch = MlpArchitecture::new(vec![1, 8, 1], Activation::Tanh).unwrap();
        let mut rng = RngState::new(15);
        let w = ParamVector(rng.gaussian_vector(arch.param_count()));
        let xs = DenseMatrix::column(&rng.gaussian_vector(5));
        let ys = DenseMatrix::column(&rng.gaussian_vector(5));
        let gp = GpPrior::new(
            MeanFn::Zero,
            Kernel::Rbf {
                lengthscale: 0.7,
                variance: 1.0,
            },
            0.0,
        )
        .unwrap();
        let xm = MeasurementSet::new(DenseMatrix::column(&[-0.5, 0.0, 0.8])).unwrap();
        let factor = gp.factor(&xm).unwrap();
        let lik = GaussianLikelihood::new(0.6).unwrap();
        let batch = Minibatch {
            x: &xs,
            y: &ys,
            n_total: 10,
        };
        let drift = functional_drift(&arch, &w, &batch, &factor, &lik).unwrap();
        // drift must equal +grad of the log-posterior surrogate
        let eps = 1e-5;
        let mut dir = ParamVector(rng.gaussian_vector(arch.param_count()));
        dir.scale(1.0 / dir.norm());
        let mut wp = w.clone();
        wp.add_scaled(&dir, eps);
        let mut wm = w.clone();
        wm.add_scaled(&dir, -eps);
        let lp = functional_log_posterior(&arch, &wp, &batch, &factor, &lik).unwrap();
        let lm = functional_log_posterior(&arch, &wm, &batch, &factor, &lik).unwrap();
        let fd = (lp - lm) / (2.0 * eps);
        let analytic = drift.dot(&dir);
        let rel = (fd - analytic).abs() / analytic.abs().max(1e-10);
        assert!(rel <= 1e-5, "fd {fd} vs analytic {analytic}");
    }

    #[test]
    fn doubling_n_doubles_likelihood_term_only() {
        let model = ConstantModel;
        let w = ParamVector(vec![0.4]);
        let xs = DenseMatrix::column(&[0.0, 1.0]);
        let ys = DenseMatrix::column(&[1.0, 2.0]);
        let lik = GaussianLikelihood::new(1.0).unwrap();
        let (gp, xm) = gp_marginal(1.0);
        let factor = gp.factor(&xm).unwrap();
        let d1 = functional_drift(
            &model,
            &w,
            &Minibatch {
                x: &xs,
                y: &ys,
                n_total: 2,
            },
            &factor,
            &lik,
        )
        .unwrap();
        let d2 = functional_drift(
            &model,
            &w,
            &Minibatch {
                x: &xs,
                y: &ys,
                n_total: 4,
            },
            &factor,
            &lik,
        )
        .unwrap();
        // prior contribution is -w (variance 1, one point); likelihood doubles
        let lik1 = d1.0[0] + w.0[0];
        let lik2 = d2.0[0] + w.0[0];
        assert!((lik2 - 2.0 * lik1).abs() < 1e-10);
    }
}
