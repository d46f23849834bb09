//! Stochastic-gradient MCMC dynamics: SGLD and SGHMC in parameter space and
//! their function-space counterparts fSGLD and fSGHMC, plus the chain runner
//! and the on-disk sample format.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{draw_measurement_set, Dataset, MeasurementPolicy, Minibatcher};
use crate::error::{Error, Result};
use crate::gp::{GpPrior, MeasurementSet, PriorFactor};
use crate::likelihood::{
    functional_drift, functional_log_posterior, param_drift, param_log_posterior,
    GaussianLikelihood, Minibatch, ParamPrior,
};
use crate::mlp::{Model, ParamVector};
use crate::rng::RngState;

/// Staircase decay: epsilon_t = epsilon0 * gamma^floor(t / period).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepSchedule {
    pub epsilon0: f64,
    pub gamma: f64,
    pub period: usize,
}

impl StepSchedule {
    pub fn new(epsilon0: f64, gamma: f64, period: usize) -> Result<Self> {
        if !(epsilon0.is_finite() && epsilon0 > 0.0) {
            return Err(Error::Config("initial step size must be positive".into()));
        }
        if !(gamma.is_finite() && gamma > 0.0 && gamma <= 1.0) {
            return Err(Error::Config("decay factor must be in (0, 1]".into()));
        }
        if period == 0 {
            return Err(Error::Config("decay period must be positive".into()));
        }
        Ok(StepSchedule {
            epsilon0,
            gamma,
            period,
        })
    }

    pub fn constant(epsilon: f64) -> Result<Self> {
        StepSchedule::new(epsilon, 1.0, 1)
    }

    pub fn step_size(&self, t: usize) -> f64 {
        self.epsilon0 * self.gamma.powi((t / self.period) as i32)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dynamics {
    Sgld,
    Sghmc,
    Fsgld,
    Fsghmc,
}

impl Dynamics {
    pub fn is_functional(self) -> bool {
        matches!(self, Dynamics::Fsgld | Dynamics::Fsghmc)
    }

    pub fn is_hamiltonian(self) -> bool {
        matches!(self, Dynamics::Sghmc | Dynamics::Fsghmc)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Dynamics::Sgld => "sgld",
            Dynamics::Sghmc => "sghmc",
            Dynamics::Fsgld => "fsgld",
            Dynamics::Fsghmc => "fsghmc",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "sgld" => Ok(Dynamics::Sgld),
            "sghmc" => Ok(Dynamics::Sghmc),
            "fsgld" => Ok(Dynamics::Fsgld),
            "fsghmc" => Ok(Dynamics::Fsghmc),
            other => Err(Error::Config(format!("unknown dynamics {other:?}"))),
        }
    }
}

fn default_noise_scale() -> f64 {
    1.0
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub burn_in: usize,
    pub num_samples: usize,
    pub thin_interval: usize,
    pub minibatch_size: usize,
    /// Friction C of the underdamped dynamics (ignored by the Langevin
    /// variants).
    pub friction: f64,
    /// Scalar mass: the preconditioner is M = mass * I.
    pub mass: f64,
    pub leapfrog_steps: usize,
    /// Test hook: 0 turns the dynamics into deterministic gradient flow.
    #[serde(default = "default_noise_scale")]
    pub noise_scale: f64,
    #[serde(default = "default_true")]
    pub record_diagnostics: bool,
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_samples == 0 {
            return Err(Error::Config("num_samples must be positive".into()));
        }
        if self.thin_interval == 0 {
            return Err(Error::Config("thin_interval must be positive".into()));
        }
        if self.minibatch_size == 0 {
            return Err(Error::Config("minibatch_size must be positive".into()));
        }
        if !(self.friction.is_finite() && self.friction >= 0.0) {
            return Err(Error::Config("friction must be >= 0".into()));
        }
        if !(self.mass.is_finite() && self.mass > 0.0) {
            return Err(Error::Config("mass must be positive".into()));
        }
        if self.leapfrog_steps == 0 {
            return Err(Error::Config("leapfrog_steps must be positive".into()));
        }
        if !(self.noise_scale.is_finite() && self.noise_scale >= 0.0) {
            return Err(Error::Config("noise_scale must be >= 0".into()));
        }
        Ok(())
    }

    pub fn total_iterations(&self) -> usize {
        self.burn_in + self.num_samples * self.thin_interval
    }
}

/// Overdamped Langevin update with a precomputed drift vector:
/// w += eps * drift + sqrt(2 eps) * N(0, I).
pub fn sgld_step(
    w: &mut ParamVector,
    drift: &ParamVector,
    eps: f64,
    noise_scale: f64,
    rng: &mut RngState,
) {
    let sigma = noise_scale * (2.0 * eps).sqrt();
    for (wi, di) in w.0.iter_mut().zip(&drift.0) {
        *wi += eps * di + sigma * rng.standard_normal();
    }
}

/// Momentum half of the underdamped update with a precomputed drift vector:
/// z += eps * drift - eps * C * z / mass + sqrt(2 C eps) * N(0, I).
pub fn sghmc_momentum_step(
    z: &mut ParamVector,
    drift: &ParamVector,
    eps: f64,
    friction: f64,
    mass: f64,
    noise_scale: f64,
    rng: &mut RngState,
) {
    let sigma = noise_scale * (2.0 * friction * eps).sqrt();
    for (zi, di) in z.0.iter_mut().zip(&drift.0) {
        *zi += eps * di - eps * friction * *zi / mass + sigma * rng.standard_normal();
    }
}

/// Position half of the underdamped update: w += eps * z / mass.
pub fn sghmc_position_step(w: &mut ParamVector, z: &ParamVector, eps: f64, mass: f64) {
    for (wi, zi) in w.0.iter_mut().zip(&z.0) {
        *wi += eps * zi / mass;
    }
}

/// Prior side of a chain: a Gaussian over parameters or a GP over functions
/// evaluated at freshly drawn measurement points.
pub enum PriorSpec<'a> {
    Param(ParamPrior),
    Functional {
        gp: &'a GpPrior,
        policy: MeasurementPolicy,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagnosticRow {
    pub iteration: usize,
    pub step_size: f64,
    pub log_posterior: f64,
}

pub struct ChainOutput {
    pub samples: SampleSet,
    pub diagnostics: Vec<DiagnosticRow>,
}

/// Either a cached factorization (fixed measurement plan) or the GP itself,
/// refactored at every gradient evaluation on a fresh draw.
enum FactorSource<'a> {
    Cached(PriorFactor),
    Redraw {
        gp: &'a GpPrior,
        policy: MeasurementPolicy,
    },
}

impl<'a> FactorSource<'a> {
    fn build(
        gp: &'a GpPrior,
        policy: &MeasurementPolicy,
        train: &Dataset,
        rng: &mut RngState,
    ) -> Result<Self> {
        if policy.is_fixed_full_train(train.len()) {
            let set = draw_measurement_set(policy, &train.x, rng)?;
            Ok(FactorSource::Cached(gp.factor(&set)?))
        } else {
            Ok(FactorSource::Redraw {
                gp,
                policy: policy.clone(),
            })
        }
    }

    fn next(&self, train: &Dataset, rng: &mut RngState) -> Result<PriorFactor> {
        match self {
            FactorSource::Cached(f) => Ok(f.clone()),
            FactorSource::Redraw { gp, policy } => {
                let set = draw_measurement_set(policy, &train.x, rng)?;
                gp.factor(&set)
            }
        }
    }
}

/// Run one chain of the requested dynamics and return thinned posterior
/// samples plus per-iteration diagnostics. The chain aborts with the failing
/// iteration index if the state leaves the finite range.
pub fn run_chain<M: Model>(
    model: &M,
    dynamics: Dynamics,
    train: &Dataset,
    lik: GaussianLikelihood,
    prior: &PriorSpec,
    config: &SamplerConfig,
    schedule: &StepSchedule,
    w0: ParamVector,
    rng: &mut RngState,
) -> Result<ChainOutput> {
    config.validate()?;
    if w0.len() != model.param_count() {
        return Err(Error::DimensionMismatch(format!(
            "initial state of length {} for a model with {} parameters",
            w0.len(),
            model.param_count()
        )));
    }
    match (dynamics.is_functional(), prior) {
        (true, PriorSpec::Param(_)) => {
            return Err(Error::Config(
                "functional dynamics need a GP prior".into(),
            ))
        }
        (false, PriorSpec::Functional { .. }) => {
            return Err(Error::Config(
                "parameter-space dynamics need a parameter prior".into(),
            ))
        }
        _ => {}
    }

    let factor_source = match prior {
        PriorSpec::Functional { gp, policy } => {
            Some(FactorSource::build(gp, policy, train, rng)?)
        }
        PriorSpec::Param(_) => None,
    };
    let mut batcher = Minibatcher::new(train.x.clone(), train.y.clone(), config.minibatch_size);
    let n_total = train.len();
    let seed = rng.seed();

    let mut w = w0;
    let mut z = ParamVector::zeros(w.len());
    let mut samples = Vec::with_capacity(config.num_samples);
    let mut diagnostics = Vec::new();
    let total = config.total_iterations();

    for t in 0..total {
        let eps = schedule.step_size(t);

        if dynamics.is_hamiltonian() {
            let std = config.noise_scale * config.mass.sqrt();
            for zi in z.0.iter_mut() {
                *zi = std * rng.standard_normal();
            }
            for _ in 0..config.leapfrog_steps {
                sghmc_position_step(&mut w, &z, eps, config.mass);
                let (bx, by) = batcher.next_batch(rng);
                let batch = Minibatch {
                    x: &bx,
                    y: &by,
                    n_total,
                };
                let (drift, factor) =
                    eval_drift(model, &w, &batch, prior, &factor_source, train, lik, rng)?;
                sghmc_momentum_step(
                    &mut z,
                    &drift,
                    eps,
                    config.friction,
                    config.mass,
                    config.noise_scale,
                    rng,
                );
                if config.record_diagnostics {
                    record_row(
                        model,
                        &w,
                        &batch,
                        prior,
                        factor.as_ref(),
                        lik,
                        t,
                        eps,
                        &mut diagnostics,
                    )?;
                }
            }
        } else {
            let (bx, by) = batcher.next_batch(rng);
            let batch = Minibatch {
                x: &bx,
                y: &by,
                n_total,
            };
            let (drift, factor) =
                eval_drift(model, &w, &batch, prior, &factor_source, train, lik, rng)?;
            sgld_step(&mut w, &drift, eps, config.noise_scale, rng);
            if config.record_diagnostics {
                record_row(
                    model,
                    &w,
                    &batch,
                    prior,
                    factor.as_ref(),
                    lik,
                    t,
                    eps,
                    &mut diagnostics,
                )?;
            }
        }

        if !w.is_finite() {
            return Err(Error::NonFiniteState { iteration: t });
        }
        if t >= config.burn_in && (t - config.burn_in + 1) % config.thin_interval == 0 {
            samples.push(w.clone());
        }
    }

    Ok(ChainOutput {
        samples: SampleSet {
            dynamics,
            seed,
            param_dim: model.param_count(),
            samples,
        },
        diagnostics,
    })
}

#[allow(clippy::too_many_arguments)]
fn eval_drift<M: Model>(
    model: &M,
    w: &ParamVector,
    batch: &Minibatch,
    prior: &PriorSpec,
    factor_source: &Option<FactorSource>,
    train: &Dataset,
    lik: GaussianLikelihood,
    rng: &mut RngState,
) -> Result<(ParamVector, Option<PriorFactor>)> {
    match prior {
        PriorSpec::Param(p) => Ok((param_drift(model, w, batch, p, &lik)?, None)),
        PriorSpec::Functional { .. } => {
            let factor = factor_source
                .as_ref()
                .expect("functional chains always build a factor source")
                .next(train, rng)?;
            let drift = functional_drift(model, w, batch, &factor, &lik)?;
            Ok((drift, Some(factor)))
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn record_row<M: Model>(
    model: &M,
    w: &ParamVector,
    batch: &Minibatch,
    prior: &PriorSpec,
    factor: Option<&PriorFactor>,
    lik: GaussianLikelihood,
    t: usize,
    eps: f64,
    diagnostics: &mut Vec<DiagnosticRow>,
) -> Result<()> {
    let log_posterior = match (prior, factor) {
        (PriorSpec::Param(p), _) => param_log_posterior(model, w, batch, p, &lik)?,
        (PriorSpec::Functional { .. }, Some(f)) => {
            functional_log_posterior(model, w, batch, f, &lik)?
        }
        (PriorSpec::Functional { .. }, None) => unreachable!(),
    };
    // the last row for iteration t wins when leapfrog records several
    if let Some(last) = diagnostics.last_mut() {
        if last.iteration == t {
            last.log_posterior = log_posterior;
            return Ok(());
        }
    }
    diagnostics.push(DiagnosticRow {
        iteration: t,
        step_size: eps,
        log_posterior,
    });
    Ok(())
}

/// Convenience: full-train measurement set for policies that always return
/// every training input.
pub fn full_train_measurement_set(train: &Dataset) -> Result<MeasurementSet> {
    MeasurementSet::new(train.x.clone())
}

const MAGIC: &[u8; 4] = b"FMCS";
const VERSION: u32 = 1;

/// Thinned posterior samples of one chain.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub dynamics: Dynamics,
    pub seed: u64,
    pub param_dim: usize,
    pub samples: Vec<ParamVector>,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Serialize to the `FMCS` binary layout: magic, version, dynamics tag,
    /// seed, parameter dimension, sample count, then little-endian f64 data.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(4 + 4 + 1 + 8 * 3 + 8 * self.param_dim * self.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(match self.dynamics {
            Dynamics::Sgld => 0,
            Dynamics::Sghmc => 1,
            Dynamics::Fsgld => 2,
            Dynamics::Fsghmc => 3,
        });
        out.extend_from_slice(&self.seed.to_le_bytes());
        out.extend_from_slice(&(self.param_dim as u64).to_le_bytes());
        out.extend_from_slice(&(self.len() as u64).to_le_bytes());
        for s in &self.samples {
            for v in &s.0 {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let fail = |msg: &str| Error::SchemaMismatch(format!("sample file: {msg}"));
        if bytes.len() < 4 + 4 + 1 + 24 {
            return Err(fail("truncated header"));
        }
        if &bytes[0..4] != MAGIC {
            return Err(fail("bad magic"));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != VERSION {
            return Err(fail(&format!("unsupported version {version}")));
        }
        let dynamics = match bytes[8] {
            0 => Dynamics::Sgld,
            1 => Dynamics::Sghmc,
            2 => Dynamics::Fsgld,
            3 => Dynamics::Fsghmc,
            other => return Err(fail(&format!("unknown dynamics tag {other}"))),
        };
        let seed = u64::from_le_bytes(bytes[9..17].try_into().unwrap());
        let param_dim = u64::from_le_bytes(bytes[17..25].try_into().unwrap()) as usize;
        let count = u64::from_le_bytes(bytes[25..33].try_into().unwrap()) as usize;
        let body = &bytes[33..];
        if body.len() != 8 * param_dim * count {
            return Err(fail("payload length disagrees with header"));
        }
        let mut samples = Vec::with_capacity(count);
        for s in 0..count {
            let mut v = Vec::with_capacity(param_dim);
            for j in 0..param_dim {
                let off = 8 * (s * param_dim + j);
                v.push(f64::from_le_bytes(body[off..off + 8].try_into().unwrap()));
            }
            samples.push(ParamVector(v));
        }
        Ok(SampleSet {
            dynamics,
            seed,
            param_dim,
            samples,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        SampleSet::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synthetic_1d;
    use crate::gp::{Kernel, MeanFn};
    use crate::linalg::DenseMatrix;
    use crate::mlp::ConstantModel;

    #[test]
    fn schedule_staircase_values() {
        let s = StepSchedule::new(1e-3, 0.9, 5000).unwrap();
        assert_eq!(s.step_size(0), 1e-3);
        assert_eq!(s.step_size(4999), 1e-3);
        assert!((s.step_size(5000) - 9e-4).abs() < 1e-18);
        assert!((s.step_size(10_000) - 8.1e-4).abs() < 1e-18);
        assert_eq!(StepSchedule::constant(1e-2).unwrap().step_size(999_999), 1e-2);
        assert!(StepSchedule::new(0.0, 0.9, 1).is_err());
        assert!(StepSchedule::new(1e-3, 1.5, 1).is_err());
    }

    #[test]
    fn sgld_matches_standard_normal_moments() {
        // target N(0,1): drift = -w
        let mut rng = RngState::new(11);
        let mut w = ParamVector(vec![0.0]);
        let eps = 1e-2;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        let n = 1_000_000;
        for _ in 0..n {
            let drift = ParamVector(vec![-w.0[0]]);
            sgld_step(&mut w, &drift, eps, 1.0, &mut rng);
            sum += w.0[0];
            sumsq += w.0[0] * w.0[0];
        }
        let mean = sum / n as f64;
        let var = sumsq / n as f64 - mean * mean;
        assert!(mean.abs() < 0.05, "mean {mean}");
        assert!((var - 1.0).abs() < 0.1, "var {var}");
    }

    #[test]
    fn sghmc_matches_standard_normal_moments() {
        let mut rng = RngState::new(13);
        let mut w = ParamVector(vec![0.0]);
        let mut z = ParamVector(vec![0.0]);
        let (eps, friction, mass) = (5e-2, 1.0, 1.0);
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        let n = 400_000;
        for _ in 0..n {
            sghmc_position_step(&mut w, &z, eps, mass);
            let drift = ParamVector(vec![-w.0[0]]);
            sghmc_momentum_step(&mut z, &drift, eps, friction, mass, 1.0, &mut rng);
            sum += w.0[0];
            sumsq += w.0[0] * w.0[0];
        }
        let mean = sum / n as f64;
        let var = sumsq / n as f64 - mean * mean;
        assert!(mean.abs() < 0.05, "mean {mean}");
        assert!((var - 1.0).abs() < 0.12, "var {var}");
    }

    #[test]
    fn noise_suppressed_sgld_descends_to_mode() {
        let mut rng = RngState::new(17);
        let mut w = ParamVector(vec![5.0]);
        for _ in 0..2000 {
            let drift = ParamVector(vec![-(w.0[0] - 2.0)]);
            sgld_step(&mut w, &drift, 1e-2, 0.0, &mut rng);
        }
        assert!((w.0[0] - 2.0).abs() < 1e-8);
    }

    #[test]
    fn frictionless_noiseless_sghmc_conserves_energy() {
        // harmonic oscillator H = w^2/2 + z^2/2 under the symplectic-Euler
        // style update stays within O(eps) of the initial energy
        let mut rng = RngState::new(19);
        let mut w = ParamVector(vec![1.0]);
        let mut z = ParamVector(vec![0.0]);
        let eps = 1e-3;
        let h0 = 0.5 * (w.0[0] * w.0[0] + z.0[0] * z.0[0]);
        for _ in 0..10_000 {
            sghmc_position_step(&mut w, &z, eps, 1.0);
            let drift = ParamVector(vec![-w.0[0]]);
            sghmc_momentum_step(&mut z, &drift, eps, 0.0, 1.0, 0.0, &mut rng);
        }
        let h1 = 0.5 * (w.0[0] * w.0[0] + z.0[0] * z.0[0]);
        assert!((h1 - h0).abs() < 5e-3, "energy drift {}", h1 - h0);
    }

    fn tiny_problem() -> (ConstantModel, Dataset, GaussianLikelihood) {
        let train = synthetic_1d(20, 3).unwrap();
        (ConstantModel, train, GaussianLikelihood::new(0.5).unwrap())
    }

    #[test]
    fn run_chain_counts_thins_and_reproduces() {
        let (model, train, lik) = tiny_problem();
        let prior = PriorSpec::Param(ParamPrior::new(1.0).unwrap());
        let config = SamplerConfig {
            burn_in: 50,
            num_samples: 7,
            thin_interval: 3,
            minibatch_size: 5,
            friction: 0.1,
            mass: 1.0,
            leapfrog_steps: 5,
            noise_scale: 1.0,
            record_diagnostics: true,
        };
        let schedule = StepSchedule::constant(1e-3).unwrap();
        for dynamics in [Dynamics::Sgld, Dynamics::Sghmc] {
            let out1 = run_chain(
                &model,
                dynamics,
                &train,
                lik,
                &prior,
                &config,
                &schedule,
                ParamVector(vec![0.2]),
                &mut RngState::new(21),
            )
            .unwrap();
            let out2 = run_chain(
                &model,
                dynamics,
                &train,
                lik,
                &prior,
                &config,
                &schedule,
                ParamVector(vec![0.2]),
                &mut RngState::new(21),
            )
            .unwrap();
            assert_eq!(out1.samples.len(), 7);
            assert_eq!(out1.samples.samples, out2.samples.samples);
            assert_eq!(out1.diagnostics.len(), config.total_iterations());
            assert!(out1
                .diagnostics
                .iter()
                .all(|r| r.log_posterior.is_finite()));
        }
    }

    #[test]
    fn functional_chain_runs_with_gp_prior() {
        let (model, train, lik) = tiny_problem();
        let gp = GpPrior::new(
            MeanFn::Zero,
            Kernel::Rbf {
                lengthscale: 0.5,
                variance: 1.0,
            },
            1e-4,
        )
        .unwrap();
        let policy = MeasurementPolicy {
            m_train: 10,
            m_inducing: 10,
            box_lo: -1.0,
            box_hi: 1.0,
        };
        let prior = PriorSpec::Functional { gp: &gp, policy };
        let config = SamplerConfig {
            burn_in: 20,
            num_samples: 5,
            thin_interval: 2,
            minibatch_size: 5,
            friction: 0.1,
            mass: 1.0,
            leapfrog_steps: 3,
            noise_scale: 1.0,
            record_diagnostics: true,
        };
        let schedule = StepSchedule::constant(1e-3).unwrap();
        for dynamics in [Dynamics::Fsgld, Dynamics::Fsghmc] {
            let out = run_chain(
                &model,
                dynamics,
                &train,
                lik,
                &prior,
                &config,
                &schedule,
                ParamVector(vec![0.0]),
                &mut RngState::new(5),
            )
            .unwrap();
            assert_eq!(out.samples.len(), 5);
            assert_eq!(out.samples.dynamics, dynamics);
        }
        // mismatched pairing is rejected
        assert!(run_chain(
            &model,
            Dynamics::Sgld,
            &train,
            lik,
            &prior,
            &config,
            &schedule,
            ParamVector(vec![0.0]),
            &mut RngState::new(5),
        )
        .is_err());
    }

    #[test]
    fn divergent_chain_reports_iteration() {
        let (model, train, lik) = tiny_problem();
        let prior = PriorSpec::Param(ParamPrior::new(1.0).unwrap());
        let config = SamplerConfig {
            burn_in: 0,
            num_samples: 10,
            thin_interval: 1,
            minibatch_size: 5,
            friction: 0.1,
            mass: 1.0,
            leapfrog_steps: 1,
            noise_scale: 1.0,
            record_diagnostics: false,
        };
        let schedule = StepSchedule::constant(1e160).unwrap();
        match run_chain(
            &model,
            Dynamics::Sgld,
            &train,
            lik,
            &prior,
            &config,
            &schedule,
            ParamVector(vec![1.0]),
            &mut RngState::new(1),
        ) {
            Err(Error::NonFiniteState { iteration }) => assert!(iteration < 10),
            other => panic!("expected NonFiniteState, got {:?}", other.map(|o| o.samples.len())),
        }
    }

    #[test]
    fn sample_file_roundtrip_and_schema_errors() {
        let set = SampleSet {
            dynamics: Dynamics::Fsghmc,
            seed: 99,
            param_dim: 3,
            samples: vec![
                ParamVector(vec![1.0, -2.5, 0.125]),
                ParamVector(vec![0.0, f64::MIN_POSITIVE, 1e300]),
            ],
        };
        let bytes = set.to_bytes();
        let back = SampleSet::from_bytes(&bytes).unwrap();
        assert_eq!(set, back);
        assert_eq!(bytes, back.to_bytes(), "re-serialization is byte-identical");

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(
            SampleSet::from_bytes(&bad),
            Err(Error::SchemaMismatch(_))
        ));
        let truncated = &bytes[..bytes.len() - 1];
        assert!(matches!(
            SampleSet::from_bytes(truncated),
            Err(Error::SchemaMismatch(_))
        ));

        let dir = std::env::temp_dir().join(format!("funcmcmc-samples-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("samples.bin");
        set.save(&path).unwrap();
        assert_eq!(SampleSet::load(&path).unwrap(), set);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn innovation_variance_matches_two_eps() {
        // zero drift, the increment is exactly sqrt(2 eps) * N(0, I)
        let mut rng = RngState::new(23);
        let eps = 1e-3;
        let n = 100_000;
        let drift = ParamVector(vec![0.0]);
        let mut sumsq = 0.0;
        for _ in 0..n {
            let mut w = ParamVector(vec![0.0]);
            sgld_step(&mut w, &drift, eps, 1.0, &mut rng);
            sumsq += w.0[0] * w.0[0];
        }
        let var = sumsq / n as f64;
        assert!(
            (var - 2.0 * eps).abs() < 0.05 * 2.0 * eps,
            "innovation variance {var} vs {}",
            2.0 * eps
        );
    }

    #[test]
    fn cached_factor_plan_matches_full_train_policy() {
        let train = synthetic_1d(30, 8).unwrap();
        let policy = MeasurementPolicy::train_only(30);
        assert!(policy.is_fixed_full_train(train.len()));
        let set = full_train_measurement_set(&train).unwrap();
        assert_eq!(set.points.rows(), 30);
        let _ = DenseMatrix::zeros(1, 1);
    }
}
