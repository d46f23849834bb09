//! Run configuration: TOML schema, flag overrides, and resolution into core
//! types. Unknown keys are rejected everywhere.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use funcmcmc::bandit::{AgentKind, BanditConfig};
use funcmcmc::gp::{GpPrior, Kernel, MeanFn};
use funcmcmc::predict::{TractableTarget, VerifyConfig};
use funcmcmc::samplers::{Dynamics, SamplerConfig, StepSchedule};
use funcmcmc::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    Synthetic1d,
    Uci,
    Verify,
    Bandit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub hidden: Vec<usize>,
    pub activation: String,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            hidden: vec![100, 100],
            activation: "tanh".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// CSV path for UCI runs; a sidecar `<path>.schema` names the target
    /// columns. Relative paths resolve against FUNCMCMC_DATA_DIR when set.
    pub path: Option<String>,
    pub n_train: usize,
    pub n_test: usize,
    pub test_fraction: f64,
    /// Observation noise std; defaults to 0.5 for synthetic, 0.1 for UCI.
    pub noise_std: Option<f64>,
    pub num_splits: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            path: None,
            n_train: 100,
            n_test: 100,
            test_fraction: 0.1,
            noise_std: None,
            num_splits: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KernelConfig {
    #[serde(rename = "type")]
    pub kind: String,
    pub lengthscale: f64,
    pub variance: f64,
    pub offset: f64,
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig {
            kind: "rbf".into(),
            lengthscale: 0.5,
            variance: 1.0,
            offset: 1.0,
        }
    }
}

impl KernelConfig {
    pub fn to_kernel(&self) -> Result<Kernel> {
        let kernel = match self.kind.as_str() {
            "rbf" => Kernel::Rbf {
                lengthscale: self.lengthscale,
                variance: self.variance,
            },
            "matern52" => Kernel::Matern52 {
                lengthscale: self.lengthscale,
                variance: self.variance,
            },
            "linear" => Kernel::Linear {
                variance: self.variance,
                offset: self.offset,
            },
            other => return Err(Error::Config(format!("unknown kernel {other:?}"))),
        };
        kernel.validate()?;
        Ok(kernel)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PriorConfig {
    pub kernel: KernelConfig,
    pub mean: f64,
    pub noise_variance: f64,
    pub pretrain_epochs: usize,
    pub pretrain_lr: f64,
    /// Isotropic weight-prior variance for parameter-space dynamics.
    pub parameter_variance: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        PriorConfig {
            kernel: KernelConfig::default(),
            mean: 0.0,
            noise_variance: 0.01,
            pretrain_epochs: 100,
            pretrain_lr: 0.05,
            parameter_variance: 1.0,
        }
    }
}

impl PriorConfig {
    pub fn to_gp(&self) -> Result<GpPrior> {
        let mean = if self.mean == 0.0 {
            MeanFn::Zero
        } else {
            MeanFn::Constant { value: self.mean }
        };
        GpPrior::new(mean, self.kernel.to_kernel()?, self.noise_variance)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MeasurementConfig {
    pub m_train: usize,
    pub m_inducing: usize,
    pub box_lo: f64,
    pub box_hi: f64,
}

impl Default for MeasurementConfig {
    fn default() -> Self {
        MeasurementConfig {
            m_train: 40,
            m_inducing: 40,
            box_lo: -1.0,
            box_hi: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerSection {
    pub burn_in: usize,
    pub num_samples: usize,
    pub thin_interval: usize,
    pub minibatch_size: usize,
    pub epsilon0: f64,
    pub gamma: f64,
    pub decay_period: usize,
    pub friction: f64,
    pub mass: f64,
    pub leapfrog_steps: usize,
    pub noise_scale: f64,
}

impl Default for SamplerSection {
    fn default() -> Self {
        SamplerSection {
            burn_in: 2000,
            num_samples: 80,
            thin_interval: 100,
            minibatch_size: 20,
            epsilon0: 1e-3,
            gamma: 0.9,
            decay_period: 5000,
            friction: 0.1,
            mass: 1.0,
            leapfrog_steps: 5,
            noise_scale: 1.0,
        }
    }
}

impl SamplerSection {
    pub fn to_core(&self) -> SamplerConfig {
        SamplerConfig {
            burn_in: self.burn_in,
            num_samples: self.num_samples,
            thin_interval: self.thin_interval,
            minibatch_size: self.minibatch_size,
            friction: self.friction,
            mass: self.mass,
            leapfrog_steps: self.leapfrog_steps,
            noise_scale: self.noise_scale,
            record_diagnostics: true,
        }
    }

    pub fn schedule(&self) -> Result<StepSchedule> {
        StepSchedule::new(self.epsilon0, self.gamma, self.decay_period)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifySection {
    pub target: String,
    pub steps: usize,
    pub burn_in: usize,
    pub epsilon: f64,
    pub chains: usize,
    /// Friction; when unset a per-dynamics recommended value is used.
    pub friction: Option<f64>,
    pub mass: f64,
    pub mean_tol: f64,
    pub cov_rtol: f64,
    pub var_rtol: f64,
    pub mean_se_factor: f64,
}

impl Default for VerifySection {
    fn default() -> Self {
        let base = VerifyConfig::default();
        VerifySection {
            target: "gaussian2d".into(),
            steps: base.steps,
            burn_in: base.burn_in,
            epsilon: base.epsilon,
            chains: base.chains,
            friction: None,
            mass: base.mass,
            mean_tol: base.mean_tol,
            cov_rtol: base.cov_rtol,
            var_rtol: base.var_rtol,
            mean_se_factor: base.mean_se_factor,
        }
    }
}

impl VerifySection {
    pub fn target(&self) -> Result<TractableTarget> {
        match self.target.as_str() {
            "gaussian2d" => Ok(TractableTarget::Gaussian2d),
            "conjugate_linear" => Ok(TractableTarget::ConjugateLinear),
            other => Err(Error::Config(format!("unknown verify target {other:?}"))),
        }
    }

    pub fn to_core(&self, dynamics: Dynamics, seed: u64) -> VerifyConfig {
        VerifyConfig {
            steps: self.steps,
            burn_in: self.burn_in,
            epsilon: self.epsilon,
            chains: self.chains,
            friction: self
                .friction
                .unwrap_or(VerifyConfig::recommended(dynamics).friction),
            mass: self.mass,
            seed,
            mean_tol: self.mean_tol,
            cov_rtol: self.cov_rtol,
            var_rtol: self.var_rtol,
            mean_se_factor: self.mean_se_factor,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BanditSection {
    pub agent: String,
    pub penalty_prob: f64,
    pub rounds: usize,
    pub warmup: usize,
    pub steps_per_round: usize,
    pub minibatch_size: usize,
    pub buffer_capacity: usize,
    pub step_size: f64,
    pub step_gamma: f64,
    pub step_decay_period: usize,
    pub noise_std: f64,
    pub hidden: Vec<usize>,
    pub weight_variance: f64,
    pub prior_lengthscale: f64,
    pub prior_variance: f64,
}

impl Default for BanditSection {
    fn default() -> Self {
        let base = BanditConfig::default();
        BanditSection {
            agent: "fsgld".into(),
            penalty_prob: 0.5,
            rounds: base.rounds,
            warmup: base.warmup,
            steps_per_round: base.steps_per_round,
            minibatch_size: base.minibatch_size,
            buffer_capacity: base.buffer_capacity,
            step_size: base.step_size,
            step_gamma: base.step_gamma,
            step_decay_period: base.step_decay_period,
            noise_std: base.noise_std,
            hidden: base.hidden,
            weight_variance: base.weight_variance,
            prior_lengthscale: base.prior_lengthscale,
            prior_variance: base.prior_variance,
        }
    }
}

impl BanditSection {
    pub fn agent(&self) -> Result<AgentKind> {
        AgentKind::parse(&self.agent)
    }

    pub fn to_core(&self) -> BanditConfig {
        BanditConfig {
            rounds: self.rounds,
            warmup: self.warmup,
            steps_per_round: self.steps_per_round,
            minibatch_size: self.minibatch_size,
            buffer_capacity: self.buffer_capacity,
            step_size: self.step_size,
            step_gamma: self.step_gamma,
            step_decay_period: self.step_decay_period,
            noise_std: self.noise_std,
            hidden: self.hidden.clone(),
            weight_variance: self.weight_variance,
            prior_lengthscale: self.prior_lengthscale,
            prior_variance: self.prior_variance,
        }
    }
}

fn default_seed() -> u64 {
    0
}

fn default_dynamics() -> Dynamics {
    Dynamics::Fsgld
}

fn default_output_dir() -> String {
    "runs/default".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: Experiment,
    #[serde(default = "default_dynamics")]
    pub dynamics: Dynamics,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: String,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub prior: PriorConfig,
    #[serde(default)]
    pub measurement: MeasurementConfig,
    #[serde(default)]
    pub sampler: SamplerSection,
    #[serde(default)]
    pub verify: VerifySection,
    #[serde(default)]
    pub bandit: BanditSection,
}

impl RunConfig {
    pub fn noise_std(&self) -> f64 {
        self.data.noise_std.unwrap_or(match self.experiment {
            Experiment::Synthetic1d => 0.5,
            _ => 0.1,
        })
    }

    /// Dataset path with FUNCMCMC_DATA_DIR applied to relative paths.
    pub fn data_path(&self) -> Result<PathBuf> {
        let raw = self
            .data
            .path
            .as_ref()
            .ok_or_else(|| Error::Config("data.path is required for this experiment".into()))?;
        let p = PathBuf::from(raw);
        if p.is_absolute() {
            return Ok(p);
        }
        match std::env::var_os("FUNCMCMC_DATA_DIR") {
            Some(root) => Ok(PathBuf::from(root).join(p)),
            None => Ok(p),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

/// A dotted-path override like `sampler.burn_in=100`.
pub struct Override {
    pub path: Vec<String>,
    pub value: toml::Value,
}

pub fn parse_override(spec: &str) -> Result<Override> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {spec:?} is not KEY=VALUE")))?;
    let path: Vec<String> = key.split('.').map(|s| s.trim().to_string()).collect();
    if path.iter().any(|s| s.is_empty()) {
        return Err(Error::Config(format!("override key {key:?} is malformed")));
    }
    // try to parse the value as a TOML literal, falling back to a string
    let value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(t) => t["v"].clone(),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    Ok(Override { path, value })
}

fn apply_override(root: &mut toml::Value, ov: &Override) -> Result<()> {
    let mut node = root;
    for key in &ov.path[..ov.path.len() - 1] {
        let table = node
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override path {key:?} crosses a non-table")))?;
        node = table
            .entry(key.clone())
            .or_insert(toml::Value::Table(toml::Table::new()));
    }
    let table = node
        .as_table_mut()
        .ok_or_else(|| Error::Config("override path ends inside a non-table".into()))?;
    table.insert(ov.path.last().unwrap().clone(), ov.value.clone());
    Ok(())
}

/// Load, override, and validate a config file.
pub fn load_config(
    path: impl AsRef<Path>,
    seed: Option<u64>,
    dynamics: Option<Dynamics>,
    out: Option<&str>,
    overrides: &[String],
) -> Result<RunConfig> {
    let path = path.as_ref();
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut value: toml::Value = text
        .parse()
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    for spec in overrides {
        apply_override(&mut value, &parse_override(spec)?)?;
    }
    if let Some(s) = seed {
        apply_override(&mut value, &parse_override(&format!("seed={s}"))?)?;
    }
    if let Some(d) = dynamics {
        apply_override(
            &mut value,
            &parse_override(&format!("dynamics=\"{}\"", d.as_str()))?,
        )?;
    }
    if let Some(o) = out {
        apply_override(
            &mut value,
            &Override {
                path: vec!["output_dir".into()],
                value: toml::Value::String(o.to_string()),
            },
        )?;
    }
    value
        .try_into()
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}
