//! `funcmcmc`: run functional SGMCMC experiments from a TOML config.
//!
//! Exit codes: 0 success (or verification pass), 1 verification fail,
//! 2 config error, 3 runtime numerical error.

mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use funcmcmc::bandit::MushroomEnv;
use funcmcmc::data::{
    self, apply_record, read_schema, split, standardize, synthetic_1d, Dataset, MeasurementPolicy,
};
use funcmcmc::gp::{pretrain, GpPrior, Kernel, MeanFn};
use funcmcmc::linalg::DenseMatrix;
use funcmcmc::mlp::{Activation, MlpArchitecture, ParamVector};
use funcmcmc::predict::{export_bands, nll, predictive_ensemble, rmse, verify_tractable};
use funcmcmc::samplers::{run_chain, ChainOutput, Dynamics, PriorSpec, SampleSet};
use funcmcmc::{Error, GaussianLikelihood, Result, RngState};

use config::{load_config, Experiment, RunConfig};

#[derive(Parser)]
#[command(name = "funcmcmc", version, about = "Functional SGMCMC for Bayesian neural networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the output directory.
    #[arg(long)]
    out: Option<String>,
    /// Override the dynamics (sgld, sghmc, fsgld, fsghmc).
    #[arg(long)]
    dynamics: Option<String>,
    /// Dotted-path config override, repeatable (e.g. sampler.burn_in=100).
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Fit GP hyperparameters by marginal likelihood and write prior.json.
    PretrainPrior(RunArgs),
    /// Run one chain and write samples.bin + diagnostics.csv.
    Sample(RunArgs),
    /// Compute metrics.json (and bands.csv for synthetic runs).
    Evaluate(RunArgs),
    /// Check the samplers against closed-form targets.
    Verify(RunArgs),
    /// Run the mushroom bandit and write regret.csv.
    Bandit(RunArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (args, run): (&RunArgs, fn(&RunConfig) -> Result<i32>) = match &cli.command {
        Command::PretrainPrior(a) => (a, cmd_pretrain_prior),
        Command::Sample(a) => (a, cmd_sample),
        Command::Evaluate(a) => (a, cmd_evaluate),
        Command::Verify(a) => (a, cmd_verify),
        Command::Bandit(a) => (a, cmd_bandit),
    };
    match load_and_run(args, run) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}

fn load_and_run(args: &RunArgs, run: fn(&RunConfig) -> Result<i32>) -> Result<i32> {
    let dynamics = match &args.dynamics {
        Some(s) => Some(Dynamics::parse(s)?),
        None => None,
    };
    let cfg = load_config(
        &args.config,
        args.seed,
        dynamics,
        args.out.as_deref(),
        &args.overrides,
    )?;
    run(&cfg)
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Parse { .. } | Error::Io { .. } | Error::SchemaMismatch(_) => 2,
        _ => 3,
    }
}

fn out_dir(cfg: &RunConfig) -> Result<PathBuf> {
    let dir = PathBuf::from(&cfg.output_dir);
    fs::create_dir_all(&dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    Ok(dir)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
}

fn write_resolved(cfg: &RunConfig, dir: &Path) -> Result<()> {
    write_text(&dir.join("config.resolved"), &cfg.to_toml())
}

fn parse_activation(name: &str) -> Result<Activation> {
    match name {
        "tanh" => Ok(Activation::Tanh),
        "relu" => Ok(Activation::Relu),
        "identity" => Ok(Activation::Identity),
        other => Err(Error::Config(format!("unknown activation {other:?}"))),
    }
}

/// Everything a sampling or evaluation run needs, resolved from the config.
struct Prepared {
    arch: MlpArchitecture,
    /// Network-scale training data (standardized for UCI).
    train: Dataset,
    /// Network-scale test inputs with original-scale targets kept aside.
    test: Dataset,
    test_y_raw: Vec<f64>,
    /// Set for UCI runs; maps predictions back to the original scale.
    target_std: Option<f64>,
    lik: GaussianLikelihood,
    policy: MeasurementPolicy,
}

fn prepare(cfg: &RunConfig, seed: u64) -> Result<Prepared> {
    let lik = GaussianLikelihood::new(cfg.noise_std())?;
    match cfg.experiment {
        Experiment::Synthetic1d => {
            let train = synthetic_1d(cfg.data.n_train, seed)?;
            let test = synthetic_1d(cfg.data.n_test, seed.wrapping_add(0x7e57))?;
            let arch = arch_for(cfg, 1)?;
            let test_y_raw = test.targets_vec();
            Ok(Prepared {
                arch,
                train,
                test,
                test_y_raw,
                target_std: None,
                lik,
                policy: MeasurementPolicy {
                    m_train: cfg.measurement.m_train,
                    m_inducing: cfg.measurement.m_inducing,
                    box_lo: cfg.measurement.box_lo,
                    box_hi: cfg.measurement.box_hi,
                },
            })
        }
        Experiment::Uci => {
            let path = cfg.data_path()?;
            let schema_path = PathBuf::from(format!("{}.schema", path.display()));
            let schema = read_schema(&schema_path)?;
            let targets: Vec<usize> = schema
                .iter()
                .enumerate()
                .filter(|(_, c)| c.is_target)
                .map(|(i, _)| i)
                .collect();
            if targets.is_empty() {
                return Err(Error::Config(format!(
                    "{} declares no target column",
                    schema_path.display()
                )));
            }
            let ds = data::load_csv(&path, &targets, false)?;
            let (train_raw, test_raw) = split(&ds, cfg.data.test_fraction, seed)?;
            let train = standardize(&train_raw)?;
            let record = train.record.clone().unwrap();
            let test = apply_record(&record, &test_raw)?;
            let arch = arch_for(cfg, record.kept_inputs.len())?;
            // all training points when the set is small, else a 1000-point
            // redraw per iteration
            let n = train.len();
            let policy = if n <= 1000 {
                MeasurementPolicy::train_only(n)
            } else {
                MeasurementPolicy::train_only(1000)
            };
            Ok(Prepared {
                arch,
                train,
                test,
                test_y_raw: test_raw.targets_vec(),
                target_std: Some(record.target_stds[0]),
                lik,
                policy,
            })
        }
        _ => Err(Error::Config(
            "sampling needs a synthetic1d or uci experiment".into(),
        )),
    }
}

fn arch_for(cfg: &RunConfig, input_dim: usize) -> Result<MlpArchitecture> {
    let mut widths = vec![input_dim];
    widths.extend_from_slice(&cfg.model.hidden);
    widths.push(1);
    MlpArchitecture::new(widths, parse_activation(&cfg.model.activation)?)
}

/// On-disk GP prior: kernel hyperparameters, mean constant, noise variance,
/// and the marginal-likelihood trace from pre-training.
#[derive(Debug, Serialize, Deserialize)]
struct PriorFile {
    kernel: PriorFileKernel,
    mean: PriorFileMean,
    noise: PriorFileNoise,
    trace: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct PriorFileKernel {
    #[serde(rename = "type")]
    kind: String,
    lengthscale: f64,
    variance: f64,
    offset: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct PriorFileMean {
    constant: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct PriorFileNoise {
    variance: f64,
}

impl PriorFile {
    fn from_gp(gp: &GpPrior, trace: Vec<f64>) -> Self {
        let (kind, lengthscale, variance, offset) = match gp.kernel {
            Kernel::Rbf { lengthscale, variance } => ("rbf", lengthscale, variance, 0.0),
            Kernel::Matern52 { lengthscale, variance } => ("matern52", lengthscale, variance, 0.0),
            Kernel::Linear { variance, offset } => ("linear", 0.0, variance, offset),
        };
        PriorFile {
            kernel: PriorFileKernel {
                kind: kind.into(),
                lengthscale,
                variance,
                offset,
            },
            mean: PriorFileMean {
                constant: gp.mean.value(),
            },
            noise: PriorFileNoise {
                variance: gp.noise_variance,
            },
            trace,
        }
    }

    fn to_gp(&self) -> Result<GpPrior> {
        let kernel = match self.kernel.kind.as_str() {
            "rbf" => Kernel::Rbf {
                lengthscale: self.kernel.lengthscale,
                variance: self.kernel.variance,
            },
            "matern52" => Kernel::Matern52 {
                lengthscale: self.kernel.lengthscale,
                variance: self.kernel.variance,
            },
            "linear" => Kernel::Linear {
                variance: self.kernel.variance,
                offset: self.kernel.offset,
            },
            other => return Err(Error::SchemaMismatch(format!("prior kernel {other:?}"))),
        };
        let mean = if self.mean.constant == 0.0 {
            MeanFn::Zero
        } else {
            MeanFn::Constant {
                value: self.mean.constant,
            }
        };
        GpPrior::new(mean, kernel, self.noise.variance)
    }
}

fn load_prior(cfg: &RunConfig, dir: &Path) -> Result<GpPrior> {
    let path = dir.join("prior.json");
    if path.exists() {
        let text =
            fs::read_to_string(&path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let file: PriorFile = serde_json::from_str(&text)
            .map_err(|e| Error::SchemaMismatch(format!("{}: {e}", path.display())))?;
        file.to_gp()
    } else {
        cfg.prior.to_gp()
    }
}

fn cmd_pretrain_prior(cfg: &RunConfig) -> Result<i32> {
    let dir = out_dir(cfg)?;
    let prepared = prepare(cfg, cfg.seed)?;
    let gp0 = cfg.prior.to_gp()?;
    let y = prepared.train.targets_vec();
    let (gp, trace) = pretrain(
        &gp0,
        &prepared.train.x,
        &y,
        cfg.prior.pretrain_epochs,
        cfg.prior.pretrain_lr,
    )?;
    let file = PriorFile::from_gp(&gp, trace);
    write_text(
        &dir.join("prior.json"),
        &format!("{}\n", serde_json::to_string_pretty(&file).unwrap()),
    )?;
    write_resolved(cfg, &dir)?;
    println!(
        "pretrained prior over {} epochs: log marginal likelihood {:.4} -> {:.4}",
        cfg.prior.pretrain_epochs,
        file.trace.first().unwrap_or(&f64::NAN),
        file.trace.last().unwrap_or(&f64::NAN)
    );
    Ok(0)
}

fn run_configured_chain(cfg: &RunConfig, prepared: &Prepared, seed: u64) -> Result<ChainOutput> {
    let dir = PathBuf::from(&cfg.output_dir);
    let gp;
    let prior = if cfg.dynamics.is_functional() {
        gp = load_prior(cfg, &dir)?;
        PriorSpec::Functional {
            gp: &gp,
            policy: prepared.policy.clone(),
        }
    } else {
        PriorSpec::Param(funcmcmc::ParamPrior::new(cfg.prior.parameter_variance)?)
    };
    let mut init_rng = RngState::new(seed).fork(2);
    let w0 = ParamVector(init_rng.gaussian_vector(prepared.arch.param_count()));
    let mut rng = RngState::new(seed).fork(1);
    run_chain(
        &prepared.arch,
        cfg.dynamics,
        &prepared.train,
        prepared.lik,
        &prior,
        &cfg.sampler.to_core(),
        &cfg.sampler.schedule()?,
        w0,
        &mut rng,
    )
}

fn cmd_sample(cfg: &RunConfig) -> Result<i32> {
    let dir = out_dir(cfg)?;
    let prepared = prepare(cfg, cfg.seed)?;
    let start = Instant::now();
    let out = run_configured_chain(cfg, &prepared, cfg.seed)?;
    out.samples.save(dir.join("samples.bin"))?;
    let mut csv = String::from("iteration,step_size,log_posterior\n");
    for row in &out.diagnostics {
        csv.push_str(&format!(
            "{},{},{}\n",
            row.iteration, row.step_size, row.log_posterior
        ));
    }
    write_text(&dir.join("diagnostics.csv"), &csv)?;
    write_resolved(cfg, &dir)?;
    println!(
        "collected {} samples ({} dynamics) in {:.1?}; final log-posterior surrogate {:.4}",
        out.samples.len(),
        cfg.dynamics.as_str(),
        start.elapsed(),
        out.diagnostics.last().map_or(f64::NAN, |r| r.log_posterior)
    );
    Ok(0)
}

#[derive(Debug, Serialize)]
struct SplitMetrics {
    seed: u64,
    rmse: f64,
    nll: f64,
    num_samples: usize,
}

#[derive(Debug, Serialize)]
struct Metrics {
    dynamics: String,
    seed: u64,
    rmse: f64,
    nll: f64,
    rmse_std: f64,
    nll_std: f64,
    splits: Vec<SplitMetrics>,
}

fn split_metrics(cfg: &RunConfig, prepared: &Prepared, samples: &SampleSet, seed: u64) -> Result<SplitMetrics> {
    if samples.param_dim != prepared.arch.param_count() {
        return Err(Error::SchemaMismatch(format!(
            "sample file has {} parameters, the configured network has {}",
            samples.param_dim,
            prepared.arch.param_count()
        )));
    }
    let noise = cfg.noise_std();
    let summary = predictive_ensemble(&prepared.arch, &samples.samples, &prepared.test.x, noise)?;
    let (rmse_v, nll_v) = match prepared.target_std {
        Some(s) => {
            let m = mean_offset(prepared);
            let means_raw: Vec<f64> = summary.means.iter().map(|v| v * s + m).collect();
            let r = rmse(&means_raw, &prepared.test_y_raw)?;
            let n = nll(
                &prepared.arch,
                &samples.samples,
                &prepared.test.x,
                &prepared.test.targets_vec(),
                noise,
            )? + s.ln();
            (r, n)
        }
        None => {
            let r = rmse(&summary.means, &prepared.test_y_raw)?;
            let n = nll(
                &prepared.arch,
                &samples.samples,
                &prepared.test.x,
                &prepared.test_y_raw,
                noise,
            )?;
            (r, n)
        }
    };
    Ok(SplitMetrics {
        seed,
        rmse: rmse_v,
        nll: nll_v,
        num_samples: samples.len(),
    })
}

fn mean_offset(prepared: &Prepared) -> f64 {
    prepared
        .test
        .record
        .as_ref()
        .map_or(0.0, |r| r.target_means[0])
}

fn cmd_evaluate(cfg: &RunConfig) -> Result<i32> {
    let dir = out_dir(cfg)?;
    let mut splits = Vec::new();
    if cfg.data.num_splits <= 1 {
        let prepared = prepare(cfg, cfg.seed)?;
        let samples = SampleSet::load(dir.join("samples.bin"))?;
        splits.push(split_metrics(cfg, &prepared, &samples, cfg.seed)?);
        if cfg.experiment == Experiment::Synthetic1d {
            let grid: Vec<f64> = (0..200).map(|i| -1.0 + 2.0 * i as f64 / 199.0).collect();
            let gx = DenseMatrix::column(&grid);
            let summary =
                predictive_ensemble(&prepared.arch, &samples.samples, &gx, cfg.noise_std())?;
            export_bands(dir.join("bands.csv"), &gx, &summary)?;
        }
    } else {
        for s in 0..cfg.data.num_splits {
            let seed = cfg.seed + s as u64;
            let prepared = prepare(cfg, seed)?;
            let out = run_configured_chain(cfg, &prepared, seed)?;
            splits.push(split_metrics(cfg, &prepared, &out.samples, seed)?);
        }
    }
    let mean = |f: fn(&SplitMetrics) -> f64| {
        splits.iter().map(f).sum::<f64>() / splits.len() as f64
    };
    let std = |f: fn(&SplitMetrics) -> f64, mu: f64| {
        (splits.iter().map(|s| (f(s) - mu).powi(2)).sum::<f64>() / splits.len() as f64).sqrt()
    };
    let rmse_mean = mean(|s| s.rmse);
    let nll_mean = mean(|s| s.nll);
    let metrics = Metrics {
        dynamics: cfg.dynamics.as_str().into(),
        seed: cfg.seed,
        rmse: rmse_mean,
        nll: nll_mean,
        rmse_std: std(|s| s.rmse, rmse_mean),
        nll_std: std(|s| s.nll, nll_mean),
        splits,
    };
    write_text(
        &dir.join("metrics.json"),
        &format!("{}\n", serde_json::to_string_pretty(&metrics).unwrap()),
    )?;
    write_resolved(cfg, &dir)?;
    println!(
        "rmse {:.4} (+/- {:.4}), nll {:.4} (+/- {:.4}) over {} split(s)",
        metrics.rmse,
        metrics.rmse_std,
        metrics.nll,
        metrics.nll_std,
        metrics.splits.len()
    );
    Ok(0)
}

fn cmd_verify(cfg: &RunConfig) -> Result<i32> {
    let dir = out_dir(cfg)?;
    let target = cfg.verify.target()?;
    let vconfig = cfg.verify.to_core(cfg.dynamics, cfg.seed);
    let report = verify_tractable(target, cfg.dynamics, &vconfig)?;
    for c in &report.checks {
        println!(
            "{}: observed {:+.4}, expected {:+.4}, tolerance {:.4} ... {}",
            c.name,
            c.observed,
            c.expected,
            c.tolerance,
            if c.pass { "pass" } else { "FAIL" }
        );
    }
    write_text(
        &dir.join("verify_report.json"),
        &format!("{}\n", serde_json::to_string_pretty(&report).unwrap()),
    )?;
    write_resolved(cfg, &dir)?;
    println!(
        "verification {} for {:?} with {}",
        if report.pass { "passed" } else { "FAILED" },
        target,
        cfg.dynamics.as_str()
    );
    Ok(if report.pass { 0 } else { 1 })
}

fn cmd_bandit(cfg: &RunConfig) -> Result<i32> {
    let dir = out_dir(cfg)?;
    let path = cfg.data_path()?;
    let (env, map) = MushroomEnv::load(&path, cfg.bandit.penalty_prob)?;
    let agent = cfg.bandit.agent()?;
    let trace = funcmcmc::bandit::run_bandit(&env, agent, &cfg.bandit.to_core(), None, cfg.seed)?;
    trace.save_csv(dir.join("regret.csv"))?;
    write_text(
        &dir.join("encoding.json"),
        &format!("{}\n", serde_json::to_string_pretty(&map).unwrap()),
    )?;
    write_resolved(cfg, &dir)?;
    println!(
        "{} agent: cumulative regret {:.1} over {} rounds",
        agent.as_str(),
        trace.final_regret(),
        cfg.bandit.rounds
    );
    Ok(0)
}
