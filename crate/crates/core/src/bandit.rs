//! Mushroom contextual bandit: environment, replay buffer, and agents whose
//! posterior is maintained by a live SGMCMC chain.

use std::collections::VecDeque;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::draw_measurement_set;
use crate::data::MeasurementPolicy;
use crate::error::{Error, Result};
use crate::gp::GpPrior;
use crate::likelihood::{functional_drift, param_drift, GaussianLikelihood, Minibatch, ParamPrior};
use crate::linalg::DenseMatrix;
use crate::mlp::{MlpArchitecture, Model, ParamVector};
use crate::rng::RngState;
use crate::samplers::sgld_step;

pub const EDIBLE_EAT_REWARD: f64 = 5.0;
pub const POISON_PENALTY: f64 = -35.0;
pub const POISON_LUCKY_REWARD: f64 = 5.0;
pub const REJECT_REWARD: f64 = 0.0;
pub const BUFFER_CAPACITY: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    Eat,
    Reject,
}

impl Action {
    pub fn as_str(self) -> &'static str {
        match self {
            Action::Eat => "eat",
            Action::Reject => "reject",
        }
    }
}

/// Per-column category vocabularies used for one-hot encoding; serialized
/// next to the regret trace so the encoding is reproducible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OneHotMap {
    pub columns: Vec<Vec<String>>,
}

impl OneHotMap {
    pub fn fit(rows: &[Vec<String>]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Config("cannot fit an encoder on no rows".into()));
        }
        let width = rows[0].len();
        let mut columns = vec![Vec::<String>::new(); width];
        for row in rows {
            if row.len() != width {
                return Err(Error::DimensionMismatch("ragged categorical rows".into()));
            }
            for (col, val) in columns.iter_mut().zip(row) {
                if !col.contains(val) {
                    col.push(val.clone());
                }
            }
        }
        for col in &mut columns {
            col.sort();
        }
        Ok(OneHotMap { columns })
    }

    pub fn encoded_len(&self) -> usize {
        self.columns.iter().map(|c| c.len()).sum()
    }

    pub fn encode(&self, row: &[String]) -> Result<Vec<f64>> {
        if row.len() != self.columns.len() {
            return Err(Error::DimensionMismatch("categorical row width".into()));
        }
        let mut out = vec![0.0; self.encoded_len()];
        let mut offset = 0;
        for (col, val) in self.columns.iter().zip(row) {
            let idx = col
                .iter()
                .position(|v| v == val)
                .ok_or_else(|| Error::Config(format!("unseen category {val:?}")))?;
            out[offset + idx] = 1.0;
            offset += col.len();
        }
        Ok(out)
    }

    /// Inverse of [`OneHotMap::encode`].
    pub fn decode(&self, encoded: &[f64]) -> Result<Vec<String>> {
        if encoded.len() != self.encoded_len() {
            return Err(Error::DimensionMismatch("encoded row width".into()));
        }
        let mut out = Vec::with_capacity(self.columns.len());
        let mut offset = 0;
        for col in &self.columns {
            let block = &encoded[offset..offset + col.len()];
            let idx = block
                .iter()
                .position(|&v| v == 1.0)
                .ok_or_else(|| Error::Config("no active category in block".into()))?;
            out.push(col[idx].clone());
            offset += col.len();
        }
        Ok(out)
    }
}

#[derive(Debug, Clone)]
pub struct MushroomEnv {
    pub features: DenseMatrix,
    pub edible: Vec<bool>,
    pub penalty_prob: f64,
}

impl MushroomEnv {
    pub fn new(features: DenseMatrix, edible: Vec<bool>, penalty_prob: f64) -> Result<Self> {
        if features.rows() != edible.len() || edible.is_empty() {
            return Err(Error::DimensionMismatch("feature rows against labels".into()));
        }
        if ![0.4, 0.5, 0.6].contains(&penalty_prob) {
            return Err(Error::Config(
                "penalty probability must be one of 0.4, 0.5, 0.6".into(),
            ));
        }
        Ok(MushroomEnv {
            features,
            edible,
            penalty_prob,
        })
    }

    /// Load the categorical CSV (first column e/p class, 22 feature columns)
    /// and one-hot encode it.
    pub fn load(path: impl AsRef<Path>, penalty_prob: f64) -> Result<(Self, OneHotMap)> {
        let path = path.as_ref();
        let text =
            fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut edible = Vec::new();
        let mut rows: Vec<Vec<String>> = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() < 2 {
                return Err(Error::Parse {
                    row: i,
                    col: 0,
                    msg: "expected class plus feature columns".into(),
                });
            }
            match cells[0] {
                "e" => edible.push(true),
                "p" => edible.push(false),
                other => {
                    return Err(Error::Parse {
                        row: i,
                        col: 0,
                        msg: format!("class must be e or p, found {other:?}"),
                    })
                }
            }
            rows.push(cells[1..].iter().map(|s| s.to_string()).collect());
        }
        let map = OneHotMap::fit(&rows)?;
        let encoded: Vec<Vec<f64>> = rows
            .iter()
            .map(|r| map.encode(r))
            .collect::<Result<_>>()?;
        let env = MushroomEnv::new(DenseMatrix::from_rows(&encoded)?, edible, penalty_prob)?;
        Ok((env, map))
    }

    pub fn n_instances(&self) -> usize {
        self.edible.len()
    }

    pub fn context(&self, i: usize) -> &[f64] {
        self.features.row(i)
    }

    /// Realized reward: eating an edible mushroom pays 5; eating a poisonous
    /// one pays -35 with probability p, else 5; rejecting pays 0.
    pub fn reward(&self, i: usize, action: Action, rng: &mut RngState) -> f64 {
        match action {
            Action::Reject => REJECT_REWARD,
            Action::Eat => {
                if self.edible[i] {
                    EDIBLE_EAT_REWARD
                } else if rng.bernoulli(self.penalty_prob) {
                    POISON_PENALTY
                } else {
                    POISON_LUCKY_REWARD
                }
            }
        }
    }

    /// The oracle eats exactly the edible mushrooms; its reward is
    /// deterministic.
    pub fn oracle_reward(&self, i: usize) -> f64 {
        if self.edible[i] {
            EDIBLE_EAT_REWARD
        } else {
            REJECT_REWARD
        }
    }
}

/// FIFO ring of encoded (context + action, reward) pairs.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    entries: VecDeque<(Vec<f64>, f64)>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        ReplayBuffer {
            capacity,
            entries: VecDeque::new(),
        }
    }

    pub fn push(&mut self, input: Vec<f64>, reward: f64) {
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back((input, reward));
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, i: usize) -> &(Vec<f64>, f64) {
        &self.entries[i]
    }

    /// Seeded minibatch without replacement (or the whole buffer if smaller).
    pub fn sample(&self, n: usize, rng: &mut RngState) -> (DenseMatrix, DenseMatrix) {
        let m = n.min(self.len());
        let idx = rng.sample_without_replacement(self.len(), m);
        let rows: Vec<Vec<f64>> = idx.iter().map(|&i| self.entries[i].0.clone()).collect();
        let ys: Vec<f64> = idx.iter().map(|&i| self.entries[i].1).collect();
        (
            DenseMatrix::from_rows(&rows).unwrap(),
            DenseMatrix::column(&ys),
        )
    }
}

/// Context features concatenated with a one-hot action block.
pub fn encode_input(context: &[f64], action: Action) -> Vec<f64> {
    let mut v = Vec::with_capacity(context.len() + 2);
    v.extend_from_slice(context);
    match action {
        Action::Eat => v.extend_from_slice(&[1.0, 0.0]),
        Action::Reject => v.extend_from_slice(&[0.0, 1.0]),
    }
    v
}

/// Inverse of [`encode_input`].
pub fn decode_input(input: &[f64]) -> Result<(Vec<f64>, Action)> {
    if input.len() < 2 {
        return Err(Error::DimensionMismatch("encoded input too short".into()));
    }
    let (context, tail) = input.split_at(input.len() - 2);
    let action = match tail {
        [1.0, 0.0] => Action::Eat,
        [0.0, 1.0] => Action::Reject,
        _ => return Err(Error::Config("invalid action block".into())),
    };
    Ok((context.to_vec(), action))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentKind {
    Fsgld,
    Sgld,
    Greedy,
    Random,
    Oracle,
}

impl AgentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AgentKind::Fsgld => "fsgld",
            AgentKind::Sgld => "sgld",
            AgentKind::Greedy => "greedy",
            AgentKind::Random => "random",
            AgentKind::Oracle => "oracle",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "fsgld" => Ok(AgentKind::Fsgld),
            "sgld" => Ok(AgentKind::Sgld),
            "greedy" => Ok(AgentKind::Greedy),
            "random" => Ok(AgentKind::Random),
            "oracle" => Ok(AgentKind::Oracle),
            other => Err(Error::Config(format!("unknown agent {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BanditConfig {
    pub rounds: usize,
    /// Rounds of uniform-random actions before the posterior drives choices.
    pub warmup: usize,
    /// Sampler steps per round once training has started.
    pub steps_per_round: usize,
    pub minibatch_size: usize,
    pub buffer_capacity: usize,
    pub step_size: f64,
    /// Multiplicative step decay applied every `step_decay_period` sampler
    /// steps; 1.0 keeps the step constant.
    pub step_gamma: f64,
    pub step_decay_period: usize,
    pub noise_std: f64,
    pub hidden: Vec<usize>,
    /// Weight-prior variance for the parameter-space agents.
    pub weight_variance: f64,
    /// RBF prior over encoded inputs for the fSGLD agent.
    pub prior_lengthscale: f64,
    pub prior_variance: f64,
}

impl Default for BanditConfig {
    fn default() -> Self {
        BanditConfig {
            rounds: 2000,
            warmup: 64,
            steps_per_round: 8,
            minibatch_size: 64,
            buffer_capacity: BUFFER_CAPACITY,
            step_size: 1e-4,
            step_gamma: 1.0,
            step_decay_period: 1000,
            noise_std: 2.0,
            hidden: vec![100, 100],
            weight_variance: 1.0,
            prior_lengthscale: 4.0,
            prior_variance: 25.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegretRow {
    pub round: usize,
    pub action: Action,
    pub reward: f64,
    pub cumulative_regret: f64,
}

pub struct BanditTrace {
    pub agent: AgentKind,
    pub rows: Vec<RegretRow>,
}

impl BanditTrace {
    pub fn final_regret(&self) -> f64 {
        self.rows.last().map_or(0.0, |r| r.cumulative_regret)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("round,action,reward,cumulative_regret\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{}\n",
                r.round,
                r.action.as_str(),
                r.reward,
                r.cumulative_regret
            ));
        }
        out
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path.display().to_string(), e))
    }
}

/// Running sum of (oracle reward - agent reward).
pub fn cumulative_regret(increments: &[f64]) -> Vec<f64> {
    increments
        .iter()
        .scan(0.0, |acc, inc| {
            *acc += inc;
            Some(*acc)
        })
        .collect()
}

struct ChainState {
    model: MlpArchitecture,
    w: ParamVector,
    gp: Option<GpPrior>,
    param_prior: ParamPrior,
    lik: GaussianLikelihood,
    noise_scale: f64,
    steps_taken: usize,
}

impl ChainState {
    fn train_steps(
        &mut self,
        buffer: &ReplayBuffer,
        config: &BanditConfig,
        rng: &mut RngState,
    ) -> Result<()> {
        for _ in 0..config.steps_per_round {
            let eps = config.step_size
                * config
                    .step_gamma
                    .powi((self.steps_taken / config.step_decay_period.max(1)) as i32);
            let (bx, by) = buffer.sample(config.minibatch_size, rng);
            let batch = Minibatch {
                x: &bx,
                y: &by,
                n_total: buffer.len(),
            };
            let drift = match &self.gp {
                Some(gp) => {
                    // measurement points: the minibatch inputs themselves
                    let policy = MeasurementPolicy::train_only(bx.rows());
                    let set = draw_measurement_set(&policy, &bx, rng)?;
                    let factor = gp.factor(&set)?;
                    functional_drift(&self.model, &self.w, &batch, &factor, &self.lik)?
                }
                None => param_drift(&self.model, &self.w, &batch, &self.param_prior, &self.lik)?,
            };
            sgld_step(&mut self.w, &drift, eps, self.noise_scale, rng);
            self.steps_taken += 1;
            if !self.w.is_finite() {
                return Err(Error::NonFiniteState { iteration: self.steps_taken });
            }
        }
        Ok(())
    }

    fn predicted_reward(&self, context: &[f64], action: Action) -> Result<f64> {
        let input = encode_input(context, action);
        let x = DenseMatrix::from_rows(&[input])?;
        Ok(self.model.forward_values(&self.w, &x)?.get(0, 0))
    }
}

/// One full bandit run. The sampler chain, buffer, and environment draws are
/// all driven by forks of the given seed, so reruns are identical.
pub fn run_bandit(
    env: &MushroomEnv,
    agent: AgentKind,
    config: &BanditConfig,
    gp: Option<&GpPrior>,
    seed: u64,
) -> Result<BanditTrace> {
    let root = RngState::new(seed);
    let mut env_rng = root.fork(0);
    let mut agent_rng = root.fork(1);

    let input_dim = env.features.cols() + 2;
    let mut widths = vec![input_dim];
    widths.extend_from_slice(&config.hidden);
    widths.push(1);
    let model = MlpArchitecture::new(widths, crate::mlp::Activation::Relu)?;
    let w0 = ParamVector(
        agent_rng
            .gaussian_vector(model.param_count())
            .iter()
            .map(|v| v * (2.0 / input_dim as f64).sqrt())
            .collect(),
    );

    let mut chain = match agent {
        AgentKind::Fsgld => Some(ChainState {
            model,
            w: w0,
            gp: Some(
                gp.cloned().unwrap_or(GpPrior::new(
                    crate::gp::MeanFn::Zero,
                    crate::gp::Kernel::Rbf {
                        lengthscale: config.prior_lengthscale,
                        variance: config.prior_variance,
                    },
                    0.0,
                )?),
            ),
            param_prior: ParamPrior::new(config.weight_variance)?,
            lik: GaussianLikelihood::new(config.noise_std)?,
            noise_scale: 1.0,
            steps_taken: 0,
        }),
        AgentKind::Sgld | AgentKind::Greedy => Some(ChainState {
            model,
            w: w0,
            gp: None,
            param_prior: ParamPrior::new(config.weight_variance)?,
            lik: GaussianLikelihood::new(config.noise_std)?,
            noise_scale: if agent == AgentKind::Greedy { 0.0 } else { 1.0 },
            steps_taken: 0,
        }),
        AgentKind::Random | AgentKind::Oracle => None,
    };

    let mut buffer = ReplayBuffer::new(config.buffer_capacity);
    let mut rows = Vec::with_capacity(config.rounds);
    let mut cumulative = 0.0;
    for round in 0..config.rounds {
        let i = env_rng.below(env.n_instances());
        let context = env.context(i).to_vec();

        let action = if agent == AgentKind::Oracle {
            if env.edible[i] {
                Action::Eat
            } else {
                Action::Reject
            }
        } else if agent == AgentKind::Random || round < config.warmup {
            if agent_rng.bernoulli(0.5) {
                Action::Eat
            } else {
                Action::Reject
            }
        } else {
            let c = chain.as_ref().expect("chain agents hold a sampler state");
            let eat = c.predicted_reward(&context, Action::Eat)?;
            let reject = c.predicted_reward(&context, Action::Reject)?;
            if eat > reject {
                Action::Eat
            } else {
                Action::Reject
            }
        };

        let reward = env.reward(i, action, &mut env_rng);
        cumulative += env.oracle_reward(i) - reward;
        rows.push(RegretRow {
            round,
            action,
            reward,
            cumulative_regret: cumulative,
        });

        if let Some(c) = chain.as_mut() {
            buffer.push(encode_input(&context, action), reward);
            if round + 1 >= config.warmup && buffer.len() >= config.minibatch_size {
                c.train_steps(&buffer, config, &mut agent_rng)?;
            }
        }
    }
    Ok(BanditTrace { agent, rows })
}
