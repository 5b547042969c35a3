//! Proximal policy optimization over placement episodes.

use std::sync::Arc;
use std::time::Instant;

use macroplace::env::{Action, EnvError, Finalized, PlacementEnv};
use macroplace::seed::{self, stream};
use macroplace::stdplace::StandardCellPlacer;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::optim::{Adam, AdamConfig, GradBuffer};
use crate::policy::{self, GraphInput, PolicyConfig, PolicyError, PolicyOutput, PolicyParams, Prepared};
use crate::tensor::{Tape, TensorError, Var};

#[derive(Debug, Error)]
pub enum PpoError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("episode has no terminal reward")]
    IncompleteEpisode,
    #[error("non-finite loss; parameters restored")]
    NonFiniteLoss,
    #[error("no steps to train on")]
    EmptyBatch,
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Optimization passes over each rollout batch.
    pub epochs: usize,
    /// Collect/update rounds.
    pub rounds: usize,
    pub episodes_per_update: usize,
    pub lr: f64,
    pub clip: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    /// Global gradient-norm cap; `None` disables clipping.
    pub max_grad_norm: Option<f64>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 32,
            rounds: 10,
            episodes_per_update: 16,
            lr: 2.5e-4,
            clip: 0.2,
            gamma: 0.99,
            lambda: 0.95,
            entropy_coef: 0.01,
            value_coef: 0.5,
            max_grad_norm: Some(0.5),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), PpoError> {
        let bad = |m: &str| Err(PpoError::InvalidConfig(m.into()));
        if self.epochs < 1 {
            return bad("epochs must be at least 1");
        }
        if !(self.lr > 0.0) {
            return bad("lr must be positive");
        }
        if !(self.clip > 0.0 && self.clip < 1.0) {
            return bad("clip must lie in (0, 1)");
        }
        if !(0.0..=1.0).contains(&self.gamma) || !(0.0..=1.0).contains(&self.lambda) {
            return bad("gamma and lambda must lie in [0, 1]");
        }
        if self.episodes_per_update < 1 {
            return bad("episodes_per_update must be at least 1");
        }
        if self.entropy_coef < 0.0 || self.value_coef < 0.0 {
            return bad("loss coefficients must be non-negative");
        }
        if matches!(self.max_grad_norm, Some(n) if !(n > 0.0)) {
            return bad("max_grad_norm must be positive");
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig { lr: self.lr, ..Default::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub macro_id: usize,
    pub action: usize,
    pub mask: Arc<Vec<bool>>,
    pub log_prob: f64,
    pub value: f64,
    /// Step reward; the last step also carries the terminal reward.
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Terminal {
    Completed {
        wirelength: f64,
        congestion: f64,
        overall_reward: f64,
        exploration_bonus: f64,
        /// `(overall_reward + exploration_bonus) / baseline_wl`
        scaled: f64,
    },
    Aborted { penalty: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub steps: Vec<StepRecord>,
    pub terminal: Option<Terminal>,
}

impl EpisodeRecord {
    pub fn total_return(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }

    /// Reward received at episode end.
    pub fn terminal_return(&self) -> Option<f64> {
        self.terminal.as_ref().map(|t| match t {
            Terminal::Completed { scaled, .. } => *scaled,
            Terminal::Aborted { penalty } => *penalty,
        })
    }

    pub fn wirelength(&self) -> Option<f64> {
        match self.terminal {
            Some(Terminal::Completed { wirelength, .. }) => Some(wirelength),
            _ => None,
        }
    }
}

fn add_terminal(steps: &mut [StepRecord], reward: f64) {
    if let Some(last) = steps.last_mut() {
        last.reward += reward;
    }
}

fn completed(f: &Finalized, baseline_wl: f64) -> Terminal {
    Terminal::Completed {
        wirelength: f.wirelength,
        congestion: f.congestion,
        overall_reward: f.overall_reward,
        exploration_bonus: f.exploration_bonus,
        scaled: (f.overall_reward + f.exploration_bonus) / baseline_wl,
    }
}

/// Everything a rollout needs besides the environment.
pub struct Actor<'a> {
    pub params: &'a PolicyParams,
    pub input: &'a GraphInput,
    pub placer: &'a dyn StandardCellPlacer,
    /// Terminal reward scale.
    pub baseline_wl: f64,
}

/// Play one episode. `rng = None` acts greedily.
pub fn play_episode(
    env: &mut PlacementEnv,
    actor: &Actor,
    prepared: &Prepared,
    episode_seed: u64,
    mut rng: Option<&mut rand_chacha::ChaCha8Rng>,
) -> Result<(EpisodeRecord, Option<Finalized>), PpoError> {
    env.reset(episode_seed);
    let w = env.grid_size();
    let mut steps = Vec::new();
    while !env.state().done {
        let mask = env.legal_mask();
        if !mask.any() {
            let penalty = env.abort()?;
            add_terminal(&mut steps, penalty);
            return Ok((EpisodeRecord { steps, terminal: Some(Terminal::Aborted { penalty }) }, None));
        }
        let macro_id = env.state().next_macro;
        let out: PolicyOutput = prepared.step(actor.params, macro_id, &mask)?;
        let action = match rng.as_deref_mut() {
            Some(r) => out.sample(r),
            None => out.argmax(),
        };
        let outcome = env.step(Action::from_index(action, w))?;
        if outcome.info.aborted {
            add_terminal(&mut steps, outcome.reward);
            return Ok((
                EpisodeRecord { steps, terminal: Some(Terminal::Aborted { penalty: outcome.reward }) },
                None,
            ));
        }
        steps.push(StepRecord {
            macro_id,
            action,
            mask: Arc::new(mask.legal),
            log_prob: out.log_probs[action],
            value: out.value,
            reward: outcome.reward,
        });
    }
    let fin = env.finalize(actor.placer)?;
    let terminal = completed(&fin, actor.baseline_wl);
    if let Terminal::Completed { scaled, .. } = terminal {
        add_terminal(&mut steps, scaled);
    }
    Ok((EpisodeRecord { steps, terminal: Some(terminal) }, Some(fin)))
}

/// Sample `n` episodes. Episode `k` uses stream index `first + k`, so the
/// records depend only on `(seed, first, n)` and the parameters.
pub fn collect_rollouts(
    env: &mut PlacementEnv,
    actor: &Actor,
    n: usize,
    seed: u64,
    first: u64,
) -> Result<Vec<EpisodeRecord>, PpoError> {
    if n == 0 {
        return Ok(Vec::new());
    }
    let prepared = Prepared::new(actor.params, actor.input)?;
    (0..n as u64)
        .map(|k| {
            let idx = first + k;
            let mut rng = seed::rng(seed, stream::ROLLOUT, idx);
            play_episode(env, actor, &prepared, seed::derive(seed, stream::EPISODE, idx), Some(&mut rng))
                .map(|(r, _)| r)
        })
        .collect()
}

/// Argmax rollout from `episode_seed`.
pub fn greedy_episode(
    env: &mut PlacementEnv,
    actor: &Actor,
    episode_seed: u64,
) -> Result<(EpisodeRecord, Option<Finalized>), PpoError> {
    let prepared = Prepared::new(actor.params, actor.input)?;
    play_episode(env, actor, &prepared, episode_seed, None)
}

/// Generalized advantage estimates and return targets, with the value of
/// the terminal state taken as zero.
pub fn compute_advantages(record: &EpisodeRecord, gamma: f64, lambda: f64) -> Result<(Vec<f64>, Vec<f64>), PpoError> {
    if record.terminal.is_none() {
        return Err(PpoError::IncompleteEpisode);
    }
    let n = record.steps.len();
    let mut adv = vec![0.0; n];
    let mut running = 0.0;
    for t in (0..n).rev() {
        let next_value = if t + 1 < n { record.steps[t + 1].value } else { 0.0 };
        let s = &record.steps[t];
        let delta = s.reward + gamma * next_value - s.value;
        running = delta + gamma * lambda * running;
        adv[t] = running;
    }
    let returns = adv.iter().zip(&record.steps).map(|(a, s)| a + s.value).collect();
    Ok((adv, returns))
}

/// Flattened training batch.
#[derive(Debug, Clone)]
pub struct Batch {
    pub macro_ids: Vec<usize>,
    pub actions: Vec<usize>,
    /// Row-major `B x W^2`.
    pub masks: Arc<Vec<bool>>,
    pub old_log_probs: Vec<f64>,
    /// Normalized to zero mean and unit variance.
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl Batch {
    pub fn new(records: &[EpisodeRecord], gamma: f64, lambda: f64) -> Result<Self, PpoError> {
        let mut b = Batch {
            macro_ids: Vec::new(),
            actions: Vec::new(),
            masks: Arc::new(Vec::new()),
            old_log_probs: Vec::new(),
            advantages: Vec::new(),
            returns: Vec::new(),
        };
        let mut masks = Vec::new();
        for r in records {
            let (adv, ret) = compute_advantages(r, gamma, lambda)?;
            for s in &r.steps {
                b.macro_ids.push(s.macro_id);
                b.actions.push(s.action);
                masks.extend_from_slice(&s.mask);
                b.old_log_probs.push(s.log_prob);
            }
            b.advantages.extend(adv);
            b.returns.extend(ret);
        }
        if b.macro_ids.is_empty() {
            return Err(PpoError::EmptyBatch);
        }
        b.masks = Arc::new(masks);
        normalize(&mut b.advantages);
        Ok(b)
    }

    pub fn len(&self) -> usize {
        self.macro_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.macro_ids.is_empty()
    }
}

/// Zero mean, unit variance; the deviation is floored at 1e-8.
pub fn normalize(xs: &mut [f64]) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return;
    }
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt().max(1e-8);
    xs.iter_mut().for_each(|x| *x = (*x - mean) / sd);
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
}

/// Loss terms recorded on a tape.
pub struct Loss<'t> {
    pub total: Var<'t>,
    pub stats: UpdateStats,
}

/// `-mean(min(r A, clip(r) A)) + c_v mean((V - R)^2) - c_e H` for `batch`.
pub fn ppo_loss<'t>(
    tape: &'t Tape,
    params: &PolicyParams,
    input: &GraphInput,
    batch: &Batch,
    config: &TrainConfig,
) -> Result<Loss<'t>, PpoError> {
    let b = batch.len();
    let p = params.bind(tape);
    let enc = policy::encode(&p, &params.config, input)?;
    let head = policy::heads(&p, &enc, &batch.macro_ids, batch.masks.clone());

    let col = |v: &[f64]| tape.constant(crate::tensor::Matrix::from_vec(v.len(), 1, v.to_vec()));
    let new_lp = head.log_probs.gather_cols(&batch.actions);
    let ratio = new_lp.sub(col(&batch.old_log_probs)).exp();
    let adv = col(&batch.advantages);
    let surr = ratio.mul(adv).minimum(ratio.clamp(1.0 - config.clip, 1.0 + config.clip).mul(adv));
    let policy_loss = surr.mean().scale(-1.0);

    let value_loss = head.values.sub(col(&batch.returns)).square().mean();

    let plogp = head.log_probs.mask_fill(batch.masks.clone(), 0.0).mul(head.log_probs.exp());
    let entropy = plogp.sum().scale(-1.0 / b as f64);

    let total = policy_loss
        .add(value_loss.scale(config.value_coef))
        .sub(entropy.scale(config.entropy_coef));

    let clipped = ratio.value().data.iter().filter(|r| (*r - 1.0).abs() > config.clip).count();
    Ok(Loss {
        total,
        stats: UpdateStats {
            policy_loss: policy_loss.item(),
            value_loss: value_loss.item(),
            entropy: entropy.item(),
            clip_fraction: clipped as f64 / b as f64,
        },
    })
}

/// `config.epochs` full-batch Adam steps. On a non-finite loss or gradient
/// the parameters and optimizer state are restored and `NonFiniteLoss` is
/// returned. Stats are averaged over passes.
pub fn update(
    params: &mut PolicyParams,
    adam: &mut Adam,
    input: &GraphInput,
    records: &[EpisodeRecord],
    config: &TrainConfig,
) -> Result<UpdateStats, PpoError> {
    let batch = Batch::new(records, config.gamma, config.lambda)?;
    let saved = (params.clone(), adam.clone());
    let mut sum = UpdateStats::default();
    let mut grads = GradBuffer::new(params);
    for _ in 0..config.epochs {
        grads.zero();
        let stats = {
            let tape = Tape::new();
            let loss = ppo_loss(&tape, params, input, &batch, config)?;
            let total = loss.total.item();
            let g = tape.backward(loss.total)?;
            if !total.is_finite() {
                None
            } else {
                grads.accumulate(&g);
                Some(loss.stats)
            }
        };
        let Some(stats) = stats.filter(|_| grads.is_finite()) else {
            *params = saved.0;
            *adam = saved.1;
            return Err(PpoError::NonFiniteLoss);
        };
        if let Some(cap) = config.max_grad_norm {
            let norm = grads.norm();
            if norm > cap {
                grads.scale(cap / norm);
            }
        }
        adam.step(params, &grads);
        sum.policy_loss += stats.policy_loss;
        sum.value_loss += stats.value_loss;
        sum.entropy += stats.entropy;
        sum.clip_fraction += stats.clip_fraction;
    }
    let k = config.epochs as f64;
    Ok(UpdateStats {
        policy_loss: sum.policy_loss / k,
        value_loss: sum.value_loss / k,
        entropy: sum.entropy / k,
        clip_fraction: sum.clip_fraction / k,
    })
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundStats {
    pub round: usize,
    pub episodes: usize,
    pub mean_return: f64,
    pub mean_terminal: f64,
    /// Over completed episodes; `None` if every episode aborted.
    pub mean_wirelength: Option<f64>,
    pub aborted: usize,
    #[serde(flatten)]
    pub update: UpdateStats,
    pub wall_secs: f64,
}

/// Rollout/update loop over one design.
pub struct Trainer {
    pub config: TrainConfig,
    pub env: PlacementEnv,
    pub input: GraphInput,
    pub params: PolicyParams,
    pub adam: Adam,
    pub placer: Box<dyn StandardCellPlacer>,
    pub baseline_wl: f64,
    pub round: usize,
    /// Terminal return of every episode so far, in order.
    pub terminal_returns: Vec<f64>,
}

impl Trainer {
    /// Initialize parameters from `config.seed` and measure the random
    /// baseline used to scale terminal rewards.
    pub fn new(
        mut env: PlacementEnv,
        mut policy_config: PolicyConfig,
        config: TrainConfig,
        placer: Box<dyn StandardCellPlacer>,
    ) -> Result<Self, PpoError> {
        config.validate()?;
        policy_config.grid_size = env.grid_size();
        policy_config.backbone = env.config().backbone;
        let mut rng = seed::rng(config.seed, stream::PARAM_INIT, 0);
        let params = PolicyParams::new(policy_config, &mut rng);
        Self::with_params(env_baseline(&mut env, placer.as_ref(), config.seed)?, env, params, config, placer)
    }

    pub fn with_params(
        baseline_wl: f64,
        env: PlacementEnv,
        params: PolicyParams,
        config: TrainConfig,
        placer: Box<dyn StandardCellPlacer>,
    ) -> Result<Self, PpoError> {
        config.validate()?;
        let input = GraphInput::new(env.graph(), env.metadata());
        let adam = Adam::new(config.adam(), &params);
        Ok(Self { config, env, input, params, adam, placer, baseline_wl, round: 0, terminal_returns: Vec::new() })
    }

    pub fn actor(&self) -> Actor<'_> {
        Actor { params: &self.params, input: &self.input, placer: self.placer.as_ref(), baseline_wl: self.baseline_wl }
    }

    /// Collect one batch and update on it.
    pub fn run_round(&mut self) -> Result<RoundStats, PpoError> {
        let start = Instant::now();
        let n = self.config.episodes_per_update;
        let first = (self.round * n) as u64;
        let actor = Actor {
            params: &self.params,
            input: &self.input,
            placer: self.placer.as_ref(),
            baseline_wl: self.baseline_wl,
        };
        let records = collect_rollouts(&mut self.env, &actor, n, self.config.seed, first)?;
        let update = update(&mut self.params, &mut self.adam, &self.input, &records, &self.config)?;
        let terminals: Vec<f64> = records.iter().filter_map(EpisodeRecord::terminal_return).collect();
        self.terminal_returns.extend(&terminals);
        let wls: Vec<f64> = records.iter().filter_map(EpisodeRecord::wirelength).collect();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
        let stats = RoundStats {
            round: self.round,
            episodes: records.len(),
            mean_return: mean(&records.iter().map(EpisodeRecord::total_return).collect::<Vec<_>>()),
            mean_terminal: mean(&terminals),
            mean_wirelength: (!wls.is_empty()).then(|| mean(&wls)),
            aborted: records.len() - wls.len(),
            update,
            wall_secs: start.elapsed().as_secs_f64(),
        };
        self.round += 1;
        Ok(stats)
    }

    /// Run the remaining rounds, calling `after_round` once per round.
    pub fn train(
        &mut self,
        mut after_round: impl FnMut(&Trainer, &RoundStats) -> Result<(), PpoError>,
    ) -> Result<Vec<RoundStats>, PpoError> {
        let mut all = Vec::new();
        while self.round < self.config.rounds {
            let stats = self.run_round()?;
            log::info!(
                "round {} mean terminal {:.4} wl {:?}",
                stats.round,
                stats.mean_terminal,
                stats.mean_wirelength
            );
            after_round(self, &stats)?;
            all.push(stats);
        }
        Ok(all)
    }

    /// Greedy rollout with the current parameters.
    pub fn greedy(&mut self) -> Result<(EpisodeRecord, Option<Finalized>), PpoError> {
        let seed = seed::derive(self.config.seed, stream::EPISODE, u64::MAX);
        let actor = Actor {
            params: &self.params,
            input: &self.input,
            placer: self.placer.as_ref(),
            baseline_wl: self.baseline_wl,
        };
        greedy_episode(&mut self.env, &actor, seed)
    }
}

/// Random-placement wirelength used as the terminal reward scale.
pub fn env_baseline(env: &mut PlacementEnv, placer: &dyn StandardCellPlacer, seed: u64) -> Result<f64, PpoError> {
    let wl = env.random_baseline(placer, seed::derive(seed, stream::BASELINE, 0))?;
    Ok(wl.max(f64::MIN_POSITIVE))
}
