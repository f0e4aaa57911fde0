//! Two-agent actor-critic controller with centralized critics.
//!
//! One agent sets how much PV serves the load, the other sets the signed storage
//! action. Each actor sees the state only; each critic sees the state and both
//! actions. The reward of a slot is minus its cost.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::domain::{res_energy, slot_cost_signed, DayProfile, SignedEssAction, SlotDispatch, SystemParams};
use crate::error::{Error, Result};
use crate::forecast::{Forecaster, SeriesForecaster};
use crate::nn::{self, stack, Activation, Adam, Arch, LayerSpec, Mlp, Network, Standardizer};
use crate::sim::{SlotObservation, Strategy};
use crate::data::SeriesKind;

pub const STATE_WIDTH: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DrState {
    pub e_ec: f64,
    pub ghi: f64,
    pub level: f64,
    pub price: f64,
    /// 1-based slot.
    pub t: usize,
}

impl DrState {
    pub fn vector(&self) -> [f64; STATE_WIDTH] {
        [self.e_ec, self.ghi, self.level, self.price, self.t as f64]
    }

    /// State at slot `t` (1-based) of a day.
    pub fn at(day: &DayProfile, t: usize, level: f64) -> Self {
        Self { e_ec: day.consumption[t - 1], ghi: day.irradiation[t - 1], level, price: day.price[t - 1], t }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    /// `None` after the last slot of the day.
    pub next: Option<DrState>,
    pub reward: f64,
    /// Storage action actually applied after projection onto the level bounds.
    pub applied_ess: f64,
    /// PV to load actually applied.
    pub applied_res: f64,
    /// `|requested - applied|` storage action, kWh.
    pub overshoot: f64,
}

/// Signed storage actions that keep the level within bounds.
pub fn feasible_ess_range(level: f64, params: &SystemParams) -> (f64, f64) {
    let eta = params.ess_efficiency;
    let lo = -(params.max_discharge().min(((level - params.level_min) * eta).max(0.0)));
    let hi = params.max_charge().min(((params.level_max - level) / eta).max(0.0));
    (lo, hi)
}

/// One environment step. The reward is minus the slot cost of the applied actions,
/// minus `penalty` per kWh the storage action had to be cut to respect the level bounds.
pub fn env_step(s: &DrState, a_res: f64, a_ess: f64, day: &DayProfile, params: &SystemParams, penalty: f64) -> Result<Transition> {
    let slots = day.len();
    if s.t == 0 || s.t > slots {
        return Err(Error::domain(format!("slot {} outside the episode of {slots} slots", s.t)));
    }
    if !a_res.is_finite() || !a_ess.is_finite() {
        return Err(Error::domain("actions must be finite"));
    }
    let e_res = res_energy(s.ghi, params)?;
    let applied_res = a_res.clamp(0.0, e_res).min(s.e_ec);
    let requested = a_ess.clamp(-params.max_discharge(), params.max_charge());
    let (lo, hi) = feasible_ess_range(s.level, params);
    let applied_ess = requested.clamp(lo, hi);
    let overshoot = (requested - applied_ess).abs();
    let action = SignedEssAction(applied_ess);
    let cost = slot_cost_signed(action, applied_res, s.e_ec, e_res, s.price, params)?;
    let level = action.apply(s.level, params).clamp(params.level_min, params.level_max);
    let next = (s.t < slots).then(|| DrState::at(day, s.t + 1, level));
    Ok(Transition { next, reward: -cost - penalty * overshoot, applied_ess, applied_res, overshoot })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaddpgConfig {
    pub actor_res_hidden: Vec<usize>,
    pub actor_ess_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    pub activation: Activation,
    pub lr_actor: f64,
    pub lr_critic: f64,
    pub tau: f64,
    pub gamma: f64,
    pub episodes: usize,
    pub replay_capacity: usize,
    pub batch: usize,
    /// Exploration noise as a fraction of each action's range.
    pub noise_start: f64,
    pub noise_end: f64,
    /// Share of the episodes over which the noise decays.
    pub noise_decay: f64,
    /// Penalty per kWh of storage action cut by the level bounds.
    pub penalty: f64,
}

impl Default for MaddpgConfig {
    fn default() -> Self {
        Self {
            actor_res_hidden: vec![100, 100],
            actor_ess_hidden: vec![200, 200, 200],
            critic_hidden: vec![100, 200, 200],
            activation: Activation::Relu,
            lr_actor: 1e-3,
            lr_critic: 1e-4,
            tau: 1e-3,
            gamma: 0.99,
            episodes: 4000,
            replay_capacity: 100_000,
            batch: 64,
            noise_start: 0.3,
            noise_end: 0.01,
            noise_decay: 0.8,
            penalty: 1.0,
        }
    }
}

impl MaddpgConfig {
    /// Noise fraction for an episode: linear decay, then flat.
    pub fn noise_at(&self, episode: usize) -> f64 {
        let span = (self.episodes as f64 * self.noise_decay).max(1.0);
        let f = (episode as f64 / span).min(1.0);
        self.noise_start + (self.noise_end - self.noise_start) * f
    }
}

/// Fixed-capacity FIFO of transitions with uniform sampling.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    /// `[state(5), u_res, u_ess, reward, next_state(5), done]` per row.
    rows: Vec<[f64; 14]>,
    head: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        Self { capacity: capacity.max(1), rows: Vec::new(), head: 0 }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn push(&mut self, row: [f64; 14]) {
        if self.rows.len() < self.capacity {
            self.rows.push(row);
        } else {
            self.rows[self.head] = row;
            self.head = (self.head + 1) % self.capacity;
        }
    }

    pub fn sample<R: Rng>(&self, n: usize, rng: &mut R) -> Vec<[f64; 14]> {
        (0..n).map(|_| self.rows[rng.gen_range(0..self.rows.len())]).collect()
    }

    /// Oldest row still held.
    pub fn oldest(&self) -> Option<&[f64; 14]> {
        if self.rows.len() < self.capacity {
            self.rows.first()
        } else {
            self.rows.get(self.head)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AgentKind {
    /// PV to load, squashed by a sigmoid onto `[0, E_RES]`.
    Res,
    /// Signed storage action, squashed by tanh onto `[-Dh·Δt, Ch·Δt]`.
    Ess,
}

/// One learner: actor and critic with their target copies.
#[derive(Debug, Clone)]
pub struct Agent {
    pub kind: AgentKind,
    pub actor: Mlp,
    pub critic: Mlp,
    pub target_actor: Mlp,
    pub target_critic: Mlp,
    actor_opt: Adam,
    critic_opt: Adam,
}

impl Agent {
    fn new<R: Rng>(kind: AgentKind, cfg: &MaddpgConfig, rng: &mut R) -> Self {
        let (hidden, squash) = match kind {
            AgentKind::Res => (&cfg.actor_res_hidden, Activation::Sigmoid),
            AgentKind::Ess => (&cfg.actor_ess_hidden, Activation::Tanh),
        };
        let mut layers: Vec<LayerSpec> = hidden.iter().map(|&w| LayerSpec::new(w, cfg.activation)).collect();
        layers.push(LayerSpec::new(1, squash));
        let actor = Mlp::new(STATE_WIDTH, layers, rng);
        let critic = Mlp::new(STATE_WIDTH + 2, stack(&cfg.critic_hidden, cfg.activation, 1), rng);
        Self {
            kind,
            actor_opt: Adam::new(actor.params.len()),
            critic_opt: Adam::new(critic.params.len()),
            target_actor: actor.clone(),
            target_critic: critic.clone(),
            actor,
            critic,
        }
    }

    fn unit_range(&self) -> (f64, f64) {
        match self.kind {
            AgentKind::Res => (0.0, 1.0),
            AgentKind::Ess => (-1.0, 1.0),
        }
    }
}

/// Maps squashed actor outputs to physical actions.
pub fn to_actions(u_res: f64, u_ess: f64, e_res: f64, params: &SystemParams) -> (f64, f64) {
    let a_res = u_res.clamp(0.0, 1.0) * e_res.max(0.0);
    let (lo, hi) = (-params.max_discharge(), params.max_charge());
    let a_ess = lo + (u_ess.clamp(-1.0, 1.0) + 1.0) * 0.5 * (hi - lo);
    (a_res, a_ess.clamp(lo, hi))
}

/// State standardizer: data statistics for the measured series, and the uniform
/// distribution over the level bounds and the slots for the rest.
pub fn state_scaler(days: &[DayProfile], params: &SystemParams) -> Standardizer {
    let mut rows = Vec::new();
    for d in days {
        for t in 0..d.len() {
            rows.extend_from_slice(&[d.consumption[t], d.irradiation[t], 0.0, d.price[t], 0.0]);
        }
    }
    let mut s = Standardizer::fit(&rows, STATE_WIDTH);
    let span = params.level_max - params.level_min;
    s.mean[2] = 0.5 * (params.level_max + params.level_min);
    s.std[2] = if span > 0.0 { span / 12f64.sqrt() } else { 1.0 };
    let t = params.slots_per_day as f64;
    s.mean[4] = 0.5 * (t + 1.0);
    s.std[4] = ((t * t - 1.0) / 12.0).sqrt().max(1.0);
    s
}

/// Trained actors ready for execution.
#[derive(Debug, Clone)]
pub struct MaddpgAgents {
    pub res_actor: Mlp,
    pub ess_actor: Mlp,
    pub scaler: Standardizer,
    pub params: SystemParams,
}

impl MaddpgAgents {
    /// Deterministic actions for a state, inside their bounds.
    pub fn act(&self, s: &DrState) -> Result<(f64, f64)> {
        let mut x = s.vector();
        self.scaler.apply(&mut x);
        let u_res = self.res_actor.forward(&x)[0];
        let u_ess = self.ess_actor.forward(&x)[0];
        let e_res = res_energy(s.ghi, &self.params)?;
        Ok(to_actions(u_res, u_ess, e_res, &self.params))
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for (name, actor) in [("actor_res.bin", &self.res_actor), ("actor_ess.bin", &self.ess_actor)] {
            let mut net = Network::from_arch(Arch::Dense(actor.clone()), 0);
            net.input_scaler = self.scaler.clone();
            nn::save_network(&net, &dir.join(name))?;
        }
        std::fs::write(dir.join("manifest.json"), serde_json::to_vec_pretty(&self.params)?)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let params: SystemParams = serde_json::from_slice(&std::fs::read(dir.join("manifest.json"))?)?;
        let mut actors = Vec::new();
        let mut scaler = None;
        for name in ["actor_res.bin", "actor_ess.bin"] {
            let net = nn::load_network(&dir.join(name))?;
            scaler = Some(net.input_scaler.clone());
            match net.arch {
                Arch::Dense(m) => actors.push(m),
                Arch::Gru(_) => return Err(Error::Format(format!("{name} is not a dense actor"))),
            }
        }
        let ess_actor = actors.pop().unwrap();
        let res_actor = actors.pop().unwrap();
        Ok(Self { res_actor, ess_actor, scaler: scaler.unwrap(), params })
    }
}

#[derive(Debug, Clone)]
pub struct TrainingLog {
    pub episode_returns: Vec<f64>,
}

impl TrainingLog {
    /// Mean return over the last `n` episodes.
    pub fn tail_mean(&self, n: usize) -> f64 {
        let k = n.min(self.episode_returns.len()).max(1);
        self.episode_returns[self.episode_returns.len().saturating_sub(k)..].iter().sum::<f64>() / k as f64
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
        w.write_record(["episode", "return"])?;
        for (i, r) in self.episode_returns.iter().enumerate() {
            w.write_record([(i + 1).to_string(), format!("{r:?}")])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn soft_update(target: &mut [f64], source: &[f64], tau: f64) {
    for (t, s) in target.iter_mut().zip(source) {
        *t = tau * s + (1.0 - tau) * *t;
    }
}

struct Learner {
    agents: [Agent; 2],
    cfg: MaddpgConfig,
}

impl Learner {
    /// One gradient step for both agents on a sampled batch.
    fn update(&mut self, batch: &[[f64; 14]]) -> Result<()> {
        let b = batch.len();
        let sw = STATE_WIDTH;
        let mut s = Vec::with_capacity(b * sw);
        let mut s2 = Vec::with_capacity(b * sw);
        let mut sa = Vec::with_capacity(b * (sw + 2));
        for row in batch {
            s.extend_from_slice(&row[0..5]);
            s2.extend_from_slice(&row[8..13]);
            sa.extend_from_slice(&row[0..7]);
        }
        // Target actions at the next states.
        let u2: Vec<Vec<f64>> = self.agents.iter().map(|a| a.target_actor.forward_batch(&s2, b)).collect();
        let mut s2a = Vec::with_capacity(b * (sw + 2));
        for i in 0..b {
            s2a.extend_from_slice(&s2[i * sw..(i + 1) * sw]);
            s2a.push(u2[0][i]);
            s2a.push(u2[1][i]);
        }
        // Current policy actions, used by the actor updates.
        let traces: Vec<_> = self.agents.iter().map(|a| a.actor.forward_trace(&s, b)).collect();

        for k in 0..2 {
            let agent = &mut self.agents[k];
            let q2 = agent.target_critic.forward_batch(&s2a, b);
            let y: Vec<f64> = batch
                .iter()
                .zip(&q2)
                .map(|(row, q)| row[7] + self.cfg.gamma * (1.0 - row[13]) * q)
                .collect();
            let trace = agent.critic.forward_trace(&sa, b);
            let (loss, dout) = nn::mse_loss_grad(trace.output(), &y);
            if !loss.is_finite() {
                return Err(Error::training("critic loss is not finite"));
            }
            let mut grad = vec![0.0; agent.critic.params.len()];
            agent.critic.backward(&trace, &dout, &mut grad);
            agent.critic_opt.step(&mut agent.critic.params, &grad, self.cfg.lr_critic)?;

            // Actor: ascend Q with the own action from the current policy and the
            // other agent's action from the buffer.
            let own = traces[k].output();
            let mut sa_pi = sa.clone();
            for i in 0..b {
                sa_pi[i * (sw + 2) + sw + k] = own[i];
            }
            let qtrace = agent.critic.forward_trace(&sa_pi, b);
            let dq = vec![-1.0 / b as f64; b];
            let mut scratch = vec![0.0; agent.critic.params.len()];
            let dx = agent.critic.backward(&qtrace, &dq, &mut scratch);
            let du: Vec<f64> = (0..b).map(|i| dx[i * (sw + 2) + sw + k]).collect();
            let mut agrad = vec![0.0; agent.actor.params.len()];
            agent.actor.backward(&traces[k], &du, &mut agrad);
            agent.actor_opt.step(&mut agent.actor.params, &agrad, self.cfg.lr_actor)?;

            soft_update(&mut agent.target_critic.params, &agent.critic.params, self.cfg.tau);
            soft_update(&mut agent.target_actor.params, &agent.actor.params, self.cfg.tau);
        }
        Ok(())
    }
}

/// Trains both agents on episodes drawn uniformly from `days`. Deterministic for a seed.
pub fn train_agents(days: &[DayProfile], cfg: &MaddpgConfig, params: &SystemParams, seed: u64) -> Result<(MaddpgAgents, TrainingLog)> {
    if days.is_empty() {
        return Err(Error::data("no training days"));
    }
    params.validate()?;
    for d in days {
        d.validate_for(params)?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scaler = state_scaler(days, params);
    let mut learner = Learner {
        agents: [Agent::new(AgentKind::Res, cfg, &mut rng), Agent::new(AgentKind::Ess, cfg, &mut rng)],
        cfg: cfg.clone(),
    };
    let mut buffer = ReplayBuffer::new(cfg.replay_capacity);
    let std_normal = Normal::new(0.0, 1.0).unwrap();
    let mut returns = Vec::with_capacity(cfg.episodes);
    let norm = |s: &DrState| {
        let mut x = s.vector();
        scaler.apply(&mut x);
        x
    };
    for episode in 0..cfg.episodes {
        let day = days.choose(&mut rng).unwrap();
        let sigma = cfg.noise_at(episode);
        let mut state = DrState::at(day, 1, params.level_initial);
        let mut total = 0.0;
        loop {
            let x = norm(&state);
            let mut u = [0.0; 2];
            for (k, agent) in learner.agents.iter().enumerate() {
                let (lo, hi) = agent.unit_range();
                let raw = agent.actor.forward(&x)[0] + sigma * (hi - lo) * std_normal.sample(&mut rng);
                u[k] = raw.clamp(lo, hi);
            }
            let e_res = res_energy(state.ghi, params)?;
            let (a_res, a_ess) = to_actions(u[0], u[1], e_res, params);
            let tr = env_step(&state, a_res, a_ess, day, params, cfg.penalty)?;
            total += tr.reward;
            let (next_x, done) = match &tr.next {
                Some(n) => (norm(n), 0.0),
                None => (x, 1.0),
            };
            let mut row = [0.0; 14];
            row[..5].copy_from_slice(&x);
            row[5] = u[0];
            row[6] = u[1];
            row[7] = tr.reward;
            row[8..13].copy_from_slice(&next_x);
            row[13] = done;
            buffer.push(row);
            if buffer.len() >= cfg.batch {
                let batch = buffer.sample(cfg.batch, &mut rng);
                learner
                    .update(&batch)
                    .map_err(|e| Error::Training(format!("episode {}: {e}", episode + 1)))?;
            }
            match tr.next {
                Some(n) => state = n,
                None => break,
            }
        }
        if !total.is_finite() {
            return Err(Error::Training(format!("episode {} return is not finite", episode + 1)));
        }
        returns.push(total);
    }
    let [res, ess] = learner.agents;
    let agents = MaddpgAgents { res_actor: res.actor, ess_actor: ess.actor, scaler, params: *params };
    Ok((agents, TrainingLog { episode_returns: returns }))
}

/// Runs the agents over a day with actual consumption in the state. Returns the
/// realized cost, for checks against the daily optimum.
pub fn rollout(agents: &MaddpgAgents, day: &DayProfile, params: &SystemParams) -> Result<f64> {
    let mut state = DrState::at(day, 1, params.level_initial);
    let mut cost = 0.0;
    loop {
        let (a_res, a_ess) = agents.act(&state)?;
        let tr = env_step(&state, a_res, a_ess, day, params, 0.0)?;
        cost -= tr.reward;
        match tr.next {
            Some(n) => state = n,
            None => return Ok(cost),
        }
    }
}

/// Executes the agents hour-ahead with forecast consumption in the state.
pub struct MaddpgStrategy<F = Forecaster> {
    pub agents: MaddpgAgents,
    pub forecaster: F,
}

impl<F: SeriesForecaster> Strategy for MaddpgStrategy<F> {
    fn name(&self) -> String {
        "maddpg".into()
    }

    fn decide(&mut self, obs: &SlotObservation, params: &SystemParams) -> Result<SlotDispatch> {
        let e_ec = self.forecaster.forecast(obs.past.consumption)?[0].max(0.0);
        let state = DrState { e_ec, ghi: obs.irradiation, level: obs.level, price: obs.price, t: obs.slot + 1 };
        let (a_res, a_ess) = self.agents.act(&state)?;
        let e_res = res_energy(obs.irradiation, params)?;
        let (lo, hi) = feasible_ess_range(obs.level, params);
        let action = SignedEssAction(a_ess.clamp(lo, hi));
        Ok(SlotDispatch::from_signed(action, a_res.min(e_ec).min(e_res), e_ec, e_res))
    }
}

impl MaddpgStrategy<Forecaster> {
    pub fn load(dir: &Path, forecaster_path: &Path) -> Result<Self> {
        Ok(Self { agents: MaddpgAgents::load(dir)?, forecaster: Forecaster::load(forecaster_path, SeriesKind::Consumption)? })
    }
}
