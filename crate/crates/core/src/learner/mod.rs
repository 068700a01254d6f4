//! Episode replay, TD targets with target networks, and the training loop.

mod batch;
mod replay;
mod run;

pub use batch::Batch;
pub use replay::ReplayBuffer;
pub use run::{evaluate, rollout, run_training, EvalStats, MetricLog, MetricRow, TrainingOutcome, METRICS_COLUMNS, METRICS_HEADER};

use rand::Rng;

use crate::agents::{AgentNet, AgentNetConfig, MASKED_UTILITY};
use crate::autodiff::{NodeId, ParamStore, RmsProp, Tape};
use crate::envs::{EpisodeRecord, TimeStep};
use crate::error::{Error, Result};
use crate::mixers::{MixerConfig, MixingNet};
use crate::oracles::JointQTable;

#[derive(Clone, Debug, PartialEq)]
pub struct LearnerConfig {
    pub agent: AgentNetConfig,
    /// `None` trains independent learners, one loss per agent.
    pub mixer: Option<MixerConfig>,
    pub gamma: f64,
    pub lr: f64,
    pub double_q: bool,
    /// Episodes between target-network refreshes.
    pub target_update_interval: u64,
}

/// Online and target parameters plus the optimiser.
#[derive(Clone, Debug)]
pub struct Learner {
    cfg: LearnerConfig,
    agent: AgentNet,
    mixer: Option<MixingNet>,
    pub online: ParamStore,
    pub target: ParamStore,
    opt: RmsProp,
    train_steps: u64,
    last_target_update: u64,
}

/// Output of the online forward pass over a batch.
struct Forward {
    tape: Tape,
    /// Utilities `[n·B, A]` per time step `0..=T` (or `0..T`).
    utilities: Vec<NodeId>,
    /// Chosen-action values: `[T·B, 1]` with a mixer, `[T·B, n]` without.
    chosen: NodeId,
}

impl Learner {
    pub fn new<R: Rng + ?Sized>(cfg: LearnerConfig, init_rng: &mut R) -> Result<Self> {
        if !(0.0..=1.0).contains(&cfg.gamma) {
            return Err(Error::Config("gamma must lie in [0, 1]".into()));
        }
        if cfg.target_update_interval == 0 {
            return Err(Error::Config("target_update_interval must be positive".into()));
        }
        let agent = AgentNet::new(cfg.agent.clone())?;
        let mixer = cfg.mixer.clone().map(MixingNet::new).transpose()?;
        if let Some(m) = &mixer {
            if m.config().n_agents != cfg.agent.n_agents {
                return Err(Error::Config("mixer and agent disagree on n_agents".into()));
            }
        }
        let mut online = ParamStore::new();
        agent.init_params(&mut online, init_rng);
        if let Some(m) = &mixer {
            m.init_params(&mut online, init_rng);
        }
        let target = online.snapshot();
        let opt = RmsProp::new(cfg.lr, 0.99);
        Ok(Self {
            cfg,
            agent,
            mixer,
            online,
            target,
            opt,
            train_steps: 0,
            last_target_update: 0,
        })
    }

    pub fn config(&self) -> &LearnerConfig {
        &self.cfg
    }

    pub fn agent(&self) -> &AgentNet {
        &self.agent
    }

    pub fn mixer(&self) -> Option<&MixingNet> {
        self.mixer.as_ref()
    }

    pub fn train_steps(&self) -> u64 {
        self.train_steps
    }

    fn n_agents(&self) -> usize {
        self.cfg.agent.n_agents
    }

    /// Agent utilities at every step `0..steps` of the batch.
    fn unroll(&self, tape: &mut Tape, store: &ParamStore, batch: &Batch, steps: usize) -> Result<Vec<NodeId>> {
        let rows = self.n_agents() * batch.b;
        let mut hidden = self
            .agent
            .hidden_dim()
            .map(|h| tape.constant(rows, h, vec![0.0; rows * h]));
        let mut out = Vec::with_capacity(steps);
        for t in 0..steps {
            let x = tape.constant(rows, batch.input_dim, batch.inputs[t].clone());
            let (q, h) = self.agent.forward(tape, store, x, hidden)?;
            hidden = h;
            out.push(q);
        }
        Ok(out)
    }

    fn online_forward(&self, store: &ParamStore, batch: &Batch) -> Result<Forward> {
        let mut tape = Tape::new();
        let steps = if batch.needs_bootstrap { batch.t + 1 } else { batch.t };
        let utilities = self.unroll(&mut tape, store, batch, steps)?;
        let n = self.n_agents();
        let per_t: Vec<NodeId> = (0..batch.t)
            .map(|t| {
                let g = tape.gather(utilities[t], &batch.actions[t]);
                let g = tape.reshape(g, n, batch.b);
                tape.transpose(g)
            })
            .collect();
        let q = tape.concat_rows(&per_t);
        let chosen = match &self.mixer {
            Some(m) => {
                let s = tape.constant(batch.t * batch.b, batch.state_dim, batch.states.clone());
                m.forward(&mut tape, store, q, s)?
            }
            None => q,
        };
        Ok(Forward { tape, utilities, chosen })
    }

    /// TD targets `y`, laid out like [`Forward::chosen`]. `online` supplies the
    /// greedy actions for double Q-learning.
    fn targets(&self, batch: &Batch, online: Option<&Forward>) -> Result<Vec<f64>> {
        let n = self.n_agents();
        let (b, t_len) = (batch.b, batch.t);
        let width = if self.mixer.is_some() { 1 } else { n };
        let mut y = vec![0.0; t_len * b * width];
        if !batch.needs_bootstrap {
            for (i, r) in batch.rewards.iter().enumerate() {
                for k in 0..width {
                    y[i * width + k] = *r;
                }
            }
            return Ok(y);
        }
        let mut tape = Tape::new();
        let target_q = self.unroll(&mut tape, &self.target, batch, t_len + 1)?;
        let a_n = self.cfg.agent.n_actions;
        // Per-agent bootstrap utilities at t + 1, t-major rows `[T·B, n]`.
        let mut next = vec![0.0; t_len * b * n];
        for t in 0..t_len {
            let tq = tape.value(target_q[t + 1]);
            let oq = match (self.cfg.double_q, online) {
                (true, Some(f)) => Some(f.tape.value(f.utilities[t + 1])),
                _ => None,
            };
            for a in 0..n {
                for bi in 0..b {
                    let row = a * b + bi;
                    let mask = &batch.next_avail[t][row * a_n..(row + 1) * a_n];
                    let pick = |q: &[f64]| -> usize {
                        let mut best = (0, f64::NEG_INFINITY);
                        for (u, (&v, &ok)) in q[row * a_n..(row + 1) * a_n].iter().zip(mask).enumerate() {
                            let v = if ok { v } else { MASKED_UTILITY };
                            if v > best.1 {
                                best = (u, v);
                            }
                        }
                        best.0
                    };
                    let u = pick(oq.unwrap_or(tq));
                    next[(t * b + bi) * n + a] = if mask[u] { tq[row * a_n + u] } else { MASKED_UTILITY };
                }
            }
        }
        let boot: Vec<f64> = match &self.mixer {
            Some(m) => {
                let mut mt = Tape::new();
                let q = mt.constant(t_len * b, n, next);
                let s = mt.constant(t_len * b, batch.state_dim, batch.next_states.clone());
                let out = m.forward(&mut mt, &self.target, q, s)?;
                mt.value(out).to_vec()
            }
            None => next,
        };
        for i in 0..t_len * b {
            for k in 0..width {
                y[i * width + k] = if batch.terminated[i] {
                    batch.rewards[i]
                } else {
                    batch.rewards[i] + self.cfg.gamma * boot[i * width + k]
                };
            }
        }
        Ok(y)
    }

    fn loss_node(&self, store: &ParamStore, batch: &Batch) -> Result<(Forward, NodeId)> {
        let mut fwd = self.online_forward(store, batch)?;
        let y = self.targets(batch, Some(&fwd))?;
        let width = if self.mixer.is_some() { 1 } else { self.n_agents() };
        let weight: Vec<f64> = batch.mask.iter().flat_map(|&m| std::iter::repeat_n(m, width)).collect();
        let loss = fwd.tape.weighted_sq_err(fwd.chosen, y, weight);
        Ok((fwd, loss))
    }

    /// TD targets for `episodes`, as `[T·B]` (mixed) or `[T·B·n]` (IQL) in
    /// t-major order; padded entries hold the bare reward 0.
    pub fn td_targets(&self, episodes: &[&EpisodeRecord]) -> Result<Vec<f64>> {
        let batch = Batch::new(episodes, &self.agent)?;
        let fwd = if self.cfg.double_q {
            Some(self.online_forward(&self.online, &batch)?)
        } else {
            None
        };
        self.targets(&batch, fwd.as_ref())
    }

    /// Current online `Q_tot(s_t, u_t)` (or per-agent `Q_a` for IQL) for the
    /// stored actions, in the same layout as [`Learner::td_targets`].
    pub fn chosen_values(&self, episodes: &[&EpisodeRecord]) -> Result<Vec<f64>> {
        let batch = Batch::new(episodes, &self.agent)?;
        let fwd = self.online_forward(&self.online, &batch)?;
        Ok(fwd.tape.value(fwd.chosen).to_vec())
    }

    /// Summed masked squared TD error under parameters `store`.
    pub fn loss_with(&self, store: &ParamStore, episodes: &[&EpisodeRecord]) -> Result<f64> {
        let batch = Batch::new(episodes, &self.agent)?;
        let (fwd, loss) = self.loss_node(store, &batch)?;
        Ok(fwd.tape.scalar(loss))
    }

    /// Loss and gradients with respect to the online parameters. The
    /// gradients are left in `self.online`'s gradient buffers.
    pub fn loss_and_gradients(&mut self, episodes: &[&EpisodeRecord]) -> Result<f64> {
        let batch = Batch::new(episodes, &self.agent)?;
        let (fwd, loss) = self.loss_node(&self.online, &batch)?;
        let value = fwd.tape.scalar(loss);
        if !value.is_finite() {
            return Err(Error::NonFinite(format!("loss is {value}")));
        }
        self.online.zero_grads();
        fwd.tape.backward(loss, &mut self.online);
        Ok(value)
    }

    /// One RMSprop step on a batch of episodes. `episode` is the number of
    /// episodes collected so far and drives target refreshes.
    pub fn train_step(&mut self, episodes: &[&EpisodeRecord], episode: u64) -> Result<f64> {
        let loss = self.loss_and_gradients(episodes)?;
        self.opt.step(&mut self.online)?;
        self.train_steps += 1;
        if episode.saturating_sub(self.last_target_update) >= self.cfg.target_update_interval {
            self.update_target();
            self.last_target_update = episode;
        }
        Ok(loss)
    }

    pub fn update_target(&mut self) {
        self.target.copy_values_from(&self.online);
    }

    /// Per-agent utilities at a fresh episode step (zero hidden state, no
    /// previous action), unmasked.
    pub fn utilities_at(&self, ts: &TimeStep) -> Result<Vec<Vec<f64>>> {
        let inputs = (0..self.n_agents())
            .map(|a| self.agent.input_for(&ts.obs[a], None, a))
            .collect::<Result<Vec<_>>>()?;
        let hidden = self.agent.initial_hidden(self.n_agents());
        Ok(self.agent.q_values(&self.online, &inputs, hidden.as_deref())?.0)
    }

    /// `Q_tot` over every joint action at a fresh episode step.
    pub fn q_tot_table(&self, ts: &TimeStep) -> Result<JointQTable> {
        let mixer = self
            .mixer
            .as_ref()
            .ok_or_else(|| Error::Config("IQL has no joint value".into()))?;
        let q = self.utilities_at(ts)?;
        let n = self.n_agents();
        let a_n = self.cfg.agent.n_actions;
        let table = JointQTable::from_fn(n, a_n, |_| 0.0)?;
        let rows: Vec<Vec<f64>> = (0..table.values.len())
            .map(|i| {
                crate::envs::joint_actions(i, n, a_n)
                    .iter()
                    .enumerate()
                    .map(|(a, &u)| q[a][u])
                    .collect()
            })
            .collect();
        let values = mixer.mix_many(&self.online, &rows, &ts.state)?;
        JointQTable::new(n, a_n, values)
    }

    /// `max_u Q_tot(s, u)` at a fresh episode step. Every mixer here is
    /// monotone in each utility, so the maximum sits at the per-agent
    /// masked maxima.
    pub fn max_q_tot(&self, ts: &TimeStep) -> Result<Option<f64>> {
        let Some(mixer) = &self.mixer else { return Ok(None) };
        let q = self.utilities_at(ts)?;
        let best: Vec<f64> = q
            .iter()
            .zip(&ts.avail_actions)
            .map(|(qa, mask)| {
                qa.iter()
                    .zip(mask)
                    .map(|(&v, &ok)| if ok { v } else { MASKED_UTILITY })
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect();
        Ok(Some(mixer.mix(&self.online, &best, &ts.state)?))
    }
}
