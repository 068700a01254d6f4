//! Per-agent utility networks and decentralised ε-greedy action selection.
//!
//! An agent network sees only its own observation, optionally its previous
//! action and its id. Batched tensors put agents in contiguous row blocks:
//! row `a * batch + b` belongs to agent `a`, sample `b`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{dense, dense_act, gru_step, init_gru, Activation, NodeId, ParamStore, Tape};
use crate::error::{Error, Result};

/// Stand-in for −∞ on unavailable actions before any argmax or max.
pub const MASKED_UTILITY: f64 = -1e10;

/// What sits between the input and output layers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentCore {
    /// GRU cell carrying the action-observation history.
    Gru,
    /// A second dense + ReLU layer (feed-forward agent).
    Mlp,
    /// Input layer straight to output layer.
    None,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AgentNetConfig {
    pub obs_dim: usize,
    pub n_actions: usize,
    pub n_agents: usize,
    pub hidden: usize,
    pub core: AgentCore,
    pub last_action: bool,
    pub agent_id: bool,
    /// One parameter set for all agents (ids disambiguate) or one per agent.
    pub shared: bool,
}

/// Concatenates `obs ⊕ last_action ⊕ agent_id`, skipping absent parts.
pub fn agent_input(obs: &[f64], last_action: Option<&[f64]>, agent_id: Option<&[f64]>) -> Vec<f64> {
    let mut v = obs.to_vec();
    if let Some(a) = last_action {
        v.extend_from_slice(a);
    }
    if let Some(i) = agent_id {
        v.extend_from_slice(i);
    }
    v
}

pub fn one_hot(index: usize, n: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[index] = 1.0;
    v
}

/// Utility network `Q_a(τ^a, ·)`: dense + ReLU, optional core, dense output.
#[derive(Clone, Debug)]
pub struct AgentNet {
    cfg: AgentNetConfig,
}

impl AgentNet {
    pub fn new(cfg: AgentNetConfig) -> Result<Self> {
        if cfg.hidden == 0 || cfg.n_actions < 2 || cfg.n_agents == 0 {
            return Err(Error::Config("agent net needs hidden > 0, n_actions >= 2, n_agents >= 1".into()));
        }
        Ok(Self { cfg })
    }

    pub fn config(&self) -> &AgentNetConfig {
        &self.cfg
    }

    pub fn input_dim(&self) -> usize {
        let c = &self.cfg;
        c.obs_dim + if c.last_action { c.n_actions } else { 0 } + if c.agent_id { c.n_agents } else { 0 }
    }

    /// Width of the recurrent state, when the core is a GRU.
    pub fn hidden_dim(&self) -> Option<usize> {
        (self.cfg.core == AgentCore::Gru).then_some(self.cfg.hidden)
    }

    fn prefix(&self, agent: usize) -> String {
        if self.cfg.shared {
            "agent".to_string()
        } else {
            format!("agent{agent}")
        }
    }

    pub fn init_params<R: Rng + ?Sized>(&self, store: &mut ParamStore, rng: &mut R) {
        let sets = if self.cfg.shared { 1 } else { self.cfg.n_agents };
        let h = self.cfg.hidden;
        for a in 0..sets {
            let p = self.prefix(a);
            store.init_dense(&format!("{p}.fc1"), self.input_dim(), h, rng);
            match self.cfg.core {
                AgentCore::Gru => init_gru(store, &format!("{p}.rnn"), h, h, rng),
                AgentCore::Mlp => store.init_dense(&format!("{p}.fc_mid"), h, h, rng),
                AgentCore::None => {}
            }
            store.init_dense(&format!("{p}.fc2"), h, self.cfg.n_actions, rng);
        }
    }

    /// Input vector for one agent. `last_action = None` (first step of an
    /// episode) gives the zero vector in the last-action slot.
    pub fn input_for(&self, obs: &[f64], last_action: Option<usize>, agent: usize) -> Result<Vec<f64>> {
        if obs.len() != self.cfg.obs_dim {
            return Err(Error::Shape(format!("observation width {} vs {}", obs.len(), self.cfg.obs_dim)));
        }
        let la = self.cfg.last_action.then(|| match last_action {
            Some(u) => one_hot(u, self.cfg.n_actions),
            None => vec![0.0; self.cfg.n_actions],
        });
        let id = self.cfg.agent_id.then(|| one_hot(agent, self.cfg.n_agents));
        Ok(agent_input(obs, la.as_deref(), id.as_deref()))
    }

    fn forward_block(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        prefix: &str,
        x: NodeId,
        h: Option<NodeId>,
    ) -> Result<(NodeId, Option<NodeId>)> {
        let x = dense_act(tape, store, &format!("{prefix}.fc1"), x, Activation::Relu)?;
        let (core, h_next) = match self.cfg.core {
            AgentCore::Gru => {
                let h = h.ok_or_else(|| Error::Shape("GRU agent needs a hidden state".into()))?;
                let h_next = gru_step(tape, store, &format!("{prefix}.rnn"), x, h)?;
                (h_next, Some(h_next))
            }
            AgentCore::Mlp => (dense_act(tape, store, &format!("{prefix}.fc_mid"), x, Activation::Relu)?, None),
            AgentCore::None => (x, None),
        };
        let q = dense(tape, store, &format!("{prefix}.fc2"), core)?;
        Ok((q, h_next))
    }

    /// Utilities for all agents at one time step.
    ///
    /// `inputs` is `[n_agents * batch, input_dim]` in agent-major row order;
    /// `hidden` is `[n_agents * batch, H]` for a GRU core. Returns the
    /// `[n_agents * batch, n_actions]` utilities and the next hidden state.
    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        inputs: NodeId,
        hidden: Option<NodeId>,
    ) -> Result<(NodeId, Option<NodeId>)> {
        let (rows, width) = tape.shape(inputs);
        if width != self.input_dim() {
            return Err(Error::Shape(format!("agent input width {width} vs {}", self.input_dim())));
        }
        if rows % self.cfg.n_agents != 0 {
            return Err(Error::Shape("agent rows must be a multiple of n_agents".into()));
        }
        if self.cfg.shared {
            return self.forward_block(tape, store, "agent", inputs, hidden);
        }
        let batch = rows / self.cfg.n_agents;
        let mut qs = Vec::with_capacity(self.cfg.n_agents);
        let mut hs = Vec::with_capacity(self.cfg.n_agents);
        for a in 0..self.cfg.n_agents {
            let x = tape.slice_rows(inputs, a * batch, batch);
            let h = hidden.map(|h| tape.slice_rows(h, a * batch, batch));
            let (q, h_next) = self.forward_block(tape, store, &self.prefix(a), x, h)?;
            qs.push(q);
            if let Some(h) = h_next {
                hs.push(h);
            }
        }
        let q = tape.concat_rows(&qs);
        let h = (!hs.is_empty()).then(|| tape.concat_rows(&hs));
        Ok((q, h))
    }

    /// Zero hidden state for `rows` agent rows, or `None` without recurrence.
    pub fn initial_hidden(&self, rows: usize) -> Option<Vec<f64>> {
        self.hidden_dim().map(|h| vec![0.0; rows * h])
    }

    /// Forward-only step for acting: one row per agent. Returns each agent's
    /// utilities (unmasked) and the next hidden state.
    pub fn q_values(
        &self,
        store: &ParamStore,
        inputs: &[Vec<f64>],
        hidden: Option<&[f64]>,
    ) -> Result<(Vec<Vec<f64>>, Option<Vec<f64>>)> {
        let n = inputs.len();
        let mut tape = Tape::new();
        let x = tape.constant(n, self.input_dim(), inputs.concat());
        let h = match (self.hidden_dim(), hidden) {
            (Some(hd), Some(h)) => {
                if h.len() != n * hd {
                    return Err(Error::Shape(format!("hidden length {} vs {}", h.len(), n * hd)));
                }
                Some(tape.constant(n, hd, h.to_vec()))
            }
            (Some(_), None) => return Err(Error::Shape("GRU agent needs a hidden state".into())),
            (None, _) => None,
        };
        let (q, h_next) = self.forward(&mut tape, store, x, h)?;
        let na = self.cfg.n_actions;
        let utilities = tape.value(q).chunks(na).map(<[f64]>::to_vec).collect();
        Ok((utilities, h_next.map(|h| tape.value(h).to_vec())))
    }
}

/// Replaces utilities of unavailable actions with [`MASKED_UTILITY`].
pub fn mask_utilities(utilities: &[f64], mask: &[bool]) -> Vec<f64> {
    utilities
        .iter()
        .zip(mask)
        .map(|(&q, &ok)| if ok { q } else { MASKED_UTILITY })
        .collect()
}

/// Index of the largest available utility; ties go to the lowest index.
pub fn greedy_action(utilities: &[f64], mask: &[bool]) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, (&q, &ok)) in utilities.iter().zip(mask).enumerate() {
        if ok && best.is_none_or(|(_, b)| q > b) {
            best = Some((i, q));
        }
    }
    best.map(|(i, _)| i).ok_or_else(|| Error::Env("no available action".into()))
}

/// ε-greedy over the available actions.
pub fn select_action<R: Rng + ?Sized>(utilities: &[f64], mask: &[bool], epsilon: f64, rng: &mut R) -> Result<usize> {
    let avail: Vec<usize> = mask.iter().enumerate().filter(|(_, &m)| m).map(|(i, _)| i).collect();
    if avail.is_empty() {
        return Err(Error::Env("no available action".into()));
    }
    if epsilon > 0.0 && rng.gen::<f64>() < epsilon {
        return Ok(avail[rng.gen_range(0..avail.len())]);
    }
    greedy_action(utilities, mask)
}

/// Linear annealing from `start` to `end` over `anneal_steps`, then flat.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub anneal_steps: u64,
}

impl EpsilonSchedule {
    pub fn value(&self, step: u64) -> f64 {
        if self.anneal_steps == 0 || step >= self.anneal_steps {
            return self.end;
        }
        let frac = step as f64 / self.anneal_steps as f64;
        self.start + frac * (self.end - self.start)
    }
}
