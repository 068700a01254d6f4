use crate::agents::AgentNet;
use crate::envs::EpisodeRecord;
use crate::error::{Error, Result};

/// Padded tensors for a batch of `b` episodes of at most `t` steps.
///
/// Agent-indexed data uses agent-major rows (`a * b + episode`); per-step
/// scalars use t-major rows (`t * b + episode`). Padding steps have mask 0,
/// reward 0 and count as terminal, so they never bootstrap.
#[derive(Clone, Debug)]
pub struct Batch {
    pub b: usize,
    pub t: usize,
    pub input_dim: usize,
    pub state_dim: usize,
    /// Agent inputs for steps `0..=t`, each `[n·b, input_dim]`. Step `len`
    /// of an episode holds its final next-observation.
    pub inputs: Vec<Vec<f64>>,
    /// Stored actions per step `0..t`, `[n·b]`; padding uses action 0.
    pub actions: Vec<Vec<usize>>,
    /// Availability at step `t + 1` for each step `t`, `[n·b·A]`.
    pub next_avail: Vec<Vec<bool>>,
    pub rewards: Vec<f64>,
    pub terminated: Vec<bool>,
    pub mask: Vec<f64>,
    pub states: Vec<f64>,
    pub next_states: Vec<f64>,
    /// Whether any valid step needs a bootstrapped successor value.
    pub needs_bootstrap: bool,
}

impl Batch {
    pub fn new(episodes: &[&EpisodeRecord], agent: &AgentNet) -> Result<Self> {
        if episodes.is_empty() {
            return Err(Error::Shape("empty batch".into()));
        }
        if episodes.iter().any(|e| e.is_empty()) {
            return Err(Error::Shape("episode without transitions".into()));
        }
        let cfg = agent.config();
        let (n, a_n) = (cfg.n_agents, cfg.n_actions);
        let b = episodes.len();
        let t_max = episodes.iter().map(|e| e.len()).max().unwrap_or(0);
        let first = &episodes[0].transitions[0];
        let state_dim = first.state.len();
        let input_dim = agent.input_dim();

        let mut inputs = Vec::with_capacity(t_max + 1);
        for t in 0..=t_max {
            let mut x = vec![0.0; n * b * input_dim];
            for (bi, ep) in episodes.iter().enumerate() {
                let len = ep.len();
                if t > len {
                    continue;
                }
                let obs = if t < len { &ep.transitions[t].obs } else { &ep.transitions[len - 1].next_obs };
                if obs.len() != n {
                    return Err(Error::Shape(format!("episode has {} observations, expected {n}", obs.len())));
                }
                for a in 0..n {
                    let last = (t > 0).then(|| ep.transitions[t - 1].actions[a]);
                    let row = agent.input_for(&obs[a], last, a)?;
                    let at = (a * b + bi) * input_dim;
                    x[at..at + input_dim].copy_from_slice(&row);
                }
            }
            inputs.push(x);
        }

        let mut actions = Vec::with_capacity(t_max);
        let mut next_avail = Vec::with_capacity(t_max);
        let size = t_max * b;
        let mut rewards = vec![0.0; size];
        let mut terminated = vec![true; size];
        let mut mask = vec![0.0; size];
        let mut states = vec![0.0; size * state_dim];
        let mut next_states = vec![0.0; size * state_dim];
        let mut needs_bootstrap = false;
        for t in 0..t_max {
            let mut u = vec![0usize; n * b];
            let mut av = vec![true; n * b * a_n];
            for (bi, ep) in episodes.iter().enumerate() {
                let Some(tr) = ep.transitions.get(t) else { continue };
                if tr.actions.len() != n || tr.next_avail_actions.len() != n {
                    return Err(Error::Shape("transition agent count mismatch".into()));
                }
                if tr.state.len() != state_dim || tr.next_state.len() != state_dim {
                    return Err(Error::Shape("state width varies within batch".into()));
                }
                for a in 0..n {
                    if tr.actions[a] >= a_n {
                        return Err(Error::Shape(format!("action {} out of range", tr.actions[a])));
                    }
                    u[a * b + bi] = tr.actions[a];
                    let row = a * b + bi;
                    av[row * a_n..(row + 1) * a_n].copy_from_slice(&tr.next_avail_actions[a]);
                }
                let i = t * b + bi;
                rewards[i] = tr.reward;
                terminated[i] = tr.terminated;
                mask[i] = 1.0;
                needs_bootstrap |= !tr.terminated;
                states[i * state_dim..(i + 1) * state_dim].copy_from_slice(&tr.state);
                next_states[i * state_dim..(i + 1) * state_dim].copy_from_slice(&tr.next_state);
            }
            actions.push(u);
            next_avail.push(av);
        }
        Ok(Self {
            b,
            t: t_max,
            input_dim,
            state_dim,
            inputs,
            actions,
            next_avail,
            rewards,
            terminated,
            mask,
            states,
            next_states,
            needs_bootstrap,
        })
    }
}
