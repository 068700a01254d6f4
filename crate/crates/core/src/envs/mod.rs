//! Dec-POMDP environment contract and the concrete environments.
//!
//! All environments share a team reward, expose a global state to the
//! learner and per-agent observations to the agents, and are deterministic
//! given their construction seed and the action sequence.

mod gridworld;
mod matrix;
mod two_step;

pub use gridworld::{CoopGridworld, GridLayout, GridState, GOAL_REWARD, GRID_ACTIONS, STEP_PENALTY, TEAM_BONUS};
pub use matrix::MatrixGame;
pub use two_step::TwoStepGame;

use crate::error::{Error, Result};

/// Static description of a Dec-POMDP instance.
#[derive(Clone, Debug, PartialEq)]
pub struct DecPomdpSpec {
    pub n_agents: usize,
    /// Actions per agent (uniform across agents).
    pub n_actions: usize,
    pub obs_dim: usize,
    pub state_dim: usize,
    pub episode_limit: usize,
    pub gamma: f64,
}

impl DecPomdpSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_agents < 1 {
            return Err(Error::Config("n_agents must be at least 1".into()));
        }
        if self.n_actions < 2 {
            return Err(Error::Config("n_actions must be at least 2".into()));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::Config(format!("gamma {} outside [0, 1)", self.gamma)));
        }
        if self.episode_limit < 1 {
            return Err(Error::Config("episode_limit must be positive".into()));
        }
        Ok(())
    }

    /// Size of the joint action space.
    pub fn n_joint_actions(&self) -> usize {
        self.n_actions.pow(self.n_agents as u32)
    }
}

/// What every agent and the learner see at one point in time.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeStep {
    pub state: Vec<f64>,
    pub obs: Vec<Vec<f64>>,
    pub avail_actions: Vec<Vec<bool>>,
}

/// Outcome of one joint action.
#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    /// Shared team reward.
    pub reward: f64,
    pub terminated: bool,
    /// The successor: state, per-agent observations, per-agent action masks.
    pub next: TimeStep,
}

pub trait Environment: Send {
    fn spec(&self) -> &DecPomdpSpec;

    /// Starts a new episode.
    fn reset(&mut self) -> TimeStep;

    fn step(&mut self, actions: &[usize]) -> Result<StepResult>;

    /// Whether the most recent episode reached the task's best outcome.
    fn solved(&self) -> bool;
}

pub(crate) fn check_actions(spec: &DecPomdpSpec, actions: &[usize]) -> Result<()> {
    if actions.len() != spec.n_agents {
        return Err(Error::Env(format!(
            "expected {} actions, got {}",
            spec.n_agents,
            actions.len()
        )));
    }
    if let Some(a) = actions.iter().find(|&&a| a >= spec.n_actions) {
        return Err(Error::Env(format!("action {a} out of range 0..{}", spec.n_actions)));
    }
    Ok(())
}

/// Packs a joint action into a payoff index, agent 0 most significant.
pub fn joint_index(actions: &[usize], n_actions: usize) -> usize {
    actions.iter().fold(0, |acc, &a| acc * n_actions + a)
}

/// Inverse of [`joint_index`].
pub fn joint_actions(mut index: usize, n_agents: usize, n_actions: usize) -> Vec<usize> {
    let mut out = vec![0; n_agents];
    for slot in out.iter_mut().rev() {
        *slot = index % n_actions;
        index /= n_actions;
    }
    out
}

/// One stored transition `(s, o, u, r, s', o', terminated)` with masks.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub obs: Vec<Vec<f64>>,
    pub avail_actions: Vec<Vec<bool>>,
    pub actions: Vec<usize>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub next_obs: Vec<Vec<f64>>,
    pub next_avail_actions: Vec<Vec<bool>>,
    pub terminated: bool,
}

/// A complete episode.
///
/// Either the final transition is terminal (and no other is), or the episode
/// was cut at the limit and `truncated` is set while no transition is terminal.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EpisodeRecord {
    pub transitions: Vec<Transition>,
    pub truncated: bool,
}

impl EpisodeRecord {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn total_reward(&self) -> f64 {
        self.transitions.iter().map(|t| t.reward).sum()
    }

    /// Checks the terminal-marker invariant and the length bound.
    pub fn validate(&self, episode_limit: usize) -> Result<()> {
        if self.transitions.is_empty() {
            return Err(Error::Env("empty episode".into()));
        }
        if self.transitions.len() > episode_limit {
            return Err(Error::Env(format!("episode longer than limit {episode_limit}")));
        }
        let terminals = self.transitions.iter().filter(|t| t.terminated).count();
        let last_terminal = self.transitions.last().map(|t| t.terminated).unwrap_or(false);
        match (self.truncated, terminals, last_terminal) {
            (false, 1, true) | (true, 0, false) => Ok(()),
            _ => Err(Error::Env("episode terminal markers are inconsistent".into())),
        }
    }
}

pub(crate) fn all_available(n_agents: usize, n_actions: usize) -> Vec<Vec<bool>> {
    vec![vec![true; n_actions]; n_agents]
}
