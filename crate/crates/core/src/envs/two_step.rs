use super::{all_available, check_actions, DecPomdpSpec, Environment, StepResult, TimeStep};
use crate::error::{Error, Result};

const STATE_1: usize = 0;
const STATE_2A: usize = 1;
const STATE_2B: usize = 2;

/// Payoff of the second step, indexed `[agent1][agent2]` with A = 0, B = 1.
const PAYOFF_2A: [[f64; 2]; 2] = [[7.0, 7.0], [7.0, 7.0]];
const PAYOFF_2B: [[f64; 2]; 2] = [[0.0, 1.0], [1.0, 8.0]];

/// Two agents, two steps. Agent 1's first action picks which matrix game is
/// played at step two (A → 2A, B → 2B); agent 2's first action is ignored.
///
/// States are one-hot over `{1, 2A, 2B}` and every agent observes the full
/// state. After the terminal step the state encodes as all zeros.
#[derive(Clone, Debug)]
pub struct TwoStepGame {
    spec: DecPomdpSpec,
    current: Option<usize>,
    last_return: f64,
    episode_return: f64,
}

impl Default for TwoStepGame {
    fn default() -> Self {
        Self::new()
    }
}

impl TwoStepGame {
    pub fn new() -> Self {
        Self {
            spec: DecPomdpSpec {
                n_agents: 2,
                n_actions: 2,
                obs_dim: 3,
                state_dim: 3,
                episode_limit: 2,
                gamma: 0.99,
            },
            current: None,
            last_return: 0.0,
            episode_return: 0.0,
        }
    }

    /// One-hot encoding for state index 0 (`1`), 1 (`2A`) or 2 (`2B`).
    pub fn encode(state: usize) -> Vec<f64> {
        let mut v = vec![0.0; 3];
        v[state] = 1.0;
        v
    }

    /// The time step an agent sees in the given state.
    pub fn timestep(state: usize) -> TimeStep {
        let s = Self::encode(state);
        TimeStep {
            state: s.clone(),
            obs: vec![s.clone(), s],
            avail_actions: all_available(2, 2),
        }
    }

    pub fn state_index(&self) -> Option<usize> {
        self.current
    }
}

impl Environment for TwoStepGame {
    fn spec(&self) -> &DecPomdpSpec {
        &self.spec
    }

    fn reset(&mut self) -> TimeStep {
        self.current = Some(STATE_1);
        self.episode_return = 0.0;
        Self::timestep(STATE_1)
    }

    fn step(&mut self, actions: &[usize]) -> Result<StepResult> {
        check_actions(&self.spec, actions)?;
        let state = self
            .current
            .ok_or_else(|| Error::Env("step called on a finished episode".into()))?;
        let (reward, next) = match state {
            STATE_1 => (0.0, Some(if actions[0] == 0 { STATE_2A } else { STATE_2B })),
            STATE_2A => (PAYOFF_2A[actions[0]][actions[1]], None),
            _ => (PAYOFF_2B[actions[0]][actions[1]], None),
        };
        self.current = next;
        self.episode_return += reward;
        let next_ts = match next {
            Some(s) => Self::timestep(s),
            None => {
                self.last_return = self.episode_return;
                TimeStep {
                    state: vec![0.0; 3],
                    obs: vec![vec![0.0; 3]; 2],
                    avail_actions: all_available(2, 2),
                }
            }
        };
        Ok(StepResult {
            reward,
            terminated: next.is_none(),
            next: next_ts,
        })
    }

    fn solved(&self) -> bool {
        self.last_return == 8.0
    }
}
