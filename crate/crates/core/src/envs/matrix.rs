use rand::Rng;

use super::{all_available, check_actions, joint_index, DecPomdpSpec, Environment, StepResult, TimeStep};
use crate::error::{Error, Result};

/// Width of the constant all-ones state vector.
pub const MATRIX_STATE_DIM: usize = 5;

/// A single-step cooperative matrix game with a fixed payoff tensor.
///
/// The payoff is stored flat with agent 0 as the most significant index.
/// Every agent observes the constant all-ones state.
#[derive(Clone, Debug)]
pub struct MatrixGame {
    spec: DecPomdpSpec,
    payoff: Vec<f64>,
    max_payoff: f64,
    last_reward: Option<f64>,
}

impl MatrixGame {
    /// A fixed game. `payoff.len()` must equal `n_actions^n_agents`.
    pub fn new(n_agents: usize, n_actions: usize, payoff: Vec<f64>) -> Result<Self> {
        if payoff.is_empty() {
            return Err(Error::Config("empty payoff".into()));
        }
        let spec = DecPomdpSpec {
            n_agents,
            n_actions,
            obs_dim: MATRIX_STATE_DIM,
            state_dim: MATRIX_STATE_DIM,
            episode_limit: 1,
            gamma: 0.99,
        };
        spec.validate()?;
        if payoff.len() != spec.n_joint_actions() {
            return Err(Error::Shape(format!(
                "payoff has {} entries, expected {}^{} = {}",
                payoff.len(),
                n_actions,
                n_agents,
                spec.n_joint_actions()
            )));
        }
        if payoff.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("payoff entries must be finite".into()));
        }
        let max_payoff = payoff.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(Self {
            spec,
            payoff,
            max_payoff,
            last_reward: None,
        })
    }

    /// A 2-agent game from a row-major matrix (rows are agent 1's actions).
    pub fn from_matrix(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 || rows.iter().any(|r| r.len() != n) {
            return Err(Error::Shape("payoff matrix must be square and non-empty".into()));
        }
        Self::new(2, n, rows.concat())
    }

    /// Random game: one uniformly chosen joint action pays exactly 10, every
    /// other entry is uniform in `[0, 10)`.
    pub fn random<R: Rng + ?Sized>(n_agents: usize, n_actions: usize, rng: &mut R) -> Result<Self> {
        let n = n_actions
            .checked_pow(n_agents as u32)
            .ok_or_else(|| Error::Budget("joint action space overflows".into()))?;
        let mut payoff: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..10.0)).collect();
        let best = rng.gen_range(0..n);
        payoff[best] = 10.0;
        Self::new(n_agents, n_actions, payoff)
    }

    pub fn payoff(&self) -> &[f64] {
        &self.payoff
    }

    pub fn max_payoff(&self) -> f64 {
        self.max_payoff
    }

    pub fn reward(&self, actions: &[usize]) -> f64 {
        self.payoff[joint_index(actions, self.spec.n_actions)]
    }

    fn timestep(&self) -> TimeStep {
        let s = vec![1.0; MATRIX_STATE_DIM];
        TimeStep {
            state: s.clone(),
            obs: vec![s; self.spec.n_agents],
            avail_actions: all_available(self.spec.n_agents, self.spec.n_actions),
        }
    }
}

impl Environment for MatrixGame {
    fn spec(&self) -> &DecPomdpSpec {
        &self.spec
    }

    fn reset(&mut self) -> TimeStep {
        self.timestep()
    }

    fn step(&mut self, actions: &[usize]) -> Result<StepResult> {
        check_actions(&self.spec, actions)?;
        let reward = self.reward(actions);
        self.last_reward = Some(reward);
        Ok(StepResult {
            reward,
            terminated: true,
            next: self.timestep(),
        })
    }

    fn solved(&self) -> bool {
        self.last_reward == Some(self.max_payoff)
    }
}
