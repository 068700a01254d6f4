use std::collections::HashMap;

use crate::envs::{joint_actions, GridLayout, GridState, GRID_ACTIONS};
use crate::error::{Error, Result};

/// Cap on reachable states × joint actions.
pub const VALUE_ITERATION_BUDGET: usize = 10_000_000;

const MAX_SWEEPS: usize = 1_000_000;

#[derive(Clone, Debug, PartialEq)]
pub struct ValueIteration {
    /// Optimal return from the layout's start state.
    pub start_value: f64,
    pub n_states: usize,
    pub sweeps: usize,
    /// Largest Bellman residual over all states after the final sweep.
    pub residual: f64,
    /// Optimal value of every reachable state, indexed like `states`.
    pub values: Vec<f64>,
    pub states: Vec<GridState>,
}

/// Value iteration on the joint gridworld MDP restricted to states reachable
/// from the start. Stops once the Bellman residual is below `tolerance`.
/// `gamma = 1` is allowed: the step penalty makes every non-terminating
/// policy strictly worse, so the iteration settles after finitely many sweeps.
pub fn joint_value_iteration(layout: &GridLayout, gamma: f64, tolerance: f64) -> Result<ValueIteration> {
    layout.validate()?;
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::Config("gamma must lie in [0, 1]".into()));
    }
    if !(tolerance > 0.0) {
        return Err(Error::Config("tolerance must be positive".into()));
    }
    let n_agents = layout.starts.len();
    let n_joint = GRID_ACTIONS
        .checked_pow(n_agents as u32)
        .filter(|&n| n <= VALUE_ITERATION_BUDGET)
        .ok_or_else(|| Error::Budget("joint action space exceeds value iteration budget".into()))?;
    let all_actions: Vec<Vec<usize>> = (0..n_joint).map(|i| joint_actions(i, n_agents, GRID_ACTIONS)).collect();

    // Successor table: (next state index or None when terminal, reward).
    let mut index: HashMap<GridState, usize> = HashMap::new();
    let mut states = vec![layout.initial_state()];
    index.insert(states[0].clone(), 0);
    let mut succ: Vec<(Option<u32>, f64)> = Vec::new();
    let mut cursor = 0;
    while cursor < states.len() {
        let s = states[cursor].clone();
        for u in &all_actions {
            if states.len().saturating_mul(n_joint) > VALUE_ITERATION_BUDGET {
                return Err(Error::Budget(format!(
                    "more than {VALUE_ITERATION_BUDGET} state-action pairs"
                )));
            }
            let (next, reward, done) = layout.transition(&s, u);
            let next_idx = if done {
                None
            } else {
                let id = *index.entry(next.clone()).or_insert_with(|| {
                    states.push(next);
                    states.len() - 1
                });
                Some(id as u32)
            };
            succ.push((next_idx, reward));
        }
        cursor += 1;
    }

    let n_states = states.len();
    let mut values = vec![0.0; n_states];
    let mut residual = f64::INFINITY;
    let mut sweeps = 0;
    while residual >= tolerance {
        if sweeps >= MAX_SWEEPS {
            return Err(Error::Budget("value iteration did not converge".into()));
        }
        residual = 0.0;
        let mut next_values = vec![0.0; n_states];
        for s in 0..n_states {
            let best = succ[s * n_joint..(s + 1) * n_joint]
                .iter()
                .map(|&(n, r)| r + n.map_or(0.0, |n| gamma * values[n as usize]))
                .fold(f64::NEG_INFINITY, f64::max);
            residual = f64::max(residual, (best - values[s]).abs());
            next_values[s] = best;
        }
        values = next_values;
        sweeps += 1;
    }
    Ok(ValueIteration {
        start_value: values[0],
        n_states,
        sweeps,
        residual,
        values,
        states,
    })
}
