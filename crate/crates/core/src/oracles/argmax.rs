use std::fmt::Write as _;

use crate::envs::{joint_actions, joint_index};
use crate::error::{Error, Result};

/// Largest joint action space the enumerators accept.
pub const ARGMAX_BUDGET: usize = 1_000_000;

fn joint_size(n_agents: usize, n_actions: usize) -> Result<usize> {
    if n_agents == 0 || n_actions == 0 {
        return Err(Error::Config("need at least one agent and one action".into()));
    }
    n_actions
        .checked_pow(n_agents as u32)
        .filter(|&n| n <= ARGMAX_BUDGET)
        .ok_or_else(|| Error::Budget(format!("{n_actions}^{n_agents} joint actions exceeds {ARGMAX_BUDGET}")))
}

/// Exact maximiser of `f` over every joint action. Ties go to the
/// lexicographically smallest joint action (agent 0 most significant).
pub fn brute_force_argmax<F>(mut f: F, n_agents: usize, n_actions: usize) -> Result<(Vec<usize>, f64)>
where
    F: FnMut(&[usize]) -> f64,
{
    let size = joint_size(n_agents, n_actions)?;
    let mut u = vec![0usize; n_agents];
    let mut best = (u.clone(), f64::NEG_INFINITY);
    for idx in 0..size {
        if idx > 0 {
            // Odometer increment, last agent fastest.
            for a in (0..n_agents).rev() {
                u[a] += 1;
                if u[a] < n_actions {
                    break;
                }
                u[a] = 0;
            }
        }
        let v = f(&u);
        if v > best.1 || idx == 0 {
            best = (u.clone(), v);
        }
    }
    Ok(best)
}

/// Dense table of `Q_tot` over all joint actions.
#[derive(Clone, Debug, PartialEq)]
pub struct JointQTable {
    pub n_agents: usize,
    pub n_actions: usize,
    pub values: Vec<f64>,
}

impl JointQTable {
    pub fn new(n_agents: usize, n_actions: usize, values: Vec<f64>) -> Result<Self> {
        let size = joint_size(n_agents, n_actions)?;
        if values.len() != size {
            return Err(Error::Shape(format!("joint table has {} entries, expected {size}", values.len())));
        }
        Ok(Self { n_agents, n_actions, values })
    }

    pub fn from_fn<F: FnMut(&[usize]) -> f64>(n_agents: usize, n_actions: usize, mut f: F) -> Result<Self> {
        let size = joint_size(n_agents, n_actions)?;
        let values = (0..size).map(|i| f(&joint_actions(i, n_agents, n_actions))).collect();
        Ok(Self { n_agents, n_actions, values })
    }

    pub fn get(&self, actions: &[usize]) -> f64 {
        self.values[joint_index(actions, self.n_actions)]
    }

    pub fn argmax(&self) -> (Vec<usize>, f64) {
        brute_force_argmax(|u| self.get(u), self.n_agents, self.n_actions).expect("size checked at construction")
    }

    /// One row per joint action: `u0,…,u{n-1},q_tot`.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for a in 0..self.n_agents {
            let _ = write!(out, "u{a},");
        }
        out.push_str("q_tot\n");
        for (i, v) in self.values.iter().enumerate() {
            for u in joint_actions(i, self.n_agents, self.n_actions) {
                let _ = write!(out, "{u},");
            }
            let _ = writeln!(out, "{v}");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_2b_argmax() {
        let payoff = [[2.0, 1.0], [1.0, 8.0]];
        let (u, v) = brute_force_argmax(|u| payoff[u[0]][u[1]], 2, 2).unwrap();
        assert_eq!((u, v), (vec![1, 1], 8.0));
    }

    #[test]
    fn constant_function_ties_to_first() {
        let (u, v) = brute_force_argmax(|_| 3.0, 4, 3).unwrap();
        assert_eq!((u, v), (vec![0; 4], 3.0));
    }

    #[test]
    fn enumeration_order_is_lexicographic() {
        let mut seen = Vec::new();
        brute_force_argmax(
            |u| {
                seen.push(u.to_vec());
                0.0
            },
            2,
            3,
        )
        .unwrap();
        let mut sorted = seen.clone();
        sorted.sort();
        assert_eq!(seen, sorted);
        assert_eq!(seen.len(), 9);
        for (i, u) in seen.iter().enumerate() {
            assert_eq!(joint_index(u, 3), i);
        }
    }

    #[test]
    fn budget_is_enforced() {
        assert!(matches!(brute_force_argmax(|_| 0.0, 7, 10), Err(Error::Budget(_))));
        assert!(brute_force_argmax(|_| 0.0, 6, 10).is_ok());
    }

    #[test]
    fn table_lookup_and_csv() {
        let t = JointQTable::new(2, 2, vec![0.0, 1.0, 1.0, 8.0]).unwrap();
        assert_eq!(t.get(&[1, 0]), 1.0);
        assert_eq!(t.argmax(), (vec![1, 1], 8.0));
        assert_eq!(t.to_csv(), "u0,u1,q_tot\n0,0,0\n0,1,1\n1,0,1\n1,1,8\n");
        assert!(JointQTable::new(2, 2, vec![0.0; 3]).is_err());
    }
}
