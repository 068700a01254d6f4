use rand::seq::SliceRandom;
use rand::Rng;

use super::{all_available, check_actions, DecPomdpSpec, Environment, StepResult, TimeStep};
use crate::error::{Error, Result};

/// Up, down, left, right, stay.
pub const GRID_ACTIONS: usize = 5;
const MOVES: [(isize, isize); GRID_ACTIONS] = [(-1, 0), (1, 0), (0, -1), (0, 1), (0, 0)];

pub const GOAL_REWARD: f64 = 1.0;
pub const TEAM_BONUS: f64 = 5.0;
pub const STEP_PENALTY: f64 = 0.01;

/// Fixed geometry of a gridworld instance: `(row, col)` cells.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GridLayout {
    pub size: usize,
    pub goals: Vec<(usize, usize)>,
    pub starts: Vec<(usize, usize)>,
}

/// Dynamic state: agent cells plus the set of goals covered at least once
/// this episode (bit `g` of `covered`).
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct GridState {
    pub positions: Vec<(usize, usize)>,
    pub covered: u64,
}

impl GridLayout {
    pub fn validate(&self) -> Result<()> {
        if self.size < 3 {
            return Err(Error::Config("grid must be at least 3x3".into()));
        }
        if self.goals.is_empty() || self.goals.len() > 63 {
            return Err(Error::Config("need between 1 and 63 goals".into()));
        }
        if self.starts.is_empty() {
            return Err(Error::Config("need at least one agent".into()));
        }
        if self.starts.len() > self.size * self.size {
            return Err(Error::Config("more agents than free cells".into()));
        }
        let in_grid = |&(r, c): &(usize, usize)| r < self.size && c < self.size;
        if !self.goals.iter().all(in_grid) || !self.starts.iter().all(in_grid) {
            return Err(Error::Config("cell outside the grid".into()));
        }
        for (i, a) in self.starts.iter().enumerate() {
            if self.starts[i + 1..].contains(a) {
                return Err(Error::Config("agents must start on distinct cells".into()));
            }
        }
        for (i, g) in self.goals.iter().enumerate() {
            if self.goals[i + 1..].contains(g) {
                return Err(Error::Config("goals must be distinct".into()));
            }
        }
        Ok(())
    }

    pub fn all_goals(&self) -> u64 {
        (1u64 << self.goals.len()) - 1
    }

    pub fn initial_state(&self) -> GridState {
        GridState {
            positions: self.starts.clone(),
            covered: 0,
        }
    }

    fn occupied_goals(&self, positions: &[(usize, usize)]) -> u64 {
        self.goals
            .iter()
            .enumerate()
            .filter(|(_, g)| positions.contains(g))
            .fold(0, |m, (i, _)| m | (1 << i))
    }

    /// Deterministic dynamics. Returns the successor, the team reward and
    /// whether all goals are occupied at once (terminal).
    ///
    /// Moves into the border leave the agent in place. If two agents would
    /// end on the same cell or swap cells, every mover involved stays put;
    /// this repeats until no conflict remains.
    pub fn transition(&self, state: &GridState, actions: &[usize]) -> (GridState, f64, bool) {
        let n = state.positions.len();
        let size = self.size as isize;
        let mut proposed: Vec<(usize, usize)> = state
            .positions
            .iter()
            .zip(actions)
            .map(|(&(r, c), &a)| {
                let (dr, dc) = MOVES[a];
                let (nr, nc) = (r as isize + dr, c as isize + dc);
                if (0..size).contains(&nr) && (0..size).contains(&nc) {
                    (nr as usize, nc as usize)
                } else {
                    (r, c)
                }
            })
            .collect();
        loop {
            let mut revert = vec![false; n];
            for i in 0..n {
                for j in i + 1..n {
                    let clash = proposed[i] == proposed[j];
                    let swap = proposed[i] == state.positions[j] && proposed[j] == state.positions[i];
                    if clash || swap {
                        for k in [i, j] {
                            if proposed[k] != state.positions[k] {
                                revert[k] = true;
                            }
                        }
                    }
                }
            }
            if !revert.iter().any(|&r| r) {
                break;
            }
            for k in 0..n {
                if revert[k] {
                    proposed[k] = state.positions[k];
                }
            }
        }
        let occupied = self.occupied_goals(&proposed);
        let newly = occupied & !state.covered;
        let done = occupied == self.all_goals();
        let mut reward = GOAL_REWARD * newly.count_ones() as f64 - STEP_PENALTY;
        if done {
            reward += TEAM_BONUS;
        }
        (
            GridState {
                positions: proposed,
                covered: state.covered | occupied,
            },
            reward,
            done,
        )
    }
}

/// Agents on a square grid must occupy all goal cells at the same time.
///
/// Rewards: `+1` the first time each goal is occupied in an episode, `+5`
/// and termination once every goal is occupied simultaneously, `−0.01` per
/// step. Each agent observes a `(2r+1)²` egocentric window with three
/// channels per cell (border, other agent, goal). The state concatenates a
/// one-hot position plane per agent, the goal plane and the covered-goal plane.
#[derive(Clone, Debug)]
pub struct CoopGridworld {
    spec: DecPomdpSpec,
    layout: GridLayout,
    view_radius: usize,
    state: Option<GridState>,
    solved: bool,
}

impl CoopGridworld {
    /// Random layout from `seed`'s stream: `n_agents` goals and `n_agents`
    /// start cells, all distinct. The layout is fixed for the instance.
    pub fn new<R: Rng + ?Sized>(
        grid: usize,
        n_agents: usize,
        view_radius: usize,
        episode_limit: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if grid < 3 {
            return Err(Error::Config("grid must be at least 3x3".into()));
        }
        if n_agents < 1 {
            return Err(Error::Config("need at least one agent".into()));
        }
        if 2 * n_agents > grid * grid {
            return Err(Error::Config("more agents than free cells".into()));
        }
        let mut cells: Vec<(usize, usize)> = (0..grid).flat_map(|r| (0..grid).map(move |c| (r, c))).collect();
        cells.shuffle(rng);
        let layout = GridLayout {
            size: grid,
            goals: cells[..n_agents].to_vec(),
            starts: cells[n_agents..2 * n_agents].to_vec(),
        };
        Self::with_layout(layout, view_radius, episode_limit)
    }

    pub fn with_layout(layout: GridLayout, view_radius: usize, episode_limit: usize) -> Result<Self> {
        layout.validate()?;
        if view_radius < 1 {
            return Err(Error::Config("view_radius must be at least 1".into()));
        }
        let g2 = layout.size * layout.size;
        let window = (2 * view_radius + 1).pow(2);
        let spec = DecPomdpSpec {
            n_agents: layout.starts.len(),
            n_actions: GRID_ACTIONS,
            obs_dim: 3 * window,
            state_dim: (layout.starts.len() + 2) * g2,
            episode_limit,
            gamma: 0.99,
        };
        spec.validate()?;
        Ok(Self {
            spec,
            layout,
            view_radius,
            state: None,
            solved: false,
        })
    }

    pub fn layout(&self) -> &GridLayout {
        &self.layout
    }

    pub fn grid_state(&self) -> Option<&GridState> {
        self.state.as_ref()
    }

    pub fn encode_state(&self, s: &GridState) -> Vec<f64> {
        let size = self.layout.size;
        let g2 = size * size;
        let n = s.positions.len();
        let mut v = vec![0.0; (n + 2) * g2];
        for (a, &(r, c)) in s.positions.iter().enumerate() {
            v[a * g2 + r * size + c] = 1.0;
        }
        for (i, &(r, c)) in self.layout.goals.iter().enumerate() {
            v[n * g2 + r * size + c] = 1.0;
            if s.covered & (1 << i) != 0 {
                v[(n + 1) * g2 + r * size + c] = 1.0;
            }
        }
        v
    }

    pub fn observe(&self, s: &GridState, agent: usize) -> Vec<f64> {
        let rad = self.view_radius as isize;
        let size = self.layout.size as isize;
        let (ar, ac) = s.positions[agent];
        let mut v = Vec::with_capacity(self.spec.obs_dim);
        for dr in -rad..=rad {
            for dc in -rad..=rad {
                let (r, c) = (ar as isize + dr, ac as isize + dc);
                if !(0..size).contains(&r) || !(0..size).contains(&c) {
                    v.extend_from_slice(&[1.0, 0.0, 0.0]);
                    continue;
                }
                let cell = (r as usize, c as usize);
                let other = s.positions.iter().enumerate().any(|(j, p)| j != agent && *p == cell);
                let goal = self.layout.goals.contains(&cell);
                v.extend_from_slice(&[0.0, other as u8 as f64, goal as u8 as f64]);
            }
        }
        v
    }

    fn timestep(&self, s: &GridState) -> TimeStep {
        TimeStep {
            state: self.encode_state(s),
            obs: (0..self.spec.n_agents).map(|a| self.observe(s, a)).collect(),
            avail_actions: all_available(self.spec.n_agents, GRID_ACTIONS),
        }
    }
}

impl Environment for CoopGridworld {
    fn spec(&self) -> &DecPomdpSpec {
        &self.spec
    }

    fn reset(&mut self) -> TimeStep {
        let s = self.layout.initial_state();
        let ts = self.timestep(&s);
        self.state = Some(s);
        self.solved = false;
        ts
    }

    fn step(&mut self, actions: &[usize]) -> Result<StepResult> {
        check_actions(&self.spec, actions)?;
        let s = self
            .state
            .take()
            .ok_or_else(|| Error::Env("step called on a finished episode".into()))?;
        let (next, reward, done) = self.layout.transition(&s, actions);
        let ts = self.timestep(&next);
        self.solved = done;
        self.state = if done { None } else { Some(next) };
        Ok(StepResult {
            reward,
            terminated: done,
            next: ts,
        })
    }

    fn solved(&self) -> bool {
        self.solved
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Stream};

    const UP: usize = 0;
    const DOWN: usize = 1;
    const LEFT: usize = 2;
    const RIGHT: usize = 3;
    const STAY: usize = 4;

    fn layout(starts: Vec<(usize, usize)>, goals: Vec<(usize, usize)>) -> GridLayout {
        GridLayout { size: 3, goals, starts }
    }

    #[test]
    fn agents_on_goals_terminate_immediately() {
        let l = layout(vec![(0, 0), (2, 2)], vec![(0, 0), (2, 2)]);
        let mut env = CoopGridworld::with_layout(l, 1, 10).unwrap();
        env.reset();
        let r = env.step(&[STAY, STAY]).unwrap();
        assert!(r.terminated);
        assert!((r.reward - (2.0 * GOAL_REWARD + TEAM_BONUS - STEP_PENALTY)).abs() < 1e-12);
        assert!(env.solved());
    }

    #[test]
    fn wall_blocks_movement() {
        let l = layout(vec![(0, 0), (2, 2)], vec![(1, 1), (1, 2)]);
        let s = l.initial_state();
        let (next, reward, done) = l.transition(&s, &[UP, DOWN]);
        assert_eq!(next.positions, vec![(0, 0), (2, 2)]);
        assert!(!done);
        assert!((reward + STEP_PENALTY).abs() < 1e-12);
        let (next, _, _) = l.transition(&s, &[LEFT, RIGHT]);
        assert_eq!(next.positions, vec![(0, 0), (2, 2)]);
    }

    #[test]
    fn collision_keeps_both_movers() {
        let l = layout(vec![(1, 0), (1, 2)], vec![(0, 0), (2, 2)]);
        let s = l.initial_state();
        let (next, _, _) = l.transition(&s, &[RIGHT, LEFT]);
        assert_eq!(next.positions, s.positions);
    }

    #[test]
    fn swap_is_a_collision() {
        let l = layout(vec![(1, 0), (1, 1)], vec![(0, 0), (2, 2)]);
        let s = l.initial_state();
        let (next, _, _) = l.transition(&s, &[RIGHT, LEFT]);
        assert_eq!(next.positions, s.positions);
    }

    #[test]
    fn moving_into_a_stayer_is_blocked() {
        let l = layout(vec![(1, 0), (1, 1), (0, 0)], vec![(0, 2), (2, 2), (2, 0)]);
        let s = l.initial_state();
        // Agent 2 moves down into agent 0's cell while agent 0 moves right into
        // agent 1 who stays: the chain unwinds to no movement.
        let (next, _, _) = l.transition(&s, &[RIGHT, STAY, DOWN]);
        assert_eq!(next.positions, s.positions);
    }

    #[test]
    fn goal_reward_only_first_time() {
        let l = layout(vec![(0, 1), (2, 0)], vec![(0, 0), (2, 2)]);
        let s = l.initial_state();
        let (s1, r1, _) = l.transition(&s, &[LEFT, STAY]);
        assert!((r1 - (GOAL_REWARD - STEP_PENALTY)).abs() < 1e-12);
        let (s2, r2, _) = l.transition(&s1, &[RIGHT, STAY]);
        let (_, r3, _) = l.transition(&s2, &[LEFT, STAY]);
        assert!((r2 + STEP_PENALTY).abs() < 1e-12);
        assert!((r3 + STEP_PENALTY).abs() < 1e-12);
    }

    #[test]
    fn observation_and_state_dims() {
        let mut env = CoopGridworld::new(5, 2, 1, 20, &mut stream_rng(0, Stream::Env)).unwrap();
        let ts = env.reset();
        assert_eq!(ts.obs[0].len(), env.spec().obs_dim);
        assert_eq!(ts.obs[0].len(), 27);
        assert_eq!(ts.state.len(), env.spec().state_dim);
        assert_eq!(ts.state.iter().sum::<f64>(), 4.0);
    }

    #[test]
    fn corner_window_sees_border() {
        let l = GridLayout { size: 3, goals: vec![(2, 2)], starts: vec![(0, 0), (0, 1)] };
        let env = CoopGridworld::with_layout(l, 1, 5).unwrap();
        let o = env.observe(&env.layout().initial_state(), 0);
        // Top-left cell of the window is outside the grid.
        assert_eq!(&o[0..3], &[1.0, 0.0, 0.0]);
        // Right neighbour (window centre row, right column) holds agent 1.
        assert_eq!(&o[5 * 3..5 * 3 + 3], &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn too_many_agents_rejected() {
        assert!(CoopGridworld::new(3, 5, 1, 10, &mut stream_rng(0, Stream::Env)).is_err());
    }

    #[test]
    fn layout_is_seed_deterministic() {
        let a = CoopGridworld::new(5, 2, 1, 10, &mut stream_rng(3, Stream::Env)).unwrap();
        let b = CoopGridworld::new(5, 2, 1, 10, &mut stream_rng(3, Stream::Env)).unwrap();
        assert_eq!(a.layout(), b.layout());
    }
}
