//! Run configuration: a JSON document with `env`, `algo`, `train` and `eval`
//! blocks plus a master `seed`. Unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agents::{AgentCore, AgentNetConfig, EpsilonSchedule};
use crate::envs::{CoopGridworld, DecPomdpSpec, Environment, MatrixGame, TwoStepGame};
use crate::error::{Error, Result};
use crate::learner::LearnerConfig;
use crate::mixers::{MixerConfig, MixerKind, MixerNonlin};
use crate::rng::{stream_rng, Stream};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub env: EnvConfig,
    pub algo: AlgoConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvConfig {
    TwoStep {},
    /// Two-agent matrix game; rows are agent 0's actions.
    Matrix { payoff: Vec<Vec<f64>> },
    RandomMatrix { n_agents: usize, n_actions: usize },
    Gridworld {
        size: usize,
        n_agents: usize,
        #[serde(default = "default_view_radius")]
        view_radius: usize,
        #[serde(default = "default_episode_limit")]
        episode_limit: usize,
    },
}

fn default_view_radius() -> usize {
    1
}

fn default_episode_limit() -> usize {
    30
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgoConfig {
    pub mixer: MixerKind,
    #[serde(default)]
    pub mixer_nonlin: MixerNonlin,
    #[serde(default = "default_embed")]
    pub mixing_embed: usize,
    #[serde(default = "default_hidden")]
    pub hypernet_hidden: usize,
    #[serde(default = "default_hidden")]
    pub agent_hidden: usize,
    #[serde(default = "default_core")]
    pub agent_core: AgentCore,
    #[serde(default = "yes")]
    pub obs_last_action: bool,
    #[serde(default = "yes")]
    pub obs_agent_id: bool,
    #[serde(default = "yes")]
    pub shared_params: bool,
    /// Defaults to on for the gridworld and off for the matrix games.
    #[serde(default)]
    pub double_q: Option<bool>,
}

fn default_embed() -> usize {
    32
}

fn default_hidden() -> usize {
    64
}

fn default_core() -> AgentCore {
    AgentCore::Gru
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "default_lr")]
    pub lr: f64,
    /// Defaults to the environment's discount.
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default = "default_buffer")]
    pub buffer_capacity: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    /// In episodes.
    #[serde(default = "default_target_interval")]
    pub target_update_interval: u64,
    pub total_env_steps: u64,
    #[serde(default = "default_epsilon")]
    pub epsilon: EpsilonSchedule,
}

fn default_lr() -> f64 {
    5e-4
}

fn default_buffer() -> usize {
    5000
}

fn default_batch() -> usize {
    32
}

fn default_target_interval() -> u64 {
    200
}

fn default_epsilon() -> EpsilonSchedule {
    EpsilonSchedule {
        start: 1.0,
        end: 0.05,
        anneal_steps: 50_000,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    /// Env steps between greedy evaluations.
    pub interval: u64,
    #[serde(default = "default_eval_episodes")]
    pub n_episodes: usize,
}

fn default_eval_episodes() -> usize {
    32
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        let t = &self.train;
        if !(t.lr.is_finite() && t.lr > 0.0) {
            return bad("train.lr must be positive");
        }
        if let Some(g) = t.gamma {
            if !(0.0..1.0).contains(&g) {
                return bad("train.gamma must lie in [0, 1)");
            }
        }
        if t.buffer_capacity == 0 || t.batch_size == 0 || t.target_update_interval == 0 {
            return bad("train.buffer_capacity, batch_size and target_update_interval must be positive");
        }
        let e = &t.epsilon;
        if !(0.0..=1.0).contains(&e.start) || !(0.0..=1.0).contains(&e.end) || e.start < e.end {
            return bad("train.epsilon needs 1 >= start >= end >= 0");
        }
        if self.eval.interval == 0 || self.eval.n_episodes == 0 {
            return bad("eval.interval and eval.n_episodes must be positive");
        }
        let a = &self.algo;
        if a.agent_hidden == 0 || a.mixing_embed == 0 || a.hypernet_hidden == 0 {
            return bad("network sizes must be positive");
        }
        match &self.env {
            EnvConfig::TwoStep {} => {}
            EnvConfig::Matrix { payoff } => {
                MatrixGame::from_matrix(payoff)?;
            }
            EnvConfig::RandomMatrix { n_agents, n_actions } => {
                if *n_agents == 0 || *n_actions < 2 {
                    return bad("random_matrix needs n_agents >= 1 and n_actions >= 2");
                }
            }
            EnvConfig::Gridworld {
                size,
                n_agents,
                view_radius,
                episode_limit,
            } => {
                if *size < 3 || *n_agents == 0 || 2 * n_agents > size * size {
                    return bad("gridworld needs size >= 3 and room for goals and starts");
                }
                if *view_radius == 0 || *episode_limit == 0 {
                    return bad("gridworld view_radius and episode_limit must be positive");
                }
            }
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// The environment for this seed. Calling it twice yields identical
    /// instances (same layout or payoff), which is how evaluation gets its own copy.
    pub fn build_env(&self) -> Result<Box<dyn Environment>> {
        let mut rng = stream_rng(self.seed, Stream::Env);
        Ok(match &self.env {
            EnvConfig::TwoStep {} => Box::new(TwoStepGame::new()),
            EnvConfig::Matrix { payoff } => Box::new(MatrixGame::from_matrix(payoff)?),
            EnvConfig::RandomMatrix { n_agents, n_actions } => {
                Box::new(MatrixGame::random(*n_agents, *n_actions, &mut rng)?)
            }
            EnvConfig::Gridworld {
                size,
                n_agents,
                view_radius,
                episode_limit,
            } => Box::new(CoopGridworld::new(*size, *n_agents, *view_radius, *episode_limit, &mut rng)?),
        })
    }

    pub fn double_q(&self) -> bool {
        self.algo
            .double_q
            .unwrap_or(matches!(self.env, EnvConfig::Gridworld { .. }))
    }

    pub fn learner_config(&self, spec: &DecPomdpSpec) -> LearnerConfig {
        let a = &self.algo;
        let agent = AgentNetConfig {
            obs_dim: spec.obs_dim,
            n_actions: spec.n_actions,
            n_agents: spec.n_agents,
            hidden: a.agent_hidden,
            core: a.agent_core,
            last_action: a.obs_last_action,
            agent_id: a.obs_agent_id,
            shared: a.shared_params,
        };
        let mixer = (a.mixer != MixerKind::Iql).then(|| MixerConfig {
            kind: a.mixer,
            nonlin: a.mixer_nonlin,
            n_agents: spec.n_agents,
            state_dim: spec.state_dim,
            embed: a.mixing_embed,
            hypernet_hidden: a.hypernet_hidden,
        });
        LearnerConfig {
            agent,
            mixer,
            gamma: self.train.gamma.unwrap_or(spec.gamma),
            lr: self.train.lr,
            double_q: self.double_q(),
            target_update_interval: self.train.target_update_interval,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_STEP: &str = r#"{
        "env": {"name": "two_step"},
        "algo": {"mixer": "qmix", "mixing_embed": 8, "agent_core": "none", "obs_last_action": false},
        "train": {"buffer_capacity": 500, "target_update_interval": 100, "total_env_steps": 10000,
                  "epsilon": {"start": 1.0, "end": 1.0, "anneal_steps": 0}},
        "eval": {"interval": 1000, "n_episodes": 1},
        "seed": 3
    }"#;

    #[test]
    fn parses_and_fills_defaults() {
        let cfg = RunConfig::from_json(TWO_STEP).unwrap();
        assert_eq!(cfg.env, EnvConfig::TwoStep {});
        assert_eq!(cfg.algo.mixer, MixerKind::Qmix);
        assert_eq!(cfg.algo.mixer_nonlin, MixerNonlin::Elu);
        assert_eq!(cfg.train.batch_size, 32);
        assert_eq!(cfg.train.lr, 5e-4);
        assert!(!cfg.double_q());
        assert_eq!(cfg.seed, 3);
        let again = RunConfig::from_json(&cfg.to_json()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn rejects_unknown_keys() {
        let text = TWO_STEP.replace("\"seed\": 3", "\"seed\": 3, \"bogus\": 1");
        assert!(RunConfig::from_json(&text).is_err());
        let text = TWO_STEP.replace("\"mixing_embed\": 8", "\"mixing_embed\": 8, \"typo\": true");
        assert!(RunConfig::from_json(&text).is_err());
        let text = TWO_STEP.replace(r#""name": "two_step""#, r#""name": "two_step", "x": 1"#);
        assert!(RunConfig::from_json(&text).is_err());
    }

    #[test]
    fn rejects_missing_env_name_and_bad_values() {
        assert!(RunConfig::from_json(&TWO_STEP.replace(r#""name": "two_step""#, "")).is_err());
        assert!(RunConfig::from_json(&TWO_STEP.replace("\"total_env_steps\": 10000", "\"total_env_steps\": 10000, \"gamma\": 1.0")).is_err());
        assert!(RunConfig::from_json(&TWO_STEP.replace("\"end\": 1.0", "\"end\": 1.5")).is_err());
        assert!(RunConfig::from_json(&TWO_STEP.replace("\"batch_size\"", "\"x\"").replace("\"interval\": 1000", "\"interval\": 0")).is_err());
    }

    #[test]
    fn env_instances_repeat_per_seed() {
        let text = r#"{
            "env": {"name": "random_matrix", "n_agents": 3, "n_actions": 3},
            "algo": {"mixer": "vdn"},
            "train": {"total_env_steps": 10},
            "eval": {"interval": 5}
        }"#;
        let cfg = RunConfig::from_json(text).unwrap();
        let mut a = cfg.build_env().unwrap();
        let mut b = cfg.build_env().unwrap();
        a.reset();
        b.reset();
        for u in [[0, 0, 0], [1, 2, 0], [2, 2, 2]] {
            assert_eq!(a.step(&u).unwrap().reward, b.step(&u).unwrap().reward);
        }
    }

    #[test]
    fn gridworld_defaults_to_double_q() {
        let text = r#"{
            "env": {"name": "gridworld", "size": 5, "n_agents": 2},
            "algo": {"mixer": "qmix"},
            "train": {"total_env_steps": 10},
            "eval": {"interval": 5}
        }"#;
        let cfg = RunConfig::from_json(text).unwrap();
        assert!(cfg.double_q());
        let env = cfg.build_env().unwrap();
        let lc = cfg.learner_config(env.spec());
        assert_eq!(lc.gamma, 0.99);
        assert_eq!(lc.mixer.unwrap().state_dim, env.spec().state_dim);
    }
}
