use std::fmt::Write as _;

use rand::Rng;

use super::{Learner, ReplayBuffer};
use crate::agents::select_action;
use crate::config::RunConfig;
use crate::envs::{EpisodeRecord, Environment, Transition};
use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};

/// Plays one episode with per-agent ε-greedy actions from the online nets.
///
/// With `epsilon >= 1` every action is uniform, so the networks are not
/// evaluated at all.
pub fn rollout<R: Rng + ?Sized>(
    env: &mut dyn Environment,
    learner: &Learner,
    epsilon: f64,
    rng: &mut R,
) -> Result<EpisodeRecord> {
    let spec = env.spec().clone();
    let agent = learner.agent();
    let n = spec.n_agents;
    let mut ts = env.reset();
    let mut hidden = agent.initial_hidden(n);
    let mut last: Option<Vec<usize>> = None;
    let mut transitions = Vec::with_capacity(spec.episode_limit);
    let uniform = epsilon >= 1.0;
    for _ in 0..spec.episode_limit {
        let utilities = if uniform {
            vec![vec![0.0; spec.n_actions]; n]
        } else {
            let inputs = (0..n)
                .map(|a| agent.input_for(&ts.obs[a], last.as_ref().map(|l| l[a]), a))
                .collect::<Result<Vec<_>>>()?;
            let (q, h) = agent.q_values(&learner.online, &inputs, hidden.as_deref())?;
            hidden = h;
            q
        };
        let actions = (0..n)
            .map(|a| select_action(&utilities[a], &ts.avail_actions[a], epsilon, rng))
            .collect::<Result<Vec<_>>>()?;
        let res = env.step(&actions)?;
        let next = res.next;
        transitions.push(Transition {
            state: ts.state,
            obs: ts.obs,
            avail_actions: ts.avail_actions,
            actions: actions.clone(),
            reward: res.reward,
            next_state: next.state.clone(),
            next_obs: next.obs.clone(),
            next_avail_actions: next.avail_actions.clone(),
            terminated: res.terminated,
        });
        if res.terminated {
            return Ok(EpisodeRecord { transitions, truncated: false });
        }
        last = Some(actions);
        ts = next;
    }
    Ok(EpisodeRecord { transitions, truncated: true })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalStats {
    pub return_mean: f64,
    pub return_median: f64,
    /// Fraction of episodes after which the environment reports success.
    pub success_rate: f64,
}

/// Greedy decentralised episodes with exploration off.
pub fn evaluate(env: &mut dyn Environment, learner: &Learner, n_episodes: usize) -> Result<EvalStats> {
    if n_episodes == 0 {
        return Err(Error::Config("need at least one evaluation episode".into()));
    }
    // Greedy selection never draws from the generator.
    let mut rng = stream_rng(0, Stream::Exploration);
    let mut returns = Vec::with_capacity(n_episodes);
    let mut successes = 0usize;
    for _ in 0..n_episodes {
        let ep = rollout(env, learner, 0.0, &mut rng)?;
        returns.push(ep.total_reward());
        successes += env.solved() as usize;
    }
    let mean = returns.iter().sum::<f64>() / n_episodes as f64;
    returns.sort_by(f64::total_cmp);
    let mid = n_episodes / 2;
    let median = if n_episodes % 2 == 1 {
        returns[mid]
    } else {
        0.5 * (returns[mid - 1] + returns[mid])
    };
    Ok(EvalStats {
        return_mean: mean,
        return_median: median,
        success_rate: successes as f64 / n_episodes as f64,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricRow {
    pub env_step: u64,
    /// Most recent training loss; absent before the first update.
    pub train_loss: Option<f64>,
    pub epsilon: f64,
    pub eval_return_mean: f64,
    pub eval_return_median: f64,
    pub eval_success_rate: f64,
    /// Absent for independent learners.
    pub max_qtot_at_s0: Option<f64>,
}

/// Rows in strictly increasing `env_step`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricLog {
    pub rows: Vec<MetricRow>,
}

pub const METRICS_HEADER: &str = "# monoq-metrics v1";
pub const METRICS_COLUMNS: &str =
    "env_step,train_loss,epsilon,eval_return_mean,eval_return_median,eval_success_rate,max_qtot_at_s0";

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl MetricLog {
    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn last(&self) -> Option<&MetricRow> {
        self.rows.last()
    }

    /// Versioned CSV. An empty log is an empty string.
    pub fn to_csv(&self) -> String {
        if self.rows.is_empty() {
            return String::new();
        }
        let mut out = format!("{METRICS_HEADER}\n{METRICS_COLUMNS}\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.env_step,
                opt(r.train_loss),
                r.epsilon,
                r.eval_return_mean,
                r.eval_return_median,
                r.eval_success_rate,
                opt(r.max_qtot_at_s0)
            );
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut rows = Vec::new();
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        match lines.next() {
            None => return Ok(Self::default()),
            Some(h) if h.trim() == METRICS_HEADER => {}
            Some(h) => return Err(Error::Config(format!("unexpected metrics header `{h}`"))),
        }
        if lines.next().map(str::trim) != Some(METRICS_COLUMNS) {
            return Err(Error::Config("unexpected metrics columns".into()));
        }
        for line in lines {
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != 7 {
                return Err(Error::Config(format!("metrics row has {} cells", cells.len())));
            }
            let num = |s: &str| -> Result<f64> {
                s.parse::<f64>().map_err(|e| Error::Config(format!("bad metrics value `{s}`: {e}")))
            };
            let maybe = |s: &str| -> Result<Option<f64>> { if s.is_empty() { Ok(None) } else { num(s).map(Some) } };
            rows.push(MetricRow {
                env_step: cells[0].parse().map_err(|e| Error::Config(format!("bad env_step: {e}")))?,
                train_loss: maybe(cells[1])?,
                epsilon: num(cells[2])?,
                eval_return_mean: num(cells[3])?,
                eval_return_median: num(cells[4])?,
                eval_success_rate: num(cells[5])?,
                max_qtot_at_s0: maybe(cells[6])?,
            });
        }
        Ok(Self { rows })
    }
}

/// Everything a finished run produces.
#[derive(Clone, Debug)]
pub struct TrainingOutcome {
    pub log: MetricLog,
    pub learner: Learner,
    pub env_steps: u64,
    pub episodes: u64,
}

/// Collects episodes with ε-greedy exploration and takes one training step
/// per episode once the buffer holds a full batch. Greedy evaluation runs at
/// step 0, whenever another `eval.interval` env steps have passed and at the
/// end.
pub fn run_training(cfg: &RunConfig) -> Result<TrainingOutcome> {
    cfg.validate()?;
    let mut env = cfg.build_env()?;
    let mut eval_env = cfg.build_env()?;
    let spec = env.spec().clone();
    let mut learner = Learner::new(cfg.learner_config(&spec), &mut stream_rng(cfg.seed, Stream::Init))?;
    let mut explore = stream_rng(cfg.seed, Stream::Exploration);
    let mut buffer = ReplayBuffer::new(cfg.train.buffer_capacity);
    let total = cfg.train.total_env_steps;
    let schedule = cfg.train.epsilon;
    let mut log = MetricLog::default();
    let mut env_steps = 0u64;
    let mut episodes = 0u64;
    let mut last_loss = None;

    let mut record = |learner: &Learner, env_steps: u64, loss: Option<f64>, log: &mut MetricLog| -> Result<()> {
        let stats = evaluate(eval_env.as_mut(), learner, cfg.eval.n_episodes)?;
        let s0 = eval_env.reset();
        log.rows.push(MetricRow {
            env_step: env_steps,
            train_loss: loss,
            epsilon: schedule.value(env_steps),
            eval_return_mean: stats.return_mean,
            eval_return_median: stats.return_median,
            eval_success_rate: stats.success_rate,
            max_qtot_at_s0: learner.max_q_tot(&s0)?,
        });
        Ok(())
    };

    if total == 0 {
        return Ok(TrainingOutcome { log, learner, env_steps, episodes });
    }
    record(&learner, 0, None, &mut log)?;
    let mut next_eval = cfg.eval.interval;
    while env_steps < total {
        let eps = schedule.value(env_steps);
        let ep = rollout(env.as_mut(), &learner, eps, &mut explore)?;
        env_steps += ep.len() as u64;
        episodes += 1;
        buffer.push(ep);
        if buffer.len() >= cfg.train.batch_size {
            let batch = buffer.sample(cfg.train.batch_size, &mut explore);
            last_loss = Some(learner.train_step(&batch, episodes)?);
        }
        if env_steps >= next_eval {
            record(&learner, env_steps, last_loss, &mut log)?;
            while next_eval <= env_steps {
                next_eval += cfg.eval.interval;
            }
        }
    }
    if log.last().map(|r| r.env_step) != Some(env_steps) {
        record(&learner, env_steps, last_loss, &mut log)?;
    }
    Ok(TrainingOutcome { log, learner, env_steps, episodes })
}
