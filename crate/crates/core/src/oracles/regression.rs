//! Mixer-only regression onto fixed random targets, used to compare how fast
//! different mixer parameterisations reduce a squared error.

use rand::Rng;

use crate::autodiff::{ParamStore, RmsProp, Tape};
use crate::error::{Error, Result};
use crate::mixers::{MixerConfig, MixerKind, MixingNet};
use crate::rng::{stream_rng, Stream};

#[derive(Clone, Debug, PartialEq)]
pub struct RegressionConfig {
    pub n_agents: usize,
    pub n_states: usize,
    pub state_dim: usize,
    pub embed: usize,
    pub hypernet_hidden: usize,
    pub steps: usize,
    pub buffer_capacity: usize,
    pub batch_size: usize,
    pub lr: f64,
}

impl Default for RegressionConfig {
    fn default() -> Self {
        Self {
            n_agents: 4,
            n_states: 10,
            state_dim: 10,
            embed: 32,
            hypernet_hidden: 64,
            steps: 2000,
            buffer_capacity: 200,
            batch_size: 32,
            lr: 5e-4,
        }
    }
}

/// Fixed states, agent utilities and `Q_tot` targets.
#[derive(Clone, Debug, PartialEq)]
pub struct RegressionTask {
    pub states: Vec<Vec<f64>>,
    pub q: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
}

impl RegressionTask {
    /// States and utilities uniform in `[-1, 1]`, targets uniform in `[0, 10]`.
    pub fn sample<R: Rng + ?Sized>(cfg: &RegressionConfig, rng: &mut R) -> Self {
        let mut uniform = |n: usize, lo: f64, hi: f64| -> Vec<f64> { (0..n).map(|_| rng.gen_range(lo..=hi)).collect() };
        let states = (0..cfg.n_states).map(|_| uniform(cfg.state_dim, -1.0, 1.0)).collect();
        let q = (0..cfg.n_states).map(|_| uniform(cfg.n_agents, -1.0, 1.0)).collect();
        let targets = uniform(cfg.n_states, 0.0, 10.0);
        Self { states, q, targets }
    }

    fn mean_sq_error(&self, mixer: &MixingNet, store: &ParamStore) -> Result<f64> {
        let mut total = 0.0;
        for ((s, q), y) in self.states.iter().zip(&self.q).zip(&self.targets) {
            let d = mixer.mix(store, q, s)? - y;
            total += d * d;
        }
        Ok(total / self.targets.len() as f64)
    }
}

pub fn regression_mixer(kind: MixerKind, cfg: &RegressionConfig) -> Result<MixingNet> {
    MixingNet::new(MixerConfig {
        embed: cfg.embed,
        hypernet_hidden: cfg.hypernet_hidden,
        ..MixerConfig::new(kind, cfg.n_agents, cfg.state_dim)
    })
}

/// Trains only the mixer on `task`. Returns the mean squared error over all
/// task states before training (index 0) and after each step.
///
/// Each step draws one state index into a ring buffer, then takes an
/// RMSprop step on the mean squared error of a minibatch sampled from the
/// buffer with replacement.
pub fn train_regression(
    task: &RegressionTask,
    mixer: &MixingNet,
    store: &mut ParamStore,
    cfg: &RegressionConfig,
    seed: u64,
) -> Result<Vec<f64>> {
    if cfg.buffer_capacity == 0 || cfg.batch_size == 0 || task.targets.is_empty() {
        return Err(Error::Config("regression needs a buffer, a batch and at least one state".into()));
    }
    let mut rng = stream_rng(seed, Stream::Exploration);
    let opt = RmsProp::new(cfg.lr, 0.99);
    let mut buffer: Vec<usize> = Vec::with_capacity(cfg.buffer_capacity);
    let mut head = 0;
    let n = mixer.config().n_agents;
    let sd = mixer.config().state_dim;
    let mut curve = Vec::with_capacity(cfg.steps + 1);
    curve.push(task.mean_sq_error(mixer, store)?);
    for _ in 0..cfg.steps {
        let idx = rng.gen_range(0..task.targets.len());
        if buffer.len() < cfg.buffer_capacity {
            buffer.push(idx);
        } else {
            buffer[head] = idx;
            head = (head + 1) % cfg.buffer_capacity;
        }
        let batch: Vec<usize> = (0..cfg.batch_size).map(|_| buffer[rng.gen_range(0..buffer.len())]).collect();
        let mut tape = Tape::new();
        let q = tape.constant(batch.len(), n, batch.iter().flat_map(|&i| task.q[i].clone()).collect());
        let s = tape.constant(batch.len(), sd, batch.iter().flat_map(|&i| task.states[i].clone()).collect());
        let out = mixer.forward(&mut tape, store, q, s)?;
        let targets = batch.iter().map(|&i| task.targets[i]).collect();
        let loss = tape.weighted_sq_err(out, targets, vec![1.0 / batch.len() as f64; batch.len()]);
        store.zero_grads();
        tape.backward(loss, store);
        opt.step(store)?;
        curve.push(task.mean_sq_error(mixer, store)?);
    }
    Ok(curve)
}

/// Loss curves for QMIX, QMIX-Lin and QMIX-2Lin on the same sampled task.
pub fn regression_harness(seed: u64, cfg: &RegressionConfig) -> Result<Vec<(MixerKind, Vec<f64>)>> {
    let task = RegressionTask::sample(cfg, &mut stream_rng(seed, Stream::Env));
    [MixerKind::Qmix, MixerKind::QmixLin, MixerKind::Qmix2Lin]
        .into_iter()
        .map(|kind| {
            let mixer = regression_mixer(kind, cfg)?;
            let mut store = ParamStore::new();
            mixer.init_params(&mut store, &mut stream_rng(seed, Stream::Init));
            Ok((kind, train_regression(&task, &mixer, &mut store, cfg, seed)?))
        })
        .collect()
}
