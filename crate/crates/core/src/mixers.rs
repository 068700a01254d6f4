//! Mixing networks: combine the chosen-action utilities of all agents, and
//! optionally the global state, into `Q_tot`.
//!
//! Every QMIX-family mixer applies `abs` to the weights that touch agent
//! utilities (never to biases), so `∂Q_tot/∂Q_a ≥ 0` holds by construction.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{activation, dense, dense_act, Activation, NodeId, ParamStore, Tape, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MixerKind {
    /// No mixing: each agent learns from its own loss.
    Iql,
    Vdn,
    /// VDN plus a state-dependent bias.
    VdnS,
    Qmix,
    /// QMIX with state-independent mixing weights.
    QmixNs,
    /// A single linear layer `Σ_a |w_a(s)| q_a + V(s)`.
    QmixLin,
    /// QMIX with identity activation in the mixing layer.
    Qmix2Lin,
}

impl MixerKind {
    pub const ALL: [MixerKind; 7] = [
        MixerKind::Iql,
        MixerKind::Vdn,
        MixerKind::VdnS,
        MixerKind::Qmix,
        MixerKind::QmixNs,
        MixerKind::QmixLin,
        MixerKind::Qmix2Lin,
    ];

    /// Kinds with non-negative, abs-constrained mixing weights.
    pub const QMIX_FAMILY: [MixerKind; 4] =
        [MixerKind::Qmix, MixerKind::QmixNs, MixerKind::QmixLin, MixerKind::Qmix2Lin];

    pub fn name(self) -> &'static str {
        match self {
            MixerKind::Iql => "iql",
            MixerKind::Vdn => "vdn",
            MixerKind::VdnS => "vdn_s",
            MixerKind::Qmix => "qmix",
            MixerKind::QmixNs => "qmix_ns",
            MixerKind::QmixLin => "qmix_lin",
            MixerKind::Qmix2Lin => "qmix_2lin",
        }
    }

    pub fn is_qmix_family(self) -> bool {
        Self::QMIX_FAMILY.contains(&self)
    }

    pub fn uses_state(self) -> bool {
        !matches!(self, MixerKind::Iql | MixerKind::Vdn)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MixerNonlin {
    #[default]
    Elu,
    Tanh,
}

impl MixerNonlin {
    pub fn activation(self) -> Activation {
        match self {
            MixerNonlin::Elu => Activation::Elu,
            MixerNonlin::Tanh => Activation::Tanh,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MixerConfig {
    pub kind: MixerKind,
    pub nonlin: MixerNonlin,
    pub n_agents: usize,
    pub state_dim: usize,
    pub embed: usize,
    pub hypernet_hidden: usize,
}

impl MixerConfig {
    pub fn new(kind: MixerKind, n_agents: usize, state_dim: usize) -> Self {
        Self {
            kind,
            nonlin: MixerNonlin::Elu,
            n_agents,
            state_dim,
            embed: 32,
            hypernet_hidden: 64,
        }
    }
}

/// The parameterised mixer. Parameters live under the `mixer.` prefix.
#[derive(Clone, Debug)]
pub struct MixingNet {
    cfg: MixerConfig,
}

/// Intermediate nodes needed for analytic partials.
struct Parts {
    out: NodeId,
    w1: Option<NodeId>,
    pre: Option<NodeId>,
    w2: Option<NodeId>,
}

impl MixingNet {
    pub fn new(cfg: MixerConfig) -> Result<Self> {
        if cfg.kind == MixerKind::Iql {
            return Err(Error::Config("IQL has no mixing network".into()));
        }
        if cfg.n_agents == 0 {
            return Err(Error::Config("mixer needs at least one agent".into()));
        }
        if cfg.kind.uses_state() && cfg.state_dim == 0 {
            return Err(Error::Config("state-conditioned mixer needs state_dim > 0".into()));
        }
        if cfg.kind.is_qmix_family() && (cfg.embed == 0 || cfg.hypernet_hidden == 0) {
            return Err(Error::Config("embed and hypernet_hidden must be positive".into()));
        }
        if cfg.kind == MixerKind::VdnS && cfg.hypernet_hidden == 0 {
            return Err(Error::Config("hypernet_hidden must be positive".into()));
        }
        Ok(Self { cfg })
    }

    pub fn config(&self) -> &MixerConfig {
        &self.cfg
    }

    pub fn kind(&self) -> MixerKind {
        self.cfg.kind
    }

    pub fn init_params<R: Rng + ?Sized>(&self, store: &mut ParamStore, rng: &mut R) {
        let MixerConfig {
            kind,
            n_agents: n,
            state_dim: s,
            embed: e,
            hypernet_hidden: h,
            ..
        } = self.cfg;
        let two_layer = |store: &mut ParamStore, name: &str, out: usize, rng: &mut R| {
            store.init_dense(&format!("mixer.{name}.0"), s, h, rng);
            store.init_dense(&format!("mixer.{name}.1"), h, out, rng);
        };
        match kind {
            MixerKind::Iql | MixerKind::Vdn => {}
            MixerKind::VdnS => two_layer(store, "v", 1, rng),
            MixerKind::Qmix | MixerKind::Qmix2Lin => {
                two_layer(store, "hyper_w1", n * e, rng);
                store.init_dense("mixer.hyper_b1", s, e, rng);
                two_layer(store, "hyper_w2", e, rng);
                two_layer(store, "hyper_b2", 1, rng);
            }
            MixerKind::QmixNs => {
                let mut free = |name: &str, fan_in: usize, len: usize| {
                    let bound = 1.0 / (fan_in as f64).sqrt();
                    let data = (0..len).map(|_| rng.gen_range(-bound..bound)).collect();
                    store.insert(format!("mixer.{name}"), Tensor { shape: vec![1, len], data });
                };
                free("w1", n, n * e);
                free("w2", e, e);
                store.init_dense("mixer.hyper_b1", s, e, rng);
                two_layer(store, "hyper_b2", 1, rng);
            }
            MixerKind::QmixLin => {
                two_layer(store, "hyper_w1", n, rng);
                two_layer(store, "hyper_b2", 1, rng);
            }
        }
    }

    fn hyper(&self, tape: &mut Tape, store: &ParamStore, name: &str, state: NodeId) -> Result<NodeId> {
        let h = dense_act(tape, store, &format!("mixer.{name}.0"), state, Activation::Relu)?;
        dense(tape, store, &format!("mixer.{name}.1"), h)
    }

    fn parts(&self, tape: &mut Tape, store: &ParamStore, q: NodeId, state: NodeId) -> Result<Parts> {
        let (rows, n) = tape.shape(q);
        if n != self.cfg.n_agents {
            return Err(Error::Shape(format!("mixer got {n} utilities, expected {}", self.cfg.n_agents)));
        }
        let (s_rows, s_dim) = tape.shape(state);
        if self.cfg.kind.uses_state() && (s_rows != rows || s_dim != self.cfg.state_dim) {
            return Err(Error::Shape(format!(
                "mixer state is [{s_rows}, {s_dim}], expected [{rows}, {}]",
                self.cfg.state_dim
            )));
        }
        let e = self.cfg.embed;
        let plain = |out| Parts { out, w1: None, pre: None, w2: None };
        match self.cfg.kind {
            MixerKind::Iql => Err(Error::Config("IQL has no mixing network".into())),
            MixerKind::Vdn => Ok(plain(tape.sum_cols(q))),
            MixerKind::VdnS => {
                let sum = tape.sum_cols(q);
                let v = self.hyper(tape, store, "v", state)?;
                Ok(plain(tape.add(sum, v)))
            }
            MixerKind::QmixLin => {
                let w1 = self.hyper(tape, store, "hyper_w1", state)?;
                let w1 = tape.unary(w1, Activation::Abs);
                let weighted = tape.mul(q, w1);
                let summed = tape.sum_cols(weighted);
                let v = self.hyper(tape, store, "hyper_b2", state)?;
                Ok(Parts { out: tape.add(summed, v), w1: Some(w1), pre: None, w2: None })
            }
            MixerKind::Qmix | MixerKind::Qmix2Lin | MixerKind::QmixNs => {
                let (w1, w2) = if self.cfg.kind == MixerKind::QmixNs {
                    let w1 = tape.param(store, "mixer.w1");
                    let w1 = tape.tile_rows(w1, rows);
                    let w2 = tape.param(store, "mixer.w2");
                    let w2 = tape.tile_rows(w2, rows);
                    (w1, w2)
                } else {
                    let w1 = self.hyper(tape, store, "hyper_w1", state)?;
                    let w2 = self.hyper(tape, store, "hyper_w2", state)?;
                    (w1, w2)
                };
                let w1 = tape.unary(w1, Activation::Abs);
                let w2 = tape.unary(w2, Activation::Abs);
                let b1 = dense(tape, store, "mixer.hyper_b1", state)?;
                let mixed = tape.row_vec_mat(q, w1, e);
                let pre = tape.add(mixed, b1);
                let hidden = activation(tape, self.hidden_activation(), pre);
                let weighted = tape.mul(hidden, w2);
                let y = tape.sum_cols(weighted);
                let b2 = self.hyper(tape, store, "hyper_b2", state)?;
                Ok(Parts { out: tape.add(y, b2), w1: Some(w1), pre: Some(pre), w2: Some(w2) })
            }
        }
    }

    fn hidden_activation(&self) -> Activation {
        match self.cfg.kind {
            MixerKind::Qmix2Lin => Activation::Identity,
            _ => self.cfg.nonlin.activation(),
        }
    }

    /// `Q_tot` for each row: `q` is `[B, n_agents]`, `state` is `[B, state_dim]`.
    /// Returns a `[B, 1]` node.
    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, q: NodeId, state: NodeId) -> Result<NodeId> {
        Ok(self.parts(tape, store, q, state)?.out)
    }

    /// `Q_tot` for a single `(q, state)` point, off-tape for callers.
    pub fn mix(&self, store: &ParamStore, q: &[f64], state: &[f64]) -> Result<f64> {
        let mut tape = Tape::new();
        let (qn, sn) = self.point(&mut tape, q, state);
        let out = self.forward(&mut tape, store, qn, sn)?;
        Ok(tape.scalar(out))
    }

    /// `Q_tot` for many utility vectors sharing one state.
    pub fn mix_many(&self, store: &ParamStore, qs: &[Vec<f64>], state: &[f64]) -> Result<Vec<f64>> {
        if qs.is_empty() {
            return Ok(Vec::new());
        }
        let mut tape = Tape::new();
        let n = self.cfg.n_agents;
        if qs.iter().any(|q| q.len() != n) {
            return Err(Error::Shape(format!("utility vectors must have length {n}")));
        }
        let q = tape.constant(qs.len(), n, qs.concat());
        let s = tape.constant(qs.len(), state.len(), state.repeat(qs.len()));
        let out = self.forward(&mut tape, store, q, s)?;
        Ok(tape.value(out).to_vec())
    }

    fn point(&self, tape: &mut Tape, q: &[f64], state: &[f64]) -> (NodeId, NodeId) {
        let qn = tape.constant(1, q.len(), q.to_vec());
        let sn = tape.constant(1, state.len(), state.to_vec());
        (qn, sn)
    }

    /// Analytic `∂Q_tot/∂Q_a` at one point, one entry per agent:
    /// `Σ_e |W2|_e σ'(pre_e) |W1|[a, e]` for the QMIX core, `|w_a(s)|` for
    /// the linear variant and exactly 1 for VDN-type mixers.
    pub fn partials(&self, store: &ParamStore, q: &[f64], state: &[f64]) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let (qn, sn) = self.point(&mut tape, q, state);
        let parts = self.parts(&mut tape, store, qn, sn)?;
        let n = self.cfg.n_agents;
        let e = self.cfg.embed;
        let (w1, pre, w2) = match (parts.w1, parts.pre, parts.w2) {
            (None, _, _) => return Ok(vec![1.0; n]),
            (Some(w1), None, _) => return Ok(tape.value(w1).to_vec()),
            (Some(w1), Some(pre), Some(w2)) => (tape.value(w1), tape.value(pre), tape.value(w2)),
            _ => unreachable!("QMIX core always has both weight layers"),
        };
        let act = self.hidden_activation();
        let slope: Vec<f64> = pre
            .iter()
            .zip(w2)
            .map(|(&x, &w)| w * act.derivative(x, act.apply(x)))
            .collect();
        Ok((0..n)
            .map(|a| (0..e).map(|j| slope[j] * w1[a * e + j]).sum())
            .collect())
    }
}
