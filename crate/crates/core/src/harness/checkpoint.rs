use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamStore, Tensor};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::learner::Learner;
use crate::rng::{stream_rng, Stream};

pub const CHECKPOINT_MAGIC: &str = "monoq-checkpoint v1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Meta {
    config: RunConfig,
    env_steps: u64,
    episodes: u64,
}

/// Online and target parameters of a learner together with the run config
/// that produced them.
///
/// On disk: a magic line, a `meta <json>` line, `entries N`, then one
/// manifest line `name d0 d1 ...` per tensor, followed by every tensor's
/// values as little-endian f64 in manifest order. Online tensors are named
/// `online/<param>`, target tensors `target/<param>`.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub config: RunConfig,
    pub env_steps: u64,
    pub episodes: u64,
    pub online: ParamStore,
    pub target: ParamStore,
}

impl Checkpoint {
    pub fn from_learner(config: &RunConfig, learner: &Learner, env_steps: u64, episodes: u64) -> Self {
        Self {
            config: config.clone(),
            env_steps,
            episodes,
            online: learner.online.snapshot(),
            target: learner.target.snapshot(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let meta = Meta { config: self.config.clone(), env_steps: self.env_steps, episodes: self.episodes };
        let tensors: Vec<(String, &Tensor)> = self
            .online
            .iter()
            .map(|(k, t)| (format!("online/{k}"), t))
            .chain(self.target.iter().map(|(k, t)| (format!("target/{k}"), t)))
            .collect();
        let mut out = Vec::new();
        let _ = writeln!(out, "{CHECKPOINT_MAGIC}");
        let _ = writeln!(out, "meta {}", serde_json::to_string(&meta).expect("config serialises"));
        let _ = writeln!(out, "entries {}", tensors.len());
        for (name, t) in &tensors {
            let dims: Vec<String> = t.shape.iter().map(usize::to_string).collect();
            let _ = writeln!(out, "{name} {}", dims.join(" "));
        }
        for (_, t) in &tensors {
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut pos = 0usize;
        let mut line = || -> Result<&str> {
            let rest = &bytes[pos..];
            let end = rest
                .iter()
                .position(|&b| b == b'\n')
                .ok_or_else(|| Error::Checkpoint("truncated header".into()))?;
            pos += end + 1;
            std::str::from_utf8(&rest[..end]).map_err(|_| Error::Checkpoint("header is not UTF-8".into()))
        };
        if line()? != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint("missing magic line".into()));
        }
        let meta: Meta = match line()?.strip_prefix("meta ") {
            Some(json) => serde_json::from_str(json)?,
            None => return Err(Error::Checkpoint("missing meta line".into())),
        };
        let n: usize = line()?
            .strip_prefix("entries ")
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Checkpoint("missing entry count".into()))?;
        let mut manifest = Vec::with_capacity(n);
        for _ in 0..n {
            let l = line()?;
            let mut parts = l.split(' ');
            let name = parts.next().unwrap_or_default().to_string();
            let shape = parts
                .map(|d| d.parse::<usize>().map_err(|_| Error::Checkpoint(format!("bad dimension in `{l}`"))))
                .collect::<Result<Vec<_>>>()?;
            manifest.push((name, shape));
        }
        let total: usize = manifest.iter().map(|(_, s)| s.iter().product::<usize>()).sum();
        let payload = &bytes[pos..];
        if payload.len() != total * 8 {
            return Err(Error::Checkpoint(format!(
                "payload has {} bytes, manifest needs {}",
                payload.len(),
                total * 8
            )));
        }
        let mut values = payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")));
        let mut online = ParamStore::new();
        let mut target = ParamStore::new();
        for (name, shape) in manifest {
            let len = shape.iter().product();
            let data: Vec<f64> = values.by_ref().take(len).collect();
            let tensor = Tensor::new(shape, data)?;
            if let Some(k) = name.strip_prefix("online/") {
                online.insert(k, tensor);
            } else if let Some(k) = name.strip_prefix("target/") {
                target.insert(k, tensor);
            } else {
                return Err(Error::Checkpoint(format!("entry `{name}` is neither online nor target")));
            }
        }
        Ok(Self { config: meta.config, env_steps: meta.env_steps, episodes: meta.episodes, online, target })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    /// A learner with the stored parameters. Fails when the stored tensors do
    /// not match the networks the config describes.
    pub fn learner(&self) -> Result<Learner> {
        let env = self.config.build_env()?;
        let cfg = self.config.learner_config(env.spec());
        let mut learner = Learner::new(cfg, &mut stream_rng(self.config.seed, Stream::Init))?;
        for (stored, live) in [(&self.online, &mut learner.online), (&self.target, &mut learner.target)] {
            let expect: Vec<(&str, &[usize])> = live.iter().map(|(k, t)| (k, t.shape.as_slice())).collect();
            let got: Vec<(&str, &[usize])> = stored.iter().map(|(k, t)| (k, t.shape.as_slice())).collect();
            if expect != got {
                return Err(Error::Checkpoint("stored tensors do not match the configured networks".into()));
            }
            live.copy_values_from(stored);
        }
        Ok(learner)
    }
}
