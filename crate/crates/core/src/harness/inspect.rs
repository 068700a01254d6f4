use std::fmt::Write as _;
use std::str::FromStr;

use super::Checkpoint;
use crate::error::{Error, Result};

pub const INSPECT_HEADER: &str = "# monoq-inspect v1";

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GridAxis {
    /// `n` evenly spaced values from `lo` to `hi` inclusive.
    Sweep { lo: f64, hi: f64, n: usize },
    Fixed(f64),
}

impl GridAxis {
    pub fn values(&self) -> Vec<f64> {
        match *self {
            GridAxis::Fixed(v) => vec![v],
            GridAxis::Sweep { lo, n: 1, .. } => vec![lo],
            GridAxis::Sweep { lo, hi, n } => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
        }
    }
}

/// Utility grid over every agent, written `agent=lo:hi:n` for a swept agent
/// and `agent=value` for a fixed one, comma separated. One or two agents
/// must be swept.
#[derive(Clone, Debug, PartialEq)]
pub struct QGrid {
    pub axes: Vec<GridAxis>,
}

impl FromStr for QGrid {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |m: String| Error::Config(format!("grid `{s}`: {m}"));
        let mut slots: Vec<Option<GridAxis>> = Vec::new();
        for item in s.split(',').map(str::trim).filter(|i| !i.is_empty()) {
            let (agent, spec) = item.split_once('=').ok_or_else(|| bad(format!("`{item}` lacks `=`")))?;
            let agent: usize = agent.trim().parse().map_err(|_| bad(format!("bad agent index `{agent}`")))?;
            let num = |v: &str| v.trim().parse::<f64>().map_err(|_| bad(format!("bad number `{v}`")));
            let parts: Vec<&str> = spec.split(':').collect();
            let axis = match parts.as_slice() {
                [v] => GridAxis::Fixed(num(v)?),
                [lo, hi, n] => {
                    let n: usize = n.trim().parse().map_err(|_| bad(format!("bad count `{n}`")))?;
                    if n == 0 {
                        return Err(bad("sweep needs at least one point".into()));
                    }
                    GridAxis::Sweep { lo: num(lo)?, hi: num(hi)?, n }
                }
                _ => return Err(bad(format!("`{spec}` is neither a value nor lo:hi:n"))),
            };
            if slots.len() <= agent {
                slots.resize(agent + 1, None);
            }
            if slots[agent].replace(axis).is_some() {
                return Err(bad(format!("agent {agent} given twice")));
            }
        }
        let axes = slots
            .into_iter()
            .enumerate()
            .map(|(a, ax)| ax.ok_or_else(|| bad(format!("agent {a} missing"))))
            .collect::<Result<Vec<_>>>()?;
        let swept = axes.iter().filter(|a| matches!(a, GridAxis::Sweep { .. })).count();
        if !(1..=2).contains(&swept) {
            return Err(bad(format!("{swept} swept agents; expected one or two")));
        }
        Ok(Self { axes })
    }
}

impl QGrid {
    /// Every grid point, the last agent varying fastest.
    pub fn points(&self) -> Vec<Vec<f64>> {
        let mut out = vec![Vec::new()];
        for axis in &self.axes {
            let vals = axis.values();
            out = out
                .into_iter()
                .flat_map(|p| {
                    vals.iter().map(move |&v| {
                        let mut q = p.clone();
                        q.push(v);
                        q
                    })
                })
                .collect();
        }
        out
    }
}

/// Parses a state given as one CSV row.
pub fn parse_state(row: &str) -> Result<Vec<f64>> {
    row.split(',')
        .map(|c| c.trim().parse::<f64>().map_err(|_| Error::Config(format!("bad state entry `{c}`"))))
        .collect()
}

/// `Q_tot` of the checkpoint's online mixer at each grid point.
pub fn mixer_surface(ck: &Checkpoint, state: &[f64], grid: &QGrid) -> Result<Vec<(Vec<f64>, f64)>> {
    let learner = ck.learner()?;
    let mixer = learner
        .mixer()
        .ok_or_else(|| Error::Config("checkpoint has no mixer (independent learners)".into()))?;
    let cfg = mixer.config();
    if grid.axes.len() != cfg.n_agents {
        return Err(Error::Shape(format!("grid covers {} agents, checkpoint has {}", grid.axes.len(), cfg.n_agents)));
    }
    if state.len() != cfg.state_dim {
        return Err(Error::Shape(format!("state has {} entries, checkpoint expects {}", state.len(), cfg.state_dim)));
    }
    let points = grid.points();
    let values = mixer.mix_many(&learner.online, &points, state)?;
    Ok(points.into_iter().zip(values).collect())
}

pub fn inspect_mixer(ck: &Checkpoint, state: &[f64], grid: &QGrid) -> Result<String> {
    let surface = mixer_surface(ck, state, grid)?;
    let mut out = format!("{INSPECT_HEADER}\n");
    let cols: Vec<String> = (0..grid.axes.len()).map(|a| format!("q{a}")).collect();
    let _ = writeln!(out, "{},q_tot", cols.join(","));
    for (q, v) in surface {
        let q: Vec<String> = q.iter().map(f64::to_string).collect();
        let _ = writeln!(out, "{},{v}", q.join(","));
    }
    Ok(out)
}
