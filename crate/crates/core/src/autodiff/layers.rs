//! Dense and GRU layers built from tape primitives.

use rand::Rng;

use super::params::{ParamStore, Tensor};
use super::tape::{Activation, NodeId, Tape};
use crate::error::{Error, Result};

/// `x · Wᵀ + b` using parameters `{prefix}.w` (`[out, in]`) and `{prefix}.b`.
pub fn dense(tape: &mut Tape, store: &ParamStore, prefix: &str, x: NodeId) -> Result<NodeId> {
    let w_name = format!("{prefix}.w");
    let b_name = format!("{prefix}.b");
    let w = store.require(&w_name)?;
    let (_, fan_in) = w.matrix_dims();
    let (_, x_cols) = tape.shape(x);
    if fan_in != x_cols {
        return Err(Error::Shape(format!(
            "{w_name} expects input width {fan_in}, got {x_cols}"
        )));
    }
    let b = store.require(&b_name)?;
    if b.len() != w.matrix_dims().0 {
        return Err(Error::Shape(format!("{b_name} length does not match {w_name}")));
    }
    let w = tape.param(store, &w_name);
    let b = tape.param(store, &b_name);
    Ok(tape.linear(x, w, Some(b)))
}

/// Dense layer followed by an activation.
pub fn dense_act(
    tape: &mut Tape,
    store: &ParamStore,
    prefix: &str,
    x: NodeId,
    act: Activation,
) -> Result<NodeId> {
    let y = dense(tape, store, prefix, x)?;
    Ok(activation(tape, act, y))
}

pub fn activation(tape: &mut Tape, act: Activation, x: NodeId) -> NodeId {
    if act == Activation::Identity {
        x
    } else {
        tape.unary(x, act)
    }
}

/// Registers GRU parameters: input and hidden projections for the reset,
/// update and candidate gates stacked as `[3H, in]` and `[3H, H]`.
pub fn init_gru<R: Rng + ?Sized>(store: &mut ParamStore, prefix: &str, input: usize, hidden: usize, rng: &mut R) {
    let bound = 1.0 / (hidden as f64).sqrt();
    let mut uniform = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.gen_range(-bound..bound)).collect() };
    store.insert(format!("{prefix}.wi"), Tensor { shape: vec![3 * hidden, input], data: uniform(3 * hidden * input) });
    store.insert(format!("{prefix}.bi"), Tensor { shape: vec![3 * hidden], data: uniform(3 * hidden) });
    store.insert(format!("{prefix}.wh"), Tensor { shape: vec![3 * hidden, hidden], data: uniform(3 * hidden * hidden) });
    store.insert(format!("{prefix}.bh"), Tensor { shape: vec![3 * hidden], data: uniform(3 * hidden) });
}

/// One GRU update.
///
/// ```text
/// r  = σ(Wi_r x + bi_r + Wh_r h + bh_r)
/// z  = σ(Wi_z x + bi_z + Wh_z h + bh_z)
/// n  = tanh(Wi_n x + bi_n + r ⊙ (Wh_n h + bh_n))
/// h' = (1 − z) ⊙ h + z ⊙ n
/// ```
///
/// `h'` is a convex combination of `h` and `n`, so `|h'_i| ≤ 1` whenever
/// `|h_i| ≤ 1`.
pub fn gru_step(tape: &mut Tape, store: &ParamStore, prefix: &str, x: NodeId, h: NodeId) -> Result<NodeId> {
    let wh = store.require(&format!("{prefix}.wh"))?;
    let hidden = wh.matrix_dims().1;
    let (h_rows, h_cols) = tape.shape(h);
    if h_cols != hidden {
        return Err(Error::Shape(format!("{prefix}: hidden width {h_cols}, expected {hidden}")));
    }
    if tape.shape(x).0 != h_rows {
        return Err(Error::Shape(format!("{prefix}: input and hidden row counts differ")));
    }
    let gi = dense_pair(tape, store, prefix, "wi", "bi", x)?;
    let gh = dense_pair(tape, store, prefix, "wh", "bh", h)?;

    let i_rz = tape.slice_cols(gi, 0, 2 * hidden);
    let h_rz = tape.slice_cols(gh, 0, 2 * hidden);
    let rz_pre = tape.add(i_rz, h_rz);
    let rz = tape.unary(rz_pre, Activation::Sigmoid);
    let r = tape.slice_cols(rz, 0, hidden);
    let z = tape.slice_cols(rz, hidden, hidden);

    let i_n = tape.slice_cols(gi, 2 * hidden, hidden);
    let h_n = tape.slice_cols(gh, 2 * hidden, hidden);
    let gated = tape.mul(r, h_n);
    let n_pre = tape.add(i_n, gated);
    let n = tape.unary(n_pre, Activation::Tanh);

    let keep = tape.one_minus(z);
    let old = tape.mul(keep, h);
    let new = tape.mul(z, n);
    Ok(tape.add(old, new))
}

fn dense_pair(tape: &mut Tape, store: &ParamStore, prefix: &str, w: &str, b: &str, x: NodeId) -> Result<NodeId> {
    let w_name = format!("{prefix}.{w}");
    let b_name = format!("{prefix}.{b}");
    let fan_in = store.require(&w_name)?.matrix_dims().1;
    if tape.shape(x).1 != fan_in {
        return Err(Error::Shape(format!("{w_name} expects width {fan_in}, got {}", tape.shape(x).1)));
    }
    store.require(&b_name)?;
    let wn = tape.param(store, &w_name);
    let bn = tape.param(store, &b_name);
    Ok(tape.linear(x, wn, Some(bn)))
}
