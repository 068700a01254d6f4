//! Best least-squares approximations of a two-agent payoff matrix by additive
//! and by monotone factorisations.

use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Largest side length accepted by [`optimal_monotone_fit`].
pub const MONOTONE_FIT_MAX_SIDE: usize = 4;

const DYKSTRA_TOL: f64 = 1e-13;
const DYKSTRA_MAX_ITERS: usize = 200_000;

fn dims(m: &[Vec<f64>]) -> Result<(usize, usize)> {
    let rows = m.len();
    let cols = m.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 || m.iter().any(|r| r.len() != cols) {
        return Err(Error::Shape("matrix must be non-empty and rectangular".into()));
    }
    if m.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Config("matrix entries must be finite".into()));
    }
    Ok((rows, cols))
}

/// Sum of squared differences between two equally shaped matrices.
pub fn sq_residual(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(x, y)| (x - y) * (x - y))
        .sum()
}

/// Least-squares projection onto `q1(u1) + q2(u2)`: row mean plus column
/// mean minus grand mean.
pub fn optimal_additive_fit(payoff: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let (rows, cols) = dims(payoff)?;
    let row_mean: Vec<f64> = payoff.iter().map(|r| r.iter().sum::<f64>() / cols as f64).collect();
    let col_mean: Vec<f64> = (0..cols)
        .map(|j| payoff.iter().map(|r| r[j]).sum::<f64>() / rows as f64)
        .collect();
    let grand = row_mean.iter().sum::<f64>() / rows as f64;
    Ok((0..rows)
        .map(|i| (0..cols).map(|j| row_mean[i] + col_mean[j] - grand).collect())
        .collect())
}

/// Pool-adjacent-violators: in-place least-squares non-decreasing fit.
fn pava(x: &mut [f64]) {
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(x.len());
    for &v in x.iter() {
        blocks.push((v, 1));
        while blocks.len() > 1 && blocks[blocks.len() - 2].0 > blocks[blocks.len() - 1].0 {
            let (v2, n2) = blocks.pop().unwrap();
            let (v1, n1) = blocks.pop().unwrap();
            let n = n1 + n2;
            blocks.push(((v1 * n1 as f64 + v2 * n2 as f64) / n as f64, n));
        }
    }
    let mut i = 0;
    for (v, n) in blocks {
        x[i..i + n].fill(v);
        i += n;
    }
}

/// Projection of `y` (row-major `rows × cols`) onto matrices that are
/// non-decreasing along every row and every column, by Dykstra's
/// alternating projections between the two convex cones.
fn bimonotone_projection(y: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let n = y.len();
    let mut x = y.to_vec();
    let mut p = vec![0.0; n];
    let mut q = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut col = vec![0.0; rows];
    for _ in 0..DYKSTRA_MAX_ITERS {
        for i in 0..n {
            z[i] = x[i] + p[i];
        }
        for r in z.chunks_mut(cols) {
            pava(r);
        }
        for i in 0..n {
            p[i] = x[i] + p[i] - z[i];
        }
        let mut next: Vec<f64> = z.iter().zip(&q).map(|(a, b)| a + b).collect();
        for j in 0..cols {
            for i in 0..rows {
                col[i] = next[i * cols + j];
            }
            pava(&mut col);
            for i in 0..rows {
                next[i * cols + j] = col[i];
            }
        }
        for i in 0..n {
            q[i] = z[i] + q[i] - next[i];
        }
        let change = x.iter().zip(&next).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let gap = z.iter().zip(&next).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        x = next;
        if change < DYKSTRA_TOL && gap < DYKSTRA_TOL {
            break;
        }
    }
    x
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

/// Least-squares fit over `f(q1(u1), q2(u2))` with `f` non-decreasing in
/// each argument.
///
/// Any such fit orders the rows by `q1` and the columns by `q2`; given the
/// orders, the fitted matrix is an arbitrary bimonotone array, and that
/// convex problem is solved exactly by projection. Ties in `q1` or `q2`
/// are covered because equal rows satisfy both orders. Every pair of
/// orders is tried and the smallest residual wins.
pub fn optimal_monotone_fit(payoff: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let (rows, cols) = dims(payoff)?;
    if rows > MONOTONE_FIT_MAX_SIDE || cols > MONOTONE_FIT_MAX_SIDE {
        return Err(Error::Budget(format!(
            "monotone fit supports at most {MONOTONE_FIT_MAX_SIDE}x{MONOTONE_FIT_MAX_SIDE}"
        )));
    }
    let mut best: Option<(f64, Vec<Vec<f64>>)> = None;
    for ro in permutations(rows) {
        for co in permutations(cols) {
            let y: Vec<f64> = ro.iter().flat_map(|&i| co.iter().map(move |&j| payoff[i][j])).collect();
            let x = bimonotone_projection(&y, rows, cols);
            let mut fitted = vec![vec![0.0; cols]; rows];
            for (pi, &i) in ro.iter().enumerate() {
                for (pj, &j) in co.iter().enumerate() {
                    fitted[i][j] = x[pi * cols + pj];
                }
            }
            let obj = sq_residual(&fitted, payoff);
            if best.as_ref().is_none_or(|(b, _)| obj < *b) {
                best = Some((obj, fitted));
            }
        }
    }
    Ok(best.expect("at least one ordering").1)
}

/// Comma-separated rows, one line per matrix row.
pub fn matrix_to_csv(m: &[Vec<f64>]) -> String {
    let mut out = String::new();
    for row in m {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(out, "{}", cells.join(","));
    }
    out
}

/// Parses a numeric CSV matrix. Blank lines and `#` comments are skipped.
pub fn parse_matrix_csv(text: &str) -> Result<Vec<Vec<f64>>> {
    let mut rows = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = line
            .split(',')
            .map(|c| {
                c.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Config(format!("line {}: `{}`: {e}", n + 1, c.trim())))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    dims(&rows)?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn close(a: &[Vec<f64>], b: &[Vec<f64>], tol: f64) -> bool {
        a.iter().flatten().zip(b.iter().flatten()).all(|(x, y)| (x - y).abs() < tol)
    }

    #[test]
    fn additive_fit_of_monotone_payoff() {
        let f = optimal_additive_fit(&[vec![0.0, 1.0], vec![1.0, 8.0]]).unwrap();
        assert!(close(&f, &[vec![-1.5, 2.5], vec![2.5, 6.5]], 1e-12));
    }

    #[test]
    fn additive_fit_fixes_additive_matrices() {
        let m = vec![vec![0.0, 1.0], vec![1.0, 2.0]];
        assert!(close(&optimal_additive_fit(&m).unwrap(), &m, 1e-12));
    }

    #[test]
    fn additive_residual_is_orthogonal_to_basis() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let m: Vec<Vec<f64>> = (0..3).map(|_| (0..3).map(|_| rng.gen_range(-5.0..5.0)).collect()).collect();
        let f = optimal_additive_fit(&m).unwrap();
        for i in 0..3 {
            let row: f64 = (0..3).map(|j| m[i][j] - f[i][j]).sum();
            let col: f64 = (0..3).map(|j| m[j][i] - f[j][i]).sum();
            assert!(row.abs() < 1e-9 && col.abs() < 1e-9);
        }
    }

    #[test]
    fn pava_pools_violators() {
        let mut x = [3.0, 1.0, 2.0, 5.0];
        pava(&mut x);
        assert_eq!(x, [2.0, 2.0, 2.0, 5.0]);
    }

    #[test]
    fn monotone_fit_of_nonmonotone_payoff() {
        let f = optimal_monotone_fit(&[vec![2.0, 1.0], vec![1.0, 8.0]]).unwrap();
        let t = 4.0 / 3.0;
        assert!(close(&f, &[vec![t, t], vec![t, 8.0]], 1e-9), "{f:?}");
    }

    #[test]
    fn monotone_fit_fixes_representable_matrices() {
        for m in [vec![vec![0.0, 1.0], vec![1.0, 8.0]], vec![vec![3.0; 3]; 3]] {
            assert!(close(&optimal_monotone_fit(&m).unwrap(), &m, 1e-9));
        }
    }

    #[test]
    fn monotone_fit_handles_row_reordering() {
        let m = vec![vec![8.0, 1.0], vec![1.0, 0.0]];
        assert!(close(&optimal_monotone_fit(&m).unwrap(), &m, 1e-9));
    }

    #[test]
    fn monotone_beats_additive() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for side in 2..=4 {
            let m: Vec<Vec<f64>> = (0..side).map(|_| (0..side).map(|_| rng.gen_range(0.0..10.0)).collect()).collect();
            let add = sq_residual(&optimal_additive_fit(&m).unwrap(), &m);
            let mono = sq_residual(&optimal_monotone_fit(&m).unwrap(), &m);
            assert!(mono <= add + 1e-9);
        }
    }

    #[test]
    fn oversized_monotone_fit_is_refused() {
        assert!(matches!(optimal_monotone_fit(&vec![vec![0.0; 5]; 5]), Err(Error::Budget(_))));
    }

    #[test]
    fn csv_round_trip() {
        let m = vec![vec![0.0, 1.5], vec![-2.0, 8.0]];
        assert_eq!(parse_matrix_csv(&matrix_to_csv(&m)).unwrap(), m);
        assert!(parse_matrix_csv("1,2\n3\n").is_err());
        assert!(parse_matrix_csv("1,x\n").is_err());
        assert_eq!(parse_matrix_csv("# payoff\n0, 1\n1, 8\n").unwrap(), vec![vec![0.0, 1.0], vec![1.0, 8.0]]);
    }
}
