//! Six-vertex weights on the isoradial curve and the sector blocks of the row transfer matrix.
//!
//! Conventions: a vertical arrow is 1 when it points up, a horizontal one is 1 when it
//! points right. With `(below, left, above, right)` at a vertex, weight `a` goes to
//! `(1,1,1,1)` and `(0,0,0,0)`, `b` to `(1,0,1,0)` and `(0,1,0,1)`, `c` to the two turning
//! types. Rows are periodic, so the all-up row carries `a^N + b^N`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MAX_N: usize = 16;
const DENSE_LIMIT: usize = 1000;

#[derive(Debug, Error, PartialEq)]
pub enum SixVertexError {
    #[error("q must lie in [1, 4], got {0}")]
    BadQ(f64),
    #[error("theta must lie in (0, pi), got {0}")]
    BadTheta(f64),
    #[error("row width must be even and between 2 and {MAX_N}, got {0}")]
    BadWidth(usize),
    #[error("sector {k} out of range for width {n}")]
    BadSector { n: usize, k: i32 },
    #[error("power iteration did not converge (residual {0:e})")]
    NoConvergence(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SixVertexWeights {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub zeta: f64,
}

impl SixVertexWeights {
    pub fn delta(&self) -> f64 {
        (self.a * self.a + self.b * self.b - self.c * self.c) / (2.0 * self.a * self.b)
    }

    fn vertex(&self, below: u32, left: u32, above: u32, right: u32) -> f64 {
        match (below, left, above, right) {
            (1, 1, 1, 1) | (0, 0, 0, 0) => self.a,
            (1, 0, 1, 0) | (0, 1, 0, 1) => self.b,
            (1, 0, 0, 1) | (0, 1, 1, 0) => self.c,
            _ => 0.0,
        }
    }
}

pub fn weights_from(q: f64, theta: f64) -> Result<SixVertexWeights, SixVertexError> {
    if !(1.0..=4.0).contains(&q) {
        return Err(SixVertexError::BadQ(q));
    }
    if !(theta > 0.0 && theta < PI) {
        return Err(SixVertexError::BadTheta(theta));
    }
    let zeta = (q.sqrt() / 2.0).min(1.0).acos();
    let (a, b) = if zeta < 1e-7 {
        (2.0 * (1.0 - theta / PI), 2.0 * theta / PI)
    } else {
        let s = (zeta / 2.0).sin();
        (
            ((1.0 - theta / PI) * zeta).sin() / s,
            (theta * zeta / PI).sin() / s,
        )
    };
    Ok(SixVertexWeights {
        a,
        b,
        c: 2.0 * (zeta / 2.0).cos(),
        zeta,
    })
}

/// Sector block: row states with `n/2 + k` up arrows, stored sparsely by row.
#[derive(Debug, Clone)]
pub struct TransferBlock {
    pub n: usize,
    pub k: i32,
    pub states: Vec<u32>,
    rows: Vec<Vec<(usize, f64)>>,
}

fn sector_states(n: usize, k: i32) -> Result<Vec<u32>, SixVertexError> {
    if n < 2 || n % 2 == 1 || n > MAX_N {
        return Err(SixVertexError::BadWidth(n));
    }
    let ups = n as i32 / 2 + k;
    if ups < 0 || ups > n as i32 {
        return Err(SixVertexError::BadSector { n, k });
    }
    Ok((0u32..1 << n)
        .filter(|s| s.count_ones() as i32 == ups)
        .collect())
}

pub fn build_transfer_block(
    n: usize,
    k: i32,
    w: &SixVertexWeights,
) -> Result<TransferBlock, SixVertexError> {
    let states = sector_states(n, k)?;
    let index = |s: u32| states.binary_search(&s).ok();
    let mut rows = Vec::with_capacity(states.len());
    for &s in &states {
        let mut acc: std::collections::BTreeMap<usize, f64> = Default::default();
        for h0 in 0..2u32 {
            // depth-first over columns, carrying the horizontal arrow
            let mut stack = vec![(0usize, h0, 0u32, 1.0f64)];
            while let Some((i, h, above, weight)) = stack.pop() {
                if i == n {
                    if h == h0 {
                        let j = index(above).expect("ice rule conserves the sector");
                        *acc.entry(j).or_default() += weight;
                    }
                    continue;
                }
                let below = (s >> i) & 1;
                for up in 0..2u32 {
                    let next = (below + h) as i32 - up as i32;
                    if next == 0 || next == 1 {
                        let wv = w.vertex(below, h, up, next as u32);
                        stack.push((i + 1, next as u32, above | (up << i), weight * wv));
                    }
                }
            }
        }
        rows.push(acc.into_iter().collect());
    }
    Ok(TransferBlock { n, k, states, rows })
}

impl TransferBlock {
    pub fn dim(&self) -> usize {
        self.states.len()
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| r.iter().map(|&(j, x)| x * v[j]).sum())
            .collect()
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.rows[i].iter().find(|e| e.0 == j).map_or(0.0, |e| e.1)
    }

    pub fn dense(&self) -> Vec<Vec<f64>> {
        let d = self.dim();
        let mut m = vec![vec![0.0; d]; d];
        for (i, r) in self.rows.iter().enumerate() {
            for &(j, x) in r {
                m[i][j] = x;
            }
        }
        m
    }

    pub fn is_dense_feasible(&self) -> bool {
        self.dim() <= DENSE_LIMIT
    }

    /// Strong connectivity of the nonzero pattern.
    pub fn is_irreducible(&self) -> bool {
        let d = self.dim();
        let reach = |fwd: bool| {
            let mut adj: Vec<Vec<usize>> = vec![Vec::new(); d];
            for (i, r) in self.rows.iter().enumerate() {
                for &(j, x) in r {
                    if x > 0.0 {
                        if fwd {
                            adj[i].push(j)
                        } else {
                            adj[j].push(i)
                        }
                    }
                }
            }
            let mut seen = vec![false; d];
            seen[0] = true;
            let mut stack = vec![0];
            while let Some(x) = stack.pop() {
                for &y in &adj[x] {
                    if !seen[y] {
                        seen[y] = true;
                        stack.push(y);
                    }
                }
            }
            seen.into_iter().all(|s| s)
        };
        reach(true) && reach(false)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Eigen {
    pub lambda: f64,
    pub vector: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
}

pub const MAX_ITER: usize = 100_000;

/// Perron root by power iteration from the all-ones vector.
pub fn leading_eigenvalue(block: &TransferBlock) -> Result<Eigen, SixVertexError> {
    let d = block.dim();
    if d == 1 {
        let lambda = block.entry(0, 0);
        return Ok(Eigen {
            lambda,
            vector: vec![1.0],
            residual: 0.0,
            iterations: 0,
        });
    }
    let mut v = vec![1.0 / (d as f64).sqrt(); d];
    let mut residual = f64::INFINITY;
    let (mut best, mut stalled) = (f64::INFINITY, 0);
    for it in 1..=MAX_ITER {
        let mv = block.apply(&v);
        let lambda: f64 = v.iter().zip(&mv).map(|(a, b)| a * b).sum();
        residual = mv
            .iter()
            .zip(&v)
            .map(|(x, y)| (x - lambda * y).powi(2))
            .sum::<f64>()
            .sqrt()
            / lambda;
        if residual < best {
            (best, stalled) = (residual, 0);
        } else {
            stalled += 1;
        }
        // stop at round-off level
        if residual < 1e-14 || (residual < 1e-10 && stalled > 50) {
            return Ok(Eigen {
                lambda,
                vector: v,
                residual,
                iterations: it,
            });
        }
        let norm = mv.iter().map(|x| x * x).sum::<f64>().sqrt();
        v = mv.into_iter().map(|x| x / norm).collect();
    }
    Err(SixVertexError::NoConvergence(residual))
}

fn frobenius(m: &[Vec<f64>]) -> f64 {
    m.iter().flatten().map(|x| x * x).sum::<f64>().sqrt()
}

fn matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let d = a.len();
    let mut out = vec![vec![0.0; d]; d];
    for i in 0..d {
        for k in 0..d {
            let x = a[i][k];
            if x != 0.0 {
                for j in 0..d {
                    out[i][j] += x * b[k][j];
                }
            }
        }
    }
    out
}

/// Largest relative Frobenius norm of `[V1, V2]` over all sectors.
pub fn commutator_norm_weights(
    n: usize,
    w1: &SixVertexWeights,
    w2: &SixVertexWeights,
) -> Result<f64, SixVertexError> {
    if n > 12 {
        return Err(SixVertexError::BadWidth(n));
    }
    let mut worst: f64 = 0.0;
    for k in -(n as i32 / 2)..=(n as i32 / 2) {
        let m1 = build_transfer_block(n, k, w1)?.dense();
        let m2 = build_transfer_block(n, k, w2)?.dense();
        let (p, r) = (matmul(&m1, &m2), matmul(&m2, &m1));
        let diff: Vec<Vec<f64>> = p
            .iter()
            .zip(&r)
            .map(|(x, y)| x.iter().zip(y).map(|(a, b)| a - b).collect())
            .collect();
        worst = worst.max(frobenius(&diff) / (frobenius(&m1) * frobenius(&m2)));
    }
    Ok(worst)
}

pub fn commutator_norm(n: usize, q: f64, theta1: f64, theta2: f64) -> Result<f64, SixVertexError> {
    commutator_norm_weights(n, &weights_from(q, theta1)?, &weights_from(q, theta2)?)
}

/// `lambda^(k)` for every sector `k = 0..=n/2`.
pub fn sector_spectrum(n: usize, w: &SixVertexWeights) -> Result<Vec<Eigen>, SixVertexError> {
    (0..=n as i32 / 2)
        .map(|k| leading_eigenvalue(&build_transfer_block(n, k, w)?))
        .collect()
}
