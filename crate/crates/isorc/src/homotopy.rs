//! Homotopy classes of loops in a punctured window, as reduced cyclic words over
//! oriented puncture segments, and loop-family comparisons.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lattice::{point_segment_distance, IsoradialLattice, Quad};
use crate::loops::{crossing, Loop, LoopFamily};
use crate::rcm::Configuration;

const TOUCH: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum HomotopyError {
    #[error("grid spacing must be positive and at most 1, got {0}")]
    BadSpacing(f64),
    #[error("loop passes through puncture {0}")]
    HitsPuncture(usize),
    #[error("loop needs at least three points")]
    TooShort,
}

/// Puncture points and the segments joining them; letter `k+1` is segment `k`
/// traversed from `segments[k][0]` to `segments[k][1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PunctureGrid {
    pub eta: f64,
    pub points: Vec<[f64; 2]>,
    pub segments: Vec<[usize; 2]>,
}

impl PunctureGrid {
    /// `eta Z^2` inside `[-1/eta, 1/eta]^2`, with nearest-neighbour segments.
    pub fn new(eta: f64) -> Result<Self, HomotopyError> {
        if !(eta > 0.0 && eta <= 1.0) {
            return Err(HomotopyError::BadSpacing(eta));
        }
        let k = (1.0 / (eta * eta) + 1e-9).floor() as i64;
        let side = (2 * k + 1) as usize;
        let idx = |i: i64, j: i64| ((j + k) as usize) * side + (i + k) as usize;
        let mut points = Vec::with_capacity(side * side);
        for j in -k..=k {
            for i in -k..=k {
                points.push([i as f64 * eta, j as f64 * eta]);
            }
        }
        let mut segments = Vec::new();
        for j in -k..=k {
            for i in -k..=k {
                if i < k {
                    segments.push([idx(i, j), idx(i + 1, j)]);
                }
                if j < k {
                    segments.push([idx(i, j), idx(i, j + 1)]);
                }
            }
        }
        Ok(PunctureGrid {
            eta,
            points,
            segments,
        })
    }

    /// Arbitrary anchor points joined by the given segments.
    pub fn with_anchors(points: Vec<[f64; 2]>, segments: Vec<[usize; 2]>) -> Self {
        PunctureGrid {
            eta: 0.0,
            points,
            segments,
        }
    }

    pub fn puncture_index(&self, p: [f64; 2]) -> Option<usize> {
        self.points
            .iter()
            .position(|q| (q[0] - p[0]).abs() < 1e-9 && (q[1] - p[1]).abs() < 1e-9)
    }

    /// Letter for crossing segment `seg` in the direction where its start lies on the left.
    pub fn letter(seg: usize) -> i32 {
        seg as i32 + 1
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Word(pub Vec<i32>);

/// Cyclically reduced word in its lexicographically least rotation.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ReducedWord(pub Vec<i32>);

impl ReducedWord {
    pub fn len(&self) -> usize {
        self.0.len()
    }
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl Word {
    pub fn inverse(&self) -> Word {
        Word(self.0.iter().rev().map(|&l| -l).collect())
    }
    pub fn concat(&self, other: &Word) -> Word {
        Word(self.0.iter().chain(&other.0).copied().collect())
    }
}

fn orient(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

fn on_some_segment(grid: &PunctureGrid, p: [f64; 2]) -> bool {
    grid.segments
        .iter()
        .any(|s| point_segment_distance(p, grid.points[s[0]], grid.points[s[1]]) < TOUCH)
}

/// Oriented segments crossed by the closed polyline, in order.
pub fn word_of_loop(points: &[[f64; 2]], grid: &PunctureGrid) -> Result<Word, HomotopyError> {
    let n = points.len();
    if n < 3 {
        return Err(HomotopyError::TooShort);
    }
    for (k, &x) in grid.points.iter().enumerate() {
        for i in 0..n {
            if point_segment_distance(x, points[i], points[(i + 1) % n]) < TOUCH {
                return Err(HomotopyError::HitsPuncture(k));
            }
        }
    }
    let base = (0..n)
        .find(|&i| !on_some_segment(grid, points[i]))
        .unwrap_or(0);
    let mut word = Vec::new();
    for step in 0..n {
        let p = points[(base + step) % n];
        let q = points[(base + step + 1) % n];
        let mut hits: Vec<(f64, i32)> = Vec::new();
        for (k, s) in grid.segments.iter().enumerate() {
            let (x, y) = (grid.points[s[0]], grid.points[s[1]]);
            // zero counts as the negative side, so touching vertices are consistent
            let (dp, dq) = (orient(x, y, p) > 0.0, orient(x, y, q) > 0.0);
            if dp == dq {
                continue;
            }
            let (ox, oy) = (orient(p, q, x), orient(p, q, y));
            if (ox > 0.0) == (oy > 0.0) {
                continue;
            }
            let t = orient(x, y, p) / (orient(x, y, p) - orient(x, y, q));
            let sign = if ox > 0.0 { 1 } else { -1 };
            hits.push((t, sign * PunctureGrid::letter(k)));
        }
        hits.sort_by(|a, b| a.0.total_cmp(&b.0));
        word.extend(hits.into_iter().map(|h| h.1));
    }
    Ok(Word(word))
}

fn least_rotation(w: &[i32]) -> Vec<i32> {
    (0..w.len().max(1))
        .map(|r| {
            w[r.min(w.len())..]
                .iter()
                .chain(&w[..r.min(w.len())])
                .copied()
                .collect::<Vec<_>>()
        })
        .min()
        .unwrap_or_default()
}

/// Free and cyclic cancellation to a fixpoint.
pub fn reduce(word: &Word) -> ReducedWord {
    let mut stack: Vec<i32> = Vec::with_capacity(word.0.len());
    for &l in &word.0 {
        if stack.last() == Some(&-l) {
            stack.pop();
        } else {
            stack.push(l);
        }
    }
    let (mut lo, mut hi) = (0, stack.len());
    while hi - lo >= 2 && stack[lo] == -stack[hi - 1] {
        lo += 1;
        hi -= 1;
    }
    ReducedWord(least_rotation(&stack[lo..hi]))
}

pub fn homotopy_class(
    points: &[[f64; 2]],
    grid: &PunctureGrid,
) -> Result<ReducedWord, HomotopyError> {
    Ok(reduce(&word_of_loop(points, grid)?))
}

fn winding_number(points: &[[f64; 2]], x: [f64; 2]) -> i32 {
    let n = points.len();
    let mut w = 0;
    for i in 0..n {
        let (a, b) = (points[i], points[(i + 1) % n]);
        if a[1] <= x[1] {
            if b[1] > x[1] && orient(a, b, x) > 0.0 {
                w += 1;
            }
        } else if b[1] <= x[1] && orient(a, b, x) < 0.0 {
            w -= 1;
        }
    }
    w
}

pub fn surrounded_count(points: &[[f64; 2]], grid: &PunctureGrid) -> usize {
    grid.points
        .iter()
        .filter(|&&x| winding_number(points, x) != 0)
        .count()
}

fn macroscopic_classes(
    family: &[Loop],
    grid: &PunctureGrid,
) -> Result<Vec<ReducedWord>, HomotopyError> {
    let total = grid.points.len();
    let mut out = Vec::new();
    for l in family {
        let k = surrounded_count(&l.points, grid);
        if k >= 2 && k < total {
            out.push(homotopy_class(&l.points, grid)?);
        }
    }
    Ok(out)
}

/// Whether the two families are within `eta` in the homotopy distance: every class of a
/// loop surrounding at least two but not all punctures appears on the other side.
pub fn dh_compare(
    f: &LoopFamily,
    g: &LoopFamily,
    grid: &PunctureGrid,
) -> Result<bool, HomotopyError> {
    for (a, b) in [(&f.f0, &g.f0), (&f.f1, &g.f1)] {
        let ca = macroscopic_classes(a, grid)?;
        let cb = macroscopic_classes(b, grid)?;
        if !ca.iter().all(|c| cb.contains(c)) || !cb.iter().all(|c| ca.contains(c)) {
            return Ok(false);
        }
    }
    Ok(true)
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Discrete Fréchet distance between open polylines.
pub fn frechet(a: &[[f64; 2]], b: &[[f64; 2]]) -> f64 {
    let (n, m) = (a.len(), b.len());
    let mut dp = vec![f64::INFINITY; n * m];
    for i in 0..n {
        for j in 0..m {
            let d = dist(a[i], b[j]);
            let prev = match (i, j) {
                (0, 0) => 0.0,
                (0, _) => dp[j - 1],
                (_, 0) => dp[(i - 1) * m],
                _ => dp[(i - 1) * m + j]
                    .min(dp[i * m + j - 1])
                    .min(dp[(i - 1) * m + j - 1]),
            };
            dp[i * m + j] = d.max(prev);
        }
    }
    dp[n * m - 1]
}

fn closed(points: &[[f64; 2]], start: usize) -> Vec<[f64; 2]> {
    let n = points.len();
    (0..=n).map(|k| points[(start + k) % n]).collect()
}

/// Discrete Fréchet distance between closed polylines, minimised over the start of the second.
pub fn loop_distance(a: &[[f64; 2]], b: &[[f64; 2]]) -> f64 {
    let ca = closed(a, 0);
    (0..b.len())
        .map(|s| frechet(&ca, &closed(b, s)))
        .fold(f64::INFINITY, f64::min)
}

fn within_ball(points: &[[f64; 2]], radius: f64) -> bool {
    points.iter().all(|p| p[0].hypot(p[1]) <= radius)
}

/// Each loop of `f` inside `B(0, 1/eps)` has a same-family partner in `g` within `eps`, and vice versa.
pub fn dcn_compare(f: &LoopFamily, g: &LoopFamily, eps: f64) -> bool {
    let side = |a: &[Loop], b: &[Loop]| {
        a.iter()
            .filter(|l| within_ball(&l.points, 1.0 / eps))
            .all(|l| b.iter().any(|m| loop_distance(&l.points, &m.points) <= eps))
    };
    [(&f.f0, &g.f0), (&f.f1, &g.f1)]
        .iter()
        .all(|(a, b)| side(a, b) && side(b, a))
}

/// Fraction of quads whose crossing outcome differs between the two configurations.
pub fn dss_quad_compare(
    lat: &IsoradialLattice,
    a: &Configuration,
    b: &Configuration,
    quads: &[Quad],
) -> f64 {
    if quads.is_empty() {
        return 0.0;
    }
    let differ = quads
        .iter()
        .filter(|q| crossing(lat, a, q) != crossing(lat, b, q))
        .count();
    differ as f64 / quads.len() as f64
}
