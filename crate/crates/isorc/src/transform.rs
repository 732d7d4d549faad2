//! Star-triangle coupling, the track-exchange operator and the first coupling.
//!
//! Triangle edges are ordered `(AB, BC, CA)`, star edges `(OA, OB, OC)`; the star
//! edge opposite a triangle edge subtends the supplementary angle, so
//! `theta_OC = pi - theta_AB` and cyclically.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lattice::{IsoradialLattice, Topology, TrackAngles};
use crate::rcm::{
    self, weight_unchecked, BoundaryConditions, Configuration, Dsu, ModelParams, WeightedGraph,
};
use crate::rng;

pub const NORM_TOL: f64 = 1e-9;
/// Band resampling enumerates `2^(2M)` band states; above this many band edges
/// the anchored sweep is used instead.
pub const BAND_LIMIT: usize = 16;

#[derive(Debug, Error, PartialEq)]
pub enum TransformError {
    #[error("coupling probabilities sum to {0}, patch is not isoradial")]
    NotIsoradial(f64),
    #[error("track index {0} out of range")]
    BadTrack(usize),
    #[error("tracks {0} and {1} have equal angles")]
    EqualAngles(usize, usize),
    #[error("angle {0} out of range")]
    BadAngle(f64),
    #[error("no exact law available for this exchange")]
    NoExactLaw,
}

pub type Tri = [bool; 3];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StarTrianglePatch {
    pub q: f64,
    /// `p_AB, p_BC, p_CA`
    pub triangle: [f64; 3],
    /// `p_OA, p_OB, p_OC`
    pub star: [f64; 3],
}

impl StarTrianglePatch {
    pub fn new(q: f64, triangle: [f64; 3], star: [f64; 3]) -> Result<Self, TransformError> {
        let patch = StarTrianglePatch { q, triangle, star };
        let f = patch.forward_sum();
        if (f - 1.0).abs() > NORM_TOL {
            return Err(TransformError::NotIsoradial(f));
        }
        let r = patch.reverse_sum();
        if (r - 1.0).abs() > NORM_TOL {
            return Err(TransformError::NotIsoradial(r));
        }
        Ok(patch)
    }

    /// Patch from the triangle's subtended angles, which must sum to `2 pi`.
    pub fn from_triangle_angles(
        params: &ModelParams,
        theta: [f64; 3],
    ) -> Result<Self, TransformError> {
        for &t in &theta {
            if !(t > 0.0 && t < PI) {
                return Err(TransformError::BadAngle(t));
            }
        }
        let w = |t: f64| weight_unchecked(params, t);
        let triangle = [w(theta[0]), w(theta[1]), w(theta[2])];
        let star = [w(PI - theta[1]), w(PI - theta[2]), w(PI - theta[0])];
        Self::new(params.q, triangle, star)
    }

    /// Weights of the four forward outcomes when no triangle edge is open:
    /// none, only OA, only OB, only OC.
    pub fn forward_zero_law(&self) -> [f64; 4] {
        let x = self.star.map(|p| (1.0 - p) / p);
        let q = self.q;
        [
            q * q * x[0] * x[1] * x[2],
            q * x[1] * x[2],
            q * x[0] * x[2],
            q * x[0] * x[1],
        ]
    }

    /// Weights of the four reverse outcomes when all star edges are open:
    /// all, AB+BC, BC+CA, CA+AB.
    pub fn reverse_full_law(&self) -> [f64; 4] {
        let y = self.triangle.map(|p| p / (1.0 - p));
        let q = self.q;
        [
            y[0] * y[1] * y[2] / q,
            y[0] * y[1] / q,
            y[1] * y[2] / q,
            y[2] * y[0] / q,
        ]
    }

    pub fn forward_sum(&self) -> f64 {
        self.forward_zero_law().iter().sum()
    }

    pub fn reverse_sum(&self) -> f64 {
        self.reverse_full_law().iter().sum()
    }

    /// Law of the star state given the triangle state.
    pub fn forward_law(&self, tri: Tri) -> Vec<(Tri, f64)> {
        let [ab, bc, ca] = tri;
        match ab as u8 + bc as u8 + ca as u8 {
            2 | 3 => vec![([true; 3], 1.0)],
            // the open triangle edge keeps its two endpoints joined through O
            1 if ab => vec![([true, true, false], 1.0)],
            1 if bc => vec![([false, true, true], 1.0)],
            1 => vec![([true, false, true], 1.0)],
            _ => {
                let w = self.forward_zero_law();
                vec![
                    ([false; 3], w[0]),
                    ([true, false, false], w[1]),
                    ([false, true, false], w[2]),
                    ([false, false, true], w[3]),
                ]
            }
        }
    }

    /// Law of the triangle state given the star state.
    pub fn reverse_law(&self, star: Tri) -> Vec<(Tri, f64)> {
        let [oa, ob, oc] = star;
        match oa as u8 + ob as u8 + oc as u8 {
            0 | 1 => vec![([false; 3], 1.0)],
            2 if oa && ob => vec![([true, false, false], 1.0)],
            2 if ob && oc => vec![([false, true, false], 1.0)],
            2 => vec![([false, false, true], 1.0)],
            _ => {
                let w = self.reverse_full_law();
                vec![
                    ([true; 3], w[0]),
                    ([true, true, false], w[1]),
                    ([false, true, true], w[2]),
                    ([true, false, true], w[3]),
                ]
            }
        }
    }
}

fn draw<R: Rng>(law: &[(Tri, f64)], rng: &mut R) -> Tri {
    if law.len() == 1 {
        return law[0].0;
    }
    let mut u: f64 = rng.gen();
    for &(t, p) in law {
        if u < p {
            return t;
        }
        u -= p;
    }
    law[law.len() - 1].0
}

pub fn star_triangle_forward<R: Rng>(patch: &StarTrianglePatch, tri: Tri, rng: &mut R) -> Tri {
    draw(&patch.forward_law(tri), rng)
}

pub fn star_triangle_reverse<R: Rng>(patch: &StarTrianglePatch, star: Tri, rng: &mut R) -> Tri {
    draw(&patch.reverse_law(star), rng)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExchangeMethod {
    /// Sweep of star-triangle moves across a Box, with the extra rhombus
    /// inserted as a pendant edge at the starting end.
    PendantSweep,
    /// Large Box of the wrong row parity: the extra rhombus enters closed.
    ClosedSweep,
    /// Small strips: resample both tracks conditionally on everything the
    /// exchange must preserve.
    BandResample,
    /// Periodic strip, large: sweep started at a column whose outgoing
    /// rhombus state does not depend on the incoming one.
    AnchoredSweep,
    NoOp,
}

#[derive(Debug, Clone)]
pub struct ExchangeOutcome {
    pub lattice: IsoradialLattice,
    pub cfg: Configuration,
    pub method: ExchangeMethod,
    pub exact: bool,
}

/// Per-column transition laws `(lower, upper, diamond) -> (lower', upper', diamond')`
/// for the two column types of a right-to-left sweep with `a > b`.
struct ColumnLaws {
    // [type][input index] -> outcomes
    laws: [Vec<Vec<(Tri, f64)>>; 2],
    p_diamond: f64,
    q: f64,
}

fn tri_index(t: Tri) -> usize {
    t[0] as usize | (t[1] as usize) << 1 | (t[2] as usize) << 2
}

impl ColumnLaws {
    fn new(params: &ModelParams, a: f64, b: f64) -> Result<Self, TransformError> {
        let d = a - b;
        // star (lower, upper, diamond) -> triangle; labels A = lower end, B = upper, C = diamond
        let s2t = StarTrianglePatch::from_triangle_angles(params, [PI - d, a, PI - b])?;
        // triangle (lower, upper, diamond) -> star (lower', diamond', upper')
        let t2s = StarTrianglePatch::from_triangle_angles(params, [a, PI - b, PI - d])?;
        let mut laws: [Vec<Vec<(Tri, f64)>>; 2] = [vec![Vec::new(); 8], vec![Vec::new(); 8]];
        for idx in 0..8 {
            let inp = [idx & 1 == 1, idx & 2 == 2, idx & 4 == 4];
            laws[0][idx] = s2t
                .reverse_law(inp)
                .into_iter()
                .map(|([ab, bc, ca], p)| ([ca, bc, ab], p))
                .collect();
            laws[1][idx] = t2s
                .forward_law(inp)
                .into_iter()
                .map(|([oa, ob, oc], p)| ([oa, oc, ob], p))
                .collect();
        }
        Ok(ColumnLaws {
            laws,
            p_diamond: weight_unchecked(params, d),
            q: params.q,
        })
    }

    fn law(&self, star_column: bool, inp: Tri) -> &[(Tri, f64)] {
        &self.laws[if star_column { 0 } else { 1 }][tri_index(inp)]
    }

    /// Marginal of the outgoing diamond state, `None` unless it ignores the incoming one.
    fn frozen(&self, star_column: bool, lo: bool, up: bool) -> Option<f64> {
        let m = |d: bool| -> f64 {
            self.law(star_column, [lo, up, d])
                .iter()
                .filter(|(t, _)| t[2])
                .map(|(_, p)| p)
                .sum()
        };
        let (m0, m1) = (m(false), m(true));
        ((m0 - m1).abs() < 1e-13).then_some(m0)
    }
}

#[derive(Debug)]
struct BandGroup {
    bits: Vec<u32>,
    cum: Vec<f64>,
}

#[derive(Debug)]
struct BandTable {
    groups: HashMap<Vec<u8>, BandGroup>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct BandKey {
    angles: Vec<u64>,
    cols: usize,
    topology: Topology,
    parity: u8,
    track: usize,
    q: u64,
}

/// Band geometry shared by the table builder and the per-sample lookup.
struct Band {
    first_edge: usize,
    len: usize,
    local: HashMap<usize, usize>,
    ends: Vec<[usize; 2]>,
    boundary: Vec<usize>,
}

impl Band {
    fn new(lat: &IsoradialLattice, i: usize) -> Band {
        let m = lat.cols();
        let first_edge = (i - 1) * m;
        let len = 2 * m;
        let mut local = HashMap::new();
        let mut ends = Vec::with_capacity(len);
        for e in first_edge..first_edge + len {
            let [u, v] = lat.edge(e).ends;
            let n = local.len();
            let lu = *local.entry(u).or_insert(n);
            let n = local.len();
            let lv = *local.entry(v).or_insert(n);
            ends.push([lu, lv]);
        }
        let row_i = i % lat.rows();
        let mut boundary: Vec<usize> = local
            .iter()
            .filter(|(&v, _)| lat.vertex(v).row != row_i)
            .map(|(_, &l)| l)
            .collect();
        boundary.sort_unstable_by_key(|&l| local.iter().find(|(_, &x)| x == l).map(|(&v, _)| v));
        Band {
            first_edge,
            len,
            local,
            ends,
            boundary,
        }
    }

    /// Canonical partition of the band boundary and the number of band clusters
    /// with no boundary vertex.
    fn key(&self, bits: u32) -> (Vec<u8>, usize) {
        let mut d = Dsu::new(self.local.len());
        for k in 0..self.len {
            if bits >> k & 1 == 1 {
                d.union(self.ends[k][0], self.ends[k][1]);
            }
        }
        let mut names: HashMap<usize, u8> = HashMap::new();
        let mut key = Vec::with_capacity(self.boundary.len());
        for &l in &self.boundary {
            let r = d.find(l);
            let n = names.len() as u8;
            key.push(*names.entry(r).or_insert(n));
        }
        let mut internal = 0;
        let mut seen = std::collections::HashSet::new();
        for l in 0..self.local.len() {
            let r = d.find(l);
            if !names.contains_key(&r) && seen.insert(r) {
                internal += 1;
            }
        }
        (key, internal)
    }

    fn bits_of(&self, cfg: &Configuration) -> u32 {
        (0..self.len).fold(0, |acc, k| {
            acc | (cfg.open[self.first_edge + k] as u32) << k
        })
    }
}

pub struct TrackExchanger {
    params: ModelParams,
    band_cache: HashMap<BandKey, Arc<BandTable>>,
}

impl TrackExchanger {
    pub fn new(params: ModelParams) -> Self {
        TrackExchanger {
            params,
            band_cache: HashMap::new(),
        }
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    fn check(&self, lat: &IsoradialLattice, i: usize) -> Result<(f64, f64), TransformError> {
        if i == 0 || i >= lat.height() {
            return Err(TransformError::BadTrack(i));
        }
        Ok((lat.angles()[i - 1], lat.angles()[i]))
    }

    pub fn method_for(lat: &IsoradialLattice, i: usize) -> ExchangeMethod {
        let (a, b) = (lat.angles()[i - 1], lat.angles()[i]);
        if a == b {
            return ExchangeMethod::NoOp;
        }
        match lat.topology() {
            Topology::Box if i % 2 == lat.parity() as usize => ExchangeMethod::PendantSweep,
            Topology::Box if 2 * lat.cols() > BAND_LIMIT => ExchangeMethod::ClosedSweep,
            _ if 2 * lat.cols() <= BAND_LIMIT => ExchangeMethod::BandResample,
            _ => ExchangeMethod::AnchoredSweep,
        }
    }

    /// Random exchange of tracks `i - 1` and `i`. Box lattices are taken with free boundary.
    pub fn exchange<R: Rng>(
        &mut self,
        lat: &IsoradialLattice,
        cfg: &Configuration,
        i: usize,
        rng: &mut R,
    ) -> Result<ExchangeOutcome, TransformError> {
        let (a, b) = self.check(lat, i)?;
        let method = Self::method_for(lat, i);
        let swapped = lat.swap_tracks(i);
        let (cfg2, exact) = match method {
            ExchangeMethod::NoOp => (cfg.clone(), true),
            ExchangeMethod::BandResample => {
                let good = lat.topology() != Topology::Box || i % 2 == lat.parity() as usize;
                (self.band_resample(lat, &swapped, cfg, i, rng)?, good)
            }
            _ => {
                let mirrored = a < b;
                let (laws, work) = if mirrored {
                    (
                        ColumnLaws::new(&self.params, PI - a, PI - b)?,
                        mirror_cfg(lat, cfg),
                    )
                } else {
                    (ColumnLaws::new(&self.params, a, b)?, cfg.clone())
                };
                let (out, exact) = sweep(lat, &laws, &work, i, method, rng);
                (if mirrored { mirror_cfg(lat, &out) } else { out }, exact)
            }
        };
        Ok(ExchangeOutcome {
            lattice: swapped,
            cfg: cfg2,
            method,
            exact,
        })
    }

    fn band_table(&mut self, target: &IsoradialLattice, i: usize) -> Arc<BandTable> {
        let key = BandKey {
            angles: target.angles().iter().map(|a| a.to_bits()).collect(),
            cols: target.cols(),
            topology: target.topology(),
            parity: target.parity(),
            track: i,
            q: self.params.q.to_bits(),
        };
        if let Some(t) = self.band_cache.get(&key) {
            return t.clone();
        }
        let band = Band::new(target, i);
        let p: Vec<f64> = (0..band.len)
            .map(|k| weight_unchecked(&self.params, target.edge(band.first_edge + k).theta))
            .collect();
        let mut raw: HashMap<Vec<u8>, (Vec<u32>, Vec<f64>)> = HashMap::new();
        for bits in 0..1u32 << band.len {
            let (k, internal) = band.key(bits);
            let mut w = self.params.q.powi(internal as i32);
            for (j, &pj) in p.iter().enumerate() {
                w *= if bits >> j & 1 == 1 { pj } else { 1.0 - pj };
            }
            let g = raw.entry(k).or_default();
            g.0.push(bits);
            g.1.push(w);
        }
        let groups = raw
            .into_iter()
            .map(|(k, (bits, w))| {
                let z: f64 = w.iter().sum();
                let cum = w
                    .iter()
                    .scan(0.0, |s, x| {
                        *s += x / z;
                        Some(*s)
                    })
                    .collect();
                (k, BandGroup { bits, cum })
            })
            .collect();
        let t = Arc::new(BandTable { groups });
        self.band_cache.insert(key, t.clone());
        t
    }

    fn band_resample<R: Rng>(
        &mut self,
        lat: &IsoradialLattice,
        target: &IsoradialLattice,
        cfg: &Configuration,
        i: usize,
        rng: &mut R,
    ) -> Result<Configuration, TransformError> {
        let table = self.band_table(target, i);
        let band = Band::new(lat, i);
        let (key, _) = band.key(band.bits_of(cfg));
        let g = &table.groups[&key];
        let u: f64 = rng.gen();
        let k = g.cum.partition_point(|&c| c < u).min(g.bits.len() - 1);
        let mut out = cfg.clone();
        for j in 0..band.len {
            out.open[band.first_edge + j] = g.bits[k] >> j & 1 == 1;
        }
        Ok(out)
    }

    /// Exact transition law from configuration `bits` (edge `e` is bit `e`), for
    /// the exact methods on lattices with at most 64 edges.
    pub fn exact_law(
        &mut self,
        lat: &IsoradialLattice,
        bits: u64,
        i: usize,
    ) -> Result<Vec<(u64, f64)>, TransformError> {
        let (a, b) = self.check(lat, i)?;
        if lat.num_edges() > 64 {
            return Err(TransformError::NoExactLaw);
        }
        match Self::method_for(lat, i) {
            ExchangeMethod::NoOp => Ok(vec![(bits, 1.0)]),
            ExchangeMethod::BandResample => {
                let target = lat.swap_tracks(i);
                let table = self.band_table(&target, i);
                let band = Band::new(lat, i);
                let mask = ((1u64 << band.len) - 1) << band.first_edge;
                let local = ((bits & mask) >> band.first_edge) as u32;
                let g = &table.groups[&band.key(local).0];
                let outside = bits & !mask;
                let mut prev = 0.0;
                Ok(g.bits
                    .iter()
                    .zip(&g.cum)
                    .map(|(&x, &c)| {
                        let p = c - prev;
                        prev = c;
                        (outside | (x as u64) << band.first_edge, p)
                    })
                    .collect())
            }
            ExchangeMethod::PendantSweep => {
                let m = lat.num_edges();
                let mirrored = a < b;
                let laws = if mirrored {
                    ColumnLaws::new(&self.params, PI - a, PI - b)?
                } else {
                    ColumnLaws::new(&self.params, a, b)?
                };
                let mut cfg = Configuration::from_bits(bits, m);
                if mirrored {
                    cfg = mirror_cfg(lat, &cfg);
                }
                let law = sweep_law(lat, &laws, &cfg, i);
                Ok(law
                    .into_iter()
                    .map(|(c, p)| {
                        let c = if mirrored { mirror_cfg(lat, &c) } else { c };
                        (c.to_bits(), p)
                    })
                    .collect())
            }
            _ => Err(TransformError::NoExactLaw),
        }
    }
}

/// Left-right reflection: track angles become `pi - alpha`, rhombus `c` becomes `M - 1 - c`.
fn mirror_cfg(lat: &IsoradialLattice, cfg: &Configuration) -> Configuration {
    let m = lat.cols();
    let mut out = cfg.clone();
    for j in 0..lat.height() {
        for c in 0..m {
            out.open[lat.edge_id(j, m - 1 - c)] = cfg.open[lat.edge_id(j, c)];
        }
    }
    out
}

fn star_column(lat: &IsoradialLattice, i: usize, c: usize) -> bool {
    (i + c + 1) % 2 == lat.parity() as usize
}

fn sweep<R: Rng>(
    lat: &IsoradialLattice,
    laws: &ColumnLaws,
    cfg: &Configuration,
    i: usize,
    method: ExchangeMethod,
    rng: &mut R,
) -> (Configuration, bool) {
    let m = lat.cols();
    let mut out = cfg.clone();
    let lo = |c: usize| lat.edge_id(i - 1, c);
    let up = |c: usize| lat.edge_id(i, c);
    match method {
        ExchangeMethod::PendantSweep | ExchangeMethod::ClosedSweep => {
            let pd = laws.p_diamond;
            let mut d = method == ExchangeMethod::PendantSweep
                && rng.gen::<f64>() < pd / (pd + laws.q * (1.0 - pd));
            for c in (0..m).rev() {
                let t = draw(
                    laws.law(
                        star_column(lat, i, c),
                        [out.open[lo(c)], out.open[up(c)], d],
                    ),
                    rng,
                );
                out.open[lo(c)] = t[0];
                out.open[up(c)] = t[1];
                d = t[2];
            }
            (out, method == ExchangeMethod::PendantSweep)
        }
        _ => {
            // periodic: columns are visited M-1, M-2, ..., 0, M-1, ... cyclically
            let anchor = (0..m).rev().find(|&c| {
                laws.frozen(star_column(lat, i, c), cfg.open[lo(c)], cfg.open[up(c)])
                    .is_some()
            });
            let Some(c0) = anchor else {
                // no freezing column: enter closed at the right end
                let mut d = false;
                for c in (0..m).rev() {
                    let t = draw(
                        laws.law(
                            star_column(lat, i, c),
                            [out.open[lo(c)], out.open[up(c)], d],
                        ),
                        rng,
                    );
                    out.open[lo(c)] = t[0];
                    out.open[up(c)] = t[1];
                    d = t[2];
                }
                return (out, false);
            };
            let s0 = star_column(lat, i, c0);
            let (l0, u0) = (cfg.open[lo(c0)], cfg.open[up(c0)]);
            let pout = laws.frozen(s0, l0, u0).unwrap();
            let d_out = rng.gen::<f64>() < pout;
            let mut d = d_out;
            for k in 1..m {
                let c = (c0 + m - k) % m;
                let t = draw(
                    laws.law(
                        star_column(lat, i, c),
                        [out.open[lo(c)], out.open[up(c)], d],
                    ),
                    rng,
                );
                out.open[lo(c)] = t[0];
                out.open[up(c)] = t[1];
                d = t[2];
            }
            // finish the anchor column conditionally on its already chosen output
            let cond: Vec<(Tri, f64)> = laws
                .law(s0, [l0, u0, d])
                .iter()
                .filter(|(t, _)| t[2] == d_out)
                .copied()
                .collect();
            let z: f64 = cond.iter().map(|(_, p)| p).sum();
            let cond: Vec<(Tri, f64)> = cond.into_iter().map(|(t, p)| (t, p / z)).collect();
            let t = draw(&cond, rng);
            out.open[lo(c0)] = t[0];
            out.open[up(c0)] = t[1];
            (out, false)
        }
    }
}

fn sweep_law(
    lat: &IsoradialLattice,
    laws: &ColumnLaws,
    cfg: &Configuration,
    i: usize,
) -> Vec<(Configuration, f64)> {
    let m = lat.cols();
    let pd = laws.p_diamond;
    let po = pd / (pd + laws.q * (1.0 - pd));
    let mut paths: HashMap<(bool, Vec<bool>), f64> = HashMap::new();
    paths.insert((true, Vec::new()), po);
    paths.insert((false, Vec::new()), 1.0 - po);
    for c in (0..m).rev() {
        let mut next: HashMap<(bool, Vec<bool>), f64> = HashMap::new();
        let inp = |d| {
            [
                cfg.open[lat.edge_id(i - 1, c)],
                cfg.open[lat.edge_id(i, c)],
                d,
            ]
        };
        for ((d, outs), w) in paths {
            for &(t, p) in laws.law(star_column(lat, i, c), inp(d)) {
                if p == 0.0 {
                    continue;
                }
                let mut o = outs.clone();
                o.push(t[0]);
                o.push(t[1]);
                *next.entry((t[2], o)).or_insert(0.0) += w * p;
            }
        }
        paths = next;
    }
    let mut res: HashMap<Vec<bool>, f64> = HashMap::new();
    for ((_, outs), w) in paths {
        *res.entry(outs).or_insert(0.0) += w;
    }
    res.into_iter()
        .map(|(outs, w)| {
            let mut c2 = cfg.clone();
            for (k, c) in (0..m).rev().enumerate() {
                c2.open[lat.edge_id(i - 1, c)] = outs[2 * k];
                c2.open[lat.edge_id(i, c)] = outs[2 * k + 1];
            }
            (c2, w)
        })
        .collect()
}

/// One-shot exchange with a fresh exchanger.
pub fn track_exchange<R: Rng>(
    lat: &IsoradialLattice,
    cfg: &Configuration,
    i: usize,
    params: &ModelParams,
    rng: &mut R,
) -> Result<ExchangeOutcome, TransformError> {
    TrackExchanger::new(*params).exchange(lat, cfg, i, rng)
}

/// Track index exchanged at step `t` of the first coupling.
pub fn schedule(n: i64, t: i64) -> i64 {
    n + (2 * n + 1) * t.div_euclid(2 * n) - t
}

pub fn coupling_steps(n: usize, alpha: f64) -> usize {
    2 * n * (2.0 * n as f64 / alpha.sin()).ceil() as usize
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Snapshot {
    pub t: usize,
    pub angles: Vec<f64>,
    pub open: Vec<bool>,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    /// Track `j` of the coupling sits at lattice row `j + offset`.
    pub offset: usize,
    pub lattice0: IsoradialLattice,
    pub snapshots: Vec<Snapshot>,
    pub exact_steps: usize,
    pub steps: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct CouplingOptions {
    pub q: f64,
    pub sweeps: usize,
    pub record_every: usize,
}

/// Mixed cylinder with angle `alpha` on tracks `j >= n` and `pi/2` below,
/// spanning every track the schedule touches.
pub fn coupling_lattice(
    n: usize,
    alpha: f64,
    width: usize,
) -> Result<(IsoradialLattice, usize), TransformError> {
    if !(alpha > 0.0 && alpha < PI) || alpha == PI / 2.0 {
        return Err(TransformError::BadAngle(alpha));
    }
    let blocks = (2.0 * n as f64 / alpha.sin()).ceil() as usize;
    let h = 2 * n + blocks;
    let angles: Vec<f64> = (0..h)
        .map(|r| if r >= 2 * n { alpha } else { PI / 2.0 })
        .collect();
    let lat = crate::lattice::build_lattice(
        TrackAngles::new(angles).map_err(|_| TransformError::BadAngle(alpha))?,
        width,
        h,
        Topology::CylinderHorizontal,
    )
    .map_err(|_| TransformError::BadAngle(alpha))?;
    Ok((lat, n))
}

pub fn coupling_v1(
    n: usize,
    alpha: f64,
    seed: u64,
    width: usize,
    opts: CouplingOptions,
) -> Result<Trajectory, TransformError> {
    let params = ModelParams::new(opts.q).map_err(|_| TransformError::BadAngle(alpha))?;
    let (lat0, offset) = coupling_lattice(n, alpha, width)?;
    let g = WeightedGraph::from_lattice(&lat0, &params);
    let bc = rcm::lattice_bc(&lat0, false);
    let mut cfg = rcm::sample_mcmc(
        &g,
        &bc,
        opts.q,
        opts.sweeps,
        rcm::default_burn_in(width),
        seed,
    );
    let mut rng = rng::stream(seed, 1);
    let mut ex = TrackExchanger::new(params);
    let steps = coupling_steps(n, alpha);
    let every = opts.record_every.max(1);
    let mut lat = lat0.clone();
    let mut snapshots = vec![Snapshot {
        t: 0,
        angles: lat.angles().to_vec(),
        open: cfg.open.clone(),
    }];
    let mut exact_steps = 0;
    for t in 0..steps {
        let j = schedule(n as i64, t as i64);
        let row = (j + offset as i64) as usize;
        let out = ex.exchange(&lat, &cfg, row, &mut rng)?;
        exact_steps += out.exact as usize;
        lat = out.lattice;
        cfg = out.cfg;
        if (t + 1) % every == 0 || t + 1 == steps {
            snapshots.push(Snapshot {
                t: t + 1,
                angles: lat.angles().to_vec(),
                open: cfg.open.clone(),
            });
        }
    }
    Ok(Trajectory {
        offset,
        lattice0: lat0,
        snapshots,
        exact_steps,
        steps,
    })
}

/// Free boundary on a Box, none on periodic lattices.
pub fn exchange_bc(lat: &IsoradialLattice) -> BoundaryConditions {
    rcm::lattice_bc(lat, false)
}

/// Uniform triple of subtended angles in `(0, pi)` summing to `2 pi`.
pub fn random_triangle_angles<R: Rng>(rng: &mut R) -> [f64; 3] {
    loop {
        let a = rng.gen_range(0.0..PI);
        let b = rng.gen_range(0.0..PI);
        let c = 2.0 * PI - a - b;
        if a > 1e-6 && b > 1e-6 && c > 1e-6 && c < PI - 1e-6 {
            return [a, b, c];
        }
    }
}

/// Total variation between the star-graph law and the push-forward of the
/// triangle-graph law under the forward coupling, both by enumeration.
pub fn star_triangle_tv(patch: &StarTrianglePatch) -> f64 {
    let q = patch.q;
    // vertices A=0 B=1 C=2 O=3
    let tri = WeightedGraph::new(3, vec![[0, 1], [1, 2], [2, 0]], patch.triangle.to_vec());
    let star = WeightedGraph::new(4, vec![[3, 0], [3, 1], [3, 2]], patch.star.to_vec());
    let none = BoundaryConditions::none();
    let pt = rcm::exact_distribution(&tri, &none, q).expect("three edges");
    let ps = rcm::exact_distribution(&star, &none, q).expect("three edges");
    let mut push = [0.0; 8];
    for (bits, &p) in pt.iter().enumerate() {
        let t = [bits & 1 == 1, bits & 2 == 2, bits & 4 == 4];
        for (s, w) in patch.forward_law(t) {
            push[tri_index(s)] += p * w;
        }
    }
    0.5 * push
        .iter()
        .zip(&ps)
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
}

/// Same for the reverse coupling, star law pushed onto the triangle.
pub fn triangle_star_tv(patch: &StarTrianglePatch) -> f64 {
    let q = patch.q;
    let tri = WeightedGraph::new(3, vec![[0, 1], [1, 2], [2, 0]], patch.triangle.to_vec());
    let star = WeightedGraph::new(4, vec![[3, 0], [3, 1], [3, 2]], patch.star.to_vec());
    let none = BoundaryConditions::none();
    let pt = rcm::exact_distribution(&tri, &none, q).expect("three edges");
    let ps = rcm::exact_distribution(&star, &none, q).expect("three edges");
    let mut push = [0.0; 8];
    for (bits, &p) in ps.iter().enumerate() {
        let s = [bits & 1 == 1, bits & 2 == 2, bits & 4 == 4];
        for (t, w) in patch.reverse_law(s) {
            push[tri_index(t)] += p * w;
        }
    }
    0.5 * push
        .iter()
        .zip(&pt)
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
}

/// Exact law of `lat` pushed through the exchange at `i`, compared with the exact
/// law of the swapped lattice.
pub fn exchange_tv(
    lat: &IsoradialLattice,
    i: usize,
    params: &ModelParams,
) -> Result<f64, TransformError> {
    let bc = exchange_bc(lat);
    let g = WeightedGraph::from_lattice(lat, params);
    let target = lat.swap_tracks(i);
    let g2 = WeightedGraph::from_lattice(&target, params);
    let p = rcm::exact_distribution(&g, &bc, params.q).map_err(|_| TransformError::NoExactLaw)?;
    let p2 = rcm::exact_distribution(&g2, &bc, params.q).map_err(|_| TransformError::NoExactLaw)?;
    let mut ex = TrackExchanger::new(*params);
    let mut push = vec![0.0; p.len()];
    for (bits, &w) in p.iter().enumerate() {
        for (b2, k) in ex.exact_law(lat, bits as u64, i)? {
            push[b2 as usize] += w * k;
        }
    }
    Ok(0.5
        * push
            .iter()
            .zip(&p2)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::build_lattice;

    fn params(q: f64) -> ModelParams {
        ModelParams::new(q).unwrap()
    }

    #[test]
    fn forward_cases() {
        let mut rng = rng::stream(0, 0);
        let p = StarTrianglePatch::from_triangle_angles(&params(2.0), [2.0, 2.5, 2.0 * PI - 4.5])
            .unwrap();
        assert_eq!(
            star_triangle_forward(&p, [true, true, false], &mut rng),
            [true; 3]
        );
        assert_eq!(
            star_triangle_forward(&p, [false, true, false], &mut rng),
            [false, true, true]
        );
        assert_eq!(
            star_triangle_reverse(&p, [true, false, false], &mut rng),
            [false; 3]
        );
        assert_eq!(
            star_triangle_reverse(&p, [true, true, false], &mut rng),
            [true, false, false]
        );
    }

    #[test]
    fn zero_open_frequencies() {
        let p = StarTrianglePatch::from_triangle_angles(&params(3.0), [1.9, 2.7, 2.0 * PI - 4.6])
            .unwrap();
        let w = p.forward_zero_law();
        let outcomes = [
            [false; 3],
            [true, false, false],
            [false, true, false],
            [false, false, true],
        ];
        let mut rng = rng::stream(5, 0);
        let n = 1_000_000;
        let mut counts = [0usize; 4];
        for _ in 0..n {
            let s = star_triangle_forward(&p, [false; 3], &mut rng);
            counts[outcomes.iter().position(|&o| o == s).unwrap()] += 1;
        }
        for k in 0..4 {
            let sd = (w[k] * (1.0 - w[k]) / n as f64).sqrt();
            assert!(
                (counts[k] as f64 / n as f64 - w[k]).abs() < 3.0 * sd + 1e-12,
                "outcome {k}"
            );
        }
    }

    #[test]
    fn normalization_random_patches() {
        let mut rng = rng::stream(1, 0);
        for q in [1.0, 1.5, 2.0, 3.0, 4.0] {
            for _ in 0..200 {
                let t = random_triangle_angles(&mut rng);
                let p = StarTrianglePatch::from_triangle_angles(&params(q), t).unwrap();
                assert!((p.forward_sum() - 1.0).abs() < 1e-11);
                assert!((p.reverse_sum() - 1.0).abs() < 1e-11);
            }
        }
    }

    #[test]
    fn rejects_non_isoradial_weights() {
        let p = StarTrianglePatch::from_triangle_angles(&params(2.0), [2.0, 2.0, 2.0 * PI - 4.0])
            .unwrap();
        let mut star = p.star;
        star[0] *= 0.9;
        assert!(matches!(
            StarTrianglePatch::new(2.0, p.triangle, star),
            Err(TransformError::NotIsoradial(_))
        ));
    }

    #[test]
    fn star_triangle_pushforward_exact() {
        let mut rng = rng::stream(2, 0);
        for q in [1.0, 1.5, 2.0, 3.0, 4.0] {
            for _ in 0..5 {
                let p = StarTrianglePatch::from_triangle_angles(
                    &params(q),
                    random_triangle_angles(&mut rng),
                )
                .unwrap();
                assert!(star_triangle_tv(&p) < 1e-12);
                assert!(triangle_star_tv(&p) < 1e-12);
            }
        }
    }

    #[test]
    fn schedule_values() {
        let got: Vec<i64> = (0..9).map(|t| schedule(2, t)).collect();
        assert_eq!(got, vec![2, 1, 0, -1, 3, 2, 1, 0, 4]);
        assert_eq!(coupling_steps(2, PI / 2.0), 16);
    }

    #[test]
    fn box_pendant_sweep_exact() {
        for q in [1.0, 2.0, 4.0] {
            for (a, b) in [(PI / 2.0, PI / 3.0), (PI / 3.0, PI / 2.0), (2.2, 0.7)] {
                let lat = IsoradialLattice::from_rhombi(
                    TrackAngles::new(vec![1.1, a, b]).unwrap(),
                    4,
                    Topology::Box,
                    0,
                )
                .unwrap();
                assert_eq!(
                    TrackExchanger::method_for(&lat, 2),
                    ExchangeMethod::PendantSweep
                );
                let tv = exchange_tv(&lat, 2, &params(q)).unwrap();
                assert!(tv < 1e-12, "q={q} a={a} b={b} tv={tv}");
            }
        }
    }

    #[test]
    fn torus_band_exact_and_involutive() {
        for q in [1.0, 2.0, 4.0] {
            let lat = build_lattice(
                TrackAngles::new(vec![PI / 3.0, PI / 2.0]).unwrap(),
                4,
                2,
                Topology::Torus,
            )
            .unwrap();
            assert!(exchange_tv(&lat, 1, &params(q)).unwrap() < 1e-10);
            let back = lat.swap_tracks(1);
            assert!(exchange_tv(&back, 1, &params(q)).unwrap() < 1e-10);
            assert_eq!(back.swap_tracks(1).angles(), lat.angles());
        }
    }

    #[test]
    fn box_wrong_parity_is_flagged() {
        // the law of the preserved data already differs between the two boxes
        let lat = IsoradialLattice::from_rhombi(
            TrackAngles::new(vec![1.1, PI / 2.0, PI / 3.0]).unwrap(),
            4,
            Topology::Box,
            0,
        )
        .unwrap();
        assert_eq!(
            TrackExchanger::method_for(&lat, 1),
            ExchangeMethod::BandResample
        );
        assert!(exchange_tv(&lat, 1, &params(2.0)).unwrap() > 0.1);
        let mut rng = rng::stream(0, 0);
        let out =
            track_exchange(&lat, &Configuration::empty(12), 1, &params(2.0), &mut rng).unwrap();
        assert!(!out.exact);
    }

    #[test]
    fn cylinder_band_exact() {
        let lat = build_lattice(
            TrackAngles::new(vec![1.2, 1.9, 0.8]).unwrap(),
            2,
            3,
            Topology::CylinderHorizontal,
        )
        .unwrap();
        for i in [1, 2] {
            assert!(exchange_tv(&lat, i, &params(3.3)).unwrap() < 1e-12);
        }
    }

    fn off_row_partition(
        lat: &IsoradialLattice,
        cfg: &Configuration,
        row: usize,
        q: f64,
    ) -> Vec<usize> {
        let g = WeightedGraph::from_lattice(lat, &params(q));
        let mut d = rcm::clusters(&g, cfg, &BoundaryConditions::none());
        let keep: Vec<usize> = (0..lat.num_vertices())
            .filter(|&v| lat.vertex(v).row != row)
            .collect();
        let mut names = HashMap::new();
        keep.iter()
            .map(|&v| {
                let r = d.find(v);
                let n = names.len();
                *names.entry(r).or_insert(n)
            })
            .collect()
    }

    #[test]
    fn sweeps_preserve_off_row_connectivity() {
        let mut rng = rng::stream(4, 0);
        let cases = [
            (Topology::Box, 5, 2),
            (Topology::Box, 4, 3),
            (Topology::CylinderHorizontal, 3, 2),
            (Topology::CylinderHorizontal, 12, 2),
            (Topology::Torus, 12, 2),
        ];
        for (topo, w, i) in cases {
            let lat = build_lattice(
                TrackAngles::new(vec![1.0, 0.6, 2.1, 1.4]).unwrap(),
                w,
                4,
                topo,
            )
            .unwrap();
            let g = WeightedGraph::from_lattice(&lat, &params(2.0));
            let mut ex = TrackExchanger::new(params(2.0));
            for s in 0..200 {
                let cfg = rcm::sample_mcmc(&g, &exchange_bc(&lat), 2.0, 1, 0, s);
                let out = ex.exchange(&lat, &cfg, i, &mut rng).unwrap();
                let row = i % lat.rows();
                assert_eq!(
                    off_row_partition(&lat, &cfg, row, 2.0),
                    off_row_partition(&out.lattice, &out.cfg, row, 2.0),
                    "{topo:?} w={w} i={i} {:?}",
                    out.method
                );
            }
        }
    }

    #[test]
    fn anchored_sweep_close_in_law() {
        // a cylinder wide enough for the anchored sweep, small enough to enumerate
        let lat = IsoradialLattice::from_rhombi(
            TrackAngles::new(vec![PI / 2.0, PI / 3.0]).unwrap(),
            10,
            Topology::CylinderHorizontal,
            0,
        )
        .unwrap();
        assert_eq!(lat.num_edges(), 20);
        assert_eq!(
            TrackExchanger::method_for(&lat, 1),
            ExchangeMethod::AnchoredSweep
        );
        let q = 2.0;
        let g = WeightedGraph::from_lattice(&lat, &params(q));
        let target = lat.swap_tracks(1);
        let g2 = WeightedGraph::from_lattice(&target, &params(q));
        let none = BoundaryConditions::none();
        let p = rcm::exact_distribution(&g, &none, q).unwrap();
        let p2 = rcm::exact_distribution(&g2, &none, q).unwrap();
        // compare the law of the number of open edges
        let mut rng = rng::stream(6, 0);
        let cum: Vec<f64> = p
            .iter()
            .scan(0.0, |s, x| {
                *s += x;
                Some(*s)
            })
            .collect();
        let mut ex = TrackExchanger::new(params(q));
        let n = 40_000;
        let mut hist = vec![0.0; 21];
        for _ in 0..n {
            let u: f64 = rng.gen();
            let b = cum.partition_point(|&c| c < u).min(p.len() - 1);
            let out = ex
                .exchange(&lat, &Configuration::from_bits(b as u64, 20), 1, &mut rng)
                .unwrap();
            hist[out.cfg.num_open()] += 1.0 / n as f64;
        }
        let mut want = vec![0.0; 21];
        for (b, &w) in p2.iter().enumerate() {
            want[(b as u64).count_ones() as usize] += w;
        }
        for k in 0..21 {
            let sd = (want[k] * (1.0 - want[k]) / n as f64).sqrt();
            assert!(
                (hist[k] - want[k]).abs() < 4.0 * sd + 1e-9,
                "k={k} {} vs {}",
                hist[k],
                want[k]
            );
        }
    }

    #[test]
    fn coupling_runs() {
        let opts = CouplingOptions {
            q: 1.0,
            sweeps: 2,
            record_every: 4,
        };
        let tr = coupling_v1(2, PI / 3.0, 3, 4, opts).unwrap();
        assert_eq!(tr.steps, coupling_steps(2, PI / 3.0));
        assert_eq!(tr.snapshots[0].angles, tr.lattice0.angles());
        let last = tr.snapshots.last().unwrap();
        assert_eq!(last.t, tr.steps);
        let alphas = last.angles.iter().filter(|&&a| a == PI / 3.0).count();
        assert_eq!(
            alphas,
            tr.lattice0
                .angles()
                .iter()
                .filter(|&&a| a == PI / 3.0)
                .count()
        );
        let again = coupling_v1(2, PI / 3.0, 3, 4, opts).unwrap();
        assert_eq!(again.snapshots.last().unwrap().open, last.open);
        assert!(coupling_v1(2, PI / 2.0, 3, 4, opts).is_err());
    }
}
