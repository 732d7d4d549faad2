//! Random-cluster weights, exact laws on small graphs, connectivity and samplers.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lattice::{IsoradialLattice, Topology};
use crate::rng;

pub const MAX_EXACT_EDGES: usize = 24;

#[derive(Debug, Error, PartialEq)]
pub enum RcmError {
    #[error("cluster weight q={0} is outside [1, 4]")]
    BadQ(f64),
    #[error("subtended angle {0} is outside (0, pi)")]
    BadAngle(f64),
    #[error("exact enumeration is capped at {MAX_EXACT_EDGES} edges, graph has {0}")]
    TooLarge(usize),
    #[error("Edwards-Sokal colouring needs q in {{2,3,4}}, got {0}")]
    BadColorCount(u32),
    #[error("boundary classes overlap or name vertex {0} twice")]
    BadBoundary(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub q: f64,
    pub r: f64,
}

impl ModelParams {
    pub fn new(q: f64) -> Result<Self, RcmError> {
        if !(1.0..=4.0).contains(&q) {
            return Err(RcmError::BadQ(q));
        }
        Ok(ModelParams {
            q,
            r: (q.sqrt() / 2.0).acos() / PI,
        })
    }
}

pub fn critical_point(q: f64) -> Result<f64, RcmError> {
    if q <= 0.0 || q.is_nan() {
        return Err(RcmError::BadQ(q));
    }
    Ok(q.sqrt() / (1.0 + q.sqrt()))
}

/// Critical edge weight for an edge subtending `theta`.
pub fn isoradial_weight(params: &ModelParams, theta: f64) -> Result<f64, RcmError> {
    if !(theta > 0.0 && theta < PI) {
        return Err(RcmError::BadAngle(theta));
    }
    Ok(weight_unchecked(params, theta))
}

pub(crate) fn weight_unchecked(params: &ModelParams, theta: f64) -> f64 {
    if params.q == 4.0 {
        return (2.0 * PI - 2.0 * theta) / (2.0 * PI - theta);
    }
    let s = params.q.sqrt();
    let r = params.r;
    let num = s * (r * (PI - theta)).sin();
    num / ((r * theta).sin() + num)
}

/// Partition of the boundary into wired classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryConditions {
    pub classes: Vec<Vec<usize>>,
}

impl BoundaryConditions {
    pub fn free(boundary: &[usize]) -> Self {
        BoundaryConditions {
            classes: boundary.iter().map(|&v| vec![v]).collect(),
        }
    }

    pub fn wired(boundary: &[usize]) -> Self {
        if boundary.is_empty() {
            return BoundaryConditions { classes: vec![] };
        }
        BoundaryConditions {
            classes: vec![boundary.to_vec()],
        }
    }

    pub fn none() -> Self {
        BoundaryConditions { classes: vec![] }
    }

    pub fn from_classes(classes: Vec<Vec<usize>>) -> Result<Self, RcmError> {
        let mut seen = std::collections::HashSet::new();
        for c in &classes {
            for &v in c {
                if !seen.insert(v) {
                    return Err(RcmError::BadBoundary(v));
                }
            }
        }
        Ok(BoundaryConditions { classes })
    }

    /// Per-vertex class id, `usize::MAX` for vertices in singleton or no class.
    fn labels(&self, n: usize) -> Vec<usize> {
        let mut lab = vec![usize::MAX; n];
        for (i, c) in self.classes.iter().enumerate() {
            if c.len() > 1 {
                for &v in c {
                    lab[v] = i;
                }
            }
        }
        lab
    }
}

/// Plain edge-percolation graph; multi-edges allowed.
#[derive(Debug, Clone)]
pub struct WeightedGraph {
    pub num_vertices: usize,
    pub edges: Vec<[usize; 2]>,
    pub p: Vec<f64>,
    adj_start: Vec<usize>,
    adj: Vec<(usize, usize)>,
}

impl WeightedGraph {
    pub fn new(num_vertices: usize, edges: Vec<[usize; 2]>, p: Vec<f64>) -> Self {
        assert_eq!(edges.len(), p.len());
        let mut deg = vec![0usize; num_vertices + 1];
        for &[a, b] in &edges {
            deg[a] += 1;
            deg[b] += 1;
        }
        let mut adj_start = vec![0; num_vertices + 1];
        for v in 0..num_vertices {
            adj_start[v + 1] = adj_start[v] + deg[v];
        }
        let mut fill = adj_start.clone();
        let mut adj = vec![(0, 0); adj_start[num_vertices]];
        for (e, &[a, b]) in edges.iter().enumerate() {
            adj[fill[a]] = (b, e);
            fill[a] += 1;
            adj[fill[b]] = (a, e);
            fill[b] += 1;
        }
        WeightedGraph {
            num_vertices,
            edges,
            p,
            adj_start,
            adj,
        }
    }

    pub fn from_lattice(lat: &IsoradialLattice, params: &ModelParams) -> Self {
        let p = lat
            .edges()
            .iter()
            .map(|e| weight_unchecked(params, e.theta))
            .collect();
        let edges = lat.edges().iter().map(|e| e.ends).collect();
        WeightedGraph::new(lat.num_vertices(), edges, p)
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// `(neighbour, edge)` pairs at `v`.
    pub fn neighbors(&self, v: usize) -> &[(usize, usize)] {
        &self.adj[self.adj_start[v]..self.adj_start[v + 1]]
    }
}

/// Boundary conditions suited to a lattice topology: periodic lattices have no boundary.
pub fn lattice_bc(lat: &IsoradialLattice, wired: bool) -> BoundaryConditions {
    if lat.topology() == Topology::Torus {
        return BoundaryConditions::none();
    }
    if wired {
        BoundaryConditions::wired(lat.boundary())
    } else {
        BoundaryConditions::free(lat.boundary())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Configuration {
    pub open: Vec<bool>,
}

impl Configuration {
    pub fn empty(m: usize) -> Self {
        Configuration {
            open: vec![false; m],
        }
    }
    pub fn full(m: usize) -> Self {
        Configuration {
            open: vec![true; m],
        }
    }
    pub fn from_bits(bits: u64, m: usize) -> Self {
        Configuration {
            open: (0..m).map(|e| bits >> e & 1 == 1).collect(),
        }
    }
    pub fn to_bits(&self) -> u64 {
        self.open
            .iter()
            .enumerate()
            .fold(0, |acc, (e, &o)| acc | (o as u64) << e)
    }
    pub fn num_open(&self) -> usize {
        self.open.iter().filter(|&&o| o).count()
    }
    pub fn len(&self) -> usize {
        self.open.len()
    }
    pub fn is_empty(&self) -> bool {
        self.open.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct Dsu {
    parent: Vec<usize>,
    size: Vec<usize>,
    count: usize,
}

impl Dsu {
    pub fn new(n: usize) -> Self {
        Dsu {
            parent: (0..n).collect(),
            size: vec![1; n],
            count: n,
        }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut a, mut b) = (self.find(a), self.find(b));
        if a == b {
            return false;
        }
        if self.size[a] < self.size[b] {
            std::mem::swap(&mut a, &mut b);
        }
        self.parent[b] = a;
        self.size[a] += self.size[b];
        self.count -= 1;
        true
    }

    pub fn count(&self) -> usize {
        self.count
    }
}

/// Union-find over open edges with the wired classes merged.
pub fn clusters(g: &WeightedGraph, cfg: &Configuration, bc: &BoundaryConditions) -> Dsu {
    let mut d = Dsu::new(g.num_vertices);
    for c in &bc.classes {
        for w in c.windows(2) {
            d.union(w[0], w[1]);
        }
    }
    for (e, &[a, b]) in g.edges.iter().enumerate() {
        if cfg.open[e] {
            d.union(a, b);
        }
    }
    d
}

pub fn cluster_count(g: &WeightedGraph, cfg: &Configuration, bc: &BoundaryConditions) -> usize {
    clusters(g, cfg, bc).count()
}

pub fn connected(
    g: &WeightedGraph,
    cfg: &Configuration,
    bc: &BoundaryConditions,
    u: usize,
    v: usize,
) -> bool {
    let mut d = clusters(g, cfg, bc);
    d.find(u) == d.find(v)
}

pub fn rcm_unnormalized_weight(
    g: &WeightedGraph,
    cfg: &Configuration,
    bc: &BoundaryConditions,
    q: f64,
) -> f64 {
    let mut w = q.powi(cluster_count(g, cfg, bc) as i32);
    for (e, &p) in g.p.iter().enumerate() {
        w *= if cfg.open[e] { p } else { 1.0 - p };
    }
    w
}

/// Probabilities indexed by the configuration bit mask (bit `e` set when `e` is open).
pub fn exact_distribution(
    g: &WeightedGraph,
    bc: &BoundaryConditions,
    q: f64,
) -> Result<Vec<f64>, RcmError> {
    let m = g.num_edges();
    if m > MAX_EXACT_EDGES {
        return Err(RcmError::TooLarge(m));
    }
    let mut w: Vec<f64> = (0..1u64 << m)
        .map(|bits| rcm_unnormalized_weight(g, &Configuration::from_bits(bits, m), bc, q))
        .collect();
    let z: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= z);
    Ok(w)
}

/// Scratch state for repeated "are u and v joined in omega minus e" queries.
#[derive(Debug, Clone)]
pub struct Explorer {
    mark: Vec<u32>,
    class_mark: Vec<u32>,
    stamp: u32,
    labels: Vec<usize>,
    classes: Vec<Vec<usize>>,
    queues: [Vec<usize>; 2],
}

impl Explorer {
    pub fn new(g: &WeightedGraph, bc: &BoundaryConditions) -> Self {
        Explorer {
            mark: vec![0; g.num_vertices],
            class_mark: vec![0; bc.classes.len()],
            stamp: 0,
            labels: bc.labels(g.num_vertices),
            classes: bc.classes.clone(),
            queues: [Vec::new(), Vec::new()],
        }
    }

    fn next_stamp(&mut self) -> u32 {
        if self.stamp >= u32::MAX - 4 {
            self.mark.iter_mut().for_each(|m| *m = 0);
            self.class_mark.iter_mut().for_each(|m| *m = 0);
            self.stamp = 0;
        }
        self.stamp += 2;
        self.stamp
    }

    /// Alternating search from both ends; stops as soon as the smaller side is exhausted.
    pub fn joined_without(
        &mut self,
        g: &WeightedGraph,
        cfg: &Configuration,
        u: usize,
        v: usize,
        skip: usize,
    ) -> bool {
        if u == v {
            return true;
        }
        let base = self.next_stamp() - 1;
        // side s marks with base + s; class_mark likewise
        let tag = [base, base + 1];
        self.queues[0].clear();
        self.queues[1].clear();
        let starts = [u, v];
        let mut heads = [0usize; 2];
        for s in 0..2 {
            if self.visit(starts[s], tag[s], tag[1 - s], s) {
                return true;
            }
        }
        loop {
            let mut progressed = false;
            for s in 0..2 {
                if heads[s] < self.queues[s].len() {
                    progressed = true;
                    let x = self.queues[s][heads[s]];
                    heads[s] += 1;
                    for i in g.adj_start[x]..g.adj_start[x + 1] {
                        let (y, e) = g.adj[i];
                        if e != skip && cfg.open[e] && self.visit(y, tag[s], tag[1 - s], s) {
                            return true;
                        }
                    }
                } else {
                    return false;
                }
            }
            if !progressed {
                return false;
            }
        }
    }

    // Marks `x` (and its wired class) for side `s`; true when the other side already owns it.
    fn visit(&mut self, x: usize, mine: u32, other: u32, s: usize) -> bool {
        if self.mark[x] == other {
            return true;
        }
        if self.mark[x] == mine {
            return false;
        }
        self.mark[x] = mine;
        self.queues[s].push(x);
        let c = self.labels[x];
        if c != usize::MAX {
            if self.class_mark[c] == other {
                return true;
            }
            if self.class_mark[c] != mine {
                self.class_mark[c] = mine;
                for i in 0..self.classes[c].len() {
                    let y = self.classes[c][i];
                    if self.mark[y] == other {
                        return true;
                    }
                    if self.mark[y] != mine {
                        self.mark[y] = mine;
                        self.queues[s].push(y);
                    }
                }
            }
        }
        false
    }
}

/// Probability that `e` is open given the rest of the configuration.
pub fn conditional_open(
    g: &WeightedGraph,
    cfg: &Configuration,
    q: f64,
    ex: &mut Explorer,
    e: usize,
) -> f64 {
    let p = g.p[e];
    if q == 1.0 {
        return p;
    }
    let [a, b] = g.edges[e];
    if ex.joined_without(g, cfg, a, b, e) {
        p
    } else {
        p / (p + q * (1.0 - p))
    }
}

pub fn heat_bath_step<R: Rng>(
    g: &WeightedGraph,
    cfg: &mut Configuration,
    q: f64,
    ex: &mut Explorer,
    rng: &mut R,
    e: usize,
) {
    let pr = conditional_open(g, cfg, q, ex, e);
    cfg.open[e] = rng.gen::<f64>() < pr;
}

pub fn heat_bath_sweep<R: Rng>(
    g: &WeightedGraph,
    cfg: &mut Configuration,
    q: f64,
    ex: &mut Explorer,
    rng: &mut R,
) {
    for e in 0..g.num_edges() {
        heat_bath_step(g, cfg, q, ex, rng, e);
    }
}

/// Systematic-scan heat-bath chain, started from the empty configuration.
pub fn sample_mcmc(
    g: &WeightedGraph,
    bc: &BoundaryConditions,
    q: f64,
    sweeps: usize,
    burn_in: usize,
    seed: u64,
) -> Configuration {
    let mut rng = rng::stream(seed, 0);
    let mut ex = Explorer::new(g, bc);
    let mut cfg = Configuration::empty(g.num_edges());
    for _ in 0..burn_in + sweeps {
        heat_bath_sweep(g, &mut cfg, q, &mut ex, &mut rng);
    }
    cfg
}

/// Default burn-in: 64 sweeps per unit of linear size.
pub fn default_burn_in(linear_size: usize) -> usize {
    64 * linear_size.max(1)
}

/// Independent uniform colour in `1..=q` per cluster.
pub fn edwards_sokal_color<R: Rng>(
    g: &WeightedGraph,
    cfg: &Configuration,
    q: u32,
    rng: &mut R,
) -> Result<Vec<u32>, RcmError> {
    if !(2..=4).contains(&q) {
        return Err(RcmError::BadColorCount(q));
    }
    let mut d = clusters(g, cfg, &BoundaryConditions::none());
    let mut color = vec![0u32; g.num_vertices];
    let mut spins = vec![0u32; g.num_vertices];
    for v in 0..g.num_vertices {
        let r = d.find(v);
        if color[r] == 0 {
            color[r] = rng.gen_range(1..=q);
        }
        spins[v] = color[r];
    }
    Ok(spins)
}

/// One Swendsen-Wang update for integer `q`: colour clusters, then reopen
/// monochromatic edges with probability `p_e`.
pub fn swendsen_wang_sweep<R: Rng>(
    g: &WeightedGraph,
    cfg: &mut Configuration,
    bc: &BoundaryConditions,
    q: u32,
    rng: &mut R,
) {
    let mut d = clusters(g, cfg, bc);
    let mut color = vec![u32::MAX; g.num_vertices];
    let mut spin = vec![0u32; g.num_vertices];
    for v in 0..g.num_vertices {
        let r = d.find(v);
        if color[r] == u32::MAX {
            color[r] = rng.gen_range(0..q);
        }
        spin[v] = color[r];
    }
    for (e, &[a, b]) in g.edges.iter().enumerate() {
        cfg.open[e] = spin[a] == spin[b] && rng.gen::<f64>() < g.p[e];
    }
}
