//! Scripted experiments: exact-law checks, crossing universality, IIC ratio, RSW and
//! arm-decay probes. Each run yields a CSV body and a JSON summary.

use std::f64::consts::{FRAC_PI_2, PI, SQRT_2};

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::lattice::{
    build_lattice, polyline_distance, IsoradialLattice, LatticeError, Quad, Topology, TrackAngles,
};
use crate::loops::{self, ArmDetector, LoopError, Restriction};
use crate::rcm::{
    self, BoundaryConditions, Configuration, Explorer, ModelParams, RcmError, WeightedGraph,
};
use crate::rng::{self, Rng};
use crate::transform::{self, StarTrianglePatch, TransformError};

/// Sweeps discarded before the first recorded sample of a Markov chain.
pub const BURN_IN: usize = 200;
/// Sweeps between recorded crossing samples.
pub const THIN: usize = 2;
/// Sweeps between IIC event checks when the chain is not i.i.d.
pub const IIC_SWEEPS: usize = 10;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("sample budget must be positive")]
    NoSamples,
    #[error("at least one chain is required")]
    NoChains,
    #[error("invalid parameter: {0}")]
    BadParam(String),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error(transparent)]
    Rcm(#[from] RcmError),
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error(transparent)]
    Loop(#[from] LoopError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn default_q() -> f64 {
    1.0
}
fn default_chains() -> usize {
    1
}
fn half_pi() -> f64 {
    FRAC_PI_2
}
fn default_radius() -> usize {
    16
}
fn default_iic_tolerance() -> f64 {
    0.05
}
fn default_allowance() -> f64 {
    0.03
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum Experiment {
    MeasurePreservation,
    CrossingUniversality {
        alpha: f64,
        size: usize,
        #[serde(default = "default_allowance")]
        allowance: f64,
    },
    IicRatio {
        alpha: f64,
        #[serde(default = "half_pi")]
        beta: f64,
        #[serde(default = "default_radius")]
        radius: usize,
        #[serde(default = "default_iic_tolerance")]
        tolerance: f64,
    },
    RswProbe {
        sizes: Vec<usize>,
    },
    ArmDecay {
        sigma: String,
        radii: Vec<usize>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    #[serde(flatten)]
    pub experiment: Experiment,
    #[serde(default = "default_q")]
    pub q: f64,
    pub samples: usize,
    pub seed: u64,
    #[serde(default = "default_chains")]
    pub chains: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
}

impl ExperimentSpec {
    pub fn name(&self) -> &'static str {
        match self.experiment {
            Experiment::MeasurePreservation => "measure_preservation",
            Experiment::CrossingUniversality { .. } => "crossing_universality",
            Experiment::IicRatio { .. } => "iic_ratio",
            Experiment::RswProbe { .. } => "rsw_probe",
            Experiment::ArmDecay { .. } => "arm_decay",
        }
    }

    /// SHA-256 of the canonical JSON form, output path excluded.
    pub fn hash(&self) -> String {
        let mut s = self.clone();
        s.output = None;
        let bytes = serde_json::to_vec(&s).expect("spec serialises");
        hex::encode(Sha256::digest(&bytes))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub name: String,
    pub seed: u64,
    pub spec_hash: String,
    pub version: String,
    pub estimate: f64,
    pub stderr: f64,
    pub target: Option<f64>,
    pub pass: bool,
    pub details: serde_json::Value,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub report: Report,
    pub csv: String,
}

impl Outcome {
    /// Writes `<prefix>.csv` and `<prefix>.json`.
    pub fn write(&self, prefix: &str) -> Result<(), HarnessError> {
        std::fs::write(format!("{prefix}.csv"), &self.csv)?;
        std::fs::write(
            format!("{prefix}.json"),
            serde_json::to_string_pretty(&self.report)? + "\n",
        )?;
        Ok(())
    }
}

pub fn version_string() -> String {
    let git = std::process::Command::new("git")
        .args(["describe", "--always", "--dirty"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .map(|o| String::from_utf8_lossy(&o.stdout).trim().to_string())
        .unwrap_or_else(|| "unknown".into());
    format!("isorc {} ({git})", env!("CARGO_PKG_VERSION"))
}

pub fn run(spec: &ExperimentSpec) -> Result<Outcome, HarnessError> {
    if spec.samples == 0 && !matches!(spec.experiment, Experiment::MeasurePreservation) {
        return Err(HarnessError::NoSamples);
    }
    if spec.chains == 0 {
        return Err(HarnessError::NoChains);
    }
    let params = ModelParams::new(spec.q)?;
    let (stats, csv) = match &spec.experiment {
        Experiment::MeasurePreservation => exp_measure_preservation(spec.seed)?,
        Experiment::CrossingUniversality {
            alpha,
            size,
            allowance,
        } => exp_crossing_universality(
            *alpha,
            &params,
            *size,
            spec.samples,
            spec.seed,
            spec.chains,
            *allowance,
        )?,
        Experiment::IicRatio {
            alpha,
            beta,
            radius,
            tolerance,
        } => exp_iic_ratio(
            *alpha,
            *beta,
            &params,
            *radius,
            spec.samples,
            spec.seed,
            spec.chains,
            *tolerance,
        )?,
        Experiment::RswProbe { sizes } => {
            exp_rsw_probe(&params, sizes, spec.samples, spec.seed, spec.chains)?
        }
        Experiment::ArmDecay { sigma, radii } => {
            exp_arm_decay(&params, sigma, radii, spec.samples, spec.seed, spec.chains)?
        }
    };
    let report = Report {
        name: spec.name().into(),
        seed: spec.seed,
        spec_hash: spec.hash(),
        version: version_string(),
        estimate: stats.estimate,
        stderr: stats.stderr,
        target: stats.target,
        pass: stats.pass,
        details: stats.details,
    };
    Ok(Outcome { report, csv })
}

pub struct Stats {
    pub estimate: f64,
    pub stderr: f64,
    pub target: Option<f64>,
    pub pass: bool,
    pub details: serde_json::Value,
}

fn shares(total: usize, chains: usize) -> Vec<usize> {
    (0..chains)
        .map(|c| total / chains + usize::from(c < total % chains))
        .collect()
}

/// Runs `f(chain, share)` on every chain; results come back in chain order.
fn run_chains<T: Send>(
    total: usize,
    chains: usize,
    f: impl Fn(usize, usize) -> T + Sync,
) -> Vec<T> {
    let sh = shares(total, chains);
    std::thread::scope(|s| {
        let handles: Vec<_> = sh
            .iter()
            .enumerate()
            .map(|(c, &n)| {
                s.spawn({
                    let f = &f;
                    move || f(c, n)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("chain panicked"))
            .collect()
    })
}

fn mean_binomial(hits: usize, n: usize) -> (f64, f64) {
    let p = hits as f64 / n.max(1) as f64;
    (p, (p * (1.0 - p) / n.max(1) as f64).sqrt())
}

/// Mean and batch-means standard error over per-chain sequences.
pub fn batch_means(seqs: &[Vec<bool>]) -> (f64, f64) {
    let n: usize = seqs.iter().map(Vec::len).sum();
    let hits = seqs.iter().flatten().filter(|&&x| x).count();
    let (mean, binom) = mean_binomial(hits, n);
    let b = (n / (20 * seqs.len().max(1))).max(1);
    let batches: Vec<f64> = seqs
        .iter()
        .flat_map(|s| {
            s.chunks_exact(b)
                .map(|c| c.iter().filter(|&&x| x).count() as f64 / b as f64)
        })
        .collect();
    if batches.len() < 2 || b == 1 {
        return (mean, binom);
    }
    let m = batches.iter().sum::<f64>() / batches.len() as f64;
    let var = batches.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (batches.len() - 1) as f64;
    (mean, (var / batches.len() as f64).sqrt())
}

/// Integer cluster weight usable by Swendsen-Wang.
fn sw_colors(q: f64) -> Option<u32> {
    let k = q.round();
    (k >= 2.0 && k <= 4.0 && (q - k).abs() < 1e-12).then_some(k as u32)
}

/// Random-cluster sampler on a fixed graph, free boundary. `q = 1` draws i.i.d. samples,
/// integer `q` uses Swendsen-Wang and anything else the heat-bath chain.
pub struct Sampler<'a> {
    g: &'a WeightedGraph,
    q: f64,
    cfg: Configuration,
    ex: Option<Explorer>,
    bc: BoundaryConditions,
    started: bool,
}

impl<'a> Sampler<'a> {
    pub fn new(g: &'a WeightedGraph, q: f64) -> Self {
        let bc = BoundaryConditions::none();
        let ex = (q != 1.0 && sw_colors(q).is_none()).then(|| Explorer::new(g, &bc));
        Sampler {
            g,
            q,
            cfg: Configuration::empty(g.num_edges()),
            ex,
            bc,
            started: false,
        }
    }

    pub fn is_iid(&self) -> bool {
        self.q == 1.0
    }

    fn sweep(&mut self, rng: &mut Rng) {
        if let Some(k) = sw_colors(self.q) {
            rcm::swendsen_wang_sweep(self.g, &mut self.cfg, &self.bc, k, rng);
        } else if let Some(ex) = self.ex.as_mut() {
            rcm::heat_bath_sweep(self.g, &mut self.cfg, self.q, ex, rng);
        }
    }

    /// Next sample, `sweeps` chain steps after the previous one.
    pub fn next(&mut self, rng: &mut Rng, sweeps: usize) -> &Configuration {
        if self.is_iid() {
            for (o, &p) in self.cfg.open.iter_mut().zip(&self.g.p) {
                *o = rng.gen::<f64>() < p;
            }
            return &self.cfg;
        }
        let n = if self.started { sweeps } else { BURN_IN };
        self.started = true;
        for _ in 0..n {
            self.sweep(rng);
        }
        &self.cfg
    }
}

/// Induced subgraph of an isoradial lattice inside a centred rectangle, with its left
/// and right sides as crossing arcs.
pub struct CrossingDomain {
    pub graph: WeightedGraph,
    pub left: Vec<usize>,
    pub right: Vec<usize>,
}

impl CrossingDomain {
    pub fn new(
        alpha: f64,
        width: f64,
        height: f64,
        params: &ModelParams,
    ) -> Result<Self, HarnessError> {
        if !(alpha > 0.0 && alpha < PI) {
            return Err(HarnessError::BadParam(format!("alpha {alpha}")));
        }
        let tracks = (height / alpha.sin()).ceil() as usize + 2;
        let shear = tracks as f64 * alpha.cos();
        let mut cols = (width + shear.abs()).ceil() as usize + 4;
        cols += cols % 2;
        let lat = build_lattice(
            TrackAngles::constant(alpha, tracks)?,
            cols / 2,
            tracks,
            Topology::Box,
        )?;
        let mid = lat.point_pos(tracks / 2, cols / 2);
        let quad = Quad::rectangle(
            mid[0] - width / 2.0,
            mid[1] - height / 2.0,
            mid[0] + width / 2.0,
            mid[1] + height / 2.0,
        )
        .map_err(|e| HarnessError::BadParam(e.to_string()))?;
        let snap = lat
            .edges()
            .iter()
            .map(|e| (e.theta / 2.0).sin())
            .fold(0.0, f64::max);
        let mut local = vec![usize::MAX; lat.num_vertices()];
        let (mut left, mut right) = (Vec::new(), Vec::new());
        let (ab, cd) = (quad.arc(0, 1), quad.arc(2, 3));
        let mut n = 0;
        for (v, vx) in lat.vertices().iter().enumerate() {
            if quad.contains(vx.pos) || quad.distance_to_boundary(vx.pos) <= snap {
                local[v] = n;
                if polyline_distance(vx.pos, &ab) <= snap {
                    left.push(n);
                }
                if polyline_distance(vx.pos, &cd) <= snap {
                    right.push(n);
                }
                n += 1;
            }
        }
        let (mut edges, mut p) = (Vec::new(), Vec::new());
        for e in lat.edges() {
            let [a, b] = e.ends;
            if local[a] != usize::MAX && local[b] != usize::MAX {
                edges.push([local[a], local[b]]);
                p.push(rcm::isoradial_weight(params, e.theta)?);
            }
        }
        Ok(CrossingDomain {
            graph: WeightedGraph::new(n, edges, p),
            left,
            right,
        })
    }

    pub fn crossed(&self, cfg: &Configuration) -> bool {
        loops::joined_sets(&self.graph, cfg, &self.left, &self.right, &|_| true)
    }
}

fn crossing_runs(
    dom: &CrossingDomain,
    q: f64,
    samples: usize,
    seed: u64,
    chains: usize,
    stream0: u64,
) -> Vec<Vec<bool>> {
    run_chains(samples, chains, |c, n| {
        let mut rng = rng::stream(seed, stream0 + c as u64);
        let mut s = Sampler::new(&dom.graph, q);
        (0..n)
            .map(|_| dom.crossed(s.next(&mut rng, THIN)))
            .collect()
    })
}

fn csv_rows(out: &mut String, label: &str, runs: &[Vec<bool>]) {
    for (c, seq) in runs.iter().enumerate() {
        for (i, &x) in seq.iter().enumerate() {
            out.push_str(&format!("{label},{c},{i},{}\n", u8::from(x)));
        }
    }
}

/// Horizontal crossing of a centred square of side `size * sqrt 2` on the `alpha` and
/// square lattices.
pub fn exp_crossing_universality(
    alpha: f64,
    params: &ModelParams,
    size: usize,
    samples: usize,
    seed: u64,
    chains: usize,
    allowance: f64,
) -> Result<(Stats, String), HarnessError> {
    let side = size as f64 * SQRT_2;
    let mut csv = String::from("lattice,chain,sample,crossed\n");
    let mut est = Vec::new();
    for (k, a) in [alpha, FRAC_PI_2].into_iter().enumerate() {
        let dom = CrossingDomain::new(a, side, side, params)?;
        let runs = crossing_runs(&dom, params.q, samples, seed, chains, (k * chains) as u64);
        csv_rows(&mut csv, &format!("{a:.6}"), &runs);
        est.push(if params.q == 1.0 {
            let hits = runs.iter().flatten().filter(|&&x| x).count();
            mean_binomial(hits, samples)
        } else {
            batch_means(&runs)
        });
    }
    let diff = est[0].0 - est[1].0;
    let se = (est[0].1.powi(2) + est[1].1.powi(2)).sqrt();
    let stats = Stats {
        estimate: diff,
        stderr: se,
        target: Some(0.0),
        pass: diff.abs() < allowance + 3.0 * se,
        details: serde_json::json!({
            "p_alpha": est[0].0, "stderr_alpha": est[0].1,
            "p_square": est[1].0, "stderr_square": est[1].1,
            "z": if se > 0.0 { diff / se } else { 0.0 },
            "allowance": allowance,
        }),
    };
    Ok((stats, csv))
}

/// Box of radius `radius` around the origin on the lattice with `beta` tracks except
/// for one `alpha` track directly above the row of the origin's upper-left neighbour.
/// Returns the lattice, the origin and that neighbour.
pub fn iic_lattice(
    alpha: f64,
    beta: f64,
    radius: usize,
) -> Result<(IsoradialLattice, usize, usize), HarnessError> {
    if radius < 2 {
        return Err(HarnessError::BadParam(format!("radius {radius}")));
    }
    let mut angles = vec![beta; 2 * radius];
    angles[radius + 1] = alpha;
    let lat = build_lattice(TrackAngles::new(angles)?, radius, 2 * radius, Topology::Box)?;
    let o = lat
        .vertex_at(radius as isize, radius as isize)
        .expect("origin is primal");
    let plus = lat.up_left(o).expect("interior origin");
    Ok((lat, o, plus))
}

/// Whether the cluster of `v0` reaches the boundary with `v0` as its left-most highest
/// vertex. Explores lazily through `open` and stops as soon as `v0` is beaten.
fn rooted_at_top(
    lat: &IsoradialLattice,
    g: &WeightedGraph,
    on_boundary: &[bool],
    v0: usize,
    seen: &mut [u32],
    stamp: u32,
    queue: &mut Vec<usize>,
    open: &mut dyn FnMut(usize) -> bool,
) -> bool {
    let top = lat.vertex(v0);
    queue.clear();
    queue.push(v0);
    seen[v0] = stamp;
    let mut reached = on_boundary[v0];
    let mut i = 0;
    while i < queue.len() {
        let x = queue[i];
        i += 1;
        for &(y, e) in g.neighbors(x) {
            if seen[y] == stamp || !open(e) {
                continue;
            }
            let vy = lat.vertex(y);
            if vy.row > top.row || (vy.row == top.row && vy.col < top.col) {
                return false;
            }
            seen[y] = stamp;
            reached |= on_boundary[y];
            queue.push(y);
        }
    }
    reached
}

#[derive(Default, Clone, Copy)]
struct IicCounts {
    attempts: usize,
    accepted: usize,
    plus: usize,
    origin: usize,
}

#[allow(clippy::too_many_arguments)]
pub fn exp_iic_ratio(
    alpha: f64,
    beta: f64,
    params: &ModelParams,
    radius: usize,
    samples: usize,
    seed: u64,
    chains: usize,
    tolerance: f64,
) -> Result<(Stats, String), HarnessError> {
    let (lat, o, plus) = iic_lattice(alpha, beta, radius)?;
    let g = WeightedGraph::from_lattice(&lat, params);
    let mut on_boundary = vec![false; lat.num_vertices()];
    for &v in lat.boundary() {
        on_boundary[v] = true;
    }
    let max_attempts = samples.saturating_mul(10_000);
    let q = params.q;
    let per_chain = run_chains(samples, chains, |c, target| {
        let mut rng = rng::stream(seed, c as u64);
        let mut counts = IicCounts::default();
        let mut rows = String::new();
        let mut seen = vec![0u32; lat.num_vertices()];
        let mut queue = Vec::new();
        let mut stamp = 0u32;
        let mut edge_stamp = vec![0u32; g.num_edges()];
        let mut edge_open = vec![false; g.num_edges()];
        let mut sampler = Sampler::new(&g, q);
        let budget = max_attempts / chains.max(1);
        while counts.accepted < target && counts.attempts < budget {
            counts.attempts += 1;
            let (e0, ep);
            if sampler.is_iid() {
                stamp += 1;
                let s = stamp;
                let mut open = |e: usize| {
                    if edge_stamp[e] != s {
                        edge_stamp[e] = s;
                        edge_open[e] = rng.gen::<f64>() < g.p[e];
                    }
                    edge_open[e]
                };
                e0 = rooted_at_top(
                    &lat,
                    &g,
                    &on_boundary,
                    o,
                    &mut seen,
                    2 * s,
                    &mut queue,
                    &mut open,
                );
                ep = rooted_at_top(
                    &lat,
                    &g,
                    &on_boundary,
                    plus,
                    &mut seen,
                    2 * s + 1,
                    &mut queue,
                    &mut open,
                );
            } else {
                stamp += 1;
                let cfg = sampler.next(&mut rng, IIC_SWEEPS).clone();
                let mut open = |e: usize| cfg.open[e];
                e0 = rooted_at_top(
                    &lat,
                    &g,
                    &on_boundary,
                    o,
                    &mut seen,
                    2 * stamp,
                    &mut queue,
                    &mut open,
                );
                ep = rooted_at_top(
                    &lat,
                    &g,
                    &on_boundary,
                    plus,
                    &mut seen,
                    2 * stamp + 1,
                    &mut queue,
                    &mut open,
                );
            }
            if e0 || ep {
                counts.accepted += 1;
                counts.plus += usize::from(ep);
                counts.origin += usize::from(e0);
                rows.push_str(&format!(
                    "{c},{},{},{}\n",
                    counts.attempts,
                    u8::from(e0),
                    u8::from(ep)
                ));
            }
        }
        (counts, rows)
    });
    let mut csv = String::from("chain,attempt,origin_event,plus_event\n");
    let mut total = IicCounts::default();
    for (c, rows) in &per_chain {
        csv.push_str(rows);
        total.attempts += c.attempts;
        total.accepted += c.accepted;
        total.plus += c.plus;
        total.origin += c.origin;
    }
    let (est, se) = mean_binomial(total.plus, total.accepted);
    let target = alpha.sin() / (alpha.sin() + beta.sin());
    let stats = Stats {
        estimate: est,
        stderr: se,
        target: Some(target),
        pass: total.accepted >= samples && (est - target).abs() <= tolerance,
        details: serde_json::json!({
            "attempts": total.attempts,
            "accepted": total.accepted,
            "plus_events": total.plus,
            "origin_events": total.origin,
            "radius": radius,
            "tolerance": tolerance,
        }),
    };
    Ok((stats, csv))
}

/// Long-way crossing of a 2:1 rectangle on the square lattice at several sizes.
pub fn exp_rsw_probe(
    params: &ModelParams,
    sizes: &[usize],
    samples: usize,
    seed: u64,
    chains: usize,
) -> Result<(Stats, String), HarnessError> {
    if sizes.is_empty() || sizes.iter().any(|&n| n < 4) {
        return Err(HarnessError::BadParam(
            "sizes must be non-empty and at least 4".into(),
        ));
    }
    let mut csv = String::from("size,chain,sample,crossed\n");
    let mut per_size = Vec::new();
    for (k, &n) in sizes.iter().enumerate() {
        let dom = CrossingDomain::new(
            FRAC_PI_2,
            2.0 * n as f64 * SQRT_2,
            n as f64 * SQRT_2,
            params,
        )?;
        let runs = crossing_runs(&dom, params.q, samples, seed, chains, (k * chains) as u64);
        csv_rows(&mut csv, &n.to_string(), &runs);
        per_size.push(batch_means(&runs));
    }
    let worst = per_size.iter().map(|e| e.0).fold(f64::INFINITY, f64::min);
    let pass = per_size.iter().all(|e| e.0 > 0.05 && e.0 < 0.95);
    let stats = Stats {
        estimate: worst,
        stderr: per_size.iter().map(|e| e.1).fold(0.0, f64::max),
        target: None,
        pass,
        details: serde_json::json!({
            "sizes": sizes,
            "probabilities": per_size.iter().map(|e| e.0).collect::<Vec<_>>(),
            "stderrs": per_size.iter().map(|e| e.1).collect::<Vec<_>>(),
            "band": [0.05, 0.95],
        }),
    };
    Ok((stats, csv))
}

/// Least-squares slope of `log p` against `log r`, with its standard error.
pub fn log_log_slope(radii: &[f64], probs: &[f64]) -> Option<(f64, f64)> {
    let pts: Vec<(f64, f64)> = radii
        .iter()
        .zip(probs)
        .filter(|(_, &p)| p > 0.0)
        .map(|(&r, &p)| (r.ln(), p.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / sxx;
    let se = if pts.len() > 2 {
        let rss: f64 = pts
            .iter()
            .map(|p| (p.1 - my - slope * (p.0 - mx)).powi(2))
            .sum();
        (rss / (n - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Some((slope, se))
}

/// Half-plane arm frequencies from the unit box to radius `R`, centred on the bottom
/// side of a square-lattice box.
pub fn exp_arm_decay(
    params: &ModelParams,
    sigma: &str,
    radii: &[usize],
    samples: usize,
    seed: u64,
    chains: usize,
) -> Result<(Stats, String), HarnessError> {
    let rmax = *radii
        .iter()
        .max()
        .ok_or_else(|| HarnessError::BadParam("no radii".into()))?;
    if radii.iter().any(|&r| r < 2) {
        return Err(HarnessError::BadParam("radii must be at least 2".into()));
    }
    let w = rmax + 2;
    let lat = build_lattice(
        TrackAngles::constant(FRAC_PI_2, rmax + 2)?,
        w,
        rmax + 2,
        Topology::Box,
    )?;
    let g = WeightedGraph::from_lattice(&lat, params);
    let det = ArmDetector::new(&lat);
    let center = lat.point_pos(0, w);
    // validate the arm word once up front
    det.event(
        &Configuration::empty(lat.num_edges()),
        sigma,
        center,
        1.0,
        2.0,
        Restriction::HalfTop,
    )?;
    let runs = run_chains(samples, chains, |c, n| {
        let mut rng = rng::stream(seed, c as u64);
        let mut s = Sampler::new(&g, params.q);
        (0..n)
            .map(|_| {
                let cfg = s.next(&mut rng, THIN);
                radii
                    .iter()
                    .map(|&r| {
                        det.event(cfg, sigma, center, 1.0, r as f64, Restriction::HalfTop)
                            .expect("validated")
                    })
                    .collect::<Vec<bool>>()
            })
            .collect::<Vec<_>>()
    });
    let mut csv = String::from("chain,sample,radius,event\n");
    for (c, run) in runs.iter().enumerate() {
        for (i, row) in run.iter().enumerate() {
            for (&r, &x) in radii.iter().zip(row) {
                csv.push_str(&format!("{c},{i},{r},{}\n", u8::from(x)));
            }
        }
    }
    let est: Vec<(f64, f64)> = (0..radii.len())
        .map(|k| {
            let seqs: Vec<Vec<bool>> = runs
                .iter()
                .map(|run| run.iter().map(|row| row[k]).collect())
                .collect();
            batch_means(&seqs)
        })
        .collect();
    let mut order: Vec<usize> = (0..radii.len()).collect();
    order.sort_by_key(|&k| radii[k]);
    let monotone = order
        .windows(2)
        .all(|w| est[w[1]].0 <= est[w[0]].0 + 2.0 * (est[w[0]].1 + est[w[1]].1));
    let rf: Vec<f64> = radii.iter().map(|&r| r as f64).collect();
    let probs: Vec<f64> = est.iter().map(|e| e.0).collect();
    let fit = log_log_slope(&rf, &probs);
    let stats = Stats {
        estimate: fit.map_or(f64::NAN, |f| -f.0),
        stderr: fit.map_or(f64::NAN, |f| f.1),
        target: None,
        pass: monotone,
        details: serde_json::json!({
            "sigma": sigma,
            "radii": radii,
            "probabilities": probs,
            "stderrs": est.iter().map(|e| e.1).collect::<Vec<_>>(),
            "exponent_ci95": fit.map(|f| [-f.0 - 1.96 * f.1, -f.0 + 1.96 * f.1]),
        }),
    };
    Ok((stats, csv))
}

pub const STAR_TRIANGLE_QS: [f64; 5] = [1.0, 1.5, 2.0, 3.0, 4.0];
pub const EXCHANGE_QS: [f64; 3] = [1.0, 2.0, 4.0];

/// Exact push-forward checks for the star-triangle coupling and the torus track
/// exchange, plus a control against deliberately wrong star weights.
pub fn exp_measure_preservation(seed: u64) -> Result<(Stats, String), HarnessError> {
    let mut rng = rng::stream(seed, 0);
    let mut csv = String::from("check,q,case,tv\n");
    let mut st_max: f64 = 0.0;
    for &q in &STAR_TRIANGLE_QS {
        let params = ModelParams::new(q)?;
        for case in 0..5 {
            let patch = StarTrianglePatch::from_triangle_angles(
                &params,
                transform::random_triangle_angles(&mut rng),
            )?;
            let (f, r) = (
                transform::star_triangle_tv(&patch),
                transform::triangle_star_tv(&patch),
            );
            csv.push_str(&format!(
                "star_triangle_forward,{q},{case},{f:e}\nstar_triangle_reverse,{q},{case},{r:e}\n"
            ));
            st_max = st_max.max(f).max(r);
        }
    }
    let mut te_max: f64 = 0.0;
    for &q in &EXCHANGE_QS {
        let params = ModelParams::new(q)?;
        let lat = build_lattice(
            TrackAngles::new(vec![PI / 3.0, FRAC_PI_2])?,
            4,
            2,
            Topology::Torus,
        )?;
        let tv = transform::exchange_tv(&lat, 1, &params)?;
        csv.push_str(&format!("track_exchange_torus,{q},0,{tv:e}\n"));
        te_max = te_max.max(tv);
    }
    let control = perturbed_star_tv(&ModelParams::new(2.0)?, &mut rng, 1.05)?;
    csv.push_str(&format!("perturbed_control,2,0,{control:e}\n"));
    let stats = Stats {
        estimate: st_max.max(te_max),
        stderr: 0.0,
        target: Some(0.0),
        pass: st_max < 1e-12 && te_max < 1e-10 && control > 1e-3,
        details: serde_json::json!({
            "star_triangle_max_tv": st_max,
            "track_exchange_max_tv": te_max,
            "perturbed_control_tv": control,
        }),
    };
    Ok((stats, csv))
}

/// TV between the forward push-forward and the star law with every star weight scaled by `factor`.
pub fn perturbed_star_tv(
    params: &ModelParams,
    rng: &mut Rng,
    factor: f64,
) -> Result<f64, HarnessError> {
    let patch =
        StarTrianglePatch::from_triangle_angles(params, transform::random_triangle_angles(rng))?;
    let tri = WeightedGraph::new(3, vec![[0, 1], [1, 2], [2, 0]], patch.triangle.to_vec());
    let star = WeightedGraph::new(
        4,
        vec![[3, 0], [3, 1], [3, 2]],
        patch.star.iter().map(|p| (p * factor).min(1.0)).collect(),
    );
    let none = BoundaryConditions::none();
    let pt = rcm::exact_distribution(&tri, &none, params.q)?;
    let ps = rcm::exact_distribution(&star, &none, params.q)?;
    let mut push = [0.0; 8];
    for (bits, &p) in pt.iter().enumerate() {
        let t = [bits & 1 == 1, bits & 2 == 2, bits & 4 == 4];
        for (s, w) in patch.forward_law(t) {
            push[usize::from(s[0]) | usize::from(s[1]) << 1 | usize::from(s[2]) << 2] += p * w;
        }
    }
    Ok(0.5
        * push
            .iter()
            .zip(&ps)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>())
}
