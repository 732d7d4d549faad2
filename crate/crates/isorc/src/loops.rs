//! Loop representation, dual configurations, crossing and arm detectors, cluster extrema.

use std::collections::VecDeque;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lattice::{polyline_distance, signed_area, IsoradialLattice, Quad, Topology};
use crate::rcm::{self, BoundaryConditions, Configuration, WeightedGraph};

#[derive(Debug, Error, PartialEq)]
pub enum LoopError {
    #[error("loop tracing needs a simply connected (Box) region")]
    NotSimplyConnected,
    #[error("invalid arm symbol {0:?}")]
    BadArmSymbol(char),
    #[error("empty arm type")]
    EmptyArmType,
    #[error("inner radius {0} must be below outer radius {1}")]
    BadRadii(f64, f64),
}

pub fn dual_configuration(cfg: &Configuration) -> Configuration {
    Configuration {
        open: cfg.open.iter().map(|&o| !o).collect(),
    }
}

/// A closed medial loop. Points are midpoints of the diamond sides it crosses,
/// plus one extra point outside the region for each turn around a boundary vertex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Loop {
    pub points: Vec<[f64; 2]>,
    /// Rhombi (medial vertices) visited, in order.
    pub rhombi: Vec<usize>,
    /// Interior diamond sides (medial edges) crossed.
    pub medial_edges: usize,
    pub boundary: bool,
}

impl Loop {
    pub fn area(&self) -> f64 {
        signed_area(&self.points)
    }
}

/// `f1`: outer boundaries of primal clusters; `f0`: outer boundaries of dual clusters.
/// Every loop is oriented counterclockwise.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LoopFamily {
    pub f0: Vec<Loop>,
    pub f1: Vec<Loop>,
}

impl LoopFamily {
    pub fn len(&self) -> usize {
        self.f0.len() + self.f1.len()
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Copy)]
struct Link {
    to: usize,
    to_slot: usize,
    corner: (usize, usize),
    rhombus: Option<usize>,
}

struct Sides {
    m: usize,
    h: usize,
}

impl Sides {
    fn horizontal(&self, r: usize, c: usize) -> usize {
        r * self.m + c
    }
    fn slanted(&self, j: usize, c: usize) -> usize {
        (self.h + 1) * self.m + j * (self.m + 1) + c
    }
    fn count(&self) -> usize {
        (self.h + 1) * self.m + self.h * (self.m + 1)
    }
    fn ends(&self, s: usize) -> [(usize, usize); 2] {
        let nh = (self.h + 1) * self.m;
        if s < nh {
            let (r, c) = (s / self.m, s % self.m);
            [(r, c), (r, c + 1)]
        } else {
            let k = s - nh;
            let (j, c) = (k / (self.m + 1), k % (self.m + 1));
            [(j, c), (j + 1, c)]
        }
    }
}

fn add(a: [f64; 2], b: [f64; 2], t: f64) -> [f64; 2] {
    [a[0] + t * b[0], a[1] + t * b[1]]
}

/// Walks the medial graph, turning in each rhombus so as to cross neither
/// open primal nor open dual edges. Outside a Box the dual is taken wired, so
/// loops reaching the boundary turn around boundary primal vertices.
pub fn trace_loops(lat: &IsoradialLattice, cfg: &Configuration) -> Result<LoopFamily, LoopError> {
    if lat.topology() != Topology::Box {
        return Err(LoopError::NotSimplyConnected);
    }
    let (h, m) = (lat.height(), lat.cols());
    let sides = Sides { m, h };
    let n = sides.count();
    let mut slots: Vec<[Option<Link>; 2]> = vec![[None, None]; n];
    let mut owner: Vec<usize> = vec![usize::MAX; n];
    let mut shared = vec![0u8; n];
    let connect = |slots: &mut Vec<[Option<Link>; 2]>, a: usize, b: usize, corner, rhombus| {
        let sa = if slots[a][0].is_none() { 0 } else { 1 };
        let sb = if slots[b][0].is_none() { 0 } else { 1 };
        let sb = if a == b { 1 } else { sb };
        slots[a][sa] = Some(Link {
            to: b,
            to_slot: sb,
            corner,
            rhombus,
        });
        slots[b][sb] = Some(Link {
            to: a,
            to_slot: sa,
            corner,
            rhombus,
        });
    };
    for j in 0..h {
        for c in 0..m {
            let e = lat.edge_id(j, c);
            let (bottom, top) = (sides.horizontal(j, c), sides.horizontal(j + 1, c));
            let (left, right) = (sides.slanted(j, c), sides.slanted(j, c + 1));
            for s in [bottom, top, left, right] {
                owner[s] = e;
                shared[s] += 1;
            }
            if lat.edge(e).rising == cfg.open[e] {
                connect(&mut slots, bottom, right, (j, c + 1), Some(e));
                connect(&mut slots, top, left, (j + 1, c), Some(e));
            } else {
                connect(&mut slots, bottom, left, (j, c), Some(e));
                connect(&mut slots, top, right, (j + 1, c + 1), Some(e));
            }
        }
    }
    // boundary sides meet in pairs at boundary primal points
    let mut at_point: std::collections::HashMap<(usize, usize), Vec<usize>> = Default::default();
    for s in 0..n {
        if shared[s] == 1 {
            for p in sides.ends(s) {
                if (p.0 + p.1) % 2 == lat.parity() as usize {
                    at_point.entry(p).or_default().push(s);
                }
            }
        }
    }
    let mut points: Vec<_> = at_point.into_iter().collect();
    points.sort();
    for (p, list) in points {
        debug_assert_eq!(list.len(), 2);
        connect(&mut slots, list[0], list[1], p, None);
    }

    let mid = |s: usize| {
        let [a, b] = sides.ends(s);
        let (pa, pb) = (lat.point_pos(a.0, a.1), lat.point_pos(b.0, b.1));
        [(pa[0] + pb[0]) / 2.0, (pa[1] + pb[1]) / 2.0]
    };
    let is_primal = |p: (usize, usize)| (p.0 + p.1) % 2 == lat.parity() as usize;

    let mut visited = vec![false; n];
    let mut family = LoopFamily::default();
    for s0 in 0..n {
        if visited[s0] {
            continue;
        }
        let mut lp = Loop {
            points: Vec::new(),
            rhombi: Vec::new(),
            medial_edges: 0,
            boundary: false,
        };
        let mut primal_left = None;
        let (mut cur, mut slot) = (s0, 0);
        loop {
            visited[cur] = true;
            lp.points.push(mid(cur));
            if shared[cur] == 2 {
                lp.medial_edges += 1;
            }
            let link = slots[cur][slot].expect("every side has two links");
            let corner = lat.point_pos(link.corner.0, link.corner.1);
            match link.rhombus {
                Some(e) => {
                    lp.rhombi.push(e);
                    if primal_left.is_none() {
                        let (m1, m2) = (mid(cur), mid(link.to));
                        let cr = (m2[0] - m1[0]) * (corner[1] - m1[1])
                            - (m2[1] - m1[1]) * (corner[0] - m1[0]);
                        primal_left = Some((cr > 0.0) == is_primal(link.corner));
                    }
                }
                None => {
                    lp.boundary = true;
                    let c1 = lat.rhombus_center(owner[cur]);
                    let c2 = lat.rhombus_center(owner[link.to]);
                    let d = [
                        corner[0] - (c1[0] + c2[0]) / 2.0,
                        corner[1] - (c1[1] + c2[1]) / 2.0,
                    ];
                    let norm = (d[0] * d[0] + d[1] * d[1]).sqrt();
                    lp.points.push(add(corner, d, 0.3 / norm));
                }
            }
            cur = link.to;
            slot = 1 - link.to_slot;
            if cur == s0 && slot == 0 {
                break;
            }
        }
        let area = lp.area();
        let inside_primal = primal_left.unwrap_or(true) == (area > 0.0);
        if area < 0.0 {
            lp.points.reverse();
            lp.rhombi.reverse();
        }
        if inside_primal {
            family.f1.push(lp);
        } else {
            family.f0.push(lp);
        }
    }
    Ok(family)
}

/// Graph of the dual lattice, with the dual configuration and wired dual boundary.
pub fn dual_setup(
    lat: &IsoradialLattice,
    cfg: &Configuration,
) -> (
    IsoradialLattice,
    WeightedGraph,
    Configuration,
    BoundaryConditions,
) {
    let d = lat.dual();
    let g = WeightedGraph::new(
        d.num_vertices(),
        d.edges().iter().map(|e| e.ends).collect(),
        vec![0.5; d.num_edges()],
    );
    let bc = rcm::lattice_bc(&d, true);
    (d, g, dual_configuration(cfg), bc)
}

fn plain_graph(lat: &IsoradialLattice) -> WeightedGraph {
    WeightedGraph::new(
        lat.num_vertices(),
        lat.edges().iter().map(|e| e.ends).collect(),
        vec![0.5; lat.num_edges()],
    )
}

/// Open-path search from `from` to `to` using only vertices accepted by `allowed`.
pub fn joined_sets(
    g: &WeightedGraph,
    cfg: &Configuration,
    from: &[usize],
    to: &[usize],
    allowed: &dyn Fn(usize) -> bool,
) -> bool {
    let mut target = vec![false; g.num_vertices];
    for &v in to {
        target[v] = true;
    }
    let mut seen = vec![false; g.num_vertices];
    let mut queue: VecDeque<usize> = VecDeque::new();
    for &v in from {
        if allowed(v) && !seen[v] {
            seen[v] = true;
            queue.push_back(v);
        }
    }
    while let Some(x) = queue.pop_front() {
        if target[x] {
            return true;
        }
        for &(y, e) in g.neighbors(x) {
            if cfg.open[e] && !seen[y] && allowed(y) {
                seen[y] = true;
                queue.push_back(y);
            }
        }
    }
    false
}

fn max_edge_length(lat: &IsoradialLattice) -> f64 {
    lat.edges()
        .iter()
        .map(|e| 2.0 * (e.theta / 2.0).sin())
        .fold(0.0, f64::max)
}

/// Open crossing from arc `(ab)` to arc `(cd)` inside `quad`; vertices within half an
/// edge length of the boundary count as inside, and as on an arc when that close to it.
pub fn crossing(lat: &IsoradialLattice, cfg: &Configuration, quad: &Quad) -> bool {
    let snap = max_edge_length(lat) / 2.0;
    let g = plain_graph(lat);
    crossing_in(lat, &g, cfg, quad, snap)
}

pub(crate) fn crossing_in(
    lat: &IsoradialLattice,
    g: &WeightedGraph,
    cfg: &Configuration,
    quad: &Quad,
    snap: f64,
) -> bool {
    let inside: Vec<bool> = lat
        .vertices()
        .iter()
        .map(|v| quad.contains(v.pos) || quad.distance_to_boundary(v.pos) <= snap)
        .collect();
    let (ab, cd) = (quad.arc(0, 1), quad.arc(2, 3));
    let from: Vec<usize> = (0..lat.num_vertices())
        .filter(|&v| inside[v] && polyline_distance(lat.vertex(v).pos, &ab) <= snap)
        .collect();
    let to: Vec<usize> = (0..lat.num_vertices())
        .filter(|&v| inside[v] && polyline_distance(lat.vertex(v).pos, &cd) <= snap)
        .collect();
    joined_sets(g, cfg, &from, &to, &|v| inside[v])
}

/// Dual crossing of the rotated quad, on the dual lattice.
pub fn dual_crossing(lat: &IsoradialLattice, cfg: &Configuration, quad: &Quad) -> bool {
    let d = lat.dual();
    crossing(&d, &dual_configuration(cfg), &quad.rotated())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Restriction {
    Plane,
    HalfTop,
    HalfBottom,
    HalfLeft,
    Quarter,
}

impl Restriction {
    fn admits(self, d: [f64; 2]) -> bool {
        const EPS: f64 = 1e-9;
        match self {
            Restriction::Plane => true,
            Restriction::HalfTop => d[1] >= -EPS,
            Restriction::HalfBottom => d[1] <= EPS,
            Restriction::HalfLeft => d[0] <= EPS,
            Restriction::Quarter => d[0] >= -EPS && d[1] >= -EPS,
        }
    }

    /// Polar angle where the counterclockwise order starts.
    fn start(self) -> f64 {
        match self {
            Restriction::Plane | Restriction::HalfTop | Restriction::Quarter => 0.0,
            Restriction::HalfBottom => PI,
            Restriction::HalfLeft => PI / 2.0,
        }
    }
}

struct Crossing {
    angle: f64,
    color: u8,
    vertices: Vec<usize>,
}

/// Disjoint arms of the prescribed colours (`'1'` primal, `'0'` dual), in
/// counterclockwise order, from the box of radius `r` to the box of radius `big_r`
/// around `center` (sup-norm boxes in lattice coordinates), inside `restriction`.
pub fn arm_event(
    lat: &IsoradialLattice,
    cfg: &Configuration,
    sigma: &str,
    center: [f64; 2],
    r: f64,
    big_r: f64,
    restriction: Restriction,
) -> Result<bool, LoopError> {
    ArmDetector::new(lat).event(cfg, sigma, center, r, big_r, restriction)
}

/// Precomputed dual lattice and graphs for repeated arm queries on one lattice.
pub struct ArmDetector {
    lat: IsoradialLattice,
    dual: IsoradialLattice,
    graphs: [WeightedGraph; 2],
}

impl ArmDetector {
    pub fn new(lat: &IsoradialLattice) -> Self {
        let dual = lat.dual();
        let graphs = [plain_graph(&dual), plain_graph(lat)];
        ArmDetector {
            lat: lat.clone(),
            dual,
            graphs,
        }
    }

    pub fn event(
        &self,
        cfg: &Configuration,
        sigma: &str,
        center: [f64; 2],
        r: f64,
        big_r: f64,
        restriction: Restriction,
    ) -> Result<bool, LoopError> {
        let colors = parse_arms(sigma)?;
        if !(r < big_r) {
            return Err(LoopError::BadRadii(r, big_r));
        }
        let (lat, dual) = (&self.lat, &self.dual);
        let mut crossings = Vec::new();
        let dual_cfg = dual_configuration(cfg);
        for (color, l, c) in [(1u8, lat, cfg), (0u8, dual, &dual_cfg)] {
            crossings.extend(crossing_clusters(
                l,
                c,
                color,
                center,
                r,
                big_r,
                restriction,
            ));
        }
        crossings.sort_by(|a, b| a.angle.total_cmp(&b.angle));
        let graphs = &self.graphs;
        let lats = [dual, lat];
        let cfgs = [&dual_cfg, cfg];
        let need = colors.len();
        let caps: Vec<usize> = crossings
            .iter()
            .map(|x| {
                let k = x.color as usize;
                disjoint_arms(
                    lats[k],
                    &graphs[k],
                    cfgs[k],
                    &x.vertices,
                    center,
                    r,
                    big_r,
                    need,
                )
            })
            .collect();
        let matches = |order: &[usize], sig: &[u8]| -> bool {
            let mut idx = 0;
            for &k in order {
                let mut used = 0;
                while idx < sig.len() && sig[idx] == crossings[k].color && used < caps[k] {
                    idx += 1;
                    used += 1;
                }
            }
            idx == sig.len()
        };
        let n = crossings.len();
        if restriction == Restriction::Plane {
            for s in 0..n.max(1) {
                let order: Vec<usize> = (0..n).map(|k| (k + s) % n).collect();
                for rot in 0..colors.len() {
                    let sig: Vec<u8> = colors[rot..]
                        .iter()
                        .chain(&colors[..rot])
                        .copied()
                        .collect();
                    if matches(&order, &sig) {
                        return Ok(true);
                    }
                }
            }
            Ok(false)
        } else {
            let order: Vec<usize> = (0..n).collect();
            Ok(matches(&order, &colors))
        }
    }
}

fn parse_arms(sigma: &str) -> Result<Vec<u8>, LoopError> {
    let colors: Vec<u8> = sigma
        .chars()
        .map(|ch| match ch {
            '0' => Ok(0),
            '1' => Ok(1),
            _ => Err(LoopError::BadArmSymbol(ch)),
        })
        .collect::<Result<_, _>>()?;
    if colors.is_empty() {
        return Err(LoopError::EmptyArmType);
    }
    Ok(colors)
}

fn sup_dist(p: [f64; 2], c: [f64; 2]) -> f64 {
    (p[0] - c[0]).abs().max((p[1] - c[1]).abs())
}

fn annulus_roles(
    lat: &IsoradialLattice,
    center: [f64; 2],
    r: f64,
    big_r: f64,
    restriction: Restriction,
) -> Vec<(bool, bool, bool)> {
    let h = max_edge_length(lat);
    lat.vertices()
        .iter()
        .map(|v| {
            let d = sup_dist(v.pos, center);
            let rel = [v.pos[0] - center[0], v.pos[1] - center[1]];
            let inside = d <= big_r && d >= r && restriction.admits(rel);
            (inside, inside && d < r + h, inside && d > big_r - h)
        })
        .collect()
}

fn crossing_clusters(
    lat: &IsoradialLattice,
    cfg: &Configuration,
    color: u8,
    center: [f64; 2],
    r: f64,
    big_r: f64,
    restriction: Restriction,
) -> Vec<Crossing> {
    let roles = annulus_roles(lat, center, r, big_r, restriction);
    let mut d = rcm::Dsu::new(lat.num_vertices());
    for (e, ed) in lat.edges().iter().enumerate() {
        let [a, b] = ed.ends;
        if cfg.open[e] && roles[a].0 && roles[b].0 {
            d.union(a, b);
        }
    }
    let mut by_root: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for v in 0..lat.num_vertices() {
        if roles[v].0 {
            by_root.entry(d.find(v)).or_default().push(v);
        }
    }
    let start = restriction.start();
    by_root
        .into_values()
        .filter(|vs| vs.iter().any(|&v| roles[v].1) && vs.iter().any(|&v| roles[v].2))
        .map(|vs| {
            let angle = vs
                .iter()
                .filter(|&&v| roles[v].1)
                .map(|&v| {
                    let p = lat.vertex(v).pos;
                    let a =
                        ((p[1] - center[1]).atan2(p[0] - center[0]) - start).rem_euclid(2.0 * PI);
                    if a > 2.0 * PI - 1e-9 {
                        0.0
                    } else {
                        a
                    }
                })
                .fold(f64::INFINITY, f64::min);
            Crossing {
                angle,
                color,
                vertices: vs,
            }
        })
        .collect()
}

/// Vertex-disjoint open paths from the inner to the outer box inside one cluster, up to `cap`.
#[allow(clippy::too_many_arguments)]
fn disjoint_arms(
    lat: &IsoradialLattice,
    g: &WeightedGraph,
    cfg: &Configuration,
    cluster: &[usize],
    center: [f64; 2],
    r: f64,
    big_r: f64,
    cap: usize,
) -> usize {
    let h = max_edge_length(lat);
    let mut local = std::collections::HashMap::new();
    for (i, &v) in cluster.iter().enumerate() {
        local.insert(v, i);
    }
    let k = cluster.len();
    // nodes: 2i (in), 2i+1 (out), source 2k, sink 2k+1
    let (src, snk) = (2 * k, 2 * k + 1);
    let mut to = Vec::new();
    let mut capv = Vec::new();
    let mut head: Vec<Vec<usize>> = vec![Vec::new(); 2 * k + 2];
    let arc = |a: usize,
               b: usize,
               c: i32,
               to: &mut Vec<usize>,
               capv: &mut Vec<i32>,
               head: &mut Vec<Vec<usize>>| {
        head[a].push(to.len());
        to.push(b);
        capv.push(c);
        head[b].push(to.len());
        to.push(a);
        capv.push(0);
    };
    for (i, &v) in cluster.iter().enumerate() {
        arc(2 * i, 2 * i + 1, 1, &mut to, &mut capv, &mut head);
        let d = sup_dist(lat.vertex(v).pos, center);
        if d < r + h {
            arc(src, 2 * i, 1, &mut to, &mut capv, &mut head);
        }
        if d > big_r - h {
            arc(2 * i + 1, snk, 1, &mut to, &mut capv, &mut head);
        }
        for &(y, e) in g.neighbors(v) {
            if cfg.open[e] {
                if let Some(&j) = local.get(&y) {
                    arc(2 * i + 1, 2 * j, 1, &mut to, &mut capv, &mut head);
                }
            }
        }
    }
    let mut flow = 0;
    while flow < cap {
        let mut prev = vec![usize::MAX; 2 * k + 2];
        let mut queue = VecDeque::from([src]);
        let mut reached = false;
        while let Some(x) = queue.pop_front() {
            if x == snk {
                reached = true;
                break;
            }
            for &a in &head[x] {
                let y = to[a];
                if capv[a] > 0 && prev[y] == usize::MAX && y != src {
                    prev[y] = a;
                    queue.push_back(y);
                }
            }
        }
        if !reached {
            break;
        }
        let mut y = snk;
        while y != src {
            let a = prev[y];
            capv[a] -= 1;
            capv[a ^ 1] += 1;
            y = to[a ^ 1];
        }
        flow += 1;
    }
    flow
}

fn cluster_of(lat: &IsoradialLattice, cfg: &Configuration, v: usize) -> Vec<usize> {
    let g = plain_graph(lat);
    let mut seen = vec![false; lat.num_vertices()];
    seen[v] = true;
    let mut out = vec![v];
    let mut i = 0;
    while i < out.len() {
        let x = out[i];
        i += 1;
        for &(y, e) in g.neighbors(x) {
            if cfg.open[e] && !seen[y] {
                seen[y] = true;
                out.push(y);
            }
        }
    }
    out
}

/// Left-most among the highest vertices of the cluster of `v`.
pub fn lmax(lat: &IsoradialLattice, cfg: &Configuration, v: usize) -> usize {
    cluster_of(lat, cfg, v)
        .into_iter()
        .max_by(|&a, &b| {
            let (x, y) = (lat.vertex(a), lat.vertex(b));
            x.row.cmp(&y.row).then(y.col.cmp(&x.col))
        })
        .expect("cluster contains v")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extrema {
    pub top: f64,
    pub bottom: f64,
    pub right: f64,
}

pub fn cluster_extrema(lat: &IsoradialLattice, cfg: &Configuration, v: usize) -> Extrema {
    let mut ex = Extrema {
        top: f64::NEG_INFINITY,
        bottom: f64::INFINITY,
        right: f64::NEG_INFINITY,
    };
    for x in cluster_of(lat, cfg, v) {
        let p = lat.vertex(x).pos;
        ex.top = ex.top.max(p[1]);
        ex.bottom = ex.bottom.min(p[1]);
        ex.right = ex.right.max(p[0]);
    }
    ex
}

/// Loop count predicted by Euler's formula: `k(omega) + k(omega*) - 1`, dual wired.
pub fn euler_loop_count(lat: &IsoradialLattice, cfg: &Configuration) -> usize {
    let g = plain_graph(lat);
    let k = rcm::cluster_count(&g, cfg, &BoundaryConditions::none());
    let (_, dg, dcfg, dbc) = dual_setup(lat, cfg);
    k + rcm::cluster_count(&dg, &dcfg, &dbc) - 1
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{build_lattice, TrackAngles};

    fn small_box() -> IsoradialLattice {
        build_lattice(
            TrackAngles::constant(PI / 2.0, 3).unwrap(),
            2,
            3,
            Topology::Box,
        )
        .unwrap()
    }

    #[test]
    fn dual_configuration_basics() {
        let c = Configuration::from_bits(0b1011, 4);
        assert_eq!(dual_configuration(&dual_configuration(&c)), c);
        assert_eq!(
            dual_configuration(&Configuration::full(3)),
            Configuration::empty(3)
        );
        let mut one = Configuration::empty(12);
        one.open[4] = true;
        assert_eq!(dual_configuration(&one).num_open(), 11);
    }

    #[test]
    fn empty_and_full_loops() {
        let lat = small_box();
        let empty = trace_loops(&lat, &Configuration::empty(12)).unwrap();
        assert_eq!(empty.f1.len(), lat.num_vertices());
        let full = trace_loops(&lat, &Configuration::full(12)).unwrap();
        assert_eq!(full.f1.len(), 1);
        assert!(full.f1[0].boundary);
    }

    #[test]
    fn euler_relation_and_edge_partition() {
        let lat = small_box();
        let medial = lat.medial_graph().edges.len();
        for bits in 0..1u64 << 12 {
            let cfg = Configuration::from_bits(bits, 12);
            let fam = trace_loops(&lat, &cfg).unwrap();
            assert_eq!(fam.len(), euler_loop_count(&lat, &cfg), "bits {bits:b}");
            let covered: usize = fam.f0.iter().chain(&fam.f1).map(|l| l.medial_edges).sum();
            assert_eq!(covered, medial);
            assert!(fam.f0.iter().chain(&fam.f1).all(|l| l.area() > 0.0));
        }
    }

    #[test]
    fn tracing_rejects_periodic() {
        let lat = build_lattice(
            TrackAngles::constant(1.0, 2).unwrap(),
            2,
            2,
            Topology::Torus,
        )
        .unwrap();
        assert_eq!(
            trace_loops(&lat, &Configuration::empty(8)).unwrap_err(),
            LoopError::NotSimplyConnected
        );
    }

    fn square_box(w: usize, h: usize) -> IsoradialLattice {
        build_lattice(
            TrackAngles::constant(PI / 2.0, h).unwrap(),
            w,
            h,
            Topology::Box,
        )
        .unwrap()
    }

    #[test]
    fn crossing_duality_by_enumeration() {
        let lat = square_box(2, 3);
        let quad = Quad::rectangle(0.0, 0.0, lat.cols() as f64, lat.height() as f64).unwrap();
        for bits in 0..1u64 << 12 {
            let cfg = Configuration::from_bits(bits, 12);
            assert!(
                crossing(&lat, &cfg, &quad) ^ dual_crossing(&lat, &cfg, &quad),
                "bits {bits:b}"
            );
        }
    }

    #[test]
    fn crossing_straight_row() {
        let lat = square_box(3, 4);
        let quad = Quad::rectangle(0.0, 0.0, lat.cols() as f64, lat.height() as f64).unwrap();
        assert!(crossing(&lat, &Configuration::full(lat.num_edges()), &quad));
        assert!(!crossing(
            &lat,
            &Configuration::empty(lat.num_edges()),
            &quad
        ));
        // zig-zag between rows 1 and 2 spans the width
        let mut cfg = Configuration::empty(lat.num_edges());
        for c in 0..lat.cols() {
            cfg.open[lat.edge_id(1, c)] = true;
        }
        assert!(crossing(&lat, &cfg, &quad));
        cfg.open[lat.edge_id(1, 2)] = false;
        assert!(!crossing(&lat, &cfg, &quad));
    }

    #[test]
    fn arms_full_and_empty() {
        let lat = square_box(8, 16);
        let m = lat.num_edges();
        let c = [8.0, 8.0];
        let full = Configuration::full(m);
        let empty = Configuration::empty(m);
        assert!(arm_event(&lat, &full, "1", c, 1.0, 6.0, Restriction::Plane).unwrap());
        assert!(!arm_event(&lat, &full, "0", c, 1.0, 6.0, Restriction::Plane).unwrap());
        assert!(arm_event(&lat, &empty, "0", c, 1.0, 6.0, Restriction::Plane).unwrap());
        assert!(!arm_event(&lat, &empty, "1", c, 1.0, 6.0, Restriction::Plane).unwrap());
        assert!(arm_event(&lat, &full, "11", c, 1.0, 6.0, Restriction::Plane).unwrap());
        assert_eq!(
            arm_event(&lat, &full, "x", c, 1.0, 6.0, Restriction::Plane).unwrap_err(),
            LoopError::BadArmSymbol('x')
        );
    }

    #[test]
    fn three_arm_half_plane_construction() {
        // vertical primal arm down from the centre, everything else closed:
        // dual arms on both sides give 0-1-0 in the lower half-plane
        let lat = square_box(8, 16);
        let c = [8.0, 8.0];
        let centre = lat.vertex_at(8, 8).unwrap();
        let mut cfg = Configuration::empty(lat.num_edges());
        let mut v = centre;
        for j in (0..8).rev() {
            // alternate down-left and down-right to stay on the vertical line
            let x = lat.vertex(v);
            let target_col = if j % 2 == 0 { x.col + 1 } else { x.col - 1 };
            let e = lat
                .edges()
                .iter()
                .position(|e| {
                    e.ends == [lat.vertex_at(j as isize, target_col as isize).unwrap(), v]
                })
                .unwrap();
            cfg.open[e] = true;
            v = lat.vertex_at(j as isize, target_col as isize).unwrap();
        }
        assert!(arm_event(&lat, &cfg, "010", c, 1.0, 6.0, Restriction::HalfBottom).unwrap());
        assert!(!arm_event(&lat, &cfg, "101", c, 1.0, 6.0, Restriction::HalfBottom).unwrap());
        let e = lat
            .edges()
            .iter()
            .position(|e| e.ends[1] == centre)
            .unwrap();
        let mut cut = cfg.clone();
        for (k, o) in cfg.open.iter().enumerate() {
            if *o && k != e && lat.edge(k).track == 4 {
                cut.open[k] = false;
            }
        }
        assert!(!arm_event(&lat, &cut, "010", c, 1.0, 6.0, Restriction::HalfBottom).unwrap());
    }

    #[test]
    fn arm_monotonicity_spot_checks() {
        let lat = square_box(6, 12);
        let c = [6.0, 6.0];
        let g = WeightedGraph::from_lattice(&lat, &rcm::ModelParams::new(1.0).unwrap());
        for s in 0..30 {
            let cfg = rcm::sample_mcmc(&g, &BoundaryConditions::none(), 1.0, 1, 0, s);
            let a1 = arm_event(&lat, &cfg, "1", c, 1.0, 5.0, Restriction::Plane).unwrap();
            let a0 = arm_event(&lat, &cfg, "0", c, 1.0, 5.0, Restriction::Plane).unwrap();
            let mut more = cfg.clone();
            for e in (0..more.len()).step_by(3) {
                more.open[e] = true;
            }
            if a1 {
                assert!(arm_event(&lat, &more, "1", c, 1.0, 5.0, Restriction::Plane).unwrap());
            }
            if !a0 {
                assert!(!arm_event(&lat, &more, "0", c, 1.0, 5.0, Restriction::Plane).unwrap());
            }
        }
    }

    #[test]
    fn lmax_and_extrema() {
        let lat = square_box(4, 4);
        let v = lat.vertex_at(2, 2).unwrap();
        let empty = Configuration::empty(lat.num_edges());
        assert_eq!(lmax(&lat, &empty, v), v);
        // horizontal zig-zag segment through track 2: left end on row 3 is highest-left
        let mut cfg = empty.clone();
        for c in 2..6 {
            cfg.open[lat.edge_id(2, c)] = true;
        }
        let top_left = (0..lat.num_vertices())
            .filter(|&u| lat.vertex(u).row == 3 && (2..=6).contains(&lat.vertex(u).col))
            .min_by_key(|&u| lat.vertex(u).col)
            .unwrap();
        assert_eq!(lmax(&lat, &cfg, v), top_left);
        let ex = cluster_extrema(&lat, &cfg, v);
        assert_eq!(ex.top, 3.0);
        assert_eq!(ex.bottom, 2.0);
        assert_eq!(ex.right, 6.0);
    }
}
