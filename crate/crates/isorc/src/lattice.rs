//! Finite regions of rectangular isoradial lattices.
//!
//! Diamond points are indexed by `(row, col)`. Row `j` sits at height
//! `sum_{i<j} sin(alpha_i)` and is sheared by `sum_{i<j} cos(alpha_i)`, so every
//! rhombus side has unit length. A point is primal when `(row + col) % 2 == parity`;
//! flipping the parity gives the dual lattice on the same diamond graph.
//!
//! Rhombus `(j, c)` of track `j` has corners `(j,c) (j,c+1) (j+1,c) (j+1,c+1)` and
//! carries exactly one primal edge, its primal diagonal. Edge ids are `j * cols + c`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum LatticeError {
    #[error("track angle {0} is outside (0, pi)")]
    AngleOutOfRange(f64),
    #[error("width must be at least 2, got {0}")]
    WidthTooSmall(usize),
    #[error("height must be at least 1")]
    NoTracks,
    #[error("torus needs an even width, got {0}")]
    OddTorusWidth(usize),
    #[error("torus needs an even number of tracks, got {0}")]
    OddTorusHeight(usize),
    #[error("periodic direction needs an even number of rhombus columns, got {0}")]
    OddPeriod(usize),
    #[error("angle list has {got} entries, expected {expected}")]
    AngleCount { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Topology {
    Box,
    CylinderHorizontal,
    Torus,
}

impl Topology {
    pub fn periodic_x(self) -> bool {
        !matches!(self, Topology::Box)
    }
    pub fn periodic_y(self) -> bool {
        matches!(self, Topology::Torus)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackAngles(Vec<f64>);

impl TrackAngles {
    pub fn new(angles: Vec<f64>) -> Result<Self, LatticeError> {
        if let Some(&a) = angles.iter().find(|&&a| !(a > 0.0 && a < PI)) {
            return Err(LatticeError::AngleOutOfRange(a));
        }
        Ok(TrackAngles(angles))
    }

    pub fn constant(alpha: f64, n: usize) -> Result<Self, LatticeError> {
        Self::new(vec![alpha; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Vertex {
    pub row: usize,
    pub col: usize,
    pub pos: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    /// Lower endpoint first (row `track`), then the upper one (row `track + 1`).
    pub ends: [usize; 2],
    pub theta: f64,
    pub track: usize,
    pub col: usize,
    /// Diagonal runs from bottom-left to top-right.
    pub rising: bool,
}

/// Serializable description; `width` counts primal vertices per row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeSpec {
    pub angles: Vec<f64>,
    pub width: usize,
    pub height: usize,
    pub topology: Topology,
    #[serde(default)]
    pub parity: u8,
}

#[derive(Debug, Clone)]
pub struct IsoradialLattice {
    angles: TrackAngles,
    width: usize,
    topology: Topology,
    parity: u8,
    cols: usize,
    rows: usize,
    grid: Vec<usize>,
    vertices: Vec<Vertex>,
    edges: Vec<Edge>,
    boundary: Vec<usize>,
    shear: Vec<f64>,
    heights: Vec<f64>,
}

const NONE: usize = usize::MAX;

pub fn build_lattice(
    angles: TrackAngles,
    width: usize,
    height: usize,
    topology: Topology,
) -> Result<IsoradialLattice, LatticeError> {
    if width < 2 {
        return Err(LatticeError::WidthTooSmall(width));
    }
    if height == 0 {
        return Err(LatticeError::NoTracks);
    }
    if angles.len() != height {
        return Err(LatticeError::AngleCount {
            expected: height,
            got: angles.len(),
        });
    }
    if topology == Topology::Torus && width % 2 == 1 {
        return Err(LatticeError::OddTorusWidth(width));
    }
    IsoradialLattice::from_rhombi(angles, 2 * width, topology, 0)
}

impl IsoradialLattice {
    /// Lower-level constructor: `cols` rhombi per track, primal parity `parity`.
    pub fn from_rhombi(
        angles: TrackAngles,
        cols: usize,
        topology: Topology,
        parity: u8,
    ) -> Result<Self, LatticeError> {
        let h = angles.len();
        if h == 0 {
            return Err(LatticeError::NoTracks);
        }
        if cols == 0 {
            return Err(LatticeError::WidthTooSmall(0));
        }
        if topology.periodic_x() && cols % 2 == 1 {
            return Err(LatticeError::OddPeriod(cols));
        }
        if topology.periodic_y() && h % 2 == 1 {
            return Err(LatticeError::OddTorusHeight(h));
        }
        let parity = parity & 1;
        let rows = if topology.periodic_y() { h } else { h + 1 };
        let point_cols = if topology.periodic_x() {
            cols
        } else {
            cols + 1
        };

        let mut shear = vec![0.0; h + 1];
        let mut heights = vec![0.0; h + 1];
        for (j, &a) in angles.as_slice().iter().enumerate() {
            shear[j + 1] = shear[j] + a.cos();
            heights[j + 1] = heights[j] + a.sin();
        }

        let mut grid = vec![NONE; rows * point_cols];
        let mut vertices = Vec::new();
        for j in 0..rows {
            for c in 0..point_cols {
                if (j + c) % 2 == parity as usize {
                    grid[j * point_cols + c] = vertices.len();
                    vertices.push(Vertex {
                        row: j,
                        col: c,
                        pos: [c as f64 + shear[j], heights[j]],
                    });
                }
            }
        }

        let at = |j: usize, c: usize| grid[(j % rows) * point_cols + (c % point_cols)];
        let mut edges = Vec::with_capacity(h * cols);
        for (j, &a) in angles.as_slice().iter().enumerate() {
            for c in 0..cols {
                let rising = (c + j) % 2 == parity as usize;
                let (u, v, theta) = if rising {
                    (at(j, c), at(j + 1, c + 1), PI - a)
                } else {
                    (at(j, c + 1), at(j + 1, c), a)
                };
                debug_assert!(u != NONE && v != NONE);
                edges.push(Edge {
                    ends: [u, v],
                    theta,
                    track: j,
                    col: c,
                    rising,
                });
            }
        }

        let boundary = vertices
            .iter()
            .enumerate()
            .filter(|(_, v)| match topology {
                Topology::Box => v.row == 0 || v.row == h || v.col == 0 || v.col == cols,
                Topology::CylinderHorizontal => v.row == 0 || v.row == h,
                Topology::Torus => false,
            })
            .map(|(i, _)| i)
            .collect();

        Ok(IsoradialLattice {
            width: cols / 2,
            angles,
            topology,
            parity,
            cols,
            rows,
            grid,
            vertices,
            edges,
            boundary,
            shear,
            heights,
        })
    }

    pub fn from_spec(spec: &LatticeSpec) -> Result<Self, LatticeError> {
        let angles = TrackAngles::new(spec.angles.clone())?;
        let lat = build_lattice(angles, spec.width, spec.height, spec.topology)?;
        if spec.parity & 1 == 1 {
            Ok(lat.dual())
        } else {
            Ok(lat)
        }
    }

    pub fn spec(&self) -> LatticeSpec {
        LatticeSpec {
            angles: self.angles.as_slice().to_vec(),
            width: self.width,
            height: self.height(),
            topology: self.topology,
            parity: self.parity,
        }
    }

    pub fn angles(&self) -> &[f64] {
        self.angles.as_slice()
    }
    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.angles.len()
    }
    pub fn topology(&self) -> Topology {
        self.topology
    }
    pub fn parity(&self) -> u8 {
        self.parity
    }
    /// Rhombi per track.
    pub fn cols(&self) -> usize {
        self.cols
    }
    /// Rows of diamond points (`height + 1` unless periodic vertically).
    pub fn rows(&self) -> usize {
        self.rows
    }
    pub fn point_cols(&self) -> usize {
        if self.topology.periodic_x() {
            self.cols
        } else {
            self.cols + 1
        }
    }
    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }
    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }
    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }
    pub fn vertex(&self, v: usize) -> &Vertex {
        &self.vertices[v]
    }
    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }
    pub fn edge(&self, e: usize) -> &Edge {
        &self.edges[e]
    }
    pub fn boundary(&self) -> &[usize] {
        &self.boundary
    }

    pub fn edge_id(&self, track: usize, col: usize) -> usize {
        track * self.cols + col
    }

    /// Wraps indices in periodic directions; returns `None` outside the region
    /// or when the point has the other parity.
    pub fn vertex_at(&self, row: isize, col: isize) -> Option<usize> {
        let pc = self.point_cols() as isize;
        let r = if self.topology.periodic_y() {
            row.rem_euclid(self.rows as isize)
        } else if (0..self.rows as isize).contains(&row) {
            row
        } else {
            return None;
        };
        let c = if self.topology.periodic_x() {
            col.rem_euclid(pc)
        } else if (0..pc).contains(&col) {
            col
        } else {
            return None;
        };
        let id = self.grid[r as usize * pc as usize + c as usize];
        (id != NONE).then_some(id)
    }

    /// Planar position of any diamond point, primal or dual, unwrapped.
    pub fn point_pos(&self, row: usize, col: usize) -> [f64; 2] {
        let h = self.height();
        let (r, lift) = (row % (h + 1), row / (h + 1));
        debug_assert_eq!(lift, 0);
        [col as f64 + self.shear[r], self.heights[r]]
    }

    /// Vertex on the top left of `v`, joined to it by an edge of angle `alpha_row`.
    pub fn up_left(&self, v: usize) -> Option<usize> {
        let x = self.vertices[v];
        if !self.topology.periodic_y() && x.row + 1 >= self.rows {
            return None;
        }
        self.vertex_at(x.row as isize + 1, x.col as isize - 1)
    }

    pub fn up_right(&self, v: usize) -> Option<usize> {
        let x = self.vertices[v];
        if !self.topology.periodic_y() && x.row + 1 >= self.rows {
            return None;
        }
        self.vertex_at(x.row as isize + 1, x.col as isize + 1)
    }

    /// Bottom (`t_j^-`) and top (`t_j^+`) vertex rows of track `j`.
    pub fn track_rows(&self, j: usize) -> (Vec<usize>, Vec<usize>) {
        let row = |r: usize| -> Vec<usize> {
            let r = r % self.rows;
            self.vertices
                .iter()
                .enumerate()
                .filter(|(_, v)| v.row == r)
                .map(|(i, _)| i)
                .collect()
        };
        (row(j), row(j + 1))
    }

    /// Same diamond graph with the roles of primal and dual swapped.
    pub fn dual(&self) -> IsoradialLattice {
        IsoradialLattice::from_rhombi(
            self.angles.clone(),
            self.cols,
            self.topology,
            1 - self.parity,
        )
        .expect("dual of a valid lattice is valid")
    }

    /// Same region and parity with a new angle sequence.
    pub fn with_angles(&self, angles: TrackAngles) -> Result<IsoradialLattice, LatticeError> {
        if angles.len() != self.height() {
            return Err(LatticeError::AngleCount {
                expected: self.height(),
                got: angles.len(),
            });
        }
        IsoradialLattice::from_rhombi(angles, self.cols, self.topology, self.parity)
    }

    pub fn swap_tracks(&self, i: usize) -> IsoradialLattice {
        let mut a = self.angles.as_slice().to_vec();
        let h = a.len();
        a.swap((i + h - 1) % h, i % h);
        self.with_angles(TrackAngles(a))
            .expect("swapping keeps angles valid")
    }

    /// Centre of rhombus `e`, which is also the midpoint of its primal edge.
    pub fn rhombus_center(&self, e: usize) -> [f64; 2] {
        let ed = &self.edges[e];
        let a = self.point_pos(ed.track, ed.col);
        let b = self.point_pos(ed.track + 1, ed.col + 1);
        [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0]
    }

    pub fn medial_graph(&self) -> MedialGraph {
        let h = self.height();
        let m = self.cols;
        let mut edges = Vec::new();
        for j in 0..h {
            for c in 0..m {
                let e = self.edge_id(j, c);
                if c + 1 < m {
                    edges.push([e, self.edge_id(j, c + 1)]);
                } else if self.topology.periodic_x() && m > 1 {
                    edges.push([e, self.edge_id(j, 0)]);
                }
                if j + 1 < h {
                    edges.push([e, self.edge_id(j + 1, c)]);
                } else if self.topology.periodic_y() && h > 1 {
                    edges.push([e, self.edge_id(0, c)]);
                }
            }
        }
        let mut faces = Vec::new();
        for r in 0..self.rows {
            for pc in 0..self.point_cols() {
                let mut rhombi = Vec::new();
                for (dj, dc) in [(-1isize, -1isize), (-1, 0), (0, -1), (0, 0)] {
                    let (j, c) = (r as isize + dj, pc as isize + dc);
                    let j = if self.topology.periodic_y() {
                        j.rem_euclid(h as isize)
                    } else if (0..h as isize).contains(&j) {
                        j
                    } else {
                        continue;
                    };
                    let c = if self.topology.periodic_x() {
                        c.rem_euclid(m as isize)
                    } else if (0..m as isize).contains(&c) {
                        c
                    } else {
                        continue;
                    };
                    rhombi.push(self.edge_id(j as usize, c as usize));
                }
                faces.push(MedialFace {
                    row: r,
                    col: pc,
                    primal: (r + pc) % 2 == self.parity as usize,
                    rhombi,
                });
            }
        }
        let positions = (0..self.edges.len())
            .map(|e| self.rhombus_center(e))
            .collect();
        MedialGraph {
            positions,
            edges,
            faces,
        }
    }
}

/// One medial vertex per rhombus; medial edges cross shared rhombus sides.
#[derive(Debug, Clone)]
pub struct MedialGraph {
    pub positions: Vec<[f64; 2]>,
    pub edges: Vec<[usize; 2]>,
    pub faces: Vec<MedialFace>,
}

/// The medial face around one diamond point.
#[derive(Debug, Clone)]
pub struct MedialFace {
    pub row: usize,
    pub col: usize,
    pub primal: bool,
    pub rhombi: Vec<usize>,
}

impl MedialGraph {
    pub fn degrees(&self) -> Vec<usize> {
        let mut d = vec![0; self.positions.len()];
        for &[a, b] in &self.edges {
            d[a] += 1;
            d[b] += 1;
        }
        d
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum QuadError {
    #[error("quad boundary needs at least four points")]
    TooFewPoints,
    #[error("quad corners must be distinct boundary indices in cyclic order")]
    BadCorners,
    #[error("quad boundary intersects itself")]
    SelfIntersecting,
    #[error("quad has zero area")]
    Degenerate,
}

/// Simple polygon with four marked boundary points `a, b, c, d` in counterclockwise order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quad {
    pub boundary: Vec<[f64; 2]>,
    pub corners: [usize; 4],
}

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

fn segments_cross(p1: [f64; 2], p2: [f64; 2], p3: [f64; 2], p4: [f64; 2]) -> bool {
    let d1 = cross(p3, p4, p1);
    let d2 = cross(p3, p4, p2);
    let d3 = cross(p1, p2, p3);
    let d4 = cross(p1, p2, p4);
    ((d1 > 0.0) != (d2 > 0.0))
        && ((d3 > 0.0) != (d4 > 0.0))
        && d1 != 0.0
        && d2 != 0.0
        && d3 != 0.0
        && d4 != 0.0
}

pub fn signed_area(poly: &[[f64; 2]]) -> f64 {
    let n = poly.len();
    (0..n)
        .map(|i| {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            a[0] * b[1] - b[0] * a[1]
        })
        .sum::<f64>()
        / 2.0
}

impl Quad {
    pub fn new(boundary: Vec<[f64; 2]>, corners: [usize; 4]) -> Result<Self, QuadError> {
        let n = boundary.len();
        if n < 4 {
            return Err(QuadError::TooFewPoints);
        }
        if corners.iter().any(|&c| c >= n) || !corners.windows(2).all(|w| w[0] < w[1]) {
            return Err(QuadError::BadCorners);
        }
        for i in 0..n {
            for j in i + 2..n {
                if i == 0 && j == n - 1 {
                    continue;
                }
                let (a, b) = (boundary[i], boundary[(i + 1) % n]);
                let (c, d) = (boundary[j], boundary[(j + 1) % n]);
                if segments_cross(a, b, c, d) {
                    return Err(QuadError::SelfIntersecting);
                }
            }
        }
        if signed_area(&boundary).abs() < 1e-12 {
            return Err(QuadError::Degenerate);
        }
        Ok(Quad { boundary, corners })
    }

    /// Axis-parallel rectangle whose arcs `(ab)` and `(cd)` are the left and right sides.
    pub fn rectangle(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self, QuadError> {
        Quad::new(vec![[x0, y1], [x0, y0], [x1, y0], [x1, y1]], [0, 1, 2, 3])
    }

    /// Same polygon with the marked points shifted by one, turning left-right into top-bottom.
    pub fn rotated(&self) -> Quad {
        let n = self.boundary.len();
        let [a, b, c, d] = self.corners;
        let boundary: Vec<[f64; 2]> = (0..n).map(|i| self.boundary[(i + b) % n]).collect();
        let re = |x: usize| (x + n - b) % n;
        Quad {
            boundary,
            corners: [re(b), re(c), re(d), re(a)],
        }
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        let poly = &self.boundary;
        let n = poly.len();
        let mut inside = false;
        for i in 0..n {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            if (a[1] > p[1]) != (b[1] > p[1]) {
                let x = a[0] + (p[1] - a[1]) / (b[1] - a[1]) * (b[0] - a[0]);
                if p[0] < x {
                    inside = !inside;
                }
            }
        }
        inside
    }

    /// Boundary polyline from corner `from` to corner `to` (indices into `corners`).
    pub fn arc(&self, from: usize, to: usize) -> Vec<[f64; 2]> {
        let n = self.boundary.len();
        let (s, e) = (self.corners[from], self.corners[to]);
        let mut out = vec![self.boundary[s]];
        let mut k = s;
        while k != e {
            k = (k + 1) % n;
            out.push(self.boundary[k]);
        }
        out
    }

    pub fn distance_to_boundary(&self, p: [f64; 2]) -> f64 {
        let n = self.boundary.len();
        (0..n)
            .map(|i| point_segment_distance(p, self.boundary[i], self.boundary[(i + 1) % n]))
            .fold(f64::INFINITY, f64::min)
    }
}

pub fn point_segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let l2 = dx * dx + dy * dy;
    let t = if l2 == 0.0 {
        0.0
    } else {
        (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / l2).clamp(0.0, 1.0)
    };
    let (x, y) = (a[0] + t * dx - p[0], a[1] + t * dy - p[1]);
    (x * x + y * y).sqrt()
}

pub fn polyline_distance(p: [f64; 2], line: &[[f64; 2]]) -> f64 {
    if line.len() == 1 {
        return point_segment_distance(p, line[0], line[0]);
    }
    line.windows(2)
        .map(|w| point_segment_distance(p, w[0], w[1]))
        .fold(f64::INFINITY, f64::min)
}
