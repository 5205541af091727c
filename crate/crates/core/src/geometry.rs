//! Ambient metric spaces: the finite-dimensional sup-norm model of `l^inf`
//! and intrinsic (geodesic) metric graphs.
//!
//! Points are compared by the exact bit pattern of their coordinates, so a
//! point computed once and copied around always keys the same map entry.
//! Everything here is immutable after construction.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use petgraph::algo::dijkstra;
use petgraph::graph::{NodeIndex, UnGraph};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative margin a cut radius must keep from every vertex norm.
pub const CUT_MARGIN: f64 = 1e-9;

#[inline]
fn clean(x: f64) -> f64 {
    // folds -0.0 into +0.0 so equal values share a bit pattern
    x + 0.0
}

fn cmp_f64(a: f64, b: f64) -> Ordering {
    a.total_cmp(&b)
}

/// Coordinates of a point in the sup-norm model.
#[derive(Clone)]
pub struct Coords(Arc<[f64]>);

impl Coords {
    pub fn new(values: impl Into<Vec<f64>>) -> Result<Self> {
        let values: Vec<f64> = values.into();
        if values.iter().any(|x| !x.is_finite()) {
            return Err(Error::Invalid("non-finite coordinate".into()));
        }
        Ok(Coords(values.into_iter().map(clean).collect()))
    }

    pub fn origin(dim: usize) -> Self {
        Coords(vec![0.0; dim].into())
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn sup_norm(&self) -> f64 {
        self.0.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn sup_dist(&self, other: &Coords) -> f64 {
        self.0
            .iter()
            .zip(other.0.iter())
            .fold(0.0, |m, (x, y)| m.max((x - y).abs()))
    }

    /// `self + t (other - self)`; coordinates that do not move are copied exactly.
    pub fn lerp(&self, other: &Coords, t: f64) -> Coords {
        Coords(
            self.0
                .iter()
                .zip(other.0.iter())
                .map(|(&a, &b)| if a == b { a } else { clean(a + t * (b - a)) })
                .collect(),
        )
    }
}

impl PartialEq for Coords {
    fn eq(&self, other: &Self) -> bool {
        self.0.len() == other.0.len()
            && self.0.iter().zip(other.0.iter()).all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

impl Eq for Coords {}

impl Hash for Coords {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.0.len().hash(state);
        for x in self.0.iter() {
            x.to_bits().hash(state);
        }
    }
}

impl Ord for Coords {
    fn cmp(&self, other: &Self) -> Ordering {
        for (a, b) in self.0.iter().zip(other.0.iter()) {
            match cmp_f64(*a, *b) {
                Ordering::Equal => continue,
                o => return o,
            }
        }
        self.0.len().cmp(&other.0.len())
    }
}

impl PartialOrd for Coords {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Debug for Coords {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.0.iter()).finish()
    }
}

/// A position on a metric graph: a vertex, or a point strictly inside an edge.
#[derive(Clone, Copy, Debug)]
pub enum Locus {
    Vertex(usize),
    OnEdge { edge: usize, t: f64 },
}

impl Locus {
    fn key(&self) -> (usize, usize, u64) {
        match *self {
            Locus::Vertex(v) => (0, v, 0),
            Locus::OnEdge { edge, t } => (1, edge, clean(t).to_bits()),
        }
    }
}

impl PartialEq for Locus {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}

impl Eq for Locus {}

impl Hash for Locus {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.key().hash(state)
    }
}

impl Ord for Locus {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Locus::Vertex(a), Locus::Vertex(b)) => a.cmp(b),
            (Locus::Vertex(_), Locus::OnEdge { .. }) => Ordering::Less,
            (Locus::OnEdge { .. }, Locus::Vertex(_)) => Ordering::Greater,
            (Locus::OnEdge { edge: e1, t: t1 }, Locus::OnEdge { edge: e2, t: t2 }) => {
                e1.cmp(e2).then_with(|| cmp_f64(*t1, *t2))
            }
        }
    }
}

impl PartialOrd for Locus {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// A point of the ambient space, or the adjoined point at infinity.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Point {
    Coord(Coords),
    Graph(Locus),
    Infinity,
}

impl Point {
    pub fn coords(values: impl Into<Vec<f64>>) -> Result<Point> {
        Ok(Point::Coord(Coords::new(values)?))
    }

    pub fn is_infinity(&self) -> bool {
        matches!(self, Point::Infinity)
    }

    pub fn as_coords(&self) -> Option<&Coords> {
        match self {
            Point::Coord(c) => Some(c),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GraphEdge {
    pub u: usize,
    pub v: usize,
    pub w: f64,
}

/// A finite connected graph with positive edge lengths and its geodesic metric.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricGraph {
    names: Vec<String>,
    index: HashMap<String, usize>,
    edges: Vec<GraphEdge>,
    by_pair: HashMap<(usize, usize), usize>,
    base: usize,
    dist: Vec<Vec<f64>>,
}

impl MetricGraph {
    pub fn new(names: Vec<String>, edges: &[(String, String, f64)], base: &str) -> Result<Self> {
        let mut index = HashMap::with_capacity(names.len());
        for (i, n) in names.iter().enumerate() {
            if index.insert(n.clone(), i).is_some() {
                return Err(Error::Invalid(format!("duplicate vertex `{n}`")));
            }
        }
        let lookup = |n: &str| {
            index
                .get(n)
                .copied()
                .ok_or_else(|| Error::Invalid(format!("unknown vertex `{n}`")))
        };
        let mut out = Vec::with_capacity(edges.len());
        let mut by_pair = HashMap::with_capacity(edges.len());
        for (a, b, w) in edges {
            let (u, v) = (lookup(a)?, lookup(b)?);
            if !(w.is_finite() && *w > 0.0) {
                return Err(Error::Invalid(format!("edge {a}-{b} has non-positive length {w}")));
            }
            if u == v {
                return Err(Error::Invalid(format!("self loop at `{a}`")));
            }
            let key = (u.min(v), u.max(v));
            if by_pair.insert(key, out.len()).is_some() {
                return Err(Error::Invalid(format!("parallel edges between {a} and {b}")));
            }
            out.push(GraphEdge { u, v, w: *w });
        }
        let base = lookup(base)?;

        let mut g = UnGraph::<(), f64>::with_capacity(names.len(), out.len());
        let nodes: Vec<NodeIndex> = (0..names.len()).map(|_| g.add_node(())).collect();
        for e in &out {
            g.add_edge(nodes[e.u], nodes[e.v], e.w);
        }
        let mut dist = vec![vec![f64::INFINITY; names.len()]; names.len()];
        for (s, row) in dist.iter_mut().enumerate() {
            for (node, d) in dijkstra(&g, nodes[s], None, |e| *e.weight()) {
                row[node.index()] = d;
            }
        }
        if dist[base].iter().any(|d| d.is_infinite()) {
            return Err(Error::Invalid("metric graph is not connected".into()));
        }
        Ok(MetricGraph { names, index, edges: out, by_pair, base, dist })
    }

    pub fn vertex_count(&self) -> usize {
        self.names.len()
    }

    pub fn name(&self, v: usize) -> &str {
        &self.names[v]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn vertex(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn edges(&self) -> &[GraphEdge] {
        &self.edges
    }

    pub fn edge(&self, i: usize) -> GraphEdge {
        self.edges[i]
    }

    pub fn edge_between(&self, u: usize, v: usize) -> Option<usize> {
        self.by_pair.get(&(u.min(v), u.max(v))).copied()
    }

    pub fn base(&self) -> usize {
        self.base
    }

    pub fn dist(&self, u: usize, v: usize) -> f64 {
        self.dist[u][v]
    }

    /// (vertex, offset) pairs through which every path leaves the locus.
    fn exits(&self, p: &Locus) -> Vec<(usize, f64)> {
        match *p {
            Locus::Vertex(v) => vec![(v, 0.0)],
            Locus::OnEdge { edge, t } => {
                let e = self.edges[edge];
                vec![(e.u, t * e.w), (e.v, (1.0 - t) * e.w)]
            }
        }
    }

    pub fn locus_distance(&self, p: &Locus, q: &Locus) -> f64 {
        let mut best = f64::INFINITY;
        for (x, ox) in self.exits(p) {
            for (y, oy) in self.exits(q) {
                best = best.min(ox + self.dist[x][y] + oy);
            }
        }
        if let (Locus::OnEdge { edge: e1, t: t1 }, Locus::OnEdge { edge: e2, t: t2 }) = (p, q) {
            if e1 == e2 {
                best = best.min((t1 - t2).abs() * self.edges[*e1].w);
            }
        }
        best
    }

    /// Normalizes `(edge, t)` to a vertex at the edge ends.
    pub fn locus_at(&self, edge: usize, t: f64) -> Locus {
        let e = self.edges[edge];
        if t <= 0.0 {
            Locus::Vertex(e.u)
        } else if t >= 1.0 {
            Locus::Vertex(e.v)
        } else {
            Locus::OnEdge { edge, t: clean(t) }
        }
    }

    fn check_locus(&self, p: &Locus) -> Result<()> {
        match *p {
            Locus::Vertex(v) if v < self.names.len() => Ok(()),
            Locus::OnEdge { edge, t } if edge < self.edges.len() && t > 0.0 && t < 1.0 => Ok(()),
            _ => Err(Error::Invalid(format!("{p:?} is not a point of this graph"))),
        }
    }
}

/// The ambient space `(E, d)` with its base point.
#[derive(Clone, Debug, PartialEq)]
pub enum AmbientSpace {
    SupNorm { dim: usize },
    Intrinsic(MetricGraph),
}

impl AmbientSpace {
    pub fn sup_norm(dim: usize) -> Arc<AmbientSpace> {
        Arc::new(AmbientSpace::SupNorm { dim })
    }

    pub fn is_sup_norm(&self) -> bool {
        matches!(self, AmbientSpace::SupNorm { .. })
    }

    pub fn graph(&self) -> Option<&MetricGraph> {
        match self {
            AmbientSpace::Intrinsic(g) => Some(g),
            AmbientSpace::SupNorm { .. } => None,
        }
    }

    pub fn base_point(&self) -> Point {
        match self {
            AmbientSpace::SupNorm { dim } => Point::Coord(Coords::origin(*dim)),
            AmbientSpace::Intrinsic(g) => Point::Graph(Locus::Vertex(g.base)),
        }
    }

    pub fn check_point(&self, p: &Point) -> Result<()> {
        match (self, p) {
            (_, Point::Infinity) => Err(Error::AtInfinity),
            (AmbientSpace::SupNorm { dim }, Point::Coord(c)) if c.dim() == *dim => Ok(()),
            (AmbientSpace::Intrinsic(g), Point::Graph(l)) => g.check_locus(l),
            _ => Err(Error::Invalid(format!("{p:?} does not belong to this space"))),
        }
    }

    pub fn distance(&self, p: &Point, q: &Point) -> Result<f64> {
        self.check_point(p)?;
        self.check_point(q)?;
        Ok(match (self, p, q) {
            (AmbientSpace::SupNorm { .. }, Point::Coord(a), Point::Coord(b)) => a.sup_dist(b),
            (AmbientSpace::Intrinsic(g), Point::Graph(a), Point::Graph(b)) => g.locus_distance(a, b),
            _ => unreachable!("checked above"),
        })
    }

    /// Distance from the base point.
    pub fn norm(&self, p: &Point) -> Result<f64> {
        match (self, p) {
            (AmbientSpace::SupNorm { .. }, Point::Coord(c)) => {
                self.check_point(p)?;
                Ok(c.sup_norm())
            }
            _ => self.distance(&self.base_point(), p),
        }
    }
}

/// An oriented segment: a straight line in the sup-norm model, or a piece of
/// one graph edge in the intrinsic model (parameter `t` runs from `t0` to `t1`,
/// `0` at endpoint `u`, `1` at `v`).
#[derive(Clone, Debug)]
pub enum Segment {
    Line { a: Coords, b: Coords },
    Arc { edge: usize, u: usize, v: usize, w: f64, t0: f64, t1: f64 },
}

impl Segment {
    pub fn line(a: Coords, b: Coords) -> Result<Segment> {
        if a.dim() != b.dim() {
            return Err(Error::Invalid("segment endpoints have different dimensions".into()));
        }
        if a.sup_dist(&b) == 0.0 {
            return Err(Error::DegenerateSegment);
        }
        Ok(Segment::Line { a, b })
    }

    pub fn arc(graph: &MetricGraph, edge: usize, t0: f64, t1: f64) -> Result<Segment> {
        if edge >= graph.edges.len() {
            return Err(Error::Invalid(format!("no edge {edge}")));
        }
        if !(0.0..=1.0).contains(&t0) || !(0.0..=1.0).contains(&t1) {
            return Err(Error::Invalid("arc parameters must lie in [0, 1]".into()));
        }
        if t0 == t1 {
            return Err(Error::DegenerateSegment);
        }
        let e = graph.edges[edge];
        Ok(Segment::Arc { edge, u: e.u, v: e.v, w: e.w, t0: clean(t0), t1: clean(t1) })
    }

    /// The segment joining two points of `space` (for graphs, both points
    /// must lie on a common edge).
    pub fn between(space: &AmbientSpace, p: &Point, q: &Point) -> Result<Segment> {
        space.check_point(p)?;
        space.check_point(q)?;
        match (space, p, q) {
            (AmbientSpace::SupNorm { .. }, Point::Coord(a), Point::Coord(b)) => {
                Segment::line(a.clone(), b.clone())
            }
            (AmbientSpace::Intrinsic(g), Point::Graph(a), Point::Graph(b)) => {
                let (edge, t0, t1) = common_edge(g, a, b).ok_or_else(|| {
                    Error::Invalid(format!("{a:?} and {b:?} do not share an edge"))
                })?;
                Segment::arc(g, edge, t0, t1)
            }
            _ => unreachable!("checked above"),
        }
    }

    pub fn tail(&self) -> Point {
        self.point_at(0.0)
    }

    pub fn head(&self) -> Point {
        self.point_at(1.0)
    }

    pub fn reversed(&self) -> Segment {
        match self {
            Segment::Line { a, b } => Segment::Line { a: b.clone(), b: a.clone() },
            Segment::Arc { edge, u, v, w, t0, t1 } => {
                Segment::Arc { edge: *edge, u: *u, v: *v, w: *w, t0: *t1, t1: *t0 }
            }
        }
    }

    /// Length in the base metric.
    pub fn length(&self) -> f64 {
        match self {
            Segment::Line { a, b } => a.sup_dist(b),
            Segment::Arc { w, t0, t1, .. } => (t1 - t0).abs() * w,
        }
    }

    pub fn point_at(&self, s: f64) -> Point {
        match self {
            Segment::Line { a, b } => {
                if s <= 0.0 {
                    Point::Coord(a.clone())
                } else if s >= 1.0 {
                    Point::Coord(b.clone())
                } else {
                    Point::Coord(a.lerp(b, s))
                }
            }
            Segment::Arc { edge, u, v, t0, t1, .. } => {
                let t = if s <= 0.0 {
                    *t0
                } else if s >= 1.0 {
                    *t1
                } else {
                    t0 + s * (t1 - t0)
                };
                if t <= 0.0 {
                    Point::Graph(Locus::Vertex(*u))
                } else if t >= 1.0 {
                    Point::Graph(Locus::Vertex(*v))
                } else {
                    Point::Graph(Locus::OnEdge { edge: *edge, t: clean(t) })
                }
            }
        }
    }

    /// The piece of this segment between local parameters `s0 < s1`.
    pub fn sub(&self, s0: f64, s1: f64) -> Result<Segment> {
        if s0 <= 0.0 && s1 >= 1.0 {
            return Ok(self.clone());
        }
        match self {
            Segment::Line { .. } => {
                let (Point::Coord(a), Point::Coord(b)) = (self.point_at(s0), self.point_at(s1)) else {
                    unreachable!()
                };
                Segment::line(a, b)
            }
            Segment::Arc { edge, u, v, w, t0, t1 } => {
                let at = |s: f64| {
                    if s <= 0.0 {
                        *t0
                    } else if s >= 1.0 {
                        *t1
                    } else {
                        clean(t0 + s * (t1 - t0))
                    }
                };
                let (a, b) = (at(s0), at(s1));
                if a == b {
                    return Err(Error::DegenerateSegment);
                }
                Ok(Segment::Arc { edge: *edge, u: *u, v: *v, w: *w, t0: a, t1: b })
            }
        }
    }

    /// Canonical unordered key: `(min endpoint, max endpoint)` plus whether this
    /// segment runs against that order.
    pub fn key(&self) -> (SegmentKey, bool) {
        let (t, h) = (self.tail(), self.head());
        if t <= h {
            (SegmentKey(t, h), false)
        } else {
            (SegmentKey(h, t), true)
        }
    }

    /// Norm of `point_at(s)` as a piecewise linear function of `s`.
    pub fn norm_pieces(&self, space: &AmbientSpace) -> Vec<NormPiece> {
        match (self, space) {
            (Segment::Line { a, b }, _) => line_envelope(a.as_slice(), b.as_slice()),
            (Segment::Arc { u, v, w, t0, t1, .. }, AmbientSpace::Intrinsic(g)) => {
                let (du, dv) = (g.dist(g.base, *u), g.dist(g.base, *v));
                arc_norm_pieces(du, dv, *w, *t0, *t1)
            }
            (Segment::Arc { .. }, AmbientSpace::SupNorm { .. }) => {
                panic!("graph arc evaluated in a sup-norm space")
            }
        }
    }

    /// Parameters where the segment's norm equals `r`, as sorted closed
    /// intervals of the set `{s : |point_at(s)| <= r}`. No safety checks.
    pub fn inside_intervals(&self, space: &AmbientSpace, r: f64) -> Vec<(f64, f64)> {
        inside_from_pieces(&self.norm_pieces(space), r)
    }

    pub fn midpoint(&self) -> Point {
        self.point_at(0.5)
    }
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.tail() == other.tail() && self.head() == other.head()
    }
}

impl Eq for Segment {}

impl Hash for Segment {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.tail().hash(state);
        self.head().hash(state);
    }
}

/// Unordered endpoint pair identifying a segment up to orientation.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SegmentKey(pub Point, pub Point);

fn common_edge(g: &MetricGraph, a: &Locus, b: &Locus) -> Option<(usize, f64, f64)> {
    let param = |l: &Locus, edge: usize| -> Option<f64> {
        let e = g.edges[edge];
        match *l {
            Locus::Vertex(x) if x == e.u => Some(0.0),
            Locus::Vertex(x) if x == e.v => Some(1.0),
            Locus::OnEdge { edge: f, t } if f == edge => Some(t),
            _ => None,
        }
    };
    let candidates: Vec<usize> = match (a, b) {
        (Locus::OnEdge { edge, .. }, _) | (_, Locus::OnEdge { edge, .. }) => vec![*edge],
        (Locus::Vertex(x), Locus::Vertex(y)) => g.edge_between(*x, *y).into_iter().collect(),
    };
    candidates
        .into_iter()
        .find_map(|e| Some((e, param(a, e)?, param(b, e)?)))
}

/// A piece on which the norm along a segment is affine.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormPiece {
    pub s0: f64,
    pub s1: f64,
    pub n0: f64,
    pub n1: f64,
}

impl NormPiece {
    pub fn at(&self, s: f64) -> f64 {
        if self.s1 == self.s0 {
            return self.n0;
        }
        self.n0 + (s - self.s0) / (self.s1 - self.s0) * (self.n1 - self.n0)
    }
}

/// Upper envelope of the lines `+-(a_i + s (b_i - a_i))` over `s` in `[0, 1]`,
/// via the upper hull of the lines sorted by slope.
fn line_envelope(a: &[f64], b: &[f64]) -> Vec<NormPiece> {
    let mut lines: Vec<(f64, f64)> = a
        .iter()
        .zip(b)
        .flat_map(|(&x, &y)| [(y - x, x), (x - y, -x)])
        .collect();
    if lines.is_empty() {
        return vec![NormPiece { s0: 0.0, s1: 1.0, n0: 0.0, n1: 0.0 }];
    }
    // (slope, intercept), slopes ascending, highest intercept kept per slope
    lines.sort_by(|p, q| p.0.total_cmp(&q.0).then(q.1.total_cmp(&p.1)));
    lines.dedup_by(|q, p| q.0 == p.0);
    let cross = |p: (f64, f64), q: (f64, f64)| (p.1 - q.1) / (q.0 - p.0);
    let mut hull: Vec<(f64, f64)> = Vec::with_capacity(lines.len());
    for l in lines {
        while hull.len() >= 2 {
            let (p, q) = (hull[hull.len() - 2], hull[hull.len() - 1]);
            if cross(p, l) <= cross(p, q) {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(l);
    }
    let value = |(m, c): (f64, f64), s: f64| c + m * s;
    let mut pieces = Vec::new();
    let mut s = 0.0;
    for i in 0..hull.len() {
        let end = if i + 1 < hull.len() { cross(hull[i], hull[i + 1]).min(1.0) } else { 1.0 };
        if end > s {
            pieces.push(NormPiece { s0: s, s1: end, n0: value(hull[i], s), n1: value(hull[i], end) });
            s = end;
        }
        if s >= 1.0 {
            break;
        }
    }
    pieces
}

fn arc_norm_pieces(du: f64, dv: f64, w: f64, t0: f64, t1: f64) -> Vec<NormPiece> {
    let f = |t: f64| (du + t * w).min(dv + (1.0 - t) * w);
    let peak = (dv + w - du) / (2.0 * w);
    let (lo, hi) = (t0.min(t1), t0.max(t1));
    let mut cuts = vec![0.0];
    if peak > lo && peak < hi {
        cuts.push((peak - t0) / (t1 - t0));
    }
    cuts.push(1.0);
    cuts.windows(2)
        .map(|c| {
            let (s0, s1) = (c[0], c[1]);
            NormPiece { s0, s1, n0: f(t0 + s0 * (t1 - t0)), n1: f(t0 + s1 * (t1 - t0)) }
        })
        .collect()
}

fn inside_from_pieces(pieces: &[NormPiece], r: f64) -> Vec<(f64, f64)> {
    intervals_below(pieces, r, false)
}

fn intervals_below(pieces: &[NormPiece], r: f64, strict: bool) -> Vec<(f64, f64)> {
    let below = |n: f64| if strict { n < r } else { n <= r };
    let mut out: Vec<(f64, f64)> = Vec::new();
    for p in pieces {
        if strict && p.n0 == r && p.n1 == r {
            continue;
        }
        let piece = match (below(p.n0), below(p.n1)) {
            (true, true) => Some((p.s0, p.s1)),
            (false, false) => None,
            (true, false) => Some((p.s0, p.s0 + (r - p.n0) / (p.n1 - p.n0) * (p.s1 - p.s0))),
            (false, true) => Some((p.s0 + (r - p.n0) / (p.n1 - p.n0) * (p.s1 - p.s0), p.s1)),
        };
        if let Some((a, b)) = piece {
            match out.last_mut() {
                Some(last) if last.1 >= a => last.1 = last.1.max(b),
                _ => out.push((a, b)),
            }
        }
    }
    out.retain(|(a, b)| b > a);
    out
}

/// Regions generated by balls around the base point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Region {
    All,
    /// Closed ball `B̄_r`.
    Ball(f64),
    /// Open ball `B_r`.
    OpenBall(f64),
    /// `B̄_outer \ B̄_inner`.
    Annulus { inner: f64, outer: f64 },
}

impl Region {
    /// Whether a point lies in the region. The point at infinity lies only in `All`.
    pub fn contains(&self, space: &AmbientSpace, p: &Point) -> bool {
        if let Region::All = self {
            return true;
        }
        let Ok(n) = space.norm(p) else { return false };
        match *self {
            Region::All => true,
            Region::Ball(r) => n <= r,
            Region::OpenBall(r) => n < r,
            Region::Annulus { inner, outer } => n > inner && n <= outer,
        }
    }

    /// Parameter intervals of `seg` inside the region (an annulus may give
    /// up to four pieces).
    pub fn intervals(&self, space: &AmbientSpace, seg: &Segment) -> Vec<(f64, f64)> {
        match *self {
            Region::All => vec![(0.0, 1.0)],
            Region::Ball(r) => intervals_below(&seg.norm_pieces(space), r, false),
            Region::OpenBall(r) => intervals_below(&seg.norm_pieces(space), r, true),
            Region::Annulus { inner, outer } => {
                let pieces = seg.norm_pieces(space);
                let big = intervals_below(&pieces, outer, false);
                let small = intervals_below(&pieces, inner, false);
                subtract_intervals(&big, &small)
            }
        }
    }
}

fn subtract_intervals(a: &[(f64, f64)], b: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    for &(lo, hi) in a {
        let mut start = lo;
        for &(blo, bhi) in b {
            if bhi <= start || blo >= hi {
                continue;
            }
            if blo > start {
                out.push((start, blo));
            }
            start = start.max(bhi);
        }
        if start < hi {
            out.push((start, hi));
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Entering,
    Exiting,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Crossing {
    pub point: Point,
    pub direction: Direction,
}

/// The part of a segment inside the closed ball `B_r` around the base point.
#[derive(Clone, Debug, PartialEq)]
pub struct BallCut {
    pub inside: Vec<Segment>,
    pub crossings: Vec<Crossing>,
}

/// Cuts `s` with the closed ball of radius `r` around the base point.
///
/// Fails with [`Error::UnsafeRadius`] when an endpoint, or an interior
/// extremum of the norm along `s`, sits within [`CUT_MARGIN`] of `r`.
pub fn ball_cut(space: &AmbientSpace, s: &Segment, r: f64) -> Result<BallCut> {
    if !(r > 0.0) {
        return Err(Error::Invalid(format!("ball radius must be positive, got {r}")));
    }
    let pieces = s.norm_pieces(space);
    let margin = CUT_MARGIN * r.max(1.0);
    let mut probes = Vec::with_capacity(pieces.len() + 1);
    probes.push(pieces[0].n0);
    probes.extend(pieces.iter().map(|p| p.n1));
    if let Some(&norm) = probes.iter().find(|n| (**n - r).abs() <= margin) {
        return Err(Error::UnsafeRadius { radius: r, norm, margin });
    }
    let intervals = inside_from_pieces(&pieces, r);
    let mut inside = Vec::with_capacity(intervals.len());
    let mut crossings = Vec::new();
    for &(a, b) in &intervals {
        let piece = s.sub(a, b)?;
        if a > 0.0 {
            crossings.push(Crossing { point: piece.tail(), direction: Direction::Entering });
        }
        if b < 1.0 {
            crossings.push(Crossing { point: piece.head(), direction: Direction::Exiting });
        }
        inside.push(piece);
    }
    Ok(BallCut { inside, crossings })
}

/// Whether `r` can be used as a cut radius for all of `segments`.
pub fn is_cut_safe<'a>(space: &AmbientSpace, segments: impl IntoIterator<Item = &'a Segment>, r: f64) -> bool {
    let margin = CUT_MARGIN * r.max(1.0);
    segments.into_iter().all(|s| {
        let pieces = s.norm_pieces(space);
        (pieces[0].n0 - r).abs() > margin && pieces.iter().all(|p| (p.n1 - r).abs() > margin)
    })
}

/// The nearest cut-safe radius to `r`, probing dyadic offsets `r +- k/1024`.
pub fn nearest_safe_radius<'a>(
    space: &AmbientSpace,
    segments: impl IntoIterator<Item = &'a Segment> + Clone,
    r: f64,
) -> f64 {
    const STEP: f64 = 1.0 / 1024.0;
    for k in 0..4096 {
        for sign in [1.0, -1.0] {
            let candidate = r + sign * k as f64 * STEP;
            if candidate > 0.0 && is_cut_safe(space, segments.clone(), candidate) {
                return candidate;
            }
            if k == 0 {
                break;
            }
        }
    }
    r
}

/// Image of a finite metric graph under a Kuratowski (Frechet) map into the
/// sup-norm model.
#[derive(Clone, Debug)]
pub struct Embedding {
    pub space: Arc<AmbientSpace>,
    pub anchors: Vec<usize>,
    pub images: Vec<Coords>,
}

/// Sends vertex `v` to `(d(v, a_i) - d(a_0, a_i))_i`. With every vertex
/// among the anchors this is an isometry onto its image; with `a_0` the
/// graph's base vertex, the base lands on the origin.
pub fn kuratowski_embed(graph: &MetricGraph, anchors: &[usize]) -> Result<Embedding> {
    let n = graph.vertex_count();
    let mut seen = vec![false; n];
    for &a in anchors {
        if a >= n || std::mem::replace(&mut seen[a], true) {
            return Err(Error::Invalid("anchors must list each vertex exactly once".into()));
        }
    }
    if anchors.len() != n {
        return Err(Error::Unsupported("anchors must enumerate every vertex".into()));
    }
    let a0 = anchors[0];
    let images = (0..n)
        .map(|v| Coords::new(anchors.iter().map(|&a| graph.dist(v, a) - graph.dist(a0, a)).collect::<Vec<_>>()))
        .collect::<Result<Vec<_>>>()?;
    Ok(Embedding { space: AmbientSpace::sup_norm(n), anchors: anchors.to_vec(), images })
}

impl Embedding {
    /// Straight-line image of a graph arc. Requires the carrying edge to be a
    /// shortest path, so lengths are preserved.
    pub fn map_segment(&self, graph: &MetricGraph, s: &Segment) -> Result<Segment> {
        match s {
            Segment::Arc { u, v, w, t0, t1, .. } => {
                if (graph.dist(*u, *v) - w).abs() > 1e-12 * w.max(1.0) {
                    return Err(Error::Unsupported(format!(
                        "edge {}-{} is not a geodesic; its straight image would shorten it",
                        graph.name(*u),
                        graph.name(*v)
                    )));
                }
                let (pu, pv) = (&self.images[*u], &self.images[*v]);
                Segment::line(pu.lerp(pv, *t0), pu.lerp(pv, *t1))
            }
            Segment::Line { .. } => Err(Error::Invalid("segment is already in the sup-norm model".into())),
        }
    }
}

/// JSON description of an ambient space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode")]
pub enum SpaceFile {
    #[serde(rename = "sup-norm")]
    SupNorm { dim: usize },
    #[serde(rename = "intrinsic")]
    Intrinsic {
        vertices: Vec<String>,
        edges: Vec<(String, String, f64)>,
        base: String,
    },
}

impl SpaceFile {
    pub fn build(&self) -> Result<Arc<AmbientSpace>> {
        Ok(Arc::new(match self {
            SpaceFile::SupNorm { dim } => AmbientSpace::SupNorm { dim: *dim },
            SpaceFile::Intrinsic { vertices, edges, base } => {
                AmbientSpace::Intrinsic(MetricGraph::new(vertices.clone(), edges, base)?)
            }
        }))
    }

    pub fn describe(space: &AmbientSpace) -> SpaceFile {
        match space {
            AmbientSpace::SupNorm { dim } => SpaceFile::SupNorm { dim: *dim },
            AmbientSpace::Intrinsic(g) => SpaceFile::Intrinsic {
                vertices: g.names.clone(),
                edges: g
                    .edges
                    .iter()
                    .map(|e| (g.names[e.u].clone(), g.names[e.v].clone(), e.w))
                    .collect(),
                base: g.names[g.base].clone(),
            },
        }
    }
}
