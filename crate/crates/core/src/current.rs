//! Polyhedral 1-currents `T = Σ w_e [[segment_e]]`, their mass and boundary
//! measures, ball restriction and the subcurrent order.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::{
    ball_cut, AmbientSpace, Direction, Embedding, Locus, Point, Region, Segment, SegmentKey,
};

/// Absolute tolerance for comparing weights.
pub const TAU_W: f64 = 1e-9;

/// Relative tolerance for deciding that a point lies on a segment.
const COLLINEAR_TOL: f64 = 1e-12;

/// Signed atomic measure on points (a 0-current).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AtomMeasure {
    atoms: BTreeMap<Point, f64>,
}

impl AtomMeasure {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_atoms(atoms: impl IntoIterator<Item = (Point, f64)>) -> Self {
        let mut m = Self::new();
        for (p, v) in atoms {
            m.add(p, v);
        }
        m.prune(0.0);
        m
    }

    /// Adds `v` to the atom at `p` (zero atoms are kept until [`prune`](Self::prune)).
    pub fn add(&mut self, p: Point, v: f64) {
        *self.atoms.entry(p).or_insert(0.0) += v;
    }

    /// Drops atoms with `|v| <= tol`.
    pub fn prune(&mut self, tol: f64) {
        self.atoms.retain(|_, v| v.abs() > tol);
    }

    pub fn get(&self, p: &Point) -> f64 {
        self.atoms.get(p).copied().unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Point, f64)> + '_ {
        self.atoms.iter().map(|(p, v)| (p, *v))
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn total_variation(&self) -> f64 {
        self.atoms.values().map(|v| v.abs()).sum()
    }

    /// `μ^+`.
    pub fn positive_part(&self) -> AtomMeasure {
        AtomMeasure { atoms: self.atoms.iter().filter(|(_, v)| **v > 0.0).map(|(p, v)| (p.clone(), *v)).collect() }
    }

    /// `μ^-`, as a nonnegative measure.
    pub fn negative_part(&self) -> AtomMeasure {
        AtomMeasure { atoms: self.atoms.iter().filter(|(_, v)| **v < 0.0).map(|(p, v)| (p.clone(), -*v)).collect() }
    }

    pub fn restrict(&self, space: &AmbientSpace, region: Region) -> AtomMeasure {
        AtomMeasure {
            atoms: self
                .atoms
                .iter()
                .filter(|(p, _)| region.contains(space, p))
                .map(|(p, v)| (p.clone(), *v))
                .collect(),
        }
    }

    pub fn scaled(&self, c: f64) -> AtomMeasure {
        AtomMeasure { atoms: self.atoms.iter().map(|(p, v)| (p.clone(), c * v)).collect() }
    }

    /// Largest atomwise difference `|μ(p) - ν(p)|`.
    pub fn max_abs_diff(&self, other: &AtomMeasure) -> f64 {
        let keys: BTreeSet<&Point> = self.atoms.keys().chain(other.atoms.keys()).collect();
        keys.into_iter().map(|p| (self.get(p) - other.get(p)).abs()).fold(0.0, f64::max)
    }
}

/// A finite weighted oriented edge set in canonical form: every edge carries
/// a positive weight (orientation absorbs the sign), no two edges share an
/// unordered segment, and segments meet at most at endpoints.
#[derive(Clone, Debug)]
pub struct EdgeCurrent {
    space: Arc<AmbientSpace>,
    edges: Vec<(Segment, f64)>,
}

impl EdgeCurrent {
    pub fn empty(space: Arc<AmbientSpace>) -> Self {
        EdgeCurrent { space, edges: Vec::new() }
    }

    /// Canonicalizes a raw edge list: merges duplicates (antiparallel ones
    /// with a sign flip), drops weights within [`TAU_W`] of zero and rejects
    /// collinear segments that share a positive-length piece.
    pub fn new(space: Arc<AmbientSpace>, raw: impl IntoIterator<Item = (Segment, f64)>) -> Result<Self> {
        let mut sums: BTreeMap<SegmentKey, (f64, Segment)> = BTreeMap::new();
        for (seg, w) in raw {
            check_segment(&space, &seg)?;
            if !w.is_finite() {
                return Err(Error::Invalid(format!("non-finite weight {w}")));
            }
            let (key, flipped) = seg.key();
            let signed = if flipped { -w } else { w };
            sums.entry(key)
                .and_modify(|(acc, _)| *acc += signed)
                .or_insert_with(|| (signed, if flipped { seg.reversed() } else { seg }));
        }
        let edges: Vec<(Segment, f64)> = sums
            .into_values()
            .filter(|(w, _)| w.abs() > TAU_W)
            .map(|(w, seg)| if w > 0.0 { (seg, w) } else { (seg.reversed(), -w) })
            .collect();
        let current = EdgeCurrent { space, edges };
        current.check_overlaps()?;
        Ok(current)
    }

    pub fn space(&self) -> &Arc<AmbientSpace> {
        &self.space
    }

    /// Edges in canonical order, each with a positive weight.
    pub fn edges(&self) -> &[(Segment, f64)] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn mass_total(&self) -> f64 {
        self.edges.iter().map(|(s, w)| w * s.length()).sum()
    }

    pub fn mass(&self) -> MassMeasure<'_> {
        MassMeasure { current: self }
    }

    pub fn mass_on(&self, region: Region) -> f64 {
        self.mass().on(region)
    }

    /// `∂T`: `+w` at every head, `-w` at every tail.
    pub fn boundary(&self) -> AtomMeasure {
        let mut m = AtomMeasure::new();
        for (s, w) in &self.edges {
            m.add(s.head(), *w);
            m.add(s.tail(), -*w);
        }
        m.prune(TAU_W);
        m
    }

    /// Endpoints of all edges.
    pub fn vertices(&self) -> BTreeSet<Point> {
        self.edges.iter().flat_map(|(s, _)| [s.tail(), s.head()]).collect()
    }

    /// `T ⌞ B̄_r` (the radius must be cut-safe).
    pub fn restrict_ball(&self, r: f64) -> Result<EdgeCurrent> {
        Ok(self.restrict_ball_with_cut(r)?.0)
    }

    /// `T ⌞ B̄_r` together with the new boundary atoms it creates on `∂B_r`.
    pub fn restrict_ball_with_cut(&self, r: f64) -> Result<(EdgeCurrent, AtomMeasure)> {
        let mut edges = Vec::with_capacity(self.edges.len());
        let mut cut = AtomMeasure::new();
        for (s, w) in &self.edges {
            let c = ball_cut(&self.space, s, r)?;
            for x in c.crossings {
                let sign = match x.direction {
                    Direction::Exiting => 1.0,
                    Direction::Entering => -1.0,
                };
                cut.add(x.point, sign * w);
            }
            edges.extend(c.inside.into_iter().map(|piece| (piece, *w)));
        }
        cut.prune(TAU_W);
        Ok((EdgeCurrent { space: self.space.clone(), edges: sorted(edges) }, cut))
    }

    /// Subdivides every segment at the given points that lie in its interior.
    pub fn refine(&self, points: &BTreeSet<Point>) -> Result<EdgeCurrent> {
        let mut edges = Vec::with_capacity(self.edges.len());
        for (s, w) in &self.edges {
            for piece in split_segment(&self.space, s, points)? {
                edges.push((piece, *w));
            }
        }
        Ok(EdgeCurrent { space: self.space.clone(), edges: sorted(edges) })
    }

    /// `Σ c_i T_i` over a common refinement.
    pub fn combine(terms: &[(&EdgeCurrent, f64)]) -> Result<EdgeCurrent> {
        let Some((first, _)) = terms.first() else {
            return Err(Error::Invalid("combine needs at least one current".into()));
        };
        let space = first.space.clone();
        if terms.iter().any(|(t, _)| *t.space != *space) {
            return Err(Error::SpaceMismatch);
        }
        let points: BTreeSet<Point> = terms.iter().flat_map(|(t, _)| t.vertices()).collect();
        let mut raw = Vec::new();
        for (t, c) in terms {
            for (s, w) in t.refine(&points)?.edges {
                raw.push((s, c * w));
            }
        }
        EdgeCurrent::new(space, raw)
    }

    pub fn add(&self, other: &EdgeCurrent) -> Result<EdgeCurrent> {
        EdgeCurrent::combine(&[(self, 1.0), (other, 1.0)])
    }

    pub fn sub(&self, other: &EdgeCurrent) -> Result<EdgeCurrent> {
        EdgeCurrent::combine(&[(self, 1.0), (other, -1.0)])
    }

    /// `S ≤ T`: `|s_e| + |t_e - s_e| = |t_e|` on every edge of a common refinement.
    pub fn is_subcurrent(&self, of: &EdgeCurrent) -> Result<bool> {
        Ok(subcurrent_excess(self, of)? <= TAU_W)
    }

    /// Same edges and weights up to `tol`, with endpoints matched up to `tol`.
    pub fn approx_eq(&self, other: &EdgeCurrent, tol: f64) -> bool {
        if self.edges.len() != other.edges.len() || *self.space != *other.space {
            return false;
        }
        let close = |p: &Point, q: &Point| p == q || self.space.distance(p, q).is_ok_and(|d| d <= tol);
        let mut used = vec![false; other.edges.len()];
        'outer: for (s, w) in &self.edges {
            for (j, (t, v)) in other.edges.iter().enumerate() {
                if !used[j] && (w - v).abs() <= tol && close(&s.tail(), &t.tail()) && close(&s.head(), &t.head()) {
                    used[j] = true;
                    continue 'outer;
                }
            }
            return false;
        }
        true
    }

    pub fn scaled(&self, c: f64) -> Result<EdgeCurrent> {
        EdgeCurrent::new(self.space.clone(), self.edges.iter().map(|(s, w)| (s.clone(), c * w)))
    }

    /// Pushes a current on a metric graph forward along a Kuratowski embedding.
    pub fn embed(&self, emb: &Embedding) -> Result<EdgeCurrent> {
        let graph = self
            .space
            .graph()
            .ok_or_else(|| Error::Invalid("only intrinsic currents can be embedded".into()))?;
        let edges = self
            .edges
            .iter()
            .map(|(s, w)| Ok((emb.map_segment(graph, s)?, *w)))
            .collect::<Result<Vec<_>>>()?;
        EdgeCurrent::new(emb.space.clone(), edges)
    }

    fn check_overlaps(&self) -> Result<()> {
        for (i, (s, _)) in self.edges.iter().enumerate() {
            for (t, _) in &self.edges[i + 1..] {
                if overlaps(s, t) {
                    return Err(Error::Overlap(format!("{s:?} and {t:?}")));
                }
            }
        }
        Ok(())
    }
}

/// `max_e (|s_e| + |t_e - s_e| - |t_e|)` over a common refinement.
pub(crate) fn subcurrent_excess(s: &EdgeCurrent, t: &EdgeCurrent) -> Result<f64> {
    if *s.space != *t.space {
        return Err(Error::SpaceMismatch);
    }
    let points: BTreeSet<Point> = s.vertices().into_iter().chain(t.vertices()).collect();
    let signed = |c: &EdgeCurrent| -> Result<BTreeMap<SegmentKey, f64>> {
        let mut m = BTreeMap::new();
        for (seg, w) in c.refine(&points)?.edges {
            let (key, flipped) = seg.key();
            *m.entry(key).or_insert(0.0) += if flipped { -w } else { w };
        }
        Ok(m)
    };
    let (sm, tm) = (signed(s)?, signed(t)?);
    let mut worst: f64 = 0.0;
    for (key, sv) in &sm {
        let tv = tm.get(key).copied().unwrap_or(0.0);
        worst = worst.max(sv.abs() + (tv - sv).abs() - tv.abs());
    }
    Ok(worst)
}

fn sorted(mut edges: Vec<(Segment, f64)>) -> Vec<(Segment, f64)> {
    edges.sort_by(|a, b| a.0.key().0.cmp(&b.0.key().0));
    edges
}

fn check_segment(space: &AmbientSpace, s: &Segment) -> Result<()> {
    match (space, s) {
        (AmbientSpace::SupNorm { dim }, Segment::Line { a, .. }) if a.dim() == *dim => Ok(()),
        (AmbientSpace::Intrinsic(g), Segment::Arc { edge, u, v, w, .. }) if *edge < g.edges().len() => {
            let e = g.edge(*edge);
            if (e.u, e.v) == (*u, *v) && e.w == *w {
                Ok(())
            } else {
                Err(Error::Invalid(format!("arc on edge {edge} does not match the graph")))
            }
        }
        _ => Err(Error::Invalid(format!("{s:?} does not belong to this space"))),
    }
}

/// Parameter `t` with `p = a + t (b - a)` if `p` lies on the line through `a, b`.
fn line_param(a: &[f64], b: &[f64], p: &[f64]) -> Option<f64> {
    let (i, span) = a
        .iter()
        .zip(b)
        .map(|(x, y)| y - x)
        .enumerate()
        .max_by(|x, y| x.1.abs().total_cmp(&y.1.abs()))?;
    let t = (p[i] - a[i]) / span;
    let scale = a.iter().chain(b).chain(p).fold(1.0f64, |m, x| m.max(x.abs()));
    let on_line = a
        .iter()
        .zip(b)
        .zip(p)
        .all(|((x, y), z)| (x + t * (y - x) - z).abs() <= COLLINEAR_TOL * scale);
    on_line.then_some(t)
}

/// Local parameter of `p` if it lies strictly inside `s`.
fn interior_param(s: &Segment, p: &Point) -> Option<f64> {
    if *p == s.tail() || *p == s.head() {
        return None;
    }
    let t = match (s, p) {
        (Segment::Line { a, b }, Point::Coord(c)) => line_param(a.as_slice(), b.as_slice(), c.as_slice())?,
        (Segment::Arc { edge, t0, t1, .. }, Point::Graph(Locus::OnEdge { edge: f, t })) if edge == f => {
            (t - t0) / (t1 - t0)
        }
        _ => return None,
    };
    (t > 0.0 && t < 1.0).then_some(t)
}

fn split_segment(space: &AmbientSpace, s: &Segment, points: &BTreeSet<Point>) -> Result<Vec<Segment>> {
    let mut cuts: Vec<(f64, &Point)> = points.iter().filter_map(|p| Some((interior_param(s, p)?, p))).collect();
    if cuts.is_empty() {
        return Ok(vec![s.clone()]);
    }
    cuts.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut stops = vec![s.tail()];
    stops.extend(cuts.into_iter().map(|(_, p)| p.clone()));
    stops.push(s.head());
    stops.dedup();
    stops.windows(2).map(|w| Segment::between(space, &w[0], &w[1])).collect()
}

/// Whether two distinct segments share a positive-length piece.
fn overlaps(s: &Segment, t: &Segment) -> bool {
    match (s, t) {
        (Segment::Line { a, b }, Segment::Line { a: c, b: d }) => {
            let (a, b, c, d) = (a.as_slice(), b.as_slice(), c.as_slice(), d.as_slice());
            let disjoint_boxes = (0..a.len()).any(|i| {
                a[i].max(b[i]) < c[i].min(d[i]) || c[i].max(d[i]) < a[i].min(b[i])
            });
            if disjoint_boxes {
                return false;
            }
            let (Some(tc), Some(td)) = (line_param(a, b, c), line_param(a, b, d)) else {
                return false;
            };
            let (lo, hi) = (tc.min(td).max(0.0), tc.max(td).min(1.0));
            hi - lo > COLLINEAR_TOL
        }
        (Segment::Arc { edge: e, t0, t1, .. }, Segment::Arc { edge: f, t0: u0, t1: u1, .. }) if e == f => {
            let lo = t0.min(*t1).max(u0.min(*u1));
            let hi = t0.max(*t1).min(u0.max(*u1));
            hi - lo > COLLINEAR_TOL
        }
        _ => false,
    }
}

/// `‖T‖`, the measure with density `|w_e|` on each carrier segment.
#[derive(Clone, Copy, Debug)]
pub struct MassMeasure<'a> {
    current: &'a EdgeCurrent,
}

impl MassMeasure<'_> {
    pub fn total(&self) -> f64 {
        self.current.mass_total()
    }

    pub fn on(&self, region: Region) -> f64 {
        let space = &self.current.space;
        self.current
            .edges
            .iter()
            .map(|(s, w)| {
                let covered: f64 = region.intervals(space, s).iter().map(|(a, b)| b - a).sum();
                w * s.length() * covered
            })
            .sum()
    }
}

/// A locally finite current presented through its truncations `T_R = T ⌞ B̄_R`.
pub trait AnnulusGenerator: Send + Sync {
    /// Stable identifier (family, parameters and seed).
    fn id(&self) -> String;

    fn space(&self) -> Arc<AmbientSpace>;

    /// `T ⌞ B̄_r` for a cut-safe `r`.
    fn current_within(&self, r: f64) -> Result<EdgeCurrent>;
}

/// A finite current viewed as a generator.
#[derive(Clone, Debug)]
pub struct FiniteGenerator {
    pub name: String,
    pub current: EdgeCurrent,
}

impl AnnulusGenerator for FiniteGenerator {
    fn id(&self) -> String {
        self.name.clone()
    }

    fn space(&self) -> Arc<AmbientSpace> {
        self.current.space.clone()
    }

    fn current_within(&self, r: f64) -> Result<EdgeCurrent> {
        self.current.restrict_ball(r)
    }
}

/// Checks `T_{r'} ⌞ B̄_r = T_r` for every pair `r < r'` of the given radii.
pub fn check_consistency(generator: &dyn AnnulusGenerator, radii: &[f64]) -> Result<()> {
    let mut rs = radii.to_vec();
    rs.sort_by(f64::total_cmp);
    let currents = rs.iter().map(|&r| generator.current_within(r)).collect::<Result<Vec<_>>>()?;
    for i in 0..rs.len() {
        for j in i + 1..rs.len() {
            let cut = currents[j].restrict_ball(rs[i])?;
            if !cut.approx_eq(&currents[i], 1e-9) {
                return Err(Error::InconsistentGenerator {
                    inner: rs[i],
                    outer: rs[j],
                    detail: format!(
                        "{} edges after restriction, {} generated; masses {} vs {}",
                        cut.len(),
                        currents[i].len(),
                        cut.mass_total(),
                        currents[i].mass_total()
                    ),
                });
            }
        }
    }
    Ok(())
}
