//! Instance families: radial generators (rays, lines, chains), the comb,
//! and seeded random finite currents on a lattice.
//!
//! Radial generators put their vertices at radii `0, 1/2, 3/2, 5/2, ...`, so
//! every integer radius is cut-safe. Lattice currents use per-axis offsets
//! that keep their edges off every line through the origin.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::current::{AnnulusGenerator, EdgeCurrent};
use crate::error::{Error, Result};
use crate::geometry::{kuratowski_embed, AmbientSpace, Coords, Embedding, MetricGraph, Segment};

/// Vertex radii of radial generators up to (at least) `r + 1`.
fn radial_stops(r: f64) -> Vec<f64> {
    let n = r.max(0.0).ceil() as usize + 2;
    std::iter::once(0.0).chain((0..n).map(|k| k as f64 + 0.5)).collect()
}

/// How the weight of the `j`-th edge of a ray (counting from the origin) grows.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RayProfile {
    Constant,
    /// Weight `(j + 1) w`: one unit source `w` at every vertex.
    Chain,
}

/// A ray from the origin in direction `dir` (sup-norm 1).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RaySpec {
    pub dir: Vec<f64>,
    pub weight: f64,
    pub outward: bool,
    pub profile: RayProfile,
}

/// A sum of rays from the origin and a finite current.
#[derive(Clone, Debug)]
pub struct RadialGenerator {
    name: String,
    space: Arc<AmbientSpace>,
    rays: Vec<RaySpec>,
    finite: Option<EdgeCurrent>,
}

impl RadialGenerator {
    pub fn new(name: impl Into<String>, dim: usize, rays: Vec<RaySpec>, finite: Option<EdgeCurrent>) -> Result<Self> {
        for ray in &rays {
            let norm = ray.dir.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            if ray.dir.len() != dim || norm != 1.0 {
                return Err(Error::Invalid(format!("ray direction {:?} must have sup-norm 1 in dimension {dim}", ray.dir)));
            }
            if !(ray.weight > 0.0) {
                return Err(Error::Invalid("ray weights must be positive".into()));
            }
        }
        let space = AmbientSpace::sup_norm(dim);
        if let Some(f) = &finite {
            if **f.space() != *space {
                return Err(Error::SpaceMismatch);
            }
        }
        Ok(RadialGenerator { name: name.into(), space, rays, finite })
    }

    pub fn rays(&self) -> &[RaySpec] {
        &self.rays
    }
}

impl AnnulusGenerator for RadialGenerator {
    fn id(&self) -> String {
        self.name.clone()
    }

    fn space(&self) -> Arc<AmbientSpace> {
        self.space.clone()
    }

    fn current_within(&self, r: f64) -> Result<EdgeCurrent> {
        let stops = radial_stops(r);
        let mut raw = Vec::new();
        for ray in &self.rays {
            let at = |t: f64| Coords::new(ray.dir.iter().map(|x| x * t).collect::<Vec<_>>());
            for (j, w) in stops.windows(2).enumerate() {
                let weight = match ray.profile {
                    RayProfile::Constant => ray.weight,
                    RayProfile::Chain => ray.weight * (j + 1) as f64,
                };
                let s = Segment::line(at(w[0])?, at(w[1])?)?;
                raw.push((if ray.outward { s } else { s.reversed() }, weight));
            }
        }
        if let Some(f) = &self.finite {
            raw.extend(f.edges().iter().cloned());
        }
        EdgeCurrent::new(self.space.clone(), raw)?.restrict_ball(r)
    }
}

fn axis(dim: usize, i: usize, sign: f64) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    v[i] = sign;
    v
}

/// Unit ray along the first axis.
pub fn ray(dim: usize) -> Result<RadialGenerator> {
    let spec = RaySpec { dir: axis(dim, 0, 1.0), weight: 1.0, outward: true, profile: RayProfile::Constant };
    RadialGenerator::new(format!("ray/dim={dim}"), dim, vec![spec], None)
}

/// Doubly infinite unit line along the first axis, oriented towards `+e_1`.
pub fn line(dim: usize) -> Result<RadialGenerator> {
    let rays = vec![
        RaySpec { dir: axis(dim, 0, -1.0), weight: 1.0, outward: false, profile: RayProfile::Constant },
        RaySpec { dir: axis(dim, 0, 1.0), weight: 1.0, outward: true, profile: RayProfile::Constant },
    ];
    RadialGenerator::new(format!("line/dim={dim}"), dim, rays, None)
}

/// Random direction with entries in `{-1, 0, 1}`, at least one nonzero.
fn random_dir(dim: usize, rng: &mut impl Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| [-1.0, 0.0, 1.0][rng.gen_range(0..3)]).collect();
        if v.iter().any(|x| *x != 0.0) {
            return v;
        }
    }
}

/// Chain of unit sources along a random axis direction, with weight
/// `(j + 1) s` on the `j`-th edge, plus an optional random decoration near
/// the origin. Its boundary mass in `B_r` grows linearly in `r`.
pub fn chain(seed: u64) -> Result<RadialGenerator> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = rng.gen_range(2..=3);
    let scale = [0.25, 0.5, 1.0, 2.0][rng.gen_range(0..4)];
    let mut rays = vec![RaySpec { dir: random_dir(dim, &mut rng), weight: scale, outward: true, profile: RayProfile::Chain }];
    if rng.gen_bool(0.5) {
        let dir = loop {
            let d = random_dir(dim, &mut rng);
            if d != rays[0].dir {
                break d;
            }
        };
        rays.push(RaySpec { dir, weight: 0.5, outward: rng.gen_bool(0.5), profile: RayProfile::Chain });
    }
    let finite = if rng.gen_bool(0.5) { Some(lattice_current(dim, 12, LatticeKind::Flow, rng.gen())?) } else { None };
    RadialGenerator::new(format!("chain/seed={seed}"), dim, rays, finite)
}

/// A few constant rays and lines in random directions plus a random finite
/// current; finite boundary mass.
pub fn random_local(seed: u64) -> Result<RadialGenerator> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = rng.gen_range(2..=3);
    let mut rays: Vec<RaySpec> = Vec::new();
    let mut used: Vec<Vec<f64>> = Vec::new();
    for _ in 0..rng.gen_range(1..=3) {
        let dir = random_dir(dim, &mut rng);
        let back: Vec<f64> = dir.iter().map(|x| -x).collect();
        if used.contains(&dir) || used.contains(&back) {
            continue;
        }
        let weight = rng.gen_range(1..=8) as f64 * 0.25;
        let outward = rng.gen_bool(0.5);
        if rng.gen_bool(0.4) {
            rays.push(RaySpec { dir: back.clone(), weight, outward: !outward, profile: RayProfile::Constant });
            used.push(back);
        }
        rays.push(RaySpec { dir: dir.clone(), weight, outward, profile: RayProfile::Constant });
        used.push(dir);
    }
    let kind = [LatticeKind::Flow, LatticeKind::Dag, LatticeKind::Grid][rng.gen_range(0..3)];
    let finite = lattice_current(dim, rng.gen_range(4..=30), kind, rng.gen())?;
    RadialGenerator::new(format!("random-local/seed={seed}"), dim, rays, Some(finite))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LatticeKind {
    /// Random closed and open walks.
    Flow,
    /// Edges oriented along a random total order of the lattice points.
    Dag,
    /// Random plaquette cycles plus a few source-sink paths.
    Grid,
}

/// Per-axis offsets: no lattice edge is collinear with a line through the
/// origin spanned by a `{-1, 0, 1}` direction.
const OFFSETS: [f64; 4] = [0.25, 0.125, 0.0625, 0.1875];
const SPACING: f64 = 0.5;
/// Lattice indices run over `-HALF..HALF`, so the box stays inside `B̄_3`.
const HALF: i64 = 5;

fn lattice_point(dim: usize, idx: &[i64]) -> Result<Coords> {
    Coords::new((0..dim).map(|i| OFFSETS[i] + SPACING * idx[i] as f64).collect::<Vec<_>>())
}

fn random_site(dim: usize, rng: &mut impl Rng) -> Vec<i64> {
    (0..dim).map(|_| rng.gen_range(-HALF..HALF)).collect()
}

fn step_dirs(dim: usize) -> Vec<Vec<i64>> {
    let mut out = Vec::new();
    let total = 3usize.pow(dim as u32);
    for code in 0..total {
        let mut c = code;
        let v: Vec<i64> = (0..dim)
            .map(|_| {
                let d = (c % 3) as i64 - 1;
                c /= 3;
                d
            })
            .collect();
        if v.iter().any(|x| *x != 0) {
            out.push(v);
        }
    }
    out
}

fn in_box(idx: &[i64]) -> bool {
    idx.iter().all(|x| (-HALF..HALF).contains(x))
}

/// A seeded random current on the offset lattice with at most `max_edges`
/// edges and weights in `{1/8, ..., 2}`.
pub fn lattice_current(dim: usize, max_edges: usize, kind: LatticeKind, seed: u64) -> Result<EdgeCurrent> {
    if !(1..=OFFSETS.len()).contains(&dim) {
        return Err(Error::Invalid(format!("lattice currents support dimensions 1 to {}", OFFSETS.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dirs = step_dirs(dim);
    let mut raw: BTreeMap<(Vec<i64>, Vec<i64>), f64> = BTreeMap::new();
    let push = |raw: &mut BTreeMap<(Vec<i64>, Vec<i64>), f64>, a: &[i64], b: &[i64], w: f64| {
        if a < b {
            *raw.entry((a.to_vec(), b.to_vec())).or_insert(0.0) += w;
        } else {
            *raw.entry((b.to_vec(), a.to_vec())).or_insert(0.0) -= w;
        }
    };
    let weight = |rng: &mut ChaCha8Rng| rng.gen_range(1..=16) as f64 / 8.0;
    match kind {
        LatticeKind::Flow => {
            while raw.len() < max_edges {
                let w = weight(&mut rng);
                let closed = rng.gen_bool(0.6);
                let start = random_site(dim, &mut rng);
                let len = rng.gen_range(1..=6);
                let mut walk = vec![start.clone()];
                for _ in 0..len {
                    let cur = walk.last().expect("nonempty").clone();
                    let d = dirs.choose(&mut rng).expect("directions");
                    let next: Vec<i64> = cur.iter().zip(d).map(|(a, b)| a + b).collect();
                    if in_box(&next) && !walk.contains(&next) {
                        walk.push(next);
                    }
                }
                if closed && walk.len() >= 2 {
                    // close along a lattice path back to the start
                    let mut cur = walk.last().expect("nonempty").clone();
                    while cur != start {
                        let next: Vec<i64> = cur.iter().zip(&start).map(|(a, b)| a + (b - a).signum()).collect();
                        walk.push(next.clone());
                        cur = next;
                    }
                }
                if raw.len() + walk.len() > max_edges + 1 && !raw.is_empty() {
                    break;
                }
                for pair in walk.windows(2) {
                    if pair[0] != pair[1] {
                        push(&mut raw, &pair[0], &pair[1], w);
                    }
                }
            }
        }
        LatticeKind::Dag => {
            let mut rank: BTreeMap<Vec<i64>, u64> = BTreeMap::new();
            while raw.len() < max_edges {
                let a = random_site(dim, &mut rng);
                let d = dirs.choose(&mut rng).expect("directions");
                let b: Vec<i64> = a.iter().zip(d).map(|(x, y)| x + y).collect();
                if !in_box(&b) {
                    continue;
                }
                let ra = *rank.entry(a.clone()).or_insert_with(|| rng.gen());
                let rb = *rank.entry(b.clone()).or_insert_with(|| rng.gen());
                let key = if a < b { (a.clone(), b.clone()) } else { (b.clone(), a.clone()) };
                if raw.contains_key(&key) {
                    continue;
                }
                let w = weight(&mut rng);
                if ra < rb {
                    push(&mut raw, &a, &b, w);
                } else {
                    push(&mut raw, &b, &a, w);
                }
            }
        }
        LatticeKind::Grid => {
            let paths = rng.gen_range(1..=2);
            while raw.len() + 3 * paths < max_edges.max(4) {
                let base = random_site(dim, &mut rng);
                let (i, j) = if dim == 1 { (0, 0) } else { (rng.gen_range(0..dim), rng.gen_range(0..dim)) };
                if i == j {
                    if dim == 1 {
                        break;
                    }
                    continue;
                }
                let mut corners = vec![base.clone()];
                let mut p = base.clone();
                for (axis, delta) in [(i, 1), (j, 1), (i, -1), (j, -1)] {
                    p[axis] += delta;
                    corners.push(p.clone());
                }
                if !corners.iter().all(|c| in_box(c)) {
                    continue;
                }
                let w = weight(&mut rng);
                for pair in corners.windows(2) {
                    push(&mut raw, &pair[0], &pair[1], w);
                }
            }
            for _ in 0..paths {
                let mut cur = random_site(dim, &mut rng);
                let w = weight(&mut rng);
                for _ in 0..3 {
                    let d = dirs.choose(&mut rng).expect("directions");
                    let next: Vec<i64> = cur.iter().zip(d).map(|(a, b)| a + b).collect();
                    if in_box(&next) {
                        push(&mut raw, &cur, &next, w);
                        cur = next;
                    }
                }
            }
        }
    }
    let space = AmbientSpace::sup_norm(dim);
    let edges = raw
        .into_iter()
        .filter(|(_, w)| *w != 0.0)
        .map(|((a, b), w)| Ok((Segment::line(lattice_point(dim, &a)?, lattice_point(dim, &b)?)?, w)))
        .collect::<Result<Vec<_>>>()?;
    EdgeCurrent::new(space, edges)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CombMode {
    /// The comb with its own geodesic distance.
    Intrinsic,
    /// The comb pushed into the sup-norm model by a Kuratowski map.
    Embed,
}

/// The comb: a base half-line with vertical teeth of height `height` at
/// `x = 0, 1, 2, ...`, and the base point half a unit left of the first
/// tooth. The current is a sum of `curves` U-shaped curves; the `n`-th comes
/// down tooth `2n`, runs along the base to tooth `2n + 1` and goes back up.
/// Teeth are single graph edges of length `height`, so the space is finite
/// and the generator is valid for radii below `height`.
#[derive(Clone, Debug)]
pub struct Comb {
    curves: usize,
    height: f64,
    mode: CombMode,
    graph: MetricGraph,
    intrinsic: EdgeCurrent,
    embedding: Option<Embedding>,
    embedded: Option<EdgeCurrent>,
}

impl Comb {
    pub fn new(curves: usize, height: usize, mode: CombMode) -> Result<Self> {
        if curves == 0 || height < 2 {
            return Err(Error::Invalid("the comb needs at least one curve and teeth of height at least 2".into()));
        }
        let teeth = 2 * curves;
        let mut names = vec!["o".to_string()];
        names.extend((0..teeth).map(|n| format!("b{n}")));
        names.extend((0..teeth).map(|n| format!("t{n}")));
        let h = height as f64;
        let mut edges = vec![("o".to_string(), "b0".to_string(), 0.5)];
        for n in 0..teeth {
            if n + 1 < teeth {
                edges.push((format!("b{n}"), format!("b{}", n + 1), 1.0));
            }
            edges.push((format!("b{n}"), format!("t{n}"), h));
        }
        let graph = MetricGraph::new(names, &edges, "o")?;
        let space = Arc::new(AmbientSpace::Intrinsic(graph.clone()));
        let arc = |from: &str, to: &str| -> Result<Segment> {
            let (u, v) = (graph.vertex(from).expect("vertex"), graph.vertex(to).expect("vertex"));
            let e = graph.edge_between(u, v).expect("edge");
            if graph.edge(e).u == u { Segment::arc(&graph, e, 0.0, 1.0) } else { Segment::arc(&graph, e, 1.0, 0.0) }
        };
        let mut raw = Vec::new();
        for k in 0..curves {
            let (l, r) = (2 * k, 2 * k + 1);
            raw.push((arc(&format!("t{l}"), &format!("b{l}"))?, 1.0));
            raw.push((arc(&format!("b{l}"), &format!("b{r}"))?, 1.0));
            raw.push((arc(&format!("b{r}"), &format!("t{r}"))?, 1.0));
        }
        let intrinsic = EdgeCurrent::new(space, raw)?;
        let (embedding, embedded) = match mode {
            CombMode::Intrinsic => (None, None),
            CombMode::Embed => {
                let base = graph.base();
                let anchors: Vec<usize> = std::iter::once(base).chain((0..graph.vertex_count()).filter(|&v| v != base)).collect();
                let emb = kuratowski_embed(&graph, &anchors)?;
                let t = intrinsic.embed(&emb)?;
                (Some(emb), Some(t))
            }
        };
        Ok(Comb { curves, height: h, mode, graph, intrinsic, embedding, embedded })
    }

    pub fn graph(&self) -> &MetricGraph {
        &self.graph
    }

    pub fn embedding(&self) -> Option<&Embedding> {
        self.embedding.as_ref()
    }

    pub fn mode(&self) -> CombMode {
        self.mode
    }

    /// The whole finite comb current (tooth tops included).
    pub fn full(&self) -> &EdgeCurrent {
        self.embedded.as_ref().unwrap_or(&self.intrinsic)
    }
}

impl AnnulusGenerator for Comb {
    fn id(&self) -> String {
        let mode = match self.mode {
            CombMode::Intrinsic => "intrinsic",
            CombMode::Embed => "embed",
        };
        format!("comb/curves={}/height={}/mode={mode}", self.curves, self.height)
    }

    fn space(&self) -> Arc<AmbientSpace> {
        self.full().space().clone()
    }

    fn current_within(&self, r: f64) -> Result<EdgeCurrent> {
        if r >= self.height {
            return Err(Error::Unsupported(format!("comb teeth of height {} only model radii below it (got {r})", self.height)));
        }
        self.full().restrict_ball(r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::current::check_consistency;
    use crate::geometry::{Point, Region};

    #[test]
    fn ray_has_one_edge_per_unit_annulus() {
        let g = ray(2).unwrap();
        let t = g.current_within(8.0).unwrap();
        assert_eq!(t.len(), 9);
        for k in 1..8 {
            let ann = Region::Annulus { inner: k as f64, outer: k as f64 + 1.0 };
            assert!((t.mass_on(ann) - 1.0).abs() < 1e-12);
        }
        assert_eq!(t.boundary().total_variation(), 2.0);
    }

    #[test]
    fn line_is_boundaryless_inside() {
        let t = line(2).unwrap().current_within(5.0).unwrap();
        let inner = t.boundary().restrict(t.space(), Region::OpenBall(5.0));
        assert!(inner.is_empty());
        assert_eq!(t.mass_total(), 10.0);
    }

    #[test]
    fn chain_has_unit_sources() {
        let g = RadialGenerator::new(
            "c",
            2,
            vec![RaySpec { dir: vec![1.0, 0.0], weight: 1.0, outward: true, profile: RayProfile::Chain }],
            None,
        )
        .unwrap();
        let t = g.current_within(6.0).unwrap();
        let b = t.boundary().restrict(t.space(), Region::OpenBall(6.0));
        assert_eq!(b.len(), 7);
        assert!(b.iter().all(|(_, v)| v == -1.0));
    }

    #[test]
    fn generators_are_consistent() {
        for seed in 0..20 {
            check_consistency(&chain(seed).unwrap(), &[3.0, 6.0, 9.0]).unwrap();
            check_consistency(&random_local(seed).unwrap(), &[2.0, 6.0, 10.0]).unwrap();
        }
        let comb = Comb::new(2, 16, CombMode::Embed).unwrap();
        check_consistency(&comb, &[2.0, 5.0, 9.0]).unwrap();
    }

    #[test]
    fn lattice_currents_are_deterministic_and_bounded() {
        for kind in [LatticeKind::Flow, LatticeKind::Dag, LatticeKind::Grid] {
            for seed in 0..30 {
                let a = lattice_current(2, 40, kind, seed).unwrap();
                let b = lattice_current(2, 40, kind, seed).unwrap();
                assert_eq!(a.edges(), b.edges());
                assert!(a.len() <= 60, "{kind:?} {seed}: {}", a.len());
                assert!(a.vertices().iter().all(|p| p.as_coords().unwrap().sup_norm() < 3.0));
            }
        }
        let dag = lattice_current(3, 30, LatticeKind::Dag, 5).unwrap();
        assert!(crate::decomp::acyclicity_certificate(&dag).is_some());
    }

    #[test]
    fn comb_truncated_at_four() {
        let comb = Comb::new(3, 16, CombMode::Intrinsic).unwrap();
        let t = comb.current_within(4.0).unwrap();
        // teeth 0..3 reach the sphere; base edges b0b1 and b2b3 are inside
        let base = t.edges().iter().filter(|(s, _)| s.length() == 1.0).count();
        assert_eq!(base, 2);
        let teeth: Vec<f64> = t.edges().iter().filter(|(s, _)| s.length() != 1.0).map(|(s, _)| s.length()).collect();
        let mut lens = teeth.clone();
        lens.sort_by(f64::total_cmp);
        assert_eq!(lens, vec![0.5, 1.5, 2.5, 3.5]);
        assert!((t.mass_total() - 10.0).abs() < 1e-12);
        let g = comb.graph();
        let on = |n: &str| Point::Graph(crate::geometry::Locus::Vertex(g.vertex(n).unwrap()));
        // the geodesic distance from the bottom of tooth 0 to the middle of tooth 2
        let space = comb.space();
        assert_eq!(space.distance(&on("b0"), &on("b2")).unwrap(), 2.0);
    }

    #[test]
    fn embedded_comb_preserves_norms() {
        let comb = Comb::new(2, 8, CombMode::Embed).unwrap();
        let emb = comb.embedding().unwrap();
        let g = comb.graph();
        for v in 0..g.vertex_count() {
            assert_eq!(emb.images[v].sup_norm(), g.dist(g.base(), v));
            for u in 0..g.vertex_count() {
                assert!((emb.images[v].sup_dist(&emb.images[u]) - g.dist(u, v)).abs() <= 1e-12);
            }
        }
        let t = comb.current_within(5.0).unwrap();
        assert!((t.mass_total() - Comb::new(2, 8, CombMode::Intrinsic).unwrap().current_within(5.0).unwrap().mass_total()).abs() < 1e-12);
    }
}
