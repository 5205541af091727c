//! Brute-force validators.
//!
//! Everything here is recomputed from the raw edge lists with its own
//! accumulators; nothing goes through the canonicalization of
//! [`EdgeCurrent::new`] or the flow engine of the decomposer.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::conformal::CompactifiedCurrent;
use crate::current::EdgeCurrent;
use crate::decomp::{CompactCurve, CurveKind, Decomposition, Part, Step};
use crate::error::{Error, Result};
use crate::geometry::{AmbientSpace, Point, Region, Segment, SegmentKey};
use crate::weight::Weight;

/// Largest support accepted by [`enumerate_cycles`].
pub const ENUMERATION_CAP: usize = 14;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub defect: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Check {
    fn new<W: Weight>(name: &str, lhs: &W, rhs: &W, defect: W, bound: bool) -> Self {
        let tolerance = W::tolerance();
        let pass = if bound { defect <= tolerance.plus(&tolerance.times(&rhs.magnitude())) } else { defect <= tolerance };
        Check { name: name.into(), lhs: lhs.to_f64(), rhs: rhs.to_f64(), defect: defect.to_f64(), tolerance: tolerance.to_f64(), pass }
    }
}

/// Machine-readable outcome of one verification.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub region: String,
    pub exact: bool,
    pub checks: Vec<Check>,
}

impl OracleReport {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failing(&self) -> Vec<&str> {
        self.checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect()
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

fn region_label(region: Region) -> String {
    match region {
        Region::All => "all".into(),
        Region::Ball(r) => format!("closed-ball {r}"),
        Region::OpenBall(r) => format!("open-ball {r}"),
        Region::Annulus { inner, outer } => format!("annulus {inner} {outer}"),
    }
}

fn max_gap<K: Ord, W: Weight>(a: &BTreeMap<K, W>, b: &BTreeMap<K, W>) -> W {
    let mut worst = W::zero();
    for (k, x) in a {
        let y = b.get(k).cloned().unwrap_or_else(W::zero);
        let d = x.minus(&y).magnitude();
        if d > worst {
            worst = d;
        }
    }
    for (k, y) in b {
        if !a.contains_key(k) && y.magnitude() > worst {
            worst = y.magnitude();
        }
    }
    worst
}

fn bump<K: Ord, W: Weight>(map: &mut BTreeMap<K, W>, k: K, v: &W) {
    let slot = map.entry(k).or_insert_with(W::zero);
    *slot = slot.plus(v);
}

fn fraction_inside(space: &AmbientSpace, region: Region, s: &Segment) -> f64 {
    region.intervals(space, s).iter().map(|(a, b)| b - a).sum()
}

/// Rechecks reconstruction, mass and boundary superposition of `d` against
/// `t` on `region`, plus well-formedness of every curve.
pub fn verify_decomposition<W: Weight>(t: &EdgeCurrent, d: &Decomposition<W>, region: Region) -> OracleReport {
    let space = t.space().as_ref();
    let meets = |s: &Segment| fraction_inside(space, region, s) > 0.0;

    let mut target: BTreeMap<SegmentKey, W> = BTreeMap::new();
    let mut target_abs: BTreeMap<SegmentKey, W> = BTreeMap::new();
    let mut mass_t = W::zero();
    let mut bd_t: BTreeMap<Point, W> = BTreeMap::new();
    for (s, w) in t.edges() {
        let w = W::from_f64(*w);
        if meets(s) {
            let (k, flipped) = s.key();
            let signed = if flipped { W::zero().minus(&w) } else { w.clone() };
            bump(&mut target, k.clone(), &signed);
            bump(&mut target_abs, k, &w.magnitude());
            mass_t = mass_t.plus(&w.magnitude().times(&W::from_f64(s.length() * fraction_inside(space, region, s))));
        }
        for (p, sign) in [(s.head(), 1.0), (s.tail(), -1.0)] {
            if region.contains(space, &p) {
                bump(&mut bd_t, p, &w.times(&W::from_f64(sign)));
            }
        }
    }
    bd_t.retain(|_, v| *v != W::zero());
    let bd_t_abs: BTreeMap<Point, W> = bd_t.iter().map(|(p, v)| (p.clone(), v.magnitude())).collect();

    let mut signed: BTreeMap<SegmentKey, W> = BTreeMap::new();
    let mut unsigned: BTreeMap<SegmentKey, W> = BTreeMap::new();
    let mut mass_d = W::zero();
    let mut bd_d: BTreeMap<Point, W> = BTreeMap::new();
    let mut bd_d_abs: BTreeMap<Point, W> = BTreeMap::new();
    let mut malformed = 0usize;
    for e in &d.entries {
        let w = e.weight.times(&W::from_f64(e.multiplicity as f64));
        if !w.is_positive() || e.multiplicity == 0 || !well_formed(e.curve.kind, &e.curve.segments) {
            malformed += 1;
        }
        for s in &e.curve.segments {
            if !meets(s) {
                continue;
            }
            let (k, flipped) = s.key();
            let v = if flipped { W::zero().minus(&w) } else { w.clone() };
            bump(&mut signed, k.clone(), &v);
            bump(&mut unsigned, k, &w);
            mass_d = mass_d.plus(&w.times(&W::from_f64(s.length() * fraction_inside(space, region, s))));
        }
        if e.part == Part::Acyclic && !e.curve.segments.is_empty() {
            let segs = &e.curve.segments;
            let mut ends = Vec::new();
            if matches!(e.curve.kind, CurveKind::Bounded | CurveKind::BoundedLeft) {
                ends.push((segs[0].tail(), -1.0));
            }
            if matches!(e.curve.kind, CurveKind::Bounded | CurveKind::BoundedRight) {
                ends.push((segs[segs.len() - 1].head(), 1.0));
            }
            for (p, sign) in ends {
                if region.contains(space, &p) {
                    bump(&mut bd_d, p.clone(), &w.times(&W::from_f64(sign)));
                    bump(&mut bd_d_abs, p, &w);
                }
            }
        }
    }
    let recon = max_gap(&signed, &target);
    let no_cancel = max_gap(&unsigned, &target_abs);
    let mass_defect = mass_d.minus(&mass_t).magnitude();
    let bd = max_gap(&bd_d, &bd_t);
    let bd_abs = max_gap(&bd_d_abs, &bd_t_abs);
    let zero = W::zero();
    let count = W::from_f64(malformed as f64);
    OracleReport {
        region: region_label(region),
        exact: W::EXACT,
        checks: vec![
            Check::new("curves-well-formed", &count, &zero, count.clone(), false),
            Check::new("reconstruction", &recon, &zero, recon.clone(), false),
            Check::new("no-cancellation", &no_cancel, &zero, no_cancel.clone(), false),
            Check::new("mass", &mass_d, &mass_t, mass_defect, false),
            Check::new("boundary", &bd, &zero, bd.clone(), false),
            Check::new("boundary-total-variation", &bd_abs, &zero, bd_abs.clone(), false),
        ],
    }
}

fn well_formed(kind: CurveKind, segs: &[Segment]) -> bool {
    if segs.is_empty() {
        return false;
    }
    let chained = segs.windows(2).all(|w| w[0].head() == w[1].tail());
    let closes = segs[0].tail() == segs[segs.len() - 1].head();
    chained && (kind == CurveKind::Closed) == closes
}

/// `η̄(Θ) ≤ M(T) + M(∂T)` with closed curves normalized to unit length.
pub fn ps_bound<W: Weight>(t: &EdgeCurrent, d: &Decomposition<W>) -> Check {
    let mut lhs = W::zero();
    for e in &d.entries {
        let w = e.weight.times(&W::from_f64(e.multiplicity as f64));
        let len: f64 = e.curve.segments.iter().map(Segment::length).sum();
        lhs = lhs.plus(&if e.curve.kind == CurveKind::Closed { w.times(&W::from_f64(len)) } else { w });
    }
    let mut rhs = W::zero();
    let mut bd: BTreeMap<Point, W> = BTreeMap::new();
    for (s, w) in t.edges() {
        let w = W::from_f64(*w);
        rhs = rhs.plus(&w.magnitude().times(&W::from_f64(s.length())));
        bump(&mut bd, s.head(), &w);
        bump(&mut bd, s.tail(), &W::zero().minus(&w));
    }
    for v in bd.values() {
        rhs = rhs.plus(&v.magnitude());
    }
    let defect = if lhs > rhs { lhs.minus(&rhs) } else { W::zero() };
    Check::new("ps-bound", &lhs, &rhs, defect, true)
}

/// Checks the curves on `Ē` against `T̄`: reconstruction including the legs,
/// the bound `Σ_cycles w ℓ_δ + Σ_paths w ≤ M_δ(T̄) + M_δ(∂T̄)`, and
/// `M_δ(∂T̄) ≤ 2 M(∂T_R)` on the interior.
pub fn verify_compactified<W: Weight>(bar: &CompactifiedCurrent, curves: &[CompactCurve<W>]) -> OracleReport {
    let space = bar.core.space().as_ref();
    let profile = &bar.profile;
    #[derive(Clone, PartialEq, Eq, PartialOrd, Ord)]
    enum Key {
        Seg(SegmentKey),
        Leg(Point),
    }
    let mut target: BTreeMap<Key, W> = BTreeMap::new();
    let mut bd: BTreeMap<Point, W> = BTreeMap::new();
    let mut mass_delta = 0.0;
    for (s, w) in bar.core.edges() {
        let (k, flipped) = s.key();
        let w = W::from_f64(*w);
        bump(&mut target, Key::Seg(k), &if flipped { W::zero().minus(&w) } else { w.clone() });
        bump(&mut bd, s.head(), &w);
        bump(&mut bd, s.tail(), &W::zero().minus(&w));
        mass_delta += w.to_f64() * profile.delta_length(space, s);
    }
    let mut leg_len: BTreeMap<Point, f64> = BTreeMap::new();
    for l in &bar.legs {
        let w = W::from_f64(l.weight);
        let signed = if l.outward { w.clone() } else { W::zero().minus(&w) };
        bump(&mut target, Key::Leg(l.point.clone()), &signed);
        bump(&mut bd, Point::Infinity, &signed);
        bump(&mut bd, l.point.clone(), &W::zero().minus(&signed));
        leg_len.insert(l.point.clone(), l.delta_length);
        mass_delta += l.weight * l.delta_length;
    }
    let bd_mass: f64 = bd.values().map(|v| v.to_f64().abs()).sum();

    let mut got: BTreeMap<Key, W> = BTreeMap::new();
    let mut lhs = 0.0;
    let mut broken = 0usize;
    for c in curves {
        let chained = c.steps.windows(2).all(|w| w[0].head() == w[1].tail());
        let closes = c.steps.first().map(Step::tail) == c.steps.last().map(Step::head);
        if !chained || closes != c.closed || !c.weight.is_positive() {
            broken += 1;
        }
        let mut len = 0.0;
        for s in &c.steps {
            match s {
                Step::Seg(seg) => {
                    let (k, flipped) = seg.key();
                    bump(&mut got, Key::Seg(k), &if flipped { W::zero().minus(&c.weight) } else { c.weight.clone() });
                    len += profile.delta_length(space, seg);
                }
                Step::Leg { point, outward } => {
                    let v = if *outward { c.weight.clone() } else { W::zero().minus(&c.weight) };
                    bump(&mut got, Key::Leg(point.clone()), &v);
                    len += leg_len.get(point).copied().unwrap_or(f64::NAN);
                }
            }
        }
        lhs += match c.part {
            Part::Cycle => c.weight.to_f64() * len,
            Part::Acyclic => c.weight.to_f64(),
        };
    }
    let recon = max_gap(&got, &target);
    let rhs = mass_delta + bd_mass;

    // ∂T_R away from the cut sphere
    let inner = Region::OpenBall(bar.r_max * (1.0 - 1e-6));
    let mut bd_e: BTreeMap<Point, f64> = BTreeMap::new();
    for (s, w) in bar.core.edges() {
        for (p, v) in [(s.head(), *w), (s.tail(), -*w)] {
            if inner.contains(space, &p) {
                *bd_e.entry(p).or_insert(0.0) += v;
            }
        }
    }
    let interior: f64 = bd_e.values().map(|v| if v.abs() > W::tolerance().to_f64() { v.abs() } else { 0.0 }).sum();

    let count = W::from_f64(broken as f64);
    let zero = W::zero();
    let ps_defect = (lhs - rhs).max(0.0);
    let bb_defect = (bd_mass - 2.0 * interior).max(0.0);
    OracleReport {
        region: "compactified".into(),
        exact: W::EXACT,
        checks: vec![
            Check::new("curves-well-formed", &count, &zero, count.clone(), false),
            Check::new("reconstruction", &recon, &zero, recon.clone(), false),
            Check::new::<f64>("ps-bound", &lhs, &rhs, ps_defect, true),
            Check::new::<f64>("boundary-bound", &bd_mass, &(2.0 * interior), bb_defect, true),
        ],
    }
}

/// All simple directed cycles of the oriented support, each as a segment
/// list starting at its smallest vertex.
pub fn enumerate_cycles(t: &EdgeCurrent) -> Result<Vec<Vec<Segment>>> {
    if t.len() > ENUMERATION_CAP {
        return Err(Error::OracleScale { edges: t.len(), cap: ENUMERATION_CAP });
    }
    // vertices numbered in point order
    let mut ids: BTreeMap<Point, usize> = t.edges().iter().flat_map(|(s, _)| [(s.tail(), 0), (s.head(), 0)]).collect();
    for (r, v) in ids.values_mut().enumerate() {
        *v = r;
    }
    let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); ids.len()];
    for (e, (s, _)) in t.edges().iter().enumerate() {
        adj[ids[&s.tail()]].push((ids[&s.head()], e));
    }
    let mut out = Vec::new();
    let mut on_path = vec![false; ids.len()];
    for start in 0..ids.len() {
        let mut path = Vec::new();
        walk(&adj, start, start, &mut on_path, &mut path, &mut |cycle: &[usize]| {
            out.push(cycle.iter().map(|&e| t.edges()[e].0.clone()).collect());
        });
    }
    Ok(out)
}

fn walk(adj: &[Vec<(usize, usize)>], start: usize, at: usize, on_path: &mut [bool], path: &mut Vec<usize>, found: &mut dyn FnMut(&[usize])) {
    for &(next, e) in &adj[at] {
        if next == start {
            path.push(e);
            found(path);
            path.pop();
        } else if next > start && !on_path[next] {
            on_path[next] = true;
            path.push(e);
            walk(adj, start, next, on_path, path, found);
            path.pop();
            on_path[next] = false;
        }
    }
}

/// Lower bound on `‖T‖(region)` from the dual formula: the best of
/// `family_size` random box partitions, each contributing
/// `Σ_λ T(f_λ dπ_λ)` with trapezoidal bumps `f_λ` (disjoint supports,
/// so `Σ |f_λ| ≤ 1`) and coordinate functions `π_λ = ±x_i`.
pub fn dual_mass(t: &EdgeCurrent, region: Region, family_size: usize, seed: u64) -> Result<f64> {
    let AmbientSpace::SupNorm { dim } = **t.space() else {
        return Err(Error::Unsupported("dual mass is implemented in the sup-norm model".into()));
    };
    let t = match region {
        Region::All => t.clone(),
        Region::Ball(r) => t.restrict_ball(r)?,
        other => return Err(Error::Unsupported(format!("dual mass on {}", region_label(other)))),
    };
    if t.is_empty() {
        return Ok(0.0);
    }
    let lines: Vec<(Vec<f64>, Vec<f64>, f64)> = t
        .edges()
        .iter()
        .filter_map(|(s, w)| match s {
            Segment::Line { a, b } => Some((a.as_slice().to_vec(), b.as_slice().to_vec(), *w)),
            Segment::Arc { .. } => None,
        })
        .collect();
    let shortest = lines
        .iter()
        .map(|(a, b, _)| (0..dim).fold(0.0f64, |m, i| m.max((a[i] - b[i]).abs())))
        .fold(f64::INFINITY, f64::min);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: f64 = 0.0;
    for _ in 0..family_size.max(1) {
        let h = shortest * rng.gen_range(0.01..0.05);
        let ramp = h * rng.gen_range(0.001..0.01);
        let offset: Vec<f64> = (0..dim).map(|_| rng.gen_range(0.0..h)).collect();
        best = best.max(partition_value(&lines, dim, h, ramp, &offset));
    }
    Ok(best)
}

/// `Σ_cells max_π T(f_cell dπ)` for the grid of side `h`.
fn partition_value(lines: &[(Vec<f64>, Vec<f64>, f64)], dim: usize, h: f64, ramp: f64, offset: &[f64]) -> f64 {
    // per cell: accumulated T(f_cell dx_i) for each axis
    let mut cells: BTreeMap<Vec<i64>, Vec<f64>> = BTreeMap::new();
    const SAMPLES: usize = 32;
    for (a, b, w) in lines {
        // parameters where the segment crosses a cell wall
        let mut cuts = vec![0.0, 1.0];
        for i in 0..dim {
            let (lo, hi) = (a[i].min(b[i]), a[i].max(b[i]));
            if hi == lo {
                continue;
            }
            let mut k = ((lo - offset[i]) / h).ceil();
            while offset[i] + k * h < hi {
                cuts.push((offset[i] + k * h - a[i]) / (b[i] - a[i]));
                k += 1.0;
            }
        }
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        for piece in cuts.windows(2) {
            let (t0, t1) = (piece[0], piece[1]);
            if t1 <= t0 {
                continue;
            }
            let mid: Vec<f64> = (0..dim).map(|i| a[i] + 0.5 * (t0 + t1) * (b[i] - a[i])).collect();
            let cell: Vec<i64> = (0..dim).map(|i| ((mid[i] - offset[i]) / h).floor() as i64).collect();
            let bump_at = |t: f64| -> f64 {
                let mut v = 1.0;
                for i in 0..dim {
                    let x = a[i] + t * (b[i] - a[i]);
                    let lo = offset[i] + cell[i] as f64 * h;
                    v *= ((x - lo).min(lo + h - x) / ramp).clamp(0.0, 1.0);
                }
                v
            };
            let dt = (t1 - t0) / SAMPLES as f64;
            let mut integral = 0.5 * (bump_at(t0) + bump_at(t1));
            for j in 1..SAMPLES {
                integral += bump_at(t0 + j as f64 * dt);
            }
            integral *= dt;
            let slot = cells.entry(cell).or_insert_with(|| vec![0.0; dim]);
            for i in 0..dim {
                slot[i] += w * integral * (b[i] - a[i]);
            }
        }
    }
    cells.values().map(|v| v.iter().fold(0.0f64, |m, x| m.max(x.abs()))).sum()
}

/// Kinds of corruption applied by [`mutate`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mutation {
    ScaleWeight,
    Reverse,
    Drop,
    Duplicate,
    DropSegment,
    PerturbVertex,
}

pub const MUTATIONS: [Mutation; 6] =
    [Mutation::ScaleWeight, Mutation::Reverse, Mutation::Drop, Mutation::Duplicate, Mutation::DropSegment, Mutation::PerturbVertex];

/// A corrupted copy of `d`, touching one entry chosen by `rng`.
pub fn mutate<W: Weight>(d: &Decomposition<W>, kind: Mutation, rng: &mut impl Rng) -> Decomposition<W> {
    let mut out = d.clone();
    if out.entries.is_empty() {
        return out;
    }
    let i = rng.gen_range(0..out.entries.len());
    match kind {
        Mutation::ScaleWeight => {
            let e = &mut out.entries[i];
            e.weight = e.weight.times(&W::from_f64(1.5));
        }
        Mutation::Reverse => {
            let e = &mut out.entries[i];
            e.curve.segments = e.curve.segments.iter().rev().map(Segment::reversed).collect();
            e.curve.kind = match e.curve.kind {
                CurveKind::BoundedLeft => CurveKind::BoundedRight,
                CurveKind::BoundedRight => CurveKind::BoundedLeft,
                k => k,
            };
        }
        Mutation::Drop => {
            out.entries.remove(i);
        }
        Mutation::Duplicate => {
            let e = out.entries[i].clone();
            out.entries.push(e);
        }
        Mutation::DropSegment => {
            // an interior segment, so the chain breaks wherever the curve lies
            let segs = &mut out.entries[i].curve.segments;
            let k = if segs.len() >= 3 { rng.gen_range(1..segs.len() - 1) } else { rng.gen_range(0..segs.len()) };
            segs.remove(k);
        }
        Mutation::PerturbVertex => {
            // moves the tail of a non-first segment, detaching it from its predecessor
            let segs = &mut out.entries[i].curve.segments;
            let k = if segs.len() >= 2 { rng.gen_range(1..segs.len()) } else { 0 };
            if let Segment::Line { a, b } = &segs[k] {
                let mut v = a.as_slice().to_vec();
                v[0] += 0.125;
                if let Ok(c) = crate::geometry::Coords::new(v) {
                    if let Ok(s) = Segment::line(c, b.clone()) {
                        segs[k] = s;
                    }
                }
            }
        }
    }
    out
}
