//! Conformal change of metric `δ = g(|x|) d` and compactification of a
//! locally finite current by a single point at infinity.
//!
//! The profile samples the growth of the current at cut-safe anchor radii
//! `r_1 < ... < r_N = R_max`:
//!
//! * `φ(r) = max{1, ‖T‖(B̄_{r+1}), max_{r_n ≤ r} slope(r_n)}`, where the slope
//!   at an anchor is the exact cut boundary mass `Σ |w|` over crossings;
//! * `φ̃` is piecewise linear through `(r_k, φ(r_{k+1}))`, held constant
//!   after `R_max`, so it dominates `φ` on `[0, R_max]`;
//! * `g(r) = 1 / (φ̃(r) 2^r)` and `G(r) = ∫_r^∞ g`.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::LN_2;
use std::sync::Arc;

use petgraph::algo::dijkstra;
use petgraph::graph::UnGraph;
use serde::{Deserialize, Serialize};

use crate::current::{AnnulusGenerator, AtomMeasure, EdgeCurrent, TAU_W};
use crate::error::{Error, Result};
use crate::geometry::{ball_cut, is_cut_safe, nearest_safe_radius, AmbientSpace, Coords, Point, Region, Segment, CUT_MARGIN};
use crate::quad::adaptive_simpson;

/// Relative tolerance of the per-piece tail integrals.
pub const TAIL_TOL: f64 = 1e-10;
/// Relative tolerance of δ-length quadrature.
pub const LENGTH_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileOptions {
    /// Number of anchor radii; defaults to `4 ⌈R_max⌉`.
    pub n_anchors: Option<usize>,
    /// Constant added to `φ̃` (any nonnegative shift keeps it a majorant).
    pub majorant_shift: f64,
}

impl Default for ProfileOptions {
    fn default() -> Self {
        ProfileOptions { n_anchors: None, majorant_shift: 0.0 }
    }
}

/// `α`, `φ`, `φ̃`, `g` and `G` for one generator.
#[derive(Clone, Debug)]
pub struct ConformalProfile {
    generator: String,
    r_max: f64,
    anchors: Vec<f64>,
    alpha: Vec<f64>,
    slopes: Vec<f64>,
    phi: Vec<f64>,
    majorant_shift: f64,
    knots: Vec<(f64, f64)>,
    /// `∫` of `g` over `[x_k, x_{k+1}]`.
    pieces: Vec<f64>,
    /// `G(x_k)`.
    suffix: Vec<f64>,
}

/// Calls `current_within` at `r`, nudging by multiples of `2^-10` until the
/// radius is cut-safe.
pub fn within_safe(generator: &dyn AnnulusGenerator, r: f64) -> Result<(f64, EdgeCurrent)> {
    let mut last = None;
    for k in 0..256 {
        let radius = r + k as f64 / 1024.0;
        match generator.current_within(radius) {
            Ok(t) => return Ok((radius, t)),
            Err(e @ Error::UnsafeRadius { .. }) => last = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last.expect("at least one attempt"))
}

impl ConformalProfile {
    /// Builds the profile from `T_{R_max+1}`.
    pub fn build(generator: &dyn AnnulusGenerator, r_max: f64, opts: &ProfileOptions) -> Result<Self> {
        if !(r_max > 1.0) {
            return Err(Error::Invalid(format!("R_max must exceed 1, got {r_max}")));
        }
        if !(opts.majorant_shift >= 0.0) {
            return Err(Error::Invalid("majorant shift must be nonnegative".into()));
        }
        let space = generator.space();
        let (outer, big) = within_safe(generator, r_max + 1.0)?;
        let segments: Vec<&Segment> = big.edges().iter().map(|(s, _)| s).collect();
        if !is_cut_safe(&space, segments.iter().copied(), r_max) {
            ball_cut_probe(&big, r_max)?;
        }
        let inner = generator.current_within(r_max)?;
        let restricted = big.restrict_ball(r_max)?;
        if !restricted.approx_eq(&inner, 1e-9) {
            return Err(Error::InconsistentGenerator {
                inner: r_max,
                outer,
                detail: format!("masses {} vs {}", restricted.mass_total(), inner.mass_total()),
            });
        }

        let n = opts.n_anchors.unwrap_or(4 * r_max.ceil() as usize).max(1);
        let mut anchors: Vec<f64> = Vec::with_capacity(n);
        for k in 1..n {
            let target = r_max * k as f64 / n as f64;
            let r = nearest_safe_radius(&space, segments.iter().copied(), target);
            if r > 0.0 && r < r_max && anchors.last().is_none_or(|&prev| r > prev) {
                anchors.push(r);
            }
        }
        anchors.push(r_max);

        let mut alpha = Vec::with_capacity(anchors.len());
        let mut slopes = Vec::with_capacity(anchors.len());
        let mut phi = Vec::with_capacity(anchors.len());
        let mut best_slope: f64 = 0.0;
        for &r in &anchors {
            alpha.push(big.mass_on(Region::Ball(r)));
            let mut slope = 0.0;
            for (s, w) in big.edges() {
                slope += ball_cut(&space, s, r)?.crossings.len() as f64 * w;
            }
            slopes.push(slope);
            best_slope = best_slope.max(slope);
            phi.push(1f64.max(big.mass_on(Region::Ball(r + 1.0))).max(best_slope));
        }

        let shift = opts.majorant_shift;
        let mut knots = Vec::with_capacity(anchors.len() + 1);
        knots.push((0.0, phi[0] + shift));
        for k in 0..anchors.len() {
            let y = phi.get(k + 1).copied().unwrap_or(phi[k]);
            knots.push((anchors[k], y + shift));
        }
        let mut profile = ConformalProfile {
            generator: generator.id(),
            r_max,
            anchors,
            alpha,
            slopes,
            phi,
            majorant_shift: shift,
            knots,
            pieces: Vec::new(),
            suffix: Vec::new(),
        };
        profile.integrate();
        Ok(profile)
    }

    /// The profile with `φ̃ ≡ 1`, so `g(r) = 2^{-r}`.
    pub fn flat(generator: impl Into<String>) -> Self {
        Self::from_knots(generator, vec![(0.0, 1.0)]).expect("valid knots")
    }

    /// A profile given directly by the knots of `φ̃` (held constant after the last).
    pub fn from_knots(generator: impl Into<String>, knots: Vec<(f64, f64)>) -> Result<Self> {
        let ok = !knots.is_empty()
            && knots[0].0 == 0.0
            && knots.iter().all(|(x, y)| x.is_finite() && y.is_finite() && *y >= 1.0)
            && knots.windows(2).all(|w| w[1].0 > w[0].0 && w[1].1 >= w[0].1);
        if !ok {
            return Err(Error::Invalid("φ̃ knots must start at 0, increase in r and be nondecreasing and ≥ 1".into()));
        }
        let r_max = knots.last().map(|k| k.0).unwrap_or(0.0);
        let mut profile = ConformalProfile {
            generator: generator.into(),
            r_max,
            anchors: Vec::new(),
            alpha: Vec::new(),
            slopes: Vec::new(),
            phi: Vec::new(),
            majorant_shift: 0.0,
            knots,
            pieces: Vec::new(),
            suffix: Vec::new(),
        };
        profile.integrate();
        Ok(profile)
    }

    fn integrate(&mut self) {
        let n = self.knots.len();
        self.pieces = (0..n - 1)
            .map(|k| adaptive_simpson(|s| self.g(s), self.knots[k].0, self.knots[k + 1].0, TAIL_TOL))
            .collect();
        let (x_last, c) = self.knots[n - 1];
        let mut suffix = vec![0.0; n];
        suffix[n - 1] = (-x_last).exp2() / (c * LN_2);
        for k in (0..n - 1).rev() {
            suffix[k] = suffix[k + 1] + self.pieces[k];
        }
        self.suffix = suffix;
    }

    pub fn generator(&self) -> &str {
        &self.generator
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    pub fn anchors(&self) -> &[f64] {
        &self.anchors
    }

    /// `‖T‖(B̄_{r_n})` at the anchors.
    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn slopes(&self) -> &[f64] {
        &self.slopes
    }

    /// `φ(r_n)` at the anchors.
    pub fn phi_at_anchors(&self) -> &[f64] {
        &self.phi
    }

    pub fn knots(&self) -> &[(f64, f64)] {
        &self.knots
    }

    /// Index of the knot interval containing `r` (the last index past the end).
    fn piece_of(&self, r: f64) -> usize {
        self.knots.partition_point(|k| k.0 <= r).saturating_sub(1)
    }

    pub fn phi_tilde(&self, r: f64) -> f64 {
        let k = self.piece_of(r);
        let (x0, y0) = self.knots[k];
        match self.knots.get(k + 1) {
            Some(&(x1, y1)) if r > x0 => y0 + (r - x0) / (x1 - x0) * (y1 - y0),
            _ => y0,
        }
    }

    /// `g(r) = 1 / (φ̃(r) 2^r)`.
    pub fn g(&self, r: f64) -> f64 {
        (-r).exp2() / self.phi_tilde(r)
    }

    /// `G(r) = ∫_r^∞ g`.
    pub fn tail_integral(&self, r: f64) -> f64 {
        let r = r.max(0.0);
        let k = self.piece_of(r);
        if k + 1 >= self.knots.len() {
            return (-r).exp2() / (self.knots[k].1 * LN_2);
        }
        if r == self.knots[k].0 {
            return self.suffix[k];
        }
        adaptive_simpson(|s| self.g(s), r, self.knots[k + 1].0, TAIL_TOL) + self.suffix[k + 1]
    }

    /// `∫_lo^hi g`, split at the knots of `φ̃`.
    pub fn integral(&self, lo: f64, hi: f64) -> f64 {
        if hi < lo {
            return -self.integral(hi, lo);
        }
        let (lo, hi) = (lo.max(0.0), hi.max(0.0));
        let mut total = 0.0;
        let mut a = lo;
        let mut k = self.piece_of(lo);
        while a < hi {
            if k + 1 >= self.knots.len() {
                let c = self.knots[k].1;
                total += (-a).exp2() * -(-(hi - a) * LN_2).exp_m1() / (c * LN_2);
                break;
            }
            let end = self.knots[k + 1].0;
            let b = hi.min(end);
            total += if a == self.knots[k].0 && b == end {
                self.pieces[k]
            } else {
                adaptive_simpson(|s| self.g(s), a, b, LENGTH_TOL * 1e-2)
            };
            a = b;
            k += 1;
        }
        total
    }

    /// `ℓ_δ(s) = ∫ g(|s(t)|) |ṡ| dt`.
    pub fn delta_length(&self, space: &AmbientSpace, s: &Segment) -> f64 {
        self.delta_length_on(space, s, &[(0.0, 1.0)])
    }

    /// δ-length of the parts of `s` with local parameter in `intervals`.
    pub fn delta_length_on(&self, space: &AmbientSpace, s: &Segment, intervals: &[(f64, f64)]) -> f64 {
        let speed = s.length();
        let mut total = 0.0;
        for p in s.norm_pieces(space) {
            for &(a, b) in intervals {
                let (s0, s1) = (a.max(p.s0), b.min(p.s1));
                if s1 <= s0 {
                    continue;
                }
                let (n0, n1) = (p.at(s0), p.at(s1));
                let dn = (n1 - n0).abs();
                if dn <= 1e-13 * n0.max(1.0) {
                    total += self.g(0.5 * (n0 + n1)) * speed * (s1 - s0);
                } else {
                    total += speed * (s1 - s0) / dn * self.integral(n0.min(n1), n0.max(n1));
                }
            }
        }
        total
    }

    /// `‖T‖_δ(region) = Σ |w_e| ℓ_δ(segment_e ∩ region)`.
    pub fn mass_delta(&self, t: &EdgeCurrent, region: Region) -> f64 {
        let space = t.space();
        t.edges()
            .iter()
            .map(|(s, w)| w * self.delta_length_on(space, s, &region.intervals(space, s)))
            .sum()
    }

    /// Profile dump for replay.
    pub fn dump(&self) -> ProfileDump {
        let top = self.r_max.ceil().max(1.0) as usize;
        ProfileDump {
            generator: self.generator.clone(),
            r_max: self.r_max,
            anchors: self.anchors.clone(),
            alpha: self.alpha.clone(),
            slopes: self.slopes.clone(),
            phi: self.phi.clone(),
            majorant_shift: self.majorant_shift,
            phi_tilde_knots: self.knots.clone(),
            spot_values: (0..=top)
                .map(|r| {
                    let r = r as f64;
                    SpotValue { r, g: self.g(r), tail: self.tail_integral(r) }
                })
                .collect(),
        }
    }

    /// Rebuilds a profile from its dump; the result agrees bit for bit.
    pub fn replay(dump: &ProfileDump) -> Result<Self> {
        let mut p = Self::from_knots(dump.generator.clone(), dump.phi_tilde_knots.clone())?;
        p.r_max = dump.r_max;
        p.anchors = dump.anchors.clone();
        p.alpha = dump.alpha.clone();
        p.slopes = dump.slopes.clone();
        p.phi = dump.phi.clone();
        p.majorant_shift = dump.majorant_shift;
        Ok(p)
    }

    /// `c(r) = max{1, 2r} / g(r+1)`, with `c(r) δ ≥ d` on `B_r`.
    pub fn comparison_constant(&self, r: f64) -> f64 {
        (2.0 * r).max(1.0) / self.g(r + 1.0)
    }

    /// Bracket `[lower, upper]` for `δ(p, q)` in the sup-norm model.
    ///
    /// The upper value is a shortest path through `p`, `q` and a `mesh^dim`
    /// grid on a box around them; the lower value is `d(p, q) / c(r)`.
    pub fn delta_distance(&self, space: &AmbientSpace, p: &Coords, q: &Coords, mesh: usize) -> Result<DeltaBracket> {
        let AmbientSpace::SupNorm { dim } = space else {
            return Err(Error::NoSinglePointAtInfinity);
        };
        if mesh < 2 {
            return Err(Error::Invalid("mesh must be at least 2".into()));
        }
        if (mesh as f64).powi(*dim as i32) > 40_000.0 {
            return Err(Error::Unsupported(format!("a {mesh}^{dim} grid is too large")));
        }
        let d = p.sup_dist(q);
        if d == 0.0 {
            return Ok(DeltaBracket { lower: 0.0, upper: 0.0 });
        }
        let pad = 0.5 * d;
        let lo: Vec<f64> = (0..*dim).map(|i| p.as_slice()[i].min(q.as_slice()[i]) - pad).collect();
        let hi: Vec<f64> = (0..*dim).map(|i| p.as_slice()[i].max(q.as_slice()[i]) + pad).collect();
        let count = mesh.pow(*dim as u32);
        let coord = |mut idx: usize| -> Coords {
            let v: Vec<f64> = (0..*dim)
                .map(|i| {
                    let k = idx % mesh;
                    idx /= mesh;
                    lo[i] + (hi[i] - lo[i]) * k as f64 / (mesh - 1) as f64
                })
                .collect();
            Coords::new(v).expect("finite grid")
        };
        let mut points: Vec<Coords> = vec![p.clone(), q.clone()];
        points.extend((0..count).map(coord));
        let len = |a: &Coords, b: &Coords| -> f64 {
            Segment::line(a.clone(), b.clone()).map(|s| self.delta_length(space, &s)).unwrap_or(0.0)
        };
        let mut g = UnGraph::<(), f64>::new_undirected();
        let nodes: Vec<_> = points.iter().map(|_| g.add_node(())).collect();
        g.add_edge(nodes[0], nodes[1], len(p, q));
        for i in 0..count {
            for end in 0..2 {
                g.add_edge(nodes[end], nodes[i + 2], len(&points[end], &points[i + 2]));
            }
            for j in i + 1..count {
                let close = (0..*dim).all(|axis| {
                    let (a, b) = ((i / mesh.pow(axis as u32)) % mesh, (j / mesh.pow(axis as u32)) % mesh);
                    a.abs_diff(b) <= 1
                });
                if close {
                    g.add_edge(nodes[i + 2], nodes[j + 2], len(&points[i + 2], &points[j + 2]));
                }
            }
        }
        let upper = dijkstra(&g, nodes[0], Some(nodes[1]), |e| *e.weight())[&nodes[1]];
        let r = p.sup_norm().max(q.sup_norm());
        Ok(DeltaBracket { lower: d / self.comparison_constant(r), upper })
    }
}

fn ball_cut_probe(t: &EdgeCurrent, r: f64) -> Result<()> {
    for (s, _) in t.edges() {
        ball_cut(t.space(), s, r)?;
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DeltaBracket {
    pub lower: f64,
    pub upper: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpotValue {
    pub r: f64,
    pub g: f64,
    pub tail: f64,
}

/// JSON form of a profile.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileDump {
    pub generator: String,
    pub r_max: f64,
    pub anchors: Vec<f64>,
    pub alpha: Vec<f64>,
    pub slopes: Vec<f64>,
    pub phi: Vec<f64>,
    pub majorant_shift: f64,
    pub phi_tilde_knots: Vec<(f64, f64)>,
    pub spot_values: Vec<SpotValue>,
}

/// A virtual radial half-line joining a cut point to `x_∞`.
#[derive(Clone, Debug, PartialEq)]
pub struct InfinityLeg {
    pub point: Point,
    pub weight: f64,
    /// `true` for `p → x_∞`.
    pub outward: bool,
    /// `G(|p|)`.
    pub delta_length: f64,
}

/// `T̄` on `Ē = E ∪ {x_∞}`: the truncation `T_R` plus one leg per cut atom.
#[derive(Clone, Debug)]
pub struct CompactifiedCurrent {
    pub r_max: f64,
    pub core: EdgeCurrent,
    pub legs: Vec<InfinityLeg>,
    /// Net boundary atom of `T̄` at `x_∞`.
    pub infinity_atom: f64,
    pub profile: Arc<ConformalProfile>,
}

impl CompactifiedCurrent {
    pub fn space(&self) -> &Arc<AmbientSpace> {
        self.core.space()
    }

    /// `‖T̄‖_δ(Ē)`.
    pub fn mass_delta_total(&self) -> f64 {
        self.profile.mass_delta(&self.core, Region::All) + self.legs.iter().map(|l| l.weight * l.delta_length).sum::<f64>()
    }

    /// `∂T̄` restricted to `E`.
    pub fn boundary_in_e(&self) -> AtomMeasure {
        let mut b = self.core.boundary();
        for leg in &self.legs {
            b.add(leg.point.clone(), if leg.outward { -leg.weight } else { leg.weight });
        }
        b.prune(TAU_W);
        b
    }

    /// `M_δ(∂T̄)`: total variation on `E` plus the atom at `x_∞`.
    pub fn boundary_mass(&self) -> f64 {
        self.boundary_in_e().total_variation() + self.infinity_atom.abs()
    }
}

/// Reroutes every cut atom of `T_R` to `x_∞` along a radial leg.
pub fn compactify(profile: Arc<ConformalProfile>, generator: &dyn AnnulusGenerator, r_max: f64) -> Result<CompactifiedCurrent> {
    if profile.generator != generator.id() {
        return Err(Error::ProfileMismatch { expected: profile.generator.clone(), found: generator.id() });
    }
    let space = generator.space();
    if !space.is_sup_norm() {
        return Err(Error::NoSinglePointAtInfinity);
    }
    let core = generator.current_within(r_max)?;
    let cut = cut_atoms(&core, r_max);
    let mut legs = Vec::with_capacity(cut.len());
    let mut infinity_atom = 0.0;
    for (p, a) in cut.iter() {
        let delta_length = profile.tail_integral(space.norm(p)?);
        legs.push(InfinityLeg { point: p.clone(), weight: a.abs(), outward: a > 0.0, delta_length });
        infinity_atom += a;
    }
    if infinity_atom.abs() <= TAU_W {
        infinity_atom = 0.0;
    }
    Ok(CompactifiedCurrent { r_max, core, legs, infinity_atom, profile })
}

/// Boundary atoms of `T_R` created by the cut, i.e. those on `∂B_R`.
pub fn cut_atoms(core: &EdgeCurrent, r: f64) -> AtomMeasure {
    let tol = 0.5 * CUT_MARGIN * r.max(1.0);
    let space = core.space();
    let mut atoms = core.boundary();
    let keep: BTreeSet<Point> = atoms
        .iter()
        .filter(|(p, _)| space.norm(p).is_ok_and(|n| (n - r).abs() <= tol))
        .map(|(p, _)| p.clone())
        .collect();
    atoms = AtomMeasure::from_atoms(atoms.iter().filter(|(p, _)| keep.contains(*p)).map(|(p, v)| (p.clone(), v)));
    atoms
}

/// `φ̃`, `g` and `G` sampled on a grid, for plotting.
pub fn g_profile_rows(profile: &ConformalProfile, step: f64) -> Vec<BTreeMap<&'static str, f64>> {
    let mut rows = Vec::new();
    let mut r = 0.0;
    while r <= profile.r_max + 1e-12 {
        let mut row = BTreeMap::new();
        row.insert("r", r);
        row.insert("phi_tilde", profile.phi_tilde(r));
        row.insert("g", profile.g(r));
        row.insert("tail", profile.tail_integral(r));
        rows.push(row);
        r += step;
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::current::FiniteGenerator;
    use crate::quad::trapezoid;

    fn c(v: &[f64]) -> Coords {
        Coords::new(v.to_vec()).unwrap()
    }

    fn line(a: &[f64], b: &[f64]) -> Segment {
        Segment::line(c(a), c(b)).unwrap()
    }

    /// Unit ray along the first axis with vertices at 0 and the half-integers.
    struct Ray;

    impl AnnulusGenerator for Ray {
        fn id(&self) -> String {
            "ray".into()
        }
        fn space(&self) -> Arc<AmbientSpace> {
            AmbientSpace::sup_norm(2)
        }
        fn current_within(&self, r: f64) -> Result<EdgeCurrent> {
            let n = r.ceil() as usize + 1;
            let stops: Vec<f64> = std::iter::once(0.0).chain((0..n).map(|k| k as f64 + 0.5)).collect();
            let edges = stops.windows(2).map(|w| (line(&[w[0], 0.0], &[w[1], 0.0]), 1.0));
            EdgeCurrent::new(self.space(), edges)?.restrict_ball(r)
        }
    }

    #[test]
    fn flat_tail_integrals() {
        let p = ConformalProfile::flat("x");
        assert!((p.tail_integral(0.0) - 1.0 / LN_2).abs() < 1e-12);
        assert!((p.tail_integral(1.0) - 0.5 / LN_2).abs() < 1e-12);
        let mut prev = f64::INFINITY;
        for k in 0..40 {
            let v = p.tail_integral(k as f64 * 0.75);
            assert!(v < prev && v > 0.0);
            prev = v;
        }
    }

    #[test]
    fn ray_profile_matches_hand_computation() {
        let p = ConformalProfile::build(&Ray, 6.25, &ProfileOptions::default()).unwrap();
        for ((&r, &a), (&s, &f)) in p.anchors().iter().zip(p.alpha()).zip(p.slopes().iter().zip(p.phi_at_anchors())) {
            assert!((a - r).abs() < 1e-12, "alpha({r}) = {a}");
            assert_eq!(s, 1.0);
            assert!((f - (r + 1.0)).abs() < 1e-12);
        }
        for r in [0.0, 0.3, 2.0, 6.25] {
            assert!(p.phi_tilde(r) >= r + 1.0 - 1e-12);
            assert!((p.g(r) - 1.0 / (p.phi_tilde(r) * r.exp2())).abs() < 1e-15);
        }
    }

    #[test]
    fn small_mass_profile_is_flat() {
        let space = AmbientSpace::sup_norm(2);
        let t = EdgeCurrent::new(space, vec![(line(&[0.25, 0.0], &[0.75, 0.0]), 1.0)]).unwrap();
        let g = FiniteGenerator { name: "small".into(), current: t };
        let p = ConformalProfile::build(&g, 4.0, &ProfileOptions::default()).unwrap();
        for r in [0.0, 1.0, 2.5, 4.0, 9.0] {
            assert_eq!(p.phi_tilde(r), 1.0);
            assert_eq!(p.g(r), (-r).exp2());
        }
        let empty = FiniteGenerator { name: "empty".into(), current: EdgeCurrent::empty(AmbientSpace::sup_norm(2)) };
        let p = ConformalProfile::build(&empty, 3.0, &ProfileOptions::default()).unwrap();
        assert_eq!(p.g(1.5), (-1.5f64).exp2());
    }

    #[test]
    fn length_formula_analytic_cases() {
        let p = ConformalProfile::flat("x");
        let space = AmbientSpace::SupNorm { dim: 2 };
        let radial = p.delta_length(&space, &line(&[1.0, 0.0], &[2.0, 0.0]));
        assert!((radial - 0.25 / LN_2).abs() <= 1e-8 * radial);
        let hug = p.delta_length(&space, &line(&[2.0, 0.0], &[2.0, 2.0]));
        assert!((hug - 0.5).abs() <= 1e-12);
        let far = line(&[30.0, 0.0], &[30.0, 5.0]);
        assert!(p.delta_length(&space, &far) < (-29f64).exp2() * far.length());
    }

    #[test]
    fn delta_length_against_trapezoid() {
        let p = ConformalProfile::from_knots("k", vec![(0.0, 1.0), (1.5, 3.0), (4.0, 3.5), (7.0, 9.0)]).unwrap();
        let space = AmbientSpace::SupNorm { dim: 3 };
        let (a, b) = ([-3.0, 1.0, 0.5], [4.0, -2.0, 6.0]);
        let seg = line(&a, &b);
        let norm = |t: f64| (0..3).fold(0.0f64, |m, i| m.max((a[i] + t * (b[i] - a[i])).abs()));
        let reference = trapezoid(|t| p.g(norm(t)) * seg.length(), 0.0, 1.0, 1_000_000);
        let got = p.delta_length(&space, &seg);
        assert!((got - reference).abs() <= 1e-7 * reference, "{got} vs {reference}");
    }

    #[test]
    fn compactify_ray() {
        let profile = Arc::new(ConformalProfile::build(&Ray, 8.0, &ProfileOptions::default()).unwrap());
        let bar = compactify(profile.clone(), &Ray, 8.0).unwrap();
        assert_eq!(bar.legs.len(), 1);
        let leg = &bar.legs[0];
        assert_eq!(leg.point, Point::Coord(c(&[8.0, 0.0])));
        assert!(leg.outward);
        assert_eq!(leg.delta_length, profile.tail_integral(8.0));
        assert_eq!(bar.boundary_in_e(), AtomMeasure::from_atoms([(Point::Coord(c(&[0.0, 0.0])), -1.0)]));
        assert_eq!(bar.infinity_atom, 1.0);
        assert!(bar.boundary_mass() <= 2.0 * 1.0 + 1e-12);
    }

    #[test]
    fn compactify_rejects_foreign_profile_and_intrinsic_space() {
        let profile = Arc::new(ConformalProfile::flat("other"));
        assert!(matches!(compactify(profile, &Ray, 8.0), Err(Error::ProfileMismatch { .. })));
    }

    #[test]
    fn closed_loop_has_no_legs() {
        let space = AmbientSpace::sup_norm(2);
        let sq = [[1.0, 1.0], [2.0, 1.0], [2.0, 2.0], [1.0, 2.0]];
        let edges = (0..4).map(|i| (line(&sq[i], &sq[(i + 1) % 4]), 1.0));
        let g = FiniteGenerator { name: "loop".into(), current: EdgeCurrent::new(space, edges).unwrap() };
        let profile = Arc::new(ConformalProfile::build(&g, 5.0, &ProfileOptions::default()).unwrap());
        let bar = compactify(profile, &g, 5.0).unwrap();
        assert!(bar.legs.is_empty());
        assert!(bar.boundary_in_e().is_empty());
        assert_eq!(bar.infinity_atom, 0.0);
    }

    #[test]
    fn delta_distance_brackets() {
        let p = ConformalProfile::flat("x");
        let space = AmbientSpace::SupNorm { dim: 2 };
        let b = p.delta_distance(&space, &c(&[1.0, 0.0]), &c(&[2.0, 0.0]), 9).unwrap();
        let analytic = 0.25 / LN_2;
        assert!((b.upper - analytic).abs() <= 1e-8);
        assert!(b.lower <= b.upper);
        assert!(b.upper <= 1.0);
        let b = p.delta_distance(&space, &c(&[-1.0, 2.0]), &c(&[2.5, -0.5]), 7).unwrap();
        assert!(b.lower <= b.upper && b.upper <= 3.5);
        assert!(b.upper >= 3.5 / p.comparison_constant(2.5));
    }

    #[test]
    fn dump_replays_bit_exactly() {
        let p = ConformalProfile::build(&Ray, 5.0, &ProfileOptions { n_anchors: Some(7), majorant_shift: 0.5 }).unwrap();
        let text = serde_json::to_string(&p.dump()).unwrap();
        let back: ProfileDump = serde_json::from_str(&text).unwrap();
        let q = ConformalProfile::replay(&back).unwrap();
        assert_eq!(q.dump(), p.dump());
        for r in [0.1, 2.2, 4.9, 7.0] {
            assert_eq!(q.tail_integral(r).to_bits(), p.tail_integral(r).to_bits());
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn knots() -> impl Strategy<Value = Vec<(f64, f64)>> {
            prop::collection::vec((0.1f64..2.0, 0.0f64..3.0), 0..6).prop_map(|steps| {
                let mut out = vec![(0.0, 1.0)];
                for (dx, dy) in steps {
                    let (x, y) = *out.last().unwrap();
                    out.push((x + dx, y + dy));
                }
                out
            })
        }

        proptest! {
            #[test]
            fn g_positive_nonincreasing_and_bounded(k in knots(), r in 0.0f64..12.0, dr in 0.0f64..3.0) {
                let p = ConformalProfile::from_knots("p", k).unwrap();
                prop_assert!(p.g(r) > 0.0);
                prop_assert!(p.g(r) <= (-r).exp2());
                prop_assert!(p.g(r + dr) <= p.g(r));
                prop_assert!(p.phi_tilde(r + dr) >= p.phi_tilde(r));
                prop_assert!(p.tail_integral(r + dr) <= p.tail_integral(r));
                let split = p.integral(r, r + dr) + p.tail_integral(r + dr);
                prop_assert!((split - p.tail_integral(r)).abs() <= 1e-10 * p.tail_integral(r));
            }

            #[test]
            fn bracketing_on_annuli(k in knots(), ax in -6.0f64..6.0, ay in -6.0f64..6.0, bx in -6.0f64..6.0, by in -6.0f64..6.0, r1 in 0.5f64..4.0, dr in 0.5f64..4.0) {
                prop_assume!((ax - bx).abs().max((ay - by).abs()) > 1e-3);
                let p = ConformalProfile::from_knots("p", k).unwrap();
                let space = AmbientSpace::sup_norm(2);
                let t = EdgeCurrent::new(space, vec![(line(&[ax, ay], &[bx, by]), 1.5)]).unwrap();
                let r2 = r1 + dr;
                let ann = Region::Annulus { inner: r1, outer: r2 };
                let (m, md) = (t.mass_on(ann), p.mass_delta(&t, ann));
                prop_assert!(p.g(r2) * m <= md + 1e-9);
                prop_assert!(md <= p.g(r1) * m + 1e-9);
                prop_assert_eq!(m == 0.0, md == 0.0);
            }

            #[test]
            fn metric_comparison(ax in -3.0f64..3.0, ay in -3.0f64..3.0, bx in -3.0f64..3.0, by in -3.0f64..3.0) {
                let p = ConformalProfile::from_knots("p", vec![(0.0, 1.0), (2.0, 4.0)]).unwrap();
                let space = AmbientSpace::SupNorm { dim: 2 };
                let (a, b) = (c(&[ax, ay]), c(&[bx, by]));
                let br = p.delta_distance(&space, &a, &b, 5).unwrap();
                let d = a.sup_dist(&b);
                prop_assert!(br.upper <= d + 1e-12);
                let r = a.sup_norm().max(b.sup_norm());
                prop_assert!(p.comparison_constant(r) * br.upper >= d - 1e-12);
                // local bound on B_ε(z): δ ≤ g(|z| - ε) d, with z = a
                let eps = d + 1e-9;
                let local = p.g((a.sup_norm() - eps).max(0.0)) * d;
                prop_assert!(p.delta_length(&space, &Segment::line(a.clone(), b.clone()).unwrap_or_else(|_| line(&[0.0, 0.0], &[1.0, 0.0]))) <= local + 1e-12 || d == 0.0);
            }
        }
    }
}
