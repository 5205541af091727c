//! Decomposition of currents into weighted curves.
//!
//! Finite currents split into a cycle part (closed curves) and an acyclic
//! part (source-to-sink arcs). Locally finite currents are compactified
//! first; the curves of `Ē` are then cut at `x_∞` into curves of `E` whose
//! open ends escape to infinity.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::conformal::{compactify, cut_atoms, CompactifiedCurrent, ConformalProfile, ProfileOptions};
use crate::current::{subcurrent_excess, AnnulusGenerator, AtomMeasure, EdgeCurrent, TAU_W};
use crate::error::{Error, Result};
use crate::flow::{FlowPath, Network};
pub use crate::flow::Step;
use crate::geometry::{AmbientSpace, Point, Region, Segment};
use crate::weight::Weight;

/// Largest support for which `ξ` is computed exactly.
pub const XI_EDGE_CAP: usize = 16;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    /// Depth-first cycle canceling.
    #[default]
    Dfs,
    /// Cycles of near-maximal `ζ`-mass first (small supports only).
    GreedyXi,
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dfs" => Ok(Strategy::Dfs),
            "greedy-xi" => Ok(Strategy::GreedyXi),
            other => Err(Error::Invalid(format!("unknown strategy `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CurveKind {
    Closed,
    Bounded,
    /// Finite limit as `t → 0`, escaping to infinity as `t → 1`.
    BoundedLeft,
    /// Coming from infinity, finite limit as `t → 1`.
    BoundedRight,
    DoublyUnbounded,
}

impl CurveKind {
    pub fn has_left_end(self) -> bool {
        matches!(self, CurveKind::Bounded | CurveKind::BoundedLeft)
    }

    pub fn has_right_end(self) -> bool {
        matches!(self, CurveKind::Bounded | CurveKind::BoundedRight)
    }
}

/// A polygonal curve; for unbounded kinds the open ends are the points
/// where the curve was cut at the truncation sphere.
#[derive(Clone, Debug, PartialEq)]
pub struct Curve {
    pub kind: CurveKind,
    pub segments: Vec<Segment>,
}

impl Curve {
    pub fn vertices(&self) -> Vec<Point> {
        let mut v: Vec<Point> = self.segments.iter().map(Segment::tail).collect();
        if let Some(last) = self.segments.last() {
            v.push(last.head());
        }
        v
    }

    /// `ℓ(γ)`.
    pub fn length(&self) -> f64 {
        self.segments.iter().map(Segment::length).sum()
    }

    pub fn left_end(&self) -> Option<Point> {
        self.kind.has_left_end().then(|| self.segments[0].tail())
    }

    pub fn right_end(&self) -> Option<Point> {
        self.kind.has_right_end().then(|| self.segments[self.segments.len() - 1].head())
    }

    /// No point is visited twice (apart from the closing point of a loop).
    pub fn is_injective(&self) -> bool {
        let mut v = self.vertices();
        if self.kind == CurveKind::Closed {
            v.pop();
        }
        let n = v.len();
        v.sort();
        v.dedup();
        v.len() == n
    }

    /// `∂T_γ`: `+1` at a finite right end, `-1` at a finite left end.
    pub fn boundary(&self) -> AtomMeasure {
        let mut m = AtomMeasure::new();
        if let Some(p) = self.right_end() {
            m.add(p, 1.0);
        }
        if let Some(p) = self.left_end() {
            m.add(p, -1.0);
        }
        m.prune(0.0);
        m
    }

    /// `T_γ` as an edge current.
    pub fn current(&self, space: Arc<AmbientSpace>) -> Result<EdgeCurrent> {
        EdgeCurrent::new(space, self.segments.iter().map(|s| (s.clone(), 1.0)))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Part {
    Cycle,
    Acyclic,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Entry<W> {
    pub curve: Curve,
    pub weight: W,
    /// `n_γ(β)`: how often this curve occurs in its parent curve on `Ē`.
    pub multiplicity: u32,
    pub part: Part,
    /// Index of the parent curve on `Ē` (or of the curve itself for finite runs).
    pub parent: usize,
}

impl<W: Weight> Entry<W> {
    /// `n_γ(β) · w`.
    pub fn total_weight(&self) -> W {
        self.weight.times(&W::from_f64(self.multiplicity as f64))
    }

    /// Weight after reparametrizing closed curves to unit length (`w ℓ`);
    /// other curves keep their weight.
    pub fn unit_weight(&self) -> f64 {
        let w = self.total_weight().to_f64();
        if self.curve.kind == CurveKind::Closed { w * self.curve.length() } else { w }
    }
}

/// The discrete measure `η`: weighted curves plus provenance.
#[derive(Clone, Debug, PartialEq)]
pub struct Decomposition<W> {
    pub entries: Vec<Entry<W>>,
    pub strategy: Strategy,
    pub radius: Option<f64>,
    pub profile: Option<String>,
    /// `ξ` before each greedy extraction (empty for DFS).
    pub xi_trace: Vec<f64>,
}

impl<W: Weight> Decomposition<W> {
    pub fn cycles(&self) -> impl Iterator<Item = &Entry<W>> {
        self.entries.iter().filter(|e| e.part == Part::Cycle)
    }

    pub fn acyclic(&self) -> impl Iterator<Item = &Entry<W>> {
        self.entries.iter().filter(|e| e.part == Part::Acyclic)
    }

    /// `η̄(Θ)` with closed curves normalized to unit length.
    pub fn unit_total(&self) -> f64 {
        self.entries.iter().map(Entry::unit_weight).sum()
    }

    /// `Σ w T_γ` as an edge current.
    pub fn superposition(&self, space: Arc<AmbientSpace>) -> Result<EdgeCurrent> {
        let raw = self.entries.iter().flat_map(|e| {
            let w = e.total_weight().to_f64();
            e.curve.segments.iter().map(move |s| (s.clone(), w))
        });
        EdgeCurrent::new(space, raw)
    }

    pub fn to_f64(&self) -> Decomposition<f64> {
        Decomposition {
            entries: self
                .entries
                .iter()
                .map(|e| Entry {
                    curve: e.curve.clone(),
                    weight: e.weight.to_f64(),
                    multiplicity: e.multiplicity,
                    part: e.part,
                    parent: e.parent,
                })
                .collect(),
            strategy: self.strategy,
            radius: self.radius,
            profile: self.profile.clone(),
            xi_trace: self.xi_trace.clone(),
        }
    }
}

/// `ζ(e) = 2^{-⌈|midpoint_e|⌉}`.
pub fn default_zeta(space: &AmbientSpace, s: &Segment) -> f64 {
    let n = space.norm(&s.midpoint()).unwrap_or(0.0);
    (-n.ceil()).exp2()
}

fn step_zeta_cost(space: &AmbientSpace, step: &Step) -> f64 {
    match step {
        Step::Seg(s) => default_zeta(space, s) * s.length(),
        Step::Leg { point, .. } => (-space.norm(point).unwrap_or(0.0).ceil() - 1.0).exp2(),
    }
}

fn steps_of(t: &EdgeCurrent) -> Vec<(Step, f64)> {
    t.edges().iter().map(|(s, w)| (Step::Seg(s.clone()), *w)).collect()
}

fn weighted<W: Weight>(steps: Vec<(Step, f64)>) -> Vec<(Step, W)> {
    steps.into_iter().map(|(s, w)| (s, W::from_f64(w))).collect()
}

/// `ξ(T) = sup { ∫ ζ d‖C‖ : C ≤ T, ∂C = 0 }`, exact for supports of at most
/// [`XI_EDGE_CAP`] edges.
pub fn xi<W: Weight>(t: &EdgeCurrent, zeta: &dyn Fn(&Segment) -> f64) -> Result<W> {
    if t.len() > XI_EDGE_CAP {
        return Err(Error::OracleScale { edges: t.len(), cap: XI_EDGE_CAP });
    }
    let net = Network::new(weighted::<W>(steps_of(t)));
    let cost: Vec<W> = net
        .arcs
        .iter()
        .map(|a| match &a.step {
            Step::Seg(s) => W::from_f64(zeta(s) * s.length()),
            Step::Leg { .. } => W::zero(),
        })
        .collect();
    Ok(net.max_cost_circulation(&cost).0)
}

struct Engine<W> {
    cycles: Vec<FlowPath<W>>,
    paths: Vec<FlowPath<W>>,
    net: Network<W>,
    xi_trace: Vec<f64>,
}

fn run_engine<W: Weight>(space: &AmbientSpace, steps: Vec<(Step, f64)>, strategy: Strategy) -> Result<Engine<W>> {
    let (net, cycles, xi_trace) = cancel_cycles::<W>(space, steps, strategy)?;
    let mut acyclic = net.clone();
    let paths = acyclic.trace_paths()?;
    Ok(Engine { cycles, paths, net, xi_trace })
}

/// The cycle phase alone: the residual network, the extracted cycles and the ξ trace.
fn cancel_cycles<W: Weight>(
    space: &AmbientSpace,
    steps: Vec<(Step, f64)>,
    strategy: Strategy,
) -> Result<(Network<W>, Vec<FlowPath<W>>, Vec<f64>)> {
    let mut net = Network::new(weighted::<W>(steps));
    let mut xi_trace = Vec::new();
    let cycles = match strategy {
        Strategy::Dfs => net.cancel_cycles_dfs(),
        Strategy::GreedyXi => {
            if net.arcs.len() > XI_EDGE_CAP {
                return Err(Error::OracleScale { edges: net.arcs.len(), cap: XI_EDGE_CAP });
            }
            let cost: Vec<W> = net.arcs.iter().map(|a| W::from_f64(step_zeta_cost(space, &a.step))).collect();
            greedy_cycles(&mut net, &cost, &mut xi_trace)
        }
    };
    Ok((net, cycles, xi_trace))
}

fn greedy_cycles<W: Weight>(net: &mut Network<W>, cost: &[W], trace: &mut Vec<f64>) -> Vec<FlowPath<W>> {
    let mut out = Vec::new();
    loop {
        let (xi, flow) = net.max_cost_circulation(cost);
        trace.push(xi.to_f64());
        if !xi.is_positive() {
            return out;
        }
        let best = net
            .simple_cycles()
            .into_iter()
            .map(|c| {
                let amount = c.iter().map(|&a| net.arcs[a].res.clone()).reduce(|x, y| x.min_of(&y)).expect("nonempty");
                let gain = c.iter().fold(W::zero(), |s, &a| s.plus(&cost[a])).times(&amount);
                (gain, amount, c)
            })
            .reduce(|x, y| if y.0 > x.0 { y } else { x });
        match best {
            Some((gain, amount, arcs)) if gain > xi.half() => {
                cancel(net, &arcs, &amount);
                out.push(FlowPath { arcs, weight: amount, closed: true });
            }
            _ => {
                let mut optimal = net.with_residuals(&flow);
                for c in optimal.cancel_cycles_dfs() {
                    cancel(net, &c.arcs, &c.weight);
                    out.push(c);
                }
            }
        }
    }
}

fn cancel<W: Weight>(net: &mut Network<W>, arcs: &[usize], amount: &W) {
    for &a in arcs {
        let arc = &mut net.arcs[a];
        arc.res = arc.res.minus(amount).settle(&arc.cap);
    }
}

fn path_steps<W>(net: &Network<W>, p: &FlowPath<W>) -> Vec<Step> {
    p.arcs.iter().map(|&a| net.arcs[a].step.clone()).collect()
}

fn plain_segments(steps: &[Step]) -> Vec<Segment> {
    steps
        .iter()
        .filter_map(|s| match s {
            Step::Seg(seg) => Some(seg.clone()),
            Step::Leg { .. } => None,
        })
        .collect()
}

/// The result of splitting `T` into `C + A`.
#[derive(Clone, Debug)]
pub struct CycleSplit<W> {
    pub cycles: Vec<(Curve, W)>,
    pub c: EdgeCurrent,
    pub a: EdgeCurrent,
    pub xi_trace: Vec<f64>,
    /// A topological order of the support of `A`.
    pub certificate: Vec<Point>,
}

/// Splits `T` into a cycle `C` (a sum of closed curves) and an acyclic rest.
pub fn split_cycles<W: Weight>(t: &EdgeCurrent, strategy: Strategy) -> Result<CycleSplit<W>> {
    let (net, found, xi_trace) = cancel_cycles::<W>(t.space(), steps_of(t), strategy)?;
    let cycles: Vec<(Curve, W)> = found
        .iter()
        .map(|c| (Curve { kind: CurveKind::Closed, segments: plain_segments(&path_steps(&net, c)) }, c.weight.clone()))
        .collect();
    let c = EdgeCurrent::new(
        t.space().clone(),
        cycles.iter().flat_map(|(curve, w)| curve.segments.iter().map(move |s| (s.clone(), w.to_f64()))),
    )?;
    let a = EdgeCurrent::new(
        t.space().clone(),
        net.arcs.iter().filter_map(|arc| match &arc.step {
            Step::Seg(s) if arc.res.is_positive() => Some((s.clone(), arc.res.to_f64())),
            _ => None,
        }),
    )?;
    let order = net.topological_order().ok_or_else(|| Error::Contract("cycle part left a cycle behind".into()))?;
    let certificate = order.into_iter().map(|i| net.nodes[i].clone()).collect();
    Ok(CycleSplit { cycles, c, a, xi_trace, certificate })
}

/// A topological order of the support of `A`, or `None` if `A` has a cycle.
pub fn acyclicity_certificate(a: &EdgeCurrent) -> Option<Vec<Point>> {
    let net = Network::new(steps_of(a));
    let order = net.topological_order()?;
    Some(order.into_iter().map(|i| net.nodes[i].clone()).collect())
}

/// Source-to-sink arcs of an acyclic current.
pub fn path_decompose<W: Weight>(a: &EdgeCurrent) -> Result<Decomposition<W>> {
    let mut net = Network::new(weighted::<W>(steps_of(a)));
    let snapshot = net.clone();
    let paths = net.trace_paths()?;
    let entries = paths
        .iter()
        .enumerate()
        .map(|(i, p)| Entry {
            curve: Curve { kind: CurveKind::Bounded, segments: plain_segments(&path_steps(&snapshot, p)) },
            weight: p.weight.clone(),
            multiplicity: 1,
            part: Part::Acyclic,
            parent: i,
        })
        .collect();
    Ok(Decomposition { entries, strategy: Strategy::Dfs, radius: None, profile: None, xi_trace: Vec::new() })
}

/// Closed curves for the cycle part, arcs for the acyclic part.
pub fn decompose_finite<W: Weight>(t: &EdgeCurrent, strategy: Strategy) -> Result<Decomposition<W>> {
    let engine = run_engine::<W>(t.space(), steps_of(t), strategy)?;
    let mut entries = Vec::with_capacity(engine.cycles.len() + engine.paths.len());
    for (kind, part, list) in [
        (CurveKind::Closed, Part::Cycle, &engine.cycles),
        (CurveKind::Bounded, Part::Acyclic, &engine.paths),
    ] {
        for p in list {
            let parent = entries.len();
            entries.push(Entry {
                curve: Curve { kind, segments: plain_segments(&path_steps(&engine.net, p)) },
                weight: p.weight.clone(),
                multiplicity: 1,
                part,
                parent,
            });
        }
    }
    Ok(Decomposition { entries, strategy, radius: None, profile: None, xi_trace: engine.xi_trace })
}

/// Splits a curve on `Ē` into its maximal subcurves avoiding `x_∞`, with
/// multiplicities `n_γ(β)`.
pub fn split_at_infinity(steps: &[Step], closed: bool) -> Vec<(Curve, u32)> {
    let touches = steps.iter().any(|s| matches!(s, Step::Leg { .. }));
    if !touches {
        let kind = if closed { CurveKind::Closed } else { CurveKind::Bounded };
        return vec![(Curve { kind, segments: plain_segments(steps) }, 1)];
    }
    let mut seq: Vec<Step> = steps.to_vec();
    if closed {
        let start = seq.iter().position(|s| s.tail().is_infinity()).expect("a closed curve through x_∞ leaves it");
        seq.rotate_left(start);
    }
    let mut runs: Vec<Curve> = Vec::new();
    let mut current: Vec<Segment> = Vec::new();
    let mut from_infinity = false;
    let mut close = |segments: &mut Vec<Segment>, left_inf: bool, right_inf: bool| {
        if segments.is_empty() {
            return;
        }
        let kind = match (left_inf, right_inf) {
            (false, false) => CurveKind::Bounded,
            (false, true) => CurveKind::BoundedLeft,
            (true, false) => CurveKind::BoundedRight,
            (true, true) => CurveKind::DoublyUnbounded,
        };
        runs.push(Curve { kind, segments: std::mem::take(segments) });
    };
    for step in &seq {
        match step {
            Step::Leg { outward: false, .. } => {
                close(&mut current, from_infinity, false);
                from_infinity = true;
            }
            Step::Seg(s) => current.push(s.clone()),
            Step::Leg { outward: true, .. } => {
                close(&mut current, from_infinity, true);
                from_infinity = false;
            }
        }
    }
    close(&mut current, from_infinity, false);
    let mut merged: Vec<(Curve, u32)> = Vec::new();
    for run in runs {
        match merged.iter_mut().find(|(c, _)| *c == run) {
            Some((_, n)) => *n += 1,
            None => merged.push((run, 1)),
        }
    }
    merged
}

/// A curve on `Ē`.
#[derive(Clone, Debug)]
pub struct CompactCurve<W> {
    pub steps: Vec<Step>,
    pub weight: W,
    pub part: Part,
    pub closed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Identity {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub defect: f64,
    pub tolerance: f64,
    /// `true` for `lhs ≤ rhs`, `false` for `lhs = rhs`.
    pub bound: bool,
    pub pass: bool,
}

impl Identity {
    pub fn equality(name: &str, lhs: f64, rhs: f64, tolerance: f64) -> Self {
        let defect = (lhs - rhs).abs();
        Identity { name: name.into(), lhs, rhs, defect, tolerance, bound: false, pass: defect <= tolerance }
    }

    /// Passes when `defect` (an already computed discrepancy) is within tolerance.
    pub fn defect(name: &str, defect: f64, tolerance: f64) -> Self {
        Identity { name: name.into(), lhs: defect, rhs: 0.0, defect, tolerance, bound: false, pass: defect <= tolerance }
    }

    pub fn bound(name: &str, lhs: f64, rhs: f64, tolerance: f64) -> Self {
        let defect = (lhs - rhs).max(0.0);
        Identity { name: name.into(), lhs, rhs, defect, tolerance, bound: true, pass: defect <= tolerance }
    }
}

/// Endpoint pushforwards of the acyclic part.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Transport {
    /// `e_{0#}(η_B + η_BL)`.
    pub e0: AtomMeasure,
    /// `e_{1#}(η_B + η_BR)`.
    pub e1: AtomMeasure,
    /// Weight of curves escaping to infinity (bounded-left).
    pub mass_to_infinity: f64,
    /// Weight of curves arriving from infinity (bounded-right).
    pub mass_from_infinity: f64,
}

pub fn transport_endpoints<W: Weight>(d: &Decomposition<W>) -> Transport {
    let mut t = Transport::default();
    for e in d.acyclic() {
        let w = e.total_weight().to_f64();
        if let Some(p) = e.curve.left_end() {
            t.e0.add(p, w);
        }
        if let Some(p) = e.curve.right_end() {
            t.e1.add(p, w);
        }
        match e.curve.kind {
            CurveKind::BoundedLeft => t.mass_to_infinity += w,
            CurveKind::BoundedRight => t.mass_from_infinity += w,
            _ => {}
        }
    }
    t.e0.prune(0.0);
    t.e1.prune(0.0);
    t
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalOptions {
    pub r_max: f64,
    /// Identities are checked on `B̄_{R_max - margin}`.
    pub margin: f64,
    pub strategy: Strategy,
    pub profile: ProfileOptions,
}

impl LocalOptions {
    pub fn new(r_max: f64) -> Self {
        LocalOptions { r_max, margin: 1.0, strategy: Strategy::Dfs, profile: ProfileOptions::default() }
    }

    pub fn report_region(&self) -> Region {
        Region::Ball(self.r_max - self.margin)
    }
}

/// Values of the cycle part that are reported without being asserted.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CyclePartValues {
    /// `Σ w ℓ_δ` over cycles on `Ē`.
    pub unit_weight_delta: f64,
    /// `‖C̄‖_δ(Ē)` of the cycle part as a current.
    pub cycle_mass_delta: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LocalReport {
    pub region: Region,
    pub identities: Vec<Identity>,
    pub transport: Transport,
    pub cycle_part: CyclePartValues,
}

impl LocalReport {
    pub fn all_pass(&self) -> bool {
        self.identities.iter().all(|i| i.pass)
    }

    pub fn get(&self, name: &str) -> Option<&Identity> {
        self.identities.iter().find(|i| i.name == name)
    }
}

#[derive(Clone, Debug)]
pub struct LocalDecomposition<W> {
    pub decomposition: Decomposition<W>,
    pub compact: Vec<CompactCurve<W>>,
    pub compactified: CompactifiedCurrent,
    pub report: LocalReport,
}

/// Profile, compactify, decompose on `Ē`, split at `x_∞`, and check the
/// superposition identities on the report region.
pub fn decompose_local<W: Weight>(generator: &dyn AnnulusGenerator, opts: &LocalOptions) -> Result<LocalDecomposition<W>> {
    if !(opts.margin >= 0.0 && opts.margin < opts.r_max) {
        return Err(Error::Invalid(format!("margin {} must lie in [0, R_max)", opts.margin)));
    }
    if !generator.space().is_sup_norm() {
        return Err(Error::NoSinglePointAtInfinity);
    }
    let profile = Arc::new(ConformalProfile::build(generator, opts.r_max, &opts.profile)?);
    let bar = compactify(profile.clone(), generator, opts.r_max)?;
    let space = bar.space().clone();

    let mut steps = steps_of(&bar.core);
    steps.extend(bar.legs.iter().map(|l| (Step::Leg { point: l.point.clone(), outward: l.outward }, l.weight)));
    let engine = run_engine::<W>(&space, steps, opts.strategy)?;

    let mut compact = Vec::new();
    for (part, list) in [(Part::Cycle, &engine.cycles), (Part::Acyclic, &engine.paths)] {
        for p in list {
            compact.push(CompactCurve { steps: path_steps(&engine.net, p), weight: p.weight.clone(), part, closed: p.closed });
        }
    }
    let mut entries = Vec::new();
    for (i, c) in compact.iter().enumerate() {
        for (curve, n) in split_at_infinity(&c.steps, c.closed) {
            entries.push(Entry { curve, weight: c.weight.clone(), multiplicity: n, part: c.part, parent: i });
        }
    }
    let decomposition = Decomposition {
        entries,
        strategy: opts.strategy,
        radius: Some(opts.r_max),
        profile: Some(profile.generator().to_string()),
        xi_trace: engine.xi_trace,
    };
    let report = local_report(&bar, &decomposition, &compact, opts)?;
    Ok(LocalDecomposition { decomposition, compact, compactified: bar, report })
}

fn leg_delta(bar: &CompactifiedCurrent, point: &Point) -> f64 {
    bar.legs.iter().find(|l| l.point == *point).map(|l| l.delta_length).unwrap_or(0.0)
}

fn local_report<W: Weight>(
    bar: &CompactifiedCurrent,
    d: &Decomposition<W>,
    compact: &[CompactCurve<W>],
    opts: &LocalOptions,
) -> Result<LocalReport> {
    let space = bar.space().clone();
    let region = opts.report_region();
    let profile = &bar.profile;
    let tol = TAU_W;

    // reconstruction, restricted to edges meeting the region
    let sum = d.superposition(space.clone())?;
    let diff = sum.sub(&bar.core)?;
    let recon = diff
        .edges()
        .iter()
        .filter(|(s, _)| !region.intervals(&space, s).is_empty())
        .map(|(_, w)| *w)
        .fold(0.0, f64::max);

    let mut mass_d = 0.0;
    let mut mass_delta = 0.0;
    for e in &d.entries {
        let w = e.total_weight().to_f64();
        for s in &e.curve.segments {
            let iv = region.intervals(&space, s);
            mass_d += w * s.length() * iv.iter().map(|(a, b)| b - a).sum::<f64>();
            mass_delta += w * profile.delta_length_on(&space, s, &iv);
        }
    }
    let core_mass = bar.core.mass_on(region);
    let core_mass_delta = profile.mass_delta(&bar.core, region);

    let boundary = bar.core.boundary().restrict(&space, region);
    let mut signed = AtomMeasure::new();
    let mut unsigned = AtomMeasure::new();
    for e in d.acyclic() {
        let w = e.total_weight().to_f64();
        for (p, v) in e.curve.boundary().iter() {
            if region.contains(&space, p) {
                signed.add(p.clone(), w * v);
                unsigned.add(p.clone(), w * v.abs());
            }
        }
    }
    let abs_boundary = AtomMeasure::from_atoms(boundary.iter().map(|(p, v)| (p.clone(), v.abs())));
    let boundary_defect = signed.max_abs_diff(&boundary).max(unsigned.max_abs_diff(&abs_boundary));

    // Ē level
    let mut ps_lhs = 0.0;
    let mut cycle_delta = 0.0;
    for c in compact {
        let w = c.weight.to_f64();
        match c.part {
            Part::Cycle => {
                let len: f64 = c
                    .steps
                    .iter()
                    .map(|s| match s {
                        Step::Seg(seg) => profile.delta_length(&space, seg),
                        Step::Leg { point, .. } => leg_delta(bar, point),
                    })
                    .sum();
                ps_lhs += w * len;
                cycle_delta += w * len;
            }
            Part::Acyclic => ps_lhs += w,
        }
    }
    let ps_rhs = bar.mass_delta_total() + bar.boundary_mass();
    let inner_boundary = bar.boundary_in_e().total_variation();

    let transport = transport_endpoints(d);
    let minus = boundary.negative_part();
    let plus = boundary.positive_part();
    let e0 = transport.e0.restrict(&space, region);
    let e1 = transport.e1.restrict(&space, region);

    let identities = vec![
        Identity::defect("reconstruction", recon, tol),
        Identity::equality("mass", mass_d, core_mass, tol * core_mass.max(1.0)),
        Identity::equality("mass-delta", mass_delta, core_mass_delta, tol * core_mass_delta.max(1.0)),
        Identity::defect("boundary", boundary_defect, tol),
        Identity::bound("ps-bound", ps_lhs, ps_rhs, tol * ps_rhs.max(1.0)),
        Identity::bound("boundary-bound", bar.boundary_mass(), 2.0 * inner_boundary, tol),
        Identity::defect("transport-e0", e0.max_abs_diff(&minus), tol),
        Identity::defect("transport-e1", e1.max_abs_diff(&plus), tol),
    ];
    let cycle_part = CyclePartValues { unit_weight_delta: cycle_delta, cycle_mass_delta: cycle_mass_delta(bar, compact)? };
    Ok(LocalReport { region, identities, transport, cycle_part })
}

fn cycle_mass_delta<W: Weight>(bar: &CompactifiedCurrent, compact: &[CompactCurve<W>]) -> Result<f64> {
    let space = bar.space().clone();
    let mut legs: BTreeMap<Point, f64> = BTreeMap::new();
    let mut raw = Vec::new();
    for c in compact.iter().filter(|c| c.part == Part::Cycle) {
        let w = c.weight.to_f64();
        for s in &c.steps {
            match s {
                Step::Seg(seg) => raw.push((seg.clone(), w)),
                Step::Leg { point, outward } => *legs.entry(point.clone()).or_insert(0.0) += if *outward { w } else { -w },
            }
        }
    }
    let core = EdgeCurrent::new(space, raw)?;
    let leg_mass: f64 = legs.iter().map(|(p, w)| w.abs() * leg_delta(bar, p)).sum();
    Ok(bar.profile.mass_delta(&core, Region::All) + leg_mass)
}

/// The chain `S_0, ..., S_M` of the finite-boundary splitting.
#[derive(Clone, Debug)]
pub struct BoundarySplit {
    pub radius: f64,
    /// Requested and effective `M`.
    pub requested: usize,
    pub levels: usize,
    /// `T_R`.
    pub truncated: EdgeCurrent,
    /// `S_0, S_1, ..., S_M`.
    pub parts: Vec<EdgeCurrent>,
    /// What is left after `S_M` (curves with no endpoint in `B_M`).
    pub remainder: EdgeCurrent,
    pub checks: Vec<Identity>,
}

impl BoundarySplit {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn clipped(&self) -> bool {
        self.levels < self.requested
    }
}

/// Splits `T_R` into a boundaryless part and parts `S_m` made of curves
/// with an endpoint in `B_m`; `M` is clipped to `⌊R - margin⌋`.
pub fn boundary_split(generator: &dyn AnnulusGenerator, r_max: f64, m: usize, margin: f64) -> Result<BoundarySplit> {
    let space = generator.space();
    let t = generator.current_within(r_max)?;
    let levels = m.min((r_max - margin).floor().max(0.0) as usize);
    let region = Region::Ball(r_max - margin);

    // S_0: cycles of T̄, so lines through the ball count as cycles
    let mut steps = steps_of(&t);
    for (p, a) in cut_atoms(&t, r_max).iter() {
        steps.push((Step::Leg { point: p.clone(), outward: a > 0.0 }, a.abs()));
    }
    let mut net: Network<f64> = Network::new(steps);
    let cycles = net.cancel_cycles_dfs();
    let snapshot_net = net.clone();
    let s0 = EdgeCurrent::new(
        space.clone(),
        cycles.iter().flat_map(|c| c.arcs.iter().filter_map(|&a| match &snapshot_net.arcs[a].step {
            Step::Seg(s) => Some((s.clone(), c.weight)),
            Step::Leg { .. } => None,
        })),
    )?;
    let a = EdgeCurrent::new(
        space.clone(),
        net.arcs.iter().filter_map(|arc| match &arc.step {
            Step::Seg(s) if arc.res > 0.0 => Some((s.clone(), arc.res)),
            _ => None,
        }),
    )?;

    let mut enet: Network<f64> = Network::new(steps_of(&a));
    let trace_net = enet.clone();
    let mut paths: Vec<(Vec<Segment>, f64)> = enet
        .trace_paths()?
        .iter()
        .map(|p| (plain_segments(&path_steps(&trace_net, p)), p.weight))
        .collect();

    let current_of = |ps: &[(Vec<Segment>, f64)]| -> Result<EdgeCurrent> {
        EdgeCurrent::new(space.clone(), ps.iter().flat_map(|(segs, w)| segs.iter().map(move |s| (s.clone(), *w))))
    };
    let endpoint_boundary = |ps: &[(Vec<Segment>, f64)]| -> AtomMeasure {
        let mut b = AtomMeasure::new();
        for (segs, w) in ps {
            b.add(segs[0].tail(), -w);
            b.add(segs[segs.len() - 1].head(), *w);
        }
        b
    };

    let mut checks = Vec::new();
    let s0_boundary = s0.boundary().restrict(&space, region).total_variation();
    checks.push(Identity::defect("s0-boundaryless", s0_boundary, TAU_W));

    let mut parts = vec![s0.clone()];
    for level in 1..=levels {
        let radius = level as f64;
        let inside = |p: &Point| space.norm(p).is_ok_and(|n| n < radius);
        let (taken, kept): (Vec<_>, Vec<_>) = paths
            .into_iter()
            .partition(|(segs, _)| inside(&segs[0].tail()) || inside(&segs[segs.len() - 1].head()));
        let tm_paths: Vec<(Vec<Segment>, f64)> = taken.iter().chain(kept.iter()).cloned().collect();
        let tm = current_of(&tm_paths)?;
        let sm = current_of(&taken)?;
        checks.push(Identity::defect(&format!("s{level}-subcurrent"), subcurrent_excess(&sm, &tm)?, TAU_W));
        let (bs, bt) = (sm.boundary(), tm.boundary());
        let mut atom_excess: f64 = 0.0;
        for (p, tv) in bt.iter() {
            let sv = bs.get(p);
            atom_excess = atom_excess.max(sv.abs() + (tv - sv).abs() - tv.abs());
        }
        for (p, sv) in bs.iter() {
            if bt.get(p) == 0.0 {
                atom_excess = atom_excess.max(sv.abs());
            }
        }
        checks.push(Identity::defect(&format!("s{level}-boundary-dominated"), atom_excess, TAU_W));
        let next_boundary = endpoint_boundary(&kept);
        let leftover: f64 = next_boundary.iter().filter(|(p, _)| inside(p)).map(|(_, v)| v.abs()).sum();
        checks.push(Identity::defect(&format!("t{}-no-boundary-in-b{level}", level + 1), leftover, 0.0));
        parts.push(sm);
        paths = kept;
    }
    let remainder = current_of(&paths)?;

    let total = t.mass_on(region);
    let split: f64 = parts.iter().map(|s| s.mass_on(region)).sum();
    checks.push(Identity::equality("double-superposition", split, total, TAU_W * total.max(1.0)));
    let with_rest = split + remainder.mass_on(region);
    checks.push(Identity::equality("mass-with-remainder", with_rest, total, TAU_W * total.max(1.0)));

    Ok(BoundarySplit { radius: r_max, requested: m, levels, truncated: t, parts, remainder, checks })
}
