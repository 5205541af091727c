//! File formats and the end-to-end decompose/verify pipeline.
//!
//! All JSON is produced from structs (never hash maps), so key order is
//! fixed and identical runs give byte-identical files.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use num_rational::BigRational;
use serde::{Deserialize, Serialize};

use crate::conformal::{ProfileDump, ProfileOptions};
use crate::current::{AnnulusGenerator, AtomMeasure, EdgeCurrent, FiniteGenerator};
use crate::decomp::{
    decompose_finite, decompose_local, transport_endpoints, Curve, CurveKind, CyclePartValues, Decomposition, Entry,
    Identity, LocalOptions, Part, Strategy,
};
use crate::error::{Error, Result};
use crate::families::{self, Comb, CombMode, LatticeKind};
use crate::geometry::{AmbientSpace, Locus, Point, Region, Segment, SpaceFile};
use crate::oracle::{ps_bound, verify_compactified, verify_decomposition, Check};
use crate::weight::Weight;

/// A point in a file: sup-norm coordinates, a vertex name, or a point
/// inside a graph edge.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PointFile {
    Coords(Vec<f64>),
    Vertex(String),
    OnEdge { edge: usize, t: f64 },
}

impl PointFile {
    pub fn from_point(space: &AmbientSpace, p: &Point) -> Result<Self> {
        match (space, p) {
            (_, Point::Coord(c)) => Ok(PointFile::Coords(c.as_slice().to_vec())),
            (AmbientSpace::Intrinsic(g), Point::Graph(Locus::Vertex(v))) => Ok(PointFile::Vertex(g.name(*v).to_string())),
            (_, Point::Graph(Locus::OnEdge { edge, t })) => Ok(PointFile::OnEdge { edge: *edge, t: *t }),
            _ => Err(Error::AtInfinity),
        }
    }

    pub fn to_point(&self, space: &AmbientSpace) -> Result<Point> {
        let p = match self {
            PointFile::Coords(v) => Point::coords(v.clone())?,
            PointFile::Vertex(name) => {
                let g = space.graph().ok_or_else(|| Error::Invalid(format!("vertex `{name}` given for a sup-norm space")))?;
                let v = g.vertex(name).ok_or_else(|| Error::Invalid(format!("unknown vertex `{name}`")))?;
                Point::Graph(Locus::Vertex(v))
            }
            PointFile::OnEdge { edge, t } => Point::Graph(Locus::OnEdge { edge: *edge, t: *t }),
        };
        space.check_point(&p)?;
        Ok(p)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub from: PointFile,
    pub to: PointFile,
    pub w: f64,
}

/// A finite current on a space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurrentFile {
    pub space: SpaceFile,
    pub edges: Vec<EdgeRecord>,
}

impl CurrentFile {
    pub fn from_current(t: &EdgeCurrent) -> Result<Self> {
        let space = t.space();
        let edges = t
            .edges()
            .iter()
            .map(|(s, w)| {
                Ok(EdgeRecord { from: PointFile::from_point(space, &s.tail())?, to: PointFile::from_point(space, &s.head())?, w: *w })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(CurrentFile { space: SpaceFile::describe(space), edges })
    }

    pub fn to_current(&self) -> Result<EdgeCurrent> {
        let space = self.space.build()?;
        let raw = self
            .edges
            .iter()
            .map(|e| Ok((Segment::between(&space, &e.from.to_point(&space)?, &e.to.to_point(&space)?)?, e.w)))
            .collect::<Result<Vec<_>>>()?;
        EdgeCurrent::new(space, raw)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Ray,
    Line,
    Chain,
    RandomLocal,
    Comb,
    RandomFlow,
    RandomDag,
    GridFlow,
}

impl Family {
    pub const ALL: [Family; 8] = [
        Family::Ray,
        Family::Line,
        Family::Chain,
        Family::RandomLocal,
        Family::Comb,
        Family::RandomFlow,
        Family::RandomDag,
        Family::GridFlow,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::Ray => "ray",
            Family::Line => "line",
            Family::Chain => "chain",
            Family::RandomLocal => "random-local",
            Family::Comb => "comb",
            Family::RandomFlow => "random-flow",
            Family::RandomDag => "random-dag",
            Family::GridFlow => "grid-flow",
        }
    }

    /// Families whose currents have compact support.
    pub fn is_finite(self) -> bool {
        matches!(self, Family::RandomFlow | Family::RandomDag | Family::GridFlow)
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::Invalid(format!("unknown family `{s}`")))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GenParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    /// Comb: number of U-shaped curves.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub teeth: Option<usize>,
    /// Comb: tooth height.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<CombMode>,
    /// Lattice families: edge budget.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edges: Option<usize>,
}

pub const DEFAULT_TEETH: usize = 3;
pub const DEFAULT_HEIGHT: usize = 64;
pub const DEFAULT_EDGES: usize = 40;

/// A reproducible generator: family, parameters and seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub family: Family,
    #[serde(default)]
    pub params: GenParams,
    #[serde(default)]
    pub seed: u64,
}

impl GeneratorSpec {
    pub fn new(family: Family, seed: u64) -> Self {
        GeneratorSpec { family, params: GenParams::default(), seed }
    }

    pub fn build(&self) -> Result<Box<dyn AnnulusGenerator>> {
        let p = &self.params;
        let dim = p.dim.unwrap_or(2);
        let lattice = |kind: LatticeKind| -> Result<Box<dyn AnnulusGenerator>> {
            let edges = p.edges.unwrap_or(DEFAULT_EDGES);
            let current = families::lattice_current(dim, edges, kind, self.seed)?;
            let name = format!("{}/dim={dim}/edges={edges}/seed={}", self.family, self.seed);
            Ok(Box::new(FiniteGenerator { name, current }))
        };
        Ok(match self.family {
            Family::Ray => Box::new(families::ray(dim)?),
            Family::Line => Box::new(families::line(dim)?),
            Family::Chain => Box::new(families::chain(self.seed)?),
            Family::RandomLocal => Box::new(families::random_local(self.seed)?),
            Family::Comb => Box::new(Comb::new(
                p.teeth.unwrap_or(DEFAULT_TEETH),
                p.height.unwrap_or(DEFAULT_HEIGHT),
                p.mode.unwrap_or(CombMode::Embed),
            )?),
            Family::RandomFlow => lattice(LatticeKind::Flow)?,
            Family::RandomDag => lattice(LatticeKind::Dag)?,
            Family::GridFlow => lattice(LatticeKind::Grid)?,
        })
    }
}

/// Input of `decompose` and `verify`.
#[derive(Clone, Debug, PartialEq)]
pub enum InputFile {
    Spec(GeneratorSpec),
    Current(CurrentFile),
}

impl InputFile {
    pub fn parse(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        if value.get("family").is_some() {
            Ok(InputFile::Spec(serde_json::from_value(value)?))
        } else {
            Ok(InputFile::Current(serde_json::from_value(value)?))
        }
    }

    pub fn generator(&self) -> Result<Box<dyn AnnulusGenerator>> {
        match self {
            InputFile::Spec(s) => s.build(),
            InputFile::Current(c) => Ok(Box::new(FiniteGenerator { name: "current-file".into(), current: c.to_current()? })),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    /// Truncation radius; `None` decomposes a current file as a whole.
    pub r_max: Option<f64>,
    pub margin: f64,
    pub strategy: Strategy,
    pub exact: bool,
    pub n_anchors: Option<usize>,
    pub shift: f64,
}

/// Radius used for generator specs when none is given.
pub const DEFAULT_R_MAX: f64 = 8.0;

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { r_max: None, margin: 1.0, strategy: Strategy::Dfs, exact: false, n_anchors: None, shift: 0.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunMode {
    Finite,
    Local,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub source: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec: Option<GeneratorSpec>,
    pub mode: RunMode,
    pub options: RunOptions,
    pub xi_trace: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveRecord {
    pub part: Part,
    pub kind: CurveKind,
    pub multiplicity: u32,
    pub w: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w_exact: Option<String>,
    pub length: f64,
    pub points: Vec<PointFile>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AtomRecord {
    pub point: PointFile,
    pub value: f64,
}

fn atoms(space: &AmbientSpace, m: &AtomMeasure) -> Result<Vec<AtomRecord>> {
    m.iter().map(|(p, v)| Ok(AtomRecord { point: PointFile::from_point(space, p)?, value: v })).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransportFile {
    pub e0: Vec<AtomRecord>,
    pub e1: Vec<AtomRecord>,
    pub mass_to_infinity: f64,
    pub mass_from_infinity: f64,
}

/// Outcome of one run: decomposer-side identities plus independent oracle checks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub pass: bool,
    pub failing: Vec<String>,
    pub region: String,
    pub exact: bool,
    pub identities: Vec<Identity>,
    pub checks: Vec<Check>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cycle_part: Option<CyclePartValues>,
}

impl RunReport {
    fn new(region: String, exact: bool, identities: Vec<Identity>, checks: Vec<Check>, cycle_part: Option<CyclePartValues>) -> Self {
        let failing: Vec<String> = identities
            .iter()
            .filter(|i| !i.pass)
            .map(|i| format!("identity:{}", i.name))
            .chain(checks.iter().filter(|c| !c.pass).map(|c| format!("oracle:{}", c.name)))
            .collect();
        RunReport { pass: failing.is_empty(), failing, region, exact, identities, checks, cycle_part }
    }
}

/// A decomposition with its report, as written by `decompose`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecompositionFile {
    pub provenance: Provenance,
    pub space: SpaceFile,
    pub cycles: Vec<CurveRecord>,
    pub paths: Vec<CurveRecord>,
    pub rays: Vec<CurveRecord>,
    pub report: RunReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<ProfileDump>,
    pub transport: TransportFile,
    /// `∂T` on the report region.
    pub boundary: Vec<AtomRecord>,
}

impl DecompositionFile {
    pub fn entries(&self) -> impl Iterator<Item = &CurveRecord> {
        self.cycles.iter().chain(&self.paths).chain(&self.rays)
    }

    /// Rebuilds the decomposition; exact weights are read from `w_exact`.
    pub fn decomposition<W: Weight>(&self, space: &Arc<AmbientSpace>) -> Result<Decomposition<W>> {
        let mut entries = Vec::new();
        for (i, r) in self.entries().enumerate() {
            let pts = r.points.iter().map(|p| p.to_point(space)).collect::<Result<Vec<_>>>()?;
            let segments = pts.windows(2).map(|w| Segment::between(space, &w[0], &w[1])).collect::<Result<Vec<_>>>()?;
            let weight = if W::EXACT {
                let text = r.w_exact.as_deref().ok_or_else(|| Error::Invalid("exact verification needs `w_exact` weights".into()))?;
                W::parse_exact(text).ok_or_else(|| Error::Invalid(format!("bad rational `{text}`")))?
            } else {
                W::from_f64(r.w)
            };
            entries.push(Entry { curve: Curve { kind: r.kind, segments }, weight, multiplicity: r.multiplicity, part: r.part, parent: i });
        }
        Ok(Decomposition {
            entries,
            strategy: self.provenance.options.strategy,
            radius: self.provenance.options.r_max,
            profile: self.profile.as_ref().map(|p| p.generator.clone()),
            xi_trace: self.provenance.xi_trace.clone(),
        })
    }
}

fn record<W: Weight>(space: &AmbientSpace, e: &Entry<W>) -> Result<CurveRecord> {
    Ok(CurveRecord {
        part: e.part,
        kind: e.curve.kind,
        multiplicity: e.multiplicity,
        w: e.weight.to_f64(),
        w_exact: e.weight.exact_text(),
        length: e.curve.length(),
        points: e.curve.vertices().iter().map(|p| PointFile::from_point(space, p)).collect::<Result<Vec<_>>>()?,
    })
}

fn is_ray(kind: CurveKind) -> bool {
    !matches!(kind, CurveKind::Closed | CurveKind::Bounded)
}

fn region_of(mode: RunMode, opts: &RunOptions) -> Region {
    match (mode, opts.r_max) {
        (RunMode::Local, Some(r)) => Region::Ball(r - opts.margin),
        _ => Region::All,
    }
}

fn oracle_checks<W: Weight>(mode: RunMode, t: &EdgeCurrent, d: &Decomposition<W>, region: Region) -> (String, Vec<Check>) {
    let report = verify_decomposition(t, d, region);
    let mut checks = report.checks;
    if mode == RunMode::Finite {
        checks.push(ps_bound(t, d));
    }
    (report.region, checks)
}

fn transport_checks<W: Weight>(space: &AmbientSpace, t: &EdgeCurrent, d: &Decomposition<W>, region: Region) -> Vec<Identity> {
    let tol = W::tolerance().to_f64();
    let tr = transport_endpoints(d);
    let boundary = t.boundary().restrict(space, region);
    vec![
        Identity::defect("transport-e0", tr.e0.restrict(space, region).max_abs_diff(&boundary.negative_part()), tol),
        Identity::defect("transport-e1", tr.e1.restrict(space, region).max_abs_diff(&boundary.positive_part()), tol),
    ]
}

fn run<W: Weight>(input: &InputFile, opts: &RunOptions) -> Result<DecompositionFile> {
    let generator = input.generator()?;
    let space = generator.space();
    let (mode, opts) = match (input, opts.r_max) {
        (InputFile::Current(_), None) => (RunMode::Finite, opts.clone()),
        (_, r) => (RunMode::Local, RunOptions { r_max: Some(r.unwrap_or(DEFAULT_R_MAX)), ..opts.clone() }),
    };
    let region = region_of(mode, &opts);
    let (t, d, identities, extra, profile, cycle_part) = match mode {
        RunMode::Finite => {
            let t = match input {
                InputFile::Current(c) => c.to_current()?,
                InputFile::Spec(_) => unreachable!("specs always run in local mode"),
            };
            let d = decompose_finite::<W>(&t, opts.strategy)?;
            let identities = transport_checks(&space, &t, &d, region);
            (t, d, identities, Vec::new(), None, None)
        }
        RunMode::Local => {
            let r_max = opts.r_max.expect("set above");
            let local = LocalOptions {
                r_max,
                margin: opts.margin,
                strategy: opts.strategy,
                profile: ProfileOptions { n_anchors: opts.n_anchors, majorant_shift: opts.shift },
            };
            let ld = decompose_local::<W>(generator.as_ref(), &local)?;
            let t = generator.current_within(r_max)?;
            let extra = verify_compactified(&ld.compactified, &ld.compact)
                .checks
                .into_iter()
                .map(|c| Check { name: format!("compactified-{}", c.name), ..c })
                .collect();
            (t, ld.decomposition, ld.report.identities, extra, Some(ld.compactified.profile.dump()), Some(ld.report.cycle_part))
        }
    };
    let (label, mut checks) = oracle_checks(mode, &t, &d, region);
    checks.extend(extra);

    let mut cycles = Vec::new();
    let mut paths = Vec::new();
    let mut rays = Vec::new();
    for e in &d.entries {
        let rec = record(&space, e)?;
        if is_ray(e.curve.kind) {
            rays.push(rec);
        } else if e.part == Part::Cycle {
            cycles.push(rec);
        } else {
            paths.push(rec);
        }
    }
    let tr = transport_endpoints(&d);
    let spec = match input {
        InputFile::Spec(s) => Some(s.clone()),
        InputFile::Current(_) => None,
    };
    Ok(DecompositionFile {
        provenance: Provenance {
            tool: "curflow".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            source: generator.id(),
            spec,
            mode,
            options: opts,
            xi_trace: d.xi_trace.clone(),
        },
        space: SpaceFile::describe(&space),
        cycles,
        paths,
        rays,
        report: RunReport::new(label, W::EXACT, identities, checks, cycle_part),
        profile,
        transport: TransportFile {
            e0: atoms(&space, &tr.e0)?,
            e1: atoms(&space, &tr.e1)?,
            mass_to_infinity: tr.mass_to_infinity,
            mass_from_infinity: tr.mass_from_infinity,
        },
        boundary: atoms(&space, &t.boundary().restrict(&space, region))?,
    })
}

/// Decomposes an input and checks every identity; `exact` selects rational weights.
pub fn decompose(input: &InputFile, opts: &RunOptions) -> Result<DecompositionFile> {
    if opts.exact {
        run::<BigRational>(input, opts)
    } else {
        run::<f64>(input, opts)
    }
}

fn recheck<W: Weight>(input: &InputFile, file: &DecompositionFile) -> Result<RunReport> {
    let opts = &file.provenance.options;
    let mode = file.provenance.mode;
    let generator = input.generator()?;
    let space = generator.space();
    if SpaceFile::describe(&space) != file.space {
        return Err(Error::SpaceMismatch);
    }
    let t = match (mode, opts.r_max) {
        (RunMode::Local, Some(r)) => generator.current_within(r)?,
        (RunMode::Finite, _) => match input {
            InputFile::Current(c) => c.to_current()?,
            InputFile::Spec(_) => return Err(Error::Invalid("a finite-mode decomposition needs the current file".into())),
        },
        (RunMode::Local, None) => return Err(Error::Invalid("local-mode decomposition without a radius".into())),
    };
    let d = file.decomposition::<W>(&space)?;
    let region = region_of(mode, opts);
    let (label, checks) = oracle_checks(mode, &t, &d, region);
    let identities = transport_checks(&space, &t, &d, region);
    Ok(RunReport::new(label, W::EXACT, identities, checks, None))
}

/// Rechecks a decomposition file against its input with the oracle.
pub fn verify(input: &InputFile, file: &DecompositionFile) -> Result<RunReport> {
    let exact = file.report.exact && file.entries().all(|r| r.w_exact.is_some());
    if exact {
        recheck::<BigRational>(input, file)
    } else {
        recheck::<f64>(input, file)
    }
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(family: Family, seed: u64) -> InputFile {
        InputFile::Spec(GeneratorSpec::new(family, seed))
    }

    #[test]
    fn ray_gives_one_bounded_left_curve() {
        let out = decompose(&spec(Family::Ray, 0), &RunOptions { r_max: Some(8.0), ..Default::default() }).unwrap();
        assert!(out.report.pass, "{:?}", out.report.failing);
        assert!(out.cycles.is_empty() && out.paths.is_empty());
        assert_eq!(out.rays.len(), 1);
        assert_eq!(out.rays[0].kind, CurveKind::BoundedLeft);
    }

    #[test]
    fn intrinsic_comb_is_rejected() {
        let mut s = GeneratorSpec::new(Family::Comb, 0);
        s.params.teeth = Some(6);
        s.params.mode = Some(CombMode::Intrinsic);
        let err = decompose(&InputFile::Spec(s), &RunOptions::default()).unwrap_err();
        assert!(matches!(err, Error::NoSinglePointAtInfinity));
    }

    #[test]
    fn current_file_round_trip() {
        let t = families::lattice_current(3, 30, LatticeKind::Flow, 4).unwrap();
        let file = CurrentFile::from_current(&t).unwrap();
        let text = to_json(&file).unwrap();
        let back: CurrentFile = serde_json::from_str(&text).unwrap();
        assert!(back.to_current().unwrap().approx_eq(&t, 0.0));

        let comb = Comb::new(2, 8, CombMode::Intrinsic).unwrap();
        let t = comb.current_within(5.0).unwrap();
        let file = CurrentFile::from_current(&t).unwrap();
        let back: CurrentFile = serde_json::from_str(&to_json(&file).unwrap()).unwrap();
        assert!(back.to_current().unwrap().approx_eq(&t, 0.0));
    }

    #[test]
    fn decompose_then_verify_round_trips() {
        for seed in 0..6 {
            for (input, opts) in [
                (spec(Family::Chain, seed), RunOptions { r_max: Some(6.0), ..Default::default() }),
                (spec(Family::RandomLocal, seed), RunOptions { r_max: Some(6.0), ..Default::default() }),
                (
                    InputFile::Current(CurrentFile::from_current(&families::lattice_current(2, 30, LatticeKind::Grid, seed).unwrap()).unwrap()),
                    RunOptions { exact: seed % 2 == 0, ..Default::default() },
                ),
            ] {
                let out = decompose(&input, &opts).unwrap();
                assert!(out.report.pass, "{seed}: {:?}", out.report.failing);
                let text = to_json(&out).unwrap();
                let back: DecompositionFile = serde_json::from_str(&text).unwrap();
                assert_eq!(to_json(&back).unwrap(), text);
                let report = verify(&input, &back).unwrap();
                assert!(report.pass, "{seed}: {:?}", report.failing);
            }
        }
    }

    #[test]
    fn verify_notices_a_tampered_weight() {
        let input = spec(Family::RandomLocal, 3);
        let mut out = decompose(&input, &RunOptions { r_max: Some(6.0), ..Default::default() }).unwrap();
        let rec = out.cycles.iter_mut().chain(out.paths.iter_mut()).chain(out.rays.iter_mut()).next().unwrap();
        rec.w *= 1.5;
        let report = verify(&input, &out).unwrap();
        assert!(!report.pass);
    }

    #[test]
    fn input_detection() {
        let s = InputFile::parse(r#"{"family":"ray","seed":3}"#).unwrap();
        assert_eq!(s, spec(Family::Ray, 3));
        let c = InputFile::parse(r#"{"space":{"mode":"sup-norm","dim":1},"edges":[{"from":[0.0],"to":[1.0],"w":2.0}]}"#).unwrap();
        assert!(matches!(c, InputFile::Current(_)));
        assert!(InputFile::parse(r#"{"family":"spiral"}"#).is_err());
    }
}
