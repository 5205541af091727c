//! The comb study and the tabular plot data.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::Serialize;

use crate::conformal::{compactify, cut_atoms, ConformalProfile, ProfileOptions};
use crate::current::AnnulusGenerator;
use crate::error::{Error, Result};
use crate::families::{Comb, CombMode};
use crate::geometry::{AmbientSpace, Region};
use crate::io::{AtomRecord, DecompositionFile, PointFile};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CombRow {
    pub teeth: usize,
    pub mode: CombMode,
    pub r_max: f64,
    pub m_delta_boundary: f64,
}

/// `M_δ(∂T̄)` for the comb with `teeth` U-curves.
///
/// In intrinsic mode every tooth goes off to its own end, so each cut atom
/// on `∂B_R` is sent to a separate point at infinity and nothing cancels.
/// In embedded mode all ends share the single `x_∞` and the atoms cancel.
pub fn comb_value(teeth: usize, height: usize, mode: CombMode, r_max: f64) -> Result<f64> {
    let comb = Comb::new(teeth, height, mode)?;
    match mode {
        CombMode::Intrinsic => {
            let t = comb.current_within(r_max)?;
            let space = t.space().clone();
            let inner = t.boundary().restrict(&space, Region::OpenBall(r_max)).total_variation();
            Ok(inner + cut_atoms(&t, r_max).total_variation())
        }
        CombMode::Embed => {
            let profile = Arc::new(ConformalProfile::build(&comb, r_max, &ProfileOptions::default())?);
            Ok(compactify(profile, &comb, r_max)?.boundary_mass())
        }
    }
}

pub fn comb_study(teeth: impl IntoIterator<Item = usize>, modes: &[CombMode], height: usize, r_max: f64) -> Result<Vec<CombRow>> {
    let mut rows = Vec::new();
    for k in teeth {
        for &mode in modes {
            rows.push(CombRow { teeth: k, mode, r_max, m_delta_boundary: comb_value(k, height, mode, r_max)? });
        }
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MassRow {
    pub r: f64,
    pub mass: f64,
    pub cycles: f64,
    pub acyclic: f64,
}

/// Mass of the reconstructed current and of its two parts on `B̄_r`, for
/// `r` on a grid of spacing `step`.
pub fn mass_profile(file: &DecompositionFile, step: f64) -> Result<Vec<MassRow>> {
    if !(step > 0.0) {
        return Err(Error::Invalid("step must be positive".into()));
    }
    let space = file.space.build()?;
    let d = file.decomposition::<f64>(&space)?;
    let all = d.superposition(space.clone())?;
    let part = |cycles: bool| {
        let mut part = d.clone();
        part.entries.retain(|e| (e.part == crate::decomp::Part::Cycle) == cycles);
        part.superposition(space.clone())
    };
    let (cyc, acyc) = (part(true)?, part(false)?);
    let top = file.provenance.options.r_max.unwrap_or_else(|| {
        all.vertices().iter().filter_map(|p| space.norm(p).ok()).fold(0.0, f64::max)
    });
    let n = (top / step).ceil() as usize;
    Ok((0..=n)
        .map(|k| {
            let r = (k as f64 * step).min(top);
            MassRow { r, mass: all.mass_on(Region::Ball(r)), cycles: cyc.mass_on(Region::Ball(r)), acyclic: acyc.mass_on(Region::Ball(r)) }
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GRow {
    pub r: f64,
    pub phi_tilde: f64,
    pub g: f64,
    pub tail: f64,
}

/// `φ̃`, `g` and `G` from the profile stored in a local decomposition.
pub fn g_profile(file: &DecompositionFile, step: f64) -> Result<Vec<GRow>> {
    let dump = file.profile.as_ref().ok_or_else(|| Error::Invalid("decomposition has no conformal profile".into()))?;
    let p = ConformalProfile::replay(dump)?;
    Ok(crate::conformal::g_profile_rows(&p, step)
        .into_iter()
        .map(|row| GRow { r: row["r"], phi_tilde: row["phi_tilde"], g: row["g"], tail: row["tail"] })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LedgerRow {
    pub point: String,
    pub norm: f64,
    pub boundary: f64,
    pub e0: f64,
    pub e1: f64,
}

fn label(p: &PointFile) -> String {
    match p {
        PointFile::Coords(v) => v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" "),
        PointFile::Vertex(name) => name.clone(),
        PointFile::OnEdge { edge, t } => format!("edge {edge} t {t}"),
    }
}

/// One row per atom of `∂T`, `e0` or `e1`; on the report region
/// `e0 = (∂T)^-` and `e1 = (∂T)^+`.
pub fn boundary_ledger(file: &DecompositionFile) -> Result<Vec<LedgerRow>> {
    let space: Arc<AmbientSpace> = file.space.build()?;
    let mut rows: BTreeMap<crate::geometry::Point, LedgerRow> = BTreeMap::new();
    let mut put = |atoms: &[AtomRecord], col: usize| -> Result<()> {
        for a in atoms {
            let p = a.point.to_point(&space)?;
            let norm = space.norm(&p)?;
            let row = rows.entry(p).or_insert_with(|| LedgerRow { point: label(&a.point), norm, boundary: 0.0, e0: 0.0, e1: 0.0 });
            match col {
                0 => row.boundary += a.value,
                1 => row.e0 += a.value,
                _ => row.e1 += a.value,
            }
        }
        Ok(())
    };
    put(&file.boundary, 0)?;
    put(&file.transport.e0, 1)?;
    put(&file.transport.e1, 2)?;
    let mut out: Vec<LedgerRow> = rows.into_values().collect();
    out.sort_by(|a, b| a.norm.total_cmp(&b.norm).then_with(|| a.point.cmp(&b.point)));
    Ok(out)
}
