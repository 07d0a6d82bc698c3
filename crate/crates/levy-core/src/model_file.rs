//! TOML model files: one file describes a market triplet, the investor's
//! problem, and the constraint set. Parsing is strict -- unknown fields are
//! rejected and location information from the TOML parser is preserved in
//! error messages -- because a silently misread model produces plausible
//! but wrong portfolios.
//!
//! ```toml
//! schema_version = 1
//!
//! [triplet]
//! b = [0.08]
//! c = [[0.04]]
//!
//! [[atom]]
//! x = [0.5]
//! lambda = 1.0
//!
//! [[density]]
//! kind = "uniform"          # uniform | shifted_power | pareto | exponential
//! support = [-1.0, -0.5]    # curve parameter range; upper may be `inf`
//! mass = 0.3
//! axis = 1                  # 1-based coordinate axis (or `direction = [..]`)
//!
//! [problem]
//! p = 0.5
//! delta = 0                 # 1 enables intermediate consumption
//! T = 1.0
//! x0 = 1.0
//!
//! [constraints]
//! kind = "box"              # all | polyhedron | box | ball | hull | cone | union
//! lo = [0.0]
//! hi = [1.0]
//! ```

use crate::constraint_geometry::ConstraintSet;
use crate::levy_model::{
    DensityPart, DensityProfile, JumpAtom, JumpMeasure, LevyTriplet, ProblemSpec, QuadSpec,
    TailModel, Tolerances,
};
use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileModel {
    #[serde(default = "default_schema_version")]
    schema_version: u32,
    triplet: FileTriplet,
    #[serde(default, rename = "atom", skip_serializing_if = "Vec::is_empty")]
    atoms: Vec<FileAtom>,
    #[serde(default, rename = "density", skip_serializing_if = "Vec::is_empty")]
    densities: Vec<FileDensity>,
    problem: FileProblem,
    #[serde(default)]
    constraints: Option<FileConstraints>,
}

fn default_schema_version() -> u32 {
    SCHEMA_VERSION
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileTriplet {
    b: Vec<f64>,
    c: Vec<Vec<f64>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileAtom {
    x: Vec<f64>,
    lambda: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileDensity {
    kind: String,
    support: [f64; 2],
    mass: f64,
    /// 1-based coordinate axis carrying the segment; alternative to
    /// `direction` for axis-aligned parts.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    axis: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    direction: Option<Vec<f64>>,
    // Shape parameters; which ones apply depends on `kind`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    shift: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    power: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tail: Option<FileTail>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    quad_rel_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    quad_max_panels: Option<usize>,
    /// Density multiplier (1 + v.x)^e, produced by measure-change reports.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    reweight_v: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    reweight_exponent: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileTail {
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rate: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileProblem {
    p: f64,
    delta: u8,
    #[serde(rename = "T")]
    horizon: f64,
    x0: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tolerances: Option<FileTolerances>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileTolerances {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    psd: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    quad_rel: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    geometry: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    optimizer: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    drift: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConstraints {
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    a: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ub: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lo: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    hi: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    center: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    points: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    axis: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    slope: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pieces: Vec<FileConstraints>,
}

/// Parse a model file from text. Error messages carry the TOML location
/// when the syntax or the field types are wrong, and the offending
/// section/field for semantic errors.
pub fn parse_model(text: &str) -> Result<(LevyTriplet, ProblemSpec)> {
    let file: FileModel = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    if file.schema_version != SCHEMA_VERSION {
        return Err(Error::Parse(format!(
            "schema_version {} not supported (this build reads {SCHEMA_VERSION})",
            file.schema_version
        )));
    }
    let d = file.triplet.b.len();
    if d == 0 {
        return Err(Error::Parse("[triplet] b must have at least one entry".into()));
    }
    if file.triplet.c.len() != d || file.triplet.c.iter().any(|row| row.len() != d) {
        return Err(Error::Parse(format!("[triplet] c must be a {d}x{d} matrix matching b")));
    }
    let b = DVector::from_row_slice(&file.triplet.b);
    let c = DMatrix::from_fn(d, d, |i, j| file.triplet.c[i][j]);

    let mut atoms = Vec::new();
    for (k, a) in file.atoms.iter().enumerate() {
        if a.x.len() != d {
            return Err(Error::Parse(format!(
                "[[atom]] #{}: x has {} entries, model dimension is {d}",
                k + 1,
                a.x.len()
            )));
        }
        atoms.push(JumpAtom { x: DVector::from_row_slice(&a.x), lambda: a.lambda });
    }

    let mut parts = Vec::new();
    for (k, dens) in file.densities.iter().enumerate() {
        parts.push(parse_density(dens, d, k + 1)?);
    }

    let triplet = LevyTriplet { b, c, jumps: JumpMeasure { atoms, parts } };

    let fp = &file.problem;
    if fp.delta > 1 {
        return Err(Error::Parse(format!("[problem] delta must be 0 or 1, got {}", fp.delta)));
    }
    let mut tol = Tolerances::default();
    if let Some(ft) = &fp.tolerances {
        if let Some(v) = ft.psd {
            tol.psd = v;
        }
        if let Some(v) = ft.quad_rel {
            tol.quad_rel = v;
        }
        if let Some(v) = ft.geometry {
            tol.geometry = v;
        }
        if let Some(v) = ft.optimizer {
            tol.optimizer = v;
        }
        if let Some(v) = ft.drift {
            tol.drift = v;
        }
    }
    let constraints = match &file.constraints {
        None => ConstraintSet::Whole { dim: d },
        Some(fc) => parse_constraints(fc, d, "[constraints]")?,
    };
    let problem = ProblemSpec {
        p: fp.p,
        consumption: fp.delta == 1,
        horizon: fp.horizon,
        x0: fp.x0,
        constraints,
        tol,
    };
    Ok((triplet, problem))
}

fn parse_density(dens: &FileDensity, d: usize, idx: usize) -> Result<DensityPart> {
    let ctx = format!("[[density]] #{idx}");
    let dir = match (&dens.axis, &dens.direction) {
        (Some(ax), None) => {
            if *ax == 0 || *ax > d {
                return Err(Error::Parse(format!("{ctx}: axis {ax} out of range 1..={d}")));
            }
            let mut v = DVector::zeros(d);
            v[*ax - 1] = 1.0;
            v
        }
        (None, Some(dir)) => {
            if dir.len() != d {
                return Err(Error::Parse(format!(
                    "{ctx}: direction has {} entries, model dimension is {d}",
                    dir.len()
                )));
            }
            DVector::from_row_slice(dir)
        }
        (None, None) if d == 1 => DVector::from_row_slice(&[1.0]),
        _ => {
            return Err(Error::Parse(format!(
                "{ctx}: specify exactly one of `axis` or `direction`"
            )))
        }
    };
    let need = |name: &str, v: Option<f64>| {
        v.ok_or_else(|| Error::Parse(format!("{ctx}: kind `{}` needs field `{name}`", dens.kind)))
    };
    let profile = match dens.kind.as_str() {
        "uniform" => DensityProfile::Uniform,
        "shifted_power" => DensityProfile::ShiftedPower {
            shift: need("shift", dens.shift)?,
            power: need("power", dens.power)?,
        },
        "pareto" => DensityProfile::Pareto { alpha: need("alpha", dens.alpha)? },
        "exponential" => DensityProfile::Exponential { rate: need("rate", dens.rate)? },
        other => {
            return Err(Error::Parse(format!(
                "{ctx}: unknown kind `{other}` (expected uniform | shifted_power | pareto | exponential)"
            )))
        }
    };
    let tail = match &dens.tail {
        None => None,
        Some(ft) => Some(match ft.kind.as_str() {
            "power" => TailModel::Power {
                alpha: ft
                    .alpha
                    .ok_or_else(|| Error::Parse(format!("{ctx}: power tail needs `alpha`")))?,
            },
            "exponential" => TailModel::Exponential {
                rate: ft
                    .rate
                    .ok_or_else(|| Error::Parse(format!("{ctx}: exponential tail needs `rate`")))?,
            },
            other => {
                return Err(Error::Parse(format!(
                    "{ctx}: unknown tail kind `{other}` (expected power | exponential)"
                )))
            }
        }),
    };
    let mut grid = QuadSpec::default();
    if let Some(v) = dens.quad_rel_tol {
        grid.rel_tol = v;
    }
    if let Some(v) = dens.quad_max_panels {
        grid.max_panels = v;
    }
    let part = DensityPart::new(dir, dens.support[0], dens.support[1], profile, dens.mass, tail, grid)
        .map_err(|e| Error::Parse(format!("{ctx}: {e}")))?;
    match (&dens.reweight_v, dens.reweight_exponent) {
        (None, None) => Ok(part),
        (Some(v), Some(e)) => {
            if v.len() != d {
                return Err(Error::Parse(format!("{ctx}: reweight_v has wrong dimension")));
            }
            part.reweighted(&DVector::from_row_slice(v), e)
                .map_err(|err| Error::Parse(format!("{ctx}: {err}")))
        }
        _ => Err(Error::Parse(format!(
            "{ctx}: reweight_v and reweight_exponent must appear together"
        ))),
    }
}

fn parse_constraints(fc: &FileConstraints, d: usize, ctx: &str) -> Result<ConstraintSet> {
    let vec_field = |name: &str, v: &Option<Vec<f64>>| -> Result<DVector<f64>> {
        let v = v
            .as_ref()
            .ok_or_else(|| Error::Parse(format!("{ctx}: kind `{}` needs `{name}`", fc.kind)))?;
        if v.len() != d {
            return Err(Error::Parse(format!(
                "{ctx}: `{name}` has {} entries, model dimension is {d}",
                v.len()
            )));
        }
        Ok(DVector::from_row_slice(v))
    };
    match fc.kind.as_str() {
        "all" => Ok(ConstraintSet::Whole { dim: d }),
        "box" => Ok(ConstraintSet::Box { lo: vec_field("lo", &fc.lo)?, hi: vec_field("hi", &fc.hi)? }),
        "ball" => Ok(ConstraintSet::Ball {
            center: vec_field("center", &fc.center)?,
            radius: fc
                .radius
                .ok_or_else(|| Error::Parse(format!("{ctx}: ball needs `radius`")))?,
        }),
        "polyhedron" => {
            let a = fc
                .a
                .as_ref()
                .ok_or_else(|| Error::Parse(format!("{ctx}: polyhedron needs `a`")))?;
            let ub = fc
                .ub
                .as_ref()
                .ok_or_else(|| Error::Parse(format!("{ctx}: polyhedron needs `ub`")))?;
            if a.len() != ub.len() {
                return Err(Error::Parse(format!(
                    "{ctx}: `a` has {} rows but `ub` has {} entries",
                    a.len(),
                    ub.len()
                )));
            }
            if a.iter().any(|row| row.len() != d) {
                return Err(Error::Parse(format!("{ctx}: every row of `a` needs {d} entries")));
            }
            let flat: Vec<f64> = a.iter().flatten().cloned().collect();
            Ok(ConstraintSet::Polyhedron {
                a: DMatrix::from_row_slice(a.len(), d, &flat),
                ub: DVector::from_row_slice(ub),
            })
        }
        "hull" => {
            let pts = fc
                .points
                .as_ref()
                .ok_or_else(|| Error::Parse(format!("{ctx}: hull needs `points`")))?;
            if pts.iter().any(|p| p.len() != d) {
                return Err(Error::Parse(format!("{ctx}: every hull point needs {d} entries")));
            }
            Ok(ConstraintSet::Hull {
                points: pts.iter().map(|p| DVector::from_row_slice(p)).collect(),
            })
        }
        "cone" => {
            let axis = vec_field("axis", &fc.axis)?;
            let n = axis.norm();
            if n == 0.0 {
                return Err(Error::Parse(format!("{ctx}: cone axis must be nonzero")));
            }
            Ok(ConstraintSet::Cone {
                axis: axis / n,
                slope: fc
                    .slope
                    .ok_or_else(|| Error::Parse(format!("{ctx}: cone needs `slope`")))?,
            })
        }
        "union" => {
            if fc.pieces.is_empty() {
                return Err(Error::Parse(format!("{ctx}: union needs at least one piece")));
            }
            let pieces = fc
                .pieces
                .iter()
                .enumerate()
                .map(|(i, p)| parse_constraints(p, d, &format!("{ctx}.pieces[{i}]")))
                .collect::<Result<Vec<_>>>()?;
            Ok(ConstraintSet::Union { pieces })
        }
        other => Err(Error::Parse(format!(
            "{ctx}: unknown kind `{other}` (expected all | polyhedron | box | ball | hull | cone | union)"
        ))),
    }
}

/// Load a model from disk.
pub fn load_model(path: &Path) -> Result<(LevyTriplet, ProblemSpec)> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Parse(format!("cannot read {}: {e}", path.display())))?;
    parse_model(&text).map_err(|e| match e {
        Error::Parse(msg) => Error::Parse(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Render a triplet/problem pair back to the file format. Oracle-backed
/// constraint sets have no file representation and are rejected.
pub fn render_model(triplet: &LevyTriplet, problem: &ProblemSpec) -> Result<String> {
    let d = triplet.dim();
    let file = FileModel {
        schema_version: SCHEMA_VERSION,
        triplet: FileTriplet {
            b: triplet.b.iter().cloned().collect(),
            c: (0..d)
                .map(|i| (0..d).map(|j| triplet.c[(i, j)]).collect())
                .collect(),
        },
        atoms: triplet
            .jumps
            .atoms
            .iter()
            .map(|a| FileAtom { x: a.x.iter().cloned().collect(), lambda: a.lambda })
            .collect(),
        densities: triplet
            .jumps
            .parts
            .iter()
            .map(render_density)
            .collect::<Result<Vec<_>>>()?,
        problem: FileProblem {
            p: problem.p,
            delta: problem.consumption as u8,
            horizon: problem.horizon,
            x0: problem.x0,
            tolerances: None,
        },
        constraints: Some(render_constraints(&problem.constraints)?),
    };
    toml::to_string_pretty(&file).map_err(|e| Error::Parse(format!("render failed: {e}")))
}

fn render_density(p: &DensityPart) -> Result<FileDensity> {
    let (kind, shift, power, alpha, rate) = match p.profile {
        DensityProfile::Uniform => ("uniform", None, None, None, None),
        DensityProfile::ShiftedPower { shift, power } => {
            ("shifted_power", Some(shift), Some(power), None, None)
        }
        DensityProfile::Pareto { alpha } => ("pareto", None, None, Some(alpha), None),
        DensityProfile::Exponential { rate } => ("exponential", None, None, None, Some(rate)),
    };
    // Reweighting shifted any power-tail annotation by the exponent; the file
    // stores the bare annotation because parsing re-applies the shift.
    let reweight_e = p.reweight.as_ref().map_or(0.0, |(_, e)| *e);
    let tail = p.tail.map(|t| match t {
        TailModel::Power { alpha } => {
            FileTail { kind: "power".into(), alpha: Some(alpha + reweight_e), rate: None }
        }
        TailModel::Exponential { rate } => {
            FileTail { kind: "exponential".into(), alpha: None, rate: Some(rate) }
        }
    });
    let (reweight_v, reweight_exponent) = match &p.reweight {
        None => (None, None),
        Some((v, e)) => (Some(v.iter().cloned().collect()), Some(*e)),
    };
    Ok(FileDensity {
        kind: kind.into(),
        support: [p.t_lo, p.t_hi],
        // `mass` is re-derived at parse time for reweighted parts; store the
        // base-profile mass so the kernel normalization round-trips.
        mass: if p.reweight.is_some() { base_mass(p) } else { p.mass },
        axis: None,
        direction: Some(p.dir.iter().cloned().collect()),
        shift,
        power,
        alpha,
        rate,
        tail,
        quad_rel_tol: Some(p.grid.rel_tol),
        quad_max_panels: Some(p.grid.max_panels),
        reweight_v,
        reweight_exponent,
    })
}

/// Mass of the part with the reweight factor stripped. The bare tail
/// annotation is restored so the indicator integral converges.
fn base_mass(p: &DensityPart) -> f64 {
    let mut bare = p.clone();
    let e = bare.reweight.take().map_or(0.0, |(_, e)| e);
    if let Some(TailModel::Power { alpha }) = bare.tail {
        bare.tail = Some(TailModel::Power { alpha: alpha + e });
    }
    bare.integrate(|_, _| 1.0, 0.0, &[], None).map(|(m, _)| m).unwrap_or(p.mass)
}

fn render_constraints(c: &ConstraintSet) -> Result<FileConstraints> {
    let empty = || FileConstraints {
        kind: String::new(),
        a: None,
        ub: None,
        lo: None,
        hi: None,
        center: None,
        radius: None,
        points: None,
        axis: None,
        slope: None,
        pieces: Vec::new(),
    };
    Ok(match c {
        ConstraintSet::Whole { .. } => FileConstraints { kind: "all".into(), ..empty() },
        ConstraintSet::Box { lo, hi } => FileConstraints {
            kind: "box".into(),
            lo: Some(lo.iter().cloned().collect()),
            hi: Some(hi.iter().cloned().collect()),
            ..empty()
        },
        ConstraintSet::Ball { center, radius } => FileConstraints {
            kind: "ball".into(),
            center: Some(center.iter().cloned().collect()),
            radius: Some(*radius),
            ..empty()
        },
        ConstraintSet::Polyhedron { a, ub } => FileConstraints {
            kind: "polyhedron".into(),
            a: Some((0..a.nrows()).map(|i| a.row(i).iter().cloned().collect()).collect()),
            ub: Some(ub.iter().cloned().collect()),
            ..empty()
        },
        ConstraintSet::Hull { points } => FileConstraints {
            kind: "hull".into(),
            points: Some(points.iter().map(|p| p.iter().cloned().collect()).collect()),
            ..empty()
        },
        ConstraintSet::Cone { axis, slope } => FileConstraints {
            kind: "cone".into(),
            axis: Some(axis.iter().cloned().collect()),
            slope: Some(*slope),
            ..empty()
        },
        ConstraintSet::Union { pieces } => FileConstraints {
            kind: "union".into(),
            pieces: pieces.iter().map(render_constraints).collect::<Result<Vec<_>>>()?,
            ..empty()
        },
        ConstraintSet::StarOracle { .. } => {
            return Err(Error::PreconditionFailed(
                "oracle-backed constraint sets have no file representation".into(),
            ))
        }
    })
}
