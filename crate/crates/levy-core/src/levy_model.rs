//! Market model primitives: the Levy triplet of the returns process, its
//! jump measure, and the investor's problem data.
//!
//! The jump measure is finite-activity by construction: atoms plus density
//! parts supported on line segments or rays through the origin in direction
//! space, each carrying a total intensity. Infinite-activity
//! models must be pre-truncated by the caller (pick a truncation radius,
//! fold the small jumps into the drift) before they enter here; parts with
//! unbounded support must declare how their tail decays so that moment
//! questions are decided from the annotation instead of guessed from
//! samples.
//!
//! The truncation function used throughout is h(x) = x on the closed unit
//! ball and 0 outside; every drift vector `b` is understood relative to it.

use crate::quad::{self, QuadOpts, TailDecay};
use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Truncation function h(x) = x * 1{|x| <= 1} (Euclidean norm).
pub fn cutoff(x: &DVector<f64>) -> DVector<f64> {
    if x.norm() <= 1.0 {
        x.clone()
    } else {
        DVector::zeros(x.len())
    }
}

/// Quadrature controls for one density part.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct QuadSpec {
    /// Relative tolerance for integrals against this part.
    pub rel_tol: f64,
    /// Panel cap before a quadrature failure is reported.
    pub max_panels: usize,
}

impl Default for QuadSpec {
    fn default() -> Self {
        QuadSpec { rel_tol: 1e-9, max_panels: 4000 }
    }
}

impl QuadSpec {
    fn opts(&self) -> QuadOpts {
        QuadOpts {
            rel_tol: self.rel_tol,
            abs_tol: self.rel_tol * 1e-4,
            max_panels: self.max_panels,
        }
    }
}

/// Declared decay of the jump measure along an unbounded support direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TailModel {
    /// Mass beyond radius R falls off like R^(-alpha).
    Power { alpha: f64 },
    /// Mass beyond radius R falls off like exp(-rate * R).
    Exponential { rate: f64 },
}

/// Normalized density shapes in the curve parameter t.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub enum DensityProfile {
    /// Constant on [t_lo, t_hi].
    Uniform,
    /// Proportional to (t - shift)^power on [t_lo, t_hi]; power > -1 and
    /// shift <= t_lo keep it integrable and single-signed.
    ShiftedPower { shift: f64, power: f64 },
    /// alpha * t_lo^alpha * t^(-alpha - 1) on [t_lo, inf); requires t_lo > 0.
    Pareto { alpha: f64 },
    /// rate * exp(-rate (t - t_lo)) on [t_lo, inf).
    Exponential { rate: f64 },
}

/// A point mass of the jump measure: intensity `lambda` at displacement `x`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JumpAtom {
    pub x: DVector<f64>,
    pub lambda: f64,
}

/// Absolutely continuous piece of the jump measure, supported on the curve
/// t -> t * dir for t in [t_lo, t_hi] (t_hi may be +inf).
///
/// `mass` is the total intensity of the piece and is kept consistent with
/// the stored kernel: reweighting (as in measure changes) recomputes it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DensityPart {
    pub dir: DVector<f64>,
    pub t_lo: f64,
    pub t_hi: f64,
    pub profile: DensityProfile,
    /// Total intensity of this part.
    pub mass: f64,
    /// Multiplier applied to the normalized profile; equals `mass` until the
    /// part is reweighted.
    scale: f64,
    /// Tail decay annotation; mandatory when t_hi is infinite.
    pub tail: Option<TailModel>,
    /// Optional density factor (1 + v.x)^e picked up from measure changes.
    pub reweight: Option<(DVector<f64>, f64)>,
    pub grid: QuadSpec,
}

impl DensityPart {
    pub fn new(
        dir: DVector<f64>,
        t_lo: f64,
        t_hi: f64,
        profile: DensityProfile,
        mass: f64,
        tail: Option<TailModel>,
        grid: QuadSpec,
    ) -> Result<Self> {
        if dir.norm() == 0.0 {
            return Err(Error::InvalidModel("density part direction is zero".into()));
        }
        if !(mass > 0.0) || !mass.is_finite() {
            return Err(Error::InvalidModel(format!("density part mass {mass} must be positive and finite")));
        }
        if !(t_lo < t_hi) {
            return Err(Error::InvalidModel(format!("density part range [{t_lo}, {t_hi}] is empty")));
        }
        let mut tail = tail;
        match profile {
            DensityProfile::Uniform => {
                if !t_hi.is_finite() {
                    return Err(Error::InvalidModel("uniform profile needs a bounded range".into()));
                }
            }
            DensityProfile::ShiftedPower { shift, power } => {
                if !t_hi.is_finite() {
                    return Err(Error::InvalidModel("shifted power profile needs a bounded range".into()));
                }
                if power <= -1.0 {
                    return Err(Error::InvalidModel(format!("shifted power exponent {power} not integrable")));
                }
                if shift > t_lo {
                    return Err(Error::InvalidModel(format!(
                        "shifted power pivot {shift} must sit at or below the range start {t_lo}"
                    )));
                }
            }
            DensityProfile::Pareto { alpha } => {
                if !(alpha > 0.0) {
                    return Err(Error::InvalidModel(format!("pareto tail index {alpha} must be positive")));
                }
                if t_lo <= 0.0 || t_hi.is_finite() {
                    return Err(Error::InvalidModel("pareto profile lives on [t_lo, inf) with t_lo > 0".into()));
                }
                tail = tail.or(Some(TailModel::Power { alpha }));
            }
            DensityProfile::Exponential { rate } => {
                if !(rate > 0.0) {
                    return Err(Error::InvalidModel(format!("exponential profile rate {rate} must be positive")));
                }
                if t_hi.is_finite() {
                    return Err(Error::InvalidModel("exponential profile lives on [t_lo, inf)".into()));
                }
                tail = tail.or(Some(TailModel::Exponential { rate }));
            }
        }
        if !t_hi.is_finite() && tail.is_none() {
            return Err(Error::UnboundedSupportWithoutTailModel(
                "density part with unbounded range carries no tail annotation".into(),
            ));
        }
        // If the support crosses zero the measure would put mass arbitrarily
        // close to the origin on both sides; that is fine, but an interval
        // containing 0 in its interior with positive density at 0 is the
        // continuous analogue of an atom at the origin only if the density
        // blows up there, which no profile here does. No check needed.
        Ok(DensityPart { dir, t_lo, t_hi, profile, mass, scale: mass, tail, reweight: None, grid })
    }

    /// Jump displacement at curve parameter t.
    pub fn point(&self, t: f64) -> DVector<f64> {
        &self.dir * t
    }

    /// Normalized profile value at t (integrates to one over the range).
    fn kernel(&self, t: f64) -> f64 {
        if t < self.t_lo || t > self.t_hi {
            return 0.0;
        }
        match self.profile {
            DensityProfile::Uniform => 1.0 / (self.t_hi - self.t_lo),
            DensityProfile::ShiftedPower { shift, power } => {
                let k1 = power + 1.0;
                let norm = ((self.t_hi - shift).powf(k1) - (self.t_lo - shift).powf(k1)) / k1;
                if t == shift { 0.0 } else { (t - shift).powf(power) / norm }
            }
            DensityProfile::Pareto { alpha } => {
                alpha * self.t_lo.powf(alpha) * t.powf(-alpha - 1.0)
            }
            DensityProfile::Exponential { rate } => rate * (-rate * (t - self.t_lo)).exp(),
        }
    }

    /// Reweight factor at curve parameter t, 1 when no reweighting is set.
    fn weight(&self, t: f64) -> f64 {
        match &self.reweight {
            None => 1.0,
            Some((v, e)) => {
                let base = 1.0 + t * v.dot(&self.dir);
                if base <= 0.0 { 0.0 } else { base.powf(*e) }
            }
        }
    }

    /// Intensity density in t: integrates to `mass` over the range.
    pub fn density_t(&self, t: f64) -> f64 {
        self.scale * self.kernel(t) * self.weight(t)
    }

    /// Integrate f(x(t), t) against the intensity density. `f_growth` is the
    /// algebraic growth exponent of f along the ray (0 for bounded f, 1 for
    /// linear, p for the utility kernel); it selects the tail substitution.
    /// `splits` are extra break points in t forced onto panel edges.
    pub fn integrate<F: Fn(&DVector<f64>, f64) -> f64>(
        &self,
        f: F,
        f_growth: f64,
        splits: &[f64],
        rel_tol: Option<f64>,
    ) -> Result<(f64, f64)> {
        let mut opts = self.grid.opts();
        if let Some(rt) = rel_tol {
            opts.rel_tol = rt;
            opts.abs_tol = rt * 1e-4;
        }
        let g = |t: f64| f(&self.point(t), t) * self.density_t(t);
        if self.t_hi.is_finite() {
            return quad::integrate_split(&g, self.t_lo, self.t_hi, splits, &opts);
        }
        // Unbounded range: integrate a bounded head exactly, then the tail
        // through the substitution chosen from the annotation.
        let mut cut = self.t_lo.abs().max(1.0) * 4.0;
        for s in splits {
            if s.is_finite() && *s > self.t_lo {
                cut = cut.max(s * 4.0);
            }
        }
        let (head, e1) = quad::integrate_split(&g, self.t_lo, cut, splits, &opts)?;
        // `tail` always describes the effective decay of the stored density,
        // reweighting included, so no further adjustment happens here.
        let decay = match self.tail {
            Some(TailModel::Power { alpha }) => {
                TailDecay::Algebraic { s: alpha + 1.0 - f_growth }
            }
            Some(TailModel::Exponential { rate }) => TailDecay::Exponential { rate },
            None => {
                return Err(Error::UnboundedSupportWithoutTailModel(
                    "cannot integrate over an unannotated unbounded range".into(),
                ))
            }
        };
        let (tail, e2) = quad::integrate_tail(&g, cut, decay, &opts)?;
        Ok((head + tail, e1 + e2))
    }

    /// Same integral restricted to the part of the ray inside the closed
    /// unit ball (where the truncation h is the identity); always bounded.
    pub fn integrate_inside_unit_ball<F: Fn(&DVector<f64>, f64) -> f64>(
        &self,
        f: F,
        splits: &[f64],
        rel_tol: Option<f64>,
    ) -> Result<(f64, f64)> {
        let r = 1.0 / self.dir.norm();
        let lo = self.t_lo.max(-r);
        let hi = self.t_hi.min(r);
        if lo >= hi {
            return Ok((0.0, 0.0));
        }
        let mut opts = self.grid.opts();
        if let Some(rt) = rel_tol {
            opts.rel_tol = rt;
            opts.abs_tol = rt * 1e-4;
        }
        let g = |t: f64| f(&self.point(t), t) * self.density_t(t);
        quad::integrate_split(&g, lo, hi, splits, &opts)
    }

    /// Inverse-CDF draw of the curve parameter for the *unweighted* profile.
    fn sample_base_t(&self, u: f64) -> f64 {
        match self.profile {
            DensityProfile::Uniform => self.t_lo + u * (self.t_hi - self.t_lo),
            DensityProfile::ShiftedPower { shift, power } => {
                let k1 = power + 1.0;
                let a = (self.t_lo - shift).powf(k1);
                let b = (self.t_hi - shift).powf(k1);
                shift + (a + u * (b - a)).powf(1.0 / k1)
            }
            DensityProfile::Pareto { alpha } => self.t_lo * (1.0 - u).powf(-1.0 / alpha),
            DensityProfile::Exponential { rate } => self.t_lo - (1.0 - u).ln() / rate,
        }
    }

    /// Draw a jump displacement. Reweighted parts use rejection against the
    /// base profile, valid because the weight is bounded on the support.
    pub fn sample<R: rand::Rng>(&self, rng: &mut R) -> Result<DVector<f64>> {
        match &self.reweight {
            None => {
                let u: f64 = rng.gen();
                Ok(self.point(self.sample_base_t(u)))
            }
            Some((v, e)) => {
                // Weight (1 + t v.dir)^e is monotone in t, so its sup over
                // the support sits at an endpoint.
                let s = v.dot(&self.dir);
                let w_lo = self.weight(self.t_lo);
                let w_hi = if self.t_hi.is_finite() {
                    self.weight(self.t_hi)
                } else if *e * s.signum() > 0.0 {
                    f64::INFINITY
                } else {
                    0.0
                };
                let bound = w_lo.max(w_hi);
                if !bound.is_finite() || bound <= 0.0 {
                    return Err(Error::PreconditionFailed(
                        "reweighted density has no finite envelope for rejection sampling".into(),
                    ));
                }
                for _ in 0..100_000 {
                    let u: f64 = rng.gen();
                    let t = self.sample_base_t(u);
                    let accept: f64 = rng.gen();
                    if accept * bound <= self.weight(t) {
                        return Ok(self.point(t));
                    }
                }
                Err(Error::PreconditionFailed(
                    "rejection sampling failed to accept after 100000 proposals".into(),
                ))
            }
        }
    }

    /// Multiply the density by (1 + v.x)^e and recompute the total mass.
    /// The tail annotation shifts accordingly for power tails -- but only
    /// when v actually has exposure along the ray: with v.dir = 0 the
    /// factor is identically one and the decay is what it always was. A
    /// negative exposure on an unbounded support makes 1 + v.x change sign
    /// somewhere, so there is no density to speak of; callers must snap
    /// zero exposures to exact zeros (see the transform and dual-measure
    /// call sites) before reweighting.
    pub fn reweighted(&self, v: &DVector<f64>, e: f64) -> Result<DensityPart> {
        let w = v.dot(&self.dir);
        if w < 0.0 && self.t_hi.is_infinite() {
            return Err(Error::Domain(
                "reweighting with negative exposure along an unbounded support".into(),
            ));
        }
        let mut out = self.clone();
        out.reweight = match &self.reweight {
            None => Some((v.clone(), e)),
            Some(_) => {
                return Err(Error::PreconditionFailed(
                    "stacked density reweighting is not supported".into(),
                ))
            }
        };
        out.tail = match self.tail {
            Some(TailModel::Power { alpha }) if w != 0.0 => {
                Some(TailModel::Power { alpha: alpha - e })
            }
            other => other,
        };
        let (m, _) = out.integrate(|_, _| 1.0, 0.0, &[], None)?;
        if !(m > 0.0) || !m.is_finite() {
            return Err(Error::TailDivergence(format!(
                "reweighted density part has non-finite or zero mass {m}"
            )));
        }
        out.mass = m;
        Ok(out)
    }

    /// Image of the part under a linear map: the ray direction moves, the
    /// curve parameterization stays. Returns None when the direction dies
    /// (the image measure then has no absolutely continuous piece to keep).
    /// Reweighted parts are terminal reports, not transformable.
    pub fn pushforward(&self, lambda: &DMatrix<f64>, tol: f64) -> Option<DensityPart> {
        if self.reweight.is_some() {
            return None;
        }
        let dir = lambda * &self.dir;
        if dir.norm() <= tol {
            return None;
        }
        let mut out = self.clone();
        out.dir = dir;
        Some(out)
    }
}

/// Finite-activity jump measure: atoms plus density parts.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct JumpMeasure {
    pub atoms: Vec<JumpAtom>,
    pub parts: Vec<DensityPart>,
}

/// A finite support feature of the jump measure: either an atom (with its
/// intensity) or an endpoint of a density segment.
#[derive(Debug, Clone)]
pub enum SupportPoint {
    Atom { x: DVector<f64>, lambda: f64 },
    Edge { x: DVector<f64> },
}

impl SupportPoint {
    pub fn x(&self) -> &DVector<f64> {
        match self {
            SupportPoint::Atom { x, .. } | SupportPoint::Edge { x } => x,
        }
    }
}

/// Where the infimum of y.x over the jump support sits.
#[derive(Debug, Clone, Copy)]
pub struct SupportContact {
    /// inf { y.x : x in supp F }, taking -inf on unbounded bad directions;
    /// 0 for an empty measure (the infimum over no jumps never binds).
    pub inf: f64,
    /// True when positive mass sits exactly at the infimum (an atom there,
    /// or a whole density part collapsing onto it).
    pub mass_at_inf: bool,
}

impl JumpMeasure {
    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty() && self.parts.is_empty()
    }

    /// Total jump intensity (finite by construction).
    pub fn total_intensity(&self) -> f64 {
        self.atoms.iter().map(|a| a.lambda).sum::<f64>()
            + self.parts.iter().map(|p| p.mass).sum::<f64>()
    }

    /// Atoms and finite density endpoints; with `support_rays` this spans
    /// the support geometry used for budget and null-direction conditions.
    pub fn support_points(&self) -> Vec<SupportPoint> {
        let mut pts = Vec::new();
        for a in &self.atoms {
            pts.push(SupportPoint::Atom { x: a.x.clone(), lambda: a.lambda });
        }
        for p in &self.parts {
            pts.push(SupportPoint::Edge { x: p.point(p.t_lo) });
            if p.t_hi.is_finite() {
                pts.push(SupportPoint::Edge { x: p.point(p.t_hi) });
            }
        }
        pts
    }

    /// Directions along which the support is unbounded.
    pub fn support_rays(&self) -> Vec<DVector<f64>> {
        self.parts
            .iter()
            .filter(|p| !p.t_hi.is_finite())
            .map(|p| p.dir.clone())
            .collect()
    }

    /// Infimum of y.x over the support with attainment information.
    pub fn support_contact(&self, y: &DVector<f64>, tol: f64) -> SupportContact {
        let mut inf = f64::INFINITY;
        let mut mass_at_inf = false;
        let mut update = |v: f64, mass: bool| {
            if v < inf - tol {
                inf = v;
                mass_at_inf = mass;
            } else if v <= inf + tol {
                inf = inf.min(v);
                mass_at_inf = mass_at_inf || mass;
            }
        };
        for a in &self.atoms {
            update(y.dot(&a.x), true);
        }
        for p in &self.parts {
            let s = y.dot(&p.dir);
            if s.abs() <= tol {
                // y.x vanishes on the whole part; the contact carries mass
                // but sits at zero, which never binds a budget constraint.
                update(0.0, true);
                continue;
            }
            if p.t_hi.is_finite() {
                update((s * p.t_lo).min(s * p.t_hi), false);
            } else if s < 0.0 {
                update(f64::NEG_INFINITY, true);
            } else {
                update(s * p.t_lo, false);
            }
        }
        if self.is_empty() {
            return SupportContact { inf: 0.0, mass_at_inf: false };
        }
        SupportContact { inf, mass_at_inf }
    }

    /// Integrate f over the whole measure: exact sums over atoms plus
    /// quadrature over the parts. `part_splits` supplies forced t-breaks
    /// per part; `f_growth` as in `DensityPart::integrate`.
    pub fn integrate<F, S>(&self, f: F, f_growth: f64, part_splits: S, rel_tol: Option<f64>) -> Result<(f64, f64)>
    where
        F: Fn(&DVector<f64>) -> f64,
        S: Fn(&DensityPart) -> Vec<f64>,
    {
        let mut total = 0.0;
        let mut err = 0.0;
        for a in &self.atoms {
            total += a.lambda * f(&a.x);
        }
        for p in &self.parts {
            let splits = part_splits(p);
            let (v, e) = p.integrate(|x, _| f(x), f_growth, &splits, rel_tol)?;
            total += v;
            err += e;
        }
        Ok((total, err))
    }
}

/// Levy triplet of the d-dimensional returns process relative to the
/// truncation h: drift `b`, covariance `c`, jump measure `jumps`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LevyTriplet {
    pub b: DVector<f64>,
    pub c: DMatrix<f64>,
    pub jumps: JumpMeasure,
}

impl LevyTriplet {
    pub fn dim(&self) -> usize {
        self.b.len()
    }

    /// Drift with the truncation compensation removed: b - int h dF.
    /// Well defined for every finite-activity measure since h is bounded.
    pub fn drift_without_cutoff(&self) -> Result<DVector<f64>> {
        let d = self.dim();
        let mut b0 = self.b.clone();
        for a in &self.jumps.atoms {
            b0 -= cutoff(&a.x) * a.lambda;
        }
        for p in &self.jumps.parts {
            for j in 0..d {
                if p.dir[j] == 0.0 {
                    continue;
                }
                let (v, _) = p.integrate_inside_unit_ball(|x, _| x[j], &[], None)?;
                b0[j] -= v;
            }
        }
        Ok(b0)
    }

    /// Symmetric PSD square root of c, for driving simulations.
    pub fn diffusion_root(&self) -> DMatrix<f64> {
        let eig = self.c.clone().symmetric_eigen();
        let vals = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
        &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose()
    }
}

/// Is int_{|x|>1} |x|^p F(dx) finite? Decided from tail annotations; bounded
/// supports and p <= 0 are immediate.
pub fn pth_moment_finite(triplet: &LevyTriplet, p: f64) -> Result<bool> {
    if p <= 0.0 {
        return Ok(true);
    }
    for part in &triplet.jumps.parts {
        if part.t_hi.is_finite() {
            continue;
        }
        match part.tail {
            Some(TailModel::Power { alpha }) => {
                if p >= alpha {
                    return Ok(false);
                }
            }
            Some(TailModel::Exponential { .. }) => {}
            None => {
                return Err(Error::UnboundedSupportWithoutTailModel(
                    "moment question on an unannotated unbounded density part".into(),
                ))
            }
        }
    }
    Ok(true)
}

/// Infimum of the j-th jump component over the support: the worst single
/// move of asset j. +inf for a jump-free model.
pub fn asset_jump_floor(triplet: &LevyTriplet, j: usize) -> f64 {
    let jumps = &triplet.jumps;
    if jumps.is_empty() {
        return f64::INFINITY;
    }
    let mut floor = f64::INFINITY;
    for a in &jumps.atoms {
        floor = floor.min(a.x[j]);
    }
    for p in &jumps.parts {
        let d = p.dir[j];
        if d == 0.0 {
            floor = floor.min(0.0);
            continue;
        }
        let at_lo = p.t_lo * d;
        let at_hi = if p.t_hi.is_finite() {
            p.t_hi * d
        } else if d < 0.0 {
            f64::NEG_INFINITY
        } else {
            f64::INFINITY
        };
        floor = floor.min(at_lo.min(at_hi));
    }
    floor
}

/// Numerical tolerances used across the pipeline, with conservative
/// defaults. All are dimensionless unless stated.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Tolerances {
    /// Eigenvalue floor when checking that c is positive semidefinite.
    pub psd: f64,
    /// Relative tolerance for jump-measure quadrature.
    pub quad_rel: f64,
    /// Slack for membership / support / halfspace tests.
    pub geometry: f64,
    /// Optimizer stopping tolerance on the first-order gap.
    pub optimizer: f64,
    /// |drift residual| below this counts as the martingale property.
    pub drift: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { psd: 1e-10, quad_rel: 1e-9, geometry: 1e-9, optimizer: 1e-10, drift: 1e-7 }
    }
}

/// Investor data: utility exponent p in (-inf,0) or (0,1), consumption flag,
/// horizon, initial capital, constraint set, tolerances.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub p: f64,
    /// True when intermediate consumption enters the objective.
    pub consumption: bool,
    /// Time horizon T > 0.
    pub horizon: f64,
    /// Initial capital, strictly positive.
    pub x0: f64,
    pub constraints: crate::constraint_geometry::ConstraintSet,
    pub tol: Tolerances,
}

impl ProblemSpec {
    /// beta = 1/(1-p), the classical Merton exposure multiplier.
    pub fn beta(&self) -> f64 {
        1.0 / (1.0 - self.p)
    }
}

/// Outcome of model validation: empty `violations` means the model is usable.
#[derive(Debug, Clone, Default, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<String>,
    pub warnings: Vec<String>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Check the triplet and problem data. Diagnostic, not an error path: all
/// violations are collected so the caller can print them in one pass.
pub fn validate_model(triplet: &LevyTriplet, problem: &ProblemSpec) -> ValidationReport {
    let mut rep = ValidationReport::default();
    let d = triplet.b.len();
    let tol = problem.tol;

    if triplet.c.nrows() != d || triplet.c.ncols() != d {
        rep.violations.push(format!(
            "covariance is {}x{} but drift has dimension {d}",
            triplet.c.nrows(),
            triplet.c.ncols()
        ));
        return rep; // dimensions broken, nothing else is meaningful
    }
    let asym = (&triplet.c - triplet.c.transpose()).norm();
    if asym > tol.psd {
        rep.violations.push(format!("covariance asymmetry {asym:.3e} exceeds {:.3e}", tol.psd));
    } else {
        let eig = triplet.c.clone().symmetric_eigen();
        if let Some(min) = eig.eigenvalues.iter().cloned().reduce(f64::min) {
            if min < -tol.psd {
                rep.violations.push(format!(
                    "covariance has negative eigenvalue {min:.3e} (tolerance {:.3e})",
                    tol.psd
                ));
            }
        }
    }

    for (k, a) in triplet.jumps.atoms.iter().enumerate() {
        if a.x.len() != d {
            rep.violations.push(format!("atom {k} has dimension {} instead of {d}", a.x.len()));
            continue;
        }
        if a.x.norm() <= tol.geometry {
            rep.violations.push(format!("atom {k} sits at the origin"));
        }
        if !(a.lambda > 0.0) || !a.lambda.is_finite() {
            rep.violations.push(format!("atom {k} has non-positive intensity {}", a.lambda));
        }
    }
    for (k, part) in triplet.jumps.parts.iter().enumerate() {
        if part.dir.len() != d {
            rep.violations.push(format!("density part {k} has dimension {} instead of {d}", part.dir.len()));
            continue;
        }
        if !part.t_hi.is_finite() && part.tail.is_none() {
            rep.violations.push(format!("density part {k} is unbounded but has no tail annotation"));
        }
        // Numeric sanity: the stored mass must match the kernel integral,
        // and 1 ^ |x|^2 must integrate (automatic for finite mass, but the
        // quadrature itself can fail on bad parameters).
        match part.integrate(|_, _| 1.0, 0.0, &[], None) {
            Ok((m, _)) => {
                if (m - part.mass).abs() > 1e-6 * part.mass.max(1.0) {
                    rep.violations.push(format!(
                        "density part {k}: stored mass {} but kernel integrates to {m:.9}",
                        part.mass
                    ));
                }
            }
            Err(e) => rep.violations.push(format!("density part {k}: mass integral failed: {e}")),
        }
        match part.integrate(|x, _| x.norm_squared().min(1.0), 0.0, &[], None) {
            Ok((v, _)) => {
                if !v.is_finite() {
                    rep.violations.push(format!("density part {k}: 1^|x|^2 integral is not finite"));
                }
            }
            Err(e) => rep.violations.push(format!("density part {k}: 1^|x|^2 integral failed: {e}")),
        }
    }

    let p = problem.p;
    if !(p < 1.0) || p == 0.0 || !p.is_finite() {
        rep.violations.push(format!("utility exponent p = {p} is outside (-inf,0) u (0,1)"));
    }
    if !(problem.horizon > 0.0) {
        rep.violations.push(format!("horizon T = {} must be positive", problem.horizon));
    }
    if !(problem.x0 > 0.0) {
        rep.violations.push(format!("initial capital x0 = {} must be positive", problem.x0));
    }
    let origin = DVector::zeros(d);
    match problem.constraints.contains(&origin, tol.geometry) {
        Ok(true) => {}
        Ok(false) => rep.violations.push("constraint set does not contain the zero portfolio".into()),
        Err(e) => rep.violations.push(format!("constraint membership test failed at origin: {e}")),
    }
    if problem.constraints.dim() != d {
        rep.violations.push(format!(
            "constraint set dimension {} does not match model dimension {d}",
            problem.constraints.dim()
        ));
    }
    rep
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_dir() -> DVector<f64> {
        DVector::from_row_slice(&[1.0])
    }

    #[test]
    fn uniform_part_mass_and_mean() {
        let p = DensityPart::new(
            unit_dir(),
            -1.0,
            -0.5,
            DensityProfile::Uniform,
            0.3,
            None,
            QuadSpec::default(),
        )
        .unwrap();
        let (m, _) = p.integrate(|_, _| 1.0, 0.0, &[], None).unwrap();
        assert!((m - 0.3).abs() < 1e-12, "mass {m}");
        let (mean, _) = p.integrate(|x, _| x[0], 0.0, &[], None).unwrap();
        assert!((mean - 0.3 * -0.75).abs() < 1e-12, "first moment {mean}");
    }

    #[test]
    fn pareto_part_tail_moments() {
        let p = DensityPart::new(
            unit_dir(),
            1.0,
            f64::INFINITY,
            DensityProfile::Pareto { alpha: 1.2 },
            0.2,
            None,
            QuadSpec::default(),
        )
        .unwrap();
        let (m, _) = p.integrate(|_, _| 1.0, 0.0, &[], None).unwrap();
        assert!((m - 0.2).abs() < 1e-10, "mass {m}");
        // E[t^0.5] under pareto(1.2) on [1,inf) is alpha/(alpha-0.5).
        let (half_mom, _) = p.integrate(|x, _| x[0].sqrt(), 0.5, &[], None).unwrap();
        let expect = 0.2 * 1.2 / 0.7;
        assert!((half_mom - expect).abs() < 1e-8, "{half_mom} vs {expect}");
        // First moment is still finite (alpha > 1)...
        let (first, _) = p.integrate(|x, _| x[0], 1.0, &[], None).unwrap();
        assert!((first - 0.2 * 6.0).abs() < 1e-8, "{first}");
        // ...but the 1.3-moment diverges (alpha < 1.3) and must say so.
        assert!(p.integrate(|x, _| x[0].powf(1.3), 1.3, &[], None).is_err());
    }

    #[test]
    fn shifted_power_density_normalizes() {
        let p = DensityPart::new(
            unit_dir(),
            -0.5,
            -0.3,
            DensityProfile::ShiftedPower { shift: -0.5, power: 2.0 },
            1.0,
            None,
            QuadSpec::default(),
        )
        .unwrap();
        let (m, _) = p.integrate(|_, _| 1.0, 0.0, &[], None).unwrap();
        assert!((m - 1.0).abs() < 1e-12, "mass {m}");
        // pdf at the right endpoint: 375 * (0.2)^2 = 15.
        assert!((p.density_t(-0.3) - 15.0).abs() < 1e-9, "{}", p.density_t(-0.3));
    }

    #[test]
    fn support_contact_flags_atom_mass() {
        let jumps = JumpMeasure {
            atoms: vec![JumpAtom { x: DVector::from_row_slice(&[-1.0]), lambda: 0.4 }],
            parts: vec![],
        };
        let y = DVector::from_row_slice(&[1.0]);
        let c = jumps.support_contact(&y, 1e-12);
        assert!((c.inf + 1.0).abs() < 1e-15);
        assert!(c.mass_at_inf, "atom contact must carry mass");
    }

    #[test]
    fn support_contact_density_edge_is_massless() {
        let jumps = JumpMeasure {
            atoms: vec![],
            parts: vec![DensityPart::new(
                unit_dir(),
                -1.0,
                -0.5,
                DensityProfile::Uniform,
                0.3,
                None,
                QuadSpec::default(),
            )
            .unwrap()],
        };
        let y = DVector::from_row_slice(&[1.0]);
        let c = jumps.support_contact(&y, 1e-12);
        assert!((c.inf + 1.0).abs() < 1e-15);
        assert!(!c.mass_at_inf, "continuous edge contact carries no mass");
        // Reversed direction: unbounded only if the part is unbounded; here
        // the infimum is at the other endpoint.
        let c2 = jumps.support_contact(&(-y), 1e-12);
        assert!((c2.inf - 0.5).abs() < 1e-15);
    }

    #[test]
    fn moment_finiteness_follows_annotation() {
        let mk = |alpha: f64| LevyTriplet {
            b: DVector::from_row_slice(&[0.05]),
            c: DMatrix::from_row_slice(1, 1, &[0.04]),
            jumps: JumpMeasure {
                atoms: vec![],
                parts: vec![DensityPart::new(
                    unit_dir(),
                    1.0,
                    f64::INFINITY,
                    DensityProfile::Pareto { alpha },
                    0.2,
                    None,
                    QuadSpec::default(),
                )
                .unwrap()],
            },
        };
        assert!(!pth_moment_finite(&mk(0.3), 0.5).unwrap());
        assert!(pth_moment_finite(&mk(0.7), 0.5).unwrap());
        assert!(pth_moment_finite(&mk(0.3), -2.0).unwrap(), "negative p never needs tails");
    }

    #[test]
    fn jump_floor_cases() {
        let t = LevyTriplet {
            b: DVector::from_row_slice(&[0.0]),
            c: DMatrix::from_row_slice(1, 1, &[0.0]),
            jumps: JumpMeasure {
                atoms: vec![JumpAtom { x: DVector::from_row_slice(&[-0.6]), lambda: 1.0 }],
                parts: vec![],
            },
        };
        assert!((asset_jump_floor(&t, 0) + 0.6).abs() < 1e-15);
        let empty = LevyTriplet {
            b: DVector::from_row_slice(&[0.0]),
            c: DMatrix::from_row_slice(1, 1, &[0.0]),
            jumps: JumpMeasure::default(),
        };
        assert_eq!(asset_jump_floor(&empty, 0), f64::INFINITY);
    }

    #[test]
    fn drift_without_cutoff_compound_poisson() {
        // b = 0.1, one atom at 0.5 with intensity 1: b0 = 0.1 - 0.5 = -0.4.
        let t = LevyTriplet {
            b: DVector::from_row_slice(&[0.1]),
            c: DMatrix::from_row_slice(1, 1, &[0.0]),
            jumps: JumpMeasure {
                atoms: vec![JumpAtom { x: DVector::from_row_slice(&[0.5]), lambda: 1.0 }],
                parts: vec![],
            },
        };
        let b0 = t.drift_without_cutoff().unwrap();
        assert!((b0[0] + 0.4).abs() < 1e-15, "{}", b0[0]);
    }

    #[test]
    fn reweighting_recomputes_mass_and_tail() {
        let p = DensityPart::new(
            unit_dir(),
            1.0,
            f64::INFINITY,
            DensityProfile::Pareto { alpha: 1.2 },
            0.2,
            None,
            QuadSpec::default(),
        )
        .unwrap();
        let v = DVector::from_row_slice(&[0.5]);
        let rw = p.reweighted(&v, -0.5).unwrap();
        assert!(matches!(rw.tail, Some(TailModel::Power { alpha }) if (alpha - 1.7).abs() < 1e-12));
        // Weight < 1 everywhere on [1, inf) for e < 0, so mass shrinks.
        assert!(rw.mass < 0.2 && rw.mass > 0.0, "mass {}", rw.mass);
        let (m, _) = rw.integrate(|_, _| 1.0, 0.0, &[], None).unwrap();
        assert!((m - rw.mass).abs() < 1e-9);
    }

    #[test]
    fn validation_catches_broken_models() {
        let t = LevyTriplet {
            b: DVector::from_row_slice(&[0.1, 0.0]),
            c: DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]), // indefinite
            jumps: JumpMeasure {
                atoms: vec![JumpAtom { x: DVector::from_row_slice(&[0.0, 0.0]), lambda: 1.0 }],
                parts: vec![],
            },
        };
        let problem = ProblemSpec {
            p: 0.0,
            consumption: false,
            horizon: -1.0,
            x0: 1.0,
            constraints: crate::constraint_geometry::ConstraintSet::Whole { dim: 2 },
            tol: Tolerances::default(),
        };
        let rep = validate_model(&t, &problem);
        assert!(!rep.is_valid());
        let text = rep.violations.join("\n");
        assert!(text.contains("negative eigenvalue"), "{text}");
        assert!(text.contains("origin"), "{text}");
        assert!(text.contains("p = 0"), "{text}");
        assert!(text.contains("horizon"), "{text}");
    }
}
