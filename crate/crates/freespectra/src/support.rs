//! Supports of the limiting laws of deformed models.
//!
//! Off the support of `ν` each model has a support map
//!
//! * additive:       `φ(u) = u + σ²·g_ν(u)`
//! * multiplicative: `φ(u) = u + c·u·∫ t/(u−t) dν(t) = u(1−c) + c·u²·g_ν(u)`
//! * info + noise:   `φ(u) = u(1+cσ²g_ν(u))² + σ²(1−c)(1+cσ²g_ν(u))`
//!
//! and an admissible set `𝒪 = {u ∉ supp(ν) : φ'(u) > 0}` (the
//! information-plus-noise model additionally requires
//! `g_ν(u) > −1/(σ²c)`). The complement of `𝒪` is a finite union of closed
//! blocks `[u_l, v_l]` containing `supp(ν)`, and the limiting support is the
//! union of `[φ(u_l⁻), φ(v_l⁺)]` with interval masses `ν([u_l, v_l])`. An
//! edge is regular when its block end stays away from `supp(ν)`; the density
//! then vanishes like a square root there.
//!
//! `varphi` is the inverse map on the spectrum side, computed from the
//! model's own Stieltjes transform extended to the real axis. `mobile_edges`
//! runs the same machinery on an empirical atomic measure `ν_N`, producing
//! the deterministic-equivalent support whose gaps contain no eigenvalues.

use crate::freeconv::{self, SolverConfig};
use crate::measures::{Measure, SUPPORT_GUARD};
use crate::{Error, Result};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

const MAX_COMPONENTS: usize = 16;
const MOBILE_MAX_ATOMS: usize = 10_000;
const PROBES_PER_GAP: usize = 512;
const BISECT_TOL: f64 = 1e-10;

/// A deformed random matrix model: the deformation's limiting spectral
/// measure `nu` plus the noise parameters. The i.i.d. kinds fix the other
/// factor to the semicircle law (`Additive`), the Marchenko-Pastur law
/// (`Multiplicative`) or its rectangular analogue (`InfoPlusNoise`); the
/// isotropic kinds take an arbitrary compactly supported `mu`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DeformedModel {
    Additive { nu: Measure, sigma: f64 },
    Multiplicative { nu: Measure, c: f64 },
    InfoPlusNoise { nu: Measure, sigma: f64, c: f64 },
    IsotropicAdditive { mu: Measure, nu: Measure },
    IsotropicMultiplicative { mu: Measure, nu: Measure },
}

impl DeformedModel {
    pub fn additive(nu: Measure, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::Invalid(format!("sigma {sigma} must be > 0")));
        }
        Ok(DeformedModel::Additive { nu, sigma })
    }

    pub fn multiplicative(nu: Measure, c: f64) -> Result<Self> {
        if !(c > 0.0 && c <= 1.0) {
            return Err(Error::Invalid(format!("c = {c} must lie in (0, 1]")));
        }
        if nu.support_lo() < -1e-12 {
            return Err(Error::Invalid("multiplicative nu must live on [0, inf)".into()));
        }
        Ok(DeformedModel::Multiplicative { nu, c })
    }

    pub fn info_plus_noise(nu: Measure, sigma: f64, c: f64) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::Invalid(format!("sigma {sigma} must be > 0")));
        }
        if !(c > 0.0 && c <= 1.0) {
            return Err(Error::Invalid(format!("c = {c} must lie in (0, 1]")));
        }
        if nu.support_lo() < -1e-12 {
            return Err(Error::Invalid("information-plus-noise nu must live on [0, inf)".into()));
        }
        Ok(DeformedModel::InfoPlusNoise { nu, sigma, c })
    }

    pub fn isotropic_additive(mu: Measure, nu: Measure) -> Result<Self> {
        Ok(DeformedModel::IsotropicAdditive { mu, nu })
    }

    pub fn isotropic_multiplicative(mu: Measure, nu: Measure) -> Result<Self> {
        if mu.support_lo() < -1e-12 || nu.support_lo() < -1e-12 {
            return Err(Error::Invalid("isotropic multiplicative factors must live on [0, inf)".into()));
        }
        Ok(DeformedModel::IsotropicMultiplicative { mu, nu })
    }

    /// The deformation's limiting measure.
    pub fn nu(&self) -> &Measure {
        match self {
            DeformedModel::Additive { nu, .. }
            | DeformedModel::Multiplicative { nu, .. }
            | DeformedModel::InfoPlusNoise { nu, .. }
            | DeformedModel::IsotropicAdditive { nu, .. }
            | DeformedModel::IsotropicMultiplicative { nu, .. } => nu,
        }
    }

    /// Same model with the deformation measure replaced (used for
    /// deterministic equivalents, where `nu` becomes the empirical `ν_N`).
    pub fn with_nu(&self, nu: Measure) -> DeformedModel {
        let mut m = self.clone();
        match &mut m {
            DeformedModel::Additive { nu: n, .. }
            | DeformedModel::Multiplicative { nu: n, .. }
            | DeformedModel::InfoPlusNoise { nu: n, .. }
            | DeformedModel::IsotropicAdditive { nu: n, .. }
            | DeformedModel::IsotropicMultiplicative { nu: n, .. } => *n = nu,
        }
        m
    }

    /// Crude outer bounds for the limiting support, with margin; good enough
    /// to place scan grids and density grids.
    pub fn crude_support_bounds(&self) -> (f64, f64) {
        match self {
            DeformedModel::Additive { nu, sigma } => {
                (nu.support_lo() - 2.0 * sigma - 1.0, nu.support_hi() + 2.0 * sigma + 1.0)
            }
            DeformedModel::Multiplicative { nu, c } => {
                let sq = c.sqrt();
                (-0.5, nu.support_hi() * (1.0 + sq) * (1.0 + sq) + 1.0)
            }
            DeformedModel::InfoPlusNoise { nu, sigma, c } => {
                let top = sigma * (1.0 + c.sqrt()) + nu.support_hi().max(0.0).sqrt();
                (-0.5, top * top + 1.0)
            }
            DeformedModel::IsotropicAdditive { mu, nu } => (
                mu.support_lo() + nu.support_lo() - 1.0,
                mu.support_hi() + nu.support_hi() + 1.0,
            ),
            DeformedModel::IsotropicMultiplicative { mu, nu } => {
                (-0.5, mu.support_hi() * nu.support_hi() + 1.0)
            }
        }
    }

    /// Reduce an isotropic model to the equivalent i.i.d. model when one of
    /// its factors is a named semicircle or Marchenko-Pastur law (free
    /// convolution is commutative, so either slot works).
    pub fn as_iid(&self) -> Option<DeformedModel> {
        use crate::measures::MeasureKind;
        match self {
            DeformedModel::IsotropicAdditive { mu, nu } => match (mu.kind(), nu.kind()) {
                (MeasureKind::Semicircle { sigma }, _) => {
                    Some(DeformedModel::Additive { nu: nu.clone(), sigma: *sigma })
                }
                (_, MeasureKind::Semicircle { sigma }) => {
                    Some(DeformedModel::Additive { nu: mu.clone(), sigma: *sigma })
                }
                _ => None,
            },
            DeformedModel::IsotropicMultiplicative { mu, nu } => match (mu.kind(), nu.kind()) {
                (MeasureKind::MarchenkoPastur { c }, _) => {
                    Some(DeformedModel::Multiplicative { nu: nu.clone(), c: *c })
                }
                (_, MeasureKind::MarchenkoPastur { c }) => {
                    Some(DeformedModel::Multiplicative { nu: mu.clone(), c: *c })
                }
                _ => None,
            },
            other => Some(other.clone()),
        }
    }
}

/// One closed interval of the limiting support with its mass and edge
/// regularity flags.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SupportInterval {
    pub lo: f64,
    pub hi: f64,
    pub mass: f64,
    pub lo_regular: bool,
    pub hi_regular: bool,
}

/// Ordered description of the limiting support: disjoint closed intervals,
/// the optional atom at zero of the multiplicative models, and the preimage
/// blocks `[u_l, v_l]` on the `ν` side.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SupportDescription {
    pub intervals: Vec<SupportInterval>,
    pub atom_at_zero: Option<f64>,
    pub preimage_intervals: Vec<(f64, f64)>,
}

impl SupportDescription {
    /// Distance from `x` to the support (0 inside; the atom at zero counts).
    pub fn dist(&self, x: f64) -> f64 {
        let mut d = f64::INFINITY;
        for iv in &self.intervals {
            d = d.min(if x < iv.lo {
                iv.lo - x
            } else if x > iv.hi {
                x - iv.hi
            } else {
                0.0
            });
        }
        if self.atom_at_zero.is_some() {
            d = d.min(x.abs());
        }
        d
    }

    /// Total accounted mass: interval masses plus the atom when it is not
    /// already inside an interval.
    pub fn total_mass(&self) -> f64 {
        let ivs: f64 = self.intervals.iter().map(|iv| iv.mass).sum();
        match self.atom_at_zero {
            Some(w) if !self.intervals.iter().any(|iv| iv.lo <= 0.0 && 0.0 <= iv.hi) => ivs + w,
            _ => ivs,
        }
    }

    /// Hull of the support.
    pub fn bounds(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for iv in &self.intervals {
            lo = lo.min(iv.lo);
            hi = hi.max(iv.hi);
        }
        if self.atom_at_zero.is_some() {
            lo = lo.min(0.0);
            hi = hi.max(0.0);
        }
        (lo, hi)
    }

    /// The maximal open gap `(lo, hi)` of the support containing `[a, b]`,
    /// if there is one. Gaps include the two unbounded rays.
    pub fn gap_containing(&self, a: f64, b: f64) -> Option<(f64, f64)> {
        if a > b || self.dist(a) == 0.0 || self.dist(b) == 0.0 {
            return None;
        }
        let mut edges: Vec<(f64, f64)> = self.intervals.iter().map(|iv| (iv.lo, iv.hi)).collect();
        if let Some(_) = self.atom_at_zero {
            edges.push((0.0, 0.0));
        }
        edges.sort_by(|x, y| x.0.total_cmp(&y.0));
        let mut lo = f64::NEG_INFINITY;
        for (ivlo, ivhi) in &edges {
            if b < *ivlo {
                return if a > lo { Some((lo, *ivlo)) } else { None };
            }
            lo = lo.max(*ivhi);
        }
        (a > lo).then_some((lo, f64::INFINITY))
    }
}

/// Support map `φ(u)` of the model at `u ∉ supp(ν)`.
///
/// Isotropic models without a named semicircle/MP factor have no global
/// `φ` function (the subordination can be many-to-one); use the root scans
/// in [`crate::spiked`] for those.
pub fn phi(model: &DeformedModel, u: f64) -> Result<f64> {
    let model = iid_or_err(model)?;
    let nu = model.nu();
    let g = nu.stieltjes(Complex64::new(u, 0.0))?.re;
    Ok(phi_from_g(&model, u, g))
}

fn phi_from_g(model: &DeformedModel, u: f64, g: f64) -> f64 {
    match model {
        DeformedModel::Additive { sigma, .. } => u + sigma * sigma * g,
        DeformedModel::Multiplicative { c, .. } => u * (1.0 - c) + c * u * u * g,
        DeformedModel::InfoPlusNoise { sigma, c, .. } => {
            let k = 1.0 + c * sigma * sigma * g;
            u * k * k + sigma * sigma * (1.0 - c) * k
        }
        _ => unreachable!("phi is defined for i.i.d. kinds"),
    }
}

/// Exact analytic derivative `φ'(u)`.
pub fn phi_prime(model: &DeformedModel, u: f64) -> Result<f64> {
    let model = iid_or_err(model)?;
    let nu = model.nu();
    let z = Complex64::new(u, 0.0);
    let g = nu.stieltjes(z)?.re;
    let gp = nu.stieltjes_prime(z)?.re;
    Ok(phi_prime_from_g(&model, u, g, gp))
}

fn phi_prime_from_g(model: &DeformedModel, u: f64, g: f64, gp: f64) -> f64 {
    match model {
        DeformedModel::Additive { sigma, .. } => 1.0 + sigma * sigma * gp,
        DeformedModel::Multiplicative { c, .. } => (1.0 - c) + c * (2.0 * u * g + u * u * gp),
        DeformedModel::InfoPlusNoise { sigma, c, .. } => {
            let s2 = sigma * sigma;
            let k = 1.0 + c * s2 * g;
            k * k + c * s2 * gp * (2.0 * u * k + s2 * (1.0 - c))
        }
        _ => unreachable!("phi_prime is defined for i.i.d. kinds"),
    }
}

fn iid_or_err(model: &DeformedModel) -> Result<DeformedModel> {
    model.as_iid().ok_or_else(|| {
        Error::Invalid(
            "support maps need an i.i.d.-type model (or an isotropic model with a named \
             semicircle/Marchenko-Pastur factor); use the isotropic root scans instead"
                .into(),
        )
    })
}

/// The admissible-set indicator: positive exactly on `𝒪`.
fn admissibility(model: &DeformedModel, u: f64) -> Result<f64> {
    let nu = model.nu();
    let z = Complex64::new(u, 0.0);
    let g = nu.stieltjes(z)?.re;
    let gp = nu.stieltjes_prime(z)?.re;
    let p = phi_prime_from_g(model, u, g, gp);
    Ok(match model {
        DeformedModel::InfoPlusNoise { sigma, c, .. } => {
            p.min(g + 1.0 / (sigma * sigma * c))
        }
        _ => p,
    })
}

#[derive(Clone, Copy)]
struct ScanOptions {
    allow_many_components: bool,
    fast_gap_skip: bool,
}

/// Admissible set `𝒪` as ordered open intervals; the two unbounded rays are
/// reported with infinite ends.
pub fn admissible_set(model: &DeformedModel) -> Result<Vec<(f64, f64)>> {
    let model = iid_or_err(model)?;
    admissible_set_impl(&model, ScanOptions { allow_many_components: false, fast_gap_skip: false })
}

fn admissible_set_impl(model: &DeformedModel, opts: ScanOptions) -> Result<Vec<(f64, f64)>> {
    let nu = model.nu();
    let comps = nu.support_components();
    if comps.is_empty() {
        return Err(Error::Invalid("nu has empty support".into()));
    }
    if !opts.allow_many_components && comps.len() > MAX_COMPONENTS {
        return Err(Error::ComponentOverflow(comps.len(), MAX_COMPONENTS));
    }

    let span = (comps[comps.len() - 1].1 - comps[0].0).max(1.0);
    let mut out: Vec<(f64, f64)> = Vec::new();

    // Region list: left ray, interior gaps, right ray. Rays get a finite scan
    // window; phi' tends to 1 at infinity so the window only needs to cover
    // the last sign change.
    let n_gaps = comps.len() + 1;
    let inner_probes = if !opts.allow_many_components || n_gaps <= 64 {
        PROBES_PER_GAP
    } else if n_gaps <= 256 {
        32
    } else {
        8
    };

    for region_idx in 0..n_gaps {
        let (lo, hi, is_left_ray, is_right_ray) = if region_idx == 0 {
            let edge = comps[0].0;
            let ext = 10.0 * (1.0 + edge.abs()) + span;
            (edge - ext, edge, true, false)
        } else if region_idx == comps.len() {
            let edge = comps[comps.len() - 1].1;
            let ext = 10.0 * (1.0 + edge.abs()) + span;
            (edge, edge + ext, false, true)
        } else {
            (comps[region_idx - 1].1, comps[region_idx].0, false, false)
        };
        let width = hi - lo;
        if width <= 2.0 * SUPPORT_GUARD && !(is_left_ray || is_right_ray) {
            continue;
        }

        // Rigorous negativity bound for narrow interior gaps between atoms.
        if opts.fast_gap_skip && !is_left_ray && !is_right_ray {
            if gap_certainly_negative(model, lo, hi) {
                continue;
            }
        }

        let probes = if is_left_ray || is_right_ray { PROBES_PER_GAP } else { inner_probes };
        let mut points = probe_points(lo, hi, probes, is_left_ray, is_right_ray);

        // Widen a ray window if the indicator has not turned positive yet.
        if is_right_ray {
            let mut hi2 = hi;
            for _ in 0..3 {
                if admissibility(model, hi2)? > 0.0 {
                    break;
                }
                hi2 = hi + 4.0 * (hi2 - hi).max(hi - lo);
                points = probe_points(lo, hi2, probes, false, true);
            }
        } else if is_left_ray {
            let mut lo2 = lo;
            for _ in 0..3 {
                if admissibility(model, lo2)? > 0.0 {
                    break;
                }
                lo2 = hi - 4.0 * (hi - lo2).max(hi - lo);
                points = probe_points(lo2, hi, probes, true, false);
            }
        }

        let values: Vec<f64> = points
            .iter()
            .map(|&u| admissibility(model, u))
            .collect::<Result<_>>()?;

        // Assemble sign runs; bisect the crossings.
        let mut run_start: Option<f64> = None;
        for i in 0..points.len() {
            let pos = values[i] > 0.0;
            if pos && run_start.is_none() {
                run_start = Some(if i == 0 {
                    if is_left_ray {
                        f64::NEG_INFINITY
                    } else {
                        lo // positive right up to the support component
                    }
                } else {
                    bisect_sign_change(model, points[i - 1], points[i])?
                });
            } else if !pos && run_start.is_some() {
                let end = bisect_sign_change(model, points[i - 1], points[i])?;
                out.push((run_start.take().unwrap(), end));
            }
        }
        if let Some(start) = run_start {
            let end = if is_right_ray { f64::INFINITY } else { hi };
            out.push((start, end));
        }
    }

    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(out)
}

/// `φ'(u) < 0` throughout a narrow gap between two adjacent atoms, certified
/// by the nearest-atom lower bound on the integral term. Keeps deterministic
/// equivalents with thousands of atoms affordable.
fn gap_certainly_negative(model: &DeformedModel, lo: f64, hi: f64) -> bool {
    let delta = hi - lo;
    let nu = model.nu();
    let (wl, wr) = (nu.atom_mass_at(lo), nu.atom_mass_at(hi));
    if wl == 0.0 || wr == 0.0 {
        return false;
    }
    match model {
        DeformedModel::Additive { sigma, .. } => {
            // phi' <= 1 - sigma^2 * 4*min(w_l, w_r)/delta^2
            sigma * sigma * 4.0 * wl.min(wr) / (delta * delta) > 1.0
        }
        DeformedModel::Multiplicative { c, .. } => {
            // phi_2' = 1 - c * Int x^2/(u-x)^2 dnu <= 1 - c*4*min(w x^2)/delta^2
            c * 4.0 * (wl * lo * lo).min(wr * hi * hi) / (delta * delta) > 1.0
        }
        _ => false,
    }
}

fn probe_points(lo: f64, hi: f64, n: usize, left_ray: bool, right_ray: bool) -> Vec<f64> {
    let width = hi - lo;
    let off = (SUPPORT_GUARD * 2.0).max(width * 1e-12);
    let (a, b) = (lo + off, hi - off);
    let mut pts: Vec<f64> = (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect();
    // geometric ladders toward support edges catch thin admissible slivers
    let mut ladder = |edge: f64, sign: f64| {
        let mut h = width * 1e-6;
        while h < width * 0.4 {
            pts.push(edge + sign * h);
            h *= 4.0;
        }
    };
    if !left_ray {
        ladder(lo, 1.0);
    }
    if !right_ray {
        ladder(hi, -1.0);
    }
    pts.retain(|u| *u >= a && *u <= b);
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    pts
}

fn bisect_sign_change(model: &DeformedModel, mut a: f64, mut b: f64) -> Result<f64> {
    let fa = admissibility(model, a)?;
    let mut sign_a = fa > 0.0;
    for _ in 0..200 {
        if b - a <= BISECT_TOL * (1.0 + a.abs().max(b.abs())) {
            break;
        }
        let mid = 0.5 * (a + b);
        let fm = admissibility(model, mid)?;
        if (fm > 0.0) == sign_a {
            a = mid;
            sign_a = fm > 0.0;
        } else {
            b = mid;
        }
    }
    Ok(0.5 * (a + b))
}

/// One-sided value `φ(edge ∓ h)`, `h → 0`, by polynomial extrapolation over
/// `h ∈ {1e-4, 1e-5, 1e-6}` when the block end sticks to `supp(ν)`, and by
/// direct evaluation otherwise.
fn phi_one_sided(model: &DeformedModel, edge: f64, from_below: bool) -> Result<f64> {
    let nu = model.nu();
    if nu.dist_to_support(edge) > 2.0 * SUPPORT_GUARD {
        return phi(model, edge);
    }
    let hs = [1e-4, 1e-5, 1e-6];
    let sign = if from_below { -1.0 } else { 1.0 };
    let mut vals = [0.0; 3];
    for (i, h) in hs.iter().enumerate() {
        vals[i] = phi(model, edge + sign * h)?;
    }
    let mut out = 0.0;
    for i in 0..3 {
        let mut li = 1.0;
        for j in 0..3 {
            if j != i {
                li *= (0.0 - hs[j]) / (hs[i] - hs[j]);
            }
        }
        out += li * vals[i];
    }
    Ok(out)
}

/// Interval description of the limiting support per the block decomposition
/// of the admissible set.
pub fn support_intervals(model: &DeformedModel) -> Result<SupportDescription> {
    match model.as_iid() {
        Some(iid) => support_intervals_impl(
            &iid,
            ScanOptions { allow_many_components: false, fast_gap_skip: false },
        ),
        None => isotropic_support_by_density(model),
    }
}

fn support_intervals_impl(model: &DeformedModel, opts: ScanOptions) -> Result<SupportDescription> {
    let admissible = admissible_set_impl(model, opts)?;
    if admissible.len() < 2 {
        return Err(Error::Evaluation(
            "admissible set has fewer than two components; support scan failed".into(),
        ));
    }
    let nu = model.nu();
    let mut intervals = Vec::new();
    let mut preimages = Vec::new();
    let mut atom_at_zero = match model {
        DeformedModel::Multiplicative { nu, .. } => {
            let w = nu.atom_mass_at(0.0);
            (w > 0.0).then_some(w)
        }
        _ => None,
    };

    for k in 0..admissible.len() - 1 {
        let u = admissible[k].1;
        let v = admissible[k + 1].0;
        if v - u <= BISECT_TOL * (1.0 + u.abs()) {
            // degenerate block: the multiplicative atom at zero
            if u.abs() < 1e-8 {
                let w = nu.atom_mass_at(0.0);
                if w > 0.0 {
                    atom_at_zero = Some(w);
                    continue;
                }
            }
        }
        let lo = phi_one_sided(model, u, true)?;
        let hi = phi_one_sided(model, v, false)?;
        let mass = nu.mass_on(u, v);
        intervals.push(SupportInterval {
            lo,
            hi,
            mass,
            lo_regular: nu.dist_to_support(u) > 2.0 * SUPPORT_GUARD,
            hi_regular: nu.dist_to_support(v) > 2.0 * SUPPORT_GUARD,
        });
        preimages.push((u, v));
    }
    Ok(SupportDescription { intervals, atom_at_zero, preimage_intervals: preimages })
}

/// Fallback support computation for isotropic models without a named factor:
/// scan the convolved density for components above threshold. Preimages are
/// taken through the subordination extension; edges are not flagged regular.
fn isotropic_support_by_density(model: &DeformedModel) -> Result<SupportDescription> {
    let cfg = SolverConfig { max_iter: 200_000, ..SolverConfig::default() };
    let (lo, hi) = model.crude_support_bounds();
    let n = 4000;
    let grid: Vec<f64> = (0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect();
    let density = freeconv::convolve_density(model, &grid, 1e-6, &cfg)?;
    let comps: Vec<(f64, f64)> = density
        .support_components()
        .into_iter()
        .filter(|&(a, b)| b > a) // drop declared atoms
        .collect();
    let nu = model.nu();
    let mut intervals = Vec::new();
    let mut preimages = Vec::new();
    for &(a, b) in &comps {
        let mass = density.mass_on(a, b);
        let pa = varphi(model, a - 1e-3 * (1.0 + a.abs()), &cfg).unwrap_or(f64::NAN);
        let pb = varphi(model, b + 1e-3 * (1.0 + b.abs()), &cfg).unwrap_or(f64::NAN);
        intervals.push(SupportInterval { lo: a, hi: b, mass, lo_regular: false, hi_regular: false });
        preimages.push((pa, pb));
    }
    let atom_at_zero = match model {
        DeformedModel::IsotropicMultiplicative { mu, nu } => {
            let w = mu.atom_mass_at(0.0).max(nu.atom_mass_at(0.0));
            (w > 0.0).then_some(w)
        }
        _ => {
            let w = nu.atom_mass_at(0.0);
            (matches!(model, DeformedModel::Multiplicative { .. }) && w > 0.0).then_some(w)
        }
    };
    Ok(SupportDescription { intervals, atom_at_zero, preimage_intervals: preimages })
}

/// Subordination-side inverse `varphi(x)` on `ℝ∖supp(μᵢ)`:
///
/// * additive:       `x − σ²·g(x)`
/// * multiplicative: `x / (1−c + c·x·g(x))` for `c < 1`, `1/g(x)` for `c = 1`
/// * info + noise:   `x(1−cσ²g(x))² − (1−c)σ²(1−cσ²g(x))`
/// * isotropic:      the real-axis extension of the `ν`-side subordination
///
/// where `g` is the model's own Stieltjes transform extended to the real
/// axis. Satisfies `phi(varphi(x)) = x` on the admissible range.
pub fn varphi(model: &DeformedModel, x: f64, cfg: &SolverConfig) -> Result<f64> {
    match model.as_iid() {
        Some(iid) => {
            let g = freeconv::model_g_real(&iid, x, cfg)?.re;
            varphi_from_g(&iid, x, g)
        }
        None => match model {
            DeformedModel::IsotropicAdditive { mu, nu } => {
                let mut guess = None;
                let omega2 = freeconv::real_axis_limit(|y| {
                    let r = freeconv::additive_subordination_from(
                        mu,
                        nu,
                        Complex64::new(x, y),
                        cfg,
                        guess,
                    )?;
                    guess = Some(r.omega1);
                    Ok(r.omega2)
                })?;
                Ok(omega2.re)
            }
            DeformedModel::IsotropicMultiplicative { mu, nu } => {
                let mut guess = None;
                let f2 = freeconv::real_axis_limit(|y| {
                    let z = 1.0 / Complex64::new(x, y);
                    let r = freeconv::multiplicative_subordination_from(mu, nu, z, cfg, guess)?;
                    guess = Some(r.f1 / z);
                    Ok(r.f2)
                })?;
                if f2.norm() == 0.0 {
                    return Err(Error::DivisionByZero("varphi"));
                }
                Ok((1.0 / f2).re)
            }
            _ => unreachable!(),
        },
    }
}

fn varphi_from_g(model: &DeformedModel, x: f64, g: f64) -> Result<f64> {
    match model {
        DeformedModel::Additive { sigma, .. } => Ok(x - sigma * sigma * g),
        DeformedModel::Multiplicative { c, .. } => {
            if *c == 1.0 {
                if g == 0.0 {
                    return Err(Error::DivisionByZero("varphi"));
                }
                Ok(1.0 / g)
            } else {
                let denom = 1.0 - c + c * x * g;
                if denom == 0.0 {
                    return Err(Error::DivisionByZero("varphi"));
                }
                Ok(x / denom)
            }
        }
        DeformedModel::InfoPlusNoise { sigma, c, .. } => {
            let s2 = sigma * sigma;
            let k = 1.0 - c * s2 * g;
            Ok(x * k * k - (1.0 - c) * s2 * k)
        }
        _ => unreachable!(),
    }
}

/// Deterministic-equivalent support: the same block decomposition applied to
/// an empirical atomic measure `ν_N` (at most 10⁴ atoms). Gaps of the result
/// contain no eigenvalue of the deformed matrix, almost surely for large N.
pub fn mobile_edges(model: &DeformedModel) -> Result<SupportDescription> {
    let model = iid_or_err(model)?;
    let atoms = model.nu().atoms();
    if atoms.is_empty() {
        return Err(Error::Invalid("mobile_edges needs an atomic nu".into()));
    }
    if atoms.len() > MOBILE_MAX_ATOMS {
        return Err(Error::ComponentOverflow(atoms.len(), MOBILE_MAX_ATOMS));
    }
    support_intervals_impl(
        &model,
        ScanOptions { allow_many_components: true, fast_gap_skip: true },
    )
}

/// Least-squares slope of `log density` against `log distance` approaching a
/// support edge from inside; a regular edge gives slope ≈ 1/2.
///
/// `side = +1` fits at the right edge `d` over `x = d − t`, `side = −1` at a
/// left edge over `x = d + t`, with `t` log-spaced in `[1e-4, 1e-2]`.
pub fn regular_edge_slope(
    model: &DeformedModel,
    edge: f64,
    side: f64,
    cfg: &SolverConfig,
) -> Result<f64> {
    let n = 16;
    let mut logs = Vec::with_capacity(n);
    let mut guess = None;
    for i in 0..n {
        let t = 1e-4 * (1e2f64).powf(i as f64 / (n - 1) as f64);
        let x = edge - side * t;
        let y = 1e-9;
        let (g, state) = freeconv::model_g_from(model, Complex64::new(x, y), cfg, guess)?;
        guess = Some(state);
        let p = (-g.im / std::f64::consts::PI).max(f64::MIN_POSITIVE);
        logs.push((t.ln(), p.ln()));
    }
    let n = logs.len() as f64;
    let sx: f64 = logs.iter().map(|p| p.0).sum();
    let sy: f64 = logs.iter().map(|p| p.1).sum();
    let sxx: f64 = logs.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = logs.iter().map(|p| p.0 * p.1).sum();
    Ok((n * sxy - sx * sy) / (n * sxx - sx * sx))
}
