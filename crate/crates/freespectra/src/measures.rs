//! Compactly supported probability measures and their scalar transforms.
//!
//! A [`Measure`] is the universal currency of this crate: deformation spectra
//! (`nu`), the named bulk laws (semicircle, Marchenko-Pastur), and every
//! computed limiting density are all `Measure`s. The transforms evaluated here
//! are
//!
//! * the Cauchy-Stieltjes transform `g(z) = ∫ dμ(x)/(z−x)`,
//! * its reciprocal `J(z) = 1/g(z)`,
//! * the moment-generating pair `ψ(z) = (1/z)·g(1/z) − 1`,
//!   `η(z) = ψ(z)/(1+ψ(z))`,
//! * the rectangular transform `H⁽ᶜ⁾(z) = (c/z)·g(1/z)² + (1−c)·g(1/z)`,
//!
//! together with Stieltjes inversion (`density_from_g`), cdf/quantile and raw
//! moments. Closed forms are used for the semicircle and Marchenko-Pastur
//! laws; grid densities go through trapezoid quadrature with atoms carried
//! separately and never smeared onto the grid.
//!
//! Real arguments are accepted only at distance `> 1e-9` from the support;
//! anything closer raises [`Error::Domain`] instead of returning garbage.

use crate::{Error, Result};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Guard margin for real-axis evaluation near the support.
pub const SUPPORT_GUARD: f64 = 1e-9;

/// Grid densities below this level count as zero when locating support
/// components.
pub const DENSITY_FLOOR: f64 = 1e-12;

const MASS_TOL_STRICT: f64 = 1e-12;
const MASS_TOL_GRID: f64 = 2e-3;

#[derive(Debug, Clone, PartialEq)]
pub enum MeasureKind {
    /// Finitely many atoms `(location, weight)`, sorted by location.
    Atomic { atoms: Vec<(f64, f64)> },
    /// Density values on a strictly increasing grid (trapezoid convention),
    /// plus optional atoms carried exactly.
    GridDensity {
        grid: Vec<f64>,
        values: Vec<f64>,
        atoms: Vec<(f64, f64)>,
    },
    /// Semicircle law of variance `sigma²`, supported on `[-2σ, 2σ]`.
    Semicircle { sigma: f64 },
    /// Marchenko-Pastur law with ratio `c ∈ (0, 1]`, supported on
    /// `[(1−√c)², (1+√c)²]`.
    MarchenkoPastur { c: f64 },
    /// Convex combination of other measures.
    Mixture { parts: Vec<(f64, Measure)> },
}

/// A compactly supported probability measure.
#[derive(Debug, Clone, PartialEq)]
pub struct Measure {
    kind: MeasureKind,
    support_lo: f64,
    support_hi: f64,
}

impl Measure {
    /// Point mass at `a`.
    pub fn dirac(a: f64) -> Measure {
        Measure {
            kind: MeasureKind::Atomic { atoms: vec![(a, 1.0)] },
            support_lo: a,
            support_hi: a,
        }
    }

    /// Atomic measure from `(location, weight)` pairs. Weights must be
    /// strictly positive, locations pairwise distinct, total mass 1 within
    /// `1e-12`.
    pub fn atomic(mut atoms: Vec<(f64, f64)>) -> Result<Measure> {
        if atoms.is_empty() {
            return Err(Error::Invalid("atomic measure needs at least one atom".into()));
        }
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut mass = 0.0;
        for w in atoms.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::Invalid(format!("duplicate atom location {}", w[0].0)));
            }
        }
        for &(a, w) in &atoms {
            if !a.is_finite() || !w.is_finite() || w <= 0.0 {
                return Err(Error::Invalid(format!("bad atom ({a}, {w})")));
            }
            mass += w;
        }
        if (mass - 1.0).abs() > MASS_TOL_STRICT {
            return Err(Error::Invalid(format!("atomic mass {mass} is not 1")));
        }
        let (support_lo, support_hi) = (atoms[0].0, atoms[atoms.len() - 1].0);
        Ok(Measure { kind: MeasureKind::Atomic { atoms }, support_lo, support_hi })
    }

    /// Semicircle law with scale `sigma > 0`.
    pub fn semicircle(sigma: f64) -> Result<Measure> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::Invalid(format!("semicircle sigma {sigma} must be > 0")));
        }
        Ok(Measure {
            kind: MeasureKind::Semicircle { sigma },
            support_lo: -2.0 * sigma,
            support_hi: 2.0 * sigma,
        })
    }

    /// Marchenko-Pastur law with ratio `c ∈ (0, 1]`.
    pub fn marchenko_pastur(c: f64) -> Result<Measure> {
        if !(c > 0.0 && c <= 1.0) {
            return Err(Error::Invalid(format!("MP ratio {c} must lie in (0, 1]")));
        }
        let sq = c.sqrt();
        Ok(Measure {
            kind: MeasureKind::MarchenkoPastur { c },
            support_lo: (1.0 - sq) * (1.0 - sq),
            support_hi: (1.0 + sq) * (1.0 + sq),
        })
    }

    /// Grid density plus atoms, with strict mass validation (`1e-12`).
    /// Use [`Measure::grid_density_normalized`] for sampled data.
    pub fn grid_density(grid: Vec<f64>, values: Vec<f64>, atoms: Vec<(f64, f64)>) -> Result<Measure> {
        let m = Self::grid_density_raw(grid, values, atoms)?;
        let mass = m.mass();
        if (mass - 1.0).abs() > MASS_TOL_STRICT {
            return Err(Error::Invalid(format!(
                "grid density mass {mass} is not 1; normalize explicitly"
            )));
        }
        Ok(m)
    }

    /// Grid density rescaled so that continuous mass plus atoms equals 1.
    /// The atom weights are kept exactly; only the density is rescaled.
    pub fn grid_density_normalized(
        grid: Vec<f64>,
        mut values: Vec<f64>,
        atoms: Vec<(f64, f64)>,
    ) -> Result<Measure> {
        let atom_mass: f64 = atoms.iter().map(|&(_, w)| w).sum();
        if atom_mass > 1.0 + MASS_TOL_STRICT {
            return Err(Error::Invalid(format!("atom mass {atom_mass} exceeds 1")));
        }
        let cont = trapezoid(&grid, &values);
        if cont <= 0.0 {
            return Err(Error::Invalid("grid density has no continuous mass".into()));
        }
        let scale = (1.0 - atom_mass) / cont;
        for v in &mut values {
            *v *= scale;
        }
        Self::grid_density_raw(grid, values, atoms)
    }

    /// Grid density without a mass requirement. This is the constructor used
    /// by Stieltjes inversion, whose output mass is checked by the caller and
    /// renormalized only in reporting.
    pub fn grid_density_raw(
        grid: Vec<f64>,
        values: Vec<f64>,
        mut atoms: Vec<(f64, f64)>,
    ) -> Result<Measure> {
        if grid.len() < 8 {
            return Err(Error::Invalid("grid needs at least 8 points".into()));
        }
        if grid.len() != values.len() {
            return Err(Error::Shape(format!(
                "grid has {} points but {} values",
                grid.len(),
                values.len()
            )));
        }
        for w in grid.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::Invalid("grid must be strictly increasing".into()));
            }
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Invalid("density values must be finite and >= 0".into()));
        }
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        for &(a, w) in &atoms {
            if !a.is_finite() || w <= 0.0 {
                return Err(Error::Invalid(format!("bad atom ({a}, {w})")));
            }
        }
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (i, &v) in values.iter().enumerate() {
            if v > DENSITY_FLOOR {
                lo = lo.min(grid[i.saturating_sub(1)]);
                hi = hi.max(grid[(i + 1).min(grid.len() - 1)]);
            }
        }
        for &(a, _) in &atoms {
            lo = lo.min(a);
            hi = hi.max(a);
        }
        if !lo.is_finite() {
            return Err(Error::Invalid("measure has empty support".into()));
        }
        Ok(Measure { kind: MeasureKind::GridDensity { grid, values, atoms }, support_lo: lo, support_hi: hi })
    }

    /// Convex combination `Σ wᵢ·μᵢ` with `Σ wᵢ = 1` within `1e-12`.
    pub fn mixture(parts: Vec<(f64, Measure)>) -> Result<Measure> {
        if parts.is_empty() {
            return Err(Error::Invalid("mixture needs at least one part".into()));
        }
        let mass: f64 = parts.iter().map(|&(w, _)| w).sum();
        if (mass - 1.0).abs() > MASS_TOL_STRICT || parts.iter().any(|&(w, _)| w <= 0.0) {
            return Err(Error::Invalid(format!("mixture weights sum to {mass}")));
        }
        let lo = parts.iter().map(|(_, m)| m.support_lo).fold(f64::INFINITY, f64::min);
        let hi = parts.iter().map(|(_, m)| m.support_hi).fold(f64::NEG_INFINITY, f64::max);
        Ok(Measure { kind: MeasureKind::Mixture { parts }, support_lo: lo, support_hi: hi })
    }

    /// Empirical measure of a list of real values; equal values are merged
    /// into one atom with the combined weight.
    pub fn empirical(values: &[f64]) -> Result<Measure> {
        if values.is_empty() {
            return Err(Error::Invalid("empirical measure of an empty list".into()));
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let w = 1.0 / values.len() as f64;
        let mut atoms: Vec<(f64, f64)> = Vec::new();
        for &x in &sorted {
            match atoms.last_mut() {
                Some(last) if last.0 == x => last.1 += w,
                _ => atoms.push((x, w)),
            }
        }
        // Compensate rounding so the builder's strict mass check passes.
        let mass: f64 = atoms.iter().map(|&(_, w)| w).sum();
        let k = atoms.len() - 1;
        atoms[k].1 += 1.0 - mass;
        Measure::atomic(atoms)
    }

    pub fn kind(&self) -> &MeasureKind {
        &self.kind
    }

    pub fn support_lo(&self) -> f64 {
        self.support_lo
    }

    pub fn support_hi(&self) -> f64 {
        self.support_hi
    }

    /// Total mass (1 for validated inputs; possibly slightly less for
    /// densities recovered by Stieltjes inversion).
    pub fn mass(&self) -> f64 {
        match &self.kind {
            MeasureKind::Atomic { atoms } => atoms.iter().map(|&(_, w)| w).sum(),
            MeasureKind::GridDensity { grid, values, atoms } => {
                trapezoid(grid, values) + atoms.iter().map(|&(_, w)| w).sum::<f64>()
            }
            MeasureKind::Semicircle { .. } | MeasureKind::MarchenkoPastur { .. } => 1.0,
            MeasureKind::Mixture { parts } => parts.iter().map(|(w, m)| w * m.mass()).sum(),
        }
    }

    /// Mass of the atom at `x`, if any (exact location match for atomic
    /// parts).
    pub fn atom_mass_at(&self, x: f64) -> f64 {
        match &self.kind {
            MeasureKind::Atomic { atoms } | MeasureKind::GridDensity { atoms, .. } => atoms
                .iter()
                .find(|&&(a, _)| a == x)
                .map(|&(_, w)| w)
                .unwrap_or(0.0),
            MeasureKind::Mixture { parts } => parts.iter().map(|(w, m)| w * m.atom_mass_at(x)).sum(),
            _ => 0.0,
        }
    }

    /// Connected components of the support, in increasing order. Atoms are
    /// degenerate components. For grid densities, cells with density above
    /// `1e-12` are merged across gaps narrower than two grid steps.
    pub fn support_components(&self) -> Vec<(f64, f64)> {
        let mut comps: Vec<(f64, f64)> = Vec::new();
        self.collect_components(&mut comps);
        comps.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::new();
        for c in comps {
            match merged.last_mut() {
                Some(last) if c.0 <= last.1 => last.1 = last.1.max(c.1),
                _ => merged.push(c),
            }
        }
        merged
    }

    fn collect_components(&self, out: &mut Vec<(f64, f64)>) {
        match &self.kind {
            MeasureKind::Atomic { atoms } => out.extend(atoms.iter().map(|&(a, _)| (a, a))),
            MeasureKind::Semicircle { .. } | MeasureKind::MarchenkoPastur { .. } => {
                out.push((self.support_lo, self.support_hi))
            }
            MeasureKind::GridDensity { grid, values, atoms } => {
                let n = grid.len();
                let step2 = |i: usize| {
                    let lo = grid[i.saturating_sub(2)];
                    grid[(i + 2).min(n - 1)] - lo
                };
                let mut open: Option<(f64, f64)> = None;
                for i in 0..n {
                    if values[i] > DENSITY_FLOOR {
                        let lo = grid[i.saturating_sub(1)];
                        let hi = grid[(i + 1).min(n - 1)];
                        open = match open {
                            // merge across gaps narrower than two grid steps
                            Some((l, h)) if lo - h <= step2(i) => Some((l, hi.max(h))),
                            Some(c) => {
                                out.push(c);
                                Some((lo, hi))
                            }
                            None => Some((lo, hi)),
                        };
                    }
                }
                if let Some(c) = open {
                    out.push(c);
                }
                out.extend(atoms.iter().map(|&(a, _)| (a, a)));
            }
            MeasureKind::Mixture { parts } => {
                for (_, m) in parts {
                    m.collect_components(out);
                }
            }
        }
    }

    /// Distance from `x` to the support (0 inside).
    pub fn dist_to_support(&self, x: f64) -> f64 {
        self.support_components()
            .iter()
            .map(|&(lo, hi)| {
                if x < lo {
                    lo - x
                } else if x > hi {
                    x - hi
                } else {
                    0.0
                }
            })
            .fold(f64::INFINITY, f64::min)
    }

    fn check_arg(&self, z: Complex64) -> Result<()> {
        if !z.re.is_finite() || !z.im.is_finite() {
            return Err(Error::Domain(format!("non-finite argument {z}")));
        }
        if z.im == 0.0 && self.dist_to_support(z.re) <= SUPPORT_GUARD {
            return Err(Error::Domain(format!(
                "real argument {} is within {SUPPORT_GUARD:e} of the support",
                z.re
            )));
        }
        Ok(())
    }

    /// Cauchy-Stieltjes transform `g(z) = ∫ dμ(x)/(z−x)`.
    ///
    /// Valid for `im(z) ≠ 0` and for real `z` at distance `> 1e-9` from the
    /// support. On the upper half-plane `im(g) < 0`; values at conjugate
    /// arguments are conjugate.
    pub fn stieltjes(&self, z: Complex64) -> Result<Complex64> {
        self.check_arg(z)?;
        Ok(self.stieltjes_unchecked(z))
    }

    fn stieltjes_unchecked(&self, z: Complex64) -> Complex64 {
        match &self.kind {
            MeasureKind::Atomic { atoms } => atoms.iter().map(|&(a, w)| w / (z - a)).sum(),
            MeasureKind::Semicircle { sigma } => semicircle_g(*sigma, z),
            MeasureKind::MarchenkoPastur { c } => marchenko_pastur_g(*c, z),
            MeasureKind::GridDensity { grid, values, atoms } => {
                let cont = trapezoid_map(grid, values, |x| 1.0 / (z - x));
                let at: Complex64 = atoms.iter().map(|&(a, w)| w / (z - a)).sum();
                cont + at
            }
            MeasureKind::Mixture { parts } => {
                parts.iter().map(|(w, m)| *w * m.stieltjes_unchecked(z)).sum()
            }
        }
    }

    /// Derivative `g'(z) = −∫ dμ(x)/(z−x)²`, by exact formulas (closed-form
    /// kinds differentiate their branch; quadrature kinds integrate the
    /// squared kernel).
    pub fn stieltjes_prime(&self, z: Complex64) -> Result<Complex64> {
        self.check_arg(z)?;
        Ok(self.stieltjes_prime_unchecked(z))
    }

    fn stieltjes_prime_unchecked(&self, z: Complex64) -> Complex64 {
        match &self.kind {
            MeasureKind::Atomic { atoms } => {
                atoms.iter().map(|&(a, w)| -w / ((z - a) * (z - a))).sum()
            }
            MeasureKind::Semicircle { sigma } => {
                // g = (z - s)/(2σ²) with s² = z² - 4σ², so s' = z/s
                let s2 = 2.0 * sigma * sigma;
                let s = z - s2 * semicircle_g(*sigma, z);
                (1.0 - z / s) / s2
            }
            MeasureKind::MarchenkoPastur { c } => {
                // implicit: c z g² − (z + c − 1) g + 1 = 0
                let g = marchenko_pastur_g(*c, z);
                let denom = 2.0 * c * z * g - (z + c - 1.0);
                (g - c * g * g) / denom
            }
            MeasureKind::GridDensity { grid, values, atoms } => {
                let cont = trapezoid_map(grid, values, |x| -1.0 / ((z - x) * (z - x)));
                let at: Complex64 = atoms.iter().map(|&(a, w)| -w / ((z - a) * (z - a))).sum();
                cont + at
            }
            MeasureKind::Mixture { parts } => parts
                .iter()
                .map(|(w, m)| *w * m.stieltjes_prime_unchecked(z))
                .sum(),
        }
    }

    /// Reciprocal Cauchy-Stieltjes transform `J(z) = 1/g(z)`; maps the upper
    /// half-plane to itself.
    pub fn j_transform(&self, z: Complex64) -> Result<Complex64> {
        let g = self.stieltjes(z)?;
        if g.norm() == 0.0 {
            return Err(Error::DivisionByZero("j_transform"));
        }
        Ok(1.0 / g)
    }

    /// Moment-generating function `ψ(z) = (1/z)·g(1/z) − 1` and the eta
    /// transform `η(z) = ψ(z)/(1+ψ(z))`, returned as `(psi, eta)`.
    pub fn psi_eta(&self, z: Complex64) -> Result<(Complex64, Complex64)> {
        if z.norm() == 0.0 {
            return Err(Error::DivisionByZero("psi_eta"));
        }
        let inv = 1.0 / z;
        let g = self.stieltjes(inv)?;
        let psi = inv * g - 1.0;
        let denom = 1.0 + psi;
        if denom.norm() == 0.0 {
            return Err(Error::DivisionByZero("psi_eta"));
        }
        Ok((psi, psi / denom))
    }

    /// Rectangular transform `H⁽ᶜ⁾(z) = (c/z)·g(1/z)² + (1−c)·g(1/z)` of the
    /// square root of this measure (the measure plays the role of `τ` on
    /// `ℝ⁺`).
    pub fn h_c(&self, c: f64, z: Complex64) -> Result<Complex64> {
        if !(c > 0.0 && c <= 1.0) {
            return Err(Error::Range(format!("c = {c} must lie in (0, 1]")));
        }
        if z.norm() == 0.0 {
            return Err(Error::DivisionByZero("h_c"));
        }
        let g = self.stieltjes(1.0 / z)?;
        Ok(c / z * g * g + (1.0 - c) * g)
    }

    /// Right-continuous distribution function `F(x) = μ((−∞, x])`.
    pub fn cdf(&self, x: f64) -> f64 {
        match &self.kind {
            MeasureKind::Atomic { atoms } => {
                atoms.iter().filter(|&&(a, _)| a <= x).map(|&(_, w)| w).sum()
            }
            MeasureKind::Semicircle { sigma } => {
                let s = 2.0 * sigma;
                if x <= -s {
                    0.0
                } else if x >= s {
                    1.0
                } else {
                    0.5 + x * (s * s - x * x).sqrt() / (4.0 * std::f64::consts::PI * sigma * sigma)
                        + (x / s).asin() / std::f64::consts::PI
                }
            }
            MeasureKind::MarchenkoPastur { c } => {
                closed_form_partial_integral(self.support_lo, self.support_hi, x, |t| {
                    mp_density(*c, t)
                })
            }
            MeasureKind::GridDensity { grid, values, atoms } => {
                let mut acc = 0.0;
                for i in 1..grid.len() {
                    if grid[i] <= x {
                        acc += (grid[i] - grid[i - 1]) * 0.5 * (values[i] + values[i - 1]);
                    } else if grid[i - 1] < x {
                        let t = x - grid[i - 1];
                        let h = grid[i] - grid[i - 1];
                        let vx = values[i - 1] + (values[i] - values[i - 1]) * t / h;
                        acc += t * 0.5 * (values[i - 1] + vx);
                    }
                }
                acc + atoms.iter().filter(|&&(a, _)| a <= x).map(|&(_, w)| w).sum::<f64>()
            }
            MeasureKind::Mixture { parts } => parts.iter().map(|(w, m)| w * m.cdf(x)).sum(),
        }
    }

    /// Generalized inverse `quantile(p) = inf{x : F(x) ≥ p}` for
    /// `p ∈ [0, 1]`.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Range(format!("quantile level {p} outside [0, 1]")));
        }
        if p == 0.0 {
            return Ok(self.support_lo);
        }
        if let MeasureKind::Atomic { atoms } = &self.kind {
            let mut acc = 0.0;
            for &(a, w) in atoms {
                acc += w;
                if acc >= p {
                    return Ok(a);
                }
            }
            return Ok(atoms[atoms.len() - 1].0);
        }
        // Monotone bisection on the predicate F(x) >= p.
        let mass = self.mass();
        if p >= mass {
            return Ok(self.support_hi);
        }
        let mut lo = self.support_lo - 1.0;
        let mut hi = self.support_hi;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.cdf(mid) >= p {
                hi = mid;
            } else {
                lo = mid;
            }
            if hi - lo <= f64::EPSILON * (1.0 + hi.abs()) {
                break;
            }
        }
        Ok(hi)
    }

    /// Raw moment `∫ xᵏ dμ(x)` (quadrature-accurate up to k = 16).
    pub fn moment(&self, k: u32) -> f64 {
        match &self.kind {
            MeasureKind::Atomic { atoms } => atoms.iter().map(|&(a, w)| w * a.powi(k as i32)).sum(),
            MeasureKind::Semicircle { sigma } => {
                closed_form_integral(self.support_lo, self.support_hi, |t| {
                    t.powi(k as i32) * sc_density(*sigma, t)
                })
            }
            MeasureKind::MarchenkoPastur { c } => {
                closed_form_integral(self.support_lo, self.support_hi, |t| {
                    t.powi(k as i32) * mp_density(*c, t)
                })
            }
            MeasureKind::GridDensity { grid, values, atoms } => {
                let cont = trapezoid_map_real(grid, values, |x| x.powi(k as i32));
                cont + atoms.iter().map(|&(a, w)| w * a.powi(k as i32)).sum::<f64>()
            }
            MeasureKind::Mixture { parts } => parts.iter().map(|(w, m)| w * m.moment(k)).sum(),
        }
    }

    /// Density evaluated on the grid (0 outside cells); used in reports.
    pub fn density_values(&self) -> Option<(&[f64], &[f64])> {
        match &self.kind {
            MeasureKind::GridDensity { grid, values, .. } => Some((grid, values)),
            _ => None,
        }
    }

    /// Atoms of this measure, flattened (empty for continuous kinds).
    pub fn atoms(&self) -> Vec<(f64, f64)> {
        match &self.kind {
            MeasureKind::Atomic { atoms } => atoms.clone(),
            MeasureKind::GridDensity { atoms, .. } => atoms.clone(),
            MeasureKind::Mixture { parts } => {
                let mut out = Vec::new();
                for (w, m) in parts {
                    out.extend(m.atoms().into_iter().map(|(a, wa)| (a, w * wa)));
                }
                out.sort_by(|a, b| a.0.total_cmp(&b.0));
                out
            }
            _ => Vec::new(),
        }
    }

    /// Mass of the closed interval `[a, b]`.
    pub fn mass_on(&self, a: f64, b: f64) -> f64 {
        let eps = SUPPORT_GUARD * (1.0 + a.abs());
        self.cdf(b) - self.cdf(a - eps)
    }
}

/// Recover a density from a Stieltjes-transform evaluator by the inversion
/// `p(x) = −(1/π)·im g(x + iy)` at a small height `y`.
///
/// Negative round-off is clipped to zero. The result keeps its raw mass; it
/// is renormalized only in reporting, never silently. Atoms known a priori
/// can be attached by the caller afterwards via
/// [`Measure::grid_density_raw`].
pub fn density_from_g<F>(mut g_eval: F, grid: &[f64], y: f64) -> Result<Measure>
where
    F: FnMut(Complex64) -> Result<Complex64>,
{
    if !(y > 0.0) {
        return Err(Error::Range(format!("inversion height {y} must be > 0")));
    }
    let mut values = Vec::with_capacity(grid.len());
    for &x in grid {
        let g = g_eval(Complex64::new(x, y))
            .map_err(|e| Error::Evaluation(format!("g({x} + {y}i): {e}")))?;
        values.push((-g.im / std::f64::consts::PI).max(0.0));
    }
    Measure::grid_density_raw(grid.to_vec(), values, Vec::new())
}

pub(crate) fn sc_density(sigma: f64, x: f64) -> f64 {
    let r = 4.0 * sigma * sigma - x * x;
    if r <= 0.0 {
        0.0
    } else {
        r.sqrt() / (2.0 * std::f64::consts::PI * sigma * sigma)
    }
}

pub(crate) fn mp_density(c: f64, x: f64) -> f64 {
    let sq = c.sqrt();
    let a = (1.0 - sq) * (1.0 - sq);
    let b = (1.0 + sq) * (1.0 + sq);
    if x <= a || x >= b {
        return 0.0;
    }
    ((b - x) * (x - a)).sqrt() / (2.0 * std::f64::consts::PI * c * x)
}

/// Closed-form branch of the semicircle transform: the root of
/// `σ² g² − z g + 1 = 0` with `im(g) < 0` on the upper half-plane, continued
/// to real arguments outside the support.
fn semicircle_g(sigma: f64, z: Complex64) -> Complex64 {
    let s2 = sigma * sigma;
    quadratic_nevanlinna_root(z, Complex64::new(s2, 0.0), z, Complex64::new(1.0, 0.0))
}

/// Closed-form branch of the Marchenko-Pastur transform: the root of
/// `c z g² − (z + c − 1) g + 1 = 0` with `im(g) < 0` on the upper half-plane.
fn marchenko_pastur_g(c: f64, z: Complex64) -> Complex64 {
    quadratic_nevanlinna_root(z, c * z, z + (c - 1.0), Complex64::new(1.0, 0.0))
}

/// Nevanlinna root of `A g² − B g + C = 0`: form both roots without
/// cancellation (flip the discriminant sign so `B + s` never cancels, then
/// use the product identity for the small root) and select by `im(g)·im(z)
/// < 0`, falling back to the bounded root on the real axis.
fn quadratic_nevanlinna_root(z: Complex64, a: Complex64, b: Complex64, c: Complex64) -> Complex64 {
    let mut s = (b * b - 4.0 * a * c).sqrt();
    if b.re * s.re + b.im * s.im < 0.0 {
        s = -s;
    }
    let big = (b + s) / (2.0 * a);
    let small = 2.0 * c / (b + s);
    if z.im > 0.0 {
        if small.im < 0.0 {
            small
        } else {
            big
        }
    } else if z.im < 0.0 {
        if small.im > 0.0 {
            small
        } else {
            big
        }
    } else if small.norm() <= big.norm() {
        small
    } else {
        big
    }
}

fn trapezoid(grid: &[f64], values: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 1..grid.len() {
        acc += (grid[i] - grid[i - 1]) * 0.5 * (values[i] + values[i - 1]);
    }
    acc
}

fn trapezoid_map<F>(grid: &[f64], values: &[f64], f: F) -> Complex64
where
    F: Fn(f64) -> Complex64,
{
    let mut acc = Complex64::new(0.0, 0.0);
    let mut prev = f(grid[0]) * values[0];
    for i in 1..grid.len() {
        let cur = f(grid[i]) * values[i];
        acc += (grid[i] - grid[i - 1]) * 0.5 * (prev + cur);
        prev = cur;
    }
    acc
}

fn trapezoid_map_real<F>(grid: &[f64], values: &[f64], f: F) -> f64
where
    F: Fn(f64) -> f64,
{
    let mut acc = 0.0;
    let mut prev = f(grid[0]) * values[0];
    for i in 1..grid.len() {
        let cur = f(grid[i]) * values[i];
        acc += (grid[i] - grid[i - 1]) * 0.5 * (prev + cur);
        prev = cur;
    }
    acc
}

/// Integral of `f` over `[lo, hi]` under the substitution
/// `x = lo + (hi−lo)·sin²(t)`, which removes square-root edge singularities;
/// trapezoid in `t` is then spectrally accurate.
fn closed_form_integral<F: Fn(f64) -> f64>(lo: f64, hi: f64, f: F) -> f64 {
    substituted_midpoint(lo, hi, std::f64::consts::FRAC_PI_2, 4096, f)
}

fn closed_form_partial_integral<F: Fn(f64) -> f64>(lo: f64, hi: f64, x: f64, f: F) -> f64 {
    if x <= lo {
        return 0.0;
    }
    if x >= hi {
        return substituted_midpoint(lo, hi, std::f64::consts::FRAC_PI_2, 8192, f);
    }
    let t_max = ((x - lo) / (hi - lo)).sqrt().asin();
    substituted_midpoint(lo, hi, t_max, 8192, f)
}

// Composite midpoint in t; never evaluates at the (possibly singular)
// substitution endpoints, which matters for the c = 1 hard edge.
fn substituted_midpoint<F: Fn(f64) -> f64>(lo: f64, hi: f64, t_max: f64, m: usize, f: F) -> f64 {
    let w = hi - lo;
    let h = t_max / m as f64;
    let mut acc = 0.0;
    for i in 0..m {
        let t = (i as f64 + 0.5) * h;
        let s = t.sin();
        let x = lo + w * s * s;
        acc += f(x) * w * (2.0 * t).sin();
    }
    acc * h
}

// --- serialization -------------------------------------------------------
//
// JSON schema: an object tagged by "kind"; see README for the full layout.
// Round trips are lossless for atomic and named kinds, and lossless up to
// float formatting for grid densities.

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum MeasureRepr {
    Atomic {
        atoms: Vec<(f64, f64)>,
    },
    GridDensity {
        grid: Vec<f64>,
        values: Vec<f64>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        atoms: Vec<(f64, f64)>,
    },
    Semicircle {
        sigma: f64,
    },
    MarchenkoPastur {
        c: f64,
    },
    Mixture {
        parts: Vec<(f64, Measure)>,
    },
}

impl Serialize for Measure {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        let repr = match &self.kind {
            MeasureKind::Atomic { atoms } => MeasureRepr::Atomic { atoms: atoms.clone() },
            MeasureKind::GridDensity { grid, values, atoms } => MeasureRepr::GridDensity {
                grid: grid.clone(),
                values: values.clone(),
                atoms: atoms.clone(),
            },
            MeasureKind::Semicircle { sigma } => MeasureRepr::Semicircle { sigma: *sigma },
            MeasureKind::MarchenkoPastur { c } => MeasureRepr::MarchenkoPastur { c: *c },
            MeasureKind::Mixture { parts } => MeasureRepr::Mixture { parts: parts.clone() },
        };
        repr.serialize(ser)
    }
}

impl<'de> Deserialize<'de> for Measure {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as DeError;
        let repr = MeasureRepr::deserialize(de)?;
        let built = match repr {
            MeasureRepr::Atomic { atoms } => Measure::atomic(atoms),
            MeasureRepr::GridDensity { grid, values, atoms } => {
                let m = Measure::grid_density_raw(grid, values, atoms);
                if let Ok(m) = &m {
                    let mass = m.mass();
                    if (mass - 1.0).abs() > MASS_TOL_GRID {
                        return Err(D::Error::custom(format!(
                            "grid density mass {mass} too far from 1"
                        )));
                    }
                }
                m
            }
            MeasureRepr::Semicircle { sigma } => Measure::semicircle(sigma),
            MeasureRepr::MarchenkoPastur { c } => Measure::marchenko_pastur(c),
            MeasureRepr::Mixture { parts } => Measure::mixture(parts),
        };
        built.map_err(D::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn bernoulli() -> Measure {
        Measure::atomic(vec![(-1.0, 0.5), (1.0, 0.5)]).unwrap()
    }

    #[test]
    fn dirac_stieltjes_is_inverse_shift() {
        let m = Measure::dirac(0.0);
        let g = m.stieltjes(c(0.0, 2.0)).unwrap();
        assert!((g - c(0.0, -0.5)).norm() < 1e-15);
    }

    #[test]
    fn semicircle_stieltjes_at_2i() {
        let m = Measure::semicircle(1.0).unwrap();
        let g = m.stieltjes(c(0.0, 2.0)).unwrap();
        // root of g² − z g + 1 = 0 with im g < 0: (1 − √2) i
        assert!((g - c(0.0, 1.0 - 2f64.sqrt())).norm() < 1e-14);
    }

    #[test]
    fn semicircle_real_axis_branches() {
        let m = Measure::semicircle(1.0).unwrap();
        let g = m.stieltjes(c(3.0, 0.0)).unwrap();
        assert!((g.re - (3.0 - 5f64.sqrt()) / 2.0).abs() < 1e-14 && g.im == 0.0);
        let g = m.stieltjes(c(-3.0, 0.0)).unwrap();
        assert!((g.re - (-3.0 + 5f64.sqrt()) / 2.0).abs() < 1e-14);
        assert!(m.stieltjes(c(1.0, 0.0)).is_err());
    }

    #[test]
    fn marchenko_pastur_matches_quadrature() {
        for &cc in &[0.25, 0.5, 1.0] {
            let m = Measure::marchenko_pastur(cc).unwrap();
            for &z in &[c(3.5, 0.2), c(0.5, 1.0), c(-1.0, 0.0)] {
                let g = m.stieltjes(z).unwrap();
                let quad = closed_form_integral(m.support_lo(), m.support_hi(), |t| {
                    (mp_density(cc, t) * (z - t).finv()).re
                });
                let quad_im = closed_form_integral(m.support_lo(), m.support_hi(), |t| {
                    (mp_density(cc, t) * (z - t).finv()).im
                });
                assert!(
                    (g - c(quad, quad_im)).norm() < 1e-9,
                    "c={cc} z={z} g={g} quad={quad}+{quad_im}i"
                );
            }
        }
    }

    #[test]
    fn stieltjes_upper_half_plane_sign_and_symmetry() {
        let ms = [
            Measure::semicircle(0.7).unwrap(),
            Measure::marchenko_pastur(0.3).unwrap(),
            bernoulli(),
            Measure::mixture(vec![(0.4, Measure::dirac(2.0)), (0.6, Measure::semicircle(1.0).unwrap())]).unwrap(),
        ];
        let zs = [c(0.3, 0.1), c(-2.0, 1.0), c(5.0, 0.01), c(0.0, 3.0)];
        for m in &ms {
            for &z in &zs {
                let g = m.stieltjes(z).unwrap();
                assert!(g.im < 0.0, "im g = {} at {z}", g.im);
                let gc = m.stieltjes(z.conj()).unwrap();
                assert!((gc - g.conj()).norm() < 1e-13);
            }
        }
    }

    #[test]
    fn stieltjes_decays_like_inverse_z() {
        for m in [
            Measure::semicircle(1.0).unwrap(),
            Measure::marchenko_pastur(0.5).unwrap(),
            bernoulli(),
        ] {
            let y = 1e6 * (1.0 + m.support_hi().abs());
            let z = c(0.0, y);
            let g = m.stieltjes(z).unwrap();
            assert!((z * g - 1.0).norm() < 1e-4);
        }
    }

    #[test]
    fn grid_density_requires_shape() {
        assert!(Measure::grid_density(vec![0.0, 1.0], vec![1.0, 1.0], vec![]).is_err());
        let grid: Vec<f64> = (0..10).map(|i| i as f64 / 9.0).collect();
        let vals = vec![1.0; 10];
        // mass 1 on [0,1]
        assert!(Measure::grid_density(grid.clone(), vals.clone(), vec![]).is_ok());
        let mut bad = vals;
        bad[3] = -0.1;
        assert!(Measure::grid_density(grid, bad, vec![]).is_err());
    }

    #[test]
    fn psi_eta_examples() {
        let d1 = Measure::dirac(1.0);
        let (psi, eta) = d1.psi_eta(c(0.5, 0.0)).unwrap();
        assert!((psi - 1.0).norm() < 1e-14 && (eta - 0.5).norm() < 1e-14);
        let d0 = Measure::dirac(0.0);
        let (psi, eta) = d0.psi_eta(c(0.5, 0.0)).unwrap();
        assert!(psi.norm() < 1e-14 && eta.norm() < 1e-14);
    }

    #[test]
    fn psi_eta_consistency_against_quadrature() {
        let m = Measure::marchenko_pastur(0.5).unwrap();
        let z = c(0.1, 0.0);
        let (psi, eta) = m.psi_eta(z).unwrap();
        let direct = closed_form_integral(m.support_lo(), m.support_hi(), |t| {
            0.1 * t / (1.0 - 0.1 * t) * mp_density(0.5, t)
        });
        assert!((psi.re - direct).abs() < 1e-9, "psi={psi} direct={direct}");
        assert!((eta - psi / (1.0 + psi)).norm() < 1e-12);
    }

    #[test]
    fn h_c_examples() {
        let d0 = Measure::dirac(0.0);
        let h = d0.h_c(1.0, c(0.5, 0.0)).unwrap();
        assert!((h - 0.5).norm() < 1e-14);
        let h = d0.h_c(0.5, c(0.5, 0.0)).unwrap();
        assert!((h - 0.5).norm() < 1e-14);
        // δ_a: g(1/z) = 1/(1/z − a)
        let a = 2.0;
        let da = Measure::dirac(a);
        let z = c(0.25, 0.0);
        let g = 1.0 / (1.0 / z - a);
        let expect = 0.5 / z * g * g + 0.5 * g;
        assert!((da.h_c(0.5, z).unwrap() - expect).norm() < 1e-13);
    }

    #[test]
    fn density_from_g_semicircle() {
        let m = Measure::semicircle(1.0).unwrap();
        let grid: Vec<f64> = (0..=5000).map(|i| -2.5 + 5.0 * i as f64 / 5000.0).collect();
        let d = density_from_g(|z| m.stieltjes(z), &grid, 1e-6).unwrap();
        let (g, v) = d.density_values().unwrap();
        for (x, val) in g.iter().zip(v) {
            // at height y the inversion smears the square-root edge over a
            // y^{2/3} neighborhood; compare away from it
            if (x.abs() - 2.0).abs() > 5e-3 {
                assert!((val - sc_density(1.0, *x)).abs() < 1e-4, "x={x}");
            } else {
                assert!((val - sc_density(1.0, *x)).abs() < 1e-3, "edge x={x}");
            }
        }
        // continuous mass recovered within 1e-3
        assert!((d.mass() - 1.0).abs() < 1e-3);
    }

    #[test]
    fn density_from_g_atom_leaves_no_continuous_part() {
        let m = Measure::dirac(0.0);
        let grid: Vec<f64> = (0..=800)
            .map(|i| -2.0 + 4.0 * i as f64 / 800.0)
            .filter(|x| x.abs() > 0.05)
            .collect();
        let d = density_from_g(|z| m.stieltjes(z), &grid, 1e-6).unwrap();
        let (_, v) = d.density_values().unwrap();
        assert!(v.iter().all(|x| *x < 1e-3));
    }

    #[test]
    fn mp_density_matches_inversion() {
        let m = Measure::marchenko_pastur(0.25).unwrap();
        let (a, b) = (m.support_lo(), m.support_hi());
        let grid: Vec<f64> = (0..=4000)
            .map(|i| a + 0.05 + (b - a - 0.1) * i as f64 / 4000.0)
            .collect();
        let d = density_from_g(|z| m.stieltjes(z), &grid, 1e-6).unwrap();
        let (g, v) = d.density_values().unwrap();
        for (x, val) in g.iter().zip(v) {
            if (x - a).abs() < 5e-3 || (b - x).abs() < 5e-3 {
                continue;
            }
            assert!((val - mp_density(0.25, *x)).abs() < 1e-4, "x={x} val={val}");
        }
    }

    #[test]
    fn cdf_and_quantile_basics() {
        let d0 = Measure::dirac(0.0);
        assert_eq!(d0.cdf(-1.0), 0.0);
        assert_eq!(d0.cdf(0.0), 1.0);
        let sc = Measure::semicircle(1.0).unwrap();
        assert!((sc.cdf(0.0) - 0.5).abs() < 1e-12);
        assert!((sc.cdf(2.0) - 1.0).abs() < 1e-12);
        let b = bernoulli();
        assert_eq!(b.quantile(0.5).unwrap(), -1.0);
        assert_eq!(b.quantile(0.500001).unwrap(), 1.0);
        assert!(b.quantile(1.5).is_err());
    }

    #[test]
    fn quantile_cdf_galois_property() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let measures = [
            Measure::semicircle(0.8).unwrap(),
            Measure::marchenko_pastur(0.4).unwrap(),
            bernoulli(),
            Measure::mixture(vec![
                (0.3, Measure::dirac(-2.0)),
                (0.7, Measure::semicircle(0.5).unwrap()),
            ])
            .unwrap(),
        ];
        for _ in 0..100 {
            let m = &measures[rng.random_range(0..measures.len())];
            let p: f64 = rng.random_range(0.001..1.0);
            let q = m.quantile(p).unwrap();
            // F(q) >= p, and quantile(F(x)) <= x
            assert!(m.cdf(q) >= p - 1e-9, "p={p} q={q} F(q)={}", m.cdf(q));
            let x = rng.random_range(m.support_lo()..m.support_hi());
            let fx = m.cdf(x);
            if fx > 0.0 {
                let qq = m.quantile(fx.min(1.0)).unwrap();
                assert!(qq <= x + 1e-9, "x={x} F(x)={fx} q(F(x))={qq}");
            }
        }
    }

    #[test]
    fn moments_semicircle_catalan() {
        let m = Measure::semicircle(1.0).unwrap();
        assert!((m.moment(0) - 1.0).abs() < 1e-12);
        assert!(m.moment(1).abs() < 1e-12);
        assert!((m.moment(2) - 1.0).abs() < 1e-10);
        assert!((m.moment(4) - 2.0).abs() < 1e-10);
        assert!((m.moment(6) - 5.0).abs() < 1e-9);
    }

    #[test]
    fn moments_marchenko_pastur() {
        // m1 = 1, m2 = 1 + c for the MP law with ratio c
        let m = Measure::marchenko_pastur(0.5).unwrap();
        assert!((m.moment(1) - 1.0).abs() < 1e-10);
        assert!((m.moment(2) - 1.5).abs() < 1e-10);
    }

    #[test]
    fn serde_round_trip() {
        let measures = [
            bernoulli(),
            Measure::semicircle(1.25).unwrap(),
            Measure::marchenko_pastur(0.5).unwrap(),
            Measure::mixture(vec![
                (0.25, Measure::dirac(3.0)),
                (0.75, Measure::marchenko_pastur(1.0).unwrap()),
            ])
            .unwrap(),
        ];
        for m in &measures {
            let s = serde_json::to_string(m).unwrap();
            let back: Measure = serde_json::from_str(&s).unwrap();
            assert_eq!(m, &back, "{s}");
        }
        let grid: Vec<f64> = (0..=100).map(|i| i as f64 / 50.0).collect();
        let vals: Vec<f64> = grid.iter().map(|x| if *x < 1.0 { 1.0 } else { 0.0 }).collect();
        let m = Measure::grid_density_normalized(grid, vals, vec![(1.7, 0.25)]).unwrap();
        let back: Measure = serde_json::from_str(&serde_json::to_string(&m).unwrap()).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn support_components_and_guard() {
        let b = bernoulli();
        assert_eq!(b.support_components(), vec![(-1.0, -1.0), (1.0, 1.0)]);
        // interior gap evaluation is fine, on-atom evaluation is not
        assert!(b.stieltjes(c(0.0, 0.0)).is_ok());
        assert!(b.stieltjes(c(1.0, 0.0)).is_err());
        assert!(b.stieltjes(c(1.0 + 1e-10, 0.0)).is_err());
        assert!(b.stieltjes(c(1.0 + 1e-6, 0.0)).is_ok());
    }

    #[test]
    fn stieltjes_prime_matches_finite_difference() {
        let ms = [
            Measure::semicircle(1.0).unwrap(),
            Measure::marchenko_pastur(0.6).unwrap(),
            bernoulli(),
        ];
        for m in &ms {
            for &z in &[c(0.5, 0.8), c(3.0, 0.0), c(-2.5, 0.1)] {
                if m.stieltjes(z).is_err() {
                    continue;
                }
                let h = 1e-6;
                let fd = (m.stieltjes(z + h).unwrap() - m.stieltjes(z - h).unwrap()) / (2.0 * h);
                let an = m.stieltjes_prime(z).unwrap();
                assert!((fd - an).norm() < 1e-6, "m={m:?} z={z} fd={fd} an={an}");
            }
        }
    }

    #[test]
    fn empirical_merges_duplicates() {
        let m = Measure::empirical(&[1.0, 1.0, -1.0, -1.0]).unwrap();
        assert_eq!(m.atoms(), vec![(-1.0, 0.5), (1.0, 0.5)]);
    }
}
