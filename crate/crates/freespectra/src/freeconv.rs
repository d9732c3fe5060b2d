//! Fixed-point solvers for free-convolution subordination.
//!
//! The additive solver iterates the analytic self-map
//! `w ↦ J_ν(J_μ(w) − w + z) − (J_μ(w) − w)` of the upper half-plane, whose
//! attracting fixed point is the subordination function `ω₁(z)` with
//! `g_{μ⊞ν}(z) = g_μ(ω₁(z)) = g_ν(ω₂(z))`. The multiplicative solver iterates
//! `w ↦ (w/η_μ(zw))·η_ν(η_μ(zw)/w)`, whose fixed point is `F₁(z)/z` with
//! `ψ_{μ⊠ν}(z) = ψ_μ(F₁(z)) = ψ_ν(F₂(z))`.
//!
//! The three deformed-model transforms solve their self-consistent equations
//! directly:
//!
//! * deformed Wigner:      `g(z) = ∫ dν(t) / (z − σ²g(z) − t)`
//! * sample covariance:    `g(z) = ∫ dν(t) / (z − t(1 − c + c z g(z)))`
//! * information + noise:  `g(z) = ∫ dν(t) / ((1−cσ²g)z − t/(1−cσ²g) − σ²(1−c))`
//!
//! All iterations are plain Picard with optional damping; `NoConvergence` is
//! an explicit error, never a silent fallback. Near support edges the maps
//! lose contraction like the square root of the distance, so callers probing
//! edges should widen `max_iter` knowingly.
//!
//! Evaluation on the real axis outside the support goes through
//! [`real_axis_limit`]: solve at heights `y ∈ {1e-6, 1e-7, 1e-8}` and
//! extrapolate polynomially to `y → 0`.

use crate::measures::Measure;
use crate::support::DeformedModel;
use crate::{Error, Result};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Tolerance, iteration cap and damping factor for the Picard solvers.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Absolute residual target `|T(w) − w| < tol`.
    pub tol: f64,
    /// Iteration cap before `NoConvergence` is reported.
    pub max_iter: usize,
    /// Damped update `w ← w + damping·(T(w) − w)`, `damping ∈ (0, 1]`.
    pub damping: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { tol: 1e-12, max_iter: 10_000, damping: 1.0 }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::Invalid(format!("tol {} must be > 0", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::Invalid("max_iter must be >= 1".into()));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::Invalid(format!("damping {} outside (0, 1]", self.damping)));
        }
        Ok(())
    }

    /// Same tolerances with a larger iteration budget, for sweeps that probe
    /// close to support edges.
    pub fn widened(&self, factor: usize) -> SolverConfig {
        SolverConfig { max_iter: self.max_iter.saturating_mul(factor), ..*self }
    }
}

/// Outcome of the additive subordination solve at one point `z`.
///
/// `omega1` subordinates the first measure and `omega2` the second:
/// `g = g_μ(omega1) = g_ν(omega2)` up to `residual`, where
/// `residual = |ω₁ + ω₂ − z − J_μ(ω₁)| + |J_μ(ω₁) − J_ν(ω₂)|` (the first term
/// vanishes by construction).
#[derive(Debug, Clone, Copy)]
pub struct SubordinationResult {
    pub omega1: Complex64,
    pub omega2: Complex64,
    pub g: Complex64,
    pub iterations: usize,
    pub residual: f64,
}

/// Outcome of the multiplicative subordination solve:
/// `psi = ψ_μ(f1) = ψ_ν(f2)` up to `residual = |η_μ(F₁) − η_ν(F₂)|`.
#[derive(Debug, Clone, Copy)]
pub struct MultSubordinationResult {
    pub f1: Complex64,
    pub f2: Complex64,
    pub psi: Complex64,
    pub iterations: usize,
    pub residual: f64,
}

/// Value of a deformed-model Stieltjes transform together with the
/// subordination point it exposes (`ω(z) = z − σ²g(z)` for the additive
/// model, and the analogous quantity for the others).
#[derive(Debug, Clone, Copy)]
pub struct ModelG {
    pub g: Complex64,
    pub omega: Complex64,
    pub iterations: usize,
    pub residual: f64,
}

/// Damped Picard iteration with Aitken Δ² acceleration.
///
/// Plain Picard is globally convergent for these analytic self-maps but
/// degrades to sublinear speed near support edges, where the attracting
/// fixed point turns parabolic; the Δ² jump restores fast convergence there
/// (it is exact for affine maps of any contraction factor). Accelerated
/// candidates are accepted only when `in_domain` holds and the residual
/// actually drops, so the plain damped iteration remains the fallback.
/// `iterations` counts map evaluations.
fn picard<F, P>(
    mut step: F,
    in_domain: P,
    start: Complex64,
    cfg: &SolverConfig,
) -> Result<(Complex64, usize, f64)>
where
    F: FnMut(Complex64) -> Result<Complex64>,
    P: Fn(Complex64) -> bool,
{
    cfg.validate()?;
    let mut w = start;
    let mut evals = 0usize;
    let mut residual = f64::INFINITY;
    let bad = |t: Complex64| !t.re.is_finite() || !t.im.is_finite();
    while evals < cfg.max_iter {
        let t1 = step(w)?;
        evals += 1;
        if bad(t1) {
            return Err(Error::Evaluation(format!("iteration produced {t1}")));
        }
        residual = (t1 - w).norm();
        if residual < cfg.tol {
            return Ok((t1, evals, residual));
        }
        if cfg.damping < 1.0 || evals + 2 > cfg.max_iter {
            w += cfg.damping * (t1 - w);
            continue;
        }
        let t2 = step(t1)?;
        evals += 1;
        if bad(t2) {
            return Err(Error::Evaluation(format!("iteration produced {t2}")));
        }
        let r2 = (t2 - t1).norm();
        if r2 < cfg.tol {
            return Ok((t2, evals, r2));
        }
        residual = r2;
        let denom = t2 - 2.0 * t1 + w;
        let mut next = t2;
        if denom.norm() > 0.0 {
            let acc = w - (t1 - w) * (t1 - w) / denom;
            if !bad(acc) && in_domain(acc) && evals < cfg.max_iter {
                if let Ok(tacc) = step(acc) {
                    evals += 1;
                    let racc = (tacc - acc).norm();
                    if !bad(tacc) && racc < r2 {
                        if racc < cfg.tol {
                            return Ok((tacc, evals, racc));
                        }
                        residual = racc;
                        next = tacc;
                    }
                }
            }
        }
        w = next;
    }
    Err(Error::NoConvergence { iterations: evals, residual })
}

/// Additive subordination at `z` with `im(z) > 0` (real arguments go through
/// [`real_axis_limit`]). `guess` warm-starts grid sweeps.
pub fn additive_subordination(
    mu: &Measure,
    nu: &Measure,
    z: Complex64,
    cfg: &SolverConfig,
) -> Result<SubordinationResult> {
    additive_subordination_from(mu, nu, z, cfg, None)
}

pub fn additive_subordination_from(
    mu: &Measure,
    nu: &Measure,
    z: Complex64,
    cfg: &SolverConfig,
    guess: Option<Complex64>,
) -> Result<SubordinationResult> {
    if z.im <= 0.0 {
        return Err(Error::Domain(format!("additive subordination needs im(z) > 0, got {z}")));
    }
    let step = |w: Complex64| -> Result<Complex64> {
        let jmu = mu.j_transform(w)?;
        let jnu = nu.j_transform(jmu - w + z)?;
        Ok(jnu - jmu + w)
    };
    let (w, iterations, _) = picard(step, |w: Complex64| w.im > 0.0, guess.unwrap_or(z), cfg)?;
    let omega1 = w;
    let jmu = mu.j_transform(omega1)?;
    let omega2 = jmu - omega1 + z;
    let g = mu.stieltjes(omega1)?;
    let residual = (nu.j_transform(omega2)? - jmu).norm();
    Ok(SubordinationResult { omega1, omega2, g, iterations, residual })
}

/// Multiplicative subordination at `z ∈ ℂ∖[0, +∞)` for measures on `[0, ∞)`,
/// neither equal to `δ₀`.
pub fn multiplicative_subordination(
    mu: &Measure,
    nu: &Measure,
    z: Complex64,
    cfg: &SolverConfig,
) -> Result<MultSubordinationResult> {
    multiplicative_subordination_from(mu, nu, z, cfg, None)
}

pub fn multiplicative_subordination_from(
    mu: &Measure,
    nu: &Measure,
    z: Complex64,
    cfg: &SolverConfig,
    guess: Option<Complex64>,
) -> Result<MultSubordinationResult> {
    for (name, m) in [("mu", mu), ("nu", nu)] {
        if m.support_lo() < -1e-12 {
            return Err(Error::Domain(format!("{name} must be supported on [0, inf)")));
        }
        if m.support_hi() == 0.0 {
            return Err(Error::Domain(format!("{name} = delta_0 has no multiplicative inverse")));
        }
    }
    if z.im == 0.0 && z.re >= 0.0 {
        return Err(Error::Domain(format!("z = {z} lies on [0, +inf)")));
    }
    let step = |w: Complex64| -> Result<Complex64> {
        if w.norm() == 0.0 {
            return Err(Error::DivisionByZero("multiplicative subordination iterate"));
        }
        let (_, eta_mu) = mu.psi_eta(z * w)?;
        if eta_mu.norm() == 0.0 {
            return Err(Error::DivisionByZero("eta_mu vanished"));
        }
        let (_, eta_nu) = nu.psi_eta(eta_mu / w)?;
        Ok(w / eta_mu * eta_nu)
    };
    // The fixed point is h1(z) = F1(z)/z, which tends to the mean of nu as
    // z -> 0. Try a short ladder of starts; the map is a Denjoy-Wolff
    // contraction so the start only affects robustness, not the limit.
    let mean_nu = nu.moment(1);
    let starts: Vec<Complex64> = match guess {
        Some(g0) => vec![g0],
        None => vec![
            Complex64::new(1.0, 0.0),
            Complex64::new(mean_nu, 0.0),
            Complex64::new(mean_nu, 0.3),
        ],
    };
    let mut last_err = None;
    let in_domain = |w: Complex64| {
        let f1 = z * w;
        if z.im > 0.0 {
            f1.im >= -1e-12
        } else if z.im < 0.0 {
            f1.im <= 1e-12
        } else {
            true
        }
    };
    for start in starts {
        match picard(&mut |w| step(w), &in_domain, start, cfg) {
            Ok((w, iterations, _)) => {
                let f1 = z * w;
                let (psi, eta_mu) = mu.psi_eta(f1)?;
                let f2 = eta_mu / w;
                let (_, eta_nu) = nu.psi_eta(f2)?;
                let residual = (eta_mu - eta_nu).norm();
                return Ok(MultSubordinationResult { f1, f2, psi, iterations, residual });
            }
            Err(e) => last_err = Some(e),
        }
    }
    Err(last_err.unwrap())
}

/// Stieltjes transform of the additively deformed Wigner model
/// `μ₁ = μ_sc ⊞ ν`: the unique solution with `im(g) < 0` of
/// `g = ∫ dν(t)/(z − σ²g − t)`, i.e. `g = g_ν(z − σ²g)`.
/// Also exposes `ω(z) = z − σ²g(z)`.
pub fn deformed_wigner_g(
    nu: &Measure,
    sigma: f64,
    z: Complex64,
    cfg: &SolverConfig,
) -> Result<ModelG> {
    deformed_wigner_g_from(nu, sigma, z, cfg, None)
}

pub fn deformed_wigner_g_from(
    nu: &Measure,
    sigma: f64,
    z: Complex64,
    cfg: &SolverConfig,
    guess: Option<Complex64>,
) -> Result<ModelG> {
    if !(sigma > 0.0) {
        return Err(Error::Invalid(format!("sigma {sigma} must be > 0")));
    }
    if z.im <= 0.0 {
        return Err(Error::Domain(format!("need im(z) > 0, got {z}")));
    }
    let s2 = sigma * sigma;
    let step = |g: Complex64| nu.stieltjes(z - s2 * g);
    let (g, iterations, residual) = picard(step, |g: Complex64| g.im < 0.0, guess.unwrap_or(1.0 / z), cfg)?;
    Ok(ModelG { g, omega: z - s2 * g, iterations, residual })
}

/// Stieltjes transform of the sample covariance model `μ₂ = μ_MP ⊠ ν`:
/// the solution of `g = ∫ dν(t)/(z − t(1 − c + c z g))` with `im(g) < 0`.
/// The exposed subordination point is `z/(1 − c + c z g)`.
pub fn sample_cov_g(nu: &Measure, c: f64, z: Complex64, cfg: &SolverConfig) -> Result<ModelG> {
    sample_cov_g_from(nu, c, z, cfg, None)
}

pub fn sample_cov_g_from(
    nu: &Measure,
    c: f64,
    z: Complex64,
    cfg: &SolverConfig,
    guess: Option<Complex64>,
) -> Result<ModelG> {
    if !(c > 0.0 && c <= 1.0) {
        return Err(Error::Invalid(format!("c = {c} must lie in (0, 1]")));
    }
    if nu.support_lo() < -1e-12 {
        return Err(Error::Domain("nu must be supported on [0, inf)".into()));
    }
    if z.im <= 0.0 {
        return Err(Error::Domain(format!("need im(z) > 0, got {z}")));
    }
    let step = |g: Complex64| -> Result<Complex64> {
        let q = 1.0 - c + c * z * g;
        if q.norm() < 1e-290 {
            return Err(Error::DivisionByZero("sample covariance denominator"));
        }
        Ok(nu.stieltjes(z / q)? / q)
    };
    let (g, iterations, residual) = picard(step, |g: Complex64| g.im < 0.0, guess.unwrap_or(1.0 / z), cfg)?;
    let q = 1.0 - c + c * z * g;
    Ok(ModelG { g, omega: z / q, iterations, residual })
}

/// Stieltjes transform of the information-plus-noise model
/// `μ₃ = (√μ_MP ⊞_c √ν)²`: the solution with `im(g) < 0` of
/// `g = ∫ dν(t) / ((1−cσ²g)z − t/(1−cσ²g) − σ²(1−c))`.
/// The exposed subordination point is `k²z − σ²(1−c)k` with `k = 1 − cσ²g`.
pub fn info_noise_g(
    nu: &Measure,
    c: f64,
    sigma: f64,
    z: Complex64,
    cfg: &SolverConfig,
) -> Result<ModelG> {
    info_noise_g_from(nu, c, sigma, z, cfg, None)
}

pub fn info_noise_g_from(
    nu: &Measure,
    c: f64,
    sigma: f64,
    z: Complex64,
    cfg: &SolverConfig,
    guess: Option<Complex64>,
) -> Result<ModelG> {
    if !(c > 0.0 && c <= 1.0) {
        return Err(Error::Invalid(format!("c = {c} must lie in (0, 1]")));
    }
    if !(sigma > 0.0) {
        return Err(Error::Invalid(format!("sigma {sigma} must be > 0")));
    }
    if nu.support_lo() < -1e-12 {
        return Err(Error::Domain("nu must be supported on [0, inf)".into()));
    }
    if z.im <= 0.0 {
        return Err(Error::Domain(format!("need im(z) > 0, got {z}")));
    }
    let s2 = sigma * sigma;
    let step = |g: Complex64| -> Result<Complex64> {
        let k = 1.0 - c * s2 * g;
        if k.norm() < 1e-290 {
            return Err(Error::DivisionByZero("information-plus-noise denominator"));
        }
        Ok(k * nu.stieltjes(k * k * z - s2 * (1.0 - c) * k)?)
    };
    let (g, iterations, residual) = picard(step, |g: Complex64| g.im < 0.0, guess.unwrap_or(1.0 / z), cfg)?;
    let k = 1.0 - c * s2 * g;
    Ok(ModelG { g, omega: k * k * z - s2 * (1.0 - c) * k, iterations, residual })
}

/// Rectangular subordination value `Ω(1/z)` of the information-plus-noise
/// model, from the closed formula
/// `Ω(1/z) = 1 / ((1/z)(1 − cσ²g₃(1/z))² − (1−c)σ²(1 − cσ²g₃(1/z)))`
/// evaluated at the solver's `g₃`.
pub fn info_noise_rect_omega(
    nu: &Measure,
    c: f64,
    sigma: f64,
    z: Complex64,
    cfg: &SolverConfig,
) -> Result<Complex64> {
    let inv = 1.0 / z;
    let g3 = info_noise_g(nu, c, sigma, inv, cfg)?.g;
    let k = 1.0 - c * sigma * sigma * g3;
    let denom = inv * k * k - (1.0 - c) * sigma * sigma * k;
    if denom.norm() == 0.0 {
        return Err(Error::DivisionByZero("rectangular subordination"));
    }
    Ok(1.0 / denom)
}

/// Boundary value on the real axis of an upper-half-plane evaluator:
/// evaluate at `x + iy` for `y ∈ {1e-6, 1e-7, 1e-8}` and extrapolate
/// polynomially to `y = 0`.
pub fn real_axis_limit<F>(mut eval: F) -> Result<Complex64>
where
    F: FnMut(f64) -> Result<Complex64>,
{
    const YS: [f64; 3] = [1e-6, 1e-7, 1e-8];
    let f: [Complex64; 3] = [eval(YS[0])?, eval(YS[1])?, eval(YS[2])?];
    let mut out = Complex64::new(0.0, 0.0);
    for i in 0..3 {
        let mut li = 1.0;
        for j in 0..3 {
            if j != i {
                li *= (0.0 - YS[j]) / (YS[i] - YS[j]);
            }
        }
        out += li * f[i];
    }
    Ok(out)
}

/// Stieltjes transform of the model's limiting law at one point of the upper
/// half-plane, dispatching on the model kind.
pub fn model_g(model: &DeformedModel, z: Complex64, cfg: &SolverConfig) -> Result<Complex64> {
    model_g_from(model, z, cfg, None).map(|m| m.0)
}

/// Warm-startable variant; returns `(g, state)` where `state` is the value
/// to pass as the next guess in a sweep.
pub fn model_g_from(
    model: &DeformedModel,
    z: Complex64,
    cfg: &SolverConfig,
    guess: Option<Complex64>,
) -> Result<(Complex64, Complex64)> {
    match model {
        DeformedModel::Additive { nu, sigma } => {
            let r = deformed_wigner_g_from(nu, *sigma, z, cfg, guess)?;
            Ok((r.g, r.g))
        }
        DeformedModel::Multiplicative { nu, c } => {
            let r = sample_cov_g_from(nu, *c, z, cfg, guess)?;
            Ok((r.g, r.g))
        }
        DeformedModel::InfoPlusNoise { nu, sigma, c } => {
            let r = info_noise_g_from(nu, *c, *sigma, z, cfg, guess)?;
            Ok((r.g, r.g))
        }
        DeformedModel::IsotropicAdditive { mu, nu } => {
            let r = additive_subordination_from(mu, nu, z, cfg, guess)?;
            Ok((r.g, r.omega1))
        }
        DeformedModel::IsotropicMultiplicative { mu, nu } => {
            let inv = 1.0 / z;
            let r = multiplicative_subordination_from(mu, nu, inv, cfg, guess)?;
            // psi(1/z) = z g(z) - 1
            Ok(((r.psi + 1.0) * z.finv(), r.f1 / inv))
        }
    }
}

/// Real-axis extension of [`model_g`] outside the support.
pub fn model_g_real(model: &DeformedModel, x: f64, cfg: &SolverConfig) -> Result<Complex64> {
    let mut guess = None;
    real_axis_limit(|y| {
        let (g, state) = model_g_from(model, Complex64::new(x, y), cfg, guess)?;
        guess = Some(state);
        Ok(g)
    })
}

/// Density of the model's limiting law on `grid` by Stieltjes inversion at
/// height `y`, with the mass accounting checked: continuous mass plus
/// declared atoms must reach 1 within `2e-3`.
pub fn convolve_density(
    model: &DeformedModel,
    grid: &[f64],
    y: f64,
    cfg: &SolverConfig,
) -> Result<Measure> {
    if grid.len() < 8 {
        return Err(Error::Invalid("convolve grid needs at least 8 points".into()));
    }
    if !(y > 0.0) {
        return Err(Error::Range(format!("inversion height {y} must be > 0")));
    }
    let mut values = Vec::with_capacity(grid.len());
    let mut guess = None;
    for &x in grid {
        let (g, state) = model_g_from(model, Complex64::new(x, y), cfg, guess)
            .map_err(|e| Error::Evaluation(format!("model g at {x}+{y}i: {e}")))?;
        guess = Some(state);
        values.push((-g.im / std::f64::consts::PI).max(0.0));
    }
    let atoms = model_atoms(model);
    let m = Measure::grid_density_raw(grid.to_vec(), values, atoms)?;
    let mass = m.mass();
    if (mass - 1.0).abs() > 2e-3 {
        return Err(Error::Evaluation(format!(
            "convolved density mass {mass} misses 1 by more than 2e-3; widen the grid or lower y"
        )));
    }
    Ok(m)
}

/// Atoms of the limiting law that are carried explicitly rather than
/// inverted: the multiplicative models keep `max(μ({0}), ν({0}))` at zero.
fn model_atoms(model: &DeformedModel) -> Vec<(f64, f64)> {
    let w0 = match model {
        DeformedModel::Multiplicative { nu, .. } => nu.atom_mass_at(0.0),
        DeformedModel::IsotropicMultiplicative { mu, nu } => {
            mu.atom_mass_at(0.0).max(nu.atom_mass_at(0.0))
        }
        _ => 0.0,
    };
    if w0 > 0.0 {
        vec![(0.0, w0)]
    } else {
        Vec::new()
    }
}

/// Free cumulants `κ₁..κ_order` from moments by the triangular
/// moment-cumulant recursion `m_n = Σ_s κ_s · [x^{n−s}] M(x)^s` with
/// `M(x) = 1 + Σ m_k x^k`. Moments are normalized by the measure's mass so
/// the oracle also applies to densities recovered by inversion.
///
/// `order` is capped at 8 by the quadrature accuracy of the moments.
pub fn free_cumulants(m: &Measure, order: usize) -> Vec<f64> {
    assert!((1..=8).contains(&order), "cumulant order must be in 1..=8");
    let mass = m.mass();
    let mom: Vec<f64> = (0..=order).map(|k| m.moment(k as u32) / mass).collect();
    let mut poly = vec![0.0; order + 1];
    poly[0] = 1.0;
    poly[1..].copy_from_slice(&mom[1..]);
    // powers[s][j] = [x^j] M(x)^s
    let mut powers: Vec<Vec<f64>> = vec![vec![0.0; order + 1]; order + 1];
    powers[0][0] = 1.0;
    for s in 1..=order {
        let prev = powers[s - 1].clone();
        for j in 0..=order {
            let mut acc = 0.0;
            for i in 0..=j {
                acc += prev[i] * poly[j - i];
            }
            powers[s][j] = acc;
        }
    }
    let mut kappa = vec![0.0; order + 1];
    for n in 1..=order {
        let mut k = mom[n];
        for s in 1..n {
            k -= kappa[s] * powers[s][n - s];
        }
        kappa[n] = k;
    }
    kappa.remove(0);
    kappa
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

    fn cfg() -> SolverConfig {
        SolverConfig { tol: 1e-13, max_iter: 200_000, damping: 1.0 }
    }

    #[test]
    fn additive_with_point_mass_is_a_shift() {
        let mu = Measure::semicircle(1.0).unwrap();
        let nu = Measure::dirac(0.7);
        for &z in &[c(0.1, 0.5), c(-2.0, 0.01), c(3.0, 1.0)] {
            let r = additive_subordination(&mu, &nu, z, &cfg()).unwrap();
            assert!((r.omega1 - (z - 0.7)).norm() < 1e-12, "omega1 = {}", r.omega1);
            let expect = mu.stieltjes(z - 0.7).unwrap();
            assert!((r.g - expect).norm() < 1e-12);
            // omega2 = J_mu(z-a) + a
            let j = mu.j_transform(z - 0.7).unwrap();
            assert!((r.omega2 - (j + 0.7)).norm() < 1e-11);
            assert!(r.residual < 1e-12);
        }
    }

    #[test]
    fn semicircles_add_in_quadrature() {
        let sc1 = Measure::semicircle(1.0).unwrap();
        let combined = Measure::semicircle(2f64.sqrt()).unwrap();
        for &z in &[c(0.0, 2.0), c(1.5, 0.3), c(-3.0, 0.05)] {
            let r = additive_subordination(&sc1, &sc1, z, &cfg()).unwrap();
            let expect = combined.stieltjes(z).unwrap();
            assert!((r.g - expect).norm() < 1e-11, "z={z}: {} vs {expect}", r.g);
        }
    }

    #[test]
    fn bernoulli_free_convolution_is_arcsine() {
        // ½(δ₋₁+δ₁) ⊞ ½(δ₋₁+δ₁) = arcsine on [−2, 2], g(z) = 1/√(z²−4)
        let b = bernoulli();
        let z = c(0.0, 2.0);
        let r = additive_subordination(&b, &b, z, &cfg()).unwrap();
        let expect = 1.0 / (z * z - 4.0).sqrt();
        let expect = if expect.im > 0.0 { -expect } else { expect };
        assert!((r.g - expect).norm() < 1e-10, "{} vs {expect}", r.g);
    }

    #[test]
    fn additive_commutes() {
        let mu = Measure::atomic(vec![(0.0, 0.3), (1.5, 0.7)]).unwrap();
        let nu = bernoulli();
        for &z in &[c(0.3, 0.7), c(-1.0, 0.2)] {
            let a = additive_subordination(&mu, &nu, z, &cfg()).unwrap();
            let b = additive_subordination(&nu, &mu, z, &cfg()).unwrap();
            assert!((a.g - b.g).norm() < 1e-10);
            assert!((a.omega1 - b.omega2).norm() < 1e-9);
        }
    }

    #[test]
    fn multiplicative_identity_and_point_masses() {
        let mp = Measure::marchenko_pastur(0.5).unwrap();
        let one = Measure::dirac(1.0);
        let z = c(0.4, 0.3);
        let r = multiplicative_subordination(&mp, &one, z, &cfg()).unwrap();
        assert!((r.f1 - z).norm() < 1e-12);
        let (psi, _) = mp.psi_eta(z).unwrap();
        assert!((r.psi - psi).norm() < 1e-12);

        let da = Measure::dirac(2.0);
        let db = Measure::dirac(0.5);
        let r = multiplicative_subordination(&da, &db, z, &cfg()).unwrap();
        let (expect, _) = Measure::dirac(1.0).psi_eta(z).unwrap();
        assert!((r.psi - expect).norm() < 1e-12);
    }

    #[test]
    fn multiplicative_commutes() {
        let mu = Measure::marchenko_pastur(0.25).unwrap();
        let nu = Measure::atomic(vec![(1.0, 0.9), (3.0, 0.1)]).unwrap();
        for &z in &[c(0.21, 0.13), c(-0.5, 0.0), c(0.1, -0.4)] {
            let a = multiplicative_subordination(&mu, &nu, z, &cfg()).unwrap();
            let b = multiplicative_subordination(&nu, &mu, z, &cfg()).unwrap();
            assert!((a.psi - b.psi).norm() < 1e-10, "z={z}");
            assert!(a.residual < 1e-10);
        }
    }

    #[test]
    fn deformed_wigner_recovers_semicircle() {
        let nu = Measure::dirac(0.0);
        let sc = Measure::semicircle(1.0).unwrap();
        for &z in &[c(0.0, 1.0), c(1.9, 0.01), c(-2.5, 0.5)] {
            let r = deformed_wigner_g(&nu, 1.0, z, &cfg()).unwrap();
            let expect = sc.stieltjes(z).unwrap();
            assert!((r.g - expect).norm() < 1e-11);
            assert!((r.omega - (z - r.g)).norm() < 1e-13);
            assert!(r.g.im < 0.0);
        }
    }

    #[test]
    fn sample_cov_recovers_marchenko_pastur() {
        let nu = Measure::dirac(1.0);
        for &cc in &[0.25, 0.5, 1.0] {
            let mp = Measure::marchenko_pastur(cc).unwrap();
            for &z in &[c(0.5, 0.8), c(3.0, 0.01), c(-1.0, 0.2)] {
                let r = sample_cov_g(&nu, cc, z, &cfg()).unwrap();
                let expect = mp.stieltjes(z).unwrap();
                assert!((r.g - expect).norm() < 1e-10, "c={cc} z={z}");
            }
        }
    }

    #[test]
    fn sample_cov_of_scaled_point_mass_is_scaled_mp() {
        // nu = δ_π rescales the MP law by π
        let pi = 3.0;
        let nu = Measure::dirac(pi);
        let mp = Measure::marchenko_pastur(0.5).unwrap();
        let z = c(2.0, 0.4);
        let r = sample_cov_g(&nu, 0.5, z, &cfg()).unwrap();
        // g_{πX}(z) = g_X(z/π)/π
        let expect = mp.stieltjes(z / pi).unwrap() / pi;
        assert!((r.g - expect).norm() < 1e-11);
    }

    #[test]
    fn sample_cov_cross_validates_multiplicative_subordination() {
        let nu = Measure::atomic(vec![(1.0, 0.9), (3.0, 0.1)]).unwrap();
        let mp = Measure::marchenko_pastur(0.5).unwrap();
        for &z in &[c(3.0, 0.001), c(0.7, 0.5), c(-1.0, 0.3)] {
            let direct = sample_cov_g(&nu, 0.5, z, &cfg()).unwrap().g;
            let r = multiplicative_subordination(&mp, &nu, 1.0 / z, &cfg()).unwrap();
            let via_psi = (r.psi + 1.0) / z;
            assert!((direct - via_psi).norm() < 1e-9, "z={z}: {direct} vs {via_psi}");
        }
    }

    #[test]
    fn info_noise_recovers_scaled_mp() {
        // nu = δ₀ gives the σ²-scaled MP law with edge σ²(1±√c)²
        let nu = Measure::dirac(0.0);
        let (sigma, cc) = (1.3, 0.25);
        let mp = Measure::marchenko_pastur(cc).unwrap();
        let s2 = sigma * sigma;
        for &z in &[c(1.0, 0.5), c(4.0, 0.01), c(-0.5, 0.1)] {
            let r = info_noise_g(&nu, cc, sigma, z, &cfg()).unwrap();
            let expect = mp.stieltjes(z / s2).unwrap() / s2;
            assert!((r.g - expect).norm() < 1e-10, "z={z}");
        }
        // parameter collapse at c = 1: MP with a hard edge at zero
        let mp1 = Measure::marchenko_pastur(1.0).unwrap();
        let z = c(1.5, 0.2);
        let r = info_noise_g(&nu, 1.0, 1.0, z, &cfg()).unwrap();
        assert!((r.g - mp1.stieltjes(z).unwrap()).norm() < 1e-10);
    }

    #[test]
    fn subordination_residuals_on_random_atomic_pairs() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for trial in 0..200 {
            let n_mu = rng.random_range(1..=4);
            let n_nu = rng.random_range(1..=4);
            let mk = |rng: &mut rand_chacha::ChaCha8Rng, n: usize| {
                let mut atoms: Vec<(f64, f64)> = (0..n)
                    .map(|_| (rng.random_range(-2.0..2.0), rng.random_range(0.1..1.0)))
                    .collect();
                let tot: f64 = atoms.iter().map(|a| a.1).sum();
                for a in &mut atoms {
                    a.1 /= tot;
                }
                let correction: f64 = 1.0 - atoms.iter().map(|a| a.1).sum::<f64>();
                atoms[0].1 += correction;
                Measure::atomic(atoms)
            };
            let (mu, nu) = match (mk(&mut rng, n_mu), mk(&mut rng, n_nu)) {
                (Ok(a), Ok(b)) => (a, b),
                _ => continue, // duplicate locations, skip
            };
            let z = c(rng.random_range(-3.0..3.0), rng.random_range(0.05..2.0));
            let r = additive_subordination(&mu, &nu, z, &cfg()).unwrap();
            assert!(r.residual < 1e-10, "trial {trial}: residual {}", r.residual);
            assert!(r.omega1.im >= z.im - 1e-9 && r.omega2.im >= z.im - 1e-9);
        }
    }

    #[test]
    fn damping_does_not_change_the_limit() {
        let mu = bernoulli();
        let nu = Measure::atomic(vec![(0.0, 0.25), (2.0, 0.75)]).unwrap();
        let z = c(0.9, 0.4);
        let full = additive_subordination(&mu, &nu, z, &cfg()).unwrap();
        let half = additive_subordination(
            &mu,
            &nu,
            z,
            &SolverConfig { damping: 0.5, ..cfg() },
        )
        .unwrap();
        assert!((full.g - half.g).norm() < 1e-12);
    }

    #[test]
    fn no_convergence_is_reported() {
        let nu = Measure::dirac(0.0);
        let err = deformed_wigner_g(
            &nu,
            1.0,
            c(0.0, 0.5),
            &SolverConfig { tol: 1e-15, max_iter: 3, damping: 1.0 },
        )
        .unwrap_err();
        match err {
            Error::NoConvergence { iterations, residual } => {
                assert_eq!(iterations, 3);
                assert!(residual > 0.0);
            }
            other => panic!("expected NoConvergence, got {other}"),
        }
    }

    #[test]
    fn real_axis_limit_of_semicircle_matches_closed_form() {
        let nu = Measure::dirac(0.0);
        let sc = Measure::semicircle(1.0).unwrap();
        let g = real_axis_limit(|y| Ok(deformed_wigner_g(&nu, 1.0, c(2.5, y), &cfg())?.g)).unwrap();
        let expect = sc.stieltjes(c(2.5, 0.0)).unwrap();
        assert!((g - expect).norm() < 1e-9, "{g} vs {expect}");
        assert!(g.im.abs() < 1e-9);
    }

    #[test]
    fn free_cumulants_of_named_measures() {
        let sc = Measure::semicircle(0.8).unwrap();
        let k = free_cumulants(&sc, 4);
        assert!(k[0].abs() < 1e-9);
        assert!((k[1] - 0.64).abs() < 1e-9);
        assert!(k[2].abs() < 1e-8 && k[3].abs() < 1e-8);

        let d = Measure::dirac(1.7);
        let k = free_cumulants(&d, 4);
        assert!((k[0] - 1.7).abs() < 1e-12);
        assert!(k[1].abs() < 1e-12 && k[2].abs() < 1e-12 && k[3].abs() < 1e-12);

        // MP with ratio c has kappa_n = c^{n-1}
        let mp = Measure::marchenko_pastur(0.5).unwrap();
        let k = free_cumulants(&mp, 3);
        assert!((k[0] - 1.0).abs() < 1e-9);
        assert!((k[1] - 0.5).abs() < 1e-9);
        assert!((k[2] - 0.25).abs() < 1e-8, "kappa3 = {}", k[2]);
    }

    #[test]
    fn convolve_density_semicircle() {
        let model = DeformedModel::additive(Measure::dirac(0.0), 1.0).unwrap();
        let grid: Vec<f64> = (0..=4000).map(|i| -2.5 + 5.0 * i as f64 / 4000.0).collect();
        let m = convolve_density(&model, &grid, 1e-6, &cfg()).unwrap();
        let (_, v) = m.density_values().unwrap();
        for (x, val) in grid.iter().zip(v) {
            if (x.abs() - 2.0).abs() < 5e-3 {
                continue; // inversion smears the edge over a y^{2/3} window
            }
            assert!((val - crate::measures::sc_density(1.0, *x)).abs() < 1e-4);
        }
        assert!((m.mass() - 1.0).abs() < 1e-3);
    }

    #[test]
    fn convolve_density_mp_quarter() {
        let model = DeformedModel::multiplicative(Measure::dirac(1.0), 0.25).unwrap();
        let grid: Vec<f64> = (0..=4000).map(|i| 0.05 + 2.5 * i as f64 / 4000.0).collect();
        let m = convolve_density(&model, &grid, 1e-6, &cfg()).unwrap();
        let (_, v) = m.density_values().unwrap();
        for (x, val) in grid.iter().zip(v) {
            if (x - 0.25).abs() < 5e-3 || (x - 2.25).abs() < 5e-3 {
                continue;
            }
            assert!(
                (val - crate::measures::mp_density(0.25, *x)).abs() < 2e-4,
                "x={x} val={val}"
            );
        }
    }

    #[test]
    fn convolve_first_moment_is_additive() {
        // keep max atom weights of the two factors summing below 1 so the
        // convolution stays absolutely continuous with a bounded density
        let mu = Measure::atomic(vec![(-1.0, 0.4), (0.0, 0.3), (1.0, 0.3)]).unwrap();
        let nu = Measure::atomic(vec![(0.5, 0.45), (1.0, 0.2), (1.5, 0.35)]).unwrap();
        let model = DeformedModel::isotropic_additive(mu.clone(), nu.clone()).unwrap();
        let grid: Vec<f64> = (0..=6000).map(|i| -3.5 + 7.0 * i as f64 / 6000.0).collect();
        let m = convolve_density(&model, &grid, 1e-6, &cfg()).unwrap();
        let mean = m.moment(1) / m.mass();
        assert!(
            (mean - (mu.moment(1) + nu.moment(1))).abs() < 1e-3,
            "mean {mean}"
        );
    }

    #[test]
    fn cumulant_additivity_under_free_convolution() {
        let mu = Measure::atomic(vec![(-1.0, 0.5), (0.5, 0.5)]).unwrap();
        let nu = Measure::atomic(vec![(-0.5, 0.35), (0.25, 0.35), (1.0, 0.3)]).unwrap();
        let model = DeformedModel::isotropic_additive(mu.clone(), nu.clone()).unwrap();
        let grid: Vec<f64> = (0..=8000).map(|i| -3.0 + 6.0 * i as f64 / 8000.0).collect();
        let m = convolve_density(&model, &grid, 1e-6, &cfg()).unwrap();
        let k = free_cumulants(&m, 6);
        let kmu = free_cumulants(&mu, 6);
        let knu = free_cumulants(&nu, 6);
        for i in 0..6 {
            assert!(
                (k[i] - (kmu[i] + knu[i])).abs() < 1e-4,
                "kappa_{}: {} vs {}",
                i + 1,
                k[i],
                kmu[i] + knu[i]
            );
        }
    }
}
