//! The driving Lévy process model: spectrally negative jump measures, the
//! characteristic triplet (gamma, sigma^2, Pi) with kill rate q, evaluation of
//! the Laplace exponent and classification of the long-run regime.
//!
//! The Laplace exponent of the (possibly killed) process is
//!
//! ```text
//! psi(l) = gamma*l + sigma2*l^2/2 + int over (-inf,0) of (e^{l u} - 1 - l*u*1{|u|<=1}) Pi(du) - q
//! ```
//!
//! which is convex on [0, inf) with psi(0) = -q. Atom measures evaluate the
//! integral as an exact finite sum; density measures use adaptive quadrature
//! split at u = -1 with dyadic bands taming the u -> 0- singularity.

use std::collections::HashMap;
use std::sync::RwLock;

use rand::{Rng, RngExt};

use crate::error::{Error, Result};
use crate::quad::{adaptive_simpson, band_tol, sum_bands, BandSum};

/// Default absolute tolerance for density-measure quadrature.
pub const DEFAULT_QUAD_TOL: f64 = 1e-10;

const MAX_ZERO_BANDS: u32 = 1100;
const MAX_TAIL_BANDS: u32 = 900;

/// One atom of a purely atomic jump measure: mass at a strictly negative location.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpAtom {
    pub location: f64,
    pub mass: f64,
}

/// Total-activity class of a jump measure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Activity {
    Finite,
    Infinite,
}

/// Parametric families for density-represented jump measures.
#[derive(Debug, Clone, PartialEq)]
pub enum DensityFamily {
    /// `scale * |u|^(-1-alpha) * exp(-tilt*|u|)` on `(cut, 0)`.
    ///
    /// Requires `alpha` in (0, 2) for integrability near zero; the activity is
    /// infinite. `cut = None` means unbounded support on the left.
    ExpTiltedStable {
        alpha: f64,
        scale: f64,
        tilt: f64,
        cut: Option<f64>,
    },
    /// Piecewise-linear density through `(u, value)` knots with strictly
    /// negative, strictly increasing locations. Finite activity.
    CustomTable { knots: Vec<(f64, f64)> },
}

/// Jump measure of a spectrally negative Lévy process: support in (-inf, 0).
#[derive(Debug, Clone, PartialEq)]
pub enum JumpMeasure {
    Atoms(Vec<JumpAtom>),
    Density(DensityFamily),
}

/// Result of a density integral over a range: either a value or a detected
/// divergence with the partial sum accumulated so far.
enum RangeIntegral {
    Value(f64),
    Divergent { partial: f64 },
}

impl JumpMeasure {
    pub fn empty() -> Self {
        JumpMeasure::Atoms(Vec::new())
    }

    pub fn is_density(&self) -> bool {
        matches!(self, JumpMeasure::Density(_))
    }

    pub fn activity(&self) -> Activity {
        match self {
            JumpMeasure::Atoms(_) => Activity::Finite,
            JumpMeasure::Density(DensityFamily::ExpTiltedStable { .. }) => Activity::Infinite,
            JumpMeasure::Density(DensityFamily::CustomTable { .. }) => Activity::Finite,
        }
    }

    /// Structural validation plus the numerical integrability witness
    /// (`int min(1, u^2) Pi(du) < inf`) for density representations.
    pub fn validate(&self, tol: f64) -> Result<()> {
        match self {
            JumpMeasure::Atoms(atoms) => {
                for (index, a) in atoms.iter().enumerate() {
                    if !(a.location < 0.0) || !a.location.is_finite() {
                        return Err(Error::PositiveSupportAtom {
                            index,
                            location: a.location,
                        });
                    }
                    if !(a.mass > 0.0) || !a.mass.is_finite() {
                        return Err(Error::NonPositiveMass {
                            index,
                            mass: a.mass,
                        });
                    }
                }
                Ok(())
            }
            JumpMeasure::Density(family) => {
                validate_family(family)?;
                // witness: both the head near zero and the mass of the tail
                match self.integrate_density(&|u| u * u, -1.0, 0.0, tol)? {
                    RangeIntegral::Value(_) => {}
                    RangeIntegral::Divergent { partial } => {
                        return Err(Error::NonIntegrableMeasure {
                            detail: format!(
                                "u^2-integral near zero grows without bound (partial sum {partial:.3e})"
                            ),
                        })
                    }
                }
                match self.integrate_density(&|_| 1.0, f64::NEG_INFINITY, -1.0, tol)? {
                    RangeIntegral::Value(_) => Ok(()),
                    RangeIntegral::Divergent { partial } => Err(Error::NonIntegrableMeasure {
                        detail: format!(
                            "tail mass on (-inf, -1] diverges (partial sum {partial:.3e})"
                        ),
                    }),
                }
            }
        }
    }

    /// The Lévy–Khintchine integral `int (e^{l u} - 1 - l u 1{|u| <= 1}) Pi(du)`.
    pub fn levy_khintchine_integral(&self, lambda: f64, tol: f64) -> Result<f64> {
        match self {
            JumpMeasure::Atoms(atoms) => Ok(atoms
                .iter()
                .map(|a| {
                    let compensate = if a.location >= -1.0 {
                        lambda * a.location
                    } else {
                        0.0
                    };
                    a.mass * ((lambda * a.location).exp() - 1.0 - compensate)
                })
                .sum()),
            JumpMeasure::Density(_) => {
                let head =
                    self.expect_value(&|u| (lambda * u).exp() - 1.0 - lambda * u, -1.0, 0.0, tol)?;
                let tail =
                    self.expect_value(&|u| (lambda * u).exp() - 1.0, f64::NEG_INFINITY, -1.0, tol)?;
                Ok(head + tail)
            }
        }
    }

    /// Mean contribution of the uncompensated big jumps, `int_{u < -1} u Pi(du)`.
    /// Returns `None` when the integral diverges (mean is -inf).
    pub fn big_jump_mean(&self, tol: f64) -> Result<Option<f64>> {
        match self {
            JumpMeasure::Atoms(atoms) => Ok(Some(
                atoms
                    .iter()
                    .filter(|a| a.location < -1.0)
                    .map(|a| a.mass * a.location)
                    .sum(),
            )),
            JumpMeasure::Density(_) => {
                match self.integrate_density(&|u| u, f64::NEG_INFINITY, -1.0, tol)? {
                    RangeIntegral::Value(v) => Ok(Some(v)),
                    RangeIntegral::Divergent { .. } => Ok(None),
                }
            }
        }
    }

    /// `int (e^{u} - 1) Pi(du)` restricted to the simulated jumps: the whole
    /// measure for atoms, `u <= -eps` for densities.
    pub fn exp_compensator(&self, n: u32, eps: f64, tol: f64) -> Result<f64> {
        let nf = n as f64;
        match self {
            JumpMeasure::Atoms(atoms) => Ok(atoms
                .iter()
                .map(|a| a.mass * ((nf * a.location).exp() - 1.0))
                .sum()),
            JumpMeasure::Density(_) => {
                self.expect_value(&|u| (nf * u).exp() - 1.0, f64::NEG_INFINITY, -eps, tol)
            }
        }
    }

    /// Variance of the jumps below the cutoff, `int_{-eps < u < 0} u^2 Pi(du)`.
    pub fn small_jump_variance(&self, eps: f64, tol: f64) -> Result<f64> {
        match self {
            JumpMeasure::Atoms(_) => Ok(0.0),
            JumpMeasure::Density(_) => self.expect_value(&|u| u * u, -eps, 0.0, tol),
        }
    }

    /// `int_{-eps < u < 0} (e^u - 1)^2 Pi(du)`, the diffusion surrogate for the
    /// compensated small jumps of the state SDE.
    pub fn small_exp_variance(&self, eps: f64, tol: f64) -> Result<f64> {
        match self {
            JumpMeasure::Atoms(_) => Ok(0.0),
            JumpMeasure::Density(_) => {
                self.expect_value(&|u| (u.exp() - 1.0) * (u.exp() - 1.0), -eps, 0.0, tol)
            }
        }
    }

    /// `int_{-1 <= u <= -eps} u Pi(du)`: the drift compensator of the simulated
    /// small jumps. For atoms, the exact sum over locations in [-1, 0).
    pub fn truncated_mean(&self, eps: f64, tol: f64) -> Result<f64> {
        match self {
            JumpMeasure::Atoms(atoms) => Ok(atoms
                .iter()
                .filter(|a| a.location >= -1.0)
                .map(|a| a.mass * a.location)
                .sum()),
            JumpMeasure::Density(_) => self.expect_value(&|u| u, -1.0, -eps, tol),
        }
    }

    /// Total mass of the simulated jumps: all atoms, or the density above the cutoff.
    pub fn mass_above(&self, eps: f64, tol: f64) -> Result<f64> {
        match self {
            JumpMeasure::Atoms(atoms) => Ok(atoms.iter().map(|a| a.mass).sum()),
            JumpMeasure::Density(_) => self.expect_value(&|_| 1.0, f64::NEG_INFINITY, -eps, tol),
        }
    }

    fn expect_value(&self, g: &dyn Fn(f64) -> f64, lo: f64, hi: f64, tol: f64) -> Result<f64> {
        match self.integrate_density(g, lo, hi, tol)? {
            RangeIntegral::Value(v) => Ok(v),
            RangeIntegral::Divergent { partial } => Err(Error::NonIntegrableMeasure {
                detail: format!("integral on ({lo}, {hi}) diverges (partial sum {partial:.3e})"),
            }),
        }
    }

    /// Integrates `g` (smooth on the requested range) against a density
    /// measure over `(lo, hi)`, with `hi = 0` meaning the open interval up to
    /// zero and `lo = -inf` meaning the full left tail.
    fn integrate_density(
        &self,
        g: &dyn Fn(f64) -> f64,
        lo: f64,
        hi: f64,
        tol: f64,
    ) -> Result<RangeIntegral> {
        let family = match self {
            JumpMeasure::Density(f) => f,
            JumpMeasure::Atoms(_) => unreachable!("density integration on atoms"),
        };
        match family {
            DensityFamily::ExpTiltedStable { cut, .. } => {
                let dens = |u: f64| family.eval(u);
                let lo = match cut {
                    Some(c) => lo.max(*c),
                    None => lo,
                };
                if lo >= hi && !(hi == 0.0 && lo < 0.0) {
                    return Ok(RangeIntegral::Value(0.0));
                }
                let mut total = 0.0;

                // head bands toward zero on (-b0, 0)
                if hi == 0.0 {
                    let b0 = 1.0f64.min(-lo);
                    let mut band = |k: u32| -> Result<f64> {
                        let right = -b0 * 0.5f64.powi(k as i32 + 1);
                        let left = -b0 * 0.5f64.powi(k as i32);
                        adaptive_simpson(&|u| g(u) * dens(u), left, right, band_tol(tol, k))
                    };
                    match sum_bands(&mut band, tol, MAX_ZERO_BANDS)? {
                        BandSum::Converged(v) => total += v,
                        BandSum::Divergent { partial } => {
                            return Ok(RangeIntegral::Divergent {
                                partial: total + partial,
                            })
                        }
                    }
                    if -lo <= b0 {
                        return Ok(RangeIntegral::Value(total));
                    }
                }

                // finite middle piece [max(lo, -1), min(hi, -b0 or hi)]
                let mid_hi = if hi == 0.0 { -1.0f64.min(-lo) } else { hi };
                let mid_lo = lo.max(-1.0);
                if mid_lo < mid_hi {
                    total += adaptive_simpson(&|u| g(u) * dens(u), mid_lo, mid_hi, tol)?;
                }

                // left tail
                let tail_hi = hi.min(-1.0);
                if lo < tail_hi {
                    if lo.is_finite() {
                        total += adaptive_simpson(&|u| g(u) * dens(u), lo, tail_hi, tol)?;
                    } else {
                        let start = -tail_hi; // >= 1
                        let mut band = |k: u32| -> Result<f64> {
                            let right = -start * 2f64.powi(k as i32);
                            let left = -start * 2f64.powi(k as i32 + 1);
                            adaptive_simpson(&|u| g(u) * dens(u), left, right, band_tol(tol, k))
                        };
                        match sum_bands(&mut band, tol, MAX_TAIL_BANDS)? {
                            BandSum::Converged(v) => total += v,
                            BandSum::Divergent { partial } => {
                                return Ok(RangeIntegral::Divergent {
                                    partial: total + partial,
                                })
                            }
                        }
                    }
                }
                Ok(RangeIntegral::Value(total))
            }
            DensityFamily::CustomTable { knots } => {
                // bounded density on compact support: integrate per segment
                let mut total = 0.0;
                for w in knots.windows(2) {
                    let (u0, v0) = w[0];
                    let (u1, v1) = w[1];
                    let a = u0.max(lo);
                    let b = if hi == 0.0 { u1 } else { u1.min(hi) };
                    if a >= b {
                        continue;
                    }
                    let slope = (v1 - v0) / (u1 - u0);
                    let dens = move |u: f64| v0 + slope * (u - u0);
                    total += adaptive_simpson(&|u| g(u) * dens(u), a, b, tol * 0.25)?;
                }
                Ok(RangeIntegral::Value(total))
            }
        }
    }
}

impl DensityFamily {
    /// Pointwise density value at `u < 0`.
    pub fn eval(&self, u: f64) -> f64 {
        match self {
            DensityFamily::ExpTiltedStable {
                alpha,
                scale,
                tilt,
                cut,
            } => {
                if u >= 0.0 || cut.is_some_and(|c| u <= c) {
                    return 0.0;
                }
                let r = -u;
                scale * r.powf(-1.0 - alpha) * (-tilt * r).exp()
            }
            DensityFamily::CustomTable { knots } => {
                for w in knots.windows(2) {
                    let (u0, v0) = w[0];
                    let (u1, v1) = w[1];
                    if u >= u0 && u <= u1 {
                        return v0 + (v1 - v0) / (u1 - u0) * (u - u0);
                    }
                }
                0.0
            }
        }
    }
}

fn validate_family(family: &DensityFamily) -> Result<()> {
    match family {
        DensityFamily::ExpTiltedStable {
            alpha,
            scale,
            tilt,
            cut,
        } => {
            if !alpha.is_finite() || *alpha <= 0.0 || *alpha >= 2.0 {
                return Err(Error::InvalidDensity(format!(
                    "exp_tilted_stable alpha must lie in (0, 2), got {alpha}"
                )));
            }
            if !scale.is_finite() || *scale <= 0.0 {
                return Err(Error::InvalidDensity(format!(
                    "exp_tilted_stable scale must be > 0, got {scale}"
                )));
            }
            if !tilt.is_finite() || *tilt < 0.0 {
                return Err(Error::InvalidDensity(format!(
                    "exp_tilted_stable tilt must be >= 0, got {tilt}"
                )));
            }
            if let Some(c) = cut {
                if !c.is_finite() || *c >= 0.0 {
                    return Err(Error::InvalidDensity(format!(
                        "exp_tilted_stable cut must be a finite negative number, got {c}"
                    )));
                }
            }
            if tilt == &0.0 && cut.is_none() && *alpha <= 0.0 {
                unreachable!()
            }
            Ok(())
        }
        DensityFamily::CustomTable { knots } => {
            if knots.len() < 2 {
                return Err(Error::InvalidDensity(
                    "custom_table needs at least two knots".into(),
                ));
            }
            let mut any_mass = false;
            for w in knots.windows(2) {
                if w[1].0 <= w[0].0 {
                    return Err(Error::InvalidDensity(
                        "custom_table knot locations must be strictly increasing".into(),
                    ));
                }
            }
            for (u, v) in knots {
                if !u.is_finite() || *u >= 0.0 {
                    return Err(Error::InvalidDensity(format!(
                        "custom_table knot location {u} must be strictly negative"
                    )));
                }
                if !v.is_finite() || *v < 0.0 {
                    return Err(Error::InvalidDensity(format!(
                        "custom_table density value {v} must be >= 0"
                    )));
                }
                if *v > 0.0 {
                    any_mass = true;
                }
            }
            if !any_mass {
                return Err(Error::InvalidDensity("custom_table carries no mass".into()));
            }
            Ok(())
        }
    }
}

/// Characteristic data of a spectrally negative, possibly killed Lévy process.
#[derive(Debug, Clone, PartialEq)]
pub struct LevyTriplet {
    pub gamma: f64,
    pub sigma2: f64,
    pub jump_measure: JumpMeasure,
    pub kill_rate: f64,
}

impl LevyTriplet {
    pub fn new(gamma: f64, sigma2: f64, jump_measure: JumpMeasure, kill_rate: f64) -> Self {
        Self {
            gamma,
            sigma2,
            jump_measure,
            kill_rate,
        }
    }

    /// Convenience constructor for purely atomic jump measures.
    pub fn with_atoms(gamma: f64, sigma2: f64, atoms: &[(f64, f64)], kill_rate: f64) -> Self {
        let atoms = atoms
            .iter()
            .map(|&(location, mass)| JumpAtom { location, mass })
            .collect();
        Self::new(gamma, sigma2, JumpMeasure::Atoms(atoms), kill_rate)
    }

    /// Checks every triplet invariant; density measures additionally run the
    /// numerical integrability witness.
    pub fn validate(&self, quad_tol: f64) -> Result<()> {
        if !self.sigma2.is_finite() || self.sigma2 < 0.0 {
            return Err(Error::NegativeSigma2(self.sigma2));
        }
        if !self.kill_rate.is_finite() || self.kill_rate < 0.0 {
            return Err(Error::NegativeKillRate(self.kill_rate));
        }
        if !self.gamma.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "gamma must be finite, got {}",
                self.gamma
            )));
        }
        self.jump_measure.validate(quad_tol)
    }
}

/// Validates a triplet with the default quadrature tolerance.
pub fn validate_triplet(triplet: &LevyTriplet) -> Result<()> {
    triplet.validate(DEFAULT_QUAD_TOL)
}

/// Outcome of the A2 check `psi(1) > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum A2Status {
    Holds,
    Fails,
    /// `|psi(1)|` fell inside the quadrature guard band of a density measure;
    /// the check refuses to guess.
    Indeterminate,
}

/// Long-run behaviour of the driving process.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Killed,
    DriftsToMinusInfinity,
    Oscillates,
    DriftsToPlusInfinity,
}

/// Classification report: assumptions, mean of xi_1 and whether the
/// represented self-similar process hits zero in finite time.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct RegimeReport {
    pub a1_holds: bool,
    pub a2_holds: bool,
    /// Mean of xi_1 under the truncation convention `gamma + int_{u<-1} u Pi(du)`;
    /// `-inf` when the big-jump integral diverges.
    pub mean_xi1: f64,
    pub regime: Regime,
    pub hits_zero: bool,
}

/// The Laplace exponent `psi` of a validated triplet, with cached evaluations
/// at non-negative integers. Immutable after construction; the integer cache
/// fills idempotently and is safe to share across threads.
#[derive(Debug)]
pub struct LaplaceExponent {
    triplet: LevyTriplet,
    quad_tol: f64,
    cache: RwLock<HashMap<u32, f64>>,
}

impl Clone for LaplaceExponent {
    fn clone(&self) -> Self {
        Self {
            triplet: self.triplet.clone(),
            quad_tol: self.quad_tol,
            cache: RwLock::new(self.cache.read().expect("cache lock").clone()),
        }
    }
}

impl LaplaceExponent {
    /// Validates the triplet and wraps it for evaluation at the default tolerance.
    pub fn new(triplet: LevyTriplet) -> Result<Self> {
        Self::with_tolerance(triplet, DEFAULT_QUAD_TOL)
    }

    pub fn with_tolerance(triplet: LevyTriplet, quad_tol: f64) -> Result<Self> {
        if !(quad_tol > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "quadrature tolerance must be > 0, got {quad_tol}"
            )));
        }
        triplet.validate(quad_tol)?;
        Ok(Self {
            triplet,
            quad_tol,
            cache: RwLock::new(HashMap::new()),
        })
    }

    pub fn triplet(&self) -> &LevyTriplet {
        &self.triplet
    }

    pub fn quad_tol(&self) -> f64 {
        self.quad_tol
    }

    /// Evaluates `psi(lambda)` for `lambda >= 0`; integer arguments are cached.
    pub fn psi(&self, lambda: f64) -> Result<f64> {
        if !(lambda >= 0.0) {
            return Err(Error::NegativeLambda(lambda));
        }
        if lambda.fract() == 0.0 && lambda <= u32::MAX as f64 {
            return self.psi_int(lambda as u32);
        }
        self.eval(lambda)
    }

    /// `psi(n)` for integer orders, from the concurrent idempotent cache.
    pub fn psi_int(&self, n: u32) -> Result<f64> {
        if let Some(&v) = self.cache.read().expect("cache lock").get(&n) {
            return Ok(v);
        }
        let v = self.eval(n as f64)?;
        self.cache.write().expect("cache lock").insert(n, v);
        Ok(v)
    }

    fn eval(&self, lambda: f64) -> Result<f64> {
        let t = &self.triplet;
        let jump = t
            .jump_measure
            .levy_khintchine_integral(lambda, self.quad_tol)?;
        Ok(t.gamma * lambda + 0.5 * t.sigma2 * lambda * lambda + jump - t.kill_rate)
    }

    /// Assumption A2: `psi(1) > 0` strictly. Exact for atom measures; density
    /// measures answer `Indeterminate` inside the quadrature guard band.
    pub fn check_a2(&self) -> Result<A2Status> {
        let psi1 = self.psi_int(1)?;
        if self.triplet.jump_measure.is_density() && psi1.abs() <= self.quad_tol {
            return Ok(A2Status::Indeterminate);
        }
        Ok(if psi1 > 0.0 {
            A2Status::Holds
        } else {
            A2Status::Fails
        })
    }

    /// Fails with a descriptive error unless A2 holds.
    pub fn require_a2(&self) -> Result<()> {
        match self.check_a2()? {
            A2Status::Holds => Ok(()),
            A2Status::Fails => Err(Error::A2Fails {
                psi1: self.psi_int(1)?,
            }),
            A2Status::Indeterminate => Err(Error::A2Indeterminate {
                psi1_abs: self.psi_int(1)?.abs(),
                tolerance: self.quad_tol,
            }),
        }
    }

    /// The Cramér root: the unique theta in (0, 1) with `psi(theta) = 0`, when
    /// psi dips strictly negative on (0, 1). Requires A2. Bisection to 1e-12;
    /// convexity makes the bracket [argmin, 1] valid.
    pub fn cramer_root(&self) -> Result<Option<f64>> {
        self.require_a2()?;
        // ternary search for the convex minimum on [0, 1]
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        for _ in 0..200 {
            let m1 = lo + (hi - lo) / 3.0;
            let m2 = hi - (hi - lo) / 3.0;
            if self.psi(m1)? <= self.psi(m2)? {
                hi = m2;
            } else {
                lo = m1;
            }
        }
        let argmin = 0.5 * (lo + hi);
        if self.psi(argmin)? >= 0.0 {
            return Ok(None);
        }
        let (mut a, mut b) = (argmin, 1.0);
        while b - a > 1e-12 {
            let m = 0.5 * (a + b);
            if self.psi(m)? < 0.0 {
                a = m;
            } else {
                b = m;
            }
        }
        Ok(Some(0.5 * (a + b)))
    }

    /// Classifies the long-run regime and Lamperti's zero-hitting criterion.
    pub fn classify_regime(&self) -> Result<RegimeReport> {
        let t = &self.triplet;
        let mean = match t.jump_measure.big_jump_mean(self.quad_tol)? {
            Some(big) => t.gamma + big,
            None => f64::NEG_INFINITY,
        };
        let regime = if t.kill_rate > 0.0 {
            Regime::Killed
        } else if mean > 0.0 {
            Regime::DriftsToPlusInfinity
        } else if mean == 0.0 {
            Regime::Oscillates
        } else {
            Regime::DriftsToMinusInfinity
        };
        let hits_zero = matches!(regime, Regime::Killed | Regime::DriftsToMinusInfinity);
        Ok(RegimeReport {
            a1_holds: true,
            a2_holds: self.check_a2()? == A2Status::Holds,
            mean_xi1: mean,
            regime,
            hits_zero,
        })
    }
}

/// Rejection sampler for jump locations of a density measure restricted to
/// `u <= -eps`, used by both simulators.
#[derive(Debug, Clone)]
pub struct DensityJumpSampler {
    family: DensityFamily,
    eps: f64,
    total_rate: f64,
    /// cumulative segment masses for custom tables, (upper index, cum mass)
    table_cdf: Vec<(usize, f64)>,
}

impl DensityJumpSampler {
    pub fn new(measure: &JumpMeasure, eps: f64, tol: f64) -> Result<Self> {
        let family = match measure {
            JumpMeasure::Density(f) => f.clone(),
            JumpMeasure::Atoms(_) => {
                return Err(Error::InvalidConfig(
                    "density sampler requested for an atomic measure".into(),
                ))
            }
        };
        if !(eps > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "small-jump cutoff must be > 0, got {eps}"
            )));
        }
        let total_rate = measure.mass_above(eps, tol)?;
        let mut table_cdf = Vec::new();
        if let DensityFamily::CustomTable { knots } = &family {
            let mut acc = 0.0;
            for (i, w) in knots.windows(2).enumerate() {
                let (u0, v0) = w[0];
                let (u1, v1) = w[1];
                let b = u1.min(-eps);
                if u0 < b {
                    let slope = (v1 - v0) / (u1 - u0);
                    let va = v0;
                    let vb = v0 + slope * (b - u0);
                    acc += 0.5 * (va + vb) * (b - u0);
                    table_cdf.push((i, acc));
                }
            }
        }
        Ok(Self {
            family,
            eps,
            total_rate,
            table_cdf,
        })
    }

    /// Total mass above the cutoff (the compound-Poisson rate).
    pub fn total_rate(&self) -> f64 {
        self.total_rate
    }

    /// Samples one jump location `u <= -eps`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match &self.family {
            DensityFamily::ExpTiltedStable {
                alpha, tilt, cut, ..
            } => {
                // power-law proposal with closed-form inverse CDF, thinned by the tilt
                let eps = self.eps;
                let cut_r = cut.map(|c| -c);
                loop {
                    let u: f64 = rng.random();
                    let r = match cut_r {
                        None => eps * (1.0 - u).powf(-1.0 / alpha),
                        Some(cr) => {
                            let w = 1.0 - (eps / cr).powf(*alpha);
                            eps * (1.0 - u * w).powf(-1.0 / alpha)
                        }
                    };
                    if *tilt == 0.0 {
                        return -r;
                    }
                    let accept: f64 = rng.random();
                    if accept <= (-(tilt * (r - eps))).exp() {
                        return -r;
                    }
                }
            }
            DensityFamily::CustomTable { knots } => {
                let target: f64 = rng.random::<f64>() * self.total_rate;
                let pos = self
                    .table_cdf
                    .partition_point(|&(_, cum)| cum < target)
                    .min(self.table_cdf.len() - 1);
                let (i, cum_hi) = self.table_cdf[pos];
                let (u0, v0) = knots[i];
                let (u1, v1) = knots[i + 1];
                let b = u1.min(-self.eps);
                let slope = (v1 - v0) / (u1 - u0);
                let seg_mass = {
                    let vb = v0 + slope * (b - u0);
                    0.5 * (v0 + vb) * (b - u0)
                };
                let within = target - (cum_hi - seg_mass);
                // invert the quadratic CDF of the linear density on [u0, b]
                let x =
                    solve_linear_density_quantile(v0, slope, b - u0, within.clamp(0.0, seg_mass));
                (u0 + x).min(-self.eps)
            }
        }
    }
}

/// Solves `v0*x + slope*x^2/2 = mass` for `x` in `[0, len]`.
fn solve_linear_density_quantile(v0: f64, slope: f64, len: f64, mass: f64) -> f64 {
    if slope.abs() < 1e-300 {
        if v0 <= 0.0 {
            return len;
        }
        return (mass / v0).min(len);
    }
    let disc = v0 * v0 + 2.0 * slope * mass;
    let x = if slope > 0.0 {
        (-v0 + disc.max(0.0).sqrt()) / slope
    } else {
        // decreasing density: take the root inside the segment
        (-v0 + disc.max(0.0).sqrt()) / slope
    };
    x.clamp(0.0, len)
}
