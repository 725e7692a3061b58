//! Direct simulation of the jump-type SDE for the self-similar process,
//! including starts from zero.
//!
//! The state solves
//!
//! ```text
//! dZ = psi(1) dt + sigma sqrt(Z) dB
//!      + d(compensated jumps:  1{r Z <= 1} Z (e^u - 1) against dr x Pi(du))
//!      - d(compensated killing: 1{r Z <= 1} Z           against q dr)
//! ```
//!
//! The abstract Poisson measures are never materialized. For a state `x > 0`
//! the indicator section `{r : r x <= 1}` has Lebesgue measure `1/x`, so each
//! jump atom `(u_k, m_k)` fires at rate `m_k / x` (mapping `x -> x e^{u_k}`)
//! and killing fires at rate `q / x` (mapping `x -> 0`, after which the path is
//! frozen). The compensators are applied analytically as the constant drift
//! `psi(1) - int (e^u - 1) Pi(du) + q` while the state is positive; every
//! kernel vanishes at zero, leaving the bare drift `psi(1)` to lift the state
//! off the boundary. Euler steps are sub-divided so that the total thinning
//! rate times the step length stays below 0.1, which bounds the bias of the
//! at-most-one-event-per-step realization.

use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal};

use crate::error::{Error, Result};
use crate::levy::{DensityJumpSampler, JumpAtom, JumpMeasure, LaplaceExponent};
use crate::path::{Provenance, SimPath};

/// Scheme identifier recorded in provenance.
pub const SDE_SCHEME_ID: &str = "sde-euler-thinning-v1";

/// Jump kernel of the SDE: `1{r x <= 1} x (e^u - 1)`. Vanishes identically at
/// `x = 0`, is nonpositive for `u < 0`, and `x + g = x e^u >= 0` whenever the
/// indicator fires, so jumps act multiplicatively and preserve nonnegativity.
/// The simulator never evaluates it pointwise; it realizes its r-section
/// `{r : r x <= 1}` as the thinning rate `mass/x` per atom.
pub fn jump_kernel(x: f64, r: f64, u: f64) -> f64 {
    if r * x <= 1.0 {
        x * (u.exp() - 1.0)
    } else {
        0.0
    }
}

/// Killing kernel of the SDE: `-1{r x <= 1} x`, mapping the state to zero.
pub fn kill_kernel(x: f64, r: f64) -> f64 {
    if r * x <= 1.0 {
        -x
    } else {
        0.0
    }
}

/// Maximum admissible (total thinning rate) x (substep length).
const RATE_PER_STEP: f64 = 0.1;
/// Hard per-path budget on substeps; exhausting it aborts the path.
const SUBSTEP_BUDGET: u64 = 4_000_000;
/// States below this are snapped to zero to avoid subnormal rate blowups.
const STATE_FLOOR: f64 = 1e-300;

/// Configuration of the Euler-thinning scheme. The compensator is always
/// handled analytically as a drift term.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct SdeConfig {
    pub dt: f64,
    /// Density measures only: jumps below this magnitude are aggregated into an
    /// additional sqrt(Z)-diffusion coefficient.
    pub small_jump_cutoff: f64,
    /// Numerical guard mirroring the localizing stopping times: a path whose
    /// state exceeds the cap aborts with a diagnostic.
    pub state_cap: f64,
}

impl SdeConfig {
    pub fn new(dt: f64) -> Result<Self> {
        Self::with_caps(dt, 1e-3, 1e6)
    }

    pub fn with_caps(dt: f64, small_jump_cutoff: f64, state_cap: f64) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidConfig(format!("dt must be > 0, got {dt}")));
        }
        if !(small_jump_cutoff > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "small jump cutoff must be > 0, got {small_jump_cutoff}"
            )));
        }
        if !(state_cap > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "state cap must be > 0, got {state_cap}"
            )));
        }
        Ok(Self {
            dt,
            small_jump_cutoff,
            state_cap,
        })
    }
}

/// Precomputed dynamics of the scheme for one (model, config) pair.
#[derive(Debug, Clone)]
pub struct SdeDynamics {
    psi1: f64,
    /// Drift while the state is positive: `psi(1) - int (e^u - 1) Pi_sim(du) + q`.
    drift_positive: f64,
    /// Diffusion coefficient including the small-jump surrogate.
    sigma_total: f64,
    atoms: Vec<JumpAtom>,
    sampler: Option<DensityJumpSampler>,
    /// Total simulated jump mass (atom masses, or density mass above the cutoff).
    jump_mass: f64,
    kill_rate: f64,
    small_jump_cutoff: f64,
    quad_tol: f64,
}

impl SdeDynamics {
    pub fn new(psi: &LaplaceExponent, cfg: &SdeConfig) -> Result<Self> {
        let triplet = psi.triplet();
        let tol = psi.quad_tol();
        let eps = cfg.small_jump_cutoff;
        let (atoms, sampler) = match &triplet.jump_measure {
            JumpMeasure::Atoms(atoms) => (atoms.clone(), None),
            m @ JumpMeasure::Density(_) => {
                (Vec::new(), Some(DensityJumpSampler::new(m, eps, tol)?))
            }
        };
        let psi1 = psi.psi_int(1)?;
        let exp_comp = triplet.jump_measure.exp_compensator(1, eps, tol)?;
        let surrogate_var = triplet.jump_measure.small_exp_variance(eps, tol)?;
        let jump_mass = match &sampler {
            Some(s) => s.total_rate(),
            None => atoms.iter().map(|a| a.mass).sum(),
        };
        Ok(Self {
            psi1,
            drift_positive: psi1 - exp_comp + triplet.kill_rate,
            sigma_total: (triplet.sigma2 + surrogate_var).sqrt(),
            atoms,
            sampler,
            jump_mass,
            kill_rate: triplet.kill_rate,
            small_jump_cutoff: eps,
            quad_tol: tol,
        })
    }

    pub fn psi1(&self) -> f64 {
        self.psi1
    }

    pub fn sigma_total(&self) -> f64 {
        self.sigma_total
    }

    pub fn small_jump_cutoff(&self) -> f64 {
        self.small_jump_cutoff
    }

    fn drift(&self, state: f64) -> f64 {
        if state > 0.0 {
            self.drift_positive
        } else {
            self.psi1
        }
    }

    fn total_rate(&self, state: f64) -> f64 {
        if state > 0.0 {
            (self.jump_mass + self.kill_rate) / state
        } else {
            0.0
        }
    }

    /// State-dependent thinning rates and the analytic compensator drift.
    pub fn effective_rates(&self, state: f64) -> Result<EffectiveRates> {
        if !(state >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "state must be >= 0, got {state}"
            )));
        }
        if state == 0.0 {
            return Ok(EffectiveRates {
                jump_rate_total: 0.0,
                per_atom: vec![0.0; self.atoms.len()],
                kill_rate: 0.0,
                compensator_drift: 0.0,
                total_drift: self.psi1,
            });
        }
        let per_atom: Vec<f64> = self.atoms.iter().map(|a| a.mass / state).collect();
        let compensator_drift = self.drift_positive - self.psi1;
        Ok(EffectiveRates {
            jump_rate_total: self.jump_mass / state,
            per_atom,
            kill_rate: self.kill_rate / state,
            compensator_drift,
            total_drift: self.drift_positive,
        })
    }

    /// `int (e^{n u} - 1) Pi_sim(du)` for the simulated jump part.
    pub fn exp_compensator(&self, n: u32, psi: &LaplaceExponent) -> Result<f64> {
        psi.triplet()
            .jump_measure
            .exp_compensator(n, self.small_jump_cutoff, self.quad_tol)
    }
}

/// Thinning rates at one state.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveRates {
    pub jump_rate_total: f64,
    pub per_atom: Vec<f64>,
    pub kill_rate: f64,
    /// Contribution of the analytic compensators to the drift.
    pub compensator_drift: f64,
    pub total_drift: f64,
}

/// Convenience wrapper building the dynamics for a single query.
pub fn effective_rates(
    state: f64,
    psi: &LaplaceExponent,
    cfg: &SdeConfig,
) -> Result<EffectiveRates> {
    SdeDynamics::new(psi, cfg)?.effective_rates(state)
}

/// Kind of a thinning event.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SdeEventKind {
    Jump,
    Kill,
}

/// An accepted thinning event. `state_before` is the state the event acted on
/// (after the Euler drift of its substep); a jump multiplies it by `e^size`,
/// a kill maps it to zero and freezes the path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SdeEvent {
    pub time: f64,
    pub kind: SdeEventKind,
    pub size: f64,
    pub state_before: f64,
}

/// One executed substep of the scheme.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SdeStep {
    pub time: f64,
    pub h: f64,
    /// State at the start of the substep, before drift and diffusion.
    pub state_pre: f64,
    /// Brownian increment dB over the substep (already scaled by sqrt(h)).
    pub brownian: f64,
    /// State at the end of the substep, after any event.
    pub state_post: f64,
    pub event: Option<SdeEvent>,
}

/// Complete per-path record of randomness and events.
#[derive(Debug, Clone, Default)]
pub struct SdeEventLog {
    pub steps: Vec<SdeStep>,
    /// Count of diffusion updates clamped at zero; must vanish as dt -> 0.
    pub clamp_count: u64,
}

impl SdeEventLog {
    pub fn events(&self) -> impl Iterator<Item = &SdeEvent> {
        self.steps.iter().filter_map(|s| s.event.as_ref())
    }

    /// The documented events dump: CSV with columns `t,kind,u`.
    pub fn write_events_csv<W: std::io::Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "t,kind,u")?;
        for e in self.events() {
            let kind = match e.kind {
                SdeEventKind::Jump => "jump",
                SdeEventKind::Kill => "kill",
            };
            writeln!(w, "{},{},{}", e.time, kind, e.size)?;
        }
        Ok(())
    }
}

/// Result of one path run.
pub(crate) struct SdeRun {
    pub values: Vec<f64>,
    pub absorption: Option<f64>,
    pub clamp_count: u64,
    pub log: Option<SdeEventLog>,
}

/// One Euler-thinning substep; exposed for direct scheme-level tests.
/// Returns `(new_state, event)`; the caller handles freezing after a kill.
pub fn sde_step<R: Rng>(
    state: f64,
    h: f64,
    dynamics: &SdeDynamics,
    rng: &mut R,
    at_time: f64,
) -> Result<(f64, Option<SdeEvent>)> {
    debug_assert!(state >= 0.0);
    // Euler drift + diffusion with the zero clamp
    let mut x = state + dynamics.drift(state) * h;
    if dynamics.sigma_total > 0.0 && state > 0.0 {
        let n: f64 = StandardNormal.sample(rng);
        x += dynamics.sigma_total * state.sqrt() * h.sqrt() * n;
    }
    let x = x.max(0.0);

    // thinning clocks at the pre-step state; earliest wins, at most one event
    let mut winner: Option<(f64, SdeEventKind, f64)> = None;
    if state > 0.0 {
        for atom in &dynamics.atoms {
            let clock = Exp::new(atom.mass / state)
                .expect("positive rate")
                .sample(rng);
            if clock < h && winner.is_none_or(|(w, _, _)| clock < w) {
                winner = Some((clock, SdeEventKind::Jump, atom.location));
            }
        }
        if let Some(sampler) = &dynamics.sampler {
            let rate = sampler.total_rate() / state;
            if rate > 0.0 {
                let clock = Exp::new(rate).expect("positive rate").sample(rng);
                if clock < h {
                    let u = sampler.sample(rng);
                    if winner.is_none_or(|(w, _, _)| clock < w) {
                        winner = Some((clock, SdeEventKind::Jump, u));
                    }
                }
            }
        }
        if dynamics.kill_rate > 0.0 {
            let clock = Exp::new(dynamics.kill_rate / state)
                .expect("positive rate")
                .sample(rng);
            if clock < h && winner.is_none_or(|(w, _, _)| clock < w) {
                winner = Some((clock, SdeEventKind::Kill, 0.0));
            }
        }
    }
    match winner {
        None => Ok((x, None)),
        Some((clock, SdeEventKind::Jump, u)) => {
            let event = SdeEvent {
                time: at_time + clock,
                kind: SdeEventKind::Jump,
                size: u,
                state_before: x,
            };
            Ok((x * u.exp(), Some(event)))
        }
        Some((clock, SdeEventKind::Kill, _)) => {
            let event = SdeEvent {
                time: at_time + clock,
                kind: SdeEventKind::Kill,
                size: 0.0,
                state_before: x,
            };
            Ok((0.0, Some(event)))
        }
    }
}

pub(crate) fn run_sde<R: Rng>(
    z: f64,
    dynamics: &SdeDynamics,
    cfg: &SdeConfig,
    horizon: f64,
    output_times: &[f64],
    rng: &mut R,
    record_log: bool,
) -> Result<SdeRun> {
    let mut values = Vec::with_capacity(output_times.len());
    let mut log = record_log.then(SdeEventLog::default);
    let mut clamp_count = 0u64;
    let mut state = z;
    let mut t = 0.0f64;
    let mut killed_at: Option<f64> = None;
    let mut budget = SUBSTEP_BUDGET;
    let mut out_idx = 0usize;
    while out_idx < output_times.len() && output_times[out_idx] <= 0.0 {
        values.push(state);
        out_idx += 1;
    }
    let mut boundaries: Vec<f64> = output_times[out_idx..].to_vec();
    if boundaries.last().is_none_or(|&b| b < horizon) {
        boundaries.push(horizon);
    }
    'outer: for &boundary in &boundaries {
        while t < boundary {
            if killed_at.is_some() {
                break 'outer;
            }
            if budget == 0 {
                return Err(Error::SubstepBudgetExceeded { time: t, state });
            }
            budget -= 1;
            let remaining = boundary - t;
            let rate = dynamics.total_rate(state);
            let mut h = remaining.min(cfg.dt);
            if rate > 0.0 {
                h = h.min(RATE_PER_STEP / rate);
            }
            if remaining - h < 1e-12 * cfg.dt {
                h = remaining;
            }
            let before = state;
            let pre_diffusion = before + dynamics.drift(before) * h;
            let (next, event) = sde_step(state, h, dynamics, rng, t)?;
            if next == 0.0 && event.is_none() && pre_diffusion > 0.0 && dynamics.sigma_total > 0.0 {
                clamp_count += 1;
            }
            let mut next = next;
            if next > 0.0 && next < STATE_FLOOR {
                next = 0.0;
            }
            if !next.is_finite() {
                return Err(Error::Overflow {
                    context: format!("sde state at time {t}"),
                });
            }
            if next > cfg.state_cap {
                return Err(Error::StateCapExceeded {
                    time: t,
                    state: next,
                    cap: cfg.state_cap,
                });
            }
            if let Some(e) = event {
                if e.kind == SdeEventKind::Kill {
                    killed_at = Some(e.time);
                }
            }
            if let Some(l) = log.as_mut() {
                // recover dB for the record: invert the update when diffusing
                let brownian = if dynamics.sigma_total > 0.0 && before > 0.0 {
                    let base = event.map_or(next, |e| e.state_before);
                    // base = max(0, before + drift*h + sigma*sqrt(before)*dB)
                    if base > 0.0 {
                        (base - before - dynamics.drift(before) * h)
                            / (dynamics.sigma_total * before.sqrt())
                    } else {
                        f64::NAN // clamped: the raw increment is not recoverable
                    }
                } else {
                    0.0
                };
                l.steps.push(SdeStep {
                    time: t,
                    h,
                    state_pre: before,
                    brownian,
                    state_post: next,
                    event,
                });
            }
            state = next;
            t += h;
            if h == remaining {
                t = boundary;
            }
        }
        t = boundary;
        if out_idx < output_times.len() && output_times[out_idx] == boundary {
            values.push(if killed_at.is_some() { 0.0 } else { state });
            out_idx += 1;
        }
    }
    // a frozen path answers every remaining output with zero
    while out_idx < output_times.len() {
        values.push(0.0);
        out_idx += 1;
    }
    if let Some(l) = log.as_mut() {
        l.clamp_count = clamp_count;
    }
    Ok(SdeRun {
        values,
        absorption: killed_at,
        clamp_count,
        log,
    })
}

/// Simulates one path of the SDE scheme from `z >= 0`, recording every substep
/// and event. Requires A2, matching the hypotheses of the moment formulas.
pub fn simulate_sde_path<R: Rng>(
    z: f64,
    psi: &LaplaceExponent,
    cfg: &SdeConfig,
    horizon: f64,
    output_times: &[f64],
    rng: &mut R,
    provenance: Provenance,
) -> Result<(SimPath, SdeEventLog)> {
    if !(z >= 0.0) || !z.is_finite() {
        return Err(Error::InvalidConfig(format!("z must be >= 0, got {z}")));
    }
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "horizon must be > 0, got {horizon}"
        )));
    }
    psi.require_a2()?;
    crate::lamperti::validate_output_times(output_times)?;
    if output_times.last().is_some_and(|&t| t > horizon) {
        return Err(Error::InvalidConfig(
            "output times must not exceed the horizon".into(),
        ));
    }
    let dynamics = SdeDynamics::new(psi, cfg)?;
    let run = run_sde(z, &dynamics, cfg, horizon, output_times, rng, true)?;
    let sim = SimPath {
        times: output_times.to_vec(),
        values: run.values,
        absorption: run.absorption,
        provenance,
    };
    Ok((sim, run.log.expect("log was recorded")))
}

/// The three martingale components of the moment decomposition along one
/// simulated path, accumulated per substep with predictable (left) integrands:
///
/// * `m1`: `n sigma int Z^{n-1/2} dB`,
/// * `m2`: jump sums `(e^{nu}-1) Z_-^n` minus the analytic compensator
///   `int (e^{nu}-1) Pi(du) * int Z^{n-1} ds`,
/// * `m3`: kill sums `-Z_-^n` plus `q int Z^{n-1} ds`,
///
/// together with the running Lebesgue integral `int Z^{n-1} ds`, so that
/// `Z_t^n = z^n + psi(n) int Z^{n-1} ds + m1 + m2 + m3` up to scheme error.
#[derive(Debug, Clone)]
pub struct MartingaleSeries {
    pub times: Vec<f64>,
    pub m1: Vec<f64>,
    pub m2: Vec<f64>,
    pub m3: Vec<f64>,
    pub drift_integral: Vec<f64>,
}

pub fn martingale_components(
    log: &SdeEventLog,
    n: u32,
    psi: &LaplaceExponent,
    dynamics: &SdeDynamics,
) -> Result<MartingaleSeries> {
    let steps = &log.steps;
    let mut series = MartingaleSeries {
        times: Vec::with_capacity(steps.len()),
        m1: Vec::with_capacity(steps.len()),
        m2: Vec::with_capacity(steps.len()),
        m3: Vec::with_capacity(steps.len()),
        drift_integral: Vec::with_capacity(steps.len()),
    };
    if n == 0 {
        for s in steps {
            series.times.push(s.time + s.h);
            series.m1.push(0.0);
            series.m2.push(0.0);
            series.m3.push(0.0);
            series.drift_integral.push(0.0);
        }
        return Ok(series);
    }
    let nf = n as f64;
    let comp_n = dynamics.exp_compensator(n, psi)?;
    let q = psi.triplet().kill_rate;
    let sigma = dynamics.sigma_total;
    let (mut m1, mut m2, mut m3, mut int_z) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for s in steps {
        let z0 = s.state_pre;
        let z0_pow = z0.powi(n as i32 - 1);
        if sigma > 0.0 && z0 > 0.0 && s.brownian.is_finite() {
            m1 += nf * sigma * z0_pow * z0.sqrt() * s.brownian;
        }
        int_z += z0_pow * s.h;
        m2 -= comp_n * z0_pow * s.h;
        m3 += q * z0_pow * s.h;
        if let Some(e) = s.event {
            let zn = e.state_before.powi(n as i32);
            match e.kind {
                SdeEventKind::Jump => m2 += ((nf * e.size).exp() - 1.0) * zn,
                SdeEventKind::Kill => m3 -= zn,
            }
        }
        series.times.push(s.time + s.h);
        series.m1.push(m1);
        series.m2.push(m2);
        series.m3.push(m3);
        series.drift_integral.push(int_z);
    }
    Ok(series)
}

/// Maximum over the grid of the pathwise moment-identity residual
/// `|Z_t^n - z^n - psi(n) int Z^{n-1} ds - m1 - m2 - m3|`, and its final value.
pub fn pathwise_identity_residual(
    log: &SdeEventLog,
    series: &MartingaleSeries,
    n: u32,
    psi_n: f64,
    z_init: f64,
) -> (f64, f64) {
    let zn0 = z_init.powi(n as i32);
    let mut max_res: f64 = 0.0;
    let mut last: f64 = 0.0;
    for (i, s) in log.steps.iter().enumerate() {
        let zn = s.state_post.powi(n as i32);
        let rhs =
            zn0 + psi_n * series.drift_integral[i] + series.m1[i] + series.m2[i] + series.m3[i];
        let res = zn - rhs;
        max_res = max_res.max(res.abs());
        last = res;
    }
    (max_res, last)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy::LevyTriplet;
    use crate::path::{config_digest, Provenance};
    use crate::rng::path_rng;

    fn prov() -> Provenance {
        Provenance {
            scheme: SDE_SCHEME_ID.into(),
            seed: 0,
            path_index: 0,
            config_digest: config_digest("test"),
        }
    }

    fn psi_of(t: LevyTriplet) -> LaplaceExponent {
        LaplaceExponent::new(t).unwrap()
    }

    #[test]
    fn kernels_vanish_at_zero_and_act_multiplicatively() {
        for &r in &[0.0, 0.5, 3.0] {
            assert_eq!(jump_kernel(0.0, r, -0.7), 0.0);
            assert_eq!(kill_kernel(0.0, r), 0.0);
        }
        for &(x, r, u) in &[(1.0, 0.5, -0.7), (2.0, 0.4, -2.0), (0.3, 3.0, -0.1)] {
            let g = jump_kernel(x, r, u);
            assert!(g <= 0.0, "downward jumps only");
            if r * x <= 1.0 {
                let moved = x + g;
                assert!((moved - x * u.exp()).abs() < 1e-15);
                assert!(moved >= 0.0);
                assert_eq!(x + kill_kernel(x, r), 0.0);
            } else {
                assert_eq!(g, 0.0);
                assert_eq!(kill_kernel(x, r), 0.0);
            }
        }
    }

    #[test]
    fn effective_rates_examples() {
        // x = 2, total atom mass 3, q = 0: jump rate 1.5
        let psi = psi_of(LevyTriplet::with_atoms(
            2.0,
            0.0,
            &[(-0.5, 1.0), (-1.5, 2.0)],
            0.0,
        ));
        let cfg = SdeConfig::new(0.01).unwrap();
        let r = effective_rates(2.0, &psi, &cfg).unwrap();
        assert!((r.jump_rate_total - 1.5).abs() < 1e-14);
        assert_eq!(r.per_atom, vec![0.5, 1.0]);

        // x = 0: everything vanishes, drift psi(1)
        let r0 = effective_rates(0.0, &psi, &cfg).unwrap();
        assert_eq!(r0.jump_rate_total, 0.0);
        assert_eq!(r0.kill_rate, 0.0);
        assert_eq!(r0.compensator_drift, 0.0);
        assert!((r0.total_drift - psi.psi_int(1).unwrap()).abs() < 1e-14);

        // Pi empty, q = 2, x = 4: kill rate 0.5, compensator +2, drift psi(1)+2
        let psi = psi_of(LevyTriplet::with_atoms(1.0, 0.5, &[], 2.0));
        let r = effective_rates(4.0, &psi, &cfg).unwrap();
        assert!((r.kill_rate - 0.5).abs() < 1e-14);
        assert!((r.compensator_drift - 2.0).abs() < 1e-14);
        let psi1 = psi.psi_int(1).unwrap();
        assert!((r.total_drift - (psi1 + 2.0)).abs() < 1e-14);
        // consistency: psi(1) already contains -q, so the total drift is gamma + sigma2/2
        assert!((r.total_drift - (1.0 + 0.25)).abs() < 1e-14);
    }

    #[test]
    fn deterministic_drift_is_exact() {
        let psi = psi_of(LevyTriplet::with_atoms(1.0, 0.0, &[], 0.0));
        let cfg = SdeConfig::new(0.01).unwrap();
        let mut rng = path_rng(1, 2, 0);
        let (sim, log) =
            simulate_sde_path(1.0, &psi, &cfg, 2.0, &[0.5, 1.0, 2.0], &mut rng, prov()).unwrap();
        assert!((sim.values[0] - 1.5).abs() < 1e-12);
        assert!((sim.values[1] - 2.0).abs() < 1e-12);
        assert!((sim.values[2] - 3.0).abs() < 1e-12);
        assert_eq!(log.clamp_count, 0);
        assert_eq!(log.events().count(), 0);
    }

    #[test]
    fn zero_start_lifts_off_at_drift_rate() {
        // from 0 with sigma = 0 and atoms present, the first step is psi(1) dt
        let psi = psi_of(LevyTriplet::with_atoms(2.0, 0.0, &[(-1.0, 1.0)], 0.0));
        let cfg = SdeConfig::new(0.01).unwrap();
        let dynamics = SdeDynamics::new(&psi, &cfg).unwrap();
        let mut rng = path_rng(2, 2, 0);
        let (state, event) = sde_step(0.0, 0.01, &dynamics, &mut rng, 0.0).unwrap();
        assert!(event.is_none(), "kernels vanish at zero");
        let psi1 = psi.psi_int(1).unwrap();
        assert!((state - psi1 * 0.01).abs() < 1e-15, "state = {state}");
    }

    #[test]
    fn forced_jump_halves_the_state() {
        // single atom at -ln 2 with huge mass: a jump fires essentially always
        // and multiplies the state by exactly 1/2
        let psi = psi_of(LevyTriplet::with_atoms(
            5.0,
            0.0,
            &[(-(2f64.ln()), 500.0)],
            0.0,
        ));
        let cfg = SdeConfig::new(1e-3).unwrap();
        let dynamics = SdeDynamics::new(&psi, &cfg).unwrap();
        let mut rng = path_rng(3, 2, 1);
        let mut saw_jump = false;
        let mut state = 1.0f64;
        for k in 0..200 {
            let (next, event) =
                sde_step(state, 1e-3, &dynamics, &mut rng, k as f64 * 1e-3).unwrap();
            if let Some(e) = event {
                assert_eq!(e.kind, SdeEventKind::Jump);
                assert_eq!(next, e.state_before * 0.5);
                saw_jump = true;
                break;
            }
            state = next;
        }
        assert!(saw_jump, "a jump should fire at these rates");
    }

    #[test]
    fn killed_fraction_grows_with_q() {
        let cfg = SdeConfig::new(0.01).unwrap();
        let mut fractions = Vec::new();
        for &q in &[0.5, 2.0] {
            let psi = psi_of(LevyTriplet::with_atoms(3.0, 0.0, &[], q));
            let dynamics = SdeDynamics::new(&psi, &cfg).unwrap();
            let n = 2000;
            let mut killed = 0;
            for i in 0..n {
                let mut rng = path_rng(7, 2, i as u64);
                let run = run_sde(1.0, &dynamics, &cfg, 1.0, &[1.0], &mut rng, false).unwrap();
                if run.absorption.is_some() {
                    killed += 1;
                }
            }
            fractions.push(killed as f64 / n as f64);
        }
        assert!(fractions[0] > 0.0);
        assert!(fractions[1] > fractions[0], "{fractions:?}");
    }

    #[test]
    fn absorption_is_permanent() {
        // psi(1) = 6 + 0.5 - 5 = 1.5 > 0, so A2 holds despite the killing
        let psi = psi_of(LevyTriplet::with_atoms(6.0, 1.0, &[], 5.0));
        let cfg = SdeConfig::new(0.01).unwrap();
        for i in 0..50u64 {
            let mut rng = path_rng(9, 2, i);
            let (sim, log) = simulate_sde_path(
                1.0,
                &psi,
                &cfg,
                2.0,
                &[0.5, 1.0, 1.5, 2.0],
                &mut rng,
                prov(),
            )
            .unwrap();
            if let Some(t0) = sim.absorption {
                for (t, v) in sim.times.iter().zip(&sim.values) {
                    if *t >= t0 {
                        assert_eq!(*v, 0.0, "frozen after the kill at {t0}");
                    }
                }
                let kills: Vec<_> = log
                    .events()
                    .filter(|e| e.kind == SdeEventKind::Kill)
                    .collect();
                assert_eq!(kills.len(), 1);
            }
        }
    }

    #[test]
    fn state_cap_aborts() {
        let psi = psi_of(LevyTriplet::with_atoms(10.0, 0.0, &[], 0.0));
        let cfg = SdeConfig::with_caps(0.01, 1e-3, 5.0).unwrap();
        let mut rng = path_rng(11, 2, 0);
        let err = simulate_sde_path(1.0, &psi, &cfg, 2.0, &[2.0], &mut rng, prov()).unwrap_err();
        assert!(matches!(err, Error::StateCapExceeded { .. }));
    }

    #[test]
    fn martingale_components_deterministic_model() {
        let psi = psi_of(LevyTriplet::with_atoms(1.0, 0.0, &[], 0.0));
        let cfg = SdeConfig::new(0.01).unwrap();
        let dynamics = SdeDynamics::new(&psi, &cfg).unwrap();
        let mut rng = path_rng(13, 2, 0);
        let (_, log) = simulate_sde_path(1.0, &psi, &cfg, 1.0, &[1.0], &mut rng, prov()).unwrap();
        // n = 1: all components vanish and the identity is exact
        let s = martingale_components(&log, 1, &psi, &dynamics).unwrap();
        assert!(s.m1.iter().all(|&v| v == 0.0));
        assert!(s.m2.iter().all(|&v| v == 0.0));
        assert!(s.m3.iter().all(|&v| v == 0.0));
        let (max_res, _) = pathwise_identity_residual(&log, &s, 1, psi.psi_int(1).unwrap(), 1.0);
        assert!(max_res < 1e-12, "n = 1 residual {max_res}");
        // n = 0 edge: identity 1 = 1
        let s0 = martingale_components(&log, 0, &psi, &dynamics).unwrap();
        let (max_res, _) = pathwise_identity_residual(&log, &s0, 0, 0.0, 1.0);
        assert!(max_res == 0.0);
    }

    #[test]
    fn sigma_only_identity_recomputes_from_log() {
        let psi = psi_of(LevyTriplet::with_atoms(1.0, 2.0, &[], 0.0));
        let cfg = SdeConfig::new(1e-3).unwrap();
        let dynamics = SdeDynamics::new(&psi, &cfg).unwrap();
        let mut rng = path_rng(17, 2, 3);
        let (_, log) = simulate_sde_path(1.0, &psi, &cfg, 1.0, &[1.0], &mut rng, prov()).unwrap();
        let s = martingale_components(&log, 1, &psi, &dynamics).unwrap();
        assert!(s.m2.iter().all(|&v| v == 0.0));
        assert!(s.m3.iter().all(|&v| v == 0.0));
        // Z_t - z - psi(1) t - m1 = 0 up to the Euler residual O(dt)
        let (max_res, _) = pathwise_identity_residual(&log, &s, 1, psi.psi_int(1).unwrap(), 1.0);
        assert!(max_res < 0.05, "residual {max_res}");
    }

    #[test]
    fn output_beyond_horizon_is_rejected() {
        let psi = psi_of(LevyTriplet::with_atoms(1.0, 0.0, &[], 0.0));
        let cfg = SdeConfig::new(0.01).unwrap();
        let mut rng = path_rng(1, 2, 0);
        assert!(simulate_sde_path(1.0, &psi, &cfg, 1.0, &[2.0], &mut rng, prov()).is_err());
    }
}
