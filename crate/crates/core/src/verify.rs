//! Monte Carlo verification: ensemble moment estimation, statistical comparison
//! against the closed-form moments, cross-validation of the two simulators and
//! the martingale/scaling test batteries.
//!
//! Every ensemble derives one random stream per (seed, scheme domain, path
//! index) and reduces per-path results in path order, so results are identical
//! for any worker count. Aborted paths (state-cap hits, exhausted horizons) are
//! never silently dropped: a fraction above 1% invalidates the ensemble.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lamperti::{lamperti_run, LevyPathConfig, PathOutcome};
use crate::levy::LaplaceExponent;
use crate::model_file::model_to_json;
use crate::moments::{
    entire_moment, moment_recursion, CellKind, MomentCell, MomentQuery, MomentTable,
};
use crate::rng::{path_rng, DOMAIN_LAMPERTI, DOMAIN_MARTINGALE, DOMAIN_SDE};
use crate::sde::{
    martingale_components, pathwise_identity_residual, run_sde, SdeConfig, SdeDynamics,
};

/// Tolerance of the internal ground-truth self-check (closed form vs recursion).
const GROUND_TRUTH_RTOL: f64 = 1e-10;
/// Ensembles with a larger aborted-path fraction are invalid.
const MAX_ABORT_FRACTION: f64 = 0.01;
/// Agreement tolerance for zero-standard-error (deterministic) cells: the
/// simulators' documented interpolation error bound at small dt.
const DETERMINISTIC_AGREEMENT_RTOL: f64 = 1e-6;

/// Simulation scheme plus its grid configuration.
#[derive(Debug, Clone, Copy)]
pub enum Scheme {
    Lamperti(LevyPathConfig),
    Sde(SdeConfig),
}

impl Scheme {
    pub fn id(&self) -> &'static str {
        match self {
            Scheme::Lamperti(_) => crate::lamperti::LAMPERTI_SCHEME_ID,
            Scheme::Sde(_) => crate::sde::SDE_SCHEME_ID,
        }
    }

    pub fn dt(&self) -> f64 {
        match self {
            Scheme::Lamperti(c) => c.dt,
            Scheme::Sde(c) => c.dt,
        }
    }

    fn domain(&self) -> u64 {
        match self {
            Scheme::Lamperti(_) => DOMAIN_LAMPERTI,
            Scheme::Sde(_) => DOMAIN_SDE,
        }
    }
}

/// A Monte Carlo sample-mean estimate.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct McEstimate {
    pub value: f64,
    /// Sample standard deviation over sqrt(paths); undefined for one path.
    pub standard_error: Option<f64>,
    pub n_paths: u64,
}

/// Ensemble metadata making every report re-derivable from the seed.
#[derive(Debug, Clone, serde::Serialize)]
pub struct EnsembleMeta {
    pub scheme: String,
    pub dt: f64,
    pub n_paths: u64,
    pub seed: u64,
    pub aborted: u64,
    pub aborted_fraction: f64,
    /// Fraction of SDE paths with at least one diffusion clamp at zero.
    pub clamped_fraction: f64,
    pub model: String,
}

/// Estimated moments plus the metadata of the ensemble that produced them.
#[derive(Debug, Clone)]
pub struct EstimatedMoments {
    pub table: MomentTable,
    pub meta: EnsembleMeta,
}

enum PathRes {
    Values(Vec<f64>),
    ValuesClamped(Vec<f64>),
    Aborted,
}

fn is_path_abort(e: &Error) -> bool {
    matches!(
        e,
        Error::StateCapExceeded { .. }
            | Error::SubstepBudgetExceeded { .. }
            | Error::ExpOverflow
            | Error::Overflow { .. }
    )
}

/// Runs `n_paths` independent paths of the chosen scheme and returns sample
/// means and standard errors of `Z_t^n` for `n = 1..=n_max` at every requested
/// time. Deterministic given the master seed, independent of the worker count.
pub fn estimate_moments(
    psi: &LaplaceExponent,
    scheme: Scheme,
    z: f64,
    times: &[f64],
    n_max: u32,
    n_paths: u64,
    master_seed: u64,
) -> Result<EstimatedMoments> {
    if n_paths == 0 {
        return Err(Error::InvalidConfig("n_paths must be >= 1".into()));
    }
    if n_max == 0 {
        return Err(Error::InvalidConfig("n_max must be >= 1".into()));
    }
    psi.require_a2()?;
    crate::lamperti::validate_output_times(times)?;
    let triplet = psi.triplet();
    let domain = scheme.domain();

    let results: Vec<PathRes> = match scheme {
        Scheme::Lamperti(cfg) => {
            if !(z > 0.0) {
                return Err(Error::ZeroStartLamperti);
            }
            let quad_tol = psi.quad_tol();
            (0..n_paths)
                .into_par_iter()
                .map(|i| {
                    let mut rng = path_rng(master_seed, domain, i);
                    match lamperti_run(z, triplet, &cfg, quad_tol, times, &mut rng) {
                        Ok(PathOutcome::Values(v)) => Ok(PathRes::Values(v)),
                        Ok(PathOutcome::HorizonExhausted) => Ok(PathRes::Aborted),
                        Err(e) if is_path_abort(&e) => Ok(PathRes::Aborted),
                        Err(e) => Err(e),
                    }
                })
                .collect::<Result<Vec<_>>>()?
        }
        Scheme::Sde(cfg) => {
            if !(z >= 0.0) {
                return Err(Error::InvalidConfig(format!("z must be >= 0, got {z}")));
            }
            let dynamics = SdeDynamics::new(psi, &cfg)?;
            let horizon = *times.last().expect("validated nonempty");
            let horizon = if horizon > 0.0 { horizon } else { cfg.dt };
            (0..n_paths)
                .into_par_iter()
                .map(|i| {
                    let mut rng = path_rng(master_seed, domain, i);
                    match run_sde(z, &dynamics, &cfg, horizon, times, &mut rng, false) {
                        Ok(run) if run.clamp_count > 0 => Ok(PathRes::ValuesClamped(run.values)),
                        Ok(run) => Ok(PathRes::Values(run.values)),
                        Err(e) if is_path_abort(&e) => Ok(PathRes::Aborted),
                        Err(e) => Err(e),
                    }
                })
                .collect::<Result<Vec<_>>>()?
        }
    };

    let aborted = results
        .iter()
        .filter(|r| matches!(r, PathRes::Aborted))
        .count() as u64;
    let clamped = results
        .iter()
        .filter(|r| matches!(r, PathRes::ValuesClamped(_)))
        .count() as u64;
    let aborted_fraction = aborted as f64 / n_paths as f64;
    if aborted_fraction > MAX_ABORT_FRACTION {
        return Err(Error::EnsembleInvalid {
            fraction: aborted_fraction,
            aborted,
            total: n_paths,
        });
    }
    let kept = n_paths - aborted;

    let orders: Vec<u32> = (1..=n_max).collect();
    let mut cells = Vec::with_capacity(orders.len() * times.len());
    for &n in &orders {
        for (j, &t) in times.iter().enumerate() {
            // Welford in path order: bit-identical for any worker count
            let mut mean = 0.0f64;
            let mut m2 = 0.0f64;
            let mut count = 0u64;
            for r in &results {
                let v = match r {
                    PathRes::Values(v) | PathRes::ValuesClamped(v) => v,
                    PathRes::Aborted => continue,
                };
                let x = v[j].powi(n as i32);
                count += 1;
                let delta = x - mean;
                mean += delta / count as f64;
                m2 += delta * (x - mean);
            }
            debug_assert_eq!(count, kept);
            let se = if count > 1 {
                Some((m2 / (count as f64 - 1.0)).sqrt() / (count as f64).sqrt())
            } else {
                None
            };
            if !mean.is_finite() {
                return Err(Error::Overflow {
                    context: format!("ensemble mean of Z^{n} at t = {t}"),
                });
            }
            cells.push(MomentCell {
                n,
                t,
                z,
                value: mean,
                kind: CellKind::Estimated { se, paths: count },
            });
        }
    }
    Ok(EstimatedMoments {
        table: MomentTable {
            orders,
            times: times.to_vec(),
            states: vec![z],
            cells,
        },
        meta: EnsembleMeta {
            scheme: scheme.id().to_string(),
            dt: scheme.dt(),
            n_paths,
            seed: master_seed,
            aborted,
            aborted_fraction,
            clamped_fraction: clamped as f64 / n_paths as f64,
            model: model_to_json(triplet),
        },
    })
}

/// Verdict of one comparison cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    /// Zero standard error with a mismatch: a deterministic contradiction.
    HardFail,
    /// Standard error undefined (single path); no verdict possible.
    Suppressed,
}

/// One `(n, t, z)` cell of a comparison report.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct ComparisonCell {
    pub n: u32,
    pub t: f64,
    pub z: f64,
    pub exact: f64,
    pub estimate: f64,
    pub se: Option<f64>,
    pub z_score: Option<f64>,
    pub verdict: Verdict,
}

/// Estimates against ground truth with per-cell z-scores.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ComparisonReport {
    pub threshold: f64,
    pub cells: Vec<ComparisonCell>,
    pub meta: EnsembleMeta,
}

impl ComparisonReport {
    pub fn all_pass(&self) -> bool {
        self.cells
            .iter()
            .all(|c| matches!(c.verdict, Verdict::Pass | Verdict::Suppressed))
    }

    /// CI contract: 0 all pass, 1 any fail. Invalid ensembles never produce a
    /// report; they surface as errors (exit 2).
    pub fn exit_code(&self) -> i32 {
        if self.all_pass() {
            0
        } else {
            1
        }
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_table_string(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:>3} {:>8} {:>8} {:>14} {:>14} {:>12} {:>8}  verdict\n",
            "n", "t", "z", "exact", "estimate", "se", "zscore"
        ));
        for c in &self.cells {
            let se = c.se.map_or("-".to_string(), |v| format!("{v:.4e}"));
            let zs = c.z_score.map_or("-".to_string(), |v| format!("{v:.3}"));
            out.push_str(&format!(
                "{:>3} {:>8} {:>8} {:>14.8} {:>14.8} {:>12} {:>8}  {:?}\n",
                c.n, c.t, c.z, c.exact, c.estimate, se, zs, c.verdict
            ));
        }
        out
    }
}

/// Fills the exact column from the closed form (self-checked against the
/// recursion), computes z-scores and verdicts at threshold `k`.
pub fn compare_to_formula(
    est: &EstimatedMoments,
    psi: &LaplaceExponent,
    k: f64,
) -> Result<ComparisonReport> {
    if !(k > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "verdict threshold must be > 0, got {k}"
        )));
    }
    let mut cells = Vec::with_capacity(est.table.cells.len());
    for cell in &est.table.cells {
        let (se, paths) = match cell.kind {
            CellKind::Estimated { se, paths } => (se, paths),
            CellKind::Exact => {
                return Err(Error::InvalidConfig(
                    "compare_to_formula expects estimated cells".into(),
                ))
            }
        };
        let query = MomentQuery::new(cell.z, cell.t, cell.n)?;
        let exact = entire_moment(psi, &query)?;
        let rec = moment_recursion(psi, &query)?;
        if (exact - rec).abs() > GROUND_TRUTH_RTOL * (1.0 + exact.abs()) {
            return Err(Error::GroundTruthInconsistent {
                n: cell.n,
                t: cell.t,
                z: cell.z,
                closed: exact,
                recursion: rec,
            });
        }
        let (z_score, verdict) = match se {
            None => (None, Verdict::Suppressed),
            Some(se_v) if se_v > 0.0 => {
                let zs = (cell.value - exact) / se_v;
                (
                    Some(zs),
                    if zs.abs() <= k {
                        Verdict::Pass
                    } else {
                        Verdict::Fail
                    },
                )
            }
            Some(_) => {
                // SE = 0: deterministic ensemble; demand agreement up to the
                // scheme's interpolation error
                if (cell.value - exact).abs() <= DETERMINISTIC_AGREEMENT_RTOL * (1.0 + exact.abs())
                {
                    (Some(0.0), Verdict::Pass)
                } else {
                    (None, Verdict::HardFail)
                }
            }
        };
        let _ = paths;
        cells.push(ComparisonCell {
            n: cell.n,
            t: cell.t,
            z: cell.z,
            exact,
            estimate: cell.value,
            se,
            z_score,
            verdict,
        });
    }
    Ok(ComparisonReport {
        threshold: k,
        cells,
        meta: est.meta.clone(),
    })
}

/// Exact algebraic check of the scaling identity on the closed form: the
/// maximum over `n <= n_max` of the normalized residual between
/// `c^{-n} E_z(Z_{ct}^n)` and `E_{z/c}(Z_t^n)`.
pub fn scaling_check(psi: &LaplaceExponent, z: f64, t: f64, c: f64, n_max: u32) -> Result<f64> {
    if !(c > 0.0) {
        return Err(Error::InvalidConfig(format!("c must be > 0, got {c}")));
    }
    psi.require_a2()?;
    let mut worst = 0.0f64;
    for n in 1..=n_max {
        let lhs = c.powi(-(n as i32)) * entire_moment(psi, &MomentQuery::new(z, c * t, n)?)?;
        let rhs = entire_moment(psi, &MomentQuery::new(z / c, t, n)?)?;
        let res = (lhs - rhs).abs() / (1.0 + rhs.abs());
        worst = worst.max(res);
    }
    Ok(worst)
}

/// Statistics of one martingale component at the horizon.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct ComponentStat {
    pub estimate: McEstimate,
    /// mean / SE, or 0 for exactly-degenerate components (constant 0).
    pub z_score: f64,
    pub degenerate: bool,
}

/// Ensemble test of the zero-mean property of the three martingale components,
/// plus the pathwise moment-identity residual diagnostics.
#[derive(Debug, Clone, serde::Serialize)]
pub struct MartingaleReport {
    pub n: u32,
    pub horizon: f64,
    pub components: [ComponentStat; 3],
    /// Signed ensemble mean of the final identity residual (order dt).
    pub residual_mean: f64,
    pub residual_se: Option<f64>,
    /// Ensemble mean of the pathwise maximum absolute residual.
    pub max_residual_mean: f64,
    pub meta: EnsembleMeta,
}

impl MartingaleReport {
    pub fn all_pass(&self, k: f64) -> bool {
        self.components.iter().all(|c| c.z_score.abs() <= k)
    }
}

/// Simulates the SDE and tests that each martingale component has ensemble
/// mean within sampling error of zero at the horizon.
pub fn martingale_zero_mean_test(
    psi: &LaplaceExponent,
    z: f64,
    n: u32,
    horizon: f64,
    n_paths: u64,
    cfg: &SdeConfig,
    master_seed: u64,
) -> Result<MartingaleReport> {
    psi.require_a2()?;
    if n_paths == 0 {
        return Err(Error::InvalidConfig("n_paths must be >= 1".into()));
    }
    if !(horizon > 0.0) {
        return Err(Error::InvalidConfig("horizon must be > 0".into()));
    }
    let dynamics = SdeDynamics::new(psi, cfg)?;
    let psi_n = psi.psi_int(n)?;
    let outputs = [horizon];

    struct PathStat {
        m: [f64; 3],
        final_residual: f64,
        max_residual: f64,
    }

    let results: Vec<Option<PathStat>> = (0..n_paths)
        .into_par_iter()
        .map(|i| -> Result<Option<PathStat>> {
            let mut rng = path_rng(master_seed, DOMAIN_MARTINGALE, i);
            let run = match run_sde(z, &dynamics, cfg, horizon, &outputs, &mut rng, true) {
                Ok(run) => run,
                Err(e) if is_path_abort(&e) => return Ok(None),
                Err(e) => return Err(e),
            };
            let log = run.log.expect("log recorded");
            let series = martingale_components(&log, n, psi, &dynamics)?;
            let m = [
                series.m1.last().copied().unwrap_or(0.0),
                series.m2.last().copied().unwrap_or(0.0),
                series.m3.last().copied().unwrap_or(0.0),
            ];
            let (max_residual, final_residual) =
                pathwise_identity_residual(&log, &series, n, psi_n, z);
            Ok(Some(PathStat {
                m,
                final_residual,
                max_residual,
            }))
        })
        .collect::<Result<Vec<_>>>()?;

    let aborted = results.iter().filter(|r| r.is_none()).count() as u64;
    let aborted_fraction = aborted as f64 / n_paths as f64;
    if aborted_fraction > MAX_ABORT_FRACTION {
        return Err(Error::EnsembleInvalid {
            fraction: aborted_fraction,
            aborted,
            total: n_paths,
        });
    }

    let welford = |extract: &dyn Fn(&PathStat) -> f64| -> (f64, Option<f64>, u64) {
        let mut mean = 0.0f64;
        let mut m2 = 0.0f64;
        let mut count = 0u64;
        for r in results.iter().flatten() {
            let x = extract(r);
            count += 1;
            let delta = x - mean;
            mean += delta / count as f64;
            m2 += delta * (x - mean);
        }
        let se = if count > 1 {
            Some((m2 / (count as f64 - 1.0)).sqrt() / (count as f64).sqrt())
        } else {
            None
        };
        (mean, se, count)
    };

    let mut components = Vec::with_capacity(3);
    for idx in 0..3 {
        let (mean, se, count) = welford(&|p: &PathStat| p.m[idx]);
        let (z_score, degenerate) = match se {
            Some(s) if s > 0.0 => (mean / s, false),
            _ => (if mean == 0.0 { 0.0 } else { f64::INFINITY }, true),
        };
        components.push(ComponentStat {
            estimate: McEstimate {
                value: mean,
                standard_error: se,
                n_paths: count,
            },
            z_score,
            degenerate,
        });
    }
    let (residual_mean, residual_se, _) = welford(&|p: &PathStat| p.final_residual);
    let (max_residual_mean, _, _) = welford(&|p: &PathStat| p.max_residual);

    Ok(MartingaleReport {
        n,
        horizon,
        components: [components[0], components[1], components[2]],
        residual_mean,
        residual_se,
        max_residual_mean,
        meta: EnsembleMeta {
            scheme: crate::sde::SDE_SCHEME_ID.to_string(),
            dt: cfg.dt,
            n_paths,
            seed: master_seed,
            aborted,
            aborted_fraction,
            clamped_fraction: 0.0,
            model: model_to_json(psi.triplet()),
        },
    })
}

/// One `(n, t)` cell of a two-sample comparison.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct CrossCell {
    pub n: u32,
    pub t: f64,
    pub mean_a: f64,
    pub se_a: Option<f64>,
    pub mean_b: f64,
    pub se_b: Option<f64>,
    /// Welch two-sample statistic (unequal variances).
    pub statistic: Option<f64>,
    pub verdict: Verdict,
}

/// Two-ensemble cross-validation report between the simulators.
#[derive(Debug, Clone, serde::Serialize)]
pub struct CrossReport {
    pub threshold: f64,
    pub cells: Vec<CrossCell>,
    pub meta_a: EnsembleMeta,
    pub meta_b: EnsembleMeta,
}

impl CrossReport {
    pub fn all_pass(&self) -> bool {
        self.cells
            .iter()
            .all(|c| matches!(c.verdict, Verdict::Pass | Verdict::Suppressed))
    }

    pub fn exit_code(&self) -> i32 {
        if self.all_pass() {
            0
        } else {
            1
        }
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_table_string(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:>3} {:>8} {:>14} {:>14} {:>9}  verdict\n",
            "n", "t", "lamperti", "sde", "welch"
        ));
        for c in &self.cells {
            let st = c.statistic.map_or("-".to_string(), |v| format!("{v:.3}"));
            out.push_str(&format!(
                "{:>3} {:>8} {:>14.8} {:>14.8} {:>9}  {:?}\n",
                c.n, c.t, c.mean_a, c.mean_b, st, c.verdict
            ));
        }
        out
    }
}

/// Estimates the same moments with both simulators and compares them with the
/// Welch two-sample statistic per (n, t). Both target the same law, so the
/// statistics stay small when both schemes are sound.
#[allow(clippy::too_many_arguments)]
pub fn cross_validate(
    psi: &LaplaceExponent,
    z: f64,
    times: &[f64],
    n_max: u32,
    n_paths: u64,
    lamperti_cfg: LevyPathConfig,
    sde_cfg: SdeConfig,
    master_seed: u64,
    k: f64,
) -> Result<CrossReport> {
    if !(z > 0.0) {
        return Err(Error::ZeroStartLamperti);
    }
    let a = estimate_moments(
        psi,
        Scheme::Lamperti(lamperti_cfg),
        z,
        times,
        n_max,
        n_paths,
        master_seed,
    )?;
    let b = estimate_moments(
        psi,
        Scheme::Sde(sde_cfg),
        z,
        times,
        n_max,
        n_paths,
        master_seed,
    )?;
    let mut cells = Vec::with_capacity(a.table.cells.len());
    for (ca, cb) in a.table.cells.iter().zip(&b.table.cells) {
        debug_assert_eq!((ca.n, ca.t), (cb.n, cb.t));
        let (se_a, se_b) = match (ca.kind, cb.kind) {
            (CellKind::Estimated { se: sa, .. }, CellKind::Estimated { se: sb, .. }) => (sa, sb),
            _ => (None, None),
        };
        let (statistic, verdict) = match (se_a, se_b) {
            (Some(sa), Some(sb)) => {
                let denom = (sa * sa + sb * sb).sqrt();
                if denom > 0.0 {
                    let st = (ca.value - cb.value) / denom;
                    (
                        Some(st),
                        if st.abs() <= k {
                            Verdict::Pass
                        } else {
                            Verdict::Fail
                        },
                    )
                } else if (ca.value - cb.value).abs()
                    <= DETERMINISTIC_AGREEMENT_RTOL * (1.0 + ca.value.abs())
                {
                    (Some(0.0), Verdict::Pass)
                } else {
                    (None, Verdict::HardFail)
                }
            }
            _ => (None, Verdict::Suppressed),
        };
        cells.push(CrossCell {
            n: ca.n,
            t: ca.t,
            mean_a: ca.value,
            se_a,
            mean_b: cb.value,
            se_b,
            statistic,
            verdict,
        });
    }
    Ok(CrossReport {
        threshold: k,
        cells,
        meta_a: a.meta,
        meta_b: b.meta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy::LevyTriplet;

    fn deterministic_model() -> LaplaceExponent {
        LaplaceExponent::new(LevyTriplet::with_atoms(1.0, 0.0, &[], 0.0)).unwrap()
    }

    #[test]
    fn deterministic_estimate_has_zero_se() {
        let psi = deterministic_model();
        let cfg = SdeConfig::new(1e-3).unwrap();
        let est = estimate_moments(&psi, Scheme::Sde(cfg), 1.0, &[2.0], 1, 64, 99).unwrap();
        let cell = &est.table.cells[0];
        assert!((cell.value - 3.0).abs() < 1e-9);
        match cell.kind {
            CellKind::Estimated { se, paths } => {
                assert_eq!(paths, 64);
                assert!(se.unwrap() < 1e-12);
            }
            _ => panic!("estimated cell expected"),
        }
    }

    #[test]
    fn single_path_suppresses_verdicts() {
        let psi = deterministic_model();
        let cfg = SdeConfig::new(1e-2).unwrap();
        let est = estimate_moments(&psi, Scheme::Sde(cfg), 1.0, &[1.0], 1, 1, 3).unwrap();
        match est.table.cells[0].kind {
            CellKind::Estimated { se, paths } => {
                assert_eq!(paths, 1);
                assert!(se.is_none());
            }
            _ => panic!(),
        }
        let report = compare_to_formula(&est, &psi, 4.0).unwrap();
        assert_eq!(report.cells[0].verdict, Verdict::Suppressed);
        assert!(report.all_pass());
    }

    #[test]
    fn zscore_arithmetic() {
        let psi = deterministic_model();
        // synthetic estimated table around the exact value 7 at (z=1, t=2, n=1)
        let mk = |value: f64, se: f64| EstimatedMoments {
            table: MomentTable {
                orders: vec![1],
                times: vec![2.0],
                states: vec![1.0],
                cells: vec![MomentCell {
                    n: 1,
                    t: 2.0,
                    z: 1.0,
                    value,
                    kind: CellKind::Estimated {
                        se: Some(se),
                        paths: 100,
                    },
                }],
            },
            meta: EnsembleMeta {
                scheme: "synthetic".into(),
                dt: 0.1,
                n_paths: 100,
                seed: 0,
                aborted: 0,
                aborted_fraction: 0.0,
                clamped_fraction: 0.0,
                model: String::new(),
            },
        };
        // exact = z + psi(1) t = 3 for the unit-drift model at t = 2
        let r = compare_to_formula(&mk(3.0, 0.1), &psi, 4.0).unwrap();
        assert_eq!(r.cells[0].z_score, Some(0.0));
        assert_eq!(r.cells[0].verdict, Verdict::Pass);
        let r = compare_to_formula(&mk(3.5, 0.1), &psi, 4.0).unwrap();
        let zs = r.cells[0].z_score.unwrap();
        assert!((zs - 5.0).abs() < 1e-9, "z-score {zs}");
        assert_eq!(r.cells[0].verdict, Verdict::Fail);
        assert_eq!(r.exit_code(), 1);
        // SE 0 with exact agreement passes; with mismatch it hard-fails
        let r = compare_to_formula(&mk(3.0, 0.0), &psi, 4.0).unwrap();
        assert_eq!(r.cells[0].verdict, Verdict::Pass);
        let r = compare_to_formula(&mk(3.1, 0.0), &psi, 4.0).unwrap();
        assert_eq!(r.cells[0].verdict, Verdict::HardFail);
    }

    #[test]
    fn scaling_residuals() {
        let psi = deterministic_model();
        assert_eq!(scaling_check(&psi, 1.0, 1.0, 1.0, 5).unwrap(), 0.0);
        let r = scaling_check(&psi, 1.0, 1.0, 2.0, 3).unwrap();
        assert!(r <= 1e-12, "residual {r}");
        // z = 0: only the leading terms survive and cancel exactly
        let r = scaling_check(&psi, 0.0, 1.0, 7.0, 6).unwrap();
        assert!(r <= 1e-12, "residual {r}");
    }

    #[test]
    fn martingale_components_vanish_for_special_models() {
        // sigma = 0: M1 degenerate at 0
        let psi =
            LaplaceExponent::new(LevyTriplet::with_atoms(1.0, 0.0, &[(-0.5, 0.5)], 0.0)).unwrap();
        let cfg = SdeConfig::new(1e-2).unwrap();
        let report = martingale_zero_mean_test(&psi, 1.0, 2, 1.0, 200, &cfg, 5).unwrap();
        assert!(report.components[0].degenerate);
        assert_eq!(report.components[0].z_score, 0.0);
        // Pi empty: M2 degenerate at 0
        let psi = LaplaceExponent::new(LevyTriplet::with_atoms(1.0, 1.0, &[], 0.0)).unwrap();
        let report = martingale_zero_mean_test(&psi, 1.0, 2, 1.0, 200, &cfg, 5).unwrap();
        assert!(report.components[1].degenerate);
        assert!(report.components[2].degenerate);
    }

    #[test]
    fn cross_validation_identical_deterministic_model() {
        let psi = deterministic_model();
        // pure-drift paths are deterministic, so SE = 0 and agreement must hold
        // to the interpolation tolerance: the Lamperti error is O(dt)
        let lam = LevyPathConfig::new(1e-6, 1.0).unwrap();
        let sde = SdeConfig::new(1e-3).unwrap();
        let report = cross_validate(&psi, 1.0, &[0.5, 1.0], 1, 32, lam, sde, 7, 4.0).unwrap();
        for c in &report.cells {
            assert!(
                matches!(c.verdict, Verdict::Pass | Verdict::Suppressed),
                "cell {c:?}"
            );
            assert_eq!(c.statistic, Some(0.0));
        }
    }

    #[test]
    fn same_seed_same_estimates() {
        let psi = LaplaceExponent::new(LevyTriplet::with_atoms(1.0, 2.0, &[], 0.0)).unwrap();
        let cfg = SdeConfig::new(1e-2).unwrap();
        let a = estimate_moments(&psi, Scheme::Sde(cfg), 1.0, &[1.0], 2, 500, 42).unwrap();
        let b = estimate_moments(&psi, Scheme::Sde(cfg), 1.0, &[1.0], 2, 500, 42).unwrap();
        for (ca, cb) in a.table.cells.iter().zip(&b.table.cells) {
            assert_eq!(ca.value.to_bits(), cb.value.to_bits());
        }
    }
}
