//! Exact entire moments of the self-similar process.
//!
//! Under assumptions A1/A2 the integer moments are polynomials in (z, t):
//!
//! ```text
//! E_z(Z_t^n) = z^n + sum_{l=1}^{n} psi(n)*psi(n-1)*...*psi(n-l+1) / l! * z^(n-l) * t^l
//! ```
//!
//! equivalently characterized by the recursion
//! `E(Z_t^n) = z^n + psi(n) * int_0^t E(Z_s^(n-1)) ds`. The closed form and the
//! recursion are implemented on independent arithmetic paths (product ladder vs
//! exact polynomial integration) so each serves as an oracle for the other.

use std::io::Write;

use crate::error::{Error, Result};
use crate::levy::LaplaceExponent;

/// A single moment request: order `n >= 1` at time `t >= 0` from state `z >= 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentQuery {
    pub z: f64,
    pub t: f64,
    pub n: u32,
}

impl MomentQuery {
    pub fn new(z: f64, t: f64, n: u32) -> Result<Self> {
        if !(z >= 0.0) || !z.is_finite() {
            return Err(Error::InvalidConfig(format!("z must be >= 0, got {z}")));
        }
        if !(t >= 0.0) || !t.is_finite() {
            return Err(Error::InvalidConfig(format!("t must be >= 0, got {t}")));
        }
        if n == 0 {
            return Err(Error::InvalidConfig("moment order n must be >= 1".into()));
        }
        Ok(Self { z, t, n })
    }
}

/// The partial products `p_l = psi(n) * psi(n-1) * ... * psi(n-l+1)`, l = 1..n.
///
/// Under A2 convexity gives `psi(k) > 0` for all k >= 1, so every product is
/// strictly positive.
#[derive(Debug, Clone)]
pub struct PsiProductLadder {
    pub order: u32,
    pub products: Vec<f64>,
}

impl PsiProductLadder {
    pub fn new(psi: &LaplaceExponent, order: u32) -> Result<Self> {
        psi.require_a2()?;
        let mut products = Vec::with_capacity(order as usize);
        let mut p = 1.0;
        for l in 1..=order {
            p *= psi.psi_int(order - l + 1)?;
            if !p.is_finite() {
                return Err(Error::Overflow {
                    context: format!("psi product ladder at order {order}, step {l}"),
                });
            }
            products.push(p);
        }
        Ok(Self { order, products })
    }
}

/// Coefficients of the moment polynomial: `coeffs[l]` multiplies `z^(n-l) t^l`,
/// so `coeffs[0] = 1` and `coeffs[l] = p_l / l!` accumulated multiplicatively.
pub fn moment_polynomial(psi: &LaplaceExponent, n: u32) -> Result<Vec<f64>> {
    psi.require_a2()?;
    let mut coeffs = Vec::with_capacity(n as usize + 1);
    coeffs.push(1.0);
    let mut c = 1.0;
    for l in 1..=n {
        c = c * psi.psi_int(n - l + 1)? / l as f64;
        if !c.is_finite() {
            return Err(Error::Overflow {
                context: format!("moment polynomial coefficient l = {l} of order {n}"),
            });
        }
        coeffs.push(c);
    }
    Ok(coeffs)
}

/// Evaluates a moment polynomial at `(z, t)`; the closed-form moment is defined
/// as exactly this evaluation.
pub fn eval_moment_polynomial(coeffs: &[f64], z: f64, t: f64) -> f64 {
    let n = coeffs.len() - 1;
    let mut acc = 0.0;
    for (l, &c) in coeffs.iter().enumerate() {
        acc += c * z.powi((n - l) as i32) * t.powi(l as i32);
    }
    acc
}

/// Closed-form entire moment `E_z(Z_t^n)` via the product ladder.
pub fn entire_moment(psi: &LaplaceExponent, q: &MomentQuery) -> Result<f64> {
    let coeffs = moment_polynomial(psi, q.n)?;
    let v = eval_moment_polynomial(&coeffs, q.z, q.t);
    if !v.is_finite() {
        return Err(Error::Overflow {
            context: format!("entire moment n = {}, t = {}, z = {}", q.n, q.t, q.z),
        });
    }
    Ok(v)
}

/// The same moment by iterating the integral recursion with exact polynomial
/// integration in `s` (coefficient arithmetic, no numerical quadrature).
pub fn moment_recursion(psi: &LaplaceExponent, q: &MomentQuery) -> Result<f64> {
    psi.require_a2()?;
    // poly[j] is the s^j coefficient of E(Z_s^k), built up from k = 0
    let mut poly = vec![1.0f64];
    for k in 1..=q.n {
        let psik = psi.psi_int(k)?;
        let mut next = vec![0.0; poly.len() + 1];
        next[0] = q.z.powi(k as i32);
        for (j, &cj) in poly.iter().enumerate() {
            next[j + 1] = psik * cj / (j + 1) as f64;
        }
        poly = next;
    }
    let mut acc = 0.0;
    for &c in poly.iter().rev() {
        acc = acc * q.t + c;
    }
    if !acc.is_finite() {
        return Err(Error::Overflow {
            context: format!("moment recursion n = {}, t = {}, z = {}", q.n, q.t, q.z),
        });
    }
    Ok(acc)
}

/// Finite witness of moment determinacy: the quadratic bound constant
/// `K = max_{n <= n_max} psi(n)/n^2` and a radius `theta_star > 0` for which the
/// exponential series `sum theta^n E_z(Z_t^n)/n!` passes a ratio test.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct DeterminacyWitness {
    pub k_bound: f64,
    pub theta_star: f64,
}

/// Runs the determinacy diagnostic over orders `1..=n_max`. This is a bounded
/// numerical witness, not a proof: it reports failure when the successive-term
/// ratios are still growing at `n_max` or the moments overflow.
pub fn determinacy_check(
    psi: &LaplaceExponent,
    n_max: u32,
    t: f64,
    z: f64,
) -> Result<DeterminacyWitness> {
    psi.require_a2()?;
    if n_max < 2 {
        return Err(Error::InvalidConfig(
            "determinacy check needs n_max >= 2".into(),
        ));
    }
    let mut k_bound = f64::NEG_INFINITY;
    for n in 1..=n_max {
        let v = psi.psi_int(n)? / (n as f64 * n as f64);
        if !v.is_finite() {
            return Err(Error::Overflow {
                context: format!("psi({n})/{n}^2"),
            });
        }
        k_bound = k_bound.max(v);
    }

    let mut moments = Vec::with_capacity(n_max as usize + 1);
    moments.push(1.0); // E(Z^0) = 1
    for n in 1..=n_max {
        moments.push(entire_moment(psi, &MomentQuery { z, t, n })?);
    }
    // ratio of successive series terms at theta = 1: m_{n+1} / ((n+1) m_n)
    let mut ratios = Vec::with_capacity(n_max as usize);
    let mut all_zero = true;
    for n in 0..n_max as usize {
        let (m0, m1) = (moments[n], moments[n + 1]);
        if m0 == 0.0 && m1 == 0.0 {
            ratios.push(0.0);
            continue;
        }
        all_zero = false;
        let r = m1 / ((n as f64 + 1.0) * m0);
        if !r.is_finite() {
            return Err(Error::Overflow {
                context: format!("term ratio at n = {n}"),
            });
        }
        ratios.push(r);
    }
    if all_zero {
        // z = 0, t = 0: the series is identically 1
        return Ok(DeterminacyWitness {
            k_bound,
            theta_star: 1.0,
        });
    }
    let sup = ratios.iter().cloned().fold(0.0f64, f64::max);
    if ratios.len() >= 5 {
        let early = ratios[ratios.len() - 5];
        let late = ratios[ratios.len() - 1];
        if early > 0.0 && late > early * 1.25 {
            return Err(Error::RatioTestNotStabilized { n_max });
        }
    }
    let theta_star = if sup > 0.0 { 0.5 / sup } else { 1.0 };
    Ok(DeterminacyWitness {
        k_bound,
        theta_star,
    })
}

/// How a table cell was produced.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CellKind {
    Exact,
    /// Monte Carlo estimate; the standard error is undefined for single-path
    /// ensembles and reported as `None`.
    Estimated {
        se: Option<f64>,
        paths: u64,
    },
}

/// One `(n, t, z)` cell of a moment table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentCell {
    pub n: u32,
    pub t: f64,
    pub z: f64,
    pub value: f64,
    pub kind: CellKind,
}

/// Moments on the grid orders x times x states, exact or estimated.
///
/// Serializes to CSV with columns `n,t,z,value,kind,se,paths` and to a JSON
/// document mirroring the axes; rows run order-major, then time, then state.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentTable {
    pub orders: Vec<u32>,
    pub times: Vec<f64>,
    pub states: Vec<f64>,
    pub cells: Vec<MomentCell>,
}

impl MomentTable {
    /// Exact table from the closed form.
    pub fn exact(psi: &LaplaceExponent, n_max: u32, times: &[f64], states: &[f64]) -> Result<Self> {
        let orders: Vec<u32> = (1..=n_max).collect();
        let mut cells = Vec::with_capacity(orders.len() * times.len() * states.len());
        for &n in &orders {
            for &t in times {
                for &z in states {
                    let value = entire_moment(psi, &MomentQuery::new(z, t, n)?)?;
                    cells.push(MomentCell {
                        n,
                        t,
                        z,
                        value,
                        kind: CellKind::Exact,
                    });
                }
            }
        }
        Ok(Self {
            orders,
            times: times.to_vec(),
            states: states.to_vec(),
            cells,
        })
    }

    pub fn cell(&self, n: u32, t: f64, z: f64) -> Option<&MomentCell> {
        self.cells.iter().find(|c| c.n == n && c.t == t && c.z == z)
    }

    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "n,t,z,value,kind,se,paths")?;
        for c in &self.cells {
            match c.kind {
                CellKind::Exact => {
                    writeln!(w, "{},{},{},{},exact,,", c.n, c.t, c.z, c.value)?;
                }
                CellKind::Estimated { se, paths } => {
                    let se_s = se.map(|s| s.to_string()).unwrap_or_default();
                    writeln!(
                        w,
                        "{},{},{},{},estimated,{},{}",
                        c.n, c.t, c.z, c.value, se_s, paths
                    )?;
                }
            }
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    pub fn to_json_string(&self) -> String {
        #[derive(serde::Serialize)]
        struct CellRepr {
            n: u32,
            t: f64,
            z: f64,
            value: f64,
            kind: &'static str,
            se: Option<f64>,
            paths: Option<u64>,
        }
        #[derive(serde::Serialize)]
        struct TableRepr<'a> {
            orders: &'a [u32],
            times: &'a [f64],
            states: &'a [f64],
            cells: Vec<CellRepr>,
        }
        let cells = self
            .cells
            .iter()
            .map(|c| match c.kind {
                CellKind::Exact => CellRepr {
                    n: c.n,
                    t: c.t,
                    z: c.z,
                    value: c.value,
                    kind: "exact",
                    se: None,
                    paths: None,
                },
                CellKind::Estimated { se, paths } => CellRepr {
                    n: c.n,
                    t: c.t,
                    z: c.z,
                    value: c.value,
                    kind: "estimated",
                    se,
                    paths: Some(paths),
                },
            })
            .collect();
        serde_json::to_string_pretty(&TableRepr {
            orders: &self.orders,
            times: &self.times,
            states: &self.states,
            cells,
        })
        .expect("table serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy::LevyTriplet;

    fn drift_model(gamma: f64) -> LaplaceExponent {
        LaplaceExponent::new(LevyTriplet::with_atoms(gamma, 0.0, &[], 0.0)).unwrap()
    }

    /// gamma = 1, sigma2 = 2: psi(l) = l + l^2.
    fn brownian_model() -> LaplaceExponent {
        LaplaceExponent::new(LevyTriplet::with_atoms(1.0, 2.0, &[], 0.0)).unwrap()
    }

    #[test]
    fn first_moment_is_linear() {
        let psi = drift_model(3.0);
        let v = entire_moment(&psi, &MomentQuery::new(1.0, 2.0, 1).unwrap()).unwrap();
        assert_eq!(v, 7.0);
    }

    #[test]
    fn binomial_collapse_for_unit_drift() {
        // psi(l) = l makes the ladder coefficients binomial: E_z(Z_t^n) = (z+t)^n
        let psi = drift_model(1.0);
        let v = entire_moment(&psi, &MomentQuery::new(1.0, 1.0, 3).unwrap()).unwrap();
        assert!((v - 8.0).abs() < 1e-12);
        for n in 1..=12u32 {
            let q = MomentQuery::new(0.7, 1.3, n).unwrap();
            let v = entire_moment(&psi, &q).unwrap();
            let expect = (0.7f64 + 1.3).powi(n as i32);
            assert!(
                (v - expect).abs() <= 1e-12 * expect.abs(),
                "n={n}: {v} vs {expect}"
            );
        }
    }

    #[test]
    fn zero_state_keeps_only_leading_term() {
        let psi = brownian_model();
        let v = entire_moment(&psi, &MomentQuery::new(0.0, 1.0, 2).unwrap()).unwrap();
        assert!((v - 6.0).abs() < 1e-12, "got {v}");
    }

    #[test]
    fn time_zero_returns_z_power() {
        let psi = brownian_model();
        let v = entire_moment(&psi, &MomentQuery::new(3.0, 0.0, 4).unwrap()).unwrap();
        assert_eq!(v, 81.0);
        let r = moment_recursion(&psi, &MomentQuery::new(2.0, 0.0, 5).unwrap()).unwrap();
        assert_eq!(r, 32.0);
    }

    #[test]
    fn recursion_matches_closed_form() {
        let psi = drift_model(1.0);
        let q = MomentQuery::new(1.0, 1.0, 3).unwrap();
        assert!((moment_recursion(&psi, &q).unwrap() - 8.0).abs() < 1e-12);

        let psi = brownian_model();
        for n in 1..=8 {
            for &t in &[0.5, 1.0, 2.0] {
                for &z in &[0.0, 1.0, 3.0] {
                    let q = MomentQuery::new(z, t, n).unwrap();
                    let a = entire_moment(&psi, &q).unwrap();
                    let b = moment_recursion(&psi, &q).unwrap();
                    assert!(
                        (a - b).abs() <= 1e-10 * (1.0 + a.abs()),
                        "n={n} t={t} z={z}: {a} vs {b}"
                    );
                }
            }
        }
    }

    #[test]
    fn recursion_base_case() {
        let psi = drift_model(2.5);
        let q = MomentQuery::new(0.3, 0.8, 1).unwrap();
        let v = moment_recursion(&psi, &q).unwrap();
        assert!((v - (0.3 + 2.5 * 0.8)).abs() < 1e-14);
    }

    #[test]
    fn polynomial_examples() {
        // psi(l) = l, n = 2: coefficients {1, 2, 1}
        let psi = drift_model(1.0);
        let c = moment_polynomial(&psi, 2).unwrap();
        assert_eq!(c, vec![1.0, 2.0, 1.0]);
        // psi(l) = l + l^2, n = 1: {1, 2}
        let psi = brownian_model();
        let c = moment_polynomial(&psi, 1).unwrap();
        assert_eq!(c, vec![1.0, 2.0]);
        // n = 0: constant 1
        let c = moment_polynomial(&psi, 0).unwrap();
        assert_eq!(c, vec![1.0]);
    }

    #[test]
    fn closed_form_is_the_polynomial_evaluation() {
        let psi = brownian_model();
        for n in 1..=6u32 {
            let coeffs = moment_polynomial(&psi, n).unwrap();
            let q = MomentQuery::new(1.7, 0.9, n).unwrap();
            let a = entire_moment(&psi, &q).unwrap();
            let b = eval_moment_polynomial(&coeffs, 1.7, 0.9);
            assert_eq!(a.to_bits(), b.to_bits(), "bit-identical evaluation");
        }
    }

    #[test]
    fn ladder_is_positive_under_a2() {
        let psi = brownian_model();
        let ladder = PsiProductLadder::new(&psi, 6).unwrap();
        assert_eq!(ladder.products.len(), 6);
        assert!(ladder.products.iter().all(|&p| p > 0.0));
        assert_eq!(ladder.products[0], psi.psi_int(6).unwrap());
    }

    #[test]
    fn a2_violation_is_rejected() {
        let psi = LaplaceExponent::new(LevyTriplet::with_atoms(-1.0, 0.0, &[], 0.0)).unwrap();
        let q = MomentQuery::new(1.0, 1.0, 2).unwrap();
        assert!(matches!(
            entire_moment(&psi, &q),
            Err(Error::A2Fails { .. })
        ));
    }

    #[test]
    fn determinacy_examples() {
        // psi(l) = l: K = max n/n^2 = 1 at n = 1
        let psi = drift_model(1.0);
        let w = determinacy_check(&psi, 20, 1.0, 1.0).unwrap();
        assert!((w.k_bound - 1.0).abs() < 1e-14);
        assert!(w.theta_star > 0.0);
        // psi(l) = l^2: K = 1 for all n
        let psi = LaplaceExponent::new(LevyTriplet::with_atoms(0.0, 2.0, &[], 0.0)).unwrap();
        let w = determinacy_check(&psi, 20, 1.0, 1.0).unwrap();
        assert!((w.k_bound - 1.0).abs() < 1e-14);
        // psi(l) = l + l^2 at z = 0: moments are (n+1)! t^n, ratios tend to t
        let psi = brownian_model();
        let w = determinacy_check(&psi, 30, 1.0, 0.0).unwrap();
        assert!(w.theta_star > 0.0 && w.theta_star < 1.0);
        // term ratios are (n+2)/(n+1), peaking at n = 0 with 2: theta* = 1/4
        assert!((w.theta_star - 0.25).abs() < 1e-12, "{}", w.theta_star);
    }

    #[test]
    fn extreme_orders_report_overflow() {
        let psi = brownian_model();
        let q = MomentQuery::new(1.0, 1e3, 200).unwrap();
        assert!(matches!(
            entire_moment(&psi, &q),
            Err(Error::Overflow { .. })
        ));
        assert!(matches!(
            moment_recursion(&psi, &q),
            Err(Error::Overflow { .. })
        ));
    }

    #[test]
    fn determinacy_degenerate_origin() {
        let psi = brownian_model();
        let w = determinacy_check(&psi, 10, 0.0, 0.0).unwrap();
        assert_eq!(w.theta_star, 1.0);
    }

    #[test]
    fn table_formats() {
        let psi = drift_model(1.0);
        let table = MomentTable::exact(&psi, 2, &[0.0, 1.0], &[1.0]).unwrap();
        let csv = table.to_csv_string();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "n,t,z,value,kind,se,paths");
        assert_eq!(lines.next().unwrap(), "1,0,1,1,exact,,");
        assert_eq!(lines.next().unwrap(), "1,1,1,2,exact,,");
        assert_eq!(lines.next().unwrap(), "2,0,1,1,exact,,");
        assert_eq!(lines.next().unwrap(), "2,1,1,4,exact,,");
        let json: serde_json::Value = serde_json::from_str(&table.to_json_string()).unwrap();
        assert_eq!(json["orders"], serde_json::json!([1, 2]));
        assert_eq!(json["cells"][3]["value"], serde_json::json!(4.0));
    }
}
