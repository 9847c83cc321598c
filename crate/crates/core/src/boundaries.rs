//! Free boundaries in transformed coordinates and the extended-real map
//! `c ↦ (γ̂(c), β̂(c))`.
//!
//! Two-boundary rows solve the double-tangent system `F1 = F2 = 0` by a nested
//! bisection (tangent at `y2`, slope match on the convex piece, bisect on the
//! gap) followed by a Newton polish in `t = ln y`. Single-boundary rows solve
//! `F3 = 0` by bisection.

use std::f64::consts::E;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::Model;
use crate::roots::bisect;
use crate::transform::{intercept_factor, slope_factor, KINK_Y};

const TWO_OVER_E: f64 = 2.0 / E;
/// Smallest `ln y1` the two-boundary solver reports.
pub const LOG_Y1_FLOOR: f64 = -600.0;
/// Bracket end for the inner slope-match solve in `t = ln z`.
const INNER_T_MIN: f64 = -700.0;
pub const BISECTION_WIDTH: f64 = 1e-12;
pub const RESIDUAL_TOL: f64 = 1e-10;
pub const MAX_NEWTON_ITERS: usize = 50;
/// Distance to `ĉ` under which pair queries return the `c ↑ ĉ` limit.
pub const SNAP_MARGIN: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Regime {
    SingleUpper,
    TwoSided,
    ConstantLower,
}

impl Regime {
    pub fn as_str(self) -> &'static str {
        match self {
            Regime::SingleUpper => "SingleUpper",
            Regime::TwoSided => "TwoSided",
            Regime::ConstantLower => "ConstantLower",
        }
    }
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

pub fn regime_of(model: &Model, c: f64) -> Regime {
    if c <= model.c_o() {
        Regime::SingleUpper
    } else if c < model.c_hat() {
        Regime::TwoSided
    } else {
        Regime::ConstantLower
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct YPair {
    pub c: f64,
    pub y1: Option<f64>,
    pub y2: f64,
    pub residual_norm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryDerivatives {
    pub dy1_dc: Option<f64>,
    pub dy2_dc: f64,
}

fn dg_dt(t: f64) -> f64 {
    -0.25 * t * (-0.5 * t).exp()
}

fn df_dt(t: f64) -> f64 {
    -0.25 * t * (0.5 * t).exp()
}

/// `R(c)` and `ε(c) = R(ĉ) - R(c)` on the two-boundary side.
fn weights(model: &Model, c: f64) -> (f64, f64) {
    (model.r(c), model.r_gap(c))
}

fn f1_f2_log(r: f64, eps: f64, t1: f64, t2: f64) -> [f64; 2] {
    [
        r * slope_factor(t1) + eps * slope_factor(t2),
        r * (intercept_factor(t1) - TWO_OVER_E) + eps * (intercept_factor(t2) - TWO_OVER_E),
    ]
}

/// `φ(u)/u` with `φ(u) = (2 + u/2)e^{-u/2} - 2`, so that
/// `intercept_factor(-2 - u) - 2/e = e⁻¹φ(u)`.
fn phi_over_u(u: f64) -> f64 {
    if u == 0.0 {
        return -0.5;
    }
    (2.0 * (-0.5 * u).exp_m1() + 0.5 * u * (-0.5 * u).exp()) / u
}

/// `φ'(u)`
fn phi_prime(u: f64) -> f64 {
    -(-0.5 * u).exp() * (0.5 + 0.25 * u)
}

/// `(uφ'(u) - φ(u))/u² = ½e^{-w} Σ_{k≥3} w^{k-2}/k!` with `w = u/2`.
fn chi_over_u2(u: f64) -> f64 {
    let w = 0.5 * u;
    if w > 2.0 {
        return (2.0 - (-w).exp() * (2.0 + 2.0 * w + w * w)) / (u * u);
    }
    let (mut term, mut sum, mut k) = (w / 6.0, 0.0, 3.0);
    while term > 1e-17 * sum || sum == 0.0 {
        sum += term;
        k += 1.0;
        term *= w / k;
        if term == 0.0 {
            break;
        }
    }
    0.5 * (-w).exp() * sum
}

/// The double-tangent system divided by `ε = R(ĉ) - R(c)`, in the variables
/// `v = -(2 + t1)/ε` and `t2`. Both `t1`-terms of `(F1, F2)` vanish to first
/// order at `t1 = -2`, and `ŷ1 → e⁻²` like `ε`, so this form stays well
/// conditioned up to `ĉ` where the unscaled one loses `ŷ2` entirely.
#[derive(Debug, Clone, Copy)]
struct Scaled {
    r: f64,
    eps: f64,
    rp: f64,
}

impl Scaled {
    fn new(model: &Model, c: f64) -> Self {
        let (r, eps) = weights(model, c);
        Scaled {
            r,
            eps,
            rp: model.r_prime(c),
        }
    }

    fn t1(&self, v: f64) -> f64 {
        -2.0 - self.eps * v
    }

    /// Largest `v` with `t1 ≥ INNER_T_MIN`.
    fn v_max(&self) -> f64 {
        (-2.0 - INNER_T_MIN) / self.eps
    }

    /// `r e^{1+u/2}`, the size of `-r·slope_factor(t1)/(u/2)`.
    fn lead(&self, u: f64) -> f64 {
        self.r * E * (0.5 * u).exp()
    }

    fn residuals(&self, v: f64, t2: f64) -> [f64; 2] {
        let u = self.eps * v;
        [
            slope_factor(t2) - 0.5 * self.lead(u) * v,
            intercept_factor(t2) - TWO_OVER_E + self.r / E * v * phi_over_u(u),
        ]
    }

    fn jacobian(&self, v: f64, t2: f64) -> [[f64; 2]; 2] {
        let u = self.eps * v;
        [
            [-0.5 * self.lead(u) * (1.0 + 0.5 * u), dg_dt(t2)],
            [self.r / E * phi_prime(u), df_dt(t2)],
        ]
    }

    /// `∂G/∂c` at fixed `(v, t2)`, using `ε' = -R'`.
    fn d_dc(&self, v: f64) -> [f64; 2] {
        let u = self.eps * v;
        [
            self.rp * E * (0.5 * u).exp() * 0.5 * v * (0.5 * self.r * v - 1.0),
            self.rp / E * v * (phi_over_u(u) - self.r * v * chi_over_u2(u)),
        ]
    }

    /// `v` solving the slope match `G1(v, t2) = 0`.
    fn matched_v(&self, t2: f64) -> Result<f64> {
        let target = slope_factor(t2);
        bisect(
            "slope match on (0, e^-2)",
            |v| 0.5 * self.lead(self.eps * v) * v - target,
            0.0,
            self.v_max(),
            0.0,
        )
    }
}

fn check_positive(what: &'static str, y: f64) -> Result<()> {
    if !(y > 0.0 && y.is_finite()) {
        return Err(Error::OutOfDomain {
            what,
            value: y,
            domain: "(0, ∞)",
        });
    }
    Ok(())
}

/// `(F1, F2)` of the double-tangent system at `(y1, y2)`.
pub fn residuals_f1_f2(model: &Model, y1: f64, y2: f64, c: f64) -> Result<(f64, f64)> {
    check_positive("y1", y1)?;
    check_positive("y2", y2)?;
    if !(0.0..=model.c_hat()).contains(&c) {
        return Err(Error::OutOfDomain {
            what: "c",
            value: c,
            domain: "[0, c_hat]",
        });
    }
    let (r, eps) = weights(model, c);
    let [f1, f2] = f1_f2_log(r, eps, y1.ln(), y2.ln());
    Ok((f1, f2))
}

fn f3_target(model: &Model, c: f64) -> f64 {
    TWO_OVER_E * model.r_hat() / model.r_gap(c)
}

/// `F3(y; c) = y^{1/2}(1 - ½ ln y) - 2e⁻¹R(ĉ) / (R(ĉ) - R(c))` for `c ∈ [0, c_o]`.
pub fn residual_f3(model: &Model, y: f64, c: f64) -> Result<f64> {
    check_positive("y", y)?;
    if !(c >= 0.0 && c <= model.c_o()) {
        return Err(Error::WrongRegime {
            op: "residual_f3",
            c,
            found: regime_of(model, c),
        });
    }
    Ok(intercept_factor(y.ln()) - f3_target(model, c))
}

/// Upper contact point `y2*(c)` for `c ∈ [0, c_o]`.
pub fn solve_single(model: &Model, c: f64) -> Result<YPair> {
    if !(c >= 0.0 && c <= model.c_o()) {
        return Err(Error::WrongRegime {
            op: "solve_single",
            c,
            found: regime_of(model, c),
        });
    }
    let target = f3_target(model, c);
    let y2 = bisect(
        "F3",
        |y| intercept_factor(y.ln()) - target,
        1.0 + 1e-12,
        E * E - 1e-12,
        0.0,
    )?;
    Ok(YPair {
        c,
        y1: None,
        y2,
        residual_norm: (intercept_factor(y2.ln()) - target).abs(),
    })
}

/// Tangent-line gap at the slope-matched point, divided by `ε` and by
/// `1/(2√(2λ))`. Decreasing in `y2`, positive at `y2 = 1`.
fn tangent_gap(sc: &Scaled, y2: f64) -> Result<(f64, f64)> {
    let t2 = y2.ln();
    let v = sc.matched_v(t2)?;
    Ok((-sc.residuals(v, t2)[1], v))
}

fn check_two_sided(model: &Model, op: &'static str, c: f64) -> Result<()> {
    if !(c > model.c_o() && c < model.c_hat()) {
        return Err(Error::WrongRegime {
            op,
            c,
            found: regime_of(model, c),
        });
    }
    Ok(())
}

fn pair_from_log(model: &Model, c: f64, t1: f64, t2: f64) -> Result<YPair> {
    if t1 < LOG_Y1_FLOOR {
        return Err(Error::Underflow {
            c,
            log_floor: LOG_Y1_FLOOR,
        });
    }
    let (r, eps) = weights(model, c);
    let [f1, f2] = f1_f2_log(r, eps, t1, t2);
    Ok(YPair {
        c,
        y1: Some(t1.exp()),
        y2: t2.exp(),
        residual_norm: f1.abs().max(f2.abs()),
    })
}

/// Stage 1 alone: nested bisection for the double tangent.
pub fn solve_pair_bisection(model: &Model, c: f64) -> Result<YPair> {
    check_two_sided(model, "solve_pair", c)?;
    let sc = Scaled::new(model, c);
    let (v, t2) = bisection_scaled(&sc)?;
    pair_from_log(model, c, sc.t1(v), t2)
}

fn bisection_scaled(sc: &Scaled) -> Result<(f64, f64)> {
    let mut failure = None;
    let y2 = bisect(
        "double-tangent gap",
        |y2| match tangent_gap(sc, y2) {
            Ok((gap, _)) => gap,
            Err(e) => {
                failure.get_or_insert(e);
                f64::NAN
            }
        },
        1.0 + 1e-12,
        E * E - 1e-12,
        BISECTION_WIDTH,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    let y2 = y2?;
    let (_, v) = tangent_gap(sc, y2)?;
    Ok((v, y2.ln()))
}

/// Newton on the scaled system. Iterates match Newton on `(F1, F2)` in
/// `(t1, t2)` in exact arithmetic, since the change of variables is affine.
fn newton_scaled(sc: &Scaled, mut v: f64, mut t2: f64) -> Result<(f64, f64)> {
    let norm = |v: f64, t2: f64| {
        let [a, b] = sc.residuals(v, t2);
        a.abs().max(b.abs())
    };
    let v_max = sc.v_max();
    let mut current = norm(v, t2);
    for _ in 0..MAX_NEWTON_ITERS {
        if current == 0.0 {
            break;
        }
        let [g1, g2] = sc.residuals(v, t2);
        let j = sc.jacobian(v, t2);
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        if !(det != 0.0 && det.is_finite()) {
            break;
        }
        let dv = (g1 * j[1][1] - g2 * j[0][1]) / det;
        let d2 = (j[0][0] * g2 - j[1][0] * g1) / det;
        let mut step = 1.0;
        let mut accepted = false;
        while step > 1e-6 {
            let (nv, n2) = (v - step * dv, t2 - step * d2);
            if nv > 0.0 && nv < v_max && n2 > 0.0 && n2 < 2.0 {
                let next = norm(nv, n2);
                if next <= current {
                    v = nv;
                    t2 = n2;
                    current = next;
                    accepted = true;
                    break;
                }
            }
            step *= 0.5;
        }
        if !accepted || (dv.abs() <= 1e-16 * v && d2.abs() <= 1e-16 * t2.max(1.0)) {
            break;
        }
    }
    // |F| = ε|G| ≤ |G| since ε ≤ R(ĉ) < 1
    if !(current < RESIDUAL_TOL) {
        return Err(Error::NoConvergence {
            what: "Newton polish of (F1, F2)",
            residual: current,
        });
    }
    Ok((v, t2))
}

/// Limit of `ŷ2(c)` as `c ↑ ĉ`: the root in `(1, e²)` of
/// `y^{1/2}(1 - ½ ln y) - e⁻² y^{-1/2}(1 + ½ ln y) = 2e⁻¹`.
pub fn y2_limit_at_c_hat() -> f64 {
    bisect(
        "y2 limit at c_hat",
        |y: f64| {
            let t = y.ln();
            intercept_factor(t) - KINK_Y * slope_factor(t) - TWO_OVER_E
        },
        1.0,
        E * E,
        0.0,
    )
    .expect("bracket is analytic")
}

/// Double-tangent pair for `c ∈ (c_o, ĉ)`; within [`SNAP_MARGIN`] of `ĉ` the
/// `c ↑ ĉ` limit `(e⁻², y2_limit)` is returned.
pub fn solve_pair(model: &Model, c: f64) -> Result<YPair> {
    check_two_sided(model, "solve_pair", c)?;
    if model.c_hat() - c < SNAP_MARGIN {
        let y2 = y2_limit_at_c_hat();
        let (f1, f2) = residuals_f1_f2(model, KINK_Y, y2, c)?;
        return Ok(YPair {
            c,
            y1: Some(KINK_Y),
            y2,
            residual_norm: f1.abs().max(f2.abs()),
        });
    }
    let (sc, v, t2) = pair_scaled(model, c)?;
    pair_from_log(model, c, sc.t1(v), t2)
}

/// Solution `(v, t2)` of the scaled system; the `c ↑ ĉ` limit is not handled.
fn pair_scaled(model: &Model, c: f64) -> Result<(Scaled, f64, f64)> {
    let sc = Scaled::new(model, c);
    let (v, t2) = bisection_scaled(&sc)?;
    let (v, t2) = newton_scaled(&sc, v, t2)?;
    Ok((sc, v, t2))
}

/// Analytic `dŷ1/dc`, `dŷ2/dc` (or `dy2*/dc` below `c_o`).
pub fn boundary_derivatives(model: &Model, c: f64) -> Result<BoundaryDerivatives> {
    if c >= model.c_hat() || c == model.c_o() || !(c >= 0.0) {
        return Err(Error::WrongRegime {
            op: "boundary_derivatives",
            c,
            found: regime_of(model, c),
        });
    }
    let rp = model.r_prime(c);
    if c < model.c_o() {
        let y = solve_single(model, c)?.y2;
        let eps = model.r_gap(c);
        let dy2 = -8.0 / E * model.r_hat() * rp / (eps * eps) * y.sqrt() / y.ln();
        return Ok(BoundaryDerivatives {
            dy1_dc: None,
            dy2_dc: dy2,
        });
    }
    check_two_sided(model, "boundary_derivatives", c)?;
    let (sc, v, t2) = if model.c_hat() - c < SNAP_MARGIN {
        // limit point: G1 = 0 at u = 0
        let sc = Scaled::new(model, c);
        let t2 = y2_limit_at_c_hat().ln();
        (sc, 2.0 * slope_factor(t2) / (sc.r * E), t2)
    } else {
        pair_scaled(model, c)?
    };
    let (y1, y2) = (sc.t1(v).exp(), t2.exp());
    let j = sc.jacobian(v, t2);
    let [g1, g2] = sc.d_dc(v);
    let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
    let dv = -(g1 * j[1][1] - g2 * j[0][1]) / det;
    let dt2 = -(j[0][0] * g2 - j[1][0] * g1) / det;
    // t1 = -2 - εv with ε' = -R'
    let dt1 = rp * v - sc.eps * dv;
    Ok(BoundaryDerivatives {
        dy1_dc: Some(y1 * dt1),
        dy2_dc: y2 * dt2,
    })
}

/// Boundaries at one inventory level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundaryPoint {
    pub c: f64,
    pub regime: Regime,
    pub gamma_hat: f64,
    pub beta_hat: f64,
    pub y1: Option<f64>,
    pub y2: Option<f64>,
}

pub fn boundary_at(model: &Model, c: f64) -> Result<BoundaryPoint> {
    if !(0.0..=1.0).contains(&c) {
        return Err(Error::OutOfDomain {
            what: "c",
            value: c,
            domain: "[0, 1]",
        });
    }
    let scale = 2.0 * model.rate();
    let regime = regime_of(model, c);
    Ok(match regime {
        Regime::ConstantLower => BoundaryPoint {
            c,
            regime,
            gamma_hat: model.gamma_o(),
            beta_hat: f64::INFINITY,
            y1: None,
            y2: None,
        },
        Regime::SingleUpper => {
            let p = solve_single(model, c)?;
            BoundaryPoint {
                c,
                regime,
                gamma_hat: f64::NEG_INFINITY,
                beta_hat: p.y2.ln() / scale,
                y1: None,
                y2: Some(p.y2),
            }
        }
        Regime::TwoSided => {
            let p = solve_pair(model, c)?;
            let y1 = p.y1.expect("two-sided pair");
            BoundaryPoint {
                c,
                regime,
                gamma_hat: y1.ln() / scale,
                beta_hat: p.y2.ln() / scale,
                y1: Some(y1),
                y2: Some(p.y2),
            }
        }
    })
}

/// Tabulated boundaries over a sorted `c` grid. Off-grid queries are solved on
/// demand.
#[derive(Debug, Clone)]
pub struct BoundaryTable {
    model: Model,
    rows: Vec<BoundaryPoint>,
}

pub fn build_table(model: &Model, c_grid: &[f64]) -> Result<BoundaryTable> {
    if c_grid.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err(Error::Config("c grid must be sorted".into()));
    }
    let rows = c_grid
        .par_iter()
        .map(|&c| boundary_at(model, c))
        .collect::<Result<Vec<_>>>()?;
    Ok(BoundaryTable {
        model: model.clone(),
        rows,
    })
}

impl BoundaryTable {
    /// Empty table; every query is solved directly.
    pub fn on_demand(model: &Model) -> Self {
        BoundaryTable {
            model: model.clone(),
            rows: Vec::new(),
        }
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn rows(&self) -> &[BoundaryPoint] {
        &self.rows
    }

    pub fn c_grid(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.c).collect()
    }

    pub fn gamma_hat_column(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.gamma_hat).collect()
    }

    pub fn beta_hat_column(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.beta_hat).collect()
    }

    pub fn regime_column(&self) -> Vec<Regime> {
        self.rows.iter().map(|r| r.regime).collect()
    }

    pub fn at(&self, c: f64) -> Result<BoundaryPoint> {
        if let Ok(i) = self.rows.binary_search_by(|r| r.c.total_cmp(&c)) {
            return Ok(self.rows[i]);
        }
        boundary_at(&self.model, c)
    }

    pub fn gamma_hat(&self, c: f64) -> Result<f64> {
        Ok(self.at(c)?.gamma_hat)
    }

    pub fn beta_hat(&self, c: f64) -> Result<f64> {
        Ok(self.at(c)?.beta_hat)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn canonical() -> Model {
        Model::quadratic(0.5, 0.4).unwrap()
    }

    #[test]
    fn f3_examples() {
        let m = canonical();
        let v = residual_f3(&m, 1.0, 0.0).unwrap();
        assert_abs_diff_eq!(v, 1.0 - 2.0 / E * 0.09 / 0.49, epsilon = 1e-15);
        assert_abs_diff_eq!(v, 0.864_860_6, epsilon = 1e-7);
        let v = residual_f3(&m, E * E, 0.0).unwrap();
        assert!(v < 0.0);
        assert_abs_diff_eq!(v, -2.0 / E * 0.09 / 0.49, epsilon = 1e-14);
        assert!(residual_f3(&m, 1.5, 0.5).is_err());
    }

    #[test]
    fn single_boundary_regression() {
        // high-precision bisection of F3 at c = 0 and 0.2
        let m = canonical();
        let p = solve_single(&m, 0.0).unwrap();
        assert_abs_diff_eq!(p.y2, 6.654_026_101_534_589, epsilon = 1e-12);
        assert!(p.residual_norm < 1e-12);
        let b = boundary_at(&m, 0.0).unwrap();
        assert_abs_diff_eq!(b.beta_hat, 0.947_611_050_135_939, epsilon = 1e-12);
        assert_abs_diff_eq!(
            solve_single(&m, 0.2).unwrap().y2,
            5.946_222_735_397_646,
            epsilon = 1e-12
        );
    }

    #[test]
    fn pair_regression() {
        // 40-digit Newton on (F1, F2)
        let m = canonical();
        let p = solve_pair(&m, 0.55).unwrap();
        assert_abs_diff_eq!(p.y1.unwrap(), 0.110_414_265_517_136_6, epsilon = 1e-11);
        assert_abs_diff_eq!(p.y2, 2.560_786_735_218_761, epsilon = 1e-11);
        assert!(p.residual_norm < RESIDUAL_TOL);
        let p = solve_pair(&m, 0.45).unwrap();
        assert_abs_diff_eq!(p.y1.unwrap(), 0.052_673_249_753_407_35, epsilon = 1e-11);
        assert_abs_diff_eq!(p.y2, 2.812_972_576_405_388, epsilon = 1e-11);
    }

    #[test]
    fn stages_agree() {
        let m = canonical();
        for i in 1..20 {
            let c = 0.4 + 0.3 * i as f64 / 20.0;
            let s1 = solve_pair_bisection(&m, c).unwrap();
            let s2 = solve_pair(&m, c).unwrap();
            assert_abs_diff_eq!(s1.y1.unwrap(), s2.y1.unwrap(), epsilon = 1e-9);
            assert_abs_diff_eq!(s1.y2, s2.y2, epsilon = 1e-9);
        }
    }

    #[test]
    fn limit_at_c_hat() {
        assert_abs_diff_eq!(
            y2_limit_at_c_hat(),
            2.472_026_609_616_293_7,
            epsilon = 1e-13
        );
        let m = canonical();
        let near = solve_pair(&m, m.c_hat() - 1e-6).unwrap();
        assert_abs_diff_eq!(near.y1.unwrap(), KINK_Y, epsilon = 1e-4);
        assert_abs_diff_eq!(near.y2, y2_limit_at_c_hat(), epsilon = 1e-4);
        let snapped = solve_pair(&m, m.c_hat() - 1e-10).unwrap();
        assert_eq!(snapped.y1, Some(KINK_Y));
    }

    #[test]
    fn derivative_regression_and_signs() {
        let m = canonical();
        let d = boundary_derivatives(&m, 0.55).unwrap();
        assert_relative_eq!(
            d.dy1_dc.unwrap(),
            0.360_868_803_297_035_6,
            max_relative = 1e-8
        );
        assert_relative_eq!(d.dy2_dc, -1.350_888_444_920_932, max_relative = 1e-8);
        let d = boundary_derivatives(&m, 0.2).unwrap();
        assert!(d.dy1_dc.is_none());
        assert!(d.dy2_dc < 0.0);
        let fd = (solve_single(&m, 0.2 + 1e-6).unwrap().y2
            - solve_single(&m, 0.2 - 1e-6).unwrap().y2)
            / 2e-6;
        assert_relative_eq!(d.dy2_dc, fd, max_relative = 1e-4);
        assert!(boundary_derivatives(&m, 0.8).is_err());
    }

    #[test]
    fn scaled_helpers() {
        // series and closed form agree where they meet
        let closed = |u: f64| {
            let w = 0.5 * u;
            (2.0 - (-w).exp() * (2.0 + 2.0 * w + w * w)) / (u * u)
        };
        assert_relative_eq!(
            chi_over_u2(3.999_999),
            closed(3.999_999),
            max_relative = 1e-12
        );
        assert_relative_eq!(chi_over_u2(1.0), closed(1.0), max_relative = 1e-12);
        assert_relative_eq!(chi_over_u2(1e-8), 1e-8 / 24.0, max_relative = 1e-7);
        assert_relative_eq!(phi_over_u(1e-12), -0.5, max_relative = 1e-11);
        let u = 0.3;
        let phi = |u: f64| (2.0 + 0.5 * u) * (-0.5 * u).exp() - 2.0;
        assert_relative_eq!(phi_over_u(u) * u, phi(u), max_relative = 1e-14);
        let fd = (phi(u + 1e-6) - phi(u - 1e-6)) / 2e-6;
        assert_relative_eq!(phi_prime(u), fd, max_relative = 1e-8);
    }

    #[test]
    fn well_conditioned_near_c_hat() {
        for a in [0.2, 0.4, 0.8] {
            let m = Model::quadratic(0.5, a).unwrap();
            for gap in [1e-3, 1e-5, 1e-7] {
                let c = m.c_hat() - gap;
                let s1 = solve_pair_bisection(&m, c).unwrap();
                let s2 = solve_pair(&m, c).unwrap();
                assert_abs_diff_eq!(s1.y2, s2.y2, epsilon = 1e-11);
                let d = boundary_derivatives(&m, c).unwrap();
                assert!(d.dy1_dc.unwrap() > 0.0 && d.dy2_dc < 0.0, "a={a} gap={gap}");
            }
            let c = m.c_hat() - 1e-3;
            let h = 1e-6;
            let (p, q) = (
                solve_pair(&m, c + h).unwrap(),
                solve_pair(&m, c - h).unwrap(),
            );
            let d = boundary_derivatives(&m, c).unwrap();
            assert_relative_eq!(d.dy2_dc, (p.y2 - q.y2) / (2.0 * h), max_relative = 1e-5);
            assert_relative_eq!(
                d.dy1_dc.unwrap(),
                (p.y1.unwrap() - q.y1.unwrap()) / (2.0 * h),
                max_relative = 1e-5
            );
        }
    }

    #[test]
    fn table_regimes_and_sentinels() {
        let m = canonical();
        let t = build_table(&m, &[0.0, 0.2, 0.4, 0.55, 0.7, 0.9]).unwrap();
        let regimes = t.regime_column();
        use Regime::*;
        assert_eq!(
            regimes,
            vec![
                SingleUpper,
                SingleUpper,
                SingleUpper,
                TwoSided,
                ConstantLower,
                ConstantLower
            ]
        );
        assert_eq!(t.gamma_hat(0.2).unwrap(), f64::NEG_INFINITY);
        assert_eq!(t.gamma_hat(0.9).unwrap(), -1.0);
        assert_eq!(t.beta_hat(0.9).unwrap(), f64::INFINITY);
        let off_grid = t.at(0.6).unwrap();
        assert_eq!(off_grid.regime, TwoSided);
        assert!(build_table(&m, &[0.5, 0.1]).is_err());
    }
}
