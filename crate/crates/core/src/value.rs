//! Minorant `Q`, stopping value `V = φ_λ Q(F_λ, c)`, and the pasted value
//! function `W` (`W¹ = xΦ + V` below `ĉ`, `W^o` above), with HJB residuals,
//! smooth-fit probes and the `Θ`/`u` diagnostics.
//!
//! Inside the inaction strip `V = A(c)ψ_λ + B(c)φ_λ`, where `A y + B` is the
//! tangent line of `H` at `ŷ2(c)`. `c`-derivatives of `A, B` follow from the
//! contact conditions at both tangency points.

use serde::Serialize;

use crate::boundaries::{BoundaryPoint, BoundaryTable, Regime};
use crate::error::{Error, Result};
use crate::model::Model;
use crate::transform::{
    f_lambda, obstacle_log_unchecked, payoff_g_unchecked, w_o_unchecked, w_o_xx, ObstacleAt,
    OneSided,
};

/// Distance to a boundary curve under which second derivatives are one-sided.
pub const KINK_TUBE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Region {
    Inaction,
    ActionLower,
    ActionUpper,
}

impl Region {
    pub fn as_str(self) -> &'static str {
        match self {
            Region::Inaction => "Inaction",
            Region::ActionLower => "ActionLower",
            Region::ActionUpper => "ActionUpper",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ValuePoint {
    pub x: f64,
    pub c: f64,
    pub w: f64,
    pub w_x: f64,
    pub w_c: f64,
    pub region: Region,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ActiveConstraint {
    Pde,
    Gradient,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HjbResidual {
    /// `½W_xx - λW + λxΦ(c)`
    pub pde_residual: f64,
    /// `W_c + x`
    pub gradient_slack: f64,
    pub active_constraint: ActiveConstraint,
}

impl HjbResidual {
    /// `max{-(pde_residual), -(gradient_slack)}`, zero for the value function.
    pub fn hjb_max(&self) -> f64 {
        (-self.pde_residual).max(-self.gradient_slack)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SideEstimate {
    pub boundary: f64,
    pub left: f64,
    pub right: f64,
}

impl SideEstimate {
    pub fn jump(&self) -> f64 {
        (self.right - self.left).abs()
    }
}

/// One-sided estimates of `W_cx` at each finite boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SmoothFit {
    pub c: f64,
    pub lower: Option<SideEstimate>,
    pub upper: Option<SideEstimate>,
}

impl SmoothFit {
    pub fn lower_jump(&self) -> Option<f64> {
        self.lower.map(|s| s.jump())
    }

    pub fn upper_jump(&self) -> Option<f64> {
        self.upper.map(|s| s.jump())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Diagnostics {
    /// Present only when both boundaries are finite.
    pub theta: Option<f64>,
    pub u_gap: f64,
}

#[derive(Debug, Clone, Copy)]
struct Strip {
    y1: f64,
    y2: f64,
    a: f64,
    b: f64,
    da: f64,
    db: f64,
}

fn h_at(model: &Model, y: f64, c: f64) -> ObstacleAt {
    obstacle_log_unchecked(model, y.ln(), c)
}

fn strip_for(model: &Model, bp: &BoundaryPoint) -> Option<Strip> {
    let c = bp.c;
    let y2 = bp.y2?;
    let at2 = h_at(model, y2, c);
    let d2 = at2.derivatives.expect("y2 > 1");
    let a = d2.h_y;
    let (y1, b, hc1) = match bp.y1 {
        Some(y1) => {
            let d1 = h_at(model, y1, c).derivatives.expect("y1 > 0");
            (y1, at2.h - y2 * a, d1.h_c)
        }
        // line through the origin: H(y2*) = y2* H_y(y2*)
        None => (0.0, 0.0, 0.0),
    };
    let da = (d2.h_c - hc1) / (y2 - y1);
    let db = hc1 - da * y1;
    Some(Strip {
        y1,
        y2,
        a,
        b,
        da,
        db,
    })
}

/// Value function at one inventory level.
#[derive(Debug, Clone)]
pub struct Slice<'a> {
    model: &'a Model,
    bp: BoundaryPoint,
    strip: Option<Strip>,
}

impl<'a> Slice<'a> {
    pub fn new(table: &'a BoundaryTable, c: f64) -> Result<Self> {
        let bp = table.at(c)?;
        let model = table.model();
        let strip = match bp.regime {
            Regime::ConstantLower => None,
            _ => strip_for(model, &bp),
        };
        Ok(Slice { model, bp, strip })
    }

    pub fn boundaries(&self) -> &BoundaryPoint {
        &self.bp
    }

    pub fn c(&self) -> f64 {
        self.bp.c
    }

    pub fn region(&self, x: f64) -> Region {
        if x <= self.bp.gamma_hat {
            Region::ActionLower
        } else if x >= self.bp.beta_hat {
            Region::ActionUpper
        } else {
            Region::Inaction
        }
    }

    fn near_kink(&self, x: f64) -> bool {
        (x - self.bp.gamma_hat).abs() < KINK_TUBE || (x - self.bp.beta_hat).abs() < KINK_TUBE
    }

    pub fn point(&self, x: f64) -> ValuePoint {
        let m = self.model;
        let c = self.bp.c;
        let region = self.region(x);
        let (w, w_x, w_c) = match (&self.strip, region) {
            (None, _) => {
                let p = w_o_unchecked(m, x, c);
                (p.value, p.d_dx, p.d_dc)
            }
            (Some(s), Region::Inaction) => {
                let s_rate = m.rate();
                let psi = (s_rate * x).exp();
                let phi = (-s_rate * x).exp();
                (
                    x * m.phi(c) + s.a * psi + s.b * phi,
                    m.phi(c) + s_rate * (s.a * psi - s.b * phi),
                    x * m.phi_prime(c) + s.da * psi + s.db * phi,
                )
            }
            (Some(_), _) => {
                let g = payoff_g_unchecked(m, x, c);
                (x * m.phi(c) + g.value, m.phi(c) + g.d_dx, -x)
            }
        };
        ValuePoint {
            x,
            c,
            w,
            w_x,
            w_c,
            region,
        }
    }

    /// `W_xx`, with the left limit reported on a boundary curve.
    pub fn w_xx(&self, x: f64) -> OneSided {
        let m = self.model;
        let c = self.bp.c;
        let on_curve = x == self.bp.gamma_hat || x == self.bp.beta_hat;
        let Some(s) = &self.strip else {
            return w_o_xx(m, x, c);
        };
        let s2 = 2.0 * m.lambda();
        // left limit at β̂ is the strip value; at γ̂ it is the stopping value
        let in_strip = if x == self.bp.beta_hat {
            true
        } else {
            self.region(x) == Region::Inaction
        };
        let value = if in_strip {
            let rate = m.rate();
            s2 * (s.a * (rate * x).exp() + s.b * (-rate * x).exp())
        } else if x <= m.gamma_o() {
            0.0
        } else {
            let rate = m.rate();
            -rate * m.r_hat() * (-rate * x).exp() / std::f64::consts::E
        };
        OneSided {
            value,
            left_limit: on_curve,
        }
    }

    pub fn hjb(&self, x: f64) -> Result<HjbResidual> {
        if self.near_kink(x) {
            return Err(Error::Kink { x, c: self.bp.c });
        }
        let m = self.model;
        let c = self.bp.c;
        let p = self.point(x);
        let gradient_slack = match (&self.strip, p.region) {
            (Some(_), Region::Inaction) => self.u_gap_unchecked(x),
            _ => p.w_c + x,
        };
        let pde_residual = 0.5 * self.w_xx(x).value - m.lambda() * p.w + m.lambda() * x * m.phi(c);
        let pde_zero = pde_residual.abs() <= 1e-10;
        let grad_zero = gradient_slack.abs() <= 1e-10;
        let active_constraint = match (pde_zero, grad_zero) {
            (true, true) => ActiveConstraint::Both,
            (true, false) => ActiveConstraint::Pde,
            _ => ActiveConstraint::Gradient,
        };
        Ok(HjbResidual {
            pde_residual,
            gradient_slack,
            active_constraint,
        })
    }

    fn u_gap_unchecked(&self, x: f64) -> f64 {
        let Some(s) = &self.strip else { return 0.0 };
        if self.region(x) != Region::Inaction {
            return 0.0;
        }
        let rate = self.model.rate();
        s.da * (rate * x).exp() + s.db * (-rate * x).exp() - x * self.model.r_prime(self.bp.c)
    }

    /// `u = V_c - G_c` for `c < ĉ`.
    pub fn u_gap(&self, x: f64) -> Result<f64> {
        if self.strip.is_none() {
            return Err(Error::WrongRegime {
                op: "u_gap",
                c: self.bp.c,
                found: self.bp.regime,
            });
        }
        Ok(self.u_gap_unchecked(x))
    }

    /// `Θ(x, c; γ̂(c), β̂(c))`, two-boundary rows only.
    pub fn theta(&self, x: f64) -> Option<f64> {
        if self.bp.regime != Regime::TwoSided {
            return None;
        }
        let (g, b) = (self.bp.gamma_hat, self.bp.beta_hat);
        let s = self.model.rate();
        Some(x * (s * (b - g)).sinh() - g * (s * (b - x)).sinh() - b * (s * (x - g)).sinh())
    }

    pub fn diagnostics(&self, x: f64) -> Result<Diagnostics> {
        Ok(Diagnostics {
            theta: self.theta(x),
            u_gap: self.u_gap(x)?,
        })
    }

    /// `Q(y, c)` for `c < ĉ`.
    pub fn q(&self, y: f64) -> Result<f64> {
        let Some(s) = &self.strip else {
            return Err(Error::WrongRegime {
                op: "minorant_q",
                c: self.bp.c,
                found: self.bp.regime,
            });
        };
        if !(y >= 0.0) || y.is_infinite() {
            return Err(Error::OutOfDomain {
                what: "y",
                value: y,
                domain: "[0, ∞)",
            });
        }
        let c = self.bp.c;
        if y == 0.0 {
            return Ok(0.0);
        }
        let in_line = if self.bp.y1.is_some() {
            y > s.y1 && y < s.y2
        } else {
            y < s.y2
        };
        Ok(if in_line {
            s.a * y + s.b
        } else {
            h_at(self.model, y, c).h
        })
    }

    /// Tangent line anchored at `ŷ1` (two-boundary rows), for consistency checks.
    pub fn q_lower_anchored(&self, y: f64) -> Option<f64> {
        let y1 = self.bp.y1?;
        let at1 = h_at(self.model, y1, self.bp.c);
        Some(at1.derivatives?.h_y * (y - y1) + at1.h)
    }

    /// Second-order one-sided differences of the analytic `W_c` across each
    /// finite boundary.
    pub fn smooth_fit(&self, h: f64) -> Result<SmoothFit> {
        if !(h > 1e-6 && h < 1e-2) {
            return Err(Error::OutOfDomain {
                what: "h",
                value: h,
                domain: "(1e-6, 1e-2)",
            });
        }
        if self.bp.c == self.model.c_hat() {
            return Err(Error::OutOfDomain {
                what: "c",
                value: self.bp.c,
                domain: "c != c_hat",
            });
        }
        let wc = |x: f64| self.point(x).w_c;
        let probe = |b: f64| {
            let f0 = wc(b);
            SideEstimate {
                boundary: b,
                left: (3.0 * f0 - 4.0 * wc(b - h) + wc(b - 2.0 * h)) / (2.0 * h),
                right: (-3.0 * f0 + 4.0 * wc(b + h) - wc(b + 2.0 * h)) / (2.0 * h),
            }
        };
        let finite = |b: f64| b.is_finite().then(|| probe(b));
        Ok(SmoothFit {
            c: self.bp.c,
            lower: finite(self.bp.gamma_hat),
            upper: finite(self.bp.beta_hat),
        })
    }
}

pub fn value_w(table: &BoundaryTable, x: f64, c: f64) -> Result<ValuePoint> {
    Ok(Slice::new(table, c)?.point(x))
}

pub fn minorant_q(table: &BoundaryTable, y: f64, c: f64) -> Result<f64> {
    Slice::new(table, c)?.q(y)
}

pub fn hjb_check(table: &BoundaryTable, x: f64, c: f64) -> Result<HjbResidual> {
    Slice::new(table, c)?.hjb(x)
}

pub fn smooth_fit_probe(table: &BoundaryTable, c: f64, h: f64) -> Result<SmoothFit> {
    Slice::new(table, c)?.smooth_fit(h)
}

pub fn diagnostics(table: &BoundaryTable, x: f64, c: f64) -> Result<Diagnostics> {
    Slice::new(table, c)?.diagnostics(x)
}

/// `V(x, c) = φ_λ(x) Q(F_λ(x), c)` evaluated directly through `Q`.
pub fn stopping_value_via_q(table: &BoundaryTable, x: f64, c: f64) -> Result<f64> {
    let m = table.model();
    let q = minorant_q(table, f_lambda(m, x), c)?;
    Ok((-m.rate() * x).exp() * q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transform::{obstacle_h, payoff_g, w_o_eval};
    use approx::assert_abs_diff_eq;
    use std::f64::consts::E;

    fn table() -> BoundaryTable {
        BoundaryTable::on_demand(&Model::quadratic(0.5, 0.4).unwrap())
    }

    #[test]
    fn value_examples() {
        let t = table();
        for &x in &[-5.0, -1.0, 0.0, 0.3, 4.0] {
            assert_abs_diff_eq!(value_w(&t, x, 1.0).unwrap().w, 0.0, epsilon = 1e-15);
        }
        let g = t.gamma_hat(0.55).unwrap();
        let p = value_w(&t, g, 0.55).unwrap();
        assert_abs_diff_eq!(p.w, g * 0.45, epsilon = 1e-12);
        assert_eq!(p.region, Region::ActionLower);
        assert_abs_diff_eq!(value_w(&t, 0.0, 0.7).unwrap().w, -0.09 / E, epsilon = 1e-15);
    }

    #[test]
    fn value_is_continuous_across_boundaries() {
        let t = table();
        for &c in &[0.1, 0.3, 0.45, 0.55, 0.65] {
            let s = Slice::new(&t, c).unwrap();
            let bp = *s.boundaries();
            let mut edges = vec![bp.beta_hat];
            if bp.gamma_hat.is_finite() {
                edges.push(bp.gamma_hat);
            }
            for b in edges {
                let lo = s.point(b - 1e-10);
                let hi = s.point(b + 1e-10);
                assert_abs_diff_eq!(lo.w, hi.w, epsilon = 1e-9);
                assert_abs_diff_eq!(lo.w_x, hi.w_x, epsilon = 1e-8);
                assert_abs_diff_eq!(lo.w_c, hi.w_c, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn strip_form_matches_minorant_form() {
        let t = table();
        for &c in &[0.2, 0.55] {
            let s = Slice::new(&t, c).unwrap();
            for i in 1..40 {
                let x = -3.0 + 0.1 * i as f64;
                if s.region(x) != Region::Inaction {
                    continue;
                }
                let v = s.point(x).w - x * t.model().phi(c);
                assert_abs_diff_eq!(v, stopping_value_via_q(&t, x, c).unwrap(), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn q_examples() {
        let t = table();
        let bp = t.at(0.55).unwrap();
        let y1 = bp.y1.unwrap();
        let q = minorant_q(&t, y1, 0.55).unwrap();
        assert_abs_diff_eq!(
            q,
            obstacle_h(t.model(), y1, 0.55).unwrap().h,
            epsilon = 1e-15
        );
        assert_eq!(minorant_q(&t, 0.0, 0.2).unwrap(), 0.0);
        let s = Slice::new(&t, 0.55).unwrap();
        for i in 0..50 {
            let y = y1 + (bp.y2.unwrap() - y1) * i as f64 / 49.0;
            assert_abs_diff_eq!(
                s.q(y).unwrap(),
                s.q_lower_anchored(y).unwrap(),
                epsilon = 1e-10
            );
        }
        assert!(minorant_q(&t, 1.0, 0.7).is_err());
    }

    #[test]
    fn stopping_region_matches_payoff() {
        let t = table();
        let m = t.model().clone();
        let s = Slice::new(&t, 0.55).unwrap();
        let x = s.boundaries().beta_hat + 0.5;
        let w = s.point(x).w;
        assert_abs_diff_eq!(
            w,
            x * m.phi(0.55) + payoff_g(&m, x, 0.55).unwrap().value,
            epsilon = 1e-14
        );
        assert_abs_diff_eq!(
            w,
            x * (m.c_hat() - 0.55) + w_o_eval(&m, x, m.c_hat()).unwrap().value,
            epsilon = 1e-14
        );
    }

    #[test]
    fn hjb_examples() {
        let t = table();
        let r = hjb_check(&t, 1.0, 0.9).unwrap();
        assert_abs_diff_eq!(r.pde_residual, 0.0, epsilon = 1e-14);
        assert!(r.gradient_slack > 0.0);
        let r = hjb_check(&t, -2.0, 0.9).unwrap();
        assert_abs_diff_eq!(r.gradient_slack, 0.0, epsilon = 1e-15);
        assert!(r.pde_residual > 0.0);
        for &x in &[-2.0, -0.5, 0.0, 1.5] {
            assert_abs_diff_eq!(
                hjb_check(&t, x, 0.7).unwrap().gradient_slack,
                0.0,
                epsilon = 1e-15
            );
        }
        assert!(matches!(hjb_check(&t, -1.0, 0.9), Err(Error::Kink { .. })));
    }

    #[test]
    fn u_gap_matches_hitting_representations() {
        let t = table();
        let m = t.model().clone();
        let s = m.rate();
        // single-boundary rows: (1 + Φ')(x - β ψ(x)/ψ(β))
        let sl = Slice::new(&t, 0.2).unwrap();
        let b = sl.boundaries().beta_hat;
        for i in 0..30 {
            let x = -3.0 + 0.1 * i as f64;
            let expected = (1.0 + m.phi_prime(0.2)) * (x - b * (s * (x - b)).exp());
            assert_abs_diff_eq!(sl.u_gap(x).unwrap(), expected, epsilon = 1e-9);
        }
        // two-boundary rows: (1 + Φ') Θ / sinh(√(2λ)(β - γ))
        let sl = Slice::new(&t, 0.55).unwrap();
        let (g, b) = (sl.boundaries().gamma_hat, sl.boundaries().beta_hat);
        for i in 1..30 {
            let x = g + (b - g) * i as f64 / 30.0;
            let expected = (1.0 + m.phi_prime(0.55)) * sl.theta(x).unwrap() / (s * (b - g)).sinh();
            assert_abs_diff_eq!(sl.u_gap(x).unwrap(), expected, epsilon = 1e-9);
        }
    }

    #[test]
    fn theta_signs() {
        let t = table();
        let sl = Slice::new(&t, 0.55).unwrap();
        let (g, b) = (sl.boundaries().gamma_hat, sl.boundaries().beta_hat);
        assert_abs_diff_eq!(sl.theta(g).unwrap(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(sl.theta(b).unwrap(), 0.0, epsilon = 1e-12);
        assert!(sl.theta(0.5 * (g + b)).unwrap() < 0.0);
        let d = sl.diagnostics(b + 1.0).unwrap();
        assert_eq!(d.u_gap, 0.0);
        assert!(Slice::new(&t, 0.2).unwrap().theta(0.0).is_none());
    }

    #[test]
    fn smooth_fit_examples() {
        let t = table();
        let sf = smooth_fit_probe(&t, 0.85, 1e-4).unwrap();
        let lower = sf.lower.unwrap();
        assert!((lower.left + 1.0).abs() < 1e-5);
        assert!((lower.right + 1.0).abs() < 1e-5);
        assert!(sf.upper.is_none());
        let sf = smooth_fit_probe(&t, 0.55, 1e-4).unwrap();
        assert!(sf.upper_jump().unwrap() > 1e-3);
        assert!(sf.lower_jump().unwrap() > 1e-3);
        assert!(smooth_fit_probe(&t, 0.7, 1e-4).is_err());
    }

    #[test]
    fn pasting_at_c_hat() {
        let t = table();
        let m = t.model().clone();
        let below = Slice::new(&t, m.c_hat() - 1e-7).unwrap();
        let b = below.boundaries().beta_hat;
        for i in 1..20 {
            let x = m.gamma_o() + (b - m.gamma_o()) * i as f64 / 20.0;
            let lo = below.point(x);
            let hi = value_w(&t, x, m.c_hat()).unwrap();
            assert_abs_diff_eq!(lo.w, hi.w, epsilon = 1e-6);
            assert_abs_diff_eq!(lo.w_x, hi.w_x, epsilon = 1e-6);
            assert_abs_diff_eq!(lo.w_c, -x, epsilon = 1e-6);
        }
    }

    #[test]
    fn w_c_matches_finite_difference() {
        let t = table();
        for &c in &[0.2, 0.5, 0.6] {
            for i in 0..25 {
                let x = -2.5 + 0.13 * i as f64;
                let s = Slice::new(&t, c).unwrap();
                if s.near_kink(x) {
                    continue;
                }
                let h = 1e-6;
                let fd = (value_w(&t, x, c + h).unwrap().w - value_w(&t, x, c - h).unwrap().w)
                    / (2.0 * h);
                assert_abs_diff_eq!(s.point(x).w_c, fd, epsilon = 1e-6);
                let fdx = (s.point(x + h).w - s.point(x - h).w) / (2.0 * h);
                assert_abs_diff_eq!(s.point(x).w_x, fdx, epsilon = 1e-7);
            }
        }
    }
}
