//! Fundamental solutions of `½u'' = λu`, the map `F_λ = ψ_λ/φ_λ`, the explicit
//! value piece `W^o` above `ĉ`, the stopping payoff `G` below `ĉ`, and the
//! transformed obstacle `H(y, c) = G(F_λ⁻¹(y), c) / φ_λ(F_λ⁻¹(y))`.
//!
//! All obstacle quantities are evaluated in `t = ln y` so that the factors
//! `y^{±1/2}` stay finite down to `t = -700`.

use std::f64::consts::E;

use crate::error::{Error, Result};
use crate::model::Model;

const E_INV: f64 = 1.0 / E;
/// `e^{-2}`, where the two branches of the obstacle meet.
pub const KINK_Y: f64 = 1.0 / (E * E);
/// Largest exponent accepted by [`fundamental`].
pub const MAX_EXPONENT: f64 = 700.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FundamentalAt {
    pub x: f64,
    /// `φ_λ(x) = e^{-√(2λ)x}`
    pub phi_fund: f64,
    /// `ψ_λ(x) = e^{√(2λ)x}`
    pub psi_fund: f64,
    /// `F_λ(x) = e^{2√(2λ)x}`
    pub f: f64,
}

/// A value together with its first partials in `x` and `c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Partials {
    pub value: f64,
    pub d_dx: f64,
    pub d_dc: f64,
}

/// Second derivative at a point where it may jump.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OneSided {
    pub value: f64,
    /// `true` when the point sits on the kink and `value` is the left limit.
    pub left_limit: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObstacleDerivatives {
    pub h_y: f64,
    pub h_c: f64,
    pub h_yc: f64,
    pub h_yy: f64,
    /// `H_yy` jumps at `y = e⁻²`; there the left limit is reported.
    pub h_yy_left_limit: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObstacleAt {
    pub y: f64,
    pub c: f64,
    pub h: f64,
    /// `None` at `y = 0`, where `H_y` is unbounded.
    pub derivatives: Option<ObstacleDerivatives>,
}

impl ObstacleAt {
    pub fn h_y(&self) -> Option<f64> {
        self.derivatives.map(|d| d.h_y)
    }
}

pub fn fundamental(model: &Model, x: f64) -> Result<FundamentalAt> {
    let s = model.rate();
    let exponent = 2.0 * s * x;
    if !(exponent.abs() <= MAX_EXPONENT) {
        return Err(Error::Overflow { exponent });
    }
    let psi = (s * x).exp();
    let phi = (-s * x).exp();
    Ok(FundamentalAt {
        x,
        phi_fund: phi,
        psi_fund: psi,
        f: exponent.exp(),
    })
}

/// `F_λ(x) = e^{2√(2λ)x}`.
#[inline]
pub fn f_lambda(model: &Model, x: f64) -> f64 {
    (2.0 * model.rate() * x).exp()
}

/// `F_λ⁻¹(y) = ln(y) / (2√(2λ))`; `-∞` at `y = 0`.
#[inline]
pub fn f_inv(model: &Model, y: f64) -> f64 {
    y.ln() / (2.0 * model.rate())
}

/// `y^{-1/2} (1 + ½ ln y)` written in `t = ln y`.
#[inline]
pub(crate) fn slope_factor(t: f64) -> f64 {
    (-0.5 * t).exp() * (1.0 + 0.5 * t)
}

/// `y^{1/2} (1 - ½ ln y)` written in `t = ln y`.
#[inline]
pub(crate) fn intercept_factor(t: f64) -> f64 {
    (0.5 * t).exp() * (1.0 - 0.5 * t)
}

fn check_c(what: &'static str, c: f64, lo: f64, hi: f64, domain: &'static str) -> Result<()> {
    if !(c >= lo && c <= hi) {
        return Err(Error::OutOfDomain {
            what,
            value: c,
            domain,
        });
    }
    Ok(())
}

/// `W^o(x, c)` for `c ∈ [ĉ, 1]`:
///
/// ```text
/// W^o = -(1/√(2λ)) e⁻¹ R(c) φ_λ(x) + x Φ(c)    x > γ^o
///     = x (1 - c)                              x ≤ γ^o
/// ```
pub fn w_o_eval(model: &Model, x: f64, c: f64) -> Result<Partials> {
    check_c("c", c, model.c_hat(), 1.0, "[c_hat, 1]")?;
    Ok(w_o_unchecked(model, x, c))
}

pub(crate) fn w_o_unchecked(model: &Model, x: f64, c: f64) -> Partials {
    if x <= model.gamma_o() {
        return Partials {
            value: x * (1.0 - c),
            d_dx: 1.0 - c,
            d_dc: -x,
        };
    }
    let s = model.rate();
    let decay = E_INV * (-s * x).exp();
    Partials {
        value: -decay * model.r(c) / s + x * model.phi(c),
        d_dx: decay * model.r(c) + model.phi(c),
        d_dc: -decay * model.r_prime(c) / s + x * model.phi_prime(c),
    }
}

/// `W^o_xx`, zero on the action side and `-√(2λ) e⁻¹ R(c) φ_λ(x)` above `γ^o`.
pub fn w_o_xx(model: &Model, x: f64, c: f64) -> OneSided {
    let g = model.gamma_o();
    if x <= g {
        return OneSided {
            value: 0.0,
            left_limit: x == g,
        };
    }
    let s = model.rate();
    OneSided {
        value: -s * E_INV * model.r(c) * (-s * x).exp(),
        left_limit: false,
    }
}

/// `G(x, c) = x(ĉ - c - Φ(c)) + W^o(x, ĉ)` for `c ∈ [0, ĉ]`, evaluated as
///
/// ```text
/// G = x R(c)                                             x ≤ γ^o
///   = -(1/√(2λ)) e⁻¹ R(ĉ) φ_λ(x) + x (R(c) - R(ĉ))       x > γ^o
/// ```
pub fn payoff_g(model: &Model, x: f64, c: f64) -> Result<Partials> {
    check_c("c", c, 0.0, model.c_hat(), "[0, c_hat]")?;
    Ok(payoff_g_unchecked(model, x, c))
}

pub(crate) fn payoff_g_unchecked(model: &Model, x: f64, c: f64) -> Partials {
    let r = model.r(c);
    let rp = model.r_prime(c);
    if x <= model.gamma_o() {
        return Partials {
            value: x * r,
            d_dx: r,
            d_dc: x * rp,
        };
    }
    let s = model.rate();
    let decay = E_INV * (-s * x).exp();
    let gap = model.r_gap(c);
    Partials {
        value: -decay * model.r_hat() / s - x * gap,
        d_dx: decay * model.r_hat() - gap,
        d_dc: x * rp,
    }
}

/// Obstacle at `y ≥ 0`.
pub fn obstacle_h(model: &Model, y: f64, c: f64) -> Result<ObstacleAt> {
    check_c("c", c, 0.0, model.c_hat(), "[0, c_hat]")?;
    if !(y >= 0.0) || y.is_infinite() {
        return Err(Error::OutOfDomain {
            what: "y",
            value: y,
            domain: "[0, ∞)",
        });
    }
    if y == 0.0 {
        return Ok(ObstacleAt {
            y,
            c,
            h: 0.0,
            derivatives: None,
        });
    }
    Ok(obstacle_log_unchecked(model, y.ln(), c))
}

/// Obstacle at `y = e^t`.
pub fn obstacle_log(model: &Model, t: f64, c: f64) -> Result<ObstacleAt> {
    check_c("c", c, 0.0, model.c_hat(), "[0, c_hat]")?;
    if !t.is_finite() {
        return Err(Error::OutOfDomain {
            what: "ln y",
            value: t,
            domain: "finite",
        });
    }
    Ok(obstacle_log_unchecked(model, t, c))
}

pub(crate) fn obstacle_log_unchecked(model: &Model, t: f64, c: f64) -> ObstacleAt {
    let s = model.rate();
    let kappa = 0.5 / s;
    let lower = t <= -2.0;
    // coefficient of y^{1/2} ln y: R(c) below the kink, R(c) - R(ĉ) above
    let coef = if lower { model.r(c) } else { -model.r_gap(c) };
    let offset = if lower {
        0.0
    } else {
        -E_INV * model.r_hat() / s
    };
    let sqrt_y = (0.5 * t).exp();
    let rp = model.r_prime(c);
    let y_log_y = sqrt_y * t;
    let sf = slope_factor(t);
    let h_yy = -(-1.5 * t).exp() * t * coef / (8.0 * s);
    ObstacleAt {
        y: t.exp(),
        c,
        h: offset + kappa * coef * y_log_y,
        derivatives: Some(ObstacleDerivatives {
            h_y: kappa * coef * sf,
            h_c: kappa * rp * y_log_y,
            h_yc: kappa * rp * sf,
            h_yy,
            h_yy_left_limit: t == -2.0,
        }),
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
    fn fundamental_examples() {
        let m = canonical();
        let f0 = fundamental(&m, 0.0).unwrap();
        assert_eq!((f0.phi_fund, f0.psi_fund, f0.f), (1.0, 1.0, 1.0));
        assert_relative_eq!(
            fundamental(&m, 1.0).unwrap().f,
            7.389_056_098_930_65,
            max_relative = 1e-14
        );
        assert_relative_eq!(
            fundamental(&m, -1.0).unwrap().phi_fund,
            E,
            max_relative = 1e-15
        );
    }

    #[test]
    fn fundamental_guards_overflow() {
        let m = canonical();
        assert!(matches!(
            fundamental(&m, 400.0),
            Err(Error::Overflow { .. })
        ));
        assert!(fundamental(&m, 349.0).unwrap().f.is_finite());
    }

    #[test]
    fn f_inverse_round_trip_and_phi_identity() {
        let m = Model::quadratic(1.3, 0.25).unwrap();
        for i in -50..=50 {
            let x = i as f64 * 0.1;
            let fa = fundamental(&m, x).unwrap();
            assert_relative_eq!(fa.f, fa.psi_fund / fa.phi_fund, max_relative = 1e-14);
            assert_abs_diff_eq!(f_inv(&m, fa.f), x, epsilon = 1e-12);
            // φ_λ(F_λ⁻¹(y)) = y^{-1/2}
            let y = fa.f;
            let back = fundamental(&m, f_inv(&m, y)).unwrap().phi_fund;
            assert_relative_eq!(back, y.powf(-0.5), max_relative = 1e-12);
        }
    }

    #[test]
    fn w_o_examples() {
        let m = canonical();
        for &x in &[-3.0, -1.0, 0.0, 2.5] {
            assert_abs_diff_eq!(w_o_eval(&m, x, 1.0).unwrap().value, 0.0, epsilon = 1e-15);
        }
        assert_abs_diff_eq!(
            w_o_eval(&m, -1.0, 0.8).unwrap().value,
            -0.2,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            w_o_eval(&m, 0.0, 0.7).unwrap().value,
            -0.09 / E,
            epsilon = 1e-15
        );
        assert!(w_o_eval(&m, 0.0, 0.6).is_err());
    }

    #[test]
    fn w_o_is_c1_across_gamma_o() {
        let m = canonical();
        let g = m.gamma_o();
        for &c in &[0.7, 0.8, 0.95] {
            let left = w_o_eval(&m, g, c).unwrap();
            let right = w_o_eval(&m, g + 1e-12, c).unwrap();
            assert_abs_diff_eq!(left.value, right.value, epsilon = 1e-11);
            assert_abs_diff_eq!(left.d_dx, right.d_dx, epsilon = 1e-11);
            assert_abs_diff_eq!(left.d_dc, right.d_dc, epsilon = 1e-11);
        }
    }

    #[test]
    fn payoff_examples() {
        let m = canonical();
        assert_abs_diff_eq!(payoff_g(&m, -2.0, 0.4).unwrap().value, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(
            payoff_g(&m, 0.0, 0.0).unwrap().value,
            -0.09 / E,
            epsilon = 1e-15
        );
        for &c in &[0.0, 0.3, 0.55, 0.7] {
            let left = payoff_g(&m, m.gamma_o(), c).unwrap().value;
            let right = payoff_g(&m, m.gamma_o() + 1e-13, c).unwrap().value;
            assert_abs_diff_eq!(left, right, epsilon = 1e-12);
        }
        assert!(payoff_g(&m, 0.0, 0.75).is_err());
    }

    #[test]
    fn payoff_matches_defining_identity() {
        let m = canonical();
        for i in 0..=40 {
            let x = -4.0 + 0.2 * i as f64;
            for &c in &[0.0, 0.2, 0.4, 0.6, 0.7] {
                let direct =
                    x * (m.c_hat() - c - m.phi(c)) + w_o_eval(&m, x, m.c_hat()).unwrap().value;
                assert_abs_diff_eq!(payoff_g(&m, x, c).unwrap().value, direct, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn payoff_has_linear_growth() {
        let m = canonical();
        let bound = m.r_hat() / (E * m.rate()) + 1.0;
        for i in 0..=200 {
            let x = -50.0 + 0.5 * i as f64;
            for &c in &[0.0, 0.35, 0.7] {
                assert!(payoff_g(&m, x, c).unwrap().value.abs() <= bound * (1.0 + x.abs()));
            }
        }
    }

    #[test]
    fn obstacle_examples() {
        let m = canonical();
        let o = obstacle_h(&m, 0.0, 0.55).unwrap();
        assert_eq!(o.h, 0.0);
        assert!(o.derivatives.is_none());
        let o = obstacle_h(&m, KINK_Y, 0.55).unwrap();
        assert_abs_diff_eq!(o.h_y().unwrap(), 0.0, epsilon = 1e-15);
        assert!(o.derivatives.unwrap().h_yy_left_limit);
        assert_abs_diff_eq!(
            obstacle_h(&m, 1.0, 0.7).unwrap().h,
            -0.09 / E,
            epsilon = 1e-15
        );
        assert!(obstacle_h(&m, -1.0, 0.5).is_err());
        assert!(obstacle_h(&m, 1.0, 0.71).is_err());
    }

    #[test]
    fn obstacle_continuous_at_kink() {
        let m = canonical();
        for &c in &[0.0, 0.2, 0.5, 0.65] {
            let below = obstacle_log(&m, -2.0 - 1e-12, c).unwrap();
            let above = obstacle_log(&m, -2.0 + 1e-12, c).unwrap();
            assert_abs_diff_eq!(below.h, above.h, epsilon = 1e-12);
            assert_abs_diff_eq!(below.h_y().unwrap(), above.h_y().unwrap(), epsilon = 1e-11);
        }
    }

    #[test]
    fn obstacle_matches_payoff_transform() {
        let m = Model::quadratic(0.8, 0.3).unwrap();
        for i in 1..60 {
            let y = 0.01 * (i * i) as f64;
            for &c in &[0.0, 0.3, 0.5] {
                let x = f_inv(&m, y);
                let g = payoff_g(&m, x, c).unwrap().value;
                let phi = fundamental(&m, x).unwrap().phi_fund;
                assert_relative_eq!(
                    obstacle_h(&m, y, c).unwrap().h,
                    g / phi,
                    max_relative = 1e-11,
                    epsilon = 1e-14
                );
            }
        }
    }

    #[test]
    fn obstacle_log_form_stays_finite() {
        let m = canonical();
        let o = obstacle_log(&m, -700.0, 0.55).unwrap();
        assert!(o.h.is_finite());
        assert!(o.h_y().unwrap().is_finite());
        assert!(o.h_y().unwrap() < -1e100);
    }

    fn central<F: Fn(f64) -> f64>(f: F, x: f64, h: f64) -> f64 {
        (f(x + h) - f(x - h)) / (2.0 * h)
    }

    #[test]
    fn obstacle_derivatives_match_finite_differences() {
        let m = canonical();
        let excluded = |y: f64| (y - KINK_Y).abs() < 1e-3 || (y - 1.0).abs() < 1e-3;
        for i in 0..120 {
            let y = 10f64.powf(-3.0 + 4.0 * i as f64 / 119.0);
            if excluded(y) {
                continue;
            }
            for &c in &[0.1, 0.3, 0.5, 0.65] {
                let at = obstacle_h(&m, y, c).unwrap();
                let d = at.derivatives.unwrap();
                let hy = central(|yy| obstacle_h(&m, yy, c).unwrap().h, y, 1e-6 * y);
                let hc = central(|cc| obstacle_h(&m, y, cc).unwrap().h, c, 1e-6);
                let hyy = central(
                    |yy| obstacle_h(&m, yy, c).unwrap().h_y().unwrap(),
                    y,
                    1e-6 * y,
                );
                let hyc = central(|cc| obstacle_h(&m, y, cc).unwrap().h_y().unwrap(), c, 1e-6);
                assert_relative_eq!(d.h_y, hy, max_relative = 1e-6, epsilon = 1e-9);
                assert_relative_eq!(d.h_c, hc, max_relative = 1e-6, epsilon = 1e-9);
                assert_relative_eq!(d.h_yy, hyy, max_relative = 1e-6, epsilon = 1e-7);
                assert_relative_eq!(d.h_yc, hyc, max_relative = 1e-6, epsilon = 1e-9);
            }
        }
    }

    fn log_grid(n: usize) -> impl Iterator<Item = f64> {
        (0..n).map(move |i| 10f64.powf(-8.0 + 10.0 * i as f64 / (n - 1) as f64))
    }

    #[test]
    fn obstacle_geometry_two_boundary_regime() {
        let m = canonical();
        for &c in &[0.45, 0.55, 0.65] {
            for y in log_grid(2000) {
                let d = obstacle_h(&m, y, c).unwrap().derivatives.unwrap();
                if (y - KINK_Y).abs() > 1e-9 {
                    assert!(d.h_y < 0.0, "H decreasing at y={y}, c={c}");
                }
                if !(KINK_Y * (1.0 - 1e-9)..=1.0 + 1e-9).contains(&y) {
                    assert!(d.h_yy > 0.0, "convex at y={y}, c={c}");
                } else if y > KINK_Y * (1.0 + 1e-9) && y < 1.0 - 1e-9 {
                    assert!(d.h_yy < 0.0, "concave at y={y}, c={c}");
                }
            }
        }
    }

    #[test]
    fn obstacle_geometry_single_boundary_regime() {
        let m = canonical();
        for &c in &[0.0, 0.2, 0.35] {
            for y in log_grid(2000) {
                let d = obstacle_h(&m, y, c).unwrap().derivatives.unwrap();
                if y < KINK_Y * (1.0 - 1e-9) {
                    assert!(d.h_y > 0.0);
                } else if y > KINK_Y * (1.0 + 1e-9) {
                    assert!(d.h_y < 0.0);
                }
                if y < 1.0 - 1e-9 {
                    assert!(d.h_yy < 0.0);
                } else if y > 1.0 + 1e-9 {
                    assert!(d.h_yy > 0.0);
                }
            }
            assert_abs_diff_eq!(
                obstacle_h(&m, 1.0, c).unwrap().derivatives.unwrap().h_yy,
                0.0,
                epsilon = 1e-15
            );
        }
    }
}
