//! Problem parameters: the discount rate, the running cost factor `Φ`, and the
//! critical inventory levels derived from them.
//!
//! The running cost factor must be `C²`, decreasing and strictly convex on
//! `[0, 1]` with `Φ(1) = 0`. Two derived functions drive everything else:
//!
//! ```text
//! R(c) = 1 - c - Φ(c)          k(c) = λ (1 + Φ'(c))
//! ```
//!
//! `c_o` is the interior root of `R`, `ĉ` the root of `k` (the peak of `R`).

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::roots::bisect;

/// A running cost factor `Φ` on `[0, 1]`.
pub trait CostFactor: Send + Sync + fmt::Debug {
    fn phi(&self, c: f64) -> f64;
    fn phi_prime(&self, c: f64) -> f64;
    fn phi_second(&self, c: f64) -> f64;

    /// `R(c_hat) - R(c)`; implementors with a closed form should override
    /// this since the plain difference loses all precision as `c → c_hat`.
    fn r_gap(&self, c: f64, c_hat: f64) -> f64 {
        let r = |c: f64| 1.0 - c - self.phi(c);
        r(c_hat) - r(c)
    }

    /// Coefficient `a` when this is the quadratic family.
    fn quadratic_coefficient(&self) -> Option<f64> {
        None
    }
}

/// `Φ(c) = a(1-c) + (1-c)²`, for which `R(c) = (1-c)(c-a)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticCost {
    pub a: f64,
}

impl CostFactor for QuadraticCost {
    fn phi(&self, c: f64) -> f64 {
        let d = 1.0 - c;
        self.a * d + d * d
    }

    fn phi_prime(&self, c: f64) -> f64 {
        -self.a - 2.0 * (1.0 - c)
    }

    fn phi_second(&self, _c: f64) -> f64 {
        2.0
    }

    fn r_gap(&self, c: f64, c_hat: f64) -> f64 {
        let d = c - c_hat;
        d * d
    }

    fn quadratic_coefficient(&self) -> Option<f64> {
        Some(self.a)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhiValues {
    pub phi: f64,
    pub phi_prime: f64,
    pub phi_second: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunningTerms {
    pub r: f64,
    pub k: f64,
}

/// Immutable problem description with its critical levels precomputed.
#[derive(Debug, Clone)]
pub struct Model {
    lambda: f64,
    rate: f64,
    cost: Arc<dyn CostFactor>,
    c_hat: f64,
    c_o: f64,
    r_hat: f64,
    gamma_o: f64,
}

const ROOT_TOL: f64 = 1e-12;

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::InvalidParameter {
            name: "lambda",
            value: lambda,
            reason: "discount rate must be positive and finite",
        });
    }
    Ok(())
}

fn check_unit(what: &'static str, c: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&c) {
        return Err(Error::OutOfDomain {
            what,
            value: c,
            domain: "[0, 1]",
        });
    }
    Ok(())
}

impl Model {
    /// Quadratic family `Φ(c) = a(1-c) + (1-c)²` with `a ∈ (0, 1)`.
    ///
    /// Closed forms: `c_o = a`, `ĉ = (1+a)/2`, `R(ĉ) = (1-a)²/4`.
    pub fn quadratic(lambda: f64, a: f64) -> Result<Self> {
        check_lambda(lambda)?;
        if !(a > 0.0 && a < 1.0) {
            return Err(Error::InvalidParameter {
                name: "a",
                value: a,
                reason: "need 0 < a < 1 so that c_o and c_hat are interior",
            });
        }
        let model = Model {
            lambda,
            rate: (2.0 * lambda).sqrt(),
            cost: Arc::new(QuadraticCost { a }),
            c_hat: 0.5 * (1.0 + a),
            c_o: a,
            r_hat: 0.25 * (1.0 - a) * (1.0 - a),
            gamma_o: -1.0 / (2.0 * lambda).sqrt(),
        };
        model.validate()?;
        Ok(model)
    }

    /// User-supplied `Φ`; `ĉ` and `c_o` are located by bisection.
    pub fn with_cost_factor(lambda: f64, cost: Arc<dyn CostFactor>) -> Result<Self> {
        check_lambda(lambda)?;
        let phi1 = cost.phi(1.0);
        if phi1.abs() > 1e-12 {
            return Err(Error::InvalidParameter {
                name: "phi(1)",
                value: phi1,
                reason: "the running cost factor must vanish at c = 1",
            });
        }
        let k = |c: f64| 1.0 + cost.phi_prime(c);
        if !(k(0.0) < 0.0 && k(1.0) > 0.0) {
            return Err(Error::InvalidParameter {
                name: "phi'",
                value: cost.phi_prime(0.0),
                reason: "need phi'(0) < -1 < phi'(1) so that c_hat is interior",
            });
        }
        let c_hat = bisect("c_hat", k, 0.0, 1.0, ROOT_TOL)?;
        let r = |c: f64| 1.0 - c - cost.phi(c);
        if !(r(0.0) < 0.0) {
            return Err(Error::InvalidParameter {
                name: "R(0)",
                value: r(0.0),
                reason: "c_o must lie in (0, 1); the degenerate family is unsupported",
            });
        }
        let c_o = bisect("c_o", r, 0.0, c_hat, ROOT_TOL)?;
        let model = Model {
            lambda,
            rate: (2.0 * lambda).sqrt(),
            r_hat: r(c_hat),
            cost,
            c_hat,
            c_o,
            gamma_o: -1.0 / (2.0 * lambda).sqrt(),
        };
        model.validate()?;
        Ok(model)
    }

    fn validate(&self) -> Result<()> {
        let ok = 0.0 < self.c_o
            && self.c_o < self.c_hat
            && self.c_hat < 1.0
            && self.r_hat > 0.0
            && self.k(self.c_hat).abs() < 1e-12 * self.lambda.max(1.0)
            && self.r(self.c_o).abs() < 1e-12;
        if !ok {
            return Err(Error::InvalidParameter {
                name: "cost factor",
                value: self.c_hat,
                reason: "critical levels violate 0 < c_o < c_hat < 1 with R(c_o) = k(c_hat) = 0",
            });
        }
        Ok(())
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// `√(2λ)`, the exponent of the fundamental solutions.
    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn a(&self) -> Option<f64> {
        self.cost.quadratic_coefficient()
    }

    pub fn c_hat(&self) -> f64 {
        self.c_hat
    }

    pub fn c_o(&self) -> f64 {
        self.c_o
    }

    pub fn r_hat(&self) -> f64 {
        self.r_hat
    }

    pub fn gamma_o(&self) -> f64 {
        self.gamma_o
    }

    pub fn cost_factor(&self) -> &Arc<dyn CostFactor> {
        &self.cost
    }

    /// `Φ(c)` without domain checks.
    #[inline]
    pub fn phi(&self, c: f64) -> f64 {
        self.cost.phi(c)
    }

    #[inline]
    pub fn phi_prime(&self, c: f64) -> f64 {
        self.cost.phi_prime(c)
    }

    #[inline]
    pub fn r(&self, c: f64) -> f64 {
        1.0 - c - self.cost.phi(c)
    }

    #[inline]
    pub fn r_prime(&self, c: f64) -> f64 {
        -1.0 - self.cost.phi_prime(c)
    }

    /// `R(ĉ) - R(c) ≥ 0`, evaluated without cancellation where possible.
    #[inline]
    pub fn r_gap(&self, c: f64) -> f64 {
        self.cost.r_gap(c, self.c_hat)
    }

    #[inline]
    pub fn k(&self, c: f64) -> f64 {
        self.lambda * (1.0 + self.cost.phi_prime(c))
    }

    pub fn phi_eval(&self, c: f64) -> Result<PhiValues> {
        check_unit("c", c)?;
        Ok(PhiValues {
            phi: self.cost.phi(c),
            phi_prime: self.cost.phi_prime(c),
            phi_second: self.cost.phi_second(c),
        })
    }

    pub fn running_terms(&self, c: f64) -> Result<RunningTerms> {
        check_unit("c", c)?;
        Ok(RunningTerms {
            r: self.r(c),
            k: self.k(c),
        })
    }

    /// A constant `K` with `|W(x, c)| ≤ K (1 + |x|)` on `ℝ × [0, 1]`.
    ///
    /// Any admissible cost is bounded by `(Φ(0) + 1) E∫ λ e^{-λs} |x + B_s| ds`
    /// and the integral is at most `|x| + 1/√(2λ)`.
    pub fn growth_constant(&self) -> f64 {
        (self.cost.phi(0.0) + 1.0) * (1.0f64).max(1.0 / self.rate)
    }
}
