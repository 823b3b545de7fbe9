//! Exponents `(alpha, beta, gamma)` of the `L^q -> L^inf` smoothing estimate
//! `|S(t)u0 - S(t)v0|_inf <= C |Omega|^alpha t^-beta |u0 - v0|_q^gamma`.

use crate::error::{invalid, Result};
use crate::math;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// `p < N/theta`
    Subcritical,
    /// `p = N/theta`
    Critical,
    /// `p > N/theta`
    Supercritical,
}

impl Regime {
    pub fn as_str(self) -> &'static str {
        match self {
            Regime::Subcritical => "subcritical",
            Regime::Critical => "critical",
            Regime::Supercritical => "supercritical",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HolderExponents {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub regime: Regime,
}

fn regime(dim: usize, theta: f64, p: f64) -> Regime {
    let crit = dim as f64 / theta;
    if p < crit {
        Regime::Subcritical
    } else if p == crit {
        Regime::Critical
    } else {
        Regime::Supercritical
    }
}

fn check(dim: usize, theta: f64, p: f64) -> Result<()> {
    if dim == 0 {
        return Err(invalid("N", "dimension must be at least 1"));
    }
    if !(theta > 0.0 && theta < 1.0) {
        return Err(invalid("theta", alloc::format!("must lie in ]0,1[, got {theta}")));
    }
    if !(p.is_finite() && p >= 2.0) {
        return Err(invalid("p", alloc::format!("must be finite and >= 2, got {p}")));
    }
    Ok(())
}

/// Exponents for `N`, `theta`, `p >= 2` and `q in [1, inf]`.
///
/// * `p < N/theta`: `gamma = (q/(q+p-2))^(N/(theta p))`, `beta = (1-gamma)/(p-2)`,
///   `alpha = ((N - theta p)/N)(1-gamma)`.
/// * `p > N/theta`: the same with exponent `theta p / N` and `alpha = ((theta p - N)/N)(1-gamma)`.
/// * `p = N/theta`: `(0, 1, q/(q+p-2))`. The supercritical formulas at this `p`
///   give `beta = 1/(q+p-2)` instead, so `beta` jumps across the critical value.
/// * `p = 2`: the limit `(0, N/(2 theta q), 1)`, in every regime.
/// * `q = inf`: `(0, 0, 1)`.
pub fn exponents(dim: usize, theta: f64, p: f64, q: f64) -> Result<HolderExponents> {
    check(dim, theta, p)?;
    if !(q >= 1.0) {
        return Err(invalid("q", alloc::format!("must be >= 1, got {q}")));
    }
    let n = dim as f64;
    let regime = regime(dim, theta, p);
    if q == f64::INFINITY {
        return Ok(HolderExponents {
            alpha: 0.0,
            beta: 0.0,
            gamma: 1.0,
            regime,
        });
    }
    if p == 2.0 {
        return Ok(HolderExponents {
            alpha: 0.0,
            beta: n / (2.0 * theta * q),
            gamma: 1.0,
            regime,
        });
    }
    let base = q / (q + p - 2.0);
    let (alpha, beta, gamma) = match regime {
        Regime::Critical => (0.0, 1.0, base),
        Regime::Subcritical => {
            let g = math::powf(base, n / (theta * p));
            ((n - theta * p) / n * (1.0 - g), (1.0 - g) / (p - 2.0), g)
        }
        Regime::Supercritical => {
            let g = math::powf(base, theta * p / n);
            ((theta * p - n) / n * (1.0 - g), (1.0 - g) / (p - 2.0), g)
        }
    };
    Ok(HolderExponents {
        alpha,
        beta,
        gamma,
        regime,
    })
}

/// `C_{r,p} = (r-1)(p/(p+r-2))^p`.
pub fn c_rp(r: f64, p: f64) -> Result<f64> {
    if !(r.is_finite() && r >= 2.0) {
        return Err(invalid("r", alloc::format!("must be finite and >= 2, got {r}")));
    }
    if !(p.is_finite() && p >= 2.0) {
        return Err(invalid("p", alloc::format!("must be finite and >= 2, got {p}")));
    }
    Ok((r - 1.0) * math::powf(p / (p + r - 2.0), p))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntPCheck {
    pub quadrature: f64,
    pub closed_form: f64,
}

impl IntPCheck {
    pub fn gap(&self) -> f64 {
        (self.quadrature - self.closed_form).abs()
    }
}

/// `int_0^tau P(xi) dxi` with `P(xi) = (N(p-2)/(theta p)) / (tq + (t-xi)(p-2))`, by
/// quadrature and by `(N/(theta p)) ln(t(q+p-2) / (tq + (t-tau)(p-2)))`.
pub fn int_p_check(dim: usize, theta: f64, p: f64, q: f64, t: f64, tau: f64) -> Result<IntPCheck> {
    check(dim, theta, p)?;
    if !(q.is_finite() && q >= 1.0) {
        return Err(invalid("q", alloc::format!("must be finite and >= 1, got {q}")));
    }
    if !(t.is_finite() && t > 0.0) {
        return Err(invalid("t", "must be finite and > 0"));
    }
    if !(tau >= 0.0 && tau < t) {
        return Err(invalid("tau", alloc::format!("must satisfy 0 <= tau < t, got tau={tau}, t={t}")));
    }
    let n = dim as f64;
    let c = n * (p - 2.0) / (theta * p);
    let quadrature = if tau == 0.0 {
        0.0
    } else {
        math::integrate(|x| c / (t * q + (t - x) * (p - 2.0)), 0.0, tau, 16, 16)
    };
    let closed_form = n / (theta * p) * math::ln(t * (q + p - 2.0) / (t * q + (t - tau) * (p - 2.0)));
    Ok(IntPCheck {
        quadrature,
        closed_form,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn critical_triple() {
        let e = exponents(2, 0.5, 4.0, 2.0).unwrap();
        assert_eq!((e.alpha, e.beta, e.gamma, e.regime), (0.0, 1.0, 0.5, Regime::Critical));
    }

    #[test]
    fn p2_limit() {
        let e = exponents(2, 0.5, 2.0, 2.0).unwrap();
        assert_eq!((e.alpha, e.beta, e.gamma), (0.0, 1.0, 1.0));
        let near = exponents(2, 0.5, 2.0 + 1e-7, 2.0).unwrap();
        assert!((near.beta - 1.0).abs() < 1e-6 && (near.gamma - 1.0).abs() < 1e-6 && near.alpha.abs() < 1e-6);
    }

    #[test]
    fn subcritical_example() {
        let e = exponents(2, 0.5, 3.0, 2.0).unwrap();
        let g = libm::pow(2.0 / 3.0, 4.0 / 3.0);
        assert_eq!(e.regime, Regime::Subcritical);
        assert!((e.gamma - g).abs() < 1e-15 && (e.gamma - 0.58238).abs() < 1e-4);
        assert!((e.beta - 0.41762).abs() < 1e-4);
        assert!((e.alpha - 0.104405).abs() < 1e-4);
        // alpha = beta (p-2)(N - theta p)/N
        assert!((e.alpha - e.beta * 1.0 * 0.5 / 2.0).abs() < 1e-12);
    }

    #[test]
    fn gamma_increases_to_one_in_q() {
        let qs = [1.0, 2.0, 5.0, 10.0, 1e2, 1e4];
        let gs: alloc::vec::Vec<f64> = qs.iter().map(|&q| exponents(3, 0.4, 3.5, q).unwrap().gamma).collect();
        assert!(gs.windows(2).all(|w| w[1] > w[0]));
        assert!(1.0 - gs[5] < 1e-3);
        assert_eq!(exponents(3, 0.4, 3.5, f64::INFINITY).unwrap().beta, 0.0);
    }

    #[test]
    fn crp_values() {
        for p in [2.0, 3.0, 7.5] {
            assert_eq!(c_rp(2.0, p).unwrap(), 1.0);
        }
        assert_eq!(c_rp(4.0, 2.0).unwrap(), 0.75);
        assert!((c_rp(3.0, 3.0).unwrap() - 0.84375).abs() < 1e-15);
        assert!(c_rp(1.5, 2.0).is_err());
    }

    #[test]
    fn int_p_examples() {
        let r = int_p_check(2, 0.5, 3.0, 2.0, 1.0, 0.5).unwrap();
        assert!((r.closed_form - 4.0 / 3.0 * libm::log(1.2)).abs() < 1e-15);
        assert!((r.closed_form - 0.24310).abs() < 1e-5);
        assert!(r.gap() < 1e-12);
        let z = int_p_check(2, 0.5, 3.0, 2.0, 1.0, 0.0).unwrap();
        assert_eq!((z.quadrature, z.closed_form), (0.0, 0.0));
        let near = int_p_check(2, 0.5, 2.0 + 1e-6, 2.0, 1.0, 0.9).unwrap();
        assert!(near.quadrature.abs() < 1e-5 && near.closed_form.abs() < 1e-5);
        assert!(int_p_check(2, 0.5, 3.0, 2.0, 1.0, 1.0).is_err());
    }
}
