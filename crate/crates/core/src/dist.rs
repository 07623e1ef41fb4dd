//! Random variate generators and log densities used by the sampler.

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Smallest variance-like quantity the sampler will store.
pub const VAR_FLOOR: f64 = 1e-300;

#[inline]
pub fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// `ln X` for `X ~ Gamma(shape, 1)`, accurate for tiny shapes where `X`
/// itself underflows.
pub fn ln_gamma_variate<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> f64 {
    debug_assert!(shape > 0.0);
    if shape >= 1.0 {
        Gamma::new(shape, 1.0).expect("valid shape").sample(rng).ln()
    } else {
        // X = Y U^{1/shape} with Y ~ Gamma(shape + 1).
        let y = Gamma::new(shape + 1.0, 1.0).expect("valid shape").sample(rng);
        let u: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
        y.ln() + u.ln() / shape
    }
}

/// `Gamma(shape, rate)` draw, floored at [`VAR_FLOOR`].
pub fn gamma<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> f64 {
    (ln_gamma_variate(shape, rng) - rate.ln()).exp().max(VAR_FLOOR)
}

pub fn beta<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    let x = ln_gamma_variate(a, rng);
    let y = ln_gamma_variate(b, rng);
    // x/(x+y) in log space.
    let m = x.max(y);
    let r = (x - m).exp() / ((x - m).exp() + (y - m).exp());
    r.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

pub fn ln_gamma_pdf(x: f64, shape: f64, rate: f64) -> f64 {
    if x <= 0.0 {
        return f64::NEG_INFINITY;
    }
    shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * x.ln() - rate * x
}

pub fn ln_beta_pdf(x: f64, a: f64, b: f64) -> f64 {
    if !(x > 0.0 && x < 1.0) {
        return f64::NEG_INFINITY;
    }
    ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + (a - 1.0) * x.ln() + (b - 1.0) * (-x).ln_1p()
}

/// Log density of the F distribution with `d1`, `d2` degrees of freedom.
pub fn ln_f_pdf(x: f64, d1: f64, d2: f64) -> f64 {
    if x <= 0.0 {
        return f64::NEG_INFINITY;
    }
    let h1 = d1 / 2.0;
    let h2 = d2 / 2.0;
    ln_gamma(h1 + h2) - ln_gamma(h1) - ln_gamma(h2) + h1 * (d1 / d2).ln() + (h1 - 1.0) * x.ln()
        - (h1 + h2) * (d1 * x / d2).ln_1p()
}

pub fn ln_normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * ((2.0 * std::f64::consts::PI * var).ln() + (x - mean).powi(2) / var)
}

/// F-distributed draw via the ratio of scaled gammas.
pub fn f_variate<R: Rng + ?Sized>(d1: f64, d2: f64, rng: &mut R) -> f64 {
    let a = ln_gamma_variate(d1 / 2.0, rng);
    let b = ln_gamma_variate(d2 / 2.0, rng);
    ((a - b) + (d2 / d1).ln()).exp().max(VAR_FLOOR)
}

/// Generalised inverse Gaussian with density proportional to
/// `x^(p-1) exp(-(chi/x + psi*x)/2)`, `x > 0`.
///
/// Uses the ratio-of-uniforms generators of Hörmann and Leydold (2014):
/// mode-shifted ROU for `|p| > 2` or `omega > 3`, plain ROU in the
/// intermediate region and a three-piece hat for small `omega` and `|p| < 1`.
/// Exact zero `chi` (resp. `psi`) reduces to the Gamma (resp. inverse Gamma)
/// special case.
#[derive(Debug, Clone, Copy)]
pub struct Gig {
    p: f64,
    chi: f64,
    psi: f64,
}

impl Gig {
    pub fn new(p: f64, chi: f64, psi: f64) -> Result<Self> {
        let bad = !p.is_finite()
            || !(chi >= 0.0)
            || !(psi >= 0.0)
            || !chi.is_finite()
            || !psi.is_finite()
            || (chi == 0.0 && p <= 0.0)
            || (psi == 0.0 && p >= 0.0);
        if bad {
            return Err(Error::param(format!(
                "invalid GIG parameters p={p}, chi={chi}, psi={psi}"
            )));
        }
        Ok(Self { p, chi, psi })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let Gig { p, chi, psi } = *self;
        if chi == 0.0 {
            return gamma(p, psi / 2.0, rng);
        }
        if psi == 0.0 {
            return (1.0 / gamma(-p, chi / 2.0, rng)).max(VAR_FLOOR);
        }
        let lambda = p.abs();
        let ln_omega = 0.5 * (chi.ln() + psi.ln());
        if 2.0 * lambda * ln_omega < -80.0 {
            // Relative error of the limit law is O(omega^(2 lambda)).
            return if p > 0.0 {
                gamma(p, psi / 2.0, rng)
            } else {
                (1.0 / gamma(-p, chi / 2.0, rng)).max(VAR_FLOOR)
            };
        }
        let ln_alpha = 0.5 * (chi.ln() - psi.ln());
        if ln_omega < -230.0 {
            let y = log_plateau(lambda, ln_omega, rng);
            let ln_out = if p < 0.0 { ln_alpha - y } else { ln_alpha + y };
            return ln_out.exp().max(VAR_FLOOR);
        }
        let omega = ln_omega.exp();
        let alpha = ln_alpha.exp();
        let x = if lambda > 2.0 || omega > 3.0 {
            rou_shift(lambda, omega, rng)
        } else if lambda >= 1.0 - 2.25 * omega * omega || omega > 0.2 {
            rou_noshift(lambda, omega, rng)
        } else {
            concave_hat(lambda, omega, rng)
        };
        let out = if p < 0.0 { alpha / x } else { alpha * x };
        out.max(VAR_FLOOR)
    }
}

fn gig_mode(lambda: f64, omega: f64) -> f64 {
    if lambda >= 1.0 {
        (((lambda - 1.0).powi(2) + omega * omega).sqrt() + (lambda - 1.0)) / omega
    } else {
        omega / (((1.0 - lambda).powi(2) + omega * omega).sqrt() + (1.0 - lambda))
    }
}

fn rou_noshift<R: Rng + ?Sized>(lambda: f64, omega: f64, rng: &mut R) -> f64 {
    let t = 0.5 * (lambda - 1.0);
    let s = 0.25 * omega;
    let xm = gig_mode(lambda, omega);
    let nc = t * xm.ln() - s * (xm + 1.0 / xm);
    let ym = ((lambda + 1.0) + ((lambda + 1.0).powi(2) + omega * omega).sqrt()) / omega;
    let um = (0.5 * (lambda + 1.0) * ym.ln() - s * (ym + 1.0 / ym) - nc).exp();
    loop {
        let u = um * rng.random::<f64>();
        let v: f64 = rng.random();
        let x = u / v;
        if !(x.is_finite() && x > 0.0) {
            continue;
        }
        if v.ln() <= t * x.ln() - s * (x + 1.0 / x) - nc {
            return x;
        }
    }
}

fn rou_shift<R: Rng + ?Sized>(lambda: f64, omega: f64, rng: &mut R) -> f64 {
    let t = 0.5 * (lambda - 1.0);
    let s = 0.25 * omega;
    let xm = gig_mode(lambda, omega);
    let nc = t * xm.ln() - s * (xm + 1.0 / xm);

    // Roots of the cubic bounding the minimal rectangle.
    let a = -(2.0 * (lambda + 1.0) / omega + xm);
    let b = 2.0 * (lambda - 1.0) * xm / omega - 1.0;
    let c = xm;
    let p = b - a * a / 3.0;
    let q = 2.0 * a * a * a / 27.0 - a * b / 3.0 + c;
    let fi = (-q / (2.0 * (-(p * p * p) / 27.0).sqrt())).clamp(-1.0, 1.0).acos();
    let fak = 2.0 * (-p / 3.0).sqrt();
    let y1 = fak * (fi / 3.0).cos() - a / 3.0;
    let y2 = fak * (fi / 3.0 + 4.0 / 3.0 * std::f64::consts::PI).cos() - a / 3.0;

    let uplus = (y1 - xm) * (t * y1.ln() - s * (y1 + 1.0 / y1) - nc).exp();
    let uminus = (y2 - xm) * (t * y2.ln() - s * (y2 + 1.0 / y2) - nc).exp();
    loop {
        let u = uminus + rng.random::<f64>() * (uplus - uminus);
        let v: f64 = rng.random();
        let x = u / v + xm;
        if !(x.is_finite() && x > 0.0) {
            continue;
        }
        if v.ln() <= t * x.ln() - s * (x + 1.0 / x) - nc {
            return x;
        }
    }
}

/// Draws `y = ln x` for `x ~ GIG(lambda, omega, omega)` when `omega` is too
/// small to represent. The log density `lambda y - omega cosh(y)` is flat up
/// to `exp(lambda y)` on `|y| <= L = ln(2 / omega)` and falls off doubly
/// exponentially outside, so the hat is `exp(lambda y)` on the plateau with
/// exponential tails.
fn log_plateau<R: Rng + ?Sized>(lambda: f64, ln_omega: f64, rng: &mut R) -> f64 {
    debug_assert!((0.0..1.0).contains(&lambda));
    let l = std::f64::consts::LN_2 - ln_omega;
    // Masses with the common factor exp(lambda L) removed.
    let m_mid = if lambda > 0.0 { -(-2.0 * lambda * l).exp_m1() / lambda } else { 2.0 * l };
    let m_right = (-1.0f64).exp() / (1.0 - lambda);
    let m_left = (-2.0 * lambda * l - 1.0).exp() / (1.0 + lambda);
    let total = m_mid + m_right + m_left;
    loop {
        let v = total * rng.random::<f64>();
        let (y, ln_hat);
        if v < m_mid {
            let w = rng.random::<f64>();
            y = if lambda > 0.0 {
                // Inverse CDF of exp(lambda y) on [-L, L].
                l + ((1.0 - w) * (-2.0 * lambda * l).exp_m1()).ln_1p() / lambda
            } else {
                l * (2.0 * w - 1.0)
            };
            ln_hat = lambda * (y - l);
        } else if v < m_mid + m_right {
            let u = -rng.random::<f64>().ln() / (1.0 - lambda);
            y = l + u;
            ln_hat = -1.0 - (1.0 - lambda) * u;
        } else {
            let u = -rng.random::<f64>().ln() / (1.0 + lambda);
            y = -l - u;
            ln_hat = -2.0 * lambda * l - 1.0 - (1.0 + lambda) * u;
        }
        // omega cosh(y) = (exp(ln_omega + y) + exp(ln_omega - y)) / 2.
        let ocosh = 0.5 * ((ln_omega + y).exp() + (ln_omega - y).exp());
        let ln_target = lambda * (y - l) - ocosh;
        if rng.random::<f64>().ln() <= ln_target - ln_hat {
            return y;
        }
    }
}

fn concave_hat<R: Rng + ?Sized>(lambda: f64, omega: f64, rng: &mut R) -> f64 {
    debug_assert!(lambda < 1.0 && omega <= 1.0);
    let xm = gig_mode(lambda, omega);
    let x0 = omega / (1.0 - lambda);
    let k0 = ((lambda - 1.0) * xm.ln() - 0.5 * omega * (xm + 1.0 / xm)).exp();
    let a0 = k0 * x0;
    let (k1, a1, k2, a2);
    if x0 >= 2.0 / omega {
        k1 = 0.0;
        a1 = 0.0;
        k2 = x0.powf(lambda - 1.0);
        a2 = k2 * 2.0 * (-omega * x0 / 2.0).exp() / omega;
    } else {
        k1 = (-omega).exp();
        a1 = if lambda == 0.0 {
            k1 * (2f64.ln() - 2.0 * omega.ln())
        } else {
            k1 / lambda * ((2.0 / omega).powf(lambda) - x0.powf(lambda))
        };
        k2 = (2.0 / omega).powf(lambda - 1.0);
        a2 = k2 * 2.0 * (-1f64).exp() / omega;
    }
    let total = a0 + a1 + a2;
    loop {
        let mut v = total * rng.random::<f64>();
        let (x, hx);
        if v <= a0 {
            x = x0 * v / a0;
            hx = k0;
        } else {
            v -= a0;
            if v <= a1 {
                if lambda == 0.0 {
                    x = omega * (omega.exp() * v).exp();
                    hx = k1 / x;
                } else {
                    x = (x0.powf(lambda) + lambda / k1 * v).powf(1.0 / lambda);
                    hx = k1 * x.powf(lambda - 1.0);
                }
            } else {
                v -= a1;
                let a = x0.max(2.0 / omega);
                x = -2.0 / omega * ((-omega / 2.0 * a).exp() - omega / (2.0 * k2) * v).ln();
                hx = k2 * (-omega / 2.0 * x).exp();
            }
        }
        if !(x.is_finite() && x > 0.0) {
            continue;
        }
        let u = rng.random::<f64>() * hx;
        if u.ln() <= (lambda - 1.0) * x.ln() - omega / 2.0 * (x + 1.0 / x) {
            return x;
        }
    }
}

/// Ten-component normal mixture approximating the law of `ln(e^2)`,
/// `e ~ N(0, 1)` (Omori, Chib, Shephard and Nakajima, 2007).
pub mod log_chi2_mixture {
    pub const WEIGHTS: [f64; 10] = [
        0.00609, 0.04775, 0.13057, 0.20674, 0.22715, 0.18842, 0.12047, 0.05591, 0.01575, 0.00115,
    ];
    pub const MEANS: [f64; 10] = [
        1.92677, 1.34744, 0.73504, 0.02266, -0.85173, -1.97278, -3.46788, -5.55246, -8.68384,
        -14.65000,
    ];
    pub const VARIANCES: [f64; 10] = [
        0.11265, 0.17788, 0.26768, 0.40611, 0.62699, 0.98583, 1.57469, 2.54498, 4.16591, 7.33342,
    ];
}
