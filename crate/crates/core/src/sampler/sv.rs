//! Stochastic-volatility block: mixture indicators, the log-variance path,
//! and the AR(1) parameters with a non-centred interweaving move.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::Fault;
use crate::dist::{log_chi2_mixture as mix, std_normal, Gig, VAR_FLOOR};
use crate::error::{Error, Result};
use crate::linalg::{sample_dense_canonical, BandedSpd};
use crate::model::SvPriorConfig;

/// Current values of the volatility block.
#[derive(Debug, Clone, PartialEq)]
pub struct SvState {
    pub log_vol: Vec<f64>,
    pub mu: f64,
    pub rho: f64,
    pub theta2: f64,
}

/// Outcome of one update.
#[derive(Debug, Clone, PartialEq)]
pub struct SvDraw {
    pub state: SvState,
    pub rho_accepted: bool,
}

/// Transformed observations `ln r^2` with exact zeros replaced by `1e-8`.
pub fn log_squared(residuals: &[f64]) -> Vec<f64> {
    residuals
        .iter()
        .map(|&r| {
            let r = if r == 0.0 { 1e-8 } else { r };
            (r * r).max(f64::MIN_POSITIVE).ln()
        })
        .collect()
}

/// Draws mixture component indices given the current path.
pub fn draw_indicators<R: Rng + ?Sized>(ystar: &[f64], h: &[f64], rng: &mut R) -> Vec<usize> {
    let mut lw = [0.0; 10];
    ystar
        .iter()
        .zip(h)
        .map(|(&y, &ht)| {
            let e = y - ht;
            let mut max = f64::NEG_INFINITY;
            for i in 0..10 {
                let d = e - mix::MEANS[i];
                lw[i] = mix::WEIGHTS[i].ln() - 0.5 * mix::VARIANCES[i].ln() - d * d / (2.0 * mix::VARIANCES[i]);
                max = max.max(lw[i]);
            }
            let total: f64 = lw.iter().map(|l| (l - max).exp()).sum();
            let mut u = rng.random::<f64>() * total;
            for i in 0..10 {
                u -= (lw[i] - max).exp();
                if u <= 0.0 {
                    return i;
                }
            }
            9
        })
        .collect()
}

/// Prior precision of the demeaned path `g = h - mu`, before `1/theta2`
/// scaling, plus optional per-period observation precisions.
fn path_precision(t_len: usize, rho: f64, theta2: f64, obs_prec: Option<&[f64]>) -> BandedSpd {
    let mut q = BandedSpd::zeros(t_len, 1);
    for t in 0..t_len {
        let d = if t_len == 1 {
            1.0 - rho * rho
        } else if t == 0 || t + 1 == t_len {
            1.0
        } else {
            1.0 + rho * rho
        };
        q.add(t, t, d / theta2);
        if t > 0 {
            q.add(t, t - 1, -rho / theta2);
        }
        if let Some(p) = obs_prec {
            q.add(t, t, p[t]);
        }
    }
    q
}

/// AR(1) sufficient pieces for `g = h - mu`: the stationary start term and
/// the innovations sum of squares.
fn ar_sum_squares(g: &[f64], rho: f64) -> f64 {
    let mut s = (1.0 - rho * rho) * g[0] * g[0];
    for t in 1..g.len() {
        let e = g[t] - rho * g[t - 1];
        s += e * e;
    }
    s
}

fn ln_rho_prior(rho: f64, prior: &SvPriorConfig) -> f64 {
    (prior.rho_beta_a - 1.0) * rho.ln_1p() + (prior.rho_beta_b - 1.0) * (-rho).ln_1p()
}

/// `mu | h, rho, theta2`: Gaussian.
fn draw_mu<R: Rng + ?Sized>(h: &[f64], rho: f64, theta2: f64, prior: &SvPriorConfig, rng: &mut R) -> f64 {
    let one_m = 1.0 - rho;
    let mut prec = (1.0 - rho * rho) / theta2 + 1.0 / prior.mu_prior_var;
    let mut b = (1.0 - rho * rho) * h[0] / theta2 + prior.mu_prior_mean / prior.mu_prior_var;
    for t in 1..h.len() {
        prec += one_m * one_m / theta2;
        b += one_m * (h[t] - rho * h[t - 1]) / theta2;
    }
    b / prec + std_normal(rng) / prec.sqrt()
}

/// `theta2 | h, mu, rho`: `GIG(shape - T/2, S, 2 rate)`.
fn draw_theta2<R: Rng + ?Sized>(g: &[f64], rho: f64, prior: &SvPriorConfig, rng: &mut R) -> Result<f64> {
    let s = ar_sum_squares(g, rho).max(f64::MIN_POSITIVE);
    let p = prior.theta2_gamma_shape - g.len() as f64 / 2.0;
    Ok(Gig::new(p, s, 2.0 * prior.theta2_gamma_rate)?.sample(rng).max(VAR_FLOOR))
}

/// `rho | h, mu, theta2`: independence Metropolis-Hastings from the
/// Gaussian implied by the AR regression; the stationary start term and the
/// Beta prior enter the acceptance ratio.
fn draw_rho<R: Rng + ?Sized>(g: &[f64], rho: f64, theta2: f64, prior: &SvPriorConfig, rng: &mut R) -> (f64, bool) {
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for t in 1..g.len() {
        sxx += g[t - 1] * g[t - 1];
        sxy += g[t] * g[t - 1];
    }
    let ln_rest = |r: f64| {
        ln_rho_prior(r, prior) + 0.5 * (1.0 - r * r).ln() - (1.0 - r * r) * g[0] * g[0] / (2.0 * theta2)
    };
    let prop = if sxx > 0.0 {
        sxy / sxx + (theta2 / sxx).sqrt() * std_normal(rng)
    } else {
        // Single observation: the AR regression is empty, so the proposal
        // is a symmetric random walk and the full target is `ln_rest`.
        rho + 0.1 * std_normal(rng)
    };
    if !(prop.abs() < 1.0) {
        return (rho, false);
    }
    let ln_ratio = ln_rest(prop) - ln_rest(rho);
    let u: f64 = rng.random();
    if u.ln() < ln_ratio {
        (prop, true)
    } else {
        (rho, false)
    }
}

/// Draws the whole volatility block.
///
/// With `residuals = None` the likelihood is dropped: the path is drawn from
/// its AR(1) prior and the interweaving move is skipped.
pub fn draw_stochastic_volatility<R: Rng + ?Sized>(
    current: &SvState,
    residuals: Option<&[f64]>,
    prior: &SvPriorConfig,
    rng: &mut R,
) -> Result<SvDraw> {
    draw_sv_with_fault(current, residuals, prior, Fault::None, rng)
}

pub(crate) fn draw_sv_with_fault<R: Rng + ?Sized>(
    current: &SvState,
    residuals: Option<&[f64]>,
    prior: &SvPriorConfig,
    fault: Fault,
    rng: &mut R,
) -> Result<SvDraw> {
    let t_len = current.log_vol.len();
    let SvState { mu, rho, theta2, .. } = *current;

    // Path.
    let mut mix_obs = None;
    let h: Vec<f64> = match residuals {
        Some(r) => {
            let ystar = log_squared(r);
            let ind = draw_indicators(&ystar, &current.log_vol, rng);
            let obs_prec: Vec<f64> = ind.iter().map(|&i| 1.0 / mix::VARIANCES[i]).collect();
            let q = path_precision(t_len, rho, theta2, Some(&obs_prec));
            let b: Vec<f64> = (0..t_len)
                .map(|t| (ystar[t] - mix::MEANS[ind[t]] - mu) * obs_prec[t])
                .collect();
            let g = q.cholesky_jittered()?.sample_canonical(&b, rng);
            mix_obs = Some((ystar, ind));
            g.iter().map(|v| v + mu).collect()
        }
        None => {
            let q = path_precision(t_len, rho, theta2, None);
            let g = q.cholesky_jittered()?.sample_canonical(&vec![0.0; t_len], rng);
            g.iter().map(|v| v + mu).collect()
        }
    };

    // Centred parameter updates.
    let mu = draw_mu(&h, rho, theta2, prior, rng);
    let g: Vec<f64> = h.iter().map(|v| v - mu).collect();
    let mut theta2 = draw_theta2(&g, rho, prior, rng)?;
    if fault == Fault::InflateVolVariance {
        theta2 *= 1.5;
    }
    let (rho, rho_accepted) = draw_rho(&g, rho, theta2, prior, rng);

    // Non-centred move: regress (ystar - m) on [1, htilde] with weights
    // 1/v^2 and priors mu ~ N(m0, V0), sigma ~ N(0, B).
    let mut state = SvState {
        log_vol: h,
        mu,
        rho,
        theta2,
    };
    if let (Some((ystar, ind)), Some(b_sigma)) = (mix_obs, prior.gaussian_scale_prior_var()) {
        let sigma = theta2.sqrt();
        let htilde: Vec<f64> = state.log_vol.iter().map(|v| (v - mu) / sigma).collect();
        let mut xtx = DMatrix::<f64>::zeros(2, 2);
        let mut xty = DVector::<f64>::zeros(2);
        xtx[(0, 0)] = 1.0 / prior.mu_prior_var;
        xtx[(1, 1)] = 1.0 / b_sigma;
        xty[0] = prior.mu_prior_mean / prior.mu_prior_var;
        for t in 0..t_len {
            let w = 1.0 / mix::VARIANCES[ind[t]];
            let z = ystar[t] - mix::MEANS[ind[t]];
            xtx[(0, 0)] += w;
            xtx[(0, 1)] += w * htilde[t];
            xtx[(1, 1)] += w * htilde[t] * htilde[t];
            xty[0] += w * z;
            xty[1] += w * z * htilde[t];
        }
        xtx[(1, 0)] = xtx[(0, 1)];
        let d = sample_dense_canonical(&xtx, &xty, rng)?;
        let (mu_nc, sigma_nc) = (d[0], d[1]);
        state.log_vol = htilde.iter().map(|v| mu_nc + sigma_nc * v).collect();
        state.mu = mu_nc;
        state.theta2 = (sigma_nc * sigma_nc).max(VAR_FLOOR);
    }
    if state.log_vol.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite log-volatility draw".into()));
    }
    Ok(SvDraw { state, rho_accepted })
}
