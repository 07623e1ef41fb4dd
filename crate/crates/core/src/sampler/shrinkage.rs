//! Updates of the triple-gamma hierarchy for both prior blocks.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dist::{gamma, ln_beta_pdf, ln_f_pdf, ln_gamma_pdf, std_normal, Gig, VAR_FLOOR};
use crate::error::Result;
use crate::model::{ModelParameters, ShrinkageBlockConfig, ShrinkageState, TripleGammaConfig};

/// Random-walk Metropolis step size with Robbins-Monro adaptation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MhTuner {
    pub log_step: f64,
    pub proposed: u64,
    pub accepted: u64,
    adapt_count: u64,
}

impl MhTuner {
    pub fn new(step: f64) -> Self {
        Self {
            log_step: step.ln(),
            proposed: 0,
            accepted: 0,
            adapt_count: 0,
        }
    }

    pub fn step(&self) -> f64 {
        self.log_step.exp()
    }

    /// Records an outcome. During adaptation the step moves toward `target`
    /// and the outcome is not counted in the acceptance rate.
    pub fn record(&mut self, accepted: bool, adapting: Option<f64>) {
        match adapting {
            Some(target) => {
                self.adapt_count += 1;
                let gain = (self.adapt_count as f64).powf(-0.6);
                let hit = if accepted { 1.0 } else { 0.0 };
                self.log_step = (self.log_step + gain * (hit - target)).clamp(-10.0, 3.0);
            }
            None => {
                self.proposed += 1;
                self.accepted += accepted as u64;
            }
        }
    }

    pub fn rate(&self) -> Option<f64> {
        (self.proposed > 0).then(|| self.accepted as f64 / self.proposed as f64)
    }
}

/// Tuners for `a` and `c` in the `v` and `beta0` blocks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShrinkageTuning {
    pub a_v: MhTuner,
    pub c_v: MhTuner,
    pub a_beta: MhTuner,
    pub c_beta: MhTuner,
}

impl ShrinkageTuning {
    pub fn new(cfg: &TripleGammaConfig) -> Self {
        Self {
            a_v: MhTuner::new(cfg.v.a_step),
            c_v: MhTuner::new(cfg.v.c_step),
            a_beta: MhTuner::new(cfg.beta.a_step),
            c_beta: MhTuner::new(cfg.beta.c_step),
        }
    }
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn expit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Log target of `a` on the `logit(2a)` scale, Jacobian included.
fn ln_target_a(a: f64, st: &ShrinkageState, cfg: &ShrinkageBlockConfig, learn_kappa: bool) -> f64 {
    let mut lp: f64 = st
        .tau2
        .iter()
        .zip(&st.lambda)
        .map(|(&t, &l)| ln_gamma_pdf(t, a, a * l / 2.0))
        .sum();
    if learn_kappa {
        lp += ln_f_pdf(st.kappa / 2.0, 2.0 * a, 2.0 * st.c);
    }
    // Beta density of 2a times d(2a)/dx = 2a (1 - 2a).
    lp + ln_beta_pdf(2.0 * a, cfg.a_prior_alpha, cfg.a_prior_beta) + (2.0 * a).ln() + (-2.0 * a).ln_1p()
}

fn ln_target_c(c: f64, st: &ShrinkageState, cfg: &ShrinkageBlockConfig, learn_kappa: bool) -> f64 {
    let mut lp: f64 = st.lambda.iter().map(|&l| ln_gamma_pdf(l, c, c / st.kappa)).sum();
    if learn_kappa {
        lp += ln_f_pdf(st.kappa / 2.0, 2.0 * st.a, 2.0 * c);
    }
    lp + ln_beta_pdf(2.0 * c, cfg.c_prior_alpha, cfg.c_prior_beta) + (2.0 * c).ln() + (-2.0 * c).ln_1p()
}

/// One random-walk step on `logit(2 x)`; returns the new value and whether
/// it was accepted.
fn mh_half_unit<R: Rng + ?Sized, F: Fn(f64) -> f64>(current: f64, step: f64, ln_target: F, rng: &mut R) -> (f64, bool) {
    let x = logit(2.0 * current);
    let prop = expit(x + step * std_normal(rng)) / 2.0;
    if !(prop > 0.0 && prop < 0.5) {
        return (current, false);
    }
    let ln_ratio = ln_target(prop) - ln_target(current);
    let u: f64 = rng.random();
    if ln_ratio.is_finite() && u.ln() < ln_ratio {
        (prop, true)
    } else {
        (current, false)
    }
}

/// Full-conditional updates of one block given its coefficients `theta`.
///
/// Order: `tau2`, `lambda`, `a`, `c`, `kappa`. `kappa` uses the auxiliary
/// representation of the `F(2a, 2c)` prior on `kappa/2 = z`:
/// `d | z ~ G(a + c, 1 + a z / c)` and `z | d ~ GIG(a - K c, c sum(lambda), 2 a d / c)`.
#[allow(clippy::too_many_arguments)]
pub fn update_block<R: Rng + ?Sized>(
    theta: &[f64],
    st: &mut ShrinkageState,
    cfg: &ShrinkageBlockConfig,
    learn: (bool, bool, bool),
    tuner_a: &mut MhTuner,
    tuner_c: &mut MhTuner,
    adapting: Option<f64>,
    rng: &mut R,
) -> Result<()> {
    let k = theta.len();
    for j in 0..k {
        let chi = (theta[j] * theta[j]).max(f64::MIN_POSITIVE);
        st.tau2[j] = Gig::new(st.a - 0.5, chi, st.a * st.lambda[j])?.sample(rng).max(VAR_FLOOR);
    }
    for j in 0..k {
        st.lambda[j] = gamma(st.a + st.c, st.a * st.tau2[j] / 2.0 + st.c / st.kappa, rng);
    }
    let (learn_a, learn_c, learn_kappa) = learn;
    if learn_a {
        let snapshot = st.clone();
        let (a, acc) = mh_half_unit(st.a, tuner_a.step(), |a| ln_target_a(a, &snapshot, cfg, learn_kappa), rng);
        st.a = a;
        tuner_a.record(acc, adapting);
    }
    if learn_c {
        let snapshot = st.clone();
        let (c, acc) = mh_half_unit(st.c, tuner_c.step(), |c| ln_target_c(c, &snapshot, cfg, learn_kappa), rng);
        st.c = c;
        tuner_c.record(acc, adapting);
    }
    if learn_kappa {
        let (a, c) = (st.a, st.c);
        let z = st.kappa / 2.0;
        let d = gamma(a + c, 1.0 + a * z / c, rng);
        let sum_lambda: f64 = st.lambda.iter().sum();
        let z_new = Gig::new(a - k as f64 * c, c * sum_lambda, 2.0 * a * d / c)?.sample(rng);
        st.kappa = (2.0 * z_new).max(VAR_FLOOR);
    }
    Ok(())
}

/// Step four of the sweep: both blocks.
pub fn draw_shrinkage_hierarchy<R: Rng + ?Sized>(
    p: &mut ModelParameters,
    cfg: &TripleGammaConfig,
    tuning: &mut ShrinkageTuning,
    adapting: Option<f64>,
    rng: &mut R,
) -> Result<()> {
    let learn = (cfg.learn_a, cfg.learn_c, cfg.learn_kappa);
    update_block(&p.sqrt_v, &mut p.shrink_v, &cfg.v, learn, &mut tuning.a_v, &mut tuning.c_v, adapting, rng)?;
    update_block(
        &p.beta0,
        &mut p.shrink_beta,
        &cfg.beta,
        learn,
        &mut tuning.a_beta,
        &mut tuning.c_beta,
        adapting,
        rng,
    )
}
