//! Joint-distribution ("getting it right") test of the sampler.
//!
//! The marginal-conditional simulator draws parameters straight from the
//! prior. The successive-conditional simulator alternates one posterior
//! sweep with a fresh draw of the data given the parameters. Both target the
//! prior marginal of the parameters, so the means of any statistic must
//! agree up to Monte Carlo error.
//!
//! The successive-conditional side runs as independent replicas. Each one
//! starts from an exact draw of `(theta, y)` and performs a fixed number of
//! sweep/redraw cycles, so a correct kernel leaves every replica's final
//! state exactly prior distributed and the recorded statistics are iid. A
//! single long chain would instead need to traverse the heavy prior tails,
//! which takes far longer than any feasible run.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Fault, Observations, Sweeper};
use crate::dist::std_normal;
use crate::error::{Error, Result};
use crate::model::{fitted_means, ModelParameters, TvpSvModelSpec};
use crate::seed::rng_for;
use crate::stats::{mean, std_dev};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GewekeConfig {
    /// Draws per simulator.
    pub n_draws: usize,
    /// Sweep/redraw cycles per successive-conditional replica.
    pub sweeps_per_draw: usize,
    pub seed: u64,
    pub threshold: f64,
    /// Fraction of statistics that must fall inside the threshold.
    pub min_pass_fraction: f64,
    pub mh_target_acceptance: f64,
    /// Run the centred interweaving move inside each sweep.
    pub interweave: bool,
    #[doc(hidden)]
    pub fault: Fault,
}

impl Default for GewekeConfig {
    fn default() -> Self {
        Self {
            n_draws: 20_000,
            sweeps_per_draw: 40,
            seed: 0,
            threshold: 4.0,
            min_pass_fraction: 0.95,
            mh_target_acceptance: 0.35,
            interweave: true,
            fault: Fault::None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GewekeStatistic {
    pub name: String,
    pub mc_mean: f64,
    pub sc_mean: f64,
    pub mc_se: f64,
    pub sc_se: f64,
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GewekeReport {
    pub threshold: f64,
    pub min_pass_fraction: f64,
    pub n_draws: usize,
    pub statistics: Vec<GewekeStatistic>,
}

impl GewekeReport {
    pub fn flagged(&self) -> Vec<&GewekeStatistic> {
        self.statistics.iter().filter(|s| !(s.z.abs() < self.threshold)).collect()
    }

    pub fn pass_fraction(&self) -> f64 {
        if self.statistics.is_empty() {
            return 1.0;
        }
        1.0 - self.flagged().len() as f64 / self.statistics.len() as f64
    }

    pub fn passed(&self) -> bool {
        self.pass_fraction() >= self.min_pass_fraction
    }

    /// Aligned text table, one statistic per line.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "{:<22} {:>12} {:>12} {:>10} {:>10} {:>8}\n",
            "statistic", "prior", "sampler", "se_prior", "se_sampler", "z"
        );
        for s in &self.statistics {
            let flag = if s.z.abs() < self.threshold { "" } else { "  *" };
            out.push_str(&format!(
                "{:<22} {:>12.5} {:>12.5} {:>10.5} {:>10.5} {:>8.3}{flag}\n",
                s.name, s.mc_mean, s.sc_mean, s.mc_se, s.sc_se, s.z
            ));
        }
        out.push_str(&format!(
            "{} of {} statistics within |z| < {}; {}\n",
            self.statistics.len() - self.flagged().len(),
            self.statistics.len(),
            self.threshold,
            if self.passed() { "PASS" } else { "FAIL" }
        ));
        out
    }
}

fn squash(x: f64) -> f64 {
    x / (1.0 + x.abs())
}

/// The statistic battery. Heavy-tailed quantities enter through bounded
/// transforms so that both simulators have finite-variance estimators.
fn battery(spec: &TvpSvModelSpec, t_len: usize) -> Vec<(String, Box<dyn Fn(&ModelParameters) -> f64 + Send + Sync>)> {
    let mut out: Vec<(String, Box<dyn Fn(&ModelParameters) -> f64 + Send + Sync>)> = Vec::new();
    for j in 0..spec.k {
        out.push((format!("beta0[{j}]"), Box::new(move |p| squash(p.beta0[j]))));
        out.push((format!("beta0[{j}]^2"), Box::new(move |p| squash(p.beta0[j]).powi(2))));
        out.push((format!("|sqrt_v[{j}]|"), Box::new(move |p| squash(p.sqrt_v[j].abs()))));
        out.push((format!("|sqrt_v[{j}]|^2"), Box::new(move |p| squash(p.sqrt_v[j].abs()).powi(2))));
    }
    let probes = [0, t_len / 2, t_len.saturating_sub(1)];
    for t in probes {
        out.push((format!("log_vol[{t}]"), Box::new(move |p| p.log_vol[t])));
        out.push((format!("log_vol[{t}]^2"), Box::new(move |p| p.log_vol[t].powi(2))));
    }
    out.push(("mu_sigma".into(), Box::new(|p| p.mu_sigma)));
    out.push(("rho_sigma".into(), Box::new(|p| p.rho_sigma)));
    out.push(("theta2".into(), Box::new(|p| squash(p.theta2))));
    let sh = spec.shrinkage;
    if sh.learn_a {
        out.push(("a_v".into(), Box::new(|p| p.shrink_v.a)));
        out.push(("a_beta".into(), Box::new(|p| p.shrink_beta.a)));
    }
    if sh.learn_c {
        out.push(("c_v".into(), Box::new(|p| p.shrink_v.c)));
        out.push(("c_beta".into(), Box::new(|p| p.shrink_beta.c)));
    }
    if sh.learn_kappa {
        out.push(("kappa_v".into(), Box::new(|p| squash(p.shrink_v.kappa))));
        out.push(("kappa_beta".into(), Box::new(|p| squash(p.shrink_beta.kappa))));
    }
    out
}

/// Model used by the harness by default: every hyperparameter learned and
/// the volatility block on, with the `a` and `c` hyperpriors moved to
/// `2a, 2c ~ Beta(20, 4)`. Under the wider default hyperpriors the
/// coefficient prior has tails of index near `2a` and a visible share of
/// draws beyond 1e12, where simulated targets can no longer carry the
/// observation noise in double precision and the volatility posterior
/// follows rounding error instead.
pub fn harness_spec(k: usize) -> TvpSvModelSpec {
    let mut spec = TvpSvModelSpec::new(1, k);
    for b in [&mut spec.shrinkage.v, &mut spec.shrinkage.beta] {
        b.a_prior_alpha = 20.0;
        b.a_prior_beta = 4.0;
        b.c_prior_alpha = 20.0;
        b.c_prior_beta = 4.0;
    }
    spec
}

/// `y ~ p(y | theta)`.
pub(crate) fn simulate_targets<R: Rng + ?Sized>(p: &ModelParameters, x: &[Vec<f64>], rng: &mut R) -> Vec<f64> {
    fitted_means(p, x)
        .iter()
        .zip(&p.log_vol)
        .map(|(m, h)| m + (h / 2.0).exp() * std_normal(rng))
        .collect()
}

/// Fixed design: an intercept and `k - 1` iid standard normal columns.
fn design(k: usize, t_len: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = rng_for(seed, &[0]);
    (0..t_len)
        .map(|_| {
            let mut row = vec![1.0];
            row.extend((1..k).map(|_| std_normal(&mut rng)));
            row
        })
        .collect()
}

pub fn getting_it_right(spec: &TvpSvModelSpec, t_len: usize, cfg: &GewekeConfig) -> Result<GewekeReport> {
    spec.validate()?;
    if t_len > 30 || spec.k > 3 {
        return Err(Error::Config(format!(
            "the joint-distribution test is meant for small problems (T <= 30, K <= 3), got T={t_len} K={}",
            spec.k
        )));
    }
    let stats = battery(spec, t_len);
    let mut report = GewekeReport {
        threshold: cfg.threshold,
        min_pass_fraction: cfg.min_pass_fraction,
        n_draws: cfg.n_draws,
        statistics: Vec::new(),
    };
    if cfg.n_draws == 0 || t_len == 0 {
        return Ok(report);
    }
    let x = design(spec.k, t_len, cfg.seed);

    let record = |p: &ModelParameters, cols: &mut Vec<Vec<f64>>| {
        for (c, (_, f)) in cols.iter_mut().zip(&stats) {
            c.push(f(p));
        }
    };

    let marginal = || {
        let mut rng = rng_for(cfg.seed, &[1]);
        let mut cols = vec![Vec::with_capacity(cfg.n_draws); stats.len()];
        for _ in 0..cfg.n_draws {
            let p = ModelParameters::sample_prior(spec, t_len, &mut rng);
            record(&p, &mut cols);
        }
        cols
    };

    let successive = || -> Result<Vec<Vec<f64>>> {
        let finals = (0..cfg.n_draws)
            .into_par_iter()
            .map(|r| {
                let mut rng = rng_for(cfg.seed, &[2, r as u64]);
                let mut p = ModelParameters::sample_prior(spec, t_len, &mut rng);
                let mut obs = Observations::new(simulate_targets(&p, &x, &mut rng), &x);
                let mut sweeper = Sweeper::new(spec, cfg.mh_target_acceptance, cfg.fault);
                sweeper.interweave = cfg.interweave;
                for _ in 0..cfg.sweeps_per_draw {
                    sweeper.sweep(&mut p, Some(&obs), false, &mut rng)?;
                    obs.y = simulate_targets(&p, &x, &mut rng);
                }
                Ok(p)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut cols = vec![Vec::with_capacity(cfg.n_draws); stats.len()];
        for p in &finals {
            record(p, &mut cols);
        }
        Ok(cols)
    };

    let (mc, sc) = rayon::join(marginal, successive);
    let sc = sc?;
    for (i, (name, _)) in stats.iter().enumerate() {
        let mc_mean = mean(&mc[i]);
        let sc_mean = mean(&sc[i]);
        let mc_se = std_dev(&mc[i]) / (mc[i].len() as f64).sqrt();
        let sc_se = std_dev(&sc[i]) / (sc[i].len() as f64).sqrt();
        let z = (mc_mean - sc_mean) / (mc_se * mc_se + sc_se * sc_se).sqrt();
        report.statistics.push(GewekeStatistic {
            name: name.clone(),
            mc_mean,
            sc_mean,
            mc_se,
            sc_se,
            z,
        });
    }
    Ok(report)
}
