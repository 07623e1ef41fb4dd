//! Gibbs sampler for the TVP-SV regression.
//!
//! One sweep updates, in order: the normalised states, `(beta0, sqrt_v)`,
//! the centred interweaving move, the shrinkage hierarchy, and the
//! volatility block.

mod asis;
mod draws;
mod geweke;
mod regression;
mod shrinkage;
mod states;
mod sv;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use asis::asis_interweave;
pub use draws::{AcceptanceRates, PosteriorDraws};
pub use geweke::{getting_it_right, harness_spec, GewekeConfig, GewekeReport, GewekeStatistic};
pub use regression::draw_beta0_and_scales;
pub use shrinkage::{draw_shrinkage_hierarchy, update_block, MhTuner, ShrinkageTuning};
pub use states::draw_states;
pub use sv::{draw_indicators, draw_stochastic_volatility, log_squared, SvDraw, SvState};

use crate::dataset::RegressionDataset;
use crate::error::{Error, Result};
use crate::model::{fitted_means, ModelParameters, TvpSvModelSpec};
use crate::seed::ChainRng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    /// Post burn-in iterations; `n_draws / thin` are stored.
    pub n_draws: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    pub mh_target_acceptance: f64,
    /// Drop the likelihood from every step and sample the prior.
    pub prior_only: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            n_draws: 30_000,
            burn_in: 30_000,
            thin: 10,
            seed: 0,
            mh_target_acceptance: 0.35,
            prior_only: false,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_draws == 0 || self.thin == 0 {
            return Err(Error::Config(format!(
                "n_draws and thin must be positive, got n_draws={} thin={}",
                self.n_draws, self.thin
            )));
        }
        if !(self.mh_target_acceptance > 0.0 && self.mh_target_acceptance < 1.0) {
            return Err(Error::Config(format!(
                "mh_target_acceptance must lie in (0, 1), got {}",
                self.mh_target_acceptance
            )));
        }
        Ok(())
    }

    pub fn retained(&self) -> usize {
        self.n_draws / self.thin
    }
}

/// Targets and regressors a sweep conditions on.
#[derive(Debug, Clone)]
pub struct Observations<'a> {
    pub y: Vec<f64>,
    pub x: &'a [Vec<f64>],
}

impl<'a> Observations<'a> {
    pub fn new(y: Vec<f64>, x: &'a [Vec<f64>]) -> Self {
        assert_eq!(y.len(), x.len(), "targets and regressors disagree in length");
        Self { y, x }
    }

    /// All rows of `data` must carry a target.
    pub fn from_dataset(data: &'a RegressionDataset) -> Result<Self> {
        if let Some(i) = data.targets.iter().position(|t| t.is_none()) {
            return Err(Error::input(format!(
                "row {i} ({}) has no target; estimate on the training rows only",
                data.origins[i]
            )));
        }
        Ok(Self::new(data.y(), &data.regressors))
    }
}

/// Deliberate sampler defects used to check that the correctness harness
/// can fail.
#[doc(hidden)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Fault {
    #[default]
    None,
    /// Multiplies every drawn log-volatility innovation variance by 1.5.
    InflateVolVariance,
}

/// Mutable state carried across sweeps besides the parameters.
#[derive(Debug, Clone)]
pub(crate) struct Sweeper<'s> {
    spec: &'s TvpSvModelSpec,
    target: f64,
    pub(crate) tuning: ShrinkageTuning,
    pub(crate) rho_proposed: u64,
    pub(crate) rho_accepted: u64,
    pub(crate) interweave: bool,
    fault: Fault,
}

impl<'s> Sweeper<'s> {
    pub(crate) fn new(spec: &'s TvpSvModelSpec, target: f64, fault: Fault) -> Self {
        Self {
            spec,
            target,
            tuning: ShrinkageTuning::new(&spec.shrinkage),
            rho_proposed: 0,
            rho_accepted: 0,
            interweave: true,
            fault,
        }
    }

    /// One full sweep. `obs = None` samples the prior.
    pub(crate) fn sweep<R: Rng + ?Sized>(
        &mut self,
        p: &mut ModelParameters,
        obs: Option<&Observations>,
        adapting: bool,
        rng: &mut R,
    ) -> Result<()> {
        p.states_tilde = draw_states(p, obs, rng)?;

        let (beta0, sqrt_v) = draw_beta0_and_scales(p, obs, rng)?;
        p.beta0 = beta0;
        p.sqrt_v = sqrt_v;

        if self.interweave {
            asis_interweave(p, rng)?;
        }

        let adapt = adapting.then_some(self.target);
        draw_shrinkage_hierarchy(p, &self.spec.shrinkage, &mut self.tuning, adapt, rng)?;

        let resid: Option<Vec<f64>> = obs.map(|o| {
            let m = fitted_means(p, o.x);
            o.y.iter().zip(&m).map(|(y, m)| y - m).collect()
        });
        let cur = SvState {
            log_vol: std::mem::take(&mut p.log_vol),
            mu: p.mu_sigma,
            rho: p.rho_sigma,
            theta2: p.theta2,
        };
        let d = sv::draw_sv_with_fault(&cur, resid.as_deref(), &self.spec.sv, self.fault, rng)?;
        p.log_vol = d.state.log_vol;
        p.mu_sigma = d.state.mu;
        p.rho_sigma = d.state.rho;
        p.theta2 = d.state.theta2;
        if !adapting {
            self.rho_proposed += 1;
            self.rho_accepted += d.rho_accepted as u64;
        }
        Ok(())
    }
}

fn check_finite(p: &ModelParameters, iter: usize) -> Result<()> {
    let bad = |v: &[f64]| v.iter().any(|x| !x.is_finite());
    if bad(&p.beta0) || bad(&p.sqrt_v) || bad(&p.log_vol) || bad(&p.states_tilde) || !p.theta2.is_finite() {
        return Err(Error::Numerical(format!(
            "sampler diverged at iteration {iter}: beta0={:?} sqrt_v={:?} mu={} rho={} theta2={}",
            p.beta0, p.sqrt_v, p.mu_sigma, p.rho_sigma, p.theta2
        )));
    }
    Ok(())
}

/// Runs one chain: `burn_in` adapting sweeps, then `n_draws` sweeps of which
/// every `thin`-th is stored.
pub fn run_chain(spec: &TvpSvModelSpec, data: &RegressionDataset, cfg: &SamplerConfig) -> Result<PosteriorDraws> {
    spec.validate()?;
    cfg.validate()?;
    data.validate()?;
    if data.is_empty() {
        return Err(Error::input("cannot estimate on an empty dataset"));
    }
    if data.k() != spec.k {
        return Err(Error::shape(format!("dataset has K={}, model spec K={}", data.k(), spec.k)));
    }
    let obs = Observations::from_dataset(data)?;
    let mut rng = <ChainRng as rand::SeedableRng>::seed_from_u64(cfg.seed);
    let mut p = ModelParameters::initial(spec, &obs.y);
    let mut sweeper = Sweeper::new(spec, cfg.mh_target_acceptance, Fault::None);
    let lik = (!cfg.prior_only).then_some(&obs);

    for it in 0..cfg.burn_in {
        sweeper.sweep(&mut p, lik, true, &mut rng)?;
        check_finite(&p, it)?;
    }
    let mut draws = Vec::with_capacity(cfg.retained());
    for it in 0..cfg.n_draws {
        sweeper.sweep(&mut p, lik, false, &mut rng)?;
        check_finite(&p, cfg.burn_in + it)?;
        if (it + 1) % cfg.thin == 0 {
            draws.push(p.clone());
        }
    }
    Ok(PosteriorDraws {
        spec: *spec,
        config: *cfg,
        columns: data.columns.clone(),
        first_origin: data.origins.first().copied(),
        last_origin: data.origins.last().copied(),
        draws,
        acceptance: AcceptanceRates::from_sweeper(&sweeper),
    })
}
