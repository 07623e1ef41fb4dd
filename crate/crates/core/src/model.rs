//! The TVP-SV regression, its prior hierarchy and parameter containers.
//!
//! Observation equation, non-centred form:
//!
//! ```text
//! y[t] = x[t]' beta0 + sum_j x[t,j] sqrt_v[j] btilde[t,j] + e[t],  e[t] ~ N(0, exp(h[t]))
//! btilde[t] = btilde[t-1] + nu[t],  nu[t] ~ N(0, I),  btilde[0] = 0
//! h[t] = mu + rho (h[t-1] - mu) + w[t],  w[t] ~ N(0, theta2)
//! ```
//!
//! Rows `t = 1..T` are the observations; `btilde[0] = 0` is the pre-sample
//! anchor and is not stored. The log-variance path starts from its stationary
//! law at the first observation, which is the law obtained by integrating out
//! a stationary pre-sample value.
//!
//! Each `sqrt_v[j]` and `beta0[j]` carries a triple-gamma prior:
//! `theta ~ N(0, tau2)`, `tau2 ~ G(a, a lambda / 2)`, `lambda ~ G(c, c / kappa)`,
//! with optional hyperpriors `2a ~ Beta`, `2c ~ Beta`, `kappa/2 ~ F(2a, 2c)`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::RegressionDataset;
use crate::dist::{beta, f_variate, gamma, ln_normal_pdf, std_normal};
use crate::error::{Error, Result};

/// Priors for the log-volatility process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvPriorConfig {
    pub mu_prior_mean: f64,
    pub mu_prior_var: f64,
    /// `(rho + 1) / 2 ~ Beta(rho_beta_a, rho_beta_b)`.
    pub rho_beta_a: f64,
    pub rho_beta_b: f64,
    /// `theta2 ~ Gamma(shape, rate)`.
    pub theta2_gamma_shape: f64,
    pub theta2_gamma_rate: f64,
}

impl Default for SvPriorConfig {
    fn default() -> Self {
        Self {
            mu_prior_mean: 0.0,
            mu_prior_var: 100.0,
            rho_beta_a: 5.0,
            rho_beta_b: 1.5,
            theta2_gamma_shape: 0.5,
            theta2_gamma_rate: 0.5,
        }
    }
}

impl SvPriorConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.mu_prior_var,
            self.rho_beta_a,
            self.rho_beta_b,
            self.theta2_gamma_shape,
            self.theta2_gamma_rate,
        ];
        if !self.mu_prior_mean.is_finite() || positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Config(format!("invalid SV prior: {self:?}")));
        }
        Ok(())
    }

    /// A `G(1/2, r)` prior on `theta2` is `N(0, 1/(2r))` on `±theta`, which
    /// makes the non-centred scale update conjugate.
    pub fn gaussian_scale_prior_var(&self) -> Option<f64> {
        (self.theta2_gamma_shape == 0.5).then(|| 1.0 / (2.0 * self.theta2_gamma_rate))
    }
}

/// Hyperparameters of one triple-gamma block (`sqrt_v` or `beta0`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ShrinkageBlockConfig {
    /// Fixed value, or starting value when learned.
    pub a: f64,
    pub c: f64,
    pub kappa: f64,
    /// `2a ~ Beta(a_prior_alpha, a_prior_beta)`.
    pub a_prior_alpha: f64,
    pub a_prior_beta: f64,
    /// `2c ~ Beta(c_prior_alpha, c_prior_beta)`.
    pub c_prior_alpha: f64,
    pub c_prior_beta: f64,
    /// Initial random-walk step on the logit scale.
    pub a_step: f64,
    pub c_step: f64,
}

impl Default for ShrinkageBlockConfig {
    fn default() -> Self {
        Self {
            a: 0.1,
            c: 0.1,
            kappa: 20.0,
            a_prior_alpha: 5.0,
            a_prior_beta: 10.0,
            c_prior_alpha: 5.0,
            c_prior_beta: 10.0,
            a_step: 1.0,
            c_step: 1.0,
        }
    }
}

impl ShrinkageBlockConfig {
    fn validate(&self, name: &str) -> Result<()> {
        let ok = self.a > 0.0
            && self.c > 0.0
            && self.kappa > 0.0
            && self.a_prior_alpha > 0.0
            && self.a_prior_beta > 0.0
            && self.c_prior_alpha > 0.0
            && self.c_prior_beta > 0.0
            && self.a_step > 0.0
            && self.c_step > 0.0
            && [self.a, self.c, self.kappa].iter().all(|v| v.is_finite());
        if !ok {
            return Err(Error::Config(format!("invalid shrinkage block `{name}`: {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TripleGammaConfig {
    pub learn_a: bool,
    pub learn_c: bool,
    pub learn_kappa: bool,
    /// Prior on the state standard deviations `sqrt_v`.
    pub v: ShrinkageBlockConfig,
    /// Prior on the initial coefficients `beta0`.
    pub beta: ShrinkageBlockConfig,
}

impl Default for TripleGammaConfig {
    fn default() -> Self {
        Self {
            learn_a: true,
            learn_c: true,
            learn_kappa: true,
            v: ShrinkageBlockConfig::default(),
            beta: ShrinkageBlockConfig::default(),
        }
    }
}

impl TripleGammaConfig {
    /// Fixed `a`, `c`, `kappa` in both blocks.
    pub fn fixed(a: f64, c: f64, kappa: f64) -> Self {
        let block = ShrinkageBlockConfig {
            a,
            c,
            kappa,
            ..Default::default()
        };
        Self {
            learn_a: false,
            learn_c: false,
            learn_kappa: false,
            v: block,
            beta: block,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.v.validate("v")?;
        self.beta.validate("beta")?;
        for (name, b) in [("v", &self.v), ("beta", &self.beta)] {
            if self.learn_a && !(b.a < 0.5) {
                return Err(Error::Config(format!("learned a must start inside (0, 0.5) in block `{name}`")));
            }
            if self.learn_c && !(b.c < 0.5) {
                return Err(Error::Config(format!("learned c must start inside (0, 0.5) in block `{name}`")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TvpSvModelSpec {
    pub horizon: usize,
    pub k: usize,
    #[serde(default)]
    pub sv: SvPriorConfig,
    #[serde(default)]
    pub shrinkage: TripleGammaConfig,
}

impl TvpSvModelSpec {
    pub fn new(horizon: usize, k: usize) -> Self {
        Self {
            horizon,
            k,
            sv: SvPriorConfig::default(),
            shrinkage: TripleGammaConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 1 || self.horizon < 1 {
            return Err(Error::Config(format!(
                "need k >= 1 and horizon >= 1, got k={} horizon={}",
                self.k, self.horizon
            )));
        }
        self.sv.validate()?;
        self.shrinkage.validate()
    }
}

/// Current values of one triple-gamma block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShrinkageState {
    pub tau2: Vec<f64>,
    pub lambda: Vec<f64>,
    pub a: f64,
    pub c: f64,
    pub kappa: f64,
}

impl ShrinkageState {
    /// Draws the block from its prior, learned hyperparameters included.
    pub fn sample_prior<R: Rng + ?Sized>(
        k: usize,
        cfg: &ShrinkageBlockConfig,
        learn: (bool, bool, bool),
        rng: &mut R,
    ) -> Self {
        let a = if learn.0 { beta(cfg.a_prior_alpha, cfg.a_prior_beta, rng) / 2.0 } else { cfg.a };
        let c = if learn.1 { beta(cfg.c_prior_alpha, cfg.c_prior_beta, rng) / 2.0 } else { cfg.c };
        let kappa = if learn.2 { 2.0 * f_variate(2.0 * a, 2.0 * c, rng) } else { cfg.kappa };
        let lambda: Vec<f64> = (0..k).map(|_| gamma(c, c / kappa, rng)).collect();
        let tau2 = lambda.iter().map(|&l| gamma(a, a * l / 2.0, rng)).collect();
        Self {
            tau2,
            lambda,
            a,
            c,
            kappa,
        }
    }

    /// Starting values: prior means where they exist.
    pub fn initial(k: usize, cfg: &ShrinkageBlockConfig) -> Self {
        Self {
            tau2: vec![2.0 / cfg.kappa; k],
            lambda: vec![cfg.kappa; k],
            a: cfg.a,
            c: cfg.c,
            kappa: cfg.kappa,
        }
    }
}

/// One joint state of the sampler.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParameters {
    pub k: usize,
    pub beta0: Vec<f64>,
    /// Signed state standard deviations.
    pub sqrt_v: Vec<f64>,
    /// Normalised states, `T x K` row-major, one row per observation.
    pub states_tilde: Vec<f64>,
    pub log_vol: Vec<f64>,
    pub mu_sigma: f64,
    pub rho_sigma: f64,
    pub theta2: f64,
    pub shrink_v: ShrinkageState,
    pub shrink_beta: ShrinkageState,
}

impl ModelParameters {
    pub fn t_len(&self) -> usize {
        self.log_vol.len()
    }

    pub fn state_tilde(&self, t: usize) -> &[f64] {
        &self.states_tilde[t * self.k..(t + 1) * self.k]
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.k;
        let t = self.log_vol.len();
        if self.beta0.len() != k || self.sqrt_v.len() != k || self.states_tilde.len() != t * k {
            return Err(Error::shape("parameter blocks disagree on K or T"));
        }
        if !(self.rho_sigma.abs() < 1.0) || !(self.theta2 > 0.0) {
            return Err(Error::Domain(format!(
                "SV parameters out of range: rho={} theta2={}",
                self.rho_sigma, self.theta2
            )));
        }
        for s in [&self.shrink_v, &self.shrink_beta] {
            if s.tau2.iter().chain(&s.lambda).any(|v| !(*v > 0.0)) {
                return Err(Error::Domain("non-positive prior variance".into()));
            }
        }
        let finite = self
            .beta0
            .iter()
            .chain(&self.sqrt_v)
            .chain(&self.states_tilde)
            .chain(&self.log_vol)
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Numerical("non-finite parameter".into()));
        }
        Ok(())
    }

    /// Draws every parameter and latent path from the prior.
    pub fn sample_prior<R: Rng + ?Sized>(spec: &TvpSvModelSpec, t_len: usize, rng: &mut R) -> Self {
        let k = spec.k;
        let sh = &spec.shrinkage;
        let learn = (sh.learn_a, sh.learn_c, sh.learn_kappa);
        let shrink_v = ShrinkageState::sample_prior(k, &sh.v, learn, rng);
        let shrink_beta = ShrinkageState::sample_prior(k, &sh.beta, learn, rng);
        let sqrt_v = shrink_v.tau2.iter().map(|t| t.sqrt() * std_normal(rng)).collect();
        let beta0 = shrink_beta.tau2.iter().map(|t| t.sqrt() * std_normal(rng)).collect();
        let mut states_tilde = vec![0.0; t_len * k];
        for t in 0..t_len {
            for j in 0..k {
                let prev = if t == 0 { 0.0 } else { states_tilde[(t - 1) * k + j] };
                states_tilde[t * k + j] = prev + std_normal(rng);
            }
        }
        let sv = &spec.sv;
        let mu_sigma = sv.mu_prior_mean + sv.mu_prior_var.sqrt() * std_normal(rng);
        let rho_sigma = 2.0 * beta(sv.rho_beta_a, sv.rho_beta_b, rng) - 1.0;
        let theta2 = gamma(sv.theta2_gamma_shape, sv.theta2_gamma_rate, rng);
        let log_vol = sample_ar1_path(mu_sigma, rho_sigma, theta2, t_len, rng);
        Self {
            k,
            beta0,
            sqrt_v,
            states_tilde,
            log_vol,
            mu_sigma,
            rho_sigma,
            theta2,
            shrink_v,
            shrink_beta,
        }
    }

    /// Deterministic starting point for a chain: zero coefficients, flat
    /// log-volatility at `ln var(y)`.
    pub fn initial(spec: &TvpSvModelSpec, y: &[f64]) -> Self {
        let k = spec.k;
        let t_len = y.len();
        let m = y.iter().sum::<f64>() / t_len.max(1) as f64;
        let var = y.iter().map(|v| (v - m).powi(2)).sum::<f64>() / t_len.max(1) as f64;
        let h0 = var.max(1e-8).ln();
        Self {
            k,
            beta0: vec![0.0; k],
            sqrt_v: vec![0.1; k],
            states_tilde: vec![0.0; t_len * k],
            log_vol: vec![h0; t_len],
            mu_sigma: h0,
            rho_sigma: 0.9,
            theta2: 0.1,
            shrink_v: ShrinkageState::initial(k, &spec.shrinkage.v),
            shrink_beta: ShrinkageState::initial(k, &spec.shrinkage.beta),
        }
    }
}

pub fn sample_ar1_path<R: Rng + ?Sized>(mu: f64, rho: f64, theta2: f64, t_len: usize, rng: &mut R) -> Vec<f64> {
    let mut h = Vec::with_capacity(t_len);
    let sd = theta2.sqrt();
    for t in 0..t_len {
        let next = if t == 0 {
            mu + (theta2 / (1.0 - rho * rho)).sqrt() * std_normal(rng)
        } else {
            mu + rho * (h[t - 1] - mu) + sd * std_normal(rng)
        };
        h.push(next);
    }
    h
}

/// Centred coefficient paths `beta[t] = beta0 + sqrt_v * btilde[t]`, `T x K`.
pub fn centered_states(params: &ModelParameters) -> Vec<f64> {
    let k = params.k;
    params
        .states_tilde
        .chunks(k)
        .flat_map(|row| (0..k).map(move |j| params.beta0[j] + params.sqrt_v[j] * row[j]))
        .collect()
}

/// Inverse of [`centered_states`]; entries with `sqrt_v[j] == 0` map to 0.
pub fn normalize_states(beta: &[f64], beta0: &[f64], sqrt_v: &[f64]) -> Vec<f64> {
    let k = beta0.len();
    beta.chunks(k)
        .flat_map(|row| {
            (0..k).map(move |j| {
                if sqrt_v[j] == 0.0 {
                    0.0
                } else {
                    (row[j] - beta0[j]) / sqrt_v[j]
                }
            })
        })
        .collect()
}

/// `x[t]' beta[t]` for each row.
pub fn fitted_means(params: &ModelParameters, regressors: &[Vec<f64>]) -> Vec<f64> {
    let beta = centered_states(params);
    regressors
        .iter()
        .enumerate()
        .map(|(t, x)| x.iter().zip(&beta[t * params.k..]).map(|(a, b)| a * b).sum())
        .collect()
}

/// Gaussian log likelihood of the observed targets.
pub fn log_likelihood(params: &ModelParameters, data: &RegressionDataset) -> Result<f64> {
    let t_len = params.t_len();
    if data.k() != params.k {
        return Err(Error::shape(format!("dataset has K={}, parameters K={}", data.k(), params.k)));
    }
    if data.len() != t_len {
        return Err(Error::shape(format!("dataset has {} rows, parameters T={t_len}", data.len())));
    }
    let means = fitted_means(params, &data.regressors);
    let mut ll = 0.0;
    for t in 0..t_len {
        let y = data.targets[t].ok_or_else(|| Error::shape(format!("row {t} has no target")))?;
        ll += ln_normal_pdf(y, means[t], params.log_vol[t].exp());
    }
    Ok(ll)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::date::yq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params_k(k: usize, t: usize, seed: u64) -> ModelParameters {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = TvpSvModelSpec {
            shrinkage: TripleGammaConfig::fixed(0.5, 0.5, 2.0),
            ..TvpSvModelSpec::new(1, k)
        };
        ModelParameters::sample_prior(&spec, t, &mut rng)
    }

    fn dataset(x: Vec<Vec<f64>>, y: Vec<f64>) -> RegressionDataset {
        let n = y.len();
        let k = x[0].len();
        RegressionDataset::new(
            1,
            (0..k).map(|j| format!("x{j}")).collect(),
            (0..n).map(|i| yq("2000-Q1").add_quarters(i as i64)).collect(),
            y.into_iter().map(Some).collect(),
            x,
        )
        .unwrap()
    }

    #[test]
    fn zero_scales_give_constant_coefficients() {
        let mut p = params_k(3, 10, 1);
        p.sqrt_v = vec![0.0; 3];
        let b = centered_states(&p);
        for row in b.chunks(3) {
            assert_eq!(row, p.beta0.as_slice());
        }
    }

    #[test]
    fn identity_map_when_unit_scale() {
        let mut p = params_k(2, 6, 2);
        p.beta0 = vec![0.0; 2];
        p.sqrt_v = vec![1.0; 2];
        assert_eq!(centered_states(&p), p.states_tilde);
    }

    #[test]
    fn single_observation_likelihood() {
        let mut p = params_k(1, 1, 3);
        p.beta0 = vec![2.0];
        p.sqrt_v = vec![0.0];
        p.log_vol = vec![0.0];
        let ds = dataset(vec![vec![1.5]], vec![3.0]);
        let ll = log_likelihood(&p, &ds).unwrap();
        assert!((ll + 0.5 * (2.0 * std::f64::consts::PI).ln()).abs() < 1e-15);
    }

    #[test]
    fn likelihood_is_additive_and_matches_scalar_oracle() {
        let p = params_k(2, 7, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x: Vec<Vec<f64>> = (0..7).map(|_| vec![1.0, std_normal(&mut rng)]).collect();
        let y: Vec<f64> = (0..7).map(|_| 3.0 * std_normal(&mut rng)).collect();
        let ll = log_likelihood(&p, &dataset(x.clone(), y.clone())).unwrap();
        // Scalar oracle written from the density formula directly.
        let mut oracle = 0.0;
        for t in 0..7 {
            let mut m = 0.0;
            for j in 0..2 {
                m += x[t][j] * (p.beta0[j] + p.sqrt_v[j] * p.states_tilde[t * 2 + j]);
            }
            let s2 = p.log_vol[t].exp();
            oracle += -0.5 * (2.0 * std::f64::consts::PI * s2).ln() - (y[t] - m).powi(2) / (2.0 * s2);
        }
        assert!((ll - oracle).abs() < 1e-12 * oracle.abs().max(1.0));
    }

    #[test]
    fn likelihood_shape_errors() {
        let p = params_k(2, 3, 5);
        let ds = dataset(vec![vec![1.0]; 3], vec![0.0; 3]);
        assert!(matches!(log_likelihood(&p, &ds), Err(Error::Shape(_))));
        let ds = dataset(vec![vec![1.0, 0.0]; 4], vec![0.0; 4]);
        assert!(matches!(log_likelihood(&p, &ds), Err(Error::Shape(_))));
    }

    #[test]
    fn tau2_prior_mean_is_two_over_lambda() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (a, lambda) = (0.7, 3.0);
        let n = 100_000;
        let draws: Vec<f64> = (0..n).map(|_| gamma(a, a * lambda / 2.0, &mut rng)).collect();
        let m = draws.iter().sum::<f64>() / n as f64;
        // Var of G(a, r) is a / r^2.
        let se = (a / (a * lambda / 2.0).powi(2) / n as f64).sqrt();
        assert!((m - 2.0 / lambda).abs() < 3.0 * se, "{m}");
    }

    #[test]
    fn stationary_log_vol_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (rho, theta2) = (0.8, 0.5);
        let n = 100_000;
        let draws: Vec<f64> = (0..n).map(|_| sample_ar1_path(1.0, rho, theta2, 1, &mut rng)[0]).collect();
        let m = draws.iter().sum::<f64>() / n as f64;
        let v = draws.iter().map(|d| (d - m).powi(2)).sum::<f64>() / (n - 1) as f64;
        let target = theta2 / (1.0 - rho * rho);
        // Var of the sample variance of a Gaussian is 2 sigma^4 / (n - 1).
        let se = (2.0 * target * target / (n - 1) as f64).sqrt();
        assert!((v - target).abs() < 3.0 * se, "{v} vs {target}");
    }

    #[test]
    fn prior_draws_are_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let spec = TvpSvModelSpec::new(1, 3);
        for _ in 0..200 {
            let p = ModelParameters::sample_prior(&spec, 12, &mut rng);
            p.validate().unwrap();
            assert!(p.shrink_v.a > 0.0 && p.shrink_v.a < 0.5);
        }
    }

    #[test]
    fn config_validation() {
        assert!(TvpSvModelSpec::new(1, 0).validate().is_err());
        let mut s = TvpSvModelSpec::new(1, 2);
        s.sv.mu_prior_var = -1.0;
        assert!(s.validate().is_err());
        let mut s = TvpSvModelSpec::new(1, 2);
        s.shrinkage.v.a = 0.7;
        assert!(s.validate().is_err());
        s.shrinkage.learn_a = false;
        assert!(s.validate().is_ok());
    }

    proptest! {
        #[test]
        fn normalisation_round_trip(seed in 0u64..1000, k in 1usize..4, t in 1usize..20) {
            let mut p = params_k(k, t, seed);
            for s in p.sqrt_v.iter_mut() {
                if s.abs() < 1e-3 { *s = 0.5; }
            }
            let back = normalize_states(&centered_states(&p), &p.beta0, &p.sqrt_v);
            // Recovering btilde subtracts beta0 from beta0 + s btilde, so the
            // rounding error scales with |beta0| / |s|.
            for (i, (a, b)) in back.iter().zip(&p.states_tilde).enumerate() {
                let (b0, s) = (p.beta0[i % k], p.sqrt_v[i % k]);
                prop_assert!((a - b).abs() < 1e-12 * (b0.abs() + (s * b).abs() + 1.0) / s.abs());
            }
        }
    }
}
