//! Seeded data-generating processes for recovery and calibration tests.

use serde::{Deserialize, Serialize};

use crate::dataset::RegressionDataset;
use crate::date::YearQuarter;
use crate::dist::std_normal;
use crate::error::{Error, Result};
use crate::model::{ModelParameters, ShrinkageBlockConfig, ShrinkageState};
use crate::seed::rng_for;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum CoefficientPath {
    Constant { beta: Vec<f64> },
    /// `beta[t] = beta[t-1] + scale * N(0, 1)`, starting one step after `start`.
    RandomWalk { start: Vec<f64>, scale: Vec<f64> },
    /// `before` for rows `< at`, `after` from row `at` on.
    Break { before: Vec<f64>, after: Vec<f64>, at: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum VolatilityPath {
    Constant { sigma: f64 },
    /// AR(1) log-variance started from its stationary law; `theta` is the
    /// innovation standard deviation.
    Stochastic { mu: f64, rho: f64, theta: f64 },
    Break { sigma_before: f64, sigma_after: f64, at: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum RegressorLaw {
    Iid,
    /// Unit-variance stationary AR(1).
    Ar1 { rho: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpSpec {
    pub t_len: usize,
    /// Number of regressors, intercept included.
    pub k: usize,
    #[serde(default = "yes")]
    pub intercept: bool,
    pub coefficients: CoefficientPath,
    pub volatility: VolatilityPath,
    #[serde(default = "iid")]
    pub regressors: RegressorLaw,
    #[serde(default = "one")]
    pub horizon: usize,
    #[serde(default = "default_start")]
    pub start: YearQuarter,
    #[serde(default)]
    pub seed: u64,
}

fn yes() -> bool {
    true
}

fn iid() -> RegressorLaw {
    RegressorLaw::Iid
}

fn one() -> usize {
    1
}

fn default_start() -> YearQuarter {
    YearQuarter::new(1900, 1).expect("valid date")
}

impl DgpSpec {
    pub fn new(t_len: usize, coefficients: CoefficientPath, volatility: VolatilityPath, seed: u64) -> Self {
        let k = match &coefficients {
            CoefficientPath::Constant { beta } => beta.len(),
            CoefficientPath::RandomWalk { start, .. } => start.len(),
            CoefficientPath::Break { before, .. } => before.len(),
        };
        Self {
            t_len,
            k,
            intercept: true,
            coefficients,
            volatility,
            regressors: RegressorLaw::Iid,
            horizon: 1,
            start: default_start(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.t_len == 0 || self.k == 0 || self.horizon == 0 {
            return bad("T, K and horizon must be positive".into());
        }
        let k = self.k;
        let lens_ok = match &self.coefficients {
            CoefficientPath::Constant { beta } => beta.len() == k,
            CoefficientPath::RandomWalk { start, scale } => {
                if scale.iter().any(|s| !(*s >= 0.0)) {
                    return bad("random-walk scales must be non-negative".into());
                }
                start.len() == k && scale.len() == k
            }
            CoefficientPath::Break { before, after, at } => {
                if *at > self.t_len {
                    return bad(format!("coefficient break at row {at} beyond T = {}", self.t_len));
                }
                before.len() == k && after.len() == k
            }
        };
        if !lens_ok {
            return bad(format!("coefficient vectors must have length K = {k}"));
        }
        match self.volatility {
            VolatilityPath::Constant { sigma } if !(sigma > 0.0) => return bad(format!("sigma = {sigma} must be positive")),
            VolatilityPath::Stochastic { rho, theta, mu } => {
                if !(rho.abs() < 1.0) || !(theta > 0.0) || !mu.is_finite() {
                    return bad(format!("need |rho| < 1 and theta > 0, got rho={rho} theta={theta}"));
                }
            }
            VolatilityPath::Break {
                sigma_before,
                sigma_after,
                at,
            } => {
                if !(sigma_before > 0.0 && sigma_after > 0.0) {
                    return bad("break volatilities must be positive".into());
                }
                if at > self.t_len {
                    return bad(format!("volatility break at row {at} beyond T = {}", self.t_len));
                }
            }
            _ => {}
        }
        if let RegressorLaw::Ar1 { rho } = self.regressors {
            if !(rho.abs() < 1.0) {
                return bad(format!("regressor AR coefficient {rho} must lie in (-1, 1)"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSample {
    pub data: RegressionDataset,
    /// Ground truth in the sampler's parameterisation. Constant and break
    /// volatility paths carry `theta2 = 0`.
    pub truth: ModelParameters,
    /// Coefficients per row, `T x K`.
    pub coefficients: Vec<Vec<f64>>,
}

/// Draws regressors, coefficient and volatility paths, then targets.
pub fn simulate_dgp(spec: &DgpSpec) -> Result<SyntheticSample> {
    spec.validate()?;
    let (t_len, k) = (spec.t_len, spec.k);
    let mut rng_x = rng_for(spec.seed, &[0]);
    let mut rng_b = rng_for(spec.seed, &[1]);
    let mut rng_h = rng_for(spec.seed, &[2]);
    let mut rng_e = rng_for(spec.seed, &[3]);

    let first = usize::from(spec.intercept);
    let mut regressors = vec![vec![1.0; k]; t_len];
    if first < k {
        let mut prev = vec![0.0; k];
        for (t, row) in regressors.iter_mut().enumerate() {
            for j in first..k {
                let z = std_normal(&mut rng_x);
                row[j] = match spec.regressors {
                    RegressorLaw::Iid => z,
                    RegressorLaw::Ar1 { .. } if t == 0 => z,
                    RegressorLaw::Ar1 { rho } => rho * prev[j] + (1.0 - rho * rho).sqrt() * z,
                };
                prev[j] = row[j];
            }
        }
    }

    let (beta0, sqrt_v, states_tilde) = match &spec.coefficients {
        CoefficientPath::Constant { beta } => (beta.clone(), vec![0.0; k], vec![0.0; t_len * k]),
        CoefficientPath::RandomWalk { start, scale } => {
            let mut s = vec![0.0; t_len * k];
            for t in 0..t_len {
                for j in 0..k {
                    let prev = if t == 0 { 0.0 } else { s[(t - 1) * k + j] };
                    s[t * k + j] = prev + std_normal(&mut rng_b);
                }
            }
            (start.clone(), scale.clone(), s)
        }
        CoefficientPath::Break { before, after, at } => {
            let jump: Vec<f64> = before.iter().zip(after).map(|(b, a)| a - b).collect();
            let s = (0..t_len)
                .flat_map(|t| jump.iter().map(move |d| if t >= *at && *d != 0.0 { 1.0 } else { 0.0 }))
                .collect();
            (before.clone(), jump, s)
        }
    };
    let coefficients: Vec<Vec<f64>> = (0..t_len)
        .map(|t| (0..k).map(|j| beta0[j] + sqrt_v[j] * states_tilde[t * k + j]).collect())
        .collect();

    let (log_vol, mu_sigma, rho_sigma, theta2) = match spec.volatility {
        VolatilityPath::Constant { sigma } => {
            let h = 2.0 * sigma.ln();
            (vec![h; t_len], h, 0.0, 0.0)
        }
        VolatilityPath::Stochastic { mu, rho, theta } => {
            let theta2 = theta * theta;
            let path = crate::model::sample_ar1_path(mu, rho, theta2, t_len, &mut rng_h);
            (path, mu, rho, theta2)
        }
        VolatilityPath::Break {
            sigma_before,
            sigma_after,
            at,
        } => {
            let (hb, ha) = (2.0 * sigma_before.ln(), 2.0 * sigma_after.ln());
            ((0..t_len).map(|t| if t < at { hb } else { ha }).collect(), hb, 0.0, 0.0)
        }
    };

    let targets = (0..t_len)
        .map(|t| {
            let m: f64 = regressors[t].iter().zip(&coefficients[t]).map(|(x, b)| x * b).sum();
            Some(m + (0.5 * log_vol[t]).exp() * std_normal(&mut rng_e))
        })
        .collect();
    let columns = (0..k)
        .map(|j| if spec.intercept && j == 0 { "const".to_string() } else { format!("x{j}") })
        .collect();
    let origins = (0..t_len).map(|t| spec.start.add_quarters(t as i64)).collect();
    let data = RegressionDataset::new(spec.horizon, columns, origins, targets, regressors)?;

    let block = ShrinkageBlockConfig::default();
    let truth = ModelParameters {
        k,
        beta0,
        sqrt_v,
        states_tilde,
        log_vol,
        mu_sigma,
        rho_sigma,
        theta2,
        shrink_v: ShrinkageState::initial(k, &block),
        shrink_beta: ShrinkageState::initial(k, &block),
    };
    Ok(SyntheticSample {
        data,
        truth,
        coefficients,
    })
}
