//! Predictive simulation and recursive out-of-sample quantile paths.

use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::RegressionDataset;
use crate::date::YearQuarter;
use crate::dist::std_normal;
use crate::error::{Error, Result};
use crate::model::TvpSvModelSpec;
use crate::sampler::{run_chain, PosteriorDraws, SamplerConfig};
use crate::seed::{derive_seed, rng_for};
use crate::series::fmt_num;
use crate::stats::quantile_sorted;

/// Simulated `y_{T+h}`, one per retained posterior draw, with the Gaussian
/// conditional moments each was drawn from.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveDensity {
    pub origin: Option<YearQuarter>,
    pub horizon: usize,
    pub draws: Vec<f64>,
    pub cond_mean: Vec<f64>,
    pub cond_var: Vec<f64>,
}

/// Propagates every posterior draw `steps` periods past the last estimated
/// row and draws one target from the conditional Gaussian.
///
/// Coefficients take `steps` random-walk steps with increment variance
/// `v_j`, the log-volatility iterates its AR(1) `steps` times.
pub fn simulate_predictive<R: Rng + ?Sized>(
    draws: &PosteriorDraws,
    x: &[f64],
    steps: usize,
    rng: &mut R,
) -> Result<PredictiveDensity> {
    if draws.is_empty() {
        return Err(Error::input("no posterior draws to simulate from"));
    }
    if steps < 1 {
        return Err(Error::param("forecast horizon must be at least 1"));
    }
    let k = draws.spec.k;
    if x.len() != k {
        return Err(Error::shape(format!("regressor vector has {} entries, model has K={k}", x.len())));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::input("regressor vector contains non-finite values"));
    }
    let n = draws.len();
    let mut out = PredictiveDensity {
        origin: None,
        horizon: steps,
        draws: Vec::with_capacity(n),
        cond_mean: Vec::with_capacity(n),
        cond_var: Vec::with_capacity(n),
    };
    for d in &draws.draws {
        let last = d.t_len() - 1;
        let mut mean = 0.0;
        for j in 0..k {
            let mut beta = d.beta0[j] + d.sqrt_v[j] * d.states_tilde[last * k + j];
            for _ in 0..steps {
                beta += d.sqrt_v[j] * std_normal(rng);
            }
            mean += beta * x[j];
        }
        let sd_vol = d.theta2.sqrt();
        let mut h = d.log_vol[last];
        for _ in 0..steps {
            h = d.mu_sigma + d.rho_sigma * (h - d.mu_sigma) + sd_vol * std_normal(rng);
        }
        let var = h.exp();
        out.cond_mean.push(mean);
        out.cond_var.push(var);
        out.draws.push(mean + var.sqrt() * std_normal(rng));
    }
    Ok(out)
}

fn check_probs(probs: &[f64]) -> Result<()> {
    if let Some(p) = probs.iter().find(|p| !(**p > 0.0 && **p < 1.0)) {
        return Err(Error::param(format!("quantile probability must lie in (0, 1), got {p}")));
    }
    Ok(())
}

/// Interpolated empirical quantiles at rank `(n - 1) p + 1`.
pub fn extract_quantiles(pd: &PredictiveDensity, probs: &[f64]) -> Result<Vec<f64>> {
    check_probs(probs)?;
    if pd.draws.len() < 100 {
        return Err(Error::input(format!(
            "need at least 100 predictive draws for quantiles, have {}",
            pd.draws.len()
        )));
    }
    let mut sorted = pd.draws.clone();
    sorted.sort_by(f64::total_cmp);
    Ok(probs.iter().map(|&p| quantile_sorted(&sorted, p)).collect())
}

/// Per-origin predictive quantiles and, where known, the realised target.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantilePath {
    pub horizon: usize,
    pub probs: Vec<f64>,
    pub origins: Vec<YearQuarter>,
    /// `quantiles[i][k]` is the quantile at `probs[k]` for `origins[i]`.
    pub quantiles: Vec<Vec<f64>>,
    pub realized: Vec<Option<f64>>,
}

impl QuantilePath {
    pub fn len(&self) -> usize {
        self.origins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.origins.is_empty()
    }

    pub fn prob_index(&self, p: f64) -> Option<usize> {
        self.probs.iter().position(|q| (q - p).abs() < 1e-12)
    }

    /// The quantile series at probability `p`.
    pub fn series(&self, p: f64) -> Result<Vec<f64>> {
        let k = self
            .prob_index(p)
            .ok_or_else(|| Error::param(format!("probability {p} not in path {:?}", self.probs)))?;
        Ok(self.quantiles.iter().map(|q| q[k]).collect())
    }

    /// Tidy layout: `origin,horizon,prob,quantile,realized`.
    pub fn write_csv<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["origin", "horizon", "prob", "quantile", "realized"])?;
        for (i, o) in self.origins.iter().enumerate() {
            for (k, p) in self.probs.iter().enumerate() {
                w.write_record([
                    o.to_string(),
                    self.horizon.to_string(),
                    fmt_num(*p),
                    fmt_num(self.quantiles[i][k]),
                    self.realized[i].map(fmt_num).unwrap_or_default(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<P: AsRef<Path>>(path: P) -> Result<Self> {
        let path = path.as_ref();
        let schema = |detail: String| Error::Schema {
            file: path.display().to_string(),
            detail,
        };
        let mut r = csv::Reader::from_path(path)?;
        let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        if header != ["origin", "horizon", "prob", "quantile", "realized"] {
            return Err(schema(format!("unexpected header {header:?}")));
        }
        let mut out = QuantilePath {
            horizon: 0,
            probs: Vec::new(),
            origins: Vec::new(),
            quantiles: Vec::new(),
            realized: Vec::new(),
        };
        for (line, rec) in r.records().enumerate() {
            let rec = rec?;
            let row = line + 2;
            let num = |c: usize| -> Result<f64> {
                rec[c].parse().map_err(|_| schema(format!("row {row} column {}: not a number: {:?}", c + 1, &rec[c])))
            };
            let origin: YearQuarter = rec[0].parse().map_err(|e: Error| schema(format!("row {row}: {e}")))?;
            let horizon: usize = rec[1].parse().map_err(|_| schema(format!("row {row}: bad horizon {:?}", &rec[1])))?;
            if out.origins.is_empty() {
                out.horizon = horizon;
            } else if horizon != out.horizon {
                return Err(schema(format!("row {row}: horizon {horizon} differs from {}", out.horizon)));
            }
            let (p, q) = (num(2)?, num(3)?);
            let realized = if rec[4].is_empty() { None } else { Some(num(4)?) };
            if out.origins.last() != Some(&origin) {
                out.origins.push(origin);
                out.quantiles.push(Vec::new());
                out.realized.push(realized);
            }
            let i = out.origins.len() - 1;
            if i == 0 {
                out.probs.push(p);
            } else if out.probs.get(out.quantiles[i].len()) != Some(&p) {
                return Err(schema(format!("row {row}: probabilities differ across origins")));
            }
            out.quantiles[i].push(q);
        }
        if out.quantiles.iter().any(|q| q.len() != out.probs.len()) {
            return Err(schema("incomplete probability set for some origin".into()));
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForecastConfig {
    pub sampler: SamplerConfig,
    pub probs: Vec<f64>,
    /// Smallest number of training rows at the first origin.
    pub min_training: usize,
}

impl Default for ForecastConfig {
    fn default() -> Self {
        Self {
            sampler: SamplerConfig::default(),
            probs: vec![0.05, 0.95],
            min_training: 80,
        }
    }
}

/// Origins from `start` onward together with their training sets.
fn origin_plan(data: &RegressionDataset, start: YearQuarter, min_training: usize) -> Result<Vec<(usize, RegressionDataset)>> {
    let rows: Vec<usize> = (0..data.len()).filter(|&i| data.origins[i] >= start).collect();
    if rows.is_empty() {
        return Err(Error::Config(format!("no forecast origins at or after {start}")));
    }
    let plan: Vec<(usize, RegressionDataset)> = rows.into_iter().map(|i| (i, data.observed_through(data.origins[i]))).collect();
    let first = &plan[0].1;
    if first.len() < min_training {
        return Err(Error::Config(format!(
            "origin {start} leaves {} training rows for horizon {}, need at least {min_training}",
            first.len(),
            data.horizon
        )));
    }
    Ok(plan)
}

/// Expanding-window estimation: at each origin from `start` on, the model is
/// re-estimated on rows whose target is known by then and the predictive
/// density is simulated from the origin's regressors. Origin `t` draws from
/// streams derived from `(seed, horizon, ordinal(t))`.
pub fn recursive_predictive(
    data: &RegressionDataset,
    spec: &TvpSvModelSpec,
    cfg: &ForecastConfig,
    start: YearQuarter,
) -> Result<Vec<PredictiveDensity>> {
    check_probs(&cfg.probs)?;
    if data.horizon != spec.horizon {
        return Err(Error::Config(format!(
            "dataset horizon {} differs from model horizon {}",
            data.horizon, spec.horizon
        )));
    }
    let plan = origin_plan(data, start, cfg.min_training)?;
    plan.par_iter()
        .map(|(row, train)| {
            let origin = data.origins[*row];
            let path = [data.horizon as u64, origin.ordinal() as u64];
            let sampler = SamplerConfig {
                seed: derive_seed(cfg.sampler.seed, &path),
                ..cfg.sampler
            };
            let draws = run_chain(spec, train, &sampler)?;
            let last = *train.origins.last().expect("nonempty training set");
            let steps = origin.quarters_since(last) as usize;
            let mut rng = rng_for(sampler.seed, &[1]);
            let mut pd = simulate_predictive(&draws, &data.regressors[*row], steps, &mut rng)?;
            pd.origin = Some(origin);
            Ok(pd)
        })
        .collect()
}

pub fn recursive_forecast(
    data: &RegressionDataset,
    spec: &TvpSvModelSpec,
    cfg: &ForecastConfig,
    start: YearQuarter,
) -> Result<QuantilePath> {
    let densities = recursive_predictive(data, spec, cfg, start)?;
    let mut path = QuantilePath {
        horizon: data.horizon,
        probs: cfg.probs.clone(),
        origins: Vec::new(),
        quantiles: Vec::new(),
        realized: Vec::new(),
    };
    for pd in &densities {
        let origin = pd.origin.expect("recursive densities carry their origin");
        path.quantiles.push(extract_quantiles(pd, &cfg.probs)?);
        path.realized.push(data.row_of(origin).and_then(|i| data.targets[i]));
        path.origins.push(origin);
    }
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::date::yq;
    use crate::model::{ModelParameters, ShrinkageState};
    use crate::sampler::AcceptanceRates;
    use crate::stats::{mean, skewness, std_dev};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Posterior draws with a fixed single parameter vector, `n` copies.
    fn point_draws(beta: &[f64], sqrt_v: &[f64], log_vol: f64, theta2: f64, n: usize) -> PosteriorDraws {
        let k = beta.len();
        let spec = TvpSvModelSpec::new(1, k);
        let p = ModelParameters {
            k,
            beta0: beta.to_vec(),
            sqrt_v: sqrt_v.to_vec(),
            states_tilde: vec![0.0; 3 * k],
            log_vol: vec![log_vol; 3],
            mu_sigma: log_vol,
            rho_sigma: 0.9,
            theta2,
            shrink_v: ShrinkageState::initial(k, &spec.shrinkage.v),
            shrink_beta: ShrinkageState::initial(k, &spec.shrinkage.beta),
        };
        PosteriorDraws {
            spec,
            config: SamplerConfig::default(),
            columns: (0..k).map(|j| format!("x{j}")).collect(),
            first_origin: None,
            last_origin: None,
            draws: vec![p; n],
            acceptance: AcceptanceRates {
                a_v: None,
                c_v: None,
                a_beta: None,
                c_beta: None,
                rho_sigma: None,
            },
        }
    }

    #[test]
    fn constant_gaussian_case_has_analytic_fifth_percentile() {
        // beta'x = 2, sigma^2 = 1, no time variation.
        let d = point_draws(&[1.5, 0.25], &[0.0, 0.0], 0.0, 0.0, 20_000);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pd = simulate_predictive(&d, &[1.0, 2.0], 1, &mut rng).unwrap();
        assert!(pd.cond_mean.iter().all(|m| *m == 2.0));
        let q = extract_quantiles(&pd, &[0.05]).unwrap()[0];
        let target = 2.0 - 1.6448536269514722;
        // Asymptotic sd of a sample quantile: sqrt(p (1-p) / n) / phi(z_p).
        let phi = (-0.5f64 * 1.6448536269514722f64.powi(2)).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let se = (0.05f64 * 0.95 / 20_000.0).sqrt() / phi;
        assert!((q - target).abs() < 3.0 * se, "{q} vs {target}");
    }

    #[test]
    fn single_draw_mean_is_the_linear_predictor() {
        let d = point_draws(&[0.3, -1.2], &[0.0, 0.0], 0.5, 0.0, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pd = simulate_predictive(&d, &[2.0, 0.5], 3, &mut rng).unwrap();
        assert_eq!(pd.cond_mean, vec![0.3 * 2.0 - 1.2 * 0.5]);
        assert_eq!(pd.cond_var, vec![0.5f64.exp()]);
    }

    #[test]
    fn two_component_mixture_averages_conditional_means() {
        let mut d = point_draws(&[-3.0], &[0.0], 0.0, 0.0, 10_000);
        for p in d.draws.iter_mut().skip(5_000) {
            p.beta0[0] = 3.0;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pd = simulate_predictive(&d, &[1.0], 1, &mut rng).unwrap();
        assert!((mean(&pd.draws) - mean(&pd.cond_mean)).abs() < 3.0 * std_dev(&pd.draws) / 100.0);
        // Bimodal: little mass near the midpoint relative to the modes.
        let near = |c: f64| pd.draws.iter().filter(|y| (*y - c).abs() < 0.5).count();
        assert!(near(0.0) * 5 < near(3.0));
    }

    #[test]
    fn propagation_adds_random_walk_and_ar_variance() {
        // Var(beta_{T+h}) = h v x^2 and the AR(1) spreads the log variance.
        let h = 4;
        let d = point_draws(&[0.0], &[0.5], 0.0, 0.0, 40_000);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pd = simulate_predictive(&d, &[2.0], h, &mut rng).unwrap();
        let v = crate::stats::variance(&pd.cond_mean);
        let target = h as f64 * 0.25 * 4.0;
        assert!((v / target - 1.0).abs() < 0.05, "{v}");

        let d = point_draws(&[0.0], &[0.0], 0.0, 0.3, 40_000);
        let pd = simulate_predictive(&d, &[1.0], h, &mut rng).unwrap();
        let lv: Vec<f64> = pd.cond_var.iter().map(|v| v.ln()).collect();
        let target: f64 = (0..h).map(|i| 0.3 * 0.81f64.powi(i as i32)).sum();
        assert!((crate::stats::variance(&lv) / target - 1.0).abs() < 0.05);
    }

    #[test]
    fn per_draw_conditional_is_symmetric() {
        let d = point_draws(&[1.0], &[0.0], 1.0, 0.0, 100_000);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pd = simulate_predictive(&d, &[1.0], 1, &mut rng).unwrap();
        assert!(skewness(&pd.draws).abs() < 0.05);
    }

    #[test]
    fn rejects_bad_inputs() {
        let d = point_draws(&[1.0], &[0.0], 0.0, 0.0, 200);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        assert!(matches!(simulate_predictive(&d, &[1.0], 0, &mut rng), Err(Error::Parameter(_))));
        assert!(matches!(simulate_predictive(&d, &[1.0, 2.0], 1, &mut rng), Err(Error::Shape(_))));
        let pd = simulate_predictive(&d, &[1.0], 1, &mut rng).unwrap();
        assert!(extract_quantiles(&pd, &[0.0]).is_err());
        assert!(extract_quantiles(&pd, &[1.0]).is_err());
        let small = PredictiveDensity {
            draws: pd.draws[..99].to_vec(),
            ..pd
        };
        assert!(extract_quantiles(&small, &[0.5]).is_err());
    }

    #[test]
    fn quantile_convention_and_degenerate_draws() {
        let pd = PredictiveDensity {
            origin: None,
            horizon: 1,
            draws: (1..=100).rev().map(f64::from).collect(),
            cond_mean: vec![],
            cond_var: vec![],
        };
        let q = extract_quantiles(&pd, &[0.05, 0.5]).unwrap();
        assert!((q[0] - 5.95).abs() < 1e-12);
        assert_eq!(q[1], 50.5);
        let flat = PredictiveDensity {
            draws: vec![4.2; 150],
            ..pd
        };
        assert_eq!(extract_quantiles(&flat, &[0.01, 0.5, 0.99]).unwrap(), vec![4.2; 3]);
    }

    #[test]
    fn path_csv_round_trip() {
        let path = QuantilePath {
            horizon: 4,
            probs: vec![0.05, 0.95],
            origins: vec![yq("2000-Q1"), yq("2000-Q2")],
            quantiles: vec![vec![-1.25, 3.5], vec![-0.1, 2.0 / 3.0]],
            realized: vec![Some(1.0), None],
        };
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("q.csv");
        path.write_csv(&f).unwrap();
        assert_eq!(QuantilePath::read_csv(&f).unwrap(), path);
        assert_eq!(path.series(0.95).unwrap(), vec![3.5, 2.0 / 3.0]);
        assert!(path.series(0.5).is_err());
    }

    fn synthetic_dataset(t_len: usize, seed: u64, break_at: Option<usize>) -> RegressionDataset {
        let mut rng = rng_for(seed, &[]);
        let start = yq("1970-Q1");
        let mut targets = Vec::new();
        let mut regressors = Vec::new();
        for t in 0..t_len {
            let x = std_normal(&mut rng);
            let sd = if break_at.is_some_and(|b| t >= b) { 3.0 } else { 0.5 };
            targets.push(Some(2.0 + 0.5 * x + sd * std_normal(&mut rng)));
            regressors.push(vec![1.0, x]);
        }
        let origins = (0..t_len).map(|t| start.add_quarters(t as i64)).collect();
        RegressionDataset::new(1, vec!["const".into(), "x".into()], origins, targets, regressors).unwrap()
    }

    fn quick_config(seed: u64) -> ForecastConfig {
        ForecastConfig {
            sampler: SamplerConfig {
                n_draws: 1_500,
                burn_in: 500,
                thin: 3,
                seed,
                ..Default::default()
            },
            min_training: 80,
            ..Default::default()
        }
    }

    #[test]
    fn recursive_forecast_is_reproducible_and_tracks_information() {
        let data = synthetic_dataset(86, 1, None);
        let spec = TvpSvModelSpec::new(1, 2);
        let start = data.origins[81];
        let a = recursive_forecast(&data, &spec, &quick_config(7), start).unwrap();
        let b = recursive_forecast(&data, &spec, &quick_config(7), start).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 5);
        // The second origin alone reproduces the joint run's second row.
        let solo = recursive_forecast(&data, &spec, &quick_config(7), data.origins[82]).unwrap();
        assert_eq!(solo.quantiles[0], a.quantiles[1]);
        assert_eq!(a.realized[0], data.targets[81]);
        for q in &a.quantiles {
            assert!(q[0] <= q[1]);
        }
        // Too little history.
        assert!(matches!(
            recursive_forecast(&data, &spec, &quick_config(7), data.origins[40]),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn constant_dgp_gives_flat_lower_quantile() {
        let data = synthetic_dataset(100, 2, None);
        let mut data = data;
        // Fix the origin regressors so the path varies only through estimation.
        for r in data.regressors.iter_mut().skip(80) {
            r[1] = 0.0;
        }
        let spec = TvpSvModelSpec::new(1, 2);
        let path = recursive_forecast(&data, &spec, &quick_config(3), data.origins[81]).unwrap();
        let q05 = path.series(0.05).unwrap();
        let level = mean(&q05.iter().map(|q| q.abs()).collect::<Vec<_>>());
        assert!(std_dev(&q05) < 0.25 * level, "sd {} level {level}", std_dev(&q05));
    }
}
