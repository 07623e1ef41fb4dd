//! Rolling-window linear summaries of predicted quantiles: OLS of the
//! quantile path on the regressors, per-regressor contributions and
//! coefficient profiles across horizons.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::RegressionDataset;
use crate::date::YearQuarter;
use crate::error::{Error, Result};
use crate::forecast::QuantilePath;
use crate::linalg::{independent_columns, least_squares};
use crate::series::fmt_num;
use crate::stats::t_critical;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum StdErrors {
    Classical,
    /// Newey-West with Bartlett weights.
    Hac { lags: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecompositionConfig {
    pub window: usize,
    pub std_errors: StdErrors,
    pub alpha: f64,
    /// Relative residual norm below which a column counts as collinear.
    pub collinear_tol: f64,
}

impl Default for DecompositionConfig {
    fn default() -> Self {
        Self {
            window: 40,
            std_errors: StdErrors::Classical,
            alpha: 0.05,
            collinear_tol: 1e-10,
        }
    }
}

/// One window's regression. Entries of dropped columns are `None` and
/// contribute zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowFit {
    pub window_end: YearQuarter,
    pub coefficients: Vec<Option<f64>>,
    pub std_errors: Vec<Option<f64>>,
    pub t_stats: Vec<Option<f64>>,
    pub significant: Vec<bool>,
    pub contributions: Vec<f64>,
    pub fitted: f64,
    pub model_quantile: f64,
    pub r_squared: Option<f64>,
    pub dropped: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionResult {
    pub horizon: usize,
    pub prob: f64,
    pub window: usize,
    pub columns: Vec<String>,
    pub critical_value: f64,
    pub windows: Vec<WindowFit>,
    /// Window ends with no usable regression.
    pub skipped: Vec<YearQuarter>,
}

impl DecompositionResult {
    pub fn at(&self, date: YearQuarter) -> Option<&WindowFit> {
        self.windows.iter().find(|w| w.window_end == date)
    }
}

/// Rolling OLS of the predicted `p` quantile on the regressors of its
/// forecast origin, one window per quarter.
pub fn linear_posterior_summary(
    quantiles: &QuantilePath,
    data: &RegressionDataset,
    p: f64,
    cfg: &DecompositionConfig,
) -> Result<DecompositionResult> {
    let k = data.k();
    if cfg.window < k + 2 {
        return Err(Error::param(format!("window {} is shorter than K + 2 = {}", cfg.window, k + 2)));
    }
    if !(cfg.alpha > 0.0 && cfg.alpha < 1.0) {
        return Err(Error::param(format!("significance level {} outside (0, 1)", cfg.alpha)));
    }
    if quantiles.horizon != data.horizon {
        return Err(Error::Alignment(format!(
            "quantile path horizon {} differs from dataset horizon {}",
            quantiles.horizon, data.horizon
        )));
    }
    let q = quantiles.series(p)?;
    let rows: Vec<&Vec<f64>> = quantiles
        .origins
        .iter()
        .map(|o| {
            data.row_of(*o)
                .map(|i| &data.regressors[i])
                .ok_or_else(|| Error::Alignment(format!("forecast origin {o} has no regressor row")))
        })
        .collect::<Result<_>>()?;
    let critical_value = t_critical((cfg.window - k) as f64, cfg.alpha);

    let fits: Vec<(YearQuarter, Option<WindowFit>)> = (cfg.window.saturating_sub(1)..q.len())
        .into_par_iter()
        .map(|end| {
            let lo = end + 1 - cfg.window;
            let x: Vec<Vec<f64>> = rows[lo..=end].iter().map(|r| (*r).clone()).collect();
            let fit = fit_window(&x, &q[lo..=end], &data.columns, cfg, critical_value)
                .map(|mut f| {
                    f.window_end = quantiles.origins[end];
                    f
                });
            (quantiles.origins[end], fit)
        })
        .collect();

    let mut out = DecompositionResult {
        horizon: data.horizon,
        prob: p,
        window: cfg.window,
        columns: data.columns.clone(),
        critical_value,
        windows: Vec::new(),
        skipped: Vec::new(),
    };
    for (date, fit) in fits {
        match fit {
            Some(f) => out.windows.push(f),
            None => {
                log::warn!("decomposition window ending {date} has no usable regressors; skipped");
                out.skipped.push(date);
            }
        }
    }
    Ok(out)
}

fn fit_window(x: &[Vec<f64>], q: &[f64], columns: &[String], cfg: &DecompositionConfig, crit: f64) -> Option<WindowFit> {
    let n = x.len();
    let k = columns.len();
    let (kept, dropped) = independent_columns(x, cfg.collinear_tol);
    let m = kept.len();
    if m == 0 || n <= m {
        return None;
    }
    let xm = DMatrix::from_fn(n, m, |i, j| x[i][kept[j]]);
    let y = DVector::from_column_slice(q);
    let b = least_squares(&xm, &y).ok()?;
    let resid = &y - &xm * &b;
    let xtx_inv = (xm.transpose() * &xm).try_inverse()?;
    let cov = match cfg.std_errors {
        StdErrors::Classical => {
            let s2 = resid.norm_squared() / (n - m) as f64;
            &xtx_inv * s2
        }
        StdErrors::Hac { lags } => {
            let mut s = DMatrix::zeros(m, m);
            for l in 0..=lags.min(n - 1) {
                let w = if l == 0 { 1.0 } else { 1.0 - l as f64 / (lags + 1) as f64 };
                let mut g = DMatrix::zeros(m, m);
                for t in l..n {
                    let a = xm.row(t).transpose() * resid[t];
                    let c = xm.row(t - l) * resid[t - l];
                    g += a * c;
                }
                if l == 0 {
                    s += g;
                } else {
                    s += (&g + g.transpose()) * w;
                }
            }
            &xtx_inv * s * &xtx_inv
        }
    };

    let last = &x[n - 1];
    let mut coefficients = vec![None; k];
    let mut std_errors = vec![None; k];
    let mut t_stats = vec![None; k];
    let mut significant = vec![false; k];
    let mut contributions = vec![0.0; k];
    for (j, &c) in kept.iter().enumerate() {
        let se = cov[(j, j)].max(0.0).sqrt();
        let t = if se > 0.0 { b[j] / se } else { f64::NAN };
        coefficients[c] = Some(b[j]);
        std_errors[c] = Some(se);
        t_stats[c] = t.is_finite().then_some(t);
        significant[c] = t.is_finite() && t.abs() > crit;
        contributions[c] = b[j] * last[c];
    }
    let fitted = contributions.iter().sum();
    let ybar = q.iter().sum::<f64>() / n as f64;
    let tss: f64 = q.iter().map(|v| (v - ybar).powi(2)).sum();
    let r_squared = (tss > 0.0).then(|| 1.0 - resid.norm_squared() / tss);
    Some(WindowFit {
        window_end: YearQuarter::from_ordinal(0),
        coefficients,
        std_errors,
        t_stats,
        significant,
        contributions,
        fitted,
        model_quantile: q[n - 1],
        r_squared,
        dropped: dropped.iter().map(|&j| columns[j].clone()).collect(),
    })
}

/// Tidy export of any number of decompositions.
pub fn write_decomposition_csv<P: AsRef<Path>>(results: &[DecompositionResult], path: P) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "window_end",
        "horizon",
        "prob",
        "regressor",
        "coefficient",
        "se",
        "significant",
        "contribution",
        "fitted",
        "model_quantile",
    ])?;
    let opt = |v: Option<f64>| v.map(fmt_num).unwrap_or_default();
    for r in results {
        for f in &r.windows {
            for (j, col) in r.columns.iter().enumerate() {
                w.write_record([
                    f.window_end.to_string(),
                    r.horizon.to_string(),
                    fmt_num(r.prob),
                    col.clone(),
                    opt(f.coefficients[j]),
                    opt(f.std_errors[j]),
                    f.significant[j].to_string(),
                    fmt_num(f.contributions[j]),
                    fmt_num(f.fitted),
                    fmt_num(f.model_quantile),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionRow {
    pub date: YearQuarter,
    pub regressor: String,
    pub horizon: usize,
    pub coefficient: Option<f64>,
    pub se: Option<f64>,
    pub significant: bool,
}

/// Coefficients at each date traced across horizons.
pub fn local_projections(results: &[DecompositionResult], horizons: &[usize], dates: &[YearQuarter]) -> Result<Vec<ProjectionRow>> {
    let mut gaps = Vec::new();
    let mut picked = Vec::new();
    for &h in horizons {
        match results.iter().find(|r| r.horizon == h) {
            None => gaps.push(format!("h={h}")),
            Some(r) => {
                for &d in dates {
                    match r.at(d) {
                        Some(f) => picked.push((d, h, r, f)),
                        None => gaps.push(format!("h={h} at {d}")),
                    }
                }
            }
        }
    }
    if !gaps.is_empty() {
        return Err(Error::input(format!("missing decompositions: {}", gaps.join(", "))));
    }
    if let Some(r) = results.iter().find(|r| r.columns != results[0].columns) {
        return Err(Error::Alignment(format!("horizon {} uses different regressors", r.horizon)));
    }
    picked.sort_by_key(|(d, h, _, _)| (*d, *h));
    let mut rows = Vec::new();
    for &d in dates {
        for (j, col) in results[0].columns.iter().enumerate() {
            for (_, h, _, f) in picked.iter().filter(|p| p.0 == d) {
                rows.push(ProjectionRow {
                    date: d,
                    regressor: col.clone(),
                    horizon: *h,
                    coefficient: f.coefficients[j],
                    se: f.std_errors[j],
                    significant: f.significant[j],
                });
            }
        }
    }
    Ok(rows)
}

pub fn write_projections_csv<P: AsRef<Path>>(rows: &[ProjectionRow], path: P) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["date", "regressor", "horizon", "coefficient", "se", "significant"])?;
    let opt = |v: Option<f64>| v.map(fmt_num).unwrap_or_default();
    for r in rows {
        w.write_record([
            r.date.to_string(),
            r.regressor.clone(),
            r.horizon.to_string(),
            opt(r.coefficient),
            opt(r.se),
            r.significant.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::date::yq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn fixture(n: usize, seed: u64, q_of: impl Fn(&[f64], f64) -> f64) -> (QuantilePath, RegressionDataset) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let start = yq("1960-Q1");
        let origins: Vec<YearQuarter> = (0..n).map(|i| start.add_quarters(i as i64)).collect();
        let regressors: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                vec![
                    1.0,
                    StandardNormal.sample(&mut rng),
                    2.0 + 3.0 * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng),
                ]
            })
            .collect();
        let quantiles = regressors
            .iter()
            .map(|x| {
                let e: f64 = StandardNormal.sample(&mut rng);
                vec![q_of(x, e)]
            })
            .collect();
        let data = RegressionDataset::new(
            1,
            vec!["const".into(), "x1".into(), "x2".into()],
            origins.clone(),
            vec![Some(0.0); n],
            regressors,
        )
        .unwrap();
        let path = QuantilePath {
            horizon: 1,
            probs: vec![0.05],
            origins,
            quantiles,
            realized: vec![None; n],
        };
        (path, data)
    }

    #[test]
    fn exact_linear_quantiles_are_recovered() {
        let (path, data) = fixture(60, 1, |x, _| 2.0 + 0.5 * x[1]);
        let r = linear_posterior_summary(&path, &data, 0.05, &DecompositionConfig::default()).unwrap();
        assert_eq!(r.windows.len(), 21);
        for w in &r.windows {
            assert!((w.coefficients[0].unwrap() - 2.0).abs() < 1e-10);
            assert!((w.coefficients[1].unwrap() - 0.5).abs() < 1e-10);
            assert!(w.coefficients[2].unwrap().abs() < 1e-10);
            assert!((w.r_squared.unwrap() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn constant_window_keeps_only_the_intercept() {
        let (mut path, mut data) = fixture(45, 2, |_, _| 1.7);
        for r in &mut data.regressors {
            r[1] = 0.3;
            r[2] = -2.0;
        }
        path.quantiles.iter_mut().for_each(|q| q[0] = 1.7);
        let r = linear_posterior_summary(&path, &data, 0.05, &DecompositionConfig::default()).unwrap();
        assert!(r.skipped.is_empty());
        for w in &r.windows {
            assert!((w.coefficients[0].unwrap() - 1.7).abs() < 1e-12);
            assert_eq!(w.coefficients[1], None);
            assert_eq!(w.dropped, vec!["x1".to_string(), "x2".to_string()]);
            assert!((w.fitted - 1.7).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_window_is_skipped() {
        let (path, mut data) = fixture(40, 3, |_, _| 0.0);
        for r in &mut data.regressors {
            r.iter_mut().for_each(|v| *v = 0.0);
        }
        let r = linear_posterior_summary(&path, &data, 0.05, &DecompositionConfig::default()).unwrap();
        assert!(r.windows.is_empty());
        assert_eq!(r.skipped, vec![yq("1969-Q4")]);
    }

    fn normal_equations(x: &[Vec<f64>], y: &[f64]) -> (Vec<f64>, Vec<f64>) {
        // Gauss-Jordan on X'X with the residual variance for standard errors.
        let k = x[0].len();
        let n = x.len();
        let mut a = vec![vec![0.0; 2 * k + 1]; k];
        for i in 0..k {
            for j in 0..k {
                a[i][j] = x.iter().map(|r| r[i] * r[j]).sum();
            }
            a[i][k + i] = 1.0;
            a[i][2 * k] = x.iter().zip(y).map(|(r, v)| r[i] * v).sum();
        }
        for c in 0..k {
            let piv = (c..k).max_by(|&p, &q| a[p][c].abs().total_cmp(&a[q][c].abs())).unwrap();
            a.swap(c, piv);
            let d = a[c][c];
            a[c].iter_mut().for_each(|v| *v /= d);
            for r in 0..k {
                if r != c {
                    let f = a[r][c];
                    for j in 0..=2 * k {
                        a[r][j] -= f * a[c][j];
                    }
                }
            }
        }
        let b: Vec<f64> = (0..k).map(|i| a[i][2 * k]).collect();
        let rss: f64 = x
            .iter()
            .zip(y)
            .map(|(r, v)| (v - r.iter().zip(&b).map(|(p, q)| p * q).sum::<f64>()).powi(2))
            .sum();
        let s2 = rss / (n - k) as f64;
        let se = (0..k).map(|i| (s2 * a[i][k + i]).sqrt()).collect();
        (b, se)
    }

    #[test]
    fn matches_normal_equations_oracle() {
        let (path, data) = fixture(40, 4, |x, e| 1.0 - 0.8 * x[1] + 0.2 * x[2] + e);
        let r = linear_posterior_summary(&path, &data, 0.05, &DecompositionConfig::default()).unwrap();
        assert_eq!(r.windows.len(), 1);
        let w = &r.windows[0];
        let q: Vec<f64> = path.quantiles.iter().map(|q| q[0]).collect();
        let (b, se) = normal_equations(&data.regressors, &q);
        let crit = crate::stats::t_critical(37.0, 0.05);
        for j in 0..3 {
            assert!((w.coefficients[j].unwrap() - b[j]).abs() < 1e-10);
            assert!((w.std_errors[j].unwrap() - se[j]).abs() < 1e-10);
            assert_eq!(w.significant[j], (b[j] / se[j]).abs() > crit);
        }
        assert!(w.significant[1]);
    }

    #[test]
    fn hac_errors_reduce_to_white_errors_without_lags() {
        let (path, data) = fixture(40, 5, |x, e| 1.0 + x[1] + e * (1.0 + x[1].abs()));
        let cfg = DecompositionConfig {
            std_errors: StdErrors::Hac { lags: 0 },
            ..Default::default()
        };
        let r = linear_posterior_summary(&path, &data, 0.05, &cfg).unwrap();
        let x = DMatrix::from_fn(40, 3, |i, j| data.regressors[i][j]);
        let y = DVector::from_iterator(40, path.quantiles.iter().map(|q| q[0]));
        let xtx_inv = (x.transpose() * &x).try_inverse().unwrap();
        let b = &xtx_inv * x.transpose() * &y;
        let e = &y - &x * &b;
        let mut meat = DMatrix::zeros(3, 3);
        for t in 0..40 {
            let xt = x.row(t).transpose();
            meat += &xt * xt.transpose() * e[t].powi(2);
        }
        let v = &xtx_inv * meat * &xtx_inv;
        for j in 0..3 {
            assert!((r.windows[0].std_errors[j].unwrap() - v[(j, j)].sqrt()).abs() < 1e-10);
        }
        let lagged = DecompositionConfig {
            std_errors: StdErrors::Hac { lags: 4 },
            ..Default::default()
        };
        let r4 = linear_posterior_summary(&path, &data, 0.05, &lagged).unwrap();
        assert_eq!(r4.windows[0].coefficients, r.windows[0].coefficients);
        assert_ne!(r4.windows[0].std_errors, r.windows[0].std_errors);
    }

    #[test]
    fn rejects_short_windows_and_misaligned_paths() {
        let (path, data) = fixture(40, 6, |_, e| e);
        let cfg = DecompositionConfig { window: 4, ..Default::default() };
        assert!(matches!(linear_posterior_summary(&path, &data, 0.05, &cfg), Err(Error::Parameter(_))));
        let mut shifted = path.clone();
        shifted.origins[0] = yq("1900-Q1");
        assert!(matches!(
            linear_posterior_summary(&shifted, &data, 0.05, &DecompositionConfig::default()),
            Err(Error::Alignment(_))
        ));
    }

    fn with_horizon(r: &DecompositionResult, h: usize, slope: f64) -> DecompositionResult {
        let mut out = r.clone();
        out.horizon = h;
        for w in &mut out.windows {
            w.coefficients[1] = Some(slope);
        }
        out
    }

    #[test]
    fn projections_trace_coefficients_across_horizons() {
        let (path, data) = fixture(50, 7, |x, e| 1.0 + x[1] + 0.1 * e);
        let base = linear_posterior_summary(&path, &data, 0.05, &DecompositionConfig::default()).unwrap();
        let results: Vec<_> = (1..=4).map(|h| with_horizon(&base, h, 0.5 * h as f64)).collect();
        let d = yq("1971-Q2");
        let rows = local_projections(&results, &[1, 2, 3, 4], &[d]).unwrap();
        let slope: Vec<f64> = rows.iter().filter(|r| r.regressor == "x1").map(|r| r.coefficient.unwrap()).collect();
        assert_eq!(slope, vec![0.5, 1.0, 1.5, 2.0]);
        let c: Vec<f64> = rows.iter().filter(|r| r.regressor == "const").map(|r| r.coefficient.unwrap()).collect();
        assert!(c.windows(2).all(|w| w[0] == w[1]));

        let single = local_projections(&results[..1], &[1], &[d]).unwrap();
        assert_eq!(single.len(), 3);
        assert_eq!(single[0].coefficient, base.at(d).unwrap().coefficients[0]);

        let err = local_projections(&results[..2], &[1, 2, 3], &[d, yq("1900-Q1")]).unwrap_err().to_string();
        assert!(err.contains("h=3") && err.contains("h=1 at 1900-Q1"));
    }

    #[test]
    fn csv_exports() {
        let (path, data) = fixture(42, 8, |x, e| x[1] + e);
        let r = linear_posterior_summary(&path, &data, 0.05, &DecompositionConfig::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("d.csv");
        write_decomposition_csv(&[r.clone()], &f).unwrap();
        let text = std::fs::read_to_string(&f).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "window_end,horizon,prob,regressor,coefficient,se,significant,contribution,fitted,model_quantile");
        assert_eq!(lines.len(), 1 + 3 * 3);
        let rows = local_projections(&[r], &[1], &[yq("1970-Q2")]).unwrap();
        write_projections_csv(&rows, dir.path().join("p.csv")).unwrap();
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn contributions_sum_to_fitted(seed in 0u64..1000) {
            let (path, data) = fixture(50, seed, |x, e| 0.5 - x[1] + 0.3 * x[2] + e);
            let r = linear_posterior_summary(&path, &data, 0.05, &DecompositionConfig::default()).unwrap();
            for w in &r.windows {
                let x = &data.regressors[data.row_of(w.window_end).unwrap()];
                let direct: f64 = (0..3).map(|j| w.coefficients[j].unwrap() * x[j]).sum();
                prop_assert!((w.contributions.iter().sum::<f64>() - w.fitted).abs() < 1e-10);
                prop_assert!((direct - w.fitted).abs() < 1e-10);
            }
        }

        #[test]
        fn rescaling_a_column_rescales_its_coefficient(seed in 0u64..1000, c in 0.01f64..100.0) {
            let (path, data) = fixture(44, seed, |x, e| 0.5 - x[1] + 0.3 * x[2] + e);
            let mut scaled = data.clone();
            scaled.regressors.iter_mut().for_each(|r| r[2] *= c);
            let cfg = DecompositionConfig::default();
            let a = linear_posterior_summary(&path, &data, 0.05, &cfg).unwrap();
            let b = linear_posterior_summary(&path, &scaled, 0.05, &cfg).unwrap();
            for (u, v) in a.windows.iter().zip(&b.windows) {
                prop_assert!((u.coefficients[2].unwrap() / c - v.coefficients[2].unwrap()).abs() < 1e-10);
                for j in 0..3 {
                    prop_assert!((u.contributions[j] - v.contributions[j]).abs() < 1e-10);
                    prop_assert!((u.t_stats[j].unwrap() - v.t_stats[j].unwrap()).abs() < 1e-10);
                }
                prop_assert!((u.fitted - v.fitted).abs() < 1e-10);
            }
        }

        #[test]
        fn flags_follow_the_critical_value(seed in 0u64..1000) {
            let (path, data) = fixture(48, seed, |x, e| 0.2 * x[1] + e);
            let r = linear_posterior_summary(&path, &data, 0.05, &DecompositionConfig::default()).unwrap();
            let crit = crate::stats::t_critical(37.0, 0.05);
            for w in &r.windows {
                for j in 0..3 {
                    let t = w.coefficients[j].unwrap() / w.std_errors[j].unwrap();
                    prop_assert_eq!(w.significant[j], t.abs() > crit);
                }
            }
        }
    }
}
