//! Linear quantile regression baseline.
//!
//! The solver warm-starts with smoothed iteratively reweighted least squares
//! and then walks to an exact optimal vertex of the linear program by
//! descent along edge directions with exact line searches.

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

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QrConfig {
    /// Final smoothing level and convergence tolerance of the warm start.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for QrConfig {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileFit {
    pub tau: f64,
    pub columns: Vec<String>,
    pub coefficients: Vec<f64>,
    /// Attained sum of check losses.
    pub objective: f64,
}

/// Check loss `u (tau - 1{u < 0})`.
pub fn check_loss(u: f64, tau: f64) -> f64 {
    if u < 0.0 {
        u * (tau - 1.0)
    } else {
        u * tau
    }
}

pub fn objective(x: &[Vec<f64>], y: &[f64], b: &[f64], tau: f64) -> f64 {
    x.iter().zip(y).map(|(xi, yi)| check_loss(yi - dot(xi, b), tau)).sum()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Fits the `tau` quantile of `y` given the rows of `x`.
pub fn fit_rows(x: &[Vec<f64>], y: &[f64], columns: &[String], tau: f64, cfg: &QrConfig) -> Result<QuantileFit> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::param(format!("tau must lie in (0, 1), got {tau}")));
    }
    let n = x.len();
    let k = columns.len();
    if y.len() != n || x.iter().any(|r| r.len() != k) {
        return Err(Error::shape("design and targets disagree in shape"));
    }
    if n < k + 1 {
        return Err(Error::input(format!("quantile regression needs at least K + 1 = {} rows, have {n}", k + 1)));
    }
    let (_, dropped) = independent_columns(x, 1e-10);
    if !dropped.is_empty() {
        return Err(Error::RankDeficient {
            columns: dropped.iter().map(|&j| columns[j].clone()).collect(),
        });
    }
    let warm = irls(x, y, tau, cfg)?;
    let b = vertex_descent(x, y, tau, &warm)?;
    let obj = objective(x, y, &b, tau);
    Ok(QuantileFit {
        tau,
        columns: columns.to_vec(),
        coefficients: b,
        objective: obj,
    })
}

pub fn fit_quantile_regression(data: &RegressionDataset, tau: f64, cfg: &QrConfig) -> Result<QuantileFit> {
    let train = data.training();
    fit_rows(&train.regressors, &train.y(), &data.columns, tau, cfg)
}

pub fn predict_quantile(fit: &QuantileFit, x: &[f64]) -> Result<f64> {
    if x.len() != fit.coefficients.len() {
        return Err(Error::shape(format!(
            "regressor vector has {} entries, fit has {}",
            x.len(),
            fit.coefficients.len()
        )));
    }
    Ok(dot(x, &fit.coefficients))
}

/// Smoothed IRLS: weights `|tau - 1{r < 0}| / max(|r|, eps)` with `eps`
/// shrunk tenfold each time the coefficients settle, down to `cfg.tol`.
fn irls(x: &[Vec<f64>], y: &[f64], tau: f64, cfg: &QrConfig) -> Result<Vec<f64>> {
    let n = x.len();
    let k = x[0].len();
    let xm = DMatrix::from_fn(n, k, |i, j| x[i][j]);
    let mut b: Vec<f64> = least_squares(&xm, &DVector::from_column_slice(y))?.iter().copied().collect();
    let scale = y.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1.0);
    let mut eps = 1e-2 * scale;
    for _ in 0..cfg.max_iter {
        let mut xtwx = DMatrix::<f64>::zeros(k, k);
        let mut xtwy = DVector::<f64>::zeros(k);
        for i in 0..n {
            let r = y[i] - dot(&x[i], &b);
            let w = if r < 0.0 { 1.0 - tau } else { tau } / r.abs().max(eps);
            for a in 0..k {
                xtwy[a] += w * x[i][a] * y[i];
                for c in 0..=a {
                    xtwx[(a, c)] += w * x[i][a] * x[i][c];
                }
            }
        }
        for a in 0..k {
            for c in 0..a {
                xtwx[(c, a)] = xtwx[(a, c)];
            }
        }
        let next: Vec<f64> = match xtwx.clone().cholesky() {
            Some(ch) => ch.solve(&xtwy).iter().copied().collect(),
            None => least_squares(&xtwx, &xtwy)?.iter().copied().collect(),
        };
        let change = next.iter().zip(&b).map(|(a, c)| (a - c).abs()).fold(0.0, f64::max);
        let size = next.iter().map(|v| v.abs()).fold(0.0, f64::max);
        b = next;
        if change <= cfg.tol * (1.0 + size) {
            if eps <= cfg.tol * scale {
                break;
            }
            eps = (eps / 10.0).max(cfg.tol * scale);
        }
    }
    Ok(b)
}

/// Solves `x_B b = y_B` for a candidate basis.
fn basis_solution(x: &[Vec<f64>], y: &[f64], basis: &[usize]) -> Option<(Vec<f64>, DMatrix<f64>)> {
    let k = basis.len();
    let xb = DMatrix::from_fn(k, k, |a, c| x[basis[a]][c]);
    let inv = xb.clone().try_inverse()?;
    let yb = DVector::from_fn(k, |a, _| y[basis[a]]);
    let b = &inv * yb;
    Some((b.iter().copied().collect(), inv))
}

/// Picks the `K` observations closest to the warm start that form a
/// nonsingular basis.
fn initial_basis(x: &[Vec<f64>], y: &[f64], warm: &[f64]) -> Result<Vec<usize>> {
    let k = warm.len();
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = (y[a] - dot(&x[a], warm)).abs();
        let rb = (y[b] - dot(&x[b], warm)).abs();
        ra.total_cmp(&rb)
    });
    let mut basis: Vec<usize> = Vec::with_capacity(k);
    for &i in &order {
        let mut trial = basis.clone();
        trial.push(i);
        let rows: Vec<Vec<f64>> = trial.iter().map(|&r| x[r].clone()).collect();
        // Rows independent iff columns of the transpose are.
        let transposed: Vec<Vec<f64>> = (0..k).map(|c| rows.iter().map(|r| r[c]).collect()).collect();
        if independent_columns(&transposed, 1e-10).1.is_empty() {
            basis = trial;
            if basis.len() == k {
                return Ok(basis);
            }
        }
    }
    Err(Error::Numerical("no nonsingular basis among the observations".into()))
}

/// Exact descent over vertices of the check-loss LP. At a vertex every edge
/// direction frees one basic observation; the objective along an edge is
/// convex piecewise linear, minimised exactly at a kink where another
/// observation enters the basis.
fn vertex_descent(x: &[Vec<f64>], y: &[f64], tau: f64, warm: &[f64]) -> Result<Vec<f64>> {
    let n = x.len();
    let k = warm.len();
    let mut basis = initial_basis(x, y, warm)?;
    let (mut b, mut inv) = basis_solution(x, y, &basis).expect("initial basis is nonsingular");
    let mut in_basis = vec![false; n];
    for &i in &basis {
        in_basis[i] = true;
    }
    let scale = y.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1.0);
    let zero_tol = 1e-12 * scale;

    for _ in 0..(20 * n + 100) {
        let r: Vec<f64> = (0..n).map(|i| y[i] - dot(&x[i], &b)).collect();
        let mut best: Option<(f64, usize, Vec<f64>)> = None;
        for slot in 0..k {
            for sign in [1.0, -1.0] {
                // x_{B_m}' d = sign * 1{m = slot}.
                let d: Vec<f64> = (0..k).map(|a| sign * inv[(a, slot)]).collect();
                // Leaving observation's residual moves to -sign * t.
                let mut slope = if sign > 0.0 { 1.0 - tau } else { tau };
                for i in 0..n {
                    if in_basis[i] {
                        continue;
                    }
                    let g = dot(&x[i], &d);
                    slope += if r[i].abs() <= zero_tol {
                        check_loss(-g, tau)
                    } else if r[i] > 0.0 {
                        -tau * g
                    } else {
                        (1.0 - tau) * g
                    };
                }
                if slope < -1e-12 && best.as_ref().is_none_or(|(s, _, _)| slope < *s) {
                    best = Some((slope, slot, d));
                }
            }
        }
        let Some((slope0, slot, d)) = best else {
            return Ok(b);
        };
        // Kinks at t_i = r_i / g_i > 0; each raises the slope by |g_i|.
        let mut kinks: Vec<(f64, usize, f64)> = (0..n)
            .filter(|&i| !in_basis[i])
            .filter_map(|i| {
                let g = dot(&x[i], &d);
                let t = r[i] / g;
                (g != 0.0 && t > 0.0 && t.is_finite()).then_some((t, i, g.abs()))
            })
            .collect();
        kinks.sort_by(|a, c| a.0.total_cmp(&c.0));
        let mut slope = slope0;
        let mut entering = None;
        for (t, i, jump) in kinks {
            slope += jump;
            if slope >= 0.0 {
                entering = Some((t, i));
                break;
            }
        }
        let Some((_, i)) = entering else {
            return Err(Error::Numerical("check-loss objective unbounded along an edge".into()));
        };
        let mut next = basis.clone();
        next[slot] = i;
        let Some((nb, ninv)) = basis_solution(x, y, &next) else {
            return Ok(b);
        };
        if objective(x, y, &nb, tau) > objective(x, y, &b, tau) {
            return Ok(b);
        }
        in_basis[basis[slot]] = false;
        in_basis[i] = true;
        basis = next;
        b = nb;
        inv = ninv;
    }
    Ok(b)
}

/// Expanding-window refits: at each origin from `start` on, fit every `tau`
/// in `probs` on rows whose target is known by then and predict from the
/// origin's regressors.
pub fn recursive_quantile_regression(
    data: &RegressionDataset,
    probs: &[f64],
    start: YearQuarter,
    min_training: usize,
    cfg: &QrConfig,
) -> Result<QuantilePath> {
    let rows: Vec<usize> = (0..data.len()).filter(|&i| data.origins[i] >= start).collect();
    if rows.is_empty() {
        return Err(Error::Config(format!("no forecast origins at or after {start}")));
    }
    let first = data.observed_through(data.origins[rows[0]]).len();
    if first < min_training {
        return Err(Error::Config(format!(
            "origin {start} leaves {first} training rows for horizon {}, need at least {min_training}",
            data.horizon
        )));
    }
    let quantiles = rows
        .par_iter()
        .map(|&i| {
            let train = data.observed_through(data.origins[i]);
            probs
                .iter()
                .map(|&p| {
                    let fit = fit_rows(&train.regressors, &train.y(), &data.columns, p, cfg)?;
                    predict_quantile(&fit, &data.regressors[i])
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(QuantilePath {
        horizon: data.horizon,
        probs: probs.to_vec(),
        origins: rows.iter().map(|&i| data.origins[i]).collect(),
        quantiles,
        realized: rows.iter().map(|&i| data.targets[i]).collect(),
    })
}

/// Rows `tau,coefficient,value`.
pub fn write_fits_csv<P: AsRef<Path>>(path: P, fits: &[QuantileFit]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["tau", "coefficient", "value"])?;
    for f in fits {
        for (name, v) in f.columns.iter().zip(&f.coefficients) {
            w.write_record([fmt_num(f.tau), name.clone(), fmt_num(*v)])?;
        }
    }
    w.flush()?;
    Ok(())
}
