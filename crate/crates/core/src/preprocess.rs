//! Series transformations that build the regression inputs.

use crate::date::YearQuarter;
use crate::error::{Error, Result};
use crate::linalg::BandedSpd;
use crate::series::{AnnualSeries, QuarterlySeries};

/// Smoothing parameter used for the long-run stress trend.
pub const SLOW_HP_LAMBDA: f64 = 5e6;

/// Annualised percent growth `h` quarters ahead, indexed by origin:
/// `(Y[t+h] - Y[t]) * (4/h) * 100` for a log-level series `Y`.
pub fn growth_target(log_level: &QuarterlySeries, h: usize) -> Result<QuarterlySeries> {
    if h == 0 {
        return Err(Error::param("horizon must be at least 1"));
    }
    if log_level.len() <= h {
        return Err(Error::Length {
            name: log_level.name.clone(),
            len: log_level.len(),
            required: h + 1,
        });
    }
    let scale = 400.0 / h as f64;
    let values = log_level
        .values
        .windows(h + 1)
        .map(|w| (w[h] - w[0]) * scale)
        .collect();
    QuarterlySeries::new(format!("growth_h{h}"), log_level.start, values)
}

/// Hodrick-Prescott decomposition. Returns `(trend, cycle)`.
///
/// The trend minimises `sum (y - tau)^2 + lambda * sum (Δ² tau)^2`. We solve
/// the equivalent system for the cycle, `(I + λ D'D) c = λ D'D y`, whose
/// right-hand side annihilates the linear component of `y` exactly; this keeps
/// the large-λ solve accurate to the size of the cycle rather than the level.
pub fn hp_detrend(series: &QuarterlySeries, lambda: f64) -> Result<(QuarterlySeries, QuarterlySeries)> {
    let n = series.len();
    if n < 4 {
        return Err(Error::Length {
            name: series.name.clone(),
            len: n,
            required: 4,
        });
    }
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::param(format!("HP lambda must be positive, got {lambda}")));
    }
    let y = &series.values;
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::input(format!("series `{}` has non-finite values", series.name)));
    }
    let mut a = BandedSpd::zeros(n, 2);
    for i in 0..n {
        a.add(i, i, 1.0);
    }
    let d = [1.0, -2.0, 1.0];
    let mut rhs = vec![0.0; n];
    for k in 0..n - 2 {
        let dy = y[k] - 2.0 * y[k + 1] + y[k + 2];
        for r in 0..3 {
            rhs[k + r] += lambda * d[r] * dy;
            for c in 0..=r {
                a.add(k + r, k + c, lambda * d[r] * d[c]);
            }
        }
    }
    let chol = a
        .cholesky()
        .ok_or_else(|| Error::Numerical("HP system not positive definite".into()))?;
    let cycle = chol.solve(&rhs);
    let trend: Vec<f64> = y.iter().zip(&cycle).map(|(v, c)| v - c).collect();
    Ok((
        QuarterlySeries::new(format!("{}_trend", series.name), series.start, trend)?,
        QuarterlySeries::new(format!("{}_cycle", series.name), series.start, cycle)?,
    ))
}

/// C¹ piecewise-quadratic interpolation of annual values onto quarters.
///
/// Annual value for year `Y` is placed at quarter `knot_quarter` of `Y`. The
/// spline has one quadratic piece per knot, centred on it, with breakpoints
/// halfway between knots. Unknowns are the spline values at the breakpoints;
/// C¹ continuity gives `z[i] + 6 z[i+1] + z[i+2] = 4 (y[i] + y[i+1])` and the
/// two outermost interior breakpoints are "not-a-knot" (second derivative
/// continuous), so quadratics are reproduced exactly. Output covers the
/// quarters from the first to the last knot.
pub fn spline_disaggregate(annual: &AnnualSeries, knot_quarter: u8) -> Result<QuarterlySeries> {
    let n = annual.len();
    if n < 3 {
        return Err(Error::Length {
            name: annual.name.clone(),
            len: n,
            required: 3,
        });
    }
    let y = &annual.values;
    let first = YearQuarter::new(annual.start, knot_quarter)?;

    // Tridiagonal system in z[1..n-1] after eliminating z[0] and z[n]
    // through the not-a-knot rows.
    let m = n - 1;
    let sub = {
        let mut v = vec![1.0; m];
        v[m - 1] = 2.0;
        v
    };
    let sup = {
        let mut v = vec![1.0; m];
        v[0] = 2.0;
        v
    };
    let mut diag = vec![6.0; m];
    let mut rhs: Vec<f64> = (0..m).map(|i| 4.0 * (y[i] + y[i + 1])).collect();
    rhs[0] = 2.0 * y[0] + 6.0 * y[1];
    rhs[m - 1] = 6.0 * y[n - 2] + 2.0 * y[n - 1];
    let inner = thomas(&sub, &mut diag, &sup, &mut rhs);
    let mut z = Vec::with_capacity(n + 1);
    z.push(inner[1] + 2.0 * (y[0] - y[1]));
    z.extend_from_slice(&inner);
    z.push(inner[m - 2] - 2.0 * (y[n - 2] - y[n - 1]));

    const HALF: f64 = 2.0; // half the knot spacing, in quarters
    let quarters = 4 * (n - 1) + 1;
    let values = (0..quarters)
        .map(|k| {
            let piece = ((k + 2) / 4).min(n - 1);
            let u = k as f64 - 4.0 * piece as f64;
            let (zl, yc, zr) = (z[piece], y[piece], z[piece + 1]);
            yc + (zr - zl) / (2.0 * HALF) * u + (zl - 2.0 * yc + zr) / (2.0 * HALF * HALF) * u * u
        })
        .collect();
    QuarterlySeries::new(annual.name.clone(), first, values)
}

fn thomas(sub: &[f64], diag: &mut [f64], sup: &[f64], rhs: &mut [f64]) -> Vec<f64> {
    let m = diag.len();
    for i in 1..m {
        let w = sub[i] / diag[i - 1];
        diag[i] -= w * sup[i - 1];
        rhs[i] -= w * rhs[i - 1];
    }
    let mut x = vec![0.0; m];
    x[m - 1] = rhs[m - 1] / diag[m - 1];
    for i in (0..m - 1).rev() {
        x[i] = (rhs[i] - sup[i] * x[i + 1]) / diag[i];
    }
    x
}

/// Annualised average log growth over the trailing twelve quarters, in
/// percent: `(ln X[t] - ln X[t-12]) / 3 * 100`.
pub fn avg_log_growth_3y(series: &QuarterlySeries) -> Result<QuarterlySeries> {
    const LAG: usize = 12;
    if series.len() <= LAG {
        return Err(Error::Length {
            name: series.name.clone(),
            len: series.len(),
            required: LAG + 1,
        });
    }
    if let Some(i) = series.values.iter().position(|&v| !(v > 0.0)) {
        return Err(Error::Domain(format!(
            "series `{}` must be strictly positive; {} at {}",
            series.name,
            series.values[i],
            series.date(i)
        )));
    }
    let values = series
        .values
        .windows(LAG + 1)
        .map(|w| (w[LAG].ln() - w[0].ln()) / 3.0 * 100.0)
        .collect();
    QuarterlySeries::new(
        format!("{}_g3y", series.name),
        series.start.add_quarters(LAG as i64),
        values,
    )
}
