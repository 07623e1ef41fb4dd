//! Quantile scores, relative mean scores, cumulative score paths and the
//! dispersion of predicted tail quantiles over sub-periods.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::date::{Period, YearQuarter};
use crate::error::{Error, Result};
use crate::forecast::QuantilePath;
use crate::series::fmt_num;
use crate::stats::{mean, std_dev};

/// Check loss of quantile forecast `q` for outcome `y`:
/// `(y - q) (tau - 1{y < q})`.
pub fn quantile_score(q: f64, y: f64, tau: f64) -> f64 {
    debug_assert!(tau > 0.0 && tau < 1.0);
    let u = y - q;
    if u < 0.0 {
        u * (tau - 1.0)
    } else {
        u * tau
    }
}

/// Per-origin scores of one model at one probability and horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSeries {
    pub model: String,
    pub horizon: usize,
    pub tau: f64,
    pub origins: Vec<YearQuarter>,
    pub scores: Vec<f64>,
}

impl ScoreSeries {
    /// Scores every origin of `path` whose outcome is known.
    pub fn from_path(model: &str, path: &QuantilePath, tau: f64) -> Result<Self> {
        let q = path.series(tau)?;
        let mut out = ScoreSeries {
            model: model.to_string(),
            horizon: path.horizon,
            tau,
            origins: Vec::new(),
            scores: Vec::new(),
        };
        for (i, o) in path.origins.iter().enumerate() {
            if let Some(y) = path.realized[i] {
                out.origins.push(*o);
                out.scores.push(quantile_score(q[i], y, tau));
            }
        }
        Ok(out)
    }

    fn masked(&self, keep: impl Fn(YearQuarter) -> bool) -> Vec<f64> {
        self.origins
            .iter()
            .zip(&self.scores)
            .filter(|(o, _)| keep(**o))
            .map(|(_, s)| *s)
            .collect()
    }
}

fn check_aligned(model: &ScoreSeries, baseline: &ScoreSeries) -> Result<()> {
    if model.origins != baseline.origins {
        return Err(Error::Alignment(format!(
            "score series `{}` and `{}` cover different origins ({} vs {})",
            model.model,
            baseline.model,
            model.origins.len(),
            baseline.origins.len()
        )));
    }
    Ok(())
}

/// Mean model score over the masked origins divided by the baseline's.
pub fn relative_mean_score(model: &ScoreSeries, baseline: &ScoreSeries, keep: impl Fn(YearQuarter) -> bool) -> Result<f64> {
    check_aligned(model, baseline)?;
    let m = model.masked(&keep);
    let b = baseline.masked(&keep);
    if m.is_empty() {
        return Err(Error::input("no origins fall inside the evaluation mask"));
    }
    let bm = mean(&b);
    if !(bm > 0.0) {
        return Err(Error::Domain(format!("baseline `{}` has mean score {bm}; ratio undefined", baseline.model)));
    }
    Ok(mean(&m) / bm)
}

/// Ratio of cumulative mean scores through each origin.
pub fn recursive_mean_path(model: &ScoreSeries, baseline: &ScoreSeries) -> Result<Vec<f64>> {
    check_aligned(model, baseline)?;
    if model.scores.is_empty() {
        return Err(Error::input("empty score series"));
    }
    let (mut sm, mut sb) = (0.0, 0.0);
    model
        .scores
        .iter()
        .zip(&baseline.scores)
        .zip(&model.origins)
        .map(|((m, b), o)| {
            sm += m;
            sb += b;
            if sb > 0.0 {
                Ok(sm / sb)
            } else {
                Err(Error::Domain(format!("baseline cumulative score is zero through {o}")))
            }
        })
        .collect()
}

/// Sub-periods of the historical sample. Bounds are half-open.
pub fn default_periods() -> Vec<Period> {
    let d = |s: &str| Some(s.parse::<YearQuarter>().expect("valid literal"));
    vec![
        Period::new("full", None, None),
        Period::new("pre-WW1", None, d("1914-Q3")),
        Period::new("interwar", d("1920-Q4"), d("1939-Q3")),
        Period::new("pre-WW2", None, d("1939-Q3")),
        Period::new("post-WW2", d("1947-Q3"), None),
        Period::new("pre-GM", d("1947-Q3"), d("1984-Q1")),
        Period::new("since-GM", d("1984-Q1"), None),
    ]
}

/// Each world war plus the two years after it.
pub fn default_exclusions() -> Vec<Period> {
    let d = |s: &str| Some(s.parse::<YearQuarter>().expect("valid literal"));
    vec![
        Period::new("WW1", d("1914-Q3"), d("1920-Q4")),
        Period::new("WW2", d("1939-Q3"), d("1947-Q3")),
    ]
}

fn in_period(o: YearQuarter, period: &Period, exclusions: &[Period]) -> bool {
    period.contains(o) && !exclusions.iter().any(|e| e.contains(o))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispersionRow {
    pub period: String,
    pub prob: f64,
    pub n: usize,
    /// Sample standard deviation; `None` flags a period with fewer than two
    /// origins after masking.
    pub sd: Option<f64>,
}

/// Standard deviation of each predicted quantile series within each period,
/// after dropping excluded dates.
pub fn tail_dispersion(path: &QuantilePath, periods: &[Period], exclusions: &[Period]) -> Vec<DispersionRow> {
    let mut rows = Vec::new();
    for period in periods {
        for (k, &p) in path.probs.iter().enumerate() {
            let vals: Vec<f64> = path
                .origins
                .iter()
                .zip(&path.quantiles)
                .filter(|(o, _)| in_period(**o, period, exclusions))
                .map(|(_, q)| q[k])
                .collect();
            rows.push(DispersionRow {
                period: period.name.clone(),
                prob: p,
                n: vals.len(),
                sd: (vals.len() >= 2).then(|| std_dev(&vals)),
            });
        }
    }
    rows
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub model: String,
    pub horizon: usize,
    pub period: String,
    pub n: usize,
    pub mean_score: Option<f64>,
    /// Mean score relative to the baseline model.
    pub relative: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub baseline: String,
    pub tau: f64,
    pub rows: Vec<ReportRow>,
    pub dispersion: Vec<(String, usize, DispersionRow)>,
}

/// Mean scores and ratios for every model, horizon and period. Each model
/// is compared with the `baseline` series of the same horizon.
pub fn evaluate(series: &[ScoreSeries], baseline: &str, periods: &[Period], exclusions: &[Period]) -> Result<EvaluationReport> {
    let tau = series.first().map_or(0.0, |s| s.tau);
    let mut rows = Vec::new();
    for s in series {
        let base = series
            .iter()
            .find(|b| b.model == baseline && b.horizon == s.horizon)
            .ok_or_else(|| Error::input(format!("no `{baseline}` scores at horizon {}", s.horizon)))?;
        check_aligned(s, base)?;
        for period in periods {
            let keep = |o: YearQuarter| in_period(o, period, exclusions);
            let m = s.masked(keep);
            rows.push(ReportRow {
                model: s.model.clone(),
                horizon: s.horizon,
                period: period.name.clone(),
                n: m.len(),
                mean_score: (!m.is_empty()).then(|| mean(&m)),
                relative: relative_mean_score(s, base, keep).ok(),
            });
        }
    }
    Ok(EvaluationReport {
        baseline: baseline.to_string(),
        tau,
        rows,
        dispersion: Vec::new(),
    })
}

impl EvaluationReport {
    /// Adds the dispersion table of one model's quantile path.
    pub fn add_dispersion(&mut self, model: &str, path: &QuantilePath, periods: &[Period], exclusions: &[Period]) {
        for row in tail_dispersion(path, periods, exclusions) {
            self.dispersion.push((model.to_string(), path.horizon, row));
        }
    }

    pub fn write_csv<P: AsRef<Path>>(&self, scores: P, dispersion: P) -> Result<()> {
        let opt = |v: Option<f64>| v.map(fmt_num).unwrap_or_default();
        let mut w = csv::Writer::from_path(scores)?;
        w.write_record(["model", "horizon", "period", "n", "mean_score", "relative"])?;
        for r in &self.rows {
            w.write_record([
                r.model.clone(),
                r.horizon.to_string(),
                r.period.clone(),
                r.n.to_string(),
                opt(r.mean_score),
                opt(r.relative),
            ])?;
        }
        w.flush()?;
        let mut w = csv::Writer::from_path(dispersion)?;
        w.write_record(["model", "horizon", "period", "prob", "n", "sd"])?;
        for (m, h, r) in &self.dispersion {
            w.write_record([m.clone(), h.to_string(), r.period.clone(), fmt_num(r.prob), r.n.to_string(), opt(r.sd)])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Relative scores laid out with models as rows and period/horizon
    /// pairs as columns; the baseline row shows mean scores instead.
    pub fn to_text(&self) -> String {
        let mut cols: Vec<(String, usize)> = Vec::new();
        let mut models: Vec<String> = Vec::new();
        for r in &self.rows {
            if !cols.contains(&(r.period.clone(), r.horizon)) {
                cols.push((r.period.clone(), r.horizon));
            }
            if !models.contains(&r.model) {
                models.push(r.model.clone());
            }
        }
        let mut out = String::new();
        let _ = writeln!(out, "Quantile scores at tau = {}; ratios relative to {}", self.tau, self.baseline);
        let _ = write!(out, "{:<10}", "model");
        for (p, h) in &cols {
            let _ = write!(out, " {:>14}", format!("{p} h={h}"));
        }
        out.push('\n');
        for m in &models {
            let _ = write!(out, "{m:<10}");
            for (p, h) in &cols {
                let r = self.rows.iter().find(|r| &r.model == m && &r.period == p && r.horizon == *h);
                let v = r.and_then(|r| if *m == self.baseline { r.mean_score } else { r.relative });
                let cell = v.map_or("-".to_string(), |v| format!("{v:.3}"));
                let _ = write!(out, " {cell:>14}");
            }
            out.push('\n');
        }
        if !self.dispersion.is_empty() {
            let _ = writeln!(out, "\nStandard deviation of predicted quantiles");
            let _ = writeln!(out, "{:<10} {:>3} {:<10} {:>6} {:>5} {:>10}", "model", "h", "period", "prob", "n", "sd");
            for (m, h, r) in &self.dispersion {
                let sd = r.sd.map_or("-".to_string(), |v| format!("{v:.3}"));
                let _ = writeln!(out, "{m:<10} {h:>3} {:<10} {:>6} {:>5} {sd:>10}", r.period, r.prob, r.n);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::date::yq;
    use proptest::prelude::*;

    fn series(model: &str, scores: &[f64]) -> ScoreSeries {
        ScoreSeries {
            model: model.into(),
            horizon: 1,
            tau: 0.05,
            origins: (0..scores.len()).map(|i| yq("1950-Q1").add_quarters(i as i64)).collect(),
            scores: scores.to_vec(),
        }
    }

    #[test]
    fn hand_scores() {
        assert_eq!(quantile_score(1.5, 1.5, 0.05), 0.0);
        assert!((quantile_score(1.0, 2.0, 0.05) - 0.05).abs() < 1e-15);
        assert!((quantile_score(2.0, 1.0, 0.05) - 0.95).abs() < 1e-15);
    }

    #[test]
    fn relative_scores() {
        let a = series("tvp", &[0.428, 0.428]);
        let b = series("qr", &[0.5, 0.5]);
        assert_eq!(relative_mean_score(&a, &a, |_| true).unwrap(), 1.0);
        assert!((relative_mean_score(&a, &b, |_| true).unwrap() - 0.856).abs() < 1e-12);
        let zero = series("qr", &[0.0, 0.0]);
        assert!(relative_mean_score(&a, &zero, |_| true).is_err());
        assert!(relative_mean_score(&a, &b, |_| false).is_err());
        let short = series("qr", &[0.5]);
        assert!(matches!(relative_mean_score(&a, &short, |_| true), Err(Error::Alignment(_))));
    }

    #[test]
    fn cumulative_paths() {
        let m = series("m", &[0.0, 1.0]);
        let b = series("b", &[1.0, 1.0]);
        assert_eq!(recursive_mean_path(&m, &b).unwrap(), vec![0.0, 0.5]);
        assert_eq!(recursive_mean_path(&b, &b).unwrap(), vec![1.0, 1.0]);
        let one = series("m", &[0.3]);
        let base = series("b", &[0.6]);
        assert_eq!(recursive_mean_path(&one, &base).unwrap(), vec![0.5]);
    }

    fn path(values: &[(YearQuarter, f64, f64)]) -> QuantilePath {
        QuantilePath {
            horizon: 1,
            probs: vec![0.05, 0.95],
            origins: values.iter().map(|v| v.0).collect(),
            quantiles: values.iter().map(|v| vec![v.1, v.2]).collect(),
            realized: vec![None; values.len()],
        }
    }

    #[test]
    fn dispersion_fixtures() {
        let p = path(&[(yq("1990-Q1"), 1.0, 5.0), (yq("1990-Q2"), 3.0, 5.0), (yq("1916-Q1"), 100.0, 100.0)]);
        let periods = [Period::new("gm", Some(yq("1984-Q1")), None), Period::new("early", None, Some(yq("1984-Q1")))];
        let rows = tail_dispersion(&p, &periods, &default_exclusions());
        assert!((rows[0].sd.unwrap() - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(rows[1].sd, Some(0.0));
        // The only early origin falls in the WW1 exclusion window.
        assert_eq!(rows[2].n, 0);
        assert_eq!(rows[2].sd, None);
    }

    #[test]
    fn scores_from_path_skip_unknown_outcomes() {
        let mut p = path(&[(yq("2000-Q1"), -1.0, 3.0), (yq("2000-Q2"), 0.0, 2.0)]);
        p.realized = vec![Some(2.0), None];
        let s = ScoreSeries::from_path("tvp", &p, 0.05).unwrap();
        assert_eq!(s.origins, vec![yq("2000-Q1")]);
        assert!((s.scores[0] - 0.15).abs() < 1e-15);
        assert!(ScoreSeries::from_path("tvp", &p, 0.5).is_err());
    }

    #[test]
    fn report_layout() {
        let mut a = series("TVP", &[0.4, 0.6]);
        let mut b = series("QR", &[0.5, 0.5]);
        a.origins = vec![yq("1950-Q1"), yq("1990-Q1")];
        b.origins = a.origins.clone();
        let periods = default_periods();
        let mut r = evaluate(&[b.clone(), a.clone()], "QR", &periods, &default_exclusions()).unwrap();
        let get = |m: &str, p: &str| r.rows.iter().find(|x| x.model == m && x.period == p).unwrap().clone();
        assert_eq!(get("QR", "full").relative, Some(1.0));
        assert!((get("TVP", "since-GM").relative.unwrap() - 1.2).abs() < 1e-12);
        assert_eq!(get("TVP", "pre-WW1").relative, None);
        r.add_dispersion("TVP", &path(&[(yq("1990-Q1"), 1.0, 5.0), (yq("1990-Q2"), 3.0, 5.0)]), &periods, &[]);
        let text = r.to_text();
        assert!(text.contains("since-GM h=1"));
        assert!(text.contains("1.200"));
        let dir = tempfile::tempdir().unwrap();
        r.write_csv(dir.path().join("s.csv"), dir.path().join("d.csv")).unwrap();
        let s = std::fs::read_to_string(dir.path().join("s.csv")).unwrap();
        assert!(s.starts_with("model,horizon,period,n,mean_score,relative\n"));
    }

    proptest! {
        #[test]
        fn score_is_nonnegative_and_zero_only_at_outcome(q in -1e3f64..1e3, y in -1e3f64..1e3, tau in 0.001f64..0.999) {
            let s = quantile_score(q, y, tau);
            prop_assert!(s >= 0.0);
            prop_assert_eq!(s == 0.0, q == y);
        }

        #[test]
        fn score_is_piecewise_linear_in_q(y in -10f64..10.0, tau in 0.01f64..0.99, d in 0.01f64..5.0) {
            // Slope in q is -tau below y and 1 - tau above it.
            let below = (quantile_score(y - d, y, tau) - quantile_score(y - 2.0 * d, y, tau)) / d;
            let above = (quantile_score(y + 2.0 * d, y, tau) - quantile_score(y + d, y, tau)) / d;
            prop_assert!((below + tau).abs() < 1e-9);
            prop_assert!((above - (1.0 - tau)).abs() < 1e-9);
        }

        #[test]
        fn relative_score_is_scale_invariant(
            m in proptest::collection::vec(0.0f64..5.0, 1..30),
            c in 0.01f64..100.0,
        ) {
            let b: Vec<f64> = m.iter().map(|v| v + 0.5).collect();
            let r1 = relative_mean_score(&series("m", &m), &series("b", &b), |_| true).unwrap();
            let ms: Vec<f64> = m.iter().map(|v| v * c).collect();
            let bs: Vec<f64> = b.iter().map(|v| v * c).collect();
            let r2 = relative_mean_score(&series("m", &ms), &series("b", &bs), |_| true).unwrap();
            prop_assert!((r1 - r2).abs() < 1e-12 * (1.0 + r1));
        }
    }
}
