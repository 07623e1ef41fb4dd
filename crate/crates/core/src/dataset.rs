//! Direct-horizon regression datasets.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::date::YearQuarter;
use crate::error::{Error, Result};
use crate::preprocess::growth_target;
use crate::series::{fmt_num, QuarterlySeries};

pub const INTERCEPT: &str = "intercept";
pub const LAG_GROWTH: &str = "lag_growth";

/// Predictor columns appended after the intercept and lagged growth.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSelection {
    pub predictors: Vec<String>,
}

impl ColumnSelection {
    /// Intercept, lagged growth and financial stress.
    pub fn baseline(stress: &str) -> Self {
        Self {
            predictors: vec![stress.to_string()],
        }
    }

    /// Baseline plus credit growth and house-price growth.
    pub fn extended(stress: &str, credit: &str, house: &str) -> Self {
        Self {
            predictors: vec![stress.to_string(), credit.to_string(), house.to_string()],
        }
    }
}

/// Rows of `(x_t, y_{t+h})` on consecutive origins `t`.
///
/// The trailing `h` origins, whose targets are not yet observed, are kept
/// with `target = None` so the latest design row is available for
/// forecasting.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionDataset {
    pub horizon: usize,
    pub columns: Vec<String>,
    pub origins: Vec<YearQuarter>,
    pub targets: Vec<Option<f64>>,
    pub regressors: Vec<Vec<f64>>,
}

impl RegressionDataset {
    pub fn new(
        horizon: usize,
        columns: Vec<String>,
        origins: Vec<YearQuarter>,
        targets: Vec<Option<f64>>,
        regressors: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let ds = Self {
            horizon,
            columns,
            origins,
            targets,
            regressors,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.origins.len();
        if self.horizon == 0 {
            return Err(Error::param("horizon must be at least 1"));
        }
        if self.targets.len() != n || self.regressors.len() != n {
            return Err(Error::shape(format!(
                "{n} origins but {} targets and {} regressor rows",
                self.targets.len(),
                self.regressors.len()
            )));
        }
        let k = self.columns.len();
        for (i, row) in self.regressors.iter().enumerate() {
            if row.len() != k {
                return Err(Error::shape(format!("row {i} has {} regressors, expected {k}", row.len())));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::input(format!("row {} has non-finite regressors", self.origins[i])));
            }
        }
        if self.targets.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::input("non-finite target"));
        }
        for w in self.origins.windows(2) {
            if w[1].quarters_since(w[0]) != 1 {
                return Err(Error::input(format!("origins {} and {} are not consecutive", w[0], w[1])));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.origins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.origins.is_empty()
    }

    pub fn k(&self) -> usize {
        self.columns.len()
    }

    /// Number of leading rows with an observed target.
    pub fn n_observed(&self) -> usize {
        self.targets.iter().take_while(|t| t.is_some()).count()
    }

    /// Rows whose target date lies on or before `date`; the information set
    /// of a forecaster standing at `date`.
    pub fn observed_through(&self, date: YearQuarter) -> Self {
        let h = self.horizon as i64;
        let keep: Vec<usize> = (0..self.len())
            .filter(|&i| self.targets[i].is_some() && self.origins[i].add_quarters(h) <= date)
            .collect();
        self.subset(&keep)
    }

    /// Leading rows with observed targets only.
    pub fn training(&self) -> Self {
        let n = self.n_observed();
        self.subset(&(0..n).collect::<Vec<_>>())
    }

    pub fn subset(&self, rows: &[usize]) -> Self {
        Self {
            horizon: self.horizon,
            columns: self.columns.clone(),
            origins: rows.iter().map(|&i| self.origins[i]).collect(),
            targets: rows.iter().map(|&i| self.targets[i]).collect(),
            regressors: rows.iter().map(|&i| self.regressors[i].clone()).collect(),
        }
    }

    pub fn row_of(&self, origin: YearQuarter) -> Option<usize> {
        let off = origin.quarters_since(*self.origins.first()?);
        (0..self.len() as i64).contains(&off).then_some(off as usize)
    }

    /// Observed targets; panics if any row lacks one.
    pub fn y(&self) -> Vec<f64> {
        self.targets
            .iter()
            .map(|t| t.expect("training rows carry targets"))
            .collect()
    }

    pub fn write_csv<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["date".to_string(), "target".to_string()];
        header.extend(self.columns.iter().cloned());
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut rec = vec![
                self.origins[i].to_string(),
                self.targets[i].map(fmt_num).unwrap_or_default(),
            ];
            rec.extend(self.regressors[i].iter().map(|v| fmt_num(*v)));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<P: AsRef<Path>>(path: P, horizon: usize) -> Result<Self> {
        let path = path.as_ref();
        let file = path.display().to_string();
        let schema = |detail: String| Error::Schema {
            file: file.clone(),
            detail,
        };
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
        let headers = rdr.headers()?.clone();
        if headers.get(0) != Some("date") || headers.get(1) != Some("target") {
            return Err(schema("header must start with `date,target`".into()));
        }
        let columns: Vec<String> = headers.iter().skip(2).map(str::to_string).collect();
        let (mut origins, mut targets, mut regressors) = (Vec::new(), Vec::new(), Vec::new());
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let line = row + 2;
            origins.push(rec[0].parse().map_err(|e| schema(format!("row {line}: {e}")))?);
            targets.push(match &rec[1] {
                "" => None,
                s => Some(s.parse().map_err(|_| schema(format!("row {line}, column `target`: `{s}`")))?),
            });
            let mut xs = Vec::with_capacity(columns.len());
            for (j, name) in columns.iter().enumerate() {
                let s = rec.get(j + 2).unwrap_or("");
                xs.push(s.parse().map_err(|_| schema(format!("row {line}, column `{name}`: `{s}`")))?);
            }
            regressors.push(xs);
        }
        Self::new(horizon, columns, origins, targets, regressors)
    }
}

/// Aligns the growth target, lagged growth and predictors on their common
/// support.
///
/// `log_gdp` is the log real GDP level. The lagged-growth regressor at `t` is
/// the one-quarter annualised growth `(Y[t] - Y[t-1]) * 400`, so every
/// regressor row uses data dated `t` or earlier. Origins run over the
/// quarters where all regressors exist; the target is present when `t + h`
/// is inside the GDP sample.
pub fn assemble_dataset(
    log_gdp: &QuarterlySeries,
    predictors: &[QuarterlySeries],
    h: usize,
    selection: &ColumnSelection,
) -> Result<RegressionDataset> {
    let target = growth_target(log_gdp, h)?;
    let lag = growth_target(log_gdp, 1)?;
    // lag growth observed at t refers to the change from t-1 to t.
    let lag = QuarterlySeries::new(LAG_GROWTH, lag.start.add_quarters(1), lag.values)?;

    let mut cols: Vec<&QuarterlySeries> = vec![&lag];
    for name in &selection.predictors {
        let s = predictors
            .iter()
            .find(|s| &s.name == name)
            .ok_or_else(|| Error::Alignment(format!("predictor `{name}` not supplied")))?;
        cols.push(s);
    }
    let start = cols.iter().map(|s| s.start).max().unwrap();
    let end = cols.iter().map(|s| s.end()).min().unwrap();
    if end < start {
        return Err(Error::Alignment(format!(
            "regressors share no common quarter (latest start {start}, earliest end {end})"
        )));
    }
    let n = end.quarters_since(start) as usize + 1;
    let mut columns = vec![INTERCEPT.to_string(), LAG_GROWTH.to_string()];
    columns.extend(selection.predictors.iter().cloned());
    let origins: Vec<YearQuarter> = (0..n).map(|i| start.add_quarters(i as i64)).collect();
    let regressors = origins
        .iter()
        .map(|&d| {
            std::iter::once(1.0)
                .chain(cols.iter().map(|s| s.get(d).expect("inside common support")))
                .collect()
        })
        .collect();
    let targets: Vec<Option<f64>> = origins.iter().map(|&d| target.get(d)).collect();
    if targets.iter().all(Option::is_none) {
        return Err(Error::Alignment("no origin has an observed target".into()));
    }
    let ds = RegressionDataset {
        horizon: h,
        columns,
        origins,
        targets,
        regressors,
    };
    // Origins start after the first GDP quarter, so observed targets form a
    // prefix followed by the forecast-only rows.
    debug_assert_eq!(ds.n_observed(), ds.targets.iter().flatten().count());
    ds.validate()?;
    Ok(ds)
}
