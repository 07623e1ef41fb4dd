//! Quarterly and annual series containers plus their CSV format.
//!
//! Files carry a header row whose first column is `date` (`YYYY-Qn` for
//! quarterly data, `YYYY` for annual data) followed by one numeric column per
//! series. Empty cells are allowed only at the start or end of a column; the
//! series for that column then covers the non-empty run.

use std::path::Path;

use crate::date::YearQuarter;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct QuarterlySeries {
    pub name: String,
    pub start: YearQuarter,
    pub values: Vec<f64>,
}

impl QuarterlySeries {
    pub fn new(name: impl Into<String>, start: YearQuarter, values: Vec<f64>) -> Result<Self> {
        let name = name.into();
        if values.is_empty() {
            return Err(Error::Length {
                name,
                len: 0,
                required: 1,
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::input(format!(
                "series `{name}` has a non-finite value at {}",
                start.add_quarters(i as i64)
            )));
        }
        Ok(Self {
            name,
            start,
            values,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Last covered quarter (inclusive).
    pub fn end(&self) -> YearQuarter {
        self.start.add_quarters(self.values.len() as i64 - 1)
    }

    pub fn date(&self, i: usize) -> YearQuarter {
        self.start.add_quarters(i as i64)
    }

    pub fn dates(&self) -> impl Iterator<Item = YearQuarter> + '_ {
        (0..self.values.len()).map(|i| self.date(i))
    }

    pub fn get(&self, date: YearQuarter) -> Option<f64> {
        let off = date.quarters_since(self.start);
        if off < 0 {
            return None;
        }
        self.values.get(off as usize).copied()
    }

    pub fn renamed(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// Standardise to zero mean and unit sample variance.
    pub fn z_scored(&self) -> Result<Self> {
        let n = self.values.len();
        if n < 2 {
            return Err(Error::Length {
                name: self.name.clone(),
                len: n,
                required: 2,
            });
        }
        let mean = self.values.iter().sum::<f64>() / n as f64;
        let var = self.values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        if var <= 0.0 {
            return Err(Error::Domain(format!(
                "series `{}` is constant and cannot be standardised",
                self.name
            )));
        }
        let sd = var.sqrt();
        Ok(Self {
            name: self.name.clone(),
            start: self.start,
            values: self.values.iter().map(|v| (v - mean) / sd).collect(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnualSeries {
    pub name: String,
    pub start: i32,
    pub values: Vec<f64>,
}

impl AnnualSeries {
    pub fn new(name: impl Into<String>, start: i32, values: Vec<f64>) -> Result<Self> {
        let name = name.into();
        if values.is_empty() {
            return Err(Error::Length {
                name,
                len: 0,
                required: 1,
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::input(format!(
                "series `{name}` has a non-finite value in {}",
                start + i as i32
            )));
        }
        Ok(Self {
            name,
            start,
            values,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

fn parse_year(s: &str) -> Result<i32> {
    s.trim()
        .parse()
        .map_err(|_| Error::input(format!("expected YYYY date, got `{s}`")))
}

/// Reads a table of dated columns, enforcing consecutive dates. Returns the
/// parsed date keys (as ordinals) and, per column, its cells.
fn read_table<P: AsRef<Path>>(
    path: P,
    parse_date: impl Fn(&str) -> Result<i64>,
) -> Result<(Vec<String>, i64, Vec<Vec<Option<f64>>>)> {
    let path = path.as_ref();
    let file = path.display().to_string();
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let headers = rdr.headers()?.clone();
    if headers.get(0) != Some("date") {
        return Err(Error::Schema {
            file,
            detail: "first column must be `date`".into(),
        });
    }
    let names: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    let mut cols: Vec<Vec<Option<f64>>> = vec![Vec::new(); names.len()];
    let mut first: Option<i64> = None;
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = row + 2;
        let ord = parse_date(rec.get(0).unwrap_or("")).map_err(|e| Error::Schema {
            file: file.clone(),
            detail: format!("row {line}: {e}"),
        })?;
        let expected = first.map(|f| f + row as i64);
        match expected {
            None => first = Some(ord),
            Some(e) if e != ord => {
                return Err(Error::Schema {
                    file,
                    detail: format!("row {line}: dates are not consecutive"),
                })
            }
            _ => {}
        }
        for (j, col) in cols.iter_mut().enumerate() {
            let cell = rec.get(j + 1).unwrap_or("");
            if cell.is_empty() || cell.eq_ignore_ascii_case("na") {
                col.push(None);
            } else {
                let v: f64 = cell.parse().map_err(|_| Error::Schema {
                    file: file.clone(),
                    detail: format!("row {line}, column `{}`: `{cell}` is not a number", names[j]),
                })?;
                col.push(Some(v));
            }
        }
    }
    let first = first.ok_or_else(|| Error::Schema {
        file: file.clone(),
        detail: "no data rows".into(),
    })?;
    // Interior gaps are rejected; leading and trailing blanks trimmed later.
    for (j, col) in cols.iter().enumerate() {
        let lo = col.iter().position(Option::is_some);
        let hi = col.iter().rposition(Option::is_some);
        if let (Some(lo), Some(hi)) = (lo, hi) {
            if let Some(k) = (lo..=hi).find(|&k| col[k].is_none()) {
                return Err(Error::Schema {
                    file,
                    detail: format!("row {}, column `{}`: missing value inside the series", k + 2, names[j]),
                });
            }
        }
    }
    Ok((names, first, cols))
}

fn trim_column(col: &[Option<f64>]) -> Option<(usize, Vec<f64>)> {
    let lo = col.iter().position(Option::is_some)?;
    let hi = col.iter().rposition(Option::is_some)?;
    Some((lo, col[lo..=hi].iter().map(|v| v.unwrap()).collect()))
}

pub fn read_quarterly_csv<P: AsRef<Path>>(path: P) -> Result<Vec<QuarterlySeries>> {
    let (names, first, cols) = read_table(path, |s| Ok(s.parse::<YearQuarter>()?.ordinal()))?;
    let start = YearQuarter::from_ordinal(first);
    names
        .into_iter()
        .zip(cols)
        .filter_map(|(name, col)| {
            trim_column(&col).map(|(lo, vals)| QuarterlySeries::new(name, start.add_quarters(lo as i64), vals))
        })
        .collect()
}

pub fn read_annual_csv<P: AsRef<Path>>(path: P) -> Result<Vec<AnnualSeries>> {
    let (names, first, cols) = read_table(path, |s| parse_year(s).map(i64::from))?;
    names
        .into_iter()
        .zip(cols)
        .filter_map(|(name, col)| {
            trim_column(&col).map(|(lo, vals)| AnnualSeries::new(name, first as i32 + lo as i32, vals))
        })
        .collect()
}

/// Writes series on their union date range; uncovered cells are left empty.
pub fn write_quarterly_csv<P: AsRef<Path>>(path: P, series: &[QuarterlySeries]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["date".to_string()];
    header.extend(series.iter().map(|s| s.name.clone()));
    w.write_record(&header)?;
    if let (Some(lo), Some(hi)) = (
        series.iter().map(|s| s.start).min(),
        series.iter().map(QuarterlySeries::end).max(),
    ) {
        for k in 0..=hi.quarters_since(lo) {
            let d = lo.add_quarters(k);
            let mut rec = vec![d.to_string()];
            rec.extend(series.iter().map(|s| s.get(d).map(fmt_num).unwrap_or_default()));
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Shortest representation that parses back to the same `f64`.
pub(crate) fn fmt_num(v: f64) -> String {
    format!("{v}")
}
