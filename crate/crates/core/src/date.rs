//! Year-quarter calendar arithmetic and the `YYYY-Qn` token format.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::Error;

/// A calendar quarter. Ordered chronologically.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct YearQuarter {
    year: i32,
    quarter: u8,
}

impl YearQuarter {
    pub fn new(year: i32, quarter: u8) -> Result<Self, Error> {
        if !(1..=4).contains(&quarter) {
            return Err(Error::input(format!("quarter must be 1..4, got {quarter}")));
        }
        Ok(Self { year, quarter })
    }

    pub fn year(self) -> i32 {
        self.year
    }

    pub fn quarter(self) -> u8 {
        self.quarter
    }

    /// Quarters elapsed since 0000-Q1.
    pub fn ordinal(self) -> i64 {
        i64::from(self.year) * 4 + i64::from(self.quarter) - 1
    }

    pub fn from_ordinal(ord: i64) -> Self {
        let year = ord.div_euclid(4) as i32;
        let quarter = ord.rem_euclid(4) as u8 + 1;
        Self { year, quarter }
    }

    pub fn add_quarters(self, n: i64) -> Self {
        Self::from_ordinal(self.ordinal() + n)
    }

    /// Signed number of quarters from `other` to `self`.
    pub fn quarters_since(self, other: YearQuarter) -> i64 {
        self.ordinal() - other.ordinal()
    }

    /// Decimal year at the start of the quarter, e.g. 1990-Q3 -> 1990.5.
    pub fn decimal_year(self) -> f64 {
        f64::from(self.year) + f64::from(self.quarter - 1) / 4.0
    }
}

impl fmt::Display for YearQuarter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-Q{}", self.year, self.quarter)
    }
}

impl FromStr for YearQuarter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        let s = s.trim();
        let (y, q) = s
            .split_once("-Q")
            .or_else(|| s.split_once("Q"))
            .ok_or_else(|| Error::input(format!("expected YYYY-Qn date, got `{s}`")))?;
        let year: i32 = y
            .trim_end_matches('-')
            .parse()
            .map_err(|_| Error::input(format!("bad year in `{s}`")))?;
        let quarter: u8 = q
            .parse()
            .map_err(|_| Error::input(format!("bad quarter in `{s}`")))?;
        YearQuarter::new(year, quarter)
    }
}

impl Serialize for YearQuarter {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for YearQuarter {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Half-open quarter range `[start, end)`; `None` bounds are unbounded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Period {
    pub name: String,
    #[serde(default)]
    pub start: Option<YearQuarter>,
    #[serde(default)]
    pub end: Option<YearQuarter>,
}

impl Period {
    pub fn new(name: &str, start: Option<YearQuarter>, end: Option<YearQuarter>) -> Self {
        Self {
            name: name.to_string(),
            start,
            end,
        }
    }

    pub fn contains(&self, date: YearQuarter) -> bool {
        self.start.is_none_or(|s| date >= s) && self.end.is_none_or(|e| date < e)
    }
}

#[cfg(test)]
pub(crate) fn yq(s: &str) -> YearQuarter {
    s.parse().expect("valid literal date")
}
