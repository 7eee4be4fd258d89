//! Calendar conventions shared across the pipeline.
//!
//! Horizon arithmetic is calendar-month addition with the day-of-month
//! clamped to the target month's end (2022-01-31 + 1 month = 2022-02-28),
//! matching how rating dates and target dates are scheduled. Trading-day
//! alignment lives in [`crate::market`]; everything here is pure calendar.

use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, Months, NaiveDate};
use serde::{Deserialize, Serialize};

/// The five forward-looking horizons every rating query covers, in months.
pub const HORIZONS_MONTHS: [u32; 5] = [1, 3, 6, 12, 18];

/// Calendar-month addition with end-of-month clamping. Negative `months`
/// moves backwards.
pub fn add_months(date: NaiveDate, months: i32) -> NaiveDate {
    if months >= 0 {
        date.checked_add_months(Months::new(months as u32))
            .expect("date arithmetic overflow")
    } else {
        date.checked_sub_months(Months::new(months.unsigned_abs()))
            .expect("date arithmetic underflow")
    }
}

/// Target dates for a rating released on `rating_date`: one per horizon,
/// in horizon order.
pub fn horizon_dates(rating_date: NaiveDate) -> [NaiveDate; 5] {
    HORIZONS_MONTHS.map(|h| add_months(rating_date, h as i32))
}

/// A calendar month, used to key monthly news bundles, rating start dates,
/// and per-month evaluation cells. Serialized as `YYYY-MM`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct YearMonth {
    pub year: i32,
    pub month: u32,
}

impl YearMonth {
    pub fn new(year: i32, month: u32) -> Option<Self> {
        (1..=12).contains(&month).then_some(Self { year, month })
    }

    pub fn of(date: NaiveDate) -> Self {
        Self {
            year: date.year(),
            month: date.month(),
        }
    }

    pub fn first_day(self) -> NaiveDate {
        NaiveDate::from_ymd_opt(self.year, self.month, 1).expect("valid year-month")
    }

    pub fn next(self) -> Self {
        if self.month == 12 {
            Self {
                year: self.year + 1,
                month: 1,
            }
        } else {
            Self {
                year: self.year,
                month: self.month + 1,
            }
        }
    }

    pub fn prev(self) -> Self {
        if self.month == 1 {
            Self {
                year: self.year - 1,
                month: 12,
            }
        } else {
            Self {
                year: self.year,
                month: self.month - 1,
            }
        }
    }

    pub fn contains(self, date: NaiveDate) -> bool {
        Self::of(date) == self
    }

    /// Inclusive range of months from `self` through `end`.
    pub fn through(self, end: YearMonth) -> Vec<YearMonth> {
        let mut out = Vec::new();
        let mut cur = self;
        while cur <= end {
            out.push(cur);
            cur = cur.next();
        }
        out
    }
}

impl fmt::Display for YearMonth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

#[derive(Debug, thiserror::Error)]
#[error("invalid year-month `{0}`, expected YYYY-MM")]
pub struct ParseYearMonthError(String);

impl FromStr for YearMonth {
    type Err = ParseYearMonthError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ParseYearMonthError(s.to_string());
        let (y, m) = s.split_once('-').ok_or_else(err)?;
        let year: i32 = y.parse().map_err(|_| err())?;
        let month: u32 = m.parse().map_err(|_| err())?;
        YearMonth::new(year, month).ok_or_else(err)
    }
}

impl Serialize for YearMonth {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for YearMonth {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
