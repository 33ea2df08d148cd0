use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use super::AggregationError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DateUnit {
    Days,
    Years,
}

impl DateUnit {
    pub fn parse(s: &str) -> Result<Self, AggregationError> {
        match s.trim().to_ascii_lowercase().as_str() {
            "days" | "day" | "d" => Ok(DateUnit::Days),
            "years" | "year" | "y" => Ok(DateUnit::Years),
            other => Err(AggregationError::Domain(format!("unknown date unit '{other}'"))),
        }
    }
}

pub fn parse_date(s: &str) -> Result<NaiveDate, AggregationError> {
    NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d")
        .map_err(|_| AggregationError::DateParse(s.to_string()))
}

/// Signed difference `b - a`.
///
/// `Years` counts whole years elapsed: the anniversary of a Feb 29 start in a
/// common year falls on Mar 1.
pub fn date_diff(a: NaiveDate, b: NaiveDate, unit: DateUnit) -> i64 {
    match unit {
        DateUnit::Days => (b - a).num_days(),
        DateUnit::Years => {
            if b < a {
                return -date_diff(b, a, unit);
            }
            let mut years = i64::from(b.year() - a.year());
            if (b.month(), b.day()) < (a.month(), a.day()) {
                years -= 1;
            }
            years
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(s: &str) -> NaiveDate {
        parse_date(s).unwrap()
    }

    #[test]
    fn same_date_is_zero() {
        assert_eq!(date_diff(d("2021-05-05"), d("2021-05-05"), DateUnit::Days), 0);
        assert_eq!(date_diff(d("2021-05-05"), d("2021-05-05"), DateUnit::Years), 0);
    }

    #[test]
    fn one_year_and_leap_span() {
        assert_eq!(date_diff(d("1993-01-01"), d("1994-01-01"), DateUnit::Years), 1);
        assert_eq!(date_diff(d("2020-02-28"), d("2021-03-01"), DateUnit::Days), 367);
    }

    #[test]
    fn leap_day_anniversary_lands_on_march_first() {
        assert_eq!(date_diff(d("2020-02-29"), d("2021-02-28"), DateUnit::Years), 0);
        assert_eq!(date_diff(d("2020-02-29"), d("2021-03-01"), DateUnit::Years), 1);
        assert_eq!(date_diff(d("2021-03-01"), d("2020-02-29"), DateUnit::Years), -1);
    }

    #[test]
    fn malformed_dates_fail() {
        assert!(matches!(parse_date("2021-13-01"), Err(AggregationError::DateParse(_))));
        assert!(parse_date("yesterday").is_err());
    }
}
