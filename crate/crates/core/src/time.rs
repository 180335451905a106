//! UTC timestamps at one-second resolution.
//!
//! Accepted input forms are `YYYY-MM-DD HH:MM:SS`, `YYYY-MM-DDTHH:MM:SS`, either
//! optionally followed by fractional seconds and a `Z` or `+00:00` suffix.
//! Output is always `YYYY-MM-DD HH:MM:SS`.

use std::fmt;
use std::ops::{Add, Sub};
use std::str::FromStr;

use chrono::{DateTime, NaiveDateTime};
use serde::{Deserialize, Serialize};

pub const SECONDS_PER_HOUR: i64 = 3600;

/// Seconds since the Unix epoch, UTC.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Timestamp(pub i64);

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unparseable timestamp {0:?}")]
pub struct TimestampError(pub String);

impl Timestamp {
    pub fn from_seconds(secs: i64) -> Self {
        Timestamp(secs)
    }

    pub fn seconds(self) -> i64 {
        self.0
    }

    /// Fractional hours from `origin` to `self` (negative if earlier).
    pub fn hours_since(self, origin: Timestamp) -> f64 {
        (self.0 - origin.0) as f64 / SECONDS_PER_HOUR as f64
    }

    pub fn plus_hours(self, hours: i64) -> Timestamp {
        Timestamp(self.0 + hours * SECONDS_PER_HOUR)
    }

    pub fn plus_seconds(self, secs: i64) -> Timestamp {
        Timestamp(self.0 + secs)
    }
}

impl FromStr for Timestamp {
    type Err = TimestampError;

    fn from_str(raw: &str) -> Result<Self, Self::Err> {
        let s = raw.trim();
        if s.is_empty() {
            return Err(TimestampError(raw.to_string()));
        }
        if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
            return Ok(Timestamp(dt.timestamp()));
        }
        let trimmed = s.strip_suffix('Z').unwrap_or(s);
        for fmt in ["%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M"] {
            if let Ok(naive) = NaiveDateTime::parse_from_str(trimmed, fmt) {
                return Ok(Timestamp(naive.and_utc().timestamp()));
            }
        }
        Err(TimestampError(raw.to_string()))
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match DateTime::from_timestamp(self.0, 0) {
            Some(dt) => write!(f, "{}", dt.format("%Y-%m-%d %H:%M:%S")),
            None => write!(f, "@{}", self.0),
        }
    }
}

impl Add<i64> for Timestamp {
    type Output = Timestamp;
    fn add(self, secs: i64) -> Timestamp {
        Timestamp(self.0 + secs)
    }
}

impl Sub for Timestamp {
    type Output = i64;
    fn sub(self, rhs: Timestamp) -> i64 {
        self.0 - rhs.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_common_forms() {
        let a: Timestamp = "2150-03-01 08:00:00".parse().unwrap();
        let b: Timestamp = "2150-03-01T08:00:00Z".parse().unwrap();
        let c: Timestamp = "2150-03-01T08:00:00+00:00".parse().unwrap();
        assert_eq!(a, b);
        assert_eq!(a, c);
        assert_eq!(a.to_string(), "2150-03-01 08:00:00");
    }

    #[test]
    fn rejects_garbage() {
        assert!("yesterday".parse::<Timestamp>().is_err());
        assert!("".parse::<Timestamp>().is_err());
    }

    #[test]
    fn hour_arithmetic() {
        let a: Timestamp = "2150-03-01 08:00:00".parse().unwrap();
        let b = a.plus_hours(30) + 1800;
        assert_eq!(b.hours_since(a), 30.5);
    }
}
