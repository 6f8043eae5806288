//! UTC timestamps with second resolution.

use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, NaiveDate, NaiveDateTime, SecondsFormat, TimeZone, Utc};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid timestamp {input:?}: expected ISO-8601 UTC such as 2022-06-12T23:30:00Z")]
pub struct TimestampParseError {
    pub input: String,
}

/// A UTC instant, stored as whole seconds since the Unix epoch.
///
/// Externally it is always written as ISO-8601 with a `Z` suffix,
/// e.g. `2022-12-31T22:00:00Z`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Timestamp(i64);

impl Timestamp {
    /// Earliest instant accepted anywhere (0001-01-01T00:00:00Z).
    pub const MIN: Timestamp = Timestamp(-62_135_596_800);
    /// Latest instant accepted anywhere (9999-12-31T23:59:59Z).
    pub const MAX: Timestamp = Timestamp(253_402_300_799);

    pub const fn from_unix(secs: i64) -> Self {
        Timestamp(secs)
    }

    pub const fn unix(self) -> i64 {
        self.0
    }

    /// Builds a timestamp from calendar fields; panics on an invalid date.
    /// Meant for fixtures and generators where the date is a literal.
    pub fn ymd_hms(y: i32, mo: u32, d: u32, h: u32, mi: u32, s: u32) -> Self {
        let dt = NaiveDate::from_ymd_opt(y, mo, d)
            .and_then(|date| date.and_hms_opt(h, mi, s))
            .expect("valid calendar date");
        Timestamp(Utc.from_utc_datetime(&dt).timestamp())
    }

    pub fn now() -> Self {
        Timestamp(Utc::now().timestamp())
    }

    pub fn plus_secs(self, secs: i64) -> Self {
        Timestamp(self.0.saturating_add(secs))
    }

    /// Seconds elapsed since midnight UTC of the same day.
    pub fn seconds_of_day(self) -> i64 {
        self.0.rem_euclid(86_400)
    }

    pub fn to_datetime(self) -> DateTime<Utc> {
        DateTime::from_timestamp(self.0, 0).unwrap_or_default()
    }

    pub fn to_iso(self) -> String {
        self.to_datetime().to_rfc3339_opts(SecondsFormat::Secs, true)
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_iso())
    }
}

impl FromStr for Timestamp {
    type Err = TimestampParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || TimestampParseError { input: s.to_string() };
        let s = s.trim();
        let secs = if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
            dt.timestamp()
        } else {
            // A bare date-time without offset is read as UTC.
            NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S")
                .or_else(|_| NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M:%S"))
                .map(|dt| dt.and_utc().timestamp())
                .map_err(|_| err())?
        };
        let ts = Timestamp(secs);
        if ts < Timestamp::MIN || ts > Timestamp::MAX {
            return Err(err());
        }
        Ok(ts)
    }
}

impl Serialize for Timestamp {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_iso())
    }
}

impl<'de> Deserialize<'de> for Timestamp {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
