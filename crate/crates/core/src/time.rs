//! Wall-clock helpers shared by the scenario, fog context and query layers.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub const MS_PER_MINUTE: i64 = 60_000;
pub const MS_PER_HOUR: i64 = 3_600_000;
pub const MS_PER_DAY: i64 = 86_400_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("malformed time of day `{0}` (expected HH:MM)")]
pub struct TimeParseError(pub String);

/// A minute-resolution time of day, `00:00` through `23:59`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TimeOfDay {
    minutes: u16,
}

impl TimeOfDay {
    pub fn new(hour: u8, minute: u8) -> Option<Self> {
        (hour < 24 && minute < 60).then(|| Self {
            minutes: hour as u16 * 60 + minute as u16,
        })
    }

    pub fn hour(self) -> u8 {
        (self.minutes / 60) as u8
    }

    pub fn minute(self) -> u8 {
        (self.minutes % 60) as u8
    }

    /// Milliseconds since local midnight.
    pub fn as_ms(self) -> i64 {
        self.minutes as i64 * MS_PER_MINUTE
    }
}

impl fmt::Display for TimeOfDay {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:02}:{:02}", self.hour(), self.minute())
    }
}

impl FromStr for TimeOfDay {
    type Err = TimeParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || TimeParseError(s.to_string());
        let (h, m) = s.split_once(':').ok_or_else(err)?;
        if h.is_empty() || h.len() > 2 || m.len() != 2 {
            return Err(err());
        }
        if !h.bytes().chain(m.bytes()).all(|b| b.is_ascii_digit()) {
            return Err(err());
        }
        let hour: u8 = h.parse().map_err(|_| err())?;
        let minute: u8 = m.parse().map_err(|_| err())?;
        TimeOfDay::new(hour, minute).ok_or_else(err)
    }
}

impl Serialize for TimeOfDay {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for TimeOfDay {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Daily interval `[start, end)`. Wraps past midnight when `end < start`;
/// `start == end` covers the whole day.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "(TimeOfDay, TimeOfDay)", into = "(TimeOfDay, TimeOfDay)")]
pub struct DailyInterval {
    pub start: TimeOfDay,
    pub end: TimeOfDay,
}

impl DailyInterval {
    pub fn new(start: TimeOfDay, end: TimeOfDay) -> Self {
        Self { start, end }
    }

    /// `tod_ms` is milliseconds since local midnight.
    pub fn contains_ms(&self, tod_ms: i64) -> bool {
        let (s, e) = (self.start.as_ms(), self.end.as_ms());
        if s == e {
            true
        } else if s < e {
            s <= tod_ms && tod_ms < e
        } else {
            tod_ms >= s || tod_ms < e
        }
    }
}

impl From<(TimeOfDay, TimeOfDay)> for DailyInterval {
    fn from((start, end): (TimeOfDay, TimeOfDay)) -> Self {
        Self { start, end }
    }
}

impl From<DailyInterval> for (TimeOfDay, TimeOfDay) {
    fn from(i: DailyInterval) -> Self {
        (i.start, i.end)
    }
}

/// Milliseconds since local midnight for an epoch timestamp under a fixed
/// UTC offset.
pub fn local_time_of_day_ms(ts_ms: i64, tz_offset_min: i32) -> i64 {
    (ts_ms + tz_offset_min as i64 * MS_PER_MINUTE).rem_euclid(MS_PER_DAY)
}

pub fn local_hour(ts_ms: i64, tz_offset_min: i32) -> u8 {
    (local_time_of_day_ms(ts_ms, tz_offset_min) / MS_PER_HOUR) as u8
}
