//! Calendar conventions: hourly time steps counted from a Monday-midnight
//! genesis, the three day categories, and a fixed local-time offset.

use serde::{Deserialize, Serialize};

/// Seconds since the Unix epoch, UTC.
pub type Timestamp = i64;

pub const SECONDS_PER_HOUR: i64 = 3_600;
pub const SECONDS_PER_DAY: i64 = 86_400;
pub const HOURS_PER_WEEK: u64 = 168;

/// Weekday groupings with similar ridership.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum DayCategory {
    MonThu,
    Fri,
    SatSun,
}

impl DayCategory {
    pub const ALL: [DayCategory; 3] = [DayCategory::MonThu, DayCategory::Fri, DayCategory::SatSun];

    /// `weekday` counts from Monday = 0.
    pub fn from_weekday(weekday: u32) -> DayCategory {
        match weekday % 7 {
            0..=3 => DayCategory::MonThu,
            4 => DayCategory::Fri,
            _ => DayCategory::SatSun,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DayCategory::MonThu => "MON_THU",
            DayCategory::Fri => "FRI",
            DayCategory::SatSun => "SAT_SUN",
        }
    }
}

impl core::fmt::Display for DayCategory {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Day category of the hour `timestep_index` hours after Monday 00:00.
pub fn day_category(timestep_index: u64) -> DayCategory {
    DayCategory::from_weekday(((timestep_index / 24) % 7) as u32)
}

/// An hourly simulation step; index 0 is Monday 00:00 local time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TimeStep {
    pub index: u64,
}

impl TimeStep {
    pub const GENESIS: TimeStep = TimeStep { index: 0 };

    pub fn new(index: u64) -> Self {
        TimeStep { index }
    }

    pub fn hour_of_day(self) -> usize {
        (self.index % 24) as usize
    }

    pub fn day_category(self) -> DayCategory {
        day_category(self.index)
    }

    pub fn offset(self, hours: u64) -> TimeStep {
        TimeStep { index: self.index + hours }
    }
}

/// Converts UTC timestamps to local calendar fields using a fixed offset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocalClock {
    pub utc_offset_secs: i64,
}

impl Default for LocalClock {
    /// Singapore time, UTC+8.
    fn default() -> Self {
        LocalClock { utc_offset_secs: 8 * SECONDS_PER_HOUR }
    }
}

impl LocalClock {
    pub const UTC: LocalClock = LocalClock { utc_offset_secs: 0 };

    pub fn new(utc_offset_secs: i64) -> Self {
        LocalClock { utc_offset_secs }
    }

    fn local(&self, t: Timestamp) -> i64 {
        t + self.utc_offset_secs
    }

    /// Local calendar day as days since 1970-01-01.
    pub fn day(&self, t: Timestamp) -> i64 {
        self.local(t).div_euclid(SECONDS_PER_DAY)
    }

    /// Monday = 0. 1970-01-01 was a Thursday.
    pub fn weekday(&self, t: Timestamp) -> u32 {
        weekday_of_day(self.day(t))
    }

    pub fn hour(&self, t: Timestamp) -> usize {
        (self.local(t).rem_euclid(SECONDS_PER_DAY) / SECONDS_PER_HOUR) as usize
    }

    pub fn category(&self, t: Timestamp) -> DayCategory {
        DayCategory::from_weekday(self.weekday(t))
    }

    /// UTC timestamp of local midnight starting `day`.
    pub fn midnight(&self, day: i64) -> Timestamp {
        day * SECONDS_PER_DAY - self.utc_offset_secs
    }
}

/// Weekday (Monday = 0) of a day counted from 1970-01-01.
pub fn weekday_of_day(day: i64) -> u32 {
    (day + 3).rem_euclid(7) as u32
}
