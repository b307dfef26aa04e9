use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::FormatKey;
use crate::clock::EpochMs;

/// When a task's sampling starts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Trigger {
    Immediate {},
    Periodic {
        period_ms: u64,
    },
    Scheduled {
        #[serde(with = "iso_ms")]
        at: EpochMs,
    },
    RecurrentScheduled {
        time_of_day: TimeOfDay,
        recurrence: Recurrence,
    },
    SamplingEvent {
        source_measure_type: FormatKey,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        condition: Option<FieldCondition>,
    },
}

impl Trigger {
    pub fn immediate() -> Self {
        Trigger::Immediate {}
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Trigger::Immediate {} => "immediate",
            Trigger::Periodic { .. } => "periodic",
            Trigger::Scheduled { .. } => "scheduled",
            Trigger::RecurrentScheduled { .. } => "recurrent_scheduled",
            Trigger::SamplingEvent { .. } => "sampling_event",
        }
    }

    /// Event-driven triggers have no clock schedule.
    pub fn is_event_driven(&self) -> bool {
        matches!(self, Trigger::SamplingEvent { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Recurrence {
    Daily,
    Weekly { weekday: Weekday },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weekday {
    Monday,
    Tuesday,
    Wednesday,
    Thursday,
    Friday,
    Saturday,
    Sunday,
}

impl Weekday {
    pub const ALL: [Weekday; 7] = [
        Weekday::Monday,
        Weekday::Tuesday,
        Weekday::Wednesday,
        Weekday::Thursday,
        Weekday::Friday,
        Weekday::Saturday,
        Weekday::Sunday,
    ];

    pub fn to_chrono(self) -> chrono::Weekday {
        match self {
            Weekday::Monday => chrono::Weekday::Mon,
            Weekday::Tuesday => chrono::Weekday::Tue,
            Weekday::Wednesday => chrono::Weekday::Wed,
            Weekday::Thursday => chrono::Weekday::Thu,
            Weekday::Friday => chrono::Weekday::Fri,
            Weekday::Saturday => chrono::Weekday::Sat,
            Weekday::Sunday => chrono::Weekday::Sun,
        }
    }
}

/// Single field-equality predicate on a datum payload.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldCondition {
    pub field_name: String,
    pub expected_value: String,
}

/// Wall-clock time of day in UTC, minute resolution, within `[00:00, 24:00)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TimeOfDay {
    hour: u8,
    minute: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid time of day '{0}': expected hh:mm in [00:00, 24:00)")]
pub struct TimeOfDayError(pub String);

impl TimeOfDay {
    pub fn new(hour: u8, minute: u8) -> Result<Self, TimeOfDayError> {
        if hour < 24 && minute < 60 {
            Ok(Self { hour, minute })
        } else {
            Err(TimeOfDayError(format!("{hour:02}:{minute:02}")))
        }
    }

    pub fn hour(&self) -> u8 {
        self.hour
    }

    pub fn minute(&self) -> u8 {
        self.minute
    }

    pub fn ms_since_midnight(&self) -> i64 {
        (self.hour as i64 * 60 + self.minute as i64) * 60_000
    }
}

impl fmt::Display for TimeOfDay {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:02}:{:02}", self.hour, self.minute)
    }
}

impl FromStr for TimeOfDay {
    type Err = TimeOfDayError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || TimeOfDayError(s.to_owned());
        let (h, m) = s.split_once(':').ok_or_else(err)?;
        if h.len() != 2 || m.len() != 2 {
            return Err(err());
        }
        let hour = h.parse().map_err(|_| err())?;
        let minute = m.parse().map_err(|_| err())?;
        Self::new(hour, minute).map_err(|_| err())
    }
}

impl Serialize for TimeOfDay {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for TimeOfDay {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

pub(crate) mod iso_ms {
    use serde::{Deserialize, Deserializer, Serializer};

    use crate::clock::{format_iso, parse_iso, EpochMs};

    pub fn serialize<S: Serializer>(t: &EpochMs, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&format_iso(*t))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(deserializer: D) -> Result<EpochMs, D::Error> {
        let s = String::deserialize(deserializer)?;
        parse_iso(&s).ok_or_else(|| serde::de::Error::custom(format!("invalid ISO-8601 instant '{s}'")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn time_of_day_bounds() {
        assert_eq!("20:00".parse::<TimeOfDay>().unwrap(), TimeOfDay::new(20, 0).unwrap());
        assert_eq!("00:00".parse::<TimeOfDay>().unwrap().ms_since_midnight(), 0);
        assert!("23:59".parse::<TimeOfDay>().is_ok());
        for bad in ["24:00", "12:60", "8:00", "noon", "12-30"] {
            assert!(bad.parse::<TimeOfDay>().is_err(), "{bad}");
        }
    }

    #[test]
    fn tagged_json_forms() {
        let t: Trigger = serde_json::from_str(
            r#"{"kind":"recurrent_scheduled","time_of_day":"20:00","recurrence":{"kind":"weekly","weekday":"friday"}}"#,
        )
        .unwrap();
        assert_eq!(
            t,
            Trigger::RecurrentScheduled {
                time_of_day: TimeOfDay::new(20, 0).unwrap(),
                recurrence: Recurrence::Weekly { weekday: Weekday::Friday },
            }
        );

        let t: Trigger =
            serde_json::from_str(r#"{"kind":"scheduled","at":"2020-01-01T20:00:00Z"}"#).unwrap();
        assert_eq!(t, Trigger::Scheduled { at: 1_577_908_800_000 });

        assert!(serde_json::from_str::<Trigger>(r#"{"kind":"periodic","period_ms":5,"x":1}"#).is_err());
        assert!(serde_json::from_str::<Trigger>(r#"{"kind":"sometimes"}"#).is_err());
    }
}
