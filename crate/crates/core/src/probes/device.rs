//! Deterministic stand-in for a phone: seeded signal generators plus scripted
//! battery and location traces.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_pcg::Pcg64Mcg;

use super::datum::{BatteryStatus, CallDirection, Datum, Payload, ScreenEvent};
use super::ProbeError;
use crate::clock::{EpochMs, MS_PER_HOUR};
use crate::protocol::FormatKey;

const MS_PER_DAY: i64 = 24 * MS_PER_HOUR;

/// Fallback position when no location script is given (Copenhagen).
pub const DEFAULT_POSITION: (f64, f64) = (55.6761, 12.5683);

#[derive(Debug, Clone, PartialEq)]
pub struct BatterySample {
    pub t: EpochMs,
    pub level: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocationSample {
    pub t: EpochMs,
    pub lat: f64,
    pub lon: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DeviceError {
    #[error("line {line}: {message}")]
    Csv { line: usize, message: String },
    #[error("script is not sorted by time at entry {0}")]
    Unsorted(usize),
    #[error("battery level {level} at entry {index} is outside [0, 100]")]
    LevelOutOfRange { index: usize, level: i64 },
    #[error("coordinate ({lat}, {lon}) at entry {index} is out of range")]
    CoordinateOutOfRange { index: usize, lat: f64, lon: f64 },
}

/// In-process weather/air-quality service. Answers are a pure function of the
/// seed, the hour and the position.
#[derive(Debug, Clone, Copy)]
pub struct WeatherStub {
    seed: u64,
}

const CONDITIONS: [&str; 5] = ["clear", "clouds", "rain", "drizzle", "mist"];

impl WeatherStub {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn weather(&self, t: EpochMs, lat: f64, _lon: f64) -> (f64, String) {
        let hour = t.div_euclid(MS_PER_HOUR);
        let mut rng = rng_for(self.seed, "weather", hour);
        let day_phase = 2.0 * PI * (t.rem_euclid(MS_PER_DAY) as f64 / MS_PER_DAY as f64);
        let base = 25.0 - lat.abs() * 0.3;
        let temp = base + 6.0 * (day_phase - PI / 2.0).sin() + rng.gen_range(-1.0..1.0);
        let condition = CONDITIONS[rng.gen_range(0..CONDITIONS.len())];
        (round_to(temp, 2), condition.to_owned())
    }

    pub fn air_quality(&self, t: EpochMs) -> u32 {
        let hour = t.div_euclid(MS_PER_HOUR);
        rng_for(self.seed, "air_quality", hour).gen_range(10..80)
    }
}

#[derive(Debug, Clone)]
pub struct SimulatedDevice {
    seed: u64,
    battery: Vec<BatterySample>,
    location: Vec<LocationSample>,
    weather: WeatherStub,
}

impl SimulatedDevice {
    /// A device with a full battery and a fixed position.
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            battery: Vec::new(),
            location: Vec::new(),
            weather: WeatherStub::new(seed),
        }
    }

    pub fn with_battery_profile(mut self, profile: Vec<BatterySample>) -> Result<Self, DeviceError> {
        for (i, s) in profile.iter().enumerate() {
            if s.level > 100 {
                return Err(DeviceError::LevelOutOfRange {
                    index: i,
                    level: s.level as i64,
                });
            }
            if i > 0 && profile[i - 1].t > s.t {
                return Err(DeviceError::Unsorted(i));
            }
        }
        self.battery = profile;
        Ok(self)
    }

    pub fn with_location_script(mut self, script: Vec<LocationSample>) -> Result<Self, DeviceError> {
        for (i, s) in script.iter().enumerate() {
            if !(-90.0..=90.0).contains(&s.lat) || !(-180.0..=180.0).contains(&s.lon) {
                return Err(DeviceError::CoordinateOutOfRange {
                    index: i,
                    lat: s.lat,
                    lon: s.lon,
                });
            }
            if i > 0 && script[i - 1].t > s.t {
                return Err(DeviceError::Unsorted(i));
            }
        }
        self.location = script;
        Ok(self)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn battery_profile(&self) -> &[BatterySample] {
        &self.battery
    }

    pub fn location_script(&self) -> &[LocationSample] {
        &self.location
    }

    pub fn weather_stub(&self) -> &WeatherStub {
        &self.weather
    }

    /// Last scripted level at or before `t`. Before the first entry the first
    /// level applies; with no profile the battery is full.
    pub fn battery_level(&self, t: EpochMs) -> u8 {
        let idx = self.battery.partition_point(|s| s.t <= t);
        match idx {
            0 => self.battery.first().map_or(100, |s| s.level),
            i => self.battery[i - 1].level,
        }
    }

    pub fn battery_status(&self, t: EpochMs) -> BatteryStatus {
        let idx = self.battery.partition_point(|s| s.t <= t);
        let level = self.battery_level(t);
        if level >= 100 {
            return BatteryStatus::Full;
        }
        match idx {
            i if i >= 2 && self.battery[i - 1].level > self.battery[i - 2].level => {
                BatteryStatus::Charging
            }
            _ => BatteryStatus::Discharging,
        }
    }

    /// Times at which the scripted battery level changes, strictly after `t`.
    pub fn next_battery_change(&self, t: EpochMs) -> Option<EpochMs> {
        let idx = self.battery.partition_point(|s| s.t <= t);
        self.battery.get(idx).map(|s| s.t)
    }

    /// Linear interpolation over the location script, clamped at both ends.
    pub fn location(&self, t: EpochMs) -> (f64, f64) {
        let script = &self.location;
        let Some(first) = script.first() else {
            return DEFAULT_POSITION;
        };
        let idx = script.partition_point(|s| s.t <= t);
        if idx == 0 {
            return (first.lat, first.lon);
        }
        let a = &script[idx - 1];
        match script.get(idx) {
            None => (a.lat, a.lon),
            Some(b) => {
                let span = (b.t - a.t) as f64;
                let f = if span > 0.0 { (t - a.t) as f64 / span } else { 0.0 };
                (a.lat + (b.lat - a.lat) * f, a.lon + (b.lon - a.lon) * f)
            }
        }
    }

    /// The simulated reading of `kind` at time `t`. A pure function of the
    /// seed, the type and the time.
    pub fn signal(&self, kind: &FormatKey, t: EpochMs) -> Result<Datum, ProbeError> {
        let mut rng = rng_for(self.seed, kind.kind(), t);
        let secs = t as f64 / 1000.0;
        let payload = match kind.kind() {
            "accelerometer" => Payload::Accelerometer {
                x: round_to(0.4 * (2.0 * PI * 1.6 * secs).sin() + rng.gen_range(-0.05..0.05), 4),
                y: round_to(0.3 * (2.0 * PI * 1.6 * secs).cos() + rng.gen_range(-0.05..0.05), 4),
                z: round_to(9.81 + rng.gen_range(-0.08..0.08), 4),
            },
            "gyroscope" => Payload::Gyroscope {
                x: round_to(0.05 * (2.0 * PI * 0.5 * secs).sin() + rng.gen_range(-0.01..0.01), 4),
                y: round_to(rng.gen_range(-0.02..0.02), 4),
                z: round_to(0.02 * (2.0 * PI * 0.2 * secs).cos(), 4),
            },
            "light" => {
                let day_phase = t.rem_euclid(MS_PER_DAY) as f64 / MS_PER_DAY as f64;
                let sun = (2.0 * PI * (day_phase - 0.25)).sin().max(0.0);
                let lux = 800.0 * sun + 3.0 + rng.gen_range(0.0..2.0);
                Payload::Light {
                    lux: round_to(lux.max(0.0), 2),
                }
            }
            "location" => {
                let (lat, lon) = self.location(t);
                Payload::Location { lat, lon }
            }
            "battery" => Payload::Battery {
                level: self.battery_level(t),
                status: self.battery_status(t),
            },
            "memory" => Payload::Memory {
                free_bytes: 1_500_000_000 + rng.gen_range(0..250_000_000u64),
            },
            "screen" => Payload::Screen {
                event: match rng.gen_range(0..3) {
                    0 => ScreenEvent::On,
                    1 => ScreenEvent::Off,
                    _ => ScreenEvent::Unlock,
                },
            },
            "phone_log" => Payload::PhoneLog {
                number: format!("{:08}", rng.gen_range(10_000_000..100_000_000u32)),
                duration_s: rng.gen_range(0..900),
                direction: if rng.gen_bool(0.5) {
                    CallDirection::In
                } else {
                    CallDirection::Out
                },
            },
            "weather" => {
                let (lat, lon) = self.location(t);
                let (temp_c, condition) = self.weather.weather(t, lat, lon);
                Payload::Weather { temp_c, condition }
            }
            "air_quality" => Payload::AirQuality {
                aqi: self.weather.air_quality(t),
                source: "stub".into(),
            },
            "wifi" => {
                let hour = t.div_euclid(MS_PER_HOUR).rem_euclid(24);
                let (ssid, bssid) = match hour {
                    9..=16 => ("office", "a4:2b:b0:11:22:01"),
                    17..=18 => ("cafe", "a4:2b:b0:11:22:02"),
                    _ => ("home", "a4:2b:b0:11:22:03"),
                };
                Payload::Wifi {
                    ssid: ssid.into(),
                    bssid: bssid.into(),
                }
            }
            "noise" => {
                let mean = rng.gen_range(35.0..65.0);
                Payload::Noise {
                    mean_db: round_to(mean, 2),
                    max_db: round_to(mean + rng.gen_range(0.0..15.0), 2),
                }
            }
            "app_usage" => {
                const APPS: [&str; 4] = ["mail", "browser", "maps", "messages"];
                Payload::AppUsage {
                    foreground_app: APPS[rng.gen_range(0..APPS.len())].into(),
                    usage_ms: rng.gen_range(0..300_000),
                }
            }
            "bluetooth" => {
                let count = rng.gen_range(1..6u32);
                let id = rng.gen_range(0..count);
                Payload::Bluetooth {
                    device_name: format!("device-{id}"),
                    device_id: format!("00:1a:7d:da:71:{id:02x}"),
                    device_type: if id % 2 == 0 { "le" } else { "classic" }.into(),
                    power_level: rng.gen_range(-20..5),
                    rssi: rng.gen_range(-95..-40),
                    scan_device_count: count,
                }
            }
            "bloodpressure" => Payload::BloodPressure {
                systolic: rng.gen_range(105..135) as f64,
                diastolic: rng.gen_range(65..88) as f64,
                position: "sitting".into(),
            },
            _ => return Err(ProbeError::UnknownType(kind.clone())),
        };
        Ok(Datum::carp(payload))
    }

    /// Delay until the next simulated screen event after `t`: 5 to 30 minutes.
    pub(crate) fn screen_gap(&self, t: EpochMs) -> i64 {
        rng_for(self.seed, "screen.gap", t).gen_range(300_000..1_800_000)
    }
}

fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    })
}

fn rng_for(seed: u64, stream: &str, t: EpochMs) -> Pcg64Mcg {
    let mixed = seed ^ fnv1a(stream).rotate_left(17) ^ (t as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    Pcg64Mcg::seed_from_u64(mixed)
}

fn round_to(v: f64, digits: i32) -> f64 {
    let f = 10f64.powi(digits);
    (v * f).round() / f
}

/// Parses a `t_ms,level` CSV. Times are offsets added to `origin`.
pub fn parse_battery_csv(text: &str, origin: EpochMs) -> Result<Vec<BatterySample>, DeviceError> {
    let rows = parse_csv(text, &["t_ms", "level"])?;
    rows.into_iter()
        .map(|(line, cols)| {
            let t = parse_int(&cols[0], line)?;
            let level = parse_int(&cols[1], line)?;
            if !(0..=100).contains(&level) {
                return Err(DeviceError::LevelOutOfRange {
                    index: line,
                    level,
                });
            }
            Ok(BatterySample {
                t: origin + t,
                level: level as u8,
            })
        })
        .collect()
}

/// Parses a `t_ms,lat,lon` CSV. Times are offsets added to `origin`.
pub fn parse_location_csv(text: &str, origin: EpochMs) -> Result<Vec<LocationSample>, DeviceError> {
    let rows = parse_csv(text, &["t_ms", "lat", "lon"])?;
    rows.into_iter()
        .map(|(line, cols)| {
            Ok(LocationSample {
                t: origin + parse_int(&cols[0], line)?,
                lat: parse_float(&cols[1], line)?,
                lon: parse_float(&cols[2], line)?,
            })
        })
        .collect()
}

fn parse_csv(text: &str, header: &[&str]) -> Result<Vec<(usize, Vec<String>)>, DeviceError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());
    let header_ok = match lines.next() {
        Some((_, h)) => h.split(',').map(str::trim).eq(header.iter().copied()),
        None => false,
    };
    if !header_ok {
        return Err(DeviceError::Csv {
            line: 1,
            message: format!("expected header '{}'", header.join(",")),
        });
    }
    lines
        .map(|(line, l)| {
            let cols: Vec<String> = l.split(',').map(|c| c.trim().to_owned()).collect();
            if cols.len() != header.len() {
                return Err(DeviceError::Csv {
                    line,
                    message: format!("expected {} columns, found {}", header.len(), cols.len()),
                });
            }
            Ok((line, cols))
        })
        .collect()
}

fn parse_int(s: &str, line: usize) -> Result<i64, DeviceError> {
    s.parse().map_err(|_| DeviceError::Csv {
        line,
        message: format!("'{s}' is not an integer"),
    })
}

fn parse_float(s: &str, line: usize) -> Result<f64, DeviceError> {
    s.parse().map_err(|_| DeviceError::Csv {
        line,
        message: format!("'{s}' is not a number"),
    })
}
