use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{FormatKey, Measure, ProtocolError};

/// Sampling intensity selected from the battery level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PowerTier {
    Normal,
    Light,
    Minimum,
    None,
}

impl PowerTier {
    pub const ALL: [PowerTier; 4] = [
        PowerTier::Normal,
        PowerTier::Light,
        PowerTier::Minimum,
        PowerTier::None,
    ];

    /// Band lookup: `> 50` Normal, `(30, 50]` Light, `(10, 30]` Minimum,
    /// `<= 10` None.
    pub fn for_battery_level(level: u8) -> Self {
        match level {
            51.. => PowerTier::Normal,
            31..=50 => PowerTier::Light,
            11..=30 => PowerTier::Minimum,
            _ => PowerTier::None,
        }
    }

    /// Period multiplier applied to a Normal-tier measure. `None` disables.
    pub fn period_factor(self) -> Option<u64> {
        match self {
            PowerTier::Normal => Some(1),
            PowerTier::Light => Some(2),
            PowerTier::Minimum => Some(10),
            PowerTier::None => None,
        }
    }

    /// Derives this tier's variant of a Normal-tier measure.
    pub fn scale(self, normal: &Measure) -> Measure {
        let mut m = normal.clone();
        match self.period_factor() {
            Some(factor) => {
                if let Some(f) = normal.frequency_ms() {
                    m = m.with_frequency(f.saturating_mul(factor));
                }
            }
            None => m.enabled = false,
        }
        m
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PowerTier::Normal => "normal",
            PowerTier::Light => "light",
            PowerTier::Minimum => "minimum",
            PowerTier::None => "none",
        }
    }
}

impl fmt::Display for PowerTier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A named bundle of default measure configurations for one power tier.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SamplingSchema {
    pub name: String,
    pub tier: PowerTier,
    defaults: BTreeMap<FormatKey, Measure>,
}

impl SamplingSchema {
    pub fn new(name: impl Into<String>, tier: PowerTier) -> Self {
        Self {
            name: name.into(),
            tier,
            defaults: BTreeMap::new(),
        }
    }

    /// Adds a default. The map key is always the measure's own type.
    pub fn insert(&mut self, measure: Measure) -> Result<(), ProtocolError> {
        if self.defaults.contains_key(&measure.kind) {
            return Err(ProtocolError::Conflict(measure.kind));
        }
        self.defaults.insert(measure.kind.clone(), measure);
        Ok(())
    }

    pub fn with(mut self, measure: Measure) -> Self {
        self.defaults.insert(measure.kind.clone(), measure);
        self
    }

    pub fn get(&self, key: &FormatKey) -> Option<&Measure> {
        self.defaults.get(key)
    }

    pub fn defaults(&self) -> impl Iterator<Item = &Measure> {
        self.defaults.values()
    }

    pub fn len(&self) -> usize {
        self.defaults.len()
    }

    pub fn is_empty(&self) -> bool {
        self.defaults.is_empty()
    }

    /// The same schema rescaled for another tier.
    pub fn for_tier(&self, tier: PowerTier) -> SamplingSchema {
        SamplingSchema {
            name: self.name.clone(),
            tier,
            defaults: self
                .defaults
                .iter()
                .map(|(k, m)| (k.clone(), tier.scale(m)))
                .collect(),
        }
    }

    /// Merges several Normal-tier schemas into one. Fails on the first key
    /// claimed twice.
    pub fn union<'a>(
        name: &str,
        schemas: impl IntoIterator<Item = &'a SamplingSchema>,
    ) -> Result<SamplingSchema, ProtocolError> {
        let mut merged = SamplingSchema::new(name, PowerTier::Normal);
        for schema in schemas {
            for m in schema.defaults() {
                merged.insert(m.clone())?;
            }
        }
        Ok(merged)
    }

    /// Defaults for each requested type, in request order.
    pub fn measures(&self, types: &[FormatKey]) -> Result<Vec<Measure>, ProtocolError> {
        types
            .iter()
            .map(|t| {
                self.defaults
                    .get(t)
                    .cloned()
                    .ok_or_else(|| ProtocolError::UnknownType(t.clone()))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn battery_bands() {
        assert_eq!(PowerTier::for_battery_level(100), PowerTier::Normal);
        assert_eq!(PowerTier::for_battery_level(75), PowerTier::Normal);
        assert_eq!(PowerTier::for_battery_level(51), PowerTier::Normal);
        assert_eq!(PowerTier::for_battery_level(50), PowerTier::Light);
        assert_eq!(PowerTier::for_battery_level(45), PowerTier::Light);
        assert_eq!(PowerTier::for_battery_level(31), PowerTier::Light);
        assert_eq!(PowerTier::for_battery_level(30), PowerTier::Minimum);
        assert_eq!(PowerTier::for_battery_level(11), PowerTier::Minimum);
        assert_eq!(PowerTier::for_battery_level(10), PowerTier::None);
        assert_eq!(PowerTier::for_battery_level(5), PowerTier::None);
        assert_eq!(PowerTier::for_battery_level(0), PowerTier::None);
    }

    #[test]
    fn tier_scaling() {
        let m = Measure::new(FormatKey::carp("light")).with_frequency(1_000);
        assert_eq!(PowerTier::Normal.scale(&m), m);
        assert_eq!(PowerTier::Light.scale(&m).frequency_ms(), Some(2_000));
        assert_eq!(PowerTier::Minimum.scale(&m).frequency_ms(), Some(10_000));
        let off = PowerTier::None.scale(&m);
        assert!(!off.enabled);
        assert_eq!(off.frequency_ms(), Some(1_000));
    }

    #[test]
    fn measures_in_request_order() {
        let s = SamplingSchema::new("t", PowerTier::Normal)
            .with(Measure::new(FormatKey::carp("a")).with_frequency(1))
            .with(Measure::new(FormatKey::carp("b")).with_frequency(2));
        let got = s.measures(&[FormatKey::carp("b"), FormatKey::carp("a")]).unwrap();
        assert_eq!(got[0].kind, FormatKey::carp("b"));
        assert_eq!(got[1].kind, FormatKey::carp("a"));
        assert!(s.measures(&[]).unwrap().is_empty());
        let missing: FormatKey = "omh.bloodpressure".parse().unwrap();
        assert!(matches!(
            s.measures(&[FormatKey::carp("a"), missing.clone()]),
            Err(ProtocolError::UnknownType(k)) if k == missing
        ));
    }

    #[test]
    fn union_conflicts() {
        let a = SamplingSchema::new("a", PowerTier::Normal).with(Measure::new(FormatKey::carp("light")));
        let b = SamplingSchema::new("b", PowerTier::Normal).with(Measure::new(FormatKey::carp("light")));
        assert!(matches!(
            SamplingSchema::union("common", [&a, &b]),
            Err(ProtocolError::Conflict(_))
        ));
        assert!(SamplingSchema::union("common", std::iter::empty()).unwrap().is_empty());
    }
}
