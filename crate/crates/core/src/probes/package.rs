use std::collections::BTreeMap;
use std::sync::Arc;

use super::device::SimulatedDevice;
use super::probe::{Probe, ProbeKind};
use super::ProbeError;
use crate::protocol::{FormatKey, Measure, PowerTier, ProtocolError, SamplingSchema};
use crate::transform::DatumTransformer;

/// A plugin bundling measure types, their probes, tiered default
/// configurations and privacy functions.
pub trait SamplingPackage: Send + Sync {
    fn name(&self) -> &str;

    fn measure_types(&self) -> Vec<FormatKey>;

    fn probe_kind(&self, kind: &FormatKey) -> Option<ProbeKind>;

    /// Normal-tier defaults for every measure type.
    fn common_schema(&self) -> SamplingSchema;

    /// Defaults for any tier. Derived from the Normal tier unless overridden.
    fn schema(&self, tier: PowerTier) -> SamplingSchema {
        self.common_schema().for_tier(tier)
    }

    fn privacy_functions(&self) -> Vec<DatumTransformer> {
        Vec::new()
    }

    fn create_probe(&self, m: &Measure, device: &Arc<SimulatedDevice>) -> Result<Probe, ProbeError>;
}

/// All registered packages, indexed by the measure types they claim.
#[derive(Clone, Default)]
pub struct PackageRegistry {
    packages: Vec<Arc<dyn SamplingPackage>>,
    index: BTreeMap<FormatKey, usize>,
}

impl std::fmt::Debug for PackageRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PackageRegistry")
            .field("packages", &self.packages.iter().map(|p| p.name()).collect::<Vec<_>>())
            .finish()
    }
}

impl PackageRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_builtin() -> Self {
        let mut reg = Self::new();
        for p in super::builtin::packages() {
            reg.register_package(p).expect("built-in packages are disjoint");
        }
        reg
    }

    /// Adds a package. Nothing is registered if any of its types is taken.
    pub fn register_package(&mut self, p: Arc<dyn SamplingPackage>) -> Result<(), ProbeError> {
        let types = p.measure_types();
        for t in &types {
            if self.index.contains_key(t) {
                return Err(ProbeError::Conflict(t.clone()));
            }
        }
        let mut seen = std::collections::BTreeSet::new();
        for t in &types {
            if !seen.insert(t) {
                return Err(ProbeError::Conflict(t.clone()));
            }
        }
        let slot = self.packages.len();
        for t in types {
            self.index.insert(t, slot);
        }
        self.packages.push(p);
        Ok(())
    }

    pub fn is_registered(&self, kind: &FormatKey) -> bool {
        self.index.contains_key(kind)
    }

    pub fn packages(&self) -> &[Arc<dyn SamplingPackage>] {
        &self.packages
    }

    /// Measure types of all packages, in registration order.
    pub fn measure_types(&self) -> Vec<FormatKey> {
        self.packages.iter().flat_map(|p| p.measure_types()).collect()
    }

    pub fn package_for(&self, kind: &FormatKey) -> Option<&Arc<dyn SamplingPackage>> {
        self.index.get(kind).map(|&i| &self.packages[i])
    }

    pub fn probe_kind(&self, kind: &FormatKey) -> Option<ProbeKind> {
        self.package_for(kind)?.probe_kind(kind)
    }

    /// Union of every package's Normal-tier defaults.
    pub fn common_schema(&self) -> Result<SamplingSchema, ProtocolError> {
        self.tier_schema(PowerTier::Normal)
    }

    pub fn tier_schema(&self, tier: PowerTier) -> Result<SamplingSchema, ProtocolError> {
        let schemas: Vec<_> = self.packages.iter().map(|p| p.schema(tier)).collect();
        let mut merged = SamplingSchema::union("common", &schemas)?;
        merged.tier = tier;
        Ok(merged)
    }

    pub fn privacy_functions(&self) -> Vec<DatumTransformer> {
        self.packages.iter().flat_map(|p| p.privacy_functions()).collect()
    }

    /// Creates a probe in the `Created` state. Recognized configuration keys
    /// missing from `m` are filled from the package's Normal-tier default.
    pub fn create_probe(&self, m: &Measure, device: &Arc<SimulatedDevice>) -> Result<Probe, ProbeError> {
        let package = self
            .package_for(&m.kind)
            .ok_or_else(|| ProbeError::UnknownType(m.kind.clone()))?;
        let mut measure = m.clone();
        if let Some(default) = package.common_schema().get(&m.kind) {
            for (k, v) in &default.configuration {
                measure.configuration.entry(k.clone()).or_insert_with(|| v.clone());
            }
        }
        package.create_probe(&measure, device)
    }
}

/// Common schema over an explicit set of packages.
pub fn common_schema_of(packages: &[Arc<dyn SamplingPackage>]) -> Result<SamplingSchema, ProtocolError> {
    let schemas: Vec<_> = packages.iter().map(|p| p.common_schema()).collect();
    SamplingSchema::union("common", &schemas)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::probes::builtin::{self, TablePackage};

    #[test]
    fn builtin_types_resolve() {
        let reg = PackageRegistry::with_builtin();
        assert!(reg.is_registered(&FormatKey::carp("accelerometer")));
        assert_eq!(reg.probe_kind(&FormatKey::carp("light")), Some(ProbeKind::Periodic));
        assert_eq!(reg.probe_kind(&FormatKey::carp("battery")), Some(ProbeKind::Stream));
        assert!(!reg.is_registered(&FormatKey::carp("unknown_sensor")));
    }

    #[test]
    fn overlapping_registration_conflicts() {
        let mut reg = PackageRegistry::new();
        reg.register_package(Arc::new(builtin::sensors())).unwrap();
        let clash = TablePackage::new("clash").measure(
            ProbeKind::Periodic,
            Measure::new(FormatKey::carp("light")).with_frequency(5),
        );
        assert!(matches!(
            reg.register_package(Arc::new(clash)),
            Err(ProbeError::Conflict(k)) if k == FormatKey::carp("light")
        ));
    }

    #[test]
    fn types_in_registration_order() {
        let mut reg = PackageRegistry::new();
        let a = TablePackage::new("a")
            .measure(ProbeKind::Periodic, Measure::new(FormatKey::carp("zeta")).with_frequency(1))
            .measure(ProbeKind::Periodic, Measure::new(FormatKey::carp("alpha")).with_frequency(1));
        let b = TablePackage::new("b")
            .measure(ProbeKind::Periodic, Measure::new(FormatKey::carp("mid")).with_frequency(1));
        let c = TablePackage::new("c")
            .measure(ProbeKind::OneShot, Measure::new(FormatKey::carp("beta")));
        for p in [a, b, c] {
            reg.register_package(Arc::new(p)).unwrap();
        }
        let names: Vec<_> = reg.measure_types().iter().map(ToString::to_string).collect();
        assert_eq!(names, ["carp.zeta", "carp.alpha", "carp.mid", "carp.beta"]);
    }

    #[test]
    fn common_schema_contents() {
        let mut reg = PackageRegistry::new();
        reg.register_package(Arc::new(builtin::sensors())).unwrap();
        reg.register_package(Arc::new(builtin::device())).unwrap();
        let schema = reg.common_schema().unwrap();
        assert_eq!(schema.tier, PowerTier::Normal);
        // Enumerate the package defaults directly and compare.
        let expected: usize = reg.packages().iter().map(|p| p.common_schema().len()).sum();
        assert_eq!(schema.len(), expected);
        assert!(schema.get(&FormatKey::carp("accelerometer")).is_some());
        assert!(schema.get(&FormatKey::carp("battery")).is_some());
        assert!(PackageRegistry::new().common_schema().unwrap().is_empty());
    }

    #[test]
    fn common_schema_conflict() {
        let a: Arc<dyn SamplingPackage> = Arc::new(
            TablePackage::new("a").measure(ProbeKind::Periodic, Measure::new(FormatKey::carp("light")).with_frequency(1)),
        );
        let b: Arc<dyn SamplingPackage> = Arc::new(
            TablePackage::new("b").measure(ProbeKind::Periodic, Measure::new(FormatKey::carp("light")).with_frequency(2)),
        );
        assert!(matches!(common_schema_of(&[a, b]), Err(ProtocolError::Conflict(_))));
    }

    #[test]
    fn schema_measures_from_common() {
        let reg = PackageRegistry::with_builtin();
        let schema = reg.common_schema().unwrap();
        let got = schema
            .measures(&[FormatKey::carp("bluetooth"), FormatKey::carp("accelerometer")])
            .unwrap();
        assert_eq!(got.len(), 2);
        assert_eq!(got[0].kind, FormatKey::carp("bluetooth"));
        // Scan every 10 minutes for 5 seconds.
        assert_eq!(got[0].frequency_ms(), Some(600_000));
        assert_eq!(got[0].duration_ms(), Some(5_000));
        assert_eq!(got[1].kind, FormatKey::carp("accelerometer"));
        assert!(schema.measures(&["omh.bloodpressure".parse().unwrap()]).is_err());
    }

    #[test]
    fn every_package_has_all_tiers_and_factories() {
        let reg = PackageRegistry::with_builtin();
        let dev = Arc::new(SimulatedDevice::new(1));
        for p in reg.packages() {
            for tier in PowerTier::ALL {
                let s = p.schema(tier);
                assert_eq!(s.tier, tier);
                assert_eq!(s.len(), p.measure_types().len(), "{} {tier}", p.name());
            }
            for t in p.measure_types() {
                assert!(p.probe_kind(&t).is_some());
                let m = p.common_schema().get(&t).cloned().unwrap();
                let probe = reg.create_probe(&m, &dev).unwrap();
                assert_eq!(probe.kind(), p.probe_kind(&t).unwrap());
            }
        }
    }

    #[test]
    fn create_probe_examples() {
        let reg = PackageRegistry::with_builtin();
        let dev = Arc::new(SimulatedDevice::new(1));
        let p = reg
            .create_probe(&Measure::new(FormatKey::carp("light")).with_frequency(1000), &dev)
            .unwrap();
        assert_eq!(p.kind(), ProbeKind::Periodic);
        assert_eq!(p.period_ms(), 1000);
        assert_eq!(p.state(), crate::probes::ProbeState::Created);

        let b = reg.create_probe(&Measure::new(FormatKey::carp("battery")), &dev).unwrap();
        assert_eq!(b.kind(), ProbeKind::Stream);

        assert!(matches!(
            reg.create_probe(&Measure::new(FormatKey::carp("unknown_sensor")), &dev),
            Err(ProbeError::UnknownType(_))
        ));
    }
}
