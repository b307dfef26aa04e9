//! Datum transformation: privacy obfuscation and namespace re-formatting.
//!
//! Privacy functions keep a datum's format key and are applied first. Namespace
//! transformers are grouped per target namespace; a datum with no transformer
//! for the requested namespace passes through unchanged.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use sha2::{Digest, Sha256};

use crate::probes::{Datum, Payload};
use crate::protocol::{FormatKey, CARP_NAMESPACE, OMH_NAMESPACE};

type TransformFn = dyn Fn(&Datum) -> Result<Datum, String> + Send + Sync;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TransformError {
    #[error("a transformer from {source_key} to namespace '{target}' is already registered")]
    Duplicate { source_key: FormatKey, target: String },
    #[error("transforming {source_key}: {message}")]
    Failed { source_key: FormatKey, message: String },
}

/// A pure function from one datum type into a target namespace.
#[derive(Clone)]
pub struct DatumTransformer {
    pub source: FormatKey,
    pub target_namespace: String,
    func: Arc<TransformFn>,
}

impl fmt::Debug for DatumTransformer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DatumTransformer")
            .field("source", &self.source)
            .field("target_namespace", &self.target_namespace)
            .finish_non_exhaustive()
    }
}

impl DatumTransformer {
    pub fn new<F>(source: FormatKey, target_namespace: impl Into<String>, func: F) -> Self
    where
        F: Fn(&Datum) -> Result<Datum, String> + Send + Sync + 'static,
    {
        Self {
            source,
            target_namespace: target_namespace.into(),
            func: Arc::new(func),
        }
    }

    /// A privacy function: same namespace in and out.
    pub fn privacy<F>(source: FormatKey, func: F) -> Self
    where
        F: Fn(&Datum) -> Result<Datum, String> + Send + Sync + 'static,
    {
        let ns = source.namespace().to_owned();
        Self::new(source, ns, func)
    }

    /// Runs the function and checks the namespace contract.
    pub fn apply(&self, d: &Datum) -> Result<Datum, TransformError> {
        let out = (self.func)(d).map_err(|message| TransformError::Failed {
            source_key: d.format.clone(),
            message,
        })?;
        if out.format.namespace() != self.target_namespace {
            return Err(TransformError::Failed {
                source_key: d.format.clone(),
                message: format!(
                    "transformer produced {} instead of namespace '{}'",
                    out.format, self.target_namespace
                ),
            });
        }
        Ok(out)
    }
}

/// Namespace schemas plus privacy functions.
#[derive(Debug, Clone, Default)]
pub struct TransformerRegistry {
    schemas: BTreeMap<String, BTreeMap<FormatKey, DatumTransformer>>,
    privacy: BTreeMap<FormatKey, DatumTransformer>,
}

impl TransformerRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// The `carp` (identity) and `omh` schemas, the latter with its blood
    /// pressure mapping.
    pub fn with_builtin() -> Self {
        let mut r = Self::new();
        r.declare_namespace(CARP_NAMESPACE);
        r.register_transformer(omh_blood_pressure())
            .expect("fresh registry");
        r
    }

    /// Makes a namespace resolvable even without any transformers in it.
    pub fn declare_namespace(&mut self, namespace: &str) {
        self.schemas.entry(namespace.to_owned()).or_default();
    }

    pub fn has_namespace(&self, namespace: &str) -> bool {
        namespace == CARP_NAMESPACE || self.schemas.contains_key(namespace)
    }

    pub fn namespaces(&self) -> impl Iterator<Item = &str> {
        self.schemas.keys().map(String::as_str)
    }

    pub fn register_transformer(&mut self, t: DatumTransformer) -> Result<(), TransformError> {
        let schema = self.schemas.entry(t.target_namespace.clone()).or_default();
        if schema.contains_key(&t.source) {
            return Err(TransformError::Duplicate {
                source_key: t.source,
                target: t.target_namespace,
            });
        }
        schema.insert(t.source.clone(), t);
        Ok(())
    }

    pub fn register_privacy(&mut self, t: DatumTransformer) -> Result<(), TransformError> {
        if self.privacy.contains_key(&t.source) {
            return Err(TransformError::Duplicate {
                source_key: t.source,
                target: t.target_namespace,
            });
        }
        self.privacy.insert(t.source.clone(), t);
        Ok(())
    }

    pub fn lookup(&self, target_namespace: &str, source: &FormatKey) -> Option<&DatumTransformer> {
        self.schemas.get(target_namespace)?.get(source)
    }

    /// Re-formats `d` into `target_namespace` where a mapping exists;
    /// otherwise returns it unchanged.
    pub fn transform(&self, d: Datum, target_namespace: &str) -> Result<Datum, TransformError> {
        if d.format.namespace() == target_namespace {
            return Ok(d);
        }
        match self.lookup(target_namespace, &d.format) {
            Some(t) => t.apply(&d),
            None => Ok(d),
        }
    }

    /// Obfuscates `d` if a privacy function is registered for its format.
    /// Applying twice obfuscates twice.
    pub fn privacy_apply(&self, d: Datum) -> Datum {
        match self.privacy.get(&d.format) {
            Some(t) => match t.apply(&d) {
                Ok(out) => out,
                // A privacy function that fails must not leak the raw value.
                Err(e) => Datum::with_format(
                    d.format.clone(),
                    Payload::Error {
                        message: e.to_string(),
                    },
                ),
            },
            None => d,
        }
    }
}

/// Lowercase hex SHA-256 of `s`.
pub fn hash_value(s: &str) -> String {
    hex::encode(Sha256::digest(s.as_bytes()))
}

/// Replaces the phone number of a phone-log datum with its hash.
pub fn phone_log_privacy() -> DatumTransformer {
    DatumTransformer::privacy(FormatKey::carp("phone_log"), |d| match &d.payload {
        Payload::PhoneLog {
            number,
            duration_s,
            direction,
        } => Ok(Datum::with_format(
            d.format.clone(),
            Payload::PhoneLog {
                number: hash_value(number),
                duration_s: *duration_s,
                direction: *direction,
            },
        )),
        _ => Err("expected a phone_log payload".into()),
    })
}

/// `carp.bloodpressure` to `omh.bloodpressure`; clinical fields carry over.
pub fn omh_blood_pressure() -> DatumTransformer {
    let source = FormatKey::carp("bloodpressure");
    let target = source.with_namespace(OMH_NAMESPACE).expect("valid key");
    DatumTransformer::new(source, OMH_NAMESPACE, move |d| match &d.payload {
        Payload::BloodPressure { .. } => Ok(Datum::with_format(target.clone(), d.payload.clone())),
        _ => Err("expected a bloodpressure payload".into()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::probes::CallDirection;

    // Digests below come from `printf '%s' <input> | sha256sum`.
    const SHA256_EMPTY: &str = "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855";
    const SHA256_12345678: &str = "ef797c8118f02dfb649607dd5d3f8c7623048c9c063d532cc95c5ed7a898a64f";

    fn phone_log(number: &str) -> Datum {
        Datum::carp(Payload::PhoneLog {
            number: number.into(),
            duration_s: 30,
            direction: CallDirection::In,
        })
    }

    fn blood_pressure() -> Datum {
        Datum::carp(Payload::BloodPressure {
            systolic: 120.0,
            diastolic: 80.0,
            position: "sitting".into(),
        })
    }

    #[test]
    fn hash_known_digests() {
        assert_eq!(hash_value(""), SHA256_EMPTY);
        assert_eq!(hash_value("12345678"), SHA256_12345678);
        assert_eq!(hash_value("x"), hash_value("x"));
        assert_ne!(hash_value("a"), hash_value("b"));
    }

    #[test]
    fn register_and_lookup() {
        let mut r = TransformerRegistry::new();
        r.register_transformer(omh_blood_pressure()).unwrap();
        assert!(r.lookup("omh", &FormatKey::carp("bloodpressure")).is_some());
        assert!(r.lookup("omh", &FormatKey::carp("accelerometer")).is_none());
        assert!(r.lookup("fhir", &FormatKey::carp("bloodpressure")).is_none());
        assert!(matches!(
            r.register_transformer(omh_blood_pressure()),
            Err(TransformError::Duplicate { .. })
        ));
    }

    #[test]
    fn omh_blood_pressure_mapping() {
        let r = TransformerRegistry::with_builtin();
        let out = r.transform(blood_pressure(), "omh").unwrap();
        assert_eq!(out.format.to_string(), "omh.bloodpressure");
        match out.payload {
            Payload::BloodPressure {
                systolic,
                diastolic,
                position,
            } => {
                assert_eq!(systolic, 120.0);
                assert_eq!(diastolic, 80.0);
                assert_eq!(position, "sitting");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn passthrough_without_mapping() {
        let r = TransformerRegistry::with_builtin();
        let acc = Datum::carp(Payload::Accelerometer { x: 0.1, y: 0.2, z: 9.8 });
        assert_eq!(r.transform(acc.clone(), "omh").unwrap(), acc);
        let bp = blood_pressure();
        assert_eq!(r.transform(bp.clone(), "carp").unwrap(), bp);
    }

    #[test]
    fn failing_transformer_names_source() {
        let mut r = TransformerRegistry::new();
        r.register_transformer(DatumTransformer::new(FormatKey::carp("light"), "omh", |_| {
            Err("boom".into())
        }))
        .unwrap();
        let err = r
            .transform(Datum::carp(Payload::Light { lux: 1.0 }), "omh")
            .unwrap_err();
        assert_eq!(
            err,
            TransformError::Failed {
                source_key: FormatKey::carp("light"),
                message: "boom".into()
            }
        );

        let mut r = TransformerRegistry::new();
        r.register_transformer(DatumTransformer::new(FormatKey::carp("light"), "omh", |d| Ok(d.clone())))
            .unwrap();
        assert!(r.transform(Datum::carp(Payload::Light { lux: 1.0 }), "omh").is_err());
    }

    #[test]
    fn privacy_hashes_phone_number() {
        let mut r = TransformerRegistry::new();
        r.register_privacy(phone_log_privacy()).unwrap();
        let once = r.privacy_apply(phone_log("12345678"));
        assert_eq!(once.format.to_string(), "carp.phone_log");
        match &once.payload {
            Payload::PhoneLog { number, duration_s, .. } => {
                assert_eq!(number, SHA256_12345678);
                assert_eq!(*duration_s, 30);
            }
            other => panic!("{other:?}"),
        }
        // Not idempotent: a second pass hashes the hash.
        let twice = r.privacy_apply(once);
        assert_eq!(twice.field_string("number").unwrap(), hash_value(SHA256_12345678));

        let light = Datum::carp(Payload::Light { lux: 12.0 });
        assert_eq!(r.privacy_apply(light.clone()), light);
    }

    proptest::proptest! {
        #[test]
        fn hash_shape(s in ".*") {
            let h = hash_value(&s);
            proptest::prop_assert_eq!(h.len(), 64);
            proptest::prop_assert!(h.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b)));
        }
    }
}
