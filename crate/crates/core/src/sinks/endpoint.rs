use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::{Map, Value};

/// Where collected data goes, as written in the protocol.
///
/// Kinds other than the three built-ins are kept as [`DataEndPoint::Other`]
/// so that externally registered data managers can claim them.
#[derive(Debug, Clone, PartialEq)]
pub enum DataEndPoint {
    Memory,
    File {
        buffer_size: u64,
        zip: bool,
        encrypt: bool,
    },
    Http {
        url: String,
        batch_size: usize,
        retry_max: u32,
    },
    Other {
        kind: String,
        params: Map<String, Value>,
    },
}

pub const MIN_FILE_BUFFER: u64 = 1024;

impl DataEndPoint {
    pub fn kind(&self) -> &str {
        match self {
            DataEndPoint::Memory => "memory",
            DataEndPoint::File { .. } => "file",
            DataEndPoint::Http { .. } => "http",
            DataEndPoint::Other { kind, .. } => kind,
        }
    }

    /// A file endpoint as in the canonical example: 500 kB rolls, zipped.
    pub fn file(buffer_size: u64, zip: bool) -> Self {
        DataEndPoint::File {
            buffer_size,
            zip,
            encrypt: false,
        }
    }

    /// Returns the first violated invariant, if any.
    pub fn check(&self) -> Result<(), String> {
        match self {
            DataEndPoint::File { buffer_size, .. } if *buffer_size < MIN_FILE_BUFFER => Err(format!(
                "buffer_size {buffer_size} is below the minimum of {MIN_FILE_BUFFER} bytes"
            )),
            DataEndPoint::Http { url, batch_size, .. } => {
                if *batch_size == 0 {
                    return Err("batch_size must be > 0".into());
                }
                match url::parse_absolute_http(url) {
                    true => Ok(()),
                    false => Err(format!("url '{url}' is not an absolute http(s) URL")),
                }
            }
            _ => Ok(()),
        }
    }
}

mod url {
    /// `http://host[...]` or `https://host[...]` with a non-empty host.
    pub(super) fn parse_absolute_http(s: &str) -> bool {
        let rest = s
            .strip_prefix("http://")
            .or_else(|| s.strip_prefix("https://"));
        match rest {
            Some(rest) => {
                let host = rest.split(['/', '?', '#']).next().unwrap_or("");
                !host.is_empty() && !host.contains(char::is_whitespace)
            }
            None => false,
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileFields {
    buffer_size: u64,
    #[serde(default)]
    zip: bool,
    #[serde(default)]
    encrypt: bool,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HttpFields {
    url: String,
    batch_size: usize,
    #[serde(default)]
    retry_max: u32,
}

impl Serialize for DataEndPoint {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut obj = match self {
            DataEndPoint::Memory => Map::new(),
            DataEndPoint::File {
                buffer_size,
                zip,
                encrypt,
            } => to_map(&FileFields {
                buffer_size: *buffer_size,
                zip: *zip,
                encrypt: *encrypt,
            }),
            DataEndPoint::Http {
                url,
                batch_size,
                retry_max,
            } => to_map(&HttpFields {
                url: url.clone(),
                batch_size: *batch_size,
                retry_max: *retry_max,
            }),
            DataEndPoint::Other { params, .. } => params.clone(),
        };
        obj.insert("kind".into(), Value::String(self.kind().to_owned()));
        obj.serialize(serializer)
    }
}

fn to_map<T: Serialize>(v: &T) -> Map<String, Value> {
    match serde_json::to_value(v) {
        Ok(Value::Object(m)) => m,
        _ => Map::new(),
    }
}

impl<'de> Deserialize<'de> for DataEndPoint {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let mut obj = Map::<String, Value>::deserialize(deserializer)?;
        let kind = match obj.remove("kind") {
            Some(Value::String(k)) => k,
            Some(_) => return Err(D::Error::custom("data_end_point.kind must be a string")),
            None => return Err(D::Error::missing_field("kind")),
        };
        let rest = Value::Object(obj);
        match kind.as_str() {
            "memory" => match rest.as_object().map(Map::is_empty) {
                Some(true) => Ok(DataEndPoint::Memory),
                _ => Err(D::Error::custom("memory endpoint takes no parameters")),
            },
            "file" => {
                let f: FileFields = serde_json::from_value(rest).map_err(D::Error::custom)?;
                Ok(DataEndPoint::File {
                    buffer_size: f.buffer_size,
                    zip: f.zip,
                    encrypt: f.encrypt,
                })
            }
            "http" => {
                let h: HttpFields = serde_json::from_value(rest).map_err(D::Error::custom)?;
                Ok(DataEndPoint::Http {
                    url: h.url,
                    batch_size: h.batch_size,
                    retry_max: h.retry_max,
                })
            }
            "" => Err(D::Error::custom("data_end_point.kind must not be empty")),
            _ => Ok(DataEndPoint::Other {
                kind,
                params: match rest {
                    Value::Object(m) => m,
                    _ => Map::new(),
                },
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_endpoint_from_json() {
        let ep: DataEndPoint = serde_json::from_str(
            r#"{"kind":"file","buffer_size":500000,"zip":true,"encrypt":false}"#,
        )
        .unwrap();
        assert_eq!(ep, DataEndPoint::file(500 * 1000, true));
        assert_eq!(
            serde_json::to_string(&ep).unwrap(),
            r#"{"buffer_size":500000,"encrypt":false,"kind":"file","zip":true}"#
        );
    }

    #[test]
    fn unknown_kind_is_kept() {
        let ep: DataEndPoint =
            serde_json::from_str(r#"{"kind":"s3","bucket":"b"}"#).unwrap();
        assert_eq!(ep.kind(), "s3");
        let back: DataEndPoint =
            serde_json::from_str(&serde_json::to_string(&ep).unwrap()).unwrap();
        assert_eq!(back, ep);
    }

    #[test]
    fn strict_known_kinds() {
        assert!(serde_json::from_str::<DataEndPoint>(r#"{"kind":"file","buffer_size":4096,"zipp":true}"#).is_err());
        assert!(serde_json::from_str::<DataEndPoint>(r#"{"kind":"memory","x":1}"#).is_err());
        assert!(serde_json::from_str::<DataEndPoint>(r#"{"buffer_size":4096}"#).is_err());
    }

    #[test]
    fn invariants() {
        assert!(DataEndPoint::file(1023, false).check().is_err());
        assert!(DataEndPoint::file(1024, false).check().is_ok());
        let http = |url: &str| DataEndPoint::Http {
            url: url.into(),
            batch_size: 10,
            retry_max: 0,
        };
        assert!(http("http://localhost:8080/ingest").check().is_ok());
        assert!(http("https://example.org").check().is_ok());
        assert!(http("ftp://example.org").check().is_err());
        assert!(http("/relative").check().is_err());
        assert!(http("http://").check().is_err());
    }
}
