//! Data managers: the consumers at the end of the data-point stream.

mod endpoint;
mod file;
mod http;
mod memory;
mod ndjson;

use std::any::Any;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

pub use endpoint::{DataEndPoint, MIN_FILE_BUFFER};
pub use file::{data_file_name, FileDataManager};
pub use http::{
    HttpDataManager, Transport, UploadStats, UreqTransport, BACKOFF_BASE_MS, DEADLETTER_FILE,
    MAX_QUEUED_POINTS, NDJSON_CONTENT_TYPE,
};
pub use memory::{MemoryDataManager, MemoryStore};
pub use ndjson::{parse_data_point, serialize_data_point, RecordError};

use crate::clock::{EpochMs, SharedClock};
use crate::probes::DataPoint;
use crate::protocol::StudyProtocol;

#[derive(Debug, thiserror::Error)]
pub enum SinkError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("encrypt=true is not supported by the file data manager")]
    EncryptUnsupported,
    #[error("data manager is closed")]
    Closed,
    #[error("no data manager registered for endpoint kind '{0}'")]
    UnknownEndpoint(String),
    #[error("a data manager for endpoint kind '{0}' is already registered")]
    Duplicate(String),
    #[error("{manager} data manager cannot serve a '{endpoint}' endpoint")]
    EndpointMismatch { manager: String, endpoint: String },
}

impl SinkError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        SinkError::Io {
            path: path.to_owned(),
            source,
        }
    }
}

/// Consumer of the published data-point stream. Driven by a single loop, so
/// methods need not be reentrant. `flush` and `close` are idempotent.
pub trait DataManager: Send {
    fn kind(&self) -> &str;

    fn initialize(&mut self, endpoint: &DataEndPoint, protocol: &StudyProtocol) -> Result<(), SinkError>;

    fn on_data_point(&mut self, p: &DataPoint) -> Result<(), SinkError>;

    /// Next time the manager has deferred work (e.g. a retry), if any.
    fn next_wakeup(&self) -> Option<EpochMs> {
        None
    }

    /// Runs deferred work that is due at `now`.
    fn poll(&mut self, _now: EpochMs) -> Result<(), SinkError> {
        Ok(())
    }

    fn flush(&mut self) -> Result<(), SinkError>;

    fn close(&mut self) -> Result<(), SinkError>;

    fn as_any(&self) -> &dyn Any;
}

/// What a factory gets to build a manager with.
#[derive(Clone)]
pub struct SinkContext {
    pub out_dir: PathBuf,
    pub clock: SharedClock,
}

pub type DataManagerFactory = Arc<dyn Fn(&SinkContext) -> Box<dyn DataManager> + Send + Sync>;

#[derive(Clone, Default)]
pub struct DataManagerRegistry {
    factories: BTreeMap<String, DataManagerFactory>,
}

impl std::fmt::Debug for DataManagerRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DataManagerRegistry")
            .field("kinds", &self.factories.keys().collect::<Vec<_>>())
            .finish()
    }
}

impl DataManagerRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// `memory`, `file` and `http`. The memory manager writes into `store`.
    pub fn with_builtin(store: MemoryStore) -> Self {
        let mut r = Self::new();
        r.register("memory", move |_ctx: &SinkContext| {
            Box::new(MemoryDataManager::with_store(store.clone())) as Box<dyn DataManager>
        })
        .expect("fresh registry");
        r.register("file", |ctx: &SinkContext| {
            Box::new(FileDataManager::new(&ctx.out_dir)) as Box<dyn DataManager>
        })
        .expect("fresh registry");
        r.register("http", |ctx: &SinkContext| {
            Box::new(HttpDataManager::new(&ctx.out_dir, ctx.clock.clone())) as Box<dyn DataManager>
        })
        .expect("fresh registry");
        r
    }

    pub fn register<F>(&mut self, kind: &str, factory: F) -> Result<(), SinkError>
    where
        F: Fn(&SinkContext) -> Box<dyn DataManager> + Send + Sync + 'static,
    {
        if self.factories.contains_key(kind) {
            return Err(SinkError::Duplicate(kind.to_owned()));
        }
        self.factories.insert(kind.to_owned(), Arc::new(factory));
        Ok(())
    }

    pub fn contains(&self, kind: &str) -> bool {
        self.factories.contains_key(kind)
    }

    pub fn create(&self, kind: &str, ctx: &SinkContext) -> Result<Box<dyn DataManager>, SinkError> {
        let factory = self
            .factories
            .get(kind)
            .ok_or_else(|| SinkError::UnknownEndpoint(kind.to_owned()))?;
        Ok(factory(ctx))
    }
}
