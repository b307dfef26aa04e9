use std::any::Any;
use std::sync::{Arc, Mutex};

use super::{DataEndPoint, DataManager, SinkError};
use crate::probes::DataPoint;
use crate::protocol::StudyProtocol;

/// Shared handle to the points a memory manager has accepted.
#[derive(Debug, Clone, Default)]
pub struct MemoryStore(Arc<Mutex<Vec<DataPoint>>>);

impl MemoryStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn points(&self) -> Vec<DataPoint> {
        self.0.lock().expect("memory store poisoned").clone()
    }

    pub fn len(&self) -> usize {
        self.0.lock().expect("memory store poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, p: DataPoint) {
        self.0.lock().expect("memory store poisoned").push(p);
    }
}

/// Keeps every point in memory, in arrival order.
#[derive(Debug, Default)]
pub struct MemoryDataManager {
    store: MemoryStore,
    closed: bool,
}

impl MemoryDataManager {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_store(store: MemoryStore) -> Self {
        Self {
            store,
            closed: false,
        }
    }

    pub fn store(&self) -> &MemoryStore {
        &self.store
    }
}

impl DataManager for MemoryDataManager {
    fn kind(&self) -> &str {
        "memory"
    }

    fn initialize(&mut self, _endpoint: &DataEndPoint, _protocol: &StudyProtocol) -> Result<(), SinkError> {
        Ok(())
    }

    fn on_data_point(&mut self, p: &DataPoint) -> Result<(), SinkError> {
        if self.closed {
            return Err(SinkError::Closed);
        }
        self.store.push(p.clone());
        Ok(())
    }

    fn flush(&mut self) -> Result<(), SinkError> {
        Ok(())
    }

    fn close(&mut self) -> Result<(), SinkError> {
        self.closed = true;
        Ok(())
    }

    fn as_any(&self) -> &dyn Any {
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::probes::{Datum, Payload};

    #[test]
    fn keeps_order_and_refuses_after_close() {
        let mut m = MemoryDataManager::new();
        let p = StudyProtocol::new("s", "u", DataEndPoint::Memory);
        m.initialize(&DataEndPoint::Memory, &p).unwrap();
        for i in 0..5 {
            let dp = DataPoint::new("s", "u", "phone", i, Datum::carp(Payload::Light { lux: i as f64 }));
            m.on_data_point(&dp).unwrap();
        }
        m.close().unwrap();
        m.close().unwrap();
        let times: Vec<_> = m.store().points().iter().map(|p| p.header.start_time).collect();
        assert_eq!(times, [0, 1, 2, 3, 4]);
        let late = DataPoint::new("s", "u", "phone", 9, Datum::carp(Payload::Light { lux: 0.0 }));
        assert!(matches!(m.on_data_point(&late), Err(SinkError::Closed)));
    }
}
