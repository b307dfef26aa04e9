//! Rolling NDJSON files, optionally zipped as they are closed.

use std::any::Any;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use zip::write::SimpleFileOptions;
use zip::{CompressionMethod, ZipWriter};

use super::ndjson::serialize_data_point;
use super::{DataEndPoint, DataManager, SinkError};
use crate::probes::DataPoint;
use crate::protocol::StudyProtocol;

/// `data-00001.ndjson` style name for a sequence number.
pub fn data_file_name(seq: u32) -> String {
    format!("data-{seq:05}.ndjson")
}

struct ActiveFile {
    path: PathBuf,
    writer: BufWriter<File>,
    size: u64,
}

/// Appends one line per point to the active file. Before a write that would
/// push the file past `buffer_size`, the file is closed (and zipped if asked)
/// and a new one started, so a closed file exceeds the buffer by at most one
/// line.
pub struct FileDataManager {
    dir: PathBuf,
    buffer_size: u64,
    zip: bool,
    seq: u32,
    active: Option<ActiveFile>,
    finished: Vec<PathBuf>,
    closed: bool,
    written: u64,
}

impl FileDataManager {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self {
            dir: dir.into(),
            buffer_size: 500 * 1000,
            zip: false,
            seq: 0,
            active: None,
            finished: Vec::new(),
            closed: false,
            written: 0,
        }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Paths of every closed file, in sequence order.
    pub fn finished_files(&self) -> &[PathBuf] {
        &self.finished
    }

    pub fn points_written(&self) -> u64 {
        self.written
    }

    fn open_next(&mut self) -> Result<&mut ActiveFile, SinkError> {
        self.seq += 1;
        let path = self.dir.join(data_file_name(self.seq));
        let file = File::create(&path).map_err(|e| SinkError::io(&path, e))?;
        Ok(self.active.insert(ActiveFile {
            path,
            writer: BufWriter::new(file),
            size: 0,
        }))
    }

    fn roll(&mut self) -> Result<(), SinkError> {
        let Some(mut active) = self.active.take() else {
            return Ok(());
        };
        active
            .writer
            .flush()
            .map_err(|e| SinkError::io(&active.path, e))?;
        drop(active.writer);
        let done = if self.zip {
            zip_file(&active.path)?
        } else {
            active.path
        };
        self.finished.push(done);
        Ok(())
    }
}

/// Writes `<path>.zip` holding `path` as its single deflated entry, then
/// removes `path`. Entry timestamps are fixed so output is reproducible.
fn zip_file(path: &Path) -> Result<PathBuf, SinkError> {
    let bytes = fs::read(path).map_err(|e| SinkError::io(path, e))?;
    let entry = path
        .file_name()
        .and_then(|n| n.to_str())
        .unwrap_or("data.ndjson")
        .to_owned();
    let zip_path = path.with_file_name(format!("{entry}.zip"));
    let out = File::create(&zip_path).map_err(|e| SinkError::io(&zip_path, e))?;
    let mut zw = ZipWriter::new(out);
    let options = SimpleFileOptions::default()
        .compression_method(CompressionMethod::Deflated)
        .last_modified_time(zip::DateTime::default())
        .unix_permissions(0o644);
    let zip_err = |e: zip::result::ZipError| SinkError::io(&zip_path, std::io::Error::other(e));
    zw.start_file(entry, options).map_err(zip_err)?;
    zw.write_all(&bytes).map_err(|e| SinkError::io(&zip_path, e))?;
    zw.finish().map_err(zip_err)?;
    fs::remove_file(path).map_err(|e| SinkError::io(path, e))?;
    Ok(zip_path)
}

impl DataManager for FileDataManager {
    fn kind(&self) -> &str {
        "file"
    }

    fn initialize(&mut self, endpoint: &DataEndPoint, _protocol: &StudyProtocol) -> Result<(), SinkError> {
        match endpoint {
            DataEndPoint::File { encrypt: true, .. } => Err(SinkError::EncryptUnsupported),
            DataEndPoint::File {
                buffer_size, zip, ..
            } => {
                self.buffer_size = *buffer_size;
                self.zip = *zip;
                fs::create_dir_all(&self.dir).map_err(|e| SinkError::io(&self.dir, e))
            }
            other => Err(SinkError::EndpointMismatch {
                manager: "file".into(),
                endpoint: other.kind().to_owned(),
            }),
        }
    }

    fn on_data_point(&mut self, p: &DataPoint) -> Result<(), SinkError> {
        if self.closed {
            return Err(SinkError::Closed);
        }
        let mut line = serialize_data_point(p);
        line.push('\n');
        let len = line.len() as u64;
        let must_roll = matches!(&self.active, Some(a) if a.size > 0 && a.size + len > self.buffer_size);
        if must_roll {
            self.roll()?;
        }
        let active = match self.active {
            Some(ref mut a) => a,
            None => self.open_next()?,
        };
        active
            .writer
            .write_all(line.as_bytes())
            .map_err(|e| SinkError::io(&active.path, e))?;
        active.size += len;
        self.written += 1;
        Ok(())
    }

    fn flush(&mut self) -> Result<(), SinkError> {
        if let Some(a) = self.active.as_mut() {
            a.writer.flush().map_err(|e| SinkError::io(&a.path, e))?;
        }
        Ok(())
    }

    fn close(&mut self) -> Result<(), SinkError> {
        if self.closed {
            return Ok(());
        }
        self.roll()?;
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
    use std::io::Read;

    fn point(i: usize, pad: usize) -> DataPoint {
        DataPoint::new(
            "s",
            "u",
            "phone",
            i as i64,
            Datum::carp(Payload::Wifi {
                ssid: "x".repeat(pad),
                bssid: format!("{i:06}"),
            }),
        )
    }

    fn protocol() -> StudyProtocol {
        StudyProtocol::new("s", "u", DataEndPoint::Memory)
    }

    pub(crate) fn read_back(path: &Path) -> Vec<u8> {
        if path.extension().and_then(|e| e.to_str()) == Some("zip") {
            let mut archive = zip::ZipArchive::new(File::open(path).unwrap()).unwrap();
            let mut entry = archive.by_index(0).unwrap();
            let mut buf = Vec::new();
            entry.read_to_end(&mut buf).unwrap();
            buf
        } else {
            fs::read(path).unwrap()
        }
    }

    #[test]
    fn rolls_by_byte_count() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = FileDataManager::new(dir.path());
        m.initialize(&DataEndPoint::file(2048, false), &protocol()).unwrap();

        let points: Vec<_> = (0..40).map(|i| point(i, 200 + (i * 7) % 60)).collect();
        let lines: Vec<String> = points.iter().map(|p| serialize_data_point(p) + "\n").collect();
        assert!(lines.iter().all(|l| l.len() < 2048));

        // Independent byte-count oracle for the file boundaries.
        let mut expected: Vec<Vec<u8>> = vec![Vec::new()];
        for l in &lines {
            let cur = expected.last_mut().unwrap();
            if !cur.is_empty() && cur.len() + l.len() > 2048 {
                expected.push(l.as_bytes().to_vec());
            } else {
                cur.extend_from_slice(l.as_bytes());
            }
        }

        for p in &points {
            m.on_data_point(p).unwrap();
        }
        m.close().unwrap();
        let files = m.finished_files().to_vec();
        assert!(expected.len() > 3);
        assert_eq!(files.len(), expected.len());
        for (i, (f, want)) in files.iter().zip(&expected).enumerate() {
            assert_eq!(f.file_name().unwrap().to_str().unwrap(), data_file_name(i as u32 + 1));
            let got = fs::read(f).unwrap();
            assert_eq!(&got, want);
            assert!(got.len() <= 2048);
        }
    }

    #[test]
    fn roll_after_seven_three_hundred_byte_points() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = FileDataManager::new(dir.path());
        m.initialize(&DataEndPoint::file(2048, false), &protocol()).unwrap();
        // Pad every line to exactly 290 bytes: 7 * 290 = 2030 fits, 8 does not.
        let base = serialize_data_point(&point(0, 0)).len() + 1;
        for i in 0..8 {
            let p = point(i, 290 - base);
            assert_eq!(serialize_data_point(&p).len() + 1, 290);
            m.on_data_point(&p).unwrap();
        }
        assert_eq!(m.finished_files().len(), 1);
        assert_eq!(fs::read(&m.finished_files()[0]).unwrap().len(), 7 * 290);
    }

    #[test]
    fn zipped_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = FileDataManager::new(dir.path());
        m.initialize(&DataEndPoint::file(4096, true), &protocol()).unwrap();
        let mut stream = Vec::new();
        for i in 0..100 {
            let p = point(i, 100);
            stream.extend_from_slice((serialize_data_point(&p) + "\n").as_bytes());
            m.on_data_point(&p).unwrap();
        }
        m.close().unwrap();
        let mut joined = Vec::new();
        for f in m.finished_files() {
            assert!(f.to_str().unwrap().ends_with(".ndjson.zip"));
            assert!(!f.with_extension("").exists(), "original kept: {f:?}");
            joined.extend(read_back(f));
        }
        assert_eq!(joined, stream);
    }

    #[test]
    fn oversized_line_gets_own_file() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = FileDataManager::new(dir.path());
        m.initialize(&DataEndPoint::file(1024, false), &protocol()).unwrap();
        m.on_data_point(&point(0, 10)).unwrap();
        m.on_data_point(&point(1, 3000)).unwrap();
        m.on_data_point(&point(2, 10)).unwrap();
        m.close().unwrap();
        let sizes: Vec<_> = m.finished_files().iter().map(|f| fs::metadata(f).unwrap().len()).collect();
        assert_eq!(sizes.len(), 3);
        assert!(sizes[1] > 3000);
    }

    #[test]
    fn encrypt_is_refused() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = FileDataManager::new(dir.path());
        let ep = DataEndPoint::File {
            buffer_size: 4096,
            zip: false,
            encrypt: true,
        };
        assert!(matches!(m.initialize(&ep, &protocol()), Err(SinkError::EncryptUnsupported)));
    }

    #[test]
    fn write_after_close_fails() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = FileDataManager::new(dir.path());
        m.initialize(&DataEndPoint::file(4096, false), &protocol()).unwrap();
        m.close().unwrap();
        assert!(matches!(m.on_data_point(&point(0, 1)), Err(SinkError::Closed)));
    }
}
