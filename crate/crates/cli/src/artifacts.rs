//! Reading data points back out of a run directory.

use std::fs::{self, File};
use std::io::Read;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use mobsense_core::sinks::{parse_data_point, DEADLETTER_FILE};
use mobsense_core::DataPoint;

/// Memory-endpoint runs are dumped here when the run ends.
pub const MEMORY_DUMP_FILE: &str = "memory.ndjson";

/// Sink output files in a run directory, in the order they were written:
/// rolled data files by sequence number, then the memory dump, then the
/// deadletter spill.
pub fn sink_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut data = Vec::new();
    for entry in fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let path = entry?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        if name.starts_with("data-") && (name.ends_with(".ndjson") || name.ends_with(".ndjson.zip")) {
            data.push(path);
        }
    }
    data.sort();
    for extra in [MEMORY_DUMP_FILE, DEADLETTER_FILE] {
        let p = dir.join(extra);
        if p.is_file() {
            data.push(p);
        }
    }
    Ok(data)
}

/// Raw NDJSON bytes of one sink file, unwrapping a zip archive.
pub fn read_ndjson(path: &Path) -> Result<Vec<u8>> {
    let is_zip = path.extension().is_some_and(|e| e == "zip");
    if !is_zip {
        return fs::read(path).with_context(|| format!("reading {}", path.display()));
    }
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut archive = zip::ZipArchive::new(file).with_context(|| format!("reading archive {}", path.display()))?;
    let mut out = Vec::new();
    for i in 0..archive.len() {
        archive.by_index(i)?.read_to_end(&mut out)?;
    }
    Ok(out)
}

/// Every data point found in the run directory's sink files.
pub fn read_points(dir: &Path) -> Result<Vec<DataPoint>> {
    let mut points = Vec::new();
    for path in sink_files(dir)? {
        let bytes = read_ndjson(&path)?;
        let text = String::from_utf8(bytes).with_context(|| format!("{} is not UTF-8", path.display()))?;
        for (n, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            match parse_data_point(line) {
                Ok(p) => points.push(p),
                Err(e) => bail!("{}:{}: {e}", path.display(), n + 1),
            }
        }
    }
    Ok(points)
}
