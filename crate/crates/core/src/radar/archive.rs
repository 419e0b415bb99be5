//! Sequence archive: a directory with `manifest.json` and `frames.bin`
//! (frame-major, row-major, little-endian `f32`, mm/h).

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{RadarSequence, RainField};
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const FRAMES_FILE: &str = "frames.bin";
const DTYPE: &str = "f32le";
const ORDER: &str = "frame-major row-major";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub id: String,
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub interval_seconds: u32,
    pub dtype: String,
    pub order: String,
}

fn archive_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::Archive {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

/// Writes `seq` into directory `dir`, creating it if needed. Values are
/// stored as `f32`.
pub fn write_archive(seq: &RadarSequence, dir: &Path) -> Result<()> {
    seq.validate()?;
    if let Some((k, _)) = seq
        .frames
        .iter()
        .enumerate()
        .find(|(_, f)| f.data.iter().any(|v| !v.is_finite()))
    {
        return Err(archive_err(dir, format!("frame {k} has non-finite values")));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let manifest = Manifest {
        id: seq.id.clone(),
        frames: seq.len(),
        height: seq.height(),
        width: seq.width(),
        interval_seconds: seq.interval_seconds,
        dtype: DTYPE.to_string(),
        order: ORDER.to_string(),
    };
    let mpath = dir.join(MANIFEST_FILE);
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    fs::write(&mpath, text).map_err(|e| Error::io(&mpath, e))?;
    let mut payload = Vec::with_capacity(seq.len() * seq.height() * seq.width() * 4);
    for f in &seq.frames {
        for &v in &f.data {
            payload.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    let fpath = dir.join(FRAMES_FILE);
    fs::write(&fpath, payload).map_err(|e| Error::io(&fpath, e))
}

pub fn read_archive(dir: &Path) -> Result<RadarSequence> {
    let mpath = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
    let manifest: Manifest = serde_json::from_str(&text)
        .map_err(|e| archive_err(dir, format!("malformed manifest: {e}")))?;
    if manifest.dtype != DTYPE {
        return Err(archive_err(dir, format!("unsupported dtype {:?}", manifest.dtype)));
    }
    if manifest.order != ORDER {
        return Err(archive_err(dir, format!("unsupported order {:?}", manifest.order)));
    }
    if manifest.frames == 0 || manifest.height == 0 || manifest.width == 0 {
        return Err(archive_err(dir, "manifest declares an empty sequence"));
    }
    let fpath = dir.join(FRAMES_FILE);
    let bytes = fs::read(&fpath).map_err(|e| Error::io(&fpath, e))?;
    let cells = manifest.height * manifest.width;
    let expected = manifest.frames * cells * 4;
    if bytes.len() != expected {
        return Err(archive_err(
            dir,
            format!(
                "payload has {} bytes, manifest ({} frames of {}x{}) implies {expected}",
                bytes.len(),
                manifest.frames,
                manifest.height,
                manifest.width
            ),
        ));
    }
    let mut frames = Vec::with_capacity(manifest.frames);
    for (k, chunk) in bytes.chunks_exact(cells * 4).enumerate() {
        let mut data = Vec::with_capacity(cells);
        for (i, b) in chunk.chunks_exact(4).enumerate() {
            let v = f32::from_le_bytes(b.try_into().expect("4 bytes"));
            if !v.is_finite() {
                return Err(archive_err(dir, format!("frame {k} cell {i} is not finite")));
            }
            if v < 0.0 {
                return Err(Error::DataIntegrity(format!(
                    "{}: frame {k} cell {i} has negative rain rate {v}",
                    dir.display()
                )));
            }
            data.push(v as f64);
        }
        frames.push(RainField::new(manifest.height, manifest.width, data)?);
    }
    RadarSequence::new(manifest.id, manifest.interval_seconds, frames)
}

/// Archive directories directly under `root`, sorted by name.
pub fn list_archives(root: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(root).map_err(|e| Error::io(root, e))?;
    let mut dirs = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(root, e))?.path();
        if path.join(MANIFEST_FILE).is_file() {
            dirs.push(path);
        }
    }
    dirs.sort();
    Ok(dirs)
}

pub fn read_archive_dir(root: &Path) -> Result<Vec<RadarSequence>> {
    list_archives(root)?.iter().map(|p| read_archive(p)).collect()
}
