//! Images, dataset discovery and small file helpers.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use supcon_core::data::{finalize_records, parse_patch_filename, PatchRecord};
use supcon_core::PatchImage;
use walkdir::WalkDir;

use crate::error::{Error, Result};

pub fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        create_dir(parent)?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::format(path, e))?;
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = read_bytes(path)?;
    serde_json::from_slice(&bytes).map_err(|e| Error::format(path, e))
}

pub fn sha256_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

/// Digest of a directory tree: SHA-256 over sorted `relative-path hash`
/// lines of every file.
pub fn sha256_tree(root: &Path) -> Result<String> {
    let mut lines = Vec::new();
    for entry in WalkDir::new(root).sort_by_file_name() {
        let entry = entry.map_err(|e| Error::format(root, e))?;
        if entry.file_type().is_file() {
            let rel = entry.path().strip_prefix(root).expect("walk stays under root");
            lines.push(format!("{} {}\n", rel.to_string_lossy(), sha256_file(entry.path())?));
        }
    }
    Ok(sha256_bytes(lines.concat().as_bytes()))
}

pub fn read_png(path: &Path) -> Result<PatchImage> {
    let img = image::open(path).map_err(|e| Error::format(path, e))?.to_rgb8();
    let (w, h) = img.dimensions();
    Ok(PatchImage::from_rgb8(w as usize, h as usize, img.as_raw())?)
}

pub fn write_png(path: &Path, img: &PatchImage) -> Result<()> {
    if let Some(parent) = path.parent() {
        create_dir(parent)?;
    }
    let buf = image::RgbImage::from_raw(img.width() as u32, img.height() as u32, img.to_rgb8())
        .expect("buffer matches dimensions");
    buf.save(path).map_err(|e| Error::format(path, e))
}

pub fn write_gray_png(path: &Path, width: usize, height: usize, pixels: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        create_dir(parent)?;
    }
    let buf = image::GrayImage::from_raw(width as u32, height as u32, pixels.to_vec()).expect("buffer matches dimensions");
    buf.save(path).map_err(|e| Error::format(path, e))
}

/// A file under the dataset root that was not accepted as a patch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rejection {
    pub path: PathBuf,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedDataset {
    /// Sorted by `(patient_id, x, y)`; `path` is relative to the root.
    pub records: Vec<PatchRecord>,
    pub rejected: Vec<Rejection>,
}

/// Scans `root` recursively for patch files. Files that do not follow the
/// naming grammar, or are not PNG, are returned as rejections.
pub fn load_dataset(root: &Path) -> Result<LoadedDataset> {
    if !root.is_dir() {
        return Err(Error::missing(root, "dataset root is not a directory"));
    }
    let mut records = Vec::new();
    let mut rejected = Vec::new();
    for entry in WalkDir::new(root).sort_by_file_name() {
        let entry = entry.map_err(|e| Error::format(root, e))?;
        if !entry.file_type().is_file() {
            continue;
        }
        let rel = entry.path().strip_prefix(root).expect("walk stays under root").to_path_buf();
        let name = entry.file_name().to_string_lossy();
        match parse_patch_filename(&name) {
            Ok(parsed) if parsed.extension.eq_ignore_ascii_case("png") => records.push(PatchRecord {
                patient_id: parsed.patient_id,
                x: parsed.x,
                y: parsed.y,
                label: parsed.label,
                path: rel.to_string_lossy().into_owned(),
            }),
            Ok(parsed) => rejected.push(Rejection { path: rel, reason: format!("unsupported extension `{}`", parsed.extension) }),
            Err(e) => rejected.push(Rejection { path: rel, reason: e.to_string() }),
        }
    }
    for r in &rejected {
        log::warn!("skipping {}: {}", r.path.display(), r.reason);
    }
    let records = finalize_records(records)?;
    Ok(LoadedDataset { records, rejected })
}

pub fn load_images(root: &Path, records: &[PatchRecord]) -> Result<Vec<PatchImage>> {
    records.iter().map(|r| read_png(&root.join(&r.path))).collect()
}
