//! Portable dataset directory: `meta.json`, `cube.bin` (f32 LE, band-sequential)
//! and `labels.bin` (u16 LE, row-major).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{HsiCube, LabelMap};
use crate::error::{HsiError, Result};

pub const META_FILE: &str = "meta.json";
pub const CUBE_FILE: &str = "cube.bin";
pub const LABELS_FILE: &str = "labels.bin";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub rows: usize,
    pub cols: usize,
    pub bands: usize,
    pub n_classes: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub band_names: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_names: Option<Vec<String>>,
}

fn read_required(path: &Path) -> Result<Vec<u8>> {
    if !path.is_file() {
        return Err(HsiError::MissingFile(path.to_path_buf()));
    }
    Ok(fs::read(path)?)
}

/// Loads a dataset directory, returning its metadata alongside cube and labels.
pub fn load_dataset(dir: &Path) -> Result<(DatasetMeta, HsiCube, LabelMap)> {
    let meta_bytes = read_required(&dir.join(META_FILE))?;
    let meta: DatasetMeta = serde_json::from_slice(&meta_bytes)?;
    let cube_bytes = read_required(&dir.join(CUBE_FILE))?;
    let label_bytes = read_required(&dir.join(LABELS_FILE))?;

    let n_values = meta.rows * meta.cols * meta.bands;
    if cube_bytes.len() != n_values * 4 {
        return Err(HsiError::DimensionMismatch(format!(
            "{CUBE_FILE}: declared {}x{}x{} needs {} bytes, found {}",
            meta.rows,
            meta.cols,
            meta.bands,
            n_values * 4,
            cube_bytes.len()
        )));
    }
    let n_pixels = meta.rows * meta.cols;
    if label_bytes.len() != n_pixels * 2 {
        return Err(HsiError::DimensionMismatch(format!(
            "{LABELS_FILE}: declared {}x{} needs {} bytes, found {}",
            meta.rows,
            meta.cols,
            n_pixels * 2,
            label_bytes.len()
        )));
    }

    let data = cube_bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let mut cube = HsiCube::new(meta.rows, meta.cols, meta.bands, data)?;
    if let Some(names) = &meta.band_names {
        cube = cube.with_band_names(names.clone())?;
    }
    let labels = label_bytes
        .chunks_exact(2)
        .map(|c| u16::from_le_bytes([c[0], c[1]]))
        .collect();
    let labels = LabelMap::new(meta.rows, meta.cols, labels, meta.n_classes)?;
    Ok((meta, cube, labels))
}

pub fn load_cube(dir: &Path) -> Result<(HsiCube, LabelMap)> {
    let (_, cube, labels) = load_dataset(dir)?;
    Ok((cube, labels))
}

pub fn save_dataset(
    dir: &Path,
    cube: &HsiCube,
    labels: &LabelMap,
    class_names: Option<Vec<String>>,
) -> Result<()> {
    if labels.rows() != cube.rows() || labels.cols() != cube.cols() {
        return Err(HsiError::DimensionMismatch(format!(
            "labels {}x{} do not match cube {}x{}",
            labels.rows(),
            labels.cols(),
            cube.rows(),
            cube.cols()
        )));
    }
    fs::create_dir_all(dir)?;
    let meta = DatasetMeta {
        rows: cube.rows(),
        cols: cube.cols(),
        bands: cube.bands(),
        n_classes: labels.n_classes(),
        band_names: cube.band_names().map(<[String]>::to_vec),
        class_names,
    };
    fs::write(dir.join(META_FILE), serde_json::to_vec_pretty(&meta)?)?;

    let mut buf = Vec::with_capacity(cube.data().len() * 4);
    for v in cube.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(dir.join(CUBE_FILE), buf)?;

    let mut buf = Vec::with_capacity(labels.labels().len() * 2);
    for l in labels.labels() {
        buf.extend_from_slice(&l.to_le_bytes());
    }
    fs::write(dir.join(LABELS_FILE), buf)?;
    Ok(())
}
