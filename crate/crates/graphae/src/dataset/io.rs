//! On-disk dataset formats.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use ndarray::Array2;

use crate::error::{Error, Result};

use super::DataSet;

/// Supported input layouts.
///
/// * `Csv`: one sample per row, comma separated; optional final integer
///   label column; optional header row (detected by a non-numeric first row).
/// * `ImageFolder`: one subdirectory per class, grayscale images flattened
///   row-major; the subdirectory order (sorted by name) assigns class ids.
/// * `Idx`: big-endian magic + dims header (the classic ubyte/float tensor
///   container); first dimension indexes samples, the rest are flattened.
///   Labels, when present, come from a companion one-dimensional file.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DataFormat {
    Csv { labeled: bool },
    ImageFolder,
    Idx { labels: Option<PathBuf> },
}

pub(super) fn load(path: &Path, format: &DataFormat) -> Result<DataSet> {
    match format {
        DataFormat::Csv { labeled } => load_csv(path, *labeled),
        DataFormat::ImageFolder => load_image_folder(path),
        DataFormat::Idx { labels } => load_idx(path, labels.as_deref()),
    }
}

fn name_of(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into())
}

/// Map arbitrary integer label values to contiguous ids `0..class_count-1`,
/// ordered by value.
fn contiguous_labels(raw: &[i64]) -> Vec<usize> {
    let mut distinct: Vec<i64> = raw.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    raw.iter()
        .map(|v| distinct.binary_search(v).expect("value present"))
        .collect()
}

fn load_csv(path: &Path, labeled: bool) -> Result<DataSet> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut raw_labels: Vec<i64> = Vec::new();
    let mut width = None;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        // header row: first data-bearing line with any non-numeric cell
        if rows.is_empty() && cells.iter().any(|c| c.parse::<f64>().is_err()) {
            continue;
        }
        let mut vals = Vec::with_capacity(cells.len());
        for cell in &cells {
            vals.push(cell.parse::<f64>().map_err(|_| {
                Error::Parse(format!(
                    "{}: line {}: non-numeric cell {cell:?}",
                    path.display(),
                    lineno + 1
                ))
            })?);
        }
        if labeled {
            let raw = *vals.last().ok_or_else(|| {
                Error::Parse(format!("{}: line {}: empty row", path.display(), lineno + 1))
            })?;
            if raw.fract() != 0.0 {
                return Err(Error::Parse(format!(
                    "{}: line {}: label column must be integer, got {raw}",
                    path.display(),
                    lineno + 1
                )));
            }
            raw_labels.push(raw as i64);
            vals.pop();
        }
        match width {
            None => width = Some(vals.len()),
            Some(w) if w != vals.len() => {
                return Err(Error::Parse(format!(
                    "{}: line {}: ragged row ({} cells, expected {w})",
                    path.display(),
                    lineno + 1,
                    vals.len()
                )))
            }
            _ => {}
        }
        rows.push(vals);
    }
    let m = width.unwrap_or(0);
    let n = rows.len();
    if n == 0 || m == 0 {
        return Err(Error::Parse(format!("{}: empty dataset", path.display())));
    }
    let mut x = Array2::zeros((m, n));
    for (j, row) in rows.iter().enumerate() {
        for (i, &v) in row.iter().enumerate() {
            x[[i, j]] = v;
        }
    }
    let labels = labeled.then(|| contiguous_labels(&raw_labels));
    DataSet::from_raw(x, labels, name_of(path))
}

fn load_image_folder(path: &Path) -> Result<DataSet> {
    let mut class_dirs: Vec<PathBuf> = fs::read_dir(path)
        .map_err(|e| Error::io(path, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    class_dirs.sort();
    if class_dirs.is_empty() {
        return Err(Error::Parse(format!(
            "{}: no class subdirectories",
            path.display()
        )));
    }
    let mut columns: Vec<Vec<f64>> = Vec::new();
    let mut labels = Vec::new();
    let mut shape: Option<(u32, u32)> = None;
    for (class, dir) in class_dirs.iter().enumerate() {
        let mut files: Vec<PathBuf> = fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file())
            .collect();
        files.sort();
        for file in files {
            let img = image::open(&file)
                .map_err(|e| Error::Parse(format!("{}: {e}", file.display())))?
                .into_luma8();
            let dims = img.dimensions();
            match shape {
                None => shape = Some(dims),
                Some(s) if s != dims => {
                    return Err(Error::Parse(format!(
                        "{}: image size {dims:?} differs from {s:?}",
                        file.display()
                    )))
                }
                _ => {}
            }
            columns.push(img.pixels().map(|p| p.0[0] as f64).collect());
            labels.push(class);
        }
    }
    if columns.is_empty() {
        return Err(Error::Parse(format!("{}: empty dataset", path.display())));
    }
    let m = columns[0].len();
    let mut x = Array2::zeros((m, columns.len()));
    for (j, col) in columns.iter().enumerate() {
        for (i, &v) in col.iter().enumerate() {
            x[[i, j]] = v;
        }
    }
    DataSet::from_raw(x, Some(labels), name_of(path))
}

struct IdxFile {
    dims: Vec<usize>,
    values: Vec<f64>,
}

fn read_idx(path: &Path) -> Result<IdxFile> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let bad = |msg: &str| Error::Parse(format!("{}: {msg}", path.display()));
    if bytes.len() < 4 || bytes[0] != 0 || bytes[1] != 0 {
        return Err(bad("not an idx file (bad magic)"));
    }
    let ty = bytes[2];
    let ndims = bytes[3] as usize;
    let mut off = 4;
    let mut dims = Vec::with_capacity(ndims);
    for _ in 0..ndims {
        if off + 4 > bytes.len() {
            return Err(bad("truncated dims header"));
        }
        dims.push(u32::from_be_bytes(bytes[off..off + 4].try_into().unwrap()) as usize);
        off += 4;
    }
    let count: usize = dims.iter().product();
    let width = match ty {
        0x08 => 1,
        0x0C | 0x0D => 4,
        0x0E => 8,
        other => return Err(bad(&format!("unsupported element type 0x{other:02x}"))),
    };
    if bytes.len() - off != count * width {
        return Err(bad("payload size does not match dims header"));
    }
    let values = bytes[off..]
        .chunks_exact(width)
        .map(|c| match ty {
            0x08 => c[0] as f64,
            0x0C => i32::from_be_bytes(c.try_into().unwrap()) as f64,
            0x0D => f32::from_be_bytes(c.try_into().unwrap()) as f64,
            0x0E => f64::from_be_bytes(c.try_into().unwrap()),
            _ => unreachable!(),
        })
        .collect();
    Ok(IdxFile { dims, values })
}

fn load_idx(path: &Path, labels_path: Option<&Path>) -> Result<DataSet> {
    let data = read_idx(path)?;
    if data.dims.is_empty() {
        return Err(Error::Parse(format!(
            "{}: data file needs at least one dimension",
            path.display()
        )));
    }
    let n = data.dims[0];
    let m: usize = data.dims[1..].iter().product::<usize>().max(1);
    let mut x = Array2::zeros((m, n));
    for j in 0..n {
        for i in 0..m {
            x[[i, j]] = data.values[j * m + i];
        }
    }
    let labels = match labels_path {
        None => None,
        Some(lp) => {
            let lf = read_idx(lp)?;
            if lf.dims.len() != 1 || lf.dims[0] != n {
                return Err(Error::Dim(format!(
                    "{}: label file must be one-dimensional with {n} entries",
                    lp.display()
                )));
            }
            let raw: Vec<i64> = lf.values.iter().map(|&v| v as i64).collect();
            Some(contiguous_labels(&raw))
        }
    };
    DataSet::from_raw(x, labels, name_of(path))
}
