//! Labeled `p×p×C` spatio-spectral patch cubes and the `.iop` container.
//!
//! Container layout, all integers little-endian:
//!
//! ```text
//! "IOP1" · u32 header length · JSON header
//! record_count × (u16 label · u32 x · u32 y · p·p·C f32 in (row, col, channel) order)
//! ```

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ion_image;
use crate::msi_io::{DatasetHandle, MsiError, SegmentationMask};
use crate::peaks::PeakList;

pub const MAGIC: &[u8; 4] = b"IOP1";

/// Smallest patch the reference downstream 3D CNN accepts.
pub const MIN_RECOMMENDED_PATCH: usize = 11;

#[derive(Debug, Error)]
pub enum PatchError {
    #[error(transparent)]
    Msi(#[from] MsiError),
    #[error("patch size {0} is even; it must be odd")]
    EvenPatchSize(usize),
    #[error("patch size must be at least 1")]
    ZeroPatchSize,
    #[error("peak list is empty")]
    EmptyPeaks,
    #[error("cube at ({x}, {y}) has p={found_p}, C={found_c}; header says p={p}, C={c}")]
    HeaderMismatch {
        p: usize,
        c: usize,
        found_p: usize,
        found_c: usize,
        x: u32,
        y: u32,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: not a patch container: {message}")]
    Format { path: PathBuf, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PatchError + '_ {
    move |source| PatchError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatchCube {
    pub p: usize,
    pub channels: usize,
    /// `p·p·channels` values, (row, col, channel) order.
    pub data: Vec<f32>,
    pub label: u16,
    pub center: (u32, u32),
}

impl PatchCube {
    pub fn get(&self, row: usize, col: usize, channel: usize) -> f32 {
        self.data[(row * self.p + col) * self.channels + channel]
    }

    /// Channel vector at the center pixel.
    pub fn center_spectrum(&self) -> &[f32] {
        let h = self.p / 2;
        let start = (h * self.p + h) * self.channels;
        &self.data[start..start + self.channels]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchHeader {
    pub p: usize,
    #[serde(rename = "C")]
    pub channels: usize,
    pub record_count: usize,
    pub peak_mzs: Vec<f64>,
    pub ppm: f64,
    pub dataset_id: String,
    /// Label value to name.
    pub labels: BTreeMap<u16, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatchDataset {
    pub header: PatchHeader,
    pub records: Vec<PatchCube>,
}

/// Cubes around every labeled pixel, produced in row-major order of centers.
pub struct PatchStream {
    header: PatchHeader,
    width: usize,
    height: usize,
    /// Pixel-major channel sums: `grid[(y·w + x)·C + c]`.
    grid: Vec<f32>,
    centers: Vec<(u32, u32, u16)>,
    next: usize,
}

impl PatchStream {
    /// Header with `record_count` set to the number of cubes this stream yields.
    pub fn header(&self) -> &PatchHeader {
        &self.header
    }

    pub fn build(&self, k: usize) -> PatchCube {
        let (cx, cy, label) = self.centers[k];
        let p = self.header.p;
        let c = self.header.channels;
        let half = (p / 2) as i64;
        let mut data = vec![0f32; p * p * c];
        for row in 0..p {
            let y = cy as i64 + row as i64 - half;
            if y < 0 || y >= self.height as i64 {
                continue;
            }
            for col in 0..p {
                let x = cx as i64 + col as i64 - half;
                if x < 0 || x >= self.width as i64 {
                    continue;
                }
                let src = (y as usize * self.width + x as usize) * c;
                let dst = (row * p + col) * c;
                data[dst..dst + c].copy_from_slice(&self.grid[src..src + c]);
            }
        }
        PatchCube {
            p,
            channels: c,
            data,
            label,
            center: (cx, cy),
        }
    }

    /// All remaining cubes, assembled in parallel, in stream order.
    pub fn collect_parallel(mut self) -> Vec<PatchCube> {
        let start = self.next;
        self.next = self.centers.len();
        (start..self.centers.len()).into_par_iter().map(|k| self.build(k)).collect()
    }
}

impl Iterator for PatchStream {
    type Item = PatchCube;

    fn next(&mut self) -> Option<PatchCube> {
        if self.next >= self.centers.len() {
            return None;
        }
        self.next += 1;
        Some(self.build(self.next - 1))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let n = self.centers.len() - self.next;
        (n, Some(n))
    }
}

impl ExactSizeIterator for PatchStream {}

pub fn extract_patches(
    handle: &DatasetHandle,
    peaks: &PeakList,
    mask: &SegmentationMask,
    p: usize,
    ppm: f64,
) -> Result<PatchStream, PatchError> {
    if p == 0 {
        return Err(PatchError::ZeroPatchSize);
    }
    if p % 2 == 0 {
        return Err(PatchError::EvenPatchSize(p));
    }
    if peaks.is_empty() {
        return Err(PatchError::EmptyPeaks);
    }
    mask.check_dims(handle)?;
    if p < MIN_RECOMMENDED_PATCH {
        log::warn!("patch size {p} is below {MIN_RECOMMENDED_PATCH}, the minimum for the reference 3D CNN");
    }
    let (w, h) = (handle.width() as usize, handle.height() as usize);
    let c = peaks.len();
    let images = ion_image::extract_ion_images(handle, &peaks.mzs, ppm)?;
    let mut grid = vec![0f32; w * h * c];
    for (ch, img) in images.iter().enumerate() {
        for (i, &v) in img.pixels.iter().enumerate() {
            grid[i * c + ch] = v as f32;
        }
    }
    let mut centers = Vec::new();
    let mut labels = BTreeMap::new();
    for y in 0..h as u32 {
        for x in 0..w as u32 {
            let label = mask.label_at(x, y);
            if label > 0 {
                centers.push((x, y, label as u16));
                labels.entry(label as u16).or_insert_with(|| format!("region_{label}"));
            }
        }
    }
    let header = PatchHeader {
        p,
        channels: c,
        record_count: centers.len(),
        peak_mzs: peaks.mzs.clone(),
        ppm,
        dataset_id: handle.dataset_id(),
        labels,
    };
    Ok(PatchStream {
        header,
        width: w,
        height: h,
        grid,
        centers,
        next: 0,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PatchSummary {
    pub record_count: usize,
    pub per_label: BTreeMap<u16, usize>,
}

fn write_record(out: &mut impl Write, cube: &PatchCube) -> std::io::Result<()> {
    out.write_all(&cube.label.to_le_bytes())?;
    out.write_all(&cube.center.0.to_le_bytes())?;
    out.write_all(&cube.center.1.to_le_bytes())?;
    let mut buf = Vec::with_capacity(cube.data.len() * 4);
    for v in &cube.data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&buf)
}

/// Writes `cubes` under `header` (its `record_count` is replaced by the
/// actual count). Nothing is left at `path` on failure.
pub fn export_patches<I>(header: &PatchHeader, cubes: I, path: impl AsRef<Path>) -> Result<PatchSummary, PatchError>
where
    I: IntoIterator<Item = PatchCube>,
{
    let path = path.as_ref();
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let records = tempfile::tempfile_in(dir).map_err(io_err(dir))?;
    let mut records = BufWriter::new(records);
    let mut per_label = BTreeMap::new();
    let mut count = 0usize;
    for cube in cubes {
        if cube.p != header.p || cube.channels != header.channels || cube.data.len() != cube.p * cube.p * cube.channels {
            return Err(PatchError::HeaderMismatch {
                p: header.p,
                c: header.channels,
                found_p: cube.p,
                found_c: cube.channels,
                x: cube.center.0,
                y: cube.center.1,
            });
        }
        write_record(&mut records, &cube).map_err(io_err(path))?;
        *per_label.entry(cube.label).or_insert(0) += 1;
        count += 1;
    }
    let mut records = records.into_inner().map_err(|e| io_err(path)(e.into_error()))?;
    records.seek(SeekFrom::Start(0)).map_err(io_err(path))?;

    let mut header = header.clone();
    header.record_count = count;
    let json = serde_json::to_vec(&header).expect("header serializes");
    let tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(dir))?;
    {
        let mut out = BufWriter::new(tmp.as_file());
        out.write_all(MAGIC).map_err(io_err(path))?;
        out.write_all(&(json.len() as u32).to_le_bytes()).map_err(io_err(path))?;
        out.write_all(&json).map_err(io_err(path))?;
        std::io::copy(&mut records, &mut out).map_err(io_err(path))?;
        out.flush().map_err(io_err(path))?;
    }
    tmp.as_file().sync_all().map_err(io_err(path))?;
    tmp.persist(path).map_err(|e| io_err(path)(e.error))?;
    Ok(PatchSummary {
        record_count: count,
        per_label,
    })
}

pub fn read_patches(path: impl AsRef<Path>) -> Result<PatchDataset, PatchError> {
    let path = path.as_ref();
    let format = |message: String| PatchError::Format {
        path: path.to_path_buf(),
        message,
    };
    let file = File::open(path).map_err(io_err(path))?;
    let file_len = file.metadata().map_err(io_err(path))?.len();
    let mut r = BufReader::new(file);
    let mut fixed = [0u8; 8];
    r.read_exact(&mut fixed).map_err(|_| format("shorter than the fixed preamble".into()))?;
    if &fixed[..4] != MAGIC {
        return Err(format(format!("magic {:?}", &fixed[..4])));
    }
    let header_len = u32::from_le_bytes(fixed[4..8].try_into().unwrap()) as u64;
    if 8 + header_len > file_len {
        return Err(format(format!("header length {header_len} exceeds file size")));
    }
    let mut json = vec![0u8; header_len as usize];
    r.read_exact(&mut json).map_err(io_err(path))?;
    let header: PatchHeader = serde_json::from_slice(&json).map_err(|e| format(format!("header: {e}")))?;
    let values = header.p * header.p * header.channels;
    let record_len = 10 + 4 * values as u64;
    let expected = 8 + header_len + record_len * header.record_count as u64;
    if expected != file_len {
        return Err(format(format!(
            "{} records of {record_len} bytes need {expected} bytes, file has {file_len}",
            header.record_count
        )));
    }
    let mut records = Vec::with_capacity(header.record_count);
    let mut buf = vec![0u8; record_len as usize];
    for _ in 0..header.record_count {
        r.read_exact(&mut buf).map_err(io_err(path))?;
        let label = u16::from_le_bytes(buf[0..2].try_into().unwrap());
        let x = u32::from_le_bytes(buf[2..6].try_into().unwrap());
        let y = u32::from_le_bytes(buf[6..10].try_into().unwrap());
        let data = buf[10..]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        records.push(PatchCube {
            p: header.p,
            channels: header.channels,
            data,
            label,
            center: (x, y),
        });
    }
    Ok(PatchDataset { header, records })
}
