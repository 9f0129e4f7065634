//! imzML descriptor + ibd binary reader and writer.
//!
//! Only uncompressed little-endian `float32`/`float64` arrays are supported.
//! Spectra are decoded on demand with positioned reads, so a
//! [`DatasetHandle`] can be shared between threads without locking.

use std::borrow::Cow;
use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;

use super::{is_strictly_ascending, MsiError, Spectrum};

const MZ_ARRAY: &str = "MS:1000514";
const INTENSITY_ARRAY: &str = "MS:1000515";
const FLOAT32: &str = "MS:1000521";
const FLOAT64: &str = "MS:1000523";
const NO_COMPRESSION: &str = "MS:1000576";
const ZLIB_COMPRESSION: &str = "MS:1000574";
const CONTINUOUS: &str = "IMS:1000030";
const PROCESSED: &str = "IMS:1000031";
const UUID: &str = "IMS:1000080";
const MAX_PIXELS_X: &str = "IMS:1000042";
const MAX_PIXELS_Y: &str = "IMS:1000043";
const POSITION_X: &str = "IMS:1000050";
const POSITION_Y: &str = "IMS:1000051";
const EXT_OFFSET: &str = "IMS:1000102";
const EXT_ARRAY_LENGTH: &str = "IMS:1000103";
const EXT_ENCODED_LENGTH: &str = "IMS:1000104";

/// Integer and exotic encodings that are recognised only to be rejected.
const UNSUPPORTED_TYPES: &[(&str, &str)] = &[
    ("MS:1000519", "32-bit integer"),
    ("MS:1000522", "64-bit integer"),
    ("IMS:1100000", "8-bit integer"),
    ("IMS:1100001", "16-bit integer"),
    ("IMS:1000141", "32-bit integer"),
    ("IMS:1000142", "64-bit integer"),
    ("MS:1000520", "16-bit float"),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// All spectra share one m/z axis stored once in the binary file.
    Continuous,
    /// Every spectrum carries its own m/z array.
    Processed,
}

/// Element width of a stored array.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Precision {
    F32,
    F64,
}

impl Precision {
    pub fn width(self) -> usize {
        match self {
            Precision::F32 => 4,
            Precision::F64 => 8,
        }
    }

    fn accession(self) -> (&'static str, &'static str) {
        match self {
            Precision::F32 => (FLOAT32, "32-bit float"),
            Precision::F64 => (FLOAT64, "64-bit float"),
        }
    }
}

/// Location of one array inside the ibd file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ArrayRef {
    pub offset: u64,
    pub length: usize,
    pub precision: Precision,
}

impl ArrayRef {
    fn byte_len(&self) -> usize {
        self.length * self.precision.width()
    }
}

/// Index entry for one spectrum: 0-based pixel position and array locations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PixelEntry {
    pub x: u32,
    pub y: u32,
    pub mz: ArrayRef,
    pub intensity: ArrayRef,
}

/// An opened imzML dataset. Immutable after [`DatasetHandle::open`].
#[derive(Debug)]
pub struct DatasetHandle {
    source_path: PathBuf,
    binary_path: PathBuf,
    binary: File,
    mode: Mode,
    width: u32,
    height: u32,
    uuid: [u8; 16],
    pixel_index: Vec<PixelEntry>,
    grid: Vec<Option<u32>>,
    mz_axis: Option<Vec<f64>>,
}

impl DatasetHandle {
    /// Parses the descriptor, checks the binary file's uuid and builds the
    /// pixel index. No intensity data is read.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, MsiError> {
        let path = path.as_ref();
        let binary_path = find_binary(path)?;
        let file = File::open(path).map_err(|e| MsiError::io(path, e))?;
        let parsed = parse_descriptor(BufReader::new(file))?;

        let binary = File::open(&binary_path).map_err(|e| MsiError::io(&binary_path, e))?;
        let mut header = [0u8; 16];
        read_exact_at(&binary, &mut header, 0)?;
        let xml_uuid = parsed
            .uuid
            .ok_or_else(|| MsiError::MalformedXml("missing universally unique identifier".into()))?;
        if header != xml_uuid {
            return Err(MsiError::UuidMismatch {
                xml: hex(&xml_uuid),
                binary: hex(&header),
            });
        }

        let mode = parsed
            .mode
            .ok_or_else(|| MsiError::MalformedXml("missing continuous/processed mode".into()))?;
        let spectra = parsed.spectra;
        let width = parsed
            .width
            .unwrap_or_else(|| spectra.iter().map(|s| s.x + 1).max().unwrap_or(0));
        let height = parsed
            .height
            .unwrap_or_else(|| spectra.iter().map(|s| s.y + 1).max().unwrap_or(0));

        let mut grid = vec![None; width as usize * height as usize];
        for (i, s) in spectra.iter().enumerate() {
            if s.x >= width || s.y >= height {
                return Err(MsiError::MalformedXml(format!(
                    "spectrum {i} at pixel ({}, {}) lies outside the {width}x{height} grid",
                    s.x + 1,
                    s.y + 1
                )));
            }
            let cell = &mut grid[(s.y * width + s.x) as usize];
            if cell.is_some() {
                return Err(MsiError::MalformedXml(format!(
                    "duplicate pixel position ({}, {})",
                    s.x + 1,
                    s.y + 1
                )));
            }
            *cell = Some(i as u32);
        }

        let mut handle = DatasetHandle {
            source_path: path.to_path_buf(),
            binary_path,
            binary,
            mode,
            width,
            height,
            uuid: xml_uuid,
            pixel_index: spectra,
            grid,
            mz_axis: None,
        };
        if mode == Mode::Continuous {
            let axis = match handle.pixel_index.first() {
                Some(first) => handle.read_array(&first.mz)?,
                None => Vec::new(),
            };
            if !is_strictly_ascending(&axis) {
                return Err(MsiError::MalformedXml(
                    "continuous m/z axis is not strictly ascending".into(),
                ));
            }
            handle.mz_axis = Some(axis);
        }
        Ok(handle)
    }

    pub fn source_path(&self) -> &Path {
        &self.source_path
    }

    pub fn binary_path(&self) -> &Path {
        &self.binary_path
    }

    /// File stem of the descriptor, used as the dataset identifier.
    pub fn dataset_id(&self) -> String {
        self.source_path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn uuid(&self) -> [u8; 16] {
        self.uuid
    }

    pub fn spectrum_count(&self) -> usize {
        self.pixel_index.len()
    }

    pub fn pixel_index(&self) -> &[PixelEntry] {
        &self.pixel_index
    }

    /// Shared m/z axis; `Some` iff the dataset is in continuous mode.
    pub fn mz_axis(&self) -> Option<&[f64]> {
        self.mz_axis.as_deref()
    }

    /// Spectrum index stored at 0-based pixel `(x, y)`, if measured.
    pub fn spectrum_at(&self, x: u32, y: u32) -> Option<usize> {
        if x >= self.width || y >= self.height {
            return None;
        }
        self.grid[(y * self.width + x) as usize].map(|i| i as usize)
    }

    fn entry(&self, index: usize) -> Result<&PixelEntry, MsiError> {
        self.pixel_index.get(index).ok_or(MsiError::IndexOutOfRange {
            index,
            count: self.pixel_index.len(),
        })
    }

    pub fn read_spectrum(&self, index: usize) -> Result<Spectrum, MsiError> {
        let entry = *self.entry(index)?;
        let mzs = self.read_mzs(index)?.into_owned();
        let intensities = self.read_array(&entry.intensity)?;
        if mzs.len() != intensities.len() {
            return Err(MsiError::MalformedXml(format!(
                "spectrum {index}: {} m/z values but {} intensities",
                mzs.len(),
                intensities.len()
            )));
        }
        Ok(Spectrum::new(entry.x, entry.y, mzs, intensities))
    }

    /// m/z array of one spectrum; borrowed from the shared axis in
    /// continuous mode.
    pub fn read_mzs(&self, index: usize) -> Result<Cow<'_, [f64]>, MsiError> {
        let entry = self.entry(index)?;
        match &self.mz_axis {
            Some(axis) => Ok(Cow::Borrowed(axis.as_slice())),
            None => self.read_array(&entry.mz).map(Cow::Owned),
        }
    }

    pub fn read_intensities(&self, index: usize) -> Result<Vec<f64>, MsiError> {
        let entry = *self.entry(index)?;
        self.read_array(&entry.intensity)
    }

    fn read_array(&self, array: &ArrayRef) -> Result<Vec<f64>, MsiError> {
        let mut bytes = vec![0u8; array.byte_len()];
        read_exact_at(&self.binary, &mut bytes, array.offset)?;
        Ok(match array.precision {
            Precision::F32 => bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                .collect(),
            Precision::F64 => bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        })
    }
}

fn find_binary(path: &Path) -> Result<PathBuf, MsiError> {
    for ext in ["ibd", "IBD"] {
        let candidate = path.with_extension(ext);
        if candidate.is_file() {
            return Ok(candidate);
        }
    }
    Err(MsiError::MissingBinary(path.with_extension("ibd")))
}

#[cfg(unix)]
fn read_exact_at(file: &File, buf: &mut [u8], offset: u64) -> Result<(), MsiError> {
    use std::os::unix::fs::FileExt;
    file.read_exact_at(buf, offset).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => MsiError::TruncatedBinary {
            offset,
            needed: buf.len(),
        },
        _ => MsiError::io("<ibd>", e),
    })
}

#[cfg(windows)]
fn read_exact_at(file: &File, mut buf: &mut [u8], mut offset: u64) -> Result<(), MsiError> {
    use std::os::windows::fs::FileExt;
    let (start, needed) = (offset, buf.len());
    while !buf.is_empty() {
        match file.seek_read(buf, offset) {
            Ok(0) => return Err(MsiError::TruncatedBinary { offset: start, needed }),
            Ok(n) => {
                buf = &mut buf[n..];
                offset += n as u64;
            }
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
            Err(e) => return Err(MsiError::io("<ibd>", e)),
        }
    }
    Ok(())
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().fold(String::with_capacity(32), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

fn parse_uuid(value: &str) -> Result<[u8; 16], MsiError> {
    let digits: String = value.chars().filter(|c| c.is_ascii_hexdigit()).collect();
    let bad = || MsiError::MalformedXml(format!("invalid uuid {value:?}"));
    if digits.len() != 32 || value.chars().any(|c| !(c.is_ascii_hexdigit() || "{}-".contains(c))) {
        return Err(bad());
    }
    let mut out = [0u8; 16];
    for (i, byte) in out.iter_mut().enumerate() {
        *byte = u8::from_str_radix(&digits[2 * i..2 * i + 2], 16).map_err(|_| bad())?;
    }
    Ok(out)
}

#[derive(Debug, Clone)]
struct CvParam {
    accession: String,
    value: String,
}

#[derive(Default)]
struct ParsedDescriptor {
    mode: Option<Mode>,
    uuid: Option<[u8; 16]>,
    width: Option<u32>,
    height: Option<u32>,
    spectra: Vec<PixelEntry>,
}

#[derive(Default)]
struct SpectrumState {
    x: Option<u32>,
    y: Option<u32>,
    mz: Option<ArrayRef>,
    intensity: Option<ArrayRef>,
}

fn attr(e: &BytesStart<'_>, name: &str) -> Result<Option<String>, MsiError> {
    match e.try_get_attribute(name) {
        Ok(Some(a)) => a
            .unescape_value()
            .map(|v| Some(v.into_owned()))
            .map_err(|err| MsiError::MalformedXml(err.to_string())),
        Ok(None) => Ok(None),
        Err(err) => Err(MsiError::MalformedXml(err.to_string())),
    }
}

fn cv_param(e: &BytesStart<'_>) -> Result<CvParam, MsiError> {
    Ok(CvParam {
        accession: attr(e, "accession")?
            .ok_or_else(|| MsiError::MalformedXml("cvParam without accession".into()))?,
        value: attr(e, "value")?.unwrap_or_default(),
    })
}

fn parse_number<T: std::str::FromStr>(param: &CvParam) -> Result<T, MsiError> {
    param.value.trim().parse().map_err(|_| {
        MsiError::MalformedXml(format!(
            "{} has non-numeric value {:?}",
            param.accession, param.value
        ))
    })
}

fn parse_position(param: &CvParam) -> Result<u32, MsiError> {
    let pos: u32 = parse_number(param)?;
    pos.checked_sub(1)
        .ok_or_else(|| MsiError::MalformedXml("pixel positions are 1-based, found 0".into()))
}

fn build_array(params: &[CvParam]) -> Result<(Option<bool>, ArrayRef), MsiError> {
    let mut is_mz = None;
    let mut precision = None;
    let (mut offset, mut length, mut encoded) = (None, None, None);
    for p in params {
        match p.accession.as_str() {
            MZ_ARRAY => is_mz = Some(true),
            INTENSITY_ARRAY => is_mz = Some(false),
            FLOAT32 => precision = Some(Precision::F32),
            FLOAT64 => precision = Some(Precision::F64),
            NO_COMPRESSION => {}
            ZLIB_COMPRESSION => {
                return Err(MsiError::UnsupportedEncoding("zlib-compressed arrays".into()))
            }
            EXT_OFFSET => offset = Some(parse_number::<u64>(p)?),
            EXT_ARRAY_LENGTH => length = Some(parse_number::<usize>(p)?),
            EXT_ENCODED_LENGTH => encoded = Some(parse_number::<usize>(p)?),
            acc => {
                if let Some((_, name)) = UNSUPPORTED_TYPES.iter().find(|(a, _)| *a == acc) {
                    return Err(MsiError::UnsupportedEncoding(format!("{name} arrays ({acc})")));
                }
            }
        }
    }
    let precision =
        precision.ok_or_else(|| MsiError::MalformedXml("binary array without data type".into()))?;
    let array = ArrayRef {
        offset: offset.ok_or_else(|| MsiError::MalformedXml("missing external offset".into()))?,
        length: length
            .ok_or_else(|| MsiError::MalformedXml("missing external array length".into()))?,
        precision,
    };
    if let Some(enc) = encoded {
        if enc != array.byte_len() {
            return Err(MsiError::MalformedXml(format!(
                "encoded length {enc} does not match {} elements of {} bytes",
                array.length,
                precision.width()
            )));
        }
    }
    Ok((is_mz, array))
}

fn parse_descriptor<R: std::io::BufRead>(input: R) -> Result<ParsedDescriptor, MsiError> {
    let mut reader = Reader::from_reader(input);
    reader.config_mut().trim_text(true);
    let mut buf = Vec::new();
    let mut out = ParsedDescriptor::default();
    let mut groups: HashMap<String, Vec<CvParam>> = HashMap::new();
    let mut current_group: Option<(String, Vec<CvParam>)> = None;
    let mut spectrum: Option<SpectrumState> = None;
    let mut array_params: Option<Vec<CvParam>> = None;
    let mut saw_root = false;

    loop {
        let event = reader
            .read_event_into(&mut buf)
            .map_err(|e| MsiError::MalformedXml(format!("at byte {}: {e}", reader.error_position())))?;
        match event {
            Event::Start(ref e) | Event::Empty(ref e) => {
                let is_empty = matches!(event, Event::Empty(_));
                match e.local_name().as_ref() {
                    b"mzML" => saw_root = true,
                    b"referenceableParamGroup" => {
                        let id = attr(e, "id")?.unwrap_or_default();
                        if is_empty {
                            groups.insert(id, Vec::new());
                        } else {
                            current_group = Some((id, Vec::new()));
                        }
                    }
                    b"spectrum" if !is_empty => spectrum = Some(SpectrumState::default()),
                    b"binaryDataArray" if !is_empty && spectrum.is_some() => {
                        array_params = Some(Vec::new())
                    }
                    b"referenceableParamGroupRef" => {
                        let id = attr(e, "ref")?.unwrap_or_default();
                        let params = groups.get(&id).ok_or_else(|| {
                            MsiError::MalformedXml(format!("unknown param group {id:?}"))
                        })?;
                        if let Some(collected) = array_params.as_mut() {
                            collected.extend(params.iter().cloned());
                        } else if let Some(s) = spectrum.as_mut() {
                            for p in params.clone() {
                                apply_spectrum_param(s, &p)?;
                            }
                        }
                    }
                    b"cvParam" => {
                        let p = cv_param(e)?;
                        if let Some((_, params)) = current_group.as_mut() {
                            params.push(p);
                        } else if let Some(collected) = array_params.as_mut() {
                            collected.push(p);
                        } else if let Some(s) = spectrum.as_mut() {
                            apply_spectrum_param(s, &p)?;
                        } else {
                            apply_global_param(&mut out, &p)?;
                        }
                    }
                    _ => {}
                }
            }
            Event::End(ref e) => match e.local_name().as_ref() {
                b"referenceableParamGroup" => {
                    if let Some((id, params)) = current_group.take() {
                        groups.insert(id, params);
                    }
                }
                b"binaryDataArray" => {
                    if let (Some(params), Some(s)) = (array_params.take(), spectrum.as_mut()) {
                        let (is_mz, array) = build_array(&params)?;
                        match is_mz {
                            Some(true) => s.mz = Some(array),
                            Some(false) => s.intensity = Some(array),
                            None => {}
                        }
                    }
                }
                b"spectrum" => {
                    if let Some(s) = spectrum.take() {
                        let index = out.spectra.len();
                        let missing =
                            |what: &str| MsiError::MalformedXml(format!("spectrum {index}: missing {what}"));
                        out.spectra.push(PixelEntry {
                            x: s.x.ok_or_else(|| missing("position x"))?,
                            y: s.y.ok_or_else(|| missing("position y"))?,
                            mz: s.mz.ok_or_else(|| missing("m/z array"))?,
                            intensity: s.intensity.ok_or_else(|| missing("intensity array"))?,
                        });
                    }
                }
                _ => {}
            },
            Event::Eof => break,
            _ => {}
        }
        buf.clear();
    }
    if !saw_root {
        return Err(MsiError::MalformedXml("no mzML root element".into()));
    }
    if spectrum.is_some() || current_group.is_some() {
        return Err(MsiError::MalformedXml("unexpected end of document".into()));
    }
    Ok(out)
}

fn apply_spectrum_param(s: &mut SpectrumState, p: &CvParam) -> Result<(), MsiError> {
    match p.accession.as_str() {
        POSITION_X => s.x = Some(parse_position(p)?),
        POSITION_Y => s.y = Some(parse_position(p)?),
        _ => {}
    }
    Ok(())
}

fn apply_global_param(out: &mut ParsedDescriptor, p: &CvParam) -> Result<(), MsiError> {
    match p.accession.as_str() {
        CONTINUOUS => out.mode = Some(Mode::Continuous),
        PROCESSED => out.mode = Some(Mode::Processed),
        UUID => out.uuid = Some(parse_uuid(&p.value)?),
        MAX_PIXELS_X => out.width = Some(parse_number(p)?),
        MAX_PIXELS_Y => out.height = Some(parse_number(p)?),
        _ => {}
    }
    Ok(())
}

/// Options for [`write_dataset_with`].
#[derive(Debug, Clone)]
pub struct WriteOptions {
    /// Random v4 uuid when `None`.
    pub uuid: Option<[u8; 16]>,
    /// Grid size; defaults to the bounding box of the spectra positions.
    pub width: Option<u32>,
    pub height: Option<u32>,
    pub mz_precision: Precision,
    /// Values are rounded to this width when written.
    pub intensity_precision: Precision,
}

impl Default for WriteOptions {
    fn default() -> Self {
        WriteOptions {
            uuid: None,
            width: None,
            height: None,
            mz_precision: Precision::F64,
            intensity_precision: Precision::F64,
        }
    }
}

/// Writes `spectra` as `<path>` (descriptor) plus `<path>.ibd` with default
/// options (64-bit arrays, random uuid).
pub fn write_dataset(spectra: &[Spectrum], mode: Mode, path: impl AsRef<Path>) -> Result<(), MsiError> {
    write_dataset_with(spectra, mode, path, &WriteOptions::default())
}

pub fn write_dataset_with(
    spectra: &[Spectrum],
    mode: Mode,
    path: impl AsRef<Path>,
    options: &WriteOptions,
) -> Result<(), MsiError> {
    let path = path.as_ref();
    for s in spectra {
        s.validate()?;
    }
    if mode == Mode::Continuous {
        if let Some(first) = spectra.first() {
            if let Some((i, _)) = spectra.iter().enumerate().find(|(_, s)| s.mzs != first.mzs) {
                return Err(MsiError::InconsistentAxis(format!(
                    "spectrum {i} differs from spectrum 0"
                )));
            }
        }
    }
    let width = options
        .width
        .unwrap_or_else(|| spectra.iter().map(|s| s.x + 1).max().unwrap_or(0));
    let height = options
        .height
        .unwrap_or_else(|| spectra.iter().map(|s| s.y + 1).max().unwrap_or(0));
    let mut seen = std::collections::HashSet::new();
    for s in spectra {
        if s.x >= width || s.y >= height {
            return Err(MsiError::InvalidSpectrum(format!(
                "pixel ({}, {}) outside the {width}x{height} grid",
                s.x, s.y
            )));
        }
        if !seen.insert((s.x, s.y)) {
            return Err(MsiError::InvalidSpectrum(format!(
                "duplicate pixel ({}, {})",
                s.x, s.y
            )));
        }
    }

    let uuid = options.uuid.unwrap_or_else(|| *uuid::Uuid::new_v4().as_bytes());
    let ibd_path = path.with_extension("ibd");
    let ibd = File::create(&ibd_path).map_err(|e| MsiError::io(&ibd_path, e))?;
    let mut ibd = BufWriter::new(ibd);
    ibd.write_all(&uuid).map_err(|e| MsiError::io(&ibd_path, e))?;
    let mut offset = uuid.len() as u64;
    let mut put = |w: &mut BufWriter<File>, values: &[f64], precision: Precision| -> Result<ArrayRef, MsiError> {
        let array = ArrayRef {
            offset,
            length: values.len(),
            precision,
        };
        for &v in values {
            let res = match precision {
                Precision::F32 => w.write_all(&(v as f32).to_le_bytes()),
                Precision::F64 => w.write_all(&v.to_le_bytes()),
            };
            res.map_err(|e| MsiError::io(&ibd_path, e))?;
        }
        offset += array.byte_len() as u64;
        Ok(array)
    };
    let mut entries = Vec::with_capacity(spectra.len());
    let shared_axis = match (mode, spectra.first()) {
        (Mode::Continuous, Some(first)) => Some(put(&mut ibd, &first.mzs, options.mz_precision)?),
        _ => None,
    };
    for s in spectra {
        let mz = match shared_axis {
            Some(axis) => axis,
            None => put(&mut ibd, &s.mzs, options.mz_precision)?,
        };
        let intensity = put(&mut ibd, &s.intensities, options.intensity_precision)?;
        entries.push(PixelEntry {
            x: s.x,
            y: s.y,
            mz,
            intensity,
        });
    }
    ibd.flush().map_err(|e| MsiError::io(&ibd_path, e))?;

    let xml = render_descriptor(&entries, mode, width, height, &uuid, options);
    std::fs::write(path, xml).map_err(|e| MsiError::io(path, e))
}

fn render_descriptor(
    entries: &[PixelEntry],
    mode: Mode,
    width: u32,
    height: u32,
    uuid: &[u8; 16],
    options: &WriteOptions,
) -> String {
    let (mode_acc, mode_name) = match mode {
        Mode::Continuous => (CONTINUOUS, "continuous"),
        Mode::Processed => (PROCESSED, "processed"),
    };
    let (mz_acc, mz_name) = options.mz_precision.accession();
    let (int_acc, int_name) = options.intensity_precision.accession();
    let mut x = String::with_capacity(2048 + entries.len() * 1200);
    let _ = write!(
        x,
        r#"<?xml version="1.0" encoding="UTF-8"?>
<mzML xmlns="http://psi.hupo.org/ms/mzml" version="1.1">
  <cvList count="3">
    <cv id="MS" fullName="Proteomics Standards Initiative Mass Spectrometry Ontology" version="4.1.0" URI="http://psidev.cvs.sourceforge.net/*checkout*/psidev/psi/psi-ms/mzML/controlledVocabulary/psi-ms.obo"/>
    <cv id="UO" fullName="Unit Ontology" version="releases/2020-03-10" URI="http://obo.cvs.sourceforge.net/*checkout*/obo/obo/ontology/phenotype/unit.obo"/>
    <cv id="IMS" fullName="Imaging MS Ontology" version="1.1.0" URI="http://www.maldi-msi.org/download/imzml/imagingMS.obo"/>
  </cvList>
  <fileDescription>
    <fileContent>
      <cvParam cvRef="MS" accession="MS:1000579" name="MS1 spectrum" value=""/>
      <cvParam cvRef="IMS" accession="{mode_acc}" name="{mode_name}" value=""/>
      <cvParam cvRef="IMS" accession="{UUID}" name="universally unique identifier" value="{{{uuid_str}}}"/>
    </fileContent>
  </fileDescription>
  <referenceableParamGroupList count="2">
    <referenceableParamGroup id="mzArray">
      <cvParam cvRef="MS" accession="{MZ_ARRAY}" name="m/z array" value="" unitCvRef="MS" unitAccession="MS:1000040" unitName="m/z"/>
      <cvParam cvRef="MS" accession="{mz_acc}" name="{mz_name}" value=""/>
      <cvParam cvRef="MS" accession="{NO_COMPRESSION}" name="no compression" value=""/>
      <cvParam cvRef="IMS" accession="IMS:1000101" name="external data" value="true"/>
    </referenceableParamGroup>
    <referenceableParamGroup id="intensityArray">
      <cvParam cvRef="MS" accession="{INTENSITY_ARRAY}" name="intensity array" value="" unitCvRef="MS" unitAccession="MS:1000131" unitName="number of detector counts"/>
      <cvParam cvRef="MS" accession="{int_acc}" name="{int_name}" value=""/>
      <cvParam cvRef="MS" accession="{NO_COMPRESSION}" name="no compression" value=""/>
      <cvParam cvRef="IMS" accession="IMS:1000101" name="external data" value="true"/>
    </referenceableParamGroup>
  </referenceableParamGroupList>
  <softwareList count="1">
    <software id="ionmorph" version="{version}">
      <cvParam cvRef="MS" accession="MS:1000799" name="custom unreleased software tool" value="ionmorph"/>
    </software>
  </softwareList>
  <scanSettingsList count="1">
    <scanSettings id="scansettings1">
      <cvParam cvRef="IMS" accession="{MAX_PIXELS_X}" name="max count of pixels x" value="{width}"/>
      <cvParam cvRef="IMS" accession="{MAX_PIXELS_Y}" name="max count of pixels y" value="{height}"/>
    </scanSettings>
  </scanSettingsList>
  <instrumentConfigurationList count="1">
    <instrumentConfiguration id="IC1"/>
  </instrumentConfigurationList>
  <dataProcessingList count="1">
    <dataProcessing id="export">
      <processingMethod order="1" softwareRef="ionmorph">
        <cvParam cvRef="MS" accession="MS:1000544" name="Conversion to mzML" value=""/>
      </processingMethod>
    </dataProcessing>
  </dataProcessingList>
  <run id="run1" defaultInstrumentConfigurationRef="IC1">
    <spectrumList count="{count}" defaultDataProcessingRef="export">
"#,
        uuid_str = uuid::Uuid::from_bytes(*uuid).hyphenated(),
        version = env!("CARGO_PKG_VERSION"),
        count = entries.len(),
    );
    for (i, e) in entries.iter().enumerate() {
        let _ = write!(
            x,
            r#"      <spectrum id="Scan={scan}" defaultArrayLength="0" index="{i}">
        <cvParam cvRef="MS" accession="MS:1000511" name="ms level" value="1"/>
        <scanList count="1">
          <scan instrumentConfigurationRef="IC1">
            <cvParam cvRef="IMS" accession="{POSITION_X}" name="position x" value="{px}"/>
            <cvParam cvRef="IMS" accession="{POSITION_Y}" name="position y" value="{py}"/>
          </scan>
        </scanList>
        <binaryDataArrayList count="2">
"#,
            scan = i + 1,
            px = e.x + 1,
            py = e.y + 1,
        );
        for (group, a) in [("mzArray", &e.mz), ("intensityArray", &e.intensity)] {
            let _ = write!(
                x,
                r#"          <binaryDataArray encodedLength="0">
            <referenceableParamGroupRef ref="{group}"/>
            <cvParam cvRef="IMS" accession="{EXT_ARRAY_LENGTH}" name="external array length" value="{len}"/>
            <cvParam cvRef="IMS" accession="{EXT_ENCODED_LENGTH}" name="external encoded length" value="{enc}"/>
            <cvParam cvRef="IMS" accession="{EXT_OFFSET}" name="external offset" value="{off}"/>
            <binary/>
          </binaryDataArray>
"#,
                len = a.length,
                enc = a.byte_len(),
                off = a.offset,
            );
        }
        x.push_str("        </binaryDataArrayList>\n      </spectrum>\n");
    }
    x.push_str("    </spectrumList>\n  </run>\n</mzML>\n");
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_spectra(w: u32, h: u32, mzs: &[f64]) -> Vec<Spectrum> {
        let mut out = Vec::new();
        for y in 0..h {
            for x in 0..w {
                let ints = mzs.iter().enumerate().map(|(k, _)| (x + 10 * y + k as u32) as f64).collect();
                out.push(Spectrum::new(x, y, mzs.to_vec(), ints));
            }
        }
        out
    }

    #[test]
    fn continuous_fixture_opens() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.imzML");
        let spectra = grid_spectra(3, 2, &[100.0, 200.0, 300.0]);
        write_dataset(&spectra, Mode::Continuous, &path).unwrap();
        let h = DatasetHandle::open(&path).unwrap();
        assert_eq!(h.spectrum_count(), 6);
        assert_eq!(h.mode(), Mode::Continuous);
        assert_eq!((h.width(), h.height()), (3, 2));
        assert_eq!(h.mz_axis(), Some(&[100.0, 200.0, 300.0][..]));
        for (i, s) in spectra.iter().enumerate() {
            assert_eq!(&h.read_spectrum(i).unwrap(), s);
            assert_eq!(h.spectrum_at(s.x, s.y), Some(i));
        }
        assert_eq!(h.dataset_id(), "d");
    }

    #[test]
    fn fixture_spectrum_identity() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("one.imzML");
        let s = Spectrum::new(0, 0, vec![100.0, 200.0, 300.0], vec![1.0, 0.0, 5.0]);
        write_dataset(std::slice::from_ref(&s), Mode::Processed, &path).unwrap();
        let h = DatasetHandle::open(&path).unwrap();
        assert_eq!(h.mode(), Mode::Processed);
        assert!(h.mz_axis().is_none());
        assert_eq!(h.read_spectrum(0).unwrap(), s);
        assert!(matches!(
            h.read_spectrum(1),
            Err(MsiError::IndexOutOfRange { index: 1, count: 1 })
        ));
    }

    #[test]
    fn flipped_uuid_byte_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.imzML");
        write_dataset(&grid_spectra(2, 2, &[1.0, 2.0]), Mode::Continuous, &path).unwrap();
        let ibd = path.with_extension("ibd");
        let mut bytes = std::fs::read(&ibd).unwrap();
        bytes[3] ^= 0xff;
        std::fs::write(&ibd, bytes).unwrap();
        assert!(matches!(DatasetHandle::open(&path), Err(MsiError::UuidMismatch { .. })));
    }

    #[test]
    fn missing_binary() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.imzML");
        write_dataset(&grid_spectra(1, 1, &[1.0]), Mode::Continuous, &path).unwrap();
        std::fs::remove_file(path.with_extension("ibd")).unwrap();
        assert!(matches!(DatasetHandle::open(&path), Err(MsiError::MissingBinary(_))));
    }

    #[test]
    fn truncated_binary_fails_on_read() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.imzML");
        let spectra = grid_spectra(2, 1, &[1.0, 2.0, 3.0, 4.0]);
        write_dataset(&spectra, Mode::Processed, &path).unwrap();
        let ibd = path.with_extension("ibd");
        let len = std::fs::metadata(&ibd).unwrap().len();
        let f = std::fs::OpenOptions::new().write(true).open(&ibd).unwrap();
        f.set_len(len - 12).unwrap();
        let h = DatasetHandle::open(&path).unwrap();
        assert!(h.read_spectrum(0).is_ok());
        assert!(matches!(h.read_spectrum(1), Err(MsiError::TruncatedBinary { .. })));
    }

    #[test]
    fn inconsistent_axis() {
        let dir = tempfile::tempdir().unwrap();
        let spectra = vec![
            Spectrum::new(0, 0, vec![1.0, 2.0], vec![0.0, 1.0]),
            Spectrum::new(1, 0, vec![1.0, 2.5], vec![0.0, 1.0]),
        ];
        let err = write_dataset(&spectra, Mode::Continuous, dir.path().join("x.imzML")).unwrap_err();
        assert!(matches!(err, MsiError::InconsistentAxis(_)));
    }

    #[test]
    fn f32_intensities_round_to_declared_width() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.imzML");
        let s = Spectrum::new(0, 0, vec![100.0, 100.1], vec![0.1, 3.0]);
        let opts = WriteOptions {
            intensity_precision: Precision::F32,
            ..Default::default()
        };
        write_dataset_with(std::slice::from_ref(&s), Mode::Continuous, &path, &opts).unwrap();
        let back = DatasetHandle::open(&path).unwrap().read_spectrum(0).unwrap();
        assert_eq!(back.mzs, s.mzs);
        assert_eq!(back.intensities, vec![0.1f32 as f64, 3.0]);
    }

    #[test]
    fn one_based_positions_in_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.imzML");
        let s = Spectrum::new(2, 4, vec![1.0], vec![1.0]);
        write_dataset(std::slice::from_ref(&s), Mode::Processed, &path).unwrap();
        let xml = std::fs::read_to_string(&path).unwrap();
        assert!(xml.contains(r#"name="position x" value="3""#));
        assert!(xml.contains(r#"name="position y" value="5""#));
        let h = DatasetHandle::open(&path).unwrap();
        assert_eq!((h.width(), h.height()), (3, 5));
        assert_eq!(h.spectrum_at(2, 4), Some(0));
        assert_eq!(h.spectrum_at(0, 0), None);
    }

    fn rewrite_xml(path: &Path, from: &str, to: &str) {
        let xml = std::fs::read_to_string(path).unwrap();
        assert!(xml.contains(from));
        std::fs::write(path, xml.replacen(from, to, 2)).unwrap();
    }

    #[test]
    fn rejects_compressed_and_integer_arrays() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.imzML");
        write_dataset(&grid_spectra(1, 1, &[1.0]), Mode::Continuous, &path).unwrap();
        rewrite_xml(&path, r#"accession="MS:1000576" name="no compression""#, r#"accession="MS:1000574" name="zlib compression""#);
        assert!(matches!(DatasetHandle::open(&path), Err(MsiError::UnsupportedEncoding(_))));

        write_dataset(&grid_spectra(1, 1, &[1.0]), Mode::Continuous, &path).unwrap();
        rewrite_xml(&path, r#"accession="MS:1000523" name="64-bit float""#, r#"accession="MS:1000519" name="32-bit integer""#);
        assert!(matches!(DatasetHandle::open(&path), Err(MsiError::UnsupportedEncoding(_))));
    }

    #[test]
    fn malformed_xml() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.imzML");
        write_dataset(&grid_spectra(1, 1, &[1.0]), Mode::Continuous, &path).unwrap();
        let xml = std::fs::read_to_string(&path).unwrap();
        std::fs::write(&path, &xml[..xml.len() / 2]).unwrap();
        assert!(matches!(DatasetHandle::open(&path), Err(MsiError::MalformedXml(_))));
        std::fs::write(&path, "not xml at all <<<").unwrap();
        assert!(matches!(DatasetHandle::open(&path), Err(MsiError::MalformedXml(_))));
    }

    #[test]
    fn uuid_parsing_accepts_common_spellings() {
        let plain = parse_uuid("0123456789abcdef0123456789ABCDEF").unwrap();
        let braced = parse_uuid("{01234567-89ab-cdef-0123-456789abcdef}").unwrap();
        assert_eq!(plain, braced);
        assert!(parse_uuid("xyz").is_err());
    }
}
