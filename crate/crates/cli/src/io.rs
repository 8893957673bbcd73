//! On-disk formats: binary PGM images for frames and a raw little-endian
//! container for tensors.
//!
//! PGM (P5) keeps the image pipeline bit-exact and dependency-free: pixel
//! values in [0, 1] quantize to the stored bit depth with round-half-up and
//! load back as `value / maxval`. The tensor container is `BTRT` + order +
//! extents + f64 payload, all little-endian, and roundtrips bit-exactly.

use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use istd_core::patch::{Frame, PatchError};
use istd_core::tensor::{DenseTensor, TensorError};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {msg}")]
    Format { path: PathBuf, msg: String },
    #[error(transparent)]
    Frame(#[from] PatchError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn format_err(path: &Path, msg: impl Into<String>) -> IoError {
    IoError::Format {
        path: path.to_path_buf(),
        msg: msg.into(),
    }
}

/// Sample width of a stored PGM.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BitDepth {
    Eight,
    #[default]
    Sixteen,
}

impl BitDepth {
    fn maxval(self) -> u32 {
        match self {
            BitDepth::Eight => 255,
            BitDepth::Sixteen => 65535,
        }
    }
}

/// Writes one frame as binary PGM (P5). Samples above 255 use the two-byte
/// big-endian encoding the format prescribes. Pixels must lie in [0, 1].
pub fn write_pgm(path: &Path, frame: &Frame, depth: BitDepth) -> Result<(), IoError> {
    let maxval = depth.maxval();
    let (h, w) = (frame.height(), frame.width());
    let mut bytes = format!("P5\n{w} {h}\n{maxval}\n").into_bytes();
    for (i, &v) in frame.pixels().iter().enumerate() {
        if !(0.0..=1.0).contains(&v) {
            return Err(format_err(
                path,
                format!("pixel {i} = {v} outside [0, 1]; clamp before saving"),
            ));
        }
        // round-half-up onto the sample grid
        let q = ((v * maxval as f64) + 0.5).floor() as u32;
        let q = q.min(maxval) as u16;
        match depth {
            BitDepth::Eight => bytes.push(q as u8),
            BitDepth::Sixteen => bytes.extend_from_slice(&q.to_be_bytes()),
        }
    }
    fs::write(path, bytes).map_err(io_err(path))
}

/// Reads a binary PGM (P5), 8-bit or 16-bit, into a [0, 1] frame.
pub fn read_pgm(path: &Path) -> Result<Frame, IoError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    let mut pos = 0;
    let magic = header_token(&bytes, &mut pos)
        .ok_or_else(|| format_err(path, "missing PGM header"))?;
    if magic != "P5" {
        return Err(format_err(path, format!("expected magic P5, got {magic:?}")));
    }
    let mut field = |name: &str| -> Result<u32, IoError> {
        header_token(&bytes, &mut pos)
            .ok_or_else(|| format_err(path, format!("missing {name}")))?
            .parse::<u32>()
            .map_err(|_| format_err(path, format!("malformed {name}")))
    };
    let width = field("width")? as usize;
    let height = field("height")? as usize;
    let maxval = field("maxval")?;
    if width == 0 || height == 0 {
        return Err(format_err(path, "zero image dimension"));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(format_err(path, format!("maxval {maxval} outside [1, 65535]")));
    }
    // exactly one whitespace byte separates the header from the raster
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(format_err(path, "missing raster separator"));
    }
    pos += 1;
    let wide = maxval > 255;
    let sample_len = if wide { 2 } else { 1 };
    let expected = height * width * sample_len;
    if bytes.len() - pos != expected {
        return Err(format_err(
            path,
            format!("raster is {} bytes, expected {expected}", bytes.len() - pos),
        ));
    }
    let raster = &bytes[pos..];
    let pixels = (0..height * width)
        .map(|i| {
            let s = if wide {
                u16::from_be_bytes([raster[2 * i], raster[2 * i + 1]]) as u32
            } else {
                raster[i] as u32
            };
            s as f64 / maxval as f64
        })
        .collect();
    // samples can exceed maxval in malformed files; Frame::new rejects them
    Ok(Frame::new(height, width, pixels)?)
}

/// Next whitespace-delimited header token, skipping `#` comments.
fn header_token(bytes: &[u8], pos: &mut usize) -> Option<String> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    (*pos > start).then(|| String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
}

/// Writes `frames` into `dir` as zero-padded `0000.pgm`, `0001.pgm`, …
/// Returns the created paths in order.
pub fn save_frames(dir: &Path, frames: &[Frame], depth: BitDepth) -> Result<Vec<PathBuf>, IoError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut paths = Vec::with_capacity(frames.len());
    for (i, f) in frames.iter().enumerate() {
        let path = dir.join(format!("{i:04}.pgm"));
        write_pgm(&path, f, depth)?;
        paths.push(path);
    }
    Ok(paths)
}

/// Loads every `*.pgm` in `dir`, lexicographic file name = temporal order.
pub fn load_frames(dir: &Path) -> Result<Vec<Frame>, IoError> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .collect::<Result<Vec<_>, _>>()
        .map_err(io_err(dir))?
        .into_iter()
        .map(|e| e.path())
        .filter(|p| {
            p.extension()
                .is_some_and(|e| e.eq_ignore_ascii_case("pgm"))
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(format_err(dir, "no .pgm files found"));
    }
    let mut frames = Vec::with_capacity(paths.len());
    for p in &paths {
        let f = read_pgm(p)?;
        if let Some(first) = frames.first() {
            let first: &Frame = first;
            if f.height() != first.height() || f.width() != first.width() {
                return Err(format_err(
                    p,
                    format!(
                        "frame is {}x{}, sequence started at {}x{}",
                        f.height(),
                        f.width(),
                        first.height(),
                        first.width()
                    ),
                ));
            }
        }
        frames.push(f);
    }
    Ok(frames)
}

const TENSOR_MAGIC: &[u8; 4] = b"BTRT";

/// Raw tensor container: magic, u32 LE order, u64 LE extents, f64 LE values
/// in storage order.
pub fn write_tensor(path: &Path, t: &DenseTensor) -> Result<(), IoError> {
    let mut bytes = Vec::with_capacity(8 + 8 * t.order() + 8 * t.numel());
    bytes.extend_from_slice(TENSOR_MAGIC);
    bytes.extend_from_slice(&(t.order() as u32).to_le_bytes());
    for &e in t.shape() {
        bytes.extend_from_slice(&(e as u64).to_le_bytes());
    }
    for &v in t.data() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes).map_err(io_err(path))
}

pub fn read_tensor(path: &Path) -> Result<DenseTensor, IoError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    if bytes.len() < 8 || &bytes[..4] != TENSOR_MAGIC {
        return Err(format_err(path, "bad magic, not a tensor file"));
    }
    let order = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let header = 8 + 8 * order;
    if bytes.len() < header {
        return Err(format_err(path, "truncated extent list"));
    }
    let mut shape = Vec::with_capacity(order);
    let mut numel: usize = 1;
    for k in 0..order {
        let off = 8 + 8 * k;
        let e = u64::from_le_bytes(bytes[off..off + 8].try_into().unwrap());
        let e = usize::try_from(e)
            .map_err(|_| format_err(path, format!("extent {e} does not fit in memory")))?;
        numel = numel
            .checked_mul(e)
            .ok_or_else(|| format_err(path, "extent product overflows"))?;
        shape.push(e);
    }
    let expected = header + 8 * numel;
    if bytes.len() != expected {
        return Err(format_err(
            path,
            format!("payload is {} bytes, expected {expected}", bytes.len()),
        ));
    }
    let data = (0..numel)
        .map(|i| {
            let off = header + 8 * i;
            f64::from_le_bytes(bytes[off..off + 8].try_into().unwrap())
        })
        .collect();
    Ok(DenseTensor::new(shape, data)?)
}
