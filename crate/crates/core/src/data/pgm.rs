//! Binary portable graymap (P5) slices.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

use super::volume::{Volume, VoxelType};

/// One decoded P5 image. Samples wider than 8 bits are big-endian on disk.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Pgm {
    pub width: usize,
    pub height: usize,
    pub maxval: u16,
    pub samples: Vec<u16>,
}

impl Pgm {
    pub fn into_volume(self) -> Result<Volume> {
        if self.maxval <= 255 {
            let v: Vec<u8> = self.samples.iter().map(|&s| s as u8).collect();
            Volume::from_u8(1, self.height, self.width, &v)
        } else {
            Volume::from_u16(1, self.height, self.width, &self.samples)
        }
    }
}

fn header_err(msg: impl Into<String>) -> Error {
    Error::CorruptHeader(format!("pgm: {}", msg.into()))
}

pub fn decode_pgm(bytes: &[u8]) -> Result<Pgm> {
    if !bytes.starts_with(b"P5") {
        return Err(header_err("missing P5 magic"));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in &mut fields {
        // whitespace and comments between header tokens
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| header_err("expected a decimal header field"))?;
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(header_err("missing whitespace after maxval"));
    }
    pos += 1;

    let [width, height, maxval] = fields;
    if width == 0 || height == 0 || maxval == 0 || maxval > 65535 {
        return Err(header_err(format!(
            "bad header {width}x{height} maxval {maxval}"
        )));
    }
    let wide = maxval > 255;
    let n = width * height;
    let raster = &bytes[pos..];
    let expected = if wide { 2 * n } else { n };
    if raster.len() != expected {
        return Err(header_err(format!(
            "raster is {} bytes, expected {expected}",
            raster.len()
        )));
    }
    let samples: Vec<u16> = if wide {
        raster
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]))
            .collect()
    } else {
        raster.iter().map(|&b| u16::from(b)).collect()
    };
    if samples.iter().any(|&s| usize::from(s) > maxval) {
        return Err(header_err("sample exceeds maxval"));
    }
    Ok(Pgm {
        width,
        height,
        maxval: maxval as u16,
        samples,
    })
}

/// Canonical encoding: `P5\n<w> <h>\n<maxval>\n` then the raster.
pub fn encode_pgm(img: &Pgm) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n{}\n", img.width, img.height, img.maxval).into_bytes();
    if img.maxval > 255 {
        for &s in &img.samples {
            out.extend_from_slice(&s.to_be_bytes());
        }
    } else {
        out.extend(img.samples.iter().map(|&s| s as u8));
    }
    out
}

fn slice_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let is_pgm = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("pgm"));
        if path.is_file() && is_pgm {
            files.push(path);
        }
    }
    files.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
    Ok(files)
}

/// Reads every `*.pgm` in `dir`, in lexicographic file-name order, as one
/// slice each. All slices must share one size.
pub fn load_pgm_stack(dir: impl AsRef<Path>) -> Result<Volume> {
    let dir = dir.as_ref();
    let files = slice_files(dir)?;
    if files.is_empty() {
        return Err(Error::UnknownFormat {
            path: dir.to_path_buf(),
        });
    }
    let mut slices = Vec::with_capacity(files.len());
    for path in &files {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let img = decode_pgm(&bytes).map_err(|e| match e {
            Error::CorruptHeader(msg) => Error::CorruptHeader(format!("{}: {msg}", path.display())),
            other => other,
        })?;
        if let Some(first) = slices.first() {
            let first: &Pgm = first;
            if (img.height, img.width) != (first.height, first.width) {
                return Err(Error::InconsistentSlice {
                    path: path.clone(),
                    expected_h: first.height,
                    expected_w: first.width,
                    found_h: img.height,
                    found_w: img.width,
                });
            }
        }
        slices.push(img);
    }
    let (h, w) = (slices[0].height, slices[0].width);
    let wide = slices.iter().any(|s| s.maxval > 255);
    let samples: Vec<u16> = slices.into_iter().flat_map(|s| s.samples).collect();
    if wide {
        Volume::from_u16(files.len(), h, w, &samples)
    } else {
        let bytes: Vec<u8> = samples.iter().map(|&s| s as u8).collect();
        Volume::from_u8(files.len(), h, w, &bytes)
    }
}

/// Writes one `slice_NNNN.pgm` per slice. Integer volumes keep their values
/// (maxval 255 or 65535); `f32` volumes are taken as `[0,1]` intensities and
/// quantized to 8 bits.
pub fn save_pgm_stack(v: &Volume, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let maxval: u16 = match v.dtype() {
        VoxelType::U16 => 65535,
        _ => 255,
    };
    for z in 0..v.depth() {
        let samples = v
            .slice(z)
            .iter()
            .map(|&x| match v.dtype() {
                VoxelType::F32 => (x.clamp(0.0, 1.0) * 255.0).round() as u16,
                _ => x.round().clamp(0.0, f32::from(maxval)) as u16,
            })
            .collect();
        let img = Pgm {
            width: v.width(),
            height: v.height(),
            maxval,
            samples,
        };
        let path = dir.join(format!("slice_{z:04}.pgm"));
        fs::write(&path, encode_pgm(&img)).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}
