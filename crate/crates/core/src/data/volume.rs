use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

use super::pgm;

pub const VOL_MAGIC: &[u8; 4] = b"CTV1";
pub const VOL_VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 3 * 4 + 1;

/// On-disk voxel encoding.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VoxelType {
    U8 = 0,
    U16 = 1,
    F32 = 2,
}

impl VoxelType {
    fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(Self::U8),
            1 => Ok(Self::U16),
            2 => Ok(Self::F32),
            t => Err(Error::CorruptHeader(format!("unknown dtype tag {t}"))),
        }
    }

    fn size(self) -> usize {
        match self {
            Self::U8 => 1,
            Self::U16 => 2,
            Self::F32 => 4,
        }
    }
}

/// A stack of `depth` grayscale slices, slice-major.
///
/// Voxels are held as `f32` whatever the stored encoding; integer encodings
/// keep their raw integer values so a load/save round trip is exact.
#[derive(Clone, Debug, PartialEq)]
pub struct Volume {
    depth: usize,
    height: usize,
    width: usize,
    voxels: Vec<f32>,
    dtype: VoxelType,
    intensity_range: (f32, f32),
}

impl Volume {
    fn build(
        depth: usize,
        height: usize,
        width: usize,
        voxels: Vec<f32>,
        dtype: VoxelType,
    ) -> Result<Self> {
        if depth == 0 || height == 0 || width == 0 {
            return Err(Error::InvalidArgument(format!(
                "volume extents must be positive, got {depth}x{height}x{width}"
            )));
        }
        if voxels.len() != depth * height * width {
            return Err(Error::Shape(format!(
                "{depth}x{height}x{width} volume needs {} voxels, got {}",
                depth * height * width,
                voxels.len()
            )));
        }
        if voxels.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { op: "volume" });
        }
        let range = voxels
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        Ok(Self {
            depth,
            height,
            width,
            voxels,
            dtype,
            intensity_range: range,
        })
    }

    pub fn from_f32(depth: usize, height: usize, width: usize, voxels: Vec<f32>) -> Result<Self> {
        Self::build(depth, height, width, voxels, VoxelType::F32)
    }

    pub fn from_u8(depth: usize, height: usize, width: usize, voxels: &[u8]) -> Result<Self> {
        let v = voxels.iter().map(|&x| f32::from(x)).collect();
        Self::build(depth, height, width, v, VoxelType::U8)
    }

    pub fn from_u16(depth: usize, height: usize, width: usize, voxels: &[u16]) -> Result<Self> {
        let v = voxels.iter().map(|&x| f32::from(x)).collect();
        Self::build(depth, height, width, v, VoxelType::U16)
    }

    /// Number of slices.
    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn voxels(&self) -> &[f32] {
        &self.voxels
    }

    pub fn dtype(&self) -> VoxelType {
        self.dtype
    }

    /// Smallest and largest stored voxel value.
    pub fn intensity_range(&self) -> (f32, f32) {
        self.intensity_range
    }

    pub fn slice(&self, z: usize) -> &[f32] {
        let n = self.height * self.width;
        &self.voxels[z * n..(z + 1) * n]
    }

    pub fn at(&self, z: usize, y: usize, x: usize) -> f32 {
        self.voxels[(z * self.height + y) * self.width + x]
    }
}

/// Serializes to the `.vol` container:
/// `"CTV1" | u16 version | u32 depth | u32 height | u32 width | u8 dtype |
/// payload | u32 CRC32`, all little-endian, CRC over every preceding byte.
pub fn encode_vol(v: &Volume) -> Vec<u8> {
    let mut buf = Vec::with_capacity(HEADER_LEN + v.voxels.len() * v.dtype.size() + 4);
    buf.extend_from_slice(VOL_MAGIC);
    buf.extend_from_slice(&VOL_VERSION.to_le_bytes());
    for extent in [v.depth, v.height, v.width] {
        buf.extend_from_slice(&(extent as u32).to_le_bytes());
    }
    buf.push(v.dtype as u8);
    match v.dtype {
        VoxelType::U8 => buf.extend(v.voxels.iter().map(|&x| x.round().clamp(0.0, 255.0) as u8)),
        VoxelType::U16 => {
            for &x in &v.voxels {
                buf.extend_from_slice(&(x.round().clamp(0.0, 65535.0) as u16).to_le_bytes());
            }
        }
        VoxelType::F32 => {
            for &x in &v.voxels {
                buf.extend_from_slice(&x.to_le_bytes());
            }
        }
    }
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    buf
}

fn le_u32(b: &[u8]) -> u32 {
    u32::from_le_bytes(b.try_into().expect("4 bytes"))
}

pub fn decode_vol(bytes: &[u8]) -> Result<Volume> {
    if bytes.len() < HEADER_LEN + 4 {
        return Err(Error::CorruptHeader(format!(
            "{} bytes is too short for a volume",
            bytes.len()
        )));
    }
    if &bytes[..4] != VOL_MAGIC {
        return Err(Error::CorruptHeader("missing CTV1 magic".into()));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = le_u32(tail);
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(Error::Checksum { stored, computed });
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VOL_VERSION {
        return Err(Error::CorruptHeader(format!(
            "unsupported volume version {version}"
        )));
    }
    let depth = le_u32(&bytes[6..10]) as usize;
    let height = le_u32(&bytes[10..14]) as usize;
    let width = le_u32(&bytes[14..18]) as usize;
    let dtype = VoxelType::from_tag(bytes[18])?;
    let payload = &body[HEADER_LEN..];
    let count = depth
        .checked_mul(height)
        .and_then(|n| n.checked_mul(width))
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::CorruptHeader(format!("bad extents {depth}x{height}x{width}")))?;
    if payload.len() != count * dtype.size() {
        return Err(Error::CorruptHeader(format!(
            "payload is {} bytes, header implies {}",
            payload.len(),
            count * dtype.size()
        )));
    }
    match dtype {
        VoxelType::U8 => Volume::from_u8(depth, height, width, payload),
        VoxelType::U16 => {
            let v: Vec<u16> = payload
                .chunks_exact(2)
                .map(|c| u16::from_le_bytes([c[0], c[1]]))
                .collect();
            Volume::from_u16(depth, height, width, &v)
        }
        VoxelType::F32 => {
            let v = payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            Volume::from_f32(depth, height, width, v)
        }
    }
}

pub fn save_volume(v: &Volume, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_vol(v)).map_err(|e| Error::io(path, e))
}

/// Loads a `.vol` file, a single binary PGM, or a directory of PGM slices
/// ordered by file name.
pub fn load_volume(path: impl AsRef<Path>) -> Result<Volume> {
    let path = path.as_ref();
    if path.is_dir() {
        return pgm::load_pgm_stack(path);
    }
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(VOL_MAGIC) {
        decode_vol(&bytes)
    } else if bytes.starts_with(b"P5") {
        let img = pgm::decode_pgm(&bytes)?;
        img.into_volume()
    } else {
        Err(Error::UnknownFormat {
            path: path.to_path_buf(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_all_dtypes() {
        let f = Volume::from_f32(2, 2, 3, (0..12).map(|i| i as f32 * 0.1 - 0.3).collect()).unwrap();
        let b = Volume::from_u8(1, 2, 2, &[0, 7, 200, 255]).unwrap();
        let w = Volume::from_u16(3, 1, 1, &[0, 4095, 65535]).unwrap();
        for v in [f, b, w] {
            let bytes = encode_vol(&v);
            assert_eq!(&bytes[..4], b"CTV1");
            let back = decode_vol(&bytes).unwrap();
            assert_eq!(back, v);
            assert_eq!(encode_vol(&back), bytes);
        }
    }

    #[test]
    fn corrupted_payload_fails_checksum() {
        let v = Volume::from_u8(1, 2, 2, &[1, 2, 3, 4]).unwrap();
        let mut bytes = encode_vol(&v);
        bytes[HEADER_LEN] ^= 0xff;
        assert!(matches!(decode_vol(&bytes), Err(Error::Checksum { .. })));
    }

    #[test]
    fn truncated_file_is_corrupt_header() {
        assert!(matches!(
            decode_vol(b"CTV1\x01\x00"),
            Err(Error::CorruptHeader(_))
        ));
    }

    #[test]
    fn intensity_range_tracks_extremes() {
        let v = Volume::from_f32(1, 1, 3, vec![0.5, -2.0, 3.0]).unwrap();
        assert_eq!(v.intensity_range(), (-2.0, 3.0));
    }

    #[test]
    fn rejects_empty_extent() {
        assert!(Volume::from_f32(0, 1, 1, vec![]).is_err());
    }
}
