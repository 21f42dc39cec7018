//! The `VXV1` voxel file format.
//!
//! Layout: ASCII magic `VXV1`, little-endian `u32` resolution, `u32` channel
//! count (always 4), then `resolution³ × 4` little-endian `f32` values,
//! channel-planar: the whole R plane first (x fastest, then y, then z),
//! then G, B and Q.

use std::path::Path;

use super::{check_resolution, VoxelVolume};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"VXV1";
const CHANNELS: u32 = 4;
const HEADER_LEN: usize = 12;

pub fn write_volume_bytes(volume: &VoxelVolume) -> Vec<u8> {
    let n3 = volume.resolution().pow(3);
    let mut out = Vec::with_capacity(HEADER_LEN + n3 * 16);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(volume.resolution() as u32).to_le_bytes());
    out.extend_from_slice(&CHANNELS.to_le_bytes());
    for channel in 0..4 {
        for v in volume.voxels() {
            out.extend_from_slice(&(v[channel] as f32).to_le_bytes());
        }
    }
    out
}

pub fn read_volume_bytes(bytes: &[u8]) -> Result<VoxelVolume> {
    if bytes.len() < MAGIC.len() || &bytes[..4] != MAGIC {
        return Err(Error::BadMagic);
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::TruncatedFile {
            expected: HEADER_LEN,
            found: bytes.len(),
        });
    }
    let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
    let resolution = word(4) as usize;
    let channels = word(8);
    if channels != CHANNELS {
        return Err(Error::ValueOutOfRange(format!(
            "channel count {channels}, expected {CHANNELS}"
        )));
    }
    check_resolution(resolution).map_err(|e| Error::ValueOutOfRange(e.to_string()))?;
    let n3 = resolution.pow(3);
    let expected = HEADER_LEN + n3 * 4 * 4;
    if bytes.len() < expected {
        return Err(Error::TruncatedFile {
            expected,
            found: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(Error::ValueOutOfRange(format!(
            "{} trailing bytes after payload",
            bytes.len() - expected
        )));
    }
    let payload = &bytes[HEADER_LEN..];
    let mut voxels = vec![[0.0f64; 4]; n3];
    for channel in 0..4 {
        let plane = &payload[channel * n3 * 4..(channel + 1) * n3 * 4];
        for (voxel, chunk) in voxels.iter_mut().zip(plane.chunks_exact(4)) {
            voxel[channel] = f32::from_le_bytes(chunk.try_into().unwrap()) as f64;
        }
    }
    VoxelVolume::from_voxels(resolution, voxels)
}

pub fn write_volume(volume: &VoxelVolume, path: &Path) -> Result<()> {
    std::fs::write(path, write_volume_bytes(volume)).map_err(|e| Error::io(path, e))
}

pub fn read_volume(path: &Path) -> Result<VoxelVolume> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    read_volume_bytes(&bytes)
}
