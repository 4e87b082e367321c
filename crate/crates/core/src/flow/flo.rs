//! Middlebury `.flo` files: little-endian `f32` magic 202021.25, `i32` width,
//! `i32` height, then interleaved `f32` (u, v) displacements row by row.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{DomainRect, WarpField};

pub const FLO_MAGIC: f32 = 202021.25;

/// Writes the displacement of `w` (relative to its source pixels).
pub fn write_flo<W: Write>(mut out: W, w: &WarpField) -> Result<()> {
    let src = w.src();
    out.write_all(&FLO_MAGIC.to_le_bytes())?;
    out.write_all(&(src.width as i32).to_le_bytes())?;
    out.write_all(&(src.height as i32).to_le_bytes())?;
    for d in w.displacement() {
        out.write_all(&(d[0] as f32).to_le_bytes())?;
        out.write_all(&(d[1] as f32).to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a displacement field and places it on `src` / `dst` rectangles at
/// the origin when `geometry` is `None`.
pub fn read_flo<R: Read>(mut input: R, geometry: Option<(DomainRect, DomainRect)>) -> Result<WarpField> {
    let mut word = [0u8; 4];
    input.read_exact(&mut word)?;
    let magic = f32::from_le_bytes(word);
    if magic != FLO_MAGIC {
        return Err(Error::Argument(format!("bad .flo magic {magic}")));
    }
    input.read_exact(&mut word)?;
    let width = i32::from_le_bytes(word);
    input.read_exact(&mut word)?;
    let height = i32::from_le_bytes(word);
    if width <= 0 || height <= 0 || (width as i64) * (height as i64) > (1 << 28) {
        return Err(Error::Argument(format!(".flo dimensions {width}x{height}")));
    }
    let (width, height) = (width as usize, height as usize);
    let mut buf = vec![0u8; width * height * 8];
    input.read_exact(&mut buf)?;
    let disp: Vec<[f64; 2]> = buf
        .chunks_exact(8)
        .map(|c| {
            [
                f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64,
                f32::from_le_bytes([c[4], c[5], c[6], c[7]]) as f64,
            ]
        })
        .collect();
    let (src, dst) = geometry.unwrap_or_else(|| {
        let r = DomainRect::new([0, 0], width, height);
        (r, r)
    });
    if src.width != width || src.height != height {
        return Err(Error::Geometry(format!(
            ".flo is {width}x{height}, expected {}x{}",
            src.width, src.height
        )));
    }
    WarpField::from_displacement(src, dst, &disp)
}

pub fn write_flo_file(path: impl AsRef<Path>, w: &WarpField) -> Result<()> {
    write_flo(BufWriter::new(File::create(path)?), w)
}

pub fn read_flo_file(path: impl AsRef<Path>, geometry: Option<(DomainRect, DomainRect)>) -> Result<WarpField> {
    read_flo(BufReader::new(File::open(path)?), geometry)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let r = DomainRect::new([0, 0], 3, 2);
        let w = WarpField::translation(r, r, [0.5, -1.0]);
        let mut bytes = Vec::new();
        write_flo(&mut bytes, &w).unwrap();
        assert_eq!(bytes.len(), 12 + 3 * 2 * 8);
        assert_eq!(&bytes[0..4], b"PIEH");
        assert_eq!(i32::from_le_bytes(bytes[4..8].try_into().unwrap()), 3);
        assert_eq!(i32::from_le_bytes(bytes[8..12].try_into().unwrap()), 2);
        assert_eq!(f32::from_le_bytes(bytes[12..16].try_into().unwrap()), 0.5);
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let mut bytes = vec![0u8; 20];
        assert!(read_flo(&bytes[..], None).is_err());
        bytes[0..4].copy_from_slice(&FLO_MAGIC.to_le_bytes());
        bytes[4..8].copy_from_slice(&4i32.to_le_bytes());
        bytes[8..12].copy_from_slice(&4i32.to_le_bytes());
        assert!(read_flo(&bytes[..], None).is_err());
    }

    proptest! {
        #[test]
        fn round_trip_is_f32_exact(w in 1usize..6, h in 1usize..6,
                                   vals in proptest::collection::vec(-50.0f32..50.0, 72)) {
            let r = DomainRect::new([0, 0], w, h);
            let disp: Vec<[f64; 2]> = (0..w * h).map(|i| [vals[2 * i] as f64, vals[2 * i + 1] as f64]).collect();
            let field = WarpField::from_displacement(r, r, &disp).unwrap();
            let mut bytes = Vec::new();
            write_flo(&mut bytes, &field).unwrap();
            let back = read_flo(&bytes[..], None).unwrap();
            prop_assert_eq!(back.displacement(), disp);
        }
    }
}
