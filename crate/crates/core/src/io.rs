//! PNG frames and masks on disk.

use std::path::{Path, PathBuf};

use image::{DynamicImage, GrayImage, ImageBuffer, Luma, Rgb};

use crate::error::{Error, Result};
use crate::grid::{Frame, Mask};

/// Reads an 8- or 16-bit PNG as a grey (1 channel) or RGB (3 channel) frame;
/// alpha is dropped.
pub fn read_frame(path: impl AsRef<Path>) -> Result<Frame> {
    let img = image::open(path.as_ref())?;
    let grey = !img.color().has_color();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data: Vec<f64> = if grey {
        img.to_luma16().into_raw().into_iter().map(|v| v as f64 / 65535.0).collect()
    } else {
        img.to_rgb16().into_raw().into_iter().map(|v| v as f64 / 65535.0).collect()
    };
    Frame::new(w, h, if grey { 1 } else { 3 }, data)
}

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Writes an 8-bit PNG; 1 channel as grey, 3 as RGB.
pub fn write_frame(path: impl AsRef<Path>, frame: &Frame) -> Result<()> {
    let (w, h) = (frame.width() as u32, frame.height() as u32);
    let bytes: Vec<u8> = frame.data().iter().map(|v| to_u8(*v)).collect();
    let img = match frame.channels() {
        1 => DynamicImage::ImageLuma8(ImageBuffer::<Luma<u8>, _>::from_raw(w, h, bytes).expect("size")),
        3 => DynamicImage::ImageRgb8(ImageBuffer::<Rgb<u8>, _>::from_raw(w, h, bytes).expect("size")),
        k => return Err(Error::Argument(format!("cannot write a {k}-channel frame as PNG"))),
    };
    img.save_with_format(path.as_ref(), image::ImageFormat::Png)?;
    Ok(())
}

/// Reads a mask PNG: any nonzero pixel (in any channel) is masked.
pub fn read_mask(path: impl AsRef<Path>) -> Result<Mask> {
    let img = image::open(path.as_ref())?.to_rgba16();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data = img.pixels().map(|p| p.0[..3].iter().any(|v| *v != 0)).collect();
    Mask::new(w, h, data)
}

/// Writes a mask as 0/255 greyscale.
pub fn write_mask(path: impl AsRef<Path>, mask: &Mask) -> Result<()> {
    let bytes = mask.data().iter().map(|m| if *m { 255 } else { 0 }).collect();
    let img = GrayImage::from_raw(mask.width() as u32, mask.height() as u32, bytes).expect("size");
    img.save_with_format(path.as_ref(), image::ImageFormat::Png)?;
    Ok(())
}

/// PNG files in `dir`, sorted by file name (numeric runs compared by value).
pub fn list_pngs(dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = std::fs::read_dir(dir.as_ref())?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")))
        .collect();
    out.sort_by(|a, b| natural_key(a).cmp(&natural_key(b)));
    Ok(out)
}

#[derive(Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Chunk {
    Num(u128, usize),
    Text(String),
}

fn natural_key(p: &Path) -> Vec<Chunk> {
    let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let mut out = Vec::new();
    let mut chars = name.chars().peekable();
    while let Some(&c) = chars.peek() {
        let digit = c.is_ascii_digit();
        let mut s = String::new();
        while let Some(&c) = chars.peek() {
            if c.is_ascii_digit() != digit {
                break;
            }
            s.push(c);
            chars.next();
        }
        out.push(match s.parse::<u128>() {
            Ok(n) if digit => Chunk::Num(n, s.len()),
            _ => Chunk::Text(s),
        });
    }
    out
}
