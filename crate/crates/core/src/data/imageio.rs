//! PNG (via the image crate) and uncompressed binary PPM I/O. The PPM path
//! exists so tests can run without any codec in the loop.

use std::fs;
use std::io::Read;
use std::path::Path;

use super::ImageU8;
use crate::error::{Error, Result};

fn ext_of(path: &Path) -> String {
    path.extension()
        .and_then(|e| e.to_str())
        .unwrap_or_default()
        .to_ascii_lowercase()
}

pub fn load_image(path: &Path) -> Result<ImageU8> {
    match ext_of(path).as_str() {
        "ppm" => load_ppm(path),
        "png" => {
            let img = image::open(path)
                .map_err(|e| Error::Data(format!("cannot decode {}: {e}", path.display())))?
                .into_rgb8();
            Ok(ImageU8 {
                w: img.width() as usize,
                h: img.height() as usize,
                data: img.into_raw(),
            })
        }
        other => Err(Error::Data(format!(
            "unsupported image extension '{other}' for {}",
            path.display()
        ))),
    }
}

pub fn save_image(path: &Path, img: &ImageU8) -> Result<()> {
    match ext_of(path).as_str() {
        "ppm" => save_ppm(path, img),
        "png" => image::save_buffer(
            path,
            &img.data,
            img.w as u32,
            img.h as u32,
            image::ExtendedColorType::Rgb8,
        )
        .map_err(|e| Error::Data(format!("cannot encode {}: {e}", path.display()))),
        other => Err(Error::Data(format!(
            "unsupported image extension '{other}' for {}",
            path.display()
        ))),
    }
}

/// Grayscale PNG, used for attention maps and region masks.
pub fn save_gray_png(path: &Path, w: usize, h: usize, data: &[u8]) -> Result<()> {
    if data.len() != w * h {
        return Err(Error::Data(format!(
            "gray buffer length {} != {w}x{h}",
            data.len()
        )));
    }
    image::save_buffer(path, data, w as u32, h as u32, image::ExtendedColorType::L8)
        .map_err(|e| Error::Data(format!("cannot encode {}: {e}", path.display())))
}

pub fn load_gray_png(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let img = image::open(path)
        .map_err(|e| Error::Data(format!("cannot decode {}: {e}", path.display())))?
        .into_luma8();
    Ok((
        img.width() as usize,
        img.height() as usize,
        img.into_raw(),
    ))
}

/// Image dimensions without a full decode.
pub fn image_dims(path: &Path) -> Result<(usize, usize)> {
    match ext_of(path).as_str() {
        "ppm" => {
            let (w, h, _) = read_ppm_header(path)?;
            Ok((w, h))
        }
        _ => {
            let (w, h) = image::image_dimensions(path)
                .map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))?;
            Ok((w as usize, h as usize))
        }
    }
}

fn read_ppm_header(path: &Path) -> Result<(usize, usize, usize)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    parse_ppm_header(&bytes).map(|(w, h, off)| (w, h, off))
}

/// Returns (width, height, pixel data offset).
fn parse_ppm_header(bytes: &[u8]) -> Result<(usize, usize, usize)> {
    let bad = |m: &str| Error::Data(format!("invalid ppm: {m}"));
    if bytes.len() < 2 || &bytes[..2] != b"P6" {
        return Err(bad("missing P6 magic"));
    }
    let mut pos = 2usize;
    let mut fields = Vec::with_capacity(3);
    while fields.len() < 3 {
        while pos < bytes.len() && (bytes[pos] as char).is_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && (bytes[pos] as char).is_ascii_digit() {
            pos += 1;
        }
        if pos == start {
            return Err(bad("truncated header"));
        }
        let text = std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("non-ascii header"))?;
        fields.push(text.parse::<usize>().map_err(|_| bad("bad number"))?);
    }
    if fields[2] != 255 {
        return Err(bad("maxval must be 255"));
    }
    // Single whitespace byte separates header from pixels.
    pos += 1;
    Ok((fields[0], fields[1], pos))
}

fn load_ppm(path: &Path) -> Result<ImageU8> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    let (w, h, off) = parse_ppm_header(&bytes)?;
    let need = w * h * 3;
    if bytes.len() < off + need {
        return Err(Error::Data(format!(
            "ppm {} truncated: need {need} pixel bytes, have {}",
            path.display(),
            bytes.len().saturating_sub(off)
        )));
    }
    Ok(ImageU8 {
        w,
        h,
        data: bytes[off..off + need].to_vec(),
    })
}

fn save_ppm(path: &Path, img: &ImageU8) -> Result<()> {
    let mut out = format!("P6\n{} {}\n255\n", img.w, img.h).into_bytes();
    out.extend_from_slice(&img.data);
    fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}
