//! Binary PGM (P5) and PPM (P6) reading and writing, 8 or 16 bits per sample.
//!
//! 16-bit samples are big-endian. Images read from disk carry the file's
//! maxval as their `range_hint`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::cfa::DecimationMask;
use crate::error::{Error, Result};
use crate::image::Image;

fn format_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

struct Header {
    channels: usize,
    width: usize,
    height: usize,
    maxval: u32,
    data_offset: usize,
}

fn parse_header(bytes: &[u8], path: &Path) -> Result<Header> {
    if bytes.len() < 2 || bytes[0] != b'P' {
        return Err(format_err(path, "not a netpbm file"));
    }
    let channels = match bytes[1] {
        b'5' => 1,
        b'6' => 3,
        m => return Err(format_err(path, format!("unsupported magic P{}", m as char))),
    };
    let mut pos = 2;
    let mut fields = [0u32; 3];
    for field in &mut fields {
        // whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err(format_err(path, "truncated header")),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(format_err(path, "expected a number in header"));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| format_err(path, "header number out of range"))?;
    }
    // exactly one whitespace byte before the raster
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(format_err(path, "missing whitespace after maxval"));
    }
    let [width, height, maxval] = fields;
    if width == 0 || height == 0 {
        return Err(format_err(path, "zero image dimension"));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(format_err(path, format!("invalid maxval {maxval}")));
    }
    Ok(Header {
        channels,
        width: width as usize,
        height: height as usize,
        maxval,
        data_offset: pos + 1,
    })
}

/// Decodes an in-memory P5/P6 file. `path` is only used for diagnostics.
pub fn decode(bytes: &[u8], path: &Path) -> Result<Image> {
    let h = parse_header(bytes, path)?;
    let n = h.width * h.height * h.channels;
    let raster = &bytes[h.data_offset..];
    let data: Vec<f64> = if h.maxval < 256 {
        if raster.len() < n {
            return Err(format_err(path, "truncated raster"));
        }
        raster[..n].iter().map(|&b| b as f64).collect()
    } else {
        if raster.len() < 2 * n {
            return Err(format_err(path, "truncated raster"));
        }
        raster[..2 * n]
            .chunks_exact(2)
            .map(|b| u16::from_be_bytes([b[0], b[1]]) as f64)
            .collect()
    };
    Image::new(h.width, h.height, h.channels, data, h.maxval as f64)
}

pub fn read_image(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    decode(&bytes, path)
}

/// Encodes a 1- or 3-channel image at 8 or 16 bits. Samples are rounded to
/// the nearest integer and must lie in `[0, maxval]`.
pub fn encode(img: &Image, bitdepth: u8) -> Result<Vec<u8>> {
    let maxval: u32 = match bitdepth {
        8 => 255,
        16 => 65535,
        b => return Err(Error::InvalidArgument(format!("unsupported bit depth {b}"))),
    };
    let magic = match img.channels() {
        1 => "P5",
        3 => "P6",
        c => {
            return Err(Error::InvalidArgument(format!(
                "netpbm needs 1 or 3 channels, got {c}"
            )))
        }
    };
    let mut out = format!("{magic}\n{} {}\n{maxval}\n", img.width(), img.height()).into_bytes();
    out.reserve(img.data().len() * (bitdepth as usize / 8));
    for &v in img.data() {
        let r = v.round();
        if !(0.0..=maxval as f64).contains(&r) {
            return Err(Error::SampleOutOfRange { value: v, maxval });
        }
        if bitdepth == 8 {
            out.push(r as u8);
        } else {
            out.extend_from_slice(&(r as u16).to_be_bytes());
        }
    }
    Ok(out)
}

pub fn write_image(path: impl AsRef<Path>, img: &Image, bitdepth: u8) -> Result<()> {
    let bytes = encode(img, bitdepth)?;
    let mut f = fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

/// Clamps to `[0, maxval]` and rounds, ready for [`write_image`].
pub fn quantize(img: &Image, maxval: f64) -> Image {
    img.map(|v| v.clamp(0.0, maxval).round())
}

/// Writes a decimation mask as an 8-bit graymap with values {0, 255}.
pub fn write_mask(path: impl AsRef<Path>, mask: &DecimationMask) -> Result<()> {
    write_image(path, &mask.image().map(|v| v * 255.0), 8)
}

/// Bit depth that holds `range_hint` without loss.
pub fn bitdepth_for(range_hint: f64) -> u8 {
    if range_hint <= 255.0 {
        8
    } else {
        16
    }
}

/// `dir/frame_0007.pgm` (1 channel) or `.ppm` (3 channels).
pub fn frame_path(dir: impl AsRef<Path>, index: usize, channels: usize) -> PathBuf {
    let ext = if channels == 1 { "pgm" } else { "ppm" };
    dir.as_ref().join(format!("frame_{index:04}.{ext}"))
}

/// Reads `frame_%04d.pgm|ppm` files of a directory in index order.
pub fn read_frames(dir: impl AsRef<Path>) -> Result<Vec<Image>> {
    let dir = dir.as_ref();
    let mut found: Vec<(usize, PathBuf)> = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else { continue };
        let Some((stem, ext)) = name.rsplit_once('.') else { continue };
        if ext != "pgm" && ext != "ppm" {
            continue;
        }
        if let Some(idx) = stem.strip_prefix("frame_").and_then(|d| d.parse::<usize>().ok()) {
            found.push((idx, path));
        }
    }
    if found.is_empty() {
        return Err(format_err(dir, "no frame_%04d.pgm/ppm files"));
    }
    found.sort();
    found.iter().map(|(_, p)| read_image(p)).collect()
}

/// Writes frames as `frame_%04d`, clamped and rounded to their range hint.
pub fn write_frames(dir: impl AsRef<Path>, frames: &[Image]) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    for (i, f) in frames.iter().enumerate() {
        let maxval = f.range_hint.max(1.0);
        let depth = bitdepth_for(maxval);
        write_image(frame_path(dir, i, f.channels()), &quantize(f, maxval.min(65535.0)), depth)?;
    }
    Ok(())
}
