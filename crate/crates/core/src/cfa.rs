//! Bayer pattern bookkeeping, CFA <-> 4-channel repacking and decimation masks.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CfaColor {
    Red,
    Green,
    Blue,
}

impl CfaColor {
    /// Index into an RGB image.
    pub fn rgb_index(self) -> usize {
        match self {
            CfaColor::Red => 0,
            CfaColor::Green => 1,
            CfaColor::Blue => 2,
        }
    }
}

/// Color layout of the 2x2 Bayer cell, read row-major.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum BayerPattern {
    Rggb,
    Grbg,
    Gbrg,
    Bggr,
}

/// Quad channel order: red, green on the red row, green on the blue row, blue.
pub const QUAD_R: usize = 0;
pub const QUAD_G1: usize = 1;
pub const QUAD_G2: usize = 2;
pub const QUAD_B: usize = 3;

impl BayerPattern {
    pub const ALL: [BayerPattern; 4] = [
        BayerPattern::Rggb,
        BayerPattern::Grbg,
        BayerPattern::Gbrg,
        BayerPattern::Bggr,
    ];

    /// Offsets `(dx, dy)` inside the 2x2 cell of the R, G1, G2 and B sites.
    pub fn quad_offsets(self) -> [(usize, usize); 4] {
        match self {
            BayerPattern::Rggb => [(0, 0), (1, 0), (0, 1), (1, 1)],
            BayerPattern::Grbg => [(1, 0), (0, 0), (1, 1), (0, 1)],
            BayerPattern::Gbrg => [(0, 1), (1, 1), (0, 0), (1, 0)],
            BayerPattern::Bggr => [(1, 1), (0, 1), (1, 0), (0, 0)],
        }
    }

    /// Quad channel (`QUAD_*`) sampled at pixel `(x, y)`.
    #[inline]
    pub fn quad_channel_at(self, x: usize, y: usize) -> usize {
        let cell = (x & 1, y & 1);
        self.quad_offsets()
            .iter()
            .position(|&o| o == cell)
            .expect("every cell site belongs to a channel")
    }

    #[inline]
    pub fn color_at(self, x: usize, y: usize) -> CfaColor {
        match self.quad_channel_at(x, y) {
            QUAD_R => CfaColor::Red,
            QUAD_B => CfaColor::Blue,
            _ => CfaColor::Green,
        }
    }
}

impl fmt::Display for BayerPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            BayerPattern::Rggb => "RGGB",
            BayerPattern::Grbg => "GRBG",
            BayerPattern::Gbrg => "GBRG",
            BayerPattern::Bggr => "BGGR",
        };
        f.write_str(s)
    }
}

impl FromStr for BayerPattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "RGGB" => Ok(BayerPattern::Rggb),
            "GRBG" => Ok(BayerPattern::Grbg),
            "GBRG" => Ok(BayerPattern::Gbrg),
            "BGGR" => Ok(BayerPattern::Bggr),
            _ => Err(Error::InvalidArgument(format!("unknown Bayer pattern {s:?}"))),
        }
    }
}

impl TryFrom<String> for BayerPattern {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<BayerPattern> for String {
    fn from(p: BayerPattern) -> String {
        p.to_string()
    }
}

fn check_even(w: usize, h: usize) -> Result<()> {
    if !w.is_multiple_of(2) || !h.is_multiple_of(2) {
        return Err(Error::OddDimensions { width: w, height: h });
    }
    Ok(())
}

/// Single-channel mosaicked frame.
#[derive(Debug, Clone, PartialEq)]
pub struct CfaImage {
    img: Image,
    pattern: BayerPattern,
}

impl CfaImage {
    pub fn new(img: Image, pattern: BayerPattern) -> Result<Self> {
        if img.channels() != 1 {
            return Err(Error::ChannelCount {
                expected: 1,
                got: img.channels(),
            });
        }
        check_even(img.width(), img.height())?;
        Ok(Self { img, pattern })
    }

    pub fn image(&self) -> &Image {
        &self.img
    }

    pub fn into_image(self) -> Image {
        self.img
    }

    pub fn pattern(&self) -> BayerPattern {
        self.pattern
    }

    pub fn width(&self) -> usize {
        self.img.width()
    }

    pub fn height(&self) -> usize {
        self.img.height()
    }
}

/// Half-resolution 4-channel repacking (R, G1, G2, B) of a CFA frame.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadImage {
    img: Image,
}

impl QuadImage {
    pub fn new(img: Image) -> Result<Self> {
        if img.channels() != 4 {
            return Err(Error::ChannelCount {
                expected: 4,
                got: img.channels(),
            });
        }
        Ok(Self { img })
    }

    pub fn image(&self) -> &Image {
        &self.img
    }

    pub fn into_image(self) -> Image {
        self.img
    }
}

/// Samples a 3-channel image through the Bayer pattern.
pub fn mosaic(color: &Image, pattern: BayerPattern) -> Result<CfaImage> {
    if color.channels() != 3 {
        return Err(Error::ChannelCount {
            expected: 3,
            got: color.channels(),
        });
    }
    let (w, h) = (color.width(), color.height());
    check_even(w, h)?;
    let img = Image::from_fn(w, h, 1, |x, y, _| {
        color.get(x, y, pattern.color_at(x, y).rgb_index())
    })
    .with_range(color.range_hint);
    CfaImage::new(img, pattern)
}

pub fn cfa_to_quad(cfa: &CfaImage) -> QuadImage {
    let offs = cfa.pattern.quad_offsets();
    let src = &cfa.img;
    let img = Image::from_fn(src.width() / 2, src.height() / 2, 4, |x, y, c| {
        let (dx, dy) = offs[c];
        src.get(2 * x + dx, 2 * y + dy, 0)
    })
    .with_range(src.range_hint);
    QuadImage { img }
}

pub fn quad_to_cfa(quad: &QuadImage, pattern: BayerPattern) -> CfaImage {
    let q = &quad.img;
    let img = Image::from_fn(q.width() * 2, q.height() * 2, 1, |x, y, _| {
        q.get(x / 2, y / 2, pattern.quad_channel_at(x, y))
    })
    .with_range(q.range_hint);
    CfaImage { img, pattern }
}

/// Binary map of the original sample positions of one color.
#[derive(Debug, Clone, PartialEq)]
pub struct DecimationMask {
    mask: Image,
}

impl DecimationMask {
    pub fn image(&self) -> &Image {
        &self.mask
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.mask.get(x, y, 0)
    }

    pub fn count(&self) -> usize {
        self.mask.data().iter().filter(|&&v| v > 0.5).count()
    }

    /// All-ones mask, i.e. every pixel counts as an original sample.
    pub fn full(w: usize, h: usize) -> Self {
        Self {
            mask: Image::filled(w, h, 1, 1.0).with_range(1.0),
        }
    }

    pub fn from_image(mask: Image) -> Result<Self> {
        if mask.channels() != 1 {
            return Err(Error::ChannelCount {
                expected: 1,
                got: mask.channels(),
            });
        }
        if mask.data().iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::InvalidArgument("mask values must be 0 or 1".into()));
        }
        Ok(Self { mask })
    }
}

pub fn channel_mask(pattern: BayerPattern, color: CfaColor, w: usize, h: usize) -> Result<DecimationMask> {
    check_even(w, h)?;
    let mask = Image::from_fn(w, h, 1, |x, y, _| {
        if pattern.color_at(x, y) == color {
            1.0
        } else {
            0.0
        }
    })
    .with_range(1.0);
    Ok(DecimationMask { mask })
}
