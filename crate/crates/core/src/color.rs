//! YUVW decorrelation of (R, G1, G2, B) data and the display imaging chain.

use crate::cfa::QuadImage;
use crate::error::{Error, Result};
use crate::image::Image;

/// Rows are the principal vectors Y, U, V, W of raw (R, G1, G2, B) pixels.
///
/// The entries are kept as printed; the matrix is orthonormal only to about
/// 1.3e-5, so the backward transform uses the exact inverse rather than the
/// transpose.
pub const YUVW: [[f64; 4]; 4] = [
    [0.5, 0.5, 0.5, 0.5],
    [-0.5, 0.5, 0.5, -0.5],
    [0.65, 0.2784, -0.2784, -0.65],
    [-0.2784, 0.65, -0.65, 0.2784],
];

/// An invertible 4x4 channel transform.
#[derive(Debug, Clone, PartialEq)]
pub struct ColorTransform {
    pub matrix: [[f64; 4]; 4],
}

impl Default for ColorTransform {
    fn default() -> Self {
        Self { matrix: YUVW }
    }
}

impl ColorTransform {
    pub fn inverse(&self) -> [[f64; 4]; 4] {
        let m = nalgebra::Matrix4::from_fn(|i, j| self.matrix[i][j]);
        let inv = m.try_inverse().expect("channel transform must be invertible");
        std::array::from_fn(|i| std::array::from_fn(|j| inv[(i, j)]))
    }

    /// `max |M Mᵀ - I|` over all entries.
    pub fn orthonormality_defect(&self) -> f64 {
        let m = &self.matrix;
        let mut worst: f64 = 0.0;
        for i in 0..4 {
            for j in 0..4 {
                let dot: f64 = (0..4).map(|k| m[i][k] * m[j][k]).sum();
                let id = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((dot - id).abs());
            }
        }
        worst
    }

    pub fn forward(&self, img: &Image) -> Result<Image> {
        apply(img, &self.matrix)
    }

    pub fn backward(&self, img: &Image) -> Result<Image> {
        apply(img, &self.inverse())
    }
}

fn apply(img: &Image, m: &[[f64; 4]; 4]) -> Result<Image> {
    if img.channels() != 4 {
        return Err(Error::ChannelCount {
            expected: 4,
            got: img.channels(),
        });
    }
    let mut out = img.clone();
    for px in out.data_mut().chunks_exact_mut(4) {
        let v = [px[0], px[1], px[2], px[3]];
        for (o, row) in px.iter_mut().zip(m) {
            *o = row[0] * v[0] + row[1] * v[1] + row[2] * v[2] + row[3] * v[3];
        }
    }
    Ok(out)
}

pub fn yuvw_forward(q: &QuadImage) -> QuadImage {
    let img = ColorTransform::default()
        .forward(q.image())
        .expect("quad images have four channels");
    QuadImage::new(img).expect("four channels")
}

pub fn yuvw_inverse(q: &QuadImage) -> QuadImage {
    let img = ColorTransform::default()
        .backward(q.image())
        .expect("quad images have four channels");
    QuadImage::new(img).expect("four channels")
}

/// Gray-world white balance: red and blue are scaled so that their means
/// match the green mean.
pub fn gray_world_wb(img: &Image) -> Result<Image> {
    if img.channels() != 3 {
        return Err(Error::ChannelCount {
            expected: 3,
            got: img.channels(),
        });
    }
    let means = img.channel_means();
    if let Some(c) = means.iter().position(|&m| m == 0.0) {
        return Err(Error::ZeroMeanChannel(c));
    }
    let gains = [means[1] / means[0], 1.0, means[1] / means[2]];
    let mut out = img.clone();
    for px in out.data_mut().chunks_exact_mut(3) {
        for (v, g) in px.iter_mut().zip(gains) {
            *v *= g;
        }
    }
    Ok(out)
}

/// Power-law correction on samples normalized by `range_hint`. Negative
/// samples are clamped to zero.
pub fn gamma_correct(img: &Image, gamma: f64) -> Image {
    let r = img.range_hint;
    img.map(|v| r * (v.max(0.0) / r).powf(gamma))
}
