//! Image and sequence containers, patch extraction and patch aggregation.

use crate::error::{Error, Result};

/// A row-major, channel-interleaved image of `f64` samples.
///
/// Samples are kept as reals through the whole chain; quantization only
/// happens when writing files.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
    /// Nominal maximum sample value (255 for 8-bit data, 4095 for 12-bit RAW, ...).
    pub range_hint: f64,
}

impl Image {
    pub fn new(
        width: usize,
        height: usize,
        channels: usize,
        data: Vec<f64>,
        range_hint: f64,
    ) -> Result<Self> {
        if channels == 0 || width == 0 || height == 0 {
            return Err(Error::InvalidArgument(format!(
                "empty image {width}x{height}x{channels}"
            )));
        }
        if data.len() != width * height * channels {
            return Err(Error::DataLength {
                width,
                height,
                channels,
                got: data.len(),
            });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
            range_hint,
        })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Self {
        assert!(width > 0 && height > 0 && channels > 0);
        Self {
            width,
            height,
            channels,
            data: vec![value; width * height * channels],
            range_hint: 255.0,
        }
    }

    pub fn zeros(width: usize, height: usize, channels: usize) -> Self {
        Self::filled(width, height, channels, 0.0)
    }

    /// Builds an image by evaluating `f(x, y, c)` at every sample.
    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut img = Self::zeros(width, height, channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    img.data[(y * width + x) * channels + c] = f(x, y, c);
                }
            }
        }
        img
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// `(width, height, channels)`
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.width, self.height, self.channels)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn with_range(mut self, range_hint: f64) -> Self {
        self.range_hint = range_hint;
        self
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, c: usize) -> usize {
        (y * self.width + x) * self.channels + c
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[self.index(x, y, c)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: f64) {
        let i = self.index(x, y, c);
        self.data[i] = v;
    }

    /// Sample at signed coordinates, clamped to the border.
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize, c: usize) -> f64 {
        let x = x.clamp(0, self.width as isize - 1) as usize;
        let y = y.clamp(0, self.height as isize - 1) as usize;
        self.get(x, y, c)
    }

    /// Copies channel `c` into a single-channel image.
    pub fn channel(&self, c: usize) -> Image {
        assert!(c < self.channels);
        let data = self.data.iter().skip(c).step_by(self.channels).copied().collect();
        Image {
            width: self.width,
            height: self.height,
            channels: 1,
            data,
            range_hint: self.range_hint,
        }
    }

    /// Interleaves single-channel planes into one image.
    pub fn from_channels(planes: &[Image]) -> Result<Image> {
        let first = planes.first().ok_or(Error::EmptySequence)?;
        let (w, h) = (first.width, first.height);
        for p in planes {
            if p.channels != 1 {
                return Err(Error::ChannelCount {
                    expected: 1,
                    got: p.channels,
                });
            }
            if (p.width, p.height) != (w, h) {
                return Err(Error::DimensionMismatch {
                    expected: (w, h, 1),
                    got: p.dims(),
                });
            }
        }
        let n = planes.len();
        let mut data = vec![0.0; w * h * n];
        for (c, p) in planes.iter().enumerate() {
            for (i, v) in p.data.iter().enumerate() {
                data[i * n + c] = *v;
            }
        }
        Ok(Image {
            width: w,
            height: h,
            channels: n,
            data,
            range_hint: first.range_hint,
        })
    }

    /// Applies `f` to every sample.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Image {
        Image {
            data: self.data.iter().map(|&v| f(v)).collect(),
            ..self.clone()
        }
    }

    pub fn same_dims(&self, other: &Image) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                got: other.dims(),
            });
        }
        Ok(())
    }

    /// Mean of each channel.
    pub fn channel_means(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.channels];
        for px in self.data.chunks_exact(self.channels) {
            for (s, v) in sums.iter_mut().zip(px) {
                *s += v;
            }
        }
        let n = (self.width * self.height) as f64;
        sums.into_iter().map(|s| s / n).collect()
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }
}

/// An ordered, non-empty list of frames sharing their dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    frames: Vec<Image>,
}

impl Sequence {
    pub fn new(frames: Vec<Image>) -> Result<Self> {
        let first = frames.first().ok_or(Error::EmptySequence)?;
        let dims = first.dims();
        for f in &frames[1..] {
            if f.dims() != dims {
                return Err(Error::DimensionMismatch {
                    expected: dims,
                    got: f.dims(),
                });
            }
        }
        Ok(Self { frames })
    }

    pub fn frames(&self) -> &[Image] {
        &self.frames
    }

    pub fn into_frames(self) -> Vec<Image> {
        self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.frames[0].dims()
    }

    /// Index of the central frame, the one reported by the evaluation.
    pub fn central_index(&self) -> usize {
        self.frames.len() / 2
    }

    pub fn map_frames(&self, f: impl Fn(&Image) -> Image) -> Sequence {
        Sequence {
            frames: self.frames.iter().map(f).collect(),
        }
    }

    pub fn channel(&self, c: usize) -> Sequence {
        self.map_frames(|f| f.channel(c))
    }
}

impl std::ops::Index<usize> for Sequence {
    type Output = Image;

    fn index(&self, i: usize) -> &Image {
        &self.frames[i]
    }
}

/// A square window copied out of one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    pub x: usize,
    pub y: usize,
    pub side: usize,
    pub channels: usize,
    pub frame_index: usize,
    /// `side * side * channels` samples, row-major and channel-interleaved.
    pub values: Vec<f64>,
}

/// Clamps a patch origin so that a `side`-wide window starting there fits in `len`.
#[inline]
pub fn clamp_origin(v: isize, side: usize, len: usize) -> usize {
    v.clamp(0, (len - side) as isize) as usize
}

/// Copies the `side x side` window at `(x, y)`; the origin is clamped so
/// the window lies inside the image.
pub fn extract_patch(img: &Image, x: isize, y: isize, side: usize) -> Result<Patch> {
    if side == 0 || side > img.width || side > img.height {
        return Err(Error::PatchTooLarge {
            side,
            width: img.width,
            height: img.height,
        });
    }
    let x = clamp_origin(x, side, img.width);
    let y = clamp_origin(y, side, img.height);
    let ch = img.channels;
    let mut values = Vec::with_capacity(side * side * ch);
    for row in y..y + side {
        let start = img.index(x, row, 0);
        values.extend_from_slice(&img.data[start..start + side * ch]);
    }
    Ok(Patch {
        x,
        y,
        side,
        channels: ch,
        frame_index: 0,
        values,
    })
}

/// Running weighted sums for patch aggregation.
///
/// Single writer. Parallel producers keep their own accumulator and
/// [`merge`](Accumulator::merge) at the end.
#[derive(Debug, Clone)]
pub struct Accumulator {
    width: usize,
    height: usize,
    channels: usize,
    sum: Vec<f64>,
    weight: Vec<f64>,
}

impl Accumulator {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        Self {
            width,
            height,
            channels,
            sum: vec![0.0; width * height * channels],
            weight: vec![0.0; width * height],
        }
    }

    pub fn aggregate(&mut self, patch: &Patch, weight: f64) -> Result<()> {
        if weight < 0.0 || weight.is_nan() {
            return Err(Error::NegativeWeight(weight));
        }
        if patch.channels != self.channels
            || patch.x + patch.side > self.width
            || patch.y + patch.side > self.height
        {
            return Err(Error::InvalidArgument(format!(
                "patch at ({}, {}) side {} x{} does not fit accumulator {}x{}x{}",
                patch.x, patch.y, patch.side, patch.channels, self.width, self.height, self.channels
            )));
        }
        self.add_window(patch.x, patch.y, patch.side, &patch.values, weight);
        Ok(())
    }

    /// Adds a raw window of values without validation. `values` holds
    /// `side * side * channels` samples.
    #[inline]
    pub(crate) fn add_window(&mut self, x: usize, y: usize, side: usize, values: &[f64], weight: f64) {
        let ch = self.channels;
        for dy in 0..side {
            let row = (y + dy) * self.width + x;
            let src = &values[dy * side * ch..(dy + 1) * side * ch];
            let dst = &mut self.sum[row * ch..(row + side) * ch];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += weight * s;
            }
            for w in &mut self.weight[row..row + side] {
                *w += weight;
            }
        }
    }

    /// Elementwise sum of another accumulator of the same shape.
    pub fn merge(&mut self, other: &Accumulator) -> Result<()> {
        if (self.width, self.height, self.channels) != (other.width, other.height, other.channels) {
            return Err(Error::DimensionMismatch {
                expected: (self.width, self.height, self.channels),
                got: (other.width, other.height, other.channels),
            });
        }
        for (a, b) in self.sum.iter_mut().zip(&other.sum) {
            *a += b;
        }
        for (a, b) in self.weight.iter_mut().zip(&other.weight) {
            *a += b;
        }
        Ok(())
    }

    pub fn weight_at(&self, x: usize, y: usize) -> f64 {
        self.weight[y * self.width + x]
    }

    /// `sum / weight` per pixel; pixels that received no weight are 0.
    pub fn finalize(&self) -> Image {
        self.finalize_inner(|_| 0.0)
    }

    /// Like [`finalize`](Self::finalize) but uncovered pixels take the
    /// value of `fallback`.
    pub fn finalize_or(&self, fallback: &Image) -> Result<Image> {
        let dims = (self.width, self.height, self.channels);
        if fallback.dims() != dims {
            return Err(Error::DimensionMismatch {
                expected: dims,
                got: fallback.dims(),
            });
        }
        Ok(self.finalize_inner(|i| fallback.data[i]).with_range(fallback.range_hint))
    }

    fn finalize_inner(&self, fallback: impl Fn(usize) -> f64) -> Image {
        let ch = self.channels;
        let mut data = vec![0.0; self.sum.len()];
        for (p, &w) in self.weight.iter().enumerate() {
            for c in 0..ch {
                let i = p * ch + c;
                data[i] = if w > 0.0 { self.sum[i] / w } else { fallback(i) };
            }
        }
        Image {
            width: self.width,
            height: self.height,
            channels: ch,
            data,
            range_hint: 255.0,
        }
    }
}

/// Root mean square difference over all samples.
pub fn rmse(a: &Image, b: &Image) -> Result<f64> {
    a.same_dims(b)?;
    let sq: f64 = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    Ok((sq / a.data.len() as f64).sqrt())
}
