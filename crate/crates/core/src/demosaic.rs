//! Demosaicking: a directional single-frame initialization refined by a
//! motion-compensated non-local average that only averages original CFA
//! samples.

use rayon::prelude::*;

use crate::cfa::{channel_mask, BayerPattern, CfaColor, CfaImage, DecimationMask};
use crate::error::{Error, Result};
use crate::flow::{FlowField, Registration};
use crate::image::{clamp_origin, Image, Sequence};
use crate::noise::ChannelModel;

/// Reflects an out-of-range index back inside `[0, n)` keeping its parity,
/// so the reflected CFA site has the same color.
#[inline]
fn mirror(i: isize, n: usize) -> usize {
    let n = n as isize;
    let mut i = i;
    loop {
        if i < 0 {
            i = -i;
        } else if i >= n {
            i = 2 * (n - 1) - i;
        } else {
            return i as usize;
        }
    }
}

#[inline]
fn at(img: &Image, x: isize, y: isize, c: usize) -> f64 {
    img.get(mirror(x, img.width()), mirror(y, img.height()), c)
}

/// Interpolation directions, in decision order.
pub const DIRECTIONS: [&str; 4] = ["north", "south", "east", "west"];
const STEPS: [(isize, isize); 4] = [(0, -1), (0, 1), (1, 0), (-1, 0)];

/// The four directional reconstructions and the per-pixel choice.
#[derive(Debug, Clone)]
pub struct DirectionalEstimate {
    /// Full-color images for north, south, east and west.
    pub images: [Image; 4],
    /// Index into `images` of the direction kept at each pixel.
    pub choice: Vec<u8>,
}

/// Green at every pixel along one direction, with second-order correction
/// by the co-located red or blue samples.
fn directional_green(cfa: &CfaImage, step: (isize, isize)) -> Image {
    let raw = cfa.image();
    let p = cfa.pattern();
    let (w, h) = (cfa.width(), cfa.height());
    Image::from_fn(w, h, 1, |x, y, _| {
        let v = raw.get(x, y, 0);
        if p.color_at(x, y) == CfaColor::Green {
            return v;
        }
        let (xi, yi) = (x as isize, y as isize);
        let g = at(raw, xi + step.0, yi + step.1, 0);
        let c2 = at(raw, xi + 2 * step.0, yi + 2 * step.1, 0);
        g + 0.5 * (v - c2)
    })
}

/// Bilinear interpolation of a channel known only where `known` holds.
fn bilinear_fill(values: &Image, known: &DecimationMask) -> Image {
    let (w, h) = (values.width(), values.height());
    Image::from_fn(w, h, 1, |x, y, _| {
        if known.get(x, y) > 0.0 {
            return values.get(x, y, 0);
        }
        let mut s = 0.0;
        let mut n = 0.0;
        for dy in -1isize..=1 {
            for dx in -1isize..=1 {
                let (xx, yy) = (mirror(x as isize + dx, w), mirror(y as isize + dy, h));
                if known.get(xx, yy) > 0.0 {
                    let k = if dx == 0 || dy == 0 { 1.0 } else { 0.5 };
                    s += k * values.get(xx, yy, 0);
                    n += k;
                }
            }
        }
        if n > 0.0 {
            s / n
        } else {
            0.0
        }
    })
}

fn full_color(cfa: &CfaImage, green: &Image) -> Result<Image> {
    let raw = cfa.image();
    let (w, h) = (cfa.width(), cfa.height());
    let mut planes = vec![Image::zeros(w, h, 1), green.clone(), Image::zeros(w, h, 1)];
    for color in [CfaColor::Red, CfaColor::Blue] {
        let mask = channel_mask(cfa.pattern(), color, w, h)?;
        let diff = Image::from_fn(w, h, 1, |x, y, _| {
            if mask.get(x, y) > 0.0 {
                green.get(x, y, 0) - raw.get(x, y, 0)
            } else {
                0.0
            }
        });
        let filled = bilinear_fill(&diff, &mask);
        planes[color.rgb_index()] = Image::from_fn(w, h, 1, |x, y, _| green.get(x, y, 0) - filled.get(x, y, 0));
    }
    Ok(Image::from_channels(&planes)?.with_range(raw.range_hint))
}

/// Orthonormal YUV chrominance `(U, V)` of an RGB pixel.
#[inline]
pub fn chroma(r: f64, g: f64, b: f64) -> (f64, f64) {
    ((r - b) / 2f64.sqrt(), (r - 2.0 * g + b) / 6f64.sqrt())
}

/// Per-pixel chrominance variation: `|∂xU| + |∂yU| + |∂xV| + |∂yV|` (forward
/// differences) summed over the 3x3 neighborhood.
pub fn chroma_variation(img: &Image) -> Vec<f64> {
    let (w, h) = (img.width(), img.height());
    let uv: Vec<(f64, f64)> = img.data().chunks_exact(3).map(|p| chroma(p[0], p[1], p[2])).collect();
    let get = |x: isize, y: isize| uv[mirror(y, h) * w + mirror(x, w)];
    let mut grad = vec![0.0; w * h];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let (u, v) = get(x, y);
            let (ux, vx) = get(x + 1, y);
            let (uy, vy) = get(x, y + 1);
            grad[y as usize * w + x as usize] = (ux - u).abs() + (uy - u).abs() + (vx - v).abs() + (vy - v).abs();
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let mut s = 0.0;
            for dy in -1..=1 {
                for dx in -1..=1 {
                    s += grad[mirror(y + dy, h) * w + mirror(x + dx, w)];
                }
            }
            out[y as usize * w + x as usize] = s;
        }
    }
    out
}

pub fn directional_estimates(cfa: &CfaImage) -> Result<DirectionalEstimate> {
    let imgs: Vec<Image> = STEPS
        .iter()
        .map(|&s| full_color(cfa, &directional_green(cfa, s)))
        .collect::<Result<_>>()?;
    let variation: Vec<Vec<f64>> = imgs.iter().map(chroma_variation).collect();
    let choice = (0..cfa.width() * cfa.height())
        .map(|i| {
            let mut best = 0;
            for d in 1..4 {
                if variation[d][i] < variation[best][i] {
                    best = d;
                }
            }
            best as u8
        })
        .collect();
    let images: [Image; 4] = imgs.try_into().expect("four directions");
    Ok(DirectionalEstimate { images, choice })
}

impl DirectionalEstimate {
    pub fn combined(&self) -> Image {
        let first = &self.images[0];
        let mut out = first.clone();
        for (i, px) in out.data_mut().chunks_exact_mut(3).enumerate() {
            let src = &self.images[self.choice[i] as usize].data()[3 * i..3 * i + 3];
            px.copy_from_slice(src);
        }
        out
    }
}

/// Single-frame directional demosaicking.
pub fn directional_init(cfa: &CfaImage) -> Result<Image> {
    Ok(directional_estimates(cfa)?.combined())
}

/// Similarity bandwidth `h` of the patch weights.
#[derive(Debug, Clone, PartialEq)]
pub enum Bandwidth {
    Fixed(f64),
    /// `factor * σ(mean of the reference guide patch)`, with σ floored at a
    /// millionth of the model's intensity range.
    NoiseCurve { model: ChannelModel, factor: f64 },
}

impl Bandwidth {
    pub fn h(&self, patch_mean: f64) -> f64 {
        match self {
            Bandwidth::Fixed(h) => *h,
            Bandwidth::NoiseCurve { model, factor } => factor * model.raw(patch_mean).max(1e-3 * model.floor()),
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match self {
            Bandwidth::Fixed(h) => *h > 0.0,
            Bandwidth::NoiseCurve { factor, .. } => *factor > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("non-positive bandwidth {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InterpConfig {
    pub side: usize,
    /// Extended patches kept per reference patch.
    pub k: usize,
    pub search_radius: usize,
    /// Spacing of the reference patches.
    pub stride: usize,
    pub h: Bandwidth,
}

impl Default for InterpConfig {
    fn default() -> Self {
        Self {
            side: 8,
            k: 8,
            search_radius: 15,
            stride: 4,
            h: Bandwidth::Fixed(2.0),
        }
    }
}

impl InterpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.side == 0 || self.k == 0 || self.stride == 0 {
            return Err(Error::InvalidArgument(format!("bad interpolation config {self:?}")));
        }
        self.h.validate()
    }
}

/// Patches with `d / h²` above this get weight zero.
pub const WEIGHT_CUTOFF: f64 = 30.0;

/// Origin of the motion-compensated copy in frame `n` of the patch at
/// `(x, y)`: shifted by the rounded flow at the patch center.
#[inline]
fn shifted(flow: &FlowField, x: usize, y: usize, side: usize) -> (usize, usize) {
    let (u, v) = flow.at(x + side / 2, y + side / 2);
    (
        clamp_origin((x as f64 + u).round() as isize, side, flow.width()),
        clamp_origin((y as f64 + v).round() as isize, side, flow.height()),
    )
}

fn sq_dist(a: &[f64], pa: (usize, usize), b: &[f64], pb: (usize, usize), w: usize, side: usize) -> f64 {
    let mut d = 0.0;
    for r in 0..side {
        let ra = &a[(pa.1 + r) * w + pa.0..(pa.1 + r) * w + pa.0 + side];
        let rb = &b[(pb.1 + r) * w + pb.0..(pb.1 + r) * w + pb.0 + side];
        d += ra.iter().zip(rb).map(|(u, v)| (u - v) * (u - v)).sum::<f64>();
    }
    d
}

/// Weighted, mask-restricted average over the motion-compensated patch
/// group of each reference patch of frame `reference`.
///
/// `flows[n]` is the flow from the reference frame to frame `n`. Groups are
/// selected and weighted on `guide`; only samples of `tilde` where `mask`
/// is set are averaged. The weight of a member patch is
/// `exp(-d / h²)` with `d` the mean squared guide difference per pixel to the
/// reference patch. Pixels that receive no masked sample keep their `tilde`
/// value.
pub fn st_interpolate(
    tilde: &Sequence,
    guide: &Sequence,
    mask: &DecimationMask,
    flows: &[FlowField],
    cfg: &InterpConfig,
    reference: usize,
) -> Result<Image> {
    cfg.validate()?;
    let n_frames = tilde.len();
    let (w, h, ch) = tilde.dims();
    if ch != 1 || guide.dims() != (w, h, 1) || guide.len() != n_frames {
        return Err(Error::DimensionMismatch {
            expected: (w, h, 1),
            got: guide.dims(),
        });
    }
    if (mask.image().width(), mask.image().height()) != (w, h) {
        return Err(Error::DimensionMismatch {
            expected: (w, h, 1),
            got: mask.image().dims(),
        });
    }
    if flows.len() != n_frames || flows.iter().any(|f| (f.width(), f.height()) != (w, h)) {
        return Err(Error::InvalidArgument("one flow per frame of the sequence is required".into()));
    }
    if reference >= n_frames {
        return Err(Error::InvalidArgument(format!("reference {reference} out of range")));
    }
    let side = cfg.side;
    if side > w || side > h {
        return Err(Error::PatchTooLarge { side, width: w, height: h });
    }
    let guides: Vec<&[f64]> = guide.frames().iter().map(Image::data).collect();
    let tildes: Vec<&[f64]> = tilde.frames().iter().map(Image::data).collect();
    let d = mask.image().data();
    let positions = crate::denoise::grid_positions;
    let refs: Vec<(usize, usize)> = positions(h, side, cfg.stride)
        .into_iter()
        .flat_map(|y| positions(w, side, cfg.stride).into_iter().map(move |x| (x, y)))
        .collect();
    let npx = (side * side) as f64;

    let estimate = |(px, py): (usize, usize)| -> Vec<(f64, f64)> {
        let p_src: Vec<(usize, usize)> = flows.iter().map(|f| shifted(f, px, py, side)).collect();
        let x0 = px.saturating_sub(cfg.search_radius);
        let x1 = (px + cfg.search_radius).min(w - side);
        let y0 = py.saturating_sub(cfg.search_radius);
        let y1 = (py + cfg.search_radius).min(h - side);
        let others = cfg.k - 1;
        let mut best: Vec<(f64, (usize, usize))> = Vec::with_capacity(others + 1);
        if others > 0 {
            for qy in y0..=y1 {
                for qx in x0..=x1 {
                    if (qx, qy) == (px, py) {
                        continue;
                    }
                    let bound = if best.len() == others { best[others - 1].0 } else { f64::INFINITY };
                    let mut dist = 0.0;
                    let mut pruned = false;
                    for (n, f) in flows.iter().enumerate() {
                        dist += sq_dist(guides[n], p_src[n], guides[n], shifted(f, qx, qy, side), w, side);
                        if dist >= bound {
                            pruned = true;
                            break;
                        }
                    }
                    if !pruned {
                        let at = best.partition_point(|e| e.0 <= dist);
                        best.insert(at, (dist, (qx, qy)));
                        best.truncate(others);
                    }
                }
            }
        }
        let ref_guide = guides[reference];
        let mean = {
            let mut s = 0.0;
            for r in 0..side {
                s += ref_guide[(py + r) * w + px..(py + r) * w + px + side].iter().sum::<f64>();
            }
            s / npx
        };
        let hh = cfg.h.h(mean);
        let h2 = hh * hh;
        let mut num = vec![0.0; side * side];
        let mut den = vec![0.0; side * side];
        let group = std::iter::once((px, py)).chain(best.iter().map(|b| b.1));
        for (qx, qy) in group {
            for (n, f) in flows.iter().enumerate() {
                let q = shifted(f, qx, qy, side);
                let dist = sq_dist(ref_guide, (px, py), guides[n], q, w, side) / npx;
                if dist / h2 > WEIGHT_CUTOFF {
                    continue;
                }
                let wgt = (-dist / h2).exp();
                for r in 0..side {
                    let row = (q.1 + r) * w + q.0;
                    for c in 0..side {
                        let m = d[row + c];
                        if m > 0.0 {
                            num[r * side + c] += wgt * m * tildes[n][row + c];
                            den[r * side + c] += wgt * m;
                        }
                    }
                }
            }
        }
        num.iter().zip(&den).map(|(&a, &b)| (a, b)).collect()
    };

    let mut sum = vec![0.0; w * h];
    let mut cnt = vec![0.0; w * h];
    for chunk in refs.chunks(64) {
        let results: Vec<Vec<(f64, f64)>> = chunk.par_iter().map(|&p| estimate(p)).collect();
        for (&(px, py), est) in chunk.iter().zip(results) {
            for r in 0..side {
                for c in 0..side {
                    let (a, b) = est[r * side + c];
                    if b > 0.0 {
                        let i = (py + r) * w + px + c;
                        sum[i] += a / b;
                        cnt[i] += 1.0;
                    }
                }
            }
        }
    }
    let base = &tilde[reference];
    let data = (0..w * h)
        .map(|i| if cnt[i] > 0.0 { sum[i] / cnt[i] } else { base.data()[i] })
        .collect();
    Image::new(w, h, 1, data, base.range_hint)
}

/// Flows from frame `k` to every frame of a single-channel sequence.
pub fn flows_from(seq: &Sequence, k: usize, registration: &dyn Registration, range: Option<(f64, f64)>) -> Result<Vec<FlowField>> {
    let (w, h, _) = seq.dims();
    (0..seq.len())
        .map(|n| {
            if n == k {
                Ok(FlowField::zeros(w, h))
            } else {
                registration.register(&seq[k], &seq[n], range)
            }
        })
        .collect()
}

/// Intermediate results of [`demosaick_sequence`].
#[derive(Debug, Clone)]
pub struct DemosaicOutput {
    /// Directional initialization of every frame.
    pub init: Sequence,
    /// Updated green of every frame.
    pub green: Sequence,
    /// Final color frames, in the order of the requested indices.
    pub frames: Vec<Image>,
}

/// Spatio-temporal demosaicking of a CFA sequence.
///
/// Green is updated on every frame (it guides the red and blue passes);
/// red and blue are only computed for the frames in `wanted` (all frames
/// when `None`).
pub fn demosaick_sequence(
    cfa: &[CfaImage],
    cfg: &InterpConfig,
    registration: &dyn Registration,
    wanted: Option<&[usize]>,
) -> Result<DemosaicOutput> {
    cfg.validate()?;
    let first = cfa.first().ok_or(Error::EmptySequence)?;
    let pattern: BayerPattern = first.pattern();
    let (w, h) = (first.width(), first.height());
    if cfa.iter().any(|c| c.pattern() != pattern || (c.width(), c.height()) != (w, h)) {
        return Err(Error::InvalidArgument("CFA frames differ in size or pattern".into()));
    }
    let all: Vec<usize> = (0..cfa.len()).collect();
    let wanted = wanted.unwrap_or(&all);
    if let Some(&bad) = wanted.iter().find(|&&k| k >= cfa.len()) {
        return Err(Error::InvalidArgument(format!("frame {bad} out of range")));
    }
    let range = first.image().range_hint;

    let init = Sequence::new(cfa.par_iter().map(directional_init).collect::<Result<Vec<_>>>()?)?;
    let green0 = init.channel(1);
    let flows: Vec<Vec<FlowField>> = (0..cfa.len())
        .into_par_iter()
        .map(|k| flows_from(&green0, k, registration, Some((0.0, range))))
        .collect::<Result<_>>()?;

    let gmask = channel_mask(pattern, CfaColor::Green, w, h)?;
    let green = Sequence::new(
        (0..cfa.len())
            .into_par_iter()
            .map(|k| st_interpolate(&green0, &green0, &gmask, &flows[k], cfg, k))
            .collect::<Result<Vec<_>>>()?,
    )?;

    let mut diffs = Vec::new();
    for color in [CfaColor::Red, CfaColor::Blue] {
        let c = color.rgb_index();
        let d = Sequence::new(
            init.frames()
                .iter()
                .zip(green.frames())
                .map(|(f, g)| Image::from_fn(w, h, 1, |x, y, _| f.get(x, y, c) - g.get(x, y, 0)).with_range(range))
                .collect(),
        )?;
        diffs.push((color, d, channel_mask(pattern, color, w, h)?));
    }
    let frames = wanted
        .par_iter()
        .map(|&k| {
            let g = &green[k];
            let mut planes = vec![Image::zeros(w, h, 1), g.clone(), Image::zeros(w, h, 1)];
            for (color, d, mask) in &diffs {
                let upd = st_interpolate(d, &green, mask, &flows[k], cfg, k)?;
                planes[color.rgb_index()] = Image::from_fn(w, h, 1, |x, y, _| upd.get(x, y, 0) + g.get(x, y, 0));
            }
            Ok(Image::from_channels(&planes)?.with_range(range))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DemosaicOutput { init, green, frames })
}
