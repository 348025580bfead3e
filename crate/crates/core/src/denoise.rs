//! Motion-compensated spatio-temporal patch PCA denoising of stabilized
//! 4-channel (R, G1, G2, B) sequences.
//!
//! For a frame `k`, every other frame of the temporal window is registered
//! on the Y channel and warped onto `k`. A reference patch is extended
//! through time by stacking the same window of all warped frames; the K
//! extended patches closest to it (found on Y) form a group of K·M 2D
//! patches per channel. Each channel's group is filtered by cancelling the
//! principal directions whose standard deviation is below `tau·sigma`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::color::ColorTransform;
use crate::error::{Error, Result};
use crate::flow::{occlusion_mask, warp, OcclusionMask, Registration};
use crate::image::{Accumulator, Image, Sequence};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DenoiseParams {
    pub side: usize,
    /// Extended patches per group.
    pub k: usize,
    pub search_radius: usize,
    pub stride: usize,
    /// Threshold factor on the principal standard deviations. When unset,
    /// the upper edge of the noise-only spectrum of the group,
    /// `1.1 (1 + √(side² / (K·M)))`, is used.
    pub tau: Option<f64>,
    /// Noise std of the stabilized data.
    pub sigma: f64,
    /// Frames on each side of the reference; unset means the whole sequence.
    pub temporal_radius: Option<usize>,
    pub tau_div: f64,
    /// Color occlusion threshold in units of `sigma`.
    pub tau_color: f64,
}

impl Default for DenoiseParams {
    fn default() -> Self {
        Self {
            side: 8,
            k: 16,
            search_radius: 21,
            stride: 4,
            tau: None,
            sigma: 1.0,
            temporal_radius: None,
            tau_div: 0.5,
            tau_color: 2.0,
        }
    }
}

impl DenoiseParams {
    pub fn validate(&self) -> Result<()> {
        if self.side == 0 || self.k == 0 || self.stride == 0 || !(self.sigma > 0.0) {
            return Err(Error::InvalidArgument(format!("bad denoise parameters {self:?}")));
        }
        if self.tau.is_some_and(|t| !(t >= 0.0)) {
            return Err(Error::InvalidArgument("tau must be non-negative".into()));
        }
        Ok(())
    }

    /// Neighbor count actually used with `m` frames: raised so that a group
    /// holds more patches than a patch has samples.
    pub fn effective_k(&self, m: usize) -> usize {
        let d = self.side * self.side;
        if self.k * m > d {
            self.k
        } else {
            d / m + 1
        }
    }

    pub fn effective_tau(&self, m: usize) -> f64 {
        self.tau.unwrap_or_else(|| {
            let ratio = (self.side * self.side) as f64 / (self.effective_k(m) * m) as f64;
            1.1 * (1.0 + ratio.sqrt())
        })
    }
}

/// Frames of a temporal window aligned on a reference frame.
#[derive(Debug, Clone)]
pub struct WarpedStack {
    reference: usize,
    width: usize,
    height: usize,
    channels: usize,
    /// `planes[c][n]`: channel `c` of aligned frame `n`.
    planes: Vec<Vec<Vec<f64>>>,
    /// Summed-area tables of the occlusion masks, `(w + 1) x (h + 1)`.
    occlusion: Vec<Vec<u32>>,
}

impl WarpedStack {
    /// `frames[reference]` is the reference itself; `masks[n]` flags the
    /// unreliable pixels of frame `n` (ignored for the reference).
    pub fn new(frames: &[Image], masks: &[OcclusionMask], reference: usize) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::EmptySequence);
        }
        if reference >= frames.len() || masks.len() != frames.len() {
            return Err(Error::InvalidArgument("stack reference or mask count mismatch".into()));
        }
        let (w, h, ch) = frames[0].dims();
        for (f, m) in frames.iter().zip(masks) {
            frames[0].same_dims(f)?;
            if (m.width(), m.height()) != (w, h) {
                return Err(Error::DimensionMismatch {
                    expected: (w, h, 1),
                    got: (m.width(), m.height(), 1),
                });
            }
        }
        let planes = (0..ch)
            .map(|c| frames.iter().map(|f| f.channel(c).into_data()).collect())
            .collect();
        let occlusion = masks
            .iter()
            .enumerate()
            .map(|(n, m)| {
                let mut sat = vec![0u32; (w + 1) * (h + 1)];
                for y in 0..h {
                    for x in 0..w {
                        let v = (n != reference && m.get(x, y)) as u32;
                        sat[(y + 1) * (w + 1) + x + 1] =
                            v + sat[y * (w + 1) + x + 1] + sat[(y + 1) * (w + 1) + x] - sat[y * (w + 1) + x];
                    }
                }
                sat
            })
            .collect();
        Ok(Self {
            reference,
            width: w,
            height: h,
            channels: ch,
            planes,
            occlusion,
        })
    }

    /// Stack without any occlusion.
    pub fn unoccluded(frames: &[Image], reference: usize) -> Result<Self> {
        let (w, h, _) = frames.first().ok_or(Error::EmptySequence)?.dims();
        let masks = vec![OcclusionMask::empty(w, h); frames.len()];
        Self::new(frames, &masks, reference)
    }

    /// Number of frames M.
    pub fn len(&self) -> usize {
        self.occlusion.len()
    }

    pub fn is_empty(&self) -> bool {
        self.occlusion.is_empty()
    }

    pub fn reference(&self) -> usize {
        self.reference
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.width, self.height, self.channels)
    }

    /// Whether the window of frame `n` at `(x, y)` contains an occluded pixel.
    pub fn occluded(&self, n: usize, x: usize, y: usize, side: usize) -> bool {
        let s = &self.occlusion[n];
        let w = self.width + 1;
        let total = s[(y + side) * w + x + side] + s[y * w + x] - s[y * w + x + side] - s[(y + side) * w + x];
        total > 0
    }

    /// Frame actually read for member `n` of the extended patch at `(x, y)`:
    /// occluded windows fall back to the reference frame.
    #[inline]
    fn source(&self, n: usize, x: usize, y: usize, side: usize) -> usize {
        if self.occluded(n, x, y, side) {
            self.reference
        } else {
            n
        }
    }

    fn window(&self, c: usize, n: usize, x: usize, y: usize, side: usize, out: &mut Vec<f64>) {
        let plane = &self.planes[c][n];
        for row in y..y + side {
            out.extend_from_slice(&plane[row * self.width + x..row * self.width + x + side]);
        }
    }
}

/// A 2D patch and its copies on every aligned frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedPatch {
    pub x: usize,
    pub y: usize,
    pub side: usize,
    /// One `side²` patch per frame of the stack.
    pub members: Vec<Vec<f64>>,
}

impl ExtendedPatch {
    /// The member on the reference frame.
    pub fn base<'a>(&'a self, stack: &WarpedStack) -> &'a [f64] {
        &self.members[stack.reference]
    }
}

pub fn build_extended_patch(stack: &WarpedStack, channel: usize, x: usize, y: usize, side: usize) -> Result<ExtendedPatch> {
    check_window(stack, x, y, side)?;
    if channel >= stack.channels {
        return Err(Error::ChannelCount {
            expected: channel + 1,
            got: stack.channels,
        });
    }
    let members = (0..stack.len())
        .map(|n| {
            let mut v = Vec::with_capacity(side * side);
            stack.window(channel, stack.source(n, x, y, side), x, y, side, &mut v);
            v
        })
        .collect();
    Ok(ExtendedPatch { x, y, side, members })
}

fn check_window(stack: &WarpedStack, x: usize, y: usize, side: usize) -> Result<()> {
    if side == 0 || x + side > stack.width || y + side > stack.height {
        return Err(Error::PatchTooLarge {
            side,
            width: stack.width,
            height: stack.height,
        });
    }
    Ok(())
}

/// Positions of K extended patches; the first is the reference itself.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchGroup {
    pub positions: Vec<(usize, usize)>,
    /// Extended squared distances to the reference, same order.
    pub distances: Vec<f64>,
}

/// Sum of squared differences over all members, `None` once it reaches `bound`.
fn extended_distance(
    stack: &WarpedStack,
    c: usize,
    p: (usize, usize),
    p_src: &[usize],
    q: (usize, usize),
    side: usize,
    bound: f64,
) -> Option<f64> {
    let w = stack.width;
    let mut d = 0.0;
    for (n, &sp) in p_src.iter().enumerate() {
        let sq = stack.source(n, q.0, q.1, side);
        let a = &stack.planes[c][sp];
        let b = &stack.planes[c][sq];
        for r in 0..side {
            let ra = &a[(p.1 + r) * w + p.0..(p.1 + r) * w + p.0 + side];
            let rb = &b[(q.1 + r) * w + q.0..(q.1 + r) * w + q.0 + side];
            d += ra.iter().zip(rb).map(|(u, v)| (u - v) * (u - v)).sum::<f64>();
        }
        if d >= bound {
            return None;
        }
    }
    Some(d)
}

/// The reference plus the `k - 1` other extended patches closest to it in
/// the search window (distances on channel 0). Ties go to the earlier
/// candidate in row-major order.
pub fn find_group(stack: &WarpedStack, x: usize, y: usize, side: usize, k: usize, search_radius: usize) -> Result<PatchGroup> {
    check_window(stack, x, y, side)?;
    let p_src: Vec<usize> = (0..stack.len()).map(|n| stack.source(n, x, y, side)).collect();
    let x0 = x.saturating_sub(search_radius);
    let x1 = (x + search_radius).min(stack.width - side);
    let y0 = y.saturating_sub(search_radius);
    let y1 = (y + search_radius).min(stack.height - side);
    let others = k.saturating_sub(1);
    // sorted by (distance, scan order)
    let mut best: Vec<(f64, usize, (usize, usize))> = Vec::with_capacity(others + 1);
    let mut order = 0;
    for qy in y0..=y1 {
        for qx in x0..=x1 {
            if (qx, qy) == (x, y) {
                continue;
            }
            order += 1;
            if others == 0 {
                continue;
            }
            let bound = if best.len() == others { best[others - 1].0 } else { f64::INFINITY };
            if let Some(d) = extended_distance(stack, 0, (x, y), &p_src, (qx, qy), side, bound) {
                let at = best.partition_point(|e| e.0 <= d);
                best.insert(at, (d, order, (qx, qy)));
                best.truncate(others);
            }
        }
    }
    let mut positions = vec![(x, y)];
    let mut distances = vec![0.0];
    for (d, _, q) in best {
        positions.push(q);
        distances.push(d);
    }
    Ok(PatchGroup { positions, distances })
}

/// All K·M 2D patches of a group for one channel, grouped by extended patch.
pub fn flatten_group(stack: &WarpedStack, group: &PatchGroup, channel: usize, side: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(group.positions.len() * stack.len());
    for &(x, y) in &group.positions {
        for n in 0..stack.len() {
            let mut v = Vec::with_capacity(side * side);
            stack.window(channel, stack.source(n, x, y, side), x, y, side, &mut v);
            out.push(v);
        }
    }
    out
}

/// Principal-value thresholding: directions whose standard deviation over
/// the group is below `tau * sigma` are removed from every patch.
pub fn pca_denoise_group(patches: &[Vec<f64>], sigma: f64, tau: f64) -> Result<Vec<Vec<f64>>> {
    use nalgebra::{DMatrix, SymmetricEigen};
    let n = patches.len();
    if n == 0 {
        return Err(Error::InvalidArgument("empty patch group".into()));
    }
    let d = patches[0].len();
    if patches.iter().any(|p| p.len() != d) {
        return Err(Error::InvalidArgument("patches of different sizes".into()));
    }
    let mut mean = vec![0.0; d];
    for p in patches {
        for (m, v) in mean.iter_mut().zip(p) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let centered = DMatrix::from_fn(n, d, |i, j| patches[i][j] - mean[j]);
    if centered.iter().all(|&v| v == 0.0) {
        return Ok(patches.to_vec());
    }
    let cov = centered.tr_mul(&centered) / n as f64;
    let eig = SymmetricEigen::new(cov);
    let thr = tau * sigma;
    let keep: Vec<usize> = (0..d).filter(|&i| eig.eigenvalues[i].max(0.0).sqrt() >= thr).collect();
    if keep.len() == d {
        return Ok(patches.to_vec());
    }
    let mut out = vec![mean.clone(); n];
    if keep.is_empty() {
        return Ok(out);
    }
    let basis = eig.eigenvectors.select_columns(&keep);
    let coef = &centered * &basis;
    let recon = coef * basis.transpose();
    for (i, o) in out.iter_mut().enumerate() {
        for (j, v) in o.iter_mut().enumerate() {
            *v += recon[(i, j)];
        }
    }
    Ok(out)
}

/// Reference patch origins along one axis: every `stride`, plus the last
/// position so that the border is covered.
pub fn grid_positions(len: usize, side: usize, stride: usize) -> Vec<usize> {
    let last = len - side;
    let mut v: Vec<usize> = (0..=last).step_by(stride).collect();
    if *v.last().unwrap() != last {
        v.push(last);
    }
    v
}

/// Denoises the reference frame of a stack (all channels, in the stack's
/// color space).
pub fn denoise_stack(stack: &WarpedStack, params: &DenoiseParams) -> Result<Image> {
    params.validate()?;
    let (w, h, ch) = stack.dims();
    let side = params.side;
    if side > w || side > h {
        return Err(Error::PatchTooLarge { side, width: w, height: h });
    }
    let m = stack.len();
    let k = params.effective_k(m);
    let tau = params.effective_tau(m);
    let refs: Vec<(usize, usize)> = grid_positions(h, side, params.stride)
        .into_iter()
        .flat_map(|y| grid_positions(w, side, params.stride).into_iter().map(move |x| (x, y)))
        .collect();

    let mut acc: Vec<Accumulator> = (0..ch).map(|_| Accumulator::new(w, h, 1)).collect();
    // bounded memory; aggregation stays in reference order
    for chunk in refs.chunks(32) {
        let results: Vec<(PatchGroup, Vec<Vec<Vec<f64>>>)> = chunk
            .par_iter()
            .map(|&(x, y)| {
                let group = find_group(stack, x, y, side, k, params.search_radius)?;
                let per_channel = (0..ch)
                    .map(|c| pca_denoise_group(&flatten_group(stack, &group, c, side), params.sigma, tau))
                    .collect::<Result<Vec<_>>>()?;
                Ok((group, per_channel))
            })
            .collect::<Result<_>>()?;
        for (group, per_channel) in results {
            for (c, patches) in per_channel.iter().enumerate() {
                for (i, patch) in patches.iter().enumerate() {
                    let (x, y) = group.positions[i / m];
                    acc[c].add_window(x, y, side, patch, 1.0);
                }
            }
        }
    }
    let planes: Vec<Image> = acc.iter().map(Accumulator::finalize).collect();
    Image::from_channels(&planes)
}

fn box3(img: &Image) -> Image {
    let (w, h, ch) = img.dims();
    Image::from_fn(w, h, ch, |x, y, c| {
        let mut s = 0.0;
        for dy in -1..=1 {
            for dx in -1..=1 {
                s += img.get_clamped(x as isize + dx, y as isize + dy, c);
            }
        }
        s / 9.0
    })
}

/// Frame indices of the temporal window around `k`.
pub fn temporal_window(len: usize, k: usize, radius: Option<usize>) -> std::ops::Range<usize> {
    match radius {
        None => 0..len,
        Some(r) => k.saturating_sub(r)..(k + r + 1).min(len),
    }
}

/// Registers the window frames onto frame `k` using channel 0 and builds the
/// aligned stack with occlusion masks. Channel 0 is taken to be the Y
/// component of data in `[0, range_hint]`, so its nominal range is twice
/// that. The color check of the masks runs on 3x3 box-filtered frames so
/// that isolated noise does not trigger it.
pub fn motion_compensate(seq: &Sequence, k: usize, params: &DenoiseParams, registration: &dyn Registration) -> Result<WarpedStack> {
    let window = temporal_window(seq.len(), k, params.temporal_radius);
    let reference = &seq[k];
    let ref_y = reference.channel(0);
    let ref_smooth = box3(reference);
    let (w, h, _) = reference.dims();
    let mut frames = Vec::with_capacity(window.len());
    let mut masks = Vec::with_capacity(window.len());
    for n in window.clone() {
        if n == k {
            frames.push(reference.clone());
            masks.push(OcclusionMask::empty(w, h));
            continue;
        }
        let flow = registration.register(&ref_y, &seq[n].channel(0), Some((0.0, 2.0 * reference.range_hint)))?;
        let warped = warp(&seq[n], &flow)?;
        let mask = occlusion_mask(&flow, &ref_smooth, &box3(&warped), params.tau_div, params.tau_color * params.sigma)?;
        frames.push(warped);
        masks.push(mask);
    }
    WarpedStack::new(&frames, &masks, k - window.start)
}

/// Denoises frame `k` of a stabilized 4-channel sequence.
pub fn denoise_frame(seq: &Sequence, k: usize, params: &DenoiseParams, registration: &dyn Registration) -> Result<Image> {
    let transform = ColorTransform::default();
    let yuvw = Sequence::new(seq.frames().iter().map(|f| transform.forward(f)).collect::<Result<_>>()?)?;
    let stack = motion_compensate(&yuvw, k, params, registration)?;
    let out = denoise_stack(&stack, params)?;
    Ok(transform.backward(&out)?.with_range(seq[k].range_hint))
}

/// Denoises every frame; frames are processed in parallel.
pub fn denoise_sequence(seq: &Sequence, params: &DenoiseParams, registration: &dyn Registration) -> Result<Sequence> {
    params.validate()?;
    if seq.dims().2 != 4 {
        return Err(Error::ChannelCount {
            expected: 4,
            got: seq.dims().2,
        });
    }
    let transform = ColorTransform::default();
    let yuvw = Sequence::new(seq.frames().iter().map(|f| transform.forward(f)).collect::<Result<_>>()?)?;
    let frames = (0..seq.len())
        .into_par_iter()
        .map(|k| {
            let stack = motion_compensate(&yuvw, k, params, registration)?;
            let out = denoise_stack(&stack, params)?;
            Ok(transform.backward(&out)?.with_range(seq[k].range_hint))
        })
        .collect::<Result<Vec<_>>>()?;
    Sequence::new(frames)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::TvL1;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn rand_frame(rng: &mut ChaCha8Rng, w: usize, h: usize, ch: usize) -> Image {
        Image::from_fn(w, h, ch, |_, _, _| rng.random_range(0..8) as f64)
    }

    #[test]
    fn static_stack_members_equal_base() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f = rand_frame(&mut rng, 12, 10, 2);
        let stack = WarpedStack::unoccluded(&vec![f.clone(); 3], 1).unwrap();
        let e = build_extended_patch(&stack, 1, 2, 3, 4).unwrap();
        assert_eq!(e.members.len(), 3);
        assert!(e.members.iter().all(|m| m == e.base(&stack)));
        let single = WarpedStack::unoccluded(std::slice::from_ref(&f), 0).unwrap();
        let e = build_extended_patch(&single, 0, 2, 3, 4).unwrap();
        assert_eq!(e.members.len(), 1);
        let p = crate::image::extract_patch(&f.channel(0), 2, 3, 4).unwrap();
        assert_eq!(e.members[0], p.values);
    }

    #[test]
    fn occluded_member_falls_back() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let frames: Vec<Image> = (0..3).map(|_| rand_frame(&mut rng, 12, 12, 1)).collect();
        let mut masks = vec![OcclusionMask::empty(12, 12); 3];
        masks[2].set(5, 5, true);
        let stack = WarpedStack::new(&frames, &masks, 0).unwrap();
        let e = build_extended_patch(&stack, 0, 3, 3, 4).unwrap();
        assert_eq!(e.members[2], e.members[0]);
        assert_ne!(e.members[1], e.members[0]);
        // window not touching the flagged pixel reads frame 2
        let e = build_extended_patch(&stack, 0, 6, 6, 4).unwrap();
        let p = crate::image::extract_patch(&frames[2], 6, 6, 4).unwrap();
        assert_eq!(e.members[2], p.values);
    }

    #[test]
    fn k1_is_reference_alone() {
        let f = Image::filled(16, 16, 1, 3.0);
        let stack = WarpedStack::unoccluded(&[f], 0).unwrap();
        let g = find_group(&stack, 5, 5, 4, 1, 5).unwrap();
        assert_eq!(g.positions, vec![(5, 5)]);
    }

    #[test]
    fn identical_frames_scale_distance() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = rand_frame(&mut rng, 16, 16, 1);
        let one = WarpedStack::unoccluded(std::slice::from_ref(&f), 0).unwrap();
        let three = WarpedStack::unoccluded(&vec![f; 3], 0).unwrap();
        let g1 = find_group(&one, 6, 6, 4, 6, 4).unwrap();
        let g3 = find_group(&three, 6, 6, 4, 6, 4).unwrap();
        assert_eq!(g1.positions, g3.positions);
        for (a, b) in g1.distances.iter().zip(&g3.distances) {
            assert_eq!(3.0 * a, *b);
        }
    }

    /// Exhaustive scan: all distances computed in full, then sorted stably.
    fn brute_force(stack: &WarpedStack, x: usize, y: usize, side: usize, k: usize, r: usize) -> Vec<(usize, usize)> {
        let (w, h, _) = stack.dims();
        let p = build_extended_patch(stack, 0, x, y, side).unwrap();
        let mut cands = Vec::new();
        for qy in 0..=h - side {
            for qx in 0..=w - side {
                if (qx, qy) == (x, y) || qx.abs_diff(x) > r || qy.abs_diff(y) > r {
                    continue;
                }
                let q = build_extended_patch(stack, 0, qx, qy, side).unwrap();
                let d: f64 = p
                    .members
                    .iter()
                    .zip(&q.members)
                    .flat_map(|(a, b)| a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)))
                    .sum();
                cands.push((d, (qx, qy)));
            }
        }
        cands.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut out = vec![(x, y)];
        out.extend(cands.iter().take(k - 1).map(|c| c.1));
        out
    }

    #[test]
    fn selection_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for trial in 0..20 {
            let frames: Vec<Image> = (0..3).map(|_| rand_frame(&mut rng, 16, 16, 1)).collect();
            let mut masks = vec![OcclusionMask::empty(16, 16); 3];
            if trial % 2 == 0 {
                masks[1].set(rng.random_range(0..16), rng.random_range(0..16), true);
            }
            let stack = WarpedStack::new(&frames, &masks, 1).unwrap();
            for _ in 0..5 {
                let (x, y) = (rng.random_range(0..=12), rng.random_range(0..=12));
                let r = rng.random_range(2..10);
                let g = find_group(&stack, x, y, 4, 4, r).unwrap();
                assert_eq!(g.positions, brute_force(&stack, x, y, 4, 4, r));
            }
        }
    }

    #[test]
    fn fewer_candidates_than_k() {
        let f = Image::filled(5, 5, 1, 1.0);
        let stack = WarpedStack::unoccluded(&[f], 0).unwrap();
        let g = find_group(&stack, 0, 0, 4, 10, 3).unwrap();
        assert_eq!(g.positions.len(), 4);
    }

    #[test]
    fn pca_toy_group() {
        let g = vec![vec![1.0, 0.0], vec![-1.0, 0.0], vec![0.0, 0.0]];
        let out = pca_denoise_group(&g, 1e-3, 1.0).unwrap();
        for (a, b) in out.iter().flatten().zip(g.iter().flatten()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
        // principal std along (1,0) is sqrt(2/3)
        let out = pca_denoise_group(&g, (2.0f64 / 3.0).sqrt() + 1e-6, 1.0).unwrap();
        for o in out {
            assert_abs_diff_eq!(o[0], 0.0, epsilon = 1e-12);
            assert_abs_diff_eq!(o[1], 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn pca_identical_and_collapsed() {
        let g = vec![vec![3.0, 1.0, 2.0]; 5];
        assert_eq!(pca_denoise_group(&g, 10.0, 1.0).unwrap(), g);
        let g = vec![vec![1.0, 2.0, 0.0], vec![2.0, 0.0, 1.0], vec![0.0, 1.0, 5.0]];
        let out = pca_denoise_group(&g, 1e6, 1.0).unwrap();
        for o in out {
            assert_abs_diff_eq!(o[0], 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(o[1], 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(o[2], 2.0, epsilon = 1e-12);
        }
        assert!(pca_denoise_group(&[], 1.0, 1.0).is_err());
    }

    proptest! {
        #[test]
        fn pca_preserves_mean_and_contracts(
            vals in proptest::collection::vec(-50.0f64..50.0, 12 * 6),
            sigma in 0.0f64..20.0,
        ) {
            let g: Vec<Vec<f64>> = vals.chunks(6).map(<[f64]>::to_vec).collect();
            let out = pca_denoise_group(&g, sigma, 1.0).unwrap();
            for j in 0..6 {
                let m_in: f64 = g.iter().map(|p| p[j]).sum::<f64>() / 12.0;
                let m_out: f64 = out.iter().map(|p| p[j]).sum::<f64>() / 12.0;
                prop_assert!((m_in - m_out).abs() < 1e-9);
            }
            let mean: Vec<f64> = (0..6).map(|j| g.iter().map(|p| p[j]).sum::<f64>() / 12.0).collect();
            let energy = |s: &[Vec<f64>]| -> f64 {
                s.iter().flat_map(|p| p.iter().zip(&mean).map(|(a, b)| (a - b) * (a - b))).sum()
            };
            prop_assert!(energy(&out) <= energy(&g) + 1e-9);
        }
    }

    #[test]
    fn effective_parameters() {
        let p = DenoiseParams::default();
        assert_eq!(p.effective_k(8), 16);
        assert!(p.effective_k(2) * 2 > 64);
        assert_abs_diff_eq!(p.effective_tau(8), 1.1 * (1.0 + 0.5f64.sqrt()), epsilon = 1e-12);
        let fixed = DenoiseParams { tau: Some(1.0), ..p };
        assert_eq!(fixed.effective_tau(8), 1.0);
        assert_eq!(grid_positions(64, 8, 4).len(), 15);
        assert_eq!(grid_positions(10, 8, 4), vec![0, 2]);
    }

    #[test]
    fn noiseless_static_sequence_is_kept() {
        let f = Image::from_fn(24, 24, 4, |x, y, c| (x as f64 * 0.7).sin() * 20.0 + (y * c) as f64);
        let seq = Sequence::new(vec![f.clone(); 4]).unwrap();
        let p = DenoiseParams { side: 4, k: 8, search_radius: 6, stride: 2, sigma: 1e-9, ..Default::default() };
        let out = denoise_frame(&seq, 1, &p, &TvL1::default()).unwrap();
        for (a, b) in out.data().iter().zip(f.data()) {
            assert!((a - b).abs() < 1e-6, "{a} {b}");
        }
    }

    #[test]
    fn flat_noise_is_removed() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let frames: Vec<Image> = (0..8)
            .map(|_| Image::from_fn(64, 64, 4, |_, _, _| { let z: f64 = StandardNormal.sample(&mut rng); 10.0 + z }))
            .collect();
        let seq = Sequence::new(frames).unwrap();
        let p = DenoiseParams { sigma: 1.0, ..Default::default() };
        let out = denoise_frame(&seq, 4, &p, &TvL1::default()).unwrap();
        let n = out.data().len() as f64;
        let mean = out.data().iter().sum::<f64>() / n;
        let std = (out.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!(std < 0.15, "residual std {std}");
    }
}
