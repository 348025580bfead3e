//! TV-L1 optical flow, bicubic backward warping and occlusion detection.
//!
//! The flow solver is the duality-based TV-L1 scheme of Zach, Pock and
//! Bischof in its common coarse-to-fine formulation (Sánchez, Meinhardt-Llopis
//! and Facciolo). A flow `w` from `src` to `dst` satisfies
//! `dst(x + w(x)) ≈ src(x)`, so `warp(dst, w)` is aligned with `src`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;

/// Dense displacement field, `u` horizontal and `v` vertical, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    width: usize,
    height: usize,
    u: Vec<f64>,
    v: Vec<f64>,
}

impl FlowField {
    pub fn new(width: usize, height: usize, u: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        if u.len() != width * height || v.len() != width * height {
            return Err(Error::DataLength {
                width,
                height,
                channels: 2,
                got: u.len() + v.len(),
            });
        }
        if let Some(i) = u.iter().chain(&v).position(|x| !x.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self { width, height, u, v })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self::constant(width, height, 0.0, 0.0)
    }

    pub fn constant(width: usize, height: usize, u: f64, v: f64) -> Self {
        Self {
            width,
            height,
            u: vec![u; width * height],
            v: vec![v; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> (f64, f64)) -> Self {
        let mut u = Vec::with_capacity(width * height);
        let mut v = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                let (a, b) = f(x, y);
                u.push(a);
                v.push(b);
            }
        }
        Self { width, height, u, v }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    pub fn v(&self) -> &[f64] {
        &self.v
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> (f64, f64) {
        let i = y * self.width + x;
        (self.u[i], self.v[i])
    }

    pub fn mean(&self) -> (f64, f64) {
        let n = self.u.len().max(1) as f64;
        (self.u.iter().sum::<f64>() / n, self.v.iter().sum::<f64>() / n)
    }

    fn check_dims(&self, img: &Image) -> Result<()> {
        if (img.width(), img.height()) != (self.width, self.height) {
            return Err(Error::DimensionMismatch {
                expected: (self.width, self.height, 2),
                got: img.dims(),
            });
        }
        Ok(())
    }

    /// Middlebury `.flo` layout: magic 202021.25, width, height, then
    /// interleaved little-endian `f32` pairs.
    pub fn to_flo_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + 8 * self.u.len());
        out.extend_from_slice(&FLO_MAGIC.to_le_bytes());
        out.extend_from_slice(&(self.width as i32).to_le_bytes());
        out.extend_from_slice(&(self.height as i32).to_le_bytes());
        for (a, b) in self.u.iter().zip(&self.v) {
            out.extend_from_slice(&(*a as f32).to_le_bytes());
            out.extend_from_slice(&(*b as f32).to_le_bytes());
        }
        out
    }

    pub fn from_flo_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let bad = |reason: &str| Error::Format {
            path: path.to_path_buf(),
            reason: reason.into(),
        };
        let word = |i: usize| -> [u8; 4] { bytes[4 * i..4 * i + 4].try_into().unwrap() };
        if bytes.len() < 12 {
            return Err(bad("truncated header"));
        }
        if f32::from_le_bytes(word(0)) != FLO_MAGIC {
            return Err(bad("bad magic"));
        }
        let w = i32::from_le_bytes(word(1));
        let h = i32::from_le_bytes(word(2));
        if w <= 0 || h <= 0 {
            return Err(bad("bad dimensions"));
        }
        let (w, h) = (w as usize, h as usize);
        let need = w.checked_mul(h).and_then(|n| n.checked_mul(8)).and_then(|n| n.checked_add(12));
        if need.is_none_or(|n| bytes.len() < n) {
            return Err(bad("truncated data"));
        }
        let mut u = Vec::with_capacity(w * h);
        let mut v = Vec::with_capacity(w * h);
        for i in 0..w * h {
            u.push(f32::from_le_bytes(word(3 + 2 * i)) as f64);
            v.push(f32::from_le_bytes(word(4 + 2 * i)) as f64);
        }
        Self::new(w, h, u, v)
    }

    pub fn write_flo(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_flo_bytes())?;
        Ok(())
    }

    pub fn read_flo(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_flo_bytes(&std::fs::read(path)?, path)
    }
}

const FLO_MAGIC: f32 = 202021.25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowParams {
    /// Weight of the data term.
    pub lambda: f64,
    /// Coupling between the primal variable and its auxiliary copy.
    pub theta: f64,
    /// Dual time step.
    pub tau: f64,
    pub warps: usize,
    pub pyramid_scales: usize,
    pub scale_factor: f64,
    pub inner_iterations: usize,
    /// Stopping threshold on the per-pixel update.
    pub epsilon: f64,
}

impl Default for FlowParams {
    fn default() -> Self {
        Self {
            lambda: 0.15,
            theta: 0.3,
            tau: 0.25,
            warps: 5,
            pyramid_scales: 5,
            scale_factor: 0.5,
            inner_iterations: 50,
            epsilon: 0.01,
        }
    }
}

impl FlowParams {
    pub fn validate(&self) -> Result<()> {
        let positive = self.lambda > 0.0
            && self.theta > 0.0
            && self.tau > 0.0
            && self.epsilon > 0.0
            && self.warps > 0
            && self.pyramid_scales > 0
            && self.inner_iterations > 0;
        if !positive || !(self.scale_factor > 0.0 && self.scale_factor < 1.0) {
            return Err(Error::InvalidArgument(format!("bad flow parameters {self:?}")));
        }
        Ok(())
    }
}

/// Plain single-channel buffer used inside the solver.
#[derive(Clone)]
struct Grid {
    w: usize,
    h: usize,
    d: Vec<f64>,
}

impl Grid {
    fn zeros(w: usize, h: usize) -> Self {
        Self { w, h, d: vec![0.0; w * h] }
    }

    #[inline]
    fn clamped(&self, x: isize, y: isize) -> f64 {
        let x = x.clamp(0, self.w as isize - 1) as usize;
        let y = y.clamp(0, self.h as isize - 1) as usize;
        self.d[y * self.w + x]
    }
}

#[inline]
fn cubic(p: [f64; 4], t: f64) -> f64 {
    // Keys kernel, a = -0.5
    p[1] + 0.5 * t * (p[2] - p[0] + t * (2.0 * p[0] - 5.0 * p[1] + 4.0 * p[2] - p[3] + t * (3.0 * (p[1] - p[2]) + p[3] - p[0])))
}

fn bicubic_grid(g: &Grid, x: f64, y: f64) -> f64 {
    let x0 = x.floor();
    let y0 = y.floor();
    let (tx, ty) = (x - x0, y - y0);
    let (xi, yi) = (x0 as isize, y0 as isize);
    let mut col = [0.0; 4];
    for (j, c) in col.iter_mut().enumerate() {
        let yy = yi - 1 + j as isize;
        let row = [
            g.clamped(xi - 1, yy),
            g.clamped(xi, yy),
            g.clamped(xi + 1, yy),
            g.clamped(xi + 2, yy),
        ];
        *c = cubic(row, tx);
    }
    cubic(col, ty)
}

/// Bicubic sample of channel `c` at a real position, border-clamped.
pub fn bicubic_sample(img: &Image, x: f64, y: f64, c: usize) -> f64 {
    let x0 = x.floor();
    let y0 = y.floor();
    let (tx, ty) = (x - x0, y - y0);
    let (xi, yi) = (x0 as isize, y0 as isize);
    let mut col = [0.0; 4];
    for (j, v) in col.iter_mut().enumerate() {
        let yy = yi - 1 + j as isize;
        let row = [
            img.get_clamped(xi - 1, yy, c),
            img.get_clamped(xi, yy, c),
            img.get_clamped(xi + 1, yy, c),
            img.get_clamped(xi + 2, yy, c),
        ];
        *v = cubic(row, tx);
    }
    cubic(col, ty)
}

/// Backward warp: `out(x) = img(x + flow(x))`, bicubic, border-clamped.
pub fn warp(img: &Image, flow: &FlowField) -> Result<Image> {
    flow.check_dims(img)?;
    let ch = img.channels();
    let mut out = Image::zeros(img.width(), img.height(), ch).with_range(img.range_hint);
    for y in 0..img.height() {
        for x in 0..img.width() {
            let (u, v) = flow.at(x, y);
            if u == 0.0 && v == 0.0 {
                for c in 0..ch {
                    out.set(x, y, c, img.get(x, y, c));
                }
                continue;
            }
            for c in 0..ch {
                out.set(x, y, c, bicubic_sample(img, x as f64 + u, y as f64 + v, c));
            }
        }
    }
    Ok(out)
}

fn gaussian_smooth(g: &Grid, sigma: f64) -> Grid {
    let r = (3.0 * sigma).ceil().max(1.0) as isize;
    let k: Vec<f64> = (-r..=r).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = k.iter().sum();
    let k: Vec<f64> = k.iter().map(|v| v / s).collect();
    let reflect = |i: isize, n: usize| -> usize {
        let n = n as isize;
        let mut i = i;
        if n == 1 {
            return 0;
        }
        loop {
            if i < 0 {
                i = -i - 1;
            } else if i >= n {
                i = 2 * n - i - 1;
            } else {
                return i as usize;
            }
        }
    };
    let mut tmp = Grid::zeros(g.w, g.h);
    for y in 0..g.h {
        for x in 0..g.w {
            let mut acc = 0.0;
            for (j, kv) in k.iter().enumerate() {
                acc += kv * g.d[y * g.w + reflect(x as isize + j as isize - r, g.w)];
            }
            tmp.d[y * g.w + x] = acc;
        }
    }
    let mut out = Grid::zeros(g.w, g.h);
    for y in 0..g.h {
        for x in 0..g.w {
            let mut acc = 0.0;
            for (j, kv) in k.iter().enumerate() {
                acc += kv * tmp.d[reflect(y as isize + j as isize - r, g.h) * g.w + x];
            }
            out.d[y * g.w + x] = acc;
        }
    }
    out
}

fn zoom_size(n: usize, factor: f64) -> usize {
    ((n as f64 * factor + 0.5) as usize).max(1)
}

fn zoom_out(g: &Grid, factor: f64) -> Grid {
    let sigma = 0.6 * (1.0 / (factor * factor) - 1.0).sqrt();
    let s = gaussian_smooth(g, sigma);
    let (w, h) = (zoom_size(g.w, factor), zoom_size(g.h, factor));
    let mut out = Grid::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            out.d[y * w + x] = bicubic_grid(&s, x as f64 / factor, y as f64 / factor);
        }
    }
    out
}

fn zoom_in(g: &Grid, w: usize, h: usize) -> Grid {
    let (fx, fy) = (g.w as f64 / w as f64, g.h as f64 / h as f64);
    let mut out = Grid::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            out.d[y * w + x] = bicubic_grid(g, x as f64 * fx, y as f64 * fy);
        }
    }
    out
}

fn centered_gradient(g: &Grid) -> (Grid, Grid) {
    let mut gx = Grid::zeros(g.w, g.h);
    let mut gy = Grid::zeros(g.w, g.h);
    for y in 0..g.h as isize {
        for x in 0..g.w as isize {
            let i = y as usize * g.w + x as usize;
            gx.d[i] = 0.5 * (g.clamped(x + 1, y) - g.clamped(x - 1, y));
            gy.d[i] = 0.5 * (g.clamped(x, y + 1) - g.clamped(x, y - 1));
        }
    }
    (gx, gy)
}

/// Forward differences, zero on the last column / row.
fn forward_gradient(f: &[f64], w: usize, h: usize, fx: &mut [f64], fy: &mut [f64]) {
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            fx[i] = if x + 1 < w { f[i + 1] - f[i] } else { 0.0 };
            fy[i] = if y + 1 < h { f[i + w] - f[i] } else { 0.0 };
        }
    }
}

/// Backward-difference divergence, the negative adjoint of `forward_gradient`.
fn dual_divergence(px: &[f64], py: &[f64], w: usize, h: usize, out: &mut [f64]) {
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let ax = if x + 1 < w { px[i] } else { 0.0 };
            let bx = if x > 0 { px[i - 1] } else { 0.0 };
            let ay = if y + 1 < h { py[i] } else { 0.0 };
            let by = if y > 0 { py[i - w] } else { 0.0 };
            out[i] = ax - bx + ay - by;
        }
    }
}

const GRAD_IS_ZERO: f64 = 1e-10;

fn tvl1_scale(i0: &Grid, i1: &Grid, u1: &mut [f64], u2: &mut [f64], p: &FlowParams) {
    let (w, h) = (i0.w, i0.h);
    let n = w * h;
    let l_t = p.lambda * p.theta;
    let taut = p.tau / p.theta;
    let (i1x, i1y) = centered_gradient(i1);

    let mut p11 = vec![0.0; n];
    let mut p12 = vec![0.0; n];
    let mut p21 = vec![0.0; n];
    let mut p22 = vec![0.0; n];
    let mut v1 = vec![0.0; n];
    let mut v2 = vec![0.0; n];
    let mut div1 = vec![0.0; n];
    let mut div2 = vec![0.0; n];
    let mut u1x = vec![0.0; n];
    let mut u1y = vec![0.0; n];
    let mut u2x = vec![0.0; n];
    let mut u2y = vec![0.0; n];
    let mut i1w = vec![0.0; n];
    let mut i1wx = vec![0.0; n];
    let mut i1wy = vec![0.0; n];
    let mut grad = vec![0.0; n];
    let mut rho_c = vec![0.0; n];

    for _ in 0..p.warps {
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                let (sx, sy) = (x as f64 + u1[i], y as f64 + u2[i]);
                i1w[i] = bicubic_grid(i1, sx, sy);
                i1wx[i] = bicubic_grid(&i1x, sx, sy);
                i1wy[i] = bicubic_grid(&i1y, sx, sy);
                grad[i] = i1wx[i] * i1wx[i] + i1wy[i] * i1wy[i];
                rho_c[i] = i1w[i] - i1wx[i] * u1[i] - i1wy[i] * u2[i] - i0.d[i];
            }
        }
        let mut iter = 0;
        let mut error = f64::INFINITY;
        while error > p.epsilon * p.epsilon && iter < p.inner_iterations {
            iter += 1;
            for i in 0..n {
                let rho = rho_c[i] + i1wx[i] * u1[i] + i1wy[i] * u2[i];
                let (d1, d2) = if rho < -l_t * grad[i] {
                    (l_t * i1wx[i], l_t * i1wy[i])
                } else if rho > l_t * grad[i] {
                    (-l_t * i1wx[i], -l_t * i1wy[i])
                } else if grad[i] < GRAD_IS_ZERO {
                    (0.0, 0.0)
                } else {
                    let fi = -rho / grad[i];
                    (fi * i1wx[i], fi * i1wy[i])
                };
                v1[i] = u1[i] + d1;
                v2[i] = u2[i] + d2;
            }
            dual_divergence(&p11, &p12, w, h, &mut div1);
            dual_divergence(&p21, &p22, w, h, &mut div2);
            error = 0.0;
            for i in 0..n {
                let a = v1[i] + p.theta * div1[i];
                let b = v2[i] + p.theta * div2[i];
                error += (a - u1[i]).powi(2) + (b - u2[i]).powi(2);
                u1[i] = a;
                u2[i] = b;
            }
            error /= n as f64;
            forward_gradient(u1, w, h, &mut u1x, &mut u1y);
            forward_gradient(u2, w, h, &mut u2x, &mut u2y);
            for i in 0..n {
                let ng1 = 1.0 + taut * u1x[i].hypot(u1y[i]);
                let ng2 = 1.0 + taut * u2x[i].hypot(u2y[i]);
                p11[i] = (p11[i] + taut * u1x[i]) / ng1;
                p12[i] = (p12[i] + taut * u1y[i]) / ng1;
                p21[i] = (p21[i] + taut * u2x[i]) / ng2;
                p22[i] = (p22[i] + taut * u2y[i]) / ng2;
            }
        }
    }
}

fn to_gray(img: &Image) -> Vec<f64> {
    let ch = img.channels();
    if ch == 1 {
        return img.data().to_vec();
    }
    img.data().chunks_exact(ch).map(|p| p.iter().sum::<f64>() / ch as f64).collect()
}

/// Number of pyramid levels usable for a `w`x`h` image.
pub fn effective_scales(w: usize, h: usize, p: &FlowParams) -> usize {
    let diag = (w as f64).hypot(h as f64);
    let max = 1.0 + ((diag / 16.0).ln() / (1.0 / p.scale_factor).ln()).floor();
    (max.max(1.0) as usize).min(p.pyramid_scales)
}

/// TV-L1 flow from `src` to `dst`. Multi-channel inputs are averaged to gray.
/// Intensities are jointly mapped from their observed range to `[0, 255]`.
pub fn tvl1_flow(src: &Image, dst: &Image, p: &FlowParams) -> Result<FlowField> {
    tvl1_flow_in_range(src, dst, p, None)
}

/// Like [`tvl1_flow`], with an explicit intensity range mapped to `[0, 255]`
/// instead of the observed one. With the nominal range of the data, the
/// data term weight keeps its meaning on low-contrast frames, where the
/// observed range would stretch the noise to full contrast.
pub fn tvl1_flow_in_range(src: &Image, dst: &Image, p: &FlowParams, range: Option<(f64, f64)>) -> Result<FlowField> {
    p.validate()?;
    src.same_dims(dst)?;
    let (w, h) = (src.width(), src.height());
    let mut a = to_gray(src);
    let mut b = to_gray(dst);
    let (lo, hi) = range.unwrap_or_else(|| {
        a.iter()
            .chain(&b)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)))
    });
    if !(hi > lo) {
        return Ok(FlowField::zeros(w, h));
    }
    let k = 255.0 / (hi - lo);
    a.iter_mut().chain(b.iter_mut()).for_each(|v| *v = (*v - lo) * k);

    let scales = effective_scales(w, h, p);
    let mut i0s = vec![Grid { w, h, d: a }];
    let mut i1s = vec![Grid { w, h, d: b }];
    for s in 1..scales {
        let next0 = zoom_out(&i0s[s - 1], p.scale_factor);
        let next1 = zoom_out(&i1s[s - 1], p.scale_factor);
        i0s.push(next0);
        i1s.push(next1);
    }
    let last = scales - 1;
    let mut u1 = Grid::zeros(i0s[last].w, i0s[last].h);
    let mut u2 = u1.clone();
    for s in (0..scales).rev() {
        tvl1_scale(&i0s[s], &i1s[s], &mut u1.d, &mut u2.d, p);
        if s > 0 {
            let (nw, nh) = (i0s[s - 1].w, i0s[s - 1].h);
            let (fx, fy) = (nw as f64 / u1.w as f64, nh as f64 / u1.h as f64);
            u1 = zoom_in(&u1, nw, nh);
            u2 = zoom_in(&u2, nw, nh);
            u1.d.iter_mut().for_each(|v| *v *= fx);
            u2.d.iter_mut().for_each(|v| *v *= fy);
        }
    }
    FlowField::new(w, h, u1.d, u2.d)
}

/// Divergence of a flow by central differences, one-sided at the borders.
pub fn divergence(flow: &FlowField) -> Vec<f64> {
    let (w, h) = (flow.width, flow.height);
    let d = |f: &[f64], i: usize, pos: usize, len: usize, stride: usize| -> f64 {
        if len < 2 {
            0.0
        } else if pos == 0 {
            f[i + stride] - f[i]
        } else if pos == len - 1 {
            f[i] - f[i - stride]
        } else {
            0.5 * (f[i + stride] - f[i - stride])
        }
    };
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            out[i] = d(&flow.u, i, x, w, 1) + d(&flow.v, i, y, h, w);
        }
    }
    out
}

/// Per-pixel flags, `true` where the flow is unreliable.
#[derive(Debug, Clone, PartialEq)]
pub struct OcclusionMask {
    width: usize,
    height: usize,
    flags: Vec<bool>,
}

impl OcclusionMask {
    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            flags: vec![false; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.flags[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.flags[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.flags.iter().filter(|&&f| f).count()
    }

    /// Whether any pixel of the `side`x`side` window at `(x, y)` is flagged.
    pub fn any_in(&self, x: usize, y: usize, side: usize) -> bool {
        (y..y + side).any(|yy| self.flags[yy * self.width + x..yy * self.width + x + side].iter().any(|&f| f))
    }

    /// 0/1 image for dumping.
    pub fn to_image(&self) -> Image {
        Image::from_fn(self.width, self.height, 1, |x, y, _| self.get(x, y) as u8 as f64)
    }
}

/// Flags pixels where the flow compresses (`div < -tau_div`) or the warped
/// frame disagrees with the reference (channel-max absolute difference above
/// `tau_color`).
pub fn occlusion_mask(
    flow: &FlowField,
    reference: &Image,
    warped: &Image,
    tau_div: f64,
    tau_color: f64,
) -> Result<OcclusionMask> {
    flow.check_dims(reference)?;
    reference.same_dims(warped)?;
    let div = divergence(flow);
    let ch = reference.channels();
    let flags = reference
        .data()
        .chunks_exact(ch)
        .zip(warped.data().chunks_exact(ch))
        .zip(&div)
        .map(|((a, b), &d)| {
            let diff = a.iter().zip(b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
            d < -tau_div || diff > tau_color
        })
        .collect();
    Ok(OcclusionMask {
        width: flow.width,
        height: flow.height,
        flags,
    })
}

/// Motion estimation between two frames. `range` is the nominal intensity
/// range of the frames, when known.
pub trait Registration: Send + Sync {
    fn register(&self, src: &Image, dst: &Image, range: Option<(f64, f64)>) -> Result<FlowField>;
}

/// Dense TV-L1 flow.
#[derive(Debug, Clone, Default)]
pub struct TvL1(pub FlowParams);

impl Registration for TvL1 {
    fn register(&self, src: &Image, dst: &Image, range: Option<(f64, f64)>) -> Result<FlowField> {
        tvl1_flow_in_range(src, dst, &self.0, range)
    }
}

/// Single translation for the whole frame, the mean of the TV-L1 field.
#[derive(Debug, Clone, Default)]
pub struct GlobalShift(pub FlowParams);

impl Registration for GlobalShift {
    fn register(&self, src: &Image, dst: &Image, range: Option<(f64, f64)>) -> Result<FlowField> {
        let f = tvl1_flow_in_range(src, dst, &self.0, range)?;
        let (u, v) = f.mean();
        Ok(FlowField::constant(f.width, f.height, u, v))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegistrationKind {
    #[default]
    Tvl1,
    GlobalShift,
}

impl RegistrationKind {
    pub fn build(self, params: FlowParams) -> Box<dyn Registration> {
        match self {
            RegistrationKind::Tvl1 => Box::new(TvL1(params)),
            RegistrationKind::GlobalShift => Box::new(GlobalShift(params)),
        }
    }
}
