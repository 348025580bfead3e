//! Procedural test scenes. A scene is an analytic color function of the
//! plane, so translated frames are rendered exactly at any sub-pixel offset.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::image::{Image, Sequence};

#[derive(Debug, Clone, PartialEq)]
enum Layer {
    Disk { cx: f64, cy: f64, r: f64, color: [f64; 3] },
    Rect { x0: f64, y0: f64, x1: f64, y1: f64, color: [f64; 3] },
    Grating { fx: f64, fy: f64, phase: f64, amp: [f64; 3] },
}

/// Smooth background, sinusoidal gratings and sharp-edged shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    base: [f64; 3],
    slope: [[f64; 2]; 3],
    layers: Vec<Layer>,
}

/// A gray level plus a moderate tint: channels of natural colors are
/// strongly correlated.
fn random_color(rng: &mut ChaCha8Rng) -> [f64; 3] {
    let g = rng.random_range(40.0..215.0);
    [0; 3].map(|_| g + rng.random_range(-30.0..30.0))
}

impl Scene {
    /// A random scene covering roughly a `size` x `size` area.
    pub fn random(seed: u64, size: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let base = random_color(&mut rng);
        let slope = [0; 3].map(|_| [rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3)]);
        let mut layers = Vec::new();
        for _ in 0..rng.random_range(2..4) {
            let f = rng.random_range(0.05..0.45);
            let a = rng.random_range(0.0..std::f64::consts::PI);
            let amp = rng.random_range(5.0..30.0);
            layers.push(Layer::Grating {
                fx: f * a.cos(),
                fy: f * a.sin(),
                phase: rng.random_range(0.0..6.3),
                amp: [0; 3].map(|_| amp * rng.random_range(0.7..1.3)),
            });
        }
        for _ in 0..rng.random_range(6..12) {
            let color = random_color(&mut rng);
            if rng.random_bool(0.5) {
                layers.push(Layer::Disk {
                    cx: rng.random_range(0.0..size),
                    cy: rng.random_range(0.0..size),
                    r: rng.random_range(0.04..0.2) * size,
                    color,
                });
            } else {
                let (x0, y0) = (rng.random_range(-0.1..0.9) * size, rng.random_range(-0.1..0.9) * size);
                layers.push(Layer::Rect {
                    x0,
                    y0,
                    x1: x0 + rng.random_range(0.08..0.4) * size,
                    y1: y0 + rng.random_range(0.08..0.4) * size,
                    color,
                });
            }
        }
        Self { base, slope, layers }
    }

    /// Color at a point of the plane.
    pub fn color_at(&self, x: f64, y: f64) -> [f64; 3] {
        let mut c = [0, 1, 2].map(|i| self.base[i] + self.slope[i][0] * x + self.slope[i][1] * y);
        for layer in &self.layers {
            match *layer {
                Layer::Grating { fx, fy, phase, amp } => {
                    let s = (fx * x + fy * y + phase).sin();
                    for i in 0..3 {
                        c[i] += amp[i] * s;
                    }
                }
                Layer::Disk { cx, cy, r, color } => {
                    if (x - cx).powi(2) + (y - cy).powi(2) < r * r {
                        c = color;
                    }
                }
                Layer::Rect { x0, y0, x1, y1, color } => {
                    if x >= x0 && x < x1 && y >= y0 && y < y1 {
                        c = color;
                    }
                }
            }
        }
        c.map(|v| v.clamp(0.0, 255.0))
    }

    /// Renders the scene seen through a window whose top-left corner sits
    /// at `(ox, oy)`. Each pixel integrates its own area (3x3 subsamples),
    /// further blurred by a Gaussian optical spread of std `psf` pixels.
    pub fn render(&self, width: usize, height: usize, ox: f64, oy: f64, psf: f64) -> Image {
        const SUB: usize = 3;
        let reach = (3.0 * psf * SUB as f64).ceil() as isize;
        let mut taps = Vec::new();
        for j in -reach..SUB as isize + reach {
            for i in -reach..SUB as isize + reach {
                let (dx, dy) = ((i as f64 + 0.5) / SUB as f64, (j as f64 + 0.5) / SUB as f64);
                let w = if psf > 0.0 {
                    let ex = (dx - 0.5).abs();
                    let ey = (dy - 0.5).abs();
                    (-(ex * ex + ey * ey) / (2.0 * psf * psf)).exp()
                } else {
                    1.0
                };
                taps.push((dx, dy, w));
            }
        }
        let total: f64 = taps.iter().map(|t| t.2).sum();
        let mut img = Image::zeros(width, height, 3).with_range(255.0);
        for y in 0..height {
            for x in 0..width {
                let mut acc = [0.0; 3];
                for &(dx, dy, w) in &taps {
                    let c = self.color_at(ox + x as f64 + dx, oy + y as f64 + dy);
                    for i in 0..3 {
                        acc[i] += w * c[i];
                    }
                }
                for (i, a) in acc.iter().enumerate() {
                    img.set(x, y, i, a / total);
                }
            }
        }
        img
    }
}

/// Optical spread of [`synthetic_sequence`], in pixels.
pub const DEFAULT_PSF: f64 = 0.6;

/// `frames` views of a random scene; the camera moves by a random
/// sub-pixel velocity (up to `max_speed` px per frame) with a small jitter.
pub fn synthetic_sequence(seed: u64, width: usize, height: usize, frames: usize, max_speed: f64) -> Sequence {
    let scene = Scene::random(seed, width.max(height) as f64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let vx = rng.random_range(-max_speed..=max_speed);
    let vy = rng.random_range(-max_speed..=max_speed);
    let imgs = (0..frames)
        .map(|t| {
            let jx = rng.random_range(-0.2..0.2);
            let jy = rng.random_range(-0.2..0.2);
            scene.render(width, height, vx * t as f64 + jx, vy * t as f64 + jy, DEFAULT_PSF)
        })
        .collect();
    Sequence::new(imgs).expect("frames share dimensions")
}

/// Adds zero-mean Gaussian noise whose std at each sample is `sigma(value)`.
pub fn add_noise(img: &Image, sigma: impl Fn(f64) -> f64, rng: &mut ChaCha8Rng) -> Result<Image> {
    let mut out = img.clone();
    for v in out.data_mut() {
        let s = sigma(*v);
        let n = Normal::new(0.0, s).map_err(|_| Error::InvalidArgument(format!("bad noise std {s}")))?;
        *v += n.sample(rng);
    }
    Ok(out)
}
