//! Noise curve rendering: per-channel observations as dots, fitted models
//! as polylines, on a white canvas with axes.

use cfaseq::noise::{NoiseModel, NoiseObservation};
use image::{Rgb, RgbImage};

use crate::{CliError, Result};

const COLORS: [[u8; 3]; 4] = [[220, 40, 40], [40, 170, 40], [20, 100, 20], [40, 60, 220]];
const MARGIN: u32 = 30;

struct Frame {
    x0: f64,
    x1: f64,
    y1: f64,
    width: u32,
    height: u32,
}

impl Frame {
    fn to_px(&self, x: f64, y: f64) -> (f64, f64) {
        let w = (self.width - 2 * MARGIN) as f64;
        let h = (self.height - 2 * MARGIN) as f64;
        let px = MARGIN as f64 + (x - self.x0) / (self.x1 - self.x0) * w;
        let py = (self.height - MARGIN) as f64 - y / self.y1 * h;
        (px, py)
    }
}

fn put(img: &mut RgbImage, x: i64, y: i64, c: [u8; 3]) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, Rgb(c));
    }
}

fn line(img: &mut RgbImage, (ax, ay): (f64, f64), (bx, by): (f64, f64), c: [u8; 3]) {
    let steps = (bx - ax).abs().max((by - ay).abs()).ceil().max(1.0) as usize;
    for i in 0..=steps {
        let t = i as f64 / steps as f64;
        put(img, (ax + t * (bx - ax)).round() as i64, (ay + t * (by - ay)).round() as i64, c);
    }
}

pub fn render(obs: &[Vec<NoiseObservation>], model: Option<&NoiseModel>, width: u32, height: u32) -> Result<RgbImage> {
    if width < 4 * MARGIN || height < 4 * MARGIN {
        return Err(CliError::Plot(format!("canvas {width}x{height} too small")));
    }
    let all: Vec<&NoiseObservation> = obs.iter().flatten().collect();
    if all.is_empty() && model.is_none() {
        return Err(CliError::Plot("nothing to plot".into()));
    }
    let mut x0 = all.iter().map(|o| o.x).fold(f64::INFINITY, f64::min);
    let mut x1 = all.iter().map(|o| o.x).fold(f64::NEG_INFINITY, f64::max);
    let mut y1 = all.iter().map(|o| o.sigma).fold(0.0, f64::max);
    if let Some(m) = model {
        for ch in &m.channels {
            x0 = x0.min(ch.range.0);
            x1 = x1.max(ch.range.1);
            y1 = y1.max(ch.sigma(ch.range.0)).max(ch.sigma(ch.range.1)).max(ch.sigma(ch.breakpoint));
        }
    }
    if !(x1 > x0) {
        x0 -= 1.0;
        x1 += 1.0;
    }
    let frame = Frame { x0, x1, y1: if y1 > 0.0 { 1.1 * y1 } else { 1.0 }, width, height };

    let mut img = RgbImage::from_pixel(width, height, Rgb([255, 255, 255]));
    let axis = [0, 0, 0];
    let (ox, oy) = (MARGIN as f64, (height - MARGIN) as f64);
    line(&mut img, (ox, oy), ((width - MARGIN) as f64, oy), axis);
    line(&mut img, (ox, oy), (ox, MARGIN as f64), axis);
    for k in 1..=4 {
        let tx = ox + k as f64 * (width - 2 * MARGIN) as f64 / 4.0;
        let ty = oy - k as f64 * (height - 2 * MARGIN) as f64 / 4.0;
        line(&mut img, (tx, oy), (tx, oy + 4.0), axis);
        line(&mut img, (ox - 4.0, ty), (ox, ty), axis);
    }

    if let Some(m) = model {
        for (c, ch) in m.channels.iter().enumerate() {
            let color = COLORS[c % COLORS.len()];
            let n = 200;
            let pts: Vec<(f64, f64)> = (0..=n)
                .map(|i| {
                    let x = ch.range.0 + (ch.range.1 - ch.range.0) * i as f64 / n as f64;
                    frame.to_px(x, ch.sigma(x))
                })
                .collect();
            for w in pts.windows(2) {
                line(&mut img, w[0], w[1], color);
            }
        }
    }
    for (c, list) in obs.iter().enumerate() {
        let color = COLORS[c % COLORS.len()];
        for o in list {
            let (px, py) = frame.to_px(o.x, o.sigma);
            for dy in -2..=2 {
                for dx in -2..=2 {
                    put(&mut img, px.round() as i64 + dx, py.round() as i64 + dy, color);
                }
            }
        }
    }
    Ok(img)
}
