//! Heatmap and line-plot rasters written as binary PPM or PNG.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use lrplab::Tensor;

use crate::config::ImageFormats;
use crate::error::{CliError, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Rgb {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

/// Diverging map: −1 blue, 0 white, +1 red.
pub fn diverging(v: f32) -> [u8; 3] {
    let v = v.clamp(-1.0, 1.0);
    let fade = |t: f32| (255.0 * (1.0 - t.abs())).round() as u8;
    if v >= 0.0 {
        [255, fade(v), fade(v)]
    } else {
        [fade(v), fade(v), 255]
    }
}

impl Rgb {
    pub fn new(width: usize, height: usize, fill: [u8; 3]) -> Self {
        Rgb {
            width,
            height,
            pixels: fill.repeat(width * height),
        }
    }

    pub fn put(&mut self, x: i64, y: i64, c: [u8; 3]) {
        if x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height {
            let i = 3 * (y as usize * self.width + x as usize);
            self.pixels[i..i + 3].copy_from_slice(&c);
        }
    }

    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        let i = 3 * (y * self.width + x);
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    /// Bresenham segment.
    pub fn line(&mut self, (x0, y0): (i64, i64), (x1, y1): (i64, i64), c: [u8; 3]) {
        let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
        let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
        let (mut x, mut y, mut err) = (x0, y0, dx + dy);
        loop {
            self.put(x, y, c);
            if x == x1 && y == y1 {
                break;
            }
            let e2 = 2 * err;
            if e2 >= dy {
                err += dy;
                x += sx;
            }
            if e2 <= dx {
                err += dx;
                y += sy;
            }
        }
    }

    pub fn ppm_bytes(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn write_ppm(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.ppm_bytes()).map_err(|e| CliError::io(path, e))
    }

    pub fn write_png(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| CliError::io(path, e))?;
        let mut w = BufWriter::new(file);
        let mut enc = png::Encoder::new(&mut w, self.width as u32, self.height as u32);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let to_io = |e: png::EncodingError| CliError::io(path, std::io::Error::other(e));
        let mut writer = enc.write_header().map_err(to_io)?;
        writer.write_image_data(&self.pixels).map_err(to_io)?;
        writer.finish().map_err(to_io)?;
        w.flush().map_err(|e| CliError::io(path, e))
    }

    /// Writes `<stem>.ppm` and/or `<stem>.png`; returns the paths written.
    pub fn save(&self, dir: &Path, stem: &str, formats: ImageFormats) -> Result<Vec<std::path::PathBuf>> {
        let mut written = Vec::new();
        if formats.ppm {
            let p = dir.join(format!("{stem}.ppm"));
            self.write_ppm(&p)?;
            written.push(p);
        }
        if formats.png {
            let p = dir.join(format!("{stem}.png"));
            self.write_png(&p)?;
            written.push(p);
        }
        Ok(written)
    }
}

/// An `H×W` heatmap in `[-1, 1]` enlarged by an integer factor so small
/// images stay legible.
pub fn render_heatmap(h: &Tensor) -> Result<Rgb> {
    let [rows, cols] = match *h.shape() {
        [r, c] => [r, c],
        _ => return Err(CliError::format(format!("heatmap must be 2-D, got {:?}", h.shape()))),
    };
    let k = (140 / cols.max(1)).max(1);
    let mut img = Rgb::new(cols * k, rows * k, [255; 3]);
    for y in 0..rows * k {
        for x in 0..cols * k {
            img.put(x as i64, y as i64, diverging(h.data()[(y / k) * cols + x / k]));
        }
    }
    Ok(img)
}

const PLOT_W: usize = 640;
const PLOT_H: usize = 360;
const MARGIN: i64 = 30;
const DATA: [u8; 3] = [200, 30, 30];
const FIT: [u8; 3] = [30, 60, 200];
const AXIS: [u8; 3] = [0, 0, 0];

/// Line plot of `points` with the least-squares line `y = mean + slope·(x − x̄)`
/// overlaid when a slope is given.
pub fn line_plot(points: &[(f64, f64)], slope: Option<f64>) -> Rgb {
    let mut img = Rgb::new(PLOT_W, PLOT_H, [255; 3]);
    let (x0, y0, x1, y1) = (MARGIN, PLOT_H as i64 - MARGIN, PLOT_W as i64 - MARGIN, MARGIN);
    img.line((x0, y0), (x1, y0), AXIS);
    img.line((x0, y0), (x0, y1), AXIS);
    if points.is_empty() {
        return img;
    }
    let (mut xmin, mut xmax) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut ymin, mut ymax) = (f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in points {
        xmin = xmin.min(x);
        xmax = xmax.max(x);
        ymin = ymin.min(y);
        ymax = ymax.max(y);
    }
    let pad = ((ymax - ymin) * 0.05).max(1e-12);
    let (ymin, ymax) = (ymin - pad, ymax + pad);
    let xspan = (xmax - xmin).max(1e-12);
    let px = |x: f64| x0 + ((x - xmin) / xspan * (x1 - x0) as f64).round() as i64;
    let py = |y: f64| y0 - ((y - ymin) / (ymax - ymin) * (y0 - y1) as f64).round() as i64;
    if let Some(s) = slope {
        let n = points.len() as f64;
        let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
        let my = points.iter().map(|p| p.1).sum::<f64>() / n;
        let at = |x: f64| my + s * (x - mx);
        img.line((px(xmin), py(at(xmin))), (px(xmax), py(at(xmax))), FIT);
    }
    for w in points.windows(2) {
        img.line((px(w[0].0), py(w[0].1)), (px(w[1].0), py(w[1].1)), DATA);
    }
    for &(x, y) in points {
        for d in -2..=2 {
            img.put(px(x) + d, py(y), DATA);
            img.put(px(x), py(y) + d, DATA);
        }
    }
    img
}
