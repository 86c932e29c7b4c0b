//! Small deterministic PNG charts. Text needs a TrueType font; without one
//! the charts are drawn unlabelled (the CSVs beside them carry the values).

use std::path::Path;

use ab_glyph::{FontVec, PxScale};
use image::{Rgb, RgbImage};
use imageproc::drawing::{
    draw_filled_circle_mut, draw_filled_rect_mut, draw_hollow_rect_mut, draw_line_segment_mut, draw_text_mut, text_size,
};
use imageproc::rect::Rect;

const FONT_CANDIDATES: [&str; 5] = [
    "/usr/share/fonts/truetype/dejavu/DejaVuSans.ttf",
    "/usr/share/fonts/dejavu/DejaVuSans.ttf",
    "/usr/share/fonts/TTF/DejaVuSans.ttf",
    "/Library/Fonts/Arial Unicode.ttf",
    "C:\\Windows\\Fonts\\arial.ttf",
];

const PALETTE: [[u8; 3]; 10] = [
    [31, 119, 180],
    [255, 127, 14],
    [44, 160, 44],
    [214, 39, 40],
    [148, 103, 189],
    [140, 86, 75],
    [227, 119, 194],
    [127, 127, 127],
    [188, 189, 34],
    [23, 190, 207],
];

const WHITE: Rgb<u8> = Rgb([255, 255, 255]);
const BLACK: Rgb<u8> = Rgb([0, 0, 0]);
const GREY: Rgb<u8> = Rgb([220, 220, 220]);

/// The explicit font if given, else the first common system font found.
pub fn load_font(explicit: Option<&Path>) -> Option<FontVec> {
    let read = |p: &Path| std::fs::read(p).ok().and_then(|b| FontVec::try_from_vec(b).ok());
    match explicit {
        Some(p) => read(p),
        None => FONT_CANDIDATES.iter().find_map(|p| read(Path::new(p))),
    }
}

pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

struct Frame<'f> {
    img: RgbImage,
    font: Option<&'f FontVec>,
    left: i32,
    top: i32,
    right: i32,
    bottom: i32,
    y_range: (f64, f64),
}

fn fmt_tick(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-3..1e5).contains(&a) {
        format!("{v:.2e}")
    } else if a >= 100.0 {
        format!("{v:.0}")
    } else if a >= 1.0 {
        format!("{v:.2}")
    } else {
        format!("{v:.4}")
    }
}

/// Pads a degenerate or tight range so points never sit on the border.
fn padded(lo: f64, hi: f64) -> (f64, f64) {
    if !(lo.is_finite() && hi.is_finite()) {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        let d = lo.abs().max(1.0) * 0.1;
        return (lo - d, hi + d);
    }
    let d = (hi - lo) * 0.05;
    (lo - d, hi + d)
}

impl<'f> Frame<'f> {
    fn new(width: u32, height: u32, font: Option<&'f FontVec>, y_range: (f64, f64)) -> Self {
        Self {
            img: RgbImage::from_pixel(width, height, WHITE),
            font,
            left: 80,
            top: 40,
            right: width as i32 - 20,
            bottom: height as i32 - 60,
            y_range,
        }
    }

    fn text(&mut self, x: i32, y: i32, size: f32, s: &str, centred: bool) {
        if let Some(font) = self.font {
            let scale = PxScale::from(size);
            let x = if centred { x - text_size(scale, font, s).0 as i32 / 2 } else { x };
            draw_text_mut(&mut self.img, BLACK, x, y, scale, font, s);
        }
    }

    fn text_right(&mut self, x: i32, y: i32, size: f32, s: &str) {
        if let Some(font) = self.font {
            let w = text_size(PxScale::from(size), font, s).0 as i32;
            self.text(x - w, y, size, s, false);
        }
    }

    fn y(&self, v: f64) -> f32 {
        let (lo, hi) = self.y_range;
        let t = (v - lo) / (hi - lo);
        (self.bottom as f64 - t * (self.bottom - self.top) as f64) as f32
    }

    fn axes(&mut self, title: &str, x_label: &str, y_label: &str) {
        let (lo, hi) = self.y_range;
        for i in 0..=4 {
            let v = lo + (hi - lo) * i as f64 / 4.0;
            let y = self.y(v);
            draw_line_segment_mut(&mut self.img, (self.left as f32, y), (self.right as f32, y), GREY);
            self.text_right(self.left - 6, y as i32 - 7, 13.0, &fmt_tick(v));
        }
        let rect = Rect::at(self.left, self.top).of_size((self.right - self.left) as u32, (self.bottom - self.top) as u32);
        draw_hollow_rect_mut(&mut self.img, rect, BLACK);
        let cx = (self.left + self.right) / 2;
        self.text(cx, 10, 18.0, title, true);
        let h = self.img.height() as i32;
        self.text(cx, h - 22, 14.0, x_label, true);
        self.text(4, self.top - 18, 13.0, y_label, false);
    }
}

fn thick_line(img: &mut RgbImage, a: (f32, f32), b: (f32, f32), colour: Rgb<u8>) {
    for d in [-0.5f32, 0.0, 0.5] {
        draw_line_segment_mut(img, (a.0, a.1 + d), (b.0, b.1 + d), colour);
        draw_line_segment_mut(img, (a.0 + d, a.1), (b.0 + d, b.1), colour);
    }
}

/// Line chart of one or more series; non-finite points are skipped.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series], font: Option<&FontVec>) -> RgbImage {
    let finite = || series.iter().flat_map(|s| s.points.iter()).filter(|p| p.0.is_finite() && p.1.is_finite());
    let (mut x_lo, mut x_hi, mut y_lo, mut y_hi) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in finite() {
        x_lo = x_lo.min(x);
        x_hi = x_hi.max(x);
        y_lo = y_lo.min(y);
        y_hi = y_hi.max(y);
    }
    let (x_lo, x_hi) = padded(x_lo, x_hi);
    let mut f = Frame::new(800, 480, font, padded(y_lo, y_hi));
    f.axes(title, x_label, y_label);
    let x_of = |x: f64, f: &Frame| (f.left as f64 + (x - x_lo) / (x_hi - x_lo) * (f.right - f.left) as f64) as f32;
    for i in 0..=4 {
        let v = x_lo + (x_hi - x_lo) * i as f64 / 4.0;
        let x = x_of(v, &f);
        let bottom = f.bottom;
        f.text(x as i32, bottom + 6, 13.0, &fmt_tick(v), true);
    }
    for (k, s) in series.iter().enumerate() {
        let colour = Rgb(PALETTE[k % PALETTE.len()]);
        let pts: Vec<(f32, f32)> = s
            .points
            .iter()
            .filter(|p| p.0.is_finite() && p.1.is_finite())
            .map(|&(x, y)| (x_of(x, &f), f.y(y)))
            .collect();
        for w in pts.windows(2) {
            thick_line(&mut f.img, w[0], w[1], colour);
        }
        for &(x, y) in &pts {
            draw_filled_circle_mut(&mut f.img, (x as i32, y as i32), 3, colour);
        }
        if series.len() > 1 {
            let ly = f.top + 8 + 18 * k as i32;
            let lx = f.right - 150;
            draw_filled_rect_mut(&mut f.img, Rect::at(lx, ly + 4).of_size(14, 6), colour);
            f.text(lx + 20, ly, 13.0, &s.name, false);
        }
    }
    f.img
}

/// Vertical bars in the given order, value printed above each bar.
pub fn bar_chart(title: &str, y_label: &str, bars: &[(String, f64)], font: Option<&FontVec>) -> RgbImage {
    let max = bars.iter().map(|b| b.1).filter(|v| v.is_finite()).fold(0.0f64, f64::max);
    let width = (100 + 110 * bars.len() as u32).max(500);
    let hi = if max > 0.0 { max * 1.1 } else { 1.0 };
    let mut f = Frame::new(width, 480, font, (0.0, hi));
    f.axes(title, "", y_label);
    let slot = (f.right - f.left) as f32 / bars.len().max(1) as f32;
    for (i, (name, v)) in bars.iter().enumerate() {
        let x0 = f.left as f32 + slot * (i as f32 + 0.15);
        let cx = (f.left as f32 + slot * (i as f32 + 0.5)) as i32;
        if v.is_finite() {
            let y = f.y(*v);
            let h = (f.bottom as f32 - y).max(1.0);
            let rect = Rect::at(x0 as i32, y as i32).of_size((slot * 0.7).max(1.0) as u32, h as u32);
            draw_filled_rect_mut(&mut f.img, rect, Rgb(PALETTE[0]));
            f.text(cx, y as i32 - 16, 12.0, &fmt_tick(*v), true);
        }
        let bottom = f.bottom;
        f.text(cx, bottom + 6, 12.0, name, true);
    }
    f.img
}
