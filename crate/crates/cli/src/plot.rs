use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use image::{Rgb, RgbImage};

use crate::error::{CliError, Result};
use tbdq_core::io::MotRecord;

const PALETTE: [[u8; 3]; 10] = [
    [230, 25, 75],
    [60, 180, 75],
    [255, 225, 25],
    [0, 130, 200],
    [245, 130, 48],
    [145, 30, 180],
    [70, 240, 240],
    [240, 50, 230],
    [210, 245, 60],
    [250, 190, 212],
];
const BACKGROUND: Rgb<u8> = Rgb([24, 24, 24]);
const GT_COLOR: Rgb<u8> = Rgb([200, 200, 200]);

fn rect(img: &mut RgbImage, r: &MotRecord, color: Rgb<u8>, thickness: i64) {
    let (w, h) = (img.width() as i64, img.height() as i64);
    let x0 = r.bb_left.round() as i64;
    let y0 = r.bb_top.round() as i64;
    let x1 = (r.bb_left + r.bb_width).round() as i64;
    let y1 = (r.bb_top + r.bb_height).round() as i64;
    let mut put = |x: i64, y: i64| {
        if (0..w).contains(&x) && (0..h).contains(&y) {
            img.put_pixel(x as u32, y as u32, color);
        }
    };
    for t in 0..thickness {
        for x in x0..=x1 {
            put(x, y0 + t);
            put(x, y1 - t);
        }
        for y in y0..=y1 {
            put(x0 + t, y);
            put(x1 - t, y);
        }
    }
}

fn save(img: &RgbImage, path: &Path) -> Result<()> {
    img.save(path).map_err(|source| CliError::Image {
        path: path.to_path_buf(),
        source,
    })
}

fn by_frame(records: &[MotRecord]) -> BTreeMap<u32, Vec<&MotRecord>> {
    let mut m: BTreeMap<u32, Vec<&MotRecord>> = BTreeMap::new();
    for r in records {
        m.entry(r.frame).or_default().push(r);
    }
    m
}

/// One PNG per frame: ground truth thin and grey, tracks colored by id.
pub fn overlays(
    results: &[MotRecord],
    gt: &[MotRecord],
    size: (u32, u32),
    max_frames: Option<usize>,
    out: &Path,
) -> Result<usize> {
    fs::create_dir_all(out).map_err(|e| tbdq_core::Error::Io {
        path: out.to_path_buf(),
        source: e,
    })?;
    let res = by_frame(results);
    let gts = by_frame(gt);
    let last = res.keys().chain(gts.keys()).copied().max().unwrap_or(0);
    let n = max_frames.map_or(last, |m| last.min(m as u32));
    for frame in 1..=n {
        let mut img = RgbImage::from_pixel(size.0, size.1, BACKGROUND);
        for r in gts.get(&frame).into_iter().flatten() {
            rect(&mut img, r, GT_COLOR, 1);
        }
        for r in res.get(&frame).into_iter().flatten() {
            let c = PALETTE[r.id.unsigned_abs() as usize % PALETTE.len()];
            rect(&mut img, r, Rgb(c), 3);
        }
        save(&img, &out.join(format!("frame_{frame:04}.png")))?;
    }
    Ok(n as usize)
}

fn heat(v: f64) -> Rgb<u8> {
    // Dark blue through teal to yellow.
    let v = v.clamp(0.0, 1.0);
    let lerp = |a: f64, b: f64, t: f64| (a + (b - a) * t).round() as u8;
    if v < 0.5 {
        let t = v / 0.5;
        Rgb([
            lerp(20.0, 30.0, t),
            lerp(20.0, 150.0, t),
            lerp(90.0, 140.0, t),
        ])
    } else {
        let t = (v - 0.5) / 0.5;
        Rgb([
            lerp(30.0, 250.0, t),
            lerp(150.0, 230.0, t),
            lerp(140.0, 30.0, t),
        ])
    }
}

/// Reads `frame,map,row,col,weight` lines and renders one heatmap per
/// (frame, map), each weight a `cell × cell` block scaled by its row maximum.
pub fn heatmaps(csv: &str, out: &Path, cell: u32) -> Result<usize> {
    let mut maps: BTreeMap<(usize, String), Vec<(usize, usize, f64)>> = BTreeMap::new();
    for (i, line) in csv.lines().enumerate().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let bad = || CliError::Usage(format!("attention line {}: malformed", i + 1));
        if f.len() != 5 {
            return Err(bad());
        }
        let frame = f[0].parse().map_err(|_| bad())?;
        let row = f[2].parse().map_err(|_| bad())?;
        let col = f[3].parse().map_err(|_| bad())?;
        let w: f64 = f[4].parse().map_err(|_| bad())?;
        maps.entry((frame, f[1].to_string()))
            .or_default()
            .push((row, col, w));
    }
    fs::create_dir_all(out).map_err(|e| tbdq_core::Error::Io {
        path: out.to_path_buf(),
        source: e,
    })?;
    for ((frame, name), cells) in &maps {
        let rows = cells.iter().map(|c| c.0).max().unwrap_or(0) + 1;
        let cols = cells.iter().map(|c| c.1).max().unwrap_or(0) + 1;
        let mut row_max = vec![0.0f64; rows];
        for &(r, _, w) in cells {
            row_max[r] = row_max[r].max(w);
        }
        let mut img = RgbImage::from_pixel(cols as u32 * cell, rows as u32 * cell, heat(0.0));
        for &(r, c, w) in cells {
            let v = if row_max[r] > 0.0 {
                w / row_max[r]
            } else {
                0.0
            };
            for dy in 0..cell {
                for dx in 0..cell {
                    img.put_pixel(c as u32 * cell + dx, r as u32 * cell + dy, heat(v));
                }
            }
        }
        save(&img, &out.join(format!("attention_{frame:04}_{name}.png")))?;
    }
    Ok(maps.len())
}
