//! File formats: 8-bit PNG / PGM / PPM images, 0/255 PNG masks, CSV reports
//! and `key = value` config files.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use image::{DynamicImage, GrayImage, ImageFormat, Luma, Rgb, RgbImage};

use crate::error::{Error, Result};
use crate::metrics::{EvalReport, Scores};
use crate::segment::{ImagePlane, SegmentationMask};

fn image_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Image {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

fn open_8bit(path: &Path) -> Result<DynamicImage> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let format = image::guess_format(&bytes)
        .or_else(|_| ImageFormat::from_path(path))
        .map_err(|e| image_err(path, e.to_string()))?;
    let img = image::load_from_memory_with_format(&bytes, format)
        .map_err(|e| image_err(path, e.to_string()))?;
    match img {
        DynamicImage::ImageLuma8(_)
        | DynamicImage::ImageLumaA8(_)
        | DynamicImage::ImageRgb8(_)
        | DynamicImage::ImageRgba8(_) => Ok(img),
        other => Err(image_err(
            path,
            format!("unsupported pixel format {:?}; only 8-bit gray or RGB is accepted", other.color()),
        )),
    }
}

/// Loads an 8-bit grayscale or RGB image as intensities in 0..=255.
/// Colour is converted with BT.601 luma weights; alpha is ignored.
pub fn load_image(path: &Path) -> Result<ImagePlane> {
    let img = open_8bit(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let pixels: Vec<f64> = match &img {
        DynamicImage::ImageLuma8(g) => g.pixels().map(|p| p.0[0] as f64).collect(),
        DynamicImage::ImageLumaA8(g) => g.pixels().map(|p| p.0[0] as f64).collect(),
        _ => img
            .to_rgb8()
            .pixels()
            .map(|p| {
                let [r, g, b] = p.0;
                0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64
            })
            .collect(),
    };
    ImagePlane::new(w, h, pixels).map_err(|e| image_err(path, e.to_string()))
}

/// Loads a mask image; pixels with gray level >= 128 are foreground.
pub fn load_mask(path: &Path) -> Result<SegmentationMask> {
    let plane = load_image(path)?;
    let bits = plane.pixels().iter().map(|&v| v >= 128.0).collect();
    SegmentationMask::new(plane.width(), plane.height(), bits)
}

fn save_png(img: DynamicImage, path: &Path) -> Result<()> {
    img.save_with_format(path, ImageFormat::Png)
        .map_err(|e| image_err(path, e.to_string()))
}

/// Writes a single-channel PNG with foreground at 255 and background at 0.
pub fn save_mask(mask: &SegmentationMask, path: &Path) -> Result<()> {
    let (w, h) = (mask.width() as u32, mask.height() as u32);
    let img = GrayImage::from_fn(w, h, |x, y| {
        Luma([if mask.get(y as usize, x as usize) { 255 } else { 0 }])
    });
    save_png(DynamicImage::ImageLuma8(img), path)
}

/// Rounds and clamps row-major values to 0..=255 and writes them as gray PNG.
pub fn save_gray(values: &[f64], width: usize, height: usize, path: &Path) -> Result<()> {
    if values.len() != width * height {
        return Err(Error::dim("gray image pixels", width * height, values.len()));
    }
    let img = GrayImage::from_fn(width as u32, height as u32, |x, y| {
        Luma([to_u8(values[y as usize * width + x as usize])])
    });
    save_png(DynamicImage::ImageLuma8(img), path)
}

pub fn save_image(image: &ImagePlane, path: &Path) -> Result<()> {
    save_gray(image.pixels(), image.width(), image.height(), path)
}

fn to_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Gray image with foreground pixels blended halfway towards red.
pub fn overlay(image: &ImagePlane, mask: &SegmentationMask) -> Result<RgbImage> {
    if image.width() != mask.width() || image.height() != mask.height() {
        return Err(Error::dim(
            "overlay mask pixels",
            image.width() * image.height(),
            mask.width() * mask.height(),
        ));
    }
    Ok(RgbImage::from_fn(image.width() as u32, image.height() as u32, |x, y| {
        let (r, c) = (y as usize, x as usize);
        let g = image.get(r, c);
        if mask.get(r, c) {
            Rgb([to_u8(0.5 * g + 127.5), to_u8(0.5 * g), to_u8(0.5 * g)])
        } else {
            let v = to_u8(g);
            Rgb([v, v, v])
        }
    }))
}

pub fn save_overlay(image: &ImagePlane, mask: &SegmentationMask, path: &Path) -> Result<()> {
    save_png(DynamicImage::ImageRgb8(overlay(image, mask)?), path)
}

fn fmt_rate(v: f64) -> String {
    format!("{v:.6}")
}

/// CSV with header `id,tp,fp,fn,precision,recall,f1`: one row per scored
/// image in input order, then a `macro` row (mean of per-image rates, counts
/// left empty) and a `micro` row (rates from the pooled counts).
pub fn write_report<W: Write>(report: &EvalReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["id", "tp", "fp", "fn", "precision", "recall", "f1"])?;
    for s in &report.per_image {
        let c = &s.counts;
        w.write_record([
            s.id.clone(),
            c.tp.to_string(),
            c.fp.to_string(),
            c.fn_.to_string(),
            fmt_rate(s.scores.precision),
            fmt_rate(s.scores.recall),
            fmt_rate(s.scores.f1),
        ])?;
    }
    let row = |name: &str, counts: Option<[u64; 3]>, s: &Scores| {
        let [tp, fp, fn_] = counts.map(|c| c.map(|v| v.to_string())).unwrap_or_default();
        vec![
            name.to_string(),
            tp,
            fp,
            fn_,
            fmt_rate(s.precision),
            fmt_rate(s.recall),
            fmt_rate(s.f1),
        ]
    };
    let t = &report.totals;
    w.write_record(row("macro", None, &report.macro_avg))?;
    w.write_record(row("micro", Some([t.tp, t.fp, t.fn_]), &report.micro_avg))?;
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

pub fn save_report(report: &EvalReport, path: &Path) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_report(report, std::io::BufWriter::new(file))
}

/// Parses `key = value` lines. Blank lines and lines starting with `#` are
/// skipped; keys keep their order of appearance.
pub fn parse_config(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!("config line {}: expected key = value, got {line:?}", no + 1))
        })?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(Error::Config(format!("config line {}: empty key", no + 1)));
        }
        out.push((k.to_string(), v.to_string()));
    }
    Ok(out)
}

pub fn read_config(path: &Path) -> Result<Vec<(String, String)>> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read config file {}: {e}", path.display())))?;
    parse_config(&text)
}

/// An image and its ground truth found in a dataset directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetPair {
    pub id: String,
    pub image: PathBuf,
    pub truth: PathBuf,
}

/// Pairs `<name>.png` with `<name>_gt.png`. Returns the pairs sorted by name
/// and the PNG files that have no partner.
pub fn find_pairs(dir: &Path) -> Result<(Vec<DatasetPair>, Vec<PathBuf>)> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|entry| entry.ok())
        .filter(|e| e.path().is_file())
        .filter_map(|e| e.file_name().into_string().ok())
        .filter(|n| n.to_ascii_lowercase().ends_with(".png"))
        .collect();
    names.sort();

    let stem = |n: &str| n[..n.len() - 4].to_string();
    let truths: std::collections::BTreeSet<String> = names
        .iter()
        .map(|n| stem(n))
        .filter_map(|s| s.strip_suffix("_gt").map(str::to_string))
        .collect();
    let images: std::collections::BTreeSet<String> = names
        .iter()
        .map(|n| stem(n))
        .filter(|s| !s.ends_with("_gt"))
        .collect();

    let mut pairs = Vec::new();
    let mut unpaired = Vec::new();
    for n in &names {
        let s = stem(n);
        match s.strip_suffix("_gt") {
            Some(base) if !images.contains(base) => unpaired.push(dir.join(n)),
            Some(_) => {}
            None if truths.contains(&s) => pairs.push(DatasetPair {
                image: dir.join(n),
                truth: dir.join(format!("{s}_gt{}", &n[n.len() - 4..])),
                id: s,
            }),
            None => unpaired.push(dir.join(n)),
        }
    }
    Ok((pairs, unpaired))
}
