//! Deterministic synthetic scenes: colored rectangles and ellipses on a
//! gray background, with exact pixel-level ground truth.
//!
//! Each scene is generated from its own derived RNG stream keyed by
//! `(seed, scene index)`, so any scene can be regenerated bit-identically
//! in isolation and datasets are independent of generation order or worker
//! count. Instance areas are log-uniform between configured bounds; shapes
//! are placed by rejection sampling, pairwise disjoint (with a one-pixel
//! gap) unless overlap is allowed. Ground truth is exact: the recorded
//! area is the rasterized pixel count and the box is the tight bounding
//! box of the rasterized pixels.
//!
//! Images quantize to 8-bit in memory after noise, so a scene survives the
//! PPM round trip bit-exactly. Masks are 16-bit PGM (label 0 is
//! background; instance `i` has label `i + 1`).

use crate::geometry::NormalizedBox;
use crate::rng::{derived_rng, Domain};
use crate::{Error, Result};
use ndarray::{Array2, Array3};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

// ----- configuration ---------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneConfig {
    pub width: usize,
    pub height: usize,
    pub instances_min: usize,
    pub instances_max: usize,
    /// Log-uniform target pixel-area range.
    pub area_min: f64,
    pub area_max: f64,
    /// Shapes never rasterize thinner than this many pixels per axis.
    pub min_side: usize,
    /// Probability that a shape is an ellipse rather than a rectangle.
    pub ellipse_fraction: f64,
    /// Background gray level in `[0, 1]`.
    pub background: f64,
    /// Minimum L-infinity distance between an instance color and the
    /// background; lower margins make objects fainter against the canvas.
    pub color_margin: f64,
    /// Std of the Gaussian pixel noise added before 8-bit quantization.
    pub noise_std: f64,
    /// Allow instances to overlap (later instances draw on top).
    pub allow_overlap: bool,
    /// Fresh placement attempts per instance before it is skipped.
    pub max_retries: usize,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            width: 64,
            height: 64,
            instances_min: 3,
            instances_max: 8,
            area_min: 6.0,
            area_max: 120.0,
            min_side: 2,
            ellipse_fraction: 0.4,
            background: 0.15,
            color_margin: 0.25,
            noise_std: 0.02,
            allow_overlap: false,
            max_retries: 100,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("scene config: {m}")));
        if self.width < 8 || self.height < 8 {
            return bad("image must be at least 8x8");
        }
        if self.instances_min == 0 || self.instances_min > self.instances_max {
            return bad("need 1 <= instances_min <= instances_max");
        }
        if self.instances_max > 1000 {
            return bad("more than 1000 instances per scene is unsupported");
        }
        if !(self.area_min >= 1.0 && self.area_max >= self.area_min) {
            return bad("need 1 <= area_min <= area_max");
        }
        if self.area_max > (self.width * self.height) as f64 / 4.0 {
            return bad("area_max too large for the image");
        }
        if self.min_side < 1 || self.min_side >= self.width.min(self.height) / 2 {
            return bad("min_side out of range");
        }
        if !(0.0..=1.0).contains(&self.ellipse_fraction)
            || !(0.0..=1.0).contains(&self.background)
            || !self.noise_std.is_finite()
            || self.noise_std < 0.0
        {
            return bad("fractions and levels must be in range");
        }
        if !(0.0..=0.8).contains(&self.color_margin) {
            return bad("color_margin must be in [0, 0.8]");
        }
        Ok(())
    }
}

// ----- scenes ----------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct InstanceRecord {
    /// Zero-based instance index; the mask stores `id + 1`.
    pub id: u32,
    /// Tight normalized bounding box of the rasterized pixels.
    pub bbox: NormalizedBox,
    /// Exact rasterized pixel count.
    pub area: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub id: u64,
    /// `[3, h, w]` RGB in `[0, 1]`, already quantized to 8-bit levels.
    pub image: Array3<f64>,
    /// Instance labels, `[h, w]`; 0 is background.
    pub mask: Array2<u16>,
    pub instances: Vec<InstanceRecord>,
    /// Instances abandoned after exhausting placement retries.
    pub skipped: usize,
}

impl Scene {
    pub fn boxes(&self) -> Vec<NormalizedBox> {
        self.instances.iter().map(|i| i.bbox).collect()
    }

    pub fn areas(&self) -> Vec<u64> {
        self.instances.iter().map(|i| i.area).collect()
    }
}

/// Pixels of one shape attempt, with bookkeeping for ground truth.
struct Raster {
    pixels: Vec<(usize, usize)>, // (y, x)
    x0: usize,
    y0: usize,
    x1: usize, // inclusive
    y1: usize, // inclusive
}

fn rasterize_rect(x0: usize, y0: usize, w: usize, h: usize) -> Raster {
    let mut pixels = Vec::with_capacity(w * h);
    for y in y0..y0 + h {
        for x in x0..x0 + w {
            pixels.push((y, x));
        }
    }
    Raster {
        pixels,
        x0,
        y0,
        x1: x0 + w - 1,
        y1: y0 + h - 1,
    }
}

/// Center-in-ellipse test per pixel: `(x + 0.5, y + 0.5)` inside the
/// ellipse centered at `(cx, cy)` with semi-axes `(a, b)`.
fn rasterize_ellipse(cx: f64, cy: f64, a: f64, b: f64, width: usize, height: usize) -> Option<Raster> {
    let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0usize, 0usize);
    let mut pixels = Vec::new();
    let ylo = ((cy - b - 1.0).floor().max(0.0)) as usize;
    let yhi = ((cy + b + 1.0).ceil().min(height as f64 - 1.0)) as usize;
    let xlo = ((cx - a - 1.0).floor().max(0.0)) as usize;
    let xhi = ((cx + a + 1.0).ceil().min(width as f64 - 1.0)) as usize;
    for y in ylo..=yhi {
        for x in xlo..=xhi {
            let dx = (x as f64 + 0.5 - cx) / a;
            let dy = (y as f64 + 0.5 - cy) / b;
            if dx * dx + dy * dy <= 1.0 {
                pixels.push((y, x));
                x0 = x0.min(x);
                y0 = y0.min(y);
                x1 = x1.max(x);
                y1 = y1.max(y);
            }
        }
    }
    if pixels.is_empty() {
        None
    } else {
        Some(Raster { pixels, x0, y0, x1, y1 })
    }
}

/// True if the raster (dilated by one pixel) touches an occupied mask cell.
fn collides(raster: &Raster, mask: &Array2<u16>) -> bool {
    let (h, w) = mask.dim();
    raster.pixels.iter().any(|&(y, x)| {
        let ys = y.saturating_sub(1)..=(y + 1).min(h - 1);
        ys.into_iter().any(|yy| {
            let xs = x.saturating_sub(1)..=(x + 1).min(w - 1);
            xs.into_iter().any(|xx| mask[[yy, xx]] != 0)
        })
    })
}

/// L-infinity distance between RGB colors.
fn linf(a: [f64; 3], b: [f64; 3]) -> f64 {
    (0..3).map(|i| (a[i] - b[i]).abs()).fold(0.0, f64::max)
}

/// Generate one scene. Bit-identical for identical `(config, seed, index)`.
pub fn generate_scene(config: &SceneConfig, seed: u64, index: u64) -> Result<Scene> {
    config.validate()?;
    let mut rng = derived_rng(seed, Domain::Scene, index);
    let (w, h) = (config.width, config.height);
    let bg = [config.background; 3];

    let mut image = Array3::from_elem((3, h, w), config.background);
    let mut mask = Array2::<u16>::zeros((h, w));
    let mut instances = Vec::new();
    let mut skipped = 0usize;
    let mut used_colors: Vec<[f64; 3]> = Vec::new();

    let n = rng.gen_range(config.instances_min..=config.instances_max);
    let (ln_lo, ln_hi) = (config.area_min.ln(), config.area_max.ln());

    for _ in 0..n {
        // color: off-background by the configured margin, and off the other
        // instances (inter-instance separation never exceeds the margin)
        let sep = config.color_margin.min(0.15);
        let mut color = [0.0; 3];
        for attempt in 0..64 {
            color = [rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>()];
            let ok = linf(color, bg) >= config.color_margin
                && (used_colors.iter().all(|c| linf(color, *c) >= sep) || attempt >= 48);
            if ok {
                break;
            }
        }

        let mut placed = false;
        for _ in 0..config.max_retries {
            let area = (rng.gen_range(ln_lo..=ln_hi)).exp();
            let is_ellipse = rng.gen::<f64>() < config.ellipse_fraction;
            let raster = if is_ellipse {
                let rho = rng.gen_range(0.5f64.ln()..=2.0f64.ln()).exp();
                let min_semi = config.min_side as f64 / 2.0 + 0.05;
                let a = (area * rho / std::f64::consts::PI).sqrt().max(min_semi);
                let b = (area / (rho * std::f64::consts::PI)).sqrt().max(min_semi);
                if 2.0 * a + 2.0 > (w - 2) as f64 || 2.0 * b + 2.0 > (h - 2) as f64 {
                    continue;
                }
                let cx = rng.gen_range((1.0 + a)..=(w as f64 - 1.0 - a));
                let cy = rng.gen_range((1.0 + b)..=(h as f64 - 1.0 - b));
                match rasterize_ellipse(cx, cy, a, b, w, h) {
                    Some(r) => r,
                    None => continue,
                }
            } else {
                let rho = rng.gen_range(0.4f64.ln()..=2.5f64.ln()).exp();
                let rw = ((area * rho).sqrt().round() as usize).clamp(config.min_side, w - 2);
                let rh = ((area / rho).sqrt().round() as usize).clamp(config.min_side, h - 2);
                if rw + 2 > w || rh + 2 > h {
                    continue;
                }
                let x0 = rng.gen_range(1..=w - 1 - rw);
                let y0 = rng.gen_range(1..=h - 1 - rh);
                rasterize_rect(x0, y0, rw, rh)
            };
            let rw = raster.x1 - raster.x0 + 1;
            let rh = raster.y1 - raster.y0 + 1;
            if rw < config.min_side || rh < config.min_side {
                continue;
            }
            if !config.allow_overlap && collides(&raster, &mask) {
                continue;
            }

            let id = instances.len() as u32;
            let label = id as u16 + 1;
            for &(y, x) in &raster.pixels {
                mask[[y, x]] = label;
                for c in 0..3 {
                    image[[c, y, x]] = color[c];
                }
            }
            let bbox = NormalizedBox::new(
                raster.x0 as f64 / w as f64,
                raster.y0 as f64 / h as f64,
                (raster.x1 + 1) as f64 / w as f64,
                (raster.y1 + 1) as f64 / h as f64,
            )?;
            instances.push(InstanceRecord {
                id,
                bbox,
                area: raster.pixels.len() as u64,
            });
            used_colors.push(color);
            placed = true;
            break;
        }
        if !placed {
            skipped += 1;
        }
    }

    // overlap mode can bury an earlier instance entirely; drop hidden ones
    // and relabel so ids stay contiguous and ground truth stays exact
    if config.allow_overlap {
        let mut visible = vec![false; instances.len()];
        for &v in mask.iter() {
            if v > 0 {
                visible[v as usize - 1] = true;
            }
        }
        if visible.iter().any(|v| !v) {
            let mut remap = vec![0u16; instances.len() + 1];
            let mut kept = Vec::new();
            for (i, inst) in instances.into_iter().enumerate() {
                if visible[i] {
                    remap[i + 1] = kept.len() as u16 + 1;
                    kept.push(inst);
                }
            }
            for v in mask.iter_mut() {
                *v = remap[*v as usize];
            }
            // recompute tight boxes and areas of partially covered shapes
            instances = recount_instances(&mask, kept.len(), w, h)?;
            skipped += visible.iter().filter(|v| !**v).count();
        } else {
            instances = recount_instances(&mask, instances.len(), w, h)?;
        }
    }

    if config.noise_std > 0.0 {
        let noise = Normal::new(0.0, config.noise_std).expect("positive std");
        for v in image.iter_mut() {
            *v = (*v + noise.sample(&mut rng)).clamp(0.0, 1.0);
        }
    }
    for v in image.iter_mut() {
        *v = (*v * 255.0).round() / 255.0;
    }

    Ok(Scene {
        id: index,
        image,
        mask,
        instances,
        skipped,
    })
}

/// Recompute exact boxes and areas from the mask (ids stay 0-based).
fn recount_instances(mask: &Array2<u16>, count: usize, w: usize, h: usize) -> Result<Vec<InstanceRecord>> {
    let mut lo = vec![(usize::MAX, usize::MAX); count];
    let mut hi = vec![(0usize, 0usize); count];
    let mut areas = vec![0u64; count];
    for ((y, x), &v) in mask.indexed_iter() {
        if v == 0 {
            continue;
        }
        let i = v as usize - 1;
        lo[i] = (lo[i].0.min(x), lo[i].1.min(y));
        hi[i] = (hi[i].0.max(x), hi[i].1.max(y));
        areas[i] += 1;
    }
    (0..count)
        .map(|i| {
            Ok(InstanceRecord {
                id: i as u32,
                bbox: NormalizedBox::new(
                    lo[i].0 as f64 / w as f64,
                    lo[i].1 as f64 / h as f64,
                    (hi[i].0 + 1) as f64 / w as f64,
                    (hi[i].1 + 1) as f64 / h as f64,
                )?,
                area: areas[i],
            })
        })
        .collect()
}

/// Generate `count` scenes with ids `0..count`.
pub fn generate_scenes(config: &SceneConfig, seed: u64, count: usize) -> Result<Vec<Scene>> {
    (0..count as u64)
        .map(|i| generate_scene(config, seed, i))
        .collect()
}

/// Instance and pixel mass per area bin: `counts[b]` instances fall in bin
/// `b` and they cover `pixels[b]` image pixels in total.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AreaHistogram {
    pub counts: Vec<usize>,
    pub pixels: Vec<u64>,
}

/// Histogram of instance areas; `edges` are ascending upper bounds, with a
/// final open bin for anything larger. Both views matter: with log-uniform
/// areas most *instances* are small while most *pixels* belong to large
/// instances, which is what starves small objects of training signal.
pub fn area_histogram(scenes: &[Scene], edges: &[u64]) -> AreaHistogram {
    let mut counts = vec![0usize; edges.len() + 1];
    let mut pixels = vec![0u64; edges.len() + 1];
    for s in scenes {
        for inst in &s.instances {
            let bin = edges.iter().position(|&e| inst.area <= e).unwrap_or(edges.len());
            counts[bin] += 1;
            pixels[bin] += inst.area;
        }
    }
    AreaHistogram { counts, pixels }
}

// ----- image / mask / record IO ----------------------------------------------

/// Write an RGB image as binary PPM (P6, 8-bit).
pub fn write_ppm(path: &Path, image: &Array3<f64>) -> Result<()> {
    let (c, h, w) = image.dim();
    if c != 3 {
        return Err(Error::ShapeMismatch(format!("PPM wants 3 channels, got {c}")));
    }
    let mut f = BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
    let header = format!("P6\n{w} {h}\n255\n");
    let mut bytes = Vec::with_capacity(header.len() + 3 * w * h);
    bytes.extend_from_slice(header.as_bytes());
    for y in 0..h {
        for x in 0..w {
            for ch in 0..3 {
                bytes.push((image[[ch, y, x]].clamp(0.0, 1.0) * 255.0).round() as u8);
            }
        }
    }
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

/// Write an instance mask as binary PGM (P5, 16-bit big-endian).
pub fn write_pgm16(path: &Path, mask: &Array2<u16>) -> Result<()> {
    let (h, w) = mask.dim();
    let mut f = BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
    let header = format!("P5\n{w} {h}\n65535\n");
    let mut bytes = Vec::with_capacity(header.len() + 2 * w * h);
    bytes.extend_from_slice(header.as_bytes());
    for y in 0..h {
        for x in 0..w {
            bytes.extend_from_slice(&mask[[y, x]].to_be_bytes());
        }
    }
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

/// Read a whitespace-delimited header token, skipping `#` comments.
fn read_token(r: &mut impl BufRead, path: &Path) -> Result<String> {
    let mut tok = String::new();
    let mut in_comment = false;
    loop {
        let mut byte = [0u8; 1];
        match r.read_exact(&mut byte) {
            Ok(()) => {}
            Err(e) => return Err(Error::io(path, e)),
        }
        let ch = byte[0] as char;
        if in_comment {
            if ch == '\n' {
                in_comment = false;
            }
            continue;
        }
        if ch == '#' {
            in_comment = true;
            continue;
        }
        if ch.is_ascii_whitespace() {
            if tok.is_empty() {
                continue;
            }
            return Ok(tok);
        }
        tok.push(ch);
    }
}

fn parse_err(path: &Path, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        msg: msg.into(),
    }
}

/// Read a P6 PPM written by [`write_ppm`] (any 8-bit P6 works).
pub fn read_ppm(path: &Path) -> Result<Array3<f64>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(f);
    if read_token(&mut r, path)? != "P6" {
        return Err(parse_err(path, "not a P6 PPM"));
    }
    let parse = |s: String| s.parse::<usize>().map_err(|_| parse_err(path, "bad header number"));
    let w = parse(read_token(&mut r, path)?)?;
    let h = parse(read_token(&mut r, path)?)?;
    let maxval = parse(read_token(&mut r, path)?)?;
    if maxval != 255 {
        return Err(parse_err(path, format!("unsupported maxval {maxval}")));
    }
    let mut data = vec![0u8; 3 * w * h];
    r.read_exact(&mut data).map_err(|e| Error::io(path, e))?;
    let mut image = Array3::zeros((3, h, w));
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                image[[c, y, x]] = data[3 * (y * w + x) + c] as f64 / 255.0;
            }
        }
    }
    Ok(image)
}

/// Read a 16-bit big-endian P5 PGM written by [`write_pgm16`].
pub fn read_pgm16(path: &Path) -> Result<Array2<u16>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(f);
    if read_token(&mut r, path)? != "P5" {
        return Err(parse_err(path, "not a P5 PGM"));
    }
    let parse = |s: String| s.parse::<usize>().map_err(|_| parse_err(path, "bad header number"));
    let w = parse(read_token(&mut r, path)?)?;
    let h = parse(read_token(&mut r, path)?)?;
    let maxval = parse(read_token(&mut r, path)?)?;
    if maxval != 65535 {
        return Err(parse_err(path, format!("unsupported maxval {maxval}")));
    }
    let mut data = vec![0u8; 2 * w * h];
    r.read_exact(&mut data).map_err(|e| Error::io(path, e))?;
    let mut mask = Array2::zeros((h, w));
    for y in 0..h {
        for x in 0..w {
            let i = 2 * (y * w + x);
            mask[[y, x]] = u16::from_be_bytes([data[i], data[i + 1]]);
        }
    }
    Ok(mask)
}

pub const INSTANCES_CSV_HEADER: &str = "scene_id,instance_id,x_min,y_min,x_max,y_max,area";

/// Serialize every scene's instance records into one CSV string.
pub fn instances_to_csv(scenes: &[Scene]) -> String {
    let mut out = String::from(INSTANCES_CSV_HEADER);
    out.push('\n');
    for s in scenes {
        for inst in &s.instances {
            let [x0, y0, x1, y1] = inst.bbox.as_array();
            out.push_str(&format!(
                "{},{},{x0:.6},{y0:.6},{x1:.6},{y1:.6},{}\n",
                s.id, inst.id, inst.area
            ));
        }
    }
    out
}

/// Parse an instances CSV back into per-scene records, keyed by scene id.
pub fn parse_instances_csv(text: &str, path: &Path) -> Result<Vec<(u64, Vec<InstanceRecord>)>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == INSTANCES_CSV_HEADER => {}
        _ => return Err(parse_err(path, "missing instances CSV header")),
    }
    let mut out: Vec<(u64, Vec<InstanceRecord>)> = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(parse_err(path, format!("line {}: want 7 fields", lineno + 2)));
        }
        let bad = |what: &str| parse_err(path, format!("line {}: bad {what}", lineno + 2));
        let scene_id: u64 = fields[0].parse().map_err(|_| bad("scene id"))?;
        let id: u32 = fields[1].parse().map_err(|_| bad("instance id"))?;
        let mut coords = [0f64; 4];
        for (i, c) in coords.iter_mut().enumerate() {
            *c = fields[2 + i].parse().map_err(|_| bad("coordinate"))?;
        }
        let area: u64 = fields[6].parse().map_err(|_| bad("area"))?;
        let bbox = NormalizedBox::new(coords[0], coords[1], coords[2], coords[3])?;
        match out.last_mut() {
            Some((sid, records)) if *sid == scene_id => records.push(InstanceRecord { id, bbox, area }),
            _ => out.push((scene_id, vec![InstanceRecord { id, bbox, area }])),
        }
    }
    Ok(out)
}

// ----- dataset layout ---------------------------------------------------------

pub fn image_rel_path(scene_id: u64) -> String {
    format!("images/scene_{scene_id:05}.ppm")
}

pub fn mask_rel_path(scene_id: u64) -> String {
    format!("masks/scene_{scene_id:05}.pgm")
}

pub const INSTANCES_REL_PATH: &str = "instances.csv";

/// Write scenes under `dir` (`images/*.ppm`, `masks/*.pgm`,
/// `instances.csv`). Returns the relative paths written, in order.
pub fn write_dataset(dir: &Path, scenes: &[Scene]) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for sub in ["images", "masks"] {
        std::fs::create_dir_all(dir.join(sub)).map_err(|e| Error::io(&dir.join(sub), e))?;
    }
    for s in scenes {
        let img = PathBuf::from(image_rel_path(s.id));
        write_ppm(&dir.join(&img), &s.image)?;
        written.push(img);
        let msk = PathBuf::from(mask_rel_path(s.id));
        write_pgm16(&dir.join(&msk), &s.mask)?;
        written.push(msk);
    }
    let csv_path = dir.join(INSTANCES_REL_PATH);
    std::fs::write(&csv_path, instances_to_csv(scenes)).map_err(|e| Error::io(&csv_path, e))?;
    written.push(PathBuf::from(INSTANCES_REL_PATH));
    Ok(written)
}

/// Load a dataset written by [`write_dataset`]. Scenes come back in CSV
/// order; `skipped` is not persisted and reloads as zero.
pub fn load_dataset(dir: &Path) -> Result<Vec<Scene>> {
    let csv_path = dir.join(INSTANCES_REL_PATH);
    let text = std::fs::read_to_string(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
    let per_scene = parse_instances_csv(&text, &csv_path)?;
    per_scene
        .into_iter()
        .map(|(id, instances)| {
            let image = read_ppm(&dir.join(image_rel_path(id)))?;
            let mask = read_pgm16(&dir.join(mask_rel_path(id)))?;
            if mask.dim() != (image.dim().1, image.dim().2) {
                return Err(Error::ShapeMismatch(format!(
                    "scene {id}: image {:?} vs mask {:?}",
                    image.dim(),
                    mask.dim()
                )));
            }
            Ok(Scene {
                id,
                image,
                mask,
                instances,
                skipped: 0,
            })
        })
        .collect()
}
