//! Codec between network output grids and box coordinates, plus the
//! per-cell training targets derived from instance masks.
//!
//! A localizer head emits four channels of **offsets** per cell. Adding the
//! cell's own normalized center coordinates (the coordinate basis) turns
//! them into **absolute** `(x_min, y_min, x_max, y_max)` predictions; the
//! two representations are interchangeable and the mode is tracked in the
//! type so they can't be mixed up. Targets are sampled at cell centers: a
//! cell belongs to the instance whose mask covers the pixel under its
//! center, takes that instance's full box as its regression target, and is
//! flagged large when the instance's pixel area exceeds the threshold.

use crate::geometry::NormalizedBox;
use crate::rng::{derived_rng, Domain};
use crate::{Error, Result};
use ndarray::{Array2, Array3};
use rand::seq::SliceRandom;

/// Shape relationship between an input image and a network output grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridGeometry {
    pub image_w: usize,
    pub image_h: usize,
    pub grid_w: usize,
    pub grid_h: usize,
}

impl GridGeometry {
    pub fn new(image_w: usize, image_h: usize, grid_w: usize, grid_h: usize) -> Result<Self> {
        if image_w == 0 || image_h == 0 || grid_w == 0 || grid_h == 0 {
            return Err(Error::ShapeMismatch("grid geometry with zero dimension".into()));
        }
        if grid_w > image_w || grid_h > image_h {
            return Err(Error::ShapeMismatch(format!(
                "grid {grid_w}x{grid_h} larger than image {image_w}x{image_h}"
            )));
        }
        Ok(Self {
            image_w,
            image_h,
            grid_w,
            grid_h,
        })
    }

    pub fn cells(&self) -> usize {
        self.grid_w * self.grid_h
    }

    pub fn cell_index(&self, row: usize, col: usize) -> usize {
        row * self.grid_w + col
    }

    /// Center of cell `(row, col)` in normalized image coordinates.
    pub fn cell_center(&self, row: usize, col: usize) -> (f64, f64) {
        (
            (col as f64 + 0.5) / self.grid_w as f64,
            (row as f64 + 0.5) / self.grid_h as f64,
        )
    }

    /// Pixel under the center of cell `(row, col)`.
    pub fn cell_center_pixel(&self, row: usize, col: usize) -> (usize, usize) {
        let px = ((col as f64 + 0.5) * self.image_w as f64 / self.grid_w as f64) as usize;
        let py = ((row as f64 + 0.5) * self.image_h as f64 / self.grid_h as f64) as usize;
        (px.min(self.image_w - 1), py.min(self.image_h - 1))
    }
}

/// Whether a grid's four channels are offsets from cell centers or absolute
/// normalized coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridMode {
    Offsets,
    Absolute,
}

/// Dense per-cell 4-tuple grid (`[4, grid_h, grid_w]`) with its geometry and
/// coordinate mode. Mode changes only through the codec functions below.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionGrid {
    geometry: GridGeometry,
    mode: GridMode,
    values: Array3<f64>,
}

impl PredictionGrid {
    pub fn from_values(geometry: GridGeometry, mode: GridMode, values: Array3<f64>) -> Result<Self> {
        let expect = (4, geometry.grid_h, geometry.grid_w);
        if values.dim() != expect {
            return Err(Error::ShapeMismatch(format!(
                "grid values {:?}, geometry wants {:?}",
                values.dim(),
                expect
            )));
        }
        Ok(Self {
            geometry,
            mode,
            values,
        })
    }

    pub fn zeros(geometry: GridGeometry, mode: GridMode) -> Self {
        let values = Array3::zeros((4, geometry.grid_h, geometry.grid_w));
        Self {
            geometry,
            mode,
            values,
        }
    }

    pub fn geometry(&self) -> GridGeometry {
        self.geometry
    }

    pub fn mode(&self) -> GridMode {
        self.mode
    }

    pub fn values(&self) -> &Array3<f64> {
        &self.values
    }

    /// The raw 4-tuple at one cell, in this grid's mode.
    pub fn cell(&self, row: usize, col: usize) -> [f64; 4] {
        [
            self.values[[0, row, col]],
            self.values[[1, row, col]],
            self.values[[2, row, col]],
            self.values[[3, row, col]],
        ]
    }
}

/// Per-cell normalized center coordinates `(x, y)` of a grid.
#[derive(Debug, Clone)]
pub struct CoordBasis {
    pub geometry: GridGeometry,
    pub xs: Array2<f64>,
    pub ys: Array2<f64>,
}

/// Build the coordinate basis maps for a geometry.
pub fn make_coord_basis(geometry: GridGeometry) -> CoordBasis {
    let mut xs = Array2::zeros((geometry.grid_h, geometry.grid_w));
    let mut ys = Array2::zeros((geometry.grid_h, geometry.grid_w));
    for r in 0..geometry.grid_h {
        for c in 0..geometry.grid_w {
            let (x, y) = geometry.cell_center(r, c);
            xs[[r, c]] = x;
            ys[[r, c]] = y;
        }
    }
    CoordBasis { geometry, xs, ys }
}

fn check_basis(grid: &PredictionGrid, basis: &CoordBasis) -> Result<()> {
    if grid.geometry != basis.geometry {
        return Err(Error::ShapeMismatch(format!(
            "grid geometry {:?} vs basis geometry {:?}",
            grid.geometry, basis.geometry
        )));
    }
    Ok(())
}

/// Element-wise sum with the basis: offsets -> absolute coordinates.
/// Channels 0/2 receive the cell's x, channels 1/3 its y, so a cell with
/// all-zero offsets decodes to the degenerate box at its own center.
pub fn offsets_to_absolute(grid: &PredictionGrid, basis: &CoordBasis) -> Result<PredictionGrid> {
    check_basis(grid, basis)?;
    if grid.mode != GridMode::Offsets {
        return Err(Error::ShapeMismatch("offsets_to_absolute on absolute grid".into()));
    }
    let mut values = grid.values.clone();
    for ch in 0..4 {
        let b = if ch % 2 == 0 { &basis.xs } else { &basis.ys };
        let mut v = values.index_axis_mut(ndarray::Axis(0), ch);
        v += b;
    }
    PredictionGrid::from_values(grid.geometry, GridMode::Absolute, values)
}

/// Inverse of [`offsets_to_absolute`].
pub fn absolute_to_offsets(grid: &PredictionGrid, basis: &CoordBasis) -> Result<PredictionGrid> {
    check_basis(grid, basis)?;
    if grid.mode != GridMode::Absolute {
        return Err(Error::ShapeMismatch("absolute_to_offsets on offsets grid".into()));
    }
    let mut values = grid.values.clone();
    for ch in 0..4 {
        let b = if ch % 2 == 0 { &basis.xs } else { &basis.ys };
        let mut v = values.index_axis_mut(ndarray::Axis(0), ch);
        v -= b;
    }
    PredictionGrid::from_values(grid.geometry, GridMode::Offsets, values)
}

/// Ground truth resampled onto one output grid.
#[derive(Debug, Clone)]
pub struct TargetBundle {
    /// Absolute coordinate targets; meaningful only where `fg == 1`.
    pub coords: PredictionGrid,
    /// Objectness target p*: 1 where the cell center pixel belongs to an
    /// instance, else 0.
    pub fg: Array2<f64>,
    /// Size target z*: 1 where the covering instance's pixel area is
    /// strictly above the threshold (an instance at exactly the threshold
    /// counts as small).
    pub large: Array2<f64>,
    /// Per-cell weights for the size branch of the confidence loss: 0 on
    /// background; 1 on cells of small and moderately sized instances; for
    /// a large instance covering more than 100 cells, exactly 100 of its
    /// cells are drawn (seeded) and the rest get 0.
    pub size_weights: Array2<f64>,
}

impl TargetBundle {
    /// Mask l* selecting cells of large instances (Eq. for the large
    /// localizer): `fg * large`.
    pub fn large_mask(&self) -> Array2<f64> {
        &self.fg * &self.large
    }

    /// Mask s* selecting cells of small instances: `fg * (1 - large)`.
    pub fn small_mask(&self) -> Array2<f64> {
        &self.fg * &(1.0 - &self.large)
    }
}

/// Cap on per-instance cells contributing to the size branch.
pub const SIZE_BRANCH_CELL_CAP: usize = 100;

/// Resample instance ground truth onto `geometry`'s grid.
///
/// `mask` holds instance ids (0 = background) and must match the geometry's
/// image dimensions; `boxes[i]` / `areas[i]` describe instance id `i + 1`.
/// `seed`/`scene_index` feed the seeded cell subsampling of very large
/// instances so repeated calls are bit-identical.
pub fn targets_from_instances(
    mask: &Array2<u16>,
    boxes: &[NormalizedBox],
    areas: &[u64],
    geometry: GridGeometry,
    area_threshold: u64,
    seed: u64,
    scene_index: u64,
) -> Result<TargetBundle> {
    if mask.dim() != (geometry.image_h, geometry.image_w) {
        return Err(Error::ShapeMismatch(format!(
            "mask {:?} vs geometry image {}x{}",
            mask.dim(),
            geometry.image_h,
            geometry.image_w
        )));
    }
    if boxes.len() != areas.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} boxes but {} areas",
            boxes.len(),
            areas.len()
        )));
    }

    let (gh, gw) = (geometry.grid_h, geometry.grid_w);
    let mut coords = Array3::zeros((4, gh, gw));
    let mut fg = Array2::zeros((gh, gw));
    let mut large = Array2::zeros((gh, gw));
    let mut size_weights = Array2::zeros((gh, gw));
    // covered cells per instance id, in row-major order
    let mut covered: Vec<Vec<(usize, usize)>> = vec![Vec::new(); boxes.len()];

    for r in 0..gh {
        for c in 0..gw {
            let (px, py) = geometry.cell_center_pixel(r, c);
            let id = mask[[py, px]];
            if id == 0 {
                continue;
            }
            let idx = id as usize - 1;
            if idx >= boxes.len() {
                return Err(Error::MissingInstance { id: id as u32 });
            }
            let b = boxes[idx].as_array();
            for ch in 0..4 {
                coords[[ch, r, c]] = b[ch];
            }
            fg[[r, c]] = 1.0;
            large[[r, c]] = (areas[idx] > area_threshold) as u64 as f64;
            covered[idx].push((r, c));
        }
    }

    let mut rng = derived_rng(seed, Domain::TargetSampling, scene_index);
    for (idx, cells) in covered.iter().enumerate() {
        if areas[idx] > area_threshold && cells.len() > SIZE_BRANCH_CELL_CAP {
            let mut picked = cells.clone();
            picked.shuffle(&mut rng);
            for &(r, c) in picked.iter().take(SIZE_BRANCH_CELL_CAP) {
                size_weights[[r, c]] = 1.0;
            }
        } else {
            for &(r, c) in cells {
                size_weights[[r, c]] = 1.0;
            }
        }
    }

    Ok(TargetBundle {
        coords: PredictionGrid::from_values(geometry, GridMode::Absolute, coords)?,
        fg,
        large,
        size_weights,
    })
}
