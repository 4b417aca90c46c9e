//! Show how the size confidence blends the two specialist predictions.
//!
//! ```sh
//! cargo run --example scale_fusion
//! ```
//!
//! Builds two synthetic prediction grids — one as a "large-object
//! specialist" would see a scene, one as the "small-object specialist"
//! would — and fuses them under different confidence maps. The fused
//! coordinate always lies between the specialists, hits either one
//! exactly at confidence 0 or 1, and moves monotonically in between.
//! Also demonstrates the bilinear enlargement that feeds the second
//! pipeline scale.

use ndarray::{Array2, Array3};
use pixprop::gridcodec::{GridGeometry, GridMode, PredictionGrid};
use pixprop::scalefusion::{enlarge_image, fuse};

fn grid(geometry: GridGeometry, f: impl Fn(usize, usize, usize) -> f64) -> PredictionGrid {
    let mut values = Array3::zeros((4, geometry.grid_h, geometry.grid_w));
    for c in 0..4 {
        for y in 0..geometry.grid_h {
            for x in 0..geometry.grid_w {
                values[[c, y, x]] = f(c, y, x);
            }
        }
    }
    PredictionGrid::from_values(geometry, GridMode::Absolute, values).unwrap()
}

fn main() -> pixprop::Result<()> {
    let geometry = GridGeometry::new(16, 16, 4, 4)?;
    // the large specialist sees wide boxes, the small specialist tight ones
    let large = grid(geometry, |c, y, x| match c {
        0 => 0.10 + 0.01 * x as f64,
        1 => 0.10 + 0.01 * y as f64,
        2 => 0.90,
        _ => 0.85,
    });
    let small = grid(geometry, |c, y, x| match c {
        0 => 0.40 + 0.01 * x as f64,
        1 => 0.40 + 0.01 * y as f64,
        2 => 0.55,
        _ => 0.60,
    });

    println!("confidence sweep at cell (0, 0), channel 0:");
    println!("  z=1 means 'certainly large' -> follow the large specialist");
    for step in 0..=4 {
        let zv = step as f64 / 4.0;
        let z = Array2::from_elem((4, 4), zv);
        let fused = fuse(&large, &small, &z)?;
        let v = fused.cell(0, 0)[0];
        println!("  z = {zv:.2}  fused x_min = {v:.4}");
    }

    let z0 = Array2::from_elem((4, 4), 0.0);
    let z1 = Array2::from_elem((4, 4), 1.0);
    assert_eq!(fuse(&large, &small, &z1)?.values(), large.values());
    assert_eq!(fuse(&large, &small, &z0)?.values(), small.values());
    println!("\nendpoints reproduce the specialists bit for bit");

    // the enlarged second scale: 2x bilinear upsampling
    let mut img = Array3::zeros((3, 2, 2));
    for (i, v) in [0.0, 0.25, 0.5, 1.0].iter().enumerate() {
        img[[0, i / 2, i % 2]] = *v;
    }
    let big = enlarge_image(&img, 2)?;
    println!("\n2x2 channel enlarged to 4x4 (channel 0):");
    for y in 0..4 {
        let row: Vec<String> = (0..4).map(|x| format!("{:.3}", big[[0, y, x]])).collect();
        println!("  {}", row.join(" "));
    }
    Ok(())
}
