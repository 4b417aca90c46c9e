//! Segment a synthetic scene into superpixels and refine a box with them.
//!
//! ```sh
//! cargo run --example superpixels
//! ```
//!
//! Runs the from-scratch SLIC clustering on one generated scene, prints
//! an ASCII view of the segment map, measures how well segment borders
//! track the true instance borders, and shows the shrunk/expanded box
//! variants that superpixel support produces for a deliberately sloppy
//! initial box.

use pixprop::geometry::clip;
use pixprop::superpix::{boundary_recall, refine_box, slic, SlicParams, Superpixels};
use pixprop::synthdata::{generate_scene, SceneConfig};

fn main() -> pixprop::Result<()> {
    let config = SceneConfig {
        width: 48,
        height: 48,
        ..SceneConfig::default()
    };
    let scene = generate_scene(&config, 4, 0)?;
    println!(
        "scene 0: {} instances on a {}x{} canvas",
        scene.instances.len(),
        config.width,
        config.height
    );

    let params = SlicParams {
        segments: 36,
        compactness: 10.0,
        iterations: 10,
    };
    let labels = slic(&scene.image, &params)?;
    let sp = Superpixels::new(labels.clone())?;
    println!("SLIC produced {} connected segments\n", sp.segment_count());

    // coarse glyph view: one character per 2x2 pixel block
    const GLYPHS: &[u8] = b".:-=+*#%@ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz";
    for y in (0..config.height).step_by(2) {
        let row: String = (0..config.width)
            .step_by(2)
            .map(|x| GLYPHS[labels[[y, x]] as usize % GLYPHS.len()] as char)
            .collect();
        println!("  {row}");
    }

    // segment borders should trace instance borders closely
    let truth = scene.mask.mapv(|v| v as u32);
    let recall = boundary_recall(&labels, &truth, 1);
    println!("\nboundary recall vs ground truth (1px tolerance): {recall:.4}");

    // refine a sloppy box around the first instance
    let b = scene.instances[0].bbox;
    let sloppy = clip([
        b.x_min() - 0.08,
        b.y_min() - 0.08,
        b.x_max() + 0.04,
        b.y_max() + 0.04,
    ])?;
    let refined = refine_box(&sp, &sloppy)?;
    println!("\ninitial  {:?}", sloppy.as_array().map(|v| (v * 1000.0).round() / 1000.0));
    println!("shrunk   {:?}", refined.shrunk.as_array().map(|v| (v * 1000.0).round() / 1000.0));
    println!("expanded {:?}", refined.expanded.as_array().map(|v| (v * 1000.0).round() / 1000.0));
    println!("truth    {:?}", b.as_array().map(|v| (v * 1000.0).round() / 1000.0));
    Ok(())
}
