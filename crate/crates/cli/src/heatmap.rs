use std::path::Path;

use anyhow::{Context, Result};
use image::{ImageBuffer, Rgb};

use vpkit_core::SimilarityMatrix;

const CELL_PX: u32 = 24;

/// White at 0 through to dark red at 1.
fn color(v: f64) -> Rgb<u8> {
    let v = v.clamp(0.0, 1.0);
    let channel = |lo: f64, hi: f64| (255.0 * (hi + (lo - hi) * v)).round() as u8;
    Rgb([channel(0.55, 1.0), channel(0.0, 1.0), channel(0.05, 1.0)])
}

pub fn write_png(m: &SimilarityMatrix, path: &Path) -> Result<()> {
    let n = m.size() as u32;
    let img = ImageBuffer::from_fn(n * CELL_PX, n * CELL_PX, |x, y| {
        color(m.get((y / CELL_PX) as usize, (x / CELL_PX) as usize))
    });
    img.save(path).with_context(|| format!("writing {}", path.display()))
}
