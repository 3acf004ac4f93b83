//! Synthetic fixtures for the benchmarks, so they run without MNIST.

use metricnet::{BitImage, PrototypeSet};

/// Stroke-like 28×28 glyph: a thick segment whose angle and offset depend on `k`.
pub fn glyph(k: usize) -> BitImage {
    let angle = (k as f64 * 0.61).rem_euclid(std::f64::consts::PI);
    let (dx, dy) = (angle.cos(), angle.sin());
    let offset = (k % 5) as f64 - 2.0;
    BitImage::from_fn(28, 28, |c, r| {
        let (x, y) = (c as f64 - 13.5, r as f64 - 13.5);
        let across = (x * dy - y * dx - offset).abs();
        let along = (x * dx + y * dy).abs();
        across < 1.6 && along < 9.0
    })
}

/// `per_class` glyphs for each of ten classes.
pub fn prototype_set(per_class: usize) -> PrototypeSet {
    let n = per_class * 10;
    let images = (0..n).map(glyph).collect();
    let classes = (0..n).map(|k| k / per_class).collect();
    PrototypeSet::new(images, classes, 10).expect("glyphs carry ink")
}
