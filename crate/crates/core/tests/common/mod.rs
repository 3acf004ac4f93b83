//! Brute-force references and fixtures shared by the integration tests.
#![allow(dead_code)]

use std::path::PathBuf;

use metricnet::{BitImage, Decision, GrayImage, LabeledDataset, MnistPaths, PrototypeSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Squared distance from every cell to its closest ink cell, by exhaustive search.
pub fn brute_field(img: &BitImage) -> Vec<u64> {
    let ink: Vec<(i64, i64)> = img.ink_cells().map(|(c, r)| (c as i64, r as i64)).collect();
    let mut out = Vec::with_capacity(img.len());
    for r in 0..img.height() as i64 {
        for c in 0..img.width() as i64 {
            let best = ink
                .iter()
                .map(|&(ic, ir)| ((c - ic) * (c - ic) + (r - ir) * (r - ir)) as u64)
                .min()
                .expect("image has ink");
            out.push(best);
        }
    }
    out
}

/// Sum of each prototype's brute-force field over the ink of `x`.
pub fn brute_scores(protos: &[BitImage], x: &BitImage) -> Vec<i64> {
    protos
        .iter()
        .map(|p| {
            let f = brute_field(p);
            x.ink_indices().iter().map(|&i| f[i] as i64).sum()
        })
        .collect()
}

pub fn brute_nn(protos: &[BitImage], classes: &[usize], x: &BitImage) -> Decision {
    let d = brute_scores(protos, x);
    let min = *d.iter().min().unwrap();
    let at_min: Vec<usize> = (0..d.len()).filter(|&k| d[k] == min).collect();
    if at_min.len() == 1 {
        Decision::Class(classes[at_min[0]])
    } else {
        Decision::Rejected
    }
}

/// Prototype `k` is among the `s` closest when at most `s - 1` others are at
/// least as close. The class with strictly the most such prototypes wins.
pub fn brute_knn(
    protos: &[BitImage],
    classes: &[usize],
    class_count: usize,
    x: &BitImage,
    s: usize,
) -> Decision {
    let d = brute_scores(protos, x);
    let mut votes = vec![0usize; class_count];
    for k in 0..d.len() {
        let as_close = (0..d.len()).filter(|&j| j != k && d[j] <= d[k]).count();
        if as_close < s {
            votes[classes[k]] += 1;
        }
    }
    let best = *votes.iter().max().unwrap();
    let leaders: Vec<usize> = (0..class_count).filter(|&c| votes[c] == best).collect();
    if leaders.len() == 1 {
        Decision::Class(leaders[0])
    } else {
        Decision::Rejected
    }
}

pub fn random_image<R: Rng>(rng: &mut R, w: usize, h: usize, density: f64) -> BitImage {
    BitImage::from_fn(w, h, |_, _| rng.random_bool(density))
}

/// Like [`random_image`] but with at least one ink cell.
pub fn random_inked<R: Rng>(rng: &mut R, w: usize, h: usize, density: f64) -> BitImage {
    let mut img = random_image(rng, w, h, density);
    if img.ink_count() == 0 {
        img.set(rng.random_range(0..w), rng.random_range(0..h), true);
    }
    img
}

/// `n` random inked prototypes covering every one of `classes` classes.
pub fn random_protos<R: Rng>(rng: &mut R, w: usize, h: usize, n: usize, classes: usize) -> PrototypeSet {
    assert!(n >= classes && n >= 2);
    let density = rng.random_range(0.05..0.5);
    let images = (0..n).map(|_| random_inked(rng, w, h, density)).collect();
    let labels = (0..n)
        .map(|k| if k < classes { k } else { rng.random_range(0..classes) })
        .collect();
    PrototypeSet::new(images, labels, classes).unwrap()
}

/// Grey images of noisy class templates: class `k` draws a bar whose
/// position depends on `k`.
pub fn synthetic_dataset(seed: u64, len: usize, w: usize, h: usize, classes: usize) -> LabeledDataset {
    let mut r = rng(seed);
    let mut images = Vec::with_capacity(len);
    let mut labels = Vec::with_capacity(len);
    for _ in 0..len {
        let k = r.random_range(0..classes);
        let vertical = k % 2 == 0;
        let pos = (k / 2) * 2 + 1;
        let pixels = (0..w * h)
            .map(|i| {
                let (c, row) = (i % w, i / w);
                let on_bar = if vertical { c == pos % w } else { row == pos % h };
                let noise = r.random_bool(0.06);
                if on_bar != noise && !(on_bar && r.random_bool(0.15)) {
                    200
                } else {
                    r.random_range(0..=120)
                }
            })
            .collect();
        images.push(GrayImage::new(w, h, pixels).unwrap());
        labels.push(k as u8);
    }
    LabeledDataset::new(images, labels, classes).unwrap()
}

/// MNIST directory from `METRICNET_MNIST_DIR`, else `<workspace>/data/mnist`.
pub fn mnist_dir() -> PathBuf {
    std::env::var_os("METRICNET_MNIST_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist"))
}

pub fn require_mnist() -> MnistPaths {
    let dir = mnist_dir();
    let paths = MnistPaths::in_dir(&dir);
    assert!(
        paths.exists(),
        "MNIST not found in {}; run scripts/fetch_mnist.sh or set METRICNET_MNIST_DIR",
        dir.display()
    );
    paths
}
