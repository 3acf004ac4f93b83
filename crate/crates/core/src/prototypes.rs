//! Prototype sets: the stored labeled images from which the network weights
//! are calculated.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distance::{compute_distance_field, DistanceField};
use crate::error::{Error, Result};
use crate::image::{binarize, BitImage, DEFAULT_THRESHOLD};
use crate::mnist::LabeledDataset;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrototypeSet {
    prototypes: Vec<BitImage>,
    classes: Vec<usize>,
    class_count: usize,
    /// Index of each prototype in the dataset it was drawn from, when known.
    sources: Vec<usize>,
}

impl PrototypeSet {
    pub fn new(prototypes: Vec<BitImage>, classes: Vec<usize>, class_count: usize) -> Result<Self> {
        let sources = (0..prototypes.len()).collect();
        Self::with_sources(prototypes, classes, class_count, sources)
    }

    pub fn with_sources(
        prototypes: Vec<BitImage>,
        classes: Vec<usize>,
        class_count: usize,
        sources: Vec<usize>,
    ) -> Result<Self> {
        if prototypes.len() < 2 {
            return Err(Error::Range {
                what: "prototype count",
                detail: format!("{} < 2", prototypes.len()),
            });
        }
        if classes.len() != prototypes.len() || sources.len() != prototypes.len() {
            return Err(Error::dims(
                format!("{} class and source entries", prototypes.len()),
                format!("{} classes, {} sources", classes.len(), sources.len()),
            ));
        }
        let (w, h) = (prototypes[0].width(), prototypes[0].height());
        for (k, p) in prototypes.iter().enumerate() {
            if (p.width(), p.height()) != (w, h) {
                return Err(Error::dims(
                    format!("{w}x{h}"),
                    format!("{}x{} (prototype {k})", p.width(), p.height()),
                ));
            }
            if p.ink_count() == 0 {
                return Err(Error::Selection(format!("prototype {k} has no ink")));
            }
        }
        let mut seen = vec![false; class_count];
        for &c in &classes {
            if c >= class_count {
                return Err(Error::Range {
                    what: "prototype class",
                    detail: format!("{c} >= class count {class_count}"),
                });
            }
            seen[c] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::Selection(format!("class {missing} has no prototype")));
        }
        Ok(Self {
            prototypes,
            classes,
            class_count,
            sources,
        })
    }

    /// N
    pub fn len(&self) -> usize {
        self.prototypes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prototypes.is_empty()
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn prototypes(&self) -> &[BitImage] {
        &self.prototypes
    }

    pub fn classes(&self) -> &[usize] {
        &self.classes
    }

    pub fn sources(&self) -> &[usize] {
        &self.sources
    }

    pub fn width(&self) -> usize {
        self.prototypes[0].width()
    }

    pub fn height(&self) -> usize {
        self.prototypes[0].height()
    }

    pub fn distance_fields(&self) -> Vec<DistanceField> {
        self.prototypes
            .par_iter()
            .map(|p| compute_distance_field(p).expect("prototypes carry ink"))
            .collect()
    }
}

/// How prototypes are drawn from the usable members of each class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SelectionStrategy {
    /// Seeded uniform sample without replacement.
    Uniform,
    /// Seeded candidate pool of up to `pool` members, then greedy medoids:
    /// each pick minimizes the pool's total mean squared distance to its
    /// nearest chosen prototype. Only same-class members are compared.
    Medoid { pool: usize },
}

impl Default for SelectionStrategy {
    fn default() -> Self {
        SelectionStrategy::Medoid { pool: 100 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    pub per_class: usize,
    pub threshold: u8,
    pub seed: u64,
    pub strategy: SelectionStrategy,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            per_class: 3,
            threshold: DEFAULT_THRESHOLD,
            seed: 0,
            strategy: SelectionStrategy::default(),
        }
    }
}

/// Picks `per_class` prototypes for every class, grouped by class in class
/// order. Members whose binarization has no ink are never picked.
pub fn select_prototypes(dataset: &LabeledDataset, cfg: &SelectionConfig) -> Result<PrototypeSet> {
    if cfg.per_class == 0 {
        return Err(Error::Range {
            what: "prototypes per class",
            detail: "0".into(),
        });
    }
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); dataset.class_count()];
    for (i, (img, label)) in dataset.iter().enumerate() {
        if img.pixels().iter().any(|&p| p > cfg.threshold) {
            members[label].push(i);
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut prototypes = Vec::new();
    let mut classes = Vec::new();
    let mut sources = Vec::new();
    for (class, pool) in members.iter().enumerate() {
        if pool.len() < cfg.per_class {
            return Err(Error::Selection(format!(
                "class {class} has {} usable members, {} required",
                pool.len(),
                cfg.per_class
            )));
        }
        let picked = match cfg.strategy {
            SelectionStrategy::Uniform => sample(&mut rng, pool.len(), cfg.per_class)
                .into_iter()
                .map(|k| pool[k])
                .collect(),
            SelectionStrategy::Medoid { pool: size } => {
                let size = size.max(cfg.per_class).min(pool.len());
                let candidates: Vec<usize> = sample(&mut rng, pool.len(), size)
                    .into_iter()
                    .map(|k| pool[k])
                    .collect();
                let images: Vec<BitImage> = candidates
                    .iter()
                    .map(|&i| binarize(dataset.get(i).0, cfg.threshold))
                    .collect();
                greedy_medoids(&images, cfg.per_class)
                    .into_iter()
                    .map(|k| candidates[k])
                    .collect::<Vec<_>>()
            }
        };
        for i in picked {
            prototypes.push(binarize(dataset.get(i).0, cfg.threshold));
            classes.push(class);
            sources.push(i);
        }
    }
    PrototypeSet::with_sources(prototypes, classes, dataset.class_count(), sources)
}

/// Greedy k-medoids over the asymmetric cost "mean squared distance from the
/// ink of `a` to the nearest ink of `b`". Returns candidate positions in pick
/// order; ties go to the lowest position.
fn greedy_medoids(images: &[BitImage], k: usize) -> Vec<usize> {
    let fields: Vec<DistanceField> = images
        .par_iter()
        .map(|img| compute_distance_field(img).expect("candidates carry ink"))
        .collect();
    let n = images.len();
    // cost[a][b]: candidate a represented by candidate b
    let cost: Vec<Vec<f64>> = images
        .par_iter()
        .map(|a| {
            let ink = a.ink_count() as f64;
            fields
                .iter()
                .map(|fb| fb.chamfer(a).expect("same dimensions") as f64 / ink)
                .collect()
        })
        .collect();

    let mut best = vec![f64::INFINITY; n];
    let mut chosen = Vec::with_capacity(k);
    for _ in 0..k {
        let mut pick: Option<(f64, usize)> = None;
        for b in (0..n).filter(|b| !chosen.contains(b)) {
            let total: f64 = (0..n).map(|a| best[a].min(cost[a][b])).sum();
            if pick.map_or(true, |(t, _)| total < t) {
                pick = Some((total, b));
            }
        }
        let (_, b) = pick.expect("pool holds at least k candidates");
        for a in 0..n {
            best[a] = best[a].min(cost[a][b]);
        }
        chosen.push(b);
    }
    chosen
}
