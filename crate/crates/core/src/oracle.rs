//! Brute-force reference classifiers computed straight from the prototype
//! distance fields, with no network in the loop.
//!
//! For input `x`, the chamfer score of prototype `k` is
//! `D_k = sum of d2_k over the ink cells of x`. The first-layer state of the
//! constructed network for pair `(i, j)` equals `D_j - D_i` exactly.

use crate::distance::DistanceField;
use crate::error::{Error, Result};
use crate::image::BitImage;
use crate::inference::Decision;
use crate::prototypes::PrototypeSet;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChamferScores(pub Vec<u64>);

impl ChamferScores {
    pub fn as_slice(&self) -> &[u64] {
        &self.0
    }

    /// Number of prototypes `j` that `k` strictly beats.
    pub fn wins(&self, k: usize) -> usize {
        let dk = self.0[k];
        self.0.iter().filter(|&&dj| dk < dj).count()
    }
}

/// Prototype set with its distance fields computed once.
#[derive(Debug, Clone)]
pub struct Oracle {
    fields: Vec<DistanceField>,
    classes: Vec<usize>,
    class_count: usize,
}

impl Oracle {
    pub fn new(protos: &PrototypeSet) -> Self {
        Self {
            fields: protos.distance_fields(),
            classes: protos.classes().to_vec(),
            class_count: protos.class_count(),
        }
    }

    pub fn scores(&self, x: &BitImage) -> Result<ChamferScores> {
        self.fields
            .iter()
            .map(|f| f.chamfer(x))
            .collect::<Result<_>>()
            .map(ChamferScores)
    }

    /// Class of the unique closest prototype; a tie for the minimum is `Rejected`.
    pub fn nearest(&self, x: &BitImage) -> Result<Decision> {
        let scores = self.scores(x)?;
        let d = scores.as_slice();
        let min = *d.iter().min().expect("at least two prototypes");
        let mut at_min = d.iter().enumerate().filter(|(_, &v)| v == min);
        Ok(match (at_min.next(), at_min.next()) {
            (Some((k, _)), None) => Decision::Class(self.classes[k]),
            _ => Decision::Rejected,
        })
    }

    /// A prototype is active when it strictly beats at least `N - S` others.
    /// Each class votes with its active count; the winner must have strictly
    /// more votes than every other class.
    pub fn k_nearest(&self, x: &BitImage, neighbors: usize) -> Result<Decision> {
        let n = self.fields.len();
        if neighbors == 0 || neighbors > n {
            return Err(Error::Range {
                what: "neighbor count",
                detail: format!("S = {neighbors} not in [1, {n}]"),
            });
        }
        let scores = self.scores(x)?;
        let mut votes = vec![0usize; self.class_count];
        for k in 0..n {
            if scores.wins(k) >= n - neighbors {
                votes[self.classes[k]] += 1;
            }
        }
        let winner = (0..self.class_count)
            .find(|&c| (0..self.class_count).all(|o| o == c || votes[c] > votes[o]));
        Ok(winner.map_or(Decision::Rejected, Decision::Class))
    }
}

pub fn chamfer_scores(protos: &PrototypeSet, x: &BitImage) -> Result<ChamferScores> {
    Oracle::new(protos).scores(x)
}

pub fn nn_oracle(protos: &PrototypeSet, x: &BitImage) -> Result<Decision> {
    Oracle::new(protos).nearest(x)
}

pub fn knn_oracle(protos: &PrototypeSet, x: &BitImage, neighbors: usize) -> Result<Decision> {
    Oracle::new(protos).k_nearest(x, neighbors)
}
