//! Exact squared Euclidean distance fields and first-layer weight tables.

use std::fmt;

use crate::error::{Error, Result};
use crate::image::BitImage;

/// Per-cell squared Euclidean distance to the nearest ink pixel of one image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DistanceField {
    width: usize,
    height: usize,
    d2: Vec<u32>,
}

impl DistanceField {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[u32] {
        &self.d2
    }

    pub fn get(&self, c: usize, r: usize) -> u32 {
        self.d2[r * self.width + c]
    }

    /// Sum of this field over the ink cells of `x`: the chamfer score of `x`
    /// against the field's source image.
    pub fn chamfer(&self, x: &BitImage) -> Result<u64> {
        if x.width() != self.width || x.height() != self.height {
            return Err(Error::dims(
                format!("{}x{}", self.width, self.height),
                format!("{}x{}", x.width(), x.height()),
            ));
        }
        Ok(x
            .bits()
            .iter()
            .zip(&self.d2)
            .filter(|(&b, _)| b)
            .map(|(_, &d)| d as u64)
            .sum())
    }
}

/// Lower envelope of the parabolas `y = (q - p)^2 + f[p]` over the finite
/// entries of `f`, sampled at every integer `q`.
fn envelope_1d(f: &[Option<u64>], out: &mut [u64]) {
    let n = f.len();
    // vertices and the boundaries between envelope segments
    let mut v: Vec<usize> = Vec::with_capacity(n);
    let mut z: Vec<f64> = Vec::with_capacity(n + 1);
    let key = |p: usize, fp: u64| fp as f64 + (p * p) as f64;

    for (q, fq) in f.iter().enumerate() {
        let Some(fq) = *fq else { continue };
        loop {
            let Some(&last) = v.last() else {
                v.push(q);
                z.clear();
                z.push(f64::NEG_INFINITY);
                z.push(f64::INFINITY);
                break;
            };
            let fl = f[last].expect("envelope vertices are finite");
            let s = (key(q, fq) - key(last, fl)) / (2.0 * (q - last) as f64);
            if s <= z[z.len() - 2] {
                v.pop();
                z.pop();
                if v.is_empty() {
                    continue;
                }
                *z.last_mut().unwrap() = f64::INFINITY;
            } else {
                *z.last_mut().unwrap() = s;
                v.push(q);
                z.push(f64::INFINITY);
                break;
            }
        }
    }

    let mut k = 0;
    for (q, slot) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        let dq = q.abs_diff(p) as u64;
        *slot = dq * dq + f[p].unwrap();
    }
}

/// Exact squared Euclidean distance transform: a column pass computes
/// vertical distances, a row pass takes the lower envelope of parabolas.
pub fn compute_distance_field(image: &BitImage) -> Result<DistanceField> {
    let (w, h) = (image.width(), image.height());
    if image.ink_count() == 0 {
        return Err(Error::EmptyImage);
    }

    // vertical distance to nearest ink in the same column
    let mut vert: Vec<Option<u64>> = vec![None; w * h];
    for c in 0..w {
        let mut last: Option<usize> = None;
        for r in 0..h {
            if image.get(c, r) {
                last = Some(r);
            }
            vert[r * w + c] = last.map(|lr| (r - lr) as u64);
        }
        let mut next: Option<usize> = None;
        for r in (0..h).rev() {
            if image.get(c, r) {
                next = Some(r);
            }
            if let Some(nr) = next {
                let d = (nr - r) as u64;
                let slot = &mut vert[r * w + c];
                *slot = Some(slot.map_or(d, |old| old.min(d)));
            }
        }
    }

    let mut d2 = vec![0u32; w * h];
    let mut row_out = vec![0u64; w];
    let mut row_in: Vec<Option<u64>> = vec![None; w];
    for r in 0..h {
        for c in 0..w {
            row_in[c] = vert[r * w + c].map(|d| d * d);
        }
        envelope_1d(&row_in, &mut row_out);
        for c in 0..w {
            d2[r * w + c] = u32::try_from(row_out[c]).expect("squared distance fits u32");
        }
    }

    Ok(DistanceField {
        width: w,
        height: h,
        d2,
    })
}

/// Weight table of the first-layer neuron comparing prototypes `i` and `j`:
/// `w = d_j^2 - d_i^2` per cell, so ink near prototype `i` contributes
/// positively.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WeightTable {
    width: usize,
    height: usize,
    w: Vec<i64>,
    pair: (usize, usize),
}

impl WeightTable {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[i64] {
        &self.w
    }

    pub fn pair(&self) -> (usize, usize) {
        self.pair
    }

    pub fn get(&self, c: usize, r: usize) -> i64 {
        self.w[r * self.width + c]
    }

    /// The table for the swapped pair.
    pub fn mirrored(&self) -> WeightTable {
        WeightTable {
            width: self.width,
            height: self.height,
            w: self.w.iter().map(|v| -v).collect(),
            pair: (self.pair.1, self.pair.0),
        }
    }
}

/// Text grid of signed integers, one table row per line.
impl fmt::Display for WeightTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let cell = self
            .w
            .iter()
            .map(|v| v.to_string().len())
            .max()
            .unwrap_or(1);
        writeln!(f, "# pair ({}, {}) {}x{}", self.pair.0, self.pair.1, self.width, self.height)?;
        for row in self.w.chunks(self.width.max(1)) {
            let line: Vec<String> = row.iter().map(|v| format!("{v:>cell$}")).collect();
            writeln!(f, "{}", line.join(" "))?;
        }
        Ok(())
    }
}

pub fn build_weight_table(
    di: &DistanceField,
    dj: &DistanceField,
    pair: (usize, usize),
) -> Result<WeightTable> {
    if di.width != dj.width || di.height != dj.height {
        return Err(Error::dims(
            format!("{}x{}", di.width, di.height),
            format!("{}x{}", dj.width, dj.height),
        ));
    }
    Ok(WeightTable {
        width: di.width,
        height: di.height,
        w: di
            .d2
            .iter()
            .zip(&dj.d2)
            .map(|(&a, &b)| b as i64 - a as i64)
            .collect(),
        pair,
    })
}
