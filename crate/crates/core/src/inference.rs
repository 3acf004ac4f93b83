//! Forward passes, decision rules and per-class evaluation.

use std::fmt::Write as _;
use std::io;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{binarize, BitImage};
use crate::mnist::LabeledDataset;
use crate::network::{ActivationMode, DenseLayer, Firing, LayeredNetwork};

/// Per-layer biased states and post-activation outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Activations {
    pub states: Vec<Vec<f64>>,
    pub outputs: Vec<Vec<f64>>,
}

impl Activations {
    pub fn final_states(&self) -> &[f64] {
        self.states.last().map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn final_outputs(&self) -> &[f64] {
        self.outputs.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Decision {
    Class(usize),
    Rejected,
}

pub fn sigmoid(s: f64) -> f64 {
    1.0 / (1.0 + (-s).exp())
}

fn activate(mode: ActivationMode, firing: Firing, state: f64) -> f64 {
    match mode {
        ActivationMode::Sigmoid => sigmoid(state),
        ActivationMode::Threshold => {
            let fires = match firing {
                Firing::Strict => state > 0.0,
                Firing::AtLeast => state >= 0.0,
            };
            if fires {
                1.0
            } else {
                0.0
            }
        }
    }
}

/// Network input: the ink cell indices of a binary image, or a dense vector.
#[derive(Debug, Clone, Copy)]
pub(crate) enum Input<'a> {
    Ink(&'a [usize]),
    Dense(&'a [f64]),
}

fn layer_states(layer: &DenseLayer, input: Input<'_>) -> Vec<f64> {
    (0..layer.neurons())
        .map(|n| {
            let row = layer.row(n);
            let acc: f64 = match input {
                Input::Ink(ink) => ink.iter().map(|&p| row[p]).sum(),
                Input::Dense(x) => row.iter().zip(x).map(|(w, v)| w * v).sum(),
            };
            acc + layer.bias()[n]
        })
        .collect()
}

pub(crate) fn forward_input(net: &LayeredNetwork, input: Input<'_>) -> Activations {
    let mode = net.mode();
    let mut states = Vec::with_capacity(net.layers().len());
    let mut outputs: Vec<Vec<f64>> = Vec::with_capacity(net.layers().len());
    for (l, layer) in net.layers().iter().enumerate() {
        let s = match l {
            0 => layer_states(layer, input),
            _ => layer_states(layer, Input::Dense(&outputs[l - 1])),
        };
        let o = s
            .iter()
            .zip(layer.firing())
            .map(|(&v, &f)| activate(mode, f, v))
            .collect();
        states.push(s);
        outputs.push(o);
    }
    Activations { states, outputs }
}

fn check_input(net: &LayeredNetwork, x: &BitImage) -> Result<()> {
    let meta = net.meta();
    if (x.width(), x.height()) != (meta.input_width, meta.input_height) {
        return Err(Error::dims(
            format!("{}x{} input", meta.input_width, meta.input_height),
            format!("{}x{}", x.width(), x.height()),
        ));
    }
    Ok(())
}

pub fn forward(net: &LayeredNetwork, x: &BitImage) -> Result<Activations> {
    check_input(net, x)?;
    Ok(forward_input(net, Input::Ink(&x.ink_indices())))
}

/// Forward pass on a real-valued input vector.
pub fn forward_values(net: &LayeredNetwork, x: &[f64]) -> Result<Activations> {
    if x.len() != net.input_len() {
        return Err(Error::dims(net.input_len(), x.len()));
    }
    Ok(forward_input(net, Input::Dense(x)))
}

/// Threshold mode: the single fired output, else `Rejected`.
/// Sigmoid mode: argmax of the final states, exact ties `Rejected`.
pub fn decide(mode: ActivationMode, acts: &Activations) -> Decision {
    match mode {
        ActivationMode::Threshold => {
            let mut fired = acts
                .final_outputs()
                .iter()
                .enumerate()
                .filter(|(_, &o)| o > 0.0)
                .map(|(k, _)| k);
            match (fired.next(), fired.next()) {
                (Some(k), None) => Decision::Class(k),
                _ => Decision::Rejected,
            }
        }
        ActivationMode::Sigmoid => {
            let states = acts.final_states();
            let mut best: Option<(usize, f64)> = None;
            let mut tied = false;
            for (k, &s) in states.iter().enumerate() {
                match best {
                    Some((_, b)) if s < b => {}
                    Some((_, b)) if s == b => tied = true,
                    _ => {
                        best = Some((k, s));
                        tied = false;
                    }
                }
            }
            match best {
                Some((k, _)) if !tied => Decision::Class(k),
                _ => Decision::Rejected,
            }
        }
    }
}

pub fn classify(net: &LayeredNetwork, x: &BitImage) -> Result<Decision> {
    Ok(decide(net.mode(), &forward(net, x)?))
}

/// Per-class recognition counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalReport {
    /// s_j
    pub correct: Vec<u64>,
    /// i_j
    pub totals: Vec<u64>,
    pub rejected: u64,
}

/// Whole percent, rounded half away from zero; 0 for an empty class.
pub fn rounded_percent(part: u64, whole: u64) -> u64 {
    if whole == 0 {
        0
    } else {
        (100.0 * part as f64 / whole as f64).round() as u64
    }
}

impl EvalReport {
    pub fn empty(class_count: usize) -> Self {
        Self {
            correct: vec![0; class_count],
            totals: vec![0; class_count],
            rejected: 0,
        }
    }

    pub fn class_count(&self) -> usize {
        self.totals.len()
    }

    pub fn record(&mut self, label: usize, decision: Decision) {
        self.totals[label] += 1;
        match decision {
            Decision::Class(k) if k == label => self.correct[label] += 1,
            Decision::Rejected => self.rejected += 1,
            Decision::Class(_) => {}
        }
    }

    fn merge(mut self, other: Self) -> Self {
        for (a, b) in self.correct.iter_mut().zip(&other.correct) {
            *a += b;
        }
        for (a, b) in self.totals.iter_mut().zip(&other.totals) {
            *a += b;
        }
        self.rejected += other.rejected;
        self
    }

    /// s
    pub fn total_correct(&self) -> u64 {
        self.correct.iter().sum()
    }

    /// i
    pub fn total(&self) -> u64 {
        self.totals.iter().sum()
    }

    /// p_j
    pub fn class_percent(&self, class: usize) -> u64 {
        rounded_percent(self.correct[class], self.totals[class])
    }

    /// p
    pub fn percent(&self) -> u64 {
        rounded_percent(self.total_correct(), self.total())
    }

    /// Unrounded accuracy in percent.
    pub fn accuracy(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            t => 100.0 * self.total_correct() as f64 / t as f64,
        }
    }

    /// `class,s,i,p` rows followed by a `total` row.
    pub fn write_csv<W: io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["class", "s", "i", "p"])?;
        for j in 0..self.class_count() {
            w.write_record([
                j.to_string(),
                self.correct[j].to_string(),
                self.totals[j].to_string(),
                self.class_percent(j).to_string(),
            ])?;
        }
        w.write_record([
            "total".to_string(),
            self.total_correct().to_string(),
            self.total().to_string(),
            self.percent().to_string(),
        ])?;
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    /// Aligned text table: one `sj = .. ij = .. pj = ..%` row per class and a total.
    pub fn to_table(&self) -> String {
        Self::side_by_side(std::slice::from_ref(self), &[])
    }

    /// Several reports as adjacent column groups (one per epoch, say).
    pub fn side_by_side(reports: &[EvalReport], titles: &[String]) -> String {
        let mut out = String::new();
        let col = |s: String| format!("{s:<13}");
        if !titles.is_empty() {
            for t in titles {
                let _ = write!(out, "{:<39}", t);
            }
            out = out.trim_end().to_string();
            out.push('\n');
        }
        let classes = reports.iter().map(EvalReport::class_count).max().unwrap_or(0);
        for j in 0..classes {
            let mut line = String::new();
            for r in reports {
                line += &col(format!("s{j} = {}", r.correct[j]));
                line += &col(format!("i{j} = {}", r.totals[j]));
                line += &col(format!("p{j} = {}%", r.class_percent(j)));
            }
            out += line.trim_end();
            out.push('\n');
        }
        let mut line = String::new();
        for r in reports {
            line += &col(format!("s = {}", r.total_correct()));
            line += &col(format!("i = {}", r.total()));
            line += &col(format!("p = {}%", r.percent()));
        }
        out += "Total\n";
        out += line.trim_end();
        out.push('\n');
        out
    }
}

/// Binarizes, classifies and tallies every record. Rejections count as errors.
pub fn evaluate(net: &LayeredNetwork, data: &LabeledDataset, threshold: u8) -> Result<EvalReport> {
    let classes = net.class_count().max(data.class_count());
    data.images()
        .par_iter()
        .zip(data.labels().par_iter())
        .map(|(img, &label)| {
            let d = classify(net, &binarize(img, threshold))?;
            let mut r = EvalReport::empty(classes);
            r.record(label as usize, d);
            Ok(r)
        })
        .try_reduce(|| EvalReport::empty(classes), |a, b| Ok(a.merge(b)))
}
