//! Per-sample stochastic backpropagation on sigmoid-mode networks.
//!
//! The objective for one sample is `½ Σ_k (t_k − y_k)²` with target
//! `target_active` on the label's output and `target_inactive` elsewhere.
//! Deltas for all layers are computed from the pre-update parameters, then
//! every weight and bias moves by `−rate × gradient`.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{binarize, BitImage, DEFAULT_THRESHOLD};
use crate::inference::{decide, forward_input, Activations, Decision, Input};
use crate::mnist::LabeledDataset;
use crate::network::{ActivationMode, LayeredNetwork};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UpdatePolicy {
    /// Correct only samples whose pre-update decision is wrong.
    #[serde(rename = "misclassified")]
    MisclassifiedOnly,
    #[serde(rename = "all")]
    AllSamples,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// One learning rate per epoch.
    pub epoch_rates: Vec<f64>,
    pub target_active: f64,
    pub target_inactive: f64,
    pub update_policy: UpdatePolicy,
    /// `None` keeps dataset order.
    pub shuffle_seed: Option<u64>,
    /// Re-score the whole training set after each epoch.
    pub post_epoch_eval: bool,
    pub binarize_threshold: u8,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epoch_rates: vec![0.1, 0.1, 0.02],
            target_active: 0.7,
            target_inactive: 0.2,
            update_policy: UpdatePolicy::MisclassifiedOnly,
            shuffle_seed: None,
            post_epoch_eval: false,
            binarize_threshold: DEFAULT_THRESHOLD,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epoch_rates.is_empty() {
            return Err(Error::Config("no epochs configured".into()));
        }
        if let Some(r) = self.epoch_rates.iter().find(|r| !r.is_finite() || **r <= 0.0) {
            return Err(Error::Config(format!("learning rate {r} is not positive")));
        }
        let (lo, hi) = (self.target_inactive, self.target_active);
        if !(0.0 < lo && lo < hi && hi < 1.0) {
            return Err(Error::Config(format!(
                "targets must satisfy 0 < inactive < active < 1, got {lo} / {hi}"
            )));
        }
        Ok(())
    }

    pub fn targets(&self, outputs: usize, label: usize) -> Vec<f64> {
        (0..outputs)
            .map(|k| {
                if k == label {
                    self.target_active
                } else {
                    self.target_inactive
                }
            })
            .collect()
    }
}

/// `½ Σ_k (t_k − y_k)²`.
pub fn loss(outputs: &[f64], label: usize, cfg: &TrainConfig) -> f64 {
    0.5 * outputs
        .iter()
        .zip(cfg.targets(outputs.len(), label))
        .map(|(y, t)| (t - y) * (t - y))
        .sum::<f64>()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitKind {
    Calculated,
    Random,
}

impl std::fmt::Display for InitKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            InitKind::Calculated => "calculated",
            InitKind::Random => "random",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub rate: f64,
    /// Correct pre-update decisions during the pass.
    pub recognized_count: usize,
    pub sample_count: usize,
    pub recognized_pct: f64,
    /// Squared error accumulated over corrected samples.
    pub s_err: f64,
    /// Squared error accumulated over every sample, pre-update.
    pub s_err_all: f64,
    pub corrected_count: usize,
    pub post_epoch_recognized: Option<usize>,
    /// seconds
    pub wall_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochMetrics>,
    /// seconds, summed over epoch passes
    pub total_time: f64,
    pub initialization_kind: InitKind,
}

/// Loss gradients, shaped like the network's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<Vec<f64>>,
}

fn require_sigmoid(net: &LayeredNetwork) -> Result<()> {
    match net.mode() {
        ActivationMode::Sigmoid => Ok(()),
        ActivationMode::Threshold => Err(Error::Mode { expected: "sigmoid" }),
    }
}

/// Output-to-input deltas `∂loss/∂state` for every layer.
fn deltas(net: &LayeredNetwork, acts: &Activations, label: usize, cfg: &TrainConfig) -> Vec<Vec<f64>> {
    let layers = net.layers();
    let mut out: Vec<Vec<f64>> = vec![Vec::new(); layers.len()];
    let last = layers.len() - 1;
    let targets = cfg.targets(layers[last].neurons(), label);
    out[last] = acts.outputs[last]
        .iter()
        .zip(&targets)
        .map(|(&y, &t)| (y - t) * y * (1.0 - y))
        .collect();
    for l in (0..last).rev() {
        let upper = &layers[l + 1];
        let mut back = vec![0.0; layers[l].neurons()];
        for (n, &d) in out[l + 1].iter().enumerate() {
            if d != 0.0 {
                for (b, &w) in back.iter_mut().zip(upper.row(n)) {
                    *b += w * d;
                }
            }
        }
        out[l] = back
            .iter()
            .zip(&acts.outputs[l])
            .map(|(&b, &y)| b * y * (1.0 - y))
            .collect();
    }
    out
}

/// Analytic gradients at a real-valued input.
pub fn gradients(net: &LayeredNetwork, x: &[f64], label: usize, cfg: &TrainConfig) -> Result<Gradients> {
    require_sigmoid(net)?;
    if x.len() != net.input_len() {
        return Err(Error::dims(net.input_len(), x.len()));
    }
    let acts = forward_input(net, Input::Dense(x));
    let ds = deltas(net, &acts, label, cfg);
    let mut weights = Vec::with_capacity(ds.len());
    for (l, d) in ds.iter().enumerate() {
        let input: &[f64] = if l == 0 { x } else { &acts.outputs[l - 1] };
        weights.push(d.iter().flat_map(|&dn| input.iter().map(move |&v| dn * v)).collect());
    }
    Ok(Gradients { weights, bias: ds })
}

fn apply_step(net: &mut LayeredNetwork, ink: &[usize], acts: &Activations, ds: &[Vec<f64>], rate: f64) {
    for (l, layer) in net.layers_mut().iter_mut().enumerate() {
        let inputs = layer.inputs();
        for (n, &d) in ds[l].iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            let step = rate * d;
            let row = &mut layer.weights_mut()[n * inputs..(n + 1) * inputs];
            if l == 0 {
                for &p in ink {
                    row[p] -= step;
                }
            } else {
                for (w, &v) in row.iter_mut().zip(&acts.outputs[l - 1]) {
                    *w -= step * v;
                }
            }
            layer.bias_mut()[n] -= step;
        }
    }
}

/// One gradient step on sample `(x, label)`. Returns the loss before the step.
pub fn backprop_step(
    net: &mut LayeredNetwork,
    x: &BitImage,
    label: usize,
    rate: f64,
    cfg: &TrainConfig,
) -> Result<f64> {
    require_sigmoid(net)?;
    let meta = net.meta();
    if (x.width(), x.height()) != (meta.input_width, meta.input_height) {
        return Err(Error::dims(
            format!("{}x{}", meta.input_width, meta.input_height),
            format!("{}x{}", x.width(), x.height()),
        ));
    }
    let ink = x.ink_indices();
    let acts = forward_input(net, Input::Ink(&ink));
    let ds = deltas(net, &acts, label, cfg);
    apply_step(net, &ink, &acts, &ds, rate);
    Ok(loss(acts.final_outputs(), label, cfg))
}

/// Visiting order of one epoch: file order, or a shuffle seeded by
/// `(shuffle_seed, epoch)`.
pub fn sample_order(len: usize, shuffle_seed: Option<u64>, epoch: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..len).collect();
    if let Some(seed) = shuffle_seed {
        let mixed = seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(mixed));
    }
    order
}

/// One pass over `data`. `epoch` is zero-based and only affects the shuffle.
pub fn train_epoch(
    net: &mut LayeredNetwork,
    data: &LabeledDataset,
    rate: f64,
    cfg: &TrainConfig,
    epoch: usize,
) -> Result<EpochMetrics> {
    require_sigmoid(net)?;
    let start = Instant::now();
    let mut recognized = 0;
    let mut corrected = 0;
    let mut s_err = 0.0;
    let mut s_err_all = 0.0;

    for i in sample_order(data.len(), cfg.shuffle_seed, epoch) {
        let (img, label) = data.get(i);
        let x = binarize(img, cfg.binarize_threshold);
        if (x.width(), x.height()) != (net.meta().input_width, net.meta().input_height) {
            return Err(Error::dims(net.input_len(), x.len()));
        }
        let ink = x.ink_indices();
        let acts = forward_input(net, Input::Ink(&ink));
        let correct = decide(ActivationMode::Sigmoid, &acts) == Decision::Class(label);
        let err = loss(acts.final_outputs(), label, cfg);
        s_err_all += err;
        if correct {
            recognized += 1;
        }
        if correct && cfg.update_policy == UpdatePolicy::MisclassifiedOnly {
            continue;
        }
        s_err += err;
        corrected += 1;
        let ds = deltas(net, &acts, label, cfg);
        apply_step(net, &ink, &acts, &ds, rate);
    }
    let wall_time = start.elapsed().as_secs_f64();

    let post_epoch_recognized = if cfg.post_epoch_eval {
        Some(crate::inference::evaluate(net, data, cfg.binarize_threshold)?.total_correct() as usize)
    } else {
        None
    };

    Ok(EpochMetrics {
        epoch: epoch + 1,
        rate,
        recognized_count: recognized,
        sample_count: data.len(),
        recognized_pct: if data.is_empty() {
            0.0
        } else {
            100.0 * recognized as f64 / data.len() as f64
        },
        s_err,
        s_err_all,
        corrected_count: corrected,
        post_epoch_recognized,
        wall_time,
    })
}

/// Runs every configured epoch, calling `after_epoch` with the network
/// snapshot once each epoch finishes. Observer time is not counted.
pub fn train_with<F>(
    net: &mut LayeredNetwork,
    data: &LabeledDataset,
    cfg: &TrainConfig,
    kind: InitKind,
    mut after_epoch: F,
) -> Result<TrainHistory>
where
    F: FnMut(&LayeredNetwork, &EpochMetrics) -> Result<()>,
{
    cfg.validate()?;
    require_sigmoid(net)?;
    let mut epochs = Vec::with_capacity(cfg.epoch_rates.len());
    for (e, &rate) in cfg.epoch_rates.iter().enumerate() {
        let m = train_epoch(net, data, rate, cfg, e)?;
        after_epoch(net, &m)?;
        epochs.push(m);
    }
    Ok(TrainHistory {
        total_time: epochs.iter().map(|m| m.wall_time).sum(),
        epochs,
        initialization_kind: kind,
    })
}

pub fn train(
    net: &mut LayeredNetwork,
    data: &LabeledDataset,
    cfg: &TrainConfig,
    kind: InitKind,
) -> Result<TrainHistory> {
    train_with(net, data, cfg, kind, |_, _| Ok(()))
}
