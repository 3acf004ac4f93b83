//! Dense layered networks and their analytic construction from prototypes.
//!
//! Nearest-neighbor network (three layers):
//! 1. one neuron per ordered prototype pair `(i, j)`, `i != j`, weights from
//!    the pair's weight table, fires when its state is positive;
//! 2. one neuron per prototype `k`, unit weights from every `(k, j)`, bias
//!    `-(N - 1)`, fires when `k` beats every other prototype;
//! 3. one neuron per class, unit weights from that class's prototypes.
//!
//! The k-nearest-neighbors variant lowers the layer-2 bias to `-(N - S)`,
//! replaces layer 3 with pairwise class-vote comparisons and adds a fourth
//! layer that fires for the class winning every comparison.
//!
//! Thresholds are stored as biases (`w0 = -B`) so the same parameters drive
//! both threshold and sigmoid evaluation. Every layer is a full dense matrix;
//! connections absent from the diagrams are present with weight 0.

use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::distance::build_weight_table;
use crate::error::{Error, Result};
use crate::prototypes::PrototypeSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActivationMode {
    Threshold,
    Sigmoid,
}

/// Threshold-mode firing rule applied to the biased state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Firing {
    /// fires iff state > 0
    Strict,
    /// fires iff state >= 0
    AtLeast,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    inputs: usize,
    /// neuron-major: row `n` holds the incoming weights of neuron `n`
    weights: Vec<f64>,
    bias: Vec<f64>,
    firing: Vec<Firing>,
}

impl DenseLayer {
    pub fn new(inputs: usize, weights: Vec<f64>, bias: Vec<f64>, firing: Vec<Firing>) -> Result<Self> {
        let neurons = bias.len();
        if weights.len() != neurons * inputs || firing.len() != neurons {
            return Err(Error::dims(
                format!("{neurons}x{inputs} weights and {neurons} flags"),
                format!("{} weights and {} flags", weights.len(), firing.len()),
            ));
        }
        Ok(Self {
            inputs,
            weights,
            bias,
            firing,
        })
    }

    pub fn zeros(inputs: usize, neurons: usize, firing: Firing) -> Self {
        Self {
            inputs,
            weights: vec![0.0; inputs * neurons],
            bias: vec![0.0; neurons],
            firing: vec![firing; neurons],
        }
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn neurons(&self) -> usize {
        self.bias.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn row(&self, neuron: usize) -> &[f64] {
        &self.weights[neuron * self.inputs..(neuron + 1) * self.inputs]
    }

    pub fn weight(&self, neuron: usize, input: usize) -> f64 {
        self.weights[neuron * self.inputs + input]
    }

    pub fn set_weight(&mut self, neuron: usize, input: usize, value: f64) {
        self.weights[neuron * self.inputs + input] = value;
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    pub fn firing(&self) -> &[Firing] {
        &self.firing
    }

    pub fn parameter_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Architecture {
    NearestNeighbor,
    KNearest { neighbors: usize },
    /// Not built from prototypes (tests, hand-assembled networks).
    Custom,
}

/// Construction record carried alongside the parameters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkMeta {
    pub architecture: Architecture,
    pub input_width: usize,
    pub input_height: usize,
    pub class_count: usize,
    /// class of each prototype, indexed like the second layer
    pub prototype_classes: Vec<usize>,
    /// dataset index each prototype was taken from
    pub prototype_sources: Vec<usize>,
}

impl NetworkMeta {
    pub fn custom(input_width: usize, input_height: usize, class_count: usize) -> Self {
        Self {
            architecture: Architecture::Custom,
            input_width,
            input_height,
            class_count,
            prototype_classes: Vec::new(),
            prototype_sources: Vec::new(),
        }
    }

    /// N
    pub fn prototype_count(&self) -> usize {
        self.prototype_classes.len()
    }

    /// First-layer neuron index of the ordered pair `(i, j)`, `i != j`.
    pub fn pair_index(&self, i: usize, j: usize) -> Option<usize> {
        let n = self.prototype_count();
        if i >= n || j >= n || i == j {
            return None;
        }
        Some(i * (n - 1) + if j < i { j } else { j - 1 })
    }

    /// Ordered pairs in first-layer neuron order.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        ordered_pairs(self.prototype_count())
    }

    /// Third-layer neuron index of the ordered class pair `(k, k1)` in the
    /// k-nearest-neighbors network.
    pub fn class_pair_index(&self, k: usize, k1: usize) -> Option<usize> {
        let n = self.class_count;
        if k >= n || k1 >= n || k == k1 {
            return None;
        }
        Some(k * (n - 1) + if k1 < k { k1 } else { k1 - 1 })
    }
}

fn ordered_pairs(n: usize) -> Vec<(usize, usize)> {
    (0..n)
        .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayeredNetwork {
    layers: Vec<DenseLayer>,
    mode: ActivationMode,
    meta: NetworkMeta,
}

impl LayeredNetwork {
    pub fn new(layers: Vec<DenseLayer>, mode: ActivationMode, meta: NetworkMeta) -> Result<Self> {
        let mut width = meta.input_width * meta.input_height;
        for (l, layer) in layers.iter().enumerate() {
            if layer.inputs() != width {
                return Err(Error::dims(
                    format!("layer {l} input width {width}"),
                    layer.inputs(),
                ));
            }
            width = layer.neurons();
        }
        if layers.is_empty() || width != meta.class_count {
            return Err(Error::dims(
                format!("{} output neurons", meta.class_count),
                width,
            ));
        }
        Ok(Self { layers, mode, meta })
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    pub fn mode(&self) -> ActivationMode {
        self.mode
    }

    pub fn meta(&self) -> &NetworkMeta {
        &self.meta
    }

    pub fn input_len(&self) -> usize {
        self.meta.input_width * self.meta.input_height
    }

    pub fn class_count(&self) -> usize {
        self.meta.class_count
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        self.layers.iter().map(DenseLayer::neurons).collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(DenseLayer::parameter_count).sum()
    }

    /// Switches to logistic evaluation. Parameters are untouched because the
    /// thresholds already live in the biases.
    pub fn to_sigmoid(mut self) -> Self {
        self.mode = ActivationMode::Sigmoid;
        self
    }

    /// All parameters drawn independently from `U[lo, hi]`, layer by layer,
    /// weights before biases. Topology, firing flags and meta are kept.
    pub fn randomize_weights(&self, lo: f64, hi: f64, seed: u64) -> Result<Self> {
        if !lo.is_finite() || !hi.is_finite() || lo >= hi {
            return Err(Error::Range {
                what: "initialization range",
                detail: format!("[{lo}, {hi}]"),
            });
        }
        let dist = Uniform::new_inclusive(lo, hi).map_err(|e| Error::Config(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = self.clone();
        for layer in &mut out.layers {
            for w in layer.weights.iter_mut().chain(layer.bias.iter_mut()) {
                *w = dist.sample(&mut rng);
            }
        }
        Ok(out)
    }
}

fn first_two_layers(protos: &PrototypeSet, layer2_bias: f64) -> Result<(DenseLayer, DenseLayer)> {
    let n = protos.len();
    let cells = protos.width() * protos.height();
    let fields = protos.distance_fields();
    let pairs = ordered_pairs(n);

    // tables for i < j, mirrored by negation for j > i
    let upper: Vec<Vec<f64>> = pairs
        .par_iter()
        .filter(|(i, j)| i < j)
        .map(|&(i, j)| {
            build_weight_table(&fields[i], &fields[j], (i, j))
                .map(|t| t.values().iter().map(|&v| v as f64).collect())
        })
        .collect::<Result<_>>()?;
    let upper_index = |i: usize, j: usize| i * n - i * (i + 1) / 2 + (j - i - 1);

    let mut w1 = Vec::with_capacity(pairs.len() * cells);
    for &(i, j) in &pairs {
        if i < j {
            w1.extend_from_slice(&upper[upper_index(i, j)]);
        } else {
            w1.extend(upper[upper_index(j, i)].iter().map(|v| -v));
        }
    }
    let layer1 = DenseLayer::new(
        cells,
        w1,
        vec![0.0; pairs.len()],
        vec![Firing::Strict; pairs.len()],
    )?;

    let mut layer2 = DenseLayer::zeros(pairs.len(), n, Firing::AtLeast);
    for (idx, &(i, _)) in pairs.iter().enumerate() {
        layer2.set_weight(i, idx, 1.0);
    }
    layer2.bias.fill(layer2_bias);
    Ok((layer1, layer2))
}

fn meta_for(protos: &PrototypeSet, architecture: Architecture) -> NetworkMeta {
    NetworkMeta {
        architecture,
        input_width: protos.width(),
        input_height: protos.height(),
        class_count: protos.class_count(),
        prototype_classes: protos.classes().to_vec(),
        prototype_sources: protos.sources().to_vec(),
    }
}

/// Three-layer nearest-neighbor network, threshold mode.
pub fn build_nn_network(protos: &PrototypeSet) -> Result<LayeredNetwork> {
    let n = protos.len();
    let (layer1, layer2) = first_two_layers(protos, -((n - 1) as f64))?;

    let mut layer3 = DenseLayer::zeros(n, protos.class_count(), Firing::Strict);
    for (k, &class) in protos.classes().iter().enumerate() {
        layer3.set_weight(class, k, 1.0);
    }
    LayeredNetwork::new(
        vec![layer1, layer2, layer3],
        ActivationMode::Threshold,
        meta_for(protos, Architecture::NearestNeighbor),
    )
}

/// Four-layer k-nearest-neighbors network over `neighbors` (S) nearest
/// prototypes, threshold mode.
pub fn build_knn_network(protos: &PrototypeSet, neighbors: usize) -> Result<LayeredNetwork> {
    let n = protos.len();
    if neighbors == 0 || neighbors > n {
        return Err(Error::Range {
            what: "neighbor count",
            detail: format!("S = {neighbors} not in [1, {n}]"),
        });
    }
    let (layer1, layer2) = first_two_layers(protos, -((n - neighbors) as f64))?;

    let classes = protos.class_count();
    let class_pairs = ordered_pairs(classes);
    let mut layer3 = DenseLayer::zeros(n, class_pairs.len(), Firing::Strict);
    for (idx, &(k, k1)) in class_pairs.iter().enumerate() {
        for (p, &class) in protos.classes().iter().enumerate() {
            if class == k {
                layer3.set_weight(idx, p, 1.0);
            } else if class == k1 {
                layer3.set_weight(idx, p, -1.0);
            }
        }
    }

    let mut layer4 = DenseLayer::zeros(class_pairs.len(), classes, Firing::AtLeast);
    for (idx, &(k, _)) in class_pairs.iter().enumerate() {
        layer4.set_weight(k, idx, 1.0);
    }
    layer4.bias.fill(-((classes - 1) as f64));

    LayeredNetwork::new(
        vec![layer1, layer2, layer3, layer4],
        ActivationMode::Threshold,
        meta_for(protos, Architecture::KNearest { neighbors }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::BitImage;

    fn toy_protos(n: usize, classes: usize) -> PrototypeSet {
        let images = (0..n)
            .map(|k| BitImage::from_fn(6, 5, move |c, r| (c * 7 + r * 3 + k) % 5 == 0))
            .collect();
        PrototypeSet::new(images, (0..n).map(|k| k % classes).collect(), classes).unwrap()
    }

    #[test]
    fn minimal_network_shape() {
        let net = build_nn_network(&toy_protos(2, 2)).unwrap();
        assert_eq!(net.layer_sizes(), vec![2, 2, 2]);
        assert!(net.layers()[1].bias().iter().all(|&b| b == -1.0));
        assert_eq!(net.mode(), ActivationMode::Threshold);
    }

    #[test]
    fn unit_wiring_and_zero_fill() {
        let protos = toy_protos(5, 3);
        let net = build_nn_network(&protos).unwrap();
        let meta = net.meta();
        let l2 = &net.layers()[1];
        for (idx, (i, j)) in meta.pairs().into_iter().enumerate() {
            assert_eq!(meta.pair_index(i, j), Some(idx));
            for k in 0..5 {
                assert_eq!(l2.weight(k, idx), if k == i { 1.0 } else { 0.0 });
            }
        }
        let l3 = &net.layers()[2];
        for k in 0..5 {
            for class in 0..3 {
                let expect = if protos.classes()[k] == class { 1.0 } else { 0.0 };
                assert_eq!(l3.weight(class, k), expect);
            }
        }
        assert!(l3.bias().iter().all(|&b| b == 0.0));
        assert!(l3.firing().iter().all(|&f| f == Firing::Strict));
        assert!(l2.firing().iter().all(|&f| f == Firing::AtLeast));
    }

    #[test]
    fn first_layer_rows_are_antisymmetric() {
        let net = build_nn_network(&toy_protos(4, 2)).unwrap();
        let meta = net.meta();
        let l1 = &net.layers()[0];
        for (i, j) in meta.pairs() {
            let a = l1.row(meta.pair_index(i, j).unwrap());
            let b = l1.row(meta.pair_index(j, i).unwrap());
            assert!(a.iter().zip(b).all(|(x, y)| x + y == 0.0));
        }
    }

    #[test]
    fn knn_shape_and_biases() {
        let protos = toy_protos(6, 3);
        let net = build_knn_network(&protos, 2).unwrap();
        assert_eq!(net.layer_sizes(), vec![30, 6, 6, 3]);
        assert!(net.layers()[1].bias().iter().all(|&b| b == -4.0));
        assert!(net.layers()[3].bias().iter().all(|&b| b == -2.0));
        let meta = net.meta();
        let l3 = &net.layers()[2];
        let row = l3.row(meta.class_pair_index(1, 2).unwrap());
        for (p, &c) in protos.classes().iter().enumerate() {
            let expect = match c {
                1 => 1.0,
                2 => -1.0,
                _ => 0.0,
            };
            assert_eq!(row[p], expect);
        }
        assert!(matches!(build_knn_network(&protos, 0), Err(Error::Range { .. })));
        assert!(matches!(build_knn_network(&protos, 7), Err(Error::Range { .. })));
    }

    #[test]
    fn sigmoid_switch_keeps_parameters() {
        let net = build_nn_network(&toy_protos(3, 3)).unwrap();
        let sig = net.clone().to_sigmoid();
        assert_eq!(sig.mode(), ActivationMode::Sigmoid);
        assert_eq!(sig.layers(), net.layers());
        assert_eq!(sig.clone().to_sigmoid(), sig);
    }

    #[test]
    fn randomize_is_bounded_and_seeded() {
        let net = build_nn_network(&toy_protos(4, 2)).unwrap();
        let a = net.randomize_weights(-0.5, 0.5, 9).unwrap();
        let b = net.randomize_weights(-0.5, 0.5, 9).unwrap();
        let c = net.randomize_weights(-0.5, 0.5, 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.meta(), net.meta());
        assert_eq!(a.layer_sizes(), net.layer_sizes());
        for l in a.layers() {
            assert!(l.weights().iter().chain(l.bias()).all(|v| (-0.5..=0.5).contains(v)));
        }
        let narrow = net.randomize_weights(0.25, 0.25 + 1e-12, 1).unwrap();
        for l in narrow.layers() {
            assert!(l.weights().iter().all(|v| (v - 0.25).abs() < 1e-9));
        }
        assert!(net.randomize_weights(0.5, 0.5, 1).is_err());
    }
}
