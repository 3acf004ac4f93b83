//! Versioned plain-text model format.
//!
//! ```text
//! metricnet-model 1
//! mode threshold|sigmoid
//! architecture nn | knn <S> | custom
//! input <width> <height>
//! classes <N_pat>
//! prototype-classes <c_0> ... <c_{N-1}>
//! prototype-sources <i_0> ... <i_{N-1}>
//! layers <L>
//! layer <l> <inputs> <neurons>
//! firing <one char per neuron: S strict, A at-least>
//! bias <neurons values>
//! w <inputs values>            (one line per neuron)
//! end
//! ```
//! Reals are written in Rust's shortest round-trip decimal form, so a
//! load after save reproduces every parameter bit for bit.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::network::{ActivationMode, Architecture, DenseLayer, Firing, LayeredNetwork, NetworkMeta};

pub const MAGIC: &str = "metricnet-model";
pub const FORMAT_VERSION: u32 = 1;

fn join<T: ToString>(values: impl IntoIterator<Item = T>) -> String {
    values
        .into_iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn to_text(net: &LayeredNetwork) -> String {
    let meta = net.meta();
    let mut s = String::new();
    let _ = writeln!(s, "{MAGIC} {FORMAT_VERSION}");
    let _ = writeln!(
        s,
        "mode {}",
        match net.mode() {
            ActivationMode::Threshold => "threshold",
            ActivationMode::Sigmoid => "sigmoid",
        }
    );
    let _ = match meta.architecture {
        Architecture::NearestNeighbor => writeln!(s, "architecture nn"),
        Architecture::KNearest { neighbors } => writeln!(s, "architecture knn {neighbors}"),
        Architecture::Custom => writeln!(s, "architecture custom"),
    };
    let _ = writeln!(s, "input {} {}", meta.input_width, meta.input_height);
    let _ = writeln!(s, "classes {}", meta.class_count);
    let _ = writeln!(s, "prototype-classes {}", join(&meta.prototype_classes));
    let _ = writeln!(s, "prototype-sources {}", join(&meta.prototype_sources));
    let _ = writeln!(s, "layers {}", net.layers().len());
    for (l, layer) in net.layers().iter().enumerate() {
        let _ = writeln!(s, "layer {l} {} {}", layer.inputs(), layer.neurons());
        let flags: String = layer
            .firing()
            .iter()
            .map(|f| match f {
                Firing::Strict => 'S',
                Firing::AtLeast => 'A',
            })
            .collect();
        let _ = writeln!(s, "firing {flags}");
        let _ = writeln!(s, "bias {}", join(layer.bias()));
        for n in 0..layer.neurons() {
            let _ = writeln!(s, "w {}", join(layer.row(n)));
        }
    }
    s.push_str("end\n");
    s
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    /// Next line, split into its keyword and the rest.
    fn expect(&mut self, keyword: &str) -> Result<&'a str> {
        let (no, line) = self
            .inner
            .next()
            .ok_or_else(|| Error::Format(format!("unexpected end of model, wanted `{keyword}`")))?;
        let (head, rest) = line.split_once(' ').unwrap_or((line, ""));
        if head != keyword {
            return Err(Error::Format(format!(
                "line {}: expected `{keyword}`, found `{head}`",
                no + 1
            )));
        }
        Ok(rest)
    }
}

fn parse_list<T: FromStr>(s: &str, what: &str) -> Result<Vec<T>> {
    s.split_ascii_whitespace()
        .map(|t| {
            t.parse()
                .map_err(|_| Error::Format(format!("bad {what} value `{t}`")))
        })
        .collect()
}

fn parse_exact<T: FromStr>(s: &str, n: usize, what: &str) -> Result<Vec<T>> {
    let v = parse_list(s, what)?;
    if v.len() != n {
        return Err(Error::Format(format!("{what}: expected {n} values, found {}", v.len())));
    }
    Ok(v)
}

pub fn from_text(text: &str) -> Result<LayeredNetwork> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
    };
    let version = lines.expect(MAGIC)?;
    let version: u32 = version
        .trim()
        .parse()
        .map_err(|_| Error::Format(format!("bad version `{version}`")))?;
    if version != FORMAT_VERSION {
        return Err(Error::Version {
            found: version,
            supported: FORMAT_VERSION,
        });
    }

    let mode = match lines.expect("mode")? {
        "threshold" => ActivationMode::Threshold,
        "sigmoid" => ActivationMode::Sigmoid,
        other => return Err(Error::Format(format!("unknown mode `{other}`"))),
    };
    let arch = lines.expect("architecture")?;
    let architecture = match arch.split_ascii_whitespace().collect::<Vec<_>>().as_slice() {
        ["nn"] => Architecture::NearestNeighbor,
        ["custom"] => Architecture::Custom,
        ["knn", s] => Architecture::KNearest {
            neighbors: s
                .parse()
                .map_err(|_| Error::Format(format!("bad neighbor count `{s}`")))?,
        },
        _ => return Err(Error::Format(format!("unknown architecture `{arch}`"))),
    };
    let input: Vec<usize> = parse_exact(lines.expect("input")?, 2, "input")?;
    let class_count = parse_exact::<usize>(lines.expect("classes")?, 1, "classes")?[0];
    let prototype_classes = parse_list(lines.expect("prototype-classes")?, "prototype class")?;
    let prototype_sources = parse_list(lines.expect("prototype-sources")?, "prototype source")?;
    let layer_count = parse_exact::<usize>(lines.expect("layers")?, 1, "layers")?[0];

    let mut layers = Vec::with_capacity(layer_count);
    for l in 0..layer_count {
        let dims: Vec<usize> = parse_exact(lines.expect("layer")?, 3, "layer header")?;
        if dims[0] != l {
            return Err(Error::Format(format!("layer {} out of order", dims[0])));
        }
        let (inputs, neurons) = (dims[1], dims[2]);
        let firing = lines
            .expect("firing")?
            .chars()
            .map(|c| match c {
                'S' => Ok(Firing::Strict),
                'A' => Ok(Firing::AtLeast),
                other => Err(Error::Format(format!("bad firing flag `{other}`"))),
            })
            .collect::<Result<Vec<_>>>()?;
        let bias = parse_exact(lines.expect("bias")?, neurons, "bias")?;
        let mut weights = Vec::with_capacity(inputs * neurons);
        for _ in 0..neurons {
            weights.extend(parse_exact::<f64>(lines.expect("w")?, inputs, "weight row")?);
        }
        layers.push(DenseLayer::new(inputs, weights, bias, firing)?);
    }
    lines.expect("end")?;

    let meta = NetworkMeta {
        architecture,
        input_width: input[0],
        input_height: input[1],
        class_count,
        prototype_classes,
        prototype_sources,
    };
    LayeredNetwork::new(layers, mode, meta)
}

pub fn save_model(net: &LayeredNetwork, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_text(net)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<LayeredNetwork> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_text(&text)
}
