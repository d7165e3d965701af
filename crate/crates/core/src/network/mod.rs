//! The degradation estimation network and the nonblind restoration network.
//!
//! Both share a seven-layer backbone of 3×3 dilated convolutions with
//! dilations (1, 2, 3, 4, 3, 2, 1), 64 hidden channels and ReLU after every
//! layer but the last. The estimator maps RGB to three attribute channels.
//! The restorer takes RGB plus the three attribute channels and adds its
//! RGB input to the final convolution output.

mod persist;

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub use persist::{load_weights, load_weights_as, save_weights, FORMAT_VERSION, MAGIC};

use crate::attributes::{AttributeMap, ATTRIBUTE_CHANNELS};
use crate::degrade::Seed;
use crate::error::{Error, Result};
use crate::image::{Image, CHANNELS};
use crate::tensor::{conv2d_forward, relu_backward, relu_forward, ConvLayer, Shape, Tensor};

pub const BACKBONE_DILATIONS: [usize; 7] = [1, 2, 3, 4, 3, 2, 1];
pub const HIDDEN_CHANNELS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NetworkKind {
    Estimator,
    Restorer,
}

impl NetworkKind {
    pub fn name(self) -> &'static str {
        match self {
            NetworkKind::Estimator => "estimator",
            NetworkKind::Restorer => "restorer",
        }
    }
}

impl fmt::Display for NetworkKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub dilation: usize,
    pub relu: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchitectureSpec {
    pub kind: NetworkKind,
    pub input_channels: usize,
    pub output_channels: usize,
    pub layers: Vec<LayerSpec>,
    /// Adds the first `output_channels` input channels to the last layer's
    /// output.
    pub input_skip: bool,
}

impl ArchitectureSpec {
    fn backbone(kind: NetworkKind, input: usize, output: usize, skip: bool) -> Self {
        let last = BACKBONE_DILATIONS.len() - 1;
        let layers = BACKBONE_DILATIONS
            .iter()
            .enumerate()
            .map(|(i, &dilation)| LayerSpec {
                in_channels: if i == 0 { input } else { HIDDEN_CHANNELS },
                out_channels: if i == last { output } else { HIDDEN_CHANNELS },
                dilation,
                relu: i != last,
            })
            .collect();
        ArchitectureSpec {
            kind,
            input_channels: input,
            output_channels: output,
            layers,
            input_skip: skip,
        }
    }

    pub fn estimator() -> Self {
        Self::backbone(NetworkKind::Estimator, CHANNELS, ATTRIBUTE_CHANNELS, false)
    }

    pub fn restorer() -> Self {
        Self::backbone(
            NetworkKind::Restorer,
            CHANNELS + ATTRIBUTE_CHANNELS,
            CHANNELS,
            true,
        )
    }

    pub fn for_kind(kind: NetworkKind) -> Self {
        match kind {
            NetworkKind::Estimator => Self::estimator(),
            NetworkKind::Restorer => Self::restorer(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let first = self
            .layers
            .first()
            .ok_or_else(|| Error::invalid("architecture has no layers"))?;
        if first.in_channels != self.input_channels {
            return Err(Error::invalid(format!(
                "first layer takes {} channels, network input has {}",
                first.in_channels, self.input_channels
            )));
        }
        for pair in self.layers.windows(2) {
            if pair[0].out_channels != pair[1].in_channels {
                return Err(Error::invalid("consecutive layer channel counts differ"));
            }
        }
        let last = self.layers.last().expect("non-empty");
        if last.out_channels != self.output_channels {
            return Err(Error::invalid(format!(
                "last layer emits {} channels, network output has {}",
                last.out_channels, self.output_channels
            )));
        }
        if self.layers.iter().any(|l| !(1..=4).contains(&l.dilation)) {
            return Err(Error::invalid("dilation must be in 1..=4"));
        }
        if self.layers.iter().any(|l| l.in_channels == 0 || l.out_channels == 0) {
            return Err(Error::invalid("layers need at least one channel"));
        }
        if self.input_skip && self.output_channels > self.input_channels {
            return Err(Error::invalid("skip connection needs as many input as output channels"));
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.out_channels * l.in_channels * 9 + l.out_channels)
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Metadata {
    pub name: String,
    pub seed: u64,
    pub epochs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkWeights {
    architecture: ArchitectureSpec,
    layers: Vec<ConvLayer>,
    pub metadata: Metadata,
}

/// Layer inputs recorded during a training forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    inputs: Vec<Tensor>,
}

/// Gradient of every layer's weights and bias, in layer order.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkGrads {
    pub layers: Vec<(Tensor, Vec<f32>)>,
}

impl NetworkGrads {
    /// Flattened in the same order as [`NetworkWeights::flat_params`].
    pub fn flatten(&self) -> Vec<f32> {
        let mut out = Vec::new();
        for (w, b) in &self.layers {
            out.extend_from_slice(w.data());
            out.extend_from_slice(b);
        }
        out
    }
}

impl NetworkWeights {
    /// Assembles weights, checking every layer against the architecture.
    pub fn from_layers(
        architecture: ArchitectureSpec,
        layers: Vec<ConvLayer>,
        metadata: Metadata,
    ) -> Result<Self> {
        architecture.validate()?;
        if layers.len() != architecture.layers.len() {
            return Err(Error::invalid(format!(
                "architecture has {} layers, got {}",
                architecture.layers.len(),
                layers.len()
            )));
        }
        for (i, (spec, layer)) in architecture.layers.iter().zip(&layers).enumerate() {
            if layer.in_channels() != spec.in_channels
                || layer.out_channels() != spec.out_channels
                || layer.dilation() != spec.dilation
            {
                return Err(Error::invalid(format!("layer {i} does not match architecture")));
            }
        }
        Ok(NetworkWeights {
            architecture,
            layers,
            metadata,
        })
    }

    /// All weights and biases zero.
    pub fn zeros(architecture: ArchitectureSpec) -> Result<Self> {
        architecture.validate()?;
        let layers = architecture
            .layers
            .iter()
            .map(|l| ConvLayer::zeros(l.in_channels, l.out_channels, l.dilation))
            .collect::<Result<Vec<_>>>()?;
        let metadata = Metadata {
            name: architecture.kind.name().to_string(),
            seed: 0,
            epochs: 0,
        };
        Self::from_layers(architecture, layers, metadata)
    }

    pub fn architecture(&self) -> &ArchitectureSpec {
        &self.architecture
    }

    pub fn kind(&self) -> NetworkKind {
        self.architecture.kind
    }

    pub fn layers(&self) -> &[ConvLayer] {
        &self.layers
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(ConvLayer::param_count).sum()
    }

    pub fn expect_kind(&self, kind: NetworkKind) -> Result<()> {
        if self.kind() != kind {
            return Err(Error::ArchitectureMismatch {
                expected: kind.name().to_string(),
                found: self.kind().name().to_string(),
            });
        }
        Ok(())
    }

    /// Parameters as `[w0, b0, w1, b1, …]`.
    pub fn flat_params(&self) -> Vec<f32> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend_from_slice(l.weights().data());
            out.extend_from_slice(l.bias());
        }
        out
    }

    pub fn set_flat_params(&mut self, params: &[f32]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::invalid(format!(
                "expected {} parameters, got {}",
                self.param_count(),
                params.len()
            )));
        }
        if params.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite parameter"));
        }
        let mut offset = 0;
        for l in &mut self.layers {
            let wl = l.weights().data().len();
            l.weights_mut().copy_from_slice(&params[offset..offset + wl]);
            offset += wl;
            let bl = l.bias().len();
            l.bias_mut().copy_from_slice(&params[offset..offset + bl]);
            offset += bl;
        }
        Ok(())
    }

    fn check_input(&self, input: &Tensor) -> Result<()> {
        let c = input.shape().c;
        if c != self.architecture.input_channels {
            return Err(Error::invalid(format!(
                "{} network takes {} input channels, got tensor {}",
                self.kind(),
                self.architecture.input_channels,
                input.shape()
            )));
        }
        Ok(())
    }

    fn add_skip(&self, input: &Tensor, out: Tensor) -> Result<Tensor> {
        if !self.architecture.input_skip {
            return Ok(out);
        }
        let skip = input.channels(0, self.architecture.output_channels)?;
        out.add(&skip)
    }

    /// Raw network output (no clamping) for a batch.
    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        self.check_input(input)?;
        let mut x = input.clone();
        for (spec, layer) in self.architecture.layers.iter().zip(&self.layers) {
            x = conv2d_forward(&x, layer)?;
            if spec.relu {
                x = relu_forward(&x);
            }
        }
        self.add_skip(input, x)
    }

    /// Forward pass that keeps what [`Self::backward`] needs.
    pub fn forward_train(&self, input: &Tensor) -> Result<(Tensor, ForwardCache)> {
        self.check_input(input)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut x = input.clone();
        for (spec, layer) in self.architecture.layers.iter().zip(&self.layers) {
            let y = conv2d_forward(&x, layer)?;
            inputs.push(x);
            x = if spec.relu { relu_forward(&y) } else { y };
        }
        let out = self.add_skip(&inputs[0], x)?;
        Ok((out, ForwardCache { inputs }))
    }

    /// Parameter gradients given the loss gradient w.r.t. the raw output.
    pub fn backward(&self, cache: &ForwardCache, grad_output: &Tensor) -> Result<NetworkGrads> {
        let n = self.layers.len();
        let mut grads = Vec::with_capacity(n);
        // the skip path has no parameters, so the output gradient flows
        // into the last layer unchanged
        let mut up = grad_output.clone();
        for i in (0..n).rev() {
            let layer = &self.layers[i];
            let input = &cache.inputs[i];
            let ((gw, gb), gin) =
                crate::tensor::conv2d_backward_impl(input, layer, &up, i > 0)?;
            grads.push((gw, gb));
            if let Some(gin) = gin {
                // inputs[i] is the post-ReLU output of layer i-1; it is
                // positive exactly where the pre-activation was
                up = if self.architecture.layers[i - 1].relu {
                    relu_backward(input, &gin)?
                } else {
                    gin
                };
            }
        }
        grads.reverse();
        Ok(NetworkGrads { layers: grads })
    }
}

/// He-normal initialization (`std = sqrt(2 / fan_in)`), zero biases.
pub fn init_network(architecture: ArchitectureSpec, seed: Seed) -> Result<NetworkWeights> {
    architecture.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed.0);
    let mut layers = Vec::with_capacity(architecture.layers.len());
    for spec in &architecture.layers {
        let fan_in = spec.in_channels * 9;
        let normal = Normal::new(0.0f64, (2.0 / fan_in as f64).sqrt())
            .map_err(|e| Error::invalid(format!("init distribution: {e}")))?;
        let shape = Shape::new(spec.out_channels, spec.in_channels, 3, 3);
        let data = (0..shape.len()).map(|_| normal.sample(&mut rng) as f32).collect();
        layers.push(ConvLayer::new(
            Tensor::new(shape, data)?,
            vec![0.0; spec.out_channels],
            spec.dilation,
        )?);
    }
    let metadata = Metadata {
        name: architecture.kind.name().to_string(),
        seed: seed.0,
        epochs: 0,
    };
    NetworkWeights::from_layers(architecture, layers, metadata)
}

/// Raw per-pixel attribute estimate, same spatial size as `img`.
pub fn forward_estimate(weights: &NetworkWeights, img: &Image) -> Result<AttributeMap> {
    weights.expect_kind(NetworkKind::Estimator)?;
    let out = weights.forward(&img.to_tensor())?;
    AttributeMap::from_tensor(&out, 0)
}

/// `clamp(img + conv_stack(concat(img, attrs)), 0, 1)`.
pub fn forward_restore(weights: &NetworkWeights, img: &Image, attrs: &AttributeMap) -> Result<Image> {
    weights.expect_kind(NetworkKind::Restorer)?;
    if !attrs.same_size(img) {
        return Err(Error::invalid(format!(
            "attribute map is {}x{} but image is {}x{}",
            attrs.width(),
            attrs.height(),
            img.width(),
            img.height()
        )));
    }
    let input = img.to_tensor().concat_channels(&attrs.to_tensor())?;
    let out = weights.forward(&input)?;
    Image::from_tensor(&out, 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::degrade::DegradationSpec;
    use crate::synth;

    #[test]
    fn architecture_layouts() {
        let e = ArchitectureSpec::estimator();
        e.validate().unwrap();
        assert_eq!(e.layers.len(), 7);
        assert_eq!(e.layers.iter().map(|l| l.dilation).collect::<Vec<_>>(), BACKBONE_DILATIONS);
        assert_eq!((e.input_channels, e.output_channels, e.input_skip), (3, 3, false));
        assert_eq!(e.layers.iter().filter(|l| l.relu).count(), 6);
        assert!(!e.layers[6].relu);

        let r = ArchitectureSpec::restorer();
        r.validate().unwrap();
        assert_eq!((r.input_channels, r.output_channels, r.input_skip), (6, 3, true));
        assert_eq!(r.layers[0].in_channels, 6);
    }

    #[test]
    fn estimator_parameter_count() {
        // (3·64 + 5·64·64 + 64·3)·9 weights + (6·64 + 3) biases
        let formula = (3 * 64 + 5 * 64 * 64 + 64 * 3) * 9 + (6 * 64 + 3);
        assert_eq!(formula, 188_163);
        let w = init_network(ArchitectureSpec::estimator(), Seed(1)).unwrap();
        assert_eq!(w.param_count(), formula);
        assert_eq!(ArchitectureSpec::estimator().param_count(), formula);
        assert_eq!(w.flat_params().len(), formula);
    }

    #[test]
    fn init_is_seeded() {
        let a = init_network(ArchitectureSpec::estimator(), Seed(5)).unwrap();
        let b = init_network(ArchitectureSpec::estimator(), Seed(5)).unwrap();
        let c = init_network(ArchitectureSpec::estimator(), Seed(6)).unwrap();
        assert_eq!(a.flat_params(), b.flat_params());
        assert_ne!(a.flat_params(), c.flat_params());
    }

    #[test]
    fn init_std_follows_fan_in() {
        let w = init_network(ArchitectureSpec::restorer(), Seed(9)).unwrap();
        for (spec, layer) in w.architecture().layers.iter().zip(w.layers()) {
            assert!(layer.bias().iter().all(|&b| b == 0.0));
            if spec.in_channels != 64 || spec.out_channels != 64 {
                continue;
            }
            let d = layer.weights().data();
            let n = d.len() as f64;
            let mean = d.iter().map(|&v| f64::from(v)).sum::<f64>() / n;
            let std = (d.iter().map(|&v| (f64::from(v) - mean).powi(2)).sum::<f64>() / n).sqrt();
            let target = (2.0 / (64.0 * 9.0f64)).sqrt();
            assert!((std / target - 1.0).abs() < 0.2, "std {std} vs {target}");
        }
    }

    #[test]
    fn zero_estimator_outputs_zero_map() {
        let w = NetworkWeights::zeros(ArchitectureSpec::estimator()).unwrap();
        let img = synth::scene(Seed(2), 12, 10);
        let m = forward_estimate(&w, &img).unwrap();
        assert_eq!((m.height(), m.width()), (12, 10));
        assert!(m.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_restorer_is_identity() {
        let w = NetworkWeights::zeros(ArchitectureSpec::restorer()).unwrap();
        let img = synth::scene(Seed(3), 9, 14);
        let attrs = AttributeMap::constant(&DegradationSpec::new(2.0, 30.0, Some(20)).unwrap(), 9, 14).unwrap();
        assert_eq!(forward_restore(&w, &img, &attrs).unwrap(), img);
        // exact before clamping, too
        let input = img.to_tensor().concat_channels(&attrs.to_tensor()).unwrap();
        assert_eq!(w.forward(&input).unwrap(), img.to_tensor());
    }

    #[test]
    fn fully_convolutional_shapes() {
        let w = init_network(ArchitectureSpec::estimator(), Seed(4)).unwrap();
        for (h, wd) in [(8, 8), (16, 16), (11, 23)] {
            let img = synth::scene(Seed(1), h, wd);
            let m = forward_estimate(&w, &img).unwrap();
            assert_eq!((m.height(), m.width()), (h, wd));
        }
        let r = init_network(ArchitectureSpec::restorer(), Seed(4)).unwrap();
        let img = synth::scene(Seed(1), 10, 12);
        let attrs = AttributeMap::constant(&DegradationSpec::clean(), 10, 12).unwrap();
        let out = forward_restore(&r, &img, &attrs).unwrap();
        assert_eq!((out.height(), out.width()), (10, 12));
    }

    #[test]
    fn role_and_size_mismatches() {
        let e = NetworkWeights::zeros(ArchitectureSpec::estimator()).unwrap();
        let r = NetworkWeights::zeros(ArchitectureSpec::restorer()).unwrap();
        let img = synth::scene(Seed(1), 8, 8);
        let attrs = AttributeMap::constant(&DegradationSpec::clean(), 8, 8).unwrap();
        assert!(matches!(forward_estimate(&r, &img), Err(Error::ArchitectureMismatch { .. })));
        assert!(matches!(forward_restore(&e, &img, &attrs), Err(Error::ArchitectureMismatch { .. })));
        let small = AttributeMap::constant(&DegradationSpec::clean(), 8, 7).unwrap();
        assert!(forward_restore(&r, &img, &small).is_err());
    }

    #[test]
    fn flat_params_roundtrip() {
        let mut w = init_network(ArchitectureSpec::estimator(), Seed(8)).unwrap();
        let mut p = w.flat_params();
        p[0] = 0.25;
        let last = p.len() - 1;
        p[last] = -0.5;
        w.set_flat_params(&p).unwrap();
        assert_eq!(w.layers()[0].weights().data()[0], 0.25);
        assert_eq!(*w.layers()[6].bias().last().unwrap(), -0.5);
        assert!(w.set_flat_params(&p[1..]).is_err());
    }
}
