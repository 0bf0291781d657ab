use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::FrameMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Tanh,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the activation's output.
    #[inline]
    pub fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Tanh => 1.0 - y * y,
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            Activation::Identity => 0,
            Activation::Tanh => 1,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Activation::Identity),
            1 => Some(Activation::Tanh),
            _ => None,
        }
    }
}

/// `y = act(W x + b)` with `W` stored output-major (`out × in`).
#[derive(Clone, Debug, PartialEq)]
pub struct AffineBlock {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

impl AffineBlock {
    pub fn input_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.nrows()
    }

    /// Glorot-uniform weights, zero bias.
    pub fn glorot<R: Rng + ?Sized>(
        input_dim: usize,
        output_dim: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let limit = (6.0 / (input_dim + output_dim) as f64).sqrt();
        let weight =
            Array2::from_shape_fn((output_dim, input_dim), |_| rng.random_range(-limit..=limit));
        Self {
            weight,
            bias: Array1::zeros(output_dim),
            activation,
        }
    }

    pub fn forward(&self, x: &FrameMatrix) -> FrameMatrix {
        let mut y = x.dot(&self.weight.t());
        y += &self.bias.view().insert_axis(Axis(0));
        let act = self.activation;
        y.mapv_inplace(|v| act.apply(v));
        y
    }
}

/// Stack of affine blocks; the first `n_frozen` never receive updates.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderParams {
    pub layers: Vec<AffineBlock>,
    pub n_frozen: usize,
    input_dim: usize,
}

impl EncoderParams {
    pub fn new(input_dim: usize, layers: Vec<AffineBlock>, n_frozen: usize) -> Result<Self> {
        if n_frozen > layers.len() {
            return Err(Error::InvalidConfig(format!(
                "{n_frozen} frozen layers requested but the encoder has {}",
                layers.len()
            )));
        }
        let mut width = input_dim;
        for layer in &layers {
            if layer.input_dim() != width {
                return Err(Error::DimensionMismatch {
                    context: "encoder layer input",
                    expected: width,
                    found: layer.input_dim(),
                });
            }
            if layer.bias.len() != layer.output_dim() {
                return Err(Error::DimensionMismatch {
                    context: "encoder layer bias",
                    expected: layer.output_dim(),
                    found: layer.bias.len(),
                });
            }
            width = layer.output_dim();
        }
        Ok(Self {
            layers,
            n_frozen,
            input_dim,
        })
    }

    /// Zero-layer encoder: the identity map on `input_dim` columns.
    pub fn identity(input_dim: usize) -> Self {
        Self {
            layers: Vec::new(),
            n_frozen: 0,
            input_dim,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers
            .last()
            .map_or(self.input_dim, AffineBlock::output_dim)
    }

    pub fn n_trainable(&self) -> usize {
        self.layers.len() - self.n_frozen
    }

    /// Outputs of every layer, starting with the input itself
    /// (`trace[0] = batch`, `trace[l + 1] = layer l output`).
    pub fn trace(&self, batch: &FrameMatrix) -> Result<Vec<FrameMatrix>> {
        self.check_input(batch)?;
        let mut outs = Vec::with_capacity(self.layers.len() + 1);
        outs.push(batch.clone());
        for layer in &self.layers {
            let next = layer.forward(outs.last().expect("non-empty"));
            outs.push(next);
        }
        Ok(outs)
    }

    fn check_input(&self, batch: &FrameMatrix) -> Result<()> {
        if batch.ncols() != self.input_dim {
            return Err(Error::DimensionMismatch {
                context: "encoder input columns",
                expected: self.input_dim,
                found: batch.ncols(),
            });
        }
        Ok(())
    }
}

/// Frame-wise forward pass through the whole encoder.
pub fn encode(batch: &FrameMatrix, params: &EncoderParams) -> Result<FrameMatrix> {
    params.check_input(batch)?;
    let mut h = batch.clone();
    for layer in &params.layers {
        h = layer.forward(&h);
    }
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::seeded_rng;
    use ndarray::array;

    #[test]
    fn zero_layer_encoder_is_identity() {
        let x = array![[1.0, -2.0], [0.5, 3.0]];
        let enc = EncoderParams::identity(2);
        assert_eq!(encode(&x, &enc).unwrap(), x);
    }

    #[test]
    fn identity_initialized_block_passes_input_through() {
        let x = array![[1.0, -2.0, 0.0], [0.5, 3.0, 7.0]];
        let block = AffineBlock {
            weight: Array2::eye(3),
            bias: Array1::zeros(3),
            activation: Activation::Identity,
        };
        let enc = EncoderParams::new(3, vec![block], 0).unwrap();
        assert_eq!(encode(&x, &enc).unwrap(), x);
    }

    #[test]
    fn row_count_is_preserved() {
        let mut rng = seeded_rng(3, 0);
        let layers = vec![
            AffineBlock::glorot(8, 16, Activation::Tanh, &mut rng),
            AffineBlock::glorot(16, 16, Activation::Tanh, &mut rng),
        ];
        let enc = EncoderParams::new(8, layers, 1).unwrap();
        let x = Array2::from_elem((500, 8), 0.3);
        let h = encode(&x, &enc).unwrap();
        assert_eq!(h.dim(), (500, 16));
        assert_eq!(enc.trace(&x).unwrap().len(), 3);
    }

    #[test]
    fn rejects_wrong_input_width() {
        let enc = EncoderParams::identity(4);
        let err = encode(&Array2::zeros((2, 3)), &enc).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { expected: 4, found: 3, .. }));
    }

    #[test]
    fn rejects_inconsistent_layer_chain() {
        let mut rng = seeded_rng(0, 0);
        let layers = vec![
            AffineBlock::glorot(4, 6, Activation::Tanh, &mut rng),
            AffineBlock::glorot(5, 6, Activation::Tanh, &mut rng),
        ];
        assert!(EncoderParams::new(4, layers, 0).is_err());
    }
}
