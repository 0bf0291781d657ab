//! The trainable stack: encoder (frozen bottom, trainable top), linear
//! projection with L2 normalization, and a unit-norm codebook.

mod checkpoint;
mod codebook;
mod encoder;
mod projection;

pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use codebook::{code_logits, code_probabilities, quantize_argmax, Codebook, UNIT_NORM_TOL};
pub use encoder::{encode, Activation, AffineBlock, EncoderParams};
pub use projection::{normalize_rows, project_normalize, ProjectionParams, MIN_PROJECTED_NORM};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::seeded_rng;

/// Encoder geometry. Every layer is `hidden_dim` wide; with zero layers the
/// encoder is the identity and the projection reads the input directly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDims {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub n_frozen: usize,
    pub n_trainable: usize,
    #[serde(default = "default_true")]
    pub projection_bias: bool,
}

fn default_true() -> bool {
    true
}

impl Default for ModelDims {
    fn default() -> Self {
        Self {
            input_dim: 40,
            hidden_dim: 128,
            n_frozen: 1,
            n_trainable: 2,
            projection_bias: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub encoder: EncoderParams,
    pub projection: ProjectionParams,
    pub codebook: Codebook,
}

impl ModelParams {
    pub fn k(&self) -> usize {
        self.codebook.k()
    }

    pub fn dim(&self) -> usize {
        self.codebook.dim()
    }
}

/// Deterministic initialization: Glorot-uniform affine layers, zero biases,
/// codewords uniform on the sphere.
pub fn init_params(dims: &ModelDims, k: usize, d: usize, tau: f64, seed: u64) -> Result<ModelParams> {
    if dims.input_dim == 0 {
        return Err(Error::spec("input_dim", "must be positive"));
    }
    let n_layers = dims.n_frozen + dims.n_trainable;
    if n_layers > 0 && dims.hidden_dim == 0 {
        return Err(Error::spec("hidden_dim", "must be positive"));
    }
    if k == 0 {
        return Err(Error::spec("K", "must be positive"));
    }
    if d == 0 {
        return Err(Error::spec("D", "must be positive"));
    }
    let mut rng = seeded_rng(seed, 0x6d6f64656c);
    let mut layers = Vec::with_capacity(n_layers);
    let mut width = dims.input_dim;
    for _ in 0..n_layers {
        layers.push(AffineBlock::glorot(width, dims.hidden_dim, Activation::Tanh, &mut rng));
        width = dims.hidden_dim;
    }
    let encoder = EncoderParams::new(dims.input_dim, layers, dims.n_frozen)?;
    let projection = ProjectionParams::glorot(width, d, dims.projection_bias, &mut rng);
    let codebook = Codebook::random(k, d, tau, &mut rng)?;
    Ok(ModelParams {
        encoder,
        projection,
        codebook,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_deterministic_and_unit_norm() {
        let dims = ModelDims::default();
        let a = init_params(&dims, 64, 32, 0.1, 5).unwrap();
        let b = init_params(&dims, 64, 32, 0.1, 5).unwrap();
        let c = init_params(&dims, 64, 32, 0.1, 6).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.codebook.max_norm_deviation() <= 1e-6);
        assert_eq!(a.encoder.n_frozen, 1);
        assert_eq!(a.encoder.n_trainable(), 2);
    }

    #[test]
    fn full_scale_geometry() {
        let dims = ModelDims {
            input_dim: 40,
            hidden_dim: 64,
            ..ModelDims::default()
        };
        let p = init_params(&dims, 256, 256, 0.1, 0).unwrap();
        assert_eq!(p.codebook.codewords.dim(), (256, 256));
        assert_eq!(p.projection.weight.dim(), (256, 64));
    }

    #[test]
    fn zero_dimensions_are_rejected() {
        let dims = ModelDims {
            input_dim: 0,
            ..ModelDims::default()
        };
        assert!(init_params(&dims, 4, 4, 0.1, 0).is_err());
        assert!(init_params(&ModelDims::default(), 0, 4, 0.1, 0).is_err());
        assert!(init_params(&ModelDims::default(), 4, 0, 0.1, 0).is_err());
    }
}
