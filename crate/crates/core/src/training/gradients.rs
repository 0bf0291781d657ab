//! Forward pass of both views and hand-written backpropagation of the
//! swapped loss. Targets are computed once per step and enter the backward
//! pass as constants.

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::assignment::AssignmentMatrix;
use crate::error::{Error, Result};
use crate::model::{code_logits, normalize_rows, quantize_argmax, ModelParams};
use crate::numeric::CompensatedSum;
use crate::sinkhorn::{smooth_targets, SinkhornConfig};
use crate::FrameMatrix;

use super::loss::log_floor;

/// How targets are derived from a view's representations.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetMode {
    /// Balanced, entropy-smoothed assignment.
    #[default]
    Sinkhorn,
    /// One-hot argmax of the view's own code distribution (no smoothing).
    Argmax,
}

/// Everything the backward pass needs from one view's forward pass.
#[derive(Clone, Debug)]
pub struct ViewForward {
    /// `trace[0]` is the input, `trace[l + 1]` the output of layer `l`.
    pub trace: Vec<FrameMatrix>,
    pub projected_norms: Array1<f64>,
    pub z: FrameMatrix,
    pub log_p: Array2<f64>,
    pub p: AssignmentMatrix,
}

impl ViewForward {
    pub fn hidden(&self) -> &FrameMatrix {
        self.trace.last().expect("trace holds the input")
    }
}

pub fn forward_view(x: &FrameMatrix, params: &ModelParams) -> Result<ViewForward> {
    let trace = params.encoder.trace(x)?;
    let u = params.projection.affine(trace.last().expect("non-empty"))?;
    let (z, projected_norms) = normalize_rows(&u)?;
    let logits = code_logits(&z, &params.codebook)?;
    let mut log_p = logits;
    for mut row in log_p.axis_iter_mut(Axis(0)) {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let mut acc = CompensatedSum::new();
        for v in row.iter() {
            acc.add((v - max).exp());
        }
        let lse = max + acc.value().ln();
        row.mapv_inplace(|v| v - lse);
    }
    let p = AssignmentMatrix::from_trusted(log_p.mapv(f64::exp));
    Ok(ViewForward {
        trace,
        projected_norms,
        z,
        log_p,
        p,
    })
}

/// Targets for one view.
pub fn view_targets(
    view: &ViewForward,
    params: &ModelParams,
    mode: TargetMode,
    sinkhorn: &SinkhornConfig,
) -> Result<AssignmentMatrix> {
    match mode {
        TargetMode::Sinkhorn => smooth_targets(&view.z, &params.codebook, sinkhorn),
        TargetMode::Argmax => AssignmentMatrix::one_hot(&quantize_argmax(&view.p), params.k()),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerGradient {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Gradients for every parameter block. Frozen encoder layers carry
/// all-zero blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub encoder: Vec<LayerGradient>,
    pub projection_weight: Array2<f64>,
    pub projection_bias: Option<Array1<f64>>,
    pub codebook: Array2<f64>,
}

impl Gradients {
    pub fn zeros_like(params: &ModelParams) -> Self {
        Self {
            encoder: params
                .encoder
                .layers
                .iter()
                .map(|l| LayerGradient {
                    weight: Array2::zeros(l.weight.raw_dim()),
                    bias: Array1::zeros(l.bias.raw_dim()),
                })
                .collect(),
            projection_weight: Array2::zeros(params.projection.weight.raw_dim()),
            projection_bias: params
                .projection
                .bias
                .as_ref()
                .map(|b| Array1::zeros(b.raw_dim())),
            codebook: Array2::zeros(params.codebook.codewords.raw_dim()),
        }
    }

    /// Named blocks in a fixed order, for diagnostics and checks.
    pub fn blocks(&self) -> Vec<(String, &[f64])> {
        let mut out = Vec::new();
        for (i, l) in self.encoder.iter().enumerate() {
            out.push((format!("encoder.{i}.weight"), l.weight.as_slice().expect("standard layout")));
            out.push((format!("encoder.{i}.bias"), l.bias.as_slice().expect("standard layout")));
        }
        out.push((
            "projection.weight".into(),
            self.projection_weight.as_slice().expect("standard layout"),
        ));
        if let Some(b) = &self.projection_bias {
            out.push(("projection.bias".into(), b.as_slice().expect("standard layout")));
        }
        out.push(("codebook".into(), self.codebook.as_slice().expect("standard layout")));
        out
    }

    pub fn check_finite(&self) -> Result<()> {
        for (name, values) in self.blocks() {
            if values.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteGradient(name));
            }
        }
        Ok(())
    }
}

/// Loss and gradients of one swapped-prediction step.
#[derive(Clone, Debug)]
pub struct StepOutput {
    pub loss: f64,
    pub gradients: Gradients,
    pub original: ViewForward,
    pub perturbed: ViewForward,
}

/// Swapped loss with fixed targets and its gradients with respect to every
/// trainable block. `q_star` comes from the original view and
/// `q_tilde_star` from the perturbed one; each view predicts the other's.
pub fn swapped_objective(
    params: &ModelParams,
    original: &FrameMatrix,
    perturbed: &FrameMatrix,
    q_star: &AssignmentMatrix,
    q_tilde_star: &AssignmentMatrix,
) -> Result<StepOutput> {
    let fo = forward_view(original, params)?;
    let fp = forward_view(perturbed, params)?;
    objective_from_views(params, fo, fp, q_star, q_tilde_star)
}

pub(crate) fn objective_from_views(
    params: &ModelParams,
    fo: ViewForward,
    fp: ViewForward,
    q_star: &AssignmentMatrix,
    q_tilde_star: &AssignmentMatrix,
) -> Result<StepOutput> {
    let b = fo.z.nrows();
    if fp.z.nrows() != b {
        return Err(Error::DimensionMismatch {
            context: "perturbed view frames",
            expected: b,
            found: fp.z.nrows(),
        });
    }
    let k = params.k();
    for q in [q_star, q_tilde_star] {
        if q.view().dim() != (b, k) {
            return Err(Error::DimensionMismatch {
                context: "target rows",
                expected: b,
                found: q.rows(),
            });
        }
    }
    let scale = 1.0 / (2.0 * b as f64);
    let mut loss = CompensatedSum::new();
    let mut grads = Gradients::zeros_like(params);
    for (view, target) in [(&fo, q_tilde_star), (&fp, q_star)] {
        let g_logits = logit_gradient(view, target.as_array(), scale, &mut loss);
        backprop_view(params, view, &g_logits, &mut grads);
    }
    grads.check_finite()?;
    Ok(StepOutput {
        loss: loss.value(),
        gradients: grads,
        original: fo,
        perturbed: fp,
    })
}

/// Accumulates `scale · Σ -T log P` into `loss` and returns `∂loss/∂logits`.
/// Entries whose log-probability sits below the floor are constant in the
/// loss and contribute no gradient.
fn logit_gradient(
    view: &ViewForward,
    target: &Array2<f64>,
    scale: f64,
    loss: &mut CompensatedSum,
) -> Array2<f64> {
    let floor = log_floor();
    let (b, k) = view.log_p.dim();
    let mut g = Array2::zeros((b, k));
    for i in 0..b {
        let mut active_mass = 0.0;
        for j in 0..k {
            let t = target[[i, j]];
            let lp = view.log_p[[i, j]];
            if t != 0.0 {
                loss.add(-scale * t * lp.max(floor));
            }
            if lp >= floor {
                active_mass += t;
                g[[i, j]] = -scale * t;
            }
        }
        let p = view.p.view();
        for j in 0..k {
            g[[i, j]] += scale * p[[i, j]] * active_mass;
        }
    }
    g
}

fn backprop_view(params: &ModelParams, view: &ViewForward, g_logits: &Array2<f64>, grads: &mut Gradients) {
    let tau = params.codebook.tau;
    let c = &params.codebook.codewords;
    // logits = Z C^T / tau
    let g_z = g_logits.dot(c) / tau;
    grads.codebook += &(g_logits.t().dot(&view.z) / tau);

    // z = u / |u|
    let mut g_u = g_z;
    for ((mut gu, z), &n) in g_u
        .axis_iter_mut(Axis(0))
        .zip(view.z.axis_iter(Axis(0)))
        .zip(view.projected_norms.iter())
    {
        let radial = gu.dot(&z);
        gu.zip_mut_with(&z, |g, &zi| *g = (*g - radial * zi) / n);
    }

    // u = W_p h + b_p
    let h = view.hidden();
    grads.projection_weight += &g_u.t().dot(h);
    if let Some(gb) = grads.projection_bias.as_mut() {
        *gb += &g_u.sum_axis(Axis(0));
    }
    let enc = &params.encoder;
    if enc.n_trainable() == 0 {
        return;
    }
    let mut g_h = g_u.dot(&params.projection.weight);
    for l in (enc.n_frozen..enc.layers.len()).rev() {
        let layer = &enc.layers[l];
        let y = &view.trace[l + 1];
        let act = layer.activation;
        g_h.zip_mut_with(y, |g, &yv| *g *= act.derivative_from_output(yv));
        let lg = &mut grads.encoder[l];
        lg.weight += &g_h.t().dot(&view.trace[l]);
        lg.bias += &g_h.sum_axis(Axis(0));
        if l > enc.n_frozen {
            g_h = g_h.dot(&layer.weight);
        }
    }
}
