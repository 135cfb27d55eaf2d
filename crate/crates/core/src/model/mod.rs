//! The hierarchical implicit field network and its derivative passes.
//!
//! Per-joint two-layer encoders follow the kinematic tree: a root encoder
//! sees its own quaternion, a child encoder sees its quaternion concatenated
//! with the parent's feature vector. All joint features are concatenated and
//! a multi-layer head maps them to a single non-negative scalar. Every
//! affine layer is followed by a sharp softplus; the final softplus doubles
//! as the non-negativity map for the output.
//!
//! Three exact passes are implemented by hand over this fixed architecture:
//!
//! - forward evaluation with cached pre-activations,
//! - reverse mode for input gradients and for parameter gradients of the
//!   distance loss,
//! - forward-over-reverse for parameter gradients of the Eikonal term,
//!   which needs the derivative of the input gradient.
//!
//! All reductions run in a fixed order (sequential index order per scalar;
//! batch sums in fixed 32-sample chunks), so results are bit-reproducible
//! across runs, thread counts, and platforms.

mod checkpoint;

pub use checkpoint::{load_model, load_model_for, save_model, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};

use crate::dataset::LabeledPose;
use crate::error::{Error, Result};
use crate::so3::{Pose, SkeletonTopology};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Architecture hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    /// Per-joint feature width `l`.
    pub feature_dim: usize,
    /// Hidden width of each two-layer joint encoder.
    pub enc_hidden: usize,
    /// Hidden width of the distance head.
    pub head_width: usize,
    /// Number of affine layers in the head.
    pub head_layers: usize,
    /// Softplus sharpness for hidden activations.
    pub beta: f64,
    /// Softplus sharpness of the output map. Sharper than the hidden
    /// activations so the value keeps a usable gradient down to the
    /// projection tolerance.
    pub out_beta: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            feature_dim: 6,
            enc_hidden: 32,
            head_width: 256,
            head_layers: 5,
            beta: 100.0,
            out_beta: 1000.0,
        }
    }
}

/// Offsets of one affine layer inside the flat parameter vector.
///
/// Weights are row-major `[out_dim][in_dim]` at `w`, biases at `b`.
#[derive(Debug, Clone, Copy)]
pub struct LayerSpec {
    pub w: usize,
    pub b: usize,
    pub in_dim: usize,
    pub out_dim: usize,
}

/// The field network: skeleton binding, architecture, and flat parameters.
#[derive(Debug, Clone)]
pub struct FieldModel {
    skel: SkeletonTopology,
    cfg: ModelConfig,
    layers: Vec<LayerSpec>,
    params: Vec<f64>,
}

/// Canonical layer table: encoder layer pairs per joint in joint order,
/// then the head layers. Returns the table and the total parameter count.
fn build_layers(skel: &SkeletonTopology, cfg: &ModelConfig) -> Result<(Vec<LayerSpec>, usize)> {
    if cfg.feature_dim < 1 || cfg.enc_hidden < 1 || cfg.head_width < 1 {
        return Err(Error::Config("model widths must be at least 1".into()));
    }
    if cfg.head_layers < 2 {
        return Err(Error::Config("head needs at least 2 layers".into()));
    }
    if !(cfg.beta.is_finite() && cfg.beta > 0.0) || !(cfg.out_beta.is_finite() && cfg.out_beta > 0.0) {
        return Err(Error::Config(format!(
            "softplus sharpness must be positive, got beta={} out_beta={}",
            cfg.beta, cfg.out_beta
        )));
    }
    let k = skel.len();
    let l = cfg.feature_dim;
    let mut layers = Vec::with_capacity(2 * k + cfg.head_layers);
    let mut off = 0usize;
    let push = |in_dim: usize, out_dim: usize, off: &mut usize| {
        let spec = LayerSpec { w: *off, b: *off + in_dim * out_dim, in_dim, out_dim };
        *off += in_dim * out_dim + out_dim;
        spec
    };
    for j in 0..k {
        let in_dim = if skel.parent(j).is_none() { 4 } else { 4 + l };
        layers.push(push(in_dim, cfg.enc_hidden, &mut off));
        layers.push(push(cfg.enc_hidden, l, &mut off));
    }
    let mut in_dim = l * k;
    for h in 0..cfg.head_layers {
        let out_dim = if h + 1 == cfg.head_layers { 1 } else { cfg.head_width };
        layers.push(push(in_dim, out_dim, &mut off));
        in_dim = out_dim;
    }
    Ok((layers, off))
}

impl FieldModel {
    /// Initializes a model for `skel` with uniform Glorot weights
    /// (`U[-s, s]`, `s = sqrt(6 / (fan_in + fan_out))`) and zero biases.
    pub fn init(skel: &SkeletonTopology, cfg: ModelConfig, seed: u64) -> Result<Self> {
        let (layers, param_len) = build_layers(skel, &cfg)?;
        let mut params = vec![0.0; param_len];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for spec in &layers {
            let s = (6.0 / (spec.in_dim + spec.out_dim) as f64).sqrt();
            for w in &mut params[spec.w..spec.w + spec.in_dim * spec.out_dim] {
                *w = rng.gen::<f64>() * 2.0 * s - s;
            }
            // biases stay zero
        }
        Ok(FieldModel { skel: skel.clone(), cfg, layers, params })
    }

    pub(crate) fn from_parts(
        skel: SkeletonTopology,
        cfg: ModelConfig,
        params: Vec<f64>,
    ) -> Result<Self> {
        let (layers, param_len) = build_layers(&skel, &cfg)?;
        if params.len() != param_len {
            return Err(Error::ShapeMismatch(format!(
                "parameter count {} does not match architecture ({param_len} expected)",
                params.len(),
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Numerical("non-finite parameter in checkpoint".into()));
        }
        Ok(FieldModel { skel, cfg, layers, params })
    }

    pub fn skeleton(&self) -> &SkeletonTopology {
        &self.skel
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn joint_count(&self) -> usize {
        self.skel.len()
    }

    /// Ambient input dimensionality (4 per joint).
    pub fn input_dim(&self) -> usize {
        4 * self.skel.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Layer table in canonical order: encoder layer pairs per joint, then
    /// the head layers.
    pub fn layer_specs(&self) -> &[LayerSpec] {
        &self.layers
    }

    fn layer_beta(&self, id: usize) -> f64 {
        if id + 1 == self.layers.len() {
            self.cfg.out_beta
        } else {
            self.cfg.beta
        }
    }

    /// Evaluates the field, returning the value and the cached trace.
    pub fn forward(&self, pose: &Pose) -> Result<(f64, EvalTrace)> {
        let mut ws = EvalTrace::new(self);
        let value = self.forward_with(pose, &mut ws)?;
        Ok((value, ws))
    }

    /// Evaluates the field only.
    pub fn value(&self, pose: &Pose) -> Result<f64> {
        self.forward(pose).map(|(v, _)| v)
    }

    /// Exact reverse-mode gradient of the value with respect to the 4K
    /// ambient quaternion coordinates.
    pub fn input_gradient(&self, pose: &Pose) -> Result<Vec<f64>> {
        self.value_and_input_gradient(pose).map(|(_, g)| g)
    }

    pub fn value_and_input_gradient(&self, pose: &Pose) -> Result<(f64, Vec<f64>)> {
        let mut ws = EvalTrace::new(self);
        let value = self.forward_with(pose, &mut ws)?;
        self.backward_inputs(&mut ws);
        if ws.input_grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Numerical("non-finite input gradient".into()));
        }
        Ok((value, ws.input_grad.clone()))
    }

    /// Forward pass into a reusable workspace.
    pub fn forward_with(&self, pose: &Pose, ws: &mut EvalTrace) -> Result<f64> {
        if pose.len() != self.skel.len() {
            return Err(Error::ShapeMismatch(format!(
                "pose has {} joints, model expects {}",
                pose.len(),
                self.skel.len()
            )));
        }
        let k = self.skel.len();
        let l = self.cfg.feature_dim;
        let beta = self.cfg.beta;
        for j in 0..k {
            let e1 = 2 * j;
            let q = pose.joint(j).components();
            ws.layer_in[e1][..4].copy_from_slice(&q);
            if let Some(p) = self.skel.parent(j) {
                // parent feature: softplus of the parent's second-layer z
                let pz = 2 * p + 1;
                for i in 0..l {
                    ws.layer_in[e1][4 + i] = softplus(beta, ws.layer_z[pz][i]);
                }
            }
            self.run_layer(e1, ws);
            for i in 0..self.cfg.enc_hidden {
                ws.layer_in[e1 + 1][i] = softplus(beta, ws.layer_z[e1][i]);
            }
            self.run_layer(e1 + 1, ws);
        }
        // head input: concatenated joint features
        let head0 = 2 * k;
        for j in 0..k {
            for i in 0..l {
                ws.layer_in[head0][j * l + i] = softplus(beta, ws.layer_z[2 * j + 1][i]);
            }
        }
        for h in 0..self.cfg.head_layers {
            let id = head0 + h;
            if h > 0 {
                for i in 0..self.layers[id].in_dim {
                    ws.layer_in[id][i] = softplus(beta, ws.layer_z[id - 1][i]);
                }
            }
            self.run_layer(id, ws);
        }
        let z_out = ws.layer_z[head0 + self.cfg.head_layers - 1][0];
        let value = softplus(self.cfg.out_beta, z_out);
        if !value.is_finite() {
            return Err(Error::Numerical(format!("non-finite field value from z={z_out}")));
        }
        ws.value = value;
        Ok(value)
    }

    fn run_layer(&self, id: usize, ws: &mut EvalTrace) {
        let spec = self.layers[id];
        let w = &self.params[spec.w..spec.w + spec.in_dim * spec.out_dim];
        let b = &self.params[spec.b..spec.b + spec.out_dim];
        let (x, z) = ws.in_z(id);
        affine(w, b, spec.in_dim, x, z);
    }

    /// Tangent (directional) forward pass: given an input-space tangent,
    /// propagates it through the cached primal trace and returns the
    /// directional derivative of the value.
    fn tangent_forward(&self, xdot: &[f64], ws: &mut EvalTrace) -> f64 {
        let k = self.skel.len();
        let l = self.cfg.feature_dim;
        let beta = self.cfg.beta;
        for j in 0..k {
            let e1 = 2 * j;
            ws.tan_in[e1][..4].copy_from_slice(&xdot[4 * j..4 * j + 4]);
            if let Some(p) = self.skel.parent(j) {
                let pz = 2 * p + 1;
                for i in 0..l {
                    ws.tan_in[e1][4 + i] =
                        d_softplus(beta, ws.layer_z[pz][i]) * ws.tan_z[pz][i];
                }
            }
            self.run_layer_tangent(e1, ws);
            for i in 0..self.cfg.enc_hidden {
                ws.tan_in[e1 + 1][i] = d_softplus(beta, ws.layer_z[e1][i]) * ws.tan_z[e1][i];
            }
            self.run_layer_tangent(e1 + 1, ws);
        }
        let head0 = 2 * k;
        for j in 0..k {
            let jz = 2 * j + 1;
            for i in 0..l {
                ws.tan_in[head0][j * l + i] =
                    d_softplus(beta, ws.layer_z[jz][i]) * ws.tan_z[jz][i];
            }
        }
        for h in 0..self.cfg.head_layers {
            let id = head0 + h;
            if h > 0 {
                for i in 0..self.layers[id].in_dim {
                    ws.tan_in[id][i] =
                        d_softplus(beta, ws.layer_z[id - 1][i]) * ws.tan_z[id - 1][i];
                }
            }
            self.run_layer_tangent(id, ws);
        }
        let last = head0 + self.cfg.head_layers - 1;
        d_softplus(self.cfg.out_beta, ws.layer_z[last][0]) * ws.tan_z[last][0]
    }

    fn run_layer_tangent(&self, id: usize, ws: &mut EvalTrace) {
        let spec = self.layers[id];
        let w = &self.params[spec.w..spec.w + spec.in_dim * spec.out_dim];
        let (x, z) = ws.tan_in_z(id);
        affine_no_bias(w, spec.in_dim, x, z);
    }

    /// Reverse pass to the inputs only; fills `ws.input_grad`.
    pub fn backward_inputs(&self, ws: &mut EvalTrace) {
        let k = self.skel.len();
        let l = self.cfg.feature_dim;
        let beta = self.cfg.beta;
        let head0 = 2 * k;

        // seed: d value / d a_last where a_last = value = softplus(z_out)
        ws.abar[0] = 1.0;
        for h in (0..self.cfg.head_layers).rev() {
            let id = head0 + h;
            let spec = self.layers[id];
            let lb = self.layer_beta(id);
            // zbar = abar * phi'(z)
            for i in 0..spec.out_dim {
                ws.zbar[i] = ws.abar[i] * d_softplus(lb, ws.layer_z[id][i]);
            }
            let w = &self.params[spec.w..spec.w + spec.in_dim * spec.out_dim];
            backward_input(w, spec.in_dim, &ws.zbar[..spec.out_dim], &mut ws.abar);
        }
        // scatter head-input adjoints onto per-joint features
        ws.vbar[..l * k].copy_from_slice(&ws.abar[..l * k]);
        // encoders in reverse topological order
        for j in (0..k).rev() {
            let e2 = 2 * j + 1;
            let e1 = 2 * j;
            // feature adjoint -> zbar of encoder layer 2
            let spec2 = self.layers[e2];
            for i in 0..l {
                ws.zbar[i] = ws.vbar[j * l + i] * d_softplus(beta, ws.layer_z[e2][i]);
            }
            let w2 = &self.params[spec2.w..spec2.w + spec2.in_dim * spec2.out_dim];
            backward_input(w2, spec2.in_dim, &ws.zbar[..l], &mut ws.abar);
            // hidden adjoint -> zbar of encoder layer 1
            let spec1 = self.layers[e1];
            for i in 0..spec1.out_dim {
                ws.zbar[i] = ws.abar[i] * d_softplus(beta, ws.layer_z[e1][i]);
            }
            let w1 = &self.params[spec1.w..spec1.w + spec1.in_dim * spec1.out_dim];
            backward_input(w1, spec1.in_dim, &ws.zbar[..spec1.out_dim], &mut ws.abar);
            ws.input_grad[4 * j..4 * j + 4].copy_from_slice(&ws.abar[..4]);
            if let Some(p) = self.skel.parent(j) {
                for i in 0..l {
                    ws.vbar[p * l + i] += ws.abar[4 + i];
                }
            }
        }
    }

    /// Combined reverse pass accumulating parameter gradients.
    ///
    /// With `tangent = false` this is the gradient of `seed_p * value`.
    /// With `tangent = true` (requires a prior [`Self::tangent_forward`]) it
    /// additionally accumulates the gradient of `seed_t * d_value`, where
    /// `d_value` is the tangent output — the forward-over-reverse path used
    /// by the Eikonal term.
    fn backward_params(
        &self,
        ws: &mut EvalTrace,
        seed_p: f64,
        seed_t: f64,
        tangent: bool,
        grads: &mut [f64],
    ) {
        let k = self.skel.len();
        let l = self.cfg.feature_dim;
        let head0 = 2 * k;

        ws.abar[0] = seed_p;
        ws.abar_dot[0] = seed_t;
        for h in (0..self.cfg.head_layers).rev() {
            let id = head0 + h;
            self.backward_block(id, tangent, ws, grads);
        }
        ws.vbar[..l * k].copy_from_slice(&ws.abar[..l * k]);
        if tangent {
            ws.vbar_dot[..l * k].copy_from_slice(&ws.abar_dot[..l * k]);
        }
        for j in (0..k).rev() {
            let e2 = 2 * j + 1;
            let e1 = 2 * j;
            ws.abar[..l].copy_from_slice(&ws.vbar[j * l..j * l + l]);
            if tangent {
                ws.abar_dot[..l].copy_from_slice(&ws.vbar_dot[j * l..j * l + l]);
            }
            self.backward_block(e2, tangent, ws, grads);
            self.backward_block(e1, tangent, ws, grads);
            ws.input_grad[4 * j..4 * j + 4].copy_from_slice(&ws.abar[..4]);
            if let Some(p) = self.skel.parent(j) {
                for i in 0..l {
                    ws.vbar[p * l + i] += ws.abar[4 + i];
                }
                if tangent {
                    for i in 0..l {
                        ws.vbar_dot[p * l + i] += ws.abar_dot[4 + i];
                    }
                }
            }
        }
    }

    /// One affine+softplus block of the combined reverse pass. Consumes the
    /// output adjoints in `ws.abar`/`ws.abar_dot` and leaves the input
    /// adjoints there.
    fn backward_block(&self, id: usize, tangent: bool, ws: &mut EvalTrace, grads: &mut [f64]) {
        let spec = self.layers[id];
        let beta = self.layer_beta(id);
        let z = &ws.layer_z[id];
        if tangent {
            let zt = &ws.tan_z[id];
            for i in 0..spec.out_dim {
                let d1 = d_softplus(beta, z[i]);
                let d2 = dd_softplus(beta, z[i]);
                ws.zbar[i] = ws.abar[i] * d1 + ws.abar_dot[i] * d2 * zt[i];
                ws.zbar_dot[i] = ws.abar_dot[i] * d1;
            }
        } else {
            for i in 0..spec.out_dim {
                ws.zbar[i] = ws.abar[i] * d_softplus(beta, z[i]);
            }
        }
        let w = &self.params[spec.w..spec.w + spec.in_dim * spec.out_dim];
        // parameter gradients
        let (gw, gb) = {
            let (head, tail) = grads.split_at_mut(spec.b);
            (&mut head[spec.w..], &mut tail[..spec.out_dim])
        };
        accum_wgrad(gw, gb, spec.in_dim, &ws.zbar[..spec.out_dim], &ws.layer_in[id]);
        if tangent {
            accum_wgrad_no_bias(gw, spec.in_dim, &ws.zbar_dot[..spec.out_dim], &ws.tan_in[id]);
        }
        // input adjoints
        backward_input(w, spec.in_dim, &ws.zbar[..spec.out_dim], &mut ws.abar);
        if tangent {
            backward_input(w, spec.in_dim, &ws.zbar_dot[..spec.out_dim], &mut ws.abar_dot);
        }
    }

    /// Per-sample losses and parameter-gradient accumulation.
    ///
    /// Returns `(l_udf, l_eik)` for the sample and adds the gradient of
    /// `l_udf + lambda_eik * l_eik` into `grads`. The Eikonal term applies
    /// only to off-manifold samples (`distance != 0`).
    fn accumulate_sample(
        &self,
        sample: &LabeledPose,
        lambda_eik: f64,
        ws: &mut EvalTrace,
        grads: &mut [f64],
    ) -> Result<(f64, f64)> {
        let f = self.forward_with(&sample.pose, ws)?;
        let residual = f - sample.distance;
        let seed_p = if residual > 0.0 {
            1.0
        } else if residual < 0.0 {
            -1.0
        } else {
            0.0
        };
        let l_udf = residual.abs();
        if sample.distance == 0.0 {
            self.backward_params(ws, seed_p, 0.0, false, grads);
            return Ok((l_udf, 0.0));
        }
        self.backward_inputs(ws);
        let gnorm = norm(&ws.input_grad);
        let l_eik = (gnorm - 1.0) * (gnorm - 1.0);
        if gnorm < 1e-12 {
            // gradient of ||g|| is undefined at zero; use the zero subgradient
            self.backward_params(ws, seed_p, 0.0, false, grads);
            return Ok((l_udf, l_eik));
        }
        let scale = 2.0 * (gnorm - 1.0) / gnorm;
        let tangent: Vec<f64> = ws.input_grad.iter().map(|g| scale * g).collect();
        self.tangent_forward(&tangent, ws);
        self.backward_params(ws, seed_p, lambda_eik, true, grads);
        Ok((l_udf, l_eik))
    }

    /// Batch loss and exact parameter gradients of
    /// `L_udf + lambda_eik * L_eikonal` (sum reduction over the batch).
    ///
    /// Samples are evaluated in fixed 32-sample chunks that may run in
    /// parallel; chunk partial sums are combined in chunk order, so the
    /// result does not depend on the thread count.
    pub fn loss_and_param_grads(
        &self,
        batch: &[LabeledPose],
        lambda_eik: f64,
    ) -> Result<BatchLoss> {
        if batch.is_empty() {
            return Err(Error::Config("loss_and_param_grads needs a non-empty batch".into()));
        }
        const CHUNK: usize = 32;
        let chunks: Vec<&[LabeledPose]> = batch.chunks(CHUNK).collect();
        let partials: Vec<Result<(f64, f64, Vec<f64>)>> = if chunks.len() == 1 {
            chunks
                .iter()
                .map(|chunk| self.chunk_grads(chunk, lambda_eik))
                .collect()
        } else {
            use rayon::prelude::*;
            chunks
                .par_iter()
                .map(|chunk| self.chunk_grads(chunk, lambda_eik))
                .collect()
        };
        let mut l_udf = 0.0;
        let mut l_eik = 0.0;
        let mut grads = vec![0.0; self.params.len()];
        for partial in partials {
            let (u, e, g) = partial?;
            l_udf += u;
            l_eik += e;
            for (acc, gi) in grads.iter_mut().zip(&g) {
                *acc += gi;
            }
        }
        if !(l_udf.is_finite() && l_eik.is_finite()) {
            return Err(Error::Numerical(format!(
                "non-finite batch loss: l_udf={l_udf}, l_eik={l_eik}"
            )));
        }
        Ok(BatchLoss { l_udf, l_eik, grads })
    }

    fn chunk_grads(
        &self,
        chunk: &[LabeledPose],
        lambda_eik: f64,
    ) -> Result<(f64, f64, Vec<f64>)> {
        let mut ws = EvalTrace::new(self);
        let mut grads = vec![0.0; self.params.len()];
        let mut l_udf = 0.0;
        let mut l_eik = 0.0;
        for sample in chunk {
            let (u, e) = self.accumulate_sample(sample, lambda_eik, &mut ws, &mut grads)?;
            l_udf += u;
            l_eik += e;
        }
        Ok((l_udf, l_eik, grads))
    }
}

/// Result of a batch gradient evaluation.
#[derive(Debug, Clone)]
pub struct BatchLoss {
    pub l_udf: f64,
    pub l_eik: f64,
    pub grads: Vec<f64>,
}

/// Cached forward state plus scratch for the derivative passes.
///
/// One trace belongs to one model shape; reuse it across samples to avoid
/// reallocation.
pub struct EvalTrace {
    layer_in: Vec<Vec<f64>>,
    layer_z: Vec<Vec<f64>>,
    tan_in: Vec<Vec<f64>>,
    tan_z: Vec<Vec<f64>>,
    abar: Vec<f64>,
    abar_dot: Vec<f64>,
    zbar: Vec<f64>,
    zbar_dot: Vec<f64>,
    vbar: Vec<f64>,
    vbar_dot: Vec<f64>,
    input_grad: Vec<f64>,
    value: f64,
}

impl EvalTrace {
    pub fn new(model: &FieldModel) -> Self {
        let max_dim = model
            .layers
            .iter()
            .map(|s| s.in_dim.max(s.out_dim))
            .max()
            .unwrap_or(1);
        let lk = model.cfg.feature_dim * model.skel.len();
        EvalTrace {
            layer_in: model.layers.iter().map(|s| vec![0.0; s.in_dim]).collect(),
            layer_z: model.layers.iter().map(|s| vec![0.0; s.out_dim]).collect(),
            tan_in: model.layers.iter().map(|s| vec![0.0; s.in_dim]).collect(),
            tan_z: model.layers.iter().map(|s| vec![0.0; s.out_dim]).collect(),
            abar: vec![0.0; max_dim],
            abar_dot: vec![0.0; max_dim],
            zbar: vec![0.0; max_dim],
            zbar_dot: vec![0.0; max_dim],
            vbar: vec![0.0; lk],
            vbar_dot: vec![0.0; lk],
            input_grad: vec![0.0; model.input_dim()],
            value: 0.0,
        }
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn input_gradient(&self) -> &[f64] {
        &self.input_grad
    }

    fn in_z(&mut self, id: usize) -> (&[f64], &mut [f64]) {
        (&self.layer_in[id], &mut self.layer_z[id])
    }

    fn tan_in_z(&mut self, id: usize) -> (&[f64], &mut [f64]) {
        (&self.tan_in[id], &mut self.tan_z[id])
    }
}

/// Numerically stable `softplus_beta(x) = ln(1 + exp(beta x)) / beta`.
#[inline]
pub fn softplus(beta: f64, x: f64) -> f64 {
    let bx = beta * x;
    bx.max(0.0) / beta + (-bx.abs()).exp().ln_1p() / beta
}

/// First derivative: the logistic `sigma(beta x)`.
#[inline]
pub fn d_softplus(beta: f64, x: f64) -> f64 {
    let bx = beta * x;
    if bx >= 0.0 {
        1.0 / (1.0 + (-bx).exp())
    } else {
        let e = bx.exp();
        e / (1.0 + e)
    }
}

/// Second derivative: `beta * sigma * (1 - sigma)`.
#[inline]
pub fn dd_softplus(beta: f64, x: f64) -> f64 {
    let s = d_softplus(beta, x);
    beta * s * (1.0 - s)
}

/// `z = W x + b`, weights row-major `[out][in]`. Each output accumulates
/// strictly in input index order; rows are processed four at a time for
/// instruction-level parallelism.
fn affine(w: &[f64], b: &[f64], in_dim: usize, x: &[f64], z: &mut [f64]) {
    let out_dim = z.len();
    let mut o = 0;
    while o + 4 <= out_dim {
        let r0 = &w[o * in_dim..(o + 1) * in_dim];
        let r1 = &w[(o + 1) * in_dim..(o + 2) * in_dim];
        let r2 = &w[(o + 2) * in_dim..(o + 3) * in_dim];
        let r3 = &w[(o + 3) * in_dim..(o + 4) * in_dim];
        let (mut a0, mut a1, mut a2, mut a3) = (0.0, 0.0, 0.0, 0.0);
        for j in 0..in_dim {
            let xj = x[j];
            a0 += r0[j] * xj;
            a1 += r1[j] * xj;
            a2 += r2[j] * xj;
            a3 += r3[j] * xj;
        }
        z[o] = a0 + b[o];
        z[o + 1] = a1 + b[o + 1];
        z[o + 2] = a2 + b[o + 2];
        z[o + 3] = a3 + b[o + 3];
        o += 4;
    }
    while o < out_dim {
        let row = &w[o * in_dim..(o + 1) * in_dim];
        let mut acc = 0.0;
        for j in 0..in_dim {
            acc += row[j] * x[j];
        }
        z[o] = acc + b[o];
        o += 1;
    }
}

/// `z = W x` (tangent pass has no bias contribution).
fn affine_no_bias(w: &[f64], in_dim: usize, x: &[f64], z: &mut [f64]) {
    let out_dim = z.len();
    let mut o = 0;
    while o + 4 <= out_dim {
        let r0 = &w[o * in_dim..(o + 1) * in_dim];
        let r1 = &w[(o + 1) * in_dim..(o + 2) * in_dim];
        let r2 = &w[(o + 2) * in_dim..(o + 3) * in_dim];
        let r3 = &w[(o + 3) * in_dim..(o + 4) * in_dim];
        let (mut a0, mut a1, mut a2, mut a3) = (0.0, 0.0, 0.0, 0.0);
        for j in 0..in_dim {
            let xj = x[j];
            a0 += r0[j] * xj;
            a1 += r1[j] * xj;
            a2 += r2[j] * xj;
            a3 += r3[j] * xj;
        }
        z[o] = a0;
        z[o + 1] = a1;
        z[o + 2] = a2;
        z[o + 3] = a3;
        o += 4;
    }
    while o < out_dim {
        let row = &w[o * in_dim..(o + 1) * in_dim];
        let mut acc = 0.0;
        for j in 0..in_dim {
            acc += row[j] * x[j];
        }
        z[o] = acc;
        o += 1;
    }
}

/// `xbar = W^T zbar`, written into the first `in_dim` slots of `xbar`.
/// Each component accumulates over output rows in ascending order.
fn backward_input(w: &[f64], in_dim: usize, zbar: &[f64], xbar: &mut [f64]) {
    let xbar = &mut xbar[..in_dim];
    xbar.fill(0.0);
    for (o, &d) in zbar.iter().enumerate() {
        let row = &w[o * in_dim..(o + 1) * in_dim];
        for j in 0..in_dim {
            xbar[j] += row[j] * d;
        }
    }
}

/// `gW += zbar (x)^T`, `gb += zbar`.
fn accum_wgrad(gw: &mut [f64], gb: &mut [f64], in_dim: usize, zbar: &[f64], x: &[f64]) {
    for (o, &d) in zbar.iter().enumerate() {
        let row = &mut gw[o * in_dim..(o + 1) * in_dim];
        for j in 0..in_dim {
            row[j] += d * x[j];
        }
        gb[o] += d;
    }
}

/// `gW += zbar (x)^T` without a bias contribution (tangent equations have
/// no bias term).
fn accum_wgrad_no_bias(gw: &mut [f64], in_dim: usize, zbar: &[f64], x: &[f64]) {
    for (o, &d) in zbar.iter().enumerate() {
        let row = &mut gw[o * in_dim..(o + 1) * in_dim];
        for j in 0..in_dim {
            row[j] += d * x[j];
        }
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}
