//! Network backbone: a modified MLP evaluated on batches of first-order jets,
//! with a hand-derived reverse pass for parameter gradients.
//!
//! A jet is a value plus its tangents with respect to the D chart
//! coordinates. A batch of B jets per feature is stored as 1 + D separate
//! `width x B` matrices (channel 0 the values, channel k the k-th tangent),
//! so linear layers are one GEMM per channel and every elementwise pass runs
//! over contiguous memory. Only the nonlinearity couples channels (chain
//! rule). The reverse pass propagates one adjoint per stored scalar, which
//! yields the exact parameter gradient of any scalar function of the network
//! output *and* its input derivatives — the forward-over-reverse scheme the
//! Eikonal residual loss requires.
//!
//! The backbone variant follows the two-encoder gating scheme: inputs feed
//! two tanh encoder branches U and V, and every hidden layer output
//! Z = tanh(W h + b) is used as a gate, h' = (1 - Z) .* U + Z .* V. A plain
//! tanh MLP is available for ablation.

use ndarray::{Array1, Array2, Zip};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{AtlasError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MlpVariant {
    /// Two-encoder gated backbone ("modified MLP").
    Modified,
    /// Standard tanh MLP, for ablation.
    Plain,
}

/// Architecture metadata; stored in checkpoints and validated on load.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpArch {
    pub input_dim: usize,
    pub width: usize,
    pub depth: usize,
    pub activation: String,
    pub variant: MlpVariant,
}

impl MlpArch {
    pub fn modified(input_dim: usize, width: usize, depth: usize) -> Self {
        Self {
            input_dim,
            width,
            depth,
            activation: "tanh".into(),
            variant: MlpVariant::Modified,
        }
    }

    pub fn plain(input_dim: usize, width: usize, depth: usize) -> Self {
        Self {
            variant: MlpVariant::Plain,
            ..Self::modified(input_dim, width, depth)
        }
    }
}

/// All weights and biases of the backbone.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpParams {
    pub arch: MlpArch,
    /// Encoder branches (empty 0x0 / 0 for the plain variant).
    pub w_u: Array2<f64>,
    pub b_u: Array1<f64>,
    pub w_v: Array2<f64>,
    pub b_v: Array1<f64>,
    /// Hidden layers; the first maps from the input, the rest are square.
    pub hidden: Vec<(Array2<f64>, Array1<f64>)>,
    pub w_out: Array1<f64>,
    pub b_out: f64,
}

fn glorot(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-limit..limit))
}

impl MlpParams {
    /// Glorot-uniform weights, zero biases, deterministic in `seed`.
    pub fn init(arch: MlpArch, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (d, w) = (arch.input_dim, arch.width);
        let encoders = matches!(arch.variant, MlpVariant::Modified);
        let (w_u, w_v) = if encoders {
            (glorot(&mut rng, w, d), glorot(&mut rng, w, d))
        } else {
            (Array2::zeros((0, 0)), Array2::zeros((0, 0)))
        };
        let (b_u, b_v) = if encoders {
            (Array1::zeros(w), Array1::zeros(w))
        } else {
            (Array1::zeros(0), Array1::zeros(0))
        };
        let mut hidden = Vec::with_capacity(arch.depth);
        for l in 0..arch.depth {
            let fan_in = if l == 0 { d } else { w };
            hidden.push((glorot(&mut rng, w, fan_in), Array1::zeros(w)));
        }
        let w_out = {
            let limit = (6.0 / (w + 1) as f64).sqrt();
            Array1::from_shape_fn(w, |_| rng.random_range(-limit..limit))
        };
        Self {
            arch,
            w_u,
            b_u,
            w_v,
            b_v,
            hidden,
            w_out,
            b_out: 0.0,
        }
    }

    pub fn n_params(&self) -> usize {
        self.w_u.len()
            + self.b_u.len()
            + self.w_v.len()
            + self.b_v.len()
            + self
                .hidden
                .iter()
                .map(|(w, b)| w.len() + b.len())
                .sum::<usize>()
            + self.w_out.len()
            + 1
    }

    /// Row-major flattening in declaration order; inverse of [`MlpParams::assign_flat`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        out.extend(self.w_u.iter());
        out.extend(self.b_u.iter());
        out.extend(self.w_v.iter());
        out.extend(self.b_v.iter());
        for (w, b) in &self.hidden {
            out.extend(w.iter());
            out.extend(b.iter());
        }
        out.extend(self.w_out.iter());
        out.push(self.b_out);
        out
    }

    pub fn from_flat(&self, flat: &[f64]) -> Result<Self> {
        let mut out = self.clone();
        out.assign_flat(flat)?;
        Ok(out)
    }

    /// Overwrite all parameters from a flat vector (inverse of `flatten`).
    pub fn assign_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.n_params() {
            return Err(AtlasError::Dimension(format!(
                "expected {} parameters, got {}",
                self.n_params(),
                flat.len()
            )));
        }
        let mut pos = 0;
        let mut take = |target: &mut [f64]| {
            target.copy_from_slice(&flat[pos..pos + target.len()]);
            pos += target.len();
        };
        take(self.w_u.as_slice_mut().unwrap());
        take(self.b_u.as_slice_mut().unwrap());
        take(self.w_v.as_slice_mut().unwrap());
        take(self.b_v.as_slice_mut().unwrap());
        for (w, b) in &mut self.hidden {
            take(w.as_slice_mut().unwrap());
            take(b.as_slice_mut().unwrap());
        }
        take(self.w_out.as_slice_mut().unwrap());
        self.b_out = flat[pos];
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.flatten().iter().all(|p| p.is_finite())
    }

    /// Plain value-only forward pass for a single standardised input.
    ///
    /// This is a deliberately independent scalar implementation of the same
    /// network; unit tests cross-check it against the jet batch path.
    pub fn forward_value(&self, x_std: &[f64]) -> f64 {
        assert_eq!(x_std.len(), self.arch.input_dim);
        let x = Array1::from_vec(x_std.to_vec());
        let modified = matches!(self.arch.variant, MlpVariant::Modified);
        let (u, v) = if modified {
            (
                (self.w_u.dot(&x) + &self.b_u).mapv(f64::tanh),
                (self.w_v.dot(&x) + &self.b_v).mapv(f64::tanh),
            )
        } else {
            (Array1::zeros(0), Array1::zeros(0))
        };
        let mut h = x;
        for (w, b) in &self.hidden {
            let z = (w.dot(&h) + b).mapv(f64::tanh);
            h = if modified {
                (1.0 - &z) * &u + &z * &v
            } else {
                z
            };
        }
        self.w_out.dot(&h) + self.b_out
    }
}

/// Parameter gradients, same shapes as [`MlpParams`].
#[derive(Clone, Debug)]
pub struct MlpGrads {
    pub w_u: Array2<f64>,
    pub b_u: Array1<f64>,
    pub w_v: Array2<f64>,
    pub b_v: Array1<f64>,
    pub hidden: Vec<(Array2<f64>, Array1<f64>)>,
    pub w_out: Array1<f64>,
    pub b_out: f64,
}

impl MlpGrads {
    pub fn zeros_like(p: &MlpParams) -> Self {
        Self {
            w_u: Array2::zeros(p.w_u.dim()),
            b_u: Array1::zeros(p.b_u.len()),
            w_v: Array2::zeros(p.w_v.dim()),
            b_v: Array1::zeros(p.b_v.len()),
            hidden: p
                .hidden
                .iter()
                .map(|(w, b)| (Array2::zeros(w.dim()), Array1::zeros(b.len())))
                .collect(),
            w_out: Array1::zeros(p.w_out.len()),
            b_out: 0.0,
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        out.extend(self.w_u.iter());
        out.extend(self.b_u.iter());
        out.extend(self.w_v.iter());
        out.extend(self.b_v.iter());
        for (w, b) in &self.hidden {
            out.extend(w.iter());
            out.extend(b.iter());
        }
        out.extend(self.w_out.iter());
        out.push(self.b_out);
        out
    }

    pub fn add_assign(&mut self, other: &Self) {
        self.w_u += &other.w_u;
        self.b_u += &other.b_u;
        self.w_v += &other.w_v;
        self.b_v += &other.b_v;
        for (a, b) in self.hidden.iter_mut().zip(&other.hidden) {
            a.0 += &b.0;
            a.1 += &b.1;
        }
        self.w_out += &other.w_out;
        self.b_out += other.b_out;
    }
}

/// Jet batch: one contiguous `rows x n` matrix per channel.
/// `channels[0]` holds values, `channels[k]` the k-th input tangent.
#[derive(Clone, Debug)]
pub struct JetBatch {
    pub channels: Vec<Array2<f64>>,
    pub dim: usize,
    pub n: usize,
}

impl JetBatch {
    pub fn zeros(rows: usize, dim: usize, n: usize) -> Self {
        Self {
            channels: (0..=dim).map(|_| Array2::zeros((rows, n))).collect(),
            dim,
            n,
        }
    }
}

/// Everything the reverse pass needs from the forward pass.
pub struct ForwardCache {
    x: JetBatch,
    u_pre: Option<JetBatch>,
    v_pre: Option<JetBatch>,
    u: Option<JetBatch>,
    v: Option<JetBatch>,
    /// Per layer: input jets, pre-activation jets, post-tanh jets.
    layers: Vec<(JetBatch, JetBatch, JetBatch)>,
    /// Final hidden jets feeding the output layer.
    h_last: JetBatch,
}

/// tanh through a jet batch: value channel through tanh, tangent channels
/// through the derivative 1 - tanh^2.
fn tanh_jets(pre: &JetBatch) -> JetBatch {
    let mut out = JetBatch::zeros(pre.channels[0].nrows(), pre.dim, pre.n);
    let z_val = pre.channels[0].mapv(f64::tanh);
    for k in 1..=pre.dim {
        Zip::from(&mut out.channels[k])
            .and(&z_val)
            .and(&pre.channels[k])
            .for_each(|o, &z, &t| *o = (1.0 - z * z) * t);
    }
    out.channels[0] = z_val;
    out
}

/// Linear layer on a jet batch: one GEMM per channel; the bias shifts only
/// the value channel.
fn linear_jets(w: &Array2<f64>, b: Option<&Array1<f64>>, h: &JetBatch) -> JetBatch {
    let mut channels = Vec::with_capacity(h.channels.len());
    for ch in &h.channels {
        channels.push(w.dot(ch));
    }
    if let Some(b) = b {
        for (mut row, &bias) in channels[0].rows_mut().into_iter().zip(b.iter()) {
            row += bias;
        }
    }
    JetBatch {
        channels,
        dim: h.dim,
        n: h.n,
    }
}

/// Gated mixing h' = (1 - Z) .* U + Z .* V on jets (product rule on tangents).
fn mix_jets(z: &JetBatch, u: &JetBatch, v: &JetBatch) -> JetBatch {
    let mut out = JetBatch::zeros(z.channels[0].nrows(), z.dim, z.n);
    Zip::from(&mut out.channels[0])
        .and(&z.channels[0])
        .and(&u.channels[0])
        .and(&v.channels[0])
        .for_each(|o, &zv, &uv, &vv| *o = (1.0 - zv) * uv + zv * vv);
    for k in 1..=z.dim {
        // product rule, split over two passes to keep the Zip arity small
        Zip::from(&mut out.channels[k])
            .and(&u.channels[0])
            .and(&v.channels[0])
            .and(&z.channels[k])
            .for_each(|o, &uv, &vv, &ztk| *o = ztk * (vv - uv));
        Zip::from(&mut out.channels[k])
            .and(&z.channels[0])
            .and(&u.channels[k])
            .and(&v.channels[k])
            .for_each(|o, &zv, &utk, &vtk| *o += (1.0 - zv) * utk + zv * vtk);
    }
    out
}

/// Forward pass on a jet input `x` (channel matrices `input_dim x B`),
/// returning the raw output value and tangents per point plus the cache.
pub fn forward_jets(params: &MlpParams, x: JetBatch) -> (Array1<f64>, Array2<f64>, ForwardCache) {
    let (dim, n) = (x.dim, x.n);
    let modified = matches!(params.arch.variant, MlpVariant::Modified);

    let (u_pre, v_pre, u, v) = if modified {
        let u_pre = linear_jets(&params.w_u, Some(&params.b_u), &x);
        let v_pre = linear_jets(&params.w_v, Some(&params.b_v), &x);
        let u = tanh_jets(&u_pre);
        let v = tanh_jets(&v_pre);
        (Some(u_pre), Some(v_pre), Some(u), Some(v))
    } else {
        (None, None, None, None)
    };

    let mut layers = Vec::with_capacity(params.hidden.len());
    let mut h = x.clone();
    for (w, b) in &params.hidden {
        let pre = linear_jets(w, Some(b), &h);
        let z = tanh_jets(&pre);
        let next = if modified {
            mix_jets(&z, u.as_ref().unwrap(), v.as_ref().unwrap())
        } else {
            z.clone()
        };
        layers.push((h, pre, z));
        h = next;
    }

    // output layer: scalar contraction per channel
    let mut raw_val = Array1::zeros(n);
    let mut raw_tang = Array2::zeros((dim, n));
    {
        let r = params.w_out.dot(&h.channels[0]);
        for b in 0..n {
            raw_val[b] = r[b] + params.b_out;
        }
        for k in 0..dim {
            let rk = params.w_out.dot(&h.channels[k + 1]);
            for b in 0..n {
                raw_tang[[k, b]] = rk[b];
            }
        }
    }
    let cache = ForwardCache {
        x,
        u_pre,
        v_pre,
        u,
        v,
        layers,
        h_last: h,
    };
    (raw_val, raw_tang, cache)
}

/// Reverse pass of [`tanh_jets`]: given adjoints of the output jets, cached
/// output values and pre-activation tangents, produce adjoints of the
/// pre-activation jets.
fn tanh_jets_backward(adj_z: &JetBatch, z: &JetBatch, pre: &JetBatch) -> JetBatch {
    let (dim, n) = (z.dim, z.n);
    let mut out = JetBatch::zeros(z.channels[0].nrows(), dim, n);
    // out_val = sech2 (adj_z_val - 2 z_val sum_k adj_ztk pre_tk)
    let mut tang_dot: Array2<f64> = Array2::zeros(z.channels[0].dim());
    for k in 1..=dim {
        Zip::from(&mut tang_dot)
            .and(&adj_z.channels[k])
            .and(&pre.channels[k])
            .for_each(|acc, &a, &t| *acc += a * t);
        Zip::from(&mut out.channels[k])
            .and(&adj_z.channels[k])
            .and(&z.channels[0])
            .for_each(|o, &a, &zv| *o = a * (1.0 - zv * zv));
    }
    Zip::from(&mut out.channels[0])
        .and(&adj_z.channels[0])
        .and(&z.channels[0])
        .and(&tang_dot)
        .for_each(|o, &a, &zv, &td| *o = (1.0 - zv * zv) * (a - 2.0 * zv * td));
    out
}

/// Reverse pass of [`mix_jets`]: adjoints of Z, plus accumulation into the
/// adjoints of U and V.
fn mix_jets_backward(
    adj_out: &JetBatch,
    z: &JetBatch,
    u: &JetBatch,
    v: &JetBatch,
    adj_u: &mut JetBatch,
    adj_v: &mut JetBatch,
) -> JetBatch {
    let (dim, n) = (z.dim, z.n);
    let mut adj_z = JetBatch::zeros(z.channels[0].nrows(), dim, n);

    // value-channel contributions
    Zip::from(&mut adj_z.channels[0])
        .and(&adj_out.channels[0])
        .and(&u.channels[0])
        .and(&v.channels[0])
        .for_each(|o, &a, &uv, &vv| *o = a * (vv - uv));
    Zip::from(&mut adj_u.channels[0])
        .and(&adj_out.channels[0])
        .and(&z.channels[0])
        .for_each(|o, &a, &zv| *o += a * (1.0 - zv));
    Zip::from(&mut adj_v.channels[0])
        .and(&adj_out.channels[0])
        .and(&z.channels[0])
        .for_each(|o, &a, &zv| *o += a * zv);

    for k in 1..=dim {
        // adj_z value gains sum_k adj_tk (v_tk - u_tk)
        Zip::from(&mut adj_z.channels[0])
            .and(&adj_out.channels[k])
            .and(&u.channels[k])
            .and(&v.channels[k])
            .for_each(|o, &a, &utk, &vtk| *o += a * (vtk - utk));
        Zip::from(&mut adj_z.channels[k])
            .and(&adj_out.channels[k])
            .and(&u.channels[0])
            .and(&v.channels[0])
            .for_each(|o, &a, &uv, &vv| *o = a * (vv - uv));
        Zip::from(&mut adj_u.channels[k])
            .and(&adj_out.channels[k])
            .and(&z.channels[0])
            .for_each(|o, &a, &zv| *o += a * (1.0 - zv));
        Zip::from(&mut adj_v.channels[k])
            .and(&adj_out.channels[k])
            .and(&z.channels[0])
            .for_each(|o, &a, &zv| *o += a * zv);
        // value adjoints of U and V gain -+ adj_tk z_tk
        Zip::from(&mut adj_u.channels[0])
            .and(&adj_out.channels[k])
            .and(&z.channels[k])
            .for_each(|o, &a, &ztk| *o -= a * ztk);
        Zip::from(&mut adj_v.channels[0])
            .and(&adj_out.channels[k])
            .and(&z.channels[k])
            .for_each(|o, &a, &ztk| *o += a * ztk);
    }
    adj_z
}

/// Reverse pass of a linear jet layer: returns the input adjoints and writes
/// the weight/bias gradients (the per-channel `adj h^T` products accumulate,
/// which is exactly the chain-rule sum over stored scalars).
fn linear_jets_backward(
    w: &Array2<f64>,
    adj_out: &JetBatch,
    h: &JetBatch,
    grad_w: &mut Array2<f64>,
    grad_b: &mut Array1<f64>,
) -> JetBatch {
    for (adj_ch, h_ch) in adj_out.channels.iter().zip(&h.channels) {
        ndarray::linalg::general_mat_mul(1.0, adj_ch, &h_ch.t(), 1.0, grad_w);
    }
    for (g, row) in grad_b.iter_mut().zip(adj_out.channels[0].rows()) {
        *g += row.sum();
    }
    JetBatch {
        channels: adj_out.channels.iter().map(|ch| w.t().dot(ch)).collect(),
        dim: h.dim,
        n: h.n,
    }
}

/// Reverse pass through the whole backbone.
///
/// `adj_val` / `adj_tang` are the adjoints of the raw output value and its
/// input tangents for each batch point; the result is the exact gradient of
/// the corresponding scalar objective with respect to every parameter.
pub fn backward_jets(
    params: &MlpParams,
    cache: &ForwardCache,
    adj_val: &Array1<f64>,
    adj_tang: &Array2<f64>,
) -> MlpGrads {
    let mut grads = MlpGrads::zeros_like(params);
    let (dim, n) = (cache.x.dim, cache.x.n);
    let width = params.arch.width;
    let modified = matches!(params.arch.variant, MlpVariant::Modified);

    // output layer: raw = w_out . h + b_out per channel
    grads.b_out = adj_val.sum();
    for (c, ch) in cache.h_last.channels.iter().enumerate() {
        let adj: ndarray::ArrayView1<f64> = if c == 0 {
            adj_val.view()
        } else {
            adj_tang.row(c - 1)
        };
        // w_out gradient accumulates h . adj over the batch
        ndarray::linalg::general_mat_vec_mul(1.0, ch, &adj, 1.0, &mut grads.w_out);
    }
    let w_out_col = params
        .w_out
        .view()
        .insert_axis(ndarray::Axis(1)); // width x 1
    let mut adj_h = JetBatch {
        channels: (0..=dim)
            .map(|c| {
                let adj_row = if c == 0 {
                    adj_val.view().insert_axis(ndarray::Axis(0))
                } else {
                    adj_tang.row(c - 1).insert_axis(ndarray::Axis(0))
                };
                w_out_col.dot(&adj_row)
            })
            .collect(),
        dim,
        n,
    };

    let mut adj_u = JetBatch::zeros(if modified { width } else { 0 }, dim, n);
    let mut adj_v = JetBatch::zeros(if modified { width } else { 0 }, dim, n);

    for (l, (w, _)) in params.hidden.iter().enumerate().rev() {
        let (h_in, pre, z) = &cache.layers[l];
        let adj_z = if modified {
            mix_jets_backward(
                &adj_h,
                z,
                cache.u.as_ref().unwrap(),
                cache.v.as_ref().unwrap(),
                &mut adj_u,
                &mut adj_v,
            )
        } else {
            adj_h
        };
        let adj_pre = tanh_jets_backward(&adj_z, z, pre);
        let (gw, gb) = &mut grads.hidden[l];
        adj_h = linear_jets_backward(w, &adj_pre, h_in, gw, gb);
    }
    // adj_h now holds the adjoint of the input jets; not needed further.

    if modified {
        let adj_u_pre =
            tanh_jets_backward(&adj_u, cache.u.as_ref().unwrap(), cache.u_pre.as_ref().unwrap());
        linear_jets_backward(
            &params.w_u,
            &adj_u_pre,
            &cache.x,
            &mut grads.w_u,
            &mut grads.b_u,
        );
        let adj_v_pre =
            tanh_jets_backward(&adj_v, cache.v.as_ref().unwrap(), cache.v_pre.as_ref().unwrap());
        linear_jets_backward(
            &params.w_v,
            &adj_v_pre,
            &cache.x,
            &mut grads.w_v,
            &mut grads.b_v,
        );
    }
    grads
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_params(variant: MlpVariant) -> MlpParams {
        let arch = match variant {
            MlpVariant::Modified => MlpArch::modified(2, 5, 3),
            MlpVariant::Plain => MlpArch::plain(2, 5, 3),
        };
        MlpParams::init(arch, 7)
    }

    fn input_batch(pts: &[[f64; 2]]) -> JetBatch {
        let n = pts.len();
        let mut x = JetBatch::zeros(2, 2, n);
        for (b, p) in pts.iter().enumerate() {
            for d in 0..2 {
                x.channels[0][[d, b]] = p[d];
                x.channels[d + 1][[d, b]] = 1.0; // unit seeds
            }
        }
        x
    }

    /// Scalar objective mixing value and tangent outputs, used to exercise
    /// every adjoint path in the reverse pass.
    fn objective(params: &MlpParams, pts: &[[f64; 2]]) -> f64 {
        let (val, tang, _) = forward_jets(params, input_batch(pts));
        let mut s = 0.0;
        for b in 0..pts.len() {
            s += 1.3 * val[b] + 0.7 * tang[[0, b]] - 0.4 * tang[[1, b]]
                + 0.2 * tang[[0, b]] * tang[[1, b]];
        }
        s
    }

    fn objective_grads(params: &MlpParams, pts: &[[f64; 2]]) -> Vec<f64> {
        let (_, tang, cache) = forward_jets(params, input_batch(pts));
        let n = pts.len();
        let adj_val = Array1::from_elem(n, 1.3);
        let mut adj_tang = Array2::zeros((2, n));
        for b in 0..n {
            adj_tang[[0, b]] = 0.7 + 0.2 * tang[[1, b]];
            adj_tang[[1, b]] = -0.4 + 0.2 * tang[[0, b]];
        }
        backward_jets(params, &cache, &adj_val, &adj_tang).flatten()
    }

    fn check_grads_fd(variant: MlpVariant) {
        let params = tiny_params(variant);
        let pts = [[0.3, -0.2], [-0.7, 0.5], [0.1, 0.9]];
        let analytic = objective_grads(&params, &pts);
        let flat = params.flatten();
        let h = 1e-6;
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..40 {
            let i = rng.random_range(0..flat.len());
            let mut plus = flat.clone();
            let mut minus = flat.clone();
            plus[i] += h;
            minus[i] -= h;
            let fd = (objective(&params.from_flat(&plus).unwrap(), &pts)
                - objective(&params.from_flat(&minus).unwrap(), &pts))
                / (2.0 * h);
            let denom = fd.abs().max(analytic[i].abs()).max(1e-6);
            assert!(
                (analytic[i] - fd).abs() / denom < 1e-5,
                "param {i}: analytic {} vs fd {fd}",
                analytic[i]
            );
        }
    }

    #[test]
    fn modified_backward_matches_finite_differences() {
        check_grads_fd(MlpVariant::Modified);
    }

    #[test]
    fn plain_backward_matches_finite_differences() {
        check_grads_fd(MlpVariant::Plain);
    }

    #[test]
    fn jet_values_match_scalar_forward() {
        let params = tiny_params(MlpVariant::Modified);
        let pts = [[0.25, -0.45], [0.8, 0.1]];
        let (val, _, _) = forward_jets(&params, input_batch(&pts));
        for (b, p) in pts.iter().enumerate() {
            let scalar = params.forward_value(p);
            assert!((val[b] - scalar).abs() < 1e-12);
        }
    }

    #[test]
    fn jet_tangents_match_finite_differences() {
        let params = tiny_params(MlpVariant::Modified);
        let p = [0.42, -0.13];
        let (_, tang, _) = forward_jets(&params, input_batch(&[p]));
        let h = 1e-6;
        for k in 0..2 {
            let mut plus = p;
            let mut minus = p;
            plus[k] += h;
            minus[k] -= h;
            let fd = (params.forward_value(&plus) - params.forward_value(&minus)) / (2.0 * h);
            assert!(
                (tang[[k, 0]] - fd).abs() < 1e-8,
                "tangent {k}: {} vs {fd}",
                tang[[k, 0]]
            );
        }
    }

    #[test]
    fn zero_params_output_bias() {
        let mut params = tiny_params(MlpVariant::Modified);
        params.w_u.fill(0.0);
        params.w_v.fill(0.0);
        for (w, b) in &mut params.hidden {
            w.fill(0.0);
            b.fill(0.0);
        }
        params.w_out.fill(0.0);
        params.b_out = -1.75;
        assert_eq!(params.forward_value(&[0.4, 0.6]), -1.75);
        let (val, tang, _) = forward_jets(&params, input_batch(&[[0.4, 0.6]]));
        assert_eq!(val[0], -1.75);
        assert_eq!(tang[[0, 0]], 0.0);
    }

    #[test]
    fn flatten_round_trip() {
        let params = tiny_params(MlpVariant::Modified);
        let flat = params.flatten();
        assert_eq!(flat.len(), params.n_params());
        let back = params.from_flat(&flat).unwrap();
        assert_eq!(params, back);
    }

    #[test]
    fn final_layer_perturbation_is_linear() {
        let params = tiny_params(MlpVariant::Modified);
        let x = [0.3, 0.7];
        let base = params.forward_value(&x);
        let eps = 1e-4;
        let mut probe = params.clone();
        probe.w_out[2] += eps;
        let shifted = probe.forward_value(&x);
        let mut probe2 = params.clone();
        probe2.w_out[2] += 2.0 * eps;
        let shifted2 = probe2.forward_value(&x);
        let lin1 = (shifted - base) / eps;
        let lin2 = (shifted2 - base) / (2.0 * eps);
        assert!((lin1 - lin2).abs() < 1e-9, "last layer must be affine");
    }
}
