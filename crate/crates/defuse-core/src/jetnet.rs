//! Feed-forward networks evaluated together with their exact first and
//! second spatial derivatives.
//!
//! The forward pass propagates a packed jet per neuron: the value, the
//! gradient with respect to the spatial input, and the unique entries of the
//! symmetric Hessian. The reverse pass differentiates all three channels
//! jointly with respect to the parameters, which is what the residual- and
//! jump-based losses need. Everything runs on flat `f64` buffers owned by a
//! reusable [`Workspace`]; the hot loops allocate nothing.

use crate::geometry::Point;
use std::io::{Read, Write};
use std::ops::Range;

#[derive(Debug, thiserror::Error)]
pub enum JetError {
    #[error("non-finite network output at ({0}, {1})")]
    NonFiniteOutput(f64, f64),
    #[error("adjoint/parameter shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("malformed parameter file: {0}")]
    BadFormat(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Elu,
    Relu,
}

/// `ELU(x) = max(0,x) + min(0, e^x - 1)` with its first and second
/// derivatives. At the kink the left-limit convention `(0, 1, 1)` is used.
pub fn elu_jet(x: f64) -> (f64, f64, f64) {
    let (v, d1, d2, _) = elu4(x);
    (v, d1, d2)
}

#[inline]
fn elu4(x: f64) -> (f64, f64, f64, f64) {
    if x > 0.0 {
        (x, 1.0, 0.0, 0.0)
    } else {
        let e = x.exp();
        (e - 1.0, e, e, e)
    }
}

#[inline]
fn relu4(x: f64) -> (f64, f64, f64, f64) {
    if x > 0.0 {
        (x, 1.0, 0.0, 0.0)
    } else {
        (0.0, 0.0, 0.0, 0.0)
    }
}

#[inline]
fn act4(a: Activation, x: f64) -> (f64, f64, f64, f64) {
    match a {
        Activation::Elu => elu4(x),
        Activation::Relu => relu4(x),
    }
}

/// Value, spatial gradient and spatial Hessian of a scalar field at a point.
/// Unused dimensions stay zero for 1D problems.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Jet {
    pub value: f64,
    pub grad: [f64; 2],
    pub hess: [[f64; 2]; 2],
}

impl Jet {
    pub fn laplacian(&self, dim: usize) -> f64 {
        (0..dim).map(|k| self.hess[k][k]).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.value.is_finite()
            && self.grad.iter().all(|g| g.is_finite())
            && self.hess.iter().flatten().all(|h| h.is_finite())
    }
}

/// Cotangents of a loss with respect to the entries of a [`Jet`].
#[derive(Debug, Clone, Copy, Default)]
pub struct JetCotangent {
    pub value: f64,
    pub grad: [f64; 2],
    pub hess: [[f64; 2]; 2],
}

/// Frozen anchor data for the boundary-anchored output form
/// `(|x-x0| + 1) g(x0) + |x-x0|^p u(x; theta)`: the interface foot point,
/// the extension of the boundary data evaluated there, the interface normal
/// used for the one-sided limit when `x` coincides with `x0`, and the
/// distance exponent of the network factor.
///
/// `p = 1` is the plain anchored form. When the coefficient vanishes like
/// `dist^sigma` at the interface, the bounded homogeneous mode of the
/// degenerate operator behaves like `dist^(1-sigma)`; taking `p = 1-sigma`
/// makes that boundary layer representable with a bounded network.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Anchor {
    pub foot: Point,
    pub ghat: f64,
    pub normal: [f64; 2],
    pub exponent: f64,
}

/// A network evaluation site: raw evaluation or anchored to the interface,
/// with an output scale applied to the network contribution. The scale is
/// a fixed ansatz conditioner (it keeps the raw network output O(1) even
/// for solutions living at the 1e-12 scale of extreme coefficient ratios)
/// and is not differentiated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalPoint {
    pub x: Point,
    pub anchor: Option<Anchor>,
    pub scale: f64,
}

impl EvalPoint {
    pub fn raw(x: Point) -> Self {
        Self {
            x,
            anchor: None,
            scale: 1.0,
        }
    }

    pub fn anchored(x: Point, anchor: Anchor) -> Self {
        Self {
            x,
            anchor: Some(anchor),
            scale: 1.0,
        }
    }

    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    rows: usize,
    cols: usize,
    /// Row-major `rows x cols` weight matrix.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Parameters of one fully-connected network with scalar output. The flat
/// view is layer-major with row-major weights followed by the bias.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    input_dim: usize,
    activation: Activation,
    layers: Vec<Layer>,
}

impl NetworkParams {
    /// Builds a zero-initialized network `input_dim -> hidden... -> 1`.
    pub fn new(input_dim: usize, hidden: &[usize], activation: Activation) -> Self {
        assert!(input_dim == 1 || input_dim == 2);
        let mut layers = Vec::with_capacity(hidden.len() + 1);
        let mut prev = input_dim;
        for &w in hidden {
            assert!(w >= 1);
            layers.push(Layer {
                rows: w,
                cols: prev,
                weights: vec![0.0; w * prev],
                bias: vec![0.0; w],
            });
            prev = w;
        }
        layers.push(Layer {
            rows: 1,
            cols: prev,
            weights: vec![0.0; prev],
            bias: vec![0.0; 1],
        });
        Self {
            input_dim,
            activation,
            layers,
        }
    }

    /// Fan-based uniform initialization: weights in
    /// `[-sqrt(6/(fan_in+fan_out)), +sqrt(6/(fan_in+fan_out))]`, biases zero.
    pub fn init_random(&mut self, rng: &mut impl rand::Rng) {
        for layer in &mut self.layers {
            let s = (6.0 / (layer.cols + layer.rows) as f64).sqrt();
            for w in &mut layer.weights {
                *w = rng.gen_range(-s..s);
            }
            for b in &mut layer.bias {
                *b = 0.0;
            }
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    pub fn max_width(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.rows.max(l.cols))
            .max()
            .unwrap_or(1)
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn unflatten(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.param_count(), "flat parameter length");
        let mut off = 0;
        for l in &mut self.layers {
            let nw = l.weights.len();
            l.weights.copy_from_slice(&flat[off..off + nw]);
            off += nw;
            let nb = l.bias.len();
            l.bias.copy_from_slice(&flat[off..off + nb]);
            off += nb;
        }
    }

    /// Plain forward pass (value only). Performs the dot products in the
    /// same order as the jet evaluation, so both agree bit-for-bit.
    pub fn forward_value(&self, x: Point) -> f64 {
        let mut cur: Vec<f64> = (0..self.input_dim).map(|i| x[i]).collect();
        let last = self.layers.len() - 1;
        for (li, layer) in self.layers.iter().enumerate() {
            let mut next = vec![0.0; layer.rows];
            for r in 0..layer.rows {
                let row = &layer.weights[r * layer.cols..(r + 1) * layer.cols];
                let mut acc = 0.0;
                for (w, v) in row.iter().zip(cur.iter()) {
                    acc += w * v;
                }
                next[r] = acc + layer.bias[r];
            }
            if li != last {
                for v in &mut next {
                    *v = act4(self.activation, *v).0;
                }
            }
            cur = next;
        }
        cur[0]
    }
}

/// Reusable evaluation buffers plus the tape recorded by the last forward
/// pass. One workspace serves one thread.
#[derive(Debug, Default, Clone)]
pub struct Workspace {
    /// Pre-activation slabs per layer, `channels x rows` each.
    pre: Vec<Vec<f64>>,
    /// Post-activation slabs per layer (input of the next affine map).
    post: Vec<Vec<f64>>,
    /// Raw output jet of the last forward pass.
    raw: Jet,
    /// Input slab of the last forward pass (value + identity gradient).
    input: [f64; 12],
    /// Smallest `|pre-activation|` seen in the last forward pass.
    pub min_abs_preact: f64,
    cot_cur: Vec<f64>,
    cot_next: Vec<f64>,
}

fn channels(dim: usize) -> usize {
    1 + dim + dim * (dim + 1) / 2
}

impl Workspace {
    pub fn new() -> Self {
        Self {
            min_abs_preact: f64::INFINITY,
            ..Self::default()
        }
    }

    fn prepare(&mut self, params: &NetworkParams) {
        let nc = channels(params.input_dim);
        let nl = params.layers.len();
        self.pre.resize(nl, Vec::new());
        self.post.resize(nl, Vec::new());
        for (l, layer) in params.layers.iter().enumerate() {
            self.pre[l].resize(nc * layer.rows, 0.0);
            self.post[l].resize(nc * layer.rows, 0.0);
        }
        let maxw = params.max_width();
        self.cot_cur.resize(nc * maxw, 0.0);
        self.cot_next.resize(nc * maxw, 0.0);
    }
}

/// Forward jet evaluation able to reuse a caller-owned workspace; the tape
/// stays in the workspace for a subsequent [`backprop`].
pub fn forward_jet_ws(
    params: &NetworkParams,
    x: Point,
    ws: &mut Workspace,
) -> Result<Jet, JetError> {
    ws.prepare(params);
    ws.min_abs_preact = f64::INFINITY;
    let d = params.input_dim;
    let nc = channels(d);

    // Input slab: value channel carries x, gradient channels the identity.
    ws.input = [0.0; 12];
    for i in 0..d {
        ws.input[i] = x[i]; // channel 0
        ws.input[(1 + i) * d + i] = 1.0; // channel 1+i
    }
    let input = ws.input;

    let last = params.layers.len() - 1;
    for (li, layer) in params.layers.iter().enumerate() {
        let (m_in, m_out) = (layer.cols, layer.rows);
        let prev_post: &[f64] = if li == 0 {
            &input[..nc * d]
        } else {
            &ws.post[li - 1]
        };
        // Affine map, channel by channel; bias only on the value channel.
        let pre = &mut ws.pre[li];
        for c in 0..nc {
            let src = &prev_post[c * m_in..(c + 1) * m_in];
            let dst = &mut pre[c * m_out..(c + 1) * m_out];
            for r in 0..m_out {
                let row = &layer.weights[r * m_in..(r + 1) * m_in];
                let mut acc = 0.0;
                for (w, v) in row.iter().zip(src.iter()) {
                    acc += w * v;
                }
                dst[r] = acc;
            }
        }
        for r in 0..m_out {
            pre[r] += layer.bias[r];
        }

        if li == last {
            ws.post[li].copy_from_slice(pre);
        } else {
            let post = &mut ws.post[li];
            apply_activation(params.activation, d, m_out, pre, post, &mut ws.min_abs_preact);
        }
    }

    let out = &ws.post[last];
    let jet = unpack_jet(d, out);
    ws.raw = jet;
    if !jet.is_finite() {
        return Err(JetError::NonFiniteOutput(x[0], x[1]));
    }
    Ok(jet)
}

fn apply_activation(
    act: Activation,
    d: usize,
    m: usize,
    pre: &[f64],
    post: &mut [f64],
    min_abs: &mut f64,
) {
    for i in 0..m {
        let a = pre[i];
        *min_abs = min_abs.min(a.abs());
        let (v, f1, f2, _) = act4(act, a);
        post[i] = v;
        if d == 1 {
            let g1 = pre[m + i];
            post[m + i] = f1 * g1;
            post[2 * m + i] = f2 * g1 * g1 + f1 * pre[2 * m + i];
        } else {
            let g1 = pre[m + i];
            let g2 = pre[2 * m + i];
            post[m + i] = f1 * g1;
            post[2 * m + i] = f1 * g2;
            post[3 * m + i] = f2 * g1 * g1 + f1 * pre[3 * m + i];
            post[4 * m + i] = f2 * g1 * g2 + f1 * pre[4 * m + i];
            post[5 * m + i] = f2 * g2 * g2 + f1 * pre[5 * m + i];
        }
    }
}

fn unpack_jet(d: usize, slab: &[f64]) -> Jet {
    let mut jet = Jet::default();
    jet.value = slab[0];
    if d == 1 {
        jet.grad[0] = slab[1];
        jet.hess[0][0] = slab[2];
    } else {
        jet.grad = [slab[1], slab[2]];
        jet.hess = [[slab[3], slab[4]], [slab[4], slab[5]]];
    }
    jet
}

/// Packs a full-matrix jet cotangent into channel cotangents; the mixed
/// Hessian channel receives both off-diagonal contributions.
fn pack_cotangent(d: usize, cot: &JetCotangent, out: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    out[0] = cot.value;
    if d == 1 {
        out[1] = cot.grad[0];
        out[2] = cot.hess[0][0];
    } else {
        out[1] = cot.grad[0];
        out[2] = cot.grad[1];
        out[3] = cot.hess[0][0];
        out[4] = cot.hess[0][1] + cot.hess[1][0];
        out[5] = cot.hess[1][1];
    }
}

/// Reverse pass through the tape left in `ws` by the previous forward call.
/// Accumulates `d(loss)/d(theta)` into `grad_out` (flat addressing).
pub fn backprop(
    params: &NetworkParams,
    cot: &JetCotangent,
    ws: &mut Workspace,
    grad_out: &mut [f64],
) -> Result<(), JetError> {
    if grad_out.len() != params.param_count() {
        return Err(JetError::ShapeMismatch(format!(
            "gradient buffer holds {} entries, network has {} parameters",
            grad_out.len(),
            params.param_count()
        )));
    }
    let d = params.input_dim;
    let nc = channels(d);
    let last = params.layers.len() - 1;
    let input = ws.input;

    pack_cotangent(d, cot, &mut ws.cot_cur[..nc]);

    // Flat offsets of each layer.
    let mut offsets = Vec::with_capacity(params.layers.len());
    let mut off = 0;
    for l in &params.layers {
        offsets.push(off);
        off += l.weights.len() + l.bias.len();
    }

    for li in (0..params.layers.len()).rev() {
        let layer = &params.layers[li];
        let (m_in, m_out) = (layer.cols, layer.rows);

        // Through the activation (skipped on the output layer).
        if li != last {
            let pre = &ws.pre[li];
            let cot_post = &mut ws.cot_cur;
            for i in 0..m_out {
                let a = pre[i];
                let (_, f1, f2, f3) = act4(params.activation, a);
                if d == 1 {
                    let g1 = pre[m_out + i];
                    let h11 = pre[2 * m_out + i];
                    let (cv, cg1, ch11) = (
                        cot_post[i],
                        cot_post[m_out + i],
                        cot_post[2 * m_out + i],
                    );
                    cot_post[i] = cv * f1 + cg1 * f2 * g1 + ch11 * (f3 * g1 * g1 + f2 * h11);
                    cot_post[m_out + i] = cg1 * f1 + ch11 * 2.0 * f2 * g1;
                    cot_post[2 * m_out + i] = ch11 * f1;
                } else {
                    let g1 = pre[m_out + i];
                    let g2 = pre[2 * m_out + i];
                    let h11 = pre[3 * m_out + i];
                    let h12 = pre[4 * m_out + i];
                    let h22 = pre[5 * m_out + i];
                    let cv = cot_post[i];
                    let cg1 = cot_post[m_out + i];
                    let cg2 = cot_post[2 * m_out + i];
                    let ch11 = cot_post[3 * m_out + i];
                    let ch12 = cot_post[4 * m_out + i];
                    let ch22 = cot_post[5 * m_out + i];
                    cot_post[i] = cv * f1
                        + (cg1 * g1 + cg2 * g2) * f2
                        + ch11 * (f3 * g1 * g1 + f2 * h11)
                        + ch12 * (f3 * g1 * g2 + f2 * h12)
                        + ch22 * (f3 * g2 * g2 + f2 * h22);
                    cot_post[m_out + i] = cg1 * f1 + ch11 * 2.0 * f2 * g1 + ch12 * f2 * g2;
                    cot_post[2 * m_out + i] = cg2 * f1 + ch22 * 2.0 * f2 * g2 + ch12 * f2 * g1;
                    cot_post[3 * m_out + i] = ch11 * f1;
                    cot_post[4 * m_out + i] = ch12 * f1;
                    cot_post[5 * m_out + i] = ch22 * f1;
                }
            }
        }

        // Through the affine map: parameter gradient and input cotangent.
        let prev_post: &[f64] = if li == 0 {
            &input[..nc * d]
        } else {
            &ws.post[li - 1]
        };
        let goff = offsets[li];
        let (gw, gb) = grad_out[goff..goff + layer.weights.len() + layer.bias.len()]
            .split_at_mut(layer.weights.len());
        for r in 0..m_out {
            gb[r] += ws.cot_cur[r];
            for c in 0..nc {
                let co = ws.cot_cur[c * m_out + r];
                if co == 0.0 {
                    continue;
                }
                let src = &prev_post[c * m_in..(c + 1) * m_in];
                let row = &mut gw[r * m_in..(r + 1) * m_in];
                for (g, v) in row.iter_mut().zip(src.iter()) {
                    *g += co * v;
                }
            }
        }
        if li > 0 {
            // Input cotangent: W^T applied per channel.
            for c in 0..nc {
                let dst = &mut ws.cot_next[c * m_in..(c + 1) * m_in];
                dst.iter_mut().for_each(|v| *v = 0.0);
                for r in 0..m_out {
                    let co = ws.cot_cur[c * m_out + r];
                    if co == 0.0 {
                        continue;
                    }
                    let row = &params.layers[li].weights[r * m_in..(r + 1) * m_in];
                    for (d, w) in dst.iter_mut().zip(row.iter()) {
                        *d += co * w;
                    }
                }
            }
            std::mem::swap(&mut ws.cot_cur, &mut ws.cot_next);
        }
    }
    Ok(())
}

/// Full jet of the network output with respect to the spatial input.
pub fn forward_jet(params: &NetworkParams, x: Point) -> Result<Jet, JetError> {
    let mut ws = Workspace::new();
    forward_jet_ws(params, x, &mut ws)
}

/// Anchored plus-side output form of the jet:
/// `u_t(x) = (|x-x0| + 1) ghat + |x-x0| u(x; theta)`, with `x0` and
/// `ghat(x0)` treated as constants under differentiation.
pub fn anchored_jet(params: &NetworkParams, x: Point, anchor: &Anchor) -> Result<Jet, JetError> {
    let mut ws = Workspace::new();
    eval_jet_ws(params, &EvalPoint::anchored(x, *anchor), &mut ws)
}

/// Evaluates either the raw or the anchored form, leaving the raw tape in
/// the workspace for [`eval_backprop`].
pub fn eval_jet_ws(
    params: &NetworkParams,
    point: &EvalPoint,
    ws: &mut Workspace,
) -> Result<Jet, JetError> {
    let mut raw = forward_jet_ws(params, point.x, ws)?;
    if point.scale != 1.0 {
        raw.value *= point.scale;
        for k in 0..2 {
            raw.grad[k] *= point.scale;
            for l in 0..2 {
                raw.hess[k][l] *= point.scale;
            }
        }
    }
    match &point.anchor {
        None => Ok(raw),
        Some(anchor) => {
            let jet = apply_anchor(params.input_dim, point.x, anchor, &raw);
            if !jet.is_finite() {
                return Err(JetError::NonFiniteOutput(point.x[0], point.x[1]));
            }
            Ok(jet)
        }
    }
}

/// Geometry of the anchored form at one evaluation point: the distance and
/// its derivatives, the network factor `m = dist^p` with its derivatives,
/// the unit direction, and the transverse curvature `(I - e e^T)/dist`.
/// At the foot point itself the direction falls back to the interface
/// normal and all curvature-type terms use the smooth-factor limit.
struct AnchorFrame {
    dist: f64,
    m: f64,
    m1: f64,
    m2: f64,
    e: [f64; 2],
    curv: [[f64; 2]; 2],
}

fn anchor_frame(dim: usize, x: Point, anchor: &Anchor) -> AnchorFrame {
    let dvec = [x[0] - anchor.foot[0], x[1] - anchor.foot[1]];
    let dist = (dvec[0] * dvec[0] + dvec[1] * dvec[1]).sqrt();
    let p = anchor.exponent;
    if dist < 1e-14 {
        return AnchorFrame {
            dist: 0.0,
            m: 0.0,
            m1: 1.0,
            m2: 0.0,
            e: anchor.normal,
            curv: [[0.0; 2]; 2],
        };
    }
    let e = [dvec[0] / dist, dvec[1] / dist];
    let mut curv = [[0.0; 2]; 2];
    for k in 0..dim {
        for l in 0..dim {
            let kron = if k == l { 1.0 } else { 0.0 };
            curv[k][l] = (kron - e[k] * e[l]) / dist;
        }
    }
    let (m, m1, m2) = if p == 1.0 {
        (dist, 1.0, 0.0)
    } else {
        let m = dist.powf(p);
        (m, p * m / dist, p * (p - 1.0) * m / (dist * dist))
    };
    AnchorFrame {
        dist,
        m,
        m1,
        m2,
        e,
        curv,
    }
}

fn apply_anchor(dim: usize, x: Point, anchor: &Anchor, raw: &Jet) -> Jet {
    let f = anchor_frame(dim, x, anchor);
    let mut jet = Jet::default();
    jet.value = (f.dist + 1.0) * anchor.ghat + f.m * raw.value;
    for k in 0..dim {
        jet.grad[k] = f.e[k] * (anchor.ghat + f.m1 * raw.value) + f.m * raw.grad[k];
    }
    for k in 0..dim {
        for l in 0..dim {
            jet.hess[k][l] = f.curv[k][l] * (anchor.ghat + f.m1 * raw.value)
                + f.m2 * f.e[k] * f.e[l] * raw.value
                + f.m1 * (f.e[k] * raw.grad[l] + f.e[l] * raw.grad[k])
                + f.m * raw.hess[k][l];
        }
    }
    jet
}

/// Pulls a cotangent on the anchored output back to a cotangent on the raw
/// network jet.
fn unapply_anchor(dim: usize, x: Point, anchor: &Anchor, cot: &JetCotangent) -> JetCotangent {
    let f = anchor_frame(dim, x, anchor);
    let mut raw = JetCotangent::default();
    raw.value = f.m * cot.value;
    for k in 0..dim {
        raw.value += cot.grad[k] * f.m1 * f.e[k];
        for l in 0..dim {
            raw.value +=
                cot.hess[k][l] * (f.m1 * f.curv[k][l] + f.m2 * f.e[k] * f.e[l]);
            raw.hess[k][l] = f.m * cot.hess[k][l];
        }
    }
    for k in 0..dim {
        raw.grad[k] = f.m * cot.grad[k];
        for l in 0..dim {
            raw.grad[k] += (cot.hess[k][l] + cot.hess[l][k]) * f.m1 * f.e[l];
        }
    }
    raw
}

/// Reverse pass matching [`eval_jet_ws`]: the cotangent refers to the
/// (possibly anchored) output jet.
pub fn eval_backprop(
    params: &NetworkParams,
    point: &EvalPoint,
    cot: &JetCotangent,
    ws: &mut Workspace,
    grad_out: &mut [f64],
) -> Result<(), JetError> {
    let mut raw_cot = match &point.anchor {
        None => *cot,
        Some(anchor) => unapply_anchor(params.input_dim, point.x, anchor, cot),
    };
    if point.scale != 1.0 {
        raw_cot.value *= point.scale;
        for k in 0..2 {
            raw_cot.grad[k] *= point.scale;
            for l in 0..2 {
                raw_cot.hess[k][l] *= point.scale;
            }
        }
    }
    backprop(params, &raw_cot, ws, grad_out)
}

/// Gradient of a loss with respect to the flat parameter vector, given the
/// per-sample jet cotangents produced by the loss assembly.
pub fn param_gradient(
    params: &NetworkParams,
    samples: &[(EvalPoint, JetCotangent)],
    grad_out: &mut [f64],
) -> Result<(), JetError> {
    if grad_out.len() != params.param_count() {
        return Err(JetError::ShapeMismatch(format!(
            "gradient buffer holds {} entries, network has {} parameters",
            grad_out.len(),
            params.param_count()
        )));
    }
    let mut ws = Workspace::new();
    for (point, cot) in samples {
        eval_jet_ws(params, point, &mut ws)?;
        eval_backprop(params, point, cot, &mut ws, grad_out)?;
    }
    Ok(())
}

/// One network per side of the interface, or a single network representing
/// both sides when the value jump vanishes identically.
#[derive(Debug, Clone, PartialEq)]
pub enum PairedNet {
    Shared(NetworkParams),
    Pair {
        minus: NetworkParams,
        plus: NetworkParams,
    },
}

impl PairedNet {
    pub fn is_shared(&self) -> bool {
        matches!(self, PairedNet::Shared(_))
    }

    pub fn minus(&self) -> &NetworkParams {
        match self {
            PairedNet::Shared(n) => n,
            PairedNet::Pair { minus, .. } => minus,
        }
    }

    pub fn plus(&self) -> &NetworkParams {
        match self {
            PairedNet::Shared(n) => n,
            PairedNet::Pair { plus, .. } => plus,
        }
    }

    /// Total length of the flat parameter vector (one copy when shared).
    pub fn param_count(&self) -> usize {
        match self {
            PairedNet::Shared(n) => n.param_count(),
            PairedNet::Pair { minus, plus } => minus.param_count() + plus.param_count(),
        }
    }

    pub fn minus_segment(&self) -> Range<usize> {
        0..self.minus().param_count()
    }

    pub fn plus_segment(&self) -> Range<usize> {
        match self {
            PairedNet::Shared(n) => 0..n.param_count(),
            PairedNet::Pair { minus, plus } => {
                minus.param_count()..minus.param_count() + plus.param_count()
            }
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        match self {
            PairedNet::Shared(n) => n.flatten(),
            PairedNet::Pair { minus, plus } => {
                let mut v = minus.flatten();
                v.extend(plus.flatten());
                v
            }
        }
    }

    pub fn unflatten(&mut self, flat: &[f64]) {
        match self {
            PairedNet::Shared(n) => n.unflatten(flat),
            PairedNet::Pair { minus, plus } => {
                let split = minus.param_count();
                minus.unflatten(&flat[..split]);
                plus.unflatten(&flat[split..]);
            }
        }
    }
}

/// The trained band representation: the paired network plus the fixed
/// per-side output scales baked into the ansatz.
#[derive(Debug, Clone, PartialEq)]
pub struct BandAnsatz {
    pub net: PairedNet,
    pub scale_minus: f64,
    pub scale_plus: f64,
}

impl BandAnsatz {
    pub fn unscaled(net: PairedNet) -> Self {
        Self {
            net,
            scale_minus: 1.0,
            scale_plus: 1.0,
        }
    }

    pub fn scale(&self, minus: bool) -> f64 {
        if minus {
            self.scale_minus
        } else {
            self.scale_plus
        }
    }
}

const MAGIC: &[u8; 8] = b"DFUSNET1";

fn write_network<W: Write>(out: &mut W, net: &NetworkParams) -> Result<(), JetError> {
    out.write_all(&(net.layers.len() as u32).to_le_bytes())?;
    for l in &net.layers {
        out.write_all(&(l.rows as u32).to_le_bytes())?;
        out.write_all(&(l.cols as u32).to_le_bytes())?;
    }
    for v in net.flatten() {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_u32<R: Read>(inp: &mut R) -> Result<u32, JetError> {
    let mut b = [0u8; 4];
    inp.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_network<R: Read>(
    inp: &mut R,
    input_dim: usize,
    activation: Activation,
) -> Result<NetworkParams, JetError> {
    let n_layers = read_u32(inp)? as usize;
    if n_layers == 0 || n_layers > 64 {
        return Err(JetError::BadFormat(format!("layer count {}", n_layers)));
    }
    let mut dims = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let rows = read_u32(inp)? as usize;
        let cols = read_u32(inp)? as usize;
        if rows == 0 || cols == 0 || rows > 4096 || cols > 4096 {
            return Err(JetError::BadFormat(format!("layer shape {rows}x{cols}")));
        }
        dims.push((rows, cols));
    }
    if dims[0].1 != input_dim || dims[n_layers - 1].0 != 1 {
        return Err(JetError::BadFormat("layer dims do not compose".into()));
    }
    for w in dims.windows(2) {
        if w[1].1 != w[0].0 {
            return Err(JetError::BadFormat("layer dims do not compose".into()));
        }
    }
    let hidden: Vec<usize> = dims[..n_layers - 1].iter().map(|d| d.0).collect();
    let mut net = NetworkParams::new(input_dim, &hidden, activation);
    let mut flat = vec![0.0; net.param_count()];
    for v in &mut flat {
        let mut b = [0u8; 8];
        inp.read_exact(&mut b)?;
        *v = f64::from_le_bytes(b);
    }
    net.unflatten(&flat);
    Ok(net)
}

/// Serializes a [`BandAnsatz`]: fixed header (magic, version, dims,
/// activation id, output scales) followed by the flat parameters as
/// little-endian `f64`.
pub fn save_paired<W: Write>(out: &mut W, ansatz: &BandAnsatz) -> Result<(), JetError> {
    let net = &ansatz.net;
    out.write_all(MAGIC)?;
    out.write_all(&1u32.to_le_bytes())?; // version
    let flags = if net.is_shared() { 1u8 } else { 0u8 };
    let act = match net.minus().activation {
        Activation::Elu => 0u8,
        Activation::Relu => 1u8,
    };
    out.write_all(&[flags, act, net.minus().input_dim as u8, 0])?;
    out.write_all(&ansatz.scale_minus.to_le_bytes())?;
    out.write_all(&ansatz.scale_plus.to_le_bytes())?;
    match net {
        PairedNet::Shared(n) => write_network(out, n)?,
        PairedNet::Pair { minus, plus } => {
            write_network(out, minus)?;
            write_network(out, plus)?;
        }
    }
    Ok(())
}

pub fn load_paired<R: Read>(inp: &mut R) -> Result<BandAnsatz, JetError> {
    let mut magic = [0u8; 8];
    inp.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(JetError::BadFormat("bad magic".into()));
    }
    let version = read_u32(inp)?;
    if version != 1 {
        return Err(JetError::BadFormat(format!("unknown version {version}")));
    }
    let mut head = [0u8; 4];
    inp.read_exact(&mut head)?;
    let shared = head[0] == 1;
    let activation = match head[1] {
        0 => Activation::Elu,
        1 => Activation::Relu,
        a => return Err(JetError::BadFormat(format!("unknown activation {a}"))),
    };
    let dim = head[2] as usize;
    if dim != 1 && dim != 2 {
        return Err(JetError::BadFormat(format!("input dim {dim}")));
    }
    let mut scales = [0u8; 16];
    inp.read_exact(&mut scales)?;
    let scale_minus = f64::from_le_bytes(scales[..8].try_into().unwrap());
    let scale_plus = f64::from_le_bytes(scales[8..].try_into().unwrap());
    let net = if shared {
        PairedNet::Shared(read_network(inp, dim, activation)?)
    } else {
        PairedNet::Pair {
            minus: read_network(inp, dim, activation)?,
            plus: read_network(inp, dim, activation)?,
        }
    };
    Ok(BandAnsatz {
        net,
        scale_minus,
        scale_plus,
    })
}
