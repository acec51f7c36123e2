//! Neural collaborative filtering: two embedding tables feeding a ReLU MLP.
//!
//! Layout of the flat parameter vector:
//! `[user_emb (U x d) | item_emb (I x d) | W_0, b_0 | W_1, b_1 | ... ]`
//! with every `W_l` stored row-major as `fan_out x fan_in`.

use super::linalg::{axpy, dot};

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct LayerLayout {
    pub w: usize,
    pub b: usize,
    pub fan_in: usize,
    pub fan_out: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct NcfLayout {
    pub d: usize,
    pub num_users: usize,
    pub num_items: usize,
    pub item_off: usize,
    pub layers: Vec<LayerLayout>,
    pub len: usize,
}

impl NcfLayout {
    pub fn new(num_users: usize, num_items: usize, d: usize, hidden: &[usize]) -> Self {
        let item_off = num_users * d;
        let mut off = item_off + num_items * d;
        let mut layers = Vec::with_capacity(hidden.len() + 1);
        let mut fan_in = 2 * d;
        for &fan_out in hidden.iter().chain(std::iter::once(&1)) {
            let w = off;
            let b = w + fan_in * fan_out;
            off = b + fan_out;
            layers.push(LayerLayout {
                w,
                b,
                fan_in,
                fan_out,
            });
            fan_in = fan_out;
        }
        NcfLayout {
            d,
            num_users,
            num_items,
            item_off,
            layers,
            len: off,
        }
    }

    pub fn user_row(&self, u: usize) -> usize {
        u * self.d
    }

    pub fn item_row(&self, v: usize) -> usize {
        self.item_off + v * self.d
    }

    /// Start of the dense (MLP) region.
    pub fn dense_start(&self) -> usize {
        self.item_off + self.num_items * self.d
    }
}

/// Per-call activations; reused across samples.
#[derive(Clone, Debug, Default)]
pub(crate) struct Scratch {
    acts: Vec<Vec<f64>>,
    delta: Vec<f64>,
    delta_prev: Vec<f64>,
}

impl Scratch {
    pub fn new(layout: &NcfLayout) -> Self {
        let mut acts = vec![vec![0.0; 2 * layout.d]];
        for l in &layout.layers {
            acts.push(vec![0.0; l.fan_out]);
        }
        let widest = layout
            .layers
            .iter()
            .map(|l| l.fan_in.max(l.fan_out))
            .max()
            .unwrap_or(1);
        Scratch {
            acts,
            delta: vec![0.0; widest],
            delta_prev: vec![0.0; widest],
        }
    }
}

/// Pre-sigmoid output `s`.
pub(crate) fn forward(p: &[f64], lay: &NcfLayout, u: usize, v: usize, s: &mut Scratch) -> f64 {
    let d = lay.d;
    s.acts[0][..d].copy_from_slice(&p[lay.user_row(u)..lay.user_row(u) + d]);
    s.acts[0][d..].copy_from_slice(&p[lay.item_row(v)..lay.item_row(v) + d]);
    let last = lay.layers.len() - 1;
    for (l, layer) in lay.layers.iter().enumerate() {
        let (head, tail) = s.acts.split_at_mut(l + 1);
        let input = &head[l];
        let out = &mut tail[0];
        for (o, slot) in out.iter_mut().enumerate() {
            let row = &p[layer.w + o * layer.fan_in..layer.w + (o + 1) * layer.fan_in];
            let z = p[layer.b + o] + dot(row, input);
            *slot = if l == last { z } else { z.max(0.0) };
        }
    }
    s.acts[last + 1][0]
}

/// Backpropagates `ds = dL/ds` from the last `forward` call. Adds `ds`-scaled
/// parameter gradients into `grad` (when given) and returns nothing; the
/// gradient with respect to the concatenated input `[e_u; e_v]` is left in
/// `input_grad` (length `2d`).
pub(crate) fn backward(
    p: &[f64],
    lay: &NcfLayout,
    s: &mut Scratch,
    ds: f64,
    mut grad: Option<&mut [f64]>,
    input_grad: &mut [f64],
) {
    let Scratch {
        acts,
        delta,
        delta_prev,
    } = s;
    delta[0] = ds;
    for (l, layer) in lay.layers.iter().enumerate().rev() {
        let input = &acts[l];
        let dl = &delta[..layer.fan_out];
        if let Some(g) = grad.as_deref_mut() {
            for (o, &dv) in dl.iter().enumerate() {
                if dv != 0.0 {
                    let row = &mut g[layer.w + o * layer.fan_in..layer.w + (o + 1) * layer.fan_in];
                    axpy(dv, input, row);
                    g[layer.b + o] += dv;
                }
            }
        }
        let dp = &mut delta_prev[..layer.fan_in];
        dp.fill(0.0);
        for (o, &dv) in dl.iter().enumerate() {
            if dv != 0.0 {
                axpy(
                    dv,
                    &p[layer.w + o * layer.fan_in..layer.w + (o + 1) * layer.fan_in],
                    dp,
                );
            }
        }
        if l > 0 {
            // ReLU gate: the input of layer l is the post-activation of layer l-1.
            for (g, &a) in dp.iter_mut().zip(input.iter()) {
                if a <= 0.0 {
                    *g = 0.0;
                }
            }
        }
        std::mem::swap(delta, delta_prev);
    }
    input_grad.copy_from_slice(&delta[..2 * lay.d]);
}

/// Adds the input gradient to the two touched embedding rows.
pub(crate) fn scatter_input_grad(
    g: &mut [f64],
    lay: &NcfLayout,
    u: usize,
    v: usize,
    input_grad: &[f64],
) {
    let d = lay.d;
    let ur = lay.user_row(u);
    let vr = lay.item_row(v);
    axpy(1.0, &input_grad[..d], &mut g[ur..ur + d]);
    axpy(1.0, &input_grad[d..], &mut g[vr..vr + d]);
}
