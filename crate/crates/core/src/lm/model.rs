// SPDX-License-Identifier: MIT OR Apache-2.0

//! Forward and reverse-mode passes over the node/port graph.
//!
//! Every port input is materialised as the ordered sum of its upstream node
//! outputs, so an unpatched run is an ordinary pre-LN transformer while a
//! patched run can swap any single edge's contribution for the output of a
//! reference (corrupted) run. Gradients are derived by hand per node type.

use rayon::prelude::*;

use super::params::{LayerLayout, Parameters};
use super::topology::{NodeKind, Topology};
use super::vocab::PAD;
use crate::{Error, Result};

const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

/// Per-edge intervention for a patched run.
pub struct EdgePatch<'a> {
    /// Indexed by edge id; `true` keeps the live activation of the source,
    /// `false` substitutes the source's output from `reference`.
    pub keep: &'a [bool],
    pub reference: &'a ActivationCache,
}

#[derive(Debug, Clone)]
struct LnState {
    xhat: Vec<f64>,
    rstd: Vec<f64>,
}

#[derive(Debug, Clone)]
enum NodeState {
    Embed,
    Head {
        ln: [LnState; 3],
        lnout: [Vec<f64>; 3],
        q: Vec<f64>,
        k: Vec<f64>,
        v: Vec<f64>,
        att: Vec<f64>,
        z: Vec<f64>,
    },
    Mlp {
        ln: LnState,
        lnout: Vec<f64>,
        pre: Vec<f64>,
        act: Vec<f64>,
    },
    Logits {
        ln: LnState,
        lnout: Vec<f64>,
    },
}

/// Everything a forward pass produced: node outputs, port inputs, logits
/// and the intermediate values the backward pass needs.
#[derive(Debug, Clone)]
pub struct ActivationCache {
    pub tokens: Vec<usize>,
    /// `seq_len x d_model` output of every node except logits (empty there).
    pub outputs: Vec<Vec<f64>>,
    /// `seq_len x d_model` input of every port.
    pub port_inputs: Vec<Vec<f64>>,
    /// `seq_len x vocab_size`.
    pub logits: Vec<f64>,
    states: Vec<NodeState>,
}

impl ActivationCache {
    pub fn seq_len(&self) -> usize {
        self.tokens.len()
    }

    /// Logit row at `pos`.
    pub fn logits_at(&self, pos: usize) -> &[f64] {
        let v = self.logits.len() / self.tokens.len();
        &self.logits[pos * v..(pos + 1) * v]
    }
}

/// Gradients of a scalar objective with respect to every port input and
/// every node output.
#[derive(Debug, Clone)]
pub struct GraphGrads {
    pub port_inputs: Vec<Vec<f64>>,
    pub outputs: Vec<Vec<f64>>,
}

pub(crate) fn check_tokens(params: &Parameters, tokens: &[usize]) -> Result<()> {
    let cfg = &params.config;
    if tokens.is_empty() {
        return Err(Error::invalid("empty token sequence"));
    }
    if tokens.len() > cfg.context_len {
        return Err(Error::SequenceTooLong {
            len: tokens.len(),
            context_len: cfg.context_len,
        });
    }
    if let Some(&id) = tokens.iter().find(|&&id| id >= cfg.vocab_size) {
        return Err(Error::TokenOutOfRange {
            id,
            vocab_size: cfg.vocab_size,
        });
    }
    Ok(())
}

/// Token plus positional embedding, `seq_len x d_model`.
pub fn embed_tokens(params: &Parameters, tokens: &[usize]) -> Result<Vec<f64>> {
    check_tokens(params, tokens)?;
    let d = params.config.d_model;
    let wte = params.slice(&params.layout.wte);
    let wpe = params.slice(&params.layout.wpe);
    let mut out = vec![0.0; tokens.len() * d];
    for (t, &tok) in tokens.iter().enumerate() {
        let row = &mut out[t * d..(t + 1) * d];
        for i in 0..d {
            row[i] = wte[tok * d + i] + wpe[t * d + i];
        }
    }
    Ok(out)
}

/// Runs the graph on `tokens` with the embedding node's output set to
/// `embed`, optionally patching edges.
pub fn run(params: &Parameters, tokens: &[usize], embed: Vec<f64>, patch: Option<&EdgePatch<'_>>) -> Result<ActivationCache> {
    check_tokens(params, tokens)?;
    let cfg = params.config;
    let (t_len, d) = (tokens.len(), cfg.d_model);
    if embed.len() != t_len * d {
        return Err(Error::invalid("embedding has the wrong shape"));
    }
    let topo = Topology::new(cfg.n_layers, cfg.n_heads);
    let n_nodes = topo.n_nodes();
    let mut outputs: Vec<Vec<f64>> = Vec::with_capacity(n_nodes);
    let mut states: Vec<NodeState> = Vec::with_capacity(n_nodes);
    let mut port_inputs: Vec<Vec<f64>> = vec![Vec::new(); topo.n_ports()];
    outputs.push(embed);
    states.push(NodeState::Embed);
    let mut memo: Option<(usize, Vec<f64>)> = None;

    let mut logits = Vec::new();
    for node in 1..n_nodes {
        for &port in topo.node_ports(node) {
            let n_up = topo.n_upstream(node);
            let input = match (patch, &memo) {
                (None, Some((n, v))) if *n == n_up => v.clone(),
                _ => {
                    let v = port_input(&topo, port, n_up, &outputs, patch, t_len * d);
                    if patch.is_none() {
                        memo = Some((n_up, v.clone()));
                    }
                    v
                }
            };
            port_inputs[port] = input;
        }
        let ports = topo.node_ports(node);
        match topo.kind(node) {
            NodeKind::AttnHead { layer, head } => {
                let ly = &params.layout.layers[layer];
                let (out, st) = head_forward(
                    params,
                    ly,
                    head,
                    [&port_inputs[ports[0]], &port_inputs[ports[1]], &port_inputs[ports[2]]],
                    t_len,
                );
                outputs.push(out);
                states.push(st);
            }
            NodeKind::Mlp { layer } => {
                let (out, st) = mlp_forward(params, &params.layout.layers[layer], &port_inputs[ports[0]], t_len);
                outputs.push(out);
                states.push(st);
            }
            NodeKind::Logits => {
                let (lg, st) = logits_forward(params, &port_inputs[ports[0]], t_len);
                logits = lg;
                outputs.push(Vec::new());
                states.push(st);
            }
            NodeKind::InputEmbed => unreachable!("embed is node 0"),
        }
        if outputs.last().is_some_and(|o| o.iter().any(|x| !x.is_finite())) {
            return Err(Error::NonFinite {
                node: topo.kind(node).to_string(),
            });
        }
    }
    if logits.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite { node: "logits".into() });
    }
    Ok(ActivationCache {
        tokens: tokens.to_vec(),
        outputs,
        port_inputs,
        logits,
        states,
    })
}

fn port_input(
    topo: &Topology,
    port: usize,
    n_up: usize,
    outputs: &[Vec<f64>],
    patch: Option<&EdgePatch<'_>>,
    len: usize,
) -> Vec<f64> {
    let mut acc = vec![0.0; len];
    for src in 0..n_up {
        let live = patch.is_none_or(|p| p.keep[topo.edge_id(src, port)]);
        let v = if live {
            &outputs[src]
        } else {
            &patch.expect("patched").reference.outputs[src]
        };
        for (a, s) in acc.iter_mut().zip(v) {
            *a += s;
        }
    }
    acc
}

/// Plain forward pass. Returns `seq_len x vocab_size` logits and, if asked,
/// the activation cache.
pub fn forward(params: &Parameters, tokens: &[usize], want_cache: bool) -> Result<(Vec<f64>, Option<ActivationCache>)> {
    let embed = embed_tokens(params, tokens)?;
    let mut cache = run(params, tokens, embed, None)?;
    let logits = std::mem::take(&mut cache.logits);
    if want_cache {
        cache.logits = logits.clone();
        Ok((logits, Some(cache)))
    } else {
        Ok((logits, None))
    }
}

// ---- linear algebra helpers (row-major) -------------------------------------

/// `a (m x k) * b (k x n)`.
fn matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            let brow = &b[p * n..(p + 1) * n];
            for j in 0..n {
                row[j] += av * brow[j];
            }
        }
    }
    out
}

/// `dy (m x n) * b^T` where `b` is `k x n`.
fn matmul_bt(dy: &[f64], b: &[f64], m: usize, n: usize, k: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * k];
    for i in 0..m {
        let dyr = &dy[i * n..(i + 1) * n];
        for p in 0..k {
            let br = &b[p * n..(p + 1) * n];
            out[i * k + p] = dyr.iter().zip(br).map(|(x, y)| x * y).sum();
        }
    }
    out
}

/// `out (k x n) += a^T (k x m) * dy (m x n)`.
fn acc_at_b(a: &[f64], dy: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    for i in 0..m {
        let dyr = &dy[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let orow = &mut out[p * n..(p + 1) * n];
            for j in 0..n {
                orow[j] += av * dyr[j];
            }
        }
    }
}

fn add_bias(x: &mut [f64], b: &[f64]) {
    let n = b.len();
    for row in x.chunks_mut(n) {
        for (v, bb) in row.iter_mut().zip(b) {
            *v += bb;
        }
    }
}

fn acc_bias(dy: &[f64], out: &mut [f64]) {
    let n = out.len();
    for row in dy.chunks(n) {
        for (o, v) in out.iter_mut().zip(row) {
            *o += v;
        }
    }
}

fn layer_norm(x: &[f64], g: &[f64], b: &[f64], t_len: usize) -> (Vec<f64>, LnState) {
    let d = g.len();
    let mut y = vec![0.0; t_len * d];
    let mut xhat = vec![0.0; t_len * d];
    let mut rstd = vec![0.0; t_len];
    for t in 0..t_len {
        let row = &x[t * d..(t + 1) * d];
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let rs = 1.0 / (var + LN_EPS).sqrt();
        rstd[t] = rs;
        for i in 0..d {
            let h = (row[i] - mean) * rs;
            xhat[t * d + i] = h;
            y[t * d + i] = h * g[i] + b[i];
        }
    }
    (y, LnState { xhat, rstd })
}

fn layer_norm_backward(dy: &[f64], st: &LnState, g: &[f64], grads: Option<(&mut [f64], &mut [f64])>) -> Vec<f64> {
    let d = g.len();
    let t_len = st.rstd.len();
    let mut dx = vec![0.0; t_len * d];
    for t in 0..t_len {
        let dyr = &dy[t * d..(t + 1) * d];
        let xh = &st.xhat[t * d..(t + 1) * d];
        let mut mean_dxh = 0.0;
        let mut mean_dxh_xh = 0.0;
        for i in 0..d {
            let dxh = dyr[i] * g[i];
            mean_dxh += dxh;
            mean_dxh_xh += dxh * xh[i];
        }
        mean_dxh /= d as f64;
        mean_dxh_xh /= d as f64;
        for i in 0..d {
            let dxh = dyr[i] * g[i];
            dx[t * d + i] = st.rstd[t] * (dxh - mean_dxh - xh[i] * mean_dxh_xh);
        }
    }
    if let Some((dg, db)) = grads {
        for t in 0..t_len {
            for i in 0..d {
                dg[i] += dy[t * d + i] * st.xhat[t * d + i];
                db[i] += dy[t * d + i];
            }
        }
    }
    dx
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let inner = GELU_C * (x + 0.044715 * x * x * x);
    let th = inner.tanh();
    0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}

// ---- node forward -----------------------------------------------------------

fn head_forward(
    params: &Parameters,
    ly: &LayerLayout,
    head: usize,
    inputs: [&Vec<f64>; 3],
    t_len: usize,
) -> (Vec<f64>, NodeState) {
    let cfg = &params.config;
    let (d, dh) = (cfg.d_model, cfg.d_head());
    let g = params.slice(&ly.ln1_g);
    let b = params.slice(&ly.ln1_b);
    let wblock = |r: &std::ops::Range<usize>| &params.data[r.start + head * d * dh..r.start + (head + 1) * d * dh];
    let bblock = |r: &std::ops::Range<usize>| &params.data[r.start + head * dh..r.start + (head + 1) * dh];

    let (lq, sq) = layer_norm(inputs[0], g, b, t_len);
    let (lk, sk) = layer_norm(inputs[1], g, b, t_len);
    let (lv, sv) = layer_norm(inputs[2], g, b, t_len);
    let mut q = matmul(&lq, wblock(&ly.w_q), t_len, d, dh);
    add_bias(&mut q, bblock(&ly.b_q));
    let mut k = matmul(&lk, wblock(&ly.w_k), t_len, d, dh);
    add_bias(&mut k, bblock(&ly.b_k));
    let mut v = matmul(&lv, wblock(&ly.w_v), t_len, d, dh);
    add_bias(&mut v, bblock(&ly.b_v));

    let scale = 1.0 / (dh as f64).sqrt();
    let mut att = vec![0.0; t_len * t_len];
    for t in 0..t_len {
        let qt = &q[t * dh..(t + 1) * dh];
        let row = &mut att[t * t_len..(t + 1) * t_len];
        let mut max = f64::NEG_INFINITY;
        for s in 0..=t {
            let ks = &k[s * dh..(s + 1) * dh];
            let sc = qt.iter().zip(ks).map(|(a, b)| a * b).sum::<f64>() * scale;
            row[s] = sc;
            max = max.max(sc);
        }
        let mut sum = 0.0;
        for s in 0..=t {
            row[s] = (row[s] - max).exp();
            sum += row[s];
        }
        for s in 0..=t {
            row[s] /= sum;
        }
    }
    let mut z = vec![0.0; t_len * dh];
    for t in 0..t_len {
        for s in 0..=t {
            let a = att[t * t_len + s];
            for c in 0..dh {
                z[t * dh + c] += a * v[s * dh + c];
            }
        }
    }
    let wo = &params.data[ly.w_o.start + head * dh * d..ly.w_o.start + (head + 1) * dh * d];
    let out = matmul(&z, wo, t_len, dh, d);
    (
        out,
        NodeState::Head {
            ln: [sq, sk, sv],
            lnout: [lq, lk, lv],
            q,
            k,
            v,
            att,
            z,
        },
    )
}

fn mlp_forward(params: &Parameters, ly: &LayerLayout, x: &[f64], t_len: usize) -> (Vec<f64>, NodeState) {
    let cfg = &params.config;
    let (d, dm) = (cfg.d_model, cfg.d_mlp);
    let (lnout, ln) = layer_norm(x, params.slice(&ly.ln2_g), params.slice(&ly.ln2_b), t_len);
    let mut pre = matmul(&lnout, params.slice(&ly.w_fc), t_len, d, dm);
    add_bias(&mut pre, params.slice(&ly.b_fc));
    let act: Vec<f64> = pre.iter().map(|&x| gelu(x)).collect();
    let mut out = matmul(&act, params.slice(&ly.w_proj), t_len, dm, d);
    add_bias(&mut out, params.slice(&ly.b_proj));
    (out, NodeState::Mlp { ln, lnout, pre, act })
}

fn logits_forward(params: &Parameters, x: &[f64], t_len: usize) -> (Vec<f64>, NodeState) {
    let cfg = &params.config;
    let (lnout, ln) = layer_norm(x, params.slice(&params.layout.lnf_g), params.slice(&params.layout.lnf_b), t_len);
    let logits = matmul(&lnout, params.slice(&params.layout.w_unembed), t_len, cfg.d_model, cfg.vocab_size);
    (logits, NodeState::Logits { ln, lnout })
}

// ---- backward -----------------------------------------------------------------

/// Split-borrow two disjoint ranges of the gradient buffer.
fn two_mut<'a>(
    g: &'a mut [f64],
    a: &std::ops::Range<usize>,
    b: &std::ops::Range<usize>,
) -> (&'a mut [f64], &'a mut [f64]) {
    assert!(a.end <= b.start, "ranges must be ordered and disjoint");
    let (lo, hi) = g.split_at_mut(b.start);
    (&mut lo[a.clone()], &mut hi[..b.end - b.start])
}

/// Reverse pass from `d_logits` (`seq_len x vocab_size`). Parameter gradients
/// are accumulated into `param_grads` when given.
pub fn backward(
    params: &Parameters,
    cache: &ActivationCache,
    d_logits: &[f64],
    mut param_grads: Option<&mut [f64]>,
) -> GraphGrads {
    let cfg = params.config;
    let topo = Topology::new(cfg.n_layers, cfg.n_heads);
    let (t_len, d) = (cache.seq_len(), cfg.d_model);
    let n_nodes = topo.n_nodes();
    let mut d_out: Vec<Vec<f64>> = vec![vec![0.0; t_len * d]; n_nodes];
    d_out[n_nodes - 1] = Vec::new();
    let mut d_port: Vec<Vec<f64>> = vec![Vec::new(); topo.n_ports()];

    for node in (1..n_nodes).rev() {
        let ports = topo.node_ports(node);
        let port_grads: Vec<Vec<f64>> = match (&cache.states[node], topo.kind(node)) {
            (NodeState::Logits { ln, lnout }, NodeKind::Logits) => {
                vec![logits_backward(params, ln, lnout, d_logits, t_len, param_grads.as_deref_mut())]
            }
            (NodeState::Mlp { ln, lnout, pre, act }, NodeKind::Mlp { layer }) => vec![mlp_backward(
                params,
                &params.layout.layers[layer],
                (ln, lnout, pre, act),
                &d_out[node],
                t_len,
                param_grads.as_deref_mut(),
            )],
            (st @ NodeState::Head { .. }, NodeKind::AttnHead { layer, head }) => head_backward(
                params,
                &params.layout.layers[layer],
                head,
                st,
                &d_out[node],
                t_len,
                param_grads.as_deref_mut(),
            )
            .into(),
            _ => unreachable!("node state does not match topology"),
        };
        let n_up = topo.n_upstream(node);
        for (&port, g) in ports.iter().zip(port_grads) {
            for src_grad in d_out.iter_mut().take(n_up) {
                for (a, b) in src_grad.iter_mut().zip(&g) {
                    *a += b;
                }
            }
            d_port[port] = g;
        }
    }

    if let Some(grads) = param_grads {
        let lay = &params.layout;
        for (t, &tok) in cache.tokens.iter().enumerate() {
            for i in 0..d {
                let g = d_out[0][t * d + i];
                grads[lay.wte.start + tok * d + i] += g;
                grads[lay.wpe.start + t * d + i] += g;
            }
        }
    }
    GraphGrads {
        port_inputs: d_port,
        outputs: d_out,
    }
}

fn logits_backward(
    params: &Parameters,
    ln: &LnState,
    lnout: &[f64],
    d_logits: &[f64],
    t_len: usize,
    grads: Option<&mut [f64]>,
) -> Vec<f64> {
    let cfg = &params.config;
    let lay = &params.layout;
    let (d, v) = (cfg.d_model, cfg.vocab_size);
    let d_ln = matmul_bt(d_logits, params.slice(&lay.w_unembed), t_len, v, d);
    match grads {
        Some(g) => {
            acc_at_b(lnout, d_logits, t_len, d, v, &mut g[lay.w_unembed.clone()]);
            layer_norm_backward(&d_ln, ln, params.slice(&lay.lnf_g), Some(two_mut(g, &lay.lnf_g, &lay.lnf_b)))
        }
        None => layer_norm_backward(&d_ln, ln, params.slice(&lay.lnf_g), None),
    }
}

fn mlp_backward(
    params: &Parameters,
    ly: &LayerLayout,
    (ln, lnout, pre, act): (&LnState, &Vec<f64>, &Vec<f64>, &Vec<f64>),
    d_out: &[f64],
    t_len: usize,
    mut grads: Option<&mut [f64]>,
) -> Vec<f64> {
    let cfg = &params.config;
    let (d, dm) = (cfg.d_model, cfg.d_mlp);
    let d_act = matmul_bt(d_out, params.slice(&ly.w_proj), t_len, d, dm);
    let d_pre: Vec<f64> = d_act.iter().zip(pre).map(|(g, &x)| g * gelu_grad(x)).collect();
    let d_ln = matmul_bt(&d_pre, params.slice(&ly.w_fc), t_len, dm, d);
    if let Some(g) = grads.as_deref_mut() {
        acc_at_b(act, d_out, t_len, dm, d, &mut g[ly.w_proj.clone()]);
        acc_bias(d_out, &mut g[ly.b_proj.clone()]);
        acc_at_b(lnout, &d_pre, t_len, d, dm, &mut g[ly.w_fc.clone()]);
        acc_bias(&d_pre, &mut g[ly.b_fc.clone()]);
    }
    let ln_grads = grads.map(|g| two_mut(g, &ly.ln2_g, &ly.ln2_b));
    layer_norm_backward(&d_ln, ln, params.slice(&ly.ln2_g), ln_grads)
}

fn head_backward(
    params: &Parameters,
    ly: &LayerLayout,
    head: usize,
    state: &NodeState,
    d_out: &[f64],
    t_len: usize,
    mut grads: Option<&mut [f64]>,
) -> [Vec<f64>; 3] {
    let NodeState::Head { ln, lnout, q, k, v, att, z } = state else {
        unreachable!("head state")
    };
    let cfg = &params.config;
    let (d, dh) = (cfg.d_model, cfg.d_head());
    let wo_r = ly.w_o.start + head * dh * d..ly.w_o.start + (head + 1) * dh * d;
    let dz = matmul_bt(d_out, &params.data[wo_r.clone()], t_len, d, dh);
    if let Some(g) = grads.as_deref_mut() {
        acc_at_b(z, d_out, t_len, dh, d, &mut g[wo_r]);
    }

    let mut dq = vec![0.0; t_len * dh];
    let mut dk = vec![0.0; t_len * dh];
    let mut dv = vec![0.0; t_len * dh];
    let scale = 1.0 / (dh as f64).sqrt();
    for t in 0..t_len {
        let arow = &att[t * t_len..(t + 1) * t_len];
        let dzt = &dz[t * dh..(t + 1) * dh];
        let mut da = vec![0.0; t + 1];
        for s in 0..=t {
            let vs = &v[s * dh..(s + 1) * dh];
            da[s] = dzt.iter().zip(vs).map(|(a, b)| a * b).sum();
            for c in 0..dh {
                dv[s * dh + c] += arow[s] * dzt[c];
            }
        }
        let dot: f64 = (0..=t).map(|s| arow[s] * da[s]).sum();
        for s in 0..=t {
            let ds = arow[s] * (da[s] - dot) * scale;
            for c in 0..dh {
                dq[t * dh + c] += ds * k[s * dh + c];
                dk[s * dh + c] += ds * q[t * dh + c];
            }
        }
    }

    let blocks = [(&ly.w_q, &ly.b_q, &dq), (&ly.w_k, &ly.b_k, &dk), (&ly.w_v, &ly.b_v, &dv)];
    let mut out: [Vec<f64>; 3] = Default::default();
    for (i, (w, b, dproj)) in blocks.into_iter().enumerate() {
        let w_r = w.start + head * d * dh..w.start + (head + 1) * d * dh;
        let b_r = b.start + head * dh..b.start + (head + 1) * dh;
        let d_ln = matmul_bt(dproj, &params.data[w_r.clone()], t_len, dh, d);
        if let Some(g) = grads.as_deref_mut() {
            acc_at_b(&lnout[i], dproj, t_len, d, dh, &mut g[w_r]);
            acc_bias(dproj, &mut g[b_r]);
        }
        let ln_grads = grads.as_deref_mut().map(|g| two_mut(g, &ly.ln1_g, &ly.ln1_b));
        out[i] = layer_norm_backward(&d_ln, &ln[i], params.slice(&ly.ln1_g), ln_grads);
    }
    out
}

// ---- loss ---------------------------------------------------------------------

/// Summed next-token cross-entropy of one sequence, the number of scored
/// positions and `d(sum)/d(logits)` scaled by `grad_scale`.
fn sequence_ce(logits: &[f64], tokens: &[usize], vocab: usize, grad_scale: f64) -> (f64, usize, Vec<f64>) {
    let mut d_logits = vec![0.0; logits.len()];
    let mut total = 0.0;
    let mut count = 0;
    for t in 0..tokens.len().saturating_sub(1) {
        let target = tokens[t + 1];
        if target == PAD {
            continue;
        }
        let row = &logits[t * vocab..(t + 1) * vocab];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|x| (x - max).exp()).sum();
        let lse = max + sum.ln();
        total += lse - row[target];
        count += 1;
        let drow = &mut d_logits[t * vocab..(t + 1) * vocab];
        for j in 0..vocab {
            drow[j] = (row[j] - lse).exp() * grad_scale;
        }
        drow[target] -= grad_scale;
    }
    (total, count, d_logits)
}

fn prediction_count(seq: &[usize]) -> usize {
    seq.iter().skip(1).filter(|&&t| t != PAD).count()
}

/// Mean next-token loss over non-PAD targets of a batch and its exact
/// gradient with respect to every parameter.
///
/// The batch is processed in fixed chunks whose partial gradients are summed
/// in order, so the result does not depend on the thread count.
pub fn loss_and_grads(params: &Parameters, batch: &[Vec<usize>]) -> Result<(f64, Vec<f64>)> {
    if let Some(s) = batch.iter().find(|s| s.len() < 2) {
        return Err(Error::invalid(format!("sequence of length {} has nothing to predict", s.len())));
    }
    let n_targets: usize = batch.iter().map(|s| prediction_count(s)).sum();
    if n_targets == 0 {
        return Err(Error::EmptyBatch);
    }
    let scale = 1.0 / n_targets as f64;
    const CHUNK: usize = 4;
    let vocab = params.config.vocab_size;
    let partials: Vec<Result<(f64, Vec<f64>)>> = batch
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut grads = vec![0.0; params.len()];
            let mut loss = 0.0;
            for seq in chunk {
                let (_, cache) = forward(params, seq, true)?;
                let cache = cache.expect("requested");
                let (l, _, d_logits) = sequence_ce(&cache.logits, seq, vocab, scale);
                loss += l;
                backward(params, &cache, &d_logits, Some(&mut grads));
            }
            Ok((loss, grads))
        })
        .collect();
    let mut total_loss = 0.0;
    let mut grads = vec![0.0; params.len()];
    for p in partials {
        let (l, g) = p?;
        total_loss += l;
        for (a, b) in grads.iter_mut().zip(&g) {
            *a += b;
        }
    }
    Ok((total_loss * scale, grads))
}

/// Mean next-token loss over non-PAD targets, without gradients.
pub fn mean_loss(params: &Parameters, batch: &[Vec<usize>]) -> Result<f64> {
    let vocab = params.config.vocab_size;
    let parts: Vec<Result<(f64, usize)>> = batch
        .par_iter()
        .map(|seq| {
            let (logits, _) = forward(params, seq, false)?;
            let (l, c, _) = sequence_ce(&logits, seq, vocab, 0.0);
            Ok((l, c))
        })
        .collect();
    let (mut sum, mut n) = (0.0, 0usize);
    for p in parts {
        let (l, c) = p?;
        sum += l;
        n += c;
    }
    if n == 0 {
        return Err(Error::EmptyBatch);
    }
    Ok(sum / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::params::ModelConfig;

    fn tiny() -> Parameters {
        Parameters::init(
            ModelConfig {
                n_layers: 2,
                n_heads: 2,
                d_model: 8,
                d_mlp: 12,
                context_len: 8,
                vocab_size: 10,
            },
            5,
        )
        .unwrap()
    }

    #[test]
    fn single_token_gives_one_row() {
        let p = tiny();
        let (logits, cache) = forward(&p, &[3], false).unwrap();
        assert_eq!(logits.len(), 10);
        assert!(cache.is_none());
    }

    #[test]
    fn out_of_range_and_too_long_are_errors() {
        let p = tiny();
        assert!(matches!(forward(&p, &[1, 10], false), Err(Error::TokenOutOfRange { id: 10, .. })));
        assert!(matches!(forward(&p, &[1; 9], false), Err(Error::SequenceTooLong { .. })));
    }

    #[test]
    fn causal_mask() {
        let p = tiny();
        let (a, _) = forward(&p, &[1, 4, 5, 6, 7], false).unwrap();
        let (b, _) = forward(&p, &[1, 4, 5, 9, 2], false).unwrap();
        assert_eq!(&a[..3 * 10], &b[..3 * 10]);
        assert_ne!(&a[3 * 10..], &b[3 * 10..]);
    }

    #[test]
    fn full_keep_patch_is_bit_identical() {
        let p = tiny();
        let clean = run(&p, &[1, 4, 5], embed_tokens(&p, &[1, 4, 5]).unwrap(), None).unwrap();
        let corrupt = run(&p, &[1, 7, 5], embed_tokens(&p, &[1, 7, 5]).unwrap(), None).unwrap();
        let topo = Topology::new(2, 2);
        let keep = vec![true; topo.n_edges()];
        let patched = run(
            &p,
            &[1, 4, 5],
            embed_tokens(&p, &[1, 4, 5]).unwrap(),
            Some(&EdgePatch {
                keep: &keep,
                reference: &corrupt,
            }),
        )
        .unwrap();
        assert_eq!(patched.logits, clean.logits);
        let none = vec![false; topo.n_edges()];
        let patched = run(
            &p,
            &[1, 4, 5],
            embed_tokens(&p, &[1, 4, 5]).unwrap(),
            Some(&EdgePatch {
                keep: &none,
                reference: &corrupt,
            }),
        )
        .unwrap();
        assert_eq!(patched.logits, corrupt.logits);
    }

    #[test]
    fn short_sequences_and_pad_batches_rejected() {
        let p = tiny();
        assert!(loss_and_grads(&p, &[vec![1]]).is_err());
        assert!(matches!(loss_and_grads(&p, &[vec![1, PAD, PAD]]), Err(Error::EmptyBatch)));
    }

    #[test]
    fn gelu_derivative_matches_difference_quotient() {
        for &x in &[-3.0, -0.7, 0.0, 0.4, 2.5] {
            let h = 1e-6;
            let fd = (gelu(x + h) - gelu(x - h)) / (2.0 * h);
            assert!((fd - gelu_grad(x)).abs() < 1e-8);
        }
    }
}
