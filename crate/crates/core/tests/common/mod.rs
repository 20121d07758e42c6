// SPDX-License-Identifier: MIT OR Apache-2.0

#![allow(dead_code)]

use concept_circuits::lm::{mean_loss, Parameters};
use concept_circuits::metrics::UGraph;
use nalgebra::{DMatrix, SymmetricEigen};
use num_rational::Ratio;
use rand::{Rng, SeedableRng};

/// Straight-line pre-LN transformer over a single residual stream. Shares no
/// code with the graph-structured forward pass.
pub fn reference_forward(p: &Parameters, tokens: &[usize]) -> Vec<f64> {
    let c = p.config;
    let (t_len, d, h, dh, dm, v) = (tokens.len(), c.d_model, c.n_heads, c.d_head(), c.d_mlp, c.vocab_size);
    let w = |r: &std::ops::Range<usize>, i: usize| p.data[r.start + i];
    let ln = |x: &[f64], g: &std::ops::Range<usize>, b: &std::ops::Range<usize>| -> Vec<f64> {
        let mean = x.iter().sum::<f64>() / d as f64;
        let var = x.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / d as f64;
        (0..d).map(|i| (x[i] - mean) / (var + 1e-5).sqrt() * w(g, i) + w(b, i)).collect()
    };
    let mut resid: Vec<Vec<f64>> = tokens
        .iter()
        .enumerate()
        .map(|(t, &tok)| (0..d).map(|i| w(&p.layout.wte, tok * d + i) + w(&p.layout.wpe, t * d + i)).collect())
        .collect();
    for ly in &p.layout.layers {
        let normed: Vec<Vec<f64>> = resid.iter().map(|x| ln(x, &ly.ln1_g, &ly.ln1_b)).collect();
        let mut attn_out = vec![vec![0.0; d]; t_len];
        for hh in 0..h {
            let proj = |wr: &std::ops::Range<usize>, br: &std::ops::Range<usize>, x: &[f64]| -> Vec<f64> {
                (0..dh)
                    .map(|c| (0..d).map(|i| x[i] * w(wr, hh * d * dh + i * dh + c)).sum::<f64>() + w(br, hh * dh + c))
                    .collect()
            };
            let q: Vec<Vec<f64>> = normed.iter().map(|x| proj(&ly.w_q, &ly.b_q, x)).collect();
            let k: Vec<Vec<f64>> = normed.iter().map(|x| proj(&ly.w_k, &ly.b_k, x)).collect();
            let vv: Vec<Vec<f64>> = normed.iter().map(|x| proj(&ly.w_v, &ly.b_v, x)).collect();
            for t in 0..t_len {
                let scores: Vec<f64> = (0..=t)
                    .map(|s| q[t].iter().zip(&k[s]).map(|(a, b)| a * b).sum::<f64>() / (dh as f64).sqrt())
                    .collect();
                let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let e: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
                let z: f64 = e.iter().sum();
                let mix: Vec<f64> = (0..dh).map(|c| (0..=t).map(|s| e[s] / z * vv[s][c]).sum()).collect();
                for i in 0..d {
                    attn_out[t][i] += (0..dh).map(|c| mix[c] * w(&ly.w_o, hh * dh * d + c * d + i)).sum::<f64>();
                }
            }
        }
        for t in 0..t_len {
            for i in 0..d {
                resid[t][i] += attn_out[t][i];
            }
        }
        for x in resid.iter_mut() {
            let n = ln(x, &ly.ln2_g, &ly.ln2_b);
            let hidden: Vec<f64> = (0..dm)
                .map(|j| {
                    let a = (0..d).map(|i| n[i] * w(&ly.w_fc, i * dm + j)).sum::<f64>() + w(&ly.b_fc, j);
                    0.5 * a * (1.0 + ((2.0 / std::f64::consts::PI).sqrt() * (a + 0.044715 * a.powi(3))).tanh())
                })
                .collect();
            for i in 0..d {
                x[i] += (0..dm).map(|j| hidden[j] * w(&ly.w_proj, j * d + i)).sum::<f64>() + w(&ly.b_proj, i);
            }
        }
    }
    let mut logits = Vec::with_capacity(t_len * v);
    for x in &resid {
        let n = ln(x, &p.layout.lnf_g, &p.layout.lnf_b);
        for j in 0..v {
            logits.push((0..d).map(|i| n[i] * w(&p.layout.w_unembed, i * v + j)).sum());
        }
    }
    logits
}

pub struct FdReport {
    pub max_rel_err: f64,
    pub worst_index: usize,
    pub worst_tensor: String,
    pub worst_analytic: f64,
    pub worst_numeric: f64,
}

/// Denominator floor for the relative error. With h = 1e-5 and losses of
/// order 1, the central difference carries ~1e-10 of roundoff, so gradients
/// below this are compared against the floor instead of themselves.
pub const FD_REL_FLOOR: f64 = 1e-6;

/// Central differences on every coordinate:
/// `rel = |g - fd| / max(|g|, |fd|, FD_REL_FLOOR)`.
pub fn finite_difference_check(p: &Parameters, batch: &[Vec<usize>], grads: &[f64], h: f64) -> FdReport {
    let mut report = FdReport {
        max_rel_err: 0.0,
        worst_index: 0,
        worst_tensor: String::new(),
        worst_analytic: 0.0,
        worst_numeric: 0.0,
    };
    let tensors = p.layout.tensors();
    let mut q = p.clone();
    for i in 0..p.len() {
        let orig = q.data[i];
        q.data[i] = orig + h;
        let up = mean_loss(&q, batch).unwrap();
        q.data[i] = orig - h;
        let down = mean_loss(&q, batch).unwrap();
        q.data[i] = orig;
        let fd = (up - down) / (2.0 * h);
        let rel = (grads[i] - fd).abs() / grads[i].abs().max(fd.abs()).max(FD_REL_FLOOR);
        if rel > report.max_rel_err {
            report.max_rel_err = rel;
            report.worst_index = i;
            report.worst_analytic = grads[i];
            report.worst_numeric = fd;
            report.worst_tensor = tensors
                .iter()
                .find(|(_, r, _)| r.contains(&i))
                .map(|(n, _, _)| n.clone())
                .unwrap_or_default();
        }
    }
    report
}

// ---- graph oracles ---------------------------------------------------------

pub fn random_graph(rng: &mut impl Rng, n: usize, p: f64) -> UGraph {
    let mut edges = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            if rng.random_bool(p) {
                edges.push((a, b));
            }
        }
    }
    UGraph::new(n, edges).unwrap()
}

pub fn random_graphs() -> Vec<UGraph> {
    let mut rng = rand::rngs::StdRng::seed_from_u64(7);
    (0..80)
        .map(|i| {
            let n = 1 + i % 12;
            let p = [0.15, 0.3, 0.5, 0.8][i % 4];
            random_graph(&mut rng, n, p)
        })
        .collect()
}

/// Dense eigendecomposition of the largest component's adjacency.
pub fn eigen_oracle(g: &UGraph) -> Vec<f64> {
    let mut out = vec![0.0; g.n()];
    let comps = g.components();
    let mut best: &Vec<usize> = &comps[0];
    for c in &comps {
        if c.len() > best.len() {
            best = c;
        }
    }
    let k = best.len();
    if k == 1 {
        out[best[0]] = 1.0;
        return out;
    }
    let mut a = DMatrix::<f64>::zeros(k, k);
    for (i, &u) in best.iter().enumerate() {
        for &v in g.neighbors(u) {
            let j = best.iter().position(|&x| x == v).unwrap();
            a[(i, j)] = 1.0;
        }
    }
    let eig = SymmetricEigen::new(a);
    let top = (0..k).max_by(|&x, &y| eig.eigenvalues[x].total_cmp(&eig.eigenvalues[y])).unwrap();
    let v = eig.eigenvectors.column(top);
    let sign = if v.sum() < 0.0 { -1.0 } else { 1.0 };
    for (i, &u) in best.iter().enumerate() {
        out[u] = sign * v[i] / v.norm();
    }
    out
}

pub fn floyd_warshall_efficiency(g: &UGraph) -> f64 {
    let n = g.n();
    if n < 2 {
        return 0.0;
    }
    let inf = f64::INFINITY;
    let mut d = vec![vec![inf; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = 0.0;
    }
    for &(a, b) in g.edges() {
        d[a][b] = 1.0;
        d[b][a] = 1.0;
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if d[i][k] + d[k][j] < d[i][j] {
                    d[i][j] = d[i][k] + d[k][j];
                }
            }
        }
    }
    let mut s = 0.0;
    for (i, row) in d.iter().enumerate() {
        for (j, &x) in row.iter().enumerate() {
            if i != j && x.is_finite() {
                s += 1.0 / x;
            }
        }
    }
    s / (n * (n - 1)) as f64
}

/// Largest k such that the node survives repeated deletion of nodes with
/// degree < k.
pub fn brute_core(g: &UGraph, u: usize) -> usize {
    let n = g.n();
    let mut best = 0;
    for k in 1..n {
        let mut alive = vec![true; n];
        loop {
            let mut changed = false;
            for x in 0..n {
                if alive[x] && g.neighbors(x).iter().filter(|&&y| alive[y]).count() < k {
                    alive[x] = false;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        if alive[u] {
            best = k;
        }
    }
    best
}

// ---- rank correlation oracle -----------------------------------------------

/// Rank with averaged ties, then Pearson, all in exact rationals. Ranks are
/// kept doubled so they stay integral.
pub fn rational_spearman_squared(xs: &[i64], ys: &[i64]) -> (Ratio<i64>, i64) {
    let ranks2 = |v: &[i64]| -> Vec<i64> {
        v.iter()
            .map(|&x| {
                let less = v.iter().filter(|&&y| y < x).count() as i64;
                let equal = v.iter().filter(|&&y| y == x).count() as i64;
                2 * less + equal + 1
            })
            .collect()
    };
    let (a, b) = (ranks2(xs), ranks2(ys));
    let n = a.len() as i64;
    let mean = |v: &[i64]| Ratio::new(v.iter().sum::<i64>(), n);
    let (ma, mb) = (mean(&a), mean(&b));
    let mut sab = Ratio::from_integer(0);
    let mut saa = Ratio::from_integer(0);
    let mut sbb = Ratio::from_integer(0);
    for i in 0..a.len() {
        let da = Ratio::from_integer(a[i]) - ma;
        let db = Ratio::from_integer(b[i]) - mb;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    let sign = if sab > Ratio::from_integer(0) { 1 } else { -1 };
    (sab * sab / (saa * sbb), sign)
}
