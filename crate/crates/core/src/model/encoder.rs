//! Pre-norm encoder stack, forward and reverse mode.
//!
//! Per layer: `x += drop(Attn(LN₁(x)))`, then `x += drop(FFN(LN₂(x)))`, with a
//! final LN before the vocabulary projection. Keys at padded positions are
//! excluded from attention, so padding never influences content positions.

use rand::Rng;
use rayon::prelude::*;

use super::{slot, Gradients, Parameters};
use crate::tensor::{
    add_bias, add_column_sums, log_softmax_at, matmul, matmul_nt, matmul_tn, softmax_in_place,
};
use crate::tokenize::TokenSequence;
use crate::{Error, Result};

const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

/// Per-sequence `(position, true token id)` pairs.
pub type Targets = Vec<(usize, u32)>;

/// Token ids of several sequences cut to their longest content length.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub ids: Vec<u32>,
    pub lengths: Vec<usize>,
    pub size: usize,
    pub seq_len: usize,
}

impl Batch {
    pub fn new(seqs: &[TokenSequence], params: &Parameters) -> Result<Self> {
        let cfg = &params.config;
        if seqs.is_empty() {
            return Err(Error::ShapeMismatch("empty batch".into()));
        }
        let seq_len = seqs.iter().map(|s| s.length).max().unwrap_or(0);
        if seq_len == 0 || seq_len > cfg.max_len {
            return Err(Error::ShapeMismatch(format!(
                "sequence length {seq_len} outside 1..={}",
                cfg.max_len
            )));
        }
        let mut ids = Vec::with_capacity(seqs.len() * seq_len);
        let mut lengths = Vec::with_capacity(seqs.len());
        for s in seqs {
            if s.length == 0 || s.ids.len() < seq_len {
                return Err(Error::ShapeMismatch(format!(
                    "sequence with {} ids and length {} in a batch of length {seq_len}",
                    s.ids.len(),
                    s.length
                )));
            }
            if let Some(&bad) = s.ids[..seq_len].iter().find(|&&id| id as usize >= cfg.vocab_size) {
                return Err(Error::ShapeMismatch(format!(
                    "token id {bad} outside vocabulary of {}",
                    cfg.vocab_size
                )));
            }
            ids.extend_from_slice(&s.ids[..seq_len]);
            lengths.push(s.length);
        }
        Ok(Batch {
            ids,
            lengths,
            size: seqs.len(),
            seq_len,
        })
    }

    fn rows(&self) -> usize {
        self.size * self.seq_len
    }
}

/// Logits and per-position softmax, laid out `[batch][position][vocab]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    pub batch: usize,
    pub seq_len: usize,
    pub vocab_size: usize,
    pub lengths: Vec<usize>,
    pub logits: Vec<f64>,
    pub probabilities: Vec<f64>,
}

impl ForwardOutput {
    pub fn logits_at(&self, b: usize, pos: usize) -> &[f64] {
        let start = (b * self.seq_len + pos) * self.vocab_size;
        &self.logits[start..start + self.vocab_size]
    }

    pub fn probabilities_at(&self, b: usize, pos: usize) -> &[f64] {
        let start = (b * self.seq_len + pos) * self.vocab_size;
        &self.probabilities[start..start + self.vocab_size]
    }
}

struct NormCache {
    xhat: Vec<f64>,
    rstd: Vec<f64>,
}

fn layer_norm(x: &[f64], gain: &[f64], offset: &[f64]) -> (Vec<f64>, NormCache) {
    let d = gain.len();
    let rows = x.len() / d;
    let mut y = vec![0.0; x.len()];
    let mut xhat = vec![0.0; x.len()];
    let mut rstd = vec![0.0; rows];
    for r in 0..rows {
        let xr = &x[r * d..(r + 1) * d];
        let mean = xr.iter().sum::<f64>() / d as f64;
        let var = xr.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let s = 1.0 / (var + LN_EPS).sqrt();
        rstd[r] = s;
        for i in 0..d {
            let h = (xr[i] - mean) * s;
            xhat[r * d + i] = h;
            y[r * d + i] = gain[i] * h + offset[i];
        }
    }
    (y, NormCache { xhat, rstd })
}

/// Returns `dx`; accumulates into `dgain`, `doffset`.
fn layer_norm_backward(
    dy: &[f64],
    cache: &NormCache,
    gain: &[f64],
    dgain: &mut [f64],
    doffset: &mut [f64],
) -> Vec<f64> {
    let d = gain.len();
    let mut dx = vec![0.0; dy.len()];
    let mut dxhat = vec![0.0; d];
    for (r, &s) in cache.rstd.iter().enumerate() {
        let dyr = &dy[r * d..(r + 1) * d];
        let xh = &cache.xhat[r * d..(r + 1) * d];
        let (mut mean_dxhat, mut mean_dxhat_xhat) = (0.0, 0.0);
        for i in 0..d {
            dgain[i] += dyr[i] * xh[i];
            doffset[i] += dyr[i];
            dxhat[i] = dyr[i] * gain[i];
            mean_dxhat += dxhat[i];
            mean_dxhat_xhat += dxhat[i] * xh[i];
        }
        mean_dxhat /= d as f64;
        mean_dxhat_xhat /= d as f64;
        for i in 0..d {
            dx[r * d + i] = s * (dxhat[i] - mean_dxhat - xh[i] * mean_dxhat_xhat);
        }
    }
    dx
}

fn gelu(u: f64) -> f64 {
    0.5 * u * (1.0 + (GELU_C * (u + GELU_A * u * u * u)).tanh())
}

fn gelu_grad(u: f64) -> f64 {
    let t = (GELU_C * (u + GELU_A * u * u * u)).tanh();
    0.5 * (1.0 + t) + 0.5 * u * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * u * u)
}

fn dropout_mask(n: usize, rate: f64, seed: u64, site: &[u64]) -> Vec<f64> {
    let mut rng = crate::seed::rng(seed, site);
    let keep = 1.0 / (1.0 - rate);
    (0..n)
        .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
        .collect()
}

fn apply_mask(x: &mut [f64], mask: &Option<Vec<f64>>) {
    if let Some(m) = mask {
        for (v, k) in x.iter_mut().zip(m) {
            *v *= k;
        }
    }
}

/// `x·W + b` for an `rows×inner` input.
fn linear(x: &[f64], w: &[f64], b: &[f64], inner: usize) -> Vec<f64> {
    let outer = b.len();
    let rows = x.len() / inner;
    let mut y = vec![0.0; rows * outer];
    matmul(x, w, &mut y, rows, inner, outer, false);
    add_bias(&mut y, b);
    y
}

struct LayerCache {
    norm1: NormCache,
    h1: Vec<f64>,
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    probs: Vec<f64>,
    ctx: Vec<f64>,
    mask1: Option<Vec<f64>>,
    norm2: NormCache,
    h2: Vec<f64>,
    u: Vec<f64>,
    g: Vec<f64>,
    mask2: Option<Vec<f64>>,
}

struct Cache {
    mask0: Option<Vec<f64>>,
    layers: Vec<LayerCache>,
    final_norm: NormCache,
    y: Vec<f64>,
}

/// Multi-head attention over each sequence's content keys.
/// Returns the context `[rows×d]` and probabilities `[batch][head][L][L]`.
fn attention(q: &[f64], k: &[f64], v: &[f64], batch: &Batch, heads: usize) -> (Vec<f64>, Vec<f64>) {
    let l = batch.seq_len;
    let d = q.len() / batch.rows();
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut ctx = vec![0.0; q.len()];
    let mut probs = vec![0.0; batch.size * heads * l * l];
    ctx.par_chunks_mut(l * d)
        .zip(probs.par_chunks_mut(heads * l * l))
        .enumerate()
        .for_each(|(b, (ctx_b, probs_b))| {
            let len = batch.lengths[b];
            let base = b * l * d;
            for h in 0..heads {
                let off = h * dh;
                for i in 0..l {
                    let qi = &q[base + i * d + off..base + i * d + off + dh];
                    let row = &mut probs_b[(h * l + i) * l..(h * l + i) * l + len];
                    for (j, p) in row.iter_mut().enumerate() {
                        let kj = &k[base + j * d + off..base + j * d + off + dh];
                        *p = qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f64>() * scale;
                    }
                    softmax_in_place(row);
                    let out = &mut ctx_b[i * d + off..i * d + off + dh];
                    for (j, &p) in row.iter().enumerate() {
                        let vj = &v[base + j * d + off..base + j * d + off + dh];
                        for (o, x) in out.iter_mut().zip(vj) {
                            *o += p * x;
                        }
                    }
                }
            }
        });
    (ctx, probs)
}

/// Reverse of [`attention`]: returns `(dq, dk, dv)`.
#[allow(clippy::too_many_arguments)]
fn attention_backward(
    dctx: &[f64],
    q: &[f64],
    k: &[f64],
    v: &[f64],
    probs: &[f64],
    batch: &Batch,
    heads: usize,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let l = batch.seq_len;
    let d = q.len() / batch.rows();
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut dq = vec![0.0; q.len()];
    let mut dk = vec![0.0; q.len()];
    let mut dv = vec![0.0; q.len()];
    dq.par_chunks_mut(l * d)
        .zip(dk.par_chunks_mut(l * d))
        .zip(dv.par_chunks_mut(l * d))
        .enumerate()
        .for_each(|(b, ((dq_b, dk_b), dv_b))| {
            let len = batch.lengths[b];
            let base = b * l * d;
            let mut ds = vec![0.0; len];
            for h in 0..heads {
                let off = h * dh;
                for i in 0..l {
                    let p = &probs[((b * heads + h) * l + i) * l..][..len];
                    let dci = &dctx[base + i * d + off..base + i * d + off + dh];
                    let mut dot = 0.0;
                    for j in 0..len {
                        let vj = &v[base + j * d + off..base + j * d + off + dh];
                        let dp = dci.iter().zip(vj).map(|(a, b)| a * b).sum::<f64>();
                        ds[j] = dp;
                        dot += p[j] * dp;
                        for (o, g) in dv_b[j * d + off..j * d + off + dh].iter_mut().zip(dci) {
                            *o += p[j] * g;
                        }
                    }
                    for j in 0..len {
                        ds[j] = p[j] * (ds[j] - dot) * scale;
                    }
                    let qi = &q[base + i * d + off..base + i * d + off + dh];
                    for j in 0..len {
                        let kj = &k[base + j * d + off..base + j * d + off + dh];
                        for (o, x) in dq_b[i * d + off..i * d + off + dh].iter_mut().zip(kj) {
                            *o += ds[j] * x;
                        }
                        for (o, x) in dk_b[j * d + off..j * d + off + dh].iter_mut().zip(qi) {
                            *o += ds[j] * x;
                        }
                    }
                }
            }
        });
    (dq, dk, dv)
}

fn ensure_finite(values: &[f64], site: &str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFiniteActivation(site.to_string()))
    }
}

/// Runs the stack up to the final normalization, keeping what the reverse pass needs.
fn run(params: &Parameters, batch: &Batch, dropout_seed: Option<u64>) -> Result<Cache> {
    let cfg = &params.config;
    let d = cfg.d_model;
    let rows = batch.rows();
    let rate = cfg.dropout_rate;
    let mask = |site: &[u64], n: usize| match dropout_seed {
        Some(seed) if rate > 0.0 => Some(dropout_mask(n, rate, seed, site)),
        _ => None,
    };

    let tok = &params.tensors[slot::TOKEN_EMBEDDING].data;
    let pos = &params.tensors[slot::POSITION_EMBEDDING].data;
    let mut x = vec![0.0; rows * d];
    for r in 0..rows {
        let id = batch.ids[r] as usize;
        let t = r % batch.seq_len;
        for i in 0..d {
            x[r * d + i] = tok[id * d + i] + pos[t * d + i];
        }
    }
    let mask0 = mask(&[0], rows * d);
    apply_mask(&mut x, &mask0);

    let mut layers = Vec::with_capacity(cfg.n_layers);
    for l in 0..cfg.n_layers {
        let p = |s| params.layer(l, s);
        let (h1, norm1) = layer_norm(&x, p(slot::ATTN_NORM_GAIN), p(slot::ATTN_NORM_OFFSET));
        let q = linear(&h1, p(slot::QUERY_W), p(slot::QUERY_B), d);
        let k = linear(&h1, p(slot::KEY_W), p(slot::KEY_B), d);
        let v = linear(&h1, p(slot::VALUE_W), p(slot::VALUE_B), d);
        let (ctx, probs) = attention(&q, &k, &v, batch, cfg.n_heads);
        let mut a = linear(&ctx, p(slot::OUTPUT_W), p(slot::OUTPUT_B), d);
        let mask1 = mask(&[1 + l as u64, 1], rows * d);
        apply_mask(&mut a, &mask1);
        for (xv, av) in x.iter_mut().zip(&a) {
            *xv += av;
        }

        let (h2, norm2) = layer_norm(&x, p(slot::FFN_NORM_GAIN), p(slot::FFN_NORM_OFFSET));
        let u = linear(&h2, p(slot::UP_W), p(slot::UP_B), d);
        let g: Vec<f64> = u.iter().map(|&v| gelu(v)).collect();
        let mut f = linear(&g, p(slot::DOWN_W), p(slot::DOWN_B), cfg.d_ff);
        let mask2 = mask(&[1 + l as u64, 2], rows * d);
        apply_mask(&mut f, &mask2);
        for (xv, fv) in x.iter_mut().zip(&f) {
            *xv += fv;
        }
        ensure_finite(&x, &format!("layer {l}"))?;
        layers.push(LayerCache {
            norm1,
            h1,
            q,
            k,
            v,
            probs,
            ctx,
            mask1,
            norm2,
            h2,
            u,
            g,
            mask2,
        });
    }
    let (y, final_norm) = layer_norm(
        &x,
        params.tail(slot::FINAL_NORM_GAIN),
        params.tail(slot::FINAL_NORM_OFFSET),
    );
    Ok(Cache {
        mask0,
        layers,
        final_norm,
        y,
    })
}

/// Logits `[rows.len() × vocab]` for the selected flat row indices.
fn head_logits(params: &Parameters, y: &[f64], rows: &[usize]) -> Vec<f64> {
    let d = params.config.d_model;
    let v = params.config.vocab_size;
    let mut gathered = Vec::with_capacity(rows.len() * d);
    for &r in rows {
        gathered.extend_from_slice(&y[r * d..(r + 1) * d]);
    }
    let mut logits = vec![0.0; rows.len() * v];
    matmul(&gathered, params.tail(slot::HEAD_W), &mut logits, rows.len(), d, v, false);
    add_bias(&mut logits, params.tail(slot::HEAD_B));
    logits
}

/// Full forward pass. Dropout is active only with `train_mode`, keyed by `seed`.
pub fn forward(
    params: &Parameters,
    seqs: &[TokenSequence],
    train_mode: bool,
    seed: u64,
) -> Result<ForwardOutput> {
    let batch = Batch::new(seqs, params)?;
    let cache = run(params, &batch, train_mode.then_some(seed))?;
    let rows: Vec<usize> = (0..batch.rows()).collect();
    let logits = head_logits(params, &cache.y, &rows);
    ensure_finite(&logits, "output head")?;
    let v = params.config.vocab_size;
    let mut probabilities = logits.clone();
    for row in probabilities.chunks_exact_mut(v) {
        softmax_in_place(row);
    }
    Ok(ForwardOutput {
        batch: batch.size,
        seq_len: batch.seq_len,
        vocab_size: v,
        lengths: batch.lengths,
        logits,
        probabilities,
    })
}

fn target_rows(batch: &Batch, targets: &[Targets]) -> Result<(Vec<usize>, Vec<u32>)> {
    if targets.len() != batch.size {
        return Err(Error::ShapeMismatch(format!(
            "{} target lists for {} sequences",
            targets.len(),
            batch.size
        )));
    }
    let mut rows = Vec::new();
    let mut ids = Vec::new();
    for (b, t) in targets.iter().enumerate() {
        for &(pos, id) in t {
            if pos >= batch.lengths[b] {
                return Err(Error::ShapeMismatch(format!(
                    "masked position {pos} past sequence length {}",
                    batch.lengths[b]
                )));
            }
            rows.push(b * batch.seq_len + pos);
            ids.push(id);
        }
    }
    Ok((rows, ids))
}

/// Mean `−ln P(target)` over every masked position in the batch.
pub fn mlm_loss(out: &ForwardOutput, targets: &[Targets]) -> Result<f64> {
    if targets.len() != out.batch {
        return Err(Error::ShapeMismatch("target count differs from batch".into()));
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for (b, t) in targets.iter().enumerate() {
        for &(pos, id) in t {
            if pos >= out.seq_len || id as usize >= out.vocab_size {
                return Err(Error::ShapeMismatch(format!("target ({pos}, {id}) out of range")));
            }
            total -= log_softmax_at(out.logits_at(b, pos), id as usize);
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::NoMaskedPositions);
    }
    Ok(total / count as f64)
}

/// `P(target | context)` at each target, per sequence. No dropout.
pub fn masked_probabilities(
    params: &Parameters,
    seqs: &[TokenSequence],
    targets: &[Targets],
) -> Result<Vec<Vec<f64>>> {
    let batch = Batch::new(seqs, params)?;
    let (rows, ids) = target_rows(&batch, targets)?;
    let cache = run(params, &batch, None)?;
    let logits = head_logits(params, &cache.y, &rows);
    ensure_finite(&logits, "output head")?;
    let v = params.config.vocab_size;
    let mut flat = logits
        .chunks_exact(v)
        .zip(&ids)
        .map(|(row, &id)| log_softmax_at(row, id as usize).exp());
    Ok(targets
        .iter()
        .map(|t| flat.by_ref().take(t.len()).collect())
        .collect())
}

/// Loss and exact gradients of [`mlm_loss`] with respect to every parameter.
///
/// `dropout_seed` replays the same dropout masks a forward pass with that seed uses;
/// `None` disables dropout.
pub fn backward(
    params: &Parameters,
    seqs: &[TokenSequence],
    targets: &[Targets],
    dropout_seed: Option<u64>,
) -> Result<(f64, Gradients)> {
    let cfg = params.config;
    let (d, f, v) = (cfg.d_model, cfg.d_ff, cfg.vocab_size);
    let batch = Batch::new(seqs, params)?;
    let (rows, ids) = target_rows(&batch, targets)?;
    if rows.is_empty() {
        return Err(Error::NoMaskedPositions);
    }
    if let Some(&bad) = ids.iter().find(|&&id| id as usize >= v) {
        return Err(Error::ShapeMismatch(format!("target id {bad} outside vocabulary")));
    }
    let cache = run(params, &batch, dropout_seed)?;
    let mut grads = Parameters::zeros(cfg)?;
    let n = rows.len() as f64;

    // Output head.
    let mut dlogits = head_logits(params, &cache.y, &rows);
    ensure_finite(&dlogits, "output head")?;
    let mut loss = 0.0;
    for (row, &id) in dlogits.chunks_exact_mut(v).zip(&ids) {
        loss -= log_softmax_at(row, id as usize);
        softmax_in_place(row);
        row[id as usize] -= 1.0;
        for g in row.iter_mut() {
            *g /= n;
        }
    }
    loss /= n;
    let mut y_sel = Vec::with_capacity(rows.len() * d);
    for &r in &rows {
        y_sel.extend_from_slice(&cache.y[r * d..(r + 1) * d]);
    }
    matmul_tn(&y_sel, &dlogits, grads.tail_mut(slot::HEAD_W), rows.len(), d, v, true);
    add_column_sums(&dlogits, grads.tail_mut(slot::HEAD_B));
    let mut dy_sel = vec![0.0; rows.len() * d];
    matmul_nt(&dlogits, params.tail(slot::HEAD_W), &mut dy_sel, rows.len(), v, d, false);
    let mut dy = vec![0.0; batch.rows() * d];
    for (i, &r) in rows.iter().enumerate() {
        for (o, g) in dy[r * d..(r + 1) * d].iter_mut().zip(&dy_sel[i * d..(i + 1) * d]) {
            *o += g;
        }
    }

    let mut dgain = vec![0.0; d];
    let mut doffset = vec![0.0; d];
    let mut dx = layer_norm_backward(
        &dy,
        &cache.final_norm,
        params.tail(slot::FINAL_NORM_GAIN),
        &mut dgain,
        &mut doffset,
    );
    grads.tail_mut(slot::FINAL_NORM_GAIN).copy_from_slice(&dgain);
    grads.tail_mut(slot::FINAL_NORM_OFFSET).copy_from_slice(&doffset);

    let nrows = batch.rows();
    for l in (0..cfg.n_layers).rev() {
        let c = &cache.layers[l];
        let p = |s| params.layer(l, s);

        // Feed-forward sublayer.
        let mut df = dx.clone();
        apply_mask(&mut df, &c.mask2);
        matmul_tn(&c.g, &df, grads.layer_mut(l, slot::DOWN_W), nrows, f, d, true);
        add_column_sums(&df, grads.layer_mut(l, slot::DOWN_B));
        let mut du = vec![0.0; nrows * f];
        matmul_nt(&df, p(slot::DOWN_W), &mut du, nrows, d, f, false);
        for (g, &u) in du.iter_mut().zip(&c.u) {
            *g *= gelu_grad(u);
        }
        matmul_tn(&c.h2, &du, grads.layer_mut(l, slot::UP_W), nrows, d, f, true);
        add_column_sums(&du, grads.layer_mut(l, slot::UP_B));
        let mut dh2 = vec![0.0; nrows * d];
        matmul_nt(&du, p(slot::UP_W), &mut dh2, nrows, f, d, false);
        dgain.fill(0.0);
        doffset.fill(0.0);
        let dnorm = layer_norm_backward(&dh2, &c.norm2, p(slot::FFN_NORM_GAIN), &mut dgain, &mut doffset);
        grads.layer_mut(l, slot::FFN_NORM_GAIN).copy_from_slice(&dgain);
        grads.layer_mut(l, slot::FFN_NORM_OFFSET).copy_from_slice(&doffset);
        for (a, b) in dx.iter_mut().zip(&dnorm) {
            *a += b;
        }

        // Attention sublayer.
        let mut da = dx.clone();
        apply_mask(&mut da, &c.mask1);
        matmul_tn(&c.ctx, &da, grads.layer_mut(l, slot::OUTPUT_W), nrows, d, d, true);
        add_column_sums(&da, grads.layer_mut(l, slot::OUTPUT_B));
        let mut dctx = vec![0.0; nrows * d];
        matmul_nt(&da, p(slot::OUTPUT_W), &mut dctx, nrows, d, d, false);
        let (dq, dk, dv) = attention_backward(&dctx, &c.q, &c.k, &c.v, &c.probs, &batch, cfg.n_heads);
        let mut dh1 = vec![0.0; nrows * d];
        for (dproj, w, b) in [
            (&dq, slot::QUERY_W, slot::QUERY_B),
            (&dk, slot::KEY_W, slot::KEY_B),
            (&dv, slot::VALUE_W, slot::VALUE_B),
        ] {
            matmul_tn(&c.h1, dproj, grads.layer_mut(l, w), nrows, d, d, true);
            add_column_sums(dproj, grads.layer_mut(l, b));
            matmul_nt(dproj, p(w), &mut dh1, nrows, d, d, true);
        }
        dgain.fill(0.0);
        doffset.fill(0.0);
        let dnorm = layer_norm_backward(&dh1, &c.norm1, p(slot::ATTN_NORM_GAIN), &mut dgain, &mut doffset);
        grads.layer_mut(l, slot::ATTN_NORM_GAIN).copy_from_slice(&dgain);
        grads.layer_mut(l, slot::ATTN_NORM_OFFSET).copy_from_slice(&doffset);
        for (a, b) in dx.iter_mut().zip(&dnorm) {
            *a += b;
        }
    }

    apply_mask(&mut dx, &cache.mask0);
    for r in 0..nrows {
        let id = batch.ids[r] as usize;
        let t = r % batch.seq_len;
        let g = &dx[r * d..(r + 1) * d];
        for (o, x) in grads.tensors[slot::TOKEN_EMBEDDING].data[id * d..(id + 1) * d]
            .iter_mut()
            .zip(g)
        {
            *o += x;
        }
        for (o, x) in grads.tensors[slot::POSITION_EMBEDDING].data[t * d..(t + 1) * d]
            .iter_mut()
            .zip(g)
        {
            *o += x;
        }
    }

    if let Some(name) = grads.first_non_finite() {
        return Err(Error::NonFiniteGradient(name.to_string()));
    }
    Ok((loss, grads))
}
