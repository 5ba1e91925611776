//! Differentiable operations recorded on a [`Graph`].
//!
//! Activations use the layout `[batch, time, variable, dim]`; operations that
//! only care about channels treat everything after the time axis as one
//! channel axis.

use super::graph::{Graph, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/π)
const GELU_A: f64 = 0.044_715;

/// Batch statistics produced by a training-mode batch norm.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    /// Biased (population) variance.
    pub var: Vec<f64>,
    /// Number of values each statistic was computed over.
    pub count: usize,
}

fn expect_len(stage: &'static str, what: &str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(Error::shape(stage, format!("{what} has {got} values, expected {want}")));
    }
    Ok(())
}

impl Graph {
    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        let src = self.value(x);
        let numel: usize = shape.iter().product();
        expect_len("reshape", "input", src.numel(), numel)?;
        let value = Tensor::new(shape, src.data.clone())?;
        Ok(self.record(value, &[x], Box::new(|_, _, g| vec![Some(g.to_vec())])))
    }

    /// Swaps the last two axes.
    pub fn swap_last2(&mut self, x: Var) -> Result<Var> {
        let src = self.value(x);
        let r = src.shape.len();
        if r < 2 {
            return Err(Error::shape("swap_last2", "needs at least two axes"));
        }
        let (a, b) = (src.shape[r - 2], src.shape[r - 1]);
        let outer = src.numel() / (a * b);
        let transpose = move |data: &[f64], a: usize, b: usize| {
            let mut out = vec![0.0; data.len()];
            for o in 0..outer {
                let base = o * a * b;
                for i in 0..a {
                    for j in 0..b {
                        out[base + j * a + i] = data[base + i * b + j];
                    }
                }
            }
            out
        };
        let mut shape = src.shape.clone();
        shape.swap(r - 2, r - 1);
        let value = Tensor::new(shape, transpose(&src.data, a, b))?;
        Ok(self.record(
            value,
            &[x],
            Box::new(move |_, _, g| vec![Some(transpose(g, b, a))]),
        ))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.shape != y.shape {
            return Err(Error::shape("add", format!("{:?} vs {:?}", x.shape, y.shape)));
        }
        let data = x.data.iter().zip(&y.data).map(|(p, q)| p + q).collect();
        let value = Tensor::new(x.shape.clone(), data)?;
        Ok(self.record(
            value,
            &[a, b],
            Box::new(|_, _, g| vec![Some(g.to_vec()), Some(g.to_vec())]),
        ))
    }

    /// Tanh approximation of GELU.
    pub fn gelu(&mut self, x: Var) -> Var {
        let src = self.value(x);
        let data = src
            .data
            .iter()
            .map(|&v| 0.5 * v * (1.0 + (GELU_C * (v + GELU_A * v * v * v)).tanh()))
            .collect();
        let value = Tensor {
            shape: src.shape.clone(),
            data,
            grad: None,
        };
        self.record(
            value,
            &[x],
            Box::new(|inputs, _, g| {
                let grad = inputs[0]
                    .data
                    .iter()
                    .zip(g)
                    .map(|(&v, &gy)| {
                        let t = (GELU_C * (v + GELU_A * v * v * v)).tanh();
                        let dt = (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * v * v);
                        gy * (0.5 * (1.0 + t) + 0.5 * v * dt)
                    })
                    .collect();
                vec![Some(grad)]
            }),
        )
    }

    /// Elementwise product with a constant array (dropout masks).
    pub fn mul_const(&mut self, x: Var, factor: Vec<f64>) -> Result<Var> {
        let src = self.value(x);
        expect_len("mul_const", "factor", factor.len(), src.numel())?;
        let data = src.data.iter().zip(&factor).map(|(a, b)| a * b).collect();
        let value = Tensor::new(src.shape.clone(), data)?;
        Ok(self.record(
            value,
            &[x],
            Box::new(move |_, _, g| vec![Some(g.iter().zip(&factor).map(|(a, b)| a * b).collect())]),
        ))
    }

    /// `Σ x·weights`, a scalar. Used to probe gradients of tensor outputs.
    pub fn dot_const(&mut self, x: Var, weights: Vec<f64>) -> Result<Var> {
        let src = self.value(x);
        expect_len("dot_const", "weights", weights.len(), src.numel())?;
        let s = src.data.iter().zip(&weights).map(|(a, b)| a * b).sum();
        Ok(self.record(Tensor::scalar(s), &[x], Box::new(move |_, _, g| vec![Some(weights.iter().map(|w| w * g[0]).collect())])))
    }

    /// Independent affine maps per group: input `[.., G, Fin]`, weight
    /// `[G, Fout, Fin]`, bias `[G, Fout]`, output `[.., G, Fout]`.
    pub fn grouped_linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (xs, ws, bs) = (self.value(x), self.value(w), self.value(b));
        if ws.shape.len() != 3 || xs.shape.len() < 2 {
            return Err(Error::shape("grouped_linear", format!("input {:?}, weight {:?}", xs.shape, ws.shape)));
        }
        let (groups, fout, fin) = (ws.shape[0], ws.shape[1], ws.shape[2]);
        let r = xs.shape.len();
        if xs.shape[r - 2] != groups || xs.shape[r - 1] != fin {
            return Err(Error::shape(
                "grouped_linear",
                format!("input {:?} does not end in [{groups}, {fin}]", xs.shape),
            ));
        }
        expect_len("grouped_linear", "bias", bs.numel(), groups * fout)?;
        let rows = xs.numel() / (groups * fin);
        let mut out = vec![0.0; rows * groups * fout];
        for row in 0..rows {
            for g in 0..groups {
                let xin = &xs.data[(row * groups + g) * fin..][..fin];
                let yo = &mut out[(row * groups + g) * fout..][..fout];
                let wg = &ws.data[g * fout * fin..][..fout * fin];
                let bg = &bs.data[g * fout..][..fout];
                for (o, y) in yo.iter_mut().enumerate() {
                    let wrow = &wg[o * fin..][..fin];
                    *y = bg[o] + wrow.iter().zip(xin).map(|(a, b)| a * b).sum::<f64>();
                }
            }
        }
        let mut shape = xs.shape.clone();
        shape[r - 1] = fout;
        let value = Tensor::new(shape, out)?;
        Ok(self.record(
            value,
            &[x, w, b],
            Box::new(move |inputs, _, gy| {
                let (xd, wd) = (&inputs[0].data, &inputs[1].data);
                let mut gx = vec![0.0; xd.len()];
                let mut gw = vec![0.0; wd.len()];
                let mut gb = vec![0.0; groups * fout];
                for row in 0..rows {
                    for g in 0..groups {
                        let xin = &xd[(row * groups + g) * fin..][..fin];
                        let gyo = &gy[(row * groups + g) * fout..][..fout];
                        let gxi = &mut gx[(row * groups + g) * fin..][..fin];
                        let wg = &wd[g * fout * fin..][..fout * fin];
                        let gwg = &mut gw[g * fout * fin..][..fout * fin];
                        for (o, &go) in gyo.iter().enumerate() {
                            gb[g * fout + o] += go;
                            let wrow = &wg[o * fin..][..fin];
                            let gwrow = &mut gwg[o * fin..][..fin];
                            for i in 0..fin {
                                gxi[i] += wrow[i] * go;
                                gwrow[i] += go * xin[i];
                            }
                        }
                    }
                }
                vec![Some(gx), Some(gw), Some(gb)]
            }),
        ))
    }

    /// Depthwise convolution along the time axis with zero "same" padding.
    /// Input `[B, L, ...]` with `C` = product of trailing extents, weight
    /// `[K, C]` (K odd), bias `[C]`.
    pub fn dwconv_time(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (xs, ws, bs) = (self.value(x), self.value(w), self.value(b));
        if xs.shape.len() < 3 || ws.shape.len() != 2 {
            return Err(Error::shape("dwconv", format!("input {:?}, weight {:?}", xs.shape, ws.shape)));
        }
        let (batch, len, ch) = (xs.shape[0], xs.shape[1], xs.inner(2));
        let k = ws.shape[0];
        if ws.shape[1] != ch || k % 2 == 0 {
            return Err(Error::shape(
                "dwconv",
                format!("weight {:?} does not match {ch} channels with an odd kernel", ws.shape),
            ));
        }
        expect_len("dwconv", "bias", bs.numel(), ch)?;
        let pad = k / 2;
        let mut out = vec![0.0; xs.numel()];
        for bi in 0..batch {
            let xb = &xs.data[bi * len * ch..][..len * ch];
            let yb = &mut out[bi * len * ch..][..len * ch];
            for l in 0..len {
                let yl = &mut yb[l * ch..][..ch];
                yl.copy_from_slice(&bs.data);
                for t in 0..k {
                    let src = l + t;
                    if src < pad || src - pad >= len {
                        continue;
                    }
                    let xl = &xb[(src - pad) * ch..][..ch];
                    let wt = &ws.data[t * ch..][..ch];
                    for c in 0..ch {
                        yl[c] += wt[c] * xl[c];
                    }
                }
            }
        }
        let value = Tensor::new(xs.shape.clone(), out)?;
        Ok(self.record(
            value,
            &[x, w, b],
            Box::new(move |inputs, _, gy| {
                let (xd, wd) = (&inputs[0].data, &inputs[1].data);
                let mut gx = vec![0.0; xd.len()];
                let mut gw = vec![0.0; wd.len()];
                let mut gb = vec![0.0; ch];
                for bi in 0..batch {
                    let xb = &xd[bi * len * ch..][..len * ch];
                    let gyb = &gy[bi * len * ch..][..len * ch];
                    let gxb = &mut gx[bi * len * ch..][..len * ch];
                    for l in 0..len {
                        let gyl = &gyb[l * ch..][..ch];
                        for c in 0..ch {
                            gb[c] += gyl[c];
                        }
                        for t in 0..k {
                            let src = l + t;
                            if src < pad || src - pad >= len {
                                continue;
                            }
                            let off = (src - pad) * ch;
                            let xl = &xb[off..][..ch];
                            let wt = &wd[t * ch..][..ch];
                            let gwt = &mut gw[t * ch..][..ch];
                            let gxl = &mut gxb[off..][..ch];
                            for c in 0..ch {
                                gxl[c] += wt[c] * gyl[c];
                                gwt[c] += gyl[c] * xl[c];
                            }
                        }
                    }
                }
                vec![Some(gx), Some(gw), Some(gb)]
            }),
        ))
    }

    /// Training-mode batch normalization over (batch, time) per channel.
    pub fn batch_norm_train(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<(Var, BatchStats)> {
        let (xs, gs, bs) = (self.value(x), self.value(gamma), self.value(beta));
        if xs.shape.len() < 3 {
            return Err(Error::shape("batch_norm", format!("input {:?} lacks a channel axis", xs.shape)));
        }
        let ch = xs.inner(2);
        expect_len("batch_norm", "gamma", gs.numel(), ch)?;
        expect_len("batch_norm", "beta", bs.numel(), ch)?;
        let rows = xs.numel() / ch;
        let mut mean = vec![0.0; ch];
        for row in xs.data.chunks_exact(ch) {
            mean.iter_mut().zip(row).for_each(|(m, v)| *m += v);
        }
        mean.iter_mut().for_each(|m| *m /= rows as f64);
        let mut var = vec![0.0; ch];
        for row in xs.data.chunks_exact(ch) {
            for c in 0..ch {
                let d = row[c] - mean[c];
                var[c] += d * d;
            }
        }
        var.iter_mut().for_each(|v| *v /= rows as f64);
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        let mut xhat = vec![0.0; xs.numel()];
        let mut out = vec![0.0; xs.numel()];
        for (r, row) in xs.data.chunks_exact(ch).enumerate() {
            for c in 0..ch {
                let h = (row[c] - mean[c]) * inv_std[c];
                xhat[r * ch + c] = h;
                out[r * ch + c] = gs.data[c] * h + bs.data[c];
            }
        }
        let value = Tensor::new(xs.shape.clone(), out)?;
        let stats = BatchStats {
            mean,
            var,
            count: rows,
        };
        let v = self.record(
            value,
            &[x, gamma, beta],
            Box::new(move |inputs, _, gy| {
                let gd = &inputs[1].data;
                let mut ggamma = vec![0.0; ch];
                let mut gbeta = vec![0.0; ch];
                for (gyr, hr) in gy.chunks_exact(ch).zip(xhat.chunks_exact(ch)) {
                    for c in 0..ch {
                        gbeta[c] += gyr[c];
                        ggamma[c] += gyr[c] * hr[c];
                    }
                }
                let n = rows as f64;
                let mut gx = vec![0.0; gy.len()];
                for (r, (gyr, hr)) in gy.chunks_exact(ch).zip(xhat.chunks_exact(ch)).enumerate() {
                    for c in 0..ch {
                        gx[r * ch + c] =
                            gd[c] * inv_std[c] * (gyr[c] - gbeta[c] / n - hr[c] * ggamma[c] / n);
                    }
                }
                vec![Some(gx), Some(ggamma), Some(gbeta)]
            }),
        );
        Ok((v, stats))
    }

    /// Inference-mode batch normalization with fixed statistics.
    pub fn batch_norm_eval(&mut self, x: Var, gamma: Var, beta: Var, mean: &[f64], var: &[f64], eps: f64) -> Result<Var> {
        let (xs, gs, bs) = (self.value(x), self.value(gamma), self.value(beta));
        if xs.shape.len() < 3 {
            return Err(Error::shape("batch_norm", format!("input {:?} lacks a channel axis", xs.shape)));
        }
        let ch = xs.inner(2);
        expect_len("batch_norm", "gamma", gs.numel(), ch)?;
        expect_len("batch_norm", "running mean", mean.len(), ch)?;
        expect_len("batch_norm", "running var", var.len(), ch)?;
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        let mean = mean.to_vec();
        let mut out = vec![0.0; xs.numel()];
        for (r, row) in xs.data.chunks_exact(ch).enumerate() {
            for c in 0..ch {
                out[r * ch + c] = gs.data[c] * (row[c] - mean[c]) * inv_std[c] + bs.data[c];
            }
        }
        let value = Tensor::new(xs.shape.clone(), out)?;
        Ok(self.record(
            value,
            &[x, gamma, beta],
            Box::new(move |inputs, _, gy| {
                let (xd, gd) = (&inputs[0].data, &inputs[1].data);
                let mut gx = vec![0.0; gy.len()];
                let mut ggamma = vec![0.0; ch];
                let mut gbeta = vec![0.0; ch];
                for (r, gyr) in gy.chunks_exact(ch).enumerate() {
                    for c in 0..ch {
                        let h = (xd[r * ch + c] - mean[c]) * inv_std[c];
                        gx[r * ch + c] = gyr[c] * gd[c] * inv_std[c];
                        ggamma[c] += gyr[c] * h;
                        gbeta[c] += gyr[c];
                    }
                }
                vec![Some(gx), Some(ggamma), Some(gbeta)]
            }),
        ))
    }

    /// Per-(sample, variable) standardization over time of `[B, L, N]`:
    /// `(x − mean) / (std + eps)` with population std.
    pub fn standardize_time(&mut self, x: Var, eps: f64) -> Result<Var> {
        let xs = self.value(x);
        if xs.shape.len() != 3 {
            return Err(Error::shape("standardize", format!("expected [B, L, N], got {:?}", xs.shape)));
        }
        let (batch, len, nv) = (xs.shape[0], xs.shape[1], xs.shape[2]);
        let mut mean = vec![0.0; batch * nv];
        let mut std = vec![0.0; batch * nv];
        let mut out = vec![0.0; xs.numel()];
        for b in 0..batch {
            for n in 0..nv {
                let at = |l: usize| (b * len + l) * nv + n;
                let mu = (0..len).map(|l| xs.data[at(l)]).sum::<f64>() / len as f64;
                let var = (0..len).map(|l| (xs.data[at(l)] - mu).powi(2)).sum::<f64>() / len as f64;
                let s = var.sqrt();
                for l in 0..len {
                    out[at(l)] = (xs.data[at(l)] - mu) / (s + eps);
                }
                mean[b * nv + n] = mu;
                std[b * nv + n] = s;
            }
        }
        let value = Tensor::new(xs.shape.clone(), out)?;
        Ok(self.record(
            value,
            &[x],
            Box::new(move |inputs, _, gy| {
                let xd = &inputs[0].data;
                let mut gx = vec![0.0; xd.len()];
                for b in 0..batch {
                    for n in 0..nv {
                        let at = |l: usize| (b * len + l) * nv + n;
                        let (mu, s) = (mean[b * nv + n], std[b * nv + n]);
                        let denom = s + eps;
                        let gmean = (0..len).map(|l| gy[at(l)]).sum::<f64>() / len as f64;
                        let cov = (0..len).map(|l| gy[at(l)] * (xd[at(l)] - mu)).sum::<f64>();
                        let second = if s > 0.0 {
                            cov / (len as f64 * s * denom * denom)
                        } else {
                            0.0
                        };
                        for l in 0..len {
                            gx[at(l)] = (gy[at(l)] - gmean) / denom - (xd[at(l)] - mu) * second;
                        }
                    }
                }
                vec![Some(gx)]
            }),
        ))
    }

    /// Mean over rows of `−log softmax(logits)[label]` for `[T, C]` logits,
    /// computed through a max-shifted log-sum-exp.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[u16]) -> Result<Var> {
        let z = self.value(logits);
        if z.shape.len() != 2 || z.shape[0] != labels.len() {
            return Err(Error::shape(
                "cross_entropy",
                format!("logits {:?} for {} labels", z.shape, labels.len()),
            ));
        }
        let (rows, classes) = (z.shape[0], z.shape[1]);
        if let Some(bad) = labels.iter().find(|&&l| usize::from(l) >= classes) {
            return Err(Error::Precondition(format!("label {bad} out of range for {classes} classes")));
        }
        let mut probs = vec![0.0; rows * classes];
        let mut loss = 0.0;
        for (t, row) in z.data.chunks_exact(classes).enumerate() {
            let lse = log_sum_exp(row);
            for c in 0..classes {
                probs[t * classes + c] = (row[c] - lse).exp();
            }
            loss += lse - row[usize::from(labels[t])];
        }
        loss /= rows as f64;
        let labels = labels.to_vec();
        Ok(self.record(
            Tensor::scalar(loss),
            &[logits],
            Box::new(move |_, _, g| {
                let scale = g[0] / rows as f64;
                let mut gz: Vec<f64> = probs.iter().map(|p| p * scale).collect();
                for (t, &l) in labels.iter().enumerate() {
                    gz[t * classes + usize::from(l)] -= scale;
                }
                vec![Some(gz)]
            }),
        ))
    }
}

pub fn log_sum_exp(row: &[f64]) -> f64 {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Row-wise softmax of `[T, C]` values.
pub fn softmax_rows(data: &[f64], classes: usize) -> Vec<f64> {
    let mut out = vec![0.0; data.len()];
    for (row, o) in data.chunks_exact(classes).zip(out.chunks_exact_mut(classes)) {
        let lse = log_sum_exp(row);
        for (v, p) in row.iter().zip(o.iter_mut()) {
            *p = (v - lse).exp();
        }
    }
    out
}

/// Mean `−log p[label]` of rows that are already probability distributions.
pub fn cross_entropy_probs(probs: &[f64], classes: usize, labels: &[u16]) -> Result<f64> {
    if probs.len() != classes * labels.len() {
        return Err(Error::shape("cross_entropy", "probabilities do not match labels"));
    }
    let mut loss = 0.0;
    for (row, &l) in probs.chunks_exact(classes).zip(labels) {
        let l = usize::from(l);
        if l >= classes {
            return Err(Error::Precondition(format!("label {l} out of range for {classes} classes")));
        }
        loss -= row[l].max(f64::MIN_POSITIVE).ln();
    }
    Ok(loss / labels.len() as f64)
}
