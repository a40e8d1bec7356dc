//! Differentiable primitive operations.
//!
//! Every op computes its forward value eagerly and, when gradient mode is on
//! and at least one input requires a gradient, records a node on the
//! thread-local tape. Shapes are treated as row-major 2-D matrices; vectors
//! are rows.

use super::graph::{grad_enabled, record, Node};
use super::kernels;
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Guard against zero norms in L2 normalization.
pub const NORM_EPS: f64 = 1e-12;

fn make_output(values: Vec<f64>, shape: Vec<usize>, inputs: &[&Tensor]) -> (Tensor, bool) {
    let track = grad_enabled() && inputs.iter().any(|t| t.requires_grad());
    let out = Tensor::raw(values, shape, track);
    (out, track)
}

/// Standard matrix product a[m×k] · b[k×n].
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (m, k) = (a.rows(), a.cols());
    let (k2, n) = (b.rows(), b.cols());
    if k != k2 {
        return Err(Error::ShapeMismatch {
            op: "matmul",
            lhs: a.shape(),
            rhs: b.shape(),
        });
    }
    let values = a.with_values(|av| b.with_values(|bv| kernels::mm(av, bv, m, k, n)));
    let (out, track) = make_output(values, vec![m, n], &[a, b]);
    if track {
        record(Node::Matmul {
            a: a.clone(),
            b: b.clone(),
            out: out.clone(),
        });
    }
    Ok(out)
}

/// a[m×k] · b[n×k]ᵀ, i.e. pairwise dot products of rows.
pub fn matmul_nt(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (m, k) = (a.rows(), a.cols());
    let (n, k2) = (b.rows(), b.cols());
    if k != k2 {
        return Err(Error::ShapeMismatch {
            op: "matmul_nt",
            lhs: a.shape(),
            rhs: b.shape(),
        });
    }
    let values = a.with_values(|av| b.with_values(|bv| kernels::mm_nt(av, bv, m, k, n)));
    let (out, track) = make_output(values, vec![m, n], &[a, b]);
    if track {
        record(Node::MatmulNT {
            a: a.clone(),
            b: b.clone(),
            out: out.clone(),
        });
    }
    Ok(out)
}

/// Elementwise sum of two same-shaped tensors.
pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch {
            op: "add",
            lhs: a.shape(),
            rhs: b.shape(),
        });
    }
    let values = a.with_values(|av| b.with_values(|bv| av.iter().zip(bv).map(|(x, y)| x + y).collect()));
    let (out, track) = make_output(values, a.shape(), &[a, b]);
    if track {
        record(Node::Add {
            a: a.clone(),
            b: b.clone(),
            out: out.clone(),
        });
    }
    Ok(out)
}

/// Add a length-n row vector to every row of x[m×n].
pub fn add_row_broadcast(x: &Tensor, row: &Tensor) -> Result<Tensor> {
    let n = x.cols();
    if row.numel() != n {
        return Err(Error::ShapeMismatch {
            op: "add_row_broadcast",
            lhs: x.shape(),
            rhs: row.shape(),
        });
    }
    let values = x.with_values(|xv| {
        row.with_values(|rv| {
            let mut out = xv.to_vec();
            for chunk in out.chunks_exact_mut(n) {
                for (o, r) in chunk.iter_mut().zip(rv) {
                    *o += r;
                }
            }
            out
        })
    });
    let (out, track) = make_output(values, x.shape(), &[x, row]);
    if track {
        record(Node::AddRowBroadcast {
            x: x.clone(),
            row: row.clone(),
            out: out.clone(),
        });
    }
    Ok(out)
}

/// Elementwise product of two same-shaped tensors.
pub fn mul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch {
            op: "mul",
            lhs: a.shape(),
            rhs: b.shape(),
        });
    }
    let values = a.with_values(|av| b.with_values(|bv| av.iter().zip(bv).map(|(x, y)| x * y).collect()));
    let (out, track) = make_output(values, a.shape(), &[a, b]);
    if track {
        record(Node::Mul {
            a: a.clone(),
            b: b.clone(),
            out: out.clone(),
        });
    }
    Ok(out)
}

/// Multiply every element by a constant.
pub fn scale(x: &Tensor, c: f64) -> Tensor {
    let values = x.with_values(|xv| xv.iter().map(|v| v * c).collect());
    let (out, track) = make_output(values, x.shape(), &[x]);
    if track {
        record(Node::Scale {
            x: x.clone(),
            c,
            out: out.clone(),
        });
    }
    out
}

/// Row-wise concatenation; all parts must share a column count.
pub fn concat_rows(parts: &[&Tensor]) -> Result<Tensor> {
    assert!(!parts.is_empty(), "concat_rows needs at least one part");
    let cols = parts[0].cols();
    let mut rows = 0;
    for p in parts {
        if p.cols() != cols {
            return Err(Error::ShapeMismatch {
                op: "concat_rows",
                lhs: parts[0].shape(),
                rhs: p.shape(),
            });
        }
        rows += p.rows();
    }
    let mut values = Vec::with_capacity(rows * cols);
    for p in parts {
        p.with_values(|v| values.extend_from_slice(v));
    }
    let (out, track) = make_output(values, vec![rows, cols], parts);
    if track {
        record(Node::ConcatRows {
            parts: parts.iter().map(|p| (*p).clone()).collect(),
            out: out.clone(),
        });
    }
    Ok(out)
}

/// Column-wise concatenation; all parts must share a row count.
pub fn concat_cols(parts: &[&Tensor]) -> Result<Tensor> {
    assert!(!parts.is_empty(), "concat_cols needs at least one part");
    let rows = parts[0].rows();
    let mut cols = 0;
    for p in parts {
        if p.rows() != rows {
            return Err(Error::ShapeMismatch {
                op: "concat_cols",
                lhs: parts[0].shape(),
                rhs: p.shape(),
            });
        }
        cols += p.cols();
    }
    let mut values = vec![0.0; rows * cols];
    let mut offset = 0;
    for p in parts {
        let pc = p.cols();
        p.with_values(|v| {
            for r in 0..rows {
                values[r * cols + offset..r * cols + offset + pc]
                    .copy_from_slice(&v[r * pc..(r + 1) * pc]);
            }
        });
        offset += pc;
    }
    let (out, track) = make_output(values, vec![rows, cols], parts);
    if track {
        record(Node::ConcatCols {
            parts: parts.iter().map(|p| (*p).clone()).collect(),
            out: out.clone(),
        });
    }
    Ok(out)
}

/// Contiguous row slice x[start .. start+len, :].
pub fn slice_rows(x: &Tensor, start: usize, len: usize) -> Result<Tensor> {
    let (rows, cols) = (x.rows(), x.cols());
    if start + len > rows {
        return Err(Error::IndexOutOfRange {
            what: "row",
            index: start + len - 1,
            len: rows,
        });
    }
    let values = x.with_values(|v| v[start * cols..(start + len) * cols].to_vec());
    let (out, track) = make_output(values, vec![len, cols], &[x]);
    if track {
        record(Node::SliceRows {
            x: x.clone(),
            start,
            out: out.clone(),
        });
    }
    Ok(out)
}

/// Contiguous column slice x[:, start .. start+len].
pub fn slice_cols(x: &Tensor, start: usize, len: usize) -> Result<Tensor> {
    let (rows, cols) = (x.rows(), x.cols());
    if start + len > cols {
        return Err(Error::IndexOutOfRange {
            what: "column",
            index: start + len - 1,
            len: cols,
        });
    }
    let values = x.with_values(|v| {
        let mut out = Vec::with_capacity(rows * len);
        for r in 0..rows {
            out.extend_from_slice(&v[r * cols + start..r * cols + start + len]);
        }
        out
    });
    let (out, track) = make_output(values, vec![rows, len], &[x]);
    if track {
        record(Node::SliceCols {
            x: x.clone(),
            start,
            out: out.clone(),
        });
    }
    Ok(out)
}

/// Row-major reinterpretation to a new shape with the same element count.
pub fn reshape(x: &Tensor, shape: &[usize]) -> Result<Tensor> {
    let numel: usize = shape.iter().product();
    if numel != x.numel() {
        return Err(Error::InvalidShape {
            op: "reshape",
            shape: shape.to_vec(),
            msg: format!("cannot hold {} elements", x.numel()),
        });
    }
    let values = x.to_vec();
    let (out, track) = make_output(values, shape.to_vec(), &[x]);
    if track {
        record(Node::Reshape {
            x: x.clone(),
            out: out.clone(),
        });
    }
    Ok(out)
}

/// Row-wise softmax with per-row max subtraction for overflow safety.
pub fn softmax_rows(x: &Tensor) -> Tensor {
    let cols = x.cols();
    let values = x.with_values(|xv| {
        let mut out = vec![0.0; xv.len()];
        for (row_in, row_out) in xv.chunks_exact(cols).zip(out.chunks_exact_mut(cols)) {
            let max = row_in.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for (o, &v) in row_out.iter_mut().zip(row_in) {
                *o = (v - max).exp();
                sum += *o;
            }
            for o in row_out.iter_mut() {
                *o /= sum;
            }
        }
        out
    });
    let (out, track) = make_output(values, x.shape(), &[x]);
    if track {
        record(Node::SoftmaxRows {
            x: x.clone(),
            out: out.clone(),
        });
    }
    out
}

/// Row-wise layer normalization with elementwise affine.
pub fn layer_norm(x: &Tensor, gain: &Tensor, bias: &Tensor, eps: f64) -> Result<Tensor> {
    let d = x.cols();
    if gain.numel() != d || bias.numel() != d {
        return Err(Error::ShapeMismatch {
            op: "layer_norm",
            lhs: x.shape(),
            rhs: gain.shape(),
        });
    }
    assert!(eps > 0.0, "layer_norm eps must be positive");
    let rows = x.rows();
    let mut normalized = vec![0.0; rows * d];
    let mut inv_std = vec![0.0; rows];
    let values = x.with_values(|xv| {
        gain.with_values(|gv| {
            bias.with_values(|bv| {
                let mut out = vec![0.0; rows * d];
                for r in 0..rows {
                    let row = &xv[r * d..(r + 1) * d];
                    let mean = row.iter().sum::<f64>() / d as f64;
                    let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d as f64;
                    let istd = 1.0 / (var + eps).sqrt();
                    inv_std[r] = istd;
                    for i in 0..d {
                        let xh = (row[i] - mean) * istd;
                        normalized[r * d + i] = xh;
                        out[r * d + i] = gv[i] * xh + bv[i];
                    }
                }
                out
            })
        })
    });
    let (out, track) = make_output(values, x.shape(), &[x, gain, bias]);
    if track {
        record(Node::LayerNorm {
            x: x.clone(),
            gain: gain.clone(),
            bias: bias.clone(),
            out: out.clone(),
            normalized,
            inv_std,
        });
    }
    Ok(out)
}

// Tanh-approximation GELU constants: sqrt(2/pi) and the cubic coefficient.
const GELU_SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;
const GELU_CUBIC: f64 = 0.044_715;

fn gelu_scalar(x: f64) -> f64 {
    let u = GELU_SQRT_2_OVER_PI * (x + GELU_CUBIC * x * x * x);
    0.5 * x * (1.0 + u.tanh())
}

pub(crate) fn gelu_derivative(x: f64) -> f64 {
    let u = GELU_SQRT_2_OVER_PI * (x + GELU_CUBIC * x * x * x);
    let t = u.tanh();
    let sech2 = 1.0 - t * t;
    0.5 * (1.0 + t) + 0.5 * x * sech2 * GELU_SQRT_2_OVER_PI * (1.0 + 3.0 * GELU_CUBIC * x * x)
}

/// Elementwise GELU (tanh approximation).
pub fn gelu(x: &Tensor) -> Tensor {
    let values = x.with_values(|xv| xv.iter().map(|&v| gelu_scalar(v)).collect());
    let (out, track) = make_output(values, x.shape(), &[x]);
    if track {
        record(Node::Gelu {
            x: x.clone(),
            out: out.clone(),
        });
    }
    out
}

/// Mean over the batch of -log softmax(logits)[label].
pub fn cross_entropy_mean(logits: &Tensor, labels: &[usize]) -> Result<Tensor> {
    let (batch, classes) = (logits.rows(), logits.cols());
    assert!(batch >= 1, "cross_entropy_mean needs a non-empty batch");
    assert_eq!(labels.len(), batch, "one label per logits row");
    for &label in labels {
        if label >= classes {
            return Err(Error::LabelOutOfRange {
                index: label,
                n_classes: classes,
            });
        }
    }
    let mut probs = vec![0.0; batch * classes];
    let loss = logits.with_values(|lv| {
        let mut total = 0.0;
        for (i, &label) in labels.iter().enumerate() {
            let row = &lv[i * classes..(i + 1) * classes];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for (j, &v) in row.iter().enumerate() {
                let e = (v - max).exp();
                probs[i * classes + j] = e;
                sum += e;
            }
            for p in &mut probs[i * classes..(i + 1) * classes] {
                *p /= sum;
            }
            // log-sum-exp form keeps the loss finite even for extreme logits
            total -= row[label] - max - sum.ln();
        }
        total / batch as f64
    });
    let (out, track) = make_output(vec![loss], vec![1], &[logits]);
    if track {
        record(Node::CrossEntropyMean {
            logits: logits.clone(),
            probs,
            labels: labels.to_vec(),
            out: out.clone(),
        });
    }
    Ok(out)
}

/// Row lookup out[i, :] = table[ids[i], :] (embedding gather).
pub fn gather_rows(table: &Tensor, ids: &[usize]) -> Result<Tensor> {
    let (rows, d) = (table.rows(), table.cols());
    for &id in ids {
        if id >= rows {
            return Err(Error::TokenOutOfRange { id, vocab: rows });
        }
    }
    let values = table.with_values(|tv| {
        let mut out = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            out.extend_from_slice(&tv[id * d..(id + 1) * d]);
        }
        out
    });
    let (out, track) = make_output(values, vec![ids.len(), d], &[table]);
    if track {
        record(Node::GatherRows {
            table: table.clone(),
            ids: ids.to_vec(),
            out: out.clone(),
        });
    }
    Ok(out)
}

/// Scale each row to unit L2 norm, guarded by `NORM_EPS` for zero rows.
pub fn l2_normalize_rows(x: &Tensor) -> Tensor {
    let d = x.cols();
    let rows = x.rows();
    let mut norms = vec![0.0; rows];
    let values = x.with_values(|xv| {
        let mut out = vec![0.0; xv.len()];
        for r in 0..rows {
            let row = &xv[r * d..(r + 1) * d];
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            let denom = norm.max(NORM_EPS);
            norms[r] = denom;
            for i in 0..d {
                out[r * d + i] = row[i] / denom;
            }
        }
        out
    });
    let (out, track) = make_output(values, x.shape(), &[x]);
    if track {
        record(Node::L2NormalizeRows {
            x: x.clone(),
            out: out.clone(),
            norms,
        });
    }
    out
}

/// Fused bidirectional multi-head self-attention over a stack of equal-length
/// sequence blocks. Inputs are the projected q, k, v matrices
/// [blocks·seq_len × d]; each block attends within itself only. Scores are
/// scaled by 1/√d_head and softmaxed row-wise (with max subtraction).
pub fn multi_head_attention(
    q: &Tensor,
    k: &Tensor,
    v: &Tensor,
    n_heads: usize,
    seq_len: usize,
) -> Result<Tensor> {
    let (rows, d) = (q.rows(), q.cols());
    if k.shape() != q.shape() || v.shape() != q.shape() {
        return Err(Error::ShapeMismatch {
            op: "multi_head_attention",
            lhs: q.shape(),
            rhs: k.shape(),
        });
    }
    if n_heads == 0 || d % n_heads != 0 {
        return Err(Error::InvalidShape {
            op: "multi_head_attention",
            shape: q.shape(),
            msg: format!("{d} columns not divisible into {n_heads} heads"),
        });
    }
    if seq_len == 0 || rows % seq_len != 0 {
        return Err(Error::InvalidShape {
            op: "multi_head_attention",
            shape: q.shape(),
            msg: format!("{rows} rows not divisible into blocks of {seq_len}"),
        });
    }
    let d_head = d / n_heads;
    let blocks = rows / seq_len;
    let scale = 1.0 / (d_head as f64).sqrt();
    let mut out = vec![0.0; rows * d];
    let mut probs = vec![0.0; blocks * n_heads * seq_len * seq_len];
    q.with_values(|qv| {
        k.with_values(|kv| {
            v.with_values(|vv| {
                let mut q_h = vec![0.0; seq_len * d_head];
                let mut k_h = vec![0.0; seq_len * d_head];
                let mut v_h = vec![0.0; seq_len * d_head];
                for b in 0..blocks {
                    for h in 0..n_heads {
                        let col = h * d_head;
                        for r in 0..seq_len {
                            let src = (b * seq_len + r) * d + col;
                            q_h[r * d_head..(r + 1) * d_head]
                                .copy_from_slice(&qv[src..src + d_head]);
                            k_h[r * d_head..(r + 1) * d_head]
                                .copy_from_slice(&kv[src..src + d_head]);
                            v_h[r * d_head..(r + 1) * d_head]
                                .copy_from_slice(&vv[src..src + d_head]);
                        }
                        let p = &mut probs[(b * n_heads + h) * seq_len * seq_len..]
                            [..seq_len * seq_len];
                        kernels::mm_nt_acc(&q_h, &k_h, p, seq_len, d_head, seq_len);
                        for row in p.chunks_exact_mut(seq_len) {
                            let max = row
                                .iter()
                                .map(|s| s * scale)
                                .fold(f64::NEG_INFINITY, f64::max);
                            let mut sum = 0.0;
                            for s in row.iter_mut() {
                                *s = (*s * scale - max).exp();
                                sum += *s;
                            }
                            for s in row.iter_mut() {
                                *s /= sum;
                            }
                        }
                        let o_h = kernels::mm(p, &v_h, seq_len, seq_len, d_head);
                        for r in 0..seq_len {
                            let dst = (b * seq_len + r) * d + col;
                            out[dst..dst + d_head]
                                .copy_from_slice(&o_h[r * d_head..(r + 1) * d_head]);
                        }
                    }
                }
            })
        })
    });
    let (out, track) = make_output(out, q.shape(), &[q, k, v]);
    if track {
        record(Node::MultiHeadAttention {
            q: q.clone(),
            k: k.clone(),
            v: v.clone(),
            out: out.clone(),
            n_heads,
            seq_len,
            probs,
        });
    }
    Ok(out)
}

/// Sum of all elements as a scalar tensor.
pub fn sum_all(x: &Tensor) -> Tensor {
    let s = x.with_values(|xv| xv.iter().sum());
    let (out, track) = make_output(vec![s], vec![1], &[x]);
    if track {
        record(Node::SumAll {
            x: x.clone(),
            out: out.clone(),
        });
    }
    out
}

/// Mean of all elements as a scalar tensor.
pub fn mean_all(x: &Tensor) -> Tensor {
    let n = x.numel() as f64;
    scale(&sum_all(x), 1.0 / n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::graph::backward_all;

    #[test]
    fn matmul_identity() {
        let i = Tensor::from_vec(vec![1.0, 0.0, 0.0, 1.0], &[2, 2]).unwrap();
        let b = Tensor::from_vec(vec![2.0, 3.0, 4.0, 5.0], &[2, 2]).unwrap();
        let c = matmul(&i, &b).unwrap();
        assert_eq!(c.to_vec(), vec![2.0, 3.0, 4.0, 5.0]);
    }

    #[test]
    fn matmul_dot_product() {
        let a = Tensor::from_vec(vec![1.0, 2.0], &[1, 2]).unwrap();
        let b = Tensor::from_vec(vec![3.0, 4.0], &[2, 1]).unwrap();
        let c = matmul(&a, &b).unwrap();
        assert_eq!(c.to_vec(), vec![11.0]);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let a = Tensor::zeros(&[2, 3]);
        let b = Tensor::zeros(&[2, 2]);
        let err = matmul(&a, &b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 3]") && msg.contains("[2, 2]"), "{msg}");
    }

    #[test]
    fn softmax_symmetry_and_overflow() {
        let x = Tensor::from_vec(vec![0.0, 0.0], &[1, 2]).unwrap();
        let y = softmax_rows(&x);
        assert_eq!(y.to_vec(), vec![0.5, 0.5]);

        let big = Tensor::from_vec(vec![1000.0, 1000.0], &[1, 2]).unwrap();
        let y = softmax_rows(&big);
        assert!(y.to_vec().iter().all(|v| (v - 0.5).abs() < 1e-15));
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let x = Tensor::from_vec(vec![0.3, -1.2, 2.0, 4.0, 0.0, -0.5], &[2, 3]).unwrap();
        let y = softmax_rows(&x);
        let v = y.to_vec();
        for row in v.chunks_exact(3) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn layer_norm_constant_row_is_zero() {
        let x = Tensor::from_vec(vec![3.0, 3.0, 3.0, 3.0], &[1, 4]).unwrap();
        let gain = Tensor::from_vec(vec![1.0; 4], &[4]).unwrap();
        let bias = Tensor::from_vec(vec![0.0; 4], &[4]).unwrap();
        let y = layer_norm(&x, &gain, &bias, 1e-5).unwrap();
        assert!(y.to_vec().iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn layer_norm_already_normalized_row() {
        let x = Tensor::from_vec(vec![1.0, -1.0], &[1, 2]).unwrap();
        let gain = Tensor::from_vec(vec![1.0, 1.0], &[2]).unwrap();
        let bias = Tensor::from_vec(vec![0.0, 0.0], &[2]).unwrap();
        let y = layer_norm(&x, &gain, &bias, 1e-12).unwrap();
        let v = y.to_vec();
        assert!((v[0] - 1.0).abs() < 1e-6 && (v[1] + 1.0).abs() < 1e-6);
    }

    #[test]
    fn gelu_fixed_points() {
        let x = Tensor::from_vec(vec![0.0, 10.0], &[2]).unwrap();
        let y = gelu(&x).to_vec();
        assert_eq!(y[0], 0.0);
        assert!((y[1] - 10.0).abs() < 1e-6);
    }

    #[test]
    fn cross_entropy_uniform_and_confident() {
        let logits = Tensor::from_vec(vec![0.0, 0.0], &[1, 2]).unwrap();
        let loss = cross_entropy_mean(&logits, &[0]).unwrap();
        assert!((loss.item() - std::f64::consts::LN_2).abs() < 1e-12);

        let logits = Tensor::from_vec(vec![10.0, -10.0], &[1, 2]).unwrap();
        let loss = cross_entropy_mean(&logits, &[0]).unwrap();
        assert!(loss.item() < 1e-8 && loss.item() >= 0.0);
    }

    #[test]
    fn cross_entropy_label_out_of_range() {
        let logits = Tensor::zeros(&[1, 2]);
        let err = cross_entropy_mean(&logits, &[5]).unwrap_err();
        assert!(err.to_string().contains('5'));
    }

    #[test]
    fn normalize_zero_row_has_no_nan() {
        let x = Tensor::from_vec(vec![0.0, 0.0, 0.0], &[1, 3]).unwrap();
        let y = l2_normalize_rows(&x);
        assert!(y.to_vec().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn concat_and_slice_roundtrip_gradient() {
        let a = Tensor::param(vec![1.0, 2.0], &[1, 2]).unwrap();
        let b = Tensor::param(vec![3.0, 4.0], &[1, 2]).unwrap();
        let cat = concat_rows(&[&a, &b]).unwrap();
        let top = slice_rows(&cat, 0, 1).unwrap();
        let loss = sum_all(&top);
        backward_all(&loss).unwrap();
        assert_eq!(a.grad().unwrap(), vec![1.0, 1.0]);
        assert_eq!(b.grad().unwrap(), vec![0.0, 0.0]);
    }
}
