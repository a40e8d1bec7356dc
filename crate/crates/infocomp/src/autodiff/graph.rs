//! Recorded differentiation graph (tape) and the reverse pass.
//!
//! The tape is a thread-local, append-only list of primitive applications,
//! rebuilt on every forward pass. Recording happens implicitly inside the op
//! functions whenever gradient mode is on and at least one input requires a
//! gradient; `backward_all` replays the tape once in reverse and then clears
//! it. Parameter tensors live outside the tape and survive disposal.

use std::cell::RefCell;

use super::kernels;
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// One recorded primitive application with whatever the backward rule needs.
pub(crate) enum Node {
    Matmul {
        a: Tensor,
        b: Tensor,
        out: Tensor,
    },
    /// out = a · bᵀ with b stored row-major [n×k].
    MatmulNT {
        a: Tensor,
        b: Tensor,
        out: Tensor,
    },
    Add {
        a: Tensor,
        b: Tensor,
        out: Tensor,
    },
    /// out[i, :] = x[i, :] + row
    AddRowBroadcast {
        x: Tensor,
        row: Tensor,
        out: Tensor,
    },
    Mul {
        a: Tensor,
        b: Tensor,
        out: Tensor,
    },
    Scale {
        x: Tensor,
        c: f64,
        out: Tensor,
    },
    ConcatRows {
        parts: Vec<Tensor>,
        out: Tensor,
    },
    ConcatCols {
        parts: Vec<Tensor>,
        out: Tensor,
    },
    SliceRows {
        x: Tensor,
        start: usize,
        out: Tensor,
    },
    SliceCols {
        x: Tensor,
        start: usize,
        out: Tensor,
    },
    Reshape {
        x: Tensor,
        out: Tensor,
    },
    SoftmaxRows {
        x: Tensor,
        out: Tensor,
    },
    LayerNorm {
        x: Tensor,
        gain: Tensor,
        bias: Tensor,
        out: Tensor,
        normalized: Vec<f64>,
        inv_std: Vec<f64>,
    },
    Gelu {
        x: Tensor,
        out: Tensor,
    },
    CrossEntropyMean {
        logits: Tensor,
        probs: Vec<f64>,
        labels: Vec<usize>,
        out: Tensor,
    },
    GatherRows {
        table: Tensor,
        ids: Vec<usize>,
        out: Tensor,
    },
    L2NormalizeRows {
        x: Tensor,
        out: Tensor,
        norms: Vec<f64>,
    },
    SumAll {
        x: Tensor,
        out: Tensor,
    },
    /// Fused softmax(q·kᵀ/√dh)·v over every (sequence block, head) pair of a
    /// stacked batch. `probs` holds the attention weights per block and head,
    /// laid out [block][head][seq_len × seq_len].
    MultiHeadAttention {
        q: Tensor,
        k: Tensor,
        v: Tensor,
        out: Tensor,
        n_heads: usize,
        seq_len: usize,
        probs: Vec<f64>,
    },
}

impl Node {
    fn output(&self) -> &Tensor {
        match self {
            Node::Matmul { out, .. }
            | Node::MatmulNT { out, .. }
            | Node::Add { out, .. }
            | Node::AddRowBroadcast { out, .. }
            | Node::Mul { out, .. }
            | Node::Scale { out, .. }
            | Node::ConcatRows { out, .. }
            | Node::ConcatCols { out, .. }
            | Node::SliceRows { out, .. }
            | Node::SliceCols { out, .. }
            | Node::Reshape { out, .. }
            | Node::SoftmaxRows { out, .. }
            | Node::LayerNorm { out, .. }
            | Node::Gelu { out, .. }
            | Node::CrossEntropyMean { out, .. }
            | Node::GatherRows { out, .. }
            | Node::L2NormalizeRows { out, .. }
            | Node::SumAll { out, .. }
            | Node::MultiHeadAttention { out, .. } => out,
        }
    }
}

struct GraphState {
    nodes: Vec<Node>,
    grad_enabled: bool,
}

thread_local! {
    static GRAPH: RefCell<GraphState> = RefCell::new(GraphState {
        nodes: Vec::new(),
        grad_enabled: true,
    });
}

/// True when ops should record onto the tape.
pub fn grad_enabled() -> bool {
    GRAPH.with(|g| g.borrow().grad_enabled)
}

/// Run `f` with recording disabled. Everything computed inside is detached:
/// gradients are exactly zero through this scope (stop-gradient).
pub fn no_grad<R>(f: impl FnOnce() -> R) -> R {
    let prev = GRAPH.with(|g| {
        let mut g = g.borrow_mut();
        let prev = g.grad_enabled;
        g.grad_enabled = false;
        prev
    });
    let out = f();
    GRAPH.with(|g| g.borrow_mut().grad_enabled = prev);
    out
}

/// Number of nodes currently on the tape.
pub fn graph_len() -> usize {
    GRAPH.with(|g| g.borrow().nodes.len())
}

/// Drop all recorded nodes without running backward.
pub fn clear_graph() {
    let nodes = GRAPH.with(|g| std::mem::take(&mut g.borrow_mut().nodes));
    for node in &nodes {
        node.output().set_node_id(None);
    }
}

pub(crate) fn record(node: Node) {
    GRAPH.with(|g| {
        let mut g = g.borrow_mut();
        node.output().set_node_id(Some(g.nodes.len()));
        g.nodes.push(node);
    });
}

/// Propagate d(loss)/d(tensor) into every reachable tensor that requires a
/// gradient, then clear the graph. Gradients add onto whatever is already
/// stored; call `zero_grad` (or the optimizer) to reset them.
pub fn backward_all(loss: &Tensor) -> Result<()> {
    if !loss.is_scalar() {
        return Err(Error::NonScalarLoss {
            shape: loss.shape(),
        });
    }
    let nodes = GRAPH.with(|g| std::mem::take(&mut g.borrow_mut().nodes));
    loss.accumulate_grad(&[1.0]);
    // The tape is in topological order, so one reverse sweep visits every
    // node exactly once with its output gradient complete.
    for node in nodes.iter().rev() {
        backward_node(node);
    }
    for node in &nodes {
        node.output().set_node_id(None);
        // Intermediate gradients die with the tape; only leaves keep theirs.
        node.output().zero_grad();
    }
    Ok(())
}

fn backward_node(node: &Node) {
    let out_grad = match node.output().grad() {
        Some(g) => g,
        None => return, // nothing flowed here; inputs get zero contribution
    };
    match node {
        Node::Matmul { a, b, out: _ } => {
            let (m, k) = (a.rows(), a.cols());
            let n = b.cols();
            if a.requires_grad() {
                let mut da = vec![0.0; m * k];
                b.with_values(|bv| kernels::mm_nt_acc(&out_grad, bv, &mut da, m, n, k));
                a.accumulate_grad(&da);
            }
            if b.requires_grad() {
                let mut db = vec![0.0; k * n];
                a.with_values(|av| kernels::mm_tn_acc(av, &out_grad, &mut db, k, m, n));
                b.accumulate_grad(&db);
            }
        }
        Node::MatmulNT { a, b, out: _ } => {
            let (m, k) = (a.rows(), a.cols());
            let n = b.rows();
            if a.requires_grad() {
                let mut da = vec![0.0; m * k];
                b.with_values(|bv| kernels::mm_acc(&out_grad, bv, &mut da, m, n, k));
                a.accumulate_grad(&da);
            }
            if b.requires_grad() {
                let mut db = vec![0.0; n * k];
                a.with_values(|av| kernels::mm_tn_acc(&out_grad, av, &mut db, n, m, k));
                b.accumulate_grad(&db);
            }
        }
        Node::Add { a, b, out: _ } => {
            a.accumulate_grad(&out_grad);
            b.accumulate_grad(&out_grad);
        }
        Node::AddRowBroadcast { x, row, out: _ } => {
            x.accumulate_grad(&out_grad);
            if row.requires_grad() {
                let n = row.numel();
                let mut drow = vec![0.0; n];
                for chunk in out_grad.chunks_exact(n) {
                    for (d, g) in drow.iter_mut().zip(chunk) {
                        *d += g;
                    }
                }
                row.accumulate_grad(&drow);
            }
        }
        Node::Mul { a, b, out: _ } => {
            if a.requires_grad() {
                let da: Vec<f64> =
                    b.with_values(|bv| out_grad.iter().zip(bv).map(|(g, y)| g * y).collect());
                a.accumulate_grad(&da);
            }
            if b.requires_grad() {
                let db: Vec<f64> =
                    a.with_values(|av| out_grad.iter().zip(av).map(|(g, x)| g * x).collect());
                b.accumulate_grad(&db);
            }
        }
        Node::Scale { x, c, out: _ } => {
            if x.requires_grad() {
                let dx: Vec<f64> = out_grad.iter().map(|g| g * c).collect();
                x.accumulate_grad(&dx);
            }
        }
        Node::ConcatRows { parts, out: _ } => {
            let mut offset = 0;
            for part in parts {
                let len = part.numel();
                part.accumulate_grad(&out_grad[offset..offset + len]);
                offset += len;
            }
        }
        Node::ConcatCols { parts, out } => {
            let rows = out.rows();
            let total_cols = out.cols();
            let mut col_offset = 0;
            for part in parts {
                let pc = part.cols();
                if part.requires_grad() {
                    let mut dp = vec![0.0; rows * pc];
                    for r in 0..rows {
                        let src = &out_grad[r * total_cols + col_offset..][..pc];
                        dp[r * pc..(r + 1) * pc].copy_from_slice(src);
                    }
                    part.accumulate_grad(&dp);
                }
                col_offset += pc;
            }
        }
        Node::SliceRows { x, start, out } => {
            if x.requires_grad() {
                let cols = x.cols();
                let mut dx = vec![0.0; x.numel()];
                dx[start * cols..start * cols + out.numel()].copy_from_slice(&out_grad);
                x.accumulate_grad(&dx);
            }
        }
        Node::SliceCols { x, start, out } => {
            if x.requires_grad() {
                let (rows, cols) = (x.rows(), x.cols());
                let width = out.cols();
                let mut dx = vec![0.0; rows * cols];
                for r in 0..rows {
                    dx[r * cols + start..r * cols + start + width]
                        .copy_from_slice(&out_grad[r * width..(r + 1) * width]);
                }
                x.accumulate_grad(&dx);
            }
        }
        Node::Reshape { x, out: _ } => {
            x.accumulate_grad(&out_grad);
        }
        Node::SoftmaxRows { x, out } => {
            if x.requires_grad() {
                let cols = out.cols();
                let y = out.to_vec();
                let mut dx = vec![0.0; y.len()];
                for r in 0..out.rows() {
                    let range = r * cols..(r + 1) * cols;
                    let yr = &y[range.clone()];
                    let gr = &out_grad[range.clone()];
                    let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for ((d, &yi), &gi) in dx[range].iter_mut().zip(yr).zip(gr) {
                        *d = yi * (gi - dot);
                    }
                }
                x.accumulate_grad(&dx);
            }
        }
        Node::LayerNorm {
            x,
            gain,
            bias,
            out: _,
            normalized,
            inv_std,
        } => {
            let d = x.cols();
            let rows = x.rows();
            let gain_v = gain.to_vec();
            if bias.requires_grad() {
                let mut db = vec![0.0; d];
                for chunk in out_grad.chunks_exact(d) {
                    for (b, g) in db.iter_mut().zip(chunk) {
                        *b += g;
                    }
                }
                bias.accumulate_grad(&db);
            }
            if gain.requires_grad() {
                let mut dg = vec![0.0; d];
                for (chunk, xh) in out_grad.chunks_exact(d).zip(normalized.chunks_exact(d)) {
                    for ((g, go), xi) in dg.iter_mut().zip(chunk).zip(xh) {
                        *g += go * xi;
                    }
                }
                gain.accumulate_grad(&dg);
            }
            if x.requires_grad() {
                let mut dx = vec![0.0; rows * d];
                for r in 0..rows {
                    let go = &out_grad[r * d..(r + 1) * d];
                    let xh = &normalized[r * d..(r + 1) * d];
                    // d x̂ = g ⊙ γ, then remove the mean and the x̂ component.
                    let dxhat: Vec<f64> = go.iter().zip(&gain_v).map(|(g, w)| g * w).collect();
                    let mean_dxhat: f64 = dxhat.iter().sum::<f64>() / d as f64;
                    let mean_dxhat_xhat: f64 =
                        dxhat.iter().zip(xh).map(|(a, b)| a * b).sum::<f64>() / d as f64;
                    for i in 0..d {
                        dx[r * d + i] =
                            inv_std[r] * (dxhat[i] - mean_dxhat - xh[i] * mean_dxhat_xhat);
                    }
                }
                x.accumulate_grad(&dx);
            }
        }
        Node::Gelu { x, out: _ } => {
            if x.requires_grad() {
                let dx: Vec<f64> = x.with_values(|xv| {
                    out_grad
                        .iter()
                        .zip(xv)
                        .map(|(g, &xi)| g * super::ops::gelu_derivative(xi))
                        .collect()
                });
                x.accumulate_grad(&dx);
            }
        }
        Node::CrossEntropyMean {
            logits,
            probs,
            labels,
            out: _,
        } => {
            if logits.requires_grad() {
                let c = logits.cols();
                let batch = labels.len() as f64;
                let g = out_grad[0];
                let mut dl = probs.clone();
                for (i, &label) in labels.iter().enumerate() {
                    dl[i * c + label] -= 1.0;
                }
                for v in dl.iter_mut() {
                    *v *= g / batch;
                }
                logits.accumulate_grad(&dl);
            }
        }
        Node::GatherRows { table, ids, out: _ } => {
            if table.requires_grad() {
                let d = table.cols();
                let mut dt = vec![0.0; table.numel()];
                for (slot, &id) in ids.iter().enumerate() {
                    let src = &out_grad[slot * d..(slot + 1) * d];
                    for (t, g) in dt[id * d..(id + 1) * d].iter_mut().zip(src) {
                        *t += g;
                    }
                }
                table.accumulate_grad(&dt);
            }
        }
        Node::L2NormalizeRows { x, out, norms } => {
            if x.requires_grad() {
                let d = x.cols();
                let y = out.to_vec();
                let mut dx = vec![0.0; y.len()];
                for (r, &norm) in norms.iter().enumerate() {
                    let gr = &out_grad[r * d..(r + 1) * d];
                    let yr = &y[r * d..(r + 1) * d];
                    if norm > super::ops::NORM_EPS {
                        let dot: f64 = gr.iter().zip(yr).map(|(a, b)| a * b).sum();
                        for i in 0..d {
                            dx[r * d + i] = (gr[i] - yr[i] * dot) / norm;
                        }
                    } else {
                        // Below the guard the map is linear: y = x / eps.
                        for i in 0..d {
                            dx[r * d + i] = gr[i] / super::ops::NORM_EPS;
                        }
                    }
                }
                x.accumulate_grad(&dx);
            }
        }
        Node::SumAll { x, out: _ } => {
            if x.requires_grad() {
                let dx = vec![out_grad[0]; x.numel()];
                x.accumulate_grad(&dx);
            }
        }
        Node::MultiHeadAttention {
            q,
            k,
            v,
            out: _,
            n_heads,
            seq_len,
            probs,
        } => {
            let (n_heads, seq_len) = (*n_heads, *seq_len);
            let d = q.cols();
            let d_head = d / n_heads;
            let blocks = q.rows() / seq_len;
            let scale = 1.0 / (d_head as f64).sqrt();
            let mut dq = vec![0.0; q.numel()];
            let mut dk = vec![0.0; k.numel()];
            let mut dv = vec![0.0; v.numel()];
            q.with_values(|qv| {
                k.with_values(|kv| {
                    v.with_values(|vv| {
                        let mut q_h = vec![0.0; seq_len * d_head];
                        let mut k_h = vec![0.0; seq_len * d_head];
                        let mut v_h = vec![0.0; seq_len * d_head];
                        let mut g_h = vec![0.0; seq_len * d_head];
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
                                    g_h[r * d_head..(r + 1) * d_head]
                                        .copy_from_slice(&out_grad[src..src + d_head]);
                                }
                                let p = &probs[(b * n_heads + h) * seq_len * seq_len..]
                                    [..seq_len * seq_len];
                                // dV = Pᵀ · gO
                                let mut dv_h = vec![0.0; seq_len * d_head];
                                kernels::mm_tn_acc(p, &g_h, &mut dv_h, seq_len, seq_len, d_head);
                                // dP = gO · Vᵀ
                                let dp = kernels::mm_nt(&g_h, &v_h, seq_len, d_head, seq_len);
                                // dS = P ⊙ (dP − rowdot(dP, P)), then scale
                                let mut ds = vec![0.0; seq_len * seq_len];
                                for r in 0..seq_len {
                                    let range = r * seq_len..(r + 1) * seq_len;
                                    let pr = &p[range.clone()];
                                    let dpr = &dp[range.clone()];
                                    let dot: f64 =
                                        pr.iter().zip(dpr).map(|(a, b)| a * b).sum();
                                    for (slot, (pi, dpi)) in
                                        ds[range].iter_mut().zip(pr.iter().zip(dpr))
                                    {
                                        *slot = pi * (dpi - dot) * scale;
                                    }
                                }
                                // dQ = dS · K, dK = dSᵀ · Q
                                let dq_h = kernels::mm(&ds, &k_h, seq_len, seq_len, d_head);
                                let mut dk_h = vec![0.0; seq_len * d_head];
                                kernels::mm_tn_acc(&ds, &q_h, &mut dk_h, seq_len, seq_len, d_head);
                                for r in 0..seq_len {
                                    let dst = (b * seq_len + r) * d + col;
                                    for c in 0..d_head {
                                        dq[dst + c] += dq_h[r * d_head + c];
                                        dk[dst + c] += dk_h[r * d_head + c];
                                        dv[dst + c] += dv_h[r * d_head + c];
                                    }
                                }
                            }
                        }
                    })
                })
            });
            q.accumulate_grad(&dq);
            k.accumulate_grad(&dk);
            v.accumulate_grad(&dv);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::ops;
    use super::*;

    #[test]
    fn backward_rejects_non_scalar() {
        let x = Tensor::param(vec![1.0, 2.0], &[2]).unwrap();
        let err = backward_all(&x).unwrap_err();
        assert!(matches!(err, Error::NonScalarLoss { .. }));
    }

    #[test]
    fn sum_backward_is_ones() {
        let x = Tensor::param(vec![1.0, 2.0, 3.0, 4.0], &[2, 2]).unwrap();
        let s = ops::sum_all(&x);
        backward_all(&s).unwrap();
        assert_eq!(x.grad().unwrap(), vec![1.0; 4]);
        assert_eq!(graph_len(), 0);
    }

    #[test]
    fn disconnected_tensor_gets_no_grad() {
        let x = Tensor::param(vec![1.0, 2.0], &[2]).unwrap();
        let y = Tensor::param(vec![3.0], &[1]).unwrap();
        let s = ops::sum_all(&x);
        backward_all(&s).unwrap();
        assert!(y.grad().is_none());
    }

    #[test]
    fn no_grad_scope_records_nothing() {
        let x = Tensor::param(vec![1.0, 2.0], &[2]).unwrap();
        let s = no_grad(|| ops::sum_all(&x));
        assert_eq!(graph_len(), 0);
        assert!(!s.requires_grad());
    }

    #[test]
    fn constant_scalar_loss_backward_is_noop() {
        let loss = Tensor::scalar(5.0);
        backward_all(&loss).unwrap();
        assert!(loss.grad().is_none());
    }

    #[test]
    fn params_survive_graph_disposal() {
        let x = Tensor::param(vec![2.0], &[1]).unwrap();
        {
            let s = ops::scale(&ops::sum_all(&x), 3.0);
            backward_all(&s).unwrap();
        }
        assert_eq!(x.grad().unwrap(), vec![3.0]);
        assert_eq!(x.to_vec(), vec![2.0]);
        assert_eq!(graph_len(), 0);
    }
}
