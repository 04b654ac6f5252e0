//! Reverse-mode automatic differentiation over dense tensors.
//!
//! A `Tape` records every operation of one forward pass. `backward` replays
//! the record in reverse, accumulating exact analytic gradients into every
//! reachable node. Parameters are registered by name so their gradients can
//! be handed to the optimizer after a pass.
//!
//! The tape is rebuilt for every forward pass and confined to one worker;
//! values are immutable once produced.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use crate::error::{FcdError, Result};
use crate::numeric::tensor::{matmul_a_bt_acc, matmul_acc, matmul_at_b_acc, strides, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

type BackFn = Box<dyn Fn(&Tensor, &[Node], &mut [Tensor])>;

struct Node {
    value: Tensor,
    back: Option<BackFn>,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: Vec<(String, usize)>,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].value.shape
    }

    fn push(&mut self, value: Tensor, back: Option<BackFn>) -> Var {
        debug_assert!(value.all_finite(), "non-finite value produced on tape");
        self.nodes.push(Node { value, back });
        Var(self.nodes.len() - 1)
    }

    /// Leaf with no gradient flow.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, None)
    }

    /// Named trainable leaf; its gradient is collected by `param_grads`.
    pub fn param(&mut self, name: &str, t: &Tensor) -> Var {
        let v = self.push(t.clone(), None);
        self.params.push((name.to_string(), v.0));
        v
    }

    // ── elementwise ──────────────────────────────────────────────────

    fn unary(
        &mut self,
        x: Var,
        f: impl Fn(f64) -> f64,
        dfdx: impl Fn(f64, f64) -> f64 + 'static,
    ) -> Var {
        let xv = &self.nodes[x.0].value;
        let out = Tensor::new(xv.shape.clone(), xv.data.iter().map(|&v| f(v)).collect());
        let out_id = self.nodes.len();
        let x_id = x.0;
        self.push(
            out,
            Some(Box::new(move |g, nodes, grads| {
                let xv = &nodes[x_id].value.data;
                let yv = &nodes[out_id].value.data;
                let gx = &mut grads[x_id].data;
                for i in 0..g.data.len() {
                    gx[i] += g.data[i] * dfdx(xv[i], yv[i]);
                }
            })),
        )
    }

    fn binary(
        &mut self,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        dfda: impl Fn(f64, f64) -> f64 + 'static,
        dfdb: impl Fn(f64, f64) -> f64 + 'static,
    ) -> Var {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert_eq!(av.shape, bv.shape, "elementwise op on mismatched shapes");
        let out = Tensor::new(
            av.shape.clone(),
            av.data
                .iter()
                .zip(&bv.data)
                .map(|(&x, &y)| f(x, y))
                .collect(),
        );
        let (a_id, b_id) = (a.0, b.0);
        self.push(
            out,
            Some(Box::new(move |g, nodes, grads| {
                let av = &nodes[a_id].value.data;
                let bv = &nodes[b_id].value.data;
                for i in 0..g.data.len() {
                    let gi = g.data[i];
                    grads[a_id].data[i] += gi * dfda(av[i], bv[i]);
                    grads[b_id].data[i] += gi * dfdb(av[i], bv[i]);
                }
            })),
        )
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, y| x + y, |_, _| 1.0, |_, _| 1.0)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, y| x - y, |_, _| 1.0, |_, _| -1.0)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, y| x * y, |_, y| y, |x, _| x)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, y| x / y, |_, y| 1.0 / y, |x, y| -x / (y * y))
    }

    pub fn neg(&mut self, x: Var) -> Var {
        self.unary(x, |v| -v, |_, _| -1.0)
    }

    /// Subgradient at 0 is 0.
    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(
            x,
            |v| if v > 0.0 { v } else { 0.0 },
            |v, _| if v > 0.0 { 1.0 } else { 0.0 },
        )
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(
            x,
            |v| 1.0 / (1.0 + (-v).exp()),
            |_, y| y * (1.0 - y),
        )
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.tanh(), |_, y| 1.0 - y * y)
    }

    pub fn softplus(&mut self, x: Var) -> Var {
        // ln(1+e^x), computed stably for large |x|
        self.unary(
            x,
            |v| {
                if v > 30.0 {
                    v
                } else {
                    (1.0 + v.exp()).ln()
                }
            },
            |v, _| 1.0 / (1.0 + (-v).exp()),
        )
    }

    pub fn sqrt(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.sqrt(), |_, y| 0.5 / y)
    }

    pub fn recip(&mut self, x: Var) -> Var {
        self.unary(x, |v| 1.0 / v, |_, y| -y * y)
    }

    pub fn rsqrt(&mut self, x: Var) -> Var {
        self.unary(x, |v| 1.0 / v.sqrt(), |v, y| -0.5 * y / v)
    }

    /// |x| with subgradient 0 at the origin.
    pub fn abs(&mut self, x: Var) -> Var {
        self.unary(
            x,
            |v| v.abs(),
            |v, _| {
                if v > 0.0 {
                    1.0
                } else if v < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            },
        )
    }

    pub fn add_scalar(&mut self, x: Var, c: f64) -> Var {
        self.unary(x, move |v| v + c, |_, _| 1.0)
    }

    pub fn mul_scalar(&mut self, x: Var, c: f64) -> Var {
        self.unary(x, move |v| v * c, move |_, _| c)
    }

    /// sqrt(a² + b²); gradient guarded at the origin.
    pub fn hypot(&mut self, a: Var, b: Var) -> Var {
        self.binary(
            a,
            b,
            |x, y| (x * x + y * y).sqrt(),
            |x, y| {
                let h = (x * x + y * y).sqrt();
                if h == 0.0 {
                    0.0
                } else {
                    x / h
                }
            },
            |x, y| {
                let h = (x * x + y * y).sqrt();
                if h == 0.0 {
                    0.0
                } else {
                    y / h
                }
            },
        )
    }

    /// arctan(num/den), with den = 0 mapped to sign(num)·π/2 (0 when both 0).
    pub fn atan_ratio(&mut self, num: Var, den: Var) -> Var {
        self.binary(
            num,
            den,
            |r, i| {
                if i == 0.0 {
                    if r == 0.0 {
                        0.0
                    } else {
                        r.signum() * PI / 2.0
                    }
                } else {
                    (r / i).atan()
                }
            },
            |r, i| {
                let q = r * r + i * i;
                if q == 0.0 {
                    0.0
                } else {
                    i / q
                }
            },
            |r, i| {
                let q = r * r + i * i;
                if q == 0.0 {
                    0.0
                } else {
                    -r / q
                }
            },
        )
    }

    /// Multiply a tensor by a scalar-valued node.
    pub fn scale_by(&mut self, x: Var, s: Var) -> Var {
        assert!(self.nodes[s.0].value.is_scalar(), "scale_by needs a scalar");
        let sv = self.nodes[s.0].value.data[0];
        let xv = &self.nodes[x.0].value;
        let out = Tensor::new(xv.shape.clone(), xv.data.iter().map(|&v| v * sv).collect());
        let (x_id, s_id) = (x.0, s.0);
        self.push(
            out,
            Some(Box::new(move |g, nodes, grads| {
                let sv = nodes[s_id].value.data[0];
                let xv = &nodes[x_id].value.data;
                let mut gs = 0.0;
                for i in 0..g.data.len() {
                    grads[x_id].data[i] += g.data[i] * sv;
                    gs += g.data[i] * xv[i];
                }
                grads[s_id].data[0] += gs;
            })),
        )
    }

    // ── shape manipulation ───────────────────────────────────────────

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Var {
        let xv = &self.nodes[x.0].value;
        assert_eq!(
            shape.iter().product::<usize>(),
            xv.numel(),
            "reshape from {:?} to {:?}",
            xv.shape,
            shape
        );
        let out = Tensor::new(shape.to_vec(), xv.data.clone());
        let x_id = x.0;
        self.push(
            out,
            Some(Box::new(move |g, _nodes, grads| {
                for i in 0..g.data.len() {
                    grads[x_id].data[i] += g.data[i];
                }
            })),
        )
    }

    pub fn permute(&mut self, x: Var, axes: &[usize]) -> Var {
        let out = self.nodes[x.0].value.permuted(axes);
        let x_id = x.0;
        // inverse permutation maps destination axes back to source axes
        let mut inv = vec![0usize; axes.len()];
        for (i, &a) in axes.iter().enumerate() {
            inv[a] = i;
        }
        self.push(
            out,
            Some(Box::new(move |g, _nodes, grads| {
                let gp = g.permuted(&inv);
                for i in 0..gp.data.len() {
                    grads[x_id].data[i] += gp.data[i];
                }
            })),
        )
    }

    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Var {
        assert!(!parts.is_empty());
        let first = &self.nodes[parts[0].0].value.shape;
        let rank = first.len();
        let mut out_shape = first.clone();
        out_shape[axis] = parts
            .iter()
            .map(|v| self.nodes[v.0].value.shape[axis])
            .sum();
        for v in parts {
            let s = &self.nodes[v.0].value.shape;
            assert_eq!(s.len(), rank);
            for d in 0..rank {
                if d != axis {
                    assert_eq!(s[d], first[d], "concat shape mismatch on axis {d}");
                }
            }
        }
        let outer: usize = first[..axis].iter().product();
        let inner: usize = first[axis + 1..].iter().product();
        let mut out = Tensor::zeros(&out_shape);
        let mut spans = Vec::with_capacity(parts.len());
        {
            let mut offset = 0usize;
            let total_axis = out_shape[axis];
            for v in parts {
                let len = self.nodes[v.0].value.shape[axis];
                for o in 0..outer {
                    let src = &self.nodes[v.0].value.data[o * len * inner..(o + 1) * len * inner];
                    let dst_start = (o * total_axis + offset) * inner;
                    out.data[dst_start..dst_start + len * inner].copy_from_slice(src);
                }
                spans.push((v.0, offset, len));
                offset += len;
            }
        }
        let total_axis = out_shape[axis];
        self.push(
            out,
            Some(Box::new(move |g, _nodes, grads| {
                for &(id, offset, len) in &spans {
                    for o in 0..outer {
                        let src_start = (o * total_axis + offset) * inner;
                        let dst = &mut grads[id].data[o * len * inner..(o + 1) * len * inner];
                        for (d, s) in dst
                            .iter_mut()
                            .zip(&g.data[src_start..src_start + len * inner])
                        {
                            *d += s;
                        }
                    }
                }
            })),
        )
    }

    pub fn slice(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Var {
        let xv = &self.nodes[x.0].value;
        let shape = xv.shape.clone();
        assert!(start + len <= shape[axis], "slice out of range");
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 1..].iter().product();
        let axis_len = shape[axis];
        let mut out_shape = shape;
        out_shape[axis] = len;
        let mut out = Tensor::zeros(&out_shape);
        for o in 0..outer {
            let src_start = (o * axis_len + start) * inner;
            out.data[o * len * inner..(o + 1) * len * inner]
                .copy_from_slice(&xv.data[src_start..src_start + len * inner]);
        }
        let x_id = x.0;
        self.push(
            out,
            Some(Box::new(move |g, _nodes, grads| {
                for o in 0..outer {
                    let dst_start = (o * axis_len + start) * inner;
                    let dst = &mut grads[x_id].data[dst_start..dst_start + len * inner];
                    for (d, s) in dst
                        .iter_mut()
                        .zip(&g.data[o * len * inner..(o + 1) * len * inner])
                    {
                        *d += s;
                    }
                }
            })),
        )
    }

    // ── reductions and broadcasts ────────────────────────────────────

    pub fn sum_axis(&mut self, x: Var, axis: usize) -> Var {
        let xv = &self.nodes[x.0].value;
        let shape = xv.shape.clone();
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 1..].iter().product();
        let axis_len = shape[axis];
        let mut out_shape: Vec<usize> = shape[..axis].to_vec();
        out_shape.extend_from_slice(&shape[axis + 1..]);
        if out_shape.is_empty() {
            out_shape.push(1);
        }
        let mut out = Tensor::zeros(&out_shape);
        for o in 0..outer {
            for a in 0..axis_len {
                let src = &xv.data[(o * axis_len + a) * inner..(o * axis_len + a + 1) * inner];
                let dst = &mut out.data[o * inner..(o + 1) * inner];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += s;
                }
            }
        }
        let x_id = x.0;
        self.push(
            out,
            Some(Box::new(move |g, _nodes, grads| {
                for o in 0..outer {
                    for a in 0..axis_len {
                        let dst = &mut grads[x_id].data
                            [(o * axis_len + a) * inner..(o * axis_len + a + 1) * inner];
                        for (d, s) in dst.iter_mut().zip(&g.data[o * inner..(o + 1) * inner]) {
                            *d += s;
                        }
                    }
                }
            })),
        )
    }

    pub fn mean_axis(&mut self, x: Var, axis: usize) -> Var {
        let n = self.nodes[x.0].value.shape[axis];
        let s = self.sum_axis(x, axis);
        self.mul_scalar(s, 1.0 / n as f64)
    }

    pub fn sum_all(&mut self, x: Var) -> Var {
        let xv = &self.nodes[x.0].value;
        let total: f64 = xv.data.iter().sum();
        let x_id = x.0;
        self.push(
            Tensor::scalar(total),
            Some(Box::new(move |g, _nodes, grads| {
                let gv = g.data[0];
                for d in grads[x_id].data.iter_mut() {
                    *d += gv;
                }
            })),
        )
    }

    /// Stack `n` copies of `x` along a new leading axis.
    pub fn repeat_axis0(&mut self, x: Var, n: usize) -> Var {
        let xv = &self.nodes[x.0].value;
        let mut out_shape = vec![n];
        out_shape.extend_from_slice(&xv.shape);
        let len = xv.numel();
        let mut data = Vec::with_capacity(n * len);
        for _ in 0..n {
            data.extend_from_slice(&xv.data);
        }
        let x_id = x.0;
        self.push(
            Tensor::new(out_shape, data),
            Some(Box::new(move |g, _nodes, grads| {
                for r in 0..n {
                    let src = &g.data[r * len..(r + 1) * len];
                    for (d, s) in grads[x_id].data.iter_mut().zip(src) {
                        *d += s;
                    }
                }
            })),
        )
    }

    fn broadcast_last(
        &mut self,
        x: Var,
        v: Var,
        f: impl Fn(f64, f64) -> f64,
        is_mul: bool,
    ) -> Var {
        let xv = &self.nodes[x.0].value;
        let vv = &self.nodes[v.0].value;
        let c = *xv.shape.last().unwrap();
        assert_eq!(vv.numel(), c, "broadcast vector must match last axis");
        let rows = xv.numel() / c;
        let mut out = Tensor::zeros(&xv.shape);
        for r in 0..rows {
            for j in 0..c {
                out.data[r * c + j] = f(xv.data[r * c + j], vv.data[j]);
            }
        }
        let (x_id, v_id) = (x.0, v.0);
        self.push(
            out,
            Some(Box::new(move |g, nodes, grads| {
                let xv = &nodes[x_id].value.data;
                let vv = &nodes[v_id].value.data;
                for r in 0..rows {
                    for j in 0..c {
                        let gi = g.data[r * c + j];
                        if is_mul {
                            grads[x_id].data[r * c + j] += gi * vv[j];
                            grads[v_id].data[j] += gi * xv[r * c + j];
                        } else {
                            grads[x_id].data[r * c + j] += gi;
                            grads[v_id].data[j] += gi;
                        }
                    }
                }
            })),
        )
    }

    /// x + v with v broadcast across all leading axes.
    pub fn add_last(&mut self, x: Var, v: Var) -> Var {
        self.broadcast_last(x, v, |a, b| a + b, false)
    }

    /// x ⊙ v with v broadcast across all leading axes.
    pub fn mul_last(&mut self, x: Var, v: Var) -> Var {
        self.broadcast_last(x, v, |a, b| a * b, true)
    }

    // ── linear algebra ───────────────────────────────────────────────

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let av = &self.nodes[a.0].value;
        let bv = &self.nodes[b.0].value;
        assert_eq!(av.shape.len(), 2, "matmul lhs must be 2-d");
        assert_eq!(bv.shape.len(), 2, "matmul rhs must be 2-d");
        let (m, k) = (av.shape[0], av.shape[1]);
        let (k2, n) = (bv.shape[0], bv.shape[1]);
        assert_eq!(k, k2, "matmul inner dims {k} vs {k2}");
        let mut out = Tensor::zeros(&[m, n]);
        matmul_acc(&mut out.data, &av.data, &bv.data, m, k, n);
        let (a_id, b_id) = (a.0, b.0);
        self.push(
            out,
            Some(Box::new(move |g, nodes, grads| {
                let av = &nodes[a_id].value.data;
                let bv = &nodes[b_id].value.data;
                // ga += g · bᵀ, gb += aᵀ · g
                matmul_a_bt_acc(&mut grads[a_id].data, &g.data, bv, m, n, k);
                matmul_at_b_acc(&mut grads[b_id].data, av, &g.data, k, m, n);
            })),
        )
    }

    /// Apply `w: C_in×C_out` (plus bias) along the last axis of `x`.
    pub fn affine_last(&mut self, x: Var, w: Var, b: Option<Var>) -> Var {
        let in_shape = self.shape(x).to_vec();
        let c_in = *in_shape.last().unwrap();
        let c_out = self.shape(w)[1];
        assert_eq!(self.shape(w)[0], c_in, "affine_last weight mismatch");
        let rows = self.value(x).numel() / c_in;
        let flat = self.reshape(x, &[rows, c_in]);
        let mut y = self.matmul(flat, w);
        if let Some(b) = b {
            y = self.add_last(y, b);
        }
        let mut out_shape = in_shape;
        *out_shape.last_mut().unwrap() = c_out;
        self.reshape(y, &out_shape)
    }

    /// out[b] = adj · x[b] for adj: N×N, x: B×N×C.
    pub fn graph_apply(&mut self, adj: Var, x: Var) -> Var {
        let av = &self.nodes[adj.0].value;
        let xv = &self.nodes[x.0].value;
        assert_eq!(av.shape.len(), 2);
        assert_eq!(xv.shape.len(), 3);
        let n = av.shape[0];
        assert_eq!(av.shape[1], n);
        assert_eq!(xv.shape[1], n, "graph_apply node axis mismatch");
        let (bsz, c) = (xv.shape[0], xv.shape[2]);
        let mut out = Tensor::zeros(&xv.shape);
        for b in 0..bsz {
            matmul_acc(
                &mut out.data[b * n * c..(b + 1) * n * c],
                &av.data,
                &xv.data[b * n * c..(b + 1) * n * c],
                n,
                n,
                c,
            );
        }
        let (a_id, x_id) = (adj.0, x.0);
        self.push(
            out,
            Some(Box::new(move |g, nodes, grads| {
                let av = &nodes[a_id].value.data;
                let xv = &nodes[x_id].value.data;
                for b in 0..bsz {
                    let gb = &g.data[b * n * c..(b + 1) * n * c];
                    let xb = &xv[b * n * c..(b + 1) * n * c];
                    // g_adj += g_b · x_bᵀ ; g_x_b += adjᵀ · g_b
                    matmul_a_bt_acc(&mut grads[a_id].data, gb, xb, n, c, n);
                    matmul_at_b_acc(
                        &mut grads[x_id].data[b * n * c..(b + 1) * n * c],
                        av,
                        gb,
                        n,
                        n,
                        c,
                    );
                }
            })),
        )
    }

    /// 1-d convolution along the last axis of `x: B×C_in×T` with kernel
    /// `C_out×C_in×K`, symmetric zero padding, and dilation. Valid causal
    /// mode is `padding = 0`: output index t sees x[t .. t+(K−1)·dilation].
    pub fn conv1d(
        &mut self,
        x: Var,
        kernel: Var,
        bias: Option<Var>,
        dilation: usize,
        padding: usize,
    ) -> Result<Var> {
        assert!(dilation >= 1);
        let xv = &self.nodes[x.0].value;
        let kv = &self.nodes[kernel.0].value;
        assert_eq!(xv.shape.len(), 3, "conv1d input must be B×C_in×T");
        assert_eq!(kv.shape.len(), 3, "conv1d kernel must be C_out×C_in×K");
        let (bsz, c_in, t) = (xv.shape[0], xv.shape[1], xv.shape[2]);
        let (c_out, kc_in, k) = (kv.shape[0], kv.shape[1], kv.shape[2]);
        assert_eq!(c_in, kc_in, "conv1d channel mismatch");
        let span = (k - 1) * dilation;
        let t_pad = t + 2 * padding;
        if t_pad <= span {
            return Err(FcdError::Shape(format!(
                "conv1d input length {t} too short for receptive span {} (kernel {k}, dilation {dilation})",
                span + 1
            )));
        }
        let t_out = t_pad - span;
        let mut out = Tensor::zeros(&[bsz, c_out, t_out]);
        let x_at = |data: &[f64], b: usize, ci: usize, tp: isize| -> f64 {
            // tp indexes the padded signal
            let ti = tp - padding as isize;
            if ti < 0 || ti >= t as isize {
                0.0
            } else {
                data[(b * c_in + ci) * t + ti as usize]
            }
        };
        for b in 0..bsz {
            for co in 0..c_out {
                for to in 0..t_out {
                    let mut acc = 0.0;
                    for ci in 0..c_in {
                        for j in 0..k {
                            acc += x_at(&xv.data, b, ci, (to + j * dilation) as isize)
                                * kv.data[(co * c_in + ci) * k + j];
                        }
                    }
                    out.data[(b * c_out + co) * t_out + to] = acc;
                }
            }
        }
        if let Some(bias) = bias {
            let bv = &self.nodes[bias.0].value;
            assert_eq!(bv.numel(), c_out, "conv1d bias must match C_out");
            for b in 0..bsz {
                for co in 0..c_out {
                    for to in 0..t_out {
                        out.data[(b * c_out + co) * t_out + to] += bv.data[co];
                    }
                }
            }
        }
        let (x_id, k_id) = (x.0, kernel.0);
        let bias_id = bias.map(|v| v.0);
        let v = self.push(
            out,
            Some(Box::new(move |g, nodes, grads| {
                let xv = &nodes[x_id].value.data;
                let kv = &nodes[k_id].value.data;
                for b in 0..bsz {
                    for co in 0..c_out {
                        for to in 0..t_out {
                            let gi = g.data[(b * c_out + co) * t_out + to];
                            if gi == 0.0 {
                                continue;
                            }
                            if let Some(bid) = bias_id {
                                grads[bid].data[co] += gi;
                            }
                            for ci in 0..c_in {
                                for j in 0..k {
                                    let ti =
                                        (to + j * dilation) as isize - padding as isize;
                                    if ti < 0 || ti >= t as isize {
                                        continue;
                                    }
                                    let xi = (b * c_in + ci) * t + ti as usize;
                                    grads[k_id].data[(co * c_in + ci) * k + j] +=
                                        gi * xv[xi];
                                    grads[x_id].data[xi] += gi * kv[(co * c_in + ci) * k + j];
                                }
                            }
                        }
                    }
                }
            })),
        );
        Ok(v)
    }

    /// Real part of the inverse DFT along axis 1 of `N×T×F` inputs, with the
    /// 1/T normalization on the inverse. The map is linear in (re, im), so
    /// the backward pass is its exact transpose.
    pub fn ifft_real(&mut self, re: Var, im: Var) -> Var {
        let rv = &self.nodes[re.0].value;
        let iv = &self.nodes[im.0].value;
        assert_eq!(rv.shape, iv.shape, "ifft_real parts must share a shape");
        assert_eq!(rv.shape.len(), 3, "ifft_real expects N×T×F");
        let (n, t, f) = (rv.shape[0], rv.shape[1], rv.shape[2]);
        let mut cos_tab = vec![0.0; t * t];
        let mut sin_tab = vec![0.0; t * t];
        for a in 0..t {
            for b in 0..t {
                let ang = 2.0 * PI * (a * b) as f64 / t as f64;
                cos_tab[a * t + b] = ang.cos();
                sin_tab[a * t + b] = ang.sin();
            }
        }
        let inv_t = 1.0 / t as f64;
        let mut out = Tensor::zeros(&rv.shape);
        for ni in 0..n {
            for ti in 0..t {
                for fi in 0..f {
                    let mut acc = 0.0;
                    for ki in 0..t {
                        acc += rv.data[(ni * t + ki) * f + fi] * cos_tab[ti * t + ki]
                            - iv.data[(ni * t + ki) * f + fi] * sin_tab[ti * t + ki];
                    }
                    out.data[(ni * t + ti) * f + fi] = acc * inv_t;
                }
            }
        }
        let (r_id, i_id) = (re.0, im.0);
        self.push(
            out,
            Some(Box::new(move |g, _nodes, grads| {
                for ni in 0..n {
                    for ki in 0..t {
                        for fi in 0..f {
                            let mut gr = 0.0;
                            let mut gi = 0.0;
                            for ti in 0..t {
                                let gv = g.data[(ni * t + ti) * f + fi];
                                gr += gv * cos_tab[ti * t + ki];
                                gi -= gv * sin_tab[ti * t + ki];
                            }
                            grads[r_id].data[(ni * t + ki) * f + fi] += gr * inv_t;
                            grads[i_id].data[(ni * t + ki) * f + fi] += gi * inv_t;
                        }
                    }
                }
            })),
        )
    }

    // ── backward ─────────────────────────────────────────────────────

    /// Gradients of a scalar loss for every node on the tape.
    pub fn backward(&self, loss: Var) -> Result<Vec<Tensor>> {
        let lv = &self.nodes[loss.0].value;
        if !lv.is_scalar() {
            return Err(FcdError::Shape(format!(
                "backward requires a scalar loss, got shape {:?}",
                lv.shape
            )));
        }
        lv.ensure_finite("loss")?;
        let mut grads: Vec<Tensor> = self
            .nodes
            .iter()
            .map(|n| Tensor::zeros(&n.value.shape))
            .collect();
        grads[loss.0].data[0] = 1.0;
        for id in (0..=loss.0).rev() {
            if self.nodes[id].back.is_none() {
                continue;
            }
            if grads[id].data.iter().all(|&g| g == 0.0) {
                continue;
            }
            let g = std::mem::replace(&mut grads[id], Tensor::zeros(&[0]));
            if let Some(back) = &self.nodes[id].back {
                back(&g, &self.nodes, &mut grads);
            }
            grads[id] = g;
        }
        Ok(grads)
    }

    /// Gradients for every registered parameter, accumulated over reuse.
    pub fn param_grads(&self, loss: Var) -> Result<BTreeMap<String, Tensor>> {
        let grads = self.backward(loss)?;
        let mut out: BTreeMap<String, Tensor> = BTreeMap::new();
        for (name, id) in &self.params {
            let g = &grads[*id];
            match out.get_mut(name) {
                Some(acc) => {
                    for (a, b) in acc.data.iter_mut().zip(&g.data) {
                        *a += b;
                    }
                }
                None => {
                    out.insert(name.clone(), g.clone());
                }
            }
        }
        Ok(out)
    }

    /// Unnormalized strides of a var's shape (helper for callers doing
    /// manual layout math).
    pub fn strides_of(&self, v: Var) -> Vec<usize> {
        strides(self.shape(v))
    }
}
