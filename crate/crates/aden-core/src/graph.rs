//! Reverse-mode automatic differentiation over rank-3 arrays.
//!
//! A [`Graph`] is a dynamically recorded tape: every operation pushes a
//! node holding its output values and a record of its inputs, and
//! [`Graph::backward`] replays the tape in reverse, accumulating adjoints
//! into each node's gradient buffer. Node creation order is the
//! topological order, so the reverse sweep visits every node exactly
//! once per backward call.
//!
//! The intended lifecycle is one graph per forward/backward cycle:
//! record, call `backward` on a scalar loss, read gradients off the
//! leaves, then drop the graph. Parameters persist outside the graph and
//! are re-registered as leaves each pass.

use crate::conv::{self, conv_output_len, GatherSpec};
use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

/// Handle to a node on the tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Conv { x: Var, w: Var, b: Var, dilation: usize, pad: usize },
    Deconv { x: Var, w: Var, b: Var, dilation: usize },
    Dense { x: Var, w: Var, b: Var },
    Relu { x: Var },
    Sigmoid { x: Var },
    Ln { x: Var },
    Clamp { x: Var, lo: f64, hi: f64 },
    Affine { x: Var, scale: f64, shift: f64 },
    Add { a: Var, b: Var },
    Mse { a: Var, b: Var },
    MeanAll { x: Var },
    SumAll { x: Var },
}

struct Node {
    value: Tensor,
    grad: Option<Vec<f64>>,
    op: Op,
}

/// Recording tape plus value/gradient storage.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, grad: None, op });
        Var(self.nodes.len() - 1)
    }

    /// Register a leaf holding `value`.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    /// New leaf sharing `v`'s values; gradients do not flow past it.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.nodes[v.0].value.clone();
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Accumulated gradient of `v` after `backward`; `None` means no
    /// gradient reached it (i.e. the gradient is zero).
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].grad.as_deref()
    }

    fn add_grad(&mut self, v: Var, delta: &[f64]) {
        let node = &mut self.nodes[v.0];
        match &mut node.grad {
            Some(g) => {
                for (acc, d) in g.iter_mut().zip(delta) {
                    *acc += d;
                }
            }
            None => node.grad = Some(delta.to_vec()),
        }
    }

    // ---- operator recording ----

    fn check_conv_operands(&self, x: Var, w: Var, b: Var, dilation: usize) -> Result<(Shape, Shape)> {
        if dilation < 1 {
            return Err(Error::Shape(format!("dilation must be >= 1, got {dilation}")));
        }
        let xs = self.nodes[x.0].value.shape();
        let ws = self.nodes[w.0].value.shape();
        if ws.len % 2 == 0 {
            return Err(Error::Shape(format!("kernel size must be odd, got {}", ws.len)));
        }
        if xs.channels != ws.channels {
            return Err(Error::Shape(format!(
                "input has {} channels but kernel expects {}",
                xs.channels, ws.channels
            )));
        }
        let bs = self.nodes[b.0].value.shape();
        if bs != Shape::new(1, ws.batch, 1) {
            return Err(Error::Shape(format!(
                "bias shape {} does not match (1, {}, 1)",
                bs, ws.batch
            )));
        }
        Ok((xs, ws))
    }

    /// Dilated convolution, zero padded by `pad` on both sides. With
    /// `pad = dilation * (kernel - 1) / 2` the output keeps the input
    /// length.
    pub fn conv1d_dilated(&mut self, x: Var, w: Var, b: Var, dilation: usize, pad: usize) -> Result<Var> {
        let (xs, ws) = self.check_conv_operands(x, w, b, dilation)?;
        let lout = conv_output_len(xs.len, ws.len, dilation, pad).ok_or_else(|| {
            Error::Shape(format!(
                "kernel span {} exceeds padded input length {}",
                dilation * (ws.len - 1),
                xs.len + 2 * pad
            ))
        })?;
        let y = conv::forward(
            self.nodes[x.0].value.data(),
            xs,
            self.nodes[w.0].value.data(),
            ws,
            self.nodes[b.0].value.data(),
            GatherSpec::conv(dilation, pad),
            lout,
        );
        let value = Tensor::from_vec(Shape::new(xs.batch, ws.batch, lout), y)?;
        Ok(self.push(value, Op::Conv { x, w, b, dilation, pad }))
    }

    /// Dilated deconvolution (transposed counterpart of
    /// [`Graph::conv1d_dilated`]); output is centered so that the kernel
    /// `[0, 1, 0]` is the identity, and the output length equals the
    /// input length.
    pub fn deconv1d_dilated(&mut self, x: Var, w: Var, b: Var, dilation: usize) -> Result<Var> {
        let (xs, ws) = self.check_conv_operands(x, w, b, dilation)?;
        let y = conv::forward(
            self.nodes[x.0].value.data(),
            xs,
            self.nodes[w.0].value.data(),
            ws,
            self.nodes[b.0].value.data(),
            GatherSpec::deconv(dilation, ws.len),
            xs.len,
        );
        let value = Tensor::from_vec(Shape::new(xs.batch, ws.batch, xs.len), y)?;
        Ok(self.push(value, Op::Deconv { x, w, b, dilation }))
    }

    /// Affine map `W x + b` over the length axis: `x` is `(B, 1, F)`,
    /// `w` is `(1, O, F)`, `b` is `(1, O, 1)`, output `(B, 1, O)`.
    pub fn dense(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let xs = self.nodes[x.0].value.shape();
        let ws = self.nodes[w.0].value.shape();
        let bs = self.nodes[b.0].value.shape();
        if xs.channels != 1 || ws.batch != 1 {
            return Err(Error::Shape(format!(
                "dense expects x (B, 1, F) and w (1, O, F), got x {} w {}",
                xs, ws
            )));
        }
        if xs.len != ws.len {
            return Err(Error::Shape(format!(
                "dense input dimension {} does not match weight input dimension {}",
                xs.len, ws.len
            )));
        }
        if bs != Shape::new(1, ws.channels, 1) {
            return Err(Error::Shape(format!("bias shape {} does not match (1, {}, 1)", bs, ws.channels)));
        }
        let (nb, nf, no) = (xs.batch, xs.len, ws.channels);
        let xv = self.nodes[x.0].value.data();
        let wv = self.nodes[w.0].value.data();
        let bv = self.nodes[b.0].value.data();
        let mut y = vec![0.0; nb * no];
        unsafe {
            matrixmultiply::dgemm(
                nb, nf, no, 1.0,
                xv.as_ptr(), nf as isize, 1,
                wv.as_ptr(), 1, nf as isize,
                0.0,
                y.as_mut_ptr(), no as isize, 1,
            );
        }
        for row in y.chunks_exact_mut(no) {
            for (v, add) in row.iter_mut().zip(bv) {
                *v += add;
            }
        }
        let value = Tensor::from_vec(Shape::new(nb, 1, no), y)?;
        Ok(self.push(value, Op::Dense { x, w, b }))
    }

    /// Elementwise `max(0, x)`; the subgradient at exactly 0 is 0.
    pub fn relu(&mut self, x: Var) -> Var {
        let value = self.map_unary(x, |v| if v > 0.0 { v } else { 0.0 });
        self.push(value, Op::Relu { x })
    }

    /// Elementwise logistic function, stable over the full f64 range.
    pub fn sigmoid(&mut self, x: Var) -> Var {
        let value = self.map_unary(x, stable_sigmoid);
        self.push(value, Op::Sigmoid { x })
    }

    /// Elementwise natural logarithm.
    pub fn ln(&mut self, x: Var) -> Var {
        let value = self.map_unary(x, f64::ln);
        self.push(value, Op::Ln { x })
    }

    /// Elementwise clamp to `[lo, hi]`; gradient passes only strictly
    /// inside the interval.
    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Var {
        let value = self.map_unary(x, |v| v.clamp(lo, hi));
        self.push(value, Op::Clamp { x, lo, hi })
    }

    /// Elementwise `scale * x + shift`.
    pub fn affine(&mut self, x: Var, scale: f64, shift: f64) -> Var {
        let value = self.map_unary(x, |v| scale * v + shift);
        self.push(value, Op::Affine { x, scale, shift })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.nodes[a.0].value.shape(), self.nodes[b.0].value.shape());
        if sa != sb {
            return Err(Error::Shape(format!("add shapes differ: {} vs {}", sa, sb)));
        }
        let data: Vec<f64> = self.nodes[a.0]
            .value
            .data()
            .iter()
            .zip(self.nodes[b.0].value.data())
            .map(|(x, y)| x + y)
            .collect();
        let value = Tensor::from_vec(sa, data)?;
        Ok(self.push(value, Op::Add { a, b }))
    }

    /// Mean squared error over every element; scalar output.
    pub fn mse(&mut self, pred: Var, target: Var) -> Result<Var> {
        let (sa, sb) = (self.nodes[pred.0].value.shape(), self.nodes[target.0].value.shape());
        if sa != sb {
            return Err(Error::Shape(format!("mse shapes differ: {} vs {}", sa, sb)));
        }
        let n = sa.numel() as f64;
        let sum: f64 = self.nodes[pred.0]
            .value
            .data()
            .iter()
            .zip(self.nodes[target.0].value.data())
            .map(|(p, t)| (p - t) * (p - t))
            .sum();
        Ok(self.push(Tensor::scalar(sum / n), Op::Mse { a: pred, b: target }))
    }

    /// Mean over every element; scalar output.
    pub fn mean_all(&mut self, x: Var) -> Var {
        let t = &self.nodes[x.0].value;
        let mean = t.data().iter().sum::<f64>() / t.shape().numel() as f64;
        self.push(Tensor::scalar(mean), Op::MeanAll { x })
    }

    /// Sum over every element; scalar output.
    pub fn sum_all(&mut self, x: Var) -> Var {
        let sum = self.nodes[x.0].value.data().iter().sum::<f64>();
        self.push(Tensor::scalar(sum), Op::SumAll { x })
    }

    /// Region code of every kinked activation on the tape (ReLU input
    /// signs, clamp regions), in recording order. Two forward passes of
    /// the same computation are C^1-connected only if their witnesses
    /// agree, which is what a central difference needs to be valid.
    pub fn kink_witness(&self) -> Vec<i8> {
        let mut out = Vec::new();
        for node in &self.nodes {
            match node.op {
                Op::Relu { x } => {
                    out.extend(self.nodes[x.0].value.data().iter().map(|v| i8::from(*v > 0.0)));
                }
                Op::Clamp { x, lo, hi } => {
                    out.extend(self.nodes[x.0].value.data().iter().map(|v| {
                        if *v <= lo {
                            -1
                        } else if *v >= hi {
                            1
                        } else {
                            0
                        }
                    }));
                }
                _ => {}
            }
        }
        out
    }

    fn map_unary(&self, x: Var, f: impl Fn(f64) -> f64) -> Tensor {
        let t = &self.nodes[x.0].value;
        Tensor::from_vec(t.shape(), t.data().iter().map(|v| f(*v)).collect())
            .expect("unary map preserves shape")
    }

    // ---- backward ----

    /// Reverse sweep seeding `d loss / d loss = 1`. Gradients accumulate
    /// additively across fan-out; leaves never reached keep a zero
    /// (absent) gradient.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if !self.nodes[loss.0].value.shape().is_scalar() {
            return Err(Error::Shape(format!(
                "backward requires a scalar loss, got shape {}",
                self.nodes[loss.0].value.shape()
            )));
        }
        self.nodes[loss.0].grad = Some(vec![1.0]);
        for id in (0..self.nodes.len()).rev() {
            let Some(gy) = self.nodes[id].grad.clone() else { continue };
            let op = self.nodes[id].op.clone();
            match op {
                Op::Leaf => {}
                Op::Conv { x, w, b, dilation, pad } => {
                    let ws = self.nodes[w.0].value.shape();
                    let spec = GatherSpec::conv(dilation, pad);
                    self.conv_like_backward(x, w, b, &gy, spec, ws.len, id);
                }
                Op::Deconv { x, w, b, dilation } => {
                    let ws = self.nodes[w.0].value.shape();
                    let spec = GatherSpec::deconv(dilation, ws.len);
                    self.conv_like_backward(x, w, b, &gy, spec, ws.len, id);
                }
                Op::Dense { x, w, b } => {
                    let xs = self.nodes[x.0].value.shape();
                    let ws = self.nodes[w.0].value.shape();
                    let (nb, nf, no) = (xs.batch, xs.len, ws.channels);
                    let xv = self.nodes[x.0].value.data();
                    let wv = self.nodes[w.0].value.data();
                    let mut dx = vec![0.0; nb * nf];
                    let mut dw = vec![0.0; no * nf];
                    unsafe {
                        // dx = gy . w  (B,O)x(O,F)
                        matrixmultiply::dgemm(
                            nb, no, nf, 1.0,
                            gy.as_ptr(), no as isize, 1,
                            wv.as_ptr(), nf as isize, 1,
                            0.0,
                            dx.as_mut_ptr(), nf as isize, 1,
                        );
                        // dw = gy^T . x  (O,B)x(B,F)
                        matrixmultiply::dgemm(
                            no, nb, nf, 1.0,
                            gy.as_ptr(), 1, no as isize,
                            xv.as_ptr(), nf as isize, 1,
                            0.0,
                            dw.as_mut_ptr(), nf as isize, 1,
                        );
                    }
                    let mut db = vec![0.0; no];
                    for row in gy.chunks_exact(no) {
                        for (acc, g) in db.iter_mut().zip(row) {
                            *acc += g;
                        }
                    }
                    self.add_grad(x, &dx);
                    self.add_grad(w, &dw);
                    self.add_grad(b, &db);
                }
                Op::Relu { x } => {
                    let dx: Vec<f64> = self.nodes[x.0]
                        .value
                        .data()
                        .iter()
                        .zip(&gy)
                        .map(|(v, g)| if *v > 0.0 { *g } else { 0.0 })
                        .collect();
                    self.add_grad(x, &dx);
                }
                Op::Sigmoid { x } => {
                    let dx: Vec<f64> = self.nodes[id]
                        .value
                        .data()
                        .iter()
                        .zip(&gy)
                        .map(|(s, g)| g * s * (1.0 - s))
                        .collect();
                    self.add_grad(x, &dx);
                }
                Op::Ln { x } => {
                    let dx: Vec<f64> = self.nodes[x.0]
                        .value
                        .data()
                        .iter()
                        .zip(&gy)
                        .map(|(v, g)| g / v)
                        .collect();
                    self.add_grad(x, &dx);
                }
                Op::Clamp { x, lo, hi } => {
                    let dx: Vec<f64> = self.nodes[x.0]
                        .value
                        .data()
                        .iter()
                        .zip(&gy)
                        .map(|(v, g)| if *v > lo && *v < hi { *g } else { 0.0 })
                        .collect();
                    self.add_grad(x, &dx);
                }
                Op::Affine { x, scale, .. } => {
                    let dx: Vec<f64> = gy.iter().map(|g| scale * g).collect();
                    self.add_grad(x, &dx);
                }
                Op::Add { a, b } => {
                    self.add_grad(a, &gy);
                    self.add_grad(b, &gy);
                }
                Op::Mse { a, b } => {
                    let n = self.nodes[a.0].value.shape().numel() as f64;
                    let g0 = gy[0];
                    let da: Vec<f64> = self.nodes[a.0]
                        .value
                        .data()
                        .iter()
                        .zip(self.nodes[b.0].value.data())
                        .map(|(p, t)| 2.0 * (p - t) / n * g0)
                        .collect();
                    let db: Vec<f64> = da.iter().map(|v| -v).collect();
                    self.add_grad(a, &da);
                    self.add_grad(b, &db);
                }
                Op::MeanAll { x } => {
                    let n = self.nodes[x.0].value.shape().numel();
                    let dx = vec![gy[0] / n as f64; n];
                    self.add_grad(x, &dx);
                }
                Op::SumAll { x } => {
                    let n = self.nodes[x.0].value.shape().numel();
                    let dx = vec![gy[0]; n];
                    self.add_grad(x, &dx);
                }
            }
        }
        Ok(())
    }

    fn conv_like_backward(
        &mut self,
        x: Var,
        w: Var,
        b: Var,
        gy: &[f64],
        spec: GatherSpec,
        _kernel: usize,
        out_id: usize,
    ) {
        let xs = self.nodes[x.0].value.shape();
        let ws = self.nodes[w.0].value.shape();
        let lout = self.nodes[out_id].value.shape().len;
        let (dx, dw, db) = conv::backward(
            self.nodes[x.0].value.data(),
            xs,
            self.nodes[w.0].value.data(),
            ws,
            gy,
            spec,
            lout,
        );
        self.add_grad(x, &dx);
        self.add_grad(w, &dw);
        self.add_grad(b, &db);
    }
}

fn stable_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn signal_leaf(g: &mut Graph, values: &[f64]) -> Var {
        g.leaf(Tensor::from_signal(values).unwrap())
    }

    fn bias_zero(g: &mut Graph, co: usize) -> Var {
        g.leaf(Tensor::zeros(Shape::new(1, co, 1)))
    }

    #[test]
    fn conv_identity_kernel_keeps_signal() {
        let mut g = Graph::new();
        let x = signal_leaf(&mut g, &[0.5, -1.5, 2.0, 0.0, 3.25]);
        let w = signal_leaf(&mut g, &[0.0, 1.0, 0.0]);
        let b = bias_zero(&mut g, 1);
        let y = g.conv1d_dilated(x, w, b, 1, 1).unwrap();
        assert_eq!(g.value(y).data(), g.value(x).data());
    }

    #[test]
    fn conv_rejects_bad_operands() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::zeros(Shape::new(1, 2, 5)));
        let w = g.leaf(Tensor::zeros(Shape::new(4, 3, 3)));
        let b = bias_zero(&mut g, 4);
        assert!(matches!(g.conv1d_dilated(x, w, b, 1, 1), Err(Error::Shape(_))));
        let w2 = g.leaf(Tensor::zeros(Shape::new(4, 2, 3)));
        let b2 = bias_zero(&mut g, 4);
        assert!(matches!(g.conv1d_dilated(x, w2, b2, 0, 1), Err(Error::Shape(_))));
        assert!(g.conv1d_dilated(x, w2, b2, 1, 1).is_ok());
    }

    #[test]
    fn dense_identity_and_affine() {
        let mut g = Graph::new();
        let x = signal_leaf(&mut g, &[1.0, 2.0]);
        let w = g.leaf(Tensor::from_vec(Shape::new(1, 2, 2), vec![1.0, 0.0, 0.0, 1.0]).unwrap());
        let b = bias_zero(&mut g, 2);
        let y = g.dense(x, w, b).unwrap();
        assert_eq!(g.value(y).data(), &[1.0, 2.0]);

        let w2 = g.leaf(Tensor::from_vec(Shape::new(1, 1, 2), vec![1.0, 1.0]).unwrap());
        let b2 = g.leaf(Tensor::from_vec(Shape::new(1, 1, 1), vec![0.5]).unwrap());
        let y2 = g.dense(x, w2, b2).unwrap();
        assert_eq!(g.value(y2).data(), &[3.5]);
    }

    #[test]
    fn relu_and_sigmoid_values() {
        let mut g = Graph::new();
        let x = signal_leaf(&mut g, &[-1.0, 0.0, 2.0]);
        let r = g.relu(x);
        assert_eq!(g.value(r).data(), &[0.0, 0.0, 2.0]);

        let z = signal_leaf(&mut g, &[0.0]);
        let s = g.sigmoid(z);
        assert_eq!(g.value(s).data(), &[0.5]);

        // 1 - sigmoid(-x) == sigmoid(x), and extreme inputs stay finite.
        for v in [-700.0, -3.2, 0.0, 1.7, 700.0] {
            let s = stable_sigmoid(v);
            assert!(s.is_finite());
            assert!((s - (1.0 - stable_sigmoid(-v))).abs() < 1e-15);
        }
    }

    #[test]
    fn mse_values() {
        let mut g = Graph::new();
        let a = signal_leaf(&mut g, &[0.0]);
        let b = signal_leaf(&mut g, &[2.0]);
        assert_eq!(g.mse(a, b).map(|v| g.value(v).item()).unwrap(), 4.0);

        let a = signal_leaf(&mut g, &[1.0, 3.0]);
        let b = signal_leaf(&mut g, &[1.0, 1.0]);
        assert_eq!(g.mse(a, b).map(|v| g.value(v).item()).unwrap(), 2.0);

        let c = signal_leaf(&mut g, &[1.0, 2.0, 3.0]);
        let same = g.mse(c, c).unwrap();
        assert_eq!(g.value(same).item(), 0.0);

        let short = signal_leaf(&mut g, &[1.0]);
        assert!(matches!(g.mse(a, short), Err(Error::Shape(_))));
    }

    #[test]
    fn backward_requires_scalar() {
        let mut g = Graph::new();
        let x = signal_leaf(&mut g, &[1.0, 2.0]);
        assert!(matches!(g.backward(x), Err(Error::Shape(_))));
    }

    #[test]
    fn backward_mse_at_minimum_is_zero() {
        let mut g = Graph::new();
        let x = signal_leaf(&mut g, &[1.0, -2.0, 0.5]);
        let target = g.detach(x);
        let loss = g.mse(x, target).unwrap();
        g.backward(loss).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn backward_conv_weight_gradient_is_input_sum() {
        // d sum(conv(x, w)) / d w[j] = sum_t x[t + d*(j-1)] for r = 3.
        let xv = [1.0, 2.0, 3.0, 4.0, 5.0];
        for d in [1usize, 2] {
            let mut g = Graph::new();
            let x = signal_leaf(&mut g, &xv);
            let w = signal_leaf(&mut g, &[0.3, -0.7, 0.2]);
            let b = bias_zero(&mut g, 1);
            let y = g.conv1d_dilated(x, w, b, d, d).unwrap();
            let loss = g.sum_all(y);
            g.backward(loss).unwrap();
            let dw = g.grad(w).unwrap();
            for j in 0..3 {
                let expect: f64 = (0..5)
                    .filter_map(|t| {
                        let src = t as isize + d as isize * (j as isize - 1);
                        (src >= 0 && src < 5).then(|| xv[src as usize])
                    })
                    .sum();
                assert!((dw[j] - expect).abs() < 1e-12, "d={d} j={j}: {} vs {expect}", dw[j]);
            }
        }
    }

    #[test]
    fn gradients_accumulate_across_fanout() {
        let mut g = Graph::new();
        let x = signal_leaf(&mut g, &[3.0]);
        let doubled = g.add(x, x).unwrap();
        let tripled = g.add(doubled, x).unwrap();
        let loss = g.sum_all(tripled);
        g.backward(loss).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[3.0]);
    }

    #[test]
    fn detach_blocks_gradients() {
        let mut g = Graph::new();
        let x = signal_leaf(&mut g, &[1.0, 2.0]);
        let d = g.detach(x);
        let loss = g.sum_all(d);
        g.backward(loss).unwrap();
        assert!(g.grad(x).is_none());
        assert_eq!(g.grad(d).unwrap(), &[1.0, 1.0]);
    }

    #[test]
    fn conv_is_linear_in_input() {
        let (a, b) = (1.7, -0.4);
        let x1 = [0.2, -1.0, 0.7, 1.5];
        let x2 = [1.1, 0.3, -0.6, 0.0];
        let mixed: Vec<f64> = x1.iter().zip(&x2).map(|(p, q)| a * p + b * q).collect();
        let wv = [0.5, -0.25, 1.0];

        let run = |xv: &[f64]| {
            let mut g = Graph::new();
            let x = signal_leaf(&mut g, xv);
            let w = signal_leaf(&mut g, &wv);
            let bias = bias_zero(&mut g, 1);
            let y = g.conv1d_dilated(x, w, bias, 2, 2).unwrap();
            g.value(y).data().to_vec()
        };
        let lhs = run(&mixed);
        let (y1, y2) = (run(&x1), run(&x2));
        for i in 0..lhs.len() {
            assert!((lhs[i] - (a * y1[i] + b * y2[i])).abs() < 1e-12);
        }
    }
}
