//! Reverse-mode automatic differentiation on a flat tape.
//!
//! Everything runs in f64 so analytic gradients can be checked against
//! central finite differences to tight tolerances. A [`Graph`] owns the
//! tape; operations evaluate eagerly and record enough structure for
//! [`Graph::backward`] to walk the tape in reverse.

mod tensor;

pub use tensor::{resize_bilinear, Tensor};

/// Handle to a node on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Epsilon inside the channel-norm variance square root.
pub const NORM_EPS: f64 = 1e-5;
/// Denominator floor for min-max rescaling of near-constant maps.
pub const RESCALE_FLOOR: f64 = 1e-12;
/// Cosine clamp for the differentiable angular loss; keeps the arccos
/// derivative finite at perfect alignment.
pub const COS_CLAMP: f64 = 1.0 - 1e-7;

enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    Conv2d {
        x: Var,
        w: Var,
        b: Var,
        stride: usize,
        pad: usize,
    },
    ChannelNorm {
        x: Var,
        gamma: Var,
        beta: Var,
    },
    Linear {
        x: Var,
        w: Var,
        b: Var,
    },
    Concat(Var, Var),
    GlobalAvgPool(Var),
    MeanAll(Var),
    MaskMul {
        x: Var,
        m: Var,
    },
    Softmax(Var),
    WeightedSum {
        frames: Vec<Var>,
        weights: Var,
    },
    MinMaxRescale(Var),
    SliceChannels {
        x: Var,
        c0: usize,
    },
    StackScalars(Vec<Var>),
    Reshape(Var),
    AngularLossDeg {
        pred: Var,
        target: [f64; 3],
    },
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Gradients keyed by tape position, produced by [`Graph::backward`].
pub struct Grads {
    by_var: Vec<Option<Tensor>>,
}

impl Grads {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.by_var[v.0].as_ref()
    }

    /// Gradient of a var, or zeros if the loss does not depend on it.
    pub fn get_or_zeros(&self, v: Var, shape: &[usize]) -> Tensor {
        match self.by_var[v.0].as_ref() {
            Some(t) => t.clone(),
            None => Tensor::zeros(shape),
        }
    }
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!(ta.shape(), tb.shape(), "add shape mismatch");
        let data = ta.iter().zip(tb.iter()).map(|(x, y)| x + y).collect();
        let out = Tensor::new(ta.shape(), data);
        self.push(out, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!(ta.shape(), tb.shape(), "sub shape mismatch");
        let data = ta.iter().zip(tb.iter()).map(|(x, y)| x - y).collect();
        let out = Tensor::new(ta.shape(), data);
        self.push(out, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!(ta.shape(), tb.shape(), "mul shape mismatch");
        let data = ta.iter().zip(tb.iter()).map(|(x, y)| x * y).collect();
        let out = Tensor::new(ta.shape(), data);
        self.push(out, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let out = self.value(a).map(|v| v * k);
        self.push(out, Op::Scale(a, k))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|v| v.max(0.0));
        self.push(out, Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|v| 1.0 / (1.0 + (-v).exp()));
        self.push(out, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::tanh);
        self.push(out, Op::Tanh(a))
    }

    /// 2D convolution. `x` is (Cin,H,W), `w` is (Cout,Cin,Kh,Kw), `b` is
    /// (Cout). Zero padding, square stride.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, stride: usize, pad: usize) -> Var {
        let out = conv2d_forward(self.value(x), self.value(w), self.value(b), stride, pad);
        self.push(out, Op::Conv2d { x, w, b, stride, pad })
    }

    /// Per-channel normalization over the spatial extent with learned
    /// scale and shift; the batch-size-1 reading of batch norm, applied
    /// identically in training and evaluation.
    pub fn channel_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Var {
        let tx = self.value(x);
        assert_eq!(tx.shape().len(), 3, "channel_norm expects (C,H,W)");
        let (c, h, w) = (tx.shape()[0], tx.shape()[1], tx.shape()[2]);
        assert_eq!(self.value(gamma).shape(), &[c]);
        assert_eq!(self.value(beta).shape(), &[c]);
        let n = (h * w) as f64;
        let mut data = vec![0.0; tx.len()];
        let g = self.value(gamma).data();
        let bt = self.value(beta).data();
        for ci in 0..c {
            let sl = &tx.data()[ci * h * w..(ci + 1) * h * w];
            let mean = sl.iter().sum::<f64>() / n;
            let var = sl.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let inv = 1.0 / (var + NORM_EPS).sqrt();
            for (j, &v) in sl.iter().enumerate() {
                data[ci * h * w + j] = g[ci] * (v - mean) * inv + bt[ci];
            }
        }
        let out = Tensor::new(tx.shape(), data);
        self.push(out, Op::ChannelNorm { x, gamma, beta })
    }

    /// Dense layer: `x` is (N), `w` is (M,N), `b` is (M).
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Var {
        let (tx, tw, tb) = (self.value(x), self.value(w), self.value(b));
        let n = tx.len();
        assert_eq!(tw.shape().len(), 2);
        assert_eq!(tw.shape()[1], n, "linear input size mismatch");
        let m = tw.shape()[0];
        assert_eq!(tb.len(), m);
        let mut data = vec![0.0; m];
        for i in 0..m {
            let row = &tw.data()[i * n..(i + 1) * n];
            data[i] = tb.data()[i] + row.iter().zip(tx.iter()).map(|(a, b)| a * b).sum::<f64>();
        }
        let out = Tensor::new(&[m], data);
        self.push(out, Op::Linear { x, w, b })
    }

    pub fn concat(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!(ta.shape().len(), 1);
        assert_eq!(tb.shape().len(), 1);
        let mut data = ta.data().to_vec();
        data.extend_from_slice(tb.data());
        let out = Tensor::new(&[ta.len() + tb.len()], data);
        self.push(out, Op::Concat(a, b))
    }

    /// (C,H,W) -> (C), mean over the spatial extent.
    pub fn global_avg_pool(&mut self, x: Var) -> Var {
        let tx = self.value(x);
        assert_eq!(tx.shape().len(), 3);
        let (c, h, w) = (tx.shape()[0], tx.shape()[1], tx.shape()[2]);
        let n = (h * w) as f64;
        let data: Vec<f64> = (0..c)
            .map(|ci| tx.data()[ci * h * w..(ci + 1) * h * w].iter().sum::<f64>() / n)
            .collect();
        let out = Tensor::new(&[c], data);
        self.push(out, Op::GlobalAvgPool(x))
    }

    /// Mean over all elements, any rank -> scalar.
    pub fn mean_all(&mut self, x: Var) -> Var {
        let tx = self.value(x);
        assert!(!tx.is_empty());
        let m = tx.iter().sum::<f64>() / tx.len() as f64;
        self.push(Tensor::scalar(m), Op::MeanAll(x))
    }

    /// Broadcast-multiply a (C,H,W) map by an (H,W) mask.
    pub fn mask_mul(&mut self, x: Var, m: Var) -> Var {
        let (tx, tm) = (self.value(x), self.value(m));
        assert_eq!(tx.shape().len(), 3);
        assert_eq!(tm.shape(), &tx.shape()[1..], "mask shape mismatch");
        let (c, hw) = (tx.shape()[0], tm.len());
        let mut data = vec![0.0; tx.len()];
        for ci in 0..c {
            for j in 0..hw {
                data[ci * hw + j] = tx.data()[ci * hw + j] * tm.data()[j];
            }
        }
        let out = Tensor::new(tx.shape(), data);
        self.push(out, Op::MaskMul { x, m })
    }

    /// Softmax over a rank-1 tensor, numerically stabilized.
    pub fn softmax(&mut self, x: Var) -> Var {
        let tx = self.value(x);
        assert_eq!(tx.shape().len(), 1);
        let max = tx.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let ex: Vec<f64> = tx.iter().map(|&v| (v - max).exp()).collect();
        let sum: f64 = ex.iter().sum();
        let out = Tensor::new(tx.shape(), ex.into_iter().map(|v| v / sum).collect());
        self.push(out, Op::Softmax(x))
    }

    /// Sum of frames weighted by a (T) vector; all frames share a shape.
    pub fn weighted_sum(&mut self, frames: &[Var], weights: Var) -> Var {
        assert!(!frames.is_empty());
        let tw = self.value(weights);
        assert_eq!(tw.len(), frames.len(), "weight count mismatch");
        let shape = self.value(frames[0]).shape().to_vec();
        let mut data = vec![0.0; self.value(frames[0]).len()];
        for (t, &f) in frames.iter().enumerate() {
            let tf = self.value(f);
            assert_eq!(tf.shape(), &shape[..]);
            let wt = tw.data()[t];
            for (d, &v) in data.iter_mut().zip(tf.iter()) {
                *d += wt * v;
            }
        }
        let out = Tensor::new(&shape, data);
        self.push(
            out,
            Op::WeightedSum {
                frames: frames.to_vec(),
                weights,
            },
        )
    }

    /// Rescale to [0,1] by the min-max span. A near-constant input
    /// divides by [`RESCALE_FLOOR`] instead, mapping to ~0.
    pub fn minmax_rescale(&mut self, x: Var) -> Var {
        let tx = self.value(x);
        assert!(!tx.is_empty());
        let (lo, hi) = min_max(tx.data());
        let denom = (hi - lo).max(RESCALE_FLOOR);
        let out = tx.map(|v| (v - lo) / denom);
        self.push(out, Op::MinMaxRescale(x))
    }

    /// Channel slice of a (C,H,W) tensor: channels [c0, c1).
    pub fn slice_channels(&mut self, x: Var, c0: usize, c1: usize) -> Var {
        let tx = self.value(x);
        assert_eq!(tx.shape().len(), 3);
        let (c, h, w) = (tx.shape()[0], tx.shape()[1], tx.shape()[2]);
        assert!(c0 < c1 && c1 <= c, "bad channel slice {c0}..{c1} of {c}");
        let data = tx.data()[c0 * h * w..c1 * h * w].to_vec();
        let out = Tensor::new(&[c1 - c0, h, w], data);
        self.push(out, Op::SliceChannels { x, c0 })
    }

    /// Stack scalar nodes into a rank-1 tensor.
    pub fn stack_scalars(&mut self, xs: &[Var]) -> Var {
        assert!(!xs.is_empty());
        let data: Vec<f64> = xs
            .iter()
            .map(|&v| {
                let t = self.value(v);
                assert_eq!(t.len(), 1, "stack_scalars expects scalars");
                t.item()
            })
            .collect();
        let out = Tensor::new(&[xs.len()], data);
        self.push(out, Op::StackScalars(xs.to_vec()))
    }

    /// Same data, new shape; element count must match.
    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Var {
        let tx = self.value(x);
        assert_eq!(
            tx.len(),
            shape.iter().product::<usize>(),
            "reshape element count mismatch"
        );
        let out = Tensor::new(shape, tx.data().to_vec());
        self.push(out, Op::Reshape(x))
    }

    /// Angle in degrees between a predicted RGB vector and a fixed
    /// target, differentiable in the prediction. The cosine is clamped
    /// to +/-[`COS_CLAMP`]; the gradient is zero in the clamped region.
    pub fn angular_loss_deg(&mut self, pred: Var, target: [f64; 3]) -> Var {
        let tp = self.value(pred);
        assert_eq!(tp.len(), 3, "angular loss expects a 3-vector");
        let p = tp.data();
        let pn = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
        let tn = (target[0] * target[0] + target[1] * target[1] + target[2] * target[2]).sqrt();
        assert!(pn > 0.0 && tn > 0.0, "angular loss on zero vector");
        let cos = (p[0] * target[0] + p[1] * target[1] + p[2] * target[2]) / (pn * tn);
        let c = cos.clamp(-COS_CLAMP, COS_CLAMP);
        let deg = c.acos().to_degrees();
        self.push(Tensor::scalar(deg), Op::AngularLossDeg { pred, target })
    }

    /// Backpropagate from a scalar loss. Returns gradients for every
    /// node the loss depends on.
    pub fn backward(&self, loss: Var) -> Grads {
        assert_eq!(self.value(loss).len(), 1, "backward needs a scalar loss");
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for i in (0..=loss.0).rev() {
            let g = match grads[i].clone() {
                Some(g) => g,
                None => continue,
            };
            match &self.nodes[i].op {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, &g);
                    accumulate(&mut grads, *b, &g);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, *a, &g);
                    let neg = g.map(|v| -v);
                    accumulate(&mut grads, *b, &neg);
                }
                Op::Mul(a, b) => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    let ga = elementwise(&g, tb, |x, y| x * y);
                    let gb = elementwise(&g, ta, |x, y| x * y);
                    accumulate(&mut grads, *a, &ga);
                    accumulate(&mut grads, *b, &gb);
                }
                Op::Scale(a, k) => {
                    let ga = g.map(|v| v * k);
                    accumulate(&mut grads, *a, &ga);
                }
                Op::Relu(a) => {
                    let ta = self.value(*a);
                    let ga = elementwise(&g, ta, |gv, xv| if xv > 0.0 { gv } else { 0.0 });
                    accumulate(&mut grads, *a, &ga);
                }
                Op::Sigmoid(a) => {
                    let y = &self.nodes[i].value;
                    let ga = elementwise(&g, y, |gv, yv| gv * yv * (1.0 - yv));
                    accumulate(&mut grads, *a, &ga);
                }
                Op::Tanh(a) => {
                    let y = &self.nodes[i].value;
                    let ga = elementwise(&g, y, |gv, yv| gv * (1.0 - yv * yv));
                    accumulate(&mut grads, *a, &ga);
                }
                Op::Conv2d { x, w, b, stride, pad } => {
                    let (gx, gw, gb) =
                        conv2d_backward(self.value(*x), self.value(*w), &g, *stride, *pad);
                    accumulate(&mut grads, *x, &gx);
                    accumulate(&mut grads, *w, &gw);
                    accumulate(&mut grads, *b, &gb);
                }
                Op::ChannelNorm { x, gamma, beta } => {
                    let (gx, gg, gb) =
                        channel_norm_backward(self.value(*x), self.value(*gamma), &g);
                    accumulate(&mut grads, *x, &gx);
                    accumulate(&mut grads, *gamma, &gg);
                    accumulate(&mut grads, *beta, &gb);
                }
                Op::Linear { x, w, b } => {
                    let (tx, tw) = (self.value(*x), self.value(*w));
                    let (m, n) = (tw.shape()[0], tw.shape()[1]);
                    let mut gx = vec![0.0; n];
                    let mut gw = vec![0.0; m * n];
                    for i2 in 0..m {
                        let gi = g.data()[i2];
                        for j in 0..n {
                            gx[j] += gi * tw.data()[i2 * n + j];
                            gw[i2 * n + j] = gi * tx.data()[j];
                        }
                    }
                    accumulate(&mut grads, *x, &Tensor::new(&[n], gx));
                    accumulate(&mut grads, *w, &Tensor::new(&[m, n], gw));
                    accumulate(&mut grads, *b, &g);
                }
                Op::Concat(a, b) => {
                    let na = self.value(*a).len();
                    let ga = Tensor::new(&[na], g.data()[..na].to_vec());
                    let gb = Tensor::new(&[g.len() - na], g.data()[na..].to_vec());
                    accumulate(&mut grads, *a, &ga);
                    accumulate(&mut grads, *b, &gb);
                }
                Op::GlobalAvgPool(a) => {
                    let ta = self.value(*a);
                    let (c, h, w) = (ta.shape()[0], ta.shape()[1], ta.shape()[2]);
                    let inv = 1.0 / (h * w) as f64;
                    let mut gx = vec![0.0; ta.len()];
                    for ci in 0..c {
                        let gi = g.data()[ci] * inv;
                        for j in 0..h * w {
                            gx[ci * h * w + j] = gi;
                        }
                    }
                    accumulate(&mut grads, *a, &Tensor::new(ta.shape(), gx));
                }
                Op::MeanAll(a) => {
                    let ta = self.value(*a);
                    let gi = g.item() / ta.len() as f64;
                    accumulate(&mut grads, *a, &Tensor::full(ta.shape(), gi));
                }
                Op::MaskMul { x, m } => {
                    let (tx, tm) = (self.value(*x), self.value(*m));
                    let (c, hw) = (tx.shape()[0], tm.len());
                    let mut gx = vec![0.0; tx.len()];
                    let mut gm = vec![0.0; hw];
                    for ci in 0..c {
                        for j in 0..hw {
                            gx[ci * hw + j] = g.data()[ci * hw + j] * tm.data()[j];
                            gm[j] += g.data()[ci * hw + j] * tx.data()[ci * hw + j];
                        }
                    }
                    accumulate(&mut grads, *x, &Tensor::new(tx.shape(), gx));
                    accumulate(&mut grads, *m, &Tensor::new(tm.shape(), gm));
                }
                Op::Softmax(a) => {
                    let y = &self.nodes[i].value;
                    let dot: f64 = g.iter().zip(y.iter()).map(|(gv, yv)| gv * yv).sum();
                    let ga = elementwise(&g, y, |gv, yv| yv * (gv - dot));
                    accumulate(&mut grads, *a, &ga);
                }
                Op::WeightedSum { frames, weights } => {
                    let tw = self.value(*weights);
                    let mut gw = vec![0.0; tw.len()];
                    for (t, &f) in frames.iter().enumerate() {
                        let tf = self.value(f);
                        let wt = tw.data()[t];
                        let gf = g.map(|v| v * wt);
                        accumulate(&mut grads, f, &gf);
                        gw[t] = g.iter().zip(tf.iter()).map(|(gv, fv)| gv * fv).sum();
                    }
                    accumulate(&mut grads, *weights, &Tensor::new(tw.shape(), gw));
                }
                Op::MinMaxRescale(a) => {
                    let ta = self.value(*a);
                    let ga = minmax_rescale_backward(ta, &g);
                    accumulate(&mut grads, *a, &ga);
                }
                Op::SliceChannels { x, c0 } => {
                    let tx = self.value(*x);
                    let (h, w) = (tx.shape()[1], tx.shape()[2]);
                    let mut gx = vec![0.0; tx.len()];
                    gx[c0 * h * w..c0 * h * w + g.len()].copy_from_slice(g.data());
                    accumulate(&mut grads, *x, &Tensor::new(tx.shape(), gx));
                }
                Op::StackScalars(xs) => {
                    for (t, &v) in xs.iter().enumerate() {
                        accumulate(&mut grads, v, &Tensor::scalar(g.data()[t]));
                    }
                }
                Op::Reshape(x) => {
                    let gx = Tensor::new(self.value(*x).shape(), g.data().to_vec());
                    accumulate(&mut grads, *x, &gx);
                }
                Op::AngularLossDeg { pred, target } => {
                    let tp = self.value(*pred);
                    let ga = angular_loss_backward(tp.data(), *target, g.item());
                    accumulate(&mut grads, *pred, &ga);
                }
            }
        }
        Grads { by_var: grads }
    }
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, contribution: &Tensor) {
    match &mut grads[v.0] {
        Some(existing) => {
            debug_assert_eq!(existing.shape(), contribution.shape());
            for (e, c) in existing.data_mut().iter_mut().zip(contribution.iter()) {
                *e += c;
            }
        }
        slot @ None => *slot = Some(contribution.clone()),
    }
}

fn elementwise(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    debug_assert_eq!(a.shape(), b.shape());
    Tensor::new(
        a.shape(),
        a.iter().zip(b.iter()).map(|(&x, &y)| f(x, y)).collect(),
    )
}

fn min_max(data: &[f64]) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in data {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    (lo, hi)
}

fn conv2d_forward(x: &Tensor, w: &Tensor, b: &Tensor, stride: usize, pad: usize) -> Tensor {
    assert_eq!(x.shape().len(), 3, "conv input must be (C,H,W)");
    assert_eq!(w.shape().len(), 4, "conv kernel must be (Cout,Cin,Kh,Kw)");
    let (cin, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (cout, kin, kh, kw) = (w.shape()[0], w.shape()[1], w.shape()[2], w.shape()[3]);
    assert_eq!(cin, kin, "conv channel mismatch");
    assert_eq!(b.len(), cout);
    assert!(stride >= 1);
    assert!(h + 2 * pad >= kh && wd + 2 * pad >= kw, "kernel larger than padded input");
    let ho = (h + 2 * pad - kh) / stride + 1;
    let wo = (wd + 2 * pad - kw) / stride + 1;
    let mut out = vec![0.0; cout * ho * wo];
    for co in 0..cout {
        for oy in 0..ho {
            for ox in 0..wo {
                let mut acc = b.data()[co];
                for ci in 0..cin {
                    for ky in 0..kh {
                        let iy = (oy * stride + ky) as isize - pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let xrow = (ci * h + iy as usize) * wd;
                        let wrow = ((co * cin + ci) * kh + ky) * kw;
                        for kx in 0..kw {
                            let ix = (ox * stride + kx) as isize - pad as isize;
                            if ix < 0 || ix >= wd as isize {
                                continue;
                            }
                            acc += x.data()[xrow + ix as usize] * w.data()[wrow + kx];
                        }
                    }
                }
                out[(co * ho + oy) * wo + ox] = acc;
            }
        }
    }
    Tensor::new(&[cout, ho, wo], out)
}

fn conv2d_backward(
    x: &Tensor,
    w: &Tensor,
    g: &Tensor,
    stride: usize,
    pad: usize,
) -> (Tensor, Tensor, Tensor) {
    let (cin, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (cout, _, kh, kw) = (w.shape()[0], w.shape()[1], w.shape()[2], w.shape()[3]);
    let (ho, wo) = (g.shape()[1], g.shape()[2]);
    let mut gx = vec![0.0; x.len()];
    let mut gw = vec![0.0; w.len()];
    let mut gb = vec![0.0; cout];
    for co in 0..cout {
        for oy in 0..ho {
            for ox in 0..wo {
                let gv = g.data()[(co * ho + oy) * wo + ox];
                gb[co] += gv;
                for ci in 0..cin {
                    for ky in 0..kh {
                        let iy = (oy * stride + ky) as isize - pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let xrow = (ci * h + iy as usize) * wd;
                        let wrow = ((co * cin + ci) * kh + ky) * kw;
                        for kx in 0..kw {
                            let ix = (ox * stride + kx) as isize - pad as isize;
                            if ix < 0 || ix >= wd as isize {
                                continue;
                            }
                            gx[xrow + ix as usize] += gv * w.data()[wrow + kx];
                            gw[wrow + kx] += gv * x.data()[xrow + ix as usize];
                        }
                    }
                }
            }
        }
    }
    (
        Tensor::new(x.shape(), gx),
        Tensor::new(w.shape(), gw),
        Tensor::new(&[cout], gb),
    )
}

fn channel_norm_backward(x: &Tensor, gamma: &Tensor, g: &Tensor) -> (Tensor, Tensor, Tensor) {
    let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let n = (h * w) as f64;
    let mut gx = vec![0.0; x.len()];
    let mut gg = vec![0.0; c];
    let mut gb = vec![0.0; c];
    for ci in 0..c {
        let sl = &x.data()[ci * h * w..(ci + 1) * h * w];
        let gsl = &g.data()[ci * h * w..(ci + 1) * h * w];
        let mean = sl.iter().sum::<f64>() / n;
        let var = sl.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let inv = 1.0 / (var + NORM_EPS).sqrt();
        let xhat: Vec<f64> = sl.iter().map(|&v| (v - mean) * inv).collect();
        gb[ci] = gsl.iter().sum();
        gg[ci] = gsl.iter().zip(&xhat).map(|(gv, xv)| gv * xv).sum();
        let gxhat_mean = gsl.iter().sum::<f64>() * gamma.data()[ci] / n;
        let gxhat_xhat_mean = gsl
            .iter()
            .zip(&xhat)
            .map(|(gv, xv)| gv * gamma.data()[ci] * xv)
            .sum::<f64>()
            / n;
        for j in 0..h * w {
            let gxhat = gsl[j] * gamma.data()[ci];
            gx[ci * h * w + j] = inv * (gxhat - gxhat_mean - xhat[j] * gxhat_xhat_mean);
        }
    }
    (
        Tensor::new(x.shape(), gx),
        Tensor::new(&[c], gg),
        Tensor::new(&[c], gb),
    )
}

fn minmax_rescale_backward(x: &Tensor, g: &Tensor) -> Tensor {
    let (lo, hi) = min_max(x.data());
    let span = hi - lo;
    let amin = x.iter().position(|&v| v == lo).unwrap();
    let mut gx: Vec<f64>;
    if span < RESCALE_FLOOR {
        gx = g.iter().map(|&gv| gv / RESCALE_FLOOR).collect();
        let s: f64 = g.iter().sum();
        gx[amin] -= s / RESCALE_FLOOR;
    } else {
        let amax = x.iter().position(|&v| v == hi).unwrap();
        let s: f64 = g.iter().sum();
        let p: f64 = g.iter().zip(x.iter()).map(|(gv, xv)| gv * (xv - lo)).sum();
        gx = g.iter().map(|&gv| gv / span).collect();
        gx[amin] -= s / span;
        gx[amax] -= p / (span * span);
        gx[amin] += p / (span * span);
    }
    Tensor::new(x.shape(), gx)
}

fn angular_loss_backward(p: &[f64], target: [f64; 3], gout: f64) -> Tensor {
    let tn = (target[0] * target[0] + target[1] * target[1] + target[2] * target[2]).sqrt();
    let t = [target[0] / tn, target[1] / tn, target[2] / tn];
    let pn = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
    let dot = p[0] * t[0] + p[1] * t[1] + p[2] * t[2];
    let cos = dot / pn;
    if cos.abs() >= COS_CLAMP {
        return Tensor::zeros(&[3]);
    }
    let dacos = -1.0 / (1.0 - cos * cos).sqrt() * (180.0 / std::f64::consts::PI);
    let mut gx = [0.0; 3];
    for j in 0..3 {
        let dcos = t[j] / pn - dot * p[j] / (pn * pn * pn);
        gx[j] = gout * dacos * dcos;
    }
    Tensor::new(&[3], gx.to_vec())
}

/// Central-difference gradient of a scalar function of one tensor,
/// used by tests to validate analytic gradients.
pub fn central_diff(x: &Tensor, mut f: impl FnMut(&Tensor) -> f64, h: f64) -> Tensor {
    let mut grad = Tensor::zeros(x.shape());
    let mut xp = x.clone();
    for i in 0..x.len() {
        let orig = x.data()[i];
        let step = h * orig.abs().max(1.0);
        xp.data_mut()[i] = orig + step;
        let fp = f(&xp);
        xp.data_mut()[i] = orig - step;
        let fm = f(&xp);
        xp.data_mut()[i] = orig;
        grad.data_mut()[i] = (fp - fm) / (2.0 * step);
    }
    grad
}

/// Largest elementwise relative error between two gradients, with a
/// small-denominator guard.
pub fn max_rel_err(a: &Tensor, b: &Tensor) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.iter()
        .zip(b.iter())
        .map(|(&x, &y)| (x - y).abs() / x.abs().max(y.abs()).max(1e-6))
        .fold(0.0, f64::max)
}
