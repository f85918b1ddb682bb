//! Define-by-run reverse-mode differentiation.
//!
//! Every operation evaluates eagerly and appends a node to the [`Tape`].
//! [`Tape::backward`] then walks the nodes in reverse, accumulating
//! gradients for every node that depends on a differentiable leaf.

use std::sync::atomic::{AtomicU64, Ordering};

use super::conv::{col2im, conv_backward, conv_forward, im2col, ConvGeom};
use crate::error::{HgnError, Result};
use crate::geometry::{recon_jacobian, reconstruct_gaze, NUM_LANDMARKS};
use crate::heatmap::{sign, soft_argmax_backward, softmax_channel, spatial_softmax_backward};
use crate::losses::uncertainty_gaze_loss;
use crate::scalar::Real;

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

/// Dense row-major array.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(HgnError::Contract(format!(
                "tensor shape {shape:?} needs {n} values, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self { shape, data: vec![T::zero(); n] }
    }

    pub fn scalar(v: T) -> Self {
        Self { shape: vec![1], data: vec![v] }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Handle to a node on a specific tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var {
    tape: u64,
    index: usize,
}

enum Op<T> {
    Constant,
    Leaf { param: Option<usize> },
    Conv2d { x: Var, w: Var, b: Var, geom: ConvGeom, cols: Vec<T> },
    Relu(Var),
    Upsample2 { x: Var },
    Concat(Var, Var),
    GlobalAvgPool(Var),
    Linear { x: Var, w: Var, b: Var },
    Softplus(Var),
    AddScalar(Var),
    Scale(Var, T),
    Sum(Var),
    SpatialSoftmax(Var),
    SoftArgmax { x: Var, scale: T },
    Reconstruct { points: Var, radius: Var, jac: [[T; 5]; 2] },
    AbsDiff { x: Var, target: Vec<T> },
    L1 { x: Var, target: Vec<T> },
    Uncertainty { residual: Var, alpha: Var, grad_residual: [T; 2], grad_alpha: [T; 2] },
    WeightedSum(Vec<(Var, T)>),
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Recorded computation of one forward pass.
pub struct Tape<T> {
    id: u64,
    nodes: Vec<Node<T>>,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self { id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed), nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn check(&self, v: Var) -> Result<&Node<T>> {
        if v.tape != self.id || v.index >= self.nodes.len() {
            return Err(HgnError::Usage("variable does not belong to this tape".into()));
        }
        Ok(&self.nodes[v.index])
    }

    fn node(&self, v: Var) -> &Node<T> {
        &self.nodes[v.index]
    }

    pub fn value(&self, v: Var) -> Result<&Tensor<T>> {
        Ok(&self.check(v)?.value)
    }

    /// First element of a node, for scalar outputs.
    pub fn scalar(&self, v: Var) -> Result<T> {
        Ok(self.check(v)?.value.data[0])
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Result<Var> {
        if let Some(i) = value.data.iter().position(|x| !x.is_finite()) {
            return Err(HgnError::NonFinite {
                term: op_name(&op).into(),
                detail: format!("output element {i} of node {}", self.nodes.len()),
            });
        }
        let index = self.nodes.len();
        self.nodes.push(Node { value, op, requires_grad });
        Ok(Var { tape: self.id, index })
    }

    fn grad_of(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.node(*v).requires_grad)
    }

    /// Input that never receives a gradient.
    pub fn constant(&mut self, t: Tensor<T>) -> Result<Var> {
        self.push(t, Op::Constant, false)
    }

    /// Differentiable input.
    pub fn leaf(&mut self, t: Tensor<T>) -> Result<Var> {
        self.push(t, Op::Leaf { param: None }, true)
    }

    /// Differentiable input tied to parameter slot `index`.
    pub fn param(&mut self, index: usize, t: Tensor<T>) -> Result<Var> {
        self.push(t, Op::Leaf { param: Some(index) }, true)
    }

    /// 2D convolution of `x: [C, H, W]` with `w: [O, C, k, k]` and `b: [O]`,
    /// zero padding `pad`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, stride: usize, pad: usize) -> Result<Var> {
        let (xs, ws, bs) = (
            self.check(x)?.value.shape.clone(),
            self.check(w)?.value.shape.clone(),
            self.check(b)?.value.shape.clone(),
        );
        if xs.len() != 3 || ws.len() != 4 || ws[1] != xs[0] || ws[2] != ws[3] || bs != [ws[0]] {
            return Err(HgnError::Contract(format!(
                "conv2d shapes x {xs:?}, w {ws:?}, b {bs:?} are incompatible"
            )));
        }
        if stride == 0 || xs[1] + 2 * pad < ws[2] || xs[2] + 2 * pad < ws[3] {
            return Err(HgnError::Contract("conv2d kernel larger than padded input".into()));
        }
        let geom = ConvGeom {
            in_channels: xs[0],
            in_h: xs[1],
            in_w: xs[2],
            out_channels: ws[0],
            kernel: ws[2],
            stride,
            pad,
        };
        let cols = if geom.is_pointwise() {
            self.node(x).value.data.clone()
        } else {
            im2col(&geom, &self.node(x).value.data)
        };
        let out = conv_forward(&geom, &cols, &self.node(w).value.data, &self.node(b).value.data);
        let t = Tensor { shape: vec![geom.out_channels, geom.out_h(), geom.out_w()], data: out };
        let rg = self.grad_of(&[x, w, b]);
        self.push(t, Op::Conv2d { x, w, b, geom, cols }, rg)
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let n = self.check(x)?;
        let t = Tensor {
            shape: n.value.shape.clone(),
            data: n.value.data.iter().map(|&v| v.max(T::zero())).collect(),
        };
        let rg = n.requires_grad;
        self.push(t, Op::Relu(x), rg)
    }

    /// Nearest-neighbour 2x upsampling of `[C, H, W]`, cropped to `out_h x out_w`.
    pub fn upsample2(&mut self, x: Var, out_h: usize, out_w: usize) -> Result<Var> {
        let n = self.check(x)?;
        let s = &n.value.shape;
        if s.len() != 3 || out_h > 2 * s[1] || out_w > 2 * s[2] || out_h == 0 || out_w == 0 {
            return Err(HgnError::Contract(format!(
                "cannot upsample {s:?} to {out_h}x{out_w}"
            )));
        }
        let (c, h, w) = (s[0], s[1], s[2]);
        let src = &n.value.data;
        let mut data = Vec::with_capacity(c * out_h * out_w);
        for ch in 0..c {
            for y in 0..out_h {
                let row = &src[(ch * h + y / 2) * w..(ch * h + y / 2 + 1) * w];
                data.extend((0..out_w).map(|x| row[x / 2]));
            }
        }
        let rg = n.requires_grad;
        self.push(Tensor { shape: vec![c, out_h, out_w], data }, Op::Upsample2 { x }, rg)
    }

    /// Channel concatenation of two `[C_i, H, W]` maps.
    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.check(a)?.value.shape.clone(), self.check(b)?.value.shape.clone());
        if sa.len() != 3 || sb.len() != 3 || sa[1..] != sb[1..] {
            return Err(HgnError::Contract(format!("cannot concat {sa:?} and {sb:?}")));
        }
        let mut data = self.node(a).value.data.clone();
        data.extend_from_slice(&self.node(b).value.data);
        let rg = self.grad_of(&[a, b]);
        self.push(Tensor { shape: vec![sa[0] + sb[0], sa[1], sa[2]], data }, Op::Concat(a, b), rg)
    }

    /// `[C, H, W] -> [C]`.
    pub fn global_avg_pool(&mut self, x: Var) -> Result<Var> {
        let n = self.check(x)?;
        let s = &n.value.shape;
        if s.len() != 3 {
            return Err(HgnError::Contract(format!("global pooling needs [C,H,W], got {s:?}")));
        }
        let cells = s[1] * s[2];
        let inv = T::one() / T::lit(cells as f64);
        let data = n.value.data.chunks_exact(cells).map(|c| c.iter().copied().sum::<T>() * inv).collect();
        let rg = n.requires_grad;
        self.push(Tensor { shape: vec![s[0]], data }, Op::GlobalAvgPool(x), rg)
    }

    /// `y = W x + b` with `x` flattened, `W: [out, in]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let n_in = self.check(x)?.value.len();
        let ws = self.check(w)?.value.shape.clone();
        let bs = self.check(b)?.value.shape.clone();
        if ws.len() != 2 || ws[1] != n_in || bs != [ws[0]] {
            return Err(HgnError::Contract(format!(
                "linear shapes x [{n_in}], w {ws:?}, b {bs:?} are incompatible"
            )));
        }
        let xv = &self.node(x).value.data;
        let wv = &self.node(w).value.data;
        let data = self
            .node(b)
            .value
            .data
            .iter()
            .enumerate()
            .map(|(o, &bias)| {
                bias + wv[o * n_in..(o + 1) * n_in].iter().zip(xv).map(|(&a, &c)| a * c).sum::<T>()
            })
            .collect();
        let rg = self.grad_of(&[x, w, b]);
        self.push(Tensor { shape: vec![ws[0]], data }, Op::Linear { x, w, b }, rg)
    }

    /// `log(1 + e^x)`, evaluated stably.
    pub fn softplus(&mut self, x: Var) -> Result<Var> {
        let n = self.check(x)?;
        let data = n.value.data.iter().map(|&v| softplus(v)).collect();
        let t = Tensor { shape: n.value.shape.clone(), data };
        let rg = n.requires_grad;
        self.push(t, Op::Softplus(x), rg)
    }

    pub fn add_scalar(&mut self, x: Var, c: T) -> Result<Var> {
        let n = self.check(x)?;
        let t = Tensor { shape: n.value.shape.clone(), data: n.value.data.iter().map(|&v| v + c).collect() };
        let rg = n.requires_grad;
        self.push(t, Op::AddScalar(x), rg)
    }

    pub fn scale(&mut self, x: Var, c: T) -> Result<Var> {
        let n = self.check(x)?;
        let t = Tensor { shape: n.value.shape.clone(), data: n.value.data.iter().map(|&v| v * c).collect() };
        let rg = n.requires_grad;
        self.push(t, Op::Scale(x, c), rg)
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let n = self.check(x)?;
        let t = Tensor::scalar(n.value.data.iter().copied().sum());
        let rg = n.requires_grad;
        self.push(t, Op::Sum(x), rg)
    }

    /// Per-channel softmax over the spatial grid of `[C, H, W]`.
    pub fn spatial_softmax(&mut self, x: Var) -> Result<Var> {
        let n = self.check(x)?;
        let s = n.value.shape.clone();
        if s.len() != 3 {
            return Err(HgnError::Contract(format!("spatial softmax needs [C,H,W], got {s:?}")));
        }
        let cells = s[1] * s[2];
        let mut data = vec![T::zero(); n.value.len()];
        for (src, dst) in n.value.data.chunks_exact(cells).zip(data.chunks_exact_mut(cells)) {
            softmax_channel(src, dst);
        }
        let rg = n.requires_grad;
        self.push(Tensor { shape: s, data }, Op::SpatialSoftmax(x), rg)
    }

    /// Expected coordinates of normalized `[10, H, W]` maps, scaled to input
    /// pixels; output `[10, 2]`.
    pub fn soft_argmax(&mut self, x: Var, scale: T) -> Result<Var> {
        let n = self.check(x)?;
        let s = n.value.shape.clone();
        if s.len() != 3 || s[0] != NUM_LANDMARKS {
            return Err(HgnError::Contract(format!("soft-argmax needs [10,H,W], got {s:?}")));
        }
        let stack = crate::heatmap::HeatmapStack {
            height: s[1],
            width: s[2],
            scale,
            data: n.value.data.clone(),
        };
        let d = crate::heatmap::soft_argmax(&stack);
        let data = d.points.iter().flat_map(|p| p.iter().copied()).collect();
        let rg = n.requires_grad;
        self.push(Tensor { shape: vec![NUM_LANDMARKS, 2], data }, Op::SoftArgmax { x, scale }, rg)
    }

    /// Gaze `(theta, phi)` from landmarks `[10, 2]` (rows 0 and 1 used) and a
    /// scalar radius.
    pub fn reconstruct(&mut self, points: Var, radius: Var) -> Result<Var> {
        let p = self.check(points)?.value.clone();
        let r = self.check(radius)?.value.clone();
        if p.len() < 4 || r.len() != 1 {
            return Err(HgnError::Contract("reconstruct needs [>=2, 2] points and a scalar radius".into()));
        }
        let iris = [p.data[0], p.data[1]];
        let eyeball = [p.data[2], p.data[3]];
        let rec = reconstruct_gaze(iris, eyeball, r.data[0])?;
        let jac = recon_jacobian(iris, eyeball, r.data[0])?.rows;
        let t = Tensor { shape: vec![2], data: vec![rec.angles.theta, rec.angles.phi] };
        let rg = self.grad_of(&[points, radius]);
        self.push(t, Op::Reconstruct { points, radius, jac }, rg)
    }

    /// Elementwise `|x - target|`.
    pub fn abs_diff(&mut self, x: Var, target: &[T]) -> Result<Var> {
        let n = self.check(x)?;
        if n.value.len() != target.len() {
            return Err(HgnError::Contract("abs_diff target length mismatch".into()));
        }
        let data = n.value.data.iter().zip(target).map(|(&a, &b)| (a - b).abs()).collect();
        let t = Tensor { shape: n.value.shape.clone(), data };
        let rg = n.requires_grad;
        self.push(t, Op::AbsDiff { x, target: target.to_vec() }, rg)
    }

    /// `sum |x - target|` as a scalar.
    pub fn l1(&mut self, x: Var, target: &[T]) -> Result<Var> {
        let n = self.check(x)?;
        if n.value.len() != target.len() {
            return Err(HgnError::Contract(format!(
                "l1 target length {} != {}",
                target.len(),
                n.value.len()
            )));
        }
        let v = n.value.data.iter().zip(target).map(|(&a, &b)| (a - b).abs()).sum();
        let rg = n.requires_grad;
        self.push(Tensor::scalar(v), Op::L1 { x, target: target.to_vec() }, rg)
    }

    /// Uncertainty-weighted gaze loss over two residual components.
    pub fn uncertainty_loss(&mut self, residual: Var, alpha: Var) -> Result<Var> {
        let r = self.check(residual)?.value.clone();
        let a = self.check(alpha)?.value.clone();
        if r.len() != 2 || a.len() != 2 {
            return Err(HgnError::Contract("uncertainty loss needs two residuals and two alphas".into()));
        }
        let l = uncertainty_gaze_loss([r.data[0], r.data[1]], [a.data[0], a.data[1]]);
        let rg = self.grad_of(&[residual, alpha]);
        self.push(
            Tensor::scalar(l.value),
            Op::Uncertainty { residual, alpha, grad_residual: l.grad_residual, grad_alpha: l.grad_alpha },
            rg,
        )
    }

    /// `sum_i w_i * x_i` over scalar nodes.
    pub fn weighted_sum(&mut self, terms: &[(Var, T)]) -> Result<Var> {
        let mut v = T::zero();
        for &(x, w) in terms {
            let n = self.check(x)?;
            if n.value.len() != 1 {
                return Err(HgnError::Contract("weighted_sum takes scalar terms".into()));
            }
            v += w * n.value.data[0];
        }
        let vars: Vec<Var> = terms.iter().map(|t| t.0).collect();
        let rg = self.grad_of(&vars);
        self.push(Tensor::scalar(v), Op::WeightedSum(terms.to_vec()), rg)
    }

    /// Reverse pass from a scalar output seeded with 1.
    pub fn backward(&self, output: Var) -> Result<Gradients<T>> {
        let n = self.check(output)?;
        if n.value.len() != 1 {
            return Err(HgnError::Usage(format!(
                "backward needs a scalar output, got shape {:?}",
                n.value.shape
            )));
        }
        self.backward_with(output, &[T::one()])
    }

    /// Reverse pass from `output` with an explicit upstream gradient.
    pub fn backward_with(&self, output: Var, seed: &[T]) -> Result<Gradients<T>> {
        let n = self.check(output)?;
        if n.value.len() != seed.len() {
            return Err(HgnError::Usage("seed gradient shape does not match output".into()));
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[output.index] = Some(seed.to_vec());

        for i in (0..=output.index).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(node, &g, &mut grads)?;
            grads[i] = Some(g);
        }

        for (i, g) in grads.iter().enumerate() {
            if let Some(g) = g {
                if let Some(j) = g.iter().position(|v| !v.is_finite()) {
                    return Err(HgnError::NonFinite {
                        term: op_name(&self.nodes[i].op).into(),
                        detail: format!("gradient element {j} of node {i}"),
                    });
                }
            }
        }
        Ok(Gradients { tape: self.id, grads })
    }

    fn propagate(&self, node: &Node<T>, g: &[T], grads: &mut [Option<Vec<T>>]) -> Result<()> {
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut [T])| {
            if !self.nodes[v.index].requires_grad {
                return;
            }
            let slot = grads[v.index].get_or_insert_with(|| vec![T::zero(); self.nodes[v.index].value.len()]);
            f(slot);
        };
        match &node.op {
            Op::Constant | Op::Leaf { .. } => {}
            Op::Conv2d { x, w, b, geom, cols } => {
                let wv = &self.node(*w).value.data;
                let mut dw = vec![T::zero(); wv.len()];
                let mut db = vec![T::zero(); geom.out_channels];
                let need_x = self.node(*x).requires_grad;
                let dcols = conv_backward(geom, cols, wv, g, &mut dw, &mut db, need_x);
                acc(*w, &mut |s| add_into(s, &dw));
                acc(*b, &mut |s| add_into(s, &db));
                if let Some(dcols) = dcols {
                    let dx = if geom.is_pointwise() { dcols } else { col2im(geom, &dcols) };
                    acc(*x, &mut |s| add_into(s, &dx));
                }
            }
            Op::Relu(x) => {
                let xv = &self.node(*x).value.data;
                acc(*x, &mut |s| {
                    for ((s, &gi), &xi) in s.iter_mut().zip(g).zip(xv) {
                        if xi > T::zero() {
                            *s += gi;
                        }
                    }
                });
            }
            Op::Upsample2 { x } => {
                let xs = &self.node(*x).value.shape;
                let (c, h, w) = (xs[0], xs[1], xs[2]);
                let (oh, ow) = (node.value.shape[1], node.value.shape[2]);
                acc(*x, &mut |s| {
                    for ch in 0..c {
                        for y in 0..oh {
                            let grow = &g[(ch * oh + y) * ow..(ch * oh + y + 1) * ow];
                            let srow = &mut s[(ch * h + y / 2) * w..(ch * h + y / 2 + 1) * w];
                            for (xx, &gi) in grow.iter().enumerate() {
                                srow[xx / 2] += gi;
                            }
                        }
                    }
                });
            }
            Op::Concat(a, b) => {
                let na = self.node(*a).value.len();
                acc(*a, &mut |s| add_into(s, &g[..na]));
                acc(*b, &mut |s| add_into(s, &g[na..]));
            }
            Op::GlobalAvgPool(x) => {
                let xs = &self.node(*x).value.shape;
                let cells = xs[1] * xs[2];
                let inv = T::one() / T::lit(cells as f64);
                acc(*x, &mut |s| {
                    for (chunk, &gi) in s.chunks_exact_mut(cells).zip(g) {
                        chunk.iter_mut().for_each(|v| *v += gi * inv);
                    }
                });
            }
            Op::Linear { x, w, b } => {
                let xv = &self.node(*x).value.data;
                let wv = &self.node(*w).value.data;
                let n_in = xv.len();
                acc(*b, &mut |s| add_into(s, g));
                acc(*w, &mut |s| {
                    for (o, &gi) in g.iter().enumerate() {
                        for (sv, &xi) in s[o * n_in..(o + 1) * n_in].iter_mut().zip(xv) {
                            *sv += gi * xi;
                        }
                    }
                });
                acc(*x, &mut |s| {
                    for (o, &gi) in g.iter().enumerate() {
                        for (sv, &wi) in s.iter_mut().zip(&wv[o * n_in..(o + 1) * n_in]) {
                            *sv += gi * wi;
                        }
                    }
                });
            }
            Op::Softplus(x) => {
                let xv = &self.node(*x).value.data;
                acc(*x, &mut |s| {
                    for ((s, &gi), &xi) in s.iter_mut().zip(g).zip(xv) {
                        *s += gi * sigmoid(xi);
                    }
                });
            }
            Op::AddScalar(x) => acc(*x, &mut |s| add_into(s, g)),
            Op::Scale(x, c) => acc(*x, &mut |s| {
                for (s, &gi) in s.iter_mut().zip(g) {
                    *s += gi * *c;
                }
            }),
            Op::Sum(x) => acc(*x, &mut |s| s.iter_mut().for_each(|v| *v += g[0])),
            Op::SpatialSoftmax(x) => {
                let cells = node.value.shape[1] * node.value.shape[2];
                let d = spatial_softmax_backward(&node.value.data, g, cells);
                acc(*x, &mut |s| add_into(s, &d));
            }
            Op::SoftArgmax { x, scale } => {
                let xs = &self.node(*x).value.shape;
                let gp: [[T; 2]; NUM_LANDMARKS] = std::array::from_fn(|i| [g[2 * i], g[2 * i + 1]]);
                let d = soft_argmax_backward(xs[1], xs[2], *scale, &gp);
                acc(*x, &mut |s| add_into(s, &d));
            }
            Op::Reconstruct { points, radius, jac } => {
                // jac columns: x_ic, y_ic, x_ec, y_ec, R
                let col = |j: usize| g[0] * jac[0][j] + g[1] * jac[1][j];
                let dp = [col(0), col(1), col(2), col(3)];
                acc(*points, &mut |s| {
                    for (sv, d) in s.iter_mut().zip(dp) {
                        *sv += d;
                    }
                });
                acc(*radius, &mut |s| s[0] += col(4));
            }
            Op::AbsDiff { x, target } => {
                let xv = &self.node(*x).value.data;
                acc(*x, &mut |s| {
                    for ((s, &gi), (&xi, &ti)) in s.iter_mut().zip(g).zip(xv.iter().zip(target)) {
                        *s += gi * sign(xi - ti);
                    }
                });
            }
            Op::L1 { x, target } => {
                let xv = &self.node(*x).value.data;
                acc(*x, &mut |s| {
                    for (s, (&xi, &ti)) in s.iter_mut().zip(xv.iter().zip(target)) {
                        *s += g[0] * sign(xi - ti);
                    }
                });
            }
            Op::Uncertainty { residual, alpha, grad_residual, grad_alpha } => {
                acc(*residual, &mut |s| {
                    s[0] += g[0] * grad_residual[0];
                    s[1] += g[0] * grad_residual[1];
                });
                acc(*alpha, &mut |s| {
                    s[0] += g[0] * grad_alpha[0];
                    s[1] += g[0] * grad_alpha[1];
                });
            }
            Op::WeightedSum(terms) => {
                for &(x, w) in terms {
                    acc(x, &mut |s| s[0] += g[0] * w);
                }
            }
        }
        Ok(())
    }
}

/// Gradients of one reverse pass, indexed by node.
pub struct Gradients<T> {
    tape: u64,
    grads: Vec<Option<Vec<T>>>,
}

impl<T: Real> Gradients<T> {
    /// Gradient of `v`, or `None` when nothing upstream depended on it.
    pub fn get(&self, v: Var) -> Option<&[T]> {
        if v.tape != self.tape {
            return None;
        }
        self.grads.get(v.index).and_then(|g| g.as_deref())
    }

    /// `(parameter slot, gradient)` pairs for every parameter leaf reached.
    pub fn param_grads<'a>(&'a self, tape: &'a Tape<T>) -> impl Iterator<Item = (usize, &'a [T])> + 'a {
        tape.nodes.iter().zip(&self.grads).filter_map(|(n, g)| match (&n.op, g) {
            (Op::Leaf { param: Some(p) }, Some(g)) => Some((*p, g.as_slice())),
            _ => None,
        })
    }
}

fn add_into<T: Real>(dst: &mut [T], src: &[T]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

pub(crate) fn softplus<T: Real>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

pub(crate) fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

fn op_name<T>(op: &Op<T>) -> &'static str {
    match op {
        Op::Constant => "constant",
        Op::Leaf { .. } => "leaf",
        Op::Conv2d { .. } => "conv2d",
        Op::Relu(_) => "relu",
        Op::Upsample2 { .. } => "upsample",
        Op::Concat(..) => "concat",
        Op::GlobalAvgPool(_) => "global_avg_pool",
        Op::Linear { .. } => "linear",
        Op::Softplus(_) => "softplus",
        Op::AddScalar(_) => "add_scalar",
        Op::Scale(..) => "scale",
        Op::Sum(_) => "sum",
        Op::SpatialSoftmax(_) => "spatial_softmax",
        Op::SoftArgmax { .. } => "soft_argmax",
        Op::Reconstruct { .. } => "reconstruct",
        Op::AbsDiff { .. } => "abs_diff",
        Op::L1 { .. } => "l1",
        Op::Uncertainty { .. } => "uncertainty_loss",
        Op::WeightedSum(_) => "weighted_sum",
    }
}
