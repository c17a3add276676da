//! Define-by-run computation record with reverse-mode gradients.
//!
//! A [`Tape`] is built fresh for every forward pass. Leaves are pushed with
//! [`Tape::param`], [`Tape::leaf`] or [`Tape::constant`], operations append nodes, and
//! [`Tape::backward`] replays the record from a scalar output.
//!
//! ```
//! use ega_core::diffcore::{Tape, Tensor};
//!
//! let mut tape = Tape::new();
//! let x = tape.param(Tensor::matrix(1, 2, vec![3.0, 4.0]).unwrap());
//! let n = tape.frobenius_norm(x).unwrap();
//! let grads = tape.backward(n).unwrap();
//! assert_eq!(tape.value(n).item(), 5.0);
//! assert_eq!(grads.get(x).unwrap().data(), &[0.6, 0.8]);
//! ```

use crate::diffcore::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Detach,
    MatMul(Var, Var),
    MatMulT(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    AddBias(Var, Var),
    Relu(Var),
    RowMean(Var),
    RowSum(Var),
    RowCenter(Var),
    RowDiv(Var, Var),
    Outer(Var, Var),
    Sqrt(Var),
    LogSoftmax(Var),
    Frobenius(Var),
    Sum(Var),
    Mean(Var),
    ScaleAdd(Var, f64),
    ClampMin(Var, f64),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Detach => "detach",
            Op::MatMul(..) => "matmul",
            Op::MatMulT(..) => "matmul_t",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Div(..) => "div",
            Op::AddBias(..) => "add_bias",
            Op::Relu(..) => "relu",
            Op::RowMean(..) => "row_mean",
            Op::RowSum(..) => "row_sum",
            Op::RowCenter(..) => "row_center",
            Op::RowDiv(..) => "row_div",
            Op::Outer(..) => "outer",
            Op::Sqrt(..) => "sqrt",
            Op::LogSoftmax(..) => "log_softmax",
            Op::Frobenius(..) => "frobenius_norm",
            Op::Sum(..) => "sum",
            Op::Mean(..) => "mean",
            Op::ScaleAdd(..) => "scale_add",
            Op::ClampMin(..) => "clamp_min",
        }
    }
}

#[derive(Clone, Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// The computation record for one forward pass.
#[derive(Clone, Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by one call to [`Tape::backward`].
#[derive(Clone, Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the output with respect to `var`, if `var` requires one.
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }
}

fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, bv) in row.iter_mut().zip(brow) {
                *o += aip * bv;
            }
        }
    }
    out
}

// a: m×k, b: n×k -> m×n
fn matmul_t_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let brow = &b[j * k..(j + 1) * k];
            out[i * n + j] = arow.iter().zip(brow).map(|(x, y)| x * y).sum();
        }
    }
    out
}

// a: k×m, b: k×n -> m×n  (aᵀ·b)
fn matmul_tn_raw(a: &[f64], b: &[f64], k: usize, m: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for p in 0..k {
        let arow = &a[p * m..(p + 1) * m];
        let brow = &b[p * n..(p + 1) * n];
        for (i, &av) in arow.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let orow = &mut out[i * n..(i + 1) * n];
            for (o, bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    pub fn requires_grad(&self, var: Var) -> bool {
        self.nodes[var.0].requires_grad
    }

    /// Pushes a leaf; it requires gradients when the tensor says so.
    pub fn leaf(&mut self, tensor: Tensor) -> Var {
        let requires_grad = tensor.requires_grad();
        self.push_raw(tensor, Op::Leaf, requires_grad)
    }

    /// Pushes a leaf that is always treated as a constant.
    pub fn constant(&mut self, tensor: Tensor) -> Var {
        self.push_raw(tensor, Op::Leaf, false)
    }

    /// Pushes a leaf that requires gradients regardless of the tensor flag.
    pub fn param(&mut self, tensor: Tensor) -> Var {
        self.push_raw(tensor, Op::Leaf, true)
    }

    fn push_raw(&mut self, mut value: Tensor, op: Op, requires_grad: bool) -> Var {
        value.clear_grad();
        value.set_requires_grad(requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, shape: Vec<usize>, data: Vec<f64>, op: Op) -> Result<Var> {
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { op: op.name() });
        }
        let requires_grad = match &op {
            Op::Leaf | Op::Detach => false,
            Op::MatMul(a, b)
            | Op::MatMulT(a, b)
            | Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::Div(a, b)
            | Op::AddBias(a, b)
            | Op::RowDiv(a, b)
            | Op::Outer(a, b) => self.requires_grad(*a) || self.requires_grad(*b),
            Op::Relu(a)
            | Op::RowMean(a)
            | Op::RowSum(a)
            | Op::RowCenter(a)
            | Op::Sqrt(a)
            | Op::LogSoftmax(a)
            | Op::Frobenius(a)
            | Op::Sum(a)
            | Op::Mean(a)
            | Op::ScaleAdd(a, _)
            | Op::ClampMin(a, _) => self.requires_grad(*a),
        };
        let value = Tensor::new(shape, data)?;
        Ok(self.push_raw(value, op, requires_grad))
    }

    fn matrix_dims(&self, op: &'static str, v: Var) -> Result<(usize, usize)> {
        let shape = self.value(v).shape();
        if shape.len() != 2 {
            return Err(Error::ShapeMismatch {
                op,
                left: shape.to_vec(),
                right: vec![0, 0],
            });
        }
        Ok((shape[0], shape[1]))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(Error::ShapeMismatch {
                op,
                left: sa.to_vec(),
                right: sb.to_vec(),
            });
        }
        Ok(())
    }

    /// Copies a value into a node that blocks gradient flow.
    pub fn detach(&mut self, a: Var) -> Var {
        let value = self.value(a).clone();
        self.push_raw(value, Op::Detach, false)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.matrix_dims("matmul", a)?;
        let (k2, n) = self.matrix_dims("matmul", b)?;
        if k != k2 {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                left: vec![m, k],
                right: vec![k2, n],
            });
        }
        let out = matmul_raw(self.value(a).data(), self.value(b).data(), m, k, n);
        self.push(vec![m, n], out, Op::MatMul(a, b))
    }

    /// `a · bᵀ` for `a: m×k`, `b: n×k`.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.matrix_dims("matmul_t", a)?;
        let (n, k2) = self.matrix_dims("matmul_t", b)?;
        if k != k2 {
            return Err(Error::ShapeMismatch {
                op: "matmul_t",
                left: vec![m, k],
                right: vec![n, k2],
            });
        }
        let out = matmul_t_raw(self.value(a).data(), self.value(b).data(), m, k, n);
        self.push(vec![m, n], out, Op::MatMulT(a, b))
    }

    fn elementwise(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var> {
        self.same_shape(name, a, b)?;
        let out = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let shape = self.value(a).shape().to_vec();
        self.push(shape, out, op)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise("div", a, b, |x, y| x / y, Op::Div(a, b))
    }

    /// Adds a `1×n` bias row to every row of an `m×n` matrix.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (m, n) = self.matrix_dims("add_bias", a)?;
        let bshape = self.value(bias).shape();
        if bshape != [1, n] {
            return Err(Error::ShapeMismatch {
                op: "add_bias",
                left: vec![m, n],
                right: bshape.to_vec(),
            });
        }
        let b = self.value(bias).data();
        let out = self
            .value(a)
            .data()
            .chunks(n)
            .flat_map(|row| row.iter().zip(b).map(|(x, y)| x + y))
            .collect();
        self.push(vec![m, n], out, Op::AddBias(a, bias))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).data().iter().map(|&x| x.max(0.0)).collect();
        let shape = self.value(a).shape().to_vec();
        self.push(shape, out, Op::Relu(a))
    }

    /// Per-row mean, `m×n → m×1`.
    pub fn row_mean(&mut self, a: Var) -> Result<Var> {
        let (m, n) = self.matrix_dims("row_mean", a)?;
        let out = self
            .value(a)
            .data()
            .chunks(n)
            .map(|r| r.iter().sum::<f64>() / n as f64)
            .collect();
        self.push(vec![m, 1], out, Op::RowMean(a))
    }

    /// Per-row sum, `m×n → m×1`.
    pub fn row_sum(&mut self, a: Var) -> Result<Var> {
        let (m, n) = self.matrix_dims("row_sum", a)?;
        let out = self
            .value(a)
            .data()
            .chunks(n)
            .map(|r| r.iter().sum::<f64>())
            .collect();
        self.push(vec![m, 1], out, Op::RowSum(a))
    }

    /// Subtracts each row's mean from that row.
    pub fn row_center(&mut self, a: Var) -> Result<Var> {
        let (m, n) = self.matrix_dims("row_center", a)?;
        let mut out = Vec::with_capacity(m * n);
        for r in self.value(a).data().chunks(n) {
            let mean = r.iter().sum::<f64>() / n as f64;
            out.extend(r.iter().map(|x| x - mean));
        }
        self.push(vec![m, n], out, Op::RowCenter(a))
    }

    /// Divides row `i` of `a: m×n` by `scale[i]` for `scale: m×1`.
    pub fn row_div(&mut self, a: Var, scale: Var) -> Result<Var> {
        let (m, n) = self.matrix_dims("row_div", a)?;
        let sshape = self.value(scale).shape();
        if sshape != [m, 1] {
            return Err(Error::ShapeMismatch {
                op: "row_div",
                left: vec![m, n],
                right: sshape.to_vec(),
            });
        }
        let s = self.value(scale).data();
        let out = self
            .value(a)
            .data()
            .chunks(n)
            .zip(s)
            .flat_map(|(r, &si)| r.iter().map(move |x| x / si))
            .collect();
        self.push(vec![m, n], out, Op::RowDiv(a, scale))
    }

    /// Outer product of two column vectors, `m×1 ⊗ n×1 → m×n`.
    pub fn outer(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, one_a) = self.matrix_dims("outer", a)?;
        let (n, one_b) = self.matrix_dims("outer", b)?;
        if one_a != 1 || one_b != 1 {
            return Err(Error::ShapeMismatch {
                op: "outer",
                left: vec![m, one_a],
                right: vec![n, one_b],
            });
        }
        let (av, bv) = (self.value(a).data(), self.value(b).data());
        let out = av
            .iter()
            .flat_map(|&x| bv.iter().map(move |&y| x * y))
            .collect();
        self.push(vec![m, n], out, Op::Outer(a, b))
    }

    /// Element-wise square root. Negative inputs are an error.
    pub fn sqrt(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).data().iter().map(|x| x.sqrt()).collect();
        let shape = self.value(a).shape().to_vec();
        self.push(shape, out, Op::Sqrt(a))
    }

    /// Row-wise log-softmax, stabilised by subtracting the row max.
    pub fn log_softmax(&mut self, a: Var) -> Result<Var> {
        let (m, n) = self.matrix_dims("log_softmax", a)?;
        let mut out = Vec::with_capacity(m * n);
        for r in self.value(a).data().chunks(n) {
            let max = r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + r.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
            out.extend(r.iter().map(|x| x - lse));
        }
        self.push(vec![m, n], out, Op::LogSoftmax(a))
    }

    pub fn frobenius_norm(&mut self, a: Var) -> Result<Var> {
        let v = self
            .value(a)
            .data()
            .iter()
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt();
        self.push(Vec::new(), vec![v], Op::Frobenius(a))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a).data().iter().sum();
        self.push(Vec::new(), vec![v], Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        let v = t.data().iter().sum::<f64>() / t.numel() as f64;
        self.push(Vec::new(), vec![v], Op::Mean(a))
    }

    /// `scale · a + shift`, element-wise.
    pub fn scale_add(&mut self, a: Var, scale: f64, shift: f64) -> Result<Var> {
        let out = self
            .value(a)
            .data()
            .iter()
            .map(|x| scale * x + shift)
            .collect();
        let shape = self.value(a).shape().to_vec();
        self.push(shape, out, Op::ScaleAdd(a, scale))
    }

    /// `max(a, floor)`, element-wise; the gradient is zero where clamped.
    pub fn clamp_min(&mut self, a: Var, floor: f64) -> Result<Var> {
        let out = self.value(a).data().iter().map(|&x| x.max(floor)).collect();
        let shape = self.value(a).shape().to_vec();
        self.push(shape, out, Op::ClampMin(a, floor))
    }

    /// Replays the record backwards from the scalar `output`.
    ///
    /// Every leaf that requires gradients receives an entry in the result,
    /// zero-filled when it does not influence `output`.
    pub fn backward(&self, output: Var) -> Result<Gradients> {
        let out = &self.nodes[output.0];
        if out.value.numel() != 1 {
            return Err(Error::NotScalar(out.value.shape().to_vec()));
        }
        if !out.requires_grad {
            return Err(Error::Detached);
        }

        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[output.0] = Some(vec![1.0]);

        for id in (0..=output.0).rev() {
            let node = &self.nodes[id];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[id].take() else {
                continue;
            };
            self.propagate(id, &g, &mut grads);
            grads[id] = Some(g);
        }

        let grads = self
            .nodes
            .iter()
            .zip(grads)
            .map(|(node, g)| {
                if !node.requires_grad {
                    return None;
                }
                let shape = node.value.shape().to_vec();
                let data = g.unwrap_or_else(|| vec![0.0; node.value.numel()]);
                Some(Tensor::new(shape, data).expect("gradient shape"))
            })
            .collect();
        Ok(Gradients { grads })
    }

    fn propagate(&self, id: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[id];
        let out = node.value.data();
        let send = |grads: &mut [Option<Vec<f64>>], v: Var, contrib: Vec<f64>| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(acc) => acc.iter_mut().zip(&contrib).for_each(|(a, c)| *a += c),
                slot @ None => *slot = Some(contrib),
            }
        };
        let val = |v: Var| self.nodes[v.0].value.data();
        let dims = |v: Var| {
            let t = &self.nodes[v.0].value;
            (t.rows(), t.cols())
        };

        match node.op {
            Op::Leaf | Op::Detach => {}
            Op::MatMul(a, b) => {
                let (m, k) = dims(a);
                let n = dims(b).1;
                if self.requires_grad(a) {
                    send(grads, a, matmul_t_raw(g, val(b), m, n, k));
                }
                if self.requires_grad(b) {
                    send(grads, b, matmul_tn_raw(val(a), g, m, k, n));
                }
            }
            Op::MatMulT(a, b) => {
                let (m, k) = dims(a);
                let n = dims(b).0;
                if self.requires_grad(a) {
                    send(grads, a, matmul_raw(g, val(b), m, n, k));
                }
                if self.requires_grad(b) {
                    send(grads, b, matmul_tn_raw(g, val(a), m, n, k));
                }
            }
            Op::Add(a, b) => {
                send(grads, a, g.to_vec());
                send(grads, b, g.to_vec());
            }
            Op::Sub(a, b) => {
                send(grads, a, g.to_vec());
                send(grads, b, g.iter().map(|x| -x).collect());
            }
            Op::Mul(a, b) => {
                let (av, bv) = (val(a), val(b));
                send(grads, a, g.iter().zip(bv).map(|(g, y)| g * y).collect());
                send(grads, b, g.iter().zip(av).map(|(g, x)| g * x).collect());
            }
            Op::Div(a, b) => {
                let (av, bv) = (val(a), val(b));
                send(grads, a, g.iter().zip(bv).map(|(g, y)| g / y).collect());
                let gb = g
                    .iter()
                    .zip(av)
                    .zip(bv)
                    .map(|((g, x), y)| -g * x / (y * y))
                    .collect();
                send(grads, b, gb);
            }
            Op::AddBias(a, bias) => {
                let n = dims(a).1;
                send(grads, a, g.to_vec());
                let mut gb = vec![0.0; n];
                for row in g.chunks(n) {
                    gb.iter_mut().zip(row).for_each(|(acc, x)| *acc += x);
                }
                send(grads, bias, gb);
            }
            Op::Relu(a) => {
                let av = val(a);
                let ga = g
                    .iter()
                    .zip(av)
                    .map(|(g, &x)| if x > 0.0 { *g } else { 0.0 })
                    .collect();
                send(grads, a, ga);
            }
            Op::RowMean(a) => {
                let n = dims(a).1;
                let ga = g
                    .iter()
                    .flat_map(|&gi| std::iter::repeat_n(gi / n as f64, n))
                    .collect();
                send(grads, a, ga);
            }
            Op::RowSum(a) => {
                let n = dims(a).1;
                let ga = g
                    .iter()
                    .flat_map(|&gi| std::iter::repeat_n(gi, n))
                    .collect();
                send(grads, a, ga);
            }
            Op::RowCenter(a) => {
                let n = dims(a).1;
                let mut ga = Vec::with_capacity(g.len());
                for row in g.chunks(n) {
                    let mean = row.iter().sum::<f64>() / n as f64;
                    ga.extend(row.iter().map(|x| x - mean));
                }
                send(grads, a, ga);
            }
            Op::RowDiv(a, s) => {
                let n = dims(a).1;
                let (av, sv) = (val(a), val(s));
                if self.requires_grad(a) {
                    let ga = g
                        .chunks(n)
                        .zip(sv)
                        .flat_map(|(row, &si)| row.iter().map(move |x| x / si))
                        .collect();
                    send(grads, a, ga);
                }
                if self.requires_grad(s) {
                    let gs = g
                        .chunks(n)
                        .zip(av.chunks(n))
                        .zip(sv)
                        .map(|((gr, ar), &si)| {
                            -gr.iter().zip(ar).map(|(x, y)| x * y).sum::<f64>() / (si * si)
                        })
                        .collect();
                    send(grads, s, gs);
                }
            }
            Op::Outer(a, b) => {
                let (av, bv) = (val(a), val(b));
                let n = bv.len();
                if self.requires_grad(a) {
                    let ga = g
                        .chunks(n)
                        .map(|row| row.iter().zip(bv).map(|(x, y)| x * y).sum())
                        .collect();
                    send(grads, a, ga);
                }
                if self.requires_grad(b) {
                    let mut gb = vec![0.0; n];
                    for (row, &ai) in g.chunks(n).zip(av) {
                        gb.iter_mut().zip(row).for_each(|(acc, x)| *acc += x * ai);
                    }
                    send(grads, b, gb);
                }
            }
            Op::Sqrt(a) => {
                // zero subgradient where the root is zero
                let ga = g
                    .iter()
                    .zip(out)
                    .map(|(g, &r)| if r > 0.0 { g / (2.0 * r) } else { 0.0 })
                    .collect();
                send(grads, a, ga);
            }
            Op::LogSoftmax(a) => {
                let n = dims(a).1;
                let mut ga = Vec::with_capacity(g.len());
                for (grow, yrow) in g.chunks(n).zip(out.chunks(n)) {
                    let gsum: f64 = grow.iter().sum();
                    ga.extend(grow.iter().zip(yrow).map(|(gi, yi)| gi - yi.exp() * gsum));
                }
                send(grads, a, ga);
            }
            Op::Frobenius(a) => {
                let norm = out[0];
                let ga = if norm > 0.0 {
                    val(a).iter().map(|x| g[0] * x / norm).collect()
                } else {
                    vec![0.0; val(a).len()]
                };
                send(grads, a, ga);
            }
            Op::Sum(a) => send(grads, a, vec![g[0]; val(a).len()]),
            Op::Mean(a) => {
                let n = val(a).len();
                send(grads, a, vec![g[0] / n as f64; n]);
            }
            Op::ScaleAdd(a, scale) => send(grads, a, g.iter().map(|x| scale * x).collect()),
            Op::ClampMin(a, floor) => {
                let ga = val(a)
                    .iter()
                    .zip(g)
                    .map(|(&x, &gi)| if x > floor { gi } else { 0.0 })
                    .collect();
                send(grads, a, ga);
            }
        }
    }
}
