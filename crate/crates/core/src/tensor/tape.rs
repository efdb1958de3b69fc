use super::conv::{conv1d_backward, conv1d_forward, conv1d_output_len, ConvDims};
use super::Tensor;
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

/// Backward rule for an operation defined outside this module.
///
/// The op computes its forward value itself and hands it to [`Tape::custom`];
/// whatever it needs for the backward pass is saved inside the implementor.
pub trait Function {
    fn name(&self) -> &'static str;

    /// Gradients for each input, in the order the inputs were recorded.
    /// `wanted[i]` is false when input `i` does not require a gradient, in
    /// which case the entry may be `None`.
    fn backward(
        &self,
        out_grad: &[f64],
        inputs: &[&Tensor],
        wanted: &[bool],
    ) -> Vec<Option<Vec<f64>>>;
}

enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Offset(Var),
    Reshape(Var),
    Sum(Var),
    MatMul(Var, Var),
    AddBias(Var, Var),
    Conv1d { x: Var, w: Var, dims: ConvDims },
    Relu(Var),
    MaskedMean { x: Var, valid: Vec<bool>, count: usize },
    Narrow { x: Var, start: usize },
    LogSoftmax(Var),
    NllLoss { logp: Var, labels: Vec<usize> },
    Custom { inputs: Vec<Var>, f: Box<dyn Function> },
}

struct Node {
    value: Tensor,
    requires_grad: bool,
    grad: Option<Vec<f64>>,
    op: Op,
}

/// Append-only record of a forward computation.
///
/// Node ids are assigned in creation order, so every operation's inputs
/// precede it and reverse id order is a valid backward schedule.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn add_into(dst: &mut Option<Vec<f64>>, src: Vec<f64>) {
    match dst {
        Some(d) => d.iter_mut().zip(&src).for_each(|(a, b)| *a += b),
        None => *dst = Some(src),
    }
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

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            requires_grad,
            grad: None,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.rg(v)
    }

    /// Accumulated gradient, present only after a backward pass reached `v`.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].grad.as_deref()
    }

    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn variable(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Value-equal copy cut from the tape: no gradient flows through it.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.value(v).clone();
        self.constant(value)
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(Error::ShapeMismatch {
                op,
                left: sa.to_vec(),
                right: sb.to_vec(),
            });
        }
        Ok(())
    }

    fn zip_map(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let (va, vb) = (self.value(a), self.value(b));
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor {
            shape: va.shape().to_vec(),
            data,
        }
    }

    fn map(&self, a: Var, f: impl Fn(f64) -> f64) -> Tensor {
        let va = self.value(a);
        Tensor {
            shape: va.shape().to_vec(),
            data: va.data().iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let out = self.zip_map(a, b, |x, y| x + y);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let out = self.zip_map(a, b, |x, y| x - y);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Sub(a, b), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let out = self.zip_map(a, b, |x, y| x * y);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Mul(a, b), rg))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let out = self.map(a, |x| x * c);
        let rg = self.rg(a);
        self.push(out, Op::Scale(a, c), rg)
    }

    /// `a + c` for a constant `c`.
    pub fn offset(&mut self, a: Var, c: f64) -> Var {
        let out = self.map(a, |x| x + c);
        let rg = self.rg(a);
        self.push(out, Op::Offset(a), rg)
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(a).clone().reshape(shape.to_vec())?;
        let rg = self.rg(a);
        Ok(self.push(out, Op::Reshape(a), rg))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        let rg = self.rg(a);
        self.push(Tensor::scalar(s), Op::Sum(a), rg)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                left: sa,
                right: sb,
            });
        }
        let (m, k, p) = (sa[0], sa[1], sb[1]);
        let (va, vb) = (self.value(a).data(), self.value(b).data());
        let mut out = vec![0.0; m * p];
        for i in 0..m {
            for t in 0..k {
                let av = va[i * k + t];
                let row = &vb[t * p..(t + 1) * p];
                for (o, &bv) in out[i * p..(i + 1) * p].iter_mut().zip(row) {
                    *o += av * bv;
                }
            }
        }
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor { shape: vec![m, p], data: out }, Op::MatMul(a, b), rg))
    }

    /// Adds a `[K]` bias to every row of a `[B × K]` tensor.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (sx, sb) = (self.shape(x).to_vec(), self.shape(bias).to_vec());
        if sx.len() != 2 || sb != [sx[1]] {
            return Err(Error::ShapeMismatch {
                op: "add_bias",
                left: sx,
                right: sb,
            });
        }
        let k = sx[1];
        let vb = self.value(bias).data().to_vec();
        let mut out = self.value(x).clone();
        for row in out.data.chunks_mut(k) {
            row.iter_mut().zip(&vb).for_each(|(o, b)| *o += b);
        }
        let rg = self.rg(x) || self.rg(bias);
        Ok(self.push(out, Op::AddBias(x, bias), rg))
    }

    /// Valid cross-correlation. `x` is `[C_in × L]` or `[B × C_in × L]`,
    /// `w` is `[C_out × C_in × k]`.
    pub fn conv1d(&mut self, x: Var, w: Var, stride: usize) -> Result<Var> {
        let sx = self.shape(x).to_vec();
        let sw = self.shape(w).to_vec();
        let (batch, c_in, len, batched) = match sx[..] {
            [c, l] => (1, c, l, false),
            [b, c, l] => (b, c, l, true),
            _ => {
                return Err(Error::BadShape {
                    op: "conv1d",
                    msg: format!("input must be rank 2 or 3, got {sx:?}"),
                })
            }
        };
        if sw.len() != 3 || sw[1] != c_in {
            return Err(Error::ShapeMismatch {
                op: "conv1d",
                left: sx,
                right: sw,
            });
        }
        if stride == 0 {
            return Err(Error::BadShape {
                op: "conv1d",
                msg: "stride must be at least 1".into(),
            });
        }
        let (c_out, kernel) = (sw[0], sw[2]);
        let out_len =
            conv1d_output_len(len, kernel, stride).ok_or(Error::InputTooShort { len, kernel })?;
        let dims = ConvDims {
            batch,
            c_in,
            c_out,
            len,
            kernel,
            stride,
            out_len,
        };
        let data = conv1d_forward(self.value(x).data(), self.value(w).data(), &dims);
        let shape = if batched {
            vec![batch, c_out, out_len]
        } else {
            vec![c_out, out_len]
        };
        let rg = self.rg(x) || self.rg(w);
        Ok(self.push(Tensor { shape, data }, Op::Conv1d { x, w, dims }, rg))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.map(a, |x| x.max(0.0));
        let rg = self.rg(a);
        self.push(out, Op::Relu(a), rg)
    }

    /// Mean over the last axis restricted to columns where `valid` is true.
    /// `[C × L] → [C]` or `[B × C × L] → [B × C]`.
    pub fn masked_mean(&mut self, x: Var, valid: &[bool]) -> Result<Var> {
        let sx = self.shape(x).to_vec();
        let len = *sx.last().unwrap_or(&0);
        if sx.len() < 2 || valid.len() != len {
            return Err(Error::ShapeMismatch {
                op: "masked_mean",
                left: sx,
                right: vec![valid.len()],
            });
        }
        let count = valid.iter().filter(|&&v| v).count();
        if count == 0 {
            return Err(Error::EmptyValidRegion);
        }
        let inv = 1.0 / count as f64;
        let data = self
            .value(x)
            .data()
            .chunks(len)
            .map(|row| {
                row.iter()
                    .zip(valid)
                    .filter_map(|(v, &ok)| ok.then_some(v))
                    .sum::<f64>()
                    * inv
            })
            .collect();
        let shape = sx[..sx.len() - 1].to_vec();
        let rg = self.rg(x);
        Ok(self.push(
            Tensor { shape, data },
            Op::MaskedMean {
                x,
                valid: valid.to_vec(),
                count,
            },
            rg,
        ))
    }

    /// Slice `[start, start + len)` of the last axis.
    pub fn narrow(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let sx = self.shape(x).to_vec();
        let full = *sx.last().unwrap_or(&0);
        if len == 0 || start + len > full {
            return Err(Error::BadShape {
                op: "narrow",
                msg: format!("range {start}..{} outside last extent {full}", start + len),
            });
        }
        let data = self
            .value(x)
            .data()
            .chunks(full)
            .flat_map(|row| row[start..start + len].iter().copied())
            .collect();
        let mut shape = sx;
        *shape.last_mut().unwrap() = len;
        let rg = self.rg(x);
        Ok(self.push(Tensor { shape, data }, Op::Narrow { x, start }, rg))
    }

    /// Row-wise log-softmax of a `[B × K]` tensor (max-subtracted).
    pub fn log_softmax(&mut self, x: Var) -> Result<Var> {
        let sx = self.shape(x).to_vec();
        if sx.len() != 2 {
            return Err(Error::BadShape {
                op: "log_softmax",
                msg: format!("expected [B × K], got {sx:?}"),
            });
        }
        let k = sx[1];
        let mut out = self.value(x).clone();
        for row in out.data.chunks_mut(k) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            row.iter_mut().for_each(|v| *v -= lse);
        }
        let rg = self.rg(x);
        Ok(self.push(out, Op::LogSoftmax(x), rg))
    }

    /// `-mean_b logp[b, label_b]`.
    pub fn nll_loss(&mut self, logp: Var, labels: &[usize]) -> Result<Var> {
        let sx = self.shape(logp).to_vec();
        if sx.len() != 2 || sx[0] != labels.len() {
            return Err(Error::ShapeMismatch {
                op: "nll_loss",
                left: sx,
                right: vec![labels.len()],
            });
        }
        let k = sx[1];
        if let Some(&label) = labels.iter().find(|&&l| l >= k) {
            return Err(Error::LabelOutOfRange { label, classes: k });
        }
        let lp = self.value(logp).data();
        let loss =
            -labels.iter().enumerate().map(|(b, &l)| lp[b * k + l]).sum::<f64>() / labels.len() as f64;
        let rg = self.rg(logp);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::NllLoss {
                logp,
                labels: labels.to_vec(),
            },
            rg,
        ))
    }

    /// Records an externally computed operation.
    pub fn custom(&mut self, inputs: &[Var], output: Tensor, f: Box<dyn Function>) -> Var {
        let rg = inputs.iter().any(|&v| self.rg(v));
        self.push(
            output,
            Op::Custom {
                inputs: inputs.to_vec(),
                f,
            },
            rg,
        )
    }

    /// Reverse sweep from a scalar `loss`. Gradients are added to whatever
    /// each node already holds, so repeated calls accumulate until
    /// [`Tape::zero_grad`].
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let lv = self.value(loss);
        if !lv.is_scalar() {
            return Err(Error::NonScalarLoss(lv.shape().to_vec()));
        }
        if !self.rg(loss) {
            return Ok(());
        }
        let mut scratch: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        scratch[loss.0] = Some(vec![1.0]);
        for id in (0..=loss.0).rev() {
            let Some(g) = scratch[id].take() else { continue };
            if self.nodes[id].requires_grad {
                self.propagate(id, &g, &mut scratch);
            }
            scratch[id] = Some(g);
        }
        for (node, g) in self.nodes.iter_mut().zip(scratch) {
            if let (true, Some(g)) = (node.requires_grad, g) {
                add_into(&mut node.grad, g);
            }
        }
        Ok(())
    }

    fn propagate(&self, id: usize, g: &[f64], scratch: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[id];
        let val = |v: Var| self.nodes[v.0].value.data();
        let send = |v: Var, grad: Vec<f64>, scratch: &mut [Option<Vec<f64>>]| {
            if self.nodes[v.0].requires_grad {
                add_into(&mut scratch[v.0], grad);
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                send(*a, g.to_vec(), scratch);
                send(*b, g.to_vec(), scratch);
            }
            Op::Sub(a, b) => {
                send(*a, g.to_vec(), scratch);
                send(*b, g.iter().map(|x| -x).collect(), scratch);
            }
            Op::Mul(a, b) => {
                let (va, vb) = (val(*a), val(*b));
                if self.rg(*a) {
                    send(*a, g.iter().zip(vb).map(|(g, y)| g * y).collect(), scratch);
                }
                if self.rg(*b) {
                    send(*b, g.iter().zip(va).map(|(g, x)| g * x).collect(), scratch);
                }
            }
            Op::Scale(a, c) => send(*a, g.iter().map(|x| x * c).collect(), scratch),
            Op::Offset(a) | Op::Reshape(a) => send(*a, g.to_vec(), scratch),
            Op::Sum(a) => send(*a, vec![g[0]; val(*a).len()], scratch),
            Op::MatMul(a, b) => {
                let (sa, sb) = (self.shape(*a), self.shape(*b));
                let (m, k, p) = (sa[0], sa[1], sb[1]);
                let (va, vb) = (val(*a), val(*b));
                if self.rg(*a) {
                    // dA = dC·Bᵀ
                    let mut da = vec![0.0; m * k];
                    for i in 0..m {
                        for t in 0..k {
                            da[i * k + t] = (0..p).map(|j| g[i * p + j] * vb[t * p + j]).sum();
                        }
                    }
                    send(*a, da, scratch);
                }
                if self.rg(*b) {
                    // dB = Aᵀ·dC
                    let mut db = vec![0.0; k * p];
                    for i in 0..m {
                        for t in 0..k {
                            let av = va[i * k + t];
                            for j in 0..p {
                                db[t * p + j] += av * g[i * p + j];
                            }
                        }
                    }
                    send(*b, db, scratch);
                }
            }
            Op::AddBias(x, bias) => {
                let k = self.shape(*bias)[0];
                if self.rg(*bias) {
                    let mut db = vec![0.0; k];
                    for row in g.chunks(k) {
                        db.iter_mut().zip(row).for_each(|(d, r)| *d += r);
                    }
                    send(*bias, db, scratch);
                }
                send(*x, g.to_vec(), scratch);
            }
            Op::Conv1d { x, w, dims } => {
                let (dx, dw) =
                    conv1d_backward(val(*x), val(*w), g, dims, self.rg(*x), self.rg(*w));
                if let Some(dx) = dx {
                    send(*x, dx, scratch);
                }
                if let Some(dw) = dw {
                    send(*w, dw, scratch);
                }
            }
            Op::Relu(a) => {
                let va = val(*a);
                send(
                    *a,
                    g.iter().zip(va).map(|(g, &x)| if x > 0.0 { *g } else { 0.0 }).collect(),
                    scratch,
                );
            }
            Op::MaskedMean { x, valid, count } => {
                let len = valid.len();
                let inv = 1.0 / *count as f64;
                let mut dx = vec![0.0; g.len() * len];
                for (row, &gv) in dx.chunks_mut(len).zip(g) {
                    for (d, &ok) in row.iter_mut().zip(valid) {
                        if ok {
                            *d = gv * inv;
                        }
                    }
                }
                send(*x, dx, scratch);
            }
            Op::Narrow { x, start } => {
                let full = self.value(*x).last_extent();
                let len = node.value.last_extent();
                let mut dx = vec![0.0; val(*x).len()];
                for (drow, grow) in dx.chunks_mut(full).zip(g.chunks(len)) {
                    drow[*start..start + len].copy_from_slice(grow);
                }
                send(*x, dx, scratch);
            }
            Op::LogSoftmax(x) => {
                // dx = g - softmax · Σg
                let k = node.value.last_extent();
                let mut dx = vec![0.0; g.len()];
                for ((d, grow), lrow) in dx.chunks_mut(k).zip(g.chunks(k)).zip(node.value.data().chunks(k)) {
                    let gs: f64 = grow.iter().sum();
                    for ((d, gv), lv) in d.iter_mut().zip(grow).zip(lrow) {
                        *d = gv - lv.exp() * gs;
                    }
                }
                send(*x, dx, scratch);
            }
            Op::NllLoss { logp, labels } => {
                let k = self.value(*logp).last_extent();
                let mut d = vec![0.0; labels.len() * k];
                let c = -g[0] / labels.len() as f64;
                for (b, &l) in labels.iter().enumerate() {
                    d[b * k + l] = c;
                }
                send(*logp, d, scratch);
            }
            Op::Custom { inputs, f } => {
                let values: Vec<&Tensor> = inputs.iter().map(|v| self.value(*v)).collect();
                let wanted: Vec<bool> = inputs.iter().map(|v| self.rg(*v)).collect();
                let grads = f.backward(g, &values, &wanted);
                for ((v, gv), want) in inputs.iter().zip(grads).zip(wanted) {
                    if let (true, Some(gv)) = (want, gv) {
                        send(*v, gv, scratch);
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn elementwise_values() {
        let mut tape = Tape::new();
        let a = tape.constant(t(&[2], &[1.0, 2.0]));
        let b = tape.constant(t(&[2], &[3.0, 4.0]));
        let s = tape.add(a, b).unwrap();
        assert_eq!(tape.value(s).data(), &[4.0, 6.0]);
        let c = tape.constant(t(&[2], &[2.0, 3.0]));
        let d = tape.constant(t(&[2], &[0.0, 1.0]));
        let p = tape.mul(c, d).unwrap();
        assert_eq!(tape.value(p).data(), &[0.0, 3.0]);
    }

    #[test]
    fn shape_mismatch_names_both_shapes() {
        let mut tape = Tape::new();
        let a = tape.constant(t(&[2], &[1.0, 2.0]));
        let b = tape.constant(t(&[3], &[1.0, 2.0, 3.0]));
        let err = tape.add(a, b).unwrap_err().to_string();
        assert!(err.contains("[2]") && err.contains("[3]"), "{err}");
    }

    #[test]
    fn self_subtraction_has_zero_gradient() {
        let mut tape = Tape::new();
        let x = tape.variable(t(&[3], &[1.0, -2.0, 5.0]));
        let d = tape.sub(x, x).unwrap();
        assert_eq!(tape.value(d).data(), &[0.0; 3]);
        let s = tape.sum(d);
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[0.0; 3]);
    }

    #[test]
    fn matmul_values() {
        let mut tape = Tape::new();
        let i = tape.constant(t(&[2, 2], &[1.0, 0.0, 0.0, 1.0]));
        let v = tape.constant(t(&[2, 1], &[5.0, 7.0]));
        let r = tape.matmul(i, v).unwrap();
        assert_eq!(tape.value(r).data(), &[5.0, 7.0]);
        let a = tape.constant(t(&[1, 2], &[1.0, 2.0]));
        let b = tape.constant(t(&[2, 1], &[3.0, 4.0]));
        let r = tape.matmul(a, b).unwrap();
        assert_eq!(tape.value(r).shape(), &[1, 1]);
        assert_eq!(tape.value(r).data(), &[11.0]);
        assert!(tape.matmul(a, a).is_err());
    }

    #[test]
    fn conv1d_values_and_errors() {
        let mut tape = Tape::new();
        let x = tape.constant(t(&[1, 4], &[1.0, 2.0, 3.0, 4.0]));
        let w = tape.constant(t(&[1, 1, 2], &[1.0, 1.0]));
        let y = tape.conv1d(x, w, 1).unwrap();
        assert_eq!(tape.value(y).data(), &[3.0, 5.0, 7.0]);
        let delta = tape.constant(t(&[1, 1, 1], &[1.0]));
        let y = tape.conv1d(x, delta, 1).unwrap();
        assert_eq!(tape.value(y).data(), &[1.0, 2.0, 3.0, 4.0]);
        let wide = tape.constant(t(&[1, 1, 5], &[1.0; 5]));
        assert!(matches!(
            tape.conv1d(x, wide, 1),
            Err(Error::InputTooShort { len: 4, kernel: 5 })
        ));
    }

    #[test]
    fn relu_and_masked_mean() {
        let mut tape = Tape::new();
        let x = tape.constant(t(&[3], &[-1.0, 0.0, 2.0]));
        let r = tape.relu(x);
        assert_eq!(tape.value(r).data(), &[0.0, 0.0, 2.0]);

        let x = tape.variable(t(&[1, 3], &[1.0, 2.0, 3.0]));
        let m = tape.masked_mean(x, &[true, true, false]).unwrap();
        assert_eq!(tape.value(m).data(), &[1.5]);
        let full = tape.masked_mean(x, &[true; 3]).unwrap();
        assert_eq!(tape.value(full).data(), &[2.0]);
        assert!(matches!(
            tape.masked_mean(x, &[false; 3]),
            Err(Error::EmptyValidRegion)
        ));

        let s = tape.sum(m);
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[0.5, 0.5, 0.0]);
    }

    #[test]
    fn log_softmax_and_nll() {
        let mut tape = Tape::new();
        let x = tape.constant(t(&[1, 2], &[0.0, 0.0]));
        let lp = tape.log_softmax(x).unwrap();
        for v in tape.value(lp).data() {
            assert!((v + 2f64.ln()).abs() < 1e-15);
        }
        let confident = tape.constant(t(&[1, 3], &[0.0, 800.0, 0.0]));
        let lp = tape.log_softmax(confident).unwrap();
        let loss = tape.nll_loss(lp, &[1]).unwrap();
        assert!(tape.value(loss).item().abs() < 1e-12);
        assert!(matches!(
            tape.nll_loss(lp, &[3]),
            Err(Error::LabelOutOfRange { label: 3, classes: 3 })
        ));
    }

    #[test]
    fn backward_contracts() {
        let mut tape = Tape::new();
        let x = tape.variable(t(&[3], &[1.0, 2.0, 3.0]));
        let y = tape.scale(x, 2.0);
        assert!(matches!(tape.backward(y), Err(Error::NonScalarLoss(_))));
        let s = tape.sum(y);
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[2.0; 3]);
        // no zeroing in between: gradients accumulate
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[4.0; 3]);
        tape.zero_grad();
        assert!(tape.grad(x).is_none());
    }

    #[test]
    fn detach_blocks_gradient() {
        let mut tape = Tape::new();
        let y = tape.variable(t(&[2], &[1.0, 2.0]));
        let z = tape.variable(t(&[2], &[3.0, 4.0]));
        let dy = tape.detach(y);
        assert_eq!(tape.value(dy), tape.value(y));
        let p = tape.mul(dy, z).unwrap();
        let s = tape.sum(p);
        tape.backward(s).unwrap();
        assert!(tape.grad(y).is_none());
        assert_eq!(tape.grad(z).unwrap(), &[1.0, 2.0]);
    }

    #[test]
    fn constants_never_receive_gradient() {
        let mut tape = Tape::new();
        let c = tape.constant(t(&[2], &[1.0, 2.0]));
        let v = tape.variable(t(&[2], &[1.0, 1.0]));
        let p = tape.mul(c, v).unwrap();
        let s = tape.sum(p);
        tape.backward(s).unwrap();
        assert!(tape.grad(c).is_none());
        assert!(!tape.requires_grad(c));
    }

    #[test]
    fn narrow_scatters_gradient() {
        let mut tape = Tape::new();
        let x = tape.variable(t(&[2, 4], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]));
        let n = tape.narrow(x, 1, 2).unwrap();
        assert_eq!(tape.value(n).data(), &[2.0, 3.0, 6.0, 7.0]);
        let s = tape.sum(n);
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[0.0, 1.0, 1.0, 0.0, 0.0, 1.0, 1.0, 0.0]);
    }
}
