use super::{Tape, Tensor, Var};

/// Trainable tensor with momentum state and an optional box constraint.
#[derive(Debug, Clone)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    pub grad: Option<Vec<f64>>,
    pub bounds: Option<(f64, f64)>,
    velocity: Vec<f64>,
}

impl Parameter {
    pub fn new(name: impl Into<String>, value: Tensor) -> Self {
        let n = value.numel();
        Self {
            name: name.into(),
            value,
            grad: None,
            bounds: None,
            velocity: vec![0.0; n],
        }
    }

    pub fn scalar(name: impl Into<String>, value: f64, bounds: Option<(f64, f64)>) -> Self {
        let mut p = Self::new(name, Tensor::scalar(value));
        p.bounds = bounds;
        p.clamp();
        p
    }

    pub fn item(&self) -> f64 {
        self.value.item()
    }

    pub fn numel(&self) -> usize {
        self.value.numel()
    }

    /// Records the current value on `tape` as a gradient-requiring leaf.
    pub fn bind(&self, tape: &mut Tape) -> Var {
        tape.variable(self.value.clone())
    }

    /// Adds whatever gradient `tape` holds for `var` into this parameter.
    pub fn absorb_grad(&mut self, tape: &Tape, var: Var) {
        if let Some(g) = tape.grad(var) {
            match &mut self.grad {
                Some(acc) => acc.iter_mut().zip(g).for_each(|(a, b)| *a += b),
                None => self.grad = Some(g.to_vec()),
            }
        }
    }

    /// Limits every gradient entry to `[-limit, limit]`.
    pub fn clip_grad(&mut self, limit: f64) {
        if let Some(g) = &mut self.grad {
            for v in g {
                *v = v.clamp(-limit, limit);
            }
        }
    }

    fn clamp(&mut self) {
        if let Some((lo, hi)) = self.bounds {
            for v in self.value.data_mut() {
                *v = v.clamp(lo, hi);
            }
        }
    }
}

/// `v ← momentum·v + grad; p ← p − lr·v`, then clamp to bounds and clear
/// gradients. A parameter without a gradient is treated as having zero grad.
pub fn sgd_step(params: &mut [&mut Parameter], lr: f64, momentum: f64) {
    for p in params.iter_mut() {
        let grad = p.grad.take();
        for (i, v) in p.velocity.iter_mut().enumerate() {
            let g = grad.as_ref().map_or(0.0, |g| g[i]);
            *v = momentum * *v + g;
        }
        let vel = &p.velocity;
        for (x, v) in p.value.data_mut().iter_mut().zip(vel) {
            *x -= lr * v;
        }
        p.clamp();
    }
}
