//! Small 1-D CNN classifier that aggregates only over the valid region.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::efficiency::{BackboneDesc, LayerDesc};
use crate::error::{Error, Result};
use crate::tensor::{conv1d_output_len, Parameter, Tape, Tensor, Var};

const CONVS: [(usize, usize, usize, usize); 3] = [(1, 16, 9, 4), (16, 32, 9, 4), (32, 64, 9, 2)];

pub struct Backbone {
    pub convs: Vec<Parameter>,
    pub weight: Parameter,
    pub bias: Parameter,
    desc: BackboneDesc,
    num_classes: usize,
}

/// Tape handles of one bound backbone, in [`Backbone::params_mut`] order.
pub struct BoundBackbone {
    vars: Vec<Var>,
}

fn uniform(rng: &mut ChaCha8Rng, n: usize, fan_in: usize) -> Vec<f64> {
    let a = 1.0 / (fan_in as f64).sqrt();
    (0..n).map(|_| rng.random_range(-a..a)).collect()
}

/// Marks output columns whose receptive field touches a valid input sample.
pub fn propagate_valid(valid: &[bool], kernel: usize, stride: usize) -> Option<Vec<bool>> {
    let out = conv1d_output_len(valid.len(), kernel, stride)?;
    Some(
        (0..out)
            .map(|j| valid[j * stride..j * stride + kernel].iter().any(|&v| v))
            .collect(),
    )
}

/// Layer chain of the classifier for `num_classes` outputs.
pub fn backbone_desc(num_classes: usize) -> BackboneDesc {
    let mut layers = Vec::new();
    for &(c_in, c_out, kernel, stride) in &CONVS {
        layers.push(LayerDesc::Conv1d { c_in, c_out, kernel, stride });
        layers.push(LayerDesc::Relu);
    }
    layers.push(LayerDesc::Pool);
    layers.push(LayerDesc::Linear {
        inputs: CONVS[CONVS.len() - 1].1,
        outputs: num_classes,
    });
    BackboneDesc { layers }
}

impl Backbone {
    /// conv(1→16,k9,s4) → relu → conv(16→32,k9,s4) → relu → conv(32→64,k9,s2)
    /// → relu → masked mean → linear(64→K) → log-softmax. Weights are drawn
    /// from U(−a, a) with a = 1/√fan_in; the output bias starts at zero.
    pub fn new(num_classes: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut convs = Vec::new();
        for (i, &(c_in, c_out, kernel, _)) in CONVS.iter().enumerate() {
            let w = Tensor::new(
                vec![c_out, c_in, kernel],
                uniform(rng, c_out * c_in * kernel, c_in * kernel),
            )
            .expect("static shape");
            convs.push(Parameter::new(format!("conv{}", i + 1), w));
        }
        let feat = CONVS[CONVS.len() - 1].1;
        let weight = Parameter::new(
            "linear.weight",
            Tensor::new(vec![feat, num_classes], uniform(rng, feat * num_classes, feat))
                .expect("static shape"),
        );
        let bias = Parameter::new("linear.bias", Tensor::zeros(&[num_classes]));
        Self {
            convs,
            weight,
            bias,
            desc: backbone_desc(num_classes),
            num_classes,
        }
    }

    pub fn desc(&self) -> &BackboneDesc {
        &self.desc
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn param_count(&self) -> usize {
        self.convs.iter().map(Parameter::numel).sum::<usize>()
            + self.weight.numel()
            + self.bias.numel()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter> {
        let mut out: Vec<&mut Parameter> = self.convs.iter_mut().collect();
        out.push(&mut self.weight);
        out.push(&mut self.bias);
        out
    }

    pub fn bind(&self, tape: &mut Tape) -> BoundBackbone {
        let mut vars: Vec<Var> = self.convs.iter().map(|p| p.bind(tape)).collect();
        vars.push(self.weight.bind(tape));
        vars.push(self.bias.bind(tape));
        BoundBackbone { vars }
    }

    pub fn absorb_grads(&mut self, tape: &Tape, bound: &BoundBackbone) {
        for (p, &v) in self.params_mut().into_iter().zip(&bound.vars) {
            p.absorb_grad(tape, v);
        }
    }

    /// Valid mask at the output of each convolution, last one included.
    fn valid_columns(&self, valid: &[bool]) -> Result<Vec<Vec<bool>>> {
        let mut masks = Vec::with_capacity(CONVS.len());
        let mut cur = valid.to_vec();
        for (index, &(_, _, kernel, stride)) in CONVS.iter().enumerate() {
            cur = propagate_valid(&cur, kernel, stride).ok_or_else(|| Error::ChainUnderflow {
                index,
                layer: format!("conv{}", index + 1),
                len: cur.len(),
            })?;
            masks.push(cur.clone());
        }
        Ok(masks)
    }

    /// Log-probabilities `[B × K]` for input `x` of shape `[B × N]`.
    ///
    /// With `crop` set, only the slice of `x` that feeds valid output columns
    /// is convolved. Columns outside it are never aggregated, so this gives
    /// the same values and gradients as the full-length pass.
    pub fn forward(
        &self,
        tape: &mut Tape,
        bound: &BoundBackbone,
        x: Var,
        valid: &[bool],
        crop: bool,
    ) -> Result<Var> {
        let shape = tape.shape(x).to_vec();
        let [batch, n] = shape[..] else {
            return Err(Error::BadShape {
                op: "backbone",
                msg: format!("expected [B × N], got {shape:?}"),
            });
        };
        if valid.len() != n {
            return Err(Error::ShapeMismatch {
                op: "backbone",
                left: shape,
                right: vec![valid.len()],
            });
        }
        let masks = self.valid_columns(valid)?;
        let last = &masks[masks.len() - 1];
        let first = last.iter().position(|&v| v).ok_or(Error::EmptyValidRegion)?;
        let end = last.iter().rposition(|&v| v).expect("non-empty");
        let (mut h, pooled_mask) = if crop {
            // input range feeding columns first..=end of the last layer
            let (mut lo, mut hi) = (first, end);
            for &(_, _, kernel, stride) in CONVS.iter().rev() {
                lo *= stride;
                hi = hi * stride + kernel - 1;
            }
            let sliced = tape.narrow(x, lo, hi - lo + 1)?;
            (sliced, last[first..=end].to_vec())
        } else {
            (x, last.clone())
        };
        let len = tape.shape(h)[1];
        h = tape.reshape(h, &[batch, 1, len])?;
        for (i, &(_, _, _, stride)) in CONVS.iter().enumerate() {
            h = tape.conv1d(h, bound.vars[i], stride)?;
            h = tape.relu(h);
        }
        let pooled = tape.masked_mean(h, &pooled_mask)?;
        let logits = tape.matmul(pooled, bound.vars[CONVS.len()])?;
        let logits = tape.add_bias(logits, bound.vars[CONVS.len() + 1])?;
        tape.log_softmax(logits)
    }
}
