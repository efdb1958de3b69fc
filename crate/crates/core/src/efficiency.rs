//! Energy-efficiency penalty and multiply-accumulate accounting.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frontend::{effective_len, DownsampleSpec, WindowSpec};
use crate::tensor::{conv1d_output_len, Tape, Var};

/// Penalty weight and the previous-epoch means it compares against.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyState {
    pub lambda: f64,
    /// Previous-epoch mean of `m`, in samples.
    pub mu_m: f64,
    /// Previous-epoch mean of `s`, in bins.
    pub mu_s: f64,
    sum_m: f64,
    sum_s: f64,
    count: usize,
}

impl PenaltyState {
    /// The means start at the initial parameter values, so the first epoch
    /// only penalizes growth.
    pub fn new(lambda: f64, init_m: f64, init_s: f64) -> Self {
        assert!(init_m > 0.0 && init_s > 0.0, "penalty means must be positive");
        Self {
            lambda,
            mu_m: init_m,
            mu_s: init_s,
            sum_m: 0.0,
            sum_s: 0.0,
            count: 0,
        }
    }

    /// Records the parameter values of one optimizer step.
    pub fn accumulate(&mut self, m: f64, s: f64) {
        self.sum_m += m;
        self.sum_s += s;
        self.count += 1;
    }

    pub fn pending(&self) -> usize {
        self.count
    }

    /// Closes an epoch: the means become this epoch's averages. An epoch with
    /// no recorded steps keeps the previous means.
    pub fn epoch_update(&mut self) {
        if self.count > 0 {
            self.mu_m = self.sum_m / self.count as f64;
            self.mu_s = self.sum_s / self.count as f64;
        }
        self.sum_m = 0.0;
        self.sum_s = 0.0;
        self.count = 0;
    }

    /// `λ·[max(m−μm,0)/μm + max(s−μs,0)/μs]·loss` as a plain number.
    pub fn value(&self, m: f64, s: f64, loss: f64) -> f64 {
        let excess = (m - self.mu_m).max(0.0) / self.mu_m + (s - self.mu_s).max(0.0) / self.mu_s;
        self.lambda * excess * loss
    }
}

/// Records the penalty on the tape. Gradient reaches `m` and `s` only: the
/// loss factor is detached and the clip has zero subgradient at the kink.
pub fn penalty(tape: &mut Tape, m: Var, s: Var, state: &PenaltyState, loss: Var) -> Result<Var> {
    let rel_m = tape.scale(m, 1.0 / state.mu_m);
    let rel_m = tape.offset(rel_m, -1.0);
    let over_m = tape.relu(rel_m);
    let rel_s = tape.scale(s, 1.0 / state.mu_s);
    let rel_s = tape.offset(rel_s, -1.0);
    let over_s = tape.relu(rel_s);
    let excess = tape.add(over_m, over_s)?;
    let weighted = tape.scale(excess, state.lambda);
    let frozen = tape.detach(loss);
    tape.mul(weighted, frozen)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LayerDesc {
    Conv1d {
        c_in: usize,
        c_out: usize,
        kernel: usize,
        stride: usize,
    },
    Relu,
    /// Mean over the time axis; turns `[C × L]` into `[C]`.
    Pool,
    Linear {
        inputs: usize,
        outputs: usize,
    },
}

impl LayerDesc {
    fn label(&self) -> String {
        match *self {
            LayerDesc::Conv1d {
                c_in,
                c_out,
                kernel,
                stride,
            } => format!("conv1d {c_in}->{c_out} k={kernel} stride={stride}"),
            LayerDesc::Relu => "relu".into(),
            LayerDesc::Pool => "pool".into(),
            LayerDesc::Linear { inputs, outputs } => format!("linear {inputs}->{outputs}"),
        }
    }
}

/// Layer chain of a backbone, used for cost accounting.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackboneDesc {
    pub layers: Vec<LayerDesc>,
}

impl BackboneDesc {
    /// Checks that channel counts and feature sizes line up. The chain takes
    /// a single-channel signal.
    pub fn validate(&self) -> Result<()> {
        let mut channels = 1;
        let mut pooled = false;
        for (index, layer) in self.layers.iter().enumerate() {
            let bad = |why: &str| Error::InvalidSpec(format!("layer {index} ({}): {why}", layer.label()));
            match *layer {
                LayerDesc::Conv1d { c_in, c_out, kernel, stride } => {
                    if pooled {
                        return Err(bad("convolution after pooling"));
                    }
                    if c_in != channels || kernel == 0 || stride == 0 || c_out == 0 {
                        return Err(bad(&format!("expects {channels} input channels")));
                    }
                    channels = c_out;
                }
                LayerDesc::Relu => {}
                LayerDesc::Pool => {
                    if pooled {
                        return Err(bad("pooled twice"));
                    }
                    pooled = true;
                }
                LayerDesc::Linear { inputs, outputs } => {
                    if !pooled || inputs != channels || outputs == 0 {
                        return Err(bad(&format!("expects {channels} pooled features")));
                    }
                    channels = outputs;
                }
            }
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| match *l {
                LayerDesc::Conv1d { c_in, c_out, kernel, .. } => c_in * c_out * kernel,
                LayerDesc::Linear { inputs, outputs } => inputs * outputs + outputs,
                LayerDesc::Relu | LayerDesc::Pool => 0,
            })
            .sum()
    }

    /// Shortest input for which every convolution yields at least one column.
    pub fn min_input_len(&self) -> usize {
        self.layers.iter().rev().fold(1, |need, l| match *l {
            LayerDesc::Conv1d { kernel, stride, .. } => (need - 1) * stride + kernel,
            _ => need,
        })
    }

    /// Samples of input seen by one column of the last convolution.
    pub fn receptive_field(&self) -> usize {
        self.min_input_len()
    }
}

/// Multiply-accumulates for one forward pass on `input_len` samples:
/// `C_in·C_out·k·L_out` per convolution plus `in·out` per linear layer.
pub fn mac_count(desc: &BackboneDesc, input_len: usize) -> Result<u64> {
    let mut len = input_len;
    let mut macs = 0u64;
    for (index, layer) in desc.layers.iter().enumerate() {
        match *layer {
            LayerDesc::Conv1d { c_in, c_out, kernel, stride } => {
                let out = conv1d_output_len(len, kernel, stride).ok_or_else(|| {
                    Error::ChainUnderflow {
                        index,
                        layer: layer.label(),
                        len,
                    }
                })?;
                macs += (c_in * c_out * kernel * out) as u64;
                len = out;
            }
            LayerDesc::Linear { inputs, outputs } => macs += (inputs * outputs) as u64,
            LayerDesc::Pool => len = 1,
            LayerDesc::Relu => {}
        }
    }
    Ok(macs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub m_ms: f64,
    pub s_hz: f64,
    pub input_samples_effective: usize,
    pub macs: u64,
    pub mac_ratio_vs_reference: f64,
    pub param_count: usize,
}

/// Cost of running `desc` on inputs decimated to `dspec.s` and cropped to
/// `wspec.m`, relative to the same chain at `reference = (m_ref, s_ref)`.
///
/// Effective lengths below the chain's minimum input are raised to it.
pub fn energy_report(
    wspec: &WindowSpec,
    dspec: &DownsampleSpec,
    desc: &BackboneDesc,
    reference: (f64, f64),
) -> Result<EnergyReport> {
    desc.validate()?;
    let floor = desc.min_input_len();
    let len_at = |m: f64, s: f64| effective_len(m, s, dspec.n_bins).max(floor);
    let input_samples_effective = len_at(wspec.m, dspec.s);
    let macs = mac_count(desc, input_samples_effective)?;
    let ref_macs = mac_count(desc, len_at(reference.0, reference.1))?;
    Ok(EnergyReport {
        m_ms: wspec.m / dspec.rate_in * 1000.0,
        s_hz: dspec.s_hz(),
        input_samples_effective,
        macs,
        mac_ratio_vs_reference: macs as f64 / ref_macs as f64,
        param_count: desc.param_count(),
    })
}
