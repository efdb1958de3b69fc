//! Windowing layer with a continuous, learnable length `m`.
//!
//! The tapered families (Hamming, Hann, Tukey) live on a centered integer
//! support of `round(m)` samples starting at `floor((N - round(m)) / 2)` and
//! are exactly zero outside it. The Gaussian is defined everywhere, with its
//! variance tied to `m` so that it falls to `epsilon` at `|n - c| = m / 2`.
//!
//! In hard mode the forward pass multiplies by the {0, 1} indicator of the
//! window's support while the gradient for `m` is taken from the tapered
//! (soft) window, i.e. a straight-through estimator.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Function, Tape, Tensor, Var};

/// Smallest admissible window length in samples.
pub const MIN_WINDOW: f64 = 8.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowFamily {
    Gaussian,
    Hamming,
    Hann,
    Tukey,
}

impl WindowFamily {
    pub const ALL: [WindowFamily; 4] = [
        WindowFamily::Gaussian,
        WindowFamily::Hamming,
        WindowFamily::Hann,
        WindowFamily::Tukey,
    ];

    pub fn name(self) -> &'static str {
        match self {
            WindowFamily::Gaussian => "gaussian",
            WindowFamily::Hamming => "hamming",
            WindowFamily::Hann => "hann",
            WindowFamily::Tukey => "tukey",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskMode {
    Soft,
    Hard,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowSpec {
    pub family: WindowFamily,
    /// Window length in samples.
    pub m: f64,
    /// Support length in samples.
    pub n: usize,
    pub epsilon: f64,
    pub tukey_alpha: f64,
}

impl WindowSpec {
    pub fn new(family: WindowFamily, m: f64, n: usize) -> Self {
        Self {
            family,
            m,
            n,
            epsilon: 1e-5,
            tukey_alpha: 0.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.m >= MIN_WINDOW && self.m <= self.n as f64) {
            return Err(Error::InvalidSpec(format!(
                "window length {} outside [{MIN_WINDOW}, {}]",
                self.m, self.n
            )));
        }
        if !(self.tukey_alpha > 0.0 && self.tukey_alpha <= 1.0) {
            return Err(Error::InvalidSpec(format!(
                "tukey alpha {} outside (0, 1]",
                self.tukey_alpha
            )));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::InvalidSpec(format!("epsilon {} outside (0, 1)", self.epsilon)));
        }
        Ok(())
    }

    pub fn center(&self) -> usize {
        (self.n - 1) / 2
    }

    /// Integer window length, `round(m)` clamped to `[1, N]`.
    pub fn rounded_len(&self) -> usize {
        (self.m.round() as usize).clamp(1, self.n)
    }

    /// First sample of the tapered-family support.
    pub fn support_start(&self) -> usize {
        (self.n - self.rounded_len()) / 2
    }

    /// Inclusive sample range kept by the hard mask.
    pub fn hard_range(&self) -> (usize, usize) {
        match self.family {
            WindowFamily::Gaussian => {
                let c = self.center();
                let half = (self.m / 2.0).floor() as usize;
                (c.saturating_sub(half), (c + half).min(self.n - 1))
            }
            _ => {
                let a = self.support_start();
                (a, a + self.rounded_len() - 1)
            }
        }
    }

    /// {0, 1} mask that the hard forward pass applies.
    pub fn hard_mask(&self) -> Vec<bool> {
        let (lo, hi) = self.hard_range();
        (0..self.n).map(|i| i >= lo && i <= hi).collect()
    }

    /// Samples the backbone should aggregate over in the given mode. Soft
    /// Gaussian windows never reach zero, so they keep the whole support.
    pub fn valid_mask(&self, mode: MaskMode) -> Vec<bool> {
        match (mode, self.family) {
            (MaskMode::Soft, WindowFamily::Gaussian) => vec![true; self.n],
            _ => self.hard_mask(),
        }
    }

    // Position inside the tapered support, as the phase fraction (n - a)/(m - 1).
    fn phase(&self, i: usize) -> Option<f64> {
        let a = self.support_start();
        let len = self.rounded_len();
        (i >= a && i < a + len).then(|| (i - a) as f64 / (self.m - 1.0))
    }

    fn tukey_value(&self, x: f64) -> f64 {
        let alpha = self.tukey_alpha;
        if x < alpha / 2.0 {
            0.5 * (1.0 - (2.0 * PI * x / alpha).cos())
        } else if x > 1.0 - alpha / 2.0 {
            0.5 * (1.0 - (2.0 * PI * (1.0 - x) / alpha).cos())
        } else {
            1.0
        }
    }

    // d/dx of the Tukey taper
    fn tukey_slope(&self, x: f64) -> f64 {
        let alpha = self.tukey_alpha;
        if x < alpha / 2.0 {
            PI / alpha * (2.0 * PI * x / alpha).sin()
        } else if x > 1.0 - alpha / 2.0 {
            -PI / alpha * (2.0 * PI * (1.0 - x) / alpha).sin()
        } else {
            0.0
        }
    }

    fn value_at(&self, i: usize) -> f64 {
        match self.family {
            WindowFamily::Gaussian => {
                let d = i as f64 - self.center() as f64;
                (4.0 * self.epsilon.ln() * d * d / (self.m * self.m)).exp()
            }
            WindowFamily::Hamming => self
                .phase(i)
                .map_or(0.0, |x| 0.54 - 0.46 * (2.0 * PI * x).cos()),
            WindowFamily::Hann => self
                .phase(i)
                .map_or(0.0, |x| 0.5 - 0.5 * (2.0 * PI * x).cos()),
            WindowFamily::Tukey => self.phase(i).map_or(0.0, |x| self.tukey_value(x)),
        }
    }

    fn grad_at(&self, i: usize) -> f64 {
        let m = self.m;
        match self.family {
            WindowFamily::Gaussian => {
                let d = i as f64 - self.center() as f64;
                self.value_at(i) * (-8.0 * self.epsilon.ln()) * d * d / (m * m * m)
            }
            // w = b - a·cos(2πx), x = (n - start)/(m - 1), dx/dm = -x/(m - 1)
            WindowFamily::Hamming | WindowFamily::Hann => {
                let amp = if self.family == WindowFamily::Hamming { 0.46 } else { 0.5 };
                self.phase(i).map_or(0.0, |x| {
                    -amp * (2.0 * PI * x).sin() * 2.0 * PI * x / (m - 1.0)
                })
            }
            WindowFamily::Tukey => self
                .phase(i)
                .map_or(0.0, |x| -self.tukey_slope(x) * x / (m - 1.0)),
        }
    }
}

/// Soft window values over `[0, N)`.
pub fn window_values(spec: &WindowSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    Ok((0..spec.n).map(|i| spec.value_at(i)).collect())
}

/// Elementwise derivative of [`window_values`] with respect to `m`, holding
/// the integer support fixed.
pub fn window_grad_m(spec: &WindowSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    Ok((0..spec.n).map(|i| spec.grad_at(i)).collect())
}

struct WindowOp {
    forward_mask: Vec<f64>,
    dw_dm: Vec<f64>,
}

impl Function for WindowOp {
    fn name(&self) -> &'static str {
        "window"
    }

    fn backward(&self, g: &[f64], inputs: &[&Tensor], wanted: &[bool]) -> Vec<Option<Vec<f64>>> {
        let n = self.forward_mask.len();
        let dx = wanted[0].then(|| {
            g.chunks(n)
                .flat_map(|row| row.iter().zip(&self.forward_mask).map(|(g, w)| g * w))
                .collect()
        });
        // Σ dL/dy · x · ∂w/∂m over every row, in both modes
        let dm = wanted[1].then(|| {
            let s: f64 = g
                .chunks(n)
                .zip(inputs[0].data().chunks(n))
                .map(|(gr, xr)| {
                    gr.iter()
                        .zip(xr)
                        .zip(&self.dw_dm)
                        .map(|((g, x), d)| g * x * d)
                        .sum::<f64>()
                })
                .sum();
            vec![s]
        });
        vec![dx, dm]
    }
}

/// Result of [`apply_window`]: the windowed signal and the region the
/// backbone should aggregate over.
#[derive(Debug, Clone)]
pub struct Windowed {
    pub y: Var,
    pub valid: Vec<bool>,
}

/// Applies the window to the last axis of `x`. `m` is a scalar on the tape
/// holding the window length in samples; the remaining fields of `spec`
/// (its own `m` is ignored) fix the family and support.
pub fn apply_window(
    tape: &mut Tape,
    x: Var,
    m: Var,
    spec: &WindowSpec,
    mode: MaskMode,
) -> Result<Windowed> {
    let n = tape.value(x).last_extent();
    if n != spec.n {
        return Err(Error::ShapeMismatch {
            op: "apply_window",
            left: tape.shape(x).to_vec(),
            right: vec![spec.n],
        });
    }
    let spec = WindowSpec {
        m: tape.value(m).item(),
        ..*spec
    };
    let soft = window_values(&spec)?;
    let dw_dm = window_grad_m(&spec)?;
    let forward_mask: Vec<f64> = match mode {
        MaskMode::Soft => soft,
        MaskMode::Hard => spec
            .hard_mask()
            .into_iter()
            .map(|b| if b { 1.0 } else { 0.0 })
            .collect(),
    };
    let xv = tape.value(x);
    let data = xv
        .data()
        .chunks(n)
        .flat_map(|row| row.iter().zip(&forward_mask).map(|(a, w)| a * w))
        .collect();
    let out = Tensor::new(xv.shape().to_vec(), data)?;
    let y = tape.custom(&[x, m], out, Box::new(WindowOp { forward_mask, dw_dm }));
    Ok(Windowed {
        y,
        valid: spec.valid_mask(mode),
    })
}
