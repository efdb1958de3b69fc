//! Spectral down-sampling layer with a learnable cutoff `s` (in bins).
//!
//! The low-pass mask is 1 up to bin `s`, falls linearly to 0 at `s + r` and
//! stays 0 beyond, so `s` receives gradient through the ramp bins.

use std::f64::consts::PI;
use std::ops::Range;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::spectral::{FftPlan, PackedSpectrum};
use crate::tensor::{Function, Tape, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DownsampleSpec {
    /// Cutoff in bins.
    pub s: f64,
    /// Ramp width in bins.
    pub r: f64,
    /// Half-spectrum size of the (padded) transform.
    pub n_bins: usize,
    /// Input sampling rate in Hz.
    pub rate_in: f64,
}

impl DownsampleSpec {
    /// Spec for signals of `n` samples; `n_bins` follows the padded transform.
    pub fn for_signal(n: usize, s: f64, r: f64, rate_in: f64) -> Self {
        Self {
            s,
            r,
            n_bins: crate::spectral::padded_len(n) / 2 + 1,
            rate_in,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r >= 1.0) {
            return Err(Error::InvalidSpec(format!("ramp width {} below 1 bin", self.r)));
        }
        if !(self.s >= self.r + 1.0 && self.s <= self.n_bins as f64) {
            return Err(Error::InvalidSpec(format!(
                "cutoff {} outside [{}, {}]",
                self.s,
                self.r + 1.0,
                self.n_bins
            )));
        }
        Ok(())
    }

    /// Transform length the bins refer to.
    pub fn fft_len(&self) -> usize {
        2 * (self.n_bins - 1)
    }

    pub fn bin_hz(&self) -> f64 {
        self.rate_in / self.fft_len() as f64
    }

    pub fn s_hz(&self) -> f64 {
        self.s * self.bin_hz()
    }

    pub fn value_at(&self, k: usize) -> f64 {
        ((self.s + self.r - k as f64) / self.r).clamp(0.0, 1.0)
    }

    pub fn grad_at(&self, k: usize) -> f64 {
        let k = k as f64;
        if k > self.s && k < self.s + self.r {
            1.0 / self.r
        } else {
            0.0
        }
    }
}

/// Mask values over the half spectrum.
pub fn spectrum_mask_values(spec: &DownsampleSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    Ok((0..spec.n_bins).map(|k| spec.value_at(k)).collect())
}

/// `∂mask/∂s` over the half spectrum: `1/r` strictly inside the ramp.
pub fn spectrum_mask_grad_s(spec: &DownsampleSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    Ok((0..spec.n_bins).map(|k| spec.grad_at(k)).collect())
}

/// Reusable low-pass filter for signals of one length.
#[derive(Debug, Clone)]
pub struct SpectralLowpass {
    plan: FftPlan,
    signal_len: usize,
}

// Weights turning a half-spectrum inner product into the full-spectrum one.
fn half_weight(k: usize, n_bins: usize) -> f64 {
    if k == 0 || k == n_bins - 1 {
        1.0
    } else {
        2.0
    }
}

impl SpectralLowpass {
    pub fn new(signal_len: usize) -> Self {
        Self {
            plan: FftPlan::new(crate::spectral::padded_len(signal_len)),
            signal_len,
        }
    }

    pub fn signal_len(&self) -> usize {
        self.signal_len
    }

    pub fn n_bins(&self) -> usize {
        self.plan.half_len()
    }

    /// Band-limits one row: `ifft(fft(x) ⊙ mask)`, keeping the length.
    pub fn filter_row(&self, x: &[f64], mask: &[f64]) -> (Vec<f64>, Vec<Complex64>) {
        let spec = self.plan.forward_real(x);
        let masked: Vec<Complex64> = spec.iter().zip(mask).map(|(c, w)| c * w).collect();
        (self.plan.inverse_real(&masked, self.signal_len), spec)
    }

    /// Train-mode layer on the tape. `s` is a scalar holding the cutoff in
    /// bins; `spec.s` is ignored.
    pub fn forward(&self, tape: &mut Tape, x: Var, s: Var, spec: &DownsampleSpec) -> Result<Var> {
        let n = self.signal_len;
        if tape.value(x).last_extent() != n || spec.n_bins != self.n_bins() {
            return Err(Error::ShapeMismatch {
                op: "downsample",
                left: tape.shape(x).to_vec(),
                right: vec![n],
            });
        }
        let spec = DownsampleSpec {
            s: tape.value(s).item(),
            ..*spec
        };
        let mask = spectrum_mask_values(&spec)?;
        let dmask = spectrum_mask_grad_s(&spec)?;
        let ramp = match (dmask.iter().position(|&d| d != 0.0), dmask.iter().rposition(|&d| d != 0.0)) {
            (Some(lo), Some(hi)) => lo..hi + 1,
            _ => 0..0,
        };
        let xv = tape.value(x);
        let mut out = Vec::with_capacity(xv.numel());
        let mut ramp_spectra = Vec::with_capacity(xv.numel() / n);
        // rows go through the transform in pairs, packed as re + i·im
        let rows: Vec<&[f64]> = xv.data().chunks(n).collect();
        for pair in rows.chunks(2) {
            let packed = PackedSpectrum::new(&self.plan, pair[0], pair.get(1).copied());
            let (ya, yb) = packed.filter(&self.plan, &mask, n);
            out.extend(ya);
            if pair.len() == 2 {
                out.extend(yb);
            }
            let (sa, sb): (Vec<_>, Vec<_>) = ramp.clone().map(|k| packed.split(k)).unzip();
            ramp_spectra.push(sa);
            if pair.len() == 2 {
                ramp_spectra.push(sb);
            }
        }
        let out = Tensor::new(xv.shape().to_vec(), out)?;
        let op = LowpassOp {
            filter: self.clone(),
            mask,
            dmask,
            ramp,
            ramp_spectra,
        };
        Ok(tape.custom(&[x, s], out, Box::new(op)))
    }
}

struct LowpassOp {
    filter: SpectralLowpass,
    mask: Vec<f64>,
    dmask: Vec<f64>,
    /// Bins where `dmask` is non-zero.
    ramp: Range<usize>,
    /// Input spectra of each row over `ramp`.
    ramp_spectra: Vec<Vec<Complex64>>,
}

impl Function for LowpassOp {
    fn name(&self) -> &'static str {
        "downsample"
    }

    fn backward(&self, g: &[f64], _inputs: &[&Tensor], wanted: &[bool]) -> Vec<Option<Vec<f64>>> {
        let n = self.filter.signal_len;
        let nb = self.mask.len();
        let fft_len = self.filter.plan.len() as f64;
        let plan = &self.filter.plan;
        let mut dx = wanted[0].then(|| Vec::with_capacity(g.len()));
        let mut ds = 0.0;
        let rows: Vec<&[f64]> = g.chunks(n).collect();
        for (p, pair) in rows.chunks(2).enumerate() {
            let packed = PackedSpectrum::new(plan, pair[0], pair.get(1).copied());
            if let Some(dx) = dx.as_mut() {
                // the filter is a symmetric operator, so its adjoint is itself
                let (da, db) = packed.filter(plan, &self.mask, n);
                dx.extend(da);
                if pair.len() == 2 {
                    dx.extend(db);
                }
            }
            if wanted[1] {
                // <g, ifft(X ⊙ ∂w/∂s)> evaluated in the frequency domain
                for (j, k) in self.ramp.clone().enumerate() {
                    let (ga, gb) = packed.split(k);
                    let mut acc = (ga.conj() * self.ramp_spectra[2 * p][j]).re;
                    if pair.len() == 2 {
                        acc += (gb.conj() * self.ramp_spectra[2 * p + 1][j]).re;
                    }
                    ds += half_weight(k, nb) * acc * self.dmask[k] / fft_len;
                }
            }
        }
        vec![dx, wanted[1].then(|| vec![ds])]
    }
}

/// Decimated length produced by [`downsample_export`].
pub fn export_len(signal_len: usize, spec: &DownsampleSpec) -> usize {
    let kept = spec.s.ceil().min(spec.n_bins as f64);
    ((signal_len as f64 * kept / spec.n_bins as f64).round() as usize).max(1)
}

/// Export path: keeps bins `[0, ceil(s)]` (masked) and resynthesizes the
/// signal on a coarser grid of [`export_len`] samples spanning the same
/// duration, i.e. at roughly `2·s` Hz.
pub fn downsample_export(x: &[f64], spec: &DownsampleSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    let plan = FftPlan::new(crate::spectral::padded_len(x.len()));
    if plan.half_len() != spec.n_bins {
        return Err(Error::ShapeMismatch {
            op: "downsample_export",
            left: vec![x.len()],
            right: vec![spec.n_bins],
        });
    }
    let spectrum = plan.forward_real(x);
    let kept = (spec.s.ceil() as usize).min(spec.n_bins - 1);
    let out_len = export_len(x.len(), spec);
    let fft_len = plan.len() as f64;
    let step = x.len() as f64 / out_len as f64;
    let out = (0..out_len)
        .map(|t| {
            let pos = t as f64 * step;
            (0..=kept)
                .map(|k| {
                    let c = spectrum[k] * spec.value_at(k);
                    let a = 2.0 * PI * k as f64 * pos / fft_len;
                    half_weight(k, spec.n_bins) * (c.re * a.cos() - c.im * a.sin())
                })
                .sum::<f64>()
                / fft_len
        })
        .collect();
    Ok(out)
}
