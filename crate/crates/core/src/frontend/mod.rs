//! Learnable pre-processing: spectral down-sampling followed by windowing.
//!
//! During training both layers keep the full signal length; the cutoff only
//! band-limits the signal and the window only zeros samples, so tensors keep
//! static shapes. The export path performs the actual decimation and crop.

mod downsample;
mod window;

pub use downsample::{
    downsample_export, export_len, spectrum_mask_grad_s, spectrum_mask_values, DownsampleSpec,
    SpectralLowpass,
};
pub use window::{
    apply_window, window_grad_m, window_values, MaskMode, WindowFamily, WindowSpec, Windowed,
    MIN_WINDOW,
};

use crate::error::{Error, Result};
use crate::tensor::{Tape, Tensor, Var};

/// Samples kept after decimating to cutoff `s` and cropping to window `m`:
/// `round(round(m) · ceil(s) / n_bins)`.
pub fn effective_len(m: f64, s: f64, n_bins: usize) -> usize {
    let kept = s.ceil().min(n_bins as f64);
    ((m.round() * kept / n_bins as f64).round() as usize).max(1)
}

/// Both layers for signals of one fixed length.
#[derive(Debug, Clone)]
pub struct Frontend {
    lowpass: SpectralLowpass,
    window: WindowSpec,
    downsample: DownsampleSpec,
    mode: MaskMode,
}

impl Frontend {
    pub fn new(family: WindowFamily, mode: MaskMode, n: usize, r: f64, rate_in: f64) -> Self {
        let downsample = DownsampleSpec::for_signal(n, 0.0, r, rate_in);
        Self {
            lowpass: SpectralLowpass::new(n),
            window: WindowSpec::new(family, n as f64, n),
            downsample,
            mode,
        }
    }

    pub fn signal_len(&self) -> usize {
        self.window.n
    }

    pub fn n_bins(&self) -> usize {
        self.downsample.n_bins
    }

    pub fn mode(&self) -> MaskMode {
        self.mode
    }

    pub fn window_spec(&self, m: f64) -> WindowSpec {
        WindowSpec { m, ..self.window }
    }

    pub fn downsample_spec(&self, s: f64) -> DownsampleSpec {
        DownsampleSpec { s, ..self.downsample }
    }

    /// Train-mode composition `window(downsample(x))`. `m` and `s` are
    /// scalars on the tape in samples and bins.
    pub fn forward(&self, tape: &mut Tape, x: Var, m: Var, s: Var) -> Result<Windowed> {
        let band = self.lowpass.forward(tape, x, s, &self.downsample)?;
        apply_window(tape, band, m, &self.window, self.mode)
    }

    /// Export-mode composition for one signal: decimate to the cutoff, then
    /// keep the centered `effective_len(m, s)` samples.
    pub fn export(&self, x: &[f64], m: f64, s: f64) -> Result<Vec<f64>> {
        let wspec = self.window_spec(m);
        wspec.validate()?;
        let dec = downsample_export(x, &self.downsample_spec(s))?;
        let keep = effective_len(m, s, self.n_bins()).min(dec.len());
        let start = (dec.len() - keep) / 2;
        Ok(dec[start..start + keep].to_vec())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrontendMode {
    Train(MaskMode),
    Export,
}

/// Value-level front end over the rows of `x` (`[N]` or `[B × N]`).
///
/// In train mode the result keeps the input shape and comes with the valid
/// mask; in export mode rows are decimated and cropped, and the mask is
/// all-true over the shorter length.
pub fn frontend_forward(
    x: &Tensor,
    wspec: &WindowSpec,
    dspec: &DownsampleSpec,
    mode: FrontendMode,
) -> Result<(Tensor, Vec<bool>)> {
    let n = x.last_extent();
    if wspec.n != n {
        return Err(Error::ShapeMismatch {
            op: "frontend_forward",
            left: x.shape().to_vec(),
            right: vec![wspec.n],
        });
    }
    match mode {
        FrontendMode::Train(mask_mode) => {
            let fe = Frontend {
                lowpass: SpectralLowpass::new(n),
                window: *wspec,
                downsample: *dspec,
                mode: mask_mode,
            };
            let mut tape = Tape::new();
            let xv = tape.constant(x.clone());
            let m = tape.constant(Tensor::scalar(wspec.m));
            let s = tape.constant(Tensor::scalar(dspec.s));
            let out = fe.forward(&mut tape, xv, m, s)?;
            Ok((tape.value(out.y).clone(), out.valid))
        }
        FrontendMode::Export => {
            let fe = Frontend {
                lowpass: SpectralLowpass::new(n),
                window: *wspec,
                downsample: *dspec,
                mode: MaskMode::Hard,
            };
            let rows: Vec<Vec<f64>> = x
                .data()
                .chunks(n)
                .map(|row| fe.export(row, wspec.m, dspec.s))
                .collect::<Result<_>>()?;
            let len = rows[0].len();
            let mut shape = x.shape().to_vec();
            *shape.last_mut().unwrap() = len;
            Ok((Tensor::new(shape, rows.concat())?, vec![true; len]))
        }
    }
}
