//! Radix-2 FFT for real signals and half-spectrum bookkeeping.
//!
//! A real input of length `N` is zero-padded to the next power of two `P`
//! and transformed; only the `P/2 + 1` non-negative-frequency bins are kept,
//! the rest being conjugate mirrors of them. All bin indices elsewhere in the
//! crate are in padded-bin coordinates.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Precomputed twiddles and bit-reversal permutation for one transform size.
#[derive(Debug, Clone)]
pub struct FftPlan {
    n: usize,
    twiddles: Vec<Complex64>,
    bitrev: Vec<usize>,
}

impl FftPlan {
    /// `n` must be a power of two and at least 2.
    pub fn new(n: usize) -> Self {
        assert!(n >= 2 && n.is_power_of_two(), "FFT size {n} is not a power of two");
        let twiddles = (0..n / 2)
            .map(|k| {
                let a = -2.0 * PI * k as f64 / n as f64;
                Complex64::new(a.cos(), a.sin())
            })
            .collect();
        let bits = n.trailing_zeros();
        let bitrev = (0..n)
            .map(|i| i.reverse_bits() >> (usize::BITS - bits))
            .collect();
        Self {
            n,
            twiddles,
            bitrev,
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn half_len(&self) -> usize {
        self.n / 2 + 1
    }

    fn transform(&self, buf: &mut [Complex64], inverse: bool) {
        let n = self.n;
        debug_assert_eq!(buf.len(), n);
        // ifft(x) = conj(fft(conj(x))) / n
        if inverse {
            buf.iter_mut().for_each(|c| c.im = -c.im);
        }
        for i in 0..n {
            let j = self.bitrev[i];
            if i < j {
                buf.swap(i, j);
            }
        }
        let mut size = 2;
        while size <= n {
            let half = size / 2;
            let step = n / size;
            for start in (0..n).step_by(size) {
                let (lo, hi) = buf[start..start + size].split_at_mut(half);
                for (k, (u, v)) in lo.iter_mut().zip(hi.iter_mut()).enumerate() {
                    let t = *v * self.twiddles[k * step];
                    *v = *u - t;
                    *u += t;
                }
            }
            size *= 2;
        }
        if inverse {
            let s = 1.0 / n as f64;
            buf.iter_mut().for_each(|c| *c = c.conj() * s);
        }
    }

    /// Half spectrum of a real signal of length `<= n` (zero-padded).
    pub fn forward_real(&self, x: &[f64]) -> Vec<Complex64> {
        debug_assert!(x.len() <= self.n);
        let mut buf = vec![Complex64::new(0.0, 0.0); self.n];
        for (b, &v) in buf.iter_mut().zip(x) {
            b.re = v;
        }
        self.transform(&mut buf, false);
        buf.truncate(self.half_len());
        buf
    }

    /// Inverse of [`FftPlan::forward_real`]: mirrors the half spectrum with
    /// conjugate symmetry and returns the first `out_len` real samples. The
    /// imaginary parts of the DC and Nyquist bins are ignored.
    pub fn inverse_real(&self, half: &[Complex64], out_len: usize) -> Vec<f64> {
        debug_assert_eq!(half.len(), self.half_len());
        let n = self.n;
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        buf[..half.len()].copy_from_slice(half);
        buf[0].im = 0.0;
        buf[n / 2].im = 0.0;
        for k in 1..n / 2 {
            buf[n - k] = half[k].conj();
        }
        self.transform(&mut buf, true);
        buf.iter().take(out_len).map(|c| c.re).collect()
    }
}

/// Two real signals packed as `a + i·b`, transformed together.
#[derive(Debug, Clone)]
pub struct PackedSpectrum {
    bins: Vec<Complex64>,
}

impl PackedSpectrum {
    /// Transforms `a + i·b` (each zero-padded to the plan length; `b` may be
    /// absent).
    pub fn new(plan: &FftPlan, a: &[f64], b: Option<&[f64]>) -> Self {
        debug_assert!(a.len() <= plan.n);
        let mut bins = vec![Complex64::new(0.0, 0.0); plan.n];
        for (z, &v) in bins.iter_mut().zip(a) {
            z.re = v;
        }
        if let Some(b) = b {
            debug_assert!(b.len() <= plan.n);
            for (z, &v) in bins.iter_mut().zip(b) {
                z.im = v;
            }
        }
        plan.transform(&mut bins, false);
        Self { bins }
    }

    /// Bin `k` of the spectra of `a` and of `b`.
    pub fn split(&self, k: usize) -> (Complex64, Complex64) {
        let n = self.bins.len();
        let z = self.bins[k];
        let w = self.bins[(n - k) % n].conj();
        ((z + w) * 0.5, (z - w) * Complex64::new(0.0, -0.5))
    }

    /// Applies a real half-spectrum mask to both signals and returns them
    /// back in the time domain, truncated to `out_len`. A real, even mask
    /// keeps the two packed signals separate.
    pub fn filter(&self, plan: &FftPlan, mask: &[f64], out_len: usize) -> (Vec<f64>, Vec<f64>) {
        let n = self.bins.len();
        debug_assert_eq!(mask.len(), plan.half_len());
        let mut buf: Vec<Complex64> = self
            .bins
            .iter()
            .enumerate()
            .map(|(k, z)| z * mask[k.min(n - k)])
            .collect();
        plan.transform(&mut buf, true);
        buf.iter().take(out_len).map(|c| (c.re, c.im)).unzip()
    }
}

/// Non-negative-frequency half of the spectrum of a real signal.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub bins: Vec<Complex64>,
    /// Length of the signal before zero-padding.
    pub source_len: usize,
}

impl Spectrum {
    /// Transform length the bins belong to.
    pub fn padded_len(&self) -> usize {
        2 * (self.bins.len() - 1)
    }

    fn validate(&self) -> Result<()> {
        let nb = self.bins.len();
        if nb < 2 || !(nb - 1).is_power_of_two() {
            return Err(Error::MalformedSpectrum(format!(
                "{nb} bins do not form the half spectrum of a power-of-two transform"
            )));
        }
        if self.source_len == 0 || self.source_len > self.padded_len() {
            return Err(Error::MalformedSpectrum(format!(
                "source length {} does not fit transform length {}",
                self.source_len,
                self.padded_len()
            )));
        }
        let scale = self.bins.iter().map(|c| c.norm()).fold(1.0, f64::max);
        for (name, k) in [("DC", 0), ("Nyquist", nb - 1)] {
            if self.bins[k].im.abs() > 1e-9 * scale {
                return Err(Error::MalformedSpectrum(format!(
                    "{name} bin has imaginary part {}",
                    self.bins[k].im
                )));
            }
        }
        Ok(())
    }

    /// Frequency in Hz of bin `k` for a signal sampled at `rate_hz`.
    pub fn bin_hz(&self, k: f64, rate_hz: f64) -> f64 {
        k * rate_hz / self.padded_len() as f64
    }
}

/// Padded transform length used for a real signal of length `n`.
pub fn padded_len(n: usize) -> usize {
    n.next_power_of_two().max(2)
}

pub fn fft_real(x: &[f64]) -> Result<Spectrum> {
    if x.len() < 2 {
        return Err(Error::SignalTooShort(x.len()));
    }
    let plan = FftPlan::new(padded_len(x.len()));
    Ok(Spectrum {
        bins: plan.forward_real(x),
        source_len: x.len(),
    })
}

pub fn ifft_real(spectrum: &Spectrum) -> Result<Vec<f64>> {
    spectrum.validate()?;
    let plan = FftPlan::new(spectrum.padded_len());
    Ok(plan.inverse_real(&spectrum.bins, spectrum.source_len))
}

/// Direct O(N²) evaluation of the DFT definition, returning the same
/// half-spectrum (over the padded length) as [`fft_real`]. Reference only.
pub fn dft_naive(x: &[f64]) -> Spectrum {
    let n = padded_len(x.len());
    let bins = (0..n / 2 + 1)
        .map(|k| {
            x.iter()
                .enumerate()
                .map(|(t, &v)| {
                    // reduce k·t mod n before scaling to keep the angle small
                    let a = -2.0 * PI * ((k * t) % n) as f64 / n as f64;
                    Complex64::new(v * a.cos(), v * a.sin())
                })
                .sum()
        })
        .collect();
    Spectrum {
        bins,
        source_len: x.len(),
    }
}
