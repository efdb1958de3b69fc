//! Synthetic classification tasks with a known informative band and span.
//!
//! Every class owns a few tones inside `informative_band`, present only
//! inside `informative_span` (with linear fades). All signals additionally
//! carry white noise, distractor tones above the band at frequencies drawn
//! afresh for every signal, and a decoy outside the span: the tones of a
//! class drawn uniformly at random, independent of the label. The decoy is
//! what makes long windows harmful, since the backbone pools over time and
//! cannot tell where a tone occurred.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticTaskSpec {
    pub num_classes: usize,
    pub rate_in: f64,
    /// Samples per signal; a power of two.
    pub n: usize,
    /// Band holding the class tones, Hz.
    pub informative_band: (f64, f64),
    /// Half-open sample range holding the class tones.
    pub informative_span: (usize, usize),
    pub tones_per_class: usize,
    pub noise_sigma: f64,
    /// Distractor tones above the band in every signal.
    pub distractor_tones: usize,
    /// Peak amplitude of the distractor tones.
    pub distractor_amplitude: f64,
    /// Nominal amplitude of the decoy tones outside the span; class tones
    /// have nominal amplitude 1.
    pub decoy_amplitude: f64,
    /// Length of the linear fade at each end of the informative span.
    pub fade: usize,
    pub train_size: usize,
    pub test_size: usize,
    pub seed: u64,
}

impl Default for SyntheticTaskSpec {
    fn default() -> Self {
        Self {
            num_classes: 10,
            rate_in: 16_000.0,
            n: 4096,
            informative_band: (500.0, 2000.0),
            informative_span: (1248, 2848),
            tones_per_class: 2,
            noise_sigma: 0.1,
            distractor_tones: 32,
            distractor_amplitude: 1.0,
            decoy_amplitude: 1.0,
            fade: 64,
            train_size: 2000,
            test_size: 500,
            seed: 7,
        }
    }
}

impl SyntheticTaskSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidTask(msg));
        let nyquist = self.rate_in / 2.0;
        let (f_lo, f_hi) = self.informative_band;
        let (t_lo, t_hi) = self.informative_span;
        if self.num_classes < 1 {
            return bad("need at least one class".into());
        }
        if self.n < 16 || !self.n.is_power_of_two() {
            return bad(format!("signal length {} is not a power of two >= 16", self.n));
        }
        if !(self.rate_in > 0.0) {
            return bad(format!("sampling rate {} must be positive", self.rate_in));
        }
        if !(f_lo > 0.0 && f_lo < f_hi && f_hi < nyquist) {
            return bad(format!(
                "informative band ({f_lo}, {f_hi}) must satisfy 0 < lo < hi < {nyquist}"
            ));
        }
        if !(t_lo < t_hi && t_hi <= self.n) {
            return bad(format!(
                "informative span ({t_lo}, {t_hi}) must lie within [0, {})",
                self.n
            ));
        }
        if 2 * self.fade > t_hi - t_lo {
            return bad(format!("fade {} does not fit the informative span", self.fade));
        }
        if self.tones_per_class < 1 {
            return bad("need at least one tone per class".into());
        }
        if !(self.noise_sigma >= 0.0 && self.distractor_amplitude >= 0.0 && self.decoy_amplitude >= 0.0) {
            return bad("noise and distractor levels must be non-negative".into());
        }
        if self.train_size == 0 || self.test_size == 0 {
            return bad("train and test sets must be non-empty".into());
        }
        Ok(())
    }

    /// High distractors span `[1.1 f_hi, 0.95 × Nyquist]`.
    pub fn high_distractor_range(&self) -> (f64, f64) {
        let f_hi = self.informative_band.1;
        let top = 0.95 * self.rate_in / 2.0;
        (1.1 * f_hi, top.max(1.1 * f_hi))
    }

}

/// Labeled signals, stored row-major as `[count × n]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub n: usize,
    pub signals: Vec<f64>,
    pub labels: Vec<usize>,
    pub num_classes: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn signal(&self, i: usize) -> &[f64] {
        &self.signals[i * self.n..(i + 1) * self.n]
    }

    /// Rows `indices` gathered into one `[B × n]` buffer plus their labels.
    pub fn gather(&self, indices: &[usize]) -> (Vec<f64>, Vec<usize>) {
        let mut x = Vec::with_capacity(indices.len() * self.n);
        for &i in indices {
            x.extend_from_slice(self.signal(i));
        }
        (x, indices.iter().map(|&i| self.labels[i]).collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskData {
    pub train: Dataset,
    pub test: Dataset,
    /// Tone frequencies (Hz) of each class.
    pub class_tones: Vec<Vec<f64>>,
}

// Distinct frequencies in [lo, hi], at least `gap` apart.
fn draw_frequencies(rng: &mut ChaCha8Rng, count: usize, lo: f64, hi: f64) -> Vec<f64> {
    let gap = 0.5 * (hi - lo) / count as f64;
    let mut out: Vec<f64> = Vec::with_capacity(count);
    while out.len() < count {
        let f = rng.random_range(lo..=hi);
        if out.iter().all(|&g| (f - g).abs() >= gap) {
            out.push(f);
        }
    }
    out
}

// Rotates a unit phasor instead of calling `sin` per sample; the drift over
// a few thousand steps is around 1e-13.
fn add_tone(buf: &mut [f64], freq: f64, amp: f64, phase: f64, rate: f64, envelope: impl Fn(usize) -> f64) {
    let step = Complex64::from_polar(1.0, 2.0 * PI * freq / rate);
    let mut z = Complex64::from_polar(amp, phase);
    for (t, v) in buf.iter_mut().enumerate() {
        let e = envelope(t);
        if e != 0.0 {
            *v += e * z.im;
        }
        z *= step;
    }
}

/// Builds the train and test sets. Identical specs give bit-identical data.
pub fn generate_dataset(spec: &SyntheticTaskSpec) -> Result<TaskData> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (f_lo, f_hi) = spec.informative_band;
    let all = draw_frequencies(&mut rng, spec.num_classes * spec.tones_per_class, f_lo, f_hi);
    let class_tones: Vec<Vec<f64>> = all.chunks(spec.tones_per_class).map(<[f64]>::to_vec).collect();
    let high = spec.high_distractor_range();

    let (t_lo, t_hi) = spec.informative_span;
    let fade = spec.fade.max(1) as f64;
    let inside = |t: usize| -> f64 {
        if t < t_lo || t >= t_hi {
            0.0
        } else {
            let from_edge = (t - t_lo).min(t_hi - 1 - t) as f64;
            (from_edge / fade).min(1.0)
        }
    };
    let outside = |t: usize| 1.0 - inside(t);
    let noise = Normal::new(0.0, spec.noise_sigma.max(f64::MIN_POSITIVE)).expect("finite sigma");

    let make = |count: usize, rng: &mut ChaCha8Rng| -> Dataset {
        let mut labels: Vec<usize> = (0..count).map(|i| i % spec.num_classes).collect();
        labels.shuffle(rng);
        let mut signals = vec![0.0; count * spec.n];
        for (row, &label) in signals.chunks_mut(spec.n).zip(&labels) {
            for &f in &class_tones[label] {
                let amp = rng.random_range(0.7..1.3);
                let phase = rng.random_range(0.0..2.0 * PI);
                add_tone(row, f, amp, phase, spec.rate_in, inside);
            }
            for _ in 0..spec.distractor_tones {
                let f = rng.random_range(high.0..=high.1);
                let amp = spec.distractor_amplitude * rng.random_range(0.5..1.0);
                let phase = rng.random_range(0.0..2.0 * PI);
                add_tone(row, f, amp, phase, spec.rate_in, |_| 1.0);
            }
            let decoy = rng.random_range(0..spec.num_classes);
            for &f in &class_tones[decoy] {
                let amp = spec.decoy_amplitude * rng.random_range(0.7..1.3);
                let phase = rng.random_range(0.0..2.0 * PI);
                add_tone(row, f, amp, phase, spec.rate_in, outside);
            }
            if spec.noise_sigma > 0.0 {
                for v in row.iter_mut() {
                    *v += noise.sample(rng);
                }
            }
        }
        Dataset {
            n: spec.n,
            signals,
            labels,
            num_classes: spec.num_classes,
        }
    };
    let train = make(spec.train_size, &mut rng);
    let test = make(spec.test_size, &mut rng);
    Ok(TaskData {
        train,
        test,
        class_tones,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::fft_real;

    fn small() -> SyntheticTaskSpec {
        SyntheticTaskSpec {
            n: 1024,
            informative_span: (312, 712),
            train_size: 40,
            test_size: 20,
            ..Default::default()
        }
    }

    #[test]
    fn deterministic() {
        let a = generate_dataset(&small()).unwrap();
        let b = generate_dataset(&small()).unwrap();
        assert_eq!(a.train.signal(0), b.train.signal(0));
        assert_eq!(a, b);
        let c = generate_dataset(&SyntheticTaskSpec { seed: 8, ..small() }).unwrap();
        assert_ne!(a.train.signal(0), c.train.signal(0));
    }

    #[test]
    fn phasor_tone_matches_sin() {
        let mut buf = vec![0.0; 4096];
        add_tone(&mut buf, 1234.5, 0.8, 0.3, 16_000.0, |_| 1.0);
        for (t, v) in buf.iter().enumerate() {
            let want = 0.8 * (2.0 * PI * 1234.5 / 16_000.0 * t as f64 + 0.3).sin();
            assert!((v - want).abs() < 1e-11, "t {t}: {v} vs {want}");
        }
    }

    #[test]
    fn balanced_labels() {
        let d = generate_dataset(&small()).unwrap();
        for c in 0..10 {
            assert_eq!(d.train.labels.iter().filter(|&&l| l == c).count(), 4);
        }
    }

    #[test]
    fn clean_single_tone_stays_in_band() {
        let spec = SyntheticTaskSpec {
            num_classes: 1,
            tones_per_class: 1,
            noise_sigma: 0.0,
            distractor_amplitude: 0.0,
            decoy_amplitude: 0.0,
            ..small()
        };
        let d = generate_dataset(&spec).unwrap();
        let s = fft_real(d.train.signal(0)).unwrap();
        let bin_hz = spec.rate_in / 1024.0;
        let (lo, hi) = spec.informative_band;
        let (mut inside, mut total) = (0.0, 0.0);
        for (k, c) in s.bins.iter().enumerate() {
            let e = c.norm_sqr();
            total += e;
            // the fades leak a little energy next to the band edges
            if k as f64 * bin_hz >= lo - 100.0 && k as f64 * bin_hz <= hi + 100.0 {
                inside += e;
            }
        }
        assert!(inside / total > 0.99, "in-band fraction {}", inside / total);
    }

    #[test]
    fn rejects_bad_specs() {
        let bad = [
            SyntheticTaskSpec { informative_band: (500.0, 9000.0), ..small() },
            SyntheticTaskSpec { informative_span: (900, 1100), ..small() },
            SyntheticTaskSpec { n: 1000, ..small() },
        ];
        for spec in bad {
            assert!(matches!(generate_dataset(&spec), Err(Error::InvalidTask(_))));
        }
    }
}
