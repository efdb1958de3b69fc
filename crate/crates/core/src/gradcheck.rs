//! Finite-difference checks of the analytic `m` and `s` gradients.
//!
//! Every check draws random configurations, evaluates a scalar loss through
//! the tape, and compares the tape gradient with a central difference of the
//! same forward pass. Windows are checked in soft mode; the hard forward pass
//! is piecewise constant in `m`, so only its surrogate gradient exists.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::frontend::{
    apply_window, DownsampleSpec, Frontend, MaskMode, SpectralLowpass, WindowFamily, WindowSpec,
};
use crate::harness::Backbone;
use crate::tensor::{conv1d_output_len, Tape, Tensor, Var};

pub const MASK_TOLERANCE: f64 = 1e-4;
pub const END_TO_END_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub configs: usize,
    pub max_rel_err: f64,
    pub tolerance: f64,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.configs > 0 && self.max_rel_err < self.tolerance
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradcheckOptions {
    pub seed: u64,
    /// Random configurations per check.
    pub configs: usize,
    /// Multiplies every analytic gradient by `1 + corrupt` before comparing.
    /// Non-zero values are a negative control: the checks must then fail.
    pub corrupt: f64,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            configs: 20,
            corrupt: 0.0,
        }
    }
}

/// `|a - f| / max(|a|, |f|)`, or 0 when both are negligible.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs());
    if scale < 1e-12 {
        0.0
    } else {
        (analytic - numeric).abs() / scale
    }
}

// A real number at least 0.2 away from both neighbouring integers and
// half-integers, so rounding and bin kinks stay put under a small step.
fn away_from_kinks(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    let base = rng.random_range(lo..hi).floor();
    base + rng.random_range(0.1..0.4)
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

// Relative error between the analytic and central-difference derivative of
// `loss` at `p`, or `None` when the point cannot judge the gradient:
// either the loss moves by less than 1e-9 of its magnitude across the step,
// so round-off swamps the quotient, or the quotients at `h` and `h / 2`
// disagree, meaning a kink (a ReLU switching, say) lies inside the step.
fn compare(
    p: f64,
    h: f64,
    corrupt: f64,
    loss: impl Fn(f64, bool) -> Result<(f64, f64)>,
) -> Result<Option<f64>> {
    let (_, analytic) = loss(p, true)?;
    let quotient = |h: f64| -> Result<(f64, f64, f64)> {
        let (up, _) = loss(p + h, false)?;
        let (dn, _) = loss(p - h, false)?;
        Ok(((up - dn) / (2.0 * h), up, dn))
    };
    let (wide, up, dn) = quotient(h)?;
    if (up - dn).abs() < 1e-9 * up.abs().max(dn.abs()) {
        return Ok(None);
    }
    let (narrow, _, _) = quotient(h / 2.0)?;
    if relative_error(wide, narrow) > 1e-5 {
        return Ok(None);
    }
    Ok(Some(relative_error(analytic * (1.0 + corrupt), wide)))
}

// Draws configurations until `opts.configs` of them resolve, giving up after
// twenty draws per wanted configuration. The reported count is what resolved.
fn tally(
    name: impl Into<String>,
    tolerance: f64,
    opts: &GradcheckOptions,
    mut draw: impl FnMut() -> Result<Option<f64>>,
) -> Result<CheckResult> {
    let (mut configs, mut worst) = (0, 0.0f64);
    for _ in 0..opts.configs * 20 {
        if configs == opts.configs {
            break;
        }
        if let Some(err) = draw()? {
            configs += 1;
            worst = worst.max(err);
        }
    }
    Ok(CheckResult {
        name: name.into(),
        configs,
        max_rel_err: worst,
        tolerance,
    })
}

// Σ v ⊙ y as a tape scalar.
fn weighted_sum(tape: &mut Tape, y: Var, v: &[f64]) -> Result<Var> {
    let w = tape.constant(Tensor::new(tape.shape(y).to_vec(), v.to_vec())?);
    let prod = tape.mul(y, w)?;
    Ok(tape.sum(prod))
}

fn check_window(family: WindowFamily, opts: &GradcheckOptions, rng: &mut ChaCha8Rng) -> Result<CheckResult> {
    tally(format!("window/{}", family.name()), MASK_TOLERANCE, opts, || {
        let n = [64usize, 128, 256, 512][rng.random_range(0..4)];
        let m = away_from_kinks(rng, 16.0, n as f64 - 2.0);
        let x = random_vec(rng, 2 * n);
        let v = random_vec(rng, 2 * n);
        let spec = WindowSpec::new(family, m, n);
        compare(m, 1e-4, opts.corrupt, |m, grad| {
            let mut tape = Tape::new();
            let xv = tape.constant(Tensor::new(vec![2, n], x.clone())?);
            let mv = tape.variable(Tensor::scalar(m));
            let out = apply_window(&mut tape, xv, mv, &spec, MaskMode::Soft)?;
            let loss = weighted_sum(&mut tape, out.y, &v)?;
            let value = tape.value(loss).item();
            if !grad {
                return Ok((value, 0.0));
            }
            tape.backward(loss)?;
            Ok((value, tape.grad(mv).map_or(0.0, |g| g[0])))
        })
    })
}

fn check_spectral_mask(opts: &GradcheckOptions, rng: &mut ChaCha8Rng) -> Result<CheckResult> {
    tally("spectral-mask", MASK_TOLERANCE, opts, || {
        let n = [64usize, 128, 256, 512][rng.random_range(0..4)];
        let lowpass = SpectralLowpass::new(n);
        let n_bins = lowpass.n_bins();
        let r = rng.random_range(1..=(n_bins / 8).max(1)) as f64;
        let s = away_from_kinks(rng, r + 1.0, n_bins as f64 - r - 1.0);
        let spec = DownsampleSpec::for_signal(n, s, r, 1.0);
        let x = random_vec(rng, 2 * n);
        let v = random_vec(rng, 2 * n);
        // the loss is linear in s between bin kinks, which are at least 0.1
        // away, so a wide step costs no truncation error and less round-off
        compare(s, 1e-3, opts.corrupt, |s, grad| {
            let mut tape = Tape::new();
            let xv = tape.constant(Tensor::new(vec![2, n], x.clone())?);
            let sv = tape.variable(Tensor::scalar(s));
            let y = lowpass.forward(&mut tape, xv, sv, &spec)?;
            let loss = weighted_sum(&mut tape, y, &v)?;
            let value = tape.value(loss).item();
            if !grad {
                return Ok((value, 0.0));
            }
            tape.backward(loss)?;
            Ok((value, tape.grad(sv).map_or(0.0, |g| g[0])))
        })
    })
}

// Classification loss of front end plus backbone, differentiated in m
// (`in_s` false) or in s. Inputs are scaled so that the untrained logits are
// of order one; near-uniform predictions leave the loss almost flat.
fn check_end_to_end(in_s: bool, opts: &GradcheckOptions, rng: &mut ChaCha8Rng) -> Result<CheckResult> {
    const N: usize = 512;
    const BATCH: usize = 3;
    const CLASSES: usize = 3;
    const AMPLITUDE: f64 = 300.0;
    let name = if in_s { "end-to-end/s" } else { "end-to-end/m" };
    tally(name, END_TO_END_TOLERANCE, opts, || {
        let family = WindowFamily::ALL[rng.random_range(0..4)];
        let r = rng.random_range(2..=16) as f64;
        let frontend = Frontend::new(family, MaskMode::Soft, N, r, 1.0);
        let m = away_from_kinks(rng, 260.0, N as f64 - 2.0);
        let s = away_from_kinks(rng, r + 1.0, frontend.n_bins() as f64 - r - 1.0);
        let backbone = Backbone::new(CLASSES, rng);
        let x: Vec<f64> = random_vec(rng, BATCH * N).into_iter().map(|v| AMPLITUDE * v).collect();
        let labels: Vec<usize> = (0..BATCH).map(|_| rng.random_range(0..CLASSES)).collect();
        let run = |m: f64, s: f64, grad: bool| -> Result<(f64, f64)> {
            let mut tape = Tape::new();
            let xv = tape.constant(Tensor::new(vec![BATCH, N], x.clone())?);
            let mv = tape.variable(Tensor::scalar(m));
            let sv = tape.variable(Tensor::scalar(s));
            let win = frontend.forward(&mut tape, xv, mv, sv)?;
            let bound = backbone.bind(&mut tape);
            let lp = backbone.forward(&mut tape, &bound, win.y, &win.valid, true)?;
            let loss = tape.nll_loss(lp, &labels)?;
            let value = tape.value(loss).item();
            if !grad {
                return Ok((value, 0.0));
            }
            tape.backward(loss)?;
            let wrt = if in_s { sv } else { mv };
            Ok((value, tape.grad(wrt).map_or(0.0, |g| g[0])))
        };
        if in_s {
            compare(s, 1e-4, opts.corrupt, |s, grad| run(m, s, grad))
        } else {
            compare(m, 1e-4, opts.corrupt, |m, grad| run(m, s, grad))
        }
    })
}

// Which backbone op a `check_op` run exercises.
#[derive(Clone, Copy)]
enum Op {
    Conv1d,
    Matmul,
    LogSoftmaxNll,
}

// Gradient of a scalar op output with respect to randomly chosen input
// coordinates; every input of the op is a variable.
fn check_op(op: Op, opts: &GradcheckOptions, rng: &mut ChaCha8Rng) -> Result<CheckResult> {
    let name = match op {
        Op::Conv1d => "backbone/conv1d",
        Op::Matmul => "backbone/matmul",
        Op::LogSoftmaxNll => "backbone/log-softmax-nll",
    };
    tally(name, MASK_TOLERANCE, opts, || {
        let (shapes, stride) = match op {
            Op::Conv1d => {
                let (b, ci, co) = (rng.random_range(1..3), rng.random_range(1..4), rng.random_range(1..5));
                let k = rng.random_range(1..6);
                let len = k + rng.random_range(0..20);
                (vec![vec![b, ci, len], vec![co, ci, k]], rng.random_range(1..4))
            }
            Op::Matmul => {
                let (a, b, c) = (rng.random_range(1..6), rng.random_range(1..6), rng.random_range(1..6));
                (vec![vec![a, b], vec![b, c]], 1)
            }
            Op::LogSoftmaxNll => (vec![vec![rng.random_range(1..5), rng.random_range(2..7)]], 1),
        };
        let inputs: Vec<Vec<f64>> = shapes.iter().map(|s| random_vec(rng, s.iter().product())).collect();
        let classes = *shapes[0].last().expect("non-empty shape");
        let labels: Vec<usize> = (0..shapes[0][0]).map(|_| rng.random_range(0..classes)).collect();
        let v = match op {
            Op::Conv1d => {
                let out = conv1d_output_len(shapes[0][2], shapes[1][2], stride).expect("fits");
                random_vec(rng, shapes[0][0] * shapes[1][0] * out)
            }
            Op::Matmul => random_vec(rng, shapes[0][0] * shapes[1][1]),
            Op::LogSoftmaxNll => vec![],
        };
        let which = rng.random_range(0..inputs.len());
        let idx = rng.random_range(0..inputs[which].len());
        compare(inputs[which][idx], 1e-5, opts.corrupt, |p, grad| {
            let mut tape = Tape::new();
            let mut vars = Vec::new();
            for (i, (shape, data)) in shapes.iter().zip(&inputs).enumerate() {
                let mut data = data.clone();
                if i == which {
                    data[idx] = p;
                }
                vars.push(tape.variable(Tensor::new(shape.clone(), data)?));
            }
            let loss = match op {
                Op::Conv1d => {
                    let y = tape.conv1d(vars[0], vars[1], stride)?;
                    weighted_sum(&mut tape, y, &v)?
                }
                Op::Matmul => {
                    let y = tape.matmul(vars[0], vars[1])?;
                    weighted_sum(&mut tape, y, &v)?
                }
                Op::LogSoftmaxNll => {
                    let lp = tape.log_softmax(vars[0])?;
                    tape.nll_loss(lp, &labels)?
                }
            };
            let value = tape.value(loss).item();
            if !grad {
                return Ok((value, 0.0));
            }
            tape.backward(loss)?;
            Ok((value, tape.grad(vars[which]).map_or(0.0, |g| g[idx])))
        })
    })
}

/// Runs every check: one per window family, the spectral mask, three
/// backbone ops, and the end-to-end loss in `m` and in `s`.
pub fn run_gradcheck(opts: &GradcheckOptions) -> Result<Vec<CheckResult>> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut out = Vec::new();
    for family in WindowFamily::ALL {
        out.push(check_window(family, opts, &mut rng)?);
    }
    out.push(check_spectral_mask(opts, &mut rng)?);
    for op in [Op::Conv1d, Op::Matmul, Op::LogSoftmaxNll] {
        out.push(check_op(op, opts, &mut rng)?);
    }
    out.push(check_end_to_end(false, opts, &mut rng)?);
    out.push(check_end_to_end(true, opts, &mut rng)?);
    Ok(out)
}
