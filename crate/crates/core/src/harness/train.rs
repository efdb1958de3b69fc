//! Joint training of the backbone weights and the front-end parameters.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::backbone::Backbone;
use super::task::{Dataset, SyntheticTaskSpec, TaskData};
use crate::efficiency::{energy_report, penalty, EnergyReport, PenaltyState};
use crate::error::{Error, Result};
use crate::frontend::{Frontend, MaskMode, WindowFamily, MIN_WINDOW};
use crate::tensor::{sgd_step, Parameter, Tape, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Baseline {
    /// `m` and `s` are learned.
    None,
    /// One point of a grid search: `m` and `s` frozen at their initial values.
    Grid,
    /// `m` and `s` frozen at given values (typically a learned run's result).
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub family: WindowFamily,
    pub mask_mode: MaskMode,
    /// Initial window length, samples. Defaults to the full signal.
    pub init_m: Option<f64>,
    /// Initial cutoff, bins. Defaults to `N_bins − r`, the largest cutoff
    /// whose ramp still covers real bins.
    pub init_s: Option<f64>,
    /// Ramp width of the spectral mask, bins.
    pub r: f64,
    pub lambda: f64,
    pub lr_theta: f64,
    pub lr_ms: f64,
    /// Momentum of the backbone weights.
    pub momentum: f64,
    /// Momentum of `m` and `s`.
    pub momentum_ms: f64,
    /// Per-step bound on the `m` and `s` gradients (fraction units). A cutoff
    /// that strays into the informative band produces a loss spike whose
    /// gradient would otherwise throw `s` to its ceiling in one step.
    pub clip_ms: Option<f64>,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub baseline: Baseline,
    /// Windows per group for aggregate-level evaluation.
    pub eval_group: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            family: WindowFamily::Hamming,
            mask_mode: MaskMode::Hard,
            init_m: None,
            init_s: None,
            r: 256.0,
            lambda: 0.5,
            lr_theta: 0.05,
            lr_ms: 0.3,
            momentum: 0.9,
            momentum_ms: 0.0,
            clip_ms: Some(0.1),
            epochs: 10,
            batch_size: 32,
            seed: 1,
            baseline: Baseline::None,
            eval_group: 10,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.lr_theta > 0.0) {
            return bad(format!("lr_theta must be positive, got {}", self.lr_theta));
        }
        if !(self.lr_ms >= 0.0) {
            return bad(format!("lr_ms must be non-negative, got {}", self.lr_ms));
        }
        for (name, v) in [("momentum", self.momentum), ("momentum_ms", self.momentum_ms)] {
            if !(0.0..1.0).contains(&v) {
                return bad(format!("{name} must lie in [0, 1), got {v}"));
            }
        }
        if let Some(c) = self.clip_ms {
            if !(c > 0.0) {
                return bad(format!("clip_ms must be positive, got {c}"));
            }
        }
        if !(self.lambda >= 0.0) {
            return bad(format!("lambda must be non-negative, got {}", self.lambda));
        }
        if !(self.r >= 1.0) {
            return bad(format!("r must be at least 1 bin, got {}", self.r));
        }
        if self.epochs == 0 || self.batch_size == 0 || self.eval_group == 0 {
            return bad("epochs, batch_size and eval_group must be at least 1".into());
        }
        Ok(())
    }

    pub fn resolved_init(&self, task: &SyntheticTaskSpec) -> (f64, f64) {
        let n_bins = task.n / 2 + 1;
        (
            self.init_m.unwrap_or(task.n as f64),
            self.init_s.unwrap_or(n_bins as f64 - self.r),
        )
    }

    /// True when `m` and `s` stay at their initial values.
    pub fn frozen_frontend(&self) -> bool {
        self.baseline != Baseline::None
    }
}

/// Front end plus backbone. The front-end parameters are stored as fractions
/// of their upper bounds (`m / N`, `s / N_bins`) so that one learning rate
/// suits both; [`Model::m`] and [`Model::s`] give them in samples and bins.
pub struct Model {
    pub frontend: Frontend,
    pub backbone: Backbone,
    pub m_frac: Parameter,
    pub s_frac: Parameter,
}

impl Model {
    pub fn new(config: &TrainConfig, task: &SyntheticTaskSpec, rng: &mut ChaCha8Rng) -> Result<Self> {
        let frontend = Frontend::new(config.family, config.mask_mode, task.n, config.r, task.rate_in);
        let (init_m, init_s) = config.resolved_init(task);
        let n = task.n as f64;
        let nb = frontend.n_bins() as f64;
        frontend.window_spec(init_m).validate()?;
        frontend.downsample_spec(init_s).validate()?;
        let m_frac = Parameter::scalar("m", init_m / n, Some((MIN_WINDOW / n, 1.0)));
        let s_frac = Parameter::scalar("s", init_s / nb, Some(((config.r + 1.0) / nb, 1.0)));
        let backbone = Backbone::new(task.num_classes, rng);
        Ok(Self {
            frontend,
            backbone,
            m_frac,
            s_frac,
        })
    }

    pub fn m(&self) -> f64 {
        self.m_frac.item() * self.frontend.signal_len() as f64
    }

    pub fn s(&self) -> f64 {
        self.s_frac.item() * self.frontend.n_bins() as f64
    }

    pub fn set_ms(&mut self, m: f64, s: f64) {
        self.m_frac = Parameter::scalar("m", m / self.frontend.signal_len() as f64, self.m_frac.bounds);
        self.s_frac = Parameter::scalar("s", s / self.frontend.n_bins() as f64, self.s_frac.bounds);
    }

    /// Log-probabilities for a batch of raw signals (no gradient).
    pub fn predict(&self, x: &[f64], batch: usize) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let n = self.frontend.signal_len();
        let xv = tape.constant(Tensor::new(vec![batch, n], x.to_vec())?);
        let m = tape.constant(Tensor::scalar(self.m()));
        let s = tape.constant(Tensor::scalar(self.s()));
        let win = self.frontend.forward(&mut tape, xv, m, s)?;
        let bound = self.backbone.bind(&mut tape);
        let lp = self.backbone.forward(&mut tape, &bound, win.y, &win.valid, true)?;
        Ok(tape.value(lp).data().to_vec())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalLevel {
    Window,
    /// Sum log-likelihoods over groups of this many same-class windows.
    Aggregate(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalResult {
    pub accuracy: f64,
    pub error_rate: f64,
    pub count: usize,
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Scores precomputed log-probabilities `[count × K]` against `labels`.
///
/// Aggregate level groups windows of the same class in dataset order,
/// `size` at a time (a trailing partial group is kept), and predicts the
/// argmax of the summed log-likelihoods.
pub fn score(logp: &[f64], labels: &[usize], k: usize, level: EvalLevel) -> EvalResult {
    let (correct, count) = match level {
        EvalLevel::Window => {
            let correct = logp
                .chunks(k)
                .zip(labels)
                .filter(|(row, &l)| argmax(row) == l)
                .count();
            (correct, labels.len())
        }
        EvalLevel::Aggregate(size) => {
            let size = size.max(1);
            let (mut correct, mut count) = (0, 0);
            for class in 0..k {
                let rows: Vec<&[f64]> = logp
                    .chunks(k)
                    .zip(labels)
                    .filter_map(|(row, &l)| (l == class).then_some(row))
                    .collect();
                for group in rows.chunks(size) {
                    let mut total = vec![0.0; k];
                    for row in group {
                        total.iter_mut().zip(*row).for_each(|(t, v)| *t += v);
                    }
                    correct += usize::from(argmax(&total) == class);
                    count += 1;
                }
            }
            (correct, count)
        }
    };
    let accuracy = if count == 0 { 0.0 } else { correct as f64 / count as f64 };
    EvalResult {
        accuracy,
        error_rate: 1.0 - accuracy,
        count,
    }
}

const EVAL_BATCH: usize = 50;

/// Log-probabilities of every example in `data`, row-major `[len × K]`.
pub fn predict_all(model: &Model, data: &Dataset) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(data.len() * model.backbone.num_classes());
    let idx: Vec<usize> = (0..data.len()).collect();
    for chunk in idx.chunks(EVAL_BATCH) {
        let (x, _) = data.gather(chunk);
        out.extend(model.predict(&x, chunk.len())?);
    }
    Ok(out)
}

pub fn evaluate(model: &Model, data: &Dataset, level: EvalLevel) -> Result<EvalResult> {
    let lp = predict_all(model, data)?;
    Ok(score(&lp, &data.labels, model.backbone.num_classes(), level))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRow {
    pub epoch: usize,
    pub m_samples: f64,
    pub m_ms: f64,
    pub s_bins: f64,
    pub s_hz: f64,
    pub train_loss: f64,
    pub test_acc: f64,
    pub penalty: f64,
    pub mac_ratio: f64,
}

/// Per-epoch history of one run plus its final state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub rows: Vec<EpochRow>,
    /// Initial `(m, s)` in samples and bins; the MAC reference.
    pub init: (f64, f64),
    pub final_m: f64,
    pub final_s: f64,
    pub test_acc: f64,
    pub aggregate_acc: f64,
    pub energy: EnergyReport,
}

/// Trains on `task` and records one row per epoch. Rows report epoch means of
/// `m` and `s` (the values the penalty compares against next epoch).
pub fn train(config: &TrainConfig, task: &SyntheticTaskSpec, data: &TaskData) -> Result<RunLog> {
    config.validate()?;
    task.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = Model::new(config, task, &mut rng)?;
    let (init_m, init_s) = (model.m(), model.s());
    let frozen = config.frozen_frontend();
    let lambda = if frozen { 0.0 } else { config.lambda };
    let mut state = PenaltyState::new(lambda, init_m, init_s);
    let n = task.n as f64;
    let nb = model.frontend.n_bins() as f64;
    let k = task.num_classes;

    let mut order: Vec<usize> = (0..data.train.len()).collect();
    let mut rows = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let (mut loss_sum, mut pen_sum, mut steps) = (0.0, 0.0, 0usize);
        for batch in order.chunks(config.batch_size) {
            let (x, labels) = data.train.gather(batch);
            let mut tape = Tape::new();
            let xv = tape.constant(Tensor::new(vec![batch.len(), task.n], x)?);
            // frozen runs keep m and s off the gradient path entirely
            let (mf, sf) = if frozen {
                (
                    tape.constant(model.m_frac.value.clone()),
                    tape.constant(model.s_frac.value.clone()),
                )
            } else {
                (model.m_frac.bind(&mut tape), model.s_frac.bind(&mut tape))
            };
            let m = tape.scale(mf, n);
            let s = tape.scale(sf, nb);
            let win = model.frontend.forward(&mut tape, xv, m, s)?;
            let bound = model.backbone.bind(&mut tape);
            let lp = model.backbone.forward(&mut tape, &bound, win.y, &win.valid, true)?;
            let loss = tape.nll_loss(lp, &labels)?;
            let pen = penalty(&mut tape, m, s, &state, loss)?;
            let total = tape.add(loss, pen)?;
            let loss_value = tape.value(loss).item();
            if !loss_value.is_finite() {
                return Err(Error::Divergence { epoch });
            }
            tape.backward(total)?;
            model.backbone.absorb_grads(&tape, &bound);
            sgd_step(&mut model.backbone.params_mut(), config.lr_theta, config.momentum);
            if !frozen {
                model.m_frac.absorb_grad(&tape, mf);
                model.s_frac.absorb_grad(&tape, sf);
                if let Some(c) = config.clip_ms {
                    model.m_frac.clip_grad(c);
                    model.s_frac.clip_grad(c);
                }
                sgd_step(&mut [&mut model.m_frac, &mut model.s_frac], config.lr_ms, config.momentum_ms);
            }
            state.accumulate(model.m(), model.s());
            loss_sum += loss_value;
            pen_sum += tape.value(pen).item();
            steps += 1;
        }
        state.epoch_update();
        let test = evaluate(&model, &data.test, EvalLevel::Window)?;
        let report = energy_report(
            &model.frontend.window_spec(state.mu_m),
            &model.frontend.downsample_spec(state.mu_s),
            model.backbone.desc(),
            (init_m, init_s),
        )?;
        rows.push(EpochRow {
            epoch,
            m_samples: state.mu_m,
            m_ms: report.m_ms,
            s_bins: state.mu_s,
            s_hz: report.s_hz,
            train_loss: loss_sum / steps as f64,
            test_acc: test.accuracy,
            penalty: pen_sum / steps as f64,
            mac_ratio: report.mac_ratio_vs_reference,
        });
    }

    let lp = predict_all(&model, &data.test)?;
    let window = score(&lp, &data.test.labels, k, EvalLevel::Window);
    let aggregate = score(&lp, &data.test.labels, k, EvalLevel::Aggregate(config.eval_group));
    let energy = energy_report(
        &model.frontend.window_spec(model.m()),
        &model.frontend.downsample_spec(model.s()),
        model.backbone.desc(),
        (init_m, init_s),
    )?;
    Ok(RunLog {
        rows,
        init: (init_m, init_s),
        final_m: model.m(),
        final_s: model.s(),
        test_acc: window.accuracy,
        aggregate_acc: aggregate.accuracy,
        energy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scoring_levels() {
        // three classes, perfectly confident
        let labels = [0, 1, 2, 0, 1, 2];
        let lp: Vec<f64> = labels
            .iter()
            .flat_map(|&l| (0..3).map(move |c| if c == l { 0.0 } else { -50.0 }))
            .collect();
        assert_eq!(score(&lp, &labels, 3, EvalLevel::Window).accuracy, 1.0);
        assert_eq!(score(&lp, &labels, 3, EvalLevel::Aggregate(2)).accuracy, 1.0);

        // one wrong window out of four; grouping by two outvotes it
        let labels = [0, 0, 0, 0];
        let lp = vec![-0.1, -3.0, -0.2, -2.0, -0.1, -3.0, -0.9, -0.5];
        let w = score(&lp, &labels, 2, EvalLevel::Window);
        assert_eq!(w.accuracy, 0.75);
        assert!((w.error_rate - 0.25).abs() < 1e-15);
        let g1 = score(&lp, &labels, 2, EvalLevel::Aggregate(1));
        assert_eq!(g1.accuracy, w.accuracy);
        assert_eq!(score(&lp, &labels, 2, EvalLevel::Aggregate(2)).accuracy, 1.0);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig { lr_theta: 0.0, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = TrainConfig { epochs: 0, ..Default::default() };
        assert!(bad.validate().is_err());
    }
}
