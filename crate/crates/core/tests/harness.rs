use maskwin::frontend::{Frontend, MaskMode, WindowFamily};
use maskwin::harness::{evaluate, generate_dataset, train, EvalLevel, Model, SyntheticTaskSpec, TrainConfig};
use maskwin::spectral::fft_real;
use maskwin::tensor::{Tape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tiny_task() -> SyntheticTaskSpec {
    SyntheticTaskSpec {
        num_classes: 3,
        n: 1024,
        informative_span: (312, 712),
        fade: 16,
        distractor_tones: 4,
        train_size: 48,
        test_size: 24,
        ..SyntheticTaskSpec::default()
    }
}

fn tiny_config() -> TrainConfig {
    TrainConfig {
        r: 64.0,
        epochs: 2,
        batch_size: 16,
        ..TrainConfig::default()
    }
}

// Picks the class whose tones carry the most energy inside the informative
// span. No learning involved, so it bounds how separable the classes are.
#[test]
fn band_energy_oracle_separates_two_classes() {
    let spec = SyntheticTaskSpec {
        num_classes: 2,
        test_size: 400,
        train_size: 10,
        ..SyntheticTaskSpec::default()
    };
    let data = generate_dataset(&spec).unwrap();
    let (t_lo, t_hi) = spec.informative_span;
    let mut correct = 0;
    for i in 0..data.test.len() {
        let spectrum = fft_real(&data.test.signal(i)[t_lo..t_hi]).unwrap();
        let energy = |tones: &[f64]| -> f64 {
            tones
                .iter()
                .map(|&f| {
                    let k = (f / spectrum.bin_hz(1.0, spec.rate_in)).round() as usize;
                    spectrum.bins[k.saturating_sub(2)..=k + 2].iter().map(|c| c.norm_sqr()).sum::<f64>()
                })
                .sum()
        };
        let guess = if energy(&data.class_tones[0]) > energy(&data.class_tones[1]) { 0 } else { 1 };
        correct += usize::from(guess == data.test.labels[i]);
    }
    let acc = correct as f64 / data.test.len() as f64;
    assert!(acc >= 0.99, "oracle accuracy {acc}");
}

#[test]
fn untrained_model_is_near_chance() {
    let spec = SyntheticTaskSpec {
        test_size: 500,
        train_size: 10,
        ..SyntheticTaskSpec::default()
    };
    let data = generate_dataset(&spec).unwrap();
    let model = Model::new(&TrainConfig::default(), &spec, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    let acc = evaluate(&model, &data.test, EvalLevel::Window).unwrap().accuracy;
    assert!(acc <= 0.25, "untrained accuracy {acc} with 10 classes");
}

#[test]
fn soft_and_hard_runs_log_every_epoch() {
    let task = tiny_task();
    let data = generate_dataset(&task).unwrap();
    for mode in [MaskMode::Soft, MaskMode::Hard] {
        let config = TrainConfig { mask_mode: mode, ..tiny_config() };
        let log = train(&config, &task, &data).unwrap();
        assert_eq!(log.rows.len(), 2);
        for (i, row) in log.rows.iter().enumerate() {
            assert_eq!(row.epoch, i + 1);
            assert!(row.train_loss.is_finite() && row.mac_ratio > 0.0 && row.mac_ratio <= 1.0);
        }
        assert!(log.final_m <= task.n as f64);
    }
}

#[test]
fn zero_rates_leave_the_front_end_alone() {
    let task = tiny_task();
    let data = generate_dataset(&task).unwrap();
    let config = TrainConfig {
        lambda: 0.0,
        lr_ms: 0.0,
        ..tiny_config()
    };
    let log = train(&config, &task, &data).unwrap();
    let (m0, s0) = config.resolved_init(&task);
    assert_eq!((log.final_m, log.final_s), (m0, s0));
    assert!(log.rows.iter().all(|r| r.penalty == 0.0));
}

#[test]
fn identical_configs_give_identical_logs() {
    let task = tiny_task();
    let data = generate_dataset(&task).unwrap();
    let a = train(&tiny_config(), &task, &data).unwrap();
    let b = train(&tiny_config(), &task, &data).unwrap();
    assert_eq!(a.rows, b.rows);
}

// Directional derivative of the front-end loss along random (dm, ds)
// directions at points of a small (m, s) grid.
#[test]
fn joint_gradient_matches_directional_differences() {
    let n = 256;
    let frontend = Frontend::new(WindowFamily::Hann, MaskMode::Soft, n, 8.0, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let x: Vec<f64> = (0..2 * n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let v: Vec<f64> = (0..2 * n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let loss = |m: f64, s: f64| -> (f64, f64, f64) {
        let mut tape = Tape::new();
        let xv = tape.constant(Tensor::new(vec![2, n], x.clone()).unwrap());
        let mv = tape.variable(Tensor::scalar(m));
        let sv = tape.variable(Tensor::scalar(s));
        let out = frontend.forward(&mut tape, xv, mv, sv).unwrap();
        let w = tape.constant(Tensor::new(vec![2, n], v.clone()).unwrap());
        let prod = tape.mul(out.y, w).unwrap();
        let total = tape.sum(prod);
        tape.backward(total).unwrap();
        (tape.value(total).item(), tape.grad(mv).unwrap()[0], tape.grad(sv).unwrap()[0])
    };
    for m in [120.3, 180.2, 230.35] {
        for s in [40.2, 70.3, 100.15] {
            let (a, b) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let (_, gm, gs) = loss(m, s);
            let h = 1e-4;
            let fd = (loss(m + h * a, s + h * b).0 - loss(m - h * a, s - h * b).0) / (2.0 * h);
            let analytic = a * gm + b * gs;
            let rel = (analytic - fd).abs() / analytic.abs().max(fd.abs());
            assert!(rel < 1e-3, "m {m} s {s}: analytic {analytic} fd {fd}");
        }
    }
}
