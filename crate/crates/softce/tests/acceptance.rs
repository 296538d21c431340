//! End-to-end verification suite: one test per release criterion, each
//! printing a PASS line with its measured numbers.
//!
//! Run with `cargo test -p softce --test acceptance -- --nocapture`.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use softce::answers::{normalize_answer, AnswerSet, AnswerType, GroundTruth, ANSWERS_PER_QUESTION};
use softce::data::FeatureDataset;
use softce::losses::{cross_entropy, soft_cross_entropy, Logits, LossMode};
use softce::metric::{question_accuracy_bruteforce, question_accuracy_closed};
use softce::synth::{generate, SynthConfig};
use softce::trainer::{
    loss_accuracy_discrepancy_epochs, train, Arch, ModelParams, TrainConfig, TrainOutcome,
};

/// Expected accuracy by match count, `n = 0..=10`.
const ACCURACY_BY_MATCHES: [f64; 11] = [0.0, 0.3, 0.6, 0.9, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0];

fn set_with_matches(n: usize) -> AnswerSet {
    let mut answers: Vec<String> = (0..10 - n).map(|j| format!("filler{j}")).collect();
    answers.extend(std::iter::repeat_n("target".to_string(), n));
    AnswerSet::new(1, answers, AnswerType::Other).unwrap()
}

/// Independent integer oracle: enumerate the ten leave-one-out subsets and
/// return the accuracy numerator over 30.
fn brute_numerator(predicted: &str, set: &AnswerSet) -> u32 {
    let matches: Vec<bool> = set
        .answers()
        .iter()
        .map(|a| normalize_answer(a) == predicted)
        .collect();
    let mut numerator = 0;
    for excluded in 0..ANSWERS_PER_QUESTION {
        let m = (0..ANSWERS_PER_QUESTION)
            .filter(|&j| j != excluded && matches[j])
            .count() as u32;
        numerator += m.min(3);
    }
    numerator
}

/// Closed-form integer numerator over 30, from the total match count.
fn closed_numerator(n: u32) -> u32 {
    n * n.saturating_sub(1).min(3) + (10 - n) * n.min(3)
}

#[test]
fn criterion_1_metric_oracle_equivalence() {
    let start = Instant::now();

    for (n, &expected) in ACCURACY_BY_MATCHES.iter().enumerate() {
        let set = set_with_matches(n);
        let closed = question_accuracy_closed("target", &set);
        let brute = question_accuracy_bruteforce("target", &set);
        assert_eq!(closed.to_bits(), brute.to_bits(), "match count {n}");
        assert_eq!(closed, expected, "match count {n}");
        assert_eq!(brute_numerator("target", &set), closed_numerator(n as u32));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(20_240_501);
    for case in 0..1000 {
        let alphabet_size = rng.random_range(1..8usize);
        let answers: Vec<String> = (0..ANSWERS_PER_QUESTION)
            .map(|_| format!("w{}", rng.random_range(0..alphabet_size)))
            .collect();
        let set = AnswerSet::new(1, answers, AnswerType::Other).unwrap();
        // sometimes predict an answer outside the set's alphabet
        let predicted = format!("w{}", rng.random_range(0..alphabet_size + 2));

        let closed = question_accuracy_closed(&predicted, &set);
        let brute = question_accuracy_bruteforce(&predicted, &set);
        assert_eq!(closed.to_bits(), brute.to_bits(), "case {case}");

        let n = set
            .answers()
            .iter()
            .filter(|a| normalize_answer(a) == predicted)
            .count();
        let numerator = brute_numerator(&predicted, &set);
        assert_eq!(numerator, closed_numerator(n as u32), "case {case}");
        assert_eq!(closed, f64::from(numerator) / 30.0, "case {case}");
        assert_eq!(closed, ACCURACY_BY_MATCHES[n], "case {case}");
    }

    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 1.0, "took {elapsed:?}, budget 1s");
    println!("criterion 1 (metric oracle equivalence): PASS in {elapsed:?}");
}

/// Random target with in-vocabulary counts over the ten annotators.
fn random_target(rng: &mut ChaCha8Rng, num_classes: usize, full_coverage: bool) -> GroundTruth {
    let mut counts = vec![0u32; num_classes];
    let in_vocab = if full_coverage {
        10
    } else {
        rng.random_range(1..=10)
    };
    for _ in 0..in_vocab {
        counts[rng.random_range(0..num_classes)] += 1;
    }
    let pairs: Vec<(usize, f64)> = counts
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(i, &c)| (i, f64::from(c) / 10.0))
        .collect();
    GroundTruth::new(
        pairs.iter().map(|p| p.0).collect(),
        pairs.iter().map(|p| p.1).collect(),
        num_classes,
    )
    .unwrap()
}

fn check_close(analytic: f64, numeric: f64, rel_tol: f64, context: &str) {
    let tol = f64::max(1e-8, rel_tol * f64::max(analytic.abs(), numeric.abs()));
    assert!(
        (analytic - numeric).abs() <= tol,
        "{context}: analytic {analytic} vs numeric {numeric}"
    );
}

#[test]
fn criterion_2_gradient_correctness() {
    let start = Instant::now();
    let h = 1e-5;
    let mut rng = ChaCha8Rng::seed_from_u64(42);

    // loss-level: standard and soft gradients on 120 random instances
    for case in 0..120 {
        let n = rng.random_range(2..=50);
        let values: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let x = Logits::new(values.clone()).unwrap();
        let class = rng.random_range(0..n);
        let target = random_target(&mut rng, n, false);

        let standard = cross_entropy(&x, class).unwrap();
        let soft = soft_cross_entropy(&x, &target).unwrap();
        for i in 0..n {
            let mut plus = values.clone();
            plus[i] += h;
            let mut minus = values.clone();
            minus[i] -= h;
            let plus = Logits::new(plus).unwrap();
            let minus = Logits::new(minus).unwrap();

            let numeric_std = (cross_entropy(&plus, class).unwrap().loss
                - cross_entropy(&minus, class).unwrap().loss)
                / (2.0 * h);
            check_close(
                standard.gradient[i],
                numeric_std,
                1e-6,
                &format!("standard case {case} logit {i}"),
            );

            let numeric_soft = (soft_cross_entropy(&plus, &target).unwrap().loss
                - soft_cross_entropy(&minus, &target).unwrap().loss)
                / (2.0 * h);
            check_close(
                soft.gradient[i],
                numeric_soft,
                1e-6,
                &format!("soft case {case} logit {i}"),
            );
        }
    }

    // model-level: end-to-end gradients through linear and MLP models
    for case in 0..120 {
        let num_classes = rng.random_range(2..=5);
        let feature_dim = rng.random_range(1..=8);
        let arch = if case % 2 == 0 {
            Arch::Linear
        } else {
            Arch::Mlp {
                hidden_dim: rng.random_range(1..=4),
            }
        };
        let mode = if case % 4 < 2 {
            LossMode::Standard
        } else {
            LossMode::Soft
        };
        let params = ModelParams::init(arch, feature_dim, num_classes, &mut rng).unwrap();
        let features: Vec<f64> = (0..feature_dim)
            .map(|_| rng.random_range(-2.0..2.0))
            .collect();
        let target = random_target(&mut rng, num_classes, false);

        let loss_of = |p: &ModelParams| -> f64 {
            let logits = p.forward(&features).unwrap();
            match mode {
                LossMode::Standard => cross_entropy(&logits, target.argmax_class()).unwrap().loss,
                LossMode::Soft => soft_cross_entropy(&logits, &target).unwrap().loss,
            }
        };
        let logits = params.forward(&features).unwrap();
        let logit_grad = match mode {
            LossMode::Standard => cross_entropy(&logits, target.argmax_class()).unwrap(),
            LossMode::Soft => soft_cross_entropy(&logits, &target).unwrap(),
        }
        .gradient;
        let analytic = params.backward(&features, &logit_grad).unwrap();
        for (i, &a) in analytic.iter().enumerate() {
            let mut plus = params.clone();
            plus.theta_mut()[i] += h;
            let mut minus = params.clone();
            minus.theta_mut()[i] -= h;
            let numeric = (loss_of(&plus) - loss_of(&minus)) / (2.0 * h);
            check_close(
                a,
                numeric,
                1e-5,
                &format!("model case {case} ({arch:?}, {mode:?}) param {i}"),
            );
        }
    }

    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 10.0, "took {elapsed:?}, budget 10s");
    println!("criterion 2 (gradient correctness): PASS in {elapsed:?}");
}

/// Keep only rows whose ten answers agree (one-hot targets).
fn unanimous_subset(dataset: &FeatureDataset) -> FeatureDataset {
    let rows: Vec<usize> = (0..dataset.len())
        .filter(|&i| dataset.answer_set(i).is_unanimous())
        .collect();
    dataset.subset(&rows).unwrap()
}

#[test]
fn criterion_3_reduction_on_one_hot_targets() {
    let config = SynthConfig {
        num_classes: 12,
        num_train: 800,
        num_val: 320,
        feature_dim: 16,
        dirichlet_alpha: 1e-3,
        seed: 11,
        ..SynthConfig::default()
    };
    let vocab = config.vocabulary().unwrap();
    let (train_set, val_set) = generate(&config).unwrap();
    let train_set = unanimous_subset(&train_set);
    let val_set = unanimous_subset(&val_set);
    assert!(
        train_set.len() as f64 >= 0.95 * config.num_train as f64,
        "alpha=1e-3 should leave at least 95% unanimous questions"
    );
    for i in 0..train_set.len() {
        assert!(train_set.ground_truth(i).unwrap().is_one_hot());
    }

    let base = TrainConfig {
        epochs: 8,
        seed: 5,
        ..TrainConfig::default()
    };
    let standard = train(
        &train_set,
        &val_set,
        &vocab,
        Arch::Linear,
        &TrainConfig {
            loss_mode: LossMode::Standard,
            ..base.clone()
        },
    )
    .unwrap();
    let soft = train(
        &train_set,
        &val_set,
        &vocab,
        Arch::Linear,
        &TrainConfig {
            loss_mode: LossMode::Soft,
            ..base
        },
    )
    .unwrap();

    assert_eq!(standard.curve.len(), 8);
    let mut max_gap = 0.0f64;
    for (s, f) in standard.curve.iter().zip(&soft.curve) {
        for (a, b) in [
            (s.train_loss, f.train_loss),
            (s.val_loss, f.val_loss),
            (s.val_accuracy.overall, f.val_accuracy.overall),
            (s.val_accuracy.yes_no, f.val_accuracy.yes_no),
            (s.val_accuracy.number, f.val_accuracy.number),
            (s.val_accuracy.other, f.val_accuracy.other),
        ] {
            let gap = (a - b).abs();
            max_gap = max_gap.max(gap);
            assert!(gap <= 1e-6, "epoch {}: standard {a} vs soft {b}", s.epoch);
        }
    }
    println!(
        "criterion 3 (reduction on one-hot targets): PASS, max per-epoch gap {max_gap:.2e} across {} epochs",
        standard.curve.len()
    );
}

#[test]
fn criterion_4_decomposition_and_gibbs_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst_decomposition = 0.0f64;
    let mut min_slack = f64::INFINITY;
    for _ in 0..1000 {
        let n = rng.random_range(2..=40);
        let values: Vec<f64> = (0..n).map(|_| rng.random_range(-8.0..8.0)).collect();
        let x = Logits::new(values).unwrap();
        let target = random_target(&mut rng, n, true);

        let soft = soft_cross_entropy(&x, &target).unwrap().loss;
        let decomposed: f64 = target
            .classes()
            .iter()
            .zip(target.weights())
            .map(|(&c, &w)| w * cross_entropy(&x, c).unwrap().loss)
            .sum();
        worst_decomposition = worst_decomposition.max((soft - decomposed).abs());
        assert!(
            (soft - decomposed).abs() <= 1e-10,
            "decomposition violated: {soft} vs {decomposed}"
        );

        let entropy = target.entropy();
        min_slack = min_slack.min(soft - entropy);
        assert!(
            soft >= entropy - 1e-10,
            "Gibbs bound violated: loss {soft} < entropy {entropy}"
        );
    }
    println!(
        "criterion 4 (decomposition and bounds): PASS, worst decomposition gap {worst_decomposition:.2e}, min Gibbs slack {min_slack:.3}"
    );
}

/// The headline configuration: default synthetic data, linear model,
/// 30 epochs, batch 64, lr 1e-3.
fn headline_data() -> (SynthConfig, FeatureDataset, FeatureDataset) {
    let config = SynthConfig::default();
    let (train_set, val_set) = generate(&config).unwrap();
    (config, train_set, val_set)
}

fn headline_run(
    data: &(SynthConfig, FeatureDataset, FeatureDataset),
    mode: LossMode,
    seed: u64,
) -> TrainOutcome {
    let (config, train_set, val_set) = data;
    let vocab = config.vocabulary().unwrap();
    train(
        train_set,
        val_set,
        &vocab,
        Arch::Linear,
        &TrainConfig {
            loss_mode: mode,
            epochs: 30,
            seed,
            ..TrainConfig::default()
        },
    )
    .unwrap()
}

fn best_overall(outcome: &TrainOutcome) -> f64 {
    outcome
        .curve
        .iter()
        .map(|p| p.val_accuracy.overall)
        .fold(f64::MIN, f64::max)
}

const HEADLINE_SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

#[test]
fn criterion_5_soft_loss_beats_standard_on_ambiguous_data() {
    let start = Instant::now();
    let data = headline_data();
    let mut standard_best = Vec::new();
    let mut soft_best = Vec::new();
    for seed in HEADLINE_SEEDS {
        standard_best.push(best_overall(&headline_run(&data, LossMode::Standard, seed)));
        soft_best.push(best_overall(&headline_run(&data, LossMode::Soft, seed)));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let standard_mean = mean(&standard_best);
    let soft_mean = mean(&soft_best);
    let delta = soft_mean - standard_mean;
    let elapsed = start.elapsed();
    assert!(
        delta >= 0.005,
        "soft {:.3}% vs standard {:.3}%: delta {:.3} points below the 0.5-point margin",
        soft_mean * 100.0,
        standard_mean * 100.0,
        delta * 100.0
    );
    assert!(
        elapsed.as_secs_f64() < 300.0,
        "took {elapsed:?}, budget 5min"
    );
    println!(
        "criterion 5 (directional replication): PASS, soft {:.2}% vs standard {:.2}% (+{:.2} points over {} seeds) in {elapsed:?}",
        soft_mean * 100.0,
        standard_mean * 100.0,
        delta * 100.0,
        HEADLINE_SEEDS.len()
    );
}

#[test]
fn criterion_6_standard_loss_shows_loss_accuracy_discrepancy() {
    let data = headline_data();
    let dir = tempfile::tempdir().unwrap();
    let mut found: Vec<(u64, Vec<u32>)> = Vec::new();
    for seed in HEADLINE_SEEDS {
        let outcome = headline_run(&data, LossMode::Standard, seed);
        let path = dir.path().join(format!("curves_standard_seed{seed}.csv"));
        softce::data::save_curves(&path, &outcome.curve).unwrap();
        // detect from the written CSV, exactly as an external reader would
        let rows = softce::data::load_curves(&path).unwrap();
        let epochs = loss_accuracy_discrepancy_epochs(&rows);
        if !epochs.is_empty() {
            found.push((seed, epochs));
        }
    }
    assert!(
        !found.is_empty(),
        "no standard-mode run showed rising validation loss with rising accuracy"
    );
    let summary: Vec<String> = found
        .iter()
        .map(|(seed, epochs)| format!("seed {seed} at epochs {epochs:?}"))
        .collect();
    println!(
        "criterion 6 (loss/accuracy discrepancy): PASS, detected in {}/{} standard runs ({})",
        found.len(),
        HEADLINE_SEEDS.len(),
        summary.join("; ")
    );
}

fn run_cli(args: &[&str]) -> std::process::Output {
    std::process::Command::new(env!("CARGO_BIN_EXE_softce"))
        .args(args)
        .output()
        .expect("run softce binary")
}

fn assert_cli_ok(output: &std::process::Output) {
    assert!(
        output.status.success(),
        "cli failed: {}\n{}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
}

#[test]
fn criterion_7_train_and_compare_are_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let config = SynthConfig {
        num_classes: 10,
        num_train: 400,
        num_val: 160,
        feature_dim: 8,
        dirichlet_alpha: 0.5,
        seed: 3,
        ..SynthConfig::default()
    };
    let config_path = dir.path().join("synth.json");
    std::fs::write(&config_path, serde_json::to_string_pretty(&config).unwrap()).unwrap();
    let data_dir = dir.path().join("data");
    assert_cli_ok(&run_cli(&[
        "synth",
        "--config",
        config_path.to_str().unwrap(),
        "--out",
        data_dir.to_str().unwrap(),
    ]));

    let mut curve_files: BTreeMap<String, Vec<Vec<u8>>> = BTreeMap::new();
    for round in ["a", "b"] {
        let out = dir.path().join(format!("train_{round}"));
        assert_cli_ok(&run_cli(&[
            "train",
            "--data",
            data_dir.to_str().unwrap(),
            "--loss",
            "soft",
            "--epochs",
            "4",
            "--seed",
            "1",
            "--out",
            out.to_str().unwrap(),
        ]));
        let bytes = std::fs::read(out.join("curves_soft_seed1.csv")).unwrap();
        curve_files.entry("train".into()).or_default().push(bytes);

        let cmp = dir.path().join(format!("compare_{round}"));
        assert_cli_ok(&run_cli(&[
            "compare",
            "--data",
            data_dir.to_str().unwrap(),
            "--epochs",
            "3",
            "--seeds",
            "1,2",
            "--out",
            cmp.to_str().unwrap(),
        ]));
        for name in [
            "curves_standard_seed1.csv",
            "curves_standard_seed2.csv",
            "curves_soft_seed1.csv",
            "curves_soft_seed2.csv",
        ] {
            let bytes = std::fs::read(cmp.join(name)).unwrap();
            curve_files.entry(name.into()).or_default().push(bytes);
        }
    }
    let mut compared = 0;
    for (name, versions) in curve_files {
        assert_eq!(versions.len(), 2);
        assert_eq!(versions[0], versions[1], "{name} differs between runs");
        compared += 1;
    }
    println!(
        "criterion 7 (determinism): PASS, {compared} curve file(s) byte-identical across repeated train and compare invocations"
    );
}
