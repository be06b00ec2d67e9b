//! Acceptance suite. Each criterion runs at its stated tolerance and prints
//! one pass/fail line; the single test fails if any criterion fails.
//!
//! Run with output visible:
//!
//! ```bash
//! cargo test --release -p grnn --test acceptance -- --nocapture
//! ```
//!
//! Criterion 5 also has an optional extended target (three 50-epoch MNIST
//! runs, roughly an hour of CPU); opt in with `GRNN_ACCEPTANCE_FULL=1`.

use std::path::PathBuf;
use std::time::Instant;

use grnn::bptt::{backward_sequence, forward_sequence, gradient_check};
use grnn::cells::{param_count, step_forward, CellKind, CellParams, RecurrentState};
use grnn::harness::{
    load_datasets, run_train, RunConfig, SequenceMode, SyntheticSpec, DATA_DIR_ENV,
};
use grnn::model::{mean_loss, ClassifierParams};
use grnn::numkernel::{sigmoid_scalar, SeededRng};

fn data_dir() -> PathBuf {
    std::env::var(DATA_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|_| PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/../../data")))
}

fn random_inputs(rng: &mut SeededRng, t: usize, m: usize) -> Vec<Vec<f64>> {
    (0..t)
        .map(|_| (0..m).map(|_| rng.uniform(-1.0, 1.0)).collect())
        .collect()
}

/// GRU whose update and reset gates share the MGU cell's forget parameters.
fn tied_gru(mgu: &CellParams) -> CellParams {
    let mut gru = CellParams::zeros(CellKind::Gru, mgu.n, mgu.m);
    gru.candidate = mgu.candidate.clone();
    for gate in &mut gru.gates {
        gate.u = mgu.gates[0].u.clone();
        gate.w = mgu.gates[0].w.clone();
        gate.b = mgu.gates[0].b.clone();
    }
    gru
}

fn criterion_1_param_counts() -> Result<String, String> {
    let start = Instant::now();
    let expected: [(usize, usize, [usize; 4]); 3] = [
        (50, 28, [7900, 6500, 6450, 4000]),
        (100, 1, [20400, 20300, 20200, 10300]),
        (250, 1, [126000, 125750, 125500, 63250]),
    ];
    let kinds = [CellKind::Mgu, CellKind::Mgu1, CellKind::Mgu2, CellKind::Mgu3];
    for (n, m, values) in expected {
        for (kind, want) in kinds.iter().zip(values) {
            let got = param_count(*kind, n, m);
            if got != want {
                return Err(format!("{kind} at ({n},{m}): {got}, expected {want}"));
            }
        }
    }
    let elapsed = start.elapsed();
    if elapsed.as_secs_f64() >= 1.0 {
        return Err(format!("took {elapsed:?}, budget is under 1 second"));
    }
    Ok(format!("12/12 table cells exact in {elapsed:?}"))
}

fn criterion_2_gradient_oracle() -> Result<String, String> {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut worst_kind = CellKind::Srnn;
    for kind in CellKind::ALL {
        let mut rng = SeededRng::new(0xC2 ^ (kind.tag() as u64) << 8);
        for instance in 0..10 {
            let n = 1 + rng.index(6);
            let m = 1 + rng.index(6);
            let t = 1 + rng.index(6);
            let params = CellParams::init(kind, n, m, &mut rng);
            let xs = random_inputs(&mut rng, t, m);
            let g: Vec<f64> = (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect();
            let g2 = g.clone();
            let err = gradient_check(
                &params,
                &xs,
                move |h| h.iter().zip(&g).map(|(a, b)| a * b).sum(),
                move |_| g2.clone(),
            )
            .map_err(|e| format!("{kind} instance {instance}: {e}"))?;
            if err >= 1e-5 {
                return Err(format!(
                    "{kind} instance {instance} (n={n} m={m} T={t}): max relative error {err:.3e}"
                ));
            }
            if err > worst {
                worst = err;
                worst_kind = kind;
            }
        }
    }
    let elapsed = start.elapsed();
    if elapsed.as_secs() >= 60 {
        return Err(format!("took {elapsed:?}, budget is under 1 minute"));
    }
    Ok(format!(
        "70 instances < 1e-5; worst {worst:.3e} ({worst_kind}) in {elapsed:?}"
    ))
}

fn criterion_3_tied_gate_equivalence() -> Result<String, String> {
    let mut worst_forward: f64 = 0.0;
    let mut worst_grad: f64 = 0.0;
    for seed in [3u64, 17, 91] {
        let mut rng = SeededRng::new(seed);
        let n = 2 + rng.index(4);
        let m = 1 + rng.index(4);
        let mgu = CellParams::init(CellKind::Mgu, n, m, &mut rng);
        let gru = tied_gru(&mgu);
        let xs = random_inputs(&mut rng, 25, m);

        // Forward trajectories, step by step.
        let mut s_mgu = RecurrentState::initial(CellKind::Mgu, n);
        let mut s_gru = RecurrentState::initial(CellKind::Gru, n);
        for x in &xs {
            let (next_mgu, _) = step_forward(&mgu, &s_mgu, x).map_err(|e| e.to_string())?;
            let (next_gru, _) = step_forward(&gru, &s_gru, x).map_err(|e| e.to_string())?;
            for (a, b) in next_mgu.h.iter().zip(&next_gru.h) {
                let diff = (a - b).abs();
                worst_forward = worst_forward.max(diff);
                if diff >= 1e-12 {
                    return Err(format!("seed {seed}: forward trajectories differ by {diff:.3e}"));
                }
            }
            s_mgu = next_mgu;
            s_gru = next_gru;
        }

        // Shared-parameter gradients: the tied gate's gradient is the sum of
        // the update-gate and reset-gate gradients.
        let upstream: Vec<f64> = (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let (_, tape_mgu) = forward_sequence(&mgu, &xs).map_err(|e| e.to_string())?;
        let (_, tape_gru) = forward_sequence(&gru, &xs).map_err(|e| e.to_string())?;
        let g_mgu = backward_sequence(&mgu, &tape_mgu, &upstream).map_err(|e| e.to_string())?;
        let g_gru = backward_sequence(&gru, &tape_gru, &upstream).map_err(|e| e.to_string())?;

        let mgu_flat = g_mgu.cell.flatten();
        let cand_len = n * n + n * m + n;
        let gru_z = g_gru.cell.gates[0].clone();
        let gru_r = g_gru.cell.gates[1].clone();
        let mut tied: Vec<f64> = g_gru.cell.flatten()[..cand_len].to_vec();
        for (z, r) in gru_z
            .u
            .unwrap()
            .data()
            .iter()
            .zip(gru_r.u.unwrap().data())
        {
            tied.push(z + r);
        }
        for (z, r) in gru_z
            .w
            .unwrap()
            .data()
            .iter()
            .zip(gru_r.w.unwrap().data())
        {
            tied.push(z + r);
        }
        for (z, r) in gru_z.b.unwrap().iter().zip(gru_r.b.unwrap()) {
            tied.push(z + r);
        }
        if tied.len() != mgu_flat.len() {
            return Err("tied gradient schema mismatch".into());
        }
        for (a, b) in mgu_flat.iter().zip(&tied) {
            let diff = (a - b).abs();
            worst_grad = worst_grad.max(diff);
            if diff >= 1e-10 {
                return Err(format!("seed {seed}: shared gradients differ by {diff:.3e}"));
            }
        }
    }
    Ok(format!(
        "forward within {worst_forward:.2e} (tol 1e-12), gradients within {worst_grad:.2e} (tol 1e-10)"
    ))
}

fn criterion_4_structural_invariants() -> Result<String, String> {
    let mut rng = SeededRng::new(0xC4);

    // MGU3: the gate is constant across the whole sequence and equals
    // sigmoid(b_f) regardless of inputs or state.
    let mut mgu3 = CellParams::init(CellKind::Mgu3, 4, 3, &mut rng);
    mgu3.gates[0].b = Some(vec![0.4, -0.9, 1.3, 0.0]);
    let expected: Vec<f64> = [0.4, -0.9, 1.3, 0.0]
        .iter()
        .map(|&b| sigmoid_scalar(b))
        .collect();
    let mut state = RecurrentState::initial(CellKind::Mgu3, 4);
    for _ in 0..50 {
        let x: Vec<f64> = (0..3).map(|_| rng.uniform(-3.0, 3.0)).collect();
        let (next, cache) = step_forward(&mgu3, &state, &x).map_err(|e| e.to_string())?;
        if cache.gates[0] != expected {
            return Err("mgu3 gate varied across the sequence".into());
        }
        state = next;
    }

    // MGU1: the gate ignores the input (but the candidate sees it).
    let mgu1 = CellParams::init(CellKind::Mgu1, 4, 3, &mut rng);
    let h: Vec<f64> = (0..4).map(|_| rng.uniform(-0.8, 0.8)).collect();
    let held = RecurrentState { h, c: None };
    let x1: Vec<f64> = (0..3).map(|_| rng.uniform(-1.0, 1.0)).collect();
    let x2: Vec<f64> = (0..3).map(|_| rng.uniform(-1.0, 1.0)).collect();
    let (_, c1) = step_forward(&mgu1, &held, &x1).map_err(|e| e.to_string())?;
    let (_, c2) = step_forward(&mgu1, &held, &x2).map_err(|e| e.to_string())?;
    if c1.gates[0] != c2.gates[0] {
        return Err("mgu1 gate changed with the input".into());
    }
    if c1.candidate == c2.candidate {
        return Err("mgu1 candidate failed to change with the input".into());
    }

    // MGU2: the gate is exactly one half at h = 0, whatever the input.
    let mgu2 = CellParams::init(CellKind::Mgu2, 5, 3, &mut rng);
    let zero = RecurrentState::initial(CellKind::Mgu2, 5);
    for x in [[0.0, 0.0, 0.0], [7.0, -2.0, 5.5]] {
        let (_, cache) = step_forward(&mgu2, &zero, &x).map_err(|e| e.to_string())?;
        if cache.gates[0].iter().any(|&f| f != 0.5) {
            return Err("mgu2 gate not exactly 0.5 at zero state".into());
        }
    }

    // Non-LSTM state boundedness over 1000 random steps from h0 = 0.
    let mut worst_h: f64 = 0.0;
    for kind in CellKind::ALL {
        if kind == CellKind::Lstm {
            continue;
        }
        let params = CellParams::init(kind, 6, 4, &mut rng);
        let mut state = RecurrentState::initial(kind, 6);
        for step in 0..1000 {
            let x: Vec<f64> = (0..4).map(|_| rng.uniform(-2.0, 2.0)).collect();
            let (next, _) = step_forward(&params, &state, &x).map_err(|e| e.to_string())?;
            for &h in &next.h {
                worst_h = worst_h.max(h.abs());
                if h.abs() >= 1.0 {
                    return Err(format!("{kind}: |h| = {} at step {step}", h.abs()));
                }
            }
            state = next;
        }
    }

    Ok(format!(
        "gate constancy, input-invariance, half-gate, and |h| < 1 over 1000 steps (max |h| {worst_h:.4})"
    ))
}

fn mnist_config(cell: CellKind, mode: SequenceMode) -> RunConfig {
    let mut config = RunConfig::new(cell, mode);
    config.data_dir = Some(data_dir());
    config
}

fn criterion_5_mnist28_short_run() -> Result<String, String> {
    let mut config = mnist_config(CellKind::Mgu2, SequenceMode::Rows28);
    config.lr = 1e-3;
    config.batch_size = 100;
    config.epochs = 6; // the bar is "within 10 epochs"; 6 crosses it with margin
    config.seed = 42;
    let outcome = run_train(&config).map_err(|e| e.to_string())?;
    let best = outcome
        .metrics
        .iter()
        .map(|m| m.test_acc)
        .fold(0.0f64, f64::max);
    let short = if best >= 0.93 {
        format!("best test accuracy {best:.4} >= 0.93 within {} epochs", config.epochs)
    } else {
        return Err(format!(
            "best test accuracy {best:.4} < 0.93 after {} epochs",
            config.epochs
        ));
    };

    if std::env::var("GRNN_ACCEPTANCE_FULL").as_deref() != Ok("1") {
        return Ok(format!("{short}; full 50-epoch target skipped (set GRNN_ACCEPTANCE_FULL=1)"));
    }

    // Extended target: 50-epoch runs within 1.5 points of the published
    // accuracies (97.6 / 98.1 / 98.2), and MGU3 at 95 or better.
    let published = [
        (CellKind::Mgu, Some(0.976)),
        (CellKind::Mgu1, Some(0.981)),
        (CellKind::Mgu2, Some(0.982)),
        (CellKind::Mgu3, None),
    ];
    let mut notes = Vec::new();
    for (kind, target) in published {
        let mut config = mnist_config(kind, SequenceMode::Rows28);
        config.lr = 1e-3;
        config.batch_size = 100;
        config.epochs = 50;
        config.seed = 42;
        let outcome = run_train(&config).map_err(|e| e.to_string())?;
        let best = outcome
            .metrics
            .iter()
            .map(|m| m.test_acc)
            .fold(0.0f64, f64::max);
        match target {
            Some(t) => {
                if (best - t).abs() > 0.015 {
                    return Err(format!(
                        "{kind}: best test accuracy {best:.4} outside {t:.3} +/- 0.015"
                    ));
                }
                notes.push(format!("{kind} {best:.4} (target {t:.3})"));
            }
            None => {
                if best < 0.95 {
                    return Err(format!("mgu3: best test accuracy {best:.4} < 0.95"));
                }
                notes.push(format!("{kind} {best:.4} (floor 0.95)"));
            }
        }
    }
    Ok(format!("{short}; full run: {}", notes.join(", ")))
}

fn criterion_6_mnist784_smoke() -> Result<String, String> {
    // Desk-scale substitute for the long 784-step experiment: a 1000-image
    // subset, 200 optimizer updates at lr 1e-4 (batch 10 over 2 epochs),
    // requiring a 20% drop in mean training loss for MGU and MGU2.
    let mut notes = Vec::new();
    for kind in [CellKind::Mgu, CellKind::Mgu2] {
        let mut config = mnist_config(kind, SequenceMode::Pixels784);
        config.lr = 1e-4;
        config.batch_size = 10;
        config.epochs = 2;
        config.train_limit = Some(1000);
        config.seed = 42;

        let (train, _) = load_datasets(&config).map_err(|e| e.to_string())?;
        let subset = train.take(1000);
        let init = ClassifierParams::init(
            kind,
            config.hidden_size(),
            subset.input_dim,
            subset.num_classes,
            &mut SeededRng::new(config.seed),
        );
        let before = mean_loss(&init, &subset).map_err(|e| e.to_string())?;
        let outcome = run_train(&config).map_err(|e| e.to_string())?;
        let after = mean_loss(&outcome.params, &subset).map_err(|e| e.to_string())?;
        if !after.is_finite() {
            return Err(format!("{kind}: diverged to non-finite loss"));
        }
        let decrease = (before - after) / before;
        notes.push(format!(
            "{kind} loss {before:.6} -> {after:.6} ({:+.3}%)",
            -decrease * 100.0
        ));
        if decrease < 0.20 {
            return Err(format!(
                "{}; required a 20% decrease over 200 updates",
                notes.join("; ")
            ));
        }
    }
    Ok(format!("{}; both >= 20% decrease", notes.join("; ")))
}

fn criterion_7_rnt_parameter_row() -> Result<String, String> {
    // The text experiment itself is out of scope; its parameter row must
    // still be exact (also asserted inside criterion 1).
    let expected = [
        (CellKind::Mgu, 126000),
        (CellKind::Mgu1, 125750),
        (CellKind::Mgu2, 125500),
        (CellKind::Mgu3, 63250),
    ];
    for (kind, want) in expected {
        let got = param_count(kind, 250, 1);
        if got != want {
            return Err(format!("{kind} at (250,1): {got}, expected {want}"));
        }
    }
    Ok("text pipeline out of scope; (250,1) parameter row exact".into())
}

fn criterion_8_determinism() -> Result<String, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;

    // Synthetic config.
    let mut config = RunConfig::new(CellKind::Mgu, SequenceMode::Synthetic);
    config.synthetic = SyntheticSpec {
        seq_len: 8,
        input_dim: 4,
        num_classes: 3,
        train_count: 60,
        test_count: 30,
        noise: 0.05,
    };
    config.batch_size = 10;
    config.epochs = 3;
    config.seed = 9;
    config.deterministic = true;

    for (label, mut cfg) in [("synthetic", config.clone()), ("mnist", {
        let mut c = mnist_config(CellKind::Mgu2, SequenceMode::Rows28);
        c.batch_size = 50;
        c.epochs = 1;
        c.train_limit = Some(500);
        c.seed = 11;
        c.deterministic = true;
        c
    })] {
        let a_csv = dir.path().join(format!("{label}-a.csv"));
        let a_ck = dir.path().join(format!("{label}-a.grnn"));
        let b_csv = dir.path().join(format!("{label}-b.csv"));
        let b_ck = dir.path().join(format!("{label}-b.grnn"));

        cfg.metrics_path = Some(a_csv.clone());
        cfg.checkpoint_path = Some(a_ck.clone());
        run_train(&cfg).map_err(|e| e.to_string())?;
        cfg.metrics_path = Some(b_csv.clone());
        cfg.checkpoint_path = Some(b_ck.clone());
        run_train(&cfg).map_err(|e| e.to_string())?;

        let csv_a = std::fs::read(&a_csv).map_err(|e| e.to_string())?;
        let csv_b = std::fs::read(&b_csv).map_err(|e| e.to_string())?;
        if csv_a != csv_b {
            return Err(format!("{label}: metrics CSVs differ between identical runs"));
        }
        let ck_a = std::fs::read(&a_ck).map_err(|e| e.to_string())?;
        let ck_b = std::fs::read(&b_ck).map_err(|e| e.to_string())?;
        if ck_a != ck_b {
            return Err(format!("{label}: checkpoints differ between identical runs"));
        }
    }
    Ok("byte-identical CSVs and checkpoints on repeated seeded runs (synthetic and MNIST)".into())
}

fn criterion_9_epoch_time_ordering() -> Result<String, String> {
    // Identical configs except the cell; per-step arithmetic shrinks with
    // the parameter count, so epoch medians must not increase from MGU to
    // MGU3 beyond timing noise.
    let mut medians = Vec::new();
    for kind in [CellKind::Mgu3, CellKind::Mgu2, CellKind::Mgu] {
        let mut config = RunConfig::new(kind, SequenceMode::Synthetic);
        config.synthetic = SyntheticSpec {
            seq_len: 30,
            input_dim: 24,
            num_classes: 4,
            train_count: 360,
            test_count: 40,
            noise: 0.05,
        };
        config.hidden = Some(64);
        config.batch_size = 36;
        config.epochs = 5;
        config.seed = 5;
        let outcome = run_train(&config).map_err(|e| e.to_string())?;
        let mut secs: Vec<f64> = outcome.metrics.iter().map(|m| m.seconds).collect();
        secs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        medians.push((kind, secs[secs.len() / 2]));
    }
    let (_, t3) = medians[0];
    let (_, t2) = medians[1];
    let (_, t1) = medians[2];
    let detail = format!("median epoch seconds: mgu3 {t3:.3}, mgu2 {t2:.3}, mgu {t1:.3}");
    if t3 > t2 * 1.10 {
        return Err(format!("{detail}; mgu3 slower than mgu2 beyond 10%"));
    }
    if t2 > t1 * 1.10 {
        return Err(format!("{detail}; mgu2 slower than mgu beyond 10%"));
    }
    Ok(detail)
}

type Criterion = fn() -> Result<String, String>;

#[test]
fn acceptance_suite() {
    let criteria: Vec<(usize, &str, Criterion)> = vec![
        (1, "parameter-count tables", criterion_1_param_counts),
        (2, "gradient oracle", criterion_2_gradient_oracle),
        (3, "tied-gate equivalence", criterion_3_tied_gate_equivalence),
        (4, "structural invariants", criterion_4_structural_invariants),
        (5, "MNIST-28 accuracy", criterion_5_mnist28_short_run),
        (6, "MNIST-784 smoke", criterion_6_mnist784_smoke),
        (7, "RNT parameter row", criterion_7_rnt_parameter_row),
        (8, "determinism", criterion_8_determinism),
        (9, "epoch-time ordering", criterion_9_epoch_time_ordering),
    ];

    let mut failures = Vec::new();
    for (number, name, run) in criteria {
        match run() {
            Ok(detail) => println!("criterion {number} ({name}): PASS: {detail}"),
            Err(detail) => {
                println!("criterion {number} ({name}): FAIL: {detail}");
                failures.push(format!("criterion {number} ({name}): {detail}"));
            }
        }
    }
    assert!(
        failures.is_empty(),
        "{} criterion(s) failed:\n{}",
        failures.len(),
        failures.join("\n")
    );
}
