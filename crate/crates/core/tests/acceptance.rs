//! Acceptance gate: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails. `ACCEPTANCE_ONLY=3,7` runs a subset.

use std::f64::consts::PI;
use std::path::Path;
use std::time::{Duration, Instant};

use chrono::NaiveDate;
use ndarray::Array2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use swvmd_core::diagnostics::{adf_test, hurst_rs, SignificanceLevel};
use swvmd_core::eval::{accuracy, classify_trend, price_to_trend, TrendLabel};
use swvmd_core::ingest::{write_csv, SplitSpec};
use swvmd_core::lstm::{backward, forward_batch, loss, train, LstmModel, Mode, NetworkConfig, TrainConfig};
use swvmd_core::pipeline::{rerun, run, Preset, RunConfig, MANIFEST_FILE};
use swvmd_core::swvmd::{sliding_decompose_cached, DecompositionCache, DatasetSample, SwVmdConfig};
use swvmd_core::synth::{generate, SynthKind, SynthParams};
use swvmd_core::vmd::{reconstruct, spectrum, vmd_decompose, VmdConfig};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

fn rel_rmse(estimate: &[f64], truth: &[f64]) -> f64 {
    let num: f64 = estimate.iter().zip(truth).map(|(x, y)| (x - y).powi(2)).sum();
    let den: f64 = truth.iter().map(|y| y * y).sum();
    (num / den).sqrt()
}

fn c1_vmd_two_tone() -> Outcome {
    let n = 1024;
    let a: Vec<f64> = (0..n).map(|t| (2.0 * PI * 0.05 * t as f64).cos()).collect();
    let b: Vec<f64> = (0..n).map(|t| (2.0 * PI * 0.25 * t as f64).cos()).collect();
    let x: Vec<f64> = a.iter().zip(&b).map(|(p, q)| p + q).collect();
    let cfg = VmdConfig { k: 2, alpha: 2000.0, tau: 1.0, tol: 1e-9, max_iter: 2000, ..Default::default() };
    let start = Instant::now();
    let out = vmd_decompose(&x, &cfg).expect("decomposition");
    let secs = start.elapsed().as_secs_f64();
    let om_err = [(out.omegas[0] - 0.05).abs() / 0.05, (out.omegas[1] - 0.25).abs() / 0.25];
    let corr = [correlation(&out.modes[0], &a), correlation(&out.modes[1], &b)];
    let rmse = rel_rmse(&reconstruct(&out), &x);
    let default_tau = vmd_decompose(&x, &VmdConfig { k: 2, ..Default::default() }).expect("decomposition");
    let pass = om_err.iter().all(|e| *e < 0.05) && corr.iter().all(|c| *c > 0.99) && rmse < 1e-2 && secs < 5.0;
    outcome(
        pass,
        format!(
            "omegas {:.5}/{:.5} (rel err {:.1e}/{:.1e}), corr {:.5}/{:.5}, rel RMSE {:.2e} at tau=1 \
             [tau=0: {:.2e}], {} iterations, {:.2}s",
            out.omegas[0],
            out.omegas[1],
            om_err[0],
            om_err[1],
            corr[0],
            corr[1],
            rmse,
            rel_rmse(&reconstruct(&default_tau), &x),
            out.iterations,
            secs
        ),
    )
}

fn direct_dft(x: &[Complex64]) -> Vec<Complex64> {
    let n = x.len();
    (0..n)
        .map(|k| {
            x.iter()
                .enumerate()
                .map(|(t, v)| {
                    let angle = -2.0 * PI * ((k * t) % n) as f64 / n as f64;
                    v * Complex64::from_polar(1.0, angle)
                })
                .sum()
        })
        .collect()
}

fn c2_dft() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let n = rng.random_range(1..=256);
        let x: Vec<Complex64> = (0..n).map(|_| Complex64::new(normal(&mut rng), normal(&mut rng))).collect();
        let fast = spectrum::forward(&x);
        for (f, d) in fast.iter().zip(direct_dft(&x)) {
            worst = worst.max((f - d).norm());
        }
    }
    outcome(worst < 1e-9, format!("200 signals, N <= 256, max abs error {worst:.2e}"))
}

fn dates(n: usize) -> Vec<NaiveDate> {
    let d0 = NaiveDate::from_ymd_opt(2001, 1, 1).unwrap();
    (0..n as u64).map(|i| d0 + chrono::Days::new(i)).collect()
}

fn c3_no_look_ahead() -> Outcome {
    let n = 500;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut level = 0.0;
    let walk: Vec<f64> = (0..n)
        .map(|_| {
            level += normal(&mut rng);
            level
        })
        .collect();
    let d = dates(n);
    let cfg = SwVmdConfig::default();
    let vmd = VmdConfig::default();
    let start = Instant::now();
    // the full run and the prefix runs use separate caches, so every
    // compared row was computed independently on each side
    let full = sliding_decompose_cached(&walk, &d, &cfg, &vmd, &DecompositionCache::new()).expect("full");
    let prefix_cache = DecompositionCache::new();
    let mut mismatches = 0;
    let mut rows_checked = 0;
    for _ in 0..100 {
        let cut = rng.random_range(cfg.window..=n);
        let part = sliding_decompose_cached(&walk[..cut], &d[..cut], &cfg, &vmd, &prefix_cache).expect("prefix");
        for i in 0..part.len() {
            rows_checked += 1;
            let same = part.dates[i] == full.dates[i]
                && bits(&part.features[i]) == bits(&full.features[i])
                && bits(&part.omegas[i]) == bits(&full.omegas[i]);
            if !same {
                mismatches += 1;
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        mismatches == 0 && secs < 60.0,
        format!("100 cuts, {rows_checked} rows compared, {mismatches} differ, {secs:.1}s"),
    )
}

fn bits(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

fn c4_adf() -> Outcome {
    let trials = 200;
    let mut walk_fail = 0;
    let mut ar_reject = 0;
    for trial in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(40_000 + trial);
        let mut level = 0.0;
        let walk: Vec<f64> = (0..2000)
            .map(|_| {
                level += normal(&mut rng);
                level
            })
            .collect();
        if !adf_test(&walk, None).expect("adf").rejects(SignificanceLevel::FivePercent) {
            walk_fail += 1;
        }
        let mut x = 0.0;
        let ar: Vec<f64> = (0..1000)
            .map(|_| {
                x = 0.5 * x + normal(&mut rng);
                x
            })
            .collect();
        if adf_test(&ar, None).expect("adf").rejects(SignificanceLevel::OnePercent) {
            ar_reject += 1;
        }
    }
    let (wf, ar) = (walk_fail as f64 / trials as f64, ar_reject as f64 / trials as f64);
    outcome(
        wf >= 0.90 && ar >= 0.99,
        format!("walk levels not rejected at 5%: {:.1}%; AR(1) 0.5 rejected at 1%: {:.1}%", 100.0 * wf, 100.0 * ar),
    )
}

fn c5_hurst() -> Outcome {
    let mut hs = Vec::new();
    for seed in 0..50 {
        let mut rng = ChaCha8Rng::seed_from_u64(50_000 + seed);
        let x: Vec<f64> = (0..10_000).map(|_| normal(&mut rng)).collect();
        hs.push(hurst_rs(&x, 8).expect("hurst").h);
    }
    let mean = hs.iter().sum::<f64>() / hs.len() as f64;

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let ramp: Vec<f64> = (0..10_000).map(|t| t as f64 / 10_000.0 + 0.01 * normal(&mut rng)).collect();
    let h_ramp = hurst_rs(&ramp, 8).expect("hurst").h;

    let base = hurst_rs(&ramp, 8).expect("hurst");
    let scaled: Vec<f64> = ramp.iter().map(|v| 8.0 * v).collect();
    let exact_scale = hurst_rs(&scaled, 8).expect("hurst") == base;
    let affine: Vec<f64> = ramp.iter().map(|v| 3.7 * v - 12.5).collect();
    let affine_gap = (hurst_rs(&affine, 8).expect("hurst").h - base.h).abs();

    let pass = (0.45..=0.60).contains(&mean) && h_ramp > 0.85 && exact_scale && affine_gap <= 1e-12;
    outcome(
        pass,
        format!(
            "white-noise mean H {mean:.4} over 50 seeds, ramp H {h_ramp:.4}, power-of-two scale bitwise {exact_scale}, \
             |H(3.7x-12.5) - H(x)| = {affine_gap:.1e}"
        ),
    )
}

fn c6_gradient_check() -> Outcome {
    let cfg = NetworkConfig { layers: 2, hidden: 4, dropout: 0.25, l1: 0.01, l2: 0.01, ..Default::default() };
    let mut model = LstmModel::init(&cfg, 3, 6).expect("init");
    let mut rng = ChaCha8Rng::seed_from_u64(66);
    let inputs: Vec<Array2<f64>> = (0..2).map(|_| Array2::from_shape_fn((3, 3), |_| normal(&mut rng))).collect();
    let targets = [0.3, -0.7];
    let mask_seed = 99;
    let loss_at = |m: &LstmModel| {
        let views: Vec<_> = inputs.iter().map(|a| a.view()).collect();
        let cache = forward_batch(&views, m, Mode::Train, mask_seed).expect("forward");
        loss(&cache.predictions, &targets, m).expect("loss")
    };
    let views: Vec<_> = inputs.iter().map(|a| a.view()).collect();
    let cache = forward_batch(&views, &model, Mode::Train, mask_seed).expect("forward");
    let grads = backward(&cache, &targets, &model).expect("backward").flatten();

    let eps = 1e-5;
    let count = model.params.count();
    let mut worst = 0.0f64;
    let mut worst_at = 0;
    let mut skipped = 0;
    for i in 0..count {
        let nudge = |m: &mut LstmModel, delta: f64| {
            let mut idx = i;
            for t in m.params.tensors_mut() {
                if idx < t.len() {
                    t[idx] += delta;
                    return;
                }
                idx -= t.len();
            }
        };
        let original = model.params.flatten()[i];
        if original == 0.0 && spec_for(&model, i) {
            // L1 has no derivative at an exactly-zero weight
            skipped += 1;
            continue;
        }
        nudge(&mut model, eps);
        let up = loss_at(&model);
        nudge(&mut model, -2.0 * eps);
        let down = loss_at(&model);
        nudge(&mut model, eps);
        let numeric = (up - down) / (2.0 * eps);
        let rel = (grads[i] - numeric).abs() / grads[i].abs().max(numeric.abs()).max(1e-8);
        if rel > worst {
            worst = rel;
            worst_at = i;
        }
    }
    outcome(
        worst < 1e-4,
        format!(
            "{count} parameters (dropout 0.25, l1 = l2 = 0.01), worst relative error {worst:.2e} at #{worst_at}, \
             {skipped} skipped"
        ),
    )
}

/// True when flat index `i` lies in a penalized tensor.
fn spec_for(model: &LstmModel, mut i: usize) -> bool {
    for s in model.params.specs() {
        let len: usize = s.shape.iter().product();
        if i < len {
            return s.penalized;
        }
        i -= len;
    }
    false
}

fn c7_overfit() -> Outcome {
    let lookback = 8;
    let d = NaiveDate::from_ymd_opt(2000, 1, 1).unwrap();
    let wave = |t: usize| (2.0 * PI * t as f64 / 16.0).sin();
    let samples: Vec<DatasetSample> = (0..32)
        .map(|s| DatasetSample {
            input: Array2::from_shape_fn((lookback, 1), |(r, _)| wave(s + r)),
            target: wave(s + lookback),
            target_date: d,
            input_end_date: d,
        })
        .collect();
    let net = NetworkConfig { layers: 1, hidden: 16, dropout: 0.0, l1: 0.0, l2: 0.0, ..Default::default() };
    let tc = TrainConfig { max_epochs: 2000, patience: 2000, seed: 7, ..Default::default() };
    let start = Instant::now();
    let (_, history) = train(&samples, &[], &net, &tc).expect("training");
    let secs = start.elapsed().as_secs_f64();
    let best = history.train_mse[history.best_epoch];
    let reached = history.train_mse.iter().position(|m| *m < 1e-3);
    outcome(
        best < 1e-3 && secs < 120.0,
        format!(
            "best train MSE {best:.2e} at epoch {}, first below 1e-3 at {}, {:.1}s",
            history.best_epoch + 1,
            reached.map_or("never".into(), |e| (e + 1).to_string()),
            secs
        ),
    )
}

fn c8_trend_accuracy() -> Outcome {
    use TrendLabel::*;
    let mut failures = Vec::new();
    let mut check = |name: &str, ok: bool| {
        if !ok {
            failures.push(name.to_string());
        }
    };
    check("-0.02 down", classify_trend(-0.02).ok() == Some(Down));
    check("-0.01 flat", classify_trend(-0.01).ok() == Some(Flat));
    check("0.005 up", classify_trend(0.005).ok() == Some(Up));
    check("0 flat", classify_trend(0.0).ok() == Some(Flat));
    check("NaN rejected", classify_trend(f64::NAN).is_err());
    let r = accuracy("m", &[Up, Up, Flat, Down], &[Up, Flat, Flat, Down]).expect("accuracy");
    check("75%", r.accuracy_pct == 75.0 && r.correct == 3 && r.total == 4);
    check("identity 100%", accuracy("m", &[Down, Up], &[Down, Up]).expect("accuracy").accuracy_pct == 100.0);
    check("disjoint 0%", accuracy("m", &[Up, Down], &[Down, Up]).expect("accuracy").accuracy_pct == 0.0);
    check("length mismatch", accuracy("m", &[Up], &[]).is_err());
    check(
        "price trends",
        price_to_trend(&[100.0, 102.0, 98.0], &[100.0; 3]).ok() == Some(vec![Flat, Up, Down]),
    );
    outcome(failures.is_empty(), if failures.is_empty() { "10 cases exact".into() } else { failures.join(", ") })
}

fn e2e_config(dir: &Path, seed: u64) -> RunConfig {
    RunConfig {
        input: dir.join("trend_cycle.csv"),
        preset: Preset::Price,
        swvmd: SwVmdConfig::default(),
        vmd: VmdConfig::default(),
        network: NetworkConfig { layers: 2, hidden: 32, ..Default::default() },
        train: TrainConfig { batch: 64, max_epochs: E2E_MAX_EPOCHS, patience: E2E_PATIENCE, ..Default::default() },
        split: SplitSpec::default(),
        output_dir: dir.join(format!("seed{seed}")),
        seed,
        ..Default::default()
    }
}

const E2E_SEEDS: u64 = 5;
const E2E_MAX_EPOCHS: usize = 500;
const E2E_PATIENCE: usize = 20;

fn c9_end_to_end(dir: &Path) -> Outcome {
    let series = generate(SynthKind::TrendCycle, 2000, 2024, &SynthParams::default()).expect("series");
    write_csv(&series, dir.join("trend_cycle.csv")).expect("write input");
    let start = Instant::now();
    let mut acc = [Vec::new(), Vec::new()];
    let mut epochs = Vec::new();
    let mut deltas = Vec::new();
    for seed in 0..E2E_SEEDS {
        let cfg = e2e_config(dir, seed);
        let out = match run(&cfg) {
            Ok(o) => o,
            Err(e) => return outcome(false, format!("seed {seed}: {e}")),
        };
        if !cfg.output_dir.join("comparison.json").is_file() {
            return outcome(false, format!("seed {seed}: no comparison document"));
        }
        let c = &out.evaluation.comparison;
        acc[0].push(c.accuracy_a_pct);
        acc[1].push(c.accuracy_b_pct);
        deltas.push(format!("{:+.1}", c.accuracy_delta_pct));
        epochs.push(format!("{}/{}", out.training[0].epochs, out.training[1].epochs));
    }
    // determinism: every seed is rerun from its manifest by criterion 10;
    // here the first seed is also recomputed in place of its own directory
    let again = rerun(&dir.join("seed0").join(MANIFEST_FILE), Some(&dir.join("seed0_repeat")));
    let deterministic = matches!(&again, Ok(r) if r.differences.is_empty());
    let secs = start.elapsed().as_secs_f64();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (mb, ms) = (mean(&acc[0]), mean(&acc[1]));
    outcome(
        deterministic && secs < 15.0 * 60.0,
        format!(
            "mean trend accuracy baseline {mb:.2}% vs SW-VMD {ms:.2}% (SW-VMD {} baseline; per-seed deltas {}; \
             epochs baseline/SW-VMD {}), seed-0 rerun identical {deterministic}, {secs:.0}s",
            if ms >= mb { ">=" } else { "<" },
            deltas.join(" "),
            epochs.join(" ")
        ),
    )
}

fn c10_reproducibility(dir: &Path) -> Outcome {
    let mut differing = Vec::new();
    let mut compared = 0;
    for seed in 1..E2E_SEEDS {
        let manifest = dir.join(format!("seed{seed}")).join(MANIFEST_FILE);
        match rerun(&manifest, Some(&dir.join(format!("seed{seed}_rerun")))) {
            Ok(r) => {
                compared += r.original.artifacts.len();
                differing.extend(r.differences.iter().map(|d| format!("seed{seed}/{d}")));
            }
            Err(e) => return outcome(false, format!("seed {seed}: {e}")),
        }
    }
    outcome(
        differing.is_empty(),
        format!("{} runs re-executed from manifests, {compared} artifact hashes compared, differing: {:?}", E2E_SEEDS - 1, differing),
    )
}

fn main() {
    let only: Option<Vec<u32>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|v| v.trim().parse().ok()).collect());
    let wanted = |n: u32| only.as_ref().is_none_or(|o| o.contains(&n));
    let dir = tempfile::tempdir().expect("temp dir");
    let criteria: Vec<(u32, &str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        (1, "VMD two-tone oracle", Box::new(c1_vmd_two_tone)),
        (2, "DFT vs direct O(N^2) oracle", Box::new(c2_dft)),
        (3, "no look-ahead under series extension", Box::new(c3_no_look_ahead)),
        (4, "ADF Monte-Carlo calibration", Box::new(c4_adf)),
        (5, "Hurst R/S calibration", Box::new(c5_hurst)),
        (6, "LSTM BPTT gradient check", Box::new(c6_gradient_check)),
        (7, "LSTM overfit sanity", Box::new(c7_overfit)),
        (8, "trend classes and accuracy", Box::new(c8_trend_accuracy)),
        (9, "end-to-end synthetic experiment", Box::new(|| c9_end_to_end(dir.path()))),
        (10, "rerun from manifest", Box::new(|| c10_reproducibility(dir.path()))),
    ];
    let mut failed = Vec::new();
    let total = Instant::now();
    for (n, name, check) in criteria {
        if !wanted(n) || (n == 10 && !wanted(9)) {
            continue;
        }
        let start = Instant::now();
        let o = check();
        let elapsed: Duration = start.elapsed();
        println!(
            "criterion {n:>2} {} {name}: {} [{:.1}s]",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            elapsed.as_secs_f64()
        );
        if !o.pass {
            failed.push(n);
        }
    }
    println!("acceptance finished in {:.0}s", total.elapsed().as_secs_f64());
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
