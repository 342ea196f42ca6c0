//! Acceptance criteria 1–8. Every criterion prints one PASS/FAIL line with
//! its measured numbers; the test fails if any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::Instant;

use rand::Rng;

use semfl::commands;
use semfl::config::ExperimentConfig;
use semfl_core::attack::{matching_loss, recover_gradient, sweep_alpha, toy_linear_gate, AttackConfig, AttackOptimizer, DummyInit, LrSchedule};
use semfl_core::datagen::{
    build_experiment_splits, generate_corpus, generate_layout, render_sem, ClientDataset, NoiseConfig, SplitPlan,
};
use semfl_core::fed::{local_update, run_federated, train_centralized, ClientState, Holdout, RoundRecord, TrainConfig};
use semfl_core::grid::Grid;
use semfl_core::metrics::{evaluate_reconstruction, iou, mse_norm, psnr, ssim};
use semfl_core::model::{build_model, compute_gradients, GradientEstimate, ModelSpec, ParamTensor};
use semfl_core::seed;

type Verdict = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Verdict {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    if den == 0.0 {
        num
    } else {
        num / den
    }
}

fn desk_splits(seed_: u64) -> Vec<ClientDataset> {
    let plan = SplitPlan::scaled(40);
    let corpus = generate_corpus(plan.total(), 64, 64, 0.4, &NoiseConfig::default(), seed_).unwrap();
    build_experiment_splits(&corpus, &plan).unwrap()
}

fn by_name<'a>(d: &'a [ClientDataset], name: &str) -> &'a ClientDataset {
    d.iter().find(|c| c.subset_name == name).unwrap()
}

// 1. One-client FedAvg and centralized training coincide.
fn fedavg_equivalence() -> Verdict {
    let d = desk_splits(101);
    let (a, j) = (by_name(&d, "A"), by_name(&d, "J"));
    let spec = ModelSpec::unet(64, 64, 2, 8);
    let cfg = TrainConfig { learning_rate: 0.1, local_epochs: 2, batch_size: 2, rounds: 3, seed: 5, ..TrainConfig::default() };
    let t = Instant::now();
    let (wc, rc) = train_centralized(a, &spec, &cfg, Some(Holdout::new(j))).unwrap();
    let (wf, rf) = run_federated(&mut [ClientState::new(a.clone())], &spec, &cfg, Some(Holdout::new(j))).unwrap();
    let secs = t.elapsed().as_secs_f64();
    let worst = wc.entries.iter().zip(&wf.entries).map(|(x, y)| rel_err(&y.data, &x.data)).fold(0.0, f64::max);
    let same_metrics = rc.iter().zip(&rf).all(|(x, y)| x.holdout == y.holdout) && rc.len() == rf.len();
    ensure(
        worst <= 1e-6 && same_metrics && secs < 120.0,
        format!("max relative weight difference {worst:.2e} (<= 1e-6), hold-out metrics identical: {same_metrics}, {secs:.1} s (< 120 s)"),
    )
}

// 2. (old − new)/η equals the directly computed gradient.
fn recovery_exactness() -> Verdict {
    let d = desk_splits(102);
    let mut victim = by_name(&d, "B").clone();
    victim.samples.truncate(3);
    let spec = ModelSpec::unet(64, 64, 2, 8);
    let (net, w0) = build_model(&spec, 3).unwrap();
    let lr = 0.05;
    let cfg = TrainConfig { learning_rate: lr, batch_size: 3, rounds: 1, ..TrainConfig::default() };
    cfg.validate_attack_compatible(&[victim.len()]).map_err(|e| e.to_string())?;
    let (after, _) = local_update(&net, &mut ClientState::new(victim.clone()), &w0, &cfg, 0).unwrap();
    let recovered = recover_gradient(&w0, &after, lr).unwrap();
    let captured = compute_gradients(&net, &w0, &victim.samples).unwrap();
    let errs = recovered.relative_errors(&captured).unwrap();
    let (name, worst) = errs.iter().cloned().max_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
    ensure(worst <= 1e-5, format!("{} tensors, worst relative error {worst:.2e} on `{name}` (<= 1e-5)", errs.len()))
}

const TREND_SEEDS: [u64; 3] = [1, 2, 3];

fn trend_config(seed_: u64, out: &Path) -> ExperimentConfig {
    let text = format!(
        r#"
        seed = {seed_}
        output_dir = "{}"

        [dataset]
        height = 64
        width = 64
        count = 100

        [model]
        depth = 2
        base_channels = 4
        activation = "tanh"

        [training]
        learning_rate = 0.1
        batch_size = 2
        rounds = 60
        runs = [
          {{ id = "cl-10", mode = "cl", subsets = ["A"] }},
          {{ id = "fl-1", mode = "fl", subsets = ["A"] }},
          {{ id = "fl-3", mode = "fl", subsets = ["A", "B", "C"] }},
          {{ id = "fl-9", mode = "fl", subsets = ["A", "B", "C", "D", "E", "F", "G", "H", "I"] }},
          {{ id = "cl-90", mode = "cl", subsets = ["K"] }},
        ]
        "#,
        out.display()
    );
    let cfg = ExperimentConfig::parse(&text).unwrap();
    cfg.validate().unwrap();
    cfg
}

// 3. Trend of the CL/FL experiment matrix, averaged over seeds.
fn trend_reproduction() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let ids = ["cl-10", "fl-1", "fl-3", "fl-9", "cl-90"];
    let mut iou = [0.0; 5];
    let mut triple = [0.0; 3];
    let t = Instant::now();
    for &s in &TREND_SEEDS {
        let cfg = trend_config(s, &dir.path().join(format!("seed-{s}")));
        commands::generate(&cfg).unwrap();
        let rows = commands::train(&cfg, None).unwrap();
        for (k, id) in ids.iter().enumerate() {
            let r = rows.iter().find(|r| r.run_id == *id).unwrap();
            iou[k] += r.holdout_iou / TREND_SEEDS.len() as f64;
            if *id == "fl-9" {
                triple[0] += r.holdout_iou / 3.0;
                triple[1] += r.holdout_mse / 3.0;
                triple[2] += r.holdout_ssim / 3.0;
            }
        }
    }
    let [cl10, fl1, fl3, fl9, cl90] = iou;
    let detail = format!(
        "mean final IoU: CL-10 {cl10:.4}, FL-1 {fl1:.4}, FL-3 {fl3:.4}, FL-9 {fl9:.4}, CL-90 {cl90:.4}; \
         FL-9 triple (IoU, MSE, SSIM) = ({:.3}, {:.3}, {:.3}); {:.0} s",
        triple[0],
        triple[1],
        triple[2],
        t.elapsed().as_secs_f64()
    );
    let checks = [
        (cl90 >= fl9, "CL-90 >= FL-9"),
        (fl9 - cl10 >= 0.02, "FL-9 - CL-10 >= 0.02"),
        (fl9 > fl3 && fl3 > fl1, "FL-9 > FL-3 > FL-1"),
    ];
    let failed: Vec<&str> = checks.iter().filter(|(ok, _)| !ok).map(|(_, n)| *n).collect();
    ensure(failed.is_empty(), if failed.is_empty() { detail } else { format!("{detail}; violated: {}", failed.join(", ")) })
}

// 4. Known-answer attack on a single dense layer.
fn toy_oracle() -> Verdict {
    let g = toy_linear_gate(4).unwrap();
    ensure(g.passed, format!("attack MSE {:.2e}, closed-form MSE {:.2e} (< 1e-6)", g.attack_mse, g.analytic_mse))
}

const ALPHAS: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

fn unet_attack_config() -> AttackConfig {
    AttackConfig {
        optimizer: AttackOptimizer::Adam,
        learning_rate: 0.01,
        lr_schedule: LrSchedule::Cosine,
        iterations: 600,
        init: DummyInit::ConstantGray,
        snapshot_every: 0,
        seed: 21,
        ..AttackConfig::default()
    }
}

// 5. Attack on a depth-2 U-Net with a dummy mask.
fn unet_attack() -> Verdict {
    let truth = generate_corpus(1, 64, 64, 0.4, &NoiseConfig::default(), 1).unwrap().remove(0);
    let (net, w) = build_model(&ModelSpec::unet(64, 64, 2, 4), 1).unwrap();
    let target = compute_gradients(&net, &w, std::slice::from_ref(&truth)).unwrap();
    let t = Instant::now();
    let reports = sweep_alpha(&net, &w, &target, &unet_attack_config(), Some(&truth), &ALPHAS).unwrap();
    let best = &reports[0];
    let m = best.metrics.as_ref().unwrap();

    let mut r = seed::rng(seed::derive(unet_attack_config().seed, "random-baseline"));
    let noise = Grid::new(64, 64, (0..64 * 64).map(|_| r.random_range(0.0..1.0)).collect()).unwrap();
    let base = evaluate_reconstruction(&noise, &truth).unwrap();
    ensure(
        m.ssim > 0.5 && m.psnr > 12.0 && base.ssim < 0.1,
        format!(
            "best alpha {}: SSIM {:.3} (> 0.5), PSNR {:.2} dB (> 12); random dummy SSIM {:.3} (< 0.1), PSNR {:.2} dB; {:.0} s",
            best.alpha,
            m.ssim,
            m.psnr,
            base.ssim,
            base.psnr,
            t.elapsed().as_secs_f64()
        ),
    )
}

fn est(v: Vec<f64>) -> GradientEstimate<f64> {
    GradientEstimate::captured(vec![ParamTensor { name: "g".into(), shape: vec![v.len()], data: v }])
}

// 6. Metric identities.
fn metric_identities() -> Verdict {
    let s = generate_corpus(1, 32, 32, 0.4, &NoiseConfig::default(), 6).unwrap().remove(0);
    let pred = s.mask.to_grid::<f64>().map(|v| v as u8);
    let self_iou = iou(&pred, &s.mask).unwrap();
    let self_ssim = ssim(&s.image, &s.image).unwrap();
    let self_mse = mse_norm(&s.image, &s.image).unwrap();
    let p0 = psnr(0.0).unwrap();
    let p1 = psnr(0.01).unwrap();

    let (a, b) = (vec![1.0, -2.0, 0.5], vec![0.0, 1.0, 2.5]);
    let hand = ((1.0f64).powi(2) + 3.0f64.powi(2) + 2.0f64.powi(2)) / 3.0;
    let m1 = matching_loss(&est(a.clone()), &est(b.clone()), 1.0).unwrap().value;
    let c = matching_loss(&est(a.clone()), &est(b.clone()), 0.0).unwrap().value;
    let c_scaled = matching_loss(&est(a.iter().map(|v| v * 7.5).collect()), &est(b.iter().map(|v| v * 0.01).collect()), 0.0).unwrap().value;

    let ok = self_iou == 1.0
        && (self_ssim - 1.0).abs() < 1e-12
        && self_mse == 0.0
        && p0 == f64::INFINITY
        && (p1 - 20.0).abs() < 1e-12
        && (m1 - hand).abs() < 1e-12
        && (c - c_scaled).abs() < 1e-12;
    ensure(
        ok,
        format!(
            "iou(x,x) {self_iou}, ssim(x,x) {self_ssim}, mse(x,x) {self_mse}, psnr(0) {p0}, psnr(0.01) {p1}, \
             alpha=1 loss {m1} vs hand {hand}, alpha=0 loss {c:.12} vs scaled {c_scaled:.12}"
        ),
    )
}

// 7. Per-class means of rendered images.
fn generator_statistics() -> Verdict {
    let cfg = NoiseConfig::default();
    let (mut sums, mut counts) = ([0.0f64; 2], [0usize; 2]);
    let mut i = 0u64;
    while counts.iter().any(|&c| c < 10_000) {
        let mask = generate_layout(64, 64, 0.4, seed::derive_indexed(77, "layout", i)).unwrap();
        let s = render_sem(&mask, &NoiseConfig { seed: seed::derive_indexed(77, "noise", i), ..cfg.clone() }, "s").unwrap();
        for (v, &m) in s.image.as_slice().iter().zip(mask.pixels()) {
            sums[m as usize] += v * 255.0;
            counts[m as usize] += 1;
        }
        i += 1;
    }
    let bg = sums[0] / counts[0] as f64;
    let fg = sums[1] / counts[1] as f64;
    ensure(
        (bg - cfg.background_mean).abs() <= 2.0 && (fg - cfg.foreground_mean).abs() <= 2.0,
        format!(
            "background {bg:.2} over {} px (75 +/- 2), foreground {fg:.2} over {} px (135 +/- 2)",
            counts[0], counts[1]
        ),
    )
}

fn logs_and_digests(out: &Path) -> (Vec<Vec<RoundRecord>>, Vec<String>) {
    let mut logs = Vec::new();
    let mut digests = Vec::new();
    let mut warnings = Vec::new();
    for id in ["cl-a", "fl-3"] {
        let dir = out.join(commands::RUNS_DIR).join(id);
        logs.push(commands::read_rounds(&dir.join(commands::ROUNDS_FILE), &mut warnings).unwrap().iter().map(RoundRecord::without_timing).collect());
        let bytes = std::fs::read(dir.join(commands::FINAL_WEIGHTS)).unwrap();
        digests.push(semfl_core::model::snapshot_digest(&bytes));
    }
    let snaps = commands::snapshot_dir(out, "fl-3", 0);
    let mut files: Vec<_> = std::fs::read_dir(&snaps).unwrap().map(|e| e.unwrap().path()).collect();
    files.sort();
    for f in files {
        digests.push(semfl_core::model::snapshot_digest(&std::fs::read(f).unwrap()));
    }
    assert!(warnings.is_empty());
    (logs, digests)
}

// 8. Same config and seed, same artifacts.
fn reproducibility() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for k in 0..2 {
        let text = format!(
            r#"
            seed = 8
            output_dir = "{}"
            [dataset]
            height = 32
            width = 32
            count = 30
            [model]
            depth = 2
            base_channels = 4
            [training]
            learning_rate = 0.2
            rounds = 3
            snapshot_rounds = [0]
            runs = [
              {{ id = "cl-a", mode = "cl", subsets = ["A"] }},
              {{ id = "fl-3", mode = "fl", subsets = ["A", "B", "C"] }},
            ]
            "#,
            dir.path().join(format!("exec-{k}")).display()
        );
        let cfg = ExperimentConfig::parse(&text).unwrap();
        cfg.validate().unwrap();
        commands::generate(&cfg).unwrap();
        commands::train(&cfg, None).unwrap();
        outputs.push(logs_and_digests(&cfg.output_dir));
    }
    let same_logs = outputs[0].0 == outputs[1].0;
    let same_digests = outputs[0].1 == outputs[1].1;
    ensure(
        same_logs && same_digests,
        format!("{} round records identical: {same_logs}; {} snapshot digests identical: {same_digests}", outputs[0].0.iter().map(Vec::len).sum::<usize>(), outputs[0].1.len()),
    )
}

#[test]
fn acceptance_criteria() {
    let criteria: [(u8, &str, fn() -> Verdict); 8] = [
        (1, "FedAvg/CL equivalence", fedavg_equivalence),
        (2, "gradient recovery exactness", recovery_exactness),
        (3, "CL/FL trend at desk scale", trend_reproduction),
        (4, "toy_linear analytic attack oracle", toy_oracle),
        (5, "U-Net gradient inversion at desk scale", unet_attack),
        (6, "metric identities", metric_identities),
        (7, "generator class statistics", generator_statistics),
        (8, "reproducibility", reproducibility),
    ];
    let mut failed = Vec::new();
    for (id, name, f) in criteria {
        let verdict = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        match verdict {
            Ok(detail) => println!("criterion {id} PASS  {name}: {detail}"),
            Err(detail) => {
                println!("criterion {id} FAIL  {name}: {detail}");
                failed.push(id);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
