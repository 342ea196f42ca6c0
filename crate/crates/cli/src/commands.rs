use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, Context};
use serde::{Deserialize, Serialize};

use semfl_core::attack::{recover_gradient, sweep_alpha, toy_linear_gate, AttackReport, AttackStatus, GateReport};
use semfl_core::datagen::{
    build_experiment_splits, export_dataset, generate_corpus, import_dataset, read_gray_png, read_mask_png, write_gray_png, ClientDataset,
    DatasetManifest, SemSample,
};
use semfl_core::fed::{run_federated_with, train_centralized, ClientState, Holdout, RoundRecord};
use semfl_core::grid::Grid;
use semfl_core::metrics::{evaluate_reconstruction, evaluate_segmentation, mse_norm, psnr, ssim, MetricContext, MetricsReport, Preprocessing};
use semfl_core::model::{read_snapshot, weights_digest, write_snapshot, ModelWeights, Network, Provenance};

use crate::config::{ExperimentConfig, Mode, RunSpec};
use crate::plot::{line_plot, Series};
use crate::table::{attack_markdown, read_csv, train_markdown, write_csv, AttackRow, TrainRow};
use crate::{CliResult, Exit, Failure, OrExit};

pub const DATASET_DIR: &str = "dataset";
pub const RUNS_DIR: &str = "runs";
pub const ATTACK_DIR: &str = "attack";
pub const REPORT_DIR: &str = "report";
pub const ROUNDS_FILE: &str = "rounds.jsonl";
pub const RUN_FILE: &str = "run.json";
pub const FINAL_WEIGHTS: &str = "final.weights";
pub const RESULTS_CSV: &str = "results.csv";
pub const ATTACKS_CSV: &str = "attacks.csv";

/// Written next to each run's round log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub id: String,
    pub mode: Mode,
    pub clients: Vec<String>,
    pub train_samples: usize,
    pub model_tag: String,
    pub final_digest: String,
    pub rounds: usize,
    pub epochs: usize,
    pub train_seconds: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttackOutput {
    pub run: String,
    pub victim: String,
    pub round: usize,
    pub victim_samples: usize,
    pub gate: GateReport,
    /// One report per α, best first.
    pub reports: Vec<AttackReport>,
}

pub fn snapshot_dir(out: &Path, run: &str, round: usize) -> PathBuf {
    out.join(RUNS_DIR).join(run).join("snapshots").join(format!("round-{round:04}"))
}

pub fn attack_dir(out: &Path, run: &str, victim: &str, round: usize) -> PathBuf {
    out.join(ATTACK_DIR).join(format!("{run}-{victim}-r{round}"))
}

fn create_dir(p: &Path) -> CliResult<()> {
    fs::create_dir_all(p).with_context(|| format!("creating {}", p.display())).or_exit(Exit::Runtime)
}

pub fn generate(cfg: &ExperimentConfig) -> CliResult<DatasetManifest> {
    let d = &cfg.dataset;
    let plan = d.plan();
    let seed = cfg.dataset_seed();
    let corpus = generate_corpus(plan.total(), d.height, d.width, d.structure_density, &d.noise(), seed).or_exit(Exit::Runtime)?;
    let splits = build_experiment_splits(&corpus, &plan).or_exit(Exit::Runtime)?;
    let manifest = DatasetManifest::for_corpus(d.height, d.width, d.structure_density, seed, d.noise(), plan, &splits);
    let dir = cfg.output_dir.join(DATASET_DIR);
    export_dataset(&dir, &manifest, &splits).with_context(|| format!("writing {}", dir.display())).or_exit(Exit::Runtime)?;
    println!("wrote {} images in {} subsets to {}", manifest.samples.len(), manifest.plan.subsets.len(), dir.display());
    Ok(manifest)
}

/// Import the dataset and check it was generated from this configuration.
pub fn load_dataset(cfg: &ExperimentConfig) -> CliResult<Vec<ClientDataset>> {
    let dir = cfg.output_dir.join(DATASET_DIR);
    if !dir.join(semfl_core::datagen::MANIFEST_FILE).exists() {
        return Err(Failure::missing(anyhow!("no dataset at {}; run `generate` first", dir.display())));
    }
    let (m, data) = import_dataset(&dir).with_context(|| format!("reading {}", dir.display())).or_exit(Exit::MissingInput)?;
    let d = &cfg.dataset;
    let same = m.height == d.height
        && m.width == d.width
        && m.dataset_seed == cfg.dataset_seed()
        && m.structure_density == d.structure_density
        && m.noise == d.noise()
        && m.plan == d.plan();
    if !same {
        return Err(Failure::config(anyhow!("dataset at {} was generated from a different configuration; rerun `generate`", dir.display())));
    }
    Ok(data)
}

fn subset<'a>(data: &'a [ClientDataset], name: &str) -> CliResult<&'a ClientDataset> {
    data.iter().find(|d| d.subset_name == name).ok_or_else(|| Failure::missing(anyhow!("subset `{name}` missing from dataset")))
}

fn capped(ds: &ClientDataset, cap: Option<usize>) -> ClientDataset {
    let mut ds = ds.clone();
    if let Some(c) = cap {
        ds.samples.truncate(c);
    }
    ds
}

fn write_jsonl(path: &Path, records: &[RoundRecord]) -> anyhow::Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut f, r)?;
        f.write_all(b"\n")?;
    }
    f.flush()?;
    Ok(())
}

fn train_row(run: &RunSpec, summary: &RunSummary, last: Option<&RoundRecord>) -> TrainRow {
    let h = last.and_then(|r| r.holdout).unwrap_or_default();
    TrainRow {
        run_id: run.id.clone(),
        mode: format!("{:?}", run.mode).to_lowercase(),
        clients: summary.clients.len(),
        train_samples: summary.train_samples,
        epochs: summary.epochs,
        holdout_loss: h.loss,
        holdout_iou: h.iou,
        holdout_mse: h.mse,
        holdout_ssim: h.ssim,
        train_seconds: summary.train_seconds,
    }
}

/// Train one run and persist its log, final weights and requested snapshots.
pub fn train_run(cfg: &ExperimentConfig, data: &[ClientDataset], run: &RunSpec) -> CliResult<(RunSummary, Vec<RoundRecord>)> {
    let spec = cfg.model_spec();
    let tc = cfg.train_config();
    let dir = cfg.output_dir.join(RUNS_DIR).join(&run.id);
    create_dir(&dir)?;
    let holdout_data = subset(data, &cfg.evaluation.holdout_subset)?;
    let holdout = cfg.evaluation.holdout_metrics.then(|| Holdout { data: holdout_data, threshold: cfg.evaluation.threshold });
    let t0 = Instant::now();
    let (weights, records, clients, samples) = match run.mode {
        Mode::Cl => {
            let ds = capped(subset(data, &run.subsets[0])?, run.sample_cap);
            let (w, r) = train_centralized(&ds, &spec, &tc, holdout).or_exit(Exit::Runtime)?;
            (w, r, vec![ds.owner.clone()], ds.len())
        }
        Mode::Fl => {
            let mut states = Vec::with_capacity(run.subsets.len());
            for s in &run.subsets {
                states.push(ClientState::new(capped(subset(data, s)?, run.sample_cap)));
            }
            let samples = states.iter().map(|c| c.dataset.len()).sum();
            let mut ids: Vec<String> = states.iter().map(|c| c.client_id.clone()).collect();
            ids.sort();
            let snap_rounds = &cfg.training.snapshot_rounds;
            let (w, r) = run_federated_with(&mut states, &spec, &tc, holdout, |client, pair| {
                if !snap_rounds.contains(&pair.round) {
                    return Ok(());
                }
                let sd = snapshot_dir(&cfg.output_dir, &run.id, pair.round);
                fs::create_dir_all(&sd)?;
                // identical for every client of the round
                write_snapshot(&sd.join("global.weights"), &pair.before)?;
                write_snapshot(&sd.join(format!("{client}.weights")), &pair.after)?;
                Ok(())
            })
            .or_exit(Exit::Runtime)?;
            (w, r, ids, samples)
        }
    };
    let train_seconds = t0.elapsed().as_secs_f64();
    let runtime = |e: anyhow::Error| Failure::runtime(e.context(format!("writing run `{}`", run.id)));
    write_jsonl(&dir.join(ROUNDS_FILE), &records).map_err(runtime)?;
    write_snapshot(&dir.join(FINAL_WEIGHTS), &weights).map_err(|e| runtime(e.into()))?;
    let summary = RunSummary {
        id: run.id.clone(),
        mode: run.mode,
        clients,
        train_samples: samples,
        model_tag: spec.tag(),
        final_digest: weights_digest(&weights),
        rounds: tc.rounds,
        epochs: tc.rounds * tc.local_epochs,
        train_seconds,
    };
    let text = serde_json::to_string_pretty(&summary).expect("serializable");
    fs::write(dir.join(RUN_FILE), text).map_err(|e| runtime(e.into()))?;
    Ok((summary, records))
}

/// Train every run (or only `only`), then write `results.csv`.
pub fn train(cfg: &ExperimentConfig, only: Option<&str>) -> CliResult<Vec<TrainRow>> {
    if let Some(id) = only {
        if cfg.run(id).is_none() {
            return Err(Failure::config(anyhow!("no training run with id `{id}`")));
        }
    }
    let data = load_dataset(cfg)?;
    let mut rows = Vec::new();
    for run in cfg.training.runs.iter().filter(|r| only.is_none_or(|id| r.id == id)) {
        let (summary, records) = train_run(cfg, &data, run)?;
        let row = train_row(run, &summary, records.last());
        println!(
            "{}: {} client(s), {} images, {} epochs, hold-out IoU {:.4}, {:.1} s",
            row.run_id, row.clients, row.train_samples, row.epochs, row.holdout_iou, row.train_seconds
        );
        rows.push(row);
    }
    write_csv(&cfg.output_dir.join(RESULTS_CSV), &rows).or_exit(Exit::Runtime)?;
    Ok(rows)
}

fn read_weights(path: &Path) -> CliResult<ModelWeights<f64>> {
    if !path.exists() {
        return Err(Failure::missing(anyhow!("missing snapshots: {} does not exist", path.display())));
    }
    read_snapshot(path).with_context(|| format!("reading {}", path.display())).or_exit(Exit::MissingInput)
}

/// Side-by-side strip of equally sized images separated by a white gap.
pub fn strip(images: &[&Grid<f64>], gap: usize) -> Grid<f64> {
    let (h, w) = images[0].dims();
    let width = images.len() * w + images.len().saturating_sub(1) * gap;
    let mut out = Grid::filled(h, width, 1.0);
    for (k, img) in images.iter().enumerate() {
        for y in 0..h {
            for x in 0..w {
                out.set(y, k * (w + gap) + x, img.get(y, x));
            }
        }
    }
    out
}

fn stack(rows: &[Grid<f64>], gap: usize) -> Grid<f64> {
    let width = rows.iter().map(|r| r.width()).max().unwrap_or(0);
    let height = rows.iter().map(|r| r.height()).sum::<usize>() + rows.len().saturating_sub(1) * gap;
    let mut out = Grid::filled(height, width, 1.0);
    let mut top = 0;
    for r in rows {
        for y in 0..r.height() {
            for x in 0..r.width() {
                out.set(top + y, x, r.get(y, x));
            }
        }
        top += r.height() + gap;
    }
    out
}

fn attack_row(run: &str, victim: &str, round: usize, r: &AttackReport) -> AttackRow {
    let m = r.metrics.as_ref();
    let b = r.baseline_metrics.as_ref();
    AttackRow {
        run_id: run.to_string(),
        victim: victim.to_string(),
        round,
        alpha: r.alpha,
        provenance: format!("{:?}", r.target_provenance).to_lowercase(),
        status: match &r.status {
            AttackStatus::Completed => "completed".into(),
            AttackStatus::Diverged { iteration, .. } => format!("diverged@{iteration}"),
        },
        matching_loss: r.final_loss,
        mse: m.map_or(f64::NAN, |m| m.mse),
        ssim: m.map_or(f64::NAN, |m| m.ssim),
        psnr: m.map_or(f64::NAN, |m| m.psnr),
        baseline_ssim: b.map_or(f64::NAN, |m| m.ssim),
        baseline_psnr: b.map_or(f64::NAN, |m| m.psnr),
    }
}

/// Attack the victim's recorded update. The toy-model oracle gate runs first
/// and must pass before anything is reported.
pub fn attack(cfg: &ExperimentConfig, approximate: bool) -> CliResult<AttackOutput> {
    let a = cfg.attack.as_ref().ok_or_else(|| Failure::config(anyhow!("the configuration has no [attack] section")))?;
    let acfg = cfg.attack_config().expect("attack section");
    let run = cfg.run(&a.run).expect("validated");
    let tc = cfg.train_config();

    let gate = toy_linear_gate(acfg.seed).or_exit(Exit::Runtime)?;
    if !gate.passed {
        return Err(Failure::runtime(anyhow!(
            "toy_linear oracle gate failed (attack MSE {:.3e}, analytic MSE {:.3e}); refusing to report attack results",
            gate.attack_mse,
            gate.analytic_mse
        )));
    }

    let sd = snapshot_dir(&cfg.output_dir, &a.run, a.round);
    let before = read_weights(&sd.join("global.weights"))?;
    let after = read_weights(&sd.join(format!("{}.weights", a.victim)))?;

    let data = load_dataset(cfg)?;
    let victim_subset = run.subsets.iter().find(|s| cfg.owner_of(s).as_deref() == Some(a.victim.as_str())).expect("validated");
    let victim = capped(subset(&data, victim_subset)?, run.sample_cap);
    let exact = tc.exact_step_for(victim.len());
    if !exact && !approximate {
        return Err(Failure::config(anyhow!(
            "run `{}` is not attack-compatible for {}: a round is not one full-batch plain-SGD step \
             (optimizer {:?}, local_epochs {}, batch_size {}, {} local images), so (old - new)/lr is not the gradient; \
             pass --approximate to attack anyway",
            a.run,
            a.victim,
            tc.optimizer,
            tc.local_epochs,
            tc.batch_size,
            victim.len()
        )));
    }
    let mut target = recover_gradient(&before, &after, tc.learning_rate).or_exit(Exit::Runtime)?;
    if !exact {
        target.provenance = Provenance::Approximate;
    }

    let net = Network::new(&cfg.model_spec()).or_exit(Exit::Config)?;
    net.check_weights(&before).context("snapshot does not match the configured model").or_exit(Exit::Config)?;
    // with several local images the target is their mean gradient; metrics
    // are reported against the first one
    let truth: &SemSample = &victim.samples[0];
    let alphas = if a.alphas.is_empty() { vec![acfg.alpha] } else { a.alphas.clone() };
    let reports = sweep_alpha(&net, &before, &target, &acfg, Some(truth), &alphas).or_exit(Exit::Runtime)?;

    let dir = attack_dir(&cfg.output_dir, &a.run, &a.victim, a.round);
    create_dir(&dir)?;
    let best = &reports[0];
    let io = |e: semfl_core::Error| Failure::runtime(anyhow::Error::from(e).context(format!("writing {}", dir.display())));
    write_gray_png(&dir.join("original.png"), &truth.image).map_err(io)?;
    write_gray_png(&dir.join("recon.png"), &best.image).map_err(io)?;
    write_gray_png(&dir.join("mask.png"), &best.mask).map_err(io)?;
    let frames: Vec<&Grid<f64>> = best.frames.iter().map(|f| &f.image).collect();
    write_gray_png(&dir.join("filmstrip.png"), &strip(&frames, 2)).map_err(io)?;

    let output = AttackOutput {
        run: a.run.clone(),
        victim: a.victim.clone(),
        round: a.round,
        victim_samples: victim.len(),
        gate,
        reports,
    };
    let f = File::create(dir.join("report.json")).or_exit(Exit::Runtime)?;
    serde_json::to_writer(BufWriter::new(f), &output).or_exit(Exit::Runtime)?;

    let rows: Vec<AttackRow> = output.reports.iter().map(|r| attack_row(&a.run, &a.victim, a.round, r)).collect();
    write_csv(&cfg.output_dir.join(ATTACKS_CSV), &rows).or_exit(Exit::Runtime)?;
    for r in &rows {
        println!(
            "alpha {}: provenance {}, {}, MSE {:.4}, SSIM {:.3}, PSNR {:.2} dB (initial dummy SSIM {:.3}, PSNR {:.2} dB)",
            r.alpha, r.provenance, r.status, r.mse, r.ssim, r.psnr, r.baseline_ssim, r.baseline_psnr
        );
    }
    Ok(output)
}

/// Metrics between two image files. With `mask`, `original` plus mask form
/// the ground-truth sample and reconstruction metrics are computed; with
/// `segmentation`, `candidate` is a probability map scored against `mask`.
pub fn evaluate(candidate: &Path, original: &Path, mask: Option<&Path>, segmentation: bool, threshold: f64) -> CliResult<MetricsReport> {
    let read = |p: &Path| read_gray_png(p).with_context(|| format!("reading {}", p.display())).or_exit(Exit::MissingInput);
    let cand = read(candidate)?;
    let orig = read(original)?;
    let mask = match mask {
        Some(p) => Some(read_mask_png(p).with_context(|| format!("reading {}", p.display())).or_exit(Exit::MissingInput)?),
        None => None,
    };
    match (mask, segmentation) {
        (Some(m), true) => evaluate_segmentation(&cand, &m, threshold).or_exit(Exit::Runtime),
        (None, true) => Err(Failure::config(anyhow!("segmentation evaluation needs --mask"))),
        (Some(m), false) => {
            let truth = SemSample::new("original", orig, m).or_exit(Exit::Runtime)?;
            evaluate_reconstruction(&cand, &truth).or_exit(Exit::Runtime)
        }
        (None, false) => {
            let mse = mse_norm(&cand, &orig).or_exit(Exit::Runtime)?;
            Ok(MetricsReport {
                context: MetricContext::ReconstructionEval,
                preprocessing: Preprocessing::None,
                iou: None,
                mse,
                ssim: ssim(&cand, &orig).or_exit(Exit::Runtime)?,
                psnr: psnr(mse).or_exit(Exit::Runtime)?,
                resegmentation_degenerate: false,
            })
        }
    }
}

/// A run as read back from disk.
#[derive(Debug, Clone)]
pub struct LoadedRun {
    pub summary: RunSummary,
    pub records: Vec<RoundRecord>,
}

#[derive(Debug, Default)]
pub struct ReportOutcome {
    pub runs: Vec<TrainRow>,
    pub attacks: Vec<AttackRow>,
    pub warnings: Vec<String>,
}

/// Parse a round log line by line; malformed lines become warnings.
pub fn read_rounds(path: &Path, warnings: &mut Vec<String>) -> anyhow::Result<Vec<RoundRecord>> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<RoundRecord>(&line) {
            Ok(r) => out.push(r),
            Err(e) => warnings.push(format!("{}:{}: skipped malformed record ({e})", path.display(), i + 1)),
        }
    }
    Ok(out)
}

fn sorted_subdirs(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir).into_iter().flatten().flatten().map(|e| e.path()).filter(|p| p.is_dir()).collect();
    v.sort();
    v
}

fn load_runs(results: &Path, warnings: &mut Vec<String>) -> Vec<LoadedRun> {
    let mut runs = Vec::new();
    for dir in sorted_subdirs(&results.join(RUNS_DIR)) {
        let summary = fs::read_to_string(dir.join(RUN_FILE)).map_err(anyhow::Error::from).and_then(|t| Ok(serde_json::from_str::<RunSummary>(&t)?));
        let summary = match summary {
            Ok(s) => s,
            Err(e) => {
                warnings.push(format!("{}: skipped run without a readable {RUN_FILE} ({e})", dir.display()));
                continue;
            }
        };
        match read_rounds(&dir.join(ROUNDS_FILE), warnings) {
            Ok(records) if !records.is_empty() => runs.push(LoadedRun { summary, records }),
            Ok(_) => warnings.push(format!("{}: skipped run with no readable rounds", dir.display())),
            Err(e) => warnings.push(format!("{}: skipped run ({e})", dir.display())),
        }
    }
    runs.sort_by(|a, b| a.summary.clients.len().cmp(&b.summary.clients.len()).then(a.summary.id.cmp(&b.summary.id)));
    runs
}

/// Tables, curves and montage for a results directory. Runs are sorted by
/// client count, then id.
pub fn report(results: &Path) -> CliResult<ReportOutcome> {
    let mut outcome = ReportOutcome::default();
    let runs = load_runs(results, &mut outcome.warnings);
    if runs.is_empty() {
        return Err(Failure::missing(anyhow!("no completed runs under {}", results.join(RUNS_DIR).display())));
    }
    let out = results.join(REPORT_DIR);
    create_dir(&out)?;

    for r in &runs {
        let spec = RunSpec { id: r.summary.id.clone(), mode: r.summary.mode, subsets: vec![], sample_cap: None };
        outcome.runs.push(train_row(&spec, &r.summary, r.records.last()));
    }
    write_csv(&out.join("summary.csv"), &outcome.runs).or_exit(Exit::Runtime)?;

    let curve = |f: fn(&RoundRecord) -> Option<f64>| -> Vec<Series> {
        runs.iter()
            .map(|r| Series {
                label: r.summary.id.clone(),
                group: r.summary.clients.len(),
                points: r.records.iter().filter_map(|rec| f(rec).map(|v| (rec.epochs_completed as f64, v))).collect(),
            })
            .filter(|s| !s.points.is_empty())
            .collect()
    };
    let loss = curve(|r| r.holdout.map(|h| h.loss));
    let iou = curve(|r| r.holdout.map(|h| h.iou));
    if loss.is_empty() {
        outcome.warnings.push("no hold-out metrics recorded; curves skipped".into());
    } else {
        line_plot(&out, "test_loss", "Test loss for different numbers of clients", "epoch", "hold-out loss", &loss).or_exit(Exit::Runtime)?;
        line_plot(&out, "test_iou", "Test IoU for different numbers of clients", "epoch", "hold-out IoU", &iou).or_exit(Exit::Runtime)?;
    }

    let mut montage_rows = Vec::new();
    for dir in sorted_subdirs(&results.join(ATTACK_DIR)) {
        let parsed = File::open(dir.join("report.json"))
            .map_err(anyhow::Error::from)
            .and_then(|f| Ok(serde_json::from_reader::<_, AttackOutput>(BufReader::new(f))?));
        let a = match parsed {
            Ok(a) => a,
            Err(e) => {
                outcome.warnings.push(format!("{}: skipped attack ({e})", dir.display()));
                continue;
            }
        };
        if !runs.iter().any(|r| r.summary.id == a.run) {
            outcome.warnings.push(format!("{}: attack references unknown run `{}`", dir.display(), a.run));
        }
        outcome.attacks.extend(a.reports.iter().map(|r| attack_row(&a.run, &a.victim, a.round, r)));
        if let (Ok(orig), Some(best)) = (read_gray_png(&dir.join("original.png")), a.reports.first()) {
            if orig.dims() == best.image.dims() {
                montage_rows.push(strip(&[&orig, &best.image, &best.mask], 2));
            }
        }
    }
    if !outcome.attacks.is_empty() {
        write_csv(&out.join("attacks.csv"), &outcome.attacks).or_exit(Exit::Runtime)?;
    }
    if !montage_rows.is_empty() {
        write_gray_png(&out.join("montage.png"), &stack(&montage_rows, 4)).or_exit(Exit::Runtime)?;
    }

    let mut md = String::from("# Results\n\n## Training runs\n\n");
    md.push_str(&train_markdown(&outcome.runs));
    md.push_str("\nTraining time is the summed compute of all clients run one after another; communication is free.\n");
    if !outcome.attacks.is_empty() {
        md.push_str("\n## Attacks\n\nSSIM is computed after unsupervised re-segmentation of the reconstruction.\n\n");
        md.push_str(&attack_markdown(&outcome.attacks));
    }
    if !outcome.warnings.is_empty() {
        md.push_str("\n## Warnings\n\n");
        for w in &outcome.warnings {
            md.push_str(&format!("- {w}\n"));
        }
    }
    fs::write(out.join("summary.md"), md).or_exit(Exit::Runtime)?;
    Ok(outcome)
}

/// Training rows previously written by `train`.
pub fn read_results(out: &Path) -> anyhow::Result<Vec<TrainRow>> {
    read_csv(&out.join(RESULTS_CSV))
}
