//! Subcommand implementations. Each writes its primary outputs atomically
//! plus a run-metadata sidecar, and never mutates its inputs.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use anglegraph_core::bench::{bench_csv, bench_markdown, run_bench, BenchInput};
use anglegraph_core::encoding::{Encoder, EncoderKind};
use anglegraph_core::error::{Error, Result};
use anglegraph_core::evaluation::{evaluate, report_csv, report_markdown, EvalConfig, EvalFrames};
use anglegraph_core::gnn::{log_csv, train as train_model, Checkpoint, TrainFrame};
use anglegraph_core::io::{
    build_manifest, read_detections, read_labels, read_velodyne_bin, write_atomic,
    write_detections, RunConfig,
};
use anglegraph_core::pipeline::detect_frame;
use anglegraph_core::types::{Box7DoF, GroundTruthBox};

use crate::metadata::RunTimer;
use crate::ConfigArgs;

/// Load the config file (when given) and apply flag overrides.
fn resolve_config(args: &ConfigArgs) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(e) = &args.encoder {
        cfg.encoder = EncoderKind::parse(e)?;
    }
    if let Some(r) = args.radius {
        cfg.radius = Some(r);
    }
    if let Some(v) = args.voxel_size {
        cfg.voxel_size = v;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn init_thread_pool(threads: usize) {
    if threads > 1 {
        // ignore failure on repeated initialization (tests call in-process)
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|source| Error::FileUnwritable {
        path: dir.to_path_buf(),
        source,
    })
}

fn list_files(dir: &Path, ext: &str) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|source| Error::FileUnreadable {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().and_then(|e| e.to_str()) == Some(ext))
        .collect();
    files.sort();
    Ok(files)
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or_default()
        .to_string()
}

pub fn prepare(data_dir: &Path, out: &Path, args: &ConfigArgs) -> Result<()> {
    let timer = RunTimer::start();
    let cfg = resolve_config(args)?;
    let manifest = build_manifest(data_dir, &cfg)?;
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_atomic(out, text.as_bytes())?;
    if let Some(dir) = out.parent() {
        timer.write(dir, "prepare", &cfg, args.threads)?;
    }
    log::info!(
        "prepare: {} frames ({} train / {} val), {} skipped",
        manifest.frames.len(),
        manifest.train.len(),
        manifest.val.len(),
        manifest.errors.len()
    );
    Ok(())
}

fn load_train_frames(data_dir: &Path, ids: &[String]) -> Result<Vec<TrainFrame>> {
    ids.iter()
        .map(|id| {
            let cloud = read_velodyne_bin(&data_dir.join(format!("{id}.bin")))?;
            let labels = read_labels(&data_dir.join(format!("{id}.jsonl")))?;
            Ok(TrainFrame { cloud, labels })
        })
        .collect()
}

pub fn train(data_dir: &Path, manifest_path: &Path, out_dir: &Path, args: &ConfigArgs) -> Result<()> {
    let timer = RunTimer::start();
    let cfg = resolve_config(args)?;
    init_thread_pool(args.threads);
    ensure_dir(out_dir)?;
    let text = fs::read_to_string(manifest_path).map_err(|source| Error::FileUnreadable {
        path: manifest_path.to_path_buf(),
        source,
    })?;
    let manifest: anglegraph_core::io::DatasetManifest =
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: manifest_path.to_path_buf(),
            line: 0,
            msg: e.to_string(),
        })?;
    let frames = load_train_frames(data_dir, &manifest.train)?;
    let outcome = train_model(&frames, &cfg)?;
    Checkpoint::new(cfg.clone(), outcome.params).save(&out_dir.join("model.ckpt"))?;
    write_atomic(&out_dir.join("training_log.csv"), log_csv(&outcome.log).as_bytes())?;
    timer.write(out_dir, "train", &cfg, args.threads)?;
    log::info!("train: {} steps", outcome.steps_run);
    Ok(())
}

pub fn infer(checkpoint: &Path, frames_dir: &Path, out_dir: &Path, threads: usize) -> Result<()> {
    let timer = RunTimer::start();
    let ckpt = Checkpoint::load(checkpoint)?;
    init_thread_pool(threads);
    ensure_dir(out_dir)?;
    let bins = list_files(frames_dir, "bin")?;
    if bins.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let parallel = threads > 1;
    let run_one = |bin: &PathBuf| -> Result<()> {
        let cloud = read_velodyne_bin(bin)?;
        let dets = detect_frame(&cloud, &ckpt.params, &ckpt.config, parallel)?;
        write_detections(&out_dir.join(format!("{}.jsonl", stem(bin))), &dets)
    };
    if parallel {
        bins.par_iter().map(run_one).collect::<Result<Vec<_>>>()?;
    } else {
        for bin in &bins {
            run_one(bin)?;
        }
    }
    timer.write(out_dir, "infer", &ckpt.config, threads)?;
    log::info!("infer: {} frames", bins.len());
    Ok(())
}

pub fn eval(detections_dir: &Path, labels_dir: &Path, out_dir: &Path, args: &ConfigArgs) -> Result<()> {
    let timer = RunTimer::start();
    let cfg = resolve_config(args)?;
    ensure_dir(out_dir)?;
    let label_files = list_files(labels_dir, "jsonl")?;
    if label_files.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut dets: Vec<Vec<Box7DoF>> = Vec::new();
    let mut gts: Vec<Vec<GroundTruthBox>> = Vec::new();
    for lf in &label_files {
        gts.push(read_labels(lf)?);
        let det_path = detections_dir.join(format!("{}.jsonl", stem(lf)));
        dets.push(if det_path.exists() {
            read_detections(&det_path)?
        } else {
            Vec::new()
        });
    }
    let frames = EvalFrames { detections: &dets, ground_truth: &gts };
    let results = evaluate(&frames, cfg.category_set.categories(), &EvalConfig::default())?;
    write_atomic(&out_dir.join("ap_report.csv"), report_csv(&results).as_bytes())?;
    write_atomic(
        &out_dir.join("ap_report.md"),
        report_markdown(&results, cfg.category_set.categories()).as_bytes(),
    )?;
    timer.write(out_dir, "eval", &cfg, args.threads)?;
    for r in &results {
        println!(
            "{} {}: AP {:.2} (TP {} FP {} FN {} GT {})",
            r.category.name(),
            r.difficulty.name(),
            r.ap,
            r.tp,
            r.fp,
            r.fn_count,
            r.n_gt
        );
    }
    Ok(())
}

pub fn bench(frames_dir: &Path, out_dir: &Path, repetitions: usize, args: &ConfigArgs) -> Result<()> {
    let timer = RunTimer::start();
    let cfg = resolve_config(args)?;
    init_thread_pool(args.threads);
    ensure_dir(out_dir)?;
    let bins = list_files(frames_dir, "bin")?;
    let inputs: Vec<BenchInput> = bins
        .iter()
        .map(|p| {
            Ok(BenchInput { cloud: read_velodyne_bin(p)?, path: Some(p.clone()) })
        })
        .collect::<Result<_>>()?;
    let rows = run_bench(&inputs, &cfg, repetitions, args.threads)?;
    write_atomic(&out_dir.join("bench.csv"), bench_csv(&rows).as_bytes())?;
    write_atomic(&out_dir.join("bench.md"), bench_markdown(&rows).as_bytes())?;
    timer.write(out_dir, "bench", &cfg, args.threads)?;
    print!("{}", bench_markdown(&rows));
    Ok(())
}

#[derive(Deserialize)]
struct PairLine {
    p_i: [f64; 3],
    p_j: [f64; 3],
    refl: f64,
}

#[derive(Serialize)]
struct FeatureLine {
    geo: Vec<f64>,
    reflectance: f64,
}

pub fn encode(pairs: &Path, encoder_name: &str, out: &Path, normalize_angles: bool) -> Result<()> {
    let kind = EncoderKind::parse(encoder_name)?;
    let encoder = Encoder::new(kind, normalize_angles);
    let text = fs::read_to_string(pairs).map_err(|source| Error::FileUnreadable {
        path: pairs.to_path_buf(),
        source,
    })?;
    let mut output = String::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let pair: PairLine = serde_json::from_str(line).map_err(|e| Error::Parse {
            path: pairs.to_path_buf(),
            line: idx + 1,
            msg: e.to_string(),
        })?;
        let feat = encoder.encode(pair.p_i, pair.p_j, pair.refl)?;
        let out_line = FeatureLine { geo: feat.geo().to_vec(), reflectance: feat.reflectance };
        output.push_str(&serde_json::to_string(&out_line).expect("feature serializes"));
        output.push('\n');
    }
    write_atomic(out, output.as_bytes())
}
