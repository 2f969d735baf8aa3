//! One function per CLI verb.

use std::path::{Path, PathBuf};

use equicanon_core::canonicalize::{canonicalize as canonicalize_cloud, normalize_coords};
use equicanon_core::contrastive::{augment as augment_cloud, train as train_encoder};
use equicanon_core::denoise::progressive_denoise_detailed;
use equicanon_core::encoder::{init_params, EncoderParams};
use equicanon_core::metrics::Variant;
use equicanon_core::neighborhood::fps as fps_cloud;
use equicanon_core::policy::{act as policy_act, ToyHead};
use equicanon_core::synth::{frame_rng, make_frame, sample_surface};
use equicanon_core::{PointCloud, RigidTransform};
use rayon::prelude::*;
use serde::Serialize;

use crate::args::{Cli, Command};
use crate::bench::{self, LEVELS};
use crate::cloud_io::{self, CloudFormat};
use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::fsutil;
use crate::manifest::{is_manifest, Manifest};
use crate::observation::{read_observation, write_json, ActionRecord};
use crate::params_io;

/// Loads the configuration and dispatches to the verb.
pub fn run(cli: &Cli) -> Result<()> {
    let cfg = RunConfig::load(cli.global.config.as_deref(), cli.global.seed)?;
    let out = cli
        .global
        .out
        .as_deref()
        .ok_or_else(|| CliError::Config("--out is required".into()))?;
    match &cli.command {
        Command::GenSynth => gen_synth(&cfg, out),
        Command::Denoise { input, k } => denoise(&cfg, input, *k, out),
        Command::Fps { input, m } => fps(&cfg, input, *m, out),
        Command::Augment { input } => augment(&cfg, input, out),
        Command::Canonicalize { input, params } => canonicalize(&cfg, input, params.as_deref(), out),
        Command::BenchConsistency { manifest, variants } => {
            let variants: Vec<Variant> = variants.iter().map(|&v| v.into()).collect();
            bench_consistency(&cfg, manifest, &variants, out)
        }
        Command::BenchEquivariance { params } => bench_equivariance(&cfg, params.as_deref(), out),
        Command::Train { dataset } => train(&cfg, dataset, out),
        Command::Act { observation, params, no_denoise } => act(&cfg, observation, params.as_deref(), !no_denoise, out),
    }
}

fn frame_name(t: usize, format: CloudFormat) -> String {
    format!("frame_{t:04}.{}", format.extension())
}

pub fn gen_synth(cfg: &RunConfig, out_dir: &Path) -> Result<()> {
    let spec = cfg.synth.to_sequence(cfg.seed)?;
    let base = sample_surface(&spec.shape)?;
    let format = cfg.synth.format;
    let frames = (0..spec.frames)
        .into_par_iter()
        .map(|t| make_frame(&spec, &base, t))
        .collect::<Result<Vec<_>, _>>()?;
    let names: Vec<String> = (0..frames.len()).map(|t| frame_name(t, format)).collect();
    names
        .par_iter()
        .zip(&frames)
        .try_for_each(|(name, f)| cloud_io::write_cloud(&out_dir.join(name), f))?;
    Manifest { format, frames: names, seed: cfg.seed, synth: Some(cfg.synth.clone()) }.write(&out_dir.join("manifest.json"))
}

/// Clouds read from a single file or a manifest, with their output paths.
struct Batch {
    manifest: Option<Manifest>,
    inputs: Vec<PointCloud>,
    outputs: Vec<PathBuf>,
}

impl Batch {
    fn load(input: &Path, out: &Path) -> Result<Batch> {
        if is_manifest(input) {
            let m = Manifest::read(input)?;
            if m.frames.is_empty() {
                return Err(CliError::Data(format!("{}: manifest lists no frames", input.display())));
            }
            let inputs = m.load_frames(input)?;
            let outputs = m.frames.iter().map(|f| out.join(f)).collect();
            Ok(Batch { manifest: Some(m), inputs, outputs })
        } else {
            Ok(Batch { manifest: None, inputs: vec![cloud_io::read_cloud(input)?], outputs: vec![out.to_path_buf()] })
        }
    }

    /// Sidecar for the whole batch: next to a single output, or inside the output directory.
    fn sidecar(&self, out: &Path, name: &str) -> PathBuf {
        match self.manifest {
            Some(_) => out.join(name),
            None => fsutil::sidecar(out, name),
        }
    }

    fn write(&self, out: &Path, clouds: &[PointCloud]) -> Result<()> {
        self.outputs
            .par_iter()
            .zip(clouds)
            .try_for_each(|(p, c)| cloud_io::write_cloud(p, c))?;
        if let Some(m) = &self.manifest {
            m.write(&out.join("manifest.json"))?;
        }
        Ok(())
    }
}

fn csv_bytes(header: Option<&str>, columns: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    if let Some(h) = header {
        buf.extend_from_slice(h.as_bytes());
        buf.push(b'\n');
    }
    let mut w = csv::Writer::from_writer(buf);
    let werr = |e: csv::Error| CliError::Data(e.to_string());
    w.write_record(columns).map_err(werr)?;
    for r in rows {
        w.write_record(&r).map_err(werr)?;
    }
    w.into_inner().map_err(|e| CliError::Data(e.to_string()))
}

pub fn denoise(cfg: &RunConfig, input: &Path, k: Option<usize>, out: &Path) -> Result<()> {
    let mut dcfg = cfg.denoise.to_config();
    if let Some(k) = k {
        dcfg.k = k;
    }
    dcfg.validate()?;
    let batch = Batch::load(input, out)?;
    let results = batch
        .inputs
        .par_iter()
        .map(|c| progressive_denoise_detailed(c, &dcfg))
        .collect::<Result<Vec<_>, _>>()?;
    let rows = results.iter().enumerate().flat_map(|(t, r)| {
        r.degenerate
            .iter()
            .enumerate()
            .map(move |(i, &d)| vec![t.to_string(), i.to_string(), u8::from(d).to_string()])
    });
    let csv = csv_bytes(None, &["frame_index", "point_index", "degenerate"], rows)?;
    let clouds: Vec<PointCloud> = results.into_iter().map(|r| r.cloud).collect();
    batch.write(out, &clouds)?;
    fsutil::write_atomic(&batch.sidecar(out, "degenerate.csv"), &csv)
}

pub fn fps(cfg: &RunConfig, input: &Path, m: Option<usize>, out: &Path) -> Result<()> {
    let m = m.unwrap_or(cfg.bench.fps_points);
    let batch = Batch::load(input, out)?;
    let clouds = batch
        .inputs
        .par_iter()
        .map(|c| fps_cloud(c, m, cfg.seed))
        .collect::<Result<Vec<_>, _>>()?;
    batch.write(out, &clouds)
}

pub fn augment(cfg: &RunConfig, input: &Path, out: &Path) -> Result<()> {
    let acfg = cfg.augment.to_config(cfg.seed);
    let batch = Batch::load(input, out)?;
    let clouds = batch
        .inputs
        .par_iter()
        .enumerate()
        .map(|(t, c)| augment_cloud(&normalize_coords(c).0, &acfg, &mut frame_rng(cfg.seed, t)))
        .collect::<Result<Vec<_>, _>>()?;
    batch.write(out, &clouds)
}

fn load_params(cfg: &RunConfig, path: Option<&Path>) -> Result<EncoderParams> {
    match path {
        Some(p) => params_io::read_params(p),
        None => Ok(init_params(cfg.seed, &cfg.encoder.to_arch())?),
    }
}

#[derive(Serialize)]
struct FrameRecord {
    /// Row-major rotation of the canonical-to-input transform.
    rotation: [f64; 9],
    translation: [f64; 3],
    degenerate: bool,
}

impl FrameRecord {
    fn new(t: &RigidTransform, degenerate: bool) -> Self {
        let m = t.rotation.matrix();
        let mut rotation = [0.0; 9];
        for (r, row) in m.iter().enumerate() {
            rotation[3 * r..3 * r + 3].copy_from_slice(row);
        }
        FrameRecord { rotation, translation: t.translation.to_array(), degenerate }
    }
}

pub fn canonicalize(cfg: &RunConfig, input: &Path, params: Option<&Path>, out: &Path) -> Result<()> {
    let params = load_params(cfg, params)?;
    let batch = Batch::load(input, out)?;
    let results = batch
        .inputs
        .par_iter()
        .map(|c| canonicalize_cloud(&params, c))
        .collect::<Result<Vec<_>, _>>()?;
    if results.iter().all(|r| r.degenerate) {
        return Err(CliError::Degenerate(format!("{} frame(s) in {}", results.len(), input.display())));
    }
    batch
        .outputs
        .par_iter()
        .zip(&results)
        .try_for_each(|(p, r)| write_json(&fsutil::sidecar(p, "frame.json"), &FrameRecord::new(&r.frame, r.degenerate)))?;
    let clouds: Vec<PointCloud> = results.into_iter().map(|r| r.canonical_cloud).collect();
    batch.write(out, &clouds)
}

pub fn bench_consistency(cfg: &RunConfig, manifest_path: &Path, variants: &[Variant], out: &Path) -> Result<()> {
    let m = Manifest::read(manifest_path)?;
    if m.frames.len() < 2 {
        return Err(CliError::Data(format!("{}: need at least 2 frames, found {}", manifest_path.display(), m.frames.len())));
    }
    let frames = m.load_frames(manifest_path)?;
    let reports = bench::consistency(&frames, variants, &cfg.denoise.to_config(), cfg.bench.fps_points, cfg.seed)?;
    let mut rows = Vec::new();
    for r in &reports {
        for (t, v) in r.values.iter().enumerate() {
            rows.push(vec![t.to_string(), r.variant.as_str().to_string(), v.to_string()]);
        }
    }
    for r in &reports {
        rows.push(vec!["mean".to_string(), r.variant.as_str().to_string(), r.mean.to_string()]);
    }
    fsutil::write_atomic(out, &csv_bytes(None, &["frame_index", "variant", "chamfer"], rows)?)
}

pub fn bench_equivariance(cfg: &RunConfig, params: Option<&Path>, out_dir: &Path) -> Result<()> {
    let params = load_params(cfg, params)?;
    let instances = bench::sample_instances(&cfg.bench.instance_shapes(), cfg.bench.instance_points, cfg.seed)?;
    let mut summary = Vec::new();
    for level in LEVELS {
        let r = bench::run_level(&params, &instances, level, cfg.bench.augmentations, cfg.seed)?;
        let header = level.header();
        let dev_rows = r.views.iter().map(|v| {
            vec![
                v.instance.to_string(),
                v.augmentation.to_string(),
                v.angle.to_string(),
                v.rot_dev.to_string(),
                v.trans_dev.to_string(),
                u8::from(v.degenerate).to_string(),
            ]
        });
        let dev = csv_bytes(Some(&header), &["instance", "augmentation", "angle", "rot_dev", "trans_dev", "degenerate"], dev_rows)?;
        fsutil::write_atomic(&out_dir.join(format!("level{}_deviations.csv", level.index)), &dev)?;

        let matrix = r.similarity_matrix()?;
        let mut columns = vec!["row".to_string(), "instance".to_string()];
        columns.extend((0..matrix.len()).map(|j| format!("v{j}")));
        let sim_rows = matrix.iter().enumerate().map(|(i, row)| {
            let mut rec = vec![i.to_string(), r.groups[i].to_string()];
            rec.extend(row.iter().map(|s| s.to_string()));
            rec
        });
        let cols: Vec<&str> = columns.iter().map(String::as_str).collect();
        fsutil::write_atomic(&out_dir.join(format!("level{}_similarity.csv", level.index)), &csv_bytes(Some(&header), &cols, sim_rows)?)?;
        summary.push(vec![
            level.index.to_string(),
            level.jitter_sigma.to_string(),
            level.frac.to_string(),
            r.mean_rot_dev().to_string(),
            r.intra.to_string(),
            r.inter.to_string(),
        ]);
    }
    fsutil::write_atomic(
        &out_dir.join("summary.csv"),
        &csv_bytes(None, &["level", "jitter_sigma", "frac", "mean_rot_dev", "intra_similarity", "inter_similarity"], summary)?,
    )
}

/// Cloud files of a directory in name order, or the frames of a manifest.
pub fn load_dataset(path: &Path) -> Result<Vec<PointCloud>> {
    if is_manifest(path) {
        return Manifest::read(path)?.load_frames(path);
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(path)
        .map_err(|e| CliError::io(path, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && CloudFormat::from_path(p).is_some())
        .collect();
    files.sort();
    files.iter().map(|p| cloud_io::read_cloud(p)).collect()
}

pub fn train(cfg: &RunConfig, dataset: &Path, out_dir: &Path) -> Result<()> {
    let data = load_dataset(dataset)?;
    if data.len() < 2 {
        return Err(CliError::Data(format!("{}: need at least 2 clouds, found {}", dataset.display(), data.len())));
    }
    let init = init_params(cfg.seed, &cfg.encoder.to_arch())?;
    let (params, history) = train_encoder(&init, &data, &cfg.augment.to_config(cfg.seed), &cfg.contrastive.to_config(cfg.seed))?;
    let rows = history
        .iter()
        .map(|r| vec![r.step.to_string(), r.epoch.to_string(), r.loss.to_string()]);
    let csv = csv_bytes(None, &["step", "epoch", "loss"], rows)?;
    params_io::write_params(&out_dir.join("params.eqfm"), &params)?;
    fsutil::write_atomic(&out_dir.join("loss.csv"), &csv)
}

pub fn act(cfg: &RunConfig, observation: &Path, params: Option<&Path>, denoise: bool, out: &Path) -> Result<()> {
    let params = load_params(cfg, params)?;
    let o = read_observation(observation)?;
    let dcfg = cfg.denoise.to_config();
    let r = policy_act(&params, &ToyHead::default(), &o, denoise.then_some(&dcfg))?;
    write_json(out, &ActionRecord::new(&r.action, r.degenerate))
}
