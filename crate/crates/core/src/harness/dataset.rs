//! Dataset generation: potentials from images, simulated measurements,
//! noise and backprojections written as SCTN tensors plus a JSON manifest.

use super::phantom::{list_images, load_image, phantom};
use super::tensor::{read_tensor, write_tensor, Tensor};
use super::{atomic_write, ExperimentConfig, ImageSource};
use crate::error::{Error, Result};
use crate::forward::{add_noise, simulate_transmissions_unchecked, ForwardModel};
use crate::inverse::backproject;
use crate::rng;
use crate::scene::potential_from_image;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

pub const MANIFEST_NAME: &str = "manifest.json";
pub const VERSION: &str = concat!("scatter-core ", env!("CARGO_PKG_VERSION"));

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Self::Train => "train",
            Self::Val => "val",
            Self::Test => "test",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverSummary {
    /// Largest iteration count over the transmissions.
    pub iterations: usize,
    /// Largest final relative residual over the transmissions.
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub id: u64,
    pub split: Split,
    pub sweep_value: f64,
    /// Noise seed of this sample and sweep point.
    pub seed: u64,
    /// Image the potential came from.
    pub source: String,
    pub x_path: Option<String>,
    pub y_path: Option<String>,
    pub w_path: Option<String>,
    pub solver: Option<SolverSummary>,
    pub excluded: bool,
    pub reason: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub config: ExperimentConfig,
    pub version: String,
    pub generator: String,
    pub sweep_axis: String,
    pub samples: Vec<SampleRecord>,
}

impl DatasetManifest {
    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_slice(&std::fs::read(path)?)?)
    }

    /// Relative paths of every data file the manifest references.
    pub fn files(&self) -> Vec<String> {
        self.samples
            .iter()
            .flat_map(|s| [&s.x_path, &s.y_path, &s.w_path])
            .filter_map(|p| p.clone())
            .collect()
    }

    pub fn included(&self) -> impl Iterator<Item = &SampleRecord> {
        self.samples.iter().filter(|s| !s.excluded)
    }
}

struct SampleSpec {
    id: u64,
    split: Split,
    source: String,
    image: std::result::Result<Vec<f64>, String>,
}

fn sample_specs(cfg: &ExperimentConfig) -> Result<Vec<SampleSpec>> {
    let n = cfg.scene.grid.n;
    let splits = [
        (Split::Train, cfg.counts.train),
        (Split::Val, cfg.counts.val),
        (Split::Test, cfg.counts.test),
    ];
    let labels: Vec<Split> = splits
        .iter()
        .flat_map(|&(s, count)| std::iter::repeat_n(s, count))
        .collect();
    match &cfg.image_source {
        ImageSource::Builtin { seed } => Ok(labels
            .par_iter()
            .enumerate()
            .map(|(i, &split)| SampleSpec {
                id: i as u64,
                split,
                source: format!("builtin:{seed}:{i}"),
                image: Ok(phantom(n, *seed, i as u64)),
            })
            .collect()),
        ImageSource::Directory { path, seed } => {
            let mut files = list_images(path)
                .map_err(|e| Error::Config(format!("image directory {}: {e}", path.display())))?;
            if files.len() < labels.len() {
                return Err(Error::Config(format!(
                    "{} images requested but {} has only {}",
                    labels.len(),
                    path.display(),
                    files.len()
                )));
            }
            files.shuffle(&mut rng::stream(*seed, &[]));
            Ok(labels
                .par_iter()
                .zip(files.par_iter())
                .enumerate()
                .map(|(i, (&split, file))| SampleSpec {
                    id: i as u64,
                    split,
                    source: file
                        .file_name()
                        .map(|f| f.to_string_lossy().into_owned())
                        .unwrap_or_default(),
                    image: load_image(file, n).map_err(|e| format!("unreadable image: {e}")),
                })
                .collect())
        }
    }
}

/// Clears a previous dataset: files listed in an existing manifest are
/// removed; anything else in a non-empty directory is an error.
fn prepare_out_dir(out_dir: &Path) -> Result<()> {
    if !out_dir.exists() {
        std::fs::create_dir_all(out_dir)?;
        return Ok(());
    }
    let manifest = out_dir.join(MANIFEST_NAME);
    if manifest.is_file() {
        let old = DatasetManifest::load(&manifest)
            .map_err(|e| Error::Usage(format!("existing {}: {e}", manifest.display())))?;
        for rel in old.files() {
            let p = out_dir.join(&rel);
            if p.is_file() {
                std::fs::remove_file(p)?;
            }
        }
        std::fs::remove_file(&manifest)?;
    }
    let leftover = walk_files(out_dir)?;
    if let Some(first) = leftover.first() {
        return Err(Error::Usage(format!(
            "output directory {} holds files not produced by a previous run (e.g. {first})",
            out_dir.display()
        )));
    }
    Ok(())
}

/// All regular files below `root`, as sorted `/`-separated relative paths.
pub fn walk_files(root: &Path) -> Result<Vec<String>> {
    let mut out = Vec::new();
    for entry in walkdir::WalkDir::new(root).min_depth(1) {
        let entry = entry.map_err(|e| Error::Io(e.into()))?;
        if entry.file_type().is_file() {
            let rel = entry.path().strip_prefix(root).expect("walk stays below root");
            let parts: Vec<String> = rel.components().map(|c| c.as_os_str().to_string_lossy().into_owned()).collect();
            out.push(parts.join("/"));
        }
    }
    out.sort();
    Ok(out)
}

/// Checks that every file under `out_dir` besides the manifest is referenced
/// exactly once, and that every referenced tensor parses with the expected
/// dims.
pub fn verify_dataset(out_dir: &Path) -> Result<DatasetManifest> {
    let manifest = DatasetManifest::load(&out_dir.join(MANIFEST_NAME))?;
    let referenced = manifest.files();
    let unique: BTreeSet<&String> = referenced.iter().collect();
    if unique.len() != referenced.len() {
        return Err(Error::Validation("manifest references a file twice".into()));
    }
    let on_disk: BTreeSet<String> = walk_files(out_dir)?
        .into_iter()
        .filter(|f| f != MANIFEST_NAME)
        .collect();
    let listed: BTreeSet<String> = referenced.iter().cloned().collect();
    if on_disk != listed {
        let extra: Vec<_> = on_disk.difference(&listed).collect();
        let missing: Vec<_> = listed.difference(&on_disk).collect();
        return Err(Error::Validation(format!(
            "dataset files disagree with the manifest: unlisted {extra:?}, missing {missing:?}"
        )));
    }
    let n = manifest.config.scene.grid.n as u64;
    let m = manifest.config.scene.receivers.count as u64;
    for (j, s) in manifest.samples.iter().enumerate() {
        if s.excluded {
            if s.reason.is_none() {
                return Err(Error::Validation(format!("excluded sample {j} has no reason")));
            }
            continue;
        }
        let paths = [&s.x_path, &s.y_path, &s.w_path];
        let [x, y, w] = paths.map(|p| {
            p.as_ref()
                .ok_or_else(|| Error::Validation(format!("sample {} is missing a path", s.id)))
                .and_then(|p| read_tensor(&out_dir.join(p)))
        });
        let (x, y, w) = (x?, y?, w?);
        if x.dims != [n, n] || w.dims != [n, n] || y.dims.len() != 2 || y.dims[1] != m {
            return Err(Error::Validation(format!("sample {} has unexpected tensor dims", s.id)));
        }
    }
    Ok(manifest)
}

enum Outcome {
    Written {
        paths: [String; 3],
        solver: SolverSummary,
    },
    Excluded {
        reason: String,
        solver: Option<SolverSummary>,
    },
}

fn exclusion(err: Error) -> Result<Outcome> {
    match err {
        Error::Numerical(_) | Error::SolverFailed { .. } | Error::Singularity(_) => Ok(Outcome::Excluded {
            reason: err.to_string(),
            solver: None,
        }),
        other => Err(other),
    }
}

/// Generates every (sample, sweep value) pair. Sweep points run one after the
/// other; samples within a point run in parallel. Output bytes depend only on
/// the configuration.
pub fn generate_dataset(cfg: &ExperimentConfig, out_dir: &Path) -> Result<DatasetManifest> {
    cfg.validate()?;
    let specs = sample_specs(cfg)?;
    prepare_out_dir(out_dir)?;

    let mut samples = Vec::with_capacity(specs.len() * cfg.sweep.len());
    for j in 0..cfg.sweep.len() {
        let point = cfg.sweep.point(j, &cfg.fixed);
        let scene = cfg.scene_for(j)?.build()?;
        let model = ForwardModel::new(&scene)?;
        let label = cfg.sweep.label(j);
        let records: Vec<SampleRecord> = specs
            .par_iter()
            .map(|spec| {
                let seed = rng::derive_seed(cfg.base_seed, &[spec.id, j as u64]);
                let stem = format!("{}/{:05}_{}", spec.split.name(), spec.id, label);
                let outcome = match &spec.image {
                    Err(reason) => Outcome::Excluded {
                        reason: reason.clone(),
                        solver: None,
                    },
                    Ok(img) => run_sample(cfg, &model, img, point.f_max, point.snr_db, seed, &stem, out_dir)
                        .or_else(exclusion)?,
                };
                let mut record = SampleRecord {
                    id: spec.id,
                    split: spec.split,
                    sweep_value: cfg.sweep.value(j),
                    seed,
                    source: spec.source.clone(),
                    x_path: None,
                    y_path: None,
                    w_path: None,
                    solver: None,
                    excluded: false,
                    reason: None,
                };
                match outcome {
                    Outcome::Written { paths, solver } => {
                        let [x, y, w] = paths;
                        record.x_path = Some(x);
                        record.y_path = Some(y);
                        record.w_path = Some(w);
                        record.solver = Some(solver);
                    }
                    Outcome::Excluded { reason, solver } => {
                        log::warn!("sample {} at {} = {label} excluded: {reason}", spec.id, cfg.sweep.axis());
                        record.excluded = true;
                        record.reason = Some(reason);
                        record.solver = solver;
                    }
                }
                Ok(record)
            })
            .collect::<Result<_>>()?;
        samples.extend(records);
    }

    if samples.iter().all(|s| s.excluded) {
        return Err(Error::Validation(format!(
            "dataset is empty: all {} samples were excluded",
            samples.len()
        )));
    }
    let manifest = DatasetManifest {
        config: cfg.clone(),
        version: VERSION.to_string(),
        generator: rng::GENERATOR.to_string(),
        sweep_axis: cfg.sweep.axis().to_string(),
        samples,
    };
    let mut text = serde_json::to_vec_pretty(&manifest)?;
    text.push(b'\n');
    atomic_write(&out_dir.join(MANIFEST_NAME), &text)?;
    Ok(manifest)
}

#[allow(clippy::too_many_arguments)]
fn run_sample(
    cfg: &ExperimentConfig,
    model: &ForwardModel,
    img: &[f64],
    f_max: f64,
    snr_db: Option<f64>,
    seed: u64,
    stem: &str,
    out_dir: &Path,
) -> Result<Outcome> {
    let grid = &model.scene.grid;
    let x = potential_from_image(img, grid, f_max, &model.scene.medium)?;
    let sim = simulate_transmissions_unchecked(model, &x, &cfg.solver)?;
    let solver = SolverSummary {
        iterations: sim.reports.iter().map(|r| r.iterations).max().unwrap_or(0),
        residual: sim.reports.iter().map(|r| r.final_residual).fold(0.0, f64::max),
    };
    let failed: Vec<usize> = (0..sim.reports.len()).filter(|&k| !sim.reports[k].converged).collect();
    if !failed.is_empty() {
        return Ok(Outcome::Excluded {
            reason: format!("solver did not converge for transmissions {failed:?}"),
            solver: Some(solver),
        });
    }
    let ms = match snr_db {
        None => sim.measurements,
        Some(_) if sim.measurements.energy() == 0.0 => {
            return Ok(Outcome::Excluded {
                reason: "all-zero measurements cannot be noised at a finite SNR".into(),
                solver: Some(solver),
            })
        }
        Some(s) => add_noise(&sim.measurements, s, seed)?,
    };
    let bp = backproject(&ms, &model.incident, &model.sensor)?;

    let n = grid.n() as u64;
    let paths = [
        format!("{stem}.x.sctn"),
        format!("{stem}.y.sctn"),
        format!("{stem}.w.sctn"),
    ];
    let tensors = [
        Tensor::real(vec![n, n], x.values)?,
        Tensor::complex(vec![ms.k_count as u64, ms.m_count as u64], ms.y)?,
        Tensor::complex(vec![n, n], bp.w)?,
    ];
    let full: Vec<PathBuf> = paths.iter().map(|p| out_dir.join(p)).collect();
    if let Some(dir) = full[0].parent() {
        std::fs::create_dir_all(dir)?;
    }
    for (path, tensor) in full.iter().zip(&tensors) {
        write_tensor(path, tensor)?;
    }
    Ok(Outcome::Written { paths, solver })
}
