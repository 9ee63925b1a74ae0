//! Experiment configuration, dataset generation and file formats.

pub mod dataset;
pub mod pgm;
pub mod phantom;
pub mod tensor;

pub use dataset::{generate_dataset, DatasetManifest, SampleRecord, SolverSummary, Split};
pub use pgm::render_pgm;
pub use tensor::{read_tensor, write_tensor, Tensor, TensorData};

use crate::error::{Error, Result};
use crate::forward::SolverSettings;
use crate::scene::SceneConfig;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::{Path, PathBuf};

/// Writes `bytes` to a temporary file next to `path`, then renames it over
/// `path`.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// Swept parameter and its values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Sweep {
    /// Permittivity contrast `f_max`.
    Contrast(Vec<f64>),
    /// Number of transmissions `K`.
    Transmissions(Vec<usize>),
    /// Input SNR in dB.
    InputSnr(Vec<f64>),
}

impl Sweep {
    pub fn len(&self) -> usize {
        match self {
            Self::Contrast(v) | Self::InputSnr(v) => v.len(),
            Self::Transmissions(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn axis(&self) -> &'static str {
        match self {
            Self::Contrast(_) => "contrast",
            Self::Transmissions(_) => "transmissions",
            Self::InputSnr(_) => "input_snr",
        }
    }

    pub fn value(&self, i: usize) -> f64 {
        match self {
            Self::Contrast(v) | Self::InputSnr(v) => v[i],
            Self::Transmissions(v) => v[i] as f64,
        }
    }

    /// Sweep value as it appears in file names.
    pub fn label(&self, i: usize) -> String {
        match self {
            Self::Contrast(v) => format!("{:e}", v[i]),
            Self::Transmissions(v) => v[i].to_string(),
            Self::InputSnr(v) => format!("{}", v[i]),
        }
    }

    /// Parameters of sweep point `i`.
    pub fn point(&self, i: usize, fixed: &FixedParams) -> FixedParams {
        let mut p = fixed.clone();
        match self {
            Self::Contrast(v) => p.f_max = v[i],
            Self::Transmissions(v) => p.transmissions = v[i],
            Self::InputSnr(v) => p.snr_db = Some(v[i]),
        }
        p
    }
}

/// Values of the axes that are not swept.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedParams {
    pub f_max: f64,
    pub transmissions: usize,
    /// `None` leaves the measurements noiseless.
    pub snr_db: Option<f64>,
}

/// Defaults for the non-swept axes: `f_max = 1e-2`, `K = 40`, 25 dB.
pub fn sweep_defaults() -> FixedParams {
    FixedParams {
        f_max: 1e-2,
        transmissions: 40,
        snr_db: Some(25.0),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Counts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl Counts {
    pub fn total(&self) -> usize {
        self.train + self.val + self.test
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ImageSource {
    /// Random smooth phantoms; `seed` selects the image set.
    Builtin { seed: u64 },
    /// Grayscale images, shuffled by `seed` and drawn without replacement.
    Directory { path: PathBuf, seed: u64 },
}

fn default_source() -> ImageSource {
    ImageSource::Builtin { seed: 0 }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    /// Scene geometry; `sources.count` is replaced by the effective `K`.
    pub scene: SceneConfig,
    pub sweep: Sweep,
    #[serde(default = "sweep_defaults")]
    pub fixed: FixedParams,
    pub counts: Counts,
    #[serde(default = "default_source")]
    pub image_source: ImageSource,
    /// Drives the measurement noise only.
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default)]
    pub solver: SolverSettings,
}

pub const PRESETS: [&str; 9] = [
    "tiny",
    "desk-contrast",
    "desk-transmissions",
    "desk-snr",
    "full-contrast",
    "full-transmissions",
    "full-snr",
    "full-extreme-noise",
    "full-mismatched-size",
];

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(format!("experiment config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn preset(name: &str) -> Result<Self> {
        let contrasts = vec![1e-1, 1e-2, 1e-3, 1e-4];
        let transmissions = (1..=8).map(|k| 10 * k).collect();
        let snrs = vec![10.0, 20.0, 30.0, 40.0];
        let full_counts = Counts {
            train: 1500,
            val: 24,
            test: 24,
        };
        let desk_counts = Counts {
            train: 500,
            val: 24,
            test: 24,
        };
        let (scene, sweep, counts) = match name {
            "tiny" => {
                let mut scene = SceneConfig::desk(1);
                scene.grid.n = 16;
                scene.grid.size_m = 0.0225;
                (
                    scene,
                    Sweep::Contrast(vec![1e-2]),
                    Counts {
                        train: 2,
                        val: 1,
                        test: 1,
                    },
                )
            }
            "desk-contrast" => (SceneConfig::desk(1), Sweep::Contrast(contrasts), desk_counts),
            "desk-transmissions" => (SceneConfig::desk(1), Sweep::Transmissions(transmissions), desk_counts),
            "desk-snr" => (SceneConfig::desk(1), Sweep::InputSnr(snrs), desk_counts),
            "full-contrast" => (SceneConfig::full(1), Sweep::Contrast(contrasts), full_counts),
            "full-transmissions" => (SceneConfig::full(1), Sweep::Transmissions(transmissions), full_counts),
            "full-snr" => (SceneConfig::full(1), Sweep::InputSnr(snrs), full_counts),
            "full-extreme-noise" => (
                SceneConfig::full(1),
                Sweep::InputSnr(vec![5.0]),
                Counts {
                    train: 0,
                    val: 0,
                    test: 24,
                },
            ),
            "full-mismatched-size" => {
                let mut scene = SceneConfig::full(1);
                scene.grid.n = 256;
                (
                    scene,
                    Sweep::Contrast(vec![1e-2]),
                    Counts {
                        train: 0,
                        val: 0,
                        test: 24,
                    },
                )
            }
            other => {
                return Err(Error::Config(format!(
                    "unknown preset {other:?}; known presets: {}",
                    PRESETS.join(", ")
                )))
            }
        };
        let mut scene = scene;
        scene.sources.count = sweep_defaults().transmissions;
        Ok(Self {
            preset: Some(name.to_string()),
            scene,
            sweep,
            fixed: sweep_defaults(),
            counts,
            image_source: default_source(),
            base_seed: 0,
            solver: SolverSettings::default(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.sweep.is_empty() {
            return Err(Error::Config(format!("{} sweep has no values", self.sweep.axis())));
        }
        for i in 0..self.sweep.len() {
            let p = self.sweep.point(i, &self.fixed);
            if !(p.f_max > 0.0) || !p.f_max.is_finite() {
                return Err(Error::Config(format!("contrast must be positive, got {}", p.f_max)));
            }
            if p.transmissions == 0 {
                return Err(Error::Config("transmission count must be at least 1".into()));
            }
            if let Some(s) = p.snr_db {
                if !s.is_finite() {
                    return Err(Error::Config(format!("input SNR must be finite, got {s}")));
                }
            }
        }
        let mut labels: Vec<String> = (0..self.sweep.len()).map(|i| self.sweep.label(i)).collect();
        labels.sort();
        labels.dedup();
        if labels.len() != self.sweep.len() {
            return Err(Error::Config("sweep values must be distinct".into()));
        }
        if self.counts.total() == 0 {
            return Err(Error::Config("counts request no samples".into()));
        }
        self.solver.validate()?;
        self.scene_for(0)?.build()?;
        Ok(())
    }

    /// Scene of sweep point `i`, with the effective transmission count.
    pub fn scene_for(&self, i: usize) -> Result<SceneConfig> {
        let mut scene = self.scene.clone();
        scene.sources.count = self.sweep.point(i, &self.fixed).transmissions;
        Ok(scene)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_are_valid() {
        for name in PRESETS {
            let cfg = ExperimentConfig::preset(name).unwrap();
            cfg.validate().unwrap();
            let text = serde_json::to_string(&cfg).unwrap();
            assert_eq!(ExperimentConfig::from_json(&text).unwrap(), cfg);
        }
        assert!(ExperimentConfig::preset("nope").is_err());
    }

    #[test]
    fn preset_values() {
        let t = ExperimentConfig::preset("full-transmissions").unwrap();
        assert_eq!(t.sweep, Sweep::Transmissions(vec![10, 20, 30, 40, 50, 60, 70, 80]));
        let c = ExperimentConfig::preset("full-contrast").unwrap();
        assert_eq!(c.sweep, Sweep::Contrast(vec![1e-1, 1e-2, 1e-3, 1e-4]));
        assert_eq!(c.scene.grid.n, 128);
        assert_eq!(c.counts.total(), 1548);
        let e = ExperimentConfig::preset("full-extreme-noise").unwrap();
        assert_eq!(e.sweep, Sweep::InputSnr(vec![5.0]));
    }

    #[test]
    fn sweep_points_override_defaults() {
        let d = sweep_defaults();
        assert_eq!((d.f_max, d.transmissions, d.snr_db), (1e-2, 40, Some(25.0)));
        let s = Sweep::Transmissions(vec![10, 20]);
        assert_eq!(s.point(1, &d).transmissions, 20);
        assert_eq!(s.point(1, &d).f_max, 1e-2);
        assert_eq!(Sweep::Contrast(vec![1e-3]).label(0), "1e-3");
        assert_eq!(Sweep::InputSnr(vec![25.0]).label(0), "25");
    }

    #[test]
    fn json_shape() {
        let text = r#"{
            "scene": {"grid": {"n": 16, "size_m": 0.0225},
                      "medium": {"eps_b": 1.0, "lambda_m": 0.0084},
                      "sources": {"count": 4, "radius_m": 1.6, "mode": "point_source"},
                      "receivers": {"count": 360, "radius_m": 1.6}},
            "sweep": {"contrast": [0.01]},
            "counts": {"train": 2, "val": 1, "test": 1},
            "image_source": {"builtin": {"seed": 3}},
            "base_seed": 9
        }"#;
        let cfg = ExperimentConfig::from_json(text).unwrap();
        assert_eq!(cfg.fixed, sweep_defaults());
        assert_eq!(cfg.scene_for(0).unwrap().sources.count, 40);
        assert!(ExperimentConfig::from_json(&text.replace("\"contrast\": [0.01]", "\"contrast\": []")).is_err());
        assert!(ExperimentConfig::from_json(&text.replace("base_seed", "seed")).is_err());
    }
}
