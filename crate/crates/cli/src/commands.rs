use crate::{Command, SolverArgs};
use scatter_core::forward::{add_noise, simulate_transmissions, ForwardModel, MeasurementSet, Method, SolverSettings};
use scatter_core::harness::dataset::{verify_dataset, Split, MANIFEST_NAME};
use scatter_core::harness::phantom::phantom;
use scatter_core::harness::{
    atomic_write, generate_dataset, read_tensor, render_pgm, write_tensor, ExperimentConfig, Tensor, PRESETS,
};
use scatter_core::inverse::{backproject, born_reconstruct, normal_operator_norm, plain_snr, recon_snr};
use scatter_core::oracle::CylinderPreset;
use scatter_core::scene::{potential_cylinder, potential_from_image, Potential, Scene, SceneConfig};
use scatter_core::Error;
use serde_json::json;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

pub const EXIT_OK: u8 = 0;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_SOLVER: u8 = 3;
pub const EXIT_IO: u8 = 4;
pub const EXIT_VALIDATION: u8 = 5;

#[derive(Debug, Default)]
pub struct CommandResult {
    pub exit_code: u8,
    pub artifacts: Vec<PathBuf>,
    pub metrics: Option<BTreeMap<String, f64>>,
}

impl CommandResult {
    pub fn to_json(&self) -> serde_json::Value {
        json!({
            "exit_code": self.exit_code,
            "artifacts": self.artifacts,
            "metrics": self.metrics,
        })
    }
}

#[derive(Debug)]
pub struct CliError {
    pub exit_code: u8,
    pub message: String,
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let exit_code = match &e {
            Error::SolverFailed { .. } | Error::Numerical(_) | Error::Singularity(_) => EXIT_SOLVER,
            Error::Io(_) | Error::Format { .. } => EXIT_IO,
            _ => EXIT_CONFIG,
        };
        Self {
            exit_code,
            message: e.to_string(),
        }
    }
}

fn config_error(message: impl Into<String>) -> CliError {
    CliError {
        exit_code: EXIT_CONFIG,
        message: message.into(),
    }
}

type CliResult = Result<CommandResult, CliError>;

pub fn run(command: Command) -> CliResult {
    match command {
        Command::Simulate {
            config,
            potential,
            out,
            snr,
            seed,
            solver,
        } => simulate(&config, &potential, &out, snr, seed, &solver),
        Command::Backproject {
            config,
            measurements,
            out,
            pgm,
        } => backproject_cmd(&config, &measurements, &out, pgm),
        Command::Validate {
            preset,
            grids,
            tol,
            eps_c,
            radius,
            size,
            solver,
        } => validate(&preset, grids, tol, eps_c, radius, size, &solver),
        Command::Dataset {
            config,
            preset,
            out,
            base_seed,
        } => dataset(config.as_deref(), preset.as_deref(), &out, base_seed),
        Command::Metrics { estimate, reference } => metrics(&estimate, &reference),
        Command::Reconstruct {
            method,
            config,
            measurements,
            out,
            reference,
            tau,
            tau_rel,
            iters,
            pgm,
            dataset,
            split,
            csv,
        } => {
            if method != "born" {
                return Err(config_error(format!("unknown method {method:?}; available: born")));
            }
            let tau = Tau { abs: tau, rel: tau_rel };
            match dataset {
                Some(dir) => reconstruct_dataset(&dir, &split, tau, iters, csv.as_deref()),
                None => reconstruct(
                    config.as_deref().expect("clap requires --config"),
                    measurements.as_deref().expect("clap requires --measurements"),
                    out.as_deref().expect("clap requires --out"),
                    reference.as_deref(),
                    tau,
                    iters,
                    pgm,
                ),
            }
        }
        Command::Preset { name, list } => preset(name.as_deref(), list),
    }
}

fn solver_settings(args: &SolverArgs) -> Result<SolverSettings, CliError> {
    let method = match args.method.as_str() {
        "bicgstab" => Method::Bicgstab,
        "cgnr" => Method::Cgnr,
        other => return Err(config_error(format!("unknown solver method {other:?}"))),
    };
    let settings = SolverSettings {
        tol: args.solver_tol,
        max_iter: args.max_iter,
        method,
    };
    settings.validate()?;
    Ok(settings)
}

fn load_scene(path: &Path) -> Result<Scene, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError {
        exit_code: EXIT_IO,
        message: format!("{}: {e}", path.display()),
    })?;
    Ok(SceneConfig::from_json(&text)?.build()?)
}

fn parse_f64(s: &str, what: &str) -> Result<f64, CliError> {
    s.parse().map_err(|_| config_error(format!("{what}: cannot parse {s:?} as a number")))
}

/// Resolves `--potential` on the scene grid.
pub fn load_potential(spec: &str, scene: &Scene) -> Result<Potential, CliError> {
    let grid = &scene.grid;
    let medium = &scene.medium;
    if let Some(rest) = spec.strip_prefix("builtin:") {
        let parts: Vec<&str> = rest.split(':').collect();
        return match parts.as_slice() {
            ["zero"] => Ok(Potential::zero(grid)),
            ["cylinder", r, eps] => Ok(potential_cylinder(
                grid,
                medium,
                parse_f64(r, "cylinder radius")?,
                parse_f64(eps, "cylinder permittivity")?,
            )?),
            ["phantom", seed, f_max] => {
                let seed = seed
                    .parse()
                    .map_err(|_| config_error(format!("phantom seed {seed:?} is not an integer")))?;
                let img = phantom(grid.n(), seed, 0);
                Ok(potential_from_image(&img, grid, parse_f64(f_max, "phantom contrast")?, medium)?)
            }
            _ => Err(config_error(format!(
                "unknown potential {spec:?}; use builtin:zero, builtin:cylinder:<r>:<eps_c> or builtin:phantom:<seed>:<f_max>"
            ))),
        };
    }
    let tensor = read_tensor(Path::new(spec))?;
    let n = grid.n() as u64;
    if tensor.dims != [n, n] {
        return Err(config_error(format!(
            "potential dims {:?} do not match the {n} x {n} grid",
            tensor.dims
        )));
    }
    let values = tensor
        .to_f64()
        .ok_or_else(|| config_error("potential tensor must be real"))?;
    Ok(Potential::from_values(grid, values, medium)?)
}

fn load_measurements(path: &Path, scene: &Scene) -> Result<MeasurementSet, CliError> {
    let tensor = read_tensor(path)?;
    let (k, m) = (scene.sources.positions.len(), scene.receivers.positions.len());
    if tensor.dims != [k as u64, m as u64] {
        return Err(config_error(format!(
            "measurements have dims {:?}, the scene expects [{k}, {m}]",
            tensor.dims
        )));
    }
    Ok(MeasurementSet::new(k, m, tensor.to_c128(), scene.hash())?)
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError {
        exit_code: EXIT_IO,
        message: format!("{}: {e}", dir.display()),
    })
}

fn simulate(config: &Path, potential: &str, out: &Path, snr: Option<f64>, seed: u64, solver: &SolverArgs) -> CliResult {
    let scene = load_scene(config)?;
    let settings = solver_settings(solver)?;
    let x = load_potential(potential, &scene)?;
    let model = ForwardModel::new(&scene)?;
    let sim = simulate_transmissions(&model, &x, &settings)?;
    for (k, r) in sim.reports.iter().enumerate() {
        println!(
            "transmission {k}: iterations {}, residual {:.3e}, converged {}",
            r.iterations, r.final_residual, r.converged
        );
    }
    let clean_energy = sim.measurements.energy();
    let ms = match snr {
        Some(s) => add_noise(&sim.measurements, s, seed)?,
        None => sim.measurements,
    };
    ensure_dir(out)?;
    let y_path = out.join("y.sctn");
    write_tensor(&y_path, &Tensor::complex(vec![ms.k_count as u64, ms.m_count as u64], ms.y.clone())?)?;
    let sidecar = json!({
        "scene_hash": ms.scene_hash,
        "k": ms.k_count,
        "m": ms.m_count,
        "noise": {
            "snr_db": ms.noise.snr_db,
            "sigma": ms.noise.sigma,
            "sigma2": ms.noise.sigma * ms.noise.sigma,
            "seed": ms.noise.seed,
        },
        "energy": clean_energy,
        "noisy_energy": ms.energy(),
        "reports": sim.reports,
    });
    let json_path = out.join("y.json");
    let mut text = serde_json::to_vec_pretty(&sidecar).map_err(Error::from)?;
    text.push(b'\n');
    atomic_write(&json_path, &text)?;
    Ok(CommandResult {
        exit_code: EXIT_OK,
        artifacts: vec![y_path, json_path],
        metrics: None,
    })
}

fn write_pgm_triplet(values: &[num_complex::Complex64], n: usize, out: &Path, stem: &str) -> Result<Vec<PathBuf>, CliError> {
    let mut written = Vec::new();
    let channels: [(&str, Vec<f64>); 3] = [
        ("re", values.iter().map(|z| z.re).collect()),
        ("im", values.iter().map(|z| z.im).collect()),
        ("abs", values.iter().map(|z| z.norm()).collect()),
    ];
    for (suffix, data) in channels {
        let path = out.join(format!("{stem}_{suffix}.pgm"));
        render_pgm(&data, n, n, &path)?;
        written.push(path);
    }
    Ok(written)
}

fn backproject_cmd(config: &Path, measurements: &Path, out: &Path, pgm: bool) -> CliResult {
    let scene = load_scene(config)?;
    let ms = load_measurements(measurements, &scene)?;
    let model = ForwardModel::new(&scene)?;
    let bp = backproject(&ms, &model.incident, &model.sensor)?;
    ensure_dir(out)?;
    let n = scene.grid.n();
    let w_path = out.join("w.sctn");
    write_tensor(&w_path, &Tensor::complex(vec![n as u64, n as u64], bp.w.clone())?)?;
    let mut artifacts = vec![w_path];
    if pgm {
        artifacts.extend(write_pgm_triplet(&bp.w, n, out, "w")?);
    }
    Ok(CommandResult {
        exit_code: EXIT_OK,
        artifacts,
        metrics: None,
    })
}

fn validate(
    preset: &str,
    grids: Vec<usize>,
    tol: f64,
    eps_c: Option<f64>,
    radius: Option<f64>,
    size: Option<f64>,
    solver: &SolverArgs,
) -> CliResult {
    if preset != "cylinder" {
        return Err(config_error(format!("unknown validation preset {preset:?}; available: cylinder")));
    }
    let settings = solver_settings(solver)?;
    let mut case = CylinderPreset::default();
    if let Some(e) = eps_c {
        case.eps_c = e;
    }
    if let Some(r) = radius {
        case.radius_m = r;
    }
    if let Some(s) = size {
        case.size_m = s;
    }
    let grids = if grids.is_empty() { vec![32, 64, 128] } else { grids };
    println!(
        "cylinder radius {} m, eps_c {}, domain {} m, wavelength {} m, {} receivers",
        case.radius_m, case.eps_c, case.size_m, case.lambda_m, case.receivers
    );
    let mut metrics = BTreeMap::new();
    let mut errors = Vec::new();
    for &n in &grids {
        let r = case.run(n, &settings)?;
        if !r.converged {
            return Err(CliError {
                exit_code: EXIT_SOLVER,
                message: format!("solver did not converge on the {n} x {n} grid"),
            });
        }
        match r.error {
            None => {
                println!("grid {n}: relative error 0 (no contrast: both fields vanish, comparison skipped)");
                errors.push(0.0);
            }
            Some(e) => {
                println!("grid {n}: relative error {e:.6} ({} iterations)", r.iterations);
                errors.push(e);
            }
        }
        metrics.insert(format!("error_{n}"), *errors.last().expect("just pushed"));
    }
    let monotone = errors.windows(2).all(|w| w[1] < w[0] || (w[0] == 0.0 && w[1] == 0.0));
    let last = *errors.last().expect("at least one grid");
    let pass = monotone && last <= tol;
    println!(
        "{}: errors {}decreasing, final {last:.6} {} tolerance {tol}",
        if pass { "PASS" } else { "FAIL" },
        if monotone { "" } else { "not " },
        if last <= tol { "within" } else { "above" }
    );
    Ok(CommandResult {
        exit_code: if pass { EXIT_OK } else { EXIT_VALIDATION },
        artifacts: Vec::new(),
        metrics: Some(metrics),
    })
}

fn dataset(config: Option<&Path>, preset: Option<&str>, out: &Path, base_seed: Option<u64>) -> CliResult {
    let mut cfg = match (config, preset) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError {
                exit_code: EXIT_IO,
                message: format!("{}: {e}", path.display()),
            })?;
            ExperimentConfig::from_json(&text)?
        }
        (None, Some(name)) => ExperimentConfig::preset(name)?,
        (None, None) => return Err(config_error("either --config or --preset is required")),
    };
    if let Some(seed) = base_seed {
        cfg.base_seed = seed;
    }
    let manifest = generate_dataset(&cfg, out)?;
    let included = manifest.included().count();
    println!(
        "{} samples ({} excluded) over {} {} values",
        manifest.samples.len(),
        manifest.samples.len() - included,
        cfg.sweep.len(),
        manifest.sweep_axis
    );
    for s in manifest.samples.iter().filter(|s| s.excluded) {
        println!(
            "excluded sample {} at {}: {}",
            s.id,
            s.sweep_value,
            s.reason.as_deref().unwrap_or("")
        );
    }
    Ok(CommandResult {
        exit_code: EXIT_OK,
        artifacts: vec![out.join(MANIFEST_NAME)],
        metrics: None,
    })
}

fn read_real(path: &Path) -> Result<(Vec<u64>, Vec<f64>), CliError> {
    let t = read_tensor(path)?;
    let values = t
        .to_f64()
        .ok_or_else(|| config_error(format!("{} must hold a real tensor", path.display())))?;
    Ok((t.dims, values))
}

fn metrics(estimate: &Path, reference: &Path) -> CliResult {
    let (de, e) = read_real(estimate)?;
    let (dr, r) = read_real(reference)?;
    if de != dr {
        return Err(config_error(format!("estimate dims {de:?} differ from reference dims {dr:?}")));
    }
    let fitted = recon_snr(&e, &r)?;
    let plain = plain_snr(&e, &r)?;
    println!("scale-optimal SNR: {fitted:.2} dB");
    println!("plain SNR: {plain:.2} dB");
    Ok(CommandResult {
        exit_code: EXIT_OK,
        artifacts: Vec::new(),
        metrics: Some(BTreeMap::from([
            ("scale_optimal_snr_db".to_string(), fitted),
            ("plain_snr_db".to_string(), plain),
        ])),
    })
}

#[derive(Clone, Copy, Debug)]
struct Tau {
    abs: Option<f64>,
    rel: f64,
}

impl Tau {
    fn resolve(self, model: &ForwardModel) -> Result<f64, CliError> {
        match self.abs {
            Some(t) => Ok(t),
            None => Ok(self.rel * normal_operator_norm(model, 50)?),
        }
    }
}

fn reconstruct(
    config: &Path,
    measurements: &Path,
    out: &Path,
    reference: Option<&Path>,
    tau: Tau,
    iters: usize,
    pgm: bool,
) -> CliResult {
    let scene = load_scene(config)?;
    let ms = load_measurements(measurements, &scene)?;
    let model = ForwardModel::new(&scene)?;
    let tau = tau.resolve(&model)?;
    let est = born_reconstruct(&ms, &model, tau, iters)?;
    println!(
        "born: tau {tau:.3e}, {} iterations, relative gradient {:.3e}",
        est.iterations, est.gradient
    );
    ensure_dir(out)?;
    let n = scene.grid.n();
    let path = out.join("x_hat.sctn");
    write_tensor(&path, &Tensor::real(vec![n as u64, n as u64], est.values.clone())?)?;
    let mut artifacts = vec![path];
    if pgm {
        let p = out.join("x_hat.pgm");
        render_pgm(&est.values, n, n, &p)?;
        artifacts.push(p);
    }
    let mut table = None;
    if let Some(r) = reference {
        let (dims, x) = read_real(r)?;
        if dims != [n as u64, n as u64] {
            return Err(config_error(format!("reference dims {dims:?} do not match the grid")));
        }
        let fitted = recon_snr(&est.values, &x)?;
        let plain = plain_snr(&est.values, &x)?;
        println!("scale-optimal SNR: {fitted:.2} dB");
        println!("plain SNR: {plain:.2} dB");
        table = Some(BTreeMap::from([
            ("scale_optimal_snr_db".to_string(), fitted),
            ("plain_snr_db".to_string(), plain),
        ]));
    }
    Ok(CommandResult {
        exit_code: EXIT_OK,
        artifacts,
        metrics: table,
    })
}

fn parse_split(s: &str) -> Result<Split, CliError> {
    match s {
        "train" => Ok(Split::Train),
        "val" => Ok(Split::Val),
        "test" => Ok(Split::Test),
        other => Err(config_error(format!("unknown split {other:?}; use train, val or test"))),
    }
}

fn reconstruct_dataset(dir: &Path, split: &str, tau: Tau, iters: usize, csv: Option<&Path>) -> CliResult {
    let split = parse_split(split)?;
    let manifest = verify_dataset(dir)?;
    let cfg = &manifest.config;
    let mut rows = Vec::new();
    for j in 0..cfg.sweep.len() {
        let value = cfg.sweep.value(j);
        let samples: Vec<_> = manifest
            .included()
            .filter(|s| s.split == split && s.sweep_value == value)
            .collect();
        if samples.is_empty() {
            continue;
        }
        let scene = cfg.scene_for(j)?.build()?;
        let model = ForwardModel::new(&scene)?;
        let tau = tau.resolve(&model)?;
        let mut snrs = Vec::new();
        for s in samples {
            let y_path = dir.join(s.y_path.as_deref().expect("included samples have paths"));
            let x_path = dir.join(s.x_path.as_deref().expect("included samples have paths"));
            let ms = load_measurements(&y_path, &scene)?;
            let (_, x) = read_real(&x_path)?;
            let est = born_reconstruct(&ms, &model, tau, iters)?;
            snrs.push(recon_snr(&est.values, &x)?);
        }
        let count = snrs.len() as f64;
        let mean = snrs.iter().sum::<f64>() / count;
        let std = (snrs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / count).sqrt();
        println!("{} {value}: mean {mean:.2} dB, std {std:.2} dB, n {}", manifest.sweep_axis, snrs.len());
        rows.push((value, mean, std, snrs.len()));
    }
    if rows.is_empty() {
        return Err(config_error(format!("no included samples in split {}", split.name())));
    }
    let mut artifacts = Vec::new();
    if let Some(path) = csv {
        let mut text = String::from("sweep_value,mean_snr_db,std_snr_db,n\n");
        for (v, m, s, n) in &rows {
            text.push_str(&format!("{v},{m:.4},{s:.4},{n}\n"));
        }
        atomic_write(path, text.as_bytes())?;
        artifacts.push(path.to_path_buf());
    }
    Ok(CommandResult {
        exit_code: EXIT_OK,
        artifacts,
        metrics: None,
    })
}

fn preset(name: Option<&str>, list: bool) -> CliResult {
    if list {
        for p in PRESETS {
            println!("{p}");
        }
        for p in ["scene-desk", "scene-full", "scene-cylinder"] {
            println!("{p}");
        }
        return Ok(CommandResult::default());
    }
    let name = name.ok_or_else(|| config_error("preset name required"))?;
    let value = match name {
        "scene-desk" => serde_json::to_value(SceneConfig::desk(40)),
        "scene-full" => serde_json::to_value(SceneConfig::full(40)),
        "scene-cylinder" => serde_json::to_value(CylinderPreset::default().scene(64)),
        other => serde_json::to_value(ExperimentConfig::preset(other)?),
    }
    .map_err(Error::from)?;
    println!("{}", serde_json::to_string_pretty(&value).map_err(Error::from)?);
    Ok(CommandResult::default())
}
