//! Config-driven experiment runner behind the `wfh` binary.
//!
//! Every command reads a JSON [`ExperimentConfig`] and writes its artifacts to
//! the configured output directory. Artifacts are byte-identical across reruns
//! with the same seed and any thread count; wall-clock timings are only
//! written when requested, to `timings.json`.

use std::f64::consts::FRAC_PI_2;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::holography::{
    apply_object, difference_image, holography_pipeline, min_distance_chirp, min_distance_exact, ObjectMask,
    PipelineReport, PropagationParams,
};
use crate::io::{write_field, write_json, write_pgm, GrayImage};
use crate::metrics::{amplitude_rmse, bright_mask, fidelity_masked, phase_rmse};
use crate::pointer::write_count_records;
use crate::reconstruction::{gauge_fix, GaugeInfo, NoiseMode, NoiseModel, ReconstructionPlan, Scheme};
use crate::validate::{run_all, SuiteResult, ValidateOptions};
use crate::wavefield::{make_mode, Domain, Grid2D, ModeKind, ModeSpec, Pixel, WaveField};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const CONFIG_SCHEMA: u32 = 1;
pub const OUTPUT_DIR_ENV: &str = "WFH_OUTPUT_DIR";

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_POSTSELECTION: i32 = 3;
pub const EXIT_SAMPLING: i32 = 4;

/// Process exit code for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config { .. } | Error::Json(_) => EXIT_CONFIG,
        Error::DivergentPostSelection | Error::AllInvalid => EXIT_POSTSELECTION,
        Error::Undersampled { .. } => EXIT_SAMPLING,
        _ => EXIT_VALIDATION,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub nx: usize,
    pub ny: usize,
    pub dx: f64,
    pub dy: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub mode: NoiseMode,
    #[serde(default)]
    pub photons_per_setting: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            mode: NoiseMode::Exact,
            photons_per_setting: 0,
        }
    }
}

fn default_scheme() -> Scheme {
    Scheme::StrongScan
}

fn default_theta() -> f64 {
    FRAC_PI_2
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema: u32,
    pub grid: GridConfig,
    pub mode: ModeSpec,
    #[serde(default = "default_scheme")]
    pub scheme: Scheme,
    /// Coupling angle; only used by the weak scan.
    #[serde(default = "default_theta")]
    pub theta: f64,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub propagation: PropagationParams,
    /// 8-bit PGM amplitude mask.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask_path: Option<PathBuf>,
    /// Optional 8-bit PGM phase mask.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase_mask_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub master_seed: u64,
}

/// A validated config with relative paths resolved.
#[derive(Clone, Debug)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub grid: Grid2D,
    pub output_dir: PathBuf,
    /// SHA-256 of the config as written (after any seed override), excluding the output directory.
    pub config_hash: String,
    base_dir: PathBuf,
}

fn config_err(path: &str, msg: impl std::fmt::Display) -> Error {
    Error::Config {
        path: path.to_string(),
        msg: msg.to_string(),
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl Experiment {
    pub fn load(path: impl AsRef<Path>, seed: Option<u64>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| config_err("<file>", format!("{}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let env_dir = std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from);
        Self::from_json(&text, &base, seed, env_dir)
    }

    /// Parses and validates a config. Relative paths resolve against `base_dir`;
    /// `env_output_dir` is used when the config has no `output_dir`.
    pub fn from_json(text: &str, base_dir: &Path, seed: Option<u64>, env_output_dir: Option<PathBuf>) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let mut config: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            config_err(&path, e.into_inner())
        })?;
        if let Some(s) = seed {
            config.master_seed = s;
        }
        let mut hashed = config.clone();
        hashed.output_dir = None;
        let config_hash = hex::encode(Sha256::digest(serde_json::to_vec(&hashed)?));
        if config.schema != CONFIG_SCHEMA {
            return Err(config_err(
                "schema",
                format!("unsupported schema {}, expected {CONFIG_SCHEMA}", config.schema),
            ));
        }
        let gc = config.grid;
        let grid = Grid2D::new(gc.nx, gc.ny, gc.dx, gc.dy).map_err(|e| config_err("grid", e))?;

        if let Some(p) = &config.mode.path {
            let resolved = resolve(base_dir, p);
            config.mode.path = Some(resolved);
        }
        if config.mode.kind == ModeKind::CustomFile && config.mode.path.is_none() {
            return Err(config_err("mode.path", "custom_file mode needs a path"));
        }
        make_mode(&grid, &config.mode).map_err(|e| config_err("mode", e))?;

        if config.scheme == Scheme::WeakScan && !(config.theta > 0.0 && config.theta <= FRAC_PI_2) {
            return Err(config_err("theta", format!("{} is outside (0, pi/2]", config.theta)));
        }
        if config.noise.mode == NoiseMode::ShotNoise && config.noise.photons_per_setting == 0 {
            return Err(config_err(
                "noise.photons_per_setting",
                "shot noise needs at least one photon per setting",
            ));
        }
        config
            .propagation
            .validate()
            .map_err(|e| config_err("propagation", e))?;
        for (key, slot) in [
            ("mask_path", &mut config.mask_path),
            ("phase_mask_path", &mut config.phase_mask_path),
        ] {
            if let Some(p) = slot {
                let resolved = resolve(base_dir, p);
                if !resolved.is_file() {
                    return Err(config_err(key, format!("{} does not exist", resolved.display())));
                }
                *slot = Some(resolved);
            }
        }
        if config.phase_mask_path.is_some() && config.mask_path.is_none() {
            return Err(config_err("phase_mask_path", "requires mask_path"));
        }

        let output_dir = match (&config.output_dir, env_output_dir) {
            (Some(p), _) => resolve(base_dir, p),
            (None, Some(p)) => p,
            (None, None) => {
                return Err(config_err(
                    "output_dir",
                    format!("not set and {OUTPUT_DIR_ENV} is unset"),
                ));
            }
        };
        fs::create_dir_all(&output_dir)
            .map_err(|e| config_err("output_dir", format!("{}: {e}", output_dir.display())))?;

        Ok(Self {
            config,
            grid,
            output_dir,
            config_hash,
            base_dir: base_dir.to_path_buf(),
        })
    }

    pub fn noise(&self) -> NoiseModel {
        NoiseModel {
            mode: self.config.noise.mode,
            photons_per_setting: self.config.noise.photons_per_setting,
            master_seed: self.config.master_seed,
        }
    }

    pub fn base_dir(&self) -> &Path {
        &self.base_dir
    }

    pub fn mask(&self) -> Result<Option<ObjectMask>> {
        match &self.config.mask_path {
            None => Ok(None),
            Some(p) => ObjectMask::load(self.grid, p, self.config.phase_mask_path.as_deref())
                .map(Some)
                .map_err(|e| config_err("mask_path", e)),
        }
    }

    fn out(&self, name: &str) -> PathBuf {
        self.output_dir.join(name)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Write wall-clock timings to `timings.json`.
    pub timings: bool,
    /// Flip the circular-polarization readout sign (mutation checks).
    pub flip_sigma_r: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricsReport {
    pub tool_version: String,
    pub config_hash: String,
    pub scheme: Scheme,
    pub theta: f64,
    pub master_seed: u64,
    /// Fidelity against the prepared mode over valid pixels.
    pub fidelity: f64,
    /// Over bright valid pixels.
    pub amplitude_rmse: f64,
    /// Over bright valid pixels, after removing the best global phase.
    pub phase_rmse: f64,
    pub valid_fraction: f64,
    pub postselect_success_mean: f64,
    pub settings_per_pixel: usize,
    pub postselect_bin: Pixel,
    pub detected_photons: u64,
    pub input_photons: f64,
    pub gauge: GaugeInfo,
    #[serde(skip)]
    pub wall_time: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HolographyReport {
    pub tool_version: String,
    pub config_hash: String,
    pub master_seed: u64,
    pub min_distance_exact: f64,
    pub min_distance_paraxial: f64,
    #[serde(flatten)]
    pub pipeline: PipelineReport,
}

#[derive(Serialize)]
struct Timings<'a> {
    command: &'a str,
    wall_time: f64,
    stages: Vec<(String, f64)>,
}

fn write_timings(
    exp: &Experiment,
    opts: RunOptions,
    command: &str,
    wall_time: f64,
    stages: Vec<(String, f64)>,
) -> Result<()> {
    log::info!("{command} finished in {wall_time:.3} s");
    if opts.timings {
        write_json(
            exp.out("timings.json"),
            &Timings {
                command,
                wall_time,
                stages,
            },
        )?;
    }
    Ok(())
}

fn mask_image(grid: &Grid2D, mask: &[bool]) -> GrayImage {
    GrayImage {
        width: grid.nx(),
        height: grid.ny(),
        pixels: mask.iter().map(|&m| if m { 255 } else { 0 }).collect(),
    }
}

/// Writes `input.wfh1` and, with a mask, `object_truth.wfh1`.
pub fn cmd_prepare(exp: &Experiment, opts: RunOptions) -> Result<Vec<PathBuf>> {
    let start = Instant::now();
    let input = make_mode(&exp.grid, &exp.config.mode)?;
    let mut written = vec![exp.out("input.wfh1")];
    write_field(&written[0], &input)?;
    if let Some(mask) = exp.mask()? {
        let (truth, _) = apply_object(&input, &mask)?;
        let p = exp.out("object_truth.wfh1");
        write_field(&p, &truth)?;
        written.push(p);
    }
    write_timings(exp, opts, "prepare", start.elapsed().as_secs_f64(), Vec::new())?;
    Ok(written)
}

/// Runs the configured scheme on the prepared mode.
pub fn cmd_reconstruct(exp: &Experiment, opts: RunOptions) -> Result<MetricsReport> {
    let start = Instant::now();
    let cfg = &exp.config;
    let truth = make_mode(&exp.grid, &cfg.mode)?;
    let mut plan = ReconstructionPlan::new(&truth, cfg.scheme, cfg.theta, exp.noise())?;
    if opts.flip_sigma_r {
        plan = plan.with_sigma_y_sign_flipped();
    }
    let map = plan.run()?;
    let (field, gauge) = gauge_fix(&map)?;

    let bright: Vec<bool> = bright_mask(&truth, 0.05)
        .iter()
        .zip(&map.valid)
        .map(|(b, v)| *b && *v)
        .collect();
    let report = MetricsReport {
        tool_version: TOOL_VERSION.to_string(),
        config_hash: exp.config_hash.clone(),
        scheme: map.scheme,
        theta: map.theta,
        master_seed: cfg.master_seed,
        fidelity: fidelity_masked(&field, &truth, &map.valid)?,
        amplitude_rmse: amplitude_rmse(&field, &truth, &bright)?,
        phase_rmse: phase_rmse(&field, &truth, &bright)?,
        valid_fraction: map.valid_fraction(),
        postselect_success_mean: map.success_mean(),
        settings_per_pixel: map.scheme.settings_per_pixel(),
        postselect_bin: map.postselect_bin,
        detected_photons: map.detected_photons(),
        input_photons: map.input_photons(),
        gauge,
        wall_time: start.elapsed().as_secs_f64(),
    };

    let values = WaveField::new(exp.grid, map.values_field().into_amplitudes(), Domain::Position)?;
    write_field(exp.out("weak_values.wfh1"), &values)?;
    write_json(exp.out("weak_values.json"), &map.sidecar())?;
    write_pgm(exp.out("valid_mask.pgm"), &mask_image(&exp.grid, &map.valid))?;
    write_field(exp.out("reconstructed.wfh1"), &field)?;
    if !map.counts.is_empty() {
        write_count_records(exp.out("counts.csv"), &map.counts)?;
    }
    write_json(exp.out("report.json"), &report)?;
    write_timings(exp, opts, "reconstruct", report.wall_time, Vec::new())?;
    Ok(report)
}

/// Runs the imaging pipeline with the configured mask.
pub fn cmd_holography(exp: &Experiment, opts: RunOptions) -> Result<HolographyReport> {
    let start = Instant::now();
    let cfg = &exp.config;
    let mask = exp
        .mask()?
        .ok_or_else(|| config_err("mask_path", "holography needs a mask"))?;
    let out = holography_pipeline(
        &exp.grid,
        &cfg.mode,
        &mask,
        &cfg.propagation,
        cfg.scheme,
        cfg.theta,
        exp.noise(),
    )?;
    write_field(exp.out("object_truth.wfh1"), &out.truth)?;
    write_field(exp.out("object_reconstructed.wfh1"), &out.reconstructed)?;
    write_field(exp.out("hologram_reconstructed.wfh1"), &out.hologram_reconstructed)?;
    write_pgm(
        exp.out("difference.pgm"),
        &difference_image(&out.reconstructed, &out.truth)?,
    )?;
    let timings = out.report.timings.clone();
    let report = HolographyReport {
        tool_version: TOOL_VERSION.to_string(),
        config_hash: exp.config_hash.clone(),
        master_seed: cfg.master_seed,
        min_distance_exact: min_distance_exact(&exp.grid, cfg.propagation.wavelength),
        min_distance_paraxial: min_distance_chirp(&exp.grid, cfg.propagation.wavelength),
        pipeline: out.report,
    };
    write_json(exp.out("holography_report.json"), &report)?;
    write_timings(exp, opts, "holography", start.elapsed().as_secs_f64(), timings)?;
    Ok(report)
}

/// Runs every invariant suite.
pub fn cmd_validate(opts: RunOptions) -> Vec<SuiteResult> {
    run_all(ValidateOptions {
        flip_sigma_r: opts.flip_sigma_r,
    })
}
