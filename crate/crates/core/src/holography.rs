//! Object masks, free-space propagation between the object and hologram
//! planes, the classical two-beam hologram, and the end-to-end imaging
//! pipeline in which the hologram-plane field is measured directly by weak
//! value reconstruction instead of interference with a reference wave.
//!
//! The measured plane is the hologram (detection) plane at distance `d` from
//! the object. Forward transport uses the spherical-wave kernel
//! `K = exp(ikR) / (i lambda R)`; the inverse uses the quadratic-phase kernel
//! `L = exp(-ikd) / (-i lambda d) * exp(-ik r^2 / 2d)`. Both are evaluated as
//! zero-padded FFT convolutions and both reject distances at which the kernel
//! phase would alias between adjacent samples.

use std::f64::consts::PI;
use std::path::Path;
use std::time::Instant;

use num_complex::Complex64;
use rustfft::FftDirection;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::{convolve_same, fft2_inplace, padded_len};
use crate::io::{read_pgm, GrayImage};
use crate::metrics::{amplitude_rmse, bright_mask, fidelity_masked, phase_rmse};
use crate::reconstruction::{gauge_fix, reconstruct, NoiseModel, Scheme};
use crate::wavefield::{fidelity, make_mode, Domain, Grid2D, ModeSpec, Pixel, WaveField};

/// Bright-pixel threshold for amplitude and phase metrics, relative to peak amplitude.
pub const BRIGHT_FRACTION: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kernel {
    ExactFeynman,
    ParaxialInverse,
    AngularSpectrum,
}

impl Kernel {
    pub fn as_str(&self) -> &'static str {
        match self {
            Kernel::ExactFeynman => "exact_feynman",
            Kernel::ParaxialInverse => "paraxial_inverse",
            Kernel::AngularSpectrum => "angular_spectrum",
        }
    }
}

fn default_padding() -> usize {
    2
}

fn default_kernel() -> Kernel {
    Kernel::ExactFeynman
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PropagationParams {
    /// Meters.
    pub wavelength: f64,
    /// Meters.
    pub distance: f64,
    /// Forward kernel. The inverse always uses the paraxial kernel.
    #[serde(default = "default_kernel")]
    pub kernel: Kernel,
    /// Zero-padding factor of the FFT convolution (at least 2).
    #[serde(default = "default_padding")]
    pub padding: usize,
}

impl Default for PropagationParams {
    fn default() -> Self {
        Self {
            wavelength: 633e-9,
            distance: 0.1,
            kernel: Kernel::ExactFeynman,
            padding: 2,
        }
    }
}

impl PropagationParams {
    pub fn new(wavelength: f64, distance: f64) -> Result<Self> {
        let p = Self {
            wavelength,
            distance,
            ..Self::default()
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_kernel(mut self, kernel: Kernel) -> Self {
        self.kernel = kernel;
        self
    }

    pub fn with_distance(mut self, distance: f64) -> Self {
        self.distance = distance;
        self
    }

    pub fn wavenumber(&self) -> f64 {
        2.0 * PI / self.wavelength
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.wavelength > 0.0 && self.wavelength.is_finite()) {
            return Err(Error::InvalidPropagation(format!(
                "wavelength must be positive, got {}",
                self.wavelength
            )));
        }
        if !(self.distance > 0.0 && self.distance.is_finite()) {
            return Err(Error::InvalidPropagation(format!(
                "distance must be positive, got {}",
                self.distance
            )));
        }
        if self.padding < 2 {
            return Err(Error::InvalidPropagation(format!(
                "padding must be at least 2, got {}",
                self.padding
            )));
        }
        Ok(())
    }
}

fn max_offsets(grid: &Grid2D) -> [(f64, f64); 2] {
    [
        ((grid.nx() - 1) as f64 * grid.dx(), grid.dx()),
        ((grid.ny() - 1) as f64 * grid.dy(), grid.dy()),
    ]
}

/// Smallest distance at which `exp(ikR)` changes by less than pi between
/// adjacent samples over every offset the convolution uses.
pub fn min_distance_exact(grid: &Grid2D, wavelength: f64) -> f64 {
    let k = 2.0 * PI / wavelength;
    max_offsets(grid)
        .iter()
        .map(|&(span, step)| {
            // phase slope k * span / R is largest at the widest offset
            let ratio = k * step / PI;
            if ratio <= 1.0 {
                0.0
            } else {
                span * (ratio * ratio - 1.0).sqrt()
            }
        })
        .fold(0.0, f64::max)
}

/// Smallest distance at which the quadratic phase `k r^2 / 2d` changes by
/// less than pi between adjacent samples.
pub fn min_distance_chirp(grid: &Grid2D, wavelength: f64) -> f64 {
    let k = 2.0 * PI / wavelength;
    max_offsets(grid)
        .iter()
        .map(|&(span, step)| k * span * step / PI)
        .fold(0.0, f64::max)
}

fn check_sampling(kernel: Kernel, distance: f64, min_distance: f64) -> Result<()> {
    if distance <= min_distance {
        return Err(Error::Undersampled {
            kernel: kernel.as_str(),
            distance,
            min_distance,
        });
    }
    Ok(())
}

fn warn_if_not_paraxial(grid: &Grid2D, distance: f64) {
    let (hx, hy) = grid.half_extent();
    if distance < 10.0 * hx.max(hy) {
        log::warn!(
            "d = {distance:e} m is below 10x the grid half-width ({:e} m); paraxial inversion may be inaccurate",
            hx.max(hy)
        );
    }
}

/// Forward transport over `params.distance` with the configured kernel.
pub fn propagate(field: &WaveField, params: &PropagationParams) -> Result<WaveField> {
    match params.kernel {
        Kernel::ExactFeynman => propagate_exact(field, params),
        Kernel::AngularSpectrum => propagate_angular_spectrum(field, params),
        Kernel::ParaxialInverse => Err(Error::InvalidPropagation(
            "paraxial_inverse is only available as the inverse transform".into(),
        )),
    }
}

/// Convolution with the spherical-wave kernel sampled at grid offsets.
pub fn propagate_exact(field: &WaveField, params: &PropagationParams) -> Result<WaveField> {
    field.require(Domain::Position)?;
    params.validate()?;
    let g = *field.grid();
    check_sampling(
        Kernel::ExactFeynman,
        params.distance,
        min_distance_exact(&g, params.wavelength),
    )?;
    let (k, d, lambda) = (params.wavenumber(), params.distance, params.wavelength);
    let weight = g.dx() * g.dy();
    // 1 / (i lambda) = -i / lambda
    let pre = Complex64::new(0.0, -weight / lambda);
    let out = convolve_same(field.amplitudes(), g.nx(), g.ny(), params.padding, |ox, oy| {
        let (x, y) = (ox as f64 * g.dx(), oy as f64 * g.dy());
        let r = (x * x + y * y + d * d).sqrt();
        pre * Complex64::from_polar(1.0 / r, k * r)
    });
    WaveField::new(g, out, Domain::Position)
}

/// Convolution with the quadratic-phase inverse kernel. The result is not
/// renormalized; see [`invert_normalized`].
pub fn propagate_inverse_paraxial(field: &WaveField, params: &PropagationParams) -> Result<WaveField> {
    field.require(Domain::Position)?;
    params.validate()?;
    let g = *field.grid();
    check_sampling(
        Kernel::ParaxialInverse,
        params.distance,
        min_distance_chirp(&g, params.wavelength),
    )?;
    warn_if_not_paraxial(&g, params.distance);
    let (k, d, lambda) = (params.wavenumber(), params.distance, params.wavelength);
    let weight = g.dx() * g.dy();
    // exp(-ikd) / (-i lambda d) = i exp(-ikd) / (lambda d)
    let pre = Complex64::i() * Complex64::from_polar(weight / (lambda * d), -k * d);
    let out = convolve_same(field.amplitudes(), g.nx(), g.ny(), params.padding, |ox, oy| {
        let (x, y) = (ox as f64 * g.dx(), oy as f64 * g.dy());
        pre * Complex64::from_polar(1.0, -k * (x * x + y * y) / (2.0 * d))
    });
    WaveField::new(g, out, Domain::Position)
}

/// Inverse transport followed by renormalization. Returns the field and the
/// scale factor that was applied.
pub fn invert_normalized(field: &WaveField, params: &PropagationParams) -> Result<(WaveField, f64)> {
    let raw = propagate_inverse_paraxial(field, params)?;
    let norm = raw.norm();
    if norm == 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok((raw.scaled(Complex64::new(1.0 / norm, 0.0)), 1.0 / norm))
}

/// Band-limited angular-spectrum transport on a zero-padded grid;
/// evanescent components are dropped.
pub fn propagate_angular_spectrum(field: &WaveField, params: &PropagationParams) -> Result<WaveField> {
    field.require(Domain::Position)?;
    params.validate()?;
    let g = *field.grid();
    let (nx, ny) = (g.nx(), g.ny());
    let mx = padded_len(nx, params.padding);
    let my = padded_len(ny, params.padding);
    let zero = Complex64::new(0.0, 0.0);
    // centre the field in the padded window so the crop is symmetric
    let (ox, oy) = ((mx - nx) / 2, (my - ny) / 2);
    let mut buf = vec![zero; mx * my];
    for iy in 0..ny {
        let row = (iy + oy) * mx + ox;
        buf[row..row + nx].copy_from_slice(&field.amplitudes()[iy * nx..(iy + 1) * nx]);
    }
    fft2_inplace(&mut buf, mx, my, FftDirection::Forward);
    let k = params.wavenumber();
    let freq = |i: usize, m: usize, step: f64| {
        let s = if i < m.div_ceil(2) {
            i as f64
        } else {
            i as f64 - m as f64
        };
        2.0 * PI * s / (m as f64 * step)
    };
    for v in 0..my {
        let ky = freq(v, my, g.dy());
        for u in 0..mx {
            let kx = freq(u, mx, g.dx());
            let kz2 = k * k - kx * kx - ky * ky;
            let h = if kz2 > 0.0 {
                Complex64::from_polar(1.0, params.distance * kz2.sqrt())
            } else {
                zero
            };
            buf[v * mx + u] *= h;
        }
    }
    fft2_inplace(&mut buf, mx, my, FftDirection::Inverse);
    let scale = 1.0 / (mx * my) as f64;
    let mut out = Vec::with_capacity(nx * ny);
    for iy in 0..ny {
        let row = (iy + oy) * mx + ox;
        out.extend(buf[row..row + nx].iter().map(|a| a * scale));
    }
    WaveField::new(g, out, Domain::Position)
}

/// Beam diameter `2 sqrt(<x^2>)` along x about the intensity centroid.
pub fn second_moment_width(field: &WaveField) -> f64 {
    let g = field.grid();
    let total = field.norm_sqr();
    let (mut mean, mut sq) = (0.0, 0.0);
    for (i, a) in field.amplitudes().iter().enumerate() {
        let x = g.x(g.pixel(i).0);
        mean += x * a.norm_sqr();
        sq += x * x * a.norm_sqr();
    }
    mean /= total;
    2.0 * (sq / total - mean * mean).sqrt()
}

/// Analytic Gaussian beam diameter `w0 sqrt(1 + (d / z_R)^2)`.
pub fn gaussian_beam_width(w0: f64, wavelength: f64, distance: f64) -> f64 {
    let z_r = PI * w0 * w0 / wavelength;
    w0 * (1.0 + (distance / z_r).powi(2)).sqrt()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ObjectMask {
    grid: Grid2D,
    transmission: Vec<Complex64>,
}

impl ObjectMask {
    pub fn new(grid: Grid2D, transmission: Vec<Complex64>) -> Result<Self> {
        if transmission.len() != grid.len() {
            return Err(Error::Dimension(format!(
                "mask has {} samples, grid {grid} needs {}",
                transmission.len(),
                grid.len()
            )));
        }
        if let Some(t) = transmission
            .iter()
            .find(|t| t.norm().is_nan() || t.norm() > 1.0 + 1e-12)
        {
            return Err(Error::InvalidMode(format!(
                "mask transmission |t| = {} exceeds 1",
                t.norm()
            )));
        }
        Ok(Self { grid, transmission })
    }

    pub fn transparent(grid: Grid2D) -> Self {
        Self {
            grid,
            transmission: vec![Complex64::new(1.0, 0.0); grid.len()],
        }
    }

    pub fn from_amplitude(grid: Grid2D, amplitude: &[f64]) -> Result<Self> {
        Self::new(grid, amplitude.iter().map(|&a| Complex64::new(a, 0.0)).collect())
    }

    /// Amplitude from an 8-bit image (`v / 255`), optional phase image mapped
    /// linearly onto `(-pi, pi]`.
    pub fn from_images(grid: Grid2D, amplitude: &GrayImage, phase: Option<&GrayImage>) -> Result<Self> {
        let check = |img: &GrayImage| {
            if img.width != grid.nx() || img.height != grid.ny() {
                Err(Error::GridMismatch {
                    left: format!("{}x{} image", img.width, img.height),
                    right: grid.to_string(),
                })
            } else {
                Ok(())
            }
        };
        check(amplitude)?;
        if let Some(p) = phase {
            check(p)?;
        }
        let t = (0..grid.len())
            .map(|i| {
                let a = f64::from(amplitude.pixels[i]) / 255.0;
                let phi = phase.map_or(0.0, |p| -PI + 2.0 * PI * (f64::from(p.pixels[i]) + 1.0) / 256.0);
                Complex64::from_polar(a, phi)
            })
            .collect();
        Self::new(grid, t)
    }

    pub fn load(grid: Grid2D, amplitude: impl AsRef<Path>, phase: Option<&Path>) -> Result<Self> {
        let amp = read_pgm(amplitude)?;
        let phase = phase.map(read_pgm).transpose()?;
        Self::from_images(grid, &amp, phase.as_ref())
    }

    /// Binary cat silhouette (head, ears, body, tail) filling roughly the
    /// central `scale` fraction of the grid.
    pub fn cat_silhouette(grid: Grid2D, scale: f64) -> Self {
        let (nx, ny) = (grid.nx() as f64, grid.ny() as f64);
        let r = 0.5 * scale * nx.min(ny);
        let amp = (0..grid.len())
            .map(|i| {
                let (ix, iy) = grid.pixel(i);
                // unit coordinates, y pointing down
                let u = (ix as f64 + 0.5 - nx / 2.0) / r;
                let v = (iy as f64 + 0.5 - ny / 2.0) / r;
                if cat_contains(u, v) {
                    1.0
                } else {
                    0.0
                }
            })
            .collect::<Vec<_>>();
        Self::from_amplitude(grid, &amp).expect("binary mask is valid")
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn transmission(&self) -> &[Complex64] {
        &self.transmission
    }

    /// Amplitude as an 8-bit image.
    pub fn amplitude_image(&self) -> GrayImage {
        GrayImage {
            width: self.grid.nx(),
            height: self.grid.ny(),
            pixels: self
                .transmission
                .iter()
                .map(|t| (t.norm() * 255.0).round().min(255.0) as u8)
                .collect(),
        }
    }
}

fn cat_contains(u: f64, v: f64) -> bool {
    let in_ellipse = |cx: f64, cy: f64, rx: f64, ry: f64| ((u - cx) / rx).powi(2) + ((v - cy) / ry).powi(2) <= 1.0;
    let in_triangle = |a: (f64, f64), b: (f64, f64), c: (f64, f64)| {
        let side = |p: (f64, f64), q: (f64, f64)| (q.0 - p.0) * (v - p.1) - (q.1 - p.1) * (u - p.0);
        let (s1, s2, s3) = (side(a, b), side(b, c), side(c, a));
        (s1 >= 0.0 && s2 >= 0.0 && s3 >= 0.0) || (s1 <= 0.0 && s2 <= 0.0 && s3 <= 0.0)
    };
    let head = in_ellipse(-0.25, -0.45, 0.32, 0.28);
    let left_ear = in_triangle((-0.55, -0.55), (-0.5, -0.95), (-0.3, -0.68));
    let right_ear = in_triangle((0.05, -0.55), (0.0, -0.95), (-0.2, -0.68));
    let body = in_ellipse(0.1, 0.3, 0.55, 0.42);
    let tail = in_ellipse(0.72, 0.05, 0.1, 0.45) && v < 0.55;
    head || left_ear || right_ear || body || tail
}

/// Pointwise transmission `t * psi`, renormalized. Returns the field and the
/// transmitted power fraction before renormalization.
pub fn apply_object(field: &WaveField, mask: &ObjectMask) -> Result<(WaveField, f64)> {
    field.require(Domain::Position)?;
    if !field.grid().same_shape(mask.grid()) {
        return Err(Error::GridMismatch {
            left: field.grid().to_string(),
            right: mask.grid().to_string(),
        });
    }
    let before = field.norm_sqr();
    if before == 0.0 {
        return Err(Error::ZeroNorm);
    }
    let amps: Vec<Complex64> = field
        .amplitudes()
        .iter()
        .zip(mask.transmission())
        .map(|(a, t)| a * t)
        .collect();
    let out = WaveField::new(*field.grid(), amps, Domain::Position)?;
    let power = out.norm_sqr() / before;
    if power == 0.0 {
        return Err(Error::OpaqueMask);
    }
    Ok((out.normalized()?, power))
}

#[derive(Clone, Debug, PartialEq)]
pub struct HologramIntensity {
    pub grid: Grid2D,
    /// `|O + R|^2`.
    pub intensity: Vec<f64>,
    /// `|O|^2`.
    pub object_background: Vec<f64>,
    /// `|R|^2`.
    pub reference_background: Vec<f64>,
    /// `O R*`.
    pub cross_term: Vec<Complex64>,
    /// `O* R`.
    pub conjugate_term: Vec<Complex64>,
}

impl HologramIntensity {
    /// Sum of the four terms at each pixel.
    pub fn term_sum(&self) -> Vec<f64> {
        (0..self.intensity.len())
            .map(|i| {
                self.object_background[i]
                    + self.reference_background[i]
                    + (self.cross_term[i] + self.conjugate_term[i]).re
            })
            .collect()
    }
}

/// Two-beam hologram `|O + R|^2` and its decomposition.
pub fn classical_hologram(object: &WaveField, reference: &WaveField) -> Result<HologramIntensity> {
    object.require_compatible(reference)?;
    let pairs = object.amplitudes().iter().zip(reference.amplitudes());
    Ok(HologramIntensity {
        grid: *object.grid(),
        intensity: pairs.clone().map(|(o, r)| (o + r).norm_sqr()).collect(),
        object_background: object.amplitudes().iter().map(|o| o.norm_sqr()).collect(),
        reference_background: reference.amplitudes().iter().map(|r| r.norm_sqr()).collect(),
        cross_term: pairs.clone().map(|(o, r)| o * r.conj()).collect(),
        conjugate_term: pairs.map(|(o, r)| o.conj() * r).collect(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageStatus {
    pub stage: String,
    pub status: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhotonBudget {
    pub settings_per_pixel: usize,
    pub photons_per_setting: u64,
    /// Post-selected photons over all valid pixels.
    pub detected_photons: u64,
    /// Photons sent in to obtain the detected ones.
    pub input_photons: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuccessStats {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub scheme: Scheme,
    pub wavelength: f64,
    pub distance: f64,
    /// Object-plane fidelity against the ground truth over the whole grid.
    pub fidelity: f64,
    /// Fidelity restricted to bright pixels.
    pub fidelity_bright: f64,
    pub amplitude_rmse: f64,
    pub phase_rmse: f64,
    pub bright_fraction: f64,
    /// Fidelity of the reconstructed hologram-plane field against the propagated truth.
    pub hologram_fidelity: f64,
    pub transmitted_power: f64,
    /// Scale applied to the inverse transform output to restore unit norm.
    pub inverse_scale: f64,
    pub valid_fraction: f64,
    pub postselect_bin: Pixel,
    pub photon_budget: PhotonBudget,
    pub postselect_success: SuccessStats,
    pub stages: Vec<StageStatus>,
    /// Wall-clock seconds per stage; excluded from serialization so reports stay reproducible.
    #[serde(skip)]
    pub timings: Vec<(String, f64)>,
}

#[derive(Clone, Debug)]
pub struct PipelineOutput {
    pub report: PipelineReport,
    pub input: WaveField,
    /// Ground-truth object-plane field.
    pub truth: WaveField,
    /// True hologram-plane field.
    pub hologram: WaveField,
    /// Gauge-fixed reconstruction in the hologram plane.
    pub hologram_reconstructed: WaveField,
    /// Reconstruction transported back to the object plane.
    pub reconstructed: WaveField,
}

struct Stages {
    statuses: Vec<StageStatus>,
    timings: Vec<(String, f64)>,
}

impl Stages {
    fn run<T>(&mut self, name: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let out = f();
        self.timings.push((name.to_string(), start.elapsed().as_secs_f64()));
        self.statuses.push(StageStatus {
            stage: name.to_string(),
            status: match &out {
                Ok(_) => "ok".to_string(),
                Err(e) => format!("error: {e}"),
            },
        });
        if let Err(e) = &out {
            log::error!("pipeline stage `{name}` failed: {e}");
        }
        out
    }
}

/// Illuminate, apply the object, propagate to the hologram plane, reconstruct
/// the hologram-plane field from pointer readouts, and transport it back.
pub fn holography_pipeline(
    grid: &Grid2D,
    input_mode: &ModeSpec,
    mask: &ObjectMask,
    prop: &PropagationParams,
    scheme: Scheme,
    theta: f64,
    noise: NoiseModel,
) -> Result<PipelineOutput> {
    let mut st = Stages {
        statuses: Vec::new(),
        timings: Vec::new(),
    };
    let input = st.run("prepare", || make_mode(grid, input_mode))?;
    run_pipeline(st, input, mask, prop, scheme, theta, noise)
}

/// [`holography_pipeline`] with an explicit illumination field.
pub fn holography_pipeline_with_input(
    input: &WaveField,
    mask: &ObjectMask,
    prop: &PropagationParams,
    scheme: Scheme,
    theta: f64,
    noise: NoiseModel,
) -> Result<PipelineOutput> {
    let st = Stages {
        statuses: Vec::new(),
        timings: Vec::new(),
    };
    run_pipeline(st, input.clone(), mask, prop, scheme, theta, noise)
}

fn run_pipeline(
    mut st: Stages,
    input: WaveField,
    mask: &ObjectMask,
    prop: &PropagationParams,
    scheme: Scheme,
    theta: f64,
    noise: NoiseModel,
) -> Result<PipelineOutput> {
    let grid = *input.grid();
    st.run("sampling_guard", || {
        prop.validate()?;
        if prop.kernel == Kernel::ExactFeynman {
            check_sampling(
                Kernel::ExactFeynman,
                prop.distance,
                min_distance_exact(&grid, prop.wavelength),
            )?;
        }
        check_sampling(
            Kernel::ParaxialInverse,
            prop.distance,
            min_distance_chirp(&grid, prop.wavelength),
        )
    })?;
    let (truth, power) = st.run("object", || apply_object(&input, mask))?;
    let hologram = st.run("propagate", || propagate(&truth, prop))?;
    let map = st.run("reconstruct", || reconstruct(&hologram, scheme, theta, noise))?;
    let (rec_holo, _) = st.run("gauge_fix", || gauge_fix(&map))?;
    let (reconstructed, inverse_scale) = st.run("invert", || invert_normalized(&rec_holo, prop))?;
    let (mask_bright, scores) = st.run("metrics", || {
        let bright = bright_mask(&truth, BRIGHT_FRACTION);
        let scores = (
            fidelity(&reconstructed, &truth)?,
            fidelity_masked(&reconstructed, &truth, &bright)?,
            amplitude_rmse(&reconstructed, &truth, &bright)?,
            phase_rmse(&reconstructed, &truth, &bright)?,
            fidelity(&rec_holo, &hologram)?,
        );
        Ok((bright, scores))
    })?;
    let (fid, fid_bright, amp, phase, holo_fid) = scores;

    let valid_success: Vec<f64> = map
        .success
        .iter()
        .zip(&map.valid)
        .filter(|(_, &v)| v)
        .map(|(p, _)| *p)
        .collect();
    let report = PipelineReport {
        scheme,
        wavelength: prop.wavelength,
        distance: prop.distance,
        fidelity: fid,
        fidelity_bright: fid_bright,
        amplitude_rmse: amp,
        phase_rmse: phase,
        bright_fraction: mask_bright.iter().filter(|&&b| b).count() as f64 / grid.len() as f64,
        hologram_fidelity: holo_fid,
        transmitted_power: power,
        inverse_scale,
        valid_fraction: map.valid_fraction(),
        postselect_bin: map.postselect_bin,
        photon_budget: PhotonBudget {
            settings_per_pixel: scheme.settings_per_pixel(),
            photons_per_setting: noise.photons_per_setting,
            detected_photons: map.detected_photons(),
            input_photons: map.input_photons(),
        },
        postselect_success: SuccessStats {
            mean: map.success_mean(),
            min: valid_success.iter().copied().fold(f64::INFINITY, f64::min),
            max: valid_success.iter().copied().fold(0.0, f64::max),
        },
        stages: st.statuses,
        timings: st.timings,
    };
    Ok(PipelineOutput {
        report,
        input,
        truth,
        hologram,
        hologram_reconstructed: rec_holo,
        reconstructed,
    })
}

/// Object-plane fidelity when the reconstructed hologram is transported back
/// over `factor * d` for each factor.
pub fn defocus_scan(out: &PipelineOutput, prop: &PropagationParams, factors: &[f64]) -> Result<Vec<(f64, f64)>> {
    factors
        .iter()
        .map(|&f| {
            let p = prop.with_distance(prop.distance * f);
            let (rec, _) = invert_normalized(&out.hologram_reconstructed, &p)?;
            Ok((p.distance, fidelity(&rec, &out.truth)?))
        })
        .collect()
}

/// `|rec| - |truth|` scaled to 8 bits, mid-gray at zero difference.
pub fn difference_image(rec: &WaveField, truth: &WaveField) -> Result<GrayImage> {
    rec.require_compatible(truth)?;
    let peak = truth.amplitudes().iter().map(|a| a.norm()).fold(0.0, f64::max);
    let scale = if peak > 0.0 { 127.5 / peak } else { 0.0 };
    let pixels = rec
        .amplitudes()
        .iter()
        .zip(truth.amplitudes())
        .map(|(r, t)| (127.5 + (r.norm() - t.norm()) * scale).round().clamp(0.0, 255.0) as u8)
        .collect();
    Ok(GrayImage {
        width: truth.grid().nx(),
        height: truth.grid().ny(),
        pixels,
    })
}
