//! Direct wavefunction reconstruction from post-selected pointer readouts.
//!
//! Three schemes are supported:
//!
//! * `weak_scan`: weak position coupling at each pixel, post-selection on a
//!   momentum bin, two Pauli readouts (`sigma_plus`, `sigma_R`).
//! * `strong_scan`: the same with `theta = pi/2`; three readouts (`sigma_x`,
//!   `sigma_y`, `proj_1`) recover the weak value exactly.
//! * `scanfree`: one strong coupling on a momentum bin, then every position
//!   pixel is post-selected in parallel; the momentum weak value at each pixel
//!   is inversely proportional to the wavefunction there.
//!
//! The post-selection bin is `p = 0` unless `|<p=0|psi>| < 1e-6 ||psi||`, in
//! which case the bin with the largest momentum amplitude is used and the
//! resulting linear phase ramp is removed during gauge fixing.

use std::f64::consts::FRAC_PI_2;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coupling::{couple_momentum, weak_value_oracle, BasisState, JointState, Projector};
use crate::error::{Error, Result};
use crate::pointer::{derive_seed, expectation, sample_expectation, CountRecord, PointerObservable, PointerState};
use crate::wavefield::{to_momentum, Domain, Grid2D, Pixel, WaveField};

/// Pixels whose post-selection probability falls below this are invalid.
pub const SUCCESS_THRESHOLD: f64 = 1e-12;
/// Relative zero-momentum amplitude below which post-selection is shifted.
pub const SHIFT_THRESHOLD: f64 = 1e-6;
/// Largest coupling angle treated as weak.
pub const WEAK_THETA_MAX: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    WeakScan,
    StrongScan,
    #[serde(alias = "scan_free")]
    Scanfree,
}

impl Scheme {
    pub fn as_str(&self) -> &'static str {
        match self {
            Scheme::WeakScan => "weak_scan",
            Scheme::StrongScan => "strong_scan",
            Scheme::Scanfree => "scanfree",
        }
    }

    /// Pointer observables read out per pixel.
    pub fn settings(&self) -> &'static [PointerObservable] {
        match self {
            Scheme::WeakScan => &[PointerObservable::SigmaPlus, PointerObservable::SigmaR],
            Scheme::StrongScan | Scheme::Scanfree => &[
                PointerObservable::SigmaX,
                PointerObservable::SigmaY,
                PointerObservable::Proj1,
            ],
        }
    }

    pub fn settings_per_pixel(&self) -> usize {
        self.settings().len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMode {
    Exact,
    ShotNoise,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseModel {
    pub mode: NoiseMode,
    /// Post-selected photons per pointer setting per pixel.
    #[serde(default)]
    pub photons_per_setting: u64,
    #[serde(default)]
    pub master_seed: u64,
}

impl NoiseModel {
    pub fn exact() -> Self {
        Self {
            mode: NoiseMode::Exact,
            photons_per_setting: 0,
            master_seed: 0,
        }
    }

    pub fn shot_noise(photons_per_setting: u64, master_seed: u64) -> Self {
        Self {
            mode: NoiseMode::ShotNoise,
            photons_per_setting,
            master_seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.mode == NoiseMode::ShotNoise && self.photons_per_setting == 0 {
            return Err(Error::ZeroSamples);
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeakValueMap {
    pub grid: Grid2D,
    /// Position weak values for the scan schemes, momentum weak values for scan-free.
    pub values: Vec<Complex64>,
    pub valid: Vec<bool>,
    pub scheme: Scheme,
    pub theta: f64,
    pub postselect_bin: Pixel,
    /// Post-selection success probability per pixel.
    pub success: Vec<f64>,
    pub noise: NoiseModel,
    /// Detector counts in pixel order (shot-noise mode only).
    pub counts: Vec<(Pixel, CountRecord)>,
}

impl WeakValueMap {
    pub fn valid_fraction(&self) -> f64 {
        self.valid.iter().filter(|&&v| v).count() as f64 / self.valid.len() as f64
    }

    pub fn is_shifted(&self) -> bool {
        self.postselect_bin != self.grid.center()
    }

    /// Mean success probability over valid pixels.
    pub fn success_mean(&self) -> f64 {
        let (sum, n) = self
            .success
            .iter()
            .zip(&self.valid)
            .filter(|(_, &v)| v)
            .fold((0.0, 0usize), |(s, n), (p, _)| (s + p, n + 1));
        if n == 0 {
            0.0
        } else {
            sum / n as f64
        }
    }

    /// Post-selected photons spent over all valid pixels.
    pub fn detected_photons(&self) -> u64 {
        let valid = self.valid.iter().filter(|&&v| v).count() as u64;
        valid * self.scheme.settings_per_pixel() as u64 * self.noise.photons_per_setting
    }

    /// Photons that must enter the apparatus to yield the detected ones.
    pub fn input_photons(&self) -> f64 {
        let per_pixel = self.scheme.settings_per_pixel() as f64 * self.noise.photons_per_setting as f64;
        self.success
            .iter()
            .zip(&self.valid)
            .filter(|(_, &v)| v)
            .map(|(p, _)| per_pixel / p)
            .sum()
    }

    /// Map values as a field (invalid pixels zeroed).
    pub fn values_field(&self) -> WaveField {
        let amps = self
            .values
            .iter()
            .zip(&self.valid)
            .map(|(v, &ok)| if ok { *v } else { Complex64::new(0.0, 0.0) })
            .collect();
        WaveField::from_parts(self.grid, amps, Domain::Position)
    }

    pub fn sidecar(&self) -> MapSidecar {
        MapSidecar {
            scheme: self.scheme,
            theta: self.theta,
            postselect_bin: self.postselect_bin,
            photons_per_setting: self.noise.photons_per_setting,
            master_seed: self.noise.master_seed,
            valid_fraction: self.valid_fraction(),
        }
    }
}

/// JSON sidecar written next to a serialized map.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapSidecar {
    pub scheme: Scheme,
    pub theta: f64,
    pub postselect_bin: Pixel,
    pub photons_per_setting: u64,
    pub master_seed: u64,
    pub valid_fraction: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaugeInfo {
    /// Scale applied to bring the field to unit norm.
    pub normalization: f64,
    /// Pixel rotated to real-positive.
    pub phase_anchor: Pixel,
    /// Global phase removed, in radians.
    pub phase_removed: f64,
    /// Signed momentum bin whose phase ramp was removed (`(0, 0)` when unshifted).
    pub ramp_removed: (i64, i64),
}

/// Post-selection bin: `p = 0`, or the brightest bin when `<p=0|psi>` vanishes.
pub fn choose_postselect_bin(spectrum: &WaveField) -> Result<Pixel> {
    spectrum.require(Domain::Momentum)?;
    let g = spectrum.grid();
    let norm = spectrum.norm();
    if norm == 0.0 {
        return Err(Error::ZeroNorm);
    }
    let center = g.center();
    if spectrum.at(center).norm() >= SHIFT_THRESHOLD * norm {
        return Ok(center);
    }
    let mut best = 0usize;
    for (i, a) in spectrum.amplitudes().iter().enumerate() {
        // strict comparison keeps the first maximum in row-major order
        if a.norm() > spectrum.amplitudes()[best].norm() {
            best = i;
        }
    }
    Ok(g.pixel(best))
}

#[derive(Clone, Debug, PartialEq)]
pub struct PixelEstimate {
    pub value: Complex64,
    pub valid: bool,
    pub success: f64,
    pub records: Vec<CountRecord>,
}

/// Readouts of the scheme's settings on one post-selected pointer.
struct Readout {
    /// Normalized expectation per setting.
    normalized: Vec<f64>,
    records: Vec<CountRecord>,
}

/// Per-pixel estimator for one scheme and one input field. Pixels are
/// independent: `estimate_pixel` gives identical results in any call order.
pub struct ReconstructionPlan {
    grid: Grid2D,
    scheme: Scheme,
    theta: f64,
    noise: NoiseModel,
    bin: Pixel,
    /// `<p_bin|psi>`.
    bin_amplitude: Complex64,
    field: WaveField,
    /// Joint state after the single momentum coupling (scan-free only).
    joint: Option<JointState>,
    sigma_y_sign: f64,
}

impl ReconstructionPlan {
    pub fn new(psi: &WaveField, scheme: Scheme, theta: f64, noise: NoiseModel) -> Result<Self> {
        psi.require(Domain::Position)?;
        noise.validate()?;
        let theta = match scheme {
            Scheme::WeakScan => {
                if !(theta > 0.0 && theta <= FRAC_PI_2) {
                    return Err(Error::InvalidTheta(theta));
                }
                if theta > WEAK_THETA_MAX {
                    log::warn!("theta = {theta} is outside the weak regime (<= {WEAK_THETA_MAX})");
                }
                theta
            }
            Scheme::StrongScan | Scheme::Scanfree => FRAC_PI_2,
        };
        let spectrum = to_momentum(psi)?;
        let bin = choose_postselect_bin(&spectrum)?;
        let bin_amplitude = spectrum.at(bin);
        if bin_amplitude.norm_sqr() < SUCCESS_THRESHOLD * psi.norm_sqr() {
            return Err(Error::DivergentPostSelection);
        }
        let joint = match scheme {
            Scheme::Scanfree => Some(couple_momentum(psi, bin, theta)?),
            _ => None,
        };
        Ok(Self {
            grid: *psi.grid(),
            scheme,
            theta,
            noise,
            bin,
            bin_amplitude,
            field: psi.clone(),
            joint,
            sigma_y_sign: 1.0,
        })
    }

    /// Flips the sign of the `sigma_y`/`sigma_R` readout, for mutation tests
    /// of the validation suites.
    #[doc(hidden)]
    pub fn with_sigma_y_sign_flipped(mut self) -> Self {
        self.sigma_y_sign = -1.0;
        self
    }

    pub fn postselect_bin(&self) -> Pixel {
        self.bin
    }

    /// Unnormalized pointer after coupling at `pixel` and post-selecting the
    /// momentum bin. Closed form of `couple_position` followed by
    /// momentum post-selection:
    /// `c0 = phi(k) - (1 - cos theta) <k|x> psi(x)`, `c1 = sin theta <k|x> psi(x)`.
    fn scan_pointer(&self, pixel: Pixel) -> PointerState {
        let local = self.grid.plane_wave(pixel, self.bin).conj() * self.field.at(pixel);
        let (s, c) = self.theta.sin_cos();
        let c0 = if self.scheme == Scheme::StrongScan {
            self.bin_amplitude - local
        } else {
            self.bin_amplitude - local * (1.0 - c)
        };
        PointerState::unnormalized(c0, local * s)
    }

    fn pointer(&self, pixel: Pixel) -> PointerState {
        match &self.joint {
            Some(j) => PointerState::unnormalized(j.psi0.at(pixel), j.psi1.at(pixel)),
            None => self.scan_pointer(pixel),
        }
    }

    fn read(&self, index: usize, pointer: &PointerState) -> Result<Readout> {
        let settings = self.scheme.settings();
        let mut normalized = Vec::with_capacity(settings.len());
        let mut records = Vec::new();
        let unit = pointer.to_normalized()?;
        for &obs in settings {
            let value = match self.noise.mode {
                NoiseMode::Exact => expectation(&unit, obs),
                NoiseMode::ShotNoise => {
                    let seed = derive_seed(self.noise.master_seed, index as u64, obs);
                    let (est, rec) = sample_expectation(&unit, obs, self.noise.photons_per_setting, seed)?;
                    records.push(rec);
                    est
                }
            };
            let sign = if matches!(obs, PointerObservable::SigmaY | PointerObservable::SigmaR) {
                self.sigma_y_sign
            } else {
                1.0
            };
            normalized.push(sign * value);
        }
        Ok(Readout { normalized, records })
    }

    pub fn estimate_pixel(&self, index: usize) -> Result<PixelEstimate> {
        let pixel = self.grid.pixel(index);
        let pointer = self.pointer(pixel);
        let success = pointer.norm_sqr();
        let invalid = |records| PixelEstimate {
            value: Complex64::new(0.0, 0.0),
            valid: false,
            success,
            records,
        };
        if success < SUCCESS_THRESHOLD {
            return Ok(invalid(Vec::new()));
        }
        let Readout { normalized: r, records } = self.read(index, &pointer)?;

        let value = match self.scheme {
            Scheme::WeakScan => Complex64::new(r[0], r[1]) / (2.0 * self.theta),
            Scheme::StrongScan => {
                // raw <phi|O|phi> = success * normalized; |C|^-2 = |phi(k)|^2
                let scale = success / (2.0 * self.bin_amplitude.norm_sqr());
                Complex64::new(r[0] + 2.0 * r[2], r[1]) * scale
            }
            Scheme::Scanfree => {
                // pointer psi(x)[(1 - w)|0> + w|1>]: w = p1 / (conj(s) + p1), s = <sigma_x + i sigma_y>/2
                let p1 = r[2];
                let s = Complex64::new(r[0], r[1]) * 0.5;
                let denom = s.conj() + p1;
                let intensity = success * (1.0 + r[0]);
                if p1 <= 0.0 || intensity < SUCCESS_THRESHOLD || denom.norm() == 0.0 {
                    return Ok(invalid(records));
                }
                Complex64::new(p1, 0.0) / denom
            }
        };
        Ok(PixelEstimate {
            value,
            valid: true,
            success,
            records,
        })
    }

    pub fn run(&self) -> Result<WeakValueMap> {
        let estimates = (0..self.grid.len())
            .into_par_iter()
            .map(|i| self.estimate_pixel(i))
            .collect::<Result<Vec<_>>>()?;
        let mut map = WeakValueMap {
            grid: self.grid,
            values: Vec::with_capacity(estimates.len()),
            valid: Vec::with_capacity(estimates.len()),
            scheme: self.scheme,
            theta: self.theta,
            postselect_bin: self.bin,
            success: Vec::with_capacity(estimates.len()),
            noise: self.noise,
            counts: Vec::new(),
        };
        for (i, e) in estimates.into_iter().enumerate() {
            map.values.push(e.value);
            map.valid.push(e.valid);
            map.success.push(e.success);
            let pixel = self.grid.pixel(i);
            map.counts.extend(e.records.into_iter().map(|r| (pixel, r)));
        }
        if !map.valid.iter().any(|&v| v) {
            return Err(Error::DivergentPostSelection);
        }
        Ok(map)
    }
}

pub fn reconstruct(psi: &WaveField, scheme: Scheme, theta: f64, noise: NoiseModel) -> Result<WeakValueMap> {
    ReconstructionPlan::new(psi, scheme, theta, noise)?.run()
}

pub fn reconstruct_scan_weak(psi: &WaveField, theta: f64, noise: NoiseModel) -> Result<WeakValueMap> {
    reconstruct(psi, Scheme::WeakScan, theta, noise)
}

pub fn reconstruct_scan_strong(psi: &WaveField, noise: NoiseModel) -> Result<WeakValueMap> {
    reconstruct(psi, Scheme::StrongScan, FRAC_PI_2, noise)
}

pub fn reconstruct_scanfree(psi: &WaveField, noise: NoiseModel) -> Result<WeakValueMap> {
    reconstruct(psi, Scheme::Scanfree, FRAC_PI_2, noise)
}

/// Removes the unobservable constant from a map: zeroes invalid pixels,
/// removes the shifted-bin phase ramp, normalizes, and rotates the brightest
/// valid pixel (first in row-major order on ties) to real-positive.
pub fn gauge_fix(map: &WeakValueMap) -> Result<(WaveField, GaugeInfo)> {
    if !map.valid.iter().any(|&v| v) {
        return Err(Error::AllInvalid);
    }
    let g = map.grid;
    let zero = Complex64::new(0.0, 0.0);
    let sqrt_d = (g.len() as f64).sqrt();
    let mut amps: Vec<Complex64> = map
        .values
        .iter()
        .zip(&map.valid)
        .enumerate()
        .map(|(i, (&v, &ok))| {
            if !ok {
                return zero;
            }
            let raw = match map.scheme {
                Scheme::Scanfree => v.inv(),
                _ => v,
            };
            // multiply by e^{+2 pi i k.x / N} = sqrt(d) <x|p_k>
            raw * g.plane_wave(g.pixel(i), map.postselect_bin) * sqrt_d
        })
        .collect();
    if amps.iter().any(|a| !a.re.is_finite() || !a.im.is_finite()) {
        return Err(Error::NonFinite);
    }

    let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::ZeroNorm);
    }
    let mut anchor = None::<usize>;
    for (i, a) in amps.iter().enumerate() {
        if map.valid[i] && anchor.is_none_or(|b| a.norm() > amps[b].norm()) {
            anchor = Some(i);
        }
    }
    let anchor = anchor.expect("at least one valid pixel");
    let phase = amps[anchor].arg();
    let factor = Complex64::from_polar(1.0 / norm, -phase);
    for a in &mut amps {
        *a *= factor;
    }
    let field = WaveField::new(g, amps, Domain::Position)?;
    Ok((
        field,
        GaugeInfo {
            normalization: 1.0 / norm,
            phase_anchor: g.pixel(anchor),
            phase_removed: phase,
            ramp_removed: g.signed(map.postselect_bin),
        },
    ))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentityStats {
    /// `max |w_x * w_p - 1/d|` over pixels with nonzero amplitude.
    pub max_residual: f64,
    pub mean_residual: f64,
    pub pixels_used: usize,
    pub inv_dim: f64,
}

/// Checks `<pi_x>_w * <pi_p>_w = 1/d` at every pixel from the oracle weak values,
/// with `p` the post-selection bin the reconstruction would use.
pub fn product_identity_check(psi: &WaveField) -> Result<IdentityStats> {
    psi.require(Domain::Position)?;
    let g = psi.grid();
    let p0 = choose_postselect_bin(&to_momentum(psi)?)?;
    let inv_dim = 1.0 / g.len() as f64;
    let (mut max, mut sum, mut n) = (0.0f64, 0.0, 0usize);
    for i in 0..g.len() {
        let x = g.pixel(i);
        if psi.at(x).norm() == 0.0 {
            continue;
        }
        let wx = weak_value_oracle(Projector::Position(x), psi, BasisState::Momentum(p0))?;
        let wp = weak_value_oracle(Projector::Momentum(p0), psi, BasisState::Position(x))?;
        let (Some(wx), Some(wp)) = (wx.value, wp.value) else {
            if wx.is_divergent() {
                return Err(Error::DivergentPostSelection);
            }
            continue;
        };
        let r = (wx * wp - inv_dim).norm();
        max = max.max(r);
        sum += r;
        n += 1;
    }
    Ok(IdentityStats {
        max_residual: max,
        mean_residual: if n == 0 { 0.0 } else { sum / n as f64 },
        pixels_used: n,
        inv_dim,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::fidelity_masked;
    use crate::wavefield::{fidelity, make_grid, make_mode, ModeSpec};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn lg32() -> WaveField {
        let g = make_grid(32, 32, 1.0, 1.0).unwrap();
        make_mode(&g, &ModeSpec::laguerre_gauss(32.0 / 12.0, 1, 0)).unwrap()
    }

    fn random_state(nx: usize, ny: usize, seed: u64) -> WaveField {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let g = make_grid(nx, ny, 1.0, 1.0).unwrap();
        let amps = (0..g.len())
            .map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        WaveField::new(g, amps, Domain::Position).unwrap().normalized().unwrap()
    }

    fn oracle_wx(psi: &WaveField, bin: Pixel, i: usize) -> Complex64 {
        let g = psi.grid();
        weak_value_oracle(Projector::Position(g.pixel(i)), psi, BasisState::Momentum(bin))
            .unwrap()
            .value
            .unwrap()
    }

    #[test]
    fn scan_pointer_matches_coupling_then_postselection() {
        let psi = random_state(4, 3, 11);
        for scheme in [Scheme::WeakScan, Scheme::StrongScan] {
            let plan = ReconstructionPlan::new(&psi, scheme, 0.3, NoiseModel::exact()).unwrap();
            for i in 0..12 {
                let x = psi.grid().pixel(i);
                let fast = plan.pointer(x);
                let j = crate::coupling::couple_position(&psi, x, plan.theta).unwrap();
                let (slow, _) = crate::coupling::postselect_momentum_zero(&j).unwrap();
                assert!((fast.c0 - slow.c0).norm() < 1e-15);
                assert!((fast.c1 - slow.c1).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn weak_scan_of_delta() {
        let g = make_grid(4, 4, 1.0, 1.0).unwrap();
        let delta = make_mode(&g, &ModeSpec::delta()).unwrap();
        let map = reconstruct_scan_weak(&delta, 0.1, NoiseModel::exact()).unwrap();
        for (i, v) in map.values.iter().enumerate() {
            let expected = if g.pixel(i) == g.center() { 1.0 } else { 0.0 };
            assert!((v - c(expected, 0.0)).norm() < 0.1 * 0.1, "{i}: {v}");
        }
    }

    #[test]
    fn weak_scan_of_uniform_state() {
        let g = make_grid(2, 2, 1.0, 1.0).unwrap();
        let u = make_mode(&g, &ModeSpec::uniform()).unwrap();
        let map = reconstruct_scan_weak(&u, 0.05, NoiseModel::exact()).unwrap();
        for v in &map.values {
            assert!((v - c(0.25, 0.0)).norm() <= 2.5e-3);
        }
    }

    #[test]
    fn weak_scan_lg_with_shifted_postselection() {
        let lg = lg32();
        let map = reconstruct_scan_weak(&lg, 0.1, NoiseModel::exact()).unwrap();
        assert!(map.is_shifted());
        let (field, info) = gauge_fix(&map).unwrap();
        assert_ne!(info.ramp_removed, (0, 0));
        assert!(fidelity(&field, &lg).unwrap() >= 0.99);
    }

    #[test]
    fn weak_scan_rejects_bad_theta() {
        let lg = lg32();
        assert!(matches!(
            reconstruct_scan_weak(&lg, 0.0, NoiseModel::exact()),
            Err(Error::InvalidTheta(_))
        ));
        assert!(matches!(
            reconstruct_scan_weak(&lg, 2.0, NoiseModel::exact()),
            Err(Error::InvalidTheta(_))
        ));
        // outside the weak regime only warns
        assert!(reconstruct_scan_weak(&lg, 1.0, NoiseModel::exact()).is_ok());
    }

    #[test]
    fn strong_scan_hand_cases() {
        let g = make_grid(2, 2, 1.0, 1.0).unwrap();
        let two = WaveField::new(
            g,
            vec![c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)],
            Domain::Position,
        )
        .unwrap()
        .normalized()
        .unwrap();
        let map = reconstruct_scan_strong(&two, NoiseModel::exact()).unwrap();
        assert!((map.values[0] - c(0.5, 0.0)).norm() < 1e-15);
        assert!((map.values[1] - c(0.5, 0.0)).norm() < 1e-15);
        let (field, _) = gauge_fix(&map).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((field.amplitudes()[0] - c(h, 0.0)).norm() < 1e-15);
        assert!((field.amplitudes()[1] - c(h, 0.0)).norm() < 1e-15);

        let g4 = make_grid(4, 4, 1.0, 1.0).unwrap();
        let delta = make_mode(&g4, &ModeSpec::delta()).unwrap();
        let map = reconstruct_scan_strong(&delta, NoiseModel::exact()).unwrap();
        for (i, v) in map.values.iter().enumerate() {
            let expected = if g4.pixel(i) == g4.center() { 1.0 } else { 0.0 };
            assert_eq!(*v, c(expected, 0.0));
        }
    }

    #[test]
    fn strong_scan_is_exact_against_oracle() {
        for psi in [random_state(8, 8, 1), random_state(5, 7, 2), lg32()] {
            let map = reconstruct_scan_strong(&psi, NoiseModel::exact()).unwrap();
            for i in 0..psi.grid().len() {
                let w = oracle_wx(&psi, map.postselect_bin, i);
                assert!((map.values[i] - w).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn strong_scan_lg_fidelity() {
        let lg = lg32();
        let (field, _) = gauge_fix(&reconstruct_scan_strong(&lg, NoiseModel::exact()).unwrap()).unwrap();
        assert!(fidelity(&field, &lg).unwrap() >= 1.0 - 1e-9);
    }

    #[test]
    fn strong_scan_map_is_complete() {
        let psi = random_state(6, 6, 5);
        let map = reconstruct_scan_strong(&psi, NoiseModel::exact()).unwrap();
        assert!(!map.is_shifted());
        let total: Complex64 = map.values.iter().sum();
        assert!((total - c(1.0, 0.0)).norm() < 1e-10);
    }

    #[test]
    fn scanfree_uniform_state() {
        let g = make_grid(2, 2, 1.0, 1.0).unwrap();
        let u = make_mode(&g, &ModeSpec::uniform()).unwrap();
        let map = reconstruct_scanfree(&u, NoiseModel::exact()).unwrap();
        for v in &map.values {
            assert!((v - c(1.0, 0.0)).norm() < 1e-15);
        }
        let (field, _) = gauge_fix(&map).unwrap();
        for a in field.amplitudes() {
            assert!((a - c(0.5, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn scanfree_matches_oracle_and_strong_scan() {
        for psi in [random_state(8, 8, 3), random_state(6, 5, 4), lg32()] {
            let g = *psi.grid();
            let free = reconstruct_scanfree(&psi, NoiseModel::exact()).unwrap();
            for i in 0..g.len() {
                if !free.valid[i] {
                    continue;
                }
                let wp = weak_value_oracle(
                    Projector::Momentum(free.postselect_bin),
                    &psi,
                    BasisState::Position(g.pixel(i)),
                )
                .unwrap()
                .value
                .unwrap();
                // FFT round-off is absolute in psi, so relative error scales as 1/|psi(x)|
                let tol = 1e-12 + 64.0 * f64::EPSILON * wp.norm() / psi.amplitudes()[i].norm();
                assert!((free.values[i] - wp).norm() <= tol, "{i}: {} vs {wp}", free.values[i]);
            }
            let strong = reconstruct_scan_strong(&psi, NoiseModel::exact()).unwrap();
            let (a, _) = gauge_fix(&free).unwrap();
            let (b, _) = gauge_fix(&strong).unwrap();
            let both: Vec<bool> = free.valid.iter().zip(&strong.valid).map(|(x, y)| *x && *y).collect();
            for ((x, y), keep) in a.amplitudes().iter().zip(b.amplitudes()).zip(&both) {
                if *keep {
                    assert!((x - y).norm() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn scanfree_lg_masks_dark_center() {
        let lg = lg32();
        let map = reconstruct_scanfree(&lg, NoiseModel::exact()).unwrap();
        let center = lg.grid().index(lg.grid().center());
        assert!(!map.valid[center]);
        let (field, _) = gauge_fix(&map).unwrap();
        assert!(fidelity_masked(&field, &lg, &map.valid).unwrap() >= 1.0 - 1e-6);
    }

    #[test]
    fn gauge_fix_removes_arbitrary_constant() {
        let psi = random_state(5, 5, 8);
        let mut map = reconstruct_scan_strong(&psi, NoiseModel::exact()).unwrap();
        let (reference, ref_info) = gauge_fix(&map).unwrap();
        for v in &mut map.values {
            *v *= c(-3.0, 0.7);
        }
        let (field, info) = gauge_fix(&map).unwrap();
        assert_eq!(info.phase_anchor, ref_info.phase_anchor);
        assert!((fidelity(&field, &psi).unwrap() - 1.0).abs() < 1e-12);
        for (a, b) in field.amplitudes().iter().zip(reference.amplitudes()) {
            assert!((a - b).norm() < 1e-12);
        }
        let anchor = field.at(info.phase_anchor);
        assert!(anchor.im.abs() < 1e-15 && anchor.re > 0.0);
    }

    #[test]
    fn gauge_fix_renormalizes_partial_maps() {
        let psi = random_state(10, 10, 9);
        let mut map = reconstruct_scan_strong(&psi, NoiseModel::exact()).unwrap();
        for i in (0..100).step_by(10) {
            map.valid[i] = false;
        }
        let (field, _) = gauge_fix(&map).unwrap();
        assert!((field.norm_sqr() - 1.0).abs() < 1e-12);
        assert_eq!(field.amplitudes()[0], c(0.0, 0.0));
        map.valid.fill(false);
        assert!(matches!(gauge_fix(&map), Err(Error::AllInvalid)));
    }

    #[test]
    fn anchor_ties_break_in_row_major_order() {
        let g = make_grid(2, 2, 1.0, 1.0).unwrap();
        let map = WeakValueMap {
            grid: g,
            values: vec![c(0.0, 0.5), c(0.5, 0.0), c(0.1, 0.0), c(0.0, -0.5)],
            valid: vec![true; 4],
            scheme: Scheme::StrongScan,
            theta: FRAC_PI_2,
            postselect_bin: g.center(),
            success: vec![1.0; 4],
            noise: NoiseModel::exact(),
            counts: vec![],
        };
        let (field, info) = gauge_fix(&map).unwrap();
        assert_eq!(info.phase_anchor, (0, 0));
        assert!(field.amplitudes()[0].im.abs() < 1e-16 && field.amplitudes()[0].re > 0.0);
    }

    #[test]
    fn schedule_independence() {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let psi = random_state(8, 8, 21);
        for scheme in [Scheme::WeakScan, Scheme::StrongScan, Scheme::Scanfree] {
            let plan = ReconstructionPlan::new(&psi, scheme, 0.2, NoiseModel::shot_noise(1000, 77)).unwrap();
            let map = plan.run().unwrap();
            let mut order: Vec<usize> = (0..64).collect();
            order.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(1));
            for i in order {
                let e = plan.estimate_pixel(i).unwrap();
                assert_eq!(e.value.re.to_bits(), map.values[i].re.to_bits());
                assert_eq!(e.value.im.to_bits(), map.values[i].im.to_bits());
            }
        }
    }

    #[test]
    fn shot_noise_records_and_determinism() {
        let psi = random_state(4, 4, 2);
        let a = reconstruct_scan_strong(&psi, NoiseModel::shot_noise(500, 3)).unwrap();
        let b = reconstruct_scan_strong(&psi, NoiseModel::shot_noise(500, 3)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.counts.len(), 16 * 3);
        assert!(a.counts.iter().all(|(_, r)| r.n_total == 500 && r.n_plus <= 500));
        let c2 = reconstruct_scan_strong(&psi, NoiseModel::shot_noise(500, 4)).unwrap();
        assert_ne!(a.values, c2.values);
        assert!(matches!(
            reconstruct_scan_strong(&psi, NoiseModel::shot_noise(0, 4)),
            Err(Error::ZeroSamples)
        ));
    }

    #[test]
    fn zero_field_cannot_be_postselected() {
        let g = make_grid(4, 4, 1.0, 1.0).unwrap();
        let z = WaveField::zeros(g, Domain::Position);
        assert!(reconstruct_scan_strong(&z, NoiseModel::exact()).is_err());
    }

    #[test]
    fn product_identity_examples() {
        let g = make_grid(2, 2, 1.0, 1.0).unwrap();
        let u = make_mode(&g, &ModeSpec::uniform()).unwrap();
        let stats = product_identity_check(&u).unwrap();
        assert!(stats.max_residual < 1e-15);
        assert_eq!(stats.pixels_used, 4);

        let r = random_state(8, 8, 12);
        assert!(product_identity_check(&r).unwrap().max_residual <= 1e-10);
        assert!(product_identity_check(&lg32()).unwrap().max_residual <= 1e-10);

        let mut holes = random_state(4, 4, 13);
        holes.amplitudes_mut()[3] = c(0.0, 0.0);
        holes.amplitudes_mut()[7] = c(0.0, 0.0);
        assert_eq!(product_identity_check(&holes).unwrap().pixels_used, 14);
    }

    #[test]
    fn scheme_settings_counts() {
        assert_eq!(Scheme::WeakScan.settings_per_pixel(), 2);
        assert_eq!(Scheme::StrongScan.settings_per_pixel(), 3);
        assert_eq!(Scheme::Scanfree.settings_per_pixel(), 3);
    }
}
