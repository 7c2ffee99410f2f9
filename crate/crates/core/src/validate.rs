//! Built-in invariant suites run by `wfh validate`.

use std::f64::consts::FRAC_PI_2;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::coupling::{weak_value_oracle, BasisState, Projector};
use crate::error::Result;
use crate::holography::{
    classical_hologram, gaussian_beam_width, invert_normalized, propagate_exact, second_moment_width, PropagationParams,
};
use crate::metrics::{amplitude_rmse, fidelity_masked};
use crate::reconstruction::{gauge_fix, NoiseModel, ReconstructionPlan, Scheme, WeakValueMap};
use crate::wavefield::{fidelity, make_grid, make_mode, to_momentum, Domain, Grid2D, ModeSpec, WaveField};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ValidateOptions {
    /// Flip the sign of the circular-polarization readout (mutation check).
    pub flip_sigma_r: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl std::fmt::Display for SuiteResult {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag} {:<22} {}", self.name, self.detail)
    }
}

/// Dense random state with entries uniform in the unit square, normalized.
pub fn random_state(grid: Grid2D, rng: &mut impl Rng) -> WaveField {
    let amps = (0..grid.len())
        .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    WaveField::new(grid, amps, Domain::Position)
        .and_then(|f| f.normalized())
        .expect("random state is finite and nonzero")
}

/// LG l=1 on a 32x32 unit grid with waist N/12.
pub fn lg_reference() -> WaveField {
    let g = make_grid(32, 32, 1.0, 1.0).expect("valid grid");
    make_mode(&g, &ModeSpec::laguerre_gauss(32.0 / 12.0, 1, 0)).expect("valid mode")
}

fn plan(
    psi: &WaveField,
    scheme: Scheme,
    theta: f64,
    noise: NoiseModel,
    opts: ValidateOptions,
) -> Result<ReconstructionPlan> {
    let p = ReconstructionPlan::new(psi, scheme, theta, noise)?;
    Ok(if opts.flip_sigma_r {
        p.with_sigma_y_sign_flipped()
    } else {
        p
    })
}

fn run_map(
    psi: &WaveField,
    scheme: Scheme,
    theta: f64,
    noise: NoiseModel,
    opts: ValidateOptions,
) -> Result<WeakValueMap> {
    plan(psi, scheme, theta, noise, opts)?.run()
}

fn gauge_fixed(
    psi: &WaveField,
    scheme: Scheme,
    theta: f64,
    noise: NoiseModel,
    opts: ValidateOptions,
) -> Result<(WaveField, WeakValueMap)> {
    let map = run_map(psi, scheme, theta, noise, opts)?;
    Ok((gauge_fix(&map)?.0, map))
}

fn suite(name: &'static str, body: impl FnOnce() -> Result<(bool, String)>) -> SuiteResult {
    match body() {
        Ok((passed, detail)) => SuiteResult { name, passed, detail },
        Err(e) => SuiteResult {
            name,
            passed: false,
            detail: format!("error: {e}"),
        },
    }
}

/// Sum of strong-scan position weak values over 100 random states.
pub fn completeness(opts: ValidateOptions) -> SuiteResult {
    suite("completeness", || {
        let g = make_grid(8, 8, 1.0, 1.0)?;
        let mut rng = ChaCha8Rng::seed_from_u64(0xC0);
        let (mut worst, mut n) = (0.0f64, 0);
        while n < 100 {
            let psi = random_state(g, &mut rng);
            if to_momentum(&psi)?.at(g.center()).norm() <= 0.1 {
                continue;
            }
            let map = run_map(&psi, Scheme::StrongScan, FRAC_PI_2, NoiseModel::exact(), opts)?;
            let total: Complex64 = map.values.iter().sum();
            worst = worst.max((total - 1.0).norm());
            n += 1;
        }
        Ok((worst <= 1e-12, format!("max |sum w - 1| = {worst:.3e} over {n} states")))
    })
}

/// Measured position weak values times momentum weak values equal `1/d`.
pub fn product_identity(opts: ValidateOptions) -> SuiteResult {
    suite("product_identity", || {
        let g = make_grid(8, 8, 1.0, 1.0)?;
        let psi = random_state(g, &mut ChaCha8Rng::seed_from_u64(0xD1));
        let map = run_map(&psi, Scheme::StrongScan, FRAC_PI_2, NoiseModel::exact(), opts)?;
        let inv_d = 1.0 / g.len() as f64;
        let mut worst = 0.0f64;
        for i in 0..g.len() {
            let wp = weak_value_oracle(
                Projector::Momentum(map.postselect_bin),
                &psi,
                BasisState::Position(g.pixel(i)),
            )?;
            if let Some(wp) = wp.value {
                worst = worst.max((map.values[i] * wp - inv_d).norm());
            }
        }
        Ok((worst <= 1e-10, format!("max |w_x w_p - 1/d| = {worst:.3e}")))
    })
}

/// Strong-scan and scan-free reconstructions of an LG l=1 mode are exact.
pub fn exactness(opts: ValidateOptions) -> SuiteResult {
    suite("exactness", || {
        let lg = lg_reference();
        let (strong, _) = gauge_fixed(&lg, Scheme::StrongScan, FRAC_PI_2, NoiseModel::exact(), opts)?;
        let (free, map) = gauge_fixed(&lg, Scheme::Scanfree, FRAC_PI_2, NoiseModel::exact(), opts)?;
        let f_strong = fidelity(&strong, &lg)?;
        let f_free = fidelity_masked(&free, &lg, &map.valid)?;
        let passed = f_strong >= 1.0 - 1e-9 && f_free >= 1.0 - 1e-6;
        Ok((
            passed,
            format!(
                "strong 1-F = {:.3e}, scanfree 1-F = {:.3e}",
                1.0 - f_strong,
                1.0 - f_free
            ),
        ))
    })
}

/// Weak-scan infidelity at thetas 0.2, 0.1 and 0.05 on the LG reference.
pub fn weak_scan_infidelities(opts: ValidateOptions) -> Result<[f64; 3]> {
    let lg = lg_reference();
    let mut out = [0.0; 3];
    for (slot, theta) in out.iter_mut().zip([0.2, 0.1, 0.05]) {
        let (f, _) = gauge_fixed(&lg, Scheme::WeakScan, theta, NoiseModel::exact(), opts)?;
        *slot = 1.0 - fidelity(&f, &lg)?;
    }
    Ok(out)
}

pub fn weak_convergence(opts: ValidateOptions) -> SuiteResult {
    suite("weak_convergence", || {
        let [a, b, c] = weak_scan_infidelities(opts)?;
        let passed = c <= 0.3 * b && b <= 0.3 * a;
        Ok((passed, format!("1-F at theta 0.2/0.1/0.05 = {a:.3e}/{b:.3e}/{c:.3e}")))
    })
}

/// Gaussian beam used by the propagation suites: 128x128 at 12.5 um, w0 = 150 um.
pub fn roundtrip_beam() -> Result<WaveField> {
    let g = make_grid(128, 128, 12.5e-6, 12.5e-6)?;
    make_mode(&g, &ModeSpec::gaussian(150e-6))
}

pub fn propagation_roundtrip(_opts: ValidateOptions) -> SuiteResult {
    suite("propagation_roundtrip", || {
        let beam = roundtrip_beam()?;
        let p = PropagationParams::default();
        let holo = propagate_exact(&beam, &p)?;
        let (back, _) = invert_normalized(&holo, &p)?;
        let f = fidelity(&back, &beam)?;
        let width_err = second_moment_width(&holo) / gaussian_beam_width(150e-6, p.wavelength, p.distance) - 1.0;
        let passed = f >= 0.999 && width_err.abs() <= 0.02;
        Ok((passed, format!("F = {f:.6}, width error = {:.3e}", width_err)))
    })
}

pub fn hologram_decomposition(_opts: ValidateOptions) -> SuiteResult {
    suite("hologram_decomposition", || {
        let g = make_grid(16, 16, 1.0, 1.0)?;
        let mut rng = ChaCha8Rng::seed_from_u64(0xE2);
        let mut worst = 0.0f64;
        for _ in 0..20 {
            let (o, r) = (random_state(g, &mut rng), random_state(g, &mut rng));
            let h = classical_hologram(&o, &r)?;
            for (s, i) in h.term_sum().iter().zip(&h.intensity) {
                worst = worst.max((s - i).abs());
            }
        }
        Ok((worst <= 1e-12, format!("max |terms - |O+R|^2| = {worst:.3e}")))
    })
}

/// Shot-noise reference: LG l=1 on a 12x12 unit grid with waist N/5.
pub fn shot_noise_reference() -> WaveField {
    let g = make_grid(12, 12, 1.0, 1.0).expect("valid grid");
    make_mode(&g, &ModeSpec::laguerre_gauss(12.0 / 5.0, 1, 0)).expect("valid mode")
}

#[derive(Clone, Debug, PartialEq)]
pub struct ShotNoiseStudy {
    pub photons: Vec<u64>,
    /// Mean amplitude RMSE over seeds per photon count.
    pub amplitude_rmse: Vec<f64>,
    /// Mean fidelity over seeds per photon count.
    pub fidelity: Vec<f64>,
    /// Least-squares slope of log RMSE against log photons.
    pub slope: f64,
}

/// Strong-scan shot-noise study on the reference mode, averaging `seeds` runs.
pub fn shot_noise_study(photons: &[u64], seeds: u64, opts: ValidateOptions) -> Result<ShotNoiseStudy> {
    let psi = shot_noise_reference();
    let all = vec![true; psi.grid().len()];
    let mut rmse = Vec::new();
    let mut fid = Vec::new();
    for &n in photons {
        let (mut r, mut f) = (0.0, 0.0);
        for s in 0..seeds {
            let (rec, _) = gauge_fixed(&psi, Scheme::StrongScan, FRAC_PI_2, NoiseModel::shot_noise(n, s), opts)?;
            r += amplitude_rmse(&rec, &psi, &all)?;
            f += fidelity(&rec, &psi)?;
        }
        rmse.push(r / seeds as f64);
        fid.push(f / seeds as f64);
    }
    let xs: Vec<f64> = photons.iter().map(|&n| (n as f64).ln()).collect();
    let ys: Vec<f64> = rmse.iter().map(|r| r.ln()).collect();
    let m = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / m, ys.iter().sum::<f64>() / m);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    Ok(ShotNoiseStudy {
        photons: photons.to_vec(),
        amplitude_rmse: rmse,
        fidelity: fid,
        slope: sxy / sxx,
    })
}

pub fn shot_noise_scaling(opts: ValidateOptions) -> SuiteResult {
    suite("shot_noise_scaling", || {
        let study = shot_noise_study(&[1_000, 10_000, 100_000], 10, opts)?;
        let f4 = study.fidelity[1];
        let passed = (study.slope + 0.5).abs() <= 0.1 && (0.90..=0.99).contains(&f4);
        Ok((passed, format!("slope = {:.4}, F(1e4) = {f4:.4}", study.slope)))
    })
}

pub fn run_all(opts: ValidateOptions) -> Vec<SuiteResult> {
    vec![
        completeness(opts),
        product_identity(opts),
        exactness(opts),
        weak_convergence(opts),
        propagation_roundtrip(opts),
        hologram_decomposition(opts),
        shot_noise_scaling(opts),
    ]
}
