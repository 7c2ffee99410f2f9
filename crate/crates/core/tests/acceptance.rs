//! Acceptance criteria. Runs as a plain binary (`harness = false`) so that
//! each criterion prints exactly one PASS/FAIL line.

use std::f64::consts::{FRAC_PI_2, PI};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wfh_core::holography::{
    apply_object, classical_hologram, defocus_scan, gaussian_beam_width, holography_pipeline, invert_normalized,
    min_distance_chirp, propagate_exact, second_moment_width, ObjectMask, PropagationParams,
};
use wfh_core::metrics::{amplitude_rmse, fidelity_masked};
use wfh_core::reconstruction::{gauge_fix, reconstruct, NoiseModel, Scheme};
use wfh_core::validate::random_state;
use wfh_core::{fidelity, make_grid, make_mode, Grid2D, ModeSpec, WaveField};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

/// Unitary centered DFT written out as a direct sum.
fn dft_oracle(psi: &WaveField) -> Vec<Complex64> {
    let g = psi.grid();
    let (nx, ny) = (g.nx(), g.ny());
    let norm = 1.0 / ((nx * ny) as f64).sqrt();
    let mut out = vec![Complex64::new(0.0, 0.0); nx * ny];
    for ky in 0..ny {
        for kx in 0..nx {
            let (skx, sky) = (kx as f64 - (nx / 2) as f64, ky as f64 - (ny / 2) as f64);
            let mut acc = Complex64::new(0.0, 0.0);
            for jy in 0..ny {
                for jx in 0..nx {
                    let (sjx, sjy) = (jx as f64 - (nx / 2) as f64, jy as f64 - (ny / 2) as f64);
                    let arg = -2.0 * PI * (skx * sjx / nx as f64 + sky * sjy / ny as f64);
                    acc += Complex64::from_polar(1.0, arg) * psi.amplitudes()[jy * nx + jx];
                }
            }
            out[ky * nx + kx] = acc * norm;
        }
    }
    out
}

/// `<x_j|p_0> = 1/sqrt(d)`, so `w_x = psi(x) / (sqrt(d) phi(0))` and `w_p = phi(0) / (sqrt(d) psi(x))`.
fn zero_bin_weak_values(psi: &WaveField) -> (Vec<Complex64>, Vec<Complex64>) {
    let g = psi.grid();
    let (nx, ny) = (g.nx(), g.ny());
    let phi0 = dft_oracle(psi)[(ny / 2) * nx + nx / 2];
    let sd = ((nx * ny) as f64).sqrt();
    let wx = psi.amplitudes().iter().map(|a| a / (sd * phi0)).collect();
    let wp = psi.amplitudes().iter().map(|a| phi0 / (sd * a)).collect();
    (wx, wp)
}

fn lg32() -> WaveField {
    let g = make_grid(32, 32, 1.0, 1.0).unwrap();
    make_mode(&g, &ModeSpec::laguerre_gauss(32.0 / 12.0, 1, 0)).unwrap()
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn strong_scan_exact(psi: &WaveField) -> WaveField {
    let map = reconstruct(psi, Scheme::StrongScan, FRAC_PI_2, NoiseModel::exact()).unwrap();
    gauge_fix(&map).unwrap().0
}

fn c1_strong_scan_exact() -> Outcome {
    let psi = lg32();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let start = Instant::now();
    let rec = pool.install(|| strong_scan_exact(&psi));
    let secs = start.elapsed().as_secs_f64();
    let f = fidelity(&rec, &psi).unwrap();
    check(
        f >= 1.0 - 1e-9 && secs < 10.0,
        format!("LG l=1 32x32 fidelity={f:.12} time={secs:.3}s (single thread)"),
    )
}

fn c2_weak_convergence() -> Outcome {
    let psi = lg32();
    let inf: Vec<f64> = [0.2, 0.1, 0.05]
        .iter()
        .map(|&t| {
            let map = reconstruct(&psi, Scheme::WeakScan, t, NoiseModel::exact()).unwrap();
            1.0 - fidelity(&gauge_fix(&map).unwrap().0, &psi).unwrap()
        })
        .collect();
    let r1 = inf[1] / inf[0];
    let r2 = inf[2] / inf[1];
    check(
        r1 <= 0.3 && r2 <= 0.3,
        format!(
            "1-F at theta=0.2,0.1,0.05: {:.3e} {:.3e} {:.3e}; ratios {r1:.4} {r2:.4}",
            inf[0], inf[1], inf[2]
        ),
    )
}

fn c3_product_identity() -> Outcome {
    let mut r = rng(3);
    let g = make_grid(8, 8, 1.0, 1.0).unwrap();
    let d = g.len() as f64;
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let psi = random_state(g, &mut r);
        let (wx_oracle, wp) = zero_bin_weak_values(&psi);
        let measured = reconstruct(&psi, Scheme::StrongScan, FRAC_PI_2, NoiseModel::exact()).unwrap();
        for i in 0..g.len() {
            worst = worst.max((wx_oracle[i] * wp[i] - 1.0 / d).norm());
            worst = worst.max((measured.values[i] * wp[i] - 1.0 / d).norm());
        }
    }
    check(
        worst <= 1e-10,
        format!("max |w_x w_p - 1/d| = {worst:.3e} over 20 random 8x8 states"),
    )
}

fn c4_completeness() -> Outcome {
    let mut r = rng(4);
    let g = make_grid(8, 8, 1.0, 1.0).unwrap();
    let mut worst = 0.0f64;
    let mut accepted = 0;
    while accepted < 100 {
        let psi = random_state(g, &mut r);
        let phi0 = dft_oracle(&psi)[4 * 8 + 4];
        if phi0.norm() <= 0.1 {
            continue;
        }
        accepted += 1;
        let map = reconstruct(&psi, Scheme::StrongScan, FRAC_PI_2, NoiseModel::exact()).unwrap();
        let sum: Complex64 = map.values.iter().sum();
        worst = worst.max((sum - 1.0).norm());
    }
    check(
        worst <= 1e-12,
        format!("max |sum w_x - 1| = {worst:.3e} over {accepted} states"),
    )
}

fn c5_scheme_agreement() -> Outcome {
    let g = make_grid(16, 16, 1.0, 1.0).unwrap();
    let lg = make_mode(&g, &ModeSpec::laguerre_gauss(16.0 / 6.0, 1, 0)).unwrap();
    let random = random_state(g, &mut rng(5));
    let mut parts = Vec::new();
    let mut ok = true;
    for (name, psi) in [("LG", &lg), ("random", &random)] {
        let strong = reconstruct(psi, Scheme::StrongScan, FRAC_PI_2, NoiseModel::exact()).unwrap();
        let free = reconstruct(psi, Scheme::Scanfree, FRAC_PI_2, NoiseModel::exact()).unwrap();
        let mask: Vec<bool> = strong.valid.iter().zip(&free.valid).map(|(a, b)| *a && *b).collect();
        let f = fidelity_masked(&gauge_fix(&strong).unwrap().0, &gauge_fix(&free).unwrap().0, &mask).unwrap();
        ok &= f >= 1.0 - 1e-6;
        parts.push(format!("{name}={f:.10}"));
    }
    check(ok, format!("strong vs scan-free fidelity {}", parts.join(" ")))
}

fn c6_shot_noise_scaling() -> Outcome {
    let g = make_grid(12, 12, 1.0, 1.0).unwrap();
    let psi = make_mode(&g, &ModeSpec::laguerre_gauss(12.0 / 5.0, 1, 0)).unwrap();
    let all = vec![true; g.len()];
    let photons = [1_000u64, 10_000, 100_000, 1_000_000];
    let seeds = 10u64;
    let mut log_n = Vec::new();
    let mut log_e = Vec::new();
    let mut f_1e4 = 0.0;
    for &n in &photons {
        let (mut e, mut f) = (0.0, 0.0);
        for s in 0..seeds {
            let map = reconstruct(&psi, Scheme::StrongScan, FRAC_PI_2, NoiseModel::shot_noise(n, 1000 + s)).unwrap();
            let rec = gauge_fix(&map).unwrap().0;
            e += amplitude_rmse(&rec, &psi, &all).unwrap();
            f += fidelity(&rec, &psi).unwrap();
        }
        log_n.push((n as f64).ln());
        log_e.push((e / seeds as f64).ln());
        if n == 10_000 {
            f_1e4 = f / seeds as f64;
        }
    }
    let mx = log_n.iter().sum::<f64>() / log_n.len() as f64;
    let my = log_e.iter().sum::<f64>() / log_e.len() as f64;
    let sxy: f64 = log_n.iter().zip(&log_e).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = log_n.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    check(
        (slope + 0.5).abs() <= 0.1 && (0.90..=0.99).contains(&f_1e4),
        format!("RMSE slope={slope:.4} (target -0.5 +/- 0.1), mean F(1e4)={f_1e4:.4} (target 0.90..0.99)"),
    )
}

fn gaussian_128() -> (Grid2D, WaveField) {
    let g = make_grid(128, 128, 12.5e-6, 12.5e-6).unwrap();
    let w = make_mode(&g, &ModeSpec::gaussian(150e-6)).unwrap();
    (g, w)
}

fn c7_propagation_roundtrip() -> Outcome {
    let (_, beam) = gaussian_128();
    let prop = PropagationParams::default();
    let far = propagate_exact(&beam, &prop).unwrap();
    let (back, _) = invert_normalized(&far, &prop).unwrap();
    let f = fidelity(&back, &beam).unwrap();
    let w_num = second_moment_width(&far);
    let w_th = gaussian_beam_width(150e-6, prop.wavelength, prop.distance);
    let rel = (w_num - w_th).abs() / w_th;
    check(
        f >= 0.999 && rel <= 0.02,
        format!("roundtrip fidelity={f:.6}, width {w_num:.4e} m vs analytic {w_th:.4e} m (rel err {rel:.2e})"),
    )
}

fn c8_hologram_decomposition() -> Outcome {
    let mut r = rng(8);
    let g = make_grid(16, 16, 1.0, 1.0).unwrap();
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let o = random_state(g, &mut r);
        let rf = random_state(g, &mut r);
        let h = classical_hologram(&o, &rf).unwrap();
        let sum = h.term_sum();
        for (((a, b), i), s) in o.amplitudes().iter().zip(rf.amplitudes()).zip(&h.intensity).zip(&sum) {
            let direct = (a + b).norm_sqr();
            let expanded = a.norm_sqr() + b.norm_sqr() + 2.0 * (a * b.conj()).re;
            worst = worst.max((i - direct).abs());
            worst = worst.max((s - expanded).abs());
            worst = worst.max((i - s).abs());
        }
    }
    check(
        worst <= 1e-12,
        format!("max decomposition residual {worst:.3e} over 20 random field pairs"),
    )
}

fn c9_cat_holography() -> Outcome {
    let g = make_grid(512, 512, 12.5e-6, 12.5e-6).unwrap();
    let wavelength = 633e-9;
    let d = 2.05 * min_distance_chirp(&g, wavelength);
    let prop = PropagationParams::new(wavelength, d).unwrap();
    let mask = ObjectMask::cat_silhouette(g, 0.5);
    let out = holography_pipeline(
        &g,
        &ModeSpec::gaussian(1.6e-3),
        &mask,
        &prop,
        Scheme::StrongScan,
        FRAC_PI_2,
        NoiseModel::exact(),
    )
    .unwrap();
    let truth = apply_object(&make_mode(&g, &ModeSpec::gaussian(1.6e-3)).unwrap(), &mask)
        .unwrap()
        .0;
    let f = fidelity(&out.reconstructed, &truth).unwrap();
    let scan = defocus_scan(&out, &prop, &[0.5, 0.75, 1.0, 1.25, 1.5]).unwrap();
    let best = scan
        .iter()
        .cloned()
        .fold((0.0, f64::MIN), |a, b| if b.1 > a.1 { b } else { a });
    let peak_at_truth = (best.0 - d).abs() < 1e-12 * d.max(1.0);
    let curve: Vec<String> = scan.iter().map(|(z, fz)| format!("{z:.3}:{fz:.3}")).collect();
    check(
        f >= 0.98 && peak_at_truth,
        format!(
            "cat 512x512 d={d:.4} m fidelity={f:.5}; defocus [{}] peak at {:.4} m",
            curve.join(" "),
            best.0
        ),
    )
}

fn run_cli(dir: &Path, threads: usize, args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_wfh"))
        .args(args)
        .args(["--threads", &threads.to_string()])
        .current_dir(dir)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("{args:?} failed: {}", String::from_utf8_lossy(&out.stderr)));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&p).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

/// Binary PGM with an opaque frame around a transparent square.
fn square_mask(n: usize) -> Vec<u8> {
    let mut bytes = format!("P5\n{n} {n}\n255\n").into_bytes();
    for y in 0..n {
        for x in 0..n {
            let inside = (n / 4..3 * n / 4).contains(&x) && (n / 4..3 * n / 4).contains(&y);
            bytes.push(if inside { 255 } else { 0 });
        }
    }
    bytes
}

fn c10_determinism() -> Outcome {
    let configs = [
        (
            "shot",
            &["prepare", "reconstruct"][..],
            r#"{"schema":1,"grid":{"nx":16,"ny":16,"dx":1.0,"dy":1.0},
               "mode":{"kind":"laguerre_gauss","waist":2.7,"l":1},
               "scheme":"strong_scan","noise":{"mode":"shot_noise","photons_per_setting":5000},
               "output_dir":"out","master_seed":11}"#,
        ),
        (
            "holo",
            &["prepare", "reconstruct", "holography"][..],
            r#"{"schema":1,"grid":{"nx":64,"ny":64,"dx":12.5e-6,"dy":12.5e-6},
               "mode":{"kind":"gaussian","waist":2.0e-4},
               "scheme":"scanfree","propagation":{"wavelength":633e-9,"distance":0.05},
               "mask_path":"mask.pgm","output_dir":"out","master_seed":3}"#,
        ),
    ];
    let mut compared = 0;
    for (name, commands, cfg) in configs {
        let mut runs = Vec::new();
        for threads in [1, 4] {
            let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
            std::fs::write(dir.path().join("cfg.json"), cfg).unwrap();
            std::fs::write(dir.path().join("mask.pgm"), square_mask(64)).unwrap();
            let mut stdout = String::new();
            for &cmd in commands {
                stdout += &run_cli(dir.path(), threads, &[cmd, "--config", "cfg.json", "--seed", "42"])?;
            }
            stdout += &run_cli(dir.path(), threads, &["validate"])?;
            runs.push((stdout, snapshot(&dir.path().join("out"))));
        }
        if runs[0] != runs[1] {
            let differing: Vec<_> = runs[0]
                .1
                .iter()
                .zip(&runs[1].1)
                .filter(|(a, b)| a != b)
                .map(|(a, _)| a.0.clone())
                .collect();
            return Err(format!(
                "config {name}: outputs differ between --threads 1 and 4: {differing:?}"
            ));
        }
        compared += runs[0].1.len();
    }
    Ok(format!(
        "{compared} output files and stdout byte-identical across --threads 1 and 4"
    ))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("1 strong-scan exactness", c1_strong_scan_exact),
        ("2 weak-scan convergence", c2_weak_convergence),
        ("3 weak-value product", c3_product_identity),
        ("4 completeness", c4_completeness),
        ("5 strong vs scan-free", c5_scheme_agreement),
        ("6 shot-noise scaling", c6_shot_noise_scaling),
        ("7 propagation roundtrip", c7_propagation_roundtrip),
        ("8 hologram decomposition", c8_hologram_decomposition),
        ("9 cat holography", c9_cat_holography),
        ("10 determinism", c10_determinism),
    ];
    let mut failed = Vec::new();
    for (name, f) in criteria {
        match std::panic::catch_unwind(f) {
            Ok(Ok(detail)) => println!("PASS criterion {name}: {detail}"),
            Ok(Err(detail)) => {
                println!("FAIL criterion {name}: {detail}");
                failed.push(name);
            }
            Err(_) => {
                println!("FAIL criterion {name}: panicked");
                failed.push(name);
            }
        }
    }
    println!("acceptance: {}/10 passed", 10 - failed.len());
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
