//! Qubit pointer: state, Pauli-type observables, finite-photon readout and
//! generalized (Kraus) measurement updates.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::wavefield::Pixel;

const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormTag {
    Normalized,
    Unnormalized,
}

/// `c0 |0> + c1 |1>`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PointerState {
    pub c0: Complex64,
    pub c1: Complex64,
    pub norm_tag: NormTag,
}

impl PointerState {
    pub fn unnormalized(c0: Complex64, c1: Complex64) -> Self {
        Self {
            c0,
            c1,
            norm_tag: NormTag::Unnormalized,
        }
    }

    pub fn normalized(c0: Complex64, c1: Complex64) -> Result<Self> {
        let n = (c0.norm_sqr() + c1.norm_sqr()).sqrt();
        if n == 0.0 {
            return Err(Error::ZeroNorm);
        }
        Ok(Self {
            c0: c0 / n,
            c1: c1 / n,
            norm_tag: NormTag::Normalized,
        })
    }

    fn basis(c0: Complex64, c1: Complex64) -> Self {
        Self {
            c0,
            c1,
            norm_tag: NormTag::Normalized,
        }
    }

    pub fn zero() -> Self {
        Self::basis(Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0))
    }

    pub fn one() -> Self {
        Self::basis(Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0))
    }

    pub fn plus() -> Self {
        Self::basis(Complex64::new(FRAC_1_SQRT_2, 0.0), Complex64::new(FRAC_1_SQRT_2, 0.0))
    }

    pub fn minus() -> Self {
        Self::basis(Complex64::new(FRAC_1_SQRT_2, 0.0), Complex64::new(-FRAC_1_SQRT_2, 0.0))
    }

    pub fn right() -> Self {
        Self::basis(Complex64::new(FRAC_1_SQRT_2, 0.0), Complex64::new(0.0, FRAC_1_SQRT_2))
    }

    pub fn left() -> Self {
        Self::basis(Complex64::new(FRAC_1_SQRT_2, 0.0), Complex64::new(0.0, -FRAC_1_SQRT_2))
    }

    /// `<p|p>`; for a post-selected pointer this is the success probability.
    pub fn norm_sqr(&self) -> f64 {
        self.c0.norm_sqr() + self.c1.norm_sqr()
    }

    pub fn to_normalized(&self) -> Result<Self> {
        Self::normalized(self.c0, self.c1)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointerObservable {
    /// `|+><+| - |-><-|`
    SigmaPlus,
    /// `|R><R| - |L><L|`
    #[serde(rename = "sigma_R")]
    SigmaR,
    SigmaX,
    SigmaY,
    /// `|1><1|`, outcomes 0/1.
    #[serde(rename = "proj_1")]
    Proj1,
}

pub type Matrix2 = [[Complex64; 2]; 2];

fn outer_difference(a: PointerState, b: PointerState) -> Matrix2 {
    let ket = |s: PointerState| [s.c0, s.c1];
    let (a, b) = (ket(a), ket(b));
    let mut m = [[Complex64::new(0.0, 0.0); 2]; 2];
    for r in 0..2 {
        for c in 0..2 {
            m[r][c] = a[r] * a[c].conj() - b[r] * b[c].conj();
        }
    }
    m
}

impl PointerObservable {
    pub const ALL: [PointerObservable; 5] = [
        PointerObservable::SigmaPlus,
        PointerObservable::SigmaR,
        PointerObservable::SigmaX,
        PointerObservable::SigmaY,
        PointerObservable::Proj1,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            PointerObservable::SigmaPlus => "sigma_plus",
            PointerObservable::SigmaR => "sigma_R",
            PointerObservable::SigmaX => "sigma_x",
            PointerObservable::SigmaY => "sigma_y",
            PointerObservable::Proj1 => "proj_1",
        }
    }

    /// Matrix in the `{|0>, |1>}` basis. The `sigma_plus` and `sigma_R`
    /// matrices are built from their defining projectors.
    pub fn matrix(&self) -> Matrix2 {
        let z = Complex64::new(0.0, 0.0);
        let one = Complex64::new(1.0, 0.0);
        let i = Complex64::new(0.0, 1.0);
        match self {
            PointerObservable::SigmaPlus => outer_difference(PointerState::plus(), PointerState::minus()),
            PointerObservable::SigmaR => outer_difference(PointerState::right(), PointerState::left()),
            PointerObservable::SigmaX => [[z, one], [one, z]],
            PointerObservable::SigmaY => [[z, -i], [i, z]],
            PointerObservable::Proj1 => [[z, z], [z, one]],
        }
    }

    /// Two-outcome +-1 observable (as opposed to the 0/1 projector).
    pub fn is_dichotomic(&self) -> bool {
        !matches!(self, PointerObservable::Proj1)
    }

    fn stream_id(&self) -> u64 {
        match self {
            PointerObservable::SigmaPlus => 0,
            PointerObservable::SigmaR => 1,
            PointerObservable::SigmaX => 2,
            PointerObservable::SigmaY => 3,
            PointerObservable::Proj1 => 4,
        }
    }
}

impl fmt::Display for PointerObservable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PointerObservable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PointerObservable::ALL
            .into_iter()
            .find(|o| o.as_str() == s)
            .ok_or_else(|| Error::Parse {
                path: "observable".into(),
                msg: format!("unknown observable `{s}`"),
            })
    }
}

/// `<p|O|p>` without normalizing `p`.
pub fn expectation(p: &PointerState, obs: PointerObservable) -> f64 {
    let cross = p.c0.conj() * p.c1;
    match obs {
        PointerObservable::SigmaPlus | PointerObservable::SigmaX => 2.0 * cross.re,
        PointerObservable::SigmaR | PointerObservable::SigmaY => 2.0 * cross.im,
        PointerObservable::Proj1 => p.c1.norm_sqr(),
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountRecord {
    pub observable: PointerObservable,
    pub n_total: u64,
    /// Count of +1 outcomes (of outcome 1 for `proj_1`).
    pub n_plus: u64,
    pub seed: u64,
}

impl CountRecord {
    pub fn estimate(&self) -> f64 {
        let (n, k) = (self.n_total as f64, self.n_plus as f64);
        if self.observable.is_dichotomic() {
            (2.0 * k - n) / n
        } else {
            k / n
        }
    }
}

/// Mixes a master seed with a substream label (SplitMix64 finalizer).
pub fn derive_seed(master: u64, pixel_index: u64, observable: PointerObservable) -> u64 {
    let mut z = master
        ^ pixel_index.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (observable.stream_id() + 1).wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Simulates `n` single-photon readouts of `obs` on the normalized pointer.
pub fn sample_expectation(p: &PointerState, obs: PointerObservable, n: u64, seed: u64) -> Result<(f64, CountRecord)> {
    if n == 0 {
        return Err(Error::ZeroSamples);
    }
    let p = p.to_normalized()?;
    let mean = expectation(&p, obs);
    let prob = if obs.is_dichotomic() { (1.0 + mean) / 2.0 } else { mean }.clamp(0.0, 1.0);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_plus = Binomial::new(n, prob)
        .expect("probability clamped to [0, 1]")
        .sample(&mut rng);
    let record = CountRecord {
        observable: obs,
        n_total: n,
        n_plus,
        seed,
    };
    Ok((record.estimate(), record))
}

#[derive(Debug, Serialize)]
struct CountRow<'a> {
    pixel_x: usize,
    pixel_y: usize,
    observable: &'a str,
    n_total: u64,
    n_plus: u64,
    seed: u64,
}

pub fn write_count_records(path: impl AsRef<Path>, records: &[(Pixel, CountRecord)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref())?;
    for ((x, y), r) in records {
        w.serialize(CountRow {
            pixel_x: *x,
            pixel_y: *y,
            observable: r.observable.as_str(),
            n_total: r.n_total,
            n_plus: r.n_plus,
            seed: r.seed,
        })?;
    }
    w.flush().map_err(|e| Error::io(path.as_ref(), e))?;
    Ok(())
}

pub fn read_count_records(path: impl AsRef<Path>) -> Result<Vec<(Pixel, CountRecord)>> {
    #[derive(Deserialize)]
    struct Row {
        pixel_x: usize,
        pixel_y: usize,
        observable: String,
        n_total: u64,
        n_plus: u64,
        seed: u64,
    }
    let mut r = csv::Reader::from_path(path.as_ref())?;
    let mut out = Vec::new();
    for row in r.deserialize::<Row>() {
        let row = row?;
        out.push((
            (row.pixel_x, row.pixel_y),
            CountRecord {
                observable: row.observable.parse()?,
                n_total: row.n_total,
                n_plus: row.n_plus,
                seed: row.seed,
            },
        ));
    }
    Ok(out)
}

/// System state for generalized measurements.
#[derive(Clone, Debug, PartialEq)]
pub enum QuantumState {
    Pure(DVector<Complex64>),
    Mixed(DMatrix<Complex64>),
}

impl QuantumState {
    pub fn dim(&self) -> usize {
        match self {
            QuantumState::Pure(v) => v.len(),
            QuantumState::Mixed(m) => m.nrows(),
        }
    }

    pub fn density(&self) -> DMatrix<Complex64> {
        match self {
            QuantumState::Pure(v) => v * v.adjoint(),
            QuantumState::Mixed(m) => m.clone(),
        }
    }
}

fn check_kraus(dim: usize, kraus: &[DMatrix<Complex64>]) -> Result<()> {
    if kraus.is_empty() {
        return Err(Error::IncompleteKraus(1.0));
    }
    let mut sum = DMatrix::<Complex64>::zeros(dim, dim);
    for m in kraus {
        if m.nrows() != dim || m.ncols() != dim {
            return Err(Error::Dimension(format!(
                "kraus operator is {}x{}, state dimension is {dim}",
                m.nrows(),
                m.ncols()
            )));
        }
        sum += m.adjoint() * m;
    }
    let dev = (sum - DMatrix::<Complex64>::identity(dim, dim))
        .iter()
        .map(|v| v.norm())
        .fold(0.0, f64::max);
    if dev > 1e-10 {
        return Err(Error::IncompleteKraus(dev));
    }
    Ok(())
}

/// Outcome probabilities `P_k = Tr(M_k^dag M_k rho)` for every Kraus operator.
pub fn outcome_probabilities(state: &QuantumState, kraus: &[DMatrix<Complex64>]) -> Result<Vec<f64>> {
    check_kraus(state.dim(), kraus)?;
    let rho = state.density();
    Ok(kraus.iter().map(|m| (m * &rho * m.adjoint()).trace().re).collect())
}

/// Applies outcome `k` of a generalized measurement: returns the normalized
/// post-measurement state `M_k rho M_k^dag / P_k` together with `P_k`.
pub fn povm_update(state: &QuantumState, kraus: &[DMatrix<Complex64>], k: usize) -> Result<(QuantumState, f64)> {
    check_kraus(state.dim(), kraus)?;
    let m = kraus
        .get(k)
        .ok_or_else(|| Error::Dimension(format!("outcome {k} out of {} operators", kraus.len())))?;
    match state {
        QuantumState::Pure(v) => {
            let out = m * v;
            let prob = out.norm_squared();
            if prob <= 0.0 {
                return Err(Error::ZeroProbability(k));
            }
            Ok((QuantumState::Pure(out / Complex64::new(prob.sqrt(), 0.0)), prob))
        }
        QuantumState::Mixed(rho) => {
            let out = m * rho * m.adjoint();
            let prob = out.trace().re;
            if prob <= 0.0 {
                return Err(Error::ZeroProbability(k));
            }
            Ok((QuantumState::Mixed(out / Complex64::new(prob, 0.0)), prob))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn named_observables_equal_paulis() {
        let sp = PointerObservable::SigmaPlus.matrix();
        let sx = PointerObservable::SigmaX.matrix();
        let sr = PointerObservable::SigmaR.matrix();
        let sy = PointerObservable::SigmaY.matrix();
        for r in 0..2 {
            for col in 0..2 {
                assert!((sp[r][col] - sx[r][col]).norm() < 1e-15);
                assert!((sr[r][col] - sy[r][col]).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn closed_form_matches_matrix_sandwich() {
        let p = PointerState::unnormalized(c(0.3, -0.2), c(-0.7, 0.4));
        for obs in PointerObservable::ALL {
            let m = obs.matrix();
            let v = [p.c0, p.c1];
            let mut acc = c(0.0, 0.0);
            for r in 0..2 {
                for col in 0..2 {
                    acc += v[r].conj() * m[r][col] * v[col];
                }
            }
            assert!((acc.re - expectation(&p, obs)).abs() < 1e-15, "{obs}");
            assert!(acc.im.abs() < 1e-15);
        }
    }

    #[test]
    fn expectation_examples() {
        assert_eq!(expectation(&PointerState::zero(), PointerObservable::SigmaPlus), 0.0);
        assert!((expectation(&PointerState::plus(), PointerObservable::SigmaPlus) - 1.0).abs() < 1e-15);
        assert!((expectation(&PointerState::right(), PointerObservable::SigmaR) - 1.0).abs() < 1e-15);
        let raw = PointerState::unnormalized(c(2.0, 0.0), c(2.0, 0.0));
        assert_eq!(expectation(&raw, PointerObservable::SigmaX), 8.0);
    }

    #[test]
    fn eigenstate_sampling_is_exact() {
        for n in [1, 7, 10_000] {
            let (est, rec) = sample_expectation(&PointerState::plus(), PointerObservable::SigmaPlus, n, 3).unwrap();
            assert_eq!(est, 1.0);
            assert_eq!(rec.n_plus, n);
        }
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let p = PointerState::unnormalized(c(0.2, 0.1), c(0.5, -0.3));
        let a = sample_expectation(&p, PointerObservable::SigmaR, 5000, 42).unwrap();
        let b = sample_expectation(&p, PointerObservable::SigmaR, 5000, 42).unwrap();
        assert_eq!(a, b);
        let other = sample_expectation(&p, PointerObservable::SigmaR, 5000, 43).unwrap();
        assert_ne!(a.1, other.1);
    }

    #[test]
    fn zero_samples_rejected() {
        assert!(matches!(
            sample_expectation(&PointerState::zero(), PointerObservable::SigmaX, 0, 1),
            Err(Error::ZeroSamples)
        ));
    }

    #[test]
    fn unbiased_pointer_stays_within_five_sigma() {
        // |0> under sigma_plus: mean 0, sd 1/sqrt(n)
        let n = 10_000;
        let bound = 5.0 / (n as f64).sqrt();
        let trials = 2000;
        let inside = (0..trials)
            .filter(|&s| {
                let (est, _) = sample_expectation(&PointerState::zero(), PointerObservable::SigmaPlus, n, s).unwrap();
                est.abs() <= bound
            })
            .count();
        assert!(inside as f64 / trials as f64 >= 0.999);
    }

    #[test]
    fn grand_mean_is_unbiased() {
        let p = PointerState::normalized(c(0.8, 0.1), c(0.3, -0.5)).unwrap();
        for obs in PointerObservable::ALL {
            let exact = expectation(&p, obs);
            let n = 10_000u64;
            let estimates: Vec<f64> = (0..100)
                .map(|s| sample_expectation(&p, obs, n, derive_seed(9, s, obs)).unwrap().0)
                .collect();
            let mean = estimates.iter().sum::<f64>() / 100.0;
            let var = estimates.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / 99.0;
            let se = (var / 100.0).sqrt();
            assert!((mean - exact).abs() <= 3.0 * se, "{obs}: {mean} vs {exact} (se {se})");
        }
    }

    #[test]
    fn derived_seeds_differ_per_label() {
        let a = derive_seed(1, 0, PointerObservable::SigmaX);
        assert_ne!(a, derive_seed(1, 1, PointerObservable::SigmaX));
        assert_ne!(a, derive_seed(1, 0, PointerObservable::SigmaY));
        assert_ne!(a, derive_seed(2, 0, PointerObservable::SigmaX));
    }

    #[test]
    fn count_records_csv_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("counts.csv");
        let (_, rec) = sample_expectation(&PointerState::plus(), PointerObservable::Proj1, 100, 5).unwrap();
        write_count_records(&path, &[((3, 4), rec.clone())]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("pixel_x,pixel_y,observable,n_total,n_plus,seed\n"));
        assert_eq!(read_count_records(&path).unwrap(), vec![((3, 4), rec)]);
    }

    fn dm(rows: usize, data: &[Complex64]) -> DMatrix<Complex64> {
        DMatrix::from_row_slice(rows, rows, data)
    }

    #[test]
    fn projective_kraus_gives_born_rule() {
        let psi = DVector::from_vec(vec![c(0.6, 0.0), c(0.0, 0.8)]);
        let p0 = dm(2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
        let p1 = dm(2, &[c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]);
        let kraus = [p0, p1];
        let (post, prob) = povm_update(&QuantumState::Pure(psi.clone()), &kraus, 1).unwrap();
        assert!((prob - 0.64).abs() < 1e-15);
        match post {
            QuantumState::Pure(v) => assert!((v[1] - c(0.0, 1.0)).norm() < 1e-15),
            _ => unreachable!(),
        }
        let probs = outcome_probabilities(&QuantumState::Pure(psi), &kraus).unwrap();
        assert!((probs[0] - 0.36).abs() < 1e-15);
    }

    #[test]
    fn identity_kraus_leaves_state() {
        let psi = DVector::from_vec(vec![c(0.6, 0.0), c(0.0, 0.8)]);
        let kraus = [DMatrix::identity(2, 2)];
        let (post, prob) = povm_update(&QuantumState::Pure(psi.clone()), &kraus, 0).unwrap();
        assert_eq!(prob, 1.0);
        assert_eq!(post, QuantumState::Pure(psi));
    }

    #[test]
    fn amplitude_damping_decay_probability() {
        let gamma: f64 = 0.3;
        let k0 = dm(
            2,
            &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c((1.0 - gamma).sqrt(), 0.0)],
        );
        let k1 = dm(2, &[c(0.0, 0.0), c(gamma.sqrt(), 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
        let rho = dm(2, &[c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]);
        let (post, prob) = povm_update(&QuantumState::Mixed(rho), &[k0, k1], 1).unwrap();
        // hand algebra: K1 |1><1| K1^dag = gamma |0><0|
        assert!((prob - 0.3).abs() < 1e-15);
        let d = post.density();
        assert!((d[(0, 0)] - c(1.0, 0.0)).norm() < 1e-15);
        assert!(d[(1, 1)].norm() < 1e-15);
    }

    #[test]
    fn kraus_errors() {
        let psi = QuantumState::Pure(DVector::from_vec(vec![c(1.0, 0.0), c(0.0, 0.0)]));
        let half = DMatrix::<Complex64>::identity(2, 2) * c(0.5, 0.0);
        assert!(matches!(povm_update(&psi, &[half], 0), Err(Error::IncompleteKraus(_))));
        let p1 = dm(2, &[c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]);
        let p0 = dm(2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
        assert!(matches!(
            povm_update(&psi, &[p0, p1], 1),
            Err(Error::ZeroProbability(1))
        ));
    }

    /// Random complete Kraus set: columns of a random isometry split into blocks.
    fn random_kraus(dim: usize, count: usize, vals: &[f64]) -> Vec<DMatrix<Complex64>> {
        let rows = dim * count;
        let a = DMatrix::from_fn(rows, dim, |r, col| {
            let i = 2 * (r * dim + col);
            c(vals[i % vals.len()], vals[(i + 1) % vals.len()])
        });
        let q = a.qr().q();
        (0..count).map(|k| q.rows(k * dim, dim).into_owned()).collect()
    }

    proptest! {
        #[test]
        fn bloch_vector_inside_unit_ball(a in (-1.0f64..1.0, -1.0f64..1.0), b in (-1.0f64..1.0, -1.0f64..1.0)) {
            prop_assume!(a.0.abs() + a.1.abs() + b.0.abs() + b.1.abs() > 1e-3);
            let p = PointerState::normalized(c(a.0, a.1), c(b.0, b.1)).unwrap();
            let x = expectation(&p, PointerObservable::SigmaX);
            let y = expectation(&p, PointerObservable::SigmaY);
            let z = p.c0.norm_sqr() - p.c1.norm_sqr();
            prop_assert!(x * x + y * y + z * z <= 1.0 + 1e-12);
        }

        #[test]
        fn kraus_probabilities_sum_to_one(
            dim in 2usize..5,
            count in 1usize..4,
            vals in proptest::collection::vec(-1.0f64..1.0, 64),
            psi in proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 4),
        ) {
            let kraus = random_kraus(dim, count, &vals);
            let v = DVector::from_iterator(dim, psi.iter().take(dim).map(|&(r, i)| c(r, i)));
            prop_assume!(v.norm() > 1e-3);
            let v = v.clone() / c(v.norm(), 0.0);
            let probs = outcome_probabilities(&QuantumState::Pure(v), &kraus).unwrap();
            prop_assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        }
    }
}
