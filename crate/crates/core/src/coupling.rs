//! System-pointer couplings `exp(-i theta Pi (x) sigma_y)`, post-selection of
//! the system, and a definitional weak-value oracle.

use std::f64::consts::FRAC_PI_2;

use num_complex::Complex64;
use rustfft::{FftDirection, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pointer::PointerState;
use crate::wavefield::{
    momentum_amplitude, to_momentum, to_position, zero_momentum_amplitude, Domain, Pixel, WaveField,
};

/// System amplitudes paired with pointer `|0>` and `|1>`.
#[derive(Clone, Debug, PartialEq)]
pub struct JointState {
    pub psi0: WaveField,
    pub psi1: WaveField,
}

impl JointState {
    pub fn new(psi0: WaveField, psi1: WaveField) -> Result<Self> {
        psi0.require_compatible(&psi1)?;
        Ok(Self { psi0, psi1 })
    }

    pub fn norm_sqr(&self) -> f64 {
        self.psi0.norm_sqr() + self.psi1.norm_sqr()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CouplingTarget {
    PositionPixel(Pixel),
    MomentumZero,
    MomentumBin(Pixel),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CouplingParams {
    pub theta: f64,
    pub target: CouplingTarget,
}

pub(crate) fn check_theta(theta: f64) -> Result<()> {
    // theta = 0 is admitted as the identity coupling
    if (0.0..=FRAC_PI_2 + 1e-15).contains(&theta) {
        Ok(())
    } else {
        Err(Error::InvalidTheta(theta))
    }
}

/// Rotates the pointer of one basis component: `|0> -> cos|0> + sin|1>`.
fn rotate_component(psi: &WaveField, index: usize, theta: f64) -> JointState {
    let mut psi0 = psi.clone();
    let mut psi1 = WaveField::zeros(*psi.grid(), psi.domain());
    let a = psi.amplitudes()[index];
    psi0.amplitudes_mut()[index] = a * theta.cos();
    psi1.amplitudes_mut()[index] = a * theta.sin();
    JointState { psi0, psi1 }
}

/// Applies `exp(-i theta |x><x| (x) sigma_y)` to `psi (x) |0>`.
pub fn couple_position(field: &WaveField, pixel: Pixel, theta: f64) -> Result<JointState> {
    field.require(Domain::Position)?;
    field.grid().check(pixel)?;
    check_theta(theta)?;
    Ok(rotate_component(field, field.grid().index(pixel), theta))
}

/// Applies `exp(-i theta |p><p| (x) sigma_y)` to `psi (x) |0>`; the result is
/// returned in the position domain.
pub fn couple_momentum(field: &WaveField, bin: Pixel, theta: f64) -> Result<JointState> {
    field.require(Domain::Position)?;
    field.grid().check(bin)?;
    check_theta(theta)?;
    let spectrum = to_momentum(field)?;
    let rotated = rotate_component(&spectrum, field.grid().index(bin), theta);
    Ok(JointState {
        psi0: to_position(&rotated.psi0)?,
        psi1: to_position(&rotated.psi1)?,
    })
}

pub fn couple(field: &WaveField, params: &CouplingParams) -> Result<JointState> {
    match params.target {
        CouplingTarget::PositionPixel(p) => couple_position(field, p, params.theta),
        CouplingTarget::MomentumZero => couple_momentum(field, field.grid().center(), params.theta),
        CouplingTarget::MomentumBin(b) => couple_momentum(field, b, params.theta),
    }
}

fn finish_postselection(c0: Complex64, c1: Complex64) -> Result<(PointerState, f64)> {
    let p = PointerState::unnormalized(c0, c1);
    let success = p.norm_sqr();
    if success == 0.0 {
        return Err(Error::DivergentPostSelection);
    }
    Ok((p, success))
}

/// Projects the system onto `|p=0>`; returns the unnormalized pointer and the
/// success probability.
pub fn postselect_momentum_zero(j: &JointState) -> Result<(PointerState, f64)> {
    finish_postselection(zero_momentum_amplitude(&j.psi0)?, zero_momentum_amplitude(&j.psi1)?)
}

/// Projects the system onto momentum bin `bin`.
pub fn postselect_momentum(j: &JointState, bin: Pixel) -> Result<(PointerState, f64)> {
    finish_postselection(momentum_amplitude(&j.psi0, bin)?, momentum_amplitude(&j.psi1, bin)?)
}

/// Projects the system onto position pixel `pixel`.
pub fn postselect_position(j: &JointState, pixel: Pixel) -> Result<(PointerState, f64)> {
    j.psi0.require(Domain::Position)?;
    j.psi0.grid().check(pixel)?;
    finish_postselection(j.psi0.at(pixel), j.psi1.at(pixel))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Projector {
    Identity,
    Position(Pixel),
    Momentum(Pixel),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisState {
    Position(Pixel),
    Momentum(Pixel),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeakValue {
    /// `None` when the pre- and post-selected states are orthogonal.
    pub value: Option<Complex64>,
    pub projector: Projector,
    pub postselect: BasisState,
}

impl WeakValue {
    pub fn is_divergent(&self) -> bool {
        self.value.is_none()
    }
}

/// `<b|psi>` for a basis state, by explicit summation.
fn basis_overlap(psi: &WaveField, b: BasisState) -> Result<Complex64> {
    match b {
        BasisState::Position(x) => {
            psi.grid().check(x)?;
            Ok(psi.at(x))
        }
        BasisState::Momentum(k) => momentum_amplitude(psi, k),
    }
}

/// `<f|a>` between two basis states.
fn basis_bracket(psi: &WaveField, f: BasisState, a: BasisState) -> Complex64 {
    let g = psi.grid();
    match (f, a) {
        (BasisState::Position(x), BasisState::Position(y)) | (BasisState::Momentum(x), BasisState::Momentum(y)) => {
            if x == y {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        }
        (BasisState::Position(x), BasisState::Momentum(k)) => g.plane_wave(x, k),
        (BasisState::Momentum(k), BasisState::Position(x)) => g.plane_wave(x, k).conj(),
    }
}

/// `<f|A|psi> / <f|psi>` from its definition.
pub fn weak_value_oracle(projector: Projector, psi: &WaveField, post: BasisState) -> Result<WeakValue> {
    psi.require(Domain::Position)?;
    let overlap = basis_overlap(psi, post)?;
    let numerator = match projector {
        Projector::Identity => overlap,
        Projector::Position(x) => {
            basis_bracket(psi, post, BasisState::Position(x)) * basis_overlap(psi, BasisState::Position(x))?
        }
        Projector::Momentum(k) => {
            basis_bracket(psi, post, BasisState::Momentum(k)) * basis_overlap(psi, BasisState::Momentum(k))?
        }
    };
    let divergent = overlap.norm() <= 1e-15 * psi.norm();
    Ok(WeakValue {
        value: (!divergent).then(|| numerator / overlap),
        projector,
        postselect: post,
    })
}

/// Discrete system with a diagonal observable, for the continuous-pointer
/// demonstration.
#[derive(Clone, Debug, PartialEq)]
pub struct PointerShiftSetup {
    pub pre: Vec<Complex64>,
    pub post: Vec<Complex64>,
    /// Eigenvalue of the observable on each basis state.
    pub observable: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PointerShift {
    /// Mean position of the post-selected pointer.
    pub measured: f64,
    /// `g0 * Re <A>_w`.
    pub predicted: f64,
    pub weak_value: Complex64,
    pub success_probability: f64,
    /// Whether `g0 * max(|<A>_w|, max|a|)` stayed below a tenth of the pointer width.
    pub weak_regime: bool,
}

/// Couples a Gaussian position pointer to a discrete system through
/// `exp(-i g0 A (x) P)`, post-selects the system and reads the pointer mean.
pub fn weak_pointer_shift_demo(setup: &PointerShiftSetup, g0: f64, pointer_sigma: f64) -> Result<PointerShift> {
    let d = setup.pre.len();
    if d == 0 || setup.post.len() != d || setup.observable.len() != d {
        return Err(Error::Dimension(
            "pre, post and observable must have equal, nonzero length".into(),
        ));
    }
    if pointer_sigma.is_nan() || pointer_sigma <= 0.0 || !g0.is_finite() {
        return Err(Error::InvalidMode(
            "pointer width must be positive and g0 finite".into(),
        ));
    }

    let overlap: Complex64 = setup.post.iter().zip(&setup.pre).map(|(f, p)| f.conj() * p).sum();
    let numerator: Complex64 = setup
        .post
        .iter()
        .zip(&setup.pre)
        .zip(&setup.observable)
        .map(|((f, p), a)| f.conj() * p * *a)
        .sum();
    let pre_norm: f64 = setup.pre.iter().map(|p| p.norm_sqr()).sum::<f64>().sqrt();
    if overlap.norm() <= 1e-15 * pre_norm {
        return Err(Error::DivergentPostSelection);
    }
    let weak_value = numerator / overlap;

    let max_eig = setup.observable.iter().fold(0.0f64, |m, a| m.max(a.abs()));
    let weak_regime = g0.abs() * weak_value.norm().max(max_eig) <= 0.1 * pointer_sigma;
    if !weak_regime {
        log::warn!("coupling g0 = {g0} is outside the weak regime for pointer width {pointer_sigma}");
    }

    // pointer grid wide enough for every eigen-shift plus 12 sigma of tail
    let reach = g0.abs() * max_eig + 12.0 * pointer_sigma;
    let n = 4096usize;
    let dx = 2.0 * reach / n as f64;
    let xs: Vec<f64> = (0..n).map(|i| (i as f64 - (n / 2) as f64) * dx).collect();
    let initial: Vec<Complex64> = xs
        .iter()
        .map(|x| Complex64::new((-x * x / (4.0 * pointer_sigma * pointer_sigma)).exp(), 0.0))
        .collect();

    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft(n, FftDirection::Forward);
    let inv = planner.plan_fft(n, FftDirection::Inverse);
    let mut spectrum = initial;
    fwd.process(&mut spectrum);
    let momenta: Vec<f64> = (0..n)
        .map(|m| {
            let k = if m < n / 2 { m as i64 } else { m as i64 - n as i64 };
            2.0 * std::f64::consts::PI * k as f64 / (n as f64 * dx)
        })
        .collect();

    // group basis states by eigenvalue: each group shifts the pointer rigidly
    let mut groups: Vec<(f64, Complex64)> = Vec::new();
    for ((f, p), &a) in setup.post.iter().zip(&setup.pre).zip(&setup.observable) {
        let w = f.conj() * p;
        match groups.iter_mut().find(|(e, _)| *e == a) {
            Some((_, acc)) => *acc += w,
            None => groups.push((a, w)),
        }
    }

    let mut final_spectrum = vec![Complex64::new(0.0, 0.0); n];
    for (a, weight) in groups {
        for (out, (s, p)) in final_spectrum.iter_mut().zip(spectrum.iter().zip(&momenta)) {
            *out += weight * s * Complex64::from_polar(1.0, -g0 * a * p);
        }
    }
    inv.process(&mut final_spectrum);

    let (mut mass, mut first) = (0.0, 0.0);
    for (v, x) in final_spectrum.iter().zip(&xs) {
        let p = v.norm_sqr();
        mass += p;
        first += p * x;
    }
    let initial_mass: f64 = spectrum.iter().map(|s| s.norm_sqr()).sum::<f64>();
    Ok(PointerShift {
        measured: first / mass,
        predicted: g0 * weak_value.re,
        weak_value,
        // Parseval: unnormalized inverse FFT scales mass by n relative to the spectrum
        success_probability: mass / (n as f64 * initial_mass) / (pre_norm * pre_norm),
        weak_regime,
    })
}
