//! Complex 2D wavefunctions sampled on a physical grid.
//!
//! Pixels are stored row-major (`iy * nx + ix`). Coordinates are centered:
//! pixel `j` sits at `(j - n/2) * pitch`. The momentum representation is the
//! unitary DFT with the zero-frequency bin at index `(nx/2, ny/2)`, so that
//! `<x|p=0> = 1/sqrt(d)` with `d = nx * ny`.

use std::f64::consts::PI;
use std::fmt;
use std::path::PathBuf;

use num_complex::Complex64;
use rustfft::FftDirection;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft;

pub type Pixel = (usize, usize);

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid2D {
    nx: usize,
    ny: usize,
    dx: f64,
    dy: f64,
}

pub fn make_grid(nx: usize, ny: usize, dx: f64, dy: f64) -> Result<Grid2D> {
    Grid2D::new(nx, ny, dx, dy)
}

impl Grid2D {
    pub fn new(nx: usize, ny: usize, dx: f64, dy: f64) -> Result<Self> {
        if nx < 2 || ny < 2 {
            return Err(Error::InvalidGrid(format!("pixel counts must be >= 2, got {nx}x{ny}")));
        }
        if !(dx > 0.0 && dx.is_finite() && dy > 0.0 && dy.is_finite()) {
            return Err(Error::InvalidGrid(format!(
                "pixel pitch must be positive, got ({dx}, {dy})"
            )));
        }
        Ok(Self { nx, ny, dx, dy })
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn dy(&self) -> f64 {
        self.dy
    }

    /// Hilbert-space dimension `nx * ny`.
    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Pixel holding the coordinate origin, which is also the p=0 bin.
    pub fn center(&self) -> Pixel {
        (self.nx / 2, self.ny / 2)
    }

    pub fn x(&self, ix: usize) -> f64 {
        (ix as f64 - (self.nx / 2) as f64) * self.dx
    }

    pub fn y(&self, iy: usize) -> f64 {
        (iy as f64 - (self.ny / 2) as f64) * self.dy
    }

    pub fn index(&self, (ix, iy): Pixel) -> usize {
        iy * self.nx + ix
    }

    pub fn pixel(&self, index: usize) -> Pixel {
        (index % self.nx, index / self.nx)
    }

    pub fn contains(&self, (ix, iy): Pixel) -> bool {
        ix < self.nx && iy < self.ny
    }

    pub(crate) fn check(&self, pixel: Pixel) -> Result<()> {
        if self.contains(pixel) {
            Ok(())
        } else {
            Err(Error::OffGrid(pixel.0 as i64, pixel.1 as i64))
        }
    }

    /// Signed coordinate of a pixel or bin in units of samples.
    pub fn signed(&self, (ix, iy): Pixel) -> (i64, i64) {
        (ix as i64 - (self.nx / 2) as i64, iy as i64 - (self.ny / 2) as i64)
    }

    /// Largest distance from the origin to a grid sample, per axis.
    pub fn half_extent(&self) -> (f64, f64) {
        ((self.nx / 2) as f64 * self.dx, (self.ny / 2) as f64 * self.dy)
    }

    /// `<x|p>` for position pixel `pixel` and momentum bin `bin`.
    pub fn plane_wave(&self, pixel: Pixel, bin: Pixel) -> Complex64 {
        let (jx, jy) = self.signed(pixel);
        let (kx, ky) = self.signed(bin);
        let (nx, ny) = (self.nx as i64, self.ny as i64);
        // reduce the integer products first so the phase stays exact on large grids
        let fx = (kx * jx).rem_euclid(nx) as f64 / nx as f64;
        let fy = (ky * jy).rem_euclid(ny) as f64 / ny as f64;
        Complex64::from_polar(1.0 / (self.len() as f64).sqrt(), 2.0 * PI * (fx + fy))
    }

    pub(crate) fn same_shape(&self, other: &Grid2D) -> bool {
        self.nx == other.nx && self.ny == other.ny
    }
}

impl fmt::Display for Grid2D {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{} @ ({:e}, {:e}) m", self.nx, self.ny, self.dx, self.dy)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    Position,
    Momentum,
}

impl Domain {
    pub fn as_str(&self) -> &'static str {
        match self {
            Domain::Position => "position",
            Domain::Momentum => "momentum",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WaveField {
    grid: Grid2D,
    amplitudes: Vec<Complex64>,
    domain: Domain,
}

impl WaveField {
    pub fn new(grid: Grid2D, amplitudes: Vec<Complex64>, domain: Domain) -> Result<Self> {
        if amplitudes.len() != grid.len() {
            return Err(Error::Dimension(format!(
                "{} amplitudes for a {} grid",
                amplitudes.len(),
                grid
            )));
        }
        if amplitudes.iter().any(|a| !a.re.is_finite() || !a.im.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self {
            grid,
            amplitudes,
            domain,
        })
    }

    pub fn zeros(grid: Grid2D, domain: Domain) -> Self {
        Self {
            grid,
            amplitudes: vec![Complex64::new(0.0, 0.0); grid.len()],
            domain,
        }
    }

    pub(crate) fn from_parts(grid: Grid2D, amplitudes: Vec<Complex64>, domain: Domain) -> Self {
        debug_assert_eq!(amplitudes.len(), grid.len());
        Self {
            grid,
            amplitudes,
            domain,
        }
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn amplitudes_mut(&mut self) -> &mut [Complex64] {
        &mut self.amplitudes
    }

    pub fn into_amplitudes(self) -> Vec<Complex64> {
        self.amplitudes
    }

    pub fn at(&self, pixel: Pixel) -> Complex64 {
        self.amplitudes[self.grid.index(pixel)]
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn scaled(&self, factor: Complex64) -> WaveField {
        let amplitudes = self.amplitudes.iter().map(|a| a * factor).collect();
        WaveField::from_parts(self.grid, amplitudes, self.domain)
    }

    pub fn normalized(&self) -> Result<WaveField> {
        let norm = self.norm();
        if norm == 0.0 {
            return Err(Error::ZeroNorm);
        }
        Ok(self.scaled(Complex64::new(1.0 / norm, 0.0)))
    }

    pub(crate) fn require(&self, domain: Domain) -> Result<()> {
        if self.domain == domain {
            Ok(())
        } else {
            Err(Error::WrongDomain {
                expected: domain.as_str(),
                found: self.domain.as_str(),
            })
        }
    }

    pub(crate) fn require_compatible(&self, other: &WaveField) -> Result<()> {
        if !self.grid.same_shape(&other.grid) {
            return Err(Error::GridMismatch {
                left: self.grid.to_string(),
                right: other.grid.to_string(),
            });
        }
        if self.domain != other.domain {
            return Err(Error::WrongDomain {
                expected: self.domain.as_str(),
                found: other.domain.as_str(),
            });
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeKind {
    Gaussian,
    LaguerreGauss,
    Uniform,
    Delta,
    #[serde(alias = "custom-file")]
    CustomFile,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeSpec {
    pub kind: ModeKind,
    #[serde(default)]
    pub waist: f64,
    #[serde(default)]
    pub l: i32,
    #[serde(default)]
    pub p: u32,
    #[serde(default)]
    pub center: (f64, f64),
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

impl ModeSpec {
    fn base(kind: ModeKind) -> Self {
        Self {
            kind,
            waist: 0.0,
            l: 0,
            p: 0,
            center: (0.0, 0.0),
            path: None,
        }
    }

    pub fn gaussian(waist: f64) -> Self {
        Self {
            waist,
            ..Self::base(ModeKind::Gaussian)
        }
    }

    pub fn laguerre_gauss(waist: f64, l: i32, p: u32) -> Self {
        Self {
            waist,
            l,
            p,
            ..Self::base(ModeKind::LaguerreGauss)
        }
    }

    pub fn uniform() -> Self {
        Self::base(ModeKind::Uniform)
    }

    pub fn delta() -> Self {
        Self::base(ModeKind::Delta)
    }

    pub fn custom_file(path: impl Into<PathBuf>) -> Self {
        Self {
            path: Some(path.into()),
            ..Self::base(ModeKind::CustomFile)
        }
    }

    pub fn with_center(mut self, x: f64, y: f64) -> Self {
        self.center = (x, y);
        self
    }
}

/// Generalized Laguerre polynomial `L_p^alpha(x)` by the three-term recurrence.
fn laguerre(p: u32, alpha: f64, x: f64) -> f64 {
    let mut prev = 1.0;
    if p == 0 {
        return prev;
    }
    let mut cur = 1.0 + alpha - x;
    for n in 1..p {
        let n = n as f64;
        let next = ((2.0 * n + 1.0 + alpha - x) * cur - (n + alpha) * prev) / (n + 1.0);
        prev = cur;
        cur = next;
    }
    cur
}

/// Builds a normalized position-domain mode.
pub fn make_mode(grid: &Grid2D, spec: &ModeSpec) -> Result<WaveField> {
    let needs_waist = matches!(spec.kind, ModeKind::Gaussian | ModeKind::LaguerreGauss);
    if needs_waist {
        if !(spec.waist > 0.0 && spec.waist.is_finite()) {
            return Err(Error::InvalidMode(format!(
                "waist must be positive, got {}",
                spec.waist
            )));
        }
        let min_waist = 2.0 * grid.dx.max(grid.dy);
        if spec.waist < min_waist {
            return Err(Error::InvalidMode(format!(
                "waist {:e} m is undersampled (minimum {:e} m)",
                spec.waist, min_waist
            )));
        }
    }
    if !(spec.center.0.is_finite() && spec.center.1.is_finite()) {
        return Err(Error::InvalidMode("center must be finite".into()));
    }

    let (cx, cy) = spec.center;
    let w2 = spec.waist * spec.waist;
    let zero = Complex64::new(0.0, 0.0);
    let mut amps = vec![zero; grid.len()];

    match spec.kind {
        ModeKind::Gaussian => {
            for (i, a) in amps.iter_mut().enumerate() {
                let (ix, iy) = grid.pixel(i);
                let (x, y) = (grid.x(ix) - cx, grid.y(iy) - cy);
                *a = Complex64::new((-(x * x + y * y) / w2).exp(), 0.0);
            }
        }
        ModeKind::LaguerreGauss => {
            let order = spec.l.unsigned_abs();
            let scale = std::f64::consts::SQRT_2 / spec.waist;
            for (i, a) in amps.iter_mut().enumerate() {
                let (ix, iy) = grid.pixel(i);
                let (x, y) = (grid.x(ix) - cx, grid.y(iy) - cy);
                let r2 = x * x + y * y;
                // (sqrt2 r / w)^|l| e^{i l phi} = (sqrt2 / w)^|l| (x +- i y)^|l|
                let z = Complex64::new(x * scale, y * scale.copysign(spec.l as f64));
                let vortex = z.powu(order);
                let radial = laguerre(spec.p, order as f64, 2.0 * r2 / w2) * (-r2 / w2).exp();
                *a = vortex * radial;
            }
        }
        ModeKind::Uniform => {
            amps.fill(Complex64::new(1.0, 0.0));
        }
        ModeKind::Delta => {
            let fx = cx / grid.dx + (grid.nx / 2) as f64;
            let fy = cy / grid.dy + (grid.ny / 2) as f64;
            let (ix, iy) = (fx.round(), fy.round());
            let on_grid = (fx - ix).abs() < 1e-9
                && (fy - iy).abs() < 1e-9
                && ix >= 0.0
                && iy >= 0.0
                && grid.contains((ix as usize, iy as usize));
            if !on_grid {
                return Err(Error::InvalidMode(format!(
                    "delta center ({cx:e}, {cy:e}) is not a grid pixel"
                )));
            }
            amps[grid.index((ix as usize, iy as usize))] = Complex64::new(1.0, 0.0);
        }
        ModeKind::CustomFile => {
            let path = spec
                .path
                .as_ref()
                .ok_or_else(|| Error::InvalidMode("custom_file mode needs a path".into()))?;
            let field = crate::io::read_field(path)?;
            if !field.grid().same_shape(grid) {
                return Err(Error::GridMismatch {
                    left: grid.to_string(),
                    right: field.grid().to_string(),
                });
            }
            field.require(Domain::Position)?;
            amps = field.into_amplitudes();
        }
    }

    WaveField::new(*grid, amps, Domain::Position)?.normalized()
}

/// `sum conj(a) * b` over pixels.
pub fn inner_product(a: &WaveField, b: &WaveField) -> Result<Complex64> {
    a.require_compatible(b)?;
    Ok(a.amplitudes.iter().zip(&b.amplitudes).map(|(x, y)| x.conj() * y).sum())
}

/// `|<a|b>|^2 / (<a|a><b|b>)`, insensitive to global phase and scale.
pub fn fidelity(a: &WaveField, b: &WaveField) -> Result<f64> {
    let overlap = inner_product(a, b)?;
    let (na, nb) = (a.norm_sqr(), b.norm_sqr());
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok((overlap.norm_sqr() / (na * nb)).min(1.0))
}

pub fn to_momentum(field: &WaveField) -> Result<WaveField> {
    field.require(Domain::Position)?;
    let g = field.grid;
    let amps = fft::centered_unitary(&field.amplitudes, g.nx, g.ny, FftDirection::Forward);
    Ok(WaveField::from_parts(g, amps, Domain::Momentum))
}

pub fn to_position(field: &WaveField) -> Result<WaveField> {
    field.require(Domain::Momentum)?;
    let g = field.grid;
    let amps = fft::centered_unitary(&field.amplitudes, g.nx, g.ny, FftDirection::Inverse);
    Ok(WaveField::from_parts(g, amps, Domain::Position))
}

/// `<p=bin|psi>` by direct summation.
pub fn momentum_amplitude(field: &WaveField, bin: Pixel) -> Result<Complex64> {
    field.require(Domain::Position)?;
    field.grid.check(bin)?;
    let g = &field.grid;
    Ok(field
        .amplitudes
        .iter()
        .enumerate()
        .map(|(i, a)| g.plane_wave(g.pixel(i), bin).conj() * a)
        .sum())
}

/// `<p=0|psi> = sum psi(x) / sqrt(d)`.
pub fn zero_momentum_amplitude(field: &WaveField) -> Result<Complex64> {
    field.require(Domain::Position)?;
    let sum: Complex64 = field.amplitudes.iter().sum();
    Ok(sum / (field.grid.len() as f64).sqrt())
}
