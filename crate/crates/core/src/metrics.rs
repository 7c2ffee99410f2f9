//! Comparison metrics between a reconstruction and a ground-truth field.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::wavefield::WaveField;

fn masked_overlap(a: &WaveField, b: &WaveField, mask: Option<&[bool]>) -> Result<(Complex64, f64, f64)> {
    a.require_compatible(b)?;
    let mut overlap = Complex64::new(0.0, 0.0);
    let (mut na, mut nb) = (0.0, 0.0);
    for (i, (x, y)) in a.amplitudes().iter().zip(b.amplitudes()).enumerate() {
        if mask.is_some_and(|m| !m[i]) {
            continue;
        }
        overlap += x.conj() * y;
        na += x.norm_sqr();
        nb += y.norm_sqr();
    }
    Ok((overlap, na, nb))
}

/// Fidelity restricted to pixels where `mask` is true.
pub fn fidelity_masked(a: &WaveField, b: &WaveField, mask: &[bool]) -> Result<f64> {
    let (overlap, na, nb) = masked_overlap(a, b, Some(mask))?;
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok((overlap.norm_sqr() / (na * nb)).min(1.0))
}

/// Pixels whose truth amplitude exceeds `fraction` of the peak amplitude.
pub fn bright_mask(truth: &WaveField, fraction: f64) -> Vec<bool> {
    let peak = truth.amplitudes().iter().map(|a| a.norm()).fold(0.0, f64::max);
    truth.amplitudes().iter().map(|a| a.norm() > fraction * peak).collect()
}

/// Phase `alpha` maximizing `Re <truth| e^{-i alpha} rec>` over the mask.
pub fn best_global_phase(rec: &WaveField, truth: &WaveField, mask: &[bool]) -> Result<f64> {
    Ok(masked_overlap(truth, rec, Some(mask))?.0.arg())
}

/// RMS of `|rec| - |truth|` over the mask; both fields are normalized first.
pub fn amplitude_rmse(rec: &WaveField, truth: &WaveField, mask: &[bool]) -> Result<f64> {
    let (rec, truth) = (rec.normalized()?, truth.normalized()?);
    rec.require_compatible(&truth)?;
    let mut acc = 0.0;
    let mut n = 0usize;
    for (i, (r, t)) in rec.amplitudes().iter().zip(truth.amplitudes()).enumerate() {
        if mask[i] {
            acc += (r.norm() - t.norm()).powi(2);
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::AllInvalid);
    }
    Ok((acc / n as f64).sqrt())
}

/// RMS of the wrapped phase difference over the mask after removing the
/// best-fit global phase.
pub fn phase_rmse(rec: &WaveField, truth: &WaveField, mask: &[bool]) -> Result<f64> {
    let alpha = best_global_phase(rec, truth, mask)?;
    let rot = Complex64::from_polar(1.0, -alpha);
    let mut acc = 0.0;
    let mut n = 0usize;
    for (i, (r, t)) in rec.amplitudes().iter().zip(truth.amplitudes()).enumerate() {
        if mask[i] {
            let diff = if r.norm() == 0.0 || t.norm() == 0.0 {
                std::f64::consts::PI
            } else {
                (r * rot * t.conj()).arg()
            };
            acc += diff * diff;
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::AllInvalid);
    }
    Ok((acc / n as f64).sqrt())
}
