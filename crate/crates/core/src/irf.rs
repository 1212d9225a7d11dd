//! Gaussian instrument response and its discrete convolution.

use crate::error::{invalid, Error, Result};
use crate::g2::G2Curve;
use crate::scalar::Real;
use crate::units::gaussian_sigma_from_fwhm;

/// Kernel half-width in standard deviations.
const KERNEL_HALF_WIDTH_SIGMAS: f64 = 6.0;

/// Timing response of the detection chain: a Gaussian of the given FWHM (ns).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Irf<T> {
    pub fwhm: T,
}

impl<T: Real> Irf<T> {
    pub fn new(fwhm: T) -> Result<Self> {
        if !(fwhm > T::zero()) || !fwhm.is_finite() {
            return Err(invalid(format!("IRF FWHM must be > 0, got {fwhm}")));
        }
        Ok(Self { fwhm })
    }

    pub fn sigma(&self) -> T {
        gaussian_sigma_from_fwhm(self.fwhm)
    }

    /// Largest grid step accepted by [`convolve_irf`].
    pub fn max_step(&self) -> T {
        self.fwhm / T::lit(5.0)
    }
}

/// Normalised Gaussian taps for `step`, index 0 at offset `-half`.
pub fn gaussian_taps<T: Real>(sigma: T, step: T) -> Vec<T> {
    let half = (T::lit(KERNEL_HALF_WIDTH_SIGMAS) * sigma / step)
        .ceil()
        .to_usize()
        .unwrap_or(0);
    let mut taps: Vec<T> = (0..=2 * half)
        .map(|k| {
            let x = step * (T::from_usize_lossy(k) - T::from_usize_lossy(half));
            (-(x * x) / (T::lit(2.0) * sigma * sigma)).exp()
        })
        .collect();
    let sum: T = taps.iter().copied().sum();
    for t in &mut taps {
        *t /= sum;
    }
    taps
}

/// Convolves uniformly sampled `values` with normalised `taps`. Taps falling
/// outside the grid are dropped and the remainder renormalised, so constant
/// input stays constant up to the edges.
pub fn convolve_taps<T: Real>(values: &[T], taps: &[T]) -> Vec<T> {
    let n = values.len();
    let half = taps.len() / 2;
    (0..n)
        .map(|i| {
            let mut acc = T::zero();
            let mut wsum = T::zero();
            for (k, &w) in taps.iter().enumerate() {
                let j = i as isize + k as isize - half as isize;
                if j >= 0 && (j as usize) < n {
                    acc += w * values[j as usize];
                    wsum += w;
                }
            }
            acc / wsum
        })
        .collect()
}

/// Error propagation through [`convolve_taps`] assuming independent points.
fn convolve_errors<T: Real>(errors: &[T], taps: &[T]) -> Vec<T> {
    let n = errors.len();
    let half = taps.len() / 2;
    (0..n)
        .map(|i| {
            let mut acc = T::zero();
            let mut wsum = T::zero();
            for (k, &w) in taps.iter().enumerate() {
                let j = i as isize + k as isize - half as isize;
                if j >= 0 && (j as usize) < n {
                    acc += w * w * errors[j as usize] * errors[j as usize];
                    wsum += w;
                }
            }
            acc.sqrt() / wsum
        })
        .collect()
}

/// Convolves a uniformly sampled curve with the IRF.
pub fn convolve_irf<T: Real>(curve: &G2Curve<T>, irf: &Irf<T>) -> Result<G2Curve<T>> {
    let step = match curve.uniform_step() {
        Some(s) => s,
        None if curve.len() == 1 => return Ok(curve.clone()),
        None => return Err(invalid("IRF convolution needs a uniform grid")),
    };
    // small slack so that a step of exactly FWHM/5 is accepted
    if step > irf.max_step() * T::lit(1.0 + 1e-9) {
        return Err(Error::GridTooCoarse {
            step: step.to_f64_lossy(),
            limit: irf.max_step().to_f64_lossy(),
        });
    }
    let taps = gaussian_taps(irf.sigma(), step);
    let values = convolve_taps(curve.values(), &taps);
    let delays = curve.delays().to_vec();
    match curve.errors() {
        Some(e) => G2Curve::with_errors(delays, values, convolve_errors(e, &taps)),
        None => G2Curve::new(delays, values),
    }
}
