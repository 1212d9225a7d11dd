//! Spectral peak location by least squares on pseudo-Voigt profiles.

use super::lsq::{levenberg_marquardt, standard_errors, LmOptions};
use super::simplex::Bounds;
use crate::error::{invalid, Error, Result};
use crate::spectro::lineshape::pseudo_voigt;
use crate::spectro::Spectrum;

#[derive(Debug, Clone, PartialEq)]
pub struct PeakEstimate {
    pub center: f64,
    pub center_error: Option<f64>,
    pub fwhm: f64,
    /// Integrated line area.
    pub amplitude: f64,
    /// Lorentzian fraction of the pseudo-Voigt.
    pub eta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PeakWarning {
    /// Two fitted centers closer than the instrument resolution.
    Overlapping { left: usize, right: usize, separation: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeakFit {
    /// Sorted by ascending center.
    pub peaks: Vec<PeakEstimate>,
    pub background: f64,
    pub residual_norm: f64,
    pub warnings: Vec<PeakWarning>,
}

const PER_PEAK: usize = 4;

fn model(x: f64, p: &[f64]) -> f64 {
    let n = (p.len() - 1) / PER_PEAK;
    let mut v = p[p.len() - 1];
    for k in 0..n {
        let q = &p[k * PER_PEAK..(k + 1) * PER_PEAK];
        v += q[3] * pseudo_voigt(x - q[0], q[1], q[2]);
    }
    v
}

/// Width of the region around `k` above half of `v[k]`.
fn half_width(e: &[f64], v: &[f64], k: usize, floor: f64) -> f64 {
    let half = floor + 0.5 * (v[k] - floor);
    let mut l = k;
    while l > 0 && v[l] > half {
        l -= 1;
    }
    let mut r = k;
    while r + 1 < v.len() && v[r] > half {
        r += 1;
    }
    e[r] - e[l]
}

/// Fits `n_peaks` pseudo-Voigt lines plus a constant background. Starting
/// values come from repeatedly taking the largest residual maximum and
/// subtracting a guessed line there.
pub fn fit_spectrum_peaks(spectrum: &Spectrum, n_peaks: usize, instrument_fwhm: f64) -> Result<PeakFit> {
    if n_peaks == 0 {
        return Err(invalid("n_peaks must be >= 1"));
    }
    if !(instrument_fwhm > 0.0) {
        return Err(invalid("instrument FWHM must be > 0"));
    }
    // work relative to the window centre so finite-difference steps stay small
    let origin = 0.5 * (spectrum.energies()[0] + spectrum.energies()[spectrum.len() - 1]);
    let shifted: Vec<f64> = spectrum.energies().iter().map(|v| v - origin).collect();
    let e = shifted.as_slice();
    let y = spectrum.intensity();
    let max_step = e.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    if max_step > instrument_fwhm / 3.0 * (1.0 + 1e-9) {
        return Err(Error::GridTooCoarse {
            step: max_step,
            limit: instrument_fwhm / 3.0,
        });
    }
    let n_par = PER_PEAK * n_peaks + 1;
    if y.len() < 2 * n_par {
        return Err(invalid(format!("{} points cannot constrain {n_peaks} peaks", y.len())));
    }
    let (lo, hi) = (e[0], e[e.len() - 1]);
    let span = hi - lo;
    let top = y.iter().copied().fold(0.0, f64::max);
    if !(top > 0.0) {
        return Err(Error::DegenerateData("spectrum is identically zero".into()));
    }
    let mut sorted = y.to_vec();
    sorted.sort_by(f64::total_cmp);
    let background = sorted[sorted.len() / 10];

    let mut resid: Vec<f64> = y.iter().map(|v| v - background).collect();
    let mut x0 = Vec::with_capacity(n_par);
    for _ in 0..n_peaks {
        let k = (0..resid.len())
            .max_by(|&a, &b| resid[a].total_cmp(&resid[b]))
            .expect("non-empty");
        let height = resid[k].max(1e-12 * top);
        let w = half_width(e, &resid, k, 0.0).clamp(instrument_fwhm, span);
        let eta = 0.5;
        let area = height / pseudo_voigt(0.0, w, eta);
        x0.extend_from_slice(&[e[k], w, eta, area]);
        for (j, r) in resid.iter_mut().enumerate() {
            *r -= area * pseudo_voigt(e[j] - e[k], w, eta);
        }
    }
    x0.push(background);

    let mut lower = Vec::with_capacity(n_par);
    let mut upper = Vec::with_capacity(n_par);
    let area_max = 10.0 * top * span;
    for _ in 0..n_peaks {
        lower.extend_from_slice(&[lo, 0.25 * instrument_fwhm, 0.0, 0.0]);
        upper.extend_from_slice(&[hi, span, 1.0, area_max]);
    }
    lower.push(-top);
    upper.push(top);
    let bounds = Bounds::new(lower, upper);
    bounds.clamp(&mut x0);

    let lm = levenberg_marquardt(
        |p, r| {
            for (k, (x, v)) in e.iter().zip(y).enumerate() {
                r[k] = model(*x, p) - v;
            }
        },
        &x0,
        y.len(),
        &bounds,
        &LmOptions {
            max_iterations: 400,
            ..LmOptions::default()
        },
    );
    if !lm.converged || !lm.cost.is_finite() {
        return Err(Error::FitFailure(format!(
            "peak fit did not converge after {} iterations",
            lm.iterations
        )));
    }
    let dof = (y.len() - n_par).max(1) as f64;
    let se = standard_errors(&lm.jtj, lm.cost / dof);
    let mut peaks: Vec<PeakEstimate> = (0..n_peaks)
        .map(|k| {
            let q = &lm.x[k * PER_PEAK..(k + 1) * PER_PEAK];
            PeakEstimate {
                center: q[0] + origin,
                center_error: se[k * PER_PEAK],
                fwhm: q[1],
                amplitude: q[3],
                eta: q[2],
            }
        })
        .collect();
    peaks.sort_by(|a, b| a.center.total_cmp(&b.center));
    let warnings = peaks
        .windows(2)
        .enumerate()
        .filter(|(_, w)| w[1].center - w[0].center < instrument_fwhm)
        .map(|(k, w)| PeakWarning::Overlapping {
            left: k,
            right: k + 1,
            separation: w[1].center - w[0].center,
        })
        .collect();
    Ok(PeakFit {
        peaks,
        background: lm.x[n_par - 1],
        residual_norm: lm.cost,
        warnings,
    })
}
