//! Forward model of measured emission spectra and inhomogeneous ensembles.

pub mod lineshape;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::emitter::{Emitter, EmitterSystem};
use crate::error::{invalid, Error, Result};
use crate::textio::Table;
use crate::units::{fwhm_from_sigma, lorentzian_fwhm, GAUSSIAN_FWHM_PER_SIGMA};

use lineshape::{voigt, voigt_fwhm};

/// Grating spectrometer resolution, μeV.
pub const GRATING_RESOLUTION: f64 = 50.0;
/// Fiber Fabry-Perot resolution, μeV.
pub const FABRY_PEROT_RESOLUTION: f64 = 2.4;

/// Linewidths of coverage required on either side of each line.
const COVERAGE_LINEWIDTHS: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InstrumentKind {
    Grating,
    FabryPerot,
}

/// Spectral instrument with a Gaussian response of `resolution_fwhm` μeV.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Instrument {
    pub kind: InstrumentKind,
    pub resolution_fwhm: f64,
}

impl Instrument {
    pub fn new(kind: InstrumentKind, resolution_fwhm: f64) -> Result<Self> {
        if !(resolution_fwhm > 0.0) {
            return Err(invalid("instrument resolution must be > 0"));
        }
        Ok(Self {
            kind,
            resolution_fwhm,
        })
    }

    pub fn grating() -> Self {
        Self {
            kind: InstrumentKind::Grating,
            resolution_fwhm: GRATING_RESOLUTION,
        }
    }

    pub fn fabry_perot() -> Self {
        Self {
            kind: InstrumentKind::FabryPerot,
            resolution_fwhm: FABRY_PEROT_RESOLUTION,
        }
    }

    /// Largest grid step a spectrum through this instrument may use.
    pub fn max_step(&self) -> f64 {
        self.resolution_fwhm / 3.0
    }
}

/// Voigt widths (Lorentzian, Gaussian) of one emitter seen through an
/// instrument, μeV.
pub fn line_widths(e: &Emitter<f64>, instrument: &Instrument) -> (f64, f64) {
    let fl = lorentzian_fwhm(e.radiative_rate, e.dephasing_rate);
    let fd = fwhm_from_sigma(e.diffusion_sigma);
    let fg = (fd * fd + instrument.resolution_fwhm * instrument.resolution_fwhm).sqrt();
    (fl, fg)
}

/// Total FWHM of one emitter's measured line, μeV.
pub fn measured_linewidth(e: &Emitter<f64>, instrument: &Instrument) -> f64 {
    let (fl, fg) = line_widths(e, instrument);
    voigt_fwhm(fl, fg)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    energies: Vec<f64>,
    intensity: Vec<f64>,
    pub instrument: Instrument,
}

impl Spectrum {
    pub fn new(energies: Vec<f64>, intensity: Vec<f64>, instrument: Instrument) -> Result<Self> {
        if energies.len() != intensity.len() || energies.len() < 2 {
            return Err(invalid("spectrum needs matching grids of at least two points"));
        }
        if energies.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid("energy grid must be strictly increasing"));
        }
        let max_step = energies
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(0.0, f64::max);
        if max_step > instrument.max_step() * (1.0 + 1e-9) {
            return Err(Error::GridTooCoarse {
                step: max_step,
                limit: instrument.max_step(),
            });
        }
        if intensity.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(invalid("intensities must be finite and >= 0"));
        }
        Ok(Self {
            energies,
            intensity,
            instrument,
        })
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn intensity(&self) -> &[f64] {
        &self.intensity
    }

    pub fn len(&self) -> usize {
        self.energies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energies.is_empty()
    }

    /// Trapezoidal area.
    pub fn integrated(&self) -> f64 {
        self.energies
            .windows(2)
            .zip(self.intensity.windows(2))
            .map(|(e, i)| 0.5 * (i[0] + i[1]) * (e[1] - e[0]))
            .sum()
    }

    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (k, v) in self.intensity.iter().enumerate() {
            if *v > self.intensity[best] {
                best = k;
            }
        }
        best
    }

    /// Energies of strict local maxima whose height exceeds `min_fraction`
    /// of the global maximum.
    pub fn local_maxima(&self, min_fraction: f64) -> Vec<f64> {
        let top = self.intensity[self.argmax()];
        let v = &self.intensity;
        (1..v.len() - 1)
            .filter(|&k| v[k] > v[k - 1] && v[k] >= v[k + 1] && v[k] >= min_fraction * top)
            .map(|k| self.energies[k])
            .collect()
    }

    pub fn to_text(&self) -> String {
        let kind = match self.instrument.kind {
            InstrumentKind::Grating => "grating",
            InstrumentKind::FabryPerot => "fabry_perot",
        };
        let mut t = Table::new(&["energy_ueV", "intensity"])
            .meta("instrument", kind)
            .meta("resolution_ueV", self.instrument.resolution_fwhm);
        for (e, i) in self.energies.iter().zip(&self.intensity) {
            t.push(vec![*e, *i]);
        }
        t.render("spectrum v1")
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let t = Table::parse(text)?;
        let kind = match t.meta.get("instrument").map(String::as_str) {
            Some("grating") | None => InstrumentKind::Grating,
            Some("fabry_perot") => InstrumentKind::FabryPerot,
            Some(other) => {
                return Err(Error::Parse {
                    line: 0,
                    msg: format!("unknown instrument {other:?}"),
                })
            }
        };
        let res = t.meta_f64("resolution_ueV").unwrap_or(GRATING_RESOLUTION);
        Self::new(
            t.require_column("energy_ueV")?,
            t.require_column("intensity")?,
            Instrument::new(kind, res)?,
        )
    }
}

/// Uniform energy grid from `lo` to `hi` with at most `step` spacing.
pub fn energy_grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step).ceil() as usize;
    let h = (hi - lo) / n as f64;
    (0..=n).map(|k| lo + k as f64 * h).collect()
}

/// Noise-free intensity of `system` at `energy`, with emitter intensities
/// taken as line areas.
pub fn spectral_density(system: &EmitterSystem<f64>, instrument: &Instrument, energy: f64) -> f64 {
    system
        .emitters()
        .iter()
        .map(|e| {
            let (fl, fg) = line_widths(e, instrument);
            e.intensity * voigt(energy - e.energy, fl, fg)
        })
        .sum()
}

/// Synthesises a measured spectrum. `noise_snr` is the ratio of the peak
/// intensity to the standard deviation of additive Gaussian noise; `None`
/// gives a noise-free spectrum. Noisy values are clipped at zero.
pub fn synth_spectrum<R: Rng + ?Sized>(
    system: &EmitterSystem<f64>,
    instrument: &Instrument,
    grid: &[f64],
    noise_snr: Option<f64>,
    rng: &mut R,
) -> Result<Spectrum> {
    if grid.len() < 2 {
        return Err(invalid("grid needs at least two points"));
    }
    let (lo, hi) = (grid[0], grid[grid.len() - 1]);
    for e in system.emitters() {
        let margin = COVERAGE_LINEWIDTHS * measured_linewidth(e, instrument);
        if e.energy - margin < lo || e.energy + margin > hi {
            return Err(Error::GridCoverage {
                lo,
                hi,
                needed_lo: e.energy - margin,
                needed_hi: e.energy + margin,
            });
        }
    }
    let mut intensity: Vec<f64> = grid
        .iter()
        .map(|&x| spectral_density(system, instrument, x))
        .collect();
    if let Some(snr) = noise_snr {
        if !(snr > 0.0) {
            return Err(invalid("noise SNR must be > 0"));
        }
        let peak = intensity.iter().copied().fold(0.0, f64::max);
        let noise = Normal::new(0.0, peak / snr).map_err(|e| invalid(e.to_string()))?;
        for v in &mut intensity {
            *v = (*v + noise.sample(rng)).max(0.0);
        }
    }
    Spectrum::new(grid.to_vec(), intensity, *instrument)
}

/// `n` transition energies from a Gaussian inhomogeneous distribution.
pub fn sample_ensemble<R: Rng + ?Sized>(n: usize, center: f64, fwhm: f64, rng: &mut R) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(invalid("ensemble size must be >= 1"));
    }
    let dist = Normal::new(center, fwhm / GAUSSIAN_FWHM_PER_SIGMA).map_err(|e| invalid(e.to_string()))?;
    Ok((0..n).map(|_| dist.sample(rng)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::photon_mc::RngSeed;

    fn qd(e: f64) -> Emitter<f64> {
        Emitter::new(e, 0.7, 2.5, 1.0)
    }

    #[test]
    fn reference_linewidth_through_fp() {
        let w = measured_linewidth(&qd(0.0), &Instrument::fabry_perot());
        let (fl, fg) = line_widths(&qd(0.0), &Instrument::fabry_perot());
        assert!((fl - 3.75).abs() < 0.01);
        assert!((fg - (9.738f64.powi(2) + 2.4f64.powi(2)).sqrt()).abs() < 0.01);
        assert!((w - 12.0).abs() < 0.5, "{w}");
    }

    #[test]
    fn noise_free_peak_on_emitter() {
        let sys = EmitterSystem::new(vec![qd(1000.0)]).unwrap();
        let inst = Instrument::fabry_perot();
        let grid = energy_grid(800.0, 1200.0, 0.5);
        let s = synth_spectrum(&sys, &inst, &grid, None, &mut RngSeed::new(0).rng(0)).unwrap();
        assert_eq!(s.energies()[s.argmax()], 1000.0);
        let k = s.argmax();
        for d in 1..100 {
            assert!((s.intensity()[k - d] - s.intensity()[k + d]).abs() < 1e-15);
        }
    }

    #[test]
    fn coverage_and_step_checks() {
        let sys = EmitterSystem::new(vec![qd(0.0)]).unwrap();
        let inst = Instrument::fabry_perot();
        let mut rng = RngSeed::new(0).rng(0);
        assert!(matches!(
            synth_spectrum(&sys, &inst, &energy_grid(-50.0, 50.0, 0.5), None, &mut rng),
            Err(Error::GridCoverage { .. })
        ));
        assert!(matches!(
            synth_spectrum(&sys, &inst, &energy_grid(-200.0, 200.0, 2.0), None, &mut rng),
            Err(Error::GridTooCoarse { .. })
        ));
    }

    #[test]
    fn resolved_and_merged_pairs() {
        let mut rng = RngSeed::new(1).rng(0);
        let fp = Instrument::fabry_perot();
        let wide = EmitterSystem::new(vec![qd(0.0), qd(540.0)]).unwrap();
        let s = synth_spectrum(&wide, &fp, &energy_grid(-300.0, 840.0, 0.5), None, &mut rng).unwrap();
        assert_eq!(s.local_maxima(0.1).len(), 2);

        let gr = Instrument::grating();
        let grid = energy_grid(-1000.0, 1100.0, 5.0);
        let close = EmitterSystem::new(vec![qd(0.0), qd(40.0)]).unwrap();
        let s = synth_spectrum(&close, &gr, &grid, None, &mut rng).unwrap();
        assert_eq!(s.local_maxima(0.1).len(), 1);
        let apart = EmitterSystem::new(vec![qd(0.0), qd(120.0)]).unwrap();
        let s = synth_spectrum(&apart, &gr, &grid, None, &mut rng).unwrap();
        assert_eq!(s.local_maxima(0.1).len(), 2);
    }

    #[test]
    fn area_independent_of_resolution() {
        let sys = EmitterSystem::new(vec![qd(0.0).with_intensity(3.0)]).unwrap();
        let mut rng = RngSeed::new(0).rng(0);
        let fp = synth_spectrum(&sys, &Instrument::fabry_perot(), &energy_grid(-8000.0, 8000.0, 0.5), None, &mut rng).unwrap();
        let gr = synth_spectrum(&sys, &Instrument::grating(), &energy_grid(-8000.0, 8000.0, 0.5), None, &mut rng).unwrap();
        let (a, b) = (fp.integrated(), gr.integrated());
        assert!((a - b).abs() / a < 5e-3, "{a} {b}");
        assert!((a - 3.0).abs() / 3.0 < 5e-3);
    }

    #[test]
    fn instrument_never_moves_isolated_peak() {
        let mut rng = RngSeed::new(0).rng(0);
        let sys = EmitterSystem::new(vec![qd(10.3)]).unwrap();
        let grid = energy_grid(-1000.0, 1000.0, 0.5);
        for inst in [Instrument::fabry_perot(), Instrument::grating()] {
            let s = synth_spectrum(&sys, &inst, &grid, None, &mut rng).unwrap();
            assert!((s.energies()[s.argmax()] - 10.3).abs() <= 0.5);
        }
    }

    #[test]
    fn ensemble_width() {
        let mut rng = RngSeed::new(2).rng(0);
        let e = sample_ensemble(10_000, 1_340_000.0, 30_000.0, &mut rng).unwrap();
        let mean = e.iter().sum::<f64>() / e.len() as f64;
        let var = e.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (e.len() - 1) as f64;
        let fwhm = var.sqrt() * GAUSSIAN_FWHM_PER_SIGMA;
        assert!((fwhm - 30_000.0).abs() / 30_000.0 < 0.03, "{fwhm}");
        let one = sample_ensemble(1, 0.0, 30_000.0, &mut rng).unwrap();
        assert!(one.len() == 1 && one[0].is_finite());
        assert!(sample_ensemble(0, 0.0, 1.0, &mut rng).is_err());
    }

    #[test]
    fn coincidences_in_ensemble_are_rare() {
        let mut rng = RngSeed::new(3).rng(0);
        let mut close = 0usize;
        let mut pairs = 0usize;
        for _ in 0..50 {
            let e = sample_ensemble(20, 0.0, 30_000.0, &mut rng).unwrap();
            for i in 0..e.len() {
                for j in (i + 1)..e.len() {
                    pairs += 1;
                    if (e[i] - e[j]).abs() < 10.0 {
                        close += 1;
                    }
                }
            }
        }
        // combinatorial estimate: P(|Δ| < 10 ueV) ≈ 20 / (sqrt(2π)·sqrt(2)·12740) ≈ 4.4e-4
        let frac = close as f64 / pairs as f64;
        assert!(frac < 0.01, "{frac}");
    }

    #[test]
    fn text_round_trip() {
        let sys = EmitterSystem::new(vec![qd(0.0)]).unwrap();
        let s = synth_spectrum(&sys, &Instrument::fabry_perot(), &energy_grid(-200.0, 200.0, 0.8), None, &mut RngSeed::new(0).rng(0)).unwrap();
        let back = Spectrum::from_text(&s.to_text()).unwrap();
        assert_eq!(back, s);
    }
}
