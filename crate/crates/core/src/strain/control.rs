//! Closed-loop tuning with the measurement in the loop: every energy the
//! controller acts on comes from a synthesized spectrum and a peak fit.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;

use super::journal::{ExposureLog, ExposureRecord};
use super::{apply_exposure, crosstalk_kernel, ExposurePulse, PlantConfig, PlantState};
use crate::emitter::EmitterSystem;
use crate::error::{invalid, Error, Result};
use crate::inference::fit_spectrum_peaks;
use crate::photon_mc::RngSeed;
use crate::spectro::{energy_grid, measured_linewidth, synth_spectrum, Instrument, Spectrum};

const PLANT_STREAM: u32 = 1;
const MEASURE_STREAM: u32 = 2;

/// Confocal spectroscopy of one emitter: a coarse grating scan locates the
/// line, then a Fabry-Perot scan around it is fitted for the center.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurement {
    /// Gaussian width of the collection spot, μm.
    pub collection_sigma: f64,
    /// Peak signal-to-noise of each scan.
    pub snr: f64,
    pub coarse: Instrument,
    pub coarse_half_width: f64,
    pub coarse_step: f64,
    pub fine: Instrument,
    pub fine_half_width: f64,
    pub fine_step: f64,
}

impl Default for Measurement {
    fn default() -> Self {
        Self {
            collection_sigma: 0.4,
            snr: 50.0,
            coarse: Instrument::grating(),
            coarse_half_width: 2_500.0,
            coarse_step: 10.0,
            fine: Instrument::fabry_perot(),
            fine_half_width: 140.0,
            fine_step: 0.5,
        }
    }
}

impl Measurement {
    /// Spectrum collected with the spot on emitter `i`, over `center ± half_width`.
    #[allow(clippy::too_many_arguments)]
    pub fn spectrum<R: Rng + ?Sized>(
        &self,
        state: &PlantState,
        i: usize,
        instrument: &Instrument,
        center: f64,
        half_width: f64,
        step: f64,
        rng: &mut R,
    ) -> Result<Spectrum> {
        let grid = energy_grid(center - half_width, center + half_width, step);
        let (lo, hi) = (grid[0], grid[grid.len() - 1]);
        let x = state.position(i);
        let mut seen = Vec::new();
        let mut target_in_view = false;
        for (j, e) in state.current_emitters().into_iter().enumerate() {
            let w = crosstalk_kernel((e.position - x).abs(), self.collection_sigma);
            let margin = 10.0 * measured_linewidth(&e, instrument);
            if w < 1e-4 || e.energy - margin < lo || e.energy + margin > hi {
                continue;
            }
            target_in_view |= j == i;
            seen.push(e.with_intensity(e.intensity * w));
        }
        if !target_in_view {
            return Err(Error::EmptyWindow(format!(
                "emitter {i} not within {lo:.1}..{hi:.1} ueV"
            )));
        }
        let system = EmitterSystem::new(seen)?;
        synth_spectrum(&system, instrument, &grid, Some(self.snr), rng)
    }

    /// Measured energy of emitter `i`, searching around `prior`.
    pub fn measure<R: Rng + ?Sized>(&self, state: &PlantState, i: usize, prior: f64, rng: &mut R) -> Result<f64> {
        let coarse = self.spectrum(state, i, &self.coarse, prior, self.coarse_half_width, self.coarse_step, rng)?;
        let center = coarse.energies()[coarse.argmax()];
        let fine = self.spectrum(state, i, &self.fine, center, self.fine_half_width, self.fine_step, rng)?;
        let fit = fit_spectrum_peaks(&fine, 1, self.fine.resolution_fwhm)?;
        Ok(fit.peaks[0].center)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerConfig {
    /// Smallest requested step, μeV.
    pub fine_step: f64,
    /// Operating power as a fraction of the way from threshold to kink.
    pub operating_point: f64,
    pub min_duration: f64,
    pub max_duration: f64,
    /// Upper bound on the first pulse on an emitter, μeV.
    pub calibration_step: f64,
    /// Alignment stops when the measured spread is this far inside tolerance, μeV.
    pub alignment_margin: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            fine_step: 1.0,
            operating_point: 0.6,
            min_duration: 0.1,
            max_duration: 10.0,
            calibration_step: 100.0,
            alignment_margin: 0.25,
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.fine_step > 0.0) || !(self.calibration_step > 0.0) {
            return Err(invalid("fine_step and calibration_step must be > 0"));
        }
        if !(self.operating_point > 0.0 && self.operating_point < 1.0) {
            return Err(invalid("operating_point must lie in (0, 1)"));
        }
        if !(self.min_duration > 0.0 && self.min_duration <= self.max_duration) {
            return Err(invalid("need 0 < min_duration <= max_duration"));
        }
        if self.alignment_margin < 0.0 {
            return Err(invalid("alignment_margin must be >= 0"));
        }
        Ok(())
    }
}

enum Approach {
    Reached,
    Overshot,
}

/// Feedback controller. Plant noise and measurement noise come from separate
/// streams of one seed, so a run is reproducible from the seed alone.
pub struct Tuner<'a> {
    plant: &'a PlantConfig,
    pub control: ControllerConfig,
    pub measurement: Measurement,
    seed: u64,
    measurements: u32,
    gains: BTreeMap<usize, f64>,
}

impl<'a> Tuner<'a> {
    pub fn new(plant: &'a PlantConfig, seed: u64) -> Self {
        Self {
            plant,
            control: ControllerConfig::default(),
            measurement: Measurement::default(),
            seed,
            measurements: 0,
            gains: BTreeMap::new(),
        }
    }

    /// Seed the plant was driven with; needed to replay a journal.
    pub fn plant_seed(&self) -> RngSeed {
        RngSeed::new(self.seed).with_stream(PLANT_STREAM)
    }

    fn measure(&mut self, state: &PlantState, idx: &[usize], priors: &[f64]) -> Result<Vec<f64>> {
        let base = self.measurements;
        self.measurements += idx.len() as u32;
        let stream = RngSeed::new(self.seed).with_stream(MEASURE_STREAM);
        let m = self.measurement;
        idx.par_iter()
            .zip(priors)
            .enumerate()
            .map(|(k, (&i, &prior))| m.measure(state, i, prior, &mut stream.rng(base + k as u32)))
            .collect()
    }

    /// Pulse at emitter position `x` whose nominal site shift is `nominal` μeV.
    /// Power stays below the kink; small steps lower the power toward
    /// threshold rather than shortening the pulse below `min_duration`.
    pub fn plan(&self, x: f64, nominal: f64) -> ExposurePulse {
        let c = &self.control;
        let th = self.plant.threshold_at(x);
        let kink = self.plant.kink_at(x);
        let mut power = th + c.operating_point * (kink - th);
        let rate = self.plant.max_shift * self.plant.growth_rate * (power - th);
        let mut duration = nominal / rate;
        if duration > c.max_duration {
            duration = c.max_duration;
        } else if duration < c.min_duration {
            duration = c.min_duration;
            power = th + nominal / (self.plant.max_shift * self.plant.growth_rate * duration);
        }
        ExposurePulse {
            site: x,
            power,
            duration,
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn approach(
        &mut self,
        state: &mut PlantState,
        i: usize,
        target: f64,
        tol: f64,
        budget: usize,
        log: &mut ExposureLog,
        watch: &[usize],
        est: &mut [f64],
    ) -> Result<Approach> {
        let slot = watch.iter().position(|&j| j == i).expect("target is watched");
        let x = state.position(i);
        // with a wide tolerance keep stepping until in its lower half
        let settle = (tol / 2.0).max(tol.min(2.0 * self.control.fine_step));
        loop {
            let remaining = target - est[slot];
            if remaining <= settle && remaining >= -tol {
                return Ok(Approach::Reached);
            }
            if remaining < -tol {
                return Ok(Approach::Overshot);
            }
            if log.records.len() >= budget {
                return Err(Error::BudgetExhausted { budget });
            }
            let calibrating = !self.gains.contains_key(&i);
            let gain = *self.gains.get(&i).unwrap_or(&1.0);
            let want = if calibrating {
                (remaining / 4.0).min(self.control.calibration_step).max(self.control.fine_step)
            } else {
                (remaining / 2.0).max(self.control.fine_step)
            };
            let pulse = self.plan(x, want / gain);
            let expected = gain * self.plant.expected_shift(pulse.power, pulse.duration, x);
            apply_exposure(state, self.plant, &pulse, self.plant_seed())?;
            let priors: Vec<f64> = watch
                .iter()
                .zip(est.iter())
                .map(|(&j, &e)| if j == i { e + expected } else { e })
                .collect();
            let before = est[slot];
            let now = self.measure(state, watch, &priors)?;
            est.copy_from_slice(&now);
            let observed = est[slot] - before;
            if expected >= 10.0 * self.plant.step_noise.max(0.1) && observed > 0.0 {
                let ratio = (observed / expected).clamp(0.1, 10.0);
                let g = if calibrating { gain * ratio } else { gain * ratio.sqrt() };
                self.gains.insert(i, g.clamp(1e-3, 10.0));
            } else if calibrating {
                self.gains.insert(i, gain);
            }
            log.records.push(ExposureRecord {
                pulse,
                target: i,
                requested: want,
                energies: state.energies(),
                measured: est[slot],
            });
        }
    }

    /// Drives emitter `i` to `target` ± `tolerance` μeV.
    pub fn tune_to_target(
        &mut self,
        state: &mut PlantState,
        i: usize,
        target: f64,
        tolerance: f64,
        max_exposures: usize,
    ) -> Result<ExposureLog> {
        self.control.validate()?;
        if i >= state.len() {
            return Err(invalid(format!("no emitter {i}")));
        }
        if !(tolerance >= 1.0) {
            return Err(invalid("tolerance must be >= 1 ueV"));
        }
        let mut log = ExposureLog::new(state.len());
        let mut est = self.measure(state, &[i], &[state.energy(i)])?;
        if est[0] > target + tolerance {
            return Err(Error::UnreachableTarget {
                target,
                current: est[0],
            });
        }
        match self.approach(state, i, target, tolerance, max_exposures, &mut log, &[i], &mut est)? {
            Approach::Reached => Ok(log),
            Approach::Overshot => Err(Error::UnreachableTarget {
                target,
                current: est[0],
            }),
        }
    }

    /// Brings the selected emitters to a common energy within `tolerance`.
    /// The reddest emitter is raised toward the bluest one, plus a guard for
    /// the crosstalk the bluest will pick up; all selected emitters are
    /// re-measured after every pulse. An overshoot simply makes the
    /// overshooting emitter the new reference.
    pub fn align_resonance(
        &mut self,
        state: &mut PlantState,
        indices: &[usize],
        tolerance: f64,
        max_exposures: usize,
    ) -> Result<ExposureLog> {
        self.control.validate()?;
        if indices.len() < 2 {
            return Err(invalid("alignment needs at least two emitters"));
        }
        for (k, &a) in indices.iter().enumerate() {
            if a >= state.len() || indices[..k].contains(&a) {
                return Err(invalid(format!("bad or repeated emitter index {a}")));
            }
        }
        if !(tolerance >= 1.0) {
            return Err(invalid("tolerance must be >= 1 ueV"));
        }
        for (k, &a) in indices.iter().enumerate() {
            for &b in &indices[k + 1..] {
                let coupling = self.plant.kernel((state.position(a) - state.position(b)).abs());
                if coupling > 0.5 {
                    return Err(Error::InfeasibleLayout { a, b, coupling });
                }
            }
        }
        let margin = self.control.alignment_margin.min(tolerance / 4.0);
        let sub_tol = (tolerance - margin) / 2.0;
        let mut log = ExposureLog::new(state.len());
        let priors: Vec<f64> = indices.iter().map(|&i| state.energy(i)).collect();
        let mut est = self.measure(state, indices, &priors)?;
        loop {
            let (lo_k, hi_k) = extremes(&est);
            if est[hi_k] - est[lo_k] <= tolerance - margin {
                return Ok(log);
            }
            let b = indices[hi_k];
            let guard: f64 = indices
                .iter()
                .zip(&est)
                .filter(|(&j, _)| j != b)
                .map(|(&j, &e)| {
                    crosstalk_kernel((state.position(j) - state.position(b)).abs(), self.plant.kernel_sigma)
                        * (est[hi_k] - e)
                })
                .sum();
            let target = est[hi_k] + guard;
            self.approach(state, indices[lo_k], target, sub_tol, max_exposures, &mut log, indices, &mut est)?;
        }
    }
}

fn extremes(v: &[f64]) -> (usize, usize) {
    let mut lo = 0;
    let mut hi = 0;
    for (k, x) in v.iter().enumerate() {
        if *x < v[lo] {
            lo = k;
        }
        if *x > v[hi] {
            hi = k;
        }
    }
    (lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::emitter::Emitter;

    fn qd(e: f64, x: f64) -> Emitter<f64> {
        Emitter::new(1_340_000.0 + e, 0.7, 2.5, 1.0).with_position(x)
    }

    #[test]
    fn measurement_is_accurate() {
        let st = PlantState::new(vec![qd(0.0, 10.0), qd(30.0, 11.2)]).unwrap();
        let m = Measurement::default();
        let mut rng = RngSeed::new(4).rng(0);
        for _ in 0..10 {
            let e = m.measure(&st, 0, 1_340_400.0, &mut rng).unwrap();
            assert!((e - 1_340_000.0).abs() < 0.5, "{e}");
        }
        assert!(m.measure(&st, 0, 1_350_000.0, &mut rng).is_err());
    }

    #[test]
    fn already_on_target_is_empty() {
        let cfg = PlantConfig::default();
        let mut st = PlantState::new(vec![qd(0.0, 10.0)]).unwrap();
        let mut t = Tuner::new(&cfg, 1);
        let log = t.tune_to_target(&mut st, 0, 1_340_000.0, 2.0, 100).unwrap();
        assert!(log.records.is_empty());
    }

    #[test]
    fn red_target_is_unreachable() {
        let cfg = PlantConfig::default();
        let mut st = PlantState::new(vec![qd(0.0, 10.0)]).unwrap();
        let mut t = Tuner::new(&cfg, 1);
        let e = t.tune_to_target(&mut st, 0, 1_339_900.0, 2.0, 100);
        assert!(matches!(e, Err(Error::UnreachableTarget { .. })));
    }

    #[test]
    fn tunes_17_mev_with_quiet_bystanders() {
        let cfg = PlantConfig::default();
        let mut st = PlantState::new(vec![qd(0.0, 10.0), qd(900.0, 11.3), qd(-700.0, 8.6)]).unwrap();
        let e0 = st.energies();
        let mut t = Tuner::new(&cfg, 7);
        let target = e0[0] + 17_000.0;
        let log = t.tune_to_target(&mut st, 0, target, 5.0, 200).unwrap();
        assert!((st.energy(0) - target).abs() <= 5.5);
        assert!(st.energy(1) - e0[1] <= 100.0 && st.energy(2) - e0[2] <= 100.0);
        assert!(log.records.iter().all(|r| r.pulse.power < cfg.destroy_at(r.pulse.site)));
    }

    #[test]
    fn aligns_pair_at_1200nm() {
        let cfg = PlantConfig::default();
        let mut st = PlantState::new(vec![qd(0.0, 10.0), qd(540.0, 11.2)]).unwrap();
        let mut t = Tuner::new(&cfg, 3);
        t.align_resonance(&mut st, &[0, 1], 2.0, 500).unwrap();
        assert!((st.energy(0) - st.energy(1)).abs() <= 2.0);
    }

    #[test]
    fn close_pair_is_infeasible() {
        let cfg = PlantConfig::default();
        let mut st = PlantState::new(vec![qd(0.0, 10.0), qd(100.0, 10.1)]).unwrap();
        let mut t = Tuner::new(&cfg, 3);
        assert!(matches!(
            t.align_resonance(&mut st, &[0, 1], 2.0, 500),
            Err(Error::InfeasibleLayout { .. })
        ));
    }
}
