//! Power ramps and the tuning curves they produce.

use super::{apply_exposure, ExposurePulse, PlantConfig, PlantState};
use crate::error::{invalid, Error, Result};
use crate::photon_mc::RngSeed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Regime {
    /// Below threshold: no measurable shift.
    Flat,
    /// Shift per pulse growing roughly linearly with power.
    Growth,
    /// Superlinear response above the kink.
    Kink,
}

/// Cumulative site shift after each pulse of a ramp.
#[derive(Debug, Clone, PartialEq)]
pub struct TuningCurve {
    pub site: f64,
    pub duration: f64,
    pub powers: Vec<f64>,
    /// Cumulative shift at the site, μeV.
    pub shifts: Vec<f64>,
}

impl TuningCurve {
    pub fn len(&self) -> usize {
        self.powers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.powers.is_empty()
    }

    /// Shift produced by each pulse.
    pub fn increments(&self) -> Vec<f64> {
        let mut prev = 0.0;
        self.shifts
            .iter()
            .map(|s| {
                let d = s - prev;
                prev = *s;
                d
            })
            .collect()
    }

    /// Classifies each pulse. Increments at or below `noise_floor` are flat;
    /// a straight line is fitted to the first half of the remaining
    /// increments, and later points exceeding it by half again are kink.
    pub fn regimes(&self, noise_floor: f64) -> Vec<Regime> {
        let inc = self.increments();
        let active: Vec<usize> = (0..inc.len()).filter(|&k| inc[k] > noise_floor).collect();
        let mut out: Vec<Regime> = inc
            .iter()
            .map(|d| if *d > noise_floor { Regime::Growth } else { Regime::Flat })
            .collect();
        let train = &active[..active.len() / 2];
        if train.len() < 2 {
            return out;
        }
        let n = train.len() as f64;
        let mx = train.iter().map(|&k| self.powers[k]).sum::<f64>() / n;
        let my = train.iter().map(|&k| inc[k]).sum::<f64>() / n;
        let sxy: f64 = train.iter().map(|&k| (self.powers[k] - mx) * (inc[k] - my)).sum();
        let sxx: f64 = train.iter().map(|&k| (self.powers[k] - mx).powi(2)).sum();
        let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
        let last_train = *train.last().expect("non-empty");
        let mut in_kink = false;
        for &k in &active {
            if k <= last_train {
                continue;
            }
            let linear = my + slope * (self.powers[k] - mx);
            in_kink |= inc[k] > 1.5 * linear.max(noise_floor);
            if in_kink {
                out[k] = Regime::Kink;
            }
        }
        out
    }

    /// Mean per-pulse increment in the kink regime over that in the growth
    /// regime, if both are present.
    pub fn slope_ratio(&self, noise_floor: f64) -> Option<f64> {
        let inc = self.increments();
        let reg = self.regimes(noise_floor);
        let mean = |r: Regime| {
            let v: Vec<f64> = (0..inc.len()).filter(|&k| reg[k] == r).map(|k| inc[k]).collect();
            (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
        };
        Some(mean(Regime::Kink)? / mean(Regime::Growth)?)
    }
}

/// One pulse per power, in ascending order, at a fixed site and duration.
pub fn calibrate_ramp(
    state: &mut PlantState,
    cfg: &PlantConfig,
    site: f64,
    powers: &[f64],
    duration: f64,
    seed: RngSeed,
) -> Result<TuningCurve> {
    if powers.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(invalid("ramp powers must be strictly ascending"));
    }
    let mut curve = TuningCurve {
        site,
        duration,
        powers: Vec::with_capacity(powers.len()),
        shifts: Vec::with_capacity(powers.len()),
    };
    let start = state.fraction_at(site);
    for &p in powers {
        let pulse = ExposurePulse::new(site, p, duration)?;
        match apply_exposure(state, cfg, &pulse, seed) {
            Ok(_) => {
                curve.powers.push(p);
                curve.shifts.push(cfg.max_shift * (state.fraction_at(site) - start));
            }
            Err(Error::Destruction { power, limit, .. }) => {
                return Err(Error::RampDestroyed {
                    power,
                    limit,
                    partial: Box::new(curve),
                })
            }
            Err(e) => return Err(e),
        }
    }
    Ok(curve)
}
