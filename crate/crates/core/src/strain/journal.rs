//! Exposure journal: one record per pulse, replayable against a fresh plant.

use super::{apply_exposure, ExposurePulse, PlantConfig, PlantState};
use crate::error::{Error, Result};
use crate::photon_mc::RngSeed;
use crate::textio::Table;

#[derive(Debug, Clone, PartialEq)]
pub struct ExposureRecord {
    pub pulse: ExposurePulse,
    /// Emitter the pulse was aimed at.
    pub target: usize,
    /// Shift the controller asked for, μeV.
    pub requested: f64,
    /// Every emitter's energy after the pulse, μeV.
    pub energies: Vec<f64>,
    /// Measured energy of the target after the pulse, μeV.
    pub measured: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExposureLog {
    pub n_emitters: usize,
    pub records: Vec<ExposureRecord>,
}

impl ExposureLog {
    pub fn new(n_emitters: usize) -> Self {
        Self {
            n_emitters,
            records: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn append(&mut self, other: ExposureLog) {
        self.records.extend(other.records);
    }

    pub fn to_text(&self) -> String {
        let mut cols = vec![
            "index".to_string(),
            "site_um".into(),
            "power_mW".into(),
            "duration_s".into(),
            "target".into(),
            "requested_ueV".into(),
            "measured_ueV".into(),
        ];
        cols.extend((0..self.n_emitters).map(|k| format!("E{k}_ueV")));
        let refs: Vec<&str> = cols.iter().map(String::as_str).collect();
        let mut t = Table::new(&refs).meta("emitters", self.n_emitters);
        for (k, r) in self.records.iter().enumerate() {
            let mut row = vec![
                k as f64,
                r.pulse.site,
                r.pulse.power,
                r.pulse.duration,
                r.target as f64,
                r.requested,
                r.measured,
            ];
            row.extend_from_slice(&r.energies);
            t.push(row);
        }
        t.render("exposure journal v1")
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let t = Table::parse(text)?;
        let n = t
            .meta
            .get("emitters")
            .and_then(|v| v.parse::<usize>().ok())
            .ok_or_else(|| Error::Parse {
                line: 0,
                msg: "missing emitters count".into(),
            })?;
        if t.columns.len() != 7 + n {
            return Err(Error::Parse {
                line: 0,
                msg: format!("expected {} columns for {n} emitters", 7 + n),
            });
        }
        let records = t
            .rows
            .iter()
            .map(|row| ExposureRecord {
                pulse: ExposurePulse {
                    site: row[1],
                    power: row[2],
                    duration: row[3],
                },
                target: row[4] as usize,
                requested: row[5],
                measured: row[6],
                energies: row[7..].to_vec(),
            })
            .collect();
        Ok(Self {
            n_emitters: n,
            records,
        })
    }
}

/// Re-applies every pulse to `state` and checks the journaled energies.
/// `state` must be the plant as it was before the journal started.
pub fn replay(state: &mut PlantState, cfg: &PlantConfig, log: &ExposureLog, seed: RngSeed) -> Result<()> {
    for (k, r) in log.records.iter().enumerate() {
        apply_exposure(state, cfg, &r.pulse, seed)?;
        for (j, logged) in r.energies.iter().enumerate() {
            let replayed = state.energy(j);
            if replayed != *logged {
                return Err(Error::ReplayMismatch {
                    record: k,
                    emitter: j,
                    logged: *logged,
                    replayed,
                });
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::emitter::Emitter;
    use crate::strain::Tuner;

    #[test]
    fn journal_round_trip_and_replay() {
        let cfg = PlantConfig::default();
        let emitters = vec![
            Emitter::new(1_340_000.0, 0.7, 2.5, 1.0).with_position(9.0),
            Emitter::new(1_340_300.0, 0.7, 2.5, 1.0).with_position(10.5),
        ];
        let fresh = PlantState::new(emitters).unwrap();
        let mut st = fresh.clone();
        let mut tuner = Tuner::new(&cfg, 11);
        let log = tuner.align_resonance(&mut st, &[0, 1], 2.0, 300).unwrap();
        assert!(!log.is_empty());
        let text = log.to_text();
        let back = ExposureLog::from_text(&text).unwrap();
        assert_eq!(back, log);
        assert_eq!(back.to_text(), text);

        let mut again = fresh.clone();
        replay(&mut again, &cfg, &back, tuner.plant_seed()).unwrap();
        assert_eq!(again, st);

        let mut wrong = fresh;
        assert!(matches!(
            replay(&mut wrong, &cfg, &back, RngSeed::new(12).with_stream(1)),
            Err(Error::ReplayMismatch { .. })
        ));
    }
}
