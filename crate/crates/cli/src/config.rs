//! Run configuration: a versioned TOML document.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sr_core::spectro::{Instrument, InstrumentKind};
use sr_core::strain::PlantConfig;
use sr_core::{Emitter, EmitterSystem, Irf};

use crate::error::CliError;

pub const FORMAT_VERSION: u32 = 1;

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub format_version: u32,
    /// Optional; when present must match the subcommand.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiment: Option<String>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system: Option<SystemConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub irf: Option<IrfConfig>,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub simulate: SimulateConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<FitConfig>,
    #[serde(default)]
    pub instrument: InstrumentConfig,
    #[serde(default)]
    pub plant: PlantSection,
    #[serde(default)]
    pub tune: TuneConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    #[serde(default = "yes")]
    pub coherent: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub emitters: Vec<EmitterConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ladder: Option<LadderConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmitterConfig {
    #[serde(default)]
    pub energy_uev: f64,
    pub gamma_per_ns: f64,
    #[serde(default)]
    pub gamma_pd_per_ns: f64,
    #[serde(default)]
    pub sigma_per_ns: f64,
    #[serde(default = "one")]
    pub intensity: f64,
    #[serde(default)]
    pub position_um: f64,
}

fn one() -> f64 {
    1.0
}

/// `n` emitters spaced by `spacing_uev`, sharing rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LadderConfig {
    pub n: usize,
    #[serde(default)]
    pub base_energy_uev: f64,
    #[serde(default)]
    pub spacing_uev: f64,
    pub gamma_per_ns: f64,
    #[serde(default)]
    pub gamma_pd_per_ns: f64,
    #[serde(default)]
    pub sigma_per_ns: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intensities: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub positions_um: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IrfConfig {
    pub fwhm_ns: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub half_span_ns: f64,
    pub step_ns: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            half_span_ns: 3.0,
            step_ns: 0.002,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateConfig {
    /// Trajectories for the Monte Carlo oracle; 0 skips it.
    pub mc_realizations: usize,
    pub mc_half_span_ns: f64,
    pub mc_points: usize,
    /// Coincidence events for the synthetic histogram; 0 skips it.
    pub events: u64,
    pub window_ns: f64,
    pub bin_ns: f64,
    pub plateau_ns: [f64; 2],
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            mc_realizations: 100_000,
            mc_half_span_ns: 3.0,
            mc_points: 61,
            events: 100_000,
            window_ns: 10.0,
            bin_ns: 0.02,
            plateau_ns: [5.0, 10.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    pub curves: Vec<FitCurveConfig>,
    #[serde(default = "three")]
    pub restarts: usize,
    #[serde(default = "one_usize")]
    pub oversample: usize,
    #[serde(default = "plateau")]
    pub plateau_ns: [f64; 2],
    /// Parameters held at a value instead of fitted, e.g. `sigma = 1.0`.
    #[serde(default, skip_serializing_if = "std::collections::BTreeMap::is_empty")]
    pub fixed: std::collections::BTreeMap<String, f64>,
}

fn three() -> usize {
    3
}

fn one_usize() -> usize {
    1
}

fn plateau() -> [f64; 2] {
    [5.0, 10.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitCurveConfig {
    /// Histogram or normalised-curve file; relative to the config file.
    pub data: PathBuf,
    pub emitters: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intensities: Option<Vec<f64>>,
    /// Starting detuning; when absent the emitters are taken as resonant.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_guess_uev: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InstrumentConfig {
    /// `fabry_perot` or `grating`.
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub resolution_uev: Option<f64>,
    /// Peak signal-to-noise of exported spectra; absent means noise-free.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub snr: Option<f64>,
}

impl Default for InstrumentConfig {
    fn default() -> Self {
        Self {
            kind: "fabry_perot".into(),
            resolution_uev: None,
            snr: None,
        }
    }
}

/// Overrides of the plant defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlantSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_shift_uev: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold_mw: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kink_mw: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub destroy_mw: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub edge_ratio: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub waveguide_length_um: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub growth_rate_per_mw_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kink_gain: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kernel_sigma_um: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub step_noise_uev: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TuneConfig {
    /// Emitters to align; all of them when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub indices: Option<Vec<usize>>,
    pub tolerance_uev: f64,
    pub max_exposures: usize,
    /// Drive one emitter to an absolute energy instead of aligning.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target: Option<TargetConfig>,
}

impl Default for TuneConfig {
    fn default() -> Self {
        Self {
            indices: None,
            tolerance_uev: 2.0,
            max_exposures: 500,
            target: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetConfig {
    pub emitter: usize,
    pub energy_uev: f64,
}

fn field(path: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{path}: {msg}"))
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::parse(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        // make data paths independent of the working directory
        if let Some(fit) = &mut cfg.fit {
            let base = path.parent().unwrap_or(Path::new("."));
            for c in &mut fit.curves {
                let joined = if c.data.is_relative() { base.join(&c.data) } else { c.data.clone() };
                c.data = std::fs::canonicalize(&joined).unwrap_or(joined);
            }
        }
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string().trim_end().to_string()))?;
        if cfg.format_version != FORMAT_VERSION {
            return Err(field(
                "format_version",
                format!("unsupported version {} (expected {FORMAT_VERSION})", cfg.format_version),
            ));
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        let body = toml::to_string(self).expect("config serialises");
        format!("# srtune run configuration, format_version {FORMAT_VERSION}\n{body}")
    }

    pub fn check_experiment(&self, command: &str) -> Result<(), CliError> {
        match &self.experiment {
            Some(e) if e != command => Err(field("experiment", format!("config is for {e:?}, not {command:?}"))),
            _ => Ok(()),
        }
    }

    pub fn emitters(&self) -> Result<Vec<Emitter>, CliError> {
        let sys = self
            .system
            .as_ref()
            .ok_or_else(|| field("system", "section is required"))?;
        let list: Vec<Emitter> = match (&sys.ladder, sys.emitters.is_empty()) {
            (Some(_), false) => return Err(field("system", "give either emitters or ladder, not both")),
            (None, true) => return Err(field("system", "no emitters defined")),
            (None, false) => sys
                .emitters
                .iter()
                .map(|e| {
                    Emitter::new(e.energy_uev, e.gamma_per_ns, e.gamma_pd_per_ns, e.sigma_per_ns)
                        .with_intensity(e.intensity)
                        .with_position(e.position_um)
                })
                .collect(),
            (Some(l), true) => {
                if l.n == 0 {
                    return Err(field("system.ladder.n", "must be >= 1"));
                }
                for (name, v) in [("intensities", &l.intensities), ("positions_um", &l.positions_um)] {
                    if let Some(v) = v {
                        if v.len() != l.n {
                            return Err(field(&format!("system.ladder.{name}"), format!("need {} values, got {}", l.n, v.len())));
                        }
                    }
                }
                (0..l.n)
                    .map(|k| {
                        let mut e = Emitter::new(
                            l.base_energy_uev + k as f64 * l.spacing_uev,
                            l.gamma_per_ns,
                            l.gamma_pd_per_ns,
                            l.sigma_per_ns,
                        );
                        if let Some(i) = &l.intensities {
                            e = e.with_intensity(i[k]);
                        }
                        if let Some(p) = &l.positions_um {
                            e = e.with_position(p[k]);
                        }
                        e
                    })
                    .collect()
            }
        };
        for (k, e) in list.iter().enumerate() {
            e.validate().map_err(|err| field(&format!("system emitter {k}"), err))?;
        }
        Ok(list)
    }

    pub fn system(&self) -> Result<EmitterSystem, CliError> {
        EmitterSystem::new(self.emitters()?).map_err(|e| field("system", e))
    }

    pub fn coherent(&self) -> bool {
        self.system.as_ref().is_none_or(|s| s.coherent)
    }

    pub fn irf(&self) -> Result<Option<Irf>, CliError> {
        self.irf
            .as_ref()
            .map(|i| Irf::new(i.fwhm_ns).map_err(|e| field("irf.fwhm_ns", e)))
            .transpose()
    }

    pub fn instrument(&self) -> Result<Instrument, CliError> {
        let i = &self.instrument;
        let base = match i.kind.as_str() {
            "fabry_perot" => Instrument::fabry_perot(),
            "grating" => Instrument::grating(),
            other => return Err(field("instrument.kind", format!("unknown kind {other:?} (fabry_perot or grating)"))),
        };
        let kind: InstrumentKind = base.kind;
        let res = i.resolution_uev.unwrap_or(base.resolution_fwhm);
        if let Some(snr) = i.snr {
            if !(snr > 0.0) {
                return Err(field("instrument.snr", "must be > 0"));
            }
        }
        Instrument::new(kind, res).map_err(|e| field("instrument.resolution_uev", e))
    }

    pub fn plant(&self) -> Result<PlantConfig, CliError> {
        let p = &self.plant;
        let mut c = PlantConfig::default();
        let set = |slot: &mut f64, v: Option<f64>| {
            if let Some(v) = v {
                *slot = v;
            }
        };
        set(&mut c.max_shift, p.max_shift_uev);
        set(&mut c.threshold_power, p.threshold_mw);
        set(&mut c.kink_power, p.kink_mw);
        set(&mut c.destroy_power, p.destroy_mw);
        set(&mut c.edge_ratio, p.edge_ratio);
        set(&mut c.waveguide_length, p.waveguide_length_um);
        set(&mut c.growth_rate, p.growth_rate_per_mw_s);
        set(&mut c.kink_gain, p.kink_gain);
        set(&mut c.kernel_sigma, p.kernel_sigma_um);
        set(&mut c.step_noise, p.step_noise_uev);
        c.validate().map_err(|e| field("plant", e))?;
        Ok(c)
    }

    pub fn check_model(&self) -> Result<(), CliError> {
        let m = &self.model;
        if !(m.half_span_ns > 0.0) || !(m.step_ns > 0.0) || m.step_ns > m.half_span_ns {
            return Err(field("model", "need 0 < step_ns <= half_span_ns"));
        }
        Ok(())
    }

    pub fn check_simulate(&self) -> Result<(), CliError> {
        let s = &self.simulate;
        if s.mc_realizations > 0 && (s.mc_points < 2 || !(s.mc_half_span_ns > 0.0)) {
            return Err(field("simulate", "mc_points must be >= 2 and mc_half_span_ns > 0"));
        }
        if !(s.window_ns > 0.0) || !(s.bin_ns > 0.0) || s.bin_ns > s.window_ns {
            return Err(field("simulate", "need 0 < bin_ns <= window_ns"));
        }
        let [lo, hi] = s.plateau_ns;
        if !(0.0 <= lo && lo < hi) {
            return Err(field("simulate.plateau_ns", "need 0 <= lo < hi"));
        }
        Ok(())
    }

    pub fn fit_section(&self) -> Result<&FitConfig, CliError> {
        let f = self.fit.as_ref().ok_or_else(|| field("fit", "section is required"))?;
        if f.curves.is_empty() {
            return Err(field("fit.curves", "need at least one curve"));
        }
        for (k, c) in f.curves.iter().enumerate() {
            if c.emitters == 0 {
                return Err(field(&format!("fit.curves[{k}].emitters"), "must be >= 1"));
            }
            if let Some(i) = &c.intensities {
                if i.len() != c.emitters {
                    return Err(field(&format!("fit.curves[{k}].intensities"), format!("need {} values", c.emitters)));
                }
            }
        }
        if f.oversample == 0 {
            return Err(field("fit.oversample", "must be >= 1"));
        }
        Ok(f)
    }

    pub fn check_tune(&self, n: usize) -> Result<(), CliError> {
        let t = &self.tune;
        if let Some(idx) = &t.indices {
            if let Some(bad) = idx.iter().find(|&&i| i >= n) {
                return Err(field("tune.indices", format!("no emitter {bad}")));
            }
        }
        if let Some(target) = &t.target {
            if target.emitter >= n {
                return Err(field("tune.target.emitter", format!("no emitter {}", target.emitter)));
            }
        }
        Ok(())
    }
}
