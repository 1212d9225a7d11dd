//! The four subcommands. Each validates everything it needs up front, then
//! runs and writes its files into the output directory.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sr_core::emitter::EmitterSystem;
use sr_core::g2::{g2_general, linspace, symmetric_grid, G2Curve};
use sr_core::inference::report::overlay_table;
use sr_core::inference::{fit_g2, predict_curve, FitOptions, FitSpec};
use sr_core::irf::convolve_irf;
use sr_core::photon_mc::{
    mc_g2, normalize_histogram, sample_coincidences, CoincidenceConfig, G2Histogram, RngSeed,
};
use sr_core::spectro::{energy_grid, measured_linewidth, synth_spectrum, Instrument, Spectrum};
use sr_core::strain::{PlantState, Tuner};
use sr_core::textio::{format_num, Table};

use crate::config::RunConfig;
use crate::error::{CliError, Context};

/// Stream ids keep the random draws of different stages independent.
const MC_STREAM: u32 = 0;
const HISTOGRAM_STREAM: u32 = 1;
const SPECTRUM_STREAM: u32 = 20;

pub struct Output {
    dir: PathBuf,
}

impl Output {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(|source| CliError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        Ok(Self { dir: dir.to_path_buf() })
    }

    pub fn write(&self, name: &str, text: &str) -> Result<(), CliError> {
        let path = self.dir.join(name);
        std::fs::write(&path, text).map_err(|source| CliError::Io { path, source })
    }
}

struct Summary(String);

impl Summary {
    fn new(title: &str) -> Self {
        Self(format!("# {title}\n"))
    }

    fn put(&mut self, key: &str, value: impl std::fmt::Display) {
        let _ = writeln!(self.0, "{key} = {value}");
    }

    fn num(&mut self, key: &str, v: f64) {
        self.put(key, format_num(v));
    }
}

fn curve_table(columns: &[&str], delays: &[f64], series: &[&[f64]]) -> Table {
    let mut t = Table::new(columns);
    for (k, tau) in delays.iter().enumerate() {
        let mut row = vec![*tau];
        row.extend(series.iter().map(|s| s[k]));
        t.push(row);
    }
    t
}

pub fn model(cfg: &RunConfig, out: &Output) -> Result<(), CliError> {
    cfg.check_model()?;
    let sys = cfg.system()?;
    let irf = cfg.irf()?;
    let coherent = cfg.coherent();
    let grid = symmetric_grid(cfg.model.half_span_ns, cfg.model.step_ns);
    let curve = G2Curve::model(&sys, grid.clone(), coherent).context("model curve")?;
    let base = G2Curve::model(&sys, grid, false).context("model curve")?;
    let z = curve.zero_index();

    let mut s = Summary::new("g2 model summary v1");
    s.put("emitters", sys.len());
    s.put("coherent", coherent);
    s.num("g2_0", curve.values()[z]);
    s.num("g2_0_distinguishable", base.values()[z]);
    s.num("coherent_peak_height", curve.values()[z] - base.values()[z]);
    if let Some(w) = curve.central_peak_fwhm(base.values()) {
        s.num("coherent_peak_fwhm_ns", w);
    }
    let mut columns = vec!["tau_ns", "g2", "g2_distinguishable"];
    let mut series: Vec<Vec<f64>> = vec![curve.values().to_vec(), base.values().to_vec()];
    if let Some(irf) = &irf {
        let c = convolve_irf(&curve, irf).context("IRF convolution")?;
        let b = convolve_irf(&base, irf).context("IRF convolution")?;
        s.num("irf_fwhm_ns", irf.fwhm);
        s.num("g2_0_irf", c.values()[z]);
        s.num("coherent_peak_height_irf", c.values()[z] - b.values()[z]);
        if let Some(w) = c.central_peak_fwhm(b.values()) {
            s.num("coherent_peak_fwhm_irf_ns", w);
        }
        columns.push("g2_irf");
        series.push(c.values().to_vec());
    }
    let refs: Vec<&[f64]> = series.iter().map(Vec::as_slice).collect();
    out.write("curve.txt", &curve_table(&columns, curve.delays(), &refs).render("g2 model curve v1"))?;
    out.write("summary.txt", &s.0)
}

pub fn simulate(cfg: &RunConfig, out: &Output) -> Result<(), CliError> {
    cfg.check_simulate()?;
    let sys = cfg.system()?;
    let irf = cfg.irf()?;
    let sim = &cfg.simulate;
    let mut s = Summary::new("simulation report v1");
    s.put("seed", cfg.seed);

    if sim.mc_realizations > 0 {
        let taus = linspace(-sim.mc_half_span_ns, sim.mc_half_span_ns, sim.mc_points);
        let seed = RngSeed::new(cfg.seed).with_stream(MC_STREAM);
        let mc = mc_g2(&sys, &taus, sim.mc_realizations, seed).context("Monte Carlo g2")?;
        // trajectories always carry pair coherence
        let analytic: Vec<f64> = taus.iter().map(|&t| g2_general(&sys, t, true)).collect();
        let se = mc.errors().expect("Monte Carlo curves carry errors");
        let mut worst: f64 = 0.0;
        let mut beyond = 0usize;
        let mut pass = true;
        let z: Vec<f64> = (0..taus.len())
            .map(|k| {
                let d = (mc.values()[k] - analytic[k]).abs();
                let z = if se[k] > 0.0 {
                    d / se[k]
                } else if d <= 1e-12 {
                    0.0
                } else {
                    f64::INFINITY
                };
                worst = worst.max(z);
                if z > 3.0 {
                    beyond += 1;
                    pass = false;
                }
                z
            })
            .collect();
        out.write(
            "mc_g2.txt",
            &curve_table(
                &["tau_ns", "g2_mc", "g2_mc_error", "g2_analytic", "z"],
                &taus,
                &[mc.values(), se, &analytic, &z],
            )
            .meta("realizations", sim.mc_realizations)
            .render("monte carlo g2 v1"),
        )?;
        s.put("mc_realizations", sim.mc_realizations);
        s.num("oracle_worst_z", worst);
        s.put("oracle_points_beyond_3se", beyond);
        s.put("oracle_pass", pass);
    }

    if sim.events > 0 {
        let step = irf.map_or(0.002, |i| i.max_step().min(0.002));
        let model = G2Curve::model(&sys, symmetric_grid(sim.window_ns, step), cfg.coherent()).context("sampling model")?;
        let cc = CoincidenceConfig {
            window: sim.window_ns,
            bin_width: sim.bin_ns,
            plateau: (sim.plateau_ns[0], sim.plateau_ns[1]),
        };
        let seed = RngSeed::new(cfg.seed).with_stream(HISTOGRAM_STREAM);
        let h = sample_coincidences(&model, sim.events, &cc, irf.as_ref(), seed).context("coincidence sampling")?;
        let curve = normalize_histogram(&h).context("histogram normalisation")?;
        out.write("histogram.txt", &h.to_text())?;
        let err = curve.errors().expect("normalised histograms carry errors");
        out.write(
            "histogram_normalized.txt",
            &curve_table(&["tau_ns", "g2", "g2_error"], curve.delays(), &[curve.values(), err]).render("normalized g2 v1"),
        )?;
        s.put("events", sim.events);
        s.num("histogram_g2_0", curve.values()[curve.zero_index()]);
        if let Some(m) = curve.window_mean(cc.plateau.0, cc.plateau.1) {
            s.num("histogram_plateau_mean", m);
        }
    }
    out.write("report.txt", &s.0)
}

/// Reads a histogram (normalised on load) or a `tau_ns,g2,g2_error` table.
fn load_curve(path: &Path) -> Result<G2Curve<f64>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let what = path.display().to_string();
    let table = Table::parse(&text).context(what.clone())?;
    if table.column("counts").is_some() {
        let h = G2Histogram::from_text(&text).context(what.clone())?;
        return normalize_histogram(&h).context(what);
    }
    let col = |name: &str| table.require_column(name).context(what.clone());
    G2Curve::with_errors(col("tau_ns")?, col("g2")?, col("g2_error")?).context(what)
}

pub fn fit(cfg: &RunConfig, out: &Output) -> Result<(), CliError> {
    let f = cfg.fit_section()?;
    let irf = cfg.irf()?;
    let data: Vec<G2Curve<f64>> = f.curves.iter().map(|c| load_curve(&c.data)).collect::<Result<_, _>>()?;
    let curves: Vec<(Vec<f64>, Option<f64>)> = f
        .curves
        .iter()
        .map(|c| (c.intensities.clone().unwrap_or_else(|| vec![1.0; c.emitters]), c.delta_guess_uev))
        .collect();
    let mut spec = FitSpec::shared_linewidth(&curves)
        .with_plateau(f.plateau_ns[0], f.plateau_ns[1])
        .with_options(FitOptions {
            restarts: f.restarts,
            seed: cfg.seed,
            oversample: f.oversample,
            ..FitOptions::default()
        });
    if let Some(irf) = irf {
        spec = spec.with_irf(irf);
    }
    for (name, v) in &f.fixed {
        let was_free = spec.free.iter().any(|p| &p.name == name);
        if !was_free && !spec.fixed.contains_key(name) {
            return Err(CliError::Config(format!("fit.fixed: no parameter {name:?}")));
        }
        spec.free.retain(|p| &p.name != name);
        spec.fixed.insert(name.clone(), *v);
    }
    let result = fit_g2(&data, &spec).context("fit")?;
    let values = result
        .estimates
        .iter()
        .map(|e| (e.name.clone(), e.value))
        .collect();
    for (k, (d, c)) in data.iter().zip(&spec.curves).enumerate() {
        let model = predict_curve(d, c, &values, spec.irf.as_ref(), spec.plateau, f.oversample).context("model prediction")?;
        out.write(&format!("overlay_{k}.txt"), &overlay_table(d, &model).render("g2 fit overlay v1"))?;
    }
    out.write("fit_values.txt", &result.to_key_values())?;
    out.write("fit_report.txt", &result.report())
}

fn spectrum(sys: &EmitterSystem<f64>, inst: &Instrument, snr: Option<f64>, seed: RngSeed, unit: u32) -> Result<Spectrum, CliError> {
    let e: Vec<f64> = sys.emitters().iter().map(|e| e.energy).collect();
    let width = sys
        .emitters()
        .iter()
        .map(|e| measured_linewidth(e, inst))
        .fold(0.0, f64::max);
    let margin = 12.0 * width + 5.0 * inst.resolution_fwhm;
    let lo = e.iter().copied().fold(f64::INFINITY, f64::min) - margin;
    let hi = e.iter().copied().fold(f64::NEG_INFINITY, f64::max) + margin;
    let grid = energy_grid(lo, hi, inst.max_step());
    synth_spectrum(sys, inst, &grid, snr, &mut seed.rng(unit)).context("spectrum")
}

pub fn tune(cfg: &RunConfig, out: &Output) -> Result<(), CliError> {
    let emitters = cfg.emitters()?;
    let plant = cfg.plant()?;
    let inst = cfg.instrument()?;
    cfg.check_tune(emitters.len())?;
    let t = &cfg.tune;
    let mut state = PlantState::new(emitters).context("plant")?;
    let seed = RngSeed::new(cfg.seed).with_stream(SPECTRUM_STREAM);
    let snr = cfg.instrument.snr;
    let before = EmitterSystem::new(state.current_emitters()).context("system")?;
    out.write("spectrum_before.txt", &spectrum(&before, &inst, snr, seed, 0)?.to_text())?;
    let initial = state.energies();

    let mut tuner = Tuner::new(&plant, cfg.seed);
    let indices: Vec<usize> = t.indices.clone().unwrap_or_else(|| (0..state.len()).collect());
    let (mode, log) = match &t.target {
        Some(target) => (
            "target",
            tuner
                .tune_to_target(&mut state, target.emitter, target.energy_uev, t.tolerance_uev, t.max_exposures)
                .context(format!("tuning emitter {}", target.emitter))?,
        ),
        None => (
            "align",
            tuner
                .align_resonance(&mut state, &indices, t.tolerance_uev, t.max_exposures)
                .context("alignment")?,
        ),
    };
    let after = EmitterSystem::new(state.current_emitters()).context("system")?;
    out.write("spectrum_after.txt", &spectrum(&after, &inst, snr, seed, 1)?.to_text())?;
    out.write("journal.txt", &log.to_text())?;

    let mut s = Summary::new("tuning report v1");
    s.put("mode", mode);
    s.put("exposures", log.len());
    s.put("alive", state.alive());
    for (k, (a, b)) in initial.iter().zip(state.energies()).enumerate() {
        s.num(&format!("E{k}_initial_ueV"), *a);
        s.num(&format!("E{k}_final_ueV"), b);
    }
    let chosen: Vec<f64> = match &t.target {
        Some(target) => vec![state.energy(target.emitter), target.energy_uev],
        None => indices.iter().map(|&i| state.energy(i)).collect(),
    };
    let spread = chosen.iter().copied().fold(f64::NEG_INFINITY, f64::max) - chosen.iter().copied().fold(f64::INFINITY, f64::min);
    s.num("final_spread_ueV", spread);
    out.write("report.txt", &s.0)
}
