//! Fits of measured g² curves to the forward model convolved with the IRF.
//!
//! Several curves can be fitted jointly. Each curve binds the four model
//! roles (γ, γ_pd, σ, δ) to parameter names; a name is either free (with a
//! guess and bounds) or fixed. Sharing a name across curves shares the
//! parameter, which is how σ and γ_pd are tied while γ varies per curve.

use std::collections::{BTreeMap, BTreeSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::lsq::{jacobian, levenberg_marquardt, standard_errors, LmOptions};
use super::simplex::{minimize, Bounds, SimplexOptions};
use crate::emitter::{Emitter, EmitterSystem};
use crate::error::{invalid, Error, Result};
use crate::g2::{g2_general, g2_ideal, G2Curve};
use crate::irf::{convolve_taps, gaussian_taps, Irf};
use crate::units::energy_to_angular;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    /// Identical emitters, equal intensities.
    Ideal,
    /// Per-emitter intensities.
    General,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Role {
    Gamma,
    GammaPd,
    Sigma,
    /// Spacing of the emitter energy ladder, μeV.
    Detuning,
}

impl Role {
    pub const ALL: [Role; 4] = [Role::Gamma, Role::GammaPd, Role::Sigma, Role::Detuning];

    pub fn default_name(self) -> &'static str {
        match self {
            Role::Gamma => "gamma",
            Role::GammaPd => "gamma_pd",
            Role::Sigma => "sigma",
            Role::Detuning => "delta",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

/// Model description for one curve. Emitters sit on an energy ladder
/// `k·δ`, so N = 2 has detuning δ and N = 3 has δ and 2δ.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveSpec {
    pub model: ModelKind,
    pub coherent: bool,
    pub intensities: Vec<f64>,
    names: [String; 4],
}

impl CurveSpec {
    /// `n` emitters with equal intensities, default parameter names.
    pub fn new(model: ModelKind, n: usize) -> Self {
        Self {
            model,
            coherent: true,
            intensities: vec![1.0; n],
            names: Role::ALL.map(|r| r.default_name().to_string()),
        }
    }

    pub fn with_intensities(mut self, intensities: Vec<f64>) -> Self {
        self.intensities = intensities;
        self
    }

    pub fn coherent(mut self, coherent: bool) -> Self {
        self.coherent = coherent;
        self
    }

    pub fn bind(mut self, role: Role, name: impl Into<String>) -> Self {
        self.names[role.index()] = name.into();
        self
    }

    pub fn name(&self, role: Role) -> &str {
        &self.names[role.index()]
    }

    pub fn n_emitters(&self) -> usize {
        self.intensities.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FreeParam {
    pub name: String,
    pub initial: f64,
    pub lower: f64,
    pub upper: f64,
}

impl FreeParam {
    pub fn new(name: impl Into<String>, initial: f64, lower: f64, upper: f64) -> Self {
        Self {
            name: name.into(),
            initial,
            lower,
            upper,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    /// Randomised restarts in addition to the start from the initial guesses.
    pub restarts: usize,
    pub seed: u64,
    /// Model sub-samples per data point; data are treated as bin averages.
    pub oversample: usize,
    /// Finish with a Levenberg–Marquardt polish.
    pub refine: bool,
    /// Points within this many IRF FWHM of either end of a curve are left
    /// out: jitter moves counts out of the recorded window but nothing in.
    pub edge_guard: f64,
    pub simplex: SimplexOptions,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            restarts: 3,
            seed: 0,
            oversample: 1,
            refine: true,
            edge_guard: 3.0,
            simplex: SimplexOptions {
                max_evals: 6_000,
                f_tol: 1e-10,
                x_tol: 1e-7,
                initial_step: 0.15,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitSpec {
    pub curves: Vec<CurveSpec>,
    pub fixed: BTreeMap<String, f64>,
    pub free: Vec<FreeParam>,
    pub irf: Option<Irf<f64>>,
    /// |τ| window over which both data and model are normalised to unity.
    pub plateau: Option<(f64, f64)>,
    pub options: FitOptions,
}

impl FitSpec {
    pub fn new(curves: Vec<CurveSpec>) -> Self {
        Self {
            curves,
            fixed: BTreeMap::new(),
            free: Vec::new(),
            irf: None,
            plateau: None,
            options: FitOptions::default(),
        }
    }

    pub fn free(mut self, p: FreeParam) -> Self {
        self.free.push(p);
        self
    }

    pub fn fix(mut self, name: impl Into<String>, value: f64) -> Self {
        self.fixed.insert(name.into(), value);
        self
    }

    pub fn with_irf(mut self, irf: Irf<f64>) -> Self {
        self.irf = Some(irf);
        self
    }

    pub fn with_plateau(mut self, lo: f64, hi: f64) -> Self {
        self.plateau = Some((lo, hi));
        self
    }

    pub fn with_options(mut self, options: FitOptions) -> Self {
        self.options = options;
        self
    }

    /// Joint spec following the shared-linewidth protocol: one γ_pd and σ
    /// for all curves, γ per curve (`gamma_<k>`), and per-curve ladder
    /// spacing (`delta_<k>`) free where a guess is given, else fixed to 0.
    pub fn shared_linewidth(curves: &[(Vec<f64>, Option<f64>)]) -> Self {
        let mut specs = Vec::new();
        let mut spec_free = vec![
            FreeParam::new("gamma_pd", 2.0, 0.0, 20.0),
            FreeParam::new("sigma", 0.8, 0.0, 5.0),
        ];
        let mut fixed = BTreeMap::new();
        for (k, (intensities, delta)) in curves.iter().enumerate() {
            let g = format!("gamma_{k}");
            let d = format!("delta_{k}");
            spec_free.push(FreeParam::new(&g, 1.0, 0.05, 10.0));
            match delta {
                Some(guess) if intensities.len() > 1 => {
                    spec_free.push(FreeParam::new(&d, *guess, 0.0, 100.0))
                }
                _ => {
                    fixed.insert(d.clone(), 0.0);
                }
            }
            specs.push(
                CurveSpec::new(ModelKind::General, intensities.len())
                    .with_intensities(intensities.clone())
                    .bind(Role::Gamma, g)
                    .bind(Role::Detuning, d),
            );
        }
        // single emitters carry no coherence information
        let uses_coherence = curves.iter().any(|(i, _)| i.len() > 1);
        let mut s = Self::new(specs);
        if uses_coherence {
            s.free = spec_free;
        } else {
            s.free = spec_free.split_off(2);
            s.fixed.insert("gamma_pd".into(), 0.0);
            s.fixed.insert("sigma".into(), 0.0);
        }
        s.fixed.extend(fixed);
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundStatus {
    Free,
    AtLower,
    AtUpper,
    Fixed,
}

impl BoundStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            BoundStatus::Free => "free",
            BoundStatus::AtLower => "at-lower",
            BoundStatus::AtUpper => "at-upper",
            BoundStatus::Fixed => "fixed",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamEstimate {
    pub name: String,
    pub value: f64,
    pub std_error: Option<f64>,
    pub status: BoundStatus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    /// Free parameters in spec order followed by fixed ones.
    pub estimates: Vec<ParamEstimate>,
    /// Weighted sum of squared residuals.
    pub residual_norm: f64,
    pub n_points: usize,
    pub n_free: usize,
    pub n_iterations: usize,
    pub converged: bool,
    /// Best objective after each simplex iteration of the winning start.
    pub history: Vec<f64>,
}

impl FitResult {
    pub fn value(&self, name: &str) -> Option<f64> {
        self.estimates.iter().find(|e| e.name == name).map(|e| e.value)
    }

    pub fn estimate(&self, name: &str) -> Option<&ParamEstimate> {
        self.estimates.iter().find(|e| e.name == name)
    }

    pub fn reduced_chi2(&self) -> f64 {
        self.residual_norm / (self.n_points.saturating_sub(self.n_free)).max(1) as f64
    }
}

#[derive(Debug, Clone, Copy)]
enum Source {
    Free(usize),
    Fixed(f64),
}

/// Model evaluation plan for one data curve.
struct CurvePlan {
    spec: CurveSpec,
    sources: [Source; 4],
    fine: Vec<f64>,
    taps: Option<Vec<f64>>,
    pad: usize,
    sub: usize,
    plateau_idx: Vec<usize>,
    /// Data points that enter the residuals.
    used: Vec<usize>,
    /// Renormalises the data to unity over the used plateau points.
    data_scale: f64,
}

impl CurvePlan {
    fn new(
        data: &G2Curve<f64>,
        spec: &CurveSpec,
        sources: [Source; 4],
        irf: Option<&Irf<f64>>,
        plateau: Option<(f64, f64)>,
        oversample: usize,
        edge_guard: f64,
    ) -> Result<Self> {
        let delays = data.delays();
        let half_bin = 0.5 * data.uniform_step().unwrap_or(0.0);
        let guard = irf.map_or(0.0, |i| edge_guard * i.fwhm);
        let (first, last) = (delays[0] - half_bin, delays[delays.len() - 1] + half_bin);
        let used: Vec<usize> = (0..delays.len())
            .filter(|&k| delays[k] - first >= guard && last - delays[k] >= guard)
            .collect();
        if used.is_empty() {
            return Err(invalid("edge guard leaves no data points"));
        }
        let mut sub = oversample.max(1);
        let (fine, taps, pad) = match (data.uniform_step(), irf) {
            (Some(h), irf) => {
                if let Some(i) = irf {
                    sub = sub.max((h / i.max_step() - 1e-9).ceil() as usize);
                }
                let step = h / sub as f64;
                let (taps, pad) = match irf {
                    Some(i) => {
                        let taps = gaussian_taps(i.sigma(), step);
                        let pad = taps.len() / 2;
                        (Some(taps), pad)
                    }
                    None => (None, 0),
                };
                let start = delays[0] - 0.5 * h + 0.5 * step - pad as f64 * step;
                let n = delays.len() * sub + 2 * pad;
                let fine = (0..n).map(|k| start + k as f64 * step).collect();
                (fine, taps, pad)
            }
            (None, None) if sub == 1 => (delays.to_vec(), None, 0),
            (None, _) => return Err(invalid("IRF convolution and oversampling need a uniform delay grid")),
        };
        let plateau_idx = match plateau {
            Some((lo, hi)) => {
                let idx: Vec<usize> = used
                    .iter()
                    .copied()
                    .filter(|&k| (lo..=hi).contains(&delays[k].abs()))
                    .collect();
                if idx.is_empty() {
                    return Err(Error::EmptyPlateau {
                        nonzero: 0,
                        required: 1,
                    });
                }
                idx
            }
            None => Vec::new(),
        };
        let data_scale = if plateau_idx.is_empty() {
            1.0
        } else {
            let mean = plateau_idx.iter().map(|&k| data.values()[k]).sum::<f64>() / plateau_idx.len() as f64;
            if !(mean > 0.0) {
                return Err(Error::EmptyPlateau {
                    nonzero: 0,
                    required: 1,
                });
            }
            1.0 / mean
        };
        Ok(Self {
            spec: spec.clone(),
            sources,
            fine,
            taps,
            pad,
            sub,
            plateau_idx,
            used,
            data_scale,
        })
    }

    fn resolve(&self, x: &[f64]) -> [f64; 4] {
        self.sources.map(|s| match s {
            Source::Free(k) => x[k],
            Source::Fixed(v) => v,
        })
    }

    /// Predicted data values, or `None` for unphysical parameters.
    fn predict(&self, x: &[f64], n_data: usize) -> Option<Vec<f64>> {
        let [gamma, gamma_pd, sigma, delta] = self.resolve(x);
        if !(gamma > 0.0) || gamma_pd < 0.0 || sigma < 0.0 {
            return None;
        }
        let n = self.spec.n_emitters();
        let raw: Vec<f64> = match self.spec.model {
            ModelKind::General => {
                let template = Emitter::new(0.0, gamma, gamma_pd, sigma);
                let sys = EmitterSystem::ladder(n, template, delta)
                    .ok()?
                    .with_intensities(&self.spec.intensities)
                    .ok()?;
                self.fine
                    .iter()
                    .map(|&t| g2_general(&sys, t, self.spec.coherent))
                    .collect()
            }
            ModelKind::Ideal => {
                let mut det = vec![0.0; n * n];
                for i in 0..n {
                    for j in 0..n {
                        det[i * n + j] = energy_to_angular((i as f64 - j as f64) * delta);
                    }
                }
                let big_gamma = gamma / 2.0 + gamma_pd;
                let nf = n as f64;
                self.fine
                    .iter()
                    .map(|&t| {
                        if self.spec.coherent {
                            g2_ideal(n, gamma, big_gamma, sigma, &det, t).unwrap_or(f64::NAN)
                        } else {
                            1.0 - (-gamma * t.abs()).exp() / nf
                        }
                    })
                    .collect()
            }
        };
        let smooth = match &self.taps {
            Some(taps) => convolve_taps(&raw, taps),
            None => raw,
        };
        let mut pred: Vec<f64> = (0..n_data)
            .map(|k| {
                let s = self.pad + k * self.sub;
                smooth[s..s + self.sub].iter().sum::<f64>() / self.sub as f64
            })
            .collect();
        if !self.plateau_idx.is_empty() {
            let mean = self.plateau_idx.iter().map(|&k| pred[k]).sum::<f64>()
                / self.plateau_idx.len() as f64;
            if !(mean > 0.0) {
                return None;
            }
            for v in &mut pred {
                *v /= mean;
            }
        }
        pred.iter().all(|v| v.is_finite()).then_some(pred)
    }
}

struct Problem<'a> {
    data: &'a [G2Curve<f64>],
    plans: Vec<CurvePlan>,
    n_points: usize,
}

impl Problem<'_> {
    fn residuals(&self, x: &[f64], out: &mut [f64]) -> bool {
        let mut k = 0;
        for (curve, plan) in self.data.iter().zip(&self.plans) {
            let Some(pred) = plan.predict(x, curve.len()) else {
                return false;
            };
            let err = curve.errors().expect("validated");
            let (v, c) = (curve.values(), plan.data_scale);
            for &j in &plan.used {
                out[k] = (c * v[j] - pred[j]) / (c * err[j]);
                k += 1;
            }
        }
        true
    }

    fn chi2(&self, x: &[f64]) -> f64 {
        let mut r = vec![0.0; self.n_points];
        if self.residuals(x, &mut r) {
            r.iter().map(|v| v * v).sum()
        } else {
            f64::INFINITY
        }
    }
}

/// Model prediction for one curve at parameter values looked up by name.
pub fn predict_curve(
    data: &G2Curve<f64>,
    curve: &CurveSpec,
    values: &BTreeMap<String, f64>,
    irf: Option<&Irf<f64>>,
    plateau: Option<(f64, f64)>,
    oversample: usize,
) -> Result<Vec<f64>> {
    let mut sources = [Source::Fixed(0.0); 4];
    for role in Role::ALL {
        let name = curve.name(role);
        let v = values
            .get(name)
            .ok_or_else(|| invalid(format!("no value for parameter {name:?}")))?;
        sources[role.index()] = Source::Fixed(*v);
    }
    let guard = FitOptions::default().edge_guard;
    let plan = CurvePlan::new(data, curve, sources, irf, plateau, oversample, guard)?;
    plan.predict(&[], data.len())
        .ok_or_else(|| invalid("parameters outside the physical domain"))
}

fn validate(data: &[G2Curve<f64>], spec: &FitSpec) -> Result<()> {
    if data.is_empty() || data.len() != spec.curves.len() {
        return Err(invalid(format!(
            "{} data curves for {} curve specs",
            data.len(),
            spec.curves.len()
        )));
    }
    let mut seen = BTreeSet::new();
    for p in &spec.free {
        if !seen.insert(p.name.as_str()) {
            return Err(invalid(format!("free parameter {:?} listed twice", p.name)));
        }
        if spec.fixed.contains_key(&p.name) {
            return Err(invalid(format!("parameter {:?} is both free and fixed", p.name)));
        }
        if !(p.lower < p.upper) || !(p.lower..=p.upper).contains(&p.initial) {
            return Err(invalid(format!(
                "parameter {:?}: bounds [{}, {}] must contain guess {}",
                p.name, p.lower, p.upper, p.initial
            )));
        }
    }
    for (c, curve) in spec.curves.iter().enumerate() {
        if curve.intensities.is_empty() {
            return Err(invalid(format!("curve {c}: no emitters")));
        }
        for role in Role::ALL {
            let name = curve.name(role);
            if !seen.contains(name) && !spec.fixed.contains_key(name) {
                return Err(invalid(format!(
                    "curve {c}: parameter {name:?} is neither free nor fixed"
                )));
            }
        }
    }
    let mut all_equal = true;
    let mut n_points = 0;
    for (c, d) in data.iter().enumerate() {
        let errors = d
            .errors()
            .ok_or_else(|| invalid(format!("curve {c} has no per-point errors")))?;
        if errors.iter().any(|e| !(*e > 0.0)) {
            return Err(invalid(format!("curve {c}: per-point errors must be > 0")));
        }
        let first = d.values()[0];
        all_equal &= d.values().iter().all(|v| *v == first);
        n_points += d.len();
    }
    if all_equal {
        return Err(Error::DegenerateData("all data values are equal".into()));
    }
    if n_points < 10 * spec.free.len().max(1) {
        return Err(invalid(format!(
            "{n_points} points is fewer than 10 per free parameter ({})",
            spec.free.len()
        )));
    }
    Ok(())
}

/// Minimises Σ[(data − model)/error]² over the free parameters.
pub fn fit_g2(data: &[G2Curve<f64>], spec: &FitSpec) -> Result<FitResult> {
    validate(data, spec)?;
    let index: BTreeMap<&str, usize> = spec
        .free
        .iter()
        .enumerate()
        .map(|(k, p)| (p.name.as_str(), k))
        .collect();
    let mut plans = Vec::with_capacity(data.len());
    for (d, curve) in data.iter().zip(&spec.curves) {
        let sources = Role::ALL.map(|r| {
            let name = curve.name(r);
            match index.get(name) {
                Some(&k) => Source::Free(k),
                None => Source::Fixed(spec.fixed[name]),
            }
        });
        plans.push(CurvePlan::new(
            d,
            curve,
            sources,
            spec.irf.as_ref(),
            spec.plateau,
            spec.options.oversample,
            spec.options.edge_guard,
        )?);
    }
    let problem = Problem {
        data,
        n_points: plans.iter().map(|p| p.used.len()).sum(),
        plans,
    };
    let bounds = Bounds::new(
        spec.free.iter().map(|p| p.lower).collect(),
        spec.free.iter().map(|p| p.upper).collect(),
    );
    let x0: Vec<f64> = spec.free.iter().map(|p| p.initial).collect();

    if spec.free.is_empty() {
        let chi2 = problem.chi2(&[]);
        if !chi2.is_finite() {
            return Err(Error::FitFailure("fixed parameters give an invalid model".into()));
        }
        return Ok(assemble(spec, &[], &[], chi2, &problem, 0, true, Vec::new(), &bounds));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.options.seed);
    let mut starts = vec![x0];
    for _ in 0..spec.options.restarts {
        starts.push(bounds.sample(&mut rng));
    }
    let runs: Vec<_> = starts
        .par_iter()
        .map(|s| minimize(|x| problem.chi2(x), s, &bounds, &spec.options.simplex))
        .collect();
    let mut iterations: usize = runs.iter().map(|r| r.iterations).sum();
    let best = runs
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.f.total_cmp(&b.1.f).then(a.0.cmp(&b.0)))
        .map(|(_, r)| r.clone())
        .expect("at least one start");
    if !best.f.is_finite() {
        return Err(Error::FitFailure("no start produced a finite objective".into()));
    }
    // restart once from the winner with a fresh simplex
    let polish = minimize(
        |x| problem.chi2(x),
        &best.x,
        &bounds,
        &SimplexOptions {
            initial_step: 0.02,
            ..spec.options.simplex
        },
    );
    iterations += polish.iterations;
    let mut history = best.history.clone();
    let (mut x, mut f, mut converged) = if polish.f <= best.f {
        history.extend(polish.history.iter().copied());
        (polish.x, polish.f, polish.converged || best.converged)
    } else {
        (best.x.clone(), best.f, best.converged)
    };

    let n_res = problem.n_points;
    let mut resid = |p: &[f64], out: &mut [f64]| {
        if !problem.residuals(p, out) {
            out.iter_mut().for_each(|v| *v = 1e150);
        }
    };
    if spec.options.refine {
        let lm = levenberg_marquardt(&mut resid, &x, n_res, &bounds, &LmOptions::default());
        iterations += lm.iterations;
        if lm.cost < f {
            x = lm.x;
            f = lm.cost;
            converged |= lm.converged;
            history.push(f);
        }
    }
    let jac = jacobian(&mut resid, &x, n_res, &bounds);
    let jtj = jac.transpose() * jac;
    let se = standard_errors(&jtj, 1.0);
    Ok(assemble(spec, &x, &se, f, &problem, iterations, converged, history, &bounds))
}

#[allow(clippy::too_many_arguments)]
fn assemble(
    spec: &FitSpec,
    x: &[f64],
    se: &[Option<f64>],
    chi2: f64,
    problem: &Problem<'_>,
    iterations: usize,
    converged: bool,
    history: Vec<f64>,
    bounds: &Bounds,
) -> FitResult {
    let mut estimates = Vec::new();
    for (k, p) in spec.free.iter().enumerate() {
        let range = bounds.upper[k] - bounds.lower[k];
        let status = if x[k] <= p.lower + 1e-9 * range {
            BoundStatus::AtLower
        } else if x[k] >= p.upper - 1e-9 * range {
            BoundStatus::AtUpper
        } else {
            BoundStatus::Free
        };
        estimates.push(ParamEstimate {
            name: p.name.clone(),
            value: x[k],
            std_error: se.get(k).copied().flatten(),
            status,
        });
    }
    for (name, v) in &spec.fixed {
        estimates.push(ParamEstimate {
            name: name.clone(),
            value: *v,
            std_error: None,
            status: BoundStatus::Fixed,
        });
    }
    FitResult {
        estimates,
        residual_norm: chi2,
        n_points: problem.n_points,
        n_free: spec.free.len(),
        n_iterations: iterations,
        converged,
        history,
    }
}
