//! Analytic second-order correlation for N emitters in one waveguide mode.

use crate::emitter::{pair_coupling, EmitterSystem};
use crate::error::{invalid, Result};
use crate::scalar::Real;

/// g²(τ) for `n` identical emitters (single γ, Γ, σ) with pairwise angular
/// detunings `detunings` given row-major as an `n × n` matrix (rad/ns).
/// Only off-diagonal entries are read.
pub fn g2_ideal<T: Real>(n: usize, gamma: T, big_gamma: T, sigma: T, detunings: &[T], tau: T) -> Result<T> {
    if n == 0 {
        return Err(invalid("N must be >= 1"));
    }
    if !(gamma > T::zero()) {
        return Err(invalid(format!("gamma must be > 0, got {gamma}")));
    }
    if detunings.len() != n * n {
        return Err(invalid(format!(
            "detuning matrix has {} entries, expected {}",
            detunings.len(),
            n * n
        )));
    }
    let t = tau.abs();
    let nf = T::from_usize_lossy(n);
    let four_pi_sq = T::lit(4.0 * std::f64::consts::PI * std::f64::consts::PI);
    let incoherent = T::one() - (-gamma * t).exp() / nf;
    let envelope = (-T::lit(2.0) * big_gamma * t - four_pi_sq * sigma * sigma * t * t).exp();
    let mut osc = T::zero();
    for i in 0..n {
        for j in 0..n {
            if i != j {
                osc += (detunings[i * n + j] * t).cos();
            }
        }
    }
    Ok(incoherent + envelope * osc / (nf * nf))
}

/// [`g2_ideal`] with all detunings zero.
pub fn g2_ideal_resonant<T: Real>(n: usize, gamma: T, big_gamma: T, sigma: T, tau: T) -> Result<T> {
    g2_ideal(n, gamma, big_gamma, sigma, &vec![T::zero(); n * n], tau)
}

/// Split of g² into its distinguishable and coherent parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct G2Terms<T> {
    pub incoherent: T,
    pub coherent: T,
}

impl<T: Real> G2Terms<T> {
    pub fn total(&self) -> T {
        self.incoherent + self.coherent
    }
}

/// Both terms of the per-emitter g² model at delay `tau`.
pub fn g2_terms<T: Real>(system: &EmitterSystem<T>, tau: T) -> G2Terms<T> {
    let t = tau.abs();
    let em = system.emitters();
    let total = system.total_intensity();
    let norm = total * total;
    let self_sum: T = em
        .iter()
        .map(|e| e.intensity * e.intensity * (-e.radiative_rate * t).exp())
        .sum();
    let mut coherent = T::zero();
    for i in 0..em.len() {
        for j in (i + 1)..em.len() {
            let w = em[i].intensity * em[j].intensity;
            if w == T::zero() {
                continue;
            }
            // cos is even in δ so the (j, i) term equals the (i, j) term
            coherent += T::lit(2.0) * w * pair_coupling(&em[i], &em[j]).coherence(t);
        }
    }
    G2Terms {
        incoherent: T::one() - self_sum / norm,
        coherent: coherent / norm,
    }
}

/// g²(τ) for a general system; `coherent = false` gives the distinguishable
/// baseline.
pub fn g2_general<T: Real>(system: &EmitterSystem<T>, tau: T, coherent: bool) -> T {
    let terms = g2_terms(system, tau);
    if coherent {
        terms.total()
    } else {
        terms.incoherent
    }
}

/// Curve of g² values on a monotone delay grid, optionally with per-point
/// standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct G2Curve<T> {
    delays: Vec<T>,
    values: Vec<T>,
    errors: Option<Vec<T>>,
}

impl<T: Real> G2Curve<T> {
    pub fn new(delays: Vec<T>, values: Vec<T>) -> Result<Self> {
        Self::build(delays, values, None)
    }

    pub fn with_errors(delays: Vec<T>, values: Vec<T>, errors: Vec<T>) -> Result<Self> {
        Self::build(delays, values, Some(errors))
    }

    fn build(delays: Vec<T>, values: Vec<T>, errors: Option<Vec<T>>) -> Result<Self> {
        if delays.len() != values.len() {
            return Err(invalid("delays and values differ in length"));
        }
        if delays.is_empty() {
            return Err(invalid("empty curve"));
        }
        if delays.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid("delay grid must be strictly increasing"));
        }
        if values.iter().any(|v| !v.is_finite()) || delays.iter().any(|v| !v.is_finite()) {
            return Err(invalid("curve contains non-finite entries"));
        }
        if let Some(e) = &errors {
            if e.len() != values.len() {
                return Err(invalid("errors and values differ in length"));
            }
        }
        Ok(Self {
            delays,
            values,
            errors,
        })
    }

    /// Evaluates `f` on the grid.
    pub fn from_fn(delays: Vec<T>, f: impl Fn(T) -> T) -> Result<Self> {
        let values = delays.iter().map(|&t| f(t)).collect();
        Self::new(delays, values)
    }

    /// g2_general sampled on `delays`.
    pub fn model(system: &EmitterSystem<T>, delays: Vec<T>, coherent: bool) -> Result<Self> {
        Self::from_fn(delays, |t| g2_general(system, t, coherent))
    }

    pub fn delays(&self) -> &[T] {
        &self.delays
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn errors(&self) -> Option<&[T]> {
        self.errors.as_deref()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn into_parts(self) -> (Vec<T>, Vec<T>, Option<Vec<T>>) {
        (self.delays, self.values, self.errors)
    }

    /// Grid step if the grid is uniform to a relative 1e-6.
    pub fn uniform_step(&self) -> Option<T> {
        if self.delays.len() < 2 {
            return None;
        }
        let span = self.delays[self.delays.len() - 1] - self.delays[0];
        let step = span / T::from_usize_lossy(self.delays.len() - 1);
        let tol = step * T::lit(1e-6);
        self.delays
            .windows(2)
            .all(|w| ((w[1] - w[0]) - step).abs() <= tol)
            .then_some(step)
    }

    /// Linear interpolation; clamps outside the grid.
    pub fn value_at(&self, tau: T) -> T {
        let d = &self.delays;
        if tau <= d[0] {
            return self.values[0];
        }
        if tau >= d[d.len() - 1] {
            return self.values[d.len() - 1];
        }
        let k = d.partition_point(|&x| x <= tau);
        let (t0, t1) = (d[k - 1], d[k]);
        let w = (tau - t0) / (t1 - t0);
        self.values[k - 1] * (T::one() - w) + self.values[k] * w
    }

    /// Index of the grid point closest to τ = 0.
    pub fn zero_index(&self) -> usize {
        let mut best = 0;
        for (k, t) in self.delays.iter().enumerate() {
            if t.abs() < self.delays[best].abs() {
                best = k;
            }
        }
        best
    }

    /// Mean value over points with |τ| in `[lo, hi]`.
    pub fn window_mean(&self, lo: T, hi: T) -> Option<T> {
        let mut sum = T::zero();
        let mut n = 0usize;
        for (t, v) in self.delays.iter().zip(&self.values) {
            let a = t.abs();
            if a >= lo && a <= hi {
                sum += *v;
                n += 1;
            }
        }
        (n > 0).then(|| sum / T::from_usize_lossy(n))
    }

    /// Full width at half maximum of the peak around τ = 0, measured above
    /// `baseline` (a value per grid point). Returns `None` if the excess at
    /// τ = 0 is not positive or never falls to half on one side.
    pub fn central_peak_fwhm(&self, baseline: &[T]) -> Option<T> {
        if baseline.len() != self.values.len() {
            return None;
        }
        let excess: Vec<T> = self
            .values
            .iter()
            .zip(baseline)
            .map(|(v, b)| *v - *b)
            .collect();
        let k0 = self.zero_index();
        let peak = excess[k0];
        if !(peak > T::zero()) {
            return None;
        }
        let half = peak / T::lit(2.0);
        let crossing = |step: isize| -> Option<T> {
            let mut k = k0 as isize;
            loop {
                let next = k + step;
                if next < 0 || next as usize >= excess.len() {
                    return None;
                }
                let (a, b) = (excess[k as usize], excess[next as usize]);
                if b <= half {
                    let (ta, tb) = (self.delays[k as usize], self.delays[next as usize]);
                    let w = (a - half) / (a - b);
                    return Some(ta + (tb - ta) * w);
                }
                k = next;
            }
        };
        let right = crossing(1)?;
        let left = crossing(-1)?;
        Some(right - left)
    }
}

/// Uniform grid of `n` points from `lo` to `hi` inclusive.
pub fn linspace<T: Real>(lo: T, hi: T, n: usize) -> Vec<T> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let step = (hi - lo) / T::from_usize_lossy(n - 1);
            (0..n).map(|k| lo + step * T::from_usize_lossy(k)).collect()
        }
    }
}

/// Symmetric grid `[−half_span, half_span]` with the given step; contains τ = 0.
pub fn symmetric_grid<T: Real>(half_span: T, step: T) -> Vec<T> {
    let m = (half_span / step).round().to_usize().unwrap_or(0);
    (0..=2 * m)
        .map(|k| step * (T::from_usize_lossy(k) - T::from_usize_lossy(m)))
        .collect()
}
