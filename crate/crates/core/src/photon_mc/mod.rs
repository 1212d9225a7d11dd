//! Monte Carlo estimate of the pair coherence factor from stochastic
//! first-order coherence trajectories, and a synthetic HBT coincidence
//! generator.
//!
//! Each realisation draws a quasi-static frequency offset per emitter
//! (spectral diffusion) and integrates a Wiener phase (pure dephasing) along
//! the sorted |τ| grid. Amplitudes decay deterministically as e^{−γτ/2}.
//! Realisations are split into fixed-size chunks, each seeded from its own
//! ChaCha stream, and chunk sums are reduced in chunk order, so results do
//! not depend on the number of worker threads.

mod histogram;

pub use histogram::{
    normalize_histogram, sample_coincidences, CoincidenceConfig, G2Histogram, HistogramMeta,
};

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::emitter::{Emitter, EmitterSystem};
use crate::error::{invalid, Result};
use crate::g2::G2Curve;
use crate::units::energy_to_angular;

/// Realisations per independently seeded chunk.
pub(crate) const CHUNK: usize = 4096;

pub const MIN_REALIZATIONS: usize = 100;

/// Seed plus substream: equal values reproduce identical output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngSeed {
    pub seed: u64,
    pub stream_id: u32,
}

impl RngSeed {
    pub fn new(seed: u64) -> Self {
        Self { seed, stream_id: 0 }
    }

    pub fn with_stream(self, stream_id: u32) -> Self {
        Self { stream_id, ..self }
    }

    /// Generator for work unit `unit` of this stream.
    pub fn rng(&self, unit: u32) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(((self.stream_id as u64) << 32) | unit as u64);
        rng
    }
}

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
}

/// Running mean and squared-deviation sums per delay (Welford), merged in a
/// fixed order.
#[derive(Clone, Default)]
struct Moments {
    n: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Moments {
    fn zeros(len: usize) -> Self {
        Self {
            n: 0,
            mean: vec![0.0; len],
            m2: vec![0.0; len],
        }
    }

    fn push(&mut self, xs: &[f64]) {
        self.n += 1;
        let nf = self.n as f64;
        for (k, &x) in xs.iter().enumerate() {
            let d = x - self.mean[k];
            self.mean[k] += d / nf;
            self.m2[k] += d * (x - self.mean[k]);
        }
    }

    fn merge(&mut self, other: &Moments) {
        if other.n == 0 {
            return;
        }
        let (na, nb) = (self.n as f64, other.n as f64);
        let n = na + nb;
        for k in 0..self.mean.len() {
            let d = other.mean[k] - self.mean[k];
            self.mean[k] += d * nb / n;
            self.m2[k] += other.m2[k] + d * d * na * nb / n;
        }
        self.n += other.n;
    }

    fn estimates(&self) -> Vec<Estimate> {
        let nf = self.n as f64;
        self.mean
            .iter()
            .zip(&self.m2)
            .map(|(&mean, &m2)| Estimate {
                mean,
                std_error: (m2.max(0.0) / (nf - 1.0) / nf).sqrt(),
            })
            .collect()
    }
}

/// Runs `n_real` coherence trajectories for `emitters` and reduces
/// `statistic(g1, tau)` at every delay of `taus` (non-negative, ascending).
fn run_trajectories<F>(
    emitters: &[Emitter<f64>],
    taus: &[f64],
    n_real: usize,
    seed: RngSeed,
    statistic: F,
) -> Vec<Estimate>
where
    F: Fn(&[Complex64]) -> f64 + Sync,
{
    let e0 = emitters[0].energy;
    let omega: Vec<f64> = emitters
        .iter()
        .map(|e| energy_to_angular(e.energy - e0))
        .collect();
    let n_chunks = n_real.div_ceil(CHUNK);
    let partials: Vec<Moments> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = seed.rng(c as u32);
            let count = CHUNK.min(n_real - c * CHUNK);
            let mut m = Moments::zeros(taus.len());
            let mut offset = vec![0.0; emitters.len()];
            let mut phase = vec![0.0; emitters.len()];
            let mut g1 = vec![Complex64::new(0.0, 0.0); emitters.len()];
            let mut row = vec![0.0; taus.len()];
            for _ in 0..count {
                for (k, e) in emitters.iter().enumerate() {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    offset[k] = 2.0 * std::f64::consts::PI * e.diffusion_sigma * z;
                    phase[k] = 0.0;
                }
                let mut prev = 0.0;
                for (i, &tau) in taus.iter().enumerate() {
                    let dt = tau - prev;
                    prev = tau;
                    for (k, e) in emitters.iter().enumerate() {
                        if e.dephasing_rate > 0.0 && dt > 0.0 {
                            let z: f64 = StandardNormal.sample(&mut rng);
                            phase[k] += (2.0 * e.dephasing_rate * dt).sqrt() * z;
                        }
                        let amp = (-0.5 * e.radiative_rate * tau).exp();
                        g1[k] = Complex64::from_polar(amp, (omega[k] + offset[k]) * tau + phase[k]);
                    }
                    row[i] = statistic(&g1);
                }
                m.push(&row);
            }
            m
        })
        .collect();
    let mut total = Moments::zeros(taus.len());
    for p in &partials {
        total.merge(p);
    }
    total.estimates()
}

fn check_realizations(n_real: usize) -> Result<()> {
    if n_real < MIN_REALIZATIONS {
        return Err(invalid(format!(
            "n_real must be >= {MIN_REALIZATIONS}, got {n_real}"
        )));
    }
    Ok(())
}

/// Monte Carlo estimate of ⟨Re[g1_i(τ) g1_j*(τ)]⟩, whose exact value is the
/// pair coherence e^{−Γ_ij|τ| − 2π²σ_ij²τ²} cos(δ_ij τ).
pub fn mc_coherence_pair(
    ei: &Emitter<f64>,
    ej: &Emitter<f64>,
    tau: f64,
    n_real: usize,
    seed: RngSeed,
) -> Result<Estimate> {
    check_realizations(n_real)?;
    ei.validate()?;
    ej.validate()?;
    let pair = [*ei, *ej];
    let est = run_trajectories(&pair, &[tau.abs()], n_real, seed, |g| (g[0] * g[1].conj()).re);
    Ok(est[0])
}

/// [`mc_coherence_pair`] on a grid of delays with shared trajectories.
pub fn mc_coherence_pair_grid(
    ei: &Emitter<f64>,
    ej: &Emitter<f64>,
    taus: &[f64],
    n_real: usize,
    seed: RngSeed,
) -> Result<Vec<Estimate>> {
    check_realizations(n_real)?;
    ei.validate()?;
    ej.validate()?;
    let (unique, index) = abs_sorted_unique(taus);
    let est = run_trajectories(&[*ei, *ej], &unique, n_real, seed, |g| (g[0] * g[1].conj()).re);
    Ok(index.iter().map(|&k| est[k]).collect())
}

/// Sorted unique |τ| values and the map from input position to that list.
fn abs_sorted_unique(taus: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut unique: Vec<f64> = taus.iter().map(|t| t.abs()).collect();
    unique.sort_by(f64::total_cmp);
    unique.dedup();
    let index = taus
        .iter()
        .map(|t| {
            unique
                .binary_search_by(|u| u.total_cmp(&t.abs()))
                .expect("value present")
        })
        .collect();
    (unique, index)
}

/// g²(τ) with the coherent factor replaced by its trajectory estimate. The
/// returned curve carries per-point standard errors.
pub fn mc_g2(
    system: &EmitterSystem<f64>,
    taus: &[f64],
    n_real: usize,
    seed: RngSeed,
) -> Result<G2Curve<f64>> {
    check_realizations(n_real)?;
    let em = system.emitters();
    let total = system.total_intensity();
    let norm = total * total;
    let (unique, index) = abs_sorted_unique(taus);
    let intensities: Vec<f64> = em.iter().map(|e| e.intensity).collect();
    let coherent = if em.len() > 1 {
        run_trajectories(em, &unique, n_real, seed, |g| {
            // Σ_{i≠j} I_i I_j Re[g_i g_j*] = |Σ I g|² − Σ I²|g|²
            let mut field = Complex64::new(0.0, 0.0);
            let mut self_sum = 0.0;
            for (gk, &ik) in g.iter().zip(&intensities) {
                field += gk * ik;
                self_sum += ik * ik * gk.norm_sqr();
            }
            field.norm_sqr() - self_sum
        })
    } else {
        vec![
            Estimate {
                mean: 0.0,
                std_error: 0.0
            };
            unique.len()
        ]
    };
    let mut values = Vec::with_capacity(taus.len());
    let mut errors = Vec::with_capacity(taus.len());
    for (&tau, &k) in taus.iter().zip(&index) {
        let t = tau.abs();
        let self_term: f64 = em
            .iter()
            .map(|e| e.intensity * e.intensity * (-e.radiative_rate * t).exp())
            .sum();
        values.push(1.0 - self_term / norm + coherent[k].mean / norm);
        errors.push(coherent[k].std_error / norm);
    }
    G2Curve::with_errors(taus.to_vec(), values, errors)
}
