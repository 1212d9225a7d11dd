//! Emitter parameters and the pair quantities that enter the coherent term.

use crate::error::{invalid, Result};
use crate::scalar::Real;
use crate::units;

/// One waveguide-coupled quantum emitter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Emitter<T> {
    /// Transition energy, μeV.
    pub energy: T,
    /// Radiative rate γ, 1/ns.
    pub radiative_rate: T,
    /// Pure dephasing rate γ_pd, 1/ns.
    pub dephasing_rate: T,
    /// Spectral diffusion σ (ordinary frequency), 1/ns.
    pub diffusion_sigma: T,
    /// Relative emission intensity.
    pub intensity: T,
    /// Position along the waveguide, μm.
    pub position: T,
    /// Linear Stark coefficient, μeV/V.
    pub stark_coeff: T,
}

impl<T: Real> Emitter<T> {
    /// Emitter with unit intensity at the origin and no Stark response.
    pub fn new(energy: T, radiative_rate: T, dephasing_rate: T, diffusion_sigma: T) -> Self {
        Self {
            energy,
            radiative_rate,
            dephasing_rate,
            diffusion_sigma,
            intensity: T::one(),
            position: T::zero(),
            stark_coeff: T::zero(),
        }
    }

    pub fn with_intensity(mut self, intensity: T) -> Self {
        self.intensity = intensity;
        self
    }

    pub fn with_position(mut self, position: T) -> Self {
        self.position = position;
        self
    }

    pub fn with_stark_coeff(mut self, coeff: T) -> Self {
        self.stark_coeff = coeff;
        self
    }

    pub fn with_energy(mut self, energy: T) -> Self {
        self.energy = energy;
        self
    }

    /// Coherence decay rate Γ = γ/2 + γ_pd.
    pub fn total_dephasing(&self) -> T {
        self.radiative_rate / T::lit(2.0) + self.dephasing_rate
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.energy,
            self.radiative_rate,
            self.dephasing_rate,
            self.diffusion_sigma,
            self.intensity,
            self.position,
            self.stark_coeff,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(invalid("emitter parameters must be finite"));
        }
        if self.radiative_rate <= T::zero() {
            return Err(invalid(format!(
                "radiative rate must be > 0, got {}",
                self.radiative_rate
            )));
        }
        if self.dephasing_rate < T::zero() {
            return Err(invalid("dephasing rate must be >= 0"));
        }
        if self.diffusion_sigma < T::zero() {
            return Err(invalid("diffusion sigma must be >= 0"));
        }
        if self.intensity < T::zero() {
            return Err(invalid("intensity must be >= 0"));
        }
        Ok(())
    }
}

/// Pair quantities Γ_ij, σ_ij and δ_ij.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairCoupling<T> {
    /// Γ_ij = (γ_i + γ_j)/2 + γ_pd,i + γ_pd,j, 1/ns.
    pub gamma_sum: T,
    /// σ_ij = sqrt(σ_i² + σ_j²), 1/ns.
    pub sigma_pair: T,
    /// δ_ij = (E_i − E_j)/ħ, rad/ns.
    pub detuning: T,
}

impl<T: Real> PairCoupling<T> {
    /// The pair coherence factor e^{−Γ_ij|τ| − 2π²σ_ij²τ²} cos(δ_ij τ).
    pub fn coherence(&self, tau: T) -> T {
        let t = tau.abs();
        let two_pi_sq = T::lit(2.0 * std::f64::consts::PI * std::f64::consts::PI);
        let s2 = self.sigma_pair * self.sigma_pair;
        (-self.gamma_sum * t - two_pi_sq * s2 * t * t).exp() * (self.detuning * t).cos()
    }

    /// Envelope of [`Self::coherence`] without the oscillation.
    pub fn envelope(&self, tau: T) -> T {
        let t = tau.abs();
        let two_pi_sq = T::lit(2.0 * std::f64::consts::PI * std::f64::consts::PI);
        (-self.gamma_sum * t - two_pi_sq * self.sigma_pair * self.sigma_pair * t * t).exp()
    }
}

pub fn pair_coupling<T: Real>(ei: &Emitter<T>, ej: &Emitter<T>) -> PairCoupling<T> {
    let gamma_sum =
        (ei.radiative_rate + ej.radiative_rate) / T::lit(2.0) + ei.dephasing_rate + ej.dephasing_rate;
    let sigma_pair = (ei.diffusion_sigma * ei.diffusion_sigma
        + ej.diffusion_sigma * ej.diffusion_sigma)
        .sqrt();
    let detuning = units::energy_to_angular(ei.energy - ej.energy);
    PairCoupling {
        gamma_sum,
        sigma_pair,
        detuning,
    }
}

/// An ordered set of emitters sharing one waveguide mode.
#[derive(Debug, Clone, PartialEq)]
pub struct EmitterSystem<T> {
    emitters: Vec<Emitter<T>>,
    pub reference_energy: T,
}

impl<T: Real> EmitterSystem<T> {
    pub fn new(emitters: Vec<Emitter<T>>) -> Result<Self> {
        Self::with_reference(emitters, T::zero())
    }

    pub fn with_reference(emitters: Vec<Emitter<T>>, reference_energy: T) -> Result<Self> {
        if emitters.is_empty() {
            return Err(invalid("system needs at least one emitter"));
        }
        for (k, e) in emitters.iter().enumerate() {
            e.validate()
                .map_err(|err| invalid(format!("emitter {k}: {err}")))?;
        }
        let total: T = emitters.iter().map(|e| e.intensity).sum();
        if total <= T::zero() {
            return Err(invalid("total intensity must be > 0"));
        }
        Ok(Self {
            emitters,
            reference_energy,
        })
    }

    /// `n` identical emitters, equal intensity, energies on a ladder
    /// `k·spacing` (μeV) above `base_energy`.
    pub fn ladder(n: usize, template: Emitter<T>, spacing: T) -> Result<Self> {
        let emitters = (0..n)
            .map(|k| template.with_energy(template.energy + spacing * T::from_usize_lossy(k)))
            .collect();
        Self::new(emitters)
    }

    pub fn emitters(&self) -> &[Emitter<T>] {
        &self.emitters
    }

    pub fn len(&self) -> usize {
        self.emitters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.emitters.is_empty()
    }

    pub fn total_intensity(&self) -> T {
        self.emitters.iter().map(|e| e.intensity).sum()
    }

    /// Same emitters with intensities replaced.
    pub fn with_intensities(&self, intensities: &[T]) -> Result<Self> {
        if intensities.len() != self.emitters.len() {
            return Err(invalid("intensity count does not match emitter count"));
        }
        let emitters = self
            .emitters
            .iter()
            .zip(intensities)
            .map(|(e, &i)| e.with_intensity(i))
            .collect();
        Self::with_reference(emitters, self.reference_energy)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn qd(e: f64) -> Emitter<f64> {
        Emitter::new(e, 0.7, 2.5, 1.0)
    }

    #[test]
    fn fit_values_give_gamma_sum() {
        let p = pair_coupling(&qd(0.0), &qd(0.0));
        assert!((p.gamma_sum - 5.7).abs() < 1e-12);
        assert_eq!(p.detuning, 0.0);
        assert!((p.sigma_pair * p.sigma_pair - 2.0).abs() < 1e-12);
    }

    #[test]
    fn detuning_is_antisymmetric() {
        let a = qd(46.0);
        let b = qd(0.0);
        let ab = pair_coupling(&a, &b);
        let ba = pair_coupling(&b, &a);
        assert_eq!(ab.detuning, -ba.detuning);
        assert!((ab.detuning - 69.886).abs() < 1e-2);
        assert_eq!(ab.coherence(0.13), ba.coherence(0.13));
    }

    #[test]
    fn identical_pair_recovers_single_emitter_exponent() {
        let e = qd(0.0);
        let p = pair_coupling(&e, &e);
        let g = e.total_dephasing();
        let s = e.diffusion_sigma;
        let t = 0.21;
        let pi2 = std::f64::consts::PI.powi(2);
        let expected = (-2.0 * g * t - 4.0 * pi2 * s * s * t * t).exp();
        assert!((p.coherence(t) - expected).abs() < 1e-14);
    }

    #[test]
    fn validation() {
        assert!(Emitter::new(0.0, 0.0, 1.0, 1.0).validate().is_err());
        assert!(Emitter::new(0.0, 1.0, -1.0, 1.0).validate().is_err());
        assert!(Emitter::new(0.0, 1.0, 0.0, -0.1).validate().is_err());
        assert!(qd(0.0).with_intensity(-1.0).validate().is_err());
        assert!(EmitterSystem::<f64>::new(vec![]).is_err());
        assert!(EmitterSystem::new(vec![qd(0.0).with_intensity(0.0)]).is_err());
        assert!(EmitterSystem::new(vec![qd(0.0), qd(1.0).with_intensity(0.0)]).is_ok());
    }
}
