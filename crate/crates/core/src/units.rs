//! Unit conventions: energies in μeV, times in ns, rates in 1/ns,
//! angular detunings in rad/ns, positions in μm, powers in mW.

use crate::scalar::Real;

/// Reduced Planck constant in μeV·ns.
pub const HBAR_UEV_NS: f64 = 0.658_211_956_9;

/// Planck constant h = 2πħ in μeV·ns.
pub const PLANCK_UEV_NS: f64 = 2.0 * std::f64::consts::PI * HBAR_UEV_NS;

/// `2·sqrt(2 ln 2)`: FWHM of a Gaussian in units of its standard deviation.
pub const GAUSSIAN_FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949_3;

#[inline]
pub fn hbar<T: Real>() -> T {
    T::lit(HBAR_UEV_NS)
}

/// Energy difference (μeV) to angular frequency (rad/ns).
#[inline]
pub fn energy_to_angular<T: Real>(energy_uev: T) -> T {
    energy_uev / hbar::<T>()
}

/// Angular frequency (rad/ns) to energy (μeV).
#[inline]
pub fn angular_to_energy<T: Real>(omega: T) -> T {
    omega * hbar::<T>()
}

/// Linewidth produced by spectral diffusion with standard deviation `sigma`
/// (ordinary frequency, 1/ns). The Gaussian in frequency space maps to energy
/// through h, not ħ, because σ multiplies 2π inside the coherence decay.
#[inline]
pub fn fwhm_from_sigma<T: Real>(sigma: T) -> T {
    T::lit(GAUSSIAN_FWHM_PER_SIGMA * PLANCK_UEV_NS) * sigma
}

/// Lorentzian linewidth from pure dephasing: 2ħγ_pd.
#[inline]
pub fn fwhm_from_dephasing<T: Real>(gamma_pd: T) -> T {
    T::lit(2.0 * HBAR_UEV_NS) * gamma_pd
}

/// Homogeneous Lorentzian FWHM 2ħ(γ/2 + γ_pd).
#[inline]
pub fn lorentzian_fwhm<T: Real>(gamma: T, gamma_pd: T) -> T {
    T::lit(2.0 * HBAR_UEV_NS) * (gamma / T::lit(2.0) + gamma_pd)
}

#[inline]
pub fn gaussian_sigma_from_fwhm<T: Real>(fwhm: T) -> T {
    fwhm / T::lit(GAUSSIAN_FWHM_PER_SIGMA)
}
