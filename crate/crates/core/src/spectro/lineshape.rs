//! Area-normalised line shapes. Widths are FWHM in the same unit as `x`.

use num_complex::Complex;

use crate::scalar::Real;
use crate::units::GAUSSIAN_FWHM_PER_SIGMA;

pub fn gaussian<T: Real>(x: T, fwhm: T) -> T {
    let s = fwhm / T::lit(GAUSSIAN_FWHM_PER_SIGMA);
    (-(x * x) / (T::lit(2.0) * s * s)).exp() / (s * T::lit((2.0 * std::f64::consts::PI).sqrt()))
}

pub fn lorentzian<T: Real>(x: T, fwhm: T) -> T {
    let g = fwhm / T::lit(2.0);
    g / (T::PI() * (x * x + g * g))
}

/// Faddeeva function w(z) for Im z ≥ 0, Humlíček's four-region rational
/// approximation (relative error about 1e-4).
pub fn faddeeva<T: Real>(x: T, y: T) -> Complex<T> {
    let c = |v: f64| Complex::new(T::lit(v), T::zero());
    let t = Complex::new(y, -x);
    let s = x.abs() + y;
    if s >= T::lit(15.0) {
        t * c(0.564_189_6) / (c(0.5) + t * t)
    } else if s >= T::lit(5.5) {
        let u = t * t;
        t * (c(1.410_474) + u * c(0.564_189_6)) / (c(0.75) + u * (c(3.0) + u))
    } else if y >= T::lit(0.195) * x.abs() - T::lit(0.176) {
        let num = c(16.4955)
            + t * (c(20.209_33) + t * (c(11.964_82) + t * (c(3.778_987) + t * c(0.564_223_6))));
        let den = c(16.4955)
            + t * (c(38.823_63)
                + t * (c(39.271_21) + t * (c(21.692_74) + t * (c(6.699_398) + t))));
        num / den
    } else {
        let u = t * t;
        let num = t
            * (c(36_183.31)
                - u * (c(3_321.990_5)
                    - u * (c(1_540.787)
                        - u * (c(219.031_3) - u * (c(35.766_83) - u * (c(1.320_522) - u * c(0.56419)))))));
        let den = c(32_066.6)
            - u * (c(24_322.84)
                - u * (c(9_022.228)
                    - u * (c(2_186.181)
                        - u * (c(364.219_1) - u * (c(61.570_37) - u * (c(1.841_439) - u))))));
        u.exp() - num / den
    }
}

/// Voigt profile: Lorentzian of FWHM `fwhm_l` convolved with a Gaussian of
/// FWHM `fwhm_g`. Either width may be zero.
pub fn voigt<T: Real>(x: T, fwhm_l: T, fwhm_g: T) -> T {
    if fwhm_g <= T::zero() {
        return lorentzian(x, fwhm_l);
    }
    if fwhm_l <= T::zero() {
        return gaussian(x, fwhm_g);
    }
    let sigma = fwhm_g / T::lit(GAUSSIAN_FWHM_PER_SIGMA);
    let scale = sigma * T::SQRT_2();
    let w = faddeeva(x / scale, fwhm_l / T::lit(2.0) / scale);
    w.re / (sigma * T::lit((2.0 * std::f64::consts::PI).sqrt()))
}

/// Approximate Voigt FWHM (Olivero–Longbothum), accurate to about 0.02%.
pub fn voigt_fwhm<T: Real>(fwhm_l: T, fwhm_g: T) -> T {
    T::lit(0.5346) * fwhm_l + (T::lit(0.2166) * fwhm_l * fwhm_l + fwhm_g * fwhm_g).sqrt()
}

/// Pseudo-Voigt: η-weighted sum of a Lorentzian and a Gaussian sharing one
/// FWHM.
pub fn pseudo_voigt<T: Real>(x: T, fwhm: T, eta: T) -> T {
    eta * lorentzian(x, fwhm) + (T::one() - eta) * gaussian(x, fwhm)
}

/// Thompson–Cox–Hastings mapping from Voigt widths to pseudo-Voigt
/// (FWHM, η).
pub fn pseudo_voigt_params<T: Real>(fwhm_l: T, fwhm_g: T) -> (T, T) {
    let (l, g) = (fwhm_l, fwhm_g);
    let f5 = g.powi(5)
        + T::lit(2.69269) * g.powi(4) * l
        + T::lit(2.42843) * g.powi(3) * l.powi(2)
        + T::lit(4.47163) * g.powi(2) * l.powi(3)
        + T::lit(0.07842) * g * l.powi(4)
        + l.powi(5);
    let f = f5.powf(T::lit(0.2));
    let r = l / f;
    let eta = T::lit(1.36603) * r - T::lit(0.47719) * r * r + T::lit(0.11116) * r * r * r;
    (f, eta.max(T::zero()).min(T::one()))
}
