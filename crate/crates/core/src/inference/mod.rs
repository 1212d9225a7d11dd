//! Parameter estimation: g² curve fits and spectral peak location.

pub mod g2fit;
pub mod lsq;
pub mod peaks;
pub mod report;
pub mod simplex;

pub use g2fit::{
    fit_g2, predict_curve, BoundStatus, CurveSpec, FitOptions, FitResult, FitSpec, FreeParam,
    ModelKind, ParamEstimate, Role,
};
pub use peaks::{fit_spectrum_peaks, PeakEstimate, PeakFit, PeakWarning};
