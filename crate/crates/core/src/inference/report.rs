//! Plain-text renderings of fit results.

use std::fmt::Write;

use super::g2fit::FitResult;
use crate::g2::G2Curve;
use crate::textio::{format_num, Table};

impl FitResult {
    /// `key = value` lines: one per parameter, then fit statistics.
    pub fn to_key_values(&self) -> String {
        let mut s = String::new();
        for e in &self.estimates {
            let err = e.std_error.map_or_else(|| "nan".to_string(), format_num);
            let _ = writeln!(s, "{} = {}", e.name, format_num(e.value));
            let _ = writeln!(s, "{}.stderr = {}", e.name, err);
            let _ = writeln!(s, "{}.status = {}", e.name, e.status.as_str());
        }
        let _ = writeln!(s, "residual_norm = {}", format_num(self.residual_norm));
        let _ = writeln!(s, "reduced_chi2 = {}", format_num(self.reduced_chi2()));
        let _ = writeln!(s, "n_points = {}", self.n_points);
        let _ = writeln!(s, "n_iterations = {}", self.n_iterations);
        let _ = writeln!(s, "converged = {}", self.converged);
        s
    }

    /// Human-readable table.
    pub fn report(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<12} {:>14} {:>14}  status", "parameter", "value", "std error");
        for e in &self.estimates {
            let err = e.std_error.map_or_else(|| "-".to_string(), |v| format!("{v:.6}"));
            let _ = writeln!(s, "{:<12} {:>14.6} {:>14}  {}", e.name, e.value, err, e.status.as_str());
        }
        let _ = writeln!(
            s,
            "chi2 = {:.4} over {} points ({} free), reduced {:.4}, {}",
            self.residual_norm,
            self.n_points,
            self.n_free,
            self.reduced_chi2(),
            if self.converged { "converged" } else { "NOT converged" }
        );
        s
    }
}

/// Data with the fitted model alongside, for plotting.
pub fn overlay_table(data: &G2Curve<f64>, model: &[f64]) -> Table {
    let mut t = Table::new(&["tau_ns", "g2_data", "g2_error", "g2_model"]);
    let zeros = vec![0.0; data.len()];
    let err = data.errors().unwrap_or(&zeros);
    for k in 0..data.len() {
        t.push(vec![data.delays()[k], data.values()[k], err[k], model[k]]);
    }
    t
}
