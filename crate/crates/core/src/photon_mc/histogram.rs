use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use super::RngSeed;
use crate::error::{invalid, Error, Result};
use crate::g2::G2Curve;
use crate::irf::Irf;
use crate::textio::Table;

const EVENTS_PER_CHUNK: usize = 1 << 16;
const MIN_PLATEAU_BINS: usize = 10;

/// Binning and normalisation settings for synthetic HBT histograms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoincidenceConfig {
    /// Histogram covers [−window, +window], ns.
    pub window: f64,
    pub bin_width: f64,
    /// |τ| range used for the plateau estimate, ns.
    pub plateau: (f64, f64),
}

impl Default for CoincidenceConfig {
    fn default() -> Self {
        Self {
            window: 10.0,
            bin_width: 0.02,
            plateau: (5.0, 10.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct HistogramMeta {
    pub seed: Option<u64>,
    pub n_events: u64,
    pub irf_fwhm: Option<f64>,
}

/// Binned coincidence counts.
#[derive(Debug, Clone, PartialEq)]
pub struct G2Histogram {
    bin_edges: Vec<f64>,
    counts: Vec<u64>,
    pub normalization_window: (f64, f64),
    pub meta: HistogramMeta,
}

impl G2Histogram {
    pub fn new(bin_edges: Vec<f64>, counts: Vec<u64>, normalization_window: (f64, f64)) -> Result<Self> {
        if bin_edges.len() != counts.len() + 1 || counts.is_empty() {
            return Err(invalid("need one more bin edge than bins"));
        }
        let w = bin_edges[1] - bin_edges[0];
        if !(w > 0.0) {
            return Err(invalid("bin edges must increase"));
        }
        if bin_edges
            .windows(2)
            .any(|e| ((e[1] - e[0]) - w).abs() > 1e-6 * w)
        {
            return Err(invalid("bin width must be uniform"));
        }
        let n_events = counts.iter().sum();
        Ok(Self {
            bin_edges,
            counts,
            normalization_window,
            meta: HistogramMeta {
                n_events,
                ..HistogramMeta::default()
            },
        })
    }

    pub fn bin_edges(&self) -> &[f64] {
        &self.bin_edges
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn bin_width(&self) -> f64 {
        self.bin_edges[1] - self.bin_edges[0]
    }

    pub fn bin_centers(&self) -> Vec<f64> {
        self.bin_edges
            .windows(2)
            .map(|e| 0.5 * (e[0] + e[1]))
            .collect()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn to_text(&self) -> String {
        let mut t = Table::new(&["bin_center_ns", "counts"])
            .meta(
                "seed",
                self.meta
                    .seed
                    .map_or_else(|| "none".to_string(), |s| s.to_string()),
            )
            .meta("n_events", self.meta.n_events)
            .meta(
                "irf_fwhm_ns",
                self.meta
                    .irf_fwhm
                    .map_or_else(|| "none".to_string(), |f| f.to_string()),
            )
            .meta("bin_width_ns", self.bin_width())
            .meta(
                "plateau_ns",
                format!("{}:{}", self.normalization_window.0, self.normalization_window.1),
            );
        for (c, n) in self.bin_centers().into_iter().zip(&self.counts) {
            t.push(vec![c, *n as f64]);
        }
        t.render("g2 histogram v1")
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let t = Table::parse(text)?;
        let centers = t.require_column("bin_center_ns")?;
        let counts = t.require_column("counts")?;
        if centers.is_empty() {
            return Err(Error::Parse {
                line: 0,
                msg: "histogram has no bins".into(),
            });
        }
        let width = match t.meta_f64("bin_width_ns") {
            Some(w) => w,
            None if centers.len() > 1 => centers[1] - centers[0],
            None => {
                return Err(Error::Parse {
                    line: 0,
                    msg: "cannot infer bin width".into(),
                })
            }
        };
        let mut edges: Vec<f64> = centers.iter().map(|c| c - 0.5 * width).collect();
        edges.push(centers[centers.len() - 1] + 0.5 * width);
        let plateau = t
            .meta
            .get("plateau_ns")
            .and_then(|s| {
                let (a, b) = s.split_once(':')?;
                Some((a.parse().ok()?, b.parse().ok()?))
            })
            .unwrap_or(CoincidenceConfig::default().plateau);
        let counts: Vec<u64> = counts
            .iter()
            .map(|&c| {
                if c < 0.0 || c.fract() != 0.0 {
                    Err(Error::Parse {
                        line: 0,
                        msg: format!("count {c} is not a nonnegative integer"),
                    })
                } else {
                    Ok(c as u64)
                }
            })
            .collect::<Result<_>>()?;
        let mut h = Self::new(edges, counts, plateau)?;
        h.meta.seed = t.meta.get("seed").and_then(|s| s.parse().ok());
        h.meta.irf_fwhm = t.meta_f64("irf_fwhm_ns");
        if let Some(n) = t.meta_f64("n_events") {
            h.meta.n_events = n as u64;
        }
        Ok(h)
    }
}

/// Piecewise-linear density with exact inverse CDF.
struct LinearDensity {
    nodes: Vec<f64>,
    values: Vec<f64>,
    cumulative: Vec<f64>,
}

impl LinearDensity {
    fn from_curve(model: &G2Curve<f64>, lo: f64, hi: f64) -> Result<Self> {
        let d = model.delays();
        let tol = 1e-9 * (hi - lo);
        if d[0] > lo + tol || d[d.len() - 1] < hi - tol {
            return Err(Error::GridCoverage {
                lo: d[0],
                hi: d[d.len() - 1],
                needed_lo: lo,
                needed_hi: hi,
            });
        }
        let mut nodes = vec![lo];
        nodes.extend(d.iter().copied().filter(|&t| t > lo + tol && t < hi - tol));
        nodes.push(hi);
        let values: Vec<f64> = nodes.iter().map(|&t| model.value_at(t).max(0.0)).collect();
        let mut cumulative = Vec::with_capacity(nodes.len());
        let mut acc = 0.0;
        cumulative.push(0.0);
        for k in 1..nodes.len() {
            acc += 0.5 * (values[k - 1] + values[k]) * (nodes[k] - nodes[k - 1]);
            cumulative.push(acc);
        }
        if !(acc > 0.0) {
            return Err(Error::EmptyWindow("model has zero density in the window".into()));
        }
        Ok(Self {
            nodes,
            values,
            cumulative,
        })
    }

    fn sample(&self, u: f64) -> f64 {
        let total = self.cumulative[self.cumulative.len() - 1];
        let r = u * total;
        let k = self
            .cumulative
            .partition_point(|&c| c <= r)
            .clamp(1, self.nodes.len() - 1);
        let (x0, x1) = (self.nodes[k - 1], self.nodes[k]);
        let (a, b) = (self.values[k - 1], self.values[k]);
        let h = x1 - x0;
        let rem = r - self.cumulative[k - 1];
        let slope = (b - a) / h;
        let x = if slope.abs() < 1e-12 * (a + b).max(1e-300) / h {
            if a > 0.0 {
                rem / a
            } else {
                0.5 * h
            }
        } else {
            // a x + slope x²/2 = rem
            let disc = (a * a + 2.0 * slope * rem).max(0.0);
            (disc.sqrt() - a) / slope
        };
        x0 + x.clamp(0.0, h)
    }
}

/// Draws `n_events` coincidence delays with density ∝ `model` on
/// [−window, window], adds Gaussian timing jitter of the IRF FWHM and bins
/// them. Events jittered out of the window are redrawn.
pub fn sample_coincidences(
    model: &G2Curve<f64>,
    n_events: u64,
    config: &CoincidenceConfig,
    irf: Option<&Irf<f64>>,
    seed: RngSeed,
) -> Result<G2Histogram> {
    let w = config.window;
    if !(w > 0.0) {
        return Err(Error::EmptyWindow(format!("window must be > 0, got {w}")));
    }
    if n_events == 0 {
        return Err(invalid("n_events must be >= 1"));
    }
    if !(config.bin_width > 0.0) {
        return Err(invalid("bin width must be > 0"));
    }
    let n_bins = (2.0 * w / config.bin_width).round() as usize;
    if n_bins == 0 || ((n_bins as f64) * config.bin_width - 2.0 * w).abs() > 1e-6 * w {
        return Err(invalid("window must be a whole number of bins"));
    }
    let density = LinearDensity::from_curve(model, -w, w)?;
    let jitter = match irf {
        Some(i) => Some(Normal::new(0.0, i.sigma()).map_err(|e| invalid(e.to_string()))?),
        None => None,
    };
    let n_chunks = (n_events as usize).div_ceil(EVENTS_PER_CHUNK);
    let chunks: Vec<Vec<u64>> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = seed.rng(c as u32);
            let count = EVENTS_PER_CHUNK.min(n_events as usize - c * EVENTS_PER_CHUNK);
            let mut counts = vec![0u64; n_bins];
            for _ in 0..count {
                let tau = loop {
                    let t = density.sample(rng.random::<f64>());
                    let t = match &jitter {
                        Some(j) => t + j.sample(&mut rng),
                        None => t,
                    };
                    if (-w..=w).contains(&t) {
                        break t;
                    }
                };
                let k = (((tau + w) / config.bin_width) as usize).min(n_bins - 1);
                counts[k] += 1;
            }
            counts
        })
        .collect();
    let mut counts = vec![0u64; n_bins];
    for chunk in &chunks {
        for (a, b) in counts.iter_mut().zip(chunk) {
            *a += b;
        }
    }
    let edges: Vec<f64> = (0..=n_bins)
        .map(|k| -w + k as f64 * config.bin_width)
        .collect();
    let mut h = G2Histogram::new(edges, counts, config.plateau)?;
    h.meta = HistogramMeta {
        seed: Some(seed.seed),
        n_events,
        irf_fwhm: irf.map(|i| i.fwhm),
    };
    Ok(h)
}

/// Divides counts by their mean over the plateau |τ| window. Errors are
/// Poisson, with empty bins assigned the error of a single count.
pub fn normalize_histogram(h: &G2Histogram) -> Result<G2Curve<f64>> {
    let (lo, hi) = h.normalization_window;
    let centers = h.bin_centers();
    let mut sum = 0u64;
    let mut n = 0usize;
    let mut nonzero = 0usize;
    for (c, &k) in centers.iter().zip(h.counts()) {
        if (lo..=hi).contains(&c.abs()) {
            sum += k;
            n += 1;
            if k > 0 {
                nonzero += 1;
            }
        }
    }
    if nonzero < MIN_PLATEAU_BINS {
        return Err(Error::EmptyPlateau {
            nonzero,
            required: MIN_PLATEAU_BINS,
        });
    }
    let mean = sum as f64 / n as f64;
    let values = h.counts().iter().map(|&k| k as f64 / mean).collect();
    let errors = h
        .counts()
        .iter()
        .map(|&k| (k.max(1) as f64).sqrt() / mean)
        .collect();
    G2Curve::with_errors(centers, values, errors)
}
