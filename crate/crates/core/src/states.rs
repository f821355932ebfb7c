//! Wind-speed boundaries between operational states and the state model
//! derived from them.
//!
//! Cluster labels are expected in canonical wind order: 1 = proportional-rpm
//! state, 2 = fixed-rpm state (both the minimum-rpm and the nominal-rpm
//! regimes share its correlation structure), 3 = nominal-power state. Wind
//! speeds are expressed in units of the reference nominal wind speed.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats;

pub const PROPORTIONAL_CLUSTER: usize = 1;
pub const FIXED_RPM_CLUSTER: usize = 2;
pub const NOMINAL_POWER_CLUSTER: usize = 3;

pub const DEFAULT_QUANTILE: f64 = 0.25;
pub const DEFAULT_BIN_WIDTH: f64 = 0.02;
pub const DEFAULT_PERSISTENCE: usize = 2;

/// Controller regime of a turbine that is switched on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OperationalState {
    /// Generator held at the minimum speed the slip allows.
    FixedMinRpm,
    /// Rotor speed tracks the wind speed.
    Proportional,
    /// Nominal rotor speed, torque-controlled.
    FixedNominalRpm,
    /// Nominal power output reached.
    NominalPower,
}

impl OperationalState {
    pub const ALL: [OperationalState; 4] = [
        Self::FixedMinRpm,
        Self::Proportional,
        Self::FixedNominalRpm,
        Self::NominalPower,
    ];

    /// Canonical cluster label whose correlation structure this regime produces.
    pub fn cluster_label(self) -> usize {
        match self {
            Self::Proportional => PROPORTIONAL_CLUSTER,
            Self::FixedMinRpm | Self::FixedNominalRpm => FIXED_RPM_CLUSTER,
            Self::NominalPower => NOMINAL_POWER_CLUSTER,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::FixedMinRpm => "fixed-min-rpm",
            Self::Proportional => "proportional",
            Self::FixedNominalRpm => "fixed-nominal-rpm",
            Self::NominalPower => "nominal-power",
        }
    }
}

impl fmt::Display for OperationalState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for OperationalState {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown regime `{s}`")))
    }
}

/// Retention mask keeping every silhouette at or above the `quantile`
/// (linear interpolation) of the given values.
pub fn filter_by_silhouette_quartile(silhouettes: &[f64], quantile: f64) -> Result<Vec<bool>> {
    if silhouettes.is_empty() {
        return Err(Error::EmptyInput("no silhouettes to filter".into()));
    }
    let threshold = stats::quantile(silhouettes, quantile).ok_or_else(|| {
        Error::InvalidParameter(format!("quantile {quantile} outside [0, 1]"))
    })?;
    Ok(silhouettes.iter().map(|&s| s >= threshold).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianFit {
    pub mean: f64,
    /// Sample standard deviation.
    pub std: f64,
    pub count: usize,
    /// Zero spread: no density can be formed.
    pub degenerate: bool,
}

/// Sample mean and standard deviation of the wind speeds of each cluster.
/// Clusters with fewer than two epochs are skipped.
pub fn fit_gaussians(groups: &BTreeMap<usize, Vec<f64>>) -> BTreeMap<usize, GaussianFit> {
    groups
        .iter()
        .filter_map(|(&label, winds)| {
            let Some(std) = stats::sample_std(winds) else {
                warn!("cluster {label}: {} epoch(s), no gaussian fitted", winds.len());
                return None;
            };
            Some((
                label,
                GaussianFit {
                    mean: stats::mean(winds).expect("non-empty"),
                    std,
                    count: winds.len(),
                    degenerate: std == 0.0,
                },
            ))
        })
        .collect()
}

/// Intersection of two normal densities lying strictly between their means.
/// Arguments are `(mean, std)`; their order does not matter.
pub fn gaussian_boundary(a: (f64, f64), b: (f64, f64)) -> Result<f64> {
    let (low, high) = if a.0 <= b.0 { (a, b) } else { (b, a) };
    let ((m1, s1), (m2, s2)) = (low, high);
    if !(s1 > 0.0 && s2 > 0.0) || !s1.is_finite() || !s2.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "standard deviations must be positive, got {s1} and {s2}"
        )));
    }
    let no_root = || Error::NoBoundaryRoot { low: m1, high: m2 };
    if !(m1 < m2) {
        return Err(no_root());
    }
    // (v-m1)²/s1² - (v-m2)²/s2² + 2 ln(s1/s2) = 0
    let (p1, p2) = (1.0 / (s1 * s1), 1.0 / (s2 * s2));
    let qa = p1 - p2;
    let qb = 2.0 * (m2 * p2 - m1 * p1);
    let qc = m1 * m1 * p1 - m2 * m2 * p2 + 2.0 * (s1 / s2).ln();
    let inside = |v: f64| v > m1 && v < m2;
    if qa.abs() <= 1e-12 * (p1 + p2) {
        let v = -qc / qb;
        return if inside(v) { Ok(v) } else { Err(no_root()) };
    }
    let disc = qb * qb - 4.0 * qa * qc;
    if disc < 0.0 {
        return Err(no_root());
    }
    let q = -0.5 * (qb + qb.signum() * disc.sqrt());
    [q / qa, qc / q]
        .into_iter()
        .find(|&v| inside(v))
        .ok_or_else(no_root)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryMethod {
    GaussianIntersection,
    HistogramMaxLikelihood,
}

/// Boundary wind speeds in units of the reference nominal wind speed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateBoundaries {
    pub method: BoundaryMethod,
    pub v1: Option<f64>,
    pub v2: Option<f64>,
    pub v_nom: Option<f64>,
    pub units: String,
    pub persistence: Option<usize>,
    pub bin_width: Option<f64>,
}

impl StateBoundaries {
    pub fn new(method: BoundaryMethod, v1: Option<f64>, v2: Option<f64>, v_nom: Option<f64>) -> Result<Self> {
        let present: Vec<f64> = [v1, v2, v_nom].into_iter().flatten().collect();
        if present.is_empty() {
            return Err(Error::InvalidParameter("no boundary present".into()));
        }
        if present.iter().any(|v| !v.is_finite() || *v < 0.0) || present.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter(format!(
                "boundaries must be non-negative and strictly increasing: {present:?}"
            )));
        }
        if v1.is_some() && method != BoundaryMethod::HistogramMaxLikelihood {
            return Err(Error::InvalidParameter(
                "v1 is only estimated by the histogram method".into(),
            ));
        }
        Ok(Self {
            method,
            v1,
            v2,
            v_nom,
            units: "v_nom_reference".into(),
            persistence: None,
            bin_width: None,
        })
    }

    /// Wind intervals `[lo, hi)` and their states; `hi == None` is unbounded.
    pub fn regime_map(&self) -> Vec<(f64, Option<f64>, OperationalState)> {
        let mut out = Vec::new();
        let mut lo = 0.0;
        let steps = [
            (self.v1, OperationalState::FixedMinRpm),
            (self.v2, OperationalState::Proportional),
            (self.v_nom, OperationalState::FixedNominalRpm),
        ];
        for (edge, state) in steps {
            if let Some(hi) = edge {
                out.push((lo, Some(hi), state));
                lo = hi;
            }
        }
        let last = if self.v_nom.is_some() {
            OperationalState::NominalPower
        } else if self.v2.is_some() {
            OperationalState::FixedNominalRpm
        } else {
            OperationalState::Proportional
        };
        out.push((lo, None, last));
        out
    }
}

/// State predicted for a normalized wind speed. Without `v1` everything below
/// `v2` is proportional.
pub fn assign_state(v: f64, boundaries: &StateBoundaries) -> Result<OperationalState> {
    if !(v >= 0.0) {
        return Err(Error::InvalidParameter(format!("wind speed must be non-negative, got {v}")));
    }
    Ok(boundaries
        .regime_map()
        .into_iter()
        .find(|&(_, hi, _)| hi.is_none_or(|h| v < h))
        .map(|(_, _, s)| s)
        .expect("last interval is unbounded"))
}

/// Per-cluster epoch counts over wind-speed bins `[b·w, (b+1)·w)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindSpeedHistogram {
    pub bin_width: f64,
    /// `counts[bin][label - 1]`
    pub counts: Vec<Vec<u64>>,
    pub totals: Vec<u64>,
    /// `h_i / h_total` per bin; `None` for empty bins.
    pub rescaled: Vec<Option<Vec<f64>>>,
}

impl WindSpeedHistogram {
    fn from_counts(bin_width: f64, counts: Vec<Vec<u64>>) -> Self {
        let totals: Vec<u64> = counts.iter().map(|c| c.iter().sum()).collect();
        let rescaled = counts
            .iter()
            .zip(&totals)
            .map(|(c, &t)| (t > 0).then(|| c.iter().map(|&h| h as f64 / t as f64).collect()))
            .collect();
        Self {
            bin_width,
            counts,
            totals,
            rescaled,
        }
    }

    pub fn n_bins(&self) -> usize {
        self.counts.len()
    }

    pub fn n_labels(&self) -> usize {
        self.counts.first().map_or(0, Vec::len)
    }

    pub fn bin_edge(&self, bin: usize) -> f64 {
        bin as f64 * self.bin_width
    }

    /// Pool two histograms of equal bin width.
    pub fn merge(&self, other: &WindSpeedHistogram) -> Result<Self> {
        if self.bin_width != other.bin_width {
            return Err(Error::InvalidParameter(format!(
                "bin widths differ: {} vs {}",
                self.bin_width, other.bin_width
            )));
        }
        let bins = self.n_bins().max(other.n_bins());
        let labels = self.n_labels().max(other.n_labels());
        let mut counts = vec![vec![0u64; labels]; bins];
        for h in [self, other] {
            for (b, row) in h.counts.iter().enumerate() {
                for (l, &c) in row.iter().enumerate() {
                    counts[b][l] += c;
                }
            }
        }
        Ok(Self::from_counts(self.bin_width, counts))
    }
}

/// Histogram of `(cluster label, normalized wind)` pairs.
pub fn build_histograms(samples: &[(usize, f64)], bin_width: f64) -> Result<WindSpeedHistogram> {
    if !(bin_width > 0.0) || !bin_width.is_finite() {
        return Err(Error::InvalidParameter(format!("bin width must be positive, got {bin_width}")));
    }
    if let Some(&(l, v)) = samples.iter().find(|(l, v)| *l == 0 || !(*v >= 0.0) || !v.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "invalid sample (label {l}, wind {v}); labels start at 1 and wind must be non-negative"
        )));
    }
    let labels = samples.iter().map(|s| s.0).max().unwrap_or(0);
    let bins = samples
        .iter()
        .map(|s| (s.1 / bin_width).floor() as usize + 1)
        .max()
        .unwrap_or(0);
    let mut counts = vec![vec![0u64; labels]; bins];
    for &(label, v) in samples {
        counts[(v / bin_width).floor() as usize][label - 1] += 1;
    }
    Ok(WindSpeedHistogram::from_counts(bin_width, counts))
}

/// Direct maximum-likelihood boundaries: the most likely cluster per bin of
/// the rescaled histogram, with switches accepted only when the new cluster
/// holds for at least `persistence` consecutive occupied bins.
pub fn ml_boundaries(hist: &WindSpeedHistogram, persistence: usize) -> Result<StateBoundaries> {
    let persistence = persistence.max(1);
    // (label, first bin, run length) over occupied bins
    let mut runs: Vec<(usize, usize, usize)> = Vec::new();
    for (bin, row) in hist.rescaled.iter().enumerate() {
        let Some(row) = row else { continue };
        let best = row
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |b, (i, &p)| if p > b.1 { (i, p) } else { b })
            .0
            + 1;
        match runs.last_mut() {
            Some(r) if r.0 == best => r.2 += 1,
            _ => runs.push((best, bin, 1)),
        }
    }
    let mut regions: Vec<(usize, usize)> = Vec::new();
    for &(label, start, len) in &runs {
        if len < persistence {
            continue;
        }
        if regions.last().is_none_or(|r| r.0 != label) {
            regions.push((label, start));
        }
    }
    let distinct: BTreeSet<usize> = regions.iter().map(|r| r.0).collect();
    if distinct.len() < 2 {
        return Err(Error::InsufficientSeparation(format!(
            "{} persistent most-likely cluster(s) across the histogram",
            distinct.len()
        )));
    }

    let edge = |r: &(usize, usize)| hist.bin_edge(r.1);
    let prop = regions.iter().position(|r| r.0 == PROPORTIONAL_CLUSTER);
    let after = prop.map_or(0, |p| p + 1);
    let v1 = prop
        .filter(|&p| p > 0 && regions[..p].iter().all(|r| r.0 == FIXED_RPM_CLUSTER))
        .map(|p| edge(&regions[p]));
    let nom_pos = regions[after..]
        .iter()
        .position(|r| r.0 == NOMINAL_POWER_CLUSTER)
        .map(|i| i + after);
    let v_nom = nom_pos.map(|p| edge(&regions[p]));
    let v2 = if prop.is_some() {
        regions[after..nom_pos.unwrap_or(regions.len())]
            .iter()
            .find(|r| r.0 == FIXED_RPM_CLUSTER)
            .map(edge)
    } else {
        None
    };
    let mut b = StateBoundaries::new(BoundaryMethod::HistogramMaxLikelihood, v1, v2, v_nom)
        .map_err(|e| Error::InsufficientSeparation(e.to_string()))?;
    b.persistence = Some(persistence);
    b.bin_width = Some(hist.bin_width);
    Ok(b)
}

/// Single-turbine boundaries from gaussian fits of the proportional,
/// fixed-rpm and nominal-power clusters.
///
/// Fixed-rpm epochs below the proportional mean belong to the low-wind
/// minimum-rpm regime, which one normal density cannot describe together with
/// the nominal-rpm regime; they are left out of the fit.
pub fn gaussian_state_boundaries(
    samples: &[(usize, f64)],
) -> Result<(BTreeMap<usize, GaussianFit>, StateBoundaries)> {
    let mut groups: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for &(label, v) in samples {
        groups.entry(label).or_default().push(v);
    }
    let prop_mean = groups
        .get(&PROPORTIONAL_CLUSTER)
        .and_then(|w| stats::mean(w))
        .ok_or_else(|| Error::InsufficientSeparation("no proportional-state epochs".into()))?;
    if let Some(fixed) = groups.get_mut(&FIXED_RPM_CLUSTER) {
        fixed.retain(|&v| v >= prop_mean);
    }
    let fits = fit_gaussians(&groups);
    let pair = |a: usize, b: usize| -> Result<Option<f64>> {
        match (fits.get(&a), fits.get(&b)) {
            (Some(x), Some(y)) if !x.degenerate && !y.degenerate => {
                gaussian_boundary((x.mean, x.std), (y.mean, y.std)).map(Some)
            }
            _ => Ok(None),
        }
    };
    let v2 = pair(PROPORTIONAL_CLUSTER, FIXED_RPM_CLUSTER)?;
    let v_nom = pair(FIXED_RPM_CLUSTER, NOMINAL_POWER_CLUSTER)?;
    let b = StateBoundaries::new(BoundaryMethod::GaussianIntersection, None, v2, v_nom)?;
    Ok((fits, b))
}

/// Fraction of epochs whose model state differs from their cluster label,
/// optionally restricted to a subset of epochs.
pub fn allocation_change_rate<K: Ord>(
    cluster_labels: &BTreeMap<K, usize>,
    model_labels: &BTreeMap<K, usize>,
    restrict_to: Option<&BTreeSet<K>>,
) -> Result<f64> {
    if cluster_labels.len() != model_labels.len()
        || cluster_labels.keys().zip(model_labels.keys()).any(|(a, b)| a != b)
    {
        return Err(Error::KeyMismatch);
    }
    let (mut changed, mut total) = (0usize, 0usize);
    match restrict_to {
        Some(keys) => {
            for k in keys {
                let (Some(c), Some(m)) = (cluster_labels.get(k), model_labels.get(k)) else {
                    return Err(Error::KeyMismatch);
                };
                total += 1;
                changed += usize::from(c != m);
            }
        }
        None => {
            for (c, m) in cluster_labels.values().zip(model_labels.values()) {
                total += 1;
                changed += usize::from(c != m);
            }
        }
    }
    if total == 0 {
        return Err(Error::EmptyInput("no epochs to compare".into()));
    }
    Ok(changed as f64 / total as f64)
}
