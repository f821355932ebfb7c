//! Per-epoch normalization and Pearson correlation matrices.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::ingest::EpochMatrix;
use crate::matrix::SquareMatrix;

/// Standard deviation below which a channel counts as constant.
pub const DEFAULT_DEGENERATE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedEpoch {
    /// z-scored rows; degenerate channels are all zero.
    pub rows: Vec<Vec<f64>>,
    pub means: Vec<f64>,
    /// Population standard deviations (divisor = number of retained columns).
    pub stds: Vec<f64>,
    pub degenerate: BTreeSet<usize>,
}

fn require_valid(epoch: &EpochMatrix) -> Result<()> {
    if !epoch.is_valid() || epoch.valid_count() == 0 {
        return Err(Error::InsufficientData {
            epoch_start: epoch.epoch_start,
            valid_count: epoch.valid_count(),
            min_points: epoch.min_points,
        });
    }
    Ok(())
}

pub fn normalize_epoch(epoch: &EpochMatrix, degenerate_eps: f64) -> Result<NormalizedEpoch> {
    require_valid(epoch)?;
    let n = epoch.valid_count() as f64;
    let k = epoch.channel_count();
    let mut out = NormalizedEpoch {
        rows: Vec::with_capacity(k),
        means: Vec::with_capacity(k),
        stds: Vec::with_capacity(k),
        degenerate: BTreeSet::new(),
    };
    for (idx, row) in epoch.rows.iter().enumerate() {
        let mean = row.iter().sum::<f64>() / n;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let std = var.sqrt();
        let z = if std < degenerate_eps {
            out.degenerate.insert(idx);
            vec![0.0; row.len()]
        } else {
            row.iter().map(|v| (v - mean) / std).collect()
        };
        out.rows.push(z);
        out.means.push(mean);
        out.stds.push(std);
    }
    Ok(out)
}

/// Pearson correlation matrix of one epoch, tagged with its origin.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    pub turbine_id: String,
    pub epoch_start: i64,
    pub entries: SquareMatrix,
    pub degenerate_channels: BTreeSet<usize>,
}

/// `C = M Mᵀ / T'` over the z-scored epoch. The diagonal is set to exactly 1
/// and entries are clamped to [-1, 1]; rows of degenerate channels are zero
/// off the diagonal.
pub fn pearson_matrix(epoch: &EpochMatrix, degenerate_eps: f64) -> Result<CorrelationMatrix> {
    let norm = normalize_epoch(epoch, degenerate_eps)?;
    let k = norm.rows.len();
    let n = epoch.valid_count() as f64;
    let mut c = SquareMatrix::identity(k);
    for i in 0..k {
        for j in (i + 1)..k {
            let dot: f64 = norm.rows[i]
                .iter()
                .zip(&norm.rows[j])
                .map(|(a, b)| a * b)
                .sum();
            let r = (dot / n).clamp(-1.0, 1.0);
            c.set(i, j, r);
            c.set(j, i, r);
        }
    }
    Ok(CorrelationMatrix {
        turbine_id: epoch.turbine_id.clone(),
        epoch_start: epoch.epoch_start,
        entries: c,
        degenerate_channels: norm.degenerate,
    })
}

/// Format like C's `%.15g`: 15 significant digits, trailing zeros removed.
pub fn format_sig15(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{:.14e}", x);
    let (mantissa, exp) = sci.split_once('e').unwrap();
    let exp: i32 = exp.parse().unwrap();
    if (-5..15).contains(&exp) {
        let decimals = (14 - exp).max(0) as usize;
        let fixed = format!("{:.*}", decimals, x);
        trim_fraction(&fixed).to_string()
    } else {
        let m = trim_fraction(mantissa);
        format!("{m}e{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs())
    }
}

fn trim_fraction(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// One dump line: `turbine,epoch_start,C11,C12,...,CKK` (row-major).
pub fn dump_line(c: &CorrelationMatrix) -> String {
    let mut line = format!("{},{}", c.turbine_id, c.epoch_start);
    for v in c.entries.as_slice() {
        let _ = write!(line, ",{}", format_sig15(*v));
    }
    line
}
