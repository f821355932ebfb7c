//! Raw sensor ingestion: CSV parsing, fixed-grid resampling and epoch segmentation.

use std::path::Path;
use std::sync::Arc;

use chrono::{DateTime, NaiveDateTime};
use log::warn;
use serde::Serialize;

use crate::error::{Error, Result};

/// One raw observation of one channel. `value == None` records that the
/// timestamp was present in the source but the field was empty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawSample {
    /// Milliseconds since the unix epoch.
    pub timestamp_ms: i64,
    pub channel: usize,
    pub value: Option<f64>,
}

/// Fixed-cadence multivariate series of one turbine.
///
/// All channels share one timestamp axis `start + i * grid_step`; cells
/// without any raw sample are `None` and are never filled in.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalGrid {
    pub turbine_id: String,
    /// Seconds between consecutive cells.
    pub grid_step: i64,
    /// Timestamp (seconds) of the first cell, a multiple of `grid_step`.
    pub start: i64,
    pub channels: Arc<[String]>,
    pub units: Vec<String>,
    /// `values[channel][cell]`
    pub values: Vec<Vec<Option<f64>>>,
}

impl SignalGrid {
    pub fn len(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn timestamp(&self, cell: usize) -> i64 {
        self.start + cell as i64 * self.grid_step
    }

    pub fn channel_index(&self, name: &str) -> Option<usize> {
        self.channels.iter().position(|c| c == name)
    }

    /// True when every channel holds a value at `cell`.
    pub fn is_complete(&self, cell: usize) -> bool {
        self.values.iter().all(|ch| ch[cell].is_some())
    }

    pub fn complete_count(&self) -> usize {
        (0..self.len()).filter(|&c| self.is_complete(c)).count()
    }

    /// Expand the grid back into raw samples, one per cell and channel.
    pub fn to_raw_samples(&self) -> Vec<RawSample> {
        let mut out = Vec::with_capacity(self.len() * self.channels.len());
        for cell in 0..self.len() {
            let ts = self.timestamp(cell) * 1000;
            for (channel, series) in self.values.iter().enumerate() {
                out.push(RawSample {
                    timestamp_ms: ts,
                    channel,
                    value: series[cell],
                });
            }
        }
        out
    }
}

/// Average raw samples onto half-open cells `[start, start + grid_step)`.
///
/// The grid spans every cell from the earliest to the latest raw timestamp,
/// including timestamps whose fields were all empty.
pub fn resample_to_grid(
    turbine_id: &str,
    channels: &[String],
    raw: &[RawSample],
    grid_step: i64,
) -> Result<SignalGrid> {
    if grid_step <= 0 {
        return Err(Error::InvalidParameter(format!(
            "grid step must be positive, got {grid_step}"
        )));
    }
    if raw.is_empty() {
        return Err(Error::EmptyInput(format!("no samples for turbine {turbine_id}")));
    }
    let step_ms = grid_step * 1000;
    let cell_of = |ts: i64| ts.div_euclid(step_ms);
    let first = raw.iter().map(|s| cell_of(s.timestamp_ms)).min().unwrap();
    let last = raw.iter().map(|s| cell_of(s.timestamp_ms)).max().unwrap();
    let len = (last - first + 1) as usize;

    let mut sums = vec![vec![0.0f64; len]; channels.len()];
    let mut counts = vec![vec![0u32; len]; channels.len()];
    for s in raw {
        if s.channel >= channels.len() {
            return Err(Error::DimensionMismatch {
                expected: channels.len(),
                actual: s.channel + 1,
            });
        }
        if let Some(v) = s.value {
            let cell = (cell_of(s.timestamp_ms) - first) as usize;
            sums[s.channel][cell] += v;
            counts[s.channel][cell] += 1;
        }
    }
    let values = sums
        .into_iter()
        .zip(counts)
        .map(|(sum, count)| {
            sum.into_iter()
                .zip(count)
                .map(|(s, n)| (n > 0).then(|| s / f64::from(n)))
                .collect()
        })
        .collect();

    Ok(SignalGrid {
        turbine_id: turbine_id.to_string(),
        grid_step,
        start: first * grid_step,
        channels: channels.to_vec().into(),
        units: vec![String::new(); channels.len()],
        values,
    })
}

/// One disjoint window of the grid restricted to its complete timestamps.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochMatrix {
    pub turbine_id: String,
    pub epoch_start: i64,
    pub channels: Arc<[String]>,
    /// `rows[channel][retained column]`
    pub rows: Vec<Vec<f64>>,
    pub timestamps: Vec<i64>,
    pub epoch_length: usize,
    pub min_points: usize,
}

impl EpochMatrix {
    pub fn valid_count(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_valid(&self) -> bool {
        self.valid_count() >= self.min_points
    }

    pub fn channel_count(&self) -> usize {
        self.rows.len()
    }
}

/// Cut the grid into consecutive epochs of `epoch_length` cells aligned to the
/// grid origin. Timestamps missing any channel are dropped from their epoch; a
/// trailing partial window becomes a (shorter) epoch as well.
pub fn segment_epochs(
    grid: &SignalGrid,
    epoch_length: usize,
    min_points: usize,
) -> Result<Vec<EpochMatrix>> {
    if epoch_length < 2 {
        return Err(Error::InvalidParameter(format!(
            "epoch length must be at least 2, got {epoch_length}"
        )));
    }
    if grid.is_empty() {
        return Err(Error::EmptyInput(format!(
            "empty grid for turbine {}",
            grid.turbine_id
        )));
    }
    let k = grid.channels.len();
    let epochs = (0..grid.len())
        .step_by(epoch_length)
        .map(|first| {
            let end = (first + epoch_length).min(grid.len());
            let mut rows = vec![Vec::with_capacity(end - first); k];
            let mut timestamps = Vec::with_capacity(end - first);
            for cell in first..end {
                if !grid.is_complete(cell) {
                    continue;
                }
                timestamps.push(grid.timestamp(cell));
                for (row, series) in rows.iter_mut().zip(&grid.values) {
                    row.push(series[cell].unwrap_or_default());
                }
            }
            EpochMatrix {
                turbine_id: grid.turbine_id.clone(),
                epoch_start: grid.timestamp(first),
                channels: Arc::clone(&grid.channels),
                rows,
                timestamps,
                epoch_length,
                min_points,
            }
        })
        .collect();
    Ok(epochs)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochSummary {
    pub turbine_id: String,
    pub epoch_start: i64,
    /// Mean over retained columns; `None` when no column was retained.
    pub mean_wind_speed: Option<f64>,
    pub valid_count: usize,
    pub valid: bool,
}

pub fn epoch_summary(epochs: &[EpochMatrix], wind_channel: usize) -> Vec<EpochSummary> {
    epochs
        .iter()
        .map(|e| {
            let wind = e.rows.get(wind_channel).filter(|r| !r.is_empty());
            EpochSummary {
                turbine_id: e.turbine_id.clone(),
                epoch_start: e.epoch_start,
                mean_wind_speed: wind.map(|r| r.iter().sum::<f64>() / r.len() as f64),
                valid_count: e.valid_count(),
                valid: e.is_valid(),
            }
        })
        .collect()
}

/// Parse integer epoch-seconds or an ISO-8601 date-time (UTC when no offset is
/// given) into milliseconds.
pub fn parse_timestamp(field: &str) -> Option<i64> {
    let field = field.trim();
    if let Ok(secs) = field.parse::<i64>() {
        return secs.checked_mul(1000);
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(field) {
        return Some(dt.timestamp_millis());
    }
    ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f"]
        .iter()
        .find_map(|fmt| NaiveDateTime::parse_from_str(field, fmt).ok())
        .map(|dt| dt.and_utc().timestamp_millis())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkippedRow {
    /// 1-based line number in the file, header included.
    pub line: u64,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct TurbineCsv {
    pub turbine_id: String,
    pub channels: Vec<String>,
    pub samples: Vec<RawSample>,
    pub rows_read: usize,
    pub skipped: Vec<SkippedRow>,
}

/// Read one turbine CSV (`timestamp,<channel>,...`), keeping the requested
/// `signals` in the given order. The file stem is the turbine id. Rows that
/// fail to parse are skipped and reported, never fatal.
pub fn read_turbine_csv(path: &Path, signals: &[String]) -> Result<TurbineCsv> {
    let turbine_id = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or_default()
        .to_string();
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let header = reader.headers()?.clone();
    let column = |name: &str| header.iter().position(|h| h == name);
    let ts_col = column("timestamp").ok_or_else(|| Error::Format {
        path: path.to_path_buf(),
        message: "missing `timestamp` column".into(),
    })?;
    let signal_cols = signals
        .iter()
        .map(|s| {
            column(s).ok_or_else(|| Error::Format {
                path: path.to_path_buf(),
                message: format!("missing `{s}` column"),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut samples = Vec::new();
    let mut skipped = Vec::new();
    let mut rows_read = 0;
    let mut record = csv::StringRecord::new();
    loop {
        let line = reader.position().line();
        match reader.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) => {
                skipped.push(SkippedRow {
                    line,
                    reason: e.to_string(),
                });
                continue;
            }
        }
        rows_read += 1;
        let line = record.position().map_or(line, |p| p.line());
        if record.len() != header.len() {
            skipped.push(SkippedRow {
                line,
                reason: format!("expected {} fields, found {}", header.len(), record.len()),
            });
            continue;
        }
        let Some(ts) = parse_timestamp(&record[ts_col]) else {
            skipped.push(SkippedRow {
                line,
                reason: format!("unparseable timestamp `{}`", &record[ts_col]),
            });
            continue;
        };
        let parsed: std::result::Result<Vec<Option<f64>>, String> = signal_cols
            .iter()
            .map(|&c| {
                let f = &record[c];
                if f.is_empty() {
                    Ok(None)
                } else {
                    f.parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .map(Some)
                        .ok_or_else(|| format!("unparseable value `{f}` in `{}`", &header[c]))
                }
            })
            .collect();
        match parsed {
            Ok(values) => samples.extend(values.into_iter().enumerate().map(|(channel, value)| {
                RawSample {
                    timestamp_ms: ts,
                    channel,
                    value,
                }
            })),
            Err(reason) => skipped.push(SkippedRow { line, reason }),
        }
    }
    if !skipped.is_empty() {
        warn!(
            "{}: skipped {} of {} rows (first at line {})",
            path.display(),
            skipped.len(),
            rows_read,
            skipped[0].line
        );
    }
    Ok(TurbineCsv {
        turbine_id,
        channels: signals.to_vec(),
        samples,
        rows_read,
        skipped,
    })
}

/// Read a turbine CSV and resample it onto the grid.
pub fn load_turbine_grid(
    path: &Path,
    signals: &[String],
    grid_step: i64,
) -> Result<(SignalGrid, Vec<SkippedRow>)> {
    let csv = read_turbine_csv(path, signals)?;
    let grid = resample_to_grid(&csv.turbine_id, &csv.channels, &csv.samples, grid_step)?;
    Ok((grid, csv.skipped))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("s{i}")).collect()
    }

    fn sample(t_ms: i64, channel: usize, value: f64) -> RawSample {
        RawSample {
            timestamp_ms: t_ms,
            channel,
            value: Some(value),
        }
    }

    #[test]
    fn cell_mean_of_two_points() {
        let raw = [sample(2_000, 0, 1.0), sample(7_000, 0, 3.0)];
        let grid = resample_to_grid("t", &names(1), &raw, 10).unwrap();
        assert_eq!(grid.len(), 1);
        assert_eq!(grid.values[0][0], Some(2.0));
    }

    #[test]
    fn empty_cell_is_missing() {
        let raw = [sample(0, 0, 1.0), sample(25_000, 0, 4.0)];
        let grid = resample_to_grid("t", &names(1), &raw, 10).unwrap();
        assert_eq!(grid.values[0], vec![Some(1.0), None, Some(4.0)]);
    }

    #[test]
    fn boundary_sample_goes_to_later_cell() {
        let raw = [sample(0, 0, 1.0), sample(10_000, 0, 5.0)];
        let grid = resample_to_grid("t", &names(1), &raw, 10).unwrap();
        assert_eq!(grid.values[0], vec![Some(1.0), Some(5.0)]);
    }

    #[test]
    fn irregular_stream_matches_per_cell_summation() {
        // ~5 s cadence with jitter: 40 samples over 200 s
        let times: Vec<i64> = (0..40).map(|i| i * 5_000 + (i * 37 % 11) * 150).collect();
        let raw: Vec<_> = times
            .iter()
            .enumerate()
            .map(|(i, &t)| sample(t, 0, (i as f64 * 0.7).sin() * 3.0 + i as f64))
            .collect();
        let grid = resample_to_grid("t", &names(1), &raw, 10).unwrap();
        assert_eq!(grid.len(), 20);
        for cell in 0..20 {
            let lo = cell as i64 * 10_000;
            let hi = lo + 10_000;
            let mut sum = 0.0;
            let mut n = 0;
            for s in &raw {
                if s.timestamp_ms >= lo && s.timestamp_ms < hi {
                    sum += s.value.unwrap();
                    n += 1;
                }
            }
            let expected = (n > 0).then(|| sum / n as f64);
            assert_eq!(grid.values[0][cell], expected, "cell {cell}");
        }
    }

    #[test]
    fn rejects_empty_and_bad_step() {
        assert!(matches!(
            resample_to_grid("t", &names(1), &[], 10),
            Err(Error::EmptyInput(_))
        ));
        assert!(matches!(
            resample_to_grid("t", &names(1), &[sample(0, 0, 1.0)], 0),
            Err(Error::InvalidParameter(_))
        ));
    }

    fn complete_grid(len: usize, k: usize) -> SignalGrid {
        SignalGrid {
            turbine_id: "wt".into(),
            grid_step: 10,
            start: 0,
            channels: names(k).into(),
            units: vec![String::new(); k],
            values: (0..k)
                .map(|c| (0..len).map(|i| Some((i * (c + 1)) as f64)).collect())
                .collect(),
        }
    }

    #[test]
    fn twenty_days_give_960_full_epochs() {
        let grid = complete_grid(20 * 24 * 60 * 6, 2);
        let epochs = segment_epochs(&grid, 180, 90).unwrap();
        assert_eq!(epochs.len(), 960);
        assert!(epochs.iter().all(|e| e.valid_count() == 180 && e.is_valid()));
        assert_eq!(epochs[1].epoch_start, 1800);
    }

    #[test]
    fn missing_channel_drops_columns() {
        let mut grid = complete_grid(180, 5);
        for cell in 0..30 {
            grid.values[3][cell * 3] = None;
        }
        let epochs = segment_epochs(&grid, 180, 90).unwrap();
        assert_eq!(epochs[0].valid_count(), 150);
        assert!(epochs[0].rows.iter().all(|r| r.len() == 150));
    }

    #[test]
    fn validity_gate() {
        let mut grid = complete_grid(180, 2);
        for cell in 85..180 {
            grid.values[0][cell] = None;
        }
        let e = &segment_epochs(&grid, 180, 90).unwrap()[0];
        assert_eq!(e.valid_count(), 85);
        assert!(!e.is_valid());
    }

    #[test]
    fn summary_of_constant_and_invalid_epochs() {
        let mut grid = complete_grid(360, 2);
        grid.values[1] = vec![Some(8.0); 360];
        for cell in 180..300 {
            grid.values[0][cell] = None;
        }
        let epochs = segment_epochs(&grid, 180, 90).unwrap();
        let summary = epoch_summary(&epochs, 1);
        assert_eq!(summary[0].mean_wind_speed, Some(8.0));
        assert!(summary[0].valid);
        assert!(!summary[1].valid);
        assert_eq!(summary[1].valid_count, 60);
        assert_eq!(summary[1].mean_wind_speed, Some(8.0));
    }

    #[test]
    fn timestamp_formats() {
        assert_eq!(parse_timestamp("1488672000"), Some(1_488_672_000_000));
        assert_eq!(
            parse_timestamp("2017-03-05T00:00:00Z"),
            Some(1_488_672_000_000)
        );
        assert_eq!(
            parse_timestamp("2017-03-05 00:00:05.5"),
            Some(1_488_672_005_500)
        );
        assert_eq!(parse_timestamp("yesterday"), None);
    }

    #[test]
    fn csv_rows_with_errors_are_skipped_and_counted() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("WT7.csv");
        let mut f = std::fs::File::create(&path).unwrap();
        writeln!(f, "timestamp,ActivePower,CurrentL1,RotorRPM,GeneratorRPM,WindSpeed").unwrap();
        writeln!(f, "0,1,2,3,4,5").unwrap();
        writeln!(f, "bogus,1,2,3,4,5").unwrap();
        writeln!(f, "5,1,2,x,4,5").unwrap();
        writeln!(f, "10,1,,3,4,5").unwrap();
        writeln!(f, "20,1,2,3").unwrap();
        drop(f);
        let signals: Vec<String> = crate::STANDARD_SIGNALS.iter().map(|s| s.to_string()).collect();
        let csv = read_turbine_csv(&path, &signals).unwrap();
        assert_eq!(csv.turbine_id, "WT7");
        assert_eq!(csv.rows_read, 5);
        let lines: Vec<u64> = csv.skipped.iter().map(|s| s.line).collect();
        assert_eq!(lines, vec![3, 4, 6]);
        let (grid, _) = load_turbine_grid(&path, &signals, 10).unwrap();
        assert_eq!(grid.len(), 2);
        assert_eq!(grid.values[1], vec![Some(2.0), None]);
    }

    #[test]
    fn csv_missing_column_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("WT1.csv");
        std::fs::write(&path, "timestamp,WindSpeed\n0,1\n").unwrap();
        let signals = vec!["RotorRPM".to_string()];
        assert!(matches!(
            read_turbine_csv(&path, &signals),
            Err(Error::Format { .. })
        ));
    }
}
