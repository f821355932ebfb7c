//! In-memory stages of the pipeline, one turbine at a time.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use turbine_states::clustering::{bisecting_kmeans, silhouette_table, ClusterParams, ClusterSolution, SilhouetteRow};
use turbine_states::correlation::{pearson_matrix, CorrelationMatrix};
use turbine_states::ingest::{epoch_summary, load_turbine_grid, segment_epochs, EpochMatrix, EpochSummary};
use turbine_states::states::{
    allocation_change_rate, assign_state, build_histograms, filter_by_silhouette_quartile,
    gaussian_state_boundaries, ml_boundaries, GaussianFit, StateBoundaries, WindSpeedHistogram,
};
use turbine_states::SquareMatrix;

use crate::config::RunConfig;
use crate::error::CliError;

/// Run `f` on a pool of `jobs` workers (0 = one per core).
pub fn with_pool<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}

pub fn list_turbine_files(dir: &Path, include: &[String]) -> Result<Vec<PathBuf>, CliError> {
    let entries = std::fs::read_dir(dir)
        .map_err(|e| CliError::Data(format!("cannot read input directory {}: {e}", dir.display())))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .filter(|p| {
            include.is_empty()
                || p.file_stem()
                    .and_then(|s| s.to_str())
                    .is_some_and(|s| include.iter().any(|i| i == s))
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CliError::Data(format!("no turbine CSV files in {}", dir.display())));
    }
    Ok(files)
}

#[derive(Debug, Clone)]
pub struct TurbineEpochs {
    pub turbine_id: String,
    pub epochs: Vec<EpochMatrix>,
    pub summaries: Vec<EpochSummary>,
    pub skipped_rows: usize,
}

pub fn ingest_turbine(path: &Path, cfg: &RunConfig) -> Result<TurbineEpochs, CliError> {
    let (grid, skipped) = load_turbine_grid(path, &cfg.signals, cfg.grid_seconds)?;
    let epochs = segment_epochs(&grid, cfg.epoch_length()?, cfg.min_points)?;
    let wind = grid
        .channel_index(&cfg.wind_signal)
        .ok_or_else(|| CliError::Usage(format!("wind signal `{}` not among signals", cfg.wind_signal)))?;
    Ok(TurbineEpochs {
        turbine_id: grid.turbine_id.clone(),
        summaries: epoch_summary(&epochs, wind),
        epochs,
        skipped_rows: skipped.len(),
    })
}

/// Ingest every turbine file; unreadable turbines are skipped with a warning.
pub fn ingest_all(cfg: &RunConfig) -> Result<Vec<TurbineEpochs>, CliError> {
    let files = list_turbine_files(&cfg.input_dir(), &cfg.turbines)?;
    let results = with_pool(cfg.jobs, || {
        files
            .par_iter()
            .map(|p| (p, ingest_turbine(p, cfg)))
            .collect::<Vec<_>>()
    })?;
    let mut out = Vec::new();
    for (path, r) in results {
        match r {
            Ok(t) => out.push(t),
            Err(CliError::Usage(m)) => return Err(CliError::Usage(m)),
            Err(e) => warn!("skipping {}: {e}", path.display()),
        }
    }
    if out.is_empty() {
        return Err(CliError::Data("no turbine could be ingested".into()));
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct TurbineClustering {
    pub turbine_id: String,
    pub channels: Vec<String>,
    pub epoch_starts: Vec<i64>,
    /// Epoch mean wind speed in input units.
    pub mean_wind: Vec<f64>,
    pub matrices: Vec<CorrelationMatrix>,
    pub solution: ClusterSolution,
    pub table: Vec<SilhouetteRow>,
}

pub fn correlation_matrices(t: &TurbineEpochs, cfg: &RunConfig) -> Result<Vec<(CorrelationMatrix, f64)>, CliError> {
    t.epochs
        .iter()
        .zip(&t.summaries)
        .filter(|(e, _)| e.is_valid())
        .map(|(e, s)| {
            let c = pearson_matrix(e, cfg.degenerate_eps)?;
            Ok((c, s.mean_wind_speed.unwrap_or(f64::NAN)))
        })
        .collect()
}

/// Cluster the valid epochs of one turbine. `None` when it has too few.
pub fn cluster_turbine(t: &TurbineEpochs, cfg: &RunConfig) -> Result<Option<TurbineClustering>, CliError> {
    let pairs = correlation_matrices(t, cfg)?;
    if pairs.len() < cfg.clusters.max(2) {
        warn!(
            "{}: {} valid epochs, fewer than the {} clusters requested; skipped",
            t.turbine_id,
            pairs.len(),
            cfg.clusters
        );
        return Ok(None);
    }
    let objects: Vec<SquareMatrix> = pairs.iter().map(|(c, _)| c.entries.clone()).collect();
    let wind: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let params = ClusterParams {
        seed: cfg.seed,
        restarts: cfg.restarts,
        ..ClusterParams::default()
    };
    let solution = bisecting_kmeans(&objects, cfg.clusters, &params, Some(&wind))?;
    let hi = cfg.n_range.1.min(objects.len());
    let table = if cfg.n_range.0 <= hi {
        silhouette_table(&objects, cfg.n_range.0..=hi, &params, Some(&wind))?
    } else {
        Vec::new()
    };
    info!(
        "{}: {} valid epochs, cluster sizes {:?}",
        t.turbine_id,
        objects.len(),
        solution.sizes
    );
    Ok(Some(TurbineClustering {
        turbine_id: t.turbine_id.clone(),
        channels: t.epochs.first().map(|e| e.channels.to_vec()).unwrap_or_default(),
        epoch_starts: pairs.iter().map(|(c, _)| c.epoch_start).collect(),
        mean_wind: wind,
        matrices: pairs.into_iter().map(|(c, _)| c).collect(),
        solution,
        table,
    }))
}

/// One row of the labels artifact.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelRow {
    pub turbine: String,
    pub epoch_start: i64,
    pub cluster: usize,
    pub silhouette: Option<f64>,
    pub mean_wind_speed: f64,
}

pub fn label_rows(c: &TurbineClustering) -> Vec<LabelRow> {
    let sil = c.solution.silhouettes.as_ref();
    (0..c.epoch_starts.len())
        .map(|i| LabelRow {
            turbine: c.turbine_id.clone(),
            epoch_start: c.epoch_starts[i],
            cluster: c.solution.labels[i],
            silhouette: sil.map(|s| s.values[i]),
            mean_wind_speed: c.mean_wind[i],
        })
        .collect()
}

pub fn group_by_turbine(rows: &[LabelRow]) -> BTreeMap<&str, Vec<&LabelRow>> {
    let mut m: BTreeMap<&str, Vec<&LabelRow>> = BTreeMap::new();
    for r in rows {
        m.entry(r.turbine.as_str()).or_default().push(r);
    }
    m
}

/// Epochs kept by the per-turbine silhouette quantile filter.
pub fn retained_epochs(rows: &[LabelRow], quantile: f64) -> Result<BTreeSet<(String, i64)>, CliError> {
    let mut keep = BTreeSet::new();
    for (turbine, rs) in group_by_turbine(rows) {
        let sil: Vec<f64> = rs
            .iter()
            .map(|r| r.silhouette)
            .collect::<Option<_>>()
            .ok_or_else(|| {
                CliError::Data(format!(
                    "{turbine}: labels carry no silhouettes; run `cluster` with at least 2 clusters first"
                ))
            })?;
        let mask = filter_by_silhouette_quartile(&sil, quantile)?;
        for (r, k) in rs.iter().zip(mask) {
            if k {
                keep.insert((turbine.to_string(), r.epoch_start));
            }
        }
    }
    Ok(keep)
}

#[derive(Debug, Clone)]
pub struct TurbineGaussian {
    pub turbine: String,
    pub result: Result<(BTreeMap<usize, GaussianFit>, StateBoundaries), String>,
}

#[derive(Debug, Clone)]
pub struct BoundaryResult {
    pub per_turbine: Vec<TurbineGaussian>,
    pub histogram: WindSpeedHistogram,
    pub pooled: StateBoundaries,
    pub retained: BTreeSet<(String, i64)>,
}

fn normalized(rows: &[&LabelRow], reference: f64) -> Vec<(usize, f64)> {
    rows.iter()
        .filter(|r| r.mean_wind_speed.is_finite())
        .map(|r| (r.cluster, r.mean_wind_speed / reference))
        .collect()
}

pub fn fit_boundaries(rows: &[LabelRow], cfg: &RunConfig) -> Result<BoundaryResult, CliError> {
    let reference = cfg.v_nom_reference()?;
    let retained = retained_epochs(rows, cfg.quantile)?;
    let groups = group_by_turbine(rows);
    let mut per_turbine = Vec::new();
    let mut pooled: Option<WindSpeedHistogram> = None;
    for (turbine, rs) in &groups {
        let kept: Vec<&LabelRow> = rs
            .iter()
            .copied()
            .filter(|r| retained.contains(&(turbine.to_string(), r.epoch_start)))
            .collect();
        let samples = normalized(&kept, reference);
        let result = gaussian_state_boundaries(&samples).map_err(|e| e.to_string());
        if let Err(e) = &result {
            warn!("{turbine}: no gaussian boundaries: {e}");
        }
        per_turbine.push(TurbineGaussian {
            turbine: turbine.to_string(),
            result,
        });
        let h = build_histograms(&samples, cfg.bin_width)?;
        pooled = Some(match pooled {
            Some(p) => p.merge(&h)?,
            None => h,
        });
    }
    let histogram = pooled.ok_or_else(|| CliError::Data("no labelled epochs".into()))?;
    let pooled = ml_boundaries(&histogram, cfg.persistence)?;
    Ok(BoundaryResult {
        per_turbine,
        histogram,
        pooled,
        retained,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub turbine: String,
    pub epoch_start: i64,
    pub mean_wind_speed: f64,
    pub cluster: usize,
    pub model_state: usize,
}

impl Assignment {
    pub fn changed(&self) -> bool {
        self.cluster != self.model_state
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChangeRate {
    pub turbine: String,
    pub epochs: usize,
    pub rate: f64,
    pub filtered_epochs: usize,
    pub filtered_rate: Option<f64>,
}

pub fn assign_all(rows: &[LabelRow], boundaries: &StateBoundaries, reference: f64) -> Result<Vec<Assignment>, CliError> {
    rows.iter()
        .filter(|r| r.mean_wind_speed.is_finite())
        .map(|r| {
            let state = assign_state(r.mean_wind_speed / reference, boundaries)?;
            Ok(Assignment {
                turbine: r.turbine.clone(),
                epoch_start: r.epoch_start,
                mean_wind_speed: r.mean_wind_speed,
                cluster: r.cluster,
                model_state: state.cluster_label(),
            })
        })
        .collect()
}

type EpochKey = (String, i64);

fn label_maps(assignments: &[&Assignment]) -> (BTreeMap<EpochKey, usize>, BTreeMap<EpochKey, usize>) {
    let key = |a: &Assignment| (a.turbine.clone(), a.epoch_start);
    (
        assignments.iter().map(|a| (key(a), a.cluster)).collect(),
        assignments.iter().map(|a| (key(a), a.model_state)).collect(),
    )
}

/// Allocation-change rates over all epochs and over `retained` ones, per
/// turbine and pooled (turbine `*`).
pub fn change_rates(
    assignments: &[Assignment],
    retained: Option<&BTreeSet<EpochKey>>,
) -> Result<Vec<ChangeRate>, CliError> {
    let mut by_turbine: BTreeMap<&str, Vec<&Assignment>> = BTreeMap::new();
    for a in assignments {
        by_turbine.entry(a.turbine.as_str()).or_default().push(a);
    }
    let mut groups: Vec<(String, Vec<&Assignment>)> =
        by_turbine.into_iter().map(|(t, v)| (t.to_string(), v)).collect();
    groups.push(("*".to_string(), assignments.iter().collect()));
    groups
        .into_iter()
        .map(|(turbine, rows)| {
            let (cluster, model) = label_maps(&rows);
            let rate = allocation_change_rate(&cluster, &model, None)?;
            let subset: Option<BTreeSet<EpochKey>> =
                retained.map(|r| cluster.keys().filter(|k| r.contains(*k)).cloned().collect());
            let filtered_rate = match &subset {
                Some(s) if !s.is_empty() => Some(allocation_change_rate(&cluster, &model, Some(s))?),
                _ => None,
            };
            Ok(ChangeRate {
                turbine,
                epochs: rows.len(),
                rate,
                filtered_epochs: subset.map_or(0, |s| s.len()),
                filtered_rate,
            })
        })
        .collect()
}
