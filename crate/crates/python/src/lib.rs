//! Python bindings. Matrices cross the boundary as lists of rows, operational
//! states as their kebab-case names.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use turbine_states as core;
use turbine_states::{BoundaryMethod, EpochMatrix, SquareMatrix};

fn err(e: core::Error) -> PyErr {
    match e {
        core::Error::Io(_) | core::Error::Csv(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<SquareMatrix> {
    SquareMatrix::from_rows(&rows).map_err(err)
}

fn matrices(objects: Vec<Vec<Vec<f64>>>) -> PyResult<Vec<SquareMatrix>> {
    objects.into_iter().map(matrix).collect()
}

/// Pearson correlation matrix of `rows[channel][sample]`.
#[pyfunction]
#[pyo3(signature = (rows, degenerate_eps = core::correlation::DEFAULT_DEGENERATE_EPS))]
fn pearson_matrix(rows: Vec<Vec<f64>>, degenerate_eps: f64) -> PyResult<Vec<Vec<f64>>> {
    let n = rows.first().map_or(0, Vec::len);
    let channels: Vec<String> = (0..rows.len()).map(|i| format!("c{i}")).collect();
    let epoch = EpochMatrix {
        turbine_id: String::new(),
        epoch_start: 0,
        channels: Arc::from(channels),
        rows,
        timestamps: (0..n as i64).collect(),
        epoch_length: n,
        min_points: 1,
    };
    Ok(core::pearson_matrix(&epoch, degenerate_eps).map_err(err)?.entries.to_rows())
}

#[pyfunction]
fn matrix_distance(a: Vec<Vec<f64>>, b: Vec<Vec<f64>>) -> PyResult<f64> {
    core::matrix_distance(&matrix(a)?, &matrix(b)?).map_err(err)
}

/// Returns `(assignment, sse)` with assignment entries 0 or 1.
#[pyfunction]
#[pyo3(signature = (objects, seed = 0, restarts = 16, max_iterations = 1000))]
fn kmeans_two(
    objects: Vec<Vec<Vec<f64>>>,
    seed: u64,
    restarts: usize,
    max_iterations: usize,
) -> PyResult<(Vec<usize>, f64)> {
    let objects = matrices(objects)?;
    let refs: Vec<&SquareMatrix> = objects.iter().collect();
    let p = core::kmeans_two(&refs, seed, restarts, max_iterations).map_err(err)?;
    Ok((p.assignment, p.sse))
}

#[pyclass(frozen, module = "turbine_states")]
struct ClusterSolution {
    inner: core::ClusterSolution,
}

#[pymethods]
impl ClusterSolution {
    /// 1-based cluster label per object.
    #[getter]
    fn labels(&self) -> Vec<usize> {
        self.inner.labels.clone()
    }

    #[getter]
    fn centroids(&self) -> Vec<Vec<Vec<f64>>> {
        self.inner.centroids.iter().map(SquareMatrix::to_rows).collect()
    }

    #[getter]
    fn sizes(&self) -> Vec<usize> {
        self.inner.sizes.clone()
    }

    #[getter]
    fn internal_distances(&self) -> Vec<f64> {
        self.inner.internal_distances.clone()
    }

    /// `(parent, left, right)` node ids per split.
    #[getter]
    fn dendrogram(&self) -> Vec<(usize, usize, usize)> {
        self.inner
            .dendrogram
            .iter()
            .map(|s| (s.parent, s.children[0], s.children[1]))
            .collect()
    }

    #[getter]
    fn silhouettes(&self) -> Option<Vec<f64>> {
        self.inner.silhouettes.as_ref().map(|s| s.values.clone())
    }

    #[getter]
    fn mean_silhouette(&self) -> Option<f64> {
        self.inner.silhouettes.as_ref().map(|s| s.mean)
    }

    #[getter]
    fn n_clusters(&self) -> usize {
        self.inner.n_clusters()
    }

    fn __len__(&self) -> usize {
        self.inner.labels.len()
    }

    fn __repr__(&self) -> String {
        format!("ClusterSolution(n_clusters={}, sizes={:?})", self.inner.n_clusters(), self.inner.sizes)
    }
}

#[pyfunction]
#[pyo3(signature = (objects, n_clusters, seed = 0, restarts = 16, wind = None))]
fn bisecting_kmeans(
    objects: Vec<Vec<Vec<f64>>>,
    n_clusters: usize,
    seed: u64,
    restarts: usize,
    wind: Option<Vec<f64>>,
) -> PyResult<ClusterSolution> {
    let objects = matrices(objects)?;
    let params = core::ClusterParams {
        seed,
        restarts,
        ..core::ClusterParams::default()
    };
    let inner = core::bisecting_kmeans(&objects, n_clusters, &params, wind.as_deref()).map_err(err)?;
    Ok(ClusterSolution { inner })
}

/// Returns `(per-object silhouettes, mean)`.
#[pyfunction]
fn silhouette(labels: Vec<usize>, objects: Vec<Vec<Vec<f64>>>) -> PyResult<(Vec<f64>, f64)> {
    let s = core::silhouette(&labels, &matrices(objects)?).map_err(err)?;
    Ok((s.values, s.mean))
}

#[pyfunction]
fn gaussian_boundary(a: (f64, f64), b: (f64, f64)) -> PyResult<f64> {
    core::gaussian_boundary(a, b).map_err(err)
}

#[pyclass(frozen, module = "turbine_states")]
struct StateBoundaries {
    inner: core::StateBoundaries,
}

#[pymethods]
impl StateBoundaries {
    /// Boundaries in units of the reference nominal wind speed.
    #[new]
    #[pyo3(signature = (v1 = None, v2 = None, v_nom = None))]
    fn new(v1: Option<f64>, v2: Option<f64>, v_nom: Option<f64>) -> PyResult<Self> {
        let method = if v1.is_some() {
            BoundaryMethod::HistogramMaxLikelihood
        } else {
            BoundaryMethod::GaussianIntersection
        };
        let inner = core::StateBoundaries::new(method, v1, v2, v_nom).map_err(err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn method(&self) -> &'static str {
        match self.inner.method {
            BoundaryMethod::GaussianIntersection => "gaussian-intersection",
            BoundaryMethod::HistogramMaxLikelihood => "histogram-max-likelihood",
        }
    }

    #[getter]
    fn v1(&self) -> Option<f64> {
        self.inner.v1
    }

    #[getter]
    fn v2(&self) -> Option<f64> {
        self.inner.v2
    }

    #[getter]
    fn v_nom(&self) -> Option<f64> {
        self.inner.v_nom
    }

    /// Operational state name for a normalized wind speed.
    fn assign(&self, v: f64) -> PyResult<&'static str> {
        Ok(core::assign_state(v, &self.inner).map_err(err)?.as_str())
    }

    /// Canonical cluster label (1 proportional, 2 fixed rpm, 3 nominal power).
    fn assign_cluster(&self, v: f64) -> PyResult<usize> {
        Ok(core::assign_state(v, &self.inner).map_err(err)?.cluster_label())
    }

    fn __repr__(&self) -> String {
        format!(
            "StateBoundaries(method={:?}, v1={:?}, v2={:?}, v_nom={:?})",
            self.method(),
            self.inner.v1,
            self.inner.v2,
            self.inner.v_nom
        )
    }
}

type GaussianFits = BTreeMap<usize, (f64, f64)>;

fn samples(labels: &[usize], winds: &[f64]) -> PyResult<Vec<(usize, f64)>> {
    if labels.len() != winds.len() {
        return Err(PyValueError::new_err(format!(
            "{} labels but {} wind speeds",
            labels.len(),
            winds.len()
        )));
    }
    Ok(labels.iter().copied().zip(winds.iter().copied()).collect())
}

/// Pooled histogram maximum-likelihood boundaries from labelled epochs.
#[pyfunction]
#[pyo3(signature = (labels, winds, bin_width = core::states::DEFAULT_BIN_WIDTH, persistence = core::states::DEFAULT_PERSISTENCE))]
fn ml_boundaries(labels: Vec<usize>, winds: Vec<f64>, bin_width: f64, persistence: usize) -> PyResult<StateBoundaries> {
    let hist = core::build_histograms(&samples(&labels, &winds)?, bin_width).map_err(err)?;
    let inner = core::ml_boundaries(&hist, persistence).map_err(err)?;
    Ok(StateBoundaries { inner })
}

/// Per-turbine Gaussian-intersection boundaries; also returns the fitted
/// `(mean, std)` per cluster label.
#[pyfunction]
fn gaussian_state_boundaries(
    labels: Vec<usize>,
    winds: Vec<f64>,
) -> PyResult<(StateBoundaries, GaussianFits)> {
    let (fits, inner) = core::gaussian_state_boundaries(&samples(&labels, &winds)?).map_err(err)?;
    let fits = fits.into_iter().map(|(k, f)| (k, (f.mean, f.std))).collect();
    Ok((StateBoundaries { inner }, fits))
}

/// Share of epochs whose model label differs from the cluster label,
/// optionally restricted to the indices in `keep`.
#[pyfunction]
#[pyo3(signature = (cluster_labels, model_labels, keep = None))]
fn allocation_change_rate(
    cluster_labels: Vec<usize>,
    model_labels: Vec<usize>,
    keep: Option<Vec<usize>>,
) -> PyResult<f64> {
    if cluster_labels.len() != model_labels.len() {
        return Err(PyValueError::new_err("label sequences differ in length"));
    }
    let c: BTreeMap<usize, usize> = cluster_labels.into_iter().enumerate().collect();
    let m: BTreeMap<usize, usize> = model_labels.into_iter().enumerate().collect();
    let keep: Option<BTreeSet<usize>> = keep.map(|k| k.into_iter().collect());
    core::allocation_change_rate(&c, &m, keep.as_ref()).map_err(err)
}

/// Keep-mask of the silhouette quantile filter.
#[pyfunction]
#[pyo3(signature = (silhouettes, quantile = core::states::DEFAULT_QUANTILE))]
fn filter_by_silhouette_quartile(silhouettes: Vec<f64>, quantile: f64) -> PyResult<Vec<bool>> {
    core::filter_by_silhouette_quartile(&silhouettes, quantile).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (duration, grid_step = 10.0, weibull_shape = 2.0, weibull_scale = 9.0, persistence_time = None, seed = 0))]
fn generate_wind(
    duration: f64,
    grid_step: f64,
    weibull_shape: f64,
    weibull_scale: f64,
    persistence_time: Option<f64>,
    seed: u64,
) -> PyResult<Vec<f64>> {
    let defaults = core::WindModel::default();
    let model = core::WindModel {
        weibull_shape,
        weibull_scale,
        persistence_time: persistence_time.unwrap_or(defaults.persistence_time),
        ..defaults
    };
    core::generate_wind(duration, grid_step, &model, seed).map_err(err)
}

/// Simulate a labelled fleet. Returns one dict per turbine with `name`,
/// `start`, `grid_step`, `channels`, `values` (per channel, `None` while
/// switched off) and `regimes` (state name or `None`).
#[pyfunction]
#[pyo3(signature = (n_turbines = 5, days = 20.0, seed = 0, mismatch_fraction = 0.0, reference = 12.0))]
fn synthesize<'py>(
    py: Python<'py>,
    n_turbines: usize,
    days: f64,
    seed: u64,
    mismatch_fraction: f64,
    reference: f64,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let config = core::SynthConfig {
        n_turbines,
        days,
        seed,
        mismatch_fraction,
        spec: core::ControllerSpec::scaled(reference),
        ..core::SynthConfig::default()
    };
    let ds = py.detach(|| core::generate_dataset(&config)).map_err(err)?;
    ds.turbines
        .iter()
        .map(|t| {
            let d = PyDict::new(py);
            d.set_item("name", &t.grid.turbine_id)?;
            d.set_item("start", t.grid.start)?;
            d.set_item("grid_step", t.grid.grid_step)?;
            d.set_item("channels", t.grid.channels.to_vec())?;
            d.set_item("values", t.grid.values.clone())?;
            let regimes: Vec<Option<&str>> = t.regimes.iter().map(|r| r.map(|s| s.as_str())).collect();
            d.set_item("regimes", regimes)?;
            d.set_item("mismatched", t.mismatched.iter().copied().collect::<Vec<_>>())?;
            Ok(d)
        })
        .collect()
}

#[pymodule(name = "turbine_states")]
fn turbine_states_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<ClusterSolution>()?;
    m.add_class::<StateBoundaries>()?;
    m.add_function(wrap_pyfunction!(pearson_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(matrix_distance, m)?)?;
    m.add_function(wrap_pyfunction!(kmeans_two, m)?)?;
    m.add_function(wrap_pyfunction!(bisecting_kmeans, m)?)?;
    m.add_function(wrap_pyfunction!(silhouette, m)?)?;
    m.add_function(wrap_pyfunction!(gaussian_boundary, m)?)?;
    m.add_function(wrap_pyfunction!(ml_boundaries, m)?)?;
    m.add_function(wrap_pyfunction!(gaussian_state_boundaries, m)?)?;
    m.add_function(wrap_pyfunction!(allocation_change_rate, m)?)?;
    m.add_function(wrap_pyfunction!(filter_by_silhouette_quartile, m)?)?;
    m.add_function(wrap_pyfunction!(generate_wind, m)?)?;
    m.add_function(wrap_pyfunction!(synthesize, m)?)?;
    m.add("STANDARD_SIGNALS", core::STANDARD_SIGNALS.to_vec())?;
    Ok(())
}
