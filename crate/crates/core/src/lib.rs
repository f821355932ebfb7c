//! Operational-state detection for multivariate turbine sensor streams.
//!
//! The pipeline resamples raw SCADA channels onto a fixed grid, cuts the grid
//! into disjoint epochs, computes one Pearson correlation matrix per epoch,
//! clusters the matrices with bisecting k-means and finally learns the wind
//! speeds that separate the recovered states. A controller-driven synthetic
//! generator provides labelled data for every stage.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod clustering;
pub mod correlation;
pub mod error;
pub mod ingest;
pub mod matrix;
pub mod states;
pub mod stats;
pub mod synthetic;

pub use clustering::{
    bisecting_kmeans, kmeans_two, matrix_distance, silhouette, silhouette_table, ClusterParams,
    ClusterSolution, Silhouettes, SilhouetteRow, Split, TwoPartition,
};
pub use correlation::{normalize_epoch, pearson_matrix, CorrelationMatrix, NormalizedEpoch};
pub use error::{Error, Result};
pub use ingest::{
    epoch_summary, resample_to_grid, segment_epochs, EpochMatrix, EpochSummary, RawSample,
    SignalGrid,
};
pub use matrix::SquareMatrix;
pub use states::{
    allocation_change_rate, assign_state, build_histograms, filter_by_silhouette_quartile,
    fit_gaussians, gaussian_boundary, gaussian_state_boundaries, ml_boundaries, BoundaryMethod, GaussianFit,
    OperationalState, StateBoundaries, WindSpeedHistogram,
};
pub use synthetic::{
    generate_dataset, generate_wind, inject_mismatch, simulate_turbine, ControllerSpec,
    LabelledDataset, NoiseLevels, SimulatedTurbine, SynthConfig, WindModel,
};

/// Channel names in the order of the standard turbine CSV header.
pub const STANDARD_SIGNALS: [&str; 5] = [
    "ActivePower",
    "CurrentL1",
    "RotorRPM",
    "GeneratorRPM",
    "WindSpeed",
];
