//! Flat `key=value` run configuration.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use turbine_states::synthetic::{SynthConfig, WindModel};
use turbine_states::{ControllerSpec, STANDARD_SIGNALS};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub out: PathBuf,
    /// Directory of turbine CSVs; defaults to `<out>/data`.
    pub input: Option<PathBuf>,
    pub seed: u64,
    pub grid_seconds: i64,
    pub epoch_seconds: i64,
    pub min_points: usize,
    pub signals: Vec<String>,
    pub wind_signal: String,
    pub degenerate_eps: f64,
    pub clusters: usize,
    pub n_range: (usize, usize),
    pub restarts: usize,
    pub quantile: f64,
    pub bin_width: f64,
    pub pdf_bin_width: f64,
    pub persistence: usize,
    pub v_nom_reference: Option<f64>,
    pub turbines: Vec<String>,
    pub boundaries: Option<PathBuf>,
    pub change_bin_width: f64,
    pub jobs: usize,
    // synthetic data
    pub n_turbines: usize,
    pub days: f64,
    pub mismatch_fraction: f64,
    pub weibull_shape: f64,
    pub weibull_scale: f64,
    pub persistence_time: f64,
    pub gust_fraction: f64,
    pub gust_time: f64,
    pub response_time: f64,
    pub regime_filter_time: f64,
    pub rpm_jitter: f64,
    pub power_noise: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let wind = WindModel::default();
        let spec = ControllerSpec::scaled(SYNTH_REFERENCE);
        let noise = spec.noise;
        Self {
            out: PathBuf::from("out"),
            input: None,
            seed: 0,
            grid_seconds: 10,
            epoch_seconds: 1800,
            min_points: 90,
            signals: STANDARD_SIGNALS.iter().map(|s| s.to_string()).collect(),
            wind_signal: "WindSpeed".into(),
            degenerate_eps: 1e-12,
            clusters: 3,
            n_range: (2, 5),
            restarts: 16,
            quantile: 0.25,
            bin_width: 0.02,
            pdf_bin_width: 0.05,
            persistence: 2,
            v_nom_reference: None,
            turbines: Vec::new(),
            boundaries: None,
            change_bin_width: 0.01,
            jobs: 0,
            n_turbines: 5,
            days: 20.0,
            mismatch_fraction: 0.0,
            weibull_shape: wind.weibull_shape,
            weibull_scale: wind.weibull_scale,
            persistence_time: wind.persistence_time,
            gust_fraction: wind.gust_fraction,
            gust_time: wind.gust_time,
            response_time: spec.response_time,
            regime_filter_time: spec.regime_filter_time,
            rpm_jitter: noise.rpm_jitter,
            power_noise: noise.power,
        }
    }
}

/// Reference nominal wind speed assumed by `synth` when none is configured.
pub const SYNTH_REFERENCE: f64 = 12.0;

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value
        .trim()
        .parse()
        .map_err(|_| CliError::Usage(format!("invalid value `{value}` for `{key}`")))
}

fn list(value: &str) -> Vec<String> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(String::from)
        .collect()
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let v = value.trim();
        match key.trim() {
            "out" => self.out = PathBuf::from(v),
            "input" => self.input = Some(PathBuf::from(v)),
            "seed" => self.seed = parse(key, v)?,
            "grid_seconds" => self.grid_seconds = parse(key, v)?,
            "epoch_seconds" => self.epoch_seconds = parse(key, v)?,
            "min_points" => self.min_points = parse(key, v)?,
            "signals" => self.signals = list(v),
            "wind_signal" => self.wind_signal = v.to_string(),
            "degenerate_eps" => self.degenerate_eps = parse(key, v)?,
            "clusters" | "N" => self.clusters = parse(key, v)?,
            "n_range" => {
                let (a, b) = v
                    .split_once('-')
                    .ok_or_else(|| CliError::Usage(format!("`n_range` expects `lo-hi`, got `{v}`")))?;
                self.n_range = (parse(key, a)?, parse(key, b)?);
            }
            "restarts" => self.restarts = parse(key, v)?,
            "quantile" => self.quantile = parse(key, v)?,
            "bin_width" => self.bin_width = parse(key, v)?,
            "pdf_bin_width" => self.pdf_bin_width = parse(key, v)?,
            "persistence" => self.persistence = parse(key, v)?,
            "v_nom_reference" => self.v_nom_reference = Some(parse(key, v)?),
            "turbines" => self.turbines = list(v),
            "boundaries" => self.boundaries = Some(PathBuf::from(v)),
            "change_bin_width" => self.change_bin_width = parse(key, v)?,
            "jobs" => self.jobs = parse(key, v)?,
            "n_turbines" => self.n_turbines = parse(key, v)?,
            "days" => self.days = parse(key, v)?,
            "mismatch_fraction" => self.mismatch_fraction = parse(key, v)?,
            "weibull_shape" => self.weibull_shape = parse(key, v)?,
            "weibull_scale" => self.weibull_scale = parse(key, v)?,
            "persistence_time" => self.persistence_time = parse(key, v)?,
            "gust_fraction" => self.gust_fraction = parse(key, v)?,
            "gust_time" => self.gust_time = parse(key, v)?,
            "response_time" => self.response_time = parse(key, v)?,
            "regime_filter_time" => self.regime_filter_time = parse(key, v)?,
            "rpm_jitter" => self.rpm_jitter = parse(key, v)?,
            "power_noise" => self.power_noise = parse(key, v)?,
            other => return Err(CliError::Usage(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    /// Apply a config file: one `key=value` per line, `#` starts a comment.
    pub fn apply_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                CliError::Usage(format!("{}:{}: expected key=value", path.display(), n + 1))
            })?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn input_dir(&self) -> PathBuf {
        self.input.clone().unwrap_or_else(|| self.out.join("data"))
    }

    pub fn epoch_length(&self) -> Result<usize, CliError> {
        if self.grid_seconds <= 0 || self.epoch_seconds % self.grid_seconds != 0 {
            return Err(CliError::Usage(format!(
                "epoch_seconds ({}) must be a positive multiple of grid_seconds ({})",
                self.epoch_seconds, self.grid_seconds
            )));
        }
        let len = (self.epoch_seconds / self.grid_seconds) as usize;
        if len < 2 {
            return Err(CliError::Usage("an epoch must span at least two grid cells".into()));
        }
        Ok(len)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let len = self.epoch_length()?;
        let bad = |m: String| Err(CliError::Usage(m));
        if self.min_points == 0 || self.min_points > len {
            return bad(format!("min_points must lie in 1..={len}"));
        }
        if self.signals.is_empty() || !self.signals.contains(&self.wind_signal) {
            return bad(format!("signals must include the wind signal `{}`", self.wind_signal));
        }
        if self.clusters == 0 || self.restarts == 0 {
            return bad("clusters and restarts must be positive".into());
        }
        if self.n_range.0 < 2 || self.n_range.0 > self.n_range.1 {
            return bad(format!("n_range {}-{} must satisfy 2 <= lo <= hi", self.n_range.0, self.n_range.1));
        }
        if !(0.0..=1.0).contains(&self.quantile) {
            return bad(format!("quantile {} outside [0, 1]", self.quantile));
        }
        for (k, v) in [
            ("bin_width", self.bin_width),
            ("pdf_bin_width", self.pdf_bin_width),
            ("change_bin_width", self.change_bin_width),
        ] {
            if !(v > 0.0) {
                return bad(format!("{k} must be positive"));
            }
        }
        if let Some(v) = self.v_nom_reference {
            if !(v > 0.0) {
                return bad("v_nom_reference must be positive".into());
            }
        }
        Ok(())
    }

    pub fn v_nom_reference(&self) -> Result<f64, CliError> {
        self.v_nom_reference.ok_or_else(|| {
            CliError::Usage("`v_nom_reference` (manufacturer nominal wind speed) is required".into())
        })
    }

    pub fn synth_config(&self) -> Result<SynthConfig, CliError> {
        if !(0.0..0.2).contains(&self.mismatch_fraction) {
            return Err(CliError::Usage(format!(
                "mismatch_fraction {} outside [0, 0.2)",
                self.mismatch_fraction
            )));
        }
        let reference = self.v_nom_reference.unwrap_or(SYNTH_REFERENCE);
        let mut spec = ControllerSpec::scaled(reference);
        spec.response_time = self.response_time;
        spec.regime_filter_time = self.regime_filter_time;
        spec.noise.rpm_jitter = self.rpm_jitter;
        spec.noise.power = self.power_noise;
        Ok(SynthConfig {
            n_turbines: self.n_turbines,
            days: self.days,
            grid_step: self.grid_seconds,
            epoch_length: self.epoch_length()?,
            min_points: self.min_points,
            wind: WindModel {
                weibull_shape: self.weibull_shape,
                weibull_scale: self.weibull_scale,
                persistence_time: self.persistence_time,
                gust_fraction: self.gust_fraction,
                gust_time: self.gust_time,
            },
            spec,
            mismatch_fraction: self.mismatch_fraction,
            seed: self.seed,
            ..SynthConfig::default()
        })
    }

    /// Settings as sorted `key=value` lines, as recorded next to artifacts.
    pub fn to_pairs(&self) -> BTreeMap<&'static str, String> {
        let mut m = BTreeMap::new();
        m.insert("seed", self.seed.to_string());
        m.insert("grid_seconds", self.grid_seconds.to_string());
        m.insert("epoch_seconds", self.epoch_seconds.to_string());
        m.insert("min_points", self.min_points.to_string());
        m.insert("signals", self.signals.join(","));
        m.insert("clusters", self.clusters.to_string());
        m.insert("n_range", format!("{}-{}", self.n_range.0, self.n_range.1));
        m.insert("restarts", self.restarts.to_string());
        m.insert("quantile", self.quantile.to_string());
        m.insert("bin_width", self.bin_width.to_string());
        m.insert("persistence", self.persistence.to_string());
        if let Some(v) = self.v_nom_reference {
            m.insert("v_nom_reference", v.to_string());
        }
        m
    }
}
