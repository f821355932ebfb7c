//! Controller-driven synthetic SCADA data with ground-truth regime labels.
//!
//! A wind trace with a Weibull marginal drives a simple variable-speed,
//! variable-pitch controller: minimum rotor speed just above cut-in, rotor
//! speed tracking the wind in the partial-load range, nominal speed above
//! that and finally capped power. Rotor speed follows its target through a
//! first-order lag, so epochs near a regime switch mix structures the way
//! field data does.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ingest::SignalGrid;
use crate::states::OperationalState;
use crate::STANDARD_SIGNALS;

const POWER: usize = 0;
const CURRENT: usize = 1;
const ROTOR: usize = 2;
const GENERATOR: usize = 3;
const WIND: usize = 4;

/// Stationary wind process: a slow component with correlation time
/// `persistence_time` plus a small gust component, mapped onto the Weibull
/// marginal by ranks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindModel {
    pub weibull_shape: f64,
    /// m/s
    pub weibull_scale: f64,
    /// Seconds.
    pub persistence_time: f64,
    /// Share of the latent variance carried by gusts, in [0, 1).
    pub gust_fraction: f64,
    /// Seconds.
    pub gust_time: f64,
}

impl Default for WindModel {
    fn default() -> Self {
        Self {
            weibull_shape: 2.0,
            weibull_scale: 9.0,
            persistence_time: 48.0 * 3600.0,
            gust_fraction: 0.03,
            gust_time: 20.0,
        }
    }
}

impl WindModel {
    pub fn weibull_cdf(&self, v: f64) -> f64 {
        if v <= 0.0 {
            0.0
        } else {
            1.0 - (-(v / self.weibull_scale).powf(self.weibull_shape)).exp()
        }
    }

    fn weibull_quantile(&self, u: f64) -> f64 {
        self.weibull_scale * (-(1.0 - u).ln()).powf(1.0 / self.weibull_shape)
    }
}

fn ar1_step(prev: f64, phi: f64, rng: &mut impl Rng) -> f64 {
    let e: f64 = rng.sample(StandardNormal);
    phi * prev + (1.0 - phi * phi).sqrt() * e
}

/// Wind trace of `duration / grid_step` samples, deterministic per seed.
pub fn generate_wind(duration: f64, grid_step: f64, model: &WindModel, seed: u64) -> Result<Vec<f64>> {
    let positive = [
        duration,
        grid_step,
        model.weibull_shape,
        model.weibull_scale,
        model.persistence_time,
        model.gust_time,
    ];
    if positive.iter().any(|&p| !(p > 0.0) || !p.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "wind parameters must be positive: duration {duration}, step {grid_step}, {model:?}"
        )));
    }
    if !(0.0..1.0).contains(&model.gust_fraction) {
        return Err(Error::InvalidParameter(format!(
            "gust fraction {} outside [0, 1)",
            model.gust_fraction
        )));
    }
    let n = (duration / grid_step).floor() as usize;
    if n == 0 {
        return Err(Error::InvalidParameter("duration shorter than one grid step".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phi_slow = (-grid_step / model.persistence_time).exp();
    let phi_gust = (-grid_step / model.gust_time).exp();
    let (w_slow, w_gust) = ((1.0 - model.gust_fraction).sqrt(), model.gust_fraction.sqrt());
    let mut slow: f64 = rng.sample(StandardNormal);
    let mut gust: f64 = rng.sample(StandardNormal);
    let mut latent = Vec::with_capacity(n);
    for _ in 0..n {
        latent.push(w_slow * slow + w_gust * gust);
        slow = ar1_step(slow, phi_slow, &mut rng);
        gust = ar1_step(gust, phi_gust, &mut rng);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| latent[a].total_cmp(&latent[b]).then(a.cmp(&b)));
    let mut wind = vec![0.0; n];
    for (rank, &i) in order.iter().enumerate() {
        wind[i] = model.weibull_quantile((rank as f64 + 0.5) / n as f64);
    }
    Ok(wind)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseLevels {
    /// kW
    pub power: f64,
    /// A
    pub current: f64,
    /// rpm, rotor sensor
    pub rotor_rpm: f64,
    /// rpm, generator sensor
    pub generator_rpm: f64,
    /// m/s, anemometer
    pub wind: f64,
    /// rpm, physical rotor-speed fluctuation around the controller target
    pub rpm_jitter: f64,
}

/// Controller parameters. Wind speeds in m/s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerSpec {
    pub v_on: f64,
    pub v1: f64,
    pub v2: f64,
    pub v_nom: f64,
    pub gear_ratio: f64,
    pub min_rpm: f64,
    pub nominal_rpm: f64,
    /// kW
    pub nominal_power: f64,
    /// A per kW
    pub current_per_power: f64,
    /// Seconds.
    pub response_time: f64,
    /// Time constant (s) of the wind filter that drives regime switching;
    /// 0 switches on the instantaneous wind.
    pub regime_filter_time: f64,
    pub noise: NoiseLevels,
}

impl ControllerSpec {
    /// Defaults scaled to a reference nominal wind speed (m/s): boundaries at
    /// 0.25 / 0.40 / 0.78 / 1.12 of it.
    pub fn scaled(reference: f64) -> Self {
        Self {
            v_on: 0.25 * reference,
            v1: 0.40 * reference,
            v2: 0.78 * reference,
            v_nom: 1.12 * reference,
            gear_ratio: 97.0,
            min_rpm: 6.0,
            nominal_rpm: 6.0 * 0.78 / 0.40,
            nominal_power: 3600.0,
            current_per_power: 0.9,
            response_time: 10.0,
            regime_filter_time: 600.0,
            noise: NoiseLevels {
                power: 5.0,
                current: 5.0,
                rotor_rpm: 0.02,
                generator_rpm: 2.0,
                wind: 0.15,
                rpm_jitter: 0.3,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = &self.noise;
        let ok = 0.0 < self.v_on
            && self.v_on < self.v1
            && self.v1 < self.v2
            && self.v2 < self.v_nom
            && 0.0 < self.min_rpm
            && self.min_rpm < self.nominal_rpm
            && self.gear_ratio > 0.0
            && self.nominal_power > 0.0
            && self.current_per_power > 0.0
            && self.response_time >= 0.0
            && self.regime_filter_time >= 0.0
            && [n.power, n.current, n.rotor_rpm, n.generator_rpm, n.wind, n.rpm_jitter]
                .iter()
                .all(|&x| x >= 0.0);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("inconsistent controller spec: {self:?}")))
        }
    }

    /// Regime for a (filtered) wind speed; `None` below cut-in.
    pub fn regime(&self, wind: f64) -> Option<OperationalState> {
        if wind < self.v_on {
            None
        } else if wind < self.v1 {
            Some(OperationalState::FixedMinRpm)
        } else if wind < self.v2 {
            Some(OperationalState::Proportional)
        } else if wind < self.v_nom {
            Some(OperationalState::FixedNominalRpm)
        } else {
            Some(OperationalState::NominalPower)
        }
    }

    fn target_rpm(&self, regime: OperationalState, wind: f64) -> f64 {
        match regime {
            OperationalState::FixedMinRpm => self.min_rpm,
            OperationalState::Proportional => {
                let w = wind.clamp(self.v1, self.v2);
                self.min_rpm + (self.nominal_rpm - self.min_rpm) * (w - self.v1) / (self.v2 - self.v1)
            }
            OperationalState::FixedNominalRpm | OperationalState::NominalPower => self.nominal_rpm,
        }
    }

    fn power(&self, regime: OperationalState, wind: f64) -> f64 {
        match regime {
            OperationalState::NominalPower => self.nominal_power,
            _ => self.nominal_power * (wind.min(self.v_nom) / self.v_nom).powi(3),
        }
    }
}

/// Rotor state carried between time steps.
struct Controller<'a> {
    spec: &'a ControllerSpec,
    alpha: f64,
    jitter_phi: f64,
    rotor: f64,
    jitter: f64,
}

impl<'a> Controller<'a> {
    fn new(spec: &'a ControllerSpec, grid_step: f64) -> Self {
        let alpha = if spec.response_time > 0.0 {
            1.0 - (-grid_step / spec.response_time).exp()
        } else {
            1.0
        };
        let jitter_phi = if spec.response_time > 0.0 {
            (-grid_step / spec.response_time).exp()
        } else {
            0.0
        };
        Self {
            spec,
            alpha,
            jitter_phi,
            rotor: spec.min_rpm,
            jitter: 0.0,
        }
    }

    /// Channel values in `STANDARD_SIGNALS` order, or `None` when off.
    fn step(&mut self, wind: f64, regime: Option<OperationalState>, rng: &mut ChaCha8Rng) -> Option<[f64; 5]> {
        let spec = self.spec;
        let mut z = [0.0f64; 6];
        for v in &mut z {
            *v = rng.sample(StandardNormal);
        }
        let Some(regime) = regime else {
            self.rotor = spec.min_rpm;
            self.jitter = 0.0;
            return None;
        };
        self.rotor += self.alpha * (spec.target_rpm(regime, wind) - self.rotor);
        self.jitter = self.jitter_phi * self.jitter + (1.0 - self.jitter_phi * self.jitter_phi).sqrt() * z[5];
        let n = &spec.noise;
        let rotor_true = self.rotor + n.rpm_jitter * self.jitter;
        let power = spec.power(regime, wind) + n.power * z[0];
        let mut out = [0.0; 5];
        out[POWER] = power;
        out[CURRENT] = spec.current_per_power * power + n.current * z[1];
        out[ROTOR] = rotor_true + n.rotor_rpm * z[2];
        out[GENERATOR] = spec.gear_ratio * rotor_true + n.generator_rpm * z[3];
        out[WIND] = wind + n.wind * z[4];
        Some(out)
    }
}

/// One simulated turbine: its sensor grid and the true regime per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedTurbine {
    pub grid: SignalGrid,
    /// Wind seen by the controller, m/s.
    pub wind: Vec<f64>,
    /// `None` while switched off.
    pub regimes: Vec<Option<OperationalState>>,
    /// Start timestamps of epochs carrying injected mismatches.
    pub mismatched: BTreeSet<i64>,
}

impl SimulatedTurbine {
    /// Most frequent regime among the switched-on cells of each epoch (ties go
    /// to the lower-wind regime).
    pub fn epoch_majority(&self, epoch_length: usize) -> Vec<(i64, Option<OperationalState>)> {
        self.regimes
            .chunks(epoch_length)
            .enumerate()
            .map(|(e, cells)| {
                let mut counts = [0usize; 4];
                for r in cells.iter().flatten() {
                    counts[*r as usize] += 1;
                }
                let best = (0..4).filter(|&i| counts[i] > 0).fold(None::<usize>, |b, i| match b {
                    Some(j) if counts[j] >= counts[i] => Some(j),
                    _ => Some(i),
                });
                (
                    self.grid.timestamp(e * epoch_length),
                    best.map(|i| OperationalState::ALL[i]),
                )
            })
            .collect()
    }

    /// Cells that are complete in the grid, grouped per epoch.
    fn valid_epochs(&self, epoch_length: usize, min_points: usize) -> Vec<usize> {
        (0..self.grid.len().div_ceil(epoch_length))
            .filter(|&e| {
                let lo = e * epoch_length;
                let hi = (lo + epoch_length).min(self.grid.len());
                (lo..hi).filter(|&c| self.grid.is_complete(c)).count() >= min_points
            })
            .collect()
    }
}

pub fn simulate_turbine(
    turbine_id: &str,
    wind: &[f64],
    start: i64,
    grid_step: i64,
    spec: &ControllerSpec,
    seed: u64,
) -> Result<SimulatedTurbine> {
    spec.validate()?;
    if grid_step <= 0 {
        return Err(Error::InvalidParameter(format!("grid step must be positive, got {grid_step}")));
    }
    if wind.is_empty() {
        return Err(Error::EmptyInput("empty wind trace".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut controller = Controller::new(spec, grid_step as f64);
    let mut values = vec![Vec::with_capacity(wind.len()); STANDARD_SIGNALS.len()];
    let mut regimes = Vec::with_capacity(wind.len());
    let beta = if spec.regime_filter_time > 0.0 {
        1.0 - (-(grid_step as f64) / spec.regime_filter_time).exp()
    } else {
        1.0
    };
    let mut filtered = wind[0];
    for &w in wind {
        filtered += beta * (w - filtered);
        let regime = spec.regime(filtered);
        regimes.push(regime);
        let out = controller.step(w, regime, &mut rng);
        for (c, series) in values.iter_mut().enumerate() {
            series.push(out.map(|o| o[c]));
        }
    }
    let channels: Vec<String> = STANDARD_SIGNALS.iter().map(|s| s.to_string()).collect();
    let units = ["kW", "A", "rpm", "rpm", "m/s"].iter().map(|s| s.to_string()).collect();
    Ok(SimulatedTurbine {
        grid: SignalGrid {
            turbine_id: turbine_id.to_string(),
            grid_step,
            start,
            channels: Arc::from(channels),
            units,
            values,
        },
        wind: wind.to_vec(),
        regimes,
        mismatched: BTreeSet::new(),
    })
}

/// A fleet of simulated turbines sharing one controller spec.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelledDataset {
    pub spec: ControllerSpec,
    pub epoch_length: usize,
    pub min_points: usize,
    pub turbines: Vec<SimulatedTurbine>,
}

/// Regime forced onto an injected epoch whose true majority is `truth`.
fn wrong_regime(truth: OperationalState) -> OperationalState {
    match truth {
        OperationalState::Proportional => OperationalState::NominalPower,
        _ => OperationalState::Proportional,
    }
}

/// Regenerate the signals of a `fraction` of each turbine's valid epochs with
/// the controller stuck in a wrong regime for a contiguous half of the epoch.
/// The wind channel is kept; regime labels of the affected cells record the
/// forced regime and the epochs are listed in `mismatched`.
pub fn inject_mismatch(dataset: &LabelledDataset, fraction: f64, seed: u64) -> Result<LabelledDataset> {
    if !(0.0..0.2).contains(&fraction) {
        return Err(Error::InvalidParameter(format!(
            "mismatch fraction {fraction} outside [0, 0.2)"
        )));
    }
    let mut out = dataset.clone();
    if fraction == 0.0 {
        return Ok(out);
    }
    let spec = dataset.spec;
    let (len, min_points) = (dataset.epoch_length, dataset.min_points);
    for (t, turbine) in out.turbines.iter_mut().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, t as u64));
        let valid = turbine.valid_epochs(len, min_points);
        let count = (fraction * valid.len() as f64).round() as usize;
        let majority = turbine.epoch_majority(len);
        let mut chosen: Vec<usize> = index::sample(&mut rng, valid.len(), count)
            .iter()
            .map(|i| valid[i])
            .collect();
        chosen.sort_unstable();
        for e in chosen {
            let lo = e * len;
            let hi = (lo + len).min(turbine.grid.len());
            let Some(truth) = majority[e].1 else { continue };
            let forced = wrong_regime(truth);
            let span = (hi - lo) / 2;
            let first = lo + rng.random_range(0..=(hi - lo - span));
            let mut controller = Controller::new(&spec, turbine.grid.grid_step as f64);
            controller.rotor = spec.target_rpm(forced, turbine.wind[first]);
            for cell in first..first + span {
                if turbine.regimes[cell].is_none() {
                    continue;
                }
                let w = turbine.wind[cell];
                let Some(values) = controller.step(w, Some(forced), &mut rng) else { continue };
                for (c, v) in values.iter().enumerate() {
                    if c != WIND {
                        turbine.grid.values[c][cell] = Some(*v);
                    }
                }
                turbine.regimes[cell] = Some(forced);
            }
            turbine.mismatched.insert(turbine.grid.timestamp(lo));
        }
    }
    Ok(out)
}

fn mix_seed(seed: u64, stream: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Everything needed to synthesize a fleet.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_turbines: usize,
    pub days: f64,
    /// Unix seconds of the first cell.
    pub start: i64,
    pub grid_step: i64,
    pub epoch_length: usize,
    pub min_points: usize,
    pub wind: WindModel,
    pub spec: ControllerSpec,
    pub mismatch_fraction: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_turbines: 5,
            days: 20.0,
            // 2017-03-05T00:00:00Z
            start: 1_488_672_000,
            grid_step: 10,
            epoch_length: 180,
            min_points: 90,
            wind: WindModel::default(),
            spec: ControllerSpec::scaled(12.0),
            mismatch_fraction: 0.0,
            seed: 0,
        }
    }
}

pub fn turbine_name(index: usize) -> String {
    format!("WT{:02}", index + 1)
}

/// Generate the fleet; turbine `i` uses seed streams derived from `(seed, i)`.
pub fn generate_dataset(config: &SynthConfig) -> Result<LabelledDataset> {
    config.spec.validate()?;
    if config.n_turbines == 0 {
        return Err(Error::InvalidParameter("at least one turbine required".into()));
    }
    let duration = config.days * 86_400.0;
    let turbines = (0..config.n_turbines)
        .into_par_iter()
        .map(|i| {
            let wind = generate_wind(
                duration,
                config.grid_step as f64,
                &config.wind,
                mix_seed(config.seed, 2 * i as u64),
            )?;
            simulate_turbine(
                &turbine_name(i),
                &wind,
                config.start,
                config.grid_step,
                &config.spec,
                mix_seed(config.seed, 2 * i as u64 + 1),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let dataset = LabelledDataset {
        spec: config.spec,
        epoch_length: config.epoch_length,
        min_points: config.min_points,
        turbines,
    };
    inject_mismatch(&dataset, config.mismatch_fraction, mix_seed(config.seed, u64::MAX))
}

/// Write a turbine in the ingest CSV format: integer epoch seconds, four
/// decimals, empty fields for missing values.
pub fn write_turbine_csv(turbine: &SimulatedTurbine, path: &Path) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    let grid = &turbine.grid;
    writeln!(w, "timestamp,{}", grid.channels.join(","))?;
    let mut line = String::new();
    for cell in 0..grid.len() {
        use std::fmt::Write as _;
        line.clear();
        let _ = write!(line, "{}", grid.timestamp(cell));
        for series in &grid.values {
            line.push(',');
            if let Some(v) = series[cell] {
                let _ = write!(line, "{v:.4}");
            }
        }
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

/// Sidecar `timestamp,regime`; switched-off cells are labelled `off`.
pub fn write_labels_csv(turbine: &SimulatedTurbine, path: &Path) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "timestamp,regime")?;
    for (cell, r) in turbine.regimes.iter().enumerate() {
        writeln!(
            w,
            "{},{}",
            turbine.grid.timestamp(cell),
            r.map_or("off", OperationalState::as_str)
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Read a labels sidecar back into `(timestamp, regime)` pairs.
pub fn read_labels_csv(path: &Path) -> Result<Vec<(i64, Option<OperationalState>)>> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let bad = |m: String| Error::Format {
            path: path.to_path_buf(),
            message: m,
        };
        let ts: i64 = rec[0].parse().map_err(|_| bad(format!("bad timestamp `{}`", &rec[0])))?;
        let regime = match &rec[1] {
            "off" => None,
            s => Some(s.parse::<OperationalState>().map_err(|e| bad(e.to_string()))?),
        };
        out.push((ts, regime));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quiet_spec() -> ControllerSpec {
        let mut s = ControllerSpec::scaled(12.0);
        s.regime_filter_time = 0.0;
        s.noise = NoiseLevels {
            power: 0.0,
            current: 0.0,
            rotor_rpm: 0.0,
            generator_rpm: 0.0,
            wind: 0.0,
            rpm_jitter: 0.0,
        };
        s
    }

    #[test]
    fn wind_is_deterministic_per_seed() {
        let m = WindModel::default();
        let a = generate_wind(86_400.0, 10.0, &m, 7).unwrap();
        let b = generate_wind(86_400.0, 10.0, &m, 7).unwrap();
        let c = generate_wind(86_400.0, 10.0, &m, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.len(), 8640);
        assert!(a.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn wind_rejects_bad_parameters() {
        let mut m = WindModel::default();
        assert!(generate_wind(0.0, 10.0, &m, 0).is_err());
        m.weibull_shape = -1.0;
        assert!(generate_wind(100.0, 10.0, &m, 0).is_err());
    }

    #[test]
    fn proportional_rpm_settles_within_five_response_times() {
        let spec = quiet_spec();
        let w = 0.6 * 12.0;
        let t = simulate_turbine("wt", &[w; 20], 0, 10, &spec, 1).unwrap();
        let target = spec.target_rpm(OperationalState::Proportional, w);
        let steps = (5.0 * spec.response_time / 10.0).ceil() as usize;
        let rotor = t.grid.values[ROTOR][steps - 1].unwrap();
        assert!((rotor - target).abs() <= 0.01 * (target - spec.min_rpm), "{rotor} vs {target}");
        assert!(t.regimes.iter().all(|r| *r == Some(OperationalState::Proportional)));
    }

    #[test]
    fn high_wind_reaches_nominal_power() {
        let spec = quiet_spec();
        let t = simulate_turbine("wt", &[1.3 * 12.0; 10], 0, 10, &spec, 1).unwrap();
        assert!(t.grid.values[POWER].iter().all(|p| *p == Some(spec.nominal_power)));
        assert_eq!(t.regimes[9], Some(OperationalState::NominalPower));
    }

    #[test]
    fn below_cut_in_everything_is_missing() {
        let spec = quiet_spec();
        let t = simulate_turbine("wt", &[1.0, 8.0], 0, 10, &spec, 1).unwrap();
        assert!(t.grid.values.iter().all(|s| s[0].is_none() && s[1].is_some()));
        assert_eq!(t.regimes[0], None);
    }

    #[test]
    fn short_gust_does_not_switch_regime() {
        let mut spec = quiet_spec();
        spec.regime_filter_time = 600.0;
        let mut wind = vec![0.6 * 12.0; 60];
        for w in &mut wind[30..33] {
            *w = 0.9 * 12.0;
        }
        let t = simulate_turbine("wt", &wind, 0, 10, &spec, 1).unwrap();
        assert!(t.regimes.iter().all(|r| *r == Some(OperationalState::Proportional)));
        // rotor speed still follows the gust, clamped at the nominal speed
        let peak = t.grid.values[ROTOR][32].unwrap();
        assert!(peak > spec.target_rpm(OperationalState::Proportional, 0.6 * 12.0) + 1.0);
        assert!(peak <= spec.nominal_rpm + 1e-9);
    }

    #[test]
    fn regime_labels_ignore_noise_seed() {
        let wind = generate_wind(86_400.0, 10.0, &WindModel::default(), 3).unwrap();
        let spec = ControllerSpec::scaled(12.0);
        let a = simulate_turbine("wt", &wind, 0, 10, &spec, 1).unwrap();
        let b = simulate_turbine("wt", &wind, 0, 10, &spec, 2).unwrap();
        assert_eq!(a.regimes, b.regimes);
        assert_ne!(a.grid.values, b.grid.values);
    }

    #[test]
    fn invalid_spec_is_rejected() {
        let mut spec = ControllerSpec::scaled(12.0);
        spec.v1 = spec.v2 + 1.0;
        assert!(simulate_turbine("wt", &[5.0], 0, 10, &spec, 0).is_err());
    }

    #[test]
    fn mismatch_fraction_bounds_and_identity() {
        let cfg = SynthConfig {
            n_turbines: 1,
            days: 2.0,
            ..SynthConfig::default()
        };
        let ds = generate_dataset(&cfg).unwrap();
        assert_eq!(inject_mismatch(&ds, 0.0, 1).unwrap(), ds);
        assert!(inject_mismatch(&ds, 0.2, 1).is_err());
        assert!(inject_mismatch(&ds, -0.1, 1).is_err());
    }

    #[test]
    fn mismatch_flags_requested_share_of_valid_epochs() {
        let cfg = SynthConfig {
            n_turbines: 2,
            days: 10.0,
            ..SynthConfig::default()
        };
        let ds = generate_dataset(&cfg).unwrap();
        let injected = inject_mismatch(&ds, 0.05, 9).unwrap();
        for (before, after) in ds.turbines.iter().zip(&injected.turbines) {
            let valid = before.valid_epochs(180, 90).len();
            assert_eq!(after.mismatched.len(), (0.05 * valid as f64).round() as usize);
            assert_eq!(before.grid.values[WIND], after.grid.values[WIND]);
        }
    }

    #[test]
    fn majority_label_per_epoch() {
        let spec = quiet_spec();
        let mut wind = vec![5.0; 6];
        wind.extend([10.0; 4]);
        let t = simulate_turbine("wt", &wind, 0, 10, &spec, 0).unwrap();
        let m = t.epoch_majority(5);
        assert_eq!(m[0], (0, Some(OperationalState::Proportional)));
        assert_eq!(m[1], (50, Some(OperationalState::FixedNominalRpm)));
    }

    #[test]
    fn csv_output_is_ingestible() {
        let dir = tempfile::tempdir().unwrap();
        let mut spec = ControllerSpec::scaled(12.0);
        spec.regime_filter_time = 0.0;
        let t = simulate_turbine("WT01", &[2.0, 5.0, 9.0, 14.0], 100, 10, &spec, 4).unwrap();
        let path = dir.path().join("WT01.csv");
        write_turbine_csv(&t, &path).unwrap();
        let signals: Vec<String> = STANDARD_SIGNALS.iter().map(|s| s.to_string()).collect();
        let (grid, skipped) = crate::ingest::load_turbine_grid(&path, &signals, 10).unwrap();
        assert!(skipped.is_empty());
        assert_eq!(grid.start, 100);
        assert_eq!(grid.len(), 4);
        assert!(grid.values.iter().all(|s| s[0].is_none()));
        let lp = dir.path().join("labels.csv");
        write_labels_csv(&t, &lp).unwrap();
        let labels = read_labels_csv(&lp).unwrap();
        assert_eq!(labels[0], (100, None));
        assert_eq!(labels[3], (130, Some(OperationalState::NominalPower)));
    }
}
