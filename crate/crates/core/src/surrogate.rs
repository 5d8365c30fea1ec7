//! Seeded generator of run-to-failure trajectories in CMAPSS FD001 format.
//!
//! Used when the NASA files are not available. Each engine has a lifetime
//! drawn from a shifted gamma law (128 to 362 cycles, mean about 207) and a
//! latent health index `exp((t - T) / tau)` that reaches 1 at failure.
//! Informative sensors drift with the health index in the direction observed
//! in FD001, on top of an engine offset and white measurement noise.
//! Sensors that are constant in FD001 are constant here.

use rand::Rng;
use rand_distr::{Distribution, Gamma, Normal};

use crate::data::{EngineSeries, N_SENSORS};
use crate::error::{Error, Result};
use crate::rng::{derived_rng, tag};

#[derive(Clone, Debug, PartialEq)]
pub struct SurrogateConfig {
    pub n_engines: u32,
    pub seed: u64,
    pub min_life: u32,
    pub max_life: u32,
    /// Gamma shape and scale of `lifetime - min_life`.
    pub life_gamma: (f64, f64),
    /// Range of the health-index time constant.
    pub tau_range: (f64, f64),
    /// Noise standard deviation as a fraction of the sensor spread.
    pub noise_frac: f64,
    /// Total drift at failure as a multiple of the sensor spread.
    pub drift_mult: f64,
}

impl SurrogateConfig {
    pub fn fd001_like(seed: u64) -> Self {
        Self {
            n_engines: 100,
            seed,
            min_life: 128,
            max_life: 362,
            life_gamma: (2.2, 36.0),
            tau_range: (30.0, 70.0),
            noise_frac: 0.45,
            drift_mult: 3.5,
        }
    }
}

/// `(mean, spread, drift direction, decimals)` per sensor; zero spread means constant.
const SENSOR_PROFILE: [(f64, f64, f64, i32); N_SENSORS] = [
    (518.67, 0.0, 0.0, 2),
    (642.68, 0.50, 1.0, 2),
    (1590.52, 6.13, 1.0, 2),
    (1408.93, 9.00, 1.0, 2),
    (14.62, 0.0, 0.0, 2),
    (21.61, 0.0, 0.0, 2),
    (553.37, 0.885, -1.0, 2),
    (2388.10, 0.071, 1.0, 2),
    (9065.24, 22.08, 1.0, 2),
    (1.3, 0.0, 0.0, 2),
    (47.54, 0.267, 1.0, 2),
    (521.41, 0.738, -1.0, 2),
    (2388.10, 0.072, 1.0, 2),
    (8143.75, 19.08, 1.0, 2),
    (8.442, 0.0375, 1.0, 4),
    (0.03, 0.0, 0.0, 2),
    (393.21, 1.55, 1.0, 0),
    (2388.0, 0.0, 0.0, 0),
    (100.0, 0.0, 0.0, 2),
    (38.82, 0.181, -1.0, 2),
    (23.29, 0.108, -1.0, 4),
];

/// Sensors whose drift rate varies strongly between engines in FD001.
const ENGINE_SPECIFIC: [usize; 2] = [8, 13];

fn round_to(v: f64, decimals: i32) -> f64 {
    let f = 10f64.powi(decimals);
    (v * f).round() / f
}

pub fn generate(config: &SurrogateConfig) -> Result<Vec<EngineSeries>> {
    if config.n_engines == 0 || config.min_life == 0 || config.max_life < config.min_life {
        return Err(Error::Config(
            "invalid surrogate engine or lifetime settings".into(),
        ));
    }
    let gamma = Gamma::new(config.life_gamma.0, config.life_gamma.1)
        .map_err(|e| Error::Config(format!("lifetime law: {e}")))?;
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let op1 = Normal::new(0.0, 0.0022).expect("valid");
    let op2 = Normal::new(0.0, 0.0003).expect("valid");
    let mut out = Vec::with_capacity(config.n_engines as usize);
    for unit in 1..=config.n_engines {
        let mut rng = derived_rng(config.seed, &[tag::DATA, unit as u64]);
        let life = (config.min_life as f64 + gamma.sample(&mut rng).round())
            .min(config.max_life as f64) as u32;
        let tau = rng.random_range(config.tau_range.0..config.tau_range.1);
        let mut offsets = [0.0; N_SENSORS];
        let mut rates = [1.0; N_SENSORS];
        for j in 0..N_SENSORS {
            offsets[j] = 0.25 * SENSOR_PROFILE[j].1 * std_normal.sample(&mut rng);
            if ENGINE_SPECIFIC.contains(&j) {
                rates[j] = rng.random_range(0.5..2.0);
            }
        }
        let mut op_settings = Vec::with_capacity(life as usize);
        let mut sensors = Vec::with_capacity(life as usize);
        for t in 1..=life {
            let health = ((t as f64 - life as f64) / tau).exp();
            op_settings.push([
                round_to(op1.sample(&mut rng), 4),
                round_to(op2.sample(&mut rng), 4),
                100.0,
            ]);
            let mut row = [0.0; N_SENSORS];
            for (j, r) in row.iter_mut().enumerate() {
                let (mean, spread, dir, decimals) = SENSOR_PROFILE[j];
                *r = if spread == 0.0 {
                    mean
                } else {
                    let drift = dir * config.drift_mult * spread * rates[j] * health;
                    let noise = config.noise_frac * spread * std_normal.sample(&mut rng);
                    round_to(mean + offsets[j] + drift + noise, decimals)
                };
            }
            sensors.push(row);
        }
        out.push(EngineSeries {
            unit_id: unit,
            op_settings,
            sensors,
        });
    }
    Ok(out)
}
