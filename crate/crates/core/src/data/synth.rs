//! Synthetic speeds where pattern similarity is decoupled from graph proximity.
//!
//! Every node belongs to a latent functional class. A class pattern is a daily
//! sinusoid with a class-specific phase, two class-specific rush-hour dips
//! whose depth varies from day to day, and a slow class-level AR(1) drift.
//! A node's series is `base + scale · (pattern + offset + noise)`, so nodes of
//! one class share every stochastic component and differ only by a constant
//! offset plus their own white noise. The road graph is a random geometric
//! graph drawn independently of the classes.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::SpeedDataset;
use crate::error::{Error, Result};
use crate::teacher::RoadNetwork;
use crate::tensor::Tensor;

pub const STEPS_PER_DAY: usize = 288;
const BASE_SPEED: f64 = 50.0;
const SPEED_SCALE: f64 = 8.0;
const DIP_DEPTH: f64 = 1.6;
const DIP_WIDTH_HOURS: f64 = 0.9;
const DEPTH_JITTER: f64 = 0.35;
const DRIFT_COEF: f64 = 0.98;
const DRIFT_STD: f64 = 0.06;
const OFFSET_RANGE: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub nodes: usize,
    pub steps: usize,
    pub classes: usize,
    /// Connection radius of the geometric graph in the unit square. The
    /// default of 0.2 gives two to three neighbours per node, close to a road
    /// network.
    pub graph_density: f64,
    /// White-noise standard deviation, in units of the daily-cycle amplitude.
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            nodes: 24,
            steps: 2016,
            classes: 3,
            graph_density: 0.2,
            noise_std: 0.05,
            seed: 42,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 || self.nodes < self.classes {
            return Err(Error::Config(format!(
                "synthetic data needs nodes ≥ classes ≥ 2, got nodes={} classes={}",
                self.nodes, self.classes
            )));
        }
        if self.steps < 10 {
            return Err(Error::Config(format!(
                "synthetic steps must be ≥ 10, got {}",
                self.steps
            )));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::Config(format!("noise_std must be ≥ 0, got {}", self.noise_std)));
        }
        if !(self.graph_density >= 0.0 && self.graph_density.is_finite()) {
            return Err(Error::Config(format!(
                "graph_density must be ≥ 0, got {}",
                self.graph_density
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub dataset: SpeedDataset,
    pub classes: Vec<usize>,
}

fn dip_hours(class: usize) -> [f64; 2] {
    [(6.5 + 3.0 * class as f64) % 24.0, (16.0 + 2.5 * class as f64) % 24.0]
}

/// Circular distance in hours between two times of day.
fn hour_gap(a: f64, b: f64) -> f64 {
    let d = (a - b).abs() % 24.0;
    d.min(24.0 - d)
}

pub fn synth_generate(cfg: &SynthConfig) -> Result<SynthOutput> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");

    let mut classes: Vec<usize> = (0..cfg.nodes).map(|i| i % cfg.classes).collect();
    classes.shuffle(&mut rng);
    let offsets: Vec<f64> = (0..cfg.nodes)
        .map(|_| rng.gen_range(-OFFSET_RANGE..OFFSET_RANGE))
        .collect();

    let days = cfg.steps.div_ceil(STEPS_PER_DAY);
    let mut patterns = vec![vec![0.0; cfg.steps]; cfg.classes];
    for (k, pattern) in patterns.iter_mut().enumerate() {
        let phase = 2.0 * PI * k as f64 / cfg.classes as f64;
        let depths: Vec<[f64; 2]> = (0..days)
            .map(|_| {
                let mut d = [0.0; 2];
                for v in &mut d {
                    *v = DIP_DEPTH * (1.0 + DEPTH_JITTER * std_normal.sample(&mut rng)).max(0.0);
                }
                d
            })
            .collect();
        let mut drift = 0.0;
        for (t, p) in pattern.iter_mut().enumerate() {
            drift = DRIFT_COEF * drift + DRIFT_STD * std_normal.sample(&mut rng);
            let day = t / STEPS_PER_DAY;
            let hour = (t % STEPS_PER_DAY) as f64 * 24.0 / STEPS_PER_DAY as f64;
            let cycle = (2.0 * PI * t as f64 / STEPS_PER_DAY as f64 + phase).sin();
            let dips: f64 = dip_hours(k)
                .iter()
                .zip(depths[day])
                .map(|(&c, depth)| {
                    let g = hour_gap(hour, c) / DIP_WIDTH_HOURS;
                    depth * (-0.5 * g * g).exp()
                })
                .sum();
            *p = cycle - dips + drift;
        }
    }

    let mut speeds = Tensor::zeros(vec![cfg.steps, cfg.nodes]);
    for t in 0..cfg.steps {
        for i in 0..cfg.nodes {
            let noise = if cfg.noise_std > 0.0 {
                cfg.noise_std * std_normal.sample(&mut rng)
            } else {
                0.0
            };
            let v = BASE_SPEED + SPEED_SCALE * (patterns[classes[i]][t] + offsets[i] + noise);
            speeds.set(t, i, v.max(0.0));
        }
    }

    let positions: Vec<(f64, f64)> = (0..cfg.nodes).map(|_| (rng.gen::<f64>(), rng.gen::<f64>())).collect();
    let mut adjacency = Tensor::zeros(vec![cfg.nodes, cfg.nodes]);
    for i in 0..cfg.nodes {
        for j in i + 1..cfg.nodes {
            let (dx, dy) = (positions[i].0 - positions[j].0, positions[i].1 - positions[j].1);
            if (dx * dx + dy * dy).sqrt() < cfg.graph_density {
                adjacency.set(i, j, 1.0);
                adjacency.set(j, i, 1.0);
            }
        }
    }

    let dataset = SpeedDataset::new(speeds)?.with_network(RoadNetwork::new(adjacency)?)?;
    Ok(SynthOutput { dataset, classes })
}
