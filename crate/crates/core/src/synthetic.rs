//! Synthetic corpora used by the tests and the `synth` command.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::TimeSeriesDataset;
use crate::error::{Error, Result};
use crate::window::Window;

/// Sine windows as the normal class; anomalies are sines in which a
/// contiguous burst of uniform noise replaces part (or all) of the signal.
///
/// The defaults give phase-aligned normals, as in segmented instance
/// archives, and anomalies that are noise across the whole window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SineBurstSpec {
    pub normals: usize,
    pub anomalies: usize,
    pub window_len: usize,
    /// Full periods per window.
    pub cycles: f64,
    /// Phases are drawn uniformly from `[0, phase_range)` radians.
    pub phase_range: f64,
    /// Standard deviation of the Gaussian jitter on every sample.
    pub jitter: f64,
    /// Burst length as a fraction of the window.
    pub burst_fraction: f64,
    /// Half-width of the uniform burst noise.
    pub burst_amplitude: f64,
    /// Place the burst at the end of the window instead of a random offset.
    pub burst_at_end: bool,
    pub seed: u64,
}

impl Default for SineBurstSpec {
    fn default() -> Self {
        SineBurstSpec {
            normals: 200,
            anomalies: 40,
            window_len: 64,
            cycles: 3.0,
            phase_range: 0.0,
            jitter: 0.02,
            burst_fraction: 1.0,
            burst_amplitude: 1.0,
            burst_at_end: false,
            seed: 0,
        }
    }
}

fn sine(rng: &mut ChaCha8Rng, spec: &SineBurstSpec, jitter: &Normal<f64>) -> Vec<f64> {
    let phase = if spec.phase_range > 0.0 {
        rng.random_range(0.0..spec.phase_range)
    } else {
        0.0
    };
    (0..spec.window_len)
        .map(|t| (TAU * spec.cycles * t as f64 / spec.window_len as f64 + phase).sin() + jitter.sample(rng))
        .collect()
}

pub fn sine_burst_corpus(spec: &SineBurstSpec) -> Result<TimeSeriesDataset> {
    if spec.window_len == 0 || !(spec.burst_fraction > 0.0 && spec.burst_fraction <= 1.0) {
        return Err(Error::InvalidConfig(
            "window length must be positive and burst fraction in (0, 1]".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let jitter = Normal::new(0.0, spec.jitter.max(0.0)).expect("non-negative std");
    let mut windows = Vec::with_capacity(spec.normals + spec.anomalies);
    let mut labels = Vec::with_capacity(spec.normals + spec.anomalies);
    for _ in 0..spec.normals {
        windows.push(Window::new(spec.window_len, 1, sine(&mut rng, spec, &jitter))?);
        labels.push(false);
    }
    let burst = ((spec.window_len as f64 * spec.burst_fraction).round() as usize).clamp(1, spec.window_len);
    for _ in 0..spec.anomalies {
        let mut values = sine(&mut rng, spec, &jitter);
        let start = if spec.burst_at_end {
            spec.window_len - burst
        } else {
            rng.random_range(0..=spec.window_len - burst)
        };
        for v in &mut values[start..start + burst] {
            *v = rng.random_range(-spec.burst_amplitude..=spec.burst_amplitude);
        }
        windows.push(Window::new(spec.window_len, 1, values)?);
        labels.push(true);
    }
    TimeSeriesDataset::new("sine-burst", windows, labels)
}
