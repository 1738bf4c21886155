//! Seeded synthetic reforming data on the canonical schema, for benchmarks and demos.

use crate::data::{Bounds, Dataset, FeatureSchema, Sample};
use crate::rng::SeededRng;
use std::f64::consts::PI;

/// Sampling box per canonical feature, in schema order.
pub const FEATURE_BOXES: [(f64, f64); 11] = [
    (5.0, 40.0),
    (20.0, 95.0),
    (5.0, 300.0),
    (0.05, 0.8),
    (0.1, 2.0),
    (20.0, 200.0),
    (0.5, 6.0),
    (20.0, 200.0),
    (500.0, 900.0),
    (10.0, 600.0),
    (6.0, 30.0),
];

pub fn feature_boxes() -> Vec<Bounds> {
    FEATURE_BOXES.iter().map(|&(lo, hi)| Bounds::new(lo, hi)).collect()
}

/// Noise-free targets for features mapped onto `[0, 1]`.
pub fn smooth_targets(u: &[f64]) -> [f64; 5] {
    let (c, ci, b, pv, l, f, s, tc, t, time, dia) = (u[0], u[1], u[2], u[3], u[4], u[5], u[6], u[7], u[8], u[9], u[10]);
    let t_sat = (1.0 - (-3.0 * t).exp()) / (1.0 - (-3.0f64).exp());
    let conversion = 20.0 + 50.0 * t_sat + 12.0 * b + 8.0 * (PI * s).sin() - 10.0 * c + 6.0 * l * t - 5.0 * time;
    let h2 = 35.0 + 20.0 * t + 10.0 * (0.5 * PI * s).sin() + 6.0 * b - 5.0 * c + 3.0 * (PI * dia).cos();
    let co = 12.0 + 15.0 * t - 8.0 * s + 4.0 * ci + 3.0 * l * t;
    let co2 = 12.0 + 10.0 * s - 6.0 * t + 4.0 * pv + 2.0 * tc;
    let ch4 = 15.0 - 10.0 * t + 5.0 * (1.0 - s).powi(2) + 3.0 * f + 2.0 * ci * b;
    [conversion, h2, co, co2, ch4]
}

/// `n` rows with features uniform in [`FEATURE_BOXES`] and Gaussian noise of
/// `noise_frac` × (observed range of each noise-free target).
pub fn synthetic_dataset(n: usize, noise_frac: f64, seed: u64) -> Dataset {
    let mut rng = SeededRng::new(seed);
    let mut features = Vec::with_capacity(n);
    let mut clean = Vec::with_capacity(n);
    for _ in 0..n {
        let u: Vec<f64> = (0..11).map(|_| rng.uniform()).collect();
        features.push(
            u.iter()
                .zip(FEATURE_BOXES)
                .map(|(p, (lo, hi))| lo + p * (hi - lo))
                .collect::<Vec<f64>>(),
        );
        clean.push(smooth_targets(&u));
    }
    let sd: Vec<f64> = (0..5)
        .map(|t| {
            let lo = clean.iter().map(|r| r[t]).fold(f64::INFINITY, f64::min);
            let hi = clean.iter().map(|r| r[t]).fold(f64::NEG_INFINITY, f64::max);
            noise_frac * (hi - lo)
        })
        .collect();
    let rows = features
        .into_iter()
        .zip(clean)
        .map(|(x, y)| {
            let y = (0..5)
                .map(|t| (y[t] + sd[t] * rng.standard_normal()).clamp(0.0, 100.0))
                .collect();
            Sample::new(x, y).with_source("synthetic")
        })
        .collect();
    Dataset::new(FeatureSchema::canonical(), rows).expect("synthetic rows are valid")
}
