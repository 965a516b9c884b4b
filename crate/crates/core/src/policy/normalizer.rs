use serde::{Deserialize, Serialize};

use crate::env::FEATURE_DIM;

/// Number of leading features (the DKK impacts) that are standardised.
pub const NORMALIZED: usize = 3;
const CLIP: f64 = 10.0;

/// Running mean and variance of the impact features (Welford / Chan merge).
/// Effectiveness features already lie in [0, 1] and pass through.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureNormalizer {
    pub count: f64,
    pub mean: [f64; NORMALIZED],
    pub m2: [f64; NORMALIZED],
}

impl Default for FeatureNormalizer {
    fn default() -> Self {
        Self::new()
    }
}

impl FeatureNormalizer {
    pub fn new() -> Self {
        FeatureNormalizer {
            count: 0.0,
            mean: [0.0; NORMALIZED],
            m2: [0.0; NORMALIZED],
        }
    }

    pub fn variance(&self) -> [f64; NORMALIZED] {
        std::array::from_fn(|j| if self.count > 1.0 { self.m2[j] / self.count } else { 1.0 })
    }

    pub fn update(&mut self, features: &[[f64; FEATURE_DIM]]) {
        for f in features {
            self.count += 1.0;
            for j in 0..NORMALIZED {
                let d = f[j] - self.mean[j];
                self.mean[j] += d / self.count;
                self.m2[j] += d * (f[j] - self.mean[j]);
            }
        }
    }

    /// Folds another normaliser's statistics into this one.
    pub fn merge(&mut self, other: &FeatureNormalizer) {
        if other.count == 0.0 {
            return;
        }
        let n = self.count + other.count;
        for j in 0..NORMALIZED {
            let d = other.mean[j] - self.mean[j];
            self.mean[j] += d * other.count / n;
            self.m2[j] += other.m2[j] + d * d * self.count * other.count / n;
        }
        self.count = n;
    }

    pub fn normalize(&self, f: &[f64; FEATURE_DIM]) -> [f64; FEATURE_DIM] {
        let var = self.variance();
        let mut out = *f;
        for j in 0..NORMALIZED {
            out[j] = ((f[j] - self.mean[j]) / (var[j] + 1e-8).sqrt()).clamp(-CLIP, CLIP);
        }
        out
    }
}
