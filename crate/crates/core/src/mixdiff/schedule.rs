use std::f64::consts::FRAC_PI_2;

/// Lower bound on `alpha` and `sigma` for `k` in `(0, 1]`.
pub const SCHEDULE_FLOOR: f64 = 1e-3;
/// Largest noise level visited by the sampler.
pub const K_MAX: f64 = 0.999;
/// Width of the sinusoidal noise-level embedding.
pub const TIME_EMBED_DIM: usize = 16;

/// Continuous cosine schedule `alpha = cos(pi k / 2)`,
/// `sigma = sin(pi k / 2)`.
///
/// Both are floored on `(0, 1]` so that the sampler never divides by a
/// vanishing value. `k = 0` is the clean endpoint with `alpha = 1` and
/// `sigma = 0` exactly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSchedule {
    pub floor: f64,
}

impl Default for NoiseSchedule {
    fn default() -> Self {
        Self {
            floor: SCHEDULE_FLOOR,
        }
    }
}

impl NoiseSchedule {
    pub fn raw_alpha(k: f64) -> f64 {
        (FRAC_PI_2 * k).cos()
    }

    pub fn raw_sigma(k: f64) -> f64 {
        (FRAC_PI_2 * k).sin()
    }

    pub fn alpha(&self, k: f64) -> f64 {
        if k <= 0.0 {
            1.0
        } else {
            Self::raw_alpha(k).max(self.floor)
        }
    }

    pub fn sigma(&self, k: f64) -> f64 {
        if k <= 0.0 {
            0.0
        } else {
            Self::raw_sigma(k).max(self.floor)
        }
    }

    /// `steps + 1` uniformly spaced noise levels from [`K_MAX`] down to 0.
    pub fn sampling_grid(steps: usize) -> Vec<f64> {
        let s = steps.max(1);
        (0..=s).map(|i| K_MAX * (1.0 - i as f64 / s as f64)).collect()
    }
}

/// Sinusoidal embedding of the noise level with geometric frequencies
/// from 1 to 1000 rad per unit `k`.
pub fn time_embedding(k: f64) -> [f64; TIME_EMBED_DIM] {
    let half = TIME_EMBED_DIM / 2;
    let mut out = [0.0; TIME_EMBED_DIM];
    for i in 0..half {
        let freq = 1000f64.powf(i as f64 / (half - 1) as f64);
        out[i] = (k * freq).sin();
        out[half + i] = (k * freq).cos();
    }
    out
}
