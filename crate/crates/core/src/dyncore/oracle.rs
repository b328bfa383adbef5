//! Closed-form references for the falling-ball system.

use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use super::env::{EnvId, BALLDROP_T0};
use crate::error::{Error, Result};

/// How far a context ends before the predicted transition.
///
/// `Steps(d)`: the context is the same episode's window ending at `t - d`.
/// `Infinite`: the context comes from a different episode of the same
/// domain.
/// Serialized as its label: `"1"`, `"32"`, `"inf"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Lag {
    Steps(usize),
    Infinite,
}

impl Lag {
    pub fn label(self) -> String {
        match self {
            Lag::Steps(d) => d.to_string(),
            Lag::Infinite => "inf".to_string(),
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "inf" | "infinite" | "∞" => Some(Lag::Infinite),
            other => other.parse::<usize>().ok().filter(|&d| d > 0).map(Lag::Steps),
        }
    }
}

impl From<Lag> for String {
    fn from(lag: Lag) -> String {
        lag.label()
    }
}

impl TryFrom<String> for Lag {
    type Error = String;

    fn try_from(s: String) -> std::result::Result<Self, String> {
        Lag::parse(&s).ok_or_else(|| format!("invalid lag {s:?}: expected a positive step count or \"inf\""))
    }
}

/// Gravity and current speed from three consecutive positions
/// `(y[T-2], y[T-1], y[T])`. Speed uses the second-order backward
/// difference.
pub fn fit_g_from_context(y: [f64; 3], t0: f64) -> (f64, f64) {
    debug_assert!(t0 > 0.0);
    let [y2, y1, y0] = y;
    let g = (y0 + y2 - 2.0 * y1) / (t0 * t0);
    let v = (3.0 * y0 - 4.0 * y1 + y2) / (2.0 * t0);
    (g, v)
}

/// Squared next-position error of the best predictor a lag rule permits,
/// averaged over every admissible prediction tuple of the dataset.
///
/// For a finite lag the context's last three positions pin both gravity and
/// speed, and the speed is carried forward exactly, so the error is zero up
/// to rounding. For an infinite lag only per-domain constants are available;
/// the optimum predicts `y + mean_speed * t0 + g t0^2 / 2` with the
/// domain's mean speed over its tuples.
pub fn balldrop_oracle_mse(dataset: &Dataset, lag: Lag, history: usize) -> Result<f64> {
    if dataset.env != EnvId::BallDrop {
        return Err(Error::InvalidDomain("oracle needs a BallDrop dataset".into()));
    }
    let t0 = BALLDROP_T0;
    let mut total = 0.0;
    let mut count = 0usize;
    match lag {
        Lag::Steps(d) => {
            if history < 3 {
                return Err(Error::NoAdmissiblePairs("history shorter than 3 positions".into()));
            }
            for (_, _, traj) in dataset.iter() {
                let y = |i: usize| traj.obs(i)[0];
                for t in (history - 1 + d)..traj.len().saturating_sub(1) {
                    let e = t - d;
                    let (g, v_end) = fit_g_from_context([y(e - 2), y(e - 1), y(e)], t0);
                    let v_t = v_end + g * (t - e) as f64 * t0;
                    let pred = y(t) + v_t * t0 + 0.5 * g * t0 * t0;
                    total += (y(t + 1) - pred).powi(2);
                    count += 1;
                }
            }
        }
        Lag::Infinite => {
            for (d, eps) in dataset.episodes.iter().enumerate() {
                let g = dataset.domains[d].params[0];
                let residuals: Vec<f64> = eps
                    .iter()
                    .flat_map(|traj| {
                        (0..traj.len().saturating_sub(1))
                            .map(move |t| traj.obs(t + 1)[0] - traj.obs(t)[0] - 0.5 * g * t0 * t0)
                    })
                    .collect();
                if residuals.is_empty() {
                    continue;
                }
                let mean = residuals.iter().sum::<f64>() / residuals.len() as f64;
                total += residuals.iter().map(|r| (r - mean).powi(2)).sum::<f64>();
                count += residuals.len();
            }
        }
    }
    if count == 0 {
        return Err(Error::NoAdmissiblePairs(format!("lag {} leaves no tuples", lag.label())));
    }
    Ok(total / count as f64)
}
