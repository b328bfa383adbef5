//! Window layout, inpainting mask and the elementwise diffusion algebra.
//!
//! A window is `history + future` rows of `(observation, action)` stored
//! row-major in a flat slice. Masked entries (value 1 in the mask) are the
//! history rows and the observation of the current row; they are copied
//! through every operation untouched.

use serde::{Deserialize, Serialize};

use super::schedule::NoiseSchedule;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub history: usize,
    pub future: usize,
    pub obs_dim: usize,
    pub action_dim: usize,
}

impl WindowSpec {
    pub fn new(history: usize, future: usize, obs_dim: usize, action_dim: usize) -> Self {
        Self {
            history,
            future,
            obs_dim,
            action_dim,
        }
    }

    pub fn rows(&self) -> usize {
        self.history + self.future
    }

    pub fn width(&self) -> usize {
        self.obs_dim + self.action_dim
    }

    pub fn len(&self) -> usize {
        self.rows() * self.width()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.width() + col
    }

    /// 1 on history rows and on the observation of the current row.
    pub fn mask(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.len()];
        m[..self.history * self.width()].fill(1.0);
        if self.future > 0 {
            let start = self.index(self.history, 0);
            m[start..start + self.obs_dim].fill(1.0);
        }
        m
    }

    /// Flat index range of the action generated for the current step.
    pub fn current_action(&self) -> std::ops::Range<usize> {
        let start = self.index(self.history, self.obs_dim);
        start..start + self.action_dim
    }
}

/// Tiles `z` across `rows` rows and zeroes masked entries.
pub fn broadcast_z(z: &[f64], rows: usize, mask: &[f64]) -> Result<Vec<f64>> {
    if z.is_empty() || mask.len() != rows * z.len() {
        return Err(Error::dims("broadcast z width", mask.len() / rows.max(1), z.len()));
    }
    Ok(mask
        .iter()
        .enumerate()
        .map(|(i, &m)| if m == 1.0 { 0.0 } else { z[i % z.len()] })
        .collect())
}

/// `alpha (x0 - lambda Z) + lambda Z + sigma eps` on free entries, `x0` on
/// masked ones, with explicit schedule values.
pub fn perturb_with(x0: &[f64], bz: &[f64], eps: &[f64], mask: &[f64], alpha: f64, sigma: f64, lambda: f64) -> Vec<f64> {
    x0.iter()
        .zip(bz)
        .zip(eps.iter().zip(mask))
        .map(|((&x, &b), (&e, &m))| {
            if m == 1.0 {
                x
            } else {
                alpha * (x - lambda * b) + lambda * b + sigma * e
            }
        })
        .collect()
}

pub fn forward_perturb(
    sch: &NoiseSchedule,
    x0: &[f64],
    bz: &[f64],
    eps: &[f64],
    mask: &[f64],
    k: f64,
    lambda: f64,
) -> Vec<f64> {
    perturb_with(x0, bz, eps, mask, sch.alpha(k), sch.sigma(k), lambda)
}

pub fn target_with(bz: &[f64], eps: &[f64], mask: &[f64], alpha: f64, sigma: f64, lambda: f64) -> Vec<f64> {
    bz.iter()
        .zip(eps.iter().zip(mask))
        .map(|(&b, (&e, &m))| {
            if m == 1.0 {
                0.0
            } else {
                (1.0 - alpha) * lambda * b + sigma * e
            }
        })
        .collect()
}

/// `(1 - alpha) lambda Z + sigma eps` on free entries, zero on masked ones.
pub fn composite_target(sch: &NoiseSchedule, bz: &[f64], eps: &[f64], mask: &[f64], k: f64, lambda: f64) -> Vec<f64> {
    target_with(bz, eps, mask, sch.alpha(k), sch.sigma(k), lambda)
}

/// `(alpha'/alpha)(x - eps_hat) + (sigma'/sigma) eps_hat` on free entries;
/// masked entries are copied from `x`.
pub fn ddim_update(x: &[f64], eps_hat: &[f64], mask: &[f64], alpha: f64, sigma: f64, alpha_prev: f64, sigma_prev: f64) -> Vec<f64> {
    let (ra, rs) = (alpha_prev / alpha, sigma_prev / sigma);
    x.iter()
        .zip(eps_hat.iter().zip(mask))
        .map(|(&xv, (&e, &m))| if m == 1.0 { xv } else { ra * (xv - e) + rs * e })
        .collect()
}

pub fn ddim_step(sch: &NoiseSchedule, x: &[f64], eps_hat: &[f64], mask: &[f64], k: f64, k_prev: f64) -> Vec<f64> {
    debug_assert!(k_prev < k);
    ddim_update(x, eps_hat, mask, sch.alpha(k), sch.sigma(k), sch.alpha(k_prev), sch.sigma(k_prev))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_forward_and_target() {
        let x = perturb_with(&[1.0], &[0.5], &[1.0], &[0.0], 0.6, 0.8, 1.0);
        assert!((x[0] - 1.6).abs() < 1e-15);
        let t = target_with(&[0.5], &[1.0], &[0.0], 0.6, 0.8, 1.0);
        assert!((t[0] - 1.0).abs() < 1e-15);
        assert!((0.6 * 1.0 + t[0] - x[0]).abs() < 1e-15);
    }

    #[test]
    fn scalar_final_step_is_exact() {
        let x0 = ddim_update(&[1.6], &[1.0], &[0.0], 0.6, 0.8, 1.0, 0.0);
        assert!((x0[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn intermediate_step_with_bias_is_literal() {
        let x = ddim_update(&[1.6], &[1.0], &[0.0], 0.6, 0.8, 0.8, 0.6);
        assert!((x[0] - 1.55).abs() < 1e-12);
        let fwd = perturb_with(&[1.0], &[0.5], &[1.0], &[0.0], 0.8, 0.6, 1.0);
        assert!((fwd[0] - 1.5).abs() < 1e-12);
    }

    #[test]
    fn zero_bias_reduces_to_standard_forward() {
        let x = perturb_with(&[0.3, -2.0], &[0.0, 0.0], &[1.1, 0.4], &[0.0, 0.0], 0.7, 0.2, 5.0);
        assert_eq!(x, vec![0.7 * 0.3 + 0.2 * 1.1, 0.7 * -2.0 + 0.2 * 0.4]);
    }

    #[test]
    fn near_one_is_biased_noise() {
        let sch = NoiseSchedule::default();
        let x = forward_perturb(&sch, &[3.0], &[0.5], &[-0.2], &[0.0], 1.0, 1.0);
        assert!((x[0] - (0.5 - 0.2)).abs() < 1e-2);
    }

    #[test]
    fn clean_endpoint_target_is_zero() {
        let sch = NoiseSchedule::default();
        assert_eq!(composite_target(&sch, &[0.4], &[1.3], &[0.0], 0.0, 1.0), vec![0.0]);
        assert_eq!(composite_target(&sch, &[0.4], &[1.3], &[0.0], 0.4, 0.0), vec![sch.sigma(0.4) * 1.3]);
    }

    #[test]
    fn mask_layout() {
        let spec = WindowSpec::new(2, 2, 1, 1);
        assert_eq!(spec.mask(), vec![1.0, 1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0]);
        assert_eq!(spec.current_action(), 5..6);
    }

    #[test]
    fn broadcast_rules() {
        let spec = WindowSpec::new(2, 2, 1, 1);
        let m = spec.mask();
        assert!(broadcast_z(&[0.0, 0.0], 4, &m).unwrap().iter().all(|&v| v == 0.0));
        assert_eq!(broadcast_z(&[0.3, 0.7], 1, &[0.0, 0.0]).unwrap(), vec![0.3, 0.7]);
        assert!(broadcast_z(&[1.0, 2.0], 4, &[1.0; 8]).unwrap().iter().all(|&v| v == 0.0));
        assert_eq!(broadcast_z(&[1.0, 2.0], 4, &m).unwrap(), vec![0.0, 0.0, 0.0, 0.0, 0.0, 2.0, 1.0, 2.0]);
        assert!(broadcast_z(&[1.0, 2.0, 3.0], 4, &m).is_err());
    }

    #[test]
    fn masked_entries_are_fixed_points() {
        let m = [1.0, 0.0];
        let x = perturb_with(&[4.0, 1.0], &[9.0, 9.0], &[7.0, 7.0], &m, 0.1, 0.9, 2.0);
        assert_eq!(x[0], 4.0);
        let y = ddim_update(&x, &[5.0, 5.0], &m, 0.1, 0.9, 0.5, 0.5);
        assert_eq!(y[0], 4.0);
    }
}
