//! Central finite-difference gradient checks for [`Mlp`].
//!
//! The probe loss is a fixed random linear functional of the network
//! output, `L = sum(out * r)`, so `dL/dout = r`. Every parameter tensor and
//! the input batch is probed at a random subset of coordinates.

use ndarray::Array2;

use super::mlp::Mlp;
use super::rng::Rng;

/// Relative errors below this denominator are measured absolutely.
pub const RELATIVE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_tensor: String,
    pub coordinates: usize,
}

fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

fn probe_loss(net: &Mlp, x: &Array2<f64>, r: &Array2<f64>) -> f64 {
    let out = net.forward(x.view()).expect("gradcheck input width");
    (&out * r).sum()
}

/// Checks analytic gradients of `net` on a random batch against central
/// differences with step `h`.
pub fn check_mlp(net: &Mlp, batch: usize, coords_per_tensor: usize, h: f64, rng: &mut Rng) -> GradCheckReport {
    let x = Array2::from_shape_fn((batch, net.input_dim()), |_| rng.normal());
    let r = Array2::from_shape_fn((batch, net.output_dim()), |_| rng.normal());
    let mut work = net.clone();
    work.forward_train(x.view()).expect("gradcheck input width");
    let grads = work.backward(r.view()).expect("cached forward");

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_tensor: String::new(),
        coordinates: 0,
    };
    let record = |name: String, err: f64, report: &mut GradCheckReport| {
        report.coordinates += 1;
        if err >= report.max_rel_error {
            report.max_rel_error = err;
            report.worst_tensor = name;
        }
    };

    for li in 0..net.layers().len() {
        for (is_bias, len) in [
            (false, net.layers()[li].weight.len()),
            (true, net.layers()[li].bias.len()),
        ] {
            let name = format!("layer{li}.{}", if is_bias { "bias" } else { "weight" });
            for _ in 0..coords_per_tensor.min(len) {
                let idx = rng.below(len);
                let analytic = if is_bias {
                    grads.layers[li].bias[idx]
                } else {
                    grads.layers[li].weight.as_slice().expect("standard layout")[idx]
                };
                let eval = |delta: f64| {
                    let mut p = net.clone();
                    let layer = &mut p.layers_mut()[li];
                    if is_bias {
                        layer.bias[idx] += delta;
                    } else {
                        layer.weight.as_slice_mut().expect("standard layout")[idx] += delta;
                    }
                    probe_loss(&p, &x, &r)
                };
                let numeric = (eval(h) - eval(-h)) / (2.0 * h);
                record(name.clone(), rel_error(analytic, numeric), &mut report);
            }
        }
    }

    for _ in 0..coords_per_tensor.min(x.len()) {
        let idx = rng.below(x.len());
        let analytic = grads.input.as_slice().expect("standard layout")[idx];
        let shifted = |delta: f64| {
            let mut xs = x.clone();
            xs.as_slice_mut().expect("standard layout")[idx] += delta;
            probe_loss(net, &xs, &r)
        };
        let numeric = (shifted(h) - shifted(-h)) / (2.0 * h);
        record("input".to_string(), rel_error(analytic, numeric), &mut report);
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_eight_eight_two() {
        let mut rng = Rng::new(17);
        let net = Mlp::new(&[4, 8, 8, 2], &mut rng);
        let rep = check_mlp(&net, 3, 20, 1e-5, &mut rng);
        assert!(rep.max_rel_error < 1e-4, "{rep:?}");
    }

    #[test]
    fn single_input_column() {
        let mut rng = Rng::new(18);
        let net = Mlp::new(&[1, 32, 32, 1], &mut rng);
        let rep = check_mlp(&net, 4, 20, 1e-5, &mut rng);
        assert!(rep.max_rel_error < 1e-4, "{rep:?}");
    }
}
