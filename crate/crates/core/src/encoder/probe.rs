//! Post-hoc probes of embedding quality. Domain parameters enter only here,
//! after the encoder is frozen.

use ndarray::{Array2, ArrayView2, Axis};

use super::bundle::EncoderBundle;
use super::context::{ContextOrigin, ContextWindow};
use crate::dyncore::Dataset;
use crate::error::{Error, Result};
use crate::nn::loss::{argmax, mse, softmax_ce_batch};
use crate::nn::{AdamConfig, Mlp, OptimState, Rng};
use crate::standardize::Standardizer;

/// Share of probe rows used for fitting; the rest is held out.
pub const PROBE_TRAIN_RATIO: f64 = 0.8;
const LINEAR_STEPS: usize = 2000;
const LINEAR_LR: f64 = 0.2;
const RECON_STEPS: usize = 1500;
const RECON_LR: f64 = 0.01;
const RECON_HIDDEN: usize = 32;

/// Embeddings of a set of contexts with their domain labels and parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    pub z: Array2<f64>,
    pub labels: Vec<usize>,
    pub params: Array2<f64>,
    pub origins: Vec<ContextOrigin>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmbeddingStats {
    pub intra: f64,
    pub inter: f64,
    pub ratio: f64,
    /// All domain centroids coincide, so `ratio` is infinite.
    pub degenerate: bool,
}

/// Encodes every full context window of every episode in `dataset`, taking
/// one window out of `stride` along each episode.
pub fn collect_embeddings(bundle: &EncoderBundle, dataset: &Dataset, stride: usize) -> Result<EmbeddingSet> {
    let stride = stride.max(1);
    let mut contexts = Vec::new();
    for (d, e, traj) in dataset.iter() {
        let mut end = bundle.history - 1;
        while end < traj.len() {
            contexts.push(ContextWindow::from_trajectory(traj, end, bundle.history).with_origin(d, e, end));
            end += stride;
        }
    }
    let z = bundle.encode_batch(&contexts)?;
    let origins: Vec<ContextOrigin> = contexts.iter().map(|c| c.origin.expect("origin set")).collect();
    let labels: Vec<usize> = origins.iter().map(|o| o.domain).collect();
    let pd = dataset.env.param_dim();
    let mut params = Array2::zeros((labels.len(), pd));
    for (i, &d) in labels.iter().enumerate() {
        for k in 0..pd {
            params[[i, k]] = dataset.domains[d].params[k];
        }
    }
    Ok(EmbeddingSet {
        z,
        labels,
        params,
        origins,
    })
}

fn check_inputs(embeddings: &ArrayView2<f64>, labels: &[usize]) -> Result<usize> {
    if embeddings.nrows() != labels.len() {
        return Err(Error::dims("probe labels", embeddings.nrows(), labels.len()));
    }
    if !embeddings.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite {
            tensor: "embeddings".into(),
        });
    }
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut seen = vec![false; classes];
    for &l in labels {
        seen[l] = true;
    }
    if seen.iter().filter(|&&s| s).count() < 2 {
        return Err(Error::Degenerate("probe needs at least two domains".into()));
    }
    Ok(classes)
}

fn split_rows(n: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    Rng::new(seed).shuffle(&mut idx);
    let n_train = ((n as f64 * PROBE_TRAIN_RATIO).round() as usize).clamp(1, n.saturating_sub(1).max(1));
    let test = idx.split_off(n_train);
    (idx, test)
}

fn rows(m: &ArrayView2<f64>, idx: &[usize]) -> Array2<f64> {
    m.select(Axis(0), idx)
}

fn standardize(train: &mut Array2<f64>, test: &mut Array2<f64>) {
    let dim = train.ncols();
    let rows: Vec<Vec<f64>> = train.rows().into_iter().map(|r| r.to_vec()).collect();
    let st = Standardizer::fit(dim, rows.iter().map(Vec::as_slice));
    for m in [train, test] {
        for mut r in m.rows_mut() {
            for k in 0..dim {
                r[k] = (r[k] - st.mean[k]) / st.std[k];
            }
        }
    }
}

/// Held-out accuracy of a softmax linear classifier from embeddings to
/// domain index, trained full-batch on a seeded 80/20 split.
pub fn linear_probe(embeddings: ArrayView2<f64>, labels: &[usize], seed: u64) -> Result<f64> {
    let classes = check_inputs(&embeddings, labels)?;
    let (train, test) = split_rows(labels.len(), seed);
    let mut x_train = rows(&embeddings, &train);
    let mut x_test = rows(&embeddings, &test);
    standardize(&mut x_train, &mut x_test);
    let y_train: Vec<usize> = train.iter().map(|&i| labels[i]).collect();

    let mut rng = Rng::derive(seed, 1);
    let mut net = Mlp::new(&[embeddings.ncols(), classes], &mut rng);
    let mut opt = OptimState::new(&net, AdamConfig::with_lr(LINEAR_LR), "linear_probe");
    for _ in 0..LINEAR_STEPS {
        let logits = net.forward_train(x_train.view())?;
        let (_, grad) = softmax_ce_batch(logits.view(), &y_train)?;
        let g = net.backward(grad.view())?;
        opt.step(&mut net, &g)?;
    }
    let logits = net.forward(x_test.view())?;
    let correct = test
        .iter()
        .enumerate()
        .filter(|(r, &i)| argmax(logits.row(*r).as_slice().expect("row")) == labels[i])
        .count();
    Ok(correct as f64 / test.len().max(1) as f64)
}

/// Held-out MSE, in standardized target units, of a two-hidden-layer
/// regression from embeddings to domain parameters.
pub fn reconstruct_params(embeddings: ArrayView2<f64>, targets: ArrayView2<f64>, seed: u64) -> Result<f64> {
    if embeddings.nrows() != targets.nrows() {
        return Err(Error::dims("reconstruction targets", embeddings.nrows(), targets.nrows()));
    }
    if !embeddings.iter().chain(targets.iter()).all(|v| v.is_finite()) {
        return Err(Error::NonFinite {
            tensor: "reconstruction inputs".into(),
        });
    }
    if embeddings.nrows() < 2 {
        return Err(Error::Degenerate("reconstruction needs at least two rows".into()));
    }
    let (train, test) = split_rows(embeddings.nrows(), seed);
    let mut x_train = rows(&embeddings, &train);
    let mut x_test = rows(&embeddings, &test);
    standardize(&mut x_train, &mut x_test);
    let mut y_train = rows(&targets, &train);
    let mut y_test = rows(&targets, &test);
    standardize(&mut y_train, &mut y_test);

    let mut rng = Rng::derive(seed, 2);
    let mut net = Mlp::new(&[embeddings.ncols(), RECON_HIDDEN, RECON_HIDDEN, targets.ncols()], &mut rng);
    let mut opt = OptimState::new(&net, AdamConfig::with_lr(RECON_LR), "reconstruction");
    for _ in 0..RECON_STEPS {
        let pred = net.forward_train(x_train.view())?;
        let (_, grad) = mse(pred.view(), y_train.view())?;
        let g = net.backward(grad.view())?;
        opt.step(&mut net, &g)?;
    }
    let pred = net.forward(x_test.view())?;
    Ok(mse(pred.view(), y_test.view())?.0)
}

/// Within-domain spread against between-domain spread of embeddings.
///
/// `intra` is the mean squared distance of a point to its domain centroid,
/// `inter` the mean squared distance over distinct pairs of centroids.
pub fn embedding_stats(embeddings: ArrayView2<f64>, labels: &[usize]) -> Result<EmbeddingStats> {
    let classes = check_inputs(&embeddings, labels)?;
    let dim = embeddings.ncols();
    let mut centroids = Array2::<f64>::zeros((classes, dim));
    let mut counts = vec![0usize; classes];
    for (row, &l) in embeddings.rows().into_iter().zip(labels) {
        let mut c = centroids.row_mut(l);
        c += &row;
        counts[l] += 1;
    }
    let present: Vec<usize> = (0..classes).filter(|&c| counts[c] > 0).collect();
    for &c in &present {
        centroids.row_mut(c).mapv_inplace(|v| v / counts[c] as f64);
    }
    let sq = |a: ndarray::ArrayView1<f64>, b: ndarray::ArrayView1<f64>| {
        a.iter().zip(b.iter()).map(|(x, y)| (x - y).powi(2)).sum::<f64>()
    };
    let intra = embeddings
        .rows()
        .into_iter()
        .zip(labels)
        .map(|(r, &l)| sq(r, centroids.row(l)))
        .sum::<f64>()
        / labels.len() as f64;
    let mut inter = 0.0;
    let mut pairs = 0usize;
    for (i, &a) in present.iter().enumerate() {
        for &b in &present[i + 1..] {
            inter += sq(centroids.row(a), centroids.row(b));
            pairs += 1;
        }
    }
    inter /= pairs as f64;
    let degenerate = inter == 0.0;
    let ratio = if degenerate { f64::INFINITY } else { intra / inter };
    Ok(EmbeddingStats {
        intra,
        inter,
        ratio,
        degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_hot(domains: usize, per: usize) -> (Array2<f64>, Vec<usize>) {
        let labels: Vec<usize> = (0..domains * per).map(|i| i % domains).collect();
        let z = Array2::from_shape_fn((labels.len(), domains), |(i, k)| (labels[i] == k) as u8 as f64);
        (z, labels)
    }

    #[test]
    fn one_hot_is_perfectly_separable() {
        let (z, labels) = one_hot(5, 20);
        assert_eq!(linear_probe(z.view(), &labels, 3).unwrap(), 1.0);
    }

    #[test]
    fn noise_probe_is_near_chance() {
        let mut mean = 0.0;
        for seed in 0..5 {
            let mut rng = Rng::new(100 + seed);
            let labels: Vec<usize> = (0..1000).map(|i| i % 10).collect();
            let z = Array2::from_shape_fn((1000, 4), |_| rng.normal());
            mean += linear_probe(z.view(), &labels, seed).unwrap() / 5.0;
        }
        assert!((mean - 0.1).abs() < 0.05, "{mean}");
    }

    #[test]
    fn shuffled_labels_drop_to_chance() {
        let (z, labels) = one_hot(10, 100);
        let mut shuffled = labels.clone();
        Rng::new(4).shuffle(&mut shuffled);
        let acc = linear_probe(z.view(), &shuffled, 1).unwrap();
        assert!(acc < 0.2, "{acc}");
    }

    #[test]
    fn single_domain_is_rejected() {
        let z = Array2::zeros((10, 2));
        assert!(matches!(linear_probe(z.view(), &[0; 10], 0), Err(Error::Degenerate(_))));
        assert!(embedding_stats(z.view(), &[2; 10]).is_err());
    }

    #[test]
    fn identity_embedding_reconstructs() {
        let mut rng = Rng::new(8);
        let xi = Array2::from_shape_fn((400, 2), |_| rng.uniform_in(-1.0, 1.0));
        let err = reconstruct_params(xi.view(), xi.view(), 0).unwrap();
        assert!(err < 1e-3, "{err}");
    }

    #[test]
    fn constant_embedding_gives_target_variance() {
        let mut rng = Rng::new(9);
        let xi = Array2::from_shape_fn((500, 1), |_| rng.uniform_in(-2.0, -0.5));
        let z = Array2::from_elem((500, 3), 0.7);
        let err = reconstruct_params(z.view(), xi.view(), 0).unwrap();
        assert!((err - 1.0).abs() < 0.2, "{err}");
    }

    #[test]
    fn centroid_embeddings_have_zero_intra() {
        let (z, labels) = one_hot(4, 6);
        let s = embedding_stats(z.view(), &labels).unwrap();
        assert_eq!(s.intra, 0.0);
        assert_eq!(s.inter, 2.0);
        assert_eq!(s.ratio, 0.0);
    }

    #[test]
    fn equal_centroids_are_degenerate() {
        let z = ndarray::array![[1.0], [-1.0], [1.0], [-1.0]];
        let s = embedding_stats(z.view(), &[0, 0, 1, 1]).unwrap();
        assert!(s.degenerate);
        assert!(s.ratio.is_infinite());
        assert_eq!(s.intra, 1.0);
    }
}
