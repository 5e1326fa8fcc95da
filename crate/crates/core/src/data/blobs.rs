use rand_distr::{Distribution, StandardNormal};

use super::{Dataset, Split};
use crate::nn::Matrix;
use crate::rng::{self, Stream};
use crate::{Error, Result};

/// Isotropic Gaussian clusters.
///
/// Class means are drawn uniformly on the unit sphere; each sample is its
/// class mean plus `spread`-scaled standard normal noise. Of the
/// `samples_per_class` points per class, the first `round(0.8·n)` go to the
/// train split and the rest to the test split.
pub fn generate_blobs(
    n_classes: usize,
    samples_per_class: usize,
    dims: usize,
    spread: f64,
    seed: u64,
) -> Result<(Dataset, Dataset)> {
    if n_classes == 0 || samples_per_class == 0 || dims == 0 {
        return Err(Error::Config("blob parameters must be positive".into()));
    }
    if !(spread >= 0.0 && spread.is_finite()) {
        return Err(Error::Config(format!("spread {spread} must be finite and >= 0")));
    }
    let mut rng = rng::stream(seed, 0, Stream::DataGen);
    let means: Vec<Vec<f64>> = (0..n_classes).map(|_| unit_vector(dims, &mut rng)).collect();

    let n_train = ((samples_per_class as f64) * 0.8).round() as usize;
    let mut train = (Vec::new(), Vec::new());
    let mut test = (Vec::new(), Vec::new());
    for (class, mean) in means.iter().enumerate() {
        for s in 0..samples_per_class {
            let point: Vec<f64> = mean
                .iter()
                .map(|&m| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    m + spread * z
                })
                .collect();
            let dest = if s < n_train { &mut train } else { &mut test };
            dest.0.extend(point);
            dest.1.push(class);
        }
    }
    let build = |(data, labels): (Vec<f64>, Vec<usize>), split| {
        let rows = labels.len();
        Dataset::new(Matrix::from_vec(rows, dims, data)?, labels, n_classes, split)
    };
    Ok((build(train, Split::Train)?, build(test, Split::Test)?))
}

fn unit_vector(dims: usize, rng: &mut rng::Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dims).map(|_| StandardNormal.sample(&mut *rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-9 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}
