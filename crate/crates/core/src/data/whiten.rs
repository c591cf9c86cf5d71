use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, Axis};

use super::Dataset;
use crate::{Error, Result};

/// Zero-phase (ZCA) whitening `x -> W (x - mean)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WhiteningTransform {
    pub mean: Array1<f64>,
    pub matrix: Array2<f64>,
    pub variance_floor: f64,
}

pub fn whiten_fit(data: &Dataset, variance_floor: f64) -> Result<WhiteningTransform> {
    if !(variance_floor > 0.0) {
        return Err(Error::Config("variance floor must be > 0".into()));
    }
    if data.is_empty() {
        return Err(Error::Data("cannot fit whitening on an empty dataset".into()));
    }
    let n = data.len() as f64;
    let mean = data.inputs.mean_axis(Axis(0)).expect("non-empty");
    let centered = &data.inputs - &mean;
    let cov = centered.t().dot(&centered) / n;
    if cov.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("covariance is not finite".into()));
    }
    let d = cov.nrows();
    let eig = SymmetricEigen::new(DMatrix::from_fn(d, d, |i, j| cov[(i, j)]));
    let scale = eig
        .eigenvalues
        .map(|l| 1.0 / (l.max(0.0) + variance_floor).sqrt());
    let u = &eig.eigenvectors;
    let w = u * DMatrix::from_diagonal(&scale) * u.transpose();
    Ok(WhiteningTransform {
        mean,
        matrix: Array2::from_shape_fn((d, d), |(i, j)| w[(i, j)]),
        variance_floor,
    })
}

pub fn whiten_apply(t: &WhiteningTransform, data: &Dataset) -> Result<Dataset> {
    if data.dim() != t.mean.len() {
        return Err(Error::Shape(format!(
            "whitening fitted on {} dims, data has {}",
            t.mean.len(),
            data.dim()
        )));
    }
    let x = (&data.inputs - &t.mean).dot(&t.matrix.t());
    Ok(Dataset {
        inputs: x,
        labels: data.labels.clone(),
        num_classes: data.num_classes,
        provenance: data.provenance.then(format!("whiten(floor={})", t.variance_floor)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Provenance;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn cov(x: &Array2<f64>) -> Array2<f64> {
        let m = x.mean_axis(Axis(0)).unwrap();
        let c = x - &m;
        c.t().dot(&c) / x.nrows() as f64
    }

    #[test]
    fn whitens_diagonal_gaussian() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = Normal::new(0.0, 1.0).unwrap();
        let x = Array2::from_shape_fn((4000, 2), |(_, j)| {
            let s: f64 = if j == 0 { 2.0f64.sqrt() } else { 0.5f64.sqrt() };
            s * n.sample(&mut rng) + 3.0
        });
        let d = Dataset::new(x, vec![0; 4000], 1, Provenance::new("gauss")).unwrap();
        let t = whiten_fit(&d, 1e-5).unwrap();
        let w = whiten_apply(&t, &d).unwrap();
        let c = cov(&w.inputs);
        let off = (&c - &Array2::<f64>::eye(2)).mapv(|v| v * v).sum().sqrt();
        assert!(off <= 1e-3, "{off}");
        for m in w.inputs.mean_axis(Axis(0)).unwrap() {
            assert!(m.abs() <= 1e-9);
        }
    }
}
