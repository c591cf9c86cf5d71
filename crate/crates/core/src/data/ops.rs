use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Dataset;
use crate::{Error, Result};

/// Replaces `round(p * n)` labels, chosen without replacement, by uniform
/// draws over all classes. A replacement may equal the original label, so
/// the expected corrupted fraction is `p * (C - 1) / C`.
pub fn randomize_labels(data: &Dataset, p: f64, seed: u64) -> Result<Dataset> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Config(format!("randomization fraction {p} outside [0, 1]")));
    }
    let n = data.len();
    let k = (p * n as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = index::sample(&mut rng, n, k).into_vec();
    chosen.sort_unstable();
    let mut labels = data.labels.clone();
    for i in chosen {
        labels[i] = rng.random_range(0..data.num_classes);
    }
    Ok(Dataset {
        inputs: data.inputs.clone(),
        labels,
        num_classes: data.num_classes,
        provenance: data.provenance.then(format!("randomize_labels(p={p}, seed={seed})")),
    })
}

/// Seeded random subset of `n` samples, kept in original order.
pub fn subsample(data: &Dataset, n: usize, seed: u64) -> Result<Dataset> {
    if n == 0 || n > data.len() {
        return Err(Error::Data(format!("cannot take {n} of {} samples", data.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = index::sample(&mut rng, data.len(), n).into_vec();
    idx.sort_unstable();
    Ok(data.select(&idx, format!("subsample(n={n}, seed={seed})")))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

/// Seeded class-stratified partition into train/val/test.
///
/// Within each class the samples are shuffled and cut at the rounded
/// cumulative fractions, so each split gets its stratified share to within
/// one sample per class.
pub fn split(data: &Dataset, fractions: [f64; 3], seed: u64) -> Result<Split> {
    if fractions.iter().any(|&f| !(f > 0.0)) || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "split fractions {fractions:?} must be positive and sum to 1"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut parts: [Vec<usize>; 3] = Default::default();
    for c in 0..data.num_classes {
        let mut idx: Vec<usize> = (0..data.len()).filter(|&i| data.labels[i] == c).collect();
        idx.shuffle(&mut rng);
        let m = idx.len() as f64;
        let a = (fractions[0] * m).round() as usize;
        let b = ((fractions[0] + fractions[1]) * m).round() as usize;
        parts[0].extend_from_slice(&idx[..a]);
        parts[1].extend_from_slice(&idx[a..b]);
        parts[2].extend_from_slice(&idx[b..]);
    }
    let names = ["train", "val", "test"];
    for (p, name) in parts.iter_mut().zip(names) {
        if p.is_empty() {
            return Err(Error::Data(format!("{name} split received no samples")));
        }
        p.sort_unstable();
    }
    let tag = |name: &str| format!("split({fractions:?}, seed={seed}).{name}");
    Ok(Split {
        train: data.select(&parts[0], tag("train")),
        val: data.select(&parts[1], tag("val")),
        test: data.select(&parts[2], tag("test")),
    })
}
