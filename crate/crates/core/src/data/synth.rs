use std::f64::consts::{FRAC_1_SQRT_2, PI};

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Dataset, Provenance};

/// Half the band width of the V arms.
pub const VSHAPE_HALF_WIDTH: f64 = 0.15;
const VSHAPE_EXTENT: f64 = 2.0;

fn point_in_annulus(rng: &mut ChaCha8Rng, r0: f64, r1: f64) -> [f64; 2] {
    // Inverse-CDF radius gives a uniform density over the area.
    let r = (rng.random::<f64>() * (r1 * r1 - r0 * r0) + r0 * r0).sqrt();
    let t = rng.random::<f64>() * 2.0 * PI;
    [r * t.cos(), r * t.sin()]
}

/// Class 0 uniform in the unit disk, class 1 uniform in the annulus with
/// radii 1.5 and 2.5; labels alternate starting with 0.
pub fn gen_disk_ring(n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Array2::zeros((n, 2));
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % 2;
        let p = if c == 0 {
            point_in_annulus(&mut rng, 0.0, 1.0)
        } else {
            point_in_annulus(&mut rng, 1.5, 2.5)
        };
        x[(i, 0)] = p[0];
        x[(i, 1)] = p[1];
        labels.push(c);
    }
    Dataset::new(x, labels, 2, Provenance::new(format!("disk_ring(n={n}, seed={seed})"))).expect("labels in range")
}

fn dist_to_segment(p: [f64; 2], d: [f64; 2], len: f64) -> f64 {
    let t = (p[0] * d[0] + p[1] * d[1]).clamp(0.0, len);
    ((p[0] - t * d[0]).powi(2) + (p[1] - t * d[1]).powi(2)).sqrt()
}

/// Whether `p` lies in the V: two arms leaving the origin at +-45 degrees
/// from the upward vertical, each a band of width 0.3.
pub fn in_vshape_band(p: [f64; 2]) -> bool {
    let len = VSHAPE_EXTENT * std::f64::consts::SQRT_2;
    let right = [FRAC_1_SQRT_2, FRAC_1_SQRT_2];
    let left = [-FRAC_1_SQRT_2, FRAC_1_SQRT_2];
    dist_to_segment(p, right, len).min(dist_to_segment(p, left, len)) <= VSHAPE_HALF_WIDTH
}

/// Balanced two-class V-shape in `[-2, 2]^2`: class 1 uniform within the V
/// band, class 0 uniform over the rest of the square. Labels alternate
/// starting with 0.
pub fn gen_vshape(n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Array2::zeros((n, 2));
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % 2;
        let p = loop {
            let p = [
                rng.random_range(-VSHAPE_EXTENT..VSHAPE_EXTENT),
                rng.random_range(-VSHAPE_EXTENT..VSHAPE_EXTENT),
            ];
            if in_vshape_band(p) == (c == 1) {
                break p;
            }
        };
        x[(i, 0)] = p[0];
        x[(i, 1)] = p[1];
        labels.push(c);
    }
    Dataset::new(x, labels, 2, Provenance::new(format!("vshape(n={n}, seed={seed})"))).expect("labels in range")
}
