use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::net::{argmax, Network};
use crate::{Error, Result, Scalar};

/// Regular `nx x ny` lattice over `[x0, x1] x [y0, y1]` (cell centres at the
/// end points included).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
    pub nx: usize,
    pub ny: usize,
}

impl GridSpec {
    pub fn square(lo: f64, hi: f64, n: usize) -> Self {
        GridSpec {
            x_range: (lo, hi),
            y_range: (lo, hi),
            nx: n,
            ny: n,
        }
    }

    pub fn point(&self, ix: usize, iy: usize) -> [f64; 2] {
        let t = |i: usize, n: usize, (a, b): (f64, f64)| {
            if n <= 1 {
                (a + b) / 2.0
            } else {
                a + (b - a) * i as f64 / (n - 1) as f64
            }
        };
        [t(ix, self.nx, self.x_range), t(iy, self.ny, self.y_range)]
    }
}

/// Labels and logits on a lattice; row `iy`, column `ix`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryGrid {
    pub grid: GridSpec,
    pub labels: Array2<usize>,
    /// One `[ny, nx]` grid per logit.
    pub logits: Vec<Array2<f64>>,
}

impl BoundaryGrid {
    pub fn positive_cells(&self, class: usize) -> usize {
        self.labels.iter().filter(|&&l| l == class).count()
    }
}

pub fn boundary_extract<S: Scalar>(model: &Network<S>, grid: GridSpec) -> Result<BoundaryGrid> {
    if model.spec().input_len() != 2 {
        return Err(Error::Shape(format!(
            "boundary maps need 2-D inputs, model takes {}",
            model.spec().input_len()
        )));
    }
    if grid.nx == 0 || grid.ny == 0 {
        return Err(Error::Config("grid must have at least one cell per axis".into()));
    }
    let n = grid.nx * grid.ny;
    let x = Array2::from_shape_fn((n, 2), |(i, j)| S::of(grid.point(i % grid.nx, i / grid.nx)[j]));
    let z = model.logits(x.view())?;
    let k = z.ncols();
    let mut logits = vec![Array2::zeros((grid.ny, grid.nx)); k];
    let mut labels = Array2::zeros((grid.ny, grid.nx));
    for (i, row) in z.rows().into_iter().enumerate() {
        let (iy, ix) = (i / grid.nx, i % grid.nx);
        for c in 0..k {
            logits[c][(iy, ix)] = row[c].as_f64();
        }
        labels[(iy, ix)] = if k == 1 {
            usize::from(row[0] >= S::zero())
        } else {
            argmax(row)
        };
    }
    Ok(BoundaryGrid { grid, labels, logits })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MidpointResult {
    pub pairs_tested: usize,
    /// First pair `((iy, ix), (iy, ix))` whose midpoint leaves the region.
    pub counterexample: Option<((usize, usize), (usize, usize))>,
}

impl MidpointResult {
    pub fn convex(&self) -> bool {
        self.counterexample.is_none()
    }
}

/// Lattice convexity test for the cells labelled `class`: for every pair of
/// such cells whose midpoint is itself a lattice cell (both index offsets
/// even), the midpoint must carry the same label.
///
/// `stride` subsamples the cells to bound the quadratic pair count.
pub fn midpoint_convexity(labels: &Array2<usize>, class: usize, stride: usize) -> MidpointResult {
    let stride = stride.max(1);
    let (ny, nx) = labels.dim();
    let cells: Vec<(usize, usize)> = (0..ny)
        .step_by(stride)
        .flat_map(|y| (0..nx).step_by(stride).map(move |x| (y, x)))
        .filter(|&(y, x)| labels[(y, x)] == class)
        .collect();
    let mut tested = 0;
    for (a, &p) in cells.iter().enumerate() {
        for &q in &cells[a + 1..] {
            if (p.0 + q.0) % 2 != 0 || (p.1 + q.1) % 2 != 0 {
                continue;
            }
            tested += 1;
            let m = ((p.0 + q.0) / 2, (p.1 + q.1) / 2);
            if labels[m] != class {
                return MidpointResult {
                    pairs_tested: tested,
                    counterexample: Some((p, q)),
                };
            }
        }
    }
    MidpointResult {
        pairs_tested: tested,
        counterexample: None,
    }
}
