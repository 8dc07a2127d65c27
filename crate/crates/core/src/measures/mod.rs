//! Discrete probability measures on a compact box, ground costs, kernels,
//! synthetic generators, and CSV/PNG ingestion.

mod cost;
mod csv;
mod domain;
mod generators;
mod image_io;
mod kernel;

pub use cost::{CostKind, GroundCost};
pub use csv::{load_measure_csv, read_measure_csv, save_measure_csv, write_measure_csv};
pub use domain::DomainBox;
pub(crate) use generators::standard_normal;
pub use generators::{
    generate_ellipse, generate_ellipse_with_params, generate_gaussian, uniform_in_box,
    EllipseParams,
};
pub use image_io::{load_png_measure, measure_from_image};
pub use kernel::RbfKernel;

use ndarray::{Array1, Array2};
use thiserror::Error;

use crate::numeric::sum_compensated;

/// Errors from measure construction and ingestion.
#[derive(Debug, Error)]
pub enum MeasureError {
    #[error("measure must have at least one support point")]
    EmptySupport,
    #[error("weight {value} at index {index} is negative")]
    NegativeWeight { index: usize, value: f64 },
    #[error("all weights are zero")]
    ZeroMass,
    #[error("coordinates or weights contain NaN/Inf")]
    NonFinite,
    #[error("operation needs at least two support points")]
    SingleAtom,
    #[error("no pixel intensity exceeds the threshold")]
    AllBelowThreshold,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("support point {index} lies outside the declared domain box")]
    OutsideDomain { index: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("csv line {line}: {reason}")]
    Csv { line: usize, reason: String },
    #[error("png decode: {0}")]
    Png(String),
}

fn invalid(name: &'static str, reason: impl Into<String>) -> MeasureError {
    MeasureError::InvalidParameter {
        name,
        reason: reason.into(),
    }
}

/// A weighted point cloud: `N` support points in `R^d` with nonnegative
/// weights summing to one. The only measure representation in this crate.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    points: Array2<f64>,
    weights: Array1<f64>,
}

impl DiscreteMeasure {
    /// Build a measure from support points and optional weights.
    ///
    /// Weights default to uniform `1/N`; provided weights are renormalized to
    /// sum to one.
    pub fn new(points: Array2<f64>, weights: Option<Array1<f64>>) -> Result<Self, MeasureError> {
        let n = points.nrows();
        let d = points.ncols();
        if n == 0 {
            return Err(MeasureError::EmptySupport);
        }
        if d == 0 {
            return Err(invalid("points", "dimension must be at least 1"));
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(MeasureError::NonFinite);
        }
        let weights = match weights {
            None => Array1::from_elem(n, 1.0 / n as f64),
            Some(w) => {
                if w.len() != n {
                    return Err(MeasureError::DimensionMismatch {
                        expected: n,
                        got: w.len(),
                    });
                }
                if w.iter().any(|v| !v.is_finite()) {
                    return Err(MeasureError::NonFinite);
                }
                if let Some((index, &value)) = w.iter().enumerate().find(|(_, &v)| v < 0.0) {
                    return Err(MeasureError::NegativeWeight { index, value });
                }
                let total = sum_compensated(w.iter().copied());
                if total <= 0.0 {
                    return Err(MeasureError::ZeroMass);
                }
                // keep already-normalized weights untouched so construction
                // is idempotent and serialized measures round-trip exactly
                if (total - 1.0).abs() <= 1e-12 {
                    w
                } else {
                    w.mapv(|v| v / total)
                }
            }
        };
        Ok(Self { points, weights })
    }

    /// Uniform-weight measure on the given points.
    pub fn uniform(points: Array2<f64>) -> Result<Self, MeasureError> {
        Self::new(points, None)
    }

    /// Number of support points.
    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        false // N >= 1 by construction
    }

    /// Ambient dimension.
    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn points(&self) -> &Array2<f64> {
        &self.points
    }

    pub fn weights(&self) -> &Array1<f64> {
        &self.weights
    }

    /// Support point `i` as a contiguous slice.
    #[inline]
    pub fn point(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.points_flat()[i * d..(i + 1) * d]
    }

    /// Row-major flat view of the points.
    #[inline]
    pub(crate) fn points_flat(&self) -> &[f64] {
        self.points.as_slice().expect("points are standard layout")
    }

    /// Same weights on new support points (a push-forward).
    pub fn with_points(&self, points: Array2<f64>) -> Result<Self, MeasureError> {
        if points.dim() != self.points.dim() {
            return Err(MeasureError::DimensionMismatch {
                expected: self.len(),
                got: points.nrows(),
            });
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(MeasureError::NonFinite);
        }
        Ok(Self {
            points,
            weights: self.weights.clone(),
        })
    }

    /// Tight axis-aligned bounding box of the support.
    pub fn bounding_box(&self) -> DomainBox {
        DomainBox::hull_of(std::slice::from_ref(self), 0.0).expect("nonempty measure has a hull")
    }

    /// Weighted mean of the support points.
    pub fn mean(&self) -> Array1<f64> {
        let d = self.dim();
        let mut out = Array1::zeros(d);
        for i in 0..self.len() {
            let w = self.weights[i];
            for (k, x) in self.point(i).iter().enumerate() {
                out[k] += w * x;
            }
        }
        out
    }
}

/// Median of pairwise Euclidean distances between support points; the default
/// kernel bandwidth. Exact for `N <= 2000`, otherwise computed over a
/// fixed-seed subsample of 2000 points.
pub fn median_heuristic_bandwidth(measure: &DiscreteMeasure) -> Result<f64, MeasureError> {
    const SUBSAMPLE: usize = 2000;
    let n = measure.len();
    if n < 2 {
        return Err(MeasureError::SingleAtom);
    }
    let indices: Vec<usize> = if n <= SUBSAMPLE {
        (0..n).collect()
    } else {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x6d65_6469_616e);
        let mut idx = rand::seq::index::sample(&mut rng, n, SUBSAMPLE).into_vec();
        idx.sort_unstable();
        idx
    };
    let m = indices.len();
    let mut dists = Vec::with_capacity(m * (m - 1) / 2);
    for a in 0..m {
        for b in (a + 1)..m {
            let d2 = crate::numeric::sq_dist(measure.point(indices[a]), measure.point(indices[b]));
            dists.push(d2.sqrt());
        }
    }
    dists.sort_by(|a, b| a.partial_cmp(b).expect("finite distances"));
    Ok(dists[dists.len() / 2])
}
