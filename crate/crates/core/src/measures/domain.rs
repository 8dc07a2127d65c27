//! Axis-aligned bounding box declaring the compact ground set.

use ndarray::Array1;

use super::{invalid, DiscreteMeasure, MeasureError};

/// The compact domain `X`: an axis-aligned box. Cost constants are derived
/// from its half-diagonal, and escaped particles are clamped back to it.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainBox {
    lo: Array1<f64>,
    hi: Array1<f64>,
}

impl DomainBox {
    pub fn new(lo: Array1<f64>, hi: Array1<f64>) -> Result<Self, MeasureError> {
        if lo.is_empty() {
            return Err(invalid("domain", "dimension must be at least 1"));
        }
        if lo.len() != hi.len() {
            return Err(MeasureError::DimensionMismatch {
                expected: lo.len(),
                got: hi.len(),
            });
        }
        if lo.iter().chain(hi.iter()).any(|v| !v.is_finite()) {
            return Err(MeasureError::NonFinite);
        }
        if lo.iter().zip(hi.iter()).any(|(a, b)| a > b) {
            return Err(invalid("domain", "lower corner exceeds upper corner"));
        }
        Ok(Self { lo, hi })
    }

    /// Cube `[-half_width, half_width]^d` centered at the origin.
    pub fn centered_cube(half_width: f64, dim: usize) -> Result<Self, MeasureError> {
        if !(half_width.is_finite() && half_width >= 0.0) {
            return Err(invalid("half_width", "must be finite and nonnegative"));
        }
        Self::new(
            Array1::from_elem(dim, -half_width),
            Array1::from_elem(dim, half_width),
        )
    }

    /// Smallest box containing every support point of `measures`, padded on
    /// each side by `pad_fraction` of the box diagonal.
    pub fn hull_of(measures: &[DiscreteMeasure], pad_fraction: f64) -> Result<Self, MeasureError> {
        let first = measures.first().ok_or(MeasureError::EmptySupport)?;
        let d = first.dim();
        let mut lo = Array1::from_elem(d, f64::INFINITY);
        let mut hi = Array1::from_elem(d, f64::NEG_INFINITY);
        for m in measures {
            if m.dim() != d {
                return Err(MeasureError::DimensionMismatch {
                    expected: d,
                    got: m.dim(),
                });
            }
            for i in 0..m.len() {
                for (k, &x) in m.point(i).iter().enumerate() {
                    lo[k] = lo[k].min(x);
                    hi[k] = hi[k].max(x);
                }
            }
        }
        if pad_fraction > 0.0 {
            let diag =
                crate::numeric::sq_dist(lo.as_slice().unwrap(), hi.as_slice().unwrap()).sqrt();
            let pad = (pad_fraction * diag).max(1e-9);
            lo.mapv_inplace(|v| v - pad);
            hi.mapv_inplace(|v| v + pad);
        }
        Self::new(lo, hi)
    }

    /// Smallest box containing both operands.
    pub fn union(&self, other: &DomainBox) -> Result<Self, MeasureError> {
        if self.dim() != other.dim() {
            return Err(MeasureError::DimensionMismatch {
                expected: self.dim(),
                got: other.dim(),
            });
        }
        let lo = ndarray::Zip::from(&self.lo)
            .and(&other.lo)
            .map_collect(|a, b| a.min(*b));
        let hi = ndarray::Zip::from(&self.hi)
            .and(&other.hi)
            .map_collect(|a, b| a.max(*b));
        Self::new(lo, hi)
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &Array1<f64> {
        &self.lo
    }

    pub fn hi(&self) -> &Array1<f64> {
        &self.hi
    }

    /// Radius of the bounding ball: half the box diagonal.
    pub fn radius(&self) -> f64 {
        0.5 * crate::numeric::sq_dist(self.lo.as_slice().unwrap(), self.hi.as_slice().unwrap())
            .sqrt()
    }

    pub fn contains(&self, point: &[f64], tol: f64) -> bool {
        point.len() == self.dim()
            && point
                .iter()
                .enumerate()
                .all(|(k, &x)| x >= self.lo[k] - tol && x <= self.hi[k] + tol)
    }

    /// Project a point onto the box, coordinate by coordinate.
    pub fn clamp_into(&self, point: &mut [f64]) {
        debug_assert_eq!(point.len(), self.dim());
        for (k, x) in point.iter_mut().enumerate() {
            *x = x.clamp(self.lo[k], self.hi[k]);
        }
    }
}
