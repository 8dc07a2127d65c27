//! Gaussian RBF kernel for the vector-valued RKHS of descent directions.

use super::{invalid, MeasureError};

/// `k(x, y) = exp(-||x - y||^2 / (2 sigma^2))`.
///
/// Bounded by one, Lipschitz with constant `exp(-1/2)/sigma`, and integrally
/// strictly positive definite, which is everything the descent step relies
/// on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RbfKernel {
    bandwidth: f64,
}

impl RbfKernel {
    pub fn new(bandwidth: f64) -> Result<Self, MeasureError> {
        if !(bandwidth.is_finite() && bandwidth > 0.0) {
            return Err(invalid(
                "bandwidth",
                format!("must be positive, got {bandwidth}"),
            ));
        }
        Ok(Self { bandwidth })
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    #[inline]
    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        let d2 = crate::numeric::sq_dist(x, y);
        (-d2 / (2.0 * self.bandwidth * self.bandwidth)).exp()
    }

    /// Sup of the kernel (`D_k`): one, attained on the diagonal.
    pub fn sup_value(&self) -> f64 {
        1.0
    }

    /// Lipschitz constant in one argument (`G_k`): the radial derivative
    /// `r/sigma^2 * exp(-r^2/(2 sigma^2))` peaks at `r = sigma`.
    pub fn lipschitz(&self) -> f64 {
        (-0.5f64).exp() / self.bandwidth
    }
}
