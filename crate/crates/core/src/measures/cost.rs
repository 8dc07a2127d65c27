//! Ground costs with the bounds the descent analysis needs.

use super::DomainBox;

/// Available ground costs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CostKind {
    /// `c(x, y) = ||x - y||^2 / 2`. Smooth; the default for descent.
    SqEuclideanHalf,
    /// `c(x, y) = ||x - y||`. Gradient is singular at `x = y`, so this cost
    /// is offered for divergence evaluation only, not for descent.
    Euclidean,
}

/// A ground cost together with the declared compact domain. The analytic
/// constants (sup value, gradient bound, gradient smoothness) are derived
/// from the domain's bounding-ball radius so they are always consistent with
/// the data.
#[derive(Debug, Clone)]
pub struct GroundCost {
    kind: CostKind,
    domain: DomainBox,
}

impl GroundCost {
    pub fn new(kind: CostKind, domain: DomainBox) -> Self {
        Self { kind, domain }
    }

    pub fn kind(&self) -> CostKind {
        self.kind
    }

    pub fn domain(&self) -> &DomainBox {
        &self.domain
    }

    /// Radius `R` of the ball bounding the domain box.
    pub fn domain_radius(&self) -> f64 {
        self.domain.radius()
    }

    #[inline]
    pub fn value(&self, x: &[f64], y: &[f64]) -> f64 {
        let d2 = crate::numeric::sq_dist(x, y);
        match self.kind {
            CostKind::SqEuclideanHalf => 0.5 * d2,
            CostKind::Euclidean => d2.sqrt(),
        }
    }

    /// Gradient with respect to the first argument, written into `out`.
    /// For the Euclidean cost the (sub)gradient at `x = y` is zero.
    #[inline]
    pub fn grad1_into(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), y.len());
        debug_assert_eq!(x.len(), out.len());
        match self.kind {
            CostKind::SqEuclideanHalf => {
                for k in 0..x.len() {
                    out[k] = x[k] - y[k];
                }
            }
            CostKind::Euclidean => {
                let norm = crate::numeric::sq_dist(x, y).sqrt();
                if norm == 0.0 {
                    out.fill(0.0);
                } else {
                    for k in 0..x.len() {
                        out[k] = (x[k] - y[k]) / norm;
                    }
                }
            }
        }
    }

    /// Sup of `c` over the domain (`M_c`).
    pub fn sup_value(&self) -> f64 {
        let r = self.domain_radius();
        match self.kind {
            CostKind::SqEuclideanHalf => 2.0 * r * r,
            CostKind::Euclidean => 2.0 * r,
        }
    }

    /// Lipschitz bound on `c` in its first argument (`G_c`); also a sup bound
    /// on the gradient norm.
    pub fn grad_sup(&self) -> f64 {
        match self.kind {
            CostKind::SqEuclideanHalf => 2.0 * self.domain_radius(),
            CostKind::Euclidean => 1.0,
        }
    }

    /// Lipschitz bound on the gradient (`L_c`); infinite for the Euclidean
    /// cost, which is why descent rejects it.
    pub fn grad_lipschitz(&self) -> f64 {
        match self.kind {
            CostKind::SqEuclideanHalf => 1.0,
            CostKind::Euclidean => f64::INFINITY,
        }
    }
}
