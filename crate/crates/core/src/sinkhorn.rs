//! Entropic optimal transport on discrete measures: log-domain potential
//! solvers, transport-cost and divergence values, and potential gradients.
//!
//! Everything goes through the soft c-transform
//! `A(f, a)(y) = -gamma * log sum_j w_j exp((f_j - c(x_j, y)) / gamma)`,
//! evaluated with a shifted log-sum-exp so nothing overflows even for small
//! `gamma`. The exp matrix of the primal problem is never formed.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::measures::{DiscreteMeasure, GroundCost};
use crate::numeric::{dot_compensated, sup_distance, CompensatedSum, LogSumExp};
use crate::par;

/// Solver settings. `gamma` is the entropic regularization; convergence is
/// declared when the sup-norm change of the first potential over one full
/// sweep drops below `tolerance`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SinkhornConfig {
    pub gamma: f64,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    #[serde(default = "default_damping")]
    pub symmetric_damping: f64,
}

fn default_tolerance() -> f64 {
    1e-9
}

fn default_max_iterations() -> usize {
    100_000
}

fn default_damping() -> f64 {
    0.5
}

impl SinkhornConfig {
    pub fn new(gamma: f64) -> Self {
        Self {
            gamma,
            tolerance: default_tolerance(),
            max_iterations: default_max_iterations(),
            symmetric_damping: default_damping(),
        }
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self
    }

    pub fn validate(&self) -> Result<(), SolveError> {
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(SolveError::InvalidConfig {
                reason: format!("gamma must be positive, got {}", self.gamma),
            });
        }
        if !(self.tolerance.is_finite() && self.tolerance > 0.0) {
            return Err(SolveError::InvalidConfig {
                reason: format!("tolerance must be positive, got {}", self.tolerance),
            });
        }
        if self.max_iterations == 0 {
            return Err(SolveError::InvalidConfig {
                reason: "max_iterations must be at least 1".into(),
            });
        }
        if !(self.symmetric_damping > 0.0 && self.symmetric_damping <= 1.0) {
            return Err(SolveError::InvalidConfig {
                reason: format!(
                    "symmetric_damping must lie in (0, 1], got {}",
                    self.symmetric_damping
                ),
            });
        }
        Ok(())
    }
}

/// Converged dual potentials: `f` on the support of the first measure, `g`
/// on the support of the second, with `f[0] = 0` after anchoring.
#[derive(Debug, Clone, PartialEq)]
pub struct SinkhornPotentials {
    pub f: Array1<f64>,
    pub g: Array1<f64>,
    pub gamma: f64,
    pub iterations_used: usize,
    /// Sup-norm change of `f` over the last sweep (the convergence metric).
    pub residual: f64,
}

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("no convergence after {iterations} sweeps (residual {residual:.3e})")]
    MaxIterations {
        iterations: usize,
        residual: f64,
        /// Last iterate, anchored like a converged result.
        last: Box<SinkhornPotentials>,
    },
    #[error("potentials diverged to NaN/Inf")]
    NonFinite,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid solver configuration: {reason}")]
    InvalidConfig { reason: String },
}

/// `t_j = f_j / gamma + ln w_j`, the source-side quantity every soft
/// c-transform evaluation consumes. Weight-zero atoms map to `-inf` and drop
/// out of the log-sum-exp.
fn shifted_potential(f: &[f64], weights: &[f64], gamma: f64) -> Vec<f64> {
    f.iter()
        .zip(weights)
        .map(|(fj, wj)| fj / gamma + wj.ln())
        .collect()
}

/// Evaluate the soft c-transform at each query point. `shifted` and
/// `src_points` describe the integrating measure; one output slot per query.
fn apply_map_into(
    shifted: &[f64],
    src_points: &[f64],
    dim: usize,
    queries: &[f64],
    cost: &GroundCost,
    gamma: f64,
    out: &mut [f64],
) {
    debug_assert_eq!(src_points.len(), shifted.len() * dim);
    debug_assert_eq!(queries.len(), out.len() * dim);
    par::fill_indexed(out, |m| {
        let q = &queries[m * dim..(m + 1) * dim];
        let mut lse = LogSumExp::new();
        for (j, &t) in shifted.iter().enumerate() {
            let x = &src_points[j * dim..(j + 1) * dim];
            lse.push(t - cost.value(x, q) / gamma);
        }
        -gamma * lse.value()
    });
}

/// Soft c-transform `A(f, alpha)` of potential values `f` on the support of
/// `alpha`, evaluated at the rows of `query_points`.
pub fn sinkhorn_map(
    f: &Array1<f64>,
    alpha: &DiscreteMeasure,
    query_points: &Array2<f64>,
    cost: &GroundCost,
    gamma: f64,
) -> Result<Array1<f64>, SolveError> {
    if f.len() != alpha.len() {
        return Err(SolveError::DimensionMismatch {
            expected: alpha.len(),
            got: f.len(),
        });
    }
    if query_points.ncols() != alpha.dim() {
        return Err(SolveError::DimensionMismatch {
            expected: alpha.dim(),
            got: query_points.ncols(),
        });
    }
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(SolveError::InvalidConfig {
            reason: format!("gamma must be positive, got {gamma}"),
        });
    }
    if f.iter().any(|v| !v.is_finite()) || query_points.iter().any(|v| !v.is_finite()) {
        return Err(SolveError::NonFinite);
    }
    let shifted = shifted_potential(
        f.as_slice().expect("standard layout"),
        alpha.weights().as_slice().expect("standard layout"),
        gamma,
    );
    let mut out = vec![0.0; query_points.nrows()];
    apply_map_into(
        &shifted,
        alpha.points_flat(),
        alpha.dim(),
        query_points.as_slice().expect("standard layout"),
        cost,
        gamma,
        &mut out,
    );
    Ok(Array1::from_vec(out))
}

/// Alternating log-domain fixed point for the dual potentials of the
/// entropic transport between `alpha` and `beta`.
pub fn solve_potentials(
    alpha: &DiscreteMeasure,
    beta: &DiscreteMeasure,
    cost: &GroundCost,
    cfg: &SinkhornConfig,
) -> Result<SinkhornPotentials, SolveError> {
    solve_potentials_warm(alpha, beta, cost, cfg, None)
}

/// [`solve_potentials`] seeded with a previous solution; the supports are
/// expected to have moved only slightly since `warm` was computed.
pub fn solve_potentials_warm(
    alpha: &DiscreteMeasure,
    beta: &DiscreteMeasure,
    cost: &GroundCost,
    cfg: &SinkhornConfig,
    warm: Option<&SinkhornPotentials>,
) -> Result<SinkhornPotentials, SolveError> {
    cfg.validate()?;
    if alpha.dim() != beta.dim() {
        return Err(SolveError::DimensionMismatch {
            expected: alpha.dim(),
            got: beta.dim(),
        });
    }
    let n = alpha.len();
    let m = beta.len();
    let gamma = cfg.gamma;

    // f and g seed independently; after a support change only one side may
    // still fit (e.g. a grown first support with an unchanged second).
    let mut f = match warm {
        Some(w) if w.f.len() == n => w.f.to_vec(),
        _ => vec![0.0; n],
    };
    let mut g = match warm {
        Some(w) if w.g.len() == m => w.g.to_vec(),
        _ => vec![0.0; m],
    };

    let w_alpha = alpha.weights().as_slice().expect("standard layout");
    let w_beta = beta.weights().as_slice().expect("standard layout");
    let pts_alpha = alpha.points_flat();
    let pts_beta = beta.points_flat();
    let d = alpha.dim();

    let mut f_new = vec![0.0; n];
    let mut delta = f64::INFINITY;
    let mut converged_after = None;

    for sweep in 1..=cfg.max_iterations {
        let shifted_g = shifted_potential(&g, w_beta, gamma);
        apply_map_into(&shifted_g, pts_beta, d, pts_alpha, cost, gamma, &mut f_new);
        delta = sup_distance(&f_new, &f);
        std::mem::swap(&mut f, &mut f_new);

        let shifted_f = shifted_potential(&f, w_alpha, gamma);
        apply_map_into(&shifted_f, pts_alpha, d, pts_beta, cost, gamma, &mut g);

        if !delta.is_finite() {
            return Err(SolveError::NonFinite);
        }
        if delta <= cfg.tolerance {
            converged_after = Some(sweep);
            break;
        }
    }

    // anchor: zero the potential at the first support point of alpha
    let shift = f[0];
    for v in &mut f {
        *v -= shift;
    }
    for v in &mut g {
        *v += shift;
    }
    if f.iter().chain(g.iter()).any(|v| !v.is_finite()) {
        return Err(SolveError::NonFinite);
    }

    let pot = SinkhornPotentials {
        f: Array1::from_vec(f),
        g: Array1::from_vec(g),
        gamma,
        iterations_used: converged_after.unwrap_or(cfg.max_iterations),
        residual: delta,
    };
    match converged_after {
        Some(_) => Ok(pot),
        None => Err(SolveError::MaxIterations {
            iterations: cfg.max_iterations,
            residual: delta,
            last: Box::new(pot),
        }),
    }
}

/// Damped fixed point `f <- (1 - lambda) f + lambda A(f, alpha)` for the
/// self-transport potential; returns it as both `f` and `g`. The undamped
/// alternation can oscillate, the damped one cannot. No anchor shift: the
/// symmetric fixed point is already unique.
pub fn solve_symmetric_potential(
    alpha: &DiscreteMeasure,
    cost: &GroundCost,
    cfg: &SinkhornConfig,
) -> Result<SinkhornPotentials, SolveError> {
    solve_symmetric_potential_warm(alpha, cost, cfg, None)
}

pub fn solve_symmetric_potential_warm(
    alpha: &DiscreteMeasure,
    cost: &GroundCost,
    cfg: &SinkhornConfig,
    warm: Option<&SinkhornPotentials>,
) -> Result<SinkhornPotentials, SolveError> {
    cfg.validate()?;
    let n = alpha.len();
    let gamma = cfg.gamma;
    let lambda = cfg.symmetric_damping;

    let mut f = match warm {
        Some(w) if w.f.len() == n => w.f.to_vec(),
        _ => vec![0.0; n],
    };
    let weights = alpha.weights().as_slice().expect("standard layout");
    let pts = alpha.points_flat();
    let d = alpha.dim();

    let mut mapped = vec![0.0; n];
    let mut residual = f64::INFINITY;
    for sweep in 1..=cfg.max_iterations {
        let shifted = shifted_potential(&f, weights, gamma);
        apply_map_into(&shifted, pts, d, pts, cost, gamma, &mut mapped);
        residual = sup_distance(&mapped, &f);
        if !residual.is_finite() {
            return Err(SolveError::NonFinite);
        }
        if residual <= cfg.tolerance {
            let f = Array1::from_vec(f);
            return Ok(SinkhornPotentials {
                g: f.clone(),
                f,
                gamma,
                iterations_used: sweep,
                residual,
            });
        }
        for (fi, ai) in f.iter_mut().zip(&mapped) {
            *fi = (1.0 - lambda) * *fi + lambda * ai;
        }
    }
    let f = Array1::from_vec(f);
    Err(SolveError::MaxIterations {
        iterations: cfg.max_iterations,
        residual,
        last: Box::new(SinkhornPotentials {
            g: f.clone(),
            f,
            gamma,
            iterations_used: cfg.max_iterations,
            residual,
        }),
    })
}

/// Dual transport value `<f, alpha> + <g, beta>` of converged potentials.
/// At optimality the exponential term of the dual objective integrates to
/// one, so this is the whole value.
pub fn dual_value(
    pot: &SinkhornPotentials,
    alpha: &DiscreteMeasure,
    beta: &DiscreteMeasure,
) -> f64 {
    dot_compensated(
        alpha.weights().as_slice().expect("standard layout"),
        pot.f.as_slice().expect("standard layout"),
    ) + dot_compensated(
        beta.weights().as_slice().expect("standard layout"),
        pot.g.as_slice().expect("standard layout"),
    )
}

/// Entropy-regularized transport cost between two measures.
pub fn entropic_ot(
    alpha: &DiscreteMeasure,
    beta: &DiscreteMeasure,
    cost: &GroundCost,
    cfg: &SinkhornConfig,
) -> Result<f64, SolveError> {
    let pot = solve_potentials(alpha, beta, cost, cfg)?;
    Ok(dual_value(&pot, alpha, beta))
}

/// Self-transport cost `OT(alpha, alpha)` via the symmetric solver.
pub fn entropic_ot_self(
    alpha: &DiscreteMeasure,
    cost: &GroundCost,
    cfg: &SinkhornConfig,
) -> Result<f64, SolveError> {
    let pot = solve_symmetric_potential(alpha, cost, cfg)?;
    Ok(dual_value(&pot, alpha, alpha))
}

/// Sinkhorn divergence: the transport cost debiased by half of each
/// self-transport term. Nonnegative, and zero iff the measures coincide.
pub fn sinkhorn_divergence(
    alpha: &DiscreteMeasure,
    beta: &DiscreteMeasure,
    cost: &GroundCost,
    cfg: &SinkhornConfig,
) -> Result<f64, SolveError> {
    let cross = entropic_ot(alpha, beta, cost, cfg)?;
    let self_a = entropic_ot_self(alpha, cost, cfg)?;
    let self_b = entropic_ot_self(beta, cost, cfg)?;
    Ok(cross - 0.5 * self_a - 0.5 * self_b)
}

/// Gradient of the dual potential at every support point of `alpha`,
/// computed as the exact weighted sum
/// `grad f(x_i) = sum_j w_j h(x_i, y_j) grad_1 c(x_i, y_j)` over the support
/// of `beta`, where `h = exp((f(x) + A(f, alpha)(y) - c(x, y)) / gamma)`.
/// The second-argument potential is recomputed as `A(f, alpha)` on the
/// support of `beta` so `h` is self-consistent.
pub fn potential_gradient(
    pot: &SinkhornPotentials,
    alpha: &DiscreteMeasure,
    beta: &DiscreteMeasure,
    cost: &GroundCost,
) -> Result<Array2<f64>, SolveError> {
    let all: Vec<usize> = (0..beta.len()).collect();
    gradient_over_targets(pot, alpha, beta, cost, &all, false)
}

/// Monte-Carlo variant of [`potential_gradient`]: the expectation over
/// `beta` is replaced by the empirical mean over `samples`, indices drawn
/// i.i.d. from `beta`'s weights by the caller.
pub fn potential_gradient_sampled(
    pot: &SinkhornPotentials,
    alpha: &DiscreteMeasure,
    beta: &DiscreteMeasure,
    cost: &GroundCost,
    samples: &[usize],
) -> Result<Array2<f64>, SolveError> {
    if samples.is_empty() {
        return Err(SolveError::InvalidConfig {
            reason: "empty minibatch".into(),
        });
    }
    if let Some(&bad) = samples.iter().find(|&&j| j >= beta.len()) {
        return Err(SolveError::DimensionMismatch {
            expected: beta.len(),
            got: bad,
        });
    }
    gradient_over_targets(pot, alpha, beta, cost, samples, true)
}

fn gradient_over_targets(
    pot: &SinkhornPotentials,
    alpha: &DiscreteMeasure,
    beta: &DiscreteMeasure,
    cost: &GroundCost,
    targets: &[usize],
    uniform_weights: bool,
) -> Result<Array2<f64>, SolveError> {
    let n = alpha.len();
    let d = alpha.dim();
    if pot.f.len() != n {
        return Err(SolveError::DimensionMismatch {
            expected: n,
            got: pot.f.len(),
        });
    }
    if pot.g.len() != beta.len() {
        return Err(SolveError::DimensionMismatch {
            expected: beta.len(),
            got: pot.g.len(),
        });
    }
    if alpha.dim() != beta.dim() {
        return Err(SolveError::DimensionMismatch {
            expected: alpha.dim(),
            got: beta.dim(),
        });
    }
    let gamma = pot.gamma;

    // gather the target points and their integration weights
    let mut tgt_points = Vec::with_capacity(targets.len() * d);
    let mut tgt_weights = Vec::with_capacity(targets.len());
    for &j in targets {
        tgt_points.extend_from_slice(beta.point(j));
        tgt_weights.push(if uniform_weights {
            1.0 / targets.len() as f64
        } else {
            beta.weights()[j]
        });
    }

    // self-consistent second potential: A(f, alpha) at the target points
    let shifted_f = shifted_potential(
        pot.f.as_slice().expect("standard layout"),
        alpha.weights().as_slice().expect("standard layout"),
        gamma,
    );
    let mut g_tilde = vec![0.0; targets.len()];
    apply_map_into(
        &shifted_f,
        alpha.points_flat(),
        d,
        &tgt_points,
        cost,
        gamma,
        &mut g_tilde,
    );

    let f = pot.f.as_slice().expect("standard layout");
    let pts_alpha = alpha.points_flat();
    let mut out = vec![0.0; n * d];
    par::for_each_row(&mut out, d, |i, row| {
        let xi = &pts_alpha[i * d..(i + 1) * d];
        let fi = f[i];
        let mut acc = vec![CompensatedSum::new(); d];
        let mut grad = vec![0.0; d];
        for (t, &wj) in tgt_weights.iter().enumerate() {
            if wj == 0.0 {
                continue;
            }
            let yj = &tgt_points[t * d..(t + 1) * d];
            let c = cost.value(xi, yj);
            let h = ((fi + g_tilde[t] - c) / gamma).exp();
            cost.grad1_into(xi, yj, &mut grad);
            for k in 0..d {
                acc[k].add(wj * h * grad[k]);
            }
        }
        for k in 0..d {
            row[k] = acc[k].value();
        }
    });
    if out.iter().any(|v| !v.is_finite()) {
        return Err(SolveError::NonFinite);
    }
    Ok(Array2::from_shape_vec((n, d), out).expect("consistent shape"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::{CostKind, DomainBox};
    use ndarray::array;

    fn cost_r1(radius: f64) -> GroundCost {
        GroundCost::new(
            CostKind::SqEuclideanHalf,
            DomainBox::new(array![-radius], array![radius]).unwrap(),
        )
    }

    fn dirac(x: &[f64]) -> DiscreteMeasure {
        DiscreteMeasure::uniform(Array2::from_shape_vec((1, x.len()), x.to_vec()).unwrap()).unwrap()
    }

    #[test]
    fn map_single_atom_is_cost() {
        let alpha = dirac(&[0.25]);
        let cost = cost_r1(2.0);
        let queries = array![[1.0], [-0.5], [0.25]];
        let out = sinkhorn_map(&array![0.0], &alpha, &queries, &cost, 0.7).unwrap();
        for (m, q) in queries.rows().into_iter().enumerate() {
            let expect = cost.value(&[0.25], q.as_slice().unwrap());
            assert!((out[m] - expect).abs() < 1e-14);
        }
    }

    #[test]
    fn map_constant_shift_moves_output_exactly() {
        let alpha = DiscreteMeasure::uniform(array![[0.0], [1.0], [0.3]]).unwrap();
        let cost = cost_r1(2.0);
        let queries = array![[0.2], [0.9]];
        let f = array![0.1, -0.4, 0.7];
        let shift = 3.25;
        let base = sinkhorn_map(&f, &alpha, &queries, &cost, 0.5).unwrap();
        let shifted = sinkhorn_map(&f.mapv(|v| v + shift), &alpha, &queries, &cost, 0.5).unwrap();
        for m in 0..queries.nrows() {
            assert!((shifted[m] - (base[m] - shift)).abs() < 1e-12);
        }
    }

    #[test]
    fn map_two_term_hand_value() {
        // uniform on {0, 1}, f = 0, gamma = 1, query 0:
        // -ln((exp(-c(0,0)) + exp(-c(1,0))) / 2) = -ln((1 + e^{-1/2}) / 2)
        let alpha = DiscreteMeasure::uniform(array![[0.0], [1.0]]).unwrap();
        let cost = cost_r1(2.0);
        let out = sinkhorn_map(&array![0.0, 0.0], &alpha, &array![[0.0]], &cost, 1.0).unwrap();
        let expect = -((1.0 + (-0.5f64).exp()) / 2.0).ln();
        assert!((out[0] - expect).abs() < 1e-14, "{} vs {expect}", out[0]);
    }

    #[test]
    fn map_survives_tiny_gamma() {
        let alpha = DiscreteMeasure::uniform(array![[0.0], [1.0]]).unwrap();
        let cost = cost_r1(2.0);
        let out = sinkhorn_map(&array![0.0, 0.0], &alpha, &array![[0.4]], &cost, 1e-4).unwrap();
        assert!(out[0].is_finite());
        // at gamma -> 0 the soft transform approaches the hard minimum
        let hard = 0.5 * (0.4f64).powi(2);
        assert!((out[0] - hard).abs() < 1e-3);
    }

    #[test]
    fn map_rejects_non_finite_input() {
        let alpha = dirac(&[0.0]);
        let cost = cost_r1(1.0);
        let err = sinkhorn_map(&array![f64::NAN], &alpha, &array![[0.0]], &cost, 1.0).unwrap_err();
        assert!(matches!(err, SolveError::NonFinite));
    }

    #[test]
    fn solve_two_diracs_forced_by_optimality() {
        let alpha = dirac(&[0.0]);
        let beta = dirac(&[1.0]);
        let cost = cost_r1(2.0);
        let cfg = SinkhornConfig::new(0.8);
        let pot = solve_potentials(&alpha, &beta, &cost, &cfg).unwrap();
        assert_eq!(pot.f[0], 0.0); // anchored
        assert!((pot.g[0] - 0.5).abs() < 1e-9); // c(0,1) = 1/2
        assert!(pot.residual <= cfg.tolerance);
    }

    #[test]
    fn solve_fixed_point_residual_tight() {
        let alpha = DiscreteMeasure::uniform(array![[0.0], [1.0]]).unwrap();
        let beta = DiscreteMeasure::uniform(array![[0.0], [1.0]]).unwrap();
        let cost = cost_r1(2.0);
        let cfg = SinkhornConfig::new(1.0).with_tolerance(1e-10);
        let pot = solve_potentials(&alpha, &beta, &cost, &cfg).unwrap();
        // optimality residual: f vs A(g, beta) on supp(alpha), and symmetrically
        let f_should = sinkhorn_map(&pot.g, &beta, &alpha.points().to_owned(), &cost, 1.0).unwrap();
        let g_should = sinkhorn_map(&pot.f, &alpha, &beta.points().to_owned(), &cost, 1.0).unwrap();
        for i in 0..2 {
            assert!((pot.f[i] - f_should[i]).abs() <= 1e-10);
            assert!((pot.g[i] - g_should[i]).abs() <= 2.0 * 1e-10);
        }
    }

    #[test]
    fn symmetric_single_atom_is_zero() {
        let alpha = dirac(&[0.7]);
        let cost = cost_r1(2.0);
        let pot = solve_symmetric_potential(&alpha, &cost, &SinkhornConfig::new(1.0)).unwrap();
        assert!(pot.f[0].abs() < 1e-12);
    }

    #[test]
    fn symmetric_translation_invariant() {
        let cfg = SinkhornConfig::new(0.5).with_tolerance(1e-11);
        let cost = cost_r1(4.0);
        let base = DiscreteMeasure::uniform(array![[0.0], [1.0], [0.4]]).unwrap();
        let moved = DiscreteMeasure::uniform(array![[1.3], [2.3], [1.7]]).unwrap();
        let p0 = solve_symmetric_potential(&base, &cost, &cfg).unwrap();
        let p1 = solve_symmetric_potential(&moved, &cost, &cfg).unwrap();
        for i in 0..3 {
            assert!((p0.f[i] - p1.f[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn symmetric_residual_tight_on_two_points() {
        let alpha = DiscreteMeasure::uniform(array![[0.0], [1.0]]).unwrap();
        let cost = cost_r1(2.0);
        let cfg = SinkhornConfig::new(1.0).with_tolerance(1e-10);
        let pot = solve_symmetric_potential(&alpha, &cost, &cfg).unwrap();
        let mapped = sinkhorn_map(&pot.f, &alpha, &alpha.points().to_owned(), &cost, 1.0).unwrap();
        assert!(sup_distance(mapped.as_slice().unwrap(), pot.f.as_slice().unwrap()) <= 1e-10);
    }

    #[test]
    fn ot_between_diracs_is_cost() {
        let alpha = dirac(&[0.2, -0.3]);
        let beta = dirac(&[-0.5, 0.8]);
        let domain = DomainBox::centered_cube(2.0, 2).unwrap();
        let cost = GroundCost::new(CostKind::SqEuclideanHalf, domain);
        let cfg = SinkhornConfig::new(0.3);
        let v = entropic_ot(&alpha, &beta, &cost, &cfg).unwrap();
        let expect = cost.value(&[0.2, -0.3], &[-0.5, 0.8]);
        assert!((v - expect).abs() < 1e-9);
        let same = entropic_ot(&alpha, &alpha, &cost, &cfg).unwrap();
        assert!(same.abs() < 1e-9);
    }

    #[test]
    fn asymmetric_solver_matches_symmetric_on_identical_measures() {
        let alpha = DiscreteMeasure::uniform(array![[0.0], [0.6], [1.0]]).unwrap();
        let cost = cost_r1(2.0);
        let cfg = SinkhornConfig::new(0.7).with_tolerance(1e-11);
        let via_asym = entropic_ot(&alpha, &alpha, &cost, &cfg).unwrap();
        let via_sym = entropic_ot_self(&alpha, &cost, &cfg).unwrap();
        assert!(
            (via_asym - via_sym).abs() <= 2e-11 * 10.0,
            "{via_asym} vs {via_sym}"
        );
    }

    #[test]
    fn divergence_of_identical_measures_vanishes() {
        let alpha = DiscreteMeasure::uniform(array![[0.1], [0.9], [0.5]]).unwrap();
        let cost = cost_r1(2.0);
        let cfg = SinkhornConfig::new(0.4);
        let s = sinkhorn_divergence(&alpha, &alpha, &cost, &cfg).unwrap();
        assert!(s.abs() <= 4.0 * cfg.tolerance * cost.sup_value());
    }

    #[test]
    fn divergence_between_diracs_is_cost() {
        let alpha = dirac(&[0.0]);
        let beta = dirac(&[1.0]);
        let cost = cost_r1(2.0);
        for gamma in [0.05, 0.5, 2.0] {
            let s = sinkhorn_divergence(&alpha, &beta, &cost, &SinkhornConfig::new(gamma)).unwrap();
            assert!((s - 0.5).abs() < 1e-9, "gamma {gamma}: {s}");
        }
    }

    #[test]
    fn gradient_against_single_dirac_is_cost_gradient() {
        let alpha = DiscreteMeasure::uniform(array![[0.0, 0.0], [0.5, -0.25]]).unwrap();
        let beta = dirac(&[1.0, 0.5]);
        let domain = DomainBox::centered_cube(2.0, 2).unwrap();
        let cost = GroundCost::new(CostKind::SqEuclideanHalf, domain);
        let cfg = SinkhornConfig::new(0.6).with_tolerance(1e-11);
        let pot = solve_potentials(&alpha, &beta, &cost, &cfg).unwrap();
        let grad = potential_gradient(&pot, &alpha, &beta, &cost).unwrap();
        for i in 0..alpha.len() {
            let mut expect = [0.0; 2];
            cost.grad1_into(alpha.point(i), beta.point(0), &mut expect);
            for k in 0..2 {
                assert!((grad[[i, k]] - expect[k]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn gradient_norm_below_cost_lipschitz_bound() {
        let alpha = DiscreteMeasure::uniform(array![[0.0], [0.5], [1.0]]).unwrap();
        let beta = DiscreteMeasure::uniform(array![[0.2], [0.8]]).unwrap();
        let cost = cost_r1(1.0);
        let cfg = SinkhornConfig::new(0.3).with_tolerance(1e-11);
        let pot = solve_potentials(&alpha, &beta, &cost, &cfg).unwrap();
        let grad = potential_gradient(&pot, &alpha, &beta, &cost).unwrap();
        for i in 0..alpha.len() {
            assert!(grad[[i, 0]].abs() <= cost.grad_sup() + 1e-9);
        }
    }

    #[test]
    fn gradient_matches_finite_differences_of_extension() {
        // extend f off-support via A(g, beta) and differentiate that
        let alpha = DiscreteMeasure::uniform(array![[0.1], [0.8]]).unwrap();
        let beta = DiscreteMeasure::uniform(array![[0.3], [0.95]]).unwrap();
        let cost = cost_r1(2.0);
        let cfg = SinkhornConfig::new(0.5).with_tolerance(1e-12);
        let pot = solve_potentials(&alpha, &beta, &cost, &cfg).unwrap();
        let grad = potential_gradient(&pot, &alpha, &beta, &cost).unwrap();
        let h = 1e-6;
        for i in 0..alpha.len() {
            let x = alpha.point(i)[0];
            let probes = array![[x + h], [x - h]];
            let vals = sinkhorn_map(&pot.g, &beta, &probes, &cost, cfg.gamma).unwrap();
            let fd = (vals[0] - vals[1]) / (2.0 * h);
            let rel = (grad[[i, 0]] - fd).abs() / fd.abs().max(1e-12);
            assert!(
                rel <= 1e-5,
                "atom {i}: analytic {} vs fd {fd}",
                grad[[i, 0]]
            );
        }
    }

    #[test]
    fn sampled_gradient_with_full_index_set_matches_exact_for_uniform_beta() {
        let alpha = DiscreteMeasure::uniform(array![[0.1], [0.7]]).unwrap();
        let beta = DiscreteMeasure::uniform(array![[0.0], [0.5], [1.0]]).unwrap();
        let cost = cost_r1(2.0);
        let cfg = SinkhornConfig::new(0.9).with_tolerance(1e-11);
        let pot = solve_potentials(&alpha, &beta, &cost, &cfg).unwrap();
        let exact = potential_gradient(&pot, &alpha, &beta, &cost).unwrap();
        let sampled = potential_gradient_sampled(&pot, &alpha, &beta, &cost, &[0, 1, 2]).unwrap();
        for i in 0..alpha.len() {
            assert!((exact[[i, 0]] - sampled[[i, 0]]).abs() < 1e-13);
        }
    }

    #[test]
    fn max_iterations_carries_last_iterate() {
        let alpha = DiscreteMeasure::uniform(array![[0.0], [1.0]]).unwrap();
        let beta = DiscreteMeasure::uniform(array![[0.3], [0.9]]).unwrap();
        let cost = cost_r1(2.0);
        let mut cfg = SinkhornConfig::new(0.05).with_tolerance(1e-14);
        cfg.max_iterations = 1;
        match solve_potentials(&alpha, &beta, &cost, &cfg) {
            Err(SolveError::MaxIterations { residual, last, .. }) => {
                assert!(residual > 1e-14);
                assert_eq!(last.f.len(), 2);
                assert_eq!(last.f[0], 0.0);
            }
            other => panic!("expected MaxIterations, got {other:?}"),
        }
    }
}
