//! Shared test fixtures: independent oracles and random-measure generators.
//! Everything here is deliberately naive and separate from the library's
//! computation paths.

#![allow(dead_code)] // each test binary uses a subset

use ndarray::{Array1, Array2};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sinkhorn_descent::measures::{CostKind, DiscreteMeasure, DomainBox, GroundCost};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random measure with up to `n_max` atoms in the unit box of dimension `d`,
/// strictly positive random weights.
pub fn random_measure(rng: &mut ChaCha8Rng, n_max: usize, d: usize) -> DiscreteMeasure {
    let n = 1 + (rng.random::<u64>() as usize) % n_max;
    let points = Array2::from_shape_fn((n, d), |_| rng.random::<f64>());
    let weights = Array1::from_shape_fn(n, |_| 0.05 + rng.random::<f64>());
    DiscreteMeasure::new(points, Some(weights)).expect("valid random measure")
}

pub fn unit_box_cost(d: usize) -> GroundCost {
    let domain = DomainBox::new(Array1::zeros(d), Array1::ones(d)).expect("unit box");
    GroundCost::new(CostKind::SqEuclideanHalf, domain)
}

/// Log-uniform draw.
pub fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (lo.ln() + (hi.ln() - lo.ln()) * rng.random::<f64>()).exp()
}

/// Golden-section minimizer of a strictly convex function on `[lo, hi]`.
pub fn golden_section(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let inv_phi = 0.5 * (5.0f64.sqrt() - 1.0);
    let mut c = hi - inv_phi * (hi - lo);
    let mut d = lo + inv_phi * (hi - lo);
    let mut fc = f(c);
    let mut fd = f(d);
    while hi - lo > tol {
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - inv_phi * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + inv_phi * (hi - lo);
            fd = f(d);
        }
    }
    0.5 * (lo + hi)
}

fn xlogx(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}

/// Brute-force primal transport value for two 2-atom measures on the line:
/// the transport polytope has one free parameter, minimized by golden
/// section. Completely independent of the dual solver.
pub fn primal_2x2_value(
    alpha: &DiscreteMeasure,
    beta: &DiscreteMeasure,
    cost: &GroundCost,
    gamma: f64,
) -> f64 {
    assert_eq!(alpha.len(), 2);
    assert_eq!(beta.len(), 2);
    let a = [alpha.weights()[0], alpha.weights()[1]];
    let b = [beta.weights()[0], beta.weights()[1]];
    let mut c = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            c[i][j] = cost.value(alpha.point(i), beta.point(j));
        }
    }
    let objective = |p: f64| {
        let pi = [[p, a[0] - p], [b[0] - p, a[1] - (b[0] - p)]];
        let mut total = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                let mass = pi[i][j].max(0.0);
                // KL(pi || a x b) without the linear terms: both sides are
                // probability measures, so those cancel
                total += mass * c[i][j] + gamma * (xlogx(mass) - mass * (a[i] * b[j]).ln());
            }
        }
        total
    };
    let lo = (a[0] + b[0] - 1.0).max(0.0);
    let hi = a[0].min(b[0]);
    let p_star = golden_section(objective, lo, hi, 1e-12);
    objective(p_star)
}

/// Squared energy distance between two weighted point clouds:
/// `2 E||X - Y|| - E||X - X'|| - E||Y - Y'||`.
pub fn energy_distance_sq(a: &DiscreteMeasure, b: &DiscreteMeasure) -> f64 {
    let pair_term = |x: &DiscreteMeasure, y: &DiscreteMeasure| {
        let mut total = 0.0;
        for i in 0..x.len() {
            for j in 0..y.len() {
                let mut d2 = 0.0;
                for (p, q) in x.point(i).iter().zip(y.point(j)) {
                    d2 += (p - q) * (p - q);
                }
                total += x.weights()[i] * y.weights()[j] * d2.sqrt();
            }
        }
        total
    };
    2.0 * pair_term(a, b) - pair_term(a, a) - pair_term(b, b)
}
