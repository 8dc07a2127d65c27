//! Seeded synthetic measure generators. Every generator is a pure function
//! of its arguments; the same seed yields bit-identical output.

use ndarray::Array2;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{invalid, DiscreteMeasure, DomainBox, MeasureError};

/// One standard normal draw via Box-Muller (two uniforms per draw, the sine
/// branch discarded to keep the draw order simple and reproducible).
pub(crate) fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    let u: f64 = 1.0 - rng.random::<f64>(); // (0, 1]
    let v: f64 = rng.random::<f64>();
    (-2.0 * u.ln()).sqrt() * (std::f64::consts::TAU * v).cos()
}

/// Geometry of a generated ellipse, exposed for verification.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EllipseParams {
    pub semi_axes: (f64, f64),
    pub rotation: f64,
}

/// Uniform-weight sample of a random origin-centered ellipse in `R^2`:
/// semi-axes uniform in `[0.3, 1.0]`, rotation uniform in `[0, pi)`, angular
/// positions uniform in `[0, 2pi)`, optional Gaussian positional jitter.
pub fn generate_ellipse(
    seed: u64,
    n_points: usize,
    jitter: f64,
) -> Result<DiscreteMeasure, MeasureError> {
    generate_ellipse_with_params(seed, n_points, jitter).map(|(m, _)| m)
}

/// Same as [`generate_ellipse`], also returning the drawn geometry.
pub fn generate_ellipse_with_params(
    seed: u64,
    n_points: usize,
    jitter: f64,
) -> Result<(DiscreteMeasure, EllipseParams), MeasureError> {
    if n_points < 3 {
        return Err(invalid(
            "n_points",
            "an ellipse sample needs at least 3 points",
        ));
    }
    if !(jitter.is_finite() && jitter >= 0.0) {
        return Err(invalid("jitter", "must be finite and nonnegative"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = rng.random_range(0.3..=1.0);
    let b = rng.random_range(0.3..=1.0);
    let rotation = rng.random_range(0.0..std::f64::consts::PI);
    let (sin_r, cos_r) = rotation.sin_cos();

    let mut points = Array2::zeros((n_points, 2));
    for i in 0..n_points {
        let phi = rng.random_range(0.0..std::f64::consts::TAU);
        let (px, py) = (a * phi.cos(), b * phi.sin());
        let mut x = cos_r * px - sin_r * py;
        let mut y = sin_r * px + cos_r * py;
        if jitter > 0.0 {
            x += jitter * standard_normal(&mut rng);
            y += jitter * standard_normal(&mut rng);
        }
        points[[i, 0]] = x;
        points[[i, 1]] = y;
    }
    let measure = DiscreteMeasure::uniform(points)?;
    Ok((
        measure,
        EllipseParams {
            semi_axes: (a, b),
            rotation,
        },
    ))
}

/// Uniform-weight empirical measure of `n_points` i.i.d. draws from an
/// isotropic Gaussian `N(mean, stddev^2 I)`.
pub fn generate_gaussian(
    seed: u64,
    n_points: usize,
    mean: &[f64],
    stddev: f64,
) -> Result<DiscreteMeasure, MeasureError> {
    if n_points == 0 {
        return Err(invalid("n_points", "must be at least 1"));
    }
    if mean.is_empty() {
        return Err(invalid("mean", "dimension must be at least 1"));
    }
    if mean.iter().any(|v| !v.is_finite()) {
        return Err(MeasureError::NonFinite);
    }
    if !(stddev.is_finite() && stddev > 0.0) {
        return Err(invalid("stddev", format!("must be positive, got {stddev}")));
    }
    let d = mean.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Array2::zeros((n_points, d));
    for i in 0..n_points {
        for k in 0..d {
            points[[i, k]] = mean[k] + stddev * standard_normal(&mut rng);
        }
    }
    DiscreteMeasure::uniform(points)
}

/// Uniform-weight measure of `n_points` points drawn uniformly in the box.
pub fn uniform_in_box(
    seed: u64,
    n_points: usize,
    domain: &DomainBox,
) -> Result<DiscreteMeasure, MeasureError> {
    if n_points == 0 {
        return Err(invalid("n_points", "must be at least 1"));
    }
    let d = domain.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Array2::zeros((n_points, d));
    for i in 0..n_points {
        for k in 0..d {
            let (lo, hi) = (domain.lo()[k], domain.hi()[k]);
            points[[i, k]] = lo + (hi - lo) * rng.random::<f64>();
        }
    }
    DiscreteMeasure::uniform(points)
}
