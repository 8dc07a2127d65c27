//! Grid-search conditional-gradient baseline: per step, the dual potentials
//! are extended off-support via the soft c-transform, their combination
//! `Q(x) = (1/n) sum_k f_k(x) - f_self(x)` is minimized exhaustively over a
//! uniform lattice, and the measure mixes toward the winning Dirac while the
//! support grows by at most one atom. Only feasible for `d <= 3`.

use std::time::Instant;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::descent::{
    beta_self_terms, compute_gradient, ksbd, objective_from_parts, BarycenterProblem, DescentError,
    DescentTrace, StepRecord, WarmStart,
};
use crate::measures::{DiscreteMeasure, DomainBox, MeasureError};
use crate::numeric::sum_compensated;
use crate::par;
use crate::sinkhorn::{sinkhorn_map, SinkhornConfig};

const MAX_GRID_DIM: usize = 3;

#[derive(Debug, Error)]
pub enum FwError {
    #[error("grid search limited to d <= {MAX_GRID_DIM}, got d = {dim}")]
    DimensionTooHigh { dim: usize },
    #[error(transparent)]
    Descent(#[from] DescentError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error("invalid configuration: {reason}")]
    InvalidConfig { reason: String },
}

/// Mixing weight schedule for step `t` (1-based, so the initial support is
/// never annihilated).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightRule {
    /// `rho_t = 1 / (t + 1)`
    Harmonic,
    /// `rho_t = 2 / (t + 2)`, the classical conditional-gradient schedule.
    TwoOverTPlusTwo,
}

impl WeightRule {
    pub fn rho(&self, t: usize) -> f64 {
        debug_assert!(t >= 1);
        match self {
            WeightRule::Harmonic => 1.0 / (t as f64 + 1.0),
            WeightRule::TwoOverTPlusTwo => 2.0 / (t as f64 + 2.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FwConfig {
    /// Lattice points per axis.
    #[serde(default = "default_grid_resolution")]
    pub grid_resolution: usize,
    pub steps: usize,
    #[serde(default = "default_weight_rule")]
    pub weight_rule: WeightRule,
    pub sinkhorn: SinkhornConfig,
}

fn default_grid_resolution() -> usize {
    64
}

fn default_weight_rule() -> WeightRule {
    WeightRule::TwoOverTPlusTwo
}

impl FwConfig {
    pub fn new(steps: usize, sinkhorn: SinkhornConfig) -> Self {
        Self {
            grid_resolution: default_grid_resolution(),
            steps,
            weight_rule: default_weight_rule(),
            sinkhorn,
        }
    }

    fn validate(&self) -> Result<(), FwError> {
        if self.grid_resolution < 2 {
            return Err(FwError::InvalidConfig {
                reason: format!(
                    "grid_resolution must be at least 2, got {}",
                    self.grid_resolution
                ),
            });
        }
        Ok(())
    }
}

/// Uniform lattice over the domain box, endpoints included, last axis
/// varying fastest. Lattices of resolutions `m` and `2m - 1` nest.
pub fn grid_points(domain: &DomainBox, resolution: usize) -> Result<Array2<f64>, FwError> {
    let d = domain.dim();
    if d > MAX_GRID_DIM {
        return Err(FwError::DimensionTooHigh { dim: d });
    }
    if resolution < 2 {
        return Err(FwError::InvalidConfig {
            reason: format!("grid_resolution must be at least 2, got {resolution}"),
        });
    }
    let total = resolution.pow(d as u32);
    let mut pts = Array2::zeros((total, d));
    for idx in 0..total {
        let mut rest = idx;
        for k in (0..d).rev() {
            let i = rest % resolution;
            rest /= resolution;
            let (lo, hi) = (domain.lo()[k], domain.hi()[k]);
            pts[[idx, k]] = lo + (hi - lo) * i as f64 / (resolution - 1) as f64;
        }
    }
    Ok(pts)
}

/// The linearized objective on a grid and its exhaustive minimizer.
#[derive(Debug, Clone)]
pub struct Linearization {
    pub argmin: Array1<f64>,
    pub argmin_index: usize,
    pub values: Array1<f64>,
}

/// Evaluate `Q` on every grid point by extending each source potential via
/// the soft c-transform of its second potential (and the self potential via
/// its own transform); ties break toward the lowest index. The sum carries
/// the `1/n` average so `Q` is the first variation of the implemented
/// objective.
pub fn fw_linearization(
    alpha: &DiscreteMeasure,
    problem: &BarycenterProblem,
    grid: &Array2<f64>,
    cfg: &SinkhornConfig,
) -> Result<Linearization, FwError> {
    if alpha.dim() > MAX_GRID_DIM {
        return Err(FwError::DimensionTooHigh { dim: alpha.dim() });
    }
    let mut warm = WarmStart::new(problem.n_sources());
    compute_gradient(alpha, problem, cfg, &mut warm, None)?;
    q_on_grid(alpha, problem, grid, cfg, &warm)
}

fn q_on_grid(
    alpha: &DiscreteMeasure,
    problem: &BarycenterProblem,
    grid: &Array2<f64>,
    cfg: &SinkhornConfig,
    warm: &WarmStart,
) -> Result<Linearization, FwError> {
    let cfg = problem.solver_config(cfg);
    let cost = problem.cost();
    let n = problem.n_sources();
    let m = grid.nrows();

    // per-source extensions f_k(x) = A(g_k, beta_k)(x)
    let extensions = par::try_map_indexed(n, |k| {
        let pot = warm.source_potential(k).expect("potentials solved above");
        sinkhorn_map(&pot.g, &problem.sources()[k], grid, cost, cfg.gamma).map_err(|e| {
            DescentError::SourceSolve {
                index: k,
                source: e,
            }
        })
    })
    .map_err(FwError::from)?;
    // self extension f_self(x) = A(f_self, alpha)(x)
    let self_pot = warm.self_potential().expect("potentials solved above");
    let self_ext =
        sinkhorn_map(&self_pot.f, alpha, grid, cost, cfg.gamma).map_err(DescentError::from)?;

    let inv_n = 1.0 / n as f64;
    let mut values = Array1::zeros(m);
    for x in 0..m {
        let avg = sum_compensated(extensions.iter().map(|e| e[x])) * inv_n;
        values[x] = avg - self_ext[x];
    }

    let mut argmin_index = 0;
    for x in 1..m {
        if values[x] < values[argmin_index] {
            argmin_index = x;
        }
    }
    Ok(Linearization {
        argmin: grid.row(argmin_index).to_owned(),
        argmin_index,
        values,
    })
}

/// Mix the measure toward a Dirac at `x_star` with weight `rho`; an exact
/// duplicate of an existing atom merges instead of growing the support.
fn mix_toward(
    alpha: &DiscreteMeasure,
    x_star: &[f64],
    rho: f64,
) -> Result<DiscreteMeasure, MeasureError> {
    let n = alpha.len();
    let d = alpha.dim();
    let existing = (0..n).find(|&i| alpha.point(i) == x_star);
    let rows = if existing.is_some() { n } else { n + 1 };
    let mut points = Array2::zeros((rows, d));
    let mut weights = Array1::zeros(rows);
    for i in 0..n {
        points
            .row_mut(i)
            .as_slice_mut()
            .unwrap()
            .copy_from_slice(alpha.point(i));
        weights[i] = alpha.weights()[i] * (1.0 - rho);
    }
    match existing {
        Some(i) => weights[i] += rho,
        None => {
            points
                .row_mut(n)
                .as_slice_mut()
                .unwrap()
                .copy_from_slice(x_star);
            weights[n] = rho;
        }
    }
    DiscreteMeasure::new(points, Some(weights))
}

/// Conditional-gradient loop: per step, minimize the linearization on the
/// grid and mix toward the winner. The trace mirrors the descent trace, with
/// the mixing weight in the step-size column.
pub fn run_fw(
    initial: &DiscreteMeasure,
    problem: &BarycenterProblem,
    cfg: &FwConfig,
) -> Result<(DiscreteMeasure, DescentTrace), FwError> {
    cfg.validate()?;
    if problem.dim() > MAX_GRID_DIM {
        return Err(FwError::DimensionTooHigh { dim: problem.dim() });
    }
    if initial.dim() != problem.dim() {
        return Err(DescentError::DimensionMismatch {
            expected: problem.dim(),
            got: initial.dim(),
        }
        .into());
    }
    let grid = grid_points(problem.cost().domain(), cfg.grid_resolution)?;
    let beta_self = beta_self_terms(problem, &cfg.sinkhorn)?;
    let mut warm = WarmStart::new(problem.n_sources());
    let mut alpha = initial.clone();
    let mut trace = DescentTrace::default();

    for t in 1..=cfg.steps {
        let started = Instant::now();
        let report = compute_gradient(&alpha, problem, &cfg.sinkhorn, &mut warm, None)?;
        let objective = objective_from_parts(&report.ot_to_sources, report.ot_self, &beta_self);
        let diag = ksbd(&alpha, &report.direction, problem.kernel())?;
        let lin = q_on_grid(&alpha, problem, &grid, &cfg.sinkhorn, &warm)?;
        let rho = cfg.weight_rule.rho(t);
        alpha = mix_toward(&alpha, lin.argmin.as_slice().unwrap(), rho)?;
        trace.records.push(StepRecord {
            objective,
            ksbd: diag,
            step_size_used: rho,
            sinkhorn_sweeps: report.sinkhorn_sweeps,
            wall: started.elapsed(),
        });
    }

    // final state record
    let started = Instant::now();
    let report = compute_gradient(&alpha, problem, &cfg.sinkhorn, &mut warm, None)?;
    let objective = objective_from_parts(&report.ot_to_sources, report.ot_self, &beta_self);
    let diag = ksbd(&alpha, &report.direction, problem.kernel())?;
    trace.records.push(StepRecord {
        objective,
        ksbd: diag,
        step_size_used: 0.0,
        sinkhorn_sweeps: report.sinkhorn_sweeps,
        wall: started.elapsed(),
    });
    Ok((alpha, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::{CostKind, GroundCost, RbfKernel};
    use ndarray::array;

    fn problem_on_box(
        sources: Vec<DiscreteMeasure>,
        gamma: f64,
        half_width: f64,
    ) -> BarycenterProblem {
        let d = sources[0].dim();
        let domain = DomainBox::centered_cube(half_width, d).unwrap();
        let cost = GroundCost::new(CostKind::SqEuclideanHalf, domain);
        BarycenterProblem::new(sources, cost, RbfKernel::new(0.7).unwrap(), gamma).unwrap()
    }

    fn dirac(x: &[f64]) -> DiscreteMeasure {
        DiscreteMeasure::uniform(Array2::from_shape_vec((1, x.len()), x.to_vec()).unwrap()).unwrap()
    }

    #[test]
    fn grid_is_a_nested_lattice() {
        let domain = DomainBox::new(array![0.0, -1.0], array![1.0, 1.0]).unwrap();
        let coarse = grid_points(&domain, 3).unwrap();
        let fine = grid_points(&domain, 5).unwrap();
        assert_eq!(coarse.nrows(), 9);
        assert_eq!(fine.nrows(), 25);
        // resolutions 3 and 5 nest: every coarse point appears in the fine grid
        for c in coarse.rows() {
            assert!(
                fine.rows().into_iter().any(|f| f == c),
                "missing coarse point {c:?}"
            );
        }
        // corners included
        assert_eq!(coarse.row(0).to_vec(), vec![0.0, -1.0]);
        assert_eq!(coarse.row(8).to_vec(), vec![1.0, 1.0]);
    }

    #[test]
    fn grid_rejects_high_dimension() {
        let domain = DomainBox::centered_cube(1.0, 4).unwrap();
        assert!(matches!(
            grid_points(&domain, 4),
            Err(FwError::DimensionTooHigh { dim: 4 })
        ));
    }

    #[test]
    fn q_constant_when_alpha_equals_single_dirac_source() {
        let y = dirac(&[0.25]);
        let problem = problem_on_box(vec![y.clone()], 0.5, 1.0);
        let grid = grid_points(problem.cost().domain(), 17).unwrap();
        let cfg = SinkhornConfig::new(0.5).with_tolerance(1e-12);
        let lin = fw_linearization(&y, &problem, &grid, &cfg).unwrap();
        let spread = lin.values.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b))
            - lin.values.iter().fold(f64::INFINITY, |a, &b| a.min(b));
        assert!(spread < 1e-9, "Q should be constant, spread {spread}");
        assert_eq!(lin.argmin_index, 0, "ties break to the lowest index");
    }

    #[test]
    fn q_matches_on_support_potentials() {
        let sources = vec![
            crate::measures::generate_gaussian(1, 12, &[0.4], 0.2).unwrap(),
            crate::measures::generate_gaussian(2, 9, &[-0.4], 0.2).unwrap(),
        ];
        let problem = problem_on_box(sources, 0.4, 2.0);
        let alpha = crate::measures::generate_gaussian(3, 6, &[0.0], 0.3).unwrap();
        let cfg = SinkhornConfig::new(0.4).with_tolerance(1e-11);

        // grid that contains the support points themselves
        let lin = fw_linearization(&alpha, &problem, &alpha.points().to_owned(), &cfg).unwrap();

        // on-support reference from the raw solves
        let mut warm = WarmStart::new(problem.n_sources());
        compute_gradient(&alpha, &problem, &cfg, &mut warm, None).unwrap();
        for i in 0..alpha.len() {
            let avg: f64 = (0..problem.n_sources())
                .map(|k| warm.source_potential(k).unwrap().f[i])
                .sum::<f64>()
                / problem.n_sources() as f64;
            let expect = avg - warm.self_potential().unwrap().f[i];
            assert!(
                (lin.values[i] - expect).abs() <= 10.0 * cfg.tolerance,
                "atom {i}: {} vs {expect}",
                lin.values[i]
            );
        }
    }

    #[test]
    fn refined_grid_never_raises_the_minimum() {
        let sources = vec![crate::measures::generate_ellipse(5, 12, 0.0).unwrap()];
        let problem = problem_on_box(sources, 0.3, 1.5);
        let alpha = crate::measures::uniform_in_box(6, 5, problem.cost().domain()).unwrap();
        let cfg = SinkhornConfig::new(0.3);
        let coarse_grid = grid_points(problem.cost().domain(), 5).unwrap();
        let fine_grid = grid_points(problem.cost().domain(), 9).unwrap(); // nests with 5
        let coarse = fw_linearization(&alpha, &problem, &coarse_grid, &cfg).unwrap();
        let fine = fw_linearization(&alpha, &problem, &fine_grid, &cfg).unwrap();
        let min_c = coarse.values[coarse.argmin_index];
        let min_f = fine.values[fine.argmin_index];
        assert!(min_f <= min_c + 1e-12);
    }

    #[test]
    fn zero_steps_returns_initial() {
        let sources = vec![dirac(&[0.5])];
        let problem = problem_on_box(sources, 0.5, 1.0);
        let initial = dirac(&[-0.5]);
        let cfg = FwConfig::new(0, SinkhornConfig::new(0.5));
        let (out, trace) = run_fw(&initial, &problem, &cfg).unwrap();
        assert_eq!(out.points(), initial.points());
        assert_eq!(trace.records.len(), 1);
    }

    #[test]
    fn harmonic_weights_telescope() {
        // distinct atoms: after t steps the original atoms carry
        // prod_{s<=t} (1 - rho_s) = 1 / (t + 1) under the harmonic rule
        let sources = vec![crate::measures::generate_ellipse(8, 10, 0.0).unwrap()];
        let problem = problem_on_box(sources, 0.4, 1.5);
        let initial = dirac(&[1.4999, 1.4999]); // far corner, never the argmin
        let mut cfg = FwConfig::new(4, SinkhornConfig::new(0.4));
        cfg.weight_rule = WeightRule::Harmonic;
        cfg.grid_resolution = 8;
        let (out, _) = run_fw(&initial, &problem, &cfg).unwrap();
        let original_mass = out.weights()[0];
        let expect: f64 = (1..=4).map(|t| 1.0 - WeightRule::Harmonic.rho(t)).product();
        assert!(
            (original_mass - expect).abs() < 1e-12,
            "{original_mass} vs telescoped {expect}"
        );
    }

    #[test]
    fn support_grows_by_at_most_one_and_mass_is_conserved() {
        let sources = vec![crate::measures::generate_ellipse(9, 15, 0.02).unwrap()];
        let problem = problem_on_box(sources, 0.3, 1.5);
        let initial = crate::measures::uniform_in_box(10, 3, problem.cost().domain()).unwrap();
        let cfg = FwConfig {
            grid_resolution: 6,
            steps: 5,
            weight_rule: WeightRule::TwoOverTPlusTwo,
            sinkhorn: SinkhornConfig::new(0.3),
        };
        let (out, trace) = run_fw(&initial, &problem, &cfg).unwrap();
        assert!(out.len() <= initial.len() + cfg.steps);
        let total: f64 = out.weights().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert_eq!(trace.records.len(), cfg.steps + 1);
    }

    #[test]
    fn duplicate_argmin_merges_weights() {
        let alpha = dirac(&[0.0, 0.0]);
        let merged = mix_toward(&alpha, &[0.0, 0.0], 0.25).unwrap();
        assert_eq!(merged.len(), 1);
        assert_eq!(merged.weights()[0], 1.0);
        let grown = mix_toward(&alpha, &[0.5, 0.0], 0.25).unwrap();
        assert_eq!(grown.len(), 2);
        assert!((grown.weights()[0] - 0.75).abs() < 1e-15);
        assert!((grown.weights()[1] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn high_dimension_rejected_by_run() {
        let sources = vec![dirac(&[0.0; 10])];
        let domain = DomainBox::centered_cube(1.0, 10).unwrap();
        let cost = GroundCost::new(CostKind::SqEuclideanHalf, domain);
        let problem =
            BarycenterProblem::new(sources, cost, RbfKernel::new(1.0).unwrap(), 0.5).unwrap();
        let initial = dirac(&[0.1; 10]);
        let err = run_fw(
            &initial,
            &problem,
            &FwConfig::new(1, SinkhornConfig::new(0.5)),
        )
        .unwrap_err();
        assert!(matches!(err, FwError::DimensionTooHigh { dim: 10 }));
    }
}
