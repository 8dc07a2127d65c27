//! Particle descent on the barycenter objective: the average Sinkhorn
//! divergence from a candidate measure to a set of source measures.
//!
//! Each step solves the dual transport problems from the current particles
//! to every source and to the particles themselves, assembles the pointwise
//! descent field
//! `xi(x) = (1/n) sum_k grad f_k(x) - grad f_self(x)`,
//! smooths it through the kernel into the RKHS gradient
//! `ds(y) = sum_j w_j xi(x_j) k(x_j, y)`,
//! and moves every particle by `-eta * ds`. The squared RKHS norm of that
//! gradient (`ksbd`) is the stationarity diagnostic and the stopping rule.

use std::time::{Duration, Instant};

use ndarray::Array2;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::measures::{DiscreteMeasure, GroundCost, MeasureError, RbfKernel};
use crate::numeric::{sum_compensated, CompensatedSum};
use crate::par;
use crate::sinkhorn::{
    dual_value, potential_gradient, potential_gradient_sampled, solve_potentials_warm,
    solve_symmetric_potential_warm, SinkhornConfig, SinkhornPotentials, SolveError,
};

#[derive(Debug, Error)]
pub enum DescentError {
    #[error("solving transport to source {index}: {source}")]
    SourceSolve {
        index: usize,
        #[source]
        source: SolveError,
    },
    #[error("solving self-transport: {0}")]
    SelfSolve(#[from] SolveError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("backtracking found no decrease after {halvings} halvings")]
    BacktrackingFailed { halvings: u32 },
    #[error("invalid configuration: {reason}")]
    InvalidConfig { reason: String },
}

/// The barycenter problem instance: source measures, ground cost with its
/// declared domain, the RKHS kernel, and the entropic regularization.
#[derive(Debug, Clone)]
pub struct BarycenterProblem {
    sources: Vec<DiscreteMeasure>,
    cost: GroundCost,
    kernel: RbfKernel,
    gamma: f64,
}

impl BarycenterProblem {
    /// All sources must share one dimension and lie inside the cost's domain
    /// box.
    pub fn new(
        sources: Vec<DiscreteMeasure>,
        cost: GroundCost,
        kernel: RbfKernel,
        gamma: f64,
    ) -> Result<Self, DescentError> {
        let first = sources.first().ok_or(DescentError::InvalidConfig {
            reason: "at least one source measure is required".into(),
        })?;
        // the push-forward analysis needs a smooth cost; Euclidean's gradient
        // is singular on the diagonal and is for divergence evaluation only
        if !cost.grad_lipschitz().is_finite() {
            return Err(DescentError::InvalidConfig {
                reason: format!(
                    "descent needs a smooth ground cost, {:?} is not",
                    cost.kind()
                ),
            });
        }
        let d = first.dim();
        if cost.domain().dim() != d {
            return Err(DescentError::DimensionMismatch {
                expected: d,
                got: cost.domain().dim(),
            });
        }
        for m in &sources {
            if m.dim() != d {
                return Err(DescentError::DimensionMismatch {
                    expected: d,
                    got: m.dim(),
                });
            }
            for i in 0..m.len() {
                if !cost.domain().contains(m.point(i), 1e-9) {
                    return Err(DescentError::Measure(MeasureError::OutsideDomain {
                        index: i,
                    }));
                }
            }
        }
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(DescentError::InvalidConfig {
                reason: format!("gamma must be positive, got {gamma}"),
            });
        }
        Ok(Self {
            sources,
            cost,
            kernel,
            gamma,
        })
    }

    pub fn sources(&self) -> &[DiscreteMeasure] {
        &self.sources
    }

    pub fn cost(&self) -> &GroundCost {
        &self.cost
    }

    pub fn kernel(&self) -> &RbfKernel {
        &self.kernel
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn dim(&self) -> usize {
        self.sources[0].dim()
    }

    pub fn n_sources(&self) -> usize {
        self.sources.len()
    }

    /// Solver settings with the problem's gamma; the problem wins over
    /// whatever gamma the caller left in `base`.
    pub fn solver_config(&self, base: &SinkhornConfig) -> SinkhornConfig {
        SinkhornConfig {
            gamma: self.gamma,
            ..base.clone()
        }
    }
}

fn default_step_size_field() -> f64 {
    0.1
}

fn default_max_steps() -> usize {
    50
}

fn default_true() -> bool {
    true
}

/// Settings for one descent run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescentConfig {
    /// Step size `eta`; backtracking halves it per step as needed.
    #[serde(default = "default_step_size_field")]
    pub step_size: f64,
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
    /// Stop once the stationarity diagnostic falls to or below this value;
    /// zero means run all steps.
    #[serde(default)]
    pub ksbd_stop: f64,
    #[serde(default = "default_true")]
    pub backtracking: bool,
    pub sinkhorn: SinkhornConfig,
    #[serde(default)]
    pub seed: u64,
    /// Optional per-source Monte-Carlo subsample size for the gradient
    /// expectation; `None` computes the exact full sum.
    #[serde(default)]
    pub minibatch: Option<usize>,
}

impl DescentConfig {
    pub fn new(sinkhorn: SinkhornConfig) -> Self {
        Self {
            step_size: default_step_size_field(),
            max_steps: default_max_steps(),
            ksbd_stop: 0.0,
            backtracking: true,
            sinkhorn,
            seed: 0,
            minibatch: None,
        }
    }

    fn validate(&self) -> Result<(), DescentError> {
        if !(self.step_size.is_finite() && self.step_size >= 0.0) {
            return Err(DescentError::InvalidConfig {
                reason: format!("step_size must be nonnegative, got {}", self.step_size),
            });
        }
        if self.max_steps == 0 {
            return Err(DescentError::InvalidConfig {
                reason: "max_steps must be at least 1".into(),
            });
        }
        if !(self.ksbd_stop.is_finite() && self.ksbd_stop >= 0.0) {
            return Err(DescentError::InvalidConfig {
                reason: format!("ksbd_stop must be nonnegative, got {}", self.ksbd_stop),
            });
        }
        if self.minibatch == Some(0) {
            return Err(DescentError::InvalidConfig {
                reason: "minibatch size must be at least 1".into(),
            });
        }
        Ok(())
    }
}

/// The two fields of one gradient evaluation at every particle: the raw
/// descent field `xi` and the kernel-smoothed RKHS gradient `ds`.
#[derive(Debug, Clone)]
pub struct DescentDirection {
    pub xi: Array2<f64>,
    pub ds: Array2<f64>,
}

/// Gradient evaluation plus the transport values it produced on the way.
#[derive(Debug, Clone)]
pub struct GradientReport {
    pub direction: DescentDirection,
    /// `OT(alpha, beta_k)` for each source, from the same potentials.
    pub ot_to_sources: Vec<f64>,
    /// `OT(alpha, alpha)`.
    pub ot_self: f64,
    /// Total solver sweeps across the `n + 1` solves.
    pub sinkhorn_sweeps: usize,
}

/// Previous potentials, reused to seed the next step's solves. Supports move
/// little per step, so the warm start is close.
#[derive(Debug, Clone)]
pub struct WarmStart {
    sources: Vec<Option<SinkhornPotentials>>,
    self_pot: Option<SinkhornPotentials>,
}

impl WarmStart {
    pub fn new(n_sources: usize) -> Self {
        Self {
            sources: vec![None; n_sources],
            self_pot: None,
        }
    }

    pub(crate) fn source_potential(&self, k: usize) -> Option<&SinkhornPotentials> {
        self.sources[k].as_ref()
    }

    pub(crate) fn self_potential(&self) -> Option<&SinkhornPotentials> {
        self.self_pot.as_ref()
    }
}

/// Per-step trace record. The objective and diagnostic describe the measure
/// *before* the step; `step_size_used` is zero on the final record.
#[derive(Debug, Clone)]
pub struct StepRecord {
    pub objective: f64,
    pub ksbd: f64,
    pub step_size_used: f64,
    pub sinkhorn_sweeps: usize,
    pub wall: Duration,
}

/// Records for every visited measure: one per completed step plus the final
/// state.
#[derive(Debug, Clone, Default)]
pub struct DescentTrace {
    pub records: Vec<StepRecord>,
}

impl DescentTrace {
    pub fn steps_completed(&self) -> usize {
        self.records.len().saturating_sub(1)
    }

    pub fn final_objective(&self) -> Option<f64> {
        self.records.last().map(|r| r.objective)
    }

    pub fn final_ksbd(&self) -> Option<f64> {
        self.records.last().map(|r| r.ksbd)
    }

    /// `step,objective,ksbd,step_size,sinkhorn_sweeps,wall_ms` with LF
    /// endings; floats carry 17 significant digits.
    pub fn write_csv<W: std::io::Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "step,objective,ksbd,step_size,sinkhorn_sweeps,wall_ms")?;
        for (t, r) in self.records.iter().enumerate() {
            writeln!(
                w,
                "{t},{},{},{},{},{}",
                format_args!("{:.16e}", r.objective),
                format_args!("{:.16e}", r.ksbd),
                format_args!("{:.16e}", r.step_size_used),
                r.sinkhorn_sweeps,
                r.wall.as_millis(),
            )?;
        }
        Ok(())
    }
}

/// A descent run that failed partway, with the trace up to the failure.
#[derive(Debug)]
pub struct SdRunError {
    pub error: DescentError,
    pub partial: DescentTrace,
}

impl std::fmt::Display for SdRunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "descent aborted after {} steps: {}",
            self.partial.steps_completed(),
            self.error
        )
    }
}

impl std::error::Error for SdRunError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

/// Indices drawn i.i.d. from each source's weights, one batch per source.
pub(crate) struct MinibatchPlan {
    per_source: Vec<Vec<usize>>,
}

fn weighted_indices(rng: &mut ChaCha8Rng, measure: &DiscreteMeasure, count: usize) -> Vec<usize> {
    let weights = measure.weights();
    let mut cumulative = Vec::with_capacity(weights.len());
    let mut acc = 0.0;
    for &w in weights {
        acc += w;
        cumulative.push(acc);
    }
    let total = *cumulative.last().expect("nonempty measure");
    (0..count)
        .map(|_| {
            let u = rng.random::<f64>() * total;
            cumulative
                .partition_point(|&c| c <= u)
                .min(weights.len() - 1)
        })
        .collect()
}

fn minibatch_plan(problem: &BarycenterProblem, size: usize, rng: &mut ChaCha8Rng) -> MinibatchPlan {
    MinibatchPlan {
        per_source: problem
            .sources()
            .iter()
            .map(|beta| {
                if beta.len() <= size {
                    (0..beta.len()).collect() // exact sum is cheaper than sampling
                } else {
                    weighted_indices(rng, beta, size)
                }
            })
            .collect(),
    }
}

fn check_alpha(alpha: &DiscreteMeasure, problem: &BarycenterProblem) -> Result<(), DescentError> {
    if alpha.dim() != problem.dim() {
        return Err(DescentError::DimensionMismatch {
            expected: problem.dim(),
            got: alpha.dim(),
        });
    }
    Ok(())
}

/// One gradient evaluation: `n` transport solves to the sources plus one
/// self-transport solve, all warm-started and run in parallel, then the
/// `xi` and `ds` assembly.
pub(crate) fn compute_gradient(
    alpha: &DiscreteMeasure,
    problem: &BarycenterProblem,
    cfg: &SinkhornConfig,
    warm: &mut WarmStart,
    plan: Option<&MinibatchPlan>,
) -> Result<GradientReport, DescentError> {
    check_alpha(alpha, problem)?;
    let cfg = problem.solver_config(cfg);
    let cost = problem.cost();
    let n = problem.n_sources();
    let n_particles = alpha.len();
    let d = alpha.dim();

    let per_source = par::try_map_mut(
        &mut warm.sources,
        |k, slot: &mut Option<SinkhornPotentials>| {
            let beta = &problem.sources()[k];
            let pot =
                solve_potentials_warm(alpha, beta, cost, &cfg, slot.as_ref()).map_err(|e| {
                    DescentError::SourceSolve {
                        index: k,
                        source: e,
                    }
                })?;
            let grad = match plan {
                Some(p) => potential_gradient_sampled(&pot, alpha, beta, cost, &p.per_source[k]),
                None => potential_gradient(&pot, alpha, beta, cost),
            }
            .map_err(|e| DescentError::SourceSolve {
                index: k,
                source: e,
            })?;
            let ot = dual_value(&pot, alpha, beta);
            let sweeps = pot.iterations_used;
            *slot = Some(pot);
            Ok::<_, DescentError>((grad, ot, sweeps))
        },
    )?;

    let self_pot = solve_symmetric_potential_warm(alpha, cost, &cfg, warm.self_pot.as_ref())?;
    let self_grad = potential_gradient(&self_pot, alpha, alpha, cost)?;
    let ot_self = dual_value(&self_pot, alpha, alpha);
    let mut sweeps_total = self_pot.iterations_used;
    warm.self_pot = Some(self_pot);

    // xi = (1/n) sum_k grad_k - grad_self
    let mut xi = Array2::<f64>::zeros((n_particles, d));
    let inv_n = 1.0 / n as f64;
    let mut ot_to_sources = Vec::with_capacity(n);
    for (grad, ot, sweeps) in &per_source {
        xi.scaled_add(inv_n, grad);
        ot_to_sources.push(*ot);
        sweeps_total += sweeps;
    }
    xi -= &self_grad;

    // ds(y_i) = sum_j w_j xi(x_j) k(x_j, y_i)
    let kernel = problem.kernel();
    let weights = alpha.weights().as_slice().expect("standard layout");
    let pts = alpha.points_flat();
    let xi_flat = xi.as_slice().expect("standard layout");
    let mut ds = vec![0.0; n_particles * d];
    par::for_each_row(&mut ds, d, |i, row| {
        let yi = &pts[i * d..(i + 1) * d];
        let mut acc = vec![CompensatedSum::new(); d];
        for (j, &wj) in weights.iter().enumerate() {
            let kij = wj * kernel.eval(&pts[j * d..(j + 1) * d], yi);
            if kij == 0.0 {
                continue;
            }
            for k in 0..d {
                acc[k].add(kij * xi_flat[j * d + k]);
            }
        }
        for k in 0..d {
            row[k] = acc[k].value();
        }
    });
    let ds = Array2::from_shape_vec((n_particles, d), ds).expect("consistent shape");

    Ok(GradientReport {
        direction: DescentDirection { xi, ds },
        ot_to_sources,
        ot_self,
        sinkhorn_sweeps: sweeps_total,
    })
}

struct ValueReport {
    ot_to_sources: Vec<f64>,
    ot_self: f64,
    sweeps: usize,
}

/// Transport values only (no gradients); what a backtracking probe needs.
fn compute_values(
    alpha: &DiscreteMeasure,
    problem: &BarycenterProblem,
    cfg: &SinkhornConfig,
    warm: &mut WarmStart,
) -> Result<ValueReport, DescentError> {
    check_alpha(alpha, problem)?;
    let cfg = problem.solver_config(cfg);
    let cost = problem.cost();

    let per_source = par::try_map_mut(
        &mut warm.sources,
        |k, slot: &mut Option<SinkhornPotentials>| {
            let beta = &problem.sources()[k];
            let pot =
                solve_potentials_warm(alpha, beta, cost, &cfg, slot.as_ref()).map_err(|e| {
                    DescentError::SourceSolve {
                        index: k,
                        source: e,
                    }
                })?;
            let ot = dual_value(&pot, alpha, beta);
            let sweeps = pot.iterations_used;
            *slot = Some(pot);
            Ok::<_, DescentError>((ot, sweeps))
        },
    )?;

    let self_pot = solve_symmetric_potential_warm(alpha, cost, &cfg, warm.self_pot.as_ref())?;
    let ot_self = dual_value(&self_pot, alpha, alpha);
    let mut sweeps = self_pot.iterations_used;
    warm.self_pot = Some(self_pot);

    let mut ot_to_sources = Vec::with_capacity(per_source.len());
    for (ot, s) in per_source {
        ot_to_sources.push(ot);
        sweeps += s;
    }
    Ok(ValueReport {
        ot_to_sources,
        ot_self,
        sweeps,
    })
}

/// Self-transport values of the sources: constant across a run, computed
/// once and cached.
pub(crate) fn beta_self_terms(
    problem: &BarycenterProblem,
    cfg: &SinkhornConfig,
) -> Result<Vec<f64>, DescentError> {
    let cfg = problem.solver_config(cfg);
    par::try_map_indexed(problem.n_sources(), |k| {
        let beta = &problem.sources()[k];
        let pot =
            solve_symmetric_potential_warm(beta, problem.cost(), &cfg, None).map_err(|e| {
                DescentError::SourceSolve {
                    index: k,
                    source: e,
                }
            })?;
        Ok(dual_value(&pot, beta, beta))
    })
}

/// `(1/n) sum_k [OT(a, b_k) - OT(a, a)/2 - OT(b_k, b_k)/2]`.
pub(crate) fn objective_from_parts(ot_to_sources: &[f64], ot_self: f64, beta_self: &[f64]) -> f64 {
    let n = ot_to_sources.len() as f64;
    let cross = sum_compensated(ot_to_sources.iter().copied()) / n;
    let selfs = sum_compensated(beta_self.iter().copied()) / n;
    cross - 0.5 * ot_self - 0.5 * selfs
}

/// Functional gradient of the barycenter objective at `alpha`, evaluated at
/// every support point. With `warm` the `n + 1` dual solves are seeded from
/// a previous evaluation.
pub fn functional_gradient(
    alpha: &DiscreteMeasure,
    problem: &BarycenterProblem,
    cfg: &SinkhornConfig,
    warm: Option<&mut WarmStart>,
) -> Result<DescentDirection, DescentError> {
    let mut fresh;
    let warm = match warm {
        Some(w) => w,
        None => {
            fresh = WarmStart::new(problem.n_sources());
            &mut fresh
        }
    };
    Ok(compute_gradient(alpha, problem, cfg, warm, None)?.direction)
}

/// Full barycenter objective at `alpha`, including the constant source
/// self-transport terms.
pub fn barycenter_objective(
    alpha: &DiscreteMeasure,
    problem: &BarycenterProblem,
    cfg: &SinkhornConfig,
) -> Result<f64, DescentError> {
    let mut warm = WarmStart::new(problem.n_sources());
    let values = compute_values(alpha, problem, cfg, &mut warm)?;
    let consts = beta_self_terms(problem, cfg)?;
    Ok(objective_from_parts(
        &values.ot_to_sources,
        values.ot_self,
        &consts,
    ))
}

/// Squared RKHS norm of the kernel embedding of `xi` against `alpha`:
/// `sum_ij w_i w_j <xi_i, xi_j> k(x_i, x_j)`. Nonnegative up to rounding;
/// rounding-level negatives are clamped to zero.
pub fn ksbd(
    alpha: &DiscreteMeasure,
    direction: &DescentDirection,
    kernel: &RbfKernel,
) -> Result<f64, DescentError> {
    let n = alpha.len();
    let d = alpha.dim();
    if direction.xi.nrows() != n || direction.xi.ncols() != d {
        return Err(DescentError::DimensionMismatch {
            expected: n * d,
            got: direction.xi.nrows() * direction.xi.ncols(),
        });
    }
    let weights = alpha.weights().as_slice().expect("standard layout");
    let pts = alpha.points_flat();
    let xi = direction.xi.as_slice().expect("standard layout");

    let mut partial = vec![0.0; n];
    par::fill_indexed(&mut partial, |i| {
        let xi_i = &xi[i * d..(i + 1) * d];
        let pi = &pts[i * d..(i + 1) * d];
        let mut acc = CompensatedSum::new();
        for j in 0..n {
            let dot: f64 = xi_i
                .iter()
                .zip(&xi[j * d..(j + 1) * d])
                .map(|(a, b)| a * b)
                .sum();
            acc.add(weights[i] * weights[j] * dot * kernel.eval(pi, &pts[j * d..(j + 1) * d]));
        }
        acc.value()
    });
    let value = sum_compensated(partial.iter().copied());
    Ok(value.max(0.0))
}

/// Move every particle by `-eta * ds`, clamping escapees back into the
/// domain box. Weights never change.
pub fn push_forward(
    alpha: &DiscreteMeasure,
    direction: &DescentDirection,
    eta: f64,
    cost: &GroundCost,
) -> Result<DiscreteMeasure, DescentError> {
    let d = alpha.dim();
    if direction.ds.nrows() != alpha.len() || direction.ds.ncols() != d {
        return Err(DescentError::DimensionMismatch {
            expected: alpha.len() * d,
            got: direction.ds.nrows() * direction.ds.ncols(),
        });
    }
    let mut points = alpha.points().clone();
    let domain = cost.domain();
    for i in 0..alpha.len() {
        let mut row = points.row_mut(i);
        for k in 0..d {
            row[k] -= eta * direction.ds[[i, k]];
        }
        domain.clamp_into(row.as_slice_mut().expect("standard layout"));
    }
    Ok(alpha.with_points(points)?)
}

/// Solver state reused across steps: warm potentials, the constant source
/// self-transport terms, and the minibatch RNG.
pub struct SdState {
    warm: WarmStart,
    beta_self: Vec<f64>,
    rng: ChaCha8Rng,
}

impl SdState {
    pub fn init(problem: &BarycenterProblem, cfg: &DescentConfig) -> Result<Self, DescentError> {
        cfg.validate()?;
        Ok(Self {
            warm: WarmStart::new(problem.n_sources()),
            beta_self: beta_self_terms(problem, &cfg.sinkhorn)?,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        })
    }
}

struct EvaluatedStep {
    report: GradientReport,
    objective: f64,
    ksbd: f64,
    started: Instant,
}

fn evaluate_current(
    alpha: &DiscreteMeasure,
    problem: &BarycenterProblem,
    cfg: &DescentConfig,
    state: &mut SdState,
) -> Result<EvaluatedStep, DescentError> {
    let started = Instant::now();
    let plan = cfg
        .minibatch
        .map(|size| minibatch_plan(problem, size, &mut state.rng));
    let report = compute_gradient(
        alpha,
        problem,
        &cfg.sinkhorn,
        &mut state.warm,
        plan.as_ref(),
    )?;
    let objective = objective_from_parts(&report.ot_to_sources, report.ot_self, &state.beta_self);
    let ksbd = ksbd(alpha, &report.direction, problem.kernel())?;
    Ok(EvaluatedStep {
        report,
        objective,
        ksbd,
        started,
    })
}

const MAX_HALVINGS: u32 = 20;

fn take_step(
    alpha: &DiscreteMeasure,
    problem: &BarycenterProblem,
    cfg: &DescentConfig,
    state: &mut SdState,
    eval: &EvaluatedStep,
) -> Result<(DiscreteMeasure, f64, usize), DescentError> {
    if !cfg.backtracking {
        let next = push_forward(alpha, &eval.report.direction, cfg.step_size, problem.cost())?;
        return Ok((next, cfg.step_size, 0));
    }
    let mut eta = cfg.step_size;
    let mut extra_sweeps = 0;
    for _ in 0..=MAX_HALVINGS {
        let candidate = push_forward(alpha, &eval.report.direction, eta, problem.cost())?;
        let mut probe_warm = state.warm.clone();
        let values = compute_values(&candidate, problem, &cfg.sinkhorn, &mut probe_warm)?;
        extra_sweeps += values.sweeps;
        let objective =
            objective_from_parts(&values.ot_to_sources, values.ot_self, &state.beta_self);
        if objective <= eval.objective {
            state.warm = probe_warm; // the accepted candidate's potentials
            return Ok((candidate, eta, extra_sweeps));
        }
        eta *= 0.5;
    }
    Err(DescentError::BacktrackingFailed {
        halvings: MAX_HALVINGS,
    })
}

/// One descent step with fresh state. Prefer [`run_sd`] for multi-step runs;
/// it reuses warm starts and the cached source terms.
pub fn sd_step(
    alpha: &DiscreteMeasure,
    problem: &BarycenterProblem,
    cfg: &DescentConfig,
) -> Result<(DiscreteMeasure, StepRecord), DescentError> {
    let mut state = SdState::init(problem, cfg)?;
    sd_step_with_state(alpha, problem, cfg, &mut state)
}

/// One descent step reusing `state` across calls.
pub fn sd_step_with_state(
    alpha: &DiscreteMeasure,
    problem: &BarycenterProblem,
    cfg: &DescentConfig,
    state: &mut SdState,
) -> Result<(DiscreteMeasure, StepRecord), DescentError> {
    let eval = evaluate_current(alpha, problem, cfg, state)?;
    let (next, eta_used, extra) = take_step(alpha, problem, cfg, state, &eval)?;
    let record = StepRecord {
        objective: eval.objective,
        ksbd: eval.ksbd,
        step_size_used: eta_used,
        sinkhorn_sweeps: eval.report.sinkhorn_sweeps + extra,
        wall: eval.started.elapsed(),
    };
    Ok((next, record))
}

/// Run descent from `initial` for up to `max_steps` steps, stopping early
/// when the stationarity diagnostic falls to `ksbd_stop`. The trace records
/// every visited measure including the final one; on failure the partial
/// trace rides along with the error.
pub fn run_sd(
    initial: &DiscreteMeasure,
    problem: &BarycenterProblem,
    cfg: &DescentConfig,
) -> Result<(DiscreteMeasure, DescentTrace), SdRunError> {
    let mut trace = DescentTrace::default();
    let fail = |error, trace: &mut DescentTrace| SdRunError {
        error,
        partial: std::mem::take(trace),
    };

    if let Err(e) = check_alpha(initial, problem) {
        return Err(fail(e, &mut trace));
    }
    let mut state = match SdState::init(problem, cfg) {
        Ok(s) => s,
        Err(e) => return Err(fail(e, &mut trace)),
    };
    let mut alpha = initial.clone();

    for _ in 0..cfg.max_steps {
        let eval = match evaluate_current(&alpha, problem, cfg, &mut state) {
            Ok(ev) => ev,
            Err(e) => return Err(fail(e, &mut trace)),
        };
        if eval.ksbd <= cfg.ksbd_stop {
            trace.records.push(StepRecord {
                objective: eval.objective,
                ksbd: eval.ksbd,
                step_size_used: 0.0,
                sinkhorn_sweeps: eval.report.sinkhorn_sweeps,
                wall: eval.started.elapsed(),
            });
            return Ok((alpha, trace));
        }
        match take_step(&alpha, problem, cfg, &mut state, &eval) {
            Ok((next, eta_used, extra)) => {
                trace.records.push(StepRecord {
                    objective: eval.objective,
                    ksbd: eval.ksbd,
                    step_size_used: eta_used,
                    sinkhorn_sweeps: eval.report.sinkhorn_sweeps + extra,
                    wall: eval.started.elapsed(),
                });
                alpha = next;
            }
            Err(e) => return Err(fail(e, &mut trace)),
        }
    }

    // final state record
    match evaluate_current(&alpha, problem, cfg, &mut state) {
        Ok(eval) => {
            trace.records.push(StepRecord {
                objective: eval.objective,
                ksbd: eval.ksbd,
                step_size_used: 0.0,
                sinkhorn_sweeps: eval.report.sinkhorn_sweeps,
                wall: eval.started.elapsed(),
            });
            Ok((alpha, trace))
        }
        Err(e) => Err(fail(e, &mut trace)),
    }
}

/// Step size for which the per-step decrease bound holds: with
/// `L_f = 4 G_c^2 / gamma + L_c` and `L_T = 2 G_c^2 exp(3 M_c / gamma) / gamma`,
/// returns `min(1 / (8 L_f), 1 / (8 sqrt(d) L_T))`, taking the RKHS embedding
/// constant as one for the RBF kernel. Clamped below at `1e-12`; usually far
/// too conservative in practice, but exact for the rate checks.
pub fn default_step_size(problem: &BarycenterProblem) -> f64 {
    let g = problem.cost().grad_sup();
    let gamma = problem.gamma();
    let l_f = 4.0 * g * g / gamma + problem.cost().grad_lipschitz();
    let l_t = 2.0 * g * g * (3.0 * problem.cost().sup_value() / gamma).exp() / gamma;
    let d = problem.dim() as f64;
    let bound = (1.0 / (8.0 * l_f)).min(1.0 / (8.0 * d.sqrt() * l_t));
    bound.max(1e-12)
}
