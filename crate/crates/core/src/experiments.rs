//! Experiment orchestration and run persistence: canned problem setups, a
//! run directory writer (`particles.csv`, `trace.csv`, `run.json`, and a 2-D
//! `scatter.svg`), and the JSON spec format the CLI consumes.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::descent::{BarycenterProblem, DescentConfig, DescentError, DescentTrace};
use crate::fw::{FwConfig, WeightRule};
use crate::measures::{
    generate_ellipse, generate_gaussian, load_measure_csv, load_png_measure,
    median_heuristic_bandwidth, standard_normal, uniform_in_box, write_measure_csv, CostKind,
    DiscreteMeasure, DomainBox, GroundCost, MeasureError, RbfKernel,
};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Descent(#[from] DescentError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("parameter `{name}`: {reason}")]
    Parameter { name: String, reason: String },
    #[error("file not found: {path}")]
    MissingFile { path: PathBuf },
}

fn bad_param(name: &str, reason: impl Into<String>) -> ExperimentError {
    ExperimentError::Parameter {
        name: name.into(),
        reason: reason.into(),
    }
}

/// The canned experiment families plus a bring-your-own-CSV escape hatch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Ellipses,
    Sketch,
    Gaussians,
    Custom,
}

/// A full experiment description; serializable so runs can be replayed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub name: ExperimentKind,
    #[serde(default)]
    pub parameters: BTreeMap<String, serde_json::Value>,
    pub descent: DescentConfig,
    pub output_dir: PathBuf,
}

impl ExperimentSpec {
    pub fn from_path(path: &Path) -> Result<Self, ExperimentError> {
        if !path.exists() {
            return Err(ExperimentError::MissingFile {
                path: path.to_path_buf(),
            });
        }
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }

    fn param_u64(&self, name: &str) -> Result<Option<u64>, ExperimentError> {
        match self.parameters.get(name) {
            None => Ok(None),
            Some(v) => v
                .as_u64()
                .map(Some)
                .ok_or_else(|| bad_param(name, format!("expected a nonnegative integer, got {v}"))),
        }
    }

    fn need_usize(&self, name: &str) -> Result<usize, ExperimentError> {
        self.param_u64(name)?
            .map(|v| v as usize)
            .ok_or_else(|| bad_param(name, "required parameter is missing"))
    }

    fn usize_or(&self, name: &str, default: usize) -> Result<usize, ExperimentError> {
        Ok(self.param_u64(name)?.map(|v| v as usize).unwrap_or(default))
    }

    fn f64_or(&self, name: &str, default: f64) -> Result<f64, ExperimentError> {
        match self.parameters.get(name) {
            None => Ok(default),
            Some(v) => v
                .as_f64()
                .ok_or_else(|| bad_param(name, format!("expected a number, got {v}"))),
        }
    }

    fn opt_f64(&self, name: &str) -> Result<Option<f64>, ExperimentError> {
        match self.parameters.get(name) {
            None => Ok(None),
            Some(v) => v
                .as_f64()
                .map(Some)
                .ok_or_else(|| bad_param(name, format!("expected a number, got {v}"))),
        }
    }

    fn need_path(&self, name: &str) -> Result<PathBuf, ExperimentError> {
        match self.parameters.get(name) {
            Some(serde_json::Value::String(s)) => Ok(PathBuf::from(s)),
            Some(v) => Err(bad_param(name, format!("expected a path string, got {v}"))),
            None => Err(bad_param(name, "required parameter is missing")),
        }
    }

    fn need_paths(&self, name: &str) -> Result<Vec<PathBuf>, ExperimentError> {
        match self.parameters.get(name) {
            Some(serde_json::Value::Array(items)) if !items.is_empty() => items
                .iter()
                .map(|v| match v {
                    serde_json::Value::String(s) => Ok(PathBuf::from(s)),
                    other => Err(bad_param(
                        name,
                        format!("expected path strings, got {other}"),
                    )),
                })
                .collect(),
            Some(v) => Err(bad_param(
                name,
                format!("expected a nonempty array of paths, got {v}"),
            )),
            None => Err(bad_param(name, "required parameter is missing")),
        }
    }

    fn seed(&self) -> Result<u64, ExperimentError> {
        Ok(self.param_u64("seed")?.unwrap_or(self.descent.seed))
    }
}

/// Settings for the conditional-gradient baseline derived from the same
/// spec: `grid` and `weight_rule` come from the parameter map, steps and
/// solver settings from the descent block.
pub fn fw_config_from_spec(spec: &ExperimentSpec) -> Result<FwConfig, ExperimentError> {
    let weight_rule = match spec.parameters.get("weight_rule") {
        None => WeightRule::TwoOverTPlusTwo,
        Some(v) => serde_json::from_value(v.clone())
            .map_err(|e| bad_param("weight_rule", e.to_string()))?,
    };
    Ok(FwConfig {
        grid_resolution: spec.usize_or("grid", 64)?,
        steps: spec.descent.max_steps,
        weight_rule,
        sinkhorn: spec.descent.sinkhorn.clone(),
    })
}

fn existing(path: PathBuf) -> Result<PathBuf, ExperimentError> {
    if path.exists() {
        Ok(path)
    } else {
        Err(ExperimentError::MissingFile { path })
    }
}

fn kernel_for(
    spec: &ExperimentSpec,
    initial: &DiscreteMeasure,
) -> Result<RbfKernel, ExperimentError> {
    let bandwidth = match spec.opt_f64("bandwidth")? {
        Some(b) => b,
        None => median_heuristic_bandwidth(initial)?,
    };
    Ok(RbfKernel::new(bandwidth)?)
}

/// Instantiate the problem and initial measure an experiment spec describes.
pub fn build_experiment(
    spec: &ExperimentSpec,
) -> Result<(BarycenterProblem, DiscreteMeasure), ExperimentError> {
    let gamma = spec.descent.sinkhorn.gamma;
    let seed = spec.seed()?;
    match spec.name {
        ExperimentKind::Ellipses => {
            let n_sources = spec.need_usize("n_sources")?;
            let points = spec.need_usize("points_per_source")?;
            let particles = spec.need_usize("particles")?;
            let jitter = spec.f64_or("jitter", 0.02)?;
            if n_sources == 0 {
                return Err(bad_param("n_sources", "must be at least 1"));
            }
            let sources: Vec<DiscreteMeasure> = (0..n_sources)
                .map(|k| generate_ellipse(seed.wrapping_add(k as u64), points, jitter))
                .collect::<Result<_, _>>()?;
            // canonical domain for the origin-centered ellipse family (axes
            // at most 1), widened if jitter pushes a sample past it
            let domain =
                DomainBox::centered_cube(1.5, 2)?.union(&DomainBox::hull_of(&sources, 0.01)?)?;
            let initial = uniform_in_box(seed.wrapping_add(0x1717), particles, &domain)?;
            let kernel = kernel_for(spec, &initial)?;
            let cost = GroundCost::new(CostKind::SqEuclideanHalf, domain);
            Ok((
                BarycenterProblem::new(sources, cost, kernel, gamma)?,
                initial,
            ))
        }
        ExperimentKind::Sketch => {
            let path = existing(spec.need_path("path")?)?;
            let threshold = spec.f64_or("threshold", 0.05)?;
            let particles = spec.need_usize("particles")?;
            let source = load_png_measure(&path, threshold)?;
            let domain = DomainBox::hull_of(std::slice::from_ref(&source), 0.05)?;
            let initial = uniform_in_box(seed.wrapping_add(0x1717), particles, &domain)?;
            let kernel = kernel_for(spec, &initial)?;
            let cost = GroundCost::new(CostKind::SqEuclideanHalf, domain);
            Ok((
                BarycenterProblem::new(vec![source], cost, kernel, gamma)?,
                initial,
            ))
        }
        ExperimentKind::Gaussians => {
            let dim = spec.need_usize("dim")?;
            let samples = spec.need_usize("samples")?;
            let particles = spec.need_usize("particles")?;
            let n_sources = spec.usize_or("n_sources", 5)?;
            let stddev = spec.f64_or("stddev", 1.0)?;
            let spread = spec.f64_or("spread", 4.0 * stddev)?;
            if dim == 0 {
                return Err(bad_param("dim", "must be at least 1"));
            }
            if n_sources == 0 {
                return Err(bad_param("n_sources", "must be at least 1"));
            }
            let means = sphere_means(seed, n_sources, dim, spread);
            let sources: Vec<DiscreteMeasure> = means
                .iter()
                .enumerate()
                .map(|(k, mean)| {
                    generate_gaussian(seed.wrapping_add(1000 + k as u64), samples, mean, stddev)
                })
                .collect::<Result<_, _>>()?;
            let cube = DomainBox::centered_cube(spread, dim)?;
            let initial = uniform_in_box(seed.wrapping_add(0x1717), particles, &cube)?;
            let mut hull_members = sources.clone();
            hull_members.push(initial.clone());
            let domain = DomainBox::hull_of(&hull_members, 0.05)?;
            let kernel = kernel_for(spec, &initial)?;
            let cost = GroundCost::new(CostKind::SqEuclideanHalf, domain);
            Ok((
                BarycenterProblem::new(sources, cost, kernel, gamma)?,
                initial,
            ))
        }
        ExperimentKind::Custom => {
            let source_paths = spec.need_paths("sources")?;
            let init_path = existing(spec.need_path("init")?)?;
            let sources: Vec<DiscreteMeasure> = source_paths
                .into_iter()
                .map(|p| Ok(load_measure_csv(&existing(p)?)?))
                .collect::<Result<_, ExperimentError>>()?;
            let initial = load_measure_csv(&init_path)?;
            let mut hull_members = sources.clone();
            hull_members.push(initial.clone());
            let domain = DomainBox::hull_of(&hull_members, 0.05)?;
            let kernel = kernel_for(spec, &initial)?;
            let cost = GroundCost::new(CostKind::SqEuclideanHalf, domain);
            Ok((
                BarycenterProblem::new(sources, cost, kernel, gamma)?,
                initial,
            ))
        }
    }
}

/// Deterministic source means: directions drawn from a seeded Gaussian,
/// normalized onto the sphere of the given radius.
fn sphere_means(seed: u64, n: usize, dim: usize, radius: f64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x5fe5));
    (0..n)
        .map(|_| {
            let mut v: Vec<f64> = (0..dim).map(|_| standard_normal(&mut rng)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                v[0] = radius; // degenerate draw; pin to an axis
            } else {
                for x in &mut v {
                    *x *= radius / norm;
                }
            }
            v
        })
        .collect()
}

/// Summary persisted to `run.json` alongside the spec echo.
#[derive(Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub spec: ExperimentSpec,
    pub version: String,
    pub final_objective: f64,
    pub final_ksbd: f64,
    pub steps_completed: usize,
    pub wall_ms: u64,
    pub scatter_svg: Option<String>,
    #[serde(default)]
    pub notes: Vec<String>,
}

fn atomic_write(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.flush()?;
    }
    fs::rename(&tmp, path)
}

/// Persist a finished run: `particles.csv`, `trace.csv`, `run.json`, and for
/// two-dimensional problems `scatter.svg`. Writes are write-then-rename.
pub fn write_run(
    output_dir: &Path,
    final_measure: &DiscreteMeasure,
    trace: &DescentTrace,
    spec: &ExperimentSpec,
    problem: &BarycenterProblem,
) -> Result<(), ExperimentError> {
    fs::create_dir_all(output_dir)?;

    let mut particles = Vec::new();
    write_measure_csv(&mut particles, final_measure)?;
    atomic_write(&output_dir.join("particles.csv"), &particles)?;

    let mut trace_csv = Vec::new();
    trace.write_csv(&mut trace_csv)?;
    atomic_write(&output_dir.join("trace.csv"), &trace_csv)?;

    let mut notes = Vec::new();
    let scatter_svg = if problem.dim() == 2 {
        let svg = scatter_svg(problem, final_measure);
        atomic_write(&output_dir.join("scatter.svg"), svg.as_bytes())?;
        Some("scatter.svg".to_string())
    } else {
        notes.push(format!(
            "scatter.svg skipped: dimension {} != 2",
            problem.dim()
        ));
        None
    };

    let wall_ms: u64 = trace
        .records
        .iter()
        .map(|r| r.wall.as_millis() as u64)
        .sum();
    let manifest = RunManifest {
        spec: spec.clone(),
        version: crate::VERSION.to_string(),
        final_objective: trace.final_objective().unwrap_or(f64::NAN),
        final_ksbd: trace.final_ksbd().unwrap_or(f64::NAN),
        steps_completed: trace.steps_completed(),
        wall_ms,
        scatter_svg,
        notes,
    };
    let json = serde_json::to_string_pretty(&manifest)?;
    atomic_write(&output_dir.join("run.json"), json.as_bytes())?;
    Ok(())
}

fn svg_coord(v: f64, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        (v - lo) / (hi - lo) * 800.0
    } else {
        400.0
    }
}

/// 800x800 SVG 1.1 scatter of a 2-D run: sources in gray underneath, final
/// particles in color on top, one circle per atom with radius proportional
/// to its weight, axes spanning the domain box.
pub fn scatter_svg(problem: &BarycenterProblem, final_measure: &DiscreteMeasure) -> String {
    assert_eq!(problem.dim(), 2, "scatter plots are two-dimensional");
    let domain = problem.cost().domain();
    let (lx, hx) = (domain.lo()[0], domain.hi()[0]);
    let (ly, hy) = (domain.lo()[1], domain.hi()[1]);

    let mut svg = String::with_capacity(1 << 16);
    svg.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    svg.push_str(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"800\" height=\"800\" viewBox=\"0 0 800 800\">\n",
    );
    svg.push_str("<rect width=\"800\" height=\"800\" fill=\"#ffffff\"/>\n");

    let mut circles = |m: &DiscreteMeasure, fill: &str, opacity: f64, max_radius: f64| {
        let w_max = m
            .weights()
            .iter()
            .cloned()
            .fold(0.0, f64::max)
            .max(f64::MIN_POSITIVE);
        let scale = max_radius / w_max;
        for i in 0..m.len() {
            let p = m.point(i);
            let cx = svg_coord(p[0], lx, hx);
            let cy = 800.0 - svg_coord(p[1], ly, hy); // svg y grows downward
            let r = m.weights()[i] * scale;
            svg.push_str(&format!(
                "<circle cx=\"{cx:.2}\" cy=\"{cy:.2}\" r=\"{r:.3}\" fill=\"{fill}\" fill-opacity=\"{opacity}\"/>\n",
            ));
        }
    };
    for source in problem.sources() {
        circles(source, "#9e9e9e", 0.45, 4.0);
    }
    circles(final_measure, "#d9480f", 0.85, 6.0);
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sinkhorn::SinkhornConfig;

    fn spec(kind: ExperimentKind, params: &[(&str, serde_json::Value)]) -> ExperimentSpec {
        let mut parameters = BTreeMap::new();
        for (k, v) in params {
            parameters.insert((*k).to_string(), v.clone());
        }
        ExperimentSpec {
            name: kind,
            parameters,
            descent: DescentConfig::new(SinkhornConfig::new(0.5)),
            output_dir: PathBuf::from("unused"),
        }
    }

    #[test]
    fn ellipses_builds_deterministic_sources() {
        let s = spec(
            ExperimentKind::Ellipses,
            &[
                ("n_sources", 5.into()),
                ("points_per_source", 12.into()),
                ("particles", 8.into()),
                ("seed", 3.into()),
            ],
        );
        let (p1, i1) = build_experiment(&s).unwrap();
        let (p2, i2) = build_experiment(&s).unwrap();
        assert_eq!(p1.n_sources(), 5);
        assert_eq!(i1.len(), 8);
        assert_eq!(i1, i2);
        for k in 0..5 {
            assert_eq!(p1.sources()[k], p2.sources()[k]);
        }
        // sources are pairwise distinct
        for a in 0..5 {
            for b in (a + 1)..5 {
                assert_ne!(p1.sources()[a].points(), p1.sources()[b].points());
            }
        }
    }

    #[test]
    fn gaussians_builds_the_requested_shape() {
        let s = spec(
            ExperimentKind::Gaussians,
            &[
                ("n_sources", 5.into()),
                ("dim", 10.into()),
                ("samples", 100.into()),
                ("particles", 50.into()),
            ],
        );
        let (p, initial) = build_experiment(&s).unwrap();
        assert_eq!(p.n_sources(), 5);
        assert_eq!(p.dim(), 10);
        assert_eq!(p.sources()[0].len(), 100);
        assert_eq!(initial.len(), 50);
    }

    #[test]
    fn sphere_means_have_the_right_radius() {
        let means = sphere_means(7, 5, 10, 4.0);
        assert_eq!(means.len(), 5);
        for m in &means {
            let norm = m.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((norm - 4.0).abs() < 1e-12);
        }
        assert_eq!(means, sphere_means(7, 5, 10, 4.0));
    }

    #[test]
    fn missing_parameter_is_named() {
        let s = spec(ExperimentKind::Ellipses, &[("n_sources", 3.into())]);
        match build_experiment(&s) {
            Err(ExperimentError::Parameter { name, .. }) => {
                assert_eq!(name, "points_per_source")
            }
            other => panic!("expected a named parameter error, got {other:?}"),
        }
    }

    #[test]
    fn missing_sketch_file_is_named() {
        let s = spec(
            ExperimentKind::Sketch,
            &[
                ("path", "no/such/file.png".into()),
                ("particles", 10.into()),
            ],
        );
        match build_experiment(&s) {
            Err(ExperimentError::MissingFile { path }) => {
                assert_eq!(path, PathBuf::from("no/such/file.png"))
            }
            other => panic!("expected MissingFile, got {other:?}"),
        }
    }

    #[test]
    fn spec_round_trips_through_json() {
        let s = spec(
            ExperimentKind::Gaussians,
            &[
                ("dim", 4.into()),
                ("samples", 10.into()),
                ("particles", 5.into()),
            ],
        );
        let text = serde_json::to_string_pretty(&s).unwrap();
        let back: ExperimentSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(s, back);
    }
}
