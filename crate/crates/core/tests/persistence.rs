//! Run-directory persistence and image ingestion against the real
//! filesystem.

mod common;

use std::collections::BTreeMap;

use common::{random_measure, rng};
use sinkhorn_descent::descent::{run_sd, BarycenterProblem, DescentConfig};
use sinkhorn_descent::experiments::{
    build_experiment, write_run, ExperimentKind, ExperimentSpec, RunManifest,
};
use sinkhorn_descent::measures::{
    load_measure_csv, load_png_measure, CostKind, DomainBox, GroundCost, RbfKernel,
};
use sinkhorn_descent::sinkhorn::SinkhornConfig;

fn ellipse_spec(dir: &std::path::Path) -> ExperimentSpec {
    let mut parameters = BTreeMap::new();
    parameters.insert("n_sources".to_string(), 2.into());
    parameters.insert("points_per_source".to_string(), 12.into());
    parameters.insert("particles".to_string(), 6.into());
    parameters.insert("seed".to_string(), 3.into());
    let mut descent = DescentConfig::new(SinkhornConfig::new(0.1).with_tolerance(1e-7));
    descent.max_steps = 3;
    descent.step_size = 1.0;
    descent.seed = 3;
    ExperimentSpec {
        name: ExperimentKind::Ellipses,
        parameters,
        descent,
        output_dir: dir.to_path_buf(),
    }
}

#[test]
fn run_directory_round_trips_and_echoes_seed() {
    let dir = tempfile::tempdir().unwrap();
    let spec = ellipse_spec(dir.path());
    let (problem, initial) = build_experiment(&spec).unwrap();
    let (final_measure, trace) = run_sd(&initial, &problem, &spec.descent).unwrap();
    write_run(dir.path(), &final_measure, &trace, &spec, &problem).unwrap();

    // particles round-trip bit-for-bit through the measure loader
    let reloaded = load_measure_csv(&dir.path().join("particles.csv")).unwrap();
    assert_eq!(reloaded.points(), final_measure.points());
    assert_eq!(reloaded.weights(), final_measure.weights());

    // manifest parses and echoes the run inputs
    let manifest: RunManifest =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("run.json")).unwrap())
            .unwrap();
    assert_eq!(manifest.spec.descent.seed, 3);
    assert_eq!(manifest.steps_completed, trace.steps_completed());
    assert_eq!(manifest.final_objective, trace.final_objective().unwrap());

    // 2-d run gets its scatter plot, one circle per atom
    assert_eq!(manifest.scatter_svg.as_deref(), Some("scatter.svg"));
    let svg = std::fs::read_to_string(dir.path().join("scatter.svg")).unwrap();
    let atoms: usize =
        problem.sources().iter().map(|s| s.len()).sum::<usize>() + final_measure.len();
    assert_eq!(svg.matches("<circle").count(), atoms);
    assert!(svg.contains("version=\"1.1\""));

    // trace has header plus steps + 1 rows
    let trace_text = std::fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    assert_eq!(trace_text.lines().count(), trace.records.len() + 1);
    assert!(trace_text.starts_with("step,objective,ksbd,step_size,sinkhorn_sweeps,wall_ms\n"));
}

#[test]
fn high_dimensional_run_skips_scatter_with_a_note() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = rng(0x3d);
    let sources = vec![random_measure(&mut rng, 8, 3)];
    let domain = DomainBox::hull_of(&sources, 0.05).unwrap();
    let cost = GroundCost::new(CostKind::SqEuclideanHalf, domain);
    let problem = BarycenterProblem::new(sources, cost, RbfKernel::new(0.5).unwrap(), 0.5).unwrap();
    let initial = random_measure(&mut rng, 5, 3);
    let mut cfg = DescentConfig::new(SinkhornConfig::new(0.5).with_tolerance(1e-7));
    cfg.max_steps = 1;
    let (final_measure, trace) = run_sd(&initial, &problem, &cfg).unwrap();

    let spec = ellipse_spec(dir.path()); // spec echo only; geometry comes from `problem`
    write_run(dir.path(), &final_measure, &trace, &spec, &problem).unwrap();

    assert!(!dir.path().join("scatter.svg").exists());
    let manifest: RunManifest =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("run.json")).unwrap())
            .unwrap();
    assert_eq!(manifest.scatter_svg, None);
    assert!(manifest.notes.iter().any(|n| n.contains("dimension 3")));
}

#[test]
fn sketch_experiment_runs_from_a_png() {
    let dir = tempfile::tempdir().unwrap();
    let png = dir.path().join("ring.png");

    // bright ring on black background
    let size = 24u32;
    let mut img = image::GrayImage::new(size, size);
    for r in 0..size {
        for c in 0..size {
            let x = c as f64 - size as f64 / 2.0;
            let y = r as f64 - size as f64 / 2.0;
            let dist = (x * x + y * y).sqrt();
            let lum = if (dist - 8.0).abs() < 1.6 { 220 } else { 0 };
            img.put_pixel(c, r, image::Luma([lum]));
        }
    }
    img.save(&png).unwrap();

    let mut parameters = BTreeMap::new();
    parameters.insert("path".to_string(), png.to_str().unwrap().into());
    parameters.insert("particles".to_string(), 30.into());
    parameters.insert("threshold".to_string(), 0.05.into());
    parameters.insert("seed".to_string(), 9.into());
    let mut descent = DescentConfig::new(SinkhornConfig::new(0.01).with_tolerance(1e-6));
    descent.step_size = 4.0;
    descent.max_steps = 8;
    let spec = ExperimentSpec {
        name: ExperimentKind::Sketch,
        parameters,
        descent: descent.clone(),
        output_dir: dir.path().join("run"),
    };
    let (problem, initial) = build_experiment(&spec).unwrap();
    assert_eq!(problem.n_sources(), 1);
    assert!(problem.sources()[0].len() > 50, "the ring has many bright pixels");

    let (final_measure, trace) = run_sd(&initial, &problem, &descent).unwrap();
    // sketching compresses the source into the particle budget: objective drops
    let s0 = trace.records[0].objective;
    let sf = trace.final_objective().unwrap();
    assert!(sf < s0, "objective should improve: {s0} -> {sf}");
    write_run(&spec.output_dir, &final_measure, &trace, &spec, &problem).unwrap();
    assert!(spec.output_dir.join("scatter.svg").exists());
}

#[test]
fn png_files_load_with_luminance_weights() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tiny.png");

    // 2x2 RGB: one red, one green, one blue, one black pixel
    let mut img = image::RgbImage::new(2, 2);
    img.put_pixel(0, 0, image::Rgb([255, 0, 0]));
    img.put_pixel(1, 0, image::Rgb([0, 255, 0]));
    img.put_pixel(0, 1, image::Rgb([0, 0, 255]));
    img.put_pixel(1, 1, image::Rgb([0, 0, 0]));
    img.save(&path).unwrap();

    let measure = load_png_measure(&path, 0.05).unwrap();
    // black pixel dropped; Rec. 601 weights order green > red > blue
    assert_eq!(measure.len(), 3);
    let total = 0.299 + 0.587 + 0.114;
    let expect = [0.299 / total, 0.587 / total, 0.114 / total];
    for (i, e) in expect.iter().enumerate() {
        assert!((measure.weights()[i] - e).abs() < 1e-12);
    }
    // top row maps to the upper half of the unit square
    assert!(measure.point(0)[1] > 0.5);

    // grayscale path
    let gray_path = dir.path().join("gray.png");
    let mut gray = image::GrayImage::new(1, 2);
    gray.put_pixel(0, 0, image::Luma([51])); // 0.2
    gray.put_pixel(0, 1, image::Luma([153])); // 0.6
    gray.save(&gray_path).unwrap();
    let gm = load_png_measure(&gray_path, 0.0).unwrap();
    assert_eq!(gm.len(), 2);
    assert!((gm.weights()[0] - 0.25).abs() < 1e-12);
    assert!((gm.weights()[1] - 0.75).abs() < 1e-12);
}
