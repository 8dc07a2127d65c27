//! Grayscale images as measures: bright pixels become weighted support
//! points in the unit square.

use std::path::Path;

use ndarray::{Array1, Array2};

use super::{invalid, DiscreteMeasure, MeasureError};

/// Turn an intensity grid into a measure. The support consists of the centers
/// of pixels with intensity strictly above `threshold`, mapped to `[0,1]^2`
/// with row 0 (the top of the image) at `y = 1`; weights are proportional to
/// intensity.
pub fn measure_from_image(
    intensities: &Array2<f64>,
    threshold: f64,
) -> Result<DiscreteMeasure, MeasureError> {
    let (h, w) = intensities.dim();
    if h == 0 || w == 0 {
        return Err(MeasureError::EmptySupport);
    }
    if intensities
        .iter()
        .any(|v| !(v.is_finite() && (0.0..=1.0).contains(v)))
    {
        return Err(invalid("intensities", "values must lie in [0, 1]"));
    }
    let mut coords = Vec::new();
    let mut weights = Vec::new();
    for r in 0..h {
        for c in 0..w {
            let v = intensities[[r, c]];
            if v > threshold {
                coords.push((c as f64 + 0.5) / w as f64);
                coords.push(1.0 - (r as f64 + 0.5) / h as f64);
                weights.push(v);
            }
        }
    }
    if weights.is_empty() {
        return Err(MeasureError::AllBelowThreshold);
    }
    let n = weights.len();
    let points = Array2::from_shape_vec((n, 2), coords).expect("consistent shape");
    DiscreteMeasure::new(points, Some(Array1::from_vec(weights)))
}

/// Load a PNG as an intensity grid in `[0, 1]`. 8-bit grayscale is used
/// directly; RGB is converted with the Rec. 601 luminance weights
/// 0.299/0.587/0.114.
pub fn load_png_intensities(path: &Path) -> Result<Array2<f64>, MeasureError> {
    let img = image::open(path).map_err(|e| MeasureError::Png(e.to_string()))?;
    let grid = match img {
        image::DynamicImage::ImageLuma8(g) => {
            let (w, h) = g.dimensions();
            Array2::from_shape_fn((h as usize, w as usize), |(r, c)| {
                g.get_pixel(c as u32, r as u32).0[0] as f64 / 255.0
            })
        }
        other => {
            let rgb = other.to_rgb8();
            let (w, h) = rgb.dimensions();
            Array2::from_shape_fn((h as usize, w as usize), |(r, c)| {
                let p = rgb.get_pixel(c as u32, r as u32).0;
                (0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64) / 255.0
            })
        }
    };
    Ok(grid)
}

/// [`load_png_intensities`] followed by [`measure_from_image`].
pub fn load_png_measure(path: &Path, threshold: f64) -> Result<DiscreteMeasure, MeasureError> {
    measure_from_image(&load_png_intensities(path)?, threshold)
}
